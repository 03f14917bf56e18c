"""Sandwich covariance and Wald tests, hybrid half-panel jackknife bias
correction, and the loading-norm diagnostic for the gap in factor
strength between consecutive groups.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    EmptyGroupError,
    InvalidDomainError,
    IpcError,
    RankDeficientRError,
    SingularCovarianceError,
    SubPanelError,
    ZeroLoadingsError,
)
from .final_estimator import build_z_weights, fit_ipc
from .init_estimator import annihilate_outcomes, annihilate_regressors, beta_given_f
from .model import FactorGroup, IpcConfig, IpcFit, PanelDataset
from .numerics import RANK_RTOL, chi2_sf, solve_spd


@dataclass(frozen=True)
class WaldSpec:
    """Linear hypothesis R beta = r with R of full row rank r0 <= d_x."""

    r_matrix: np.ndarray
    r_vector: np.ndarray

    def __post_init__(self):
        r_matrix = np.atleast_2d(np.asarray(self.r_matrix, dtype=float))
        r_vector = np.atleast_1d(np.asarray(self.r_vector, dtype=float))
        if r_matrix.shape[0] != r_vector.shape[0]:
            raise RankDeficientRError(
                f"R has {r_matrix.shape[0]} rows but r has {r_vector.shape[0]} entries"
            )
        if r_matrix.shape[0] > r_matrix.shape[1]:
            raise RankDeficientRError("R cannot have more rows than columns")
        sv = np.linalg.svd(r_matrix, compute_uv=False)
        if sv[-1] <= RANK_RTOL * sv[0] or sv[0] == 0:
            raise RankDeficientRError("R is numerically rank deficient")
        object.__setattr__(self, "r_matrix", r_matrix)
        object.__setattr__(self, "r_vector", r_vector)

    @property
    def dof(self) -> int:
        return self.r_matrix.shape[0]


@dataclass(frozen=True)
class InferenceResult:
    """Sandwich covariance with the Wald statistic and its p-value."""

    covariance: np.ndarray
    std_errors: np.ndarray
    wald_stat: float
    dof: int
    p_value: float


@dataclass(frozen=True)
class JackknifeResult:
    """Hybrid half-panel bias correction and its ingredients.

    ``sub_estimates`` rows hold, in order, the estimates from the first
    and second unit halves and from the odd- and even-numbered periods.
    """

    beta_bc: np.ndarray
    sub_estimates: np.ndarray
    beta_full: np.ndarray
    sub_group_dims: dict[str, tuple[int, ...]]


def unit_variances(dataset: PanelDataset, fit: IpcFit) -> np.ndarray:
    """Per-unit residual variances T^{-1} (y_i - X_i beta)' M_F (y_i - X_i beta)."""
    w = dataset.y - dataset.x @ fit.beta
    mw = annihilate_outcomes(w, fit.factors_combined)
    return np.maximum(np.sum(mw * w, axis=1) / dataset.n_periods, 0.0)


def _sandwich_covariance(z: np.ndarray, sigma2: np.ndarray) -> np.ndarray:
    z_gram = np.einsum("ntd,nte->de", z, z)
    middle = np.einsum("n,ntd,nte->de", sigma2, z, z)
    half = solve_spd(z_gram, middle, SingularCovarianceError)
    cov = solve_spd(z_gram, half.T, SingularCovarianceError).T
    return 0.5 * (cov + cov.T)


def _wald_from_pieces(
    beta: np.ndarray, cov: np.ndarray, spec: WaldSpec
) -> InferenceResult:
    gap = spec.r_matrix @ beta - spec.r_vector
    restricted = spec.r_matrix @ cov @ spec.r_matrix.T
    stat = float(gap @ solve_spd(restricted, gap, SingularCovarianceError))
    stat = max(stat, 0.0)
    return InferenceResult(
        covariance=cov,
        std_errors=np.sqrt(np.maximum(np.diag(cov), 0.0)),
        wald_stat=stat,
        dof=spec.dof,
        p_value=chi2_sf(stat, spec.dof),
    )


def wald_test(dataset: PanelDataset, fit: IpcFit, spec: WaldSpec) -> InferenceResult:
    """Wald test of R beta = r at the corrected slope estimate.

    The covariance is the self-normalizing sandwich
    (sum Z'Z)^{-1} (sum sigma2_i Z_i'Z_i) (sum Z'Z)^{-1} with the
    loading-weighted Z matrices; the p-value uses the chi-squared tail
    with r0 degrees of freedom.
    """
    weights = build_z_weights(dataset, fit.factors_combined, fit.loadings_combined)
    sigma2 = unit_variances(dataset, fit)
    cov = _sandwich_covariance(weights.z, sigma2)
    return _wald_from_pieces(fit.beta, cov, spec)


def wald_variants(
    dataset: PanelDataset,
    fit: IpcFit,
    spec: WaldSpec,
    variant: str,
    truth_factors: np.ndarray | None = None,
) -> InferenceResult:
    """Wald tests for the uncorrected estimators and the known-factor benchmark.

    ``variant`` selects the estimator/factor pair: ``"beta0"`` uses the
    initial slope with the d_max-dimensional initial factor estimate,
    ``"beta1"`` the factor-conditional slope with the selected factors,
    and ``"oracle"`` the least-squares slope treating ``truth_factors``
    as known (with plain projected regressors in place of Z).
    """
    n, t = dataset.n_units, dataset.n_periods
    if variant == "beta0":
        f = fit.factors_initial
        resid = dataset.y - dataset.x @ fit.beta0
        gamma = t ** (-fit.config.delta) * (resid @ f)
        weights = build_z_weights(dataset, f, gamma)
        mw = annihilate_outcomes(resid, f)
        sigma2 = np.maximum(np.sum(mw * resid, axis=1) / t, 0.0)
        cov = _sandwich_covariance(weights.z, sigma2)
        return _wald_from_pieces(fit.beta0, cov, spec)
    if variant == "beta1":
        weights = build_z_weights(dataset, fit.factors_combined, fit.loadings_combined)
        resid = dataset.y - dataset.x @ fit.beta1
        mw = annihilate_outcomes(resid, fit.factors_combined)
        sigma2 = np.maximum(np.sum(mw * resid, axis=1) / t, 0.0)
        cov = _sandwich_covariance(weights.z, sigma2)
        return _wald_from_pieces(fit.beta1, cov, spec)
    if variant == "oracle":
        if truth_factors is None:
            raise InvalidDomainError("the oracle variant needs the true factor matrix")
        f = np.asarray(truth_factors, dtype=float)
        beta_oracle = beta_given_f(dataset, f)
        z = annihilate_regressors(dataset.x, f)
        resid = dataset.y - dataset.x @ beta_oracle
        mw = annihilate_outcomes(resid, f)
        sigma2 = np.maximum(np.sum(mw * resid, axis=1) / t, 0.0)
        cov = _sandwich_covariance(z, sigma2)
        return _wald_from_pieces(beta_oracle, cov, spec)
    raise InvalidDomainError(f"unknown variant {variant!r}")


_SUB_PANELS = ("units_first_half", "units_second_half", "periods_odd", "periods_even")


def jackknife_bias_correct(dataset: PanelDataset, config: IpcConfig) -> JackknifeResult:
    """Hybrid half-panel bias correction 3*beta - (sum of four halves)/2.

    The four sub-estimates rerun the entire pipeline (including group
    selection) on the first and second halves of the cross-section and on
    the odd- and even-numbered time periods (1-based). Differing group
    structures across sub-panels are accepted and reported.
    """
    n, t = dataset.n_units, dataset.n_periods
    full = fit_ipc(dataset, config)
    subsets = {
        "units_first_half": dataset.select_units(range(n // 2)),
        "units_second_half": dataset.select_units(range(n // 2, n)),
        "periods_odd": dataset.select_periods(range(0, t, 2)),
        "periods_even": dataset.select_periods(range(1, t, 2)),
    }
    estimates = []
    dims = {}
    for name in _SUB_PANELS:
        try:
            sub_fit = fit_ipc(subsets[name], config)
        except (IpcError, np.linalg.LinAlgError) as exc:
            raise SubPanelError(name, exc) from exc
        estimates.append(sub_fit.beta)
        dims[name] = tuple(g.dim for g in sub_fit.groups)
    sub = np.asarray(estimates)
    return JackknifeResult(
        beta_bc=3.0 * full.beta - 0.5 * sub.sum(axis=0),
        sub_estimates=sub,
        beta_full=full.beta,
        sub_group_dims=dims,
    )


def strength_gap_diagnostic(
    groups: list[FactorGroup] | tuple[FactorGroup, ...], n_periods: int, g: int
) -> float:
    """Estimate the magnitude-exponent gap between groups g and g+1 (1-based).

    Returns ln(sum_i ||gamma_{g,i}||^2 / sum_i ||gamma_{g+1,i}||^2) / ln T.
    """
    if n_periods < 3:
        raise InvalidDomainError("need at least 3 periods for the log-T scaling")
    if g < 1 or g + 1 > len(groups):
        raise EmptyGroupError(f"groups {g} and {g + 1} must both exist")
    top, nxt = groups[g - 1], groups[g]
    if top.dim == 0 or nxt.dim == 0:
        raise EmptyGroupError(f"groups {g} and {g + 1} must have positive dimension")
    num = float(np.sum(top.loadings**2))
    den = float(np.sum(nxt.loadings**2))
    if num <= 0.0 or den <= 0.0:
        raise ZeroLoadingsError("loading norms must be positive")
    return math.log(num / den) / math.log(n_periods)
