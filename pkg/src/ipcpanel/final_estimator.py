"""Step 3: the corrected slope estimator built from the initial slope, the
slope conditional on the extracted factors, and loading-weighted
regressor projections.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NotConvergedError, SingularLoadingsError, SingularZGramError
from .factor_selection import iterate_groups
from .init_estimator import (
    InitResult,
    annihilate_outcomes,
    annihilate_regressors,
    beta_given_f,
    fit_initial,
)
from .model import FactorGroup, IpcConfig, IpcFit, PanelDataset, validate
from .numerics import RANK_RTOL, solve_spd


@dataclass(frozen=True)
class ZWeights:
    """Cross-sectional projection weights and the weighted regressors.

    ``a`` is the N x N projector built from the combined loadings;
    ``z`` stacks the per-unit T x d_x matrices as N x T x d_x.
    """

    a: np.ndarray
    z: np.ndarray


def loading_weights(loadings_combined: np.ndarray) -> np.ndarray:
    """Projector a_ij = gamma_i' (Gamma'Gamma)^{-1} gamma_j onto the loading span.

    An empty loading matrix returns the zero matrix.

    Raises
    ------
    SingularLoadingsError
        If the loading Gram matrix is numerically singular.
    """
    gamma = np.asarray(loadings_combined, dtype=float)
    n = gamma.shape[0]
    if gamma.ndim != 2:
        raise SingularLoadingsError(f"loadings must be 2-d, got shape {gamma.shape}")
    if gamma.shape[1] == 0:
        return np.zeros((n, n))
    gram = gamma.T @ gamma
    eig = np.linalg.eigvalsh(gram)
    if eig[0] <= RANK_RTOL * eig[-1] or eig[-1] <= 0:
        raise SingularLoadingsError("loading Gram matrix is numerically singular")
    a = gamma @ np.linalg.solve(gram, gamma.T)
    return 0.5 * (a + a.T)


def z_matrices(dataset: PanelDataset, f_hat: np.ndarray, a: np.ndarray) -> np.ndarray:
    """Z_i = M_F X_i - sum_j M_F X_j a_ij for every unit, as N x T x d_x."""
    mx = annihilate_regressors(dataset.x, np.asarray(f_hat, dtype=float))
    return mx - np.einsum("ij,jtd->itd", np.asarray(a, dtype=float), mx)


def build_z_weights(
    dataset: PanelDataset, f_hat: np.ndarray, loadings: np.ndarray
) -> ZWeights:
    """Convenience constructor pairing the projector with its Z matrices."""
    a = loading_weights(loadings)
    return ZWeights(a=a, z=z_matrices(dataset, f_hat, a))


def combine_groups(
    groups: list[FactorGroup] | tuple[FactorGroup, ...], n_units: int, n_periods: int
) -> tuple[np.ndarray, np.ndarray]:
    """Stack group factors and loadings side by side (empty-safe)."""
    blocks = [g for g in groups if g.dim]
    if not blocks:
        return np.zeros((n_periods, 0)), np.zeros((n_units, 0))
    return (
        np.hstack([g.factors for g in blocks]),
        np.hstack([g.loadings for g in blocks]),
    )


def fit_final(
    dataset: PanelDataset,
    init: InitResult,
    groups: list[FactorGroup],
    config: IpcConfig,
) -> IpcFit:
    """Assemble the corrected slope estimate and the full fit object.

    beta = beta0 + (sum_i Z_i'Z_i)^{-1} sum_i X_i' M_F X_i (beta1 - beta0)
    with beta1 the slope conditional on the combined factors. With no
    factors selected the correction collapses and beta equals pooled OLS.

    Raises
    ------
    SingularZGramError
        If the Z Gram matrix is numerically singular.
    """
    n, t = dataset.n_units, dataset.n_periods
    f_hat, gamma_hat = combine_groups(groups, n, t)
    beta1 = beta_given_f(dataset, f_hat)
    weights = build_z_weights(dataset, f_hat, gamma_hat)

    mx = annihilate_regressors(dataset.x, f_hat)
    z_gram = np.einsum("ntd,nte->de", weights.z, weights.z)
    x_gram = np.einsum("ntd,nte->de", mx, mx)
    beta = init.beta0 + solve_spd(z_gram, x_gram @ (beta1 - init.beta0), SingularZGramError)

    slope_resid = dataset.y - dataset.x @ beta
    residuals = slope_resid - gamma_hat @ f_hat.T
    projected = annihilate_outcomes(slope_resid, f_hat)
    sigma2 = np.sum(projected * slope_resid, axis=1) / t

    return IpcFit(
        beta0=init.beta0,
        beta1=beta1,
        beta=beta,
        groups=tuple(groups),
        n_groups=len(groups),
        total_factors=int(f_hat.shape[1]),
        factors_combined=f_hat,
        loadings_combined=gamma_hat,
        residuals=residuals,
        sigma2_by_unit=np.maximum(sigma2, 0.0),
        als_iterations=init.iterations,
        converged=init.converged,
        factors_initial=init.f0,
        config=config,
    )


def fit_ipc(dataset: PanelDataset, config: IpcConfig | None = None) -> IpcFit:
    """Run the full three-step pipeline on a validated dataset.

    A capped (non-converged) initial minimization is used as-is; the
    ``converged`` flag on the fit records it.
    """
    config = config or IpcConfig()
    validate(dataset, config)
    try:
        init = fit_initial(dataset, config)
    except NotConvergedError as exc:
        init = exc.result
    groups = iterate_groups(dataset, init.beta0, config)
    return fit_final(dataset, init, groups, config)
