"""Conditional-distribution embedding fitted from trajectory data.

The fitted object supports expectation estimates of the form
g_vals @ (G + lam*M*I)^{-1} k(query), where G is the product-kernel Gram
matrix over the dataset's (x0, control sequence) pairs and k(query) is the
cross-kernel vector of the dataset against the query pair. Any function of
the sampled trajectories enters only through its values g_vals at the M
training trajectories, so no trajectory-space kernel is ever materialized.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import ControlLibrary, Dataset
from .kernels import (
    FactorizationError,
    KernelSpec,
    SpdFactor,
    cross_vector,
    gram_product,
    kernel_matrix,
    resolve_bandwidth,
    spd_factor,
    spd_solve,
)
from .serialize import digest_of


class FitError(ArithmeticError):
    """Raised when the regularized Gram matrix cannot be factorized."""


@dataclass(frozen=True)
class EmbeddingModel:
    """Fitted embedding: dataset, resolved kernels, factorized linear system."""

    dataset: Dataset
    kx: KernelSpec
    ku: KernelSpec
    lam: float
    factor: SpdFactor

    @property
    def num_samples(self) -> int:
        return self.dataset.num_samples

    @property
    def horizon(self) -> int:
        return self.dataset.horizon

    @property
    def control_dim(self) -> int:
        return self.dataset.control_dim

    @property
    def initial_states(self) -> np.ndarray:
        return self.dataset.initial_states

    @property
    def flat_controls(self) -> np.ndarray:
        return self.dataset.flattened_controls()

    @property
    def digest(self) -> str:
        """Digest identifying the fit: dataset, kernels, regularization."""
        return digest_of(
            {
                "dataset_digest": self.dataset.config_digest,
                "dataset_seed": self.dataset.master_seed,
                "kx": self.kx,
                "ku": self.ku,
                "lam": self.lam,
            }
        )

    def _flatten_query_controls(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if u.ndim == 2:
            if u.shape != (self.horizon, self.control_dim):
                raise ValueError(
                    f"control sequence must have shape ({self.horizon}, "
                    f"{self.control_dim}), got {u.shape}"
                )
            u = u.ravel()
        if u.shape != (self.horizon * self.control_dim,):
            raise ValueError(
                f"flattened controls must have length "
                f"{self.horizon * self.control_dim}, got {u.shape}"
            )
        return u


def fit(ds: Dataset, kx: KernelSpec, ku: KernelSpec, lam: float) -> EmbeddingModel:
    """Fit the embedding: resolve bandwidths, build G, factorize G + lam*M*I.

    The median heuristic, when requested, runs separately over the dataset's
    initial states and its flattened control sequences.

    Raises
    ------
    FitError
        If the regularized Gram matrix is not positive definite; a larger
        regularization parameter fixes this.
    """
    if not (lam > 0):
        raise ValueError(f"regularization parameter must be positive, got {lam}")
    flat_u = ds.flattened_controls()
    kx = resolve_bandwidth(kx, ds.initial_states)
    ku = resolve_bandwidth(ku, flat_u)
    gram = gram_product(ds.initial_states, flat_u, kx, ku)
    m_count = ds.num_samples
    try:
        factor = spd_factor(gram + lam * m_count * np.eye(m_count))
    except FactorizationError as exc:
        raise FitError(
            f"regularized Gram matrix is not positive definite (pivot "
            f"{exc.pivot}); increase the regularization parameter above {lam}"
        ) from exc
    return EmbeddingModel(dataset=ds, kx=kx, ku=ku, lam=float(lam), factor=factor)


def coefficient_vector(model: EmbeddingModel, x0, u) -> np.ndarray:
    """Solve (G + lam*M*I) beta = k(query) for one query pair (x0, u)."""
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (model.dataset.state_dim,):
        raise ValueError(
            f"x0 must have shape ({model.dataset.state_dim},), got {x0.shape}"
        )
    flat_u = model._flatten_query_controls(u)
    k = cross_vector(
        model.initial_states, model.flat_controls, model.kx, model.ku, x0, flat_u
    )
    return spd_solve(model.factor, k)


def estimate_expectation(model: EmbeddingModel, gvals, x0, u) -> float:
    """Estimate E[g(X) | x0, u] as gvals @ coefficient_vector.

    ``gvals`` holds g evaluated at each of the M training trajectories.
    """
    gvals = np.asarray(gvals, dtype=float)
    if gvals.shape != (model.num_samples,):
        raise ValueError(
            f"gvals must have length {model.num_samples}, got {gvals.shape}"
        )
    return float(gvals @ coefficient_vector(model, x0, u))


def cross_matrix(model: EmbeddingModel, x0, library: ControlLibrary) -> np.ndarray:
    """Cross-kernel matrix of the dataset against every library sequence.

    Column j holds the cross-kernel vector for the query (x0, library
    sequence j); shape (M, P).
    """
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (model.dataset.state_dim,):
        raise ValueError(
            f"x0 must have shape ({model.dataset.state_dim},), got {x0.shape}"
        )
    if library.horizon != model.horizon or library.control_dim != model.control_dim:
        raise ValueError(
            f"library sequences have shape ({library.horizon}, "
            f"{library.control_dim}); model expects ({model.horizon}, "
            f"{model.control_dim})"
        )
    kx_col = kernel_matrix(model.kx, model.initial_states, x0.reshape(1, -1))[:, 0]
    ku_block = kernel_matrix(model.ku, model.flat_controls, library.flattened())
    return kx_col[:, None] * ku_block
