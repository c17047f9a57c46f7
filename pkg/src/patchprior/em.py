"""Maximum-likelihood EM for full-covariance mixtures at desk scale."""

from __future__ import annotations

import dataclasses
import logging

import numpy as np
from scipy.special import logsumexp

from .gmm import (
    Gmm,
    component_log_densities,
    condition_psd,
    _patch_matrix,
)

__all__ = ["EmConfig", "InsufficientDataError", "em_fit", "em_fit_with_inflation"]

log = logging.getLogger(__name__)

_INIT_SCHEMES = ("kmeans-plus-plus", "random-responsibility")

# Soft count below which a component is considered starved and reseeded.
_EMPTY_COUNT = 1e-8


class InsufficientDataError(ValueError):
    """Fewer patches than mixture components."""


@dataclasses.dataclass(frozen=True)
class EmConfig:
    n_components: int
    max_iters: int = 100
    tol: float = 1e-5
    seed: int = 0
    init: str = "kmeans-plus-plus"
    psd_floor: float = 1e-4

    def __post_init__(self):
        if self.n_components < 1:
            raise ValueError("n_components must be at least 1")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.psd_floor <= 0:
            raise ValueError("psd_floor must be positive")
        if self.init not in _INIT_SCHEMES:
            raise ValueError(f"init must be one of {_INIT_SCHEMES}")


def _kmeanspp_centers(x, k, rng):
    """Seed k centers by distance-squared sampling."""
    n = x.shape[0]
    centers = np.empty((k, x.shape[1]))
    centers[0] = x[rng.integers(n)]
    dist2 = ((x - centers[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = float(dist2.sum())
        if total <= 0.0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=dist2 / total))
        centers[j] = x[idx]
        dist2 = np.minimum(dist2, ((x - centers[j]) ** 2).sum(axis=1))
    return centers


def _mstep(x, gamma, counts, sigma_tilde_sq, floor, rng):
    """Closed-form ML update with deflation and starved-component reseeds."""
    n, d = x.shape
    k = gamma.shape[1]
    weights = counts / n
    means = np.zeros((k, d))
    covs = np.empty((k, d, d))
    starved = counts < _EMPTY_COUNT
    for j in range(k):
        if starved[j]:
            continue
        means[j] = (gamma[:, j] @ x) / counts[j]
        dev = x - means[j]
        scat = (gamma[:, j, None] * dev).T @ dev / counts[j]
        if sigma_tilde_sq:
            scat = scat - sigma_tilde_sq * np.eye(d)
        covs[j] = condition_psd(scat, floor)
    for j in np.flatnonzero(starved):
        means[j] = x[rng.integers(n)]
        covs[j] = floor * np.eye(d)
        weights[j] = 1.0 / n
        log.warning("component %d starved, reseeded to a random patch", j)
    weights = weights / weights.sum()
    return weights, means, covs


def _initialize(x, config, rng, sigma_tilde_sq):
    n, d = x.shape
    k = config.n_components
    if config.init == "random-responsibility":
        gamma = rng.random((n, k))
        gamma /= gamma.sum(axis=1)[:, None]
        return _mstep(x, gamma, gamma.sum(axis=0), sigma_tilde_sq, config.psd_floor, rng)
    means = _kmeanspp_centers(x, k, rng)
    base = np.atleast_2d(np.cov(x, rowvar=False))
    if sigma_tilde_sq:
        base = base - sigma_tilde_sq * np.eye(d)
    base = condition_psd(base, config.psd_floor)
    covs = np.repeat(base[None, :, :], k, axis=0)
    weights = np.full(k, 1.0 / k)
    return weights, means, covs


def em_fit_with_inflation(patches, config: EmConfig, sigma_tilde_sq: float):
    """Fit a clean-signal mixture to noisy patches.

    The E-step scores patches under each covariance inflated by
    ``sigma_tilde_sq``; the M-step subtracts the same amount from the
    sample scatter and clamps the result to the PSD floor.  The returned
    trace holds the mean per-patch log-likelihood of the inflated model
    at the start of every iteration.
    """
    x = _patch_matrix(patches)
    n = x.shape[0]
    if n < config.n_components:
        raise InsufficientDataError(
            f"{n} patches cannot support {config.n_components} components")
    if sigma_tilde_sq < 0:
        raise ValueError("sigma_tilde_sq must be nonnegative")
    rng = np.random.default_rng(config.seed)
    weights, means, covs = _initialize(x, config, rng, sigma_tilde_sq)
    trace: list[float] = []
    for _ in range(config.max_iters):
        model = Gmm(weights, means, covs)
        with np.errstate(divide="ignore"):
            scores = component_log_densities(model, x, sigma_tilde_sq) + np.log(weights)
        norms = logsumexp(scores, axis=1)
        trace.append(float(norms.mean()))
        if len(trace) > 1 and abs(trace[-1] - trace[-2]) <= config.tol * abs(trace[-2]):
            break
        gamma = np.exp(scores - norms[:, None])
        weights, means, covs = _mstep(x, gamma, gamma.sum(axis=0), sigma_tilde_sq,
                                      config.psd_floor, rng)
    return Gmm(weights, means, covs), trace


def em_fit(patches, config: EmConfig):
    """Fit a mixture to clean patches; returns the model and the
    per-iteration mean log-likelihood trace."""
    return em_fit_with_inflation(patches, config, 0.0)
