"""Bayesian adaptation of a generic mixture prior toward a specific image.

One adaptation iteration is an E-step under the current model followed by
a penalized M-step that blends the image statistics with the generic
anchor.  The blend factor for component k is alpha_k = n_k / (n_k + rho):
components that explain many patches move to them, the rest stay put.
"""

from __future__ import annotations

import dataclasses
import time

import numpy as np

from .gmm import (
    Gmm,
    HyperParams,
    SufficientStats,
    condition_psd,
    derive_hyperparams,
    log_posterior_objective,
    responsibilities,
    sufficient_stats,
    _patch_matrix,
)

__all__ = [
    "AdaptationConfig",
    "AdaptationReport",
    "adapt",
    "adaptation_mstep",
    "mstep_covariance_fast",
    "mstep_covariance_direct",
    "posterior_hyperparams",
    "mstep_general",
]


@dataclasses.dataclass(frozen=True)
class AdaptationConfig:
    rho: float = 1.0
    sigma_tilde_sq: float = 0.0
    iterations: int = 1
    psd_floor: float = 1e-4
    fast_covariance: bool = True

    def __post_init__(self):
        if self.rho <= 0:
            raise ValueError("rho must be positive")
        if self.sigma_tilde_sq < 0:
            raise ValueError("sigma_tilde_sq must be nonnegative")
        if self.iterations < 1:
            raise ValueError("iterations must be at least 1")
        if self.psd_floor <= 0:
            raise ValueError("psd_floor must be positive")


@dataclasses.dataclass(frozen=True)
class AdaptationReport:
    """Diagnostics from one adapt() call.

    ``objectives`` holds the penalized log objective after each
    iteration's update, ``alphas`` and ``counts`` come from the final
    E-step, and ``mstep_seconds`` is wall-clock time spent in M-steps.
    """

    objectives: tuple[float, ...]
    alphas: np.ndarray
    counts: np.ndarray
    mstep_seconds: float

    def to_text(self) -> str:
        lines = [f"iterations = {len(self.objectives)}",
                 f"mstep_seconds = {self.mstep_seconds:.6f}"]
        for i, value in enumerate(self.objectives, start=1):
            lines.append(f"objective_iter_{i} = {value:.6f}")
        lines.append("component alpha count")
        for k, (a, c) in enumerate(zip(self.alphas, self.counts)):
            lines.append(f"{k} {a:.6f} {c:.3f}")
        return "\n".join(lines) + "\n"


def mstep_covariance_fast(second_moment, mu_tilde, generic_mean, generic_cov,
                          alpha: float, sigma_tilde_sq: float = 0.0) -> np.ndarray:
    """Covariance update from the precomputed raw second moment.

    Algebraically identical to the two-pass form whenever ``mu_tilde`` is
    the blended mean update for the same ``alpha``; never touches
    individual patches, so its cost is independent of the patch count.
    """
    mu_tilde = np.asarray(mu_tilde, dtype=np.float64)
    d = mu_tilde.size
    data = np.asarray(second_moment, dtype=np.float64)
    if sigma_tilde_sq:
        data = data - sigma_tilde_sq * np.eye(d)
    out = (alpha * data - np.outer(mu_tilde, mu_tilde)
           + (1.0 - alpha) * (np.asarray(generic_cov, dtype=np.float64)
                              + np.outer(generic_mean, generic_mean)))
    return 0.5 * (out + out.T)


def mstep_covariance_direct(patch_matrix, resp, mu_tilde, generic_mean, generic_cov,
                            alpha: float, sigma_tilde_sq: float = 0.0) -> np.ndarray:
    """Literal two-pass covariance update, kept as reference and benchmark.

    Walks every patch again to build the responsibility-weighted scatter
    about ``mu_tilde`` one outer product at a time.
    """
    x = _patch_matrix(patch_matrix)
    resp = np.asarray(resp, dtype=np.float64)
    count = float(resp.sum())
    if count <= 0.0:
        raise ValueError("component has no responsibility mass")
    mu_tilde = np.asarray(mu_tilde, dtype=np.float64)
    d = mu_tilde.size
    acc = np.zeros((d, d))
    for row, g in zip(x, resp):
        dev = row - mu_tilde
        acc += g * np.outer(dev, dev)
    data = acc / count
    if sigma_tilde_sq:
        data = data - sigma_tilde_sq * np.eye(d)
    anchor_dev = np.asarray(generic_mean, dtype=np.float64) - mu_tilde
    out = (alpha * data
           + (1.0 - alpha) * (np.asarray(generic_cov, dtype=np.float64)
                              + np.outer(anchor_dev, anchor_dev)))
    return 0.5 * (out + out.T)


def adaptation_mstep(generic: Gmm, stats: SufficientStats, n: int, rho: float,
                     sigma_tilde_sq: float = 0.0, fast: bool = True,
                     patch_matrix=None, gamma=None):
    """Relevance-blended update of all parameters, before floor and renorm.

    The weight update is the exact maximizer of the penalized objective;
    its components sum to one by construction.  With ``fast`` off the
    covariances are recomputed by the two-pass reference, which needs the
    patches and responsibilities back.
    """
    if stats.n_components != generic.n_components or stats.dim != generic.dim:
        raise ValueError("statistics do not match the generic model shape")
    if n < 1:
        raise ValueError("n must be positive")
    k = generic.n_components
    counts = stats.counts
    alphas = counts / (counts + rho)
    weights = (counts + rho * k * generic.weights) / (n + rho * k)
    means = alphas[:, None] * stats.means + (1.0 - alphas)[:, None] * generic.means
    covs = np.empty_like(generic.covariances)
    for j in range(k):
        if fast:
            covs[j] = mstep_covariance_fast(stats.second_moments[j], means[j],
                                            generic.means[j], generic.covariances[j],
                                            float(alphas[j]), sigma_tilde_sq)
        elif counts[j] <= 0.0:
            covs[j] = generic.covariances[j]
        else:
            covs[j] = mstep_covariance_direct(patch_matrix, gamma[:, j], means[j],
                                              generic.means[j], generic.covariances[j],
                                              float(alphas[j]), sigma_tilde_sq)
    return weights, means, covs


def adapt(generic: Gmm, patches, config: AdaptationConfig | None = None):
    """Adapt a generic prior to the patches of one image.

    Iterations re-estimate responsibilities under the adapted model while
    the anchor stays the original generic prior.  When the patches carry
    residual noise, pass its variance as ``sigma_tilde_sq``: the E-step
    then scores them under inflated covariances and the data part of the
    covariance update is deflated by the same amount before flooring.

    Returns the adapted model and an AdaptationReport.
    """
    config = config or AdaptationConfig()
    x = _patch_matrix(patches)
    if x.shape[1] != generic.dim:
        raise ValueError(f"patches have dimension {x.shape[1]}, model has {generic.dim}")
    n = x.shape[0]
    hyper = derive_hyperparams(generic, config.rho)
    current = generic
    objectives = []
    mstep_seconds = 0.0
    alphas = counts = None
    for _ in range(config.iterations):
        gamma, counts = responsibilities(current, x, config.sigma_tilde_sq)
        stats = sufficient_stats(x, gamma)
        start = time.perf_counter()
        weights, means, covs = adaptation_mstep(
            generic, stats, n, config.rho, config.sigma_tilde_sq,
            fast=config.fast_covariance, patch_matrix=x, gamma=gamma)
        total = float(weights.sum())
        assert abs(total - 1.0) <= 1e-12, "weight update drifted off the simplex"
        weights = weights / total
        covs = np.stack([condition_psd(c, config.psd_floor) for c in covs])
        mstep_seconds += time.perf_counter() - start
        alphas = counts / (counts + config.rho)
        current = Gmm(weights, means, covs)
        objectives.append(log_posterior_objective(current, x, hyper,
                                                  config.sigma_tilde_sq))
    report = AdaptationReport(objectives=tuple(objectives), alphas=alphas,
                              counts=counts, mstep_seconds=mstep_seconds)
    return current, report


def posterior_hyperparams(hyper: HyperParams, stats: SufficientStats) -> HyperParams:
    """Conjugate update of the hyperparameters given soft statistics."""
    if hyper.n_components != stats.n_components or hyper.dim != stats.dim:
        raise ValueError("hyperparameters do not match the statistics shape")
    counts = stats.counts
    tau = hyper.mean_strengths
    new_tau = tau + counts
    locs = (tau[:, None] * hyper.mean_locs + counts[:, None] * stats.means) / new_tau[:, None]
    scales = np.empty_like(hyper.scale_mats)
    for k in range(hyper.n_components):
        pull = hyper.mean_locs[k] - stats.means[k]
        shrink = tau[k] * counts[k] / new_tau[k]
        mat = hyper.scale_mats[k] + stats.scatters[k] + shrink * np.outer(pull, pull)
        scales[k] = 0.5 * (mat + mat.T)
    return HyperParams(
        weight_counts=hyper.weight_counts + counts,
        mean_locs=locs,
        mean_strengths=new_tau,
        scale_mats=scales,
        dofs=hyper.dofs + counts,
    )


def mstep_general(hyper: HyperParams, stats: SufficientStats, n: int) -> Gmm:
    """Mode of the updated conjugate posterior, in closed form.

    Reduces to the plain ML update when every Dirichlet count is one and
    the mean strengths vanish.  The covariance denominator is
    dofs + d + 2 + count, which makes the result the exact joint mode.
    """
    if hyper.n_components != stats.n_components or hyper.dim != stats.dim:
        raise ValueError("hyperparameters do not match the statistics shape")
    if n < 1:
        raise ValueError("n must be positive")
    counts = stats.counts
    d = hyper.dim
    pseudo = hyper.weight_counts - 1.0
    weights = (pseudo + counts) / (float(pseudo.sum()) + n)
    tau = hyper.mean_strengths
    blend = counts / (tau + counts)
    means = blend[:, None] * stats.means + (1.0 - blend)[:, None] * hyper.mean_locs
    covs = np.empty_like(hyper.scale_mats)
    for k in range(hyper.n_components):
        dev_data = stats.means[k] - means[k]
        dev_loc = hyper.mean_locs[k] - means[k]
        mat = (stats.scatters[k] + counts[k] * np.outer(dev_data, dev_data)
               + hyper.scale_mats[k] + tau[k] * np.outer(dev_loc, dev_loc))
        mat = mat / (float(hyper.dofs[k]) + d + 2.0 + counts[k])
        covs[k] = 0.5 * (mat + mat.T)
    return Gmm(weights / weights.sum(), means, covs)
