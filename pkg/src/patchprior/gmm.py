"""Mixture-model containers and numerically stable Gaussian density math.

Everything likelihood-shaped here lives in log scale.  At patch dimension
64 a single Gaussian density underflows float64 in linear scale, so the
building blocks below are triangular factorizations, log-sum-exp
reductions, and eigenvalue clamping.
"""

from __future__ import annotations

import dataclasses

import numpy as np
import scipy.linalg
from scipy.special import logsumexp

__all__ = [
    "Gmm",
    "HyperParams",
    "SufficientStats",
    "IllConditionedCovarianceError",
    "DegeneratePatchError",
    "log_gaussian",
    "component_log_densities",
    "responsibilities",
    "condition_psd",
    "log_posterior_objective",
    "derive_hyperparams",
    "sufficient_stats",
    "sample_gmm",
]

_LOG_2PI = float(np.log(2.0 * np.pi))

# Construction-time tolerances, absolute.
WEIGHT_SUM_TOL = 1e-12
SYMMETRY_TOL = 1e-12


class IllConditionedCovarianceError(np.linalg.LinAlgError):
    """A covariance failed to factorize even after conditioning."""

    def __init__(self, component: int | None = None):
        self.component = component
        where = "covariance" if component is None else f"covariance of component {component}"
        super().__init__(f"{where} is not positive-definite after conditioning")


class DegeneratePatchError(ValueError):
    """A patch has zero likelihood under every mixture component."""


def _frozen(array, dtype=np.float64) -> np.ndarray:
    out = np.array(array, dtype=dtype, order="C")
    out.flags.writeable = False
    return out


def _patch_matrix(patches) -> np.ndarray:
    """Accept a PatchSet or a plain (n, d) array of row vectors."""
    data = getattr(patches, "data", patches)
    mat = np.asarray(data, dtype=np.float64)
    if mat.ndim != 2 or mat.shape[0] == 0:
        raise ValueError(f"expected a nonempty (n, d) patch matrix, got shape {mat.shape}")
    return mat


@dataclasses.dataclass(frozen=True)
class Gmm:
    """Weighted full-covariance Gaussian mixture over d-dimensional vectors.

    Arrays are copied and marked read-only; instances are safe to share.
    """

    weights: np.ndarray      # (K,) nonnegative, sums to one
    means: np.ndarray        # (K, d)
    covariances: np.ndarray  # (K, d, d) symmetric

    def __post_init__(self):
        w = _frozen(self.weights)
        m = _frozen(self.means)
        c = _frozen(self.covariances)
        if w.ndim != 1 or w.size == 0:
            raise ValueError("weights must be a nonempty 1-D array")
        k = w.size
        if m.ndim != 2 or m.shape[0] != k:
            raise ValueError(f"means must have shape ({k}, d), got {m.shape}")
        d = m.shape[1]
        if c.shape != (k, d, d):
            raise ValueError(f"covariances must have shape ({k}, {d}, {d}), got {c.shape}")
        for name, a in (("weights", w), ("means", m), ("covariances", c)):
            if not np.isfinite(a).all():
                raise ValueError(f"{name} contain non-finite values")
        if (w < 0).any():
            raise ValueError("weights must be nonnegative")
        if abs(float(w.sum()) - 1.0) > WEIGHT_SUM_TOL:
            raise ValueError(f"weights sum to {w.sum()!r}, expected 1")
        asym = float(np.abs(c - np.transpose(c, (0, 2, 1))).max())
        if asym > SYMMETRY_TOL:
            raise ValueError(f"covariances asymmetric by {asym:g}")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", m)
        object.__setattr__(self, "covariances", c)

    @property
    def n_components(self) -> int:
        return self.weights.size

    @property
    def dim(self) -> int:
        return self.means.shape[1]


@dataclasses.dataclass(frozen=True)
class HyperParams:
    """Per-component Dirichlet and normal-inverse-Wishart hyperparameters.

    ``dofs`` may sit below the proper-density threshold d - 1.  Small
    relevance factors land there on purpose; the closed-form updates stay
    well defined, and ``is_proper`` reports whether the parameters also
    describe a normalizable density.
    """

    weight_counts: np.ndarray   # (K,) Dirichlet pseudo-counts, > 0
    mean_locs: np.ndarray       # (K, d) locations the means are pulled toward
    mean_strengths: np.ndarray  # (K,) pseudo-counts tying means to locations, > 0
    scale_mats: np.ndarray      # (K, d, d) symmetric scale matrices
    dofs: np.ndarray            # (K,) inverse-Wishart degrees of freedom

    def __post_init__(self):
        v = _frozen(self.weight_counts)
        locs = _frozen(self.mean_locs)
        tau = _frozen(self.mean_strengths)
        psi = _frozen(self.scale_mats)
        phi = _frozen(self.dofs)
        if v.ndim != 1 or v.size == 0:
            raise ValueError("weight_counts must be a nonempty 1-D array")
        k = v.size
        if locs.ndim != 2 or locs.shape[0] != k:
            raise ValueError("mean_locs must have shape (K, d)")
        d = locs.shape[1]
        if tau.shape != (k,) or phi.shape != (k,) or psi.shape != (k, d, d):
            raise ValueError("hyperparameter shapes are inconsistent")
        for name, a in (("weight_counts", v), ("mean_locs", locs), ("mean_strengths", tau),
                        ("scale_mats", psi), ("dofs", phi)):
            if not np.isfinite(a).all():
                raise ValueError(f"{name} contain non-finite values")
        if (v <= 0).any():
            raise ValueError("weight_counts must be positive")
        if (tau <= 0).any():
            raise ValueError("mean_strengths must be positive")
        asym = float(np.abs(psi - np.transpose(psi, (0, 2, 1))).max())
        if asym > SYMMETRY_TOL:
            raise ValueError(f"scale_mats asymmetric by {asym:g}")
        object.__setattr__(self, "weight_counts", v)
        object.__setattr__(self, "mean_locs", locs)
        object.__setattr__(self, "mean_strengths", tau)
        object.__setattr__(self, "scale_mats", psi)
        object.__setattr__(self, "dofs", phi)

    @property
    def n_components(self) -> int:
        return self.weight_counts.size

    @property
    def dim(self) -> int:
        return self.mean_locs.shape[1]

    @property
    def is_proper(self) -> bool:
        d = self.dim
        if (self.dofs <= d - 1).any():
            return False
        try:
            for k in range(self.n_components):
                scipy.linalg.cholesky(self.scale_mats[k], lower=True, check_finite=False)
        except np.linalg.LinAlgError:
            return False
        return True


@dataclasses.dataclass(frozen=True)
class SufficientStats:
    """Responsibility-weighted first and second moments of a patch set."""

    counts: np.ndarray          # (K,) soft sample counts, sum to n
    means: np.ndarray           # (K, d) weighted sample means (zero where count is zero)
    scatters: np.ndarray        # (K, d, d) centered second moments, unnormalized
    second_moments: np.ndarray  # (K, d, d) raw second moments divided by counts

    def __post_init__(self):
        c = _frozen(self.counts)
        m = _frozen(self.means)
        s = _frozen(self.scatters)
        q = _frozen(self.second_moments)
        if c.ndim != 1 or (c < 0).any():
            raise ValueError("counts must be nonnegative")
        k = c.size
        d = m.shape[1] if m.ndim == 2 else -1
        if m.shape != (k, d) or s.shape != (k, d, d) or q.shape != (k, d, d):
            raise ValueError("statistic shapes are inconsistent")
        object.__setattr__(self, "counts", c)
        object.__setattr__(self, "means", m)
        object.__setattr__(self, "scatters", s)
        object.__setattr__(self, "second_moments", q)

    @property
    def n_components(self) -> int:
        return self.counts.size

    @property
    def dim(self) -> int:
        return self.means.shape[1]


def _factor_spd(matrix, component=None):
    """Lower Cholesky factor of a symmetric matrix, conditioning once on failure."""
    sym = 0.5 * (matrix + matrix.T)
    try:
        return scipy.linalg.cholesky(sym, lower=True, check_finite=False)
    except np.linalg.LinAlgError:
        d = sym.shape[0]
        jitter = 1e-10 * max(1.0, abs(float(np.trace(sym))) / d)
        try:
            return scipy.linalg.cholesky(condition_psd(sym, jitter), lower=True,
                                         check_finite=False)
        except np.linalg.LinAlgError as exc:
            raise IllConditionedCovarianceError(component) from exc


def _log_det_from_factor(chol) -> float:
    return 2.0 * float(np.log(np.diag(chol)).sum())


def log_gaussian(point, mean, covariance, inflation: float = 0.0) -> float:
    """Log density of one point under a full-covariance Gaussian.

    ``inflation`` is added to the diagonal before factorization; this is
    how observation noise of that variance is folded into a clean-signal
    covariance.
    """
    p = np.asarray(point, dtype=np.float64).ravel()
    mu = np.asarray(mean, dtype=np.float64).ravel()
    cov = np.asarray(covariance, dtype=np.float64)
    d = p.size
    if mu.size != d or cov.shape != (d, d):
        raise ValueError("point, mean and covariance dimensions disagree")
    if inflation < 0:
        raise ValueError("inflation must be nonnegative")
    if inflation:
        cov = cov + inflation * np.eye(d)
    chol = _factor_spd(cov)
    dev = p - mu
    sol = scipy.linalg.solve_triangular(chol, dev, lower=True, check_finite=False)
    return float(-0.5 * (d * _LOG_2PI + _log_det_from_factor(chol) + sol @ sol))


def component_log_densities(gmm: Gmm, points, inflation: float = 0.0) -> np.ndarray:
    """(n, K) matrix of per-component Gaussian log densities."""
    x = _patch_matrix(points)
    if x.shape[1] != gmm.dim:
        raise ValueError(f"points have dimension {x.shape[1]}, model has {gmm.dim}")
    if inflation < 0:
        raise ValueError("inflation must be nonnegative")
    n, d = x.shape
    out = np.empty((n, gmm.n_components))
    bump = inflation * np.eye(d) if inflation else None
    for k in range(gmm.n_components):
        cov = gmm.covariances[k]
        if bump is not None:
            cov = cov + bump
        chol = _factor_spd(cov, component=k)
        dev = (x - gmm.means[k]).T
        sol = scipy.linalg.solve_triangular(chol, dev, lower=True, check_finite=False)
        maha = np.einsum("ij,ij->j", sol, sol)
        out[:, k] = -0.5 * (d * _LOG_2PI + _log_det_from_factor(chol) + maha)
    return out


def responsibilities(gmm: Gmm, patches, inflation: float = 0.0):
    """Posterior component memberships for each patch.

    Returns the (n, K) responsibility matrix (rows sum to one) and the
    per-component soft counts.  Computed through a shifted softmax so the
    result is exact up to rounding even when every density underflows.
    """
    x = _patch_matrix(patches)
    with np.errstate(divide="ignore"):
        scores = component_log_densities(gmm, x, inflation) + np.log(gmm.weights)
    top = scores.max(axis=1)
    if not np.isfinite(top).all():
        bad = int(np.flatnonzero(~np.isfinite(top))[0])
        raise DegeneratePatchError(f"patch {bad} has no support under any component")
    z = np.exp(scores - top[:, None])
    gamma = z / z.sum(axis=1)[:, None]
    return gamma, gamma.sum(axis=0)


def condition_psd(sigma, floor: float) -> np.ndarray:
    """Project a symmetric matrix onto the cone with eigenvalues >= floor.

    Symmetrizes, clamps the spectrum, and reconstructs; this is the
    closest such matrix in Frobenius norm.  Inputs that already satisfy
    the floor are returned symmetrized but otherwise untouched, so the
    operation is idempotent.
    """
    if floor <= 0:
        raise ValueError("floor must be positive")
    a = np.asarray(sigma, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("expected a square matrix")
    sym = 0.5 * (a + a.T)
    evals, evecs = np.linalg.eigh(sym)
    if evals[0] >= floor:
        return sym
    clipped = np.maximum(evals, floor)
    out = (evecs * clipped) @ evecs.T
    return 0.5 * (out + out.T)


def log_posterior_objective(gmm_tilde: Gmm, patches, hyper: HyperParams,
                            inflation: float = 0.0, flat_prior: bool = False) -> float:
    """Data log-likelihood plus the log conjugate prior, up to a constant.

    The likelihood term sums log mixture densities with each covariance
    inflated by ``inflation``.  The prior term drops its normalizer but is
    otherwise the full Dirichlet and normal-inverse-Wishart log density,
    so differences between parameter settings are exact.  ``flat_prior``
    returns the likelihood term alone.
    """
    x = _patch_matrix(patches)
    with np.errstate(divide="ignore"):
        scores = component_log_densities(gmm_tilde, x, inflation) + np.log(gmm_tilde.weights)
    ll = float(logsumexp(scores, axis=1).sum())
    if flat_prior:
        return ll
    if hyper.n_components != gmm_tilde.n_components or hyper.dim != gmm_tilde.dim:
        raise ValueError("hyperparameters do not match the model shape")
    d = gmm_tilde.dim
    prior = 0.0
    for k in range(gmm_tilde.n_components):
        chol = _factor_spd(gmm_tilde.covariances[k], component=k)
        v_k = float(hyper.weight_counts[k])
        if v_k != 1.0:
            with np.errstate(divide="ignore"):
                prior += (v_k - 1.0) * float(np.log(gmm_tilde.weights[k]))
        dev = gmm_tilde.means[k] - hyper.mean_locs[k]
        sol = scipy.linalg.solve_triangular(chol, dev, lower=True, check_finite=False)
        inv_scale = scipy.linalg.cho_solve((chol, True), hyper.scale_mats[k],
                                           check_finite=False)
        prior -= 0.5 * (float(hyper.dofs[k]) + d + 2.0) * _log_det_from_factor(chol)
        prior -= 0.5 * float(hyper.mean_strengths[k]) * float(sol @ sol)
        prior -= 0.5 * float(np.trace(inv_scale))
    return ll + prior


def derive_hyperparams(gmm: Gmm, rho: float) -> HyperParams:
    """Hyperparameters that make the penalized M-step collapse to the
    relevance-blended update with a single factor ``rho``.

    Means are anchored at the model means with strength rho, scale
    matrices are rho times the model covariances with matching degrees of
    freedom, and Dirichlet counts place rho * K pseudo-observations at the
    model weights.
    """
    if rho <= 0:
        raise ValueError("rho must be positive")
    k, d = gmm.n_components, gmm.dim
    return HyperParams(
        weight_counts=1.0 + rho * k * gmm.weights,
        mean_locs=gmm.means,
        mean_strengths=np.full(k, float(rho)),
        scale_mats=rho * gmm.covariances,
        dofs=np.full(k, float(rho) - d - 2.0),
    )


def sufficient_stats(patches, gamma) -> SufficientStats:
    """Accumulate soft counts, means, scatters and raw second moments.

    One pass over the patches; the centered scatter is recovered from the
    raw second moment rather than recomputed.
    """
    x = _patch_matrix(patches)
    g = np.asarray(gamma, dtype=np.float64)
    n, d = x.shape
    if g.shape[0] != n or g.ndim != 2:
        raise ValueError("responsibility matrix does not match the patch matrix")
    k = g.shape[1]
    counts = g.sum(axis=0)
    means = np.zeros((k, d))
    scatters = np.zeros((k, d, d))
    seconds = np.zeros((k, d, d))
    for j in range(k):
        c = float(counts[j])
        if c <= 0.0:
            continue
        means[j] = (g[:, j] @ x) / c
        raw = (x * g[:, j, None]).T @ x / c
        raw = 0.5 * (raw + raw.T)
        seconds[j] = raw
        scat = c * (raw - np.outer(means[j], means[j]))
        scatters[j] = 0.5 * (scat + scat.T)
    return SufficientStats(counts=counts, means=means, scatters=scatters,
                           second_moments=seconds)


def sample_gmm(gmm: Gmm, n: int, rng) -> np.ndarray:
    """Draw n rows from the mixture.  ``rng`` is a Generator or a seed."""
    if n < 1:
        raise ValueError("n must be positive")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    labels = rng.choice(gmm.n_components, size=n, p=gmm.weights)
    out = np.empty((n, gmm.dim))
    for k in np.unique(labels):
        idx = np.flatnonzero(labels == k)
        out[idx] = rng.multivariate_normal(gmm.means[k], gmm.covariances[k],
                                           size=idx.size, method="cholesky")
    return out
