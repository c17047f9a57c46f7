"""MAP image denoiser: half-quadratic splitting with per-patch mode selection.

Each stage alternates three closed-form moves: pick the most probable
mixture component for every patch of the current estimate, shrink each
patch toward that component's mean by a Wiener step, and refit the pixel
image to the noisy observation plus the averaged patch estimates.  The
coupling weight beta grows over stages, handing the image over from the
observation to the prior.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np
import scipy.linalg

from .gmm import Gmm, component_log_densities
from .patches import ImageBuffer, accumulate_patches, extract_patches, psnr

__all__ = ["HqsSchedule", "DenoiseResult", "denoise", "select_modes"]

_STAGE_MULTIPLIERS = (1.0, 4.0, 8.0, 16.0, 32.0)


@dataclasses.dataclass(frozen=True)
class HqsSchedule:
    """Per-stage coupling weights and mode-selection inflations."""

    betas: tuple
    mode_inflations: tuple

    def __post_init__(self):
        betas = tuple(float(b) for b in self.betas)
        inflations = tuple(float(g) for g in self.mode_inflations)
        if not betas:
            raise ValueError("schedule must have at least one stage")
        if len(betas) != len(inflations):
            raise ValueError("betas and mode_inflations must have equal length")
        if any(b <= 0 for b in betas):
            raise ValueError("betas must be positive")
        if any(g < 0 for g in inflations):
            raise ValueError("mode_inflations must be nonnegative")
        object.__setattr__(self, "betas", betas)
        object.__setattr__(self, "mode_inflations", inflations)

    @classmethod
    def default(cls, sigma: float) -> "HqsSchedule":
        """Five stages with beta = m / sigma^2 and inflation 1 / beta.

        The inflation matches the residual variance the stage assumes on
        patches of the running estimate.
        """
        if sigma <= 0:
            raise ValueError("sigma must be positive")
        betas = tuple(m / sigma ** 2 for m in _STAGE_MULTIPLIERS)
        return cls(betas=betas, mode_inflations=tuple(1.0 / b for b in betas))

    def __len__(self) -> int:
        return len(self.betas)

    def stages(self):
        return zip(self.betas, self.mode_inflations)


@dataclasses.dataclass(frozen=True)
class DenoiseResult:
    """Denoised image plus per-stage diagnostics.

    ``psnr_trace`` is present only when a reference image was supplied;
    ``mode_histograms`` counts the patches assigned to each component at
    every stage.
    """

    image: ImageBuffer
    psnr_trace: tuple | None
    mode_histograms: tuple


def select_modes(prior: Gmm, patch_matrix, inflation: float) -> np.ndarray:
    """Index of the highest-posterior component for each patch.

    Scores are weight times density under the component covariance plus
    ``inflation`` on the diagonal; rescaling all weights by a positive
    constant shifts every score equally and cannot change the argmax.
    """
    with np.errstate(divide="ignore"):
        scores = component_log_densities(prior, patch_matrix, inflation) + np.log(prior.weights)
    return scores.argmax(axis=1)


def denoise(noisy: ImageBuffer, sigma: float, prior: Gmm,
            schedule: HqsSchedule | None = None,
            reference: ImageBuffer | None = None) -> DenoiseResult:
    """Restore an image corrupted by white Gaussian noise of scale sigma.

    The prior must model square patches; the patch side is recovered from
    its dimensionality.  The patch grid uses stride 1.  The data term
    weighs the observation by d / sigma^2 per pixel, which balances the
    default beta schedule so that the first stage mixes observation and
    patch estimates evenly.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    side = math.isqrt(prior.dim)
    if side * side != prior.dim:
        raise ValueError(f"prior dimension {prior.dim} is not a square patch")
    if side > min(noisy.width, noisy.height):
        raise ValueError("patch size exceeds the image")
    schedule = schedule if schedule is not None else HqsSchedule.default(sigma)
    k = prior.n_components
    d = prior.dim
    eye = np.eye(d)
    data_weight = d / sigma ** 2
    observed = noisy.pixels
    x = observed.copy()
    trace = [] if reference is not None else None
    histograms = []
    for stage, (beta, delta) in enumerate(schedule.stages()):
        patches = extract_patches(ImageBuffer(x), side, 1)
        modes = select_modes(prior, patches.data, delta)
        histograms.append(np.bincount(modes, minlength=k))
        values = np.empty_like(patches.data)
        for j in np.unique(modes):
            idx = np.flatnonzero(modes == j)
            cov = prior.covariances[j]
            factor = scipy.linalg.cho_factor(beta * cov + eye, lower=True,
                                             check_finite=False)
            rhs = prior.means[j] + beta * (patches.data[idx] @ cov)
            values[idx] = scipy.linalg.cho_solve(factor, rhs.T, check_finite=False).T
        sums, cover = accumulate_patches(patches.with_values(values),
                                         noisy.width, noisy.height)
        x = (data_weight * observed + beta * sums.pixels) / (data_weight + beta * cover.pixels)
        if not np.isfinite(x).all():
            raise FloatingPointError(f"non-finite pixel values after stage {stage}")
        if trace is not None:
            trace.append(psnr(reference, ImageBuffer(x)))
    return DenoiseResult(image=ImageBuffer(x),
                         psnr_trace=tuple(trace) if trace is not None else None,
                         mode_histograms=tuple(histograms))
