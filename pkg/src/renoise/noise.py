"""Noise processes: Gaussian, signal-dependent Poisson, mixtures, blind ranges.

The observed image is y = x + n_o and the training input is z = y + n_s,
where n_s is drawn from the same family as n_o. Samplers return zero-mean
noise fields; the addition happens in make_observed / make_simulated, never
inside a sampler. Nothing is clipped here: clipping would break the
additivity the statistics rely on.

The Poisson component uses the peak-rate construction: each pixel of value
v (clamped to [0, 255] for rate purposes) draws p ~ Poisson(lam * v / 255)
and contributes noise (p * 255 / lam) - v. This is zero-mean with variance
(255 / lam) * v, so intensity scales inversely with lam and variance grows
linearly with signal level.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import SpecError
from .image import ROLE_CLEAN, ROLE_OBSERVED, ROLE_SIMULATED, ImageBuffer

GAUSSIAN = "gaussian"
POISSON = "poisson"
MIXED = "mixed"
BLIND_GAUSSIAN = "blind_gaussian"
BLIND_MIXED = "blind_mixed"
KINDS = (GAUSSIAN, POISSON, MIXED, BLIND_GAUSSIAN, BLIND_MIXED)
_BLIND = (BLIND_GAUSSIAN, BLIND_MIXED)


@dataclass(frozen=True)
class NoiseSpec:
    """Declarative description of one noise process.

    sigma / lam are the Gaussian std and Poisson intensity in pixel units;
    blind kinds carry inclusive ranges instead and draw a concrete level per
    request. ``level_distribution`` picks how blind Gaussian levels are
    drawn: ``gaussian`` (centered on the range midpoint, std = width / 4,
    resampled into range) or ``uniform``.
    """

    kind: str = GAUSSIAN
    sigma: float | None = None
    lam: float | None = None
    sigma_range: tuple[float, float] | None = None
    lambda_range: tuple[float, float] | None = None
    level_distribution: str = "gaussian"
    seed: int | None = None

    def validate(self) -> "NoiseSpec":
        if self.kind not in KINDS:
            raise SpecError(f"unknown noise kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == GAUSSIAN:
            self._need_sigma()
        elif self.kind == POISSON:
            self._need_lambda()
        elif self.kind == MIXED:
            self._need_sigma()
            self._need_lambda()
        elif self.kind == BLIND_GAUSSIAN:
            self._need_range(self.sigma_range, "sigma_range")
        elif self.kind == BLIND_MIXED:
            self._need_range(self.sigma_range, "sigma_range")
            self._need_range(self.lambda_range, "lambda_range")
        if self.level_distribution not in ("gaussian", "uniform"):
            raise SpecError(f"level_distribution must be gaussian or uniform, got {self.level_distribution!r}")
        return self

    def _need_sigma(self):
        if self.sigma is None or self.sigma < 0:
            raise SpecError(f"{self.kind} noise needs sigma >= 0, got {self.sigma}")

    def _need_lambda(self):
        if self.lam is None or self.lam <= 0:
            raise SpecError(f"{self.kind} noise needs lambda > 0, got {self.lam}")

    @staticmethod
    def _need_range(rng_pair, name):
        if rng_pair is None:
            raise SpecError(f"blind noise needs {name}")
        lo, hi = rng_pair
        if not (0 <= lo <= hi):
            raise SpecError(f"{name} must satisfy 0 <= lo <= hi, got ({lo}, {hi})")

    @property
    def is_blind(self) -> bool:
        return self.kind in _BLIND


def _values(base) -> np.ndarray:
    return base.data if isinstance(base, ImageBuffer) else np.asarray(base, dtype=np.float64)


def sample_gaussian_noise(shape, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """I.i.d. zero-mean Gaussian field with std ``sigma``, unclipped."""
    if sigma < 0:
        raise SpecError(f"sigma must be >= 0, got {sigma}")
    return sigma * rng.standard_normal(shape)


def sample_poisson_noise(base, lam: float, rng: np.random.Generator) -> np.ndarray:
    """Zero-mean signal-dependent Poisson noise for the given base image."""
    if lam <= 0:
        raise SpecError(f"lambda must be > 0, got {lam}")
    v = np.clip(_values(base), 0.0, 255.0)
    counts = rng.poisson(lam * v / 255.0)
    return counts * (255.0 / lam) - v


def draw_blind_level(spec: NoiseSpec, rng: np.random.Generator) -> dict:
    """Concrete noise level(s) for one blind draw.

    Blind Gaussian: level centered on the range midpoint with std equal to
    a quarter of the range width, resampled until it lands inside the range
    (or drawn uniformly when the spec says so). Blind mixed: lambda and
    sigma drawn uniformly from (lo, hi].
    """
    spec.validate()
    if not spec.is_blind:
        raise SpecError(f"draw_blind_level needs a blind spec, got kind {spec.kind!r}")
    if spec.kind == BLIND_GAUSSIAN:
        return {"sigma": _draw_level(spec.sigma_range, spec.level_distribution, rng)}
    return {
        "lam": _draw_open_uniform(spec.lambda_range, rng),
        "sigma": _draw_open_uniform(spec.sigma_range, rng),
    }


def _draw_level(rng_pair, distribution, rng):
    lo, hi = float(rng_pair[0]), float(rng_pair[1])
    if hi == lo:
        return lo
    if distribution == "uniform":
        return lo + (hi - lo) * rng.random()
    mid = 0.5 * (lo + hi)
    std = 0.25 * (hi - lo)
    while True:
        v = mid + std * rng.standard_normal()
        if lo <= v <= hi:
            return v


def _draw_open_uniform(rng_pair, rng):
    # (lo, hi]: lo itself (often 0) is excluded
    lo, hi = float(rng_pair[0]), float(rng_pair[1])
    if hi == lo:
        return hi
    return hi - (hi - lo) * rng.random()


def draw_noise_field(spec: NoiseSpec, base, rng: np.random.Generator):
    """Sample one noise field for ``base`` per ``spec``.

    Returns (noise, levels) where levels records the concrete sigma/lambda
    used, notably the per-draw values of blind kinds.
    """
    spec.validate()
    v = _values(base)
    if spec.kind == GAUSSIAN:
        return sample_gaussian_noise(v.shape, spec.sigma, rng), {"sigma": spec.sigma}
    if spec.kind == POISSON:
        return sample_poisson_noise(v, spec.lam, rng), {"lam": spec.lam}
    if spec.kind == MIXED:
        noise = sample_poisson_noise(v, spec.lam, rng)
        noise += sample_gaussian_noise(v.shape, spec.sigma, rng)
        return noise, {"lam": spec.lam, "sigma": spec.sigma}
    levels = draw_blind_level(spec, rng)
    if spec.kind == BLIND_GAUSSIAN:
        return sample_gaussian_noise(v.shape, levels["sigma"], rng), levels
    noise = sample_poisson_noise(v, levels["lam"], rng)
    noise += sample_gaussian_noise(v.shape, levels["sigma"], rng)
    return noise, levels


def blind_training_variant(spec: NoiseSpec) -> NoiseSpec:
    """Blind counterpart of a concrete spec, for level-unaware training.

    Gaussian maps to blind_gaussian (default range [0, 55]); Poisson and
    mixed map to blind_mixed (default ranges (0, 25] for both parameters).
    Already-blind specs pass through.
    """
    spec.validate()
    if spec.is_blind:
        return spec
    if spec.kind == GAUSSIAN:
        return NoiseSpec(kind=BLIND_GAUSSIAN,
                         sigma_range=spec.sigma_range or (0.0, 55.0),
                         level_distribution=spec.level_distribution, seed=spec.seed)
    return NoiseSpec(kind=BLIND_MIXED,
                     sigma_range=spec.sigma_range or (0.0, 25.0),
                     lambda_range=spec.lambda_range or (0.0, 25.0),
                     level_distribution=spec.level_distribution, seed=spec.seed)


def make_observed(x: ImageBuffer, spec: NoiseSpec, rng: np.random.Generator) -> ImageBuffer:
    """Corrupt a clean image: y = x + n_o."""
    x.require_role(ROLE_CLEAN, "make_observed")
    noise, levels = draw_noise_field(spec, x, rng)
    return x.derive(x.data + noise, ROLE_OBSERVED,
                    observed_noise={"kind": spec.kind, **levels})


def make_simulated(y: ImageBuffer, spec: NoiseSpec, rng: np.random.Generator) -> ImageBuffer:
    """Re-corrupt an observed image: z = y + n_s (Poisson rates come from y)."""
    y.require_role(ROLE_OBSERVED, "make_simulated")
    noise, levels = draw_noise_field(spec, y, rng)
    return y.derive(y.data + noise, ROLE_SIMULATED,
                    simulated_noise={"kind": spec.kind, **levels})
