"""Monte-Carlo checks of the statistical assumptions behind the method.

Three families of claims are verified empirically:

* weak noise: the signal's mean and variance dominate the noise's;
* expectation chain: corrupting an image (once or twice) leaves its
  expectation essentially unchanged, E[y] ~ E[x] and E[z] ~ E[y];
* additivity: summing an observed and a simulated noise field keeps the
  family closed, with Gaussian variance sigma_o^2 + sigma_s^2 +
  2 rho sigma_o sigma_s (rho the correlation of the Gaussian parts) and
  Poisson-component variances adding for independent components.

Correlated Poisson components are out of scope: correlation enters only
through the Gaussian cross term, and the verifier draws Poisson parts
independently.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import SpecError
from .image import ImageBuffer
from .noise import sample_gaussian_noise, sample_poisson_noise
from .rng import child_rng

MIN_TRIALS = 10_000
RATIO_CAP = 1e12
WEAK_NOISE_THRESHOLD = 10.0
VARIANCE_TOLERANCE = 0.05
STANDARD_ERROR_FACTOR = 3.0


@dataclass(frozen=True)
class TheoryTrialSpec:
    trials: int = 1_000_000
    sigma_o: float = 0.0
    sigma_s: float = 0.0
    lambda_o: float | None = None
    lambda_s: float | None = None
    rho: float = 0.0
    level: float = 128.0
    seed: int = 0

    def validate(self) -> "TheoryTrialSpec":
        if self.trials < MIN_TRIALS:
            raise SpecError(f"trials must be >= {MIN_TRIALS}, got {self.trials}")
        if not -1.0 <= self.rho <= 1.0:
            raise SpecError(f"rho must lie in [-1, 1], got {self.rho}")
        if self.sigma_o < 0 or self.sigma_s < 0:
            raise SpecError("sigma_o and sigma_s must be >= 0")
        for lam in (self.lambda_o, self.lambda_s):
            if lam is not None and lam <= 0:
                raise SpecError(f"lambda must be > 0, got {lam}")
        return self


@dataclass
class TheoryRow:
    claim: str
    estimated: float
    predicted: float
    relative_error: float | None
    tolerance: float
    passed: bool

    def to_json_dict(self) -> dict:
        return {"claim": self.claim, "estimated": self.estimated,
                "predicted": self.predicted, "relative_error": self.relative_error,
                "tolerance": self.tolerance, "pass": self.passed}


@dataclass
class TheoryReport:
    rows: list[TheoryRow] = field(default_factory=list)

    @property
    def all_passed(self) -> bool:
        return all(r.passed for r in self.rows)

    def to_json(self) -> str:
        return json.dumps({"rows": [r.to_json_dict() for r in self.rows],
                           "all_pass": self.all_passed}, indent=2) + "\n"

    def to_table(self) -> str:
        head = f"{'claim':<42} {'estimated':>14} {'predicted':>14} {'rel.err':>10} {'result':>7}"
        lines = [head, "-" * len(head)]
        for r in self.rows:
            rel = "" if r.relative_error is None else f"{r.relative_error:.4f}"
            lines.append(f"{r.claim:<42} {r.estimated:>14.5g} {r.predicted:>14.5g} "
                         f"{rel:>10} {'pass' if r.passed else 'FAIL':>7}")
        return "\n".join(lines) + "\n"


def _ratio_row(claim: str, numerator: float, denominator: float,
               threshold: float) -> TheoryRow:
    ratio = RATIO_CAP if denominator == 0 else min(abs(numerator) / abs(denominator), RATIO_CAP)
    return TheoryRow(claim=claim, estimated=ratio, predicted=threshold,
                     relative_error=None, tolerance=threshold, passed=ratio > threshold)


def _noise_field(spec: TheoryTrialSpec, which: str, base: np.ndarray,
                 rng: np.random.Generator) -> np.ndarray:
    sigma = spec.sigma_o if which == "o" else spec.sigma_s
    lam = spec.lambda_o if which == "o" else spec.lambda_s
    noise = np.zeros_like(base)
    if lam is not None:
        noise += sample_poisson_noise(base, lam, rng)
    if sigma > 0:
        noise += sample_gaussian_noise(base.shape, sigma, rng)
    return noise


def verify_weak_noise(x, spec: TheoryTrialSpec,
                      threshold: float = WEAK_NOISE_THRESHOLD) -> list[TheoryRow]:
    """Estimate E[x]/|E[n_o]| and Var[x]/Var[n_o]; both must exceed threshold.

    Zero noise reports the capped ratio and passes trivially.
    """
    spec = spec.validate()
    base = x.data if isinstance(x, ImageBuffer) else np.asarray(x, dtype=np.float64)
    rng = child_rng(spec.seed, "weak")
    reps = max(1, math.ceil(spec.trials / base.size))
    samples = np.concatenate([_noise_field(spec, "o", base, rng).ravel() for _ in range(reps)])
    return [
        _ratio_row("weak-noise mean ratio E[x]/|E[n_o]|",
                   float(base.mean()), float(samples.mean()), threshold),
        _ratio_row("weak-noise variance ratio Var[x]/Var[n_o]",
                   float(base.var()), float(samples.var()), threshold),
    ]


def _chain_row(claim: str, gap: float, se: float) -> TheoryRow:
    bound = STANDARD_ERROR_FACTOR * se
    return TheoryRow(claim=claim, estimated=gap, predicted=0.0,
                     relative_error=None, tolerance=bound,
                     passed=abs(gap) <= bound or bound == 0.0)


def verify_expectation_chain(x, spec: TheoryTrialSpec) -> list[TheoryRow]:
    """Check E[y] - E[x] and E[z] - E[y] vanish within 3 standard errors.

    The noise constructions are zero-mean by design, so the analytic bias
    term is 0 and the bound is purely the Monte-Carlo standard error.
    """
    spec = spec.validate()
    base = x.data if isinstance(x, ImageBuffer) else np.asarray(x, dtype=np.float64)
    rng = child_rng(spec.seed, "chain")
    reps = max(1, math.ceil(spec.trials / base.size))
    n_o = np.concatenate([_noise_field(spec, "o", base, rng).ravel() for _ in range(reps)])
    y_mean_gap = float(n_o.mean())
    se_o = float(n_o.std() / math.sqrt(n_o.size))
    # E[z] - E[y] = E[n_s]; the simulated noise is drawn against y values
    y_vals = np.concatenate([base.ravel()] * reps) + n_o
    n_s = _noise_field(spec, "s", y_vals, rng)
    z_mean_gap = float(n_s.mean())
    se_s = float(n_s.std() / math.sqrt(n_s.size))
    return [
        _chain_row("expectation chain |E[y]-E[x]|", y_mean_gap, se_o),
        _chain_row("expectation chain |E[z]-E[y]|", z_mean_gap, se_s),
    ]


def predicted_combined_variance(spec: TheoryTrialSpec) -> float:
    """Variance of n_o + n_s under the additivity claim at a constant level."""
    var = spec.sigma_o ** 2 + spec.sigma_s ** 2 + 2.0 * spec.rho * spec.sigma_o * spec.sigma_s
    for lam in (spec.lambda_o, spec.lambda_s):
        if lam is not None:
            var += 255.0 * spec.level / lam
    return var


def verify_additivity(spec: TheoryTrialSpec) -> list[TheoryRow]:
    """Empirical Var(n_o + n_s) against the closed form, within 5%.

    Correlated Gaussian components come from a 2x2 covariance factorisation;
    Poisson components are independent and drawn at the constant level.
    """
    spec = spec.validate()
    rng = child_rng(spec.seed, "additivity")
    n = spec.trials
    g1 = rng.standard_normal(n)
    g2 = rng.standard_normal(n)
    n_o = spec.sigma_o * g1
    n_s = spec.sigma_s * (spec.rho * g1 + math.sqrt(max(0.0, 1.0 - spec.rho ** 2)) * g2)
    base = np.full(n, float(spec.level))
    if spec.lambda_o is not None:
        n_o = n_o + sample_poisson_noise(base, spec.lambda_o, rng)
    if spec.lambda_s is not None:
        n_s = n_s + sample_poisson_noise(base, spec.lambda_s, rng)
    est = float(np.var(n_o + n_s))
    pred = predicted_combined_variance(spec)
    if pred == 0.0:
        rel = abs(est)
        passed = est == 0.0
    else:
        rel = abs(est - pred) / pred
        passed = rel <= VARIANCE_TOLERANCE
    tag = (f"additivity var(n_o+n_s) rho={spec.rho:g} sigma=({spec.sigma_o:g},{spec.sigma_s:g})"
           + (f" lambda=({spec.lambda_o:g},{spec.lambda_s:g})" if spec.lambda_o else ""))
    return [TheoryRow(claim=tag, estimated=est, predicted=pred, relative_error=rel,
                      tolerance=VARIANCE_TOLERANCE, passed=passed)]


def run_verification_grid(trials: int = 1_000_000, seed: int = 0,
                          rhos=(-1.0, 0.0, 0.5, 1.0), sigmas=(5.0, 25.0),
                          level: float = 128.0) -> TheoryReport:
    """The full claim suite: weak noise, expectation chains, additivity grid."""
    report = TheoryReport()
    probe = _probe_image()
    report.rows += verify_weak_noise(
        probe, TheoryTrialSpec(trials=trials, sigma_o=5.0, level=level, seed=seed))
    report.rows += verify_expectation_chain(
        np.full((1000, 1000), level),
        TheoryTrialSpec(trials=trials, sigma_o=10.0, sigma_s=10.0, level=level, seed=seed))
    report.rows += verify_expectation_chain(
        np.full((1000, 1000), level),
        TheoryTrialSpec(trials=trials, lambda_o=25.0, lambda_s=25.0, level=level, seed=seed))
    for rho in rhos:
        for s_o in sigmas:
            for s_s in sigmas:
                report.rows += verify_additivity(TheoryTrialSpec(
                    trials=trials, sigma_o=s_o, sigma_s=s_s, rho=rho,
                    level=level, seed=seed))
    report.rows += verify_additivity(TheoryTrialSpec(
        trials=trials, lambda_o=25.0, lambda_s=25.0, level=level, seed=seed))
    report.rows += verify_additivity(TheoryTrialSpec(
        trials=trials, sigma_o=5.0, sigma_s=5.0, lambda_o=25.0, lambda_s=25.0,
        rho=0.5, level=level, seed=seed))
    return report


def _probe_image(size: int = 256):
    from .imgio import synthetic_image
    return synthetic_image(0, size=size)
