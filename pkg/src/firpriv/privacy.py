"""Differential-privacy calibration of additive output noise.

Calibrates Laplace and Gaussian mechanisms from worst-case output-shift
bounds over a box of admissible coefficient vectors, and provides an exact
density audit for tiny instances.  Guarantees here hold no matter what
estimator the adversary runs, at the price of i.i.d. (unshaped) noise.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import AuditSizeError, ParameterError
from .lti import _samples, build_regressor
from .rng import stream

#: Absolute accuracy of the Gaussian tail inverse.
TAIL_INVERSE_TOL = 1e-12


@dataclass(frozen=True)
class CoefficientBox:
    """Axis-aligned box of admissible FIR coefficients: lower <= h_i <= upper."""

    lower: float
    upper: float
    n_h: int

    def __post_init__(self):
        if self.lower > self.upper:
            raise ParameterError(f"box lower {self.lower} exceeds upper {self.upper}")
        if self.n_h < 1:
            raise ParameterError(f"n_h must be >= 1, got {self.n_h}")

    @property
    def width(self) -> float:
        return self.upper - self.lower


@dataclass(frozen=True)
class DpMechanism:
    """Calibrated noise mechanism with the sensitivity it was derived from.

    ``scale`` is the Laplace scale b or the Gaussian standard deviation;
    ``lambda_y`` is the total stationary output-noise variance including the
    measurement-noise floor.
    """

    kind: str  # "laplace" or "gaussian"
    scale: float
    epsilon: float
    delta: float
    sensitivity: float
    lambda_y: float

    def __post_init__(self):
        if self.kind not in ("laplace", "gaussian"):
            raise ParameterError(f"kind must be laplace or gaussian, got {self.kind!r}")
        if not self.epsilon > 0:
            raise ParameterError(f"epsilon must be > 0, got {self.epsilon}")
        if self.kind == "laplace":
            if self.delta != 0.0:
                raise ParameterError("laplace mechanism has delta = 0")
            if self.scale * self.epsilon < self.sensitivity * (1.0 - 1e-12):
                raise ParameterError(
                    f"laplace scale {self.scale} below sensitivity/epsilon "
                    f"= {self.sensitivity / self.epsilon}"
                )
        else:
            if not 0.0 < self.delta < 1.0:
                raise ParameterError(f"delta must be in (0, 1), got {self.delta}")

    @property
    def noise_variance(self) -> float:
        return 2.0 * self.scale**2 if self.kind == "laplace" else self.scale**2


def l1_sensitivity(r, box: CoefficientBox) -> float:
    """Worst-case l1 shift of the noiseless output between adjacent coefficient boxes.

    Adjacent means differing in a single entry; the extreme pair differs by
    the box width in the first entry, giving ``width * sum_k |r_k|``.
    """
    samples = _samples(r)
    return float(box.width * np.sum(np.abs(samples)))


def l2_sensitivity(r, box: CoefficientBox) -> float:
    """Worst-case l2 shift between adjacent coefficient vectors: ``width * ||r||_2``.

    Derived the same way as :func:`l1_sensitivity`: a single-entry difference
    scales one column of the regressor, and the first column has the largest
    norm.
    """
    samples = _samples(r)
    return float(box.width * np.linalg.norm(samples))


def laplace_mechanism(epsilon: float, sensitivity: float, sigma2: float = 0.0) -> DpMechanism:
    """Tightest Laplace scale achieving epsilon-privacy for the given sensitivity."""
    if not epsilon > 0:
        raise ParameterError(f"epsilon must be > 0, got {epsilon}")
    if sensitivity < 0:
        raise ParameterError(f"sensitivity must be >= 0, got {sensitivity}")
    scale = sensitivity / epsilon
    return DpMechanism(
        kind="laplace",
        scale=scale,
        epsilon=epsilon,
        delta=0.0,
        sensitivity=sensitivity,
        lambda_y=2.0 * scale**2 + sigma2,
    )


def gaussian_upper_tail(x: float) -> float:
    """P{Z > x} for standard normal Z."""
    return 0.5 * math.erfc(x / math.sqrt(2.0))


def gaussian_tail_inverse(delta: float) -> float:
    """Inverse of :func:`gaussian_upper_tail`, safeguarded Newton to 1e-12.

    Bisection on a bracketing interval guards every Newton step, so the
    result is trustworthy in the tails where a closed-form approximation
    would silently lose accuracy.
    """
    if not 0.0 < delta < 1.0:
        raise ParameterError(f"delta must be in (0, 1), got {delta}")
    lo, hi = -40.0, 40.0  # gaussian_upper_tail(lo) ~ 1, (hi) ~ 0
    x = 0.0
    for _ in range(200):
        f = gaussian_upper_tail(x) - delta
        if f > 0:
            lo = x
        else:
            hi = x
        density = math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
        step_ok = density > 0.0
        if step_ok:
            x_new = x + f / density
            step_ok = lo < x_new < hi
        if not step_ok:
            x_new = 0.5 * (lo + hi)
        if abs(x_new - x) <= TAIL_INVERSE_TOL and hi - lo <= 4.0 * TAIL_INVERSE_TOL:
            return x_new
        x = x_new
    return x


def gaussian_noise_multiplier(epsilon: float, delta: float) -> float:
    """Multiplier on sensitivity/epsilon for the Gaussian mechanism.

    Equals ``(q + sqrt(q^2 + 2 epsilon)) / 2`` with ``q`` the Gaussian tail
    inverse at delta; strictly increasing in epsilon and decreasing in delta.
    """
    if not epsilon > 0:
        raise ParameterError(f"epsilon must be > 0, got {epsilon}")
    q = gaussian_tail_inverse(delta)
    return (q + math.sqrt(q * q + 2.0 * epsilon)) / 2.0


def gaussian_mechanism(
    epsilon: float, delta: float, l2_sensitivity: float, sigma2: float = 0.0
) -> DpMechanism:
    """Tightest Gaussian deviation achieving (epsilon, delta)-privacy."""
    if l2_sensitivity < 0:
        raise ParameterError(f"l2_sensitivity must be >= 0, got {l2_sensitivity}")
    std = gaussian_noise_multiplier(epsilon, delta) * l2_sensitivity / epsilon
    return DpMechanism(
        kind="gaussian",
        scale=std,
        epsilon=epsilon,
        delta=delta,
        sensitivity=l2_sensitivity,
        lambda_y=std**2 + sigma2,
    )


def sample_mechanism(mech: DpMechanism, n: int, seed: int = 0) -> np.ndarray:
    """Draw n i.i.d. noise samples from a calibrated mechanism (seed-deterministic)."""
    if n < 1:
        raise ParameterError(f"n must be >= 1, got {n}")
    gen = stream(seed, "dp-noise")
    if mech.kind == "gaussian":
        return mech.scale * gen.standard_normal(n)
    if mech.scale == 0.0:
        return np.zeros(n)
    u = gen.random(n)
    u = np.clip(u, 1e-300, 1.0 - 1e-16)
    # Inverse CDF of the Laplace distribution applied to a uniform draw.
    centered = u - 0.5
    return -mech.scale * np.sign(centered) * np.log1p(-2.0 * np.abs(centered))


def _laplace_gauss_log_density(points: np.ndarray, b: float, sigma: float, grid_points: int):
    """Log density of Laplace(b) + Gaussian(sigma) noise at the given points."""
    if sigma == 0.0:
        dens = np.exp(-np.abs(points) / b) / (2.0 * b)
    else:
        s = np.linspace(-10.0 * sigma, 10.0 * sigma, grid_points)
        gauss = np.exp(-0.5 * (s / sigma) ** 2) / (sigma * math.sqrt(2.0 * math.pi))
        lap = np.exp(-np.abs(points[:, None] - s[None, :]) / b) / (2.0 * b)
        trapezoid = getattr(np, "trapezoid", np.trapz)
        dens = trapezoid(lap * gauss[None, :], s, axis=1)
    return np.log(np.maximum(dens, 1e-300))


def privacy_audit(
    r,
    box: CoefficientBox,
    epsilon: float,
    b: float,
    sigma2: float = 0.0,
    grid_points: int = 2001,
) -> float:
    """Exhaustive density audit of a Laplace-noised record on a tiny instance.

    Evaluates the exact per-sample output density (Laplace noise convolved
    with the Gaussian measurement noise, by trapezoid quadrature) for every
    adjacent pair of box corners and returns the largest absolute
    log-likelihood ratio over a wide grid of outputs.  An epsilon-calibrated
    scale keeps the result at or below epsilon up to quadrature error.
    """
    samples = _samples(r)
    if samples.size > 4 or box.n_h > 2:
        raise AuditSizeError(
            f"audit instance too large (N={samples.size}, n_h={box.n_h}); "
            "exact densities are only evaluated for N <= 4, n_h <= 2"
        )
    if grid_points < 2001:
        raise ParameterError(f"grid_points must be >= 2001, got {grid_points}")
    if box.width == 0.0:
        return 0.0
    if not b > 0:
        raise ParameterError(f"b must be > 0 to audit a nonzero box, got {b}")
    reg = build_regressor(samples, box.n_h)
    sigma = math.sqrt(sigma2)
    scale = b + sigma + box.width * float(np.max(np.abs(samples)))
    grid = np.linspace(-10.0 * scale, 10.0 * scale, grid_points)
    log_base = _laplace_gauss_log_density(grid, b, sigma, grid_points)

    worst = 0.0
    for j in range(box.n_h):
        shifts = box.width * np.abs(reg.matrix[:, j])
        total = 0.0
        for d in np.unique(shifts):
            if d == 0.0:
                continue
            count = int(np.sum(shifts == d))
            log_shifted = _laplace_gauss_log_density(grid - d, b, sigma, grid_points)
            total += count * float(np.max(log_base - log_shifted))
        worst = max(worst, total)
    return worst
