"""FIR/rational system representations, Toeplitz operators and seeded simulation.

Conventions used throughout:

* An FIR system with coefficients ``h = [h_0, ..., h_{n_h-1}]`` maps an input
  ``r`` to ``y_t = sum_k h_k r_{t-k}``.
* Initial conditions are always zero (``r_t = 0`` for ``t <= 0``); there is
  deliberately no API for a nonzero initial state.
* In docstrings the sample index ``t`` and coefficient indices are 1-based to
  match the usual system-identification notation; array storage is 0-based.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import lfilter

from .errors import DimensionError, ParameterError, StabilityError
from .rng import stream

SIGNAL_LABELS = ("r", "y", "e", "w", "v")

#: Tolerance on |pole| < 1 used by the stability check.
STABILITY_TOL = 1e-9


def _as_vector(x, name: str) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(x, dtype=float))
    if arr.ndim != 1:
        raise DimensionError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if arr.size < 1:
        raise DimensionError(f"{name} must have length >= 1")
    if not np.all(np.isfinite(arr)):
        raise ParameterError(f"{name} contains non-finite entries")
    return arr


def _readonly(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, dtype=float)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class FirModel:
    """Finite impulse response model, fully described by its coefficient vector."""

    coeffs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "coeffs", _readonly(_as_vector(self.coeffs, "coeffs")))

    @property
    def order(self) -> int:
        return self.coeffs.size

    def __len__(self) -> int:
        return self.coeffs.size


@dataclass(frozen=True)
class RationalFilter:
    """Rational transfer function in the delay operator.

    ``numerator[k]`` and ``denominator[k]`` are the coefficients of the k-th
    power of the delay operator; the denominator must have leading entry 1 and
    all its roots strictly inside the unit circle.
    """

    numerator: np.ndarray
    denominator: np.ndarray

    def __post_init__(self):
        num = _readonly(_as_vector(self.numerator, "numerator"))
        den = _readonly(_as_vector(self.denominator, "denominator"))
        if den[0] != 1.0:
            raise ParameterError(f"denominator leading coefficient must be 1, got {den[0]}")
        poles = _poles(den)
        if poles.size and np.max(np.abs(poles)) >= 1.0 - STABILITY_TOL:
            raise StabilityError(
                f"unstable filter: largest pole magnitude {np.max(np.abs(poles)):.6g}"
            )
        object.__setattr__(self, "numerator", num)
        object.__setattr__(self, "denominator", den)

    @classmethod
    def identity(cls) -> "RationalFilter":
        return cls(np.array([1.0]), np.array([1.0]))


def _poles(den: np.ndarray) -> np.ndarray:
    # Trailing zero coefficients only add poles at the origin; drop them.
    trimmed = np.trim_zeros(den, "b")
    if trimmed.size <= 1:
        return np.empty(0)
    return np.roots(trimmed)


@dataclass(frozen=True)
class SignalSeq:
    """Finite sample record of a scalar signal."""

    samples: np.ndarray
    label: str = "r"

    def __post_init__(self):
        object.__setattr__(self, "samples", _readonly(_as_vector(self.samples, "samples")))
        if self.label not in SIGNAL_LABELS:
            raise ParameterError(f"label must be one of {SIGNAL_LABELS}, got {self.label!r}")

    def __len__(self) -> int:
        return self.samples.size


def _samples(x) -> np.ndarray:
    if isinstance(x, SignalSeq):
        return np.asarray(x.samples)
    if isinstance(x, FirModel):
        return np.asarray(x.coeffs)
    return _as_vector(x, "signal")


@dataclass(frozen=True)
class RegressorMatrix:
    """Lower-banded Toeplitz matrix R with ``R[t, j] = r_{t-j+1}`` (1-based).

    ``matrix @ h`` equals the zero-state response of the FIR system ``h`` to
    the input the matrix was built from.
    """

    matrix: np.ndarray
    input_samples: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "matrix", _readonly(self.matrix))
        object.__setattr__(self, "input_samples", _readonly(self.input_samples))

    @property
    def n_samples(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_coeffs(self) -> int:
        return self.matrix.shape[1]


@dataclass(frozen=True)
class BandedFilterMatrix:
    """Banded matrix L mapping a white vector to moving-average noise.

    For filter length m, row i holds the reversed coefficients
    ``(l_{m-1}, ..., l_0)`` starting at column i, so ``matrix @ v`` is the
    steady-state MA convolution of ``v`` with the coefficients.
    """

    matrix: np.ndarray
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "matrix", _readonly(self.matrix))
        object.__setattr__(self, "coeffs", _readonly(self.coeffs))

    @property
    def n_samples(self) -> int:
        return self.matrix.shape[0]

    @property
    def filter_length(self) -> int:
        return self.coeffs.size


def impulse_response(g: RationalFilter, n: int) -> np.ndarray:
    """First ``n`` samples of the zero-state response of ``g`` to a unit impulse.

    The impulse arrives at the first sample, so the result is the coefficient
    sequence of the power-series expansion of ``g`` in the delay operator.
    """
    if n < 1:
        raise ParameterError(f"n must be >= 1, got {n}")
    pulse = np.zeros(n)
    pulse[0] = 1.0
    return lfilter(g.numerator, g.denominator, pulse)


def fir_truncate(g: RationalFilter, order: int, rel_tol: float = 1e-12):
    """Truncate ``g`` to an FIR model of the given order.

    Returns ``(FirModel, tail_quality)`` where ``tail_quality`` is the l1 norm
    of the discarded impulse-response tail, accumulated until the running
    increment drops below ``rel_tol`` relative to the accumulated total.
    """
    if order < 1:
        raise ParameterError(f"order must be >= 1, got {order}")
    full = impulse_response(g, order)
    model = FirModel(full)

    # Stability guarantees geometric decay, so the tail sum terminates; the
    # cap only guards against near-unit poles.
    tail = 0.0
    state_size = max(g.numerator.size, g.denominator.size) - 1
    if state_size > 0:
        pulse = np.zeros(order)
        pulse[0] = 1.0
        _, state = lfilter(g.numerator, g.denominator, pulse, zi=np.zeros(state_size))
        chunk = 256
        zeros = np.zeros(chunk)
        for _ in range(10**6 // chunk + 1):
            block, state = lfilter(g.numerator, g.denominator, zeros, zi=state)
            increment = np.sum(np.abs(block))
            tail += increment
            if increment <= rel_tol * max(tail, np.sum(np.abs(full)), 1e-300):
                break
    return model, float(tail)


def build_regressor(r, n_h: int) -> RegressorMatrix:
    """Build the N x n_h regressor matrix of an input record.

    Requires ``N >= n_h`` so that the least-squares problem it feeds is not
    structurally underdetermined.
    """
    samples = _samples(r)
    n = samples.size
    if n_h < 1:
        raise ParameterError(f"n_h must be >= 1, got {n_h}")
    if n < n_h:
        raise DimensionError(f"need at least n_h={n_h} samples, got N={n}")
    padded = np.concatenate([np.zeros(n_h - 1), samples])
    windows = np.lib.stride_tricks.sliding_window_view(padded, n_h)
    return RegressorMatrix(matrix=windows[:, ::-1].copy(), input_samples=samples)


def build_filter_matrix(l, n_samples: int) -> BandedFilterMatrix:
    """Build the N x (N+m-1) banded matrix of an MA filter with coefficients ``l``."""
    coeffs = _samples(l)
    if n_samples < 1:
        raise ParameterError(f"n_samples must be >= 1, got {n_samples}")
    m = coeffs.size
    mat = np.zeros((n_samples, n_samples + m - 1))
    rev = coeffs[::-1]
    for i in range(n_samples):
        mat[i, i : i + m] = rev
    return BandedFilterMatrix(matrix=mat, coeffs=coeffs)


def convolution_matrix(h, n_cols: int) -> np.ndarray:
    """Convolution operator of ``h`` acting on length ``n_cols`` vectors.

    The result has ``len(h) + n_cols - 1`` rows; multiplying it by a
    coefficient vector yields the coefficients of the polynomial product.
    """
    coeffs = _samples(h)
    if n_cols < 1:
        raise ParameterError(f"n_cols must be >= 1, got {n_cols}")
    n_h = coeffs.size
    n_rows = n_h + n_cols - 1
    mat = np.zeros((n_rows, n_cols))
    for j in range(n_cols):
        mat[j : j + n_h, j] = coeffs
    return mat


def _draw_white(gen: np.random.Generator, size: int, dist: str) -> np.ndarray:
    if dist == "gaussian":
        return gen.standard_normal(size)
    if dist == "uniform":
        # Uniform on +-sqrt(3) has unit variance.
        return gen.uniform(-np.sqrt(3.0), np.sqrt(3.0), size)
    raise ParameterError(f"unknown white-noise distribution {dist!r}")


def simulate(
    h: FirModel,
    r,
    channel: str = "none",
    l=None,
    sigma2: float = 0.0,
    seed: int = 0,
    dist: str = "gaussian",
) -> SignalSeq:
    """Simulate one output record of the plant under the chosen noise channel.

    Parameters
    ----------
    h : FirModel
        Plant coefficients.
    r : SignalSeq or array_like
        Input record of length N (>= len(h)).
    channel : {"output", "input", "none"}
        Where the masking noise enters.  "output" adds the MA process driven
        by ``l`` to the output; "input" adds it to the plant input, so its
        output contribution is the MA process of ``conv(h, l)``; "none" adds
        no masking noise.
    l : array_like, optional
        MA filter coefficients (required unless channel == "none").
    sigma2 : float
        Variance of the white measurement noise.
    seed : int
        Stream seed; draws are a pure function of (seed, stream, index).
    dist : {"gaussian", "uniform"}
        Distribution of the unit-variance driving noise.

    The masking noise is stationary: its driving vector extends before the
    first sample, so every output sample sees the full filter memory and the
    record matches the banded-matrix model exactly.
    """
    if sigma2 < 0:
        raise ParameterError(f"sigma2 must be >= 0, got {sigma2}")
    samples = _samples(r)
    reg = build_regressor(samples, len(h))
    y = reg.matrix @ h.coeffs
    n = samples.size

    if channel not in ("output", "input", "none"):
        raise ParameterError(f"channel must be output/input/none, got {channel!r}")
    if channel != "none":
        if l is None:
            raise ParameterError("channel with masking noise requires filter coefficients l")
        coeffs = _samples(l)
        if channel == "input":
            coeffs = np.convolve(h.coeffs, coeffs)
        band = build_filter_matrix(coeffs, n)
        v = _draw_white(stream(seed, "v"), band.matrix.shape[1], dist)
        y = y + band.matrix @ v
    if sigma2 > 0:
        y = y + np.sqrt(sigma2) * stream(seed, "e").standard_normal(n)
    return SignalSeq(y, label="y")


def generate_filtered_input(w_filter: RationalFilter, n_samples: int, seed: int = 0) -> SignalSeq:
    """Unit-variance white Gaussian noise shaped by ``w_filter`` (zero initial state)."""
    if n_samples < 1:
        raise ParameterError(f"n_samples must be >= 1, got {n_samples}")
    white = stream(seed, "input-white").standard_normal(n_samples)
    shaped = lfilter(w_filter.numerator, w_filter.denominator, white)
    return SignalSeq(shaped, label="r")
