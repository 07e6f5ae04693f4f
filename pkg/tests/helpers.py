"""Shared independent oracles for the test suite.

Everything here is deliberately brute force: explicit selection matrices,
literal Kronecker products, direct convolution loops.  These stay independent
of the library code paths they are used to check.
"""
import numpy as np


def selection_matrix(n_l: int, n: int) -> np.ndarray:
    """Explicit 0/1 matrix Q with vec(L) = Q l for the banded filter matrix."""
    q = np.zeros((n * (n + n_l - 1), n_l))
    for j in range(n + n_l - 1):  # column of L
        for i in range(n):  # row of L
            k = n_l - 1 - (j - i)
            if 0 <= k < n_l:
                q[j * n + i, k] = 1.0
    return q


def kron_quadratic(e_matrix: np.ndarray, n_l: int) -> np.ndarray:
    """Literal Q' (I kron E) Q construction of the trace quadratic's matrix."""
    n = e_matrix.shape[0]
    q = selection_matrix(n_l, n)
    return q.T @ np.kron(np.eye(n + n_l - 1), e_matrix) @ q


def dense_error_matrix(r_matrix: np.ndarray) -> np.ndarray:
    """E = R inv(R'R) inv(R'R) R' computed the obvious dense way."""
    g = np.linalg.inv(r_matrix.T @ r_matrix)
    return r_matrix @ g @ g @ r_matrix.T


def ma_convolve(l: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Direct loop evaluation of w_t = sum_k l_k v_{t-k} with v = (v_{-m+2}..v_N)."""
    m = len(l)
    n = len(v) - m + 1
    w = np.zeros(n)
    for t in range(1, n + 1):
        for k in range(m):
            w[t - 1] += l[k] * v[t - k + m - 2]
    return w


def zero_state_convolution(r: np.ndarray, h: np.ndarray) -> np.ndarray:
    """y_t = sum_k h_k r_{t-k} with r_t = 0 for t <= 0, truncated to len(r)."""
    return np.convolve(r, h)[: len(r)]


def ball_samples(rng: np.random.Generator, count: int, dim: int, radius: float) -> np.ndarray:
    """Uniformly random points with norm at most ``radius`` (radius-biased is fine)."""
    directions = rng.standard_normal((count, dim))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    radii = radius * rng.random(count) ** (1.0 / dim)
    return directions * radii[:, None]


def sphere_samples(rng: np.random.Generator, count: int, dim: int, radius: float) -> np.ndarray:
    directions = rng.standard_normal((count, dim))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    return radius * directions


def random_regressor(rng: np.random.Generator, n: int, n_h: int) -> np.ndarray:
    """Well-conditioned random Toeplitz regressor for property tests."""
    while True:
        r = rng.standard_normal(n)
        mat = np.zeros((n, n_h))
        for j in range(n_h):
            mat[j:, j] = r[: n - j]
        if np.linalg.cond(mat.T @ mat) < 1e8:
            return mat
