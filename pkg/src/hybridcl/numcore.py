"""Numeric primitives shared by the rest of the package."""

from __future__ import annotations

import numpy as np

from .errors import DimMismatch, EmptyList, ZeroRow

ZERO_ROW_TOL = 1e-12


def as_matrix(m) -> np.ndarray:
    """Coerce to a 2-D float64 array (a single vector becomes one row)."""
    a = np.asarray(m, dtype=np.float64)
    if a.ndim == 1:
        a = a[None, :]
    if a.ndim != 2:
        raise DimMismatch(f"expected a 2-D matrix, got shape {a.shape}")
    return a


def l2_normalize(m) -> np.ndarray:
    """Divide every row by its Euclidean norm.

    Raises ZeroRow when a row norm falls below 1e-12.
    """
    a = as_matrix(m)
    norms = np.sqrt(np.einsum("ij,ij->i", a, a))
    bad = np.flatnonzero(norms < ZERO_ROW_TOL)
    if bad.size:
        raise ZeroRow(f"row {int(bad[0])} has norm {norms[bad[0]]:.3g}")
    out = a / norms[:, None]
    # A second pass makes the operation idempotent to the last bit in practice.
    norms2 = np.sqrt(np.einsum("ij,ij->i", out, out))
    return out / norms2[:, None]


def is_unit_norm(m, tol: float = 1e-6) -> bool:
    a = as_matrix(m)
    return bool(np.all(np.abs(np.linalg.norm(a, axis=1) - 1.0) <= tol))


def cosine_similarity(a, b) -> np.ndarray:
    """Inner products between unit-norm rows of ``a`` and ``b``."""
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[1]:
        raise DimMismatch(f"dimension {a.shape[1]} vs {b.shape[1]}")
    return a @ b.T


def log_sum_exp(values) -> float:
    """``log(sum(exp(values)))`` with max subtraction."""
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size == 0:
        raise EmptyList("log_sum_exp of an empty list")
    return float(rows_log_sum_exp(v[None, :])[0])


def rows_log_sum_exp(x: np.ndarray) -> np.ndarray:
    """Row-wise log-sum-exp; ``-inf`` entries are treated as absent.

    The maximal term contributes exactly 1, so the remainder goes through
    ``log1p`` and small excesses over the maximum keep full precision.
    """
    x = np.asarray(x)
    arg = np.argmax(x, axis=1)
    rows = np.arange(x.shape[0])
    m = x[rows, arg]
    e = np.exp(x - m[:, None])
    e[rows, arg] = 0.0
    return m + np.log1p(e.sum(axis=1))


def make_rng(seed: int | np.random.SeedSequence) -> np.random.Generator:
    if isinstance(seed, np.random.SeedSequence):
        return np.random.Generator(np.random.PCG64(seed))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed))))


def split_seed(seed: int | np.random.SeedSequence, n: int) -> list[np.random.SeedSequence]:
    """Derive ``n`` independent child seed sequences from one seed."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(int(seed))
    return ss.spawn(n)
