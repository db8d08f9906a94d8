"""Momentum memory bank holding one unit-norm feature per dataset sample."""

from __future__ import annotations

import numpy as np

from .errors import DimMismatch, DuplicateIndex, GammaOutOfRange, IndexOutOfRange
from .numcore import as_matrix, l2_normalize

DEFAULT_GAMMA = 0.2


class MemoryBank:
    """Per-sample feature store updated as ``normalize(g * f_x + (1 - g) * f_M)``.

    Row ``i`` always belongs to dataset sample ``i``. The bank is owned by a
    single writer; readers should work on :meth:`snapshot` copies.
    """

    def __init__(self, features, gamma: float = DEFAULT_GAMMA):
        gamma = float(gamma)
        if not 0.0 <= gamma <= 1.0:
            raise GammaOutOfRange(f"gamma={gamma} not in [0, 1]")
        self.gamma = gamma
        self._features = l2_normalize(features)

    @property
    def n(self) -> int:
        return self._features.shape[0]

    @property
    def d(self) -> int:
        return self._features.shape[1]

    def update(self, indices, batch_features) -> None:
        idx = np.asarray(indices, dtype=np.int64).ravel()
        fx = as_matrix(batch_features)
        if fx.shape[0] != idx.size:
            raise DimMismatch(f"{idx.size} indices but {fx.shape[0]} feature rows")
        if fx.shape[1] != self.d:
            raise DimMismatch(f"feature dim {fx.shape[1]} != bank dim {self.d}")
        if idx.size == 0:
            return
        if idx.min() < 0 or idx.max() >= self.n:
            raise IndexOutOfRange(f"indices must lie in [0, {self.n})")
        if np.unique(idx).size != idx.size:
            raise DuplicateIndex("duplicate sample ids within one update")
        if self.gamma == 0.0:
            # renormalizing an already unit row can still move its last bit
            return
        blend = self.gamma * fx + (1.0 - self.gamma) * self._features[idx]
        self._features[idx] = l2_normalize(blend)

    def refresh(self, indices, features) -> None:
        """Overwrite rows outright (no momentum), e.g. rows no batch has visited."""
        idx = np.asarray(indices, dtype=np.int64).ravel()
        if idx.size == 0:
            return
        if idx.min() < 0 or idx.max() >= self.n:
            raise IndexOutOfRange(f"indices must lie in [0, {self.n})")
        self._features[idx] = l2_normalize(features)

    def snapshot(self) -> np.ndarray:
        out = self._features.copy()
        out.flags.writeable = False
        return out


def init(features, gamma: float = DEFAULT_GAMMA) -> MemoryBank:
    return MemoryBank(features, gamma)


def update(bank: MemoryBank, indices, batch_features) -> MemoryBank:
    bank.update(indices, batch_features)
    return bank


def snapshot(bank: MemoryBank) -> np.ndarray:
    return bank.snapshot()
