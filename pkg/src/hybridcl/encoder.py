"""Feed-forward encoder with hand-written backprop, and an Adam optimizer."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigInvalid, DimMismatch, FormatError, NoCachedForward, ShapeMismatch
from .numcore import as_matrix, l2_normalize

PARAM_MAGIC = b"ENCP"
PARAM_VERSION = 1


@dataclass(frozen=True)
class EncoderConfig:
    layer_sizes: tuple = (32, 64, 32)
    identity_mode: bool = False
    init: str = "mirrored"

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        object.__setattr__(self, "layer_sizes", sizes)
        if len(sizes) < 2 or min(sizes) < 1:
            raise ConfigInvalid(f"layer_sizes needs >= 2 positive entries, got {list(sizes)}")
        if self.identity_mode and sizes[0] != sizes[-1]:
            raise ConfigInvalid("identity_mode requires input and output sizes to match")
        if self.init not in ("mirrored", "he"):
            raise ConfigInvalid(f"init must be 'mirrored' or 'he', got {self.init!r}")
        if self.init == "mirrored" and any(h % 2 for h in sizes[1:-1]):
            raise ConfigInvalid("mirrored init needs even hidden widths")


@dataclass(frozen=True)
class AdamConfig:
    lr: float = 3.5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 5e-4

    def __post_init__(self):
        if not self.lr >= 0:
            raise ConfigInvalid(f"lr must be non-negative, got {self.lr}")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ConfigInvalid("beta1 and beta2 must lie in (0, 1)")
        if self.weight_decay < 0:
            raise ConfigInvalid("weight_decay must be non-negative")


def _mirrored(rng, fan_in, fan_out, std, first, last):
    """Looks-linear block: hidden units come in (+u, -u) pairs.

    With ReLU, ``relu(u) - relu(-u) = u``, so the untrained network is a random
    linear map instead of a cone-compressing one.
    """
    rows = fan_in if first else fan_in // 2
    cols = fan_out if last else fan_out // 2
    base = rng.normal(0.0, std, size=(rows, cols))
    if not first:
        base = np.vstack([base, -base])
    if not last:
        base = np.hstack([base, -base])
    return base


class Encoder:
    """Linear layers with ReLU in between; the output is L2-normalized.

    Parameters live in ``self.params`` as ``[W1, b1, W2, b2, ...]`` with
    ``W`` shaped ``(fan_in, fan_out)``.
    """

    def __init__(self, cfg: EncoderConfig, rng: np.random.Generator | None = None):
        self.cfg = cfg
        self.params: list[np.ndarray] = []
        self._cache = None
        if cfg.identity_mode:
            return
        if rng is None:
            rng = np.random.default_rng(0)
        sizes = cfg.layer_sizes
        last = len(sizes) - 2
        for layer, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            std = np.sqrt(2.0 / fan_in)
            if cfg.init == "he":
                w = rng.normal(0.0, std, size=(fan_in, fan_out))
            else:
                w = _mirrored(rng, fan_in, fan_out, std, layer == 0, layer == last)
            self.params.append(w)
            self.params.append(np.zeros(fan_out))

    @property
    def d_in(self) -> int:
        return self.cfg.layer_sizes[0]

    @property
    def d_out(self) -> int:
        return self.cfg.layer_sizes[-1]

    def forward(self, raw, jitter_sigma: float = 0.0, rng: np.random.Generator | None = None):
        x = as_matrix(raw)
        if x.shape[1] != self.d_in:
            raise DimMismatch(f"input dim {x.shape[1]} != encoder input {self.d_in}")
        if jitter_sigma > 0:
            if rng is None:
                raise ValueError("jitter needs an rng")
            x = x + rng.normal(0.0, jitter_sigma, size=x.shape)
        acts = [x]
        h = x
        n_layers = len(self.params) // 2
        for layer in range(n_layers):
            w, b = self.params[2 * layer], self.params[2 * layer + 1]
            h = h @ w + b
            if layer < n_layers - 1:
                h = np.maximum(h, 0.0)
            acts.append(h)
        norm = np.sqrt(np.einsum("ij,ij->i", h, h))
        y = l2_normalize(h) if self.cfg.identity_mode else h / norm[:, None]
        self._cache = (acts, norm, y)
        return y

    def backward(self, upstream) -> list[np.ndarray]:
        if self._cache is None:
            raise NoCachedForward("backward called before forward")
        acts, norm, y = self._cache
        g = as_matrix(upstream)
        if g.shape != y.shape:
            raise ShapeMismatch(f"upstream grad {g.shape} vs output {y.shape}")
        # d(z/|z|) removes the radial component and scales by 1/|z|
        g = (g - np.einsum("ij,ij->i", g, y)[:, None] * y) / norm[:, None]
        n_layers = len(self.params) // 2
        grads: list[np.ndarray] = [None] * len(self.params)
        for layer in reversed(range(n_layers)):
            if layer < n_layers - 1:
                g = g * (acts[layer + 1] > 0)
            grads[2 * layer] = acts[layer].T @ g
            grads[2 * layer + 1] = g.sum(axis=0)
            g = g @ self.params[2 * layer].T
        return grads

    def to_bytes(self) -> bytes:
        """Little-endian blob: magic, version, identity flag, layer sizes, float64 params."""
        sizes = self.cfg.layer_sizes
        out = [PARAM_MAGIC, struct.pack("<HBI", PARAM_VERSION, int(self.cfg.identity_mode), len(sizes))]
        out.append(struct.pack(f"<{len(sizes)}I", *sizes))
        for p in self.params:
            out.append(np.ascontiguousarray(p, dtype="<f8").tobytes())
        return b"".join(out)

    @classmethod
    def from_bytes(cls, blob: bytes) -> "Encoder":
        if blob[:4] != PARAM_MAGIC:
            raise FormatError(f"expected magic {PARAM_MAGIC!r}", 0)
        if len(blob) < 11:
            raise FormatError("truncated header", len(blob))
        version, ident, n_sizes = struct.unpack_from("<HBI", blob, 4)
        if version != PARAM_VERSION:
            raise FormatError(f"unsupported version {version}", 4)
        off = 11
        if len(blob) < off + 4 * n_sizes:
            raise FormatError("truncated layer sizes", len(blob))
        sizes = struct.unpack_from(f"<{n_sizes}I", blob, off)
        off += 4 * n_sizes
        # init scheme is irrelevant once weights are loaded
        enc = cls(EncoderConfig(sizes, bool(ident), init="he"))
        if not ident:
            params = []
            for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
                for shape in ((fan_in, fan_out), (fan_out,)):
                    nbytes = 8 * int(np.prod(shape))
                    if len(blob) < off + nbytes:
                        raise FormatError("truncated parameters", len(blob))
                    params.append(np.frombuffer(blob, "<f8", int(np.prod(shape)), off)
                                  .reshape(shape).astype(np.float64))
                    off += nbytes
            enc.params = params
        if off != len(blob):
            raise FormatError("trailing bytes after parameters", off)
        return enc


@dataclass
class Adam:
    """Adam with decoupled weight decay (shrink first, then the Adam step)."""

    cfg: AdamConfig
    step_count: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        if len(params) != len(grads):
            raise ShapeMismatch(f"{len(params)} params vs {len(grads)} grads")
        for p, g in zip(params, grads):
            if p.shape != np.shape(g):
                raise ShapeMismatch(f"param {p.shape} vs grad {np.shape(g)}")
        if not self.m:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        c = self.cfg
        self.step_count += 1
        bc1 = 1.0 - c.beta1 ** self.step_count
        bc2 = 1.0 - c.beta2 ** self.step_count
        for p, g, m, v in zip(params, grads, self.m, self.v):
            if c.weight_decay:
                p *= 1.0 - c.lr * c.weight_decay
            m *= c.beta1
            m += (1.0 - c.beta1) * g
            v *= c.beta2
            v += (1.0 - c.beta2) * g * g
            p -= c.lr * (m / bc1) / (np.sqrt(v / bc2) + c.eps)
