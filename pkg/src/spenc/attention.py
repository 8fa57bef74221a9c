"""Feature maps, linear-complexity attention, and quadratic reference paths.

Linear attention never forms the M x N attention matrix: with non-negative
feature maps ``phi``, the output is ``diag(d)^-1 [phi(Q) (phi(K)^T V)]`` and
the contraction ``phi(K)^T V`` comes first, which is the entire source of the
O(N) complexity. The quadratic softmax oracle and the explicit
attention-matrix builder exist for verification and inspection only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateAttentionError, NumericError
from .rng import FEATURE_PROJECTION, check_seed, stream

FEATURE_KINDS = ("relu", "positive-random-features", "identity")


@dataclass(frozen=True)
class FeatureMapSpec:
    """Choice of the non-linearity applied to queries and keys.

    ``relu`` and ``identity`` are deterministic; ``positive-random-features``
    draws an ``num_features x input_width`` standard-normal projection from
    ``seed`` and produces strictly positive features whose inner products
    reproduce the exponential (softmax) kernel in expectation.
    """

    kind: str
    num_features: int | None = None
    seed: int | None = None

    def __post_init__(self):
        if self.kind not in FEATURE_KINDS:
            raise ValueError(f"unknown feature map {self.kind!r}; choose one of {FEATURE_KINDS}")
        if self.kind == "positive-random-features":
            if self.num_features is None or int(self.num_features) < 1:
                raise ValueError("positive-random-features needs num_features >= 1")
            if self.seed is None:
                raise ValueError("positive-random-features needs a seed")
            check_seed(self.seed)


def feature_map_apply(spec: FeatureMapSpec, x: np.ndarray) -> np.ndarray:
    """Apply the feature map row-wise to a ``rows x width`` matrix.

    For positive random features the map is
    ``exp(W x - |x|^2 / 2) / sqrt(F)``. A single non-negative shift (the
    maximum exponent over the whole call, clamped at zero) is subtracted
    before exponentiation: it rescales every feature by one common factor,
    which cancels in normalized attention and prevents overflow for large
    inputs while leaving small-input values exactly equal to the formula.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"expected a 2-D input, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise NumericError("feature map input contains non-finite values")
    if spec.kind == "identity":
        return x
    if spec.kind == "relu":
        return np.maximum(x, 0.0)
    w = stream(spec.seed, FEATURE_PROJECTION).standard_normal((int(spec.num_features), x.shape[1]))
    exponent = x @ w.T - 0.5 * np.sum(x * x, axis=1, keepdims=True)
    shift = max(float(exponent.max()), 0.0)
    return np.exp(exponent - shift) / np.sqrt(float(spec.num_features))


def _check_normalizers(den: np.ndarray) -> None:
    bad = np.flatnonzero(~(den > 0.0))
    if bad.size:
        raise DegenerateAttentionError(int(bad[0]), float(den[bad[0]]))


def linear_attention(phi_q: np.ndarray, phi_k: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Non-causal linear attention over featurized queries and keys.

    Contracts keys with values first (F x Dv running sum), then applies the
    queries, then normalizes each output row by its total attention mass.
    Rows with non-positive mass raise, identifying the offending row.
    """
    phi_q, phi_k, values = _check_attention_inputs(phi_q, phi_k, values)
    kv = phi_k.T @ values
    key_mass = phi_k.sum(axis=0)
    den = phi_q @ key_mass
    _check_normalizers(den)
    return (phi_q @ kv) / den[:, None]


def causal_linear_attention(
    phi_q: np.ndarray, phi_k: np.ndarray, values: np.ndarray, block: int = 256
) -> np.ndarray:
    """Causal linear attention: row m sees keys/values at positions <= m.

    One forward pass maintains the running key-value sum (F x Dv) and the
    running key mass (F); within a block the running sums are materialized
    with a cumulative sum so the pass stays vectorized without ever holding
    the full N x F x Dv stack.
    """
    phi_q, phi_k, values = _check_attention_inputs(phi_q, phi_k, values)
    n = phi_q.shape[0]
    if phi_k.shape[0] != n:
        raise ValueError("causal attention needs equally many queries and keys")
    f = phi_q.shape[1]
    dv = values.shape[1]
    out_num = np.empty((n, dv))
    den = np.empty(n)
    carry_kv = np.zeros((f, dv))
    carry_mass = np.zeros(f)
    for start in range(0, n, block):
        stop = min(start + block, n)
        qb = phi_q[start:stop]
        kb = phi_k[start:stop]
        vb = values[start:stop]
        kv_local = np.cumsum(kb[:, :, None] * vb[:, None, :], axis=0)
        mass_local = np.cumsum(kb, axis=0)
        out_num[start:stop] = np.einsum("bf,bfv->bv", qb, kv_local) + qb @ carry_kv
        den[start:stop] = np.einsum("bf,bf->b", qb, mass_local) + qb @ carry_mass
        carry_kv += kv_local[-1]
        carry_mass += mass_local[-1]
    _check_normalizers(den)
    return out_num / den[:, None]


def _check_attention_inputs(phi_q, phi_k, values):
    phi_q = np.asarray(phi_q, dtype=np.float64)
    phi_k = np.asarray(phi_k, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if phi_q.ndim != 2 or phi_k.ndim != 2 or values.ndim != 2:
        raise ValueError("queries, keys and values must be 2-D matrices")
    if phi_q.shape[1] != phi_k.shape[1]:
        raise ValueError(
            f"query/key feature widths disagree: {phi_q.shape[1]} vs {phi_k.shape[1]}"
        )
    if values.shape[0] != phi_k.shape[0]:
        raise ValueError(
            f"values rows ({values.shape[0]}) must match keys rows ({phi_k.shape[0]})"
        )
    return phi_q, phi_k, values


def attention_matrix(
    qh: np.ndarray,
    kh: np.ndarray,
    scale: float,
    normalized: bool = False,
    causal: bool = False,
) -> np.ndarray:
    """Explicit attention matrix ``exp(qh @ kh.T / scale)``.

    The caller supplies the scale (content attention and code attention use
    different conventions, and this module never guesses). A causal mask
    zeroes everything above the diagonal; row-softmax is applied only when
    ``normalized`` is set. Quadratic in memory; verification use only.
    """
    qh = np.asarray(qh, dtype=np.float64)
    kh = np.asarray(kh, dtype=np.float64)
    if qh.ndim != 2 or kh.ndim != 2 or qh.shape[1] != kh.shape[1]:
        raise ValueError(f"incompatible query/key shapes {qh.shape} and {kh.shape}")
    scale = float(scale)
    if not scale > 0.0:
        raise ValueError(f"scale must be positive, got {scale}")
    if causal and qh.shape[0] != kh.shape[0]:
        raise ValueError("causal masking needs equally many queries and keys")
    with np.errstate(over="ignore"):
        a = np.exp(qh @ kh.T / scale)
    if not np.all(np.isfinite(a)):
        raise NumericError("exp overflow in attention scores; pre-scale the inputs")
    if causal:
        a = np.tril(a)
    if normalized:
        mass = a.sum(axis=1)
        _check_normalizers(mass)
        a = a / mass[:, None]
    return a


def full_attention_oracle(
    qh: np.ndarray,
    kh: np.ndarray,
    values: np.ndarray,
    scale: float,
    causal: bool = False,
) -> np.ndarray:
    """Quadratic softmax attention reference: row-normalized exp scores times values."""
    values = np.asarray(values, dtype=np.float64)
    a = attention_matrix(qh, kh, scale, normalized=True, causal=causal)
    if values.ndim != 2 or values.shape[0] != a.shape[1]:
        raise ValueError(f"values must have {a.shape[1]} rows, got shape {values.shape}")
    return a @ values


def ape_sinusoidal(length: int, dim: int) -> np.ndarray:
    """Deterministic trigonometric absolute-position embeddings.

    Entry (n, 2i) is ``sin(n / 10000**(2i/dim))`` and entry (n, 2i + 1) the
    matching cosine; ``dim`` must be even.
    """
    length = int(length)
    dim = int(dim)
    if length < 1:
        raise ValueError(f"length must be >= 1, got {length}")
    if dim < 2 or dim % 2:
        raise ValueError(f"embedding dim must be a positive even number, got {dim}")
    inv_freq = 10000.0 ** (-2.0 * np.arange(dim // 2) / dim)
    angles = np.arange(length)[:, None] * inv_freq[None, :]
    out = np.empty((length, dim))
    out[:, 0::2] = np.sin(angles)
    out[:, 1::2] = np.cos(angles)
    return out
