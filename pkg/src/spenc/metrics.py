"""Positional-encoding property scores from identical-word probing.

The probe fills every position with one constant content vector so that only
positional structure shapes the attention matrix, then scores the causal,
unnormalized attention (row-softmax would mask translation behaviour):

* translation invariance: mean over query-key offsets of the coefficient of
  variation of attention along the offset's diagonal. Zero exactly when every
  diagonal is constant (Toeplitz attention); invariant under positive
  rescaling of the matrix.
* monotonicity: the fraction of signed variation of the mean diagonal profile
  that points upward. Zero when mean attention never grows with the offset,
  one when it never shrinks; invariant under positive rescaling and constant
  shifts.

Lower is better for both.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .attention import ape_sinusoidal, attention_matrix
from .codes import CodeMatrices, combine_qk
from .errors import NumericError
from .rng import PROBE_CONTENT, stream

_EPS = 1e-12


@dataclass(frozen=True, eq=False)
class ProbeConfig:
    """Query range, offset window, and the constant content vector."""

    query_lo: int
    query_hi: int
    offset_window: int
    content: np.ndarray

    def __post_init__(self):
        lo, hi, w = int(self.query_lo), int(self.query_hi), int(self.offset_window)
        if not 0 <= lo < hi:
            raise ValueError(f"need 0 <= query_lo < query_hi, got ({lo}, {hi})")
        if not 1 <= w <= hi:
            raise ValueError(f"offset window must lie in [1, {hi}], got {w}")
        content = np.asarray(self.content, dtype=np.float64)
        if content.ndim != 1 or content.size == 0 or not np.all(np.isfinite(content)):
            raise ValueError("content must be a finite 1-D vector")
        object.__setattr__(self, "query_lo", lo)
        object.__setattr__(self, "query_hi", hi)
        object.__setattr__(self, "offset_window", w)
        object.__setattr__(self, "content", content)


def default_probe_contents(dim: int, count: int = 8, seed: int = 0) -> np.ndarray:
    """Seeded unit-norm content vectors, one per row."""
    if count < 1:
        raise ValueError("need at least one content vector")
    vecs = stream(seed, PROBE_CONTENT).standard_normal((int(count), int(dim)))
    return vecs / np.linalg.norm(vecs, axis=1, keepdims=True)


def _restrict(a: np.ndarray, probe: ProbeConfig, window: bool) -> np.ndarray:
    if probe.query_hi > a.shape[0]:
        raise ValueError(
            f"probe window [{probe.query_lo}, {probe.query_hi}) exceeds the "
            f"{a.shape[0]} available query positions"
        )
    return a[probe.query_lo : probe.query_hi] if window else a


def probe_attention_spe(
    codes: CodeMatrices, probe: ProbeConfig, scale: float | None = None, window: bool = True
) -> np.ndarray:
    """Unnormalized causal attention of sampled codes under constant content.

    The content vector is broadcast to every query and key position, folded
    into the codes, and exponentiated at scale sqrt(R) unless overridden.
    With ``window`` the rows are restricted to the probe's query range
    (columns stay absolute key positions).
    """
    d, m, n, r = codes.dims
    if m != n:
        raise ValueError("probing assumes self-attention (equal query/key grids)")
    if probe.content.size != d:
        raise ValueError(f"content has {probe.content.size} entries for {d} code dimensions")
    content = np.tile(probe.content, (m, 1))
    q_hat, k_hat = combine_qk(content, content, codes)
    a = attention_matrix(q_hat, k_hat, scale if scale is not None else np.sqrt(r), causal=True)
    return _restrict(a, probe, window)


def probe_attention_from_kernels(kernels: np.ndarray, probe: ProbeConfig, window: bool = True) -> np.ndarray:
    """Closed-form counterpart of :func:`probe_attention_spe`.

    ``kernels`` is the (D, N, N) stack of expected position kernels; the
    exponent is their content-weighted combination at scale sqrt(D).
    """
    kernels = np.asarray(kernels, dtype=np.float64)
    if kernels.ndim != 3 or kernels.shape[1] != kernels.shape[2]:
        raise ValueError("kernels must be a (dims, n, n) stack")
    d = kernels.shape[0]
    if probe.content.size != d:
        raise ValueError(f"content has {probe.content.size} entries for {d} kernels")
    exponent = np.einsum("d,dmn->mn", probe.content**2, kernels) / np.sqrt(d)
    a = np.exp(exponent)
    if not np.all(np.isfinite(a)):
        raise NumericError("exp overflow in expected-kernel attention")
    return _restrict(np.tril(a), probe, window)


def probe_attention_ape(length: int, probe: ProbeConfig, window: bool = True) -> np.ndarray:
    """Unnormalized causal attention of the additive trigonometric baseline.

    Every position gets content + its absolute-position embedding; the
    exponent uses the content-dimension scale sqrt(D).
    """
    d = probe.content.size
    qk = probe.content[None, :] + ape_sinusoidal(length, d)
    a = attention_matrix(qk, qk, np.sqrt(d), causal=True)
    return _restrict(a, probe, window)


def _diagonal(a: np.ndarray, probe: ProbeConfig, tau: int) -> np.ndarray:
    """Entries a[m, m - tau] for in-range query positions m."""
    lo = max(probe.query_lo, tau)
    hi = min(probe.query_hi, a.shape[1] + tau)
    if lo >= hi:
        raise ValueError(f"offset {tau} has no in-bounds entries for this probe window")
    rows = np.arange(lo, hi)
    return a[rows, rows - tau]


def translation_invariance_score(a: np.ndarray, probe: ProbeConfig) -> float:
    """Mean coefficient of variation along each query-key offset diagonal.

    ``a`` holds attention for all query positions (row index = position).
    Zero iff every probed diagonal is constant; positive rescaling of ``a``
    leaves the score unchanged.
    """
    spreads = []
    for tau in range(probe.offset_window):
        vals = _diagonal(a, probe, tau)
        spreads.append(vals.std() / (np.abs(vals).mean() + _EPS))
    return float(np.mean(spreads))


def monotonicity_score(a: np.ndarray, probe: ProbeConfig) -> float:
    """Upward fraction of the signed variation of the mean diagonal profile.

    Zero iff mean attention is non-increasing in the offset, one iff
    non-decreasing; unchanged by positive rescaling or constant shifts.
    Needs an offset window of at least two.
    """
    if probe.offset_window < 2:
        raise ValueError("monotonicity needs an offset window of at least 2")
    profile = np.array([_diagonal(a, probe, tau).mean() for tau in range(probe.offset_window)])
    steps = np.diff(profile)
    return float(np.maximum(steps, 0.0).sum() / (np.abs(steps).sum() + _EPS))
