"""Stochastic positional codes realizing prescribed relative-attention kernels.

A position kernel assigns every (query position, key position) pair an
attention template value. Instead of materializing the M x N template, each
feature dimension ``d`` gets a pair of random code matrices ``Qbar_d``
(M x R) and ``Kbar_d`` (N x R) whose cross-product ``Qbar_d @ Kbar_d.T / R``
is an unbiased Monte Carlo estimate of the template. Dot-product attention on
codes therefore realizes the kernel on average while the full attention
matrix never has to be formed.

Two generators are provided:

* sinusoidal codes, whose kernel is a weighted sum of cosines of the
  query-key offset (periodic, works on irregular position sets), and
* convolutional codes, obtained by filtering shared white noise with a pair
  of FIR filters (kernel vanishes beyond the filter support, regular
  integer grids only).

Gating mixes each dimension's codes with one shared noise vector, which
interpolates the expected kernel toward the position-free all-ones template.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rng import CONV_NOISE, GATE_NOISE, SINE_NOISE, check_seed, stream


@dataclass(frozen=True, eq=False)
class IndexSet:
    """Strictly increasing positions at which codes are evaluated.

    Integer grids cover the usual token-sequence case; real-valued positions
    are allowed and only meaningful for the sinusoidal variant.
    """

    positions: np.ndarray

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=np.float64)
        if pos.ndim != 1 or pos.size < 1:
            raise ValueError("positions must be a non-empty 1-D sequence")
        if not np.all(np.isfinite(pos)):
            raise ValueError("positions must be finite")
        if pos.size > 1 and not np.all(np.diff(pos) > 0):
            raise ValueError("positions must be strictly increasing")
        object.__setattr__(self, "positions", pos)

    @classmethod
    def regular(cls, length: int, start: int = 0) -> "IndexSet":
        """The integer grid ``start .. start + length - 1``."""
        if length < 1:
            raise ValueError(f"length must be >= 1, got {length}")
        return cls(np.arange(start, start + length, dtype=np.float64))

    def __len__(self) -> int:
        return int(self.positions.size)


def _as_param_matrix(name: str, value) -> np.ndarray:
    out = np.atleast_2d(np.asarray(value, dtype=np.float64))
    if out.ndim != 2 or out.size == 0:
        raise ValueError(f"{name} must be a non-empty D x K array")
    if not np.all(np.isfinite(out)):
        raise ValueError(f"{name} must be finite")
    return out


@dataclass(frozen=True, eq=False)
class SineSpeParams:
    """Frequency/phase/gain triples defining a periodic position kernel.

    All three arrays share one ``(num_dims, num_sines)`` shape. Frequencies
    are in cycles per position step and must lie in [0, 1]; phases lie in
    [-pi, pi]. The kernel uses squared gains, so gain signs are irrelevant.
    """

    freqs: np.ndarray
    phases: np.ndarray
    gains: np.ndarray

    def __post_init__(self):
        f = _as_param_matrix("freqs", self.freqs)
        t = _as_param_matrix("phases", self.phases)
        g = _as_param_matrix("gains", self.gains)
        if not (f.shape == t.shape == g.shape):
            raise ValueError(
                f"freqs/phases/gains shapes disagree: {f.shape}, {t.shape}, {g.shape}"
            )
        if np.any(f < 0.0) or np.any(f > 1.0):
            raise ValueError("frequencies must lie in [0, 1]")
        if np.any(t < -np.pi) or np.any(t > np.pi):
            raise ValueError("phases must lie in [-pi, pi]")
        object.__setattr__(self, "freqs", f)
        object.__setattr__(self, "phases", t)
        object.__setattr__(self, "gains", g)

    @property
    def num_dims(self) -> int:
        return self.freqs.shape[0]

    @property
    def num_sines(self) -> int:
        return self.freqs.shape[1]


@dataclass(frozen=True, eq=False)
class ConvSpeParams:
    """Per-dimension FIR filter pairs defining a vanishing position kernel.

    Both filter banks are ``(num_dims, filter_len)``; a filter's support is
    its ``filter_len`` taps, so the expected kernel is exactly zero whenever
    the query-key offset magnitude reaches ``filter_len``.
    """

    filters_q: np.ndarray
    filters_k: np.ndarray

    def __post_init__(self):
        fq = _as_param_matrix("filters_q", self.filters_q)
        fk = _as_param_matrix("filters_k", self.filters_k)
        if fq.shape != fk.shape:
            raise ValueError(f"filter shapes disagree: {fq.shape} vs {fk.shape}")
        object.__setattr__(self, "filters_q", fq)
        object.__setattr__(self, "filters_k", fk)

    @property
    def num_dims(self) -> int:
        return self.filters_q.shape[0]

    @property
    def filter_len(self) -> int:
        return self.filters_q.shape[1]


@dataclass(frozen=True, eq=False)
class GateVector:
    """Per-dimension gates in [0, 1]; 0 keeps the kernel, 1 erases position."""

    deltas: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.deltas, dtype=np.float64)
        if d.ndim == 0:
            d = d[None]
        if d.ndim != 1 or d.size == 0 or not np.all(np.isfinite(d)):
            raise ValueError("deltas must be a non-empty finite 1-D array")
        if np.any(d < 0.0) or np.any(d > 1.0):
            raise ValueError("gate values must lie in [0, 1]")
        object.__setattr__(self, "deltas", d)

    def __len__(self) -> int:
        return int(self.deltas.size)


@dataclass(frozen=True)
class NoiseSpec:
    """Seeding and sharing policy for code generation.

    Identical spec + identical parameters gives bit-identical codes.
    ``batch_sharing`` records that one draw is reused across all examples of a
    batch (the memory-saving default); ``layer_sharing`` records that one draw
    is reused by all layers with per-layer gating. Both are caller policy
    flags: a single generation call always produces exactly one draw.
    """

    seed: int
    batch_sharing: bool = True
    layer_sharing: bool = False

    def __post_init__(self):
        check_seed(self.seed)


@dataclass(frozen=True, eq=False)
class CodeMatrices:
    """Sampled positional code stacks for D feature dimensions.

    ``q_codes`` has shape (D, M, R) and ``k_codes`` (D, N, R); entries are
    finite. ``variant``/``seed``/``gated`` record provenance of the draw.
    """

    q_codes: np.ndarray
    k_codes: np.ndarray
    variant: str
    seed: int
    gated: bool = False

    def __post_init__(self):
        q = np.asarray(self.q_codes, dtype=np.float64)
        k = np.asarray(self.k_codes, dtype=np.float64)
        if q.ndim != 3 or k.ndim != 3:
            raise ValueError("code stacks must be 3-D: (dims, positions, realizations)")
        if q.shape[0] != k.shape[0] or q.shape[2] != k.shape[2]:
            raise ValueError(
                f"query and key code stacks disagree: {q.shape} vs {k.shape}"
            )
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(k))):
            raise ValueError("code matrices must be finite")
        object.__setattr__(self, "q_codes", q)
        object.__setattr__(self, "k_codes", k)

    @property
    def dims(self) -> tuple[int, int, int, int]:
        """(D, M, N, R)."""
        d, m, r = self.q_codes.shape
        return d, m, self.k_codes.shape[1], r


def _positions(index_set) -> np.ndarray:
    if isinstance(index_set, IndexSet):
        return index_set.positions
    return IndexSet(np.asarray(index_set, dtype=np.float64)).positions


def build_omega(index_set, freqs, phases) -> np.ndarray:
    """Interleaved cosine/sine evaluation matrix of shape ``|I| x 2K``.

    Column ``2k`` holds ``cos(2*pi*freqs[k]*position + phases[k])`` and column
    ``2k + 1`` the matching sine, one row per position.
    """
    pos = _positions(index_set)
    f = np.asarray(freqs, dtype=np.float64)
    t = np.asarray(phases, dtype=np.float64)
    if f.shape != t.shape or f.ndim != 1 or f.size < 1:
        raise ValueError(f"freqs and phases must be equal-length 1-D arrays, got {f.shape} and {t.shape}")
    angles = 2.0 * np.pi * pos[:, None] * f[None, :] + t[None, :]
    out = np.empty((pos.size, 2 * f.size))
    out[:, 0::2] = np.cos(angles)
    out[:, 1::2] = np.sin(angles)
    return out


def _check_realizations(num_realizations: int) -> int:
    num_realizations = int(num_realizations)
    if num_realizations < 1:
        raise ValueError(f"need at least one realization, got {num_realizations}")
    return num_realizations


def draw_sine_codes(
    params: SineSpeParams,
    query_positions,
    key_positions,
    num_realizations: int,
    noise: NoiseSpec,
) -> CodeMatrices:
    """Sample sinusoidal positional codes.

    For each dimension one 2K x R standard-normal matrix is shared by the
    query and key codes; that sharing is what makes ``Qbar_d @ Kbar_d.T / R``
    an unbiased estimate of the dimension's cosine kernel. Query codes carry
    the phases, key codes use zero phase, so the phase shift lands on the
    query-key offset. Dimensions draw from independent streams keyed by the
    master seed and the dimension index.
    """
    r = _check_realizations(num_realizations)
    qpos = _positions(query_positions)
    kpos = _positions(key_positions)
    d_dims, k_sines = params.freqs.shape
    zero_phases = np.zeros(k_sines)
    q_codes = np.empty((d_dims, qpos.size, r))
    k_codes = np.empty((d_dims, kpos.size, r))
    for d in range(d_dims):
        # gains repeat per cosine/sine column pair
        gains2 = np.repeat(params.gains[d], 2)
        z = stream(noise.seed, SINE_NOISE, d).standard_normal((2 * k_sines, r))
        scaled = gains2[:, None] * z
        q_codes[d] = build_omega(qpos, params.freqs[d], params.phases[d]) @ scaled
        k_codes[d] = build_omega(kpos, params.freqs[d], zero_phases) @ scaled
    return CodeMatrices(q_codes, k_codes, variant="sine", seed=noise.seed)


def _apply_fir(noise: np.ndarray, taps: np.ndarray, length: int) -> np.ndarray:
    # noise row t + P - 1 holds position t; tap p weights position t - p
    p_len = taps.size
    out = taps[0] * noise[p_len - 1 : p_len - 1 + length]
    for p in range(1, p_len):
        out += taps[p] * noise[p_len - 1 - p : p_len - 1 - p + length]
    return out


def draw_conv_codes(
    params: ConvSpeParams,
    length: int,
    num_realizations: int,
    noise: NoiseSpec,
) -> CodeMatrices:
    """Sample convolutional positional codes for self-attention on 0..length-1.

    Each dimension draws one (length + P - 1) x R white-noise matrix covering
    positions -(P-1)..length-1, then filters it with the query and key taps.
    Padding the noise instead of the output keeps every position's code a
    full-window filter response, so the sampled covariance stays stationary
    at the sequence edges.
    """
    r = _check_realizations(num_realizations)
    length = int(length)
    if length < 1:
        raise ValueError(f"length must be >= 1, got {length}")
    d_dims, p_len = params.filters_q.shape
    q_codes = np.empty((d_dims, length, r))
    k_codes = np.empty((d_dims, length, r))
    for d in range(d_dims):
        z = stream(noise.seed, CONV_NOISE, d).standard_normal((length + p_len - 1, r))
        q_codes[d] = _apply_fir(z, params.filters_q[d], length)
        k_codes[d] = _apply_fir(z, params.filters_k[d], length)
    return CodeMatrices(q_codes, k_codes, variant="conv", seed=noise.seed)


def gate_codes(codes: CodeMatrices, gates: GateVector, noise: NoiseSpec) -> CodeMatrices:
    """Mix each dimension's codes with one shared standard-normal vector.

    Every query and key row of dimension d becomes
    ``sqrt(1 - delta_d) * row + sqrt(delta_d) * eps_d`` with the same length-R
    vector ``eps_d`` on both sides, so the expected kernel becomes
    ``delta_d + (1 - delta_d) * kernel_d``. A zero gate returns the rows
    untouched, bit for bit; a unit gate collapses every row to ``eps_d``.
    """
    d_dims, _, _, r = codes.dims
    if len(gates) != d_dims:
        raise ValueError(f"got {len(gates)} gates for {d_dims} code dimensions")
    q_codes = codes.q_codes.copy()
    k_codes = codes.k_codes.copy()
    for d in range(d_dims):
        delta = gates.deltas[d]
        if delta == 0.0:
            continue
        eps = stream(noise.seed, GATE_NOISE, d).standard_normal(r)
        keep = np.sqrt(1.0 - delta)
        mix = np.sqrt(delta)
        q_codes[d] = keep * q_codes[d] + mix * eps[None, :]
        k_codes[d] = keep * k_codes[d] + mix * eps[None, :]
    return CodeMatrices(q_codes, k_codes, variant=codes.variant, seed=codes.seed, gated=True)


def combine_qk(queries: np.ndarray, keys: np.ndarray, codes: CodeMatrices):
    """Fold content queries/keys into the positional codes.

    Returns ``(Qhat, Khat)`` of shapes M x R and N x R with
    ``Qhat = sum_d diag(queries[:, d]) @ Qbar_d / (D*R)**0.25`` and likewise
    for keys. As R grows, ``Qhat @ Khat.T / sqrt(R)`` approximates the
    attention-domain combination ``sum_d diag(q_d) P_d diag(k_d) / sqrt(D)``
    of the D position templates, activated by the content.
    """
    q = np.asarray(queries, dtype=np.float64)
    k = np.asarray(keys, dtype=np.float64)
    d_dims, m, n, r = codes.dims
    if q.ndim != 2 or q.shape != (m, d_dims):
        raise ValueError(f"queries must have shape {(m, d_dims)}, got {q.shape}")
    if k.ndim != 2 or k.shape != (n, d_dims):
        raise ValueError(f"keys must have shape {(n, d_dims)}, got {k.shape}")
    scale = (d_dims * r) ** 0.25
    q_hat = np.einsum("md,dmr->mr", q, codes.q_codes) / scale
    k_hat = np.einsum("nd,dnr->nr", k, codes.k_codes) / scale
    return q_hat, k_hat


def _check_dim(codes: CodeMatrices, d: int) -> int:
    d = int(d)
    if not 0 <= d < codes.dims[0]:
        raise IndexError(f"dimension {d} out of range for {codes.dims[0]} code dimensions")
    return d


def estimate_kernel(codes: CodeMatrices, d: int) -> np.ndarray:
    """Monte Carlo kernel estimate ``Qbar_d @ Kbar_d.T / R`` for dimension d."""
    d = _check_dim(codes, d)
    r = codes.dims[3]
    return codes.q_codes[d] @ codes.k_codes[d].T / r


def estimate_cross_term(codes: CodeMatrices, d: int, d_other: int) -> np.ndarray:
    """Cross product ``Qbar_d @ Kbar_{d'}.T / R`` between distinct dimensions.

    Converges to zero as R grows because the dimensions' noise is
    independent; exposed for verifying that decay.
    """
    d = _check_dim(codes, d)
    d_other = _check_dim(codes, d_other)
    if d == d_other:
        raise ValueError(f"cross term needs two distinct dimensions, got d={d} twice")
    r = codes.dims[3]
    return codes.q_codes[d] @ codes.k_codes[d_other].T / r


def expected_kernel_sine(
    params: SineSpeParams, d: int, query_positions, key_positions
) -> np.ndarray:
    """Closed-form sinusoidal kernel matrix for dimension d.

    Entry (m, n) is ``sum_k gains[d,k]**2 * cos(2*pi*freqs[d,k]*(m - n)
    + phases[d,k])`` evaluated at the given positions; on a shared regular
    grid the result is exactly Toeplitz.
    """
    d = int(d)
    if not 0 <= d < params.num_dims:
        raise IndexError(f"dimension {d} out of range for {params.num_dims} dimensions")
    tau = _positions(query_positions)[:, None] - _positions(key_positions)[None, :]
    out = np.zeros_like(tau)
    for k in range(params.num_sines):
        out += params.gains[d, k] ** 2 * np.cos(
            2.0 * np.pi * params.freqs[d, k] * tau + params.phases[d, k]
        )
    return out


def conv_kernel_offsets(filters_q: np.ndarray, filters_k: np.ndarray, offsets) -> np.ndarray:
    """Filter cross-correlation ``sum_p q[p + offset] * k[p]`` per offset.

    Taps outside ``0..P-1`` count as zero, so the value is exactly 0 whenever
    ``|offset| >= P``.
    """
    q = np.asarray(filters_q, dtype=np.float64)
    k = np.asarray(filters_k, dtype=np.float64)
    if q.shape != k.shape or q.ndim != 1 or q.size < 1:
        raise ValueError("filters must be equal-length 1-D arrays")
    p_len = q.size
    offsets = np.asarray(offsets, dtype=np.int64)
    out = np.zeros(offsets.shape, dtype=np.float64)
    for j, tau in enumerate(offsets.ravel()):
        if tau >= 0:
            width = p_len - tau
            if width > 0:
                out.ravel()[j] = np.dot(q[tau:], k[:width])
        else:
            width = p_len + tau
            if width > 0:
                out.ravel()[j] = np.dot(q[:width], k[-tau:])
    return out


def expected_kernel_conv(params: ConvSpeParams, d: int, length: int) -> np.ndarray:
    """Closed-form convolutional kernel matrix for dimension d.

    Built from per-offset values, so the result is exactly Toeplitz and
    exactly zero wherever the offset magnitude reaches the filter length.
    """
    d = int(d)
    if not 0 <= d < params.num_dims:
        raise IndexError(f"dimension {d} out of range for {params.num_dims} dimensions")
    length = int(length)
    if length < 1:
        raise ValueError(f"length must be >= 1, got {length}")
    offs = np.arange(-(length - 1), length)
    vals = conv_kernel_offsets(params.filters_q[d], params.filters_k[d], offs)
    idx = np.arange(length)[:, None] - np.arange(length)[None, :] + (length - 1)
    return vals[idx]


def expected_kernel_gated(kernel: np.ndarray, delta: float) -> np.ndarray:
    """Gate a kernel matrix: entrywise ``delta + (1 - delta) * kernel``."""
    delta = float(delta)
    if not 0.0 <= delta <= 1.0:
        raise ValueError(f"gate must lie in [0, 1], got {delta}")
    return delta + (1.0 - delta) * np.asarray(kernel, dtype=np.float64)
