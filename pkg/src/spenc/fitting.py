"""Fit positional-kernel parameters to a prescribed stationary target.

The loss is a weighted sum of squared deviations between the model kernel
and the target over a window of integer offsets, minimized by full-batch
gradient descent with a backtracking line search (deterministic, monotone in
the recorded loss). Frequencies and gates live on unconstrained scales and
are squashed into their domains when evaluated, so the descent itself is
unconstrained; gains are used squared, so their sign never matters.

Analytic kernel gradients are exposed separately so they can be checked
against the central finite-difference oracle, which is also provided here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .codes import ConvSpeParams, SineSpeParams, conv_kernel_offsets
from .errors import DivergenceError
from .rng import FIT_INIT, check_seed, stream

MODEL_KINDS = ("sine", "conv", "gated-sine", "gated-conv")


@dataclass(frozen=True, eq=False)
class KernelTarget:
    """Target kernel values over a strictly increasing window of integer offsets."""

    offsets: np.ndarray
    values: np.ndarray
    weights: np.ndarray | None = None

    def __post_init__(self):
        offs = np.asarray(self.offsets)
        if offs.ndim != 1 or offs.size == 0:
            raise ValueError("offsets must be a non-empty 1-D sequence")
        if not np.all(offs == np.round(offs)):
            raise ValueError("offsets must be integers")
        offs = offs.astype(np.int64)
        if offs.size > 1 and not np.all(np.diff(offs) > 0):
            raise ValueError("offsets must be strictly increasing")
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.shape != offs.shape or not np.all(np.isfinite(vals)):
            raise ValueError("values must be finite and match offsets in length")
        if self.weights is None:
            w = np.ones_like(vals)
        else:
            w = np.asarray(self.weights, dtype=np.float64)
            if w.shape != offs.shape or not np.all(np.isfinite(w)) or np.any(w < 0):
                raise ValueError("weights must be non-negative and match offsets in length")
        object.__setattr__(self, "offsets", offs)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "weights", w)


@dataclass(frozen=True)
class FitConfig:
    learning_rate: float = 0.1
    max_iters: int = 2000
    init_seed: int = 0
    restarts: int = 4
    tolerance: float = 1e-12

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        check_seed(self.init_seed)


def sine_kernel_grads(freqs, phases, gains, offsets):
    """Cosine-kernel values and analytic partials over offsets.

    Returns ``(values, d_gains, d_freqs, d_phases)`` where ``values`` has one
    entry per offset and each partial array is ``K x num_offsets``:

    * value(tau)  = sum_k gains[k]^2 cos(2 pi freqs[k] tau + phases[k])
    * d/d gain_k  = 2 gains[k] cos(...)
    * d/d freq_k  = -2 pi tau gains[k]^2 sin(...)
    * d/d phase_k = -gains[k]^2 sin(...)
    """
    f = np.atleast_1d(np.asarray(freqs, dtype=np.float64))
    t = np.atleast_1d(np.asarray(phases, dtype=np.float64))
    g = np.atleast_1d(np.asarray(gains, dtype=np.float64))
    if not (f.shape == t.shape == g.shape) or f.ndim != 1 or f.size < 1:
        raise ValueError("freqs, phases and gains must be equal-length 1-D arrays")
    tau = np.asarray(offsets, dtype=np.float64)[None, :]
    ang = 2.0 * np.pi * f[:, None] * tau + t[:, None]
    cos = np.cos(ang)
    sin = np.sin(ang)
    values = np.sum(g[:, None] ** 2 * cos, axis=0)
    d_gains = 2.0 * g[:, None] * cos
    d_freqs = -2.0 * np.pi * tau * g[:, None] ** 2 * sin
    d_phases = -(g[:, None] ** 2) * sin
    return values, d_gains, d_freqs, d_phases


def conv_kernel_grads(filters_q, filters_k, offsets):
    """Filter cross-correlation values and analytic partials over offsets.

    Returns ``(values, d_q, d_k)`` with the partial arrays ``P x num_offsets``;
    taps indexed outside ``0..P-1`` contribute nothing, so values and all
    partials are exactly zero once the offset magnitude reaches P.
    """
    q = np.asarray(filters_q, dtype=np.float64)
    k = np.asarray(filters_k, dtype=np.float64)
    if q.shape != k.shape or q.ndim != 1 or q.size < 1:
        raise ValueError("filters must be equal-length 1-D arrays")
    offs = np.asarray(offsets, dtype=np.int64)
    p_len = q.size
    values = np.zeros(offs.size)
    d_q = np.zeros((p_len, offs.size))
    d_k = np.zeros((p_len, offs.size))
    for j, tau in enumerate(offs):
        lo = max(0, -tau)
        hi = min(p_len, p_len - tau)
        if lo >= hi:
            continue
        p = np.arange(lo, hi)
        values[j] = np.dot(q[p + tau], k[p])
        d_q[p + tau, j] = k[p]
        d_k[p, j] = q[p + tau]
    return values, d_q, d_k


def finite_diff_grads(loss_fn, params: np.ndarray, h: float) -> np.ndarray:
    """Central-difference gradient ``(L(p + h e_i) - L(p - h e_i)) / 2h``."""
    if not h > 0:
        raise ValueError(f"step must be positive, got {h}")
    params = np.asarray(params, dtype=np.float64)
    grad = np.empty_like(params)
    for i in range(params.size):
        bumped = params.copy()
        bumped[i] = params[i] + h
        up = loss_fn(bumped)
        bumped[i] = params[i] - h
        down = loss_fn(bumped)
        grad[i] = (up - down) / (2.0 * h)
    return grad


def _sigmoid(x):
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _logit(p):
    p = np.asarray(p, dtype=np.float64)
    return np.log(p) - np.log1p(-p)


def _wrap_phase(theta):
    return np.mod(theta + np.pi, 2.0 * np.pi) - np.pi


class _SineModel:
    """Raw vector [raw_freqs, phases, gains]; freqs = sigmoid(raw_freqs)."""

    kind = "sine"

    def __init__(self, components: int):
        self.k = int(components)
        self.size = 3 * self.k

    def init(self, rng: np.random.Generator) -> np.ndarray:
        raw_f = _logit(rng.uniform(0.02, 0.5, self.k))
        phases = np.zeros(self.k)
        gains = np.full(self.k, 1.0 / np.sqrt(self.k))
        return np.concatenate([raw_f, phases, gains])

    def value_and_jac(self, raw: np.ndarray, offsets: np.ndarray):
        k = self.k
        raw_f, phases, gains = raw[:k], raw[k : 2 * k], raw[2 * k :]
        freqs = _sigmoid(raw_f)
        values, d_g, d_f, d_t = sine_kernel_grads(freqs, phases, gains, offsets)
        jac = np.vstack([d_f * (freqs * (1.0 - freqs))[:, None], d_t, d_g])
        return values, jac

    def export(self, raw: np.ndarray) -> dict:
        k = self.k
        return {
            "freqs": _sigmoid(raw[:k]),
            "phases": _wrap_phase(raw[k : 2 * k]),
            "gains": raw[2 * k :].copy(),
        }


class _ConvModel:
    """Raw vector [query taps, key taps]; both unconstrained."""

    kind = "conv"

    def __init__(self, components: int):
        self.p = int(components)
        self.size = 2 * self.p

    def init(self, rng: np.random.Generator) -> np.ndarray:
        return rng.standard_normal(self.size) / np.sqrt(self.p)

    def value_and_jac(self, raw: np.ndarray, offsets: np.ndarray):
        q, k = raw[: self.p], raw[self.p :]
        values, d_q, d_k = conv_kernel_grads(q, k, offsets)
        return values, np.vstack([d_q, d_k])

    def export(self, raw: np.ndarray) -> dict:
        return {"filters_q": raw[: self.p].copy(), "filters_k": raw[self.p :].copy()}


class _GatedModel:
    """Base model plus a trailing raw gate; delta = sigmoid(raw_gate)."""

    def __init__(self, base):
        self.base = base
        self.kind = f"gated-{base.kind}"
        self.size = base.size + 1

    def init(self, rng: np.random.Generator) -> np.ndarray:
        return np.concatenate([self.base.init(rng), [0.0]])

    def value_and_jac(self, raw: np.ndarray, offsets: np.ndarray):
        raw_gate = raw[-1:]
        delta = _sigmoid(raw_gate)[0]
        base_vals, base_jac = self.base.value_and_jac(raw[:-1], offsets)
        values = delta + (1.0 - delta) * base_vals
        gate_row = (1.0 - base_vals)[None, :] * (delta * (1.0 - delta))
        return values, np.vstack([(1.0 - delta) * base_jac, gate_row])

    def export(self, raw: np.ndarray) -> dict:
        out = self.base.export(raw[:-1])
        out["delta"] = float(_sigmoid(raw[-1:])[0])
        return out


def _make_model(kind: str, components: int):
    if kind not in MODEL_KINDS:
        raise ValueError(f"unknown model {kind!r}; choose one of {MODEL_KINDS}")
    if components < 1:
        raise ValueError("model needs at least one component")
    base = _SineModel(components) if kind.endswith("sine") else _ConvModel(components)
    return _GatedModel(base) if kind.startswith("gated") else base


@dataclass(frozen=True, eq=False)
class FitResult:
    """Best restart of a kernel fit."""

    model: str
    components: int
    params: dict
    loss: float
    trace: np.ndarray
    restart: int

    def kernel_values(self, offsets) -> np.ndarray:
        """Fitted kernel evaluated at the given offsets."""
        offs = np.asarray(offsets, dtype=np.int64)
        if self.model.endswith("sine"):
            vals, _, _, _ = sine_kernel_grads(
                self.params["freqs"], self.params["phases"], self.params["gains"], offs
            )
        else:
            vals = conv_kernel_offsets(self.params["filters_q"], self.params["filters_k"], offs)
        if "delta" in self.params:
            vals = self.params["delta"] + (1.0 - self.params["delta"]) * vals
        return vals

    def as_sine_params(self) -> SineSpeParams:
        if not self.model.endswith("sine"):
            raise ValueError(f"{self.model} fit has no sinusoidal parameters")
        return SineSpeParams(
            self.params["freqs"][None, :],
            self.params["phases"][None, :],
            self.params["gains"][None, :],
        )

    def as_conv_params(self) -> ConvSpeParams:
        if not self.model.endswith("conv"):
            raise ValueError(f"{self.model} fit has no filter parameters")
        return ConvSpeParams(self.params["filters_q"][None, :], self.params["filters_k"][None, :])


def _descend(loss_fn, grad_fn, x0: np.ndarray, config: FitConfig, max_halvings: int = 30):
    x = x0.copy()
    loss = loss_fn(x)
    if not np.isfinite(loss):
        raise DivergenceError(f"loss is non-finite at the initial iterate (loss={loss!r})")
    trace = [loss]
    # the configured learning rate is the largest step ever tried; the hint
    # remembers the last accepted scale so successful scales are retried
    # instead of re-halving from the top every iteration
    step_hint = config.learning_rate
    for iteration in range(config.max_iters):
        if loss < config.tolerance:
            break
        grad = grad_fn(x)
        if not np.all(np.isfinite(grad)):
            raise DivergenceError(f"gradient became non-finite at iteration {iteration}")
        step = step_hint
        accepted = None
        for _ in range(max_halvings + 1):
            candidate = x - step * grad
            cand_loss = loss_fn(candidate)
            if np.isfinite(cand_loss) and cand_loss < loss:
                accepted = (candidate, cand_loss)
                break
            step *= 0.5
        if accepted is None:
            break  # stalled: no step length improves the loss
        x, loss = accepted
        step_hint = min(config.learning_rate, 2.0 * step)
        trace.append(loss)
    return x, loss, np.asarray(trace)


def fit_kernel(model: str, components: int, target: KernelTarget, config: FitConfig) -> FitResult:
    """Fit a kernel family to a target by restarted backtracking descent.

    Restarts use independent seed-derived initializations and the best one is
    kept, ties resolved by the lower restart index. Kernel non-uniqueness
    (phase sign flips, filter rescalings) is expected: success is a small
    loss, never parameter recovery.
    """
    spec = _make_model(model, components)
    offsets = target.offsets
    w = target.weights

    def loss_fn(raw):
        values, _ = spec.value_and_jac(raw, offsets)
        with np.errstate(over="ignore"):
            return float(np.sum(w * (values - target.values) ** 2))

    def grad_fn(raw):
        values, jac = spec.value_and_jac(raw, offsets)
        return jac @ (2.0 * w * (values - target.values))

    best = None
    for restart in range(config.restarts):
        x0 = spec.init(stream(config.init_seed, FIT_INIT, restart))
        x, loss, trace = _descend(loss_fn, grad_fn, x0, config)
        if best is None or loss < best[1]:
            best = (x, loss, trace, restart)
    x, loss, trace, restart = best
    return FitResult(spec.kind, int(components), spec.export(x), float(loss), trace, restart)
