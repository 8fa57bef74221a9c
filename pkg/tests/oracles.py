"""Independent reference implementations shared by the tests.

Everything here is deliberately written the slow, obvious way (scalar loops,
explicit quadratic attention) and never calls into the package's own
computation paths for the quantity it checks.
"""

import math

import numpy as np


def omega_oracle(positions, freqs, phases):
    """Scalar-loop reference for the interleaved cos/sin matrix."""
    out = np.empty((len(positions), 2 * len(freqs)))
    for i, pos in enumerate(positions):
        for k in range(len(freqs)):
            angle = 2.0 * math.pi * freqs[k] * pos + phases[k]
            out[i, 2 * k] = math.cos(angle)
            out[i, 2 * k + 1] = math.sin(angle)
    return out


def sine_kernel_oracle(params, d, qpos, kpos):
    """Scalar-loop reference for the cosine kernel matrix."""
    out = np.empty((len(qpos), len(kpos)))
    for i, m in enumerate(qpos):
        for j, n in enumerate(kpos):
            acc = 0.0
            for k in range(params.num_sines):
                acc += params.gains[d, k] ** 2 * math.cos(
                    2.0 * math.pi * params.freqs[d, k] * (m - n) + params.phases[d, k]
                )
            out[i, j] = acc
    return out


def conv_kernel_oracle(filters_q, filters_k, length):
    """Double-loop reference: taps outside the filter support count as zero."""
    p_len = len(filters_q)
    out = np.zeros((length, length))
    for m in range(length):
        for n in range(length):
            for p in range(p_len):
                idx = p + m - n
                if 0 <= idx < p_len:
                    out[m, n] += filters_q[idx] * filters_k[p]
    return out


def quadratic_attention(phi_q, phi_k, values, causal=False):
    """Explicit O(N^2) reference: form the score matrix, normalize rows."""
    scores = phi_q @ phi_k.T
    if causal:
        scores = np.tril(scores)
    scores = scores / scores.sum(axis=1, keepdims=True)
    return scores @ values


def diagonal_spread(matrix):
    """Largest within-diagonal spread; zero iff the matrix is Toeplitz."""
    n = matrix.shape[0]
    spread = 0.0
    for off in range(-(n - 1), n):
        diag = np.diagonal(matrix, offset=off)
        spread = max(spread, float(diag.max() - diag.min()))
    return spread
