"""Wall-time benchmark of the linear path against the quadratic oracle.

The linear path covers code generation, content/code combination, and causal
linear attention; the oracle path covers the explicit softmax reference on
the same combined matrices. Timings use the monotonic clock, at least one
warmup call, medians over repeated runs, and a single BLAS thread so the
scaling ratios are reproducible. Peak element counts record the largest
array each path materializes.
"""

from __future__ import annotations

import time
from dataclasses import replace

import numpy as np
from threadpoolctl import threadpool_limits

from ..attention import FeatureMapSpec, causal_linear_attention, feature_map_apply, full_attention_oracle
from ..codes import combine_qk
from ..rng import HARNESS_CONTENT, stream
from .config import ExperimentConfig
from .experiments import draw_codes, seeded_params, trial_noise


def median_time(fn, reps: int, warmup: int) -> float:
    for _ in range(warmup):
        fn()
    times = []
    for _ in range(reps):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return float(np.median(times))


def run_bench(cfg: ExperimentConfig):
    """One row per (n, r) grid point: linear and oracle medians plus peaks."""
    relu = FeatureMapSpec("relu")
    rows = []
    with threadpool_limits(limits=1):
        for n in cfg.n_sweep:
            for r in cfg.r_sweep:
                point = replace(cfg, n=int(n), m=int(n), r=int(r))
                params = seeded_params(point)
                noise = trial_noise(point, 0)
                rng = stream(point.seed, HARNESS_CONTENT)
                queries = rng.uniform(-1.0, 1.0, (n, point.d))
                keys = rng.uniform(-1.0, 1.0, (n, point.d))
                values = rng.uniform(-1.0, 1.0, (n, point.dv))

                def linear_path():
                    codes = draw_codes(point, params, r, noise)
                    q_hat, k_hat = combine_qk(queries, keys, codes)
                    return causal_linear_attention(
                        feature_map_apply(relu, q_hat), feature_map_apply(relu, k_hat), values
                    )

                # the oracle is timed on pre-combined inputs: it measures the
                # quadratic attention computation the linear path avoids
                codes = draw_codes(point, params, r, noise)
                q_hat, k_hat = combine_qk(queries, keys, codes)
                scale = float(np.sqrt(r))

                def oracle_path():
                    return full_attention_oracle(q_hat, k_hat, values, scale, causal=True)

                t_linear = median_time(linear_path, cfg.reps, cfg.warmup)
                t_oracle = median_time(oracle_path, cfg.reps, cfg.warmup)
                noise_len = n if point.variant == "sine" else n + point.p - 1
                rows.append(
                    (
                        int(n),
                        int(r),
                        t_linear,
                        t_oracle,
                        int(point.d * noise_len * r),
                        int(n) * int(n),
                    )
                )
    meta = {"threads": 1, "clock": "monotonic", "reps": cfg.reps, "warmup": cfg.warmup}
    columns = ["n", "r", "linear_s", "oracle_s", "linear_peak_elems", "oracle_peak_elems"]
    return meta, columns, rows
