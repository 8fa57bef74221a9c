"""Experiment implementations behind the CLI commands.

Each function takes an :class:`ExperimentConfig` and returns plain data
(metadata dict plus table rows or a matrix); the CLI layer owns file output.
Everything is deterministic given the config: per-trial noise seeds are
derived from the master seed, and multi-trial work is assembled in sweep
order regardless of how the worker pool schedules it.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np

from ..codes import (
    ConvSpeParams,
    GateVector,
    IndexSet,
    NoiseSpec,
    SineSpeParams,
    combine_qk,
    draw_conv_codes,
    draw_sine_codes,
    estimate_cross_term,
    estimate_kernel,
    expected_kernel_conv,
    expected_kernel_gated,
    expected_kernel_sine,
    gate_codes,
)
from ..attention import attention_matrix
from ..fitting import FitConfig, KernelTarget, fit_kernel
from ..metrics import (
    ProbeConfig,
    default_probe_contents,
    monotonicity_score,
    probe_attention_ape,
    probe_attention_from_kernels,
    probe_attention_spe,
    translation_invariance_score,
)
from ..rng import HARNESS_CONTENT, HARNESS_PARAMS, HARNESS_TRIAL, derive_seed, stream
from .config import ExperimentConfig, UsageError
from .csvio import read_matrix

_DEGENERATE_NORM = 1e-12


def map_ordered(fn, items, jobs: int):
    """Apply ``fn`` over ``items``, preserving order; threads when jobs > 1."""
    if jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def seeded_params(cfg: ExperimentConfig):
    """Kernel parameters for the configured variant, explicit or seed-drawn.

    Random sine parameters use frequencies away from the grid edges, uniform
    phases, and gains of typical size 1/sqrt(K); random filters carry taps of
    variance 1/P so the kernel peak is of order one.
    """
    rng = stream(cfg.seed, HARNESS_PARAMS)
    if cfg.variant == "sine":
        freqs = rng.uniform(0.02, 0.5, (cfg.d, cfg.k))
        phases = rng.uniform(-np.pi, np.pi, (cfg.d, cfg.k))
        gains = rng.standard_normal((cfg.d, cfg.k)) / np.sqrt(cfg.k)
        if cfg.freqs is not None:
            freqs = np.reshape(cfg.freqs, (cfg.d, cfg.k))
        if cfg.phases is not None:
            phases = np.reshape(cfg.phases, (cfg.d, cfg.k))
        if cfg.gains is not None:
            gains = np.reshape(cfg.gains, (cfg.d, cfg.k))
        return SineSpeParams(freqs, phases, gains)
    filters_q = rng.standard_normal((cfg.d, cfg.p)) / np.sqrt(cfg.p)
    filters_k = rng.standard_normal((cfg.d, cfg.p)) / np.sqrt(cfg.p)
    if cfg.filters_q is not None:
        filters_q = np.reshape(cfg.filters_q, (cfg.d, cfg.p))
    if cfg.filters_k is not None:
        filters_k = np.reshape(cfg.filters_k, (cfg.d, cfg.p))
    return ConvSpeParams(filters_q, filters_k)


def trial_noise(cfg: ExperimentConfig, *key: int) -> NoiseSpec:
    """Independent noise spec for one trial slot of this experiment."""
    return NoiseSpec(seed=derive_seed(cfg.seed, HARNESS_TRIAL, *key))


def draw_codes(cfg: ExperimentConfig, params, num_realizations: int, noise: NoiseSpec):
    """Draw (and optionally gate) codes for the configured variant."""
    if cfg.variant == "sine":
        grid = IndexSet.regular(cfg.n)
        codes = draw_sine_codes(params, grid, grid, num_realizations, noise)
    else:
        codes = draw_conv_codes(params, cfg.n, num_realizations, noise)
    if cfg.gates is not None:
        codes = gate_codes(codes, GateVector(np.asarray(cfg.gates)), noise)
    return codes


def expected_kernels(cfg: ExperimentConfig, params) -> np.ndarray:
    """Stack of closed-form kernels (gates applied when configured)."""
    if cfg.variant == "sine":
        grid = IndexSet.regular(cfg.n)
        stack = np.stack(
            [expected_kernel_sine(params, d, grid, grid) for d in range(cfg.d)]
        )
    else:
        stack = np.stack([expected_kernel_conv(params, d, cfg.n) for d in range(cfg.d)])
    if cfg.gates is not None:
        stack = np.stack(
            [expected_kernel_gated(stack[d], cfg.gates[d]) for d in range(cfg.d)]
        )
    return stack


def run_convergence(cfg: ExperimentConfig):
    """Median relative Frobenius error of the sampled kernel per sweep point.

    A zero expected kernel switches the error column to absolute Frobenius
    norms (flagged in the header); otherwise a log-log slope over the sweep
    is reported alongside the table.
    """
    params = seeded_params(cfg)
    expected = expected_kernels(cfg, params)
    norms = np.linalg.norm(expected, axis=(1, 2))
    absolute = bool(np.any(norms <= _DEGENERATE_NORM))

    def one_trial(task):
        r, trial = task
        codes = draw_codes(cfg, params, r, trial_noise(cfg, trial))
        errs = []
        for d in range(cfg.d):
            err = np.linalg.norm(estimate_kernel(codes, d) - expected[d])
            errs.append(err if absolute else err / norms[d])
        return errs

    rows = []
    medians = []
    for r in cfg.sweep:
        tasks = [(r, trial) for trial in range(cfg.seeds)]
        errs = np.ravel(map_ordered(one_trial, tasks, cfg.jobs))
        median = float(np.median(errs))
        iqr = float(np.percentile(errs, 75) - np.percentile(errs, 25))
        medians.append(median)
        rows.append((r, median, iqr))

    meta = {"error_norm": "absolute" if absolute else "relative"}
    if not absolute and len(cfg.sweep) >= 2 and all(m > 0 for m in medians):
        slope = np.polyfit(np.log(np.asarray(cfg.sweep, float)), np.log(medians), 1)[0]
        meta["loglog_slope"] = float(slope)
    return meta, ["r", "median_err", "iqr"], rows


def run_crossterm(cfg: ExperimentConfig):
    """Median cross-to-diagonal Frobenius ratio over all dimension pairs."""

    params = seeded_params(cfg)

    def one_trial(task):
        r, trial = task
        codes = draw_codes(cfg, params, r, trial_noise(cfg, trial))
        diag_norms = [np.linalg.norm(estimate_kernel(codes, d)) for d in range(cfg.d)]
        ratios = []
        for d in range(cfg.d):
            for d_other in range(cfg.d):
                if d == d_other:
                    continue
                cross = np.linalg.norm(estimate_cross_term(codes, d, d_other))
                ratios.append(cross / diag_norms[d])
        return ratios

    rows = []
    for r in cfg.sweep:
        tasks = [(r, trial) for trial in range(cfg.seeds)]
        ratios = np.ravel(map_ordered(one_trial, tasks, cfg.jobs))
        rows.append((r, float(np.median(ratios))))
    return {}, ["r", "median_ratio"], rows


def _dump_content(cfg: ExperimentConfig, rows: int, side: int) -> np.ndarray:
    if cfg.content == "zeros":
        return np.zeros((rows, cfg.d))
    if cfg.content == "random":
        return stream(cfg.seed, HARNESS_CONTENT, side).uniform(-1.0, 1.0, (rows, cfg.d))
    _, data = read_matrix(cfg.content_file)
    if data.shape != (rows, cfg.d):
        raise UsageError(
            f"content file {cfg.content_file} has shape {data.shape}, need {(rows, cfg.d)}"
        )
    return data


def run_attention_dump(cfg: ExperimentConfig):
    """One attention matrix (sampled mode) or position template (expected mode).

    Sampled mode exponentiates the combined codes at scale sqrt(R) and
    optionally row-normalizes. Expected mode emits the pre-exponential
    content-weighted combination of closed-form kernels at scale sqrt(D),
    where the vanishing structure of conv kernels is visible as exact zeros.
    """
    params = seeded_params(cfg)
    queries = _dump_content(cfg, cfg.m, 0)
    keys = queries if cfg.m == cfg.n else _dump_content(cfg, cfg.n, 1)
    meta = {"variant": cfg.variant, "mode": cfg.mode}
    if cfg.mode == "sampled":
        noise = trial_noise(cfg, 0)
        if cfg.variant == "sine":
            codes = draw_sine_codes(
                params, IndexSet.regular(cfg.m), IndexSet.regular(cfg.n), cfg.r, noise
            )
        else:
            codes = draw_conv_codes(params, cfg.n, cfg.r, noise)
        if cfg.gates is not None:
            codes = gate_codes(codes, GateVector(np.asarray(cfg.gates)), noise)
        q_hat, k_hat = combine_qk(queries, keys, codes)
        scale = float(np.sqrt(cfg.r))
        matrix = attention_matrix(
            q_hat, k_hat, scale, normalized=cfg.normalized, causal=cfg.causal
        )
        meta.update(
            quantity="attention",
            normalized=cfg.normalized,
            scale=scale,
            noise_seed=noise.seed,
        )
    else:
        if cfg.variant == "sine":
            grid_m, grid_n = IndexSet.regular(cfg.m), IndexSet.regular(cfg.n)
            stack = [expected_kernel_sine(params, d, grid_m, grid_n) for d in range(cfg.d)]
        else:
            stack = [expected_kernel_conv(params, d, cfg.n) for d in range(cfg.d)]
        if cfg.gates is not None:
            stack = [expected_kernel_gated(stack[d], cfg.gates[d]) for d in range(cfg.d)]
        scale = float(np.sqrt(cfg.d))
        matrix = sum(
            queries[:, d : d + 1] * stack[d] * keys[:, d][None, :] for d in range(cfg.d)
        ) / scale
        if cfg.causal:
            matrix = np.tril(matrix)
        meta.update(quantity="position-template", scale=scale)
    return meta, matrix


def parse_target_file(path: str) -> KernelTarget:
    """Read `offset,value[,weight]` rows (with `#` comments) into a target."""
    try:
        with open(path, "r", encoding="utf-8") as handle:
            lines = handle.read().splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read target {path}: {exc}") from exc
    offsets, values, weights = [], [], []
    for lineno, line in enumerate(lines, start=1):
        text = line.strip()
        if not text or text.startswith("#"):
            continue
        cells = [cell.strip() for cell in text.split(",")]
        if len(cells) not in (2, 3):
            raise UsageError(f"{path}:{lineno}: expected `offset,value[,weight]`, got {line!r}")
        try:
            offsets.append(int(cells[0]))
            values.append(float(cells[1]))
            weights.append(float(cells[2]) if len(cells) == 3 else 1.0)
        except ValueError as exc:
            raise UsageError(f"{path}:{lineno}: {exc}") from exc
    if not offsets:
        raise UsageError(f"{path}: no target rows found")
    try:
        return KernelTarget(np.asarray(offsets), np.asarray(values), np.asarray(weights))
    except ValueError as exc:
        raise UsageError(f"{path}: {exc}") from exc


def run_fit(cfg: ExperimentConfig):
    """Fit the configured model to a target file.

    Returns parameter lines (flat key = value) and the loss trace table.
    """
    target = parse_target_file(cfg.target)
    components = cfg.k if cfg.model.endswith("sine") else cfg.p
    result = fit_kernel(
        cfg.model,
        components,
        target,
        FitConfig(
            learning_rate=cfg.lr,
            max_iters=cfg.iters,
            init_seed=cfg.seed,
            restarts=cfg.restarts,
            tolerance=cfg.tolerance,
        ),
    )
    params = {"model": result.model, "components": result.components}
    for name, value in result.params.items():
        if np.ndim(value) == 0:
            params[name] = float(value)
        else:
            for i, v in enumerate(np.ravel(value)):
                params[f"{name}_{i}"] = float(v)
    params["loss"] = result.loss
    params["restart"] = result.restart
    trace_rows = [(i, loss) for i, loss in enumerate(result.trace)]
    return params, ["iteration", "loss"], trace_rows


def probe_cells(cfg: ExperimentConfig) -> list[tuple[int, int, int]]:
    """(lo, hi, window) cells: two trained ranges plus the extrapolation range."""
    half = cfg.train_length // 2
    ranges = [(0, half), (half, cfg.train_length), (cfg.train_length, cfg.n)]
    return [(lo, hi, w) for lo, hi in ranges for w in cfg.windows]


def run_probe(cfg: ExperimentConfig):
    """Translation-invariance and monotonicity scores per probe cell.

    Scores are averaged over the seeded content vectors; the sampled encoder
    additionally takes the median over trials. Encoders: the additive
    trigonometric baseline, the closed-form kernel attention, and sampled
    code attention.
    """
    params = seeded_params(cfg)
    contents = default_probe_contents(cfg.d, cfg.contents, cfg.seed)
    cells = probe_cells(cfg)
    probes = {
        (lo, hi, w): [ProbeConfig(lo, hi, w, c) for c in contents] for lo, hi, w in cells
    }

    def cell_scores(matrices, cell):
        t_vals, m_vals = [], []
        for matrix, probe in zip(matrices, probes[cell]):
            t_vals.append(translation_invariance_score(matrix, probe))
            m_vals.append(monotonicity_score(matrix, probe))
        return float(np.mean(t_vals)), float(np.mean(m_vals))

    rows = []

    ape_matrices = [
        probe_attention_ape(cfg.n, ProbeConfig(0, cfg.n, 1, c), window=False) for c in contents
    ]
    for cell in cells:
        t_score, m_score = cell_scores(ape_matrices, cell)
        rows.append(("ape", *cell, t_score, m_score))

    kernels = expected_kernels(cfg, params)
    expected_matrices = [
        probe_attention_from_kernels(kernels, ProbeConfig(0, cfg.n, 1, c), window=False)
        for c in contents
    ]
    for cell in cells:
        t_score, m_score = cell_scores(expected_matrices, cell)
        rows.append(("spe-expected", *cell, t_score, m_score))

    if cfg.mode == "sampled":
        def one_trial(trial):
            codes = draw_codes(cfg, params, cfg.r, trial_noise(cfg, trial))
            matrices = [
                probe_attention_spe(codes, ProbeConfig(0, cfg.n, 1, c), window=False)
                for c in contents
            ]
            return {cell: cell_scores(matrices, cell) for cell in cells}

        per_trial = map_ordered(one_trial, list(range(cfg.seeds)), cfg.jobs)
        for cell in cells:
            t_score = float(np.median([scores[cell][0] for scores in per_trial]))
            m_score = float(np.median([scores[cell][1] for scores in per_trial]))
            rows.append(("spe-sampled", *cell, t_score, m_score))

    meta = {"encoders": "ape,spe-expected" + (",spe-sampled" if cfg.mode == "sampled" else "")}
    return meta, ["encoder", "query_lo", "query_hi", "window", "t_score", "m_score"], rows


def _diagonal_average(matrix: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    return np.array([np.diagonal(matrix, offset=-int(tau)).mean() for tau in offsets])


def run_r_ablation(cfg: ExperimentConfig):
    """Kernel-fit mismatch over a (train R, test R) grid.

    For each train R, a kernel is fitted to the diagonal-averaged sampled
    estimate at that R; the cell value is the mean squared mismatch between
    the fitted kernel and a fresh estimate at the test R (`r_test = 0` rows
    compare against the exact kernel instead). This is a kernel-level proxy:
    no downstream task accuracy is measured or implied.
    """
    params = seeded_params(cfg)
    offsets = np.arange(-cfg.max_offset, cfg.max_offset + 1)
    exact = _diagonal_average(expected_kernels(cfg, params)[0], offsets)
    fit_cfg = FitConfig(
        learning_rate=cfg.lr,
        max_iters=cfg.iters,
        init_seed=cfg.seed,
        restarts=cfg.restarts,
        tolerance=cfg.tolerance,
    )
    components = cfg.k if cfg.variant == "sine" else cfg.p
    model = "sine" if cfg.variant == "sine" else "conv"

    rows = []
    for i, r_train in enumerate(cfg.r_train_sweep):
        codes = draw_codes(cfg, params, r_train, trial_noise(cfg, 2 * i))
        train_vals = _diagonal_average(estimate_kernel(codes, 0), offsets)
        result = fit_kernel(model, components, KernelTarget(offsets, train_vals), fit_cfg)
        fitted = result.kernel_values(offsets)
        for j, r_test in enumerate(cfg.r_test_sweep):
            codes_test = draw_codes(cfg, params, r_test, trial_noise(cfg, 2 * i + 1, j))
            test_vals = _diagonal_average(estimate_kernel(codes_test, 0), offsets)
            rows.append((r_train, r_test, float(np.mean((fitted - test_vals) ** 2))))
        if cfg.include_exact:
            rows.append((r_train, 0, float(np.mean((fitted - exact) ** 2))))
    meta = {
        "note": (
            "kernel-fit proxy: cells are mean squared mismatch between a kernel "
            "fitted at train R and fresh estimates at test R; r_test=0 rows use "
            "the exact kernel as reference"
        )
    }
    return meta, ["r_train", "r_test", "mismatch"], rows
