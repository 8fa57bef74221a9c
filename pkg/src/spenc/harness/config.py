"""Flat `key = value` experiment configuration with layered precedence.

Values come from builtin defaults, then a config file, then command-line
flags, later layers winning key by key. Files hold one `key = value` pair per
line with `#` comments; every command validates its own key set and echoes
the effective configuration into its output headers so results are
self-describing and reruns are comparable byte for byte.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

from .csvio import format_value


class UsageError(Exception):
    """Bad flags, config keys, or input files; maps to exit code 1."""


def _to_bool(raw: str) -> bool:
    lowered = raw.strip().lower()
    if lowered in ("true", "1", "yes", "on"):
        return True
    if lowered in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {raw!r}")


def _to_int(raw: str) -> int:
    return int(raw.strip())


def _to_float(raw: str) -> float:
    return float(raw.strip())


def _to_str(raw: str) -> str:
    return raw.strip()


def _to_ints(raw: str) -> tuple[int, ...]:
    return tuple(int(part.strip()) for part in raw.split(",") if part.strip())


def _to_floats(raw: str) -> tuple[float, ...]:
    return tuple(float(part.strip()) for part in raw.split(",") if part.strip())


# key -> parser for raw string values
_PARSERS = {
    "variant": _to_str,
    "d": _to_int,
    "k": _to_int,
    "p": _to_int,
    "m": _to_int,
    "n": _to_int,
    "r": _to_int,
    "r_test": _to_int,
    "seed": _to_int,
    "seeds": _to_int,
    "jobs": _to_int,
    "out": _to_str,
    "gates": _to_floats,
    "freqs": _to_floats,
    "phases": _to_floats,
    "gains": _to_floats,
    "filters_q": _to_floats,
    "filters_k": _to_floats,
    "sweep": _to_ints,
    "n_sweep": _to_ints,
    "r_sweep": _to_ints,
    "content": _to_str,
    "content_file": _to_str,
    "normalized": _to_bool,
    "causal": _to_bool,
    "mode": _to_str,
    "dv": _to_int,
    "reps": _to_int,
    "warmup": _to_int,
    "model": _to_str,
    "target": _to_str,
    "lr": _to_float,
    "iters": _to_int,
    "restarts": _to_int,
    "tolerance": _to_float,
    "train_length": _to_int,
    "windows": _to_ints,
    "contents": _to_int,
    "r_train_sweep": _to_ints,
    "r_test_sweep": _to_ints,
    "include_exact": _to_bool,
    "max_offset": _to_int,
}

_COMMON_KEYS = (
    "variant", "d", "k", "p", "n", "r", "r_test", "seed", "seeds", "jobs", "out",
    "gates", "freqs", "phases", "gains", "filters_q", "filters_k",
)

# command -> keys it accepts beyond the common set
_COMMAND_KEYS = {
    "convergence": ("sweep",),
    "crossterm": ("sweep",),
    "attention-dump": ("m", "content", "content_file", "normalized", "causal", "mode"),
    "bench": ("n_sweep", "r_sweep", "dv", "reps", "warmup"),
    "fit": ("model", "target", "lr", "iters", "restarts", "tolerance"),
    "probe": ("train_length", "windows", "contents", "mode"),
    "r-ablation": (
        "r_train_sweep", "r_test_sweep", "include_exact", "max_offset",
        "lr", "iters", "restarts", "tolerance",
    ),
}

_COMMON_DEFAULTS = {
    "variant": "sine",
    "d": 1,
    "k": 2,
    "p": 8,
    "n": 64,
    "r": 1024,
    "r_test": None,
    "seed": 0,
    "seeds": 10,
    "jobs": 1,
    "out": None,
    "gates": None,
    "freqs": None,
    "phases": None,
    "gains": None,
    "filters_q": None,
    "filters_k": None,
}

_COMMAND_DEFAULTS = {
    "convergence": {"sweep": (64, 256, 1024, 4096, 16384)},
    "crossterm": {"d": 8, "sweep": (1024, 4096, 16384)},
    "attention-dump": {
        "m": None,
        "content": "zeros",
        "content_file": None,
        "normalized": False,
        "causal": True,
        "mode": "sampled",
    },
    "bench": {
        "d": 8,
        "k": 4,
        "r": 64,
        "n_sweep": (2048, 4096),
        "r_sweep": (64,),
        "dv": 8,
        "reps": 5,
        "warmup": 1,
    },
    "fit": {
        "model": "sine",
        "target": None,
        "lr": 0.2,
        "iters": 4000,
        "restarts": 8,
        "tolerance": 1e-12,
    },
    "probe": {
        "d": 8,
        "n": 384,
        "r": 8192,
        "train_length": 256,
        "windows": (32, 128),
        "contents": 8,
        "mode": "sampled",
    },
    "r-ablation": {
        "n": 64,
        "r_train_sweep": (64, 256, 1024),
        "r_test_sweep": (64, 256, 1024),
        "include_exact": True,
        "max_offset": 16,
        "lr": 0.2,
        "iters": 2000,
        "restarts": 4,
        "tolerance": 1e-12,
    },
}

COMMANDS = tuple(_COMMAND_KEYS)


@dataclass(frozen=True)
class ExperimentConfig:
    """Effective, validated configuration of one harness command."""

    command: str
    variant: str
    d: int
    k: int
    p: int
    n: int
    r: int
    r_test: int
    seed: int
    seeds: int
    jobs: int
    out: str | None
    gates: tuple | None = None
    freqs: tuple | None = None
    phases: tuple | None = None
    gains: tuple | None = None
    filters_q: tuple | None = None
    filters_k: tuple | None = None
    sweep: tuple = ()
    n_sweep: tuple = ()
    r_sweep: tuple = ()
    m: int | None = None
    content: str = "zeros"
    content_file: str | None = None
    normalized: bool = False
    causal: bool = True
    mode: str = "sampled"
    dv: int = 8
    reps: int = 5
    warmup: int = 1
    model: str = "sine"
    target: str | None = None
    lr: float = 0.2
    iters: int = 2000
    restarts: int = 8
    tolerance: float = 1e-12
    train_length: int = 256
    windows: tuple = ()
    contents: int = 8
    r_train_sweep: tuple = ()
    r_test_sweep: tuple = ()
    include_exact: bool = True
    max_offset: int = 16

    def echo(self) -> dict:
        """Effective config as `cfg.<key> -> printable value`, sorted by key."""
        keys = sorted(set(_COMMON_KEYS) | set(_COMMAND_KEYS[self.command]))
        out = {}
        for key in keys:
            value = getattr(self, key)
            if value is None:
                text = "none"
            elif isinstance(value, tuple):
                text = ",".join(format_value(v) for v in value)
            else:
                text = format_value(value)
            out[f"cfg.{key}"] = text
        return out


def parse_config_file(path: str) -> dict[str, str]:
    """Raw key -> value strings from a flat config file."""
    try:
        with open(path, "r", encoding="utf-8") as handle:
            lines = handle.read().splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    values: dict[str, str] = {}
    for lineno, line in enumerate(lines, start=1):
        text = line.strip()
        if not text or text.startswith("#"):
            continue
        if "=" not in text:
            raise UsageError(f"{path}:{lineno}: expected `key = value`, got {line!r}")
        key, _, value = text.partition("=")
        values[key.strip()] = value.strip()
    return values


def build_config(command: str, file_values: dict, cli_values: dict) -> ExperimentConfig:
    """Merge defaults, file values and CLI values into a validated config."""
    if command not in _COMMAND_KEYS:
        raise UsageError(f"unknown command {command!r}")
    allowed = set(_COMMON_KEYS) | set(_COMMAND_KEYS[command])
    merged = dict(_COMMON_DEFAULTS)
    merged.update(_COMMAND_DEFAULTS[command])
    provided: set[str] = set()
    for source_name, source in (("config file", file_values), ("command line", cli_values)):
        for key, raw in source.items():
            if key not in allowed:
                raise UsageError(f"{source_name}: key {key!r} is not used by `{command}`")
            if raw is None:
                continue
            try:
                merged[key] = _PARSERS[key](raw) if isinstance(raw, str) else raw
            except ValueError as exc:
                raise UsageError(f"{source_name}: bad value for {key!r}: {exc}") from exc
            provided.add(key)
    _validate(command, merged, provided)
    merged["command"] = command
    valid_fields = {f.name for f in fields(ExperimentConfig)}
    return ExperimentConfig(**{k: v for k, v in merged.items() if k in valid_fields})


def _validate(command: str, cfg: dict, provided: set) -> None:
    if cfg["variant"] not in ("sine", "conv"):
        raise UsageError(f"variant must be `sine` or `conv`, got {cfg['variant']!r}")
    # exactly one of k/p applies: the model family decides for `fit`, the
    # variant everywhere else
    family = cfg["model"] if command == "fit" else cfg["variant"]
    if family.endswith("sine") and "p" in provided:
        raise UsageError("a sinusoidal family takes `k` (number of sines); `p` is for conv filters")
    if family.endswith("conv") and "k" in provided:
        raise UsageError("a convolutional family takes `p` (filter taps); `k` is for sine components")
    for key in ("d", "k", "p", "n", "r", "seeds", "jobs"):
        if int(cfg[key]) < 1:
            raise UsageError(f"{key} must be >= 1, got {cfg[key]}")
    if not 0 <= cfg["seed"] < 2**64:
        raise UsageError(f"seed must be an unsigned 64-bit integer, got {cfg['seed']}")
    if cfg["r_test"] is None:
        cfg["r_test"] = cfg["r"]
    if cfg.get("m") is None:
        cfg["m"] = cfg["n"]
    if cfg["out"] is None:
        raise UsageError("an output path is required (flag --out or config key `out`)")
    if cfg["gates"] is not None:
        gates = cfg["gates"]
        if len(gates) == 1:
            gates = gates * cfg["d"]
        if len(gates) != cfg["d"]:
            raise UsageError(f"got {len(cfg['gates'])} gates for d = {cfg['d']}")
        cfg["gates"] = gates
    for key, per_dim in (("freqs", "k"), ("phases", "k"), ("gains", "k"),
                         ("filters_q", "p"), ("filters_k", "p")):
        if cfg.get(key) is not None and len(cfg[key]) != cfg["d"] * cfg[per_dim]:
            raise UsageError(
                f"{key} needs d*{per_dim} = {cfg['d'] * cfg[per_dim]} values, got {len(cfg[key])}"
            )
    for key in ("sweep", "n_sweep", "r_sweep", "r_train_sweep", "r_test_sweep", "windows"):
        if key in cfg and any(int(v) < 1 for v in cfg.get(key) or ()):
            raise UsageError(f"{key} entries must be >= 1")
    if command in ("convergence", "crossterm") and not cfg["sweep"]:
        raise UsageError("a non-empty sweep of realization counts is required")
    if command == "crossterm" and cfg["d"] < 2:
        raise UsageError("cross terms need at least two feature dimensions (d >= 2)")
    if command == "bench" and (not cfg["n_sweep"] or not cfg["r_sweep"]):
        raise UsageError("bench needs non-empty n_sweep and r_sweep")
    if command == "bench" and cfg["warmup"] < 1:
        raise UsageError("bench needs at least one warmup iteration")
    if command == "attention-dump":
        if cfg["mode"] not in ("sampled", "expected"):
            raise UsageError(f"mode must be `sampled` or `expected`, got {cfg['mode']!r}")
        if cfg["content"] not in ("zeros", "random", "file"):
            raise UsageError(f"content must be zeros|random|file, got {cfg['content']!r}")
        if cfg["content"] == "file" and not cfg["content_file"]:
            raise UsageError("content = file needs content_file = <path>")
        if cfg["mode"] == "expected" and cfg["normalized"]:
            raise UsageError("expected mode emits the position template; `normalized` does not apply")
        if cfg["variant"] == "conv" and cfg["m"] != cfg["n"]:
            raise UsageError("the conv variant is self-attention only (m must equal n)")
        if cfg["m"] * cfg["n"] > 2**24:
            raise UsageError(
                f"attention dump of {cfg['m']}x{cfg['n']} exceeds the 2^24-element guard"
            )
    if command == "fit":
        if cfg["model"] not in ("sine", "conv", "gated-sine", "gated-conv"):
            raise UsageError(f"unknown fit model {cfg['model']!r}")
        if not cfg["target"]:
            raise UsageError("fit needs a target file (flag --target or key `target`)")
    if command == "probe":
        if cfg["mode"] not in ("sampled", "expected"):
            raise UsageError(f"mode must be `sampled` or `expected`, got {cfg['mode']!r}")
        if cfg["d"] % 2:
            raise UsageError("probe needs an even d (the APE baseline interleaves sin/cos)")
        if not 2 <= cfg["train_length"] < cfg["n"]:
            raise UsageError("need 2 <= train_length < n for an extrapolation range")
        if not cfg["windows"]:
            raise UsageError("probe needs a non-empty windows list")
        if any(w > cfg["train_length"] // 2 for w in cfg["windows"]):
            raise UsageError("every probe window must fit the smallest query range (train_length/2)")
        if cfg["contents"] < 1:
            raise UsageError("contents must be >= 1")
    if command == "r-ablation":
        if cfg["d"] != 1:
            raise UsageError("r-ablation fits one kernel; use d = 1")
        if not cfg["r_train_sweep"] or not cfg["r_test_sweep"]:
            raise UsageError("r-ablation needs non-empty r_train_sweep and r_test_sweep")
        if cfg["max_offset"] < 1 or cfg["max_offset"] >= cfg["n"]:
            raise UsageError("need 1 <= max_offset < n")
