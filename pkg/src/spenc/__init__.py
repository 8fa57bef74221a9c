"""Stochastic positional encoding for linear-complexity attention.

Randomized positional codes whose dot products realize prescribed relative
attention kernels, linear-time attention to consume them, closed-form kernel
fitting, positional-property metrics, and a CLI harness that verifies the
construction end to end.
"""

from .attention import (
    FeatureMapSpec,
    ape_sinusoidal,
    attention_matrix,
    causal_linear_attention,
    feature_map_apply,
    full_attention_oracle,
    linear_attention,
)
from .codes import (
    CodeMatrices,
    ConvSpeParams,
    GateVector,
    IndexSet,
    NoiseSpec,
    SineSpeParams,
    build_omega,
    combine_qk,
    conv_kernel_offsets,
    draw_conv_codes,
    draw_sine_codes,
    estimate_cross_term,
    estimate_kernel,
    expected_kernel_conv,
    expected_kernel_gated,
    expected_kernel_sine,
    gate_codes,
)
from .errors import DegenerateAttentionError, DivergenceError, NumericError
from .fitting import (
    FitConfig,
    FitResult,
    KernelTarget,
    conv_kernel_grads,
    finite_diff_grads,
    fit_kernel,
    sine_kernel_grads,
)
from .metrics import (
    ProbeConfig,
    default_probe_contents,
    monotonicity_score,
    probe_attention_ape,
    probe_attention_from_kernels,
    probe_attention_spe,
    translation_invariance_score,
)

__version__ = "0.1.0"

__all__ = [
    "CodeMatrices",
    "ConvSpeParams",
    "DegenerateAttentionError",
    "DivergenceError",
    "FeatureMapSpec",
    "FitConfig",
    "FitResult",
    "GateVector",
    "IndexSet",
    "KernelTarget",
    "NoiseSpec",
    "NumericError",
    "ProbeConfig",
    "SineSpeParams",
    "ape_sinusoidal",
    "attention_matrix",
    "build_omega",
    "causal_linear_attention",
    "combine_qk",
    "conv_kernel_grads",
    "conv_kernel_offsets",
    "default_probe_contents",
    "draw_conv_codes",
    "draw_sine_codes",
    "estimate_cross_term",
    "estimate_kernel",
    "expected_kernel_conv",
    "expected_kernel_gated",
    "expected_kernel_sine",
    "feature_map_apply",
    "finite_diff_grads",
    "fit_kernel",
    "full_attention_oracle",
    "gate_codes",
    "linear_attention",
    "monotonicity_score",
    "probe_attention_ape",
    "probe_attention_from_kernels",
    "probe_attention_spe",
    "sine_kernel_grads",
    "translation_invariance_score",
]
