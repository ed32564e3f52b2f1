"""Block diffusion language model training, TraceRL and decoding-order analysis."""

from ._core import (
    FileError,
    Model,
    Vocab,
    aggregate_localstrict,
    analyze,
    clipped_term,
    decode,
    default_config,
    evaluate,
    gae_step_advantages,
    generate_dataset,
    group_advantages,
    heatmap_grid,
    linearize,
    local_strict,
    pass_at_k,
    rl,
    sft,
    stage_block_sizes,
    tstar,
    verify,
)

__all__ = [
    "FileError",
    "Model",
    "Vocab",
    "aggregate_localstrict",
    "analyze",
    "clipped_term",
    "decode",
    "default_config",
    "evaluate",
    "gae_step_advantages",
    "generate_dataset",
    "group_advantages",
    "heatmap_grid",
    "linearize",
    "local_strict",
    "pass_at_k",
    "rl",
    "sft",
    "stage_block_sizes",
    "tstar",
    "verify",
]
