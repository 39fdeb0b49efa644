"""Noise-space control for deterministic latent diffusion.

Generation is a pure function of (initial latent, prompt), so editing the
initial latent is a control surface: re-randomize a region to repaint it,
or permute pixel blocks to steer layout.
"""

from .attention import (
    AttentionMap,
    ProjectionWeights,
    TokenSet,
    attention_to_json,
    attention_to_pgm,
    block_features,
    cross_attention,
    step0_attention,
)
from .bench import (
    METHODS,
    VOCABULARY,
    BenchmarkConfig,
    LayoutSample,
    TendencyReport,
    load_benchmark_config,
    load_coco_layouts,
    mask_intersection_over_union,
    run_benchmark,
    synthetic_layouts,
    tendency_probe,
)
from .detect import (
    Detection,
    EvalRecord,
    MetricsRow,
    MetricsTable,
    detect,
    evaluate,
    iou,
    size_class,
)
from .editing import (
    GuidanceItem,
    LayoutGuidance,
    SelectedSet,
    SwapList,
    build_swaps,
    classify_blocks,
    compute_in_out,
    layout_swap,
    select_top_blocks,
)
from .errors import (
    ConfigError,
    DegenerateInputError,
    GeometryError,
    GuidanceError,
    IngestError,
    NoiseLoomError,
    PairingError,
    PermutationError,
)
from .latent import (
    BlockCoord,
    LatentGrid,
    Region,
    RegionMask,
    apply_block_permutation,
    latent_to_bytes,
    read_latent,
    resample_region,
    sample_latent,
    write_latent,
)
from .masks import LogitBias, default_mask_weights, paint_bias, soft_bias
from .samplers import NoiseSchedule, SamplerState, ddim_step, make_schedule, plms_step, run_sampler
from .toy import (
    BACKGROUND_TOKEN,
    GenerationResult,
    LabelMap,
    ToyEngine,
    ToyModelParams,
    box_smooth,
    build_projections,
    content_direction,
    generate,
    label_map_to_pgm,
    label_map_to_png,
    render_label_map,
)

__version__ = "0.1.0"
