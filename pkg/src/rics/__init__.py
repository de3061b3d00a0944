"""Shift-robust inference by deterministic crop selection.

Score every crop of the view with a deterministic function, keep the strict
local maxima, feed only the winning crop to the feature extractor. A
pseudo-random score makes the argmax land uniformly, which yields provable
consistency and adversarial-robustness floors for realistic (non-cyclic)
translations, and exact invariance for integer cyclic translations.
"""

from .embedding import (
    BlockMeanSpec,
    ConstantSpec,
    EmbedderError,
    EmbedderPool,
    EmbedderTerminated,
    EmbedderTimeout,
    Embedding,
    ExternalEmbedder,
    ExternalSpec,
    PatchHashSpec,
    ProtocolError,
    embed,
    make_embedder,
)
from .evaluation import (
    DatasetItem,
    ExperimentSettings,
    GalleryIndex,
    MetricKind,
    Pipeline,
    RobustnessReport,
    ShiftSet,
    accuracy,
    adversarial_robustness,
    build_gallery,
    consistency,
    crop_agreement_rate,
    knn_majority_label,
    nn_lookup,
    outputs_equal,
    run_experiment,
    view_records,
)
from .imagecore import (
    CYCLIC,
    REALISTIC,
    CropWindow,
    GeometryError,
    ImageBuf,
    ImageFormatError,
    LumaPlane,
    Translation,
    cyclic_shift,
    extract_crop,
    load_image,
    save_pnm,
    to_luminance,
    translate_view,
)
from .scoring import (
    DEFAULT_MODULUS,
    DEFAULT_SIGMAS,
    Filter,
    MexicanHatSpec,
    RandHashSpec,
    ScoreMap,
    compute_score_map,
    make_mexican_hat_kernel,
    make_randhash_filter,
    score_mexican_hat,
    score_randhash,
    scoremap_to_csv,
    scoremap_to_text,
)
from .selection import (
    OutputRecord,
    RicsConfig,
    SelectionResult,
    audit_record,
    center_crop_infer,
    nms_candidates,
    rics_infer,
    select_crop,
)
from .synthetic import SyntheticSpec, generate_dataset, load_manifest, object_box, write_dataset
from .theory import (
    BoundParams,
    adv_robustness_bound,
    adv_robustness_bound_exact,
    argmax_uniformity,
    bound_rows,
    consistency_bound,
    consistency_bound_exact,
    simulate_crop_agreement,
)

__version__ = "0.1.0"
