"""certmask: provably sufficient k-fold mask coverings against adversarial patches.

The library constructs mask sets that cover every admissible patch position
at least k times, verifies that claim by exhaustive oracle, and runs a
single-round masked-inference pipeline whose certification rests on two
machine-checked facts: a covering mask erases the patch bit-exactly, and
every anchor is covered by at least k masks.
"""

__version__ = "0.1.0"

from .geometry import (
    Anchor,
    AnchorRange,
    DomainSize,
    GeometryError,
    MaskPlacement,
    MaskSpec,
    PatchSpec,
    Rect,
    admissible_anchors,
    effective_anchor_region,
    fully_covers,
    mask_pixel_set,
)
from .tiling import (
    BoundsReport,
    MaskSet,
    TilingConfig,
    TilingError,
    build_mask_set,
    default_fold_split,
    dump_mask_set,
    forward_pass_counts,
    load_mask_set,
    mask_set_from_dict,
    mask_set_to_dict,
    offset_tiling,
    paper_bounds,
    replicated_tiling,
    single_cover_1d,
    single_cover_2d,
)
from .verifier import CoverageReport, covering_set, multiplicity_grid, verify
from .masking import (
    FillPolicy,
    Image,
    ImageError,
    apply_mask,
    apply_patch,
    iter_masked_views,
    load_image,
    masked_views,
    save_image,
)
from .classifiers import (
    Classifier,
    ClassifierError,
    ConstantClassifier,
    ExternalClassifier,
    LookupTableClassifier,
    MeanThresholdClassifier,
    ProtocolError,
    classify,
    classify_batch,
    fnv1a64,
    image_digest,
)
from .certify import (
    AggregationOutcome,
    CertificationResult,
    CoverageError,
    EvalSummary,
    aggregate,
    certify,
    evaluate,
    find_vote_exploit,
    infer,
    load_manifest,
    predict_all,
)

__all__ = [
    "__version__",
    # geometry
    "Anchor",
    "AnchorRange",
    "DomainSize",
    "GeometryError",
    "MaskPlacement",
    "MaskSpec",
    "PatchSpec",
    "Rect",
    "admissible_anchors",
    "effective_anchor_region",
    "fully_covers",
    "mask_pixel_set",
    # tiling
    "BoundsReport",
    "MaskSet",
    "TilingConfig",
    "TilingError",
    "build_mask_set",
    "default_fold_split",
    "dump_mask_set",
    "forward_pass_counts",
    "load_mask_set",
    "mask_set_from_dict",
    "mask_set_to_dict",
    "offset_tiling",
    "paper_bounds",
    "replicated_tiling",
    "single_cover_1d",
    "single_cover_2d",
    # verifier
    "CoverageReport",
    "covering_set",
    "multiplicity_grid",
    "verify",
    # masking
    "FillPolicy",
    "Image",
    "ImageError",
    "apply_mask",
    "apply_patch",
    "iter_masked_views",
    "load_image",
    "masked_views",
    "save_image",
    # classifiers
    "Classifier",
    "ClassifierError",
    "ConstantClassifier",
    "ExternalClassifier",
    "LookupTableClassifier",
    "MeanThresholdClassifier",
    "ProtocolError",
    "classify",
    "classify_batch",
    "fnv1a64",
    "image_digest",
    # certify
    "AggregationOutcome",
    "CertificationResult",
    "CoverageError",
    "EvalSummary",
    "aggregate",
    "certify",
    "evaluate",
    "find_vote_exploit",
    "infer",
    "load_manifest",
    "predict_all",
]
