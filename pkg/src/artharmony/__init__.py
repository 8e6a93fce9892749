"""Painterly image harmonization with object-aware style hallucination."""

from .imagecore import (
    BBox,
    ManifestEntry,
    composite_paste,
    load_image,
    load_mask,
    patch_grid,
    read_manifest,
    resample_mask,
    save_image,
    save_mask,
    write_manifest,
)
from .encoder import (
    FeatureEncoder,
    StyleVector,
    background_style,
    build_encoder,
    extract_features,
    foreground_style,
    masked_stats,
    object_feature,
)
from .harmonizer import (
    HarmonizerModel,
    MappingModule,
    adain_apply,
    blend,
    hallucinate_style,
    harmonize,
    load_checkpoint,
    save_checkpoint,
)
from .losses import (
    LossReport,
    loss_content,
    loss_map_c,
    loss_map_p,
    loss_obj,
    loss_style,
    loss_total,
)
from .retrieval import EmbeddingIndex, embed, retrieve_topk
from .datapipe import build_pairs, dataset_stats, generate_toy_dataset
from .trainer import TrainConfig, train

__version__ = "0.1.0"
