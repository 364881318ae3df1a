"""Dataset ingestion: VOC/COCO parsing, augmentation, manifests and feature files."""

from .augment import (
    COCO_TO_VOC_PAIRS,
    DEFAULT_CLASS_MAP,
    ClassMap,
    NegativeShortfallWarning,
    add_sampled_negatives,
    drop_unlabelled_images,
    effective_sizes,
    filter_small_objects,
    map_coco_labels,
    merge_manifests,
    sample_negatives,
)
from .coco import parse_coco_json, to_coco_json
from .features import (
    FeatureStore,
    dumps_features,
    load_feature_store,
    loads_features,
    read_feature_file,
    write_feature_file,
)
from .manifest_io import (
    proposals_from_manifest,
    read_manifest,
    read_proposals,
    write_manifest,
    write_proposals,
)
from .voc import parse_voc_xml, to_voc_xml
