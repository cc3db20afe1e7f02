//! Synthetic shapes corpus, clean-condition segmenter, and degraded dataset
//! materialization.

mod dataset;
mod segmenter;
mod shapes;

pub use dataset::{
    build_dataset, build_from_pairs, record_seed, DatasetManifest, ManifestRecord, MANIFEST_FILE, SUBDIRS,
};
pub use segmenter::{
    decode_segmenter, encode_segmenter, evaluate_segmenter, load_segmenter, produce_degraded_segmentation,
    save_segmenter, train_clean_segmenter, SegmenterConfig,
};
pub use shapes::{generate_scene, generate_toy_dataset, Background, Scene, Shape, ShapeKind, Split, ToyDatasetConfig};
