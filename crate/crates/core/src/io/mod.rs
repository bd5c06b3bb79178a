//! Serialization: JSONL manifests, PPM/PGM images, `IVMH` heatmaps,
//! `IVMP` model files and dataset statistics.

pub mod dataset;
pub mod ivmh;
pub mod manifest;
pub mod params;
pub mod pnm;
pub mod stats;

pub use dataset::{load_manifest_records, to_train_samples, write_synth_dataset, LoadedRecord};
pub use ivmh::{decode_ivmh, encode_ivmh, read_ivmh, write_ivmh};
pub use manifest::{read_manifest, write_manifest, AnnotationRecord, Split};
pub use params::{read_discriminator, read_generator, write_discriminator, write_generator, write_history};
pub use pnm::{decode_pnm, encode_pnm, read_pnm, write_pnm};
pub use stats::{area_ratios, dataset_stats, stats_from_ratios, DatasetStats};
