//! On-disk synthetic datasets.
//!
//! ```text
//! DIR/e.jsonl  DIR/o.jsonl  DIR/test.jsonl
//! DIR/images/<id>.ppm
//! DIR/labels/<id>.ivmh      training label (possibly corrupted)
//! DIR/gt/<id>.ivmh          ground truth for o-records
//! ```
//!
//! `o` records carry two extra manifest fields for evaluation only:
//! `gt_label_path` and `gt_clean`.

use std::fs;
use std::path::Path;

use serde_json::Value;

use super::ivmh::{read_ivmh, write_ivmh};
use super::manifest::{read_manifest, write_manifest, AnnotationRecord, Split};
use super::pnm::{read_pnm, write_pnm};
use crate::dwsl::TrainSample;
use crate::error::{Error, Result};
use crate::heatmap::{Heatmap, ImageBuffer, DEFAULT_TAU};
use crate::synth::{MixedDataset, SynthRecord};

pub const E_MANIFEST: &str = "e.jsonl";
pub const O_MANIFEST: &str = "o.jsonl";
pub const TEST_MANIFEST: &str = "test.jsonl";

fn write_records(dir: &Path, manifest: &str, records: &[SynthRecord], split: Split, with_gt: bool) -> Result<()> {
    let mut out = Vec::with_capacity(records.len());
    for r in records {
        let image_path = format!("images/{}.ppm", r.id);
        let label_path = format!("labels/{}.ivmh", r.id);
        write_pnm(&dir.join(&image_path), &r.scene.image)?;
        write_ivmh(&dir.join(&label_path), &r.label)?;
        let mut rec = AnnotationRecord {
            id: r.id.clone(),
            image_path,
            instruction: r.scene.instruction.to_string(),
            label_path,
            source: r.source.clone(),
            split,
            bbox: r.label.activated_bbox(DEFAULT_TAU),
            extra: Default::default(),
        };
        if with_gt {
            let gt_path = format!("gt/{}.ivmh", r.id);
            write_ivmh(&dir.join(&gt_path), r.ground_truth())?;
            rec.extra.insert("gt_label_path".into(), Value::String(gt_path));
            rec.extra.insert("gt_clean".into(), Value::Bool(r.clean));
        }
        out.push(rec);
    }
    write_manifest(&dir.join(manifest), &out)
}

/// Write `data` and a held-out `test` split under `dir`.
pub fn write_synth_dataset(dir: &Path, data: &MixedDataset, test: &[SynthRecord]) -> Result<()> {
    for sub in ["images", "labels", "gt"] {
        fs::create_dir_all(dir.join(sub))?;
    }
    write_records(dir, E_MANIFEST, &data.d_e, Split::E, false)?;
    write_records(dir, O_MANIFEST, &data.d_o, Split::O, true)?;
    write_records(dir, TEST_MANIFEST, test, Split::E, false)
}

#[derive(Debug, Clone)]
pub struct LoadedRecord {
    pub record: AnnotationRecord,
    pub image: ImageBuffer,
    pub label: Heatmap,
    pub ground_truth: Option<Heatmap>,
}

impl LoadedRecord {
    /// Evaluation-only clean flag; records without one count as clean.
    pub fn is_clean(&self) -> bool {
        self.record.extra_bool("gt_clean").unwrap_or(true)
    }

    pub fn to_train_sample(&self) -> Result<TrainSample> {
        TrainSample::new(
            self.record.id.clone(),
            self.image.clone(),
            &self.record.instruction,
            self.label.clone(),
        )
    }
}

fn load_record(base: &Path, rec: &AnnotationRecord) -> Result<LoadedRecord> {
    let image = read_pnm(&base.join(&rec.image_path))?;
    let label = read_ivmh(&base.join(&rec.label_path))?;
    if image.dims() != label.dims() {
        return Err(Error::DimensionMismatch {
            expected: image.dims(),
            found: label.dims(),
        });
    }
    let ground_truth = match rec.extra_str("gt_label_path") {
        Some(p) => Some(read_ivmh(&base.join(p))?),
        None => None,
    };
    Ok(LoadedRecord {
        record: rec.clone(),
        image,
        label,
        ground_truth,
    })
}

/// Load every record of a manifest; failures name the offending record.
pub fn load_manifest_records(manifest: &Path) -> Result<Vec<LoadedRecord>> {
    let base = manifest.parent().unwrap_or(Path::new("."));
    read_manifest(manifest)?
        .iter()
        .map(|rec| {
            load_record(base, rec).map_err(|e| Error::Record {
                id: rec.id.clone(),
                source: Box::new(e),
            })
        })
        .collect()
}

pub fn to_train_samples(records: &[LoadedRecord]) -> Result<Vec<TrainSample>> {
    records.iter().map(LoadedRecord::to_train_sample).collect()
}
