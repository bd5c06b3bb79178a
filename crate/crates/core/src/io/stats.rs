//! Per-source histograms of instruction-relevant area.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use super::ivmh::read_ivmh;
use super::manifest::AnnotationRecord;
use crate::error::{Error, Result};

pub const SMALL_AREA: f64 = 0.4;

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetStats {
    pub n_bins: usize,
    /// Bin counts keyed by source tag.
    pub histograms: BTreeMap<String, Vec<usize>>,
    pub total: usize,
    /// Fraction of all records with area ratio below [`SMALL_AREA`].
    pub fraction_small: f64,
}

pub fn area_bin(ratio: f64, n_bins: usize) -> usize {
    ((ratio * n_bins as f64).floor() as usize).min(n_bins - 1)
}

/// Histogram `(source, area_ratio)` pairs.
pub fn stats_from_ratios<'a, I>(items: I, n_bins: usize) -> Result<DatasetStats>
where
    I: IntoIterator<Item = (&'a str, f64)>,
{
    if n_bins == 0 {
        return Err(Error::InvalidValue("n_bins must be >= 1".into()));
    }
    let mut histograms: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    let (mut total, mut small) = (0usize, 0usize);
    for (source, ratio) in items {
        if !(0.0..=1.0).contains(&ratio) {
            return Err(Error::InvalidValue(format!("area ratio {ratio}")));
        }
        histograms
            .entry(source.to_string())
            .or_insert_with(|| vec![0; n_bins])[area_bin(ratio, n_bins)] += 1;
        total += 1;
        if ratio < SMALL_AREA {
            small += 1;
        }
    }
    let fraction_small = if total == 0 { 0.0 } else { small as f64 / total as f64 };
    Ok(DatasetStats {
        n_bins,
        histograms,
        total,
        fraction_small,
    })
}

/// `(source, area_ratio)` for every record; labels are read relative to `base`.
pub fn area_ratios(records: &[AnnotationRecord], base: &Path, tau: f64) -> Result<Vec<(String, f64)>> {
    records
        .iter()
        .map(|r| {
            let h = read_ivmh(&base.join(&r.label_path)).map_err(|e| Error::Record {
                id: r.id.clone(),
                source: Box::new(e),
            })?;
            Ok((r.source.clone(), h.area_ratio(tau)))
        })
        .collect()
}

pub fn dataset_stats(records: &[AnnotationRecord], base: &Path, tau: f64, n_bins: usize) -> Result<DatasetStats> {
    let ratios = area_ratios(records, base, tau)?;
    stats_from_ratios(ratios.iter().map(|(s, r)| (s.as_str(), *r)), n_bins)
}

impl fmt::Display for DatasetStats {
    /// One `key=value` line per fact.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "records={}", self.total)?;
        writeln!(f, "bins={}", self.n_bins)?;
        for (source, counts) in &self.histograms {
            let joined: Vec<String> = counts.iter().map(usize::to_string).collect();
            writeln!(f, "hist.{source}={}", joined.join(","))?;
        }
        writeln!(f, "fraction_below_0.4={:.6}", self.fraction_small)
    }
}
