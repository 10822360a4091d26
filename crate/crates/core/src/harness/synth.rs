//! Bundled synthetic two-class datasets in two dimensions.
//!
//! * `separable`: two Gaussian clouds along the diagonal, with points
//!   closer than 0.1 to the separating line redrawn, so a linear model can
//!   reach zero error but few random labels do not pin the line down.
//! * `overlap`: the same clouds pulled close together; about a fifth of
//!   the points fall on the wrong side of the best line.
//! * `imbalanced`: one positive for every nine negatives, positives
//!   centred near the boundary.
//!
//! Class values are `positive` and `negative` in a column named `class`.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::{BinarizePolicy, Dataset};
use crate::error::{Error, Result};
use crate::seed;

pub const POSITIVE: &str = "positive";
pub const NEGATIVE: &str = "negative";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SynthKind {
    Separable,
    Overlap,
    Imbalanced,
}

impl SynthKind {
    pub const ALL: [SynthKind; 3] = [SynthKind::Separable, SynthKind::Overlap, SynthKind::Imbalanced];

    pub fn name(self) -> &'static str {
        match self {
            SynthKind::Separable => "separable",
            SynthKind::Overlap => "overlap",
            SynthKind::Imbalanced => "imbalanced",
        }
    }
}

impl fmt::Display for SynthKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SynthKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SynthKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown synthetic kind `{s}` (separable, overlap, imbalanced)")))
    }
}

/// Positives are the named class, whatever their share.
pub fn binarize_policy() -> BinarizePolicy {
    BinarizePolicy::Explicit {
        positive: [POSITIVE.to_string()].into(),
        negative: [NEGATIVE.to_string()].into(),
    }
}

/// `n` rows; exactly `round(share * n)` positives (at least one of each
/// class), rows shuffled.
pub fn generate(kind: SynthKind, n: usize, seed: u64) -> Result<Dataset> {
    if n < 2 {
        return Err(Error::invalid("a synthetic dataset needs at least 2 rows"));
    }
    let mut rng = seed::rng(seed);
    let share = match kind {
        SynthKind::Imbalanced => 0.1,
        _ => 0.5,
    };
    let positives = ((share * n as f64).round() as usize).clamp(1, n - 1);
    let diag = std::f64::consts::FRAC_1_SQRT_2;
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let positive = i < positives;
        let sign = if positive { 1.0 } else { -1.0 };
        let (centre, margin) = match (kind, positive) {
            (SynthKind::Separable, _) => (sign, Some(0.1)),
            (SynthKind::Overlap, _) => (0.8 * sign, None),
            (SynthKind::Imbalanced, true) => (1.0, None),
            (SynthKind::Imbalanced, false) => (-1.5, None),
        };
        let (x, y) = loop {
            let along = centre + rng.sample::<f64, _>(StandardNormal);
            let across: f64 = rng.sample(StandardNormal);
            if margin.is_none_or(|m| sign * along >= m) {
                break ((along - across) * diag, (along + across) * diag);
            }
        };
        let label = if positive { POSITIVE } else { NEGATIVE };
        rows.push((vec![round6(x), round6(y)], Some(label.to_string()), None));
    }
    rows.shuffle(&mut rng);
    Dataset::from_rows(vec!["x1".into(), "x2".into()], rows)
}

/// Six decimals keep the CSV short and round-trip exactly.
fn round6(v: f64) -> f64 {
    (v * 1e6).round() / 1e6
}

pub fn write_csv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = dataset.feature_names.clone();
    header.push("class".into());
    w.write_record(&header)?;
    for (item, label) in dataset.items.iter().zip(&dataset.raw_labels) {
        let mut record: Vec<String> = item.features.iter().map(|v| v.to_string()).collect();
        record.push(label.clone().unwrap_or_default());
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{parse_dataset, CsvSchema};

    #[test]
    fn counts_and_determinism() {
        let d = generate(SynthKind::Imbalanced, 200, 4).unwrap();
        assert_eq!(d.class_counts()[POSITIVE], 20);
        assert_eq!(d.class_counts()[NEGATIVE], 180);
        assert_eq!(d, generate(SynthKind::Imbalanced, 200, 4).unwrap());
        assert_ne!(d, generate(SynthKind::Imbalanced, 200, 5).unwrap());
        assert_eq!(generate(SynthKind::Overlap, 101, 0).unwrap().class_counts()[POSITIVE], 51);
    }

    #[test]
    fn separable_has_a_margin() {
        let d = generate(SynthKind::Separable, 300, 1).unwrap();
        for (item, label) in d.items.iter().zip(&d.raw_labels) {
            let along = (item.features[0] + item.features[1]) * std::f64::consts::FRAC_1_SQRT_2;
            let sign = if label.as_deref() == Some(POSITIVE) { 1.0 } else { -1.0 };
            assert!(sign * along >= 0.1 - 1e-5);
        }
    }

    #[test]
    fn csv_round_trip() {
        let d = generate(SynthKind::Overlap, 30, 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("o.csv");
        write_csv(&d, &path).unwrap();
        let back = parse_dataset(&path, &CsvSchema::with_label("class")).unwrap();
        assert_eq!(back.items, d.items);
        assert_eq!(back.raw_labels, d.raw_labels);
    }
}
