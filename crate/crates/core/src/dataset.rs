//! Item pools: CSV parsing, label binarization, subgroup assignment and the
//! initial-labeled / unlabeled / test split.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

pub type ItemId = u64;
pub type SubgroupId = u32;

/// Binary class after binarization.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum ClassLabel {
    Zero,
    One,
}

impl ClassLabel {
    pub fn flip(self) -> Self {
        match self {
            ClassLabel::Zero => ClassLabel::One,
            ClassLabel::One => ClassLabel::Zero,
        }
    }

    pub fn as_u8(self) -> u8 {
        self.into()
    }

    pub fn is_positive(self) -> bool {
        self == ClassLabel::One
    }
}

impl From<ClassLabel> for u8 {
    fn from(l: ClassLabel) -> u8 {
        match l {
            ClassLabel::Zero => 0,
            ClassLabel::One => 1,
        }
    }
}

impl From<bool> for ClassLabel {
    fn from(b: bool) -> Self {
        if b {
            ClassLabel::One
        } else {
            ClassLabel::Zero
        }
    }
}

impl TryFrom<u8> for ClassLabel {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        match v {
            0 => Ok(ClassLabel::Zero),
            1 => Ok(ClassLabel::One),
            other => Err(Error::invalid(format!("class label must be 0 or 1, got {other}"))),
        }
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_u8())
    }
}

/// Dense feature vector with finite entries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("feature {i} is not finite")));
        }
        Ok(FeatureVector(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl std::ops::Deref for FeatureVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Item {
    pub id: ItemId,
    pub features: FeatureVector,
    pub gold_label: Option<ClassLabel>,
    pub subgroup: Option<SubgroupId>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledItem {
    pub item: Item,
    pub label: ClassLabel,
}

impl LabeledItem {
    pub fn example(&self) -> Example<'_> {
        Example {
            id: self.item.id,
            features: self.item.features.as_slice(),
            label: self.label,
        }
    }
}

/// Borrowed training example, the unit every learner consumes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Example<'a> {
    pub id: ItemId,
    pub features: &'a [f64],
    pub label: ClassLabel,
}

/// Column designations for [`parse_dataset`]. Every other column is a
/// numeric feature.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub label_column: Option<String>,
    pub subgroup_column: Option<String>,
}

impl CsvSchema {
    pub fn with_label(label: impl Into<String>) -> Self {
        CsvSchema {
            label_column: Some(label.into()),
            subgroup_column: None,
        }
    }

    /// Parse `label:<name>` / `subgroup:<name>` designations.
    pub fn from_designations<'a>(designations: impl IntoIterator<Item = &'a str>) -> Result<Self> {
        let mut schema = CsvSchema::default();
        for d in designations {
            match d.split_once(':') {
                Some(("label", name)) => schema.label_column = Some(name.to_string()),
                Some(("subgroup", name)) => schema.subgroup_column = Some(name.to_string()),
                _ => return Err(Error::invalid(format!("unknown column designation `{d}`"))),
            }
        }
        Ok(schema)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub feature_names: Vec<String>,
    pub items: Vec<Item>,
    /// Raw class name per item, aligned with `items`.
    pub raw_labels: Vec<Option<String>>,
    /// Raw subgroup value for each subgroup id.
    pub subgroup_names: Vec<String>,
}

impl Dataset {
    /// Build from in-memory rows of `(features, raw label, raw subgroup)`.
    /// Ids are assigned in row order.
    pub fn from_rows(
        feature_names: Vec<String>,
        rows: Vec<(Vec<f64>, Option<String>, Option<String>)>,
    ) -> Result<Self> {
        if feature_names.is_empty() {
            return Err(Error::invalid("dataset has no feature columns"));
        }
        let mut subgroup_ids: BTreeMap<String, SubgroupId> = BTreeMap::new();
        for (_, _, g) in &rows {
            if let Some(g) = g {
                subgroup_ids.entry(g.clone()).or_insert(0);
            }
        }
        for (i, v) in subgroup_ids.values_mut().enumerate() {
            *v = i as SubgroupId;
        }
        let subgroup_names = subgroup_ids.keys().cloned().collect();

        let mut items = Vec::with_capacity(rows.len());
        let mut raw_labels = Vec::with_capacity(rows.len());
        for (i, (values, label, group)) in rows.into_iter().enumerate() {
            if values.len() != feature_names.len() {
                return Err(Error::DimensionMismatch {
                    expected: feature_names.len(),
                    actual: values.len(),
                });
            }
            items.push(Item {
                id: i as ItemId,
                features: FeatureVector::new(values)?,
                gold_label: None,
                subgroup: group.map(|g| subgroup_ids[&g]),
            });
            raw_labels.push(label);
        }
        Ok(Dataset {
            feature_names,
            items,
            raw_labels,
            subgroup_names,
        })
    }

    pub fn dimension(&self) -> usize {
        self.feature_names.len()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Raw class frequency histogram.
    pub fn class_counts(&self) -> BTreeMap<String, usize> {
        let mut counts = BTreeMap::new();
        for l in self.raw_labels.iter().flatten() {
            *counts.entry(l.clone()).or_insert(0) += 1;
        }
        counts
    }

    pub fn gold_counts(&self) -> [usize; 2] {
        let mut c = [0; 2];
        for it in &self.items {
            if let Some(l) = it.gold_label {
                c[l.as_u8() as usize] += 1;
            }
        }
        c
    }
}

/// Parse a headered CSV file. Ids follow file order.
pub fn parse_dataset(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<Dataset> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)?;
    let headers = reader.headers()?.clone();
    if headers.is_empty() {
        return Err(Error::EmptyDataset(path.to_path_buf()));
    }
    let find = |name: &Option<String>| -> Result<Option<usize>> {
        match name {
            None => Ok(None),
            Some(n) => headers
                .iter()
                .position(|h| h == n)
                .map(Some)
                .ok_or_else(|| Error::Parse {
                    path: path.to_path_buf(),
                    line: 1,
                    message: format!("no column named `{n}`"),
                }),
        }
    };
    let label_col = find(&schema.label_column)?;
    let group_col = find(&schema.subgroup_column)?;
    let feature_cols: Vec<usize> = (0..headers.len())
        .filter(|&c| Some(c) != label_col && Some(c) != group_col)
        .collect();
    let feature_names = feature_cols.iter().map(|&c| headers[c].to_string()).collect();

    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            Error::Parse {
                path: path.to_path_buf(),
                line,
                message: e.to_string(),
            }
        })?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let mut values = Vec::with_capacity(feature_cols.len());
        for &c in &feature_cols {
            let raw = &record[c];
            let v: f64 = raw.parse().map_err(|_| Error::NonNumericFeature {
                path: path.to_path_buf(),
                line,
                column: headers[c].to_string(),
                value: raw.to_string(),
            })?;
            if !v.is_finite() {
                return Err(Error::NonNumericFeature {
                    path: path.to_path_buf(),
                    line,
                    column: headers[c].to_string(),
                    value: raw.to_string(),
                });
            }
            values.push(v);
        }
        let non_empty = |c: Option<usize>| {
            c.map(|c| record[c].to_string()).filter(|s| !s.is_empty())
        };
        rows.push((values, non_empty(label_col), non_empty(group_col)));
    }
    if rows.is_empty() {
        return Err(Error::EmptyDataset(path.to_path_buf()));
    }
    Dataset::from_rows(feature_names, rows)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BinarizePolicy {
    /// Most frequent raw class becomes class 1; ties go to the
    /// lexicographically smallest class name.
    MajorityVsRest,
    Explicit {
        positive: BTreeSet<String>,
        negative: BTreeSet<String>,
    },
}

pub fn binarize_labels(dataset: &Dataset, policy: &BinarizePolicy) -> Result<Dataset> {
    let counts = dataset.class_counts();
    if counts.len() < 2 {
        return Err(Error::invalid(format!(
            "binarization needs at least 2 raw classes, found {}",
            counts.len()
        )));
    }
    let positive: BTreeSet<String> = match policy {
        BinarizePolicy::MajorityVsRest => {
            // BTreeMap iterates names ascending, so max_by keeping the first max
            // needs a reversed comparison on ties.
            let (name, _) = counts
                .iter()
                .max_by(|a, b| a.1.cmp(b.1).then_with(|| b.0.cmp(a.0)))
                .expect("non-empty");
            BTreeSet::from([name.clone()])
        }
        BinarizePolicy::Explicit { positive, negative } => {
            if let Some(both) = positive.intersection(negative).next() {
                return Err(Error::invalid(format!("class `{both}` is on both sides of the partition")));
            }
            let missing: Vec<&String> = counts
                .keys()
                .filter(|k| !positive.contains(*k) && !negative.contains(*k))
                .collect();
            if !missing.is_empty() {
                return Err(Error::invalid(format!("partition does not cover classes {missing:?}")));
            }
            positive.clone()
        }
    };
    let mut out = dataset.clone();
    for (item, raw) in out.items.iter_mut().zip(&dataset.raw_labels) {
        item.gold_label = raw.as_ref().map(|r| ClassLabel::from(positive.contains(r)));
    }
    Ok(out)
}

/// Hash-bucket item ids into `groups` subgroups for items that have none.
pub fn assign_subgroups(dataset: &Dataset, groups: u32) -> Result<Dataset> {
    if groups == 0 {
        return Err(Error::invalid("subgroup count must be at least 1"));
    }
    let mut out = dataset.clone();
    for item in &mut out.items {
        if item.subgroup.is_none() {
            item.subgroup = Some((seed::mix64(item.id) % groups as u64) as SubgroupId);
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoolSplit {
    pub initial_labeled: Vec<LabeledItem>,
    pub unlabeled: Vec<Item>,
    pub test: Vec<LabeledItem>,
}

impl PoolSplit {
    pub fn len(&self) -> usize {
        self.initial_labeled.len() + self.unlabeled.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        let ids = self
            .initial_labeled
            .iter()
            .map(|l| l.item.id)
            .chain(self.unlabeled.iter().map(|i| i.id))
            .chain(self.test.iter().map(|l| l.item.id));
        for id in ids {
            if !seen.insert(id) {
                return Err(Error::invalid(format!("item {id} appears in more than one pool")));
            }
        }
        let mut classes = [false; 2];
        for l in &self.initial_labeled {
            classes[l.label.as_u8() as usize] = true;
        }
        if classes != [true, true] {
            return Err(Error::invalid("initial labeled pool must contain both classes"));
        }
        Ok(())
    }
}

pub const SPLIT_RETRIES: usize = 100;

/// Split into initial-labeled, unlabeled and test pools.
///
/// The initial and test pools are drawn from items that carry a gold label;
/// everything else is unlabeled. Sizes are `max(2, round(f * n))` and
/// `round(t * n)` of the whole dataset. The initial pool is re-drawn until
/// it holds both classes.
pub fn split_pools(dataset: &Dataset, initial_fraction: f64, test_fraction: f64, seed: u64) -> Result<PoolSplit> {
    if !(initial_fraction > 0.0 && initial_fraction < 1.0) {
        return Err(Error::invalid(format!("initial_fraction {initial_fraction} not in (0,1)")));
    }
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(Error::invalid(format!("test_fraction {test_fraction} not in [0,1)")));
    }
    if initial_fraction + test_fraction >= 1.0 {
        return Err(Error::invalid("initial_fraction + test_fraction must be < 1"));
    }
    let n = dataset.len();
    let mut labeled: Vec<&Item> = dataset.items.iter().filter(|i| i.gold_label.is_some()).collect();
    labeled.sort_by_key(|i| i.id);
    let counts = dataset.gold_counts();
    if counts[0] == 0 || counts[1] == 0 {
        return Err(Error::invalid("dataset must contain gold labels of both classes"));
    }
    let n_init = ((initial_fraction * n as f64).round() as usize).max(2);
    let n_test = (test_fraction * n as f64).round() as usize;
    if n_init + n_test > labeled.len() {
        return Err(Error::invalid(format!(
            "{} gold-labeled items cannot fill an initial pool of {n_init} and a test pool of {n_test}",
            labeled.len()
        )));
    }

    for attempt in 0..SPLIT_RETRIES {
        let mut order = labeled.clone();
        order.shuffle(&mut seed::rng(seed::derive(seed, attempt as u64)));
        let init = &order[..n_init];
        let has_both = init.iter().any(|i| i.gold_label == Some(ClassLabel::One))
            && init.iter().any(|i| i.gold_label == Some(ClassLabel::Zero));
        if !has_both {
            continue;
        }
        let as_labeled = |it: &&Item| LabeledItem {
            item: (*it).clone(),
            label: it.gold_label.expect("filtered"),
        };
        let mut initial_labeled: Vec<LabeledItem> = init.iter().map(as_labeled).collect();
        let mut test: Vec<LabeledItem> = order[n_init..n_init + n_test].iter().map(as_labeled).collect();
        let taken: BTreeSet<ItemId> = order[..n_init + n_test].iter().map(|i| i.id).collect();
        let unlabeled: Vec<Item> = dataset.items.iter().filter(|i| !taken.contains(&i.id)).cloned().collect();
        initial_labeled.sort_by_key(|l| l.item.id);
        test.sort_by_key(|l| l.item.id);
        return Ok(PoolSplit {
            initial_labeled,
            unlabeled,
            test,
        });
    }
    Err(Error::SplitRetriesExhausted(SPLIT_RETRIES))
}
