//! Effectiveness scores for unlabeled items and score-proportional batch
//! selection.
//!
//! * Uncertainty: `R(u)(1 - R(u))` where `R(u)` is the fraction of
//!   bootstrap members predicting class 1.
//! * MinExpError: `p(u) e_right + (1 - p(u)) e_wrong` is the expected
//!   cross-validated error after adding `u`; items are scored by one minus
//!   that, plus a smoothing constant `c`, renormalized to sum to one.
//! * MarginDistance: `1 / (1 + |w.x + b|)` for linear models.
//! * Baseline: uniform.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bootstrap::LabelMatrix;
use crate::classifiers::{FoldPlan, Learner, Predictor};
use crate::dataset::{Example, Item, ItemId};
use crate::error::{Error, Result};
use crate::metrics::Metric;
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RankerKind {
    Uncertainty,
    MinExpError,
    MarginDistance,
    Baseline,
}

impl RankerKind {
    pub fn name(self) -> &'static str {
        match self {
            RankerKind::Uncertainty => "uncertainty",
            RankerKind::MinExpError => "minexperror",
            RankerKind::MarginDistance => "margindistance",
            RankerKind::Baseline => "baseline",
        }
    }

    pub const ALL: [RankerKind; 4] = [
        RankerKind::Uncertainty,
        RankerKind::MinExpError,
        RankerKind::MarginDistance,
        RankerKind::Baseline,
    ];
}

impl fmt::Display for RankerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RankerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RankerKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown ranker `{s}`")))
    }
}

/// Non-negative finite score per item of the current unlabeled pool.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreVector {
    pub kind: RankerKind,
    ids: Vec<ItemId>,
    scores: Vec<f64>,
}

impl ScoreVector {
    pub fn new(kind: RankerKind, ids: Vec<ItemId>, scores: Vec<f64>) -> Result<Self> {
        if ids.len() != scores.len() {
            return Err(Error::invalid("one score per item required"));
        }
        if let Some(s) = scores.iter().find(|s| !s.is_finite() || **s < 0.0) {
            return Err(Error::invalid(format!("score {s} is not finite and non-negative")));
        }
        Ok(ScoreVector { kind, ids, scores })
    }

    pub fn ids(&self) -> &[ItemId] {
        &self.ids
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn get(&self, id: ItemId) -> Option<f64> {
        self.ids.iter().position(|&i| i == id).map(|p| self.scores[p])
    }

    pub fn iter(&self) -> impl Iterator<Item = (ItemId, f64)> + '_ {
        self.ids.iter().copied().zip(self.scores.iter().copied())
    }
}

pub fn uncertainty_scores(labels: &LabelMatrix) -> Result<ScoreVector> {
    if labels.is_empty() || labels.shape().1 == 0 {
        return Err(Error::invalid("uncertainty needs a non-empty label matrix"));
    }
    let scores = (0..labels.shape().0)
        .map(|i| {
            let r = labels.row_mean(i);
            r * (1.0 - r)
        })
        .collect();
    ScoreVector::new(RankerKind::Uncertainty, labels.ids().to_vec(), scores)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MinExpErrorParams {
    /// Folds for the error estimates; `None` means `min(3, |labeled|)`.
    pub cv_folds: Option<usize>,
    /// Constant `c` added to every expected training accuracy.
    pub smoothing: f64,
}

impl Default for MinExpErrorParams {
    fn default() -> Self {
        MinExpErrorParams {
            cv_folds: None,
            smoothing: 1.0,
        }
    }
}

impl MinExpErrorParams {
    pub fn folds_for(&self, labeled: usize) -> usize {
        self.cv_folds.unwrap_or_else(|| labeled.min(3))
    }
}

/// Per-item ingredients of the MinExpError score.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinExpErrorTerms {
    pub id: ItemId,
    /// Fraction of bootstrap members agreeing with the base model.
    pub agreement: f64,
    /// CV error with `(u, base prediction)` added to training.
    pub err_right: f64,
    /// CV error with `(u, flipped prediction)` added to training.
    pub err_wrong: f64,
}

impl MinExpErrorTerms {
    pub fn expected_error(&self) -> f64 {
        expected_error(self.agreement, self.err_right, self.err_wrong)
    }

    pub fn expected_accuracy(&self) -> f64 {
        1.0 - self.expected_error()
    }
}

pub fn expected_error(agreement: f64, err_right: f64, err_wrong: f64) -> f64 {
    agreement * err_right + (1.0 - agreement) * err_wrong
}

/// `(x_i + c) / sum_j (x_j + c)`.
pub fn smooth_and_normalize(values: &[f64], c: f64) -> Result<Vec<f64>> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::invalid(format!("smoothing constant must be positive, got {c}")));
    }
    let shifted: Vec<f64> = values.iter().map(|v| v + c).collect();
    let total: f64 = shifted.iter().sum();
    if total <= 0.0 {
        return Err(Error::invalid("smoothed scores sum to zero"));
    }
    Ok(shifted.into_iter().map(|v| v / total).collect())
}

/// Compute agreement and the two cross-validated errors for every item.
///
/// One fold partition of `labeled` (id-sorted, seeded by `seed`) is shared
/// by all candidates. Items are evaluated in parallel.
pub fn min_exp_error_terms<L: Learner>(
    learner: &L,
    labeled: &[Example<'_>],
    base_model: &L::Model,
    ensemble_labels: &LabelMatrix,
    unlabeled: &[Item],
    cv_folds: usize,
    seed: u64,
) -> Result<Vec<MinExpErrorTerms>> {
    if ensemble_labels.ids().len() != unlabeled.len()
        || ensemble_labels.ids().iter().zip(unlabeled).any(|(a, b)| *a != b.id)
    {
        return Err(Error::invalid("label matrix rows must match the unlabeled items"));
    }
    let mut sorted = labeled.to_vec();
    sorted.sort_by_key(|e| e.id);
    let plan = FoldPlan::new(&sorted, cv_folds, seed)?;
    let m = ensemble_labels.shape().1 as f64;

    unlabeled
        .par_iter()
        .enumerate()
        .map(|(row, item)| {
            let predicted = base_model.predict(&item.features)?;
            let agree = ensemble_labels
                .row(row)
                .iter()
                .filter(|&&l| l == predicted.as_u8())
                .count() as f64
                / m;
            let candidate = |label| Example {
                id: item.id,
                features: item.features.as_slice(),
                label,
            };
            let acc_right = plan.evaluate(learner, &sorted, Some(candidate(predicted)), Metric::Accuracy)?;
            let acc_wrong = plan.evaluate(learner, &sorted, Some(candidate(predicted.flip())), Metric::Accuracy)?;
            Ok(MinExpErrorTerms {
                id: item.id,
                agreement: agree,
                err_right: 1.0 - acc_right,
                err_wrong: 1.0 - acc_wrong,
            })
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
pub fn min_exp_error_scores<L: Learner>(
    learner: &L,
    labeled: &[Example<'_>],
    base_model: &L::Model,
    ensemble_labels: &LabelMatrix,
    unlabeled: &[Item],
    params: &MinExpErrorParams,
    seed: u64,
) -> Result<ScoreVector> {
    let folds = params.folds_for(labeled.len());
    if labeled.len() < folds || folds < 2 {
        return Err(Error::invalid(format!(
            "MinExpError needs at least {} labeled items for {folds}-fold estimates, got {}",
            folds.max(2),
            labeled.len()
        )));
    }
    let terms = min_exp_error_terms(learner, labeled, base_model, ensemble_labels, unlabeled, folds, seed)?;
    let accuracy: Vec<f64> = terms.iter().map(MinExpErrorTerms::expected_accuracy).collect();
    let scores = smooth_and_normalize(&accuracy, params.smoothing)?;
    ScoreVector::new(RankerKind::MinExpError, terms.iter().map(|t| t.id).collect(), scores)
}

pub fn margin_distance_scores<M: Predictor>(model: &M, unlabeled: &[Item]) -> Result<ScoreVector> {
    let scores = unlabeled
        .iter()
        .map(|u| model.decision_value(&u.features).map(|d| 1.0 / (1.0 + d.abs())))
        .collect::<Result<Vec<_>>>()?;
    ScoreVector::new(RankerKind::MarginDistance, unlabeled.iter().map(|u| u.id).collect(), scores)
}

pub fn baseline_scores(unlabeled: &[Item]) -> Result<ScoreVector> {
    if unlabeled.is_empty() {
        return Err(Error::invalid("baseline scores of an empty pool"));
    }
    let w = 1.0 / unlabeled.len() as f64;
    ScoreVector::new(
        RankerKind::Baseline,
        unlabeled.iter().map(|u| u.id).collect(),
        vec![w; unlabeled.len()],
    )
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionBatch {
    pub item_ids: Vec<ItemId>,
    pub seed: u64,
}

/// Weighted sampling without replacement: each draw picks a remaining item
/// with probability proportional to its score; once every remaining score is
/// zero the draws are uniform.
pub fn select_batch(scores: &ScoreVector, batch_size: usize, seed: u64) -> Result<SelectionBatch> {
    if batch_size == 0 {
        return Err(Error::invalid("batch size must be at least 1"));
    }
    if scores.is_empty() {
        return Err(Error::invalid("cannot select from an empty pool"));
    }
    let mut rng = seed::rng(seed);
    let mut remaining: Vec<(ItemId, f64)> = scores.iter().collect();
    let take = batch_size.min(remaining.len());
    let mut item_ids = Vec::with_capacity(take);
    for _ in 0..take {
        let total: f64 = remaining.iter().map(|(_, w)| w).sum();
        let pick = if total > 0.0 {
            let target = rng.gen::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = None;
            for (i, (_, w)) in remaining.iter().enumerate() {
                acc += w;
                if *w > 0.0 && target < acc {
                    chosen = Some(i);
                    break;
                }
            }
            // rounding can leave `target` just past the last partial sum
            chosen.unwrap_or_else(|| remaining.iter().rposition(|(_, w)| *w > 0.0).expect("positive total"))
        } else {
            rng.gen_range(0..remaining.len())
        };
        item_ids.push(remaining.remove(pick).0);
    }
    Ok(SelectionBatch { item_ids, seed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifiers::{ClassifierSpec, TrainedModel};
    use crate::dataset::{ClassLabel, FeatureVector};
    use approx::assert_relative_eq;

    fn matrix(rows: &[&[u8]]) -> LabelMatrix {
        LabelMatrix::from_rows((0..rows.len() as u64).collect(), rows.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    fn item(id: ItemId, x: Vec<f64>) -> Item {
        Item {
            id,
            features: FeatureVector::new(x).unwrap(),
            gold_label: None,
            subgroup: None,
        }
    }

    #[test]
    fn uncertainty_examples() {
        let s = uncertainty_scores(&matrix(&[
            &[1; 10],
            &[1, 1, 1, 1, 1, 0, 0, 0, 0, 0],
            &[1, 1, 1, 0, 0, 0, 0, 0, 0, 0],
        ]))
        .unwrap();
        assert_eq!(s.scores()[0], 0.0);
        assert_eq!(s.scores()[1], 0.25);
        assert_relative_eq!(s.scores()[2], 0.21, epsilon = 1e-12);
    }

    #[test]
    fn expected_error_hand_values() {
        assert_relative_eq!(expected_error(0.8, 0.1, 0.3), 0.14, epsilon = 1e-15);
        assert_relative_eq!(1.0 - expected_error(0.8, 0.1, 0.3), 0.86, epsilon = 1e-15);
        assert_eq!(expected_error(1.0, 0.2, 0.9), 0.2);
        assert_eq!(expected_error(1.0, 0.2, 0.0), 0.2);
    }

    #[test]
    fn smoothing_preserves_ties() {
        let s = smooth_and_normalize(&[0.5, 0.5, 0.9], 1.0).unwrap();
        assert_eq!(s[0], s[1]);
        assert_relative_eq!(s.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        assert!(smooth_and_normalize(&[0.5], 0.0).is_err());
    }

    #[test]
    fn min_exp_error_unanimous_is_err_right() {
        let train: Vec<(Vec<f64>, ClassLabel)> = (0..12)
            .map(|i| (vec![i as f64 - 5.5], ClassLabel::from(i >= 6)))
            .collect();
        let ex: Vec<Example> = train
            .iter()
            .enumerate()
            .map(|(i, (x, y))| Example {
                id: i as u64,
                features: x,
                label: *y,
            })
            .collect();
        let spec = ClassifierSpec::default();
        let base = spec.fit(&ex, 0).unwrap();
        let items = vec![item(100, vec![40.0]), item(101, vec![0.1])];
        let lm = LabelMatrix::from_rows(vec![100, 101], vec![vec![1; 10], vec![1, 0, 1, 0, 1, 0, 1, 0, 1, 0]]).unwrap();
        let terms = min_exp_error_terms(&spec, &ex, &base, &lm, &items, 3, 5).unwrap();
        assert_eq!(terms[0].agreement, 1.0);
        assert_eq!(terms[0].expected_error(), terms[0].err_right);
        assert_eq!(terms[1].agreement, 0.5);

        let s = min_exp_error_scores(&spec, &ex, &base, &lm, &items, &MinExpErrorParams::default(), 5).unwrap();
        assert_relative_eq!(s.scores().iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        assert!(s.scores().iter().all(|&v| v > 0.0));
        assert!(min_exp_error_scores(&spec, &ex[..1], &base, &lm, &items, &MinExpErrorParams::default(), 5).is_err());
    }

    #[test]
    fn margin_distance_examples() {
        let m = TrainedModel::linear(vec![1.0, 0.0], 0.0);
        let s = margin_distance_scores(&m, &[item(0, vec![0.0, 3.0]), item(1, vec![1.0, 0.0]), item(2, vec![-4.0, 0.0])]).unwrap();
        assert_eq!(s.scores(), &[1.0, 0.5, 0.2]);
    }

    #[test]
    fn baseline_examples() {
        let s = baseline_scores(&[item(0, vec![0.0]), item(1, vec![0.0]), item(2, vec![0.0])]).unwrap();
        assert!(s.scores().iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));
        assert_eq!(baseline_scores(&[item(9, vec![0.0])]).unwrap().scores(), &[1.0]);
        assert!(baseline_scores(&[]).is_err());
    }

    #[test]
    fn selection_edge_cases() {
        let s = ScoreVector::new(RankerKind::Baseline, vec![4, 5, 6], vec![0.0, 1.0, 0.0]).unwrap();
        for seed in 0..20 {
            assert_eq!(select_batch(&s, 1, seed).unwrap().item_ids, vec![5]);
        }
        let all = select_batch(&s, 10, 3).unwrap();
        let mut ids = all.item_ids.clone();
        ids.sort_unstable();
        assert_eq!(ids, vec![4, 5, 6]);
        assert_eq!(all.item_ids[0], 5);
        assert_eq!(all, select_batch(&s, 10, 3).unwrap());
        assert!(select_batch(&s, 0, 3).is_err());
        let empty = ScoreVector::new(RankerKind::Baseline, vec![], vec![]).unwrap();
        assert!(select_batch(&empty, 1, 3).is_err());
    }

    #[test]
    fn uniform_first_draw_frequency() {
        // Monte Carlo oracle: each of 4 uniform items is drawn first w.p. 1/4.
        let s = ScoreVector::new(RankerKind::Baseline, vec![0, 1, 2, 3], vec![1.0; 4]).unwrap();
        let trials = 1_000_000u64;
        let mut first = [0u64; 4];
        for t in 0..trials {
            first[select_batch(&s, 1, seed::derive(31, t)).unwrap().item_ids[0] as usize] += 1;
        }
        let se = (0.25f64 * 0.75 / trials as f64).sqrt();
        for c in first {
            let f = c as f64 / trials as f64;
            assert!((f - 0.25).abs() < 3.0 * se, "frequency {f}");
        }
    }

    #[test]
    fn ranker_names_round_trip() {
        for k in RankerKind::ALL {
            assert_eq!(k.name().parse::<RankerKind>().unwrap(), k);
            assert_eq!(serde_json::to_string(&k).unwrap(), format!("\"{}\"", k.name()));
        }
    }
}
