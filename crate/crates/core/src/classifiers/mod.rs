//! The pluggable classifier contract and the two built-in learners.
//!
//! A [`Learner`] turns an ordered slice of [`Example`]s and a seed into an
//! immutable [`Predictor`]. Everything downstream (bootstrap ensembles,
//! rankers, the labeling loops) is generic over this pair, so any binary
//! classifier can be plugged in.

mod linear;
mod tree;

use serde::{Deserialize, Serialize};

use crate::dataset::{ClassLabel, Example, Item};
use crate::error::{Error, Result};
use crate::metrics::{self, Metric};
use crate::seed;

pub use linear::LinearParams;
pub use tree::{DecisionTree, TreeNode, TreeParams};

pub trait Predictor: Send + Sync {
    fn dimension(&self) -> usize;

    /// Unchecked prediction; callers guarantee `features.len() == dimension()`.
    fn predict_features(&self, features: &[f64]) -> ClassLabel;

    fn predict(&self, features: &[f64]) -> Result<ClassLabel> {
        check_dimension(self.dimension(), features.len())?;
        Ok(self.predict_features(features))
    }

    /// Signed distance-like score whose sign agrees with `predict`.
    /// Models without a separating hyperplane return `Unsupported`.
    fn decision_value(&self, _features: &[f64]) -> Result<f64> {
        Err(Error::Unsupported {
            operation: "decision_value",
            kind: "this",
        })
    }
}

pub trait Learner: Send + Sync {
    type Model: Predictor + Clone;

    /// Fit on `examples` in the given order. Must be deterministic in
    /// `(examples, seed)` and return a constant model for single-class input.
    fn fit(&self, examples: &[Example<'_>], seed: u64) -> Result<Self::Model>;
}

pub(crate) fn check_dimension(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch { expected, actual });
    }
    Ok(())
}

/// Shared validation for learners: non-empty, non-zero and consistent dimension.
pub(crate) fn validate_examples(examples: &[Example<'_>]) -> Result<usize> {
    let first = examples
        .first()
        .ok_or_else(|| Error::invalid("cannot train on an empty labeled set"))?;
    let d = first.features.len();
    if d == 0 {
        return Err(Error::invalid("cannot train on zero-dimensional features"));
    }
    for e in examples {
        check_dimension(d, e.features.len())?;
    }
    Ok(d)
}

/// If every example has the same label, return it.
pub(crate) fn single_class(examples: &[Example<'_>]) -> Option<ClassLabel> {
    let first = examples.first()?.label;
    examples.iter().all(|e| e.label == first).then_some(first)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierKind {
    Linear,
    Tree,
}

impl ClassifierKind {
    pub fn name(self) -> &'static str {
        match self {
            ClassifierKind::Linear => "linear",
            ClassifierKind::Tree => "tree",
        }
    }
}

/// Configuration of one built-in classifier.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ClassifierSpec {
    Linear(#[serde(default)] LinearParams),
    Tree(#[serde(default)] TreeParams),
}

impl Default for ClassifierSpec {
    fn default() -> Self {
        ClassifierSpec::Linear(LinearParams::default())
    }
}

impl ClassifierSpec {
    pub fn kind(&self) -> ClassifierKind {
        match self {
            ClassifierSpec::Linear(_) => ClassifierKind::Linear,
            ClassifierSpec::Tree(_) => ClassifierKind::Tree,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ClassifierSpec::Linear(p) => p.validate(),
            ClassifierSpec::Tree(p) => p.validate(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelParams {
    Linear { weights: Vec<f64>, bias: f64 },
    Tree(DecisionTree),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub params: ModelParams,
    pub training_size: usize,
}

impl TrainedModel {
    /// A linear model from raw-space weights.
    pub fn linear(weights: Vec<f64>, bias: f64) -> Self {
        TrainedModel {
            params: ModelParams::Linear { weights, bias },
            training_size: 0,
        }
    }

    pub fn kind(&self) -> ClassifierKind {
        match self.params {
            ModelParams::Linear { .. } => ClassifierKind::Linear,
            ModelParams::Tree(_) => ClassifierKind::Tree,
        }
    }

    pub fn predict_item(&self, item: &Item) -> Result<ClassLabel> {
        self.predict(item.features.as_slice())
    }
}

impl Predictor for TrainedModel {
    fn dimension(&self) -> usize {
        match &self.params {
            ModelParams::Linear { weights, .. } => weights.len(),
            ModelParams::Tree(t) => t.dimension(),
        }
    }

    fn predict_features(&self, features: &[f64]) -> ClassLabel {
        match &self.params {
            // Ties (decision value exactly 0) go to class 1.
            ModelParams::Linear { weights, bias } => ClassLabel::from(linear::dot(weights, features) + bias >= 0.0),
            ModelParams::Tree(t) => t.predict_features(features),
        }
    }

    /// `w . x + bias`. Only defined for linear models.
    fn decision_value(&self, features: &[f64]) -> Result<f64> {
        match &self.params {
            ModelParams::Linear { weights, bias } => {
                check_dimension(weights.len(), features.len())?;
                Ok(linear::dot(weights, features) + bias)
            }
            ModelParams::Tree(_) => Err(Error::Unsupported {
                operation: "decision_value",
                kind: "tree",
            }),
        }
    }
}

impl Learner for ClassifierSpec {
    type Model = TrainedModel;

    fn fit(&self, examples: &[Example<'_>], seed: u64) -> Result<TrainedModel> {
        let params = match self {
            ClassifierSpec::Linear(p) => {
                let (weights, bias) = linear::train(p, examples, seed)?;
                ModelParams::Linear { weights, bias }
            }
            ClassifierSpec::Tree(p) => ModelParams::Tree(tree::train(p, examples)?),
        };
        Ok(TrainedModel {
            params,
            training_size: examples.len(),
        })
    }
}

/// Fit a built-in classifier.
pub fn train(spec: &ClassifierSpec, labeled: &[Example<'_>], seed: u64) -> Result<TrainedModel> {
    spec.fit(labeled, seed)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QualityEstimate {
    pub metric: Metric,
    pub value: f64,
    pub folds: usize,
}

/// A seeded k-way partition of a labeled pool, computed on id-sorted order.
#[derive(Clone, Debug)]
pub struct FoldPlan {
    /// `fold_of[i]` for the i-th example in id order.
    fold_of: Vec<usize>,
    k: usize,
    seed: u64,
}

impl FoldPlan {
    /// `examples` must already be sorted by id.
    pub fn new(examples: &[Example<'_>], k: usize, seed: u64) -> Result<Self> {
        use rand::seq::SliceRandom;
        if k < 2 {
            return Err(Error::invalid(format!("k-fold needs k >= 2, got {k}")));
        }
        if examples.len() < k {
            return Err(Error::invalid(format!(
                "k-fold with k = {k} needs at least {k} labeled items, got {}",
                examples.len()
            )));
        }
        let mut positions: Vec<usize> = (0..examples.len()).collect();
        positions.shuffle(&mut seed::rng(seed));
        let mut fold_of = vec![0; examples.len()];
        for (rank, &pos) in positions.iter().enumerate() {
            fold_of[pos] = rank % k;
        }
        Ok(FoldPlan { fold_of, k, seed })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.fold_of {
            sizes[f] += 1;
        }
        sizes
    }

    /// Mean per-fold `metric`. `extra`, when given, joins every training
    /// fold and never a test fold.
    pub fn evaluate<L: Learner>(
        &self,
        learner: &L,
        examples: &[Example<'_>],
        extra: Option<Example<'_>>,
        metric: Metric,
    ) -> Result<f64> {
        debug_assert_eq!(examples.len(), self.fold_of.len());
        let mut total = 0.0;
        let mut train = Vec::with_capacity(examples.len() + 1);
        let mut predicted = Vec::new();
        let mut gold = Vec::new();
        for fold in 0..self.k {
            train.clear();
            predicted.clear();
            gold.clear();
            train.extend(
                examples
                    .iter()
                    .zip(&self.fold_of)
                    .filter(|(_, &f)| f != fold)
                    .map(|(e, _)| *e),
            );
            train.extend(extra);
            let model = learner.fit(&train, seed::derive(self.seed, fold as u64))?;
            for (e, _) in examples.iter().zip(&self.fold_of).filter(|(_, &f)| f == fold) {
                predicted.push(model.predict_features(e.features));
                gold.push(e.label);
            }
            total += metrics::quality(metric, &predicted, &gold)?;
        }
        Ok(total / self.k as f64)
    }
}

/// Cross-validated quality of `learner` on `labeled`.
///
/// The partition is drawn on the id-sorted pool, so the estimate does not
/// depend on the order of `labeled`.
pub fn k_fold_quality<L: Learner>(
    learner: &L,
    labeled: &[Example<'_>],
    k: usize,
    metric: Metric,
    seed: u64,
) -> Result<QualityEstimate> {
    let mut sorted = labeled.to_vec();
    sorted.sort_by_key(|e| e.id);
    let plan = FoldPlan::new(&sorted, k, seed)?;
    let value = plan.evaluate(learner, &sorted, None, metric)?;
    Ok(QualityEstimate {
        metric,
        value,
        folds: k,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::ItemId;
    use rand::Rng;

    fn owned(points: &[(Vec<f64>, u8)]) -> Vec<(ItemId, Vec<f64>, ClassLabel)> {
        points
            .iter()
            .enumerate()
            .map(|(i, (x, y))| (i as ItemId, x.clone(), ClassLabel::try_from(*y).unwrap()))
            .collect()
    }

    fn examples(data: &[(ItemId, Vec<f64>, ClassLabel)]) -> Vec<Example<'_>> {
        data.iter()
            .map(|(id, x, y)| Example {
                id: *id,
                features: x,
                label: *y,
            })
            .collect()
    }

    /// Points with class = [x1 >= 0], kept at least 0.2 away from the boundary.
    fn separable(n: usize, seed: u64) -> Vec<(ItemId, Vec<f64>, ClassLabel)> {
        let mut rng = crate::seed::rng(seed);
        let mut out = Vec::new();
        while out.len() < n {
            let x1: f64 = rng.gen_range(-3.0..3.0);
            let x2: f64 = rng.gen_range(-3.0..3.0);
            if x1.abs() < 0.2 {
                continue;
            }
            out.push((out.len() as ItemId, vec![x1, x2], ClassLabel::from(x1 >= 0.0)));
        }
        out
    }

    #[test]
    fn all_positive_gives_constant_one() {
        let data = owned(&[(vec![0.0, 1.0], 1), (vec![5.0, -2.0], 1)]);
        for spec in [ClassifierSpec::default(), ClassifierSpec::Tree(TreeParams::default())] {
            let m = train(&spec, &examples(&data), 3).unwrap();
            for x in [[100.0, 100.0], [-100.0, 3.0], [0.0, 0.0]] {
                assert_eq!(m.predict(&x).unwrap(), ClassLabel::One);
            }
        }
    }

    #[test]
    fn zero_dimension_rejected() {
        let data = owned(&[(vec![], 1)]);
        assert!(train(&ClassifierSpec::default(), &examples(&data), 0).is_err());
        assert!(train(&ClassifierSpec::default(), &[], 0).is_err());
    }

    #[test]
    fn linear_separates_sign_of_x1() {
        let data = separable(200, 11);
        // oracle: the generator is separable by construction; check it exhaustively
        assert!(data.iter().all(|(_, x, y)| (x[0] >= 0.0) == y.is_positive() && x[0].abs() >= 0.2));
        let ex = examples(&data);
        let m = train(&ClassifierSpec::default(), &ex, 5).unwrap();
        let acc = ex.iter().filter(|e| m.predict_features(e.features) == e.label).count() as f64 / ex.len() as f64;
        assert_eq!(acc, 1.0);
    }

    #[test]
    fn training_is_deterministic() {
        let data = separable(50, 2);
        let ex = examples(&data);
        for spec in [ClassifierSpec::default(), ClassifierSpec::Tree(TreeParams::default())] {
            assert_eq!(train(&spec, &ex, 9).unwrap(), train(&spec, &ex, 9).unwrap());
        }
    }

    #[test]
    fn linear_prediction_rules() {
        let m = TrainedModel::linear(vec![1.0, 0.0], 0.0);
        assert_eq!(m.predict(&[2.0, -5.0]).unwrap(), ClassLabel::One);
        assert_eq!(m.predict(&[0.0, 0.0]).unwrap(), ClassLabel::One);
        assert_eq!(m.predict(&[-0.1, 9.0]).unwrap(), ClassLabel::Zero);
        assert!(matches!(m.predict(&[1.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn decision_values() {
        let m = TrainedModel::linear(vec![1.0, 1.0], -1.0);
        assert_eq!(m.decision_value(&[1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(m.decision_value(&[0.25, 0.75]).unwrap(), 0.0);
        let x = [0.3, -1.7];
        let wx = m.decision_value(&x).unwrap() + 1.0;
        let scaled = m.decision_value(&[0.6, -3.4]).unwrap();
        assert!((scaled - (2.0 * wx - 1.0)).abs() < 1e-12);

        let data = owned(&[(vec![0.0], 0), (vec![1.0], 1)]);
        let tree = train(&ClassifierSpec::Tree(TreeParams::default()), &examples(&data), 0).unwrap();
        assert!(matches!(tree.decision_value(&[0.5]), Err(Error::Unsupported { .. })));
    }

    #[test]
    fn tree_memorizes_consistent_data() {
        let mut rng = crate::seed::rng(4);
        let data: Vec<(ItemId, Vec<f64>, ClassLabel)> = (0..150)
            .map(|i| {
                let x = vec![rng.gen_range(0..6) as f64, rng.gen_range(-1.0..1.0)];
                (i, x, ClassLabel::from(rng.gen_bool(0.5)))
            })
            .collect();
        let ex = examples(&data);
        let m = train(&ClassifierSpec::Tree(TreeParams::default()), &ex, 0).unwrap();
        assert!(ex.iter().all(|e| m.predict_features(e.features) == e.label));
    }

    #[test]
    fn k_fold_constant_labels() {
        let data: Vec<_> = (0..10).map(|i| (i, vec![i as f64], ClassLabel::One)).collect();
        let q = k_fold_quality(&ClassifierSpec::default(), &examples(&data), 3, Metric::Accuracy, 1).unwrap();
        assert_eq!(q.value, 1.0);
        assert_eq!(q.folds, 3);
    }

    #[test]
    fn k_fold_errors_and_determinism() {
        let data = separable(30, 8);
        let ex = examples(&data);
        assert!(k_fold_quality(&ClassifierSpec::default(), &ex[..2], 3, Metric::Accuracy, 0).is_err());
        assert!(k_fold_quality(&ClassifierSpec::default(), &ex, 1, Metric::Accuracy, 0).is_err());
        let a = k_fold_quality(&ClassifierSpec::default(), &ex, 5, Metric::F1, 3).unwrap();
        let b = k_fold_quality(&ClassifierSpec::default(), &ex, 5, Metric::F1, 3).unwrap();
        assert_eq!(a, b);
        let mut reversed = ex.clone();
        reversed.reverse();
        let c = k_fold_quality(&ClassifierSpec::default(), &reversed, 5, Metric::F1, 3).unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn fold_sizes_balanced() {
        let data = separable(23, 1);
        let ex = examples(&data);
        let plan = FoldPlan::new(&ex, 5, 0).unwrap();
        let sizes = plan.fold_sizes();
        assert_eq!(sizes.iter().sum::<usize>(), 23);
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }

    #[test]
    fn k_fold_on_separable_holdout() {
        // Hold-out oracle on independently generated data: the linear model
        // fit on one separable draw classifies a fresh draw almost perfectly.
        let train_data = separable(200, 21);
        let fresh = separable(2000, 22);
        let m = train(&ClassifierSpec::default(), &examples(&train_data), 0).unwrap();
        let holdout = fresh
            .iter()
            .filter(|(_, x, y)| m.predict_features(x) == *y)
            .count() as f64
            / fresh.len() as f64;
        assert!(holdout >= 0.95, "holdout accuracy {holdout}");
        let q = k_fold_quality(&ClassifierSpec::default(), &examples(&train_data), 5, Metric::Accuracy, 7).unwrap();
        assert!(q.value >= 0.95, "k-fold accuracy {}", q.value);
    }
}
