//! Classification quality, learning curves and curve comparison measures.

use serde::{Deserialize, Serialize};

use crate::dataset::ClassLabel;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Accuracy,
    F1,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Accuracy => "accuracy",
            Metric::F1 => "f1",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn from_labels(predictions: &[ClassLabel], gold: &[ClassLabel]) -> Result<Self> {
        if predictions.len() != gold.len() {
            return Err(Error::invalid(format!(
                "{} predictions for {} gold labels",
                predictions.len(),
                gold.len()
            )));
        }
        let mut c = Confusion::default();
        for (p, g) in predictions.iter().zip(gold) {
            match (p.is_positive(), g.is_positive()) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        Ok(c)
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn accuracy(&self) -> f64 {
        (self.tp + self.tn) as f64 / self.total() as f64
    }

    /// `2PR / (P + R)` with class 1 positive, computed as
    /// `2TP / (2TP + FP + FN)`. Zero rule: 0 whenever TP = 0, except that
    /// a sample with no positives that predicts none scores 1.
    pub fn f1(&self) -> f64 {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if denom == 0 {
            1.0
        } else {
            2.0 * self.tp as f64 / denom as f64
        }
    }

    pub fn value(&self, metric: Metric) -> f64 {
        match metric {
            Metric::Accuracy => self.accuracy(),
            Metric::F1 => self.f1(),
        }
    }
}

pub fn quality(metric: Metric, predictions: &[ClassLabel], gold: &[ClassLabel]) -> Result<f64> {
    if predictions.is_empty() {
        return Err(Error::invalid("quality of an empty prediction set"));
    }
    Ok(Confusion::from_labels(predictions, gold)?.value(metric))
}

/// Quality of a pool labeled partly by the crowd (fraction `crowd_fraction`)
/// and partly by the model.
pub fn overall_quality(crowd_fraction: f64, crowd_quality: f64, model_quality: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&crowd_fraction) {
        return Err(Error::invalid(format!("crowd fraction {crowd_fraction} not in [0,1]")));
    }
    Ok(crowd_fraction * crowd_quality + (1.0 - crowd_fraction) * model_quality)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub questions: f64,
    pub quality: f64,
}

/// Quality as a function of questions asked, strictly increasing in x.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearningCurve {
    pub metric: Metric,
    points: Vec<CurvePoint>,
}

impl LearningCurve {
    pub fn new(metric: Metric, points: Vec<CurvePoint>) -> Result<Self> {
        for p in &points {
            if !p.quality.is_finite() || !p.questions.is_finite() || p.questions < 0.0 {
                return Err(Error::invalid(format!("bad curve point {p:?}")));
            }
        }
        if points.windows(2).any(|w| w[1].questions <= w[0].questions) {
            return Err(Error::invalid("curve x values must be strictly increasing"));
        }
        Ok(LearningCurve { metric, points })
    }

    /// Sorts by x and averages the qualities of points sharing an x.
    pub fn from_unsorted(metric: Metric, mut points: Vec<CurvePoint>) -> Result<Self> {
        points.sort_by(|a, b| a.questions.total_cmp(&b.questions));
        let mut merged: Vec<(CurvePoint, usize)> = Vec::new();
        for p in points {
            match merged.last_mut() {
                Some((last, n)) if last.questions == p.questions => {
                    last.quality += p.quality;
                    *n += 1;
                }
                _ => merged.push((p, 1)),
            }
        }
        let points = merged
            .into_iter()
            .map(|(p, n)| CurvePoint {
                questions: p.questions,
                quality: p.quality / n as f64,
            })
            .collect();
        LearningCurve::new(metric, points)
    }

    pub fn points(&self) -> &[CurvePoint] {
        &self.points
    }

    fn require_two(&self) -> Result<()> {
        if self.points.len() < 2 {
            return Err(Error::invalid("curve needs at least 2 points"));
        }
        Ok(())
    }

    /// Running-maximum envelope of the qualities.
    pub fn envelope(&self) -> Vec<CurvePoint> {
        let mut best = f64::NEG_INFINITY;
        self.points
            .iter()
            .map(|p| {
                best = best.max(p.quality);
                CurvePoint {
                    questions: p.questions,
                    quality: best,
                }
            })
            .collect()
    }
}

/// Trapezoidal area of `(t(x), y)` divided by the t-range.
fn normalized_area(points: &[CurvePoint], t: impl Fn(f64) -> f64) -> Result<f64> {
    let first = t(points[0].questions);
    let last = t(points[points.len() - 1].questions);
    let width = last - first;
    if width <= 0.0 {
        return Err(Error::invalid("curve has an empty x-range"));
    }
    let area: f64 = points
        .windows(2)
        .map(|w| (t(w[1].questions) - t(w[0].questions)) * (w[0].quality + w[1].quality) / 2.0)
        .sum();
    Ok(area / width)
}

/// Area under the curve normalized by the x-range, so a constant curve at
/// `q` has AUC `q`.
pub fn auc(curve: &LearningCurve) -> Result<f64> {
    curve.require_two()?;
    normalized_area(&curve.points, |x| x)
}

/// Questions below one are counted as one before taking logs.
fn log_x(x: f64) -> f64 {
    x.max(1.0).ln()
}

/// Normalized area against `ln(questions)`; points at x = 0 are placed at
/// one question.
pub fn auclog(curve: &LearningCurve) -> Result<f64> {
    curve.require_two()?;
    normalized_area(&curve.points, log_x)
}

/// First x at which the envelope reaches `q`, by linear interpolation.
fn first_crossing(envelope: &[CurvePoint], q: f64) -> Option<f64> {
    if q <= envelope[0].quality {
        return Some(envelope[0].questions);
    }
    let i = envelope.iter().position(|p| p.quality >= q)?;
    let (a, b) = (envelope[i - 1], envelope[i]);
    let frac = (q - a.quality) / (b.quality - a.quality);
    Some(a.questions + frac * (b.questions - a.questions))
}

pub const QUESTIONS_SAVED_GRID: usize = 100;

/// Average of `x_b(q) / x_a(q)` over a uniform quality grid on the common
/// quality range of the two envelopes. Values above 1 mean `a` needs fewer
/// questions. `None` when the ranges do not overlap. Crossings below one
/// question are counted as one.
pub fn questions_saved(curve_a: &LearningCurve, curve_b: &LearningCurve) -> Option<f64> {
    if curve_a.points.is_empty() || curve_b.points.is_empty() {
        return None;
    }
    let env_a = curve_a.envelope();
    let env_b = curve_b.envelope();
    let lo = env_a[0].quality.max(env_b[0].quality);
    let hi = env_a.last()?.quality.min(env_b.last()?.quality);
    if lo > hi {
        return None;
    }
    let n = QUESTIONS_SAVED_GRID;
    let mut total = 0.0;
    for i in 0..n {
        let q = if n == 1 || hi == lo {
            lo
        } else {
            (lo + (hi - lo) * i as f64 / (n - 1) as f64).min(hi)
        };
        let xa = first_crossing(&env_a, q)?.max(1.0);
        let xb = first_crossing(&env_b, q)?.max(1.0);
        total += xb / xa;
    }
    Some(total / n as f64)
}

/// `method` against `baseline`: ratios above 1 favour `method`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub method: String,
    pub baseline: String,
    pub auc_ratio: f64,
    pub auclog_ratio: f64,
    pub questions_saved: Option<f64>,
}

pub fn compare(
    method: &str,
    method_curve: &LearningCurve,
    baseline: &str,
    baseline_curve: &LearningCurve,
) -> Result<ComparisonReport> {
    Ok(ComparisonReport {
        method: method.to_string(),
        baseline: baseline.to_string(),
        auc_ratio: auc(method_curve)? / auc(baseline_curve)?,
        auclog_ratio: auclog(method_curve)? / auclog(baseline_curve)?,
        questions_saved: questions_saved(method_curve, baseline_curve),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn labels(v: &[u8]) -> Vec<ClassLabel> {
        v.iter().map(|&x| ClassLabel::try_from(x).unwrap()).collect()
    }

    fn curve(points: &[(f64, f64)]) -> LearningCurve {
        LearningCurve::new(
            Metric::F1,
            points
                .iter()
                .map(|&(questions, quality)| CurvePoint { questions, quality })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn perfect_predictions() {
        let g = labels(&[1, 0, 1, 1, 0]);
        assert_eq!(quality(Metric::Accuracy, &g, &g).unwrap(), 1.0);
        assert_eq!(quality(Metric::F1, &g, &g).unwrap(), 1.0);
    }

    #[test]
    fn f1_hand_count() {
        // TP=2, FP=1, FN=1, TN=1
        let p = labels(&[1, 1, 1, 0, 0]);
        let g = labels(&[1, 1, 0, 1, 0]);
        assert_relative_eq!(quality(Metric::F1, &p, &g).unwrap(), 2.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(quality(Metric::Accuracy, &p, &g).unwrap(), 0.6, epsilon = 1e-15);
    }

    #[test]
    fn f1_zero_rule() {
        let p = labels(&[0, 0, 0]);
        let g = labels(&[1, 0, 1]);
        assert_eq!(quality(Metric::F1, &p, &g).unwrap(), 0.0);
        // anti-perfect balanced sample
        let p = labels(&[0, 1]);
        let g = labels(&[1, 0]);
        assert_eq!(quality(Metric::F1, &p, &g).unwrap(), 0.0);
        assert_eq!(quality(Metric::Accuracy, &p, &g).unwrap(), 0.0);
    }

    #[test]
    fn quality_errors() {
        assert!(quality(Metric::F1, &labels(&[1]), &labels(&[1, 0])).is_err());
        assert!(quality(Metric::F1, &[], &[]).is_err());
    }

    #[test]
    fn overall_is_convex_combination() {
        assert_eq!(overall_quality(0.0, 0.9, 0.7).unwrap(), 0.7);
        assert_eq!(overall_quality(1.0, 0.9, 0.7).unwrap(), 0.9);
        assert_relative_eq!(overall_quality(0.5, 0.9, 0.7).unwrap(), 0.8, epsilon = 1e-15);
        assert!(overall_quality(1.5, 0.9, 0.7).is_err());
    }

    #[test]
    fn auc_examples() {
        assert_relative_eq!(auc(&curve(&[(10.0, 0.8), (50.0, 0.8), (90.0, 0.8)])).unwrap(), 0.8);
        assert_relative_eq!(auc(&curve(&[(0.0, 0.0), (100.0, 1.0)])).unwrap(), 0.5);
        assert!(auc(&curve(&[(1.0, 0.5)])).is_err());
        assert_relative_eq!(auclog(&curve(&[(1.0, 0.3), (1000.0, 0.3)])).unwrap(), 0.3);
    }

    #[test]
    fn auclog_shifts_zero() {
        let c = curve(&[(0.0, 0.2), (10.0, 0.6)]);
        // same as a curve starting at one question
        let shifted = curve(&[(1.0, 0.2), (10.0, 0.6)]);
        assert_eq!(auclog(&c).unwrap(), auclog(&shifted).unwrap());
        assert_relative_eq!(auclog(&c).unwrap(), 0.4, epsilon = 1e-12);
    }

    #[test]
    fn from_unsorted_merges() {
        let c = LearningCurve::from_unsorted(
            Metric::F1,
            vec![
                CurvePoint { questions: 5.0, quality: 0.4 },
                CurvePoint { questions: 1.0, quality: 0.1 },
                CurvePoint { questions: 5.0, quality: 0.6 },
            ],
        )
        .unwrap();
        assert_eq!(c.points().len(), 2);
        assert_relative_eq!(c.points()[1].quality, 0.5);
        assert!(LearningCurve::new(Metric::F1, vec![
            CurvePoint { questions: 2.0, quality: 0.1 },
            CurvePoint { questions: 2.0, quality: 0.2 },
        ])
        .is_err());
    }

    #[test]
    fn questions_saved_examples() {
        let b = curve(&[(100.0, 0.5), (200.0, 0.7), (400.0, 0.9)]);
        assert_relative_eq!(questions_saved(&b, &b).unwrap(), 1.0);
        let a = curve(&[(50.0, 0.5), (100.0, 0.7), (200.0, 0.9)]);
        assert_relative_eq!(questions_saved(&a, &b).unwrap(), 2.0, epsilon = 1e-12);
        assert_relative_eq!(questions_saved(&b, &a).unwrap(), 0.5, epsilon = 1e-12);
        let high = curve(&[(10.0, 0.95), (20.0, 0.99)]);
        assert_eq!(questions_saved(&high, &b), None);
    }

    #[test]
    fn envelope_handles_dips() {
        let c = curve(&[(10.0, 0.5), (20.0, 0.8), (30.0, 0.6), (40.0, 0.9)]);
        let env = c.envelope();
        assert_eq!(env[2].quality, 0.8);
        // 0.85 is first reached between x=30 and x=40 on the envelope
        assert_relative_eq!(first_crossing(&env, 0.85).unwrap(), 35.0, epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn auc_bounded_and_self_saved(qs in prop::collection::vec(0.0f64..1.0, 2..12)) {
            let c = curve(&qs.iter().enumerate().map(|(i, &q)| ((i as f64 + 1.0) * 7.0, q)).collect::<Vec<_>>());
            let lo = qs.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = qs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let a = auc(&c).unwrap();
            prop_assert!(a >= lo - 1e-12 && a <= hi + 1e-12);
            prop_assert!((questions_saved(&c, &c).unwrap() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn auc_collinear_insert(y0 in 0.0f64..1.0, y1 in 0.0f64..1.0, t in 0.05f64..0.95) {
            let c = curve(&[(10.0, y0), (90.0, y1)]);
            let mid = (10.0 + 80.0 * t, y0 + (y1 - y0) * t);
            let d = curve(&[(10.0, y0), mid, (90.0, y1)]);
            prop_assert!((auc(&c).unwrap() - auc(&d).unwrap()).abs() < 1e-12);
        }
    }
}
