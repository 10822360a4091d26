//! Linear SVM trained by stochastic subgradient descent on the
//! L2-regularized hinge loss.
//!
//! Features are standardized with statistics from the training set only;
//! the fitted weights are mapped back to raw feature space so the stored
//! model is a plain `(w, b)` pair.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{single_class, validate_examples};
use crate::dataset::{ClassLabel, Example};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LinearParams {
    /// Step size schedule constant: `eta_t = eta0 / (1 + eta0 * lambda * t)`.
    pub learning_rate: f64,
    pub epochs: usize,
    /// L2 weight `lambda`.
    pub regularization: f64,
}

impl Default for LinearParams {
    fn default() -> Self {
        LinearParams {
            learning_rate: 0.5,
            epochs: 20,
            regularization: 1e-3,
        }
    }
}

impl LinearParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("linear.learning_rate must be positive".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("linear.epochs must be at least 1".into()));
        }
        if !(self.regularization >= 0.0 && self.regularization.is_finite()) {
            return Err(Error::Config("linear.regularization must be non-negative".into()));
        }
        Ok(())
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(super) fn train(params: &LinearParams, examples: &[Example<'_>], seed: u64) -> Result<(Vec<f64>, f64)> {
    let d = validate_examples(examples)?;
    if let Some(label) = single_class(examples) {
        let bias = if label.is_positive() { 1.0 } else { -1.0 };
        return Ok((vec![0.0; d], bias));
    }
    let n = examples.len() as f64;

    let mut mean = vec![0.0; d];
    for e in examples {
        for (m, x) in mean.iter_mut().zip(e.features) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut scale = vec![0.0; d];
    for e in examples {
        for ((s, x), m) in scale.iter_mut().zip(e.features).zip(&mean) {
            *s += (x - m) * (x - m);
        }
    }
    for s in &mut scale {
        let sd = (*s / n).sqrt();
        *s = if sd > 1e-12 { 1.0 / sd } else { 1.0 };
    }

    let standardized: Vec<f64> = examples
        .iter()
        .flat_map(|e| e.features.iter().zip(&mean).zip(&scale).map(|((x, m), s)| (x - m) * s))
        .collect();
    let targets: Vec<f64> = examples
        .iter()
        .map(|e| if e.label == ClassLabel::One { 1.0 } else { -1.0 })
        .collect();

    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut rng = seed::rng(seed);
    let eta0 = params.learning_rate;
    let lambda = params.regularization;
    let mut t = 0u64;
    for _ in 0..params.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            t += 1;
            let eta = eta0 / (1.0 + eta0 * lambda * t as f64);
            let z = &standardized[i * d..(i + 1) * d];
            let y = targets[i];
            let margin = y * (dot(&w, z) + b);
            let shrink = 1.0 - eta * lambda;
            if margin < 1.0 {
                for (wj, zj) in w.iter_mut().zip(z) {
                    *wj = *wj * shrink + eta * y * zj;
                }
                b += eta * y;
            } else if lambda > 0.0 {
                w.iter_mut().for_each(|wj| *wj *= shrink);
            }
        }
    }

    // w.z + b with z = (x - m) * s  ==>  (w*s).x + (b - sum w*s*m)
    let raw: Vec<f64> = w.iter().zip(&scale).map(|(wj, s)| wj * s).collect();
    let bias = b - dot(&raw, &mean);
    Ok((raw, bias))
}
