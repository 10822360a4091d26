//! Nonparametric bootstrap ensembles.
//!
//! Member `k` of an ensemble is trained on `resample(labeled, member_seed(master, k))`,
//! so its parameters depend only on the master seed and its index. Members
//! may be fitted on any number of threads and the result is identical to a
//! sequential fit.

use rand::Rng;
use rayon::prelude::*;

use crate::classifiers::{Learner, Predictor};
use crate::dataset::{Example, Item, ItemId};
use crate::error::{Error, Result};
use crate::seed;

pub const DEFAULT_ENSEMBLE_SIZE: usize = 10;

/// Draw `n = |labeled|` examples uniformly with replacement.
pub fn resample<'a>(labeled: &[Example<'a>], seed: u64) -> Result<Vec<Example<'a>>> {
    if labeled.is_empty() {
        return Err(Error::invalid("cannot resample an empty labeled pool"));
    }
    let mut rng = seed::rng(seed);
    let n = labeled.len();
    Ok((0..n).map(|_| labeled[rng.gen_range(0..n)]).collect())
}

/// Seed of ensemble member `k`.
pub fn member_seed(master_seed: u64, k: usize) -> u64 {
    seed::derive(master_seed, k as u64)
}

/// Seed used to fit member `k` on its replicate (distinct from the draw seed).
fn fit_seed(master_seed: u64, k: usize) -> u64 {
    seed::derive(member_seed(master_seed, k), 0)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Parallelism {
    Sequential,
    /// A dedicated pool with this many threads.
    Threads(usize),
    /// The global rayon pool.
    #[default]
    Global,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Ensemble<M> {
    members: Vec<M>,
    source_size: usize,
}

impl<M: Predictor> Ensemble<M> {
    pub fn members(&self) -> &[M] {
        &self.members
    }

    pub fn size(&self) -> usize {
        self.members.len()
    }

    pub fn source_size(&self) -> usize {
        self.source_size
    }

    pub fn dimension(&self) -> usize {
        self.members[0].dimension()
    }
}

pub fn train_ensemble<L: Learner>(
    learner: &L,
    labeled: &[Example<'_>],
    m: usize,
    master_seed: u64,
) -> Result<Ensemble<L::Model>> {
    train_ensemble_with(learner, labeled, m, master_seed, Parallelism::Global)
}

pub fn train_ensemble_with<L: Learner>(
    learner: &L,
    labeled: &[Example<'_>],
    m: usize,
    master_seed: u64,
    parallelism: Parallelism,
) -> Result<Ensemble<L::Model>> {
    if m < 2 {
        return Err(Error::invalid(format!("ensemble size must be at least 2, got {m}")));
    }
    let fit_member = |k: usize| -> Result<L::Model> {
        let replicate = resample(labeled, member_seed(master_seed, k))?;
        learner.fit(&replicate, fit_seed(master_seed, k))
    };
    let members: Result<Vec<_>> = match parallelism {
        Parallelism::Sequential => (0..m).map(fit_member).collect(),
        Parallelism::Global => (0..m).into_par_iter().map(fit_member).collect(),
        Parallelism::Threads(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
            pool.install(|| (0..m).into_par_iter().map(fit_member).collect())
        }
    };
    Ok(Ensemble {
        members: members?,
        source_size: labeled.len(),
    })
}

/// Member predictions `l[u][k]` for a set of items, one row per item.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelMatrix {
    ids: Vec<ItemId>,
    members: usize,
    entries: Vec<u8>,
}

impl LabelMatrix {
    pub fn from_rows(ids: Vec<ItemId>, rows: Vec<Vec<u8>>) -> Result<Self> {
        if ids.len() != rows.len() {
            return Err(Error::invalid("one row per item id required"));
        }
        let members = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != members || r.iter().any(|&v| v > 1)) {
            return Err(Error::invalid("rows must share length and hold 0/1 entries"));
        }
        Ok(LabelMatrix {
            ids,
            members,
            entries: rows.concat(),
        })
    }

    pub fn ids(&self) -> &[ItemId] {
        &self.ids
    }

    /// `(items, members)`.
    pub fn shape(&self) -> (usize, usize) {
        (self.ids.len(), self.members)
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn row(&self, i: usize) -> &[u8] {
        &self.entries[i * self.members..(i + 1) * self.members]
    }

    /// Fraction of members predicting class 1, `R(u)`.
    pub fn row_mean(&self, i: usize) -> f64 {
        let ones: u32 = self.row(i).iter().map(|&v| v as u32).sum();
        ones as f64 / self.members as f64
    }
}

pub fn ensemble_labels<M: Predictor>(ensemble: &Ensemble<M>, items: &[Item]) -> Result<LabelMatrix> {
    let d = ensemble.dimension();
    let mut entries = Vec::with_capacity(items.len() * ensemble.size());
    for item in items {
        if item.features.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: item.features.len(),
            });
        }
        entries.extend(ensemble.members.iter().map(|m| m.predict_features(&item.features).as_u8()));
    }
    Ok(LabelMatrix {
        ids: items.iter().map(|i| i.id).collect(),
        members: ensemble.size(),
        entries,
    })
}
