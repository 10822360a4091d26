//! Vote aggregation and worker accuracy estimation.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{VoteSet, WorkerId};
use crate::dataset::{ClassLabel, ItemId, SubgroupId};
use crate::error::{Error, Result};

/// Most frequent label per item; an even split goes to class 1.
pub fn aggregate_majority(votes: &VoteSet) -> BTreeMap<ItemId, ClassLabel> {
    votes
        .iter()
        .filter(|(_, v)| !v.is_empty())
        .map(|(id, v)| {
            let ones = v.iter().filter(|x| x.label == ClassLabel::One).count();
            (id, ClassLabel::from(2 * ones >= v.len()))
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DawidSkeneParams {
    pub max_iterations: usize,
    /// Stop once no posterior moves by more than this.
    pub tolerance: f64,
    /// Added to every confusion count and class count.
    pub pseudo_count: f64,
}

impl Default for DawidSkeneParams {
    fn default() -> Self {
        DawidSkeneParams {
            max_iterations: 100,
            tolerance: 1e-6,
            pseudo_count: 0.01,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DawidSkeneFit {
    /// `P(true class = 1)` per item.
    pub posteriors: BTreeMap<ItemId, f64>,
    /// `confusion[w][t][s]` = P(worker `w` says `s` | true class `t`).
    pub confusion: BTreeMap<WorkerId, [[f64; 2]; 2]>,
    /// Class prior `[P(0), P(1)]`.
    pub prior: [f64; 2],
    pub iterations: usize,
    pub converged: bool,
}

impl DawidSkeneFit {
    /// Argmax posterior, ties to class 1.
    pub fn labels(&self) -> BTreeMap<ItemId, ClassLabel> {
        self.posteriors
            .iter()
            .map(|(id, p)| (*id, ClassLabel::from(*p >= 0.5)))
            .collect()
    }

    /// Probability that worker `w` answers correctly under the fitted prior.
    pub fn worker_accuracy(&self, w: WorkerId) -> Option<f64> {
        self.confusion
            .get(&w)
            .map(|c| self.prior[0] * c[0][0] + self.prior[1] * c[1][1])
    }
}

/// EM over per-worker 2x2 confusion matrices, started from the soft
/// majority (fraction of class-1 votes per item).
pub fn dawid_skene(votes: &VoteSet, params: &DawidSkeneParams) -> DawidSkeneFit {
    let items: Vec<(ItemId, &[super::Vote])> = votes.iter().filter(|(_, v)| !v.is_empty()).collect();
    let workers: BTreeSet<WorkerId> = items.iter().flat_map(|(_, v)| v.iter().map(|x| x.worker)).collect();
    let index: BTreeMap<WorkerId, usize> = workers.iter().enumerate().map(|(i, w)| (*w, i)).collect();
    let alpha = params.pseudo_count;

    let mut t: Vec<f64> = items
        .iter()
        .map(|(_, v)| v.iter().filter(|x| x.label == ClassLabel::One).count() as f64 / v.len() as f64)
        .collect();
    let mut confusion = vec![[[0.5; 2]; 2]; workers.len()];
    let mut prior = [0.5; 2];
    let mut iterations = 0;
    let mut converged = false;

    while iterations < params.max_iterations {
        iterations += 1;
        // M step.
        let n = items.len() as f64;
        let ones: f64 = t.iter().sum();
        prior[1] = (ones + alpha) / (n + 2.0 * alpha);
        prior[0] = 1.0 - prior[1];
        let mut counts = vec![[[0.0; 2]; 2]; workers.len()];
        for ((_, v), ti) in items.iter().zip(&t) {
            for x in v.iter() {
                let c = &mut counts[index[&x.worker]];
                let s = x.label.as_u8() as usize;
                c[1][s] += ti;
                c[0][s] += 1.0 - ti;
            }
        }
        for (conf, c) in confusion.iter_mut().zip(&counts) {
            for truth in 0..2 {
                let total = c[truth][0] + c[truth][1] + 2.0 * alpha;
                for said in 0..2 {
                    conf[truth][said] = (c[truth][said] + alpha) / total;
                }
            }
        }
        // E step.
        let mut change: f64 = 0.0;
        for ((_, v), ti) in items.iter().zip(t.iter_mut()) {
            let mut log_odds = prior[1].ln() - prior[0].ln();
            for x in v.iter() {
                let conf = &confusion[index[&x.worker]];
                let s = x.label.as_u8() as usize;
                log_odds += conf[1][s].ln() - conf[0][s].ln();
            }
            let next = 1.0 / (1.0 + (-log_odds).exp());
            change = change.max((next - *ti).abs());
            *ti = next;
        }
        if change < params.tolerance {
            converged = true;
            break;
        }
    }

    DawidSkeneFit {
        posteriors: items.iter().map(|(id, _)| *id).zip(t).collect(),
        confusion: workers.iter().copied().zip(confusion).collect(),
        prior,
        iterations,
        converged,
    }
}

pub fn aggregate_dawid_skene(votes: &VoteSet) -> BTreeMap<ItemId, ClassLabel> {
    dawid_skene(votes, &DawidSkeneParams::default()).labels()
}

/// Estimates are clamped into this range before use in allocation.
pub const ACCURACY_CLAMP: (f64, f64) = (0.51, 0.99);

pub fn clamp_accuracy(p: f64) -> f64 {
    p.clamp(ACCURACY_CLAMP.0, ACCURACY_CLAMP.1)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AccuracyMode {
    /// Compare probe votes with gold labels.
    Gold,
    /// Compare probe votes with each probe item's majority vote.
    #[default]
    MajorityAsTruth,
}

/// Fraction of probe votes agreeing with the reference label, per group.
///
/// `probes` lists every probe item with its subgroup and, for gold mode,
/// its gold label. Every group in `groups` needs at least one probe vote.
pub fn raw_subgroup_accuracy(
    groups: &[SubgroupId],
    probes: &[(ItemId, SubgroupId, Option<ClassLabel>)],
    votes: &VoteSet,
    mode: AccuracyMode,
) -> Result<BTreeMap<SubgroupId, f64>> {
    let majority = aggregate_majority(votes);
    let mut tally: BTreeMap<SubgroupId, (usize, usize)> = BTreeMap::new();
    for &(id, g, gold) in probes {
        let Some(v) = votes.get(id) else { continue };
        let truth = match mode {
            AccuracyMode::Gold => gold.ok_or_else(|| Error::invalid(format!("probe item {id} has no gold label")))?,
            AccuracyMode::MajorityAsTruth => match majority.get(&id) {
                Some(m) => *m,
                None => continue,
            },
        };
        let e = tally.entry(g).or_default();
        e.0 += v.iter().filter(|x| x.label == truth).count();
        e.1 += v.len();
    }
    groups
        .iter()
        .map(|g| match tally.get(g) {
            Some(&(hit, total)) if total > 0 => Ok((*g, hit as f64 / total as f64)),
            _ => Err(Error::invalid(format!("subgroup {g} has no probe votes"))),
        })
        .collect()
}

/// [`raw_subgroup_accuracy`] clamped into [`ACCURACY_CLAMP`].
pub fn estimate_subgroup_accuracy(
    groups: &[SubgroupId],
    probes: &[(ItemId, SubgroupId, Option<ClassLabel>)],
    votes: &VoteSet,
    mode: AccuracyMode,
) -> Result<BTreeMap<SubgroupId, f64>> {
    let raw = raw_subgroup_accuracy(groups, probes, votes, mode)?;
    Ok(raw.into_iter().map(|(g, p)| (g, clamp_accuracy(p))).collect())
}
