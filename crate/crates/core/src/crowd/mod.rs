//! Simulated and recorded crowd workers, vote aggregation and vote
//! redundancy allocation.

mod aggregate;
mod filequeue;
mod pba;

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use aggregate::{
    aggregate_dawid_skene, aggregate_majority, clamp_accuracy, dawid_skene, estimate_subgroup_accuracy,
    raw_subgroup_accuracy, AccuracyMode, DawidSkeneFit, DawidSkeneParams, ACCURACY_CLAMP,
};
pub use filequeue::FileQueue;
pub use pba::{
    majority_correct_prob, pba_allocate, pba_brute_force, uniform_allocation, PbaAllocation, PbaConfig,
    BRUTE_FORCE_MAX_GROUPS, BRUTE_FORCE_MAX_VOTES,
};

use crate::dataset::{ClassLabel, Item, ItemId, SubgroupId};
use crate::error::{Error, Result};
use crate::seed;

pub type WorkerId = u32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vote {
    pub worker: WorkerId,
    pub label: ClassLabel,
}

/// Redundant votes keyed by item.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VoteSet {
    votes: BTreeMap<ItemId, Vec<Vote>>,
}

impl VoteSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, item: ItemId, vote: Vote) {
        self.votes.entry(item).or_default().push(vote);
    }

    pub fn get(&self, item: ItemId) -> Option<&[Vote]> {
        self.votes.get(&item).map(Vec::as_slice)
    }

    pub fn contains(&self, item: ItemId) -> bool {
        self.votes.contains_key(&item)
    }

    pub fn remove(&mut self, item: ItemId) -> Option<Vec<Vote>> {
        self.votes.remove(&item)
    }

    pub fn items(&self) -> impl Iterator<Item = ItemId> + '_ {
        self.votes.keys().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ItemId, &[Vote])> + '_ {
        self.votes.iter().map(|(id, v)| (*id, v.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.votes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.votes.is_empty()
    }

    pub fn total_votes(&self) -> usize {
        self.votes.values().map(Vec::len).sum()
    }

    pub fn extend(&mut self, other: VoteSet) {
        for (id, votes) in other.votes {
            self.votes.entry(id).or_default().extend(votes);
        }
    }
}

impl FromIterator<(ItemId, Vote)> for VoteSet {
    fn from_iter<T: IntoIterator<Item = (ItemId, Vote)>>(iter: T) -> Self {
        let mut set = VoteSet::new();
        for (id, v) in iter {
            set.push(id, v);
        }
        set
    }
}

/// Workers whose answers are correct with probability `p_g` for an item of
/// subgroup `g`, independently of everything else.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkerModel {
    subgroup_accuracy: BTreeMap<SubgroupId, f64>,
    /// Accuracy for items without a subgroup or with an unlisted one.
    #[serde(default)]
    default_accuracy: Option<f64>,
    #[serde(default = "default_workers_per_label")]
    pub workers_per_label: u32,
    #[serde(default)]
    pub seed: u64,
}

fn default_workers_per_label() -> u32 {
    1
}

impl WorkerModel {
    pub fn new(subgroup_accuracy: BTreeMap<SubgroupId, f64>, workers_per_label: u32, seed: u64) -> Result<Self> {
        let model = WorkerModel {
            subgroup_accuracy,
            default_accuracy: None,
            workers_per_label,
            seed,
        };
        model.validate()?;
        Ok(model)
    }

    /// Every item, whatever its subgroup, is answered with accuracy `p`.
    pub fn uniform(p: f64, workers_per_label: u32, seed: u64) -> Result<Self> {
        let model = WorkerModel {
            subgroup_accuracy: BTreeMap::new(),
            default_accuracy: Some(p),
            workers_per_label,
            seed,
        };
        model.validate()?;
        Ok(model)
    }

    /// No range check, so `p = 0` or `p = 1` are allowed. Test use only.
    #[doc(hidden)]
    pub fn new_unchecked(subgroup_accuracy: BTreeMap<SubgroupId, f64>, workers_per_label: u32, seed: u64) -> Self {
        WorkerModel {
            subgroup_accuracy,
            default_accuracy: None,
            workers_per_label,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ps = self.subgroup_accuracy.values().chain(self.default_accuracy.iter());
        for p in ps {
            if !(*p > 0.0 && *p < 1.0) {
                return Err(Error::Config(format!("worker accuracy {p} must lie strictly inside (0,1)")));
            }
        }
        if self.subgroup_accuracy.is_empty() && self.default_accuracy.is_none() {
            return Err(Error::Config("worker model has no accuracies".into()));
        }
        if self.workers_per_label == 0 {
            return Err(Error::Config("workers_per_label must be at least 1".into()));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        WorkerModel { seed, ..self.clone() }
    }

    pub fn subgroup_accuracy(&self) -> &BTreeMap<SubgroupId, f64> {
        &self.subgroup_accuracy
    }

    pub fn accuracy(&self, subgroup: Option<SubgroupId>) -> Option<f64> {
        subgroup
            .and_then(|g| self.subgroup_accuracy.get(&g).copied())
            .or(self.default_accuracy)
    }
}

/// Votes requested for each item.
#[derive(Clone, Debug, PartialEq)]
pub enum VotesPerItem {
    Constant(u32),
    PerItem(BTreeMap<ItemId, u32>),
}

impl VotesPerItem {
    fn get(&self, id: ItemId) -> Option<u32> {
        match self {
            VotesPerItem::Constant(b) => Some(*b),
            VotesPerItem::PerItem(m) => m.get(&id).copied(),
        }
    }
}

/// Draw votes for `items`; each vote is the gold label with probability
/// `p_g` and its flip otherwise. Worker ids are vote slot indices.
///
/// Votes for an item depend only on the model seed and the item id, so
/// the result does not depend on the order of `items`.
pub fn simulate_votes(model: &WorkerModel, items: &[Item], votes: &VotesPerItem) -> Result<VoteSet> {
    let mut out = VoteSet::new();
    for item in items {
        let gold = item
            .gold_label
            .ok_or_else(|| Error::invalid(format!("item {} has no gold label to simulate from", item.id)))?;
        let p = model
            .accuracy(item.subgroup)
            .ok_or_else(|| Error::invalid(format!("no worker accuracy for subgroup of item {}", item.id)))?;
        let b = votes
            .get(item.id)
            .ok_or_else(|| Error::invalid(format!("no vote count for item {}", item.id)))?;
        if b == 0 {
            return Err(Error::invalid(format!("item {} requested zero votes", item.id)));
        }
        let mut rng = seed::rng(seed::derive(model.seed, item.id));
        for w in 0..b {
            let label = if rng.gen_bool(p) { gold } else { gold.flip() };
            out.push(item.id, Vote { worker: w, label });
        }
    }
    Ok(out)
}

/// A question sent to an answer source.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub item: ItemId,
    pub subgroup: Option<SubgroupId>,
    pub votes: u32,
}

/// Anything that can answer labeling questions.
pub trait AnswerSource {
    /// Collect `votes` answers for every question. Sources may return
    /// answers for other items; callers decide what to do with them.
    fn request(&mut self, questions: &[Question]) -> Result<VoteSet>;
}

impl<S: AnswerSource + ?Sized> AnswerSource for &mut S {
    fn request(&mut self, questions: &[Question]) -> Result<VoteSet> {
        (**self).request(questions)
    }
}

impl<S: AnswerSource + ?Sized> AnswerSource for Box<S> {
    fn request(&mut self, questions: &[Question]) -> Result<VoteSet> {
        (**self).request(questions)
    }
}

/// Simulated workers answering from the gold labels of a known item set.
#[derive(Clone, Debug)]
pub struct SimulatedCrowd {
    model: WorkerModel,
    items: BTreeMap<ItemId, Item>,
    requests: u64,
}

impl SimulatedCrowd {
    pub fn new<'a>(model: WorkerModel, items: impl IntoIterator<Item = &'a Item>) -> Self {
        SimulatedCrowd {
            model,
            items: items.into_iter().map(|i| (i.id, i.clone())).collect(),
            requests: 0,
        }
    }
}

impl AnswerSource for SimulatedCrowd {
    fn request(&mut self, questions: &[Question]) -> Result<VoteSet> {
        // A fresh stream per request so asking twice gives new votes.
        let round = self.model.with_seed(seed::derive(self.model.seed, self.requests));
        self.requests += 1;
        let mut items = Vec::with_capacity(questions.len());
        let mut counts = BTreeMap::new();
        for q in questions {
            let item = self
                .items
                .get(&q.item)
                .ok_or_else(|| Error::AnswerSource(format!("unknown item {}", q.item)))?;
            items.push(item.clone());
            counts.insert(q.item, q.votes);
        }
        simulate_votes(&round, &items, &VotesPerItem::PerItem(counts))
    }
}

/// Perfect workers: every vote is the gold label.
#[derive(Clone, Debug, Default)]
pub struct GoldReplay {
    gold: BTreeMap<ItemId, ClassLabel>,
}

impl GoldReplay {
    pub fn new<'a>(items: impl IntoIterator<Item = &'a Item>) -> Self {
        GoldReplay {
            gold: items
                .into_iter()
                .filter_map(|i| i.gold_label.map(|g| (i.id, g)))
                .collect(),
        }
    }
}

impl AnswerSource for GoldReplay {
    fn request(&mut self, questions: &[Question]) -> Result<VoteSet> {
        let mut out = VoteSet::new();
        for q in questions {
            let label = *self
                .gold
                .get(&q.item)
                .ok_or_else(|| Error::AnswerSource(format!("no gold label for item {}", q.item)))?;
            for w in 0..q.votes {
                out.push(q.item, Vote { worker: w, label });
            }
        }
        Ok(out)
    }
}

/// Answers recorded earlier, handed back in the order they were recorded.
#[derive(Clone, Debug, Default)]
pub struct TranscriptReplay {
    recorded: BTreeMap<ItemId, std::collections::VecDeque<Vote>>,
}

impl TranscriptReplay {
    pub fn new(transcript: VoteSet) -> Self {
        TranscriptReplay {
            recorded: transcript
                .votes
                .into_iter()
                .map(|(id, v)| (id, v.into_iter().collect()))
                .collect(),
        }
    }
}

impl AnswerSource for TranscriptReplay {
    fn request(&mut self, questions: &[Question]) -> Result<VoteSet> {
        let mut out = VoteSet::new();
        for q in questions {
            let queue = self
                .recorded
                .get_mut(&q.item)
                .ok_or_else(|| Error::AnswerSource(format!("transcript has no answers for item {}", q.item)))?;
            if queue.len() < q.votes as usize {
                return Err(Error::AnswerSource(format!(
                    "transcript has {} answers left for item {}, {} requested",
                    queue.len(),
                    q.item,
                    q.votes
                )));
            }
            for _ in 0..q.votes {
                out.push(q.item, queue.pop_front().expect("length checked"));
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::FeatureVector;

    fn item(id: ItemId, gold: ClassLabel, g: SubgroupId) -> Item {
        Item {
            id,
            features: FeatureVector::new(vec![0.0]).unwrap(),
            gold_label: Some(gold),
            subgroup: Some(g),
        }
    }

    #[test]
    fn perfect_workers_echo_gold() {
        let m = WorkerModel::new_unchecked(BTreeMap::from([(0, 1.0)]), 1, 3);
        let items: Vec<_> = (0..20).map(|i| item(i, ClassLabel::from(i % 2 == 0), 0)).collect();
        let v = simulate_votes(&m, &items, &VotesPerItem::Constant(5)).unwrap();
        for it in &items {
            assert!(v.get(it.id).unwrap().iter().all(|x| x.label == it.gold_label.unwrap()));
        }
        assert_eq!(v.total_votes(), 100);
    }

    #[test]
    fn vote_accuracy_monte_carlo() {
        // Oracle: Bernoulli(0.7) mean, standard error sqrt(0.21 / n).
        let n = 100_000;
        let m = WorkerModel::new(BTreeMap::from([(2, 0.7)]), 1, 41).unwrap();
        let v = simulate_votes(&m, &[item(9, ClassLabel::One, 2)], &VotesPerItem::Constant(n)).unwrap();
        let hits = v.get(9).unwrap().iter().filter(|x| x.label == ClassLabel::One).count();
        let acc = hits as f64 / n as f64;
        let se = (0.21 / n as f64).sqrt();
        assert!((acc - 0.7).abs() < 3.0 * se, "{acc}");
    }

    #[test]
    fn simulation_is_deterministic_and_order_free() {
        let m = WorkerModel::uniform(0.6, 3, 8).unwrap();
        let items: Vec<_> = (0..10).map(|i| item(i, ClassLabel::Zero, 0)).collect();
        let a = simulate_votes(&m, &items, &VotesPerItem::Constant(3)).unwrap();
        let mut rev = items.clone();
        rev.reverse();
        assert_eq!(a, simulate_votes(&m, &rev, &VotesPerItem::Constant(3)).unwrap());
        assert_ne!(a, simulate_votes(&m.with_seed(9), &items, &VotesPerItem::Constant(3)).unwrap());
    }

    #[test]
    fn simulation_needs_gold_and_accuracy() {
        let m = WorkerModel::new(BTreeMap::from([(0, 0.8)]), 1, 0).unwrap();
        let mut it = item(1, ClassLabel::One, 0);
        it.gold_label = None;
        assert!(simulate_votes(&m, &[it], &VotesPerItem::Constant(1)).is_err());
        assert!(simulate_votes(&m, &[item(1, ClassLabel::One, 5)], &VotesPerItem::Constant(1)).is_err());
    }

    #[test]
    fn worker_model_rejects_degenerate_accuracy() {
        assert!(WorkerModel::new(BTreeMap::from([(0, 1.0)]), 1, 0).is_err());
        assert!(WorkerModel::new(BTreeMap::from([(0, 0.0)]), 1, 0).is_err());
        assert!(WorkerModel::uniform(0.5, 0, 0).is_err());
    }

    #[test]
    fn gold_replay_and_transcript() {
        let items: Vec<_> = (0..3).map(|i| item(i, ClassLabel::from(i == 1), 0)).collect();
        let mut gold = GoldReplay::new(&items);
        let q: Vec<_> = items
            .iter()
            .map(|i| Question {
                item: i.id,
                subgroup: i.subgroup,
                votes: 2,
            })
            .collect();
        let v = gold.request(&q).unwrap();
        assert_eq!(aggregate_majority(&v)[&1], ClassLabel::One);
        assert_eq!(v.total_votes(), 6);

        let mut replay = TranscriptReplay::new(v.clone());
        assert_eq!(replay.request(&q).unwrap(), v);
        assert!(replay.request(&q).is_err());
    }

    #[test]
    fn simulated_crowd_rounds_differ() {
        let items: Vec<_> = (0..50).map(|i| item(i, ClassLabel::One, 0)).collect();
        let mut crowd = SimulatedCrowd::new(WorkerModel::uniform(0.6, 1, 1).unwrap(), &items);
        let q: Vec<_> = items
            .iter()
            .map(|i| Question {
                item: i.id,
                subgroup: None,
                votes: 3,
            })
            .collect();
        let a = crowd.request(&q).unwrap();
        let b = crowd.request(&q).unwrap();
        assert_ne!(a, b);
        let mut again = SimulatedCrowd::new(WorkerModel::uniform(0.6, 1, 1).unwrap(), &items);
        assert_eq!(again.request(&q).unwrap(), a);
    }
}
