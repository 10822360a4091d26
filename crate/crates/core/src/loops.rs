//! The two labeling scenarios.
//!
//! Upfront: train once on the initial pool, score the unlabeled pool once,
//! send the chosen items to the crowd and label the rest with the model.
//! Crowd labels never reach the training set.
//!
//! Iterative: alternate score, select a batch, crowd-label it, retrain on
//! the initial pool plus every crowd label so far, until the budget is
//! spent or the cross-validated quality meets the target.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::bootstrap::{ensemble_labels, train_ensemble, LabelMatrix, DEFAULT_ENSEMBLE_SIZE};
use crate::classifiers::{k_fold_quality, Learner, Predictor};
use crate::crowd::{
    aggregate_dawid_skene, aggregate_majority, pba_allocate, raw_subgroup_accuracy, AnswerSource,
    PbaConfig, Question, TranscriptReplay, VoteSet, clamp_accuracy,
};
use crate::dataset::{ClassLabel, Example, Item, ItemId, PoolSplit, SubgroupId};
use crate::error::{Error, Result};
use crate::metrics::{quality, Metric};
use crate::rankers::{
    baseline_scores, margin_distance_scores, min_exp_error_scores, select_batch, uncertainty_scores,
    MinExpErrorParams, RankerKind, ScoreVector,
};
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Upfront,
    Iterative,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::Upfront => "upfront",
            Scenario::Iterative => "iterative",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budget {
    pub total_questions: usize,
    pub spent: usize,
}

impl Budget {
    pub fn new(total_questions: usize) -> Self {
        Budget {
            total_questions,
            spent: 0,
        }
    }

    pub fn remaining(&self) -> usize {
        self.total_questions - self.spent
    }

    pub fn is_exhausted(&self) -> bool {
        self.spent >= self.total_questions
    }

    pub fn spend(&mut self, n: usize) -> Result<()> {
        if n > self.remaining() {
            return Err(Error::invalid(format!(
                "spending {n} questions with only {} left",
                self.remaining()
            )));
        }
        self.spent += n;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QualityTarget {
    pub metric: Metric,
    pub threshold: f64,
}

impl QualityTarget {
    pub fn new(metric: Metric, threshold: f64) -> Result<Self> {
        let t = QualityTarget { metric, threshold };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0 && self.threshold <= 1.0) {
            return Err(Error::Config(format!(
                "quality threshold {} not in (0,1]",
                self.threshold
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StopRule {
    /// Ask at most this many questions.
    Budget(usize),
    /// Stop once the quality estimate reaches the target.
    Quality(QualityTarget),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Aggregation {
    #[default]
    Majority,
    DawidSkene,
}

impl Aggregation {
    pub fn apply(self, votes: &VoteSet) -> BTreeMap<ItemId, ClassLabel> {
        match self {
            Aggregation::Majority => aggregate_majority(votes),
            Aggregation::DawidSkene => aggregate_dawid_skene(votes),
        }
    }
}

/// How many votes each question gets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VotePolicy {
    /// The same odd or even count for every item.
    Fixed(u32),
    /// Per-subgroup counts from the allocator, after a probing round.
    Pba(PbaConfig),
}

impl Default for VotePolicy {
    fn default() -> Self {
        VotePolicy::Fixed(1)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LoopConfig {
    pub ensemble_size: usize,
    /// Questions per iteration; `None` means [`default_batch_size`].
    pub batch_size: Option<usize>,
    pub min_exp_error: MinExpErrorParams,
    pub votes: VotePolicy,
    pub aggregation: Aggregation,
    /// Folds of the quality estimate on `L0 + CL`.
    pub quality_folds: usize,
    /// Metric of the quality estimate when no target names one.
    pub metric: Metric,
}

impl Default for LoopConfig {
    fn default() -> Self {
        LoopConfig {
            ensemble_size: DEFAULT_ENSEMBLE_SIZE,
            batch_size: None,
            min_exp_error: MinExpErrorParams::default(),
            votes: VotePolicy::default(),
            aggregation: Aggregation::default(),
            quality_folds: 5,
            metric: Metric::F1,
        }
    }
}

impl LoopConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ensemble_size < 2 {
            return Err(Error::Config("ensemble_size must be at least 2".into()));
        }
        if self.batch_size == Some(0) {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.quality_folds < 2 {
            return Err(Error::Config("quality_folds must be at least 2".into()));
        }
        if !(self.min_exp_error.smoothing > 0.0) {
            return Err(Error::Config("min_exp_error.smoothing must be positive".into()));
        }
        match &self.votes {
            VotePolicy::Fixed(0) => Err(Error::Config("votes per question must be at least 1".into())),
            VotePolicy::Fixed(_) => Ok(()),
            VotePolicy::Pba(p) => p.validate(),
        }
    }
}

/// Ten percent of the budget, at least one.
pub fn default_batch_size(budget: usize) -> usize {
    ((budget as f64 * 0.1).round() as usize).max(1)
}

// Seed streams within one iteration.
const MODEL: u64 = 0;
const ENSEMBLE: u64 = 1;
const RANK: u64 = 2;
const SELECT: u64 = 3;
const QUALITY: u64 = 4;
const ORDER: u64 = 5;

fn stream(seed: u64, iteration: usize, purpose: u64) -> u64 {
    seed::derive_path(seed, &[iteration as u64, purpose])
}

/// Seed of the model trained at the start of `iteration`.
pub fn model_seed(seed: u64, iteration: usize) -> u64 {
    stream(seed, iteration, MODEL)
}

fn probe_seed(seed: u64) -> u64 {
    seed::derive_path(seed, &[u64::MAX])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelSource {
    Crowd,
    Model,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FinalLabel {
    pub label: ClassLabel,
    pub source: LabelSource,
    /// Carried along for scoring only; never read by the loops.
    pub gold: Option<ClassLabel>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub index: usize,
    /// Size of `L0 + CL` the ranking model was trained on.
    pub training_size: usize,
    /// Quality estimate on the training set, when it has enough items.
    pub cv_quality: Option<f64>,
    pub asked: Vec<ItemId>,
    pub votes_requested: Vec<u32>,
    pub votes_used: usize,
    /// Answers for the asked items, as received.
    pub answers: VoteSet,
    pub labels: BTreeMap<ItemId, ClassLabel>,
    /// Items the source answered without being asked this round.
    pub ignored: Vec<ItemId>,
    pub unlabeled_remaining: usize,
    pub crowd_labeled: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeRecord {
    pub items: Vec<ItemId>,
    pub answers: VoteSet,
    pub raw_accuracy: BTreeMap<SubgroupId, f64>,
    pub accuracy: BTreeMap<SubgroupId, f64>,
    pub votes_used: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    BudgetExhausted,
    QualityMet,
    PoolExhausted,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub scenario: Scenario,
    pub ranker: RankerKind,
    pub seed: u64,
    pub stop: StopRule,
    pub probe: Option<ProbeRecord>,
    pub iterations: Vec<IterationRecord>,
    pub final_labels: BTreeMap<ItemId, FinalLabel>,
    pub stop_reason: Option<StopReason>,
    pub warnings: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    record: String,
    scenario: Scenario,
    ranker: RankerKind,
    seed: u64,
    stop: StopRule,
}

/// `body` as a JSON object line with an extra `record` field.
fn tagged<T: Serialize>(record: &str, body: &T) -> Result<String> {
    let mut value = serde_json::to_value(body)?;
    if let serde_json::Value::Object(map) = &mut value {
        map.insert("record".into(), record.into());
    }
    Ok(serde_json::to_string(&value)?)
}

#[derive(Serialize, Deserialize)]
struct Final {
    record: String,
    final_labels: BTreeMap<ItemId, FinalLabel>,
    stop_reason: Option<StopReason>,
    warnings: Vec<String>,
}

#[derive(Deserialize)]
struct Tag {
    record: String,
}

impl RunLog {
    fn new(scenario: Scenario, ranker: RankerKind, seed: u64, stop: StopRule) -> Self {
        RunLog {
            scenario,
            ranker,
            seed,
            stop,
            probe: None,
            iterations: Vec::new(),
            final_labels: BTreeMap::new(),
            stop_reason: None,
            warnings: Vec::new(),
        }
    }

    pub fn questions_asked(&self) -> usize {
        self.iterations.iter().map(|i| i.asked.len()).sum()
    }

    pub fn votes_used(&self) -> usize {
        self.probe.as_ref().map_or(0, |p| p.votes_used) + self.iterations.iter().map(|i| i.votes_used).sum::<usize>()
    }

    /// Every accepted answer in the order it was received.
    pub fn transcript(&self) -> VoteSet {
        let mut all = VoteSet::new();
        if let Some(p) = &self.probe {
            all.extend(p.answers.clone());
        }
        for it in &self.iterations {
            all.extend(it.answers.clone());
        }
        all
    }

    /// An answer source that hands back this log's answers.
    pub fn replay(&self) -> TranscriptReplay {
        TranscriptReplay::new(self.transcript())
    }

    /// Quality of the final labels with the given source (all when `None`)
    /// against gold. `None` when no such item carries gold.
    pub fn quality_of(&self, metric: Metric, source: Option<LabelSource>) -> Result<Option<f64>> {
        let (pred, gold): (Vec<_>, Vec<_>) = self
            .final_labels
            .values()
            .filter(|f| source.is_none_or(|s| f.source == s))
            .filter_map(|f| f.gold.map(|g| (f.label, g)))
            .unzip();
        if pred.is_empty() {
            return Ok(None);
        }
        quality(metric, &pred, &gold).map(Some)
    }

    /// Fraction of the final labels that came from the crowd.
    pub fn crowd_fraction(&self) -> f64 {
        if self.final_labels.is_empty() {
            return 0.0;
        }
        let crowd = self
            .final_labels
            .values()
            .filter(|f| f.source == LabelSource::Crowd)
            .count();
        crowd as f64 / self.final_labels.len() as f64
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        let header = Header {
            record: "header".into(),
            scenario: self.scenario,
            ranker: self.ranker,
            seed: self.seed,
            stop: self.stop,
        };
        writeln!(out, "{}", serde_json::to_string(&header)?)?;
        if let Some(p) = &self.probe {
            writeln!(out, "{}", tagged("probe", p)?)?;
        }
        for it in &self.iterations {
            writeln!(out, "{}", tagged("iteration", it)?)?;
        }
        let fin = Final {
            record: "final".into(),
            final_labels: self.final_labels.clone(),
            stop_reason: self.stop_reason,
            warnings: self.warnings.clone(),
        };
        writeln!(out, "{}", serde_json::to_string(&fin)?)?;
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Self> {
        let mut log: Option<RunLog> = None;
        let mut finished = false;
        for (n, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let bad = |m: String| Error::Parse {
                path: "<run log>".into(),
                line: n + 1,
                message: m,
            };
            let tag: Tag = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
            if tag.record != "header" && log.is_none() {
                return Err(bad("run log must start with a header record".into()));
            }
            match tag.record.as_str() {
                "header" => {
                    let h: Header = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
                    log = Some(RunLog::new(h.scenario, h.ranker, h.seed, h.stop));
                }
                "probe" => {
                    let p: ProbeRecord = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
                    log.as_mut().expect("header seen").probe = Some(p);
                }
                "iteration" => {
                    let it: IterationRecord = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
                    log.as_mut().expect("header seen").iterations.push(it);
                }
                "final" => {
                    let f: Final = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
                    let l = log.as_mut().expect("header seen");
                    l.final_labels = f.final_labels;
                    l.stop_reason = f.stop_reason;
                    l.warnings = f.warnings;
                    finished = true;
                }
                other => return Err(bad(format!("unknown record `{other}`"))),
            }
        }
        match log {
            Some(l) if finished => Ok(l),
            _ => Err(Error::invalid("run log is truncated")),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        self.write_jsonl(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path.as_ref())?;
        RunLog::read_jsonl(std::io::BufReader::new(file)).map_err(|e| match e {
            Error::Parse { line, message, .. } => Error::Parse {
                path: path.as_ref().to_path_buf(),
                line,
                message,
            },
            e => e,
        })
    }
}

/// State of the model at the top of an iterative round.
pub struct Checkpoint<'a, M> {
    pub iteration: usize,
    pub training: &'a [Example<'a>],
    pub model: &'a M,
    pub cv_quality: Option<f64>,
}

struct Ranking {
    scores: ScoreVector,
    labels: Option<LabelMatrix>,
}

#[allow(clippy::too_many_arguments)]
fn rank<L: Learner>(
    learner: &L,
    training: &[Example<'_>],
    model: &L::Model,
    pool: &[Item],
    kind: RankerKind,
    config: &LoopConfig,
    seed: u64,
    iteration: usize,
) -> Result<Ranking> {
    let ensemble = |()| -> Result<LabelMatrix> {
        let e = train_ensemble(learner, training, config.ensemble_size, stream(seed, iteration, ENSEMBLE))?;
        ensemble_labels(&e, pool)
    };
    Ok(match kind {
        RankerKind::Uncertainty => {
            let labels = ensemble(())?;
            Ranking {
                scores: uncertainty_scores(&labels)?,
                labels: Some(labels),
            }
        }
        RankerKind::MinExpError => {
            let labels = ensemble(())?;
            let scores = min_exp_error_scores(
                learner,
                training,
                model,
                &labels,
                pool,
                &config.min_exp_error,
                stream(seed, iteration, RANK),
            )?;
            Ranking {
                scores,
                labels: Some(labels),
            }
        }
        RankerKind::MarginDistance => Ranking {
            scores: margin_distance_scores(model, pool)?,
            labels: None,
        },
        RankerKind::Baseline => Ranking {
            scores: baseline_scores(pool)?,
            labels: None,
        },
    })
}

/// Per-subgroup accuracy estimates and the votes still available.
struct PbaState {
    config: PbaConfig,
    accuracy: BTreeMap<SubgroupId, f64>,
    votes_left: u64,
}

/// Questions, answers and vote accounting shared by both scenarios.
struct Asker<'a, S: AnswerSource> {
    source: S,
    config: &'a LoopConfig,
    pool: BTreeMap<ItemId, &'a Item>,
    pba: Option<PbaState>,
}

impl<'a, S: AnswerSource> Asker<'a, S> {
    fn new(source: S, config: &'a LoopConfig, pool: &'a [Item]) -> Self {
        Asker {
            source,
            config,
            pool: pool.iter().map(|i| (i.id, i)).collect(),
            pba: None,
        }
    }

    /// Probe `n0` items of every subgroup in the pool with `v0` votes each.
    fn probe(&mut self, pba: &PbaConfig, seed: u64, log: &mut RunLog) -> Result<()> {
        let mut by_group: BTreeMap<SubgroupId, Vec<&Item>> = BTreeMap::new();
        for item in self.pool.values() {
            let g = item
                .subgroup
                .ok_or_else(|| Error::invalid(format!("item {} has no subgroup; PBA needs one", item.id)))?;
            by_group.entry(g).or_default().push(item);
        }
        let mut rng = seed::rng(probe_seed(seed));
        let mut chosen = Vec::new();
        for members in by_group.values_mut() {
            members.shuffle(&mut rng);
            chosen.extend(members.iter().take(pba.probe_items).copied());
        }
        chosen.sort_by_key(|i| i.id);
        let questions: Vec<Question> = chosen
            .iter()
            .map(|i| Question {
                item: i.id,
                subgroup: i.subgroup,
                votes: pba.probe_votes,
            })
            .collect();
        let cost: u64 = questions.iter().map(|q| q.votes as u64).sum();
        if cost > pba.vote_budget {
            return Err(Error::InfeasibleBudget {
                budget: pba.vote_budget,
                minimum: cost,
            });
        }
        let (answers, ignored) = self.collect(&questions)?;
        for id in ignored {
            log.warnings.push(format!("ignored unrequested answer for item {id} while probing"));
        }
        let probes: Vec<_> = chosen.iter().map(|i| (i.id, i.subgroup.expect("checked"), i.gold_label)).collect();
        let groups: Vec<SubgroupId> = by_group.keys().copied().collect();
        let raw = raw_subgroup_accuracy(&groups, &probes, &answers, pba.accuracy_mode)?;
        let accuracy: BTreeMap<_, _> = raw.iter().map(|(g, p)| (*g, clamp_accuracy(*p))).collect();
        for (g, p) in &raw {
            if *p != accuracy[g] {
                log.warnings.push(format!("subgroup {g} accuracy {p} clamped to {}", accuracy[g]));
            }
        }
        let used = answers.total_votes();
        log.probe = Some(ProbeRecord {
            items: chosen.iter().map(|i| i.id).collect(),
            answers,
            raw_accuracy: raw,
            accuracy: accuracy.clone(),
            votes_used: used,
        });
        self.pba = Some(PbaState {
            config: pba.clone(),
            accuracy,
            votes_left: pba.vote_budget - used as u64,
        });
        Ok(())
    }

    /// Ask the source and keep only answers to this round's questions.
    fn collect(&mut self, questions: &[Question]) -> Result<(VoteSet, Vec<ItemId>)> {
        let mut raw = self.source.request(questions)?;
        let mut accepted = VoteSet::new();
        for q in questions {
            let votes = raw
                .remove(q.item)
                .filter(|v| !v.is_empty())
                .ok_or_else(|| Error::AnswerSource(format!("no answer for item {}", q.item)))?;
            for v in votes.into_iter().take(q.votes as usize) {
                accepted.push(q.item, v);
            }
        }
        Ok((accepted, raw.items().collect()))
    }

    /// Votes per item for a batch when `remaining_questions` are still to be asked.
    fn votes_for(&mut self, batch: &[ItemId], remaining_questions: usize) -> Result<Vec<u32>> {
        let Some(state) = &mut self.pba else {
            let VotePolicy::Fixed(b) = self.config.votes else {
                unreachable!("probing happens before the first batch")
            };
            return Ok(vec![b; batch.len()]);
        };
        let groups: Vec<SubgroupId> = batch
            .iter()
            .map(|id| {
                self.pool[id]
                    .subgroup
                    .ok_or_else(|| Error::invalid(format!("item {id} has no subgroup; PBA needs one")))
            })
            .collect::<Result<_>>()?;
        let mut f: BTreeMap<SubgroupId, u64> = BTreeMap::new();
        for g in &groups {
            *f.entry(*g).or_default() += 1;
        }
        // This batch's share of the votes left.
        let share = (state.votes_left as u128 * batch.len() as u128 / remaining_questions.max(1) as u128) as u64;
        let config = PbaConfig {
            vote_budget: share,
            ..state.config.clone()
        };
        let alloc = pba_allocate(&config, &state.accuracy, &f)?;
        state.votes_left -= alloc.cost;
        Ok(groups.iter().map(|g| alloc.votes_per_group[g]).collect())
    }

    fn ask(
        &mut self,
        batch: &[ItemId],
        remaining_questions: usize,
        seed: u64,
        log: &mut RunLog,
    ) -> Result<(Vec<u32>, VoteSet, BTreeMap<ItemId, ClassLabel>, Vec<ItemId>)> {
        if self.pba.is_none() {
            if let VotePolicy::Pba(p) = &self.config.votes {
                let p = p.clone();
                self.probe(&p, seed, log)?;
            }
        }
        let votes = self.votes_for(batch, remaining_questions)?;
        let questions: Vec<Question> = batch
            .iter()
            .zip(&votes)
            .map(|(id, &v)| Question {
                item: *id,
                subgroup: self.pool[id].subgroup,
                votes: v,
            })
            .collect();
        let (answers, ignored) = self.collect(&questions)?;
        for id in &ignored {
            log.warnings.push(format!("ignored unrequested answer for item {id}"));
        }
        let labels = self.config.aggregation.apply(&answers);
        Ok((votes, answers, labels, ignored))
    }
}

fn check_inputs(pools: &PoolSplit, config: &LoopConfig, stop: &StopRule) -> Result<()> {
    pools.validate()?;
    config.validate()?;
    if let StopRule::Quality(t) = stop {
        t.validate()?;
    }
    Ok(())
}

fn initial_examples(pools: &PoolSplit) -> Vec<Example<'_>> {
    let mut l0: Vec<Example<'_>> = pools.initial_labeled.iter().map(|l| l.example()).collect();
    l0.sort_by_key(|e| e.id);
    l0
}

fn clamp_budget(questions: usize, pool: usize, log: &mut RunLog) -> usize {
    if questions > pool {
        log.warnings
            .push(format!("budget {questions} exceeds the {pool} unlabeled items; clamped"));
    }
    questions.min(pool)
}

fn finish<M: Predictor>(
    log: &mut RunLog,
    crowd: &BTreeMap<ItemId, ClassLabel>,
    pool: &[Item],
    model: &M,
) -> Result<()> {
    for item in pool {
        let (label, source) = match crowd.get(&item.id) {
            Some(l) => (*l, LabelSource::Crowd),
            None => (model.predict(&item.features)?, LabelSource::Model),
        };
        log.final_labels.insert(
            item.id,
            FinalLabel {
                label,
                source,
                gold: item.gold_label,
            },
        );
    }
    Ok(())
}

/// Upfront scenario: one model, one ranking, one round of questions.
#[allow(clippy::too_many_arguments)]
pub fn run_upfront<L: Learner, S: AnswerSource>(
    pools: &PoolSplit,
    learner: &L,
    ranker: RankerKind,
    stop: &StopRule,
    source: S,
    config: &LoopConfig,
    seed: u64,
) -> Result<RunLog> {
    check_inputs(pools, config, stop)?;
    let mut log = RunLog::new(Scenario::Upfront, ranker, seed, *stop);
    let l0 = initial_examples(pools);
    let pool = &pools.unlabeled;
    let model = learner.fit(&l0, model_seed(seed, 0))?;
    let mut crowd = BTreeMap::new();

    if !pool.is_empty() {
        let ranking = rank(learner, &l0, &model, pool, ranker, config, seed, 0)?;
        let asked: Vec<ItemId> = match stop {
            StopRule::Budget(b) => {
                let b = clamp_budget(*b, pool.len(), &mut log);
                if b == 0 {
                    Vec::new()
                } else {
                    select_batch(&ranking.scores, b, stream(seed, 0, SELECT))?.item_ids
                }
            }
            StopRule::Quality(target) => {
                let labels = match ranking.labels {
                    Some(l) => l,
                    None => {
                        let e = train_ensemble(learner, &l0, config.ensemble_size, stream(seed, 0, ENSEMBLE))?;
                        ensemble_labels(&e, pool)?
                    }
                };
                machine_prefix_complement(&ranking.scores, &labels, &model, pool, target, stream(seed, 0, ORDER))?
            }
        };
        if !asked.is_empty() {
            let total = asked.len();
            let (votes, answers, labels, ignored) = {
                let mut asker = Asker::new(source, config, pool);
                asker.ask(&asked, total, seed, &mut log)?
            };
            crowd = labels.clone();
            log.iterations.push(IterationRecord {
                index: 0,
                training_size: l0.len(),
                cv_quality: None,
                votes_used: answers.total_votes(),
                asked,
                votes_requested: votes,
                answers,
                labels,
                ignored,
                unlabeled_remaining: pool.len() - total,
                crowd_labeled: total,
            });
        }
    }
    log.stop_reason = Some(match stop {
        StopRule::Budget(_) => StopReason::BudgetExhausted,
        StopRule::Quality(_) => StopReason::QualityMet,
    });
    finish(&mut log, &crowd, pool, &model)?;
    Ok(log)
}

/// Items left for the crowd after the model takes the longest prefix, in
/// ascending score order, whose mean estimated correctness meets the target.
fn machine_prefix_complement<M: Predictor>(
    scores: &ScoreVector,
    labels: &LabelMatrix,
    model: &M,
    pool: &[Item],
    target: &QualityTarget,
    order_seed: u64,
) -> Result<Vec<ItemId>> {
    let members = labels.shape().1 as f64;
    let mut rows: Vec<(f64, u64, ItemId, f64)> = Vec::with_capacity(pool.len());
    for (i, item) in pool.iter().enumerate() {
        let predicted = model.predict(&item.features)?.as_u8();
        let agree = labels.row(i).iter().filter(|&&l| l == predicted).count() as f64 / members;
        let score = scores.get(item.id).expect("scores cover the pool");
        rows.push((score, seed::mix64(order_seed ^ item.id), item.id, agree));
    }
    rows.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut keep = 0;
    let mut sum = 0.0;
    for (k, row) in rows.iter().enumerate() {
        sum += row.3;
        if sum / (k + 1) as f64 >= target.threshold {
            keep = k + 1;
        }
    }
    let mut asked: Vec<ItemId> = rows[keep..].iter().map(|r| r.2).collect();
    asked.sort_unstable();
    Ok(asked)
}

/// Iterative scenario without a checkpoint observer.
#[allow(clippy::too_many_arguments)]
pub fn run_iterative<L: Learner, S: AnswerSource>(
    pools: &PoolSplit,
    learner: &L,
    ranker: RankerKind,
    stop: &StopRule,
    source: S,
    config: &LoopConfig,
    seed: u64,
) -> Result<RunLog> {
    run_iterative_observed(pools, learner, ranker, stop, source, config, seed, |_| {})
}

/// Iterative scenario; `observe` sees the model at the top of every round.
#[allow(clippy::too_many_arguments)]
pub fn run_iterative_observed<L, S, F>(
    pools: &PoolSplit,
    learner: &L,
    ranker: RankerKind,
    stop: &StopRule,
    source: S,
    config: &LoopConfig,
    seed: u64,
    mut observe: F,
) -> Result<RunLog>
where
    L: Learner,
    S: AnswerSource,
    F: FnMut(&Checkpoint<'_, L::Model>),
{
    check_inputs(pools, config, stop)?;
    let mut log = RunLog::new(Scenario::Iterative, ranker, seed, *stop);
    let l0 = initial_examples(pools);
    let by_id: BTreeMap<ItemId, &Item> = pools.unlabeled.iter().map(|i| (i.id, i)).collect();
    let mut budget = Budget::new(match stop {
        StopRule::Budget(b) => clamp_budget(*b, pools.unlabeled.len(), &mut log),
        StopRule::Quality(_) => pools.unlabeled.len(),
    });
    let batch = config
        .batch_size
        .unwrap_or_else(|| default_batch_size(budget.total_questions.max(1)));
    let (metric, threshold) = match stop {
        StopRule::Quality(t) => (t.metric, Some(t.threshold)),
        StopRule::Budget(_) => (config.metric, None),
    };

    let mut asker = Asker::new(source, config, &pools.unlabeled);
    let mut crowd: Vec<(ItemId, ClassLabel)> = Vec::new();
    let mut remaining: Vec<Item> = pools.unlabeled.clone();
    let mut iteration = 0;
    let model = loop {
        let mut training = l0.clone();
        training.extend(crowd.iter().map(|(id, label)| Example {
            id: *id,
            features: by_id[id].features.as_slice(),
            label: *label,
        }));
        debug_assert_eq!(training.len(), l0.len() + crowd.len());
        let model = learner.fit(&training, model_seed(seed, iteration))?;
        let cv_quality = if training.len() >= config.quality_folds {
            let seed = stream(seed, iteration, QUALITY);
            Some(k_fold_quality(learner, &training, config.quality_folds, metric, seed)?.value)
        } else {
            None
        };
        observe(&Checkpoint {
            iteration,
            training: &training,
            model: &model,
            cv_quality,
        });

        if let (Some(q), Some(t)) = (cv_quality, threshold) {
            if q >= t {
                log.stop_reason = Some(StopReason::QualityMet);
                break model;
            }
        }
        if budget.is_exhausted() {
            log.stop_reason = Some(StopReason::BudgetExhausted);
            break model;
        }
        if remaining.is_empty() {
            log.stop_reason = Some(StopReason::PoolExhausted);
            break model;
        }

        let take = batch.min(budget.remaining()).min(remaining.len());
        let ranking = rank(learner, &training, &model, &remaining, ranker, config, seed, iteration)?;
        let asked = select_batch(&ranking.scores, take, stream(seed, iteration, SELECT))?.item_ids;
        let (votes, answers, labels, ignored) = asker.ask(&asked, budget.remaining(), seed, &mut log)?;
        budget.spend(take)?;
        let asked_set: BTreeSet<ItemId> = asked.iter().copied().collect();
        remaining.retain(|i| !asked_set.contains(&i.id));
        crowd.extend(asked.iter().map(|id| (*id, labels[id])));
        log.iterations.push(IterationRecord {
            index: iteration,
            training_size: training.len(),
            cv_quality,
            votes_used: answers.total_votes(),
            asked,
            votes_requested: votes,
            answers,
            labels,
            ignored,
            unlabeled_remaining: remaining.len(),
            crowd_labeled: crowd.len(),
        });
        iteration += 1;
    };

    let crowd: BTreeMap<ItemId, ClassLabel> = crowd.into_iter().collect();
    finish(&mut log, &crowd, &pools.unlabeled, &model)?;
    Ok(log)
}

/// Dispatch on the scenario.
#[allow(clippy::too_many_arguments)]
pub fn run<L: Learner, S: AnswerSource>(
    scenario: Scenario,
    pools: &PoolSplit,
    learner: &L,
    ranker: RankerKind,
    stop: &StopRule,
    source: S,
    config: &LoopConfig,
    seed: u64,
) -> Result<RunLog> {
    match scenario {
        Scenario::Upfront => run_upfront(pools, learner, ranker, stop, source, config, seed),
        Scenario::Iterative => run_iterative(pools, learner, ranker, stop, source, config, seed),
    }
}

/// Re-run a logged run against its own recorded answers.
pub fn replay<L: Learner>(
    log: &RunLog,
    pools: &PoolSplit,
    learner: &L,
    config: &LoopConfig,
) -> Result<RunLog> {
    run(log.scenario, pools, learner, log.ranker, &log.stop, log.replay(), config, log.seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifiers::ClassifierSpec;
    use crate::crowd::{AccuracyMode, GoldReplay, SimulatedCrowd, WorkerModel};
    use crate::dataset::{FeatureVector, LabeledItem};

    fn item(id: ItemId, x: f64, y: f64) -> Item {
        Item {
            id,
            features: FeatureVector::new(vec![x, y]).unwrap(),
            gold_label: Some(ClassLabel::from(x + 0.3 * y > 0.0)),
            subgroup: Some((id % 3) as u32),
        }
    }

    fn pools(n: usize) -> PoolSplit {
        let mut rng = seed::rng(5);
        let items: Vec<Item> = (0..n as u64)
            .map(|id| {
                use rand::Rng;
                item(id, rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0))
            })
            .collect();
        let mut initial = Vec::new();
        let mut unlabeled = Vec::new();
        for it in items {
            let want = if initial.is_empty() { ClassLabel::One } else { ClassLabel::Zero };
            if initial.len() < 2 && it.gold_label == Some(want) {
                initial.push(LabeledItem {
                    label: it.gold_label.unwrap(),
                    item: it,
                });
            } else {
                unlabeled.push(it);
            }
        }
        PoolSplit {
            initial_labeled: initial,
            unlabeled,
            test: Vec::new(),
        }
    }

    fn gold(p: &PoolSplit) -> GoldReplay {
        GoldReplay::new(&p.unlabeled)
    }

    #[test]
    fn batch_size_rule() {
        assert_eq!(default_batch_size(400), 40);
        assert_eq!(default_batch_size(5), 1);
        assert_eq!(default_batch_size(100), 10);
    }

    #[test]
    fn upfront_degenerate_budgets() {
        let p = pools(40);
        let spec = ClassifierSpec::default();
        let cfg = LoopConfig::default();
        let none = run_upfront(&p, &spec, RankerKind::Uncertainty, &StopRule::Budget(0), gold(&p), &cfg, 1).unwrap();
        assert_eq!(none.questions_asked(), 0);
        assert!(none.final_labels.values().all(|f| f.source == LabelSource::Model));
        assert_eq!(none.final_labels.len(), p.unlabeled.len());

        let all = run_upfront(&p, &spec, RankerKind::Uncertainty, &StopRule::Budget(1000), gold(&p), &cfg, 1).unwrap();
        assert_eq!(all.questions_asked(), p.unlabeled.len());
        assert!(all.final_labels.values().all(|f| f.source == LabelSource::Crowd));
        assert_eq!(all.warnings.len(), 1);
    }

    #[test]
    fn upfront_never_trains_on_crowd_labels() {
        let p = pools(60);
        let spec = ClassifierSpec::default();
        let cfg = LoopConfig::default();
        let log = run_upfront(&p, &spec, RankerKind::Baseline, &StopRule::Budget(20), gold(&p), &cfg, 3).unwrap();
        assert_eq!(log.iterations[0].training_size, p.initial_labeled.len());
        let model = spec.fit(&initial_examples(&p), model_seed(3, 0)).unwrap();
        for item in &p.unlabeled {
            let f = log.final_labels[&item.id];
            if f.source == LabelSource::Model {
                assert_eq!(f.label, model.predict(&item.features).unwrap());
            }
        }
    }

    #[test]
    fn upfront_quality_target_already_met() {
        let p = pools(40);
        let target = QualityTarget::new(Metric::Accuracy, 0.01).unwrap();
        let log = run_upfront(
            &p,
            &ClassifierSpec::default(),
            RankerKind::Uncertainty,
            &StopRule::Quality(target),
            gold(&p),
            &LoopConfig::default(),
            2,
        )
        .unwrap();
        assert_eq!(log.questions_asked(), 0);
    }

    #[test]
    fn iterative_single_batch_matches_upfront_selection() {
        let p = pools(50);
        let spec = ClassifierSpec::default();
        let cfg = LoopConfig {
            batch_size: Some(12),
            ..LoopConfig::default()
        };
        for kind in RankerKind::ALL {
            let up = run_upfront(&p, &spec, kind, &StopRule::Budget(12), gold(&p), &cfg, 9).unwrap();
            let it = run_iterative(&p, &spec, kind, &StopRule::Budget(12), gold(&p), &cfg, 9).unwrap();
            assert_eq!(it.iterations.len(), 1);
            assert_eq!(it.iterations[0].asked, up.iterations[0].asked, "{kind}");
        }
    }

    #[test]
    fn iterative_conservation_and_zero_budget() {
        let p = pools(60);
        let spec = ClassifierSpec::default();
        let cfg = LoopConfig::default();
        let zero = run_iterative(&p, &spec, RankerKind::Uncertainty, &StopRule::Budget(0), gold(&p), &cfg, 4).unwrap();
        assert!(zero.iterations.is_empty());
        let log = run_iterative(&p, &spec, RankerKind::Uncertainty, &StopRule::Budget(30), gold(&p), &cfg, 4).unwrap();
        assert_eq!(log.iterations.len(), 10);
        for it in &log.iterations {
            assert_eq!(it.crowd_labeled + it.unlabeled_remaining, p.unlabeled.len());
        }
        assert_eq!(log.questions_asked(), 30);
        assert_eq!(log.final_labels.len(), p.unlabeled.len());
    }

    #[test]
    fn iterative_stops_on_quality() {
        let p = pools(80);
        let target = QualityTarget::new(Metric::Accuracy, 0.5).unwrap();
        let cfg = LoopConfig {
            batch_size: Some(5),
            quality_folds: 3,
            ..LoopConfig::default()
        };
        let log = run_iterative(
            &p,
            &ClassifierSpec::default(),
            RankerKind::Baseline,
            &StopRule::Quality(target),
            gold(&p),
            &cfg,
            6,
        )
        .unwrap();
        assert_eq!(log.stop_reason, Some(StopReason::QualityMet));
        assert!(log.questions_asked() < p.unlabeled.len());
    }

    #[test]
    fn replay_reproduces_final_labels() {
        let p = pools(60);
        let spec = ClassifierSpec::default();
        let crowd = SimulatedCrowd::new(WorkerModel::uniform(0.7, 3, 11).unwrap(), &p.unlabeled);
        let cfg = LoopConfig {
            votes: VotePolicy::Fixed(3),
            ..LoopConfig::default()
        };
        let log = run_iterative(&p, &spec, RankerKind::MinExpError, &StopRule::Budget(20), crowd, &cfg, 8).unwrap();
        let again = replay(&log, &p, &spec, &cfg).unwrap();
        assert_eq!(again.final_labels, log.final_labels);

        let mut buf = Vec::new();
        log.write_jsonl(&mut buf).unwrap();
        assert_eq!(buf.iter().filter(|&&b| b == b'\n').count(), 2 + log.iterations.len());
        let back = RunLog::read_jsonl(&buf[..]).unwrap();
        assert_eq!(back, log);
    }

    #[test]
    fn pba_votes_respect_budget() {
        let p = pools(90);
        let crowd = SimulatedCrowd::new(
            WorkerModel::new(BTreeMap::from([(0, 0.6), (1, 0.75), (2, 0.9)]), 1, 3).unwrap(),
            &p.unlabeled,
        );
        let pba = PbaConfig {
            groups: 3,
            vote_budget: 100,
            accuracy_mode: AccuracyMode::Gold,
            ..PbaConfig::default()
        };
        let cfg = LoopConfig {
            votes: VotePolicy::Pba(pba),
            ..LoopConfig::default()
        };
        let log = run_iterative(
            &p,
            &ClassifierSpec::default(),
            RankerKind::Uncertainty,
            &StopRule::Budget(30),
            crowd,
            &cfg,
            1,
        )
        .unwrap();
        assert!(log.votes_used() <= 100, "{}", log.votes_used());
        assert_eq!(log.probe.as_ref().unwrap().votes_used, 3 * 2 * 9);
        assert!(log
            .iterations
            .iter()
            .flat_map(|i| &i.votes_requested)
            .all(|v| v % 2 == 1));
    }

    #[test]
    fn unrequested_answers_are_ignored() {
        struct Chatty(GoldReplay, ItemId);
        impl AnswerSource for Chatty {
            fn request(&mut self, q: &[Question]) -> Result<VoteSet> {
                let mut v = self.0.request(q)?;
                v.push(
                    self.1,
                    crate::crowd::Vote {
                        worker: 0,
                        label: ClassLabel::Zero,
                    },
                );
                Ok(v)
            }
        }
        let p = pools(40);
        let extra = p.unlabeled[0].id;
        let log = run_iterative(
            &p,
            &ClassifierSpec::default(),
            RankerKind::Baseline,
            &StopRule::Budget(10),
            Chatty(gold(&p), extra),
            &LoopConfig::default(),
            2,
        )
        .unwrap();
        let ignored: usize = log.iterations.iter().map(|i| i.ignored.len()).sum();
        assert!(ignored >= log.iterations.len() - 1);
        assert!(!log.warnings.is_empty());
    }
}
