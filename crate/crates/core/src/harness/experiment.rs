//! Run the grid of (ranker, budget, repetition) cells and keep the results.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{AnswerConfig, ExperimentConfig};
use crate::crowd::{AnswerSource, FileQueue, GoldReplay, SimulatedCrowd};
use crate::dataset::{split_pools, Dataset, PoolSplit};
use crate::error::{Error, Result};
use crate::loops::{self, LabelSource, RunLog, Scenario, StopRule};
use crate::metrics::{CurvePoint, LearningCurve, Metric};
use crate::rankers::RankerKind;
use crate::seed;

/// One grid cell and what came out of it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub ranker: RankerKind,
    pub scenario: Scenario,
    /// Budget as a fraction of the unlabeled pool.
    pub budget: f64,
    pub repetition: usize,
    /// Budget in questions.
    pub budget_questions: usize,
    pub questions: usize,
    pub votes: usize,
    /// Final labels of the whole unlabeled pool against gold.
    pub quality: Option<f64>,
    /// Crowd labels against gold.
    pub crowd_quality: Option<f64>,
    /// Model labels against gold.
    pub model_quality: Option<f64>,
    pub error: Option<String>,
    #[serde(skip)]
    pub log: Option<RunLog>,
}

impl CellResult {
    fn from_log(head: CellHead, metric: Metric, log: RunLog) -> Result<Self> {
        Ok(CellResult {
            ranker: head.ranker,
            scenario: head.scenario,
            budget: head.budget,
            repetition: head.repetition,
            budget_questions: head.budget_questions,
            questions: log.questions_asked(),
            votes: log.votes_used(),
            quality: log.quality_of(metric, None)?,
            crowd_quality: log.quality_of(metric, Some(LabelSource::Crowd))?,
            model_quality: log.quality_of(metric, Some(LabelSource::Model))?,
            error: None,
            log: Some(log),
        })
    }

    fn failed(head: CellHead, error: String) -> Self {
        CellResult {
            ranker: head.ranker,
            scenario: head.scenario,
            budget: head.budget,
            repetition: head.repetition,
            budget_questions: head.budget_questions,
            questions: 0,
            votes: 0,
            quality: None,
            crowd_quality: None,
            model_quality: None,
            error: Some(error),
            log: None,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.error.is_none()
    }
}

/// First line of every persisted run log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct CellHead {
    record: String,
    config_hash: String,
    metric: Metric,
    ranker: RankerKind,
    scenario: Scenario,
    budget: f64,
    repetition: usize,
    budget_questions: usize,
    error: Option<String>,
}

/// Averages over the successful repetitions of one (ranker, budget).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub ranker: RankerKind,
    pub scenario: Scenario,
    pub budget: f64,
    pub runs: usize,
    pub failures: usize,
    pub questions: Option<f64>,
    pub votes: Option<f64>,
    pub quality: Option<f64>,
    pub crowd_quality: Option<f64>,
    pub model_quality: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResultStore {
    pub config_hash: String,
    pub metric: Metric,
    pub cells: Vec<CellResult>,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

impl ResultStore {
    pub fn failures(&self) -> impl Iterator<Item = &CellResult> {
        self.cells.iter().filter(|c| !c.is_ok())
    }

    pub fn is_complete(&self) -> bool {
        self.failures().next().is_none()
    }

    pub fn summary(&self) -> Vec<SummaryRow> {
        let mut groups: BTreeMap<(Scenario, RankerKind, u64), Vec<&CellResult>> = BTreeMap::new();
        for c in &self.cells {
            groups.entry((c.scenario, c.ranker, c.budget.to_bits())).or_default().push(c);
        }
        let mut rows: Vec<SummaryRow> = groups
            .into_iter()
            .map(|((scenario, ranker, budget), cells)| {
                let ok: Vec<&&CellResult> = cells.iter().filter(|c| c.is_ok()).collect();
                SummaryRow {
                    ranker,
                    scenario,
                    budget: f64::from_bits(budget),
                    runs: ok.len(),
                    failures: cells.len() - ok.len(),
                    questions: mean(ok.iter().map(|c| c.questions as f64)),
                    votes: mean(ok.iter().map(|c| c.votes as f64)),
                    quality: mean(ok.iter().filter_map(|c| c.quality)),
                    crowd_quality: mean(ok.iter().filter_map(|c| c.crowd_quality)),
                    model_quality: mean(ok.iter().filter_map(|c| c.model_quality)),
                }
            })
            .collect();
        rows.sort_by(|a, b| {
            (a.scenario, a.ranker)
                .cmp(&(b.scenario, b.ranker))
                .then(a.budget.total_cmp(&b.budget))
        });
        rows
    }

    /// Mean questions against mean quality, one curve per ranker (named
    /// `<ranker>` or `<scenario>-<ranker>` when scenarios are mixed).
    pub fn curves(&self) -> Result<BTreeMap<String, LearningCurve>> {
        let rows = self.summary();
        let mixed = rows.iter().any(|r| r.scenario != rows[0].scenario);
        let mut points: BTreeMap<String, Vec<CurvePoint>> = BTreeMap::new();
        for r in &rows {
            let (Some(questions), Some(quality)) = (r.questions, r.quality) else {
                continue;
            };
            let name = if mixed {
                format!("{}-{}", r.scenario, r.ranker)
            } else {
                r.ranker.to_string()
            };
            points.entry(name).or_default().push(CurvePoint { questions, quality });
        }
        points
            .into_iter()
            .map(|(k, p)| Ok((k, LearningCurve::from_unsorted(self.metric, p)?)))
            .collect()
    }
}

/// A prepared dataset and the per-repetition pools.
struct Grid {
    pools: Vec<PoolSplit>,
}

fn repetition_seed(master: u64, repetition: usize) -> u64 {
    seed::derive(master, repetition as u64)
}

fn prepare(config: &ExperimentConfig, dataset: &Dataset) -> Result<Grid> {
    let pools = (0..config.repetitions)
        .map(|r| {
            let s = seed::derive(repetition_seed(config.master_seed, r), 0);
            split_pools(dataset, config.initial_fraction, config.test_fraction, s)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Grid { pools })
}

fn answer_source(config: &ExperimentConfig, pools: &PoolSplit, repetition: usize) -> Box<dyn AnswerSource> {
    match &config.answers {
        AnswerConfig::Gold => Box::new(GoldReplay::new(&pools.unlabeled)),
        AnswerConfig::Simulated(model) => {
            let s = seed::derive(model.seed, repetition as u64);
            Box::new(SimulatedCrowd::new(model.with_seed(s), &pools.unlabeled))
        }
        AnswerConfig::FileQueue {
            questions,
            answers,
            poll_ms,
            timeout_secs,
        } => Box::new(
            FileQueue::new(questions, answers)
                .poll_interval(Duration::from_millis(*poll_ms))
                .timeout(timeout_secs.map(Duration::from_secs)),
        ),
    }
}

fn run_cell(config: &ExperimentConfig, grid: &Grid, hash: &str, ranker: RankerKind, budget: f64, rep: usize) -> CellResult {
    let pools = &grid.pools[rep];
    let questions = (budget * pools.unlabeled.len() as f64).round() as usize;
    let head = CellHead {
        record: "cell".into(),
        config_hash: hash.to_string(),
        metric: config.metric,
        ranker,
        scenario: config.scenario,
        budget,
        repetition: rep,
        budget_questions: questions,
        error: None,
    };
    let loop_seed = seed::derive(repetition_seed(config.master_seed, rep), 1);
    let result = loops::run(
        config.scenario,
        pools,
        &config.classifier,
        ranker,
        &StopRule::Budget(questions),
        answer_source(config, pools, rep),
        &config.loop_config(questions),
        loop_seed,
    )
    .and_then(|log| CellResult::from_log(head.clone(), config.metric, log));
    result.unwrap_or_else(|e| CellResult::failed(head, e.to_string()))
}

/// Run every cell. Cell failures are recorded, not returned; only a
/// dataset that cannot be loaded or split is an error.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ResultStore> {
    let dataset = config.load_dataset()?;
    let grid = prepare(config, &dataset)?;
    let hash = config.hash();
    let mut cells = Vec::new();
    for &ranker in &config.rankers {
        for &budget in &config.budgets {
            for rep in 0..config.repetitions {
                cells.push((ranker, budget, rep));
            }
        }
    }
    let run = |&(ranker, budget, rep): &(RankerKind, f64, usize)| run_cell(config, &grid, &hash, ranker, budget, rep);
    let cells: Vec<CellResult> = match config.answers {
        // One consumer of the answers file at a time.
        AnswerConfig::FileQueue { .. } => cells.iter().map(run).collect(),
        _ => cells.par_iter().map(run).collect(),
    };
    Ok(ResultStore {
        config_hash: hash,
        metric: config.metric,
        cells,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_string(), |v| v.to_string())
}

fn hash_line(hash: &str) -> String {
    format!("# config_hash={hash}\n")
}

pub(crate) fn cell_file_name(c: &CellResult) -> String {
    format!(
        "{}-{}-b{}-r{}.jsonl",
        c.scenario,
        c.ranker,
        c.budget.to_string().replace('.', "_"),
        c.repetition
    )
}

pub fn write_cells_csv(store: &ResultStore, path: &Path) -> Result<()> {
    let mut out = hash_line(&store.config_hash);
    out.push_str("scenario,ranker,budget,repetition,budget_questions,questions,votes,quality,crowd_quality,model_quality,error\n");
    for c in &store.cells {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            c.scenario,
            c.ranker,
            c.budget,
            c.repetition,
            c.budget_questions,
            c.questions,
            c.votes,
            fmt_opt(c.quality),
            fmt_opt(c.crowd_quality),
            fmt_opt(c.model_quality),
            c.error.as_deref().unwrap_or("").replace([',', '\n'], ";")
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn write_summary_csv(store: &ResultStore, path: &Path) -> Result<()> {
    let mut out = hash_line(&store.config_hash);
    out.push_str("scenario,ranker,budget,runs,failures,questions,votes,quality,crowd_quality,model_quality\n");
    for r in store.summary() {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.scenario,
            r.ranker,
            r.budget,
            r.runs,
            r.failures,
            fmt_opt(r.questions),
            fmt_opt(r.votes),
            fmt_opt(r.quality),
            fmt_opt(r.crowd_quality),
            fmt_opt(r.model_quality),
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

/// `questions,quality` rows under a hash comment line.
pub fn write_curve_csv(curve: &LearningCurve, hash: &str, path: &Path) -> Result<()> {
    let mut out = hash_line(hash);
    out.push_str("questions,quality\n");
    for p in curve.points() {
        out.push_str(&format!("{},{}\n", p.questions, p.quality));
    }
    fs::write(path, out)?;
    Ok(())
}

/// A new directory `run-<hash12>-<unix seconds>` under `root`.
fn fresh_run_dir(root: &Path, hash: &str) -> Result<PathBuf> {
    let secs = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let base = format!("run-{}-{secs}", &hash[..12]);
    fs::create_dir_all(root)?;
    for n in 0.. {
        let name = if n == 0 { base.clone() } else { format!("{base}-{n}") };
        let dir = root.join(name);
        match fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(e.into()),
        }
    }
    unreachable!()
}

/// Write config, logs, cell table, summary and curves into a fresh run
/// directory under the configured output directory. Returns the directory.
pub fn persist(store: &ResultStore, config: &ExperimentConfig) -> Result<PathBuf> {
    let root = config.output_dir.clone().unwrap_or_else(|| PathBuf::from("results"));
    let dir = fresh_run_dir(&root, &store.config_hash)?;
    fs::write(dir.join("config.json"), serde_json::to_string_pretty(config)?)?;
    let logs = dir.join("logs");
    fs::create_dir(&logs)?;
    for c in &store.cells {
        let head = CellHead {
            record: "cell".into(),
            config_hash: store.config_hash.clone(),
            metric: store.metric,
            ranker: c.ranker,
            scenario: c.scenario,
            budget: c.budget,
            repetition: c.repetition,
            budget_questions: c.budget_questions,
            error: c.error.clone(),
        };
        let mut f = std::io::BufWriter::new(fs::File::create(logs.join(cell_file_name(c)))?);
        writeln!(f, "{}", serde_json::to_string(&head)?)?;
        if let Some(log) = &c.log {
            log.write_jsonl(&mut f)?;
        }
        f.flush()?;
    }
    write_cells_csv(store, &dir.join("cells.csv"))?;
    write_summary_csv(store, &dir.join("summary.csv"))?;
    let curves = dir.join("curves");
    fs::create_dir(&curves)?;
    for (name, curve) in store.curves()? {
        write_curve_csv(&curve, &store.config_hash, &curves.join(format!("{name}.csv")))?;
    }
    Ok(dir)
}

/// Rebuild a store from the run logs in `dir/logs` alone.
pub fn load_store(dir: &Path) -> Result<ResultStore> {
    let logs = dir.join("logs");
    let mut paths: Vec<PathBuf> = fs::read_dir(&logs)
        .map_err(|e| Error::invalid(format!("{}: {e}", logs.display())))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    paths.retain(|p| p.extension().is_some_and(|x| x == "jsonl"));
    paths.sort();
    let mut cells = Vec::with_capacity(paths.len());
    let mut identity: Option<(String, Metric)> = None;
    for path in paths {
        let mut reader = BufReader::new(fs::File::open(&path)?);
        let mut first = String::new();
        reader.read_line(&mut first)?;
        let head: CellHead = serde_json::from_str(&first).map_err(|e| Error::Parse {
            path: path.clone(),
            line: 1,
            message: e.to_string(),
        })?;
        match &identity {
            None => identity = Some((head.config_hash.clone(), head.metric)),
            Some((hash, _)) if *hash != head.config_hash => {
                return Err(Error::invalid(format!(
                    "{} comes from config {}, not {hash}",
                    path.display(),
                    head.config_hash
                )))
            }
            Some(_) => {}
        }
        let metric = head.metric;
        let cell = match head.error.clone() {
            Some(e) => CellResult::failed(head, e),
            None => {
                let log = RunLog::read_jsonl(reader).map_err(|e| match e {
                    Error::Parse { line, message, .. } => Error::Parse {
                        path: path.clone(),
                        line: line + 1,
                        message,
                    },
                    e => e,
                })?;
                CellResult::from_log(head, metric, log)?
            }
        };
        cells.push(cell);
    }
    let (config_hash, metric) = identity.ok_or_else(|| Error::invalid(format!("no run logs in {}", logs.display())))?;
    cells.sort_by(|a, b| {
        (a.scenario, a.ranker, a.repetition)
            .cmp(&(b.scenario, b.ranker, b.repetition))
            .then(a.budget.total_cmp(&b.budget))
    });
    Ok(ResultStore {
        config_hash,
        metric,
        cells,
    })
}
