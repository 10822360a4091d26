//! Batches of questions with retraining in between, then a replay of the
//! saved run log that reproduces it exactly.

use activecrowd::classifiers::ClassifierSpec;
use activecrowd::crowd::{SimulatedCrowd, WorkerModel};
use activecrowd::dataset::{binarize_labels, split_pools};
use activecrowd::harness::{synth, SynthKind};
use activecrowd::loops::{replay, run_iterative, Aggregation, LoopConfig, RunLog, StopRule, VotePolicy};
use activecrowd::metrics::Metric;
use activecrowd::rankers::RankerKind;

fn main() -> activecrowd::Result<()> {
    let data = binarize_labels(&synth::generate(SynthKind::Imbalanced, 300, 6)?, &synth::binarize_policy())?;
    let pools = split_pools(&data, 0.05, 0.0, 3)?;
    let config = LoopConfig {
        votes: VotePolicy::Fixed(5),
        aggregation: Aggregation::DawidSkene,
        ..LoopConfig::default()
    };
    let crowd = SimulatedCrowd::new(WorkerModel::uniform(0.75, 1, 4)?, &pools.unlabeled);
    let spec = ClassifierSpec::default();
    let log = run_iterative(&pools, &spec, RankerKind::Uncertainty, &StopRule::Budget(80), crowd, &config, 17)?;

    for it in &log.iterations {
        println!(
            "round {:>2}: trained on {:>3}, cv F1 {}, asked {:>2}",
            it.index,
            it.training_size,
            it.cv_quality.map_or("-".into(), |q| format!("{q:.3}")),
            it.asked.len()
        );
    }
    println!("stopped: {:?}, F1 {:.3}", log.stop_reason, log.quality_of(Metric::F1, None)?.unwrap());

    let path = std::env::temp_dir().join("activecrowd-iterative.jsonl");
    log.save(&path)?;
    let again = replay(&RunLog::load(&path)?, &pools, &spec, &config)?;
    println!("replay identical: {}", again == log);
    Ok(())
}
