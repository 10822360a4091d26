//! Ask every question at once, chosen from the initial model only.

use activecrowd::classifiers::ClassifierSpec;
use activecrowd::crowd::{SimulatedCrowd, WorkerModel};
use activecrowd::dataset::{binarize_labels, split_pools};
use activecrowd::harness::{synth, SynthKind};
use activecrowd::loops::{run_upfront, LabelSource, LoopConfig, QualityTarget, StopRule, VotePolicy};
use activecrowd::metrics::Metric;
use activecrowd::rankers::RankerKind;

fn main() -> activecrowd::Result<()> {
    let data = binarize_labels(&synth::generate(SynthKind::Overlap, 300, 5)?, &synth::binarize_policy())?;
    let pools = split_pools(&data, 0.05, 0.0, 2)?;
    let config = LoopConfig {
        votes: VotePolicy::Fixed(3),
        ..LoopConfig::default()
    };
    let crowd = || SimulatedCrowd::new(WorkerModel::uniform(0.8, 1, 11).unwrap(), &pools.unlabeled);
    let spec = ClassifierSpec::default();

    for stop in [StopRule::Budget(60), StopRule::Quality(QualityTarget::new(Metric::Accuracy, 0.97)?)] {
        let log = run_upfront(&pools, &spec, RankerKind::Uncertainty, &stop, crowd(), &config, 3)?;
        println!(
            "{stop:?}: {} questions, {} votes, F1 {:.3} (crowd {:.3}, model {:.3})",
            log.questions_asked(),
            log.votes_used(),
            log.quality_of(Metric::F1, None)?.unwrap_or(f64::NAN),
            log.quality_of(Metric::F1, Some(LabelSource::Crowd))?.unwrap_or(f64::NAN),
            log.quality_of(Metric::F1, Some(LabelSource::Model))?.unwrap_or(f64::NAN),
        );
    }
    Ok(())
}
