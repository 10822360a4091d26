//! Bootstrap an ensemble and score the unlabeled pool by the variance of
//! its votes.

use activecrowd::bootstrap::{ensemble_labels, train_ensemble};
use activecrowd::classifiers::ClassifierSpec;
use activecrowd::dataset::{binarize_labels, split_pools};
use activecrowd::harness::{synth, SynthKind};
use activecrowd::rankers::{select_batch, uncertainty_scores};

fn main() -> activecrowd::Result<()> {
    let data = binarize_labels(&synth::generate(SynthKind::Overlap, 200, 3)?, &synth::binarize_policy())?;
    let pools = split_pools(&data, 0.1, 0.0, 1)?;
    let labeled: Vec<_> = pools.initial_labeled.iter().map(|l| l.example()).collect();

    let ensemble = train_ensemble(&ClassifierSpec::default(), &labeled, 10, 5)?;
    let labels = ensemble_labels(&ensemble, &pools.unlabeled)?;
    let scores = uncertainty_scores(&labels)?;

    let mut ranked: Vec<_> = scores.iter().collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
    println!("most uncertain items:");
    for (id, s) in ranked.iter().take(5) {
        println!("  {id:>3}  {s:.3}");
    }
    let unanimous = scores.scores().iter().filter(|&&s| s == 0.0).count();
    println!("{unanimous} of {} items have unanimous votes", scores.len());

    let batch = select_batch(&scores, 10, 9)?;
    println!("weighted batch: {:?}", batch.item_ids);
    Ok(())
}
