//! Expected-error scores: how much each candidate label is likely to help
//! the classifier, smoothed toward uniform.

use activecrowd::bootstrap::{ensemble_labels, train_ensemble};
use activecrowd::classifiers::{ClassifierSpec, Learner};
use activecrowd::dataset::{binarize_labels, split_pools};
use activecrowd::harness::{synth, SynthKind};
use activecrowd::rankers::{min_exp_error_scores, min_exp_error_terms, MinExpErrorParams};

fn main() -> activecrowd::Result<()> {
    let data = binarize_labels(&synth::generate(SynthKind::Imbalanced, 150, 2)?, &synth::binarize_policy())?;
    let pools = split_pools(&data, 0.1, 0.0, 4)?;
    let labeled: Vec<_> = pools.initial_labeled.iter().map(|l| l.example()).collect();
    let spec = ClassifierSpec::default();
    let model = spec.fit(&labeled, 0)?;
    let labels = ensemble_labels(&train_ensemble(&spec, &labeled, 10, 1)?, &pools.unlabeled)?;

    let terms = min_exp_error_terms(&spec, &labeled, &model, &labels, &pools.unlabeled, 3, 8)?;
    println!("  id  agree  e_right e_wrong");
    for t in terms.iter().take(6) {
        println!("{:>4}  {:.2}   {:.3}   {:.3}", t.id, t.agreement, t.err_right, t.err_wrong);
    }

    for c in [1.0, 0.05] {
        let params = MinExpErrorParams {
            smoothing: c,
            ..MinExpErrorParams::default()
        };
        let scores = min_exp_error_scores(&spec, &labeled, &model, &labels, &pools.unlabeled, &params, 8)?;
        let (lo, hi) = scores
            .scores()
            .iter()
            .fold((f64::MAX, 0.0f64), |(lo, hi), &s| (lo.min(s), hi.max(s)));
        println!("c = {c}: max/min score ratio {:.2}", hi / lo);
    }
    Ok(())
}
