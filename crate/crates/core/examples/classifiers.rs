//! Train both built-in classifiers and compare k-fold estimates with a
//! held-out test set.

use activecrowd::classifiers::{k_fold_quality, ClassifierSpec, Learner, Predictor, TreeParams};
use activecrowd::dataset::{binarize_labels, split_pools, ClassLabel};
use activecrowd::harness::{synth, SynthKind};
use activecrowd::metrics::{quality, Metric};

fn main() -> activecrowd::Result<()> {
    let data = binarize_labels(&synth::generate(SynthKind::Overlap, 400, 1)?, &synth::binarize_policy())?;
    let pools = split_pools(&data, 0.25, 0.5, 7)?;
    let train: Vec<_> = pools.initial_labeled.iter().map(|l| l.example()).collect();
    let gold: Vec<ClassLabel> = pools.test.iter().map(|l| l.label).collect();

    for spec in [ClassifierSpec::default(), ClassifierSpec::Tree(TreeParams::default())] {
        let model = spec.fit(&train, 1)?;
        let preds: Vec<ClassLabel> = pools.test.iter().map(|l| model.predict_features(&l.item.features)).collect();
        let cv = k_fold_quality(&spec, &train, 5, Metric::F1, 3)?;
        println!(
            "{:?}: 5-fold F1 {:.3}, test F1 {:.3}",
            spec.kind(),
            cv.value,
            quality(Metric::F1, &preds, &gold)?
        );
    }
    Ok(())
}
