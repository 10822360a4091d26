//! Aggregate votes from workers of unequal skill: majority vote against
//! Dawid-Skene, which learns each worker's confusion matrix.

use activecrowd::crowd::{aggregate_majority, dawid_skene, DawidSkeneParams, Vote, VoteSet};
use activecrowd::dataset::ClassLabel;
use activecrowd::seed;
use rand::Rng;

fn main() {
    let skill = [0.95, 0.9, 0.55, 0.55, 0.55];
    let mut rng = seed::rng(12);
    let mut votes = VoteSet::new();
    let mut gold = Vec::new();
    for item in 0..300u64 {
        let truth = rng.gen_bool(0.5);
        gold.push(ClassLabel::from(truth));
        for (w, &p) in skill.iter().enumerate() {
            let label = ClassLabel::from(truth == rng.gen_bool(p));
            votes.push(item, Vote { worker: w as u32, label });
        }
    }
    let wrong = |labels: &std::collections::BTreeMap<u64, ClassLabel>| {
        labels.iter().filter(|(&i, &l)| gold[i as usize] != l).count()
    };
    let fit = dawid_skene(&votes, &DawidSkeneParams::default());
    println!("majority vote errors: {}", wrong(&aggregate_majority(&votes)));
    println!("Dawid-Skene errors:   {} after {} iterations", wrong(&fit.labels()), fit.iterations);
    for (w, p) in skill.iter().enumerate() {
        println!("worker {w}: true {p:.2}, estimated {:.2}", fit.worker_accuracy(w as u32).unwrap());
    }
}
