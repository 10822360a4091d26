//! A full iterative run where a separate thread plays the crowd through the
//! question and answer files.

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use activecrowd::classifiers::ClassifierSpec;
use activecrowd::crowd::FileQueue;
use activecrowd::dataset::{binarize_labels, split_pools, ClassLabel, ItemId};
use activecrowd::harness::{synth, SynthKind};
use activecrowd::loops::{run_iterative, LabelSource, LoopConfig, StopRule, VotePolicy};
use activecrowd::rankers::RankerKind;

fn answerer(questions: PathBuf, answers: PathBuf, gold: BTreeMap<ItemId, ClassLabel>, stop: Arc<AtomicBool>) {
    let mut served = 0;
    while !stop.load(Ordering::Relaxed) {
        let text = fs::read_to_string(&questions).unwrap_or_default();
        let lines: Vec<&str> = text.lines().collect();
        let complete = text.matches('\n').count();
        if complete > served {
            let mut out = OpenOptions::new().create(true).append(true).open(&answers).unwrap();
            for line in &lines[served..complete] {
                let mut fields = line.split(',');
                let id: ItemId = fields.next().unwrap().parse().unwrap();
                let votes: u32 = fields.nth(1).unwrap().parse().unwrap();
                for w in 0..votes {
                    writeln!(out, "{id},{w},{}", gold[&id]).unwrap();
                }
            }
            served = complete;
        }
        thread::sleep(Duration::from_millis(2));
    }
}

#[test]
fn iterative_run_through_files() {
    let dataset = binarize_labels(&synth::generate(SynthKind::Overlap, 120, 4).unwrap(), &synth::binarize_policy())
        .unwrap();
    let pools = split_pools(&dataset, 0.05, 0.0, 1).unwrap();
    let gold: BTreeMap<ItemId, ClassLabel> = pools.unlabeled.iter().map(|i| (i.id, i.gold_label.unwrap())).collect();
    let dir = tempfile::tempdir().unwrap();
    let (q, a) = (dir.path().join("questions.csv"), dir.path().join("answers.csv"));
    let stop = Arc::new(AtomicBool::new(false));
    let worker = {
        let (q, a, stop) = (q.clone(), a.clone(), stop.clone());
        thread::spawn(move || answerer(q, a, gold, stop))
    };
    let queue = FileQueue::new(&q, &a)
        .poll_interval(Duration::from_millis(2))
        .timeout(Some(Duration::from_secs(30)));
    let config = LoopConfig {
        votes: VotePolicy::Fixed(3),
        ..LoopConfig::default()
    };
    let log = run_iterative(&pools, &ClassifierSpec::default(), RankerKind::Uncertainty, &StopRule::Budget(40), queue, &config, 2);
    stop.store(true, Ordering::Relaxed);
    worker.join().unwrap();
    let log = log.unwrap();

    assert_eq!(log.questions_asked(), 40);
    assert_eq!(log.votes_used(), 120);
    assert_eq!(fs::read_to_string(&q).unwrap().lines().count(), 40);
    assert_eq!(fs::read_to_string(&a).unwrap().lines().count(), 120);
    let crowd: Vec<_> = log.final_labels.values().filter(|l| l.source == LabelSource::Crowd).collect();
    assert_eq!(crowd.len(), 40);
    assert!(crowd.iter().all(|l| Some(l.label) == l.gold));
}
