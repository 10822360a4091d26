//! The file protocol for human answers. A thread stands in for the people
//! reading `questions.csv` and appending to `answers.csv`.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::thread;
use std::time::Duration;

use activecrowd::crowd::{AnswerSource, FileQueue, Question};

fn main() -> activecrowd::Result<()> {
    let dir = std::env::temp_dir().join(format!("activecrowd-queue-{}", std::process::id()));
    fs::create_dir_all(&dir)?;
    let (q, a) = (dir.join("questions.csv"), dir.join("answers.csv"));

    let (q2, a2) = (q.clone(), a.clone());
    let human = thread::spawn(move || {
        while !q2.exists() {
            thread::sleep(Duration::from_millis(10));
        }
        thread::sleep(Duration::from_millis(50));
        let mut out = OpenOptions::new().create(true).append(true).open(&a2).unwrap();
        for line in fs::read_to_string(&q2).unwrap().lines() {
            let f: Vec<&str> = line.split(',').collect();
            let votes: u32 = f[2].parse().unwrap();
            for w in 0..votes {
                writeln!(out, "{},{w},{}", f[0], (f[0].len() + w as usize) % 2).unwrap();
            }
        }
    });

    let mut queue = FileQueue::new(&q, &a)
        .poll_interval(Duration::from_millis(10))
        .timeout(Some(Duration::from_secs(10)));
    let questions = [
        Question { item: 4, subgroup: Some(0), votes: 3 },
        Question { item: 17, subgroup: None, votes: 1 },
    ];
    let votes = queue.request(&questions)?;
    human.join().unwrap();
    print!("questions.csv:\n{}", fs::read_to_string(&q)?);
    print!("answers.csv:\n{}", fs::read_to_string(&a)?);
    println!("received {} votes for {} items", votes.total_votes(), votes.len());
    fs::remove_dir_all(&dir)?;
    Ok(())
}
