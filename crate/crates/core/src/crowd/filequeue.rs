//! Questions and answers exchanged through two append-only CSV files.
//!
//! Questions file, one line per question: `item_id,subgroup,votes_requested`
//! (subgroup empty when unknown). Answers file, one line per vote:
//! `item_id,worker_id,label` with label `0` or `1`. Neither has a header.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use super::{AnswerSource, Question, Vote, VoteSet};
use crate::dataset::{ClassLabel, ItemId};
use crate::error::{Error, Result};

#[derive(Debug)]
pub struct FileQueue {
    questions: PathBuf,
    answers: PathBuf,
    poll_interval: Duration,
    timeout: Option<Duration>,
    /// Bytes of the answers file already consumed.
    offset: u64,
    /// Answer line number of `offset`, for error messages.
    line: usize,
    /// Votes read but not yet handed out.
    pending: BTreeMap<ItemId, Vec<Vote>>,
}

impl FileQueue {
    pub fn new(questions: impl Into<PathBuf>, answers: impl Into<PathBuf>) -> Self {
        FileQueue {
            questions: questions.into(),
            answers: answers.into(),
            poll_interval: Duration::from_millis(200),
            timeout: None,
            offset: 0,
            line: 0,
            pending: BTreeMap::new(),
        }
    }

    pub fn poll_interval(mut self, interval: Duration) -> Self {
        self.poll_interval = interval;
        self
    }

    /// Give up waiting after this long. `None` waits forever.
    pub fn timeout(mut self, timeout: Option<Duration>) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn questions_path(&self) -> &Path {
        &self.questions
    }

    pub fn answers_path(&self) -> &Path {
        &self.answers
    }

    fn post(&self, questions: &[Question]) -> Result<()> {
        let mut out = String::new();
        for q in questions {
            let g = q.subgroup.map(|g| g.to_string()).unwrap_or_default();
            out.push_str(&format!("{},{},{}\n", q.item, g, q.votes));
        }
        let mut file = OpenOptions::new().create(true).append(true).open(&self.questions)?;
        file.write_all(out.as_bytes())?;
        file.sync_data()?;
        Ok(())
    }

    /// Read every complete line appended since the last call.
    fn drain(&mut self) -> Result<()> {
        let mut file = match File::open(&self.answers) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(()),
            Err(e) => return Err(e.into()),
        };
        file.seek(SeekFrom::Start(self.offset))?;
        let mut buf = Vec::new();
        file.read_to_end(&mut buf)?;
        let Some(end) = buf.iter().rposition(|&b| b == b'\n') else {
            return Ok(());
        };
        let text = std::str::from_utf8(&buf[..=end])
            .map_err(|_| Error::AnswerSource(format!("{}: not UTF-8", self.answers.display())))?;
        for raw in text.lines() {
            self.line += 1;
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            let (id, vote) = self.parse_answer(line)?;
            self.pending.entry(id).or_default().push(vote);
        }
        self.offset += end as u64 + 1;
        Ok(())
    }

    fn parse_answer(&self, line: &str) -> Result<(ItemId, Vote)> {
        let bad = |what: &str| Error::Parse {
            path: self.answers.clone(),
            line: self.line,
            message: format!("{what} in `{line}`"),
        };
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(bad("expected item_id,worker_id,label"));
        }
        let id = fields[0].parse().map_err(|_| bad("bad item id"))?;
        let worker = fields[1].parse().map_err(|_| bad("bad worker id"))?;
        let label = fields[2]
            .parse::<u8>()
            .ok()
            .and_then(|l| ClassLabel::try_from(l).ok())
            .ok_or_else(|| bad("label must be 0 or 1"))?;
        Ok((id, Vote { worker, label }))
    }

    fn ready(&self, questions: &[Question]) -> bool {
        questions
            .iter()
            .all(|q| self.pending.get(&q.item).map_or(0, Vec::len) >= q.votes as usize)
    }
}

impl AnswerSource for FileQueue {
    /// Append the questions, then poll the answers file until every
    /// question has its votes. Extra votes stay queued for later requests.
    fn request(&mut self, questions: &[Question]) -> Result<VoteSet> {
        self.post(questions)?;
        let start = Instant::now();
        loop {
            self.drain()?;
            if self.ready(questions) {
                break;
            }
            if let Some(limit) = self.timeout {
                if start.elapsed() >= limit {
                    let missing = questions
                        .iter()
                        .filter(|q| self.pending.get(&q.item).map_or(0, Vec::len) < q.votes as usize)
                        .count();
                    return Err(Error::AnswerSource(format!(
                        "timed out after {:?} with {missing} question(s) unanswered",
                        limit
                    )));
                }
            }
            std::thread::sleep(self.poll_interval);
        }
        let mut out = VoteSet::new();
        for q in questions {
            let votes = self.pending.get_mut(&q.item).expect("ready");
            for v in votes.drain(..q.votes as usize) {
                out.push(q.item, v);
            }
            if votes.is_empty() {
                self.pending.remove(&q.item);
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_through_files() {
        let dir = tempfile::tempdir().unwrap();
        let qs = dir.path().join("questions.csv");
        let ans = dir.path().join("answers.csv");
        std::fs::write(&ans, "4,0,1\n4,1,0\n7,0,0\n7,3,1\n").unwrap();
        let mut queue = FileQueue::new(&qs, &ans)
            .poll_interval(Duration::from_millis(1))
            .timeout(Some(Duration::from_millis(50)));
        let questions = [
            Question {
                item: 4,
                subgroup: Some(2),
                votes: 2,
            },
            Question {
                item: 7,
                subgroup: None,
                votes: 1,
            },
        ];
        let v = queue.request(&questions).unwrap();
        assert_eq!(std::fs::read_to_string(&qs).unwrap(), "4,2,2\n7,,1\n");
        assert_eq!(v.get(4).unwrap().len(), 2);
        assert_eq!(v.get(7).unwrap(), &[Vote { worker: 0, label: ClassLabel::Zero }]);

        // The leftover vote for item 7 serves the next request.
        let again = queue.request(&questions[1..]).unwrap();
        assert_eq!(again.get(7).unwrap()[0].worker, 3);
        assert!(queue.request(&questions[1..]).is_err());
    }

    #[test]
    fn partial_lines_wait() {
        let dir = tempfile::tempdir().unwrap();
        let ans = dir.path().join("a.csv");
        std::fs::write(&ans, "1,0,1\n2,0,").unwrap();
        let mut queue = FileQueue::new(dir.path().join("q.csv"), &ans)
            .poll_interval(Duration::from_millis(1))
            .timeout(Some(Duration::from_millis(20)));
        let q = |item| Question {
            item,
            subgroup: None,
            votes: 1,
        };
        assert!(queue.request(&[q(1), q(2)]).is_err());
        let mut f = OpenOptions::new().append(true).open(&ans).unwrap();
        f.write_all(b"0\n").unwrap();
        let v = queue.request(&[q(1), q(2)]).unwrap();
        assert_eq!(v.get(2).unwrap()[0].label, ClassLabel::Zero);
    }

    #[test]
    fn malformed_answer_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let ans = dir.path().join("a.csv");
        std::fs::write(&ans, "1,0,2\n").unwrap();
        let mut queue = FileQueue::new(dir.path().join("q.csv"), &ans).timeout(Some(Duration::ZERO));
        let err = queue
            .request(&[Question {
                item: 1,
                subgroup: None,
                votes: 1,
            }])
            .unwrap_err();
        assert!(err.to_string().contains("line 1"), "{err}");
    }
}
