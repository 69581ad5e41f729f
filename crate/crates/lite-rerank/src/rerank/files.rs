//! Line-oriented file formats used by the pipeline.
//!
//! All identifiers are unsigned 64-bit integers.
//!
//! * candidates: `query_id TAB doc_id,doc_id,...`
//! * training:   `query_id TAB positive_doc_id TAB neg_id,... [TAB teacher_csv]`
//!   where the optional teacher scores cover `[positive, negatives...]`
//! * qrels:      `query_id TAB doc_id TAB relevance`
//! * run:        `query_id TAB doc_id TAB rank TAB score`

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// One line of a run file.
#[derive(Debug, Clone, PartialEq)]
pub struct RunLine {
    pub query_id: u64,
    pub doc_id: u64,
    pub rank: usize,
    pub score: f64,
}

fn read_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.to_string()))
        .filter(|(_, l)| !l.trim().is_empty())
        .collect())
}

fn parse_u64(tok: &str, line: usize, what: &str) -> Result<u64> {
    tok.trim().parse().map_err(|_| Error::MalformedRecord {
        line,
        msg: format!("bad {what} '{tok}'"),
    })
}

fn parse_f64(tok: &str, line: usize, what: &str) -> Result<f64> {
    tok.trim().parse().map_err(|_| Error::MalformedRecord {
        line,
        msg: format!("bad {what} '{tok}'"),
    })
}

/// `query_id TAB doc_id,doc_id,...`
pub fn read_candidates(path: impl AsRef<Path>) -> Result<Vec<(u64, Vec<u64>)>> {
    let mut out = Vec::new();
    for (line, text) in read_lines(path.as_ref())? {
        let mut parts = text.split('\t');
        let qid = parse_u64(
            parts.next().ok_or(Error::MalformedRecord {
                line,
                msg: "missing query id".into(),
            })?,
            line,
            "query id",
        )?;
        let docs_field = parts.next().ok_or(Error::MalformedRecord {
            line,
            msg: "missing candidate list".into(),
        })?;
        let docs = docs_field
            .split(',')
            .map(|tok| parse_u64(tok, line, "doc id"))
            .collect::<Result<Vec<_>>>()?;
        if docs.is_empty() {
            return Err(Error::MalformedRecord {
                line,
                msg: "empty candidate list".into(),
            });
        }
        out.push((qid, docs));
    }
    Ok(out)
}

/// One training record: the positive document comes first in `doc_ids`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainRecord {
    pub query_id: u64,
    /// Positive first, then the negatives.
    pub doc_ids: Vec<u64>,
    /// Teacher scores aligned with `doc_ids`, when present.
    pub teacher: Option<Vec<f64>>,
}

/// `query_id TAB positive TAB neg,neg,... [TAB teacher_csv]`
pub fn read_train_records(path: impl AsRef<Path>) -> Result<Vec<TrainRecord>> {
    let mut out = Vec::new();
    for (line, text) in read_lines(path.as_ref())? {
        let parts: Vec<&str> = text.split('\t').collect();
        if parts.len() < 3 || parts.len() > 4 {
            return Err(Error::MalformedRecord {
                line,
                msg: format!(
                    "expected 3 or 4 tab-separated fields, found {}",
                    parts.len()
                ),
            });
        }
        let query_id = parse_u64(parts[0], line, "query id")?;
        let positive = parse_u64(parts[1], line, "positive doc id")?;
        let mut doc_ids = vec![positive];
        for tok in parts[2].split(',') {
            doc_ids.push(parse_u64(tok, line, "negative doc id")?);
        }
        if doc_ids.len() < 2 {
            return Err(Error::MalformedRecord {
                line,
                msg: "need at least one negative document".into(),
            });
        }
        let teacher = if parts.len() == 4 {
            let scores = parts[3]
                .split(',')
                .map(|tok| parse_f64(tok, line, "teacher score"))
                .collect::<Result<Vec<_>>>()?;
            if scores.len() != doc_ids.len() {
                return Err(Error::MalformedRecord {
                    line,
                    msg: format!(
                        "{} teacher scores for {} documents",
                        scores.len(),
                        doc_ids.len()
                    ),
                });
            }
            Some(scores)
        } else {
            None
        };
        out.push(TrainRecord {
            query_id,
            doc_ids,
            teacher,
        });
    }
    Ok(out)
}

/// `query_id TAB doc_id TAB relevance`, collected per query.
pub fn read_qrels(path: impl AsRef<Path>) -> Result<HashMap<u64, HashMap<u64, u32>>> {
    let mut out: HashMap<u64, HashMap<u64, u32>> = HashMap::new();
    for (line, text) in read_lines(path.as_ref())? {
        let parts: Vec<&str> = text.split('\t').collect();
        if parts.len() != 3 {
            return Err(Error::MalformedRecord {
                line,
                msg: format!("expected 3 tab-separated fields, found {}", parts.len()),
            });
        }
        let qid = parse_u64(parts[0], line, "query id")?;
        let did = parse_u64(parts[1], line, "doc id")?;
        let rel: u32 = parts[2]
            .trim()
            .parse()
            .map_err(|_| Error::MalformedRecord {
                line,
                msg: format!("bad relevance '{}'", parts[2]),
            })?;
        out.entry(qid).or_default().insert(did, rel);
    }
    Ok(out)
}

pub fn write_run(path: impl AsRef<Path>, lines: &[RunLine]) -> Result<()> {
    let path = path.as_ref();
    let mut text = String::new();
    for l in lines {
        writeln!(
            text,
            "{}\t{}\t{}\t{}",
            l.query_id, l.doc_id, l.rank, l.score
        )
        .expect("writing to a string cannot fail");
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_run(path: impl AsRef<Path>) -> Result<Vec<RunLine>> {
    let mut out = Vec::new();
    for (line, text) in read_lines(path.as_ref())? {
        let parts: Vec<&str> = text.split('\t').collect();
        if parts.len() != 4 {
            return Err(Error::MalformedRecord {
                line,
                msg: format!("expected 4 tab-separated fields, found {}", parts.len()),
            });
        }
        out.push(RunLine {
            query_id: parse_u64(parts[0], line, "query id")?,
            doc_id: parse_u64(parts[1], line, "doc id")?,
            rank: parse_u64(parts[2], line, "rank")? as usize,
            score: parse_f64(parts[3], line, "score")?,
        });
    }
    Ok(out)
}
