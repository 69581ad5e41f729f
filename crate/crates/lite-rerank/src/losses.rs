//! Training losses over per-candidate score lists.
//!
//! Conventions: index 0 is the positive document; teacher and student lists
//! are aligned; every loss returns the per-example value and the trainer is
//! responsible for batch averaging. Softmaxes subtract the max first, so
//! all losses stay finite for finite inputs.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Which loss to train with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Kl,
    MarginMse,
    CrossEntropy,
    /// Direct regression of student scores onto teacher scores (mean squared
    /// error over the list). Used for fitting a head to ground-truth scores.
    Mse,
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            LossKind::Kl => "kl",
            LossKind::MarginMse => "margin-mse",
            LossKind::CrossEntropy => "xent",
            LossKind::Mse => "mse",
        };
        write!(f, "{s}")
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kl" => Ok(LossKind::Kl),
            "margin-mse" => Ok(LossKind::MarginMse),
            "xent" => Ok(LossKind::CrossEntropy),
            "mse" => Ok(LossKind::Mse),
            other => Err(Error::InvalidArgument(format!(
                "unknown loss '{other}' (expected kl, margin-mse, xent, or mse)"
            ))),
        }
    }
}

impl LossKind {
    pub fn needs_teacher(&self) -> bool {
        !matches!(self, LossKind::CrossEntropy)
    }
}

/// Scores for one query's candidate list, with optional teacher scores and
/// relevance labels. At least one of the two must be present to compute a
/// loss, and all lengths must agree.
#[derive(Debug, Clone)]
pub struct ScoredList {
    pub student: Vec<f64>,
    pub teacher: Option<Vec<f64>>,
    pub labels: Option<Vec<bool>>,
}

impl ScoredList {
    pub fn validate(&self) -> Result<()> {
        let n = self.student.len();
        if n < 2 {
            return Err(Error::InvalidArgument(
                "a scored list needs at least two candidates".into(),
            ));
        }
        if let Some(t) = &self.teacher {
            if t.len() != n {
                return Err(Error::InvalidArgument(format!(
                    "teacher list length {} does not match student length {}",
                    t.len(),
                    n
                )));
            }
        }
        if let Some(l) = &self.labels {
            if l.len() != n {
                return Err(Error::InvalidArgument(format!(
                    "label list length {} does not match student length {}",
                    l.len(),
                    n
                )));
            }
        }
        if self.teacher.is_none() && self.labels.is_none() {
            return Err(Error::InvalidArgument(
                "a scored list needs teacher scores or labels".into(),
            ));
        }
        Ok(())
    }
}

fn check_pair(t: &[f64], s: &[f64]) -> Result<()> {
    if t.len() != s.len() {
        return Err(Error::shape("loss", (t.len(), 1), (s.len(), 1)));
    }
    if s.len() < 2 {
        return Err(Error::InvalidArgument(
            "losses need at least two candidates".into(),
        ));
    }
    Ok(())
}

/// Max-subtracted softmax.
pub fn softmax(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = x.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Max-subtracted log-softmax. Stays finite even where the softmax itself
/// underflows to zero.
pub fn log_softmax(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = x.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
    x.iter().map(|&v| v - max - lse).collect()
}

/// Sum over negatives of the squared difference between the teacher margin
/// and the student margin, with index 0 as the positive:
/// `sum_{i>=1} ((t[0] - t[i]) - (s[0] - s[i]))^2`.
pub fn margin_mse(teacher: &[f64], student: &[f64]) -> Result<f64> {
    check_pair(teacher, student)?;
    let tm = teacher[0];
    let sm = student[0];
    Ok(teacher[1..]
        .iter()
        .zip(&student[1..])
        .map(|(&t, &s)| {
            let d = (tm - t) - (sm - s);
            d * d
        })
        .sum())
}

/// Gradient of [`margin_mse`] with respect to the student scores.
pub fn margin_mse_grad(teacher: &[f64], student: &[f64]) -> Result<Vec<f64>> {
    check_pair(teacher, student)?;
    let tm = teacher[0];
    let sm = student[0];
    let mut grad = vec![0.0; student.len()];
    for i in 1..student.len() {
        let m = (tm - teacher[i]) - (sm - student[i]);
        grad[i] = 2.0 * m;
        grad[0] -= 2.0 * m;
    }
    Ok(grad)
}

/// KL divergence between the teacher and student softmax distributions,
/// `KL(p_teacher || p_student)`, computed through log-softmax so the value
/// is finite for any finite scores.
pub fn kl_loss(teacher: &[f64], student: &[f64]) -> Result<f64> {
    check_pair(teacher, student)?;
    let pt = softmax(teacher);
    let log_pt = log_softmax(teacher);
    let log_ps = log_softmax(student);
    Ok(pt
        .iter()
        .zip(log_pt.iter().zip(&log_ps))
        .map(|(&p, (&lt, &ls))| if p > 0.0 { p * (lt - ls) } else { 0.0 })
        .sum())
}

/// Gradient of [`kl_loss`] with respect to the student scores:
/// `p_student - p_teacher`.
pub fn kl_grad(teacher: &[f64], student: &[f64]) -> Result<Vec<f64>> {
    check_pair(teacher, student)?;
    let pt = softmax(teacher);
    let ps = softmax(student);
    Ok(ps.iter().zip(&pt).map(|(&s, &t)| s - t).collect())
}

/// `-log softmax(student)[positive]`.
pub fn cross_entropy(student: &[f64], positive: usize) -> Result<f64> {
    if positive >= student.len() {
        return Err(Error::InvalidArgument(format!(
            "positive index {positive} out of range for {} candidates",
            student.len()
        )));
    }
    Ok(-log_softmax(student)[positive])
}

pub fn cross_entropy_grad(student: &[f64], positive: usize) -> Result<Vec<f64>> {
    if positive >= student.len() {
        return Err(Error::InvalidArgument(format!(
            "positive index {positive} out of range for {} candidates",
            student.len()
        )));
    }
    let mut grad = softmax(student);
    grad[positive] -= 1.0;
    Ok(grad)
}

/// Mean squared error between student and teacher scores.
pub fn mse(teacher: &[f64], student: &[f64]) -> Result<f64> {
    if teacher.len() != student.len() || teacher.is_empty() {
        return Err(Error::shape("mse", (teacher.len(), 1), (student.len(), 1)));
    }
    let n = teacher.len() as f64;
    Ok(teacher
        .iter()
        .zip(student)
        .map(|(&t, &s)| (s - t) * (s - t))
        .sum::<f64>()
        / n)
}

pub fn mse_grad(teacher: &[f64], student: &[f64]) -> Result<Vec<f64>> {
    if teacher.len() != student.len() || teacher.is_empty() {
        return Err(Error::shape("mse", (teacher.len(), 1), (student.len(), 1)));
    }
    let n = teacher.len() as f64;
    Ok(teacher
        .iter()
        .zip(student)
        .map(|(&t, &s)| 2.0 * (s - t) / n)
        .collect())
}
