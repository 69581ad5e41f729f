//! Head training over line-oriented tuple data.
//!
//! One step scores every document of `batch_size` records, applies the
//! chosen loss per record, averages the loss and its gradients over the
//! batch, and takes one AdamW step on the head. Records are consumed in
//! file order, cycling; the only randomness is the seeded parameter
//! initialization, so a `(data, config, seed)` triple fully determines the
//! outcome.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::losses::{
    cross_entropy, cross_entropy_grad, kl_grad, kl_loss, margin_mse, margin_mse_grad, mse,
    mse_grad, LossKind,
};
use crate::nn::{
    accumulate, flat_lite_backward, flat_lite_forward, sep_lite_backward, sep_lite_forward,
    AdamWConfig, AdamWState, FlatLiteParams, SepLiteParams,
};
use crate::scorers::{knrm_features, similarity_matrix, HeadParams, KnrmParams, ScorerKind};
use crate::tensor::{dot, Matrix};

use super::files::TrainRecord;

/// Trainer settings. `m1`/`m2` size the separable head, `hidden` the
/// flattened head; unused fields are ignored by the other scorers.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub adamw: AdamWConfig,
    pub m1: usize,
    pub m2: usize,
    pub hidden: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 1000,
            batch_size: 8,
            adamw: AdamWConfig::default(),
            m1: SepLiteParams::DEFAULT_M1,
            m2: SepLiteParams::DEFAULT_M2,
            hidden: 64,
        }
    }
}

/// Trained head plus the per-step batch-mean loss curve.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub head: HeadParams,
    pub losses: Vec<f64>,
}

struct Embeddings<'a> {
    queries: &'a HashMap<u64, Matrix>,
    docs: &'a HashMap<u64, Matrix>,
}

impl Embeddings<'_> {
    fn query(&self, id: u64) -> Result<&Matrix> {
        self.queries.get(&id).ok_or(Error::DocNotFound(id))
    }

    fn doc(&self, id: u64) -> Result<&Matrix> {
        self.docs.get(&id).ok_or(Error::DocNotFound(id))
    }
}

fn loss_and_grad(loss: LossKind, record: &TrainRecord, student: &[f64]) -> Result<(f64, Vec<f64>)> {
    match loss {
        LossKind::CrossEntropy => Ok((cross_entropy(student, 0)?, cross_entropy_grad(student, 0)?)),
        _ => {
            let teacher = record.teacher.as_ref().ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "loss {loss} needs teacher scores but the record for query {} has none",
                    record.query_id
                ))
            })?;
            match loss {
                LossKind::Kl => Ok((kl_loss(teacher, student)?, kl_grad(teacher, student)?)),
                LossKind::MarginMse => Ok((
                    margin_mse(teacher, student)?,
                    margin_mse_grad(teacher, student)?,
                )),
                LossKind::Mse => Ok((mse(teacher, student)?, mse_grad(teacher, student)?)),
                LossKind::CrossEntropy => unreachable!(),
            }
        }
    }
}

enum Head {
    Sep(SepLiteParams),
    Flat(FlatLiteParams),
    Knrm(KnrmParams),
}

/// Trains a head on teacher-scored or labeled tuples. Supports the three
/// trainable scorers; query and document embeddings are looked up by id.
pub fn train_head(
    records: &[TrainRecord],
    queries: &HashMap<u64, Matrix>,
    docs: &HashMap<u64, Matrix>,
    kind: &ScorerKind,
    loss: LossKind,
    config: &TrainConfig,
    seed: u64,
) -> Result<TrainOutcome> {
    if records.is_empty() {
        return Err(Error::InvalidArgument("no training records".into()));
    }
    if config.steps == 0 || config.batch_size == 0 {
        return Err(Error::InvalidArgument(
            "steps and batch size must be positive".into(),
        ));
    }
    if !kind.trainable() {
        return Err(Error::InvalidArgument(format!(
            "scorer {kind} has no trainable head"
        )));
    }
    let embeddings = Embeddings { queries, docs };

    // Head dimensions come from the first record's shapes; every record must
    // agree, which the forward-pass shape checks enforce.
    let first_q = embeddings.query(records[0].query_id)?;
    let first_d = embeddings.doc(records[0].doc_ids[0])?;
    let l1 = first_q.cols();
    let l2 = first_d.cols();

    let mut head = match kind {
        ScorerKind::SepLite => Head::Sep(SepLiteParams::init(l1, l2, config.m1, config.m2, seed)),
        ScorerKind::FlatLite => Head::Flat(FlatLiteParams::init(config.hidden, l1 * l2, seed)),
        ScorerKind::Knrm => Head::Knrm(KnrmParams::init(seed)),
        _ => unreachable!("trainable() checked above"),
    };

    let mut opt = match &head {
        Head::Sep(p) => AdamWState::new(p, config.adamw)?,
        Head::Flat(p) => AdamWState::new(p, config.adamw)?,
        Head::Knrm(p) => AdamWState::new(p, config.adamw)?,
    };

    let mut losses = Vec::with_capacity(config.steps);
    let mut cursor = 0usize;
    for step in 0..config.steps {
        let mut batch_loss = 0.0;
        let mut grads = match &head {
            Head::Sep(p) => Head::Sep(p.zeros_like()),
            Head::Flat(p) => Head::Flat(p.zeros_like()),
            Head::Knrm(p) => {
                let mut z = p.clone();
                z.w.iter_mut().for_each(|x| *x = 0.0);
                Head::Knrm(z)
            }
        };

        for _ in 0..config.batch_size {
            let record = &records[cursor];
            cursor = (cursor + 1) % records.len();
            let query = embeddings.query(record.query_id)?;

            // Forward over the record's candidate list.
            let mut sims = Vec::with_capacity(record.doc_ids.len());
            for &doc_id in &record.doc_ids {
                sims.push(similarity_matrix(query, embeddings.doc(doc_id)?)?);
            }
            let student: Vec<f64> = match &head {
                Head::Sep(p) => sims
                    .iter()
                    .map(|s| Ok(sep_lite_forward(s, p)?.0))
                    .collect::<Result<_>>()?,
                Head::Flat(p) => sims
                    .iter()
                    .map(|s| Ok(flat_lite_forward(s, p)?.0))
                    .collect::<Result<_>>()?,
                Head::Knrm(p) => sims
                    .iter()
                    .map(|s| Ok(dot(&p.w, &knrm_features(s, p)?)))
                    .collect::<Result<_>>()?,
            };

            let (value, dscore) = loss_and_grad(loss, record, &student)?;
            batch_loss += value;

            // Backward per candidate, scaled into the batch average.
            let scale = 1.0 / config.batch_size as f64;
            match (&head, &mut grads) {
                (Head::Sep(p), Head::Sep(g)) => {
                    for (s, &up) in sims.iter().zip(&dscore) {
                        if up == 0.0 {
                            continue;
                        }
                        let (_, cache) = sep_lite_forward(s, p)?;
                        let (gi, _) = sep_lite_backward(p, &cache, up * scale)?;
                        accumulate(g, &gi);
                    }
                }
                (Head::Flat(p), Head::Flat(g)) => {
                    for (s, &up) in sims.iter().zip(&dscore) {
                        if up == 0.0 {
                            continue;
                        }
                        let (_, cache) = flat_lite_forward(s, p)?;
                        let (gi, _) = flat_lite_backward(p, &cache, up * scale)?;
                        accumulate(g, &gi);
                    }
                }
                (Head::Knrm(p), Head::Knrm(g)) => {
                    for (s, &up) in sims.iter().zip(&dscore) {
                        if up == 0.0 {
                            continue;
                        }
                        let phi = knrm_features(s, p)?;
                        for (gw, f) in g.w.iter_mut().zip(phi) {
                            *gw += f * up * scale;
                        }
                    }
                }
                _ => unreachable!("head and grads share a variant"),
            }
        }

        let mean_loss = batch_loss / config.batch_size as f64;
        if !mean_loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                step,
                value: mean_loss,
            });
        }
        losses.push(mean_loss);

        match (&mut head, &grads) {
            (Head::Sep(p), Head::Sep(g)) => opt.step(p, g)?,
            (Head::Flat(p), Head::Flat(g)) => opt.step(p, g)?,
            (Head::Knrm(p), Head::Knrm(g)) => opt.step(p, g)?,
            _ => unreachable!(),
        }
    }

    let head = match head {
        Head::Sep(p) => HeadParams::Sep(p),
        Head::Flat(p) => HeadParams::Flat(p),
        Head::Knrm(p) => HeadParams::Knrm(p),
    };
    Ok(TrainOutcome { head, losses })
}
