//! Cross-entropy training with negative sampling.
//!
//! Each positive `(i, k, j)` is scored against `num_negatives` corrupted
//! objects and, separately, `num_negatives` corrupted subjects. A softmax is
//! taken over each candidate list and the loss is the mean negative log
//! probability of the positive. Gradients flow analytically through the
//! bilinear form, mixing-matrix dropout, the mode-3 product and (for sparse
//! RT) the hard-concrete gates. Parameters are updated with AdaGrad; the best
//! model by validation MRR is kept, with early stopping.

mod adagrad;
mod dropout;

use std::collections::hash_map::Entry;
use std::collections::{btree_map, BTreeMap, HashMap};
use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use ndarray::{Array1, Array2, Array3, ArrayView1, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use adagrad::{adagrad_step, AdaGradState, DEFAULT_EPS};
pub use dropout::{apply_dropout, dropout_mask};

use crate::error::{Error, Result};
use crate::evaluation::{evaluate, EvalConfig, MetricsReport};
use crate::kgdata::{corrupt, epoch_batches, FilterIndex, Slot, Triple};
use crate::rtucker::{mode3_product, RtModel};
use crate::sparsity::{apply_gates, L0Config};

/// How the candidate lists of one positive are normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SoftmaxMode {
    /// One softmax over the object corruptions and one over the subject
    /// corruptions, each including the positive.
    #[default]
    PerSlot,
    /// A single softmax over the positive and both corruption sets.
    Joint,
}

impl FromStr for SoftmaxMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "per-slot" => Ok(SoftmaxMode::PerSlot),
            "joint" => Ok(SoftmaxMode::Joint),
            other => Err(Error::InvalidArgument(format!("unknown softmax mode `{other}`"))),
        }
    }
}

impl fmt::Display for SoftmaxMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SoftmaxMode::PerSlot => "per-slot",
            SoftmaxMode::Joint => "joint",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// ω, added to the gradient as `ω · p`.
    pub weight_decay: f64,
    /// η, applied to entity embeddings and mixing matrices.
    pub dropout: f64,
    /// Corruptions per slot and positive.
    pub num_negatives: usize,
    pub batch_size: usize,
    pub l0: L0Config,
    pub patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
    pub softmax: SoftmaxMode,
    pub adagrad_eps: f64,
    /// Wall-clock seconds in the log; off gives byte-reproducible logs.
    pub record_time: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.1,
            weight_decay: 0.0,
            dropout: 0.0,
            num_negatives: 24,
            batch_size: 500,
            l0: L0Config::default(),
            patience: 10,
            max_epochs: 200,
            seed: 0,
            softmax: SoftmaxMode::PerSlot,
            adagrad_eps: DEFAULT_EPS,
            record_time: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate {} must be positive", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if self.weight_decay.is_nan() || self.weight_decay < 0.0 {
            return bad(format!("weight decay {} must be non-negative", self.weight_decay));
        }
        if self.l0.lambda.is_nan() || self.l0.lambda < 0.0 {
            return bad(format!("lambda {} must be non-negative", self.l0.lambda));
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1".into());
        }
        if self.patience == 0 {
            return bad("patience must be at least 1".into());
        }
        if self.adagrad_eps.is_nan() || self.adagrad_eps < 0.0 {
            return bad("adagrad epsilon must be non-negative".into());
        }
        Ok(())
    }
}

/// Gradients of the batch objective for every parameter class. `core` is
/// with respect to the free (ungated) core values.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub entities: Array2<f64>,
    pub relations: Array2<f64>,
    pub core: Array3<f64>,
    pub log_alpha: Option<Vec<f64>>,
}

/// All randomness consumed by one batch step. Fixing it makes the objective
/// a deterministic function of the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNoise {
    /// Per positive: (object corruptions, subject corruptions).
    pub negatives: Vec<(Vec<usize>, Vec<usize>)>,
    /// Dropout scale factors per entity row touched by the batch.
    pub entity_masks: HashMap<usize, Array1<f64>>,
    /// Dropout scale factors per relation mixing matrix.
    pub mixing_masks: HashMap<usize, Array2<f64>>,
    /// Uniform noise for the gate sample.
    pub gate_noise: Option<Vec<f64>>,
}

pub fn draw_noise<R: Rng + ?Sized>(
    model: &RtModel,
    batch: &[Triple],
    config: &TrainConfig,
    rng: &mut R,
) -> Result<BatchNoise> {
    let n = model.num_entities();
    let mut negatives = Vec::with_capacity(batch.len());
    for t in batch {
        let objs = corrupt(t, Slot::Object, config.num_negatives, n, rng)?;
        let subs = corrupt(t, Slot::Subject, config.num_negatives, n, rng)?;
        negatives.push((objs, subs));
    }
    let mut entity_masks = HashMap::new();
    let mut mixing_masks = HashMap::new();
    if config.dropout > 0.0 {
        let d = model.entity_dim();
        for (t, (objs, subs)) in batch.iter().zip(&negatives) {
            let touched = [t.subject, t.object]
                .into_iter()
                .chain(objs.iter().copied())
                .chain(subs.iter().copied());
            for x in touched {
                if let Entry::Vacant(slot) = entity_masks.entry(x) {
                    slot.insert(Array1::from(dropout_mask(d, config.dropout, rng)?));
                }
            }
        }
        for t in batch {
            if let Entry::Vacant(slot) = mixing_masks.entry(t.relation) {
                let mask = Array2::from_shape_vec((d, d), dropout_mask(d * d, config.dropout, rng)?)
                    .expect("mask has d_e² entries");
                slot.insert(mask);
            }
        }
    }
    let gate_noise = model.gates.as_ref().map(|g| g.draw_noise(rng));
    Ok(BatchNoise {
        negatives,
        entity_masks,
        mixing_masks,
        gate_noise,
    })
}

/// Cross-entropy of the first entry against softmax(scores), and its
/// gradient `softmax − onehot(0)`.
fn softmax_xent(scores: &[f64]) -> (f64, Vec<f64>) {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    let loss = z.ln() + max - scores[0];
    let mut grad: Vec<f64> = exps.iter().map(|e| e / z).collect();
    grad[0] -= 1.0;
    (loss, grad)
}

fn add_outer(target: &mut Array2<f64>, a: ArrayView1<f64>, b: ArrayView1<f64>) {
    for (mut row, &x) in target.outer_iter_mut().zip(a.iter()) {
        if x != 0.0 {
            row.scaled_add(x, &b);
        }
    }
}

/// Batch objective and gradients under fixed noise. `lambda` is the L0
/// weight in effect (0 during warm-up).
pub fn loss_and_grads_with_noise(
    model: &RtModel,
    batch: &[Triple],
    noise: &BatchNoise,
    softmax: SoftmaxMode,
    lambda: f64,
) -> Result<(f64, Gradients)> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    if noise.negatives.len() != batch.len() {
        return Err(Error::Dimension(format!(
            "noise for {} positives, batch has {}",
            noise.negatives.len(),
            batch.len()
        )));
    }
    let (n, d) = model.entities.dim();
    for t in batch {
        if t.subject >= n || t.object >= n || t.relation >= model.num_relations() {
            return Err(Error::OutOfRange(format!("triple {t:?}")));
        }
    }

    let gate_sample = match (&model.gates, &noise.gate_noise) {
        (Some(g), Some(u)) if u.len() == g.len() => Some(g.sample_with_noise(u)),
        (None, _) => None,
        _ => return Err(Error::Dimension("gate noise missing or mis-sized".into())),
    };
    let core = match &gate_sample {
        Some(s) => apply_gates(&model.core, &s.z)?,
        None => model.core.clone(),
    };

    // relation -> (dropped-out M_k, ∂L/∂M_k)
    let mut mixing: BTreeMap<usize, (Array2<f64>, Array2<f64>)> = BTreeMap::new();
    for t in batch {
        if let btree_map::Entry::Vacant(slot) = mixing.entry(t.relation) {
            let mut m = mode3_product(&core, model.relations.row(t.relation))?;
            if let Some(mask) = noise.mixing_masks.get(&t.relation) {
                m *= mask;
            }
            slot.insert((m, Array2::zeros((d, d))));
        }
    }

    let embed = |x: usize| -> Array1<f64> {
        let mut e = model.entities.row(x).to_owned();
        if let Some(mask) = noise.entity_masks.get(&x) {
            e *= mask;
        }
        e
    };

    let num_lists = match softmax {
        SoftmaxMode::PerSlot => 2 * batch.len(),
        SoftmaxMode::Joint => batch.len(),
    } as f64;
    let mut loss = 0.0;
    let mut d_emb = Array2::<f64>::zeros((n, d));

    for (t, (obj_negs, subj_negs)) in batch.iter().zip(&noise.negatives) {
        let (m, dm) = mixing.get_mut(&t.relation).expect("mixing matrix built above");
        let ei = embed(t.subject);
        let ej = embed(t.object);
        // object candidates are scored by u · e, subject candidates by e · v
        let u = m.t().dot(&ei);
        let v = m.dot(&ej);

        let obj_cands: Vec<usize> = std::iter::once(t.object).chain(obj_negs.iter().copied()).collect();
        let subj_cands: Vec<usize> = std::iter::once(t.subject).chain(subj_negs.iter().copied()).collect();
        let obj_embs: Vec<Array1<f64>> = obj_cands
            .iter()
            .map(|&c| if c == t.object { ej.clone() } else { embed(c) })
            .collect();
        let subj_embs: Vec<Array1<f64>> = subj_cands
            .iter()
            .map(|&c| if c == t.subject { ei.clone() } else { embed(c) })
            .collect();
        let obj_scores: Vec<f64> = obj_embs.iter().map(|e| u.dot(e)).collect();
        let subj_scores: Vec<f64> = subj_embs.iter().map(|e| e.dot(&v)).collect();

        let (g_obj, g_subj) = match softmax {
            SoftmaxMode::PerSlot => {
                let (l1, g1) = softmax_xent(&obj_scores);
                let (l2, g2) = softmax_xent(&subj_scores);
                loss += l1 + l2;
                (g1, g2)
            }
            SoftmaxMode::Joint => {
                let scores: Vec<f64> = obj_scores.iter().chain(&subj_scores[1..]).copied().collect();
                let (l, g) = softmax_xent(&scores);
                loss += l;
                let split = obj_scores.len();
                let mut g_subj = vec![0.0; subj_scores.len()];
                g_subj[1..].copy_from_slice(&g[split..]);
                (g[..split].to_vec(), g_subj)
            }
        };

        let mut w = Array1::<f64>::zeros(d);
        for ((&c, e), &g) in obj_cands.iter().zip(&obj_embs).zip(&g_obj) {
            let g = g / num_lists;
            w.scaled_add(g, e);
            d_emb.row_mut(c).scaled_add(g, &u);
        }
        add_outer(dm, ei.view(), w.view());
        d_emb.row_mut(t.subject).scaled_add(1.0, &m.dot(&w));

        let mut w = Array1::<f64>::zeros(d);
        for ((&c, e), &g) in subj_cands.iter().zip(&subj_embs).zip(&g_subj) {
            let g = g / num_lists;
            w.scaled_add(g, e);
            d_emb.row_mut(c).scaled_add(g, &v);
        }
        add_outer(dm, w.view(), ej.view());
        d_emb.row_mut(t.object).scaled_add(1.0, &m.t().dot(&w));
    }
    loss /= num_lists;

    for (&x, mask) in &noise.entity_masks {
        let mut row = d_emb.row_mut(x);
        row *= mask;
    }

    let mut d_rel = Array2::<f64>::zeros(model.relations.dim());
    let mut d_core = Array3::<f64>::zeros(core.values().dim());
    for (&k, (_, dm)) in &mixing {
        let mut dm = dm.clone();
        if let Some(mask) = noise.mixing_masks.get(&k) {
            dm *= mask;
        }
        for l in 0..core.relation_dim() {
            d_rel[[k, l]] = (&core.slice(l) * &dm).sum();
            let r_kl = model.relations[[k, l]];
            if r_kl != 0.0 {
                d_core.index_axis_mut(Axis(0), l).scaled_add(r_kl, &dm);
            }
        }
    }
    if model.relations_fixed {
        d_rel.fill(0.0);
    }

    let mut d_log_alpha = None;
    if let (Some(sample), Some(gates)) = (&gate_sample, &model.gates) {
        let dz = sample.dz_dlog_alpha(gates.params());
        let penalty = gates.expected_l0_grad();
        let free = model.core.values().as_slice().expect("standard layout core");
        let mut dla = vec![0.0; gates.len()];
        let dc = d_core.as_slice_mut().expect("standard layout gradient");
        for idx in 0..dla.len() {
            dla[idx] = dc[idx] * free[idx] * dz[idx] + lambda * penalty[idx];
            dc[idx] *= sample.z[idx];
        }
        let penalized: f64 = match model.core.fixed_mask() {
            Some(mask) => gates
                .nonzero_probabilities()
                .iter()
                .zip(mask.iter())
                .filter(|(_, &f)| !f)
                .map(|(p, _)| p)
                .sum(),
            None => gates.expected_l0(),
        };
        loss += lambda * penalized;
        d_log_alpha = Some(dla);
    }
    if let Some(mask) = model.core.fixed_mask() {
        Zip::from(&mut d_core).and(mask).for_each(|g, &f| {
            if f {
                *g = 0.0;
            }
        });
        if let Some(dla) = &mut d_log_alpha {
            for (g, &f) in dla.iter_mut().zip(mask.iter()) {
                if f {
                    *g = 0.0;
                }
            }
        }
    }

    Ok((
        loss,
        Gradients {
            entities: d_emb,
            relations: d_rel,
            core: d_core,
            log_alpha: d_log_alpha,
        },
    ))
}

/// Draws the batch noise from `rng` and evaluates objective and gradients.
pub fn batch_loss_and_grads<R: Rng + ?Sized>(
    model: &RtModel,
    batch: &[Triple],
    config: &TrainConfig,
    lambda: f64,
    rng: &mut R,
) -> Result<(f64, Gradients)> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let noise = draw_noise(model, batch, config, rng)?;
    loss_and_grads_with_noise(model, batch, &noise, config.softmax, lambda)
}

/// Source of the validation metric used for model selection.
pub trait Validator {
    fn validate(&mut self, model: &RtModel) -> Result<MetricsReport>;
}

/// Filtered ranking on a fixed validation split.
pub struct FilteredValidator<'a> {
    triples: &'a [Triple],
    filter: &'a FilterIndex,
    config: EvalConfig,
}

impl<'a> FilteredValidator<'a> {
    pub fn new(triples: &'a [Triple], filter: &'a FilterIndex, config: EvalConfig) -> Result<Self> {
        if triples.is_empty() {
            return Err(Error::InvalidArgument("validation split is empty".into()));
        }
        Ok(FilteredValidator {
            triples,
            filter,
            config,
        })
    }
}

impl Validator for FilteredValidator<'_> {
    fn validate(&mut self, model: &RtModel) -> Result<MetricsReport> {
        evaluate(model, self.triples, self.filter, &self.config)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub mean_loss: f64,
    pub valid: MetricsReport,
    /// Fraction of effective core entries that are exactly zero.
    pub core_sparsity: f64,
    pub elapsed_secs: f64,
}

impl EpochRecord {
    /// `epoch, loss, MRR, H1, H3, H10, core sparsity %, seconds`, tab-separated.
    pub fn line(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{:.3}",
            self.epoch,
            self.mean_loss,
            self.valid.mrr,
            self.valid.hits1,
            self.valid.hits3,
            self.valid.hits10,
            100.0 * self.core_sparsity,
            self.elapsed_secs
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingLog {
    pub records: Vec<EpochRecord>,
}

impl TrainingLog {
    pub const HEADER: &'static str = "# epoch\tloss\tmrr\thits1\thits3\thits10\tcore_sparsity_pct\tseconds";

    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{}", Self::HEADER)?;
        for r in &self.records {
            writeln!(w, "{}", r.line())?;
        }
        Ok(())
    }

    pub fn to_tsv(&self) -> String {
        let mut out = Vec::new();
        self.write(&mut out).expect("writing to a Vec");
        String::from_utf8(out).expect("log is UTF-8")
    }

    pub fn best(&self) -> Option<&EpochRecord> {
        self.records
            .iter()
            .fold(None, |best: Option<&EpochRecord>, r| match best {
                Some(b) if b.valid.mrr >= r.valid.mrr => Some(b),
                _ => Some(r),
            })
    }
}

/// Result of [`fit`]: the best model seen by validation MRR.
#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub model: RtModel,
    pub log: TrainingLog,
    pub best_epoch: usize,
    pub best_metrics: MetricsReport,
}

fn core_sparsity(model: &RtModel) -> f64 {
    let core = model.effective_core();
    let zeros = core.values().iter().filter(|&&v| v == 0.0).count();
    zeros as f64 / core.len() as f64
}

/// Trains until `patience` epochs pass without a strictly better validation
/// MRR, or `max_epochs` is reached.
pub fn fit<V: Validator + ?Sized>(
    mut model: RtModel,
    train: &[Triple],
    config: &TrainConfig,
    validator: &mut V,
) -> Result<FitOutcome> {
    config.validate()?;
    model.validate()?;
    if train.is_empty() {
        return Err(Error::InvalidArgument("training split is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut state = AdaGradState::new(&model, config.adagrad_eps);
    let start = Instant::now();
    let mut log = TrainingLog::default();
    let mut best: Option<(RtModel, usize, MetricsReport)> = None;
    let mut stale = 0;

    for epoch in 0..config.max_epochs {
        let lambda = if model.gates.is_some() {
            config.l0.lambda_at(epoch)
        } else {
            0.0
        };
        let batches = epoch_batches(train.len(), config.batch_size, &mut rng)?;
        let mut loss_sum = 0.0;
        for (b, idx) in batches.iter().enumerate() {
            let batch: Vec<Triple> = idx.iter().map(|&i| train[i]).collect();
            let (loss, grads) = batch_loss_and_grads(&model, &batch, config, lambda, &mut rng)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!(
                    "loss {loss} at epoch {}, batch {}",
                    epoch + 1,
                    b + 1
                )));
            }
            loss_sum += loss;
            state.apply(&mut model, &grads, config.learning_rate, config.weight_decay)?;
        }
        let valid = validator.validate(&model)?;
        let record = EpochRecord {
            epoch: epoch + 1,
            mean_loss: loss_sum / batches.len() as f64,
            valid,
            core_sparsity: core_sparsity(&model),
            elapsed_secs: if config.record_time {
                start.elapsed().as_secs_f64()
            } else {
                0.0
            },
        };
        log.records.push(record);

        let improved = best.as_ref().is_none_or(|(_, _, m)| valid.mrr > m.mrr);
        if improved {
            best = Some((model.clone(), epoch + 1, valid));
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                break;
            }
        }
    }

    let (model, best_epoch, best_metrics) = match best {
        Some(b) => b,
        None => {
            let metrics = validator.validate(&model)?;
            (model, 0, metrics)
        }
    };
    Ok(FitOutcome {
        model,
        log,
        best_epoch,
        best_metrics,
    })
}
