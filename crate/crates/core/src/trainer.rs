//! Joint optimisation of both residual maps with Adam.
//!
//! One step draws a sense minibatch for Attract-Repel and an independent
//! word minibatch for self-training, evaluates `L = L^AR + α·L^ST` on the
//! specialized embeddings, back-propagates through `H_s` (both losses) and
//! `H_w` (self-training only) and applies one Adam update. An epoch is one
//! traversal of the shuffled sense inventory; unused word instances are
//! discarded at the epoch boundary.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::TrainConfig;
use crate::engine::{answers, predict_corpus, PredictOptions};
use crate::error::{Error, Result};
use crate::evaluation::micro_f1;
use crate::lexicon::{Lexicon, SenseId, Subset, WordInstance};
use crate::net::{MapGradients, ResidualMap, SpecializationNet};
use crate::objectives::{
    attract_repel_loss, candidate_lists, combined_loss, self_training_loss, LossValue, SenseBatch, SenseMatrix,
    SenseSampler, WordSampler,
};
use crate::store::EmbeddingTable;

const SENSE_STREAM: u64 = 1;
const WORD_STREAM: u64 = 2;

/// Everything training reads.
#[derive(Debug, Clone, Copy)]
pub struct TrainData<'a> {
    pub senses: &'a EmbeddingTable,
    pub contexts: &'a EmbeddingTable,
    pub lexicon: &'a Lexicon,
    /// Unlabelled instances for self-training.
    pub instances: &'a [WordInstance],
}

/// One row of `train_log.jsonl`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: usize,
    pub epoch: usize,
    pub loss: f64,
    pub attract_repel: f64,
    pub self_train: f64,
}

impl StepLog {
    fn new(step: usize, epoch: usize, v: &LossValue) -> Self {
        Self {
            step,
            epoch,
            loss: v.total,
            attract_repel: v.attract_repel,
            self_train: v.self_train,
        }
    }
}

/// Hooks called during training, e.g. to stream the log and write
/// per-epoch checkpoints.
pub trait TrainObserver {
    fn on_step(&mut self, _row: &StepLog) -> Result<()> {
        Ok(())
    }

    fn on_epoch_end(&mut self, _epoch: usize, _net: &SpecializationNet) -> Result<()> {
        Ok(())
    }
}

impl TrainObserver for () {}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub net: SpecializationNet,
    pub log: Vec<StepLog>,
}

/// Adam moments for a list of parameter tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(sizes: &[usize]) -> Self {
        Self {
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn for_map(map: &ResidualMap) -> Self {
        Self::new(&map.tensors().map(<[f64]>::len))
    }
}

/// Bias-corrected Adam update. Gradients are checked for finiteness
/// before anything is modified.
pub fn adam_step(params: &mut [&mut [f64]], grads: &[&[f64]], state: &mut AdamState, lr: f64) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::Shape {
            expected: state.m.len(),
            actual: grads.len(),
        });
    }
    for ((p, g), m) in params.iter().zip(grads).zip(&state.m) {
        if p.len() != g.len() || p.len() != m.len() {
            return Err(Error::Shape {
                expected: m.len(),
                actual: g.len(),
            });
        }
    }
    if grads.iter().any(|g| g.iter().any(|v| !v.is_finite())) {
        return Err(Error::NonFiniteGradient { step: state.step as usize });
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - state.beta1.powi(t);
    let c2 = 1.0 - state.beta2.powi(t);
    for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        for i in 0..p.len() {
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            p[i] -= lr * m_hat / (v_hat.sqrt() + state.eps);
        }
    }
    Ok(())
}

fn adam_update_map(map: &mut ResidualMap, grads: &MapGradients, state: &mut AdamState, lr: f64) -> Result<()> {
    let g = grads.tensors();
    let mut p = map.tensors_mut();
    let mut refs: Vec<&mut [f64]> = p.iter_mut().map(|t| &mut **t).collect();
    adam_step(&mut refs, &g, state, lr)?;
    map.round_to_f32();
    Ok(())
}

fn gather(table: &EmbeddingTable, rows: impl ExactSizeIterator<Item = usize>) -> Array2<f64> {
    let n = rows.len();
    let dim = table.dim();
    let mut out = Array2::zeros((n, dim));
    for (mut dst, r) in out.rows_mut().into_iter().zip(rows) {
        for (d, &s) in dst.iter_mut().zip(table.row(r)) {
            *d = f64::from(s);
        }
    }
    out
}

/// Table row of every lexicon sense.
pub(crate) fn sense_rows(lexicon: &Lexicon, senses: &EmbeddingTable) -> Result<Vec<usize>> {
    lexicon
        .senses()
        .iter()
        .map(|s| senses.row_of(&s.sense_key).ok_or_else(|| Error::UnknownKey(s.sense_key.clone())))
        .collect()
}

pub(crate) fn context_rows(instances: &[WordInstance], contexts: &EmbeddingTable) -> Result<Vec<usize>> {
    instances
        .iter()
        .map(|w| {
            if w.candidates.is_empty() {
                return Err(Error::NoCandidates(w.instance_id.clone()));
            }
            contexts
                .row_of(&w.instance_id)
                .ok_or_else(|| Error::UnknownKey(w.instance_id.clone()))
        })
        .collect()
}

/// Raw (unspecialized) inputs of one training step.
#[derive(Debug, Clone)]
pub struct StepInputs<'a> {
    pub batch: &'a SenseBatch,
    /// Ids of the rows of `senses`: every batch sense and every candidate.
    pub sense_ids: Vec<SenseId>,
    pub senses: Array2<f64>,
    /// One row per self-training word, aligned with `candidates`.
    pub contexts: Array2<f64>,
    pub candidates: Vec<&'a [SenseId]>,
}

/// Loss of one step and the gradients of both maps. A map gets `None`
/// when no loss term reaches it.
#[derive(Debug, Clone)]
pub struct StepGradients {
    pub loss: LossValue,
    pub sense: Option<MapGradients>,
    pub context: Option<MapGradients>,
}

/// Evaluates `L^AR + α·L^ST` on the specialized inputs and back-propagates
/// through both maps. This is exactly what one training step differentiates.
pub fn step_gradients(net: &SpecializationNet, config: &TrainConfig, inputs: &StepInputs<'_>) -> Result<StepGradients> {
    let toggles = &config.toggles;
    if inputs.sense_ids.is_empty() {
        return Ok(StepGradients {
            loss: LossValue {
                total: 0.0,
                attract_repel: 0.0,
                self_train: 0.0,
                alpha: config.alpha,
            },
            sense: None,
            context: None,
        });
    }
    let (spec_senses, sense_cache) = net.sense_map.forward_batch(inputs.senses.view())?;
    let matrix = SenseMatrix::new(inputs.sense_ids.clone(), spec_senses)?;
    let shape = matrix.vectors.dim();

    let ar = if toggles.attract_repel {
        Some(attract_repel_loss(inputs.batch, &matrix, config.beta, toggles)?)
    } else {
        None
    };

    let mut context_cache = None;
    let st = if toggles.self_training && !inputs.candidates.is_empty() {
        let ctx = if toggles.adapt_context {
            let (v, cache) = net.context_map.forward_batch(inputs.contexts.view())?;
            context_cache = Some(cache);
            v
        } else {
            inputs.contexts.clone()
        };
        Some(self_training_loss(ctx.view(), &inputs.candidates, &matrix)?)
    } else {
        None
    };

    let (loss, grads) = combined_loss(ar.as_ref(), st.as_ref(), config.alpha, shape);
    let (sense, _) = net.sense_map.backward(&sense_cache, grads.senses.view())?;
    let context = match (context_cache, grads.contexts) {
        (Some(cache), Some(g)) => Some(net.context_map.backward(&cache, g.view())?.0),
        _ => None,
    };
    Ok(StepGradients {
        loss,
        sense: Some(sense),
        context,
    })
}

struct Run<'a> {
    config: &'a TrainConfig,
    data: TrainData<'a>,
    sense_rows: Vec<usize>,
    ctx_rows: Vec<usize>,
    net: SpecializationNet,
    sense_adam: AdamState,
    context_adam: AdamState,
}

impl Run<'_> {
    fn step(&mut self, batch: &SenseBatch, words: &[usize]) -> Result<LossValue> {
        let toggles = &self.config.toggles;
        let mut sense_ids: Vec<SenseId> = if toggles.attract_repel { batch.senses() } else { Vec::new() };
        let cands = candidate_lists(self.data.instances, words);
        {
            let mut seen: std::collections::HashSet<SenseId> = sense_ids.iter().copied().collect();
            for c in &cands {
                sense_ids.extend(c.iter().copied().filter(|s| seen.insert(*s)));
            }
        }
        let raw_senses = gather(self.data.senses, sense_ids.iter().map(|s| self.sense_rows[s.0]));
        let raw_contexts = gather(self.data.contexts, words.iter().map(|&w| self.ctx_rows[w]));
        let out = step_gradients(
            &self.net,
            self.config,
            &StepInputs {
                batch,
                sense_ids,
                senses: raw_senses,
                contexts: raw_contexts,
                candidates: cands,
            },
        )?;
        let step = self.sense_adam.step as usize;
        let finite = |g: &Option<MapGradients>| g.as_ref().is_none_or(|g| g.is_finite());
        if !finite(&out.sense) || !finite(&out.context) {
            return Err(Error::NonFiniteGradient { step });
        }
        let lr = self.config.learning_rate;
        if let Some(g) = &out.sense {
            adam_update_map(&mut self.net.sense_map, g, &mut self.sense_adam, lr)?;
        }
        if let Some(g) = &out.context {
            adam_update_map(&mut self.net.context_map, g, &mut self.context_adam, lr)?;
        }
        Ok(out.loss)
    }

    /// Verifies the displacement bound on a sample of specialized senses
    /// and contexts.
    fn check_bound(&self, sample: usize) -> Result<()> {
        let check = |map: &ResidualMap, table: &EmbeddingTable, rows: &mut dyn ExactSizeIterator<Item = usize>| {
            let raw = gather(table, rows);
            if raw.nrows() == 0 {
                return Ok(());
            }
            let (out, _) = map.forward_batch(raw.view())?;
            let bound = map.displacement_bound() + 1e-6;
            for (x, y) in raw.rows().into_iter().zip(out.rows()) {
                let d = crate::net::relative_displacement(x, y);
                if d > bound {
                    return Err(Error::Config(format!("distance bound violated: {d} > {bound}")));
                }
            }
            Ok(())
        };
        let n = self.sense_rows.len().min(sample);
        check(&self.net.sense_map, self.data.senses, &mut self.sense_rows[..n].iter().copied())?;
        let n = self.ctx_rows.len().min(sample);
        check(&self.net.context_map, self.data.contexts, &mut self.ctx_rows[..n].iter().copied())
    }
}

/// Trains a fresh net. Identical config and inputs give bitwise-identical
/// parameters and logs.
pub fn train(config: &TrainConfig, data: TrainData<'_>, observer: &mut dyn TrainObserver) -> Result<TrainOutcome> {
    config.validate()?;
    let dim = data.senses.dim();
    if data.contexts.dim() != dim {
        return Err(Error::Shape {
            expected: dim,
            actual: data.contexts.dim(),
        });
    }
    if data.lexicon.is_empty() {
        return Err(Error::Config("lexicon has no senses".into()));
    }
    if config.toggles.self_training && data.instances.is_empty() {
        return Err(Error::Config("self-training is enabled but there are no training instances".into()));
    }
    let sense_rows = sense_rows(data.lexicon, data.senses)?;
    let ctx_rows = context_rows(data.instances, data.contexts)?;

    let net = SpecializationNet::init(dim, config.hidden_for(dim), config.epsilon, config.seed);
    let mut run = Run {
        config,
        data,
        sense_rows,
        ctx_rows,
        sense_adam: AdamState::for_map(&net.sense_map),
        context_adam: AdamState::for_map(&net.context_map),
        net,
    };

    let mut sense_rng = ChaCha8Rng::seed_from_u64(config.seed);
    sense_rng.set_stream(SENSE_STREAM);
    let mut word_rng = ChaCha8Rng::seed_from_u64(config.seed);
    word_rng.set_stream(WORD_STREAM);

    let mut sense_sampler = SenseSampler::new(data.lexicon, config.max_hard_negatives);
    let mut word_sampler = WordSampler::new(data.instances.len(), config.self_train_fraction, &mut word_rng);
    let mut log = Vec::new();
    let mut step = 0usize;

    for epoch in 1..=config.epochs {
        sense_sampler.start_epoch(&mut sense_rng);
        word_sampler.reset();
        while let Some(batch) = sense_sampler.next_batch(data.lexicon, &mut sense_rng, config.batch_size) {
            let words = if config.toggles.self_training {
                word_sampler.next_batch(&mut word_rng, config.batch_size)
            } else {
                Vec::new()
            };
            step += 1;
            let value = run.step(&batch, &words).map_err(|e| Error::Step {
                step,
                source: Box::new(e),
            })?;
            let row = StepLog::new(step, epoch, &value);
            observer.on_step(&row)?;
            log.push(row);
        }
        run.check_bound(256)?;
        observer.on_epoch_end(epoch, &run.net)?;
    }

    Ok(TrainOutcome { net: run.net, log })
}

/// One grid point of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "param", content = "value", rename_all = "snake_case")]
pub enum SweepPoint {
    Epsilon(f64),
    SelfTrainFraction(f64),
}

impl SweepPoint {
    pub fn apply(&self, config: &TrainConfig) -> TrainConfig {
        let mut c = config.clone();
        match *self {
            SweepPoint::Epsilon(e) => c.epsilon = e,
            SweepPoint::SelfTrainFraction(f) => c.self_train_fraction = f,
        }
        c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    #[serde(flatten)]
    pub point: SweepPoint,
    pub seed: u64,
    /// Micro-F1 on the development subset.
    pub dev_f1: f64,
}

/// `lo, lo + step, …, hi` with values rounded to 1e-9 so that decimal grids
/// come out exact.
pub fn grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    (0..=n).map(|i| ((lo + i as f64 * step) * 1e9).round() / 1e9).collect()
}

/// Trains one model per grid point and seed and scores each on the
/// development subset with plain nearest-neighbour prediction.
pub fn sweep(
    config: &TrainConfig,
    points: &[SweepPoint],
    seeds: &[u64],
    data: TrainData<'_>,
    eval: &[WordInstance],
    observer: &mut dyn FnMut(&SweepRow),
) -> Result<Vec<SweepRow>> {
    let dev: Vec<WordInstance> = eval.iter().filter(|w| w.subset == Some(Subset::DEV)).cloned().collect();
    if dev.is_empty() {
        return Err(Error::Config(format!("no {} instances for development scoring", Subset::DEV)));
    }
    let mut rows = Vec::with_capacity(points.len() * seeds.len());
    for point in points {
        for &seed in seeds {
            let mut cfg = point.apply(config);
            cfg.seed = seed;
            let outcome = train(&cfg, data, &mut ())?;
            let preds = predict_corpus(
                &outcome.net,
                data.senses,
                data.contexts,
                data.lexicon,
                &dev,
                PredictOptions::default(),
            )?;
            let report = micro_f1(&answers(&preds), &dev)?;
            let row = SweepRow {
                point: *point,
                seed,
                dev_f1: report.overall.f1,
            };
            observer(&row);
            rows.push(row);
        }
    }
    Ok(rows)
}

/// The development-set sweep over `ε`.
pub fn epsilon_sweep(
    config: &TrainConfig,
    epsilons: &[f64],
    data: TrainData<'_>,
    eval: &[WordInstance],
) -> Result<Vec<SweepRow>> {
    let points: Vec<_> = epsilons.iter().map(|&e| SweepPoint::Epsilon(e)).collect();
    sweep(config, &points, &[config.seed], data, eval, &mut |_| {})
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adam_zero_gradient_keeps_params() {
        let mut p = vec![1.0, -2.0];
        let mut st = AdamState::new(&[2]);
        adam_step(&mut [&mut p[..]], &[&[0.0, 0.0]], &mut st, 0.001).unwrap();
        assert_eq!(p, vec![1.0, -2.0]);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn adam_first_step_hand_trace() {
        // m = 0.1g, v = 0.001g²; bias correction gives m̂ = g, v̂ = g²,
        // so the step is lr·g/(|g| + 1e-8).
        let g = 0.5;
        let mut p = vec![1.0];
        let mut st = AdamState::new(&[1]);
        adam_step(&mut [&mut p[..]], &[&[g]], &mut st, 0.001).unwrap();
        let expected = 1.0 - 0.001 * g / (g + 1e-8);
        assert!((p[0] - expected).abs() < 1e-15);
        assert!((st.m[0][0] - 0.05).abs() < 1e-15);
        assert!((st.v[0][0] - 0.00025).abs() < 1e-15);
    }

    #[test]
    fn adam_first_moment_decays() {
        let g = 2.0;
        let mut p = vec![0.0];
        let mut st = AdamState::new(&[1]);
        adam_step(&mut [&mut p[..]], &[&[g]], &mut st, 0.001).unwrap();
        let m1 = st.m[0][0];
        adam_step(&mut [&mut p[..]], &[&[0.0]], &mut st, 0.001).unwrap();
        assert!((st.m[0][0] - 0.9 * m1).abs() < 1e-15);
        assert_eq!(st.step, 2);
    }

    #[test]
    fn adam_rejects_non_finite() {
        let mut p = vec![1.0];
        let mut st = AdamState::new(&[1]);
        assert!(matches!(
            adam_step(&mut [&mut p[..]], &[&[f64::NAN]], &mut st, 0.001),
            Err(Error::NonFiniteGradient { .. })
        ));
        assert_eq!(p, vec![1.0]);
        assert_eq!(st.step, 0);
    }

    #[test]
    fn epsilon_grid_has_eleven_points() {
        let g = grid(0.010, 0.020, 0.001);
        assert_eq!(g.len(), 11);
        assert_eq!(g[0], 0.010);
        assert_eq!(g[5], 0.015);
        assert_eq!(g[10], 0.020);
        assert_eq!(grid(0.015, 0.015, 0.001), vec![0.015]);
    }
}
