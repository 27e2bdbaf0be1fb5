//! Training objectives and minibatch sampling.
//!
//! * Attract-Repel: for each anchor `s` in a sense minibatch, a softmax
//!   cross-entropy over `β·cos(e_s, ·)` that favours one related sense
//!   against the rest of the batch (unrelated senses) and up to five other
//!   senses of the same lemma (hard negatives).
//! * Self-training: `Σ_w (1 − max_{s ∈ S_w} cos(v_w, e_s))`, pulling each
//!   context towards its current nearest candidate.
//!
//! Losses are sums over the batch. Gradients are returned with respect to
//! the specialized embeddings and are pushed through the residual maps by
//! the trainer.

use std::collections::HashMap;

use ndarray::{Array2, ArrayView1, ArrayView2, ArrayViewMut1};
use rand::seq::{index, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::Toggles;
use crate::error::{Error, Result};
use crate::lexicon::{Lexicon, SenseId, WordInstance};

/// Cosine similarity clamped to `[−1, 1]`.
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape {
            expected: a.len(),
            actual: b.len(),
        });
    }
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroNormInput);
    }
    Ok((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0))
}

/// Adds `weight · ∂cos(a, b)/∂a` into `ga` and `weight · ∂cos(a, b)/∂b`
/// into `gb`, given the norms of `a` and `b`.
fn accumulate_cosine_grad(
    a: ArrayView1<f64>,
    b: ArrayView1<f64>,
    na: f64,
    nb: f64,
    weight: f64,
    ga: &mut ArrayViewMut1<f64>,
    gb: &mut ArrayViewMut1<f64>,
) {
    let c = a.dot(&b) / (na * nb);
    // ∂cos/∂a = b/(|a||b|) − cos·a/|a|²
    ga.scaled_add(weight / (na * nb), &b);
    ga.scaled_add(-weight * c / (na * na), &a);
    gb.scaled_add(weight / (na * nb), &a);
    gb.scaled_add(-weight * c / (nb * nb), &b);
}

fn row_norms(m: &ArrayView2<f64>) -> Result<Vec<f64>> {
    m.rows()
        .into_iter()
        .map(|r| {
            let n = r.dot(&r).sqrt();
            if n == 0.0 {
                Err(Error::ZeroNormInput)
            } else {
                Ok(n)
            }
        })
        .collect()
}

/// Runs `f` on rows `i` and `j` of `grad`; when `i == j` both updates land
/// on the same row.
fn add_pair(grad: &mut Array2<f64>, i: usize, j: usize, f: impl FnOnce(&mut ArrayViewMut1<f64>, &mut ArrayViewMut1<f64>)) {
    if i == j {
        let mut tmp = Array2::<f64>::zeros((1, grad.ncols()));
        {
            let mut t = tmp.row_mut(0);
            let mut r = grad.row_mut(i);
            f(&mut r, &mut t);
        }
        let t = tmp.row(0).to_owned();
        grad.row_mut(i).scaled_add(1.0, &t);
    } else {
        let (mut a, mut b) = grad.multi_slice_mut((ndarray::s![i, ..], ndarray::s![j, ..]));
        f(&mut a, &mut b);
    }
}

/// Specialized sense embeddings for a set of senses, one row each.
#[derive(Debug, Clone)]
pub struct SenseMatrix {
    ids: Vec<SenseId>,
    index: HashMap<SenseId, usize>,
    pub vectors: Array2<f64>,
}

impl SenseMatrix {
    pub fn new(ids: Vec<SenseId>, vectors: Array2<f64>) -> Result<Self> {
        if ids.len() != vectors.nrows() {
            return Err(Error::Shape {
                expected: ids.len(),
                actual: vectors.nrows(),
            });
        }
        let index = ids.iter().enumerate().map(|(i, &s)| (s, i)).collect();
        Ok(Self { ids, index, vectors })
    }

    pub fn ids(&self) -> &[SenseId] {
        &self.ids
    }

    pub fn row(&self, id: SenseId) -> Result<usize> {
        self.index
            .get(&id)
            .copied()
            .ok_or_else(|| Error::UnknownSense(format!("sense #{} has no specialized vector in this batch", id.0)))
    }
}

/// A minibatch of anchor senses with their sampled positives and hard
/// negatives. The unrelated set of an anchor is the rest of the batch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SenseBatch {
    pub anchors: Vec<SenseId>,
    /// `None` for anchors without related senses; they take no loss term
    /// but still act as unrelated negatives for the others.
    pub positives: Vec<Option<SenseId>>,
    pub hard_negatives: Vec<Vec<SenseId>>,
}

impl SenseBatch {
    /// Every sense referenced by the batch, in first-appearance order.
    pub fn senses(&self) -> Vec<SenseId> {
        let mut seen = std::collections::HashSet::new();
        self.anchors
            .iter()
            .chain(self.positives.iter().flatten())
            .chain(self.hard_negatives.iter().flatten())
            .copied()
            .filter(|s| seen.insert(*s))
            .collect()
    }
}

/// Walks a per-epoch permutation of the whole inventory.
#[derive(Debug, Clone)]
pub struct SenseSampler {
    order: Vec<SenseId>,
    cursor: usize,
    epoch: usize,
    max_hard_negatives: usize,
}

impl SenseSampler {
    pub fn new(lex: &Lexicon, max_hard_negatives: usize) -> Self {
        Self {
            order: lex.ids().collect(),
            cursor: 0,
            epoch: 0,
            max_hard_negatives,
        }
    }

    /// Reshuffles the inventory and rewinds the cursor.
    pub fn start_epoch(&mut self, rng: &mut impl Rng) {
        self.order.sort_unstable();
        self.order.shuffle(rng);
        self.cursor = 0;
        self.epoch += 1;
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn remaining(&self) -> usize {
        self.order.len() - self.cursor
    }

    /// Next batch of up to `batch_size` anchors, or `None` once the epoch
    /// has been traversed.
    pub fn next_batch(&mut self, lex: &Lexicon, rng: &mut impl Rng, batch_size: usize) -> Option<SenseBatch> {
        if self.cursor >= self.order.len() {
            return None;
        }
        let end = (self.cursor + batch_size).min(self.order.len());
        let anchors = self.order[self.cursor..end].to_vec();
        self.cursor = end;
        let mut positives = Vec::with_capacity(anchors.len());
        let mut hard_negatives = Vec::with_capacity(anchors.len());
        for &a in &anchors {
            let rec = lex.sense(a);
            positives.push(rec.related.choose(rng).copied());
            let k = rec.different.len().min(self.max_hard_negatives);
            let picks = index::sample(rng, rec.different.len(), k);
            hard_negatives.push(picks.iter().map(|i| rec.different[i]).collect());
        }
        Some(SenseBatch {
            anchors,
            positives,
            hard_negatives,
        })
    }
}

/// Draws word minibatches from a fixed (optionally subsampled) training
/// set, reshuffling whenever the current permutation runs out.
#[derive(Debug, Clone)]
pub struct WordSampler {
    pool: Vec<usize>,
    order: Vec<usize>,
    cursor: usize,
}

impl WordSampler {
    /// Keeps `round(fraction · n)` instances (at least one) chosen
    /// uniformly with `rng`; the choice is fixed for the sampler's lifetime.
    pub fn new(n_instances: usize, fraction: f64, rng: &mut impl Rng) -> Self {
        let pool = if fraction >= 1.0 || n_instances == 0 {
            (0..n_instances).collect()
        } else {
            let k = ((fraction * n_instances as f64).round() as usize).clamp(1, n_instances);
            let mut p = index::sample(rng, n_instances, k).into_vec();
            p.sort_unstable();
            p
        };
        Self {
            order: pool.clone(),
            cursor: pool.len(),
            pool,
        }
    }

    pub fn pool_size(&self) -> usize {
        self.pool.len()
    }

    /// Discards whatever is left of the current permutation.
    pub fn reset(&mut self) {
        self.cursor = self.order.len();
    }

    pub fn next_batch(&mut self, rng: &mut impl Rng, batch_size: usize) -> Vec<usize> {
        if self.pool.is_empty() {
            return Vec::new();
        }
        if self.cursor >= self.order.len() {
            self.order.copy_from_slice(&self.pool);
            self.order.shuffle(rng);
            self.cursor = 0;
        }
        let end = (self.cursor + batch_size).min(self.order.len());
        let out = self.order[self.cursor..end].to_vec();
        self.cursor = end;
        out
    }
}

/// Attract-Repel loss value with gradients.
#[derive(Debug, Clone)]
pub struct ArOutput {
    pub loss: f64,
    /// Per anchor: `(loss term, softmax size)`; `None` when skipped.
    pub per_anchor: Vec<Option<(f64, usize)>>,
    /// Gradient with respect to the rows of the [`SenseMatrix`].
    pub grad: Array2<f64>,
}

/// Softmax cross-entropy of `β·cos` logits over
/// `{s_p} ∪ S^U_s ∪ S̃^N_s` against the positive, summed over anchors.
pub fn attract_repel_loss(batch: &SenseBatch, senses: &SenseMatrix, beta: f64, toggles: &Toggles) -> Result<ArOutput> {
    let emb = senses.vectors.view();
    let norms = row_norms(&emb)?;
    let mut grad = Array2::zeros(emb.raw_dim());
    let mut total = 0.0;
    let mut per_anchor = Vec::with_capacity(batch.anchors.len());

    let anchor_rows: Vec<usize> = batch.anchors.iter().map(|&a| senses.row(a)).collect::<Result<_>>()?;
    for (k, &a) in batch.anchors.iter().enumerate() {
        let Some(p) = batch.positives[k] else {
            per_anchor.push(None);
            continue;
        };
        let ar = anchor_rows[k];
        // Distinct members of the softmax; the positive is always first.
        let mut members = vec![senses.row(p)?];
        if toggles.repel_unrelated {
            for (j, &other) in batch.anchors.iter().enumerate() {
                if other != a && !members.contains(&anchor_rows[j]) {
                    members.push(anchor_rows[j]);
                }
            }
        }
        if toggles.repel_different {
            for &n in &batch.hard_negatives[k] {
                let r = senses.row(n)?;
                if r != ar && !members.contains(&r) {
                    members.push(r);
                }
            }
        }

        let logits: Vec<f64> = members
            .iter()
            .map(|&m| beta * emb.row(ar).dot(&emb.row(m)) / (norms[ar] * norms[m]))
            .collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let z: f64 = weights.iter().sum();
        // When the positive is the largest logit, ln(1 + rest) keeps the
        // precision that ln(z) loses for a near-saturated softmax.
        let loss = if logits[0] == max {
            weights[1..].iter().sum::<f64>().ln_1p()
        } else {
            z.ln() + max - logits[0]
        };
        total += loss;
        per_anchor.push(Some((loss, members.len())));

        for (idx, &m) in members.iter().enumerate() {
            let softmax = weights[idx] / z;
            let d_logit = softmax - if idx == 0 { 1.0 } else { 0.0 };
            add_pair(&mut grad, ar, m, |ga, gb| {
                accumulate_cosine_grad(emb.row(ar), emb.row(m), norms[ar], norms[m], beta * d_logit, ga, gb)
            });
        }
    }
    Ok(ArOutput {
        loss: total,
        per_anchor,
        grad,
    })
}

/// Self-training loss value with gradients.
#[derive(Debug, Clone)]
pub struct StOutput {
    pub loss: f64,
    /// Index into each word's candidate list of the pseudo label.
    pub chosen: Vec<usize>,
    /// Gradient with respect to the context rows.
    pub grad_contexts: Array2<f64>,
    /// Gradient with respect to the rows of the [`SenseMatrix`].
    pub grad_senses: Array2<f64>,
}

/// `Σ_w (1 − max_s cos(v_w, e_s))`. The subgradient flows through the
/// single maximising candidate, ties going to the earliest in inventory
/// order.
pub fn self_training_loss(contexts: ArrayView2<f64>, candidates: &[&[SenseId]], senses: &SenseMatrix) -> Result<StOutput> {
    if contexts.nrows() != candidates.len() {
        return Err(Error::Shape {
            expected: candidates.len(),
            actual: contexts.nrows(),
        });
    }
    let emb = senses.vectors.view();
    let ctx_norms = row_norms(&contexts)?;
    let sense_norms = row_norms(&emb)?;
    let mut grad_contexts = Array2::zeros(contexts.raw_dim());
    let mut grad_senses = Array2::zeros(emb.raw_dim());
    let mut total = 0.0;
    let mut chosen = Vec::with_capacity(candidates.len());

    for (w, cands) in candidates.iter().enumerate() {
        if cands.is_empty() {
            return Err(Error::NoCandidates(format!("batch word {w}")));
        }
        let mut best = (0usize, f64::NEG_INFINITY, 0usize);
        for (i, &s) in cands.iter().enumerate() {
            let r = senses.row(s)?;
            let c = contexts.row(w).dot(&emb.row(r)) / (ctx_norms[w] * sense_norms[r]);
            if c > best.1 {
                best = (i, c, r);
            }
        }
        let (i, c, r) = best;
        total += 1.0 - c.clamp(-1.0, 1.0);
        chosen.push(i);
        accumulate_cosine_grad(
            contexts.row(w),
            emb.row(r),
            ctx_norms[w],
            sense_norms[r],
            -1.0,
            &mut grad_contexts.row_mut(w),
            &mut grad_senses.row_mut(r),
        );
    }
    Ok(StOutput {
        loss: total,
        chosen,
        grad_contexts,
        grad_senses,
    })
}

/// `L = L^AR + α·L^ST`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossValue {
    pub total: f64,
    pub attract_repel: f64,
    pub self_train: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone)]
pub struct CombinedGradients {
    pub senses: Array2<f64>,
    pub contexts: Option<Array2<f64>>,
}

/// Weighted sum of the two objectives. A disabled objective (passed as
/// `None`) contributes zero to both value and gradient.
pub fn combined_loss(
    ar: Option<&ArOutput>,
    st: Option<&StOutput>,
    alpha: f64,
    sense_shape: (usize, usize),
) -> (LossValue, CombinedGradients) {
    let mut senses = Array2::zeros(sense_shape);
    let mut contexts = None;
    let attract_repel = ar.map_or(0.0, |a| a.loss);
    let self_train = st.map_or(0.0, |s| s.loss);
    if let Some(a) = ar {
        senses += &a.grad;
    }
    if let Some(s) = st {
        senses.scaled_add(alpha, &s.grad_senses);
        contexts = Some(&s.grad_contexts * alpha);
    }
    (
        LossValue {
            total: attract_repel + alpha * self_train,
            attract_repel,
            self_train,
            alpha,
        },
        CombinedGradients { senses, contexts },
    )
}

/// Candidate lists of a word minibatch.
pub fn candidate_lists<'a>(instances: &'a [WordInstance], batch: &[usize]) -> Vec<&'a [SenseId]> {
    batch.iter().map(|&i| instances[i].candidates.as_slice()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use crate::lexicon::{Dataset, LexiconRecord, Pos};

    fn ids(n: usize) -> Vec<SenseId> {
        (0..n).map(SenseId).collect()
    }

    #[test]
    fn cosine_examples() {
        assert!((cosine(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        // 32 / (√14 · √77)
        let expected = 32.0 / (14f64.sqrt() * 77f64.sqrt());
        let c = cosine(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        assert!((c - expected).abs() < 1e-15);
        assert!((c - 0.974632).abs() < 1e-6);
        assert!(matches!(cosine(&[0.0, 0.0], &[1.0, 0.0]), Err(Error::ZeroNormInput)));
    }

    #[test]
    fn ar_loss_near_zero_when_positive_aligned() {
        // Anchor and positive identical, anchor orthogonal to the K = 2 others.
        let m = SenseMatrix::new(ids(4), array![[1.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]).unwrap();
        let batch = SenseBatch {
            anchors: vec![SenseId(0), SenseId(2), SenseId(3)],
            positives: vec![Some(SenseId(1)), None, None],
            hard_negatives: vec![vec![], vec![], vec![]],
        };
        let out = attract_repel_loss(&batch, &m, 64.0, &Toggles::default()).unwrap();
        let expected = (1.0 + 2.0 * (-64f64).exp()).ln();
        assert!((out.loss - expected).abs() < 1e-15);
        assert!(out.loss < 1e-26);
        assert_eq!(out.per_anchor[1], None);
    }

    #[test]
    fn ar_loss_finite_at_extremes() {
        let m = SenseMatrix::new(ids(3), array![[1.0, 0.0], [-1.0, 0.0], [1.0, 0.0]]).unwrap();
        let batch = SenseBatch {
            anchors: vec![SenseId(0), SenseId(2)],
            positives: vec![Some(SenseId(1)), Some(SenseId(1))],
            hard_negatives: vec![vec![], vec![]],
        };
        let out = attract_repel_loss(&batch, &m, 64.0, &Toggles::default()).unwrap();
        assert!(out.loss.is_finite());
        assert!((out.loss - 2.0 * (128.0 + (1.0 + (-128f64).exp()).ln())).abs() < 1e-9);
    }

    #[test]
    fn ablation_toggles_shrink_softmax() {
        let m = SenseMatrix::new(ids(5), Array2::from_shape_fn((5, 3), |(i, j)| 1.0 + (i * 3 + j) as f64 * 0.1)).unwrap();
        let batch = SenseBatch {
            anchors: vec![SenseId(0), SenseId(1), SenseId(2)],
            positives: vec![Some(SenseId(3)), None, None],
            hard_negatives: vec![vec![SenseId(4)], vec![], vec![]],
        };
        let size = |t: Toggles| attract_repel_loss(&batch, &m, 64.0, &t).unwrap().per_anchor[0].unwrap().1;
        assert_eq!(size(Toggles::default()), 4);
        assert_eq!(size(Toggles { repel_unrelated: false, ..Toggles::default() }), 2);
        assert_eq!(size(Toggles { repel_different: false, ..Toggles::default() }), 3);
        assert_eq!(
            size(Toggles {
                repel_unrelated: false,
                repel_different: false,
                ..Toggles::default()
            }),
            1
        );
    }

    #[test]
    fn st_loss_examples() {
        let m = SenseMatrix::new(ids(3), array![[1.0, 0.0], [0.6, 0.8], [0.0, 1.0]]).unwrap();
        // Context equal to a candidate contributes 0.
        let out = self_training_loss(array![[2.0, 0.0]].view(), &[&[SenseId(0), SenseId(2)]], &m).unwrap();
        assert!(out.loss.abs() < 1e-15);
        // Single candidate with cosine 0.6 contributes 0.4.
        let out = self_training_loss(array![[1.0, 0.0]].view(), &[&[SenseId(1)]], &m).unwrap();
        assert!((out.loss - 0.4).abs() < 1e-15);
        // Max cosines 0.9 and 0.7 → 0.4 in total.
        let c = |t: f64| [t, (1.0 - t * t).sqrt()];
        let (a, b) = (c(0.9), c(0.7));
        let ctx = array![[a[0], a[1]], [b[0], b[1]]];
        let cands: [&[SenseId]; 2] = [&[SenseId(0), SenseId(2)], &[SenseId(0)]];
        let out = self_training_loss(ctx.view(), &cands, &m).unwrap();
        let brute = (1.0 - 0.9f64.max(a[1])) + (1.0 - 0.7);
        assert!((out.loss - brute).abs() < 1e-12);
        assert!((out.loss - 0.4).abs() < 1e-12);
    }

    #[test]
    fn st_ties_go_to_inventory_order() {
        let m = SenseMatrix::new(ids(2), array![[1.0, 1.0], [1.0, 1.0]]).unwrap();
        let out = self_training_loss(array![[1.0, 0.0]].view(), &[&[SenseId(1), SenseId(0)]], &m).unwrap();
        assert_eq!(out.chosen, vec![0]);
        assert!(out.grad_senses.row(1).iter().any(|&v| v != 0.0));
        assert!(out.grad_senses.row(0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn st_rejects_empty_candidates() {
        let m = SenseMatrix::new(ids(1), array![[1.0, 0.0]]).unwrap();
        assert!(matches!(
            self_training_loss(array![[1.0, 0.0]].view(), &[&[]], &m),
            Err(Error::NoCandidates(_))
        ));
    }

    #[test]
    fn combined_weighting() {
        let ar = ArOutput {
            loss: 2.0,
            per_anchor: vec![],
            grad: array![[1.0, 1.0]],
        };
        let st = StOutput {
            loss: 1.5,
            chosen: vec![],
            grad_contexts: array![[2.0, 0.0]],
            grad_senses: array![[10.0, 0.0]],
        };
        let (v, g) = combined_loss(Some(&ar), Some(&st), 0.2, (1, 2));
        assert!((v.total - 2.3).abs() < 1e-15);
        assert_eq!(g.senses, array![[3.0, 1.0]]);
        assert_eq!(g.contexts.unwrap(), array![[0.4, 0.0]]);
        let (v, _) = combined_loss(Some(&ar), Some(&st), 0.0, (1, 2));
        assert_eq!(v.total, 2.0);
        let (v, g) = combined_loss(Some(&ar), None, 0.2, (1, 2));
        assert_eq!(v.total, 2.0);
        assert!(g.contexts.is_none());
    }

    fn sampling_lexicon() -> Lexicon {
        let mut recs = Vec::new();
        // "bank" has ten senses, so each has nine different senses.
        for i in 0..10 {
            recs.push(LexiconRecord::Sense {
                sense_key: format!("bank%{i}"),
                lemma: "bank".into(),
                pos: Pos::Noun,
                synset: format!("bank.{i}"),
                related: vec![format!("rel%{i}")],
                different: (0..10).filter(|&j| j != i).map(|j| format!("bank%{j}")).collect(),
                csi: vec![],
            });
            recs.push(LexiconRecord::Sense {
                sense_key: format!("rel%{i}"),
                lemma: format!("rel{i}"),
                pos: Pos::Noun,
                synset: format!("rel.{i}"),
                related: vec![],
                different: vec![],
                csi: vec![],
            });
            recs.push(LexiconRecord::Entry {
                lemma: format!("rel{i}"),
                pos: Pos::Noun,
                senses: vec![format!("rel%{i}")],
            });
        }
        recs.push(LexiconRecord::Sense {
            sense_key: "pair%1".into(),
            lemma: "pair".into(),
            pos: Pos::Verb,
            synset: "p1".into(),
            related: vec![],
            different: vec!["pair%2".into()],
            csi: vec![],
        });
        recs.push(LexiconRecord::Sense {
            sense_key: "pair%2".into(),
            lemma: "pair".into(),
            pos: Pos::Verb,
            synset: "p2".into(),
            related: vec!["pair%1".into()],
            different: vec!["pair%1".into()],
            csi: vec![],
        });
        recs.push(LexiconRecord::Entry {
            lemma: "bank".into(),
            pos: Pos::Noun,
            senses: (0..10).map(|j| format!("bank%{j}")).collect(),
        });
        recs.push(LexiconRecord::Entry {
            lemma: "pair".into(),
            pos: Pos::Verb,
            senses: vec!["pair%1".into(), "pair%2".into()],
        });
        Dataset::from_records(recs.into_iter().enumerate()).unwrap().lexicon
    }

    #[test]
    fn sampler_rules() {
        let lex = sampling_lexicon();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut sampler = SenseSampler::new(&lex, 5);
        sampler.start_epoch(&mut rng);
        let mut seen = Vec::new();
        while let Some(b) = sampler.next_batch(&lex, &mut rng, 7) {
            for (k, &a) in b.anchors.iter().enumerate() {
                let rec = lex.sense(a);
                match b.positives[k] {
                    Some(p) => assert!(rec.related.contains(&p)),
                    None => assert!(rec.related.is_empty()),
                }
                let negs = &b.hard_negatives[k];
                assert_eq!(negs.len(), rec.different.len().min(5));
                assert!(negs.iter().all(|n| rec.different.contains(n)));
                let mut d = negs.clone();
                d.sort();
                d.dedup();
                assert_eq!(d.len(), negs.len());
                if lex.key(a) == "pair%2" {
                    assert_eq!(negs, &vec![lex.id_of("pair%1").unwrap()]);
                }
                if lex.key(a).starts_with("bank") {
                    assert_eq!(negs.len(), 5);
                }
            }
            seen.extend(b.anchors);
        }
        seen.sort();
        assert_eq!(seen, lex.ids().collect::<Vec<_>>());
    }

    #[test]
    fn sampler_is_seeded() {
        let lex = sampling_lexicon();
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut s = SenseSampler::new(&lex, 5);
            let mut out = Vec::new();
            for _ in 0..2 {
                s.start_epoch(&mut rng);
                while let Some(b) = s.next_batch(&lex, &mut rng, 4) {
                    out.push(b);
                }
            }
            out
        };
        assert_eq!(run(1), run(1));
        assert_ne!(run(1), run(2));
    }

    #[test]
    fn word_sampler_subsamples_and_cycles() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut s = WordSampler::new(226_036, 0.6, &mut rng);
        assert_eq!(s.pool_size(), 135_622);
        let b = s.next_batch(&mut rng, 256);
        assert_eq!(b.len(), 256);

        let mut s = WordSampler::new(5, 1.0, &mut rng);
        let a = s.next_batch(&mut rng, 3);
        let b = s.next_batch(&mut rng, 3);
        assert_eq!((a.len(), b.len()), (3, 2));
        let mut all: Vec<_> = a.iter().chain(&b).copied().collect();
        all.sort();
        assert_eq!(all, vec![0, 1, 2, 3, 4]);
        assert_eq!(s.next_batch(&mut rng, 3).len(), 3);
        s.reset();
        assert_eq!(s.next_batch(&mut rng, 10).len(), 5);
    }
}
