//! Scoring and diagnostics: micro-F1, the similarity-margin distribution and
//! the macro-averaged similarity characteristics.

use std::collections::{BTreeMap, HashMap, HashSet};

use ndarray::{s, Array2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::Engine;
use crate::error::{Error, Result};
use crate::lexicon::{Lexicon, Pos, SenseId, SenseRecord, Subset, WordInstance};
use crate::net::SpecializationNet;
use crate::store::EmbeddingTable;
use crate::trainer::sense_rows;

/// One scoring cell. With exactly one prediction per instance, precision,
/// recall and F1 all equal `correct / total`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub correct: usize,
    pub total: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Cell {
    fn from_counts(correct: usize, total: usize) -> Self {
        let f1 = if total == 0 { 0.0 } else { correct as f64 / total as f64 };
        Self {
            correct,
            total,
            precision: f1,
            recall: f1,
            f1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub overall: Cell,
    /// Only instances that carry a subset tag are counted here.
    pub by_subset: BTreeMap<Subset, Cell>,
    pub by_pos: BTreeMap<Pos, Cell>,
}

/// Scores `(instance id, predicted sense)` pairs against gold instances.
///
/// Every gold instance needs exactly one prediction; predictions for unknown
/// instances are rejected.
pub fn micro_f1(predictions: &[(String, SenseId)], gold: &[WordInstance]) -> Result<EvalReport> {
    if gold.is_empty() {
        return Err(Error::Scoring("no gold instances".into()));
    }
    let mut by_id: HashMap<&str, SenseId> = HashMap::with_capacity(predictions.len());
    for (id, s) in predictions {
        if by_id.insert(id, *s).is_some() {
            return Err(Error::Scoring(format!("duplicate prediction for {id}")));
        }
    }
    let mut overall = (0, 0);
    let mut subsets: BTreeMap<Subset, (usize, usize)> = BTreeMap::new();
    let mut pos: BTreeMap<Pos, (usize, usize)> = BTreeMap::new();
    let mut seen = HashSet::with_capacity(gold.len());
    for w in gold {
        if w.gold.is_none() {
            return Err(Error::Scoring(format!("instance {} has no gold senses", w.instance_id)));
        }
        if !seen.insert(w.instance_id.as_str()) {
            return Err(Error::Scoring(format!("duplicate gold instance {}", w.instance_id)));
        }
        let predicted = *by_id
            .get(w.instance_id.as_str())
            .ok_or_else(|| Error::Scoring(format!("missing prediction for {}", w.instance_id)))?;
        let hit = usize::from(w.is_correct(predicted));
        let add = |c: &mut (usize, usize)| {
            c.0 += hit;
            c.1 += 1;
        };
        add(&mut overall);
        if let Some(sub) = w.subset {
            add(subsets.entry(sub).or_default());
        }
        add(pos.entry(w.pos).or_default());
    }
    if let Some((id, _)) = predictions.iter().find(|(id, _)| !seen.contains(id.as_str())) {
        return Err(Error::Scoring(format!("prediction for unknown instance {id}")));
    }
    fn cells<K: Ord>(m: BTreeMap<K, (usize, usize)>) -> BTreeMap<K, Cell> {
        m.into_iter().map(|(k, (c, t))| (k, Cell::from_counts(c, t))).collect()
    }
    Ok(EvalReport {
        overall: Cell::from_counts(overall.0, overall.1),
        by_subset: cells(subsets),
        by_pos: cells(pos),
    })
}

/// Mean and sample standard deviation of one F1 cell across runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spread {
    pub mean: f64,
    /// Sample standard deviation (n − 1); zero for a single run.
    pub stddev: f64,
}

impl Spread {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let stddev = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Self { mean, stddev }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub runs: usize,
    pub overall: Spread,
    pub by_subset: BTreeMap<Subset, Spread>,
    pub by_pos: BTreeMap<Pos, Spread>,
}

/// Per-cell F1 spread over runs. Every report must have the same cells.
pub fn aggregate(reports: &[EvalReport]) -> Result<Aggregate> {
    let first = reports.first().ok_or_else(|| Error::Scoring("no reports to aggregate".into()))?;
    fn spread<K: Ord + Copy + std::fmt::Debug>(
        reports: &[EvalReport],
        first: &BTreeMap<K, Cell>,
        cells: impl Fn(&EvalReport) -> &BTreeMap<K, Cell>,
    ) -> Result<BTreeMap<K, Spread>> {
        let keys: Vec<K> = first.keys().copied().collect();
        let mut out = BTreeMap::new();
        for r in reports {
            if !cells(r).keys().copied().eq(keys.iter().copied()) {
                return Err(Error::Scoring("reports have different breakdown cells".into()));
            }
        }
        for k in keys {
            let values: Vec<f64> = reports.iter().map(|r| cells(r)[&k].f1).collect();
            out.insert(k, Spread::of(&values));
        }
        Ok(out)
    }
    let overall: Vec<f64> = reports.iter().map(|r| r.overall.f1).collect();
    Ok(Aggregate {
        runs: reports.len(),
        overall: Spread::of(&overall),
        by_subset: spread(reports, &first.by_subset, |r| &r.by_subset)?,
        by_pos: spread(reports, &first.by_pos, |r| &r.by_pos)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceMargin {
    pub instance_id: String,
    pub margin: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CdfPoint {
    pub threshold: f64,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginDistribution {
    pub margins: Vec<InstanceMargin>,
    /// Instances with no non-gold candidate; they are left out of the CDF.
    pub skipped: Vec<String>,
    /// Fraction of margins at or below each threshold. A final point at the
    /// largest margin is appended when needed so the curve ends at 1.
    pub cdf: Vec<CdfPoint>,
}

/// `δρ = max over non-gold candidates of ρ − max over gold senses of ρ`,
/// so a correctly ranked instance has a negative margin.
pub fn instance_margin(engine: &Engine<'_>, w: &WordInstance) -> Result<Option<f64>> {
    let gold = w
        .gold
        .as_ref()
        .ok_or_else(|| Error::Scoring(format!("instance {} has no gold senses", w.instance_id)))?;
    let others: Vec<SenseId> = w.candidates.iter().copied().filter(|s| !gold.contains(s)).collect();
    if others.is_empty() {
        return Ok(None);
    }
    let context = engine.context_vector(&w.instance_id)?;
    let best = |ids: &[SenseId]| -> Result<f64> {
        ids.iter()
            .map(|&s| engine.similarity(&context, s))
            .try_fold(f64::NEG_INFINITY, |m, c| Ok(m.max(c?)))
    };
    Ok(Some(best(&others)? - best(gold)?))
}

pub fn margin_distribution(engine: &Engine<'_>, gold: &[WordInstance], thresholds: &[f64]) -> Result<MarginDistribution> {
    let results: Vec<Result<Option<f64>>> = gold.par_iter().map(|w| instance_margin(engine, w)).collect();
    let mut margins = Vec::new();
    let mut skipped = Vec::new();
    for (w, r) in gold.iter().zip(results) {
        match r? {
            Some(m) => margins.push(InstanceMargin {
                instance_id: w.instance_id.clone(),
                margin: m,
            }),
            None => skipped.push(w.instance_id.clone()),
        }
    }
    if !skipped.is_empty() {
        log::info!("{} instances without a non-gold candidate skipped", skipped.len());
    }
    let cdf = cdf(&margins.iter().map(|m| m.margin).collect::<Vec<_>>(), thresholds);
    Ok(MarginDistribution { margins, skipped, cdf })
}

fn cdf(values: &[f64], thresholds: &[f64]) -> Vec<CdfPoint> {
    if values.is_empty() {
        return Vec::new();
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut ts: Vec<f64> = thresholds.iter().copied().filter(|t| t.is_finite()).collect();
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    let max = *sorted.last().unwrap();
    if ts.last().is_none_or(|&t| t < max) {
        ts.push(max);
    }
    let n = sorted.len() as f64;
    ts.into_iter()
        .map(|t| CdfPoint {
            threshold: t,
            fraction: sorted.partition_point(|&v| v <= t) as f64 / n,
        })
        .collect()
}

/// Thresholds from −0.2 to 0.2 in steps of 0.01.
pub fn default_thresholds() -> Vec<f64> {
    (-20..=20).map(|i| f64::from(i) / 100.0).collect()
}

/// CSV rendering of a CDF, header `threshold,cdf`.
pub fn cdf_csv(cdf: &[CdfPoint]) -> String {
    let mut out = String::from("threshold,cdf\n");
    for p in cdf {
        out.push_str(&format!("{},{}\n", p.threshold, p.fraction));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityCharacteristics {
    pub related: f64,
    pub unrelated: f64,
    pub different: f64,
    pub ground_truth: f64,
    pub delta_related: f64,
    pub delta_unrelated: f64,
    pub delta_different: f64,
    pub delta_mean: f64,
    /// Batch size and seed used to draw the unrelated-sense batches.
    pub batch_size: usize,
    pub seed: u64,
}

impl SimilarityCharacteristics {
    pub fn from_means(related: f64, unrelated: f64, different: f64, ground_truth: f64, batch_size: usize, seed: u64) -> Self {
        let delta_related = related - ground_truth;
        let delta_unrelated = unrelated - ground_truth;
        let delta_different = different - ground_truth;
        Self {
            related,
            unrelated,
            different,
            ground_truth,
            delta_related,
            delta_unrelated,
            delta_different,
            delta_mean: (delta_related - delta_unrelated - delta_different) / 3.0,
            batch_size,
            seed,
        }
    }
}

/// Unit-normalized specialized vectors, one row per lexicon sense.
fn normalized_senses(net: &SpecializationNet, senses: &EmbeddingTable, lexicon: &Lexicon) -> Result<Array2<f32>> {
    let rows = sense_rows(lexicon, senses)?;
    let dim = senses.dim();
    let unit: Vec<Result<Vec<f32>>> = rows
        .par_iter()
        .map(|&r| {
            let v = net.specialize_sense(&senses.row_f64(r))?;
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            Ok(v.iter().map(|x| (x / n) as f32).collect())
        })
        .collect();
    let mut data = Vec::with_capacity(rows.len() * dim);
    for r in unit {
        data.extend(r?);
    }
    Ok(Array2::from_shape_vec((rows.len(), dim), data).expect("row-major shape"))
}

fn dot(a: ndarray::ArrayView1<f32>, b: ndarray::ArrayView1<f32>) -> f64 {
    a.iter().zip(b.iter()).map(|(&x, &y)| f64::from(x) * f64::from(y)).sum()
}

fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = values.into_iter().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

/// Mean over senses with a nonempty set of the mean cosine to that set.
fn set_mean(unit: &Array2<f32>, lexicon: &Lexicon, set: fn(&SenseRecord) -> &[SenseId]) -> f64 {
    let per: Vec<Option<f64>> = (0..lexicon.len())
        .into_par_iter()
        .map(|i| {
            let members = set(lexicon.sense(SenseId(i)));
            (!members.is_empty()).then(|| mean(members.iter().map(|s| dot(unit.row(i), unit.row(s.0)))))
        })
        .collect();
    mean(per.into_iter().flatten())
}

/// Mean cosine between each sense and the rest of its batch, over seeded
/// batches of `batch_size` drawn from a shuffle of the whole inventory.
fn unrelated_mean(unit: &Array2<f32>, batch_size: usize, seed: u64) -> f64 {
    let mut order: Vec<usize> = (0..unit.nrows()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let per: Vec<Vec<f64>> = order
        .par_chunks(batch_size.max(1))
        .filter(|c| c.len() > 1)
        .map(|chunk| {
            let block = unit.select(ndarray::Axis(0), chunk);
            let gram = block.dot(&block.t());
            let k = chunk.len();
            (0..k)
                .map(|i| {
                    let row = gram.slice(s![i, ..]);
                    let sum: f64 = row.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, &v)| f64::from(v)).sum();
                    sum / (k - 1) as f64
                })
                .collect()
        })
        .collect();
    mean(per.into_iter().flatten())
}

/// Similarity characteristics of (possibly identity-) specialized
/// embeddings. Means over empty sets are skipped; a sense with no related
/// senses does not count towards the related mean.
pub fn similarity_characteristics(
    net: &SpecializationNet,
    senses: &EmbeddingTable,
    contexts: &EmbeddingTable,
    lexicon: &Lexicon,
    gold: &[WordInstance],
    batch_size: usize,
    seed: u64,
) -> Result<SimilarityCharacteristics> {
    net.ensure_dim(senses.dim())?;
    net.ensure_dim(contexts.dim())?;
    let unit = normalized_senses(net, senses, lexicon)?;
    let related = set_mean(&unit, lexicon, |r| &r.related);
    let different = set_mean(&unit, lexicon, |r| &r.different);
    let unrelated = unrelated_mean(&unit, batch_size, seed);

    let per_word: Vec<Result<Option<f64>>> = gold
        .par_iter()
        .map(|w| {
            let Some(g) = w.gold.as_ref().filter(|g| !g.is_empty()) else {
                return Ok(None);
            };
            let raw = contexts.lookup(&w.instance_id)?;
            let raw: Vec<f64> = raw.values.iter().map(|&v| f64::from(v)).collect();
            let v = net.specialize_context(&raw)?;
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            Ok(Some(mean(g.iter().map(|s| {
                unit.row(s.0).iter().zip(&v).map(|(&e, &x)| f64::from(e) * x).sum::<f64>() / n
            }))))
        })
        .collect();
    let mut words = Vec::with_capacity(per_word.len());
    for r in per_word {
        words.extend(r?);
    }
    let ground_truth = mean(words);
    Ok(SimilarityCharacteristics::from_means(
        related,
        unrelated,
        different,
        ground_truth,
        batch_size,
        seed,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inst(id: &str, pos: Pos, subset: Option<Subset>, gold: &[usize]) -> WordInstance {
        WordInstance {
            instance_id: id.into(),
            lemma: "x".into(),
            pos,
            candidates: vec![SenseId(0), SenseId(1), SenseId(2)],
            gold: Some(gold.iter().map(|&g| SenseId(g)).collect()),
            subset,
        }
    }

    fn preds(p: &[(&str, usize)]) -> Vec<(String, SenseId)> {
        p.iter().map(|(i, s)| (i.to_string(), SenseId(*s))).collect()
    }

    #[test]
    fn three_of_four() {
        let gold = vec![
            inst("a", Pos::Noun, Some(Subset::Se2), &[0]),
            inst("b", Pos::Noun, Some(Subset::Se2), &[1]),
            inst("c", Pos::Verb, Some(Subset::Se2), &[2]),
            inst("d", Pos::Verb, Some(Subset::Se2), &[0]),
        ];
        let r = micro_f1(&preds(&[("a", 0), ("b", 1), ("c", 2), ("d", 1)]), &gold).unwrap();
        assert_eq!(r.overall.f1, 0.75);
        assert_eq!(r.overall.precision, r.overall.recall);
        assert_eq!(r.by_subset[&Subset::Se2].f1, 0.75);
        assert_eq!(r.by_pos[&Pos::Noun].f1, 1.0);
        assert_eq!(r.by_pos[&Pos::Verb].f1, 0.5);
    }

    #[test]
    fn either_gold_key_counts() {
        let gold = vec![inst("a", Pos::Noun, None, &[0, 2])];
        assert_eq!(micro_f1(&preds(&[("a", 2)]), &gold).unwrap().overall.f1, 1.0);
        assert_eq!(micro_f1(&preds(&[("a", 1)]), &gold).unwrap().overall.f1, 0.0);
    }

    #[test]
    fn coverage_errors() {
        let gold = vec![inst("a", Pos::Noun, None, &[0]), inst("b", Pos::Noun, None, &[0])];
        assert!(micro_f1(&preds(&[("a", 0)]), &gold).is_err());
        assert!(micro_f1(&preds(&[("a", 0), ("b", 0), ("c", 0)]), &gold).is_err());
        assert!(micro_f1(&preds(&[("a", 0), ("a", 0), ("b", 0)]), &gold).is_err());
        assert!(micro_f1(&[], &[]).is_err());
    }

    #[test]
    fn aggregate_spread() {
        let gold = vec![inst("a", Pos::Noun, Some(Subset::Se2), &[0]), inst("b", Pos::Verb, Some(Subset::Se3), &[0])];
        let r1 = micro_f1(&preds(&[("a", 0), ("b", 0)]), &gold).unwrap();
        let r2 = micro_f1(&preds(&[("a", 0), ("b", 1)]), &gold).unwrap();
        let same = aggregate(&[r1.clone(), r1.clone(), r1.clone(), r1.clone(), r1.clone()]).unwrap();
        assert_eq!(same.overall, Spread { mean: 1.0, stddev: 0.0 });
        assert!(same.by_subset.values().all(|s| s.stddev == 0.0));
        let mixed = aggregate(&[r1.clone(), r2]).unwrap();
        assert_eq!(mixed.overall.mean, 0.75);
        // Sample stddev of {1.0, 0.5}.
        assert!((mixed.overall.stddev - 0.125f64.sqrt()).abs() < 1e-12);
        assert_eq!(mixed.by_pos[&Pos::Verb].mean, 0.5);
        assert_eq!(aggregate(&[r1]).unwrap().overall.stddev, 0.0);
        assert!(aggregate(&[]).is_err());
    }

    #[test]
    fn cdf_ends_at_one() {
        let c = cdf(&[0.03, -0.1, 0.2], &[0.0, 0.05, -0.5]);
        let fr: Vec<f64> = c.iter().map(|p| p.fraction).collect();
        assert_eq!(fr, vec![0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0]);
        assert_eq!(c.last().unwrap().threshold, 0.2);
        assert!(cdf(&[], &[0.0]).is_empty());
    }

    #[test]
    fn delta_algebra() {
        let c = SimilarityCharacteristics::from_means(0.91, 0.77, 0.87, 0.64, 256, 0);
        let recomputed = ((0.91 - 0.64) - (0.77 - 0.64) - (0.87 - 0.64)) / 3.0;
        assert!((c.delta_mean - recomputed).abs() < 1e-12);
        // The identity-embedding row of the reported table.
        assert!((c.delta_mean - -0.030).abs() < 0.001);
    }
}
