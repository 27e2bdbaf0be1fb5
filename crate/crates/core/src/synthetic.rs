//! Seeded synthetic universes: clustered sense embeddings, two-sense lemmas
//! and context vectors whose gold sense is only the second-nearest
//! candidate. Used for the bundled toy data and for recovery tests.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::lexicon::{Dataset, LexiconRecord, Pos, Split, Subset};
use crate::objectives::cosine;
use crate::store::EmbeddingTable;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub dim: usize,
    pub clusters: usize,
    pub senses_per_cluster: usize,
    /// Weight of the direction shared by all clusters; higher values make
    /// unrelated senses more similar.
    pub shared: f64,
    /// Scale of the per-sense noise around the cluster centre.
    pub sense_noise: f64,
    /// Scale of each sense's component along the context offset direction.
    pub sense_offset: f64,
    /// Scale of the per-context noise.
    pub context_noise: f64,
    /// Weight of the offset direction common to every context.
    pub context_offset: f64,
    pub sense_norm: (f64, f64),
    pub context_norm: (f64, f64),
    pub train_per_lemma: usize,
    pub eval_instances: usize,
    /// Fraction of eval contexts pushed along the context offset; the rest
    /// are pushed towards the wrong sense vector.
    pub offset_fraction: f64,
    /// Upper bound of the wrong-minus-gold cosine margin of eval instances.
    pub max_margin: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            dim: 16,
            clusters: 8,
            senses_per_cluster: 5,
            shared: 1.83,
            sense_noise: 0.1,
            sense_offset: 0.15,
            context_noise: 0.25,
            context_offset: 0.5,
            sense_norm: (20.0, 40.0),
            context_norm: (20.0, 40.0),
            train_per_lemma: 20,
            eval_instances: 120,
            offset_fraction: 0.5,
            max_margin: 0.05,
            seed: 0,
        }
    }
}

/// A generated dataset with its sense and context tables.
#[derive(Debug, Clone)]
pub struct Universe {
    pub dataset: Dataset,
    pub senses: EmbeddingTable,
    pub contexts: EmbeddingTable,
}

impl Universe {
    /// Writes `lexicon.jsonl`, `senses.{vecs,keys}` and `contexts.{vecs,keys}`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.dataset.write(dir.join("lexicon.jsonl"))?;
        self.senses.write(dir.join("senses.vecs"), dir.join("senses.keys"))?;
        self.contexts.write(dir.join("contexts.vecs"), dir.join("contexts.keys"))
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn scaled(v: &[f64], len: f64) -> Vec<f64> {
    let n = norm(v);
    v.iter().map(|x| x * len / n).collect()
}

fn axpy(a: f64, x: &[f64], y: &[f64]) -> Vec<f64> {
    x.iter().zip(y).map(|(x, y)| a * x + y).collect()
}

fn to_f32(v: &[f64]) -> Vec<f64> {
    v.iter().map(|&x| f64::from(x as f32)).collect()
}

/// Margin `cos(v, wrong) − cos(v, gold)` after rounding `v` to f32.
fn margin(v: &[f64], gold: &[f64], wrong: &[f64]) -> Result<f64> {
    let v = to_f32(v);
    Ok(cosine(&v, wrong)? - cosine(&v, gold)?)
}

/// Smallest `t` in `[0, hi]` (up to bisection precision) with
/// `f(t) ≥ target`, given `f(0) < target ≤ f(hi)`.
fn bisect(f: impl Fn(f64) -> Result<f64>, target: f64, mut hi: f64) -> Result<f64> {
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid)? >= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Builds a universe. Senses of cluster `k` attract each other; lemma `j`
/// pairs one sense from cluster `k` with one from cluster `k + clusters/2`.
/// Training contexts sit near their gold cluster plus a common offset.
/// Half of the eval contexts are pushed towards the wrong sense along that
/// offset, the other half directly towards the wrong sense vector, each
/// until the wrong sense leads by a random margin.
pub fn generate(cfg: &SyntheticConfig) -> Result<Universe> {
    if cfg.clusters < 2 || !cfg.clusters.is_multiple_of(2) || cfg.senses_per_cluster == 0 || cfg.dim < 4 {
        return Err(Error::Config("synthetic universe needs an even cluster count ≥ 2 and dim ≥ 4".into()));
    }
    if cfg.max_margin.is_nan() || cfg.max_margin <= 0.0 {
        return Err(Error::Config("max_margin must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let dim = cfg.dim;

    // Layout: cluster structure in the leading coordinates, per-sense
    // noise in the next block, the context offset on the last axis.
    let cluster_dims = dim / 2;
    let noise_range = cluster_dims..dim - 1;
    let mut offset = vec![0.0; dim];
    offset[dim - 1] = 1.0;
    let in_block = |rng: &mut ChaCha8Rng, range: std::ops::Range<usize>, len: f64| {
        let mut v = vec![0.0; dim];
        for i in range {
            v[i] = rng.sample::<f64, _>(StandardNormal);
        }
        scaled(&v, len)
    };
    let shared = in_block(&mut rng, 0..cluster_dims, 1.0);
    let centres: Vec<Vec<f64>> = (0..cfg.clusters)
        .map(|_| {
            let z = in_block(&mut rng, 0..cluster_dims, 1.0);
            scaled(&axpy(cfg.shared, &shared, &z), 1.0)
        })
        .collect();
    let cluster_offset: Vec<f64> = (0..cfg.clusters).map(|_| cfg.sense_offset * rng.gen_range(-1.0..1.0)).collect();

    let key = |k: usize, j: usize| format!("s{k}.{j}");
    let lemma_of = |k: usize, j: usize| format!("w{}_{j}", k % (cfg.clusters / 2));
    let half = cfg.clusters / 2;
    let partner = |k: usize| if k < half { k + half } else { k - half };

    let mut records = Vec::new();
    let mut sense_keys = Vec::new();
    let mut sense_vecs: Vec<Vec<f64>> = Vec::new();
    for k in 0..cfg.clusters {
        for j in 0..cfg.senses_per_cluster {
            let noise = in_block(&mut rng, noise_range.clone(), cfg.sense_noise);
            let dir = axpy(1.0, &centres[k], &noise);
            let dir = axpy(cluster_offset[k], &offset, &dir);
            let len = rng.gen_range(cfg.sense_norm.0..cfg.sense_norm.1);
            sense_vecs.push(to_f32(&scaled(&dir, len)));
            sense_keys.push(key(k, j));
            records.push(LexiconRecord::Sense {
                sense_key: key(k, j),
                lemma: lemma_of(k, j),
                pos: Pos::Noun,
                synset: format!("c{k}.n.{j:02}"),
                related: (0..cfg.senses_per_cluster).filter(|&o| o != j).map(|o| key(k, o)).collect(),
                different: vec![key(partner(k), j)],
                csi: vec![format!("class{k}")],
            });
        }
    }
    for k in 0..half {
        for j in 0..cfg.senses_per_cluster {
            records.push(LexiconRecord::Entry {
                lemma: lemma_of(k, j),
                pos: Pos::Noun,
                senses: vec![key(k, j), key(partner(k), j)],
            });
        }
    }
    let sense_index = |k: usize, j: usize| k * cfg.senses_per_cluster + j;
    let lemmas: Vec<(usize, usize)> = (0..half).flat_map(|k| (0..cfg.senses_per_cluster).map(move |j| (k, j))).collect();

    let mut context_keys = Vec::new();
    let mut context_vecs = Vec::new();
    let context = |rng: &mut ChaCha8Rng, k: usize| {
        let noise = in_block(rng, 0..cluster_dims, cfg.context_noise);
        let dir = axpy(1.0, &centres[k], &noise);
        axpy(cfg.context_offset, &offset, &dir)
    };

    for (li, &(k, j)) in lemmas.iter().enumerate() {
        for t in 0..cfg.train_per_lemma {
            let gk = if rng.gen_bool(0.5) { k } else { partner(k) };
            let v = context(&mut rng, gk);
            let len = rng.gen_range(cfg.context_norm.0..cfg.context_norm.1);
            let id = format!("train.{li}.{t}");
            context_vecs.push(to_f32(&scaled(&v, len)));
            context_keys.push(id.clone());
            records.push(LexiconRecord::Instance {
                id,
                lemma: lemma_of(k, j),
                pos: Pos::Noun,
                split: Split::Train,
                subset: None,
                gold: None,
            });
        }
    }

    let subsets = Subset::ALL;
    let mut made = 0;
    let mut attempts = 0;
    while made < cfg.eval_instances {
        attempts += 1;
        if attempts > 1000 * cfg.eval_instances.max(1) {
            return Err(Error::Config("could not place synthetic eval instances; loosen the noise settings".into()));
        }
        let (k, j) = lemmas[rng.gen_range(0..lemmas.len())];
        let (gk, wk) = if rng.gen_bool(0.5) { (k, partner(k)) } else { (partner(k), k) };
        let gold = &sense_vecs[sense_index(gk, j)];
        let wrong = &sense_vecs[sense_index(wk, j)];
        let base = context(&mut rng, gk);
        // Skewed towards zero: most margins are far below the bound.
        let target = cfg.max_margin * rng.gen_range(0.0f64..1.0).powi(2);
        let along_offset = (made as f64) < cfg.offset_fraction * cfg.eval_instances as f64;
        let push = if along_offset {
            // Only possible when the wrong sense leans further along the offset.
            if wrong[dim - 1] / norm(wrong) <= gold[dim - 1] / norm(gold) {
                continue;
            }
            offset.clone()
        } else {
            scaled(wrong, 1.0)
        };
        let at = |t: f64| axpy(t, &push, &base);
        if margin(&at(0.0), gold, wrong)? >= 0.0 {
            continue;
        }
        let hi = 50.0;
        if margin(&at(hi), gold, wrong)? < target {
            continue;
        }
        let t = bisect(|t| margin(&at(t), gold, wrong), target, hi)?;
        let len = rng.gen_range(cfg.context_norm.0..cfg.context_norm.1);
        let v = to_f32(&scaled(&at(t), len));
        let m = margin(&v, gold, wrong)?;
        if !(m > 0.0 && m <= cfg.max_margin) {
            continue;
        }
        let id = format!("eval.{made}");
        context_vecs.push(v);
        context_keys.push(id.clone());
        records.push(LexiconRecord::Instance {
            id,
            lemma: lemma_of(k, j),
            pos: Pos::Noun,
            split: Split::Eval,
            subset: Some(subsets[made % subsets.len()]),
            gold: Some(vec![key(gk, j)]),
        });
        made += 1;
    }

    let dataset = Dataset::from_records(records.into_iter().enumerate().map(|(i, r)| (i + 1, r)))?;
    let senses = EmbeddingTable::from_rows(dim, sense_keys, sense_vecs.iter().map(|v| v.as_slice()))?;
    let contexts = EmbeddingTable::from_rows(dim, context_keys, context_vecs.iter().map(|v| v.as_slice()))?;
    Ok(Universe {
        dataset,
        senses,
        contexts,
    })
}
