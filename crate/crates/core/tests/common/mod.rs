#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sswd_core::lexicon::{LexiconRecord, Split};
use sswd_core::{Dataset, EmbeddingTable, Pos, Subset};

/// A random inventory with embedding tables for every sense and instance.
pub struct Fixture {
    pub dataset: Dataset,
    pub senses: EmbeddingTable,
    pub contexts: EmbeddingTable,
}

#[derive(Debug, Clone, Copy)]
pub struct Shape {
    pub dim: usize,
    pub lemmas: usize,
    pub max_senses: usize,
    pub train: usize,
    pub eval: usize,
    pub classes: usize,
}

impl Default for Shape {
    fn default() -> Self {
        Self {
            dim: 8,
            lemmas: 6,
            max_senses: 4,
            train: 12,
            eval: 20,
            classes: 3,
        }
    }
}

pub fn normal_vec(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        if v.iter().any(|x| *x != 0.0) {
            return v;
        }
    }
}

fn table(rng: &mut impl Rng, dim: usize, keys: Vec<String>) -> EmbeddingTable {
    let rows: Vec<Vec<f64>> = keys
        .iter()
        .map(|_| {
            let scale = rng.gen_range(0.5..20.0);
            normal_vec(rng, dim).into_iter().map(|x| x * scale).collect()
        })
        .collect();
    EmbeddingTable::from_rows(dim, keys, rows.iter().map(|r| r.as_slice())).unwrap()
}

pub fn random_fixture(seed: u64, shape: Shape) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::new();
    let mut lemma_senses: Vec<(String, Pos, Vec<String>)> = Vec::new();
    for l in 0..shape.lemmas {
        let n = rng.gen_range(1..=shape.max_senses);
        let pos = Pos::ALL[rng.gen_range(0..Pos::ALL.len())];
        lemma_senses.push((format!("l{l}"), pos, (0..n).map(|j| format!("l{l}.{j}")).collect()));
    }
    let all: Vec<String> = lemma_senses.iter().flat_map(|(_, _, s)| s.clone()).collect();
    for (lemma, pos, keys) in &lemma_senses {
        for key in keys {
            let related: Vec<String> = all
                .iter()
                .filter(|k| *k != key && rng.gen_bool(0.2))
                .cloned()
                .collect();
            let different: Vec<String> = keys.iter().filter(|k| *k != key).cloned().collect();
            let csi = if rng.gen_bool(0.8) {
                vec![format!("class{}", rng.gen_range(0..shape.classes.max(1)))]
            } else {
                Vec::new()
            };
            records.push(LexiconRecord::Sense {
                sense_key: key.clone(),
                lemma: lemma.clone(),
                pos: *pos,
                synset: format!("{key}.syn"),
                related,
                different,
                csi,
            });
        }
        records.push(LexiconRecord::Entry {
            lemma: lemma.clone(),
            pos: *pos,
            senses: keys.clone(),
        });
    }
    let mut context_keys = Vec::new();
    for t in 0..shape.train {
        let (lemma, pos, _) = lemma_senses.choose(&mut rng).unwrap();
        let id = format!("t{t}");
        context_keys.push(id.clone());
        records.push(LexiconRecord::Instance {
            id,
            lemma: lemma.clone(),
            pos: *pos,
            split: Split::Train,
            subset: None,
            gold: None,
        });
    }
    for e in 0..shape.eval {
        let (lemma, pos, keys) = lemma_senses.choose(&mut rng).unwrap();
        let mut gold = vec![keys.choose(&mut rng).unwrap().clone()];
        if keys.len() > 1 && rng.gen_bool(0.2) {
            gold.push(keys.choose(&mut rng).unwrap().clone());
        }
        let id = format!("e{e}");
        context_keys.push(id.clone());
        records.push(LexiconRecord::Instance {
            id,
            lemma: lemma.clone(),
            pos: *pos,
            split: Split::Eval,
            subset: Some(*Subset::ALL.choose(&mut rng).unwrap()),
            gold: Some(gold),
        });
    }
    let dataset = Dataset::from_records(records.into_iter().enumerate().map(|(i, r)| (i + 1, r))).unwrap();
    let senses = table(&mut rng, shape.dim, all);
    let contexts = table(&mut rng, shape.dim, context_keys);
    Fixture {
        dataset,
        senses,
        contexts,
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

pub fn row(table: &EmbeddingTable, key: &str) -> Vec<f64> {
    table.lookup(key).unwrap().values.iter().map(|&v| f64::from(v)).collect()
}
