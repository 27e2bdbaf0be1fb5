//! Nearest-neighbour sense prediction on specialized embeddings, with the
//! optional try-again reranker over coarse sense classes.

use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::sync::{Arc, Mutex};

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lexicon::{Lexicon, SenseId, WordInstance};
use crate::net::{ResidualMap, SpecializationNet};
use crate::objectives::cosine;
use crate::store::EmbeddingTable;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictOptions {
    /// Rerank the top two candidates by coarse-class support.
    pub use_tam: bool,
    /// Count a sense as its own coarse-class sibling.
    pub csi_include_self: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub instance_id: String,
    pub predicted: SenseId,
    /// Every candidate with its cosine, descending; ties keep inventory order.
    pub ranked: Vec<(SenseId, f64)>,
    /// The top two with their reranked scores, when the reranker ran.
    pub refined: Option<Vec<(SenseId, f64)>>,
}

/// `(instance id, predicted sense)` pairs for scoring.
pub fn answers(predictions: &[Prediction]) -> Vec<(String, SenseId)> {
    predictions.iter().map(|p| (p.instance_id.clone(), p.predicted)).collect()
}

/// Applies a trained net to stored embeddings and ranks candidates.
///
/// Specialized sense vectors are computed on first use and cached; the
/// cache is shared between threads.
pub struct Engine<'a> {
    net: &'a SpecializationNet,
    senses: &'a EmbeddingTable,
    contexts: &'a EmbeddingTable,
    lexicon: &'a Lexicon,
    cache: Mutex<HashMap<SenseId, Arc<[f32]>>>,
}

impl<'a> Engine<'a> {
    pub fn new(
        net: &'a SpecializationNet,
        senses: &'a EmbeddingTable,
        contexts: &'a EmbeddingTable,
        lexicon: &'a Lexicon,
    ) -> Result<Self> {
        net.ensure_dim(senses.dim())?;
        net.ensure_dim(contexts.dim())?;
        Ok(Self {
            net,
            senses,
            contexts,
            lexicon,
            cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn lexicon(&self) -> &Lexicon {
        self.lexicon
    }

    pub fn sense_vector(&self, id: SenseId) -> Result<Arc<[f32]>> {
        if let Some(v) = self.cache.lock().unwrap().get(&id) {
            return Ok(Arc::clone(v));
        }
        let key = self.lexicon.key(id);
        let row = self.senses.row_of(key).ok_or_else(|| Error::UnknownKey(key.to_string()))?;
        let spec = self.net.specialize_sense(&self.senses.row_f64(row))?;
        let spec: Arc<[f32]> = spec.iter().map(|&v| v as f32).collect();
        self.cache.lock().unwrap().entry(id).or_insert_with(|| Arc::clone(&spec));
        Ok(spec)
    }

    pub fn context_vector(&self, instance_id: &str) -> Result<Vec<f64>> {
        let raw = self.contexts.lookup(instance_id)?;
        let raw: Vec<f64> = raw.values.iter().map(|&v| f64::from(v)).collect();
        self.net.specialize_context(&raw)
    }

    /// Cosine between a specialized context and a specialized sense.
    pub fn similarity(&self, context: &[f64], sense: SenseId) -> Result<f64> {
        let e = self.sense_vector(sense)?;
        let e: Vec<f64> = e.iter().map(|&v| f64::from(v)).collect();
        cosine(context, &e)
    }

    /// Ranks `candidates` (inventory order) against an already specialized
    /// context vector.
    pub fn rank(&self, context: &[f64], candidates: &[SenseId]) -> Result<Vec<(SenseId, f64)>> {
        let mut ranked = candidates
            .iter()
            .map(|&s| Ok((s, self.similarity(context, s)?)))
            .collect::<Result<Vec<_>>>()?;
        // Stable sort: equal scores stay in inventory order.
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
        Ok(ranked)
    }

    /// Reranks the top two candidates by adding, for each, the best cosine
    /// between the context and any sense of its coarse class. Returns the
    /// winner and both refined scores; the plain nearest neighbour wins ties.
    pub fn try_again(
        &self,
        top2: [(SenseId, f64); 2],
        context: &[f64],
        include_self: bool,
    ) -> Result<(SenseId, [(SenseId, f64); 2])> {
        let mut refined = top2;
        for (s, score) in refined.iter_mut() {
            let mut best: Option<f64> = None;
            for sib in self.lexicon.csi_siblings(*s, include_self) {
                let c = self.similarity(context, sib)?;
                best = Some(best.map_or(c, |b| b.max(c)));
            }
            *score += best.unwrap_or(0.0);
        }
        let winner = if refined[1].1 > refined[0].1 { refined[1].0 } else { refined[0].0 };
        Ok((winner, refined))
    }

    /// Predicts from a raw (unspecialized) context vector.
    pub fn predict_vector(
        &self,
        instance_id: &str,
        raw_context: &[f64],
        candidates: &[SenseId],
        opts: PredictOptions,
    ) -> Result<Prediction> {
        if candidates.is_empty() {
            return Err(Error::NoCandidates(instance_id.to_string()));
        }
        let context = self.net.specialize_context(raw_context)?;
        let ranked = self.rank(&context, candidates)?;
        let (predicted, refined) = if opts.use_tam && ranked.len() >= 2 {
            let (winner, refined) = self.try_again([ranked[0], ranked[1]], &context, opts.csi_include_self)?;
            let mut r = refined.to_vec();
            if refined[1].1 > refined[0].1 {
                r.swap(0, 1);
            }
            (winner, Some(r))
        } else {
            (ranked[0].0, None)
        };
        Ok(Prediction {
            instance_id: instance_id.to_string(),
            predicted,
            ranked,
            refined,
        })
    }

    pub fn predict(&self, instance: &WordInstance, opts: PredictOptions) -> Result<Prediction> {
        let raw = self.contexts.lookup(&instance.instance_id)?;
        let raw: Vec<f64> = raw.values.iter().map(|&v| f64::from(v)).collect();
        self.predict_vector(&instance.instance_id, &raw, &instance.candidates, opts)
    }
}

/// Predicts every instance in input order. The first failing instance (in
/// input order) is reported with its id.
pub fn predict_corpus(
    net: &SpecializationNet,
    senses: &EmbeddingTable,
    contexts: &EmbeddingTable,
    lexicon: &Lexicon,
    instances: &[WordInstance],
    opts: PredictOptions,
) -> Result<Vec<Prediction>> {
    let engine = Engine::new(net, senses, contexts, lexicon)?;
    let results: Vec<Result<Prediction>> = instances.par_iter().map(|w| engine.predict(w, opts)).collect();
    results
        .into_iter()
        .zip(instances)
        .map(|(r, w)| {
            r.map_err(|e| Error::Instance {
                id: w.instance_id.clone(),
                source: Box::new(e),
            })
        })
        .collect()
}

/// Scorer key-file format: one `"<instance id> <sense key>"` line each.
pub fn format_predictions(predictions: &[Prediction], lexicon: &Lexicon) -> String {
    let mut out = String::new();
    for p in predictions {
        out.push_str(&p.instance_id);
        out.push(' ');
        out.push_str(lexicon.key(p.predicted));
        out.push('\n');
    }
    out
}

pub fn write_predictions(path: impl AsRef<Path>, predictions: &[Prediction], lexicon: &Lexicon) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_predictions(predictions, lexicon)).map_err(|e| Error::io(path, e))
}

pub fn parse_predictions(text: &str, lexicon: &Lexicon) -> Result<Vec<(String, SenseId)>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let mut parts = line.split_whitespace();
            let (Some(id), Some(key), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(Error::Scoring(format!("line {}: expected \"<id> <sense key>\"", i + 1)));
            };
            Ok((id.to_string(), lexicon.id_of(key)?))
        })
        .collect()
}

pub fn read_predictions(path: impl AsRef<Path>, lexicon: &Lexicon) -> Result<Vec<(String, SenseId)>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_predictions(&text, lexicon)
}

/// Passes every row of `table` through `map`.
pub fn specialize_table(map: &ResidualMap, table: &EmbeddingTable) -> Result<EmbeddingTable> {
    const CHUNK: usize = 1024;
    let dim = table.dim();
    let mut data = Vec::with_capacity(table.len() * dim);
    for start in (0..table.len()).step_by(CHUNK) {
        let end = (start + CHUNK).min(table.len());
        let raw = Array2::from_shape_fn((end - start, dim), |(i, j)| f64::from(table.row(start + i)[j]));
        let (out, _) = map.forward_batch(raw.view())?;
        data.extend(out.iter().map(|&v| v as f32));
    }
    EmbeddingTable::new(dim, table.keys().to_vec(), data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexicon::{Dataset, LexiconRecord, Pos};

    /// Lemma "w" with senses a, b; a is in class X with sibling x, b in class
    /// Y with sibling y.
    fn fixture(vectors: &[(&str, [f32; 2])], classes: &[(&str, &[&str])]) -> (Dataset, EmbeddingTable) {
        let mut recs = Vec::new();
        let mut keys = Vec::new();
        let mut data = Vec::new();
        let class_of = |k: &str| -> Vec<String> {
            classes
                .iter()
                .filter(|(_, m)| m.contains(&k))
                .map(|(c, _)| c.to_string())
                .collect()
        };
        let lemma = |k: &str| if k.len() == 1 && "abc".contains(k) { "w".to_string() } else { format!("l{k}") };
        for (k, v) in vectors {
            let diffs: Vec<String> = vectors
                .iter()
                .map(|(o, _)| o.to_string())
                .filter(|o| o != k && lemma(o) == lemma(k))
                .collect();
            recs.push(LexiconRecord::Sense {
                sense_key: k.to_string(),
                lemma: lemma(k),
                pos: Pos::Noun,
                synset: format!("{k}.n.01"),
                related: vec![],
                different: diffs,
                csi: class_of(k),
            });
            if lemma(k) != "w" {
                recs.push(LexiconRecord::Entry {
                    lemma: lemma(k),
                    pos: Pos::Noun,
                    senses: vec![k.to_string()],
                });
            }
            keys.push(k.to_string());
            data.extend_from_slice(v);
        }
        recs.push(LexiconRecord::Entry {
            lemma: "w".into(),
            pos: Pos::Noun,
            senses: vectors.iter().map(|(k, _)| k.to_string()).filter(|k| lemma(k) == "w").collect(),
        });
        let ds = Dataset::from_records(recs.into_iter().enumerate()).unwrap();
        (ds, EmbeddingTable::new(2, keys, data).unwrap())
    }

    fn unit(theta_deg: f64) -> [f32; 2] {
        let t = theta_deg.to_radians();
        [t.cos() as f32, t.sin() as f32]
    }

    fn ctx_table() -> EmbeddingTable {
        EmbeddingTable::new(2, vec!["q".into()], vec![1.0, 0.0]).unwrap()
    }

    #[test]
    fn ranking_by_hand() {
        // Cosines 0.8, 0.6, 0.79 to the context (1, 0).
        let c = |x: f64| [x as f32, (1.0 - x * x).sqrt() as f32];
        let (ds, senses) = fixture(&[("a", c(0.8)), ("b", c(0.6)), ("c", c(0.79))], &[]);
        let net = SpecializationNet::identity(2);
        let ctx = ctx_table();
        let engine = Engine::new(&net, &senses, &ctx, &ds.lexicon).unwrap();
        let cands = ds.lexicon.candidates("w", Pos::Noun).unwrap();
        let p = engine.predict_vector("q", &[1.0, 0.0], cands, PredictOptions::default()).unwrap();
        assert_eq!(ds.lexicon.key(p.predicted), "a");
        let order: Vec<_> = p.ranked.iter().map(|(s, _)| ds.lexicon.key(*s)).collect();
        assert_eq!(order, ["a", "c", "b"]);
    }

    #[test]
    fn single_candidate_always_wins() {
        let (ds, senses) = fixture(&[("a", unit(170.0))], &[]);
        let net = SpecializationNet::identity(2);
        let ctx = ctx_table();
        let engine = Engine::new(&net, &senses, &ctx, &ds.lexicon).unwrap();
        let cands = ds.lexicon.candidates("w", Pos::Noun).unwrap();
        let opts = PredictOptions {
            use_tam: true,
            ..Default::default()
        };
        let p = engine.predict_vector("q", &[1.0, 0.0], cands, opts).unwrap();
        assert_eq!(ds.lexicon.key(p.predicted), "a");
        assert!(p.refined.is_none());
    }

    #[test]
    fn ties_follow_inventory_order() {
        let (ds, senses) = fixture(&[("a", unit(30.0)), ("b", unit(-30.0))], &[]);
        let net = SpecializationNet::identity(2);
        let ctx = ctx_table();
        let engine = Engine::new(&net, &senses, &ctx, &ds.lexicon).unwrap();
        let p = engine.predict(&ds_instance("w"), PredictOptions::default()).unwrap();
        assert_eq!(ds.lexicon.key(p.predicted), "a");
    }

    fn ds_instance(lemma: &str) -> WordInstance {
        WordInstance {
            instance_id: "q".into(),
            lemma: lemma.into(),
            pos: Pos::Noun,
            candidates: vec![SenseId(0), SenseId(1)],
            gold: None,
            subset: None,
        }
    }

    #[test]
    fn unknown_context_is_reported_with_id() {
        let (ds, senses) = fixture(&[("a", unit(30.0)), ("b", unit(-30.0))], &[]);
        let net = SpecializationNet::identity(2);
        let ctx = ctx_table();
        let mut w = ds_instance("w");
        w.instance_id = "missing".into();
        let err = predict_corpus(&net, &senses, &ctx, &ds.lexicon, &[w], PredictOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Instance { ref id, .. } if id == "missing"));
    }

    #[test]
    fn predictions_file_format() {
        let (ds, senses) = fixture(&[("a", unit(30.0)), ("b", unit(-30.0))], &[]);
        let net = SpecializationNet::identity(2);
        let ctx = ctx_table();
        let preds = predict_corpus(&net, &senses, &ctx, &ds.lexicon, &[ds_instance("w")], PredictOptions::default()).unwrap();
        let text = format_predictions(&preds, &ds.lexicon);
        assert_eq!(text, "q a\n");
        assert_eq!(parse_predictions(&text, &ds.lexicon).unwrap(), vec![("q".to_string(), SenseId(0))]);
        assert_eq!(format_predictions(&[], &ds.lexicon), "");
        assert!(parse_predictions("q a b\n", &ds.lexicon).is_err());
        assert!(parse_predictions("q zzz\n", &ds.lexicon).is_err());
    }

    #[test]
    fn specialize_table_identity() {
        let (_, senses) = fixture(&[("a", unit(30.0)), ("b", unit(-30.0))], &[]);
        let net = SpecializationNet::identity(2);
        assert_eq!(specialize_table(&net.sense_map, &senses).unwrap(), senses);
    }
}
