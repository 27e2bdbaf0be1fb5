//! Sense inventory and relational knowledge exported from WordNet.
//!
//! The export is JSON-lines with three record kinds: `sense`, `entry` and
//! `instance`. Loading validates every cross-reference; nothing is repaired.
//! In particular related sets are directional and are not symmetrised.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Pos {
    Noun,
    Verb,
    Adj,
    Adv,
}

impl Pos {
    pub const ALL: [Pos; 4] = [Pos::Noun, Pos::Verb, Pos::Adj, Pos::Adv];

    pub fn as_str(self) -> &'static str {
        match self {
            Pos::Noun => "NOUN",
            Pos::Verb => "VERB",
            Pos::Adj => "ADJ",
            Pos::Adv => "ADV",
        }
    }
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Pos {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Pos::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown part of speech {s:?}")))
    }
}

/// Evaluation subsets of the unified evaluation framework.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Subset {
    #[serde(rename = "SE2")]
    Se2,
    #[serde(rename = "SE3")]
    Se3,
    #[serde(rename = "SE07")]
    Se07,
    #[serde(rename = "SE13")]
    Se13,
    #[serde(rename = "SE15")]
    Se15,
}

impl Subset {
    pub const ALL: [Subset; 5] = [Subset::Se2, Subset::Se3, Subset::Se07, Subset::Se13, Subset::Se15];

    /// SemEval-2007 serves as the development set.
    pub const DEV: Subset = Subset::Se07;

    pub fn as_str(self) -> &'static str {
        match self {
            Subset::Se2 => "SE2",
            Subset::Se3 => "SE3",
            Subset::Se07 => "SE07",
            Subset::Se13 => "SE13",
            Subset::Se15 => "SE15",
        }
    }
}

impl fmt::Display for Subset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Dense index of a sense within a [`Lexicon`], in export order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SenseId(pub usize);

#[derive(Debug, Clone, PartialEq)]
pub struct SenseRecord {
    pub sense_key: String,
    pub lemma: String,
    pub pos: Pos,
    pub synset_id: String,
    /// Attract set.
    pub related: Vec<SenseId>,
    /// Other senses of the same lemma; hard negatives.
    pub different: Vec<SenseId>,
    pub csi_classes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WordInstance {
    pub instance_id: String,
    pub lemma: String,
    pub pos: Pos,
    /// Candidate senses in inventory order.
    pub candidates: Vec<SenseId>,
    pub gold: Option<Vec<SenseId>>,
    pub subset: Option<Subset>,
}

impl WordInstance {
    pub fn is_correct(&self, predicted: SenseId) -> bool {
        self.gold.as_ref().is_some_and(|g| g.contains(&predicted))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Eval,
}

/// One line of the JSON-lines export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LexiconRecord {
    Sense {
        sense_key: String,
        lemma: String,
        pos: Pos,
        synset: String,
        #[serde(default)]
        related: Vec<String>,
        #[serde(default)]
        different: Vec<String>,
        #[serde(default)]
        csi: Vec<String>,
    },
    Entry {
        lemma: String,
        pos: Pos,
        senses: Vec<String>,
    },
    Instance {
        id: String,
        lemma: String,
        pos: Pos,
        split: Split,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        subset: Option<Subset>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        gold: Option<Vec<String>>,
    },
}

#[derive(Debug, Clone, Default)]
pub struct Lexicon {
    senses: Vec<SenseRecord>,
    by_key: HashMap<String, SenseId>,
    candidate_index: HashMap<(String, Pos), Vec<SenseId>>,
    entry_order: Vec<(String, Pos)>,
    csi_index: BTreeMap<String, Vec<SenseId>>,
}

/// Aggregate statistics over the inventory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LexiconStats {
    pub senses: usize,
    pub lemmas: usize,
    pub mean_related: f64,
    pub mean_different: f64,
    /// Share of senses with at least one different sense.
    pub with_different: f64,
}

impl Lexicon {
    pub fn len(&self) -> usize {
        self.senses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.senses.is_empty()
    }

    pub fn sense(&self, id: SenseId) -> &SenseRecord {
        &self.senses[id.0]
    }

    pub fn senses(&self) -> &[SenseRecord] {
        &self.senses
    }

    pub fn ids(&self) -> impl Iterator<Item = SenseId> + '_ {
        (0..self.senses.len()).map(SenseId)
    }

    pub fn key(&self, id: SenseId) -> &str {
        &self.senses[id.0].sense_key
    }

    pub fn id_of(&self, key: &str) -> Result<SenseId> {
        self.by_key
            .get(key)
            .copied()
            .ok_or_else(|| Error::UnknownSense(key.to_string()))
    }

    /// Candidate senses of `(lemma, pos)` in inventory (sense rank) order.
    pub fn candidates(&self, lemma: &str, pos: Pos) -> Result<&[SenseId]> {
        self.candidate_index
            .get(&(lemma.to_string(), pos))
            .map(Vec::as_slice)
            .ok_or_else(|| Error::UnknownLemma {
                lemma: lemma.to_string(),
                pos: pos.to_string(),
            })
    }

    /// The rank-1 sense of `(lemma, pos)`.
    pub fn first_sense(&self, lemma: &str, pos: Pos) -> Result<SenseId> {
        Ok(self.candidates(lemma, pos)?[0])
    }

    /// Senses sharing at least one coarse class with `id`, ascending by id.
    /// Empty when `id` has no class. `id` itself is included only when
    /// `include_self` is set.
    pub fn csi_siblings(&self, id: SenseId, include_self: bool) -> Vec<SenseId> {
        let mut out: Vec<SenseId> = self.senses[id.0]
            .csi_classes
            .iter()
            .flat_map(|c| self.csi_index[c].iter().copied())
            .filter(|&s| include_self || s != id)
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    pub fn csi_class(&self, label: &str) -> &[SenseId] {
        self.csi_index.get(label).map(Vec::as_slice).unwrap_or(&[])
    }

    /// `(lemma, pos)` pairs in export order.
    pub fn entries(&self) -> impl Iterator<Item = (&str, Pos, &[SenseId])> + '_ {
        self.entry_order.iter().map(|k| {
            let senses = self.candidate_index[k].as_slice();
            (k.0.as_str(), k.1, senses)
        })
    }

    pub fn stats(&self) -> LexiconStats {
        let n = self.senses.len().max(1) as f64;
        let lemmas: HashSet<&str> = self.senses.iter().map(|s| s.lemma.as_str()).collect();
        LexiconStats {
            senses: self.senses.len(),
            lemmas: lemmas.len(),
            mean_related: self.senses.iter().map(|s| s.related.len() as f64).sum::<f64>() / n,
            mean_different: self.senses.iter().map(|s| s.different.len() as f64).sum::<f64>() / n,
            with_different: self.senses.iter().filter(|s| !s.different.is_empty()).count() as f64 / n,
        }
    }
}

/// A validated lexicon together with its training and evaluation instances.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub lexicon: Lexicon,
    pub train: Vec<WordInstance>,
    pub eval: Vec<WordInstance>,
}

impl Dataset {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut records = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let record: LexiconRecord = serde_json::from_str(&line).map_err(|e| Error::LexiconParse {
                line: i + 1,
                message: e.to_string(),
            })?;
            records.push((i + 1, record));
        }
        Self::from_records(records)
    }

    /// Validates and indexes records. Each record is paired with the line
    /// number used in error messages.
    pub fn from_records(records: impl IntoIterator<Item = (usize, LexiconRecord)>) -> Result<Self> {
        let mut sense_lines = Vec::new();
        let mut entries = Vec::new();
        let mut instances = Vec::new();
        for (line, record) in records {
            match record {
                LexiconRecord::Sense { .. } => sense_lines.push((line, record)),
                LexiconRecord::Entry { .. } => entries.push((line, record)),
                LexiconRecord::Instance { .. } => instances.push((line, record)),
            }
        }

        let mut lex = Lexicon::default();
        for (line, record) in &sense_lines {
            let LexiconRecord::Sense { sense_key, .. } = record else { unreachable!() };
            let id = SenseId(lex.by_key.len());
            if lex.by_key.insert(sense_key.clone(), id).is_some() {
                return Err(parse_err(*line, format!("duplicate sense key {sense_key:?}")));
            }
        }

        for (line, record) in sense_lines {
            let LexiconRecord::Sense {
                sense_key,
                lemma,
                pos,
                synset,
                related,
                different,
                csi,
            } = record
            else {
                unreachable!()
            };
            let related = resolve_set(&lex.by_key, &sense_key, &related, "related", line)?;
            let different = resolve_set(&lex.by_key, &sense_key, &different, "different", line)?;
            lex.senses.push(SenseRecord {
                sense_key,
                lemma,
                pos,
                synset_id: synset,
                related,
                different,
                csi_classes: dedup_strings(csi),
            });
        }

        for rec in &lex.senses {
            for &d in &rec.different {
                if lex.senses[d.0].lemma != rec.lemma {
                    return Err(Error::Lexicon(format!(
                        "different sense {} of {} does not share lemma {:?}",
                        lex.senses[d.0].sense_key, rec.sense_key, rec.lemma
                    )));
                }
            }
        }
        for (i, rec) in lex.senses.iter().enumerate() {
            for class in &rec.csi_classes {
                lex.csi_index.entry(class.clone()).or_default().push(SenseId(i));
            }
        }

        let mut covered = vec![false; lex.senses.len()];
        for (line, record) in entries {
            let LexiconRecord::Entry { lemma, pos, senses } = record else { unreachable!() };
            if senses.is_empty() {
                return Err(parse_err(line, format!("entry {lemma:?}/{pos} has no senses")));
            }
            let mut ids = Vec::with_capacity(senses.len());
            for key in &senses {
                let id = *lex
                    .by_key
                    .get(key)
                    .ok_or_else(|| parse_err(line, format!("dangling sense key {key:?} in entry")))?;
                let rec = &lex.senses[id.0];
                if rec.lemma != lemma || rec.pos != pos {
                    return Err(parse_err(
                        line,
                        format!("sense {key:?} is {:?}/{} but listed under {lemma:?}/{pos}", rec.lemma, rec.pos),
                    ));
                }
                if covered[id.0] {
                    return Err(parse_err(line, format!("sense {key:?} listed in more than one entry")));
                }
                covered[id.0] = true;
                ids.push(id);
            }
            let k = (lemma, pos);
            lex.entry_order.push(k.clone());
            if lex.candidate_index.insert(k.clone(), ids).is_some() {
                return Err(parse_err(line, format!("duplicate entry {:?}/{}", k.0, k.1)));
            }
        }
        if let Some(i) = covered.iter().position(|c| !c) {
            return Err(Error::Lexicon(format!(
                "sense {} is not listed in any entry",
                lex.senses[i].sense_key
            )));
        }

        let mut train = Vec::new();
        let mut eval = Vec::new();
        let mut seen = HashSet::new();
        for (line, record) in instances {
            let LexiconRecord::Instance {
                id,
                lemma,
                pos,
                split,
                subset,
                gold,
            } = record
            else {
                unreachable!()
            };
            if !seen.insert(id.clone()) {
                return Err(parse_err(line, format!("duplicate instance id {id:?}")));
            }
            let candidates = lex.candidates(&lemma, pos).map_err(|e| parse_err(line, e.to_string()))?.to_vec();
            let gold = match (split, gold) {
                (Split::Train, Some(_)) => {
                    return Err(parse_err(line, format!("training instance {id:?} carries gold senses")));
                }
                (_, None) => None,
                (Split::Eval, Some(keys)) => {
                    let mut ids = Vec::with_capacity(keys.len());
                    for key in &keys {
                        let g = lex.id_of(key).map_err(|e| parse_err(line, e.to_string()))?;
                        if !candidates.contains(&g) {
                            log::warn!("instance {id}: gold sense {key} is not among its candidates");
                        }
                        if !ids.contains(&g) {
                            ids.push(g);
                        }
                    }
                    if ids.is_empty() {
                        return Err(parse_err(line, format!("instance {id:?} has an empty gold set")));
                    }
                    Some(ids)
                }
            };
            let inst = WordInstance {
                instance_id: id,
                lemma,
                pos,
                candidates,
                gold,
                subset,
            };
            match split {
                Split::Train => train.push(inst),
                Split::Eval => eval.push(inst),
            }
        }

        Ok(Dataset { lexicon: lex, train, eval })
    }

    /// Re-emits the dataset as export records: senses, entries, then
    /// training and evaluation instances.
    pub fn to_records(&self) -> Vec<LexiconRecord> {
        let lex = &self.lexicon;
        let keys = |ids: &[SenseId]| ids.iter().map(|&i| lex.key(i).to_string()).collect::<Vec<_>>();
        let mut out: Vec<LexiconRecord> = lex
            .senses
            .iter()
            .map(|s| LexiconRecord::Sense {
                sense_key: s.sense_key.clone(),
                lemma: s.lemma.clone(),
                pos: s.pos,
                synset: s.synset_id.clone(),
                related: keys(&s.related),
                different: keys(&s.different),
                csi: s.csi_classes.clone(),
            })
            .collect();
        out.extend(lex.entries().map(|(lemma, pos, senses)| LexiconRecord::Entry {
            lemma: lemma.to_string(),
            pos,
            senses: keys(senses),
        }));
        for (split, list) in [(Split::Train, &self.train), (Split::Eval, &self.eval)] {
            out.extend(list.iter().map(|w| LexiconRecord::Instance {
                id: w.instance_id.clone(),
                lemma: w.lemma.clone(),
                pos: w.pos,
                split,
                subset: w.subset,
                gold: w.gold.as_deref().map(keys),
            }));
        }
        out
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = Vec::new();
        for rec in self.to_records() {
            serde_json::to_writer(&mut out, &rec)?;
            out.push(b'\n');
        }
        let mut file = File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(&out).map_err(|e| Error::io(path, e))
    }
}

fn parse_err(line: usize, message: String) -> Error {
    Error::LexiconParse { line, message }
}

fn resolve_set(
    by_key: &HashMap<String, SenseId>,
    owner: &str,
    keys: &[String],
    what: &str,
    line: usize,
) -> Result<Vec<SenseId>> {
    let mut out = Vec::with_capacity(keys.len());
    for key in keys {
        if key == owner {
            return Err(parse_err(line, format!("{owner} lists itself in its {what} set")));
        }
        let id = *by_key
            .get(key)
            .ok_or_else(|| parse_err(line, format!("dangling {what} sense key {key:?}")))?;
        if out.contains(&id) {
            return Err(parse_err(line, format!("{key} repeated in the {what} set of {owner}")));
        }
        out.push(id);
    }
    Ok(out)
}

fn dedup_strings(mut v: Vec<String>) -> Vec<String> {
    let mut seen = HashSet::new();
    v.retain(|s| seen.insert(s.clone()));
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Dataset> {
        let recs: Vec<_> = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| (i + 1, serde_json::from_str::<LexiconRecord>(l).unwrap()))
            .collect();
        Dataset::from_records(recs)
    }

    const COMPUTER: &str = r#"
{"kind":"sense","sense_key":"computer%1:06:00::","lemma":"computer","pos":"NOUN","synset":"computer.n.01","related":["computing_device%1:06:00::","analog_computer%1:06:00::"],"different":["computer%1:18:00::"],"csi":["tech"]}
{"kind":"sense","sense_key":"computer%1:18:00::","lemma":"computer","pos":"NOUN","synset":"calculator.n.01","related":[],"different":["computer%1:06:00::"],"csi":[]}
{"kind":"sense","sense_key":"computing_device%1:06:00::","lemma":"computing_device","pos":"NOUN","synset":"computer.n.01","related":["computer%1:06:00::"],"different":[],"csi":["tech"]}
{"kind":"sense","sense_key":"analog_computer%1:06:00::","lemma":"analog_computer","pos":"NOUN","synset":"analog_computer.n.01","related":[],"different":[],"csi":["tech","misc"]}
{"kind":"entry","lemma":"computer","pos":"NOUN","senses":["computer%1:06:00::","computer%1:18:00::"]}
{"kind":"entry","lemma":"computing_device","pos":"NOUN","senses":["computing_device%1:06:00::"]}
{"kind":"entry","lemma":"analog_computer","pos":"NOUN","senses":["analog_computer%1:06:00::"]}
{"kind":"instance","id":"d000.s000.t000","lemma":"computer","pos":"NOUN","split":"eval","subset":"SE2","gold":["computer%1:06:00::"]}
{"kind":"instance","id":"semcor.1","lemma":"computer","pos":"NOUN","split":"train"}
"#;

    #[test]
    fn computer_example_record() {
        let ds = parse(COMPUTER).unwrap();
        let lex = &ds.lexicon;
        let c = lex.id_of("computer%1:06:00::").unwrap();
        let rec = lex.sense(c);
        assert!(rec.related.contains(&lex.id_of("computing_device%1:06:00::").unwrap()));
        assert!(rec.different.contains(&lex.id_of("computer%1:18:00::").unwrap()));
        assert_eq!(ds.train.len(), 1);
        assert_eq!(ds.eval.len(), 1);
        assert!(ds.train[0].gold.is_none());
        assert_eq!(ds.eval[0].subset, Some(Subset::Se2));
    }

    #[test]
    fn related_sets_are_not_symmetrised() {
        let ds = parse(COMPUTER).unwrap();
        let lex = &ds.lexicon;
        let analog = lex.id_of("analog_computer%1:06:00::").unwrap();
        assert!(lex.sense(analog).related.is_empty());
    }

    #[test]
    fn candidates_and_first_sense() {
        let ds = parse(COMPUTER).unwrap();
        let lex = &ds.lexicon;
        let cands: Vec<_> = lex.candidates("computer", Pos::Noun).unwrap().iter().map(|&i| lex.key(i)).collect();
        assert_eq!(cands, ["computer%1:06:00::", "computer%1:18:00::"]);
        assert_eq!(lex.key(lex.first_sense("computer", Pos::Noun).unwrap()), "computer%1:06:00::");
        let mono = lex.candidates("computing_device", Pos::Noun).unwrap();
        assert_eq!(mono.len(), 1);
        assert_eq!(lex.first_sense("computing_device", Pos::Noun).unwrap(), mono[0]);
        assert!(matches!(lex.candidates("computer", Pos::Verb), Err(Error::UnknownLemma { .. })));
        assert!(lex.first_sense("zzz", Pos::Noun).is_err());
    }

    #[test]
    fn csi_siblings_exclude_self() {
        let ds = parse(COMPUTER).unwrap();
        let lex = &ds.lexicon;
        let c = lex.id_of("computer%1:06:00::").unwrap();
        let d = lex.id_of("computing_device%1:06:00::").unwrap();
        let a = lex.id_of("analog_computer%1:06:00::").unwrap();
        let c18 = lex.id_of("computer%1:18:00::").unwrap();
        assert_eq!(lex.csi_siblings(c, false), vec![d, a]);
        assert!(lex.csi_siblings(d, false).contains(&c));
        assert!(lex.csi_siblings(c18, false).is_empty());
        assert_eq!(lex.csi_siblings(c, true), vec![c, d, a]);
        for id in lex.ids() {
            assert!(!lex.csi_siblings(id, false).contains(&id));
        }
    }

    #[test]
    fn self_reference_rejected() {
        let bad = COMPUTER.replace(
            r#""related":[],"different":["computer%1:06:00::"]"#,
            r#""related":["computer%1:18:00::"],"different":["computer%1:06:00::"]"#,
        );
        match parse(&bad) {
            Err(Error::LexiconParse { line, message }) => {
                assert_eq!(line, 3);
                assert!(message.contains("itself"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn dangling_and_duplicate_keys_rejected() {
        let bad = COMPUTER.replace(r#""related":[],"different":[],"csi":["tech","misc"]"#, r#""related":["nope%1:00:00::"],"different":[],"csi":[]"#);
        assert!(matches!(parse(&bad), Err(Error::LexiconParse { line: 5, .. })));

        let dup = format!(
            "{COMPUTER}{}\n",
            r#"{"kind":"sense","sense_key":"computer%1:18:00::","lemma":"computer","pos":"NOUN","synset":"x","related":[],"different":[],"csi":[]}"#
        );
        assert!(matches!(parse(&dup), Err(Error::LexiconParse { line: 11, .. })));
    }

    #[test]
    fn different_must_share_lemma() {
        let bad = COMPUTER.replace(
            r#""lemma":"computing_device","pos":"NOUN","synset":"computer.n.01","related":["computer%1:06:00::"],"different":[]"#,
            r#""lemma":"computing_device","pos":"NOUN","synset":"computer.n.01","related":["computer%1:06:00::"],"different":["computer%1:18:00::"]"#,
        );
        assert!(matches!(parse(&bad), Err(Error::Lexicon(_))));
    }

    #[test]
    fn training_gold_rejected() {
        let bad = COMPUTER.replace(r#""split":"train"}"#, r#""split":"train","gold":["computer%1:06:00::"]}"#);
        assert!(matches!(parse(&bad), Err(Error::LexiconParse { line: 10, .. })));
    }

    #[test]
    fn malformed_json_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("lex.jsonl");
        std::fs::write(&p, format!("{}\n{{not json\n", COMPUTER.trim())).unwrap();
        assert!(matches!(Dataset::load(&p), Err(Error::LexiconParse { line: 10, .. })));
    }

    #[test]
    fn records_roundtrip() {
        let ds = parse(COMPUTER).unwrap();
        let again = Dataset::from_records(ds.to_records().into_iter().enumerate()).unwrap();
        assert_eq!(again.to_records(), ds.to_records());
        assert_eq!(again.lexicon.senses(), ds.lexicon.senses());
    }

    #[test]
    fn stats() {
        let ds = parse(COMPUTER).unwrap();
        let s = ds.lexicon.stats();
        assert_eq!(s.senses, 4);
        assert_eq!(s.lemmas, 3);
        assert!((s.mean_related - 0.75).abs() < 1e-12);
        assert!((s.mean_different - 0.5).abs() < 1e-12);
        assert!((s.with_different - 0.5).abs() < 1e-12);
    }
}
