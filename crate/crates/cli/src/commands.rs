use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use sswd_core::engine::{self, answers, PredictOptions};
use sswd_core::evaluation::{self, MarginDistribution, SimilarityCharacteristics};
use sswd_core::synthetic::{self, SyntheticConfig};
use sswd_core::trainer::{self, StepLog, SweepPoint, TrainObserver};
use sswd_core::{Dataset, EmbeddingTable, EvalReport, SpecializationNet, TrainConfig, TrainData};

use crate::manifest::{write_output, PartialWriter, RunManifest};
use crate::{AggregateCmd, AnalyzeCmd, EvaluateCmd, Inputs, MakeToyCmd, Model, PredictCmd, SweepCmd, SweepParam, TrainCmd};

struct Loaded {
    senses: EmbeddingTable,
    contexts: EmbeddingTable,
    dataset: Dataset,
}

fn load(inputs: &Inputs) -> Result<Loaded> {
    let senses = EmbeddingTable::load(&inputs.sense_vecs, &inputs.sense_keys).context("loading sense embeddings")?;
    let contexts = EmbeddingTable::load(&inputs.ctx_vecs, &inputs.ctx_keys).context("loading context embeddings")?;
    if senses.dim() != contexts.dim() {
        bail!("sense dim {} differs from context dim {}", senses.dim(), contexts.dim());
    }
    let dataset = Dataset::load(&inputs.lexicon).context("loading lexicon")?;
    log::info!(
        "{} senses, {} training and {} evaluation instances, dim {}",
        dataset.lexicon.len(),
        dataset.train.len(),
        dataset.eval.len(),
        senses.dim()
    );
    Ok(Loaded {
        senses,
        contexts,
        dataset,
    })
}

fn load_model(model: &Model, dim: usize) -> Result<SpecializationNet> {
    match &model.checkpoint {
        Some(path) => {
            let (net, _) = SpecializationNet::load_checkpoint(path).with_context(|| format!("loading {}", path.display()))?;
            net.ensure_dim(dim)?;
            Ok(net)
        }
        None if model.identity => Ok(SpecializationNet::identity(dim)),
        None => bail!("pass --checkpoint or --identity"),
    }
}

fn model_inputs<'a>(inputs: &'a Inputs, model: &'a Model) -> Vec<&'a Path> {
    let mut paths = inputs.paths();
    if let Some(c) = &model.checkpoint {
        paths.push(c);
    }
    paths
}

fn json_line<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string(value)?)
}

fn json_pretty<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    Ok(text.into_bytes())
}

struct TrainFiles {
    log: PartialWriter,
    checkpoints: PathBuf,
    config: TrainConfig,
    written: Vec<PathBuf>,
}

impl TrainObserver for TrainFiles {
    fn on_step(&mut self, row: &StepLog) -> sswd_core::Result<()> {
        let line = serde_json::to_string(row)?;
        self.log.line(&line).map_err(|e| sswd_core::Error::io(&self.checkpoints, e))
    }

    fn on_epoch_end(&mut self, epoch: usize, net: &SpecializationNet) -> sswd_core::Result<()> {
        let path = self.checkpoints.join(format!("epoch_{epoch:03}.ckpt"));
        let bytes = net.encode_checkpoint(&self.config)?;
        write_output(&path, &bytes).map_err(|e| sswd_core::Error::Checkpoint(format!("{e:#}")))?;
        log::debug!("epoch {epoch} done");
        self.written.push(path);
        Ok(())
    }
}

pub fn train(cmd: &TrainCmd) -> Result<()> {
    let config = cmd.hyper.config();
    let mut manifest = RunManifest::begin(&cmd.out, "train", serde_json::to_value(&config)?, Some(config.seed), &cmd.inputs.paths())?;
    let result = (|| {
        config.validate()?;
        let data = load(&cmd.inputs)?;
        let checkpoints = cmd.out.join("checkpoints");
        fs::create_dir_all(&checkpoints)?;
        let log_path = cmd.out.join("train_log.jsonl");
        let mut files = TrainFiles {
            log: PartialWriter::create(&log_path)?,
            checkpoints,
            config: config.clone(),
            written: Vec::new(),
        };
        let train_data = TrainData {
            senses: &data.senses,
            contexts: &data.contexts,
            lexicon: &data.dataset.lexicon,
            instances: &data.dataset.train,
        };
        let outcome = trainer::train(&config, train_data, &mut files)?;
        let written = std::mem::take(&mut files.written);
        files.log.commit()?;
        let model = cmd.out.join("model.ckpt");
        write_output(&model, &outcome.net.encode_checkpoint(&config)?)?;
        if let Some(last) = outcome.log.last() {
            log::info!("final loss {:.6} after {} steps", last.loss, last.step);
        }
        Ok((log_path, written, model))
    })();
    if let Ok((log_path, written, model)) = &result {
        manifest.output(log_path);
        for p in written {
            manifest.output(p);
        }
        manifest.output(model);
    }
    manifest.finish(result).map(|_| ())
}

pub fn predict(cmd: &PredictCmd) -> Result<()> {
    let opts = PredictOptions {
        use_tam: cmd.tam,
        csi_include_self: cmd.csi_include_self,
    };
    let config = serde_json::json!({
        "tam": cmd.tam,
        "csi_include_self": cmd.csi_include_self,
        "identity": cmd.model.identity,
        "first_sense": cmd.first_sense,
    });
    let mut manifest = RunManifest::begin(&cmd.out, "predict", config, None, &model_inputs(&cmd.inputs, &cmd.model))?;
    let path = cmd.out.join("predictions.txt");
    let result = (|| {
        let data = load(&cmd.inputs)?;
        let lex = &data.dataset.lexicon;
        let text = if cmd.first_sense {
            let mut text = String::new();
            for w in &data.dataset.eval {
                let s = lex.first_sense(&w.lemma, w.pos)?;
                text.push_str(&format!("{} {}\n", w.instance_id, lex.key(s)));
            }
            text
        } else {
            let net = load_model(&cmd.model, data.senses.dim())?;
            let preds = engine::predict_corpus(&net, &data.senses, &data.contexts, lex, &data.dataset.eval, opts)?;
            engine::format_predictions(&preds, lex)
        };
        write_output(&path, text.as_bytes())?;
        log::info!("wrote {} predictions", data.dataset.eval.len());
        Ok(())
    })();
    if result.is_ok() {
        manifest.output(&path);
    }
    manifest.finish(result)
}

pub fn evaluate(cmd: &EvaluateCmd) -> Result<()> {
    let mut manifest = RunManifest::begin(&cmd.out, "evaluate", serde_json::json!({}), None, &[&cmd.lexicon, &cmd.predictions])?;
    let path = cmd.out.join("report.json");
    let result = (|| {
        let dataset = Dataset::load(&cmd.lexicon)?;
        let preds = engine::read_predictions(&cmd.predictions, &dataset.lexicon)?;
        let report = evaluation::micro_f1(&preds, &dataset.eval)?;
        write_output(&path, &json_pretty(&report)?)?;
        log::info!("F1 {:.4} ({}/{})", report.overall.f1, report.overall.correct, report.overall.total);
        Ok(())
    })();
    if result.is_ok() {
        manifest.output(&path);
    }
    manifest.finish(result)
}

#[derive(Serialize)]
struct Analysis {
    characteristics: SimilarityCharacteristics,
    /// Plain nearest-neighbour F1 on the same model, for pairing with
    /// `characteristics.delta_mean` across variants.
    f1: f64,
    margins: MarginDistribution,
}

pub fn analyze(cmd: &AnalyzeCmd) -> Result<()> {
    let config = serde_json::json!({ "nb": cmd.nb, "identity": cmd.model.identity, "thresholds": cmd.thresholds });
    let mut manifest = RunManifest::begin(&cmd.out, "analyze", config, Some(cmd.seed), &model_inputs(&cmd.inputs, &cmd.model))?;
    let json_path = cmd.out.join("analysis.json");
    let csv_path = cmd.out.join("margin_cdf.csv");
    let result = (|| {
        if cmd.nb < 2 {
            bail!("--nb must be at least 2");
        }
        let data = load(&cmd.inputs)?;
        let lex = &data.dataset.lexicon;
        let net = load_model(&cmd.model, data.senses.dim())?;
        let gold: Vec<_> = data.dataset.eval.iter().filter(|w| w.gold.is_some()).cloned().collect();
        if gold.is_empty() {
            bail!("no gold-labelled evaluation instances");
        }
        let thresholds = cmd.thresholds.clone().unwrap_or_else(evaluation::default_thresholds);
        let eng = engine::Engine::new(&net, &data.senses, &data.contexts, lex)?;
        let margins = evaluation::margin_distribution(&eng, &gold, &thresholds)?;
        let characteristics =
            evaluation::similarity_characteristics(&net, &data.senses, &data.contexts, lex, &gold, cmd.nb, cmd.seed)?;
        let preds = engine::predict_corpus(&net, &data.senses, &data.contexts, lex, &gold, PredictOptions::default())?;
        let f1 = evaluation::micro_f1(&answers(&preds), &gold)?.overall.f1;
        let csv = evaluation::cdf_csv(&margins.cdf);
        let analysis = Analysis {
            characteristics,
            f1,
            margins,
        };
        write_output(&json_path, &json_pretty(&analysis)?)?;
        write_output(&csv_path, csv.as_bytes())?;
        log::info!("delta_mean {:.4}, F1 {:.4}", characteristics.delta_mean, f1);
        Ok(())
    })();
    if result.is_ok() {
        manifest.output(&json_path);
        manifest.output(&csv_path);
    }
    manifest.finish(result)
}

pub fn sweep(cmd: &SweepCmd) -> Result<()> {
    let config = cmd.hyper.config();
    let seeds = cmd.seeds.clone().unwrap_or_else(|| vec![config.seed]);
    let values = trainer::grid(cmd.from, cmd.to, cmd.step);
    let points: Vec<SweepPoint> = values
        .iter()
        .map(|&v| match cmd.param {
            SweepParam::Epsilon => SweepPoint::Epsilon(v),
            SweepParam::SelfTrainFraction => SweepPoint::SelfTrainFraction(v),
        })
        .collect();
    let snapshot = serde_json::json!({ "train": &config, "points": &points, "seeds": &seeds });
    let mut manifest = RunManifest::begin(&cmd.out, "sweep", snapshot, Some(config.seed), &cmd.inputs.paths())?;
    let jsonl = cmd.out.join("sweep.jsonl");
    let csv_path = cmd.out.join("sweep.csv");
    let result = (|| {
        config.validate()?;
        if points.is_empty() || cmd.step <= 0.0 {
            bail!("empty grid: need --from <= --to and --step > 0");
        }
        let data = load(&cmd.inputs)?;
        let train_data = TrainData {
            senses: &data.senses,
            contexts: &data.contexts,
            lexicon: &data.dataset.lexicon,
            instances: &data.dataset.train,
        };
        let mut writer = PartialWriter::create(&jsonl)?;
        let mut io_error = None;
        let rows = trainer::sweep(&config, &points, &seeds, train_data, &data.dataset.eval, &mut |row| {
            log::info!("{row:?}");
            if let Err(e) = json_line(row).and_then(|l| writer.line(&l).map_err(Into::into)) {
                io_error.get_or_insert(e);
            }
        })?;
        if let Some(e) = io_error {
            return Err(e);
        }
        writer.commit()?;
        let mut csv = String::from("param,value,seed,dev_f1\n");
        for r in &rows {
            let (name, v) = match r.point {
                SweepPoint::Epsilon(v) => ("epsilon", v),
                SweepPoint::SelfTrainFraction(v) => ("self_train_fraction", v),
            };
            csv.push_str(&format!("{name},{v},{},{}\n", r.seed, r.dev_f1));
        }
        write_output(&csv_path, csv.as_bytes())?;
        Ok(())
    })();
    if result.is_ok() {
        manifest.output(&jsonl);
        manifest.output(&csv_path);
    }
    manifest.finish(result)
}

pub fn aggregate(cmd: &AggregateCmd) -> Result<()> {
    let inputs: Vec<&Path> = cmd.reports.iter().map(|p| p.as_path()).collect();
    let mut manifest = RunManifest::begin(&cmd.out, "aggregate", serde_json::json!({}), None, &inputs)?;
    let path = cmd.out.join("aggregate.json");
    let result = (|| {
        let reports = cmd
            .reports
            .iter()
            .map(|p| {
                let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                serde_json::from_str::<EvalReport>(&text).with_context(|| format!("parsing {}", p.display()))
            })
            .collect::<Result<Vec<_>>>()?;
        let agg = evaluation::aggregate(&reports)?;
        write_output(&path, &json_pretty(&agg)?)?;
        log::info!("F1 {:.4} ± {:.4} over {} runs", agg.overall.mean, agg.overall.stddev, agg.runs);
        Ok(())
    })();
    if result.is_ok() {
        manifest.output(&path);
    }
    manifest.finish(result)
}

pub fn make_toy(cmd: &MakeToyCmd) -> Result<()> {
    let universe = synthetic::generate(&SyntheticConfig {
        seed: cmd.seed,
        ..SyntheticConfig::default()
    })?;
    universe.write(&cmd.out)?;
    log::info!(
        "wrote {} senses, {} training and {} evaluation instances to {}",
        universe.dataset.lexicon.len(),
        universe.dataset.train.len(),
        universe.dataset.eval.len(),
        cmd.out.display()
    );
    Ok(())
}
