use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::{bind_to_task, fewshot_subsample, load_dataset, Dataset, SCHEMA_VERSION};
use super::metrics::{accuracy, auto_bleu, bleu, corpus_error_rate};
use super::probe::{linear_probe_baseline, ProbeConfig};
use crate::container::fnv1a;
use crate::decode::{run_task, DecodeConfig, TaskKind, TaskOutput, TaskSpec};
use crate::error::{Error, Result};
use crate::prompts::{
    count_trainable, mean_loss, prompt_tune, save_prompts, Framer, PromptConfig, PromptSet, TuneConfig,
    TuneExample, TuneReport,
};
use crate::unitizer::{synth_corpus, CorpusTask, Grammar, GrammarSpec, SynthSpec};
use crate::unitlm::{
    load_checkpoint, pretrain_denoise, pretrain_next_token, save_checkpoint, LmConfig, NoiseSpec, PretrainConfig,
    UnitLm, Variant,
};
use crate::verbalizer::{
    export_weights, save_verbalizer, write_weights_csv, FixedVerbalizer, LearnableVerbalizer, UnitAnnotations,
    Verbalizer, DEFAULT_TAU,
};

/// Environment variable naming the artifact cache directory.
pub const CACHE_ENV: &str = "UNITPROMPT_CACHE";

/// Backbone shape, optional checkpoint, and pretraining settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackboneSection {
    pub variant: Variant,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub max_positions: usize,
    pub dropout: f64,
    /// Load this checkpoint instead of pretraining.
    pub checkpoint: Option<PathBuf>,
    /// Utterances in the pretraining corpus.
    pub corpus_size: usize,
    pub min_words: usize,
    pub max_words: usize,
    pub pretrain: PretrainConfig,
    pub noise: NoiseSpec,
}

impl Default for BackboneSection {
    fn default() -> Self {
        let lm = LmConfig::default();
        Self {
            variant: lm.variant,
            n_layers: lm.n_layers,
            n_heads: lm.n_heads,
            d_model: lm.d_model,
            d_ff: lm.d_ff,
            max_positions: lm.max_positions,
            dropout: lm.dropout,
            checkpoint: None,
            corpus_size: 2000,
            min_words: 2,
            max_words: 8,
            pretrain: PretrainConfig {
                epochs: 8,
                batch_size: 16,
                lr: 2e-3,
                ..PretrainConfig::default()
            },
            noise: NoiseSpec::default(),
        }
    }
}

impl BackboneSection {
    pub fn lm_config(&self, n_units: usize) -> LmConfig {
        LmConfig {
            variant: self.variant,
            n_layers: self.n_layers,
            n_heads: self.n_heads,
            d_model: self.d_model,
            d_ff: self.d_ff,
            n_units,
            max_positions: self.max_positions,
            dropout: self.dropout,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorpusKind {
    /// Keyword-spotting style classification.
    Command,
    /// Unit → latent-symbol label sequences.
    Transcription,
    /// Unit continuation from a seed segment.
    Continuation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TaskSection {
    pub corpus: CorpusKind,
    pub grammar: GrammarSpec,
    pub classes: usize,
    pub max_filler_words: usize,
    pub min_words: usize,
    pub max_words: usize,
    /// Conditional ratio for continuation.
    pub ratio: Option<f64>,
    pub n_train: usize,
    pub n_valid: usize,
    pub n_test: usize,
    /// Examples per class for few-shot training.
    pub fewshot: Option<usize>,
    pub train_path: Option<PathBuf>,
    pub valid_path: Option<PathBuf>,
    pub test_path: Option<PathBuf>,
    /// Also train the mean-embedding linear probe (classification only).
    pub probe: bool,
}

impl Default for TaskSection {
    fn default() -> Self {
        Self {
            corpus: CorpusKind::Command,
            grammar: GrammarSpec::default(),
            classes: 8,
            max_filler_words: 2,
            min_words: 3,
            max_words: 8,
            ratio: None,
            n_train: 400,
            n_valid: 64,
            n_test: 100,
            fewshot: None,
            train_path: None,
            valid_path: None,
            test_path: None,
            probe: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerbalizerKind {
    Identity,
    Fixed,
    Learnable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VerbalizerSection {
    /// Defaults to identity for continuation and fixed otherwise.
    pub kind: Option<VerbalizerKind>,
    pub tau: f64,
    /// Units per class in the weight export.
    pub export_top: usize,
}

impl Default for VerbalizerSection {
    fn default() -> Self {
        Self {
            kind: None,
            tau: DEFAULT_TAU,
            export_top: 5,
        }
    }
}

/// A full experiment. `seed` has no default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    #[serde(default)]
    pub backbone: BackboneSection,
    #[serde(default)]
    pub task: TaskSection,
    #[serde(default)]
    pub prompts: PromptConfig,
    #[serde(default)]
    pub verbalizer: VerbalizerSection,
    #[serde(default)]
    pub train: TuneConfig,
    #[serde(default)]
    pub decode: DecodeConfig,
}

fn parse_scalar(raw: &str) -> toml::Value {
    if let Ok(i) = raw.parse::<i64>() {
        return i.into();
    }
    if let Ok(f) = raw.parse::<f64>() {
        return f.into();
    }
    if let Ok(b) = raw.parse::<bool>() {
        return b.into();
    }
    raw.into()
}

impl ExperimentConfig {
    /// Parses TOML text, applying `section.key = value` overrides first.
    pub fn parse(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e| Error::Config(format!("config: {e}")))?;
        for (key, raw) in overrides {
            let mut path: Vec<&str> = key.split('.').collect();
            let leaf = path.pop().filter(|l| !l.is_empty()).ok_or_else(|| {
                Error::Config(format!("bad override key {key:?}"))
            })?;
            let mut cur = &mut table;
            for part in path {
                cur = cur
                    .entry(part.to_string())
                    .or_insert_with(|| toml::Value::Table(toml::Table::new()))
                    .as_table_mut()
                    .ok_or_else(|| Error::Config(format!("override {key:?} crosses a non-table")))?;
            }
            cur.insert(leaf.to_string(), parse_scalar(raw));
        }
        let config: Self = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>, overrides: &[(String, String)]) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?, overrides)
    }

    pub fn validate(&self) -> Result<()> {
        self.backbone.lm_config(self.task.grammar.n_units).validate()?;
        self.decode.validate()?;
        if self.task.corpus == CorpusKind::Continuation && self.task.ratio.is_none() {
            return Err(Error::Config("continuation needs task.ratio".into()));
        }
        if !(self.verbalizer.tau > 0.0) {
            return Err(Error::Config("verbalizer.tau must be positive".into()));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Hash of the fully resolved configuration.
    pub fn fingerprint(&self) -> String {
        format!("{:016x}", fnv1a(self.to_toml().as_bytes()))
    }

    /// Stage-specific seed derived from the experiment seed.
    pub fn stage_seed(&self, stage: &str) -> u64 {
        fnv1a(format!("{}:{stage}", self.seed).as_bytes())
    }

    pub fn verbalizer_kind(&self) -> VerbalizerKind {
        self.verbalizer.kind.unwrap_or(match self.task.corpus {
            CorpusKind::Continuation => VerbalizerKind::Identity,
            _ => VerbalizerKind::Fixed,
        })
    }

    pub fn task_spec(&self, grammar: &Grammar) -> TaskSpec {
        let kind = match self.task.corpus {
            CorpusKind::Command => TaskKind::Classification { slots: 1 },
            CorpusKind::Transcription => TaskKind::Sequence,
            CorpusKind::Continuation => TaskKind::Generation,
        };
        TaskSpec {
            kind,
            labels: self.synth_spec().label_set(grammar),
            ratio: self.task.ratio.filter(|_| kind == TaskKind::Generation),
        }
    }

    pub fn synth_spec(&self) -> SynthSpec {
        let t = &self.task;
        let task = match t.corpus {
            CorpusKind::Command => CorpusTask::Command {
                classes: t.classes,
                max_filler_words: t.max_filler_words,
            },
            CorpusKind::Transcription => CorpusTask::Transcription {
                min_words: t.min_words,
                max_words: t.max_words,
            },
            CorpusKind::Continuation => CorpusTask::Free {
                min_words: t.min_words,
                max_words: t.max_words,
            },
        };
        SynthSpec {
            grammar: t.grammar.clone(),
            task,
            dedup: true,
            features: None,
        }
    }

    fn backbone_key(&self) -> String {
        let mut text = toml::to_string(&self.backbone).expect("serializes");
        text.push_str(&toml::to_string(&self.task.grammar).expect("serializes"));
        text.push_str(&self.seed.to_string());
        format!("{:016x}", fnv1a(text.as_bytes()))
    }
}

/// Pretrains (or loads) the backbone described by `config`. With a cache
/// directory, pretrained backbones are reused across runs.
pub fn prepare_backbone(config: &ExperimentConfig, cache: Option<&Path>) -> Result<UnitLm<f32>> {
    if let Some(path) = &config.backbone.checkpoint {
        let mut lm: UnitLm<f32> = load_checkpoint(&fs::read(path).map_err(|e| {
            Error::Config(format!("backbone checkpoint {}: {e}", path.display()))
        })?)?;
        lm.freeze();
        return Ok(lm);
    }
    let cached = cache.map(|dir| dir.join(format!("backbone-{}.spul", config.backbone_key())));
    if let Some(path) = cached.as_ref().filter(|p| p.exists()) {
        let mut lm: UnitLm<f32> = load_checkpoint(&fs::read(path)?)?;
        lm.freeze();
        return Ok(lm);
    }
    let b = &config.backbone;
    let lm_config = b.lm_config(config.task.grammar.n_units);
    let mut lm = UnitLm::new(lm_config, config.stage_seed("init"))?;
    let spec = SynthSpec {
        grammar: config.task.grammar.clone(),
        task: CorpusTask::Free {
            min_words: b.min_words,
            max_words: b.max_words,
        },
        dedup: true,
        features: None,
    };
    let corpus: Vec<Vec<usize>> = synth_corpus(&spec, config.stage_seed("pretrain-corpus"), b.corpus_size)?
        .into_iter()
        .map(|u| u.units)
        .collect();
    let pc = PretrainConfig {
        seed: config.stage_seed("pretrain"),
        ..b.pretrain.clone()
    };
    match b.variant {
        Variant::DecoderOnly => pretrain_next_token(&mut lm, &corpus, &pc)?,
        Variant::EncoderDecoder => pretrain_denoise(&mut lm, &corpus, &b.noise, &pc)?,
    };
    lm.freeze();
    if let Some(path) = cached {
        fs::create_dir_all(path.parent().expect("cache file has a parent"))?;
        fs::write(path, save_checkpoint(&lm))?;
    }
    Ok(lm)
}

/// Train, valid and test splits: loaded from the configured paths, or
/// synthesized with stage seeds. Few-shot subsampling is not applied.
pub fn load_splits(config: &ExperimentConfig) -> Result<(Dataset, Dataset, Dataset)> {
    let spec = config.synth_spec();
    let split = |path: &Option<PathBuf>, stage: &str, n: usize| -> Result<Dataset> {
        match path {
            Some(p) => load_dataset(p).map_err(|e| Error::Config(format!("dataset {}: {e}", p.display()))),
            None => Ok(Dataset::from_synth(&synth_corpus(&spec, config.stage_seed(stage), n)?)),
        }
    };
    Ok((
        split(&config.task.train_path, "train", config.task.n_train)?,
        split(&config.task.valid_path, "valid", config.task.n_valid)?,
        split(&config.task.test_path, "test", config.task.n_test)?,
    ))
}

/// Backbone, task and bound data splits of one experiment.
pub struct Prepared {
    pub config: ExperimentConfig,
    pub lm: UnitLm<f32>,
    pub grammar: Grammar,
    pub task: TaskSpec,
    pub train: Dataset,
    pub valid: Dataset,
    pub test: Dataset,
}

impl Prepared {
    pub fn new(config: ExperimentConfig, cache: Option<&Path>) -> Result<Self> {
        config.validate()?;
        let grammar = Grammar::new(&config.task.grammar)?;
        let lm = prepare_backbone(&config, cache)?;
        let mut task = config.task_spec(&grammar);
        let (mut train, valid, test) = load_splits(&config)?;
        if task.labels.is_empty() && task.kind != TaskKind::Generation {
            let mut labels: Vec<String> = train.examples.iter().flat_map(|e| e.labels.clone()).collect();
            labels.sort();
            labels.dedup();
            task.labels = labels;
        }
        if let Some(k) = config.task.fewshot {
            train = fewshot_subsample(&train, k, config.stage_seed("fewshot"))?;
        }
        Ok(Self {
            config,
            lm,
            grammar,
            task,
            train,
            valid,
            test,
        })
    }

    pub fn bound(&self, ds: &Dataset) -> Result<Vec<TuneExample>> {
        bind_to_task(ds, &self.task, self.lm.vocab())
    }

    pub fn initial_prompts(&self) -> PromptSet<f32> {
        PromptSet::new(self.lm.config(), self.config.prompts, self.config.stage_seed("prompts"))
    }

    pub fn initial_verbalizer(&self, kind: VerbalizerKind) -> Result<Verbalizer<f32>> {
        let n = self.task.labels.len();
        Ok(match kind {
            VerbalizerKind::Identity => Verbalizer::Identity,
            VerbalizerKind::Fixed => Verbalizer::Fixed(FixedVerbalizer::from_seed(
                n,
                self.lm.vocab(),
                self.config.stage_seed("verbalizer"),
            )?),
            VerbalizerKind::Learnable => Verbalizer::Learnable(LearnableVerbalizer::new(
                n,
                self.lm.config().vocab_size(),
                self.config.verbalizer.tau,
            )?),
        })
    }

    /// Tunes fresh prompts and a fresh verbalizer of `kind`.
    pub fn tune(&self, kind: VerbalizerKind) -> Result<Tuned> {
        let mut prompts = self.initial_prompts();
        let mut verbalizer = self.initial_verbalizer(kind)?;
        let train = self.bound(&self.train)?;
        let valid = self.bound(&self.valid)?;
        let config = TuneConfig {
            seed: self.config.stage_seed("tune"),
            ..self.config.train.clone()
        };
        let report = prompt_tune(&self.lm, &mut prompts, &mut verbalizer, &train, &valid, &config)?;
        Ok(Tuned {
            prompts,
            verbalizer,
            report,
        })
    }

    /// Decodes every test example.
    pub fn predict(&self, tuned: &Tuned, examples: &[TuneExample]) -> Result<Vec<TaskOutput>> {
        let framer = Framer::new(&self.lm, &tuned.prompts, &tuned.verbalizer)?;
        let mut decode = self.config.decode;
        if self.task.kind == TaskKind::Generation {
            let longest = examples.iter().map(|e| e.labels.len()).max().unwrap_or(0);
            decode.max_len = decode.max_len.min(longest + 1).max(1);
        }
        examples
            .par_iter()
            .map(|ex| run_task(framer, &self.task, &ex.source, &decode))
            .collect()
    }

    /// Task metrics on the test split.
    pub fn evaluate(&self, tuned: &Tuned) -> Result<BTreeMap<String, f64>> {
        let test = self.bound(&self.test)?;
        let outputs = self.predict(tuned, &test)?;
        let mut m = BTreeMap::new();
        match self.task.kind {
            TaskKind::Classification { .. } => {
                let pairs: Vec<LabelPair> = outputs
                    .iter()
                    .zip(&test)
                    .map(|(o, ex)| (o.labels.clone(), ex.labels.iter().map(|&l| Some(l)).collect()))
                    .collect();
                m.insert("accuracy".into(), accuracy(&pairs));
                let unmapped = outputs.iter().flat_map(|o| &o.labels).filter(|l| l.is_none()).count();
                m.insert("unmapped_rate".into(), unmapped as f64 / outputs.len().max(1) as f64);
            }
            TaskKind::Sequence => {
                let pairs: Vec<LabelPair> = outputs
                    .iter()
                    .zip(&test)
                    .map(|(o, ex)| (o.labels.clone(), ex.labels.iter().map(|&l| Some(l)).collect()))
                    .collect();
                m.insert("cer".into(), corpus_error_rate(&pairs)?);
                let exact = pairs.iter().filter(|(h, r)| h == r).count();
                m.insert("exact_match".into(), exact as f64 / pairs.len().max(1) as f64);
            }
            TaskKind::Generation => {
                let hyps: Vec<Vec<usize>> = outputs.iter().map(|o| o.ids.clone()).collect();
                let refs: Vec<Vec<usize>> = test.iter().map(|e| e.labels.clone()).collect();
                m.insert("bleu".into(), bleu(&hyps, &refs)?);
                let ab: Vec<f64> = hyps.iter().filter_map(|h| auto_bleu(h, 2).ok()).collect();
                if !ab.is_empty() {
                    m.insert("auto_bleu_2".into(), ab.iter().sum::<f64>() / ab.len() as f64);
                }
                let framer = Framer::new(&self.lm, &tuned.prompts, &tuned.verbalizer)?;
                m.insert("target_loglik".into(), -mean_loss(&framer, &test)?);
                let control_prompts = self.initial_prompts();
                let control = Framer::new(&self.lm, &control_prompts, &tuned.verbalizer)?;
                m.insert("control_target_loglik".into(), -mean_loss(&control, &test)?);
            }
        }
        // Only transcription labels are symbol names.
        if self.task.kind == TaskKind::Sequence {
            if let Some(score) = self.symbol_match(tuned) {
                m.insert("verbalizer_top1_symbol_match".into(), score);
            }
        }
        if self.config.task.probe && matches!(self.task.kind, TaskKind::Classification { slots: 1 }) {
            let p = linear_probe_baseline(
                &self.lm,
                &self.task,
                &self.bound(&self.train)?,
                &test,
                &ProbeConfig::default(),
            )?;
            m.insert("probe_accuracy".into(), p.accuracy);
            m.insert("probe_params".into(), p.params as f64);
        }
        Ok(m)
    }

    /// Writes the backbone, prompt and verbalizer checkpoints, the weight
    /// export (learnable verbalizer only) and the resolved config.
    pub fn save(&self, tuned: &Tuned, out_dir: &Path) -> Result<()> {
        fs::create_dir_all(out_dir)?;
        let hash = self.lm.backbone_hash();
        fs::write(out_dir.join("backbone.spul"), save_checkpoint(&self.lm))?;
        fs::write(out_dir.join("prompts.spul"), save_prompts(&tuned.prompts, hash))?;
        fs::write(out_dir.join("verbalizer.spul"), save_verbalizer(&tuned.verbalizer, &self.task.labels)?)?;
        if let Verbalizer::Learnable(v) = &tuned.verbalizer {
            let rows = export_weights(
                v,
                &self.annotations(),
                &self.task.labels,
                &self.grammar.symbol_names(),
                self.config.verbalizer.export_top,
            );
            write_weights_csv(fs::File::create(out_dir.join("verbalizer_weights.csv"))?, &rows)?;
        }
        fs::write(out_dir.join("config.toml"), self.config.to_toml())?;
        Ok(())
    }

    /// Latent-symbol annotations of every unit in the training split.
    pub fn annotations(&self) -> UnitAnnotations {
        let mut ann = UnitAnnotations::new(self.lm.config().vocab_size());
        for ex in &self.train.examples {
            if let Some(symbols) = ex.unit_symbols() {
                ann.add(&ex.units, &symbols);
            }
        }
        ann
    }

    /// Fraction of classes whose top-weighted unit is dominantly annotated
    /// with the class's own symbol name.
    pub fn symbol_match(&self, tuned: &Tuned) -> Option<f64> {
        let Verbalizer::Learnable(v) = &tuned.verbalizer else {
            return None;
        };
        let rows = export_weights(v, &self.annotations(), &self.task.labels, &self.grammar.symbol_names(), 1);
        if rows.is_empty() {
            return None;
        }
        let hits = rows.iter().filter(|r| r.symbol == r.class).count();
        Some(hits as f64 / rows.len() as f64)
    }
}

/// Decoded labels against reference labels for one example.
type LabelPair = (Vec<Option<usize>>, Vec<Option<usize>>);

pub struct Tuned {
    pub prompts: PromptSet<f32>,
    pub verbalizer: Verbalizer<f32>,
    pub report: TuneReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub schema_version: u32,
    pub metrics: BTreeMap<String, f64>,
    pub trainable_params: usize,
    pub prompt_params: usize,
    pub verbalizer_params: usize,
    pub tune_steps: usize,
    pub best_step: Option<usize>,
    pub wall_clock_secs: f64,
    pub fingerprint: String,
    pub seed: u64,
}

impl MetricsReport {
    pub fn new(config: &ExperimentConfig, tuned: &Tuned, metrics: BTreeMap<String, f64>, secs: f64) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            metrics,
            trainable_params: count_trainable(&tuned.prompts, &tuned.verbalizer),
            prompt_params: tuned.prompts.num_params(),
            verbalizer_params: tuned.verbalizer.num_trainable(),
            tune_steps: tuned.report.steps,
            best_step: tuned.report.best_step,
            wall_clock_secs: secs,
            fingerprint: config.fingerprint(),
            seed: config.seed,
        }
    }
}

/// Prepare, tune, evaluate, and write `report.json` plus the backbone,
/// prompt and verbalizer checkpoints into `out_dir`.
pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path, cache: Option<&Path>) -> Result<MetricsReport> {
    let start = Instant::now();
    let prepared = Prepared::new(config.clone(), cache)?;
    let tuned = prepared.tune(config.verbalizer_kind())?;
    let metrics = prepared.evaluate(&tuned)?;

    prepared.save(&tuned, out_dir)?;

    let report = MetricsReport::new(config, &tuned, metrics, start.elapsed().as_secs_f64());
    fs::write(out_dir.join("report.json"), serde_json::to_string_pretty(&report)?)?;
    Ok(report)
}

/// The cache directory named by [`CACHE_ENV`], if set.
pub fn cache_dir_from_env() -> Option<PathBuf> {
    std::env::var_os(CACHE_ENV).map(PathBuf::from)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TINY: &str = r#"
seed = 3

[backbone]
n_layers = 1
n_heads = 2
d_model = 16
d_ff = 32
max_positions = 64
corpus_size = 40

[backbone.pretrain]
epochs = 1

[task]
corpus = "command"
classes = 3
n_train = 12
n_valid = 4
n_test = 6

[task.grammar]
n_symbols = 8
n_units = 30
lexicon_size = 6

[prompts]
length = 0

[train]
steps = 0
"#;

    #[test]
    fn seed_is_mandatory_and_overrides_apply() {
        assert!(ExperimentConfig::parse("[task]\ncorpus = \"command\"\n", &[]).is_err());
        let c = ExperimentConfig::parse(
            TINY,
            &[("train.steps".into(), "7".into()), ("prompts.length".into(), "2".into())],
        )
        .unwrap();
        assert_eq!(c.train.steps, 7);
        assert_eq!(c.prompts.length, 2);
        assert_ne!(c.fingerprint(), ExperimentConfig::parse(TINY, &[]).unwrap().fingerprint());
    }

    #[test]
    fn zero_prompt_fixed_baseline_runs_and_repeats() {
        let config = ExperimentConfig::parse(TINY, &[]).unwrap();
        let out = tempfile::tempdir().unwrap();
        let cache = tempfile::tempdir().unwrap();
        let a = run_experiment(&config, out.path(), Some(cache.path())).unwrap();
        let b = run_experiment(&config, out.path(), Some(cache.path())).unwrap();
        assert_eq!(a.metrics, b.metrics);
        assert_eq!(a.trainable_params, 0);
        assert!(out.path().join("report.json").exists());
        assert!(a.metrics.contains_key("accuracy"));
    }

    #[test]
    fn fewshot_flows_through() {
        let config = ExperimentConfig::parse(TINY, &[("task.fewshot".into(), "2".into())]).unwrap();
        let cache = tempfile::tempdir().unwrap();
        let p = Prepared::new(config, Some(cache.path())).unwrap();
        assert_eq!(p.train.len(), 6);
    }
}
