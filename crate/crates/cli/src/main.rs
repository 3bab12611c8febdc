use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use unitprompt::container::Container;
use unitprompt::decode::{run_task, DecodeConfig, Strategy};
use unitprompt::harness::{
    cache_dir_from_env, fewshot_subsample, load_dataset, load_splits, prepare_backbone, run_experiment,
    save_dataset, ExperimentConfig, MetricsReport, Prepared, TaskKind, TaskSpec, Tuned,
};
use unitprompt::prompts::{count_trainable, load_prompts, Framer, PromptSet, TuneReport};
use unitprompt::unitizer::{
    data_size_bits, deduplicate, kmeans_fit, quantize, read_features, read_unit_file, symbol_name,
    synth_corpus, write_features, write_unit_file, DataFormat, FeatureSpec, QuantizerModel, SynthSpec,
};
use unitprompt::unitlm::{load_checkpoint, save_checkpoint, UnitLm};
use unitprompt::verbalizer::{export_weights, load_verbalizer, write_weights_csv, UnitAnnotations, Verbalizer};

/// Prompt tuning of frozen unit language models.
///
/// Commands that take `--config` also accept `--section.key value` (and
/// `--seed N`) overrides for any config field.
#[derive(Parser)]
#[command(name = "unitprompt", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Map feature files to unit sequences, optionally fitting k-means first.
    Quantize {
        #[arg(long)]
        model: PathBuf,
        /// Feature files (SPFM), one utterance each.
        #[arg(long = "in", required = true, num_args = 1..)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        dedup: bool,
        /// Fit a quantizer with this many clusters and write it to `--model`.
        #[arg(long)]
        fit: Option<usize>,
        #[arg(long, default_value_t = 100)]
        iters: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Storage needed for a duration of speech in one format.
    Datasize {
        /// waveform, ssl, ssl:<dim> or units:<clusters>
        #[arg(long)]
        format: String,
        #[arg(long)]
        seconds: f64,
    },
    /// Write the train/valid/test splits of the configured task as JSONL.
    Synth {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
        /// Also write frame features of this width for the train split.
        #[arg(long)]
        features_dim: Option<usize>,
    },
    /// Pretrain (or fetch from the cache) the configured backbone.
    Pretrain {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Tune prompts and verbalizer; writes checkpoints into `--out`.
    PromptTune {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate tuned checkpoints on the test split.
    Eval {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        prompts: PathBuf,
        #[arg(long)]
        verbalizer: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pretrain if needed, tune and evaluate in one go.
    Run {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Decode a unit file with a tuned prompt set.
    Generate {
        #[arg(long)]
        backbone: PathBuf,
        #[arg(long)]
        prompts: PathBuf,
        /// Omit for raw-unit generation.
        #[arg(long)]
        verbalizer: Option<PathBuf>,
        /// classification, sequence or generation
        #[arg(long)]
        task: String,
        /// Seed fraction for generation; the whole input is the seed otherwise.
        #[arg(long)]
        ratio: Option<f64>,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 5)]
        beam: usize,
        #[arg(long, default_value_t = 64)]
        max_len: usize,
        #[arg(long)]
        greedy: bool,
    },
    /// Keep `k` examples per class.
    Fewshot {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Top-weighted units per class of a learnable verbalizer, as CSV.
    InspectVerbalizer {
        #[arg(long)]
        verbalizer: PathBuf,
        /// Dataset whose latent-symbol metadata annotates the units.
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long, default_value_t = 5)]
        top: usize,
        /// Defaults to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tabulate report.json files; `--csv` writes the table as CSV.
    Report {
        #[arg(required = true)]
        reports: Vec<PathBuf>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ConfigArgs {
    #[arg(long)]
    config: PathBuf,
    /// Filled from `--section.key value` pairs before clap sees the args.
    #[arg(skip)]
    overrides: Overrides,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        ExperimentConfig::load(&self.config, &self.overrides)
            .with_context(|| format!("loading {}", self.config.display()))
    }
}

type Overrides = Vec<(String, String)>;

/// Pulls `--a.b value` and `--seed value` out of argv. Plain flags stay.
fn split_overrides(args: Vec<String>) -> Result<(Vec<String>, Overrides)> {
    let is_config_cmd = args.get(1).is_some_and(|c| {
        ["synth", "pretrain", "prompt-tune", "eval", "run"].contains(&c.as_str())
    });
    if !is_config_cmd {
        return Ok((args, Vec::new()));
    }
    let mut kept = Vec::new();
    let mut overrides = Vec::new();
    let mut it = args.into_iter();
    while let Some(arg) = it.next() {
        let key = arg.strip_prefix("--").filter(|k| k.contains('.') || *k == "seed");
        match key {
            Some(k) => {
                let (k, v) = match k.split_once('=') {
                    Some((k, v)) => (k.to_string(), v.to_string()),
                    None => {
                        let v = it.next().with_context(|| format!("--{k} needs a value"))?;
                        (k.to_string(), v)
                    }
                };
                overrides.push((k, v));
            }
            None => kept.push(arg),
        }
    }
    Ok((kept, overrides))
}

fn main() -> Result<()> {
    let (args, overrides) = split_overrides(std::env::args().collect())?;
    let mut cli = Cli::parse_from(args);
    if let Command::Synth { cfg, .. }
    | Command::Pretrain { cfg, .. }
    | Command::PromptTune { cfg, .. }
    | Command::Eval { cfg, .. }
    | Command::Run { cfg, .. } = &mut cli.command
    {
        cfg.overrides = overrides;
    }
    let cache = cache_dir_from_env();
    let cache = cache.as_deref();

    match cli.command {
        Command::Quantize {
            model,
            inputs,
            out,
            dedup,
            fit,
            iters,
            seed,
        } => {
            let features = inputs
                .iter()
                .map(|p| read_features(&fs::read(p)?).with_context(|| p.display().to_string()))
                .collect::<Result<Vec<_>>>()?;
            let q = match fit {
                Some(k) => {
                    let fitted = kmeans_fit(&features, k, iters, seed)?;
                    eprintln!(
                        "k-means: {} iterations, inertia {:.4}",
                        fitted.iterations,
                        fitted.inertia.last().copied().unwrap_or(0.0)
                    );
                    fs::write(&model, fitted.model.to_container().to_bytes())?;
                    fitted.model
                }
                None => QuantizerModel::from_container(&Container::from_bytes(&fs::read(&model)?)?)?,
            };
            let mut units = Vec::with_capacity(features.len());
            for f in &features {
                let u = quantize(&q, f)?;
                units.push(if dedup { deduplicate(&u) } else { u });
            }
            write_unit_file(BufWriter::new(fs::File::create(&out)?), &units)?;
        }
        Command::Datasize { format, seconds } => {
            let size = data_size_bits(DataFormat::parse(&format)?, seconds)?;
            println!("{format}\t{seconds}s\t{} bits\tratio {:.4e}", size.bits, size.ratio_to_waveform);
        }
        Command::Synth {
            cfg,
            out,
            features_dim,
        } => {
            let config = cfg.load()?;
            let (train, valid, test) = load_splits(&config)?;
            fs::create_dir_all(&out)?;
            for (name, ds) in [("train", &train), ("valid", &valid), ("test", &test)] {
                save_dataset(ds, out.join(format!("{name}.jsonl")))?;
                println!("{name}: {} examples", ds.len());
            }
            if let Some(dim) = features_dim {
                write_feature_files(&config, dim, &out.join("features"))?;
            }
        }
        Command::Pretrain { cfg, out } => {
            let config = cfg.load()?;
            let start = Instant::now();
            let lm = prepare_backbone(&config, cache)?;
            fs::write(&out, save_checkpoint(&lm))?;
            println!(
                "backbone {:016x} ({} parameters) in {:.1}s",
                lm.backbone_hash(),
                lm.params().numel(),
                start.elapsed().as_secs_f64()
            );
        }
        Command::PromptTune { cfg, out } => {
            let config = cfg.load()?;
            let prepared = Prepared::new(config, cache)?;
            let tuned = prepared.tune(prepared.config.verbalizer_kind())?;
            prepared.save(&tuned, &out)?;
            fs::write(out.join("tune_report.json"), serde_json::to_string_pretty(&tuned.report)?)?;
            println!(
                "{} steps, best step {:?}, {} trainable parameters",
                tuned.report.steps,
                tuned.report.best_step,
                count_trainable(&tuned.prompts, &tuned.verbalizer)
            );
        }
        Command::Eval {
            cfg,
            prompts,
            verbalizer,
            out,
        } => {
            let config = cfg.load()?;
            let start = Instant::now();
            let prepared = Prepared::new(config, cache)?;
            let hash = prepared.lm.backbone_hash();
            let tuned = Tuned {
                prompts: load_prompts(&fs::read(&prompts)?, hash)?,
                verbalizer: load_verbalizer(&fs::read(&verbalizer)?)?.0,
                report: TuneReport::default(),
            };
            let metrics = prepared.evaluate(&tuned)?;
            let report = MetricsReport::new(&prepared.config, &tuned, metrics, start.elapsed().as_secs_f64());
            let json = serde_json::to_string_pretty(&report)?;
            match out {
                Some(path) => fs::write(path, json)?,
                None => println!("{json}"),
            }
        }
        Command::Run { cfg, out } => {
            let config = cfg.load()?;
            let report = run_experiment(&config, &out, cache)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Generate {
            backbone,
            prompts,
            verbalizer,
            task,
            ratio,
            input,
            out,
            beam,
            max_len,
            greedy,
        } => {
            let lm: UnitLm<f32> = load_checkpoint(&fs::read(&backbone)?)?;
            let prompt_set: PromptSet<f32> = load_prompts(&fs::read(&prompts)?, lm.backbone_hash())?;
            let (verbalizer, labels) = match verbalizer {
                Some(p) => load_verbalizer(&fs::read(p)?)?,
                None => (Verbalizer::Identity, Vec::new()),
            };
            let spec = TaskSpec {
                kind: TaskKind::parse(&task)?,
                labels,
                ratio,
            };
            spec.validate()?;
            let decode = DecodeConfig {
                strategy: if greedy { Strategy::Greedy } else { Strategy::Beam },
                beam,
                max_len,
                ..DecodeConfig::default()
            };
            let framer = Framer::new(&lm, &prompt_set, &verbalizer)?;
            let sources = read_unit_file(BufReader::new(fs::File::open(&input)?))?;
            let mut w = BufWriter::new(fs::File::create(&out)?);
            for source in &sources {
                let o = run_task(framer, &spec, source, &decode)?;
                let names: Vec<Option<&str>> = o
                    .labels
                    .iter()
                    .map(|l| l.and_then(|l| spec.labels.get(l)).map(String::as_str))
                    .collect();
                let line = serde_json::json!({
                    "source": source,
                    "ids": o.ids,
                    "labels": names,
                    "logprob": o.logprob,
                });
                writeln!(w, "{line}")?;
            }
            w.flush()?;
            println!("{} utterances decoded", sources.len());
        }
        Command::Fewshot { input, out, k, seed } => {
            let ds = load_dataset(&input)?;
            let sub = fewshot_subsample(&ds, k, seed)?;
            save_dataset(&sub, &out)?;
            println!("{} of {} examples kept", sub.len(), ds.len());
        }
        Command::InspectVerbalizer {
            verbalizer,
            dataset,
            top,
            out,
        } => {
            let (v, labels) = load_verbalizer::<f32>(&fs::read(&verbalizer)?)?;
            let Verbalizer::Learnable(v) = v else {
                bail!("{} holds a {} verbalizer; only learnable ones have weights", verbalizer.display(), v.kind());
            };
            let mut ann = UnitAnnotations::new(v.vocab_size());
            let mut n_symbols = 0;
            if let Some(path) = dataset {
                for ex in load_dataset(&path)?.examples {
                    if let Some(symbols) = ex.unit_symbols() {
                        n_symbols = symbols.iter().flatten().fold(n_symbols, |m, &s| m.max(s + 1));
                        ann.add(&ex.units, &symbols);
                    }
                }
            }
            let symbols: Vec<String> = (0..n_symbols).map(symbol_name).collect();
            let rows = export_weights(&v, &ann, &labels, &symbols, top);
            match out {
                Some(path) => write_weights_csv(fs::File::create(path)?, &rows)?,
                None => write_weights_csv(std::io::stdout().lock(), &rows)?,
            }
        }
        Command::Report { reports, csv } => report_table(&reports, csv.as_deref())?,
    }
    Ok(())
}

fn write_feature_files(config: &ExperimentConfig, dim: usize, dir: &Path) -> Result<()> {
    let spec = SynthSpec {
        features: Some(FeatureSpec { dim, spread: 0.1 }),
        ..config.synth_spec()
    };
    let utterances = synth_corpus(&spec, config.stage_seed("train"), config.task.n_train)?;
    fs::create_dir_all(dir)?;
    let mut frame_units = Vec::with_capacity(utterances.len());
    for (i, u) in utterances.iter().enumerate() {
        let f = u.features.as_ref().expect("features were requested");
        fs::write(dir.join(format!("{i:05}.spfm")), write_features(f))?;
        frame_units.push(u.frame_units.clone());
    }
    // Ground-truth frame units, for checking a fitted quantizer.
    write_unit_file(BufWriter::new(fs::File::create(dir.join("frame_units.txt"))?), &frame_units)?;
    println!("{} feature files in {}", utterances.len(), dir.display());
    Ok(())
}

fn report_table(paths: &[PathBuf], csv: Option<&Path>) -> Result<()> {
    let mut reports = Vec::new();
    for p in paths {
        let r: MetricsReport = serde_json::from_reader(BufReader::new(fs::File::open(p)?))
            .with_context(|| p.display().to_string())?;
        reports.push((p.display().to_string(), r));
    }
    let metric_names: Vec<String> = reports
        .iter()
        .flat_map(|(_, r)| r.metrics.keys().cloned())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut header = vec!["report".to_string(), "seed".into(), "trainable_params".into()];
    header.extend(metric_names.iter().cloned());
    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|(name, r)| {
            let mut row = vec![name.clone(), r.seed.to_string(), r.trainable_params.to_string()];
            row.extend(metric_names.iter().map(|m| {
                r.metrics.get(m).map(|v| format!("{v:.4}")).unwrap_or_default()
            }));
            row
        })
        .collect();
    if let Some(path) = csv {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(&header)?;
        for row in &rows {
            w.write_record(row)?;
        }
        w.flush()?;
    }
    let widths: Vec<usize> = (0..header.len())
        .map(|c| rows.iter().map(|r| r[c].len()).chain([header[c].len()]).max().unwrap_or(0))
        .collect();
    let fmt = |cells: &[String]| -> String {
        cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect::<Vec<_>>()
            .join("  ")
    };
    println!("{}", fmt(&header));
    for row in &rows {
        println!("{}", fmt(row));
    }
    Ok(())
}
