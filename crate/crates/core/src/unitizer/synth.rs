//! Synthetic "speech" corpora.
//!
//! A latent symbol sequence (the stand-in for phonemes) is drawn from a
//! small grammar, then every symbol is emitted as a run of frames whose unit
//! ids come from that symbol's private unit set. Noise frames draw from the
//! units no symbol owns. Metadata keeps the latent symbol behind every unit,
//! which later serves as the annotation oracle for verbalizer analysis.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::FeatureMatrix;
use crate::error::{Error, Result};

const COMMAND_NAMES: [&str; 12] = [
    "up", "down", "left", "right", "yes", "no", "stop", "go", "on", "off", "forward", "back",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GrammarSpec {
    /// Number of latent symbols.
    pub n_symbols: usize,
    /// Content unit ids available, `0..n_units`.
    pub n_units: usize,
    /// Size of each symbol's private unit set.
    pub units_per_symbol: usize,
    pub min_duration: usize,
    pub max_duration: usize,
    /// Probability that a frame keeps the previous frame's unit within a
    /// symbol. 1.0 emits one unit per symbol instance.
    pub stickiness: f64,
    /// Probability that a frame is replaced by a noise unit. The first frame
    /// of every symbol is always clean.
    pub noise: f64,
    pub lexicon_size: usize,
    pub min_word_len: usize,
    pub max_word_len: usize,
    /// Fixes the emission map, lexicon and feature prototypes.
    pub seed: u64,
}

impl Default for GrammarSpec {
    fn default() -> Self {
        Self {
            n_symbols: 20,
            n_units: 100,
            units_per_symbol: 3,
            min_duration: 1,
            max_duration: 3,
            stickiness: 1.0,
            noise: 0.0,
            lexicon_size: 24,
            min_word_len: 2,
            max_word_len: 4,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CorpusTask {
    /// Unlabeled word sequences drawn from the lexicon.
    Free { min_words: usize, max_words: usize },
    /// One class marker word per utterance, optionally surrounded by filler
    /// words. The label is the class name.
    Command { classes: usize, max_filler_words: usize },
    /// Word sequences as in `Free`; labels are the latent symbol names in
    /// order.
    Transcription { min_words: usize, max_words: usize },
}

/// Gaussian frame features around per-unit prototypes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub dim: usize,
    pub spread: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub grammar: GrammarSpec,
    pub task: CorpusTask,
    /// Collapse repeated units in the returned unit sequence.
    #[serde(default = "default_true")]
    pub dedup: bool,
    #[serde(default)]
    pub features: Option<FeatureSpec>,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SynthMeta {
    /// Latent symbol behind each returned unit; `None` for noise.
    pub symbols: Vec<Option<usize>>,
    /// The latent symbol string the utterance was generated from.
    pub latent: Vec<usize>,
    pub labels: Vec<String>,
    pub class: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthUtterance {
    pub units: Vec<usize>,
    /// Frame features (before deduplication), when requested.
    pub features: Option<FeatureMatrix>,
    /// Unit id of every frame (before deduplication).
    pub frame_units: Vec<usize>,
    pub meta: SynthMeta,
}

/// The generator state derived from a [`GrammarSpec`].
#[derive(Debug, Clone)]
pub struct Grammar {
    pub spec: GrammarSpec,
    /// Units owned by each symbol.
    pub emission: Vec<Vec<usize>>,
    /// Owning symbol of each unit.
    pub owner: Vec<Option<usize>>,
    pub noise_pool: Vec<usize>,
    pub lexicon: Vec<Vec<usize>>,
}

pub fn symbol_name(s: usize) -> String {
    if s < 26 {
        ((b'a' + s as u8) as char).to_string()
    } else {
        format!("s{s}")
    }
}

pub fn class_name(c: usize) -> String {
    COMMAND_NAMES
        .get(c)
        .map(|s| s.to_string())
        .unwrap_or_else(|| format!("class{c}"))
}

impl Grammar {
    pub fn new(spec: &GrammarSpec) -> Result<Self> {
        let cfg = |m: String| Err(Error::Config(m));
        if spec.n_symbols < 2 || spec.units_per_symbol == 0 {
            return cfg("grammar needs at least two symbols and one unit per symbol".into());
        }
        if spec.n_symbols * spec.units_per_symbol > spec.n_units {
            return cfg(format!(
                "{} symbols x {} units do not fit in {} units",
                spec.n_symbols, spec.units_per_symbol, spec.n_units
            ));
        }
        if spec.min_duration == 0 || spec.min_duration > spec.max_duration {
            return cfg("durations must satisfy 1 <= min <= max".into());
        }
        if spec.min_word_len == 0 || spec.min_word_len > spec.max_word_len {
            return cfg("word lengths must satisfy 1 <= min <= max".into());
        }
        if !(0.0..1.0).contains(&spec.noise) || !(0.0..=1.0).contains(&spec.stickiness) {
            return cfg("noise must be in [0,1) and stickiness in [0,1]".into());
        }
        if spec.lexicon_size == 0 {
            return cfg("lexicon must not be empty".into());
        }

        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let mut units: Vec<usize> = (0..spec.n_units).collect();
        units.shuffle(&mut rng);
        let mut owner = vec![None; spec.n_units];
        let emission: Vec<Vec<usize>> = (0..spec.n_symbols)
            .map(|s| {
                let set = units[s * spec.units_per_symbol..(s + 1) * spec.units_per_symbol].to_vec();
                for &u in &set {
                    owner[u] = Some(s);
                }
                set
            })
            .collect();
        let mut noise_pool = units[spec.n_symbols * spec.units_per_symbol..].to_vec();
        noise_pool.sort_unstable();

        let mut lexicon: Vec<Vec<usize>> = Vec::with_capacity(spec.lexicon_size);
        let mut attempts = 0;
        while lexicon.len() < spec.lexicon_size {
            attempts += 1;
            if attempts > 100_000 {
                return cfg("cannot build a lexicon of distinct words".into());
            }
            let len = rng.gen_range(spec.min_word_len..=spec.max_word_len);
            let word = random_symbols(&mut rng, spec.n_symbols, len, None);
            if !lexicon.contains(&word) {
                lexicon.push(word);
            }
        }
        Ok(Self {
            spec: spec.clone(),
            emission,
            owner,
            noise_pool,
            lexicon,
        })
    }

    pub fn symbol_names(&self) -> Vec<String> {
        (0..self.spec.n_symbols).map(symbol_name).collect()
    }

    /// Class marker word of `class` for command corpora.
    pub fn marker(&self, class: usize) -> &[usize] {
        &self.lexicon[class]
    }

    fn emit(&self, rng: &mut ChaCha8Rng, latent: &[usize]) -> (Vec<usize>, Vec<Option<usize>>) {
        let spec = &self.spec;
        let mut frames = Vec::new();
        let mut symbols = Vec::new();
        for &s in latent {
            let dur = rng.gen_range(spec.min_duration..=spec.max_duration);
            let set = &self.emission[s];
            let mut unit = *set.choose(rng).unwrap();
            for f in 0..dur {
                if f > 0 && rng.gen::<f64>() >= spec.stickiness {
                    unit = *set.choose(rng).unwrap();
                }
                if f > 0 && spec.noise > 0.0 && rng.gen::<f64>() < spec.noise {
                    let noisy = match self.noise_pool.choose(rng) {
                        Some(&u) => u,
                        None => rng.gen_range(0..spec.n_units),
                    };
                    frames.push(noisy);
                    symbols.push(self.owner[noisy]);
                } else {
                    frames.push(unit);
                    symbols.push(Some(s));
                }
            }
        }
        (frames, symbols)
    }

    fn words_latent(&self, words: &[usize]) -> Vec<usize> {
        words.iter().flat_map(|&w| self.lexicon[w].clone()).collect()
    }
}

fn random_symbols(rng: &mut ChaCha8Rng, n_symbols: usize, len: usize, prev: Option<usize>) -> Vec<usize> {
    let mut out = Vec::with_capacity(len);
    let mut last = prev;
    for _ in 0..len {
        let s = loop {
            let s = rng.gen_range(0..n_symbols);
            if Some(s) != last {
                break s;
            }
        };
        out.push(s);
        last = Some(s);
    }
    out
}

fn has_adjacent_repeat(xs: &[usize]) -> bool {
    xs.windows(2).any(|w| w[0] == w[1])
}

fn count_occurrences(haystack: &[usize], needle: &[usize]) -> usize {
    if needle.is_empty() || needle.len() > haystack.len() {
        return 0;
    }
    haystack.windows(needle.len()).filter(|w| *w == needle).count()
}

impl SynthSpec {
    pub fn validate(&self, grammar: &Grammar) -> Result<()> {
        match self.task {
            CorpusTask::Free {
                min_words,
                max_words,
            }
            | CorpusTask::Transcription {
                min_words,
                max_words,
            } => {
                if min_words == 0 || min_words > max_words {
                    return Err(Error::Config("word counts must satisfy 1 <= min <= max".into()));
                }
            }
            CorpusTask::Command {
                classes,
                max_filler_words,
            } => {
                if classes == 0 || classes > grammar.lexicon.len() {
                    return Err(Error::Config(format!(
                        "{classes} classes need as many lexicon words (have {})",
                        grammar.lexicon.len()
                    )));
                }
                if max_filler_words > 0 && classes == grammar.lexicon.len() {
                    return Err(Error::Config("filler words need lexicon entries beyond the markers".into()));
                }
            }
        }
        if let Some(f) = self.features {
            if f.dim == 0 || !(f.spread >= 0.0) {
                return Err(Error::Config("feature dim must be >= 1 and spread >= 0".into()));
            }
        }
        Ok(())
    }

    /// Label set of the task: class names, symbol names, or empty.
    pub fn label_set(&self, grammar: &Grammar) -> Vec<String> {
        match self.task {
            CorpusTask::Free { .. } => Vec::new(),
            CorpusTask::Command { classes, .. } => (0..classes).map(class_name).collect(),
            CorpusTask::Transcription { .. } => grammar.symbol_names(),
        }
    }
}

/// Generates `n` utterances. Identical `(spec, seed, n)` give identical corpora.
pub fn synth_corpus(spec: &SynthSpec, seed: u64, n: usize) -> Result<Vec<SynthUtterance>> {
    let grammar = Grammar::new(&spec.grammar)?;
    spec.validate(&grammar)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let prototypes = spec.features.map(|f| unit_prototypes(&grammar.spec, f.dim));

    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let (latent, labels, class) = sample_latent(&grammar, &spec.task, &mut rng)?;
        let (frames, frame_symbols) = grammar.emit(&mut rng, &latent);
        let features = match (spec.features, &prototypes) {
            (Some(f), Some(protos)) => Some(render_features(&mut rng, &frames, protos, f)?),
            _ => None,
        };
        let (units, symbols) = if spec.dedup {
            let mut units = Vec::new();
            let mut symbols = Vec::new();
            for (&u, &s) in frames.iter().zip(&frame_symbols) {
                if units.last() != Some(&u) {
                    units.push(u);
                    symbols.push(s);
                }
            }
            (units, symbols)
        } else {
            (frames.clone(), frame_symbols)
        };
        out.push(SynthUtterance {
            units,
            features,
            frame_units: frames,
            meta: SynthMeta {
                symbols,
                latent,
                labels,
                class,
            },
        });
    }
    Ok(out)
}

type Latent = (Vec<usize>, Vec<String>, Option<usize>);

fn sample_latent(grammar: &Grammar, task: &CorpusTask, rng: &mut ChaCha8Rng) -> Result<Latent> {
    let n_words = grammar.lexicon.len();
    for _ in 0..10_000 {
        match *task {
            CorpusTask::Free {
                min_words,
                max_words,
            } => {
                let k = rng.gen_range(min_words..=max_words);
                let words: Vec<usize> = (0..k).map(|_| rng.gen_range(0..n_words)).collect();
                let latent = grammar.words_latent(&words);
                if !has_adjacent_repeat(&latent) {
                    return Ok((latent, Vec::new(), None));
                }
            }
            CorpusTask::Command {
                classes,
                max_filler_words,
            } => {
                let class = rng.gen_range(0..classes);
                let mut filler = || -> Vec<usize> {
                    let k = rng.gen_range(0..=max_filler_words);
                    (0..k).map(|_| rng.gen_range(classes..n_words)).collect()
                };
                let mut words = filler();
                words.push(class);
                words.extend(filler());
                let latent = grammar.words_latent(&words);
                let unique_marker = (0..classes).all(|c| {
                    let expected = usize::from(c == class);
                    count_occurrences(&latent, grammar.marker(c)) == expected
                });
                if !has_adjacent_repeat(&latent) && unique_marker {
                    return Ok((latent, vec![class_name(class)], Some(class)));
                }
            }
            CorpusTask::Transcription {
                min_words,
                max_words,
            } => {
                let k = rng.gen_range(min_words..=max_words);
                let words: Vec<usize> = (0..k).map(|_| rng.gen_range(0..n_words)).collect();
                let latent = grammar.words_latent(&words);
                if !has_adjacent_repeat(&latent) {
                    let labels = latent.iter().map(|&s| symbol_name(s)).collect();
                    return Ok((latent, labels, None));
                }
            }
        }
    }
    Err(Error::Config(
        "grammar cannot produce a valid utterance for this task".into(),
    ))
}

fn unit_prototypes(spec: &GrammarSpec, dim: usize) -> Vec<Vec<f32>> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x5eed_f00d);
    let normal = Normal::new(0.0f32, 1.0).unwrap();
    (0..spec.n_units)
        .map(|_| (0..dim).map(|_| normal.sample(&mut rng)).collect())
        .collect()
}

fn render_features(
    rng: &mut ChaCha8Rng,
    frames: &[usize],
    prototypes: &[Vec<f32>],
    spec: FeatureSpec,
) -> Result<FeatureMatrix> {
    let normal = Normal::new(0.0, spec.spread).map_err(|e| Error::Config(e.to_string()))?;
    let mut values = Vec::with_capacity(frames.len() * spec.dim);
    for &u in frames {
        for &p in &prototypes[u] {
            values.push(p + normal.sample(rng) as f32);
        }
    }
    FeatureMatrix::new(frames.len(), spec.dim, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::unitizer::deduplicate;

    fn command_spec(noise: f64) -> SynthSpec {
        SynthSpec {
            grammar: GrammarSpec {
                noise,
                ..GrammarSpec::default()
            },
            task: CorpusTask::Command {
                classes: 8,
                max_filler_words: 2,
            },
            dedup: true,
            features: None,
        }
    }

    /// Decodes the class of an utterance using only the emission inverse map.
    fn decode_class(grammar: &Grammar, units: &[usize], classes: usize) -> Option<usize> {
        let symbols: Vec<usize> = units.iter().filter_map(|&u| grammar.owner[u]).collect();
        let symbols = deduplicate(&symbols);
        let hits: Vec<usize> = (0..classes)
            .filter(|&c| count_occurrences(&symbols, grammar.marker(c)) > 0)
            .collect();
        match hits.as_slice() {
            [c] => Some(*c),
            _ => None,
        }
    }

    #[test]
    fn empty_and_reproducible() {
        let spec = command_spec(0.05);
        assert!(synth_corpus(&spec, 1, 0).unwrap().is_empty());
        assert_eq!(synth_corpus(&spec, 3, 20).unwrap(), synth_corpus(&spec, 3, 20).unwrap());
        assert_ne!(synth_corpus(&spec, 3, 20).unwrap(), synth_corpus(&spec, 4, 20).unwrap());
    }

    #[test]
    fn class_markers_are_recoverable() {
        let spec = command_spec(0.1);
        let grammar = Grammar::new(&spec.grammar).unwrap();
        for utt in synth_corpus(&spec, 5, 300).unwrap() {
            let class = utt.meta.class.unwrap();
            assert_eq!(decode_class(&grammar, &utt.units, 8), Some(class));
            assert_eq!(utt.meta.labels, vec![class_name(class)]);
        }
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut spec = command_spec(0.0);
        spec.grammar.units_per_symbol = 10;
        assert!(matches!(synth_corpus(&spec, 0, 1), Err(Error::Config(_))));
        let mut spec = command_spec(0.0);
        spec.task = CorpusTask::Command {
            classes: 30,
            max_filler_words: 0,
        };
        assert!(synth_corpus(&spec, 0, 1).is_err());
        let mut spec = command_spec(0.0);
        spec.grammar.noise = 1.0;
        assert!(synth_corpus(&spec, 0, 1).is_err());
    }

    #[test]
    fn transcription_units_follow_symbols() {
        let spec = SynthSpec {
            grammar: GrammarSpec::default(),
            task: CorpusTask::Transcription {
                min_words: 1,
                max_words: 3,
            },
            dedup: true,
            features: Some(FeatureSpec { dim: 4, spread: 0.1 }),
        };
        let grammar = Grammar::new(&spec.grammar).unwrap();
        for utt in synth_corpus(&spec, 2, 50).unwrap() {
            // Stickiness 1 and no noise: exactly one unit per latent symbol.
            assert_eq!(utt.units.len(), utt.meta.latent.len());
            for (u, s) in utt.units.iter().zip(&utt.meta.latent) {
                assert_eq!(grammar.owner[*u], Some(*s));
            }
            let f = utt.features.unwrap();
            assert_eq!(f.frames(), utt.frame_units.len());
            assert_eq!(utt.meta.labels.len(), utt.meta.latent.len());
        }
    }
}
