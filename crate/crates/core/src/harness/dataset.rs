use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::decode::{TaskKind, TaskSpec};
use crate::error::{Error, Result};
use crate::prompts::TuneExample;
use crate::unitizer::SynthUtterance;
use crate::unitlm::Vocabulary;

/// Version tag written on every dataset line and report.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub units: Vec<usize>,
    pub labels: Vec<String>,
    #[serde(default)]
    pub meta: serde_json::Value,
}

impl Example {
    /// Latent symbol per unit recorded by the synthetic generator.
    pub fn unit_symbols(&self) -> Option<Vec<Option<usize>>> {
        serde_json::from_value(self.meta.get("symbols")?.clone()).ok()
    }

    /// Key used for class balancing: the labels joined by spaces.
    pub fn class_key(&self) -> String {
        self.labels.join(" ")
    }
}

impl From<&SynthUtterance> for Example {
    fn from(u: &SynthUtterance) -> Self {
        Self {
            units: u.units.clone(),
            labels: u.meta.labels.clone(),
            meta: serde_json::json!({
                "symbols": u.meta.symbols,
                "latent": u.meta.latent,
                "class": u.meta.class,
            }),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Line {
    schema_version: u32,
    #[serde(flatten)]
    example: Example,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub examples: Vec<Example>,
}

impl Dataset {
    pub fn new(examples: Vec<Example>) -> Self {
        Self { examples }
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn from_synth(utterances: &[SynthUtterance]) -> Self {
        Self::new(utterances.iter().map(Example::from).collect())
    }

    /// JSON lines; blank lines are skipped.
    pub fn read<R: BufRead>(r: R) -> Result<Self> {
        let mut examples = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: Line = serde_json::from_str(&line).map_err(|e| Error::Parse {
                line: i + 1,
                msg: e.to_string(),
            })?;
            if parsed.schema_version != SCHEMA_VERSION {
                return Err(Error::Parse {
                    line: i + 1,
                    msg: format!("unsupported schema_version {}", parsed.schema_version),
                });
            }
            examples.push(parsed.example);
        }
        Ok(Self { examples })
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        for ex in &self.examples {
            let line = Line {
                schema_version: SCHEMA_VERSION,
                example: ex.clone(),
            };
            serde_json::to_writer(&mut w, &line)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    Dataset::read(BufReader::new(File::open(path)?))
}

pub fn save_dataset(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    ds.write(&mut w)?;
    w.flush()?;
    Ok(())
}

/// Converts examples into tuning pairs for `task`, validating unit ids and
/// labels. Generation tasks split each utterance at the task's ratio.
pub fn bind_to_task(ds: &Dataset, task: &TaskSpec, vocab: Vocabulary) -> Result<Vec<TuneExample>> {
    let index: BTreeMap<&str, usize> = task
        .labels
        .iter()
        .enumerate()
        .map(|(i, l)| (l.as_str(), i))
        .collect();
    ds.examples
        .iter()
        .enumerate()
        .map(|(i, ex)| {
            if let Some(&u) = ex.units.iter().find(|&&u| u >= vocab.n_units()) {
                return Err(Error::Validation(format!(
                    "example {i}: unit {u} outside the {} content units",
                    vocab.n_units()
                )));
            }
            match task.kind {
                TaskKind::Generation => {
                    let r = task
                        .ratio
                        .ok_or_else(|| Error::Config("generation task needs a ratio".into()))?;
                    let (seed, target) = split_continuation(&ex.units, r)?;
                    Ok(TuneExample {
                        source: seed.to_vec(),
                        labels: target.to_vec(),
                    })
                }
                kind => {
                    if let TaskKind::Classification { slots } = kind {
                        if ex.labels.len() != slots {
                            return Err(Error::Validation(format!(
                                "example {i}: {} labels for {slots} slots",
                                ex.labels.len()
                            )));
                        }
                    }
                    let labels = ex
                        .labels
                        .iter()
                        .map(|l| {
                            index.get(l.as_str()).copied().ok_or_else(|| {
                                Error::Validation(format!("example {i}: unknown label {l:?}"))
                            })
                        })
                        .collect::<Result<Vec<_>>>()?;
                    Ok(TuneExample {
                        source: ex.units.clone(),
                        labels,
                    })
                }
            }
        })
        .collect()
}

/// Exactly `k` examples per class, sampled without replacement.
pub fn fewshot_subsample(ds: &Dataset, k: usize, seed: u64) -> Result<Dataset> {
    let mut classes: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, ex) in ds.examples.iter().enumerate() {
        classes.entry(ex.class_key()).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(classes.len() * k);
    for (class, mut members) in classes {
        if members.len() < k {
            return Err(Error::InsufficientData(format!(
                "class {class:?} has {} examples, {k} requested",
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        members.truncate(k);
        members.sort_unstable();
        out.extend(members.into_iter().map(|i| ds.examples[i].clone()));
    }
    Ok(Dataset::new(out))
}

/// `(first ⌈r·len⌉ units, remainder)`; both parts must be non-empty.
pub fn split_continuation(units: &[usize], ratio: f64) -> Result<(&[usize], &[usize])> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Config(format!("ratio {ratio} must be in (0, 1)")));
    }
    if units.len() < 2 {
        return Err(Error::Validation(format!(
            "cannot split an utterance of length {}",
            units.len()
        )));
    }
    let cut = (ratio * units.len() as f64).ceil() as usize;
    if cut == 0 || cut >= units.len() {
        return Err(Error::Validation(format!(
            "ratio {ratio} leaves an empty side of a length-{} utterance",
            units.len()
        )));
    }
    Ok(units.split_at(cut))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ex(units: Vec<usize>, label: &str) -> Example {
        Example {
            units,
            labels: vec![label.to_string()],
            meta: serde_json::json!({"class": 0}),
        }
    }

    #[test]
    fn jsonl_round_trip_and_errors() {
        let ds = Dataset::new(vec![ex(vec![1, 2], "up"), ex(vec![], "down")]);
        let mut buf = Vec::new();
        ds.write(&mut buf).unwrap();
        assert!(String::from_utf8(buf.clone()).unwrap().contains("\"schema_version\":1"));
        assert_eq!(Dataset::read(&buf[..]).unwrap(), ds);
        assert!(Dataset::read(&b""[..]).unwrap().is_empty());
        let bad = b"{\"schema_version\":1,\"units\":[1],\"labels\":[]}\n{oops\n";
        assert!(matches!(Dataset::read(&bad[..]), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn binding_validates_units_and_labels() {
        let task = TaskSpec {
            kind: TaskKind::Classification { slots: 1 },
            labels: vec!["up".into(), "down".into()],
            ratio: None,
        };
        let vocab = Vocabulary::new(5).unwrap();
        let ok = bind_to_task(&Dataset::new(vec![ex(vec![4], "down")]), &task, vocab).unwrap();
        assert_eq!(ok[0].labels, vec![1]);
        let out_of_range = Dataset::new(vec![ex(vec![5], "up")]);
        assert!(matches!(bind_to_task(&out_of_range, &task, vocab), Err(Error::Validation(_))));
        let unknown = Dataset::new(vec![ex(vec![1], "left")]);
        assert!(matches!(bind_to_task(&unknown, &task, vocab), Err(Error::Validation(_))));
    }

    #[test]
    fn fewshot_counts_and_determinism() {
        let examples = (0..8)
            .flat_map(|c| (0..12).map(move |i| ex(vec![c, i], &format!("c{c}"))))
            .collect();
        let ds = Dataset::new(examples);
        let a = fewshot_subsample(&ds, 10, 1).unwrap();
        assert_eq!(a.len(), 80);
        assert_eq!(a, fewshot_subsample(&ds, 10, 1).unwrap());
        assert_ne!(a, fewshot_subsample(&ds, 10, 2).unwrap());
        assert_eq!(fewshot_subsample(&ds, 12, 1).unwrap().len(), 96);
        let err = fewshot_subsample(&ds, 13, 1).unwrap_err();
        assert!(matches!(err, Error::InsufficientData(ref m) if m.contains("c0")));
    }

    #[test]
    fn continuation_split_cases() {
        let u: Vec<usize> = (0..20).collect();
        let (s, t) = split_continuation(&u, 0.25).unwrap();
        assert_eq!((s.len(), t.len()), (5, 15));
        assert_eq!(split_continuation(&u, 0.5).unwrap().0.len(), 10);
        let (s, t) = split_continuation(&[3, 4], 0.5).unwrap();
        assert_eq!((s, t), (&[3][..], &[4][..]));
        assert!(split_continuation(&[3], 0.5).is_err());
        assert!(split_continuation(&[3, 4], 0.99).is_err());
    }

    proptest! {
        #[test]
        fn split_lengths_follow_ceiling(len in 2usize..200, r in prop::sample::select(vec![0.25, 0.5, 0.75])) {
            let u: Vec<usize> = (0..len).collect();
            if let Ok((s, t)) = split_continuation(&u, r) {
                prop_assert_eq!(s.len(), (r * len as f64).ceil() as usize);
                prop_assert_eq!(s.len() + t.len(), len);
            }
        }
    }
}
