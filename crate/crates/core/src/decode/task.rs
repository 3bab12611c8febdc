use serde::{Deserialize, Serialize};

use super::{beam_decode, DecodeConfig, StepScorer};
use crate::error::{Error, Result};
use crate::numcore::{log_softmax_slice, Graph, Real};
use crate::prompts::{Bound, Framer, SourceContext};
use crate::verbalizer::Verbalized;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TaskKind {
    /// `slots` content steps, one label each, then `<eos>`.
    Classification { slots: usize },
    /// A label sequence terminated by `<eos>`.
    Sequence,
    /// Raw units (continuation of the source).
    Generation,
}

impl TaskKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "classification" => Ok(Self::Classification { slots: 1 }),
            "sequence" => Ok(Self::Sequence),
            "generation" => Ok(Self::Generation),
            other => Err(Error::Config(format!("unknown task kind {other:?}"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Classification { .. } => "classification",
            Self::Sequence => "sequence",
            Self::Generation => "generation",
        }
    }
}

/// Task kind, label set and (for continuation) the conditional ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub kind: TaskKind,
    #[serde(default)]
    pub labels: Vec<String>,
    #[serde(default)]
    pub ratio: Option<f64>,
}

impl TaskSpec {
    pub fn validate(&self) -> Result<()> {
        match (self.kind, self.ratio) {
            (TaskKind::Generation, Some(r)) if !(r > 0.0 && r < 1.0) => {
                Err(Error::Config(format!("ratio {r} must be in (0, 1)")))
            }
            (TaskKind::Generation, _) => Ok(()),
            (_, Some(_)) => Err(Error::Config("ratio only applies to generation tasks".into())),
            (TaskKind::Classification { slots: 0 }, _) => {
                Err(Error::Config("classification needs at least one slot".into()))
            }
            _ if self.labels.is_empty() => Err(Error::Config("label set is empty".into())),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskOutput {
    /// Decoded output ids without the trailing `<eos>`.
    pub ids: Vec<usize>,
    /// Verbalized labels (classification/sequence); `None` marks an
    /// unmapped emission or a missing slot.
    pub labels: Vec<Option<usize>>,
    pub logprob: f64,
}

/// [`StepScorer`] over a framed, prompted backbone for one source.
pub struct FramedScorer<'a, T> {
    framer: Framer<'a, T>,
    graph: Graph<T>,
    bound: Bound,
    context: SourceContext,
    mark: usize,
}

impl<'a, T: Real> FramedScorer<'a, T> {
    pub fn new(framer: Framer<'a, T>, source: &[usize]) -> Result<Self> {
        let mut graph = Graph::new();
        let bound = framer.bind(&mut graph, false)?;
        let context = framer.context(&mut graph, &bound, source, &mut None)?;
        let mark = graph.len();
        Ok(Self {
            framer,
            graph,
            bound,
            context,
            mark,
        })
    }

    /// Output-space logits for the step after `prefix`.
    pub fn step_logits(&mut self, prefix: &[usize]) -> Result<Vec<T>> {
        self.graph.truncate(self.mark);
        let z = self
            .framer
            .logits(&mut self.graph, &self.bound, self.context, prefix, &mut None)?;
        let v = self.graph.value(z);
        Ok(v.row(v.rows() - 1).to_vec())
    }
}

impl<T: Real> StepScorer for FramedScorer<'_, T> {
    fn space(&self) -> usize {
        self.framer.output_size()
    }

    fn eos(&self) -> usize {
        self.framer.output_eos()
    }

    fn log_probs(&mut self, prefix: &[usize]) -> Result<Vec<f64>> {
        let z = self.step_logits(prefix)?;
        Ok(log_softmax_slice(&z)
            .into_iter()
            .map(|x| x.to_f64().unwrap_or(f64::NAN))
            .collect())
    }
}

/// Decodes `source` under the task framing and verbalizes the result.
pub fn run_task<T: Real>(
    framer: Framer<'_, T>,
    task: &TaskSpec,
    source: &[usize],
    decode: &DecodeConfig,
) -> Result<TaskOutput> {
    task.validate()?;
    let mut config = *decode;
    if let TaskKind::Classification { slots } = task.kind {
        config.max_len = slots + 1;
    }
    let mut scorer = FramedScorer::new(framer, source)?;
    let eos = scorer.eos();
    let best = beam_decode(&mut scorer, &config)?;
    let ids = best.content(eos).to_vec();
    let verbalize = |id: usize| match framer.verbalizer.decode_output(id) {
        Verbalized::Label(l) => Some(l),
        Verbalized::Unmapped => None,
    };
    let labels = match task.kind {
        TaskKind::Classification { slots } => (0..slots)
            .map(|i| ids.get(i).and_then(|&id| verbalize(id)))
            .collect(),
        TaskKind::Sequence => ids.iter().map(|&id| verbalize(id)).collect(),
        TaskKind::Generation => Vec::new(),
    };
    Ok(TaskOutput {
        ids,
        labels,
        logprob: best.logprob,
    })
}
