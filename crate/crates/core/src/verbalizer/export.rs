use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;

use super::LearnableVerbalizer;
use crate::error::{Error, Result};
use crate::numcore::Real;

/// Latent-symbol counts per unit, collected from generator metadata.
#[derive(Debug, Clone, Default)]
pub struct UnitAnnotations {
    counts: Vec<BTreeMap<usize, usize>>,
}

impl UnitAnnotations {
    pub fn new(vocab_size: usize) -> Self {
        Self {
            counts: vec![BTreeMap::new(); vocab_size],
        }
    }

    /// Records one utterance: `symbols[i]` is the latent symbol behind
    /// `units[i]`, `None` for noise.
    pub fn add(&mut self, units: &[usize], symbols: &[Option<usize>]) {
        for (&u, s) in units.iter().zip(symbols) {
            if let (Some(c), Some(s)) = (self.counts.get_mut(u), s) {
                *c.entry(*s).or_default() += 1;
            }
        }
    }

    /// Most frequent symbol of `unit` (lowest id on ties) and its share of
    /// the unit's annotated occurrences; `(None, 0.0)` if never seen.
    pub fn dominant(&self, unit: usize) -> (Option<usize>, f64) {
        let Some(c) = self.counts.get(unit) else {
            return (None, 0.0);
        };
        let total: usize = c.values().sum();
        let mut best: Option<(usize, usize)> = None;
        for (&s, &n) in c {
            if best.is_none_or(|(_, b)| n > b) {
                best = Some((s, n));
            }
        }
        match best {
            Some((s, n)) => (Some(s), n as f64 / total as f64),
            None => (None, 0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightRow {
    pub class: String,
    pub rank: usize,
    pub unit: usize,
    pub weight: f64,
    /// Dominant latent symbol of the unit, empty if unannotated.
    pub symbol: String,
    pub symbol_purity: f64,
}

/// Top-`n` units per class by weight (ties by lower unit id), annotated with
/// their dominant latent symbol. `n` is clamped to the vocabulary size.
pub fn export_weights<T: Real>(
    v: &LearnableVerbalizer<T>,
    annotations: &UnitAnnotations,
    class_names: &[String],
    symbol_names: &[String],
    n: usize,
) -> Vec<WeightRow> {
    let n = n.min(v.vocab_size());
    let mut rows = Vec::with_capacity(v.n_labels() * n);
    for y in 0..v.n_labels() {
        let w = v.weights().row(y);
        let mut order: Vec<usize> = (0..w.len()).collect();
        order.sort_by(|&a, &b| w[b].partial_cmp(&w[a]).expect("finite").then(a.cmp(&b)));
        for (rank, &unit) in order.iter().take(n).enumerate() {
            let (sym, purity) = annotations.dominant(unit);
            rows.push(WeightRow {
                class: class_names.get(y).cloned().unwrap_or_else(|| y.to_string()),
                rank: rank + 1,
                unit,
                weight: w[unit].to_f64().unwrap_or(f64::NAN),
                symbol: sym
                    .map(|s| symbol_names.get(s).cloned().unwrap_or_else(|| s.to_string()))
                    .unwrap_or_default(),
                symbol_purity: purity,
            });
        }
    }
    rows
}

pub fn write_weights_csv<W: Write>(w: W, rows: &[WeightRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r).map_err(|e| Error::Validation(e.to_string()))?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_weights_give_index_order_and_purity() {
        let v = LearnableVerbalizer::<f64>::new(2, 4, 0.01).unwrap();
        let mut ann = UnitAnnotations::new(4);
        ann.add(&[0, 0, 1, 0], &[Some(2), Some(2), None, Some(1)]);
        let rows = export_weights(&v, &ann, &["x".into(), "y".into()], &["a".into(), "b".into(), "c".into()], 10);
        assert_eq!(rows.len(), 8);
        assert_eq!(rows[0].unit, 0);
        assert_eq!(rows[0].symbol, "c");
        assert!((rows[0].symbol_purity - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(rows[1].symbol, "");
        assert_eq!(rows[1].symbol_purity, 0.0);
        let mut buf = Vec::new();
        write_weights_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("class,rank,unit,weight,symbol,symbol_purity\n"));
    }
}
