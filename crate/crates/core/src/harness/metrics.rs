use std::collections::HashMap;
use std::hash::Hash;

use crate::error::{Error, Result};

/// Levenshtein distance with unit costs.
pub fn edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// `edit_distance(hyp, reference) / len(reference)`.
pub fn edit_distance_rate<T: PartialEq>(hyp: &[T], reference: &[T]) -> Result<f64> {
    if reference.is_empty() {
        return Err(Error::Validation("error rate needs a non-empty reference".into()));
    }
    Ok(edit_distance(hyp, reference) as f64 / reference.len() as f64)
}

/// Total edits over total reference length.
pub fn corpus_error_rate<T: PartialEq>(pairs: &[(Vec<T>, Vec<T>)]) -> Result<f64> {
    let (mut edits, mut total) = (0usize, 0usize);
    for (hyp, reference) in pairs {
        edits += edit_distance(hyp, reference);
        total += reference.len();
    }
    if total == 0 {
        return Err(Error::Validation("error rate needs a non-empty reference".into()));
    }
    Ok(edits as f64 / total as f64)
}

pub fn accuracy<T: PartialEq>(pairs: &[(T, T)]) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    pairs.iter().filter(|(a, b)| a == b).count() as f64 / pairs.len() as f64
}

/// `(slot type, value)` pairs from a sequence where a slot opens with a
/// `[type]` token and closes with `[/]`.
pub fn extract_slots(tokens: &[String]) -> Vec<(String, Vec<String>)> {
    let mut slots = Vec::new();
    let mut open: Option<(String, Vec<String>)> = None;
    for t in tokens {
        if t == "[/]" {
            if let Some(s) = open.take() {
                slots.push(s);
            }
        } else if let Some(kind) = t.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
            open = Some((kind.to_string(), Vec::new()));
        } else if let Some((_, value)) = open.as_mut() {
            value.push(t.clone());
        }
    }
    slots
}

/// Micro-F1 over `(slot type, value)` pairs; 1.0 when neither side has slots.
pub fn slot_f1(hyp: &[String], reference: &[String]) -> f64 {
    let predicted = extract_slots(hyp);
    let gold = extract_slots(reference);
    if predicted.is_empty() && gold.is_empty() {
        return 1.0;
    }
    let mut remaining: HashMap<&(String, Vec<String>), usize> = HashMap::new();
    for g in &gold {
        *remaining.entry(g).or_default() += 1;
    }
    let mut hits = 0;
    for p in &predicted {
        if let Some(n) = remaining.get_mut(p) {
            if *n > 0 {
                *n -= 1;
                hits += 1;
            }
        }
    }
    2.0 * hits as f64 / (predicted.len() + gold.len()) as f64
}

fn ngram_counts<T: Eq + Hash>(tokens: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_default() += 1;
        }
    }
    counts
}

/// Corpus BLEU (0–100) with n-grams up to 4, brevity penalty and add-one
/// smoothing on the 2- to 4-gram precisions.
pub fn bleu<T: Eq + Hash>(hyps: &[Vec<T>], refs: &[Vec<T>]) -> Result<f64> {
    if hyps.len() != refs.len() {
        return Err(Error::Validation(format!(
            "{} hypotheses for {} references",
            hyps.len(),
            refs.len()
        )));
    }
    let mut matched = [0usize; 4];
    let mut total = [0usize; 4];
    let (mut hyp_len, mut ref_len) = (0usize, 0usize);
    for (h, r) in hyps.iter().zip(refs) {
        hyp_len += h.len();
        ref_len += r.len();
        for n in 1..=4 {
            let hc = ngram_counts(h, n);
            let rc = ngram_counts(r, n);
            for (g, &c) in &hc {
                matched[n - 1] += c.min(rc.get(g).copied().unwrap_or(0));
                total[n - 1] += c;
            }
        }
    }
    if hyp_len == 0 || matched[0] == 0 {
        return Ok(0.0);
    }
    let mut log_sum = (matched[0] as f64 / total[0] as f64).ln();
    for n in 1..4 {
        log_sum += ((matched[n] + 1) as f64 / (total[n] + 1) as f64).ln();
    }
    let bp = if hyp_len > ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    };
    Ok(100.0 * bp * (log_sum / 4.0).exp())
}

/// Within-utterance repetition: the fraction of n-gram positions whose
/// n-gram occurs more than once in the same utterance.
pub fn auto_bleu<T: Eq + Hash>(tokens: &[T], n: usize) -> Result<f64> {
    if n == 0 || tokens.len() < n {
        return Err(Error::Validation(format!(
            "auto-BLEU-{n} needs at least {n} tokens, got {}",
            tokens.len()
        )));
    }
    let counts = ngram_counts(tokens, n);
    let positions = tokens.len() - n + 1;
    let repeated = tokens.windows(n).filter(|w| counts[w] > 1).count();
    Ok(repeated as f64 / positions as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(x: &str) -> Vec<String> {
        x.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn edit_rate_cases() {
        assert_eq!(edit_distance_rate(&[1, 2, 3], &[1, 2, 3]).unwrap(), 0.0);
        assert_eq!(edit_distance_rate::<u8>(&[], &[1, 2, 3, 4]).unwrap(), 1.0);
        let h: Vec<char> = "abcd".chars().collect();
        let r: Vec<char> = "abed".chars().collect();
        assert_eq!(edit_distance_rate(&h, &r).unwrap(), 0.25);
        assert!(edit_distance_rate::<u8>(&[1], &[]).is_err());
    }

    #[test]
    fn slot_f1_cases() {
        let gold = s("turn [action] on [/] the [object] lights [/]");
        assert_eq!(slot_f1(&gold, &gold), 1.0);
        assert_eq!(slot_f1(&s("[action] off [/]"), &s("[object] music [/]")), 0.0);
        let half = s("[action] on [/] [object] music [/]");
        assert!((slot_f1(&half, &gold) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn bleu_cases() {
        let x = vec![vec![1, 2, 3, 4, 5], vec![7, 8]];
        assert!((bleu(&x, &x).unwrap() - 100.0).abs() < 1e-9);
        assert_eq!(bleu(&[vec![1, 2]], &[vec![3, 4]]).unwrap(), 0.0);
        // p1 = 1/2, p2 = (0+1)/(1+1), p3 = p4 = 1, no brevity penalty.
        let v = bleu(&[vec!['a', 'b']], &[vec!['a', 'c']]).unwrap();
        assert!((v - 100.0 * 0.5f64.sqrt()).abs() < 1e-9);
        assert!(bleu(&x, &x[..1]).is_err());
    }

    #[test]
    fn auto_bleu_cases() {
        assert_eq!(auto_bleu(&[1, 2, 3], 1).unwrap(), 0.0);
        assert_eq!(auto_bleu(&[4, 4, 4], 1).unwrap(), 1.0);
        assert!((auto_bleu(&['a', 'b', 'a', 'b'], 2).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert!(auto_bleu(&[1], 2).is_err());
    }
}
