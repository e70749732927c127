//! ROUGE-N, ROUGE-L and BLEU over lowercased, punctuation-stripped
//! whitespace tokens.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::EvalError;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    fn new(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self {
            precision,
            recall,
            f1,
        }
    }
}

/// Lowercase, drop every character that is neither alphanumeric nor
/// whitespace, split on whitespace.
pub fn tokenize(text: &str) -> Vec<String> {
    let cleaned: String = text
        .to_lowercase()
        .chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .collect();
    cleaned.split_whitespace().map(str::to_string).collect()
}

fn ngrams(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut out = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *out.entry(w).or_insert(0) += 1;
        }
    }
    out
}

/// Clipped overlap, candidate total, reference total.
fn overlap(cand: &[String], reference: &[String], n: usize) -> (usize, usize, usize) {
    let c = ngrams(cand, n);
    let r = ngrams(reference, n);
    let matched = c
        .iter()
        .map(|(g, &k)| k.min(r.get(g).copied().unwrap_or(0)))
        .sum();
    (matched, c.values().sum(), r.values().sum())
}

fn prepare(candidate: &str, reference: &str) -> Result<(Vec<String>, Vec<String>), EvalError> {
    let r = tokenize(reference);
    if r.is_empty() {
        return Err(EvalError::EmptyReference);
    }
    Ok((tokenize(candidate), r))
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

pub fn rouge_n(candidate: &str, reference: &str, n: usize) -> Result<Prf, EvalError> {
    if n == 0 {
        return Err(EvalError::BadOrder);
    }
    let (c, r) = prepare(candidate, reference)?;
    let (m, tc, tr) = overlap(&c, &r, n);
    Ok(Prf::new(ratio(m, tc), ratio(m, tr)))
}

fn lcs(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub fn rouge_l(candidate: &str, reference: &str) -> Result<Prf, EvalError> {
    let (c, r) = prepare(candidate, reference)?;
    let l = lcs(&c, &r);
    Ok(Prf::new(ratio(l, c.len()), ratio(l, r.len())))
}

/// Sentence BLEU against one reference. An order with no matching n-gram
/// uses (0 + 1) / (total + 1) in place of its zero precision.
pub fn bleu(candidate: &str, reference: &str, max_n: usize) -> Result<f64, EvalError> {
    if max_n == 0 {
        return Err(EvalError::BadOrder);
    }
    let (c, r) = prepare(candidate, reference)?;
    if c.is_empty() {
        return Ok(0.0);
    }
    let mut log_sum = 0.0;
    for n in 1..=max_n {
        let (m, total, _) = overlap(&c, &r, n);
        let p = if m == 0 {
            1.0 / (total as f64 + 1.0)
        } else {
            m as f64 / total as f64
        };
        log_sum += p.ln();
    }
    let bp = if c.len() > r.len() {
        1.0
    } else {
        (1.0 - r.len() as f64 / c.len() as f64).exp()
    };
    Ok(bp * (log_sum / max_n as f64).exp())
}
