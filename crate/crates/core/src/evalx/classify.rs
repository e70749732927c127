use serde::{Deserialize, Serialize};

use super::EvalError;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub accuracy: f64,
    /// Indexed by class label.
    pub per_class: [ClassMetrics; 2],
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub total: usize,
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Accuracy and macro-averaged precision/recall/F1 for binary labels.
///
/// The macro mean runs over the classes that occur in either `preds` or
/// `golds`; a class that never appears contributes nothing.
pub fn classification_report(
    preds: &[u8],
    golds: &[u8],
) -> Result<ClassificationReport, EvalError> {
    if preds.len() != golds.len() {
        return Err(EvalError::LengthMismatch {
            preds: preds.len(),
            golds: golds.len(),
        });
    }
    if preds.is_empty() {
        return Err(EvalError::Empty);
    }
    if let Some(&bad) = preds.iter().chain(golds).find(|&&v| v > 1) {
        return Err(EvalError::BadLabel(bad));
    }
    // m[gold][pred]
    let mut m = [[0usize; 2]; 2];
    for (&p, &g) in preds.iter().zip(golds) {
        m[g as usize][p as usize] += 1;
    }
    let mut per_class = [ClassMetrics::default(); 2];
    let mut present = Vec::new();
    for c in 0..2 {
        let tp = m[c][c];
        let predicted = m[0][c] + m[1][c];
        let actual = m[c][0] + m[c][1];
        let precision = ratio(tp, predicted);
        let recall = ratio(tp, actual);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        per_class[c] = ClassMetrics {
            precision,
            recall,
            f1,
            support: actual,
        };
        if predicted + actual > 0 {
            present.push(c);
        }
    }
    let mean = |f: fn(&ClassMetrics) -> f64| {
        present.iter().map(|&c| f(&per_class[c])).sum::<f64>() / present.len() as f64
    };
    Ok(ClassificationReport {
        accuracy: ratio(m[0][0] + m[1][1], preds.len()),
        macro_precision: mean(|c| c.precision),
        macro_recall: mean(|c| c.recall),
        macro_f1: mean(|c| c.f1),
        per_class,
        total: preds.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedAggregate {
    pub per_seed: Vec<(u64, f64)>,
    pub mean: f64,
    /// Standard deviation, sample form unless asked otherwise; 0 for a
    /// single seed.
    pub std: f64,
}

impl SeedAggregate {
    /// "mean ± std" as percentages.
    pub fn display_pct(&self) -> String {
        format!("{} ± {}", super::pct(self.mean), super::pct(self.std))
    }
}

/// Denominator of the standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Deviation {
    /// n - 1.
    #[default]
    Sample,
    /// n.
    Population,
}

pub fn aggregate_seeds(values: &[(u64, f64)]) -> Result<SeedAggregate, EvalError> {
    aggregate_seeds_with(values, Deviation::Sample)
}

pub fn aggregate_seeds_with(
    values: &[(u64, f64)],
    deviation: Deviation,
) -> Result<SeedAggregate, EvalError> {
    let first = values.first().ok_or(EvalError::Empty)?.1;
    let n = values.len() as f64;
    let (mean, std) = if values.iter().all(|v| v.1 == first) {
        (first, 0.0)
    } else {
        let mean = values.iter().map(|v| v.1).sum::<f64>() / n;
        let ss: f64 = values.iter().map(|v| (v.1 - mean).powi(2)).sum();
        let denom = match deviation {
            Deviation::Sample => n - 1.0,
            Deviation::Population => n,
        };
        (mean, (ss / denom).sqrt())
    };
    Ok(SeedAggregate {
        per_seed: values.to_vec(),
        mean,
        std,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_example() {
        let r = classification_report(&[1, 0, 1, 1], &[1, 0, 0, 1]).unwrap();
        assert_eq!(r.accuracy, 0.75);
        assert!((r.per_class[1].f1 - 0.8).abs() < 1e-12);
        assert!((r.per_class[0].f1 - 2.0 / 3.0).abs() < 1e-12);
        assert!((r.macro_f1 - (0.8 + 2.0 / 3.0) / 2.0).abs() < 1e-12);
        assert_eq!(r.per_class[0].support, 2);
        assert_eq!(r.per_class[1].support, 2);
    }

    #[test]
    fn perfect_single_class() {
        let r = classification_report(&[1, 1, 1], &[1, 1, 1]).unwrap();
        assert_eq!(
            (r.accuracy, r.macro_precision, r.macro_recall, r.macro_f1),
            (1.0, 1.0, 1.0, 1.0)
        );
    }

    #[test]
    fn all_wrong() {
        let r = classification_report(&[1, 1], &[0, 0]).unwrap();
        assert_eq!(r.accuracy, 0.0);
        assert_eq!(r.per_class[0].precision, 0.0);
        assert_eq!(r.macro_f1, 0.0);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            classification_report(&[], &[]),
            Err(EvalError::Empty)
        ));
        assert!(matches!(
            classification_report(&[1], &[1, 0]),
            Err(EvalError::LengthMismatch { .. })
        ));
        assert!(matches!(
            classification_report(&[2], &[1]),
            Err(EvalError::BadLabel(2))
        ));
        assert!(aggregate_seeds(&[]).is_err());
    }

    #[test]
    fn seed_fixture() {
        let v: Vec<(u64, f64)> = [81.2, 81.9, 81.5, 81.6, 81.3]
            .iter()
            .enumerate()
            .map(|(i, &x)| (i as u64 + 1, x))
            .collect();
        let a = aggregate_seeds(&v).unwrap();
        assert!((a.mean - 81.5).abs() < 1e-9);
        assert!((a.std - 0.075f64.sqrt()).abs() < 1e-9);
        let one = aggregate_seeds(&[(3, 0.1)]).unwrap();
        assert_eq!((one.mean, one.std), (0.1, 0.0));
        let same = aggregate_seeds(&[(1, 0.1), (2, 0.1), (3, 0.1)]).unwrap();
        assert_eq!(same.std, 0.0);
        assert_eq!(
            aggregate_seeds(&[(1, 1.0), (2, 1.0)])
                .unwrap()
                .display_pct(),
            "100.00 ± 0.00"
        );
        let pop = aggregate_seeds_with(&v, Deviation::Population).unwrap();
        assert!((pop.std - 0.06f64.sqrt()).abs() < 1e-9);
    }
}
