//! Human ratings and Fleiss' kappa.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::EvalError;

/// Likert categories 1..=5.
pub const CATEGORIES: usize = 5;

/// Items x raters grid of 1..=5 ratings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingMatrix {
    rows: Vec<Vec<u8>>,
}

impl RatingMatrix {
    pub fn new(rows: Vec<Vec<u8>>) -> Result<Self, EvalError> {
        let bad = |m: String| Err(EvalError::BadMatrix(m));
        if rows.len() < 2 {
            return bad(format!("need at least 2 items, got {}", rows.len()));
        }
        let raters = rows[0].len();
        if raters < 2 {
            return bad(format!("need at least 2 raters, got {raters}"));
        }
        for (i, r) in rows.iter().enumerate() {
            if r.len() != raters {
                return bad(format!(
                    "item {i} has {} ratings, expected {raters}",
                    r.len()
                ));
            }
            if let Some(v) = r.iter().find(|v| !(1..=CATEGORIES as u8).contains(v)) {
                return bad(format!("item {i} has rating {v} outside 1..=5"));
            }
        }
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &[Vec<u8>] {
        &self.rows
    }

    pub fn items(&self) -> usize {
        self.rows.len()
    }

    pub fn raters(&self) -> usize {
        self.rows[0].len()
    }

    /// Mean of all ratings.
    pub fn mean(&self) -> f64 {
        let total: u64 = self.rows.iter().flatten().map(|&v| u64::from(v)).sum();
        total as f64 / (self.items() * self.raters()) as f64
    }
}

pub fn fleiss_kappa(m: &RatingMatrix) -> Result<f64, EvalError> {
    let n = m.raters() as f64;
    let items = m.items() as f64;
    let mut totals = [0f64; CATEGORIES];
    let mut p_bar = 0.0;
    for row in m.rows() {
        let mut counts = [0f64; CATEGORIES];
        for &v in row {
            counts[(v - 1) as usize] += 1.0;
        }
        let sq: f64 = counts.iter().map(|c| c * c).sum();
        p_bar += (sq - n) / (n * (n - 1.0));
        for (t, c) in totals.iter_mut().zip(counts) {
            *t += c;
        }
    }
    p_bar /= items;
    let pe: f64 = totals.iter().map(|t| (t / (items * n)).powi(2)).sum();
    if (1.0 - pe).abs() < 1e-12 {
        return Err(EvalError::UndefinedKappa);
    }
    Ok((p_bar - pe) / (1.0 - pe))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingRow {
    pub item_id: String,
    pub rater_id: String,
    pub clarity: u8,
    pub linking: u8,
    pub usefulness: u8,
}

/// One matrix per criterion, items and raters in sorted id order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingSheet {
    pub item_ids: Vec<String>,
    pub rater_ids: Vec<String>,
    pub clarity: RatingMatrix,
    pub linking: RatingMatrix,
    pub usefulness: RatingMatrix,
}

impl RatingSheet {
    pub fn criteria(&self) -> [(&'static str, &RatingMatrix); 3] {
        [
            ("clarity", &self.clarity),
            ("linking", &self.linking),
            ("usefulness", &self.usefulness),
        ]
    }
}

pub fn ingest_ratings(path: &Path) -> Result<RatingSheet, EvalError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| EvalError::Ratings(format!("{}: {e}", path.display())))?;
    ingest_ratings_str(&text)
}

pub fn ingest_ratings_str(csv_text: &str) -> Result<RatingSheet, EvalError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(csv_text.as_bytes());
    let mut cells: BTreeMap<(String, String), RatingRow> = BTreeMap::new();
    for (i, row) in reader.deserialize::<RatingRow>().enumerate() {
        let row = row.map_err(|e| EvalError::Ratings(format!("row {}: {e}", i + 2)))?;
        let key = (row.item_id.clone(), row.rater_id.clone());
        if cells.insert(key, row).is_some() {
            return Err(EvalError::Ratings(format!(
                "row {}: duplicate item/rater pair",
                i + 2
            )));
        }
    }
    let item_ids: Vec<String> = cells
        .keys()
        .map(|k| k.0.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let rater_ids: Vec<String> = cells
        .keys()
        .map(|k| k.1.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let grid = |f: fn(&RatingRow) -> u8| -> Result<RatingMatrix, EvalError> {
        let mut rows = Vec::with_capacity(item_ids.len());
        for item in &item_ids {
            let mut row = Vec::with_capacity(rater_ids.len());
            for rater in &rater_ids {
                let cell = cells.get(&(item.clone(), rater.clone())).ok_or_else(|| {
                    EvalError::Ratings(format!("item {item:?} has no rating from rater {rater:?}"))
                })?;
                row.push(f(cell));
            }
            rows.push(row);
        }
        RatingMatrix::new(rows)
    };
    Ok(RatingSheet {
        clarity: grid(|r| r.clarity)?,
        linking: grid(|r| r.linking)?,
        usefulness: grid(|r| r.usefulness)?,
        item_ids,
        rater_ids,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_agreement() {
        let m = RatingMatrix::new(vec![vec![5, 5, 5], vec![2, 2, 2], vec![4, 4, 4]]).unwrap();
        assert_eq!(fleiss_kappa(&m).unwrap(), 1.0);
    }

    #[test]
    fn single_category_is_undefined() {
        let m = RatingMatrix::new(vec![vec![3, 3], vec![3, 3]]).unwrap();
        assert!(matches!(fleiss_kappa(&m), Err(EvalError::UndefinedKappa)));
    }

    #[test]
    fn hand_fixture() {
        // Items: (5,5,4) (3,3,3) (4,2,4) (1,1,2).
        // P_i: 1/3, 1, 1/3, 1/3 -> P̄ = 0.5.
        // p_j over 12 ratings: 1:2 2:2 3:3 4:3 5:2 -> P̄e = (4+4+9+9+4)/144 = 30/144.
        let m = RatingMatrix::new(vec![
            vec![5, 5, 4],
            vec![3, 3, 3],
            vec![4, 2, 4],
            vec![1, 1, 2],
        ])
        .unwrap();
        let pe = 30.0 / 144.0;
        assert!((fleiss_kappa(&m).unwrap() - (0.5 - pe) / (1.0 - pe)).abs() < 1e-12);
    }

    #[test]
    fn validation() {
        assert!(RatingMatrix::new(vec![vec![1, 2]]).is_err());
        assert!(RatingMatrix::new(vec![vec![1], vec![2]]).is_err());
        assert!(RatingMatrix::new(vec![vec![1, 2], vec![2]]).is_err());
        assert!(RatingMatrix::new(vec![vec![1, 6], vec![2, 2]]).is_err());
    }

    #[test]
    fn csv_ingestion() {
        let csv = "item_id,rater_id,clarity,linking,usefulness\n\
                   e2,r1,4,5,4\ne1,r1,5,5,4\ne1,r2,5,4,4\ne2,r2,3,5,5\n";
        let s = ingest_ratings_str(csv).unwrap();
        assert_eq!(s.item_ids, ["e1", "e2"]);
        assert_eq!(s.clarity.rows(), [vec![5, 5], vec![4, 3]]);
        assert_eq!(s.usefulness.rows(), [vec![4, 4], vec![4, 5]]);
        assert!((s.linking.mean() - 4.75).abs() < 1e-12);

        let missing =
            "item_id,rater_id,clarity,linking,usefulness\ne1,r1,5,5,4\ne1,r2,5,4,4\ne2,r1,3,5,5\n";
        assert!(ingest_ratings_str(missing).is_err());
        let dup = "item_id,rater_id,clarity,linking,usefulness\ne1,r1,5,5,4\ne1,r1,5,4,4\n";
        assert!(ingest_ratings_str(dup).is_err());
    }
}
