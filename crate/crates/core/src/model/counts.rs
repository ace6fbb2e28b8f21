//! Growable Dirichlet count matrices with a uniform floor.
//!
//! Columns index the conditioning variable (a state), rows the outcome.
//! Entries equal to the floor are implicit, so a freshly grown row or
//! column costs nothing.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "SparseCounts", try_from = "SparseCounts")]
pub struct CountMatrix {
    rows: usize,
    floor: f64,
    cols: Vec<BTreeMap<usize, f64>>,
}

impl CountMatrix {
    pub fn new(rows: usize, cols: usize, floor: f64) -> Self {
        assert!(floor > 0.0, "count floor must be positive");
        Self {
            rows,
            floor,
            cols: vec![BTreeMap::new(); cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols.len()
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        debug_assert!(row < self.rows);
        self.cols[col].get(&row).copied().unwrap_or(self.floor)
    }

    /// Stores `value` clamped at the floor and returns the stored count.
    pub fn set(&mut self, row: usize, col: usize, value: f64) -> f64 {
        debug_assert!(row < self.rows);
        let v = if value.is_nan() {
            self.floor
        } else {
            value.max(self.floor)
        };
        if v == self.floor {
            self.cols[col].remove(&row);
        } else {
            self.cols[col].insert(row, v);
        }
        v
    }

    pub fn add(&mut self, row: usize, col: usize, delta: f64) -> f64 {
        let v = self.get(row, col) + delta;
        self.set(row, col, v)
    }

    pub fn push_row(&mut self) -> usize {
        self.rows += 1;
        self.rows - 1
    }

    pub fn push_col(&mut self) -> usize {
        self.cols.push(BTreeMap::new());
        self.cols.len() - 1
    }

    pub fn col_total(&self, col: usize) -> f64 {
        let c = &self.cols[col];
        let explicit: f64 = c.values().sum();
        explicit + self.floor * (self.rows - c.len()) as f64
    }

    /// Normalized probability of `row` given `col`.
    pub fn prob(&self, row: usize, col: usize) -> f64 {
        self.get(row, col) / self.col_total(col)
    }

    /// Entries above the floor in one column, as `(row, count)`.
    pub fn explicit(&self, col: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.cols[col].iter().map(|(&r, &v)| (r, v))
    }

    /// Count mass above the floor in one column.
    pub fn excess(&self, col: usize) -> f64 {
        self.cols[col].values().map(|v| v - self.floor).sum()
    }

    /// Dense normalized copy, indexed `[col][row]`.
    pub fn normalized(&self) -> Vec<Vec<f64>> {
        (0..self.cols())
            .map(|c| {
                let total = self.col_total(c);
                (0..self.rows).map(|r| self.get(r, c) / total).collect()
            })
            .collect()
    }

    pub fn min_count(&self) -> f64 {
        self.cols
            .iter()
            .flat_map(|c| c.values().copied())
            .fold(self.floor, f64::min)
    }
}

/// Categorical view of a count matrix: each column (outcome distribution for
/// one conditioning value) normalized to sum to one. Indexed `[col][row]`.
pub fn normalized(counts: &CountMatrix) -> Vec<Vec<f64>> {
    counts.normalized()
}

/// Serialized form: explicit entries in row-major order.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct SparseCounts {
    rows: usize,
    cols: usize,
    floor: f64,
    entries: Vec<(usize, usize, f64)>,
}

impl From<CountMatrix> for SparseCounts {
    fn from(m: CountMatrix) -> Self {
        let mut entries: Vec<(usize, usize, f64)> = m
            .cols
            .iter()
            .enumerate()
            .flat_map(|(c, col)| col.iter().map(move |(&r, &v)| (r, c, v)))
            .collect();
        entries.sort_by_key(|&(r, c, _)| (r, c));
        SparseCounts {
            rows: m.rows,
            cols: m.cols.len(),
            floor: m.floor,
            entries,
        }
    }
}

impl TryFrom<SparseCounts> for CountMatrix {
    type Error = String;

    fn try_from(s: SparseCounts) -> Result<Self, Self::Error> {
        if !(s.floor > 0.0) {
            return Err(format!("non-positive floor {}", s.floor));
        }
        let mut m = CountMatrix::new(s.rows, s.cols, s.floor);
        for (r, c, v) in s.entries {
            if r >= s.rows || c >= s.cols {
                return Err(format!("entry ({r}, {c}) outside {}x{}", s.rows, s.cols));
            }
            if !(v > s.floor) || !v.is_finite() {
                return Err(format!("entry ({r}, {c}) = {v} not above floor"));
            }
            m.cols[c].insert(r, v);
        }
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn uniform_and_ratio_columns() {
        let mut m = CountMatrix::new(4, 1, 1.0);
        assert_eq!(m.normalized()[0], vec![0.25; 4]);
        let mut two = CountMatrix::new(2, 1, 1.0);
        two.set(0, 0, 3.0);
        assert_eq!(two.normalized()[0], vec![0.75, 0.25]);
        m.set(2, 0, 0.5);
        assert_eq!(m.get(2, 0), 1.0, "clamped to floor");
    }

    #[test]
    fn growth_adds_floor_entries() {
        let mut m = CountMatrix::new(2, 2, 0.1);
        m.set(0, 0, 3.0);
        let r = m.push_row();
        let c = m.push_col();
        assert_eq!((r, c), (2, 2));
        assert_eq!(m.get(2, 0), 0.1);
        assert!((m.col_total(2) - 0.3).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn columns_sum_to_one(entries in proptest::collection::vec((0usize..6, 0usize..5, 0.1f64..50.0), 0..30)) {
            let mut m = CountMatrix::new(6, 5, 0.1);
            for (r, c, v) in entries {
                m.set(r, c, v);
            }
            for col in m.normalized() {
                let s: f64 = col.iter().sum();
                prop_assert!((s - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn normalization_is_monotone_in_own_count(v in 0.1f64..20.0, bump in 0.0f64..20.0) {
            let mut m = CountMatrix::new(3, 1, 0.1);
            m.set(1, 0, 2.0);
            m.set(0, 0, v);
            let before = m.prob(0, 0);
            m.set(0, 0, v + bump);
            prop_assert!(m.prob(0, 0) >= before);
        }

        #[test]
        fn serde_round_trip_is_exact(entries in proptest::collection::vec((0usize..5, 0usize..4, 0.1f64..1e6), 0..20)) {
            let mut m = CountMatrix::new(5, 4, 0.1);
            for (r, c, v) in entries {
                m.set(r, c, v);
            }
            let text = serde_json::to_string(&m).unwrap();
            let back: CountMatrix = serde_json::from_str(&text).unwrap();
            prop_assert_eq!(back, m);
        }
    }
}
