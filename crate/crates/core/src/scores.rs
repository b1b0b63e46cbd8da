use crate::{CoreError, PartLabel, Result, NUM_CLASSES};

/// Row-stochastic N×3 matrix of class probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassScores {
    rows: Vec<[f64; NUM_CLASSES]>,
}

impl ClassScores {
    pub const ROW_SUM_TOLERANCE: f64 = 1e-6;

    pub fn new(rows: Vec<[f64; NUM_CLASSES]>) -> Result<Self> {
        for (i, row) in rows.iter().enumerate() {
            if row.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(CoreError::Argument(format!("score row {i} has entries outside [0, 1]")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > Self::ROW_SUM_TOLERANCE {
                return Err(CoreError::Argument(format!("score row {i} sums to {sum}")));
            }
        }
        Ok(ClassScores { rows })
    }

    /// Scores putting all mass on the given labels.
    pub fn one_hot(labels: &[PartLabel]) -> Self {
        let rows = labels
            .iter()
            .map(|l| {
                let mut row = [0.0; NUM_CLASSES];
                row[l.index()] = 1.0;
                row
            })
            .collect();
        ClassScores { rows }
    }

    pub fn rows(&self) -> &[[f64; NUM_CLASSES]] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Highest-scoring class per row, ties to the lowest class code.
    pub fn argmax(&self) -> Vec<PartLabel> {
        self.rows.iter().map(argmax_row).collect()
    }
}

pub fn argmax_row(row: &[f64; NUM_CLASSES]) -> PartLabel {
    let mut best = 0;
    for c in 1..NUM_CLASSES {
        if row[c] > row[best] {
            best = c;
        }
    }
    PartLabel::ALL[best]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validates_rows() {
        assert!(ClassScores::new(vec![[0.2, 0.3, 0.5]]).is_ok());
        assert!(ClassScores::new(vec![[0.2, 0.3, 0.6]]).is_err());
        assert!(ClassScores::new(vec![[-0.1, 0.6, 0.5]]).is_err());
    }

    #[test]
    fn argmax_ties_to_lowest_code() {
        let s = ClassScores::new(vec![[0.5, 0.5, 0.0], [0.1, 0.7, 0.2]]).unwrap();
        assert_eq!(s.argmax(), vec![PartLabel::Flower, PartLabel::Leaf]);
    }
}
