use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::probcore::dist::{Alphabet, FiniteDistribution};

/// A conditional distribution: one row (a [`FiniteDistribution`] over the
/// output alphabet) per tuple of conditioning symbols. Rows are stored
/// row-major with the first conditioning alphabet most significant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StochasticKernel {
    input_alphabets: Vec<Alphabet>,
    rows: Vec<FiniteDistribution>,
}

impl StochasticKernel {
    pub fn new(input_alphabets: Vec<Alphabet>, rows: Vec<FiniteDistribution>) -> Result<Self> {
        if input_alphabets.is_empty() {
            return Err(Error::InvalidArgument(
                "kernel needs at least one conditioning alphabet".into(),
            ));
        }
        let expected: usize = input_alphabets.iter().map(|a| a.len()).product();
        if rows.len() != expected {
            return Err(Error::ShapeMismatch(format!(
                "kernel has {} rows, conditioning alphabets require {expected}",
                rows.len()
            )));
        }
        let out = rows[0].alphabet().clone();
        for r in &rows[1..] {
            if *r.alphabet() != out {
                return Err(Error::AlphabetMismatch {
                    expected: format!("{:?}", out.symbols()),
                    found: format!("{:?}", r.alphabet().symbols()),
                });
            }
        }
        Ok(StochasticKernel {
            input_alphabets,
            rows,
        })
    }

    /// Build from raw row probabilities sharing one output alphabet.
    pub fn from_rows(
        input_alphabets: Vec<Alphabet>,
        output_alphabet: Alphabet,
        probs: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let rows = probs
            .into_iter()
            .map(|p| FiniteDistribution::new(output_alphabet.clone(), p))
            .collect::<Result<Vec<_>>>()?;
        StochasticKernel::new(input_alphabets, rows)
    }

    pub fn input_alphabets(&self) -> &[Alphabet] {
        &self.input_alphabets
    }

    pub fn output_alphabet(&self) -> &Alphabet {
        self.rows[0].alphabet()
    }

    pub fn output_len(&self) -> usize {
        self.rows[0].len()
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    /// Flat row index for a conditioning tuple (first alphabet most
    /// significant).
    pub fn row_index(&self, idx: &[usize]) -> usize {
        assert_eq!(idx.len(), self.input_alphabets.len(), "conditioning arity");
        let mut flat = 0usize;
        for (i, &v) in idx.iter().enumerate() {
            let size = self.input_alphabets[i].len();
            assert!(v < size, "conditioning index out of range");
            flat = flat * size + v;
        }
        flat
    }

    pub fn row(&self, idx: &[usize]) -> &FiniteDistribution {
        &self.rows[self.row_index(idx)]
    }

    pub fn row_flat(&self, flat: usize) -> &FiniteDistribution {
        &self.rows[flat]
    }

    pub fn rows(&self) -> &[FiniteDistribution] {
        &self.rows
    }

    pub fn prob(&self, idx: &[usize], out: usize) -> f64 {
        self.row(idx).prob(out)
    }

    pub fn is_full_support(&self) -> bool {
        self.rows.iter().all(|r| r.is_full_support())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn row_count_must_match_product() {
        let u = Alphabet::numeric(2);
        let w = Alphabet::numeric(3);
        let out = Alphabet::numeric(2);
        let rows = vec![vec![0.5, 0.5]; 5];
        assert!(StochasticKernel::from_rows(vec![u.clone(), w.clone()], out.clone(), rows).is_err());
        let rows = vec![vec![0.5, 0.5]; 6];
        let k = StochasticKernel::from_rows(vec![u, w], out, rows).unwrap();
        assert_eq!(k.n_rows(), 6);
        assert_eq!(k.row_index(&[1, 2]), 5);
    }
}
