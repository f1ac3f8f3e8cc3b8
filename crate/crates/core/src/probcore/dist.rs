use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mass must sum to one within this tolerance after construction.
pub const MASS_TOL: f64 = 1e-12;
/// Raw input mass may deviate from one by up to this amount; construction
/// renormalizes such inputs and rejects anything further out.
pub const RAW_SUM_TOL: f64 = 1e-9;

/// An ordered list of symbol labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alphabet {
    symbols: Vec<String>,
}

impl Alphabet {
    pub fn new(symbols: Vec<String>) -> Result<Self> {
        if symbols.is_empty() {
            return Err(Error::InvalidArgument("alphabet must be nonempty".into()));
        }
        for i in 0..symbols.len() {
            for j in (i + 1)..symbols.len() {
                if symbols[i] == symbols[j] {
                    return Err(Error::InvalidArgument(format!(
                        "alphabet has duplicate symbol '{}'",
                        symbols[i]
                    )));
                }
            }
        }
        Ok(Alphabet { symbols })
    }

    /// Alphabet with labels "0", "1", ..., `len - 1`.
    pub fn numeric(len: usize) -> Self {
        Alphabet {
            symbols: (0..len).map(|i| i.to_string()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn symbol(&self, i: usize) -> &str {
        &self.symbols[i]
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn index_of(&self, symbol: &str) -> Option<usize> {
        self.symbols.iter().position(|s| s == symbol)
    }
}

/// A probability distribution over a finite alphabet.
///
/// Entries are nonnegative and sum to one within [`MASS_TOL`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteDistribution {
    alphabet: Alphabet,
    mass: Vec<f64>,
}

impl FiniteDistribution {
    pub fn new(alphabet: Alphabet, mass: Vec<f64>) -> Result<Self> {
        if mass.len() != alphabet.len() {
            return Err(Error::ShapeMismatch(format!(
                "mass has {} entries for an alphabet of size {}",
                mass.len(),
                alphabet.len()
            )));
        }
        let mut sum = 0.0;
        for (i, &m) in mass.iter().enumerate() {
            if !m.is_finite() {
                return Err(Error::InvalidDistribution(format!(
                    "mass entry {i} is not finite"
                )));
            }
            if m < 0.0 {
                return Err(Error::InvalidDistribution(format!(
                    "mass entry {i} is negative ({m})"
                )));
            }
            sum += m;
        }
        if (sum - 1.0).abs() > RAW_SUM_TOL {
            return Err(Error::InvalidDistribution(format!(
                "mass sums to {sum}, outside tolerance {RAW_SUM_TOL} of 1"
            )));
        }
        let mass: Vec<f64> = mass.into_iter().map(|m| m / sum).collect();
        debug_assert!((mass.iter().sum::<f64>() - 1.0).abs() <= MASS_TOL);
        Ok(FiniteDistribution { alphabet, mass })
    }

    /// Distribution placing all mass on one symbol.
    pub fn point_mass(alphabet: Alphabet, index: usize) -> Result<Self> {
        if index >= alphabet.len() {
            return Err(Error::ShapeMismatch(format!(
                "point mass index {index} out of range for alphabet of size {}",
                alphabet.len()
            )));
        }
        let mut mass = vec![0.0; alphabet.len()];
        mass[index] = 1.0;
        Ok(FiniteDistribution { alphabet, mass })
    }

    pub fn uniform(alphabet: Alphabet) -> Self {
        let n = alphabet.len();
        FiniteDistribution {
            alphabet,
            mass: vec![1.0 / n as f64; n],
        }
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn prob(&self, i: usize) -> f64 {
        self.mass[i]
    }

    pub fn is_full_support(&self) -> bool {
        self.mass.iter().all(|&m| m > 0.0)
    }

    /// L1 distance to another distribution over the same alphabet.
    pub fn l1_distance(&self, other: &FiniteDistribution) -> Result<f64> {
        if self.alphabet != other.alphabet {
            return Err(Error::AlphabetMismatch {
                expected: format!("{:?}", self.alphabet.symbols()),
                found: format!("{:?}", other.alphabet.symbols()),
            });
        }
        Ok(self
            .mass
            .iter()
            .zip(other.mass.iter())
            .map(|(a, b)| (a - b).abs())
            .sum())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_negative_mass() {
        let a = Alphabet::numeric(2);
        assert!(FiniteDistribution::new(a, vec![1.1, -0.1]).is_err());
    }

    #[test]
    fn renormalizes_near_one() {
        let a = Alphabet::numeric(2);
        let d = FiniteDistribution::new(a, vec![0.5 + 4e-10, 0.5]).unwrap();
        assert!((d.mass().iter().sum::<f64>() - 1.0).abs() <= MASS_TOL);
    }

    #[test]
    fn rejects_bad_sum() {
        let a = Alphabet::numeric(2);
        assert!(FiniteDistribution::new(a, vec![0.6, 0.5]).is_err());
    }

    #[test]
    fn rejects_duplicate_symbols() {
        assert!(Alphabet::new(vec!["a".into(), "a".into()]).is_err());
    }
}
