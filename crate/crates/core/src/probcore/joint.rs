use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::probcore::dist::{Alphabet, MASS_TOL, RAW_SUM_TOL};
use crate::probcore::info::entropy_of_masses;

/// A joint distribution over a product of finite alphabets, stored as a
/// row-major tensor (last axis fastest).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointDistribution {
    axes: Vec<Alphabet>,
    mass: Vec<f64>,
}

impl JointDistribution {
    pub fn new(axes: Vec<Alphabet>, mass: Vec<f64>) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::InvalidArgument("joint needs at least one axis".into()));
        }
        let expected: usize = axes.iter().map(|a| a.len()).product();
        if mass.len() != expected {
            return Err(Error::ShapeMismatch(format!(
                "joint tensor has {} cells, axes require {expected}",
                mass.len()
            )));
        }
        let mut sum = 0.0;
        for (i, &m) in mass.iter().enumerate() {
            if !m.is_finite() || m < 0.0 {
                return Err(Error::InvalidDistribution(format!(
                    "joint cell {i} is invalid ({m})"
                )));
            }
            sum += m;
        }
        if (sum - 1.0).abs() > RAW_SUM_TOL {
            return Err(Error::InvalidDistribution(format!(
                "joint mass sums to {sum}, outside tolerance {RAW_SUM_TOL} of 1"
            )));
        }
        let mass: Vec<f64> = mass.into_iter().map(|m| m / sum).collect();
        debug_assert!((mass.iter().sum::<f64>() - 1.0).abs() <= MASS_TOL);
        Ok(JointDistribution { axes, mass })
    }

    pub fn axes(&self) -> &[Alphabet] {
        &self.axes
    }

    pub fn n_axes(&self) -> usize {
        self.axes.len()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.len()).collect()
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        assert_eq!(idx.len(), self.axes.len());
        let mut flat = 0usize;
        for (i, &v) in idx.iter().enumerate() {
            let size = self.axes[i].len();
            assert!(v < size, "joint index out of range on axis {i}");
            flat = flat * size + v;
        }
        flat
    }

    pub fn prob(&self, idx: &[usize]) -> f64 {
        self.mass[self.flat_index(idx)]
    }

    /// Marginal over `keep` (strictly increasing axis indices). Marginalizing
    /// onto all axes returns an identical tensor.
    pub fn marginalize(&self, keep: &[usize]) -> Result<JointDistribution> {
        self.check_axis_set(keep)?;
        let shape = self.shape();
        let kept_axes: Vec<Alphabet> = keep.iter().map(|&a| self.axes[a].clone()).collect();
        let out_len: usize = keep.iter().map(|&a| shape[a]).product();
        let mut out = vec![0.0; out_len];
        let mut idx = vec![0usize; shape.len()];
        for (flat, &m) in self.mass.iter().enumerate() {
            decode_index(flat, &shape, &mut idx);
            let mut o = 0usize;
            for &a in keep {
                o = o * shape[a] + idx[a];
            }
            out[o] += m;
        }
        JointDistribution::new(kept_axes, out)
    }

    /// Entropy in bits of the marginal over `axes`.
    pub fn entropy_of(&self, axes: &[usize]) -> Result<f64> {
        self.check_axis_set(axes)?;
        let shape = self.shape();
        let out_len: usize = axes.iter().map(|&a| shape[a]).product();
        let mut out = vec![0.0; out_len];
        let mut idx = vec![0usize; shape.len()];
        for (flat, &m) in self.mass.iter().enumerate() {
            decode_index(flat, &shape, &mut idx);
            let mut o = 0usize;
            for &a in axes {
                o = o * shape[a] + idx[a];
            }
            out[o] += m;
        }
        Ok(entropy_of_masses(&out))
    }

    /// Mutual information `I(A; B)` in bits between two disjoint axis groups.
    /// Clamped at zero so that independent groups report exactly 0.
    pub fn mi_between(&self, a: &[usize], b: &[usize]) -> Result<f64> {
        self.check_disjoint(a, b)?;
        let mut ab: Vec<usize> = a.iter().chain(b.iter()).copied().collect();
        ab.sort_unstable();
        let v = self.entropy_of(a)? + self.entropy_of(b)? - self.entropy_of(&ab)?;
        Ok(v.max(0.0))
    }

    /// Conditional mutual information `I(A; B | Z)` in bits, clamped at zero.
    pub fn cmi_between(&self, a: &[usize], b: &[usize], z: &[usize]) -> Result<f64> {
        self.check_disjoint(a, b)?;
        self.check_disjoint(a, z)?;
        self.check_disjoint(b, z)?;
        let join = |x: &[usize], y: &[usize]| {
            let mut v: Vec<usize> = x.iter().chain(y.iter()).copied().collect();
            v.sort_unstable();
            v
        };
        let az = join(a, z);
        let bz = join(b, z);
        let abz = join(&az, b);
        let hz = if z.is_empty() { 0.0 } else { self.entropy_of(z)? };
        let v = self.entropy_of(&az)? + self.entropy_of(&bz)? - hz - self.entropy_of(&abz)?;
        Ok(v.max(0.0))
    }

    fn check_axis_set(&self, axes: &[usize]) -> Result<()> {
        if axes.is_empty() {
            return Err(Error::InvalidArgument("axis set must be nonempty".into()));
        }
        for w in axes.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::InvalidArgument(
                    "axis set must be strictly increasing".into(),
                ));
            }
        }
        if *axes.last().unwrap() >= self.axes.len() {
            return Err(Error::InvalidArgument(format!(
                "axis {} out of range ({} axes)",
                axes.last().unwrap(),
                self.axes.len()
            )));
        }
        Ok(())
    }

    fn check_disjoint(&self, a: &[usize], b: &[usize]) -> Result<()> {
        if !a.is_empty() {
            self.check_axis_set(a)?;
        }
        if !b.is_empty() {
            self.check_axis_set(b)?;
        }
        for x in a {
            if b.contains(x) {
                return Err(Error::InvalidArgument(format!(
                    "axis groups are not disjoint (axis {x})"
                )));
            }
        }
        Ok(())
    }
}

pub(crate) fn decode_index(mut flat: usize, shape: &[usize], out: &mut [usize]) {
    for i in (0..shape.len()).rev() {
        out[i] = flat % shape[i];
        flat /= shape[i];
    }
}
