use crate::error::{Error, Result};
use crate::probcore::dist::FiniteDistribution;
use crate::probcore::joint::JointDistribution;
use crate::probcore::kernel::StochasticKernel;

/// Shannon entropy in bits of a raw mass slice, with `0 log 0 = 0`.
pub fn entropy_of_masses(mass: &[f64]) -> f64 {
    let mut h = 0.0;
    for &p in mass {
        if p > 0.0 {
            h -= p * p.log2();
        }
    }
    h
}

/// Shannon entropy in bits.
pub fn entropy(p: &FiniteDistribution) -> f64 {
    entropy_of_masses(p.mass())
}

/// Kullback-Leibler divergence `D(p || q)` in bits.
///
/// Returns `+inf` when the support of `p` is not contained in the support of
/// `q`; rejects distributions over different alphabets.
pub fn kl_divergence(p: &FiniteDistribution, q: &FiniteDistribution) -> Result<f64> {
    if p.alphabet() != q.alphabet() {
        return Err(Error::AlphabetMismatch {
            expected: format!("{:?}", p.alphabet().symbols()),
            found: format!("{:?}", q.alphabet().symbols()),
        });
    }
    let mut d = 0.0;
    for (&pi, &qi) in p.mass().iter().zip(q.mass().iter()) {
        if pi > 0.0 {
            if qi <= 0.0 {
                return Ok(f64::INFINITY);
            }
            d += pi * (pi / qi).log2();
        }
    }
    Ok(d)
}

/// Mutual information `I(X; Y)` in bits of a two-axis joint.
pub fn mutual_information(joint: &JointDistribution) -> Result<f64> {
    if joint.n_axes() != 2 {
        return Err(Error::ShapeMismatch(format!(
            "mutual_information expects a 2-axis joint, got {} axes",
            joint.n_axes()
        )));
    }
    joint.mi_between(&[0], &[1])
}

/// Conditional mutual information `I(X; Y | Z)` in bits of a three-axis joint
/// with `Z` on the last axis.
pub fn conditional_mutual_information(joint: &JointDistribution) -> Result<f64> {
    if joint.n_axes() != 3 {
        return Err(Error::ShapeMismatch(format!(
            "conditional_mutual_information expects a 3-axis joint, got {} axes",
            joint.n_axes()
        )));
    }
    joint.cmi_between(&[0], &[1], &[2])
}

/// Posterior over the kernel input given one observed output symbol.
///
/// A zero-probability observation is an explicit error, never a silent
/// uniform fallback.
pub fn bayes_posterior(
    prior: &FiniteDistribution,
    kernel: &StochasticKernel,
    observation: usize,
) -> Result<FiniteDistribution> {
    if kernel.input_alphabets().len() != 1 {
        return Err(Error::ShapeMismatch(
            "bayes_posterior expects a kernel with a single conditioning alphabet".into(),
        ));
    }
    if kernel.input_alphabets()[0] != *prior.alphabet() {
        return Err(Error::AlphabetMismatch {
            expected: format!("{:?}", prior.alphabet().symbols()),
            found: format!("{:?}", kernel.input_alphabets()[0].symbols()),
        });
    }
    if observation >= kernel.output_len() {
        return Err(Error::ShapeMismatch(format!(
            "observation index {observation} out of range for output alphabet of size {}",
            kernel.output_len()
        )));
    }
    let n = prior.len();
    let mut post = vec![0.0; n];
    let mut z = 0.0;
    for x in 0..n {
        let v = prior.prob(x) * kernel.row(&[x]).prob(observation);
        post[x] = v;
        z += v;
    }
    if z <= 0.0 {
        return Err(Error::UnreachableObservation {
            symbol: kernel.output_alphabet().symbol(observation).to_string(),
        });
    }
    for v in &mut post {
        *v /= z;
    }
    FiniteDistribution::new(prior.alphabet().clone(), post)
}
