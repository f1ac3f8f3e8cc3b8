//! Finite probability primitives: alphabets, distributions, kernels, joint
//! tensors, and the information-theoretic functionals built on them.
//!
//! All information quantities are in bits (base-2 logarithms) and use the
//! convention `0 * log 0 = 0`. Values are plain `f64`; the structures are
//! immutable after construction so they can be shared freely.

mod dist;
mod info;
mod joint;
mod kernel;

pub use dist::{Alphabet, FiniteDistribution, MASS_TOL, RAW_SUM_TOL};
pub use info::{
    bayes_posterior, conditional_mutual_information, entropy, entropy_of_masses, kl_divergence,
    mutual_information,
};
pub use joint::JointDistribution;
pub use kernel::StochasticKernel;
