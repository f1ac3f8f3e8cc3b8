//! Finite-blocklength simulation of the layered signalling scheme.
//!
//! A codebook realizes the committed policy at blocklength n with message
//! counts 2^floor(n * R_i); the encoder transmits the first jointly typical
//! codewords under an L1 count test of radius n * delta. On top of that sit
//! error-event estimation (explicit codebooks when they fit in memory, exact
//! codebook-averaged arithmetic otherwise), belief-divergence measurement,
//! per-stage decoding games, and a converse-side audit of induced joints.

mod beliefs;
mod codebook;
mod converse;
mod ensemble;
mod stage;
mod typecalc;

pub use beliefs::{empirical_belief_divergence, BeliefReport, EXACT_ENUMERATION_MAX_N};
pub use codebook::{
    encode, exhaustive_traces, explicit_codebook_fits, generate_codebook, message_count,
    sample_traces, simulate_trace, BlockTrace, Codebook, EncodeResult, CODEBOOK_SYMBOL_BUDGET,
    EXHAUSTIVE_SOURCE_BUDGET,
};
pub use converse::{converse_check, ConverseReport, INDUCED_JOINT_CELL_BUDGET};
pub use ensemble::{ensemble_block_report, ensemble_error_events, EnsembleBlockReport};
pub use stage::{stagewise_block_game, StageReport, STAGE_EXHAUSTIVE_BUDGET};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{build_joint, policy_information, Policy, ProblemInstance, RateTriple};

/// Typicality test parameters.
///
/// `delta` is the L1 radius of the count test, as a fraction of n; `eta` is
/// the per-rate margin used when deriving operating rates from a policy.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct TypicalityConfig {
    delta: f64,
    eta: f64,
}

impl TypicalityConfig {
    pub fn new(delta: f64, eta: f64) -> Result<Self> {
        if !(delta.is_finite() && delta > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "typicality radius must be a positive finite number, got {delta}"
            )));
        }
        if !(eta.is_finite() && eta > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "rate margin must be a positive finite number, got {eta}"
            )));
        }
        Ok(TypicalityConfig { delta, eta })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// Default parameters for a policy: margin 0.1 bits, radius 0.1 times the
    /// residual source entropy given all three signals (0.1 outright when the
    /// signals already determine the source).
    pub fn defaults_for(instance: &ProblemInstance, policy: &Policy) -> Result<Self> {
        let eta = 0.1;
        let joint = build_joint(instance, policy)?;
        let h = joint.entropy_of(&[0, 1, 2, 3])? - joint.entropy_of(&[1, 2, 3])?;
        let delta = if h > 1e-9 { eta * h } else { eta };
        TypicalityConfig::new(delta, eta)
    }

    /// Operating rates `margin` bits above the split-rate information of the
    /// policy on each branch.
    pub fn margin_rates(
        instance: &ProblemInstance,
        policy: &Policy,
        margin: f64,
    ) -> Result<RateTriple> {
        let info = policy_information(instance, policy)?;
        RateTriple::new(
            info.i_u_w0 + margin,
            info.i_u_w1_given_w0 + margin,
            info.i_u_w2_given_w0 + margin,
        )
    }
}

/// Estimator selection for error events.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimMode {
    /// Explicit codebook when it fits, codebook-averaged otherwise.
    Auto,
    Explicit,
    Ensemble,
}

impl std::str::FromStr for SimMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(SimMode::Auto),
            "explicit" => Ok(SimMode::Explicit),
            "ensemble" => Ok(SimMode::Ensemble),
            other => Err(Error::Parse(format!(
                "unknown simulation mode {other:?} (expected auto, explicit, or ensemble)"
            ))),
        }
    }
}

impl std::fmt::Display for SimMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SimMode::Auto => "auto",
            SimMode::Explicit => "explicit",
            SimMode::Ensemble => "ensemble",
        })
    }
}

/// Monte-Carlo estimates of the three encoding failure events.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ErrorReport {
    pub p_f0: f64,
    pub p_f0_half_width: f64,
    pub p_f1_given_not_f0: f64,
    pub p_f1_half_width: f64,
    pub p_f2_given_not_f0: f64,
    pub p_f2_half_width: f64,
    pub trials: u64,
    pub conditional_trials: u64,
    pub mode: String,
}

/// Estimate the failure probabilities of the three typicality searches over
/// fresh source blocks, with 95% normal-approximation half-widths.
pub fn estimate_error_events(
    instance: &ProblemInstance,
    policy: &Policy,
    config: &TypicalityConfig,
    n: usize,
    trials: u64,
    seed: u64,
    mode: SimMode,
) -> Result<ErrorReport> {
    match mode {
        SimMode::Explicit => explicit_error_events(instance, policy, config, n, trials, seed),
        SimMode::Ensemble => ensemble_error_events(instance, policy, config, n, trials, seed),
        SimMode::Auto => {
            if explicit_codebook_fits(n, &instance.rates) {
                explicit_error_events(instance, policy, config, n, trials, seed)
            } else {
                ensemble_error_events(instance, policy, config, n, trials, seed).map_err(|e| {
                    match e {
                        Error::UnsupportedType(msg) => Error::BudgetExceeded {
                            required: format!(
                                "an explicit codebook beyond the symbol budget ({msg})"
                            ),
                            budget: format!("{CODEBOOK_SYMBOL_BUDGET} codeword symbols"),
                        },
                        other => other,
                    }
                })
            }
        }
    }
}

fn explicit_error_events(
    instance: &ProblemInstance,
    policy: &Policy,
    config: &TypicalityConfig,
    n: usize,
    trials: u64,
    seed: u64,
) -> Result<ErrorReport> {
    if trials == 0 {
        return Err(Error::InvalidArgument("trial count must be positive".into()));
    }
    let cb = generate_codebook(instance, policy, config, n, seed)?;
    let prior = instance.source.mass().to_vec();
    let outcomes: Result<Vec<EncodeResult>> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = trial_rng(seed, trial + 1);
            let u_seq = source_block(&prior, n, &mut rng);
            encode(&cb, &u_seq, config)
        })
        .collect();
    let outcomes = outcomes?;

    let m = trials as f64;
    let p_f0 = outcomes.iter().filter(|o| o.f0).count() as f64 / m;
    let cond: Vec<&EncodeResult> = outcomes.iter().filter(|o| !o.f0).collect();
    let mc = cond.len() as f64;
    let freq = |f: fn(&EncodeResult) -> bool| -> f64 {
        if cond.is_empty() {
            f64::NAN
        } else {
            cond.iter().filter(|o| f(o)).count() as f64 / mc
        }
    };
    let p_f1 = freq(|o| o.f1);
    let p_f2 = freq(|o| o.f2);
    let hw = |p: f64, m: f64| -> f64 {
        if p.is_nan() || m == 0.0 {
            f64::NAN
        } else {
            1.96 * (p * (1.0 - p) / m).sqrt()
        }
    };
    Ok(ErrorReport {
        p_f0,
        p_f0_half_width: hw(p_f0, m),
        p_f1_given_not_f0: p_f1,
        p_f1_half_width: hw(p_f1, mc),
        p_f2_given_not_f0: p_f2,
        p_f2_half_width: hw(p_f2, mc),
        trials,
        conditional_trials: cond.len() as u64,
        mode: "explicit".into(),
    })
}

pub(crate) fn trial_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub(crate) fn draw_from(mass: &[f64], rng: &mut ChaCha8Rng) -> u8 {
    let r = rng.gen::<f64>();
    let mut acc = 0.0;
    let mut last = 0u8;
    for (i, &p) in mass.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        last = i as u8;
        acc += p;
        if r < acc {
            break;
        }
    }
    last
}

pub(crate) fn source_block(prior: &[f64], n: usize, rng: &mut ChaCha8Rng) -> Vec<u8> {
    (0..n).map(|_| draw_from(prior, rng)).collect()
}

/// KL divergence in bits between mass vectors of equal length; infinite when
/// the first puts mass where the second has none.
pub(crate) fn kl_bits(p: &[f64], q: &[f64]) -> f64 {
    debug_assert_eq!(p.len(), q.len());
    let mut kl = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        if pi > 0.0 {
            if qi <= 0.0 {
                return f64::INFINITY;
            }
            kl += pi * (pi / qi).log2();
        }
    }
    kl
}

/// Encode every positive-probability source block, weighted by its law.
pub(crate) fn exhaustive_encoded(
    cb: &Codebook,
    instance: &ProblemInstance,
    config: &TypicalityConfig,
) -> Result<Vec<(Vec<u8>, EncodeResult, f64)>> {
    let nu = instance.n_u();
    let n = cb.n();
    let total = match (nu as u128).checked_pow(n as u32) {
        Some(t) if t <= EXHAUSTIVE_SOURCE_BUDGET as u128 => t as u64,
        _ => {
            return Err(Error::BudgetExceeded {
                required: format!("{nu}^{n} source sequences"),
                budget: format!("{EXHAUSTIVE_SOURCE_BUDGET} source sequences"),
            })
        }
    };
    let prior = instance.source.mass().to_vec();
    let rows: Result<Vec<Option<(Vec<u8>, EncodeResult, f64)>>> = (0..total)
        .into_par_iter()
        .map(|idx| {
            let mut u_seq = vec![0u8; n];
            let mut rem = idx;
            let mut weight = 1.0;
            for t in (0..n).rev() {
                let s = (rem % nu as u64) as u8;
                rem /= nu as u64;
                u_seq[t] = s;
                weight *= prior[s as usize];
            }
            if weight <= 0.0 {
                return Ok(None);
            }
            let enc = encode(cb, &u_seq, config)?;
            Ok(Some((u_seq, enc, weight)))
        })
        .collect();
    Ok(rows?.into_iter().flatten().collect())
}

/// Encode `trials` fresh source blocks with unit weights.
pub(crate) fn sampled_encoded(
    cb: &Codebook,
    instance: &ProblemInstance,
    config: &TypicalityConfig,
    trials: u64,
    seed: u64,
) -> Result<Vec<(Vec<u8>, EncodeResult, f64)>> {
    if trials == 0 {
        return Err(Error::InvalidArgument("trial count must be positive".into()));
    }
    let prior = instance.source.mass().to_vec();
    (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = trial_rng(seed, trial + 1);
            let u_seq = source_block(&prior, cb.n(), &mut rng);
            let enc = encode(cb, &u_seq, config)?;
            Ok((u_seq, enc, 1.0))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{InformationPolicy, InstanceFile, PolicyCardinalities};

    fn binary_instance(rates: [f64; 3]) -> ProblemInstance {
        let file = InstanceFile {
            alphabets: vec![
                vec!["0".into(), "1".into()],
                vec!["0".into(), "1".into()],
                vec!["0".into(), "1".into()],
            ],
            prior: vec![0.5, 0.5],
            costs: vec![
                vec![
                    vec![vec![0.0, 1.0], vec![1.0, 2.0]],
                    vec![vec![2.0, 1.0], vec![1.0, 0.0]],
                ],
                vec![
                    vec![vec![0.0, 0.0], vec![1.0, 1.0]],
                    vec![vec![1.0, 1.0], vec![0.0, 0.0]],
                ],
                vec![
                    vec![vec![0.0, 1.0], vec![0.0, 1.0]],
                    vec![vec![1.0, 0.0], vec![1.0, 0.0]],
                ],
            ],
            rates: rates.to_vec(),
        };
        file.build().expect("valid instance")
    }

    fn noisy_policy(instance: &ProblemInstance, flip: f64) -> Policy {
        let alpha = instance.source_alphabet().clone();
        let cards = PolicyCardinalities::new(2, 1, 1).unwrap();
        let rows0 = vec![vec![1.0 - flip, flip], vec![flip, 1.0 - flip]];
        Policy::Factorized(
            InformationPolicy::from_rows(
                &alpha,
                cards,
                rows0,
                vec![vec![1.0]; 4],
                vec![vec![1.0]; 4],
            )
            .unwrap(),
        )
    }

    #[test]
    fn config_rejects_nonpositive_parameters() {
        assert!(TypicalityConfig::new(0.0, 0.1).is_err());
        assert!(TypicalityConfig::new(0.1, -1.0).is_err());
        assert!(TypicalityConfig::new(f64::NAN, 0.1).is_err());
        let c = TypicalityConfig::new(0.2, 0.1).unwrap();
        assert_eq!(c.delta(), 0.2);
        assert_eq!(c.eta(), 0.1);
    }

    #[test]
    fn default_radius_scales_with_residual_entropy() {
        let instance = binary_instance([0.6, 0.1, 0.1]);
        let noisy = noisy_policy(&instance, 0.1);
        let c = TypicalityConfig::defaults_for(&instance, &noisy).unwrap();
        let h = 0.4689955935892812;
        assert!((c.delta() - 0.1 * h).abs() < 1e-12);
        assert_eq!(c.eta(), 0.1);

        let revealing = Policy::Factorized(
            InformationPolicy::full_revelation(instance.source_alphabet(), PolicyCardinalities::new(2, 1, 1).unwrap()).unwrap(),
        );
        let c = TypicalityConfig::defaults_for(&instance, &revealing).unwrap();
        assert_eq!(c.delta(), 0.1);
    }

    #[test]
    fn margin_rates_sit_above_the_policy_information() {
        let instance = binary_instance([0.6, 0.1, 0.1]);
        let noisy = noisy_policy(&instance, 0.1);
        let rates = TypicalityConfig::margin_rates(&instance, &noisy, 0.1).unwrap();
        assert!((rates.r0 - (0.5310044064107188 + 0.1)).abs() < 1e-12);
        assert!((rates.r1 - 0.1).abs() < 1e-12);
        assert!((rates.r2 - 0.1).abs() < 1e-12);
    }

    #[test]
    fn vacuous_radius_produces_zero_error_rates() {
        let instance = binary_instance([0.5, 0.25, 0.25]);
        let policy = noisy_policy(&instance, 0.1);
        let config = TypicalityConfig::new(2.0, 0.1).unwrap();
        let rep = estimate_error_events(&instance, &policy, &config, 8, 200, 1, SimMode::Auto)
            .unwrap();
        assert_eq!(rep.mode, "explicit");
        assert_eq!(rep.p_f0, 0.0);
        assert_eq!(rep.p_f1_given_not_f0, 0.0);
        assert_eq!(rep.p_f2_given_not_f0, 0.0);
        assert_eq!(rep.conditional_trials, 200);
    }

    #[test]
    fn auto_mode_switches_to_the_ensemble_beyond_the_budget() {
        let instance = binary_instance([0.73, 0.1, 0.1]);
        let policy = noisy_policy(&instance, 0.1);
        let config = TypicalityConfig::new(0.1, 0.1).unwrap();
        let rep = estimate_error_events(&instance, &policy, &config, 400, 50, 2, SimMode::Auto)
            .unwrap();
        assert_eq!(rep.mode, "ensemble");
    }

    #[test]
    fn mode_strings_round_trip() {
        for m in [SimMode::Auto, SimMode::Explicit, SimMode::Ensemble] {
            assert_eq!(m.to_string().parse::<SimMode>().unwrap(), m);
        }
        assert!("fancy".parse::<SimMode>().is_err());
    }
}
