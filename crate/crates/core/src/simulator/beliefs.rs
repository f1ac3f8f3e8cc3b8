//! Divergence of realized decoder beliefs from the single-letter law.
//!
//! Conditions on the transmitted messages of successful blocks and compares,
//! stage by stage, the realized posterior over the source (and over the other
//! decoder's signal) with the conditional the policy prescribes at the
//! realized codeword symbols.

use std::collections::HashMap;

use super::codebook::{Codebook, EncodeResult};
use super::{exhaustive_encoded, kl_bits, sampled_encoded, TypicalityConfig};
use crate::error::{Error, Result};
use crate::model::ProblemInstance;
use crate::probcore::JointDistribution;

/// Largest blocklength enumerated exhaustively for binary sources.
pub const EXACT_ENUMERATION_MAX_N: usize = 12;

/// Average per-stage divergences between realized and prescribed beliefs.
#[derive(Debug, Clone, serde::Serialize)]
pub struct BeliefReport {
    pub avg_state_kl: f64,
    pub avg_type_kl_1: f64,
    pub avg_type_kl_2: f64,
    pub successful_traces: u64,
    pub total_traces: u64,
    pub mode: String,
}

pub(crate) struct ConditionalTables {
    /// P(u | w0, w1, w2) per signal triple (w0*c1 + w1)*c2 + w2.
    pub post_state: Vec<Option<Vec<f64>>>,
    /// P(w2 | w0, w1) per pair w0*c1 + w1.
    pub cond_w2: Vec<Option<Vec<f64>>>,
    /// P(w1 | w0, w2) per pair w0*c2 + w2.
    pub cond_w1: Vec<Option<Vec<f64>>>,
}

pub(crate) fn conditional_tables(
    joint: &JointDistribution,
    nu: usize,
    c0: usize,
    c1: usize,
    c2: usize,
) -> Result<ConditionalTables> {
    let trip = joint.marginalize(&[1, 2, 3])?;
    let pair01 = joint.marginalize(&[1, 2])?;
    let pair02 = joint.marginalize(&[1, 3])?;

    let mut post_state = Vec::with_capacity(c0 * c1 * c2);
    for w0 in 0..c0 {
        for w1 in 0..c1 {
            for w2 in 0..c2 {
                let z = trip.mass()[(w0 * c1 + w1) * c2 + w2];
                post_state.push(if z > 0.0 {
                    Some((0..nu).map(|u| joint.prob(&[u, w0, w1, w2]) / z).collect())
                } else {
                    None
                });
            }
        }
    }
    let mut cond_w2 = Vec::with_capacity(c0 * c1);
    for p in 0..c0 * c1 {
        let z = pair01.mass()[p];
        cond_w2.push(if z > 0.0 {
            Some((0..c2).map(|w2| trip.mass()[p * c2 + w2] / z).collect())
        } else {
            None
        });
    }
    let mut cond_w1 = Vec::with_capacity(c0 * c2);
    for w0 in 0..c0 {
        for w2 in 0..c2 {
            let z = pair02.mass()[w0 * c2 + w2];
            cond_w1.push(if z > 0.0 {
                Some(
                    (0..c1)
                        .map(|w1| trip.mass()[(w0 * c1 + w1) * c2 + w2] / z)
                        .collect(),
                )
            } else {
                None
            });
        }
    }
    Ok(ConditionalTables {
        post_state,
        cond_w2,
        cond_w1,
    })
}

struct Bucket {
    mass: f64,
    count: u64,
    /// Per-stage source mass, indexed t * nu + u.
    u_mass: Vec<f64>,
}

/// Average divergence between realized message-conditional beliefs and the
/// policy's conditionals.
///
/// Binary sources with blocklength at most [`EXACT_ENUMERATION_MAX_N`] are
/// enumerated exhaustively, yielding exact message posteriors; otherwise
/// posteriors are estimated from `trials` resampled source blocks with a
/// first-order bias correction, clamped at zero. Fails with a conditioning
/// error when no block succeeds.
pub fn empirical_belief_divergence(
    cb: &Codebook,
    instance: &ProblemInstance,
    config: &TypicalityConfig,
    trials: u64,
    seed: u64,
) -> Result<BeliefReport> {
    let nu = instance.n_u();
    let n = cb.n();
    let exact = nu == 2 && n <= EXACT_ENUMERATION_MAX_N;

    let traces: Vec<(Vec<u8>, EncodeResult, f64)> = if exact {
        exhaustive_encoded(cb, instance, config)?
    } else {
        sampled_encoded(cb, instance, config, trials, seed)?
    };

    let total_traces = traces.len() as u64;
    let c = cb.cards();
    let tables = conditional_tables(cb.single_letter_joint(), nu, c.w0, c.w1, c.w2)?;

    let mut buckets: HashMap<(u64, u64, u64), Bucket> = HashMap::new();
    for (u_seq, enc, w) in &traces {
        if enc.failed() {
            continue;
        }
        let b = buckets
            .entry((enc.m0, enc.m1, enc.m2))
            .or_insert_with(|| Bucket {
                mass: 0.0,
                count: 0,
                u_mass: vec![0.0; n * nu],
            });
        b.mass += w;
        b.count += 1;
        for t in 0..n {
            b.u_mass[t * nu + u_seq[t] as usize] += w;
        }
    }
    if buckets.is_empty() {
        return Err(Error::NoConditioningMass(
            "no source block was encoded without failure".into(),
        ));
    }
    let successful_traces: u64 = buckets.values().map(|b| b.count).sum();
    let ln2 = std::f64::consts::LN_2;
    let nf = n as f64;

    let mut state_num = 0.0;
    let mut state_den = 0.0;
    for (&(m0, m1, m2), b) in &buckets {
        let (i0, i1, i2) = ((m0 - 1) as usize, (m1 - 1) as usize, (m2 - 1) as usize);
        for t in 0..n {
            let w0 = cb.w0_symbol(i0, t) as usize;
            let w1 = cb.w1_symbol(i0, i1, t) as usize;
            let w2 = cb.w2_symbol(i0, i2, t) as usize;
            let Some(target) = tables.post_state[(w0 * c.w1 + w1) * c.w2 + w2].as_ref() else {
                continue;
            };
            let hat: Vec<f64> = (0..nu).map(|u| b.u_mass[t * nu + u] / b.mass).collect();
            let mut kl = kl_bits(&hat, target);
            if !exact {
                kl = (kl - (nu as f64 - 1.0) / (2.0 * b.count as f64 * ln2)).max(0.0);
            }
            state_num += b.mass / nf * kl;
            state_den += b.mass / nf;
        }
    }
    let avg_state_kl = if state_den > 0.0 {
        state_num / state_den
    } else {
        0.0
    };

    // Groups (m0, m1) -> children (m2, mass, count) give the realized belief
    // about the other decoder's signal, and symmetrically for (m0, m2).
    let mut avg_type = [0.0; 2];
    for side in 0..2 {
        let mut groups: HashMap<(u64, u64), Vec<(u64, f64, u64)>> = HashMap::new();
        for (&(m0, m1, m2), b) in &buckets {
            let (own, other) = if side == 0 { (m1, m2) } else { (m2, m1) };
            groups
                .entry((m0, own))
                .or_default()
                .push((other, b.mass, b.count));
        }
        let card = if side == 0 { c.w2 } else { c.w1 };
        let mut num = 0.0;
        let mut den = 0.0;
        for (&(m0, own), children) in &groups {
            let i0 = (m0 - 1) as usize;
            let iown = (own - 1) as usize;
            let gmass: f64 = children.iter().map(|c| c.1).sum();
            let gcount: u64 = children.iter().map(|c| c.2).sum();
            for t in 0..n {
                let w0 = cb.w0_symbol(i0, t) as usize;
                let (pair, target) = if side == 0 {
                    let w1 = cb.w1_symbol(i0, iown, t) as usize;
                    (w0 * c.w1 + w1, tables.cond_w2.as_slice())
                } else {
                    let w2 = cb.w2_symbol(i0, iown, t) as usize;
                    (w0 * c.w2 + w2, tables.cond_w1.as_slice())
                };
                let Some(target) = target[pair].as_ref() else {
                    continue;
                };
                let mut hat = vec![0.0; card];
                for &(other, mass, _) in children {
                    let sym = if side == 0 {
                        cb.w2_symbol(i0, (other - 1) as usize, t)
                    } else {
                        cb.w1_symbol(i0, (other - 1) as usize, t)
                    };
                    hat[sym as usize] += mass / gmass;
                }
                let mut kl = kl_bits(&hat, target);
                if !exact {
                    kl = (kl - (card as f64 - 1.0) / (2.0 * gcount as f64 * ln2)).max(0.0);
                }
                num += gmass / nf * kl;
                den += gmass / nf;
            }
        }
        avg_type[side] = if den > 0.0 { num / den } else { 0.0 };
    }

    Ok(BeliefReport {
        avg_state_kl,
        avg_type_kl_1: avg_type[0],
        avg_type_kl_2: avg_type[1],
        successful_traces,
        total_traces,
        mode: if exact { "exact" } else { "resampling" }.into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{InformationPolicy, InstanceFile, Policy, PolicyCardinalities};
    use crate::simulator::codebook::generate_codebook;

    fn instance(prior: [f64; 2], rates: [f64; 3]) -> ProblemInstance {
        let file = InstanceFile {
            alphabets: vec![
                vec!["0".into(), "1".into()],
                vec!["0".into(), "1".into()],
                vec!["0".into(), "1".into()],
            ],
            prior: prior.to_vec(),
            costs: vec![vec![vec![vec![0.0; 2]; 2]; 2]; 3],
            rates: rates.to_vec(),
        };
        file.build().expect("valid instance")
    }

    #[test]
    fn full_revelation_yields_exactly_zero_divergence() {
        let inst = instance([0.5, 0.5], [1.1, 0.0, 0.0]);
        let policy = Policy::Factorized(
            InformationPolicy::full_revelation(inst.source_alphabet(), PolicyCardinalities::new(2, 1, 1).unwrap()).unwrap(),
        );
        let config = TypicalityConfig::new(0.08, 0.1).unwrap();
        let cb = generate_codebook(&inst, &policy, &config, 12, 17).unwrap();
        let rep = empirical_belief_divergence(&cb, &inst, &config, 0, 0).unwrap();
        assert_eq!(rep.mode, "exact");
        assert_eq!(rep.avg_state_kl.to_bits(), 0.0f64.to_bits());
        assert_eq!(rep.avg_type_kl_1.to_bits(), 0.0f64.to_bits());
        assert_eq!(rep.avg_type_kl_2.to_bits(), 0.0f64.to_bits());
        assert!(rep.successful_traces > 0);
        assert!(rep.successful_traces < rep.total_traces);
    }

    #[test]
    fn uninformative_signalling_yields_exactly_zero_divergence() {
        let inst = instance([0.5, 0.5], [0.0, 0.0, 0.0]);
        let policy =
            Policy::Factorized(InformationPolicy::uninformative(inst.source_alphabet(), PolicyCardinalities::new(1, 1, 1).unwrap()));
        let config = TypicalityConfig::new(2.0, 0.1).unwrap();
        let cb = generate_codebook(&inst, &policy, &config, 12, 4).unwrap();
        let rep = empirical_belief_divergence(&cb, &inst, &config, 0, 0).unwrap();
        assert_eq!(rep.mode, "exact");
        assert_eq!(rep.avg_state_kl.to_bits(), 0.0f64.to_bits());
        assert_eq!(rep.avg_type_kl_1.to_bits(), 0.0f64.to_bits());
        assert_eq!(rep.avg_type_kl_2.to_bits(), 0.0f64.to_bits());
        assert_eq!(rep.successful_traces, rep.total_traces);
    }

    #[test]
    fn longer_blocks_fall_back_to_resampling() {
        let inst = instance([0.5, 0.5], [0.0, 0.0, 0.0]);
        let policy =
            Policy::Factorized(InformationPolicy::uninformative(inst.source_alphabet(), PolicyCardinalities::new(1, 1, 1).unwrap()));
        let config = TypicalityConfig::new(2.0, 0.1).unwrap();
        let cb = generate_codebook(&inst, &policy, &config, 16, 4).unwrap();
        let rep = empirical_belief_divergence(&cb, &inst, &config, 400, 9).unwrap();
        assert_eq!(rep.mode, "resampling");
        assert_eq!(rep.total_traces, 400);
        assert!(rep.avg_state_kl < 0.02);
    }

    #[test]
    fn impossible_typicality_reports_missing_conditioning_mass() {
        let inst = instance([0.3, 0.7], [0.0, 0.0, 0.0]);
        let policy =
            Policy::Factorized(InformationPolicy::uninformative(inst.source_alphabet(), PolicyCardinalities::new(1, 1, 1).unwrap()));
        let config = TypicalityConfig::new(0.0001, 0.1).unwrap();
        let cb = generate_codebook(&inst, &policy, &config, 5, 4).unwrap();
        let err = empirical_belief_divergence(&cb, &inst, &config, 0, 0).unwrap_err();
        assert!(matches!(err, Error::NoConditioningMass(_)));
    }
}
