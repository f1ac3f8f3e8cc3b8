//! Converse-side audit of simulated blocks.
//!
//! Any block scheme induces a single-letter joint law by drawing a uniform
//! stage index: the common signal becomes the pair (common message, stage),
//! the private signals the private messages. The audit materializes that
//! joint from traces, checks it against the joint-kernel rate region at the
//! operating rates, and verifies the cost-accounting identity.

use super::codebook::{BlockTrace, Codebook};
use crate::error::{Error, Result};
use crate::model::{ProblemInstance, RATE_FEAS_TOL};
use crate::probcore::{Alphabet, JointDistribution};

/// Cell ceiling for the induced joint tensor.
pub const INDUCED_JOINT_CELL_BUDGET: u64 = 1 << 26;

/// Induced single-letter law of a block scheme and its rate-region audit.
#[derive(Debug, Clone)]
pub struct ConverseReport {
    /// Joint over (U, (M0, stage), M1, M2, V1, V2).
    pub induced_joint: JointDistribution,
    /// Rate slacks against [R0, R0 + R1, R0 + R2] for the joint-kernel region.
    pub slacks: [f64; 3],
    pub feasible: bool,
    /// |average trace cost - induced-joint expected cost|.
    pub cost_identity_residual: f64,
    /// Largest gap between the induced source marginal and the prior.
    pub u_marginal_max_dev: f64,
}

/// Build the induced joint of `traces` and audit it against the rates the
/// codebook was drawn for.
pub fn converse_check(
    instance: &ProblemInstance,
    cb: &Codebook,
    traces: &[BlockTrace],
) -> Result<ConverseReport> {
    if traces.is_empty() {
        return Err(Error::InvalidArgument(
            "converse audit needs at least one trace".into(),
        ));
    }
    let n = cb.n();
    let (k0, k1, k2) = cb.message_counts();
    let nu = instance.n_u();
    let (nv1, nv2) = (instance.n_v1(), instance.n_v2());
    let cells = (nu as u128)
        * (k0 as u128 * n as u128)
        * (k1 as u128)
        * (k2 as u128)
        * (nv1 as u128)
        * (nv2 as u128);
    if cells > INDUCED_JOINT_CELL_BUDGET as u128 {
        return Err(Error::BudgetExceeded {
            required: format!("{cells} induced joint cells"),
            budget: format!("{INDUCED_JOINT_CELL_BUDGET} induced joint cells"),
        });
    }

    let mut z = 0.0;
    for tr in traces {
        if tr.u_seq.len() != n || tr.v1_seq.len() != n || tr.v2_seq.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "trace block length {} does not match codebook blocklength {n}",
                tr.u_seq.len()
            )));
        }
        if tr.m0 == 0 || tr.m0 as usize > k0 || tr.m1 as usize > k1 || tr.m2 as usize > k2 {
            return Err(Error::InvalidArgument(format!(
                "trace messages ({}, {}, {}) outside codebook ranges ({k0}, {k1}, {k2})",
                tr.m0, tr.m1, tr.m2
            )));
        }
        if !(tr.weight.is_finite() && tr.weight >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "trace weight {} is not a finite nonnegative number",
                tr.weight
            )));
        }
        z += tr.weight;
    }
    if z <= 0.0 {
        return Err(Error::NoConditioningMass(
            "traces carry no probability mass".into(),
        ));
    }

    let axes = vec![
        instance.source_alphabet().clone(),
        Alphabet::numeric(k0 * n),
        Alphabet::numeric(k1),
        Alphabet::numeric(k2),
        Alphabet::numeric(nv1),
        Alphabet::numeric(nv2),
    ];
    let strides = [
        (k0 * n) * k1 * k2 * nv1 * nv2,
        k1 * k2 * nv1 * nv2,
        k2 * nv1 * nv2,
        nv1 * nv2,
        nv2,
        1,
    ];
    let mut mass = vec![0.0; nu * strides[0]];
    let mut trace_cost = 0.0;
    for tr in traces {
        let stage_w = tr.weight / (z * n as f64);
        let (i0, i1, i2) = (
            (tr.m0 - 1) as usize,
            (tr.m1 - 1) as usize,
            (tr.m2 - 1) as usize,
        );
        for t in 0..n {
            let (u, v1, v2) = (
                tr.u_seq[t] as usize,
                tr.v1_seq[t] as usize,
                tr.v2_seq[t] as usize,
            );
            let idx = u * strides[0]
                + (i0 * n + t) * strides[1]
                + i1 * strides[2]
                + i2 * strides[3]
                + v1 * strides[4]
                + v2 * strides[5];
            mass[idx] += stage_w;
            trace_cost += stage_w * instance.cost_e.get(u, v1, v2);
        }
    }
    let induced = JointDistribution::new(axes, mass)?;

    let rates = cb.rates();
    let slacks = [
        rates.r0 - induced.mi_between(&[0], &[1])?,
        rates.r0 + rates.r1 - induced.mi_between(&[0], &[1, 2])?,
        rates.r0 + rates.r2 - induced.mi_between(&[0], &[1, 3])?,
    ];
    let feasible = slacks.iter().all(|&s| s >= -RATE_FEAS_TOL);

    let mut joint_cost = 0.0;
    let m = induced.mass();
    for (flat, &p) in m.iter().enumerate() {
        if p > 0.0 {
            let u = flat / strides[0];
            let v1 = (flat / nv2) % nv1;
            let v2 = flat % nv2;
            joint_cost += p * instance.cost_e.get(u, v1, v2);
        }
    }
    let cost_identity_residual = (trace_cost - joint_cost).abs();

    let u_marginal = induced.marginalize(&[0])?;
    let u_marginal_max_dev = u_marginal
        .mass()
        .iter()
        .zip(instance.source.mass())
        .map(|(&a, &b)| (a - b).abs())
        .fold(0.0f64, f64::max);

    Ok(ConverseReport {
        induced_joint: induced,
        slacks,
        feasible,
        cost_identity_residual,
        u_marginal_max_dev,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{build_single_letter_game, DecoderStrategy};
    use crate::model::{InformationPolicy, InstanceFile, Policy, PolicyCardinalities};
    use crate::simulator::codebook::{exhaustive_traces, generate_codebook, sample_traces};
    use crate::simulator::TypicalityConfig;

    fn matching_instance(rates: [f64; 3]) -> ProblemInstance {
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

    #[test]
    fn deterministic_block_audit_is_exact_and_feasible() {
        let inst = matching_instance([1.0, 1.0, 1.0]);
        let policy = Policy::Factorized(
            InformationPolicy::full_revelation(inst.source_alphabet(), PolicyCardinalities::new(2, 1, 1).unwrap()).unwrap(),
        );
        let config = TypicalityConfig::new(2.0, 0.1).unwrap();
        let cb = generate_codebook(&inst, &policy, &config, 2, 6).unwrap();
        let game = build_single_letter_game(&inst, &policy).unwrap();
        let strategies = DecoderStrategy::pure(&game, &[0, 1], &[0, 1]).unwrap();
        let traces = exhaustive_traces(&cb, &inst, &strategies, &config, 0).unwrap();

        let rep = converse_check(&inst, &cb, &traces).unwrap();
        assert!(rep.cost_identity_residual <= 1e-12);
        assert!(rep.u_marginal_max_dev <= 1e-12);
        assert!(rep.feasible, "slacks {:?}", rep.slacks);
        let total: f64 = rep.induced_joint.mass().iter().sum();
        assert!((total - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn oversized_induced_joints_are_refused() {
        let inst = matching_instance([1.1, 1.0, 1.0]);
        let policy = Policy::Factorized(
            InformationPolicy::full_revelation(inst.source_alphabet(), PolicyCardinalities::new(2, 1, 1).unwrap()).unwrap(),
        );
        let config = TypicalityConfig::new(2.0, 0.1).unwrap();
        let cb = generate_codebook(&inst, &policy, &config, 8, 1).unwrap();
        let game = build_single_letter_game(&inst, &policy).unwrap();
        let strategies = DecoderStrategy::pure(&game, &[0, 1], &[0, 1]).unwrap();
        let traces = sample_traces(&cb, &inst, &strategies, &config, 4, 3).unwrap();
        let err = converse_check(&inst, &cb, &traces).unwrap_err();
        assert!(matches!(err, Error::BudgetExceeded { .. }));
    }

    #[test]
    fn empty_trace_lists_are_rejected() {
        let inst = matching_instance([1.0, 1.0, 1.0]);
        let policy = Policy::Factorized(
            InformationPolicy::full_revelation(inst.source_alphabet(), PolicyCardinalities::new(2, 1, 1).unwrap()).unwrap(),
        );
        let config = TypicalityConfig::new(2.0, 0.1).unwrap();
        let cb = generate_codebook(&inst, &policy, &config, 2, 6).unwrap();
        let err = converse_check(&inst, &cb, &[]).unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(_)));
    }
}
