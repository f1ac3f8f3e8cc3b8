//! Per-stage decoding games induced by a realized codebook.
//!
//! Each block position defines a one-shot game: the empirical joint of
//! (source symbol, realized codeword symbols) at that position, taken over
//! traces including failed ones, is handed to the single-letter solver and
//! scored at its encoder-worst equilibrium.

use super::codebook::Codebook;
use super::{exhaustive_encoded, sampled_encoded, TypicalityConfig};
use crate::equilibria::{equilibrium_pool, worst_equilibrium_cost, PoolConfig};
use crate::error::{Error, Result};
use crate::game::SingleLetterGame;
use crate::model::ProblemInstance;
use crate::probcore::{Alphabet, JointDistribution};

/// Source-sequence count up to which blocks are enumerated exhaustively.
pub const STAGE_EXHAUSTIVE_BUDGET: u64 = 4096;

/// Encoder-worst equilibrium cost of every stage game plus their average.
#[derive(Debug, Clone, serde::Serialize)]
pub struct StageReport {
    pub block_cost: f64,
    pub stage_costs: Vec<f64>,
    pub traces_used: u64,
    pub mode: String,
}

/// Build and solve the per-stage games of one codebook realization.
///
/// Small blocks are enumerated exhaustively with exact sequence weights;
/// larger ones use `trials` Monte-Carlo blocks. A solver failure at stage `t`
/// propagates tagged with that stage.
pub fn stagewise_block_game(
    cb: &Codebook,
    instance: &ProblemInstance,
    config: &TypicalityConfig,
    trials: u64,
    seed: u64,
    pool: &PoolConfig,
) -> Result<StageReport> {
    let nu = instance.n_u();
    let n = cb.n();
    let exhaustive = (nu as u128)
        .checked_pow(n as u32)
        .is_some_and(|total| total <= STAGE_EXHAUSTIVE_BUDGET as u128);
    let traces = if exhaustive {
        exhaustive_encoded(cb, instance, config)?
    } else {
        sampled_encoded(cb, instance, config, trials, seed)?
    };
    let z: f64 = traces.iter().map(|t| t.2).sum();
    if z <= 0.0 {
        return Err(Error::NoConditioningMass(
            "block traces carry no probability mass".into(),
        ));
    }

    let c = cb.cards();
    let axes = vec![
        instance.source_alphabet().clone(),
        Alphabet::numeric(c.w0),
        Alphabet::numeric(c.w1),
        Alphabet::numeric(c.w2),
    ];
    let mut stage_costs = Vec::with_capacity(n);
    for t in 0..n {
        let mut mass = vec![0.0; nu * c.w0 * c.w1 * c.w2];
        for (u_seq, enc, w) in &traces {
            let i0 = (enc.m0 - 1) as usize;
            let w0 = cb.w0_symbol(i0, t) as usize;
            let w1 = cb.w1_symbol(i0, (enc.m1 - 1) as usize, t) as usize;
            let w2 = cb.w2_symbol(i0, (enc.m2 - 1) as usize, t) as usize;
            let idx = ((u_seq[t] as usize * c.w0 + w0) * c.w1 + w1) * c.w2 + w2;
            mass[idx] += w / z;
        }
        let joint = JointDistribution::new(axes.clone(), mass)?;
        let game = SingleLetterGame::from_joint(&joint, instance)?;
        let (set, _) = equilibrium_pool(&game, pool);
        let (cost, _) = worst_equilibrium_cost(&game, &set)
            .map_err(|e| Error::NoEquilibrium(format!("stage {t}: {e}")))?;
        stage_costs.push(cost);
    }
    let block_cost = stage_costs.iter().sum::<f64>() / n as f64;
    Ok(StageReport {
        block_cost,
        stage_costs,
        traces_used: traces.len() as u64,
        mode: if exhaustive { "exhaustive" } else { "resampled" }.into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::build_single_letter_game;
    use crate::model::{InformationPolicy, InstanceFile, Policy, PolicyCardinalities};
    use crate::simulator::codebook::generate_codebook;

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
    fn single_stage_block_reproduces_the_one_shot_game_bit_for_bit() {
        let inst = matching_instance([1.1, 0.1, 0.1]);
        let policy = Policy::Factorized(
            InformationPolicy::full_revelation(inst.source_alphabet(), PolicyCardinalities::new(2, 1, 1).unwrap()).unwrap(),
        );
        let config = TypicalityConfig::new(1.0, 0.1).unwrap();
        let pool = PoolConfig::default();

        let seed = (0..64u64)
            .find(|&s| {
                let cb = generate_codebook(&inst, &policy, &config, 1, s).unwrap();
                cb.w0_symbol(0, 0) != cb.w0_symbol(1, 0)
            })
            .expect("some seed covers both common words");
        let cb = generate_codebook(&inst, &policy, &config, 1, seed).unwrap();

        let rep = stagewise_block_game(&cb, &inst, &config, 0, 0, &pool).unwrap();
        assert_eq!(rep.mode, "exhaustive");
        assert_eq!(rep.stage_costs.len(), 1);

        let game = build_single_letter_game(&inst, &policy).unwrap();
        let (set, _) = equilibrium_pool(&game, &pool);
        let (reference, _) = worst_equilibrium_cost(&game, &set).unwrap();
        assert_eq!(rep.block_cost.to_bits(), reference.to_bits());
    }

    #[test]
    fn uninformative_block_matches_the_uninformative_one_shot_value() {
        let inst = matching_instance([0.0, 0.0, 0.0]);
        let policy =
            Policy::Factorized(InformationPolicy::uninformative(inst.source_alphabet(), PolicyCardinalities::new(1, 1, 1).unwrap()));
        let config = TypicalityConfig::new(2.0, 0.1).unwrap();
        let pool = PoolConfig::default();
        let cb = generate_codebook(&inst, &policy, &config, 4, 2).unwrap();
        let rep = stagewise_block_game(&cb, &inst, &config, 0, 0, &pool).unwrap();
        assert_eq!(rep.mode, "exhaustive");
        assert_eq!(rep.traces_used, 16);
        assert!((rep.block_cost - 1.0).abs() < 1e-9);
        for c in &rep.stage_costs {
            assert!((c - 1.0).abs() < 1e-9);
        }
    }
}
