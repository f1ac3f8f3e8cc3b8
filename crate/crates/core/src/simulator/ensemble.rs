//! Codebook-averaged block estimation for blocklengths where explicit
//! codebooks cannot be stored.
//!
//! Restricted to binary sources with signal alphabets of size at most two.
//! Each trial draws a source type, computes the exact probability that a
//! typicality search fails for that type, and realizes the failure events.
//! Conditional on success the realized joint type of the block is drawn from
//! its exact conditional law, so error probabilities are averaged in their
//! analytic form rather than as raw indicator frequencies.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::beliefs::BeliefReport;
use super::typecalc::{
    ln_message_count, pair_mass, prob_no_hit, quad_mass, sample_binomial, sample_hypergeometric,
    sample_pair, sample_quad, Cell, DevDist, LnFact,
};
use super::{kl_bits, ErrorReport, TypicalityConfig};
use crate::equilibria::{equilibrium_pool, worst_equilibrium_cost, PoolConfig};
use crate::error::{Error, Result};
use crate::game::SingleLetterGame;
use crate::model::{build_joint, Policy, ProblemInstance};
use crate::probcore::{Alphabet, JointDistribution};

/// Full codebook-averaged block summary.
pub struct EnsembleBlockReport {
    pub errors: ErrorReport,
    pub beliefs: BeliefReport,
    pub block_cost: f64,
}

fn check_support(instance: &ProblemInstance, policy: &Policy) -> Result<()> {
    let c = policy.cards();
    if instance.n_u() != 2 || c.w0 > 2 || c.w1 > 2 || c.w2 > 2 {
        return Err(Error::UnsupportedType(
            "codebook-averaged estimation needs a binary source and signal alphabets of size at most 2"
                .into(),
        ));
    }
    Ok(())
}

/// Precomputed single-letter quantities shared by every trial.
struct Context {
    n: usize,
    cap: f64,
    p1: f64,
    c0: usize,
    c1: usize,
    c2: usize,
    qw: f64,
    split1: [f64; 2],
    split2: [f64; 2],
    ln_k0: f64,
    ln_k1: f64,
    ln_k2: f64,
    /// Expected counts n * P(u, w0), indexed u * 2 + w0 (zero where out of range).
    tgt_pair: [f64; 4],
    /// Expected counts n * P(u, w0, w1), indexed (u * 2 + w0) * 2 + w1.
    tgt_tri1: [f64; 8],
    tgt_tri2: [f64; 8],
    /// Posterior P(u | w0, w1, w2) per signal triple, None off support.
    post_state: Vec<Option<[f64; 2]>>,
    /// P(w2 | w0, w1) per pair, None off support.
    cond_tkl1: Vec<Option<Vec<f64>>>,
    /// P(w1 | w0, w2) per pair, None off support.
    cond_tkl2: Vec<Option<Vec<f64>>>,
    lf: LnFact,
}

impl Context {
    fn build(
        instance: &ProblemInstance,
        policy: &Policy,
        config: &TypicalityConfig,
        n: usize,
    ) -> Result<Context> {
        check_support(instance, policy)?;
        let joint = build_joint(instance, policy)?;
        let c = policy.cards();
        let (c0, c1, c2) = (c.w0, c.w1, c.w2);
        let nf = n as f64;

        let m_w0 = joint.marginalize(&[1])?;
        let qw = if c0 == 2 { m_w0.mass()[1] } else { 0.0 };
        let pair01 = joint.marginalize(&[1, 2])?;
        let pair02 = joint.marginalize(&[1, 3])?;
        let split = |pair: &JointDistribution, cw: usize, w0: usize| -> f64 {
            if cw == 2 && w0 < c0 && m_w0.mass()[w0] > 0.0 {
                pair.mass()[w0 * cw + 1] / m_w0.mass()[w0]
            } else {
                0.0
            }
        };
        let split1 = [split(&pair01, c1, 0), split(&pair01, c1, 1)];
        let split2 = [split(&pair02, c2, 0), split(&pair02, c2, 1)];

        let m_uw0 = joint.marginalize(&[0, 1])?;
        let m_uw0w1 = joint.marginalize(&[0, 1, 2])?;
        let m_uw0w2 = joint.marginalize(&[0, 1, 3])?;
        let mut tgt_pair = [0.0; 4];
        for u in 0..2 {
            for w0 in 0..c0 {
                tgt_pair[u * 2 + w0] = nf * m_uw0.mass()[u * c0 + w0];
            }
        }
        let mut tgt_tri1 = [0.0; 8];
        let mut tgt_tri2 = [0.0; 8];
        for u in 0..2 {
            for w0 in 0..c0 {
                for w1 in 0..c1 {
                    tgt_tri1[(u * 2 + w0) * 2 + w1] = nf * m_uw0w1.mass()[(u * c0 + w0) * c1 + w1];
                }
                for w2 in 0..c2 {
                    tgt_tri2[(u * 2 + w0) * 2 + w2] = nf * m_uw0w2.mass()[(u * c0 + w0) * c2 + w2];
                }
            }
        }

        let m_trip = joint.marginalize(&[1, 2, 3])?;
        let mut post_state = Vec::with_capacity(c0 * c1 * c2);
        for trip in 0..c0 * c1 * c2 {
            let z = m_trip.mass()[trip];
            if z > 0.0 {
                let w2 = trip % c2;
                let w1 = (trip / c2) % c1;
                let w0 = trip / (c1 * c2);
                post_state.push(Some([
                    joint.prob(&[0, w0, w1, w2]) / z,
                    joint.prob(&[1, w0, w1, w2]) / z,
                ]));
            } else {
                post_state.push(None);
            }
        }

        let mut cond_tkl1: Vec<Option<Vec<f64>>> = Vec::with_capacity(c0 * c1);
        for p in 0..c0 * c1 {
            let z = pair01.mass()[p];
            cond_tkl1.push(if z > 0.0 {
                Some((0..c2).map(|w2| m_trip.mass()[p * c2 + w2] / z).collect())
            } else {
                None
            });
        }
        let mut cond_tkl2: Vec<Option<Vec<f64>>> = Vec::with_capacity(c0 * c2);
        for w0 in 0..c0 {
            for w2 in 0..c2 {
                let z = pair02.mass()[w0 * c2 + w2];
                cond_tkl2.push(if z > 0.0 {
                    Some(
                        (0..c1)
                            .map(|w1| m_trip.mass()[(w0 * c1 + w1) * c2 + w2] / z)
                            .collect(),
                    )
                } else {
                    None
                });
            }
        }

        Ok(Context {
            n,
            cap: nf * config.delta(),
            p1: instance.source.mass()[1],
            c0,
            c1,
            c2,
            qw,
            split1,
            split2,
            ln_k0: ln_message_count(n, instance.rates.r0),
            ln_k1: ln_message_count(n, instance.rates.r1),
            ln_k2: ln_message_count(n, instance.rates.r2),
            tgt_pair,
            tgt_tri1,
            tgt_tri2,
            post_state,
            cond_tkl1,
            cond_tkl2,
            lf: LnFact::new(n),
        })
    }

    /// Deviation distributions for the (u=0, u=1) common-word cells of a
    /// source block with `k` ones.
    fn pair_dists(&self, k: usize) -> [DevDist; 2] {
        let n0 = self.n - k;
        [
            DevDist::from_cell(
                &Cell::new(n0, self.qw, self.tgt_pair[1], self.tgt_pair[0], &self.lf),
                self.cap,
            ),
            DevDist::from_cell(
                &Cell::new(k, self.qw, self.tgt_pair[3], self.tgt_pair[2], &self.lf),
                self.cap,
            ),
        ]
    }

    /// Deviation distributions for the four (u, w0) private-word cells given
    /// realized pair counts, against triple targets `tgt`.
    fn tri_dists(&self, pair_counts: &[usize; 4], split: &[f64; 2], tgt: &[f64; 8]) -> [DevDist; 4] {
        let mk = |cell: usize| {
            let w0 = cell % 2;
            DevDist::from_cell(
                &Cell::new(
                    pair_counts[cell],
                    split[w0],
                    tgt[cell * 2 + 1],
                    tgt[cell * 2],
                    &self.lf,
                ),
                self.cap,
            )
        };
        [mk(0), mk(1), mk(2), mk(3)]
    }
}

struct TrialOut {
    pf0: f64,
    /// Conditional failure probabilities, present when the common search
    /// succeeded in this realization.
    pf12: Option<(f64, f64)>,
    success: bool,
    /// Per-trial belief divergences, present for fully successful trials in
    /// full mode.
    kls: Option<(f64, f64, f64)>,
    /// Realized joint type of the block over (u, w0, w1, w2), full mode only.
    quad: Option<[u64; 16]>,
}

fn unconditional_split(c: usize, q: f64, rng: &mut ChaCha8Rng) -> usize {
    sample_binomial(c, q, rng)
}

fn run_trial(ctx: &Context, seed: u64, trial: u64, full: bool) -> TrialOut {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial + 1);

    let k = sample_binomial(ctx.n, ctx.p1, &mut rng);
    let n0 = ctx.n - k;
    let d = ctx.pair_dists(k);
    let q0 = pair_mass(&d[0], &d[1], ctx.cap);
    let pf0 = prob_no_hit(q0, ctx.ln_k0);
    let f0 = rng.gen::<f64>() < pf0;

    let mut out = TrialOut {
        pf0,
        pf12: None,
        success: false,
        kls: None,
        quad: None,
    };

    let pair_counts: [usize; 4];
    let mut conditional_words = false;
    if f0 {
        let x0 = unconditional_split(n0, ctx.qw, &mut rng);
        let x1 = unconditional_split(k, ctx.qw, &mut rng);
        pair_counts = [n0 - x0, x0, k - x1, x1];
    } else {
        let (x0, x1) = sample_pair(&d[0], &d[1], ctx.cap, &mut rng)
            .expect("a realized common-word success implies positive typical mass");
        pair_counts = [n0 - x0 as usize, x0 as usize, k - x1 as usize, x1 as usize];

        let d1 = ctx.tri_dists(&pair_counts, &ctx.split1, &ctx.tgt_tri1);
        let s23_1 = DevDist::convolve(&d1[2], &d1[3], ctx.cap);
        let q1 = quad_mass(&d1[0], &d1[1], &s23_1, ctx.cap);
        let pf1 = prob_no_hit(q1, ctx.ln_k1);

        let d2 = ctx.tri_dists(&pair_counts, &ctx.split2, &ctx.tgt_tri2);
        let s23_2 = DevDist::convolve(&d2[2], &d2[3], ctx.cap);
        let q2 = quad_mass(&d2[0], &d2[1], &s23_2, ctx.cap);
        let pf2 = prob_no_hit(q2, ctx.ln_k2);

        out.pf12 = Some((pf1, pf2));
        let f1 = rng.gen::<f64>() < pf1;
        let f2 = rng.gen::<f64>() < pf2;
        out.success = !f1 && !f2;
        conditional_words = out.success;

        if full && out.success {
            let ones1 = sample_quad(&d1, &s23_1, ctx.cap, &mut rng)
                .expect("realized private success implies positive typical mass");
            let ones2 = sample_quad(&d2, &s23_2, ctx.cap, &mut rng)
                .expect("realized private success implies positive typical mass");
            out.quad = Some(cross_split(ctx, &pair_counts, ones1.map(|x| x as usize), ones2.map(|x| x as usize), &mut rng));
        }
    }

    if full && !conditional_words {
        let ones = |counts: &[usize; 4], split: &[f64; 2], rng: &mut ChaCha8Rng| {
            [
                unconditional_split(counts[0], split[0], rng),
                unconditional_split(counts[1], split[1], rng),
                unconditional_split(counts[2], split[0], rng),
                unconditional_split(counts[3], split[1], rng),
            ]
        };
        let ones1 = ones(&pair_counts, &ctx.split1, &mut rng);
        let ones2 = ones(&pair_counts, &ctx.split2, &mut rng);
        out.quad = Some(cross_split(ctx, &pair_counts, ones1, ones2, &mut rng));
    }

    if full && out.success {
        out.kls = Some(trial_divergences(ctx, out.quad.as_ref().unwrap()));
    }
    out
}

/// Combine per-cell one-counts of both private words into the joint type
/// over (u, w0, w1, w2); the overlap within a cell is hypergeometric.
fn cross_split(
    ctx: &Context,
    pair_counts: &[usize; 4],
    ones1: [usize; 4],
    ones2: [usize; 4],
    rng: &mut ChaCha8Rng,
) -> [u64; 16] {
    let mut quad = [0u64; 16];
    for cell in 0..4 {
        let c = pair_counts[cell];
        let (x1, x2) = (ones1[cell], ones2[cell]);
        let j = sample_hypergeometric(&ctx.lf, c, x1, x2, rng);
        let base = cell * 4;
        quad[base + 3] = j as u64;
        quad[base + 2] = (x1 - j) as u64;
        quad[base + 1] = (x2 - j) as u64;
        quad[base] = (c - x1 - x2 + j) as u64;
    }
    quad
}

/// Per-trial belief divergences from the realized joint type: buckets stages
/// by signal values, compares bucket frequencies to the single-letter
/// conditionals, applies a first-order bias correction, and clamps at zero.
fn trial_divergences(ctx: &Context, quad: &[u64; 16]) -> (f64, f64, f64) {
    let ln2 = std::f64::consts::LN_2;
    let idx = |u: usize, w0: usize, w1: usize, w2: usize| ((u * 2 + w0) * 2 + w1) * 2 + w2;

    let mut state = 0.0;
    let mut state_mass = 0.0;
    for w0 in 0..ctx.c0 {
        for w1 in 0..ctx.c1 {
            for w2 in 0..ctx.c2 {
                let trip = (w0 * ctx.c1 + w1) * ctx.c2 + w2;
                let Some(target) = ctx.post_state[trip].as_ref() else {
                    continue;
                };
                let n_u = [quad[idx(0, w0, w1, w2)], quad[idx(1, w0, w1, w2)]];
                let total = (n_u[0] + n_u[1]) as f64;
                if total == 0.0 {
                    continue;
                }
                let hat = [n_u[0] as f64 / total, n_u[1] as f64 / total];
                let kl = kl_bits(&hat, target);
                let corrected = (kl - 1.0 / (2.0 * total * ln2)).max(0.0);
                state += total * corrected;
                state_mass += total;
            }
        }
    }
    let state = if state_mass > 0.0 { state / state_mass } else { 0.0 };

    let tkl = |cond: &[Option<Vec<f64>>], swap: bool, cb: usize| -> f64 {
        let mut acc = 0.0;
        let mut mass = 0.0;
        for w0 in 0..ctx.c0 {
            let ca = if swap { ctx.c2 } else { ctx.c1 };
            for a in 0..ca {
                let Some(target) = cond[w0 * ca + a].as_ref() else {
                    continue;
                };
                let mut counts = vec![0u64; cb];
                for b in 0..cb {
                    for u in 0..2 {
                        let (w1, w2) = if swap { (b, a) } else { (a, b) };
                        counts[b] += quad[idx(u, w0, w1, w2)];
                    }
                }
                let total: u64 = counts.iter().sum();
                if total == 0 {
                    continue;
                }
                let hat: Vec<f64> = counts.iter().map(|&c| c as f64 / total as f64).collect();
                let kl = kl_bits(&hat, target);
                let corrected =
                    (kl - (cb as f64 - 1.0) / (2.0 * total as f64 * ln2)).max(0.0);
                acc += total as f64 * corrected;
                mass += total as f64;
            }
        }
        if mass > 0.0 {
            acc / mass
        } else {
            0.0
        }
    };
    let t1 = tkl(&ctx.cond_tkl1, false, ctx.c2);
    let t2 = tkl(&ctx.cond_tkl2, true, ctx.c1);
    (state, t1, t2)
}

fn mean_and_half_width(values: impl Iterator<Item = f64> + Clone, count: u64) -> (f64, f64) {
    if count == 0 {
        return (f64::NAN, f64::NAN);
    }
    let m = count as f64;
    let mean = values.clone().sum::<f64>() / m;
    if count == 1 {
        return (mean, f64::NAN);
    }
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1.0);
    (mean, 1.96 * (var / m).sqrt())
}

fn run(
    instance: &ProblemInstance,
    policy: &Policy,
    config: &TypicalityConfig,
    n: usize,
    trials: u64,
    seed: u64,
    full: bool,
) -> Result<(Vec<TrialOut>, Context)> {
    if n == 0 || trials == 0 {
        return Err(Error::InvalidArgument(
            "blocklength and trial count must be positive".into(),
        ));
    }
    let ctx = Context::build(instance, policy, config, n)?;
    let outs: Vec<TrialOut> = (0..trials)
        .into_par_iter()
        .map(|t| run_trial(&ctx, seed, t, full))
        .collect();
    Ok((outs, ctx))
}

fn error_report(outs: &[TrialOut], trials: u64) -> ErrorReport {
    let (p_f0, hw0) = mean_and_half_width(outs.iter().map(|o| o.pf0), trials);
    let cond: Vec<(f64, f64)> = outs.iter().filter_map(|o| o.pf12).collect();
    let m = cond.len() as u64;
    let (p_f1, hw1) = mean_and_half_width(cond.iter().map(|c| c.0), m);
    let (p_f2, hw2) = mean_and_half_width(cond.iter().map(|c| c.1), m);
    ErrorReport {
        p_f0,
        p_f0_half_width: hw0,
        p_f1_given_not_f0: p_f1,
        p_f1_half_width: hw1,
        p_f2_given_not_f0: p_f2,
        p_f2_half_width: hw2,
        trials,
        conditional_trials: m,
        mode: "ensemble".into(),
    }
}

/// Codebook-averaged error events; exact per-type failure probabilities are
/// averaged over Monte-Carlo source types.
pub fn ensemble_error_events(
    instance: &ProblemInstance,
    policy: &Policy,
    config: &TypicalityConfig,
    n: usize,
    trials: u64,
    seed: u64,
) -> Result<ErrorReport> {
    let (outs, _) = run(instance, policy, config, n, trials, seed, false)?;
    Ok(error_report(&outs, trials))
}

/// Codebook-averaged error events, belief divergences, and the block decoding
/// game value at one blocklength.
pub fn ensemble_block_report(
    instance: &ProblemInstance,
    policy: &Policy,
    config: &TypicalityConfig,
    n: usize,
    trials: u64,
    seed: u64,
    pool: &PoolConfig,
) -> Result<EnsembleBlockReport> {
    let (outs, ctx) = run(instance, policy, config, n, trials, seed, true)?;
    let errors = error_report(&outs, trials);

    let successes: Vec<&TrialOut> = outs.iter().filter(|o| o.success).collect();
    if successes.is_empty() {
        return Err(Error::NoConditioningMass(
            "no fully successful trials to condition beliefs on".into(),
        ));
    }
    let m = successes.len() as f64;
    let fold = |pick: fn(&(f64, f64, f64)) -> f64| -> f64 {
        successes
            .iter()
            .map(|o| pick(o.kls.as_ref().unwrap()))
            .sum::<f64>()
            / m
    };
    let beliefs = BeliefReport {
        avg_state_kl: fold(|k| k.0),
        avg_type_kl_1: fold(|k| k.1),
        avg_type_kl_2: fold(|k| k.2),
        successful_traces: successes.len() as u64,
        total_traces: trials,
        mode: "ensemble".into(),
    };

    let mut counts = [0u64; 16];
    for o in &outs {
        for (i, &c) in o.quad.as_ref().unwrap().iter().enumerate() {
            counts[i] += c;
        }
    }
    let total = (ctx.n as u64 * trials) as f64;
    let mut mass = vec![0.0; 2 * ctx.c0 * ctx.c1 * ctx.c2];
    for u in 0..2 {
        for w0 in 0..ctx.c0 {
            for w1 in 0..ctx.c1 {
                for w2 in 0..ctx.c2 {
                    let from = ((u * 2 + w0) * 2 + w1) * 2 + w2;
                    let to = ((u * ctx.c0 + w0) * ctx.c1 + w1) * ctx.c2 + w2;
                    mass[to] = counts[from] as f64 / total;
                }
            }
        }
    }
    let axes = vec![
        instance.source_alphabet().clone(),
        Alphabet::numeric(ctx.c0),
        Alphabet::numeric(ctx.c1),
        Alphabet::numeric(ctx.c2),
    ];
    let stage_joint = JointDistribution::new(axes, mass)?;
    let game = SingleLetterGame::from_joint(&stage_joint, instance)?;
    let (set, _caveats) = equilibrium_pool(&game, pool);
    let (block_cost, _) = worst_equilibrium_cost(&game, &set)
        .map_err(|e| Error::NoEquilibrium(format!("aggregated block game: {e}")))?;

    Ok(EnsembleBlockReport {
        errors,
        beliefs,
        block_cost,
    })
}
