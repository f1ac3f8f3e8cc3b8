//! Equilibrium computation for the induced decoder game.
//!
//! The encoder is scored against the worst equilibrium, so the point of
//! this module is coverage: exhaustive pure-profile enumeration when the
//! type space is small enough, with iterated best response and fictitious
//! play as fallbacks that find (approximate) equilibria but cannot prove
//! the set complete.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::game::{
    build_single_letter_game, DecoderStrategy, PlayerId, SingleLetterGame, TIE_TOL,
};
use crate::model::{JointPolicy, Policy, ProblemInstance};

/// Hard cap on the number of members an enumeration may return.
pub const MAX_MEMBERS: usize = 2_000_000;

/// One equilibrium candidate. Pure members store an action per (w0, wi)
/// grid cell, row-major with w0 most significant; unsupported cells hold 0.
#[derive(Debug, Clone)]
pub enum EqMember {
    Pure { actions_1: Vec<u8>, actions_2: Vec<u8> },
    Mixed(DecoderStrategy),
}

impl EqMember {
    /// Probability that decoder 1 of type (w0, w1) plays v1.
    pub fn prob_1(&self, game: &SingleLetterGame, w0: usize, w1: usize, v1: usize) -> f64 {
        match self {
            EqMember::Pure { actions_1, .. } => {
                let a = actions_1[w0 * game.cards().w1 + w1] as usize;
                if a == v1 { 1.0 } else { 0.0 }
            }
            EqMember::Mixed(s) => s.prob_1(w0, w1, v1),
        }
    }

    /// Probability that decoder 2 of type (w0, w2) plays v2.
    pub fn prob_2(&self, game: &SingleLetterGame, w0: usize, w2: usize, v2: usize) -> f64 {
        match self {
            EqMember::Pure { actions_2, .. } => {
                let a = actions_2[w0 * game.cards().w2 + w2] as usize;
                if a == v2 { 1.0 } else { 0.0 }
            }
            EqMember::Mixed(s) => s.prob_2(w0, w2, v2),
        }
    }

    pub fn to_strategy(&self, game: &SingleLetterGame) -> Result<DecoderStrategy> {
        match self {
            EqMember::Pure { actions_1, actions_2 } => {
                DecoderStrategy::pure(game, actions_1, actions_2)
            }
            EqMember::Mixed(s) => Ok(s.clone()),
        }
    }
}

/// Serializable form of an equilibrium member, used in result artifacts.
#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WitnessDoc {
    Pure {
        actions_1: Vec<u8>,
        actions_2: Vec<u8>,
    },
    Mixed {
        rows_1: Vec<Vec<f64>>,
        rows_2: Vec<Vec<f64>>,
    },
}

impl WitnessDoc {
    pub fn from_member(member: &EqMember) -> Self {
        match member {
            EqMember::Pure { actions_1, actions_2 } => WitnessDoc::Pure {
                actions_1: actions_1.clone(),
                actions_2: actions_2.clone(),
            },
            EqMember::Mixed(s) => WitnessDoc::Mixed {
                rows_1: s.sigma_1().rows().iter().map(|r| r.mass().to_vec()).collect(),
                rows_2: s.sigma_2().rows().iter().map(|r| r.mass().to_vec()).collect(),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EqMethod {
    Enumeration,
    IteratedBestResponse,
    FictitiousPlay,
    /// Members gathered from more than one fallback method.
    Hybrid,
}

/// A set of equilibrium candidates plus how trustworthy it is. For
/// enumeration the set is exhaustive over pure profiles; for learning
/// methods `epsilon` bounds the best deviation gain of included members.
#[derive(Debug, Clone)]
pub struct EquilibriumSet {
    pub members: Vec<EqMember>,
    pub method: EqMethod,
    pub converged: bool,
    pub epsilon: f64,
}

fn psi_pure_1(game: &SingleLetterGame, w0: usize, w1: usize, a1: usize, grid_2: &[u8]) -> f64 {
    let c2 = game.cards().w2;
    let belief = game.belief_row_1(w0, w1).expect("supported type");
    let mut acc = 0.0;
    for (w2, &b) in belief.iter().enumerate() {
        if b > 0.0 {
            acc += b * game.cost_star(1, w0, w1, w2, a1, grid_2[w0 * c2 + w2] as usize);
        }
    }
    acc
}

fn psi_pure_2(game: &SingleLetterGame, w0: usize, w2: usize, a2: usize, grid_1: &[u8]) -> f64 {
    let c1 = game.cards().w1;
    let belief = game.belief_row_2(w0, w2).expect("supported type");
    let mut acc = 0.0;
    for (w1, &b) in belief.iter().enumerate() {
        if b > 0.0 {
            acc += b * game.cost_star(2, w0, w1, w2, grid_1[w0 * c1 + w1] as usize, a2);
        }
    }
    acc
}

fn next_assignment(digits: &mut [u8], base: usize) -> bool {
    for d in digits.iter_mut() {
        *d += 1;
        if (*d as usize) < base {
            return true;
        }
        *d = 0;
    }
    false
}

/// Exhaustively enumerate pure-strategy equilibria of the decoder game.
///
/// Scans every deterministic strategy of decoder 2 over its supported
/// types, derives decoder 1's tied best responses, and keeps the profiles
/// where decoder 2's strategy is itself a best response. Refuses with a
/// budget error when the profile count exceeds `budget`.
pub fn enumerate_pure_bne(game: &SingleLetterGame, budget: f64) -> Result<EquilibriumSet> {
    let types_1 = game.types_1();
    let types_2 = game.types_2();
    let n_v1 = game.n_v1();
    let n_v2 = game.n_v2();
    let ln_profiles =
        types_1.len() as f64 * (n_v1 as f64).ln() + types_2.len() as f64 * (n_v2 as f64).ln();
    if !(budget > 0.0) || ln_profiles > budget.ln() {
        return Err(Error::BudgetExceeded {
            required: format!("{:.3e} pure profiles", ln_profiles.exp()),
            budget: format!("{budget:.3e}"),
        });
    }

    let c1 = game.cards().w1;
    let c2 = game.cards().w2;
    let mut members = Vec::new();
    let mut digits_2 = vec![0u8; types_2.len()];
    let mut grid_2 = vec![0u8; game.cards().w0 * c2];
    loop {
        for (i, &(w0, w2)) in types_2.iter().enumerate() {
            grid_2[w0 * c2 + w2] = digits_2[i];
        }

        let tie_sets: Vec<Vec<u8>> = types_1
            .iter()
            .map(|&(w0, w1)| {
                let costs: Vec<f64> = (0..n_v1)
                    .map(|a| psi_pure_1(game, w0, w1, a, &grid_2))
                    .collect();
                let best = costs.iter().cloned().fold(f64::INFINITY, f64::min);
                (0..n_v1)
                    .filter(|&a| costs[a] <= best + TIE_TOL)
                    .map(|a| a as u8)
                    .collect()
            })
            .collect();

        let mut choice = vec![0usize; types_1.len()];
        let mut grid_1 = vec![0u8; game.cards().w0 * c1];
        'candidates: loop {
            for (i, &(w0, w1)) in types_1.iter().enumerate() {
                grid_1[w0 * c1 + w1] = tie_sets[i][choice[i]];
            }
            let mut is_eq = true;
            for (i, &(w0, w2)) in types_2.iter().enumerate() {
                let played = psi_pure_2(game, w0, w2, digits_2[i] as usize, &grid_1);
                let best = (0..n_v2)
                    .map(|a| psi_pure_2(game, w0, w2, a, &grid_1))
                    .fold(f64::INFINITY, f64::min);
                if played > best + TIE_TOL {
                    is_eq = false;
                    break;
                }
            }
            if is_eq {
                if members.len() >= MAX_MEMBERS {
                    return Err(Error::BudgetExceeded {
                        required: format!("more than {MAX_MEMBERS} equilibrium members"),
                        budget: format!("{MAX_MEMBERS} members"),
                    });
                }
                members.push(EqMember::Pure {
                    actions_1: grid_1.clone(),
                    actions_2: grid_2.clone(),
                });
            }

            for i in 0..types_1.len() {
                choice[i] += 1;
                if choice[i] < tie_sets[i].len() {
                    continue 'candidates;
                }
                choice[i] = 0;
            }
            break;
        }

        if !next_assignment(&mut digits_2, n_v2) {
            break;
        }
    }

    Ok(EquilibriumSet {
        members,
        method: EqMethod::Enumeration,
        converged: true,
        epsilon: 0.0,
    })
}

/// Worst remaining deviation gain of a strategy pair, over both players
/// and all supported types.
pub fn deviation_gain(game: &SingleLetterGame, strategies: &DecoderStrategy) -> f64 {
    let mut worst: f64 = 0.0;
    for &(w0, w1) in game.types_1() {
        let current = game
            .expected_cost_psi(PlayerId::One, w0, w1, strategies)
            .expect("supported type");
        let best = (0..game.n_v1())
            .map(|a| {
                game.psi_of_action(PlayerId::One, w0, w1, a, strategies)
                    .expect("supported type")
            })
            .fold(f64::INFINITY, f64::min);
        worst = worst.max(current - best);
    }
    for &(w0, w2) in game.types_2() {
        let current = game
            .expected_cost_psi(PlayerId::Two, w0, w2, strategies)
            .expect("supported type");
        let best = (0..game.n_v2())
            .map(|a| {
                game.psi_of_action(PlayerId::Two, w0, w2, a, strategies)
                    .expect("supported type")
            })
            .fold(f64::INFINITY, f64::min);
        worst = worst.max(current - best);
    }
    worst
}

/// Alternate exact best responses until the pure profile repeats.
///
/// Returns at most one member. A cycle or hitting `max_rounds` leaves the
/// set empty with `converged = false` and `epsilon` reporting the residual
/// deviation gain of the last profile visited.
pub fn iterated_best_response(game: &SingleLetterGame, max_rounds: usize) -> EquilibriumSet {
    let zeros_1 = vec![0u8; game.cards().w0 * game.cards().w1];
    let zeros_2 = vec![0u8; game.cards().w0 * game.cards().w2];

    let uniform = DecoderStrategy::uniform(game);
    let mut a1 = game.best_response(PlayerId::One, &uniform).actions;
    let mut a2 = {
        let s = DecoderStrategy::pure(game, &a1, &zeros_2).expect("valid grid");
        game.best_response(PlayerId::Two, &s).actions
    };

    let mut seen: HashSet<(Vec<u8>, Vec<u8>)> = HashSet::new();
    seen.insert((a1.clone(), a2.clone()));
    for _ in 0..max_rounds {
        let s2 = DecoderStrategy::pure(game, &zeros_1, &a2).expect("valid grid");
        let next_1 = game.best_response(PlayerId::One, &s2).actions;
        let s1 = DecoderStrategy::pure(game, &next_1, &zeros_2).expect("valid grid");
        let next_2 = game.best_response(PlayerId::Two, &s1).actions;

        if next_1 == a1 && next_2 == a2 {
            return EquilibriumSet {
                members: vec![EqMember::Pure { actions_1: a1, actions_2: a2 }],
                method: EqMethod::IteratedBestResponse,
                converged: true,
                epsilon: 0.0,
            };
        }
        a1 = next_1;
        a2 = next_2;
        if !seen.insert((a1.clone(), a2.clone())) {
            break;
        }
    }

    let last = DecoderStrategy::pure(game, &a1, &a2).expect("valid grid");
    EquilibriumSet {
        members: Vec::new(),
        method: EqMethod::IteratedBestResponse,
        converged: false,
        epsilon: deviation_gain(game, &last),
    }
}

/// Simultaneous fictitious play. Both players best-respond to the
/// opponent's empirical action frequencies each round; the averaged
/// profile is returned as a mixed candidate when its deviation gain is
/// within `tol`.
pub fn fictitious_play(game: &SingleLetterGame, rounds: usize, tol: f64) -> EquilibriumSet {
    let c = game.cards();
    let types_1 = game.types_1();
    let types_2 = game.types_2();
    let mut counts_1 = vec![vec![0u64; game.n_v1()]; types_1.len()];
    let mut counts_2 = vec![vec![0u64; game.n_v2()]; types_2.len()];

    let point = |n: usize| {
        let mut row = vec![0.0; n];
        row[0] = 1.0;
        row
    };
    let mixture = |game: &SingleLetterGame,
                   counts_1: &[Vec<u64>],
                   counts_2: &[Vec<u64>],
                   t: u64|
     -> DecoderStrategy {
        let mut rows_1 = vec![point(game.n_v1()); c.w0 * c.w1];
        let mut rows_2 = vec![point(game.n_v2()); c.w0 * c.w2];
        if t == 0 {
            for &(w0, w1) in types_1 {
                rows_1[w0 * c.w1 + w1] = vec![1.0 / game.n_v1() as f64; game.n_v1()];
            }
            for &(w0, w2) in types_2 {
                rows_2[w0 * c.w2 + w2] = vec![1.0 / game.n_v2() as f64; game.n_v2()];
            }
        } else {
            for (i, &(w0, w1)) in types_1.iter().enumerate() {
                rows_1[w0 * c.w1 + w1] =
                    counts_1[i].iter().map(|&k| k as f64 / t as f64).collect();
            }
            for (i, &(w0, w2)) in types_2.iter().enumerate() {
                rows_2[w0 * c.w2 + w2] =
                    counts_2[i].iter().map(|&k| k as f64 / t as f64).collect();
            }
        }
        DecoderStrategy::from_rows(game, rows_1, rows_2).expect("frequency rows are normalized")
    };

    for t in 0..rounds as u64 {
        let current = mixture(game, &counts_1, &counts_2, t);
        let br1 = game.best_response(PlayerId::One, &current);
        let br2 = game.best_response(PlayerId::Two, &current);
        for (i, &(w0, w1)) in types_1.iter().enumerate() {
            counts_1[i][br1.actions[w0 * c.w1 + w1] as usize] += 1;
        }
        for (i, &(w0, w2)) in types_2.iter().enumerate() {
            counts_2[i][br2.actions[w0 * c.w2 + w2] as usize] += 1;
        }
    }

    let averaged = mixture(game, &counts_1, &counts_2, rounds as u64);
    let epsilon = deviation_gain(game, &averaged);
    let ok = epsilon <= tol;
    EquilibriumSet {
        members: if ok { vec![EqMember::Mixed(averaged)] } else { Vec::new() },
        method: EqMethod::FictitiousPlay,
        converged: ok,
        epsilon,
    }
}

/// How the equilibrium pool is assembled when enumeration is unavailable.
#[derive(Debug, Clone)]
pub struct PoolConfig {
    /// Maximum pure profile count enumeration may scan.
    pub eq_budget: f64,
    pub ibr_rounds: usize,
    pub fp_rounds: usize,
    /// Deviation gain under which a fictitious-play average counts as
    /// converged outright.
    pub fp_tol: f64,
    /// Looser gain under which the average is still included, flagged as
    /// approximate, when nothing better is available.
    pub fp_fallback_tol: f64,
}

impl Default for PoolConfig {
    fn default() -> Self {
        PoolConfig {
            eq_budget: 1e7,
            ibr_rounds: 200,
            fp_rounds: 2000,
            fp_tol: 1e-3,
            fp_fallback_tol: 0.05,
        }
    }
}

/// Assemble the candidate equilibrium pool for a game.
///
/// Prefers exhaustive enumeration. When that is over budget or comes back
/// empty, falls back to iterated best response plus fictitious play and
/// records what happened in the returned caveat strings. The pool may be
/// empty; callers decide whether that is an error.
pub fn equilibrium_pool(game: &SingleLetterGame, cfg: &PoolConfig) -> (EquilibriumSet, Vec<String>) {
    let mut caveats = Vec::new();
    match enumerate_pure_bne(game, cfg.eq_budget) {
        Ok(set) if !set.members.is_empty() => return (set, caveats),
        Ok(_) => {
            caveats.push("no pure equilibrium exists; falling back to learning dynamics".into());
        }
        Err(e) => {
            caveats.push(format!("pure enumeration skipped: {e}"));
        }
    }

    let mut members = Vec::new();
    let mut epsilon: f64 = 0.0;
    let mut converged = true;

    let ibr = iterated_best_response(game, cfg.ibr_rounds);
    if ibr.converged {
        members.extend(ibr.members);
    }

    let fp = fictitious_play(game, cfg.fp_rounds, cfg.fp_fallback_tol);
    if fp.epsilon <= cfg.fp_tol {
        members.extend(fp.members);
        epsilon = epsilon.max(fp.epsilon);
    } else if fp.epsilon <= cfg.fp_fallback_tol {
        caveats.push(format!(
            "fictitious play did not reach tolerance {}; including its average as an approximate equilibrium with deviation gain {:.3e}",
            cfg.fp_tol, fp.epsilon
        ));
        members.extend(fp.members);
        epsilon = epsilon.max(fp.epsilon);
        converged = false;
    } else {
        caveats.push(format!(
            "fictitious play average rejected: deviation gain {:.3e} exceeds fallback tolerance {}",
            fp.epsilon, cfg.fp_fallback_tol
        ));
        converged = false;
    }

    members.dedup_by(|a, b| match (a, b) {
        (
            EqMember::Pure { actions_1: a1, actions_2: a2 },
            EqMember::Pure { actions_1: b1, actions_2: b2 },
        ) => a1 == b1 && a2 == b2,
        _ => false,
    });

    if members.is_empty() {
        converged = false;
    }
    (
        EquilibriumSet {
            members,
            method: EqMethod::Hybrid,
            converged,
            epsilon,
        },
        caveats,
    )
}

/// Encoder cost of a pure strategy pair, summed over supported triples.
pub fn encoder_cost_pure(game: &SingleLetterGame, actions_1: &[u8], actions_2: &[u8]) -> f64 {
    let c = game.cards();
    let mut acc = 0.0;
    for w0 in 0..c.w0 {
        for w1 in 0..c.w1 {
            for w2 in 0..c.w2 {
                let p = game.triple_prob(w0, w1, w2);
                if p > 0.0 {
                    acc += p
                        * game.cost_star(
                            0,
                            w0,
                            w1,
                            w2,
                            actions_1[w0 * c.w1 + w1] as usize,
                            actions_2[w0 * c.w2 + w2] as usize,
                        );
                }
            }
        }
    }
    acc
}

/// Encoder cost of any member.
pub fn encoder_cost_of_member(game: &SingleLetterGame, member: &EqMember) -> f64 {
    match member {
        EqMember::Pure { actions_1, actions_2 } => encoder_cost_pure(game, actions_1, actions_2),
        EqMember::Mixed(s) => game.encoder_expected_cost(s),
    }
}

/// The encoder's score: its expected cost at the worst member of the set,
/// with the maximizing member returned as a witness. Ties keep the first
/// member in set order.
pub fn worst_equilibrium_cost(
    game: &SingleLetterGame,
    set: &EquilibriumSet,
) -> Result<(f64, EqMember)> {
    let mut best: Option<(f64, &EqMember)> = None;
    for m in &set.members {
        let cost = encoder_cost_of_member(game, m);
        match &best {
            Some((c, _)) if cost <= *c => {}
            _ => best = Some((cost, m)),
        }
    }
    match best {
        Some((c, m)) => Ok((c, m.clone())),
        None => Err(Error::NoEquilibrium(
            "the candidate equilibrium set is empty".into(),
        )),
    }
}

/// Largest per-type L1 gap between two members' action distributions,
/// measured over the given game's supported types.
pub fn member_distance(game: &SingleLetterGame, a: &EqMember, b: &EqMember) -> f64 {
    let mut worst: f64 = 0.0;
    for &(w0, w1) in game.types_1() {
        let l1: f64 = (0..game.n_v1())
            .map(|v| (a.prob_1(game, w0, w1, v) - b.prob_1(game, w0, w1, v)).abs())
            .sum();
        worst = worst.max(l1);
    }
    for &(w0, w2) in game.types_2() {
        let l1: f64 = (0..game.n_v2())
            .map(|v| (a.prob_2(game, w0, w2, v) - b.prob_2(game, w0, w2, v)).abs())
            .sum();
        worst = worst.max(l1);
    }
    worst
}

/// Symmetric Hausdorff distance between two equilibrium pools under
/// [`member_distance`]. An empty pool on one side only is infinitely far.
pub fn hausdorff_distance(game: &SingleLetterGame, a: &[EqMember], b: &[EqMember]) -> f64 {
    match (a.is_empty(), b.is_empty()) {
        (true, true) => return 0.0,
        (true, false) | (false, true) => return f64::INFINITY,
        _ => {}
    }
    let directed = |from: &[EqMember], to: &[EqMember]| -> f64 {
        from.iter()
            .map(|m| {
                to.iter()
                    .map(|n| member_distance(game, m, n))
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max)
    };
    directed(a, b).max(directed(b, a))
}

#[derive(Debug, Clone, Serialize)]
pub struct EssentialityReport {
    /// True when a small policy perturbation moved the equilibrium pool
    /// much farther than the perturbation itself.
    pub fragile: bool,
    pub baseline_members: usize,
    pub max_drift: f64,
    pub drifts: Vec<f64>,
}

/// Probe whether the equilibrium pool is stable under small perturbations
/// of the disclosure policy.
///
/// Each sample perturbs every joint kernel entry by an independent uniform
/// offset within `radius`, renormalizes, and recomputes the pool. The
/// report flags fragility when the worst pool drift exceeds ten times the
/// perturbation radius. Requires a full-support policy so that perturbed
/// type spaces stay comparable.
pub fn essentiality_probe(
    instance: &ProblemInstance,
    policy: &Policy,
    radius: f64,
    samples: usize,
    seed: u64,
    cfg: &PoolConfig,
) -> Result<EssentialityReport> {
    if !(radius >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "perturbation radius must be nonnegative, got {radius}"
        )));
    }
    if !policy.is_full_support() {
        return Err(Error::NotFullSupport(
            "essentiality probe needs a full-support policy".into(),
        ));
    }

    let game = build_single_letter_game(instance, policy)?;
    let (pool_0, _) = equilibrium_pool(&game, cfg);

    let joint = match policy {
        Policy::Factorized(p) => JointPolicy::from_factorized(p),
        Policy::Joint(p) => p.clone(),
    };
    let rows_0: Vec<Vec<f64>> = joint
        .kernel()
        .rows()
        .iter()
        .map(|r| r.mass().to_vec())
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut drifts = Vec::with_capacity(samples);
    for _ in 0..samples {
        let rows: Vec<Vec<f64>> = rows_0
            .iter()
            .map(|row| {
                let mut out: Vec<f64> = row
                    .iter()
                    .map(|&x| {
                        let bumped = if radius > 0.0 {
                            x + rng.gen_range(-radius..=radius)
                        } else {
                            x
                        };
                        bumped.max(0.0)
                    })
                    .collect();
                let s: f64 = out.iter().sum();
                if s <= 0.0 {
                    out = vec![1.0 / row.len() as f64; row.len()];
                } else {
                    for x in out.iter_mut() {
                        *x /= s;
                    }
                }
                out
            })
            .collect();
        let perturbed = Policy::Joint(JointPolicy::new(
            joint.source_alphabet(),
            joint.cards(),
            rows,
        )?);
        let game_p = build_single_letter_game(instance, &perturbed)?;
        let (pool_p, _) = equilibrium_pool(&game_p, cfg);
        drifts.push(hausdorff_distance(&game, &pool_0.members, &pool_p.members));
    }

    let max_drift = drifts.iter().cloned().fold(0.0, f64::max);
    Ok(EssentialityReport {
        fragile: max_drift > 10.0 * radius,
        baseline_members: pool_0.members.len(),
        max_drift,
        drifts,
    })
}
