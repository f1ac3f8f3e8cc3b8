//! Encoder-side search for disclosure policies.
//!
//! The encoder minimizes its worst-equilibrium cost over rate-feasible
//! policies. The factorized search gives the achievable-side value, the
//! unrestricted joint search gives the converse-side comparison value;
//! both use multi-start coordinate descent over kernel rows with
//! simplex-vertex mixes as the candidate moves. Search is heuristic, but
//! every reported value is an exactly evaluated policy.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::equilibria::{
    equilibrium_pool, worst_equilibrium_cost, EqMember, EqMethod, PoolConfig, WitnessDoc,
};
use crate::error::{Error, Result};
use crate::game::build_single_letter_game;
use crate::model::{
    rate_membership, InformationPolicy, JointPolicy, MembershipReport, Policy, PolicyCardinalities,
    PolicyDoc, ProblemInstance, RateVariant,
};
use crate::probcore::Alphabet;

/// Minimum improvement for a descent move to be accepted.
const IMPROVE_TOL: f64 = 1e-12;

/// Shrink levels used to pull random restarts toward the feasible base
/// policy. The terminal exact zero guarantees the base itself is tried.
const SHRINK_LAMBDAS: [f64; 6] = [1.0, 0.3, 0.1, 0.03, 0.01, 0.0];

#[derive(Debug, Clone)]
pub struct SolveConfig {
    pub variant: RateVariant,
    /// Signal cardinalities; defaults to (|V1||V2|+1, |V1|, |V2|) and may
    /// only be raised above those defaults.
    pub cards: Option<PolicyCardinalities>,
    pub restarts: usize,
    pub local_steps: usize,
    /// Mixing steps per simplex direction when proposing row moves.
    pub grid_resolution: usize,
    /// Cap on the deterministic common-signal scan used for seeding.
    pub det_init_budget: u64,
    pub seed: u64,
    pub pool: PoolConfig,
    /// Extra starting policies, searched from as given.
    pub warm_starts: Vec<Policy>,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            variant: RateVariant::Q0,
            cards: None,
            restarts: 4,
            local_steps: 12,
            grid_resolution: 5,
            det_init_budget: 4096,
            seed: 0,
            pool: PoolConfig::default(),
            warm_starts: Vec::new(),
        }
    }
}

/// Compact description of how a policy's equilibrium set was obtained.
#[derive(Debug, Clone, Serialize)]
pub struct PoolSummary {
    pub method: EqMethod,
    pub member_count: usize,
    pub converged: bool,
    pub epsilon: f64,
}

/// Exact evaluation of one policy: rate slacks plus worst-equilibrium cost.
#[derive(Debug, Clone)]
pub struct PolicyEvaluation {
    pub value: f64,
    pub witness: EqMember,
    pub membership: MembershipReport,
    pub pool: PoolSummary,
    pub caveats: Vec<String>,
}

/// Score a policy: check rate feasibility, build the induced game,
/// assemble the equilibrium pool, and take the worst member's cost.
pub fn evaluate_policy(
    instance: &ProblemInstance,
    policy: &Policy,
    variant: RateVariant,
    pool_cfg: &PoolConfig,
) -> Result<PolicyEvaluation> {
    let membership = rate_membership(instance, policy, variant)?;
    if !membership.feasible {
        return Err(Error::Infeasible(format!(
            "policy violates the {variant} rate constraints, slacks {:?}",
            membership.slacks
        )));
    }
    let game = build_single_letter_game(instance, policy)?;
    let (set, caveats) = equilibrium_pool(&game, pool_cfg);
    let (value, witness) = worst_equilibrium_cost(&game, &set)?;
    Ok(PolicyEvaluation {
        value,
        witness,
        membership,
        pool: PoolSummary {
            method: set.method,
            member_count: set.members.len(),
            converged: set.converged,
            epsilon: set.epsilon,
        },
        caveats,
    })
}

/// Evaluation that treats infeasibility and empty pools as "skip this
/// candidate" rather than hard errors.
fn try_value(
    instance: &ProblemInstance,
    policy: &Policy,
    variant: RateVariant,
    pool_cfg: &PoolConfig,
) -> Result<Option<PolicyEvaluation>> {
    match evaluate_policy(instance, policy, variant, pool_cfg) {
        Ok(ev) => Ok(Some(ev)),
        Err(Error::Infeasible(_)) | Err(Error::NoEquilibrium(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Rows of either policy shape, the coordinate space the descent moves in.
#[derive(Debug, Clone)]
enum SearchState {
    Fac {
        cards: PolicyCardinalities,
        rows0: Vec<Vec<f64>>,
        rows1: Vec<Vec<f64>>,
        rows2: Vec<Vec<f64>>,
    },
    Joint {
        cards: PolicyCardinalities,
        rows: Vec<Vec<f64>>,
    },
}

impl SearchState {
    fn from_policy(policy: &Policy) -> SearchState {
        let rows_of = |k: &crate::probcore::StochasticKernel| -> Vec<Vec<f64>> {
            k.rows().iter().map(|r| r.mass().to_vec()).collect()
        };
        match policy {
            Policy::Factorized(p) => SearchState::Fac {
                cards: p.cards(),
                rows0: rows_of(p.q0()),
                rows1: rows_of(p.q1()),
                rows2: rows_of(p.q2()),
            },
            Policy::Joint(p) => SearchState::Joint {
                cards: p.cards(),
                rows: rows_of(p.kernel()),
            },
        }
    }

    fn to_policy(&self, source_alphabet: &Alphabet) -> Result<Policy> {
        match self {
            SearchState::Fac { cards, rows0, rows1, rows2 } => {
                Ok(Policy::Factorized(InformationPolicy::from_rows(
                    source_alphabet,
                    *cards,
                    rows0.clone(),
                    rows1.clone(),
                    rows2.clone(),
                )?))
            }
            SearchState::Joint { cards, rows } => Ok(Policy::Joint(JointPolicy::new(
                source_alphabet,
                *cards,
                rows.clone(),
            )?)),
        }
    }

    fn n_rows(&self) -> usize {
        match self {
            SearchState::Fac { rows0, rows1, rows2, .. } => {
                rows0.len() + rows1.len() + rows2.len()
            }
            SearchState::Joint { rows, .. } => rows.len(),
        }
    }

    fn row(&self, i: usize) -> &[f64] {
        match self {
            SearchState::Fac { rows0, rows1, rows2, .. } => {
                if i < rows0.len() {
                    &rows0[i]
                } else if i < rows0.len() + rows1.len() {
                    &rows1[i - rows0.len()]
                } else {
                    &rows2[i - rows0.len() - rows1.len()]
                }
            }
            SearchState::Joint { rows, .. } => &rows[i],
        }
    }

    fn with_row(&self, i: usize, row: Vec<f64>) -> SearchState {
        let mut out = self.clone();
        match &mut out {
            SearchState::Fac { rows0, rows1, rows2, .. } => {
                if i < rows0.len() {
                    rows0[i] = row;
                } else if i < rows0.len() + rows1.len() {
                    rows1[i - rows0.len()] = row;
                } else {
                    rows2[i - rows0.len() - rows1.len()] = row;
                }
            }
            SearchState::Joint { rows, .. } => rows[i] = row,
        }
        out
    }
}

/// Proposed replacements for one row: mixes of the row with each simplex
/// vertex, including the vertices themselves.
fn row_candidates(row: &[f64], grid_resolution: usize) -> Vec<Vec<f64>> {
    let g = grid_resolution.max(2);
    let mut out = Vec::with_capacity(row.len() * (g - 1));
    for k in 0..row.len() {
        for i in 1..g {
            let alpha = i as f64 / (g - 1) as f64;
            let mut cand: Vec<f64> = row.iter().map(|&x| (1.0 - alpha) * x).collect();
            cand[k] += alpha;
            out.push(cand);
        }
    }
    out
}

/// Greedy coordinate descent from one starting state. Returns the best
/// point reached, or None when the start itself is unusable.
fn descend(
    instance: &ProblemInstance,
    init: SearchState,
    cfg: &SolveConfig,
    variant: RateVariant,
) -> Result<Option<(PolicyEvaluation, SearchState)>> {
    let u = instance.source_alphabet();
    let mut state = init;
    let mut current = match try_value(instance, &state.to_policy(u)?, variant, &cfg.pool)? {
        Some(ev) => ev,
        None => return Ok(None),
    };
    for _ in 0..cfg.local_steps {
        let mut improved = false;
        for i in 0..state.n_rows() {
            if state.row(i).len() < 2 {
                continue;
            }
            let cands = row_candidates(state.row(i), cfg.grid_resolution);
            let evals: Vec<(usize, Option<PolicyEvaluation>)> = cands
                .par_iter()
                .enumerate()
                .map(|(j, row)| {
                    let policy = state.with_row(i, row.clone()).to_policy(u)?;
                    Ok((j, try_value(instance, &policy, variant, &cfg.pool)?))
                })
                .collect::<Result<Vec<_>>>()?;
            let best = evals
                .into_iter()
                .filter_map(|(j, o)| o.map(|ev| (j, ev)))
                .min_by(|a, b| a.1.value.total_cmp(&b.1.value).then(a.0.cmp(&b.0)));
            if let Some((j, ev)) = best {
                if ev.value < current.value - IMPROVE_TOL {
                    state = state.with_row(i, cands[j].clone());
                    current = ev;
                    improved = true;
                }
            }
        }
        if !improved {
            break;
        }
    }
    Ok(Some((current, state)))
}

/// Search outcome: the best policy found, its exact evaluation, and notes
/// on equilibrium coverage. The value is an upper bound on the optimum of
/// the searched class, since the search is heuristic.
#[derive(Debug, Clone)]
pub struct SolveResult {
    pub value: f64,
    pub policy: Policy,
    pub witness: EqMember,
    pub membership: MembershipReport,
    pub pool: PoolSummary,
    pub restarts_used: usize,
    /// True when the value rests on exhaustive pure enumeration.
    pub certified_value: bool,
    pub caveats: Vec<String>,
}

/// The JSON document a solve writes: exactly these six keys.
#[derive(Debug, Clone, Serialize)]
pub struct SolveArtifact {
    pub value: f64,
    pub policy: PolicyDoc,
    pub witness: WitnessDoc,
    pub slacks: [f64; 3],
    pub restarts_used: usize,
    pub caveats: Vec<String>,
}

impl SolveResult {
    pub fn to_artifact(&self) -> SolveArtifact {
        let mut caveats = self.caveats.clone();
        caveats.push(format!(
            "equilibrium coverage at the returned policy: method={:?} members={} converged={} epsilon={:.3e}",
            self.pool.method, self.pool.member_count, self.pool.converged, self.pool.epsilon
        ));
        if self.certified_value {
            caveats.push(
                "value is exact at the returned policy (exhaustive pure enumeration)".into(),
            );
        } else {
            caveats.push("value relies on approximate equilibrium coverage".into());
        }
        SolveArtifact {
            value: self.value,
            policy: PolicyDoc::from_policy(&self.policy),
            witness: WitnessDoc::from_member(&self.witness),
            slacks: self.membership.slacks,
            restarts_used: self.restarts_used,
            caveats,
        }
    }
}

fn resolve_cards(
    instance: &ProblemInstance,
    requested: Option<PolicyCardinalities>,
) -> Result<PolicyCardinalities> {
    let defaults = PolicyCardinalities::defaults_for(instance);
    match requested {
        None => Ok(defaults),
        Some(c) => {
            if c.w0 < defaults.w0 || c.w1 < defaults.w1 || c.w2 < defaults.w2 {
                return Err(Error::InvalidArgument(format!(
                    "signal cardinalities may only be raised above the defaults {:?}, got {:?}",
                    defaults.as_array(),
                    c.as_array()
                )));
            }
            Ok(c)
        }
    }
}

fn point_row(len: usize, at: usize) -> Vec<f64> {
    let mut row = vec![0.0; len];
    row[at] = 1.0;
    row
}

/// Decode one deterministic assignment into factorized rows. Signals are
/// assigned per source symbol; private maps are set on the reachable
/// (u, w0) pair only, unreachable rows staying at the first signal.
fn decode_deterministic(
    cards: PolicyCardinalities,
    nu: usize,
    bases: [usize; 3],
    idx: u64,
) -> SearchState {
    let mut rest = idx;
    let mut rows0 = Vec::with_capacity(nu);
    let mut rows1 = vec![point_row(cards.w1, 0); nu * cards.w0];
    let mut rows2 = vec![point_row(cards.w2, 0); nu * cards.w0];
    for u in 0..nu {
        let d0 = (rest % bases[0] as u64) as usize;
        rest /= bases[0] as u64;
        let d1 = (rest % bases[1] as u64) as usize;
        rest /= bases[1] as u64;
        let d2 = (rest % bases[2] as u64) as usize;
        rest /= bases[2] as u64;
        rows0.push(point_row(cards.w0, d0));
        rows1[u * cards.w0 + d0] = point_row(cards.w1, d1);
        rows2[u * cards.w0 + d0] = point_row(cards.w2, d2);
    }
    SearchState::Fac { cards, rows0, rows1, rows2 }
}

/// Best deterministic seed within budget: first tries the full scan over
/// common and private maps (the same space the sweep certifies against),
/// then falls back to common-signal maps alone, then gives up.
fn deterministic_seed(
    instance: &ProblemInstance,
    cards: PolicyCardinalities,
    variant: RateVariant,
    cfg: &SolveConfig,
) -> Result<Option<SearchState>> {
    let nu = instance.n_u();
    let c0 = cards.w0.min(nu);
    let full = ((c0 * cards.w1 * cards.w2) as f64).powi(nu as i32);
    let common_only = (c0 as f64).powi(nu as i32);
    let bases: [usize; 3];
    let total: u64;
    if full.is_finite() && full <= cfg.det_init_budget as f64 {
        bases = [c0, cards.w1, cards.w2];
        total = full as u64;
    } else if common_only.is_finite() && common_only <= cfg.det_init_budget as f64 {
        bases = [c0, 1, 1];
        total = common_only as u64;
    } else {
        return Ok(None);
    }
    let results: Vec<(u64, Option<f64>)> = (0..total)
        .into_par_iter()
        .map(|idx| {
            let state = decode_deterministic(cards, nu, bases, idx);
            let policy = state.to_policy(instance.source_alphabet())?;
            Ok((idx, try_value(instance, &policy, variant, &cfg.pool)?.map(|ev| ev.value)))
        })
        .collect::<Result<Vec<_>>>()?;
    let best = results
        .into_iter()
        .filter_map(|(idx, v)| v.map(|value| (idx, value)))
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    Ok(best.map(|(idx, _)| decode_deterministic(cards, nu, bases, idx)))
}

fn shrink_rows(random: &[Vec<f64>], base: &[Vec<f64>], lambda: f64) -> Vec<Vec<f64>> {
    random
        .iter()
        .zip(base)
        .map(|(r, b)| {
            r.iter()
                .zip(b)
                .map(|(&x, &y)| lambda * x + (1.0 - lambda) * y)
                .collect()
        })
        .collect()
}

/// Pick, among shrink levels of one random draw toward the base state,
/// the level with the best evaluation. Levels that are infeasible or have
/// empty pools are skipped; the exact-zero level reproduces the base.
fn best_shrink(
    instance: &ProblemInstance,
    random: &SearchState,
    base: &SearchState,
    cfg: &SolveConfig,
    variant: RateVariant,
) -> Result<Option<SearchState>> {
    let u = instance.source_alphabet();
    let mut best: Option<(f64, SearchState)> = None;
    for &lambda in SHRINK_LAMBDAS.iter() {
        let state = match (random, base) {
            (
                SearchState::Fac { cards, rows0, rows1, rows2 },
                SearchState::Fac { rows0: b0, rows1: b1, rows2: b2, .. },
            ) => SearchState::Fac {
                cards: *cards,
                rows0: shrink_rows(rows0, b0, lambda),
                rows1: shrink_rows(rows1, b1, lambda),
                rows2: shrink_rows(rows2, b2, lambda),
            },
            (SearchState::Joint { cards, rows }, SearchState::Joint { rows: br, .. }) => {
                SearchState::Joint {
                    cards: *cards,
                    rows: shrink_rows(rows, br, lambda),
                }
            }
            _ => unreachable!("random and base states share a shape"),
        };
        if let Some(ev) = try_value(instance, &state.to_policy(u)?, variant, &cfg.pool)? {
            match &best {
                Some((v, _)) if *v <= ev.value => {}
                _ => best = Some((ev.value, state)),
            }
        }
    }
    Ok(best.map(|(_, s)| s))
}

fn run_inits(
    instance: &ProblemInstance,
    inits: Vec<SearchState>,
    cfg: &SolveConfig,
    variant: RateVariant,
) -> Result<SolveResult> {
    let mut best: Option<(PolicyEvaluation, SearchState)> = None;
    let mut restarts_used = 0;
    for init in inits {
        restarts_used += 1;
        if let Some((ev, state)) = descend(instance, init, cfg, variant)? {
            match &best {
                Some((b, _)) if b.value <= ev.value => {}
                _ => best = Some((ev, state)),
            }
        }
    }
    let (ev, state) = best.ok_or_else(|| {
        Error::NoEquilibrium(
            "no rate-feasible policy with a nonempty equilibrium pool was found".into(),
        )
    })?;
    let policy = state.to_policy(instance.source_alphabet())?;
    let certified = ev.pool.method == EqMethod::Enumeration && ev.pool.converged;
    Ok(SolveResult {
        value: ev.value,
        policy,
        witness: ev.witness,
        membership: ev.membership,
        pool: ev.pool,
        restarts_used,
        certified_value: certified,
        caveats: ev.caveats,
    })
}

/// Minimize the worst-equilibrium cost over factorized policies.
///
/// `cfg.variant` selects the rate region: the sum-rate region by default,
/// or the strict split-rate region, which confines the search to
/// full-support policies.
pub fn solve_gamma_star(instance: &ProblemInstance, cfg: &SolveConfig) -> Result<SolveResult> {
    let cards = resolve_cards(instance, cfg.cards)?;
    let variant = cfg.variant;
    let u = instance.source_alphabet();
    let nu = instance.n_u();
    let strict = variant == RateVariant::Qtilde0;

    let base_policy = if strict {
        InformationPolicy::uniform(u, cards)
    } else {
        InformationPolicy::uninformative(u, cards)
    };
    let base = SearchState::from_policy(&Policy::Factorized(base_policy));

    let mut inits = vec![base.clone()];
    if !strict && cards.w0 >= nu {
        let reveal = InformationPolicy::full_revelation(u, cards)?;
        inits.push(SearchState::from_policy(&Policy::Factorized(reveal)));
    }
    if !strict {
        if let Some(seed_state) = deterministic_seed(instance, cards, variant, cfg)? {
            inits.push(seed_state);
        }
    }
    for warm in &cfg.warm_starts {
        match warm {
            Policy::Factorized(_) => inits.push(SearchState::from_policy(warm)),
            Policy::Joint(_) => {
                return Err(Error::InvalidArgument(
                    "the factorized search cannot start from a joint policy".into(),
                ))
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for _ in 0..cfg.restarts {
        let random = SearchState::from_policy(&Policy::Factorized(InformationPolicy::random(
            u, cards, &mut rng,
        )));
        if let Some(state) = best_shrink(instance, &random, &base, cfg, variant)? {
            inits.push(state);
        }
    }

    let mut result = run_inits(instance, inits, cfg, variant)?;
    result.caveats.push(
        "heuristic multi-start search: the value upper-bounds the best factorized policy".into(),
    );
    Ok(result)
}

/// Minimize the worst-equilibrium cost over unrestricted joint policies.
///
/// Starts from the factorized solution (computed here unless warm starts
/// are supplied), so the result never exceeds the factorized value.
pub fn solve_gamma_hat(instance: &ProblemInstance, cfg: &SolveConfig) -> Result<SolveResult> {
    let cards = resolve_cards(instance, cfg.cards)?;
    let variant = RateVariant::Qhat0;
    let u = instance.source_alphabet();

    let mut warms: Vec<Policy> = cfg.warm_starts.clone();
    if warms.is_empty() {
        let mut star_cfg = cfg.clone();
        star_cfg.variant = RateVariant::Q0;
        star_cfg.warm_starts = Vec::new();
        let star = solve_gamma_star(instance, &star_cfg)?;
        warms.push(star.policy);
    }

    let base = SearchState::from_policy(&Policy::Joint(JointPolicy::from_factorized(
        &InformationPolicy::uninformative(u, cards),
    )));
    let mut inits = vec![base.clone()];
    for warm in &warms {
        let joint = match warm {
            Policy::Factorized(p) => JointPolicy::from_factorized(p),
            Policy::Joint(p) => p.clone(),
        };
        inits.push(SearchState::from_policy(&Policy::Joint(joint)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    for _ in 0..cfg.restarts {
        let random = SearchState::from_policy(&Policy::Joint(JointPolicy::from_factorized(
            &InformationPolicy::random(u, cards, &mut rng),
        )));
        if let Some(state) = best_shrink(instance, &random, &base, cfg, variant)? {
            inits.push(state);
        }
    }

    let mut result = run_inits(instance, inits, cfg, variant)?;
    result
        .caveats
        .push("heuristic multi-start search over unrestricted joint policies".into());
    Ok(result)
}

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub variant: RateVariant,
    /// Assignment-count cap; the sweep refuses instead of truncating.
    pub budget: f64,
    pub pool: PoolConfig,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            variant: RateVariant::Q0,
            budget: 1e7,
            pool: PoolConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub value: f64,
    pub policy: Policy,
    pub witness: EqMember,
    /// Cardinalities after capping at what deterministic maps can use.
    pub cards: PolicyCardinalities,
    pub scanned: u64,
    pub feasible: u64,
}

/// Exhaustive scan over deterministic factorized policies.
///
/// Deterministic signals cannot use more common-signal values than there
/// are source symbols, so cardinalities are capped at that before
/// counting; private-signal maps are enumerated only on reachable
/// (u, w0) pairs, the rest being irrelevant to the induced law.
pub fn deterministic_policy_sweep(
    instance: &ProblemInstance,
    cfg: &SweepConfig,
) -> Result<SweepResult> {
    let defaults = PolicyCardinalities::defaults_for(instance);
    let nu = instance.n_u();
    let cards = PolicyCardinalities::new(
        defaults.w0.min(nu),
        defaults.w1,
        defaults.w2,
    )?;
    let per_symbol = (cards.w0 * cards.w1 * cards.w2) as f64;
    let ln_total = nu as f64 * per_symbol.ln();
    if !(cfg.budget > 0.0) || ln_total > cfg.budget.ln() {
        return Err(Error::BudgetExceeded {
            required: format!("{:.3e} deterministic policies", ln_total.exp()),
            budget: format!("{:.3e}", cfg.budget),
        });
    }
    let total = per_symbol.powi(nu as i32) as u64;
    let u_alpha = instance.source_alphabet();

    let decode = |idx: u64| -> Result<Policy> {
        let mut rest = idx;
        let mut rows0 = Vec::with_capacity(nu);
        let mut rows1 = vec![point_row(cards.w1, 0); nu * cards.w0];
        let mut rows2 = vec![point_row(cards.w2, 0); nu * cards.w0];
        for u in 0..nu {
            let d0 = (rest % cards.w0 as u64) as usize;
            rest /= cards.w0 as u64;
            let d1 = (rest % cards.w1 as u64) as usize;
            rest /= cards.w1 as u64;
            let d2 = (rest % cards.w2 as u64) as usize;
            rest /= cards.w2 as u64;
            rows0.push(point_row(cards.w0, d0));
            rows1[u * cards.w0 + d0] = point_row(cards.w1, d1);
            rows2[u * cards.w0 + d0] = point_row(cards.w2, d2);
        }
        Ok(Policy::Factorized(InformationPolicy::from_rows(
            u_alpha, cards, rows0, rows1, rows2,
        )?))
    };

    let (best, feasible) = (0..total)
        .into_par_iter()
        .map(|idx| -> Result<(Option<(f64, u64)>, u64)> {
            let policy = decode(idx)?;
            match try_value(instance, &policy, cfg.variant, &cfg.pool)? {
                Some(ev) => Ok((Some((ev.value, idx)), 1)),
                None => Ok((None, 0)),
            }
        })
        .try_reduce(
            || (None, 0),
            |a, b| {
                let best = match (a.0, b.0) {
                    (None, x) | (x, None) => x,
                    (Some(x), Some(y)) => {
                        if x.0 < y.0 || (x.0 == y.0 && x.1 <= y.1) {
                            Some(x)
                        } else {
                            Some(y)
                        }
                    }
                };
                Ok((best, a.1 + b.1))
            },
        )?;

    let (_, idx) = best.ok_or_else(|| {
        Error::Infeasible("no deterministic policy satisfies the rate constraints".into())
    })?;
    let policy = decode(idx)?;
    let ev = evaluate_policy(instance, &policy, cfg.variant, &cfg.pool)?;
    Ok(SweepResult {
        value: ev.value,
        policy,
        witness: ev.witness,
        cards,
        scanned: total,
        feasible,
    })
}

/// Whether the encoder's cost table splits into a (u, v1) part plus a
/// (u, v2) part, and how far it is from the nearest such split along the
/// reference-column decomposition.
#[derive(Debug, Clone, Serialize)]
pub struct SeparabilityReport {
    pub separable: bool,
    pub residual: f64,
    pub tol: f64,
}

pub fn separable_gap_check(instance: &ProblemInstance, tol: f64) -> SeparabilityReport {
    let ce = &instance.cost_e;
    let [nu, nv1, nv2] = ce.shape();
    let mut residual: f64 = 0.0;
    for u in 0..nu {
        for v1 in 0..nv1 {
            for v2 in 0..nv2 {
                let f = ce.get(u, v1, 0);
                let g = ce.get(u, 0, v2) - ce.get(u, 0, 0);
                residual = residual.max((ce.get(u, v1, v2) - f - g).abs());
            }
        }
    }
    SeparabilityReport {
        separable: residual <= tol,
        residual,
        tol,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{InstanceFile, RateTriple};

    const MATCHING_JSON: &str = r#"{
        "alphabets": [["0", "1"], ["0", "1"], ["0", "1"]],
        "prior": [0.5, 0.5],
        "costs": [
            [[[0.0, 1.0], [1.0, 2.0]], [[2.0, 1.0], [1.0, 0.0]]],
            [[[0.0, 0.0], [1.0, 1.0]], [[1.0, 1.0], [0.0, 0.0]]],
            [[[0.0, 1.0], [0.0, 1.0]], [[1.0, 0.0], [1.0, 0.0]]]
        ],
        "rates": [1.0, 1.0, 1.0]
    }"#;

    fn matching() -> ProblemInstance {
        InstanceFile::from_json(MATCHING_JSON).unwrap().build().unwrap()
    }

    fn small_cfg() -> SolveConfig {
        SolveConfig {
            restarts: 2,
            local_steps: 3,
            grid_resolution: 3,
            ..SolveConfig::default()
        }
    }

    #[test]
    fn zero_rates_force_the_uninformative_value() {
        let inst = matching().with_rates(RateTriple::new(0.0, 0.0, 0.0).unwrap());
        let result = solve_gamma_star(&inst, &small_cfg()).unwrap();
        assert!((result.value - 1.0).abs() <= 1e-9);
        assert!(result.certified_value);
    }

    #[test]
    fn ample_rates_reach_zero_cost() {
        let inst = matching();
        let result = solve_gamma_star(&inst, &small_cfg()).unwrap();
        assert!(result.value.abs() <= 1e-9);
        assert!(result.membership.feasible);
    }

    #[test]
    fn joint_search_never_exceeds_the_factorized_value() {
        let inst = matching().with_rates(RateTriple::new(0.5, 0.3, 0.3).unwrap());
        let star = solve_gamma_star(&inst, &small_cfg()).unwrap();
        let mut hat_cfg = small_cfg();
        hat_cfg.warm_starts = vec![star.policy.clone()];
        let hat = solve_gamma_hat(&inst, &hat_cfg).unwrap();
        assert!(hat.value <= star.value + 1e-12);
    }

    #[test]
    fn strict_variant_returns_a_full_support_policy() {
        let inst = matching().with_rates(RateTriple::new(0.6, 0.6, 0.6).unwrap());
        let mut cfg = small_cfg();
        cfg.variant = RateVariant::Qtilde0;
        let result = solve_gamma_star(&inst, &cfg).unwrap();
        assert!(result.policy.is_full_support());
        assert!(result.membership.feasible);
        for s in result.membership.slacks {
            assert!(s > 0.0);
        }
    }

    #[test]
    fn sweep_finds_the_zero_cost_copy_policy() {
        let inst = matching();
        let result = deterministic_policy_sweep(&inst, &SweepConfig::default()).unwrap();
        assert_eq!(result.cards.as_array(), [2, 2, 2]);
        assert_eq!(result.scanned, 64);
        assert!(result.feasible > 0);
        assert!(result.value.abs() <= 1e-12);
    }

    #[test]
    fn sweep_respects_its_budget() {
        let inst = matching();
        let cfg = SweepConfig {
            budget: 10.0,
            ..SweepConfig::default()
        };
        assert!(matches!(
            deterministic_policy_sweep(&inst, &cfg),
            Err(Error::BudgetExceeded { .. })
        ));
    }

    #[test]
    fn cards_may_only_be_raised() {
        let inst = matching();
        let cfg = SolveConfig {
            cards: Some(PolicyCardinalities::new(2, 2, 2).unwrap()),
            ..small_cfg()
        };
        assert!(matches!(
            solve_gamma_star(&inst, &cfg),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn additive_costs_are_separable_and_coupled_costs_are_not() {
        let inst = matching();
        let report = separable_gap_check(&inst, 1e-9);
        assert!(report.separable);
        assert!(report.residual <= 1e-12);

        let mut file = InstanceFile::from_json(MATCHING_JSON).unwrap();
        file.costs[0] = vec![
            vec![vec![0.0, 0.0], vec![0.0, 1.0]],
            vec![vec![1.0, 0.0], vec![0.0, 0.0]],
        ];
        let coupled = file.build().unwrap();
        let report = separable_gap_check(&coupled, 1e-9);
        assert!(!report.separable);
        assert!((report.residual - 1.0).abs() < 1e-12);
    }

    #[test]
    fn infeasible_policy_evaluation_is_an_error() {
        let inst = matching().with_rates(RateTriple::new(0.0, 0.0, 0.0).unwrap());
        let cards = PolicyCardinalities::new(2, 1, 1).unwrap();
        let policy = Policy::Factorized(
            InformationPolicy::full_revelation(inst.source_alphabet(), cards).unwrap(),
        );
        assert!(matches!(
            evaluate_policy(&inst, &policy, RateVariant::Q0, &PoolConfig::default()),
            Err(Error::Infeasible(_))
        ));
    }
}
