//! Randomized contract checks that cut across modules: information
//! identities, the Markov structure of factorized policies, implications
//! between the rate-membership variants, interim-cost algebra of the
//! decoder game, and transformations that must leave equilibria alone.

use proptest::prelude::*;

use graywyner_core::equilibria::{deviation_gain, enumerate_pure_bne, iterated_best_response, EqMember};
use graywyner_core::game::{build_single_letter_game, DecoderStrategy, PlayerId, SingleLetterGame};
use graywyner_core::model::{
    build_joint, rate_membership, InformationPolicy, InstanceFile, Policy, PolicyCardinalities,
    ProblemInstance, RateVariant,
};
use graywyner_core::optimizer::{solve_gamma_star, SolveConfig};
use graywyner_core::probcore::{
    bayes_posterior, entropy_of_masses, kl_divergence, Alphabet, FiniteDistribution,
    JointDistribution, StochasticKernel,
};

const TOL: f64 = 1e-9;

fn normalized(raw: Vec<f64>) -> Vec<f64> {
    let z: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / z).collect()
}

/// Full-support probability vectors; the floor keeps every outcome's mass
/// bounded away from zero so posterior and conditional quantities exist.
fn masses(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.05f64..1.0, len).prop_map(normalized)
}

fn dist(mass: Vec<f64>) -> FiniteDistribution {
    FiniteDistribution::new(Alphabet::numeric(mass.len()), mass).unwrap()
}

fn instance_from(
    sizes: (usize, usize, usize),
    prior: Vec<f64>,
    costs: Vec<f64>,
    rates: [f64; 3],
) -> ProblemInstance {
    let (nu, nv1, nv2) = sizes;
    assert_eq!(costs.len(), 3 * nu * nv1 * nv2);
    let sym = |n: usize| (0..n).map(|i| i.to_string()).collect::<Vec<_>>();
    let block = nu * nv1 * nv2;
    let nest = |off: usize| -> Vec<Vec<Vec<f64>>> {
        (0..nu)
            .map(|u| {
                (0..nv1)
                    .map(|a| {
                        (0..nv2)
                            .map(|b| costs[off + (u * nv1 + a) * nv2 + b])
                            .collect()
                    })
                    .collect()
            })
            .collect()
    };
    InstanceFile {
        alphabets: vec![sym(nu), sym(nv1), sym(nv2)],
        prior,
        costs: vec![nest(0), nest(block), nest(2 * block)],
        rates: rates.to_vec(),
    }
    .build()
    .unwrap()
}

fn policy_from(nu: usize, cards: (usize, usize, usize), rows: (Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<Vec<f64>>)) -> Policy {
    let alpha = Alphabet::numeric(nu);
    let cards = PolicyCardinalities::new(cards.0, cards.1, cards.2).unwrap();
    Policy::Factorized(InformationPolicy::from_rows(&alpha, cards, rows.0, rows.1, rows.2).unwrap())
}

/// Rows for a factorized policy over binary U with (2, 2, 2) signals.
fn policy_rows() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    (
        prop::collection::vec(masses(2), 2),
        prop::collection::vec(masses(2), 4),
        prop::collection::vec(masses(2), 4),
    )
}

fn binary_game(
    prior: Vec<f64>,
    costs: Vec<f64>,
    rows: (Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<Vec<f64>>),
) -> (ProblemInstance, Policy, SingleLetterGame) {
    let instance = instance_from((2, 2, 2), prior, costs, [2.0, 1.0, 1.0]);
    let policy = policy_from(2, (2, 2, 2), rows);
    let game = build_single_letter_game(&instance, &policy).unwrap();
    (instance, policy, game)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn entropy_never_drops_under_mixing(p in masses(5), q in masses(5), lam in 0.0f64..=1.0) {
        let mix: Vec<f64> = p.iter().zip(&q).map(|(a, b)| lam * a + (1.0 - lam) * b).collect();
        let lhs = entropy_of_masses(&mix);
        let rhs = lam * entropy_of_masses(&p) + (1.0 - lam) * entropy_of_masses(&q);
        prop_assert!(lhs >= rhs - TOL);
    }

    #[test]
    fn divergence_is_nonnegative_and_separates_distributions(p in masses(4), q in masses(4)) {
        let (dp, dq) = (dist(p), dist(q));
        let kl = kl_divergence(&dp, &dq).unwrap();
        prop_assert!(kl >= 0.0);
        prop_assert_eq!(kl_divergence(&dp, &dp).unwrap(), 0.0);
        if kl < TOL {
            prop_assert!(dp.l1_distance(&dq).unwrap() < 1e-4);
        }
    }

    #[test]
    fn mutual_information_is_divergence_from_independence(m in masses(6)) {
        let axes = vec![Alphabet::numeric(2), Alphabet::numeric(3)];
        let joint = JointDistribution::new(axes, m.clone()).unwrap();
        let mi = joint.mi_between(&[0], &[1]).unwrap();
        let mu = joint.marginalize(&[0]).unwrap();
        let mw = joint.marginalize(&[1]).unwrap();
        let mut prod = vec![0.0; 6];
        for x in 0..2 {
            for y in 0..3 {
                prod[x * 3 + y] = mu.prob(&[x]) * mw.prob(&[y]);
            }
        }
        let kl = kl_divergence(&dist(m), &dist(prod)).unwrap();
        prop_assert!((mi - kl).abs() < TOL, "mi {} vs kl {}", mi, kl);
    }

    #[test]
    fn posterior_remixing_recovers_the_prior(
        pm in masses(3),
        rows in prop::collection::vec(masses(4), 3),
    ) {
        let alpha = Alphabet::numeric(3);
        let prior = FiniteDistribution::new(alpha.clone(), pm).unwrap();
        let kernel =
            StochasticKernel::from_rows(vec![alpha], Alphabet::numeric(4), rows).unwrap();
        let mut mixed = vec![0.0; 3];
        for y in 0..4 {
            let py: f64 = (0..3).map(|x| prior.prob(x) * kernel.row(&[x]).prob(y)).sum();
            let post = bayes_posterior(&prior, &kernel, y).unwrap();
            for (x, slot) in mixed.iter_mut().enumerate() {
                *slot += py * post.prob(x);
            }
        }
        for x in 0..3 {
            prop_assert!((mixed[x] - prior.prob(x)).abs() < 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn factorized_policies_break_private_signal_dependence(
        prior in masses(2),
        rows in policy_rows(),
    ) {
        let instance = instance_from((2, 2, 2), prior, vec![0.0; 24], [1.0, 1.0, 1.0]);
        let policy = policy_from(2, (2, 2, 2), rows);
        let joint = build_joint(&instance, &policy).unwrap();
        let leakage = joint.cmi_between(&[2], &[3], &[0, 1]).unwrap();
        prop_assert!(leakage.abs() < TOL, "I(W1;W2|U,W0) = {}", leakage);
    }

    #[test]
    fn split_rate_feasibility_implies_sum_rate_feasibility(
        prior in masses(2),
        rows in policy_rows(),
        r0 in 0.0f64..1.2,
        r1 in 0.0f64..0.8,
        r2 in 0.0f64..0.8,
    ) {
        let instance = instance_from((2, 2, 2), prior, vec![0.0; 24], [r0, r1, r2]);
        let policy = policy_from(2, (2, 2, 2), rows);
        let tilde = rate_membership(&instance, &policy, RateVariant::Qtilde0).unwrap();
        let q0 = rate_membership(&instance, &policy, RateVariant::Q0).unwrap();
        let qhat = rate_membership(&instance, &policy, RateVariant::Qhat0).unwrap();
        if tilde.feasible {
            prop_assert!(q0.feasible, "split slacks {:?} vs sum slacks {:?}", tilde.slacks, q0.slacks);
        }
        if q0.feasible {
            prop_assert!(qhat.feasible);
        }
        for i in 0..3 {
            prop_assert!((q0.slacks[i] - qhat.slacks[i]).abs() < 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn interim_cost_is_linear_in_own_mixture(
        prior in masses(2),
        costs in prop::collection::vec(0.0f64..2.0, 24),
        rows in policy_rows(),
        own_a in prop::collection::vec(masses(2), 4),
        own_b in prop::collection::vec(masses(2), 4),
        opp in prop::collection::vec(masses(2), 4),
        lam in 0.0f64..=1.0,
    ) {
        let (_, _, game) = binary_game(prior, costs, rows);
        let mixed: Vec<Vec<f64>> = own_a
            .iter()
            .zip(&own_b)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| lam * x + (1.0 - lam) * y).collect())
            .collect();
        let sa = DecoderStrategy::from_rows(&game, own_a, opp.clone()).unwrap();
        let sb = DecoderStrategy::from_rows(&game, own_b, opp.clone()).unwrap();
        let sm = DecoderStrategy::from_rows(&game, mixed, opp).unwrap();
        for &(w0, w1) in game.types_1() {
            let a = game.expected_cost_psi(PlayerId::One, w0, w1, &sa).unwrap();
            let b = game.expected_cost_psi(PlayerId::One, w0, w1, &sb).unwrap();
            let m = game.expected_cost_psi(PlayerId::One, w0, w1, &sm).unwrap();
            prop_assert!((m - (lam * a + (1.0 - lam) * b)).abs() < TOL);
        }
    }

    #[test]
    fn type_mixture_of_interim_costs_is_the_average_decoder_cost(
        prior in masses(2),
        costs in prop::collection::vec(0.0f64..2.0, 24),
        rows in policy_rows(),
        rows_1 in prop::collection::vec(masses(2), 4),
        rows_2 in prop::collection::vec(masses(2), 4),
    ) {
        let (instance, policy, game) = binary_game(prior, costs, rows);
        let strategies = DecoderStrategy::from_rows(&game, rows_1, rows_2).unwrap();
        let joint = build_joint(&instance, &policy).unwrap();

        for (player, which) in [(PlayerId::One, 1usize), (PlayerId::Two, 2usize)] {
            let types = match player {
                PlayerId::One => game.types_1(),
                PlayerId::Two => game.types_2(),
            };
            let mut mixed = 0.0;
            for &(w0, wi) in types {
                let p = match player {
                    PlayerId::One => game.pair_prob_1(w0, wi),
                    PlayerId::Two => game.pair_prob_2(w0, wi),
                };
                mixed += p * game.expected_cost_psi(player, w0, wi, &strategies).unwrap();
            }

            let table = instance.decoder_cost(which);
            let mut direct = 0.0;
            for u in 0..2 {
                for w0 in 0..2 {
                    for w1 in 0..2 {
                        for w2 in 0..2 {
                            let pj = joint.prob(&[u, w0, w1, w2]);
                            if pj == 0.0 {
                                continue;
                            }
                            for v1 in 0..2 {
                                for v2 in 0..2 {
                                    direct += pj
                                        * strategies.prob_1(w0, w1, v1)
                                        * strategies.prob_2(w0, w2, v2)
                                        * table.get(u, v1, v2);
                                }
                            }
                        }
                    }
                }
            }
            prop_assert!((mixed - direct).abs() < TOL, "player {:?}: {} vs {}", player, mixed, direct);
        }
    }

    #[test]
    fn best_response_never_loses_to_a_pure_action(
        prior in masses(2),
        costs in prop::collection::vec(0.0f64..2.0, 24),
        rows in policy_rows(),
        rows_1 in prop::collection::vec(masses(2), 4),
        rows_2 in prop::collection::vec(masses(2), 4),
    ) {
        let (_, _, game) = binary_game(prior, costs, rows);
        let strategies = DecoderStrategy::from_rows(&game, rows_1, rows_2).unwrap();
        for (player, n_own) in [(PlayerId::One, game.n_v1()), (PlayerId::Two, game.n_v2())] {
            let br = game.best_response(player, &strategies);
            let types = match player {
                PlayerId::One => game.types_1(),
                PlayerId::Two => game.types_2(),
            };
            let stride = match player {
                PlayerId::One => game.cards().w1,
                PlayerId::Two => game.cards().w2,
            };
            for &(w0, wi) in types {
                let chosen = br.actions[w0 * stride + wi] as usize;
                let best = game.psi_of_action(player, w0, wi, chosen, &strategies).unwrap();
                for a in 0..n_own {
                    let other = game.psi_of_action(player, w0, wi, a, &strategies).unwrap();
                    prop_assert!(best <= other + TOL);
                }
            }
        }
    }
}

fn pure_profiles(set: &[EqMember]) -> Vec<(Vec<u8>, Vec<u8>)> {
    let mut out: Vec<(Vec<u8>, Vec<u8>)> = set
        .iter()
        .map(|m| match m {
            EqMember::Pure { actions_1, actions_2 } => (actions_1.clone(), actions_2.clone()),
            EqMember::Mixed(_) => panic!("enumeration returns pure members"),
        })
        .collect();
    out.sort();
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn enumerated_equilibria_survive_affine_cost_rescaling(
        prior in masses(2),
        costs in prop::collection::vec(0.0f64..2.0, 24),
        rows in policy_rows(),
        scale in 0.25f64..4.0,
        shift in -1.0f64..1.0,
    ) {
        let (_, policy, game) = binary_game(prior.clone(), costs.clone(), rows.clone());
        let base = enumerate_pure_bne(&game, 1e7).unwrap();

        let mut rescaled = costs.clone();
        for x in rescaled[8..].iter_mut() {
            *x = scale * *x + shift;
        }
        let instance_r = instance_from((2, 2, 2), prior, rescaled, [2.0, 1.0, 1.0]);
        let game_r = build_single_letter_game(&instance_r, &policy).unwrap();
        let other = enumerate_pure_bne(&game_r, 1e7).unwrap();

        prop_assert_eq!(pure_profiles(&base.members), pure_profiles(&other.members));
    }

    #[test]
    fn every_enumerated_member_is_deviation_proof(
        prior in masses(2),
        costs in prop::collection::vec(0.0f64..2.0, 24),
        rows in policy_rows(),
    ) {
        let (_, _, game) = binary_game(prior, costs, rows);
        let set = enumerate_pure_bne(&game, 1e7).unwrap();
        prop_assert_eq!(set.epsilon, 0.0);
        for member in &set.members {
            let s = member.to_strategy(&game).unwrap();
            prop_assert!(deviation_gain(&game, &s) <= set.epsilon + TOL);
        }
    }

    #[test]
    fn converged_best_response_iteration_lands_in_the_enumerated_set(
        prior in masses(2),
        costs in prop::collection::vec(0.0f64..2.0, 24),
        rows in policy_rows(),
    ) {
        let (_, _, game) = binary_game(prior, costs, rows);
        let ibr = iterated_best_response(&game, 200);
        if !ibr.converged || ibr.members.is_empty() {
            return Ok(());
        }
        let enumerated = pure_profiles(&enumerate_pure_bne(&game, 1e7).unwrap().members);
        for profile in pure_profiles(&ibr.members) {
            prop_assert!(enumerated.contains(&profile));
        }
    }
}

#[test]
fn raising_rates_never_raises_the_optimal_value() {
    let costs: Vec<f64> = vec![
        0.0, 1.0, 1.0, 2.0, 2.0, 1.0, 1.0, 0.0, // encoder
        0.0, 0.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0, // decoder 1
        0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 0.0, // decoder 2
    ];
    let cfg = SolveConfig {
        restarts: 2,
        local_steps: 6,
        grid_resolution: 3,
        ..SolveConfig::default()
    };
    let ladder = [[0.2, 0.1, 0.1], [0.6, 0.3, 0.3], [1.0, 1.0, 1.0]];
    let mut last = f64::INFINITY;
    for rates in ladder {
        let instance = instance_from((2, 2, 2), vec![0.5, 0.5], costs.clone(), rates);
        let value = solve_gamma_star(&instance, &cfg).unwrap().value;
        assert!(
            value <= last + 0.05,
            "value {value} at rates {rates:?} exceeds {last} from the smaller region"
        );
        last = value;
    }
}
