//! Block-simulation checks that exercise the codebook, trace, belief, and
//! converse layers together on instances small enough to cross-validate.

use proptest::prelude::*;

use graywyner_core::game::{build_single_letter_game, DecoderStrategy};
use graywyner_core::model::{
    InformationPolicy, InstanceFile, Policy, PolicyCardinalities, ProblemInstance,
};
use graywyner_core::simulator::{
    converse_check, empirical_belief_divergence, encode, estimate_error_events,
    generate_codebook, sample_traces, SimMode, TypicalityConfig,
};

fn instance(rates: [f64; 3]) -> ProblemInstance {
    InstanceFile {
        alphabets: vec![
            vec!["0".into(), "1".into()],
            vec!["0".into(), "1".into()],
            vec!["0".into(), "1".into()],
        ],
        prior: vec![0.4, 0.6],
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
    }
    .build()
    .unwrap()
}

fn noisy_policy(inst: &ProblemInstance) -> Policy {
    let cards = PolicyCardinalities::new(2, 2, 2).unwrap();
    Policy::Factorized(
        InformationPolicy::from_rows(
            inst.source_alphabet(),
            cards,
            vec![vec![0.85, 0.15], vec![0.15, 0.85]],
            vec![vec![0.7, 0.3], vec![0.5, 0.5], vec![0.5, 0.5], vec![0.3, 0.7]],
            vec![vec![0.6, 0.4], vec![0.5, 0.5], vec![0.5, 0.5], vec![0.4, 0.6]],
        )
        .unwrap(),
    )
}

#[test]
fn auto_mode_matches_the_explicit_path_when_codebooks_fit() {
    let inst = instance([1.0, 0.5, 0.5]);
    let policy = noisy_policy(&inst);
    let config = TypicalityConfig::new(0.3, 0.1).unwrap();
    let auto = estimate_error_events(&inst, &policy, &config, 12, 300, 11, SimMode::Auto).unwrap();
    let explicit =
        estimate_error_events(&inst, &policy, &config, 12, 300, 11, SimMode::Explicit).unwrap();
    assert_eq!(auto.mode, "explicit");
    assert_eq!(auto.p_f0.to_bits(), explicit.p_f0.to_bits());
    assert_eq!(
        auto.p_f1_given_not_f0.to_bits(),
        explicit.p_f1_given_not_f0.to_bits()
    );
    assert_eq!(
        auto.p_f2_given_not_f0.to_bits(),
        explicit.p_f2_given_not_f0.to_bits()
    );
    assert_eq!(auto.conditional_trials, explicit.conditional_trials);
}

#[test]
fn trace_sampling_is_seed_deterministic() {
    let inst = instance([1.0, 0.5, 0.5]);
    let policy = noisy_policy(&inst);
    let config = TypicalityConfig::new(0.4, 0.1).unwrap();
    let cb = generate_codebook(&inst, &policy, &config, 10, 4).unwrap();
    let game = build_single_letter_game(&inst, &policy).unwrap();
    let strategies = DecoderStrategy::uniform(&game);

    let a = sample_traces(&cb, &inst, &strategies, &config, 64, 9).unwrap();
    let b = sample_traces(&cb, &inst, &strategies, &config, 64, 9).unwrap();
    let c = sample_traces(&cb, &inst, &strategies, &config, 64, 10).unwrap();
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.u_seq, y.u_seq);
        assert_eq!((x.m0, x.m1, x.m2), (y.m0, y.m1, y.m2));
        assert_eq!(x.v1_seq, y.v1_seq);
        assert_eq!(x.v2_seq, y.v2_seq);
    }
    assert!(
        a.iter().zip(&c).any(|(x, y)| x.u_seq != y.u_seq),
        "independent seeds produced identical source draws"
    );
}

#[test]
fn induced_joint_from_sampled_traces_is_a_distribution() {
    let inst = instance([1.0, 0.5, 0.5]);
    let policy = noisy_policy(&inst);
    let config = TypicalityConfig::new(0.5, 0.1).unwrap();
    let cb = generate_codebook(&inst, &policy, &config, 6, 2).unwrap();
    let game = build_single_letter_game(&inst, &policy).unwrap();
    let strategies = DecoderStrategy::uniform(&game);
    let traces = sample_traces(&cb, &inst, &strategies, &config, 200, 21).unwrap();

    let report = converse_check(&inst, &cb, &traces).unwrap();
    let mass = report.induced_joint.mass();
    assert!(mass.iter().all(|&x| x >= 0.0));
    let total: f64 = mass.iter().sum();
    assert!((total - 1.0).abs() < 1e-12, "induced joint mass {total}");
    assert!(report.cost_identity_residual < 1e-9);
    assert!(report.u_marginal_max_dev < 0.2);
}

#[test]
fn belief_divergences_are_nonnegative_in_resampling_mode() {
    let inst = instance([1.0, 0.5, 0.5]);
    let policy = noisy_policy(&inst);
    let config = TypicalityConfig::new(0.3, 0.1).unwrap();
    let cb = generate_codebook(&inst, &policy, &config, 14, 6).unwrap();
    let report = empirical_belief_divergence(&cb, &inst, &config, 400, 13).unwrap();
    assert_eq!(report.mode, "resampling");
    assert!(report.avg_state_kl >= 0.0);
    assert!(report.avg_type_kl_1 >= 0.0);
    assert!(report.avg_type_kl_2 >= 0.0);
    assert!(report.successful_traces > 0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn wide_typicality_radius_never_raises_a_flag(
        u_seq in prop::collection::vec(0u8..2, 10),
        seed in 0u64..32,
    ) {
        let inst = instance([1.0, 0.5, 0.5]);
        let policy = noisy_policy(&inst);
        let config = TypicalityConfig::new(2.0, 0.1).unwrap();
        let cb = generate_codebook(&inst, &policy, &config, 10, seed).unwrap();
        let enc = encode(&cb, &u_seq, &config).unwrap();
        prop_assert!(!enc.f0 && !enc.f1 && !enc.f2);
        prop_assert_eq!((enc.m0, enc.m1, enc.m2), (1, 1, 1));
    }
}
