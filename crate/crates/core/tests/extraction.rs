use std::collections::BTreeMap;

use cce_core::aggregation::{predict, run_stream, TableExperts};
use cce_core::constructions::{
    build_alternative_mg, build_kibitzer_mg, build_repeated_mg_with_horizon, repeated_state,
    KibitzerConstruction,
};
use cce_core::equilibria::{value_exact, value_markov_product};
use cce_core::extraction::{
    algorithm2_delta, algorithm2_extract, build_deviation_policy_repeated,
    build_kibitzer_deviation, compute_qhat, repeated_witness_bound, Algorithm2Params, Revealer,
};
use cce_core::factory::{
    adversarial_never_nash_sequence, hedge_selfplay_certificate, matching_pennies, BuiltGame,
};
use cce_core::policies::{
    point_mass, sample_mixture_trajectory, sample_trajectory, HistoryStep, ENUMERATION_BUDGET,
};
use cce_core::random::{random_general_policy, random_normal_form};
use cce_core::rng::stream;
use cce_core::{
    Exact, MarkovPolicy, PolicyProgram, ProductPolicy, Provenance, SparseCceCertificate,
};

fn member(kib: &KibitzerConstruction, rows: [Vec<f64>; 3]) -> ProductPolicy {
    let (s, h) = (kib.game.num_states(), kib.game.horizon());
    ProductPolicy(
        rows.into_iter()
            .map(|r| PolicyProgram::markov(MarkovPolicy::stationary(s, h, r).unwrap()))
            .collect(),
    )
}

fn two_member_certificate(kib: &KibitzerConstruction) -> SparseCceCertificate {
    SparseCceCertificate::new(
        vec![
            member(kib, [vec![0.75, 0.25], vec![0.5, 0.5], point_mass(4, 0)]),
            member(kib, [vec![0.25, 0.75], vec![0.25, 0.75], point_mass(4, 3)]),
        ],
        Some(0.25),
        Provenance::LearnerProduced,
        None,
    )
    .unwrap()
}

#[test]
fn simulated_episode_matches_the_deviation_policy() {
    let kib = build_kibitzer_mg(&matching_pennies(), 0.25).unwrap();
    let cert = two_member_certificate(&kib);
    let k = 4;
    let dev = build_kibitzer_deviation(&kib, &cert, 2, k, 10_000).unwrap();
    let mix = cert.mixture().with_deviation(2, &dev);
    let params = Algorithm2Params {
        eps: 0.25,
        k: Some(k),
        threshold: None,
        full_episode: true,
    };
    let n = 100_000u64;
    let (mut simulated, mut direct) = (BTreeMap::new(), BTreeMap::new());
    let mut rng_a = stream(21, 0);
    let mut rng_b = stream(22, 0);
    for _ in 0..n {
        let run = algorithm2_extract(&matching_pennies(), &kib, &cert, params, &mut rng_a).unwrap();
        *simulated.entry(run.trajectory).or_insert(0u64) += 1;
        let (_, t) = sample_mixture_trajectory(&kib.game, &mix, &mut rng_b).unwrap();
        *direct.entry(t).or_insert(0u64) += 1;
    }
    let tol = 4.0 / (n as f64).sqrt();
    for key in simulated.keys().chain(direct.keys()) {
        let a = simulated.get(key).copied().unwrap_or(0) as f64 / n as f64;
        let b = direct.get(key).copied().unwrap_or(0) as f64 / n as f64;
        assert!((a - b).abs() <= tol, "{a} vs {b}");
    }
}

#[test]
fn threshold_passes_are_sound() {
    let g = matching_pennies();
    let kib = build_kibitzer_mg(&g, 0.1).unwrap();
    let cert = hedge_selfplay_certificate(&g, &BuiltGame::Kibitzer(kib.clone()), 8, None).unwrap();
    let bound = 16.0 * 3.0 * 0.1;
    let runs = 200;
    let mut unsound = 0;
    for seed in 0..runs {
        let run = algorithm2_extract(
            &g,
            &kib,
            &cert,
            Algorithm2Params::new(0.1),
            &mut stream(seed, 0),
        )
        .unwrap();
        assert!(run.queries.is_consistent());
        if run.outcome.max_gap().is_some_and(|gap| gap > bound) {
            unsound += 1;
        }
    }
    let allowed = kib.layout.horizon as f64 * algorithm2_delta(0.1, kib.layout.horizon);
    assert!(unsound as f64 / runs as f64 <= allowed);
}

#[test]
fn qhat_matches_the_aggregation_module() {
    let kib = build_kibitzer_mg(&matching_pennies(), 0.25).unwrap();
    let cert = two_member_certificate(&kib);
    let mut rng = stream(23, 0);
    for _ in 0..20 {
        let (_, t) = sample_mixture_trajectory(&kib.game, &cert.mixture(), &mut rng).unwrap();
        for player in 0..2 {
            let tables: Vec<Vec<Vec<f64>>> = cert
                .members
                .iter()
                .map(|m| {
                    let p = m.0[player].as_markov().unwrap();
                    (0..=kib.game.horizon())
                        .map(|h| p.row(h.min(p.horizon() - 1), 0).to_vec())
                        .collect()
                })
                .collect();
            let experts = TableExperts::new(2, tables).unwrap();
            let stream: Vec<(usize, usize)> = t.steps[..1]
                .iter()
                .enumerate()
                .map(|(g, s)| (g, s.actions[player]))
                .collect();
            let run = run_stream(&experts, &stream).unwrap();
            let expected = predict(&run.state, &experts, &1).unwrap();
            let q = compute_qhat(&cert, player, &t.steps[..1], 0).unwrap();
            assert_eq!(q.qhat, expected);
            assert_eq!(q.posterior, run.state.posterior());
        }
    }
}

#[test]
fn repeated_deviation_identifies_the_member() {
    let g = matching_pennies();
    let mg = build_repeated_mg_with_horizon(&g, 4).unwrap();
    let pure = |a: usize| {
        PolicyProgram::markov(
            MarkovPolicy::stationary(mg.num_states(), 4, point_mass(2, a)).unwrap(),
        )
    };
    let cert = SparseCceCertificate::new(
        vec![
            ProductPolicy(vec![pure(0), pure(0)]),
            ProductPolicy(vec![pure(0), pure(1)]),
        ],
        Some(0.0),
        Provenance::AdversarialFixture,
        None,
    )
    .unwrap();
    let dev = build_deviation_policy_repeated(&g, &cert, 0).unwrap();
    assert_eq!(dev.distribution(&[], 0), vec![1.0, 0.0]);
    let zero = Exact::zero();
    let history = [
        HistoryStep {
            state: 0,
            action: 0,
            reward: zero.clone(),
        },
        HistoryStep {
            state: repeated_state(2, 0, 1),
            action: 0,
            reward: zero,
        },
    ];
    // The opponent played 1, so only the second member remains and the
    // deviator matches it.
    assert_eq!(dev.distribution(&history, 0), vec![0.0, 1.0]);
    let mix = cert.mixture();
    let v = value_exact(&mg, &mix.with_deviation(0, &dev), ENUMERATION_BUDGET).unwrap()[0];
    let base = value_exact(&mg, &mix, ENUMERATION_BUDGET).unwrap()[0];
    // Step 0 earns 1/8 in expectation, step 2 earns 1/4.
    assert_eq!(v, 0.375);
    assert_eq!(base, 0.25);
}

#[test]
fn adversarial_witness_gain_meets_the_bound() {
    let g = matching_pennies();
    let mg = build_repeated_mg_with_horizon(&g, 16).unwrap();
    let cert = adversarial_never_nash_sequence(&g, &mg, 4).unwrap();
    let mix = cert.mixture();
    let base = value_exact(&mg, &mix, ENUMERATION_BUDGET).unwrap();
    let gain: f64 = (0..2)
        .map(|j| {
            let dev = build_deviation_policy_repeated(&g, &cert, j).unwrap();
            value_exact(&mg, &mix.with_deviation(j, &dev), ENUMERATION_BUDGET).unwrap()[j] - base[j]
        })
        .sum();
    assert!(gain >= repeated_witness_bound(1.0, 4, 16));
    assert!(gain > 0.25);
}

#[test]
fn main_player_deviations_are_not_too_negative() {
    let g = matching_pennies();
    let kib = build_kibitzer_mg(&g, 0.25).unwrap();
    let cert = hedge_selfplay_certificate(&g, &BuiltGame::Kibitzer(kib.clone()), 4, None).unwrap();
    let mix = cert.mixture();
    let bound = -2.0 * ((4f64).ln() / kib.layout.horizon as f64).sqrt();
    for i in 0..2 {
        let dev = build_kibitzer_deviation(&kib, &cert, i, 4, 10_000).unwrap();
        let v =
            value_exact(&kib.game, &mix.with_deviation(i, &dev), ENUMERATION_BUDGET).unwrap()[i];
        assert!(v >= bound, "player {i}: {v} < {bound}");
    }
}

#[test]
fn single_member_main_deviation_is_the_stage_best_response() {
    let kib = build_kibitzer_mg(&matching_pennies(), 0.25).unwrap();
    let cert = SparseCceCertificate::new(
        vec![member(
            &kib,
            [vec![0.5, 0.5], vec![0.25, 0.75], point_mass(4, 0)],
        )],
        Some(0.25),
        Provenance::LearnerProduced,
        None,
    )
    .unwrap();
    let dev = build_kibitzer_deviation(&kib, &cert, 0, 4, 10_000).unwrap();
    let mut best = MarkovPolicy::stationary(1, kib.game.horizon(), point_mass(2, 1)).unwrap();
    let markov: Vec<MarkovPolicy> = cert.members[0]
        .markov_members()
        .unwrap()
        .into_iter()
        .cloned()
        .collect();
    let v_dev = value_exact(&kib.game, &cert.mixture().with_deviation(0, &dev), 1000).unwrap()[0];
    let mut others = markov.clone();
    others[0] = best.clone();
    let v_one = value_markov_product(&kib.game, &others).unwrap().values[0];
    best = MarkovPolicy::stationary(1, kib.game.horizon(), point_mass(2, 0)).unwrap();
    others[0] = best;
    let v_zero = value_markov_product(&kib.game, &others).unwrap().values[0];
    assert!((v_dev - v_one.max(v_zero)).abs() < 1e-12);
}

#[test]
fn alternative_states_reveal_the_joint_history() {
    let mut rng = stream(24, 0);
    let g = random_normal_form(2, 2, 2, &mut rng);
    let alt = build_alternative_mg(&g, 0.25, 1 << 12).unwrap();
    let revealer = Revealer::States(alt.action_counts.clone());
    let policy = ProductPolicy(
        (0..3)
            .map(|i| random_general_policy(alt.action_counts[i], i as u64))
            .collect(),
    );
    for seed in 0..20 {
        let t = sample_trajectory(&alt.game, &policy, &mut stream(seed, 1)).unwrap();
        let h = t.steps.len();
        let own = t.own_history(0);
        let last = &t.steps[h - 1];
        let next = alt.state_of(&last.actions).unwrap();
        assert_eq!(
            revealer.joint_history(&alt.game, &own, next).unwrap(),
            t.steps
        );
    }
}

#[test]
fn reward_bits_reveal_the_joint_history() {
    let kib = build_kibitzer_mg(&matching_pennies(), 0.25).unwrap();
    let revealer = Revealer::RewardBits(kib.layout.clone());
    let policy = ProductPolicy(vec![
        random_general_policy(2, 1),
        random_general_policy(2, 2),
        random_general_policy(4, 3),
    ]);
    for seed in 0..20 {
        let t = sample_trajectory(&kib.game, &policy, &mut stream(seed, 2)).unwrap();
        for player in 0..3 {
            assert_eq!(
                revealer
                    .joint_history(&kib.game, &t.own_history(player), 0)
                    .unwrap(),
                t.steps
            );
        }
    }
}

#[test]
fn transcripts_are_reproducible() {
    let g = matching_pennies();
    let kib = build_kibitzer_mg(&g, 0.1).unwrap();
    let cert = hedge_selfplay_certificate(&g, &BuiltGame::Kibitzer(kib.clone()), 5, None).unwrap();
    let params = Algorithm2Params {
        full_episode: true,
        ..Algorithm2Params::new(0.1)
    };
    let a = algorithm2_extract(&g, &kib, &cert, params, &mut stream(9, 3)).unwrap();
    let b = algorithm2_extract(&g, &kib, &cert, params, &mut stream(9, 3)).unwrap();
    assert_eq!(
        serde_json::to_string(&a).unwrap(),
        serde_json::to_string(&b).unwrap()
    );
    assert_eq!(a.transcript.len(), kib.layout.horizon);
    let per_step = 2 * 3 + 2;
    assert_eq!(
        a.queries.reward_realization + a.queries.generative_simulation,
        per_step * 2
    );
}
