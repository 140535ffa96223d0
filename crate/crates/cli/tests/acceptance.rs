//! The twelve acceptance criteria. Each prints one PASS or FAIL line with
//! its measurements and runtime; the test fails if any criterion fails.

use std::process::Command;
use std::time::{Duration, Instant};

use rand::Rng;

use cce_core::aggregation::{
    predict, tv_distance, update, AggregatorState, ExpertSet, TableExperts,
};
use cce_core::constructions::{build_kibitzer_mg, build_repeated_mg_with_horizon};
use cce_core::equilibria::{
    best_response_general_exact, best_response_markov_enumerated, cce_gap, regret_of_sequence,
    DeviationMode, ValueOptions,
};
use cce_core::extraction::{
    algorithm1_extract, algorithm2_delta, algorithm2_extract, algorithm2_k,
    build_deviation_policy_repeated, expected_kibitzer_rewards, repeated_witness_bound,
    sample_rhat, Algorithm2Params,
};
use cce_core::factory::{
    adversarial_never_nash_sequence, matching_pennies, rock_paper_scissors, separation_fixture,
    stage_nash_certificate, BuiltGame,
};
use cce_core::games::profile_from_index;
use cce_core::policies::{
    enumerate_trajectory_distribution, max_distribution_difference, pe_embed, pf_inverse,
    ENUMERATION_BUDGET,
};
use cce_core::random::{
    random_general_policy, random_markov_game, random_markov_policy, random_normal_form,
};
use cce_core::rng::stream;
use cce_core::{DistributionalPolicy, Exact, MarkovPolicy, PolicyProgram, ProductPolicy};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn random_experts<R: Rng>(k: usize, y: usize, contexts: usize, rng: &mut R) -> TableExperts {
    let tables = (0..k)
        .map(|_| {
            (0..contexts)
                .map(|_| {
                    let w: Vec<f64> = (0..y).map(|_| rng.random_range(0.05..1.0)).collect();
                    let z: f64 = w.iter().sum();
                    w.iter().map(|x| x / z).collect()
                })
                .collect()
        })
        .collect();
    TableExperts::new(y, tables).unwrap()
}

const EXPERT_COUNTS: [usize; 3] = [2, 8, 16];
const ROUNDS: [usize; 2] = [16, 256];

fn criterion_1() -> Outcome {
    let mut worst = f64::MIN;
    let mut runs = 0;
    for run in 0..500u64 {
        let mut rng = stream(1, run);
        let k = EXPERT_COUNTS[run as usize % 3];
        let t = ROUNDS[(run as usize / 3) % 2];
        let y = rng.random_range(2..=4);
        let experts = random_experts(k, y, 4, &mut rng);
        let adversarial = run % 2 == 0;
        let star = rng.random_range(0..k);
        let mut state = AggregatorState::new(k);
        for _ in 0..t {
            let ctx = rng.random_range(0..4);
            let outcome = if adversarial {
                let q = predict(&state, &experts, &ctx).unwrap();
                (0..y).min_by(|&a, &b| q[a].total_cmp(&q[b])).unwrap()
            } else {
                cce_core::rng::sample_index(&experts.forecast(star, &ctx).unwrap(), &mut rng)
            };
            state = update(&state, &experts, &ctx, outcome).unwrap();
        }
        worst = worst.max(state.regret() - (k as f64).ln());
        runs += 1;
    }
    outcome(
        worst <= 1e-9,
        format!("{runs} runs, max(regret - ln|I|) = {worst:.3e}"),
    )
}

fn criterion_2() -> Outcome {
    let mut lines = Vec::new();
    let mut pass = true;
    for (ci, &k) in EXPERT_COUNTS.iter().enumerate() {
        for (ti, &t) in ROUNDS.iter().enumerate() {
            let mut total = 0.0;
            for run in 0..200u64 {
                let mut rng = stream(2, (ci * 2 + ti) as u64 * 1000 + run);
                let experts = random_experts(k, 3, 4, &mut rng);
                let star = rng.random_range(0..k);
                let mut state = AggregatorState::new(k);
                let mut tv = 0.0;
                for _ in 0..t {
                    let ctx = rng.random_range(0..4);
                    let truth = experts.forecast(star, &ctx).unwrap();
                    tv += tv_distance(&predict(&state, &experts, &ctx).unwrap(), &truth);
                    let y = cce_core::rng::sample_index(&truth, &mut rng);
                    state = update(&state, &experts, &ctx, y).unwrap();
                }
                total += tv;
            }
            let mean = total / 200.0;
            let bound = (t as f64 * (k as f64).ln()).sqrt();
            pass &= mean <= bound;
            lines.push(format!("|I|={k} T={t}: {mean:.3} <= {bound:.3}"));
        }
    }
    outcome(pass, lines.join(", "))
}

fn criterion_3() -> Outcome {
    let mut pass = true;
    let mut lines = Vec::new();
    for (name, g) in [
        ("matching pennies", matching_pennies()),
        ("rock-paper-scissors", rock_paper_scissors()),
    ] {
        let built = BuiltGame::build(&g, cce_core::ConstructionKind::Repeated, 0.1).unwrap();
        let cert = stage_nash_certificate(&g, &built, 0.0).unwrap();
        let gap = algorithm1_extract(&g, &cert, 0.05).unwrap().max_gap();
        pass &= gap.is_some_and(|x| x <= 0.05);
        lines.push(format!("{name}: gap {gap:?}"));
    }
    outcome(pass, lines.join(", "))
}

fn criterion_4() -> Outcome {
    let g = matching_pennies();
    let mg = build_repeated_mg_with_horizon(&g, 16).unwrap();
    let cert = adversarial_never_nash_sequence(&g, &mg, 4).unwrap();
    let deviations: Vec<PolicyProgram> = (0..2)
        .map(|j| build_deviation_policy_repeated(&g, &cert, j).unwrap())
        .collect();
    let mix = cert.mixture();
    let exact = cce_gap(
        &mg,
        &mix,
        &DeviationMode::Witness {
            deviations: deviations.clone(),
            options: ValueOptions::default(),
        },
    )
    .unwrap();
    let mc = cce_gap(
        &mg,
        &mix,
        &DeviationMode::Witness {
            deviations,
            options: ValueOptions {
                budget: 0,
                samples: 20_000,
                seed: 4,
            },
        },
    )
    .unwrap();
    let bound = repeated_witness_bound(1.0, 4, 16);
    let exact_sum = exact.total_gain();
    let mc_sum = mc.total_gain();
    let stderr = mc.stderr.clone().unwrap_or_default();
    let combined = stderr.iter().map(|s| s * s).sum::<f64>().sqrt();
    let fails = !algorithm1_extract(&g, &cert, 0.2).unwrap().is_found();
    outcome(
        exact_sum >= bound && mc_sum > 0.25 && combined < 0.01 && fails,
        format!(
            "exact witness gain {exact_sum:.4}, Monte Carlo {mc_sum:.4} (stderr {combined:.4}), bound {bound:.4}, algorithm 1 fails: {fails}"
        ),
    )
}

fn criterion_5() -> Outcome {
    let g = matching_pennies();
    let eps = 0.01;
    let kib = build_kibitzer_mg(&g, eps).unwrap();
    let cert = stage_nash_certificate(&g, &BuiltGame::Kibitzer(kib.clone()), 0.0).unwrap();
    let mut found = 0;
    let mut worst = 0.0f64;
    for rep in 0..100u64 {
        let run = algorithm2_extract(
            &g,
            &kib,
            &cert,
            Algorithm2Params::new(eps),
            &mut stream(5, rep),
        )
        .unwrap();
        if let Some(gap) = run.outcome.max_gap() {
            found += 1;
            worst = worst.max(gap);
        }
    }
    let k = algorithm2_k(2, 2, eps, kib.layout.horizon);
    outcome(
        found as f64 / 100.0 >= 1.0 / 3.0 && worst <= 16.0 * 3.0 * eps,
        format!(
            "K={k}, success {found}/100, max gap {worst:.4} (<= 0.48; measured <= 0.05: {})",
            worst <= 0.05
        ),
    )
}

fn criterion_6() -> Outcome {
    let g = matching_pennies();
    let mut pass = true;
    let mut lines = Vec::new();
    for eps in [0.1, 0.01] {
        let kib = build_kibitzer_mg(&g, eps).unwrap();
        let h = kib.layout.horizon;
        let k = algorithm2_k(2, 2, eps, h) as u64;
        let delta = algorithm2_delta(eps, h);
        let qhat = vec![vec![0.3, 0.7], vec![0.6, 0.4]];
        let expected = expected_kibitzer_rewards(&kib, 0, 0, &qhat);
        let mut rng = stream(6, (eps * 1000.0) as u64);
        let mut exceed = 0;
        for _ in 0..1000 {
            let rhat = sample_rhat(&kib, 0, 0, &qhat, k, &mut rng);
            let dev = rhat
                .iter()
                .zip(&expected)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            if dev > eps / h as f64 {
                exceed += 1;
            }
        }
        let freq = exceed as f64 / 1000.0;
        pass &= freq <= delta;
        lines.push(format!("eps={eps} K={k}: {freq} <= delta {delta:.5}"));
    }
    outcome(pass, lines.join(", "))
}

fn criterion_7() -> Outcome {
    let mut worst = f64::MAX;
    for trial in 0..500u64 {
        let mut rng = stream(7, trial);
        let n0 = if trial % 2 == 0 { 2 } else { 3 };
        let g = random_normal_form(2, n0, 6, &mut rng);
        let kib = build_kibitzer_mg(&g, 0.1).unwrap();
        let q: Vec<Vec<f64>> = (0..2)
            .map(|_| {
                let w: Vec<f64> = (0..n0).map(|_| rng.random::<f64>()).collect();
                let z: f64 = w.iter().sum();
                w.iter().map(|x| x / z).collect()
            })
            .collect();
        let best = expected_kibitzer_rewards(&kib, 0, 0, &q)
            .into_iter()
            .fold(f64::MIN, f64::max);
        worst = worst.min(best);
    }
    outcome(
        worst >= -1e-12,
        format!("min over trials of max kibitzer reward {worst:.3e}"),
    )
}

fn criterion_8() -> Outcome {
    let mut worst = 0.0f64;
    for trial in 0..100u64 {
        let mut rng = stream(8, trial);
        let (s, h) = if trial % 4 == 0 {
            (1, 3)
        } else {
            (rng.random_range(1..=2), rng.random_range(1..=2))
        };
        let counts = vec![rng.random_range(1..=2), rng.random_range(1..=2)];
        let game = random_markov_game(s, h, counts.clone(), &mut rng);
        let sigma = random_general_policy(counts[0], 1000 + trial);
        let other = random_general_policy(counts[1], 2000 + trial);
        let embedded = pe_embed(&game, 0, &sigma, ENUMERATION_BUDGET).unwrap();
        let direct = DistributionalPolicy::single(ProductPolicy(vec![sigma, other.clone()]));
        let as_mixture = |mix: &[(f64, cce_core::DeterministicPolicy)]| {
            DistributionalPolicy::new(
                mix.iter()
                    .map(|(w, pi)| {
                        (
                            *w,
                            ProductPolicy(vec![
                                PolicyProgram::deterministic(pi.clone()),
                                other.clone(),
                            ]),
                        )
                    })
                    .collect(),
            )
            .unwrap()
        };
        let a = enumerate_trajectory_distribution(&game, &direct, ENUMERATION_BUDGET).unwrap();
        let b =
            enumerate_trajectory_distribution(&game, &as_mixture(&embedded), ENUMERATION_BUDGET)
                .unwrap();
        worst = worst.max(max_distribution_difference(&a, &b));
        // A mixture over deterministic policies, then PE of its PF image.
        let mixture: Vec<(f64, cce_core::DeterministicPolicy)> = embedded
            .iter()
            .take(3)
            .map(|(_, pi)| pi.clone())
            .chain(
                pe_embed(
                    &game,
                    0,
                    &random_general_policy(counts[0], 3000 + trial),
                    ENUMERATION_BUDGET,
                )
                .unwrap()
                .into_iter()
                .take(2)
                .map(|(_, p)| p),
            )
            .enumerate()
            .map(|(i, pi)| ((i + 1) as f64, pi))
            .collect();
        let total: f64 = mixture.iter().map(|(w, _)| w).sum();
        let mixture: Vec<_> = mixture.into_iter().map(|(w, pi)| (w / total, pi)).collect();
        let c = enumerate_trajectory_distribution(&game, &as_mixture(&mixture), ENUMERATION_BUDGET)
            .unwrap();
        let round_trip = pe_embed(
            &game,
            0,
            &pf_inverse(counts[0], mixture),
            ENUMERATION_BUDGET,
        )
        .unwrap();
        let d =
            enumerate_trajectory_distribution(&game, &as_mixture(&round_trip), ENUMERATION_BUDGET)
                .unwrap();
        worst = worst.max(max_distribution_difference(&c, &d));
    }
    outcome(
        worst <= 1e-12,
        format!("100 instances, max per-trajectory difference {worst:.3e}"),
    )
}

fn criterion_9() -> Outcome {
    let fx = separation_fixture();
    let uniform = PolicyProgram::markov(MarkovPolicy::uniform(1, 2, 2));
    let mix = DistributionalPolicy::single(ProductPolicy(vec![uniform, fx.copy.clone()]));
    let (_, markov) = best_response_markov_enumerated(&fx.game, &mix, 0, 1000).unwrap();
    let (_, general) = best_response_general_exact(&fx.game, &mix, 0, 1000).unwrap();
    outcome(
        (markov - 0.5).abs() <= 1e-12 && (general - 0.75).abs() <= 1e-12,
        format!("best Markov deviation {markov}, best general deviation {general}"),
    )
}

fn criterion_10() -> Outcome {
    let mut agree = 0;
    let mut max_diff = 0.0f64;
    let mode = DeviationMode::Exact {
        budget: ENUMERATION_BUDGET,
    };
    for trial in 0..50u64 {
        let mut rng = stream(10, trial);
        let s = rng.random_range(1..=2);
        let h = rng.random_range(1..=2);
        let game = random_markov_game(s, h, vec![2, 2], &mut rng);
        let t = rng.random_range(1..=3);
        let seq: Vec<ProductPolicy> = (0..t)
            .map(|_| {
                ProductPolicy(vec![
                    PolicyProgram::markov(random_markov_policy(s, h, 2, &mut rng)),
                    PolicyProgram::markov(random_markov_policy(s, h, 2, &mut rng)),
                ])
            })
            .collect();
        let regrets = regret_of_sequence(&game, &seq, &mode).unwrap();
        let gap = cce_gap(&game, &DistributionalPolicy::uniform(seq).unwrap(), &mode).unwrap();
        for (r, g) in regrets.iter().zip(&gap.gains) {
            max_diff = max_diff.max((r / t as f64 - g).abs());
        }
        let top = gap.max_gain();
        let ok = [top - 1e-6, top + 1e-6, top + rng.random_range(-0.1..0.1)]
            .iter()
            .all(|&eps| {
                let no_regret = regrets.iter().all(|r| *r <= eps * t as f64 + 1e-9);
                let is_cce = top <= eps + 1e-9;
                no_regret == is_cce
            });
        agree += ok as usize;
    }
    outcome(
        agree == 50 && max_diff <= 1e-9,
        format!("{agree}/50 instances agree, max |Reg/T - gap| {max_diff:.3e}"),
    )
}

fn criterion_11() -> Outcome {
    let mut pass = true;
    let mut checked = 0;
    for m in [2, 3] {
        let mut rng = stream(11, m as u64);
        let g = random_normal_form(m, 2, 4, &mut rng);
        let eps = 0.1;
        let kib = build_kibitzer_mg(&g, eps).unwrap();
        let l = &kib.layout;
        let h = Exact::ratio(1, l.horizon as i64);
        let sum_bound = eps * eps * (m + 1) as f64 / l.horizon as f64;
        let counts = l.action_counts();
        let total: usize = counts.iter().product();
        let mut codes = std::collections::BTreeSet::new();
        for idx in 0..total {
            let p = profile_from_index(&counts, idx);
            let joint = kib.game.joint_index(&p).unwrap();
            let enc = l.enc(&p).unwrap();
            pass &= l.decode_enc(&enc).unwrap() == p;
            codes.insert(enc);
            let rewards = kib.game.rewards_at(0, 0, joint);
            for r in &rewards {
                pass &= r.abs() <= h && r.is_dyadic();
                pass &= l.decode_reward(r).unwrap() == p;
            }
            pass &= Exact::sum(&rewards).to_f64().abs() <= sum_bound;
            checked += 1;
        }
        pass &= codes.len() == total;
    }
    outcome(
        pass,
        format!("{checked} profiles over (m=2, n0=2) and (m=3, n0=2)"),
    )
}

fn criterion_12() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let run = |sub: &str| {
        let out = dir.path().join(sub);
        let status = Command::new(env!("CARGO_BIN_EXE_cce-lab"))
            .args([
                "extract",
                "--game",
                "matching-pennies",
                "--kind",
                "kibitzer",
                "--eps",
                "0.1",
            ])
            .args([
                "--producer",
                "hedge",
                "--T",
                "6",
                "--seed",
                "12",
                "--reps",
                "25",
            ])
            .arg("--out")
            .arg(&out)
            .output()
            .unwrap();
        assert!(status.status.code().is_some_and(|c| c <= 1), "{status:?}");
        std::fs::read(out.join("extract.csv")).unwrap()
    };
    let (a, b) = (run("a"), run("b"));
    outcome(
        a == b && !a.is_empty(),
        format!("{} bytes, identical: {}", a.len(), a == b),
    )
}

#[test]
fn acceptance() {
    let criteria: [(fn() -> Outcome, Duration); 12] = [
        (criterion_1, Duration::from_secs(5)),
        (criterion_2, Duration::from_secs(10)),
        (criterion_3, Duration::from_secs(1)),
        (criterion_4, Duration::from_secs(30)),
        (criterion_5, Duration::from_secs(120)),
        (criterion_6, Duration::from_secs(30)),
        (criterion_7, Duration::from_secs(5)),
        (criterion_8, Duration::from_secs(30)),
        (criterion_9, Duration::from_secs(1)),
        (criterion_10, Duration::from_secs(60)),
        (criterion_11, Duration::from_secs(1)),
        (criterion_12, Duration::from_secs(10)),
    ];
    let mut failed = Vec::new();
    for (i, (check, limit)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let pass = result.pass && elapsed < *limit;
        println!(
            "criterion {}: {} ({}) [{:.2}s of {}s]",
            i + 1,
            if pass { "PASS" } else { "FAIL" },
            result.detail,
            elapsed.as_secs_f64(),
            limit.as_secs()
        );
        if !pass {
            failed.push(i + 1);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
