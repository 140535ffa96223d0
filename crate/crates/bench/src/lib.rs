//! Shared inputs for the benchmarks.

use rand::Rng;

use cce_core::aggregation::TableExperts;
use cce_core::random::{random_general_policy, random_markov_game};
use cce_core::rng::stream;
use cce_core::{DistributionalPolicy, MarkovGame, ProductPolicy};

pub fn experts(k: usize, outcomes: usize, contexts: usize, seed: u64) -> TableExperts {
    let mut rng = stream(seed, 0);
    let tables = (0..k)
        .map(|_| {
            (0..contexts)
                .map(|_| {
                    let w: Vec<f64> = (0..outcomes).map(|_| rng.random_range(0.05..1.0)).collect();
                    let z: f64 = w.iter().sum();
                    w.iter().map(|x| x / z).collect()
                })
                .collect()
        })
        .collect();
    TableExperts::new(outcomes, tables).expect("rows are distributions")
}

/// A random game with a mixture of `members` general product policies.
pub fn game_and_mixture(
    states: usize,
    horizon: usize,
    members: usize,
    seed: u64,
) -> (MarkovGame, DistributionalPolicy) {
    let game = random_markov_game(states, horizon, vec![2, 2], &mut stream(seed, 0));
    let profiles = (0..members as u64)
        .map(|t| {
            ProductPolicy(vec![
                random_general_policy(2, seed * 1000 + 2 * t),
                random_general_policy(2, seed * 1000 + 2 * t + 1),
            ])
        })
        .collect();
    (
        game,
        DistributionalPolicy::uniform(profiles).expect("non-empty"),
    )
}
