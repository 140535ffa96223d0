//! Random small instances for property checks and benchmarks. Probabilities
//! and payoffs are dyadic so exact and floating-point paths agree.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use rand::Rng;

use crate::exact::Exact;
use crate::games::{MarkovGame, NormalFormGame};
use crate::policies::{HistoryKey, MarkovPolicy, PolicyProgram};

/// Payoffs drawn uniformly from multiples of `2^-bits` in `[0, 1]`.
pub fn random_normal_form<R: Rng + ?Sized>(
    num_players: usize,
    num_actions: usize,
    bits: u32,
    rng: &mut R,
) -> NormalFormGame {
    let top = 1i64 << bits;
    NormalFormGame::from_fn(num_players, num_actions, bits, |_, _| {
        Exact::dyadic(rng.random_range(0..=top), bits)
    })
    .expect("generated payoffs are in range")
}

/// Distribution with masses that are multiples of `1/2^bits`.
pub fn random_dyadic_row<R: Rng + ?Sized>(len: usize, bits: u32, rng: &mut R) -> Vec<Exact> {
    let total = 1u64 << bits;
    let mut cuts: Vec<u64> = (0..len.saturating_sub(1))
        .map(|_| rng.random_range(0..=total))
        .collect();
    cuts.push(0);
    cuts.push(total);
    cuts.sort_unstable();
    cuts.windows(2)
        .map(|w| Exact::dyadic((w[1] - w[0]) as i64, bits))
        .collect()
}

/// Random transitions and rewards in `[-1/H, 1/H]` on multiples of
/// `1/(4H)`. The initial distribution is random too.
pub fn random_markov_game<R: Rng + ?Sized>(
    num_states: usize,
    horizon: usize,
    action_counts: Vec<usize>,
    rng: &mut R,
) -> MarkovGame {
    let m = action_counts.len();
    let initial = sparse(random_dyadic_row(num_states, 2, rng));
    MarkovGame::from_fn(num_states, horizon, action_counts, initial, |_, _, _| {
        let row = sparse(random_dyadic_row(num_states, 2, rng));
        let rewards = (0..m)
            .map(|_| Exact::ratio(rng.random_range(-4..=4), 4 * horizon as i64))
            .collect();
        (row, rewards)
    })
    .expect("generated game is valid")
}

fn sparse(row: Vec<Exact>) -> Vec<(usize, Exact)> {
    row.into_iter()
        .enumerate()
        .filter(|(_, p)| !p.is_zero())
        .collect()
}

pub fn random_markov_policy<R: Rng + ?Sized>(
    num_states: usize,
    horizon: usize,
    num_actions: usize,
    rng: &mut R,
) -> MarkovPolicy {
    MarkovPolicy::from_fn(num_states, horizon, num_actions, |_, _| {
        random_dyadic_row(num_actions, 3, rng)
            .iter()
            .map(Exact::to_f64)
            .collect()
    })
    .expect("rows are distributions")
}

/// A history-dependent policy whose row at each decision point is a fixed
/// pseudo-random dyadic distribution determined by `seed`.
pub fn random_general_policy(num_actions: usize, seed: u64) -> PolicyProgram {
    PolicyProgram::procedural("random-general", num_actions, 64, move |history, state| {
        let mut hasher = DefaultHasher::new();
        seed.hash(&mut hasher);
        HistoryKey::new(history, state).hash(&mut hasher);
        let mut x = hasher.finish();
        let mut left = 8u64;
        let mut row = vec![0.0; num_actions];
        for slot in row.iter_mut().take(num_actions - 1) {
            let take = x % (left + 1);
            x /= left + 1;
            *slot = take as f64 / 8.0;
            left -= take;
        }
        row[num_actions - 1] = left as f64 / 8.0;
        row
    })
}
