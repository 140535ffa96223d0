//! Values, best responses, regret, CCE gaps and Nash gaps.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::Exact;
use crate::games::{profile_from_index, MarkovGame, NormalFormGame};
use crate::policies::{
    for_each_trajectory, sample_mixture_trajectory, DeterministicPolicy, DistributionalPolicy,
    HistoryKey, HistoryStep, MarkovPolicy, PolicyProgram, ProductPolicy, ENUMERATION_BUDGET,
};
use crate::rng::stream;

/// Ties within this margin go to the lowest action index.
const TIE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum ValueMethod {
    ExactDp,
    ExactEnum,
    MonteCarlo { samples: u64, seed: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueReport {
    pub values: Vec<f64>,
    pub method: ValueMethod,
    /// Standard errors, Monte Carlo only.
    pub stderr: Option<Vec<f64>>,
}

impl ValueReport {
    pub fn is_exact(&self) -> bool {
        !matches!(self.method, ValueMethod::MonteCarlo { .. })
    }
}

fn check_markov(game: &MarkovGame, policies: &[&MarkovPolicy]) -> Result<()> {
    if policies.len() != game.num_players() {
        return Err(Error::Dimension(format!(
            "{} policies for {} players",
            policies.len(),
            game.num_players()
        )));
    }
    for (i, p) in policies.iter().enumerate() {
        if p.num_states() != game.num_states()
            || p.horizon() != game.horizon()
            || p.num_actions() != game.action_counts()[i]
        {
            return Err(Error::Dimension(format!(
                "markov policy {i} does not fit the game"
            )));
        }
    }
    Ok(())
}

/// Per-player values of a product of Markov policies by backward induction.
pub fn value_markov_product(game: &MarkovGame, policies: &[MarkovPolicy]) -> Result<ValueReport> {
    let refs: Vec<&MarkovPolicy> = policies.iter().collect();
    Ok(ValueReport {
        values: markov_values(game, &refs)?,
        method: ValueMethod::ExactDp,
        stderr: None,
    })
}

fn markov_values(game: &MarkovGame, policies: &[&MarkovPolicy]) -> Result<Vec<f64>> {
    check_markov(game, policies)?;
    let (m, ns) = (game.num_players(), game.num_states());
    let mut v = vec![vec![0.0; ns]; m];
    for h in (0..game.horizon()).rev() {
        let mut next = vec![vec![0.0; ns]; m];
        for s in 0..ns {
            for joint in 0..game.num_joint() {
                let profile = game.joint_profile(joint);
                let p: f64 = (0..m).map(|i| policies[i].row(h, s)[profile[i]]).product();
                if p == 0.0 {
                    continue;
                }
                for i in 0..m {
                    let cont: f64 = game
                        .transition_f64(h, s, joint)
                        .iter()
                        .map(|&(s2, q)| q * v[i][s2])
                        .sum();
                    next[i][s] += p * (game.reward_f64(i, h, s, joint) + cont);
                }
            }
        }
        v = next;
    }
    Ok((0..m)
        .map(|i| game.initial_f64().iter().map(|&(s, p)| p * v[i][s]).sum())
        .collect())
}

/// Exact values by trajectory enumeration.
pub fn value_exact(
    game: &MarkovGame,
    policy: &DistributionalPolicy,
    budget: u64,
) -> Result<Vec<f64>> {
    let m = game.num_players();
    let mut values = vec![0.0; m];
    for_each_trajectory(game, policy, budget, |_, steps, p| {
        for (i, v) in values.iter_mut().enumerate() {
            *v += p * steps.iter().map(|s| s.rewards[i].to_f64()).sum::<f64>();
        }
    })?;
    Ok(values)
}

/// Monte Carlo values over `samples` seeded episodes.
pub fn value_monte_carlo(
    game: &MarkovGame,
    policy: &DistributionalPolicy,
    samples: u64,
    seed: u64,
) -> Result<ValueReport> {
    policy.check(game)?;
    if samples < 2 {
        return Err(Error::Parameter("need at least two samples".into()));
    }
    let m = game.num_players();
    let returns: Vec<Vec<f64>> = (0..samples)
        .into_par_iter()
        .map(|k| {
            let (_, traj) = sample_mixture_trajectory(game, policy, &mut stream(seed, k))?;
            Ok((0..m).map(|i| traj.total_reward(i).to_f64()).collect())
        })
        .collect::<Result<_>>()?;
    let n = samples as f64;
    let mut values = vec![0.0; m];
    let mut stderr = vec![0.0; m];
    for i in 0..m {
        let mean = returns.iter().map(|r| r[i]).sum::<f64>() / n;
        let var = returns.iter().map(|r| (r[i] - mean).powi(2)).sum::<f64>() / (n - 1.0);
        values[i] = mean;
        stderr[i] = (var / n).sqrt();
    }
    Ok(ValueReport {
        values,
        method: ValueMethod::MonteCarlo { samples, seed },
        stderr: Some(stderr),
    })
}

/// Settings for [`value_general`].
#[derive(Clone, Copy, Debug)]
pub struct ValueOptions {
    pub budget: u64,
    pub samples: u64,
    pub seed: u64,
}

impl Default for ValueOptions {
    fn default() -> Self {
        ValueOptions {
            budget: ENUMERATION_BUDGET,
            samples: 20_000,
            seed: 0,
        }
    }
}

/// Exact by enumeration when it fits the budget, Monte Carlo otherwise.
pub fn value_general(
    game: &MarkovGame,
    policy: &DistributionalPolicy,
    opts: ValueOptions,
) -> Result<ValueReport> {
    match value_exact(game, policy, opts.budget) {
        Ok(values) => Ok(ValueReport {
            values,
            method: ValueMethod::ExactEnum,
            stderr: None,
        }),
        Err(Error::Budget { .. }) => value_monte_carlo(game, policy, opts.samples, opts.seed),
        Err(e) => Err(e),
    }
}

/// Distribution of the other players' joint action at each `(h, s)`.
/// Joint indices are mixed radix over the other players in order.
#[derive(Clone, Debug, PartialEq)]
pub struct MarkovOpponents {
    pub player: usize,
    pub counts: Vec<usize>,
    num_states: usize,
    rows: Vec<Vec<f64>>,
}

impl MarkovOpponents {
    pub fn row(&self, h: usize, s: usize) -> &[f64] {
        &self.rows[h * self.num_states + s]
    }

    /// Product opponents from one Markov policy per other player.
    pub fn product(game: &MarkovGame, player: usize, others: &[&MarkovPolicy]) -> Result<Self> {
        let counts = other_counts(game, player);
        if others.len() != counts.len() {
            return Err(Error::Dimension("one policy per other player".into()));
        }
        let mut rows = Vec::with_capacity(game.horizon() * game.num_states());
        for h in 0..game.horizon() {
            for s in 0..game.num_states() {
                rows.push(product_row(&counts, |j, a| others[j].row(h, s)[a]));
            }
        }
        Ok(MarkovOpponents {
            player,
            counts,
            num_states: game.num_states(),
            rows,
        })
    }
}

fn other_counts(game: &MarkovGame, player: usize) -> Vec<usize> {
    game.action_counts()
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != player)
        .map(|(_, &a)| a)
        .collect()
}

fn product_row(counts: &[usize], p: impl Fn(usize, usize) -> f64) -> Vec<f64> {
    let total: usize = counts.iter().product();
    (0..total)
        .map(|idx| {
            profile_from_index(counts, idx)
                .iter()
                .enumerate()
                .map(|(j, &a)| p(j, a))
                .product()
        })
        .collect()
}

fn insert_action(others: &[usize], player: usize, a: usize) -> Vec<usize> {
    let mut profile = others.to_vec();
    profile.insert(player, a);
    profile
}

fn occupancy(game: &MarkovGame, policies: &[&MarkovPolicy]) -> Vec<Vec<f64>> {
    let ns = game.num_states();
    let mut d = vec![vec![0.0; ns]; game.horizon()];
    for &(s, p) in game.initial_f64() {
        d[0][s] += p;
    }
    for h in 0..game.horizon() - 1 {
        for s in 0..ns {
            if d[h][s] == 0.0 {
                continue;
            }
            for joint in 0..game.num_joint() {
                let profile = game.joint_profile(joint);
                let p: f64 = policies
                    .iter()
                    .enumerate()
                    .map(|(i, pol)| pol.row(h, s)[profile[i]])
                    .product();
                for &(s2, q) in game.transition_f64(h, s, joint) {
                    d[h + 1][s2] += d[h][s] * p * q;
                }
            }
        }
    }
    d
}

/// Opponent behavior of a mixture of Markov product policies, averaged at
/// each `(h, s)` with weights proportional to each member's probability of
/// reaching `(h, s)`. Backward induction against it is exact whenever the
/// reach probabilities do not depend on the member, as in single-state games
/// and in the repeated-game construction at reward steps.
pub fn average_markov_behavior(
    game: &MarkovGame,
    mixture: &DistributionalPolicy,
    player: usize,
) -> Result<MarkovOpponents> {
    mixture.check(game)?;
    let counts = other_counts(game, player);
    let ns = game.num_states();
    let mut acc = vec![vec![0.0; counts.iter().product()]; game.horizon() * ns];
    let mut mass = vec![0.0; game.horizon() * ns];
    let mut plain = acc.clone();
    for (w, member) in mixture.members() {
        let pols = member
            .markov_members()
            .ok_or_else(|| Error::Parameter("mixture members must be Markov".into()))?;
        let d = occupancy(game, &pols);
        let others: Vec<&MarkovPolicy> = pols
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != player)
            .map(|(_, p)| *p)
            .collect();
        for h in 0..game.horizon() {
            for s in 0..ns {
                let row = product_row(&counts, |j, a| others[j].row(h, s)[a]);
                let k = h * ns + s;
                let reach = w * d[h][s];
                mass[k] += reach;
                for (x, (y, r)) in acc[k].iter_mut().zip(plain[k].iter_mut().zip(&row)) {
                    *x += reach * r;
                    *y += w * r;
                }
            }
        }
    }
    let rows = acc
        .into_iter()
        .zip(plain)
        .zip(mass)
        .map(|((row, fallback), z)| {
            if z > 0.0 {
                row.into_iter().map(|x| x / z).collect()
            } else {
                fallback
            }
        })
        .collect();
    Ok(MarkovOpponents {
        player,
        counts,
        num_states: ns,
        rows,
    })
}

fn argmax_low(q: &[f64]) -> usize {
    let mut best = 0;
    for (a, &v) in q.iter().enumerate().skip(1) {
        if v > q[best] + TIE {
            best = a;
        }
    }
    best
}

/// Optimal Markov policy of `opponents.player` by backward induction.
pub fn best_response_markov(
    game: &MarkovGame,
    opponents: &MarkovOpponents,
) -> Result<(MarkovPolicy, f64)> {
    let i = opponents.player;
    let ns = game.num_states();
    let na = game.action_counts()[i];
    let mut v = vec![0.0; ns];
    let mut choice = vec![0usize; game.horizon() * ns];
    for h in (0..game.horizon()).rev() {
        let mut next = vec![0.0; ns];
        for s in 0..ns {
            let row = opponents.row(h, s);
            let q: Vec<f64> = (0..na)
                .map(|a| {
                    row.iter()
                        .enumerate()
                        .filter(|(_, p)| **p > 0.0)
                        .map(|(b, p)| {
                            let others = profile_from_index(&opponents.counts, b);
                            let joint = game
                                .joint_index(&insert_action(&others, i, a))
                                .expect("in range");
                            let cont: f64 = game
                                .transition_f64(h, s, joint)
                                .iter()
                                .map(|&(s2, t)| t * v[s2])
                                .sum();
                            p * (game.reward_f64(i, h, s, joint) + cont)
                        })
                        .sum()
                })
                .collect();
            let a = argmax_low(&q);
            choice[h * ns + s] = a;
            next[s] = q[a];
        }
        v = next;
    }
    let value = game.initial_f64().iter().map(|&(s, p)| p * v[s]).sum();
    let policy = MarkovPolicy::deterministic(ns, game.horizon(), na, |h, s| choice[h * ns + s])?;
    Ok((policy, value))
}

/// Best deterministic Markov policy against arbitrary opponents, by
/// enumerating every deterministic Markov policy and valuing it exactly.
pub fn best_response_markov_enumerated(
    game: &MarkovGame,
    others: &DistributionalPolicy,
    player: usize,
    budget: u64,
) -> Result<(MarkovPolicy, f64)> {
    let na = game.action_counts()[player];
    let cells = game.horizon() * game.num_states();
    let count = (na as u64)
        .checked_pow(cells as u32)
        .filter(|&c| c <= budget)
        .ok_or(Error::Budget {
            what: "markov policy enumeration",
            budget,
        })?;
    let mut best: Option<(MarkovPolicy, f64)> = None;
    for code in 0..count {
        let digits = profile_from_index(&vec![na; cells], code as usize);
        let pol = MarkovPolicy::deterministic(game.num_states(), game.horizon(), na, |h, s| {
            digits[h * game.num_states() + s]
        })?;
        let dev = others.with_deviation(player, &PolicyProgram::markov(pol.clone()));
        let v = value_exact(game, &dev, budget)?[player];
        if best.as_ref().map_or(true, |(_, b)| v > b + TIE) {
            best = Some((pol, v));
        }
    }
    Ok(best.expect("at least one policy"))
}

#[derive(Clone)]
struct Particle {
    member: usize,
    weight: f64,
    histories: Vec<Vec<HistoryStep>>,
}

struct GeneralSolver<'a> {
    game: &'a MarkovGame,
    others: &'a DistributionalPolicy,
    player: usize,
    budget: u64,
    expanded: u64,
    policy: DeterministicPolicy,
}

impl GeneralSolver<'_> {
    fn solve(
        &mut self,
        own: &mut Vec<HistoryStep>,
        s: usize,
        particles: &[Particle],
    ) -> Result<f64> {
        let game = self.game;
        let h = own.len();
        let i = self.player;
        let m = game.num_players();
        let na = game.action_counts()[i];
        let mut q = vec![0.0; na];
        for (a, qa) in q.iter_mut().enumerate() {
            let mut groups: BTreeMap<(Exact, usize), Vec<Particle>> = BTreeMap::new();
            for part in particles {
                let member = &self.others.members()[part.member].1;
                let supports: Vec<Vec<(usize, f64)>> = (0..m)
                    .map(|j| {
                        if j == i {
                            return vec![(a, 1.0)];
                        }
                        member.0[j]
                            .distribution(&part.histories[j], s)
                            .into_iter()
                            .enumerate()
                            .filter(|(_, p)| *p > 0.0)
                            .collect()
                    })
                    .collect();
                let counts: Vec<usize> = supports.iter().map(Vec::len).collect();
                let total: usize = counts.iter().product();
                for idx in 0..total {
                    self.expanded += 1;
                    if self.expanded > self.budget {
                        return Err(Error::Budget {
                            what: "general best response",
                            budget: self.budget,
                        });
                    }
                    let digits = profile_from_index(&counts, idx);
                    let profile: Vec<usize> = (0..m).map(|j| supports[j][digits[j]].0).collect();
                    let p = part.weight * (0..m).map(|j| supports[j][digits[j]].1).product::<f64>();
                    let joint = game.joint_index(&profile)?;
                    *qa += p * game.reward_f64(i, h, s, joint);
                    if h + 1 == game.horizon() {
                        continue;
                    }
                    let rewards = game.rewards_at(h, s, joint);
                    for &(s2, t) in game.transition_f64(h, s, joint) {
                        let mut histories = part.histories.clone();
                        for (j, hist) in histories.iter_mut().enumerate() {
                            hist.push(HistoryStep {
                                state: s,
                                action: profile[j],
                                reward: rewards[j].clone(),
                            });
                        }
                        groups
                            .entry((rewards[i].clone(), s2))
                            .or_default()
                            .push(Particle {
                                member: part.member,
                                weight: p * t,
                                histories,
                            });
                    }
                }
            }
            for ((r, s2), group) in groups {
                own.push(HistoryStep {
                    state: s,
                    action: a,
                    reward: r,
                });
                let v = self.solve(own, s2, &group);
                own.pop();
                *qa += v?;
            }
        }
        let a = argmax_low(&q);
        self.policy.set(HistoryKey::new(own, s), a);
        Ok(q[a])
    }
}

/// Exact best response of `player` over deterministic general policies
/// against the other players' part of `others`. The search runs over the
/// player's own observations, carrying every consistent (member, joint
/// history) pair with its probability, so it needs no assumption on what
/// the observations reveal. Fails once more than `budget` joint-action
/// nodes have been expanded.
pub fn best_response_general_exact(
    game: &MarkovGame,
    others: &DistributionalPolicy,
    player: usize,
    budget: u64,
) -> Result<(DeterministicPolicy, f64)> {
    if player >= game.num_players() {
        return Err(Error::Index(format!("player {player}")));
    }
    for (_, member) in others.members() {
        if member.num_players() != game.num_players() {
            return Err(Error::Dimension("mixture does not fit the game".into()));
        }
    }
    let mut solver = GeneralSolver {
        game,
        others,
        player,
        budget,
        expanded: 0,
        policy: DeterministicPolicy::new(game.action_counts()[player], Default::default())?,
    };
    let mut value = 0.0;
    for &(s0, p0) in game.initial_f64() {
        let particles: Vec<Particle> = others
            .members()
            .iter()
            .enumerate()
            .filter(|(_, (w, _))| *w > 0.0)
            .map(|(t, (w, _))| Particle {
                member: t,
                weight: w * p0,
                histories: vec![Vec::new(); game.num_players()],
            })
            .collect();
        value += solver.solve(&mut Vec::new(), s0, &particles)?;
    }
    Ok((solver.policy, value))
}

/// For each step, whether `player`'s own reward and next state identify the
/// other players' joint action at every state and own action.
pub fn revealing_steps(game: &MarkovGame, player: usize) -> Vec<bool> {
    let counts = other_counts(game, player);
    let others: usize = counts.iter().product();
    (0..game.horizon())
        .map(|h| {
            (0..game.num_states()).all(|s| {
                (0..game.action_counts()[player]).all(|a| {
                    let mut seen = std::collections::BTreeSet::new();
                    (0..others).all(|b| {
                        let profile = insert_action(&profile_from_index(&counts, b), player, a);
                        let joint = game.joint_index(&profile).expect("in range");
                        let support: Vec<usize> = game
                            .transition(h, s, joint)
                            .iter()
                            .map(|(s2, _)| *s2)
                            .collect();
                        seen.insert((game.reward(player, h, s, joint).clone(), support))
                    })
                })
            })
        })
        .collect()
}

/// How deviations are chosen for regret and gap computations.
#[derive(Clone, Debug)]
pub enum DeviationMode {
    /// Exact best response over general policies.
    Exact { budget: u64 },
    /// Caller-supplied deviation per player; certifies lower bounds only.
    Witness {
        deviations: Vec<PolicyProgram>,
        options: ValueOptions,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GapMode {
    Exact,
    WitnessLowerBound,
}

#[derive(Clone, Debug)]
pub struct GapReport {
    pub gains: Vec<f64>,
    pub witnesses: Vec<PolicyProgram>,
    pub mode: GapMode,
    /// Values of the mixture itself.
    pub base_values: ValueReport,
    /// Standard errors of the gains when a witness value was sampled.
    pub stderr: Option<Vec<f64>>,
}

impl GapReport {
    pub fn max_gain(&self) -> f64 {
        self.gains.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn total_gain(&self) -> f64 {
        self.gains.iter().sum()
    }
}

/// Largest gain each player gets by deviating from `mixture`.
pub fn cce_gap(
    game: &MarkovGame,
    mixture: &DistributionalPolicy,
    mode: &DeviationMode,
) -> Result<GapReport> {
    mixture.check(game)?;
    let m = game.num_players();
    match mode {
        DeviationMode::Exact { budget } => {
            let base = value_exact(game, mixture, *budget)?;
            let mut gains = Vec::with_capacity(m);
            let mut witnesses = Vec::with_capacity(m);
            for i in 0..m {
                let (pi, v) = best_response_general_exact(game, mixture, i, *budget)?;
                gains.push(v - base[i]);
                witnesses.push(PolicyProgram::deterministic(pi));
            }
            Ok(GapReport {
                gains,
                witnesses,
                mode: GapMode::Exact,
                base_values: ValueReport {
                    values: base,
                    method: ValueMethod::ExactEnum,
                    stderr: None,
                },
                stderr: None,
            })
        }
        DeviationMode::Witness {
            deviations,
            options,
        } => {
            if deviations.len() != m {
                return Err(Error::Dimension("one witness per player".into()));
            }
            let base = value_general(game, mixture, *options)?;
            let mut gains = Vec::with_capacity(m);
            let mut errs = Vec::with_capacity(m);
            for (i, dev) in deviations.iter().enumerate() {
                let r = value_general(game, &mixture.with_deviation(i, dev), *options)?;
                gains.push(r.values[i] - base.values[i]);
                let e1 = r.stderr.as_ref().map_or(0.0, |e| e[i]);
                let e0 = base.stderr.as_ref().map_or(0.0, |e| e[i]);
                errs.push((e1 * e1 + e0 * e0).sqrt());
            }
            let sampled = !base.is_exact() || errs.iter().any(|e| *e > 0.0);
            Ok(GapReport {
                gains,
                witnesses: deviations.clone(),
                mode: GapMode::WitnessLowerBound,
                base_values: base,
                stderr: sampled.then_some(errs),
            })
        }
    }
}

/// `Reg_i = max_{pi} sum_t V_i(pi x sigma^t_{-i}) - V_i(sigma^t)`, each term
/// valued member by member. In exact mode the maximizer is the exact best
/// response to the uniform mixture of the sequence.
pub fn regret_of_sequence(
    game: &MarkovGame,
    sequence: &[ProductPolicy],
    mode: &DeviationMode,
) -> Result<Vec<f64>> {
    let mixture = DistributionalPolicy::uniform(sequence.to_vec())?;
    mixture.check(game)?;
    let m = game.num_players();
    let (budget, deviations, options) = match mode {
        DeviationMode::Exact { budget } => {
            let devs = (0..m)
                .map(|i| {
                    best_response_general_exact(game, &mixture, i, *budget)
                        .map(|(p, _)| PolicyProgram::deterministic(p))
                })
                .collect::<Result<Vec<_>>>()?;
            let opts = ValueOptions {
                budget: *budget,
                ..ValueOptions::default()
            };
            (*budget, devs, opts)
        }
        DeviationMode::Witness {
            deviations,
            options,
        } => (options.budget, deviations.clone(), *options),
    };
    let exact = matches!(mode, DeviationMode::Exact { .. });
    let value = |pol: &ProductPolicy| -> Result<Vec<f64>> {
        let single = DistributionalPolicy::single(pol.clone());
        if exact {
            value_exact(game, &single, budget)
        } else {
            Ok(value_general(game, &single, options)?.values)
        }
    };
    let mut regrets = vec![0.0; m];
    for member in sequence {
        let base = value(member)?;
        for (i, dev) in deviations.iter().enumerate() {
            regrets[i] += value(&member.with_player(i, dev.clone()))?[i] - base[i];
        }
    }
    Ok(regrets)
}

/// Expected payoff of each action of `player` when the others play
/// `profile`.
pub fn deviation_payoffs(game: &NormalFormGame, profile: &[Vec<f64>], player: usize) -> Vec<f64> {
    let n = game.num_actions();
    let mut u = vec![0.0; n];
    for idx in 0..game.num_profiles() {
        let a = game.profile(idx);
        let p: f64 = a
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != player)
            .map(|(j, &aj)| profile[j][aj])
            .product();
        if p != 0.0 {
            u[a[player]] += p * game.payoff_f64_at(player, idx);
        }
    }
    u
}

fn check_profile(game: &NormalFormGame, profile: &[Vec<f64>]) -> Result<()> {
    if profile.len() != game.num_players() {
        return Err(Error::Dimension("one distribution per player".into()));
    }
    for (i, row) in profile.iter().enumerate() {
        let total: f64 = row.iter().sum();
        if row.len() != game.num_actions()
            || (total - 1.0).abs() > 1e-9
            || row.iter().any(|p| *p < 0.0)
        {
            return Err(Error::Parameter(format!("distribution {i} is not valid")));
        }
    }
    Ok(())
}

/// Best pure-deviation gain of each player at a product distribution.
pub fn eps_nash_gap(game: &NormalFormGame, profile: &[Vec<f64>]) -> Result<Vec<f64>> {
    check_profile(game, profile)?;
    Ok((0..game.num_players())
        .map(|i| {
            let u = deviation_payoffs(game, profile, i);
            let on_path: f64 = u.iter().zip(&profile[i]).map(|(x, p)| x * p).sum();
            let best = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (best - on_path).max(0.0)
        })
        .collect())
}

pub fn max_gap(gaps: &[f64]) -> f64 {
    gaps.iter().copied().fold(0.0, f64::max)
}

/// All points of the simplex over `n` actions with coordinates in
/// multiples of `1/resolution`.
pub fn simplex_grid(n: usize, resolution: usize) -> Vec<Vec<f64>> {
    fn rec(n: usize, left: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if prefix.len() + 1 == n {
            prefix.push(left);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for k in (0..=left).rev() {
            prefix.push(k);
            rec(n, left - k, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(n, resolution, &mut Vec::new(), &mut out);
    out.into_iter()
        .map(|c| {
            c.into_iter()
                .map(|k| k as f64 / resolution as f64)
                .collect()
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridNash {
    pub profile: Vec<Vec<f64>>,
    pub gaps: Vec<f64>,
}

impl GridNash {
    pub fn max_gap(&self) -> f64 {
        max_gap(&self.gaps)
    }
}

/// The grid profile with the smallest Nash gap, if that gap is at most
/// `eps`. Grid steps are `1/resolution`.
pub fn brute_force_nash(game: &NormalFormGame, eps: f64, resolution: usize) -> Option<GridNash> {
    let grid = simplex_grid(game.num_actions(), resolution.max(1));
    let best = if game.num_players() == 2 {
        best_on_grid_two_player(game, &grid)
    } else {
        best_on_grid_general(game, &grid)
    };
    let profile = best?;
    let gaps = eps_nash_gap(game, &profile).ok()?;
    (max_gap(&gaps) <= eps).then_some(GridNash { profile, gaps })
}

fn best_on_grid_two_player(game: &NormalFormGame, grid: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = game.num_actions();
    let m1 = game.payoff_table_f64(0);
    let m2 = game.payoff_table_f64(1);
    // u1[y][a] = sum_b M1[a,b] y_b ; u2[x][b] = sum_a x_a M2[a,b]
    let u1: Vec<Vec<f64>> = grid
        .iter()
        .map(|y| {
            (0..n)
                .map(|a| (0..n).map(|b| m1[a * n + b] * y[b]).sum())
                .collect()
        })
        .collect();
    let u2: Vec<Vec<f64>> = grid
        .iter()
        .map(|x| {
            (0..n)
                .map(|b| (0..n).map(|a| x[a] * m2[a * n + b]).sum())
                .collect()
        })
        .collect();
    let max1: Vec<f64> = u1
        .iter()
        .map(|u| u.iter().copied().fold(f64::MIN, f64::max))
        .collect();
    let max2: Vec<f64> = u2
        .iter()
        .map(|u| u.iter().copied().fold(f64::MIN, f64::max))
        .collect();
    let mut best: Option<(f64, usize, usize)> = None;
    for (xi, x) in grid.iter().enumerate() {
        for (yi, y) in grid.iter().enumerate() {
            let g1 = max1[yi] - x.iter().zip(&u1[yi]).map(|(p, u)| p * u).sum::<f64>();
            let g2 = max2[xi] - y.iter().zip(&u2[xi]).map(|(p, u)| p * u).sum::<f64>();
            let g = g1.max(g2);
            if best.map_or(true, |(b, _, _)| g < b) {
                best = Some((g, xi, yi));
            }
        }
    }
    best.map(|(_, xi, yi)| vec![grid[xi].clone(), grid[yi].clone()])
}

fn best_on_grid_general(game: &NormalFormGame, grid: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let m = game.num_players();
    let counts = vec![grid.len(); m];
    let total = grid.len().checked_pow(m as u32)?;
    let mut best: Option<(f64, usize)> = None;
    for code in 0..total {
        let idx = profile_from_index(&counts, code);
        let profile: Vec<Vec<f64>> = idx.iter().map(|&k| grid[k].clone()).collect();
        let g = max_gap(&eps_nash_gap(game, &profile).ok()?);
        if best.map_or(true, |(b, _)| g < b) {
            best = Some((g, code));
        }
    }
    best.map(|(_, code)| {
        profile_from_index(&counts, code)
            .into_iter()
            .map(|k| grid[k].clone())
            .collect()
    })
}
