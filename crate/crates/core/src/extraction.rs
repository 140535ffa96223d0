//! Recovering Nash equilibria of a normal-form game from sparse CCEs of the
//! constructed Markov games, and the aggregation-based deviation policies
//! that witness a large CCE gap when recovery fails.
//!
//! Logarithms in `K`, `delta` and the `sqrt(log T)` bounds are natural.
//! Steps are 0-indexed, so the reward steps of the repeated game are the
//! even ones.

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::aggregation::{self, AggregatorState, FnExperts};
use crate::constructions::{decode_repeated_state, KibitzerConstruction, KibitzerLayout};
use crate::equilibria::{eps_nash_gap, max_gap};
use crate::error::{Error, Result};
use crate::exact::Exact;
use crate::games::{profile_from_index, MarkovGame, NormalFormGame, PayoffOracle};
use crate::policies::{
    own_history, point_mass, DistributionalPolicy, HistoryStep, MarkovPolicy, PolicyDocument,
    PolicyProgram, ProductPolicy, Trajectory, TrajectoryStep,
};
use crate::rng::sample_index;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    ExactStageNash,
    LearnerProduced,
    AdversarialFixture,
}

/// A sequence of product policies whose uniform mixture is claimed to be an
/// approximate CCE.
#[derive(Clone, Debug)]
pub struct SparseCceCertificate {
    pub members: Vec<ProductPolicy>,
    /// Claimed gap, when the producer states one.
    pub eps: Option<f64>,
    pub provenance: Provenance,
    pub certified_gap: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateDocument {
    pub eps: Option<f64>,
    pub provenance: Provenance,
    pub certified_gap: Option<f64>,
    pub members: Vec<Vec<PolicyDocument>>,
}

impl SparseCceCertificate {
    pub fn new(
        members: Vec<ProductPolicy>,
        eps: Option<f64>,
        provenance: Provenance,
        certified_gap: Option<f64>,
    ) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::Parameter("a certificate needs T >= 1".into()));
        }
        let m = members[0].num_players();
        if members.iter().any(|p| p.num_players() != m) {
            return Err(Error::Dimension(
                "members disagree on the player count".into(),
            ));
        }
        Ok(SparseCceCertificate {
            members,
            eps,
            provenance,
            certified_gap,
        })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn mixture(&self) -> DistributionalPolicy {
        DistributionalPolicy::uniform(self.members.clone()).expect("non-empty")
    }

    pub fn check(&self, game: &MarkovGame) -> Result<()> {
        self.members.iter().try_for_each(|p| p.check(game))
    }

    pub fn to_document(&self) -> Result<CertificateDocument> {
        Ok(CertificateDocument {
            eps: self.eps,
            provenance: self.provenance,
            certified_gap: self.certified_gap,
            members: self
                .members
                .iter()
                .map(|p| p.0.iter().map(PolicyProgram::to_document).collect())
                .collect::<Result<_>>()?,
        })
    }

    pub fn from_document(doc: CertificateDocument) -> Result<Self> {
        let members = doc
            .members
            .into_iter()
            .map(|ps| ProductPolicy(ps.into_iter().map(PolicyProgram::from).collect()))
            .collect();
        SparseCceCertificate::new(members, doc.eps, doc.provenance, doc.certified_gap)
    }
}

fn argmax_low(q: &[f64]) -> usize {
    let mut best = 0;
    for (a, &v) in q.iter().enumerate().skip(1) {
        if v > q[best] + 1e-12 {
            best = a;
        }
    }
    best
}

/// Outcome of an extraction attempt.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "kebab-case")]
pub enum Extraction {
    Found {
        member: usize,
        step: usize,
        profile: Vec<Vec<f64>>,
        gaps: Vec<f64>,
    },
    Fail,
}

impl Extraction {
    pub fn is_found(&self) -> bool {
        matches!(self, Extraction::Found { .. })
    }

    pub fn profile(&self) -> Option<&[Vec<f64>]> {
        match self {
            Extraction::Found { profile, .. } => Some(profile),
            Extraction::Fail => None,
        }
    }

    pub fn max_gap(&self) -> Option<f64> {
        match self {
            Extraction::Found { gaps, .. } => Some(max_gap(gaps)),
            Extraction::Fail => None,
        }
    }
}

/// Scan the reward-step behavior `sigma^t_h(s)` of every member at the hub
/// state and return the first profile whose Nash gap in `game` is at most
/// `threshold`.
pub fn algorithm1_extract(
    game: &NormalFormGame,
    certificate: &SparseCceCertificate,
    threshold: f64,
) -> Result<Extraction> {
    for (t, member) in certificate.members.iter().enumerate() {
        let pols = member
            .markov_members()
            .ok_or_else(|| Error::Parameter("algorithm 1 needs Markov members".into()))?;
        if pols.len() != 2 {
            return Err(Error::Dimension(
                "repeated-game members have two players".into(),
            ));
        }
        for h in (0..pols[0].horizon()).step_by(2) {
            let profile = vec![
                pols[0].row(h, crate::constructions::HUB).to_vec(),
                pols[1].row(h, crate::constructions::HUB).to_vec(),
            ];
            let gaps = eps_nash_gap(game, &profile)?;
            if max_gap(&gaps) <= threshold {
                return Ok(Extraction::Found {
                    member: t,
                    step: h,
                    profile,
                    gaps,
                });
            }
        }
    }
    Ok(Extraction::Fail)
}

/// The deviation of player `j` in the repeated game built from `game`: at
/// reward steps it aggregates the members' forecasts of the opponent's
/// action, learning from the opponent actions revealed by the states, and
/// best-responds in `game` to the posterior-mean forecast. At silent steps
/// it plays action 0.
pub fn build_deviation_policy_repeated(
    game: &NormalFormGame,
    certificate: &SparseCceCertificate,
    player: usize,
) -> Result<PolicyProgram> {
    if game.num_players() != 2 || player > 1 {
        return Err(Error::Construction(
            "the repeated game has two players".into(),
        ));
    }
    let opp = 1 - player;
    let experts: Vec<MarkovPolicy> = certificate
        .members
        .iter()
        .map(|m| {
            m.0.get(opp)
                .and_then(PolicyProgram::as_markov)
                .cloned()
                .ok_or_else(|| Error::Parameter("members must be Markov".into()))
        })
        .collect::<Result<_>>()?;
    let n0 = game.num_actions();
    let payoff = game.payoff_table_f64(player).to_vec();
    let experts = Arc::new(experts);
    let t = experts.len();
    let size = (t * experts[0].horizon() * experts[0].num_states() * n0 + n0 * n0) as u64;
    Ok(PolicyProgram::procedural(
        format!("repeated-deviation-{player}"),
        n0,
        size,
        move |history, state| {
            let h = history.len();
            if h % 2 == 1 {
                return point_mass(n0, 0);
            }
            let forecasts = FnExperts::new(t, n0, |i, ctx: &(usize, usize)| {
                Ok(experts[i].row(ctx.0, ctx.1).to_vec())
            });
            let mut agg = AggregatorState::new(t);
            for g in (0..h).step_by(2) {
                let Some((a1, a2)) = history
                    .get(g + 1)
                    .and_then(|next| decode_repeated_state(n0, next.state))
                else {
                    continue;
                };
                let outcome = if opp == 0 { a1 } else { a2 };
                agg = aggregation::update(&agg, &forecasts, &(g, history[g].state), outcome)
                    .expect("shapes agree");
            }
            let q = aggregation::predict(&agg, &forecasts, &(h, state)).expect("shapes agree");
            let u: Vec<f64> = (0..n0)
                .map(|a| {
                    (0..n0)
                        .map(|b| {
                            let idx = if player == 0 { a * n0 + b } else { b * n0 + a };
                            q[b] * payoff[idx]
                        })
                        .sum()
                })
                .collect();
            point_mass(n0, argmax_low(&u))
        },
    ))
}

/// `eps0/2 - 4 sqrt(ln T / H)`.
pub fn repeated_witness_bound(eps0: f64, t: usize, horizon: usize) -> f64 {
    eps0 / 2.0 - 4.0 * ((t as f64).ln() / horizon as f64).sqrt()
}

/// How a player's own history reveals the past joint actions.
#[derive(Clone, Debug)]
pub enum Revealer {
    /// Low-order reward bits of the kibitzer game.
    RewardBits(KibitzerLayout),
    /// The next state names the profile, as in the alternative game.
    States(Vec<usize>),
}

impl Revealer {
    /// Full joint history behind `own` (ending before `state`).
    pub fn joint_history(
        &self,
        game: &MarkovGame,
        own: &[HistoryStep],
        state: usize,
    ) -> Result<Vec<TrajectoryStep>> {
        own.iter()
            .enumerate()
            .map(|(g, step)| {
                let actions = match self {
                    Revealer::RewardBits(layout) => layout.decode_reward(&step.reward)?,
                    Revealer::States(counts) => {
                        let next = own.get(g + 1).map_or(state, |s| s.state);
                        profile_from_index(counts, next)
                    }
                };
                let joint = game.joint_index(&actions)?;
                game.check_cell(g, step.state, joint)?;
                Ok(TrajectoryStep {
                    state: step.state,
                    rewards: game.rewards_at(g, step.state, joint),
                    actions,
                })
            })
            .collect()
    }
}

/// Posterior over members and the forecast `q_hat` of one player's action.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QHat {
    pub posterior: Vec<f64>,
    pub qhat: Vec<f64>,
}

/// Aggregate the members' policies for player `j`: experts are
/// `sigma^t_j`, contexts are `j`'s own history and state at each earlier
/// step, outcomes are `j`'s realized actions.
pub fn compute_qhat(
    certificate: &SparseCceCertificate,
    player: usize,
    joint: &[TrajectoryStep],
    state: usize,
) -> Result<QHat> {
    let t = certificate.members.len();
    let policies: Vec<&PolicyProgram> = certificate
        .members
        .iter()
        .map(|m| {
            m.0.get(player)
                .ok_or_else(|| Error::Index(format!("player {player}")))
        })
        .collect::<Result<_>>()?;
    let na = policies[0].num_actions();
    let own = own_history(joint, player);
    let forecasts = FnExperts::new(t, na, |i, g: &usize| {
        let s = joint.get(*g).map_or(state, |step| step.state);
        Ok(policies[i].distribution(&own[..*g], s))
    });
    let mut agg = AggregatorState::new(t);
    for (g, step) in joint.iter().enumerate() {
        agg = aggregation::update(&agg, &forecasts, &g, step.actions[player])?;
    }
    let qhat = aggregation::predict(&agg, &forecasts, &joint.len())?;
    Ok(QHat {
        posterior: agg.posterior(),
        qhat,
    })
}

/// `delta = eps / (6 H)`.
pub fn algorithm2_delta(eps: f64, horizon: usize) -> f64 {
    eps / (6.0 * horizon as f64)
}

/// `K = ceil(4 ln(m n0 / delta) / eps^2)`.
pub fn algorithm2_k(num_players: usize, num_actions: usize, eps: f64, horizon: usize) -> usize {
    let delta = algorithm2_delta(eps, horizon);
    (4.0 * ((num_players * num_actions) as f64 / delta).ln() / (eps * eps)).ceil() as usize
}

/// `14 (m + 1) eps / H`.
pub fn algorithm2_threshold(num_players: usize, eps: f64, horizon: usize) -> f64 {
    14.0 * (num_players + 1) as f64 * eps / horizon as f64
}

/// Product of per-player distributions over the m main players' profiles.
fn product_distribution(qhats: &[Vec<f64>], n0: usize) -> Vec<f64> {
    let counts = vec![n0; qhats.len()];
    (0..n0.pow(qhats.len() as u32))
        .map(|idx| {
            profile_from_index(&counts, idx)
                .iter()
                .enumerate()
                .map(|(j, &a)| qhats[j][a])
                .product()
        })
        .collect()
}

/// Multinomial counts drawn as a chain of binomials.
pub fn sample_multinomial<R: Rng + ?Sized>(n: u64, probs: &[f64], rng: &mut R) -> Vec<u64> {
    let mut counts = vec![0u64; probs.len()];
    let Some(last) = probs.iter().rposition(|&p| p > 0.0) else {
        return counts;
    };
    let mut left = n;
    for i in 0..last {
        if left == 0 {
            break;
        }
        let rest: f64 = probs[i..=last].iter().sum();
        let p = (probs[i] / rest).clamp(0.0, 1.0);
        let c = if p <= 0.0 {
            0
        } else if p >= 1.0 {
            left
        } else {
            Binomial::new(left, p).expect("valid binomial").sample(rng)
        };
        counts[i] = c;
        left -= c;
    }
    counts[last] += left;
    counts
}

/// Kibitzer reward of every kibitzer action, averaged over a count vector
/// of main-player profiles.
fn rhat_from_counts(
    game: &MarkovGame,
    layout: &KibitzerLayout,
    h: usize,
    s: usize,
    counts: &[u64],
) -> Vec<f64> {
    let m = layout.num_players;
    let k: u64 = counts.iter().sum();
    let main_counts = vec![layout.num_actions; m];
    (0..layout.kibitzer_actions())
        .map(|kib| {
            counts
                .iter()
                .enumerate()
                .filter(|(_, &c)| c > 0)
                .map(|(idx, &c)| {
                    let mut profile = profile_from_index(&main_counts, idx);
                    profile.push(kib);
                    let joint = game.joint_index(&profile).expect("in range");
                    c as f64 * game.reward_f64(m, h, s, joint)
                })
                .sum::<f64>()
                / k as f64
        })
        .collect()
}

/// Exact expected kibitzer reward of each kibitzer action when the main
/// players draw from `qhats`.
pub fn expected_kibitzer_rewards(
    kib: &KibitzerConstruction,
    h: usize,
    s: usize,
    qhats: &[Vec<f64>],
) -> Vec<f64> {
    let probs = product_distribution(qhats, kib.layout.num_actions);
    let m = kib.layout.num_players;
    let main_counts = vec![kib.layout.num_actions; m];
    (0..kib.layout.kibitzer_actions())
        .map(|k| {
            probs
                .iter()
                .enumerate()
                .map(|(idx, p)| {
                    let mut profile = profile_from_index(&main_counts, idx);
                    profile.push(k);
                    let joint = kib.game.joint_index(&profile).expect("in range");
                    p * kib.game.reward_f64(m, h, s, joint)
                })
                .sum()
        })
        .collect()
}

/// `R_hat` from `k` samples of the main players' profile.
pub fn sample_rhat<R: Rng + ?Sized>(
    kib: &KibitzerConstruction,
    h: usize,
    s: usize,
    qhats: &[Vec<f64>],
    k: u64,
    rng: &mut R,
) -> Vec<f64> {
    let probs = product_distribution(qhats, kib.layout.num_actions);
    let counts = sample_multinomial(k, &probs, rng);
    rhat_from_counts(&kib.game, &kib.layout, h, s, &counts)
}

fn ln_factorial(n: u64) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

fn compositions(total: u64, parts: usize, out: &mut Vec<Vec<u64>>, prefix: &mut Vec<u64>) {
    if prefix.len() + 1 == parts {
        prefix.push(total);
        out.push(prefix.clone());
        prefix.pop();
        return;
    }
    for c in 0..=total {
        prefix.push(c);
        compositions(total - c, parts, out, prefix);
        prefix.pop();
    }
}

fn binomial_coefficient(n: u64, k: u64) -> Option<u64> {
    let k = k.min(n - k);
    (0..k).try_fold(1u64, |acc, i| acc.checked_mul(n - i).map(|x| x / (i + 1)))
}

/// Deviation policies of the kibitzer game. For a main player `i` it is the
/// exact best response, under `R_i`, to the product of every other
/// player's aggregated forecast. For the kibitzer it is the law of
/// `argmax R_hat` where `R_hat` averages `k` sampled main-player profiles;
/// the law is computed exactly by summing over all count vectors, so `k`
/// must be small enough that their number fits `budget`.
pub fn build_kibitzer_deviation(
    kib: &KibitzerConstruction,
    certificate: &SparseCceCertificate,
    player: usize,
    k: u64,
    budget: u64,
) -> Result<PolicyProgram> {
    let layout = kib.layout.clone();
    let m = layout.num_players;
    if player > m {
        return Err(Error::Index(format!("player {player}")));
    }
    certificate.check(&kib.game)?;
    let game = Arc::new(kib.game.clone());
    let cert = Arc::new(certificate.clone());
    let revealer = Revealer::RewardBits(layout.clone());
    let counts = layout.action_counts();
    let na = counts[player];
    if player < m {
        let size = (certificate.len() * kib.game.num_joint()) as u64;
        return Ok(PolicyProgram::procedural(
            format!("kibitzer-game-deviation-{player}"),
            na,
            size,
            move |history, state| {
                let joint = revealer
                    .joint_history(&game, history, state)
                    .expect("history of the kibitzer game");
                let h = history.len();
                let qhats: Vec<Vec<f64>> = (0..=m)
                    .map(|j| {
                        if j == player {
                            Vec::new()
                        } else {
                            compute_qhat(&cert, j, &joint, state)
                                .expect("shapes agree")
                                .qhat
                        }
                    })
                    .collect();
                let mut u = vec![0.0; na];
                for jidx in 0..game.num_joint() {
                    let profile = game.joint_profile(jidx);
                    let p: f64 = (0..=m)
                        .filter(|&j| j != player)
                        .map(|j| qhats[j][profile[j]])
                        .product();
                    if p > 0.0 {
                        u[profile[player]] += p * game.reward_f64(player, h, state, jidx);
                    }
                }
                point_mass(na, argmax_low(&u))
            },
        ));
    }
    let parts = layout.num_actions.pow(m as u32);
    let n_comp = binomial_coefficient(k + parts as u64 - 1, parts as u64 - 1)
        .filter(|&c| c <= budget)
        .ok_or(Error::Budget {
            what: "kibitzer deviation sample counts",
            budget,
        })?;
    let mut all = Vec::with_capacity(n_comp as usize);
    compositions(k, parts, &mut all, &mut Vec::new());
    let all = Arc::new(all);
    let lnk = ln_factorial(k);
    Ok(PolicyProgram::procedural(
        "kibitzer-sampled-argmax",
        na,
        n_comp * parts as u64,
        move |history, state| {
            let joint = revealer
                .joint_history(&game, history, state)
                .expect("history of the kibitzer game");
            let h = history.len();
            let qhats: Vec<Vec<f64>> = (0..m)
                .map(|j| {
                    compute_qhat(&cert, j, &joint, state)
                        .expect("shapes agree")
                        .qhat
                })
                .collect();
            let probs = product_distribution(&qhats, layout.num_actions);
            let mut law = vec![0.0; na];
            for c in all.iter() {
                let mut lp = lnk;
                let mut possible = true;
                for (&ci, &pi) in c.iter().zip(&probs) {
                    if ci > 0 {
                        if pi <= 0.0 {
                            possible = false;
                            break;
                        }
                        lp += ci as f64 * pi.ln() - ln_factorial(ci);
                    }
                }
                if !possible {
                    continue;
                }
                let rhat = rhat_from_counts(&game, &layout, h, state, c);
                law[argmax_low(&rhat)] += lp.exp();
            }
            let z: f64 = law.iter().sum();
            law.iter_mut().for_each(|x| *x /= z);
            law
        },
    ))
}

/// Payoff queries consumed by one run of Algorithm 2, itemized.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryReport {
    /// Generative-model queries simulated from payoff queries.
    pub generative_queries: u64,
    /// Payoff queries spent on them, at most 2 each.
    pub generative_simulation: u64,
    /// `2 (m + 1)` per step for the realized rewards.
    pub reward_realization: u64,
    /// Two per (sampled profile, kibitzer action) pair.
    pub rhat_estimation: u64,
    /// The oracle's own counter.
    pub total: u64,
}

impl QueryReport {
    pub fn itemized_sum(&self) -> u64 {
        self.generative_simulation + self.reward_realization + self.rhat_estimation
    }

    pub fn is_consistent(&self) -> bool {
        self.itemized_sum() == self.total
    }
}

/// Reward of `player` at `profile`, from two payoff queries.
pub fn reward_via_oracle(
    oracle: &mut PayoffOracle<'_>,
    layout: &KibitzerLayout,
    profile: &[usize],
    player: usize,
) -> Result<Exact> {
    let m = layout.num_players;
    let (j, alt) = layout.kibitzer_parts(profile[m]);
    let played = &profile[..m];
    let mut deviated = played.to_vec();
    deviated[j] = alt;
    let a = oracle.query(played)?;
    let b = oracle.query(&deviated)?;
    let diff = (&a[j] - &b[j]).div_int(layout.horizon as i64);
    let base = if player == j {
        diff
    } else if player == m {
        -diff
    } else {
        Exact::zero()
    };
    Ok(base + &layout.enc(profile)? * &layout.enc_scale())
}

/// A generative-model query of the single-state kibitzer game answered
/// with two payoff queries: next-state row and all rewards.
#[allow(clippy::type_complexity)]
pub fn simulated_generative_query(
    oracle: &mut PayoffOracle<'_>,
    layout: &KibitzerLayout,
    profile: &[usize],
) -> Result<(Vec<(usize, Exact)>, Vec<Exact>)> {
    let m = layout.num_players;
    let (j, alt) = layout.kibitzer_parts(profile[m]);
    let played = &profile[..m];
    let mut deviated = played.to_vec();
    deviated[j] = alt;
    let a = oracle.query(played)?;
    let b = oracle.query(&deviated)?;
    let diff = (&a[j] - &b[j]).div_int(layout.horizon as i64);
    let enc = &layout.enc(profile)? * &layout.enc_scale();
    let mut rewards = vec![enc.clone(); m + 1];
    rewards[j] = &rewards[j] + &diff;
    rewards[m] = &rewards[m] - &diff;
    Ok((vec![(0, Exact::one())], rewards))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Algorithm2Params {
    pub eps: f64,
    /// Overrides the formula for `K`.
    pub k: Option<u64>,
    /// Overrides `14 (m + 1) eps / H`.
    pub threshold: Option<f64>,
    /// Keep playing after the check passes (the returned profile is still
    /// the first one that passed).
    pub full_episode: bool,
}

impl Algorithm2Params {
    pub fn new(eps: f64) -> Self {
        Algorithm2Params {
            eps,
            k: None,
            threshold: None,
            full_episode: false,
        }
    }
}

/// One step of the transcript.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub h: usize,
    /// Posterior over members for each main player.
    pub posteriors: Vec<Vec<f64>>,
    pub qhats: Vec<Vec<f64>>,
    /// `(main-player profile index, count)` for every sampled profile.
    pub sample_counts: Vec<(usize, u64)>,
    pub rhat: Vec<f64>,
    pub kibitzer_action: usize,
    pub actions: Vec<usize>,
    pub check_passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Algorithm2Run {
    pub outcome: Extraction,
    /// The member `t*` drawn for the episode.
    pub member: usize,
    pub k: u64,
    pub threshold: f64,
    pub transcript: Vec<StepRecord>,
    pub queries: QueryReport,
    pub trajectory: Trajectory,
}

/// One episode of the kibitzer's sampled-argmax deviation against the
/// certificate's mixture, simulated with payoff queries. Returns the first
/// aggregated forecast `q_hat_h` whose chosen kibitzer action has estimated
/// reward at most the threshold; gaps are measured in `original`.
pub fn algorithm2_extract<R: Rng + ?Sized>(
    original: &NormalFormGame,
    kib: &KibitzerConstruction,
    certificate: &SparseCceCertificate,
    params: Algorithm2Params,
    rng: &mut R,
) -> Result<Algorithm2Run> {
    certificate.check(&kib.game)?;
    let layout = &kib.layout;
    let (m, n0, horizon) = (layout.num_players, layout.num_actions, layout.horizon);
    let k = params
        .k
        .unwrap_or_else(|| algorithm2_k(m, n0, params.eps, horizon) as u64);
    if k == 0 {
        return Err(Error::Parameter("K must be positive".into()));
    }
    let threshold = params
        .threshold
        .unwrap_or_else(|| algorithm2_threshold(m, params.eps, horizon));
    let mut oracle = PayoffOracle::new(&kib.source);
    let mut report = QueryReport::default();
    let t_star = rng.random_range(0..certificate.len());
    let member = &certificate.members[t_star];
    let mut joint: Vec<TrajectoryStep> = Vec::with_capacity(horizon);
    let mut transcript = Vec::with_capacity(horizon);
    let mut outcome = Extraction::Fail;
    let mut s = 0usize;
    for h in 0..horizon {
        let qs: Vec<QHat> = (0..m)
            .map(|j| compute_qhat(certificate, j, &joint, s))
            .collect::<Result<_>>()?;
        let qhats: Vec<Vec<f64>> = qs.iter().map(|q| q.qhat.clone()).collect();
        let probs = product_distribution(&qhats, n0);
        let counts = sample_multinomial(k, &probs, rng);
        let distinct = counts.iter().filter(|&&c| c > 0).count() as u64;
        let main_counts = vec![n0; m];
        let mut rhat = vec![0.0; layout.kibitzer_actions()];
        for (kib_action, slot) in rhat.iter_mut().enumerate() {
            for (idx, &c) in counts.iter().enumerate() {
                if c == 0 {
                    continue;
                }
                let mut profile = profile_from_index(&main_counts, idx);
                profile.push(kib_action);
                *slot += c as f64 * reward_via_oracle(&mut oracle, layout, &profile, m)?.to_f64();
            }
            *slot /= k as f64;
        }
        report.rhat_estimation += 2 * distinct * layout.kibitzer_actions() as u64;
        let kibitzer_action = argmax_low(&rhat);
        let mut actions: Vec<usize> = (0..m)
            .map(|j| {
                let own = own_history(&joint, j);
                sample_index(&member.0[j].distribution(&own, s), rng)
            })
            .collect();
        actions.push(kibitzer_action);
        let rewards = (0..=m)
            .map(|j| reward_via_oracle(&mut oracle, layout, &actions, j))
            .collect::<Result<Vec<_>>>()?;
        report.reward_realization += 2 * (m as u64 + 1);
        let (next, _) = simulated_generative_query(&mut oracle, layout, &actions)?;
        report.generative_queries += 1;
        report.generative_simulation += 2;
        let passed = rhat[kibitzer_action] <= threshold;
        transcript.push(StepRecord {
            h,
            posteriors: qs.iter().map(|q| q.posterior.clone()).collect(),
            qhats: qhats.clone(),
            sample_counts: counts
                .iter()
                .enumerate()
                .filter(|(_, &c)| c > 0)
                .map(|(i, &c)| (i, c))
                .collect(),
            rhat,
            kibitzer_action,
            actions: actions.clone(),
            check_passed: passed,
        });
        joint.push(TrajectoryStep {
            state: s,
            actions,
            rewards,
        });
        if passed && !outcome.is_found() {
            let gaps = eps_nash_gap(original, &qhats)?;
            outcome = Extraction::Found {
                member: t_star,
                step: h,
                profile: qhats,
                gaps,
            };
            if !params.full_episode {
                break;
            }
        }
        let probs: Vec<f64> = next.iter().map(|(_, p)| p.to_f64()).collect();
        s = next[sample_index(&probs, rng)].0;
    }
    report.total = oracle.query_count();
    Ok(Algorithm2Run {
        outcome,
        member: t_star,
        k,
        threshold,
        transcript,
        queries: report,
        trajectory: Trajectory { steps: joint },
    })
}
