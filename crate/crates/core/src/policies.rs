//! Markov, general and distributional policies; trajectory sampling and
//! exact enumeration; the embedding of a general policy as a mixture of
//! deterministic policies and its inverse.
//!
//! A player's own history at step `h` is the list of `(state, own action,
//! own reward)` for the steps before `h`. Policies see nothing else, which is
//! what keeps product policies decentralized.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::Exact;
use crate::games::MarkovGame;
use crate::rng::sample_index;

/// Default node budget for exact enumeration.
pub const ENUMERATION_BUDGET: u64 = 1_000_000;

const ROW_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct HistoryStep {
    pub state: usize,
    pub action: usize,
    pub reward: Exact,
}

/// A decision point: own history plus current state.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct HistoryKey {
    pub steps: Vec<HistoryStep>,
    pub state: usize,
}

impl HistoryKey {
    pub fn new(steps: &[HistoryStep], state: usize) -> Self {
        HistoryKey {
            steps: steps.to_vec(),
            state,
        }
    }
}

fn check_row(row: &[f64], what: &str) -> Result<()> {
    if row.iter().any(|p| p.is_nan() || *p < 0.0) {
        return Err(Error::Parameter(format!(
            "{what}: negative or NaN probability"
        )));
    }
    let total: f64 = row.iter().sum();
    if (total - 1.0).abs() > ROW_TOLERANCE {
        return Err(Error::Parameter(format!("{what}: row sums to {total}")));
    }
    Ok(())
}

pub fn point_mass(num_actions: usize, action: usize) -> Vec<f64> {
    let mut row = vec![0.0; num_actions];
    row[action] = 1.0;
    row
}

/// Per-step, per-state action distributions for one player.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarkovPolicy {
    num_states: usize,
    horizon: usize,
    num_actions: usize,
    /// Row `h * S + s`.
    rows: Vec<Vec<f64>>,
}

impl MarkovPolicy {
    pub fn new(
        num_states: usize,
        horizon: usize,
        num_actions: usize,
        rows: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if rows.len() != num_states * horizon {
            return Err(Error::Dimension(format!(
                "{} rows, expected H*S = {}",
                rows.len(),
                num_states * horizon
            )));
        }
        for (k, row) in rows.iter().enumerate() {
            if row.len() != num_actions {
                return Err(Error::Dimension(format!(
                    "row {k} has {} actions",
                    row.len()
                )));
            }
            check_row(row, &format!("markov row {k}"))?;
        }
        Ok(MarkovPolicy {
            num_states,
            horizon,
            num_actions,
            rows,
        })
    }

    pub fn from_fn(
        num_states: usize,
        horizon: usize,
        num_actions: usize,
        mut f: impl FnMut(usize, usize) -> Vec<f64>,
    ) -> Result<Self> {
        let rows = (0..horizon)
            .flat_map(|h| (0..num_states).map(move |s| (h, s)))
            .map(|(h, s)| f(h, s))
            .collect();
        MarkovPolicy::new(num_states, horizon, num_actions, rows)
    }

    pub fn uniform(num_states: usize, horizon: usize, num_actions: usize) -> Self {
        let row = vec![1.0 / num_actions as f64; num_actions];
        MarkovPolicy {
            num_states,
            horizon,
            num_actions,
            rows: vec![row; num_states * horizon],
        }
    }

    /// The same distribution at every `(h, s)`.
    pub fn stationary(num_states: usize, horizon: usize, row: Vec<f64>) -> Result<Self> {
        let a = row.len();
        MarkovPolicy::new(num_states, horizon, a, vec![row; num_states * horizon])
    }

    pub fn deterministic(
        num_states: usize,
        horizon: usize,
        num_actions: usize,
        mut f: impl FnMut(usize, usize) -> usize,
    ) -> Result<Self> {
        MarkovPolicy::from_fn(num_states, horizon, num_actions, |h, s| {
            point_mass(num_actions, f(h, s))
        })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn row(&self, h: usize, s: usize) -> &[f64] {
        &self.rows[h * self.num_states + s]
    }
}

/// A general policy stored as an explicit table. Decision points missing
/// from the table play `default_action`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TabularPolicy {
    num_actions: usize,
    default_action: usize,
    #[serde(with = "entry_list")]
    entries: HashMap<HistoryKey, Vec<f64>>,
}

impl TabularPolicy {
    pub fn new(
        num_actions: usize,
        default_action: usize,
        entries: HashMap<HistoryKey, Vec<f64>>,
    ) -> Result<Self> {
        if default_action >= num_actions {
            return Err(Error::Index(format!("default action {default_action}")));
        }
        for (key, row) in &entries {
            if row.len() != num_actions {
                return Err(Error::Dimension(format!("row at {key:?} has wrong width")));
            }
            check_row(row, "tabular row")?;
        }
        Ok(TabularPolicy {
            num_actions,
            default_action,
            entries,
        })
    }

    pub fn entries(&self) -> &HashMap<HistoryKey, Vec<f64>> {
        &self.entries
    }

    pub fn distribution(&self, history: &[HistoryStep], state: usize) -> Vec<f64> {
        match self.entries.get(&HistoryKey::new(history, state)) {
            Some(row) => row.clone(),
            None => point_mass(self.num_actions, self.default_action),
        }
    }
}

mod entry_list {
    use super::*;
    use serde::{Deserializer, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Entry<T> {
        history: Vec<HistoryStep>,
        state: usize,
        value: T,
    }

    pub fn serialize<S: Serializer, T: Serialize + Clone>(
        map: &HashMap<HistoryKey, T>,
        ser: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        let mut sorted: Vec<_> = map.iter().collect();
        sorted.sort_by(|a, b| a.0.cmp(b.0));
        let list: Vec<Entry<T>> = sorted
            .into_iter()
            .map(|(k, v)| Entry {
                history: k.steps.clone(),
                state: k.state,
                value: v.clone(),
            })
            .collect();
        list.serialize(ser)
    }

    pub fn deserialize<'de, D: Deserializer<'de>, T: Deserialize<'de>>(
        de: D,
    ) -> std::result::Result<HashMap<HistoryKey, T>, D::Error> {
        let list: Vec<Entry<T>> = Vec::deserialize(de)?;
        Ok(list
            .into_iter()
            .map(|e| {
                (
                    HistoryKey {
                        steps: e.history,
                        state: e.state,
                    },
                    e.value,
                )
            })
            .collect())
    }
}

/// A deterministic general policy. Decision points missing from the table
/// play action 0.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeterministicPolicy {
    num_actions: usize,
    #[serde(with = "entry_list")]
    actions: HashMap<HistoryKey, usize>,
}

impl DeterministicPolicy {
    pub fn new(num_actions: usize, actions: HashMap<HistoryKey, usize>) -> Result<Self> {
        if let Some((k, a)) = actions.iter().find(|(_, &a)| a >= num_actions) {
            return Err(Error::Index(format!("action {a} at {k:?}")));
        }
        Ok(DeterministicPolicy {
            num_actions,
            actions,
        })
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn actions(&self) -> &HashMap<HistoryKey, usize> {
        &self.actions
    }

    pub fn action(&self, history: &[HistoryStep], state: usize) -> usize {
        self.actions
            .get(&HistoryKey::new(history, state))
            .copied()
            .unwrap_or(0)
    }

    pub fn set(&mut self, key: HistoryKey, action: usize) {
        self.actions.insert(key, action);
    }
}

type Evaluator = dyn Fn(&[HistoryStep], usize) -> Vec<f64> + Send + Sync;

/// A policy given by code, with a caller-declared description size.
pub struct ProceduralPolicy {
    pub name: String,
    pub num_actions: usize,
    pub declared_size: u64,
    eval: Box<Evaluator>,
}

impl ProceduralPolicy {
    pub fn new(
        name: impl Into<String>,
        num_actions: usize,
        declared_size: u64,
        eval: impl Fn(&[HistoryStep], usize) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        ProceduralPolicy {
            name: name.into(),
            num_actions,
            declared_size,
            eval: Box::new(eval),
        }
    }
}

impl fmt::Debug for ProceduralPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProceduralPolicy")
            .field("name", &self.name)
            .field("num_actions", &self.num_actions)
            .field("declared_size", &self.declared_size)
            .finish()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    Markov,
    TabularGeneral,
    Procedural,
}

/// A general policy for one player.
#[derive(Clone, Debug)]
pub enum PolicyProgram {
    Markov(Arc<MarkovPolicy>),
    Tabular(Arc<TabularPolicy>),
    Deterministic(Arc<DeterministicPolicy>),
    Procedural(Arc<ProceduralPolicy>),
}

impl PolicyProgram {
    pub fn markov(p: MarkovPolicy) -> Self {
        PolicyProgram::Markov(Arc::new(p))
    }

    pub fn deterministic(p: DeterministicPolicy) -> Self {
        PolicyProgram::Deterministic(Arc::new(p))
    }

    pub fn procedural(
        name: impl Into<String>,
        num_actions: usize,
        declared_size: u64,
        eval: impl Fn(&[HistoryStep], usize) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        PolicyProgram::Procedural(Arc::new(ProceduralPolicy::new(
            name,
            num_actions,
            declared_size,
            eval,
        )))
    }

    pub fn num_actions(&self) -> usize {
        match self {
            PolicyProgram::Markov(p) => p.num_actions,
            PolicyProgram::Tabular(p) => p.num_actions,
            PolicyProgram::Deterministic(p) => p.num_actions,
            PolicyProgram::Procedural(p) => p.num_actions,
        }
    }

    pub fn kind(&self) -> PolicyKind {
        match self {
            PolicyProgram::Markov(_) => PolicyKind::Markov,
            PolicyProgram::Tabular(_) | PolicyProgram::Deterministic(_) => {
                PolicyKind::TabularGeneral
            }
            PolicyProgram::Procedural(_) => PolicyKind::Procedural,
        }
    }

    /// Size of the description: table cells for stored policies, the
    /// caller's claim for procedural ones.
    pub fn declared_size(&self) -> u64 {
        match self {
            PolicyProgram::Markov(p) => (p.rows.len() * p.num_actions) as u64,
            PolicyProgram::Tabular(p) => (p.entries.len() * p.num_actions) as u64,
            PolicyProgram::Deterministic(p) => p.actions.len() as u64,
            PolicyProgram::Procedural(p) => p.declared_size,
        }
    }

    pub fn as_markov(&self) -> Option<&MarkovPolicy> {
        match self {
            PolicyProgram::Markov(p) => Some(p),
            _ => None,
        }
    }

    /// Action distribution at the decision point `(history, state)`; the
    /// step index is `history.len()`.
    pub fn distribution(&self, history: &[HistoryStep], state: usize) -> Vec<f64> {
        match self {
            PolicyProgram::Markov(p) => p.row(history.len(), state).to_vec(),
            PolicyProgram::Tabular(p) => p.distribution(history, state),
            PolicyProgram::Deterministic(p) => point_mass(p.num_actions, p.action(history, state)),
            PolicyProgram::Procedural(p) => (p.eval)(history, state),
        }
    }

    pub fn to_document(&self) -> Result<PolicyDocument> {
        match self {
            PolicyProgram::Markov(p) => Ok(PolicyDocument::Markov((**p).clone())),
            PolicyProgram::Tabular(p) => Ok(PolicyDocument::TabularGeneral((**p).clone())),
            PolicyProgram::Deterministic(p) => Ok(PolicyDocument::Deterministic((**p).clone())),
            PolicyProgram::Procedural(p) => Err(Error::NotSerializable(p.name.clone())),
        }
    }

    pub fn is_serializable(&self) -> bool {
        !matches!(self, PolicyProgram::Procedural(_))
    }
}

/// On-disk form of the stored policy kinds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PolicyDocument {
    Markov(MarkovPolicy),
    TabularGeneral(TabularPolicy),
    Deterministic(DeterministicPolicy),
}

impl From<PolicyDocument> for PolicyProgram {
    fn from(doc: PolicyDocument) -> Self {
        match doc {
            PolicyDocument::Markov(p) => PolicyProgram::Markov(Arc::new(p)),
            PolicyDocument::TabularGeneral(p) => PolicyProgram::Tabular(Arc::new(p)),
            PolicyDocument::Deterministic(p) => PolicyProgram::Deterministic(Arc::new(p)),
        }
    }
}

/// One policy per player, randomizing independently.
#[derive(Clone, Debug)]
pub struct ProductPolicy(pub Vec<PolicyProgram>);

impl ProductPolicy {
    pub fn num_players(&self) -> usize {
        self.0.len()
    }

    pub fn player(&self, i: usize) -> &PolicyProgram {
        &self.0[i]
    }

    /// Same profile with player `i` replaced.
    pub fn with_player(&self, i: usize, policy: PolicyProgram) -> Self {
        let mut v = self.0.clone();
        v[i] = policy;
        ProductPolicy(v)
    }

    pub fn check(&self, game: &MarkovGame) -> Result<()> {
        if self.0.len() != game.num_players() {
            return Err(Error::Dimension(format!(
                "{} policies for {} players",
                self.0.len(),
                game.num_players()
            )));
        }
        for (i, (p, &a)) in self.0.iter().zip(game.action_counts()).enumerate() {
            if p.num_actions() != a {
                return Err(Error::Dimension(format!(
                    "policy {i} has {} actions, game has {a}",
                    p.num_actions()
                )));
            }
            if let Some(m) = p.as_markov() {
                if m.num_states != game.num_states() || m.horizon != game.horizon() {
                    return Err(Error::Dimension(format!(
                        "markov policy {i} shaped for S={}, H={}",
                        m.num_states, m.horizon
                    )));
                }
            }
        }
        Ok(())
    }

    /// All members Markov.
    pub fn markov_members(&self) -> Option<Vec<&MarkovPolicy>> {
        self.0.iter().map(PolicyProgram::as_markov).collect()
    }
}

/// A finite mixture of product policies; one member is drawn per episode.
#[derive(Clone, Debug)]
pub struct DistributionalPolicy {
    members: Vec<(f64, ProductPolicy)>,
}

impl DistributionalPolicy {
    pub fn new(members: Vec<(f64, ProductPolicy)>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::Parameter("empty mixture".into()));
        }
        let weights: Vec<f64> = members.iter().map(|(w, _)| *w).collect();
        check_row(&weights, "mixture weights")?;
        let m = members[0].1.num_players();
        if members.iter().any(|(_, p)| p.num_players() != m) {
            return Err(Error::Dimension("mixture members disagree on m".into()));
        }
        Ok(DistributionalPolicy { members })
    }

    pub fn single(policy: ProductPolicy) -> Self {
        DistributionalPolicy {
            members: vec![(1.0, policy)],
        }
    }

    /// `(1/T) sum_t 1_{sigma^t}`.
    pub fn uniform(members: Vec<ProductPolicy>) -> Result<Self> {
        let t = members.len() as f64;
        DistributionalPolicy::new(members.into_iter().map(|p| (1.0 / t, p)).collect())
    }

    pub fn members(&self) -> &[(f64, ProductPolicy)] {
        &self.members
    }

    pub fn num_players(&self) -> usize {
        self.members[0].1.num_players()
    }

    /// Player `i` deviates to `policy` in every member.
    pub fn with_deviation(&self, i: usize, policy: &PolicyProgram) -> Self {
        DistributionalPolicy {
            members: self
                .members
                .iter()
                .map(|(w, p)| (*w, p.with_player(i, policy.clone())))
                .collect(),
        }
    }

    pub fn check(&self, game: &MarkovGame) -> Result<()> {
        self.members.iter().try_for_each(|(_, p)| p.check(game))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TrajectoryStep {
    pub state: usize,
    pub actions: Vec<usize>,
    pub rewards: Vec<Exact>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Trajectory {
    pub steps: Vec<TrajectoryStep>,
}

impl Trajectory {
    pub fn own_history(&self, player: usize) -> Vec<HistoryStep> {
        own_history(&self.steps, player)
    }

    pub fn total_reward(&self, player: usize) -> Exact {
        Exact::sum(self.steps.iter().map(|s| &s.rewards[player]))
    }
}

/// Player `i`'s view of a joint history.
pub fn own_history(steps: &[TrajectoryStep], player: usize) -> Vec<HistoryStep> {
    steps
        .iter()
        .map(|s| HistoryStep {
            state: s.state,
            action: s.actions[player],
            reward: s.rewards[player].clone(),
        })
        .collect()
}

fn sample_state<R: Rng + ?Sized>(row: &[(usize, f64)], rng: &mut R) -> usize {
    let probs: Vec<f64> = row.iter().map(|(_, p)| *p).collect();
    row[sample_index(&probs, rng)].0
}

/// One episode of a product policy.
pub fn sample_trajectory<R: Rng + ?Sized>(
    game: &MarkovGame,
    policy: &ProductPolicy,
    rng: &mut R,
) -> Result<Trajectory> {
    policy.check(game)?;
    let m = game.num_players();
    let mut histories: Vec<Vec<HistoryStep>> = vec![Vec::new(); m];
    let mut steps = Vec::with_capacity(game.horizon());
    let mut s = sample_state(game.initial_f64(), rng);
    for h in 0..game.horizon() {
        let actions: Vec<usize> = (0..m)
            .map(|i| sample_index(&policy.0[i].distribution(&histories[i], s), rng))
            .collect();
        let joint = game.joint_index(&actions)?;
        let rewards = game.rewards_at(h, s, joint);
        for (i, hist) in histories.iter_mut().enumerate() {
            hist.push(HistoryStep {
                state: s,
                action: actions[i],
                reward: rewards[i].clone(),
            });
        }
        steps.push(TrajectoryStep {
            state: s,
            actions,
            rewards,
        });
        if h + 1 < game.horizon() {
            s = sample_state(game.transition_f64(h, s, joint), rng);
        }
    }
    Ok(Trajectory { steps })
}

/// One episode of a mixture: the member is drawn once, then played.
pub fn sample_mixture_trajectory<R: Rng + ?Sized>(
    game: &MarkovGame,
    policy: &DistributionalPolicy,
    rng: &mut R,
) -> Result<(usize, Trajectory)> {
    let weights: Vec<f64> = policy.members.iter().map(|(w, _)| *w).collect();
    let t = sample_index(&weights, rng);
    Ok((t, sample_trajectory(game, &policy.members[t].1, rng)?))
}

struct Walker<'a, F> {
    game: &'a MarkovGame,
    policy: &'a ProductPolicy,
    budget: u64,
    nodes: &'a mut u64,
    histories: Vec<Vec<HistoryStep>>,
    steps: Vec<TrajectoryStep>,
    visit: F,
}

impl<F: FnMut(&[TrajectoryStep], f64)> Walker<'_, F> {
    fn step(&mut self, h: usize, s: usize, prob: f64) -> Result<()> {
        let m = self.game.num_players();
        let supports: Vec<Vec<(usize, f64)>> = (0..m)
            .map(|i| {
                self.policy.0[i]
                    .distribution(&self.histories[i], s)
                    .into_iter()
                    .enumerate()
                    .filter(|(_, p)| *p > 0.0)
                    .collect()
            })
            .collect();
        let mut digits = vec![0usize; m];
        loop {
            *self.nodes += 1;
            if *self.nodes > self.budget {
                return Err(Error::Budget {
                    what: "trajectory enumeration",
                    budget: self.budget,
                });
            }
            let actions: Vec<usize> = (0..m).map(|i| supports[i][digits[i]].0).collect();
            let p = (0..m).fold(prob, |acc, i| acc * supports[i][digits[i]].1);
            let joint = self.game.joint_index(&actions)?;
            let rewards = self.game.rewards_at(h, s, joint);
            for (i, hist) in self.histories.iter_mut().enumerate() {
                hist.push(HistoryStep {
                    state: s,
                    action: actions[i],
                    reward: rewards[i].clone(),
                });
            }
            self.steps.push(TrajectoryStep {
                state: s,
                actions,
                rewards,
            });
            if h + 1 == self.game.horizon() {
                (self.visit)(&self.steps, p);
            } else {
                for &(next, q) in self.game.transition_f64(h, s, joint) {
                    self.step(h + 1, next, p * q)?;
                }
            }
            self.steps.pop();
            for hist in &mut self.histories {
                hist.pop();
            }
            // Advance the odometer over the joint support.
            let mut i = m;
            loop {
                if i == 0 {
                    return Ok(());
                }
                i -= 1;
                digits[i] += 1;
                if digits[i] < supports[i].len() {
                    break;
                }
                digits[i] = 0;
            }
        }
    }
}

/// Visit every complete trajectory of `policy` with its probability. Fails
/// once more than `budget` action nodes have been expanded.
pub fn for_each_trajectory(
    game: &MarkovGame,
    policy: &DistributionalPolicy,
    budget: u64,
    mut visit: impl FnMut(usize, &[TrajectoryStep], f64),
) -> Result<()> {
    policy.check(game)?;
    let mut nodes = 0u64;
    for (t, (w, member)) in policy.members.iter().enumerate() {
        if *w == 0.0 {
            continue;
        }
        let mut walker = Walker {
            game,
            policy: member,
            budget,
            nodes: &mut nodes,
            histories: vec![Vec::new(); game.num_players()],
            steps: Vec::with_capacity(game.horizon()),
            visit: |steps: &[TrajectoryStep], p: f64| visit(t, steps, p),
        };
        for &(s0, p0) in game.initial_f64() {
            walker.step(0, s0, w * p0)?;
        }
    }
    Ok(())
}

/// Exact distribution over complete trajectories.
pub type TrajectoryDistribution = BTreeMap<Trajectory, f64>;

pub fn enumerate_trajectory_distribution(
    game: &MarkovGame,
    policy: &DistributionalPolicy,
    budget: u64,
) -> Result<TrajectoryDistribution> {
    let mut dist = TrajectoryDistribution::new();
    for_each_trajectory(game, policy, budget, |_, steps, p| {
        if p > 0.0 {
            *dist
                .entry(Trajectory {
                    steps: steps.to_vec(),
                })
                .or_insert(0.0) += p;
        }
    })?;
    Ok(dist)
}

/// Largest per-trajectory probability difference.
pub fn max_distribution_difference(a: &TrajectoryDistribution, b: &TrajectoryDistribution) -> f64 {
    let only_a = a
        .iter()
        .map(|(k, p)| (p - b.get(k).copied().unwrap_or(0.0)).abs());
    let only_b = b
        .iter()
        .filter(|(k, _)| !a.contains_key(*k))
        .map(|(_, p)| p.abs());
    only_a.chain(only_b).fold(0.0, f64::max)
}

/// Possible `(own reward, next state)` pairs after `player` plays `action`
/// at `(h, s)`, over every action of the others and every transition.
fn own_outcomes(
    game: &MarkovGame,
    player: usize,
    h: usize,
    s: usize,
    action: usize,
) -> Vec<(Exact, Option<usize>)> {
    let mut out = Vec::new();
    for joint in 0..game.num_joint() {
        if game.joint_profile(joint)[player] != action {
            continue;
        }
        let r = game.reward(player, h, s, joint).clone();
        if h + 1 == game.horizon() {
            out.push((r, None));
        } else {
            for (next, _) in game.transition(h, s, joint) {
                out.push((r.clone(), Some(*next)));
            }
        }
    }
    out.sort();
    out.dedup();
    out
}

type Partial = (f64, Vec<(HistoryKey, usize)>);

struct Embedder<'a> {
    game: &'a MarkovGame,
    player: usize,
    policy: &'a PolicyProgram,
    budget: u64,
    produced: u64,
}

impl Embedder<'_> {
    fn charge(&mut self, n: usize) -> Result<()> {
        self.produced += n as u64;
        if self.produced > self.budget {
            return Err(Error::Budget {
                what: "policy embedding",
                budget: self.budget,
            });
        }
        Ok(())
    }

    /// Cartesian product of independent partial policies.
    fn product(&mut self, parts: Vec<Vec<Partial>>) -> Result<Vec<Partial>> {
        let mut acc: Vec<Partial> = vec![(1.0, Vec::new())];
        for part in parts {
            self.charge(acc.len() * part.len())?;
            let mut next = Vec::with_capacity(acc.len() * part.len());
            for (w, assign) in &acc {
                for (v, more) in &part {
                    let mut joined = assign.clone();
                    joined.extend(more.iter().cloned());
                    next.push((w * v, joined));
                }
            }
            acc = next;
        }
        Ok(acc)
    }

    fn node(&mut self, history: &mut Vec<HistoryStep>, s: usize) -> Result<Vec<Partial>> {
        let h = history.len();
        let dist = self.policy.distribution(history, s);
        let key = HistoryKey::new(history, s);
        let mut out = Vec::new();
        for (a, &p) in dist.iter().enumerate() {
            if p <= 0.0 {
                continue;
            }
            let mut children = Vec::new();
            for (r, next) in own_outcomes(self.game, self.player, h, s, a) {
                if let Some(next) = next {
                    history.push(HistoryStep {
                        state: s,
                        action: a,
                        reward: r,
                    });
                    let sub = self.node(history, next);
                    history.pop();
                    children.push(sub?);
                }
            }
            for (w, mut assign) in self.product(children)? {
                assign.push((key.clone(), a));
                out.push((p * w, assign));
            }
        }
        Ok(out)
    }
}

/// Mixture of deterministic policies whose play is distributed exactly as
/// `policy`. Each deterministic policy is specified on the decision points
/// consistent with its own earlier choices and plays action 0 elsewhere, so
/// each weight is the product of `policy`'s probabilities over those points.
pub fn pe_embed(
    game: &MarkovGame,
    player: usize,
    policy: &PolicyProgram,
    budget: u64,
) -> Result<Vec<(f64, DeterministicPolicy)>> {
    if player >= game.num_players() {
        return Err(Error::Index(format!("player {player}")));
    }
    let mut e = Embedder {
        game,
        player,
        policy,
        budget,
        produced: 0,
    };
    let mut roots = Vec::new();
    for &(s0, _) in game.initial() {
        roots.push(e.node(&mut Vec::new(), s0)?);
    }
    let num_actions = policy.num_actions();
    Ok(e.product(roots)?
        .into_iter()
        .filter(|(w, _)| *w > 0.0)
        .map(|(w, assign)| {
            let actions = assign.into_iter().collect();
            (
                w,
                DeterministicPolicy {
                    num_actions,
                    actions,
                },
            )
        })
        .collect())
}

/// The general policy that plays like a mixture of deterministic policies:
/// at each decision point, the conditional law of the drawn policy's action
/// given that it produced the observed own actions. If no member is
/// consistent with the history, it plays action 0.
pub fn pf_inverse(num_actions: usize, mixture: Vec<(f64, DeterministicPolicy)>) -> PolicyProgram {
    let size = mixture
        .iter()
        .map(|(_, p)| p.actions.len() as u64 + 1)
        .sum();
    PolicyProgram::procedural("pf-inverse", num_actions, size, move |history, state| {
        let mut row = vec![0.0; num_actions];
        let mut total = 0.0;
        for (w, pi) in &mixture {
            let consistent = history
                .iter()
                .enumerate()
                .all(|(g, step)| pi.action(&history[..g], step.state) == step.action);
            if consistent {
                row[pi.action(history, state)] += w;
                total += w;
            }
        }
        if total > 0.0 {
            row.iter_mut().for_each(|x| *x /= total);
            row
        } else {
            point_mass(num_actions, 0)
        }
    })
}
