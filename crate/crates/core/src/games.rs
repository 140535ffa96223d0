//! Normal-form and tabular Markov games, with query-counted oracles.
//!
//! Joint actions are indexed in mixed radix with player 0 as the most
//! significant digit. Markov game tables are flat vectors indexed by
//! `(h * S + s) * J + joint` where `J` is the number of joint actions.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::Exact;

/// Mixed-radix index of a profile, player 0 most significant.
pub fn profile_index(counts: &[usize], profile: &[usize]) -> Result<usize> {
    if profile.len() != counts.len() {
        return Err(Error::Dimension(format!(
            "profile has {} entries, expected {}",
            profile.len(),
            counts.len()
        )));
    }
    let mut idx = 0usize;
    for (player, (&a, &n)) in profile.iter().zip(counts).enumerate() {
        if a >= n {
            return Err(Error::Index(format!(
                "action {a} of player {player} not below {n}"
            )));
        }
        idx = idx * n + a;
    }
    Ok(idx)
}

/// Inverse of [`profile_index`].
pub fn profile_from_index(counts: &[usize], mut idx: usize) -> Vec<usize> {
    let mut profile = vec![0; counts.len()];
    for (slot, &n) in profile.iter_mut().zip(counts).rev() {
        *slot = idx % n;
        idx /= n;
    }
    profile
}

fn checked_product(counts: &[usize]) -> Result<usize> {
    counts.iter().try_fold(1usize, |acc, &n| {
        acc.checked_mul(n)
            .ok_or_else(|| Error::Dimension("joint action space overflows".into()))
    })
}

/// An m-player normal-form game with `n` actions per player and payoffs in
/// `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NormalFormDoc", into = "NormalFormDoc")]
pub struct NormalFormGame {
    num_players: usize,
    num_actions: usize,
    bit_budget: u32,
    payoffs: Vec<Vec<Exact>>,
    payoffs_f64: Vec<Vec<f64>>,
}

#[derive(Clone, Serialize, Deserialize)]
struct NormalFormDoc {
    num_players: usize,
    num_actions: usize,
    bit_budget: u32,
    /// `payoffs[i][profile_index]`.
    payoffs: Vec<Vec<Exact>>,
}

impl TryFrom<NormalFormDoc> for NormalFormGame {
    type Error = Error;
    fn try_from(doc: NormalFormDoc) -> Result<Self> {
        NormalFormGame::new(
            doc.num_players,
            doc.num_actions,
            doc.bit_budget,
            doc.payoffs,
        )
    }
}

impl From<NormalFormGame> for NormalFormDoc {
    fn from(g: NormalFormGame) -> Self {
        NormalFormDoc {
            num_players: g.num_players,
            num_actions: g.num_actions,
            bit_budget: g.bit_budget,
            payoffs: g.payoffs,
        }
    }
}

impl NormalFormGame {
    /// Checks shapes only; value constraints are reported by
    /// [`validate_normal_form`].
    pub fn new(
        num_players: usize,
        num_actions: usize,
        bit_budget: u32,
        payoffs: Vec<Vec<Exact>>,
    ) -> Result<Self> {
        if num_players < 2 {
            return Err(Error::Dimension("a normal-form game needs m >= 2".into()));
        }
        if num_actions < 1 {
            return Err(Error::Dimension("each player needs an action".into()));
        }
        let size = checked_product(&vec![num_actions; num_players])?;
        if payoffs.len() != num_players {
            return Err(Error::Dimension(format!(
                "{} payoff tensors for {} players",
                payoffs.len(),
                num_players
            )));
        }
        if let Some((i, t)) = payoffs.iter().enumerate().find(|(_, t)| t.len() != size) {
            return Err(Error::Dimension(format!(
                "payoff tensor {i} has {} entries, expected {size}",
                t.len()
            )));
        }
        let payoffs_f64 = payoffs
            .iter()
            .map(|t| t.iter().map(Exact::to_f64).collect())
            .collect();
        Ok(NormalFormGame {
            num_players,
            num_actions,
            bit_budget,
            payoffs,
            payoffs_f64,
        })
    }

    /// Two-player game from row-major matrices `m1[a1][a2]`, `m2[a1][a2]`.
    pub fn bimatrix(m1: &[Vec<Exact>], m2: &[Vec<Exact>], bit_budget: u32) -> Result<Self> {
        let n = m1.len();
        if m2.len() != n || m1.iter().chain(m2).any(|row| row.len() != n) {
            return Err(Error::Dimension(
                "bimatrix must be square and matching".into(),
            ));
        }
        let flat = |m: &[Vec<Exact>]| m.iter().flatten().cloned().collect::<Vec<_>>();
        NormalFormGame::new(2, n, bit_budget, vec![flat(m1), flat(m2)])
    }

    /// Build from a payoff function of the profile.
    pub fn from_fn(
        num_players: usize,
        num_actions: usize,
        bit_budget: u32,
        mut payoff: impl FnMut(usize, &[usize]) -> Exact,
    ) -> Result<Self> {
        let counts = vec![num_actions; num_players];
        let size = checked_product(&counts)?;
        let payoffs = (0..num_players)
            .map(|i| {
                (0..size)
                    .map(|idx| payoff(i, &profile_from_index(&counts, idx)))
                    .collect()
            })
            .collect();
        NormalFormGame::new(num_players, num_actions, bit_budget, payoffs)
    }

    pub fn num_players(&self) -> usize {
        self.num_players
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn bit_budget(&self) -> u32 {
        self.bit_budget
    }

    pub fn num_profiles(&self) -> usize {
        self.payoffs[0].len()
    }

    pub fn action_counts(&self) -> Vec<usize> {
        vec![self.num_actions; self.num_players]
    }

    pub fn index(&self, profile: &[usize]) -> Result<usize> {
        profile_index(&self.action_counts(), profile)
    }

    pub fn profile(&self, idx: usize) -> Vec<usize> {
        profile_from_index(&self.action_counts(), idx)
    }

    pub fn payoff(&self, player: usize, profile: &[usize]) -> Result<&Exact> {
        let idx = self.index(profile)?;
        Ok(&self.payoffs[player][idx])
    }

    pub fn payoff_at(&self, player: usize, idx: usize) -> &Exact {
        &self.payoffs[player][idx]
    }

    pub fn payoff_f64_at(&self, player: usize, idx: usize) -> f64 {
        self.payoffs_f64[player][idx]
    }

    pub fn payoff_table(&self, player: usize) -> &[Exact] {
        &self.payoffs[player]
    }

    pub fn payoff_table_f64(&self, player: usize) -> &[f64] {
        &self.payoffs_f64[player]
    }

    /// Same game with a different bit budget.
    pub fn with_bit_budget(&self, bit_budget: u32) -> Self {
        NormalFormGame {
            bit_budget,
            ..self.clone()
        }
    }

    /// One CSV row per profile: the action of each player, then each payoff.
    pub fn write_payoff_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = (0..self.num_players).map(|i| format!("a{i}")).collect();
        header.extend((0..self.num_players).map(|i| format!("payoff{i}")));
        w.write_record(&header).map_err(csv_err)?;
        for idx in 0..self.num_profiles() {
            let mut row: Vec<String> = self.profile(idx).iter().map(|a| a.to_string()).collect();
            row.extend(self.payoffs.iter().map(|t| t[idx].to_string()));
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::Format(e.to_string()))
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

/// Violated invariants of a normal-form game; empty when valid.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn validate_normal_form(game: &NormalFormGame) -> ValidationReport {
    let mut violations = Vec::new();
    let one = Exact::one();
    for (i, table) in game.payoffs.iter().enumerate() {
        for (idx, x) in table.iter().enumerate() {
            let profile = game.profile(idx);
            if x.is_negative() || *x > one {
                violations.push(format!(
                    "payoff out of [0,1]: player {i} at {profile:?} is {x}"
                ));
            }
            if !x.fits_bits(game.bit_budget) {
                violations.push(format!(
                    "not dyadic within budget: player {i} at {profile:?} is {x}, budget {} bits",
                    game.bit_budget
                ));
            }
        }
    }
    ValidationReport { violations }
}

/// A finite-horizon tabular Markov game.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MarkovDoc", into = "MarkovDoc")]
pub struct MarkovGame {
    num_states: usize,
    horizon: usize,
    action_counts: Vec<usize>,
    num_joint: usize,
    initial: Vec<(usize, Exact)>,
    transitions: Vec<Vec<(usize, Exact)>>,
    rewards: Vec<Vec<Exact>>,
    initial_f64: Vec<(usize, f64)>,
    transitions_f64: Vec<Vec<(usize, f64)>>,
    rewards_f64: Vec<Vec<f64>>,
}

#[derive(Clone, Serialize, Deserialize)]
struct MarkovDoc {
    num_states: usize,
    horizon: usize,
    action_counts: Vec<usize>,
    initial: Vec<(usize, Exact)>,
    /// Sparse rows indexed by `(h * S + s) * J + joint`.
    transitions: Vec<Vec<(usize, Exact)>>,
    /// `rewards[i]`, same indexing as `transitions`.
    rewards: Vec<Vec<Exact>>,
}

impl TryFrom<MarkovDoc> for MarkovGame {
    type Error = Error;
    fn try_from(d: MarkovDoc) -> Result<Self> {
        MarkovGame::new(
            d.num_states,
            d.horizon,
            d.action_counts,
            d.initial,
            d.transitions,
            d.rewards,
        )
    }
}

impl From<MarkovGame> for MarkovDoc {
    fn from(g: MarkovGame) -> Self {
        MarkovDoc {
            num_states: g.num_states,
            horizon: g.horizon,
            action_counts: g.action_counts,
            initial: g.initial,
            transitions: g.transitions,
            rewards: g.rewards,
        }
    }
}

fn check_distribution(row: &[(usize, Exact)], num_states: usize, what: &str) -> Result<()> {
    if let Some((s, _)) = row.iter().find(|(s, _)| *s >= num_states) {
        return Err(Error::Index(format!(
            "{what}: state {s} not below {num_states}"
        )));
    }
    if row.iter().any(|(_, p)| p.is_negative()) {
        return Err(Error::Parameter(format!("{what}: negative probability")));
    }
    let total = Exact::sum(row.iter().map(|(_, p)| p));
    if total != Exact::one() {
        return Err(Error::Parameter(format!(
            "{what}: probabilities sum to {total}"
        )));
    }
    Ok(())
}

impl MarkovGame {
    /// Validates table shapes, that every distribution sums to exactly 1 and
    /// that every reward lies in `[-1/H, 1/H]`. Zero-probability entries are
    /// dropped from sparse rows.
    pub fn new(
        num_states: usize,
        horizon: usize,
        action_counts: Vec<usize>,
        initial: Vec<(usize, Exact)>,
        transitions: Vec<Vec<(usize, Exact)>>,
        rewards: Vec<Vec<Exact>>,
    ) -> Result<Self> {
        if num_states == 0 || horizon == 0 || action_counts.is_empty() {
            return Err(Error::Dimension(
                "empty state space, horizon or player set".into(),
            ));
        }
        if action_counts.contains(&0) {
            return Err(Error::Dimension("every player needs an action".into()));
        }
        let num_joint = checked_product(&action_counts)?;
        let cells = horizon * num_states * num_joint;
        if transitions.len() != cells {
            return Err(Error::Dimension(format!(
                "{} transition rows, expected {cells}",
                transitions.len()
            )));
        }
        if rewards.len() != action_counts.len() || rewards.iter().any(|r| r.len() != cells) {
            return Err(Error::Dimension(format!(
                "reward tables must be {} tables of {cells} entries",
                action_counts.len()
            )));
        }
        let strip = |row: Vec<(usize, Exact)>| -> Vec<(usize, Exact)> {
            row.into_iter().filter(|(_, p)| !p.is_zero()).collect()
        };
        let initial = strip(initial);
        check_distribution(&initial, num_states, "initial distribution")?;
        let transitions: Vec<_> = transitions.into_iter().map(strip).collect();
        for (cell, row) in transitions.iter().enumerate() {
            check_distribution(row, num_states, &format!("transition row {cell}"))?;
        }
        let bound = Exact::ratio(1, horizon as i64);
        for (i, table) in rewards.iter().enumerate() {
            if let Some((cell, r)) = table.iter().enumerate().find(|(_, r)| r.abs() > bound) {
                return Err(Error::Parameter(format!(
                    "reward {r} of player {i} at cell {cell} outside [-1/H, 1/H]"
                )));
            }
        }
        let to_f64 =
            |row: &Vec<(usize, Exact)>| row.iter().map(|(s, p)| (*s, p.to_f64())).collect();
        Ok(MarkovGame {
            num_states,
            horizon,
            num_joint,
            initial_f64: to_f64(&initial),
            transitions_f64: transitions.iter().map(to_f64).collect(),
            rewards_f64: rewards
                .iter()
                .map(|t| t.iter().map(Exact::to_f64).collect())
                .collect(),
            action_counts,
            initial,
            transitions,
            rewards,
        })
    }

    /// Build from a function `(h, s, profile) -> (next-state row, rewards)`.
    pub fn from_fn(
        num_states: usize,
        horizon: usize,
        action_counts: Vec<usize>,
        initial: Vec<(usize, Exact)>,
        mut cell: impl FnMut(usize, usize, &[usize]) -> (Vec<(usize, Exact)>, Vec<Exact>),
    ) -> Result<Self> {
        let num_joint = checked_product(&action_counts)?;
        let m = action_counts.len();
        let cells = horizon * num_states * num_joint;
        let mut transitions = Vec::with_capacity(cells);
        let mut rewards = vec![Vec::with_capacity(cells); m];
        for h in 0..horizon {
            for s in 0..num_states {
                for j in 0..num_joint {
                    let (row, r) = cell(h, s, &profile_from_index(&action_counts, j));
                    if r.len() != m {
                        return Err(Error::Dimension(format!(
                            "{} rewards for {m} players",
                            r.len()
                        )));
                    }
                    transitions.push(row);
                    for (table, x) in rewards.iter_mut().zip(r) {
                        table.push(x);
                    }
                }
            }
        }
        MarkovGame::new(
            num_states,
            horizon,
            action_counts,
            initial,
            transitions,
            rewards,
        )
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_players(&self) -> usize {
        self.action_counts.len()
    }

    pub fn action_counts(&self) -> &[usize] {
        &self.action_counts
    }

    pub fn num_joint(&self) -> usize {
        self.num_joint
    }

    pub fn joint_index(&self, profile: &[usize]) -> Result<usize> {
        profile_index(&self.action_counts, profile)
    }

    pub fn joint_profile(&self, joint: usize) -> Vec<usize> {
        profile_from_index(&self.action_counts, joint)
    }

    fn cell(&self, h: usize, s: usize, joint: usize) -> usize {
        (h * self.num_states + s) * self.num_joint + joint
    }

    pub fn check_cell(&self, h: usize, s: usize, joint: usize) -> Result<()> {
        if h >= self.horizon || s >= self.num_states || joint >= self.num_joint {
            return Err(Error::Index(format!(
                "(h={h}, s={s}, joint={joint}) outside H={}, S={}, J={}",
                self.horizon, self.num_states, self.num_joint
            )));
        }
        Ok(())
    }

    pub fn initial(&self) -> &[(usize, Exact)] {
        &self.initial
    }

    pub fn initial_f64(&self) -> &[(usize, f64)] {
        &self.initial_f64
    }

    pub fn transition(&self, h: usize, s: usize, joint: usize) -> &[(usize, Exact)] {
        &self.transitions[self.cell(h, s, joint)]
    }

    pub fn transition_f64(&self, h: usize, s: usize, joint: usize) -> &[(usize, f64)] {
        &self.transitions_f64[self.cell(h, s, joint)]
    }

    pub fn reward(&self, player: usize, h: usize, s: usize, joint: usize) -> &Exact {
        &self.rewards[player][self.cell(h, s, joint)]
    }

    pub fn reward_f64(&self, player: usize, h: usize, s: usize, joint: usize) -> f64 {
        self.rewards_f64[player][self.cell(h, s, joint)]
    }

    pub fn rewards_at(&self, h: usize, s: usize, joint: usize) -> Vec<Exact> {
        let c = self.cell(h, s, joint);
        self.rewards.iter().map(|t| t[c].clone()).collect()
    }

    /// Largest bit length of any single reward or transition probability.
    pub fn beta(&self) -> u64 {
        let rewards = self.rewards.iter().flatten();
        let probs = self
            .transitions
            .iter()
            .flatten()
            .chain(&self.initial)
            .map(|(_, p)| p);
        rewards
            .chain(probs)
            .map(Exact::bit_length)
            .max()
            .unwrap_or(1)
    }

    /// Same game with a different initial distribution.
    pub fn with_initial(&self, initial: Vec<(usize, Exact)>) -> Result<Self> {
        MarkovGame::new(
            self.num_states,
            self.horizon,
            self.action_counts.clone(),
            initial,
            self.transitions.clone(),
            self.rewards.clone(),
        )
    }
}

/// `max{S, max_i A_i, H, beta}`.
pub fn game_size(game: &MarkovGame) -> u64 {
    let a = game.action_counts.iter().copied().max().unwrap_or(0) as u64;
    (game.num_states as u64)
        .max(a)
        .max(game.horizon as u64)
        .max(game.beta())
}

/// Either kind of game, tagged for the on-disk format.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GameDocument {
    NormalForm(NormalFormGame),
    Markov(MarkovGame),
}

impl GameDocument {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Counts joint-action queries to a normal-form game.
#[derive(Debug)]
pub struct PayoffOracle<'g> {
    game: &'g NormalFormGame,
    query_count: u64,
}

impl<'g> PayoffOracle<'g> {
    pub fn new(game: &'g NormalFormGame) -> Self {
        PayoffOracle {
            game,
            query_count: 0,
        }
    }

    pub fn game(&self) -> &'g NormalFormGame {
        self.game
    }

    pub fn query_count(&self) -> u64 {
        self.query_count
    }

    /// All m payoffs at `profile`.
    pub fn query(&mut self, profile: &[usize]) -> Result<Vec<Exact>> {
        let idx = self.game.index(profile)?;
        self.query_count += 1;
        Ok(self.game.payoffs.iter().map(|t| t[idx].clone()).collect())
    }

    pub fn query_f64(&mut self, profile: &[usize]) -> Result<Vec<f64>> {
        let idx = self.game.index(profile)?;
        self.query_count += 1;
        Ok(self.game.payoffs_f64.iter().map(|t| t[idx]).collect())
    }
}

/// Answer to a generative-model query.
#[derive(Clone, Debug, PartialEq)]
pub struct GenerativeAnswer {
    pub next_states: Vec<(usize, Exact)>,
    pub rewards: Vec<Exact>,
}

/// Counts `(h, s, a)` queries to a Markov game.
#[derive(Debug)]
pub struct GenerativeModelOracle<'g> {
    game: &'g MarkovGame,
    query_count: u64,
}

impl<'g> GenerativeModelOracle<'g> {
    pub fn new(game: &'g MarkovGame) -> Self {
        GenerativeModelOracle {
            game,
            query_count: 0,
        }
    }

    pub fn query_count(&self) -> u64 {
        self.query_count
    }

    pub fn query(&mut self, h: usize, s: usize, profile: &[usize]) -> Result<GenerativeAnswer> {
        let joint = self.game.joint_index(profile)?;
        self.game.check_cell(h, s, joint)?;
        self.query_count += 1;
        Ok(GenerativeAnswer {
            next_states: self.game.transition(h, s, joint).to_vec(),
            rewards: self.game.rewards_at(h, s, joint),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(p: i64, q: i64) -> Exact {
        Exact::ratio(p, q)
    }

    fn pennies() -> NormalFormGame {
        let m1 = vec![vec![e(1, 1), e(0, 1)], vec![e(0, 1), e(1, 1)]];
        let m2 = vec![vec![e(0, 1), e(1, 1)], vec![e(1, 1), e(0, 1)]];
        NormalFormGame::bimatrix(&m1, &m2, 1).unwrap()
    }

    fn single_state(h: usize, actions: Vec<usize>, reward: Exact) -> MarkovGame {
        let m = actions.len();
        MarkovGame::from_fn(1, h, actions, vec![(0, Exact::one())], |_, _, _| {
            (vec![(0, Exact::one())], vec![reward.clone(); m])
        })
        .unwrap()
    }

    #[test]
    fn profile_indexing_round_trips() {
        let counts = [2, 3, 4];
        for idx in 0..24 {
            let p = profile_from_index(&counts, idx);
            assert_eq!(profile_index(&counts, &p).unwrap(), idx);
        }
        assert_eq!(profile_index(&counts, &[1, 0, 0]).unwrap(), 12);
        assert!(profile_index(&counts, &[0, 3, 0]).is_err());
        assert!(profile_index(&counts, &[0, 0]).is_err());
    }

    #[test]
    fn validation_reports() {
        assert!(validate_normal_form(&pennies()).is_valid());

        let high =
            NormalFormGame::from_fn(2, 2, 8, |_, p| if p == [0, 0] { e(5, 4) } else { e(1, 2) })
                .unwrap();
        let report = validate_normal_form(&high);
        assert!(!report.is_valid());
        assert!(report
            .violations
            .iter()
            .any(|v| v.contains("payoff out of [0,1]")));

        let third = NormalFormGame::from_fn(2, 2, 8, |_, _| e(1, 3)).unwrap();
        let report = validate_normal_form(&third);
        assert!(report
            .violations
            .iter()
            .any(|v| v.contains("not dyadic within budget")));
        assert_eq!(report.violations.len(), 8);
    }

    #[test]
    fn shape_errors() {
        assert!(NormalFormGame::new(2, 2, 1, vec![vec![Exact::zero(); 4]]).is_err());
        assert!(NormalFormGame::new(2, 2, 1, vec![vec![Exact::zero(); 4], vec![]]).is_err());
        assert!(NormalFormGame::new(1, 2, 1, vec![vec![Exact::zero(); 2]]).is_err());
    }

    #[test]
    fn markov_validation() {
        let bad_row = MarkovGame::from_fn(2, 1, vec![1], vec![(0, Exact::one())], |_, _, _| {
            (vec![(0, e(1, 2))], vec![Exact::zero()])
        });
        assert!(bad_row.is_err());
        let big_reward = MarkovGame::from_fn(1, 2, vec![1], vec![(0, Exact::one())], |_, _, _| {
            (vec![(0, Exact::one())], vec![e(3, 4)])
        });
        assert!(big_reward.is_err());
    }

    #[test]
    fn game_size_examples() {
        let g = single_state(1, vec![1, 1], Exact::one());
        assert_eq!(game_size(&g), 1);

        // S=2, A=(2,2), H=8 with rewards 1/8 (3 bits).
        let g = MarkovGame::from_fn(2, 8, vec![2, 2], vec![(0, Exact::one())], |_, _, p| {
            (vec![(p[0], Exact::one())], vec![e(1, 8), e(-1, 8)])
        })
        .unwrap();
        assert_eq!(g.beta(), 3);
        assert_eq!(game_size(&g), 8);

        // S=17, A=(4,4), H=4, rewards with 4 bits.
        let g = MarkovGame::from_fn(17, 4, vec![4, 4], vec![(0, Exact::one())], |_, _, p| {
            (
                vec![(1 + 4 * p[0] + p[1], Exact::one())],
                vec![e(3, 16), e(1, 4)],
            )
        })
        .unwrap();
        assert_eq!(g.beta(), 4);
        assert_eq!(game_size(&g), 17);
    }

    #[test]
    fn payoff_oracle_counts() {
        let g = pennies();
        let mut o = PayoffOracle::new(&g);
        assert_eq!(o.query_count(), 0);
        assert_eq!(o.query(&[0, 0]).unwrap(), vec![Exact::one(), Exact::zero()]);
        o.query(&[0, 1]).unwrap();
        assert_eq!(o.query_count(), 2);
        assert!(o.query(&[2, 0]).is_err());
        assert_eq!(o.query_count(), 2);

        let mut sweep = PayoffOracle::new(&g);
        for idx in 0..4 {
            let p = g.profile(idx);
            let got = sweep.query(&p).unwrap();
            for (i, x) in got.iter().enumerate() {
                assert_eq!(x, g.payoff(i, &p).unwrap());
            }
        }
        assert_eq!(sweep.query_count(), 4);
    }

    #[test]
    fn generative_oracle_sweep() {
        let g = single_state(3, vec![2, 3], Exact::zero());
        let mut o = GenerativeModelOracle::new(&g);
        for h in 0..3 {
            for j in 0..g.num_joint() {
                let ans = o.query(h, 0, &g.joint_profile(j)).unwrap();
                assert_eq!(ans.next_states, vec![(0, Exact::one())]);
            }
        }
        assert_eq!(o.query_count(), 3 * 6);
        assert!(o.query(3, 0, &[0, 0]).is_err());
        assert!(o.query(0, 1, &[0, 0]).is_err());
    }

    #[test]
    fn serialization_round_trip() {
        let doc = GameDocument::NormalForm(pennies());
        let text = doc.to_json().unwrap();
        assert!(text.contains("\"1/2^0\""));
        let back = GameDocument::from_json(&text).unwrap();
        assert_eq!(back, doc);
        assert_eq!(back.to_json().unwrap(), text);

        let mg = GameDocument::Markov(single_state(2, vec![2, 2], e(-1, 4)));
        let text = mg.to_json().unwrap();
        let back = GameDocument::from_json(&text).unwrap();
        assert_eq!(back, mg);
        assert_eq!(back.to_json().unwrap(), text);
    }

    #[test]
    fn payoff_csv() {
        let mut buf = Vec::new();
        pennies().write_payoff_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "a0,a1,payoff0,payoff1");
        assert_eq!(lines[1], "0,0,1/2^0,0/2^0");
        assert_eq!(lines.len(), 5);
    }
}
