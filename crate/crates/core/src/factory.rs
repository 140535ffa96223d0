//! Fixture games and producers of sparse CCE certificates.

use std::collections::HashMap;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::constructions::{
    build_alternative_mg, build_kibitzer_mg, build_repeated_mg, AlternativeConstruction,
    KibitzerConstruction,
};
use crate::equilibria::{brute_force_nash, eps_nash_gap, max_gap, GridNash};
use crate::error::{Error, Result};
use crate::exact::Exact;
use crate::extraction::{Provenance, SparseCceCertificate};
use crate::games::{MarkovGame, NormalFormGame};
use crate::policies::{
    point_mass, DeterministicPolicy, HistoryKey, HistoryStep, MarkovPolicy, PolicyProgram,
    ProductPolicy, TabularPolicy,
};

/// Grid resolution used for stage equilibria of the fixtures.
pub const FIXTURE_GRID: usize = 60;

/// Default cap on the state count of the alternative construction.
pub const STATE_BUDGET: usize = 1 << 16;

fn e(p: i64, q: i64) -> Exact {
    Exact::ratio(p, q)
}

fn bimatrix(m1: &[&[Exact]], m2: &[&[Exact]], bits: u32) -> NormalFormGame {
    let m1: Vec<Vec<Exact>> = m1.iter().map(|r| r.to_vec()).collect();
    let m2: Vec<Vec<Exact>> = m2.iter().map(|r| r.to_vec()).collect();
    NormalFormGame::bimatrix(&m1, &m2, bits).expect("fixture is well formed")
}

pub fn matching_pennies() -> NormalFormGame {
    let (one, zero) = (e(1, 1), e(0, 1));
    bimatrix(
        &[&[one.clone(), zero.clone()], &[zero.clone(), one.clone()]],
        &[&[zero.clone(), one.clone()], &[one, zero]],
        1,
    )
}

/// Win 1, tie 1/2, loss 0.
pub fn rock_paper_scissors() -> NormalFormGame {
    NormalFormGame::from_fn(2, 3, 1, |i, p| {
        let (mine, theirs) = if i == 0 { (p[0], p[1]) } else { (p[1], p[0]) };
        match (3 + mine - theirs) % 3 {
            0 => e(1, 2),
            1 => e(1, 1),
            _ => e(0, 1),
        }
    })
    .expect("fixture is well formed")
}

pub fn coordination() -> NormalFormGame {
    let (one, zero) = (e(1, 1), e(0, 1));
    bimatrix(
        &[&[one.clone(), zero.clone()], &[zero.clone(), one.clone()]],
        &[&[one.clone(), zero.clone()], &[zero, one]],
        1,
    )
}

/// Action 0 strictly dominates for both players.
pub fn dominant() -> NormalFormGame {
    bimatrix(
        &[&[e(1, 2), e(1, 1)], &[e(1, 4), e(3, 4)]],
        &[&[e(1, 2), e(1, 4)], &[e(1, 1), e(3, 4)]],
        2,
    )
}

pub const FIXTURE_NAMES: [&str; 4] = [
    "matching-pennies",
    "rock-paper-scissors",
    "coordination",
    "dominant",
];

pub fn fixture_game(name: &str) -> Result<NormalFormGame> {
    match name {
        "matching-pennies" => Ok(matching_pennies()),
        "rock-paper-scissors" => Ok(rock_paper_scissors()),
        "coordination" => Ok(coordination()),
        "dominant" => Ok(dominant()),
        other => Err(Error::Parameter(format!("unknown fixture {other:?}"))),
    }
}

#[derive(Clone, Debug)]
pub struct Fixture {
    pub name: &'static str,
    pub game: NormalFormGame,
    pub equilibrium: GridNash,
    pub has_pure_nash: bool,
}

/// The normal-form fixtures with stage equilibria recomputed on load.
#[derive(Clone, Debug)]
pub struct FixtureCatalog {
    fixtures: Vec<Fixture>,
}

impl FixtureCatalog {
    pub fn load() -> Result<Self> {
        let fixtures = FIXTURE_NAMES
            .iter()
            .map(|&name| {
                let game = fixture_game(name)?;
                let equilibrium =
                    brute_force_nash(&game, 1e-12, FIXTURE_GRID).ok_or_else(|| {
                        Error::Construction(format!("no grid equilibrium for {name}"))
                    })?;
                Ok(Fixture {
                    name,
                    has_pure_nash: pure_nash(&game).is_some(),
                    game,
                    equilibrium,
                })
            })
            .collect::<Result<_>>()?;
        Ok(FixtureCatalog { fixtures })
    }

    pub fn get(&self, name: &str) -> Option<&Fixture> {
        self.fixtures.iter().find(|f| f.name == name)
    }

    pub fn fixtures(&self) -> &[Fixture] {
        &self.fixtures
    }
}

/// First pure profile with zero Nash gap.
pub fn pure_nash(game: &NormalFormGame) -> Option<Vec<usize>> {
    let n = game.num_actions();
    (0..game.num_profiles())
        .map(|idx| game.profile(idx))
        .find(|p| {
            let profile: Vec<Vec<f64>> = p.iter().map(|&a| point_mass(n, a)).collect();
            eps_nash_gap(game, &profile).is_ok_and(|g| max_gap(&g) <= 1e-12)
        })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConstructionKind {
    Repeated,
    Kibitzer,
    Alternative,
}

impl FromStr for ConstructionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "repeated" => Ok(ConstructionKind::Repeated),
            "kibitzer" => Ok(ConstructionKind::Kibitzer),
            "alternative" => Ok(ConstructionKind::Alternative),
            other => Err(Error::Parameter(format!("unknown construction {other:?}"))),
        }
    }
}

impl std::fmt::Display for ConstructionKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ConstructionKind::Repeated => "repeated",
            ConstructionKind::Kibitzer => "kibitzer",
            ConstructionKind::Alternative => "alternative",
        })
    }
}

/// A constructed Markov game together with its construction data.
#[derive(Clone, Debug)]
pub enum BuiltGame {
    Repeated(MarkovGame),
    Kibitzer(KibitzerConstruction),
    Alternative(AlternativeConstruction),
}

impl BuiltGame {
    pub fn build(game: &NormalFormGame, kind: ConstructionKind, eps: f64) -> Result<Self> {
        Ok(match kind {
            ConstructionKind::Repeated => BuiltGame::Repeated(build_repeated_mg(game)?),
            ConstructionKind::Kibitzer => BuiltGame::Kibitzer(build_kibitzer_mg(game, eps)?),
            ConstructionKind::Alternative => {
                BuiltGame::Alternative(build_alternative_mg(game, eps, STATE_BUDGET)?)
            }
        })
    }

    pub fn kind(&self) -> ConstructionKind {
        match self {
            BuiltGame::Repeated(_) => ConstructionKind::Repeated,
            BuiltGame::Kibitzer(_) => ConstructionKind::Kibitzer,
            BuiltGame::Alternative(_) => ConstructionKind::Alternative,
        }
    }

    pub fn game(&self) -> &MarkovGame {
        match self {
            BuiltGame::Repeated(g) => g,
            BuiltGame::Kibitzer(k) => &k.game,
            BuiltGame::Alternative(a) => &a.game,
        }
    }
}

/// Kibitzer reply at every `(h, s)` maximizing its expected reward when
/// the main players draw from `profile`.
fn kibitzer_reply(game: &MarkovGame, profile: &[Vec<f64>]) -> Result<MarkovPolicy> {
    let m = profile.len();
    let na = game.action_counts()[m];
    MarkovPolicy::from_fn(game.num_states(), game.horizon(), na, |h, s| {
        let mut u = vec![0.0; na];
        for joint in 0..game.num_joint() {
            let p = game.joint_profile(joint);
            let w: f64 = (0..m).map(|j| profile[j][p[j]]).product();
            if w > 0.0 {
                u[p[m]] += w * game.reward_f64(m, h, s, joint);
            }
        }
        let mut best = 0;
        for a in 1..na {
            if u[a] > u[best] + 1e-12 {
                best = a;
            }
        }
        point_mass(na, best)
    })
}

/// Markov member playing `profile` at every `(h, s)`; the kibitzer, if
/// present, best-responds.
pub fn stationary_member(built: &BuiltGame, profile: &[Vec<f64>]) -> Result<ProductPolicy> {
    let game = built.game();
    let mut players: Vec<PolicyProgram> = profile
        .iter()
        .map(|row| {
            MarkovPolicy::stationary(game.num_states(), game.horizon(), row.clone())
                .map(PolicyProgram::markov)
        })
        .collect::<Result<_>>()?;
    if game.num_players() == profile.len() + 1 {
        players.push(PolicyProgram::markov(kibitzer_reply(game, profile)?));
    }
    let member = ProductPolicy(players);
    member.check(game)?;
    Ok(member)
}

/// `max_i sum_h max_s` of the one-step deviation gain of player `i`. For a
/// product of Markov policies this bounds every player's gain from any
/// deviation.
pub fn stage_gap_bound(game: &MarkovGame, policies: &[&MarkovPolicy]) -> f64 {
    let m = game.num_players();
    (0..m)
        .map(|i| {
            (0..game.horizon())
                .map(|h| {
                    (0..game.num_states())
                        .map(|s| {
                            let na = game.action_counts()[i];
                            let mut u = vec![0.0; na];
                            let mut on_path = 0.0;
                            for joint in 0..game.num_joint() {
                                let p = game.joint_profile(joint);
                                let others: f64 = (0..m)
                                    .filter(|&j| j != i)
                                    .map(|j| policies[j].row(h, s)[p[j]])
                                    .product();
                                if others > 0.0 {
                                    let r = game.reward_f64(i, h, s, joint);
                                    u[p[i]] += others * r;
                                    on_path += others * policies[i].row(h, s)[p[i]] * r;
                                }
                            }
                            u.iter().copied().fold(f64::MIN, f64::max) - on_path
                        })
                        .fold(0.0, f64::max)
                })
                .sum::<f64>()
        })
        .fold(0.0, f64::max)
}

/// The `T = 1` certificate repeating a grid equilibrium of `game`.
pub fn stage_nash_certificate(
    game: &NormalFormGame,
    built: &BuiltGame,
    eps_nash: f64,
) -> Result<SparseCceCertificate> {
    let nash = brute_force_nash(game, eps_nash, FIXTURE_GRID)
        .ok_or_else(|| Error::Construction(format!("no grid {eps_nash}-Nash equilibrium")))?;
    let member = stationary_member(built, &nash.profile)?;
    let pols = member
        .markov_members()
        .expect("stationary members are Markov");
    let certified = stage_gap_bound(built.game(), &pols);
    SparseCceCertificate::new(
        vec![member],
        Some(eps_nash),
        Provenance::ExactStageNash,
        Some(certified),
    )
}

/// Independent full-information exponential-weights learners on `game`;
/// member `t` repeats the round-`t` stage profile. The default step size
/// is `sqrt(8 ln n / T)`.
pub fn hedge_stage_profiles(
    game: &NormalFormGame,
    t: usize,
    eta: Option<f64>,
) -> Vec<Vec<Vec<f64>>> {
    let (m, n) = (game.num_players(), game.num_actions());
    let eta = eta.unwrap_or_else(|| (8.0 * (n as f64).ln() / t as f64).sqrt());
    let mut cumulative = vec![vec![0.0; n]; m];
    let mut out = Vec::with_capacity(t);
    for _ in 0..t {
        let profile: Vec<Vec<f64>> = cumulative
            .iter()
            .map(|u| {
                let top = u.iter().copied().fold(f64::MIN, f64::max);
                let w: Vec<f64> = u.iter().map(|x| (eta * (x - top)).exp()).collect();
                let z: f64 = w.iter().sum();
                w.iter().map(|x| x / z).collect()
            })
            .collect();
        for (i, cum) in cumulative.iter_mut().enumerate() {
            let u = crate::equilibria::deviation_payoffs(game, &profile, i);
            cum.iter_mut().zip(u).for_each(|(c, x)| *c += x);
        }
        out.push(profile);
    }
    out
}

pub fn hedge_selfplay_certificate(
    game: &NormalFormGame,
    built: &BuiltGame,
    t: usize,
    eta: Option<f64>,
) -> Result<SparseCceCertificate> {
    if t == 0 || t > 10_000 {
        return Err(Error::Parameter(format!("T = {t} outside 1..=10000")));
    }
    let members = hedge_stage_profiles(game, t, eta)
        .iter()
        .map(|p| stationary_member(built, p))
        .collect::<Result<_>>()?;
    SparseCceCertificate::new(members, None, Provenance::LearnerProduced, None)
}

/// Member `t` plays pure profile `(t + k) mod n0^2` at the `k`-th reward
/// step of the repeated game and action 0 elsewhere.
pub fn adversarial_never_nash_sequence(
    game: &NormalFormGame,
    repeated: &MarkovGame,
    t: usize,
) -> Result<SparseCceCertificate> {
    if let Some(p) = pure_nash(game) {
        return Err(Error::Refused(format!(
            "the game has the pure equilibrium {p:?}"
        )));
    }
    if t == 0 {
        return Err(Error::Parameter("T must be positive".into()));
    }
    let n = game.num_actions();
    let profiles = game.num_profiles();
    let members = (0..t)
        .map(|member| {
            let players = (0..2)
                .map(|i| {
                    MarkovPolicy::from_fn(repeated.num_states(), repeated.horizon(), n, |h, _| {
                        if h % 2 == 0 {
                            point_mass(n, game.profile((member + h / 2) % profiles)[i])
                        } else {
                            point_mass(n, 0)
                        }
                    })
                    .map(PolicyProgram::markov)
                })
                .collect::<Result<_>>()?;
            Ok(ProductPolicy(players))
        })
        .collect::<Result<_>>()?;
    SparseCceCertificate::new(members, None, Provenance::AdversarialFixture, None)
}

/// The two-step game separating Markov and general deviations, with the
/// copying policy of player 1 and player 0's reward-reading reply. Action
/// 0 is the game's first action.
#[derive(Clone, Debug)]
pub struct SeparationFixture {
    pub game: MarkovGame,
    pub copy: PolicyProgram,
    pub reward_reading: PolicyProgram,
}

pub fn separation_fixture() -> SeparationFixture {
    let game = MarkovGame::from_fn(1, 2, vec![2, 2], vec![(0, Exact::one())], |h, _, p| {
        let hit = if h == 0 { p[1] == 0 } else { p[0] == p[1] };
        let r0 = if hit { e(1, 2) } else { Exact::zero() };
        (vec![(0, Exact::one())], vec![r0, Exact::zero()])
    })
    .expect("fixture is well formed");
    let mut copy = HashMap::new();
    copy.insert(HistoryKey::new(&[], 0), vec![0.5, 0.5]);
    for a in 0..2 {
        let step = HistoryStep {
            state: 0,
            action: a,
            reward: Exact::zero(),
        };
        copy.insert(HistoryKey::new(&[step], 0), point_mass(2, a));
    }
    let mut reading = HashMap::new();
    for (reward, action) in [(e(1, 2), 0), (Exact::zero(), 1)] {
        let step = HistoryStep {
            state: 0,
            action: 0,
            reward,
        };
        reading.insert(HistoryKey::new(&[step], 0), action);
    }
    SeparationFixture {
        game,
        copy: PolicyProgram::Tabular(std::sync::Arc::new(
            TabularPolicy::new(2, 0, copy).expect("fixture is well formed"),
        )),
        reward_reading: PolicyProgram::deterministic(
            DeterministicPolicy::new(2, reading).expect("fixture is well formed"),
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibria::{
        best_response_general_exact, best_response_markov_enumerated, cce_gap, value_exact,
        DeviationMode,
    };
    use crate::extraction::algorithm1_extract;
    use crate::policies::DistributionalPolicy;

    #[test]
    fn catalog_rederives_equilibria() {
        let cat = FixtureCatalog::load().unwrap();
        let rps = cat.get("rock-paper-scissors").unwrap();
        for row in &rps.equilibrium.profile {
            assert!(row.iter().all(|&p| (p - 1.0 / 3.0).abs() < 1.0 / 40.0));
        }
        assert_eq!(
            cat.get("dominant").unwrap().equilibrium.profile,
            vec![vec![1.0, 0.0]; 2]
        );
        assert!(!cat.get("matching-pennies").unwrap().has_pure_nash);
        assert!(cat.get("coordination").unwrap().has_pure_nash);
    }

    #[test]
    fn stage_nash_certificates_have_zero_gap() {
        for name in ["matching-pennies", "dominant"] {
            let g = fixture_game(name).unwrap();
            let built = BuiltGame::build(&g, ConstructionKind::Repeated, 0.1).unwrap();
            let cert = stage_nash_certificate(&g, &built, 0.0).unwrap();
            assert_eq!(cert.certified_gap, Some(0.0));
            let gap = cce_gap(
                built.game(),
                &cert.mixture(),
                &DeviationMode::Exact { budget: 1_000_000 },
            )
            .unwrap();
            assert!(gap.max_gain().abs() < 1e-12);
        }
    }

    #[test]
    fn kibitzer_certificate_bound_covers_exact_gap() {
        let g = matching_pennies();
        let built = BuiltGame::build(&g, ConstructionKind::Kibitzer, 0.25).unwrap();
        let cert = stage_nash_certificate(&g, &built, 0.0).unwrap();
        let gap = cce_gap(
            built.game(),
            &cert.mixture(),
            &DeviationMode::Exact { budget: 1_000_000 },
        )
        .unwrap();
        assert!(gap.max_gain() <= cert.certified_gap.unwrap() + 1e-12);
    }

    #[test]
    fn hedge_starts_uniform_and_finds_dominant_profile() {
        assert_eq!(
            hedge_stage_profiles(&dominant(), 1, None),
            vec![vec![vec![0.5, 0.5]; 2]]
        );
        let last = hedge_stage_profiles(&dominant(), 2000, None).pop().unwrap();
        assert!(max_gap(&eps_nash_gap(&dominant(), &last).unwrap()) < 0.01);
    }

    #[test]
    fn adversarial_sequence_never_nash() {
        let g = matching_pennies();
        let mg = crate::constructions::build_repeated_mg_with_horizon(&g, 16).unwrap();
        let cert = adversarial_never_nash_sequence(&g, &mg, 4).unwrap();
        assert_eq!(
            algorithm1_extract(&g, &cert, 0.2).unwrap(),
            crate::extraction::Extraction::Fail
        );
        let built = build_repeated_mg(&coordination()).unwrap();
        assert!(adversarial_never_nash_sequence(&coordination(), &built, 4).is_err());
    }

    #[test]
    fn separation_values() {
        let fx = separation_fixture();
        let uniform = PolicyProgram::markov(MarkovPolicy::uniform(1, 2, 2));
        let mix = DistributionalPolicy::single(ProductPolicy(vec![uniform, fx.copy.clone()]));
        assert_eq!(value_exact(&fx.game, &mix, 1000).unwrap()[0], 0.5);
        let reading = mix.with_deviation(0, &fx.reward_reading);
        assert_eq!(value_exact(&fx.game, &reading, 1000).unwrap()[0], 0.75);
        let (_, general) = best_response_general_exact(&fx.game, &mix, 0, 1000).unwrap();
        assert_eq!(general, 0.75);
        let (_, markov) = best_response_markov_enumerated(&fx.game, &mix, 0, 1000).unwrap();
        assert_eq!(markov, 0.5);
    }
}
