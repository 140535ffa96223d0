//! Markov games built from a normal-form game.
//!
//! * The repeated game: two players alternate between a reward step, where
//!   they earn `M_j / H` and move to a state naming the joint action, and a
//!   silent step that returns to the hub state.
//! * The kibitzer game: one state, an extra player who names a player and an
//!   alternative action and earns that player's loss from not deviating. The
//!   joint action is written into the low-order bits of every reward.
//! * The alternative game: the same rewards without the bit encoding; the
//!   joint action is recorded in the next state instead.
//!
//! Bit layout of the kibitzer encoding: players `0..m` each contribute
//! `ceil(log2 n0)` bits of their action index, most significant first, then
//! the kibitzer contributes `ceil(log2(m n0))` bits of its action index
//! `j * n0 + a`. The resulting bit string `b_1 b_2 ...` encodes as
//! `sum_i b_i 2^-i`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{ceil_log2, ceil_log2_inverse, Exact};
use crate::games::{profile_from_index, profile_index, MarkovGame, NormalFormGame};

/// Hub state of the repeated game.
pub const HUB: usize = 0;

/// State `s_(a1, a2)` of the repeated game.
pub fn repeated_state(n0: usize, a1: usize, a2: usize) -> usize {
    1 + a1 * n0 + a2
}

pub fn decode_repeated_state(n0: usize, s: usize) -> Option<(usize, usize)> {
    (s >= 1 && s <= n0 * n0).then(|| ((s - 1) / n0, (s - 1) % n0))
}

/// Largest even number not above `n0`.
pub fn repeated_horizon(n0: usize) -> usize {
    2 * (n0 / 2)
}

pub fn build_repeated_mg(game: &NormalFormGame) -> Result<MarkovGame> {
    build_repeated_mg_with_horizon(game, repeated_horizon(game.num_actions()))
}

/// The repeated game with an explicit even horizon.
pub fn build_repeated_mg_with_horizon(game: &NormalFormGame, horizon: usize) -> Result<MarkovGame> {
    if game.num_players() != 2 {
        return Err(Error::Construction(format!(
            "the repeated game needs 2 players, got {}",
            game.num_players()
        )));
    }
    if horizon == 0 || horizon % 2 != 0 {
        return Err(Error::Construction(format!(
            "horizon {horizon} must be even and positive"
        )));
    }
    let n0 = game.num_actions();
    let hh = horizon as i64;
    let scaled: Vec<Vec<Exact>> = (0..2)
        .map(|j| game.payoff_table(j).iter().map(|x| x.div_int(hh)).collect())
        .collect();
    MarkovGame::from_fn(
        n0 * n0 + 1,
        horizon,
        vec![n0, n0],
        vec![(HUB, Exact::one())],
        |h, _s, a| {
            if h % 2 == 0 {
                let idx = a[0] * n0 + a[1];
                (
                    vec![(repeated_state(n0, a[0], a[1]), Exact::one())],
                    vec![scaled[0][idx].clone(), scaled[1][idx].clone()],
                )
            } else {
                (
                    vec![(HUB, Exact::one())],
                    vec![Exact::zero(), Exact::zero()],
                )
            }
        },
    )
}

/// `sum_i b_i 2^-i` for bits `b_1, b_2, ...`.
pub fn enc_bits(bits: &[u8]) -> Exact {
    let mut num = num_bigint::BigInt::from(0);
    for &b in bits {
        num = (num << 1) + num_bigint::BigInt::from(b & 1);
    }
    Exact::from_big_dyadic(num, bits.len() as u32)
}

/// Round every payoff toward zero onto multiples of `2^-bits`.
pub fn truncate_payoffs(game: &NormalFormGame, bits: u32) -> Result<NormalFormGame> {
    let tables = (0..game.num_players())
        .map(|i| {
            game.payoff_table(i)
                .iter()
                .map(|x| x.truncate_bits(bits))
                .collect()
        })
        .collect();
    NormalFormGame::new(game.num_players(), game.num_actions(), bits, tables)
}

/// Truncate and cap at `1 - 2^-bits`, so that payoff differences stay
/// strictly inside `(-1, 1)` and leave room for the encoding term.
pub fn truncate_payoffs_capped(game: &NormalFormGame, bits: u32) -> Result<NormalFormGame> {
    let cap = Exact::one() - Exact::dyadic(1, bits);
    let t = truncate_payoffs(game, bits)?;
    let tables = (0..t.num_players())
        .map(|i| {
            t.payoff_table(i)
                .iter()
                .map(|x| x.clone().min(cap.clone()))
                .collect()
        })
        .collect();
    NormalFormGame::new(t.num_players(), t.num_actions(), bits, tables)
}

/// Derived parameters of the kibitzer game.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KibitzerLayout {
    pub num_players: usize,
    pub num_actions: usize,
    pub eps: f64,
    /// Power of two with `n0 <= H < 2 n0`.
    pub horizon: usize,
    /// `ceil(log2(1/eps))`.
    pub c: u32,
    /// Payoffs are truncated to this many bits: `max(n0, c)`.
    pub payoff_bits: u32,
    /// Position of the encoding: `max(3c, payoff_bits + 1)`.
    pub offset: u32,
    pub player_bits: u32,
    pub kibitzer_bits: u32,
}

impl KibitzerLayout {
    pub fn new(num_players: usize, num_actions: usize, eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps <= 0.5) {
            return Err(Error::Construction(format!(
                "eps = {eps} must lie in (0, 1/2]"
            )));
        }
        if num_players < 1 || num_actions < 1 {
            return Err(Error::Construction("empty game".into()));
        }
        let c = ceil_log2_inverse(eps);
        let payoff_bits = (num_actions as u32).max(c);
        Ok(KibitzerLayout {
            num_players,
            num_actions,
            eps,
            horizon: num_actions.next_power_of_two(),
            c,
            payoff_bits,
            offset: (3 * c).max(payoff_bits + 1),
            player_bits: ceil_log2(num_actions),
            kibitzer_bits: ceil_log2(num_players * num_actions),
        })
    }

    pub fn kibitzer_actions(&self) -> usize {
        self.num_players * self.num_actions
    }

    /// Action counts of all `m + 1` players.
    pub fn action_counts(&self) -> Vec<usize> {
        let mut v = vec![self.num_actions; self.num_players];
        v.push(self.kibitzer_actions());
        v
    }

    pub fn kibitzer_action(&self, player: usize, action: usize) -> usize {
        player * self.num_actions + action
    }

    /// `(j', a')` named by a kibitzer action.
    pub fn kibitzer_parts(&self, k: usize) -> (usize, usize) {
        (k / self.num_actions, k % self.num_actions)
    }

    pub fn total_bits(&self) -> u32 {
        self.num_players as u32 * self.player_bits + self.kibitzer_bits
    }

    fn check(&self, profile: &[usize]) -> Result<()> {
        profile_index(&self.action_counts(), profile).map(|_| ())
    }

    pub fn profile_bits(&self, profile: &[usize]) -> Result<Vec<u8>> {
        self.check(profile)?;
        let mut bits = Vec::with_capacity(self.total_bits() as usize);
        let mut push = |value: usize, width: u32| {
            for k in (0..width).rev() {
                bits.push(((value >> k) & 1) as u8);
            }
        };
        for &a in &profile[..self.num_players] {
            push(a, self.player_bits);
        }
        push(profile[self.num_players], self.kibitzer_bits);
        Ok(bits)
    }

    pub fn enc(&self, profile: &[usize]) -> Result<Exact> {
        Ok(enc_bits(&self.profile_bits(profile)?))
    }

    /// Inverse of [`KibitzerLayout::enc`].
    pub fn decode_enc(&self, x: &Exact) -> Result<Vec<usize>> {
        let total = self.total_bits();
        let scaled = x.scale_pow2(total as i32);
        let code = scaled
            .to_u64_exact()
            .filter(|&v| total >= 64 || v < (1u64 << total))
            .ok_or_else(|| Error::Decode(format!("{x} is not a {total}-bit code")))?;
        let mut shift = total;
        let mut take = |width: u32| -> usize {
            shift -= width;
            ((code >> shift) & ((1u64 << width) - 1)) as usize
        };
        let mut profile: Vec<usize> = (0..self.num_players)
            .map(|_| take(self.player_bits))
            .collect();
        profile.push(take(self.kibitzer_bits));
        self.check(&profile)
            .map_err(|_| Error::Decode(format!("code {code} names an invalid profile")))?;
        Ok(profile)
    }

    /// Scale of the encoding term: `2^-offset / H`.
    pub fn enc_scale(&self) -> Exact {
        Exact::dyadic(1, self.offset).div_int(self.horizon as i64)
    }

    /// Recover the joint profile from any player's realized reward.
    pub fn decode_reward(&self, reward: &Exact) -> Result<Vec<usize>> {
        let enc = reward
            .mul_int(self.horizon as i64)
            .scale_pow2(self.offset as i32)
            .fract_floor();
        self.decode_enc(&enc)
    }
}

/// The part of the kibitzer rewards that does not encode the profile.
/// `profile` lists the m player actions followed by the kibitzer action.
pub fn kibitzer_base_reward(
    game: &NormalFormGame,
    horizon: usize,
    profile: &[usize],
) -> Result<Vec<Exact>> {
    let (m, n0) = (game.num_players(), game.num_actions());
    if profile.len() != m + 1 {
        return Err(Error::Dimension(format!("profile needs {} entries", m + 1)));
    }
    let k = profile[m];
    if k >= m * n0 {
        return Err(Error::Index(format!("kibitzer action {k}")));
    }
    let (j, alt) = (k / n0, k % n0);
    let played = &profile[..m];
    let mut deviated = played.to_vec();
    deviated[j] = alt;
    let diff = (game.payoff(j, played)? - game.payoff(j, &deviated)?).div_int(horizon as i64);
    let mut out = vec![Exact::zero(); m + 1];
    out[m] = -&diff;
    out[j] = diff;
    Ok(out)
}

/// All rewards of the kibitzer game at `profile`.
pub fn kibitzer_rewards(
    source: &NormalFormGame,
    layout: &KibitzerLayout,
    profile: &[usize],
) -> Result<Vec<Exact>> {
    let enc = &layout.enc(profile)? * &layout.enc_scale();
    Ok(kibitzer_base_reward(source, layout.horizon, profile)?
        .into_iter()
        .map(|r| r + enc.clone())
        .collect())
}

#[derive(Clone, Debug)]
pub struct KibitzerConstruction {
    pub game: MarkovGame,
    pub layout: KibitzerLayout,
    /// The truncated source game whose payoffs define the rewards.
    pub source: NormalFormGame,
}

pub fn build_kibitzer_mg(game: &NormalFormGame, eps: f64) -> Result<KibitzerConstruction> {
    let layout = KibitzerLayout::new(game.num_players(), game.num_actions(), eps)?;
    let source = truncate_payoffs_capped(game, layout.payoff_bits)?;
    let mg = MarkovGame::from_fn(
        1,
        layout.horizon,
        layout.action_counts(),
        vec![(0, Exact::one())],
        |_, _, profile| {
            let r = kibitzer_rewards(&source, &layout, profile).expect("profile in range");
            (vec![(0, Exact::one())], r)
        },
    )?;
    Ok(KibitzerConstruction {
        game: mg,
        layout,
        source,
    })
}

#[derive(Clone, Debug)]
pub struct AlternativeConstruction {
    pub game: MarkovGame,
    pub source: NormalFormGame,
    /// Action counts of the `m + 1` players; state `s` records the profile
    /// with index `s` in this radix.
    pub action_counts: Vec<usize>,
    pub payoff_bits: u32,
}

impl AlternativeConstruction {
    pub fn state_of(&self, profile: &[usize]) -> Result<usize> {
        profile_index(&self.action_counts, profile)
    }

    pub fn profile_of(&self, state: usize) -> Vec<usize> {
        profile_from_index(&self.action_counts, state)
    }
}

/// The kibitzer rewards without the encoding term, on `m n0^(m+1)` states
/// that record the last joint action. Horizon `n0`; starts in the state of
/// the all-zero profile.
pub fn build_alternative_mg(
    game: &NormalFormGame,
    eps: f64,
    state_budget: usize,
) -> Result<AlternativeConstruction> {
    let layout = KibitzerLayout::new(game.num_players(), game.num_actions(), eps)?;
    let (m, n0) = (game.num_players(), game.num_actions());
    let counts = layout.action_counts();
    let states = (m as u128) * (n0 as u128).pow(m as u32 + 1);
    if states > state_budget as u128 {
        return Err(Error::Budget {
            what: "alternative construction states",
            budget: state_budget as u64,
        });
    }
    let source = truncate_payoffs(game, layout.payoff_bits)?;
    let horizon = n0;
    let mg = MarkovGame::from_fn(
        states as usize,
        horizon,
        counts.clone(),
        vec![(0, Exact::one())],
        |_, _, profile| {
            let r = kibitzer_base_reward(&source, horizon, profile).expect("profile in range");
            let next = profile_index(&counts, profile).expect("profile in range");
            (vec![(next, Exact::one())], r)
        },
    )?;
    Ok(AlternativeConstruction {
        game: mg,
        source,
        action_counts: counts,
        payoff_bits: layout.payoff_bits,
    })
}
