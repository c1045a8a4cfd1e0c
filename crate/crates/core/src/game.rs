//! Game model: players with private Markov types, simultaneous public actions,
//! and exact enumeration of the induced history distribution.
//!
//! Types and actions are dense indices. Joint profiles are encoded in mixed
//! radix with player 0 as the most significant digit, so the joint action
//! `(a^1, a^2) = (0, 1)` has index 1 when both players have two actions.

use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SpbeError, ValidationIssue};

/// Tolerance on the row sums of priors and kernels in a game description.
pub const STOCHASTIC_ROW_TOLERANCE: f64 = 1e-12;
/// Entries above this (negative) floor are clamped to zero; anything lower is rejected.
pub const NEGATIVE_FLOOR: f64 = -1e-15;
/// Default hard cap on the number of weighted branches an exact enumeration may visit.
pub const DEFAULT_ENUMERATION_CAP: u128 = 10_000_000;

/// A probability vector over a finite set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Distribution(Vec<f64>);

impl Distribution {
    pub const DEFAULT_TOLERANCE: f64 = 1e-9;

    pub fn new(values: Vec<f64>) -> Result<Self> {
        Self::with_tolerance(values, Self::DEFAULT_TOLERANCE)
    }

    /// Validates `values` as a distribution whose sum is within `tolerance` of 1.
    /// Entries in `[-1e-15, 0)` are clamped to zero.
    pub fn with_tolerance(mut values: Vec<f64>, tolerance: f64) -> Result<Self> {
        if values.is_empty() {
            return Err(SpbeError::InvalidDistribution("empty vector".into()));
        }
        for v in values.iter_mut() {
            if !v.is_finite() || *v < NEGATIVE_FLOOR {
                return Err(SpbeError::InvalidDistribution(format!(
                    "entry {v} is negative or not finite"
                )));
            }
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > tolerance {
            return Err(SpbeError::InvalidDistribution(format!(
                "entries sum to {sum}"
            )));
        }
        Ok(Distribution(values))
    }

    /// Clamps tiny negatives and rescales to unit mass.
    pub fn normalized(mut values: Vec<f64>) -> Result<Self> {
        for v in values.iter_mut() {
            if !v.is_finite() || *v < NEGATIVE_FLOOR {
                return Err(SpbeError::InvalidDistribution(format!(
                    "entry {v} is negative or not finite"
                )));
            }
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        let sum: f64 = values.iter().sum();
        if !(sum > 0.0) {
            return Err(SpbeError::InvalidDistribution("zero total mass".into()));
        }
        if sum != 1.0 {
            values.iter_mut().for_each(|v| *v /= sum);
        }
        Ok(Distribution(values))
    }

    pub fn uniform(len: usize) -> Self {
        assert!(len > 0, "uniform distribution over an empty set");
        Distribution(vec![1.0 / len as f64; len])
    }

    pub fn point(len: usize, index: usize) -> Self {
        assert!(index < len, "point mass index {index} out of range {len}");
        let mut v = vec![0.0; len];
        v[index] = 1.0;
        Distribution(v)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn total_variation(&self, other: &Distribution) -> f64 {
        0.5 * self
            .0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
    }

    pub fn sup_distance(&self, other: &Distribution) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl Deref for Distribution {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for Distribution {
    type Error = SpbeError;
    fn try_from(values: Vec<f64>) -> Result<Self> {
        Distribution::new(values)
    }
}

impl From<Distribution> for Vec<f64> {
    fn from(d: Distribution) -> Self {
        d.0
    }
}

/// Mixed-radix codec between per-player index tuples and a single joint index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JointIndex {
    radices: Vec<usize>,
    strides: Vec<usize>,
    total: usize,
}

impl JointIndex {
    pub fn new(radices: &[usize]) -> Self {
        let mut strides = vec![1; radices.len()];
        let mut total = 1usize;
        for i in (0..radices.len()).rev() {
            strides[i] = total;
            total = total.saturating_mul(radices[i]);
        }
        JointIndex {
            radices: radices.to_vec(),
            strides,
            total,
        }
    }

    pub fn len(&self) -> usize {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn radix(&self, player: usize) -> usize {
        self.radices[player]
    }

    pub fn encode(&self, parts: &[usize]) -> usize {
        debug_assert_eq!(parts.len(), self.radices.len());
        parts.iter().zip(&self.strides).map(|(p, s)| p * s).sum()
    }

    pub fn decode(&self, index: usize) -> Vec<usize> {
        (0..self.radices.len())
            .map(|i| self.component(index, i))
            .collect()
    }

    #[inline]
    pub fn component(&self, index: usize, player: usize) -> usize {
        (index / self.strides[player]) % self.radices[player]
    }

    /// Index obtained by replacing `player`'s component of `index` with `value`.
    pub fn with_component(&self, index: usize, player: usize, value: usize) -> usize {
        index - self.component(index, player) * self.strides[player] + value * self.strides[player]
    }
}

/// Raw game description as read from a game file.
///
/// `kernels[k][i][x][a]` is the distribution of player `i`'s type at stage
/// `k + 2` given type `x` and joint action index `a` at stage `k + 1`.
/// `rewards[i][x][a]` is player `i`'s reward at joint type index `x` and
/// joint action index `a`. Omitted kernels mean types never change.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameSpec {
    #[serde(rename = "players")]
    pub num_players: usize,
    pub horizon: usize,
    #[serde(rename = "type_spaces")]
    pub type_space_sizes: Vec<usize>,
    #[serde(rename = "action_spaces")]
    pub action_space_sizes: Vec<usize>,
    pub priors: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernels: Option<Vec<Vec<Vec<Vec<Vec<f64>>>>>>,
    pub rewards: Vec<Vec<Vec<f64>>>,
}

/// A game whose description passed [`validate_game`]. Immutable.
#[derive(Debug, Clone)]
pub struct ValidatedGame {
    spec: GameSpec,
    types: JointIndex,
    actions: JointIndex,
    // kernels[k][i] flattened as ((x * |A| + a) * |X^i| + x')
    kernels: Vec<Vec<Vec<f64>>>,
}

fn check_row(row: &[f64], len: usize) -> std::result::Result<(), bool> {
    if row.len() != len {
        return Err(true);
    }
    if row.iter().any(|v| !v.is_finite() || *v < NEGATIVE_FLOOR) {
        return Err(false);
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > STOCHASTIC_ROW_TOLERANCE {
        return Err(false);
    }
    Ok(())
}

fn clamp_row(row: &[f64]) -> impl Iterator<Item = f64> + '_ {
    row.iter().map(|v| v.max(0.0))
}

/// Checks every structural and stochastic constraint of `spec`, reporting all violations.
pub fn validate_game(spec: GameSpec) -> Result<ValidatedGame> {
    let mut issues = Vec::new();
    let dim = |field: &str| ValidationIssue::DimensionMismatch {
        field: field.to_string(),
    };
    let n = spec.num_players;
    if n == 0 {
        issues.push(dim("players"));
    }
    if spec.horizon == 0 {
        issues.push(dim("horizon"));
    }
    if spec.type_space_sizes.len() != n || spec.type_space_sizes.contains(&0) {
        issues.push(dim("type_spaces"));
    }
    if spec.action_space_sizes.len() != n || spec.action_space_sizes.contains(&0) {
        issues.push(dim("action_spaces"));
    }
    if !issues.is_empty() {
        return Err(SpbeError::Invalid(issues));
    }

    let types = JointIndex::new(&spec.type_space_sizes);
    let actions = JointIndex::new(&spec.action_space_sizes);

    if spec.priors.len() != n {
        issues.push(dim("priors"));
    } else {
        for (i, prior) in spec.priors.iter().enumerate() {
            match check_row(prior, spec.type_space_sizes[i]) {
                Ok(()) => {}
                Err(true) => issues.push(dim(&format!("priors[{i}]"))),
                Err(false) => issues.push(ValidationIssue::NonStochasticRow {
                    player: i,
                    stage: 1,
                    row: vec![],
                }),
            }
        }
    }

    let mut kernels = Vec::new();
    match &spec.kernels {
        None => {
            for _ in 1..spec.horizon {
                let per_player = (0..n)
                    .map(|i| {
                        let nx = spec.type_space_sizes[i];
                        let mut flat = vec![0.0; nx * actions.len() * nx];
                        for x in 0..nx {
                            for a in 0..actions.len() {
                                flat[(x * actions.len() + a) * nx + x] = 1.0;
                            }
                        }
                        flat
                    })
                    .collect();
                kernels.push(per_player);
            }
        }
        Some(raw) => {
            if raw.len() != spec.horizon - 1 {
                issues.push(dim("kernels"));
            } else {
                for (k, stage) in raw.iter().enumerate() {
                    if stage.len() != n {
                        issues.push(dim(&format!("kernels[{k}]")));
                        continue;
                    }
                    let mut per_player = Vec::with_capacity(n);
                    for (i, player_rows) in stage.iter().enumerate() {
                        let nx = spec.type_space_sizes[i];
                        if player_rows.len() != nx {
                            issues.push(dim(&format!("kernels[{k}][{i}]")));
                            continue;
                        }
                        let mut flat = Vec::with_capacity(nx * actions.len() * nx);
                        for (x, by_action) in player_rows.iter().enumerate() {
                            if by_action.len() != actions.len() {
                                issues.push(dim(&format!("kernels[{k}][{i}][{x}]")));
                                continue;
                            }
                            for (a, row) in by_action.iter().enumerate() {
                                match check_row(row, nx) {
                                    Ok(()) => flat.extend(clamp_row(row)),
                                    Err(true) => issues
                                        .push(dim(&format!("kernels[{k}][{i}][{x}][{a}]"))),
                                    Err(false) => {
                                        issues.push(ValidationIssue::NonStochasticRow {
                                            player: i,
                                            stage: k + 2,
                                            row: vec![x, a],
                                        })
                                    }
                                }
                            }
                        }
                        per_player.push(flat);
                    }
                    kernels.push(per_player);
                }
            }
        }
    }

    if spec.rewards.len() != n {
        issues.push(dim("rewards"));
    } else {
        for (i, table) in spec.rewards.iter().enumerate() {
            if table.len() != types.len() {
                issues.push(dim(&format!("rewards[{i}]")));
                continue;
            }
            for (x, row) in table.iter().enumerate() {
                if row.len() != actions.len() {
                    issues.push(dim(&format!("rewards[{i}][{x}]")));
                    continue;
                }
                for (a, r) in row.iter().enumerate() {
                    if !r.is_finite() {
                        issues.push(ValidationIssue::NonFiniteReward {
                            player: i,
                            joint_type: x,
                            joint_action: a,
                        });
                    }
                }
            }
        }
    }

    if !issues.is_empty() {
        return Err(SpbeError::Invalid(issues));
    }
    Ok(ValidatedGame {
        spec,
        types,
        actions,
        kernels,
    })
}

impl ValidatedGame {
    pub fn spec(&self) -> &GameSpec {
        &self.spec
    }

    pub fn num_players(&self) -> usize {
        self.spec.num_players
    }

    pub fn horizon(&self) -> usize {
        self.spec.horizon
    }

    pub fn type_count(&self, player: usize) -> usize {
        self.spec.type_space_sizes[player]
    }

    pub fn action_count(&self, player: usize) -> usize {
        self.spec.action_space_sizes[player]
    }

    pub fn joint_types(&self) -> &JointIndex {
        &self.types
    }

    pub fn joint_actions(&self) -> &JointIndex {
        &self.actions
    }

    pub fn prior(&self, player: usize) -> &[f64] {
        &self.spec.priors[player]
    }

    #[inline]
    pub fn reward(&self, player: usize, joint_type: usize, joint_action: usize) -> f64 {
        self.spec.rewards[player][joint_type][joint_action]
    }

    /// `Q^i_{t+1}(. | x, a)`: the distribution of player `i`'s type at stage
    /// `t + 1` given own type `x` and joint action `a` at stage `t`, for
    /// `t` in `1..horizon`.
    #[inline]
    pub fn kernel_row(&self, t: usize, player: usize, own_type: usize, joint_action: usize) -> &[f64] {
        let nx = self.type_count(player);
        let start = (own_type * self.actions.len() + joint_action) * nx;
        &self.kernels[t - 1][player][start..start + nx]
    }

    /// Kernel rows of player `i` for a fixed joint action, indexed by current type.
    pub fn kernel_rows(&self, t: usize, player: usize, joint_action: usize) -> Vec<&[f64]> {
        (0..self.type_count(player))
            .map(|x| self.kernel_row(t, player, x, joint_action))
            .collect()
    }

    pub fn joint_prior(&self) -> Vec<f64> {
        (0..self.types.len())
            .map(|x| {
                (0..self.num_players())
                    .map(|i| self.prior(i)[self.types.component(x, i)])
                    .product()
            })
            .collect()
    }

    /// Distribution of the joint type at stage `t + 1` given joint type and action at `t`.
    pub fn joint_transition(&self, t: usize, joint_type: usize, joint_action: usize) -> Vec<f64> {
        let rows: Vec<&[f64]> = (0..self.num_players())
            .map(|i| self.kernel_row(t, i, self.types.component(joint_type, i), joint_action))
            .collect();
        (0..self.types.len())
            .map(|y| {
                rows.iter()
                    .enumerate()
                    .map(|(i, row)| row[self.types.component(y, i)])
                    .product()
            })
            .collect()
    }
}

/// A realized (joint type, joint action) pair at one stage.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct JointOutcome {
    pub joint_type: Vec<usize>,
    pub joint_action: Vec<usize>,
}

/// Exact probabilities of every [`JointOutcome`] at one stage.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeDistribution {
    types: JointIndex,
    actions: JointIndex,
    // probs[x * |A| + a]
    probs: Vec<f64>,
}

impl OutcomeDistribution {
    pub fn prob(&self, outcome: &JointOutcome) -> f64 {
        let x = self.types.encode(&outcome.joint_type);
        let a = self.actions.encode(&outcome.joint_action);
        self.probs[x * self.actions.len() + a]
    }

    #[inline]
    pub fn prob_indexed(&self, joint_type: usize, joint_action: usize) -> f64 {
        self.probs[joint_type * self.actions.len() + joint_action]
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (JointOutcome, f64)> + '_ {
        self.probs.iter().enumerate().map(move |(k, p)| {
            let (x, a) = (k / self.actions.len(), k % self.actions.len());
            (
                JointOutcome {
                    joint_type: self.types.decode(x),
                    joint_action: self.actions.decode(a),
                },
                *p,
            )
        })
    }

    pub fn total_variation(&self, other: &OutcomeDistribution) -> f64 {
        0.5 * self
            .probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
    }
}

/// A behavioral strategy profile that may condition on each player's whole
/// private type history.
pub trait GeneralStrategy: Sync {
    /// Distribution over player `player`'s actions after the public history
    /// `public` (joint action indices, oldest first) when the player's own
    /// type history is `own_types` (oldest first, ending with the current type).
    fn action_distribution(&self, player: usize, public: &[usize], own_types: &[usize]) -> Vec<f64>;
}

/// One full history `(x_1, a_1, ..., x_t, a_t)` with its probability.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryPath {
    pub types: Vec<usize>,
    pub actions: Vec<usize>,
    pub prob: f64,
}

impl HistoryPath {
    pub fn own_types(&self, game: &ValidatedGame, player: usize, upto: usize) -> Vec<usize> {
        self.types[..upto]
            .iter()
            .map(|&x| game.joint_types().component(x, player))
            .collect()
    }
}

/// Number of weighted branches a full enumeration to stage `t` visits.
pub fn enumeration_size(game: &ValidatedGame, t: usize) -> u128 {
    let per_stage = game.joint_types().len() as u128 * game.joint_actions().len() as u128;
    (0..t).fold(1u128, |acc, _| acc.saturating_mul(per_stage))
}

/// Enumerates every positive-probability history through stage `t` (types and
/// actions of stages `1..=t`). Zero-probability branches are pruned.
pub fn enumerate_histories(
    game: &ValidatedGame,
    strategy: &dyn GeneralStrategy,
    t: usize,
    cap: u128,
) -> Result<Vec<HistoryPath>> {
    if t == 0 || t > game.horizon() {
        return Err(SpbeError::InvalidArgument(format!(
            "stage {t} outside 1..={}",
            game.horizon()
        )));
    }
    let estimated = enumeration_size(game, t);
    if estimated > cap {
        return Err(SpbeError::EnumerationTooLarge { estimated, cap });
    }
    let mut out = Vec::new();
    let mut walker = Walker {
        game,
        strategy,
        target: t,
        types: Vec::with_capacity(t),
        actions: Vec::with_capacity(t),
        out: &mut out,
    };
    walker.visit_types(game.joint_prior(), 1.0);
    Ok(out)
}

struct Walker<'a> {
    game: &'a ValidatedGame,
    strategy: &'a dyn GeneralStrategy,
    target: usize,
    types: Vec<usize>,
    actions: Vec<usize>,
    out: &'a mut Vec<HistoryPath>,
}

impl Walker<'_> {
    fn visit_types(&mut self, type_dist: Vec<f64>, prob: f64) {
        let game = self.game;
        for (x, px) in type_dist.into_iter().enumerate() {
            if px == 0.0 {
                continue;
            }
            self.types.push(x);
            let stage_probs: Vec<Vec<f64>> = (0..game.num_players())
                .map(|i| {
                    let own: Vec<usize> = self
                        .types
                        .iter()
                        .map(|&y| game.joint_types().component(y, i))
                        .collect();
                    self.strategy.action_distribution(i, &self.actions, &own)
                })
                .collect();
            for a in 0..game.joint_actions().len() {
                let pa: f64 = stage_probs
                    .iter()
                    .enumerate()
                    .map(|(i, d)| d[game.joint_actions().component(a, i)])
                    .product();
                if pa == 0.0 {
                    continue;
                }
                let p = prob * px * pa;
                self.actions.push(a);
                if self.types.len() == self.target {
                    self.out.push(HistoryPath {
                        types: self.types.clone(),
                        actions: self.actions.clone(),
                        prob: p,
                    });
                } else {
                    let next = game.joint_transition(self.types.len(), x, a);
                    self.visit_types(next, p);
                }
                self.actions.pop();
            }
            self.types.pop();
        }
    }
}

/// Exact `P^g(x_t, a_t)` by summation over all histories through stage `t`.
pub fn enumerate_outcome_distribution(
    game: &ValidatedGame,
    strategy: &dyn GeneralStrategy,
    t: usize,
) -> Result<OutcomeDistribution> {
    enumerate_outcome_distribution_capped(game, strategy, t, DEFAULT_ENUMERATION_CAP)
}

pub fn enumerate_outcome_distribution_capped(
    game: &ValidatedGame,
    strategy: &dyn GeneralStrategy,
    t: usize,
    cap: u128,
) -> Result<OutcomeDistribution> {
    let paths = enumerate_histories(game, strategy, t, cap)?;
    let na = game.joint_actions().len();
    let mut probs = vec![0.0; game.joint_types().len() * na];
    for path in &paths {
        probs[path.types[t - 1] * na + path.actions[t - 1]] += path.prob;
    }
    Ok(OutcomeDistribution {
        types: game.joint_types().clone(),
        actions: game.joint_actions().clone(),
        probs,
    })
}

/// `J^{i,g}`: player `i`'s total expected reward over the horizon.
pub fn expected_total_reward(
    game: &ValidatedGame,
    strategy: &dyn GeneralStrategy,
    player: usize,
) -> Result<f64> {
    let mut total = 0.0;
    for t in 1..=game.horizon() {
        let dist = enumerate_outcome_distribution(game, strategy, t)?;
        for x in 0..game.joint_types().len() {
            for a in 0..game.joint_actions().len() {
                total += game.reward(player, x, a) * dist.prob_indexed(x, a);
            }
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testing::{random_game, RandomGeneralStrategy};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn single_player(reward: f64, horizon: usize) -> ValidatedGame {
        validate_game(GameSpec {
            num_players: 1,
            horizon,
            type_space_sizes: vec![1],
            action_space_sizes: vec![1],
            priors: vec![vec![1.0]],
            kernels: None,
            rewards: vec![vec![vec![reward]]],
        })
        .unwrap()
    }

    struct Constant(Vec<Vec<f64>>);
    impl GeneralStrategy for Constant {
        fn action_distribution(&self, player: usize, _: &[usize], _: &[usize]) -> Vec<f64> {
            self.0[player].clone()
        }
    }

    #[test]
    fn degenerate_single_player_game_is_valid() {
        let game = single_player(0.0, 1);
        assert_eq!(game.joint_types().len(), 1);
        assert_eq!(game.joint_actions().len(), 1);
    }

    #[test]
    fn kernel_row_summing_below_one_is_rejected() {
        let spec = GameSpec {
            num_players: 1,
            horizon: 2,
            type_space_sizes: vec![2],
            action_space_sizes: vec![1],
            priors: vec![vec![0.5, 0.5]],
            kernels: Some(vec![vec![vec![vec![vec![0.5, 0.4]], vec![vec![0.0, 1.0]]]]]),
            rewards: vec![vec![vec![0.0], vec![0.0]]],
        };
        match validate_game(spec) {
            Err(SpbeError::Invalid(issues)) => {
                assert_eq!(
                    issues,
                    vec![ValidationIssue::NonStochasticRow {
                        player: 0,
                        stage: 2,
                        row: vec![0, 0]
                    }]
                );
            }
            other => panic!("expected NonStochasticRow, got {other:?}"),
        }
    }

    #[test]
    fn all_violations_are_reported() {
        let spec = GameSpec {
            num_players: 2,
            horizon: 1,
            type_space_sizes: vec![2, 2],
            action_space_sizes: vec![2, 2],
            priors: vec![vec![0.7, 0.7], vec![0.5, 0.5, 0.0]],
            kernels: None,
            rewards: vec![vec![vec![0.0; 4]; 4], vec![vec![f64::NAN; 4]; 4]],
        };
        let Err(SpbeError::Invalid(issues)) = validate_game(spec) else {
            panic!("expected validation failure");
        };
        assert!(issues.contains(&ValidationIssue::NonStochasticRow {
            player: 0,
            stage: 1,
            row: vec![]
        }));
        assert!(issues.contains(&ValidationIssue::DimensionMismatch {
            field: "priors[1]".into()
        }));
        assert_eq!(
            issues
                .iter()
                .filter(|i| matches!(i, ValidationIssue::NonFiniteReward { .. }))
                .count(),
            16
        );
    }

    #[test]
    fn joint_index_round_trips() {
        let idx = JointIndex::new(&[2, 3, 2]);
        assert_eq!(idx.len(), 12);
        for k in 0..12 {
            assert_eq!(idx.encode(&idx.decode(k)), k);
        }
        assert_eq!(idx.encode(&[0, 0, 1]), 1);
        assert_eq!(idx.encode(&[1, 0, 0]), 6);
        assert_eq!(idx.with_component(idx.encode(&[1, 2, 0]), 1, 0), idx.encode(&[1, 0, 0]));
    }

    #[test]
    fn single_stage_deterministic_strategy_puts_prior_mass_on_prescribed_action() {
        let game = validate_game(GameSpec {
            num_players: 1,
            horizon: 1,
            type_space_sizes: vec![2],
            action_space_sizes: vec![3],
            priors: vec![vec![0.25, 0.75]],
            kernels: None,
            rewards: vec![vec![vec![0.0; 3]; 2]],
        })
        .unwrap();
        let strat = Constant(vec![vec![0.0, 0.0, 1.0]]);
        let dist = enumerate_outcome_distribution(&game, &strat, 1).unwrap();
        let o = |x, a| JointOutcome {
            joint_type: vec![x],
            joint_action: vec![a],
        };
        assert_eq!(dist.prob(&o(0, 2)), 0.25);
        assert_eq!(dist.prob(&o(1, 2)), 0.75);
        assert_eq!(dist.prob(&o(1, 0)), 0.0);
    }

    #[test]
    fn zero_reward_gives_zero_value_and_unit_reward_gives_horizon() {
        let strat = Constant(vec![vec![1.0]]);
        assert_eq!(expected_total_reward(&single_player(0.0, 3), &strat, 0).unwrap(), 0.0);
        assert_eq!(expected_total_reward(&single_player(1.0, 4), &strat, 0).unwrap(), 4.0);
    }

    #[test]
    fn enumeration_cap_is_enforced() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let game = random_game(&mut rng, 2, 2, 2, 3, true);
        let strat = RandomGeneralStrategy::new(&game, 3);
        let err = enumerate_histories(&game, &strat, 3, 100).unwrap_err();
        assert!(matches!(err, SpbeError::EnumerationTooLarge { estimated: 4096, cap: 100 }));
    }

    /// Independent oracle: explicit nested loops over a T=2, N=2 game.
    fn nested_loop_oracle(game: &ValidatedGame, strat: &dyn GeneralStrategy, t: usize) -> Vec<f64> {
        let ti = game.joint_types();
        let ai = game.joint_actions();
        let mut out = vec![0.0; ti.len() * ai.len()];
        let prior = |x: usize| game.prior(0)[ti.component(x, 0)] * game.prior(1)[ti.component(x, 1)];
        let act = |x_hist: &[usize], a_hist: &[usize], a: usize| -> f64 {
            (0..2)
                .map(|i| {
                    let own: Vec<usize> = x_hist.iter().map(|&x| ti.component(x, i)).collect();
                    strat.action_distribution(i, a_hist, &own)[ai.component(a, i)]
                })
                .product()
        };
        for x1 in 0..ti.len() {
            for a1 in 0..ai.len() {
                let p1 = prior(x1) * act(&[x1], &[], a1);
                if t == 1 {
                    out[x1 * ai.len() + a1] += p1;
                    continue;
                }
                for x2 in 0..ti.len() {
                    let q: f64 = (0..2)
                        .map(|i| game.kernel_row(1, i, ti.component(x1, i), a1)[ti.component(x2, i)])
                        .product();
                    for a2 in 0..ai.len() {
                        out[x2 * ai.len() + a2] += p1 * q * act(&[x1, x2], &[a1], a2);
                    }
                }
            }
        }
        out
    }

    #[test]
    fn enumeration_matches_nested_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for trial in 0..20 {
            let game = random_game(&mut rng, 2, 2, 2, 2, true);
            let strat = RandomGeneralStrategy::new(&game, trial);
            for t in 1..=2 {
                let dist = enumerate_outcome_distribution(&game, &strat, t).unwrap();
                let oracle = nested_loop_oracle(&game, &strat, t);
                for (k, want) in oracle.iter().enumerate() {
                    let got = dist.prob_indexed(k / 4, k % 4);
                    assert!((got - want).abs() < 1e-12, "t={t} k={k}: {got} vs {want}");
                }
            }
        }
    }
}
