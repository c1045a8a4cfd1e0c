//! The per-belief stage game: the objective each player's type maximizes
//! with the prescription profile held fixed inside the belief update, and a
//! damped best-response search for its fixed points, with support
//! enumeration at the last stage.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::belief::{update_belief, BeliefVector, GammaProfile, PartialFunction, DEFAULT_QUANTIZE_RESOLUTION};
use crate::error::{Result, SpbeError};
use crate::game::{Distribution, ValidatedGame};
use crate::testing::random_distribution;

use super::support::{support_enumeration, support_pattern_count};

/// Pure-profile seeding is used when there are at most this many pure profiles.
pub const MAX_PURE_SEEDS: u128 = 4096;
pub const RANDOM_SEED_COUNT: usize = 32;
/// Once converged, iteration continues while the residual exceeds this floor.
const POLISH_FLOOR: f64 = 1e-14;
const POLISH_ITERATIONS: usize = 64;
const MIN_STEP: f64 = 1e-15;
/// A seed that has not halved its best residual for this many iterations is abandoned.
const STALL_WINDOW: usize = 200;
/// Support enumeration runs only when there are at most this many support patterns.
pub const MAX_SUPPORT_PATTERNS: u128 = 4096;
pub(crate) const NEWTON_ITERATIONS: usize = 60;
pub(crate) const NEWTON_RANDOM_STARTS: usize = 2;
pub(crate) const NEWTON_FD_STEP: f64 = 1e-7;

/// `V_{t+1}` as seen from stage `t`: values at the updated belief for every
/// player and next-stage own type.
pub trait Continuation {
    fn values(&self, belief: &BeliefVector) -> Result<Vec<Vec<f64>>>;
}

/// Continuation that is identically zero.
pub struct ZeroContinuation;

impl Continuation for ZeroContinuation {
    fn values(&self, belief: &BeliefVector) -> Result<Vec<Vec<f64>>> {
        Ok(belief.marginals().iter().map(|m| vec![0.0; m.len()]).collect())
    }
}

impl<F> Continuation for F
where
    F: Fn(&BeliefVector) -> Result<Vec<Vec<f64>>>,
{
    fn values(&self, belief: &BeliefVector) -> Result<Vec<Vec<f64>>> {
        self(belief)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SeedPlan {
    /// All pure profiles when there are at most 4096 of them, otherwise the
    /// uniform profile followed by 32 random profiles.
    Auto,
    Explicit(Vec<GammaProfile>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SelectionRule {
    FirstConverged,
    LowestResidual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointConfig {
    pub max_iterations: usize,
    pub damping: f64,
    pub fixed_point_tolerance: f64,
    pub argmax_tolerance: f64,
    pub seeds: SeedPlan,
    pub rng_seed: u64,
    pub selection: SelectionRule,
    pub quantize_resolution: f64,
    /// Run support enumeration at the last stage before the seeds.
    #[serde(default = "enabled")]
    pub support_enumeration: bool,
}

fn enabled() -> bool {
    true
}

impl Default for FixedPointConfig {
    fn default() -> Self {
        FixedPointConfig {
            max_iterations: 10_000,
            damping: 0.5,
            fixed_point_tolerance: 1e-9,
            argmax_tolerance: 1e-8,
            seeds: SeedPlan::Auto,
            rng_seed: 0,
            selection: SelectionRule::FirstConverged,
            quantize_resolution: DEFAULT_QUANTIZE_RESOLUTION,
            support_enumeration: true,
        }
    }
}

impl FixedPointConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(SpbeError::InvalidArgument(m.to_string()));
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return bad("damping must lie in (0, 1]");
        }
        if !(self.fixed_point_tolerance > 0.0 && self.argmax_tolerance > 0.0) {
            return bad("tolerances must be positive");
        }
        if !(self.quantize_resolution > 0.0) {
            return bad("quantize resolution must be positive");
        }
        if self.max_iterations == 0 {
            return bad("max_iterations must be positive");
        }
        Ok(())
    }

    /// Seeds in canonical order.
    pub fn seed_profiles(&self, game: &ValidatedGame) -> Vec<GammaProfile> {
        match &self.seeds {
            SeedPlan::Explicit(list) => list.clone(),
            SeedPlan::Auto => {
                let count = pure_profile_count(game);
                if count <= MAX_PURE_SEEDS {
                    (0..count as usize).map(|k| pure_profile(game, k)).collect()
                } else {
                    let mut rng = ChaCha8Rng::seed_from_u64(self.rng_seed);
                    let mut seeds = vec![GammaProfile::uniform(game)];
                    seeds.extend((0..RANDOM_SEED_COUNT).map(|_| random_profile(game, &mut rng)));
                    seeds
                }
            }
        }
    }
}

pub fn pure_profile_count(game: &ValidatedGame) -> u128 {
    (0..game.num_players()).fold(1u128, |acc, i| {
        (0..game.type_count(i)).fold(acc, |acc, _| acc.saturating_mul(game.action_count(i) as u128))
    })
}

/// The `k`-th pure profile: rows ordered by (player, type), last row varying fastest.
pub fn pure_profile(game: &ValidatedGame, mut k: usize) -> GammaProfile {
    let mut choices: Vec<Vec<usize>> = (0..game.num_players())
        .map(|i| vec![0; game.type_count(i)])
        .collect();
    for i in (0..game.num_players()).rev() {
        for x in (0..game.type_count(i)).rev() {
            let na = game.action_count(i);
            choices[i][x] = k % na;
            k /= na;
        }
    }
    GammaProfile::new(
        choices
            .iter()
            .enumerate()
            .map(|(i, c)| PartialFunction::pure(c, game.action_count(i)))
            .collect(),
    )
}

fn random_profile(game: &ValidatedGame, rng: &mut ChaCha8Rng) -> GammaProfile {
    GammaProfile::new(
        (0..game.num_players())
            .map(|i| {
                PartialFunction::new(
                    (0..game.type_count(i))
                        .map(|_| {
                            Distribution::normalized(random_distribution(rng, game.action_count(i)))
                                .expect("positive random row")
                        })
                        .collect(),
                )
            })
            .collect(),
    )
}

/// A certified solution of the stage fixed-point equation at one belief.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSolution {
    pub gamma: GammaProfile,
    /// `values[i][x]`: player `i`'s value at own type `x`.
    pub values: Vec<Vec<f64>>,
    /// Largest gain any (player, type) could get by switching to a best response.
    pub residual: f64,
    pub iterations: usize,
    /// Index into the seed list, or past its end for the support pattern
    /// `seed_id - seeds.len()` of the enumeration fallback; `None` when
    /// supplied by a stage rule.
    pub seed_id: Option<usize>,
}

/// Expected stage reward plus continuation of each pure own action:
/// `q[i][x][a]`, with opponents and the belief update following `profile`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionValues {
    q: Vec<Vec<Vec<f64>>>,
}

impl ActionValues {
    pub fn get(&self, player: usize, own_type: usize) -> &[f64] {
        &self.q[player][own_type]
    }

    pub fn objective(&self, player: usize, own_type: usize, row: &[f64]) -> f64 {
        self.q[player][own_type].iter().zip(row).map(|(q, p)| q * p).sum()
    }

    /// Gain from switching `(player, type)` to its best pure action.
    pub fn regret(&self, player: usize, own_type: usize, row: &[f64]) -> f64 {
        let q = &self.q[player][own_type];
        let best = q.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        (best - self.objective(player, own_type, row)).max(0.0)
    }

    pub fn max_regret(&self, profile: &GammaProfile) -> f64 {
        let mut worst = 0.0f64;
        for (i, by_type) in self.q.iter().enumerate() {
            for x in 0..by_type.len() {
                worst = worst.max(self.regret(i, x, profile.prescription(i).row(x)));
            }
        }
        worst
    }

    pub fn values_at(&self, profile: &GammaProfile) -> Vec<Vec<f64>> {
        self.q
            .iter()
            .enumerate()
            .map(|(i, by_type)| {
                (0..by_type.len())
                    .map(|x| self.objective(i, x, profile.prescription(i).row(x)))
                    .collect()
            })
            .collect()
    }

    /// Uniform mixture over actions within `tie_band` of the best.
    pub fn best_response(&self, player: usize, own_type: usize, tie_band: f64) -> Distribution {
        let q = &self.q[player][own_type];
        let best = q.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let winners: Vec<bool> = q.iter().map(|v| best - v <= tie_band).collect();
        let count = winners.iter().filter(|w| **w).count() as f64;
        Distribution::normalized(
            winners
                .iter()
                .map(|&w| if w { 1.0 / count } else { 0.0 })
                .collect(),
        )
        .expect("at least one maximizer")
    }
}

/// Computes [`ActionValues`] at stage `t`. At the last stage there is no
/// continuation term; otherwise the continuation is queried at
/// `F(belief, profile, a)` for every joint action `a` that some player
/// reaches with positive probability.
pub fn action_values(
    game: &ValidatedGame,
    t: usize,
    belief: &BeliefVector,
    profile: &GammaProfile,
    continuation: &dyn Continuation,
) -> Result<ActionValues> {
    belief.check_dims(game)?;
    profile.check_dims(game)?;
    let n = game.num_players();
    let types = game.joint_types();
    let actions = game.joint_actions();
    let terminal = t >= game.horizon();

    // Marginal probability of each own action under the belief.
    let marginal_action: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            (0..game.action_count(j))
                .map(|a| {
                    (0..game.type_count(j))
                        .map(|x| belief.marginal(j)[x] * profile.prescription(j).prob(a, x))
                        .sum()
                })
                .collect()
        })
        .collect();

    let mut q: Vec<Vec<Vec<f64>>> = (0..n)
        .map(|i| vec![vec![0.0; game.action_count(i)]; game.type_count(i)])
        .collect();

    for a in 0..actions.len() {
        let opponent_weight: Vec<f64> = (0..n)
            .map(|i| {
                (0..n)
                    .filter(|&j| j != i)
                    .map(|j| marginal_action[j][actions.component(a, j)])
                    .product()
            })
            .collect();
        if opponent_weight.iter().all(|w| *w == 0.0) {
            continue;
        }
        let next_values = if terminal {
            None
        } else {
            let next = update_belief(game, t, belief, profile, a)?;
            Some(continuation.values(&next)?)
        };
        for i in 0..n {
            if opponent_weight[i] == 0.0 {
                continue;
            }
            let own_action = actions.component(a, i);
            for x in 0..types.len() {
                let w: f64 = (0..n)
                    .filter(|&j| j != i)
                    .map(|j| {
                        let xj = types.component(x, j);
                        belief.marginal(j)[xj] * profile.prescription(j).prob(actions.component(a, j), xj)
                    })
                    .product();
                if w != 0.0 {
                    q[i][types.component(x, i)][own_action] += w * game.reward(i, x, a);
                }
            }
            if let Some(v) = &next_values {
                for xi in 0..game.type_count(i) {
                    let expected_next: f64 = game
                        .kernel_row(t, i, xi, a)
                        .iter()
                        .zip(&v[i])
                        .map(|(p, val)| p * val)
                        .sum();
                    q[i][xi][own_action] += opponent_weight[i] * expected_next;
                }
            }
        }
    }
    Ok(ActionValues { q })
}

/// Expected reward-to-go of `(player, own_type)` playing `row` while the
/// rest of the stage, including the belief update, follows `profile`.
#[allow(clippy::too_many_arguments)]
pub fn stage_objective(
    game: &ValidatedGame,
    t: usize,
    player: usize,
    own_type: usize,
    row: &[f64],
    profile: &GammaProfile,
    belief: &BeliefVector,
    continuation: &dyn Continuation,
) -> Result<f64> {
    let q = action_values(game, t, belief, profile, continuation)?;
    if row.len() != game.action_count(player) {
        return Err(SpbeError::DimensionMismatch("stage objective row".into()));
    }
    Ok(q.objective(player, own_type, row))
}

/// Maximizer of [`stage_objective`]: uniform over actions within
/// `argmax_tolerance` of the best pure action.
#[allow(clippy::too_many_arguments)]
pub fn best_response_row(
    game: &ValidatedGame,
    t: usize,
    player: usize,
    own_type: usize,
    profile: &GammaProfile,
    belief: &BeliefVector,
    continuation: &dyn Continuation,
    argmax_tolerance: f64,
) -> Result<Distribution> {
    let q = action_values(game, t, belief, profile, continuation)?;
    Ok(q.best_response(player, own_type, argmax_tolerance))
}

/// Wraps a profile that is already known, computing values and its residual.
pub fn evaluate_profile(
    game: &ValidatedGame,
    t: usize,
    belief: &BeliefVector,
    profile: GammaProfile,
    continuation: &dyn Continuation,
) -> Result<StageSolution> {
    let q = action_values(game, t, belief, &profile, continuation)?;
    Ok(StageSolution {
        values: q.values_at(&profile),
        residual: q.max_regret(&profile),
        gamma: profile,
        iterations: 0,
        seed_id: None,
    })
}

enum SeedRun {
    Converged(StageSolution),
    Failed { residual: f64, cause: Option<SpbeError> },
}

fn run_seed(
    game: &ValidatedGame,
    t: usize,
    belief: &BeliefVector,
    continuation: &dyn Continuation,
    config: &FixedPointConfig,
    seed: &GammaProfile,
    seed_id: usize,
) -> SeedRun {
    match iterate_from(game, t, belief, continuation, config, seed) {
        Ok((profile, residual, iterations, q)) if residual <= config.fixed_point_tolerance => {
            SeedRun::Converged(StageSolution {
                values: q.values_at(&profile),
                gamma: profile,
                residual,
                iterations,
                seed_id: Some(seed_id),
            })
        }
        Ok((_, residual, _, _)) => SeedRun::Failed {
            residual,
            cause: None,
        },
        Err(e) => SeedRun::Failed {
            residual: f64::INFINITY,
            cause: Some(e),
        },
    }
}

/// Damped synchronous best-response iteration. Each row moves toward its best
/// response by its own step size, which halves whenever the row reverses
/// direction; the undamped best-response profile is also tried at every step.
/// A seed whose residual stops improving is abandoned before the budget.
fn iterate_from(
    game: &ValidatedGame,
    t: usize,
    belief: &BeliefVector,
    continuation: &dyn Continuation,
    config: &FixedPointConfig,
    seed: &GammaProfile,
) -> Result<(GammaProfile, f64, usize, ActionValues)> {
    seed.check_dims(game)?;
    let tie_band = config.fixed_point_tolerance * 1e-3;
    let n = game.num_players();
    let mut profile = seed.clone();
    let mut steps: Vec<Vec<f64>> = (0..n).map(|i| vec![config.damping; game.type_count(i)]).collect();
    let mut previous: Vec<Vec<Option<Vec<f64>>>> =
        (0..n).map(|i| vec![None; game.type_count(i)]).collect();

    let mut q = action_values(game, t, belief, &profile, continuation)?;
    let mut residual = q.max_regret(&profile);
    let mut best: Option<(GammaProfile, f64, usize, ActionValues)> = None;
    let mut polish_left = POLISH_ITERATIONS;
    let mut stall_mark = residual;
    let mut last_progress = 0;

    for it in 0..config.max_iterations {
        if residual < 0.5 * stall_mark {
            stall_mark = residual;
            last_progress = it;
        }
        if best.is_none() && it - last_progress > STALL_WINDOW {
            break;
        }
        if residual <= config.fixed_point_tolerance {
            let improves = best.as_ref().is_none_or(|b| residual < b.1);
            if improves {
                best = Some((profile.clone(), residual, it, q.clone()));
            }
            if residual <= POLISH_FLOOR || polish_left == 0 {
                break;
            }
            polish_left -= 1;
        }

        let responses: Vec<Vec<Distribution>> = (0..n)
            .map(|i| (0..game.type_count(i)).map(|x| q.best_response(i, x, tie_band)).collect())
            .collect();

        if best.is_none() {
            let candidate = GammaProfile::new(
                responses.iter().map(|rows| PartialFunction::new(rows.clone())).collect(),
            );
            let cq = action_values(game, t, belief, &candidate, continuation)?;
            let cres = cq.max_regret(&candidate);
            if cres <= config.fixed_point_tolerance {
                return Ok((candidate, cres, it + 1, cq));
            }
        }

        let mut moving = false;
        for i in 0..n {
            for x in 0..game.type_count(i) {
                let row = profile.prescription(i).row(x);
                let dir: Vec<f64> = responses[i][x].iter().zip(row.iter()).map(|(b, r)| b - r).collect();
                if let Some(prev) = &previous[i][x] {
                    let dot: f64 = prev.iter().zip(&dir).map(|(a, b)| a * b).sum();
                    if dot < 0.0 {
                        steps[i][x] *= 0.5;
                    }
                }
                let step = steps[i][x];
                if step >= MIN_STEP {
                    moving = true;
                }
                let next: Vec<f64> = row.iter().zip(&dir).map(|(r, d)| r + step * d).collect();
                profile.prescription_mut(i).rows_mut()[x] = Distribution::normalized(next)?;
                previous[i][x] = Some(dir);
            }
        }
        q = action_values(game, t, belief, &profile, continuation)?;
        residual = q.max_regret(&profile);
        if !moving && best.is_none() {
            break;
        }
    }
    if residual <= config.fixed_point_tolerance && best.as_ref().is_none_or(|b| residual < b.1) {
        best = Some((profile.clone(), residual, config.max_iterations, q.clone()));
    }
    Ok(best.unwrap_or((profile, residual, config.max_iterations, q)))
}

/// Support enumeration applies at the last stage, where the stage game is a
/// finite Bayesian game and the indifference conditions are polynomial.
fn enumerates_supports(game: &ValidatedGame, t: usize, config: &FixedPointConfig) -> bool {
    config.support_enumeration && t >= game.horizon() && support_pattern_count(game).is_some()
}

/// Solves the stage fixed-point equation at `(t, belief)` and returns the
/// solution chosen by the configured selection rule. At the last stage support
/// enumeration runs first and the seeds are a fallback; earlier stages use the
/// seeds only.
pub fn solve_stage_fixed_point(
    game: &ValidatedGame,
    t: usize,
    belief: &BeliefVector,
    continuation: &dyn Continuation,
    config: &FixedPointConfig,
) -> Result<StageSolution> {
    let seeds = config.seed_profiles(game);
    let mut residuals = Vec::with_capacity(seeds.len());
    let mut cause = None;
    let first_only = config.selection == SelectionRule::FirstConverged;
    if enumerates_supports(game, t, config) {
        let found = support_enumeration(game, t, belief, continuation, config, seeds.len(), first_only, &mut cause);
        if let Some(sol) = found.into_iter().min_by(|a, b| a.residual.total_cmp(&b.residual)) {
            return Ok(sol);
        }
    }
    let mut chosen: Option<StageSolution> = None;
    for (k, seed) in seeds.iter().enumerate() {
        match run_seed(game, t, belief, continuation, config, seed, k) {
            SeedRun::Converged(sol) => {
                residuals.push(sol.residual);
                match config.selection {
                    SelectionRule::FirstConverged => return Ok(sol),
                    SelectionRule::LowestResidual => {
                        if chosen.as_ref().is_none_or(|c| sol.residual < c.residual) {
                            chosen = Some(sol);
                        }
                    }
                }
            }
            SeedRun::Failed { residual, cause: c } => {
                residuals.push(residual);
                if cause.is_none() {
                    cause = c.map(|e| e.to_string());
                }
            }
        }
    }
    chosen.ok_or_else(|| SpbeError::NoFixedPointFound {
        stage: t,
        belief: belief.to_vecs(),
        residuals,
        cause,
    })
}

/// Every distinct converged solution across the seed list and then the
/// support patterns (deduplicated at 1e-6 in sup norm).
pub fn enumerate_stage_fixed_points(
    game: &ValidatedGame,
    t: usize,
    belief: &BeliefVector,
    continuation: &dyn Continuation,
    config: &FixedPointConfig,
) -> Result<Vec<StageSolution>> {
    let seeds = config.seed_profiles(game);
    let mut found: Vec<StageSolution> = Vec::new();
    let mut residuals = Vec::new();
    let mut cause = None;
    for (k, seed) in seeds.iter().enumerate() {
        match run_seed(game, t, belief, continuation, config, seed, k) {
            SeedRun::Converged(sol) => {
                residuals.push(sol.residual);
                if !found.iter().any(|f| f.gamma.sup_distance(&sol.gamma) <= 1e-6) {
                    found.push(sol);
                }
            }
            SeedRun::Failed { residual, cause: c } => {
                residuals.push(residual);
                if cause.is_none() {
                    cause = c.map(|e| e.to_string());
                }
            }
        }
    }
    if enumerates_supports(game, t, config) {
        for sol in support_enumeration(game, t, belief, continuation, config, seeds.len(), false, &mut cause) {
            if !found.iter().any(|f| f.gamma.sup_distance(&sol.gamma) <= 1e-6) {
                found.push(sol);
            }
        }
    }
    if found.is_empty() {
        return Err(SpbeError::NoFixedPointFound {
            stage: t,
            belief: belief.to_vecs(),
            residuals,
            cause,
        });
    }
    Ok(found)
}
