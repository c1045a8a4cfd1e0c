//! Random instances for property tests and the acceptance suite.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::belief::{GammaProfile, PartialFunction};
use crate::game::{validate_game, Distribution, GameSpec, GeneralStrategy, ValidatedGame};

/// A strictly positive random probability vector (normalized exponentials).
pub fn random_distribution<R: Rng + ?Sized>(rng: &mut R, len: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..len).map(|_| -(1.0 - rng.gen::<f64>()).ln() + 1e-3).collect();
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / sum).collect()
}

/// Random game with `players` players, `types` types and `actions` actions each,
/// rewards uniform in [-1, 1]. With `random_kernels == false` types are static.
pub fn random_game<R: Rng + ?Sized>(
    rng: &mut R,
    players: usize,
    types: usize,
    actions: usize,
    horizon: usize,
    random_kernels: bool,
) -> ValidatedGame {
    let joint_types = types.pow(players as u32);
    let joint_actions = actions.pow(players as u32);
    let priors = (0..players).map(|_| random_distribution(rng, types)).collect();
    let kernels = random_kernels.then(|| {
        (1..horizon)
            .map(|_| {
                (0..players)
                    .map(|_| {
                        (0..types)
                            .map(|_| {
                                (0..joint_actions)
                                    .map(|_| random_distribution(rng, types))
                                    .collect()
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect()
    });
    let rewards = (0..players)
        .map(|_| {
            (0..joint_types)
                .map(|_| (0..joint_actions).map(|_| rng.gen_range(-1.0..=1.0)).collect())
                .collect()
        })
        .collect();
    validate_game(GameSpec {
        num_players: players,
        horizon,
        type_space_sizes: vec![types; players],
        action_space_sizes: vec![actions; players],
        priors,
        kernels,
        rewards,
    })
    .expect("random game is valid by construction")
}

pub fn random_gamma_profile<R: Rng + ?Sized>(rng: &mut R, game: &ValidatedGame) -> GammaProfile {
    GammaProfile::new(
        (0..game.num_players())
            .map(|i| {
                PartialFunction::new(
                    (0..game.type_count(i))
                        .map(|_| {
                            Distribution::normalized(random_distribution(rng, game.action_count(i)))
                                .unwrap()
                        })
                        .collect(),
                )
            })
            .collect(),
    )
}

/// A general (full type-history dependent) strategy whose action
/// distributions are pseudo-random functions of the information set.
/// A fraction of information sets get a zero entry so that zero-probability
/// public histories occur.
#[derive(Debug, Clone)]
pub struct RandomGeneralStrategy {
    seed: u64,
    action_counts: Vec<usize>,
}

impl RandomGeneralStrategy {
    pub fn new(game: &ValidatedGame, seed: u64) -> Self {
        RandomGeneralStrategy {
            seed,
            action_counts: (0..game.num_players()).map(|i| game.action_count(i)).collect(),
        }
    }
}

impl GeneralStrategy for RandomGeneralStrategy {
    fn action_distribution(&self, player: usize, public: &[usize], own_types: &[usize]) -> Vec<f64> {
        let mut h = DefaultHasher::new();
        (self.seed, player, public, own_types).hash(&mut h);
        let mut rng = ChaCha8Rng::seed_from_u64(h.finish());
        let mut d = random_distribution(&mut rng, self.action_counts[player]);
        if d.len() > 1 && rng.gen_bool(0.2) {
            let k = rng.gen_range(0..d.len());
            d[k] = 0.0;
            let s: f64 = d.iter().sum();
            d.iter_mut().for_each(|v| *v /= s);
        }
        d
    }
}
