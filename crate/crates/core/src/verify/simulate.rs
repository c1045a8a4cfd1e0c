use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SpbeError};
use crate::game::{GeneralStrategy, ValidatedGame};

/// Episodes per RNG stream. Fixed so results do not depend on thread count.
pub const CHUNK_EPISODES: u64 = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    pub episodes: u64,
    pub rng_seed: u64,
    pub means: Vec<f64>,
    pub standard_errors: Vec<f64>,
}

fn sample(rng: &mut ChaCha8Rng, probs: &[f64]) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (k, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    // u landed in the rounding slack above the last cumulative sum
    probs.iter().rposition(|p| *p > 0.0).unwrap_or(0)
}

fn run_episode(game: &ValidatedGame, strategy: &dyn GeneralStrategy, rng: &mut ChaCha8Rng, totals: &mut [f64]) {
    let n = game.num_players();
    let mut own: Vec<Vec<usize>> = (0..n).map(|i| vec![sample(rng, game.prior(i))]).collect();
    let mut public = Vec::with_capacity(game.horizon());
    totals.iter_mut().for_each(|v| *v = 0.0);
    for t in 1..=game.horizon() {
        let current: Vec<usize> = own.iter().map(|h| *h.last().expect("non-empty")).collect();
        let actions: Vec<usize> = (0..n)
            .map(|i| sample(rng, &strategy.action_distribution(i, &public, &own[i])))
            .collect();
        let x = game.joint_types().encode(&current);
        let a = game.joint_actions().encode(&actions);
        for (i, total) in totals.iter_mut().enumerate() {
            *total += game.reward(i, x, a);
        }
        if t < game.horizon() {
            for i in 0..n {
                let next = sample(rng, game.kernel_row(t, i, current[i], a));
                own[i].push(next);
            }
        }
        public.push(a);
    }
}

/// Monte Carlo estimate of every player's total expected reward. Episodes
/// are split into fixed-size chunks, chunk `k` drawing from stream `k` of a
/// generator seeded with `rng_seed`; sums are combined in chunk order.
pub fn simulate(
    game: &ValidatedGame,
    strategy: &dyn GeneralStrategy,
    episodes: u64,
    rng_seed: u64,
) -> Result<SimulationResult> {
    if episodes == 0 {
        return Err(SpbeError::InvalidArgument("episodes must be at least 1".into()));
    }
    let n = game.num_players();
    let chunks = episodes.div_ceil(CHUNK_EPISODES);
    let partial: Vec<(Vec<f64>, Vec<f64>)> = (0..chunks)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
            rng.set_stream(k);
            let count = CHUNK_EPISODES.min(episodes - k * CHUNK_EPISODES);
            let mut sum = vec![0.0; n];
            let mut sum_sq = vec![0.0; n];
            let mut totals = vec![0.0; n];
            for _ in 0..count {
                run_episode(game, strategy, &mut rng, &mut totals);
                for i in 0..n {
                    sum[i] += totals[i];
                    sum_sq[i] += totals[i] * totals[i];
                }
            }
            (sum, sum_sq)
        })
        .collect();
    let mut sum = vec![0.0; n];
    let mut sum_sq = vec![0.0; n];
    for (s, s2) in &partial {
        for i in 0..n {
            sum[i] += s[i];
            sum_sq[i] += s2[i];
        }
    }
    let m = episodes as f64;
    let means: Vec<f64> = sum.iter().map(|s| s / m).collect();
    let standard_errors = (0..n)
        .map(|i| {
            if episodes < 2 {
                return 0.0;
            }
            let var = ((sum_sq[i] - m * means[i] * means[i]) / (m - 1.0)).max(0.0);
            (var / m).sqrt()
        })
        .collect();
    Ok(SimulationResult {
        episodes,
        rng_seed,
        means,
        standard_errors,
    })
}
