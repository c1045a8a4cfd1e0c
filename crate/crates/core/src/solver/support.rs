//! Support enumeration for stage fixed points the damped search cannot reach.
//! For each assignment of an action support to every (player, type) row, the
//! indifference conditions on the support are solved by Newton's method and
//! any root is certified by its regret.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::stage::{
    action_values, Continuation, FixedPointConfig, StageSolution, MAX_SUPPORT_PATTERNS, NEWTON_FD_STEP,
    NEWTON_ITERATIONS, NEWTON_RANDOM_STARTS,
};
use crate::belief::{BeliefVector, GammaProfile, PartialFunction};
use crate::error::{Result, SpbeError};
use crate::game::{Distribution, ValidatedGame};

/// `None` when the pattern count exceeds [`MAX_SUPPORT_PATTERNS`].
pub fn support_pattern_count(game: &ValidatedGame) -> Option<usize> {
    let mut count: u128 = 1;
    for i in 0..game.num_players() {
        let per_row = 1u128.checked_shl(game.action_count(i) as u32)? - 1;
        for _ in 0..game.type_count(i) {
            count = count.checked_mul(per_row)?;
            if count > MAX_SUPPORT_PATTERNS {
                return None;
            }
        }
    }
    Some(count as usize)
}

/// Supports of the `k`-th pattern, rows in (player, type) order with the last
/// row varying fastest.
fn pattern(game: &ValidatedGame, mut k: usize) -> Vec<Vec<usize>> {
    let rows: Vec<usize> = (0..game.num_players())
        .flat_map(|i| std::iter::repeat_n(game.action_count(i), game.type_count(i)))
        .collect();
    let mut supports = vec![Vec::new(); rows.len()];
    for (r, &na) in rows.iter().enumerate().rev() {
        let per_row = (1usize << na) - 1;
        let mask = k % per_row + 1;
        k /= per_row;
        supports[r] = (0..na).filter(|a| mask >> a & 1 == 1).collect();
    }
    supports
}

fn unknowns(supports: &[Vec<usize>]) -> usize {
    supports.iter().map(|s| s.len() - 1).sum()
}

/// Profile whose rows put `z`'s probabilities on the leading support actions
/// and the remainder on the last; negative entries are clipped.
fn profile_from(game: &ValidatedGame, supports: &[Vec<usize>], z: &[f64]) -> Result<GammaProfile> {
    let mut r = 0;
    let mut k = 0;
    let mut players = Vec::with_capacity(game.num_players());
    for i in 0..game.num_players() {
        let mut rows = Vec::with_capacity(game.type_count(i));
        for _ in 0..game.type_count(i) {
            let support = &supports[r];
            let mut row = vec![0.0; game.action_count(i)];
            let mut rest = 1.0;
            for &a in &support[..support.len() - 1] {
                row[a] = z[k].max(0.0);
                rest -= z[k];
                k += 1;
            }
            row[*support.last().expect("non-empty support")] = rest.max(0.0);
            rows.push(Distribution::normalized(row)?);
            r += 1;
        }
        players.push(PartialFunction::new(rows));
    }
    Ok(GammaProfile::new(players))
}

fn indifference(
    game: &ValidatedGame,
    t: usize,
    belief: &BeliefVector,
    continuation: &dyn Continuation,
    supports: &[Vec<usize>],
    z: &[f64],
) -> Result<Vec<f64>> {
    let profile = profile_from(game, supports, z)?;
    let q = action_values(game, t, belief, &profile, continuation)?;
    let mut out = Vec::with_capacity(z.len());
    let mut r = 0;
    for i in 0..game.num_players() {
        for x in 0..game.type_count(i) {
            let values = q.get(i, x);
            let support = &supports[r];
            let last = values[*support.last().expect("non-empty support")];
            out.extend(support[..support.len() - 1].iter().map(|&a| values[a] - last));
            r += 1;
        }
    }
    Ok(out)
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Solves `m x = b` in place by Gaussian elimination with partial pivoting.
fn solve_linear(mut m: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&a, &c| m[a][col].abs().total_cmp(&m[c][col].abs()))?;
        if m[pivot][col].abs() < 1e-14 {
            return None;
        }
        m.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = m[row][col] / m[col][col];
            for k in col..n {
                m[row][k] -= f * m[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| m[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / m[row][row];
    }
    Some(x)
}

/// Newton's method from `z0`; returns the final point.
fn newton(
    game: &ValidatedGame,
    t: usize,
    belief: &BeliefVector,
    continuation: &dyn Continuation,
    supports: &[Vec<usize>],
    z0: Vec<f64>,
    target: f64,
) -> Result<(Vec<f64>, usize)> {
    let n = z0.len();
    let mut z = z0;
    let mut f = indifference(game, t, belief, continuation, supports, &z)?;
    for it in 0..NEWTON_ITERATIONS {
        let norm = sup_norm(&f);
        if norm <= target {
            return Ok((z, it));
        }
        let mut jac = vec![vec![0.0; n]; n];
        for k in 0..n {
            let mut zk = z.clone();
            zk[k] += NEWTON_FD_STEP;
            let fk = indifference(game, t, belief, continuation, supports, &zk)?;
            for (row, (a, b)) in fk.iter().zip(&f).enumerate() {
                jac[row][k] = (a - b) / NEWTON_FD_STEP;
            }
        }
        let Some(step) = solve_linear(jac, f.clone()) else {
            return Ok((z, it));
        };
        let mut scale = 1.0;
        let mut improved = false;
        for _ in 0..12 {
            let trial: Vec<f64> = z.iter().zip(&step).map(|(a, d)| a - scale * d).collect();
            let ft = indifference(game, t, belief, continuation, supports, &trial)?;
            if sup_norm(&ft) < norm {
                z = trial;
                f = ft;
                improved = true;
                break;
            }
            scale *= 0.5;
        }
        if !improved {
            return Ok((z, it));
        }
    }
    Ok((z, NEWTON_ITERATIONS))
}

/// Certified solutions found by support enumeration, in pattern order with
/// patterns of fewer mixed coordinates first. Stops at the first one when
/// `first_only`. `seed_offset` is added to the pattern index to form `seed_id`.
#[allow(clippy::too_many_arguments)]
pub fn support_enumeration(
    game: &ValidatedGame,
    t: usize,
    belief: &BeliefVector,
    continuation: &dyn Continuation,
    config: &FixedPointConfig,
    seed_offset: usize,
    first_only: bool,
    cause: &mut Option<String>,
) -> Vec<StageSolution> {
    let Some(count) = support_pattern_count(game) else {
        return Vec::new();
    };
    let mut order: Vec<(usize, Vec<Vec<usize>>)> = (0..count).map(|k| (k, pattern(game, k))).collect();
    order.sort_by_key(|(_, s)| unknowns(s));
    let mut found: Vec<StageSolution> = Vec::new();
    let mut note = |e: SpbeError| {
        if cause.is_none() {
            *cause = Some(e.to_string());
        }
    };
    for (k, supports) in order {
        let n = unknowns(&supports);
        let mut starts: Vec<Vec<f64>> = vec![supports
            .iter()
            .flat_map(|s| std::iter::repeat_n(1.0 / s.len() as f64, s.len() - 1))
            .collect()];
        if n > 0 {
            let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed ^ (k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            for _ in 0..NEWTON_RANDOM_STARTS {
                starts.push(
                    supports
                        .iter()
                        .flat_map(|s| {
                            let w: Vec<f64> = (0..s.len()).map(|_| rng.gen_range(0.05..1.0)).collect();
                            let total: f64 = w.iter().sum();
                            w.into_iter().take(s.len() - 1).map(move |v| v / total)
                        })
                        .collect(),
                );
            }
        }
        for z0 in starts {
            let (z, iterations) = match newton(game, t, belief, continuation, &supports, z0, config.fixed_point_tolerance * 1e-3) {
                Ok(r) => r,
                Err(e) => {
                    note(e);
                    continue;
                }
            };
            let evaluated = profile_from(game, &supports, &z)
                .and_then(|p| action_values(game, t, belief, &p, continuation).map(|q| (p, q)));
            let (profile, q) = match evaluated {
                Ok(pq) => pq,
                Err(e) => {
                    note(e);
                    continue;
                }
            };
            let residual = q.max_regret(&profile);
            if residual > config.fixed_point_tolerance {
                continue;
            }
            if found.iter().any(|f| f.gamma.sup_distance(&profile) <= 1e-6) {
                break;
            }
            found.push(StageSolution {
                values: q.values_at(&profile),
                gamma: profile,
                residual,
                iterations,
                seed_id: Some(seed_offset + k),
            });
            if first_only {
                return found;
            }
            break;
        }
    }
    found
}
