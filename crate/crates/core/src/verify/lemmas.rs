//! Checks of the three properties the sequential-rationality argument rests
//! on, each computed independently of the solver's own bookkeeping.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::belief::PartialFunction;
use crate::error::{Result, SpbeError};
use crate::game::{enumerate_histories, Distribution, GeneralStrategy, ValidatedGame, DEFAULT_ENUMERATION_CAP};
use crate::solver::{Equilibrium, StrategyProfile};
use crate::testing::random_distribution;

fn stage_values(eq: &Equilibrium, node: usize) -> Result<&Vec<Vec<f64>>> {
    eq.solution(node)
        .map(|s| &s.values)
        .ok_or_else(|| SpbeError::MissingNode(eq.tree().history(node)))
}

fn require_complete(eq: &Equilibrium) -> Result<()> {
    match eq.first_error() {
        Some((h, _)) => Err(SpbeError::MissingNode(h)),
        None if !eq.is_complete() => Err(SpbeError::MissingNode(
            eq.profile.first_missing().unwrap_or_default(),
        )),
        None => Ok(()),
    }
}

/// Largest gap between `V_t^i(mu*[a_{1:t-1}], x_t^i)` and the enumerated
/// expected reward-to-go given `(a_{1:t-1}, x^i_{1:t})` under the
/// constructed profile, over positive-probability conditioning events.
pub fn value_consistency_error(eq: &Equilibrium) -> Result<f64> {
    require_complete(eq)?;
    let game = eq.game();
    let tree = eq.tree();
    let horizon = game.horizon();
    let mut acc: HashMap<(usize, usize, Vec<usize>), (f64, f64)> = HashMap::new();
    for path in enumerate_histories(game, &eq.profile, horizon, DEFAULT_ENUMERATION_CAP)? {
        for t in 1..=horizon {
            let node = tree.node_id(&path.actions[..t - 1]).expect("inside the tree");
            for i in 0..game.num_players() {
                let to_go: f64 = (t..=horizon)
                    .map(|s| game.reward(i, path.types[s - 1], path.actions[s - 1]))
                    .sum();
                let e = acc.entry((node, i, path.own_types(game, i, t))).or_insert((0.0, 0.0));
                e.0 += path.prob;
                e.1 += path.prob * to_go;
            }
        }
    }
    let mut worst = 0.0f64;
    for ((node, i, own), (mass, total)) in acc {
        if mass > 0.0 {
            let v = stage_values(eq, node)?[i][*own.last().expect("non-empty")];
            worst = worst.max((total / mass - v).abs());
        }
    }
    Ok(worst)
}

/// One-step lookahead value of playing `row` at `(node, player, own_type)`
/// and then continuing with the stored next-stage values.
pub fn one_step_value(eq: &Equilibrium, node: usize, player: usize, own_type: usize, row: &[f64]) -> Result<f64> {
    let game = eq.game();
    let tree = eq.tree();
    let t = tree.stage(node);
    let types = game.joint_types();
    let joint = game.joint_actions();
    let gamma = eq.profile.get(node).ok_or_else(|| SpbeError::MissingNode(tree.history(node)))?;
    let mu = eq.beliefs.get(node).ok_or_else(|| SpbeError::MissingNode(tree.history(node)))?;
    let mut total = 0.0;
    for x in 0..types.len() {
        if types.component(x, player) != own_type {
            continue;
        }
        let w_types: f64 = (0..game.num_players())
            .filter(|&j| j != player)
            .map(|j| mu.marginal(j)[types.component(x, j)])
            .product();
        for a in 0..joint.len() {
            let w = w_types
                * row[joint.component(a, player)]
                * (0..game.num_players())
                    .filter(|&j| j != player)
                    .map(|j| gamma.prescription(j).prob(joint.component(a, j), types.component(x, j)))
                    .product::<f64>();
            if w == 0.0 {
                continue;
            }
            let mut v = game.reward(player, x, a);
            if let Some(child) = tree.child(node, a) {
                let next = &stage_values(eq, child)?[player];
                v += game
                    .kernel_row(t, player, own_type, a)
                    .iter()
                    .zip(next)
                    .map(|(p, val)| p * val)
                    .sum::<f64>();
            }
            total += w * v;
        }
    }
    Ok(total)
}

/// Largest excess of a one-step deviation's lookahead value over the stage
/// value, trying every pure action plus `random_rows` random mixtures.
pub fn one_step_deviation_excess(eq: &Equilibrium, random_rows: usize, seed: u64) -> Result<f64> {
    require_complete(eq)?;
    let game = eq.game();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::NEG_INFINITY;
    for node in 0..eq.tree().node_count() {
        let values = stage_values(eq, node)?;
        for i in 0..game.num_players() {
            let na = game.action_count(i);
            let mut rows: Vec<Vec<f64>> = (0..na).map(|a| Distribution::point(na, a).into_vec()).collect();
            rows.extend((0..random_rows).map(|_| random_distribution(&mut rng, na)));
            for x in 0..game.type_count(i) {
                for row in &rows {
                    worst = worst.max(one_step_value(eq, node, i, x, row)? - values[i][x]);
                }
            }
        }
    }
    Ok(worst)
}

/// The profile with one player's prescription replaced at one node.
pub struct NodeOverride<'a> {
    pub base: &'a StrategyProfile,
    pub node: usize,
    pub player: usize,
    pub rows: PartialFunction,
}

impl GeneralStrategy for NodeOverride<'_> {
    fn action_distribution(&self, player: usize, public: &[usize], own_types: &[usize]) -> Vec<f64> {
        if player == self.player && self.base.tree.node_id(public) == Some(self.node) {
            self.rows.row(*own_types.last().expect("non-empty")).to_vec()
        } else {
            self.base.action_distribution(player, public, own_types)
        }
    }
}

type ContinuationKey = (Vec<usize>, Vec<usize>);

fn continuation_given(
    game: &ValidatedGame,
    strategy: &dyn GeneralStrategy,
    prefix: &[usize],
    player: usize,
) -> Result<HashMap<ContinuationKey, f64>> {
    let t = prefix.len() + 1;
    let horizon = game.horizon();
    let mut acc: HashMap<ContinuationKey, (f64, f64)> = HashMap::new();
    for path in enumerate_histories(game, strategy, horizon, DEFAULT_ENUMERATION_CAP)? {
        if &path.actions[..t - 1] != prefix {
            continue;
        }
        let to_go: f64 = (t + 1..=horizon)
            .map(|s| game.reward(player, path.types[s - 1], path.actions[s - 1]))
            .sum();
        let key = (path.actions[..t].to_vec(), path.own_types(game, player, t + 1));
        let e = acc.entry(key).or_insert((0.0, 0.0));
        e.0 += path.prob;
        e.1 += path.prob * to_go;
    }
    Ok(acc
        .into_iter()
        .filter(|(_, (m, _))| *m > 0.0)
        .map(|(k, (m, s))| (k, s / m))
        .collect())
}

/// Largest change in the expected reward from `t + 1` on, conditional on
/// `(a_{1:t}, x^i_{1:t+1})`, when player `i`'s stage-`t` prescription at a
/// node is swapped for a random full-support one. Nodes at the last stage
/// have no continuation and are skipped.
pub fn continuation_independence_error(eq: &Equilibrium, seed: u64) -> Result<f64> {
    require_complete(eq)?;
    let game = eq.game();
    let tree = eq.tree();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for node in 0..tree.node_count() {
        if tree.child(node, 0).is_none() {
            continue;
        }
        let prefix = tree.history(node);
        for i in 0..game.num_players() {
            let rows = PartialFunction::new(
                (0..game.type_count(i))
                    .map(|_| Distribution::normalized(random_distribution(&mut rng, game.action_count(i))))
                    .collect::<Result<_>>()?,
            );
            let alt = NodeOverride {
                base: &eq.profile,
                node,
                player: i,
                rows,
            };
            let a = continuation_given(game, &eq.profile, &prefix, i)?;
            let b = continuation_given(game, &alt, &prefix, i)?;
            for (key, va) in &a {
                if let Some(vb) = b.get(key) {
                    worst = worst.max((va - vb).abs());
                }
            }
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pubgoods::{construct_with_stage1, PubGoodsParams};
    use crate::solver::{forward_construct, EquilibriumGenerator, FixedPointConfig};
    use crate::testing::random_game;
    use std::sync::Arc;

    fn public_goods_equilibrium() -> Equilibrium {
        construct_with_stage1(&PubGoodsParams::reference(), &FixedPointConfig::default(), [0.0, 1.0, 0.0, 0.0]).unwrap()
    }

    #[test]
    fn lemmas_hold_on_the_published_equilibrium() {
        let eq = public_goods_equilibrium();
        assert!(value_consistency_error(&eq).unwrap() < 1e-8);
        assert!(one_step_deviation_excess(&eq, 8, 1).unwrap() <= 1e-8);
        assert!(continuation_independence_error(&eq, 2).unwrap() <= 1e-10);
    }

    #[test]
    fn lemmas_hold_on_random_two_stage_games() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let mut solved = 0;
        for _ in 0..10 {
            let game = Arc::new(random_game(&mut rng, 2, 2, 2, 2, true));
            let g = EquilibriumGenerator::new(game, FixedPointConfig::default()).unwrap();
            let eq = forward_construct(&g);
            if !eq.is_complete() {
                continue;
            }
            solved += 1;
            assert!(value_consistency_error(&eq).unwrap() < 1e-8);
            assert!(one_step_deviation_excess(&eq, 4, 3).unwrap() <= 1e-8);
            assert!(continuation_independence_error(&eq, 4).unwrap() <= 1e-10);
        }
        assert!(solved > 0);
    }
}
