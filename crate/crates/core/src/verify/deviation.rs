//! Best-response dynamic programming over (public node, own type).

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SpbeError};
use crate::game::ValidatedGame;
use crate::solver::{BeliefSystem, PublicTree, StrategyProfile};

use super::structure::check_belief_consistency;

pub const DEFAULT_VERIFY_TOLERANCE: f64 = 1e-8;
pub const BELIEF_CONSISTENCY_TOLERANCE: f64 = 1e-10;
const ROW_TOLERANCE: f64 = 1e-10;

/// Expected reward and successor law of one own action at one state.
#[derive(Debug, Clone, PartialEq)]
pub struct MdpAction {
    pub reward: f64,
    /// `(child node, next own type, probability)`; empty at the last stage.
    pub transitions: Vec<(usize, usize, f64)>,
}

/// Player `i`'s decision problem when everyone else follows the profile and
/// opponents' types are distributed per the belief system.
#[derive(Debug, Clone)]
pub struct DeviationMdp {
    pub player: usize,
    pub tree: PublicTree,
    /// `actions[node][own_type][own_action]`.
    pub actions: Vec<Vec<Vec<MdpAction>>>,
}

fn require_complete(profile: &StrategyProfile, beliefs: &BeliefSystem) -> Result<()> {
    if profile.tree != beliefs.tree {
        return Err(SpbeError::DimensionMismatch("profile and beliefs cover different trees".into()));
    }
    if let Some(h) = profile.first_missing() {
        return Err(SpbeError::MissingNode(h));
    }
    if let Some(n) = beliefs.beliefs.iter().position(Option::is_none) {
        return Err(SpbeError::MissingNode(beliefs.tree.history(n)));
    }
    Ok(())
}

impl DeviationMdp {
    pub fn build(
        game: &ValidatedGame,
        profile: &StrategyProfile,
        beliefs: &BeliefSystem,
        player: usize,
    ) -> Result<DeviationMdp> {
        require_complete(profile, beliefs)?;
        let tree = profile.tree.clone();
        let types = game.joint_types();
        let joint = game.joint_actions();
        let n = game.num_players();
        let mut actions = Vec::with_capacity(tree.node_count());
        for node in 0..tree.node_count() {
            let t = tree.stage(node);
            let gamma = profile.get(node).expect("checked complete");
            let mu = beliefs.get(node).expect("checked complete");
            gamma.check_dims(game)?;
            mu.check_dims(game)?;
            let mut by_type = vec![
                vec![
                    MdpAction {
                        reward: 0.0,
                        transitions: Vec::new()
                    };
                    game.action_count(player)
                ];
                game.type_count(player)
            ];
            for x in 0..types.len() {
                let xi = types.component(x, player);
                let w_types: f64 = (0..n)
                    .filter(|&j| j != player)
                    .map(|j| mu.marginal(j)[types.component(x, j)])
                    .product();
                if w_types == 0.0 {
                    continue;
                }
                for a in 0..joint.len() {
                    let w: f64 = w_types
                        * (0..n)
                            .filter(|&j| j != player)
                            .map(|j| gamma.prescription(j).prob(joint.component(a, j), types.component(x, j)))
                            .product::<f64>();
                    if w == 0.0 {
                        continue;
                    }
                    let entry = &mut by_type[xi][joint.component(a, player)];
                    entry.reward += w * game.reward(player, x, a);
                    if let Some(child) = tree.child(node, a) {
                        for (y, p) in game.kernel_row(t, player, xi, a).iter().enumerate() {
                            if *p > 0.0 {
                                entry.transitions.push((child, y, w * p));
                            }
                        }
                    }
                }
            }
            actions.push(by_type);
        }
        let mdp = DeviationMdp { player, tree, actions };
        mdp.check_rows()?;
        Ok(mdp)
    }

    fn check_rows(&self) -> Result<()> {
        for (node, by_type) in self.actions.iter().enumerate() {
            if self.tree.child(node, 0).is_none() {
                continue;
            }
            for (x, acts) in by_type.iter().enumerate() {
                for (a, act) in acts.iter().enumerate() {
                    let total: f64 = act.transitions.iter().map(|t| t.2).sum();
                    if (total - 1.0).abs() > ROW_TOLERANCE {
                        return Err(SpbeError::InvalidDistribution(format!(
                            "deviation transition at node {:?}, type {x}, action {a} sums to {total}",
                            self.tree.history(node)
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    fn backward(&self, mut choose: impl FnMut(usize, usize, &[f64]) -> f64) -> Vec<Vec<f64>> {
        let mut values: Vec<Vec<f64>> = self.actions.iter().map(|b| vec![0.0; b.len()]).collect();
        for node in (0..self.tree.node_count()).rev() {
            for x in 0..self.actions[node].len() {
                let q: Vec<f64> = self.actions[node][x]
                    .iter()
                    .map(|act| {
                        act.reward
                            + act
                                .transitions
                                .iter()
                                .map(|&(c, y, p)| p * values[c][y])
                                .sum::<f64>()
                    })
                    .collect();
                values[node][x] = choose(node, x, &q);
            }
        }
        values
    }

    /// Optimal reward-to-go `[node][own type]`.
    pub fn optimal_values(&self) -> Vec<Vec<f64>> {
        self.backward(|_, _, q| q.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
    }

    /// Reward-to-go `[node][own type]` when the player follows `profile`.
    pub fn policy_values(&self, profile: &StrategyProfile) -> Vec<Vec<f64>> {
        let player = self.player;
        self.backward(|node, x, q| {
            let row = profile.row(node, player, x).expect("checked complete");
            row.iter().zip(q).map(|(p, v)| p * v).sum()
        })
    }
}

/// Exact supremum of player `i`'s reward-to-go over all deviations, per
/// `(node, own type)`.
pub fn best_response_values(
    game: &ValidatedGame,
    profile: &StrategyProfile,
    beliefs: &BeliefSystem,
    player: usize,
) -> Result<Vec<Vec<f64>>> {
    Ok(DeviationMdp::build(game, profile, beliefs, player)?.optimal_values())
}

/// Player `i`'s reward-to-go under the profile itself, per `(node, own type)`.
pub fn equilibrium_values(
    game: &ValidatedGame,
    profile: &StrategyProfile,
    beliefs: &BeliefSystem,
    player: usize,
) -> Result<Vec<Vec<f64>>> {
    let mdp = DeviationMdp::build(game, profile, beliefs, player)?;
    Ok(mdp.policy_values(profile))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapEntry {
    pub player: usize,
    pub node: usize,
    pub history: Vec<usize>,
    pub own_type: usize,
    pub equilibrium_value: f64,
    pub best_response_value: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub tolerance: f64,
    pub entries: Vec<GapEntry>,
    pub max_gap: f64,
    /// `None` when exact enumeration is infeasible.
    pub belief_consistency_max_error: Option<f64>,
    pub belief_consistency_worst_node: Option<Vec<usize>>,
    pub covered: bool,
    pub pass: bool,
}

impl VerificationReport {
    pub fn worst(&self) -> Option<&GapEntry> {
        self.entries.iter().max_by(|a, b| a.gap.total_cmp(&b.gap))
    }

    /// Entries whose gap exceeds the tolerance.
    pub fn violations(&self) -> impl Iterator<Item = &GapEntry> {
        self.entries.iter().filter(move |e| e.gap > self.tolerance)
    }
}

impl fmt::Display for VerificationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:>6} {:>20} {:>4} {:>14} {:>14} {:>12}",
            "player", "history", "type", "equilibrium", "best resp.", "gap"
        )?;
        for e in &self.entries {
            writeln!(
                f,
                "{:>6} {:>20} {:>4} {:>14.9} {:>14.9} {:>12.3e}{}",
                e.player,
                format!("{:?}", e.history),
                e.own_type,
                e.equilibrium_value,
                e.best_response_value,
                e.gap,
                if e.gap > self.tolerance { "  <-" } else { "" }
            )?;
        }
        writeln!(f, "max gap {:.3e} (tolerance {:.1e})", self.max_gap, self.tolerance)?;
        match (self.belief_consistency_max_error, &self.belief_consistency_worst_node) {
            (Some(err), Some(node)) => writeln!(f, "belief consistency error {err:.3e} at {node:?}")?,
            (Some(err), None) => writeln!(f, "belief consistency error {err:.3e}")?,
            _ => writeln!(f, "belief consistency not checked (enumeration too large)")?,
        }
        write!(f, "{}", if self.pass { "PASS" } else { "FAIL" })
    }
}

/// Compares every player's best-response value with its equilibrium value
/// at every node and own type. Belief consistency is checked too when the
/// tree is small enough to enumerate.
pub fn check_sequential_rationality(
    game: &ValidatedGame,
    profile: &StrategyProfile,
    beliefs: &BeliefSystem,
    tol: f64,
) -> Result<VerificationReport> {
    require_complete(profile, beliefs)?;
    let per_player: Vec<Vec<GapEntry>> = (0..game.num_players())
        .into_par_iter()
        .map(|i| -> Result<Vec<GapEntry>> {
            let mdp = DeviationMdp::build(game, profile, beliefs, i)?;
            let best = mdp.optimal_values();
            let eq = mdp.policy_values(profile);
            let mut out = Vec::new();
            for node in 0..profile.tree.node_count() {
                for x in 0..game.type_count(i) {
                    out.push(GapEntry {
                        player: i,
                        node,
                        history: profile.tree.history(node),
                        own_type: x,
                        equilibrium_value: eq[node][x],
                        best_response_value: best[node][x],
                        gap: best[node][x] - eq[node][x],
                    });
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let entries: Vec<GapEntry> = per_player.into_iter().flatten().collect();
    let max_gap = entries.iter().map(|e| e.gap).fold(0.0, f64::max);
    let covered = entries.len() == profile.tree.node_count() * (0..game.num_players()).map(|i| game.type_count(i)).sum::<usize>();
    let consistency = match check_belief_consistency(game, profile, beliefs) {
        Ok(c) => Some(c),
        Err(SpbeError::EnumerationTooLarge { .. }) => None,
        Err(e) => return Err(e),
    };
    let consistent = consistency
        .as_ref()
        .is_none_or(|c| c.max_error <= BELIEF_CONSISTENCY_TOLERANCE);
    Ok(VerificationReport {
        tolerance: tol,
        max_gap,
        covered,
        pass: covered && max_gap <= tol && consistent,
        belief_consistency_max_error: consistency.as_ref().map(|c| c.max_error),
        belief_consistency_worst_node: consistency.and_then(|c| c.worst_node),
        entries,
    })
}

/// Exhaustive search over deterministic deviations of `player` from
/// `(node, own_type)`, with opponents' current types drawn from the stored
/// belief and their later types and actions following the game and profile.
/// Information sets are (public suffix, own type history).
pub fn exhaustive_deviation_value(
    game: &ValidatedGame,
    profile: &StrategyProfile,
    beliefs: &BeliefSystem,
    player: usize,
    node: usize,
    own_type: usize,
    max_policies: u128,
) -> Result<f64> {
    require_complete(profile, beliefs)?;
    let tree = &profile.tree;
    let nx = game.type_count(player);
    let na = game.action_count(player);
    let joint = game.joint_actions();
    let remaining = tree.horizon() - tree.depth(node);

    // Information sets in the subtree, indexed by (suffix, own types).
    let mut infosets: Vec<(Vec<usize>, Vec<usize>)> = Vec::new();
    for k in 0..remaining {
        let suffixes = joint.len().pow(k as u32);
        let histories = nx.pow(k as u32);
        for s in 0..suffixes {
            let suffix: Vec<usize> = digits(s, joint.len(), k);
            for h in 0..histories {
                let mut own = vec![own_type];
                own.extend(digits(h, nx, k));
                infosets.push((suffix.clone(), own));
            }
        }
    }
    let count = (na as u128).checked_pow(infosets.len() as u32).unwrap_or(u128::MAX);
    if count > max_policies {
        return Err(SpbeError::EnumerationTooLarge {
            estimated: count,
            cap: max_policies,
        });
    }
    let index: std::collections::HashMap<(Vec<usize>, Vec<usize>), usize> =
        infosets.iter().cloned().enumerate().map(|(k, v)| (v, k)).collect();

    let mu = beliefs.get(node).expect("checked complete");
    let types = game.joint_types();
    let mut best = f64::NEG_INFINITY;
    let mut policy = vec![0usize; infosets.len()];
    for code in 0..count {
        let mut c = code;
        for slot in policy.iter_mut() {
            *slot = (c % na as u128) as usize;
            c /= na as u128;
        }
        let mut total = 0.0;
        for x in 0..types.len() {
            if types.component(x, player) != own_type {
                continue;
            }
            let w: f64 = (0..game.num_players())
                .filter(|&j| j != player)
                .map(|j| mu.marginal(j)[types.component(x, j)])
                .product();
            if w == 0.0 {
                continue;
            }
            let mut walk = PolicyWalk {
                game,
                profile,
                player,
                policy: &policy,
                index: &index,
            };
            total += w * walk.value(node, x, &mut Vec::new(), &mut vec![own_type]);
        }
        best = best.max(total);
    }
    Ok(best)
}

fn digits(mut v: usize, radix: usize, len: usize) -> Vec<usize> {
    let mut out = vec![0; len];
    for slot in out.iter_mut().rev() {
        *slot = v % radix;
        v /= radix;
    }
    out
}

struct PolicyWalk<'a> {
    game: &'a ValidatedGame,
    profile: &'a StrategyProfile,
    player: usize,
    policy: &'a [usize],
    index: &'a std::collections::HashMap<(Vec<usize>, Vec<usize>), usize>,
}

impl PolicyWalk<'_> {
    fn value(&mut self, node: usize, x: usize, suffix: &mut Vec<usize>, own: &mut Vec<usize>) -> f64 {
        let game = self.game;
        let tree = &self.profile.tree;
        let t = tree.stage(node);
        let types = game.joint_types();
        let joint = game.joint_actions();
        let gamma = self.profile.get(node).expect("checked complete");
        let own_action = self.policy[self.index[&(suffix.clone(), own.clone())]];
        let mut total = 0.0;
        for a in 0..joint.len() {
            if joint.component(a, self.player) != own_action {
                continue;
            }
            let p: f64 = (0..game.num_players())
                .filter(|&j| j != self.player)
                .map(|j| gamma.prescription(j).prob(joint.component(a, j), types.component(x, j)))
                .product();
            if p == 0.0 {
                continue;
            }
            let mut v = game.reward(self.player, x, a);
            if let Some(child) = tree.child(node, a) {
                suffix.push(a);
                for (y, py) in game.joint_transition(t, x, a).into_iter().enumerate() {
                    if py == 0.0 {
                        continue;
                    }
                    own.push(types.component(y, self.player));
                    v += py * self.value(child, y, suffix, own);
                    own.pop();
                }
                suffix.pop();
            }
            total += p * v;
        }
        total
    }
}
