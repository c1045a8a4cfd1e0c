//! Forward construction of the strategy profile and belief system over the
//! tree of public action histories.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::belief::{update_belief, BeliefVector, GammaProfile};
use crate::error::{Result, SpbeError};
use crate::game::{Distribution, GeneralStrategy, JointIndex, ValidatedGame};

use super::generator::EquilibriumGenerator;
use super::stage::StageSolution;

/// Indexing of public histories `a_{1:d}` for `d` in `0..T`. Node ids grow
/// with depth; within a depth they follow the history read as a base-`|A|`
/// number, oldest action most significant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PublicTree {
    horizon: usize,
    joint_actions: usize,
    offsets: Vec<usize>,
}

impl PublicTree {
    pub fn new(game: &ValidatedGame) -> Self {
        PublicTree::with_shape(game.horizon(), game.joint_actions().len())
    }

    pub fn with_shape(horizon: usize, joint_actions: usize) -> Self {
        let mut offsets = Vec::with_capacity(horizon + 1);
        let mut acc = 0usize;
        let mut width = 1usize;
        for _ in 0..=horizon {
            offsets.push(acc);
            acc += width;
            width *= joint_actions;
        }
        PublicTree {
            horizon,
            joint_actions,
            offsets,
        }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Nodes at depths `0..T` (the stages that act).
    pub fn node_count(&self) -> usize {
        self.offsets[self.horizon]
    }

    pub fn nodes_at_depth(&self, depth: usize) -> std::ops::Range<usize> {
        self.offsets[depth]..self.offsets[depth + 1]
    }

    pub fn depth(&self, node: usize) -> usize {
        self.offsets.partition_point(|&o| o <= node) - 1
    }

    /// The stage played at `node` (depth plus one).
    pub fn stage(&self, node: usize) -> usize {
        self.depth(node) + 1
    }

    pub fn node_id(&self, history: &[usize]) -> Option<usize> {
        if history.len() >= self.horizon || history.iter().any(|&a| a >= self.joint_actions) {
            return None;
        }
        let within = history.iter().fold(0usize, |acc, &a| acc * self.joint_actions + a);
        Some(self.offsets[history.len()] + within)
    }

    pub fn history(&self, node: usize) -> Vec<usize> {
        let d = self.depth(node);
        let mut within = node - self.offsets[d];
        let mut h = vec![0; d];
        for slot in h.iter_mut().rev() {
            *slot = within % self.joint_actions;
            within /= self.joint_actions;
        }
        h
    }

    /// Child after joint action `a`, or `None` at the last stage.
    pub fn child(&self, node: usize, a: usize) -> Option<usize> {
        let d = self.depth(node);
        (d + 1 < self.horizon).then(|| self.offsets[d + 1] + (node - self.offsets[d]) * self.joint_actions + a)
    }

    pub fn parent(&self, node: usize) -> Option<(usize, usize)> {
        let d = self.depth(node);
        (d > 0).then(|| {
            let within = node - self.offsets[d];
            (self.offsets[d - 1] + within / self.joint_actions, within % self.joint_actions)
        })
    }
}

/// A type-Markov strategy profile stored as one prescription profile per
/// public history.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyProfile {
    pub tree: PublicTree,
    pub prescriptions: Vec<Option<GammaProfile>>,
}

impl StrategyProfile {
    pub fn get(&self, node: usize) -> Option<&GammaProfile> {
        self.prescriptions.get(node).and_then(Option::as_ref)
    }

    pub fn is_complete(&self) -> bool {
        self.prescriptions.iter().all(Option::is_some)
    }

    /// First node without a prescription, as a public history.
    pub fn first_missing(&self) -> Option<Vec<usize>> {
        self.prescriptions
            .iter()
            .position(Option::is_none)
            .map(|n| self.tree.history(n))
    }

    pub fn row(&self, node: usize, player: usize, own_type: usize) -> Option<&Distribution> {
        self.get(node).map(|g| g.prescription(player).row(own_type))
    }
}

impl GeneralStrategy for StrategyProfile {
    /// Uses only the latest own type. Missing nodes act uniformly.
    fn action_distribution(&self, player: usize, public: &[usize], own_types: &[usize]) -> Vec<f64> {
        let x = *own_types.last().expect("own type history is non-empty");
        match self.tree.node_id(public).and_then(|n| self.get(n)) {
            Some(g) => g.prescription(player).row(x).to_vec(),
            None => {
                let na = self.prescriptions.iter().flatten().next().map_or(1, |g| {
                    g.prescription(player).action_count()
                });
                vec![1.0 / na as f64; na]
            }
        }
    }
}

/// One belief vector per public history.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefSystem {
    pub tree: PublicTree,
    pub beliefs: Vec<Option<BeliefVector>>,
}

impl BeliefSystem {
    pub fn get(&self, node: usize) -> Option<&BeliefVector> {
        self.beliefs.get(node).and_then(Option::as_ref)
    }

    /// Beliefs generated from the prior by the update rule along every
    /// history under `profile`.
    pub fn propagate(game: &ValidatedGame, profile: &StrategyProfile) -> Result<BeliefSystem> {
        let tree = profile.tree.clone();
        let mut beliefs: Vec<Option<BeliefVector>> = vec![None; tree.node_count()];
        beliefs[0] = Some(BeliefVector::prior(game));
        for node in 0..tree.node_count() {
            if tree.child(node, 0).is_none() {
                break;
            }
            let Some(pi) = beliefs[node].clone() else { continue };
            let gamma = profile
                .get(node)
                .ok_or_else(|| SpbeError::MissingNode(tree.history(node)))?;
            for a in 0..game.joint_actions().len() {
                let child = tree.child(node, a).expect("non-terminal node");
                beliefs[child] = Some(update_belief(game, tree.stage(node), &pi, gamma, a)?);
            }
        }
        Ok(BeliefSystem { tree, beliefs })
    }
}

#[derive(Debug, Clone)]
pub enum NodeStatus {
    Solved(Arc<StageSolution>),
    Failed(SpbeError),
    /// An ancestor failed, so no belief exists here.
    Unreached,
}

/// Output of forward construction: strategy and beliefs at every node that
/// could be solved, with per-node status.
#[derive(Debug, Clone)]
pub struct Equilibrium {
    pub game: Arc<ValidatedGame>,
    pub profile: StrategyProfile,
    pub beliefs: BeliefSystem,
    pub status: Vec<NodeStatus>,
}

impl Equilibrium {
    pub fn tree(&self) -> &PublicTree {
        &self.profile.tree
    }

    pub fn game(&self) -> &Arc<ValidatedGame> {
        &self.game
    }

    pub fn is_complete(&self) -> bool {
        self.status.iter().all(|s| matches!(s, NodeStatus::Solved(_)))
    }

    pub fn solution(&self, node: usize) -> Option<&StageSolution> {
        match &self.status[node] {
            NodeStatus::Solved(s) => Some(s),
            _ => None,
        }
    }

    /// First failure in node order.
    pub fn first_error(&self) -> Option<(Vec<usize>, &SpbeError)> {
        self.status.iter().enumerate().find_map(|(n, s)| match s {
            NodeStatus::Failed(e) => Some((self.tree().history(n), e)),
            _ => None,
        })
    }
}

/// Builds `(beta*, mu*)` from the root down: `mu*[empty]` is the prior,
/// `beta*_t[a_{1:t-1}] = theta_t[mu*[a_{1:t-1}]]`, and each child's belief is
/// the update of its parent's under the parent's prescription. All joint
/// actions are expanded, including zero-probability ones.
pub fn forward_construct(generator: &EquilibriumGenerator) -> Equilibrium {
    let game = generator.game().clone();
    let tree = PublicTree::new(&game);
    let count = tree.node_count();
    let mut prescriptions = vec![None; count];
    let mut beliefs: Vec<Option<BeliefVector>> = vec![None; count];
    let mut status = vec![NodeStatus::Unreached; count];
    beliefs[0] = Some(BeliefVector::prior(&game));

    for node in 0..count {
        let Some(pi) = beliefs[node].clone() else { continue };
        let t = tree.stage(node);
        let sol = match generator.stage_solution(t, &pi) {
            Ok(sol) => sol,
            Err(e) => {
                status[node] = NodeStatus::Failed(e);
                continue;
            }
        };
        if tree.child(node, 0).is_some() {
            for a in 0..game.joint_actions().len() {
                let child = tree.child(node, a).expect("non-terminal node");
                match update_belief(&game, t, &pi, &sol.gamma, a) {
                    Ok(b) => beliefs[child] = Some(b),
                    Err(e) => status[child] = NodeStatus::Failed(e),
                }
            }
        }
        prescriptions[node] = Some(sol.gamma.clone());
        status[node] = NodeStatus::Solved(sol);
    }
    Equilibrium {
        game,
        profile: StrategyProfile {
            tree: tree.clone(),
            prescriptions,
        },
        beliefs: BeliefSystem { tree, beliefs },
        status,
    }
}

/// Convenience: full joint action index sequence for a history given per-player actions.
pub fn encode_history(actions: &JointIndex, per_stage: &[Vec<usize>]) -> Vec<usize> {
    per_stage.iter().map(|a| actions.encode(a)).collect()
}
