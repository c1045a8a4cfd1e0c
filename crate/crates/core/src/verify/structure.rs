//! Exact-enumeration checks of the structural reductions: projection of a
//! general strategy onto type-Markov form and Bayes consistency of beliefs.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SpbeError};
use crate::game::{enumerate_histories, Distribution, GeneralStrategy, ValidatedGame, DEFAULT_ENUMERATION_CAP};
use crate::solver::{BeliefSystem, PublicTree, StrategyProfile};

/// One player's strategy as a function of public history and current type.
/// `None` rows are information sets of probability zero.
#[derive(Debug, Clone, PartialEq)]
pub struct TypeMarkovStrategy {
    pub player: usize,
    pub tree: PublicTree,
    pub action_count: usize,
    /// `rows[node][own_type]`.
    pub rows: Vec<Vec<Option<Distribution>>>,
}

impl TypeMarkovStrategy {
    pub fn row(&self, node: usize, own_type: usize) -> Distribution {
        self.rows[node][own_type]
            .clone()
            .unwrap_or_else(|| Distribution::uniform(self.action_count))
    }
}

/// `base` with one player's strategy replaced.
pub struct CombinedStrategy<'a> {
    pub base: &'a dyn GeneralStrategy,
    pub replacement: &'a TypeMarkovStrategy,
}

impl GeneralStrategy for CombinedStrategy<'_> {
    fn action_distribution(&self, player: usize, public: &[usize], own_types: &[usize]) -> Vec<f64> {
        if player != self.replacement.player {
            return self.base.action_distribution(player, public, own_types);
        }
        let node = self
            .replacement
            .tree
            .node_id(public)
            .expect("public history inside the tree");
        self.replacement
            .row(node, *own_types.last().expect("non-empty own history"))
            .into_vec()
    }
}

/// `s^i_t(a^i | a_{1:t-1}, x^i_t) = P^g(a^i_t | a_{1:t-1}, x^i_t)`, uniform
/// where the conditioning event has probability zero.
pub fn project_to_s(game: &ValidatedGame, g: &dyn GeneralStrategy, player: usize) -> Result<TypeMarkovStrategy> {
    let tree = PublicTree::new(game);
    let nx = game.type_count(player);
    let na = game.action_count(player);
    let joint = game.joint_actions();
    let mut mass = vec![vec![vec![0.0; na]; nx]; tree.node_count()];
    for t in 1..=game.horizon() {
        for path in enumerate_histories(game, g, t, DEFAULT_ENUMERATION_CAP)? {
            let node = tree.node_id(&path.actions[..t - 1]).expect("history inside the tree");
            let x = game.joint_types().component(path.types[t - 1], player);
            mass[node][x][joint.component(path.actions[t - 1], player)] += path.prob;
        }
    }
    let rows = mass
        .into_iter()
        .map(|by_type| {
            by_type
                .into_iter()
                .map(|m| {
                    let total: f64 = m.iter().sum();
                    (total > 0.0)
                        .then(|| Distribution::normalized(m))
                        .transpose()
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TypeMarkovStrategy {
        player,
        tree,
        action_count: na,
        rows,
    })
}

/// Joint posterior `P(x_t | a_{1:t-1})` for every positive-probability public
/// history, by enumeration. Keyed by node; values indexed by joint type.
pub fn brute_force_posteriors(
    game: &ValidatedGame,
    strategy: &dyn GeneralStrategy,
) -> Result<HashMap<usize, Vec<f64>>> {
    let tree = PublicTree::new(game);
    let nt = game.joint_types().len();
    let mut out: HashMap<usize, Vec<f64>> = HashMap::new();
    out.insert(0, game.joint_prior());
    for depth in 1..game.horizon() {
        let mut acc: HashMap<usize, Vec<f64>> = HashMap::new();
        for path in enumerate_histories(game, strategy, depth, DEFAULT_ENUMERATION_CAP)? {
            let node = tree.node_id(&path.actions).expect("history inside the tree");
            let next = game.joint_transition(depth, path.types[depth - 1], path.actions[depth - 1]);
            let entry = acc.entry(node).or_insert_with(|| vec![0.0; nt]);
            for (y, p) in next.iter().enumerate() {
                entry[y] += path.prob * p;
            }
        }
        for (node, mut v) in acc {
            let total: f64 = v.iter().sum();
            if total > 0.0 {
                v.iter_mut().for_each(|p| *p /= total);
                out.insert(node, v);
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub max_error: f64,
    pub worst_node: Option<Vec<usize>>,
    /// Positive-probability nodes compared.
    pub checked_nodes: usize,
}

/// Largest gap between the enumerated joint posterior and the product of
/// stored marginals over positive-probability nodes.
pub fn check_belief_consistency(
    game: &ValidatedGame,
    profile: &StrategyProfile,
    beliefs: &BeliefSystem,
) -> Result<ConsistencyReport> {
    let reach = crate::game::enumeration_size(game, game.horizon().saturating_sub(1));
    if reach > DEFAULT_ENUMERATION_CAP {
        return Err(SpbeError::EnumerationTooLarge {
            estimated: reach,
            cap: DEFAULT_ENUMERATION_CAP,
        });
    }
    let posteriors = brute_force_posteriors(game, profile)?;
    let mut nodes: Vec<_> = posteriors.into_iter().collect();
    nodes.sort_by_key(|(n, _)| *n);
    let mut max_error = 0.0f64;
    let mut worst_node = None;
    for (node, joint) in &nodes {
        let stored = beliefs
            .get(*node)
            .ok_or_else(|| SpbeError::MissingNode(beliefs.tree.history(*node)))?;
        stored.check_dims(game)?;
        for (x, p) in joint.iter().enumerate() {
            let err = (p - stored.joint_prob(game, x)).abs();
            if err > max_error {
                max_error = err;
                worst_node = Some(beliefs.tree.history(*node));
            }
        }
    }
    Ok(ConsistencyReport {
        max_error,
        worst_node,
        checked_nodes: nodes.len(),
    })
}

/// Largest gap between the enumerated joint posterior and the product of
/// its own per-player marginals, over positive-probability public histories.
pub fn conditional_independence_error(game: &ValidatedGame, strategy: &dyn GeneralStrategy) -> Result<f64> {
    let types = game.joint_types();
    let mut worst = 0.0f64;
    for joint in brute_force_posteriors(game, strategy)?.values() {
        let marginals: Vec<Vec<f64>> = (0..game.num_players())
            .map(|i| {
                let mut m = vec![0.0; game.type_count(i)];
                for (x, p) in joint.iter().enumerate() {
                    m[types.component(x, i)] += p;
                }
                m
            })
            .collect();
        for (x, p) in joint.iter().enumerate() {
            let product: f64 = (0..game.num_players()).map(|i| marginals[i][types.component(x, i)]).product();
            worst = worst.max((p - product).abs());
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::belief::{BeliefVector, GammaProfile};
    use crate::game::enumerate_outcome_distribution;
    use crate::testing::{random_game, random_gamma_profile, RandomGeneralStrategy};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_profile(rng: &mut ChaCha8Rng, game: &ValidatedGame) -> StrategyProfile {
        let tree = PublicTree::new(game);
        StrategyProfile {
            prescriptions: (0..tree.node_count()).map(|_| Some(random_gamma_profile(rng, game))).collect(),
            tree,
        }
    }

    #[test]
    fn projection_of_a_type_markov_strategy_is_itself() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let game = random_game(&mut rng, 2, 2, 2, 3, true);
        let profile = random_profile(&mut rng, &game);
        for i in 0..2 {
            let s = project_to_s(&game, &profile, i).unwrap();
            for node in 0..s.tree.node_count() {
                for x in 0..2 {
                    if let Some(row) = &s.rows[node][x] {
                        assert!(row.sup_distance(profile.row(node, i, x).unwrap()) < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn single_stage_projection_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let game = random_game(&mut rng, 2, 2, 3, 1, false);
        let g = RandomGeneralStrategy::new(&game, 11);
        let s = project_to_s(&game, &g, 1).unwrap();
        for x in 0..2 {
            let direct = Distribution::normalized(g.action_distribution(1, &[], &[x])).unwrap();
            assert!(s.row(0, x).sup_distance(&direct) < 1e-14);
        }
    }

    #[test]
    fn projection_preserves_outcome_distribution() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for k in 0..5 {
            let game = random_game(&mut rng, 2, 2, 2, 2, true);
            let g = RandomGeneralStrategy::new(&game, k);
            for i in 0..2 {
                let s = project_to_s(&game, &g, i).unwrap();
                let combined = CombinedStrategy { base: &g, replacement: &s };
                for t in 1..=2 {
                    let a = enumerate_outcome_distribution(&game, &g, t).unwrap();
                    let b = enumerate_outcome_distribution(&game, &combined, t).unwrap();
                    assert!(a.total_variation(&b) < 1e-12);
                }
            }
        }
    }

    #[test]
    fn propagated_beliefs_are_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let game = random_game(&mut rng, 2, 2, 2, 3, true);
        let profile = random_profile(&mut rng, &game);
        let beliefs = BeliefSystem::propagate(&game, &profile).unwrap();
        let report = check_belief_consistency(&game, &profile, &beliefs).unwrap();
        assert!(report.max_error < 1e-10);
        assert_eq!(report.checked_nodes, 1 + 4 + 16);
    }

    #[test]
    fn uniform_strategies_keep_markov_propagated_priors() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let game = random_game(&mut rng, 2, 2, 2, 2, false);
        let tree = PublicTree::new(&game);
        let profile = StrategyProfile {
            prescriptions: vec![Some(GammaProfile::uniform(&game)); tree.node_count()],
            tree,
        };
        let beliefs = BeliefSystem::propagate(&game, &profile).unwrap();
        for node in 0..5 {
            assert_eq!(beliefs.get(node).unwrap(), &BeliefVector::prior(&game));
        }
    }

    #[test]
    fn corrupted_belief_is_localized() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let game = random_game(&mut rng, 2, 2, 2, 2, true);
        let profile = random_profile(&mut rng, &game);
        let mut beliefs = BeliefSystem::propagate(&game, &profile).unwrap();
        beliefs.beliefs[3] = Some(BeliefVector::new(vec![
            Distribution::new(vec![0.5, 0.5]).unwrap(),
            Distribution::new(vec![0.5, 0.5]).unwrap(),
        ]));
        let report = check_belief_consistency(&game, &profile, &beliefs).unwrap();
        assert!(report.max_error > 1e-3);
        assert_eq!(report.worst_node, Some(vec![2]));
    }

    #[test]
    fn general_strategies_keep_types_conditionally_independent() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for k in 0..10 {
            let game = random_game(&mut rng, 2, 2, 2, 3, true);
            let g = RandomGeneralStrategy::new(&game, k);
            assert!(conditional_independence_error(&game, &g).unwrap() < 1e-12);
        }
    }
}
