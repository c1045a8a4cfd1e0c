//! Game and equilibrium documents (JSON).

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::belief::{BeliefVector, GammaProfile, PartialFunction};
use crate::error::{Result, SpbeError};
use crate::game::{validate_game, Distribution, GameSpec, ValidatedGame};
use crate::solver::{BeliefSystem, Equilibrium, NodeStatus, PublicTree, StageSolution, StrategyProfile};

pub const EQUILIBRIUM_FORMAT: &str = "spbe-equilibrium/1";
pub const REPORT_FORMAT: &str = "spbe-verification/1";
pub const SIMULATION_FORMAT: &str = "spbe-simulation/1";
pub const EXAMPLE_FORMAT: &str = "spbe-example/1";

fn parse_error(err: serde_json::Error) -> SpbeError {
    SpbeError::Parse {
        line: err.line(),
        message: err.to_string(),
    }
}

pub fn parse_game_spec(text: &str) -> Result<GameSpec> {
    serde_json::from_str(text).map_err(parse_error)
}

pub fn parse_game(text: &str) -> Result<ValidatedGame> {
    validate_game(parse_game_spec(text)?)
}

pub fn read_game(path: &Path) -> Result<ValidatedGame> {
    parse_game(&std::fs::read_to_string(path)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionRecord {
    pub strategy: Vec<Vec<Vec<f64>>>,
    pub values: Vec<Vec<f64>>,
    pub residual: f64,
    pub iterations: usize,
    pub seed_id: Option<usize>,
}

impl From<&StageSolution> for SolutionRecord {
    fn from(s: &StageSolution) -> Self {
        SolutionRecord {
            strategy: s.gamma.to_vecs(),
            values: s.values.clone(),
            residual: s.residual,
            iterations: s.iterations,
            seed_id: s.seed_id,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeState {
    Solved,
    Failed,
    Unreached,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    /// Per-stage action profiles, oldest first.
    pub history: Vec<Vec<usize>>,
    pub stage: usize,
    pub status: NodeState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub belief: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solution: Option<SolutionRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Every distinct stage fixed point found at this belief, when requested.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alternatives: Option<Vec<SolutionRecord>>,
}

/// A constructed equilibrium with the game and the configuration that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumDocument {
    pub format: String,
    pub config: serde_json::Value,
    pub game: GameSpec,
    pub nodes: Vec<NodeRecord>,
}

fn to_profile(game: &ValidatedGame, rows: &[Vec<Vec<f64>>]) -> Result<GammaProfile> {
    let profile = GammaProfile::new(
        rows.iter()
            .map(|p| {
                Ok(PartialFunction::new(
                    p.iter().map(|r| Distribution::new(r.clone())).collect::<Result<_>>()?,
                ))
            })
            .collect::<Result<_>>()?,
    );
    profile.check_dims(game)?;
    Ok(profile)
}

fn to_belief(game: &ValidatedGame, rows: &[Vec<f64>]) -> Result<BeliefVector> {
    let b = BeliefVector::new(rows.iter().map(|r| Distribution::new(r.clone())).collect::<Result<_>>()?);
    b.check_dims(game)?;
    Ok(b)
}

impl EquilibriumDocument {
    pub fn from_equilibrium(
        eq: &Equilibrium,
        config: serde_json::Value,
        alternatives: Option<Vec<Option<Vec<StageSolution>>>>,
    ) -> Self {
        let game = eq.game();
        let tree = eq.tree();
        let nodes = (0..tree.node_count())
            .map(|n| {
                let history = tree
                    .history(n)
                    .into_iter()
                    .map(|a| game.joint_actions().decode(a))
                    .collect();
                let (status, solution, error) = match &eq.status[n] {
                    NodeStatus::Solved(s) => (NodeState::Solved, Some(SolutionRecord::from(s.as_ref())), None),
                    NodeStatus::Failed(e) => (NodeState::Failed, None, Some(e.to_string())),
                    NodeStatus::Unreached => (NodeState::Unreached, None, None),
                };
                NodeRecord {
                    history,
                    stage: tree.stage(n),
                    status,
                    belief: eq.beliefs.get(n).map(BeliefVector::to_vecs),
                    solution,
                    error,
                    alternatives: alternatives
                        .as_ref()
                        .and_then(|alts| alts[n].as_ref())
                        .map(|v| v.iter().map(SolutionRecord::from).collect()),
                }
            })
            .collect();
        EquilibriumDocument {
            format: EQUILIBRIUM_FORMAT.to_string(),
            config,
            game: game.spec().clone(),
            nodes,
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let doc: EquilibriumDocument = serde_json::from_str(text).map_err(parse_error)?;
        if doc.format != EQUILIBRIUM_FORMAT {
            return Err(SpbeError::Parse {
                line: 1,
                message: format!("unsupported format `{}` (expected `{EQUILIBRIUM_FORMAT}`)", doc.format),
            });
        }
        Ok(doc)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("documents serialize")
    }

    pub fn validated_game(&self) -> Result<Arc<ValidatedGame>> {
        Ok(Arc::new(validate_game(self.game.clone())?))
    }

    /// Strategy profile, belief system and per-node values. Node order must
    /// match the tree of the embedded game.
    pub fn to_parts(&self, game: &ValidatedGame) -> Result<(StrategyProfile, BeliefSystem, Vec<Option<Vec<Vec<f64>>>>)> {
        let tree = PublicTree::new(game);
        if self.nodes.len() != tree.node_count() {
            return Err(SpbeError::DimensionMismatch(format!(
                "document has {} nodes, game tree has {}",
                self.nodes.len(),
                tree.node_count()
            )));
        }
        let mut prescriptions = Vec::with_capacity(self.nodes.len());
        let mut beliefs = Vec::with_capacity(self.nodes.len());
        let mut values = Vec::with_capacity(self.nodes.len());
        for (n, node) in self.nodes.iter().enumerate() {
            let expected: Vec<usize> = tree.history(n);
            let got: Vec<usize> = node
                .history
                .iter()
                .map(|a| {
                    if a.len() != game.num_players() || a.iter().enumerate().any(|(i, &x)| x >= game.action_count(i)) {
                        Err(SpbeError::DimensionMismatch(format!("history entry {a:?}")))
                    } else {
                        Ok(game.joint_actions().encode(a))
                    }
                })
                .collect::<Result<_>>()?;
            if got != expected {
                return Err(SpbeError::DimensionMismatch(format!(
                    "node {n} has history {:?}, expected {:?}",
                    node.history, expected
                )));
            }
            prescriptions.push(node.solution.as_ref().map(|s| to_profile(game, &s.strategy)).transpose()?);
            beliefs.push(node.belief.as_ref().map(|b| to_belief(game, b)).transpose()?);
            values.push(node.solution.as_ref().map(|s| s.values.clone()));
        }
        Ok((
            StrategyProfile {
                tree: tree.clone(),
                prescriptions,
            },
            BeliefSystem { tree, beliefs },
            values,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pubgoods::{build_spec, construct_with_stage1, PubGoodsParams};
    use crate::solver::FixedPointConfig;

    #[test]
    fn game_spec_round_trips_and_omits_kernels() {
        let spec = build_spec(&PubGoodsParams::reference());
        let text = serde_json::to_string(&spec).unwrap();
        assert!(!text.contains("kernels"));
        assert!(text.contains("\"type_spaces\""));
        assert_eq!(parse_game_spec(&text).unwrap(), spec);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = parse_game("{\n  \"players\": 2,\n  \"horizon\": oops\n}").unwrap_err();
        assert!(matches!(err, SpbeError::Parse { line: 3, .. }), "{err:?}");
        let err = parse_game("{\"players\": 1, \"bogus\": 3}").unwrap_err();
        assert!(matches!(err, SpbeError::Parse { .. }));
    }

    #[test]
    fn invalid_game_reports_validation_issues() {
        let text = r#"{"players":1,"horizon":1,"type_spaces":[1],"action_spaces":[1],
                       "priors":[[0.5]],"rewards":[[[0.0]]]}"#;
        assert!(matches!(parse_game(text), Err(SpbeError::Invalid(_))));
    }

    #[test]
    fn equilibrium_document_round_trips_bit_exactly() {
        let eq = construct_with_stage1(&PubGoodsParams::reference(), &FixedPointConfig::default(), [0.0, 1.0, 0.0, 0.0])
            .unwrap();
        let doc = EquilibriumDocument::from_equilibrium(&eq, serde_json::json!({"k": 1}), None);
        let back = EquilibriumDocument::parse(&doc.to_json()).unwrap();
        assert_eq!(back, doc);
        let game = back.validated_game().unwrap();
        let (profile, beliefs, values) = back.to_parts(&game).unwrap();
        assert_eq!(profile, eq.profile);
        assert_eq!(beliefs, eq.beliefs);
        assert_eq!(values[0].as_ref(), Some(&eq.solution(0).unwrap().values));
    }

    #[test]
    fn wrong_format_tag_is_rejected() {
        let eq = construct_with_stage1(&PubGoodsParams::reference(), &FixedPointConfig::default(), [0.0, 1.0, 0.0, 0.0])
            .unwrap();
        let mut doc = EquilibriumDocument::from_equilibrium(&eq, serde_json::Value::Null, None);
        doc.format = "other/9".into();
        assert!(matches!(EquilibriumDocument::parse(&doc.to_json()), Err(SpbeError::Parse { .. })));
    }
}
