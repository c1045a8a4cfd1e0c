use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use parking_lot::RwLock;

use crate::belief::{quantize_key, BeliefKey, BeliefVector, GammaProfile};
use crate::error::{Result, SpbeError};
use crate::game::ValidatedGame;

use super::stage::{
    enumerate_stage_fixed_points, evaluate_profile, solve_stage_fixed_point, Continuation,
    FixedPointConfig, StageSolution,
};

/// Optional per-stage override of the fixed-point search. A returned profile
/// is used only if it solves the stage fixed-point equation.
pub trait StageRule: Send + Sync {
    fn prescribe(&self, game: &ValidatedGame, t: usize, belief: &BeliefVector) -> Option<GammaProfile>;
}

type MemoEntry = Result<Arc<StageSolution>, SpbeError>;

/// Backward recursion over (stage, belief) with a memo keyed on the quantized
/// belief. The memo is only ever extended, so concurrent readers are safe.
pub struct EquilibriumGenerator {
    game: Arc<ValidatedGame>,
    config: FixedPointConfig,
    rule: Option<Arc<dyn StageRule>>,
    memo: RwLock<HashMap<(usize, BeliefKey), MemoEntry>>,
    solves: AtomicUsize,
}

struct NextStage<'a> {
    generator: &'a EquilibriumGenerator,
    stage: usize,
}

impl Continuation for NextStage<'_> {
    fn values(&self, belief: &BeliefVector) -> Result<Vec<Vec<f64>>> {
        self.generator.solve_value(self.stage, belief)
    }
}

impl EquilibriumGenerator {
    pub fn new(game: Arc<ValidatedGame>, config: FixedPointConfig) -> Result<Self> {
        config.validate()?;
        Ok(EquilibriumGenerator {
            game,
            config,
            rule: None,
            memo: RwLock::new(HashMap::new()),
            solves: AtomicUsize::new(0),
        })
    }

    pub fn with_rule(mut self, rule: Arc<dyn StageRule>) -> Self {
        self.rule = Some(rule);
        self
    }

    pub fn game(&self) -> &Arc<ValidatedGame> {
        &self.game
    }

    pub fn config(&self) -> &FixedPointConfig {
        &self.config
    }

    /// Number of distinct (stage, belief key) pairs solved so far.
    pub fn solve_count(&self) -> usize {
        self.solves.load(Ordering::Relaxed)
    }

    pub fn memo_len(&self) -> usize {
        self.memo.read().len()
    }

    pub fn key(&self, t: usize, belief: &BeliefVector) -> (usize, BeliefKey) {
        (t, quantize_key(belief, self.config.quantize_resolution))
    }

    fn check_stage(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.game.horizon() {
            return Err(SpbeError::InvalidArgument(format!(
                "stage {t} outside 1..={}",
                self.game.horizon()
            )));
        }
        Ok(())
    }

    /// `V_t(belief, .)` per player and own type; zero at `t = T + 1`.
    pub fn solve_value(&self, t: usize, belief: &BeliefVector) -> Result<Vec<Vec<f64>>> {
        belief.check_dims(&self.game)?;
        if t == self.game.horizon() + 1 {
            return Ok((0..self.game.num_players())
                .map(|i| vec![0.0; self.game.type_count(i)])
                .collect());
        }
        Ok(self.stage_solution(t, belief)?.values.clone())
    }

    /// The stage solution `theta_t[belief]`, solved on first request.
    pub fn stage_solution(&self, t: usize, belief: &BeliefVector) -> Result<Arc<StageSolution>> {
        self.check_stage(t)?;
        belief.check_dims(&self.game)?;
        let key = self.key(t, belief);
        if let Some(entry) = self.memo.read().get(&key) {
            return entry.clone();
        }
        let result = self.solve_uncached(t, belief).map(Arc::new);
        self.solves.fetch_add(1, Ordering::Relaxed);
        self.memo.write().entry(key).or_insert(result).clone()
    }

    /// Memo lookup without solving.
    pub fn cached(&self, t: usize, belief: &BeliefVector) -> Option<MemoEntry> {
        self.memo.read().get(&self.key(t, belief)).cloned()
    }

    fn continuation(&self, t: usize) -> NextStage<'_> {
        NextStage {
            generator: self,
            stage: t + 1,
        }
    }

    fn certify(&self, t: usize, belief: &BeliefVector, gamma: GammaProfile) -> Result<StageSolution> {
        let sol = evaluate_profile(&self.game, t, belief, gamma, &self.continuation(t))?;
        if sol.residual > self.config.argmax_tolerance {
            return Err(SpbeError::RejectedPrescription {
                stage: t,
                residual: sol.residual,
            });
        }
        Ok(sol)
    }

    fn solve_uncached(&self, t: usize, belief: &BeliefVector) -> Result<StageSolution> {
        if let Some(rule) = &self.rule {
            if let Some(gamma) = rule.prescribe(&self.game, t, belief) {
                return self.certify(t, belief, gamma);
            }
        }
        solve_stage_fixed_point(&self.game, t, belief, &self.continuation(t), &self.config)
    }

    /// Fixes `theta_t[belief]` to `gamma` after checking that it solves the
    /// stage fixed-point equation. Fails if the key is already solved
    /// differently.
    pub fn pin(&self, t: usize, belief: &BeliefVector, gamma: GammaProfile) -> Result<Arc<StageSolution>> {
        self.check_stage(t)?;
        belief.check_dims(&self.game)?;
        let sol = Arc::new(self.certify(t, belief, gamma)?);
        let key = self.key(t, belief);
        let mut memo = self.memo.write();
        if let Some(Ok(existing)) = memo.get(&key) {
            if existing.gamma.sup_distance(&sol.gamma) > 1e-12 {
                return Err(SpbeError::InvalidArgument(format!(
                    "stage {t} belief {} already solved with a different prescription",
                    key.1
                )));
            }
        }
        memo.insert(key, Ok(sol.clone()));
        Ok(sol)
    }

    /// All distinct stage fixed points at `(t, belief)` reachable from the
    /// configured seeds, with continuation values from this generator.
    pub fn enumerate_fixed_points(&self, t: usize, belief: &BeliefVector) -> Result<Vec<StageSolution>> {
        self.check_stage(t)?;
        enumerate_stage_fixed_points(&self.game, t, belief, &self.continuation(t), &self.config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pubgoods::{belief_from_high_mass, build_game, prescription_to_gamma, PubGoodsParams};
    use crate::testing::random_game;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn generator() -> EquilibriumGenerator {
        let game = Arc::new(build_game(&PubGoodsParams::reference()).unwrap());
        EquilibriumGenerator::new(game, FixedPointConfig::default()).unwrap()
    }

    #[test]
    fn terminal_values_are_zero() {
        let g = generator();
        let v = g.solve_value(3, &belief_from_high_mass(0.4, 0.7)).unwrap();
        assert_eq!(v, vec![vec![0.0, 0.0], vec![0.0, 0.0]]);
        assert_eq!(g.solve_count(), 0);
    }

    #[test]
    fn memo_hits_do_not_resolve() {
        let g = generator();
        let b = belief_from_high_mass(0.5, 0.1);
        let first = g.stage_solution(2, &b).unwrap();
        let second = g.stage_solution(2, &b).unwrap();
        assert!(Arc::ptr_eq(&first, &second));
        assert_eq!(g.solve_count(), 1);
    }

    #[test]
    fn nearby_beliefs_share_a_key() {
        let g = generator();
        g.stage_solution(2, &belief_from_high_mass(0.5, 0.1)).unwrap();
        g.stage_solution(2, &belief_from_high_mass(0.5 + 1e-12, 0.1)).unwrap();
        assert_eq!(g.solve_count(), 1);
    }

    #[test]
    fn stage_out_of_range_is_rejected() {
        let g = generator();
        let b = belief_from_high_mass(0.5, 0.1);
        assert!(matches!(g.stage_solution(0, &b), Err(SpbeError::InvalidArgument(_))));
        assert!(matches!(g.stage_solution(3, &b), Err(SpbeError::InvalidArgument(_))));
    }

    #[test]
    fn pin_rejects_non_equilibrium() {
        let g = generator();
        let b = belief_from_high_mass(0.5, 0.5);
        let err = g.pin(2, &b, prescription_to_gamma([0.0, 0.0, 1.0, 1.0])).unwrap_err();
        assert!(matches!(err, SpbeError::RejectedPrescription { stage: 2, .. }));
        let ok = g.pin(2, &b, prescription_to_gamma([1.0, 1.0, 0.0, 0.0])).unwrap();
        assert!(ok.residual <= 1e-12);
        assert_eq!(g.solve_count(), 0);
    }

    #[test]
    fn dynamic_game_values_are_finite_and_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let game = Arc::new(random_game(&mut rng, 2, 2, 2, 2, true));
        let run = || {
            let g = EquilibriumGenerator::new(game.clone(), FixedPointConfig::default()).unwrap();
            g.solve_value(1, &BeliefVector::prior(&game)).map(|v| (v, g.solve_count()))
        };
        let a = run();
        let b = run();
        assert_eq!(format!("{a:?}"), format!("{b:?}"));
        if let Ok((v, _)) = a {
            assert!(v.iter().flatten().all(|x| x.is_finite()));
        }
    }
}
