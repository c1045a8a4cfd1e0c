//! Factorized common-information belief state and its Bayes update.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SpbeError};
use crate::game::{Distribution, ValidatedGame};

/// Below this Bayes denominator the observed action is treated as having
/// zero probability and the update falls back to plain Markov propagation.
pub const DEGENERACY_TOLERANCE: f64 = 1e-12;
/// Default fixed-point rounding resolution for memo keys.
pub const DEFAULT_QUANTIZE_RESOLUTION: f64 = 1e-9;

/// Product-form belief over joint types: one marginal per player.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BeliefVector {
    marginals: Vec<Distribution>,
}

impl BeliefVector {
    pub fn new(marginals: Vec<Distribution>) -> Self {
        BeliefVector { marginals }
    }

    /// The stage-1 belief: product of the players' priors.
    pub fn prior(game: &ValidatedGame) -> Self {
        BeliefVector {
            marginals: (0..game.num_players())
                .map(|i| Distribution::normalized(game.prior(i).to_vec()).expect("validated prior"))
                .collect(),
        }
    }

    pub fn num_players(&self) -> usize {
        self.marginals.len()
    }

    pub fn marginal(&self, player: usize) -> &Distribution {
        &self.marginals[player]
    }

    pub fn marginals(&self) -> &[Distribution] {
        &self.marginals
    }

    pub fn to_vecs(&self) -> Vec<Vec<f64>> {
        self.marginals.iter().map(|m| m.to_vec()).collect()
    }

    /// Probability of a joint type under the product of marginals.
    pub fn joint_prob(&self, game: &ValidatedGame, joint_type: usize) -> f64 {
        self.marginals
            .iter()
            .enumerate()
            .map(|(i, m)| m[game.joint_types().component(joint_type, i)])
            .product()
    }

    pub fn check_dims(&self, game: &ValidatedGame) -> Result<()> {
        if self.marginals.len() != game.num_players()
            || self
                .marginals
                .iter()
                .enumerate()
                .any(|(i, m)| m.len() != game.type_count(i))
        {
            return Err(SpbeError::DimensionMismatch("belief vector".into()));
        }
        Ok(())
    }
}

/// A prescription `gamma^i`: own type -> distribution over own actions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PartialFunction {
    rows: Vec<Distribution>,
}

impl PartialFunction {
    pub fn new(rows: Vec<Distribution>) -> Self {
        PartialFunction { rows }
    }

    pub fn uniform(types: usize, actions: usize) -> Self {
        PartialFunction {
            rows: vec![Distribution::uniform(actions); types],
        }
    }

    /// Deterministic prescription: type `x` plays `choice[x]`.
    pub fn pure(choice: &[usize], actions: usize) -> Self {
        PartialFunction {
            rows: choice.iter().map(|&a| Distribution::point(actions, a)).collect(),
        }
    }

    pub fn rows(&self) -> &[Distribution] {
        &self.rows
    }

    pub fn row(&self, own_type: usize) -> &Distribution {
        &self.rows[own_type]
    }

    pub(crate) fn rows_mut(&mut self) -> &mut [Distribution] {
        &mut self.rows
    }

    #[inline]
    pub fn prob(&self, action: usize, own_type: usize) -> f64 {
        self.rows[own_type][action]
    }

    pub fn type_count(&self) -> usize {
        self.rows.len()
    }

    pub fn action_count(&self) -> usize {
        self.rows.first().map_or(0, |r| r.len())
    }
}

/// One prescription per player.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GammaProfile {
    prescriptions: Vec<PartialFunction>,
}

impl GammaProfile {
    pub fn new(prescriptions: Vec<PartialFunction>) -> Self {
        GammaProfile { prescriptions }
    }

    pub fn uniform(game: &ValidatedGame) -> Self {
        GammaProfile::new(
            (0..game.num_players())
                .map(|i| PartialFunction::uniform(game.type_count(i), game.action_count(i)))
                .collect(),
        )
    }

    pub fn prescription(&self, player: usize) -> &PartialFunction {
        &self.prescriptions[player]
    }

    pub fn prescriptions(&self) -> &[PartialFunction] {
        &self.prescriptions
    }

    pub(crate) fn prescription_mut(&mut self, player: usize) -> &mut PartialFunction {
        &mut self.prescriptions[player]
    }

    pub fn num_players(&self) -> usize {
        self.prescriptions.len()
    }

    pub fn check_dims(&self, game: &ValidatedGame) -> Result<()> {
        let ok = self.prescriptions.len() == game.num_players()
            && self.prescriptions.iter().enumerate().all(|(i, p)| {
                p.type_count() == game.type_count(i)
                    && p.rows().iter().all(|r| r.len() == game.action_count(i))
            });
        if ok {
            Ok(())
        } else {
            Err(SpbeError::DimensionMismatch("gamma profile".into()))
        }
    }

    /// Largest absolute difference between corresponding entries.
    pub fn sup_distance(&self, other: &GammaProfile) -> f64 {
        self.prescriptions
            .iter()
            .zip(&other.prescriptions)
            .flat_map(|(a, b)| a.rows().iter().zip(b.rows()))
            .map(|(ra, rb)| ra.sup_distance(rb))
            .fold(0.0, f64::max)
    }

    pub fn to_vecs(&self) -> Vec<Vec<Vec<f64>>> {
        self.prescriptions
            .iter()
            .map(|p| p.rows().iter().map(|r| r.to_vec()).collect())
            .collect()
    }
}

/// Bayes update of one player's marginal after the public action profile.
///
/// `own_action` is this player's component of the joint action and
/// `kernel_rows[x]` the type transition `Q^i(. | x, a)` under the full joint
/// action. When `own_action` has (numerically) zero probability under
/// `gamma_i` and `pi_i`, the marginal is propagated through the kernel without
/// conditioning.
pub fn update_marginal(
    pi_i: &Distribution,
    gamma_i: &PartialFunction,
    own_action: usize,
    kernel_rows: &[&[f64]],
) -> Result<Distribution> {
    let nx = pi_i.len();
    if gamma_i.type_count() != nx || kernel_rows.len() != nx {
        return Err(SpbeError::DimensionMismatch(format!(
            "belief over {nx} types, prescription over {} types, {} kernel rows",
            gamma_i.type_count(),
            kernel_rows.len()
        )));
    }
    if own_action >= gamma_i.action_count() {
        return Err(SpbeError::DimensionMismatch(format!(
            "action {own_action} outside prescription with {} actions",
            gamma_i.action_count()
        )));
    }
    let next_len = kernel_rows.first().map_or(0, |r| r.len());
    if kernel_rows.iter().any(|r| r.len() != next_len) || next_len == 0 {
        return Err(SpbeError::DimensionMismatch("ragged kernel rows".into()));
    }

    let denominator: f64 = (0..nx).map(|x| pi_i[x] * gamma_i.prob(own_action, x)).sum();
    let conditioned = denominator > DEGENERACY_TOLERANCE;
    let mut next = vec![0.0; next_len];
    for x in 0..nx {
        let w = if conditioned {
            pi_i[x] * gamma_i.prob(own_action, x)
        } else {
            pi_i[x]
        };
        if w == 0.0 {
            continue;
        }
        for (y, q) in kernel_rows[x].iter().enumerate() {
            next[y] += w * q;
        }
    }
    Distribution::normalized(next)
}

/// Applies [`update_marginal`] to every player; `kernels[i]` holds player
/// `i`'s kernel rows for the realized joint action.
pub fn update_vector(
    belief: &BeliefVector,
    gamma: &GammaProfile,
    joint_action: &[usize],
    kernels: &[Vec<&[f64]>],
) -> Result<BeliefVector> {
    let n = belief.num_players();
    if gamma.num_players() != n || joint_action.len() != n || kernels.len() != n {
        return Err(SpbeError::DimensionMismatch(
            "belief, prescription, action and kernel player counts differ".into(),
        ));
    }
    let marginals = (0..n)
        .map(|i| {
            update_marginal(
                belief.marginal(i),
                gamma.prescription(i),
                joint_action[i],
                &kernels[i],
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BeliefVector::new(marginals))
}

/// `F(pi, gamma, a)` for stage `t` of `game`, with `a` a joint action index.
pub fn update_belief(
    game: &ValidatedGame,
    t: usize,
    belief: &BeliefVector,
    gamma: &GammaProfile,
    joint_action: usize,
) -> Result<BeliefVector> {
    let actions = game.joint_actions().decode(joint_action);
    let kernels: Vec<Vec<&[f64]>> = (0..game.num_players())
        .map(|i| game.kernel_rows(t, i, joint_action))
        .collect();
    update_vector(belief, gamma, &actions, &kernels)
}

/// Hashable fixed-point rounding of a belief vector.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BeliefKey {
    shape: Vec<usize>,
    coords: Vec<i64>,
}

impl BeliefKey {
    /// Coordinates represented by this key (each a multiple of `resolution`).
    pub fn coordinates(&self, resolution: f64) -> Vec<Vec<f64>> {
        let mut it = self.coords.iter();
        self.shape
            .iter()
            .map(|&len| it.by_ref().take(len).map(|&k| k as f64 * resolution).collect())
            .collect()
    }
}

impl std::fmt::Display for BeliefKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:?}", self.coords)
    }
}

/// Rounds each coordinate to the nearest multiple of `resolution`.
pub fn quantize_key(belief: &BeliefVector, resolution: f64) -> BeliefKey {
    assert!(resolution > 0.0, "quantization resolution must be positive");
    quantize_coords(&belief.to_vecs(), resolution)
}

fn quantize_coords(coords: &[Vec<f64>], resolution: f64) -> BeliefKey {
    BeliefKey {
        shape: coords.iter().map(Vec::len).collect(),
        coords: coords
            .iter()
            .flatten()
            .map(|v| (v / resolution).round() as i64)
            .collect(),
    }
}

/// Re-quantizes a key's own coordinates; equal to the key itself.
pub fn requantize(key: &BeliefKey, resolution: f64) -> BeliefKey {
    quantize_coords(&key.coordinates(resolution), resolution)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testing::{random_distribution, random_game, random_gamma_profile};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dist(v: &[f64]) -> Distribution {
        Distribution::new(v.to_vec()).unwrap()
    }

    const IDENTITY: [&[f64]; 2] = [&[1.0, 0.0], &[0.0, 1.0]];

    // Player 2 of the public goods example: contributes (action 1) iff low type.
    fn contribute_iff_low() -> PartialFunction {
        PartialFunction::pure(&[1, 0], 2)
    }

    #[test]
    fn not_contributing_reveals_high_type() {
        let prior = dist(&[0.9, 0.1]);
        let post = update_marginal(&prior, &contribute_iff_low(), 0, &IDENTITY).unwrap();
        assert_eq!(post.as_slice(), &[0.0, 1.0]);
    }

    #[test]
    fn contributing_reveals_low_type() {
        let prior = dist(&[0.9, 0.1]);
        let post = update_marginal(&prior, &contribute_iff_low(), 1, &IDENTITY).unwrap();
        assert_eq!(post.as_slice(), &[1.0, 0.0]);
    }

    #[test]
    fn uninformative_prescription_leaves_belief_unchanged() {
        let prior = dist(&[0.3, 0.7]);
        let post = update_marginal(&prior, &PartialFunction::uniform(2, 3), 2, &IDENTITY).unwrap();
        assert!(post.sup_distance(&prior) <= 1e-16);
        let post = update_marginal(&prior, &PartialFunction::uniform(2, 2), 0, &IDENTITY).unwrap();
        assert_eq!(post, prior);
    }

    #[test]
    fn zero_probability_action_falls_back_to_markov_propagation() {
        let prior = dist(&[0.3, 0.7]);
        let kernel: [&[f64]; 2] = [&[0.5, 0.5], &[0.2, 0.8]];
        let never_one = PartialFunction::pure(&[0, 0], 2);
        let post = update_marginal(&prior, &never_one, 1, &kernel).unwrap();
        let expected = [0.3 * 0.5 + 0.7 * 0.2, 0.3 * 0.5 + 0.7 * 0.8];
        for (g, e) in post.iter().zip(expected) {
            assert!((g - e).abs() < 1e-15);
        }
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let prior = dist(&[0.5, 0.5]);
        let three: [&[f64]; 3] = [&[1.0, 0.0], &[0.0, 1.0], &[0.5, 0.5]];
        assert!(matches!(
            update_marginal(&prior, &contribute_iff_low(), 0, &three),
            Err(SpbeError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn vector_update_is_per_player() {
        let belief = BeliefVector::new(vec![dist(&[0.9, 0.1]), dist(&[0.9, 0.1])]);
        let gamma = GammaProfile::new(vec![
            PartialFunction::pure(&[0, 0], 2),
            contribute_iff_low(),
        ]);
        let kernels = vec![IDENTITY.to_vec(), IDENTITY.to_vec()];
        let next = update_vector(&belief, &gamma, &[0, 0], &kernels).unwrap();
        assert_eq!(next.marginal(0).as_slice(), &[0.9, 0.1]);
        assert_eq!(next.marginal(1).as_slice(), &[0.0, 1.0]);

        let uniform = GammaProfile::new(vec![PartialFunction::uniform(2, 2); 2]);
        assert_eq!(update_vector(&belief, &uniform, &[1, 0], &kernels).unwrap(), belief);
    }

    #[test]
    fn random_vector_updates_stay_on_the_simplex() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let game = random_game(&mut rng, 2, 3, 2, 2, true);
            let belief = BeliefVector::new(
                (0..2)
                    .map(|_| Distribution::normalized(random_distribution(&mut rng, 3)).unwrap())
                    .collect(),
            );
            let gamma = random_gamma_profile(&mut rng, &game);
            let a = rng.gen_range(0..game.joint_actions().len());
            let next = update_belief(&game, 1, &belief, &gamma, a).unwrap();
            for m in next.marginals() {
                assert!((m.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn quantization_merges_nearby_and_separates_distant_beliefs() {
        let b = |v: f64| BeliefVector::new(vec![dist(&[v, 1.0 - v])]);
        let k = quantize_key(&b(0.1), 1e-9);
        assert_eq!(k, quantize_key(&b(0.1 + 1e-12), 1e-9));
        assert_ne!(k, quantize_key(&b(0.2), 1e-9));
        assert_eq!(requantize(&k, 1e-9), k);
    }

    proptest! {
        #[test]
        fn update_marginal_output_is_a_distribution(
            pi in prop::collection::vec(0.0f64..1.0, 3),
            rows in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 2), 3),
            kern in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 3), 3),
            action in 0usize..2,
        ) {
            prop_assume!(pi.iter().sum::<f64>() > 1e-6);
            prop_assume!(rows.iter().all(|r| r.iter().sum::<f64>() > 1e-6));
            prop_assume!(kern.iter().all(|r| r.iter().sum::<f64>() > 1e-6));
            let pi = Distribution::normalized(pi).unwrap();
            let gamma = PartialFunction::new(
                rows.into_iter().map(|r| Distribution::normalized(r).unwrap()).collect(),
            );
            let kern: Vec<Vec<f64>> = kern
                .into_iter()
                .map(|r| { let s: f64 = r.iter().sum(); r.into_iter().map(|v| v / s).collect() })
                .collect();
            let rows: Vec<&[f64]> = kern.iter().map(Vec::as_slice).collect();
            let post = update_marginal(&pi, &gamma, action, &rows).unwrap();
            prop_assert!(post.iter().all(|v| *v >= 0.0));
            prop_assert!((post.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }

        // The update sees only (pi, gamma, a, kernel): identical inputs from
        // different surrounding strategies give bit-identical outputs.
        #[test]
        fn update_depends_only_on_its_arguments(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let game = random_game(&mut rng, 2, 2, 2, 2, true);
            let belief = BeliefVector::prior(&game);
            let g1 = random_gamma_profile(&mut rng, &game);
            let mut g2 = random_gamma_profile(&mut rng, &game);
            *g2.prescription_mut(0) = g1.prescription(0).clone();
            let a = rng.gen_range(0..4);
            let n1 = update_belief(&game, 1, &belief, &g1, a).unwrap();
            let n2 = update_belief(&game, 1, &belief, &g2, a).unwrap();
            prop_assert_eq!(n1.marginal(0), n2.marginal(0));
        }
    }
}
