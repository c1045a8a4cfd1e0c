//! The two-player, two-stage public goods game with binary contribution
//! decisions and private low/high contribution costs.
//!
//! Scalar beliefs in this module are the mass a player's marginal puts on the
//! high type. Prescriptions are written `(p1L, p2L, p1H, p2H)`, each the
//! probability of contributing.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::belief::{BeliefVector, GammaProfile, PartialFunction};
use crate::error::{Result, SpbeError};
use crate::game::{validate_game, Distribution, GameSpec, ValidatedGame};
use crate::solver::{
    forward_construct, pure_profile, pure_profile_count, Equilibrium, EquilibriumGenerator, FixedPointConfig,
    SeedPlan, StageRule, StageSolution,
};
use crate::verify::{check_sequential_rationality, VerificationReport, DEFAULT_VERIFY_TOLERANCE};

pub const LOW: usize = 0;
pub const HIGH: usize = 1;
pub const ABSTAIN: usize = 0;
pub const CONTRIBUTE: usize = 1;

pub const PRESCRIPTION_TOLERANCE: f64 = 1e-6;
pub const VALUE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PubGoodsParams {
    pub q: f64,
    pub xl: f64,
    pub xh: f64,
}

impl PubGoodsParams {
    pub fn new(q: f64, xl: f64, xh: f64) -> Result<Self> {
        let p = PubGoodsParams { q, xl, xh };
        p.validate()?;
        Ok(p)
    }

    /// `q = 0.1`, `xL = 0.2`, `xH = 1.2`.
    pub fn reference() -> Self {
        PubGoodsParams { q: 0.1, xl: 0.2, xh: 1.2 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.q > 0.0 && self.q < 1.0) {
            return Err(SpbeError::InvalidArgument(format!("q = {} must lie in (0, 1)", self.q)));
        }
        if !(self.xl > 0.0 && self.xl < 1.0 && self.xh > 1.0 && self.xh.is_finite()) {
            return Err(SpbeError::InvalidArgument(format!(
                "costs must satisfy 0 < xL < 1 < xH (got xL = {}, xH = {})",
                self.xl, self.xh
            )));
        }
        Ok(())
    }

    /// Stage-1 contribution probability of the low type in the symmetric mixed equilibrium.
    pub fn symmetric_stage1_probability(&self) -> f64 {
        (1.0 - self.xl) / ((1.0 - self.q) * (1.0 + self.xl))
    }

    /// Threshold on `xL` above which the symmetric stage-1 formula is a probability.
    pub fn symmetric_threshold(&self) -> f64 {
        self.q / (2.0 - self.q)
    }

    fn cost(&self, own_type: usize) -> f64 {
        if own_type == LOW {
            self.xl
        } else {
            self.xh
        }
    }
}

pub fn build_spec(params: &PubGoodsParams) -> GameSpec {
    let types = [LOW, HIGH];
    let actions = [ABSTAIN, CONTRIBUTE];
    // joint index: player 0 most significant
    let rewards = (0..2)
        .map(|i| {
            types
                .iter()
                .flat_map(|&x1| types.iter().map(move |&x2| [x1, x2]))
                .map(|x| {
                    actions
                        .iter()
                        .flat_map(|&a1| actions.iter().map(move |&a2| [a1, a2]))
                        .map(|a| {
                            if a[i] == CONTRIBUTE {
                                1.0 - params.cost(x[i])
                            } else {
                                a[1 - i] as f64
                            }
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    GameSpec {
        num_players: 2,
        horizon: 2,
        type_space_sizes: vec![2, 2],
        action_space_sizes: vec![2, 2],
        priors: vec![vec![1.0 - params.q, params.q]; 2],
        kernels: None,
        rewards,
    }
}

pub fn build_game(params: &PubGoodsParams) -> Result<ValidatedGame> {
    params.validate()?;
    validate_game(build_spec(params))
}

pub fn belief_from_high_mass(pi1: f64, pi2: f64) -> BeliefVector {
    let m = |p: f64| Distribution::new(vec![1.0 - p, p]).expect("high mass in [0, 1]");
    BeliefVector::new(vec![m(pi1), m(pi2)])
}

pub fn high_mass(belief: &BeliefVector) -> (f64, f64) {
    (belief.marginal(0)[HIGH], belief.marginal(1)[HIGH])
}

pub fn prescription_to_gamma(p: [f64; 4]) -> GammaProfile {
    let row = |c: f64| Distribution::new(vec![1.0 - c, c]).expect("probability in [0, 1]");
    GammaProfile::new(vec![
        PartialFunction::new(vec![row(p[0]), row(p[2])]),
        PartialFunction::new(vec![row(p[1]), row(p[3])]),
    ])
}

pub fn gamma_to_prescription(gamma: &GammaProfile) -> [f64; 4] {
    let c = |i: usize, x: usize| gamma.prescription(i).prob(CONTRIBUTE, x);
    [c(0, LOW), c(1, LOW), c(0, HIGH), c(1, HIGH)]
}

/// Admissible range of the one coordinate left free on a boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreeInterval {
    /// Index into `(p1L, p2L, p1H, p2H)`.
    pub coordinate: usize,
    pub lo: f64,
    pub hi: f64,
}

/// One closed-form solution of the last-stage fixed-point equation at a given belief.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theta2Solution {
    pub label: u8,
    /// Free coordinate, if any, set to the upper end of its interval.
    pub prescription: [f64; 4],
    pub free: Option<FreeInterval>,
    pub pi: (f64, f64),
    pub xl: f64,
}

impl Theta2Solution {
    /// `values[i][x]` with the free coordinate (if any) taken from `prescription`.
    pub fn values_with(&self, prescription: &[f64; 4]) -> [[f64; 2]; 2] {
        let (a, b) = self.pi;
        let c = 1.0 - self.xl;
        match self.label {
            1 => [[1.0 - b, 1.0 - b], [c, 0.0]],
            2 => [[c, 0.0], [1.0 - a, 1.0 - a]],
            3 => [[c, 1.0 - b], [c, 1.0 - a]],
            4 => [[c, (1.0 - b) * prescription[1]], [c, 1.0 - a]],
            5 => [[c, 1.0 - b], [c, (1.0 - a) * prescription[0]]],
            6 => [[c, c], [c, c]],
            _ => unreachable!("labels are 1..=6"),
        }
    }

    pub fn values(&self) -> [[f64; 2]; 2] {
        self.values_with(&self.prescription)
    }

    pub fn contains(&self, prescription: &[f64; 4], tol: f64) -> bool {
        (0..4).all(|k| match self.free {
            Some(f) if f.coordinate == k => prescription[k] >= f.lo - tol && prescription[k] <= f.hi + tol,
            _ => (prescription[k] - self.prescription[k]).abs() <= tol,
        })
    }

    /// Prescription membership within `p_tol` and values within `v_tol`.
    pub fn matches(&self, prescription: &[f64; 4], values: &[[f64; 2]; 2], p_tol: f64, v_tol: f64) -> bool {
        let want = self.values_with(prescription);
        self.contains(prescription, p_tol)
            && (0..2).all(|i| (0..2).all(|x| (values[i][x] - want[i][x]).abs() <= v_tol))
    }
}

fn boundary_bound(other: f64, xl: f64) -> f64 {
    if other >= 1.0 {
        1.0
    } else {
        ((1.0 - xl) / (1.0 - other)).min(1.0)
    }
}

/// Every closed-form last-stage solution whose region contains `(pi1, pi2)`.
pub fn analytic_theta2(pi1: f64, pi2: f64, params: &PubGoodsParams) -> Vec<Theta2Solution> {
    let xl = params.xl;
    let sol = |label, prescription, free| Theta2Solution {
        label,
        prescription,
        free,
        pi: (pi1, pi2),
        xl,
    };
    let mut out = Vec::new();
    if pi2 <= xl {
        out.push(sol(1, [0.0, 1.0, 0.0, 0.0], None));
    }
    if pi1 <= xl {
        out.push(sol(2, [1.0, 0.0, 0.0, 0.0], None));
    }
    if pi1 >= xl && pi2 >= xl {
        out.push(sol(3, [1.0, 1.0, 0.0, 0.0], None));
    }
    if pi1 == xl {
        let hi = boundary_bound(pi2, xl);
        out.push(sol(4, [1.0, hi, 0.0, 0.0], Some(FreeInterval { coordinate: 1, lo: 0.0, hi })));
    }
    if pi2 == xl {
        let hi = boundary_bound(pi1, xl);
        out.push(sol(5, [hi, 1.0, 0.0, 0.0], Some(FreeInterval { coordinate: 0, lo: 0.0, hi })));
    }
    if pi1 <= xl && pi2 <= xl {
        out.push(sol(6, [(1.0 - xl) / (1.0 - pi1), (1.0 - xl) / (1.0 - pi2), 0.0, 0.0], None));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CanonicalBranch {
    Interior,
    FirstContributes,
    SecondContributes,
    BothContribute,
}

impl CanonicalBranch {
    pub fn label(self) -> &'static str {
        match self {
            CanonicalBranch::Interior => "interior",
            CanonicalBranch::FirstContributes => "(1,0,0,0)",
            CanonicalBranch::SecondContributes => "(0,1,0,0)",
            CanonicalBranch::BothContribute => "(1,1,0,0)",
        }
    }
}

/// The single-valued last-stage selection. Brackets are checked in display
/// order, so the corner `(xL, xL)` takes the first-contributes branch.
pub fn canonical_branch(pi1: f64, pi2: f64, params: &PubGoodsParams) -> CanonicalBranch {
    let xl = params.xl;
    if pi1 < xl && pi2 < xl {
        CanonicalBranch::Interior
    } else if pi1 <= xl && pi2 >= xl {
        CanonicalBranch::FirstContributes
    } else if pi1 >= xl && pi2 <= xl {
        CanonicalBranch::SecondContributes
    } else {
        CanonicalBranch::BothContribute
    }
}

pub fn canonical_prescription(pi1: f64, pi2: f64, params: &PubGoodsParams) -> [f64; 4] {
    let xl = params.xl;
    match canonical_branch(pi1, pi2, params) {
        CanonicalBranch::Interior => [(1.0 - xl) / (1.0 - pi1), (1.0 - xl) / (1.0 - pi2), 0.0, 0.0],
        CanonicalBranch::FirstContributes => [1.0, 0.0, 0.0, 0.0],
        CanonicalBranch::SecondContributes => [0.0, 1.0, 0.0, 0.0],
        CanonicalBranch::BothContribute => [1.0, 1.0, 0.0, 0.0],
    }
}

pub fn canonical_theta2(pi1: f64, pi2: f64, params: &PubGoodsParams) -> GammaProfile {
    prescription_to_gamma(canonical_prescription(pi1, pi2, params))
}

/// Uses the canonical selection at the last stage and defers to the solver elsewhere.
#[derive(Debug, Clone, Copy)]
pub struct CanonicalTheta2 {
    pub params: PubGoodsParams,
}

impl StageRule for CanonicalTheta2 {
    fn prescribe(&self, game: &ValidatedGame, t: usize, belief: &BeliefVector) -> Option<GammaProfile> {
        (t == game.horizon()).then(|| {
            let (a, b) = high_mass(belief);
            canonical_theta2(a, b, &self.params)
        })
    }
}

/// Pure profiles in canonical order followed by the uniform profile.
pub fn stage1_config(base: &FixedPointConfig, game: &ValidatedGame) -> FixedPointConfig {
    let mut seeds: Vec<GammaProfile> = (0..pure_profile_count(game) as usize)
        .map(|k| pure_profile(game, k))
        .collect();
    seeds.push(GammaProfile::uniform(game));
    FixedPointConfig {
        seeds: SeedPlan::Explicit(seeds),
        ..base.clone()
    }
}

pub fn canonical_generator(params: &PubGoodsParams, base: &FixedPointConfig) -> Result<EquilibriumGenerator> {
    let game = Arc::new(build_game(params)?);
    let config = stage1_config(base, &game);
    Ok(EquilibriumGenerator::new(game, config)?.with_rule(Arc::new(CanonicalTheta2 { params: *params })))
}

/// All distinct stage-1 fixed points under the canonical last-stage selection.
pub fn solve_stage1(params: &PubGoodsParams, base: &FixedPointConfig) -> Result<Vec<StageSolution>> {
    let generator = canonical_generator(params, base)?;
    let prior = BeliefVector::prior(generator.game());
    generator.enumerate_fixed_points(1, &prior)
}

/// Forward construction with stage 1 pinned to `stage1`.
pub fn construct_with_stage1(
    params: &PubGoodsParams,
    base: &FixedPointConfig,
    stage1: [f64; 4],
) -> Result<Equilibrium> {
    let generator = canonical_generator(params, base)?;
    let prior = BeliefVector::prior(generator.game());
    generator.pin(1, &prior, prescription_to_gamma(stage1))?;
    Ok(forward_construct(&generator))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MapMode {
    Canonical,
    AllSolutions,
}

/// Grid points `k / n` for `n = round(1 / resolution)`.
pub fn grid(resolution: f64) -> Result<Vec<f64>> {
    if !(resolution > 0.0 && resolution <= 1.0) {
        return Err(SpbeError::InvalidArgument(format!(
            "resolution {resolution} must lie in (0, 1]"
        )));
    }
    let n = (1.0 / resolution).round() as usize;
    Ok((0..=n).map(|k| k as f64 / n as f64).collect())
}

pub const MAP_HEADER: &str = "pi1,pi2,p1L,p2L,p1H,p2H,labels";

/// Region map as CSV text. Rows are ordered by `pi1` then `pi2`; the
/// leading comment line records the parameters.
pub fn emit_region_map(resolution: f64, params: &PubGoodsParams, mode: MapMode) -> Result<String> {
    params.validate()?;
    let points = grid(resolution)?;
    let rows: Vec<String> = points
        .par_iter()
        .flat_map_iter(|&a| points.iter().map(move |&b| (a, b)))
        .map(|(a, b)| {
            let p = canonical_prescription(a, b, params);
            let labels = match mode {
                MapMode::Canonical => canonical_branch(a, b, params).label().to_string(),
                MapMode::AllSolutions => analytic_theta2(a, b, params)
                    .iter()
                    .map(|s| s.label.to_string())
                    .collect::<Vec<_>>()
                    .join(";"),
            };
            format!("{a},{b},{},{},{},{},{labels}", p[0], p[1], p[2], p[3])
        })
        .collect();
    let mut out = format!(
        "# region-map q={} xl={} xh={} resolution={} mode={}\n{MAP_HEADER}\n",
        params.q,
        params.xl,
        params.xh,
        resolution,
        match mode {
            MapMode::Canonical => "canonical",
            MapMode::AllSolutions => "all-solutions",
        }
    );
    for r in rows {
        out.push_str(&r);
        out.push('\n');
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub expected: String,
    pub actual: String,
    pub pass: bool,
}

impl Check {
    fn new(name: &str, expected: impl fmt::Display, actual: impl fmt::Display, pass: bool) -> Self {
        Check {
            name: name.to_string(),
            expected: expected.to_string(),
            actual: actual.to_string(),
            pass,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ExampleReport {
    pub params: PubGoodsParams,
    pub stage1_solutions: Vec<[f64; 4]>,
    pub checks: Vec<Check>,
    pub asymmetric_verification: Option<VerificationReport>,
    pub symmetric_verification: Option<VerificationReport>,
    pub pass: bool,
}

impl fmt::Display for ExampleReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "public goods example q={} xL={} xH={}",
            self.params.q, self.params.xl, self.params.xh
        )?;
        writeln!(f, "stage-1 fixed points (p1L, p2L, p1H, p2H):")?;
        for s in &self.stage1_solutions {
            writeln!(f, "  ({:.6}, {:.6}, {:.6}, {:.6})", s[0], s[1], s[2], s[3])?;
        }
        for c in &self.checks {
            writeln!(
                f,
                "[{}] {}: expected {}, got {}",
                if c.pass { "PASS" } else { "FAIL" },
                c.name,
                c.expected,
                c.actual
            )?;
        }
        write!(f, "overall: {}", if self.pass { "PASS" } else { "FAIL" })
    }
}

fn fmt_pair(p: (f64, f64)) -> String {
    format!("({:.6}, {:.6})", p.0, p.1)
}

fn child_beliefs(eq: &Equilibrium) -> Vec<(f64, f64)> {
    let tree = eq.tree();
    (0..4)
        .map(|a| {
            let node = tree.child(0, a).expect("two-stage tree");
            eq.beliefs.get(node).map_or((f64::NAN, f64::NAN), high_mass)
        })
        .collect()
}

fn beliefs_check(name: &str, got: &[(f64, f64)], want: &[(f64, f64)], tol: f64) -> Check {
    let ok = got
        .iter()
        .zip(want)
        .all(|(g, w)| (g.0 - w.0).abs() <= tol && (g.1 - w.1).abs() <= tol);
    let show = |v: &[(f64, f64)]| v.iter().map(|p| fmt_pair(*p)).collect::<Vec<_>>().join(" ");
    Check::new(name, show(want), show(got), ok)
}

/// Runs the full pipeline with the canonical last-stage selection and
/// checks the published equilibria. Child beliefs are listed for the joint
/// actions `00, 01, 10, 11`.
pub fn reproduce_example(params: &PubGoodsParams, base: &FixedPointConfig) -> Result<ExampleReport> {
    let q = params.q;
    let mut checks = Vec::new();
    let solutions = solve_stage1(params, base)?;
    let found: Vec<[f64; 4]> = solutions.iter().map(|s| gamma_to_prescription(&s.gamma)).collect();
    let has = |p: [f64; 4]| found.iter().any(|f| (0..4).all(|k| (f[k] - p[k]).abs() <= PRESCRIPTION_TOLERANCE));

    let asym = [0.0, 1.0, 0.0, 0.0];
    let twin = [1.0, 0.0, 0.0, 0.0];
    checks.push(Check::new("stage 1 contains (0,1,0,0)", true, has(asym), has(asym)));
    checks.push(Check::new("stage 1 contains (1,0,0,0)", true, has(twin), has(twin)));

    let ps = params.symmetric_stage1_probability();
    let symmetric = [ps, ps, 0.0, 0.0];
    let symmetric_exists = params.xl > params.symmetric_threshold();
    if symmetric_exists {
        checks.push(Check::new(
            "stage 1 contains symmetric mixed point",
            format!("p = {ps:.6}"),
            has(symmetric),
            has(symmetric),
        ));
    }

    let asym_eq = construct_with_stage1(params, base, asym)?;
    let got = child_beliefs(&asym_eq);
    checks.push(beliefs_check(
        "asymmetric beliefs",
        &got,
        &[(q, 1.0), (q, 0.0), (q, 1.0), (q, 0.0)],
        1e-12,
    ));
    let asymmetric_verification = Some(verify_equilibrium(&asym_eq)?);
    let gap = asymmetric_verification.as_ref().map_or(f64::NAN, |r| r.max_gap);
    checks.push(Check::new("asymmetric equilibrium verified", "max gap <= 1e-8", gap, gap <= DEFAULT_VERIFY_TOLERANCE));

    let twin_eq = construct_with_stage1(params, base, twin)?;
    let twin_report = verify_equilibrium(&twin_eq)?;
    checks.push(Check::new(
        "antisymmetric equilibrium verified",
        "max gap <= 1e-8",
        twin_report.max_gap,
        twin_report.pass,
    ));

    let mut symmetric_verification = None;
    if symmetric_exists {
        let sym_eq = construct_with_stage1(params, base, symmetric)?;
        let got = child_beliefs(&sym_eq);
        let p = q * (1.0 + params.xl) / (q * (1.0 + params.xl) + (1.0 - params.xl));
        checks.push(beliefs_check(
            "symmetric beliefs (published formula)",
            &got,
            &[(p, p), (p, 0.0), (0.0, p), (0.0, 0.0)],
            1e-6,
        ));
        let bayes = q / (q + (1.0 - q) * (1.0 - ps));
        checks.push(beliefs_check(
            "symmetric beliefs (Bayes rule)",
            &got,
            &[(bayes, bayes), (bayes, 0.0), (0.0, bayes), (0.0, 0.0)],
            1e-12,
        ));
        let report = verify_equilibrium(&sym_eq)?;
        checks.push(Check::new("symmetric equilibrium verified", "max gap <= 1e-8", report.max_gap, report.pass));
        symmetric_verification = Some(report);
    }

    let pass = checks.iter().all(|c| c.pass);
    Ok(ExampleReport {
        params: *params,
        stage1_solutions: found,
        checks,
        asymmetric_verification,
        symmetric_verification,
        pass,
    })
}

fn verify_equilibrium(eq: &Equilibrium) -> Result<VerificationReport> {
    if let Some((history, err)) = eq.first_error() {
        return Err(SpbeError::InvalidArgument(format!(
            "construction failed at {history:?}: {err}"
        )));
    }
    check_sequential_rationality(eq.game(), &eq.profile, &eq.beliefs, DEFAULT_VERIFY_TOLERANCE)
}
