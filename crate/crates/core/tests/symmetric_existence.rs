//! Sweep of the symmetric stage-1 mixed point over prior and cost parameters.

use std::sync::Arc;

use spbe::belief::BeliefVector;
use spbe::pubgoods::{build_game, gamma_to_prescription, prescription_to_gamma, CanonicalTheta2, PubGoodsParams};
use spbe::solver::{evaluate_profile, EquilibriumGenerator, FixedPointConfig, SeedPlan};

fn generator(params: &PubGoodsParams, seeds: SeedPlan) -> EquilibriumGenerator {
    let config = FixedPointConfig {
        seeds,
        ..FixedPointConfig::default()
    };
    EquilibriumGenerator::new(Arc::new(build_game(params).unwrap()), config)
        .unwrap()
        .with_rule(Arc::new(CanonicalTheta2 { params: *params }))
}

fn is_symmetric_interior(p: &[f64; 4]) -> bool {
    (p[0] - p[1]).abs() < 1e-6 && p[0] > 1e-6 && p[0] < 1.0 - 1e-6 && p[2] == 0.0 && p[3] == 0.0
}

/// Stage-1 solves from the symmetric seeds `(k/20, k/20, 0, 0)`.
fn symmetric_seeded_solve_finds_interior_point(params: &PubGoodsParams) -> bool {
    let seeds = (1..20)
        .map(|k| prescription_to_gamma([k as f64 / 20.0, k as f64 / 20.0, 0.0, 0.0]))
        .collect();
    let g = generator(params, SeedPlan::Explicit(seeds));
    let prior = BeliefVector::prior(g.game());
    g.enumerate_fixed_points(1, &prior)
        .map(|all| all.iter().any(|s| is_symmetric_interior(&gamma_to_prescription(&s.gamma))))
        .unwrap_or(false)
}

/// Smallest stage-1 regret over symmetric profiles `(p, p, 0, 0)` on a grid of `p`.
fn min_symmetric_regret(params: &PubGoodsParams, steps: usize) -> f64 {
    let g = generator(params, SeedPlan::Auto);
    let prior = BeliefVector::prior(g.game());
    let cont = |b: &BeliefVector| g.solve_value(2, b);
    (1..steps)
        .map(|k| {
            let p = k as f64 / steps as f64;
            evaluate_profile(g.game(), 1, &prior, prescription_to_gamma([p, p, 0.0, 0.0]), &cont)
                .unwrap()
                .residual
        })
        .fold(f64::INFINITY, f64::min)
}

#[test]
fn symmetric_point_exists_exactly_above_the_threshold() {
    let mut mismatches = Vec::new();
    let mut checked = 0;
    for qi in 1..=18 {
        let q = qi as f64 * 0.05;
        for xi in 1..=19 {
            let xl = xi as f64 * 0.05;
            let params = PubGoodsParams::new(q, xl, 1.2).unwrap();
            let threshold = params.symmetric_threshold();
            if (xl - threshold).abs() < 1e-9 {
                continue;
            }
            checked += 1;
            if symmetric_seeded_solve_finds_interior_point(&params) != (xl > threshold) {
                mismatches.push((q, xl));
            }
        }
    }
    assert!(checked > 300);
    assert!(mismatches.is_empty(), "{} mismatches at (q, xL): {mismatches:?}", mismatches.len());
}

#[test]
fn no_symmetric_point_where_the_abstention_posterior_crosses_the_low_cost() {
    // Above the threshold, but the posterior after joint abstention under the
    // closed-form point falls below xL.
    for (q, xl) in [(0.05, 0.2), (0.1, 0.3), (0.5, 0.7)] {
        let params = PubGoodsParams::new(q, xl, 1.2).unwrap();
        assert!(xl > params.symmetric_threshold());
        assert!(q * (1.0 + xl) < 2.0 * xl * xl);
        assert!(min_symmetric_regret(&params, 20_000) > 1e-3, "({q}, {xl})");
    }
}

#[test]
fn closed_form_symmetric_point_is_certified_where_its_posterior_stays_above_the_low_cost() {
    for (q, xl) in [(0.1, 0.2), (0.3, 0.3), (0.25, 0.15)] {
        let params = PubGoodsParams::new(q, xl, 1.2).unwrap();
        let p = params.symmetric_stage1_probability();
        assert!(q * (1.0 + xl) >= 2.0 * xl * xl);
        let g = generator(&params, SeedPlan::Auto);
        let prior = BeliefVector::prior(g.game());
        let sol = g.pin(1, &prior, prescription_to_gamma([p, p, 0.0, 0.0])).unwrap();
        assert!(sol.residual <= 1e-12, "({q}, {xl}): residual {}", sol.residual);
    }
}

#[test]
fn symmetric_probability_matches_closed_form_at_listed_parameters() {
    let params = PubGoodsParams::reference();
    assert!((params.symmetric_stage1_probability() - 0.740741).abs() < 1e-6);
    assert!((params.symmetric_threshold() - 0.1 / 1.9).abs() < 1e-15);
}
