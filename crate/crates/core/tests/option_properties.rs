use freeopt_core::market::{sample_returns, PoolState, ReturnModel, Side};
use freeopt_core::BuilderProblem;
use proptest::prelude::*;
use proptest::test_runner::RngSeed;

fn problem(mu: f64, liquidity: f64, gap: f64, sigma: f64, window: f64, penalty: f64) -> BuilderProblem {
    let pool = PoolState::new(liquidity, 1.0, gap).unwrap();
    BuilderProblem::new(mu, pool, ReturnModel::normal(sigma), window).with_penalty(penalty)
}

/// Standard normal hazard from libm's erfc, independent of the crate's own.
fn hazard(z: f64) -> f64 {
    let pdf = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    pdf / (0.5 * libm::erfc(z / std::f64::consts::SQRT_2))
}

fn fixed_point() -> f64 {
    let (mut lo, mut hi) = (0.0, 2.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if hazard(mid) > 2.0 * mid {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

#[test]
fn fixed_point_constant() {
    assert!((fixed_point() - 0.6120).abs() < 5e-4);
}

#[test]
fn example_optimum_scales_with_volatility_and_liquidity() {
    let z0 = fixed_point();
    for (sigma, l) in [(0.01, 1000.0), (0.002, 5000.0), (0.02, 300.0)] {
        let d = problem(0.0, l, 0.0, sigma, 1.0, 0.0).solve().unwrap();
        assert!((d.optimal_y / (sigma * l) / z0 - 1.0).abs() < 0.01);
        assert!((d.post_trade_overshoot / (2.0 * z0 * sigma) - 1.0).abs() < 0.01);
        assert!((d.z_star.unwrap() - z0).abs() < 1e-6);
    }
}

#[test]
fn gap_sensitivity_matches_linearization() {
    // λ(z) = 2z + δ/σ around z0 with λ' = λ(λ - z) = 2z0², and y = L(σz + δ)/(1 - δ).
    let z0 = fixed_point();
    let coefficient = 1.0 - 1.0 / (2.0 - 2.0 * z0 * z0);
    let (sigma, gap, l) = (0.01, 0.005, 1000.0);
    let d = problem(0.0, l, gap, sigma, 1.0, 0.0).solve().unwrap();
    let approx = z0 * sigma * l + coefficient * gap * l;
    assert!((d.optimal_y / approx - 1.0).abs() < 0.03, "{} vs {approx}", d.optimal_y);
    // The z-sensitivity itself is the familiar 0.8.
    assert!((1.0 / (2.0 - 2.0 * z0 * z0) - 0.8).abs() < 0.01);
}

#[test]
fn closed_form_objective_matches_direct_average() {
    let pb = problem(0.0, 1.0, 0.0, 0.01, 1.0, 0.0);
    let y = 0.0061;
    let exact = pb.objective_closed_form(y).unwrap();
    let pi0 = pb.profit_at_commit(y).unwrap();
    let draws = sample_returns(&ReturnModel::normal(0.01), 2_000_000, 11).unwrap();
    let n = draws.len() as f64;
    let payoffs: Vec<f64> = draws.iter().map(|r| (pi0 + r * y).max(0.0)).collect();
    let mean = payoffs.iter().sum::<f64>() / n;
    let var = payoffs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    assert!((exact - mean).abs() <= 3.0 * (var / n).sqrt(), "{exact} vs {mean}");
}

#[test]
fn closed_form_and_monte_carlo_agree() {
    for (i, pb) in [
        problem(0.0, 1000.0, 0.0, 0.01, 1.0, 0.0),
        problem(0.003, 500.0, 0.002, 0.002, 4.0, 0.001),
        problem(-0.002, 800.0, 0.001, 0.001, 8.0, 0.0),
    ]
    .iter()
    .enumerate()
    {
        let exact = pb.solve().unwrap();
        let mc = pb.solve_mc(200_000, i as u64).unwrap();
        let se = mc.diagnostics.standard_error.unwrap();
        assert!((exact.value_v - mc.value_v).abs() <= 4.0 * se, "{} vs {} (se {se})", exact.value_v, mc.value_v);
        assert!((exact.optimal_y - mc.optimal_y).abs() <= 0.05 * exact.optimal_y.max(1e-9) + 1e-6);
    }
}

#[test]
fn sell_side_mirrors_buy_side() {
    // Selling into a pool priced `δ` below the CEX is buying at gap `-δ`.
    let buy = problem(0.001, 700.0, -0.002, 0.003, 2.0, 0.0).solve().unwrap();
    let mut pb = problem(0.001, 700.0, 0.002, 0.003, 2.0, 0.0);
    pb.pool = pb.pool.with_side(Side::Sell);
    let sell = pb.solve().unwrap();
    assert!((buy.value_v - sell.value_v).abs() < 1e-12);
    assert!((buy.exercise_prob - sell.exercise_prob).abs() < 1e-12);
}

fn arb_problem() -> impl Strategy<Value = BuilderProblem> {
    (-0.01f64..0.02, 100.0f64..5000.0, -0.004f64..0.004, 5e-4f64..5e-3, 1u32..=8, 0.0f64..0.005)
        .prop_map(|(mu, l, gap, sigma, w, p)| problem(mu, l, gap, sigma, w as f64, p))
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, rng_seed: RngSeed::Fixed(7), ..ProptestConfig::default() })]

    #[test]
    fn decision_invariants(pb in arb_problem()) {
        let d = pb.solve().unwrap();
        prop_assert!(d.optimal_y >= 0.0);
        prop_assert!((0.0..=1.0).contains(&d.exercise_prob));
        prop_assert!(d.net_option_value >= -1e-12);
        prop_assert!(d.value_v >= d.no_option_value - 1e-12);
        let direct = pb.objective_closed_form(d.optimal_y).unwrap();
        prop_assert!((direct - d.value_v).abs() <= 1e-12 * (1.0 + direct.abs()));
    }

    #[test]
    fn optimum_beats_nearby_positions(pb in arb_problem(), shift in -0.2f64..0.2) {
        let d = pb.solve().unwrap();
        let y = (d.optimal_y * (1.0 + shift)).max(0.0);
        prop_assert!(pb.objective_closed_form(y).unwrap() <= d.value_v + 1e-12);
    }

    #[test]
    fn dex_is_overpriced_at_the_optimum(
        mu in -0.01f64..0.02,
        l in 100.0f64..5000.0,
        gap in 0.0f64..0.004,
        sigma in 5e-4f64..5e-3,
    ) {
        let d = problem(mu, l, gap, sigma, 1.0, 0.0).solve().unwrap();
        prop_assert!(d.optimal_y > 0.0);
        // Strict while the option is live; once φ(z*) underflows the
        // optimum sits on the commit-time optimum to machine precision.
        prop_assert!(d.post_trade_overshoot >= -1e-15);
        if d.exercise_prob >= 1e-9 {
            prop_assert!(d.post_trade_overshoot > 0.0);
        }
    }

    #[test]
    fn monotone_in_mev_and_penalty(pb in arb_problem(), step in 1e-4f64..5e-3) {
        let base = pb.solve().unwrap();
        let richer = BuilderProblem { atomic_mev: pb.atomic_mev + step, ..pb.clone() }.solve().unwrap();
        let punished = BuilderProblem { penalty: pb.penalty + step, ..pb.clone() }.solve().unwrap();
        let tol = 1e-10;
        prop_assert!(richer.value_v >= base.value_v - tol);
        prop_assert!(richer.exercise_prob <= base.exercise_prob + tol);
        prop_assert!(punished.value_v <= base.value_v + tol);
        prop_assert!(punished.exercise_prob <= base.exercise_prob + tol);
    }

    #[test]
    fn exercise_rises_with_volatility(mu in 0.0f64..0.02, l in 100.0f64..5000.0, sigma in 5e-4f64..5e-3) {
        let low = problem(mu, l, 0.0, sigma, 1.0, 0.0).solve().unwrap();
        let high = problem(mu, l, 0.0, sigma * 1.5, 1.0, 0.0).solve().unwrap();
        prop_assert!(high.exercise_prob >= low.exercise_prob - 1e-10);
    }

    #[test]
    fn value_rises_with_liquidity(mu in 0.0f64..0.02, l in 10.0f64..5000.0, sigma in 5e-4f64..5e-3) {
        let small = problem(mu, l, 0.0, sigma, 1.0, 0.0).solve().unwrap();
        let large = problem(mu, l * 1.5, 0.0, sigma, 1.0, 0.0).solve().unwrap();
        prop_assert!(large.value_v >= small.value_v - 1e-12);
        prop_assert!(large.exercise_prob >= small.exercise_prob - 1e-10);
    }

    #[test]
    fn envelope_identities(pb in arb_problem()) {
        let env = pb.envelope_derivatives().unwrap();
        let h = 1e-3 * pb.sigma_eff().powi(2) * pb.pool.liquidity;
        let at = |mu: f64, p: f64| BuilderProblem { atomic_mev: mu, penalty: p, ..pb.clone() }.solve().unwrap();
        // The identity needs a maximizer that moves continuously across the
        // stencil; where the global optimum jumps between modes, V* has a kink.
        let continuous = |a: f64, b: f64| (a - b).abs() <= 0.1 * a.max(b) + 1e-9;

        let (up, down) = (at(pb.atomic_mev + h, pb.penalty), at(pb.atomic_mev - h, pb.penalty));
        if continuous(up.optimal_y, down.optimal_y) {
            let d_mu = (up.value_v - down.value_v) / (2.0 * h);
            prop_assert!((d_mu - env.d_value_d_mev).abs() <= 1e-3, "{d_mu} vs {}", env.d_value_d_mev);
        }
        let p_hi = pb.penalty + h;
        let p_lo = (pb.penalty - h).max(0.0);
        let (hi, lo) = (at(pb.atomic_mev, p_hi), at(pb.atomic_mev, p_lo));
        if continuous(hi.optimal_y, lo.optimal_y) {
            let d_p = (hi.value_v - lo.value_v) / (p_hi - p_lo);
            prop_assert!((d_p - env.d_value_d_penalty).abs() <= 1e-3, "{d_p} vs {}", env.d_value_d_penalty);
        }
    }
}
