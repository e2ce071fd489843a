//! Ties the simulators to the exact generator: the empirical one-step
//! (embedded-chain) expectation of an observable must match the rational
//! value `f(x) + Gf(x)/rate`, and deliberately wrong closed forms must be
//! rejected by the statistical criteria that pin the right ones.

use gelab_core::generator::{
    apply_generator, diffusion_residual, psi_decomposition_check, random_state, ExactState,
};
use gelab_core::graph::step_graph;
use gelab_core::harness::acceptance::{
    criterion_04_second_moment_ode, criterion_04_with_curve, DEFAULT_SEED,
};
use gelab_core::jump::step_jump;
use gelab_core::model::{ModelParams, Population};
use gelab_core::rng::{SeedSpec, StreamRole};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};

fn rat(p: i64, q: i64) -> BigRational {
    BigRational::new(BigInt::from(p), BigInt::from(q))
}

fn to_f64(x: &BigRational) -> f64 {
    x.to_f64().unwrap()
}

/// Mean and standard error of `f` after one simulated event from `counts`,
/// over `m` independent steps.
fn embedded_mean(
    counts: &[u32],
    m: usize,
    graph: bool,
    f: impl Fn(&Population) -> f64,
) -> (f64, f64) {
    let params = ModelParams::neutral(counts.len());
    let role = if graph {
        StreamRole::GraphSim
    } else {
        StreamRole::JumpSim
    };
    let mut rng = SeedSpec::new(71, graph as u64).stream(role);
    let mut sum = 0.0;
    let mut sumsq = 0.0;
    for _ in 0..m {
        let mut pop = Population::new(counts.to_vec()).unwrap();
        if graph {
            step_graph(&mut pop, &mut rng).unwrap();
        } else {
            step_jump(&mut pop, &params, &mut rng).unwrap();
        }
        let v = f(&pop);
        sum += v;
        sumsq += v * v;
    }
    let mean = sum / m as f64;
    let var = (sumsq - sum * sum / m as f64) / (m as f64 - 1.0);
    (mean, (var / m as f64).sqrt())
}

#[test]
fn one_step_expectations_match_the_generator() {
    // counts [1, 1, 3, 3]: exact post-event expectation of f is
    // f(x) + Gf(x) / (N^2/2), computed in rational arithmetic.
    let counts = [1u32, 1, 3, 3];
    let state = ExactState::from_population(&Population::new(counts.to_vec()).unwrap()).unwrap();
    let rate = BigRational::from(BigInt::from(8));
    let m = 200_000;
    type Case = (
        &'static str,
        fn(&ExactState) -> BigRational,
        fn(&Population) -> f64,
    );
    let cases: [Case; 3] = [
        ("rho1", |x| x.rho(1), |p| p.factorial_moments().0),
        ("rho2", |x| x.rho(2), |p| p.factorial_moments().1),
        ("rho3", |x| x.rho(3), |p| p.factorial_moments().2),
    ];
    for graph in [false, true] {
        for (name, exact_f, sim_f) in cases {
            let fx = exact_f(&state);
            let gf = apply_generator(&state, &exact_f);
            let want = to_f64(&(&fx + &gf / &rate));
            let (mean, se) = embedded_mean(&counts, m, graph, sim_f);
            assert!(
                (mean - want).abs() < 4.0 * se,
                "{name} graph={graph}: {mean} vs {want} (se {se})"
            );
        }
    }
}

#[test]
fn three_direction_product_decomposition_is_exact() {
    let state = ExactState::from_histogram(vec![1, 2, 0, 1, 1]).unwrap();
    let s = [rat(1, 3), rat(2, 5), rat(1, 2)];
    let check = psi_decomposition_check(&state, &s).unwrap();
    assert!(check.holds(), "|lhs - rhs| = {}", check.abs_diff);

    let small = ExactState::from_histogram(vec![0, 1, 1]).unwrap();
    let check = psi_decomposition_check(&small, &s).unwrap();
    assert!(check.holds(), "|lhs - rhs| = {}", check.abs_diff);
}

#[test]
fn quadratics_have_zero_diffusion_residual_everywhere() {
    let mut rng = SeedSpec::new(73, 0).stream(StreamRole::StateGen);
    let g = [rat(2, 1), rat(-3, 1), rat(5, 2)];
    for _ in 0..30 {
        let x = random_state(&mut rng, 2..=10, 6).unwrap();
        let r = diffusion_residual(&x, &g).unwrap();
        assert!(r.is_zero(), "nonzero residual {r} at {x:?}");
    }
}

#[test]
fn cubic_residual_halves_as_n_doubles() {
    // Half the population at count 1, half at 3; g(z) = z^3.
    let g = [rat(0, 1), rat(0, 1), rat(0, 1), rat(1, 1)];
    let mut values = Vec::new();
    for n in [4u64, 8, 16] {
        let mut hist = vec![0u64; 4];
        hist[1] = n / 2;
        hist[3] = n / 2;
        let x = ExactState::from_histogram(hist).unwrap();
        values.push(diffusion_residual(&x, &g).unwrap());
    }
    assert_eq!(values[1], &values[0] / &BigRational::from(BigInt::from(2)));
    assert_eq!(values[2], &values[1] / &BigRational::from(BigInt::from(2)));
    assert_eq!(values[0], rat(3, 32));
}

#[test]
fn wrong_relaxation_constant_is_rejected() {
    // Shifting N+3 to N+2 in the relaxation curve must break the
    // second-moment criterion at N = 20.
    fn tampered(n: usize, t: f64, e0: f64, z: f64) -> f64 {
        let rate = (n as f64 + 2.0) / 4.0;
        let decay = (-rate * t).exp();
        decay * e0 + (1.0 - decay) * 4.0 * z / (n as f64 + 2.0)
    }
    let r = criterion_04_with_curve(DEFAULT_SEED, tampered);
    assert!(!r.passed, "tampered curve was accepted: {}", r.detail);
    assert!(criterion_04_second_moment_ode(DEFAULT_SEED).passed);
}

#[test]
fn jump_rate_normalization_matches_total() {
    use gelab_core::generator::{jump_rates, total_jump_rate};
    let state = ExactState::from_histogram(vec![0, 2, 0, 2]).unwrap();
    let total: BigRational = total_jump_rate(&state);
    let sum: BigRational = jump_rates::<BigRational>(&state)
        .into_iter()
        .map(|t| t.rate)
        .sum();
    assert_eq!(sum, total);
    assert_eq!(total, BigRational::from(BigInt::from(8)));
}
