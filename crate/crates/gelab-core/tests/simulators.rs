//! Statistical integration tests for the two simulators and the extended
//! dynamics. Everything is seeded; tolerances are sized so a correct
//! implementation fails with negligible probability while the tampered
//! variants at the bottom are rejected decisively.

use gelab_core::error::ModelError;
use gelab_core::feller::{drifted_feller_em, feller_em_path, DiffusionParams};
use gelab_core::graph::run_graph;
use gelab_core::jump::{reproduction_rate, run_jump, run_jump_observed, step_jump};
use gelab_core::model::{init_population, InitSpec, ModelParams, ParentSampling, Population};
use gelab_core::rng::{binomial_half, SeedSpec, SimRng, StreamRole};
use gelab_core::sim::{recording_grid, run_chain, Stepper};
use gelab_core::stats::{ks_pvalue, ks_statistic};
use rand::Rng;
use statrs::distribution::{Binomial, ChiSquared, ContinuousCDF, Discrete};

fn streams(master: u64, rep: u64) -> (SimRng, SimRng) {
    let spec = SeedSpec::new(master, rep);
    (
        spec.stream(StreamRole::Init),
        spec.stream(StreamRole::JumpSim),
    )
}

#[test]
fn event_counts_match_the_event_clock() {
    // Events on [0, t] are Poisson with rate N^2/2 for both simulators.
    let n = 10;
    let t = 2.0;
    let expected = reproduction_rate(n) * t;
    let reps = 300;
    for graph in [false, true] {
        let mut total = 0u64;
        for rep in 0..reps {
            let spec = SeedSpec::new(11, rep);
            let pop = init_population(
                &InitSpec::Delta { value: 2 },
                n,
                &mut spec.stream(StreamRole::Init),
            )
            .unwrap();
            let params = ModelParams::neutral(n);
            let rec = if graph {
                let mut rng = spec.stream(StreamRole::GraphSim);
                run_graph(&pop, &params, t, &[t], &mut rng).unwrap()
            } else {
                let mut rng = spec.stream(StreamRole::JumpSim);
                run_jump(&pop, &params, t, &[t], &mut rng).unwrap()
            };
            total += rec.rows.last().unwrap().events;
        }
        let mean = total as f64 / reps as f64;
        let se = (expected / reps as f64).sqrt();
        assert!(
            (mean - expected).abs() < 4.0 * se,
            "graph={graph}: mean events {mean} vs {expected} (se {se})"
        );
    }
}

fn chi_square_p(observed: &[u64], expected_probs: &[f64]) -> f64 {
    let total: u64 = observed.iter().sum();
    let mut stat = 0.0;
    for (&o, &p) in observed.iter().zip(expected_probs) {
        let e = p * total as f64;
        stat += (o as f64 - e) * (o as f64 - e) / e;
    }
    let df = (observed.len() - 1) as f64;
    1.0 - ChiSquared::new(df).unwrap().cdf(stat)
}

#[test]
fn lone_individual_breeds_with_itself() {
    // With N = 1 the dying slot and both parents coincide, so the offspring
    // count is Binomial(2k, 1/2).
    let law = Binomial::new(0.5, 6).unwrap();
    let mut counts = vec![0u64; 7];
    let mut rng = SeedSpec::new(12, 0).stream(StreamRole::JumpSim);
    let params = ModelParams::neutral(1);
    for _ in 0..20_000 {
        let mut pop = Population::new(vec![3]).unwrap();
        let ev = step_jump(&mut pop, &params, &mut rng).unwrap();
        counts[ev.offspring_count as usize] += 1;
    }
    let probs: Vec<f64> = (0..=6).map(|k| law.pmf(k)).collect();
    let p = chi_square_p(&counts, &probs);
    assert!(p > 1e-6, "chi-square p = {p}, counts {counts:?}");
}

#[test]
fn offspring_follows_the_two_parent_mixture() {
    // Counts [2, 3]: parents are drawn uniformly with replacement, so the
    // offspring law is the mixture (Bin(4) + 2 Bin(5) + Bin(6)) / 4 at p=1/2.
    let b4 = Binomial::new(0.5, 4).unwrap();
    let b5 = Binomial::new(0.5, 5).unwrap();
    let b6 = Binomial::new(0.5, 6).unwrap();
    let probs: Vec<f64> = (0..=6u64)
        .map(|k| 0.25 * b4.pmf(k) + 0.5 * b5.pmf(k) + 0.25 * b6.pmf(k))
        .collect();
    let mut counts = vec![0u64; 7];
    let mut rng = SeedSpec::new(13, 0).stream(StreamRole::JumpSim);
    let params = ModelParams::neutral(2);
    for _ in 0..20_000 {
        let mut pop = Population::new(vec![2, 3]).unwrap();
        let ev = step_jump(&mut pop, &params, &mut rng).unwrap();
        counts[ev.offspring_count as usize] += 1;
    }
    let p = chi_square_p(&counts, &probs);
    assert!(p > 1e-6, "chi-square p = {p}, counts {counts:?}");
}

fn mean_endpoint(master: u64, params: &ModelParams, t: f64, reps: u64) -> (f64, f64) {
    let mut vals = Vec::with_capacity(reps as usize);
    for rep in 0..reps {
        let (mut init_rng, mut sim_rng) = streams(master, rep);
        let pop = init_population(&InitSpec::Delta { value: 1 }, params.n, &mut init_rng).unwrap();
        let rec = run_jump(&pop, params, t, &[t], &mut sim_rng).unwrap();
        vals.push(rec.rows.last().unwrap().z);
    }
    let m = vals.iter().sum::<f64>() / reps as f64;
    let var = vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (reps as f64 - 1.0);
    (m, (var / reps as f64).sqrt())
}

#[test]
fn acquisition_and_loss_drive_the_mean_as_predicted() {
    // Immigration at rate mu N adds mu t to the mean; per-element gain and
    // loss scale it by exp(nu t) and exp(-beta t).
    let n = 30;
    let t = 0.4_f64;
    let cases = [
        (
            ModelParams {
                mu: 1.5,
                ..ModelParams::neutral(n)
            },
            1.0 + 1.5 * t,
        ),
        (
            ModelParams {
                nu: 1.0,
                ..ModelParams::neutral(n)
            },
            t.exp(),
        ),
        (
            ModelParams {
                beta: 1.0,
                ..ModelParams::neutral(n)
            },
            (-t).exp(),
        ),
    ];
    for (i, (params, want)) in cases.into_iter().enumerate() {
        let (m, se) = mean_endpoint(20 + i as u64, &params, t, 600);
        assert!(
            (m - want).abs() < 3.5 * se,
            "case {i}: mean {m} vs {want} (se {se})"
        );
    }
}

#[test]
fn distinct_parent_sampling_keeps_the_mean_martingale() {
    let n = 12;
    let params = ModelParams {
        parent_sampling: ParentSampling::Distinct,
        ..ModelParams::neutral(n)
    };
    let mut vals = Vec::new();
    for rep in 0..600 {
        let (mut init_rng, mut sim_rng) = streams(31, rep);
        let pop = init_population(&InitSpec::Delta { value: 2 }, n, &mut init_rng).unwrap();
        let rec = run_jump(&pop, &params, 0.5, &[0.5], &mut sim_rng).unwrap();
        vals.push(rec.rows.last().unwrap().z);
    }
    let m = vals.iter().sum::<f64>() / vals.len() as f64;
    let var = vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (vals.len() as f64 - 1.0);
    let se = (var / vals.len() as f64).sqrt();
    assert!((m - 2.0).abs() < 3.5 * se, "mean {m} (se {se})");
}

#[test]
fn positive_alpha_lowers_the_mean() {
    let n = 20;
    let params = ModelParams {
        alpha: 5.0,
        ..ModelParams::neutral(n)
    };
    let mut vals = Vec::new();
    for rep in 0..400 {
        let (mut init_rng, mut sim_rng) = streams(37, rep);
        let pop = init_population(&InitSpec::Delta { value: 2 }, n, &mut init_rng).unwrap();
        let rec = run_jump(&pop, &params, 0.5, &[0.5], &mut sim_rng).unwrap();
        vals.push(rec.rows.last().unwrap().z);
    }
    let m = vals.iter().sum::<f64>() / vals.len() as f64;
    let var = vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (vals.len() as f64 - 1.0);
    let se = (var / vals.len() as f64).sqrt();
    assert!(
        m + 3.0 * se < 2.0,
        "selection did not lower the mean: {m} (se {se})"
    );
}

#[test]
fn drifted_euler_scheme_reduces_to_the_critical_one() {
    // With all drift parameters zero the drifted scheme must consume the
    // stream identically and return the endpoint of the plain path.
    let params = DiffusionParams::critical(2.0);
    let mut a = SeedSpec::new(41, 0).stream(StreamRole::FellerEm);
    let mut b = SeedSpec::new(41, 0).stream(StreamRole::FellerEm);
    let path = feller_em_path(2.0, 0.5, 1e-3, &mut a).unwrap();
    let end = drifted_feller_em(&params, 0.5, 1e-3, &mut b).unwrap();
    assert_eq!(*path.last().unwrap(), end);
}

/// `step_jump` with the offspring count shifted up by one: the mutation the
/// cross-simulator test must catch.
struct OffByOneStepper {
    n: usize,
}

impl Stepper for OffByOneStepper {
    fn total_rate(&self, _pop: &Population) -> f64 {
        reproduction_rate(self.n)
    }

    fn apply(&mut self, pop: &mut Population, rng: &mut SimRng) -> Result<(), ModelError> {
        let n = pop.n();
        let dying = rng.random_range(0..n);
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        let sum = pop.count(a) as u64 + pop.count(b) as u64;
        let offspring = binomial_half(sum, rng) as u32 + 1;
        pop.set_count(dying, offspring)?;
        Ok(())
    }
}

#[test]
fn off_by_one_offspring_law_is_rejected() {
    let n = 25;
    let t = 0.5;
    let reps = 1000;
    let params = ModelParams::neutral(n);
    let grid = recording_grid(&[], t);
    let mut good = Vec::new();
    let mut bad = Vec::new();
    for rep in 0..reps {
        let spec = SeedSpec::new(53, rep);
        let pop = init_population(
            &InitSpec::PoissonTruncated {
                lambda: 2.0,
                truncation: 30,
            },
            n,
            &mut spec.stream(StreamRole::Init),
        )
        .unwrap();
        let rec = run_jump(
            &pop,
            &params,
            t,
            &grid,
            &mut spec.stream(StreamRole::JumpSim),
        )
        .unwrap();
        good.push(rec.rows.last().unwrap().z);

        let mut tampered = pop.clone();
        let mut stepper = OffByOneStepper { n };
        let mut scratch = spec.stream(StreamRole::Scratch);
        run_chain(&mut tampered, &mut stepper, t, &mut [], &mut scratch).unwrap();
        bad.push(tampered.mean());
    }
    let p = ks_pvalue(ks_statistic(&good, &bad), good.len(), bad.len());
    assert!(p < 0.001, "tampered sampler was not detected, p = {p}");
}

#[test]
fn observers_see_every_event_once() {
    use gelab_core::sim::{Observer, StateStats};

    #[derive(Default)]
    struct Counter {
        events: u64,
        covered: f64,
    }
    impl Observer for Counter {
        fn segment(&mut self, t0: f64, t1: f64, _stats: &StateStats) {
            self.covered += t1 - t0;
        }
        fn event(&mut self, _t: f64, _prev: &StateStats, _next: &StateStats) {
            self.events += 1;
        }
    }

    let spec = SeedSpec::new(61, 0);
    let mut pop = init_population(
        &InitSpec::Delta { value: 2 },
        8,
        &mut spec.stream(StreamRole::Init),
    )
    .unwrap();
    let params = ModelParams::neutral(8);
    let mut counter = Counter::default();
    let summary = run_jump_observed(
        &mut pop,
        &params,
        1.5,
        &mut [&mut counter],
        &mut spec.stream(StreamRole::JumpSim),
    )
    .unwrap();
    assert_eq!(counter.events, summary.events);
    assert!((counter.covered - 1.5).abs() < 1e-12);
}
