//! Graphical-construction simulator for the neutral model.
//!
//! Every ordered triple (h, i, j) of individuals carries an independent
//! exponential arrow clock; when the (h, i, j) arrow fires, h is replaced by
//! an offspring of i and j, which keeps each element of i and of j
//! independently with probability 1/2 (counts read before the event). By
//! superposition this is one global exponential clock with the triple drawn
//! uniformly, and the per-triple rate is calibrated so the total is
//! `N^2 / 2`: the two fair thinnings make the offspring count
//! `Binomial(count_i + count_j, 1/2)`, and with this total the induced jump
//! rates coincide with the jump-rate simulator's, as the cross-simulator
//! tests check.

use crate::error::ModelError;
use crate::model::{ModelParams, Population, TypeDistribution};
use crate::rng::{binomial_half, SimRng};
use crate::sim::{run_chain, GridRecorder, Observer, RunSummary, Stepper, TimeSeriesRecord};
use crate::stats::tv_to_poisson;
use rand::Rng;

/// Total arrow rate for a population of size `n`.
pub fn triple_event_rate(n: usize) -> f64 {
    (n as f64) * (n as f64) / 2.0
}

/// One arrow firing: `replaced` took over the thinned union of `donors`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TripleEvent {
    pub replaced: usize,
    pub donors: (usize, usize),
    pub kept: (u32, u32),
}

/// Fire one uniformly chosen arrow. Donor counts are read before the
/// replacement, so a donor that coincides with the replaced individual
/// contributes its old count.
pub fn step_graph(pop: &mut Population, rng: &mut SimRng) -> Result<TripleEvent, ModelError> {
    let n = pop.n();
    let h = rng.random_range(0..n);
    let i = rng.random_range(0..n);
    let j = rng.random_range(0..n);
    let from_i = binomial_half(pop.count(i) as u64, rng) as u32;
    let from_j = binomial_half(pop.count(j) as u64, rng) as u32;
    pop.set_count(h, from_i + from_j)?;
    Ok(TripleEvent {
        replaced: h,
        donors: (i, j),
        kept: (from_i, from_j),
    })
}

pub struct GraphStepper;

impl Stepper for GraphStepper {
    fn total_rate(&self, pop: &Population) -> f64 {
        triple_event_rate(pop.n())
    }

    fn apply(&mut self, pop: &mut Population, rng: &mut SimRng) -> Result<(), ModelError> {
        step_graph(pop, rng).map(|_| ())
    }
}

/// Run the graphical construction from a copy of `pop0`. Only the neutral
/// model has this representation; non-neutral parameters are rejected.
pub fn run_graph_observed(
    pop: &mut Population,
    params: &ModelParams,
    t_end: f64,
    observers: &mut [&mut dyn Observer],
    rng: &mut SimRng,
) -> Result<RunSummary, ModelError> {
    params.validate()?;
    params.check_population(pop)?;
    if !params.is_neutral() {
        return Err(ModelError::GraphNotNeutral);
    }
    run_chain(pop, &mut GraphStepper, t_end, observers, rng)
}

pub fn run_graph(
    pop0: &Population,
    params: &ModelParams,
    t_end: f64,
    grid: &[f64],
    rng: &mut SimRng,
) -> Result<TimeSeriesRecord, ModelError> {
    let mut pop = pop0.clone();
    let mut rec = GridRecorder::new(grid);
    run_graph_observed(&mut pop, params, t_end, &mut [&mut rec], rng)?;
    Ok(rec.into_record())
}

/// Result of a short-time mixing probe.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeResult {
    /// Probe horizon `ln(ln N) / N`.
    pub t1: f64,
    /// Mean count at the probe time.
    pub z: f64,
    /// Count histogram at the probe time.
    pub histogram: Vec<u64>,
    /// Total-variation distance from `Poisson(z)`.
    pub tv: f64,
}

/// Run the graphical construction to the early horizon `t1 = ln(ln N) / N`
/// and measure how far the empirical count distribution is from the Poisson
/// law with the same mean. Requires `N >= 16` so that `ln(ln N) > 0` with
/// headroom.
pub fn early_poissonization_probe(
    pop0: &Population,
    rng: &mut SimRng,
) -> Result<ProbeResult, ModelError> {
    let n = pop0.n();
    if n < 16 {
        return Err(ModelError::ProbeTooSmall { n });
    }
    let t1 = (n as f64).ln().ln() / n as f64;
    let mut pop = pop0.clone();
    run_chain(&mut pop, &mut GraphStepper, t1, &mut [], rng)?;
    let dist = TypeDistribution::from_population(&pop);
    Ok(ProbeResult {
        t1,
        z: pop.mean(),
        histogram: pop.histogram(),
        tv: tv_to_poisson(&dist),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{SeedSpec, StreamRole};

    fn rng(rep: u64) -> SimRng {
        SeedSpec::new(902, rep).stream(StreamRole::GraphSim)
    }

    #[test]
    fn offspring_bounded_by_donor_totals() {
        let mut r = rng(0);
        let mut pop = Population::new(vec![4, 0, 7, 2]).unwrap();
        for _ in 0..200 {
            let before: Vec<u32> = pop.counts().to_vec();
            let ev = step_graph(&mut pop, &mut r).unwrap();
            assert!(ev.kept.0 <= before[ev.donors.0]);
            assert!(ev.kept.1 <= before[ev.donors.1]);
            assert_eq!(pop.count(ev.replaced), ev.kept.0 + ev.kept.1);
        }
    }

    #[test]
    fn non_neutral_params_are_rejected() {
        let mut r = rng(1);
        let mut params = ModelParams::neutral(4);
        params.mu = 1.0;
        let pop = Population::new(vec![1; 4]).unwrap();
        let err = run_graph(&pop, &params, 1.0, &[0.0, 1.0], &mut r);
        assert!(matches!(err, Err(ModelError::GraphNotNeutral)));
    }

    #[test]
    fn probe_needs_a_large_population() {
        let mut r = rng(2);
        let pop = Population::new(vec![2; 8]).unwrap();
        assert!(matches!(
            early_poissonization_probe(&pop, &mut r),
            Err(ModelError::ProbeTooSmall { n: 8 })
        ));
    }

    #[test]
    fn probe_runs_at_the_documented_horizon() {
        let mut r = rng(3);
        let pop = Population::new(vec![2; 32]).unwrap();
        let probe = early_poissonization_probe(&pop, &mut r).unwrap();
        assert_eq!(probe.t1, (32f64).ln().ln() / 32.0);
        assert!(probe.tv >= 0.0 && probe.tv <= 1.0);
        assert_eq!(probe.histogram.iter().sum::<u64>(), 32);
    }
}
