//! Jump-rate simulator for the bi-parental GE model.
//!
//! Reproduction events fire at total rate `N^2 / 2`. Each event kills a
//! uniformly chosen individual and replaces it by an offspring of two
//! uniformly chosen parents (with replacement, independent of the victim);
//! the offspring inherits `Binomial(k + l, 1/2)` elements where `k`, `l` are
//! the parents' counts *before* the event. The extended model adds
//! acquisition at rate `N*mu + nu*S1` and per-element loss at rate
//! `beta*S1`, run as competing exponential clocks, plus fertility selection
//! applied to parent choice by rejection.

use crate::error::ModelError;
use crate::model::{ModelParams, ParentSampling, Population};
use crate::rng::{binomial_half, SimRng};
use crate::sim::{run_chain, Observer, RunSummary, Stepper, TimeSeriesRecord};
use rand::Rng;

/// Total reproduction rate of a population of size `n`.
pub fn reproduction_rate(n: usize) -> f64 {
    (n as f64) * (n as f64) / 2.0
}

/// What a single reproduction event did.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct JumpEvent {
    pub dying: usize,
    pub parents: (usize, usize),
    /// Parents' counts at the moment of the event.
    pub parent_counts: (u32, u32),
    pub offspring_count: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExtendedEvent {
    Reproduction(JumpEvent),
    Acquisition { individual: usize },
    Loss { individual: usize },
}

fn pick_parent(pop: &Population, params: &ModelParams, rng: &mut SimRng) -> usize {
    let n = pop.n();
    if params.alpha == 0.0 {
        return rng.random_range(0..n);
    }
    // Fertility weight (1 - alpha/N)^k, normalized by its maximum over the
    // current population so the acceptance probability is at most one.
    let base = 1.0 - params.alpha / n as f64;
    let k_ref = if base <= 1.0 {
        pop.min_count()
    } else {
        pop.max_count()
    };
    loop {
        let i = rng.random_range(0..n);
        let k = pop.count(i);
        let accept = base.powi(k as i32 - k_ref as i32);
        if rng.random::<f64>() < accept {
            return i;
        }
    }
}

/// Perform exactly one reproduction event and report what happened.
pub fn step_jump(
    pop: &mut Population,
    params: &ModelParams,
    rng: &mut SimRng,
) -> Result<JumpEvent, ModelError> {
    let n = pop.n();
    let dying = rng.random_range(0..n);
    let a = pick_parent(pop, params, rng);
    let b = match params.parent_sampling {
        ParentSampling::WithReplacement => pick_parent(pop, params, rng),
        ParentSampling::Distinct => loop {
            let b = pick_parent(pop, params, rng);
            if b != a || n == 1 {
                break b;
            }
        },
    };
    let (k, l) = (pop.count(a), pop.count(b));
    let offspring = binomial_half(k as u64 + l as u64, rng) as u32;
    pop.set_count(dying, offspring)?;
    Ok(JumpEvent {
        dying,
        parents: (a, b),
        parent_counts: (k, l),
        offspring_count: offspring,
    })
}

/// Perform one event of the extended model: reproduction, acquisition, or
/// loss, chosen proportionally to their current rates.
pub fn step_extended(
    pop: &mut Population,
    params: &ModelParams,
    rng: &mut SimRng,
) -> Result<ExtendedEvent, ModelError> {
    let n = pop.n();
    let s1 = pop.power_sums().s1 as f64;
    let repro = reproduction_rate(n);
    let acq = params.mu * n as f64 + params.nu * s1;
    let loss = params.beta * s1;
    let aux = acq + loss;
    if aux == 0.0 {
        return Ok(ExtendedEvent::Reproduction(step_jump(pop, params, rng)?));
    }
    let u = rng.random::<f64>() * (repro + aux);
    if u < repro {
        Ok(ExtendedEvent::Reproduction(step_jump(pop, params, rng)?))
    } else if u < repro + acq {
        let individual = pick_acquirer(pop, params, rng);
        let next = pop
            .count(individual)
            .checked_add(1)
            .ok_or(ModelError::PowerSumOverflow { count: u32::MAX })?;
        pop.set_count(individual, next)?;
        Ok(ExtendedEvent::Acquisition { individual })
    } else {
        let individual = pick_loser(pop, rng);
        pop.set_count(individual, pop.count(individual) - 1)?;
        Ok(ExtendedEvent::Loss { individual })
    }
}

/// Acquisition hits individual `i` at rate `mu + nu * count_i`.
fn pick_acquirer(pop: &Population, params: &ModelParams, rng: &mut SimRng) -> usize {
    let n = pop.n();
    if params.nu == 0.0 {
        return rng.random_range(0..n);
    }
    let total = params.mu * n as f64 + params.nu * pop.power_sums().s1 as f64;
    let target = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for i in 0..n {
        acc += params.mu + params.nu * pop.count(i) as f64;
        if target < acc {
            return i;
        }
    }
    n - 1
}

/// Loss removes one element from individual `i` at rate `beta * count_i`;
/// only called when `S1 > 0`.
fn pick_loser(pop: &Population, rng: &mut SimRng) -> usize {
    let target = rng.random::<f64>() * pop.power_sums().s1 as f64;
    let mut acc = 0.0;
    for i in 0..pop.n() {
        acc += pop.count(i) as f64;
        if target < acc && pop.count(i) > 0 {
            return i;
        }
    }
    (0..pop.n()).rev().find(|&i| pop.count(i) > 0).unwrap_or(0)
}

pub struct MoranStepper {
    params: ModelParams,
}

impl MoranStepper {
    pub fn new(params: ModelParams) -> Result<Self, ModelError> {
        params.validate()?;
        Ok(Self { params })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }
}

impl Stepper for MoranStepper {
    fn total_rate(&self, pop: &Population) -> f64 {
        let n = pop.n();
        let s1 = pop.power_sums().s1 as f64;
        reproduction_rate(n)
            + self.params.mu * n as f64
            + self.params.nu * s1
            + self.params.beta * s1
    }

    fn apply(&mut self, pop: &mut Population, rng: &mut SimRng) -> Result<(), ModelError> {
        step_extended(pop, &self.params, rng).map(|_| ())
    }
}

/// Run the jump simulator from a copy of `pop0` with caller-supplied
/// observers attached.
pub fn run_jump_observed(
    pop: &mut Population,
    params: &ModelParams,
    t_end: f64,
    observers: &mut [&mut dyn Observer],
    rng: &mut SimRng,
) -> Result<RunSummary, ModelError> {
    params.check_population(pop)?;
    let mut stepper = MoranStepper::new(*params)?;
    run_chain(pop, &mut stepper, t_end, observers, rng)
}

/// Run the jump simulator and record the state on `grid` (which should come
/// from [`crate::sim::recording_grid`]).
pub fn run_jump(
    pop0: &Population,
    params: &ModelParams,
    t_end: f64,
    grid: &[f64],
    rng: &mut SimRng,
) -> Result<TimeSeriesRecord, ModelError> {
    let mut pop = pop0.clone();
    let mut rec = crate::sim::GridRecorder::new(grid);
    run_jump_observed(&mut pop, params, t_end, &mut [&mut rec], rng)?;
    Ok(rec.into_record())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{SeedSpec, StreamRole};

    fn rng(rep: u64) -> SimRng {
        SeedSpec::new(901, rep).stream(StreamRole::JumpSim)
    }

    #[test]
    fn event_replaces_only_the_victim() {
        let mut r = rng(0);
        let mut pop = Population::new(vec![5, 1, 3, 0]).unwrap();
        let before = pop.counts().to_vec();
        let params = ModelParams::neutral(4);
        for _ in 0..50 {
            let ev = step_jump(&mut pop, &params, &mut r).unwrap();
            assert!(
                ev.offspring_count as u64 <= ev.parent_counts.0 as u64 + ev.parent_counts.1 as u64
            );
            assert!(ev.dying < 4 && ev.parents.0 < 4 && ev.parents.1 < 4);
        }
        assert_eq!(pop.counts().len(), before.len());
    }

    #[test]
    fn distinct_sampling_never_repeats_a_parent() {
        let mut r = rng(1);
        let mut params = ModelParams::neutral(6);
        params.parent_sampling = ParentSampling::Distinct;
        let mut pop = Population::new(vec![2; 6]).unwrap();
        for _ in 0..200 {
            let ev = step_jump(&mut pop, &params, &mut r).unwrap();
            assert_ne!(ev.parents.0, ev.parents.1);
        }
    }

    #[test]
    fn neutral_total_rate_is_half_n_squared() {
        let pop = Population::new(vec![1; 7]).unwrap();
        let stepper = MoranStepper::new(ModelParams::neutral(7)).unwrap();
        assert_eq!(stepper.total_rate(&pop), 24.5);
    }

    #[test]
    fn loss_only_hits_carriers() {
        let mut r = rng(2);
        let mut params = ModelParams::neutral(3);
        params.beta = 50.0;
        let mut pop = Population::new(vec![0, 4, 0]).unwrap();
        for _ in 0..100 {
            let carriers: Vec<usize> = (0..3).filter(|&i| pop.count(i) > 0).collect();
            if let ExtendedEvent::Loss { individual } =
                step_extended(&mut pop, &params, &mut r).unwrap()
            {
                assert!(carriers.contains(&individual));
            }
            if pop.power_sums().s1 == 0 {
                break;
            }
        }
    }

    #[test]
    fn selection_prefers_light_individuals_for_positive_alpha() {
        let mut r = rng(3);
        let mut params = ModelParams::neutral(10);
        params.alpha = 8.0;
        let pop = Population::new(vec![0, 0, 0, 0, 0, 9, 9, 9, 9, 9]).unwrap();
        let mut zero_picks = 0u32;
        let draws = 4000;
        for _ in 0..draws {
            if pop.count(pick_parent(&pop, &params, &mut r)) == 0 {
                zero_picks += 1;
            }
        }
        // weight ratio (1 - 0.8)^0 : (1 - 0.8)^9 makes count-0 picks dominate
        let frac = zero_picks as f64 / draws as f64;
        assert!(frac > 0.99, "frac = {frac}");
    }

    #[test]
    fn acquisition_rate_scales_with_counts_when_nu_positive() {
        let mut r = rng(4);
        let mut params = ModelParams::neutral(2);
        params.nu = 1000.0;
        let frozen = Population::new(vec![10, 0]).unwrap();
        let mut hits = [0u32; 2];
        for _ in 0..300 {
            let mut pop = frozen.clone();
            if let ExtendedEvent::Acquisition { individual } =
                step_extended(&mut pop, &params, &mut r).unwrap()
            {
                hits[individual] += 1;
            }
        }
        assert!(hits[0] > 10 * hits[1].max(1));
    }
}
