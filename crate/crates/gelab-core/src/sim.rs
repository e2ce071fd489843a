//! Shared event-loop machinery for both simulators.
//!
//! The population follows a piecewise-constant path: between events nothing
//! moves, at an event one individual's count is replaced (plus acquisition
//! and loss events in the extended model). Observers see every segment and
//! every transition, which lets occupation integrals and quadratic-variation
//! sums be accumulated exactly rather than on a sampling grid.

use crate::error::ModelError;
use crate::model::Population;
use crate::rng::SimRng;
use rand::Rng;

/// O(1) summary of the current population state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateStats {
    /// Mean GE count per individual, `Z = rho_1`.
    pub z: f64,
    pub rho2: f64,
    pub rho3: f64,
    /// Signed Poissonization gap `rho_2 - rho_1^2` (exact integer numerator).
    pub gap: f64,
}

impl StateStats {
    pub fn of(pop: &Population) -> Self {
        let (z, rho2, rho3) = pop.factorial_moments();
        Self {
            z,
            rho2,
            rho3,
            gap: pop.signed_gap(),
        }
    }

    pub fn gap_abs(&self) -> f64 {
        self.gap.abs()
    }
}

/// Receives the piecewise-constant path of a single run.
pub trait Observer {
    /// The state described by `stats` holds on `[t0, t1)`.
    fn segment(&mut self, t0: f64, t1: f64, stats: &StateStats);

    /// An event at time `t` replaced `prev` by `next`.
    fn event(&mut self, _t: f64, _prev: &StateStats, _next: &StateStats) {}

    /// The run ended at `t_end`; the last `segment` call already covered up
    /// to this time.
    fn finish(&mut self, _t_end: f64, _stats: &StateStats) {}
}

/// One jump-process dynamic: a total event rate plus the effect of one event.
pub trait Stepper {
    fn total_rate(&self, pop: &Population) -> f64;
    fn apply(&mut self, pop: &mut Population, rng: &mut SimRng) -> Result<(), ModelError>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSummary {
    pub events: u64,
    pub t_end: f64,
}

/// Drive `stepper` on `pop` over `[0, t_end]`, feeding every segment and
/// event to the observers. Exponential waiting times are drawn by inversion
/// so one uniform is consumed per event.
pub fn run_chain(
    pop: &mut Population,
    stepper: &mut impl Stepper,
    t_end: f64,
    observers: &mut [&mut dyn Observer],
    rng: &mut SimRng,
) -> Result<RunSummary, ModelError> {
    if !t_end.is_finite() || t_end < 0.0 {
        return Err(ModelError::BadHorizon(t_end));
    }
    let mut t = 0.0_f64;
    let mut events = 0u64;
    let mut stats = StateStats::of(pop);
    loop {
        let rate = stepper.total_rate(pop);
        let t_next = if rate > 0.0 {
            t + exponential(rng) / rate
        } else {
            f64::INFINITY
        };
        if t_next >= t_end {
            for obs in observers.iter_mut() {
                obs.segment(t, t_end, &stats);
                obs.finish(t_end, &stats);
            }
            return Ok(RunSummary { events, t_end });
        }
        stepper.apply(pop, rng)?;
        events += 1;
        let next = StateStats::of(pop);
        for obs in observers.iter_mut() {
            obs.segment(t, t_next, &stats);
            obs.event(t_next, &stats, &next);
        }
        stats = next;
        t = t_next;
    }
}

/// Standard exponential by inversion; the uniform is mapped into (0, 1] so
/// the result is finite.
fn exponential(rng: &mut SimRng) -> f64 {
    -(1.0 - rng.random::<f64>()).ln()
}

/// One row of a recorded time series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridRow {
    pub t: f64,
    pub z: f64,
    pub rho2: f64,
    pub rho3: f64,
    /// `|rho_2 - rho_1^2|`
    pub gap2: f64,
    pub events: u64,
}

/// Sample-and-hold record of one run on a fixed time grid.
#[derive(Debug, Clone, Default)]
pub struct TimeSeriesRecord {
    pub rows: Vec<GridRow>,
}

/// Records the state at each grid time (the path is right-continuous, so the
/// value at a grid point is the state of the segment containing it).
pub struct GridRecorder {
    grid: Vec<f64>,
    next: usize,
    events: u64,
    rows: Vec<GridRow>,
}

impl GridRecorder {
    /// `grid` must be sorted strictly increasing; times beyond the run
    /// horizon are simply never filled.
    pub fn new(grid: &[f64]) -> Self {
        debug_assert!(grid.windows(2).all(|w| w[0] < w[1]));
        Self {
            grid: grid.to_vec(),
            next: 0,
            events: 0,
            rows: Vec::with_capacity(grid.len()),
        }
    }

    pub fn into_record(self) -> TimeSeriesRecord {
        TimeSeriesRecord { rows: self.rows }
    }

    fn emit(&mut self, t: f64, stats: &StateStats) {
        self.rows.push(GridRow {
            t,
            z: stats.z,
            rho2: stats.rho2,
            rho3: stats.rho3,
            gap2: stats.gap_abs(),
            events: self.events,
        });
    }
}

impl Observer for GridRecorder {
    fn segment(&mut self, t0: f64, t1: f64, stats: &StateStats) {
        while self.next < self.grid.len() && self.grid[self.next] < t1 {
            if self.grid[self.next] >= t0 {
                let t = self.grid[self.next];
                self.emit(t, stats);
            }
            self.next += 1;
        }
    }

    fn event(&mut self, _t: f64, _prev: &StateStats, _next: &StateStats) {
        self.events += 1;
    }

    fn finish(&mut self, t_end: f64, stats: &StateStats) {
        while self.next < self.grid.len() && self.grid[self.next] <= t_end {
            let t = self.grid[self.next];
            self.emit(t, stats);
            self.next += 1;
        }
    }
}

/// Build the effective recording grid: always contains 0 and `t_end`, plus
/// any requested interior times, sorted and deduplicated.
pub fn recording_grid(requested: &[f64], t_end: f64) -> Vec<f64> {
    let mut grid: Vec<f64> = std::iter::once(0.0)
        .chain(requested.iter().copied().filter(|&t| t > 0.0 && t < t_end))
        .chain(std::iter::once(t_end).filter(|&t| t > 0.0))
        .collect();
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
    grid.dedup();
    grid
}
