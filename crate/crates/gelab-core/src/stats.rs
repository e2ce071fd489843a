//! Moment functionals, path functionals, and distribution distances.

use crate::model::TypeDistribution;
use crate::sim::{Observer, StateStats};

/// j-th factorial moment `sum_k w_k * k(k-1)...(k-j+1)` of a type
/// distribution. `j = 0` gives the total mass.
pub fn factorial_moment(dist: &TypeDistribution, j: usize) -> f64 {
    dist.weights()
        .iter()
        .enumerate()
        .map(|(k, &w)| {
            let mut prod = w;
            for i in 0..j {
                prod *= (k as f64) - (i as f64);
            }
            prod
        })
        .sum()
}

/// Value of the probability generating functional direction
/// `sum_k w_k (1-s)^k` for `s` in `[0, 1]`.
pub fn generating_value(dist: &TypeDistribution, s: f64) -> f64 {
    assert!((0.0..=1.0).contains(&s), "s must lie in [0, 1], got {s}");
    let base = 1.0 - s;
    let mut power = 1.0;
    let mut total = 0.0;
    for &w in dist.weights() {
        total += w * power;
        power *= base;
    }
    total
}

/// `|rho_2 - rho_1^2|`, the distance of the second factorial moment from its
/// Poisson value.
pub fn poissonization_gap(dist: &TypeDistribution) -> f64 {
    let r1 = factorial_moment(dist, 1);
    let r2 = factorial_moment(dist, 2);
    (r2 - r1 * r1).abs()
}

/// Total-variation distance between a type distribution and the Poisson law
/// with the same mean. The Poisson pmf is walked until it is exhausted
/// (below 1e-12 past the mode) and past the distribution's support; the
/// remaining Poisson tail mass enters the sum exactly.
pub fn tv_to_poisson(dist: &TypeDistribution) -> f64 {
    let lambda = factorial_moment(dist, 1);
    let support_max = dist.support_max();
    let mut p = (-lambda).exp();
    let mut covered = 0.0;
    let mut diff = 0.0;
    let mut k = 0usize;
    loop {
        diff += (dist.weight(k) - p).abs();
        covered += p;
        if k >= support_max && (k as f64) > lambda && p < 1e-12 {
            break;
        }
        k += 1;
        p *= lambda / k as f64;
    }
    let tail = (1.0 - covered).max(0.0);
    0.5 * (diff + tail)
}

/// Running integral of `e^{-s} f(X_s) ds` over a piecewise-constant path,
/// together with `sup |f|` along the path for tail bounds.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct OccupationAccumulator {
    integral: f64,
    sup_abs: f64,
}

impl OccupationAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Add the exact contribution of a segment on which `f` equals `value`.
    pub fn update(&mut self, t0: f64, t1: f64, value: f64) {
        debug_assert!(t1 >= t0 && t0 >= 0.0);
        self.integral += value * ((-t0).exp() - (-t1).exp());
        self.sup_abs = self.sup_abs.max(value.abs());
    }

    /// Integral value if the current segment were cut at `t`.
    pub fn value_at(&self, t0: f64, t: f64, value: f64) -> f64 {
        self.integral + value * ((-t0).exp() - (-t).exp())
    }

    pub fn integral(&self) -> f64 {
        self.integral
    }

    pub fn sup_abs(&self) -> f64 {
        self.sup_abs
    }

    /// Bound on the neglected mass beyond `t_end`: `sup|f| * e^{-t_end}`.
    pub fn tail_bound(&self, t_end: f64) -> f64 {
        self.sup_abs * (-t_end).exp()
    }

    /// Fold another accumulator in (integrals add, sups combine), used for
    /// order-deterministic cross-replicate reductions.
    pub fn merge(&mut self, other: &OccupationAccumulator) {
        self.integral += other.integral;
        self.sup_abs = self.sup_abs.max(other.sup_abs);
    }
}

/// Realized and compensated quadratic variation of the mean-count path.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct QuadraticVariationTracker {
    sum_sq: f64,
    compensator: f64,
}

impl QuadraticVariationTracker {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_jump(&mut self, dz: f64) {
        self.sum_sq += dz * dz;
    }

    /// Accrue the predictable part over a segment of length `dt` on which
    /// the state has mean `z` and signed gap `rho_2 - rho_1^2 = gap`. The
    /// integrand `z + (3/4) gap` is half the mean squared count change over
    /// one reproduction event, so it is nonnegative on every state.
    pub fn accrue(&mut self, z: f64, gap_signed: f64, dt: f64) {
        self.compensator += (z + 0.75 * gap_signed) * dt;
    }

    pub fn sum_sq(&self) -> f64 {
        self.sum_sq
    }

    pub fn compensator(&self) -> f64 {
        self.compensator
    }
}

/// Observer that tracks the occupation integral of the Poissonization gap
/// and the quadratic variation of the mean, sampling both on a grid.
pub struct PathTracker {
    grid: Vec<f64>,
    next: usize,
    pub occ_gap: OccupationAccumulator,
    pub qv: QuadraticVariationTracker,
    pub rows: Vec<AuxRow>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuxRow {
    pub t: f64,
    pub occ_gap2: f64,
    pub qv_sum: f64,
    pub qv_comp: f64,
}

impl PathTracker {
    pub fn new(grid: &[f64]) -> Self {
        Self {
            grid: grid.to_vec(),
            next: 0,
            occ_gap: OccupationAccumulator::new(),
            qv: QuadraticVariationTracker::new(),
            rows: Vec::with_capacity(grid.len()),
        }
    }
}

impl Observer for PathTracker {
    fn segment(&mut self, t0: f64, t1: f64, stats: &StateStats) {
        let gap2 = stats.gap_abs();
        let integrand = stats.z + 0.75 * stats.gap;
        while self.next < self.grid.len() && self.grid[self.next] < t1 {
            let g = self.grid[self.next];
            if g >= t0 {
                self.rows.push(AuxRow {
                    t: g,
                    occ_gap2: self.occ_gap.value_at(t0, g, gap2),
                    qv_sum: self.qv.sum_sq(),
                    qv_comp: self.qv.compensator() + integrand * (g - t0),
                });
            }
            self.next += 1;
        }
        self.occ_gap.update(t0, t1, gap2);
        self.qv.accrue(stats.z, stats.gap, t1 - t0);
    }

    fn event(&mut self, _t: f64, prev: &StateStats, next: &StateStats) {
        self.qv.add_jump(next.z - prev.z);
    }

    fn finish(&mut self, t_end: f64, _stats: &StateStats) {
        while self.next < self.grid.len() && self.grid[self.next] <= t_end {
            self.rows.push(AuxRow {
                t: self.grid[self.next],
                occ_gap2: self.occ_gap.integral(),
                qv_sum: self.qv.sum_sq(),
                qv_comp: self.qv.compensator(),
            });
            self.next += 1;
        }
    }
}

/// Closed-form solution of the second-moment recursion: the expectation of
/// `rho_1^2 - rho_2` started from `e0` relaxes to `4z / (N + 3)` at rate
/// `(N + 3) / 4`, where `z` is the (conserved) mean.
pub fn second_moment_ode_solution(n: usize, t: f64, e0: f64, z: f64) -> f64 {
    let rate = (n as f64 + 3.0) / 4.0;
    let limit = 4.0 * z / (n as f64 + 3.0);
    let decay = (-rate * t).exp();
    decay * e0 + (1.0 - decay) * limit
}

/// Two-sample Kolmogorov-Smirnov statistic `sup |F_a - F_b|`.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    assert!(!a.is_empty() && !b.is_empty());
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_by(f64::total_cmp);
    sb.sort_by(f64::total_cmp);
    let (n, m) = (sa.len() as f64, sb.len() as f64);
    let (mut ia, mut ib) = (0usize, 0usize);
    let mut d = 0.0f64;
    while ia < sa.len() || ib < sb.len() {
        let v = match (sa.get(ia), sb.get(ib)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => break,
        };
        while ia < sa.len() && sa[ia] == v {
            ia += 1;
        }
        while ib < sb.len() && sb[ib] == v {
            ib += 1;
        }
        d = d.max((ia as f64 / n - ib as f64 / m).abs());
    }
    d
}

/// Asymptotic two-sample KS p-value via the Kolmogorov distribution of
/// `d * sqrt(nm / (n + m))`.
pub fn ks_pvalue(d: f64, n: usize, m: usize) -> f64 {
    let ne = (n as f64) * (m as f64) / ((n + m) as f64);
    kolmogorov_survival(d * ne.sqrt())
}

/// Survival function of the Kolmogorov distribution, using the
/// theta-function form for small arguments and the alternating series
/// otherwise.
fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        let x = (-std::f64::consts::PI * std::f64::consts::PI / (8.0 * lambda * lambda)).exp();
        let cdf = (2.0 * std::f64::consts::PI).sqrt() / lambda
            * (x + x.powi(9) + x.powi(25) + x.powi(49));
        (1.0 - cdf).clamp(0.0, 1.0)
    } else {
        let mut total = 0.0;
        let mut sign = 1.0;
        for j in 1..=100 {
            let term = 2.0 * (-2.0 * (j as f64) * (j as f64) * lambda * lambda).exp();
            total += sign * term;
            if term < 1e-16 {
                break;
            }
            sign = -sign;
        }
        total.clamp(0.0, 1.0)
    }
}

/// First Wasserstein distance between two empirical distributions, computed
/// as the area between the ECDFs; sample sizes may differ.
pub fn wasserstein1(a: &[f64], b: &[f64]) -> f64 {
    assert!(!a.is_empty() && !b.is_empty());
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_by(f64::total_cmp);
    sb.sort_by(f64::total_cmp);
    let (n, m) = (sa.len() as f64, sb.len() as f64);
    let (mut ia, mut ib) = (0usize, 0usize);
    let mut prev = f64::NAN;
    let mut area = 0.0;
    while ia < sa.len() || ib < sb.len() {
        let v = match (sa.get(ia), sb.get(ib)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => break,
        };
        if prev.is_finite() && v > prev {
            area += (ia as f64 / n - ib as f64 / m).abs() * (v - prev);
        }
        while ia < sa.len() && sa[ia] == v {
            ia += 1;
        }
        while ib < sb.len() && sb[ib] == v {
            ib += 1;
        }
        prev = v;
    }
    area
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceReport {
    pub ks: f64,
    pub ks_p: f64,
    pub w1: f64,
}

pub fn distance_suite(a: &[f64], b: &[f64]) -> DistanceReport {
    let ks = ks_statistic(a, b);
    DistanceReport {
        ks,
        ks_p: ks_pvalue(ks, a.len(), b.len()),
        w1: wasserstein1(a, b),
    }
}
