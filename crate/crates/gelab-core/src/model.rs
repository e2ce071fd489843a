//! Population state for the bi-parental Moran model.
//!
//! A population is N individuals, each carrying a non-negative number of
//! genetic elements (GEs). The empirical type distribution
//! `x_k = #{i : count_i = k} / N` lives on the lattice
//! `E_N = {x : N x_k integer}`; most statistics of interest are the factorial
//! moments `rho_j(x) = sum_k k(k-1)...(k-j+1) x_k`, which we track through the
//! raw power sums `S_p = sum_i count_i^p` so that every reproduction event
//! updates them in O(1).

use crate::error::ModelError;
use rand::Rng;

/// Raw power sums `S_p = sum_i count_i^p` for p = 1..4.
///
/// Kept in 128-bit integers with checked arithmetic: an overflow is reported,
/// never wrapped. (`S_4` supports variance estimates of second moments.)
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PowerSums {
    pub s1: u128,
    pub s2: u128,
    pub s3: u128,
    pub s4: u128,
}

impl PowerSums {
    fn contribution(count: u32) -> Result<[u128; 4], ModelError> {
        let c = count as u128;
        let c2 = c
            .checked_mul(c)
            .ok_or(ModelError::PowerSumOverflow { count })?;
        let c3 = c2
            .checked_mul(c)
            .ok_or(ModelError::PowerSumOverflow { count })?;
        let c4 = c3
            .checked_mul(c)
            .ok_or(ModelError::PowerSumOverflow { count })?;
        Ok([c, c2, c3, c4])
    }

    fn add(&mut self, count: u32) -> Result<(), ModelError> {
        let [c, c2, c3, c4] = Self::contribution(count)?;
        self.s1 = self
            .s1
            .checked_add(c)
            .ok_or(ModelError::PowerSumOverflow { count })?;
        self.s2 = self
            .s2
            .checked_add(c2)
            .ok_or(ModelError::PowerSumOverflow { count })?;
        self.s3 = self
            .s3
            .checked_add(c3)
            .ok_or(ModelError::PowerSumOverflow { count })?;
        self.s4 = self
            .s4
            .checked_add(c4)
            .ok_or(ModelError::PowerSumOverflow { count })?;
        Ok(())
    }

    fn remove(&mut self, count: u32) -> Result<(), ModelError> {
        let [c, c2, c3, c4] = Self::contribution(count)?;
        self.s1 = self
            .s1
            .checked_sub(c)
            .ok_or(ModelError::PowerSumOverflow { count })?;
        self.s2 = self
            .s2
            .checked_sub(c2)
            .ok_or(ModelError::PowerSumOverflow { count })?;
        self.s3 = self
            .s3
            .checked_sub(c3)
            .ok_or(ModelError::PowerSumOverflow { count })?;
        self.s4 = self
            .s4
            .checked_sub(c4)
            .ok_or(ModelError::PowerSumOverflow { count })?;
        Ok(())
    }
}

/// N individuals with their GE counts and incrementally maintained power sums.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Population {
    counts: Vec<u32>,
    sums: PowerSums,
}

impl Population {
    pub fn new(counts: Vec<u32>) -> Result<Self, ModelError> {
        if counts.is_empty() {
            return Err(ModelError::EmptyPopulation);
        }
        let mut sums = PowerSums::default();
        for &c in &counts {
            sums.add(c)?;
        }
        Ok(Self { counts, sums })
    }

    pub fn n(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn count(&self, individual: usize) -> u32 {
        self.counts[individual]
    }

    /// Replace one individual's count, updating the power sums in O(1).
    pub fn set_count(&mut self, individual: usize, new_count: u32) -> Result<(), ModelError> {
        let old = self.counts[individual];
        if old == new_count {
            return Ok(());
        }
        self.sums.remove(old)?;
        self.sums.add(new_count)?;
        self.counts[individual] = new_count;
        Ok(())
    }

    pub fn power_sums(&self) -> PowerSums {
        self.sums
    }

    /// The mean GE count per individual, `Z = S_1 / N`.
    pub fn mean(&self) -> f64 {
        self.sums.s1 as f64 / self.n() as f64
    }

    /// Recompute the power sums from scratch (consistency oracle for the
    /// incremental bookkeeping).
    pub fn recompute_power_sums(&self) -> Result<PowerSums, ModelError> {
        let mut sums = PowerSums::default();
        for &c in &self.counts {
            sums.add(c)?;
        }
        Ok(sums)
    }

    /// Integer numerators of the first three factorial moments:
    /// `N * rho_1 = S_1`, `N * rho_2 = S_2 - S_1`, `N * rho_3 = S_3 - 3 S_2 + 2 S_1`.
    ///
    /// All three are non-negative because every per-individual contribution
    /// `k(k-1)...(k-j+1)` is.
    pub fn factorial_numerators(&self) -> (u128, u128, u128) {
        let PowerSums { s1, s2, s3, .. } = self.sums;
        (s1, s2 - s1, s3 + 2 * s1 - 3 * s2)
    }

    /// Factorial moments `rho_1, rho_2, rho_3` as floats.
    pub fn factorial_moments(&self) -> (f64, f64, f64) {
        let (n1, n2, n3) = self.factorial_numerators();
        let n = self.n() as f64;
        (n1 as f64 / n, n2 as f64 / n, n3 as f64 / n)
    }

    /// Signed Poissonization gap `rho_2 - rho_1^2 = (N(S_2 - S_1) - S_1^2) / N^2`,
    /// computed from exact integers before the final division.
    pub fn signed_gap(&self) -> f64 {
        let n = self.n() as i128;
        let s1 = self.sums.s1 as i128;
        let s2 = self.sums.s2 as i128;
        let numer = n * (s2 - s1) - s1 * s1;
        numer as f64 / (n * n) as f64
    }

    pub fn max_count(&self) -> u32 {
        self.counts.iter().copied().max().unwrap_or(0)
    }

    pub fn min_count(&self) -> u32 {
        self.counts.iter().copied().min().unwrap_or(0)
    }

    /// Histogram of counts: entry k is the number of individuals of type k.
    pub fn histogram(&self) -> Vec<u64> {
        let mut hist = vec![0u64; self.max_count() as usize + 1];
        for &c in &self.counts {
            hist[c as usize] += 1;
        }
        hist
    }
}

/// How reproduction parents are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ParentSampling {
    /// Two independent uniform picks; the pair may coincide, and may include
    /// the dying individual. This matches the product form of the jump rates.
    #[default]
    WithReplacement,
    /// Force the two parents to be distinct individuals (sensitivity variant).
    Distinct,
}

/// Model parameters. The neutral model has `mu = nu = beta = alpha = 0`;
/// extensions add GE acquisition at rate `mu + nu*k` per individual, per-GE
/// loss at rate `beta`, and parent selection with weight `(1 - alpha/N)^k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub n: usize,
    pub mu: f64,
    pub nu: f64,
    pub beta: f64,
    pub alpha: f64,
    pub parent_sampling: ParentSampling,
}

impl ModelParams {
    pub fn neutral(n: usize) -> Self {
        Self {
            n,
            mu: 0.0,
            nu: 0.0,
            beta: 0.0,
            alpha: 0.0,
            parent_sampling: ParentSampling::default(),
        }
    }

    pub fn is_neutral(&self) -> bool {
        self.mu == 0.0 && self.nu == 0.0 && self.beta == 0.0 && self.alpha == 0.0
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.n == 0 {
            return Err(ModelError::EmptyPopulation);
        }
        for (name, value) in [("mu", self.mu), ("nu", self.nu), ("beta", self.beta)] {
            if !value.is_finite() || value < 0.0 {
                return Err(ModelError::InvalidRate { name, value });
            }
        }
        if !self.alpha.is_finite() || self.alpha.abs() >= self.n as f64 {
            return Err(ModelError::AlphaOutOfRange {
                alpha: self.alpha,
                n: self.n,
            });
        }
        Ok(())
    }

    pub fn check_population(&self, pop: &Population) -> Result<(), ModelError> {
        if pop.n() != self.n {
            return Err(ModelError::SizeMismatch {
                params_n: self.n,
                pop_n: pop.n(),
            });
        }
        Ok(())
    }
}

/// Initial condition for a replicate.
#[derive(Debug, Clone, PartialEq)]
pub enum InitSpec {
    /// Deterministic counts, one per individual.
    Explicit(Vec<u32>),
    /// Everyone starts with the same count.
    Delta { value: u32 },
    /// Counts drawn iid from Poisson(lambda) conditioned on `<= truncation`.
    PoissonTruncated { lambda: f64, truncation: u32 },
}

impl InitSpec {
    pub fn validate(&self) -> Result<(), ModelError> {
        if let InitSpec::PoissonTruncated { lambda, truncation } = *self {
            if lambda <= 0.0 || !lambda.is_finite() || truncation == 0 {
                return Err(ModelError::BadPoissonInit { lambda, truncation });
            }
        }
        Ok(())
    }

    /// Mean GE count per individual under this initial law.
    pub fn mean(&self) -> f64 {
        match self {
            InitSpec::Explicit(counts) => {
                counts.iter().map(|&c| c as f64).sum::<f64>() / counts.len() as f64
            }
            InitSpec::Delta { value } => *value as f64,
            InitSpec::PoissonTruncated { lambda, truncation } => {
                law_moments(&truncated_poisson_pmf(*lambda, *truncation)).0
            }
        }
    }

    /// Closed-form `E[rho_1(X_0)^2 - rho_2(X_0)]` for a population of size `n`.
    ///
    /// Deterministic starts give the plug-in value; iid starts add the
    /// `Var(count)/n` fluctuation of the empirical mean:
    /// `E[rho_1^2] = mean^2 + var/n` and `E[rho_2] = E[count(count-1)]`.
    pub fn initial_sq_gap(&self, n: usize) -> f64 {
        match self {
            InitSpec::Explicit(counts) => {
                let m = counts.len() as f64;
                let r1 = counts.iter().map(|&c| c as f64).sum::<f64>() / m;
                let r2 = counts
                    .iter()
                    .map(|&c| c as f64 * (c as f64 - 1.0))
                    .sum::<f64>()
                    / m;
                r1 * r1 - r2
            }
            InitSpec::Delta { value } => {
                let k = *value as f64;
                k * k - k * (k - 1.0)
            }
            InitSpec::PoissonTruncated { lambda, truncation } => {
                let pmf = truncated_poisson_pmf(*lambda, *truncation);
                let (mean, var, fac2) = law_moments(&pmf);
                mean * mean + var / n as f64 - fac2
            }
        }
    }
}

/// Draw an initial population of size `n`.
pub fn init_population<R: Rng + ?Sized>(
    spec: &InitSpec,
    n: usize,
    rng: &mut R,
) -> Result<Population, ModelError> {
    spec.validate()?;
    if n == 0 {
        return Err(ModelError::EmptyPopulation);
    }
    let counts = match spec {
        InitSpec::Explicit(counts) => {
            if counts.len() != n {
                return Err(ModelError::InitLengthMismatch {
                    got: counts.len(),
                    expected: n,
                });
            }
            counts.clone()
        }
        InitSpec::Delta { value } => vec![*value; n],
        InitSpec::PoissonTruncated { lambda, truncation } => {
            let cdf = cumulative(&truncated_poisson_pmf(*lambda, *truncation));
            (0..n)
                .map(|_| invert_cdf(&cdf, rng.random::<f64>()) as u32)
                .collect()
        }
    };
    Population::new(counts)
}

/// pmf of Poisson(lambda) conditioned on values `0..=truncation`.
pub fn truncated_poisson_pmf(lambda: f64, truncation: u32) -> Vec<f64> {
    let mut pmf = Vec::with_capacity(truncation as usize + 1);
    let mut p = (-lambda).exp();
    let mut total = 0.0;
    for k in 0..=truncation {
        pmf.push(p);
        total += p;
        p *= lambda / (k as f64 + 1.0);
    }
    for q in &mut pmf {
        *q /= total;
    }
    pmf
}

/// (mean, variance, second factorial moment) of a pmf on 0..len.
fn law_moments(pmf: &[f64]) -> (f64, f64, f64) {
    let mut mean = 0.0;
    let mut second = 0.0;
    for (k, &p) in pmf.iter().enumerate() {
        mean += k as f64 * p;
        second += (k * k) as f64 * p;
    }
    (mean, second - mean * mean, second - mean)
}

fn cumulative(pmf: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    pmf.iter()
        .map(|&p| {
            acc += p;
            acc
        })
        .collect()
}

fn invert_cdf(cdf: &[f64], u: f64) -> usize {
    cdf.iter().position(|&c| u < c).unwrap_or(cdf.len() - 1)
}

/// Empirical type distribution `x_k`, the fraction of individuals of type k.
///
/// Constructed from a `Population` the weights are exactly `count_k / N`;
/// free-standing distributions (reference laws, test fixtures) are accepted
/// as long as they are non-negative and sum to 1 within 1e-12.
#[derive(Debug, Clone, PartialEq)]
pub struct TypeDistribution {
    weights: Vec<f64>,
}

impl TypeDistribution {
    pub fn from_population(pop: &Population) -> Self {
        let n = pop.n() as f64;
        let weights = pop.histogram().iter().map(|&c| c as f64 / n).collect();
        Self { weights }
    }

    pub fn from_weights(weights: Vec<f64>) -> Result<Self, ModelError> {
        if weights.is_empty() {
            return Err(ModelError::BadExactState("no weights".into()));
        }
        if weights
            .iter()
            .any(|&w| !(0.0..=1.0).contains(&w) || !w.is_finite())
        {
            return Err(ModelError::BadExactState("weight outside [0, 1]".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(ModelError::BadExactState(format!(
                "weights sum to {total}, not 1"
            )));
        }
        Ok(Self { weights })
    }

    pub fn delta(value: usize) -> Self {
        let mut weights = vec![0.0; value + 1];
        weights[value] = 1.0;
        Self { weights }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, k: usize) -> f64 {
        self.weights.get(k).copied().unwrap_or(0.0)
    }

    /// Largest type with positive weight.
    pub fn support_max(&self) -> usize {
        self.weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{SeedSpec, StreamRole};

    #[test]
    fn power_sums_track_replacements() {
        let mut pop = Population::new(vec![2, 2, 2, 2]).unwrap();
        assert_eq!(
            pop.power_sums(),
            PowerSums {
                s1: 8,
                s2: 16,
                s3: 32,
                s4: 64
            }
        );
        pop.set_count(1, 5).unwrap();
        pop.set_count(3, 0).unwrap();
        assert_eq!(pop.power_sums(), pop.recompute_power_sums().unwrap());
        assert_eq!(pop.power_sums().s1, 2 + 5 + 2);
    }

    #[test]
    fn factorial_numerators_match_histogram_arithmetic() {
        let pop = Population::new(vec![0, 1, 1, 3, 7]).unwrap();
        let hist = pop.histogram();
        let by_hist = |j: u32| -> u128 {
            hist.iter()
                .enumerate()
                .map(|(k, &c)| {
                    let mut f = 1u128;
                    for i in 0..j {
                        f *= (k as u128).saturating_sub(i as u128);
                    }
                    if (k as u32) < j {
                        0
                    } else {
                        f * c as u128
                    }
                })
                .sum()
        };
        let (n1, n2, n3) = pop.factorial_numerators();
        assert_eq!(n1, by_hist(1));
        assert_eq!(n2, by_hist(2));
        assert_eq!(n3, by_hist(3));
    }

    #[test]
    fn delta_start_moments() {
        // All-2 start: rho1 = 2, rho2 = 2, rho3 = 0, gap = 2^2 - 2 = 2.
        let pop = Population::new(vec![2; 10]).unwrap();
        let (r1, r2, r3) = pop.factorial_moments();
        assert_eq!((r1, r2, r3), (2.0, 2.0, 0.0));
        assert_eq!(pop.signed_gap(), r2 - r1 * r1);
        assert_eq!(InitSpec::Delta { value: 2 }.initial_sq_gap(10), 2.0);
    }

    #[test]
    fn truncated_poisson_init_obeys_lln() {
        let spec = InitSpec::PoissonTruncated {
            lambda: 2.0,
            truncation: 30,
        };
        let mut rng = SeedSpec::new(11, 0).stream(StreamRole::Init);
        let pop = init_population(&spec, 1000, &mut rng).unwrap();
        let z = pop.mean();
        // Var(count) ~= 2, so 3 SE = 3*sqrt(2/1000).
        assert!(
            (z - 2.0).abs() < 3.0 * (2.0f64 / 1000.0).sqrt(),
            "sample mean {z}"
        );
        assert!(pop.max_count() <= 30);
    }

    #[test]
    fn truncated_poisson_pmf_is_normalized_and_truncated() {
        let pmf = truncated_poisson_pmf(2.0, 30);
        assert_eq!(pmf.len(), 31);
        assert!((pmf.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // Truncation at 30 removes essentially no mass at lambda = 2.
        assert!((pmf[0] - (-2.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn explicit_init_checks_length() {
        let spec = InitSpec::Explicit(vec![1, 2, 3]);
        let mut rng = SeedSpec::new(0, 0).stream(StreamRole::Init);
        assert!(matches!(
            init_population(&spec, 4, &mut rng),
            Err(ModelError::InitLengthMismatch {
                got: 3,
                expected: 4
            })
        ));
    }

    #[test]
    fn type_distribution_from_population_is_exact() {
        let pop = Population::new(vec![0, 0, 2, 5]).unwrap();
        let x = TypeDistribution::from_population(&pop);
        assert_eq!(x.weight(0), 0.5);
        assert_eq!(x.weight(2), 0.25);
        assert_eq!(x.weight(5), 0.25);
        assert_eq!(x.support_max(), 5);
        // Histogram itself sums to N exactly in integer arithmetic.
        assert_eq!(pop.histogram().iter().sum::<u64>(), 4);
    }

    #[test]
    fn params_validation() {
        let mut p = ModelParams::neutral(10);
        assert!(p.validate().is_ok());
        assert!(p.is_neutral());
        p.alpha = 10.0;
        assert!(matches!(
            p.validate(),
            Err(ModelError::AlphaOutOfRange { .. })
        ));
        p.alpha = -9.5;
        assert!(p.validate().is_ok());
        assert!(!p.is_neutral());
        p.mu = -1.0;
        assert!(matches!(
            p.validate(),
            Err(ModelError::InvalidRate { name: "mu", .. })
        ));
    }

    #[test]
    fn iid_initial_gap_includes_fluctuation_term() {
        let spec = InitSpec::PoissonTruncated {
            lambda: 2.0,
            truncation: 30,
        };
        let n = 20;
        // mean^2 + var/n - fac2 ~= 4 + 2/20 - 4 = 0.1 at lambda = 2.
        let e0 = spec.initial_sq_gap(n);
        assert!((e0 - 0.1).abs() < 1e-6, "e0 = {e0}");
    }
}
