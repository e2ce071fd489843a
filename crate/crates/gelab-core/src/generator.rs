//! Exact finite-population generator applied to moment observables.
//!
//! States live on the type histogram. The generator of the jump dynamics is
//! applied by brute-force enumeration of every (dying type, offspring count)
//! pair with its exact rational rate, so closed-form identities can be
//! checked with zero tolerance. All arithmetic is generic over a scalar that
//! is either `BigRational` (exact) or `f64` (fast, for spot checks).

use crate::error::ModelError;
use crate::model::Population;
use crate::rng::SimRng;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use rand::Rng;
use std::ops::{Add, Div, Mul, Neg, Sub};

/// Scalar field for generator arithmetic.
pub trait GenScalar:
    Clone
    + PartialEq
    + Zero
    + One
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn from_ratio(num: u128, den: u128) -> Self;

    fn from_u64(v: u64) -> Self {
        Self::from_ratio(v as u128, 1)
    }

    fn abs_value(&self) -> Self;
}

impl GenScalar for BigRational {
    fn from_ratio(num: u128, den: u128) -> Self {
        BigRational::new(BigInt::from(num), BigInt::from(den))
    }

    fn abs_value(&self) -> Self {
        self.abs()
    }
}

impl GenScalar for f64 {
    fn from_ratio(num: u128, den: u128) -> Self {
        num as f64 / den as f64
    }

    fn abs_value(&self) -> Self {
        f64::abs(*self)
    }
}

fn big_ratio(num: u128, den: u128) -> BigRational {
    GenScalar::from_ratio(num, den)
}

/// Exact binomial coefficient; the running product is a binomial coefficient
/// at every step, so each division is exact.
fn binom(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for i in 0..k {
        c = c * (n - i) as u128 / (i + 1) as u128;
    }
    c
}

/// Population state as a type histogram, for exact generator work.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExactState {
    hist: Vec<u64>,
    n: u64,
}

/// Largest supported type; keeps the `2^(k+l)` rate denominators inside
/// `u128`.
pub const MAX_EXACT_TYPE: usize = 63;

impl ExactState {
    pub fn from_histogram(hist: Vec<u64>) -> Result<Self, ModelError> {
        let mut hist = hist;
        while hist.len() > 1 && *hist.last().unwrap() == 0 {
            hist.pop();
        }
        let n: u64 = hist.iter().sum();
        if hist.is_empty() || n == 0 {
            return Err(ModelError::BadExactState(
                "histogram has no individuals".into(),
            ));
        }
        if hist.len() - 1 > MAX_EXACT_TYPE {
            return Err(ModelError::BadExactState(format!(
                "support max {} exceeds {MAX_EXACT_TYPE}",
                hist.len() - 1
            )));
        }
        Ok(Self { hist, n })
    }

    pub fn from_population(pop: &Population) -> Result<Self, ModelError> {
        Self::from_histogram(pop.histogram())
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn histogram(&self) -> &[u64] {
        &self.hist
    }

    pub fn support_max(&self) -> usize {
        self.hist.len() - 1
    }

    pub fn count(&self, k: usize) -> u64 {
        self.hist.get(k).copied().unwrap_or(0)
    }

    /// State after one individual of type `from` becomes type `to`.
    pub fn replace(&self, from: usize, to: usize) -> ExactState {
        debug_assert!(self.count(from) > 0);
        let mut hist = self.hist.clone();
        if to >= hist.len() {
            hist.resize(to + 1, 0);
        }
        hist[from] -= 1;
        hist[to] += 1;
        while hist.len() > 1 && *hist.last().unwrap() == 0 {
            hist.pop();
        }
        ExactState { hist, n: self.n }
    }

    /// j-th factorial moment of the empirical type distribution.
    pub fn rho<S: GenScalar>(&self, j: u32) -> S {
        let mut total: u128 = 0;
        for (k, &c) in self.hist.iter().enumerate() {
            if c == 0 || (k as u32) < j {
                continue;
            }
            let mut f: u128 = 1;
            for i in 0..j {
                f *= (k as u128) - i as u128;
            }
            total += f * c as u128;
        }
        S::from_ratio(total, self.n as u128)
    }

    /// `sum_k (c_k / N) (1 - s)^k`.
    pub fn psi<S: GenScalar>(&self, s: &S) -> S {
        let base = S::one() - s.clone();
        let mut power = S::one();
        let mut total = S::zero();
        for &c in &self.hist {
            if c != 0 {
                total = total + S::from_ratio(c as u128, self.n as u128) * power.clone();
            }
            power = power * base.clone();
        }
        total
    }
}

/// One enumerated transition: an individual of type `from` dies and is
/// replaced by an offspring of type `to`, at rate `rate`.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpTerm<S> {
    pub from: usize,
    pub to: usize,
    pub rate: S,
}

/// Every transition rate out of `x`, including the null ones with
/// `from == to`. The offspring law mixes `Binomial(k + l, 1/2)` over two
/// independent uniform parent types; the dying type is independent of it.
pub fn jump_rates<S: GenScalar>(x: &ExactState) -> Vec<JumpTerm<S>> {
    let n = x.n() as u128;
    let smax = x.support_max();
    let mut offspring = vec![S::zero(); 2 * smax + 1];
    for (k, &ck) in x.histogram().iter().enumerate() {
        if ck == 0 {
            continue;
        }
        for (l, &cl) in x.histogram().iter().enumerate() {
            if cl == 0 {
                continue;
            }
            let pair = S::from_ratio(ck as u128 * cl as u128, n * n * (1u128 << (k + l)));
            for (m, slot) in offspring.iter_mut().enumerate().take(k + l + 1) {
                *slot = slot.clone() + pair.clone() * S::from_ratio(binom(k + l, m), 1);
            }
        }
    }
    let mut terms = Vec::new();
    for (from, &c) in x.histogram().iter().enumerate() {
        if c == 0 {
            continue;
        }
        let victim = S::from_ratio(c as u128 * n, 2);
        for (to, b) in offspring.iter().enumerate() {
            terms.push(JumpTerm {
                from,
                to,
                rate: victim.clone() * b.clone(),
            });
        }
    }
    terms
}

/// Sum of all transition rates; equals `N^2 / 2` exactly.
pub fn total_jump_rate<S: GenScalar>(x: &ExactState) -> S {
    jump_rates::<S>(x)
        .into_iter()
        .fold(S::zero(), |acc, term| acc + term.rate)
}

/// Apply the generator to an observable by exhaustive enumeration:
/// `sum over transitions of rate * (f(x') - f(x))`.
pub fn apply_generator<S: GenScalar>(x: &ExactState, f: &dyn Fn(&ExactState) -> S) -> S {
    let fx = f(x);
    let mut total = S::zero();
    for term in jump_rates::<S>(x) {
        if term.from == term.to {
            continue;
        }
        let y = x.replace(term.from, term.to);
        total = total + term.rate * (f(&y) - fx.clone());
    }
    total
}

/// The moment observables whose generator images have closed forms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IdentityTag {
    Rho1,
    Rho1Squared,
    Rho2,
    Rho3,
    Rho2Rho1,
    Rho1Cubed,
}

impl IdentityTag {
    pub const ALL: [IdentityTag; 6] = [
        IdentityTag::Rho1,
        IdentityTag::Rho1Squared,
        IdentityTag::Rho2,
        IdentityTag::Rho3,
        IdentityTag::Rho2Rho1,
        IdentityTag::Rho1Cubed,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            IdentityTag::Rho1 => "rho1",
            IdentityTag::Rho1Squared => "rho1_sq",
            IdentityTag::Rho2 => "rho2",
            IdentityTag::Rho3 => "rho3",
            IdentityTag::Rho2Rho1 => "rho2_rho1",
            IdentityTag::Rho1Cubed => "rho1_cubed",
        }
    }

    pub fn parse(name: &str) -> Option<IdentityTag> {
        Self::ALL.into_iter().find(|t| t.name() == name)
    }

    pub fn observable<S: GenScalar>(&self, x: &ExactState) -> S {
        let r1 = x.rho::<S>(1);
        match self {
            IdentityTag::Rho1 => r1,
            IdentityTag::Rho1Squared => r1.clone() * r1,
            IdentityTag::Rho2 => x.rho(2),
            IdentityTag::Rho3 => x.rho(3),
            IdentityTag::Rho2Rho1 => x.rho::<S>(2) * r1,
            IdentityTag::Rho1Cubed => r1.clone() * r1.clone() * r1,
        }
    }

    /// Closed form of the generator applied to the observable.
    pub fn closed_form<S: GenScalar>(&self, x: &ExactState) -> S {
        let n = x.n();
        let r1 = x.rho::<S>(1);
        let r2 = x.rho::<S>(2);
        let r1sq = r1.clone() * r1.clone();
        match self {
            IdentityTag::Rho1 => S::zero(),
            IdentityTag::Rho1Squared => r1 + S::from_ratio(3, 4) * (r2 - r1sq),
            IdentityTag::Rho2 => S::from_ratio(n as u128, 4) * (r1sq - r2),
            IdentityTag::Rho3 => {
                let r3 = x.rho::<S>(3);
                S::from_ratio(3 * n as u128, 8) * (r2 * r1 - r3)
            }
            IdentityTag::Rho2Rho1 => {
                let r3 = x.rho::<S>(3);
                S::from_ratio((n - 1) as u128, 4) * r1.clone() * (r1sq.clone() - r2.clone())
                    + S::from_ratio(3, 2) * r2.clone()
                    + S::from_ratio(1, 2) * r1sq
                    + S::from_ratio(5, 8) * r3
                    - S::from_ratio(5, 8) * r2 * r1
            }
            IdentityTag::Rho1Cubed => {
                let r3 = x.rho::<S>(3);
                let r1cu = r1sq.clone() * r1.clone();
                S::from_u64(3) * r1sq.clone()
                    + S::from_ratio(9, 4) * (r2.clone() * r1.clone() - r1cu.clone())
                    + S::from_ratio(1, n as u128)
                        * (S::from_ratio(9, 8) * r2.clone() * r1
                            - S::from_ratio(3, 8) * r3
                            - S::from_ratio(3, 4) * r1cu
                            + S::from_ratio(3, 4) * r1sq
                            - S::from_ratio(3, 4) * r2)
            }
        }
    }
}

/// Result of one exact identity check.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentityCheck {
    pub lhs: BigRational,
    pub rhs: BigRational,
    pub abs_diff: BigRational,
}

impl IdentityCheck {
    pub fn holds(&self) -> bool {
        self.abs_diff.is_zero()
    }

    fn of(lhs: BigRational, rhs: BigRational) -> Self {
        let abs_diff = (lhs.clone() - rhs.clone()).abs();
        Self { lhs, rhs, abs_diff }
    }
}

/// Brute-force the generator on an observable and compare with its closed
/// form, in exact arithmetic.
pub fn check_identity(tag: IdentityTag, x: &ExactState) -> IdentityCheck {
    let lhs = apply_generator(x, &|y| tag.observable::<BigRational>(y));
    IdentityCheck::of(lhs, tag.closed_form(x))
}

/// Check the scale decomposition of the generator on a product of
/// generating directions `f = prod_j psi_{s_j}`, for up to three factors:
/// the brute-force image must equal `sum_{i=1..l} N^{2-i} G_{2-i} f`.
pub fn psi_decomposition_check(
    x: &ExactState,
    s: &[BigRational],
) -> Result<IdentityCheck, ModelError> {
    let ell = s.len();
    if ell == 0 || ell > 3 {
        return Err(ModelError::TooManyPsiFactors(ell));
    }
    for sj in s {
        if sj <= &BigRational::zero() || sj > &BigRational::one() {
            return Err(ModelError::BadExactState(format!(
                "psi direction {sj} outside (0, 1]"
            )));
        }
    }
    let f = |y: &ExactState| {
        s.iter()
            .fold(BigRational::one(), |acc, sj| acc * y.psi::<BigRational>(sj))
    };
    let lhs = apply_generator(x, &f);
    let n = x.n() as u128;
    let mut rhs = BigRational::zero();
    for i in 1..=ell {
        let weight = match i {
            1 => big_ratio(n, 1),
            2 => BigRational::one(),
            _ => big_ratio(1, n),
        };
        rhs += weight * g_level(x, s, i);
    }
    Ok(IdentityCheck::of(lhs, rhs))
}

/// The order-`N^{2-i}` piece of the generator on a psi product: a sum over
/// index subsets `J` of size `i` of the untouched factors times an
/// inclusion-exclusion over `K` inside `J`, and the whole thing halved.
fn g_level(x: &ExactState, s: &[BigRational], i: usize) -> BigRational {
    let ell = s.len();
    let one = BigRational::one();
    let mut total = BigRational::zero();
    for mask in 0u32..(1 << ell) {
        if mask.count_ones() as usize != i {
            continue;
        }
        let mut outside = BigRational::one();
        for (j, sj) in s.iter().enumerate() {
            if mask & (1 << j) == 0 {
                outside *= x.psi::<BigRational>(sj);
            }
        }
        let mut inner = BigRational::zero();
        let mut sub = mask;
        loop {
            let mut p_k = one.clone();
            let mut p_rest = one.clone();
            for (j, sj) in s.iter().enumerate() {
                if mask & (1 << j) != 0 {
                    let factor = one.clone() - sj.clone();
                    if sub & (1 << j) != 0 {
                        p_k *= factor;
                    } else {
                        p_rest *= factor;
                    }
                }
            }
            let half_arg = (one.clone() - p_k) / big_ratio(2, 1);
            let v = x.psi::<BigRational>(&half_arg);
            let term = v.clone() * v * x.psi::<BigRational>(&(one.clone() - p_rest));
            if (mask ^ sub).count_ones() % 2 == 0 {
                inner += term;
            } else {
                inner -= term;
            }
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & mask;
        }
        total += outside * inner;
    }
    total / big_ratio(2, 1)
}

/// Evaluate `sum_k coeffs[k] z^k` by Horner's rule.
fn poly_eval(coeffs: &[BigRational], z: &BigRational) -> BigRational {
    coeffs
        .iter()
        .rev()
        .fold(BigRational::zero(), |acc, c| acc * z.clone() + c.clone())
}

/// Exact defect of the diffusion approximation on a polynomial observable of
/// the mean: `|G(g . rho1) - (1/2)(rho1 + (3/4)(rho2 - rho1^2)) g''(rho1)|`.
/// Supports degree up to four.
pub fn diffusion_residual(
    x: &ExactState,
    g_coeffs: &[BigRational],
) -> Result<BigRational, ModelError> {
    if g_coeffs.len() > 5 {
        return Err(ModelError::BadPolyDegree(g_coeffs.len() - 1));
    }
    if g_coeffs.is_empty() {
        return Ok(BigRational::zero());
    }
    let lhs = apply_generator(x, &|y: &ExactState| {
        poly_eval(g_coeffs, &y.rho::<BigRational>(1))
    });
    let r1 = x.rho::<BigRational>(1);
    let r2 = x.rho::<BigRational>(2);
    let variance_coeff = r1.clone() + big_ratio(3, 4) * (r2 - r1.clone() * r1.clone());
    let second_deriv: Vec<BigRational> = g_coeffs
        .iter()
        .enumerate()
        .skip(2)
        .map(|(k, c)| big_ratio((k * (k - 1)) as u128, 1) * c.clone())
        .collect();
    let gpp = poly_eval(&second_deriv, &r1);
    let rhs = big_ratio(1, 2) * variance_coeff * gpp;
    Ok((lhs - rhs).abs())
}

/// Seeded random histogram state: `N` uniform in `n_range`, each
/// individual's type uniform in `0..=max_type`.
pub fn random_state(
    rng: &mut SimRng,
    n_range: std::ops::RangeInclusive<u64>,
    max_type: usize,
) -> Result<ExactState, ModelError> {
    let n = rng.random_range(n_range);
    let mut hist = vec![0u64; max_type + 1];
    for _ in 0..n {
        hist[rng.random_range(0..=max_type)] += 1;
    }
    ExactState::from_histogram(hist)
}
