//! Inter-arrival laws, exponential tilting and the free-energy equation.
//!
//! The power-law families are built without evaluating the gamma function:
//! the basic density `K(n) = Γ(n-α) / (-Γ(-α) n!)` satisfies `K(1) = α` and
//! `K(n+1) = K(n) (n-α)/(n+1)`, which is how every routine here generates it.

use std::fmt;

use rug::ops::Pow;
use rug::Float;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::precision::{ln_abs, PrecisionSpec};

/// Tolerance accepted when a user-supplied table does not sum to one.
pub const TABLE_SUM_TOL: f64 = 1e-12;

/// Laws with `m_b` below `1 + DEGENERATE_MEAN_TOL` have no fluctuations.
pub const DEGENERATE_MEAN_TOL: f64 = 1e-12;

/// Precision used for tilted-law scalars when no horizon is known.
pub const SCALAR_BITS: u32 = 128;

#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    Basic { alpha: f64 },
    Shifted { alpha: f64, shift: u32 },
    /// Basic density times `(ln(n+e))^logpow`, renormalized.
    LogCorrected { alpha: f64, logpow: u32 },
    /// Finite head, optionally continued geometrically: `K(n) = K(len) r^(n-len)`.
    Table { probs: Vec<f64>, tail_ratio: Option<f64> },
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Basic { .. } => "basic",
            Family::Shifted { .. } => "shifted",
            Family::LogCorrected { .. } => "logcorrected",
            Family::Table { .. } => "table",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterArrivalLaw {
    family: Family,
    support_start: usize,
    aperiodic: bool,
    /// Normalizer of the log-corrected family (1 otherwise).
    log_norm: f64,
}

impl InterArrivalLaw {
    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn support_start(&self) -> usize {
        self.support_start
    }

    pub fn aperiodic(&self) -> bool {
        self.aperiodic
    }

    /// Tail exponent α of the power-law families.
    pub fn alpha(&self) -> Option<f64> {
        match self.family {
            Family::Basic { alpha }
            | Family::Shifted { alpha, .. }
            | Family::LogCorrected { alpha, .. } => Some(alpha),
            Family::Table { .. } => None,
        }
    }

    pub fn shift(&self) -> u32 {
        match self.family {
            Family::Shifted { shift, .. } => shift,
            _ => 0,
        }
    }

    /// Single-point support: `m_b = support_start` for every tilt.
    pub fn is_degenerate(&self) -> bool {
        match &self.family {
            Family::Table { probs, tail_ratio } => {
                tail_ratio.map_or(true, |r| r == 0.0) && probs.iter().filter(|&&p| p > 0.0).count() == 1
            }
            _ => false,
        }
    }

    /// Last index with positive mass, for finitely supported laws.
    pub fn support_end(&self) -> Option<usize> {
        match &self.family {
            Family::Table { probs, tail_ratio } if tail_ratio.map_or(true, |r| r == 0.0) => {
                probs.iter().rposition(|&p| p > 0.0).map(|i| i + 1)
            }
            _ => None,
        }
    }

    /// `(n0, ρ)` such that `K(n+1) <= ρ K(n)` for every `n >= n0`.
    ///
    /// Drives every truncation bound: the tilted tail beyond `N >= n0` is at
    /// most `K(N+1) e^{-b(N+1)} / (1 - ρ e^{-b})`.
    pub fn ratio_bound(&self) -> (usize, f64) {
        match &self.family {
            Family::Basic { .. } => (1, 1.0),
            Family::Shifted { shift, .. } => (*shift as usize + 1, 1.0),
            Family::LogCorrected { alpha, logpow } => (log_monotone_from(*alpha, *logpow), 1.0),
            Family::Table { probs, tail_ratio } => (probs.len(), tail_ratio.unwrap_or(0.0)),
        }
    }

    /// Mean of the untilted law, when finite.
    pub fn mean(&self) -> Option<f64> {
        match &self.family {
            Family::Table { probs, tail_ratio } => {
                let len = probs.len();
                let head: f64 = probs.iter().enumerate().map(|(i, p)| (i + 1) as f64 * p).sum();
                let tail = match tail_ratio {
                    Some(r) if *r > 0.0 => {
                        let last = probs[len - 1];
                        // sum_{k>=1} (len + k) last r^k
                        last * (len as f64 * r / (1.0 - r) + r / ((1.0 - r) * (1.0 - r)))
                    }
                    _ => 0.0,
                };
                Some(head + tail)
            }
            _ => None,
        }
    }

    /// Iterator over `K(1), K(2), ...` in `f64`.
    pub fn densities(&self) -> Densities<'_> {
        Densities { law: self, n: 0, basic: 0.0 }
    }

    /// `K(n)` for `n = 0..=upto` in `f64`.
    pub fn density_vec(&self, upto: usize) -> Vec<f64> {
        std::iter::once(0.0).chain(self.densities().take(upto)).collect()
    }

    /// Extended-precision generator of `K(1), K(2), ...`.
    pub fn densities_mp(&self, bits: u32) -> MpDensities<'_> {
        MpDensities::new(self, bits)
    }

    /// `K̄(n) = sum_{j>n} K(j)` in `f64`.
    pub fn survival(&self, n: usize) -> f64 {
        match &self.family {
            Family::Basic { alpha } => basic_survival(*alpha, n),
            Family::Shifted { alpha, shift } => {
                let m = *shift as usize;
                if n <= m {
                    1.0
                } else {
                    basic_survival(*alpha, n - m)
                }
            }
            _ => {
                if n == 0 {
                    return 1.0;
                }
                let partial: f64 = self.densities().take(n).sum();
                (1.0 - partial).max(0.0)
            }
        }
    }

    /// `K̄(0..=upto)` in `f64`, sharing one pass over the densities.
    pub fn survival_vec(&self, upto: usize) -> Vec<f64> {
        match &self.family {
            Family::Basic { .. } | Family::Shifted { .. } => (0..=upto).map(|n| self.survival(n)).collect(),
            _ => {
                let mut out = Vec::with_capacity(upto + 1);
                out.push(1.0);
                let mut acc = 0.0;
                for k in self.densities().take(upto) {
                    acc += k;
                    out.push((1.0 - acc).max(0.0));
                }
                out
            }
        }
    }

    /// `sum_n K(n) e^{-bn}` in `f64` (closed form for the basic and shifted
    /// families).
    pub fn laplace(&self, b: f64) -> f64 {
        match &self.family {
            Family::Basic { alpha } => basic_laplace(*alpha, b),
            Family::Shifted { alpha, shift } => (-b * *shift as f64).exp() * basic_laplace(*alpha, b),
            _ => {
                if b == 0.0 {
                    return 1.0;
                }
                let w = (-b).exp();
                let (n0, rho) = self.ratio_bound();
                let mut sum = 0.0;
                let mut wn = 1.0;
                for (i, k) in self.densities().enumerate() {
                    let n = i + 1;
                    wn *= w;
                    sum += k * wn;
                    if let Some(end) = self.support_end() {
                        if n >= end {
                            break;
                        }
                    }
                    if n >= n0 && k * wn * w / (1.0 - rho * w) < 1e-17 * sum {
                        break;
                    }
                }
                sum
            }
        }
    }
}

impl fmt::Display for InterArrivalLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.family {
            Family::Basic { alpha } => write!(f, "basic(alpha={alpha})"),
            Family::Shifted { alpha, shift } => write!(f, "shifted(alpha={alpha}, m={shift})"),
            Family::LogCorrected { alpha, logpow } => write!(f, "logcorrected(alpha={alpha}, j={logpow})"),
            Family::Table { probs, tail_ratio } => match tail_ratio {
                Some(r) => write!(f, "table({} entries, tail ratio {r})", probs.len()),
                None => write!(f, "table({} entries)", probs.len()),
            },
        }
    }
}

fn basic_survival(alpha: f64, n: usize) -> f64 {
    if n == 0 {
        return 1.0;
    }
    // K̄(n) = K(n) (n - α) / α
    let mut k = alpha;
    for i in 1..n {
        k *= (i as f64 - alpha) / (i as f64 + 1.0);
    }
    k * (n as f64 - alpha) / alpha
}

fn basic_laplace(alpha: f64, b: f64) -> f64 {
    // 1 - (1 - e^{-b})^α, written to keep accuracy for small b
    1.0 - (-(-b).exp_m1()).powf(alpha)
}

/// First `n` from which the log-corrected density is nonincreasing.
fn log_monotone_from(alpha: f64, logpow: u32) -> usize {
    let j = logpow as f64;
    let ratio = |n: f64| {
        ((n - alpha) / (n + 1.0)).ln() + j * ((n + 1.0 + std::f64::consts::E).ln().ln() - (n + std::f64::consts::E).ln().ln())
    };
    // The log-ratio is eventually negative; find the last nonnegative one.
    let mut last_bad = 0usize;
    for n in 1..100_000usize {
        if ratio(n as f64) > -1e-15 {
            last_bad = n;
        }
    }
    last_bad + 1
}

/// `f64` density iterator, see [`InterArrivalLaw::densities`].
pub struct Densities<'a> {
    law: &'a InterArrivalLaw,
    n: usize,
    basic: f64,
}

impl Iterator for Densities<'_> {
    type Item = f64;

    fn next(&mut self) -> Option<f64> {
        self.n += 1;
        let n = self.n;
        let step_basic = |basic: &mut f64, i: usize, alpha: f64| {
            if i == 1 {
                *basic = alpha;
            } else {
                *basic *= (i as f64 - 1.0 - alpha) / i as f64;
            }
        };
        let value = match &self.law.family {
            Family::Basic { alpha } => {
                step_basic(&mut self.basic, n, *alpha);
                self.basic
            }
            Family::Shifted { alpha, shift } => {
                let m = *shift as usize;
                if n <= m {
                    0.0
                } else {
                    step_basic(&mut self.basic, n - m, *alpha);
                    self.basic
                }
            }
            Family::LogCorrected { alpha, logpow } => {
                step_basic(&mut self.basic, n, *alpha);
                self.basic * (n as f64 + std::f64::consts::E).ln().powi(*logpow as i32) / self.law.log_norm
            }
            Family::Table { probs, tail_ratio } => {
                if n <= probs.len() {
                    probs[n - 1]
                } else {
                    match tail_ratio {
                        Some(r) => probs[probs.len() - 1] * r.powi((n - probs.len()) as i32),
                        None => 0.0,
                    }
                }
            }
        };
        Some(value)
    }
}

/// Extended-precision density generator; yields `K(1), K(2), ...`.
pub struct MpDensities<'a> {
    law: &'a InterArrivalLaw,
    bits: u32,
    n: usize,
    basic: Float,
    alpha: Float,
    euler: Float,
    log_norm: Float,
    table: Vec<Float>,
    tail_ratio: Float,
}

impl<'a> MpDensities<'a> {
    fn new(law: &'a InterArrivalLaw, bits: u32) -> Self {
        let alpha = Float::with_val(bits, law.alpha().unwrap_or(0.0));
        let mut table = Vec::new();
        let mut tail_ratio = Float::new(bits);
        if let Family::Table { probs, tail_ratio: r } = &law.family {
            // Renormalize in extended precision so the law sums to one at `bits`.
            let mut sum = Float::with_val(bits, 0);
            for p in probs {
                sum += *p;
            }
            if let Some(r) = r {
                tail_ratio = Float::with_val(bits, *r);
                let last = Float::with_val(bits, probs[probs.len() - 1]);
                let one_minus = Float::with_val(bits, 1 - &tail_ratio);
                sum += last * &tail_ratio / one_minus;
            }
            table = probs.iter().map(|p| Float::with_val(bits, p) / &sum).collect();
        }
        MpDensities {
            law,
            bits,
            n: 0,
            basic: Float::new(bits),
            alpha,
            euler: Float::with_val(bits, 1).exp(),
            log_norm: Float::with_val(bits, law.log_norm),
            table,
            tail_ratio,
        }
    }

    fn step_basic(&mut self, i: usize) {
        if i == 1 {
            self.basic.assign_from(&self.alpha);
        } else {
            // K(i) = K(i-1) (i-1-α) / i
            let num = Float::with_val(self.bits, (i - 1) as u64) - &self.alpha;
            self.basic *= num;
            self.basic /= i as u64;
        }
    }
}

trait AssignFrom {
    fn assign_from(&mut self, other: &Float);
}

impl AssignFrom for Float {
    fn assign_from(&mut self, other: &Float) {
        rug::Assign::assign(self, other);
    }
}

impl Iterator for MpDensities<'_> {
    type Item = Float;

    fn next(&mut self) -> Option<Float> {
        self.n += 1;
        let n = self.n;
        let bits = self.bits;
        let value = match &self.law.family {
            Family::Basic { .. } => {
                self.step_basic(n);
                self.basic.clone()
            }
            Family::Shifted { shift, .. } => {
                let m = *shift as usize;
                if n <= m {
                    Float::new(bits)
                } else {
                    self.step_basic(n - m);
                    self.basic.clone()
                }
            }
            Family::LogCorrected { logpow, .. } => {
                let logpow = *logpow;
                self.step_basic(n);
                let l = (Float::with_val(bits, n as u64) + &self.euler).ln();
                Float::with_val(bits, &self.basic * l.pow(logpow)) / &self.log_norm
            }
            Family::Table { probs, tail_ratio } => {
                let len = probs.len();
                if n <= len {
                    self.table[n - 1].clone()
                } else if tail_ratio.is_some() {
                    let r = Float::with_val(bits, (&self.tail_ratio).pow((n - len) as u32));
                    r * &self.table[len - 1]
                } else {
                    Float::new(bits)
                }
            }
        };
        Some(value)
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return domain(format!("alpha must lie in (0, 1), got {alpha}"));
    }
    Ok(())
}

/// `K(n) = Γ(n-α) / (-Γ(-α) n!)`.
pub fn make_basic_law(alpha: f64) -> Result<InterArrivalLaw> {
    check_alpha(alpha)?;
    Ok(InterArrivalLaw { family: Family::Basic { alpha }, support_start: 1, aperiodic: true, log_norm: 1.0 })
}

/// The basic law translated `shift` steps to the right. A zero shift is the
/// basic law itself.
pub fn make_shifted_law(alpha: f64, shift: u32) -> Result<InterArrivalLaw> {
    check_alpha(alpha)?;
    if shift == 0 {
        return make_basic_law(alpha);
    }
    Ok(InterArrivalLaw {
        family: Family::Shifted { alpha, shift },
        support_start: shift as usize + 1,
        aperiodic: true,
        log_norm: 1.0,
    })
}

/// Basic density times `(ln(n+e))^logpow`, renormalized by summation plus an
/// asymptotic tail integral.
pub fn make_log_corrected_law(alpha: f64, logpow: u32) -> Result<InterArrivalLaw> {
    check_alpha(alpha)?;
    if logpow > 16 {
        return domain(format!("log power must be at most 16, got {logpow}"));
    }
    let log_norm = log_corrected_normalizer(alpha, logpow);
    if !(log_norm.is_finite() && log_norm > 0.0) {
        return Err(Error::Normalization { sum: log_norm, tol: 0.0 });
    }
    Ok(InterArrivalLaw {
        family: Family::LogCorrected { alpha, logpow },
        support_start: 1,
        aperiodic: true,
        log_norm,
    })
}

fn log_corrected_normalizer(alpha: f64, logpow: u32) -> f64 {
    if logpow == 0 {
        return 1.0;
    }
    const HEAD: usize = 1_000_000;
    let e = std::f64::consts::E;
    let g = |x: f64| (x + e).ln().powi(logpow as i32);
    // Kahan-compensated head sum.
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    let mut k = alpha;
    for n in 1..=HEAD {
        if n > 1 {
            k *= (n as f64 - 1.0 - alpha) / n as f64;
        }
        let y = k * g(n as f64) - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    // Beyond HEAD: K(x) ≈ A x^{-1-α} (1 + a1/x), matched at HEAD, integrated
    // from HEAD + 1/2 (midpoint rule) with x = x0 e^t.
    let a1 = alpha * (1.0 + alpha) / 2.0;
    let big_n = HEAD as f64;
    let amp = k * big_n.powf(1.0 + alpha) / (1.0 + a1 / big_n);
    let x0 = big_n + 0.5;
    let t_max = (60.0 + logpow as f64 * 10.0) / alpha;
    let steps = 20_000usize;
    let h = t_max / steps as f64;
    // log-space so that x0 e^t never overflows
    let f = |t: f64| {
        let inv_x = (-t).exp() / x0;
        let ln_g = x0.ln() + t + (e * inv_x).ln_1p();
        amp * x0.powf(-alpha) * (1.0 + a1 * inv_x) * (-alpha * t + logpow as f64 * ln_g.ln()).exp()
    };
    let mut integral = f(0.0) + f(t_max);
    for i in 1..steps {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        integral += w * f(i as f64 * h);
    }
    integral *= h / 3.0;
    sum + integral
}

/// Tabulated law. `tail_ratio = Some(r)` continues the table geometrically
/// after its last entry; the geometric law `(1-p) p^{n-1}` is `[1-p]` with
/// ratio `p`.
pub fn make_table_law(probs: Vec<f64>, tail_ratio: Option<f64>) -> Result<InterArrivalLaw> {
    if probs.is_empty() {
        return domain("table must have at least one entry");
    }
    if let Some((i, p)) = probs.iter().enumerate().find(|(_, p)| !(p.is_finite() && **p >= 0.0)) {
        return domain(format!("table entry {} is not a nonnegative number: {p}", i + 1));
    }
    let mut probs = probs;
    let tail_ratio = match tail_ratio {
        Some(r) if !(0.0..1.0).contains(&r) => return domain(format!("tail ratio must lie in [0, 1), got {r}")),
        Some(r) if r == 0.0 => None,
        Some(r) => {
            if probs[probs.len() - 1] == 0.0 {
                return domain("a geometric tail needs a positive last entry");
            }
            Some(r)
        }
        None => {
            while probs.len() > 1 && probs[probs.len() - 1] == 0.0 {
                probs.pop();
            }
            None
        }
    };
    let head: f64 = probs.iter().sum();
    let tail = tail_ratio.map_or(0.0, |r| probs[probs.len() - 1] * r / (1.0 - r));
    let sum = head + tail;
    if (sum - 1.0).abs() > TABLE_SUM_TOL {
        return Err(Error::Normalization { sum, tol: TABLE_SUM_TOL });
    }
    let support: Vec<usize> = probs.iter().enumerate().filter(|(_, p)| **p > 0.0).map(|(i, _)| i + 1).collect();
    let support_start = support[0];
    let aperiodic = if tail_ratio.is_some() {
        true
    } else {
        support.iter().copied().fold(0, gcd) == 1
    };
    Ok(InterArrivalLaw { family: Family::Table { probs, tail_ratio }, support_start, aperiodic, log_norm: 1.0 })
}

/// `F(1) = 1-p`, `F(2) = p`.
pub fn two_point_law(p: f64) -> Result<InterArrivalLaw> {
    if !(p > 0.0 && p < 1.0) {
        return domain(format!("p must lie in (0, 1), got {p}"));
    }
    make_table_law(vec![1.0 - p, p], None)
}

/// `F(n) = (1-p) p^{n-1}`.
pub fn geometric_law(p: f64) -> Result<InterArrivalLaw> {
    if !(p > 0.0 && p < 1.0) {
        return domain(format!("p must lie in (0, 1), got {p}"));
    }
    make_table_law(vec![1.0 - p], Some(p))
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// `K_b(n) = c(b) K(n) e^{-bn}` with its normalizer and mean held at a fixed
/// binary precision.
#[derive(Debug, Clone)]
pub struct TiltedLaw {
    base: InterArrivalLaw,
    b: f64,
    bits: u32,
    c_b: Float,
    m_b: Float,
}

impl TiltedLaw {
    pub fn base(&self) -> &InterArrivalLaw {
        &self.base
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn c_b(&self) -> &Float {
        &self.c_b
    }

    pub fn m_b(&self) -> &Float {
        &self.m_b
    }

    pub fn c_b_f64(&self) -> f64 {
        self.c_b.to_f64()
    }

    pub fn m_b_f64(&self) -> f64 {
        self.m_b.to_f64()
    }

    /// `u_b(∞) = 1/m_b`.
    pub fn u_inf(&self) -> Float {
        Float::with_val(self.bits, 1) / &self.m_b
    }

    pub fn is_degenerate(&self) -> bool {
        self.m_b_f64() <= 1.0 + DEGENERATE_MEAN_TOL
    }

    /// The same tilt recomputed at `bits` (no-op when already that precise).
    pub fn at_bits(&self, bits: u32) -> Result<TiltedLaw> {
        if bits <= self.bits {
            return Ok(self.clone());
        }
        tilt_at_bits(&self.base, self.b, bits)
    }

    /// `e^{-b}` at the law's precision.
    pub fn decay(&self) -> Float {
        Float::with_val(self.bits, -self.b).exp()
    }

    /// `K_b(n)` as `f64` (underflows to zero for very large `n b`).
    pub fn density_f64(&self, n: usize) -> f64 {
        if n == 0 {
            return 0.0;
        }
        let k = self.base.densities().nth(n - 1).unwrap_or(0.0);
        self.c_b_f64() * k * (-self.b * n as f64).exp()
    }

    /// `K_b(0..=n_max)` and `K̄_b(0..=n_max)` at the law's precision.
    ///
    /// `K̄_b` is accumulated backwards from a truncation point beyond which the
    /// geometric tail bound is below one ulp of `K_b(n_max)`.
    pub fn kernel(&self, n_max: usize) -> Kernel {
        let bits = self.bits;
        let w = self.decay();
        let (n0, rho) = self.base.ratio_bound();
        let end = self.base.support_end();
        let lnw = -self.b;
        let denom_ln = -(1.0 - rho * (-self.b).exp()).ln();
        let mut kb: Vec<Float> = vec![Float::new(bits)];
        let mut wn = Float::with_val(bits, 1);
        let mut gen = self.base.densities_mp(bits);
        let mut target_ln = f64::NAN;
        let mut n = 0usize;
        loop {
            n += 1;
            wn *= &w;
            let k = gen.next().expect("density generators are infinite");
            let v = Float::with_val(bits, &k * &wn) * &self.c_b;
            let ln_v = ln_abs(&v);
            kb.push(v);
            if n == n_max {
                let ln_ref = if ln_v.is_finite() { ln_v } else { 0.0 };
                target_ln = ln_ref - bits as f64 * std::f64::consts::LN_2 - 10.0;
            }
            if n < n_max {
                continue;
            }
            if let Some(end) = end {
                if n >= end {
                    break;
                }
            }
            // tail beyond n is at most K_b(n) ρ e^{-b} / (1 - ρ e^{-b})
            if n >= n0 && (rho == 0.0 || ln_v + rho.ln() + lnw + denom_ln < target_ln) {
                break;
            }
        }
        let len = kb.len();
        let mut kbar = vec![Float::new(bits); len];
        let mut acc = Float::new(bits);
        for i in (0..len).rev() {
            kbar[i].assign_from(&acc);
            acc += &kb[i];
        }
        kb.truncate(n_max + 1);
        kbar.truncate(n_max + 1);
        if kb.len() < n_max + 1 {
            kb.resize(n_max + 1, Float::new(bits));
            kbar.resize(n_max + 1, Float::new(bits));
        }
        Kernel { kb, kbar }
    }
}

/// Tilted density and tail arrays, index `0..=n_max`.
#[derive(Debug, Clone)]
pub struct Kernel {
    pub kb: Vec<Float>,
    pub kbar: Vec<Float>,
}

/// Partial sums `sum K(n) w^n` and `sum n K(n) w^n`, truncated where the tail
/// bound falls below `2^{-bits-8}` of the running sum.
pub fn moments_series(law: &InterArrivalLaw, b: f64, bits: u32) -> Result<(Float, Float)> {
    let w = Float::with_val(bits, -b).exp();
    let wf = (-b).exp();
    let (n0, rho) = law.ratio_bound();
    if rho * wf >= 1.0 {
        return domain(format!("{law} has infinite mean; tilt with b > 0"));
    }
    let end = law.support_end();
    let mut s0 = Float::with_val(bits, 0);
    let mut s1 = Float::with_val(bits, 0);
    let mut wn = Float::with_val(bits, 1);
    let rel = -(bits as f64 + 8.0) * std::f64::consts::LN_2;
    let q = rho * wf;
    for (i, k) in law.densities_mp(bits).enumerate() {
        let n = i + 1;
        wn *= &w;
        let t = Float::with_val(bits, &k * &wn);
        s1 += Float::with_val(bits, &t * n as u64);
        s0 += &t;
        if let Some(end) = end {
            if n >= end {
                break;
            }
        }
        if n >= n0 {
            if q == 0.0 {
                break;
            }
            // tails: sum_{k>=1} K(n) q^k and sum_{k>=1} (n+k) K(n) q^k
            let lt = ln_abs(&t);
            let t0 = lt + q.ln() - (1.0 - q).ln();
            let t1 = lt + (q * (n as f64 / (1.0 - q) + 1.0 / ((1.0 - q) * (1.0 - q)))).ln();
            if t0 - ln_abs(&s0) < rel && t1 - ln_abs(&s1) < rel {
                break;
            }
        }
        if n > 50_000_000 {
            return Err(Error::Precision(format!("series for {law} at b = {b} did not converge")));
        }
    }
    Ok((s0, s1))
}

/// Closed-form `(c(b), m_b)` for the basic and shifted families.
pub fn moments_closed_form(law: &InterArrivalLaw, b: f64, bits: u32) -> Option<(Float, Float)> {
    let (alpha, shift) = match law.family {
        Family::Basic { alpha } => (alpha, 0u32),
        Family::Shifted { alpha, shift } => (alpha, shift),
        _ => return None,
    };
    let a = Float::with_val(bits, alpha);
    let w = Float::with_val(bits, -b).exp();
    // 1 - e^{-b}, computed as -expm1(-b)
    let one_minus_w = -Float::with_val(bits, -b).exp_m1();
    let q = Float::with_val(bits, (&one_minus_w).pow(&a));
    let c_basic = Float::with_val(bits, 1) / (Float::with_val(bits, 1) - &q);
    // d/dz of c (1 - (1 - z e^{-b})^α) at z = 1
    let m_basic = Float::with_val(bits, &c_basic * &a) * &w * (q / &one_minus_w);
    let c = c_basic * (Float::with_val(bits, b) * shift).exp();
    let m = m_basic + shift;
    Some((c, m))
}

fn tilt_at_bits(law: &InterArrivalLaw, b: f64, bits: u32) -> Result<TiltedLaw> {
    let (c_b, m_b) = match moments_closed_form(law, b, bits) {
        Some((c, m)) => {
            let series_terms = (bits.min(256) as f64 + 8.0) * std::f64::consts::LN_2 / b;
            if series_terms < 20_000.0 {
                // Cross-check the closed form against the series.
                let (s0, s1) = moments_series(law, b, bits.min(256))?;
                let c_series = Float::with_val(bits, 1) / &s0;
                let m_series = Float::with_val(bits, &s1 * &c_series);
                let tol = 1e-30f64.max(2f64.powi(-(bits.min(256) as i32) + 16));
                let rel_c = ((c_series - &c) / &c).abs().to_f64();
                let rel_m = ((m_series - &m) / &m).abs().to_f64();
                if rel_c > tol || rel_m > tol {
                    return Err(Error::Precision(format!(
                        "closed form and series disagree for {law} at b = {b}: rel {rel_c:e}, {rel_m:e}"
                    )));
                }
            }
            (c, m)
        }
        None => {
            let (s0, s1) = moments_series(law, b, bits)?;
            let c = Float::with_val(bits, 1) / &s0;
            let m = Float::with_val(bits, &s1 * &c);
            (c, m)
        }
    };
    Ok(TiltedLaw { base: law.clone(), b, bits, c_b, m_b })
}

/// Tilts `law` by `b > 0`. `Auto` precision resolves to [`SCALAR_BITS`];
/// renewal routines raise the precision as their horizon requires.
pub fn tilt(law: &InterArrivalLaw, b: f64, precision: PrecisionSpec) -> Result<TiltedLaw> {
    if !(b > 0.0 && b.is_finite()) {
        return domain(format!("tilt b must be positive and finite, got {b}"));
    }
    let bits = match precision {
        PrecisionSpec::Auto => SCALAR_BITS,
        PrecisionSpec::Bits(p) => p.max(crate::precision::MIN_BITS),
    };
    tilt_at_bits(law, b, bits)
}

/// The law itself viewed as a zero tilt; requires a finite mean.
pub fn untilted(law: &InterArrivalLaw, precision: PrecisionSpec) -> Result<TiltedLaw> {
    if law.mean().is_none() {
        return domain(format!("{law} has infinite mean; tilt with b > 0"));
    }
    let bits = match precision {
        PrecisionSpec::Auto => SCALAR_BITS,
        PrecisionSpec::Bits(p) => p.max(crate::precision::MIN_BITS),
    };
    tilt_at_bits(law, 0.0, bits)
}

/// `μ_b(n) = K̄_b(n) / m_b`.
pub fn mu_density(tilted: &TiltedLaw, n: usize) -> Float {
    let kernel = tilted.kernel(n.max(1));
    kernel.kbar[n].clone() / tilted.m_b()
}

/// `μ_b(0..=n_max)`.
pub fn mu_vec(tilted: &TiltedLaw, n_max: usize) -> Vec<Float> {
    let kernel = tilted.kernel(n_max.max(1));
    kernel.kbar.into_iter().take(n_max + 1).map(|k| k / tilted.m_b()).collect()
}

/// Unique `b > 0` with `sum K(n) e^{-bn} = e^{-β}`, by bisection.
pub fn free_energy(law: &InterArrivalLaw, beta: f64, tol: f64) -> Result<f64> {
    if !(beta > 0.0 && beta.is_finite()) {
        return domain(format!("beta must be positive and finite, got {beta}"));
    }
    if !(tol > 0.0) {
        return domain(format!("tolerance must be positive, got {tol}"));
    }
    let target = (-beta).exp();
    let mut lo = 0.0f64;
    let mut hi = beta.max(1e-3);
    while law.laplace(hi) > target {
        lo = hi;
        hi *= 2.0;
        if hi > 1e6 {
            return domain(format!("free energy bracket exploded for beta = {beta}"));
        }
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if law.laplace(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// JSON shape of a law: `{"family", "alpha", "shift", "logpow", "table", "tail_ratio"}`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct LawJson {
    pub family: String,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub shift: Option<u32>,
    #[serde(default)]
    pub logpow: Option<u32>,
    #[serde(default)]
    pub table: Option<Vec<String>>,
    #[serde(default)]
    pub tail_ratio: Option<String>,
}

impl From<&InterArrivalLaw> for LawJson {
    fn from(law: &InterArrivalLaw) -> Self {
        let mut out = LawJson {
            family: law.family.name().to_string(),
            alpha: law.alpha(),
            shift: Some(law.shift()),
            logpow: Some(0),
            table: None,
            tail_ratio: None,
        };
        match &law.family {
            Family::LogCorrected { logpow, .. } => out.logpow = Some(*logpow),
            Family::Table { probs, tail_ratio } => {
                out.table = Some(probs.iter().map(|p| format!("{p:?}")).collect());
                out.tail_ratio = tail_ratio.map(|r| format!("{r:?}"));
            }
            _ => {}
        }
        out
    }
}

impl TryFrom<LawJson> for InterArrivalLaw {
    type Error = Error;

    fn try_from(j: LawJson) -> Result<Self> {
        let need_alpha = || j.alpha.ok_or_else(|| Error::Domain(format!("family {} needs alpha", j.family)));
        match j.family.as_str() {
            "basic" => make_basic_law(need_alpha()?),
            "shifted" => make_shifted_law(need_alpha()?, j.shift.unwrap_or(0)),
            "logcorrected" => make_log_corrected_law(need_alpha()?, j.logpow.unwrap_or(0)),
            "table" => {
                let table = j.table.ok_or_else(|| Error::Domain("family table needs a table".into()))?;
                let probs = table
                    .iter()
                    .map(|s| parse_decimal(s))
                    .collect::<Result<Vec<f64>>>()?;
                let tail = j.tail_ratio.as_deref().map(parse_decimal).transpose()?;
                make_table_law(probs, tail)
            }
            other => domain(format!("unknown family {other:?}")),
        }
    }
}

fn parse_decimal(s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| Error::Domain(format!("not a decimal number: {s:?}")))
}

impl InterArrivalLaw {
    pub fn to_json(&self) -> String {
        serde_json::to_string(&LawJson::from(self)).expect("law JSON is always serializable")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let j: LawJson = serde_json::from_str(text)?;
        InterArrivalLaw::try_from(j)
    }
}
