//! Complex-plane analysis of `1 - K̂_b`.
//!
//! Zeros of `1 - K̂_b(z)` with `1 < |z| <= e^b` are the poles of the delta
//! transform `Δ_b` inside the disk of convergence of `K̂_b`; the one of
//! smallest modulus sets the decay rate of `u_b(n) - u_b(∞)` whenever it
//! exists. Everything here runs in `f64` complex arithmetic.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use num_complex::Complex64;
use rug::Float;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::laws::{tilt, Family, InterArrivalLaw, TiltedLaw};
use crate::precision::{decimal_f64, PrecisionSpec};
use crate::renewal::delta_series;

/// Largest number of series terms a [`Transform`] will carry.
pub const MAX_SERIES_TERMS: usize = 5_000_000;

/// Relative clearance kept between the outer contour and `|z| = e^b`.
pub const OUTER_MARGIN: f64 = 1e-9;

/// Sample budget per contour for the winding computation.
pub const WINDING_BUDGET: usize = 1 << 22;

/// Distance under which two Newton limits are the same root.
pub const DEDUP_DIST: f64 = 1e-8;

/// Residual bound for an accepted root.
pub const ROOT_RESIDUAL: f64 = 1e-10;

/// A complex number serialized with decimal-string components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexPoint {
    #[serde(with = "decimal_f64")]
    pub re: f64,
    #[serde(with = "decimal_f64")]
    pub im: f64,
}

impl From<Complex64> for ComplexPoint {
    fn from(z: Complex64) -> Self {
        ComplexPoint { re: z.re, im: z.im }
    }
}

impl From<ComplexPoint> for Complex64 {
    fn from(p: ComplexPoint) -> Self {
        Complex64::new(p.re, p.im)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RootReport {
    pub z0: ComplexPoint,
    #[serde(with = "decimal_f64")]
    pub modulus: f64,
    pub khat_derivative: ComplexPoint,
    /// `1 / (z0 K̂_b'(z0))`.
    pub pole_coefficient: ComplexPoint,
    #[serde(with = "decimal_f64")]
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnulusCount {
    #[serde(with = "decimal_f64")]
    pub r_in: f64,
    #[serde(with = "decimal_f64")]
    pub r_out: f64,
    pub count: usize,
    pub winding_samples: usize,
}

enum Kind {
    /// `c z^m (1 - (1 - z e^{-b})^α)`.
    Closed { alpha: f64, shift: i32, c: f64 },
    /// `sum_n a_n (z e^{-b})^n` with `a_n = c K(n)`; `a[0] = 0`.
    Series { coeffs: Vec<f64>, tail: f64 },
}

/// `K̂_b` prepared for repeated evaluation on `|z| <= r_max`.
pub struct Transform {
    b: f64,
    w: f64,
    m_b: f64,
    radius: f64,
    kind: Kind,
}

impl Transform {
    /// Prepares `K̂_b` for evaluation on the disk `|z| <= r_max`. Series
    /// families are truncated where the geometric tail bound drops below
    /// `1e-17`.
    pub fn new(tilted: &TiltedLaw, r_max: f64) -> Result<Self> {
        let law = tilted.base();
        let b = tilted.b();
        let w = (-b).exp();
        let c = tilted.c_b_f64();
        let m_b = tilted.m_b_f64();
        let (n0, rho) = law.ratio_bound();
        let radius = if let Some(_) = law.support_end() {
            f64::INFINITY
        } else if rho > 0.0 && rho < 1.0 {
            b.exp() / rho
        } else {
            b.exp()
        };
        let kind = match law.family() {
            Family::Basic { alpha } => Kind::Closed { alpha: *alpha, shift: 0, c },
            Family::Shifted { alpha, shift } => Kind::Closed {
                alpha: *alpha,
                shift: *shift as i32,
                // the closed form carries e^{bm} inside z^m e^{-bm}
                c: c * (-b * *shift as f64).exp(),
            },
            _ => {
                if r_max > radius {
                    return domain(format!("|z| = {r_max} lies outside the disk of convergence (radius {radius})"));
                }
                let s = r_max * w;
                let end = law.support_end();
                let mut coeffs = vec![0.0];
                let mut tail = 0.0;
                for (i, k) in law.densities().enumerate() {
                    let n = i + 1;
                    let a = c * k;
                    coeffs.push(a);
                    if let Some(end) = end {
                        if n >= end {
                            break;
                        }
                    }
                    if n >= n0 {
                        let q = rho * s;
                        if q < 1.0 {
                            tail = a * s.powi(n as i32) * q / (1.0 - q);
                            if tail < 1e-17 {
                                break;
                            }
                        }
                    }
                    if n >= MAX_SERIES_TERMS {
                        return domain(format!(
                            "series for {law} needs more than {MAX_SERIES_TERMS} terms at |z| = {r_max}; \
                             stay further inside |z| < e^b"
                        ));
                    }
                }
                Kind::Series { coeffs, tail }
            }
        };
        Ok(Transform { b, w, m_b, radius, kind })
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn m_b(&self) -> f64 {
        self.m_b
    }

    /// Radius of convergence of `K̂_b`.
    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn has_closed_form(&self) -> bool {
        matches!(self.kind, Kind::Closed { .. })
    }

    /// Truncation error bound of the series path (zero for closed forms).
    pub fn series_tail(&self) -> f64 {
        match &self.kind {
            Kind::Closed { .. } => 0.0,
            Kind::Series { tail, .. } => *tail,
        }
    }

    /// `K̂_b(z)`.
    pub fn eval(&self, z: Complex64) -> Complex64 {
        match &self.kind {
            Kind::Closed { alpha, shift, c } => {
                let q = Complex64::new(1.0, 0.0) - z * self.w;
                let core = if q.norm() == 0.0 { Complex64::new(1.0, 0.0) } else { Complex64::new(1.0, 0.0) - q.powf(*alpha) };
                z.powi(*shift) * core * *c
            }
            Kind::Series { coeffs, .. } => horner(coeffs, z * self.w),
        }
    }

    /// `K̂_b'(z)`.
    pub fn derivative(&self, z: Complex64) -> Complex64 {
        match &self.kind {
            Kind::Closed { alpha, shift, c } => {
                let one = Complex64::new(1.0, 0.0);
                let q = one - z * self.w;
                let core = one - q.powf(*alpha);
                let dcore = q.powf(*alpha - 1.0) * (*alpha * self.w);
                let m = *shift;
                let lead = if m == 0 { Complex64::new(0.0, 0.0) } else { z.powi(m - 1) * (m as f64) * core };
                (lead + z.powi(m) * dcore) * *c
            }
            Kind::Series { coeffs, .. } => {
                let zeta = z * self.w;
                let mut acc = Complex64::new(0.0, 0.0);
                for n in (1..coeffs.len()).rev() {
                    acc = acc * zeta + coeffs[n] * n as f64;
                }
                acc * self.w
            }
        }
    }

    /// Rounding scale of [`Transform::eval`] at `z`.
    pub fn eval_error(&self, z: Complex64) -> f64 {
        let k = self.eval(z).norm();
        let scale = match &self.kind {
            Kind::Closed { shift, .. } => 1.0 + *shift as f64,
            Kind::Series { coeffs, .. } => (coeffs.len() as f64).sqrt(),
        };
        64.0 * f64::EPSILON * (1.0 + k) * scale + self.series_tail()
    }
}

fn horner(coeffs: &[f64], x: Complex64) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for &a in coeffs.iter().rev() {
        acc = acc * x + a;
    }
    acc
}

/// `K̂_b(z)` (closed form for the basic and shifted families, series
/// otherwise).
pub fn khat(tilted: &TiltedLaw, z: Complex64) -> Result<Complex64> {
    let tr = Transform::new(tilted, z.norm())?;
    check_in_domain(&tr, z)?;
    Ok(tr.eval(z))
}

/// `K̂_b(z)` by truncated series regardless of family, to absolute error
/// `tol`; returns the value and the tail bound. Requires `|z| < e^b`.
pub fn khat_series(tilted: &TiltedLaw, z: Complex64, tol: f64) -> Result<(Complex64, f64)> {
    let law = tilted.base();
    let b = tilted.b();
    let s = z.norm() * (-b).exp();
    let (n0, rho) = law.ratio_bound();
    if rho * s >= 1.0 {
        return domain(format!("|z| = {} is not inside the disk of convergence", z.norm()));
    }
    let zeta = z * (-b).exp();
    let c = tilted.c_b_f64();
    let end = law.support_end();
    let mut sum = Complex64::new(0.0, 0.0);
    let mut pow = Complex64::new(1.0, 0.0);
    let mut bound = 0.0;
    for (i, k) in law.densities().enumerate() {
        let n = i + 1;
        pow *= zeta;
        sum += pow * (c * k);
        if let Some(end) = end {
            if n >= end {
                bound = 0.0;
                break;
            }
        }
        if n >= n0 {
            bound = c * k * s.powi(n as i32) * rho * s / (1.0 - rho * s);
            if bound < tol {
                break;
            }
        }
        if n >= MAX_SERIES_TERMS {
            return Err(Error::Precision(format!("series did not reach tolerance {tol:e}")));
        }
    }
    Ok((sum, bound))
}

fn check_in_domain(tr: &Transform, z: Complex64) -> Result<()> {
    let r = z.norm();
    if !r.is_finite() {
        return domain("z must be finite");
    }
    if tr.has_closed_form() {
        let ezb = tr.b.exp();
        if z.im == 0.0 && z.re > ezb {
            return Err(Error::Singularity(format!("z = {} lies on the cut (e^b, +inf)", z.re)));
        }
    } else if r > tr.radius() {
        return domain(format!("|z| = {r} lies outside the disk of convergence"));
    }
    Ok(())
}

/// Coefficient window used near `z = 1`, where `Δ_b` is evaluated from its
/// power series instead of the singular-looking closed form.
pub const NEAR_ONE: f64 = 0.05;

/// `Δ_b(z) = 1/(1 - K̂_b(z)) - 1/(m_b (1 - z))`.
pub fn delta_transform(tilted: &TiltedLaw, z: Complex64) -> Result<Complex64> {
    let tr = Transform::new(tilted, z.norm().max(1.0))?;
    check_in_domain(&tr, z)?;
    let one = Complex64::new(1.0, 0.0);
    if (z - one).norm() < NEAR_ONE {
        return delta_power_series(tilted, z);
    }
    let f = one - tr.eval(z);
    if f.norm() < 1e3 * tr.eval_error(z) {
        return Err(Error::Singularity(format!("1 - K_b vanishes at z = {z}")));
    }
    Ok(one / f - one / ((one - z) * tr.m_b()))
}

fn delta_power_series(tilted: &TiltedLaw, z: Complex64) -> Result<Complex64> {
    let r = z.norm();
    let mut n_max = 200usize;
    loop {
        let series = delta_series(tilted, n_max, PrecisionSpec::Auto)?;
        let d = series.d_f64();
        let sum = horner(&d, z);
        let last = d[n_max - 10..].iter().enumerate().map(|(i, x)| x.abs() * r.powi((n_max - 10 + i) as i32)).fold(0.0, f64::max);
        if last < 1e-17 * sum.norm().max(1e-300) || n_max >= 6400 {
            return Ok(sum);
        }
        n_max *= 2;
    }
}

/// `μ̂_b` by both routes together with the residual of
/// `∇û(z) = 1/(m_b μ̂_b(z))`.
#[derive(Debug, Clone, Serialize)]
pub struct GrubelCheck {
    pub muhat_closed: ComplexPoint,
    pub muhat_series: ComplexPoint,
    pub series_tail_bound: f64,
    pub grad_transform: ComplexPoint,
    pub residual: f64,
}

/// Evaluates `μ̂_b(z) = (1 - K̂_b(z)) / (m_b (1 - z))`, its series
/// `sum_{n<=n_terms} μ_b(n) z^n`, and `|∇û(z) - φ_b(μ̂_b(z))|` with `∇û`
/// summed over the same number of terms.
pub fn muhat_and_grubel_check(tilted: &TiltedLaw, z: Complex64, n_terms: usize) -> Result<GrubelCheck> {
    let one = Complex64::new(1.0, 0.0);
    if z.norm() == 0.0 || (z - one).norm() == 0.0 {
        return Err(Error::Singularity("μ̂ identity is singular at z = 0 and z = 1".into()));
    }
    let b = tilted.b();
    if z.norm() > b.exp() * (1.0 + 1e-12) {
        return domain(format!("|z| = {} exceeds e^b", z.norm()));
    }
    let tr = Transform::new(tilted, z.norm())?;
    check_in_domain(&tr, z)?;
    let m_b = tilted.m_b_f64();
    let muhat_closed = (one - tr.eval(z)) / ((one - z) * m_b);

    let series = delta_series(tilted, n_terms.max(1), PrecisionSpec::Auto)?;
    let kernel = series.tilted.kernel(n_terms.max(1) + 1);
    let m_mp = series.tilted.m_b().clone();
    let mu: Vec<f64> = kernel.kbar.iter().map(|k| Float::with_val(k.prec(), k / &m_mp).to_f64()).collect();
    let muhat_series = horner(&mu[..=n_terms], z);
    let (_, rho) = tilted.base().ratio_bound();
    let s = z.norm() * (-b).exp() * rho.max(f64::MIN_POSITIVE);
    let series_tail_bound = if s < 1.0 {
        mu[n_terms + 1] * z.norm().powi(n_terms as i32 + 1) / (1.0 - s)
    } else {
        f64::INFINITY
    };
    let grad: Vec<f64> = series.grad_u.iter().map(Float::to_f64).collect();
    let grad_transform = horner(&grad, z);
    let residual = (grad_transform - one / (muhat_closed * m_b)).norm();
    Ok(GrubelCheck {
        muhat_closed: muhat_closed.into(),
        muhat_series: muhat_series.into(),
        series_tail_bound,
        grad_transform: grad_transform.into(),
        residual,
    })
}

/// Winding number of `1 - K̂_b` around `|z| = r` and the sample count used.
///
/// Samples start on a uniform grid and every arc whose argument increment
/// reaches `π/2` is bisected until all increments are below it.
pub fn winding_number(tr: &Transform, r: f64) -> Result<(i64, usize)> {
    let one = Complex64::new(1.0, 0.0);
    let f = |theta: f64| one - tr.eval(Complex64::from_polar(r, theta));
    let start = 512usize;
    let mut samples = start;
    let mut total = 0.0;
    let mut min_mod = f64::INFINITY;
    let mut min_err = 0.0;
    // explicit stack of arcs (θ0, f(θ0), θ1, f(θ1))
    let thetas: Vec<f64> = (0..=start).map(|k| TAU * k as f64 / start as f64).collect();
    let values: Vec<Complex64> = thetas.iter().map(|&t| f(t)).collect();
    for (t, v) in thetas.iter().zip(&values) {
        let m = v.norm();
        if m < min_mod {
            min_mod = m;
            min_err = tr.eval_error(Complex64::from_polar(r, *t));
        }
    }
    let mut stack: Vec<(f64, Complex64, f64, Complex64)> =
        (0..start).rev().map(|k| (thetas[k], values[k], thetas[k + 1], values[k + 1])).collect();
    while let Some((t0, f0, t1, f1)) = stack.pop() {
        let step = (f1 / f0).arg();
        if step.abs() < FRAC_PI_2 {
            total += step;
            continue;
        }
        if samples >= WINDING_BUDGET || t1 - t0 < 1e-15 {
            return Err(Error::NonConvergence { radius: r, budget: WINDING_BUDGET });
        }
        let tm = 0.5 * (t0 + t1);
        let fm = f(tm);
        samples += 1;
        let m = fm.norm();
        if m < min_mod {
            min_mod = m;
            min_err = tr.eval_error(Complex64::from_polar(r, tm));
        }
        stack.push((tm, fm, t1, f1));
        stack.push((t0, f0, tm, fm));
    }
    if min_mod <= 10.0 * min_err {
        return Err(Error::OnContour { radius: r, min_modulus: min_mod });
    }
    let turns = total / TAU;
    Ok((turns.round() as i64, samples))
}

fn check_annulus(tr: &Transform, r_in: f64, r_out: f64) -> Result<()> {
    if !(r_in > 1.0 && r_in < r_out) {
        return domain(format!("annulus needs 1 < r_in < r_out, got ({r_in}, {r_out})"));
    }
    let limit = if tr.has_closed_form() { tr.b.exp() } else { tr.radius() };
    if r_out > limit * (1.0 + 1e-12) {
        return domain(format!("r_out = {r_out} exceeds the disk of convergence ({limit})"));
    }
    Ok(())
}

/// Number of zeros of `1 - K̂_b` in `r_in < |z| < r_out`, as the difference
/// of the winding numbers on the two circles (the zero at `z = 1` sits
/// inside both and cancels).
pub fn count_zeros(tilted: &TiltedLaw, r_in: f64, r_out: f64) -> Result<AnnulusCount> {
    let tr = Transform::new(tilted, r_out)?;
    count_zeros_with(&tr, r_in, r_out)
}

pub fn count_zeros_with(tr: &Transform, r_in: f64, r_out: f64) -> Result<AnnulusCount> {
    check_annulus(tr, r_in, r_out)?;
    let (w_in, s_in) = winding_number(tr, r_in)?;
    let (w_out, s_out) = winding_number(tr, r_out)?;
    let count = w_out - w_in;
    if count < 0 {
        return Err(Error::Mismatch { found: 0, counted: 0 });
    }
    Ok(AnnulusCount { r_in, r_out, count: count as usize, winding_samples: s_in + s_out })
}

/// Default annulus for a tilted law: `(1 + 1e-4 b, e^b (1 - 1e-9))`, or the
/// series-safe radius for families without a closed form.
pub fn default_annulus(tilted: &TiltedLaw) -> (f64, f64) {
    let b = tilted.b();
    let eps = 1e-4 * b.max(1e-2);
    let r_out = match tilted.base().family() {
        Family::Basic { .. } | Family::Shifted { .. } => b.exp() * (1.0 - OUTER_MARGIN),
        _ if tilted.base().support_end().is_some() => b.exp().max(2.0),
        _ => b.exp() * (1.0 - 1e-3),
    };
    (1.0 + eps, r_out)
}

/// Newton seeding grid: radii x angles.
pub const GRID_RADII: usize = 24;
pub const GRID_ANGLES: usize = 48;

/// Zeros of `1 - K̂_b` in the default annulus with outer radius `r_out`.
pub fn find_roots(tilted: &TiltedLaw, r_out: f64) -> Result<Vec<RootReport>> {
    let (r_in, _) = default_annulus(tilted);
    find_roots_in(tilted, r_in, r_out)
}

/// Newton refinement from a polar grid over `r_in < |z| < r_out`; the grid
/// is doubled (up to three times) until the number of distinct roots equals
/// the argument-principle count.
pub fn find_roots_in(tilted: &TiltedLaw, r_in: f64, r_out: f64) -> Result<Vec<RootReport>> {
    let tr = Transform::new(tilted, r_out)?;
    let count = count_zeros_with(&tr, r_in, r_out)?;
    if count.count == 0 {
        return Ok(Vec::new());
    }
    let (mut nr, mut na) = (GRID_RADII, GRID_ANGLES);
    let mut found = Vec::new();
    for _ in 0..4 {
        found = newton_grid(&tr, r_in, r_out, nr, na);
        if found.len() == count.count {
            break;
        }
        nr *= 2;
        na *= 2;
    }
    if found.len() != count.count {
        return Err(Error::Mismatch { found: found.len(), counted: count.count });
    }
    found
        .into_iter()
        .map(|z| {
            let dk = tr.derivative(z);
            let residual = (Complex64::new(1.0, 0.0) - tr.eval(z)).norm();
            Ok(RootReport {
                z0: z.into(),
                modulus: z.norm(),
                khat_derivative: dk.into(),
                pole_coefficient: (Complex64::new(1.0, 0.0) / (z * dk)).into(),
                residual,
            })
        })
        .collect()
}

fn newton(tr: &Transform, mut z: Complex64, limit: f64) -> Option<Complex64> {
    let one = Complex64::new(1.0, 0.0);
    for _ in 0..100 {
        let f = one - tr.eval(z);
        let df = -tr.derivative(z);
        if !(df.norm() > 0.0) {
            return None;
        }
        let step = f / df;
        // damp wild steps
        let step = if step.norm() > 0.5 * z.norm().max(1.0) { step * (0.5 * z.norm().max(1.0) / step.norm()) } else { step };
        z -= step;
        if !z.re.is_finite() || !z.im.is_finite() || z.norm() > limit {
            return None;
        }
        if step.norm() <= 1e-15 * z.norm() {
            break;
        }
    }
    // polish
    for _ in 0..3 {
        let f = one - tr.eval(z);
        let df = -tr.derivative(z);
        z -= f / df;
    }
    let residual = (one - tr.eval(z)).norm();
    (residual < ROOT_RESIDUAL).then_some(z)
}

fn newton_grid(tr: &Transform, r_in: f64, r_out: f64, nr: usize, na: usize) -> Vec<Complex64> {
    let limit = if tr.has_closed_form() { tr.b.exp() * (1.0 + 1e-9) } else { tr.radius() };
    let mut roots: Vec<Complex64> = Vec::new();
    let push = |z: Complex64, roots: &mut Vec<Complex64>| {
        let r = z.norm();
        if r > r_in && r < r_out && roots.iter().all(|x| (x - z).norm() > DEDUP_DIST) {
            roots.push(z);
        }
    };
    for i in 0..nr {
        let r = r_in + (r_out - r_in) * (i as f64 + 0.5) / nr as f64;
        for k in 0..na {
            let theta = PI * (2.0 * k as f64 + 1.0) / na as f64 - PI;
            if let Some(z) = newton(tr, Complex64::from_polar(r, theta), limit) {
                let z = if z.im.abs() < 1e-13 * z.norm() { Complex64::new(z.re, 0.0) } else { z };
                push(z, &mut roots);
                push(z.conj(), &mut roots);
            }
        }
        // seeds on the real axis
        for sign in [-1.0, 1.0] {
            if let Some(z) = newton(tr, Complex64::new(sign * r, 0.0), limit) {
                let z = if z.im.abs() < 1e-13 * z.norm() { Complex64::new(z.re, 0.0) } else { z };
                push(z, &mut roots);
                push(z.conj(), &mut roots);
            }
        }
    }
    roots.sort_by(|a, b| a.norm().total_cmp(&b.norm()).then(a.arg().total_cmp(&b.arg())));
    roots
}

/// Outcome of the critical-tilt bisection.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriticalTilt {
    /// `f64::INFINITY` when no annulus zero exists up to the ceiling.
    #[serde(with = "decimal_f64")]
    pub b0: f64,
    #[serde(with = "decimal_f64")]
    pub tol: f64,
    pub iterations: usize,
}

/// Whether `1 - K̂_b` has a zero in the default annulus at tilt `b`.
pub fn has_annulus_zero(law: &InterArrivalLaw, b: f64) -> Result<bool> {
    let tilted = tilt(law, b, PrecisionSpec::Auto)?;
    let (r_in, mut r_out) = default_annulus(&tilted);
    for _ in 0..4 {
        match count_zeros(&tilted, r_in, r_out) {
            Ok(c) => return Ok(c.count >= 1),
            Err(Error::OnContour { .. }) => r_out = tilted.b().exp() - 10.0 * (tilted.b().exp() - r_out),
            Err(e) => return Err(e),
        }
    }
    count_zeros(&tilted, r_in, r_out).map(|c| c.count >= 1)
}

/// Bisection for the infimum `b0` of tilts with an annulus zero.
///
/// Returns the infinite sentinel if there is no zero at `b_hi`, and
/// [`Error::PredicateConstant`] if there already is one at `b_lo`.
pub fn critical_tilt(law: &InterArrivalLaw, b_lo: f64, b_hi: f64, tol: f64) -> Result<CriticalTilt> {
    if !(b_lo > 0.0 && b_lo < b_hi && tol > 0.0) {
        return domain(format!("need 0 < b_lo < b_hi and tol > 0, got [{b_lo}, {b_hi}], tol {tol}"));
    }
    if !has_annulus_zero(law, b_hi)? {
        return Ok(CriticalTilt { b0: f64::INFINITY, tol, iterations: 0 });
    }
    if has_annulus_zero(law, b_lo)? {
        return Err(Error::PredicateConstant { lo: b_lo, hi: b_hi });
    }
    let (mut lo, mut hi) = (b_lo, b_hi);
    let mut iterations = 0;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if has_annulus_zero(law, mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
        iterations += 1;
    }
    Ok(CriticalTilt { b0: 0.5 * (lo + hi), tol, iterations })
}

/// Leading pole term `sum pole_coefficient z0^{-n}` over the roots of
/// minimal modulus. Conjugate pairs combine into
/// `|z0|^{-n} (c1 cos(n arg z0) + c2 sin(n arg z0))`; the result is real.
pub fn pole_asymptote(roots: &[RootReport], n: usize) -> Result<f64> {
    let Some(min_mod) = roots.iter().map(|r| r.modulus).min_by(f64::total_cmp) else {
        return Ok(0.0);
    };
    let mut sum = Complex64::new(0.0, 0.0);
    for r in roots.iter().filter(|r| r.modulus <= min_mod * (1.0 + 1e-9)) {
        let dk: Complex64 = r.khat_derivative.into();
        if dk.norm() < 1e-8 {
            return Err(Error::Multiplicity { re: r.z0.re, im: r.z0.im, derivative: dk.norm() });
        }
        let z: Complex64 = r.z0.into();
        let coef: Complex64 = r.pole_coefficient.into();
        sum += coef * z.powi(-(n as i32));
    }
    Ok(sum.re)
}

/// `(|z0|, arg z0, c1, c2)` for a nonreal minimal root, or `(|z0|, arg, c, 0)`
/// for a real one.
pub fn pole_real_form(roots: &[RootReport]) -> Option<(f64, f64, f64, f64)> {
    let r = roots.iter().min_by(|a, b| a.modulus.total_cmp(&b.modulus).then(b.z0.im.total_cmp(&a.z0.im)))?;
    let coef: Complex64 = r.pole_coefficient.into();
    let z: Complex64 = r.z0.into();
    if z.im == 0.0 {
        Some((z.norm(), z.arg(), coef.re, 0.0))
    } else {
        Some((z.norm(), z.arg().abs(), 2.0 * coef.re, 2.0 * coef.im * z.im.signum()))
    }
}

/// Result of the shift scan for annulus zeros.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShiftScan {
    pub m: u32,
    #[serde(with = "decimal_f64")]
    pub r: f64,
    pub count: usize,
    /// `min_{|z|=r} |K̂_b(z)|`; above one, Rouché forces exactly `m` zeros in
    /// `1 < |z| < r`.
    #[serde(with = "decimal_f64")]
    pub min_khat_on_circle: f64,
    pub rouche_certified: bool,
}

/// Scans `m = 1..=m_max` for the first shifted law with at least one zero of
/// `1 - K̂_b` in `(1 + ε, r)`, `r < e^b`.
pub fn shift_scan(alpha: f64, b: f64, r: f64, m_max: u32) -> Result<Option<ShiftScan>> {
    if !(r > 1.0 && r < b.exp()) {
        return domain(format!("need 1 < r < e^b, got r = {r}"));
    }
    for m in 1..=m_max {
        let law = crate::laws::make_shifted_law(alpha, m)?;
        let tilted = tilt(&law, b, PrecisionSpec::Auto)?;
        let tr = Transform::new(&tilted, r)?;
        let (r_in, _) = default_annulus(&tilted);
        let count = count_zeros_with(&tr, r_in, r)?;
        if count.count >= 1 {
            let samples = 4096;
            let min_khat = (0..samples)
                .map(|k| tr.eval(Complex64::from_polar(r, TAU * k as f64 / samples as f64)).norm())
                .fold(f64::INFINITY, f64::min);
            return Ok(Some(ShiftScan {
                m,
                r,
                count: count.count,
                min_khat_on_circle: min_khat,
                rouche_certified: min_khat > 1.0 && count.count == m as usize,
            }));
        }
    }
    Ok(None)
}

/// Nontrivial root of `K̂_b(z) = 1` for the shifted law with `α = 1/2`, `m = 1`.
pub fn half_unit_shift_root(b: f64) -> f64 {
    -0.5 * (1.0 + (8.0 * b.exp() * (1.0 - (1.0 - (-b).exp()).sqrt()) - 3.0).sqrt())
}

/// Critical tilt of the shifted law with `α = 1/2`, `m = 1`.
pub fn half_unit_shift_b0() -> f64 {
    let s2 = 2f64.sqrt();
    (1.5 + s2 - (s2 + 1.25).sqrt()).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::laws::{geometric_law, make_basic_law, make_shifted_law, two_point_law, untilted};

    fn tilted(law: &InterArrivalLaw, b: f64) -> TiltedLaw {
        tilt(law, b, PrecisionSpec::Auto).unwrap()
    }

    #[test]
    fn khat_at_one_is_one() {
        for law in [make_basic_law(0.5).unwrap(), make_shifted_law(0.3, 2).unwrap(), geometric_law(0.4).unwrap()] {
            let t = tilted(&law, 0.5);
            let v = khat(&t, Complex64::new(1.0, 0.0)).unwrap();
            assert!((v - 1.0).norm() < 1e-14, "{law}: {v}");
        }
    }

    #[test]
    fn khat_at_radius_is_normalizer() {
        let t = tilted(&make_basic_law(0.5).unwrap(), 0.5);
        let v = khat(&t, Complex64::new(0.5f64.exp(), 0.0)).unwrap();
        assert!((v.re - t.c_b_f64()).abs() < 1e-13 * t.c_b_f64());
    }

    #[test]
    fn closed_form_matches_series_path() {
        let t = tilted(&make_basic_law(0.5).unwrap(), 0.5);
        let z = Complex64::new(0.5, 0.5);
        let (s, bound) = khat_series(&t, z, 1e-15).unwrap();
        let c = khat(&t, z).unwrap();
        assert!((s - c).norm() < 1e-14 + bound);
    }

    #[test]
    fn cut_line_rejected() {
        let t = tilted(&make_basic_law(0.5).unwrap(), 0.5);
        assert!(matches!(khat(&t, Complex64::new(2.0, 0.0)), Err(Error::Singularity(_))));
    }

    #[test]
    fn delta_transform_examples() {
        let geo = untilted(&geometric_law(0.3).unwrap(), PrecisionSpec::Auto).unwrap();
        for z in [Complex64::new(0.2, 0.1), Complex64::new(-2.0, 0.5), Complex64::new(1.01, 0.01)] {
            let d = delta_transform(&geo, z).unwrap();
            assert!((d - 0.3).norm() < 1e-12, "{z}: {d}");
        }
        let two = untilted(&two_point_law(0.5).unwrap(), PrecisionSpec::Auto).unwrap();
        for z in [Complex64::new(0.3, -0.2), Complex64::new(1.02, 0.0), Complex64::new(1.5, 0.7)] {
            let d = delta_transform(&two, z).unwrap();
            let expect = Complex64::new(0.5, 0.0) / ((Complex64::new(1.0, 0.0) + z * 0.5) * 1.5);
            assert!((d - expect).norm() < 1e-12, "{z}: {d} vs {expect}");
        }
        let t = tilted(&make_basic_law(0.5).unwrap(), 0.5);
        let d0 = delta_transform(&t, Complex64::new(0.0, 0.0)).unwrap();
        assert!((d0.re - (1.0 - 1.0 / t.m_b_f64())).abs() < 1e-14);
    }

    #[test]
    fn delta_transform_rejects_pole() {
        let b = 0.5;
        let t = tilted(&make_shifted_law(0.5, 1).unwrap(), b);
        let z0 = half_unit_shift_root(b);
        assert!(matches!(delta_transform(&t, Complex64::new(z0, 0.0)), Err(Error::Singularity(_))));
    }

    #[test]
    fn muhat_at_radius() {
        let b = 0.5;
        let t = tilted(&make_basic_law(0.5).unwrap(), b);
        let z = Complex64::new(1.0 / (-b).exp(), 0.0);
        let g = muhat_and_grubel_check(&t, z, 50).unwrap();
        let expect = (t.c_b_f64() - 1.0) / (t.m_b_f64() * (b.exp() - 1.0));
        assert!((g.muhat_closed.re - expect).abs() < 1e-12);
    }

    #[test]
    fn grubel_inside_unit_disk() {
        let t = tilted(&make_basic_law(0.5).unwrap(), 0.5);
        let g = muhat_and_grubel_check(&t, Complex64::new(0.5, 0.0), 500).unwrap();
        assert!(g.residual < 1e-8, "{}", g.residual);
        let z = Complex64::from_polar(0.9, PI / 3.0);
        let g = muhat_and_grubel_check(&t, z, 500).unwrap();
        let diff = (Complex64::from(g.muhat_closed) - Complex64::from(g.muhat_series)).norm();
        assert!(diff <= g.series_tail_bound + 1e-14, "{diff} > {}", g.series_tail_bound);
        assert!(muhat_and_grubel_check(&t, Complex64::new(1.0, 0.0), 10).is_err());
        assert!(muhat_and_grubel_check(&t, Complex64::new(0.0, 0.0), 10).is_err());
    }

    #[test]
    fn counts() {
        let shifted = make_shifted_law(0.5, 1).unwrap();
        let t = tilted(&shifted, 0.5);
        assert_eq!(count_zeros(&t, 1.01, 0.5f64.exp() - 0.01).unwrap().count, 1);
        let t = tilted(&shifted, 0.2);
        let (r_in, r_out) = default_annulus(&t);
        assert_eq!(count_zeros(&t, r_in, r_out).unwrap().count, 0);
        for b in [0.1, 0.5, 1.0, 3.0] {
            let t = tilted(&make_basic_law(0.5).unwrap(), b);
            let (r_in, r_out) = default_annulus(&t);
            assert_eq!(count_zeros(&t, r_in, r_out).unwrap().count, 0);
        }
    }

    #[test]
    fn explicit_root() {
        let b = 0.5;
        let t = tilted(&make_shifted_law(0.5, 1).unwrap(), b);
        let roots = find_roots(&t, b.exp() * (1.0 - OUTER_MARGIN)).unwrap();
        assert_eq!(roots.len(), 1);
        let z0 = half_unit_shift_root(b);
        assert!((roots[0].z0.re - z0).abs() < 1e-10);
        assert_eq!(roots[0].z0.im, 0.0);
        assert!(roots[0].residual < 1e-12);
    }

    #[test]
    fn basic_has_no_roots() {
        let t = tilted(&make_basic_law(0.5).unwrap(), 1.0);
        let (_, r_out) = default_annulus(&t);
        assert!(find_roots(&t, r_out).unwrap().is_empty());
        assert_eq!(pole_asymptote(&[], 10).unwrap(), 0.0);
    }

    #[test]
    fn annulus_preconditions() {
        let t = tilted(&make_basic_law(0.5).unwrap(), 0.5);
        assert!(count_zeros(&t, 0.9, 1.2).is_err());
        assert!(count_zeros(&t, 1.3, 1.2).is_err());
        assert!(count_zeros(&t, 1.01, 2.0).is_err());
    }

    #[test]
    fn critical_tilt_sentinel_and_constant() {
        let basic = make_basic_law(0.5).unwrap();
        let ct = critical_tilt(&basic, 0.1, 5.0, 1e-3).unwrap();
        assert!(ct.b0.is_infinite());
        let shifted = make_shifted_law(0.5, 1).unwrap();
        assert!(matches!(critical_tilt(&shifted, 0.3, 0.6, 1e-3), Err(Error::PredicateConstant { .. })));
    }

    #[test]
    fn closed_forms_agree() {
        let b0 = half_unit_shift_b0();
        assert!((b0 - 0.248399).abs() < 1e-6);
        assert!((half_unit_shift_root(b0).abs() - b0.exp()).abs() < 1e-12);
    }

    #[test]
    fn decimal_points_round_trip() {
        let r = RootReport {
            z0: Complex64::new(-1.25, 0.0).into(),
            modulus: 1.25,
            khat_derivative: Complex64::new(0.1, -0.2).into(),
            pole_coefficient: Complex64::new(3.0, 1e-300).into(),
            residual: 1e-17,
        };
        let text = serde_json::to_string(&r).unwrap();
        assert!(text.contains("\"re\":\"-1.25\""));
        let back: RootReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back, r);
    }
}
