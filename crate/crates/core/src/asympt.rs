//! Decay rates, sharp-asymptotic ratios, correlation functions and the
//! correlation length.

use std::io::Write;

use rayon::prelude::*;
use rug::Float;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::laws::{tilt, untilted, InterArrivalLaw, TiltedLaw};
use crate::precision::{decimal_f64, ln_abs, unit_at, PrecisionSpec};
use crate::renewal::{delta_series, RenewalSeries};

/// Minimum number of usable points for a rate fit.
pub const MIN_FIT_POINTS: usize = 20;

/// Multiple of the precision unit below which a value counts as noise.
pub const FLOOR_FACTOR: f64 = 1e3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    #[serde(with = "decimal_f64")]
    pub rate: f64,
    pub window: (usize, usize),
    #[serde(with = "decimal_f64")]
    pub fit_r2: f64,
    pub oscillatory: bool,
    pub n_sign_changes: usize,
    /// Points entering the regression (envelope points when oscillatory).
    pub fit_points: usize,
}

/// `[n_max/4, 3 n_max/4]`.
pub fn default_window(n_max: usize) -> (usize, usize) {
    ((n_max / 4).max(1), (3 * n_max / 4).max(1))
}

fn noise_floor_ln(bits: u32, n: usize) -> f64 {
    ln_abs(&unit_at(bits, n)) + FLOOR_FACTOR.ln()
}

/// Least-squares decay rate of `|d(n)|` over `window`.
///
/// When `d` changes sign inside the window, only the largest `|d|` of each
/// constant-sign run enters the fit.
pub fn decay_rate(series: &RenewalSeries, window: (usize, usize)) -> Result<RateReport> {
    let (lo, hi) = window;
    if lo < 1 || hi > series.n_max || lo >= hi {
        return domain(format!("window ({lo}, {hi}) must satisfy 1 <= lo < hi <= {}", series.n_max));
    }
    let bits = series.precision_bits;
    let mut usable: Vec<(usize, f64, bool)> = Vec::new();
    let mut nonzero = 0usize;
    for n in lo..=hi {
        let d = &series.d[n];
        if d.is_zero() {
            continue;
        }
        nonzero += 1;
        let l = ln_abs(d);
        if l > noise_floor_ln(bits, n) {
            usable.push((n, l, d.is_sign_positive()));
        }
    }
    if nonzero == 0 {
        return Err(Error::Degenerate("delta vanishes identically on the window".into()));
    }
    if usable.is_empty() {
        return Err(Error::Precision(format!(
            "window ({lo}, {hi}) lies below the noise floor at {bits} bits"
        )));
    }
    if usable.len() < MIN_FIT_POINTS {
        return Err(Error::InsufficientData(format!(
            "{} usable points in ({lo}, {hi}); need {MIN_FIT_POINTS}",
            usable.len()
        )));
    }
    let n_sign_changes = usable.windows(2).filter(|w| w[0].2 != w[1].2).count();
    let oscillatory = n_sign_changes > 0;
    let points: Vec<(f64, f64)> = if oscillatory {
        let mut runs: Vec<(f64, f64)> = Vec::new();
        let mut best = (usable[0].0 as f64, usable[0].1);
        for w in usable.windows(2) {
            if w[0].2 != w[1].2 {
                runs.push(best);
                best = (w[1].0 as f64, w[1].1);
            } else if w[1].1 > best.1 {
                best = (w[1].0 as f64, w[1].1);
            }
        }
        runs.push(best);
        // the outer runs may be cut by the window
        if runs.len() >= 5 {
            runs.pop();
            runs.remove(0);
        }
        runs
    } else {
        usable.iter().map(|&(n, l, _)| (n as f64, l)).collect()
    };
    if points.len() < 3 {
        return Err(Error::InsufficientData(format!("{} envelope points in ({lo}, {hi})", points.len())));
    }
    let (slope, r2) = linear_fit(&points);
    Ok(RateReport { rate: -slope, window, fit_r2: r2, oscillatory, n_sign_changes, fit_points: points.len() })
}

/// Slope and coefficient of determination of an ordinary least-squares line.
fn linear_fit(points: &[(f64, f64)]) -> (f64, f64) {
    let k = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / k;
    let my = points.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let ss_res: f64 = points.iter().map(|p| (p.1 - my - slope * (p.0 - mx)).powi(2)).sum();
    let r2 = if syy > 0.0 { (1.0 - ss_res / syy).clamp(0.0, 1.0) } else { 1.0 };
    (slope, r2)
}

fn check_index(series: &RenewalSeries, n: usize) -> Result<()> {
    if n > series.n_max {
        return domain(format!("n = {n} exceeds n_max = {}", series.n_max));
    }
    Ok(())
}

/// `d(n) (c(b) - 1)^2 / K_b(n)`. Returns exactly `0` when `d(n)` is zero
/// to working precision.
pub fn sharp_ratio(series: &RenewalSeries, n: usize) -> Result<f64> {
    check_index(series, n)?;
    let kb = &series.kernel.kb[n];
    if kb.is_zero() {
        return Err(Error::Singularity(format!("K_b({n}) = 0")));
    }
    let d = &series.d[n];
    let bits = series.precision_bits;
    if d.is_zero() || ln_abs(d) <= noise_floor_ln(bits, n) {
        return Ok(0.0);
    }
    let c1 = Float::with_val(bits, series.tilted.c_b() - 1u32);
    let num = Float::with_val(bits, d * &c1) * &c1;
    Ok(Float::with_val(bits, num / kb).to_f64())
}

/// `μ̂_b(e^b) = (c(b) - 1) / (m_b (e^b - 1))`.
pub fn muhat_at_radius(tilted: &TiltedLaw) -> Float {
    let bits = tilted.bits();
    let c1 = Float::with_val(bits, tilted.c_b() - 1u32);
    let eb1 = Float::with_val(bits, tilted.b()).exp_m1();
    c1 / (Float::with_val(bits, tilted.m_b() * &eb1))
}

/// `∇u_b(n) / (-μ_b(n) / (μ̂_b(e^b)^2 m_b))`.
pub fn grad_ratio(series: &RenewalSeries, n: usize) -> Result<f64> {
    check_index(series, n)?;
    let bits = series.precision_bits;
    let m = series.tilted.m_b();
    let mu = Float::with_val(bits, &series.kernel.kbar[n] / m);
    let floor = noise_floor_ln(bits, n);
    if mu.is_zero() || ln_abs(&mu) <= floor {
        return Err(Error::Precision(format!("μ_b({n}) is below the noise floor at {bits} bits")));
    }
    let grad = &series.grad_u[n];
    if !grad.is_zero() && ln_abs(grad) <= floor {
        return Err(Error::Precision(format!("∇u_b({n}) is below the noise floor at {bits} bits")));
    }
    let mh = muhat_at_radius(&series.tilted.at_bits(bits)?);
    let denom = -Float::with_val(bits, &mu / Float::with_val(bits, &mh * &mh)) / m;
    Ok(Float::with_val(bits, grad / denom).to_f64())
}

/// `(m_b / (m_b - 1)) (u(n) - 1/m_b)`.
pub fn correlation_fn(series: &RenewalSeries, n: usize) -> Result<f64> {
    check_index(series, n)?;
    if series.tilted.is_degenerate() {
        return Err(Error::Degenerate("m_b = 1: the correlation function is undefined".into()));
    }
    let bits = series.precision_bits;
    let m = series.tilted.m_b();
    let scale = Float::with_val(bits, m / Float::with_val(bits, m - 1u32));
    Ok(Float::with_val(bits, &series.d[n] * scale).to_f64())
}

/// Renewal-structure checks at lag `n`: `μ_b(n+1)/μ_b(n)` against `e^{-b}`
/// and `sum_{j<=n} μ_b(j) μ_b(n-j) / μ_b(n)` against `2 μ̂_b(e^b)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CnwCheck {
    pub n: usize,
    #[serde(with = "decimal_f64")]
    pub mu_ratio: f64,
    #[serde(with = "decimal_f64")]
    pub mu_ratio_target: f64,
    #[serde(with = "decimal_f64")]
    pub conv_ratio: f64,
    #[serde(with = "decimal_f64")]
    pub conv_target: f64,
}

pub fn cnw_check(tilted: &TiltedLaw, n: usize) -> Result<CnwCheck> {
    if n < 1 {
        return domain("lag must be at least 1");
    }
    let bits = tilted.bits();
    let kernel = tilted.kernel(n + 1);
    let m = tilted.m_b();
    let mu: Vec<Float> = kernel.kbar.iter().map(|k| Float::with_val(bits, k / m)).collect();
    if mu[n].is_zero() {
        return Err(Error::Singularity(format!("μ_b({n}) = 0")));
    }
    let mu_ratio = Float::with_val(bits, &mu[n + 1] / &mu[n]).to_f64();
    let mut conv = Float::new(bits);
    for j in 0..=n {
        conv += Float::with_val(bits, &mu[j] * &mu[n - j]);
    }
    let conv_ratio = Float::with_val(bits, conv / &mu[n]).to_f64();
    Ok(CnwCheck {
        n,
        mu_ratio,
        mu_ratio_target: (-tilted.b()).exp(),
        conv_ratio,
        conv_target: 2.0 * muhat_at_radius(tilted).to_f64(),
    })
}

fn tilt_or_raw(law: &InterArrivalLaw, b: f64) -> Result<TiltedLaw> {
    if b == 0.0 {
        untilted(law, PrecisionSpec::Auto)
    } else {
        tilt(law, b, PrecisionSpec::Auto)
    }
}

/// `ξ(b) = 1 / rate` of the delta sequence up to `n_max`, fitted on the
/// default window. `b = 0` uses the law itself (finite mean required).
pub fn correlation_length(law: &InterArrivalLaw, b: f64, n_max: usize) -> Result<f64> {
    Ok(correlation_length_report(law, b, n_max, PrecisionSpec::Auto)?.1)
}

fn correlation_length_report(
    law: &InterArrivalLaw,
    b: f64,
    n_max: usize,
    precision: PrecisionSpec,
) -> Result<(RateReport, f64)> {
    if !(b >= 0.0 && b.is_finite()) {
        return domain(format!("b must be finite and non-negative, got {b}"));
    }
    let tilted = tilt_or_raw(law, b)?;
    let series = delta_series(&tilted, n_max, precision)?;
    let rate = decay_rate(&series, default_window(n_max))?;
    let xi = 1.0 / rate.rate;
    Ok((rate, xi))
}

/// Horizon used by [`xi_scan`] by default: `160 / b^{3/2}`, at least 200.
///
/// The fitted rate of `n^{-3/2} e^{-bn}` overshoots `b` by about
/// `3 / n_max`, so `b ξ` deviates from one by about `3 / (b n_max)`; this
/// horizon makes the deviation shrink like `√b`.
pub fn default_xi_nmax(b: f64) -> usize {
    ((160.0 / b.powf(1.5)).ceil() as usize).max(200)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XiRow {
    #[serde(with = "decimal_f64")]
    pub b: f64,
    #[serde(with = "decimal_f64")]
    pub xi: f64,
    #[serde(with = "decimal_f64")]
    pub b_times_xi: f64,
    #[serde(with = "decimal_f64")]
    pub rate: f64,
    #[serde(with = "decimal_f64")]
    pub fit_r2: f64,
    pub oscillatory: bool,
    pub n_max: usize,
}

/// `ξ(b)` over a grid, rows in grid order.
pub fn xi_scan<F>(law: &InterArrivalLaw, b_grid: &[f64], n_max_rule: F) -> Result<Vec<XiRow>>
where
    F: Fn(f64) -> usize + Sync,
{
    if let Some(b) = b_grid.iter().find(|b| !(**b > 0.0 && b.is_finite())) {
        return domain(format!("grid value {b} is not a positive tilt"));
    }
    b_grid
        .par_iter()
        .map(|&b| {
            let n_max = n_max_rule(b);
            let (rate, xi) = correlation_length_report(law, b, n_max, PrecisionSpec::Auto)?;
            Ok(XiRow {
                b,
                xi,
                b_times_xi: b * xi,
                rate: rate.rate,
                fit_r2: rate.fit_r2,
                oscillatory: rate.oscillatory,
                n_max,
            })
        })
        .collect()
}

pub fn write_xi_csv<W: Write>(rows: &[XiRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "b,xi,b_times_xi,rate,fit_r2,oscillatory")?;
    for r in rows {
        writeln!(out, "{:?},{:?},{:?},{:?},{:?},{}", r.b, r.xi, r.b_times_xi, r.rate, r.fit_r2, r.oscillatory)?;
    }
    Ok(())
}
