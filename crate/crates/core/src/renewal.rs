//! Mass renewal function, delta sequence and a Monte Carlo cross-check.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rug::Float;
use serde::Serialize;

use crate::error::{domain, Result};
use crate::laws::{Kernel, TiltedLaw};
use crate::precision::{to_decimal, PrecisionSpec};

/// Renewal arrays on `0..=n_max`, all at `precision_bits`.
#[derive(Debug, Clone)]
pub struct RenewalSeries {
    pub tilted: TiltedLaw,
    pub n_max: usize,
    pub u: Vec<Float>,
    pub u_inf: Float,
    pub d: Vec<Float>,
    pub grad_u: Vec<Float>,
    pub precision_bits: u32,
    /// `K_b` and `K̄_b` on `0..=n_max` at `precision_bits`.
    pub kernel: Kernel,
}

impl RenewalSeries {
    pub fn d_f64(&self) -> Vec<f64> {
        self.d.iter().map(Float::to_f64).collect()
    }

    pub fn u_f64(&self) -> Vec<f64> {
        self.u.iter().map(Float::to_f64).collect()
    }

    /// Writes `n,u,d,grad_u` rows with a header, full-precision decimals.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "n,u,d,grad_u")?;
        for n in 0..=self.n_max {
            writeln!(
                out,
                "{},{},{},{}",
                n,
                to_decimal(&self.u[n]),
                to_decimal(&self.d[n]),
                to_decimal(&self.grad_u[n])
            )?;
        }
        Ok(())
    }
}

fn prepare(tilted: &TiltedLaw, n_max: usize, precision: PrecisionSpec) -> Result<TiltedLaw> {
    if n_max < 1 {
        return domain("n_max must be at least 1");
    }
    let bits = precision.resolve(tilted.b(), n_max)?;
    tilted.at_bits(bits)
}

/// `u(n) = 1{n=0} + sum_{j<n} u(j) K_b(n-j)`, with `u(∞) = 1/m_b`.
pub fn mass_renewal(tilted: &TiltedLaw, n_max: usize, precision: PrecisionSpec) -> Result<RenewalSeries> {
    let tilted = prepare(tilted, n_max, precision)?;
    let bits = tilted.bits();
    let kernel = tilted.kernel(n_max);
    let mut u: Vec<Float> = Vec::with_capacity(n_max + 1);
    u.push(Float::with_val(bits, 1));
    let mut acc = Float::new(bits);
    let mut prod = Float::new(bits);
    for n in 1..=n_max {
        rug::Assign::assign(&mut acc, 0);
        for j in 0..n {
            rug::Assign::assign(&mut prod, &u[j] * &kernel.kb[n - j]);
            acc += &prod;
        }
        u.push(acc.clone());
    }
    let u_inf = tilted.u_inf();
    let d: Vec<Float> = u.iter().map(|x| Float::with_val(bits, x - &u_inf)).collect();
    let grad_u = gradient(&u, bits);
    Ok(RenewalSeries { tilted, n_max, u, u_inf, d, grad_u, precision_bits: bits, kernel })
}

/// Delta sequence `d(n) = u(n) - u(∞)` by the subtracted recursion
/// `d(0) = 1 - u∞`, `d(n) = sum_{j<n} d(j) K_b(n-j) - u∞ K̄_b(n)`.
pub fn delta_series(tilted: &TiltedLaw, n_max: usize, precision: PrecisionSpec) -> Result<RenewalSeries> {
    let tilted = prepare(tilted, n_max, precision)?;
    let bits = tilted.bits();
    let kernel = tilted.kernel(n_max);
    let u_inf = tilted.u_inf();
    let mut d: Vec<Float> = Vec::with_capacity(n_max + 1);
    d.push(Float::with_val(bits, 1 - &u_inf));
    let mut acc = Float::new(bits);
    let mut prod = Float::new(bits);
    for n in 1..=n_max {
        rug::Assign::assign(&mut acc, &u_inf * &kernel.kbar[n]);
        acc = -acc;
        for j in 0..n {
            rug::Assign::assign(&mut prod, &d[j] * &kernel.kb[n - j]);
            acc += &prod;
        }
        d.push(acc.clone());
    }
    let u: Vec<Float> = d.iter().map(|x| Float::with_val(bits, x + &u_inf)).collect();
    let mut grad_u = Vec::with_capacity(n_max + 1);
    grad_u.push(u[0].clone());
    for n in 1..=n_max {
        grad_u.push(Float::with_val(bits, &d[n] - &d[n - 1]));
    }
    Ok(RenewalSeries { tilted, n_max, u, u_inf, d, grad_u, precision_bits: bits, kernel })
}

fn gradient(u: &[Float], bits: u32) -> Vec<Float> {
    let mut out = Vec::with_capacity(u.len());
    for n in 0..u.len() {
        if n == 0 {
            out.push(u[0].clone());
        } else {
            out.push(Float::with_val(bits, &u[n] - &u[n - 1]));
        }
    }
    out
}

/// Fraction of sampled renewal paths visiting each site, with binomial
/// standard errors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McEstimate {
    pub horizon: usize,
    pub n_paths: u64,
    pub seed: u64,
    pub u_hat: Vec<f64>,
    pub std_err: Vec<f64>,
}

/// Tail mass below which the sampling table is cut and renormalized.
pub const MC_TAIL_CUTOFF: f64 = 1e-15;

/// Paths are grouped into fixed-size blocks, each with its own stream, so the
/// estimate does not depend on the number of worker threads.
const MC_BLOCK: u64 = 4096;

/// Monte Carlo estimate of `u_b(0..=horizon)` by inverse-CDF sampling.
pub fn mc_sample(tilted: &TiltedLaw, horizon: usize, n_paths: u64, seed: u64) -> Result<McEstimate> {
    if horizon < 1 {
        return domain("horizon must be at least 1");
    }
    if n_paths < 1 {
        return domain("n_paths must be at least 1");
    }
    let cdf = sampling_cdf(tilted, horizon);
    let blocks = n_paths.div_ceil(MC_BLOCK);
    let counts = (0..blocks)
        .into_par_iter()
        .map(|block| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(block);
            let paths = MC_BLOCK.min(n_paths - block * MC_BLOCK);
            let mut hits = vec![0u64; horizon + 1];
            for _ in 0..paths {
                let mut pos = 0usize;
                hits[0] += 1;
                loop {
                    let x: f64 = rng.gen();
                    let step = cdf.partition_point(|&c| c <= x) + 1;
                    pos += step.min(cdf.len());
                    if pos > horizon {
                        break;
                    }
                    hits[pos] += 1;
                }
            }
            hits
        })
        .reduce(
            || vec![0u64; horizon + 1],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );
    let total = n_paths as f64;
    let u_hat: Vec<f64> = counts.iter().map(|&c| c as f64 / total).collect();
    let std_err = u_hat.iter().map(|&p| (p * (1.0 - p) / total).sqrt()).collect();
    Ok(McEstimate { horizon, n_paths, seed, u_hat, std_err })
}

/// Cumulative distribution of `K_b` over `1..=L`, where `L` is where the
/// remaining mass drops below [`MC_TAIL_CUTOFF`] (or the horizon, since
/// longer steps never land inside it).
fn sampling_cdf(tilted: &TiltedLaw, horizon: usize) -> Vec<f64> {
    let kernel = tilted.kernel(horizon);
    let mut cdf = Vec::with_capacity(horizon);
    let mut acc = 0.0;
    for n in 1..=horizon {
        acc += kernel.kb[n].to_f64();
        cdf.push(acc);
        if kernel.kbar[n].to_f64() < MC_TAIL_CUTOFF {
            break;
        }
    }
    // Steps longer than the table leave the window; keep that mass as an
    // explicit overflow bucket unless it is negligible.
    let last = acc;
    let rest = kernel.kbar[cdf.len()].to_f64();
    if rest >= MC_TAIL_CUTOFF {
        let total = last + rest;
        for c in &mut cdf {
            *c /= total;
        }
        cdf.push(1.0);
    } else {
        for c in &mut cdf {
            *c /= last;
        }
        if let Some(c) = cdf.last_mut() {
            *c = 1.0;
        }
    }
    cdf
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::laws::{geometric_law, make_basic_law, tilt, two_point_law, untilted};

    fn close(a: &Float, b: f64, tol: f64) -> bool {
        (a.to_f64() - b).abs() <= tol
    }

    #[test]
    fn two_point_hand_unrolled() {
        let t = untilted(&two_point_law(0.5).unwrap(), PrecisionSpec::Auto).unwrap();
        let s = mass_renewal(&t, 5, PrecisionSpec::Auto).unwrap();
        assert!(close(&s.u[0], 1.0, 0.0));
        assert!(close(&s.u[1], 0.5, 1e-18));
        assert!(close(&s.u[2], 0.75, 1e-18));
        assert!(close(&s.u_inf, 2.0 / 3.0, 1e-18));
    }

    #[test]
    fn two_point_delta_closed_form() {
        let t = untilted(&two_point_law(0.5).unwrap(), PrecisionSpec::Auto).unwrap();
        let s = delta_series(&t, 10, PrecisionSpec::Auto).unwrap();
        assert!(close(&s.d[1], -1.0 / 6.0, 1e-18));
        assert!(close(&s.d[2], 1.0 / 12.0, 1e-18));
    }

    #[test]
    fn geometric_is_flat() {
        let t = untilted(&geometric_law(0.3).unwrap(), PrecisionSpec::Auto).unwrap();
        let s = mass_renewal(&t, 20, PrecisionSpec::Auto).unwrap();
        for n in 1..=20 {
            assert!(close(&s.u[n], 0.7, 1e-15), "u({n}) = {}", s.u[n]);
        }
        let s = delta_series(&t, 20, PrecisionSpec::Auto).unwrap();
        assert!(close(&s.d[0], 0.3, 1e-15));
        for n in 1..=20 {
            assert!(close(&s.d[n], 0.0, 1e-15));
        }
    }

    #[test]
    fn first_delta_identity() {
        let t = tilt(&make_basic_law(0.4).unwrap(), 0.7, PrecisionSpec::Auto).unwrap();
        let s = delta_series(&t, 3, PrecisionSpec::Auto).unwrap();
        let kb1 = t.density_f64(1);
        let expect = kb1 - 1.0 / t.m_b_f64();
        assert!(close(&s.d[1], expect, 1e-14));
    }

    #[test]
    fn telescoping_gradient() {
        let t = tilt(&make_basic_law(0.5).unwrap(), 0.5, PrecisionSpec::Auto).unwrap();
        let s = delta_series(&t, 50, PrecisionSpec::Auto).unwrap();
        let mut acc = Float::new(s.precision_bits);
        for n in 0..=50 {
            acc += &s.grad_u[n];
            assert!((Float::with_val(s.precision_bits, &acc - &s.u[n])).abs().to_f64() < 1e-30);
        }
    }

    #[test]
    fn rejects_empty_inputs() {
        let t = tilt(&make_basic_law(0.5).unwrap(), 0.5, PrecisionSpec::Auto).unwrap();
        assert!(mass_renewal(&t, 0, PrecisionSpec::Auto).is_err());
        assert!(mc_sample(&t, 10, 0, 1).is_err());
        assert!(mc_sample(&t, 0, 10, 1).is_err());
        assert!(delta_series(&t, 1000, PrecisionSpec::Bits(64)).is_err());
    }

    #[test]
    fn mc_is_deterministic() {
        let t = tilt(&make_basic_law(0.5).unwrap(), 0.5, PrecisionSpec::Auto).unwrap();
        let a = mc_sample(&t, 20, 10_000, 7).unwrap();
        let b = mc_sample(&t, 20, 10_000, 7).unwrap();
        assert_eq!(a, b);
        let c = mc_sample(&t, 20, 10_000, 8).unwrap();
        assert_ne!(a.u_hat, c.u_hat);
        assert_eq!(a.u_hat[0], 1.0);
    }

    #[test]
    fn csv_has_header_and_rows() {
        let t = untilted(&two_point_law(0.5).unwrap(), PrecisionSpec::Auto).unwrap();
        let s = delta_series(&t, 4, PrecisionSpec::Auto).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "n,u,d,grad_u");
        assert_eq!(lines.len(), 6);
        assert!(lines[1].starts_with("0,1"));
    }
}
