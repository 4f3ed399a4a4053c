//! Finite-volume homogeneous pinning model.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::laws::InterArrivalLaw;
use crate::precision::decimal_f64;

/// `log Zc(0..=N)` (pinned endpoint) and `log Z(0..=N)` (free endpoint).
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionTable {
    pub beta: f64,
    pub n: usize,
    pub log_zc: Vec<f64>,
    pub log_z: Vec<f64>,
}

impl PartitionTable {
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "n,log_Zc,log_Z")?;
        for n in 0..=self.n {
            writeln!(out, "{n},{:?},{:?}", self.log_zc[n], self.log_z[n])?;
        }
        Ok(())
    }
}

fn log_sum_exp(terms: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = terms.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + terms.map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// `Zc(n) = 1{n=0} + sum_{j<n} Zc(j) e^β K(n-j)` and
/// `Z(n) = sum_{j<=n} Zc(j) K̄(n-j)`, both in log form.
pub fn partition(law: &InterArrivalLaw, beta: f64, n: usize) -> Result<PartitionTable> {
    if n < 1 {
        return domain("volume N must be at least 1");
    }
    if !beta.is_finite() {
        return domain(format!("beta must be finite, got {beta}"));
    }
    let log_k: Vec<f64> = std::iter::once(f64::NEG_INFINITY).chain(law.densities().take(n).map(f64::ln)).collect();
    let log_kbar: Vec<f64> = law.survival_vec(n).into_iter().map(f64::ln).collect();
    let mut log_zc = Vec::with_capacity(n + 1);
    log_zc.push(0.0);
    for m in 1..=n {
        let v = beta + log_sum_exp((0..m).map(|j| log_zc[j] + log_k[m - j]));
        log_zc.push(v);
    }
    let log_z: Vec<f64> = (0..=n).map(|m| log_sum_exp((0..=m).map(|j| log_zc[j] + log_kbar[m - j]))).collect();
    Ok(PartitionTable { beta, n, log_zc, log_z })
}

/// `(1/N) log Z(N)`; the gap to the free energy is `O(log N / N)`.
pub fn fe_estimate(table: &PartitionTable) -> f64 {
    table.log_z[table.n] / table.n as f64
}

/// Smallest accepted relative step for [`contact_fraction`].
pub const MIN_STEP: f64 = 1e-8;

/// `[log Z_{N,β+h} - log Z_{N,β-h}] / (2hN)`, the mean density of contacts.
pub fn contact_fraction(law: &InterArrivalLaw, beta: f64, n: usize, h: f64) -> Result<f64> {
    if !(h > MIN_STEP * beta.abs().max(1.0)) {
        return Err(Error::Precision(format!("step h = {h} is below the resolution of the difference quotient")));
    }
    let hi = partition(law, beta + h, n)?;
    let lo = partition(law, beta - h, n)?;
    Ok((hi.log_z[n] - lo.log_z[n]) / (2.0 * h * n as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PinningSummary {
    #[serde(with = "decimal_f64")]
    pub beta: f64,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(with = "decimal_f64")]
    pub fe_estimate: f64,
    #[serde(with = "decimal_f64")]
    pub contact_fraction: f64,
}

pub fn summarize(law: &InterArrivalLaw, beta: f64, n: usize, h: f64) -> Result<(PartitionTable, PinningSummary)> {
    let table = partition(law, beta, n)?;
    let summary = PinningSummary {
        beta,
        n,
        fe_estimate: fe_estimate(&table),
        contact_fraction: contact_fraction(law, beta, n, h)?,
    };
    Ok((table, summary))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::laws::{free_energy, make_basic_law, make_shifted_law, two_point_law};

    #[test]
    fn zero_beta_is_a_probability() {
        let law = make_basic_law(0.5).unwrap();
        let t = partition(&law, 0.0, 300).unwrap();
        assert!(t.log_z.iter().all(|z| z.abs() < 1e-12));
        assert!(fe_estimate(&t).abs() < 1e-14);
        let u1 = law.densities().next().unwrap();
        assert!((t.log_zc[1] - u1.ln()).abs() < 1e-15);
    }

    #[test]
    fn single_step() {
        let law = two_point_law(0.5).unwrap();
        let t = partition(&law, 0.7, 1).unwrap();
        assert!((t.log_zc[1] - (0.7 + 0.5f64.ln())).abs() < 1e-15);
        assert!(t.log_z.iter().zip(&t.log_zc).all(|(z, zc)| z >= zc));
    }

    #[test]
    fn free_energy_agreement() {
        let law = make_basic_law(0.5).unwrap();
        let beta = (2.0 + 2f64.sqrt()).ln();
        let f = free_energy(&law, beta, 1e-14).unwrap();
        assert!((f - 2f64.ln()).abs() < 1e-10);
        let small = fe_estimate(&partition(&law, beta, 100).unwrap());
        let big = fe_estimate(&partition(&law, beta, 2000).unwrap());
        assert!((big - f).abs() < 0.01);
        assert!((big - f).abs() < (small - f).abs());
    }

    #[test]
    fn dense_limit() {
        let law = make_shifted_law(0.5, 2).unwrap();
        let target = 1.0 / law.support_start() as f64;
        let c = contact_fraction(&law, 8.0, 400, 1e-4).unwrap();
        assert!((c - target).abs() < 0.05 * target, "contact fraction {c}");
    }

    #[test]
    fn step_guard_and_csv() {
        let law = make_basic_law(0.5).unwrap();
        assert!(matches!(contact_fraction(&law, 1.0, 100, 1e-12), Err(Error::Precision(_))));
        let (t, s) = summarize(&law, 1.0, 120, 1e-4).unwrap();
        assert_eq!(s.n, 120);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("n,log_Zc,log_Z\n0,0.0,0.0\n"));
        let json = serde_json::to_string(&s).unwrap();
        assert!(json.contains("\"N\":120"));
    }
}
