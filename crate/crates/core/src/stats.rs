//! Two-sample tests and moment estimators used by the Monte Carlo channel.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    /// Largest distance between the two empirical CDFs.
    pub d: f64,
    pub p_value: f64,
    /// `n m / (n + m)`
    pub n_eff: f64,
}

/// Kolmogorov survival function `Q(λ) = 2 Σ_{k≥1} (-1)^{k-1} e^{-2k²λ²}`.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.0 {
        // theta-function form, fast for small λ
        let c = std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda);
        let mut s = 0.0;
        for k in 1..=20 {
            let m = (2 * k - 1) as f64;
            s += (-m * m * c).exp();
        }
        return (1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * s).clamp(0.0, 1.0);
    }
    let mut s = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        s += if k % 2 == 1 { term } else { -term };
        if term < 1e-300 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

/// Asymptotic p-value of a KS distance with the small-sample correction
/// `λ = (√n + 0.12 + 0.11/√n) d`.
pub fn ks_p_value(d: f64, n_eff: f64) -> f64 {
    let r = n_eff.sqrt();
    kolmogorov_q((r + 0.12 + 0.11 / r) * d)
}

/// Distance at which [`ks_p_value`] equals `alpha`.
pub fn ks_critical(n_eff: f64, alpha: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if ks_p_value(mid, n_eff) > alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Two-sample Kolmogorov–Smirnov test.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    if a.is_empty() || b.is_empty() {
        return Err(invalid("KS test needs two nonempty samples"));
    }
    if a.iter().chain(b).any(|x| !x.is_finite()) {
        return Err(invalid("KS test needs finite samples"));
    }
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (n, m) = (x.len(), y.len());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let v = x[i].min(y[j]);
        while i < n && x[i] <= v {
            i += 1;
        }
        while j < m && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let n_eff = (n * m) as f64 / (n + m) as f64;
    Ok(KsResult { d, p_value: ks_p_value(d, n_eff), n_eff })
}

/// Estimate of `E exp(-u²/2 X)` with its standard error.
pub fn empirical_laplace(samples: &[f64], u: f64) -> (f64, f64) {
    let vals: Vec<f64> = samples.iter().map(|x| (-0.5 * u * u * x).exp()).collect();
    mean_se(&vals)
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample mean and its standard error.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = mean(xs);
    if xs.len() < 2 {
        return (m, f64::NAN);
    }
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Unbiased k-statistic of order 2, 3 or 4.
pub fn k_statistic(xs: &[f64], order: u32) -> Result<f64> {
    let n = xs.len() as f64;
    if xs.len() < 4 {
        return Err(invalid("k-statistics need at least 4 samples"));
    }
    let m = mean(xs);
    let (mut s2, mut s3, mut s4) = (0.0, 0.0, 0.0);
    for x in xs {
        let d = x - m;
        let d2 = d * d;
        s2 += d2;
        s3 += d2 * d;
        s4 += d2 * d2;
    }
    let (m2, m3, m4) = (s2 / n, s3 / n, s4 / n);
    Ok(match order {
        2 => n * m2 / (n - 1.0),
        3 => n * n * m3 / ((n - 1.0) * (n - 2.0)),
        4 => n * n * ((n + 1.0) * m4 - 3.0 * (n - 1.0) * m2 * m2) / ((n - 1.0) * (n - 2.0) * (n - 3.0)),
        other => return Err(invalid(format!("k-statistic of order {other} not available"))),
    })
}

/// k-statistic averaged over `batches` equal batches, with the standard error
/// of the batch mean.
pub fn batched_k_statistic(xs: &[f64], order: u32, batches: usize) -> Result<(f64, f64)> {
    if batches < 2 || xs.len() < 4 * batches {
        return Err(invalid("not enough samples for the requested batches"));
    }
    let size = xs.len() / batches;
    let ks = xs.chunks_exact(size).take(batches).map(|c| k_statistic(c, order)).collect::<Result<Vec<_>>>()?;
    Ok(mean_se(&ks))
}

/// Pearson correlation coefficient.
pub fn correlation(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(invalid("correlation needs two samples of equal length ≥ 2"));
    }
    let (ma, mb) = (mean(a), mean(b));
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    Ok(sab / (saa * sbb).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kolmogorov_branches_agree() {
        // both series are valid near λ = 1
        let c = std::f64::consts::PI.powi(2) / 8.0;
        let theta = 1.0
            - (2.0 * std::f64::consts::PI).sqrt()
                * (1..=20).map(|k| (-((2 * k - 1) as f64).powi(2) * c).exp()).sum::<f64>();
        assert!((theta - kolmogorov_q(1.0)).abs() < 1e-14);
        assert!((kolmogorov_q(1.3581) - 0.05).abs() < 1e-4);
        assert!((kolmogorov_q(1.6276) - 0.01).abs() < 1e-4);
        assert_eq!(kolmogorov_q(0.0), 1.0);
    }

    #[test]
    fn ks_identical_and_disjoint() {
        let a: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let r = ks_two_sample(&a, &a).unwrap();
        assert_eq!(r.d, 0.0);
        assert_eq!(r.p_value, 1.0);
        let b: Vec<f64> = a.iter().map(|x| x + 1000.0).collect();
        let r = ks_two_sample(&a, &b).unwrap();
        assert_eq!(r.d, 1.0);
        assert!(r.p_value < 1e-20);
    }

    #[test]
    fn ks_handles_ties() {
        let a = [1.0, 1.0, 2.0, 2.0];
        let b = [1.0, 2.0, 2.0, 2.0];
        assert!((ks_two_sample(&a, &b).unwrap().d - 0.25).abs() < 1e-15);
    }

    #[test]
    fn critical_value_inverts_p() {
        let d = ks_critical(10_000.0, 0.01);
        assert!((ks_p_value(d, 10_000.0) - 0.01).abs() < 1e-9);
    }

    #[test]
    fn k_statistics_small_sample() {
        let xs = [1.0, 2.0, 4.0, 7.0, 11.0];
        // variance with n-1
        assert!((k_statistic(&xs, 2).unwrap() - variance(&xs)).abs() < 1e-12);
        assert!(k_statistic(&xs, 5).is_err());
    }

    #[test]
    fn correlation_of_linear_map() {
        let a = [1.0, 2.0, 3.0, 5.0];
        let b: Vec<f64> = a.iter().map(|x| -2.0 * x + 1.0).collect();
        assert!((correlation(&a, &b).unwrap() + 1.0).abs() < 1e-15);
    }
}
