//! Discrete stochastic Fubini check.
//!
//! A kernel `φ(t, x)` on `[0,1]²×[0,1]²` is sampled at midpoints into an
//! `n² × n²` matrix `M` (rows ↔ `t`, columns ↔ `x`). With i.i.d. cell
//! increments of variance `h² = 1/n²`, the field `X(t) = Σ_x M[t,x] ΔW_x` has
//! covariance `h² M Mᵀ` and the swapped field has covariance `h² Mᵀ M`.
//! The quadratic functional `h² Σ_t X(t)²` then has cumulants
//! `c_m tr((h² Φ)^m)`, and the two contractions share every trace power.

use faer::{Mat, Par};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::fields::midpoint;
use crate::rng::NormalStream;
use crate::spectral::symmetric_eigs;

/// Relative tolerance for the trace-power comparison.
pub const TRACE_TOL: f64 = 1e-12;
/// Tolerance for the eigenvalue multiset comparison, relative to the top eigenvalue.
pub const EIG_TOL: f64 = 1e-10;

/// `φ` at paired midpoints: entry `(p, q)` is `φ(t_p, x_q)` with
/// `p = i * n + j ↔ (x_i, x_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel4 {
    n: usize,
    values: Mat<f64>,
}

impl Kernel4 {
    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        if n < 1 {
            return Err(invalid("kernel resolution must be positive"));
        }
        let side = n * n;
        let values = Mat::from_fn(side, side, f);
        for j in 0..side {
            for i in 0..side {
                if !values[(i, j)].is_finite() {
                    return Err(invalid("kernel entries must be finite"));
                }
            }
        }
        Ok(Self { n, values })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn side(&self) -> usize {
        self.n * self.n
    }

    /// Cell weight `h² = 1/n²`.
    pub fn weight(&self) -> f64 {
        1.0 / (self.n * self.n) as f64
    }

    pub fn matrix(&self) -> &Mat<f64> {
        &self.values
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContractionPair {
    /// `h² Mᵀ M`: covariance of `∫ φ(x, t) W(dx)`.
    pub phi1: Mat<f64>,
    /// `h² M Mᵀ`: covariance of `∫ φ(t, x) W(dx)`.
    pub phi2: Mat<f64>,
    /// Operator weight `h²` applied when the contractions act as integral operators.
    pub weight: f64,
}

fn symmetrize(m: &mut Mat<f64>) {
    for j in 0..m.ncols() {
        for i in 0..j {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

pub fn contractions(phi: &Kernel4) -> ContractionPair {
    faer::set_global_parallelism(Par::Seq);
    let w = phi.weight();
    let m = &phi.values;
    let mut phi1 = m.transpose() * m * faer::Scale(w);
    let mut phi2 = m * m.transpose() * faer::Scale(w);
    symmetrize(&mut phi1);
    symmetrize(&mut phi2);
    ContractionPair { phi1, phi2, weight: w }
}

/// `2^{m-1} (m-1)!`: the `m`-th cumulant of `λ(ξ² - 1)` is `c_m λ^m`.
pub fn cumulant_coefficient(m: u32) -> f64 {
    let mut c = 2f64.powi(m as i32 - 1);
    for k in 1..m {
        c *= k as f64;
    }
    c
}

/// `tr(A^m)` for `m = 1..=m_max` by repeated multiplication.
pub fn trace_powers(a: &Mat<f64>, m_max: u32) -> Vec<f64> {
    faer::set_global_parallelism(Par::Seq);
    let mut out = Vec::with_capacity(m_max as usize);
    let mut p = a.clone();
    for m in 1..=m_max {
        if m > 1 {
            p = &p * a;
        }
        out.push((0..p.nrows()).map(|i| p[(i, i)]).sum());
    }
    out
}

/// `m`-th cumulant of the quadratic functional whose covariance operator is
/// `weight · matrix`: `c_m tr((weight · matrix)^m)`.
pub fn cumulant_m(matrix: &Mat<f64>, weight: f64, m: u32) -> Result<f64> {
    if m < 2 {
        return Err(invalid(format!("cumulant order {m} must be at least 2")));
    }
    if matrix.nrows() != matrix.ncols() {
        return Err(invalid("cumulant needs a square matrix"));
    }
    let op = matrix * faer::Scale(weight);
    let tr = trace_powers(&op, m)[m as usize - 1];
    Ok(cumulant_coefficient(m) * tr)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub m: u32,
    pub phi1: f64,
    pub phi2: f64,
    pub rel_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FubiniReport {
    pub n: usize,
    pub m_max: u32,
    /// `tr((h² Φ_k)^m)` for both contractions.
    pub traces: Vec<TraceRow>,
    pub max_rel_gap: f64,
    pub threshold: f64,
    /// Largest eigenvalue gap relative to the top eigenvalue, when computed.
    pub eig_gap: Option<f64>,
    pub pass: bool,
}

fn rel_gap(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Compares the trace powers `m = 2..=m_max` of the two weighted contractions.
pub fn fubini_check(phi: &Kernel4, m_max: u32) -> Result<FubiniReport> {
    if m_max < 2 {
        return Err(invalid(format!("m_max = {m_max} must be at least 2")));
    }
    let pair = contractions(phi);
    let w = pair.weight;
    let t1 = trace_powers(&(&pair.phi1 * faer::Scale(w)), m_max);
    let t2 = trace_powers(&(&pair.phi2 * faer::Scale(w)), m_max);
    let traces: Vec<TraceRow> = (2..=m_max)
        .map(|m| {
            let (a, b) = (t1[m as usize - 1], t2[m as usize - 1]);
            TraceRow { m, phi1: a, phi2: b, rel_gap: rel_gap(a, b) }
        })
        .collect();
    let max_rel_gap = traces.iter().map(|r| r.rel_gap).fold(0.0, f64::max);
    Ok(FubiniReport {
        n: phi.n,
        m_max,
        traces,
        max_rel_gap,
        threshold: TRACE_TOL,
        eig_gap: None,
        pass: max_rel_gap <= TRACE_TOL,
    })
}

/// Same as [`fubini_check`] plus the eigenvalue multiset comparison.
pub fn fubini_check_with_spectra(phi: &Kernel4, m_max: u32) -> Result<FubiniReport> {
    let mut report = fubini_check(phi, m_max)?;
    let pair = contractions(phi);
    let gap = contraction_eig_gap(&pair)?;
    report.eig_gap = Some(gap);
    report.pass = report.pass && gap <= EIG_TOL;
    Ok(report)
}

/// `max_k |λ_k(Φ₁) - λ_k(Φ₂)| / λ_max`, eigenvalues of the weighted operators.
pub fn contraction_eig_gap(pair: &ContractionPair) -> Result<f64> {
    let w = pair.weight;
    let a = symmetric_eigs(&(&pair.phi1 * faer::Scale(w)), "phi1")?;
    let b = symmetric_eigs(&(&pair.phi2 * faer::Scale(w)), "phi2")?;
    let top = a.eigs.first().copied().unwrap_or(0.0).max(b.eigs.first().copied().unwrap_or(0.0));
    if top == 0.0 {
        return Ok(0.0);
    }
    Ok(a.eigs.iter().zip(&b.eigs).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / top)
}

/// Dense kernel with independent standard normal entries.
pub fn random_kernel(n: usize, seed: u64) -> Result<Kernel4> {
    let side = n * n;
    let mut vals = vec![0.0; side * side];
    NormalStream::new(seed).fill(&mut vals);
    Kernel4::from_fn(n, |p, q| vals[p * side + q])
}

/// One of the four indicator-minus-product kernels, at a continuous point.
/// `x ≤ t` is inclusive.
pub fn phi_value(which: u8, t: (f64, f64), x: (f64, f64)) -> Result<f64> {
    let i1 = if x.0 <= t.0 { 1.0 } else { 0.0 };
    let i2 = if x.1 <= t.1 { 1.0 } else { 0.0 };
    phi_from_parts(which, t, i1, i2)
}

fn phi_from_parts(which: u8, t: (f64, f64), i1: f64, i2: f64) -> Result<f64> {
    let (t1, t2) = t;
    Ok(match which {
        1 => i1 * i2 - t1 * t2,
        2 => i1 * i2 - t1 * i2 - t2 * i1 + t1 * t2,
        3 => i1 * i2 - t1 * i2,
        4 => i1 * i2 - t2 * i1,
        other => return Err(invalid(format!("kernel index {other} not in 1..=4"))),
    })
}

/// Discretization of kernel `which` at midpoints. On the grid, `x ≤ t` means
/// index `k ≤ i`.
pub fn corollary2_kernel(which: u8, n: usize) -> Result<Kernel4> {
    phi_from_parts(which, (0.5, 0.5), 1.0, 1.0)?;
    let x: Vec<f64> = (0..n).map(|i| midpoint(i, n)).collect();
    Kernel4::from_fn(n, |p, q| {
        let (i, j) = (p / n, p % n);
        let (k, l) = (q / n, q % n);
        let i1 = if k <= i { 1.0 } else { 0.0 };
        let i2 = if l <= j { 1.0 } else { 0.0 };
        phi_from_parts(which, (x[i], x[j]), i1, i2).unwrap_or(f64::NAN)
    })
}
