//! Spectra of covariance operators and the Laplace transforms of the
//! quadratic functionals they describe.
//!
//! If `X` has covariance operator with eigenvalues `λ_k`, then
//! `∫ X² = Σ λ_k ξ_k²` in law with i.i.d. standard normal `ξ_k`, and
//! `E exp(-u²/2 ∫ X²) = Π (1 + u² λ_k)^{-1/2}`.

use std::io::Write;

use faer::{Mat, Par, Side};
use serde::{Deserialize, Serialize};

use crate::closed_form::hurwitz_zeta;
use crate::error::{invalid, Error, Result};
use crate::fields::midpoint;
use crate::kernels::{CovKernel, ProcessKind};
use crate::rng::NormalStream;

/// Relative threshold below which negative eigenvalues are treated as round-off.
pub const CLAMP_REL: f64 = 1e-10;
pub const DEFAULT_TENSOR_CUTOFF: usize = 2000;
/// Number of tensor products kept explicitly; the rest goes to `trace_tail`.
pub const TENSOR_KEEP: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SpectrumSource {
    Grid { kernel: String, n: usize },
    Analytic { kind: ProcessKind, count: usize },
    Tensor { left: String, right: String, cutoff: usize },
    Matrix { side: usize },
    Derived { description: String },
}

impl SpectrumSource {
    pub fn describe(&self) -> String {
        match self {
            SpectrumSource::Grid { kernel, n } => format!("grid({kernel}, n={n})"),
            SpectrumSource::Analytic { kind, count } => format!("analytic({kind}, {count})"),
            SpectrumSource::Tensor { left, right, cutoff } => format!("tensor({left} x {right}, cutoff={cutoff})"),
            SpectrumSource::Matrix { side } => format!("matrix({side}x{side})"),
            SpectrumSource::Derived { description } => description.clone(),
        }
    }
}

/// Descending nonnegative eigenvalues plus the mass not listed explicitly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub eigs: Vec<f64>,
    pub source: SpectrumSource,
    /// Sum of the eigenvalues that are not in `eigs`.
    pub trace_tail: f64,
    /// How many slightly negative eigenvalues were set to zero.
    #[serde(default)]
    pub clamped: usize,
}

impl Spectrum {
    /// Builds a spectrum from arbitrary nonnegative values; sorts them.
    pub fn from_values(mut eigs: Vec<f64>, trace_tail: f64, source: SpectrumSource) -> Result<Self> {
        if eigs.iter().any(|v| !v.is_finite() || *v < 0.0) || !(trace_tail >= 0.0 && trace_tail.is_finite()) {
            return Err(invalid("spectrum values must be finite and nonnegative"));
        }
        eigs.sort_by(|a, b| b.total_cmp(a));
        Ok(Self { eigs, source, trace_tail, clamped: 0 })
    }

    /// Total mass `Σ eigs + trace_tail`.
    pub fn trace(&self) -> f64 {
        sum_small_first(&self.eigs) + self.trace_tail
    }

    pub fn len(&self) -> usize {
        self.eigs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigs.is_empty()
    }

    /// Eigenvalues of `c · X` squared-functional, i.e. every value times `c`.
    pub fn scaled(&self, c: f64) -> Spectrum {
        Spectrum {
            eigs: self.eigs.iter().map(|v| v * c).collect(),
            source: SpectrumSource::Derived { description: format!("{} * {c}", self.source.describe()) },
            trace_tail: self.trace_tail * c,
            clamped: self.clamped,
        }
    }

    /// Spectrum of the sum of independent functionals.
    pub fn union(parts: &[Spectrum]) -> Spectrum {
        let mut eigs: Vec<f64> = parts.iter().flat_map(|p| p.eigs.iter().copied()).collect();
        eigs.sort_by(|a, b| b.total_cmp(a));
        let description = parts.iter().map(|p| p.source.describe()).collect::<Vec<_>>().join(" + ");
        Spectrum {
            eigs,
            source: SpectrumSource::Derived { description: format!("union[{description}]") },
            trace_tail: parts.iter().map(|p| p.trace_tail).sum(),
            clamped: parts.iter().map(|p| p.clamped).sum(),
        }
    }

    /// Each eigenvalue repeated `copies` times (sum of independent copies).
    pub fn duplicated(&self, copies: usize) -> Spectrum {
        let parts = vec![self.clone(); copies];
        Spectrum::union(&parts)
    }

    /// Keeps the top `k` values and moves the rest into the tail.
    pub fn truncated(&self, k: usize) -> Spectrum {
        if k >= self.eigs.len() {
            return self.clone();
        }
        Spectrum {
            eigs: self.eigs[..k].to_vec(),
            source: self.source.clone(),
            trace_tail: self.trace_tail + sum_small_first(&self.eigs[k..]),
            clamped: self.clamped,
        }
    }

    /// `rank,eigenvalue` rows after `#` metadata lines.
    pub fn write_csv<W: Write>(&self, mut out: W, seed: Option<u64>) -> Result<()> {
        writeln!(out, "# version={}", crate::VERSION)?;
        writeln!(out, "# source={}", self.source.describe())?;
        if let Some(seed) = seed {
            writeln!(out, "# seed={seed}")?;
        }
        writeln!(out, "# trace_tail={:?}", self.trace_tail)?;
        writeln!(out, "rank,eigenvalue")?;
        for (k, v) in self.eigs.iter().enumerate() {
            writeln!(out, "{},{:?}", k + 1, v)?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Sums a descending list from the small end.
fn sum_small_first(desc: &[f64]) -> f64 {
    desc.iter().rev().sum()
}

/// Eigenvalues of `weight · A` for a symmetric matrix given row-major.
pub fn spectrum_from_matrix(values: &[f64], side: usize, weight: f64, context: &str) -> Result<Spectrum> {
    if values.len() != side * side {
        return Err(invalid(format!("matrix of side {side} needs {} entries", side * side)));
    }
    let m = Mat::<f64>::from_fn(side, side, |i, j| weight * values[i * side + j]);
    let mut s = symmetric_eigs(&m, context)?;
    s.source = SpectrumSource::Matrix { side };
    Ok(s)
}

pub(crate) fn symmetric_eigs(m: &Mat<f64>, context: &str) -> Result<Spectrum> {
    faer::set_global_parallelism(Par::Seq);
    let numeric = |message: String| Error::Numeric { context: context.to_string(), message };
    let mut eigs = m.self_adjoint_eigenvalues(Side::Lower).map_err(|e| numeric(format!("eigensolver: {e:?}")))?;
    if eigs.iter().any(|v| !v.is_finite()) {
        return Err(numeric("non-finite eigenvalue".into()));
    }
    eigs.sort_by(|a, b| b.total_cmp(a));
    let top = eigs.first().copied().unwrap_or(0.0).max(0.0);
    let eps = CLAMP_REL * top;
    let mut clamped = 0;
    for v in &mut eigs {
        if *v < 0.0 {
            if *v < -eps {
                return Err(numeric(format!("eigenvalue {v:e} below -{eps:e}: kernel not PSD")));
            }
            *v = 0.0;
            clamped += 1;
        }
    }
    Ok(Spectrum { eigs, source: SpectrumSource::Matrix { side: m.nrows() }, trace_tail: 0.0, clamped })
}

/// Nyström matrix `[K(p_i, p_j) / n^dim]` at the grid midpoints. 2-D points
/// are ordered `p = i * n + j` with `i` along `t1`.
pub fn nystrom_matrix(kernel: &CovKernel, n: usize) -> Result<Mat<f64>> {
    if n < 2 {
        return Err(invalid(format!("grid resolution n={n} must be at least 2")));
    }
    let x: Vec<f64> = (0..n).map(|i| midpoint(i, n)).collect();
    Ok(match kernel.dim() {
        1 => {
            let w = 1.0 / n as f64;
            let mut m = Mat::<f64>::zeros(n, n);
            for i in 0..n {
                for j in 0..=i {
                    let v = w * kernel.eval_coords(x[i], 0.0, x[j], 0.0);
                    m[(i, j)] = v;
                    m[(j, i)] = v;
                }
            }
            m
        }
        _ => {
            let side = n * n;
            let w = 1.0 / side as f64;
            let mut m = Mat::<f64>::zeros(side, side);
            for p in 0..side {
                let (t1, t2) = (x[p / n], x[p % n]);
                for q in 0..=p {
                    let v = w * kernel.eval_coords(t1, t2, x[q / n], x[q % n]);
                    m[(p, q)] = v;
                    m[(q, p)] = v;
                }
            }
            m
        }
    })
}

/// Nyström spectrum of a kernel on the `n`-point (1-D) or `n × n` (2-D) midpoint grid.
pub fn grid_spectrum(kernel: &CovKernel, n: usize) -> Result<Spectrum> {
    let m = nystrom_matrix(kernel, n)?;
    let mut s = symmetric_eigs(&m, &kernel.label())?;
    s.source = SpectrumSource::Grid { kernel: kernel.label(), n };
    Ok(s)
}

/// Exact Karhunen–Loève eigenvalues of the 1-D Wiener-type kernels.
pub fn analytic_spectrum(kind: ProcessKind, count: usize) -> Result<Spectrum> {
    if count == 0 {
        return Err(invalid("analytic spectrum needs count >= 1"));
    }
    let shift = match kind {
        ProcessKind::Bridge1D | ProcessKind::CenteredWiener1D => 0.0,
        ProcessKind::Wiener1D => 0.5,
        other => return Err(invalid(format!("no analytic spectrum for {other}"))),
    };
    let pi2 = std::f64::consts::PI.powi(2);
    let eigs = (1..=count).map(|j| 1.0 / ((j as f64 - shift).powi(2) * pi2)).collect();
    // Σ_{j>N} 1/((j - shift)π)² = ζ(2, N + 1 - shift)/π²
    let trace_tail = hurwitz_zeta(2.0, count as f64 + 1.0 - shift) / pi2;
    Ok(Spectrum { eigs, source: SpectrumSource::Analytic { kind, count }, trace_tail, clamped: 0 })
}

/// All products `λ_i μ_j` with `i, j ≤ cutoff`; only the largest
/// [`TENSOR_KEEP`] are listed and the remaining mass is added to the tail.
pub fn tensor_spectrum(s1: &Spectrum, s2: &Spectrum, cutoff: usize) -> Result<Spectrum> {
    if s1.is_empty() || s2.is_empty() {
        return Err(invalid("tensor product needs nonempty spectra"));
    }
    if cutoff == 0 {
        return Err(invalid("tensor cutoff must be positive"));
    }
    let a = s1.truncated(cutoff);
    let b = s2.truncated(cutoff);
    let (ta, tb) = (sum_small_first(&a.eigs), sum_small_first(&b.eigs));
    let mut products: Vec<f64> = Vec::with_capacity(a.len() * b.len());
    for &x in &a.eigs {
        products.extend(b.eigs.iter().map(|&y| x * y));
    }
    let mut dropped = 0.0;
    if products.len() > TENSOR_KEEP {
        products.select_nth_unstable_by(TENSOR_KEEP - 1, |p, q| q.total_cmp(p));
        let mut rest = products.split_off(TENSOR_KEEP);
        rest.sort_by(|p, q| p.total_cmp(q));
        dropped = rest.iter().sum();
    }
    products.sort_by(|p, q| q.total_cmp(p));
    let trace_tail = ta * b.trace_tail + a.trace_tail * tb + a.trace_tail * b.trace_tail + dropped;
    Ok(Spectrum {
        eigs: products,
        source: SpectrumSource::Tensor { left: s1.source.describe(), right: s2.source.describe(), cutoff },
        trace_tail,
        clamped: s1.clamped + s2.clamped,
    })
}

/// `log E exp(-u²/2 · Σ λ ξ²)`, with the unlisted tail mass entering to first order.
pub fn log_laplace_from_spectrum(s: &Spectrum, u: f64) -> f64 {
    let u2 = u * u;
    let body: f64 = s.eigs.iter().rev().map(|&l| (u2 * l).ln_1p()).sum();
    -0.5 * body - 0.5 * u2 * s.trace_tail
}

/// `Π (1 + u² λ)^{-1/2} · exp(-u² · trace_tail / 2)`.
///
/// The tail factor treats the unlisted eigenvalues to first order; since
/// `ln(1 + x) ≤ x` it slightly underestimates the true transform.
pub fn laplace_from_spectrum(s: &Spectrum, u: f64) -> f64 {
    log_laplace_from_spectrum(s, u).exp()
}

/// One draw of `Σ λ_k ξ_k²`; the tail contributes its mean.
pub fn kl_sample(s: &Spectrum, seed: u64) -> f64 {
    kl_sample_truncated(s, s.len(), seed)
}

/// Draws only the top `k` terms and replaces the rest by their mean.
pub fn kl_sample_truncated(s: &Spectrum, k: usize, seed: u64) -> f64 {
    let k = k.min(s.len());
    let mut stream = NormalStream::new(seed);
    let mut acc = 0.0;
    for &l in s.eigs[..k].iter().rev() {
        let z = stream.normal();
        acc += l * z * z;
    }
    acc + sum_small_first(&s.eigs[k..]) + s.trace_tail
}

/// Reproducible batch of KL draws, used where many samples share one spectrum.
pub fn kl_samples(s: &Spectrum, k: usize, count: usize, seed: u64) -> Vec<f64> {
    let k = k.min(s.len());
    let rest = sum_small_first(&s.eigs[k..]) + s.trace_tail;
    let mut stream = NormalStream::new(seed);
    let top = &s.eigs[..k];
    (0..count)
        .map(|_| {
            let mut acc = 0.0;
            for &l in top.iter().rev() {
                let z = stream.normal();
                acc += l * z * z;
            }
            acc + rest
        })
        .collect()
}
