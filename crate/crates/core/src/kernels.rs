//! Covariance kernels of the Brownian sheet, its bridges and Kiefer fields,
//! together with the 1-D Wiener and bridge kernels.
//!
//! Every kernel is stored as a short sum of separable terms
//! `c · f(t1, s1) · g(t2, s2)` over a small algebra of 1-D factor kernels.
//! Centering by row, column or both means acts on the factors; centering by
//! the full mean is applied on top of the term list. All centering
//! corrections are closed-form polynomials, so evaluation is exact up to
//! floating-point round-off.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// A point of the unit square. 1-D kernels read only `t1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point2 {
    pub t1: f64,
    pub t2: f64,
}

impl Point2 {
    pub fn new(t1: f64, t2: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&t1) || !(0.0..=1.0).contains(&t2) {
            return Err(invalid(format!("point ({t1}, {t2}) outside [0,1]^2")));
        }
        Ok(Self { t1, t2 })
    }

    /// Point for a 1-D kernel; the second coordinate is unused.
    pub fn on_line(t: f64) -> Result<Self> {
        Self::new(t, 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ProcessKind {
    /// Brownian sheet `W`.
    Sheet,
    /// Bivariate bridge `W(t) - t1 t2 W(1,1)`.
    BridgeB,
    /// Tied-down bridge, vanishing on all four edges.
    TiedDownB0,
    /// Kiefer field pinned at `t1 = 1`.
    Kiefer1,
    /// Kiefer field pinned at `t2 = 1`.
    Kiefer2,
    Wiener1D,
    Bridge1D,
    /// `W(t) - ∫ W`.
    CenteredWiener1D,
}

impl ProcessKind {
    pub const ALL: [ProcessKind; 8] = [
        ProcessKind::Sheet,
        ProcessKind::BridgeB,
        ProcessKind::TiedDownB0,
        ProcessKind::Kiefer1,
        ProcessKind::Kiefer2,
        ProcessKind::Wiener1D,
        ProcessKind::Bridge1D,
        ProcessKind::CenteredWiener1D,
    ];

    pub const TWO_D: [ProcessKind; 5] =
        [ProcessKind::Sheet, ProcessKind::BridgeB, ProcessKind::TiedDownB0, ProcessKind::Kiefer1, ProcessKind::Kiefer2];

    pub fn dim(self) -> usize {
        match self {
            ProcessKind::Wiener1D | ProcessKind::Bridge1D | ProcessKind::CenteredWiener1D => 1,
            _ => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ProcessKind::Sheet => "sheet",
            ProcessKind::BridgeB => "bridge",
            ProcessKind::TiedDownB0 => "b0",
            ProcessKind::Kiefer1 => "kiefer1",
            ProcessKind::Kiefer2 => "kiefer2",
            ProcessKind::Wiener1D => "wiener1d",
            ProcessKind::Bridge1D => "bridge1d",
            ProcessKind::CenteredWiener1D => "centered-wiener1d",
        }
    }

    fn base_terms(self) -> Vec<Term> {
        use Factor as F;
        let t = |coef, f, g| Term { coef, f, g };
        match self {
            ProcessKind::Sheet => vec![t(1.0, F::WIENER, F::WIENER)],
            ProcessKind::BridgeB => vec![t(1.0, F::WIENER, F::WIENER), t(-1.0, F::PRODUCT, F::PRODUCT)],
            ProcessKind::TiedDownB0 => vec![t(1.0, F::BRIDGE, F::BRIDGE)],
            ProcessKind::Kiefer1 => vec![t(1.0, F::BRIDGE, F::WIENER)],
            ProcessKind::Kiefer2 => vec![t(1.0, F::WIENER, F::BRIDGE)],
            ProcessKind::Wiener1D => vec![t(1.0, F::WIENER, F::UNIT)],
            ProcessKind::Bridge1D => vec![t(1.0, F::BRIDGE, F::UNIT)],
            ProcessKind::CenteredWiener1D => vec![t(1.0, F::WIENER.centered(), F::UNIT)],
        }
    }
}

impl fmt::Display for ProcessKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProcessKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ProcessKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| invalid(format!("unknown process '{s}'")))
    }
}

/// Which path averages are subtracted before squaring.
///
/// Rows are indexed by `t1`, so `RowMean` subtracts `∫ X(t1, u) du` and
/// `ColMean` subtracts `∫ X(u, t2) du`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CenteringKind {
    None,
    FullMean,
    RowMean,
    ColMean,
    DoubleMean,
}

impl CenteringKind {
    pub const ALL: [CenteringKind; 5] = [
        CenteringKind::None,
        CenteringKind::FullMean,
        CenteringKind::RowMean,
        CenteringKind::ColMean,
        CenteringKind::DoubleMean,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CenteringKind::None => "none",
            CenteringKind::FullMean => "full",
            CenteringKind::RowMean => "row",
            CenteringKind::ColMean => "col",
            CenteringKind::DoubleMean => "double",
        }
    }
}

impl fmt::Display for CenteringKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CenteringKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CenteringKind::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| invalid(format!("unknown centering '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BaseFactor {
    /// `min(t, s)`
    Wiener,
    /// `min(t, s) - t s`
    Bridge,
    /// `t s`
    Product,
    /// constant 1; the second factor of a 1-D kernel
    Unit,
}

/// A symmetric 1-D factor kernel, optionally centered by its own mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Factor {
    base: BaseFactor,
    centered: bool,
}

impl Factor {
    const WIENER: Factor = Factor { base: BaseFactor::Wiener, centered: false };
    const BRIDGE: Factor = Factor { base: BaseFactor::Bridge, centered: false };
    const PRODUCT: Factor = Factor { base: BaseFactor::Product, centered: false };
    const UNIT: Factor = Factor { base: BaseFactor::Unit, centered: false };

    fn centered(self) -> Factor {
        Factor { centered: true, ..self }
    }

    #[inline]
    fn base_eval(self, t: f64, s: f64) -> f64 {
        match self.base {
            BaseFactor::Wiener => t.min(s),
            BaseFactor::Bridge => t.min(s) - t * s,
            BaseFactor::Product => t * s,
            BaseFactor::Unit => 1.0,
        }
    }

    /// `∫₀¹ base(t, v) dv`
    #[inline]
    fn base_marginal(self, t: f64) -> f64 {
        match self.base {
            BaseFactor::Wiener => t - 0.5 * t * t,
            BaseFactor::Bridge => 0.5 * t * (1.0 - t),
            BaseFactor::Product => 0.5 * t,
            BaseFactor::Unit => 1.0,
        }
    }

    /// `∫₀¹∫₀¹ base(u, v) du dv`
    #[inline]
    fn base_total(self) -> f64 {
        match self.base {
            BaseFactor::Wiener => 1.0 / 3.0,
            BaseFactor::Bridge => 1.0 / 12.0,
            BaseFactor::Product => 0.25,
            BaseFactor::Unit => 1.0,
        }
    }

    #[inline]
    fn eval(self, t: f64, s: f64) -> f64 {
        if self.centered {
            // grouped so that swapping t and s is bit-exact
            self.base_eval(t, s) - (self.base_marginal(t) + self.base_marginal(s)) + self.base_total()
        } else {
            self.base_eval(t, s)
        }
    }

    #[inline]
    fn marginal(self, t: f64) -> f64 {
        if self.centered {
            0.0
        } else {
            self.base_marginal(t)
        }
    }

    #[inline]
    fn total(self) -> f64 {
        if self.centered {
            0.0
        } else {
            self.base_total()
        }
    }

    fn as_kernel(self) -> CovKernel {
        let kind = match self.base {
            BaseFactor::Wiener => ProcessKind::Wiener1D,
            BaseFactor::Bridge => ProcessKind::Bridge1D,
            BaseFactor::Product | BaseFactor::Unit => {
                unreachable!("product and unit factors never appear in a separable kernel")
            }
        };
        match (kind, self.centered) {
            (ProcessKind::Wiener1D, true) => CovKernel::new(ProcessKind::CenteredWiener1D),
            (k, true) => CovKernel::new(k).centered(CenteringKind::FullMean).expect("1-D full mean"),
            (k, false) => CovKernel::new(k),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Term {
    coef: f64,
    f: Factor,
    g: Factor,
}

/// Closed-form covariance function of a (possibly centered) process.
#[derive(Debug, Clone, PartialEq)]
pub struct CovKernel {
    kind: ProcessKind,
    centering: CenteringKind,
    terms: Vec<Term>,
    full_mean: bool,
}

impl CovKernel {
    pub fn new(kind: ProcessKind) -> Self {
        Self { kind, centering: CenteringKind::None, terms: kind.base_terms(), full_mean: false }
    }

    pub fn kind(&self) -> ProcessKind {
        self.kind
    }

    pub fn centering(&self) -> CenteringKind {
        self.centering
    }

    pub fn dim(&self) -> usize {
        self.kind.dim()
    }

    /// True when the kernel factorizes as `K1(t1, s1) · K2(t2, s2)`.
    pub fn is_separable(&self) -> bool {
        self.dim() == 2 && self.terms.len() == 1 && !self.full_mean
    }

    /// The two 1-D factor kernels of a separable 2-D kernel.
    pub fn separable_factors(&self) -> Option<(CovKernel, CovKernel)> {
        if !self.is_separable() {
            return None;
        }
        let term = self.terms[0];
        debug_assert_eq!(term.coef, 1.0);
        Some((term.f.as_kernel(), term.g.as_kernel()))
    }

    /// Kernel of the process with the requested path averages subtracted.
    pub fn centered(&self, c: CenteringKind) -> Result<CovKernel> {
        if c == CenteringKind::None {
            return Ok(self.clone());
        }
        if self.centering != CenteringKind::None {
            return Err(invalid(format!(
                "kernel {} is already centered ({}); cannot apply {}",
                self.kind, self.centering, c
            )));
        }
        let mut out = self.clone();
        out.centering = c;
        if self.dim() == 1 {
            if c != CenteringKind::FullMean {
                return Err(invalid(format!("centering {c} needs a 2-D kernel")));
            }
            // With a unit second factor the full mean only touches the first factor.
            for term in &mut out.terms {
                term.f = term.f.centered();
            }
            return Ok(out);
        }
        match c {
            CenteringKind::None => {}
            CenteringKind::FullMean => out.full_mean = true,
            CenteringKind::RowMean => out.terms.iter_mut().for_each(|t| t.g = t.g.centered()),
            CenteringKind::ColMean => out.terms.iter_mut().for_each(|t| t.f = t.f.centered()),
            CenteringKind::DoubleMean => out.terms.iter_mut().for_each(|t| {
                t.f = t.f.centered();
                t.g = t.g.centered();
            }),
        }
        Ok(out)
    }

    pub fn eval(&self, p: Point2, q: Point2) -> f64 {
        self.eval_coords(p.t1, p.t2, q.t1, q.t2)
    }

    /// Evaluation on raw coordinates; callers guarantee they lie in `[0, 1]`.
    #[inline]
    pub fn eval_coords(&self, t1: f64, t2: f64, s1: f64, s2: f64) -> f64 {
        let mut acc = 0.0;
        for term in &self.terms {
            let direct = term.f.eval(t1, s1) * term.g.eval(t2, s2);
            let value = if self.full_mean {
                let left = term.f.marginal(t1) * term.g.marginal(t2);
                let right = term.f.marginal(s1) * term.g.marginal(s2);
                direct - (left + right) + term.f.total() * term.g.total()
            } else {
                direct
            };
            acc += term.coef * value;
        }
        acc
    }

    pub fn label(&self) -> String {
        format!("{}/{}", self.kind, self.centering)
    }
}

/// Evaluates `kernel` at `(p, q)`, rejecting points outside the unit square.
pub fn eval_kernel(kernel: &CovKernel, p: Point2, q: Point2) -> Result<f64> {
    for x in [p.t1, p.t2, q.t1, q.t2] {
        if !(0.0..=1.0).contains(&x) {
            return Err(invalid(format!("coordinate {x} outside [0,1]")));
        }
    }
    Ok(kernel.eval(p, q))
}

/// Centers an uncentered kernel; see [`CovKernel::centered`].
pub fn centered_kernel(base: &CovKernel, c: CenteringKind) -> Result<CovKernel> {
    base.centered(c)
}

fn bridge_cov(s: f64, t: f64) -> f64 {
    s.min(t) - s * t
}

/// `Cov(Ab(s), Sb(t))` for the antisymmetric and symmetric parts of a
/// Brownian bridge around `1/2`. Vanishes identically.
pub fn cross_cov_sym_antisym(s: f64, t: f64) -> f64 {
    0.25 * (bridge_cov(s, t) + bridge_cov(s, 1.0 - t) - bridge_cov(1.0 - s, t) - bridge_cov(1.0 - s, 1.0 - t))
}

/// `Var(Ab(t))` expanded from the bridge kernel.
pub fn antisym_variance(t: f64) -> f64 {
    0.25 * (bridge_cov(t, t) - 2.0 * bridge_cov(t, 1.0 - t) + bridge_cov(1.0 - t, 1.0 - t))
}

/// `Var(Sb(t))` expanded from the bridge kernel.
pub fn sym_variance(t: f64) -> f64 {
    0.25 * (bridge_cov(t, t) + 2.0 * bridge_cov(t, 1.0 - t) + bridge_cov(1.0 - t, 1.0 - t))
}
