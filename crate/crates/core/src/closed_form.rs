//! Infinite products of `cosh` and `sinh(x)/x` factors, the `tanh` series
//! `T`, and the closed-form Laplace and Fourier transforms built from them.
//!
//! Every product is accumulated in log space over `N` explicit factors; the
//! remaining factors have small arguments and are summed through the power
//! series of `log cosh`, `log(sinh x / x)` and `tanh`, whose coefficients
//! multiply Hurwitz zeta values.

use std::f64::consts::{LN_2, PI};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Default relative tolerance for products.
pub const DEFAULT_TOL: f64 = 1e-13;
const MIN_FACTORS: usize = 64;
/// Factors are summed explicitly until their argument drops below this.
const SERIES_ARG: f64 = 0.05;

/// Hurwitz zeta `ζ(s, q) = Σ_{k≥0} (q + k)^{-s}` for `s > 1`, `q > 0`,
/// by Euler–Maclaurin summation.
pub fn hurwitz_zeta(s: f64, q: f64) -> f64 {
    debug_assert!(s > 1.0 && q > 0.0);
    // B_2k / (2k)!
    const B: [f64; 7] = [
        1.0 / 12.0,
        -1.0 / 720.0,
        1.0 / 30240.0,
        -1.0 / 1209600.0,
        1.0 / 47900160.0,
        -691.0 / 1307674368000.0,
        7.0 / 523069747200.0,
    ];
    let m = 12usize;
    let mut head = 0.0;
    for k in (0..m).rev() {
        head += (q + k as f64).powf(-s);
    }
    let a = q + m as f64;
    let mut tail = a.powf(1.0 - s) / (s - 1.0) + 0.5 * a.powf(-s);
    // rising factorial s (s+1) ... (s+2j-2) times a^{-s-2j+1}
    let mut rising = s;
    let mut power = a.powf(-s - 1.0);
    for (j, b) in B.iter().enumerate() {
        if j > 0 {
            rising *= (s + 2.0 * j as f64 - 1.0) * (s + 2.0 * j as f64);
            power /= a * a;
        }
        tail += b * rising * power;
    }
    head + tail
}

/// `log cosh x` without overflow.
pub fn log_cosh(x: f64) -> f64 {
    let ax = x.abs();
    if ax < SERIES_ARG {
        let y = ax * ax;
        y * (0.5 + y * (-1.0 / 12.0 + y * (1.0 / 45.0 + y * (-17.0 / 2520.0))))
    } else {
        ax + (-2.0 * ax).exp().ln_1p() - LN_2
    }
}

/// `log(sinh x / x)`, equal to 0 at `x = 0`.
pub fn log_sinhc(x: f64) -> f64 {
    let ax = x.abs();
    if ax < SERIES_ARG {
        let y = ax * ax;
        y * (1.0 / 6.0 + y * (-1.0 / 180.0 + y * (1.0 / 2835.0 + y * (-1.0 / 37800.0))))
    } else {
        ax + (-(-2.0 * ax).exp()).ln_1p() - LN_2 - ax.ln()
    }
}

/// Power-series coefficients of `log cosh` and `log(sinh x/x)` in `x², x⁴, x⁶, x⁸`.
const LOG_COSH_SERIES: [f64; 4] = [0.5, -1.0 / 12.0, 1.0 / 45.0, -17.0 / 2520.0];
const LOG_SINHC_SERIES: [f64; 4] = [1.0 / 6.0, -1.0 / 180.0, 1.0 / 2835.0, -1.0 / 37800.0];
/// `tanh y = y - y³/3 + 2y⁵/15 - 17y⁷/315`.
const TANH_SERIES: [f64; 4] = [1.0, -1.0 / 3.0, 2.0 / 15.0, -17.0 / 315.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ProductId {
    C,
    Codd,
    Ceven,
    S,
    Seven,
    Sodd,
    Tseries,
}

impl ProductId {
    pub const ALL: [ProductId; 7] = [
        ProductId::C,
        ProductId::Codd,
        ProductId::Ceven,
        ProductId::S,
        ProductId::Seven,
        ProductId::Sodd,
        ProductId::Tseries,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ProductId::C => "C",
            ProductId::Codd => "Codd",
            ProductId::Ceven => "Ceven",
            ProductId::S => "S",
            ProductId::Seven => "Seven",
            ProductId::Sodd => "Sodd",
            ProductId::Tseries => "T",
        }
    }
}

impl fmt::Display for ProductId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProductId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ProductId::ALL
            .into_iter()
            .find(|p| {
                p.name().eq_ignore_ascii_case(s) || (s.eq_ignore_ascii_case("tseries") && *p == ProductId::Tseries)
            })
            .ok_or_else(|| invalid(format!("unknown product '{s}'")))
    }
}

/// Factor denominators `d_m = scale · (m + offset)`, `m = 0, 1, ...`, so the
/// factor argument is `a / (π d_m)`.
struct Ladder {
    scale: f64,
    offset: f64,
}

impl Ladder {
    fn for_product(id: ProductId) -> Ladder {
        match id {
            // j = 1, 2, ...
            ProductId::C | ProductId::S => Ladder { scale: 1.0, offset: 1.0 },
            // 2j, j = 1, 2, ...
            ProductId::Ceven | ProductId::Seven => Ladder { scale: 2.0, offset: 1.0 },
            // 2j + 1 for j ≥ 0, and 2j - 1 for j ≥ 1: both 2(m + ½)
            ProductId::Codd | ProductId::Sodd | ProductId::Tseries => Ladder { scale: 2.0, offset: 0.5 },
        }
    }

    fn denom(&self, m: usize) -> f64 {
        self.scale * (m as f64 + self.offset)
    }

    /// `Σ_{m ≥ from} d_m^{-p}`.
    fn tail_power_sum(&self, p: f64, from: usize) -> f64 {
        self.scale.powf(-p) * hurwitz_zeta(p, from as f64 + self.offset)
    }

    /// Number of explicit factors so that the first series factor has argument
    /// below `SERIES_ARG` and the dropped `x^10` terms stay under `tol`.
    fn explicit_count(&self, a: f64, tol: f64) -> usize {
        let r = SERIES_ARG.min(tol.powf(0.1));
        let need = (a.abs() / (PI * r * self.scale) - self.offset).ceil();
        (need.max(0.0) as usize).max(MIN_FACTORS)
    }
}

fn check_tol(tol: f64) -> Result<()> {
    if !(tol > 0.0 && tol <= 1e-2) {
        return Err(invalid(format!("tolerance {tol} outside (0, 1e-2]")));
    }
    Ok(())
}

/// `log` of one of the six products at `a`.
pub fn log_product(id: ProductId, a: f64, tol: f64) -> Result<f64> {
    if !a.is_finite() {
        return Err(invalid(format!("product argument {a} is not finite")));
    }
    check_tol(tol)?;
    let (factor, series): (fn(f64) -> f64, &[f64; 4]) = match id {
        ProductId::C | ProductId::Codd | ProductId::Ceven => (log_cosh, &LOG_COSH_SERIES),
        ProductId::S | ProductId::Seven | ProductId::Sodd => (log_sinhc, &LOG_SINHC_SERIES),
        ProductId::Tseries => return Err(invalid("T is a series, not a product; use eval_product")),
    };
    let ladder = Ladder::for_product(id);
    let n = ladder.explicit_count(a, tol);
    let mut head = 0.0;
    for m in (0..n).rev() {
        head += factor(a / (PI * ladder.denom(m)));
    }
    let b2 = (a / PI).powi(2);
    let mut tail = 0.0;
    let mut bk = 1.0;
    for (k, c) in series.iter().enumerate() {
        bk *= b2;
        tail += c * bk * ladder.tail_power_sum(2.0 * (k + 1) as f64, n);
    }
    Ok(head + tail)
}

fn t_series(a: f64, tol: f64) -> Result<f64> {
    if !a.is_finite() {
        return Err(invalid(format!("series argument {a} is not finite")));
    }
    check_tol(tol)?;
    let ladder = Ladder::for_product(ProductId::Tseries);
    // term_m = tanh(2a / (π d_m)) / (π d_m) with d_m = 2m + 1
    let n = ladder.explicit_count(2.0 * a, tol);
    let mut head = 0.0;
    for m in (0..n).rev() {
        let d = PI * ladder.denom(m);
        head += (2.0 * a / d).tanh() / d;
    }
    // y_m = 2a/(π d_m); tail = Σ_k c_k (2a/π)^{2k-1} / π · Σ_m d_m^{-2k}
    let b = 2.0 * a / PI;
    let mut tail = 0.0;
    let mut bk = b;
    for (k, c) in TANH_SERIES.iter().enumerate() {
        tail += c * bk / PI * ladder.tail_power_sum(2.0 * (k + 1) as f64, n);
        bk *= b * b;
    }
    Ok(head + tail)
}

/// Value of a product (or of the series `T`) at `a`, to relative accuracy `tol`.
pub fn eval_product(id: ProductId, a: f64, tol: f64) -> Result<f64> {
    match id {
        ProductId::Tseries => t_series(a, tol),
        _ => Ok(log_product(id, a, tol)?.exp()),
    }
}

/// `C_odd(2u) · 4T(u)/u`, continued to `u = 0`.
fn bridge_denominator(u: f64) -> Result<f64> {
    let ratio = if u.abs() < 1e-6 { 1.0 - u * u / 9.0 } else { 4.0 * t_series(u, DEFAULT_TOL)? / u };
    Ok(eval_product(ProductId::Codd, 2.0 * u, DEFAULT_TOL)? * ratio)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TransformId {
    Prop5B,
    Prop5B0,
    Prop5K,
    Thm6I,
    Thm6J,
    Thm6Y,
}

impl TransformId {
    pub const ALL: [TransformId; 6] = [
        TransformId::Prop5B,
        TransformId::Prop5B0,
        TransformId::Prop5K,
        TransformId::Thm6I,
        TransformId::Thm6J,
        TransformId::Thm6Y,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TransformId::Prop5B => "prop5-b",
            TransformId::Prop5B0 => "prop5-b0",
            TransformId::Prop5K => "prop5-k",
            TransformId::Thm6I => "thm6-i",
            TransformId::Thm6J => "thm6-j",
            TransformId::Thm6Y => "thm6-y",
        }
    }
}

impl fmt::Display for TransformId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TransformId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TransformId::ALL
            .into_iter()
            .find(|t| t.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| invalid(format!("unknown transform '{s}'")))
    }
}

/// Laplace transforms `E exp(-u²/2 ∫∫ X²)` for the bivariate bridge, the
/// tied-down bridge and the Kiefer field.
pub fn prop5_laplace(id: TransformId, u: f64) -> Result<f64> {
    if !u.is_finite() {
        return Err(invalid(format!("u = {u} is not finite")));
    }
    let tol = DEFAULT_TOL;
    match id {
        TransformId::Prop5B => Ok(bridge_denominator(u)?.powf(-0.5)),
        TransformId::Prop5B0 => Ok((-0.5 * log_product(ProductId::S, u, tol)?).exp()),
        TransformId::Prop5K => Ok((-0.5 * log_product(ProductId::Sodd, 2.0 * u, tol)?).exp()),
        other => Err(invalid(format!("{other} is not a Laplace transform of this family"))),
    }
}

/// Characteristic functions of the three double integrals `I`, `J`, `Y`.
///
/// `Thm6I` is the product of the four Laplace factors at `u/4`:
/// `S(u/4)^{-1/2} · (C_odd(u/2) 16 T(u/4)/u)^{-1/2} · S_odd(u/2)^{-1}`.
/// See [`thm6_i_printed`] for the variant with `S_odd(u/2)^{+1}`.
pub fn thm6_transform(id: TransformId, u: f64) -> Result<f64> {
    if !u.is_finite() {
        return Err(invalid(format!("u = {u} is not finite")));
    }
    let tol = DEFAULT_TOL;
    match id {
        TransformId::Thm6I => {
            let q = u / 4.0;
            let log = -0.5 * log_product(ProductId::S, q, tol)?
                - 0.5 * bridge_denominator(q)?.ln()
                - log_product(ProductId::Sodd, 2.0 * q, tol)?;
            Ok(log.exp())
        }
        TransformId::Thm6J => Ok((-log_product(ProductId::S, u / 2.0, tol)?).exp()),
        TransformId::Thm6Y => Ok((-2.0 * log_product(ProductId::S, u / 4.0, tol)?).exp()),
        other => Err(invalid(format!("{other} is not one of the double-integral transforms"))),
    }
}

/// The `I` transform with `S_odd(u/2)` raised to `+1`. Exceeds 1 for large
/// `u`, so it cannot be a characteristic function of a symmetric law; kept
/// for reporting.
pub fn thm6_i_printed(u: f64) -> Result<f64> {
    let q = u / 4.0;
    let log = -0.5 * log_product(ProductId::S, q, DEFAULT_TOL)? - 0.5 * bridge_denominator(q)?.ln()
        + log_product(ProductId::Sodd, 2.0 * q, DEFAULT_TOL)?;
    Ok(log.exp())
}

/// Any transform by id.
pub fn transform(id: TransformId, u: f64) -> Result<f64> {
    match id {
        TransformId::Prop5B | TransformId::Prop5B0 | TransformId::Prop5K => prop5_laplace(id, u),
        _ => thm6_transform(id, u),
    }
}

/// Writes `u,value` rows for a transform after `#` metadata lines.
pub fn write_curve<W: Write>(mut out: W, id: TransformId, us: &[f64]) -> Result<()> {
    writeln!(out, "# version={}", crate::VERSION)?;
    writeln!(out, "# transform={id}")?;
    writeln!(out, "u,value")?;
    for &u in us {
        writeln!(out, "{:?},{:?}", u, transform(id, u)?)?;
    }
    Ok(())
}
