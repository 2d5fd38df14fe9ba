//! Grid simulation of the Brownian sheet and the processes derived from it,
//! the reflection projections around `1/2`, and quadratic path functionals.
//!
//! Values live at the cell midpoints `((i+½)/n, (j+½)/n)`, `i, j = 0..n`.
//! The sheet is sampled exactly at those points (plus the lines `t = 1`) by
//! summing independent Gaussian increments over the partition
//! `0 < ½h < 3⁄2h < … < 1-½h < 1` of each axis, so the finite-dimensional
//! law is exact and reflection `x ↦ 1-x` maps midpoints onto midpoints.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::kernels::{CenteringKind, ProcessKind};
use crate::rng::NormalStream;

/// Midpoint coordinate of cell `i` on an `n`-cell axis.
#[inline]
pub fn midpoint(i: usize, n: usize) -> f64 {
    (i as f64 + 0.5) / n as f64
}

/// Partition nodes of one axis: the `n` midpoints followed by `1`.
fn axis_nodes(n: usize) -> Vec<f64> {
    let mut nodes: Vec<f64> = (0..n).map(|i| midpoint(i, n)).collect();
    nodes.push(1.0);
    nodes
}

/// Lengths of the `n+1` intervals ending at each axis node.
fn axis_widths(n: usize) -> Vec<f64> {
    let h = 1.0 / n as f64;
    let mut w = vec![h; n + 1];
    w[0] = 0.5 * h;
    w[n] = 0.5 * h;
    w
}

/// Values of a field on the lines `t1 = 1` and `t2 = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Edges {
    /// `X(1, x_l)` for the `n+1` axis nodes; the last entry is `X(1, 1)`.
    pub t1_one: Vec<f64>,
    /// `X(x_k, 1)` for the `n+1` axis nodes.
    pub t2_one: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    n: usize,
    /// Row-major, row index ↔ `t1`.
    values: Vec<f64>,
    seed: u64,
    kind: ProcessKind,
    projection: Option<ProjectionKind>,
    edges: Option<Edges>,
}

impl GridField {
    pub fn from_values(n: usize, values: Vec<f64>, seed: u64, kind: ProcessKind) -> Result<Self> {
        if n < 2 {
            return Err(invalid(format!("grid resolution n={n} must be at least 2")));
        }
        if values.len() != n * n {
            return Err(invalid(format!("expected {} values, got {}", n * n, values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("field values must be finite"));
        }
        Ok(Self { n, values, seed, kind, projection: None, edges: None })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn kind(&self) -> ProcessKind {
        self.kind
    }

    pub fn projection(&self) -> Option<ProjectionKind> {
        self.projection
    }

    pub fn edges(&self) -> Option<&Edges> {
        self.edges.as_ref()
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    /// Writes `n,seed,kind,version` followed by one CSV line per row.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "n,seed,kind,version")?;
        writeln!(out, "{},{},{},{}", self.n, self.seed, self.kind, crate::VERSION)?;
        for row in self.values.chunks(self.n) {
            let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            writeln!(out, "{}", line.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let mut next = || -> Result<String> {
            lines.next().ok_or_else(|| Error::Parse("unexpected end of field CSV".into()))?.map_err(Error::from)
        };
        let header = next()?;
        if header.trim() != "n,seed,kind,version" {
            return Err(Error::Parse(format!("bad field header '{header}'")));
        }
        let meta = next()?;
        let parts: Vec<&str> = meta.trim().split(',').collect();
        if parts.len() != 4 {
            return Err(Error::Parse(format!("bad field metadata '{meta}'")));
        }
        let n: usize = parts[0].parse().map_err(|e| Error::Parse(format!("n: {e}")))?;
        let seed: u64 = parts[1].parse().map_err(|e| Error::Parse(format!("seed: {e}")))?;
        let kind: ProcessKind = parts[2].parse()?;
        let mut values = Vec::with_capacity(n * n);
        for _ in 0..n {
            let row = next()?;
            for cell in row.trim().split(',') {
                values.push(cell.parse::<f64>().map_err(|e| Error::Parse(format!("value '{cell}': {e}")))?);
            }
        }
        Self::from_values(n, values, seed, kind)
    }
}

/// Samples the Brownian sheet at the midpoints of an `n × n` grid.
pub fn sample_sheet(n: usize, seed: u64) -> Result<GridField> {
    if n < 2 {
        return Err(invalid(format!("grid resolution n={n} must be at least 2")));
    }
    let m = n + 1;
    let w = axis_widths(n);
    let sd: Vec<f64> = w.iter().map(|x| x.sqrt()).collect();
    let mut stream = NormalStream::new(seed);
    let mut lattice = vec![0.0; m * m];
    for k in 0..m {
        let mut run = 0.0;
        for l in 0..m {
            run += sd[k] * sd[l] * stream.normal();
            let below = if k > 0 { lattice[(k - 1) * m + l] } else { 0.0 };
            lattice[k * m + l] = below + run;
        }
    }
    let values = (0..n).flat_map(|k| lattice[k * m..k * m + n].to_vec()).collect();
    let edges = Edges { t1_one: lattice[n * m..].to_vec(), t2_one: (0..m).map(|k| lattice[k * m + n]).collect() };
    Ok(GridField { n, values, seed, kind: ProcessKind::Sheet, projection: None, edges: Some(edges) })
}

/// Applies the pointwise bridge transformation to a sampled sheet.
pub fn derive(field: &GridField, target: ProcessKind) -> Result<GridField> {
    if field.kind != ProcessKind::Sheet || field.projection.is_some() {
        return Err(invalid("derive needs an unprojected sheet field"));
    }
    let edges = field.edges.as_ref().ok_or_else(|| invalid("sheet field carries no boundary values"))?;
    let (pin1, pin2, pin_corner) = match target {
        ProcessKind::BridgeB => (false, false, true),
        ProcessKind::TiedDownB0 => (true, true, true),
        ProcessKind::Kiefer1 => (true, false, false),
        ProcessKind::Kiefer2 => (false, true, false),
        other => return Err(invalid(format!("cannot derive {other} from a sheet"))),
    };
    let n = field.n;
    let x = axis_nodes(n);
    let w11 = edges.t1_one[n];
    // sheet value at lattice node (k, l), k or l may be the boundary index n
    let sheet = |k: usize, l: usize| -> f64 {
        if k == n {
            edges.t1_one[l]
        } else if l == n {
            edges.t2_one[k]
        } else {
            field.values[k * n + l]
        }
    };
    let transform = |k: usize, l: usize| -> f64 {
        let (t1, t2) = (x[k], x[l]);
        let mut v = sheet(k, l);
        if pin1 {
            v -= t1 * edges.t1_one[l];
        }
        if pin2 {
            v -= t2 * edges.t2_one[k];
        }
        if pin_corner {
            let sign = if pin1 && pin2 { 1.0 } else { -1.0 };
            v += sign * t1 * t2 * w11;
        }
        v
    };
    let mut values = Vec::with_capacity(n * n);
    for k in 0..n {
        for l in 0..n {
            values.push(transform(k, l));
        }
    }
    let new_edges = Edges {
        t1_one: (0..=n).map(|l| transform(n, l)).collect(),
        t2_one: (0..=n).map(|k| transform(k, n)).collect(),
    };
    Ok(GridField { n, values, seed: field.seed, kind: target, projection: None, edges: Some(new_edges) })
}

/// Symmetric (`S`) and antisymmetric (`A`) parts around `1/2` along one or
/// both axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ProjectionKind {
    S1,
    S2,
    A1,
    A2,
    /// `S1 S2`
    T1,
    /// `S1 A2`
    T2,
    /// `A1 S2`
    T3,
    /// `A1 A2`
    T4,
}

impl ProjectionKind {
    pub const T: [ProjectionKind; 4] = [ProjectionKind::T1, ProjectionKind::T2, ProjectionKind::T3, ProjectionKind::T4];

    /// Reflection signs `(σ1, σ2)`; `None` means that axis is left untouched.
    fn signs(self) -> (Option<f64>, Option<f64>) {
        use ProjectionKind::*;
        match self {
            S1 => (Some(1.0), None),
            A1 => (Some(-1.0), None),
            S2 => (None, Some(1.0)),
            A2 => (None, Some(-1.0)),
            T1 => (Some(1.0), Some(1.0)),
            T2 => (Some(1.0), Some(-1.0)),
            T3 => (Some(-1.0), Some(1.0)),
            T4 => (Some(-1.0), Some(-1.0)),
        }
    }
}

impl fmt::Display for ProjectionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for ProjectionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        use ProjectionKind::*;
        [S1, S2, A1, A2, T1, T2, T3, T4]
            .into_iter()
            .find(|p| p.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| invalid(format!("unknown projection '{s}'")))
    }
}

/// Projects a field onto one of the reflection-symmetry subspaces.
pub fn project(field: &GridField, p: ProjectionKind) -> Result<GridField> {
    let n = field.n;
    if !n.is_multiple_of(2) {
        return Err(invalid(format!("projection needs an even grid, got n={n}")));
    }
    let (s1, s2) = p.signs();
    let r = |i: usize| n - 1 - i;
    let mut values = field.values.clone();
    if let Some(sign) = s1 {
        let src = values.clone();
        for i in 0..n {
            for j in 0..n {
                values[i * n + j] = 0.5 * (src[i * n + j] + sign * src[r(i) * n + j]);
            }
        }
    }
    if let Some(sign) = s2 {
        let src = values.clone();
        for i in 0..n {
            for j in 0..n {
                values[i * n + j] = 0.5 * (src[i * n + j] + sign * src[i * n + r(j)]);
            }
        }
    }
    Ok(GridField { n, values, seed: field.seed, kind: field.kind, projection: Some(p), edges: None })
}

fn centered_values(values: &[f64], n: usize, c: CenteringKind) -> Vec<f64> {
    let inv = 1.0 / n as f64;
    let row_means: Vec<f64> = values.chunks(n).map(|r| r.iter().sum::<f64>() * inv).collect();
    let col_means: Vec<f64> = (0..n).map(|j| (0..n).map(|i| values[i * n + j]).sum::<f64>() * inv).collect();
    let grand = row_means.iter().sum::<f64>() * inv;
    let mut out = values.to_vec();
    for i in 0..n {
        for j in 0..n {
            let v = &mut out[i * n + j];
            match c {
                CenteringKind::None => {}
                CenteringKind::FullMean => *v -= grand,
                CenteringKind::RowMean => *v -= row_means[i],
                CenteringKind::ColMean => *v -= col_means[j],
                CenteringKind::DoubleMean => *v = *v - row_means[i] - col_means[j] + grand,
            }
        }
    }
    out
}

/// The field with its grid averages removed, as a new field.
pub fn center(field: &GridField, c: CenteringKind) -> GridField {
    GridField { values: centered_values(&field.values, field.n, c), edges: None, ..field.clone() }
}

/// `∫∫ (X - centering)²` by the midpoint rule with weight `1/n²`.
pub fn quad_functional(field: &GridField, c: CenteringKind) -> f64 {
    let n = field.n;
    let sq: f64 = if c == CenteringKind::None {
        field.values.iter().map(|v| v * v).sum()
    } else {
        centered_values(&field.values, n, c).iter().map(|v| v * v).sum()
    };
    sq / (n * n) as f64
}

/// `∫∫_{[0,½]²} X²` on the lower-left quarter of the grid.
pub fn quarter_quad(field: &GridField) -> f64 {
    let n = field.n;
    let half = n / 2;
    let mut acc = 0.0;
    for i in 0..half {
        for j in 0..half {
            acc += field.at(i, j).powi(2);
        }
    }
    acc / (n * n) as f64
}

/// `∫∫_{[0,½]²} (X - 4∫∫_{[0,½]²} X)²`: the quarter functional after removing
/// the quarter's own mean.
pub fn quarter_quad_centered(field: &GridField) -> f64 {
    let n = field.n;
    let half = n / 2;
    let mean = (0..half).flat_map(|i| (0..half).map(move |j| (i, j))).map(|(i, j)| field.at(i, j)).sum::<f64>()
        / (half * half) as f64;
    let mut acc = 0.0;
    for i in 0..half {
        for j in 0..half {
            acc += (field.at(i, j) - mean).powi(2);
        }
    }
    acc / (n * n) as f64
}

/// A 1-D path sampled at the midpoints of `n` cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Path1D {
    n: usize,
    values: Vec<f64>,
    /// value at `t = 1`
    end: f64,
    seed: u64,
    kind: ProcessKind,
}

impl Path1D {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn end(&self) -> f64 {
        self.end
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn kind(&self) -> ProcessKind {
        self.kind
    }

    /// `∫₀¹ (x - centering)²`; only `None` and `FullMean` apply in 1-D.
    pub fn quad_functional(&self, c: CenteringKind) -> Result<f64> {
        let mean = match c {
            CenteringKind::None => 0.0,
            CenteringKind::FullMean => self.values.iter().sum::<f64>() / self.n as f64,
            other => return Err(invalid(format!("centering {other} does not apply to a path"))),
        };
        Ok(self.values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / self.n as f64)
    }

    /// `(f(t) ± f(1-t))/2` on `[0, ½]`, returned as the first `n/2` midpoints.
    fn reflect_half(&self, sign: f64) -> Result<Vec<f64>> {
        let n = self.n;
        if !n.is_multiple_of(2) {
            return Err(invalid(format!("reflection needs an even grid, got n={n}")));
        }
        Ok((0..n / 2).map(|i| 0.5 * (self.values[i] + sign * self.values[n - 1 - i])).collect())
    }

    /// Writes `n,seed,kind,version` metadata then `t,value` lines.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "n,seed,kind,version")?;
        writeln!(out, "{},{},{},{}", self.n, self.seed, self.kind, crate::VERSION)?;
        writeln!(out, "t,value")?;
        for (i, v) in self.values.iter().enumerate() {
            writeln!(out, "{:?},{v:?}", midpoint(i, self.n))?;
        }
        writeln!(out, "{:?},{:?}", 1.0, self.end)?;
        Ok(())
    }

    pub fn antisymmetric_half(&self) -> Result<Vec<f64>> {
        self.reflect_half(-1.0)
    }

    pub fn symmetric_half(&self) -> Result<Vec<f64>> {
        self.reflect_half(1.0)
    }
}

/// Samples a Wiener path or a Brownian bridge at `n` midpoints.
pub fn sample_path(kind: ProcessKind, n: usize, seed: u64) -> Result<Path1D> {
    if n < 2 {
        return Err(invalid(format!("path resolution n={n} must be at least 2")));
    }
    let pinned = match kind {
        ProcessKind::Wiener1D => false,
        ProcessKind::Bridge1D => true,
        other => return Err(invalid(format!("cannot sample {other} as a 1-D path"))),
    };
    let w = axis_widths(n);
    let x = axis_nodes(n);
    let mut stream = NormalStream::new(seed);
    let mut run = 0.0;
    let mut nodes = Vec::with_capacity(n + 1);
    for wk in &w {
        run += wk.sqrt() * stream.normal();
        nodes.push(run);
    }
    let w1 = nodes[n];
    let values = (0..n).map(|k| if pinned { nodes[k] - x[k] * w1 } else { nodes[k] }).collect();
    let end = if pinned { 0.0 } else { w1 };
    Ok(Path1D { n, values, end, seed, kind })
}
