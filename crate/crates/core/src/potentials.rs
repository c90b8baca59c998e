//! Scalar and matrix potentials.
//!
//! Scalar potentials never include the centrifugal barrier; the shooting
//! solver adds it. Matrix potentials do include their centrifugal entries.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::plugin::{LoadedPlugin, NumericArray, PluginError, ScalarType};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PotentialError {
    #[error("r = {r} outside the domain: {reason}")]
    Domain { r: f64, reason: &'static str },
    #[error("r = {r} outside the table range [{lo}, {hi}]")]
    OutOfRange { r: f64, lo: f64, hi: f64 },
    #[error("invalid table: {0}")]
    InvalidTable(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("potential is not finite at r = {0}")]
    NonFinite(f64),
    #[error("{path}: line {line}: {message}")]
    Csv {
        path: String,
        line: usize,
        message: String,
    },
    #[error(transparent)]
    Plugin(#[from] PluginError),
}

/// Piecewise-linear potential through `(r, V)` knots. No extrapolation.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedPotential {
    r: Vec<f64>,
    v: Vec<f64>,
}

impl TabulatedPotential {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self, PotentialError> {
        if points.len() < 2 {
            return Err(PotentialError::InvalidTable(format!(
                "need at least 2 points, got {}",
                points.len()
            )));
        }
        let (r, v): (Vec<f64>, Vec<f64>) = points.into_iter().unzip();
        if let Some(i) = r.iter().chain(&v).position(|x| !x.is_finite()) {
            return Err(PotentialError::InvalidTable(format!(
                "non-finite entry at position {}",
                i % r.len()
            )));
        }
        if let Some(i) = r.windows(2).position(|w| w[1] <= w[0]) {
            return Err(PotentialError::InvalidTable(format!(
                "radii not strictly ascending at row {}",
                i + 2
            )));
        }
        Ok(Self { r, v })
    }

    /// Parses two-column `r,V` CSV. A non-numeric first row is taken as a
    /// header.
    pub fn parse_csv(text: &str, origin: &str) -> Result<Self, PotentialError> {
        let mut points = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let csv_err = |message: String| PotentialError::Csv {
                path: origin.to_string(),
                line: idx + 1,
                message,
            };
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if cols.len() != 2 {
                return Err(csv_err(format!("expected 2 columns, found {}", cols.len())));
            }
            match (cols[0].parse::<f64>(), cols[1].parse::<f64>()) {
                (Ok(r), Ok(v)) => points.push((r, v)),
                _ if points.is_empty() && idx == first_content_line(text) => continue,
                _ => return Err(csv_err(format!("cannot parse `{line}`"))),
            }
        }
        Self::new(points).map_err(|e| match e {
            PotentialError::InvalidTable(message) => PotentialError::Csv {
                path: origin.to_string(),
                line: 0,
                message,
            },
            other => other,
        })
    }

    pub fn from_csv_file(path: &Path) -> Result<Self, PotentialError> {
        let text = std::fs::read_to_string(path).map_err(|e| PotentialError::Csv {
            path: path.display().to_string(),
            line: 0,
            message: e.to_string(),
        })?;
        Self::parse_csv(&text, &path.display().to_string())
    }

    pub fn range(&self) -> (f64, f64) {
        (self.r[0], self.r[self.r.len() - 1])
    }

    pub fn knots(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.r.iter().copied().zip(self.v.iter().copied())
    }

    pub fn eval(&self, r: f64) -> Result<f64, PotentialError> {
        let (lo, hi) = self.range();
        if !(r >= lo && r <= hi) {
            return Err(PotentialError::OutOfRange { r, lo, hi });
        }
        // first knot strictly greater than r
        let j = self.r.partition_point(|&x| x <= r);
        if j == 0 {
            return Ok(self.v[0]);
        }
        let i = j - 1;
        if self.r[i] == r || j == self.r.len() {
            return Ok(self.v[i]);
        }
        let t = (r - self.r[i]) / (self.r[j] - self.r[i]);
        Ok(self.v[i] + t * (self.v[j] - self.v[i]))
    }
}

fn first_content_line(text: &str) -> usize {
    text.lines().position(|l| !l.trim().is_empty()).unwrap_or(0)
}

/// Scalar potential backed by a `FLOAT64 -> FLOAT64` plugin function.
#[derive(Clone)]
pub struct PluginPotential {
    plugin: Arc<LoadedPlugin>,
    function: String,
    length_argument: bool,
}

impl fmt::Debug for PluginPotential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PluginPotential")
            .field("plugin", &self.plugin.path())
            .field("function", &self.function)
            .finish()
    }
}

impl PluginPotential {
    pub fn function(&self) -> &str {
        &self.function
    }

    pub fn eval(&self, r: f64) -> Result<f64, PotentialError> {
        Ok(self.sample(&[r])?[0])
    }

    fn arguments(&self, rs: &[f64]) -> (Vec<NumericArray>, Vec<usize>) {
        let n = rs.len();
        let mut inputs = vec![NumericArray::Float64(rs.to_vec())];
        let mut lengths = vec![n];
        if self.length_argument {
            inputs.push(NumericArray::Int32(vec![n as i32]));
            lengths.push(1);
        }
        (inputs, lengths)
    }

    /// One foreign call for the whole batch.
    pub fn sample(&self, rs: &[f64]) -> Result<Vec<f64>, PotentialError> {
        let n = rs.len();
        if n == 0 {
            return Ok(Vec::new());
        }
        let (inputs, lengths) = self.arguments(rs);
        let mut out = self.plugin.call_with_lengths(&self.function, &inputs, &lengths, &[n])?;
        match out.pop() {
            Some(NumericArray::Float64(v)) => Ok(v),
            _ => unreachable!("shape checked at adaption"),
        }
    }
}

/// Wraps a plugin function as a scalar potential.
///
/// The function must take one `FLOAT64` input array and produce one `FLOAT64`
/// output array, and be overridable so the solver can evaluate a whole mesh in
/// one call. A trailing `INT32` input of length 1, if declared, receives the
/// number of points in the call.
pub fn potential_from_plugin(
    plugin: Arc<LoadedPlugin>,
    name: &str,
) -> Result<PotentialSpec, PluginError> {
    let shape = plugin.shape(name)?;
    let reject = |reason: String| PluginError::Adapter {
        function: name.to_string(),
        reason,
    };
    let length_argument = match shape.in_types.as_slice() {
        [ScalarType::Float64] => false,
        [ScalarType::Float64, ScalarType::Int32] if shape.in_lengths[1] == 1 => true,
        _ => {
            return Err(reject(format!(
                "needs one FLOAT64 input, optionally followed by a single INT32 length, declared {:?}",
                shape.in_types
            )))
        }
    };
    if shape.out_types != [ScalarType::Float64] {
        return Err(reject(format!(
            "needs exactly one FLOAT64 output, declared {:?}",
            shape.out_types
        )));
    }
    if !shape.overridable {
        return Err(reject("must be overridable for mesh evaluation".into()));
    }
    Ok(PotentialSpec::Plugin(PluginPotential {
        plugin,
        function: name.to_string(),
        length_argument,
    }))
}

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Evaluable scalar potential `V(r)`.
#[derive(Clone)]
pub enum PotentialSpec {
    /// `a/r + k r`
    Cornell { a: f64, k: f64 },
    /// `ln(a + b r)`
    LogChannel { a: f64, b: f64 },
    /// `c · r^p`
    Power { coefficient: f64, exponent: f64 },
    Tabulated(TabulatedPotential),
    Plugin(PluginPotential),
    Function(ScalarFn),
    Sum(Vec<PotentialSpec>),
    Scaled(f64, Box<PotentialSpec>),
}

impl fmt::Debug for PotentialSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PotentialSpec::Cornell { a, k } => write!(f, "Cornell {{ a: {a}, k: {k} }}"),
            PotentialSpec::LogChannel { a, b } => write!(f, "LogChannel {{ a: {a}, b: {b} }}"),
            PotentialSpec::Power {
                coefficient,
                exponent,
            } => write!(f, "Power {{ {coefficient} r^{exponent} }}"),
            PotentialSpec::Tabulated(t) => {
                let (lo, hi) = t.range();
                write!(f, "Tabulated [{lo}, {hi}]")
            }
            PotentialSpec::Plugin(p) => p.fmt(f),
            PotentialSpec::Function(_) => f.write_str("Function"),
            PotentialSpec::Sum(parts) => f.debug_list().entries(parts).finish(),
            PotentialSpec::Scaled(c, p) => write!(f, "{c} * {p:?}"),
        }
    }
}

fn finite(name: &str, x: f64) -> Result<f64, PotentialError> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(PotentialError::InvalidParameter(format!("{name} must be finite, got {x}")))
    }
}

impl PotentialSpec {
    pub fn cornell(a: f64, k: f64) -> Result<Self, PotentialError> {
        Ok(PotentialSpec::Cornell {
            a: finite("a", a)?,
            k: finite("k", k)?,
        })
    }

    pub fn log_channel(a: f64, b: f64) -> Result<Self, PotentialError> {
        Ok(PotentialSpec::LogChannel {
            a: finite("a", a)?,
            b: finite("b", b)?,
        })
    }

    pub fn power(coefficient: f64, exponent: f64) -> Result<Self, PotentialError> {
        Ok(PotentialSpec::Power {
            coefficient: finite("coefficient", coefficient)?,
            exponent: finite("exponent", exponent)?,
        })
    }

    pub fn function(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        PotentialSpec::Function(Arc::new(f))
    }

    pub fn scaled(factor: f64, inner: PotentialSpec) -> Result<Self, PotentialError> {
        Ok(PotentialSpec::Scaled(finite("scale factor", factor)?, Box::new(inner)))
    }

    pub fn eval(&self, r: f64) -> Result<f64, PotentialError> {
        if !(r > 0.0) {
            return Err(PotentialError::Domain {
                r,
                reason: "radius must be positive",
            });
        }
        let v = match self {
            PotentialSpec::Cornell { a, k } => a / r + k * r,
            PotentialSpec::LogChannel { a, b } => {
                let arg = a + b * r;
                if !(arg > 0.0) {
                    return Err(PotentialError::Domain {
                        r,
                        reason: "logarithm argument a + b r must be positive",
                    });
                }
                arg.ln()
            }
            PotentialSpec::Power {
                coefficient,
                exponent,
            } => coefficient * r.powf(*exponent),
            PotentialSpec::Tabulated(t) => t.eval(r)?,
            PotentialSpec::Plugin(p) => p.eval(r)?,
            PotentialSpec::Function(f) => f(r),
            PotentialSpec::Sum(parts) => {
                let mut acc = 0.0;
                for (i, p) in parts.iter().enumerate() {
                    let v = p.eval(r)?;
                    acc = if i == 0 { v } else { acc + v };
                }
                acc
            }
            PotentialSpec::Scaled(c, p) => c * p.eval(r)?,
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(PotentialError::NonFinite(r))
        }
    }

    /// Evaluates at every radius. Plugin-backed potentials make one foreign
    /// call; results equal pointwise [`PotentialSpec::eval`].
    pub fn sample(&self, rs: &[f64]) -> Result<Vec<f64>, PotentialError> {
        match self {
            PotentialSpec::Plugin(p) => {
                if let Some(&r) = rs.iter().find(|&&r| !(r > 0.0)) {
                    return Err(PotentialError::Domain {
                        r,
                        reason: "radius must be positive",
                    });
                }
                let values = p.sample(rs)?;
                if let Some(i) = values.iter().position(|v| !v.is_finite()) {
                    return Err(PotentialError::NonFinite(rs[i]));
                }
                Ok(values)
            }
            PotentialSpec::Sum(parts) => {
                let mut acc: Option<Vec<f64>> = None;
                for p in parts {
                    let v = p.sample(rs)?;
                    acc = Some(match acc {
                        None => v,
                        Some(mut a) => {
                            a.iter_mut().zip(&v).for_each(|(x, y)| *x += y);
                            a
                        }
                    });
                }
                let out = acc.unwrap_or_else(|| vec![0.0; rs.len()]);
                if let Some(i) = out.iter().position(|v| !v.is_finite()) {
                    return Err(PotentialError::NonFinite(rs[i]));
                }
                Ok(out)
            }
            PotentialSpec::Scaled(c, p) => {
                let out: Vec<f64> = p.sample(rs)?.into_iter().map(|v| c * v).collect();
                if let Some(i) = out.iter().position(|v| !v.is_finite()) {
                    return Err(PotentialError::NonFinite(rs[i]));
                }
                Ok(out)
            }
            _ => rs.iter().map(|&r| self.eval(r)).collect(),
        }
    }

    /// Linear confinement strength, when the potential is a Cornell one.
    pub fn string_tension(&self) -> Option<f64> {
        match self {
            PotentialSpec::Cornell { k, .. } if *k > 0.0 => Some(*k),
            _ => None,
        }
    }
}

/// Scalar potential evaluation.
pub fn eval_scalar(spec: &PotentialSpec, r: f64) -> Result<f64, PotentialError> {
    spec.eval(r)
}

pub fn eval_tabulated(table: &TabulatedPotential, r: f64) -> Result<f64, PotentialError> {
    table.eval(r)
}

pub type CouplingFn = Arc<dyn Fn(f64, usize, usize) -> f64 + Send + Sync>;

/// Evaluable N×N symmetric potential matrix, centrifugal entries included.
#[derive(Clone)]
pub enum MatrixPotentialSpec {
    /// Two-channel hybrid potential with logarithmic channel functions
    /// `F_i(r) = ln(a_i + b_i r)`.
    HybridLog {
        a0: f64,
        b0: f64,
        a1: f64,
        b1: f64,
        l: u32,
        mass: f64,
    },
    /// Diagonal from scalar potentials, off-diagonal `coupling(r, i, j)` for
    /// `i < j`, mirrored below the diagonal.
    DiagonalPlusCoupling {
        diagonal: Vec<PotentialSpec>,
        coupling: Option<CouplingFn>,
    },
}

impl fmt::Debug for MatrixPotentialSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MatrixPotentialSpec::HybridLog {
                a0,
                b0,
                a1,
                b1,
                l,
                mass,
            } => write!(
                f,
                "HybridLog {{ a0: {a0}, b0: {b0}, a1: {a1}, b1: {b1}, l: {l}, m: {mass} }}"
            ),
            MatrixPotentialSpec::DiagonalPlusCoupling { diagonal, coupling } => f
                .debug_struct("DiagonalPlusCoupling")
                .field("diagonal", diagonal)
                .field("coupled", &coupling.is_some())
                .finish(),
        }
    }
}

impl MatrixPotentialSpec {
    pub fn hybrid_log(
        a0: f64,
        b0: f64,
        a1: f64,
        b1: f64,
        l: u32,
        mass: f64,
    ) -> Result<Self, PotentialError> {
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(PotentialError::InvalidParameter(format!(
                "mass must be positive, got {mass}"
            )));
        }
        Ok(MatrixPotentialSpec::HybridLog {
            a0: finite("a0", a0)?,
            b0: finite("b0", b0)?,
            a1: finite("a1", a1)?,
            b1: finite("b1", b1)?,
            l,
            mass,
        })
    }

    pub fn diagonal(diagonal: Vec<PotentialSpec>) -> Result<Self, PotentialError> {
        if diagonal.is_empty() {
            return Err(PotentialError::InvalidParameter("need at least one channel".into()));
        }
        Ok(MatrixPotentialSpec::DiagonalPlusCoupling {
            diagonal,
            coupling: None,
        })
    }

    pub fn channels(&self) -> usize {
        match self {
            MatrixPotentialSpec::HybridLog { .. } => 2,
            MatrixPotentialSpec::DiagonalPlusCoupling { diagonal, .. } => diagonal.len(),
        }
    }

    /// Writes the row-major matrix at `r` into `out`.
    pub fn fill(&self, r: f64, out: &mut [f64]) -> Result<(), PotentialError> {
        if !(r > 0.0) {
            return Err(PotentialError::Domain {
                r,
                reason: "radius must be positive",
            });
        }
        let n = self.channels();
        assert_eq!(out.len(), n * n, "output buffer must hold {n}x{n} entries");
        match self {
            MatrixPotentialSpec::HybridLog {
                a0,
                b0,
                a1,
                b1,
                l,
                mass,
            } => {
                let ll = f64::from(*l) * f64::from(l + 1);
                let mr2 = mass * r * r;
                let f0 = PotentialSpec::LogChannel { a: *a0, b: *b0 }.eval(r)?;
                let f1 = PotentialSpec::LogChannel { a: *a1, b: *b1 }.eval(r)?;
                let off = -2.0 * ll.sqrt() / mr2;
                out[0] = (ll + 2.0) / mr2 + f0;
                out[1] = off;
                out[2] = off;
                out[3] = ll / mr2 + f1;
            }
            MatrixPotentialSpec::DiagonalPlusCoupling { diagonal, coupling } => {
                for i in 0..n {
                    out[i * n + i] = diagonal[i].eval(r)?;
                    for j in i + 1..n {
                        let c = coupling.as_ref().map_or(0.0, |f| f(r, i, j));
                        if !c.is_finite() {
                            return Err(PotentialError::NonFinite(r));
                        }
                        out[i * n + j] = c;
                        out[j * n + i] = c;
                    }
                }
            }
        }
        Ok(())
    }

    pub fn eval(&self, r: f64) -> Result<DMatrix<f64>, PotentialError> {
        let n = self.channels();
        let mut buf = vec![0.0; n * n];
        self.fill(r, &mut buf)?;
        Ok(DMatrix::from_row_slice(n, n, &buf))
    }
}

pub fn eval_matrix(spec: &MatrixPotentialSpec, r: f64) -> Result<DMatrix<f64>, PotentialError> {
    spec.eval(r)
}
