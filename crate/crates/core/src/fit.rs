//! Fits the Cornell parameters `(a, k, m)` to three bound-state masses.

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

use crate::potentials::PotentialSpec;
use crate::search::ShootingConfig;
use crate::spectrum::{SpectrumError, SpectrumModel, DEFAULT_BASIS_MAX};

const FD_STEP: f64 = 1e-5;
const MAX_HALVINGS: usize = 30;
const SINGULAR_RATIO: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitTarget {
    pub n: usize,
    pub l: u32,
    pub mass: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CornellParams {
    pub a: f64,
    pub k: f64,
    pub m: f64,
}

impl CornellParams {
    fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.a, self.k, self.m)
    }

    fn from_vector(v: &Vector3<f64>) -> Self {
        Self {
            a: v[0],
            k: v[1],
            m: v[2],
        }
    }
}

/// Correction potentials included in every predicted mass.
#[derive(Debug, Clone, Default)]
pub struct Corrections {
    pub v_1m: Option<PotentialSpec>,
    pub v_1m2: Option<PotentialSpec>,
    pub basis_max: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct FitOptions {
    /// Required bound on the largest absolute mass residual.
    pub tol: f64,
    pub max_iter: usize,
    pub config: ShootingConfig,
    pub corrections: Corrections,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 50,
            config: ShootingConfig::new(0.0, 10.0),
            corrections: Corrections::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub params: CornellParams,
    pub iterations: usize,
    /// Predicted minus target mass, per target.
    pub residuals: [f64; 3],
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("invalid targets: {0}")]
    InvalidTargets(String),
    #[error("singular Jacobian at iteration {iteration}")]
    SingularJacobian { iteration: usize },
    #[error("no convergence after {iterations} iterations; best max residual {residual:e} at {best:?}")]
    NoConvergence {
        best: CornellParams,
        residual: f64,
        iterations: usize,
    },
    #[error("mass evaluation failed at {params:?}: {source}")]
    Model {
        params: CornellParams,
        #[source]
        source: SpectrumError,
    },
}

/// Predicted masses for `targets` at `params`.
pub fn predict(
    params: CornellParams,
    targets: &[FitTarget; 3],
    options: &FitOptions,
) -> Result<[f64; 3], FitError> {
    let wrap = |source| FitError::Model { params, source };
    let v0 = PotentialSpec::cornell(params.a, params.k).map_err(|e| wrap(e.into()))?;
    let mut out = [0.0; 3];
    let mut ls: Vec<u32> = targets.iter().map(|t| t.l).collect();
    ls.sort_unstable();
    ls.dedup();
    for l in ls {
        let mut model = SpectrumModel::new(v0.clone(), l, params.m, options.config)
            .map_err(wrap)?
            .with_v_1m(options.corrections.v_1m.clone())
            .with_v_1m2(options.corrections.v_1m2.clone());
        model = model
            .with_basis_max(options.corrections.basis_max.unwrap_or(DEFAULT_BASIS_MAX))
            .map_err(wrap)?;
        for (slot, t) in out.iter_mut().zip(targets).filter(|(_, t)| t.l == l) {
            *slot = model.mass_at_order(t.n).map_err(wrap)?.total;
        }
    }
    Ok(out)
}

fn residuals(params: CornellParams, targets: &[FitTarget; 3], options: &FitOptions) -> Result<Vector3<f64>, FitError> {
    let predicted = predict(params, targets, options)?;
    Ok(Vector3::from_fn(|i, _| predicted[i] - targets[i].mass))
}

/// Damped Newton iteration on the three mass residuals with a forward
/// difference Jacobian.
pub fn fit_parameters(
    targets: &[FitTarget; 3],
    guess: CornellParams,
    options: &FitOptions,
) -> Result<FitReport, FitError> {
    for (i, a) in targets.iter().enumerate() {
        if !a.mass.is_finite() {
            return Err(FitError::InvalidTargets(format!("target {i} has a non-finite mass")));
        }
        if targets[..i].iter().any(|b| (b.n, b.l) == (a.n, a.l)) {
            return Err(FitError::SingularJacobian { iteration: 0 });
        }
    }

    let mut p = guess.to_vector();
    let mut f = residuals(guess, targets, options)?;
    let mut iterations = 0;
    loop {
        if f.amax() < options.tol {
            return Ok(FitReport {
                params: CornellParams::from_vector(&p),
                iterations,
                residuals: [f[0], f[1], f[2]],
            });
        }
        let fail = |p: &Vector3<f64>, f: &Vector3<f64>, iterations| FitError::NoConvergence {
            best: CornellParams::from_vector(p),
            residual: f.amax(),
            iterations,
        };
        if iterations >= options.max_iter {
            return Err(fail(&p, &f, iterations));
        }

        let mut jac = Matrix3::zeros();
        for j in 0..3 {
            let step = FD_STEP * p[j].abs().max(1e-3);
            let mut shifted = p;
            shifted[j] += step;
            let fj = residuals(CornellParams::from_vector(&shifted), targets, options)?;
            jac.set_column(j, &((fj - f) / step));
        }
        let scale: f64 = jac.row_iter().map(|r| r.norm()).product();
        if !(jac.determinant().abs() > SINGULAR_RATIO * scale) {
            return Err(FitError::SingularJacobian { iteration: iterations });
        }
        let delta = jac
            .lu()
            .solve(&(-f))
            .ok_or(FitError::SingularJacobian { iteration: iterations })?;

        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let trial = p + delta * lambda;
            if let Ok(ft) = residuals(CornellParams::from_vector(&trial), targets, options) {
                if ft.norm() < f.norm() {
                    accepted = Some((trial, ft));
                    break;
                }
            }
            lambda *= 0.5;
        }
        iterations += 1;
        match accepted {
            Some((trial, ft)) => {
                p = trial;
                f = ft;
            }
            None => return Err(fail(&p, &f, iterations)),
        }
    }
}
