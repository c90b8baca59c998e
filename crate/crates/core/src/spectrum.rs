//! Perturbative bound-state masses built on the leading-order spectrum.

use std::sync::{Arc, Mutex};

use thiserror::Error;

use crate::potentials::{PotentialError, PotentialSpec};
use crate::radial::{simpson, RadialMesh};
use crate::search::{SearchError, ShootingConfig};
use crate::shooting::{default_mesh, EigenSolution, Shooter, ShootingError, ShootingProblem};

pub const DEFAULT_BASIS_MAX: usize = 20;

// Upper scan bound is widened this many times when a level is missing.
const MAX_WIDENINGS: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectrumError {
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error(transparent)]
    Shooting(#[from] ShootingError),
    #[error(transparent)]
    Potential(#[from] PotentialError),
    #[error(
        "levels {n} and {other} are degenerate (E = {energy}); perturbation theory does not apply"
    )]
    Degenerate { n: usize, other: usize, energy: f64 },
}

/// Leading-order potential plus the `1/m` and `1/m²` correction potentials
/// for one quark mass and one angular momentum.
pub struct SpectrumModel {
    mass: f64,
    v0: PotentialSpec,
    v_1m: Option<PotentialSpec>,
    v_1m2: Option<PotentialSpec>,
    l: u32,
    basis_max: usize,
    mesh: RadialMesh,
    config: ShootingConfig,
    factor_1m: f64,
    factor_1m2: f64,
    states: Mutex<Option<Arc<Vec<EigenSolution>>>>,
}

impl std::fmt::Debug for SpectrumModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectrumModel")
            .field("mass", &self.mass)
            .field("v0", &self.v0)
            .field("v_1m", &self.v_1m)
            .field("v_1m2", &self.v_1m2)
            .field("l", &self.l)
            .field("basis_max", &self.basis_max)
            .field("mesh", &self.mesh)
            .field("config", &self.config)
            .finish_non_exhaustive()
    }
}

/// Terms of the mass formula for one state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MassBreakdown {
    pub e0: f64,
    /// `2m + E0`
    pub lo: f64,
    /// `⟨V^(1/m)⟩ / m`
    pub nlo: f64,
    /// `⟨V^(1/m²)⟩ / m²`
    pub nnlo_diag: f64,
    /// Second-order state sum over `V^(1/m)`, divided by `m²`.
    pub nnlo_sum: f64,
    pub total: f64,
    /// Magnitude of the last term kept in the state sum, divided by `m²`.
    pub sum_tail: f64,
}

impl SpectrumModel {
    /// Model with no corrections, the default mesh for `v0` and the default
    /// state-sum truncation.
    pub fn new(v0: PotentialSpec, l: u32, mass: f64, config: ShootingConfig) -> Result<Self, SpectrumError> {
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(SpectrumError::InvalidModel(format!("mass must be positive, got {mass}")));
        }
        config.validate().map_err(ShootingError::from)?;
        let mesh = default_mesh(&v0, mass)?;
        Ok(Self {
            mass,
            v0,
            v_1m: None,
            v_1m2: None,
            l,
            basis_max: DEFAULT_BASIS_MAX,
            mesh,
            config,
            factor_1m: 1.0,
            factor_1m2: 1.0,
            states: Mutex::new(None),
        })
    }

    pub fn with_v_1m(mut self, v: Option<PotentialSpec>) -> Self {
        self.v_1m = v;
        self
    }

    pub fn with_v_1m2(mut self, v: Option<PotentialSpec>) -> Self {
        self.v_1m2 = v;
        self
    }

    pub fn with_mesh(mut self, mesh: RadialMesh) -> Self {
        self.mesh = mesh;
        self.states = Mutex::new(None);
        self
    }

    pub fn with_basis_max(mut self, basis_max: usize) -> Result<Self, SpectrumError> {
        if basis_max < 1 {
            return Err(SpectrumError::InvalidModel("basis_max must be at least 1".into()));
        }
        self.basis_max = basis_max;
        Ok(self)
    }

    /// Multipliers applied to every `V^(1/m)` and `V^(1/m²)` matrix element.
    pub fn with_factors(mut self, factor_1m: f64, factor_1m2: f64) -> Self {
        self.factor_1m = factor_1m;
        self.factor_1m2 = factor_1m2;
        self
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn l(&self) -> u32 {
        self.l
    }

    pub fn basis_max(&self) -> usize {
        self.basis_max
    }

    pub fn mesh(&self) -> &RadialMesh {
        &self.mesh
    }

    /// Leading-order states `0..=upto`, solved once and cached.
    pub fn states(&self, upto: usize) -> Result<Arc<Vec<EigenSolution>>, SpectrumError> {
        let mut cache = self.states.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(states) = cache.as_ref() {
            if states.len() > upto {
                return Ok(Arc::clone(states));
            }
        }
        let problem = ShootingProblem::new(self.v0.clone(), self.l, self.mass, self.mesh)?;
        let shooter = Shooter::new(&problem)?;
        let levels: Vec<usize> = (0..=upto).collect();
        let mut cfg = self.config;
        let mut widenings = 0;
        let solved = loop {
            match shooter.solve_levels(&cfg, &levels) {
                Err(ShootingError::Search(SearchError::NotBracketed { count_max, .. }))
                    if count_max <= upto && widenings < MAX_WIDENINGS =>
                {
                    cfg.e_max += cfg.e_max - cfg.e_min;
                    widenings += 1;
                }
                other => break other?,
            }
        };
        let solved = Arc::new(solved);
        *cache = Some(Arc::clone(&solved));
        Ok(solved)
    }

    pub fn state(&self, n: usize) -> Result<EigenSolution, SpectrumError> {
        Ok(self.states(n)?[n].clone())
    }

    /// `∫ y_n w(r) y_n' dr` over the cached, normalized states.
    pub fn matrix_element(&self, n: usize, n_prime: usize, w: &PotentialSpec) -> Result<f64, SpectrumError> {
        let states = self.states(n.max(n_prime))?;
        let weight = w.sample(&self.mesh.radii())?;
        Ok(weighted_overlap(&states[n], &states[n_prime], &weight, self.mesh.step()))
    }

    /// `Σ_{m' ≠ n, m' ≤ basis_max} |⟨n|V^(1/m)|m'⟩|² / (E_n − E_m')`, without
    /// the `1/m²` factor, together with the magnitude of the last term.
    pub fn second_order_sum(&self, n: usize) -> Result<(f64, f64), SpectrumError> {
        let Some(v) = &self.v_1m else {
            return Ok((0.0, 0.0));
        };
        let states = self.states(n.max(self.basis_max))?;
        let weight = v.sample(&self.mesh.radii())?;
        let h = self.mesh.step();
        let e_n = states[n].energy;
        let gap_floor = 10.0 * self.config.bisect_tol;

        let mut sum = 0.0;
        let mut last = 0.0_f64;
        for m in (0..=self.basis_max).filter(|&m| m != n) {
            let gap = e_n - states[m].energy;
            if gap.abs() <= gap_floor {
                return Err(SpectrumError::Degenerate {
                    n,
                    other: m,
                    energy: e_n,
                });
            }
            let element = self.factor_1m * weighted_overlap(&states[n], &states[m], &weight, h);
            let term = element * element / gap;
            sum += term;
            last = term.abs();
        }
        Ok((sum, last))
    }

    pub fn mass_at_order(&self, n: usize) -> Result<MassBreakdown, SpectrumError> {
        let m = self.mass;
        let e0 = self.states(n)?[n].energy;
        let lo = 2.0 * m + e0;
        let nlo = match &self.v_1m {
            Some(v) => self.factor_1m * self.matrix_element(n, n, v)? / m,
            None => 0.0,
        };
        let nnlo_diag = match &self.v_1m2 {
            Some(v) => self.factor_1m2 * self.matrix_element(n, n, v)? / (m * m),
            None => 0.0,
        };
        let (sum, tail) = self.second_order_sum(n)?;
        let nnlo_sum = sum / (m * m);
        Ok(MassBreakdown {
            e0,
            lo,
            nlo,
            nnlo_diag,
            nnlo_sum,
            total: lo + nlo + nnlo_diag + nnlo_sum,
            sum_tail: tail / (m * m),
        })
    }
}

// Product formed as (a·b)·w so the result is symmetric in the two states.
fn weighted_overlap(a: &EigenSolution, b: &EigenSolution, w: &[f64], h: f64) -> f64 {
    let integrand: Vec<f64> = a
        .wavefunction
        .values()
        .iter()
        .zip(b.wavefunction.values())
        .zip(w)
        .map(|((x, y), w)| (x * y) * w)
        .collect();
    simpson(&integrand, h)
}
