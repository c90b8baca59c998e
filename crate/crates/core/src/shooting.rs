//! Single-channel eigenvalue search for the reduced radial equation
//! `-y''/m + [l(l+1)/(m r²) + V(r)] y = E y`.

use rayon::prelude::*;
use thiserror::Error;

use crate::potentials::{PotentialError, PotentialSpec};
use crate::radial::{
    count_nodes, find_truncation_index_from, normalize, EffectivePotential, RadialError,
    RadialFunction, RadialMesh,
};
use crate::search::{bisect_transition, scan_brackets, Bracket, SearchError, ShootingConfig};

pub const DEFAULT_R_MIN: f64 = 1e-5;
pub const DEFAULT_POINTS: usize = 20_001;
const DEFAULT_EXTENT: f64 = 30.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ShootingError {
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Potential(#[from] PotentialError),
    #[error(transparent)]
    Radial(#[from] RadialError),
    #[error("converged wavefunction has {found} nodes, expected {expected}")]
    NodeMismatch { expected: usize, found: usize },
}

#[derive(Debug, Clone)]
pub struct ShootingProblem {
    pub potential: PotentialSpec,
    pub l: u32,
    pub mass: f64,
    pub mesh: RadialMesh,
}

impl ShootingProblem {
    pub fn new(
        potential: PotentialSpec,
        l: u32,
        mass: f64,
        mesh: RadialMesh,
    ) -> Result<Self, ShootingError> {
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(ShootingError::InvalidProblem(format!(
                "mass must be positive, got {mass}"
            )));
        }
        Ok(Self {
            potential,
            l,
            mass,
            mesh,
        })
    }

    /// Problem on [`default_mesh`].
    pub fn with_default_mesh(potential: PotentialSpec, l: u32, mass: f64) -> Result<Self, ShootingError> {
        let mesh = default_mesh(&potential, mass)?;
        Self::new(potential, l, mass, mesh)
    }
}

/// `[1e-5, 30/√(k/m)]` for linearly confining potentials, `[1e-5, 30]`
/// otherwise, with 20001 points.
pub fn default_mesh(potential: &PotentialSpec, mass: f64) -> Result<RadialMesh, ShootingError> {
    let r_max = match potential.string_tension() {
        Some(k) if mass > 0.0 => DEFAULT_EXTENT / (k / mass).sqrt(),
        _ => DEFAULT_EXTENT,
    };
    Ok(RadialMesh::new(DEFAULT_R_MIN, r_max, DEFAULT_POINTS)?)
}

/// Converged bound state.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenSolution {
    /// Node count (radial excitation).
    pub n: usize,
    pub l: u32,
    pub energy: f64,
    /// Normalized, zero beyond `truncation_index`.
    pub wavefunction: RadialFunction,
    pub truncation_index: usize,
    /// `|y|` at the truncation index after normalization.
    pub tail_residual: f64,
    pub bracket: Bracket,
    pub bisections: usize,
}

/// Effective potential of a problem, sampled once and reused at every trial
/// energy.
#[derive(Debug, Clone)]
pub struct Shooter {
    effective: EffectivePotential,
    l: u32,
}

impl Shooter {
    pub fn new(problem: &ShootingProblem) -> Result<Self, ShootingError> {
        let v = problem.potential.sample(&problem.mesh.half_grid())?;
        let effective = EffectivePotential::from_half_grid(problem.mesh, problem.l, problem.mass, &v)?;
        Ok(Self {
            effective,
            l: problem.l,
        })
    }

    pub fn mesh(&self) -> &RadialMesh {
        self.effective.mesh()
    }

    pub fn l(&self) -> u32 {
        self.l
    }

    /// Regular series data `y = r^(l+1)`, `y' = (l+1) r^l` at `r_min`.
    pub fn initial_data(&self) -> (f64, f64) {
        let r0 = self.mesh().r_min();
        let l = self.l as i32;
        (r0.powi(l + 1), f64::from(self.l + 1) * r0.powi(l))
    }

    pub fn propagate(&self, energy: f64) -> RadialFunction {
        let (y0, dy0) = self.initial_data();
        self.effective.propagate(energy, y0, dy0)
    }

    pub fn nodes_at(&self, energy: f64) -> usize {
        let f = self.propagate(energy);
        count_nodes(&f, f.last_valid_index())
    }

    pub fn bracket(&self, cfg: &ShootingConfig, n: usize) -> Result<Bracket, ShootingError> {
        Ok(scan_brackets(|e| self.nodes_at(e), cfg, &[n])?[0])
    }

    pub fn solve(&self, cfg: &ShootingConfig, n: usize) -> Result<EigenSolution, ShootingError> {
        let bracket = self.bracket(cfg, n)?;
        self.refine(cfg, n, bracket)
    }

    /// Solves every level in `levels` from one shared scan.
    pub fn solve_levels(
        &self,
        cfg: &ShootingConfig,
        levels: &[usize],
    ) -> Result<Vec<EigenSolution>, ShootingError> {
        let brackets = scan_brackets(|e| self.nodes_at(e), cfg, levels)?;
        levels
            .par_iter()
            .zip(brackets)
            .map(|(&n, b)| self.refine(cfg, n, b))
            .collect()
    }

    fn refine(&self, cfg: &ShootingConfig, n: usize, bracket: Bracket) -> Result<EigenSolution, ShootingError> {
        let (bracket, bisections) = bisect_transition(|e| self.nodes_at(e), bracket, n, cfg)?;
        let raw = self.propagate(bracket.lo);
        let found = count_nodes(&raw, raw.last_valid_index());
        if found != n {
            return Err(ShootingError::NodeMismatch { expected: n, found });
        }
        let energy = bracket.lo + 0.5 * (bracket.hi - bracket.lo);
        let floor = self.turning_point(energy);
        let truncation_index = find_truncation_index_from(&raw, floor)?;
        let wavefunction = normalize(&raw, truncation_index)?;
        let tail_residual = wavefunction.values()[truncation_index].abs();
        Ok(EigenSolution {
            n,
            l: self.l,
            energy,
            wavefunction,
            truncation_index,
            tail_residual,
            bracket,
            bisections,
        })
    }

    /// Outermost mesh index where the effective potential lies below `energy`.
    fn turning_point(&self, energy: f64) -> usize {
        let v = self.effective.half_grid_values();
        (0..self.mesh().n_points())
            .rev()
            .find(|&i| v[2 * i] < energy)
            .unwrap_or(0)
    }
}

/// Energy interval over which the node count steps from `<= n` to `>= n+1`.
pub fn bracket_transition(
    problem: &ShootingProblem,
    cfg: &ShootingConfig,
    n: usize,
) -> Result<(f64, f64), ShootingError> {
    let b = Shooter::new(problem)?.bracket(cfg, n)?;
    Ok((b.lo, b.hi))
}

/// Eigenvalue and normalized wavefunction with `n` nodes.
pub fn solve_eigen(
    problem: &ShootingProblem,
    cfg: &ShootingConfig,
    n: usize,
) -> Result<EigenSolution, ShootingError> {
    Shooter::new(problem)?.solve(cfg, n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::radial::integrate_product;

    fn cornell(l: u32) -> ShootingProblem {
        ShootingProblem::with_default_mesh(PotentialSpec::cornell(0.1, 0.5).unwrap(), l, 1.0).unwrap()
    }

    #[test]
    fn default_mesh_extent() {
        let p = cornell(1);
        assert!((p.mesh.r_max() - 30.0 / 0.5_f64.sqrt()).abs() < 1e-12);
        assert_eq!(p.mesh.n_points(), DEFAULT_POINTS);
        let q = ShootingProblem::with_default_mesh(PotentialSpec::power(0.25, 2.0).unwrap(), 0, 1.0).unwrap();
        assert_eq!(q.mesh.r_max(), 30.0);
    }

    #[test]
    fn rejects_nonpositive_mass() {
        let mesh = RadialMesh::new(1e-5, 10.0, 100).unwrap();
        assert!(ShootingProblem::new(PotentialSpec::cornell(0.1, 0.5).unwrap(), 0, 0.0, mesh).is_err());
    }

    #[test]
    fn bracket_contains_ground_state() {
        let p = cornell(1);
        let cfg = ShootingConfig::new(0.1, 20.0).with_scan_step(0.1);
        let (lo, hi) = bracket_transition(&p, &cfg, 0).unwrap();
        assert!(lo < 2.15789 && 2.15789 <= hi, "[{lo}, {hi}]");
        assert!(hi - lo <= 0.1 + 1e-12);
        let s = Shooter::new(&p).unwrap();
        assert!(s.nodes_at(lo) == 0 && s.nodes_at(hi) >= 1);
    }

    #[test]
    fn unreachable_level_not_bracketed() {
        let cfg = ShootingConfig::new(0.1, 0.2);
        assert!(matches!(
            bracket_transition(&cornell(1), &cfg, 20),
            Err(ShootingError::Search(SearchError::NotBracketed { .. }))
        ));
    }

    #[test]
    fn first_excited_state_one_node_unit_norm() {
        let p = cornell(1);
        let cfg = ShootingConfig::new(0.0, 10.0);
        let sol = solve_eigen(&p, &cfg, 1).unwrap();
        assert!((sol.energy - 3.10952).abs() / 3.10952 < 5e-4, "{}", sol.energy);
        assert_eq!(count_nodes(&sol.wavefunction, sol.truncation_index), 1);
        let norm = integrate_product(&sol.wavefunction, |_| 1.0, &sol.wavefunction).unwrap();
        assert!((norm - 1.0).abs() < 1e-10);
        assert!(sol.tail_residual < 1e-3);
        assert!(sol.bracket.hi - sol.bracket.lo <= cfg.bisect_tol);
    }

    #[test]
    fn bisection_cap_is_a_convergence_error() {
        let cfg = ShootingConfig::new(0.0, 10.0).with_max_bisect(3);
        assert!(matches!(
            solve_eigen(&cornell(0), &cfg, 0),
            Err(ShootingError::Search(SearchError::NoConvergence { iterations: 3, .. }))
        ));
    }
}
