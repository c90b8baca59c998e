//! N-channel bound states from the node count of `det U(r)`, where the
//! columns of `U` are N independent regular solutions.

use nalgebra::DMatrix;
use rayon::prelude::*;
use thiserror::Error;

use crate::potentials::{MatrixPotentialSpec, PotentialError};
use crate::radial::{
    find_truncation_index_from, simpson, ChannelTrajectory,
    MatrixEffectivePotential, OrthonormalTrajectory, RadialError, RadialFunction, RadialMesh,
};
use crate::search::{bisect_transition, scan_brackets, Bracket, SearchError, ShootingConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoupledError {
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Potential(#[from] PotentialError),
    #[error(transparent)]
    Radial(#[from] RadialError),
    #[error("solution matrix at index {0} is degenerate")]
    Degenerate(usize),
}

impl From<CoupledError> for RadialError {
    fn from(e: CoupledError) -> Self {
        match e {
            CoupledError::Radial(r) => r,
            other => RadialError::Shape(other.to_string()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CoupledProblem {
    pub potential: MatrixPotentialSpec,
    pub l: u32,
    pub mass: f64,
    pub mesh: RadialMesh,
}

impl CoupledProblem {
    pub fn new(
        potential: MatrixPotentialSpec,
        l: u32,
        mass: f64,
        mesh: RadialMesh,
    ) -> Result<Self, CoupledError> {
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(CoupledError::InvalidProblem(format!(
                "mass must be positive, got {mass}"
            )));
        }
        if let MatrixPotentialSpec::HybridLog { l: pl, mass: pm, .. } = &potential {
            if *pl != l || *pm != mass {
                return Err(CoupledError::InvalidProblem(format!(
                    "potential built for l = {pl}, m = {pm} but problem has l = {l}, m = {mass}"
                )));
            }
        }
        Ok(Self {
            potential,
            l,
            mass,
            mesh,
        })
    }

    pub fn channels(&self) -> usize {
        self.potential.channels()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoupledSolution {
    pub n: usize,
    pub l: u32,
    pub energy: f64,
    /// Channel components, jointly normalized: `Σ_j ∫ u_j² dr = 1`.
    pub components: Vec<RadialFunction>,
    /// Unit combination of the columns of `U` forming the bound state.
    pub mixing: Vec<f64>,
    pub truncation_index: usize,
    /// Euclidean norm of the component vector at the truncation index.
    pub tail_residual: f64,
    /// Node count of `det U` at the returned wavefunction's energy.
    pub det_nodes: usize,
    pub bracket: Bracket,
    pub bisections: usize,
}

/// Sampled matrix potential reused across trial energies.
#[derive(Debug, Clone)]
pub struct CoupledShooter {
    potential: MatrixEffectivePotential,
    l: u32,
}

impl CoupledShooter {
    pub fn new(problem: &CoupledProblem) -> Result<Self, CoupledError> {
        let spec = &problem.potential;
        let potential = MatrixEffectivePotential::try_from_fn(
            problem.mesh,
            spec.channels(),
            problem.mass,
            |r, out| spec.fill(r, out).map_err(CoupledError::from),
        )?;
        Ok(Self {
            potential,
            l: problem.l,
        })
    }

    pub fn from_potential(potential: MatrixEffectivePotential, l: u32) -> Self {
        Self { potential, l }
    }

    pub fn mesh(&self) -> &RadialMesh {
        self.potential.mesh()
    }

    pub fn channels(&self) -> usize {
        self.potential.channels()
    }

    /// `U = r_min·I`, `U' = I` at `r_min`.
    pub fn initial_data(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.channels();
        let eps = self.mesh().r_min();
        let mut u0 = vec![0.0; n * n];
        let mut du0 = vec![0.0; n * n];
        for i in 0..n {
            u0[i * n + i] = eps;
            du0[i * n + i] = 1.0;
        }
        (u0, du0)
    }

    /// Solution basis at `energy`, re-orthonormalized along the mesh.
    pub fn propagate(&self, energy: f64) -> OrthonormalTrajectory {
        let (u0, du0) = self.initial_data();
        self.potential
            .propagate_orthonormal(energy, &u0, &du0)
            .expect("initial data is conformable by construction")
    }

    /// Raw columns of `U`, without re-orthonormalization.
    pub fn propagate_raw(&self, energy: f64) -> ChannelTrajectory {
        let (u0, du0) = self.initial_data();
        self.potential
            .propagate(energy, &u0, &du0)
            .expect("initial data is conformable by construction")
    }

    /// Nodes of `det U` on the mesh, counted with multiplicity.
    pub fn det_nodes_at(&self, energy: f64) -> usize {
        self.propagate(energy).conjugate_points().len()
    }

    pub fn bracket(&self, cfg: &ShootingConfig, n: usize) -> Result<Bracket, CoupledError> {
        Ok(scan_brackets(|e| self.det_nodes_at(e), cfg, &[n])?[0])
    }

    pub fn solve(&self, cfg: &ShootingConfig, n: usize) -> Result<CoupledSolution, CoupledError> {
        let bracket = self.bracket(cfg, n)?;
        self.refine(cfg, n, bracket)
    }

    pub fn solve_levels(
        &self,
        cfg: &ShootingConfig,
        levels: &[usize],
    ) -> Result<Vec<CoupledSolution>, CoupledError> {
        let brackets = scan_brackets(|e| self.det_nodes_at(e), cfg, levels)?;
        levels
            .par_iter()
            .zip(brackets)
            .map(|(&n, b)| self.refine(cfg, n, b))
            .collect()
    }

    fn refine(&self, cfg: &ShootingConfig, n: usize, bracket: Bracket) -> Result<CoupledSolution, CoupledError> {
        let (bracket, bisections) = bisect_transition(|e| self.det_nodes_at(e), bracket, n, cfg)?;
        let trajectory = self.propagate(bracket.lo);
        let last = trajectory.last_valid_index();
        let nodes = trajectory.conjugate_points();
        let det_nodes = nodes.len();

        // The least-growing solution is the convergent one; cut it at the
        // minimum of its tail, past the last node of det U.
        let (components, mixing) = trajectory.least_growing(last)?;
        let amplitude: Vec<f64> = (0..self.mesh().n_points())
            .map(|i| components.iter().map(|c| c[i] * c[i]).sum::<f64>().sqrt())
            .collect();
        let amplitude = RadialFunction::from_parts(*self.mesh(), amplitude, trajectory.divergence_index());
        let floor = nodes.last().copied().unwrap_or(0);
        let truncation_index = find_truncation_index_from(&amplitude, floor)?;

        let h = self.mesh().step();
        let mut norm = 0.0;
        let mut truncated = Vec::with_capacity(components.len());
        for mut v in components {
            v[truncation_index + 1..].iter_mut().for_each(|x| *x = 0.0);
            let sq: Vec<f64> = v.iter().map(|x| x * x).collect();
            norm += simpson(&sq, h);
            truncated.push(v);
        }
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(RadialError::ZeroNorm(truncation_index).into());
        }
        let scale = norm.sqrt().recip();
        let components: Vec<RadialFunction> = truncated
            .into_iter()
            .map(|v| RadialFunction::new(*self.mesh(), v.into_iter().map(|x| x * scale).collect()))
            .collect::<Result<Vec<_>, _>>()?;
        let tail_residual = components
            .iter()
            .map(|c| c.values()[truncation_index].powi(2))
            .sum::<f64>()
            .sqrt();

        Ok(CoupledSolution {
            n,
            l: self.l,
            energy: bracket.lo + 0.5 * (bracket.hi - bracket.lo),
            components,
            mixing,
            truncation_index,
            tail_residual,
            det_nodes,
            bracket,
            bisections,
        })
    }
}

/// Unit vector `c` minimizing `|U(r_match) c|`: the right singular vector of
/// the smallest singular value. Sign fixed so the largest entry is positive.
pub fn extract_combination(t: &ChannelTrajectory, i_match: usize) -> Result<Vec<f64>, CoupledError> {
    let i = i_match.min(t.mesh().n_points() - 1);
    let m = t.matrix(i);
    if m.iter().all(|&x| x == 0.0) {
        return Err(CoupledError::Degenerate(i));
    }
    Ok(unit_with_positive_pivot(smallest_right_singular(m, t.channels())).0)
}

// Unit vector minimizing |M c| for a row-major n×n matrix.
fn smallest_right_singular(m: &[f64], n: usize) -> Vec<f64> {
    match n {
        1 => vec![1.0],
        2 => smallest_right_singular_2x2(m),
        _ => {
            // scale first so squared singular values stay in range
            let s = m.iter().fold(0.0_f64, |a, x| a.max(x.abs()));
            let mat = DMatrix::from_row_slice(n, n, m) / s;
            let svd = mat.svd(false, true);
            let v_t = svd.v_t.expect("requested right singular vectors");
            let k = svd.singular_values.imin();
            v_t.row(k).iter().copied().collect()
        }
    }
}

// Normalizes to unit length with the largest-magnitude entry positive;
// also returns the sign that was applied.
fn unit_with_positive_pivot(mut c: Vec<f64>) -> (Vec<f64>, f64) {
    let norm = c.iter().map(|x| x * x).sum::<f64>().sqrt();
    let pivot = c
        .iter()
        .copied()
        .fold(0.0_f64, |best, x| if x.abs() > best.abs() { x } else { best });
    let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
    c.iter_mut().for_each(|x| *x *= sign / norm);
    (c, sign)
}

// Right singular vectors of [[a, b], [c, d]] are the eigenvectors of MᵀM; the
// dominant one sits at angle θ with tan 2θ = 2(ab + cd) / (a² + c² − b² − d²).
fn smallest_right_singular_2x2(m: &[f64]) -> Vec<f64> {
    let s = m.iter().fold(0.0_f64, |a, x| a.max(x.abs()));
    let (a, b, c, d) = (m[0] / s, m[1] / s, m[2] / s, m[3] / s);
    let theta = 0.5 * (2.0 * (a * b + c * d)).atan2(a * a + c * c - b * b - d * d);
    vec![-theta.sin(), theta.cos()]
}

/// Coupled-channel eigenvalue with `n` nodes of `det U`.
pub fn solve_coupled(
    problem: &CoupledProblem,
    cfg: &ShootingConfig,
    n: usize,
) -> Result<CoupledSolution, CoupledError> {
    CoupledShooter::new(problem)?.solve(cfg, n)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trajectory_from(mesh: RadialMesh, mats: &[[f64; 4]]) -> ChannelTrajectory {
        let mut data = Vec::new();
        for i in 0..mesh.n_points() {
            data.extend_from_slice(&mats[i.min(mats.len() - 1)]);
        }
        ChannelTrajectory::from_matrices(mesh, 2, data).unwrap()
    }

    #[test]
    fn singular_matrix_gives_null_direction() {
        let mesh = RadialMesh::new(0.1, 1.0, 16).unwrap();
        let t = trajectory_from(mesh, &[[1.0, 2.0, 2.0, 4.0]]);
        let c = extract_combination(&t, 0).unwrap();
        let m = t.matrix(0);
        let residual = ((m[0] * c[0] + m[1] * c[1]).powi(2) + (m[2] * c[0] + m[3] * c[1]).powi(2)).sqrt();
        assert!(residual < 1e-14, "{residual}");
        assert!((c[0] * c[0] + c[1] * c[1] - 1.0).abs() < 1e-15);
        assert!(c.iter().cloned().fold(0.0_f64, |a, x| if x.abs() > a.abs() { x } else { a }) > 0.0);
    }

    #[test]
    fn small_decoupled_channel_selected() {
        let mesh = RadialMesh::new(0.1, 1.0, 16).unwrap();
        let t = trajectory_from(mesh, &[[1e-8, 0.0, 0.0, 1e40]]);
        let c = extract_combination(&t, 3).unwrap();
        assert!((c[0] - 1.0).abs() < 1e-12 && c[1].abs() < 1e-12, "{c:?}");
    }

    #[test]
    fn general_n_uses_svd() {
        let mesh = RadialMesh::new(0.1, 1.0, 16).unwrap();
        // rank-2 3x3: third column = first + second
        let m = [1.0, 2.0, 3.0, 0.5, -1.0, -0.5, 2.0, 0.0, 2.0];
        let data: Vec<f64> = (0..16).flat_map(|_| m).collect();
        let t = ChannelTrajectory::from_matrices(mesh, 3, data).unwrap();
        let c = extract_combination(&t, 5).unwrap();
        let norm: f64 = c.iter().map(|x| x * x).sum();
        assert!((norm - 1.0).abs() < 1e-14);
        for row in 0..3 {
            let r: f64 = (0..3).map(|k| m[row * 3 + k] * c[k]).sum();
            assert!(r.abs() < 1e-12);
        }
    }

    #[test]
    fn zero_matrix_is_degenerate() {
        let mesh = RadialMesh::new(0.1, 1.0, 16).unwrap();
        let t = trajectory_from(mesh, &[[0.0; 4]]);
        assert_eq!(extract_combination(&t, 0), Err(CoupledError::Degenerate(0)));
    }

    use crate::potentials::PotentialSpec;
    use crate::shooting::{solve_eigen, ShootingProblem};

    fn diagonal_problem(channels: Vec<PotentialSpec>, mesh: RadialMesh) -> CoupledProblem {
        CoupledProblem::new(MatrixPotentialSpec::diagonal(channels).unwrap(), 0, 1.0, mesh).unwrap()
    }

    fn oscillator_mesh() -> RadialMesh {
        RadialMesh::new(1e-5, 20.0, 8001).unwrap()
    }

    #[test]
    fn decoupled_spectrum_is_merged_channel_spectra() {
        let mesh = oscillator_mesh();
        let a = PotentialSpec::power(0.25, 2.0).unwrap();
        let b = PotentialSpec::Sum(vec![PotentialSpec::power(0.25, 2.0).unwrap(), PotentialSpec::power(1.0, 0.0).unwrap()]);
        let cfg = ShootingConfig::new(0.5, 8.0);
        let mut expected = Vec::new();
        for v in [&a, &b] {
            let p = ShootingProblem::new(v.clone(), 0, 1.0, mesh).unwrap();
            for n in 0..3 {
                expected.push(solve_eigen(&p, &cfg, n).unwrap().energy);
            }
        }
        expected.sort_by(f64::total_cmp);
        let shooter = CoupledShooter::new(&diagonal_problem(vec![a, b], mesh)).unwrap();
        let got = shooter.solve_levels(&cfg, &[0, 1, 2]).unwrap();
        for (s, e) in got.iter().zip(&expected) {
            assert!((s.energy - e).abs() < 1e-6, "{} vs {e}", s.energy);
            assert_eq!(s.det_nodes, s.n);
        }
    }

    #[test]
    fn degenerate_channels_share_the_eigenvalue() {
        let v = PotentialSpec::power(0.25, 2.0).unwrap();
        let p = diagonal_problem(vec![v.clone(), v], oscillator_mesh());
        let shooter = CoupledShooter::new(&p).unwrap();
        let sols = shooter.solve_levels(&ShootingConfig::new(0.5, 4.0), &[0, 1]).unwrap();
        for s in &sols {
            assert!((s.energy - 1.5).abs() < 1e-6, "{}", s.energy);
        }
    }

    #[test]
    fn three_channels_count_with_multiplicity() {
        let osc = |shift: f64| {
            PotentialSpec::Sum(vec![PotentialSpec::power(0.25, 2.0).unwrap(), PotentialSpec::power(shift, 0.0).unwrap()])
        };
        let p = diagonal_problem(vec![osc(0.0), osc(0.0), osc(1.0)], oscillator_mesh());
        let shooter = CoupledShooter::new(&p).unwrap();
        let got: Vec<f64> = shooter
            .solve_levels(&ShootingConfig::new(0.5, 4.0), &[0, 1, 2, 3])
            .unwrap()
            .iter()
            .map(|s| s.energy)
            .collect();
        for (g, want) in got.iter().zip([1.5, 1.5, 2.5, 3.5]) {
            assert!((g - want).abs() < 1e-6, "{got:?}");
        }
    }

    #[test]
    fn bound_channel_is_selected_when_partner_diverges() {
        let bound = PotentialSpec::power(0.25, 2.0).unwrap();
        let raised = PotentialSpec::Sum(vec![bound.clone(), PotentialSpec::power(3.0, 0.0).unwrap()]);
        let p = diagonal_problem(vec![bound, raised], oscillator_mesh());
        let s = solve_coupled(&p, &ShootingConfig::new(0.5, 3.0), 0).unwrap();
        assert!((s.energy - 1.5).abs() < 1e-6);
        assert!((s.mixing[0] - 1.0).abs() < 1e-6 && s.mixing[1].abs() < 1e-6, "{:?}", s.mixing);
        let h = p.mesh.step();
        let total: f64 = s
            .components
            .iter()
            .map(|c| simpson(&c.values().iter().map(|x| x * x).collect::<Vec<_>>(), h))
            .sum();
        assert!((total - 1.0).abs() < 1e-10);
    }

    #[test]
    fn single_channel_reduces_to_scalar_solver() {
        let mesh = RadialMesh::new(1e-5, 30.0 / 0.5_f64.sqrt(), 8001).unwrap();
        let cornell = PotentialSpec::cornell(0.1, 0.5).unwrap();
        let with_centrifugal = PotentialSpec::Sum(vec![cornell.clone(), PotentialSpec::power(2.0, -2.0).unwrap()]);
        let cfg = ShootingConfig::new(0.0, 5.0);
        let scalar = solve_eigen(&ShootingProblem::new(cornell, 1, 1.0, mesh).unwrap(), &cfg, 1).unwrap();
        let p = CoupledProblem::new(MatrixPotentialSpec::diagonal(vec![with_centrifugal]).unwrap(), 1, 1.0, mesh).unwrap();
        let coupled = solve_coupled(&p, &cfg, 1).unwrap();
        assert!((scalar.energy - coupled.energy).abs() < 1e-6);
        assert_eq!(coupled.mixing, vec![1.0]);
    }

    #[test]
    fn mismatched_hybrid_parameters_rejected() {
        let spec = MatrixPotentialSpec::hybrid_log(1.0, 0.5, 2.0, 0.1, 1, 1.0).unwrap();
        let mesh = RadialMesh::new(1e-5, 30.0, 1001).unwrap();
        assert!(CoupledProblem::new(spec.clone(), 2, 1.0, mesh).is_err());
        assert!(CoupledProblem::new(spec, 1, 1.0, mesh).is_ok());
    }
}
