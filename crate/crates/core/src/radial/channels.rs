use nalgebra::DMatrix;

use super::{RadialError, RadialFunction, RadialMesh, DIVERGENCE_LIMIT};

/// N×N potential matrix (centrifugal entries included) sampled on the
/// half-step grid, stored row-major per grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixEffectivePotential {
    mesh: RadialMesh,
    mass: f64,
    channels: usize,
    values: Vec<f64>,
}

impl MatrixEffectivePotential {
    /// `fill(r, out)` writes the row-major N×N matrix at `r` into `out`.
    pub fn from_fn(
        mesh: RadialMesh,
        channels: usize,
        mass: f64,
        mut fill: impl FnMut(f64, &mut [f64]),
    ) -> Result<Self, RadialError> {
        Self::try_from_fn(mesh, channels, mass, |r, out| {
            fill(r, out);
            Ok::<(), RadialError>(())
        })
    }

    pub fn try_from_fn<E: From<RadialError>>(
        mesh: RadialMesh,
        channels: usize,
        mass: f64,
        mut fill: impl FnMut(f64, &mut [f64]) -> Result<(), E>,
    ) -> Result<Self, E> {
        if channels == 0 {
            return Err(RadialError::Shape("need at least one channel".into()).into());
        }
        let nn = channels * channels;
        let grid = mesh.half_grid();
        let mut values = vec![0.0; grid.len() * nn];
        for (j, r) in grid.into_iter().enumerate() {
            let block = &mut values[j * nn..(j + 1) * nn];
            fill(r, block)?;
            if let Some(k) = block.iter().position(|v| !v.is_finite()) {
                return Err(RadialError::NonFinite { index: j * nn + k }.into());
            }
        }
        Ok(Self {
            mesh,
            mass,
            channels,
            values,
        })
    }

    pub fn mesh(&self) -> &RadialMesh {
        &self.mesh
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    /// Potential matrix at half-grid index `j`.
    pub fn half_grid_matrix(&self, j: usize) -> &[f64] {
        let nn = self.channels * self.channels;
        &self.values[j * nn..(j + 1) * nn]
    }

    /// Integrates `U'' = m (V(r) - E) U` column by column with the same
    /// fourth-order step as the scalar kernel.
    pub fn propagate(
        &self,
        energy: f64,
        u0: &[f64],
        du0: &[f64],
    ) -> Result<ChannelTrajectory, RadialError> {
        let n_ch = self.channels;
        let nn = n_ch * n_ch;
        if u0.len() != nn || du0.len() != nn {
            return Err(RadialError::Shape(format!(
                "initial data must be {n_ch}x{n_ch}, got {} and {} entries",
                u0.len(),
                du0.len()
            )));
        }
        let n = self.mesh.n_points();
        let mut data = Vec::with_capacity(n * nn);
        data.extend_from_slice(u0);
        let mut u = u0.to_vec();
        let mut p = du0.to_vec();
        let mut scratch = StepScratch::new(nn);
        let mut divergence = None;

        for i in 0..n - 1 {
            self.step(i, energy, &mut u, &mut p, &mut scratch);
            let runaway = u
                .iter()
                .zip(&p)
                .any(|(a, b)| !a.is_finite() || !b.is_finite() || a.abs() > DIVERGENCE_LIMIT);
            if runaway {
                divergence = Some(i + 1);
                break;
            }
            data.extend_from_slice(&u);
        }

        let filled = data.len() / nn;
        if filled < n {
            let last = data[(filled - 1) * nn..filled * nn].to_vec();
            for _ in filled..n {
                data.extend_from_slice(&last);
            }
        }
        Ok(ChannelTrajectory {
            mesh: self.mesh,
            channels: n_ch,
            data,
            divergence,
        })
    }

    /// Same integration as [`propagate`](Self::propagate), but after every
    /// step the stacked columns `[U; U']` are replaced by an orthonormal basis
    /// of their span, `[U; U'] = Q R` with `R` upper triangular and a positive
    /// diagonal. Each stored matrix is therefore the true `U` times a matrix of
    /// positive determinant, so `det` keeps its sign pattern while the columns
    /// stay well separated.
    pub fn propagate_orthonormal(
        &self,
        energy: f64,
        u0: &[f64],
        du0: &[f64],
    ) -> Result<OrthonormalTrajectory, RadialError> {
        let n_ch = self.channels;
        let nn = n_ch * n_ch;
        if u0.len() != nn || du0.len() != nn {
            return Err(RadialError::Shape(format!(
                "initial data must be {n_ch}x{n_ch}, got {} and {} entries",
                u0.len(),
                du0.len()
            )));
        }
        let n = self.mesh.n_points();
        let mut u = u0.to_vec();
        let mut p = du0.to_vec();
        let mut q = Vec::with_capacity(n * nn);
        let mut dq = Vec::with_capacity(n * nn);
        let mut r = Vec::with_capacity(n * nn);
        let mut r_block = vec![0.0; nn];
        if !orthonormalize(&mut u, &mut p, &mut r_block, n_ch) {
            return Err(RadialError::Degenerate);
        }
        q.extend_from_slice(&u);
        dq.extend_from_slice(&p);
        r.extend_from_slice(&r_block);

        let mut scratch = StepScratch::new(nn);
        let mut divergence = None;
        for i in 0..n - 1 {
            self.step(i, energy, &mut u, &mut p, &mut scratch);
            if !orthonormalize(&mut u, &mut p, &mut r_block, n_ch) {
                divergence = Some(i + 1);
                break;
            }
            q.extend_from_slice(&u);
            dq.extend_from_slice(&p);
            r.extend_from_slice(&r_block);
        }
        let filled = q.len() / nn;
        if filled < n {
            let last = q[(filled - 1) * nn..].to_vec();
            let last_d = dq[(filled - 1) * nn..].to_vec();
            let mut identity = vec![0.0; nn];
            (0..n_ch).for_each(|k| identity[k * n_ch + k] = 1.0);
            for _ in filled..n {
                q.extend_from_slice(&last);
                dq.extend_from_slice(&last_d);
                r.extend_from_slice(&identity);
            }
        }
        Ok(OrthonormalTrajectory {
            mesh: self.mesh,
            channels: n_ch,
            q,
            dq,
            r,
            divergence,
        })
    }

    // One RK4 step from mesh point i to i + 1, in place.
    fn step(&self, i: usize, energy: f64, u: &mut [f64], p: &mut [f64], s: &mut StepScratch) {
        let n_ch = self.channels;
        let h = self.mesh.step();
        let half = 0.5 * h;
        let sixth = h / 6.0;
        self.coefficient(2 * i, energy, &mut s.c0);
        self.coefficient(2 * i + 1, energy, &mut s.c1);
        self.coefficient(2 * i + 2, energy, &mut s.c2);

        s.k1y.copy_from_slice(p);
        matmul(&s.c0, u, &mut s.k1p, n_ch);

        axpy(p, half, &s.k1p, &mut s.k2y);
        axpy(u, half, &s.k1y, &mut s.tmp);
        matmul(&s.c1, &s.tmp, &mut s.k2p, n_ch);

        axpy(p, half, &s.k2p, &mut s.k3y);
        axpy(u, half, &s.k2y, &mut s.tmp);
        matmul(&s.c1, &s.tmp, &mut s.k3p, n_ch);

        axpy(p, h, &s.k3p, &mut s.k4y);
        axpy(u, h, &s.k3y, &mut s.tmp);
        matmul(&s.c2, &s.tmp, &mut s.k4p, n_ch);

        for idx in 0..u.len() {
            u[idx] += sixth * (s.k1y[idx] + 2.0 * s.k2y[idx] + 2.0 * s.k3y[idx] + s.k4y[idx]);
            p[idx] += sixth * (s.k1p[idx] + 2.0 * s.k2p[idx] + 2.0 * s.k3p[idx] + s.k4p[idx]);
        }
    }

    // m (V - E) at half-grid index j
    fn coefficient(&self, j: usize, energy: f64, out: &mut [f64]) {
        let n_ch = self.channels;
        let v = self.half_grid_matrix(j);
        let m = self.mass;
        for row in 0..n_ch {
            for col in 0..n_ch {
                let idx = row * n_ch + col;
                out[idx] = if row == col {
                    m * (v[idx] - energy)
                } else {
                    m * v[idx]
                };
            }
        }
    }
}

struct StepScratch {
    c0: Vec<f64>,
    c1: Vec<f64>,
    c2: Vec<f64>,
    k1y: Vec<f64>,
    k1p: Vec<f64>,
    k2y: Vec<f64>,
    k2p: Vec<f64>,
    k3y: Vec<f64>,
    k3p: Vec<f64>,
    k4y: Vec<f64>,
    k4p: Vec<f64>,
    tmp: Vec<f64>,
}

impl StepScratch {
    fn new(nn: usize) -> Self {
        let z = || vec![0.0; nn];
        Self {
            c0: z(),
            c1: z(),
            c2: z(),
            k1y: z(),
            k1p: z(),
            k2y: z(),
            k2p: z(),
            k3y: z(),
            k3p: z(),
            k4y: z(),
            k4p: z(),
            tmp: z(),
        }
    }
}

// out = a · b for row-major n×n matrices
fn matmul(a: &[f64], b: &[f64], out: &mut [f64], n: usize) {
    for row in 0..n {
        for col in 0..n {
            let mut acc = a[row * n] * b[col];
            for k in 1..n {
                acc += a[row * n + k] * b[k * n + col];
            }
            out[row * n + col] = acc;
        }
    }
}

// out = x + s·y
fn axpy(x: &[f64], s: f64, y: &[f64], out: &mut [f64]) {
    for ((o, a), b) in out.iter_mut().zip(x).zip(y) {
        *o = a + s * b;
    }
}

// Modified Gram-Schmidt on the columns of the stacked 2N×N matrix [u; p],
// done twice for stability. Writes R (row-major, upper triangular) and
// returns false if a column vanishes or a value is not finite.
fn orthonormalize(u: &mut [f64], p: &mut [f64], r: &mut [f64], n: usize) -> bool {
    r.iter_mut().for_each(|x| *x = 0.0);
    for j in 0..n {
        for _pass in 0..2 {
            for k in 0..j {
                let mut dot = 0.0;
                for row in 0..n {
                    dot += u[row * n + k] * u[row * n + j] + p[row * n + k] * p[row * n + j];
                }
                for row in 0..n {
                    u[row * n + j] -= dot * u[row * n + k];
                    p[row * n + j] -= dot * p[row * n + k];
                }
                r[k * n + j] += dot;
            }
        }
        let mut norm = 0.0;
        for row in 0..n {
            norm += u[row * n + j].powi(2) + p[row * n + j].powi(2);
        }
        let norm = norm.sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            return false;
        }
        for row in 0..n {
            u[row * n + j] /= norm;
            p[row * n + j] /= norm;
        }
        r[j * n + j] = norm;
    }
    true
}

/// Solution basis propagated with re-orthonormalization after every step.
///
/// At mesh point `i`, `q(i)` is the `U` block of the orthonormal basis and
/// `r(i)` the triangular factor produced at that point. A solution with
/// coefficients `d` in the basis at `i` has coefficients `R(i)⁻¹ d` in the
/// basis at `i - 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthonormalTrajectory {
    mesh: RadialMesh,
    channels: usize,
    q: Vec<f64>,
    dq: Vec<f64>,
    r: Vec<f64>,
    divergence: Option<usize>,
}

impl OrthonormalTrajectory {
    pub fn mesh(&self) -> &RadialMesh {
        &self.mesh
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn divergence_index(&self) -> Option<usize> {
        self.divergence
    }

    pub fn last_valid_index(&self) -> usize {
        match self.divergence {
            Some(i) => i - 1,
            None => self.mesh.n_points() - 1,
        }
    }

    /// Row-major `U` block of the basis at mesh point `i`.
    pub fn matrix(&self, i: usize) -> &[f64] {
        let nn = self.channels * self.channels;
        &self.q[i * nn..(i + 1) * nn]
    }

    /// Row-major `U'` block of the basis at mesh point `i`.
    pub fn derivative(&self, i: usize) -> &[f64] {
        let nn = self.channels * self.channels;
        &self.dq[i * nn..(i + 1) * nn]
    }

    /// Row-major triangular factor at mesh point `i`.
    pub fn factor(&self, i: usize) -> &[f64] {
        let nn = self.channels * self.channels;
        &self.r[i * nn..(i + 1) * nn]
    }

    /// `det U` up to a positive factor at every mesh point.
    pub fn det(&self) -> RadialFunction {
        let n = self.mesh.n_points();
        let values = (0..n).map(|i| determinant(self.matrix(i), self.channels)).collect();
        RadialFunction::from_parts(self.mesh, values, self.divergence)
    }

    /// Follows the solution with coefficients `d` in the basis at `i_start`
    /// back to the origin. Returns the channel components on `0..=i_start`
    /// (zero beyond) and the coefficients in the initial data's columns.
    pub fn trace_back(&self, i_start: usize, d: &[f64]) -> Result<(Vec<Vec<f64>>, Vec<f64>), RadialError> {
        let n_ch = self.channels;
        if d.len() != n_ch {
            return Err(RadialError::Shape(format!(
                "expected {n_ch} coefficients, got {}",
                d.len()
            )));
        }
        let n = self.mesh.n_points();
        let i_start = i_start.min(self.last_valid_index());
        let mut components = vec![vec![0.0; n]; n_ch];
        let mut coeff = d.to_vec();
        let mut i = i_start;
        loop {
            let q = self.matrix(i);
            for (row, comp) in components.iter_mut().enumerate() {
                comp[i] = (0..n_ch).map(|k| q[row * n_ch + k] * coeff[k]).sum();
            }
            // back-substitute R(i) x = coeff
            let r = self.factor(i);
            for row in (0..n_ch).rev() {
                let mut acc = coeff[row];
                for k in row + 1..n_ch {
                    acc -= r[row * n_ch + k] * coeff[k];
                }
                coeff[row] = acc / r[row * n_ch + row];
            }
            let size = coeff.iter().fold(0.0_f64, |a, x| a.max(x.abs()));
            if size > RESCALE {
                coeff.iter_mut().for_each(|x| *x /= RESCALE);
                components.iter_mut().for_each(|c| c[i..=i_start].iter_mut().for_each(|x| *x /= RESCALE));
            }
            if i == 0 {
                break;
            }
            i -= 1;
        }
        if components.iter().flatten().any(|v| !v.is_finite()) {
            return Err(RadialError::NonFinite { index: i_start });
        }
        Ok((components, coeff))
    }

    /// The solution that grows least between the origin and `i_start`.
    ///
    /// Each basis vector at `i_start` is traced back to the origin; the one
    /// arriving with the largest initial coefficients is kept, since tracing
    /// back amplifies the least-growing direction. Returns its components
    /// (arbitrary scale) and its unit coefficient vector in the initial
    /// columns, signed so the largest entry is positive.
    pub fn least_growing(&self, i_start: usize) -> Result<(Vec<Vec<f64>>, Vec<f64>), RadialError> {
        let n_ch = self.channels;
        let mut best: Option<(f64, Vec<Vec<f64>>, Vec<f64>)> = None;
        for k in 0..n_ch {
            let mut d = vec![0.0; n_ch];
            d[k] = 1.0;
            let (components, coeff) = self.trace_back(i_start, &d)?;
            let size = coeff.iter().map(|x| x * x).sum::<f64>().sqrt();
            if best.as_ref().is_none_or(|(b, _, _)| size > *b) {
                best = Some((size, components, coeff));
            }
        }
        let (size, mut components, mut coeff) = best.expect("at least one channel");
        if !(size > 0.0) {
            return Err(RadialError::Degenerate);
        }
        let pivot = coeff
            .iter()
            .copied()
            .fold(0.0_f64, |b, x| if x.abs() > b.abs() { x } else { b });
        let scale = pivot.signum() / size;
        coeff.iter_mut().for_each(|x| *x *= scale);
        components.iter_mut().flatten().for_each(|x| *x *= scale);
        Ok((components, coeff))
    }

    /// Mesh indices at which `U` becomes singular, repeated by the size of
    /// the null space, up to the last valid point.
    ///
    /// `W = (U' + iU)(U' - iU)⁻¹` is unitary and has eigenvalue 1 exactly
    /// where `U` is singular; its eigenphases always cross 0 upwards there.
    /// Each eigenphase is followed continuously and every completed turn is
    /// one singular point.
    pub fn conjugate_points(&self) -> Vec<usize> {
        let n_ch = self.channels;
        let last = self.last_valid_index();
        let mut lifted = unitary_phases(self.matrix(0), self.derivative(0), n_ch);
        let turns = |phases: &[f64]| -> i64 {
            phases.iter().map(|p| (p / std::f64::consts::TAU).floor() as i64).sum()
        };
        let mut count = turns(&lifted);
        let mut points = Vec::new();
        for i in 1..=last {
            let fresh = unitary_phases(self.matrix(i), self.derivative(i), n_ch);
            follow_phases(&mut lifted, &fresh);
            let now = turns(&lifted);
            for _ in count..now {
                points.push(i);
            }
            count = count.max(now);
        }
        points
    }
}

const RESCALE: f64 = 1e100;

// Eigenphases in (-π, π] of W = (P + iU)(P - iU)^H for an orthonormal
// Lagrangian frame [U; P].
fn unitary_phases(u: &[f64], p: &[f64], n: usize) -> Vec<f64> {
    use nalgebra::Complex;
    if n == 1 {
        return vec![2.0 * u[0].atan2(p[0])];
    }
    let eigenvalues: Vec<Complex<f64>> = if n == 2 {
        let a = |k: usize| Complex::new(p[k], u[k]);
        let (a00, a01, a10, a11) = (a(0), a(1), a(2), a(3));
        // W = A Aᵀ
        let w00 = a00 * a00 + a01 * a01;
        let w11 = a10 * a10 + a11 * a11;
        let w01 = a00 * a10 + a01 * a11;
        let tr = w00 + w11;
        let det = w00 * w11 - w01 * w01;
        let disc = (tr * tr - det * 4.0).sqrt();
        vec![(tr + disc) * 0.5, (tr - disc) * 0.5]
    } else {
        let a = DMatrix::from_fn(n, n, |i, j| Complex::new(p[i * n + j], u[i * n + j]));
        let w = &a * a.transpose();
        w.schur().eigenvalues().map(|v| v.iter().copied().collect()).unwrap_or_default()
    };
    eigenvalues.iter().map(|z| z.im.atan2(z.re)).collect()
}

// Advances each lifted phase to the nearest unused fresh phase (mod 2π).
fn follow_phases(lifted: &mut [f64], fresh: &[f64]) {
    use std::f64::consts::{PI, TAU};
    let wrap = |x: f64| x - TAU * ((x + PI) / TAU).floor();
    let mut used = vec![false; fresh.len()];
    for phase in lifted.iter_mut() {
        let mut best: Option<(usize, f64)> = None;
        for (k, &f) in fresh.iter().enumerate() {
            if used[k] {
                continue;
            }
            let delta = wrap(f - *phase);
            if best.is_none_or(|(_, b)| delta.abs() < b.abs()) {
                best = Some((k, delta));
            }
        }
        if let Some((k, delta)) = best {
            used[k] = true;
            *phase += delta;
        }
    }
}

/// Matrix of N independent vector solutions along the mesh.
/// Column `j` of the matrix at a mesh point is solution `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelTrajectory {
    mesh: RadialMesh,
    channels: usize,
    data: Vec<f64>,
    divergence: Option<usize>,
}

impl ChannelTrajectory {
    /// Builds a trajectory from row-major matrices, one per mesh point.
    pub fn from_matrices(
        mesh: RadialMesh,
        channels: usize,
        data: Vec<f64>,
    ) -> Result<Self, RadialError> {
        let expected = mesh.n_points() * channels * channels;
        if channels == 0 || data.len() != expected {
            return Err(RadialError::LengthMismatch {
                expected,
                got: data.len(),
            });
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(RadialError::NonFinite { index });
        }
        Ok(Self {
            mesh,
            channels,
            data,
            divergence: None,
        })
    }

    pub fn mesh(&self) -> &RadialMesh {
        &self.mesh
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn divergence_index(&self) -> Option<usize> {
        self.divergence
    }

    pub fn last_valid_index(&self) -> usize {
        match self.divergence {
            Some(d) => d.saturating_sub(1),
            None => self.mesh.n_points() - 1,
        }
    }

    /// Row-major matrix at mesh point `i`.
    pub fn matrix(&self, i: usize) -> &[f64] {
        let nn = self.channels * self.channels;
        &self.data[i * nn..(i + 1) * nn]
    }

    /// Entry `(row, col)` along the whole mesh.
    pub fn entry(&self, row: usize, col: usize) -> RadialFunction {
        let n = self.channels;
        let values = (0..self.mesh.n_points())
            .map(|i| self.matrix(i)[row * n + col])
            .collect();
        RadialFunction::from_parts(self.mesh, values, self.divergence)
    }

    /// Components `u_row(r) = Σ_col U_row,col(r) c_col` of the combination `c`.
    pub fn combine(&self, c: &[f64]) -> Result<Vec<RadialFunction>, RadialError> {
        let n = self.channels;
        if c.len() != n {
            return Err(RadialError::Shape(format!(
                "combination has {} entries for {n} channels",
                c.len()
            )));
        }
        Ok((0..n)
            .map(|row| {
                let values = (0..self.mesh.n_points())
                    .map(|i| {
                        let m = self.matrix(i);
                        (0..n).map(|col| m[row * n + col] * c[col]).sum()
                    })
                    .collect();
                RadialFunction::from_parts(self.mesh, values, self.divergence)
            })
            .collect())
    }
}

/// Propagates the coupled system for an N×N potential given by `fill`.
#[allow(clippy::too_many_arguments)]
pub fn propagate_coupled(
    fill: impl FnMut(f64, &mut [f64]),
    channels: usize,
    energy: f64,
    mass: f64,
    mesh: &RadialMesh,
    u0: &[f64],
    du0: &[f64],
) -> Result<ChannelTrajectory, RadialError> {
    MatrixEffectivePotential::from_fn(*mesh, channels, mass, fill)?.propagate(energy, u0, du0)
}

fn determinant(m: &[f64], n: usize) -> f64 {
    match n {
        1 => m[0],
        2 => m[0] * m[3] - m[1] * m[2],
        _ => {
            // column scaling keeps LU away from overflow; positive scales
            // leave the sign alone
            let mut scaled = DMatrix::from_row_slice(n, n, m);
            let mut factor = 1.0_f64;
            for mut col in scaled.column_iter_mut() {
                let s = col.amax();
                if s > 0.0 {
                    col /= s;
                    factor *= s;
                }
            }
            let d = scaled.lu().determinant() * factor;
            if d.is_nan() {
                0.0
            } else {
                d.clamp(f64::MIN, f64::MAX)
            }
        }
    }
}

/// `det U(r)` at every mesh point.
pub fn det_along(t: &ChannelTrajectory) -> RadialFunction {
    let values = (0..t.mesh.n_points())
        .map(|i| determinant(t.matrix(i), t.channels))
        .collect();
    RadialFunction::from_parts(t.mesh, values, t.divergence)
}
