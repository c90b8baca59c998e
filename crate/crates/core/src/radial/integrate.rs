use super::{RadialError, RadialFunction, RadialMesh, DIVERGENCE_LIMIT};

/// Effective potential `l(l+1)/(m r²) + V(r)` sampled on the half-step grid
/// of a mesh, ready for repeated propagation at different energies.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectivePotential {
    mesh: RadialMesh,
    mass: f64,
    values: Vec<f64>,
}

fn centrifugal(l: u32, mass: f64, r: f64) -> f64 {
    let ll = f64::from(l) * f64::from(l + 1);
    ll / (mass * r * r)
}

impl EffectivePotential {
    pub fn from_fn(mesh: RadialMesh, l: u32, mass: f64, v: impl Fn(f64) -> f64) -> Self {
        let values = mesh
            .half_grid()
            .into_iter()
            .map(|r| centrifugal(l, mass, r) + v(r))
            .collect();
        Self { mesh, mass, values }
    }

    /// Builds from `V` already sampled on [`RadialMesh::half_grid`].
    pub fn from_half_grid(
        mesh: RadialMesh,
        l: u32,
        mass: f64,
        v_half: &[f64],
    ) -> Result<Self, RadialError> {
        if v_half.len() != mesh.half_grid_len() {
            return Err(RadialError::LengthMismatch {
                expected: mesh.half_grid_len(),
                got: v_half.len(),
            });
        }
        if let Some(index) = v_half.iter().position(|v| !v.is_finite()) {
            return Err(RadialError::NonFinite { index });
        }
        let values = mesh
            .half_grid()
            .into_iter()
            .zip(v_half)
            .map(|(r, v)| centrifugal(l, mass, r) + v)
            .collect();
        Ok(Self { mesh, mass, values })
    }

    /// Uses the samples as the full effective potential, centrifugal term
    /// included.
    pub fn from_effective_half_grid(
        mesh: RadialMesh,
        mass: f64,
        values: Vec<f64>,
    ) -> Result<Self, RadialError> {
        if values.len() != mesh.half_grid_len() {
            return Err(RadialError::LengthMismatch {
                expected: mesh.half_grid_len(),
                got: values.len(),
            });
        }
        Ok(Self { mesh, mass, values })
    }

    pub fn mesh(&self) -> &RadialMesh {
        &self.mesh
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn half_grid_values(&self) -> &[f64] {
        &self.values
    }

    /// Smallest sampled value of the effective potential.
    pub fn minimum(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Integrates `y'' = m (V_eff(r) - E) y` outward from `r_min` with the
    /// classical fourth-order Runge-Kutta step applied to `(y, y')`.
    pub fn propagate(&self, energy: f64, y0: f64, dy0: f64) -> RadialFunction {
        let n = self.mesh.n_points();
        let h = self.mesh.step();
        let half = 0.5 * h;
        let sixth = h / 6.0;
        let m = self.mass;
        let v = &self.values;

        let mut out = Vec::with_capacity(n);
        out.push(y0);
        let mut y = y0;
        let mut p = dy0;
        let mut divergence = None;

        for i in 0..n - 1 {
            let c0 = m * (v[2 * i] - energy);
            let c1 = m * (v[2 * i + 1] - energy);
            let c2 = m * (v[2 * i + 2] - energy);

            let k1y = p;
            let k1p = c0 * y;
            let k2y = p + half * k1p;
            let k2p = c1 * (y + half * k1y);
            let k3y = p + half * k2p;
            let k3p = c1 * (y + half * k2y);
            let k4y = p + h * k3p;
            let k4p = c2 * (y + h * k3y);

            y += sixth * (k1y + 2.0 * k2y + 2.0 * k3y + k4y);
            p += sixth * (k1p + 2.0 * k2p + 2.0 * k3p + k4p);

            if !y.is_finite() || !p.is_finite() || y.abs() > DIVERGENCE_LIMIT {
                divergence = Some(i + 1);
                break;
            }
            out.push(y);
        }

        if let Some(last) = out.last().copied() {
            out.resize(n, last);
        }
        RadialFunction::from_parts(self.mesh, out, divergence)
    }
}

/// Propagates the reduced radial equation
/// `y'' = [l(l+1)/r² + m (V(r) - E)] y` from `y(r_min) = y0`, `y'(r_min) = dy0`.
pub fn propagate_radial(
    v: impl Fn(f64) -> f64,
    energy: f64,
    l: u32,
    mass: f64,
    mesh: &RadialMesh,
    y0: f64,
    dy0: f64,
) -> RadialFunction {
    EffectivePotential::from_fn(*mesh, l, mass, v).propagate(energy, y0, dy0)
}
