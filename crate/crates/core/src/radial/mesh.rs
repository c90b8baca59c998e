use super::RadialError;

/// Smallest number of mesh points accepted by [`RadialMesh::new`].
pub const MIN_POINTS: usize = 16;

/// Uniform radial grid on `[r_min, r_max]`.
///
/// Radii are in inverse mass units. The first point sits strictly away from
/// the origin so that centrifugal and Coulombic terms stay finite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialMesh {
    r_min: f64,
    r_max: f64,
    n_points: usize,
}

impl RadialMesh {
    pub fn new(r_min: f64, r_max: f64, n_points: usize) -> Result<Self, RadialError> {
        if !(r_min.is_finite() && r_min > 0.0) {
            return Err(RadialError::InvalidMesh(format!(
                "r_min must be positive and finite, got {r_min}"
            )));
        }
        if !(r_max.is_finite() && r_max > r_min) {
            return Err(RadialError::InvalidMesh(format!(
                "r_max must exceed r_min ({r_min}), got {r_max}"
            )));
        }
        if n_points < MIN_POINTS {
            return Err(RadialError::InvalidMesh(format!(
                "need at least {MIN_POINTS} points, got {n_points}"
            )));
        }
        let mesh = Self {
            r_min,
            r_max,
            n_points,
        };
        if !(mesh.step() > 0.0) {
            return Err(RadialError::InvalidMesh("mesh step underflows".into()));
        }
        Ok(mesh)
    }

    pub fn r_min(&self) -> f64 {
        self.r_min
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn step(&self) -> f64 {
        (self.r_max - self.r_min) / (self.n_points - 1) as f64
    }

    /// Radius of mesh point `i`.
    #[inline]
    pub fn r(&self, i: usize) -> f64 {
        self.r_min + i as f64 * self.step()
    }

    pub fn radii(&self) -> Vec<f64> {
        (0..self.n_points).map(|i| self.r(i)).collect()
    }

    /// Number of points on the half-step grid used by the integrator.
    pub fn half_grid_len(&self) -> usize {
        2 * self.n_points - 1
    }

    /// Radii of the half-step grid: mesh points interleaved with midpoints.
    ///
    /// Even indices coincide bit-for-bit with [`RadialMesh::r`].
    pub fn half_grid(&self) -> Vec<f64> {
        let half = 0.5 * self.step();
        (0..self.half_grid_len())
            .map(|j| self.r_min + j as f64 * half)
            .collect()
    }

    /// Index of the mesh point closest to `r`, clamped to the mesh.
    pub fn nearest_index(&self, r: f64) -> usize {
        let x = ((r - self.r_min) / self.step()).round();
        if x <= 0.0 {
            0
        } else {
            (x as usize).min(self.n_points - 1)
        }
    }

    /// Same mesh with a different point count.
    pub fn with_points(&self, n_points: usize) -> Result<Self, RadialError> {
        Self::new(self.r_min, self.r_max, n_points)
    }

    pub fn with_r_max(&self, r_max: f64) -> Result<Self, RadialError> {
        Self::new(self.r_min, r_max, self.n_points)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_bounds() {
        assert!(RadialMesh::new(0.0, 1.0, 100).is_err());
        assert!(RadialMesh::new(-1.0, 1.0, 100).is_err());
        assert!(RadialMesh::new(2.0, 1.0, 100).is_err());
        assert!(RadialMesh::new(1.0, 1.0, 100).is_err());
        assert!(RadialMesh::new(1e-5, 1.0, 15).is_err());
        assert!(RadialMesh::new(1e-5, f64::INFINITY, 100).is_err());
    }

    #[test]
    fn endpoints_and_step() {
        let mesh = RadialMesh::new(0.5, 10.5, 101).unwrap();
        assert_eq!(mesh.step(), 0.1);
        assert_eq!(mesh.r(0), 0.5);
        assert!((mesh.r(100) - 10.5).abs() < 1e-12);
    }

    #[test]
    fn half_grid_even_entries_match_mesh() {
        let mesh = RadialMesh::new(1e-5, 42.0, 2001).unwrap();
        let half = mesh.half_grid();
        assert_eq!(half.len(), 4001);
        for i in 0..mesh.n_points() {
            assert_eq!(half[2 * i].to_bits(), mesh.r(i).to_bits());
        }
    }

    #[test]
    fn nearest_index_clamps() {
        let mesh = RadialMesh::new(1.0, 2.0, 101).unwrap();
        assert_eq!(mesh.nearest_index(-5.0), 0);
        assert_eq!(mesh.nearest_index(1.504), 50);
        assert_eq!(mesh.nearest_index(99.0), 100);
    }
}
