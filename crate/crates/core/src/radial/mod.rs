//! Fixed-step radial kernel: mesh, propagation of the scalar and matrix
//! second-order equations, node counting, tail truncation and quadrature.

mod channels;
mod integrate;
mod mesh;
mod nodes;
mod quadrature;

pub use channels::{det_along, propagate_coupled, ChannelTrajectory, MatrixEffectivePotential, OrthonormalTrajectory};
pub use integrate::{propagate_radial, EffectivePotential};
pub use mesh::{RadialMesh, MIN_POINTS};
pub use nodes::{count_nodes, find_truncation_index, find_truncation_index_from, last_sign_change};
pub use quadrature::{integrate_product, integrate_samples, normalize, simpson};

use thiserror::Error;

/// Magnitude above which a propagated value is treated as divergent.
pub const DIVERGENCE_LIMIT: f64 = 1e150;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RadialError {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("expected {expected} samples, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("non-finite sample at index {index}")]
    NonFinite { index: usize },
    #[error("functions live on different meshes")]
    MeshMismatch,
    #[error("function is identically zero")]
    Degenerate,
    #[error("norm vanishes up to index {0}")]
    ZeroNorm(usize),
    #[error("matrix shape mismatch: {0}")]
    Shape(String),
}

/// Real function sampled on a [`RadialMesh`].
///
/// Functions produced by propagation carry the index at which the integration
/// ran away (if any). Samples from that index on repeat the last finite value.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialFunction {
    mesh: RadialMesh,
    values: Vec<f64>,
    divergence: Option<usize>,
}

impl RadialFunction {
    pub fn new(mesh: RadialMesh, values: Vec<f64>) -> Result<Self, RadialError> {
        if values.len() != mesh.n_points() {
            return Err(RadialError::LengthMismatch {
                expected: mesh.n_points(),
                got: values.len(),
            });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(RadialError::NonFinite { index });
        }
        Ok(Self {
            mesh,
            values,
            divergence: None,
        })
    }

    /// Samples `f` at every mesh point.
    pub fn from_fn(mesh: RadialMesh, f: impl Fn(f64) -> f64) -> Result<Self, RadialError> {
        Self::new(mesh, (0..mesh.n_points()).map(|i| f(mesh.r(i))).collect())
    }

    pub(crate) fn from_parts(mesh: RadialMesh, values: Vec<f64>, divergence: Option<usize>) -> Self {
        debug_assert_eq!(values.len(), mesh.n_points());
        Self {
            mesh,
            values,
            divergence,
        }
    }

    pub fn mesh(&self) -> &RadialMesh {
        &self.mesh
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// First index at which propagation diverged, if it did.
    pub fn divergence_index(&self) -> Option<usize> {
        self.divergence
    }

    /// Last index holding a genuinely propagated value.
    pub fn last_valid_index(&self) -> usize {
        match self.divergence {
            Some(d) => d.saturating_sub(1),
            None => self.values.len() - 1,
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            mesh: self.mesh,
            values: self.values.iter().map(|v| v * factor).collect(),
            divergence: self.divergence,
        }
    }
}
