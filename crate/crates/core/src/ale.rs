//! The vertical-stretch ALE map `A_η(z̃, r̃) = (z̃, (R + η(z̃)) r̃)` and the
//! transformed differential operators it induces on the reference domain.
//!
//! Boundary data are sampled once per step at the fluid quadrature abscissae
//! in `z`; every fluid cell in a column shares them.

use crate::error::StepError;
use crate::fluid::FluidMesh;
use crate::quadrature::{gauss_legendre, FLUID_POINTS_1D};
use crate::shell::ShellMesh;

/// Geometry at one reference point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlePoint {
    /// `R + η`
    pub jacobian: f64,
    pub deta_dz: f64,
    /// reference vertical coordinate `r̃ ∈ [0, 1]`
    pub r: f64,
}

impl AlePoint {
    /// `∇A_η = [[1, 0], [r̃ η', R + η]]`
    pub fn deformation_gradient(&self) -> [[f64; 2]; 2] {
        [[1.0, 0.0], [self.r * self.deta_dz, self.jacobian]]
    }

    /// Applies `(∇A_η)^{-1}` to a reference gradient `(∂_z̃, ∂_r̃)`.
    #[inline]
    pub fn transform(&self, grad: [f64; 2]) -> [f64; 2] {
        let inv = 1.0 / self.jacobian;
        [grad[0] - self.r * self.deta_dz * inv * grad[1], grad[1] * inv]
    }
}

/// `∇^η u` for a vector field whose reference gradient has rows
/// `(∂_z̃ u_c, ∂_r̃ u_c)`.
pub fn transformed_gradient(p: &AlePoint, reference: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
    [p.transform(reference[0]), p.transform(reference[1])]
}

pub fn transformed_divergence(p: &AlePoint, reference: [[f64; 2]; 2]) -> f64 {
    let g = transformed_gradient(p, reference);
    g[0][0] + g[1][1]
}

pub fn symmetrized_transformed_gradient(p: &AlePoint, reference: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let g = transformed_gradient(p, reference);
    let off = 0.5 * (g[0][1] + g[1][0]);
    [[g[0][0], off], [off, g[1][1]]]
}

/// Boundary data frozen for one fluid step, sampled per fluid column at the
/// `z` quadrature abscissae (index `column * 3 + q`).
#[derive(Debug, Clone, PartialEq)]
pub struct AleSnapshot {
    pub radius: f64,
    pub eta_at_quad: Vec<f64>,
    pub deta_dz_at_quad: Vec<f64>,
    pub jacobian_at_quad: Vec<f64>,
    pub min_radius: f64,
    /// `z` where `min_radius` is attained
    pub min_location: f64,
}

impl AleSnapshot {
    /// The undeformed geometry `η ≡ 0`.
    pub fn flat(fluid: &FluidMesh, radius: f64) -> Self {
        let n = fluid.nz() * FLUID_POINTS_1D;
        Self {
            radius,
            eta_at_quad: vec![0.0; n],
            deta_dz_at_quad: vec![0.0; n],
            jacobian_at_quad: vec![radius; n],
            min_radius: radius,
            min_location: 0.0,
        }
    }

    #[inline]
    pub fn point(&self, column: usize, q: usize, r: f64) -> AlePoint {
        let k = column * FLUID_POINTS_1D + q;
        AlePoint {
            jacobian: self.jacobian_at_quad[k],
            deta_dz: self.deta_dz_at_quad[k],
            r,
        }
    }

    pub fn len(&self) -> usize {
        self.eta_at_quad.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eta_at_quad.is_empty()
    }
}

/// Values and `z`-derivatives of a free-DOF shell field at the fluid `z`
/// quadrature abscissae, column-major as in [`AleSnapshot`].
pub fn sample_shell_field(shell: &ShellMesh, fluid: &FluidMesh, free: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let rule = gauss_legendre(FLUID_POINTS_1D);
    let n = fluid.nz() * FLUID_POINTS_1D;
    let mut values = Vec::with_capacity(n);
    let mut slopes = Vec::with_capacity(n);
    for column in 0..fluid.nz() {
        for &xi in &rule.points {
            let (v, d) = shell.evaluate_free(free, column, xi);
            values.push(v);
            slopes.push(d);
        }
    }
    (values, slopes)
}

/// Builds the snapshot for displacement `eta` (free DOFs). Fails with
/// `WallContact` when `min(R + η) ≤ contact_threshold`, searched over the
/// quadrature abscissae, shell nodes and element midpoints.
pub fn build_snapshot(
    shell: &ShellMesh,
    fluid: &FluidMesh,
    eta: &[f64],
    radius: f64,
    contact_threshold: f64,
) -> Result<AleSnapshot, StepError> {
    let (eta_at_quad, deta_dz_at_quad) = sample_shell_field(shell, fluid, eta);
    let jacobian_at_quad: Vec<f64> = eta_at_quad.iter().map(|e| radius + e).collect();
    let profile = crate::shell::ShellProfile::from_free(shell, eta);
    let (min_eta, min_location) = shell.min_value_at(&profile);
    let min_radius = radius + min_eta;
    if !min_radius.is_finite() || jacobian_at_quad.iter().any(|j| !j.is_finite()) {
        return Err(StepError::NonFinite("shell displacement"));
    }
    if min_radius <= contact_threshold {
        return Err(StepError::WallContact {
            z: min_location,
            min_radius,
        });
    }
    Ok(AleSnapshot {
        radius,
        eta_at_quad,
        deta_dz_at_quad,
        jacobian_at_quad,
        min_radius,
        min_location,
    })
}

/// The domain velocity `w = v^{n+1/2} r̃ e_r`, with `v^{n+1/2}` sampled like
/// the snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainVelocityField {
    pub v_half_at_quad: Vec<f64>,
}

impl DomainVelocityField {
    pub fn zero(fluid: &FluidMesh) -> Self {
        Self {
            v_half_at_quad: vec![0.0; fluid.nz() * FLUID_POINTS_1D],
        }
    }

    pub fn from_shell(shell: &ShellMesh, fluid: &FluidMesh, v_half: &[f64]) -> Self {
        Self {
            v_half_at_quad: sample_shell_field(shell, fluid, v_half).0,
        }
    }

    #[inline]
    pub fn velocity(&self, column: usize, q: usize, r: f64) -> [f64; 2] {
        [0.0, self.v_half_at_quad[column * FLUID_POINTS_1D + q] * r]
    }
}
