//! Clamped Koiter shell on `(0, L)` discretized with cubic Hermite elements.
//!
//! Free degrees of freedom are the (value, slope) pairs at interior nodes,
//! ordered node by node; the clamped end values and slopes are eliminated.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::linalg::{Factorization, SolverError, SparseMatrix, TripletBuilder};
use crate::materials::ShellCoefficients;
use crate::quadrature::{gauss_legendre, SHELL_POINTS};

#[derive(Debug, Clone, PartialEq)]
pub struct ShellMesh {
    nodes: Vec<f64>,
}

/// Cubic Hermite shape functions on one element and their first two
/// derivatives in physical `z`. Order: left value, left slope, right value,
/// right slope.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HermiteValues {
    pub value: [f64; 4],
    pub d1: [f64; 4],
    pub d2: [f64; 4],
}

pub fn hermite_basis(xi: f64, ell: f64) -> HermiteValues {
    let x2 = xi * xi;
    let x3 = x2 * xi;
    HermiteValues {
        value: [
            1.0 - 3.0 * x2 + 2.0 * x3,
            ell * (xi - 2.0 * x2 + x3),
            3.0 * x2 - 2.0 * x3,
            ell * (x3 - x2),
        ],
        d1: [
            (-6.0 * xi + 6.0 * x2) / ell,
            1.0 - 4.0 * xi + 3.0 * x2,
            (6.0 * xi - 6.0 * x2) / ell,
            3.0 * x2 - 2.0 * xi,
        ],
        d2: [
            (-6.0 + 12.0 * xi) / (ell * ell),
            (-4.0 + 6.0 * xi) / ell,
            (6.0 - 12.0 * xi) / (ell * ell),
            (6.0 * xi - 2.0) / ell,
        ],
    }
}

impl ShellMesh {
    pub fn uniform(length: f64, elements: usize) -> Self {
        assert!(elements >= 2, "a clamped shell needs at least two elements");
        assert!(length > 0.0);
        let nodes = (0..=elements)
            .map(|i| length * i as f64 / elements as f64)
            .collect();
        Self { nodes }
    }

    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self, ConfigError> {
        if nodes.len() < 3 {
            return Err(ConfigError::Misaligned(
                "shell mesh needs at least two elements".into(),
            ));
        }
        if nodes[0] != 0.0 {
            return Err(ConfigError::Misaligned("shell mesh must start at z = 0".into()));
        }
        if nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(ConfigError::Misaligned(
                "shell nodes must be strictly increasing".into(),
            ));
        }
        Ok(Self { nodes })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn element_count(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn length(&self) -> f64 {
        *self.nodes.last().unwrap()
    }

    pub fn element_bounds(&self, e: usize) -> (f64, f64) {
        (self.nodes[e], self.nodes[e + 1])
    }

    pub fn element_length(&self, e: usize) -> f64 {
        self.nodes[e + 1] - self.nodes[e]
    }

    pub fn free_dof_count(&self) -> usize {
        2 * (self.nodes.len() - 2)
    }

    /// Free index of the value (`slope = false`) or slope DOF at `node`.
    pub fn free_dof(&self, node: usize, slope: bool) -> Option<usize> {
        if node == 0 || node + 1 >= self.nodes.len() {
            None
        } else {
            Some(2 * (node - 1) + usize::from(slope))
        }
    }

    pub fn element_dofs(&self, e: usize) -> [Option<usize>; 4] {
        [
            self.free_dof(e, false),
            self.free_dof(e, true),
            self.free_dof(e + 1, false),
            self.free_dof(e + 1, true),
        ]
    }

    /// Element containing `z` and the local coordinate in `[0, 1]`.
    pub fn locate(&self, z: f64) -> (usize, f64) {
        let n = self.element_count();
        let e = match self.nodes.binary_search_by(|x| x.partial_cmp(&z).unwrap()) {
            Ok(i) => i.min(n - 1),
            Err(i) => i.saturating_sub(1).min(n - 1),
        };
        let (z0, z1) = self.element_bounds(e);
        (e, ((z - z0) / (z1 - z0)).clamp(0.0, 1.0))
    }

    /// Value and slope of a full nodal profile at `z`.
    pub fn evaluate(&self, profile: &ShellProfile, z: f64) -> (f64, f64) {
        let (e, xi) = self.locate(z);
        self.evaluate_in_element(profile, e, xi)
    }

    pub fn evaluate_in_element(&self, profile: &ShellProfile, e: usize, xi: f64) -> (f64, f64) {
        let b = hermite_basis(xi, self.element_length(e));
        let c = [
            profile.values[e],
            profile.slopes[e],
            profile.values[e + 1],
            profile.slopes[e + 1],
        ];
        (
            (0..4).map(|k| b.value[k] * c[k]).sum(),
            (0..4).map(|k| b.d1[k] * c[k]).sum(),
        )
    }

    /// Value and slope of a free-DOF field at local coordinate `xi` of element `e`.
    pub fn evaluate_free(&self, free: &[f64], e: usize, xi: f64) -> (f64, f64) {
        let b = hermite_basis(xi, self.element_length(e));
        let mut val = 0.0;
        let mut der = 0.0;
        for (k, dof) in self.element_dofs(e).iter().enumerate() {
            if let Some(d) = dof {
                val += b.value[k] * free[*d];
                der += b.d1[k] * free[*d];
            }
        }
        (val, der)
    }

    /// Local coordinates sampled for minimum searches: nodes, midpoints and
    /// the element quadrature points.
    pub fn sample_coordinates() -> Vec<f64> {
        let mut xs = vec![0.0, 0.5, 1.0];
        xs.extend(gauss_legendre(SHELL_POINTS).points);
        xs.extend(gauss_legendre(3).points);
        xs
    }

    /// Minimum of a profile over the sampled coordinates, with its location.
    pub fn min_value_at(&self, profile: &ShellProfile) -> (f64, f64) {
        let xs = Self::sample_coordinates();
        let mut best = (f64::INFINITY, 0.0);
        for e in 0..self.element_count() {
            let (z0, z1) = self.element_bounds(e);
            for &xi in &xs {
                let v = self.evaluate_in_element(profile, e, xi).0;
                if v < best.0 {
                    best = (v, z0 + xi * (z1 - z0));
                }
            }
        }
        best
    }

    pub fn min_value(&self, profile: &ShellProfile) -> f64 {
        self.min_value_at(profile).0
    }
}

/// Nodal values and slopes at every node, including the clamped ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShellProfile {
    pub values: Vec<f64>,
    pub slopes: Vec<f64>,
}

impl ShellProfile {
    pub fn zeros(nodes: usize) -> Self {
        Self {
            values: vec![0.0; nodes],
            slopes: vec![0.0; nodes],
        }
    }

    /// Hermite interpolant of a function given with its derivative.
    pub fn interpolate(mesh: &ShellMesh, f: impl Fn(f64) -> f64, df: impl Fn(f64) -> f64) -> Self {
        Self {
            values: mesh.nodes().iter().map(|&z| f(z)).collect(),
            slopes: mesh.nodes().iter().map(|&z| df(z)).collect(),
        }
    }

    pub fn from_free(mesh: &ShellMesh, free: &[f64]) -> Self {
        let mut p = Self::zeros(mesh.node_count());
        for node in 1..mesh.node_count() - 1 {
            p.values[node] = free[mesh.free_dof(node, false).unwrap()];
            p.slopes[node] = free[mesh.free_dof(node, true).unwrap()];
        }
        p
    }

    /// Drops the end values and slopes.
    pub fn to_free(&self, mesh: &ShellMesh) -> Vec<f64> {
        let mut free = vec![0.0; mesh.free_dof_count()];
        for node in 1..mesh.node_count() - 1 {
            free[mesh.free_dof(node, false).unwrap()] = self.values[node];
            free[mesh.free_dof(node, true).unwrap()] = self.slopes[node];
        }
        free
    }

    pub fn max_abs(&self) -> f64 {
        self.values
            .iter()
            .chain(&self.slopes)
            .fold(0.0f64, |m, x| m.max(x.abs()))
    }
}

/// Shell displacement and velocity on the free DOFs, plus the half-step
/// velocity `v*` produced by the last structure step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShellState {
    pub eta: Vec<f64>,
    pub v: Vec<f64>,
    pub v_star: Vec<f64>,
}

impl ShellState {
    pub fn zeros(mesh: &ShellMesh) -> Self {
        let n = mesh.free_dof_count();
        Self {
            eta: vec![0.0; n],
            v: vec![0.0; n],
            v_star: vec![0.0; n],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.eta
            .iter()
            .chain(&self.v)
            .chain(&self.v_star)
            .all(|x| x.is_finite())
    }
}

/// `∫ (k0 η ψ + k1 η' ψ' + k2 η'' ψ'')` over the clamped space.
pub fn assemble_form(mesh: &ShellMesh, k0: f64, k1: f64, k2: f64) -> SparseMatrix {
    let rule = gauss_legendre(SHELL_POINTS);
    let locals: Vec<[[f64; 4]; 4]> = (0..mesh.element_count())
        .into_par_iter()
        .map(|e| {
            let ell = mesh.element_length(e);
            let mut k = [[0.0; 4]; 4];
            for (xi, w) in rule.iter() {
                let b = hermite_basis(xi, ell);
                let jw = w * ell;
                for a in 0..4 {
                    for c in 0..4 {
                        k[a][c] += jw
                            * (k0 * b.value[a] * b.value[c]
                                + k1 * b.d1[a] * b.d1[c]
                                + k2 * b.d2[a] * b.d2[c]);
                    }
                }
            }
            k
        })
        .collect();
    let n = mesh.free_dof_count();
    let mut builder = TripletBuilder::with_capacity(n, n, 16 * mesh.element_count());
    for (e, k) in locals.iter().enumerate() {
        let dofs = mesh.element_dofs(e);
        for a in 0..4 {
            let Some(i) = dofs[a] else { continue };
            for c in 0..4 {
                if let Some(j) = dofs[c] {
                    builder.push(i, j, k[a][c]);
                }
            }
        }
    }
    builder.build().with_symmetry(true)
}

/// L²(0, L) Gram matrix of the Hermite basis.
pub fn assemble_mass(mesh: &ShellMesh) -> SparseMatrix {
    assemble_form(mesh, 1.0, 0.0, 0.0)
}

pub fn assemble_as(mesh: &ShellMesh, c: &ShellCoefficients) -> SparseMatrix {
    assemble_form(mesh, c.c0, c.c1, c.c2)
}

pub fn assemble_as_prime(mesh: &ShellMesh, c: &ShellCoefficients) -> SparseMatrix {
    assemble_form(mesh, c.d0, c.d1, c.d2)
}

/// The shell matrices a run needs, including the separate seminorm Gram
/// matrices used for per-coefficient energy bookkeeping.
#[derive(Debug, Clone)]
pub struct ShellOperators {
    pub mass: SparseMatrix,
    /// `∫ η' ψ'`
    pub g1: SparseMatrix,
    /// `∫ η'' ψ''`
    pub g2: SparseMatrix,
    pub a_s: SparseMatrix,
    pub a_s_prime: SparseMatrix,
    pub coefficients: ShellCoefficients,
}

impl ShellOperators {
    pub fn new(mesh: &ShellMesh, coefficients: ShellCoefficients) -> Self {
        let mass = assemble_mass(mesh);
        let g1 = assemble_form(mesh, 0.0, 1.0, 0.0);
        let g2 = assemble_form(mesh, 0.0, 0.0, 1.0);
        let c = &coefficients;
        let a_s = SparseMatrix::linear_combination(&[(c.c0, &mass), (c.c1, &g1), (c.c2, &g2)]);
        let a_s_prime =
            SparseMatrix::linear_combination(&[(c.d0, &mass), (c.d1, &g1), (c.d2, &g2)]);
        Self {
            mass,
            g1,
            g2,
            a_s,
            a_s_prime,
            coefficients,
        }
    }
}

/// Factorized structure step for a fixed `Δt`.
pub struct StructureSolver {
    matrix: SparseMatrix,
    factor: Factorization,
    mass: SparseMatrix,
    rho_s_h: f64,
    dt: f64,
    tol: f64,
}

impl StructureSolver {
    pub fn new(
        mass: &SparseMatrix,
        a_s: &SparseMatrix,
        rho_s_h: f64,
        dt: f64,
        tol: f64,
    ) -> Result<Self, SolverError> {
        let matrix = SparseMatrix::linear_combination(&[(rho_s_h, mass), (dt * dt, a_s)]);
        let factor = Factorization::new(&matrix)?;
        Ok(Self {
            matrix,
            factor,
            mass: mass.clone(),
            rho_s_h,
            dt,
            tol,
        })
    }

    /// Returns `(η^{n+1/2}, v^{n+1/2})`.
    pub fn step(&self, eta: &[f64], v: &[f64]) -> Result<(Vec<f64>, Vec<f64>), SolverError> {
        let predicted: Vec<f64> = eta.iter().zip(v).map(|(e, v)| e + self.dt * v).collect();
        let rhs = self.mass.mul_vec(&predicted);
        let rhs: Vec<f64> = rhs.iter().map(|x| self.rho_s_h * x).collect();
        let eta_half = if rhs.iter().all(|&x| x == 0.0) {
            vec![0.0; rhs.len()]
        } else {
            self.factor.solve_checked(&self.matrix, &rhs, self.tol)?
        };
        let v_half = eta_half
            .iter()
            .zip(eta)
            .map(|(new, old)| (new - old) / self.dt)
            .collect();
        Ok((eta_half, v_half))
    }
}

/// The structure elastodynamics sub-step. The fluid is untouched; the
/// returned state carries `v^{n+1/2}` both as `v` and as `v_star`.
pub fn structure_step(
    state: &ShellState,
    dt: f64,
    mass: &SparseMatrix,
    a_s: &SparseMatrix,
    rho_s_h: f64,
) -> Result<ShellState, SolverError> {
    let solver = StructureSolver::new(mass, a_s, rho_s_h, dt, 1e-12)?;
    let (eta, v) = solver.step(&state.eta, &state.v)?;
    Ok(ShellState {
        eta,
        v_star: v.clone(),
        v,
    })
}

/// Terms of the structure-step energy equality.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StructureEnergy {
    pub energy_before: f64,
    pub energy_after: f64,
    /// `½ ρ_s h ‖v^{n+1/2} − v^n‖²`
    pub velocity_jump: f64,
    /// `½ ‖η^{n+1/2} − η^n‖²_{a_S}`
    pub displacement_jump: f64,
    /// `|after + jumps − before|`
    pub residual: f64,
}

pub fn shell_energy(eta: &[f64], v: &[f64], mass: &SparseMatrix, a_s: &SparseMatrix, rho_s_h: f64) -> f64 {
    0.5 * (rho_s_h * mass.quadratic_form(v) + a_s.quadratic_form(eta))
}

pub fn structure_step_energy_residual(
    before: &ShellState,
    after: &ShellState,
    mass: &SparseMatrix,
    a_s: &SparseMatrix,
    rho_s_h: f64,
) -> StructureEnergy {
    let dv: Vec<f64> = after.v.iter().zip(&before.v).map(|(a, b)| a - b).collect();
    let de: Vec<f64> = after.eta.iter().zip(&before.eta).map(|(a, b)| a - b).collect();
    let energy_before = shell_energy(&before.eta, &before.v, mass, a_s, rho_s_h);
    let energy_after = shell_energy(&after.eta, &after.v, mass, a_s, rho_s_h);
    let velocity_jump = 0.5 * rho_s_h * mass.quadratic_form(&dv);
    let displacement_jump = 0.5 * a_s.quadratic_form(&de);
    StructureEnergy {
        energy_before,
        energy_after,
        velocity_jump,
        displacement_jump,
        residual: (energy_after + velocity_jump + displacement_jump - energy_before).abs(),
    }
}
