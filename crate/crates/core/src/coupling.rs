//! The monolithic fluid sub-step: fluid velocity and pressure together with
//! the shell velocity, coupled through the kinematic trace `u|_Γ = v e_r`.
//!
//! Essential conditions are eliminated. Every full velocity DOF maps to a
//! (possibly empty) combination of reduced unknowns `y = [free fluid DOFs |
//! shell velocity DOFs]`; the radial DOFs on the top edge map to the shell
//! through the Hermite evaluation operator `T`.

use serde::{Deserialize, Serialize};

use crate::ale::{AleSnapshot, DomainVelocityField};
use crate::error::{ConfigError, StepError};
use crate::fluid::{
    assemble_advection, assemble_divergence, assemble_pressure_forcing, assemble_robin_mass,
    assemble_viscous, assemble_weighted_mass, FluidMesh, FluidState,
};
use crate::linalg::{self, Factorization, SolverOptions, SparseMatrix, TripletBuilder};
use crate::shell::{hermite_basis, ShellMesh, ShellOperators};

/// Evaluation of shell Hermite DOFs at the top-edge velocity nodes (vertices
/// and edge midpoints).
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingOperator {
    rows: Vec<Vec<(usize, f64)>>,
    shell_dofs: usize,
}

impl CouplingOperator {
    pub fn rows(&self) -> &[Vec<(usize, f64)>] {
        &self.rows
    }

    pub fn shell_dofs(&self) -> usize {
        self.shell_dofs
    }

    /// Trace values at every top-edge node.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|row| row.iter().map(|&(d, c)| c * v[d]).sum())
            .collect()
    }

    pub fn transpose_apply(&self, top: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.shell_dofs];
        for (row, &x) in self.rows.iter().zip(top) {
            for &(d, c) in row {
                out[d] += c * x;
            }
        }
        out
    }
}

pub fn build_coupling(shell: &ShellMesh, fluid: &FluidMesh) -> Result<CouplingOperator, ConfigError> {
    if shell.element_count() != fluid.nz() {
        return Err(ConfigError::Misaligned(format!(
            "shell has {} elements but the fluid mesh has {} columns",
            shell.element_count(),
            fluid.nz()
        )));
    }
    let tol = 1e-12 * shell.length();
    for (k, (a, b)) in shell.nodes().iter().zip(fluid.z_vertices()).enumerate() {
        if (a - b).abs() > tol {
            return Err(ConfigError::Misaligned(format!(
                "shell node {k} at z = {a} does not match fluid vertex at z = {b}"
            )));
        }
    }
    let mut rows = Vec::with_capacity(fluid.velocity_columns());
    for i in 0..fluid.velocity_columns() {
        let mut row = Vec::new();
        if i % 2 == 0 {
            if let Some(d) = shell.free_dof(i / 2, false) {
                row.push((d, 1.0));
            }
        } else {
            let e = i / 2;
            let b = hermite_basis(0.5, shell.element_length(e));
            for (k, dof) in shell.element_dofs(e).iter().enumerate() {
                if let Some(d) = dof {
                    row.push((*d, b.value[k]));
                }
            }
        }
        rows.push(row);
    }
    Ok(CouplingOperator {
        rows,
        shell_dofs: shell.free_dof_count(),
    })
}

/// Map between full velocity DOFs and reduced unknowns.
#[derive(Debug, Clone)]
pub struct ConstrainedSpace {
    map: Vec<Vec<(usize, f64)>>,
    fluid_free: usize,
    shell_dofs: usize,
    pressure_dofs: usize,
}

impl ConstrainedSpace {
    /// With `coupling = None` the top wall is rigid and `u_r = 0` there.
    pub fn new(fluid: &FluidMesh, coupling: Option<&CouplingOperator>) -> Self {
        let last = fluid.velocity_columns() - 1;
        let top = fluid.top_row();
        let mut map = vec![Vec::new(); fluid.velocity_dof_count()];
        let mut next = 0;
        for i in 0..fluid.velocity_columns() {
            for j in 0..fluid.velocity_rows() {
                let node = fluid.velocity_node(i, j);
                if j != top {
                    map[2 * node] = vec![(next, 1.0)];
                    next += 1;
                }
                if j != 0 && j != top && i != 0 && i != last {
                    map[2 * node + 1] = vec![(next, 1.0)];
                    next += 1;
                }
            }
        }
        let fluid_free = next;
        let shell_dofs = coupling.map_or(0, |c| c.shell_dofs);
        if let Some(c) = coupling {
            for i in 1..last {
                let node = fluid.velocity_node(i, top);
                map[2 * node + 1] = c.rows[i].iter().map(|&(d, v)| (fluid_free + d, v)).collect();
            }
        }
        Self {
            map,
            fluid_free,
            shell_dofs,
            pressure_dofs: fluid.pressure_node_count(),
        }
    }

    pub fn fluid_free(&self) -> usize {
        self.fluid_free
    }

    pub fn shell_dofs(&self) -> usize {
        self.shell_dofs
    }

    /// Size of the reduced velocity vector `y`.
    pub fn reduced_len(&self) -> usize {
        self.fluid_free + self.shell_dofs
    }

    pub fn pressure_dofs(&self) -> usize {
        self.pressure_dofs
    }

    pub fn system_len(&self) -> usize {
        self.reduced_len() + self.pressure_dofs
    }

    pub fn shell_offset(&self) -> usize {
        self.fluid_free
    }

    pub fn targets(&self, full_dof: usize) -> &[(usize, f64)] {
        &self.map[full_dof]
    }

    /// `Pᵀ A P`
    pub fn project(&self, a: &SparseMatrix) -> SparseMatrix {
        let n = self.reduced_len();
        let mut b = TripletBuilder::with_capacity(n, n, a.nnz());
        self.scatter_projected(a, 1.0, 0, &mut b);
        b.build().with_symmetry(a.is_marked_symmetric())
    }

    fn scatter_projected(&self, a: &SparseMatrix, alpha: f64, offset: usize, b: &mut TripletBuilder) {
        for (i, j, v) in a.entries() {
            for &(ri, ci) in &self.map[i] {
                for &(rj, cj) in &self.map[j] {
                    b.push(offset + ri, offset + rj, alpha * ci * cj * v);
                }
            }
        }
    }

    /// `Pᵀ f`
    pub fn restrict(&self, f: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.reduced_len()];
        for (i, targets) in self.map.iter().enumerate() {
            for &(r, c) in targets {
                out[r] += c * f[i];
            }
        }
        out
    }

    /// `P y`
    pub fn expand(&self, y: &[f64]) -> Vec<f64> {
        self.map
            .iter()
            .map(|t| t.iter().map(|&(r, c)| c * y[r]).sum())
            .collect()
    }

    /// Reduced vector of a full velocity field that already satisfies the
    /// constraints, with the shell part supplied separately.
    pub fn reduce(&self, u: &[f64], shell_v: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.reduced_len()];
        for (i, targets) in self.map.iter().enumerate() {
            if let [(r, c)] = targets.as_slice() {
                if *r < self.fluid_free && *c == 1.0 {
                    y[*r] = u[i];
                }
            }
        }
        y[self.fluid_free..].copy_from_slice(shell_v);
        y
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluidParams {
    pub density: f64,
    pub viscosity: f64,
}

impl FluidParams {
    pub fn blood() -> Self {
        Self {
            density: 1.0,
            viscosity: 0.035,
        }
    }
}

/// The full-space operators a fluid step assembled, kept for bookkeeping.
#[derive(Debug, Clone)]
pub struct StepOperators {
    /// `M_f(η^n)`
    pub mass: SparseMatrix,
    /// `S(v^{n+1/2})`
    pub robin: SparseMatrix,
    pub advection: SparseMatrix,
    pub viscous: SparseMatrix,
    pub divergence: SparseMatrix,
    pub forcing: Vec<f64>,
}

/// The assembled block system over `[y | p]`.
#[derive(Debug, Clone)]
pub struct CoupledSystem {
    pub matrix: SparseMatrix,
    pub rhs: Vec<f64>,
    pub reduced_len: usize,
    pub pressure_len: usize,
}

#[derive(Debug, Clone)]
pub struct FluidStepResult {
    pub fluid: FluidState,
    /// `v^{n+1}`, empty in rigid-wall mode
    pub v_next: Vec<f64>,
    pub operators: StepOperators,
}

/// Static data of the coupled problem.
#[derive(Debug, Clone)]
pub struct CoupledProblem {
    pub fluid_mesh: FluidMesh,
    pub shell_mesh: ShellMesh,
    pub coupling: Option<CouplingOperator>,
    pub space: ConstrainedSpace,
    pub shell: Option<ShellOperators>,
    pub params: FluidParams,
    pub radius: f64,
}

impl CoupledProblem {
    pub fn new(
        fluid_mesh: FluidMesh,
        shell_mesh: ShellMesh,
        shell: Option<ShellOperators>,
        params: FluidParams,
        radius: f64,
    ) -> Result<Self, ConfigError> {
        let coupling = match shell {
            Some(_) => Some(build_coupling(&shell_mesh, &fluid_mesh)?),
            None => None,
        };
        let space = ConstrainedSpace::new(&fluid_mesh, coupling.as_ref());
        Ok(Self {
            fluid_mesh,
            shell_mesh,
            coupling,
            space,
            shell,
            params,
            radius,
        })
    }

    pub fn is_rigid(&self) -> bool {
        self.shell.is_none()
    }

    /// Assembles the full-space operators of one fluid step.
    pub fn assemble_operators(
        &self,
        snapshot: &AleSnapshot,
        domain_velocity: &DomainVelocityField,
        u_n: &[f64],
        mass: Option<SparseMatrix>,
        p_in: f64,
        p_out: f64,
    ) -> StepOperators {
        let mesh = &self.fluid_mesh;
        StepOperators {
            mass: mass.unwrap_or_else(|| assemble_weighted_mass(mesh, snapshot)),
            robin: assemble_robin_mass(mesh, domain_velocity),
            advection: assemble_advection(mesh, snapshot, u_n, domain_velocity),
            viscous: assemble_viscous(mesh, snapshot, self.params.viscosity),
            divergence: assemble_divergence(mesh, snapshot),
            forcing: assemble_pressure_forcing(mesh, p_in, p_out, self.radius),
        }
    }

    pub fn assemble_system(
        &self,
        ops: &StepOperators,
        u_n: &[f64],
        v_half: &[f64],
        dt: f64,
    ) -> CoupledSystem {
        let rho = self.params.density;
        let space = &self.space;
        let ny = space.reduced_len();
        let np = space.pressure_dofs();
        let n = ny + np;
        let velocity = SparseMatrix::linear_combination(&[
            (rho / dt, &ops.mass),
            (0.5 * rho, &ops.robin),
            (rho, &ops.advection),
            (1.0, &ops.viscous),
        ]);
        let mut b = TripletBuilder::with_capacity(n, n, velocity.nnz() + 2 * ops.divergence.nnz());
        space.scatter_projected(&velocity, 1.0, 0, &mut b);

        let mut rhs = vec![0.0; n];
        let inertia = ops.mass.mul_vec(u_n);
        let load: Vec<f64> = inertia
            .iter()
            .zip(&ops.forcing)
            .map(|(m, f)| rho / dt * m + f)
            .collect();
        rhs[..ny].copy_from_slice(&space.restrict(&load));

        if let Some(shell) = &self.shell {
            let off = space.shell_offset();
            let rho_s_h = shell.coefficients.rho_s_h;
            let block = SparseMatrix::linear_combination(&[
                (rho_s_h / dt, &shell.mass),
                (1.0, &shell.a_s_prime),
            ]);
            for (i, j, v) in block.entries() {
                b.push(off + i, off + j, v);
            }
            let mv = shell.mass.mul_vec(v_half);
            for (k, x) in mv.iter().enumerate() {
                rhs[off + k] += rho_s_h / dt * x;
            }
        }

        for (pnode, dof, v) in ops.divergence.entries() {
            for &(r, c) in space.targets(dof) {
                b.push(ny + pnode, r, -c * v);
                b.push(r, ny + pnode, -c * v);
            }
        }
        CoupledSystem {
            matrix: b.build(),
            rhs,
            reduced_len: ny,
            pressure_len: np,
        }
    }

    /// One fluid sub-step. `snapshot` is built from `η^n`, `domain_velocity`
    /// and `v_half` from the structure step just completed.
    #[allow(clippy::too_many_arguments)]
    pub fn fluid_step(
        &self,
        u_n: &[f64],
        v_half: &[f64],
        snapshot: &AleSnapshot,
        domain_velocity: &DomainVelocityField,
        mass: Option<SparseMatrix>,
        dt: f64,
        p_in: f64,
        p_out: f64,
        solver: &SolverOptions,
    ) -> Result<FluidStepResult, StepError> {
        let ops = self.assemble_operators(snapshot, domain_velocity, u_n, mass, p_in, p_out);
        let system = self.assemble_system(&ops, u_n, v_half, dt);
        let x = if system.rhs.iter().all(|&r| r == 0.0) {
            vec![0.0; system.rhs.len()]
        } else {
            linalg::solve(&system.matrix, &system.rhs, solver)?
        };
        if !x.iter().all(|v| v.is_finite()) {
            return Err(StepError::NonFinite("fluid step solution"));
        }
        let ny = system.reduced_len;
        let fluid = FluidState {
            u: self.space.expand(&x[..ny]),
            p: x[ny..].to_vec(),
        };
        let v_next = x[self.space.shell_offset()..ny].to_vec();
        Ok(FluidStepResult {
            fluid,
            v_next,
            operators: ops,
        })
    }

    /// Per-step constant `C̃ = ½ λ_max(Lᵀ K̂⁻¹ L)` where `L` holds the reduced
    /// forcing for unit inlet and unit outlet pressure and `K̂` the reduced
    /// viscous matrix. With it, `F·u ≤ ½ uᵀKu + C̃ (P_in² + P_out²)`.
    pub fn forcing_constant(&self, viscous: &SparseMatrix) -> Result<f64, StepError> {
        let k = self.space.project(viscous).with_symmetry(true);
        let factor = Factorization::new(&k)?;
        let l_in = self
            .space
            .restrict(&assemble_pressure_forcing(&self.fluid_mesh, 1.0, 0.0, self.radius));
        let l_out = self
            .space
            .restrict(&assemble_pressure_forcing(&self.fluid_mesh, 0.0, 1.0, self.radius));
        let x_in = factor.solve_checked(&k, &l_in, 1e-10)?;
        let x_out = factor.solve_checked(&k, &l_out, 1e-10)?;
        let a = linalg::dot(&l_in, &x_in);
        let d = linalg::dot(&l_out, &x_out);
        let b = 0.5 * (linalg::dot(&l_in, &x_out) + linalg::dot(&l_out, &x_in));
        let lambda = 0.5 * (a + d) + (0.25 * (a - d) * (a - d) + b * b).sqrt();
        Ok(0.5 * lambda)
    }

    /// Full momentum residual of a step restricted to the wall and mapped to
    /// shell DOFs, plus the shell equation's own terms. Zero for a converged
    /// coupled step.
    pub fn interface_residual(
        &self,
        ops: &StepOperators,
        u_n: &[f64],
        result: &FluidStepResult,
        v_half: &[f64],
        dt: f64,
    ) -> Option<(Vec<f64>, Vec<f64>)> {
        let (coupling, shell) = (self.coupling.as_ref()?, self.shell.as_ref()?);
        let rho = self.params.density;
        let u = &result.fluid.u;
        let du: Vec<f64> = u.iter().zip(u_n).map(|(a, b)| a - b).collect();
        let m = ops.mass.mul_vec(&du);
        let s = ops.robin.mul_vec(u);
        let nu = ops.advection.mul_vec(u);
        let ku = ops.viscous.mul_vec(u);
        let btp = ops.divergence.transpose().mul_vec(&result.fluid.p);
        let residual: Vec<f64> = (0..u.len())
            .map(|i| rho / dt * m[i] + 0.5 * rho * s[i] + rho * nu[i] + ku[i] - btp[i] - ops.forcing[i])
            .collect();
        let top = self.fluid_mesh.top_row();
        let top_rows: Vec<f64> = (0..self.fluid_mesh.velocity_columns())
            .map(|i| residual[2 * self.fluid_mesh.velocity_node(i, top) + 1])
            .collect();
        let fluid_part = coupling.transpose_apply(&top_rows);
        let dv: Vec<f64> = result.v_next.iter().zip(v_half).map(|(a, b)| a - b).collect();
        let inertia = shell.mass.mul_vec(&dv);
        let visc = shell.a_s_prime.mul_vec(&result.v_next);
        let shell_part = inertia
            .iter()
            .zip(&visc)
            .map(|(a, b)| shell.coefficients.rho_s_h / dt * a + b)
            .collect();
        Some((fluid_part, shell_part))
    }
}

/// Terms of the fluid-step energy balance.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FluidStepEnergy {
    pub energy_half: f64,
    pub energy_full: f64,
    /// `½ ρ_f (u^{n+1} − u^n)ᵀ M_f(η^n) (u^{n+1} − u^n)`
    pub fluid_kinetic_jump: f64,
    /// `½ ρ_s h ‖v^{n+1} − v^{n+1/2}‖²`
    pub shell_velocity_jump: f64,
    /// `Δt (uᵀ K u + vᵀ A'_s v)`, the dissipation entering the balance
    pub dissipation: f64,
    /// `Δt (½ uᵀ K u + vᵀ A'_s v)`, the dissipation of the energy inequality
    pub dissipation_inequality: f64,
    /// `Δt ½ uᵀ K u`, its fluid part
    pub dissipation_fluid: f64,
    /// `Δt F·u^{n+1}`
    pub pressure_work: f64,
    pub balance_residual: f64,
    pub inequality_slack: f64,
}

/// Inputs of [`fluid_step_energy_residuals`]; all vectors on full spaces.
pub struct FluidStepEnergyInputs<'a> {
    pub u_n: &'a [f64],
    pub u_next: &'a [f64],
    pub eta_half: &'a [f64],
    pub v_half: &'a [f64],
    pub v_next: &'a [f64],
    pub mass_n: &'a SparseMatrix,
    pub mass_next: &'a SparseMatrix,
    pub viscous: &'a SparseMatrix,
    pub forcing: &'a [f64],
    pub shell: Option<&'a ShellOperators>,
    pub density: f64,
    pub dt: f64,
    pub c_tilde: f64,
    pub p_in: f64,
    pub p_out: f64,
}

pub fn fluid_step_energy_residuals(x: &FluidStepEnergyInputs<'_>) -> FluidStepEnergy {
    let rho = x.density;
    let du: Vec<f64> = x.u_next.iter().zip(x.u_n).map(|(a, b)| a - b).collect();
    let fluid_half = 0.5 * rho * x.mass_n.quadratic_form(x.u_n);
    let fluid_full = 0.5 * rho * x.mass_next.quadratic_form(x.u_next);
    let fluid_kinetic_jump = 0.5 * rho * x.mass_n.quadratic_form(&du);
    let viscous = x.viscous.quadratic_form(x.u_next);
    let (shell_half, shell_full, shell_velocity_jump, shell_visc) = match x.shell {
        Some(s) => {
            let rsh = s.coefficients.rho_s_h;
            let elastic = 0.5 * s.a_s.quadratic_form(x.eta_half);
            let dv: Vec<f64> = x.v_next.iter().zip(x.v_half).map(|(a, b)| a - b).collect();
            (
                0.5 * rsh * s.mass.quadratic_form(x.v_half) + elastic,
                0.5 * rsh * s.mass.quadratic_form(x.v_next) + elastic,
                0.5 * rsh * s.mass.quadratic_form(&dv),
                s.a_s_prime.quadratic_form(x.v_next),
            )
        }
        None => (0.0, 0.0, 0.0, 0.0),
    };
    let energy_half = fluid_half + shell_half;
    let energy_full = fluid_full + shell_full;
    let dissipation = x.dt * (viscous + shell_visc);
    let dissipation_inequality = x.dt * (0.5 * viscous + shell_visc);
    let pressure_work = x.dt * linalg::dot(x.forcing, x.u_next);
    let jumps = fluid_kinetic_jump + shell_velocity_jump;
    let balance_residual = (energy_full + jumps + dissipation - energy_half - pressure_work).abs();
    let inequality_slack = energy_half + x.c_tilde * x.dt * (x.p_in * x.p_in + x.p_out * x.p_out)
        - (energy_full + jumps + dissipation_inequality);
    FluidStepEnergy {
        energy_half,
        energy_full,
        fluid_kinetic_jump,
        shell_velocity_jump,
        dissipation,
        dissipation_inequality,
        dissipation_fluid: x.dt * 0.5 * viscous,
        pressure_work,
        balance_residual,
        inequality_slack,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_nodal_value_traces_to_half_at_midpoints() {
        let shell = ShellMesh::uniform(4.0, 4);
        let fluid = FluidMesh::uniform(4.0, 4, 2);
        let t = build_coupling(&shell, &fluid).unwrap();
        let mut v = vec![0.0; shell.free_dof_count()];
        v[shell.free_dof(2, false).unwrap()] = 1.0;
        let trace = t.apply(&v);
        assert_eq!(trace[4], 1.0);
        assert_eq!(trace[3], 0.5);
        assert_eq!(trace[5], 0.5);
        assert_eq!(trace[1], 0.0);
        assert!(t.apply(&vec![0.0; v.len()]).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn misaligned_meshes_are_rejected() {
        let shell = ShellMesh::uniform(4.0, 4);
        assert!(build_coupling(&shell, &FluidMesh::uniform(4.0, 8, 2)).is_err());
        assert!(build_coupling(&shell, &FluidMesh::uniform(4.5, 4, 2)).is_err());
    }

    #[test]
    fn expand_then_restrict_is_transpose_pair() {
        let shell = ShellMesh::uniform(2.0, 3);
        let fluid = FluidMesh::uniform(2.0, 3, 2);
        let t = build_coupling(&shell, &fluid).unwrap();
        let space = ConstrainedSpace::new(&fluid, Some(&t));
        let y: Vec<f64> = (0..space.reduced_len()).map(|i| (i as f64 * 0.7).cos()).collect();
        let f: Vec<f64> = (0..fluid.velocity_dof_count()).map(|i| (i as f64 * 0.3).sin()).collect();
        let lhs = linalg::dot(&space.expand(&y), &f);
        let rhs = linalg::dot(&y, &space.restrict(&f));
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
