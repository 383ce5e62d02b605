//! The Lie splitting time loop: a structure sub-step followed by the coupled
//! fluid sub-step, with energy bookkeeping after each full step.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ale::{build_snapshot, AleSnapshot, DomainVelocityField};
use crate::coupling::{fluid_step_energy_residuals, CoupledProblem, FluidParams, FluidStepEnergyInputs};
use crate::energy::{record_step, EnergyLedger, LedgerRow, StepContext};
use crate::error::{ConfigError, StepError, Violations};
use crate::fluid::{assemble_velocity_mass, assemble_weighted_mass, FluidMesh, FluidState};
use crate::linalg::{SolverOptions, SparseMatrix};
use crate::materials::{derive_coefficients, validate_compatibility, ShellMaterial};
use crate::shell::{
    structure_step_energy_residual, ShellMesh, ShellOperators, ShellProfile, ShellState, StructureEnergy,
    StructureSolver,
};
use crate::waveform::PressureWaveform;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WallMode {
    #[default]
    Viscoelastic,
    /// structural viscosity removed (`D_i = 0`)
    Elastic,
    /// no shell; the top wall is fixed at `r = R`
    RigidWall,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeshConfig {
    pub nz: usize,
    pub nr: usize,
    pub shell_elements: usize,
}

impl MeshConfig {
    pub fn desk() -> Self {
        Self {
            nz: 64,
            nr: 16,
            shell_elements: 64,
        }
    }
}

/// Smooth initial data: `η_0 = a·16z²(L−z)²/L⁴`, `v_0` of the same shape with
/// amplitude `b`, and `u_0 = (c(1 − r̃²), r̃ v_0(z))`, whose trace matches `v_0`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct InitialData {
    pub eta_amplitude: f64,
    pub velocity_amplitude: f64,
    pub axial_velocity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub t_final: f64,
    pub steps: usize,
    pub mesh: MeshConfig,
    pub material: ShellMaterial,
    pub fluid: FluidParams,
    pub waveform: PressureWaveform,
    pub mode: WallMode,
    /// halting threshold for `min(R + η)`, relative to `R`
    pub contact_threshold: f64,
    pub solver: SolverOptions,
    /// trajectory frames are kept every `output_every` steps (and at the end)
    pub output_every: usize,
    pub initial: InitialData,
    pub compatibility_tolerance: f64,
}

impl RunConfig {
    /// Benchmark pressure pulse on the desk-scale mesh.
    pub fn pulse() -> Self {
        Self {
            t_final: 0.006,
            steps: 200,
            mesh: MeshConfig::desk(),
            material: ShellMaterial::benchmark(),
            fluid: FluidParams::blood(),
            waveform: PressureWaveform {
                inlet: crate::waveform::Waveform::benchmark_pulse(),
                outlet: crate::waveform::Waveform::Zero,
            },
            mode: WallMode::Viscoelastic,
            contact_threshold: 1e-6,
            solver: SolverOptions::default(),
            output_every: 0,
            initial: InitialData::default(),
            compatibility_tolerance: 1e-10,
        }
    }

    pub fn dt(&self) -> f64 {
        self.t_final / self.steps as f64
    }

    pub fn radius(&self) -> f64 {
        self.material.reference_radius
    }

    pub fn length(&self) -> f64 {
        self.material.length
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut v = Violations::new();
        v.check(self.t_final.is_finite() && self.t_final > 0.0, "t_final", || {
            format!("must be > 0, got {}", self.t_final)
        });
        v.check(self.steps > 0, "steps", || "must be > 0".into());
        v.check(self.mesh.nz >= 2, "mesh.nz", || "must be >= 2".into());
        v.check(self.mesh.nr >= 1, "mesh.nr", || "must be >= 1".into());
        v.check(
            self.mode == WallMode::RigidWall || self.mesh.shell_elements == self.mesh.nz,
            "mesh.shell_elements",
            || {
                format!(
                    "must equal mesh.nz ({}) so the wall nodes align, got {}",
                    self.mesh.nz, self.mesh.shell_elements
                )
            },
        );
        v.check(self.fluid.density.is_finite() && self.fluid.density > 0.0, "fluid.density", || {
            format!("must be > 0, got {}", self.fluid.density)
        });
        v.check(
            self.fluid.viscosity.is_finite() && self.fluid.viscosity > 0.0,
            "fluid.viscosity",
            || format!("must be > 0, got {}", self.fluid.viscosity),
        );
        v.check(
            self.contact_threshold.is_finite() && (0.0..1.0).contains(&self.contact_threshold),
            "contact_threshold",
            || format!("must lie in [0, 1), got {}", self.contact_threshold),
        );
        v.check(
            self.solver.tolerance.is_finite() && self.solver.tolerance > 0.0,
            "solver.tolerance",
            || format!("must be > 0, got {}", self.solver.tolerance),
        );
        if let Err(e) = self.material.validate() {
            v.extend(e);
        }
        v.check(
            !(self.mode == WallMode::RigidWall
                && (self.initial.eta_amplitude != 0.0 || self.initial.velocity_amplitude != 0.0)),
            "initial",
            || "rigid-wall mode admits no wall displacement or velocity".into(),
        );
        v.into_result()?;
        self.waveform.inlet.validate()?;
        self.waveform.outlet.validate()?;
        Ok(())
    }
}

/// One stored time level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub step: usize,
    pub time: f64,
    pub eta: Vec<f64>,
    pub v: Vec<f64>,
    pub v_star: Vec<f64>,
    pub u: Vec<f64>,
    pub p: Vec<f64>,
}

/// Stored frames at the configured cadence. Between frames the fields are
/// read either as piecewise constant (`u(t) = u^n` on `(t_{n−1}, t_n]`) or as
/// the continuous piecewise-linear interpolant.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub dt: f64,
    pub frames: Vec<Frame>,
}

impl TrajectoryRecord {
    pub fn last(&self) -> Option<&Frame> {
        self.frames.last()
    }

    /// Frame holding the value on the interval containing `t`.
    pub fn piecewise_constant(&self, t: f64) -> Option<&Frame> {
        self.frames.iter().find(|f| f.time >= t - 1e-12 * self.dt).or(self.frames.last())
    }

    /// Linear interpolant in time between the stored frames around `t`.
    pub fn piecewise_linear(&self, t: f64) -> Option<Frame> {
        let k = self.frames.iter().position(|f| f.time >= t)?;
        if k == 0 {
            return Some(self.frames[0].clone());
        }
        let (a, b) = (&self.frames[k - 1], &self.frames[k]);
        let s = (t - a.time) / (b.time - a.time);
        let mix = |x: &[f64], y: &[f64]| -> Vec<f64> { x.iter().zip(y).map(|(p, q)| p + s * (q - p)).collect() };
        Some(Frame {
            step: b.step,
            time: t,
            eta: mix(&a.eta, &b.eta),
            v: mix(&a.v, &b.v),
            v_star: mix(&a.v_star, &b.v_star),
            u: mix(&a.u, &b.u),
            p: mix(&a.p, &b.p),
        })
    }

    pub fn is_finite(&self) -> bool {
        self.frames.iter().all(|f| {
            f.eta
                .iter()
                .chain(&f.v)
                .chain(&f.v_star)
                .chain(&f.u)
                .chain(&f.p)
                .all(|x| x.is_finite())
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ExitStatus {
    Completed,
    WallContact { time: f64, z: f64, min_radius: f64 },
    SolverFailure { step: usize, message: String },
}

impl ExitStatus {
    pub fn exit_code(&self) -> i32 {
        match self {
            ExitStatus::Completed => 0,
            ExitStatus::WallContact { .. } => 2,
            ExitStatus::SolverFailure { .. } => 3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub record: TrajectoryRecord,
    pub ledger: EnergyLedger,
    pub status: ExitStatus,
}

impl RunOutput {
    /// `‖v_N − v*_N‖_{L²((0,T)×(0,L))}`
    pub fn v_vstar_gap(&self) -> f64 {
        self.ledger.v_vstar_gap()
    }
}

/// `16 z²(L−z)²/L⁴` and its derivative.
pub fn bump(length: f64) -> (impl Fn(f64) -> f64, impl Fn(f64) -> f64) {
    let l4 = length.powi(4);
    (
        move |z: f64| 16.0 * z * z * (length - z) * (length - z) / l4,
        move |z: f64| 32.0 * z * (length - z) * (length - 2.0 * z) / l4,
    )
}

/// Full-step state threaded through the loop.
#[derive(Debug, Clone)]
pub struct SimState {
    pub shell: ShellState,
    pub fluid: FluidState,
}

/// A run in progress.
pub struct Simulation {
    pub config: RunConfig,
    pub problem: CoupledProblem,
    structure: Option<StructureSolver>,
    pub state: SimState,
    pub step_index: usize,
    snapshot: AleSnapshot,
    mass: SparseMatrix,
    contact_threshold: f64,
    /// audit trail: the `η` each fluid step's snapshot was built from
    last_snapshot_eta: Vec<f64>,
}

impl Simulation {
    pub fn new(config: RunConfig) -> Result<Self, ConfigError> {
        config.validate()?;
        let radius = config.radius();
        let length = config.length();
        let fluid_mesh = FluidMesh::uniform(length, config.mesh.nz, config.mesh.nr);
        let shell_elements = if config.mode == WallMode::RigidWall {
            config.mesh.nz
        } else {
            config.mesh.shell_elements
        };
        let shell_mesh = ShellMesh::uniform(length, shell_elements);
        let mut coefficients = derive_coefficients(&config.material)?;
        if config.mode == WallMode::Elastic {
            coefficients = coefficients.without_viscosity();
        }
        let shell_ops = match config.mode {
            WallMode::RigidWall => None,
            _ => Some(ShellOperators::new(&shell_mesh, coefficients)),
        };
        let problem = CoupledProblem::new(fluid_mesh, shell_mesh, shell_ops, config.fluid, radius)?;

        let (eta0, v0) = initial_profiles(&problem.shell_mesh, &config.initial, length);
        let u0 = initial_velocity(&problem.fluid_mesh, &problem.shell_mesh, &v0, &config.initial);
        validate_compatibility(
            &problem.shell_mesh,
            &problem.fluid_mesh,
            &eta0,
            &v0,
            &u0,
            radius,
            config.compatibility_tolerance,
        )
        .into_result()?;

        let contact_threshold = config.contact_threshold * radius;
        let structure = match &problem.shell {
            Some(ops) => Some(
                StructureSolver::new(
                    &ops.mass,
                    &ops.a_s,
                    ops.coefficients.rho_s_h,
                    config.dt(),
                    config.solver.tolerance,
                )
                .map_err(|e| ConfigError::Parse(format!("structure operator: {e}")))?,
            ),
            None => None,
        };
        let shell = if problem.is_rigid() {
            ShellState {
                eta: vec![],
                v: vec![],
                v_star: vec![],
            }
        } else {
            let v = v0.to_free(&problem.shell_mesh);
            ShellState {
                eta: eta0.to_free(&problem.shell_mesh),
                v_star: v.clone(),
                v,
            }
        };
        let snapshot = make_snapshot(&problem, &shell.eta, contact_threshold).map_err(|e| {
            ConfigError::Parse(format!("initial geometry: {e}"))
        })?;
        let mass = assemble_weighted_mass(&problem.fluid_mesh, &snapshot);
        let fluid = FluidState {
            u: u0,
            p: vec![0.0; problem.fluid_mesh.pressure_node_count()],
        };
        Ok(Self {
            last_snapshot_eta: shell.eta.clone(),
            config,
            problem,
            structure,
            state: SimState { shell, fluid },
            step_index: 0,
            snapshot,
            mass,
            contact_threshold,
        })
    }

    pub fn time(&self) -> f64 {
        self.step_index as f64 * self.config.dt()
    }

    /// `E^n` of the current state.
    pub fn energy(&self) -> f64 {
        let fluid = 0.5 * self.config.fluid.density * self.mass.quadratic_form(&self.state.fluid.u);
        let shell = match &self.problem.shell {
            Some(s) => crate::shell::shell_energy(
                &self.state.shell.eta,
                &self.state.shell.v,
                &s.mass,
                &s.a_s,
                s.coefficients.rho_s_h,
            ),
            None => 0.0,
        };
        fluid + shell
    }

    pub fn frame(&self) -> Frame {
        Frame {
            step: self.step_index,
            time: self.time(),
            eta: self.state.shell.eta.clone(),
            v: self.state.shell.v.clone(),
            v_star: self.state.shell.v_star.clone(),
            u: self.state.fluid.u.clone(),
            p: self.state.fluid.p.clone(),
        }
    }

    /// The `η` from which the most recent fluid step's geometry was built.
    pub fn snapshot_source(&self) -> &[f64] {
        &self.last_snapshot_eta
    }

    /// Advances one full step. On error the state is left at `t_n`.
    pub fn step(&mut self) -> Result<LedgerRow, StepError> {
        let cfg = &self.config;
        let dt = cfg.dt();
        let n = self.step_index;
        let (t0, t1) = (n as f64 * dt, (n + 1) as f64 * dt);
        let (p_in, p_out) = cfg.waveform.step_average(t0, t1);
        let problem = &self.problem;
        let before = self.state.shell.clone();

        // structure sub-step
        let half = match &self.structure {
            Some(solver) => {
                let (eta, v) = solver.step(&before.eta, &before.v)?;
                ShellState {
                    eta,
                    v_star: v.clone(),
                    v,
                }
            }
            None => before.clone(),
        };
        if !half.is_finite() {
            return Err(StepError::NonFinite("structure step"));
        }
        let (structure_energy, eta_jumps) = match &problem.shell {
            Some(s) => {
                let e = structure_step_energy_residual(&before, &half, &s.mass, &s.a_s, s.coefficients.rho_s_h);
                let de: Vec<f64> = half.eta.iter().zip(&before.eta).map(|(a, b)| a - b).collect();
                let c = &s.coefficients;
                let jumps = [
                    0.5 * c.c0 * s.mass.quadratic_form(&de),
                    0.5 * c.c1 * s.g1.quadratic_form(&de),
                    0.5 * c.c2 * s.g2.quadratic_form(&de),
                ];
                (e, jumps)
            }
            None => (StructureEnergy::default(), [0.0; 3]),
        };

        // wall contact is decided on η^{n+1/2} = η^{n+1}
        let next_snapshot = make_snapshot(problem, &half.eta, self.contact_threshold)?;

        // fluid sub-step on the geometry of η^n with domain velocity from v^{n+1/2}
        let domain_velocity = if problem.is_rigid() {
            DomainVelocityField::zero(&problem.fluid_mesh)
        } else {
            DomainVelocityField::from_shell(&problem.shell_mesh, &problem.fluid_mesh, &half.v)
        };
        let u_n = self.state.fluid.u.clone();
        let result = problem.fluid_step(
            &u_n,
            &half.v,
            &self.snapshot,
            &domain_velocity,
            Some(self.mass.clone()),
            dt,
            p_in,
            p_out,
            &cfg.solver,
        )?;
        if !result.fluid.is_finite() || !result.v_next.iter().all(|x| x.is_finite()) {
            return Err(StepError::NonFinite("fluid step"));
        }
        let ops = &result.operators;

        let mass_next = if problem.is_rigid() {
            self.mass.clone()
        } else {
            assemble_weighted_mass(&problem.fluid_mesh, &next_snapshot)
        };
        let jacobian_ratio = {
            let lhs = SparseMatrix::linear_combination(&[(1.0, &ops.mass), (dt, &ops.robin)]);
            let scale = mass_next.max_abs();
            if scale > 0.0 {
                lhs.max_abs_difference(&mass_next) / scale
            } else {
                0.0
            }
        };
        let skew_ratio = {
            let m = ops.advection.max_abs();
            if m > 0.0 {
                ops.advection.skew_defect() / m
            } else {
                0.0
            }
        };
        let c_tilde = if p_in != 0.0 || p_out != 0.0 {
            problem.forcing_constant(&ops.viscous)?
        } else {
            0.0
        };

        let fluid_energy = fluid_step_energy_residuals(&FluidStepEnergyInputs {
            u_n: &u_n,
            u_next: &result.fluid.u,
            eta_half: &half.eta,
            v_half: &half.v,
            v_next: &result.v_next,
            mass_n: &ops.mass,
            mass_next: &mass_next,
            viscous: &ops.viscous,
            forcing: &ops.forcing,
            shell: problem.shell.as_ref(),
            density: cfg.fluid.density,
            dt,
            c_tilde,
            p_in,
            p_out,
        });
        let gap_squared = match &problem.shell {
            Some(s) => {
                let dv: Vec<f64> = result.v_next.iter().zip(&half.v).map(|(a, b)| a - b).collect();
                s.mass.quadratic_form(&dv)
            }
            None => 0.0,
        };
        let row = record_step(
            &StepContext {
                step: n,
                time: t1,
                dt,
                p_in,
                p_out,
                c_tilde,
                skew_ratio,
                jacobian_ratio,
                gap_squared,
                fluid_energy_start: 0.5 * cfg.fluid.density * ops.mass.quadratic_form(&u_n),
                eta_jumps,
            },
            &structure_energy,
            &fluid_energy,
        );

        self.last_snapshot_eta = before.eta.clone();
        self.state = SimState {
            shell: ShellState {
                eta: half.eta,
                v: result.v_next,
                v_star: half.v,
            },
            fluid: result.fluid,
        };
        self.snapshot = next_snapshot;
        self.mass = mass_next;
        self.step_index += 1;
        Ok(row)
    }
}

fn make_snapshot(problem: &CoupledProblem, eta: &[f64], threshold: f64) -> Result<AleSnapshot, StepError> {
    if problem.is_rigid() {
        Ok(AleSnapshot::flat(&problem.fluid_mesh, problem.radius))
    } else {
        build_snapshot(&problem.shell_mesh, &problem.fluid_mesh, eta, problem.radius, threshold)
    }
}

pub fn initial_profiles(shell: &ShellMesh, init: &InitialData, length: f64) -> (ShellProfile, ShellProfile) {
    let (f, df) = bump(length);
    let a = init.eta_amplitude;
    let b = init.velocity_amplitude;
    (
        ShellProfile::interpolate(shell, |z| a * f(z), |z| a * df(z)),
        ShellProfile::interpolate(shell, |z| b * f(z), |z| b * df(z)),
    )
}

pub fn initial_velocity(fluid: &FluidMesh, shell: &ShellMesh, v0: &ShellProfile, init: &InitialData) -> Vec<f64> {
    let mut u = vec![0.0; fluid.velocity_dof_count()];
    for i in 0..fluid.velocity_columns() {
        let vz = shell.evaluate(v0, fluid.velocity_z(i)).0;
        for j in 0..fluid.velocity_rows() {
            let r = fluid.velocity_r(j);
            let node = fluid.velocity_node(i, j);
            u[2 * node] = init.axial_velocity * (1.0 - r * r);
            u[2 * node + 1] = r * vz;
        }
    }
    u
}

/// Runs to `t_final`, halting early on wall contact or solver failure. The
/// trajectory up to the last completed step is always returned.
pub fn run(config: RunConfig) -> Result<RunOutput, ConfigError> {
    let mut sim = Simulation::new(config)?;
    Ok(run_simulation(&mut sim))
}

pub fn run_simulation(sim: &mut Simulation) -> RunOutput {
    let every = sim.config.output_every;
    let steps = sim.config.steps;
    let mut ledger = EnergyLedger::new(sim.energy());
    let mut record = TrajectoryRecord {
        dt: sim.config.dt(),
        frames: vec![sim.frame()],
    };
    let mut status = ExitStatus::Completed;
    while sim.step_index < steps {
        match sim.step() {
            Ok(row) => {
                ledger.push(row);
                if (every > 0 && sim.step_index.is_multiple_of(every)) || sim.step_index == steps {
                    record.frames.push(sim.frame());
                }
            }
            Err(StepError::WallContact { z, min_radius }) => {
                status = ExitStatus::WallContact {
                    time: (sim.step_index + 1) as f64 * sim.config.dt(),
                    z,
                    min_radius,
                };
                break;
            }
            Err(e) => {
                status = ExitStatus::SolverFailure {
                    step: sim.step_index,
                    message: e.to_string(),
                };
                break;
            }
        }
    }
    if record.frames.last().map(|f| f.step) != Some(sim.step_index) {
        record.frames.push(sim.frame());
    }
    let t = sim.step_index as f64 * sim.config.dt();
    let (a, b) = sim.config.waveform.l2_norms_squared(t);
    ledger.inlet_l2_squared = a;
    ledger.outlet_l2_squared = b;
    RunOutput {
        record,
        ledger,
        status,
    }
}

/// Result of the rigid-wall steady-flow regression.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoiseuilleReport {
    pub pressure_drop: f64,
    /// `‖u − u_exact‖ / ‖u_exact‖` over the whole domain
    pub l2_relative_error: f64,
    /// the same restricted to the mid-channel cross-section
    pub midline_relative_error: f64,
    /// relative change of `u` over the last step
    pub final_change: f64,
}

/// Marches a rigid-wall configuration to `t_final` and compares with
/// `u_z = Δp/(2μL)(R² − r²)`, `Δp = P_in − P_out` at the final time.
pub fn poiseuille_check(config: RunConfig) -> Result<(PoiseuilleReport, RunOutput), ConfigError> {
    if config.mode != WallMode::RigidWall {
        return Err(ConfigError::Parse("the steady-flow check needs mode = rigid_wall".into()));
    }
    let mut sim = Simulation::new(config.clone())?;
    let mut prev = sim.state.fluid.u.clone();
    let mut out = RunOutput {
        record: TrajectoryRecord::default(),
        ledger: EnergyLedger::new(sim.energy()),
        status: ExitStatus::Completed,
    };
    let mut change = f64::NAN;
    while sim.step_index < config.steps {
        prev.clone_from(&sim.state.fluid.u);
        match sim.step() {
            Ok(row) => out.ledger.push(row),
            Err(e) => {
                out.status = ExitStatus::SolverFailure {
                    step: sim.step_index,
                    message: e.to_string(),
                };
                break;
            }
        }
        let u = &sim.state.fluid.u;
        let du = u.iter().zip(&prev).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let um = u.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        change = if um > 0.0 { du / um } else { 0.0 };
    }
    out.record.frames.push(sim.frame());
    let t = config.t_final;
    let dt = config.dt();
    let (p_in, p_out) = config.waveform.step_average(t - dt, t);
    let dp = p_in - p_out;
    let mesh = &sim.problem.fluid_mesh;
    let r = config.radius();
    let mu = config.fluid.viscosity;
    let l = config.length();
    let exact = |rt: f64| dp / (2.0 * mu * l) * (r * r - (r * rt).powi(2));
    let mut ex = vec![0.0; mesh.velocity_dof_count()];
    for i in 0..mesh.velocity_columns() {
        for j in 0..mesh.velocity_rows() {
            ex[2 * mesh.velocity_node(i, j)] = exact(mesh.velocity_r(j));
        }
    }
    let u = &sim.state.fluid.u;
    let err: Vec<f64> = u.iter().zip(&ex).map(|(a, b)| a - b).collect();
    let m = assemble_velocity_mass(mesh);
    let l2_relative_error = (m.quadratic_form(&err) / m.quadratic_form(&ex)).sqrt();

    // mid-channel cross-section, 200-point midpoint rule in r̃
    let zc = 0.5 * l;
    let (mut num, mut den) = (0.0, 0.0);
    for k in 0..200 {
        let rt = (k as f64 + 0.5) / 200.0;
        let val = crate::fluid::evaluate_velocity(mesh, u, zc, rt);
        let e = exact(rt);
        num += (val[0] - e).powi(2) + val[1].powi(2);
        den += e * e;
    }
    Ok((
        PoiseuilleReport {
            pressure_drop: dp,
            l2_relative_error,
            midline_relative_error: (num / den).sqrt(),
            final_change: change,
        },
        out,
    ))
}

/// Errors of one ladder rung against the reference run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RungResult {
    pub steps: usize,
    pub dt: f64,
    pub eta_error: f64,
    pub u_error: f64,
    pub v_error: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub reference_steps: usize,
    pub rungs: Vec<RungResult>,
    pub failures: Vec<String>,
    pub eta_order: Option<f64>,
    pub u_order: Option<f64>,
    pub v_order: Option<f64>,
    pub gap_order: Option<f64>,
}

/// Least-squares slope of `log e` against `log Δt`.
pub fn fit_order(dts: &[f64], errors: &[f64]) -> Result<f64, String> {
    if dts.len() != errors.len() || dts.len() < 2 {
        return Err("need at least two rungs".into());
    }
    if let Some(k) = errors.iter().position(|&e| !(e > 0.0 && e.is_finite())) {
        return Err(format!("rung {k} has error {}; cannot fit an order", errors[k]));
    }
    if dts.iter().any(|&d| !(d > 0.0)) {
        return Err("time steps must be positive".into());
    }
    let x: Vec<f64> = dts.iter().map(|d| d.ln()).collect();
    let y: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err("all rungs share one time step".into());
    }
    Ok(sxy / sxx)
}

fn relative_error(m: &SparseMatrix, a: &[f64], reference: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(reference).map(|(x, y)| x - y).collect();
    let den = m.quadratic_form(reference);
    let num = m.quadratic_form(&d);
    if den > 0.0 {
        (num / den).sqrt()
    } else {
        num.sqrt()
    }
}

/// Runs each ladder rung and a reference at `reference_steps`, then fits
/// observed temporal orders of the errors at `t_final`. A rung whose step
/// count equals the reference is rejected.
pub fn self_convergence_study(
    config: &RunConfig,
    ladder: &[usize],
    reference_steps: usize,
) -> Result<ConvergenceReport, ConfigError> {
    if let Some(&bad) = ladder.iter().find(|&&n| n == reference_steps) {
        return Err(ConfigError::Parse(format!(
            "ladder rung with {bad} steps coincides with the reference and would have zero error"
        )));
    }
    config.validate()?;
    let mut all: Vec<usize> = ladder.to_vec();
    all.push(reference_steps);
    let outputs: Vec<Result<RunOutput, ConfigError>> = all
        .par_iter()
        .map(|&steps| {
            run(RunConfig {
                steps,
                output_every: 0,
                ..config.clone()
            })
        })
        .collect();
    let mut failures = Vec::new();
    let mut finals = Vec::new();
    for (&steps, out) in all.iter().zip(outputs) {
        match out {
            Ok(o) if o.status == ExitStatus::Completed => finals.push(Some((o.record.last().cloned().unwrap(), o.v_vstar_gap()))),
            Ok(o) => {
                failures.push(format!("{steps} steps: {:?}", o.status));
                finals.push(None);
            }
            Err(e) => {
                failures.push(format!("{steps} steps: {e}"));
                finals.push(None);
            }
        }
    }
    let Some(Some((reference, _))) = finals.pop() else {
        failures.push("reference run did not complete".into());
        return Ok(ConvergenceReport {
            reference_steps,
            rungs: vec![],
            failures,
            eta_order: None,
            u_order: None,
            v_order: None,
            gap_order: None,
        });
    };
    let fluid_mesh = FluidMesh::uniform(config.length(), config.mesh.nz, config.mesh.nr);
    let m_f = assemble_velocity_mass(&fluid_mesh);
    let m_s = crate::shell::assemble_mass(&ShellMesh::uniform(config.length(), config.mesh.nz));
    let mut rungs = Vec::new();
    for (&steps, fin) in ladder.iter().zip(finals) {
        let Some((frame, gap)) = fin else { continue };
        let shell_err = |a: &[f64], b: &[f64]| if a.is_empty() { 0.0 } else { relative_error(&m_s, a, b) };
        rungs.push(RungResult {
            steps,
            dt: config.t_final / steps as f64,
            eta_error: shell_err(&frame.eta, &reference.eta),
            u_error: relative_error(&m_f, &frame.u, &reference.u),
            v_error: shell_err(&frame.v, &reference.v),
            gap,
        });
    }
    let dts: Vec<f64> = rungs.iter().map(|r| r.dt).collect();
    let fit = |f: fn(&RungResult) -> f64| fit_order(&dts, &rungs.iter().map(f).collect::<Vec<_>>()).ok();
    Ok(ConvergenceReport {
        reference_steps,
        eta_order: fit(|r| r.eta_error),
        u_order: fit(|r| r.u_error),
        v_order: fit(|r| r.v_error),
        gap_order: fit(|r| r.gap),
        rungs,
        failures,
    })
}
