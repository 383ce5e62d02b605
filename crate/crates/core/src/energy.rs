//! Per-step energy bookkeeping and the run-level verifier.
//!
//! Every quantity is a quadratic form of assembled operators. A ledger row
//! stores absolute values; the verifier normalizes by
//! `max(E_0, max_n E^n, 1e-30)`.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::coupling::FluidStepEnergy;
use crate::shell::StructureEnergy;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LedgerRow {
    /// step index `n`; the row covers `(t_n, t_{n+1}]`
    pub step: usize,
    /// `t_{n+1}`
    pub time: f64,
    pub dt: f64,
    pub p_in: f64,
    pub p_out: f64,
    /// `E^n`
    pub energy_start: f64,
    /// `E^{n+1/2}`
    pub energy_half: f64,
    /// `E^{n+1}`
    pub energy_full: f64,
    /// `Δt (uᵀKu + vᵀA'_s v)` with `K` the `2μ` viscous matrix
    pub dissipation: f64,
    /// `Δt (μ∫(R+η^n)|D^η u|² + vᵀA'_s v)`
    pub dissipation_inequality: f64,
    /// `Δt μ∫(R+η^n)|D^η u|²`, the fluid part of the inequality dissipation
    pub dissipation_fluid: f64,
    /// `½ ρ_f ∫(R+η^n)|u^{n+1} − u^n|²`
    pub jump_fluid: f64,
    /// `½ ρ_s h ‖v^{n+1} − v^{n+1/2}‖²`
    pub jump_v_fluid_step: f64,
    /// `½ ρ_s h ‖v^{n+1/2} − v^n‖²`
    pub jump_v_structure_step: f64,
    /// `½ C_i |η^{n+1/2} − η^n|²` in the `L²`, `H¹` and `H²` seminorms
    pub jump_eta_c0: f64,
    pub jump_eta_c1: f64,
    pub jump_eta_c2: f64,
    /// `Δt F·u^{n+1}`
    pub pressure_work: f64,
    pub structure_residual: f64,
    pub balance_residual: f64,
    pub inequality_slack: f64,
    pub c_tilde: f64,
    /// `max|N + Nᵀ| / max|N|`
    pub skew_ratio: f64,
    /// `max|M_f(η^n) + Δt S − M_f(η^{n+1})| / max|M_f(η^{n+1})|`
    pub jacobian_ratio: f64,
    /// `‖v^{n+1} − v^{n+1/2}‖²` in `L²(0, L)`, unscaled
    pub gap_squared: f64,
}

impl LedgerRow {
    pub fn jumps_total(&self) -> f64 {
        self.jump_fluid
            + self.jump_v_fluid_step
            + self.jump_v_structure_step
            + self.jump_eta_c0
            + self.jump_eta_c1
            + self.jump_eta_c2
    }

    pub fn max_energy(&self) -> f64 {
        self.energy_start.max(self.energy_half).max(self.energy_full)
    }
}

/// Everything [`record_step`] needs beyond the two sub-step energy reports.
#[derive(Debug, Clone, Copy)]
pub struct StepContext {
    pub step: usize,
    pub time: f64,
    pub dt: f64,
    pub p_in: f64,
    pub p_out: f64,
    pub c_tilde: f64,
    pub skew_ratio: f64,
    pub jacobian_ratio: f64,
    pub gap_squared: f64,
    /// `E^n` fluid kinetic part `½ρ_f u^nᵀ M_f(η^n) u^n`
    pub fluid_energy_start: f64,
    /// `½ C_i |Δη|²` split by coefficient
    pub eta_jumps: [f64; 3],
}

pub fn record_step(ctx: &StepContext, structure: &StructureEnergy, fluid: &FluidStepEnergy) -> LedgerRow {
    LedgerRow {
        step: ctx.step,
        time: ctx.time,
        dt: ctx.dt,
        p_in: ctx.p_in,
        p_out: ctx.p_out,
        energy_start: ctx.fluid_energy_start + structure.energy_before,
        energy_half: fluid.energy_half,
        energy_full: fluid.energy_full,
        dissipation: fluid.dissipation,
        dissipation_inequality: fluid.dissipation_inequality,
        dissipation_fluid: fluid.dissipation_fluid,
        jump_fluid: fluid.fluid_kinetic_jump,
        jump_v_fluid_step: fluid.shell_velocity_jump,
        jump_v_structure_step: structure.velocity_jump,
        jump_eta_c0: ctx.eta_jumps[0],
        jump_eta_c1: ctx.eta_jumps[1],
        jump_eta_c2: ctx.eta_jumps[2],
        pressure_work: fluid.pressure_work,
        structure_residual: structure.residual,
        balance_residual: fluid.balance_residual,
        inequality_slack: fluid.inequality_slack,
        c_tilde: ctx.c_tilde,
        skew_ratio: ctx.skew_ratio,
        jacobian_ratio: ctx.jacobian_ratio,
        gap_squared: ctx.gap_squared,
    }
}

/// Append-only record of a run.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EnergyLedger {
    pub initial_energy: f64,
    /// `‖P_in‖²_{L²(0,T)}` over the recorded interval
    pub inlet_l2_squared: f64,
    pub outlet_l2_squared: f64,
    pub rows: Vec<LedgerRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub structure: f64,
    pub balance: f64,
    pub slack: f64,
    pub telescoped: f64,
    /// allowed increase of `E` between consecutive records under zero forcing
    pub monotone: f64,
    pub bound: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            structure: 1e-10,
            balance: 1e-8,
            slack: 1e-10,
            telescoped: 1e-8,
            monotone: 0.0,
            bound: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    /// worst normalized value encountered
    pub worst: f64,
    pub worst_step: Option<usize>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub scale: f64,
    pub c_impl: f64,
    pub checks: Vec<CheckResult>,
}

impl Verdict {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }
}

pub const CHECK_STRUCTURE: &str = "structure_equality";
pub const CHECK_BALANCE: &str = "fluid_balance";
pub const CHECK_TELESCOPED: &str = "telescoped_identity";
pub const CHECK_MONOTONE: &str = "zero_forcing_monotone";
pub const CHECK_BOUND: &str = "uniform_bound";

fn worst_of(values: impl Iterator<Item = (usize, f64)>) -> (f64, Option<usize>) {
    values.fold((0.0, None), |(w, s), (k, v)| {
        if v > w || (s.is_none() && v >= w) {
            (v, Some(k))
        } else {
            (w, s)
        }
    })
}

impl EnergyLedger {
    pub fn new(initial_energy: f64) -> Self {
        Self {
            initial_energy,
            ..Self::default()
        }
    }

    pub fn push(&mut self, row: LedgerRow) {
        self.rows.push(row);
    }

    pub fn scale(&self) -> f64 {
        self.rows
            .iter()
            .map(LedgerRow::max_energy)
            .fold(self.initial_energy, f64::max)
            .max(1e-30)
    }

    pub fn c_impl(&self) -> f64 {
        self.rows.iter().map(|r| r.c_tilde).fold(0.0, f64::max)
    }

    pub fn zero_forcing(&self) -> bool {
        self.rows.iter().all(|r| r.p_in == 0.0 && r.p_out == 0.0)
    }

    /// `sqrt(Δt Σ ‖v^{n+1} − v^{n+1/2}‖²)`
    pub fn v_vstar_gap(&self) -> f64 {
        self.rows.iter().map(|r| r.dt * r.gap_squared).sum::<f64>().sqrt()
    }

    /// `E^{n+1} + Σ_{k≤n}(D + jumps − W) − E_0` after every step.
    pub fn telescoped_defects(&self) -> Vec<f64> {
        let mut acc = 0.0;
        self.rows
            .iter()
            .map(|r| {
                acc += r.dissipation + r.jumps_total() - r.pressure_work;
                r.energy_full + acc - self.initial_energy
            })
            .collect()
    }

    pub fn verify(&self, tol: &Tolerances) -> Verdict {
        let scale = self.scale();
        let rel = |x: f64| x / scale;
        let mut checks = Vec::new();

        let (w, s) = worst_of(self.rows.iter().map(|r| (r.step, rel(r.structure_residual))));
        checks.push(CheckResult {
            name: CHECK_STRUCTURE.into(),
            passed: w <= tol.structure,
            worst: w,
            worst_step: s,
            detail: format!("max relative residual {w:.3e} (tolerance {:.1e})", tol.structure),
        });

        let (wb, sb) = worst_of(self.rows.iter().map(|r| (r.step, rel(r.balance_residual))));
        let (ws, ss) = worst_of(self.rows.iter().map(|r| (r.step, -rel(r.inequality_slack))));
        let min_slack = self.rows.iter().map(|r| rel(r.inequality_slack)).fold(f64::INFINITY, f64::min);
        checks.push(CheckResult {
            name: CHECK_BALANCE.into(),
            passed: wb <= tol.balance && ws <= tol.slack,
            worst: wb,
            worst_step: if wb > tol.balance { sb } else if ws > tol.slack { ss } else { sb },
            detail: format!(
                "max relative balance residual {wb:.3e} (tolerance {:.1e}); min relative slack {:.3e} (floor {:.1e})",
                tol.balance,
                if self.rows.is_empty() { 0.0 } else { min_slack },
                -tol.slack
            ),
        });

        let defects = self.telescoped_defects();
        let (wt, st) = worst_of(
            self.rows
                .iter()
                .zip(&defects)
                .map(|(r, d)| (r.step, rel(d.abs()))),
        );
        checks.push(CheckResult {
            name: CHECK_TELESCOPED.into(),
            passed: wt <= tol.telescoped,
            worst: wt,
            worst_step: st,
            detail: format!("max relative defect {wt:.3e} (tolerance {:.1e})", tol.telescoped),
        });

        if self.zero_forcing() {
            let mut prev = self.initial_energy;
            let mut violations = 0usize;
            let mut worst = f64::NEG_INFINITY;
            let mut worst_step = None;
            for r in &self.rows {
                for e in [r.energy_half, r.energy_full] {
                    let inc = rel(e - prev);
                    if inc > worst {
                        worst = inc;
                        worst_step = Some(r.step);
                    }
                    if inc > tol.monotone {
                        violations += 1;
                    }
                    prev = e;
                }
            }
            checks.push(CheckResult {
                name: CHECK_MONOTONE.into(),
                passed: violations == 0,
                worst: if self.rows.is_empty() { 0.0 } else { worst },
                worst_step,
                detail: format!("{violations} increases; largest relative change {worst:.3e}"),
            });
        } else {
            checks.push(CheckResult {
                name: CHECK_MONOTONE.into(),
                passed: true,
                worst: 0.0,
                worst_step: None,
                detail: "not applicable: nonzero pressure data".into(),
            });
        }

        let c_impl = self.c_impl();
        let bound = self.initial_energy + c_impl * (self.inlet_l2_squared + self.outlet_l2_squared);
        let (we, se) = worst_of(self.rows.iter().map(|r| (r.step, rel(r.max_energy() - bound))));
        let excess = if self.rows.is_empty() { 0.0 } else { we };
        checks.push(CheckResult {
            name: CHECK_BOUND.into(),
            passed: excess <= tol.bound,
            worst: excess,
            worst_step: se,
            detail: format!(
                "max E = {:.6e}, bound E0 + C_impl (|P_in|^2 + |P_out|^2) = {bound:.6e}, C_impl = {c_impl:.6e}",
                self.rows.iter().map(LedgerRow::max_energy).fold(self.initial_energy, f64::max)
            ),
        });

        Verdict {
            scale,
            c_impl,
            checks,
        }
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let header = serde_json::json!({
            "initial_energy": self.initial_energy,
            "inlet_l2_squared": self.inlet_l2_squared,
            "outlet_l2_squared": self.outlet_l2_squared,
        });
        writeln!(w, "{header}")?;
        for r in &self.rows {
            writeln!(w, "{}", serde_json::to_string(r).map_err(std::io::Error::other)?)?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self, LedgerFormatError> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Header {
            initial_energy: f64,
            inlet_l2_squared: f64,
            outlet_l2_squared: f64,
        }
        let mut lines = r.lines().enumerate().filter(|(_, l)| {
            l.as_ref().map_or(true, |s| !s.trim().is_empty())
        });
        let (_, first) = lines.next().ok_or(LedgerFormatError::Empty)?;
        let h: Header = serde_json::from_str(&first?).map_err(|e| LedgerFormatError::Line(1, e.to_string()))?;
        let mut ledger = EnergyLedger {
            initial_energy: h.initial_energy,
            inlet_l2_squared: h.inlet_l2_squared,
            outlet_l2_squared: h.outlet_l2_squared,
            rows: Vec::new(),
        };
        for (k, line) in lines {
            let row = serde_json::from_str(&line?).map_err(|e| LedgerFormatError::Line(k + 1, e.to_string()))?;
            ledger.rows.push(row);
        }
        Ok(ledger)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<(), LedgerFormatError> {
        writeln!(w, "# initial_energy={}", self.initial_energy)?;
        writeln!(w, "# inlet_l2_squared={}", self.inlet_l2_squared)?;
        writeln!(w, "# outlet_l2_squared={}", self.outlet_l2_squared)?;
        let mut cw = csv::Writer::from_writer(w);
        for r in &self.rows {
            cw.serialize(r).map_err(|e| LedgerFormatError::Line(0, e.to_string()))?;
        }
        cw.flush()?;
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self, LedgerFormatError> {
        let mut meta = std::collections::BTreeMap::new();
        let mut body = String::new();
        for line in r.lines() {
            let line = line?;
            if let Some(rest) = line.strip_prefix('#') {
                if let Some((k, v)) = rest.trim().split_once('=') {
                    let v: f64 = v
                        .trim()
                        .parse()
                        .map_err(|_| LedgerFormatError::Line(0, format!("bad metadata value {v:?}")))?;
                    meta.insert(k.trim().to_string(), v);
                }
            } else {
                body.push_str(&line);
                body.push('\n');
            }
        }
        let get = |k: &str| meta.get(k).copied().ok_or_else(|| LedgerFormatError::Missing(k.to_string()));
        let mut ledger = EnergyLedger {
            initial_energy: get("initial_energy")?,
            inlet_l2_squared: get("inlet_l2_squared")?,
            outlet_l2_squared: get("outlet_l2_squared")?,
            rows: Vec::new(),
        };
        let mut rdr = csv::Reader::from_reader(body.as_bytes());
        for (k, rec) in rdr.deserialize().enumerate() {
            ledger
                .rows
                .push(rec.map_err(|e| LedgerFormatError::Line(k + 2, e.to_string()))?);
        }
        Ok(ledger)
    }

    /// Reads `.csv` or line-delimited JSON depending on the extension.
    pub fn read_path(path: &Path) -> Result<Self, LedgerFormatError> {
        let file = std::io::BufReader::new(std::fs::File::open(path)?);
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
            Self::read_csv(file)
        } else {
            Self::read_jsonl(file)
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LedgerFormatError {
    #[error("ledger is empty")]
    Empty,
    #[error("ledger line {0}: {1}")]
    Line(usize, String),
    #[error("ledger metadata {0} missing")]
    Missing(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
