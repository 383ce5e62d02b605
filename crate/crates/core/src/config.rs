//! TOML run configuration with a strict schema.
//!
//! Every section except `[time]` is optional and falls back to the arterial
//! benchmark values (CGS). Unknown keys are rejected, and all problems found
//! in one file are reported together.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::coupling::FluidParams;
use crate::driver::{InitialData, MeshConfig, RunConfig, WallMode};
use crate::error::{ConfigError, ValidationError, Violations};
use crate::linalg::{SolverKind, SolverOptions};
use crate::materials::ShellMaterial;
use crate::waveform::{PressureWaveform, Waveform};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSection {
    pub t_final: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometrySection {
    pub radius: f64,
    pub length: f64,
}

impl Default for GeometrySection {
    fn default() -> Self {
        Self {
            radius: 0.5,
            length: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeshSection {
    pub nz: usize,
    pub nr: usize,
    /// defaults to `nz`
    pub shell_elements: Option<usize>,
}

impl Default for MeshSection {
    fn default() -> Self {
        Self {
            nz: 64,
            nr: 16,
            shell_elements: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShellSection {
    pub youngs_modulus: f64,
    pub poisson_ratio: f64,
    /// defaults to 2250 in viscoelastic mode and 0 in elastic mode
    pub viscous_modulus: Option<f64>,
    pub viscous_poisson: f64,
    pub thickness: f64,
    pub density: f64,
}

impl Default for ShellSection {
    fn default() -> Self {
        let m = ShellMaterial::benchmark();
        Self {
            youngs_modulus: m.youngs_modulus,
            poisson_ratio: m.poisson_ratio,
            viscous_modulus: None,
            viscous_poisson: m.viscous_poisson,
            thickness: m.thickness,
            density: m.density,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FluidSection {
    pub density: f64,
    pub viscosity: f64,
}

impl Default for FluidSection {
    fn default() -> Self {
        let f = FluidParams::blood();
        Self {
            density: f.density,
            viscosity: f.viscosity,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverChoice {
    Direct,
    Gmres,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub kind: SolverChoice,
    pub tolerance: f64,
    pub restart: usize,
    pub max_iterations: usize,
    /// wall-contact threshold on `min(R + η)`, relative to `R`
    pub contact_threshold: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            kind: SolverChoice::Direct,
            tolerance: 1e-12,
            restart: 50,
            max_iterations: 5000,
            contact_threshold: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub directory: Option<PathBuf>,
    /// keep a field frame every this many steps; 0 keeps only the first and last
    pub every: usize,
    pub vtk: bool,
    pub csv: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            directory: None,
            every: 0,
            vtk: true,
            csv: true,
        }
    }
}

/// Waveform as written in a configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WaveformSpec {
    #[default]
    Zero,
    Constant {
        value: f64,
    },
    Sine {
        amplitude: f64,
        angular_frequency: f64,
        #[serde(default)]
        phase: f64,
        #[serde(default)]
        offset: f64,
    },
    Pulse {
        amplitude: f64,
        duration: f64,
    },
    /// two-column `time,value` file, relative to the configuration file
    Csv {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigFile {
    pub time: TimeSection,
    #[serde(default)]
    pub mode: WallMode,
    #[serde(default)]
    pub geometry: GeometrySection,
    #[serde(default)]
    pub mesh: MeshSection,
    #[serde(default)]
    pub shell: ShellSection,
    #[serde(default)]
    pub fluid: FluidSection,
    #[serde(default)]
    pub inlet: WaveformSpec,
    #[serde(default)]
    pub outlet: WaveformSpec,
    #[serde(default)]
    pub initial: InitialData,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub output: OutputSection,
}

const WAVEFORM_KEYS: &[&str] = &[
    "kind",
    "value",
    "amplitude",
    "angular_frequency",
    "phase",
    "offset",
    "duration",
    "path",
];

fn section_keys(section: &str) -> Option<&'static [&'static str]> {
    Some(match section {
        "time" => &["t_final", "steps"],
        "geometry" => &["radius", "length"],
        "mesh" => &["nz", "nr", "shell_elements"],
        "shell" => &[
            "youngs_modulus",
            "poisson_ratio",
            "viscous_modulus",
            "viscous_poisson",
            "thickness",
            "density",
        ],
        "fluid" => &["density", "viscosity"],
        "inlet" | "outlet" => WAVEFORM_KEYS,
        "initial" => &["eta_amplitude", "velocity_amplitude", "axial_velocity"],
        "solver" => &["kind", "tolerance", "restart", "max_iterations", "contact_threshold"],
        "output" => &["directory", "every", "vtk", "csv"],
        _ => return None,
    })
}

fn unknown_keys(table: &toml::Table, v: &mut Violations) {
    for (key, value) in table {
        if key == "mode" {
            continue;
        }
        match (section_keys(key), value) {
            (None, _) => v.push(key.clone(), "unknown key"),
            (Some(allowed), toml::Value::Table(t)) => {
                for k in t.keys() {
                    if !allowed.contains(&k.as_str()) {
                        v.push(format!("{key}.{k}"), "unknown key");
                    }
                }
            }
            (Some(_), _) => v.push(key.clone(), "expected a table"),
        }
    }
}

/// A validated configuration plus the output settings the CLI uses.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedConfig {
    pub run: RunConfig,
    pub output: OutputSection,
    pub file: RunConfigFile,
}

pub fn parse_config(path: &Path) -> Result<ParsedConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_config_str(&text, path.parent().unwrap_or_else(|| Path::new(".")))
}

/// Parses configuration text; relative paths resolve against `base_dir`.
pub fn parse_config_str(text: &str, base_dir: &Path) -> Result<ParsedConfig, ConfigError> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
    let mut v = Violations::new();
    unknown_keys(&table, &mut v);
    if !table.contains_key("time") {
        v.push("time", "missing section (t_final and steps are required)");
    }
    let file: RunConfigFile = match toml::Value::Table(table).try_into() {
        Ok(f) => f,
        Err(e) => {
            let e: toml::de::Error = e;
            if v.is_empty() {
                v.push("config", e.message().to_string());
            }
            return Err(v.into_result().unwrap_err().into());
        }
    };
    v.into_result()?;
    let run = to_run_config(&file, base_dir)?;
    Ok(ParsedConfig {
        run,
        output: file.output.clone(),
        file,
    })
}

/// Turns a waveform spec into a waveform, reading CSV files relative to `base_dir`.
pub fn ingest_waveform(spec: &WaveformSpec, base_dir: &Path) -> Result<Waveform, ConfigError> {
    let w = match spec {
        WaveformSpec::Zero => Waveform::Zero,
        WaveformSpec::Constant { value } => Waveform::Constant { value: *value },
        WaveformSpec::Sine {
            amplitude,
            angular_frequency,
            phase,
            offset,
        } => Waveform::Sine {
            amplitude: *amplitude,
            angular_frequency: *angular_frequency,
            phase: *phase,
            offset: *offset,
        },
        WaveformSpec::Pulse { amplitude, duration } => Waveform::Pulse {
            amplitude: *amplitude,
            duration: *duration,
        },
        WaveformSpec::Csv { path } => {
            let p = if path.is_absolute() {
                path.clone()
            } else {
                base_dir.join(path)
            };
            return Waveform::from_csv_path(&p);
        }
    };
    w.validate()?;
    Ok(w)
}

fn to_run_config(f: &RunConfigFile, base_dir: &Path) -> Result<RunConfig, ConfigError> {
    let mut v = Violations::new();
    let elastic = f.mode == WallMode::Elastic;
    let viscous_modulus = match (f.mode, f.shell.viscous_modulus) {
        (WallMode::Elastic, Some(ev)) if ev > 0.0 => {
            v.push(
                "shell.viscous_modulus",
                format!("mode = \"elastic\" contradicts viscous_modulus = {ev}; drop it or set it to 0"),
            );
            0.0
        }
        (_, Some(ev)) => ev,
        (_, None) if elastic => 0.0,
        (_, None) => ShellMaterial::benchmark().viscous_modulus,
    };
    let material = ShellMaterial {
        youngs_modulus: f.shell.youngs_modulus,
        poisson_ratio: f.shell.poisson_ratio,
        viscous_modulus,
        viscous_poisson: f.shell.viscous_poisson,
        thickness: f.shell.thickness,
        reference_radius: f.geometry.radius,
        density: f.shell.density,
        length: f.geometry.length,
    };
    let solver = SolverOptions {
        kind: match f.solver.kind {
            SolverChoice::Direct => SolverKind::Direct,
            SolverChoice::Gmres => SolverKind::Gmres {
                restart: f.solver.restart,
                max_iterations: f.solver.max_iterations,
            },
        },
        tolerance: f.solver.tolerance,
    };
    let inlet = ingest_waveform(&f.inlet, base_dir).map_err(|e| ("inlet", e));
    let outlet = ingest_waveform(&f.outlet, base_dir).map_err(|e| ("outlet", e));
    let mut waveform = PressureWaveform::default();
    for (slot, r) in [(&mut waveform.inlet, inlet), (&mut waveform.outlet, outlet)] {
        match r {
            Ok(w) => *slot = w,
            Err((name, e)) => v.push(name, e.to_string()),
        }
    }
    let run = RunConfig {
        t_final: f.time.t_final,
        steps: f.time.steps,
        mesh: MeshConfig {
            nz: f.mesh.nz,
            nr: f.mesh.nr,
            shell_elements: f.mesh.shell_elements.unwrap_or(f.mesh.nz),
        },
        material,
        fluid: FluidParams {
            density: f.fluid.density,
            viscosity: f.fluid.viscosity,
        },
        waveform,
        mode: f.mode,
        contact_threshold: f.solver.contact_threshold,
        solver,
        output_every: f.output.every,
        initial: f.initial,
        compatibility_tolerance: 1e-10,
    };
    match run.validate() {
        Ok(()) => {}
        Err(ConfigError::Validation(e)) => v.extend(e),
        Err(e) => v.push("config", e.to_string()),
    }
    v.into_result().map_err(|e: ValidationError| e)?;
    Ok(run)
}
