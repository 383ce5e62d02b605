//! Field output: legacy VTK structured grids and plain CSV tables.
//!
//! Numbers are written with Rust's shortest round-trip formatting, so two runs
//! that produce the same bits produce the same files.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use crate::driver::Frame;
use crate::fluid::FluidMesh;
use crate::shell::{ShellMesh, ShellProfile};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExportOptions {
    pub vtk: bool,
    pub csv: bool,
}

impl Default for ExportOptions {
    fn default() -> Self {
        Self { vtk: true, csv: true }
    }
}

/// Meshes and radius needed to place a frame in physical space.
#[derive(Debug, Clone, Copy)]
pub struct Geometry<'a> {
    pub fluid: &'a FluidMesh,
    pub shell: &'a ShellMesh,
    pub radius: f64,
}

impl Geometry<'_> {
    /// `η` at each velocity column; zero for a rigid wall.
    fn eta_at_columns(&self, eta_free: &[f64]) -> Vec<f64> {
        let cols = self.fluid.velocity_columns();
        if eta_free.is_empty() {
            return vec![0.0; cols];
        }
        let profile = ShellProfile::from_free(self.shell, eta_free);
        (0..cols)
            .map(|i| self.shell.evaluate(&profile, self.fluid.velocity_z(i)).0)
            .collect()
    }
}

/// Physical positions `A_η(z̃, r̃)` of the velocity nodes, in velocity-node
/// order, for `η` given at each velocity column.
pub fn deformed_points(mesh: &FluidMesh, radius: f64, eta_at_columns: &[f64]) -> Vec<[f64; 2]> {
    let mut out = vec![[0.0; 2]; mesh.velocity_node_count()];
    for i in 0..mesh.velocity_columns() {
        for j in 0..mesh.velocity_rows() {
            out[mesh.velocity_node(i, j)] = [mesh.velocity_z(i), (radius + eta_at_columns[i]) * mesh.velocity_r(j)];
        }
    }
    out
}

/// Shortest round-trip form; `-0` is written as `0`.
fn num(x: f64) -> String {
    format!("{:e}", x + 0.0)
}

/// Q1 pressure interpolated to every velocity node, in velocity-node order.
pub fn pressure_at_velocity_nodes(mesh: &FluidMesh, p: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; mesh.velocity_node_count()];
    for i in 0..mesh.velocity_columns() {
        for j in 0..mesh.velocity_rows() {
            let (iz, jr) = (i / 2, j / 2);
            let zs: &[(usize, f64)] = if i % 2 == 0 { &[(0, 1.0)] } else { &[(0, 0.5), (1, 0.5)] };
            let rs: &[(usize, f64)] = if j % 2 == 0 { &[(0, 1.0)] } else { &[(0, 0.5), (1, 0.5)] };
            let mut s = 0.0;
            for &(a, wa) in zs {
                for &(b, wb) in rs {
                    s += wa * wb * p[mesh.pressure_node(iz + a, jr + b)];
                }
            }
            out[mesh.velocity_node(i, j)] = s;
        }
    }
    out
}

/// Which domain the grid points are placed on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Grid {
    /// `Ω̃ = (0, L) × (0, R)` scaled by `R`
    Reference,
    /// `A_η(Ω̃)`
    Deformed,
}

/// Legacy ASCII VTK structured grid with velocity, pressure and the
/// reference coordinates as point data.
pub fn fluid_vtk(geo: &Geometry, frame: &Frame, grid: Grid) -> String {
    let mesh = geo.fluid;
    let (nx, ny) = (mesh.velocity_columns(), mesh.velocity_rows());
    let eta = match grid {
        Grid::Deformed => geo.eta_at_columns(&frame.eta),
        Grid::Reference => vec![0.0; nx],
    };
    let x = deformed_points(mesh, geo.radius, &eta);
    let p = pressure_at_velocity_nodes(mesh, &frame.p);
    let mut s = String::new();
    let _ = writeln!(s, "# vtk DataFile Version 3.0");
    let _ = writeln!(s, "fluid step {} t={}", frame.step, num(frame.time));
    let _ = writeln!(s, "ASCII\nDATASET STRUCTURED_GRID");
    let _ = writeln!(s, "DIMENSIONS {nx} {ny} 1");
    let _ = writeln!(s, "POINTS {} double", nx * ny);
    // VTK orders points with x fastest
    for j in 0..ny {
        for i in 0..nx {
            let [z, r] = x[mesh.velocity_node(i, j)];
            let _ = writeln!(s, "{} {} 0", num(z), num(r));
        }
    }
    let _ = writeln!(s, "POINT_DATA {}", nx * ny);
    let _ = writeln!(s, "VECTORS velocity double");
    for j in 0..ny {
        for i in 0..nx {
            let n = mesh.velocity_node(i, j);
            let _ = writeln!(s, "{} {} 0", num(frame.u[2 * n]), num(frame.u[2 * n + 1]));
        }
    }
    let _ = writeln!(s, "SCALARS pressure double 1\nLOOKUP_TABLE default");
    for j in 0..ny {
        for i in 0..nx {
            let _ = writeln!(s, "{}", num(p[mesh.velocity_node(i, j)]));
        }
    }
    let _ = writeln!(s, "VECTORS reference_position double");
    for j in 0..ny {
        for i in 0..nx {
            let _ = writeln!(s, "{} {} 0", num(mesh.velocity_z(i)), num(geo.radius * mesh.velocity_r(j)));
        }
    }
    s
}

/// One row per velocity node: reference and physical coordinates, `u`, `p`.
pub fn fluid_csv(geo: &Geometry, frame: &Frame) -> String {
    let mesh = geo.fluid;
    let x = deformed_points(mesh, geo.radius, &geo.eta_at_columns(&frame.eta));
    let p = pressure_at_velocity_nodes(mesh, &frame.p);
    let mut s = String::from("z_ref,r_ref,z,r,u_z,u_r,p\n");
    for i in 0..mesh.velocity_columns() {
        for j in 0..mesh.velocity_rows() {
            let n = mesh.velocity_node(i, j);
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                num(mesh.velocity_z(i)),
                num(mesh.velocity_r(j)),
                num(x[n][0]),
                num(x[n][1]),
                num(frame.u[2 * n]),
                num(frame.u[2 * n + 1]),
                num(p[n])
            );
        }
    }
    s
}

/// One row per shell node: `η`, `∂zη`, `v` and `v*`.
pub fn shell_csv(geo: &Geometry, frame: &Frame) -> String {
    let mut s = String::from("z,eta,eta_slope,v,v_slope,v_star,v_star_slope\n");
    if frame.eta.is_empty() {
        return s;
    }
    let mesh = geo.shell;
    let eta = ShellProfile::from_free(mesh, &frame.eta);
    let v = ShellProfile::from_free(mesh, &frame.v);
    let vs = ShellProfile::from_free(mesh, &frame.v_star);
    for (k, z) in mesh.nodes().iter().enumerate() {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            num(*z),
            num(eta.values[k]),
            num(eta.slopes[k]),
            num(v.values[k]),
            num(v.slopes[k]),
            num(vs.values[k]),
            num(vs.slopes[k])
        );
    }
    s
}

/// Writes every requested file for one frame and returns the paths.
pub fn export_frame(dir: &Path, geo: &Geometry, frame: &Frame, opts: ExportOptions) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut put = |name: String, body: String| -> io::Result<()> {
        let path = dir.join(name);
        fs::write(&path, body)?;
        written.push(path);
        Ok(())
    };
    if opts.vtk {
        put(format!("fluid_{:06}.vtk", frame.step), fluid_vtk(geo, frame, Grid::Deformed))?;
        put(format!("fluid_ref_{:06}.vtk", frame.step), fluid_vtk(geo, frame, Grid::Reference))?;
    }
    if opts.csv {
        put(format!("fluid_{:06}.csv", frame.step), fluid_csv(geo, frame))?;
        put(format!("shell_{:06}.csv", frame.step), shell_csv(geo, frame))?;
    }
    Ok(written)
}

/// Exports all frames.
pub fn export_fields(dir: &Path, geo: &Geometry, frames: &[Frame], opts: ExportOptions) -> io::Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for f in frames {
        out.extend(export_frame(dir, geo, f, opts)?);
    }
    Ok(out)
}
