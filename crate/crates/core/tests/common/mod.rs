#![allow(dead_code)]

pub mod oracle;

use fsi_split::ale::{build_snapshot, AleSnapshot, DomainVelocityField};
use fsi_split::coupling::build_coupling;
use fsi_split::fluid::{
    assemble_advection, assemble_divergence, assemble_pressure_forcing, assemble_robin_mass, assemble_viscous,
    assemble_weighted_mass, FluidMesh,
};
use fsi_split::materials::{derive_coefficients, ShellMaterial};
use fsi_split::shell::{assemble_as, assemble_as_prime, assemble_form, assemble_mass, ShellMesh};
use nalgebra::DMatrix;

use oracle::{relative_difference, to_dmatrix, FluidOracle, HermiteField};

pub const ORACLE_TOLERANCE: f64 = 1e-12;

/// Deterministic scattered values in `[-1, 1]`.
pub fn wiggle(n: usize, seed: f64) -> Vec<f64> {
    (0..n).map(|k| (1.37 * k as f64 + seed).sin()).collect()
}

/// Named worst relative differences between library assembly and oracle.
pub struct OracleReport {
    pub entries: Vec<(String, f64)>,
}

impl OracleReport {
    pub fn worst(&self) -> f64 {
        self.entries.iter().map(|e| e.1).fold(0.0, f64::max)
    }

    pub fn failures(&self, tol: f64) -> Vec<String> {
        self.entries
            .iter()
            .filter(|e| !(e.1 <= tol))
            .map(|e| format!("{} ({:.2e})", e.0, e.1))
            .collect()
    }
}

fn snapshot_from_fn(mesh: &FluidMesh, radius: f64, eta: &dyn Fn(f64) -> (f64, f64)) -> AleSnapshot {
    let rule = oracle::gauss_rule(3);
    let mut s = AleSnapshot::flat(mesh, radius);
    for cz in 0..mesh.nz() {
        let z0 = mesh.z_vertices()[cz];
        for (q, &(x, _)) in rule.iter().enumerate() {
            let (e, d) = eta(z0 + x * mesh.cell_width(cz));
            s.eta_at_quad[cz * 3 + q] = e;
            s.deta_dz_at_quad[cz * 3 + q] = d;
            s.jacobian_at_quad[cz * 3 + q] = radius + e;
        }
    }
    s
}

fn domain_velocity_from_fn(mesh: &FluidMesh, v: &dyn Fn(f64) -> f64) -> DomainVelocityField {
    let rule = oracle::gauss_rule(3);
    let mut out = DomainVelocityField::zero(mesh);
    for cz in 0..mesh.nz() {
        let z0 = mesh.z_vertices()[cz];
        for (q, &(x, _)) in rule.iter().enumerate() {
            out.v_half_at_quad[cz * 3 + q] = v(z0 + x * mesh.cell_width(cz));
        }
    }
    out
}

fn forcing_oracle(o: &FluidOracle, p_in: f64, p_out: f64) -> Vec<f64> {
    let mut f = vec![0.0; o.velocity_dofs()];
    let rows = 2 * o.nr + 1;
    let hr = 1.0 / o.nr as f64;
    let last = 2 * o.nz;
    for cr in 0..o.nr {
        let r0 = cr as f64 * hr;
        let nodes = [r0, r0 + 0.5 * hr, r0 + hr];
        for (x, w) in oracle::gauss_rule(3) {
            let r = r0 + x * hr;
            for b in 0..3 {
                let phi = oracle::lagrange(&nodes, b, r).0;
                let j = 2 * cr + b;
                f[2 * j] += o.radius * p_in * w * hr * phi;
                f[2 * (last * rows + j)] -= o.radius * p_out * w * hr * phi;
            }
        }
    }
    f
}

fn compare_fluid(
    label: &str,
    mesh: &FluidMesh,
    snap: &AleSnapshot,
    dv: &DomainVelocityField,
    o: &FluidOracle,
    out: &mut Vec<(String, f64)>,
) {
    let m = o.assemble();
    let u = o.u_advect;
    let pairs: [(&str, DMatrix<f64>, &DMatrix<f64>); 5] = [
        ("mass", to_dmatrix(&assemble_weighted_mass(mesh, snap)), &m.mass),
        ("robin", to_dmatrix(&assemble_robin_mass(mesh, dv)), &m.robin),
        ("viscous", to_dmatrix(&assemble_viscous(mesh, snap, o.mu)), &m.viscous),
        ("advection", to_dmatrix(&assemble_advection(mesh, snap, u, dv)), &m.advection),
        ("divergence", to_dmatrix(&assemble_divergence(mesh, snap)), &m.divergence),
    ];
    for (name, lib, reference) in pairs {
        out.push((format!("{label} {name}"), relative_difference(&lib, reference)));
    }
    let f = assemble_pressure_forcing(mesh, 1.7, -0.4, o.radius);
    let g = forcing_oracle(o, 1.7, -0.4);
    let scale = g.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let diff = f.iter().zip(&g).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    out.push((format!("{label} forcing"), diff / scale));
}

/// Runs every operator oracle on the 1-cell and 4-cell meshes.
pub fn assembly_oracle_report() -> OracleReport {
    let mut entries = Vec::new();
    let radius = 0.5;
    let mu = 0.035;

    // one cell, analytic wall data
    {
        let length = 1.3;
        let mesh = FluidMesh::uniform(length, 1, 1);
        let eta = |z: f64| (0.05 * (2.0 * z).sin() + 0.02 * z * z, 0.1 * (2.0 * z).cos() + 0.04 * z);
        let v = |z: f64| 0.3 * z.cos();
        let u = wiggle(mesh.velocity_dof_count(), 0.4);
        let snap = snapshot_from_fn(&mesh, radius, &eta);
        let dv = domain_velocity_from_fn(&mesh, &v);
        let o = FluidOracle {
            length,
            nz: 1,
            nr: 1,
            radius,
            mu,
            eta: &eta,
            v_half: &v,
            u_advect: &u,
        };
        compare_fluid("1-cell", &mesh, &snap, &dv, &o, &mut entries);
    }

    // four cells (2x2 and 4x1), wall data from a Hermite shell field
    for (nz, nr) in [(2usize, 2usize), (4, 1)] {
        let length = 2.0;
        let mesh = FluidMesh::uniform(length, nz, nr);
        let shell = ShellMesh::uniform(length, nz);
        let eta_free: Vec<f64> = wiggle(shell.free_dof_count(), 1.1).iter().map(|x| 0.05 * x).collect();
        let v_free: Vec<f64> = wiggle(shell.free_dof_count(), 2.3).iter().map(|x| 0.7 * x).collect();
        let snap = build_snapshot(&shell, &mesh, &eta_free, radius, 1e-6).unwrap();
        let dv = DomainVelocityField::from_shell(&shell, &mesh, &v_free);
        let eta_field = HermiteField {
            length,
            elements: nz,
            free: eta_free,
        };
        let v_field = HermiteField {
            length,
            elements: nz,
            free: v_free,
        };
        let eta = |z: f64| {
            let e = eta_field.eval(z);
            (e[0], e[1])
        };
        let v = |z: f64| v_field.eval(z)[0];
        let u = wiggle(mesh.velocity_dof_count(), 0.9);
        let o = FluidOracle {
            length,
            nz,
            nr,
            radius,
            mu,
            eta: &eta,
            v_half: &v,
            u_advect: &u,
        };
        compare_fluid(&format!("{nz}x{nr}-cell"), &mesh, &snap, &dv, &o, &mut entries);

        // trace operator: Hermite values at top vertices and edge midpoints
        let t = build_coupling(&shell, &mesh).unwrap();
        let nd = shell.free_dof_count();
        let mut worst = 0.0f64;
        for k in 0..nd {
            let mut unit = vec![0.0; nd];
            unit[k] = 1.0;
            let field = HermiteField {
                length,
                elements: nz,
                free: unit.clone(),
            };
            let trace = t.apply(&unit);
            for (i, tv) in trace.iter().enumerate() {
                worst = worst.max((tv - field.eval(mesh.velocity_z(i))[0]).abs());
            }
        }
        entries.push((format!("{nz}x{nr}-cell trace"), worst));
    }

    // shell operators
    let material = ShellMaterial::benchmark();
    let c = derive_coefficients(&material).unwrap();
    let k = oracle::shell_coefficients(
        material.youngs_modulus,
        material.poisson_ratio,
        material.viscous_modulus,
        material.viscous_poisson,
        material.thickness,
        material.reference_radius,
    );
    for elements in [2usize, 4] {
        let length = 5.0;
        let mesh = ShellMesh::uniform(length, elements);
        let [g0, g1, g2] = oracle::shell_grams(length, elements);
        let a_s = &g0 * k[0] + &g1 * k[1] + &g2 * k[2];
        let a_sp = &g0 * k[3] + &g1 * k[4] + &g2 * k[5];
        let label = format!("{elements}-element shell");
        entries.push((format!("{label} mass"), relative_difference(&to_dmatrix(&assemble_mass(&mesh)), &g0)));
        entries.push((
            format!("{label} slope gram"),
            relative_difference(&to_dmatrix(&assemble_form(&mesh, 0.0, 1.0, 0.0)), &g1),
        ));
        entries.push((
            format!("{label} curvature gram"),
            relative_difference(&to_dmatrix(&assemble_form(&mesh, 0.0, 0.0, 1.0)), &g2),
        ));
        entries.push((format!("{label} a_S"), relative_difference(&to_dmatrix(&assemble_as(&mesh, &c)), &a_s)));
        entries.push((
            format!("{label} a'_S"),
            relative_difference(&to_dmatrix(&assemble_as_prime(&mesh, &c)), &a_sp),
        ));
    }
    OracleReport { entries }
}
