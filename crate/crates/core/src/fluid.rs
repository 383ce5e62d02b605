//! Taylor–Hood (biquadratic velocity, bilinear pressure) discretization of the
//! fluid sub-problem on the reference domain `(0, L) × (0, 1)`.
//!
//! Velocity DOFs are interleaved per node, `2 * node + c` with `c = 0` the
//! axial component `u_z` and `c = 1` the radial component `u_r`. Matrices are
//! assembled on the full velocity space; essential conditions are applied by
//! elimination in `coupling`.

use rayon::prelude::*;

use crate::ale::{AlePoint, AleSnapshot, DomainVelocityField};
use crate::linalg::{SparseMatrix, TripletBuilder};
use crate::quadrature::{gauss_legendre, FLUID_POINTS_1D};

const NQ: usize = FLUID_POINTS_1D;
const NV: usize = 9;
const NP: usize = 4;
const NL: usize = 2 * NV;

/// Structured `nz × nr` grid of the reference domain. The `z` vertices may be
/// nonuniform (they follow the shell nodes); rows are uniform in `r̃`.
#[derive(Debug, Clone, PartialEq)]
pub struct FluidMesh {
    z_vertices: Vec<f64>,
    nr: usize,
}

impl FluidMesh {
    pub fn uniform(length: f64, nz: usize, nr: usize) -> Self {
        let z = (0..=nz).map(|i| length * i as f64 / nz as f64).collect();
        Self::from_z_vertices(z, nr)
    }

    pub fn from_z_vertices(z_vertices: Vec<f64>, nr: usize) -> Self {
        assert!(z_vertices.len() >= 2 && nr >= 1);
        Self { z_vertices, nr }
    }

    pub fn nz(&self) -> usize {
        self.z_vertices.len() - 1
    }

    pub fn nr(&self) -> usize {
        self.nr
    }

    pub fn length(&self) -> f64 {
        *self.z_vertices.last().unwrap()
    }

    pub fn z_vertices(&self) -> &[f64] {
        &self.z_vertices
    }

    pub fn cell_width(&self, cz: usize) -> f64 {
        self.z_vertices[cz + 1] - self.z_vertices[cz]
    }

    pub fn cell_height(&self) -> f64 {
        1.0 / self.nr as f64
    }

    pub fn cell_count(&self) -> usize {
        self.nz() * self.nr
    }

    pub fn velocity_columns(&self) -> usize {
        2 * self.nz() + 1
    }

    pub fn velocity_rows(&self) -> usize {
        2 * self.nr + 1
    }

    pub fn top_row(&self) -> usize {
        2 * self.nr
    }

    pub fn velocity_node(&self, i: usize, j: usize) -> usize {
        i * self.velocity_rows() + j
    }

    pub fn velocity_node_count(&self) -> usize {
        self.velocity_columns() * self.velocity_rows()
    }

    pub fn velocity_dof_count(&self) -> usize {
        2 * self.velocity_node_count()
    }

    pub fn velocity_z(&self, i: usize) -> f64 {
        if i.is_multiple_of(2) {
            self.z_vertices[i / 2]
        } else {
            0.5 * (self.z_vertices[i / 2] + self.z_vertices[i / 2 + 1])
        }
    }

    pub fn velocity_r(&self, j: usize) -> f64 {
        j as f64 / (2 * self.nr) as f64
    }

    pub fn pressure_node(&self, i: usize, j: usize) -> usize {
        i * (self.nr + 1) + j
    }

    pub fn pressure_node_count(&self) -> usize {
        (self.nz() + 1) * (self.nr + 1)
    }

    /// Velocity nodes of a cell, local index `a * 3 + b` with `a` along `z`.
    pub fn cell_velocity_nodes(&self, cz: usize, cr: usize) -> [usize; NV] {
        let mut out = [0; NV];
        for a in 0..3 {
            for b in 0..3 {
                out[a * 3 + b] = self.velocity_node(2 * cz + a, 2 * cr + b);
            }
        }
        out
    }

    /// Pressure nodes of a cell, local index `a * 2 + b`.
    pub fn cell_pressure_nodes(&self, cz: usize, cr: usize) -> [usize; NP] {
        let mut out = [0; NP];
        for a in 0..2 {
            for b in 0..2 {
                out[a * 2 + b] = self.pressure_node(cz + a, cr + b);
            }
        }
        out
    }

    fn cells(&self) -> impl IndexedParallelIterator<Item = (usize, usize)> + '_ {
        let nr = self.nr;
        (0..self.cell_count()).into_par_iter().map(move |c| (c / nr, c % nr))
    }
}

/// Velocity and pressure DOF vectors.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FluidState {
    pub u: Vec<f64>,
    pub p: Vec<f64>,
}

impl FluidState {
    pub fn zeros(mesh: &FluidMesh) -> Self {
        Self {
            u: vec![0.0; mesh.velocity_dof_count()],
            p: vec![0.0; mesh.pressure_node_count()],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.u.iter().chain(&self.p).all(|x| x.is_finite())
    }
}

/// 1D quadratic Lagrange basis on nodes `0, ½, 1` and its derivative.
pub fn quadratic_basis(x: f64) -> ([f64; 3], [f64; 3]) {
    (
        [
            (1.0 - x) * (1.0 - 2.0 * x),
            4.0 * x * (1.0 - x),
            x * (2.0 * x - 1.0),
        ],
        [4.0 * x - 3.0, 4.0 - 8.0 * x, 4.0 * x - 1.0],
    )
}

/// Basis data at one quadrature point of one cell.
struct QuadPoint {
    /// `w_z w_r h_z h_r`
    weight: f64,
    /// index into the snapshot's per-column abscissae
    qz: usize,
    r: f64,
    phi: [f64; NV],
    dphi_dz: [f64; NV],
    dphi_dr: [f64; NV],
    psi: [f64; NP],
}

fn cell_quadrature(mesh: &FluidMesh, cz: usize, cr: usize) -> Vec<QuadPoint> {
    let rule = gauss_legendre(NQ);
    let hz = mesh.cell_width(cz);
    let hr = mesh.cell_height();
    let r0 = cr as f64 * hr;
    let mut out = Vec::with_capacity(NQ * NQ);
    for (qz, (xz, wz)) in rule.iter().enumerate() {
        let (lz, dlz) = quadratic_basis(xz);
        for (xr, wr) in rule.iter() {
            let (lr, dlr) = quadratic_basis(xr);
            let mut phi = [0.0; NV];
            let mut dphi_dz = [0.0; NV];
            let mut dphi_dr = [0.0; NV];
            for a in 0..3 {
                for b in 0..3 {
                    phi[a * 3 + b] = lz[a] * lr[b];
                    dphi_dz[a * 3 + b] = dlz[a] * lr[b] / hz;
                    dphi_dr[a * 3 + b] = lz[a] * dlr[b] / hr;
                }
            }
            let pz = [1.0 - xz, xz];
            let pr = [1.0 - xr, xr];
            let mut psi = [0.0; NP];
            for a in 0..2 {
                for b in 0..2 {
                    psi[a * 2 + b] = pz[a] * pr[b];
                }
            }
            out.push(QuadPoint {
                weight: wz * wr * hz * hr,
                qz,
                r: r0 + xr * hr,
                phi,
                dphi_dz,
                dphi_dr,
                psi,
            });
        }
    }
    out
}

/// Assembles a velocity–velocity matrix from per-cell local matrices in local
/// DOF order `2 * k + c`. Local work runs in parallel; the scatter is
/// sequential in cell order so the result does not depend on worker count.
fn assemble_velocity<F>(mesh: &FluidMesh, symmetric: bool, local: F) -> SparseMatrix
where
    F: Fn(usize, usize, &[QuadPoint]) -> [[f64; NL]; NL] + Sync,
{
    let locals: Vec<[[f64; NL]; NL]> = mesh
        .cells()
        .map(|(cz, cr)| local(cz, cr, &cell_quadrature(mesh, cz, cr)))
        .collect();
    let n = mesh.velocity_dof_count();
    let mut builder = TripletBuilder::with_capacity(n, n, locals.len() * NL * NL);
    for (c, k) in locals.iter().enumerate() {
        let nodes = mesh.cell_velocity_nodes(c / mesh.nr, c % mesh.nr);
        for a in 0..NL {
            let i = 2 * nodes[a / 2] + a % 2;
            for b in 0..NL {
                if k[a][b] != 0.0 || a == b {
                    builder.push(i, 2 * nodes[b / 2] + b % 2, k[a][b]);
                }
            }
        }
    }
    builder.build().with_symmetry(symmetric)
}

/// `∫ w(z) φ_a φ_b δ_cd` with `w` given per column quadrature abscissa.
pub fn assemble_z_weighted_mass(mesh: &FluidMesh, weight_at_quad: &[f64]) -> SparseMatrix {
    assert_eq!(weight_at_quad.len(), mesh.nz() * NQ);
    assemble_velocity(mesh, true, |cz, _cr, quad| {
        let mut k = [[0.0; NL]; NL];
        for q in quad {
            let w = q.weight * weight_at_quad[cz * NQ + q.qz];
            for a in 0..NV {
                for b in 0..NV {
                    let m = w * q.phi[a] * q.phi[b];
                    k[2 * a][2 * b] += m;
                    k[2 * a + 1][2 * b + 1] += m;
                }
            }
        }
        k
    })
}

/// `M_f(η) = ∫ (R + η) φ·φ`
pub fn assemble_weighted_mass(mesh: &FluidMesh, snapshot: &AleSnapshot) -> SparseMatrix {
    assemble_z_weighted_mass(mesh, &snapshot.jacobian_at_quad)
}

/// `S(v) = ∫ v φ·φ`, no Jacobian weight.
pub fn assemble_robin_mass(mesh: &FluidMesh, v_half: &DomainVelocityField) -> SparseMatrix {
    assemble_z_weighted_mass(mesh, &v_half.v_half_at_quad)
}

/// Unweighted velocity mass `∫ φ·φ`.
pub fn assemble_velocity_mass(mesh: &FluidMesh) -> SparseMatrix {
    assemble_z_weighted_mass(mesh, &vec![1.0; mesh.nz() * NQ])
}

fn transformed_basis(p: &AlePoint, q: &QuadPoint) -> [[f64; 2]; NV] {
    let mut g = [[0.0; 2]; NV];
    for a in 0..NV {
        g[a] = p.transform([q.dphi_dz[a], q.dphi_dr[a]]);
    }
    g
}

/// `K(η) = 2μ ∫ (R + η) D^η(φ) : D^η(φ)`
pub fn assemble_viscous(mesh: &FluidMesh, snapshot: &AleSnapshot, mu: f64) -> SparseMatrix {
    assemble_velocity(mesh, true, |cz, _cr, quad| {
        let mut k = [[0.0; NL]; NL];
        for q in quad {
            let p = snapshot.point(cz, q.qz, q.r);
            let g = transformed_basis(&p, q);
            let w = mu * q.weight * p.jacobian;
            for a in 0..NV {
                for b in 0..NV {
                    let dot = g[a][0] * g[b][0] + g[a][1] * g[b][1];
                    for c in 0..2 {
                        for d in 0..2 {
                            let delta = if c == d { dot } else { 0.0 };
                            k[2 * a + c][2 * b + d] += w * (delta + g[a][d] * g[b][c]);
                        }
                    }
                }
            }
        }
        k
    })
}

/// Skew-symmetrized transformed advection with transport velocity
/// `β = u_adv − v^{n+1/2} r̃ e_r`:
/// `N_ij = ½∫(R+η)(β·∇^η φ_j)·φ_i − ½∫(R+η)(β·∇^η φ_i)·φ_j`.
///
/// Each cell contributes `C − Cᵀ`, so the assembled matrix is skew-symmetric
/// to the last bit.
pub fn assemble_advection(
    mesh: &FluidMesh,
    snapshot: &AleSnapshot,
    u_advect: &[f64],
    v_half: &DomainVelocityField,
) -> SparseMatrix {
    assert_eq!(u_advect.len(), mesh.velocity_dof_count());
    assemble_velocity(mesh, false, |cz, cr, quad| {
        let nodes = mesh.cell_velocity_nodes(cz, cr);
        let mut cmat = [[0.0; NV]; NV];
        for q in quad {
            let p = snapshot.point(cz, q.qz, q.r);
            let g = transformed_basis(&p, q);
            let mut u = [0.0; 2];
            for a in 0..NV {
                u[0] += q.phi[a] * u_advect[2 * nodes[a]];
                u[1] += q.phi[a] * u_advect[2 * nodes[a] + 1];
            }
            let w = v_half.velocity(cz, q.qz, q.r);
            let beta = [u[0] - w[0], u[1] - w[1]];
            let scale = 0.5 * q.weight * p.jacobian;
            for b in 0..NV {
                let transport = scale * (beta[0] * g[b][0] + beta[1] * g[b][1]);
                for a in 0..NV {
                    cmat[a][b] += q.phi[a] * transport;
                }
            }
        }
        let mut k = [[0.0; NL]; NL];
        for a in 0..NV {
            for b in 0..NV {
                let s = cmat[a][b] - cmat[b][a];
                k[2 * a][2 * b] = s;
                k[2 * a + 1][2 * b + 1] = s;
            }
        }
        k
    })
}

/// `B_{p,(a,c)} = ∫ (R + η) ψ_p (∇^η φ_a)_c`, pressure rows by velocity columns.
pub fn assemble_divergence(mesh: &FluidMesh, snapshot: &AleSnapshot) -> SparseMatrix {
    let locals: Vec<[[f64; NL]; NP]> = mesh
        .cells()
        .map(|(cz, cr)| {
            let mut k = [[0.0; NL]; NP];
            for q in cell_quadrature(mesh, cz, cr) {
                let p = snapshot.point(cz, q.qz, q.r);
                let g = transformed_basis(&p, &q);
                let w = q.weight * p.jacobian;
                for m in 0..NP {
                    for a in 0..NV {
                        k[m][2 * a] += w * q.psi[m] * g[a][0];
                        k[m][2 * a + 1] += w * q.psi[m] * g[a][1];
                    }
                }
            }
            k
        })
        .collect();
    let mut builder = TripletBuilder::with_capacity(
        mesh.pressure_node_count(),
        mesh.velocity_dof_count(),
        locals.len() * NP * NL,
    );
    for (c, k) in locals.iter().enumerate() {
        let (cz, cr) = (c / mesh.nr, c % mesh.nr);
        let vn = mesh.cell_velocity_nodes(cz, cr);
        let pn = mesh.cell_pressure_nodes(cz, cr);
        for m in 0..NP {
            for a in 0..NL {
                builder.push(pn[m], 2 * vn[a / 2] + a % 2, k[m][a]);
            }
        }
    }
    builder.build()
}

/// Edge integrals `∫₀¹ φ_j(r̃) dr̃` of the quadratic trace basis along a
/// vertical edge, indexed by velocity row `j`.
pub fn vertical_edge_integrals(mesh: &FluidMesh) -> Vec<f64> {
    let hr = mesh.cell_height();
    let mut out = vec![0.0; mesh.velocity_rows()];
    for cr in 0..mesh.nr {
        out[2 * cr] += hr / 6.0;
        out[2 * cr + 1] += 4.0 * hr / 6.0;
        out[2 * cr + 2] += hr / 6.0;
    }
    out
}

/// `F = R (P_in ∫₀¹ q_z|_{z=0} − P_out ∫₀¹ q_z|_{z=L})`, loading only axial
/// DOFs on the inlet and outlet edges.
pub fn assemble_pressure_forcing(mesh: &FluidMesh, p_in: f64, p_out: f64, radius: f64) -> Vec<f64> {
    let mut f = vec![0.0; mesh.velocity_dof_count()];
    let last = mesh.velocity_columns() - 1;
    for (j, w) in vertical_edge_integrals(mesh).into_iter().enumerate() {
        f[2 * mesh.velocity_node(0, j)] += radius * p_in * w;
        f[2 * mesh.velocity_node(last, j)] -= radius * p_out * w;
    }
    f
}

/// Load the fluid exerts on the wall at each top-edge velocity node, taken
/// from the Stokes residual `−(K u − Bᵀ p)` on the radial rows of the top edge.
/// Map to shell DOFs with the transpose of the coupling operator.
pub fn wall_traction_diagnostic(
    mesh: &FluidMesh,
    snapshot: &AleSnapshot,
    mu: f64,
    state: &FluidState,
) -> Vec<f64> {
    let ku = assemble_viscous(mesh, snapshot, mu).mul_vec(&state.u);
    let btp = assemble_divergence(mesh, snapshot).transpose().mul_vec(&state.p);
    let top = mesh.top_row();
    (0..mesh.velocity_columns())
        .map(|i| {
            let dof = 2 * mesh.velocity_node(i, top) + 1;
            -(ku[dof] - btp[dof])
        })
        .collect()
}

/// Evaluates a velocity field at reference point `(z̃, r̃)`.
pub fn evaluate_velocity(mesh: &FluidMesh, u: &[f64], z: f64, r: f64) -> [f64; 2] {
    let zs = mesh.z_vertices();
    let cz = match zs.binary_search_by(|x| x.partial_cmp(&z).unwrap()) {
        Ok(i) => i.min(mesh.nz() - 1),
        Err(i) => i.saturating_sub(1).min(mesh.nz() - 1),
    };
    let cr = ((r * mesh.nr as f64).floor() as usize).min(mesh.nr - 1);
    let xz = ((z - zs[cz]) / mesh.cell_width(cz)).clamp(0.0, 1.0);
    let xr = ((r - cr as f64 * mesh.cell_height()) / mesh.cell_height()).clamp(0.0, 1.0);
    let (lz, _) = quadratic_basis(xz);
    let (lr, _) = quadratic_basis(xr);
    let nodes = mesh.cell_velocity_nodes(cz, cr);
    let mut out = [0.0; 2];
    for a in 0..3 {
        for b in 0..3 {
            let phi = lz[a] * lr[b];
            out[0] += phi * u[2 * nodes[a * 3 + b]];
            out[1] += phi * u[2 * nodes[a * 3 + b] + 1];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mass_scales_with_constant_displacement() {
        let mesh = FluidMesh::uniform(2.0, 2, 2);
        let plain = assemble_velocity_mass(&mesh);
        let mut snap = AleSnapshot::flat(&mesh, 0.5);
        snap.jacobian_at_quad.iter_mut().for_each(|j| *j = 0.75);
        let m = assemble_weighted_mass(&mesh, &snap);
        assert!(m.max_abs_difference(&plain.scaled(0.75)) < 1e-15);
    }

    #[test]
    fn velocity_mass_integrates_to_area() {
        let mesh = FluidMesh::uniform(3.0, 3, 2);
        let m = assemble_velocity_mass(&mesh);
        // 1ᵀ M 1 over the axial component equals |Ω| = 3
        let ones: Vec<f64> = (0..mesh.velocity_dof_count()).map(|d| if d % 2 == 0 { 1.0 } else { 0.0 }).collect();
        assert!((m.quadratic_form(&ones) - 3.0).abs() < 1e-13);
    }

    #[test]
    fn advection_vanishes_for_zero_transport() {
        let mesh = FluidMesh::uniform(1.0, 2, 2);
        let snap = AleSnapshot::flat(&mesh, 0.5);
        let n = assemble_advection(
            &mesh,
            &snap,
            &vec![0.0; mesh.velocity_dof_count()],
            &DomainVelocityField::zero(&mesh),
        );
        assert_eq!(n.max_abs(), 0.0);
    }

    #[test]
    fn inlet_forcing_sums_to_radius_times_pressure() {
        let mesh = FluidMesh::uniform(1.0, 2, 3);
        let f = assemble_pressure_forcing(&mesh, 1.0, 0.0, 1.0);
        let total: f64 = f.iter().sum();
        assert!((total - 1.0).abs() < 1e-15);
        assert!(f.iter().skip(1).step_by(2).all(|&x| x == 0.0));
        let g = assemble_pressure_forcing(&mesh, 0.0, 0.0, 1.0);
        assert!(g.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn divergence_of_linear_field_matches_area() {
        // u = (z, 0) has unit divergence; with η ≡ 0 and R = 1, Σ_p B u = |Ω|
        let mesh = FluidMesh::uniform(2.0, 2, 2);
        let b = assemble_divergence(&mesh, &AleSnapshot::flat(&mesh, 1.0));
        let mut u = vec![0.0; mesh.velocity_dof_count()];
        for i in 0..mesh.velocity_columns() {
            for j in 0..mesh.velocity_rows() {
                u[2 * mesh.velocity_node(i, j)] = mesh.velocity_z(i);
            }
        }
        let total: f64 = b.mul_vec(&u).iter().sum();
        assert!((total - 2.0).abs() < 1e-13);
    }
}
