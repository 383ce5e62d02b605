//! Dense reference assembly built from first principles: Gauss points found
//! by Newton iteration on Legendre polynomials, Lagrange bases from the
//! product formula, Hermite bases from a monomial solve, and the ALE
//! transform from an explicit inverse of the deformation gradient.

use nalgebra::{DMatrix, Matrix2, Matrix4, RowVector2, Vector2, Vector4};

/// `n`-point Gauss rule on `[0, 1]`, ascending.
pub fn gauss_rule(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            let step = p / d;
            x -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        let dp = legendre(n, x).1;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push((0.5 * (1.0 + x), 0.5 * w));
    }
    out.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    out
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Lagrange basis polynomial `k` on `nodes` and its derivative at `x`.
pub fn lagrange(nodes: &[f64], k: usize, x: f64) -> (f64, f64) {
    let mut value = 1.0;
    for (m, &xm) in nodes.iter().enumerate() {
        if m != k {
            value *= (x - xm) / (nodes[k] - xm);
        }
    }
    let mut deriv = 0.0;
    for (j, &xj) in nodes.iter().enumerate() {
        if j == k {
            continue;
        }
        let mut term = 1.0 / (nodes[k] - xj);
        for (m, &xm) in nodes.iter().enumerate() {
            if m != k && m != j {
                term *= (x - xm) / (nodes[k] - xm);
            }
        }
        deriv += term;
    }
    (value, deriv)
}

/// Cubic on `[z0, z0 + ell]` matching the given end values and slopes;
/// returns value and first two derivatives at `z`.
pub fn hermite_cubic(z0: f64, ell: f64, dofs: [f64; 4], z: f64) -> [f64; 3] {
    let m = Matrix4::new(
        1.0, 0.0, 0.0, 0.0, //
        0.0, 1.0, 0.0, 0.0, //
        1.0, ell, ell * ell, ell * ell * ell, //
        0.0, 1.0, 2.0 * ell, 3.0 * ell * ell,
    );
    let c = m.lu().solve(&Vector4::from(dofs)).expect("Hermite system is regular");
    let t = z - z0;
    [
        c[0] + c[1] * t + c[2] * t * t + c[3] * t * t * t,
        c[1] + 2.0 * c[2] * t + 3.0 * c[3] * t * t,
        2.0 * c[2] + 6.0 * c[3] * t,
    ]
}

/// A clamped Hermite field on a uniform shell mesh, from free DOFs ordered
/// `2 (node − 1) + slope`.
pub struct HermiteField {
    pub length: f64,
    pub elements: usize,
    pub free: Vec<f64>,
}

impl HermiteField {
    fn nodal(&self, node: usize) -> (f64, f64) {
        if node == 0 || node == self.elements {
            (0.0, 0.0)
        } else {
            (self.free[2 * (node - 1)], self.free[2 * (node - 1) + 1])
        }
    }

    pub fn eval(&self, z: f64) -> [f64; 3] {
        let ell = self.length / self.elements as f64;
        let e = ((z / ell).floor() as usize).min(self.elements - 1);
        let (v0, s0) = self.nodal(e);
        let (v1, s1) = self.nodal(e + 1);
        hermite_cubic(e as f64 * ell, ell, [v0, s0, v1, s1], z)
    }
}

/// Dense shell matrices `∫ψψ`, `∫ψ'ψ'`, `∫ψ''ψ''` on the clamped space.
pub fn shell_grams(length: f64, elements: usize) -> [DMatrix<f64>; 3] {
    let n = 2 * (elements - 1);
    let ell = length / elements as f64;
    let mut out = [DMatrix::zeros(n, n), DMatrix::zeros(n, n), DMatrix::zeros(n, n)];
    let rule = gauss_rule(4);
    let basis = |k: usize| {
        let mut f = vec![0.0; n];
        f[k] = 1.0;
        HermiteField {
            length,
            elements,
            free: f,
        }
    };
    let fields: Vec<HermiteField> = (0..n).map(basis).collect();
    for e in 0..elements {
        for &(x, w) in &rule {
            let z = (e as f64 + x) * ell;
            let vals: Vec<[f64; 3]> = fields
                .iter()
                .map(|f| {
                    // evaluate inside element e even at shared nodes
                    let ell = f.length / f.elements as f64;
                    let (v0, s0) = f.nodal(e);
                    let (v1, s1) = f.nodal(e + 1);
                    hermite_cubic(e as f64 * ell, ell, [v0, s0, v1, s1], z)
                })
                .collect();
            for i in 0..n {
                for j in 0..n {
                    for d in 0..3 {
                        out[d][(i, j)] += w * ell * vals[i][d] * vals[j][d];
                    }
                }
            }
        }
    }
    out
}

/// Shell coefficients computed directly from the closed-form expressions.
pub fn shell_coefficients(e: f64, sigma: f64, ev: f64, sigma_v: f64, h: f64, r: f64) -> [f64; 6] {
    let c0 = h * e / (r * r * (1.0 - sigma * sigma)) * (1.0 + h * h / (12.0 * r * r));
    let c1 = h.powi(3) / 6.0 * e * sigma / (r * r * (1.0 - sigma * sigma));
    let c2 = h.powi(3) / 12.0 * e / (1.0 - sigma * sigma);
    let cv = ev / (1.0 - sigma_v * sigma_v);
    let dv = ev * sigma_v / (1.0 - sigma_v * sigma_v);
    let d0 = h / (r * r) * cv * (1.0 + h * h / (12.0 * r * r));
    let d1 = h.powi(3) / 6.0 * dv / (r * r);
    let d2 = h.powi(3) / 12.0 * cv;
    [c0, c1, c2, d0, d1, d2]
}

/// Geometry of the fluid reference domain and the data entering the
/// transformed operators.
pub struct FluidOracle<'a> {
    pub length: f64,
    pub nz: usize,
    pub nr: usize,
    pub radius: f64,
    pub mu: f64,
    /// `η(z)` and `η'(z)`
    pub eta: &'a dyn Fn(f64) -> (f64, f64),
    /// `v^{n+1/2}(z)`
    pub v_half: &'a dyn Fn(f64) -> f64,
    /// advecting velocity, full DOF vector
    pub u_advect: &'a [f64],
}

pub struct FluidMatrices {
    pub mass: DMatrix<f64>,
    pub robin: DMatrix<f64>,
    pub viscous: DMatrix<f64>,
    pub advection: DMatrix<f64>,
    pub divergence: DMatrix<f64>,
}

impl FluidOracle<'_> {
    fn rows(&self) -> usize {
        2 * self.nr + 1
    }

    fn node(&self, i: usize, j: usize) -> usize {
        i * self.rows() + j
    }

    pub fn velocity_dofs(&self) -> usize {
        2 * (2 * self.nz + 1) * self.rows()
    }

    pub fn pressure_dofs(&self) -> usize {
        (self.nz + 1) * (self.nr + 1)
    }

    pub fn assemble(&self) -> FluidMatrices {
        let nu = self.velocity_dofs();
        let np = self.pressure_dofs();
        let mut m = FluidMatrices {
            mass: DMatrix::zeros(nu, nu),
            robin: DMatrix::zeros(nu, nu),
            viscous: DMatrix::zeros(nu, nu),
            advection: DMatrix::zeros(nu, nu),
            divergence: DMatrix::zeros(np, nu),
        };
        let hz = self.length / self.nz as f64;
        let hr = 1.0 / self.nr as f64;
        let rule = gauss_rule(3);
        for cz in 0..self.nz {
            for cr in 0..self.nr {
                let (z0, r0) = (cz as f64 * hz, cr as f64 * hr);
                let zn = [z0, z0 + 0.5 * hz, z0 + hz];
                let rn = [r0, r0 + 0.5 * hr, r0 + hr];
                let mut vnodes = Vec::new();
                for a in 0..3 {
                    for b in 0..3 {
                        vnodes.push((a, b, self.node(2 * cz + a, 2 * cr + b)));
                    }
                }
                let mut pnodes = Vec::new();
                for a in 0..2 {
                    for b in 0..2 {
                        pnodes.push((a, b, (cz + a) * (self.nr + 1) + cr + b));
                    }
                }
                for &(xz, wz) in &rule {
                    for &(xr, wr) in &rule {
                        let z = z0 + xz * hz;
                        let r = r0 + xr * hr;
                        let w = wz * wr * hz * hr;
                        self.point(&mut m, z, r, w, &zn, &rn, &vnodes, &pnodes, [z0, z0 + hz], [r0, r0 + hr]);
                    }
                }
            }
        }
        m
    }

    #[allow(clippy::too_many_arguments)]
    fn point(
        &self,
        m: &mut FluidMatrices,
        z: f64,
        r: f64,
        w: f64,
        zn: &[f64; 3],
        rn: &[f64; 3],
        vnodes: &[(usize, usize, usize)],
        pnodes: &[(usize, usize, usize)],
        zp: [f64; 2],
        rp: [f64; 2],
    ) {
        let (eta, deta) = (self.eta)(z);
        let jac = self.radius + eta;
        let f = Matrix2::new(1.0, 0.0, r * deta, jac);
        let finv = f.try_inverse().expect("deformation gradient is invertible");
        // per velocity DOF: value and transformed gradient
        let mut phis = Vec::new();
        for &(a, b, node) in vnodes {
            let (lz, dlz) = lagrange(zn, a, z);
            let (lr, dlr) = lagrange(rn, b, r);
            let g = RowVector2::new(dlz * lr, lz * dlr) * finv;
            for c in 0..2 {
                let mut grad = Matrix2::zeros();
                grad.set_row(c, &g);
                phis.push((2 * node + c, c, lz * lr, grad));
            }
        }
        let mut u = Vector2::zeros();
        for &(dof, c, phi, _) in &phis {
            u[c] += phi * self.u_advect[dof];
        }
        let vh = (self.v_half)(z);
        let beta = u - Vector2::new(0.0, vh * r);
        for &(i, ci, pi, gi) in &phis {
            let di = 0.5 * (gi + gi.transpose());
            for &(j, cj, pj, gj) in &phis {
                let dj = 0.5 * (gj + gj.transpose());
                let same = if ci == cj { 1.0 } else { 0.0 };
                m.mass[(i, j)] += w * jac * pi * pj * same;
                m.robin[(i, j)] += w * vh * pi * pj * same;
                m.viscous[(i, j)] += w * 2.0 * self.mu * jac * di.component_mul(&dj).sum();
                // ½∫J (β·∇^η φ_j)·φ_i − ½∫J (β·∇^η φ_i)·φ_j
                let adv_j = (gj * beta)[ci] * pi;
                let adv_i = (gi * beta)[cj] * pj;
                m.advection[(i, j)] += 0.5 * w * jac * (adv_j - adv_i);
            }
            for &(a, b, p) in pnodes {
                let psi = lagrange(&zp, a, z).0 * lagrange(&rp, b, r).0;
                m.divergence[(p, i)] += w * jac * psi * gi.trace();
            }
        }
    }
}

/// Largest entrywise difference relative to the largest oracle entry.
pub fn relative_difference(a: &DMatrix<f64>, oracle: &DMatrix<f64>) -> f64 {
    assert_eq!(a.shape(), oracle.shape());
    let scale = oracle.amax().max(f64::MIN_POSITIVE);
    (a - oracle).amax() / scale
}

pub fn to_dmatrix(m: &fsi_split::linalg::SparseMatrix) -> DMatrix<f64> {
    let d = m.to_dense();
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| d[i][j])
}
