mod common;

use common::oracle;
use fsi_split::materials::{derive_coefficients, ShellMaterial};
use fsi_split::quadrature::gauss_legendre;
use fsi_split::shell::hermite_basis;

#[test]
fn operators_match_dense_oracle() {
    let report = common::assembly_oracle_report();
    for (name, diff) in &report.entries {
        assert!(*diff <= common::ORACLE_TOLERANCE, "{name}: relative difference {diff:e}");
    }
    assert!(report.entries.len() >= 25);
}

#[test]
fn gauss_rules_match_newton_roots() {
    for n in 1..=4 {
        let lib = gauss_legendre(n);
        let reference = oracle::gauss_rule(n);
        for ((x, w), (xr, wr)) in lib.iter().zip(reference) {
            assert!((x - xr).abs() < 1e-15, "n={n}: point {x} vs {xr}");
            assert!((w - wr).abs() < 1e-15, "n={n}: weight {w} vs {wr}");
        }
    }
}

#[test]
fn hermite_basis_matches_monomial_solve() {
    let ell = 0.37;
    for &xi in &[0.0, 0.13, 0.5, 0.81, 1.0] {
        let b = hermite_basis(xi, ell);
        for k in 0..4 {
            let mut dofs = [0.0; 4];
            dofs[k] = 1.0;
            let r = oracle::hermite_cubic(0.0, ell, dofs, xi * ell);
            assert!((b.value[k] - r[0]).abs() < 1e-13);
            assert!((b.d1[k] - r[1]).abs() < 1e-12);
            assert!((b.d2[k] - r[2]).abs() < 1e-10);
        }
    }
}

#[test]
fn shell_coefficients_match_closed_forms() {
    let m = ShellMaterial {
        youngs_modulus: 3.1e5,
        poisson_ratio: 0.3,
        viscous_modulus: 1700.0,
        viscous_poisson: 0.45,
        thickness: 0.07,
        reference_radius: 0.8,
        density: 1.2,
        length: 3.0,
    };
    let c = derive_coefficients(&m).unwrap();
    let k = oracle::shell_coefficients(3.1e5, 0.3, 1700.0, 0.45, 0.07, 0.8);
    for (got, want) in [c.c0, c.c1, c.c2, c.d0, c.d1, c.d2].iter().zip(k) {
        assert!((got - want).abs() <= 1e-14 * want.abs(), "{got} vs {want}");
    }
    assert!((c.rho_s_h - 1.2 * 0.07).abs() < 1e-16);
}

#[test]
fn benchmark_bending_coefficient() {
    let c = derive_coefficients(&ShellMaterial::benchmark()).unwrap();
    // h³E/(12(1−σ²)) with h = 0.1, E = 7.5e5, σ = 0.5
    assert!((c.c2 - 250.0 / 3.0).abs() < 1e-11);
}
