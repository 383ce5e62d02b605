use fsi_split::ale::{build_snapshot, AlePoint, DomainVelocityField};
use fsi_split::coupling::{build_coupling, ConstrainedSpace};
use fsi_split::energy::{EnergyLedger, LedgerRow};
use fsi_split::fluid::{assemble_advection, assemble_robin_mass, assemble_viscous, assemble_weighted_mass, FluidMesh};
use fsi_split::linalg::{dot, SparseMatrix};
use fsi_split::materials::{derive_coefficients, ShellMaterial};
use fsi_split::shell::{assemble_as, assemble_mass, ShellMesh, StructureSolver};
use fsi_split::waveform::Waveform;
use proptest::prelude::*;

fn vec_of(n: usize, scale: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0..1.0f64, n).prop_map(move |v| v.into_iter().map(|x| x * scale).collect())
}

const NZ: usize = 4;
const NR: usize = 2;
const LEN: f64 = 2.0;
const R: f64 = 0.5;

fn meshes() -> (FluidMesh, ShellMesh) {
    (FluidMesh::uniform(LEN, NZ, NR), ShellMesh::uniform(LEN, NZ))
}

fn shell_dofs() -> usize {
    2 * (NZ - 1)
}

fn velocity_dofs() -> usize {
    2 * (2 * NZ + 1) * (2 * NR + 1)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn elastic_coefficients_scale_with_youngs_modulus(k in 0.01..100.0f64, e in 1e3..1e7f64, sigma in 0.0..0.49f64) {
        let base = ShellMaterial { youngs_modulus: e, poisson_ratio: sigma, ..ShellMaterial::benchmark() };
        let scaled = ShellMaterial { youngs_modulus: k * e, ..base };
        let a = derive_coefficients(&base).unwrap();
        let b = derive_coefficients(&scaled).unwrap();
        for (x, y) in [(a.c0, b.c0), (a.c1, b.c1), (a.c2, b.c2)] {
            prop_assert!((k * x - y).abs() <= 1e-13 * y.abs().max(1e-300));
        }
        prop_assert_eq!((a.d0, a.d1, a.d2), (b.d0, b.d1, b.d2));
    }

    #[test]
    fn viscous_coefficients_scale_with_viscous_modulus(k in 0.01..100.0f64) {
        let base = ShellMaterial::benchmark();
        let scaled = ShellMaterial { viscous_modulus: k * base.viscous_modulus, ..base };
        let a = derive_coefficients(&base).unwrap();
        let b = derive_coefficients(&scaled).unwrap();
        for (x, y) in [(a.d0, b.d0), (a.d1, b.d1), (a.d2, b.d2)] {
            prop_assert!((k * x - y).abs() <= 1e-13 * y.abs());
        }
        prop_assert_eq!((a.c0, a.c1, a.c2), (b.c0, b.c1, b.c2));
    }

    #[test]
    fn structure_step_is_linear(
        eta1 in vec_of(shell_dofs(), 0.01), v1 in vec_of(shell_dofs(), 1.0),
        eta2 in vec_of(shell_dofs(), 0.01), v2 in vec_of(shell_dofs(), 1.0),
        a in -3.0..3.0f64, b in -3.0..3.0f64,
    ) {
        let (_, shell) = meshes();
        let c = derive_coefficients(&ShellMaterial::benchmark()).unwrap();
        let m = assemble_mass(&shell);
        let solver = StructureSolver::new(&m, &assemble_as(&shell, &c), c.rho_s_h, 1e-4, 1e-12).unwrap();
        let mix = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| a * p + b * q).collect::<Vec<_>>();
        let (e1, w1) = solver.step(&eta1, &v1).unwrap();
        let (e2, w2) = solver.step(&eta2, &v2).unwrap();
        let (e, w) = solver.step(&mix(&eta1, &eta2), &mix(&v1, &v2)).unwrap();
        let scale = e.iter().chain(&e1).chain(&e2).fold(1e-30f64, |s, x| s.max(x.abs()));
        let vscale = w.iter().chain(&w1).chain(&w2).fold(1e-30f64, |s, x| s.max(x.abs()));
        for (x, y) in e.iter().zip(mix(&e1, &e2)) {
            prop_assert!((x - y).abs() <= 1e-12 * scale);
        }
        for (x, y) in w.iter().zip(mix(&w1, &w2)) {
            prop_assert!((x - y).abs() <= 1e-8 * vscale);
        }
    }

    #[test]
    fn advection_is_exactly_skew(
        eta in vec_of(shell_dofs(), 0.1), v in vec_of(shell_dofs(), 2.0), u in vec_of(velocity_dofs(), 5.0),
    ) {
        let (fluid, shell) = meshes();
        let snap = build_snapshot(&shell, &fluid, &eta, R, 1e-6).unwrap();
        let dv = DomainVelocityField::from_shell(&shell, &fluid, &v);
        let n = assemble_advection(&fluid, &snap, &u, &dv);
        prop_assert_eq!(n.skew_defect(), 0.0);
        let x: Vec<f64> = (0..velocity_dofs()).map(|k| (k as f64).cos()).collect();
        prop_assert!(n.quadratic_form(&x).abs() <= 1e-13 * n.max_abs() * dot(&x, &x));
    }

    #[test]
    fn jacobian_update_identity(
        eta in vec_of(shell_dofs(), 0.1), v in vec_of(shell_dofs(), 2.0), dt in 1e-5..1e-2f64,
    ) {
        let (fluid, shell) = meshes();
        let next: Vec<f64> = eta.iter().zip(&v).map(|(e, w)| e + dt * w).collect();
        let m0 = assemble_weighted_mass(&fluid, &build_snapshot(&shell, &fluid, &eta, R, 1e-6).unwrap());
        let m1 = assemble_weighted_mass(&fluid, &build_snapshot(&shell, &fluid, &next, R, 1e-6).unwrap());
        let s = assemble_robin_mass(&fluid, &DomainVelocityField::from_shell(&shell, &fluid, &v));
        let lhs = SparseMatrix::linear_combination(&[(1.0, &m0), (dt, &s)]);
        prop_assert!(lhs.max_abs_difference(&m1) <= 1e-13 * m1.max_abs());
    }

    #[test]
    fn viscous_form_is_symmetric_positive(
        eta in vec_of(shell_dofs(), 0.1), u in vec_of(velocity_dofs(), 1.0),
    ) {
        let (fluid, shell) = meshes();
        let k = assemble_viscous(&fluid, &build_snapshot(&shell, &fluid, &eta, R, 1e-6).unwrap(), 0.035);
        prop_assert!(k.max_abs_difference(&k.transpose()) <= 1e-15 * k.max_abs());
        prop_assert!(k.quadratic_form(&u) >= -1e-14 * k.max_abs() * dot(&u, &u));
    }

    #[test]
    fn transform_inverts_deformation_gradient(
        jac in 0.05..2.0f64, deta in -3.0..3.0f64, r in 0.0..1.0f64, g in prop::array::uniform2(-10.0..10.0f64),
    ) {
        let p = AlePoint { jacobian: jac, deta_dz: deta, r };
        let f = p.deformation_gradient();
        let det = f[0][0] * f[1][1] - f[0][1] * f[1][0];
        prop_assert!((det - jac).abs() <= 1e-15 * jac);
        // (g F⁻¹) F = g
        let t = p.transform(g);
        let back = [t[0] * f[0][0] + t[1] * f[1][0], t[0] * f[0][1] + t[1] * f[1][1]];
        for c in 0..2 {
            prop_assert!((back[c] - g[c]).abs() <= 1e-12 * (1.0 + g[c].abs()));
        }
    }

    #[test]
    fn reduction_is_adjoint_to_expansion(y in vec_of(200, 1.0), f in vec_of(velocity_dofs(), 1.0)) {
        let (fluid, shell) = meshes();
        let t = build_coupling(&shell, &fluid).unwrap();
        let space = ConstrainedSpace::new(&fluid, Some(&t));
        let y = &y[..space.reduced_len()];
        let lhs = dot(&space.expand(y), &f);
        let rhs = dot(y, &space.restrict(&f));
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
    }

    #[test]
    fn ledger_round_trips_exactly(values in prop::collection::vec(prop::num::f64::NORMAL | prop::num::f64::ZERO, 20), steps in 1usize..6) {
        let mut ledger = EnergyLedger::new(values[0]);
        ledger.inlet_l2_squared = values[1].abs();
        ledger.outlet_l2_squared = values[2].abs();
        for s in 0..steps {
            let v = |k: usize| values[(k + 3 * s) % values.len()];
            ledger.push(LedgerRow {
                step: s, time: v(0), dt: v(1), p_in: v(2), p_out: v(3), energy_start: v(4),
                energy_half: v(5), energy_full: v(6), dissipation: v(7), dissipation_inequality: v(8),
                dissipation_fluid: v(9), jump_fluid: v(10), jump_v_fluid_step: v(11),
                jump_v_structure_step: v(12), jump_eta_c0: v(13), jump_eta_c1: v(14), jump_eta_c2: v(15),
                pressure_work: v(16), structure_residual: v(17), balance_residual: v(18),
                inequality_slack: v(19), c_tilde: v(0), skew_ratio: v(1), jacobian_ratio: v(2),
                gap_squared: v(3),
            });
        }
        let mut json = Vec::new();
        ledger.write_jsonl(&mut json).unwrap();
        prop_assert_eq!(&EnergyLedger::read_jsonl(json.as_slice()).unwrap(), &ledger);
        let mut csv = Vec::new();
        ledger.write_csv(&mut csv).unwrap();
        prop_assert_eq!(&EnergyLedger::read_csv(csv.as_slice()).unwrap(), &ledger);
    }

    #[test]
    fn sine_average_uses_exact_antiderivative(t0 in 0.0..10.0f64, h in 1e-3..1.0f64) {
        let w = Waveform::Sine { amplitude: 1.0, angular_frequency: 1.0, phase: 0.0, offset: 0.0 };
        let t1 = t0 + h;
        let expected = (t0.cos() - t1.cos()) / h;
        prop_assert!((w.average(t0, t1) - expected).abs() <= 1e-12);
    }

    #[test]
    fn sampled_waveform_is_piecewise_linear(
        mut times in prop::collection::vec(0.0..10.0f64, 2..8), values in prop::collection::vec(-5.0..5.0f64, 8), s in 0.0..1.0f64,
    ) {
        times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        times.dedup_by(|a, b| (*a - *b).abs() < 1e-6);
        prop_assume!(times.len() >= 2);
        let values = values[..times.len()].to_vec();
        let w = Waveform::samples(times.clone(), values.clone()).unwrap();
        for k in 0..times.len() - 1 {
            let t = times[k] + s * (times[k + 1] - times[k]);
            let expected = values[k] + s * (values[k + 1] - values[k]);
            prop_assert!((w.value(t) - expected).abs() <= 1e-9 * (1.0 + expected.abs()));
        }
        // the exact integral of the interpolant matches the trapezoid sum
        let (a, b) = (times[0], times[times.len() - 1]);
        let trap: f64 = (0..times.len() - 1).map(|k| 0.5 * (times[k + 1] - times[k]) * (values[k] + values[k + 1])).sum();
        prop_assert!((w.average(a, b) * (b - a) - trap).abs() <= 1e-9 * (1.0 + trap.abs()));
    }
}
