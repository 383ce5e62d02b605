//! Shell material parameters, the derived Koiter coefficients, and the
//! compatibility check on initial data.
//!
//! Units are not enforced; CGS is the reference convention throughout.

use serde::{Deserialize, Serialize};

use crate::error::{ValidationError, Violations};
use crate::fluid::FluidMesh;
use crate::shell::{ShellMesh, ShellProfile};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShellMaterial {
    pub youngs_modulus: f64,
    pub poisson_ratio: f64,
    pub viscous_modulus: f64,
    pub viscous_poisson: f64,
    pub thickness: f64,
    pub reference_radius: f64,
    pub density: f64,
    pub length: f64,
}

impl ShellMaterial {
    /// Arterial-wall parameters in CGS units.
    pub fn benchmark() -> Self {
        Self {
            youngs_modulus: 7.5e5,
            poisson_ratio: 0.5,
            viscous_modulus: 2250.0,
            viscous_poisson: 0.5,
            thickness: 0.1,
            reference_radius: 0.5,
            density: 1.1,
            length: 5.0,
        }
    }

    /// The same material with structural viscosity removed.
    pub fn elastic(self) -> Self {
        Self {
            viscous_modulus: 0.0,
            ..self
        }
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        let mut v = Violations::new();
        let positive = |x: f64| x.is_finite() && x > 0.0;
        let ratio = |x: f64| x.is_finite() && (0.0..1.0).contains(&x);
        v.check(positive(self.youngs_modulus), "youngs_modulus", || {
            format!("must be > 0, got {}", self.youngs_modulus)
        });
        v.check(ratio(self.poisson_ratio), "poisson_ratio", || {
            format!("must satisfy 0 <= sigma < 1, got {}", self.poisson_ratio)
        });
        v.check(
            self.viscous_modulus.is_finite() && self.viscous_modulus >= 0.0,
            "viscous_modulus",
            || format!("must be >= 0, got {}", self.viscous_modulus),
        );
        v.check(ratio(self.viscous_poisson), "viscous_poisson", || {
            format!("must satisfy 0 <= sigma_v < 1, got {}", self.viscous_poisson)
        });
        v.check(positive(self.thickness), "thickness", || {
            format!("must be > 0, got {}", self.thickness)
        });
        v.check(positive(self.reference_radius), "reference_radius", || {
            format!("must be > 0, got {}", self.reference_radius)
        });
        v.check(positive(self.density), "density", || {
            format!("must be > 0, got {}", self.density)
        });
        v.check(positive(self.length), "length", || {
            format!("must be > 0, got {}", self.length)
        });
        v.into_result()
    }
}

/// Coefficients of `ρ_s h η_tt + C0 η − C1 η_zz + C2 η_zzzz + D0 η_t − D1 η_tzz + D2 η_tzzzz`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShellCoefficients {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub d0: f64,
    pub d1: f64,
    pub d2: f64,
    pub rho_s_h: f64,
}

impl ShellCoefficients {
    pub fn is_elastic(&self) -> bool {
        self.d0 == 0.0 && self.d1 == 0.0 && self.d2 == 0.0
    }

    pub fn without_viscosity(self) -> Self {
        Self {
            d0: 0.0,
            d1: 0.0,
            d2: 0.0,
            ..self
        }
    }
}

pub fn derive_coefficients(m: &ShellMaterial) -> Result<ShellCoefficients, ValidationError> {
    m.validate()?;
    let h = m.thickness;
    let r2 = m.reference_radius * m.reference_radius;
    let e = m.youngs_modulus;
    let s = m.poisson_ratio;
    let thin = 1.0 + h * h / (12.0 * r2);
    let cv = m.viscous_modulus / (1.0 - m.viscous_poisson * m.viscous_poisson);
    let dv = m.viscous_modulus * m.viscous_poisson / (1.0 - m.viscous_poisson * m.viscous_poisson);
    Ok(ShellCoefficients {
        c0: h * e / (r2 * (1.0 - s * s)) * thin,
        c1: h.powi(3) / 6.0 * e * s / (r2 * (1.0 - s * s)),
        c2: h.powi(3) / 12.0 * e / (1.0 - s * s),
        d0: h / r2 * cv * thin,
        d1: h.powi(3) / 6.0 * dv / r2,
        d2: h.powi(3) / 12.0 * cv,
        rho_s_h: m.density * h,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionCheck {
    pub condition: String,
    pub residual: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompatibilityReport {
    pub checks: Vec<ConditionCheck>,
}

impl CompatibilityReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &ConditionCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn into_result(self) -> Result<Self, ValidationError> {
        let mut v = Violations::new();
        for c in self.failures() {
            v.push(
                "initial_data",
                format!("{} violated (residual {:.3e})", c.condition, c.residual),
            );
        }
        v.into_result().map(|_| self)
    }
}

pub const CONDITION_TRACE: &str = "interface trace u0 = v0 e_r";
pub const CONDITION_CLAMPED: &str = "clamped ends eta0 = d(eta0)/dz = v0 = 0 at z = 0, L";
pub const CONDITION_RADIUS: &str = "R + eta0(z) > 0";

/// Checks the initial data against the kinematic trace condition, the clamped
/// ends and positivity of the initial radius.
///
/// `u0` is the full interleaved velocity vector on `fluid`. Residuals of the
/// trace and clamped conditions are relative to the largest field magnitude.
pub fn validate_compatibility(
    shell: &ShellMesh,
    fluid: &FluidMesh,
    eta0: &ShellProfile,
    v0: &ShellProfile,
    u0: &[f64],
    radius: f64,
    tol: f64,
) -> CompatibilityReport {
    let field_scale = eta0
        .max_abs()
        .max(v0.max_abs())
        .max(u0.iter().fold(0.0f64, |m, x| m.max(x.abs())));
    let rel = |r: f64| if field_scale > 0.0 { r / field_scale } else { r };

    let top = fluid.top_row();
    let mut trace = 0.0f64;
    for i in 0..fluid.velocity_columns() {
        let node = fluid.velocity_node(i, top);
        let vz = shell.evaluate(v0, fluid.velocity_z(i)).0;
        trace = trace
            .max(u0[2 * node].abs())
            .max((u0[2 * node + 1] - vz).abs());
    }
    let trace = rel(trace);

    let last = shell.node_count() - 1;
    let clamped = rel(
        [
            eta0.values[0],
            eta0.values[last],
            eta0.slopes[0],
            eta0.slopes[last],
            v0.values[0],
            v0.values[last],
            v0.slopes[0],
            v0.slopes[last],
        ]
        .iter()
        .fold(0.0f64, |m, x| m.max(x.abs())),
    );

    let min_radius = radius + shell.min_value(eta0);

    CompatibilityReport {
        checks: vec![
            ConditionCheck {
                condition: CONDITION_TRACE.into(),
                residual: trace,
                passed: trace <= tol,
            },
            ConditionCheck {
                condition: CONDITION_CLAMPED.into(),
                residual: clamped,
                passed: clamped <= tol,
            },
            ConditionCheck {
                condition: CONDITION_RADIUS.into(),
                residual: min_radius,
                passed: min_radius > 0.0,
            },
        ],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn benchmark_c2_matches_hand_value() {
        let c = derive_coefficients(&ShellMaterial::benchmark()).unwrap();
        // (1e-3/12)·7.5e5/0.75
        assert!((c.c2 - 83.333_333_333_333_33).abs() < 1e-11);
    }

    #[test]
    fn zero_viscous_modulus_gives_zero_viscous_coefficients() {
        let c = derive_coefficients(&ShellMaterial::benchmark().elastic()).unwrap();
        assert_eq!((c.d0, c.d1, c.d2), (0.0, 0.0, 0.0));
        assert!(c.is_elastic());
    }

    #[test]
    fn zero_poisson_ratio_drops_c1() {
        let m = ShellMaterial {
            poisson_ratio: 0.0,
            ..ShellMaterial::benchmark()
        };
        assert_eq!(derive_coefficients(&m).unwrap().c1, 0.0);
    }

    #[test]
    fn out_of_range_poisson_ratio_is_named() {
        let m = ShellMaterial {
            poisson_ratio: 1.2,
            ..ShellMaterial::benchmark()
        };
        let err = derive_coefficients(&m).unwrap_err();
        assert!(err.names_field("poisson_ratio"));
        assert_eq!(err.violations.len(), 1);
    }

    #[test]
    fn all_violations_are_reported() {
        let m = ShellMaterial {
            youngs_modulus: -1.0,
            thickness: 0.0,
            viscous_poisson: 1.0,
            ..ShellMaterial::benchmark()
        };
        let err = m.validate().unwrap_err();
        for f in ["youngs_modulus", "thickness", "viscous_poisson"] {
            assert!(err.names_field(f), "{f} missing from {err}");
        }
    }
}
