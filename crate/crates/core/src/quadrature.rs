//! Gauss–Legendre rules on the unit interval and their tensor products.

/// A one-dimensional rule on `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Rule1d {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule1d {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.points.iter().copied().zip(self.weights.iter().copied())
    }
}

/// `n`-point Gauss–Legendre on `[0, 1]`, for `n` in `1..=4`.
pub fn gauss_legendre(n: usize) -> Rule1d {
    let (x, w): (Vec<f64>, Vec<f64>) = match n {
        1 => (vec![0.0], vec![2.0]),
        2 => {
            let a = 1.0 / 3f64.sqrt();
            (vec![-a, a], vec![1.0, 1.0])
        }
        3 => {
            let a = (3.0f64 / 5.0).sqrt();
            (vec![-a, 0.0, a], vec![5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0])
        }
        4 => {
            let s = (6.0f64 / 5.0).sqrt();
            let a = ((3.0 - 2.0 * s) / 7.0).sqrt();
            let b = ((3.0 + 2.0 * s) / 7.0).sqrt();
            let wa = (18.0 + 30f64.sqrt()) / 36.0;
            let wb = (18.0 - 30f64.sqrt()) / 36.0;
            (vec![-b, -a, a, b], vec![wb, wa, wa, wb])
        }
        _ => panic!("gauss_legendre supports 1 to 4 points, got {n}"),
    };
    Rule1d {
        points: x.iter().map(|xi| 0.5 * (xi + 1.0)).collect(),
        weights: w.iter().map(|wi| 0.5 * wi).collect(),
    }
}

/// Points per fluid cell direction.
pub const FLUID_POINTS_1D: usize = 3;
/// Points per shell element.
pub const SHELL_POINTS: usize = 4;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rules_integrate_monomials_exactly() {
        for n in 1..=4 {
            let rule = gauss_legendre(n);
            for k in 0..2 * n {
                let q: f64 = rule.iter().map(|(x, w)| w * x.powi(k as i32)).sum();
                let exact = 1.0 / (k as f64 + 1.0);
                assert!((q - exact).abs() < 1e-15, "n={n} k={k}");
            }
        }
    }

    #[test]
    fn points_are_symmetric() {
        let rule = gauss_legendre(4);
        for i in 0..4 {
            assert!((rule.points[i] + rule.points[3 - i] - 1.0).abs() < 1e-15);
            assert_eq!(rule.weights[i], rule.weights[3 - i]);
        }
    }
}
