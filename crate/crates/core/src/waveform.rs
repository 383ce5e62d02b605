//! Inlet and outlet dynamic-pressure data and their per-step averages
//! `P^n = (1/Δt) ∫_{t_n}^{t_{n+1}} P(t) dt`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
#[derive(Default)]
pub enum Waveform {
    #[default]
    Zero,
    Constant {
        value: f64,
    },
    /// `amplitude · sin(ω t + phase) + offset`
    Sine {
        amplitude: f64,
        angular_frequency: f64,
        #[serde(default)]
        phase: f64,
        #[serde(default)]
        offset: f64,
    },
    /// `amplitude/2 · (1 − cos(2πt/duration))` on `[0, duration]`, zero after.
    Pulse {
        amplitude: f64,
        duration: f64,
    },
    /// Linear interpolation of samples, held constant outside their range.
    Samples {
        times: Vec<f64>,
        values: Vec<f64>,
    },
}


impl Waveform {
    /// Benchmark inlet pulse (CGS).
    pub fn benchmark_pulse() -> Self {
        Waveform::Pulse {
            amplitude: 1.3332e4,
            duration: 0.003,
        }
    }

    pub fn samples(times: Vec<f64>, values: Vec<f64>) -> Result<Self, ConfigError> {
        let w = Waveform::Samples { times, values };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Waveform(m));
        match self {
            Waveform::Zero => Ok(()),
            Waveform::Constant { value } if !value.is_finite() => bad("constant value must be finite".into()),
            Waveform::Constant { .. } => Ok(()),
            Waveform::Sine {
                amplitude,
                angular_frequency,
                phase,
                offset,
            } => {
                if ![amplitude, angular_frequency, phase, offset].iter().all(|x| x.is_finite()) {
                    bad("sine parameters must be finite".into())
                } else if *angular_frequency == 0.0 {
                    bad("sine angular_frequency must be nonzero".into())
                } else {
                    Ok(())
                }
            }
            Waveform::Pulse { amplitude, duration } => {
                if !amplitude.is_finite() || !(duration.is_finite() && *duration > 0.0) {
                    bad("pulse needs a finite amplitude and a positive duration".into())
                } else {
                    Ok(())
                }
            }
            Waveform::Samples { times, values } => {
                if times.is_empty() {
                    return bad("sampled waveform is empty".into());
                }
                if times.len() != values.len() {
                    return bad(format!(
                        "{} times but {} values",
                        times.len(),
                        values.len()
                    ));
                }
                if !times.iter().chain(values).all(|x| x.is_finite()) {
                    return bad("sampled waveform contains non-finite entries".into());
                }
                if let Some(k) = times.windows(2).position(|w| !(w[1] > w[0])) {
                    return bad(format!(
                        "time column is not strictly increasing at row {} ({} then {})",
                        k + 1,
                        times[k],
                        times[k + 1]
                    ));
                }
                Ok(())
            }
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        match self {
            Waveform::Zero => 0.0,
            Waveform::Constant { value } => *value,
            Waveform::Sine {
                amplitude,
                angular_frequency,
                phase,
                offset,
            } => amplitude * (angular_frequency * t + phase).sin() + offset,
            Waveform::Pulse { amplitude, duration } => {
                if (0.0..=*duration).contains(&t) {
                    0.5 * amplitude * (1.0 - (2.0 * PI * t / duration).cos())
                } else {
                    0.0
                }
            }
            Waveform::Samples { times, values } => {
                let n = times.len();
                if t <= times[0] {
                    values[0]
                } else if t >= times[n - 1] {
                    values[n - 1]
                } else {
                    let k = times.partition_point(|&x| x <= t) - 1;
                    let s = (t - times[k]) / (times[k + 1] - times[k]);
                    values[k] + s * (values[k + 1] - values[k])
                }
            }
        }
    }

    /// `∫_0^t P`
    fn antiderivative(&self, t: f64) -> f64 {
        match self {
            Waveform::Zero => 0.0,
            Waveform::Constant { value } => value * t,
            Waveform::Sine {
                amplitude,
                angular_frequency: w,
                phase,
                offset,
            } => -amplitude / w * ((w * t + phase).cos() - phase.cos()) + offset * t,
            Waveform::Pulse { amplitude, duration } => {
                let s = t.clamp(0.0, *duration);
                0.5 * amplitude * (s - duration / (2.0 * PI) * (2.0 * PI * s / duration).sin())
            }
            Waveform::Samples { .. } => self.piecewise_integral(0.0, t, |a, b, h| 0.5 * h * (a + b)),
        }
    }

    /// `∫_0^t P²`
    fn square_antiderivative(&self, t: f64) -> f64 {
        match self {
            Waveform::Zero => 0.0,
            Waveform::Constant { value } => value * value * t,
            Waveform::Sine {
                amplitude: a,
                angular_frequency: w,
                phase,
                offset: c,
            } => {
                let sin2 = |x: f64| x / 2.0 - (2.0 * (w * x + phase)).sin() / (4.0 * w);
                let sin1 = |x: f64| -((w * x + phase).cos()) / w;
                a * a * (sin2(t) - sin2(0.0)) + 2.0 * a * c * (sin1(t) - sin1(0.0)) + c * c * t
            }
            Waveform::Pulse { amplitude, duration } => {
                let s = t.clamp(0.0, *duration);
                let k = 2.0 * PI / duration;
                // (A/2)² ∫ (1 − 2cos(ks) + cos²(ks))
                0.25 * amplitude
                    * amplitude
                    * (1.5 * s - 2.0 * (k * s).sin() / k + (2.0 * k * s).sin() / (4.0 * k))
            }
            Waveform::Samples { .. } => {
                self.piecewise_integral(0.0, t, |a, b, h| h * (a * a + a * b + b * b) / 3.0)
            }
        }
    }

    /// Exact integral of a functional of the linear interpolant over `[t0, t1]`,
    /// given per-piece by `piece(left value, right value, width)`.
    fn piecewise_integral(&self, t0: f64, t1: f64, piece: impl Fn(f64, f64, f64) -> f64) -> f64 {
        let Waveform::Samples { times, .. } = self else {
            unreachable!()
        };
        if t1 <= t0 {
            return -self.piecewise_integral(t1, t0, piece);
        }
        let mut breaks = vec![t0];
        breaks.extend(times.iter().copied().filter(|&x| x > t0 && x < t1));
        breaks.push(t1);
        breaks
            .windows(2)
            .map(|w| piece(self.value(w[0]), self.value(w[1]), w[1] - w[0]))
            .sum()
    }

    /// Mean value over `[t0, t1]`.
    pub fn average(&self, t0: f64, t1: f64) -> f64 {
        match self {
            Waveform::Zero => 0.0,
            Waveform::Constant { value } => *value,
            Waveform::Samples { .. } => {
                self.piecewise_integral(t0, t1, |a, b, h| 0.5 * h * (a + b)) / (t1 - t0)
            }
            _ => (self.antiderivative(t1) - self.antiderivative(t0)) / (t1 - t0),
        }
    }

    /// `‖P‖²_{L²(0, t)}`
    pub fn l2_norm_squared(&self, t: f64) -> f64 {
        self.square_antiderivative(t)
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Waveform::Zero => true,
            Waveform::Constant { value } => *value == 0.0,
            Waveform::Sine { amplitude, offset, .. } => *amplitude == 0.0 && *offset == 0.0,
            Waveform::Pulse { amplitude, .. } => *amplitude == 0.0,
            Waveform::Samples { values, .. } => values.iter().all(|&v| v == 0.0),
        }
    }

    /// Reads a two-column CSV of `time,value` rows. A header row is allowed.
    pub fn from_csv_reader<R: std::io::Read>(reader: R) -> Result<Self, ConfigError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(reader);
        let mut times = Vec::new();
        let mut values = Vec::new();
        for (k, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| ConfigError::Waveform(format!("row {}: {e}", k + 1)))?;
            if rec.len() != 2 {
                return Err(ConfigError::Waveform(format!(
                    "row {} has {} columns, expected 2",
                    k + 1,
                    rec.len()
                )));
            }
            let parsed = (rec[0].parse::<f64>(), rec[1].parse::<f64>());
            match parsed {
                (Ok(t), Ok(v)) => {
                    times.push(t);
                    values.push(v);
                }
                _ if k == 0 => continue,
                _ => {
                    return Err(ConfigError::Waveform(format!(
                        "row {} is not numeric: {:?}",
                        k + 1,
                        rec
                    )))
                }
            }
        }
        Self::samples(times, values)
    }

    pub fn from_csv_path(path: &std::path::Path) -> Result<Self, ConfigError> {
        let file = std::fs::File::open(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_csv_reader(file)
    }
}

/// Inlet and outlet data.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PressureWaveform {
    pub inlet: Waveform,
    pub outlet: Waveform,
}

impl PressureWaveform {
    /// `(P^n_in, P^n_out)` over `[t0, t1]`.
    pub fn step_average(&self, t0: f64, t1: f64) -> (f64, f64) {
        (self.inlet.average(t0, t1), self.outlet.average(t0, t1))
    }

    /// `(‖P_in‖², ‖P_out‖²)` over `(0, t)`.
    pub fn l2_norms_squared(&self, t: f64) -> (f64, f64) {
        (self.inlet.l2_norm_squared(t), self.outlet.l2_norm_squared(t))
    }

    pub fn is_zero(&self) -> bool {
        self.inlet.is_zero() && self.outlet.is_zero()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn midpoint_integral(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
        let n = 200_000;
        let h = (b - a) / n as f64;
        (0..n).map(|k| f(a + (k as f64 + 0.5) * h)).sum::<f64>() * h
    }

    #[test]
    fn constant_average_is_constant() {
        let w = Waveform::Constant { value: 3.25 };
        assert_eq!(w.average(0.1, 0.35), 3.25);
    }

    #[test]
    fn sine_average_matches_antiderivative() {
        let w = Waveform::Sine {
            amplitude: 1.0,
            angular_frequency: 1.0,
            phase: 0.0,
            offset: 0.0,
        };
        let (t0, t1) = (0.3, 0.55);
        let expected = (f64::cos(t0) - f64::cos(t1)) / (t1 - t0);
        assert!((w.average(t0, t1) - expected).abs() < 1e-15);
    }

    #[test]
    fn pulse_average_and_norm_match_numerical_integration() {
        let w = Waveform::benchmark_pulse();
        let avg = w.average(0.001, 0.0045);
        let num = midpoint_integral(|t| w.value(t), 0.001, 0.0045) / 0.0035;
        assert!((avg - num).abs() < 1e-6 * num.abs());
        let sq = w.l2_norm_squared(0.006);
        let num_sq = midpoint_integral(|t| w.value(t).powi(2), 0.0, 0.006);
        assert!((sq - num_sq).abs() < 1e-6 * num_sq);
    }

    #[test]
    fn sine_norm_matches_numerical_integration() {
        let w = Waveform::Sine {
            amplitude: 2.0,
            angular_frequency: 3.0,
            phase: 0.4,
            offset: -0.5,
        };
        let num = midpoint_integral(|t| w.value(t).powi(2), 0.0, 1.7);
        assert!((w.l2_norm_squared(1.7) - num).abs() < 1e-8);
    }

    #[test]
    fn samples_integrate_their_interpolant() {
        let w = Waveform::samples(vec![0.0, 1.0, 3.0], vec![0.0, 2.0, -2.0]).unwrap();
        assert!((w.average(0.0, 1.0) - 1.0).abs() < 1e-15);
        assert!((w.average(0.5, 2.0) - midpoint_integral(|t| w.value(t), 0.5, 2.0) / 1.5).abs() < 1e-9);
        let num = midpoint_integral(|t| w.value(t).powi(2), 0.0, 4.0);
        assert!((w.l2_norm_squared(4.0) - num).abs() < 1e-8);
    }

    #[test]
    fn csv_rejects_bad_inputs() {
        assert!(Waveform::from_csv_reader("".as_bytes()).is_err());
        assert!(Waveform::from_csv_reader("t,p\n".as_bytes()).is_err());
        let err = Waveform::from_csv_reader("0,1\n0.2,2\n0.1,3\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("not strictly increasing"));
        let ok = Waveform::from_csv_reader("time,pressure\n0,1\n1,3\n".as_bytes()).unwrap();
        assert_eq!(ok.value(0.5), 2.0);
    }
}
