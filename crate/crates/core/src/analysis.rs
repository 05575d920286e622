//! Fringe fitting and shot-noise sensitivity.
//!
//! The fringe model for port 1 is
//! `N(omega) = amplitude * sin^2(pi * omega / (2 * omega_pi) + phase) + offset`,
//! and port 2 uses `cos^2` in place of `sin^2`. Fits use Levenberg-Marquardt
//! with Marquardt diagonal scaling.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{Matrix4, Vector4};
use thiserror::Error;

use crate::experiment::FringePoint;
use crate::optics::{SagnacGeometry, SPEED_OF_LIGHT};

const MAX_ITERATIONS: usize = 500;
const PARAM_TOLERANCE: f64 = 1e-9;
const MIN_POINTS: usize = 8;
const LAMBDA_CEILING: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Port {
    One,
    Two,
}

impl Port {
    pub fn number(&self) -> u8 {
        match self {
            Port::One => 1,
            Port::Two => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Weighting {
    #[default]
    Unweighted,
    /// Weights `1 / max(count, 1)`.
    Poisson,
}

impl Weighting {
    pub fn as_str(&self) -> &'static str {
        match self {
            Weighting::Unweighted => "unweighted",
            Weighting::Poisson => "poisson",
        }
    }
}

impl std::str::FromStr for Weighting {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "unweighted" => Ok(Weighting::Unweighted),
            "poisson" => Ok(Weighting::Poisson),
            other => Err(format!("unknown weighting `{other}` (expected unweighted|poisson)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("need at least {needed} fringe points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("fringe spans {span} rad/s, less than one half-period ({half_period} rad/s)")]
    InsufficientSpan { span: f64, half_period: f64 },
    #[error("degenerate fringe: all counts equal")]
    Degenerate,
    #[error("invalid initial omega_pi {0}")]
    BadInitialGuess(f64),
    #[error(
        "no convergence after {iterations} iterations (cost {cost}, params amplitude={}, offset={}, omega_pi={}, phase={})",
        params[0], params[1], params[2], params[3]
    )]
    NoConvergence {
        iterations: usize,
        cost: f64,
        params: [f64; 4],
    },
    #[error("fit produced non-physical omega_pi {0}")]
    NonPhysical(f64),
}

/// Standard errors of the fitted parameters from the Gauss-Newton covariance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitStdErrors {
    pub amplitude: f64,
    pub offset: f64,
    pub omega_pi: f64,
    pub phase_offset: f64,
    pub visibility: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FringeFit {
    pub port: Port,
    pub amplitude: f64,
    pub offset: f64,
    pub omega_pi_est: f64,
    /// Wrapped into (-pi/2, pi/2].
    pub phase_offset: f64,
    /// `amplitude / (amplitude + 2 * offset)`, clamped to [0, 1].
    pub visibility: f64,
    pub residual_rms: f64,
    pub stderr: FitStdErrors,
    pub iterations: usize,
}

impl FringeFit {
    pub fn predict(&self, omega: f64) -> f64 {
        model(
            self.port,
            &Vector4::new(self.amplitude, self.offset, self.omega_pi_est, self.phase_offset),
            omega,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FitOptions {
    pub weighting: Weighting,
}

fn fringe_shape(port: Port, theta: f64) -> f64 {
    match port {
        Port::One => theta.sin().powi(2),
        Port::Two => theta.cos().powi(2),
    }
}

fn model(port: Port, p: &Vector4<f64>, omega: f64) -> f64 {
    let theta = PI * omega / (2.0 * p[2]) + p[3];
    p[0] * fringe_shape(port, theta) + p[1]
}

fn gradient(port: Port, p: &Vector4<f64>, omega: f64) -> Vector4<f64> {
    let theta = PI * omega / (2.0 * p[2]) + p[3];
    let dshape = match port {
        Port::One => (2.0 * theta).sin(),
        Port::Two => -(2.0 * theta).sin(),
    };
    let dtheta_dw = -PI * omega / (2.0 * p[2] * p[2]);
    Vector4::new(
        fringe_shape(port, theta),
        1.0,
        p[0] * dshape * dtheta_dw,
        p[0] * dshape,
    )
}

pub fn fit_fringe(fringe: &[FringePoint], port: Port, init_omega_pi: f64) -> Result<FringeFit, FitError> {
    fit_fringe_with(fringe, port, init_omega_pi, &FitOptions::default())
}

/// Least-squares fit of the fringe model to one port of an averaged fringe.
pub fn fit_fringe_with(
    fringe: &[FringePoint],
    port: Port,
    init_omega_pi: f64,
    options: &FitOptions,
) -> Result<FringeFit, FitError> {
    let xs: Vec<f64> = fringe.iter().map(|p| p.omega).collect();
    let ys: Vec<f64> = fringe
        .iter()
        .map(|p| match port {
            Port::One => p.mean_net1,
            Port::Two => p.mean_net2,
        })
        .collect();
    fit_series(&xs, &ys, port, init_omega_pi, options)
}

pub fn fit_series(
    xs: &[f64],
    ys: &[f64],
    port: Port,
    init_omega_pi: f64,
    options: &FitOptions,
) -> Result<FringeFit, FitError> {
    let n = xs.len();
    if n < MIN_POINTS {
        return Err(FitError::TooFewPoints {
            needed: MIN_POINTS,
            got: n,
        });
    }
    if !(init_omega_pi > 0.0 && init_omega_pi.is_finite()) {
        return Err(FitError::BadInitialGuess(init_omega_pi));
    }
    let x_min = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let x_max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if x_max - x_min < init_omega_pi {
        return Err(FitError::InsufficientSpan {
            span: x_max - x_min,
            half_period: init_omega_pi,
        });
    }
    let y_min = ys.iter().copied().fold(f64::INFINITY, f64::min);
    let y_max = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if y_max - y_min <= 0.0 {
        return Err(FitError::Degenerate);
    }
    let weights: Vec<f64> = match options.weighting {
        Weighting::Unweighted => vec![1.0; n],
        Weighting::Poisson => ys.iter().map(|y| 1.0 / y.max(1.0)).collect(),
    };

    let cost = |p: &Vector4<f64>| -> f64 {
        xs.iter()
            .zip(ys)
            .zip(&weights)
            .map(|((&x, &y), &w)| w * (y - model(port, p, x)).powi(2))
            .sum()
    };
    let normal_equations = |p: &Vector4<f64>| -> (Matrix4<f64>, Vector4<f64>) {
        let mut jtj = Matrix4::zeros();
        let mut jtr = Vector4::zeros();
        for ((&x, &y), &w) in xs.iter().zip(ys).zip(&weights) {
            let g = gradient(port, p, x);
            let r = y - model(port, p, x);
            jtj += w * g * g.transpose();
            jtr += w * r * g;
        }
        (jtj, jtr)
    };

    let mut p = Vector4::new(y_max - y_min, y_min, init_omega_pi, 0.0);
    let mut current = cost(&p);
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let (jtj, jtr) = normal_equations(&p);
        let mut accepted = None;
        while lambda <= LAMBDA_CEILING {
            let mut damped = jtj;
            for i in 0..4 {
                damped[(i, i)] += lambda * jtj[(i, i)].max(1e-12);
            }
            let Some(step) = damped.cholesky().map(|c| c.solve(&jtr)) else {
                lambda *= 10.0;
                continue;
            };
            let trial = p + step;
            let trial_cost = cost(&trial);
            if trial.iter().all(|v| v.is_finite()) && trial_cost <= current {
                accepted = Some((step, trial, trial_cost));
                break;
            }
            lambda *= 10.0;
        }
        let Some((step, trial, trial_cost)) = accepted else {
            // No downhill step left at machine precision.
            converged = true;
            break;
        };
        let scale = [
            p[0].abs().max(1.0),
            p[0].abs().max(p[1].abs()).max(1.0),
            p[2].abs(),
            1.0,
        ];
        let small = (0..4).all(|i| step[i].abs() < PARAM_TOLERANCE * scale[i]);
        p = trial;
        current = trial_cost;
        lambda = (lambda / 10.0).max(1e-15);
        if small {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(FitError::NoConvergence {
            iterations,
            cost: current,
            params: [p[0], p[1], p[2], p[3]],
        });
    }

    // sin^2 is even: (omega_pi, phase) and (-omega_pi, -phase) are the same curve.
    if p[2] < 0.0 {
        p[2] = -p[2];
        p[3] = -p[3];
    }
    if !(p[2] > 0.0 && p[2].is_finite()) {
        return Err(FitError::NonPhysical(p[2]));
    }
    p[3] = wrap_half_period(p[3]);

    let (jtj, _) = normal_equations(&p);
    let dof = (n - 4).max(1) as f64;
    let sigma2 = cost(&p) / dof;
    let cov = jtj.try_inverse().map(|inv| inv * sigma2);
    let (amplitude, offset) = (p[0], p[1]);
    let denom = amplitude + 2.0 * offset;
    let visibility = if denom > 0.0 {
        (amplitude / denom).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let stderr = match cov {
        Some(c) => {
            let grad_v = if denom > 0.0 {
                [2.0 * offset / (denom * denom), -2.0 * amplitude / (denom * denom)]
            } else {
                [0.0, 0.0]
            };
            let var_v = grad_v[0] * grad_v[0] * c[(0, 0)]
                + 2.0 * grad_v[0] * grad_v[1] * c[(0, 1)]
                + grad_v[1] * grad_v[1] * c[(1, 1)];
            FitStdErrors {
                amplitude: c[(0, 0)].max(0.0).sqrt(),
                offset: c[(1, 1)].max(0.0).sqrt(),
                omega_pi: c[(2, 2)].max(0.0).sqrt(),
                phase_offset: c[(3, 3)].max(0.0).sqrt(),
                visibility: var_v.max(0.0).sqrt(),
            }
        }
        None => FitStdErrors {
            amplitude: f64::NAN,
            offset: f64::NAN,
            omega_pi: f64::NAN,
            phase_offset: f64::NAN,
            visibility: f64::NAN,
        },
    };
    let rss: f64 = xs
        .iter()
        .zip(ys)
        .map(|(&x, &y)| (y - model(port, &p, x)).powi(2))
        .sum();

    Ok(FringeFit {
        port,
        amplitude,
        offset,
        omega_pi_est: p[2],
        phase_offset: p[3],
        visibility,
        residual_rms: (rss / n as f64).sqrt(),
        stderr,
        iterations,
    })
}

fn wrap_half_period(phase: f64) -> f64 {
    // The model has period pi in the phase.
    let mut w = phase.rem_euclid(PI);
    if w > FRAC_PI_2 {
        w -= PI;
    }
    w
}

/// `(n_max - n_min) / (n_max + n_min)`; `None` when both are zero.
pub fn visibility_from_extrema(n_max: f64, n_min: f64) -> Option<f64> {
    let sum = n_max + n_min;
    if sum <= 0.0 {
        return None;
    }
    Some((n_max - n_min) / sum)
}

/// Counting-limited phase uncertainty at the quadrature working point,
/// `1 / sqrt(2 N)`. `None` for non-positive `n_photons`.
pub fn phase_std(n_photons: f64) -> Option<f64> {
    if n_photons > 0.0 {
        Some(1.0 / (2.0 * n_photons).sqrt())
    } else {
        None
    }
}

/// Integration time after which `phase_std(rate * T)` reaches `target_sigma_rad`.
pub fn integration_time_for_resolution(count_rate_hz: f64, target_sigma_rad: f64) -> Option<f64> {
    if count_rate_hz > 0.0 && target_sigma_rad > 0.0 {
        Some(0.5 / count_rate_hz / (target_sigma_rad * target_sigma_rad))
    } else {
        None
    }
}

pub fn binomial_count_std(n_gates: u64, p: f64) -> f64 {
    (n_gates as f64 * p * (1.0 - p)).sqrt()
}

/// Rotation-rate resolution corresponding to a phase resolution.
pub fn omega_resolution(geom: &SagnacGeometry, sigma_phase_rad: f64) -> f64 {
    sigma_phase_rad * geom.wavelength_m * SPEED_OF_LIGHT
        / (2.0 * PI * geom.fiber_length_m * geom.coil_diameter_m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optics::omega_pi;

    fn synthetic(port: Port, amplitude: f64, offset: f64, w: f64, phase: f64, n: usize) -> Vec<FringePoint> {
        let p = Vector4::new(amplitude, offset, w, phase);
        (0..n)
            .map(|i| {
                let omega = 10.0 * i as f64 / (n - 1) as f64;
                let y = model(port, &p, omega);
                let other = match port {
                    Port::One => Port::Two,
                    Port::Two => Port::One,
                };
                let y_other = model(other, &p, omega);
                let (mean_net1, mean_net2) = match port {
                    Port::One => (y, y_other),
                    Port::Two => (y_other, y),
                };
                FringePoint {
                    omega,
                    mean_net1,
                    mean_net2,
                    stderr1: 0.0,
                    stderr2: 0.0,
                    samples: 1,
                }
            })
            .collect()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn noiseless_fit_recovers_parameters() {
        let w = omega_pi(&SagnacGeometry::reference());
        for port in [Port::One, Port::Two] {
            let data = synthetic(port, 1000.0, 0.0, w, 0.0, 100);
            let fit = fit_fringe(&data, port, w * 1.02).unwrap();
            assert!(rel(fit.amplitude, 1000.0) < 1e-6, "{fit:?}");
            assert!(fit.offset.abs() < 1e-6 * 1000.0, "{fit:?}");
            assert!(rel(fit.omega_pi_est, w) < 1e-6, "{fit:?}");
            assert!(fit.phase_offset.abs() < 1e-6, "{fit:?}");
            assert!((fit.visibility - 1.0).abs() < 1e-9);
            assert!(fit.residual_rms < 1e-6);
        }
    }

    #[test]
    fn offset_lowers_visibility() {
        let w = omega_pi(&SagnacGeometry::reference());
        let data = synthetic(Port::One, 1000.0, 10.0, w, 0.0, 80);
        let fit = fit_fringe(&data, Port::One, w).unwrap();
        assert!((fit.visibility - 1000.0 / 1020.0).abs() < 1e-9);
        assert!((fit.visibility - 0.980).abs() < 1e-3);
        let from_extrema = visibility_from_extrema(fit.amplitude + fit.offset, fit.offset).unwrap();
        assert!((fit.visibility - from_extrema).abs() < 1e-12);
    }

    #[test]
    fn recovers_phase_offset_and_detuned_period() {
        let data = synthetic(Port::Two, 250.0, 3.0, 2.3, 0.03, 60);
        let fit = fit_fringe(&data, Port::Two, 2.1122).unwrap();
        assert!(rel(fit.omega_pi_est, 2.3) < 1e-6, "{fit:?}");
        assert!((fit.phase_offset - 0.03).abs() < 1e-6);
        assert!(rel(fit.offset, 3.0) < 1e-6);
    }

    #[test]
    fn poisson_weighting_converges() {
        let w = 2.1122;
        let data = synthetic(Port::One, 500.0, 2.0, w, 0.0, 50);
        let opts = FitOptions {
            weighting: Weighting::Poisson,
        };
        let fit = fit_fringe_with(&data, Port::One, w, &opts).unwrap();
        assert!(rel(fit.amplitude, 500.0) < 1e-6);
    }

    #[test]
    fn fit_rejects_bad_data() {
        let w = 2.1122;
        let data = synthetic(Port::One, 100.0, 0.0, w, 0.0, 50);
        assert!(matches!(
            fit_fringe(&data[..5], Port::One, w),
            Err(FitError::TooFewPoints { .. })
        ));
        // 10 points over 0..~1 rad/s: less than a half-period.
        assert!(matches!(
            fit_fringe(&data[..10], Port::One, w),
            Err(FitError::InsufficientSpan { .. })
        ));
        let flat: Vec<FringePoint> = data
            .iter()
            .map(|p| FringePoint {
                mean_net1: 5.0,
                ..*p
            })
            .collect();
        assert_eq!(fit_fringe(&flat, Port::One, w), Err(FitError::Degenerate));
        assert!(matches!(
            fit_fringe(&data, Port::One, -1.0),
            Err(FitError::BadInitialGuess(_))
        ));
    }

    #[test]
    fn phase_wrap() {
        assert!((wrap_half_period(PI + 0.1) - 0.1).abs() < 1e-12);
        assert!((wrap_half_period(-0.1) + 0.1).abs() < 1e-12);
        assert!((wrap_half_period(FRAC_PI_2 + 0.2) - (0.2 - FRAC_PI_2)).abs() < 1e-12);
    }

    #[test]
    fn extrema_visibility() {
        assert_eq!(visibility_from_extrema(100.0, 0.0), Some(1.0));
        assert_eq!(visibility_from_extrema(100.0, 100.0), Some(0.0));
        assert!((visibility_from_extrema(1000.0, 4.0).unwrap() - 0.99203).abs() < 1e-5);
        assert_eq!(visibility_from_extrema(0.0, 0.0), None);
    }

    #[test]
    fn phase_std_values() {
        assert_eq!(phase_std(0.5), Some(1.0));
        assert!((phase_std(5e11).unwrap() - 1e-6).abs() < 1e-18);
        assert!((phase_std(4.0).unwrap() - phase_std(1.0).unwrap() / 2.0).abs() < 1e-15);
        assert_eq!(phase_std(0.0), None);
        assert_eq!(phase_std(-1.0), None);
    }

    #[test]
    fn integration_time_values() {
        assert_eq!(integration_time_for_resolution(1e7, 1e-6), Some(5e4));
        assert!((integration_time_for_resolution(1e7, 1e-3).unwrap() - 0.05).abs() < 1e-15);
        let t1 = integration_time_for_resolution(1e6, 1e-4).unwrap();
        let t2 = integration_time_for_resolution(2e6, 1e-4).unwrap();
        assert!((t2 - t1 / 2.0).abs() < 1e-12 * t1);
        assert_eq!(integration_time_for_resolution(0.0, 1e-6), None);
        assert_eq!(integration_time_for_resolution(1e7, -1e-6), None);
        let t = integration_time_for_resolution(2e4, 1e-6).unwrap();
        assert!((t - 2.5e7).abs() / 2.5e7 < 1e-12);
    }

    #[test]
    fn binomial_std_values() {
        assert_eq!(binomial_count_std(0, 0.3), 0.0);
        assert_eq!(binomial_count_std(1_000_000, 0.5), 500.0);
    }

    #[test]
    fn omega_resolution_values() {
        let g = SagnacGeometry::reference();
        assert!((omega_resolution(&g, PI) - omega_pi(&g)).abs() < 1e-14);
        assert!((omega_resolution(&g, 1e-6) - 6.72e-7).abs() < 1e-9);
        assert_eq!(omega_resolution(&g, 0.0), 0.0);
    }

    proptest::proptest! {
        #[test]
        fn sensitivity_chain_inverts(rate in 1.0f64..1e9, sigma in 1e-8f64..1.0) {
            let t = integration_time_for_resolution(rate, sigma).unwrap();
            let back = phase_std(rate * t).unwrap();
            proptest::prop_assert!((back - sigma).abs() <= 1e-12 * sigma);
        }

        #[test]
        fn round_trip_fit(
            amplitude in 50.0f64..5000.0,
            offset in 0.0f64..50.0,
            w in 2.0f64..2.25,
            phase in -0.1f64..0.1,
        ) {
            let data = synthetic(Port::One, amplitude, offset, w, phase, 64);
            let fit = fit_fringe(&data, Port::One, 2.1122).unwrap();
            proptest::prop_assert!(rel(fit.amplitude, amplitude) < 1e-6);
            proptest::prop_assert!((fit.offset - offset).abs() < 1e-6 * amplitude);
            proptest::prop_assert!(rel(fit.omega_pi_est, w) < 1e-6);
            proptest::prop_assert!((fit.phase_offset - phase).abs() < 1e-6);
        }
    }
}
