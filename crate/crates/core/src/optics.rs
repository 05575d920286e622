//! Exact interferometer physics: the rotation-induced Sagnac phase and the
//! propagation of a single photon's two-mode state through the input beam
//! splitter, the fibre loop and the output beam splitter.
//!
//! Port convention: `amp_a` is the amplitude at port 1 (the port read by
//! APD 1), `amp_b` the amplitude at port 2. A photon launched through the
//! circulator enters at port 2, i.e. the input state is `(0, 1)`.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use num_complex::Complex64;

use crate::error::{ensure, Error, Result};

/// Speed of light in vacuum, m/s (SI exact).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Group index of standard single-mode telecom fibre at 1550 nm.
pub const DEFAULT_GROUP_INDEX: f64 = 1.468;

const NORM_TOLERANCE: f64 = 1e-12;

/// Fibre coil geometry.
///
/// The turn count is implied by `fiber_length_m = N * pi * coil_diameter_m`
/// and is not stored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SagnacGeometry {
    pub fiber_length_m: f64,
    pub coil_diameter_m: f64,
    pub wavelength_m: f64,
    /// Only used for the loop transit time; the Sagnac phase ignores it.
    pub group_index: f64,
}

impl SagnacGeometry {
    pub fn new(
        fiber_length_m: f64,
        coil_diameter_m: f64,
        wavelength_m: f64,
        group_index: f64,
    ) -> Result<Self> {
        let geom = Self {
            fiber_length_m,
            coil_diameter_m,
            wavelength_m,
            group_index,
        };
        geom.validate()?;
        Ok(geom)
    }

    /// 550 m of fibre on a 20 cm spool, probed at 1550 nm.
    pub fn reference() -> Self {
        Self {
            fiber_length_m: 550.0,
            coil_diameter_m: 0.2,
            wavelength_m: 1550e-9,
            group_index: DEFAULT_GROUP_INDEX,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure(
            self.fiber_length_m > 0.0 && self.fiber_length_m.is_finite(),
            "fiber_length_m",
            self.fiber_length_m,
            "must be strictly positive",
        )?;
        ensure(
            self.coil_diameter_m > 0.0 && self.coil_diameter_m.is_finite(),
            "coil_diameter_m",
            self.coil_diameter_m,
            "must be strictly positive",
        )?;
        ensure(
            self.wavelength_m > 100e-9 && self.wavelength_m < 10e-6,
            "wavelength_m",
            self.wavelength_m,
            "must lie in (100 nm, 10 um)",
        )?;
        ensure(
            self.group_index > 0.0 && self.group_index.is_finite(),
            "group_index",
            self.group_index,
            "must be strictly positive",
        )
    }

    pub fn turns(&self) -> f64 {
        self.fiber_length_m / (PI * self.coil_diameter_m)
    }

    /// Total enclosed area of all turns, `L * D / 4`.
    pub fn enclosed_area_m2(&self) -> f64 {
        self.fiber_length_m * self.coil_diameter_m / 4.0
    }
}

impl Default for SagnacGeometry {
    fn default() -> Self {
        Self::reference()
    }
}

/// Phase difference between the counter-propagating paths of a coil
/// rotating at `omega` rad/s about its axis.
pub fn sagnac_phase(geom: &SagnacGeometry, omega: f64) -> f64 {
    2.0 * PI * geom.fiber_length_m * geom.coil_diameter_m * omega
        / (geom.wavelength_m * SPEED_OF_LIGHT)
}

/// Area form of the Sagnac phase, with area and rotation vectors collinear.
pub fn sagnac_phase_from_area(area_m2: f64, omega: f64, wavelength_m: f64) -> f64 {
    8.0 * PI * area_m2 * omega / (wavelength_m * SPEED_OF_LIGHT)
}

/// Rotation rate at which the Sagnac phase reaches pi.
pub fn omega_pi(geom: &SagnacGeometry) -> f64 {
    geom.wavelength_m * SPEED_OF_LIGHT / (2.0 * geom.fiber_length_m * geom.coil_diameter_m)
}

/// Single-pass transit time of the loop, seconds.
pub fn propagation_time(geom: &SagnacGeometry) -> f64 {
    geom.group_index * geom.fiber_length_m / SPEED_OF_LIGHT
}

/// Amplitudes of a single photon over the two interferometer ports.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoModeState {
    pub amp_a: Complex64,
    pub amp_b: Complex64,
}

impl TwoModeState {
    pub fn new(amp_a: Complex64, amp_b: Complex64) -> Result<Self> {
        let state = Self { amp_a, amp_b };
        let norm = state.norm_sqr();
        if (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::NotNormalized { norm });
        }
        Ok(state)
    }

    /// One photon entering at port 2.
    pub fn port2_input() -> Self {
        Self {
            amp_a: Complex64::new(0.0, 0.0),
            amp_b: Complex64::new(1.0, 0.0),
        }
    }

    pub fn port1_input() -> Self {
        Self {
            amp_a: Complex64::new(1.0, 0.0),
            amp_b: Complex64::new(0.0, 0.0),
        }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amp_a.norm_sqr() + self.amp_b.norm_sqr()
    }

    /// Detection probabilities `(|amp_a|^2, |amp_b|^2)`.
    pub fn probabilities(&self) -> (f64, f64) {
        (self.amp_a.norm_sqr(), self.amp_b.norm_sqr())
    }

    fn apply_matrix(&self, m: [[f64; 2]; 2]) -> Self {
        Self {
            amp_a: self.amp_a * m[0][0] + self.amp_b * m[0][1],
            amp_b: self.amp_a * m[1][0] + self.amp_b * m[1][1],
        }
    }
}

/// Input beam splitter, `(1/sqrt 2) [[1, 1], [1, -1]]`. Involutive.
pub fn apply_bs_in(state: &TwoModeState) -> TwoModeState {
    state.apply_matrix([
        [FRAC_1_SQRT_2, FRAC_1_SQRT_2],
        [FRAC_1_SQRT_2, -FRAC_1_SQRT_2],
    ])
}

/// Loop operator `diag(1, e^{i delta_phi})`.
pub fn apply_sagnac(state: &TwoModeState, delta_phi: f64) -> TwoModeState {
    TwoModeState {
        amp_a: state.amp_a,
        amp_b: state.amp_b * Complex64::from_polar(1.0, delta_phi),
    }
}

/// Output beam splitter, `(1/sqrt 2) [[1, 1], [-1, 1]]`. Differs from the
/// input splitter because the loop swaps the arms.
pub fn apply_bs_out(state: &TwoModeState) -> TwoModeState {
    state.apply_matrix([
        [FRAC_1_SQRT_2, FRAC_1_SQRT_2],
        [-FRAC_1_SQRT_2, FRAC_1_SQRT_2],
    ])
}

/// Full operator chain for a photon entering at port 2.
pub fn propagate(state: &TwoModeState, delta_phi: f64) -> TwoModeState {
    apply_bs_out(&apply_sagnac(&apply_bs_in(state), delta_phi))
}

/// Closed-form port probabilities `(sin^2(dphi/2), cos^2(dphi/2))`.
///
/// Both are evaluated directly so each stays accurate near its own node;
/// the sum is one to within a couple of ulps.
pub fn output_probabilities(delta_phi: f64) -> (f64, f64) {
    let (s, c) = (0.5 * delta_phi).sin_cos();
    (s * s, c * c)
}
