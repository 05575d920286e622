//! Heralded single-photon source, described only by what leaves its output
//! fibre: the photon-number content of a heralded gate and the herald rate.

use rand::Rng;

use crate::error::{ensure, Result};
use crate::optics::{propagation_time, SagnacGeometry};

/// Germanium herald detector saturation, heralds per second.
pub const HERALD_SATURATION_HZ: f64 = 1.2e5;

/// Largest probability mass allowed for gates with more than two photons.
pub const MAX_RESIDUAL_MASS: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeraldedSourceSpec {
    pub herald_rate_hz: f64,
    pub p0: f64,
    pub p1: f64,
    pub p2: f64,
    /// Lumped transmission from the source output into the loop.
    pub loop_injection_transmission: f64,
}

impl HeraldedSourceSpec {
    pub fn new(
        herald_rate_hz: f64,
        p0: f64,
        p1: f64,
        p2: f64,
        loop_injection_transmission: f64,
    ) -> Result<Self> {
        let spec = Self {
            herald_rate_hz,
            p0,
            p1,
            p2,
            loop_injection_transmission,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// 10 uW pump: 1e5 heralds/s, P(1) = 0.17, P(2) = 5e-3.
    ///
    /// The quoted P(0) = 0.81 leaves 1.5 % of the mass unassigned; it is
    /// given to the vacuum term so that P(1), P(2) and the mean photon
    /// number 0.18 are kept as quoted.
    pub fn reference() -> Self {
        Self {
            herald_rate_hz: 1e5,
            p0: 1.0 - 0.17 - 0.005,
            p1: 0.17,
            p2: 0.005,
            loop_injection_transmission: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure(
            self.herald_rate_hz >= 0.0,
            "herald_rate_hz",
            self.herald_rate_hz,
            "must be non-negative",
        )?;
        ensure(
            self.herald_rate_hz <= HERALD_SATURATION_HZ,
            "herald_rate_hz",
            self.herald_rate_hz,
            "herald detector saturates above 1.2e5 counts/s",
        )?;
        for (name, p) in [("p0", self.p0), ("p1", self.p1), ("p2", self.p2)] {
            ensure((0.0..=1.0).contains(&p), name, p, "must be a probability")?;
        }
        let total = self.p0 + self.p1 + self.p2;
        ensure(
            total <= 1.0 + 1e-12,
            "p0+p1+p2",
            total,
            "photon-number probabilities exceed one",
        )?;
        ensure(
            1.0 - total <= MAX_RESIDUAL_MASS,
            "p0+p1+p2",
            total,
            "residual mass above two photons must not exceed 1e-3",
        )?;
        ensure(
            self.loop_injection_transmission > 0.0 && self.loop_injection_transmission <= 1.0,
            "loop_injection_transmission",
            self.loop_injection_transmission,
            "must lie in (0, 1]",
        )
    }

    pub fn mean_photon_number(&self) -> f64 {
        self.p1 + 2.0 * self.p2
    }

    /// Photon number of one heralded gate. Mass above two photons lands in
    /// the two-photon bucket.
    pub fn sample_photon_number<R: Rng + ?Sized>(&self, rng: &mut R) -> u8 {
        let u: f64 = rng.random();
        if u < self.p0 {
            0
        } else if u < self.p0 + self.p1 {
            1
        } else {
            2
        }
    }
}

impl Default for HeraldedSourceSpec {
    fn default() -> Self {
        Self::reference()
    }
}

/// Heralded photons per second reaching the loop.
pub fn heralded_photon_rate(spec: &HeraldedSourceSpec) -> f64 {
    spec.herald_rate_hz * spec.mean_photon_number() * spec.loop_injection_transmission
}

/// Expected number of photons simultaneously inside the loop.
pub fn mean_occupancy(spec: &HeraldedSourceSpec, geom: &SagnacGeometry) -> f64 {
    heralded_photon_rate(spec) * propagation_time(geom)
}
