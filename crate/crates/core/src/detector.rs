//! Gated InGaAs avalanche photodiode: a threshold detector armed for a short
//! window on every herald.

use rand::Rng;

use crate::error::{ensure, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApdSpec {
    pub efficiency: f64,
    pub dark_prob_per_ns: f64,
    pub gate_ns: f64,
}

impl ApdSpec {
    pub fn new(efficiency: f64, dark_prob_per_ns: f64, gate_ns: f64) -> Result<Self> {
        let spec = Self {
            efficiency,
            dark_prob_per_ns,
            gate_ns,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// eta = 0.1, 5e-5 dark counts per ns, 5 ns gates.
    pub fn reference() -> Self {
        Self {
            efficiency: 0.1,
            dark_prob_per_ns: 5e-5,
            gate_ns: 5.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure(
            (0.0..=1.0).contains(&self.efficiency),
            "efficiency",
            self.efficiency,
            "must lie in [0, 1]",
        )?;
        ensure(
            self.dark_prob_per_ns >= 0.0 && self.dark_prob_per_ns.is_finite(),
            "dark_prob_per_ns",
            self.dark_prob_per_ns,
            "must be non-negative",
        )?;
        ensure(
            self.gate_ns > 0.0 && self.gate_ns.is_finite(),
            "gate_ns",
            self.gate_ns,
            "must be strictly positive",
        )?;
        let per_gate = dark_prob_per_gate(self);
        ensure(
            per_gate < 0.5,
            "dark_prob_per_gate",
            per_gate,
            "dark probability per gate must stay below 0.5",
        )
    }

    /// Probability that a gate with `photons_incident` photons fires.
    pub fn click_probability(&self, photons_incident: u32) -> f64 {
        let miss = (1.0 - self.efficiency).powi(photons_incident as i32);
        1.0 - miss * (1.0 - dark_prob_per_gate(self))
    }

    /// Draws one gate outcome. Photon absorption and dark counts are
    /// independent; the detector does not resolve photon number.
    pub fn sample_click<R: Rng + ?Sized>(&self, photons_incident: u32, rng: &mut R) -> bool {
        let u: f64 = rng.random();
        u < self.click_probability(photons_incident)
    }
}

impl Default for ApdSpec {
    fn default() -> Self {
        Self::reference()
    }
}

pub fn dark_prob_per_gate(spec: &ApdSpec) -> f64 {
    spec.dark_prob_per_ns * spec.gate_ns
}

/// Mean dark counts per second when the detector is gated at `trigger_rate_hz`.
pub fn expected_dark_rate(spec: &ApdSpec, trigger_rate_hz: f64) -> f64 {
    trigger_rate_hz * dark_prob_per_gate(spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn click_rate(spec: &ApdSpec, photons: u32, trials: u32, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let hits = (0..trials).filter(|_| spec.sample_click(photons, &mut rng)).count();
        hits as f64 / trials as f64
    }

    #[test]
    fn dark_probability_per_gate() {
        assert!((dark_prob_per_gate(&ApdSpec::reference()) - 2.5e-4).abs() < 1e-18);
        assert_eq!(dark_prob_per_gate(&ApdSpec::new(0.1, 0.0, 7.0).unwrap()), 0.0);
        let wide = ApdSpec::new(0.1, 5e-5, 10.0).unwrap();
        assert!((dark_prob_per_gate(&wide) - 5e-4).abs() < 1e-18);
    }

    #[test]
    fn dark_rate() {
        let spec = ApdSpec::reference();
        assert_eq!(expected_dark_rate(&spec, 1e5), 25.0);
        assert_eq!(expected_dark_rate(&spec, 0.0), 0.0);
        assert!((expected_dark_rate(&spec, 2e5) - 2.0 * expected_dark_rate(&spec, 1e5)).abs() < 1e-12);
    }

    #[test]
    fn deterministic_extremes() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let perfect = ApdSpec::new(1.0, 0.0, 5.0).unwrap();
        assert!((0..1000).all(|_| perfect.sample_click(1, &mut rng)));
        let blind = ApdSpec::new(0.0, 0.0, 5.0).unwrap();
        assert!((0..1000).all(|_| !blind.sample_click(0, &mut rng)));
        assert!((0..1000).all(|_| perfect.sample_click(2, &mut rng)));
    }

    #[test]
    fn single_photon_click_frequency() {
        let spec = ApdSpec::reference();
        let p = 1.0 - 0.9 * (1.0 - 2.5e-4);
        assert!((spec.click_probability(1) - p).abs() < 1e-15);
        let n = 1_000_000;
        let f = click_rate(&spec, 1, n, 11);
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        assert!((f - p).abs() < 3.0 * sigma, "{f} vs {p}");
    }

    #[test]
    fn dark_only_click_frequency() {
        let spec = ApdSpec::reference();
        let p = 2.5e-4;
        let n = 1_000_000;
        let f = click_rate(&spec, 0, n, 12);
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        assert!((f - p).abs() < 3.0 * sigma, "{f}");
    }

    #[test]
    fn click_probability_is_monotone() {
        let base = ApdSpec::reference();
        for k in 0..5 {
            assert!(base.click_probability(k + 1) >= base.click_probability(k));
        }
        for eta in [0.0, 0.1, 0.5, 0.9] {
            let a = ApdSpec::new(eta, 5e-5, 5.0).unwrap();
            let b = ApdSpec::new(eta + 0.1, 5e-5, 5.0).unwrap();
            assert!(b.click_probability(1) >= a.click_probability(1));
            let c = ApdSpec::new(eta, 1e-4, 5.0).unwrap();
            assert!(c.click_probability(1) >= a.click_probability(1));
        }
    }

    #[test]
    fn fixed_seed_reproducible() {
        let spec = ApdSpec::reference();
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..256).map(|_| spec.sample_click(1, &mut rng)).collect::<Vec<_>>()
        };
        assert_eq!(draw(99), draw(99));
    }

    #[test]
    fn validation() {
        assert!(ApdSpec::new(1.1, 5e-5, 5.0).is_err());
        assert!(ApdSpec::new(0.1, -1.0, 5.0).is_err());
        assert!(ApdSpec::new(0.1, 5e-5, 0.0).is_err());
        assert!(ApdSpec::new(0.1, 0.1, 5.0).is_err());
    }
}
