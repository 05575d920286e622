//! Monte Carlo replay of the rotating-loop measurement.
//!
//! The loop is spun up to `omega_max` and left to coast down. Heralded gates
//! arrive at the detectors throughout the spin-down; each gate's photons are
//! routed through the interferometer at the instantaneous rotation rate and
//! both APDs are sampled. Clicks are accumulated in fixed-length bins, and a
//! run repeats the whole spin-down `n_records` times.
//!
//! Every `(record, bin)` cell owns an RNG seeded from [`cell_seed`], so the
//! output is the same whether the cells run sequentially or on a thread pool.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;

use crate::detector::{expected_dark_rate, ApdSpec};
use crate::error::{ensure, Error, Result};
use crate::optics::{output_probabilities, sagnac_phase, SagnacGeometry};
use crate::source::HeraldedSourceSpec;

/// Rotation-stage ceiling, rad/s.
pub const OMEGA_MAX_LIMIT: f64 = 10.0;

/// Turns completed during the default 60 s spin-down.
pub const DEFAULT_TURNS: f64 = 40.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecayModel {
    /// `omega_max - decay_param * t`, stopping at zero. `decay_param` is the
    /// deceleration in rad/s^2; zero gives a constant rate.
    Linear,
    /// `omega_max * exp(-t / decay_param)`, `decay_param` in seconds.
    Exponential,
}

impl DecayModel {
    pub fn as_str(&self) -> &'static str {
        match self {
            DecayModel::Linear => "linear",
            DecayModel::Exponential => "exponential",
        }
    }
}

impl std::str::FromStr for DecayModel {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "linear" => Ok(DecayModel::Linear),
            "exponential" => Ok(DecayModel::Exponential),
            other => Err(format!("unknown decay model `{other}` (expected linear|exponential)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationProfile {
    pub omega_max: f64,
    pub decay_model: DecayModel,
    pub decay_param: f64,
    pub duration_s: f64,
}

impl RotationProfile {
    /// Linear coast-down from 10 rad/s covering 40 turns in 60 s.
    pub fn reference() -> Self {
        Self::linear_for_turns(OMEGA_MAX_LIMIT, DEFAULT_TURNS, 60.0)
    }

    /// Constant-rate profile.
    pub fn constant(omega: f64, duration_s: f64) -> Self {
        Self {
            omega_max: omega,
            decay_model: DecayModel::Linear,
            decay_param: 0.0,
            duration_s,
        }
    }

    /// Linear deceleration that brings the loop to rest after `turns` turns.
    /// The stop happens at `4 pi turns / omega_max`, which must be within
    /// `duration_s` for the turn count to hold.
    pub fn linear_for_turns(omega_max: f64, turns: f64, duration_s: f64) -> Self {
        let angle = 2.0 * PI * turns;
        Self {
            omega_max,
            decay_model: DecayModel::Linear,
            decay_param: omega_max * omega_max / (2.0 * angle),
            duration_s,
        }
    }

    /// Exponential decay whose integral over `duration_s` equals `turns` turns.
    pub fn exponential_for_turns(omega_max: f64, turns: f64, duration_s: f64) -> Result<Self> {
        let angle = 2.0 * PI * turns;
        ensure(
            angle < omega_max * duration_s,
            "turns",
            turns,
            "unreachable without exceeding omega_max for the whole duration",
        )?;
        // angle(tau) = omega_max * tau * (1 - exp(-T/tau)) is increasing in tau.
        let covered = |tau: f64| omega_max * tau * (1.0 - (-duration_s / tau).exp());
        let (mut lo, mut hi) = (1e-9 * duration_s, duration_s);
        while covered(hi) < angle {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if covered(mid) < angle {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(Self {
            omega_max,
            decay_model: DecayModel::Exponential,
            decay_param: 0.5 * (lo + hi),
            duration_s,
        })
    }

    pub fn validate(&self) -> Result<()> {
        ensure(
            (0.0..=OMEGA_MAX_LIMIT).contains(&self.omega_max),
            "omega_max",
            self.omega_max,
            "must lie in [0, 10] rad/s",
        )?;
        ensure(
            self.duration_s > 0.0 && self.duration_s.is_finite(),
            "duration_s",
            self.duration_s,
            "must be strictly positive",
        )?;
        match self.decay_model {
            DecayModel::Linear => ensure(
                self.decay_param >= 0.0 && self.decay_param.is_finite(),
                "decay_param",
                self.decay_param,
                "linear deceleration must be non-negative",
            ),
            DecayModel::Exponential => ensure(
                self.decay_param > 0.0,
                "decay_param",
                self.decay_param,
                "exponential time constant must be strictly positive",
            ),
        }
    }

    pub fn omega_at(&self, t: f64) -> Result<f64> {
        if !(0.0..=self.duration_s).contains(&t) {
            return Err(Error::TimeOutOfRange {
                t,
                duration: self.duration_s,
            });
        }
        Ok(self.rate(t))
    }

    fn rate(&self, t: f64) -> f64 {
        match self.decay_model {
            DecayModel::Linear => (self.omega_max - self.decay_param * t).max(0.0),
            DecayModel::Exponential => self.omega_max * (-t / self.decay_param).exp(),
        }
    }

    /// Angle swept between `t0` and `t1` (closed form).
    pub fn angle_between(&self, t0: f64, t1: f64) -> f64 {
        self.angle_to(t1) - self.angle_to(t0)
    }

    fn angle_to(&self, t: f64) -> f64 {
        match self.decay_model {
            DecayModel::Linear => {
                if self.decay_param == 0.0 {
                    return self.omega_max * t;
                }
                let t = t.min(self.omega_max / self.decay_param);
                self.omega_max * t - 0.5 * self.decay_param * t * t
            }
            DecayModel::Exponential => {
                self.omega_max * self.decay_param * (1.0 - (-t / self.decay_param).exp())
            }
        }
    }
}

impl Default for RotationProfile {
    fn default() -> Self {
        Self::reference()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GatePlacement {
    /// Gates evenly spaced through the bin, `round(rate * bin_time)` of them.
    Lattice,
    /// Gates arrive as a Poisson process at `gates_per_second`.
    Poisson,
}

impl GatePlacement {
    pub fn as_str(&self) -> &'static str {
        match self {
            GatePlacement::Lattice => "lattice",
            GatePlacement::Poisson => "poisson",
        }
    }
}

impl std::str::FromStr for GatePlacement {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "lattice" => Ok(GatePlacement::Lattice),
            "poisson" => Ok(GatePlacement::Poisson),
            other => Err(format!("unknown gate placement `{other}` (expected lattice|poisson)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunConfig {
    pub bin_time_s: f64,
    pub n_records: u32,
    /// Herald trigger rate reaching the detectors.
    pub gates_per_second: f64,
    pub rng_seed: u64,
    pub gate_placement: GatePlacement,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        ensure(
            self.bin_time_s > 0.0 && self.bin_time_s.is_finite(),
            "bin_time_s",
            self.bin_time_s,
            "must be strictly positive",
        )?;
        ensure(
            self.n_records >= 1,
            "n_records",
            self.n_records as f64,
            "at least one record is required",
        )?;
        ensure(
            self.gates_per_second >= 0.0 && self.gates_per_second.is_finite(),
            "gates_per_second",
            self.gates_per_second,
            "must be non-negative",
        )
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            bin_time_s: 0.3,
            n_records: 5,
            gates_per_second: 1e5,
            rng_seed: 0,
            gate_placement: GatePlacement::Lattice,
        }
    }
}

/// One integration bin of one record.
#[derive(Debug, Clone, PartialEq)]
pub struct BinRecord {
    pub record_id: u32,
    pub bin_index: u32,
    /// Time-averaged rotation rate over the bin.
    pub omega_mean: f64,
    /// Max minus min of the rotation rate within the bin.
    pub omega_spread: f64,
    pub counts_port1: u64,
    pub counts_port2: u64,
    pub expected_dark_port1: f64,
    pub expected_dark_port2: f64,
    // Ground truth, not part of the CSV output.
    pub gates: u64,
    /// Gates with at least one photon inside the loop.
    pub occupied_gates: u64,
    /// Gates whose photons reached both ports.
    pub split_gates: u64,
}

/// Substream seed of one `(record, bin)` cell:
/// `splitmix64(splitmix64(master) + ((record << 32) | bin))`, wrapping.
pub fn cell_seed(master: u64, record: u32, bin: u32) -> u64 {
    let cell = ((record as u64) << 32) | bin as u64;
    splitmix64(splitmix64(master).wrapping_add(cell))
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn bins_per_record(cfg: &RunConfig, profile: &RotationProfile) -> u32 {
    (profile.duration_s / cfg.bin_time_s + 1e-9).floor() as u32
}

struct Setup<'a> {
    cfg: &'a RunConfig,
    geom: &'a SagnacGeometry,
    src: &'a HeraldedSourceSpec,
    det1: &'a ApdSpec,
    det2: &'a ApdSpec,
    profile: &'a RotationProfile,
}

/// Runs every record of the protocol and returns the bins in
/// `(record, bin)` order.
pub fn simulate_run(
    cfg: &RunConfig,
    geom: &SagnacGeometry,
    src: &HeraldedSourceSpec,
    det1: &ApdSpec,
    det2: &ApdSpec,
    profile: &RotationProfile,
) -> Result<Vec<BinRecord>> {
    cfg.validate()?;
    geom.validate()?;
    src.validate()?;
    det1.validate()?;
    det2.validate()?;
    profile.validate()?;
    let n_bins = bins_per_record(cfg, profile);
    if n_bins == 0 {
        return Err(Error::EmptyInput("rotation profile shorter than one bin"));
    }
    let setup = Setup {
        cfg,
        geom,
        src,
        det1,
        det2,
        profile,
    };
    let cells = cfg.n_records as u64 * n_bins as u64;
    Ok((0..cells)
        .into_par_iter()
        .map(|idx| {
            let record = (idx / n_bins as u64) as u32;
            let bin = (idx % n_bins as u64) as u32;
            setup.simulate_bin(record, bin)
        })
        .collect())
}

#[derive(Default)]
struct Tally {
    gates: u64,
    occupied: u64,
    split: u64,
    clicks1: u64,
    clicks2: u64,
}

impl Setup<'_> {
    fn simulate_bin(&self, record: u32, bin: u32) -> BinRecord {
        let mut rng = ChaCha8Rng::seed_from_u64(cell_seed(self.cfg.rng_seed, record, bin));
        let bin_time = self.cfg.bin_time_s;
        let t0 = bin as f64 * bin_time;
        let t1 = t0 + bin_time;
        let mut tally = Tally::default();

        match self.cfg.gate_placement {
            GatePlacement::Lattice => {
                let n = (self.cfg.gates_per_second * bin_time).round() as u64;
                let spacing = bin_time / n.max(1) as f64;
                for k in 0..n {
                    let t = t0 + (k as f64 + 0.5) * spacing;
                    self.gate(t, &mut rng, &mut tally);
                }
            }
            GatePlacement::Poisson => {
                if self.cfg.gates_per_second > 0.0 {
                    let wait = Exp::new(self.cfg.gates_per_second).expect("positive rate");
                    let mut t = t0 + wait.sample(&mut rng);
                    while t < t1 {
                        self.gate(t, &mut rng, &mut tally);
                        t += wait.sample(&mut rng);
                    }
                }
            }
        }

        let start = self.profile.rate(t0);
        let end = self.profile.rate(t1);
        BinRecord {
            record_id: record,
            bin_index: bin,
            omega_mean: self.profile.angle_between(t0, t1) / bin_time,
            omega_spread: (start - end).abs(),
            counts_port1: tally.clicks1,
            counts_port2: tally.clicks2,
            expected_dark_port1: expected_dark_rate(self.det1, self.cfg.gates_per_second) * bin_time,
            expected_dark_port2: expected_dark_rate(self.det2, self.cfg.gates_per_second) * bin_time,
            gates: tally.gates,
            occupied_gates: tally.occupied,
            split_gates: tally.split,
        }
    }

    fn gate(&self, t: f64, rng: &mut ChaCha8Rng, tally: &mut Tally) {
        let omega = self.profile.rate(t);
        let (p_port1, _) = output_probabilities(sagnac_phase(self.geom, omega));
        let emitted = self.src.sample_photon_number(rng);
        let transmission = self.src.loop_injection_transmission;
        let mut at_port1 = 0u32;
        let mut at_port2 = 0u32;
        for _ in 0..emitted {
            if transmission < 1.0 && rng.random::<f64>() >= transmission {
                continue;
            }
            if rng.random::<f64>() < p_port1 {
                at_port1 += 1;
            } else {
                at_port2 += 1;
            }
        }
        tally.gates += 1;
        if at_port1 + at_port2 > 0 {
            tally.occupied += 1;
        }
        if at_port1 > 0 && at_port2 > 0 {
            tally.split += 1;
        }
        if self.det1.sample_click(at_port1, rng) {
            tally.clicks1 += 1;
        }
        if self.det2.sample_click(at_port2, rng) {
            tally.clicks2 += 1;
        }
    }
}

/// Net counts `(port1, port2)` after removing the expected dark background,
/// floored at zero.
pub fn subtract_dark(rec: &BinRecord) -> (f64, f64) {
    (
        (rec.counts_port1 as f64 - rec.expected_dark_port1).max(0.0),
        (rec.counts_port2 as f64 - rec.expected_dark_port2).max(0.0),
    )
}

/// Dark-subtracted counts of one bin at its mean rotation rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetSample {
    pub omega: f64,
    pub net1: f64,
    pub net2: f64,
}

impl From<&BinRecord> for NetSample {
    fn from(rec: &BinRecord) -> Self {
        let (net1, net2) = subtract_dark(rec);
        Self {
            omega: rec.omega_mean,
            net1,
            net2,
        }
    }
}

/// One cell of the averaged fringe.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FringePoint {
    /// Mean rotation rate of the bins in the cell.
    pub omega: f64,
    pub mean_net1: f64,
    pub mean_net2: f64,
    /// Standard error of the mean; zero for single-sample cells.
    pub stderr1: f64,
    pub stderr2: f64,
    pub samples: usize,
}

/// Groups all bins onto an `omega_grid_step` lattice and averages the net
/// counts per cell.
pub fn average_records(records: &[BinRecord], omega_grid_step: f64) -> Result<Vec<FringePoint>> {
    let samples: Vec<NetSample> = records.iter().map(NetSample::from).collect();
    average_net_samples(&samples, omega_grid_step)
}

pub fn average_net_samples(samples: &[NetSample], omega_grid_step: f64) -> Result<Vec<FringePoint>> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("no bins to average"));
    }
    ensure(
        omega_grid_step > 0.0 && omega_grid_step.is_finite(),
        "omega_grid_step",
        omega_grid_step,
        "must be strictly positive",
    )?;
    let mut cells: BTreeMap<i64, Vec<&NetSample>> = BTreeMap::new();
    for s in samples {
        let key = (s.omega / omega_grid_step).round() as i64;
        cells.entry(key).or_default().push(s);
    }
    Ok(cells
        .into_values()
        .map(|members| {
            let k = members.len() as f64;
            let omega = members.iter().map(|s| s.omega).sum::<f64>() / k;
            let (mean_net1, stderr1) = mean_and_stderr(members.iter().map(|s| s.net1));
            let (mean_net2, stderr2) = mean_and_stderr(members.iter().map(|s| s.net2));
            FringePoint {
                omega,
                mean_net1,
                mean_net2,
                stderr1,
                stderr2,
                samples: members.len(),
            }
        })
        .collect())
}

fn mean_and_stderr(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    if n < 2.0 {
        return (mean, 0.0);
    }
    let ss: f64 = values.map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1.0)).sqrt() / n.sqrt())
}
