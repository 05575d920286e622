//! Line-oriented `key = value` configuration with dotted keys.
//!
//! ```text
//! # comment
//! geometry.fiber_length_m = 550
//! detector1.gate_ns = 5   # trailing comments are fine
//! ```
//!
//! The three `geometry.*` length keys are required; every other key falls
//! back to the reference setup. Unknown or repeated keys are errors.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::analysis::Weighting;
use crate::detector::ApdSpec;
use crate::error::Error as ParamError;
use crate::experiment::{RotationProfile, RunConfig};
use crate::optics::SagnacGeometry;
use crate::source::HeraldedSourceSpec;

pub const REQUIRED_KEYS: [&str; 3] = [
    "geometry.fiber_length_m",
    "geometry.coil_diameter_m",
    "geometry.wavelength_m",
];

pub const KNOWN_KEYS: [&str; 26] = [
    "geometry.fiber_length_m",
    "geometry.coil_diameter_m",
    "geometry.wavelength_m",
    "geometry.group_index",
    "source.herald_rate_hz",
    "source.p0",
    "source.p1",
    "source.p2",
    "source.loop_injection_transmission",
    "detector1.efficiency",
    "detector1.dark_prob_per_ns",
    "detector1.gate_ns",
    "detector2.efficiency",
    "detector2.dark_prob_per_ns",
    "detector2.gate_ns",
    "rotation.omega_max",
    "rotation.decay_model",
    "rotation.decay_param",
    "rotation.duration_s",
    "run.bin_time_s",
    "run.n_records",
    "run.gates_per_second",
    "run.rng_seed",
    "run.gate_placement",
    "analysis.omega_grid_step",
    "analysis.weighting",
];

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: duplicate key `{key}`")]
    DuplicateKey { line: usize, key: String },
    #[error("missing required key `{0}`")]
    MissingKey(&'static str),
    #[error("key `{key}`: cannot parse `{value}`: {reason}")]
    BadValue {
        key: String,
        value: String,
        reason: String,
    },
    #[error("key `{key}`: {source}")]
    Invalid { key: String, source: ParamError },
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// Everything a run needs, keyed by `section.field` in the config file.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub geometry: SagnacGeometry,
    pub source: HeraldedSourceSpec,
    pub detector1: ApdSpec,
    pub detector2: ApdSpec,
    pub rotation: RotationProfile,
    pub run: RunConfig,
    /// `run.rng_seed` when the file sets it; `run.rng_seed` itself is 0 otherwise.
    pub seed: Option<u64>,
    pub omega_grid_step: f64,
    pub weighting: Weighting,
}

impl SimulationConfig {
    pub fn reference() -> Self {
        Self {
            geometry: SagnacGeometry::reference(),
            source: HeraldedSourceSpec::reference(),
            detector1: ApdSpec::reference(),
            detector2: ApdSpec::reference(),
            rotation: RotationProfile::reference(),
            run: RunConfig::default(),
            seed: None,
            omega_grid_step: 0.1,
            weighting: Weighting::Unweighted,
        }
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries: BTreeMap<&'static str, String> = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(ConfigError::Syntax {
                    line,
                    text: raw.to_string(),
                });
            };
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() || value.is_empty() {
                return Err(ConfigError::Syntax {
                    line,
                    text: raw.to_string(),
                });
            }
            let Some(known) = KNOWN_KEYS.iter().find(|k| **k == key) else {
                return Err(ConfigError::UnknownKey {
                    line,
                    key: key.to_string(),
                });
            };
            if entries.insert(known, value.to_string()).is_some() {
                return Err(ConfigError::DuplicateKey {
                    line,
                    key: key.to_string(),
                });
            }
        }
        for key in REQUIRED_KEYS {
            if !entries.contains_key(key) {
                return Err(ConfigError::MissingKey(key));
            }
        }

        let mut cfg = Self::reference();
        let mut get = Fields { entries: &entries };
        let g = &mut cfg.geometry;
        get.f64("geometry.fiber_length_m", &mut g.fiber_length_m)?;
        get.f64("geometry.coil_diameter_m", &mut g.coil_diameter_m)?;
        get.f64("geometry.wavelength_m", &mut g.wavelength_m)?;
        get.f64("geometry.group_index", &mut g.group_index)?;
        let s = &mut cfg.source;
        get.f64("source.herald_rate_hz", &mut s.herald_rate_hz)?;
        get.f64("source.p0", &mut s.p0)?;
        get.f64("source.p1", &mut s.p1)?;
        get.f64("source.p2", &mut s.p2)?;
        get.f64("source.loop_injection_transmission", &mut s.loop_injection_transmission)?;
        for (prefix, det) in [("detector1", &mut cfg.detector1), ("detector2", &mut cfg.detector2)] {
            get.f64_dyn(prefix, "efficiency", &mut det.efficiency)?;
            get.f64_dyn(prefix, "dark_prob_per_ns", &mut det.dark_prob_per_ns)?;
            get.f64_dyn(prefix, "gate_ns", &mut det.gate_ns)?;
        }
        let r = &mut cfg.rotation;
        get.f64("rotation.omega_max", &mut r.omega_max)?;
        get.parsed("rotation.decay_model", &mut r.decay_model)?;
        get.f64("rotation.decay_param", &mut r.decay_param)?;
        get.f64("rotation.duration_s", &mut r.duration_s)?;
        let run = &mut cfg.run;
        get.f64("run.bin_time_s", &mut run.bin_time_s)?;
        get.parsed("run.n_records", &mut run.n_records)?;
        get.f64("run.gates_per_second", &mut run.gates_per_second)?;
        get.parsed("run.gate_placement", &mut run.gate_placement)?;
        if entries.contains_key("run.rng_seed") {
            get.parsed("run.rng_seed", &mut run.rng_seed)?;
            cfg.seed = Some(run.rng_seed);
        }
        get.f64("analysis.omega_grid_step", &mut cfg.omega_grid_step)?;
        get.parsed("analysis.weighting", &mut cfg.weighting)?;

        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let tag = |section: &str| {
            let section = section.to_string();
            move |source: ParamError| ConfigError::Invalid {
                key: match &source {
                    ParamError::InvalidParameter { name, .. } => format!("{section}.{name}"),
                    _ => section.clone(),
                },
                source,
            }
        };
        self.geometry.validate().map_err(tag("geometry"))?;
        self.source.validate().map_err(tag("source"))?;
        self.detector1.validate().map_err(tag("detector1"))?;
        self.detector2.validate().map_err(tag("detector2"))?;
        self.rotation.validate().map_err(tag("rotation"))?;
        self.run.validate().map_err(tag("run"))?;
        if !(self.omega_grid_step > 0.0 && self.omega_grid_step.is_finite()) {
            return Err(ConfigError::Invalid {
                key: "analysis.omega_grid_step".into(),
                source: ParamError::InvalidParameter {
                    name: "omega_grid_step",
                    value: self.omega_grid_step,
                    reason: "must be strictly positive",
                },
            });
        }
        Ok(())
    }

    /// Canonical text form; `parse(render())` reproduces the config.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        let g = &self.geometry;
        kv("geometry.fiber_length_m", g.fiber_length_m.to_string());
        kv("geometry.coil_diameter_m", g.coil_diameter_m.to_string());
        kv("geometry.wavelength_m", g.wavelength_m.to_string());
        kv("geometry.group_index", g.group_index.to_string());
        let s = &self.source;
        kv("source.herald_rate_hz", s.herald_rate_hz.to_string());
        kv("source.p0", s.p0.to_string());
        kv("source.p1", s.p1.to_string());
        kv("source.p2", s.p2.to_string());
        kv("source.loop_injection_transmission", s.loop_injection_transmission.to_string());
        for (prefix, det) in [("detector1", &self.detector1), ("detector2", &self.detector2)] {
            kv(&format!("{prefix}.efficiency"), det.efficiency.to_string());
            kv(&format!("{prefix}.dark_prob_per_ns"), det.dark_prob_per_ns.to_string());
            kv(&format!("{prefix}.gate_ns"), det.gate_ns.to_string());
        }
        let r = &self.rotation;
        kv("rotation.omega_max", r.omega_max.to_string());
        kv("rotation.decay_model", r.decay_model.as_str().to_string());
        kv("rotation.decay_param", r.decay_param.to_string());
        kv("rotation.duration_s", r.duration_s.to_string());
        let run = &self.run;
        kv("run.bin_time_s", run.bin_time_s.to_string());
        kv("run.n_records", run.n_records.to_string());
        kv("run.gates_per_second", run.gates_per_second.to_string());
        if let Some(seed) = self.seed {
            kv("run.rng_seed", seed.to_string());
        }
        kv("run.gate_placement", run.gate_placement.as_str().to_string());
        kv("analysis.omega_grid_step", self.omega_grid_step.to_string());
        kv("analysis.weighting", self.weighting.as_str().to_string());
        out
    }
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self::reference()
    }
}

struct Fields<'a> {
    entries: &'a BTreeMap<&'static str, String>,
}

impl Fields<'_> {
    fn parsed<T>(&mut self, key: &str, slot: &mut T) -> Result<(), ConfigError>
    where
        T: std::str::FromStr,
        T::Err: std::fmt::Display,
    {
        if let Some(value) = self.entries.get(key) {
            *slot = value.parse().map_err(|e: T::Err| ConfigError::BadValue {
                key: key.to_string(),
                value: value.clone(),
                reason: e.to_string(),
            })?;
        }
        Ok(())
    }

    fn f64(&mut self, key: &str, slot: &mut f64) -> Result<(), ConfigError> {
        self.parsed(key, slot)?;
        if !slot.is_finite() {
            return Err(ConfigError::BadValue {
                key: key.to_string(),
                value: self.entries.get(key).cloned().unwrap_or_default(),
                reason: "must be finite".into(),
            });
        }
        Ok(())
    }

    fn f64_dyn(&mut self, prefix: &str, field: &str, slot: &mut f64) -> Result<(), ConfigError> {
        self.f64(&format!("{prefix}.{field}"), slot)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::GatePlacement;

    const MINIMAL: &str = "geometry.fiber_length_m = 550\n\
                           geometry.coil_diameter_m = 0.2\n\
                           geometry.wavelength_m = 1.55e-6\n";

    #[test]
    fn minimal_file_gives_reference_setup() {
        let cfg = SimulationConfig::parse(MINIMAL).unwrap();
        assert_eq!(cfg, SimulationConfig::reference());
    }

    #[test]
    fn comments_and_whitespace() {
        let text = format!("# header\n\n{MINIMAL}  run.n_records = 3   # fewer\nrun.rng_seed=17\n");
        let cfg = SimulationConfig::parse(&text).unwrap();
        assert_eq!(cfg.run.n_records, 3);
        assert_eq!(cfg.seed, Some(17));
        assert_eq!(cfg.run.rng_seed, 17);
    }

    #[test]
    fn render_round_trips() {
        let mut cfg = SimulationConfig::reference();
        cfg.seed = Some(99);
        cfg.run.rng_seed = 99;
        cfg.rotation = RotationProfile::exponential_for_turns(9.0, 30.0, 50.0).unwrap();
        cfg.run.gate_placement = GatePlacement::Poisson;
        cfg.weighting = Weighting::Poisson;
        cfg.detector2.efficiency = 0.25;
        let back = SimulationConfig::parse(&cfg.render()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn missing_key_is_named() {
        let text = "geometry.fiber_length_m = 550\ngeometry.wavelength_m = 1.55e-6\n";
        let err = SimulationConfig::parse(text).unwrap_err();
        assert!(matches!(err, ConfigError::MissingKey("geometry.coil_diameter_m")));
        assert!(err.to_string().contains("geometry.coil_diameter_m"));
    }

    #[test]
    fn unknown_and_duplicate_keys() {
        let err = SimulationConfig::parse(&format!("{MINIMAL}geometry.radius = 1\n")).unwrap_err();
        assert!(matches!(err, ConfigError::UnknownKey { line: 4, .. }), "{err}");
        let err = SimulationConfig::parse(&format!("{MINIMAL}run.n_records = 1\nrun.n_records = 2\n"))
            .unwrap_err();
        assert!(matches!(err, ConfigError::DuplicateKey { line: 5, .. }), "{err}");
    }

    #[test]
    fn syntax_and_value_errors() {
        assert!(matches!(
            SimulationConfig::parse("just words\n").unwrap_err(),
            ConfigError::Syntax { line: 1, .. }
        ));
        let err = SimulationConfig::parse(&format!("{MINIMAL}run.n_records = five\n")).unwrap_err();
        assert!(matches!(err, ConfigError::BadValue { .. }), "{err}");
        let err = SimulationConfig::parse(&format!("{MINIMAL}rotation.decay_model = cubic\n")).unwrap_err();
        assert!(matches!(err, ConfigError::BadValue { .. }), "{err}");
    }

    #[test]
    fn invariants_checked_at_load() {
        let err = SimulationConfig::parse(&format!("{MINIMAL}detector1.efficiency = 1.5\n")).unwrap_err();
        match err {
            ConfigError::Invalid { key, .. } => assert_eq!(key, "detector1.efficiency"),
            other => panic!("{other}"),
        }
        let err = SimulationConfig::parse(&format!("{MINIMAL}source.herald_rate_hz = 2e5\n")).unwrap_err();
        assert!(err.to_string().contains("source.herald_rate_hz"), "{err}");
        let err = SimulationConfig::parse(&format!("{MINIMAL}rotation.omega_max = 12\n")).unwrap_err();
        assert!(err.to_string().contains("rotation.omega_max"), "{err}");
        let err = SimulationConfig::parse(&format!("{MINIMAL}analysis.omega_grid_step = 0\n")).unwrap_err();
        assert!(err.to_string().contains("analysis.omega_grid_step"), "{err}");
    }
}
