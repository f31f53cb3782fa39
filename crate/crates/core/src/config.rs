//! Run configuration: measured components, detector, angles and data.
//!
//! The file is JSON with a versioned schema. Component coefficients are
//! given as measured *powers* with standard uncertainties and converted to
//! amplitudes on load.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bounds::TrustKind;
use crate::chsh::{AngleSettings, BoundPair, CountTable};
use crate::error::{Error, Result};
use crate::ingest::Setting;
use crate::markov::DetectorParams;
use crate::optics::{BeamSplitterParams, ComponentSet, Measured, MirrorParams};

pub const SCHEMA_VERSION: u32 = 1;

const BUNDLED_JSON: &str = include_str!("../data/paper.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationPowers {
    pub t0: Measured,
    pub t1: Measured,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitterPowers {
    pub tv: Measured,
    pub rv: Measured,
    pub th: Measured,
    pub rh: Measured,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MirrorPowers {
    pub gv1: Measured,
    pub gh1: Measured,
    pub gv2: Measured,
    pub gh2: Measured,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentPowers {
    pub generation: GenerationPowers,
    pub bs1: SplitterPowers,
    pub bs2: SplitterPowers,
    pub mirror: MirrorPowers,
}

impl ComponentPowers {
    pub fn to_components(&self) -> Result<ComponentSet> {
        let amp = Measured::amplitude_from_power;
        let bs = |p: &SplitterPowers| -> Result<BeamSplitterParams> {
            BeamSplitterParams::new(amp(p.tv)?, amp(p.rv)?, amp(p.th)?, amp(p.rh)?)
        };
        let m = &self.mirror;
        let c = ComponentSet {
            bs1: bs(&self.bs1)?,
            bs2: bs(&self.bs2)?,
            mirror: MirrorParams::new(amp(m.gv1)?, amp(m.gh1)?, amp(m.gv2)?, amp(m.gh2)?)?,
            t0: amp(self.generation.t0)?,
            t1: amp(self.generation.t1)?,
        };
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub dead_time_ns: f64,
    pub afterpulse_probability: f64,
    #[serde(default)]
    pub dark_count_rate_hz_max: Option<f64>,
    /// Fixed effective rate; when absent it is measured from the data.
    #[serde(default)]
    pub lambda_eff_hz: Option<f64>,
}

impl DetectorConfig {
    pub fn params(&self, measured_rate_hz: f64) -> Result<DetectorParams> {
        DetectorParams::new(
            self.dead_time_ns * 1e-9,
            self.afterpulse_probability,
            self.lambda_eff_hz.unwrap_or(measured_rate_hz),
        )
    }
}

/// Measurement angles in units of π, indexed by setting bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleConfig {
    pub phi_over_pi: [f64; 2],
    pub theta_over_pi: [f64; 2],
}

impl AngleConfig {
    pub fn settings(&self) -> AngleSettings {
        let pi = std::f64::consts::PI;
        AngleSettings {
            phi: self.phi_over_pi.map(|v| v * pi),
            theta: self.theta_over_pi.map(|v| v * pi),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionEntry {
    pub x: u8,
    pub y: u8,
    #[serde(default)]
    pub label: String,
    pub duration_s: f64,
    /// Counts in channel order 1..=4.
    pub counts: [u64; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionConfig {
    pub bin_ns: u64,
    pub subintervals: usize,
    #[serde(default)]
    pub settings: Vec<AcquisitionEntry>,
}

/// Published bounds for one trust level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceBound {
    pub trust: TrustKind,
    pub e_p: Measured,
    pub e_i: Measured,
    #[serde(default)]
    pub h_min_percent: Option<f64>,
    #[serde(default)]
    pub rate_khz: Option<f64>,
}

impl ReferenceBound {
    pub fn pair(&self) -> BoundPair {
        BoundPair {
            e_p: self.e_p,
            e_i: self.e_i,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Config {
    pub schema_version: u32,
    pub components: ComponentPowers,
    pub detector: DetectorConfig,
    pub angles: AngleConfig,
    pub acquisition: AcquisitionConfig,
    #[serde(default)]
    pub reference_bounds: Vec<ReferenceBound>,
}

impl Config {
    /// The bundled configuration with the published measurements.
    pub fn bundled() -> Self {
        Self::from_json(BUNDLED_JSON).expect("bundled configuration is valid")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: Config = serde_json::from_str(text)?;
        if c.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema version {} (expected {SCHEMA_VERSION})",
                c.schema_version
            )));
        }
        c.components.to_components()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn components(&self) -> Result<ComponentSet> {
        self.components.to_components()
    }

    /// SHA-256 of the canonical JSON serialisation, hex encoded.
    pub fn hash(&self) -> String {
        sha256_hex(&serde_json::to_vec(self).expect("config serialises"))
    }

    /// Count table of the configured acquisitions.
    pub fn count_table(&self) -> Result<CountTable> {
        let mut counts = [[0u64; 4]; 4];
        let mut duration_s = [0.0; 4];
        let mut seen = [false; 4];
        for e in &self.acquisition.settings {
            let s = Setting::new(e.x, e.y)?;
            if std::mem::replace(&mut seen[s.index()], true) {
                return Err(Error::Config(format!("setting {s} listed twice")));
            }
            counts[s.index()] = e.counts;
            duration_s[s.index()] = e.duration_s;
        }
        if let Some(k) = seen.iter().position(|&b| !b) {
            return Err(Error::Config(format!("no counts for setting {}", Setting::ALL[k])));
        }
        Ok(CountTable { counts, duration_s })
    }

    pub fn reference_bound(&self, trust: TrustKind) -> Option<&ReferenceBound> {
        self.reference_bounds.iter().find(|r| r.trust == trust)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Hash identifying a component set in bound caches.
pub fn component_hash(c: &ComponentSet) -> String {
    sha256_hex(&serde_json::to_vec(c).expect("components serialise"))
}

/// Components of the bundled configuration.
pub fn bundled_components() -> ComponentSet {
    Config::bundled().components().expect("bundled components are valid")
}
