//! Declarative experiment configuration.
//!
//! One TOML file describes one experiment: array and channel model, user
//! population, wideband and subband quantizer axes (sweeps are value lists),
//! the optional zero-forcing evaluation, and which sweep families to run.
//! `validate` checks schema and feasibility without running anything; the
//! resolved config is echoed into every output so a run can be reproduced
//! from its own artifacts.

use crate::channel::{ArrayGeometry, ClusterModelConfig, PolarizationMode};
use crate::codebook::CODEBOOK_WORD_CAP;
use crate::evaluate::IndCoordinates;
use crate::subband::SubbandScheme;
use crate::wideband::WidebandScheme;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("config does not parse: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("{field}: {message}")]
    Invalid { field: String, message: String },
}

fn invalid(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { field: field.into(), message: message.into() }
}

/// Wideband vector codebook request.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CodebookSpec {
    /// Tensored oversampled DFT matched to the array; the polarization part
    /// (2-bit binary chirp) joins only in fully-occupied mode.
    Tsodft { oversampling_h: usize, oversampling_v: usize },
    /// Lloyd-trained on eigenvectors of a held-out training population.
    Lloyd {
        size_log2: usize,
        iters: usize,
        training_users: usize,
    },
}

impl CodebookSpec {
    pub fn label(&self) -> String {
        match self {
            CodebookSpec::Tsodft { oversampling_h, oversampling_v } => {
                format!("tsodft{}x{}", oversampling_h, oversampling_v)
            }
            CodebookSpec::Lloyd { size_log2, .. } => format!("lloyd{}", 1usize << size_log2),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WidebandSection {
    pub k: usize,
    pub schemes: Vec<WidebandScheme>,
    pub pol_modes: Vec<PolarizationMode>,
    pub codebooks: Vec<CodebookSpec>,
    #[serde(default = "default_ind_coordinates")]
    pub ind_coordinates: IndCoordinates,
}

fn default_ind_coordinates() -> IndCoordinates {
    IndCoordinates::PseudoInverse
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ScalarAllocation {
    pub m: usize,
    pub b_ell: usize,
    pub b_s: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct PcbSection {
    pub n_ell: usize,
    pub n_b: Vec<usize>,
    pub phase_bits: usize,
    #[serde(default = "default_pcb_train_iters")]
    pub train_iters: usize,
}

fn default_pcb_train_iters() -> usize {
    8
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SubbandSection {
    pub schemes: Vec<SubbandScheme>,
    #[serde(default)]
    pub ext2: Vec<ScalarAllocation>,
    #[serde(default)]
    pub int5: Vec<ScalarAllocation>,
    pub pcb: Option<PcbSection>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ZfSection {
    pub users: usize,
    pub subbands: usize,
    pub drops: usize,
    pub snr_grid_db: Vec<f64>,
    #[serde(default = "default_power")]
    pub power: f64,
}

fn default_power() -> f64 {
    1.0
}

/// Sweep families, one per figure-style study.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    /// Mean chordal distortion of eigenvector quantization vs codebook bits.
    WidebandVector,
    /// Projection distortion vs basis bits across schemes, polarization
    /// structures and codebooks.
    Projection,
    /// Subband distortion vs subband bits under ideal and quantized
    /// wideband stages.
    Subband,
    /// Overall distortion vs subband bits across scheme combinations.
    Overall,
    /// Bound gaps of the distortion split, including the search for a
    /// non-orthogonal counterexample.
    Bounds,
    /// Multiuser zero-forcing spectral efficiency vs SNR.
    SpectralEfficiency,
}

impl SweepKind {
    pub fn label(&self) -> &'static str {
        match self {
            SweepKind::WidebandVector => "wideband_vector",
            SweepKind::Projection => "projection",
            SweepKind::Subband => "subband",
            SweepKind::Overall => "overall",
            SweepKind::Bounds => "bounds",
            SweepKind::SpectralEfficiency => "spectral_efficiency",
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub master_seed: u64,
    pub users: usize,
    pub array: ArrayGeometry,
    pub channel: ClusterModelConfig,
    pub wideband: WidebandSection,
    pub subband: SubbandSection,
    pub zf: Option<ZfSection>,
    pub sweeps: Vec<SweepKind>,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig = toml::from_str(text)?;
        Ok(cfg)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self, ConfigError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Schema-level and feasibility validation: dimension consistency,
    /// divisibility, codebook size caps, ZF user counts. Collects every
    /// problem rather than stopping at the first.
    pub fn validate(&self) -> Result<(), Vec<ConfigError>> {
        let mut errors = Vec::new();
        let n_t = self.array.n_t();

        if let Err(e) = self.array.validate() {
            errors.push(invalid("array", e.to_string()));
        }
        if let Err(e) = self.channel.validate() {
            errors.push(invalid("channel", e.to_string()));
        }
        if self.users == 0 {
            errors.push(invalid("users", "at least one user required"));
        }
        if self.wideband.k == 0 || self.wideband.k > n_t {
            errors.push(invalid(
                "wideband.k",
                format!("k must lie in 1..={n_t}, got {}", self.wideband.k),
            ));
        }
        for mode in &self.wideband.pol_modes {
            if *mode != PolarizationMode::Full {
                if self.array.n_p != 2 {
                    errors.push(invalid(
                        "wideband.pol_modes",
                        "polarized modes require a dual-polarized array (n_p = 2)",
                    ));
                }
                if self.wideband.k % 2 != 0 {
                    errors.push(invalid(
                        "wideband.k",
                        "polarized modes need an even number of basis columns",
                    ));
                }
            }
        }
        if self.wideband.schemes.is_empty() {
            errors.push(invalid("wideband.schemes", "select at least one scheme"));
        }
        if self.wideband.codebooks.is_empty() {
            errors.push(invalid("wideband.codebooks", "select at least one codebook"));
        }
        for (i, cb) in self.wideband.codebooks.iter().enumerate() {
            match cb {
                CodebookSpec::Tsodft { oversampling_h, oversampling_v } => {
                    if *oversampling_h < 1 || *oversampling_v < 1 {
                        errors.push(invalid(
                            &format!("wideband.codebooks[{i}]"),
                            "oversampling factors must be >= 1",
                        ));
                    }
                    let full_size = self.array.n_h
                        * oversampling_h
                        * self.array.n_v
                        * oversampling_v
                        * if self.array.n_p == 2 { 4 } else { 1 };
                    if full_size > CODEBOOK_WORD_CAP {
                        errors.push(invalid(
                            &format!("wideband.codebooks[{i}]"),
                            format!("materialized size {full_size} exceeds cap {CODEBOOK_WORD_CAP}"),
                        ));
                    }
                }
                CodebookSpec::Lloyd { size_log2, iters, training_users } => {
                    if 1usize << size_log2 > CODEBOOK_WORD_CAP {
                        errors.push(invalid(
                            &format!("wideband.codebooks[{i}]"),
                            "trained codebook exceeds the size cap",
                        ));
                    }
                    if *iters == 0 || *training_users == 0 {
                        errors.push(invalid(
                            &format!("wideband.codebooks[{i}]"),
                            "training iterations and users must be positive",
                        ));
                    }
                    let samples = training_users * self.wideband.k;
                    if samples < (1usize << size_log2) {
                        errors.push(invalid(
                            &format!("wideband.codebooks[{i}]"),
                            format!(
                                "training set of {samples} eigenvectors cannot seed {} words",
                                1usize << size_log2
                            ),
                        ));
                    }
                }
            }
        }
        for scheme in &self.subband.schemes {
            match scheme {
                SubbandScheme::Ext2 if self.subband.ext2.is_empty() => {
                    errors.push(invalid("subband.ext2", "scheme selected but no allocations"));
                }
                SubbandScheme::Int5 if self.subband.int5.is_empty() => {
                    errors.push(invalid("subband.int5", "scheme selected but no allocations"));
                }
                SubbandScheme::Pcb if self.subband.pcb.is_none() => {
                    errors.push(invalid("subband.pcb", "scheme selected but no parameters"));
                }
                _ => {}
            }
        }
        let k = self.wideband.k;
        for (i, a) in self.subband.ext2.iter().enumerate() {
            if let Err(e) = crate::subband::BitAllocationParams::ext2(a.m, a.b_ell, a.b_s)
                .validate(k, SubbandScheme::Ext2)
            {
                errors.push(invalid(&format!("subband.ext2[{i}]"), e.to_string()));
            }
        }
        for (i, a) in self.subband.int5.iter().enumerate() {
            if let Err(e) = crate::subband::BitAllocationParams::int5(a.m, a.b_ell, a.b_s)
                .validate(k, SubbandScheme::Int5)
            {
                errors.push(invalid(&format!("subband.int5[{i}]"), e.to_string()));
            }
        }
        if let Some(pcb) = &self.subband.pcb {
            if pcb.n_ell == 0 || k % pcb.n_ell != 0 {
                errors.push(invalid(
                    "subband.pcb.n_ell",
                    format!("component dimension {} must divide k = {k}", pcb.n_ell),
                ));
            }
            if pcb.phase_bits == 0 {
                errors.push(invalid("subband.pcb.phase_bits", "at least one phase bit"));
            }
            for nb in &pcb.n_b {
                if 1usize << nb > CODEBOOK_WORD_CAP {
                    errors.push(invalid(
                        "subband.pcb.n_b",
                        format!("component codebook 2^{nb} exceeds the size cap"),
                    ));
                }
            }
        }
        if let Some(zf) = &self.zf {
            if zf.users == 0 || zf.users > n_t {
                errors.push(invalid(
                    "zf.users",
                    format!("user count must lie in 1..={n_t}, got {}", zf.users),
                ));
            }
            if zf.subbands == 0 || zf.drops == 0 || zf.snr_grid_db.is_empty() {
                errors.push(invalid("zf", "subbands, drops and SNR grid must be nonempty"));
            }
            if !(zf.power > 0.0) {
                errors.push(invalid("zf.power", "power must be positive"));
            }
        }
        if self.sweeps.is_empty() {
            errors.push(invalid("sweeps", "select at least one sweep"));
        }
        if self.sweeps.contains(&SweepKind::SpectralEfficiency) && self.zf.is_none() {
            errors.push(invalid("zf", "spectral efficiency sweep needs a [zf] section"));
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(errors)
        }
    }
}

/// Minimal config used across the experiment test modules.
#[cfg(test)]
pub(crate) const SMOKE: &str = r#"
name = "smoke"
master_seed = 7
users = 10
sweeps = ["projection", "overall"]

[array]
n_h = 2
n_v = 1
n_p = 2
spacing = 0.5

[channel]
n_clusters = 3
rays_per_cluster = 4
angle_spread_deg = 4.0
delay_spread_s = 1.0e-6
bandwidth_hz = 18.0e6
n_subbands = 4
indoor_attenuation = 1.0

[wideband]
k = 2
schemes = ["ind", "owp", "swp"]
pol_modes = ["full"]

[[wideband.codebooks]]
kind = "tsodft"
oversampling_h = 4
oversampling_v = 1

[subband]
schemes = ["ext2"]
ext2 = [{ m = 1, b_ell = 3, b_s = 2 }]
"#;
