//! Synthetic frequency-selective massive-MIMO channels on a uniform planar
//! array, normalized sample covariance construction, and polarization block
//! decompositions.
//!
//! The generator is a geometric cluster-ray model: scattering clusters drawn
//! in a 120-degree sector, Laplacian per-cluster angle spread, exponential
//! delay profile and i.i.d. complex Gaussian ray gains. It reproduces the two
//! statistical premises the feedback schemes rely on, spatial low-rankness of
//! the per-user covariance and frequency-selective correlation across
//! subbands, while staying fully deterministic for a fixed seed.

use crate::linalg::{C64, CMat, CVec, HermitianPsd, LinalgError};
use crate::rng::{stage, substream};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::{self, Read, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ChannelError {
    #[error("invalid channel configuration: {0}")]
    InvalidConfig(String),
    #[error("subband channel {0} has zero norm")]
    ZeroSubband(usize),
    #[error("polarization split requires an even dimension, got {0}")]
    OddDimension(usize),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("channel dump i/o: {0}")]
    Io(#[from] io::Error),
    #[error("channel dump is malformed: {0}")]
    BadDump(String),
}

/// Uniform planar array layout: horizontal x vertical elements, each with
/// `n_p` polarizations, spaced in wavelengths.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct ArrayGeometry {
    pub n_h: usize,
    pub n_v: usize,
    pub n_p: usize,
    pub spacing: f64,
}

impl Default for ArrayGeometry {
    fn default() -> Self {
        // 8 x 2 x 2 elements, half-wavelength spacing: N_t = 32.
        Self { n_h: 8, n_v: 2, n_p: 2, spacing: 0.5 }
    }
}

impl ArrayGeometry {
    pub fn n_t(&self) -> usize {
        self.n_h * self.n_v * self.n_p
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        if self.n_h < 1 || self.n_v < 1 || self.n_p < 1 {
            return Err(ChannelError::InvalidConfig("element counts must be >= 1".into()));
        }
        if !(self.spacing > 0.0) {
            return Err(ChannelError::InvalidConfig("spacing must be positive".into()));
        }
        Ok(())
    }
}

/// Parameters of the synthetic cluster-ray model.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct ClusterModelConfig {
    pub n_clusters: usize,
    pub rays_per_cluster: usize,
    pub angle_spread_deg: f64,
    pub delay_spread_s: f64,
    pub bandwidth_hz: f64,
    pub n_subbands: usize,
    /// Amplitude scale applied to the rays of indoor users (a fixed 80% of
    /// users are drawn indoor). 1.0 disables the effect.
    pub indoor_attenuation: f64,
}

impl Default for ClusterModelConfig {
    fn default() -> Self {
        Self {
            n_clusters: 8,
            rays_per_cluster: 16,
            angle_spread_deg: 4.0,
            delay_spread_s: 1.0e-6,
            bandwidth_hz: 18.0e6,
            n_subbands: 30,
            indoor_attenuation: 1.0,
        }
    }
}

impl ClusterModelConfig {
    pub fn validate(&self) -> Result<(), ChannelError> {
        if self.n_clusters < 1 || self.rays_per_cluster < 1 || self.n_subbands < 1 {
            return Err(ChannelError::InvalidConfig(
                "cluster, ray and subband counts must be >= 1".into(),
            ));
        }
        if !(self.angle_spread_deg >= 0.0)
            || !(self.delay_spread_s >= 0.0)
            || !(self.bandwidth_hz > 0.0)
        {
            return Err(ChannelError::InvalidConfig(
                "spreads must be non-negative and bandwidth positive".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.indoor_attenuation) {
            return Err(ChannelError::InvalidConfig(
                "indoor_attenuation must lie in [0, 1]".into(),
            ));
        }
        Ok(())
    }
}

/// How the covariance is partitioned over the two antenna polarizations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PolarizationMode {
    /// Fully occupied covariance, no structure assumed.
    #[serde(rename = "full")]
    Full,
    /// Two independent per-polarization diagonal blocks.
    #[serde(rename = "bplusbminus")]
    BplusBminus,
    /// One shared block, the average of the two polarization blocks.
    #[serde(rename = "b00b")]
    B00B,
}

impl PolarizationMode {
    pub fn label(&self) -> &'static str {
        match self {
            PolarizationMode::Full => "full",
            PolarizationMode::BplusBminus => "bplusbminus",
            PolarizationMode::B00B => "b00b",
        }
    }
}

/// Per-user aggregate CSI: one channel vector per subband.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelSet {
    pub subbands: Vec<CVec>,
    pub user_id: u64,
    pub seed: u64,
}

impl ChannelSet {
    pub fn n_t(&self) -> usize {
        self.subbands[0].len()
    }

    pub fn n_subbands(&self) -> usize {
        self.subbands.len()
    }
}

/// Steering vector of the UPA: Kronecker product of the polarization vector
/// `(1, e^{i psi})/sqrt(2)` (when `n_p == 2`) with horizontal and vertical
/// DFT-phase vectors. The polarization factor is leftmost, so the output is
/// polarization-major: entries `[h_+; h_-]` with each block of length
/// `n_h * n_v` laid out horizontal-major.
pub fn upa_steering(
    geom: &ArrayGeometry,
    azimuth: f64,
    elevation: f64,
    pol_phase: f64,
) -> CVec {
    let phase_h = 2.0 * PI * geom.spacing * azimuth.sin() * elevation.cos();
    let phase_v = 2.0 * PI * geom.spacing * elevation.sin();
    let nh = geom.n_h as f64;
    let nv = geom.n_v as f64;
    let np = geom.n_p as f64;
    let norm = 1.0 / (nh * nv * np).sqrt();
    let mut data = Vec::with_capacity(geom.n_t());
    for p in 0..geom.n_p {
        let pol = C64::from_polar(1.0, pol_phase * p as f64);
        for h in 0..geom.n_h {
            let ph = C64::from_polar(1.0, phase_h * h as f64);
            for v in 0..geom.n_v {
                let pv = C64::from_polar(1.0, phase_v * v as f64);
                data.push(pol * ph * pv * norm);
            }
        }
    }
    CVec::new(data)
}

/// Fraction of users drawn as indoor; their rays are attenuated by
/// `indoor_attenuation`.
const INDOOR_RATIO: f64 = 0.8;

/// Intra-cluster delay dispersion relative to the delay spread. Rays inside
/// a cluster get individual delays around the cluster delay, so the subband
/// channels span more directions than there are clusters while the energy
/// stays concentrated near the cluster count.
const INTRA_CLUSTER_DELAY_FACTOR: f64 = 0.15;

/// Draw the frequency-selective channels of one user. Deterministic for a
/// fixed `(seed, user_id)` pair: the user gets its own counter-derived
/// substream, so generation may be parallelized across users without
/// affecting the output.
pub fn generate_user_channels(
    geom: &ArrayGeometry,
    cfg: &ClusterModelConfig,
    seed: u64,
    user_id: u64,
) -> Result<ChannelSet, ChannelError> {
    geom.validate()?;
    cfg.validate()?;
    let mut rng = substream(seed, &[stage::CHANNEL_USER, user_id]);

    let indoor = rng.gen::<f64>() < INDOOR_RATIO;
    let gain_scale = if indoor { cfg.indoor_attenuation } else { 1.0 };

    // Cluster geometry: centers in a 120-degree sector, exponential delays,
    // powers tied to delay as in standard spatial channel models.
    let sector = 60f64.to_radians();
    let elev_range = 15f64.to_radians();
    let spread = cfg.angle_spread_deg.to_radians();
    struct Ray {
        az: f64,
        el: f64,
        pol: f64,
        delay: f64,
        gain: C64,
    }
    let mut rays = Vec::with_capacity(cfg.n_clusters * cfg.rays_per_cluster);
    let mut power_sum = 0.0;
    for _ in 0..cfg.n_clusters {
        let center_az = rng.gen_range(-sector..sector);
        let center_el = rng.gen_range(-elev_range..elev_range);
        let delay = -cfg.delay_spread_s * (1.0 - rng.gen::<f64>()).ln();
        let power = (-delay / cfg.delay_spread_s.max(1e-300)).exp();
        power_sum += power;
        let ray_amp = (power / cfg.rays_per_cluster as f64).sqrt();
        for _ in 0..cfg.rays_per_cluster {
            let az = center_az + laplacian(&mut rng, spread);
            let el = center_el + laplacian(&mut rng, spread);
            let pol = rng.gen_range(0.0..2.0 * PI);
            let ray_delay = delay
                - cfg.delay_spread_s
                    * INTRA_CLUSTER_DELAY_FACTOR
                    * (1.0 - rng.gen::<f64>()).ln();
            let g_re: f64 = StandardNormal.sample(&mut rng);
            let g_im: f64 = StandardNormal.sample(&mut rng);
            let gain = C64::new(g_re, g_im) * (ray_amp * gain_scale / 2f64.sqrt());
            rays.push(Ray { az, el, pol, delay: ray_delay, gain });
        }
    }
    let power_norm = 1.0 / power_sum.sqrt();

    let steerings: Vec<CVec> = rays
        .iter()
        .map(|r| upa_steering(geom, r.az, r.el, r.pol))
        .collect();

    let mut subbands = Vec::with_capacity(cfg.n_subbands);
    for s in 0..cfg.n_subbands {
        let f_s = s as f64 * cfg.bandwidth_hz / cfg.n_subbands as f64;
        let mut h = CVec::zeros(geom.n_t());
        for (ray, a) in rays.iter().zip(steerings.iter()) {
            let w = ray.gain * C64::from_polar(power_norm, -2.0 * PI * f_s * ray.delay);
            for (hi, ai) in (0..h.len()).zip(a.iter()) {
                h[hi] += ai * w;
            }
        }
        if h.norm_sq() <= 0.0 {
            return Err(ChannelError::ZeroSubband(s));
        }
        subbands.push(h);
    }
    Ok(ChannelSet { subbands, user_id, seed })
}

fn laplacian(rng: &mut impl Rng, scale: f64) -> f64 {
    let u: f64 = rng.gen_range(-0.5..0.5);
    -scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
}

/// Normalized sample covariance of the subband channel directions:
/// `R = (1/S) sum_s h_s h_s^H / |h_s|^2`, Hermitian PSD with unit trace.
pub fn normalized_sample_covariance(ch: &ChannelSet) -> Result<HermitianPsd, ChannelError> {
    let s = ch.n_subbands();
    let mut normalized = Vec::with_capacity(s);
    for (i, h) in ch.subbands.iter().enumerate() {
        if h.norm_sq() <= 0.0 {
            return Err(ChannelError::ZeroSubband(i));
        }
        normalized.push(h.normalized()?);
    }
    let weights = vec![1.0 / s as f64; s];
    Ok(HermitianPsd::from_outer_products(&normalized, &weights))
}

/// Empirical normalized covariance of an arbitrary set of vectors, with the
/// same unit-trace normalization as [`normalized_sample_covariance`].
pub fn empirical_covariance(samples: &[CVec]) -> Result<HermitianPsd, ChannelError> {
    if samples.is_empty() {
        return Err(ChannelError::InvalidConfig("empty sample set".into()));
    }
    let mut normalized = Vec::with_capacity(samples.len());
    for (i, h) in samples.iter().enumerate() {
        if h.norm_sq() <= 0.0 {
            return Err(ChannelError::ZeroSubband(i));
        }
        normalized.push(h.normalized()?);
    }
    let weights = vec![1.0 / samples.len() as f64; samples.len()];
    Ok(HermitianPsd::from_outer_products(&normalized, &weights))
}

/// Block covariances extracted under a polarization structure assumption.
#[derive(Clone, Debug)]
pub enum PolarizationBlocks {
    Full(HermitianPsd),
    /// `(B_plus, B_minus)`, the two per-polarization diagonal blocks.
    BplusBminus(HermitianPsd, HermitianPsd),
    /// `B = (B_plus + B_minus)/2`, one block shared by both polarizations.
    B00B(HermitianPsd),
}

/// Split a covariance over polarization-major antenna ordering `[h_+; h_-]`.
pub fn polarization_blocks(
    r: &HermitianPsd,
    mode: PolarizationMode,
) -> Result<PolarizationBlocks, ChannelError> {
    let n = r.dim();
    match mode {
        PolarizationMode::Full => Ok(PolarizationBlocks::Full(r.clone())),
        PolarizationMode::BplusBminus => {
            if n % 2 != 0 {
                return Err(ChannelError::OddDimension(n));
            }
            let half = n / 2;
            let bp = sub_block(r.mat(), 0, half);
            let bm = sub_block(r.mat(), half, half);
            Ok(PolarizationBlocks::BplusBminus(
                HermitianPsd::new(bp)?,
                HermitianPsd::new(bm)?,
            ))
        }
        PolarizationMode::B00B => {
            if n % 2 != 0 {
                return Err(ChannelError::OddDimension(n));
            }
            let half = n / 2;
            let bp = sub_block(r.mat(), 0, half);
            let bm = sub_block(r.mat(), half, half);
            let avg = bp.add(&bm).scale(C64::new(0.5, 0.0));
            Ok(PolarizationBlocks::B00B(HermitianPsd::new(avg)?))
        }
    }
}

fn sub_block(m: &CMat, offset: usize, size: usize) -> CMat {
    let mut b = CMat::zeros(size, size);
    for j in 0..size {
        for i in 0..size {
            b[(i, j)] = m[(offset + i, offset + j)];
        }
    }
    b
}

const DUMP_MAGIC: &[u8; 8] = b"CSIQCHD1";

/// Write channel sets in the interchange dump format: an 8-byte magic,
/// a header of little-endian `u32 N_t`, `u32 S`, `u32 users`, `u64 seed`,
/// then for each user and subband `N_t` complex entries as little-endian
/// f64 `re, im` pairs, users outermost and subbands in order.
pub fn write_channel_dump(
    out: &mut impl Write,
    sets: &[ChannelSet],
    seed: u64,
) -> Result<(), ChannelError> {
    if sets.is_empty() {
        return Err(ChannelError::InvalidConfig("no channel sets to dump".into()));
    }
    let n_t = sets[0].n_t() as u32;
    let s = sets[0].n_subbands() as u32;
    out.write_all(DUMP_MAGIC)?;
    out.write_all(&n_t.to_le_bytes())?;
    out.write_all(&s.to_le_bytes())?;
    out.write_all(&(sets.len() as u32).to_le_bytes())?;
    out.write_all(&seed.to_le_bytes())?;
    for set in sets {
        for h in &set.subbands {
            for z in h.iter() {
                out.write_all(&z.re.to_le_bytes())?;
                out.write_all(&z.im.to_le_bytes())?;
            }
        }
    }
    Ok(())
}

/// Read a dump produced by [`write_channel_dump`]. Returns the sets and the
/// recorded master seed.
pub fn read_channel_dump(inp: &mut impl Read) -> Result<(Vec<ChannelSet>, u64), ChannelError> {
    let mut magic = [0u8; 8];
    inp.read_exact(&mut magic)?;
    if &magic != DUMP_MAGIC {
        return Err(ChannelError::BadDump("bad magic".into()));
    }
    let mut u32buf = [0u8; 4];
    inp.read_exact(&mut u32buf)?;
    let n_t = u32::from_le_bytes(u32buf) as usize;
    inp.read_exact(&mut u32buf)?;
    let s = u32::from_le_bytes(u32buf) as usize;
    inp.read_exact(&mut u32buf)?;
    let users = u32::from_le_bytes(u32buf) as usize;
    let mut u64buf = [0u8; 8];
    inp.read_exact(&mut u64buf)?;
    let seed = u64::from_le_bytes(u64buf);
    if n_t == 0 || s == 0 {
        return Err(ChannelError::BadDump("zero dimensions".into()));
    }
    let mut sets = Vec::with_capacity(users);
    let mut f64buf = [0u8; 8];
    for user_id in 0..users {
        let mut subbands = Vec::with_capacity(s);
        for _ in 0..s {
            let mut data = Vec::with_capacity(n_t);
            for _ in 0..n_t {
                inp.read_exact(&mut f64buf)?;
                let re = f64::from_le_bytes(f64buf);
                inp.read_exact(&mut f64buf)?;
                let im = f64::from_le_bytes(f64buf);
                data.push(C64::new(re, im));
            }
            subbands.push(CVec::new(data));
        }
        sets.push(ChannelSet { subbands, user_id: user_id as u64, seed });
    }
    Ok((sets, seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{chordal_distance, eigh_topk, projector};

    fn small_geom() -> ArrayGeometry {
        ArrayGeometry { n_h: 4, n_v: 2, n_p: 2, spacing: 0.5 }
    }

    #[test]
    fn broadside_steering_is_flat() {
        let geom = small_geom();
        let a = upa_steering(&geom, 0.0, 0.0, 0.0);
        assert!((a.norm() - 1.0).abs() < 1e-12);
        let first = a[0];
        for z in a.iter() {
            assert!((z - first).norm() < 1e-12);
        }
    }

    #[test]
    fn steering_inner_product_matches_dirichlet_kernel() {
        // Single-row array so the closed form is one Dirichlet kernel.
        let geom = ArrayGeometry { n_h: 8, n_v: 1, n_p: 1, spacing: 0.5 };
        let az1 = 0.3f64;
        let az2 = -0.4f64;
        let a1 = upa_steering(&geom, az1, 0.0, 0.0);
        let a2 = upa_steering(&geom, az2, 0.0, 0.0);
        let ip = a1.dot(&a2).norm();
        let x = PI * geom.spacing * (az2.sin() - az1.sin());
        let n = geom.n_h as f64;
        let dirichlet = ((n * x).sin() / x.sin()).abs() / n;
        assert!((ip - dirichlet).abs() < 1e-9, "ip={ip} dirichlet={dirichlet}");
    }

    #[test]
    fn steering_factors_as_kronecker_product() {
        let geom = small_geom();
        let az = 0.45;
        let el = -0.2;
        let psi = 1.1;
        let a = upa_steering(&geom, az, el, psi);
        // reassemble per-factor vectors from slices of a
        let phase_h = 2.0 * PI * geom.spacing * az.sin() * el.cos();
        let phase_v = 2.0 * PI * geom.spacing * el.sin();
        for p in 0..geom.n_p {
            for h in 0..geom.n_h {
                for v in 0..geom.n_v {
                    let idx = (p * geom.n_h + h) * geom.n_v + v;
                    let expect = C64::from_polar(1.0, psi * p as f64)
                        * C64::from_polar(1.0, phase_h * h as f64)
                        * C64::from_polar(1.0, phase_v * v as f64)
                        / (geom.n_t() as f64).sqrt();
                    assert!((a[idx] - expect).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn single_ray_channel_has_rank_one_covariance() {
        let geom = small_geom();
        let cfg = ClusterModelConfig {
            n_clusters: 1,
            rays_per_cluster: 1,
            angle_spread_deg: 0.0,
            delay_spread_s: 0.0,
            ..Default::default()
        };
        let ch = generate_user_channels(&geom, &cfg, 9, 0).unwrap();
        let r = normalized_sample_covariance(&ch).unwrap();
        let basis = eigh_topk(&r, 2).unwrap();
        assert!((basis.values[0] - 1.0).abs() < 1e-9);
        assert!(basis.values[1].abs() < 1e-9);
        // all subbands proportional to one steering vector
        for s in 1..ch.n_subbands() {
            assert!(chordal_distance(&ch.subbands[0], &ch.subbands[s]).unwrap() < 1e-9);
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let geom = small_geom();
        let cfg = ClusterModelConfig { n_subbands: 6, ..Default::default() };
        let a = generate_user_channels(&geom, &cfg, 1234, 17).unwrap();
        let b = generate_user_channels(&geom, &cfg, 1234, 17).unwrap();
        assert_eq!(a, b);
        let c = generate_user_channels(&geom, &cfg, 1234, 18).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn covariance_has_unit_trace_and_spans_channels() {
        let geom = small_geom();
        let cfg = ClusterModelConfig { n_subbands: 12, ..Default::default() };
        let ch = generate_user_channels(&geom, &cfg, 5, 3).unwrap();
        let r = normalized_sample_covariance(&ch).unwrap();
        assert!((r.trace() - 1.0).abs() < 1e-12);
        // eigenvectors at numerical rank span every subband channel
        let n = r.dim();
        let basis = eigh_topk(&r, n).unwrap();
        let rank = basis.values.iter().filter(|&&v| v > 1e-12).count();
        let cols: Vec<CVec> = (0..rank).map(|j| basis.vectors.col(j)).collect();
        let u = CMat::from_cols(&cols);
        let p = projector(&u).unwrap();
        for h in &ch.subbands {
            let residual = h.sub(&p.mul_vec(h));
            assert!(residual.norm() <= 1e-8 * h.norm());
        }
    }

    #[test]
    fn single_subband_covariance_is_projector() {
        let geom = small_geom();
        let cfg = ClusterModelConfig { n_subbands: 1, ..Default::default() };
        let ch = generate_user_channels(&geom, &cfg, 5, 0).unwrap();
        let r = normalized_sample_covariance(&ch).unwrap();
        assert!((r.trace() - 1.0).abs() < 1e-12);
        let h = ch.subbands[0].normalized().unwrap();
        assert!((r.quad_form(&h) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn orthogonal_subbands_split_energy_evenly() {
        let e0 = CVec::unit(4, 0);
        let e1 = CVec::unit(4, 1);
        let ch = ChannelSet {
            subbands: vec![e0.scale(C64::new(3.0, 0.0)), e1.scale(C64::new(3.0, 0.0))],
            user_id: 0,
            seed: 0,
        };
        let r = normalized_sample_covariance(&ch).unwrap();
        let basis = eigh_topk(&r, 2).unwrap();
        assert!((basis.values[0] - 0.5).abs() < 1e-12);
        assert!((basis.values[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn effective_channel_covariance_identities() {
        // With exact U, Sigma at K = rank: (1/S) sum b b^H = Lambda and
        // (1/S) sum c c^H = I, for b = U^H h_tilde, c = Sigma^{-1} b.
        let geom = small_geom();
        let cfg = ClusterModelConfig { n_subbands: 20, ..Default::default() };
        let ch = generate_user_channels(&geom, &cfg, 31, 2).unwrap();
        let r = normalized_sample_covariance(&ch).unwrap();
        let n = r.dim();
        let full = eigh_topk(&r, n).unwrap();
        let rank = full.values.iter().filter(|&&v| v > 1e-10).count();
        let cols: Vec<CVec> = (0..rank).map(|j| full.vectors.col(j)).collect();
        let u = CMat::from_cols(&cols);
        let sigma: Vec<f64> = full.values[..rank].iter().map(|v| v.sqrt()).collect();
        let s_count = ch.n_subbands() as f64;
        let mut bb = CMat::zeros(rank, rank);
        let mut cc = CMat::zeros(rank, rank);
        for h in &ch.subbands {
            let ht = h.normalized().unwrap();
            let b = u.adjoint_mul_vec(&ht);
            let c = CVec::from_fn(rank, |j| b[j] / sigma[j]);
            bb = bb.add(&b.outer(&b));
            cc = cc.add(&c.outer(&c));
        }
        bb = bb.scale(C64::new(1.0 / s_count, 0.0));
        cc = cc.scale(C64::new(1.0 / s_count, 0.0));
        let mut lambda = CMat::zeros(rank, rank);
        for j in 0..rank {
            lambda[(j, j)] = C64::new(full.values[j], 0.0);
        }
        assert!(bb.sub(&lambda).fro_norm() < 1e-8);
        assert!(cc.sub(&CMat::identity(rank)).fro_norm() < 1e-8);
    }

    #[test]
    fn b00b_block_of_block_diagonal_covariance() {
        // Build R with two identical diagonal blocks; B00B must return that
        // block exactly and the trace identity must hold.
        let mut rng = substream(3, &[99]);
        let half = 3;
        let vecs: Vec<CVec> = (0..4)
            .map(|_| {
                CVec::from_fn(half, |_| C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
            })
            .collect();
        let b = HermitianPsd::from_outer_products(&vecs, &vec![0.125; 4]);
        let n = 2 * half;
        let mut m = CMat::zeros(n, n);
        for j in 0..half {
            for i in 0..half {
                m[(i, j)] = b.mat()[(i, j)];
                m[(half + i, half + j)] = b.mat()[(i, j)];
            }
        }
        let r = HermitianPsd::new(m).unwrap();
        match polarization_blocks(&r, PolarizationMode::B00B).unwrap() {
            PolarizationBlocks::B00B(blk) => {
                assert!(blk.mat().sub(b.mat()).fro_norm() < 1e-12);
                assert!((blk.trace() - r.trace() / 2.0).abs() < 1e-12);
            }
            _ => panic!("expected B00B blocks"),
        }
    }

    #[test]
    fn b00b_frobenius_gap_is_cross_block_energy() {
        let geom = small_geom();
        let cfg = ClusterModelConfig { n_subbands: 10, ..Default::default() };
        let ch = generate_user_channels(&geom, &cfg, 8, 1).unwrap();
        let r = normalized_sample_covariance(&ch).unwrap();
        let n = r.dim();
        let half = n / 2;
        let (bp, bm) = match polarization_blocks(&r, PolarizationMode::BplusBminus).unwrap() {
            PolarizationBlocks::BplusBminus(p, m) => (p, m),
            _ => unreachable!(),
        };
        let b = match polarization_blocks(&r, PolarizationMode::B00B).unwrap() {
            PolarizationBlocks::B00B(b) => b,
            _ => unreachable!(),
        };
        assert!(
            (b.trace() - (bp.trace() + bm.trace()) / 2.0).abs() < 1e-12,
            "B00B trace is the block average"
        );
        // Reassemble diag(B, B) and check the gap to R captures exactly the
        // off-block energy plus the within-block deviation from the average.
        let mut reassembled = CMat::zeros(n, n);
        for j in 0..half {
            for i in 0..half {
                reassembled[(i, j)] = b.mat()[(i, j)];
                reassembled[(half + i, half + j)] = b.mat()[(i, j)];
            }
        }
        let gap = r.mat().sub(&reassembled).fro_norm();
        let mut direct = 0.0f64;
        for j in 0..n {
            for i in 0..n {
                let in_plus = i < half && j < half;
                let in_minus = i >= half && j >= half;
                let rij = r.mat()[(i, j)];
                if in_plus {
                    direct += (rij - b.mat()[(i, j)]).norm_sqr();
                } else if in_minus {
                    direct += (rij - b.mat()[(i - half, j - half)]).norm_sqr();
                } else {
                    direct += rij.norm_sqr();
                }
            }
        }
        assert!((gap * gap - direct).abs() < 1e-12);
    }

    #[test]
    fn odd_dimension_rejected() {
        let r = HermitianPsd::from_outer_products(&[CVec::unit(3, 0)], &[1.0]);
        assert!(matches!(
            polarization_blocks(&r, PolarizationMode::B00B),
            Err(ChannelError::OddDimension(3))
        ));
    }

    #[test]
    fn dump_roundtrip_is_bit_exact() {
        let geom = small_geom();
        let cfg = ClusterModelConfig { n_subbands: 4, ..Default::default() };
        let sets: Vec<ChannelSet> = (0..3)
            .map(|u| generate_user_channels(&geom, &cfg, 77, u).unwrap())
            .collect();
        let mut buf = Vec::new();
        write_channel_dump(&mut buf, &sets, 77).unwrap();
        let (read, seed) = read_channel_dump(&mut buf.as_slice()).unwrap();
        assert_eq!(seed, 77);
        assert_eq!(read.len(), sets.len());
        for (a, b) in read.iter().zip(sets.iter()) {
            assert_eq!(a.subbands, b.subbands);
        }
    }
}
