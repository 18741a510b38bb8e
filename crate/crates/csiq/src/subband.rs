//! Per-subband effective-channel quantization.
//!
//! Once both ends share an orthonormal wideband basis `W` and quantized
//! amplitudes `Sigma_hat`, each subband channel reduces to K coordinates
//! `b = W^H h` (norm-preserving) or `c = Sigma_hat^{-1} b` (approximately
//! i.i.d.). Three quantizers fill one record format family:
//!
//! * `Ext2` - 5G-NR-style scalar quantization with bit allocation in the
//!   order of the wideband amplitudes; strong coordinates get a 1-bit
//!   amplitude (`{1, 1/sqrt(2)}`, power ratio 2) and fine phases.
//! * `Int5` - bit allocation in the intrinsic order `sigma_hat_i * a_hat_i`;
//!   every coordinate gets a 1-bit amplitude with power ratio 5, the
//!   allocation order is derived from data both ends can reconstruct.
//! * `Pcb` - blockwise product-codebook quantization of `b` with the
//!   amplitudes folded into the metric.
//!
//! Reconstruction is a pure function of the record plus `(W, Sigma_hat)`:
//! `h_hat = normalize(W Sigma_hat c_hat)`.

use crate::bits::{index_bits, BitReader, BitWriter};
use crate::codebook::{pcb_quantize, CodebookError, ProductCodebook};
use crate::linalg::{weighted_chordal_sq, C64, CMat, CVec, LinalgError};
use crate::wideband::{orthonormality_defect, ORTHONORMALITY_TOL};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SubbandError {
    #[error("effective channels require an orthonormal basis (defect {0:.3e})")]
    NotOrthonormal(f64),
    #[error("dimension mismatch: {0}")]
    BadDims(String),
    #[error("invalid bit allocation: {0}")]
    BadAllocation(String),
    #[error("effective channel is numerically zero; the subband is orthogonal to the wideband basis")]
    DegenerateEffectiveChannel,
    #[error("record reconstructs to the zero vector")]
    ZeroRecord,
    #[error("payload truncated")]
    PayloadTruncated,
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Codebook(#[from] CodebookError),
}

/// Subband quantization scheme selector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubbandScheme {
    Ext2,
    Int5,
    Pcb,
}

impl SubbandScheme {
    pub fn label(&self) -> &'static str {
        match self {
            SubbandScheme::Ext2 => "ext2",
            SubbandScheme::Int5 => "int5",
            SubbandScheme::Pcb => "pcb",
        }
    }
}

/// Scalar-quantizer bit allocation: `m` strong coordinates with `b_ell`
/// phase bits each, the rest with `b_s` bits, amplitude power ratio `eta`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BitAllocationParams {
    pub m: usize,
    pub b_ell: usize,
    pub b_s: usize,
    pub eta: f64,
}

impl BitAllocationParams {
    pub fn ext2(m: usize, b_ell: usize, b_s: usize) -> Self {
        Self { m, b_ell, b_s, eta: 2.0 }
    }

    pub fn int5(m: usize, b_ell: usize, b_s: usize) -> Self {
        Self { m, b_ell, b_s, eta: 5.0 }
    }

    pub fn validate(&self, k: usize, scheme: SubbandScheme) -> Result<(), SubbandError> {
        if self.m + 1 > k {
            return Err(SubbandError::BadAllocation(format!(
                "m = {} needs at least {} coordinates, have {k}",
                self.m,
                self.m + 1
            )));
        }
        if self.b_s < 1 || self.b_ell <= self.b_s {
            return Err(SubbandError::BadAllocation(format!(
                "phase bits must satisfy b_ell > b_s >= 1, got ({}, {})",
                self.b_ell, self.b_s
            )));
        }
        let expected = match scheme {
            SubbandScheme::Ext2 => 2.0,
            SubbandScheme::Int5 => 5.0,
            SubbandScheme::Pcb => {
                return Err(SubbandError::BadAllocation(
                    "product codebooks do not take scalar allocation".into(),
                ))
            }
        };
        if (self.eta - expected).abs() > 1e-12 {
            return Err(SubbandError::BadAllocation(format!(
                "scheme {} requires power ratio {expected}, got {}",
                scheme.label(),
                self.eta
            )));
        }
        Ok(())
    }

    /// Paper-formula bit count of the coordinate payload.
    pub fn bit_count(&self, scheme: SubbandScheme, k: usize) -> Result<usize, SubbandError> {
        self.validate(k, scheme)?;
        Ok(match scheme {
            SubbandScheme::Ext2 => (self.b_ell + 1) * self.m + self.b_s * (k - self.m - 1),
            SubbandScheme::Int5 => k + self.b_ell * self.m + self.b_s * (k - self.m - 1),
            SubbandScheme::Pcb => unreachable!("validated above"),
        })
    }
}

/// Unified bit-count entry point; product codebooks account for their block
/// indices plus junction phases.
pub fn bit_count(
    scheme: SubbandScheme,
    k: usize,
    scalar: Option<&BitAllocationParams>,
    pcb: Option<&ProductCodebook>,
) -> Result<usize, SubbandError> {
    match scheme {
        SubbandScheme::Ext2 | SubbandScheme::Int5 => scalar
            .ok_or_else(|| SubbandError::BadAllocation("missing scalar allocation".into()))?
            .bit_count(scheme, k),
        SubbandScheme::Pcb => {
            let p = pcb
                .ok_or_else(|| SubbandError::BadAllocation("missing product codebook".into()))?;
            if p.vector_dim() != k {
                return Err(SubbandError::BadDims(format!(
                    "product codebook dimension {} does not match k = {k}",
                    p.vector_dim()
                )));
            }
            Ok(p.total_bits())
        }
    }
}

/// Effective channels of one subband in the shared basis: `b = W^H h` and
/// `c` with each coordinate divided by its quantized amplitude. Coordinates
/// with zero amplitude are pruned (set to zero in `c`, flagged) since the
/// receiver reconstructs zero there regardless.
#[derive(Clone, Debug)]
pub struct EffectiveChannels {
    pub b: CVec,
    pub c: CVec,
    /// true where the amplitude is zero but `b` has energy
    pub pruned: Vec<bool>,
}

pub fn effective_channels(
    w: &CMat,
    sigma_hat: &[f64],
    h: &CVec,
) -> Result<EffectiveChannels, SubbandError> {
    if w.rows() != h.len() || w.cols() != sigma_hat.len() {
        return Err(SubbandError::BadDims(format!(
            "basis {}x{}, {} amplitudes, channel length {}",
            w.rows(),
            w.cols(),
            sigma_hat.len(),
            h.len()
        )));
    }
    let defect = orthonormality_defect(w);
    if defect > ORTHONORMALITY_TOL {
        return Err(SubbandError::NotOrthonormal(defect));
    }
    let b = w.adjoint_mul_vec(h);
    let mut pruned = vec![false; b.len()];
    let c = CVec::from_fn(b.len(), |j| {
        if sigma_hat[j] > 0.0 {
            b[j] / sigma_hat[j]
        } else {
            C64::new(0.0, 0.0)
        }
    });
    for j in 0..b.len() {
        if sigma_hat[j] <= 0.0 && b[j].norm_sqr() > 0.0 {
            pruned[j] = true;
        }
    }
    Ok(EffectiveChannels { b, c, pruned })
}

/// The quantized subband record. Scalar variants keep their codes in
/// allocation-rank order (strong coordinates first), which both ends derive
/// the same way; the product variant stores the block and junction indices.
#[derive(Clone, Debug, PartialEq)]
pub enum SubbandRecord {
    Ext2 {
        /// 1-bit amplitude per strong coordinate, rank order: 0 -> level 1,
        /// 1 -> level 1/sqrt(2).
        amp_bits: Vec<u8>,
        strong_phases: Vec<u16>,
        weak_phases: Vec<u16>,
    },
    Int5 {
        /// 1-bit amplitude per coordinate in coordinate order: 0 -> low
        /// level, 1 -> high level.
        amp_bits: Vec<u8>,
        ref_index: usize,
        strong_phases: Vec<u16>,
        weak_phases: Vec<u16>,
    },
    Pcb {
        word_indices: Vec<usize>,
        phase_indices: Vec<usize>,
    },
}

/// One quantized subband: the record, both bit accountings, and the weighted
/// chordal distortion the quantizer attained.
#[derive(Clone, Debug)]
pub struct SubbandFeedback {
    pub scheme: SubbandScheme,
    pub k: usize,
    pub record: SubbandRecord,
    /// Coordinate of the phase/amplitude reference.
    pub ref_index: usize,
    /// Paper-formula bit count of the coordinate payload.
    pub bit_count: usize,
    /// Serialized payload length; for `Int5` this adds the explicit
    /// reference-index field.
    pub payload_bits: usize,
    /// Weighted squared chordal metric attained at quantization time.
    pub distortion_sq: f64,
}

/// Stable descending order of `keys`, ties keep the lower index.
fn rank_desc(keys: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..keys.len()).collect();
    order.sort_by(|&a, &b| keys[b].partial_cmp(&keys[a]).unwrap());
    order
}

/// Uniform phase code on `bits` bits for the angle of `value` relative to
/// `reference`: `round(phi * 2^bits / 2pi) mod 2^bits`.
fn phase_code(value: C64, reference: C64, bits: usize) -> u16 {
    let rel = value * reference.conj();
    if rel.norm_sqr() == 0.0 {
        return 0;
    }
    let levels = 1u32 << bits;
    let phi = rel.arg().rem_euclid(2.0 * PI);
    let code = (phi * levels as f64 / (2.0 * PI)).round() as u32 % levels;
    code as u16
}

fn phase_value(code: u16, bits: usize) -> f64 {
    2.0 * PI * code as f64 / (1u64 << bits) as f64
}

const SQRT5: f64 = 2.23606797749978969;

/// Extrinsic-order scalar quantizer. The reference is the coordinate with
/// the largest quantized amplitude (no bits); the `m` coordinates with the
/// next-largest amplitudes carry a 1-bit amplitude against levels
/// `{1, 1/sqrt(2)}` (nearest, ties to 1) and `b_ell`-bit phases; the rest
/// are fixed to amplitude `1/sqrt(2)` with `b_s`-bit phases.
pub fn quantize_ext2(
    c: &CVec,
    sigma_hat: &[f64],
    p: &BitAllocationParams,
) -> Result<SubbandFeedback, SubbandError> {
    let k = c.len();
    if sigma_hat.len() != k {
        return Err(SubbandError::BadDims(format!(
            "{} amplitudes for {k} coordinates",
            sigma_hat.len()
        )));
    }
    p.validate(k, SubbandScheme::Ext2)?;
    let rank = rank_desc(sigma_hat);
    let ref_index = rank[0];
    let ref_val = c[ref_index];
    // a zero reference coordinate leaves ratios and relative phases
    // undefined; measure against an absolute unit reference instead
    let reference = if ref_val.norm_sqr() > 0.0 { ref_val } else { C64::new(1.0, 0.0) };
    let ref_mag = reference.norm();

    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut amp_bits = Vec::with_capacity(p.m);
    let mut strong_phases = Vec::with_capacity(p.m);
    for &j in &rank[1..=p.m] {
        let ratio = c[j].norm() / ref_mag;
        // nearest of {1, 1/sqrt(2)}, ties to 1
        let bit = u8::from((ratio - 1.0).abs() > (ratio - s).abs());
        amp_bits.push(bit);
        strong_phases.push(phase_code(c[j], reference, p.b_ell));
    }
    let mut weak_phases = Vec::with_capacity(k - p.m - 1);
    for &j in &rank[p.m + 1..] {
        weak_phases.push(phase_code(c[j], reference, p.b_s));
    }
    let record = SubbandRecord::Ext2 { amp_bits, strong_phases, weak_phases };
    let bits = p.bit_count(SubbandScheme::Ext2, k)?;
    let c_hat = reconstruct_coordinates(&record, k, sigma_hat, p)?;
    let distortion_sq = weighted_chordal_sq(c, &c_hat, sigma_hat)?;
    Ok(SubbandFeedback {
        scheme: SubbandScheme::Ext2,
        k,
        record,
        ref_index,
        bit_count: bits,
        payload_bits: bits,
        distortion_sq,
    })
}

/// Intrinsic-order scalar quantizer. Every coordinate of the normalized `c`
/// gets a 1-bit amplitude against levels `{s, sqrt(5) s}` with
/// `s = sqrt(2 / (6K))` (equal-usage mean energy `1/K`), thresholded at the
/// midpoint. The allocation order is by `alpha_i = sigma_hat_i * a_hat_i`;
/// the strongest alpha is the phase reference.
pub fn quantize_int5(
    c: &CVec,
    sigma_hat: &[f64],
    p: &BitAllocationParams,
) -> Result<SubbandFeedback, SubbandError> {
    let k = c.len();
    if sigma_hat.len() != k {
        return Err(SubbandError::BadDims(format!(
            "{} amplitudes for {k} coordinates",
            sigma_hat.len()
        )));
    }
    p.validate(k, SubbandScheme::Int5)?;
    let norm = c.norm();
    if norm <= 0.0 {
        return Err(SubbandError::DegenerateEffectiveChannel);
    }
    let c_normed = c.scale(C64::new(1.0 / norm, 0.0));
    let s = (2.0 / (k as f64 * 6.0)).sqrt();
    let threshold = (1.0 + SQRT5) * s / 2.0;
    let amp_bits: Vec<u8> =
        (0..k).map(|j| u8::from(c_normed[j].norm() >= threshold)).collect();
    let levels = [s, SQRT5 * s];
    let alpha: Vec<f64> =
        (0..k).map(|j| sigma_hat[j] * levels[amp_bits[j] as usize]).collect();
    let rank = rank_desc(&alpha);
    let ref_index = rank[0];
    let ref_val = c_normed[ref_index];
    let reference = if ref_val.norm_sqr() > 0.0 { ref_val } else { C64::new(1.0, 0.0) };

    let mut strong_phases = Vec::with_capacity(p.m);
    for &j in &rank[1..=p.m] {
        strong_phases.push(phase_code(c_normed[j], reference, p.b_ell));
    }
    let mut weak_phases = Vec::with_capacity(k - p.m - 1);
    for &j in &rank[p.m + 1..] {
        weak_phases.push(phase_code(c_normed[j], reference, p.b_s));
    }
    let record = SubbandRecord::Int5 { amp_bits, ref_index, strong_phases, weak_phases };
    let bits = p.bit_count(SubbandScheme::Int5, k)?;
    let c_hat = reconstruct_coordinates(&record, k, sigma_hat, p)?;
    let distortion_sq = weighted_chordal_sq(&c_normed, &c_hat, sigma_hat)?;
    Ok(SubbandFeedback {
        scheme: SubbandScheme::Int5,
        k,
        record,
        ref_index,
        bit_count: bits,
        // the reference index is data-dependent and carried explicitly
        payload_bits: bits + index_bits(k),
        distortion_sq,
    })
}

/// Product-codebook subband quantization of `b` with the quantized
/// amplitudes folded into the metric.
pub fn quantize_pcb_subband(
    b: &CVec,
    sigma_hat: &[f64],
    pcb: &ProductCodebook,
) -> Result<SubbandFeedback, SubbandError> {
    let k = b.len();
    let q = pcb_quantize(b, sigma_hat, pcb)?;
    let bits = pcb.total_bits();
    Ok(SubbandFeedback {
        scheme: SubbandScheme::Pcb,
        k,
        record: SubbandRecord::Pcb {
            word_indices: q.word_indices,
            phase_indices: q.phase_indices,
        },
        ref_index: 0,
        bit_count: bits,
        payload_bits: bits,
        distortion_sq: q.distortion_sq,
    })
}

/// Decode a scalar record into effective-channel coordinates `c_hat`. The
/// allocation order is re-derived from `sigma_hat` (and, for `Int5`, the
/// transmitted amplitude bits), exactly as the quantizer derived it.
pub fn reconstruct_coordinates(
    record: &SubbandRecord,
    k: usize,
    sigma_hat: &[f64],
    p: &BitAllocationParams,
) -> Result<CVec, SubbandError> {
    match record {
        SubbandRecord::Ext2 { amp_bits, strong_phases, weak_phases } => {
            if amp_bits.len() != p.m || weak_phases.len() + amp_bits.len() + 1 != k {
                return Err(SubbandError::BadDims("record does not match allocation".into()));
            }
            let rank = rank_desc(sigma_hat);
            let s = std::f64::consts::FRAC_1_SQRT_2;
            let mut c_hat = CVec::zeros(k);
            c_hat[rank[0]] = C64::new(1.0, 0.0);
            for (pos, &j) in rank[1..=p.m].iter().enumerate() {
                let level = if amp_bits[pos] == 0 { 1.0 } else { s };
                c_hat[j] = C64::from_polar(level, phase_value(strong_phases[pos], p.b_ell));
            }
            for (pos, &j) in rank[p.m + 1..].iter().enumerate() {
                c_hat[j] = C64::from_polar(s, phase_value(weak_phases[pos], p.b_s));
            }
            Ok(c_hat)
        }
        SubbandRecord::Int5 { amp_bits, ref_index, strong_phases, weak_phases } => {
            if amp_bits.len() != k {
                return Err(SubbandError::BadDims("record does not match allocation".into()));
            }
            let s = (2.0 / (k as f64 * 6.0)).sqrt();
            let levels = [s, SQRT5 * s];
            let alpha: Vec<f64> =
                (0..k).map(|j| sigma_hat[j] * levels[amp_bits[j] as usize]).collect();
            let rank = rank_desc(&alpha);
            debug_assert_eq!(
                rank[0], *ref_index,
                "transmitted reference must agree with the derived order"
            );
            let mut c_hat = CVec::zeros(k);
            c_hat[*ref_index] = C64::new(levels[amp_bits[*ref_index] as usize], 0.0);
            for (pos, &j) in rank[1..=p.m].iter().enumerate() {
                c_hat[j] = C64::from_polar(
                    levels[amp_bits[j] as usize],
                    phase_value(strong_phases[pos], p.b_ell),
                );
            }
            for (pos, &j) in rank[p.m + 1..].iter().enumerate() {
                c_hat[j] = C64::from_polar(
                    levels[amp_bits[j] as usize],
                    phase_value(weak_phases[pos], p.b_s),
                );
            }
            Ok(c_hat)
        }
        SubbandRecord::Pcb { .. } => Err(SubbandError::BadDims(
            "product records reconstruct through their codebook".into(),
        )),
    }
}

/// Reconstruct the product-codebook coordinates from indices.
pub fn reconstruct_pcb_coordinates(
    record: &SubbandRecord,
    pcb: &ProductCodebook,
) -> Result<CVec, SubbandError> {
    let SubbandRecord::Pcb { word_indices, phase_indices } = record else {
        return Err(SubbandError::BadDims("not a product record".into()));
    };
    let blocks = pcb.blocks();
    let nl = pcb.block_dim();
    let scale = 1.0 / (blocks as f64).sqrt();
    let mut data = Vec::with_capacity(pcb.vector_dim());
    for t in 0..blocks {
        let theta = if t == 0 {
            0.0
        } else {
            2.0 * PI * phase_indices[t - 1] as f64 / pcb.phase_count() as f64
        };
        let rot = C64::from_polar(scale, theta);
        for i in 0..nl {
            data.push(pcb.component().word(word_indices[t])[i] * rot);
        }
    }
    Ok(CVec::new(data))
}

/// Reconstruct the unit-norm channel direction straight from a feedback
/// record: decode the coordinates for its scheme, then
/// `h_hat = normalize(W Sigma_hat c_hat)`.
pub fn reconstruct_subband(
    w: &CMat,
    sigma_hat: &[f64],
    fb: &SubbandFeedback,
    scalar: Option<&BitAllocationParams>,
    pcb: Option<&ProductCodebook>,
) -> Result<CVec, SubbandError> {
    let c_hat = match (&fb.record, scalar, pcb) {
        (SubbandRecord::Pcb { .. }, _, Some(p)) => reconstruct_pcb_coordinates(&fb.record, p)?,
        (SubbandRecord::Pcb { .. }, _, None) => {
            return Err(SubbandError::BadAllocation("missing product codebook".into()))
        }
        (_, Some(params), _) => reconstruct_coordinates(&fb.record, fb.k, sigma_hat, params)?,
        (_, None, _) => {
            return Err(SubbandError::BadAllocation("missing scalar allocation".into()))
        }
    };
    reconstruct(w, sigma_hat, &c_hat)
}

/// Reconstruct the unit-norm subband channel direction
/// `h_hat = normalize(W Sigma_hat c_hat)`.
pub fn reconstruct(w: &CMat, sigma_hat: &[f64], c_hat: &CVec) -> Result<CVec, SubbandError> {
    if w.cols() != c_hat.len() || sigma_hat.len() != c_hat.len() {
        return Err(SubbandError::BadDims(format!(
            "basis has {} columns, {} amplitudes, {} coordinates",
            w.cols(),
            sigma_hat.len(),
            c_hat.len()
        )));
    }
    let weighted = c_hat.weighted(sigma_hat);
    let h = w.mul_vec(&weighted);
    h.normalized().map_err(|_| SubbandError::ZeroRecord)
}

/// Serialize a record. Field order: Ext2 packs per strong coordinate the
/// amplitude bit then the phase, followed by the weak phases; Int5 packs the
/// K amplitude bits (coordinate order), the reference index, then strong and
/// weak phases in rank order; Pcb packs block word indices then junction
/// phases.
pub fn write_payload(
    fb: &SubbandFeedback,
    p: Option<&BitAllocationParams>,
    pcb: Option<&ProductCodebook>,
) -> Result<BitWriter, SubbandError> {
    let mut w = BitWriter::new();
    match &fb.record {
        SubbandRecord::Ext2 { amp_bits, strong_phases, weak_phases } => {
            let p = p.ok_or_else(|| SubbandError::BadAllocation("missing allocation".into()))?;
            for (a, ph) in amp_bits.iter().zip(strong_phases.iter()) {
                w.write(*a as u64, 1);
                w.write(*ph as u64, p.b_ell);
            }
            for ph in weak_phases {
                w.write(*ph as u64, p.b_s);
            }
        }
        SubbandRecord::Int5 { amp_bits, ref_index, strong_phases, weak_phases } => {
            let p = p.ok_or_else(|| SubbandError::BadAllocation("missing allocation".into()))?;
            for a in amp_bits {
                w.write(*a as u64, 1);
            }
            w.write(*ref_index as u64, index_bits(fb.k));
            for ph in strong_phases {
                w.write(*ph as u64, p.b_ell);
            }
            for ph in weak_phases {
                w.write(*ph as u64, p.b_s);
            }
        }
        SubbandRecord::Pcb { word_indices, phase_indices } => {
            let pcb = pcb
                .ok_or_else(|| SubbandError::BadAllocation("missing product codebook".into()))?;
            let wbits = pcb.component().index_bits();
            for idx in word_indices {
                w.write(*idx as u64, wbits);
            }
            for ph in phase_indices {
                w.write(*ph as u64, pcb.phase_bits());
            }
        }
    }
    if w.bit_len() != fb.payload_bits {
        return Err(SubbandError::BadDims(format!(
            "payload length {} does not match declared {}",
            w.bit_len(),
            fb.payload_bits
        )));
    }
    Ok(w)
}

/// Parse a payload back into a record, given the shared configuration.
pub fn read_payload(
    bytes: &[u8],
    scheme: SubbandScheme,
    k: usize,
    p: Option<&BitAllocationParams>,
    pcb: Option<&ProductCodebook>,
) -> Result<SubbandRecord, SubbandError> {
    let mut r = BitReader::new(bytes);
    match scheme {
        SubbandScheme::Ext2 => {
            let p = p.ok_or_else(|| SubbandError::BadAllocation("missing allocation".into()))?;
            let mut amp_bits = Vec::with_capacity(p.m);
            let mut strong_phases = Vec::with_capacity(p.m);
            for _ in 0..p.m {
                amp_bits.push(r.read(1).ok_or(SubbandError::PayloadTruncated)? as u8);
                strong_phases.push(r.read(p.b_ell).ok_or(SubbandError::PayloadTruncated)? as u16);
            }
            let mut weak_phases = Vec::with_capacity(k - p.m - 1);
            for _ in 0..k - p.m - 1 {
                weak_phases.push(r.read(p.b_s).ok_or(SubbandError::PayloadTruncated)? as u16);
            }
            Ok(SubbandRecord::Ext2 { amp_bits, strong_phases, weak_phases })
        }
        SubbandScheme::Int5 => {
            let p = p.ok_or_else(|| SubbandError::BadAllocation("missing allocation".into()))?;
            let mut amp_bits = Vec::with_capacity(k);
            for _ in 0..k {
                amp_bits.push(r.read(1).ok_or(SubbandError::PayloadTruncated)? as u8);
            }
            let ref_index = r.read(index_bits(k)).ok_or(SubbandError::PayloadTruncated)? as usize;
            let mut strong_phases = Vec::with_capacity(p.m);
            for _ in 0..p.m {
                strong_phases.push(r.read(p.b_ell).ok_or(SubbandError::PayloadTruncated)? as u16);
            }
            let mut weak_phases = Vec::with_capacity(k - p.m - 1);
            for _ in 0..k - p.m - 1 {
                weak_phases.push(r.read(p.b_s).ok_or(SubbandError::PayloadTruncated)? as u16);
            }
            Ok(SubbandRecord::Int5 { amp_bits, ref_index, strong_phases, weak_phases })
        }
        SubbandScheme::Pcb => {
            let pcb = pcb
                .ok_or_else(|| SubbandError::BadAllocation("missing product codebook".into()))?;
            let wbits = pcb.component().index_bits();
            let mut word_indices = Vec::with_capacity(pcb.blocks());
            for _ in 0..pcb.blocks() {
                word_indices.push(r.read(wbits).ok_or(SubbandError::PayloadTruncated)? as usize);
            }
            let mut phase_indices = Vec::with_capacity(pcb.blocks() - 1);
            for _ in 0..pcb.blocks() - 1 {
                phase_indices.push(
                    r.read(pcb.phase_bits()).ok_or(SubbandError::PayloadTruncated)? as usize,
                );
            }
            Ok(SubbandRecord::Pcb { word_indices, phase_indices })
        }
    }
}
