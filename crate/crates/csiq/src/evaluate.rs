//! Distortion metrics, identity and bound checks, and the multiuser
//! zero-forcing spectral-efficiency simulation.
//!
//! The overall quantization distortion `D_H = E[d^2(h, h_hat)]` splits, for
//! an orthonormal wideband basis, into the in-span quantization term plus
//! the projection distortion `d_p`. This module measures all three on
//! concrete channel sets, verifies the per-sample decomposition identity and
//! the `d_p <= D_H <= D_B + d_p` bounds, and evaluates what the residual
//! distortion costs in rate terms: zero-forcing precoding built from
//! reconstructed channels, scored with the true channels.
//!
//! The inner-product convention is Hermitian throughout (`h^H z`);
//! zero-forcing nulls interference with respect to the reconstructed
//! channels, so the nulling residual is asserted against those, not the true
//! ones.

use crate::channel::{normalized_sample_covariance, ChannelError, ChannelSet, PolarizationMode};
use crate::codebook::{CodebookError, LineCodebook, ProductCodebook};
use crate::linalg::{
    chordal_distance_sq, cholesky, cholesky_solve, projector, span_projector, C64, CMat, CVec,
    HermitianPsd, LinalgError,
};
use crate::subband::{
    effective_channels, quantize_ext2, quantize_int5, quantize_pcb_subband,
    reconstruct_coordinates, reconstruct_pcb_coordinates, BitAllocationParams, SubbandError,
    SubbandFeedback, SubbandScheme,
};
use crate::wideband::{
    build_feedback, projection_distortion, AmplitudeCodebook, WidebandError, WidebandFeedback,
    WidebandScheme,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("empty channel set")]
    EmptyChannelSet,
    #[error("codeword {index} lies outside the wideband span (residual {residual:.3e})")]
    CodewordOutOfSpan { index: usize, residual: f64 },
    #[error("zero-forcing matrix is rank deficient; two users fed back identical directions")]
    ZfRankDeficient,
    #[error("zero-forcing nulling residual {0:.3e} exceeds tolerance")]
    ZfNullingFailed(f64),
    #[error("dimension mismatch: {0}")]
    BadDims(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Wideband(#[from] WidebandError),
    #[error(transparent)]
    Subband(#[from] SubbandError),
    #[error(transparent)]
    Codebook(#[from] CodebookError),
}

/// How the wideband stage produces the shared basis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum WidebandStage {
    /// Exact eigenbasis and exact singular values, no quantization: the
    /// reference point for subband-only studies.
    Ideal,
    Scheme(WidebandScheme),
}

/// How effective channels are computed when the fed-back basis is not
/// orthonormal (the `Ind` scheme).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndCoordinates {
    /// Least-squares coordinates through the pseudo-inverse of `V`.
    PseudoInverse,
    /// Plain adjoint coordinates `V^H h`.
    Adjoint,
}

/// Subband stage selector carrying its parameters.
#[derive(Clone, Debug)]
pub enum SubbandStage<'a> {
    Ext2(BitAllocationParams),
    Int5(BitAllocationParams),
    Pcb(&'a ProductCodebook),
    /// Infinite-resolution coordinates: isolates the wideband contribution.
    Perfect,
}

impl SubbandStage<'_> {
    pub fn label(&self) -> &'static str {
        match self {
            SubbandStage::Ext2(_) => "ext2",
            SubbandStage::Int5(_) => "int5",
            SubbandStage::Pcb(_) => "pcb",
            SubbandStage::Perfect => "perfect",
        }
    }

    pub fn scheme(&self) -> Option<SubbandScheme> {
        match self {
            SubbandStage::Ext2(_) => Some(SubbandScheme::Ext2),
            SubbandStage::Int5(_) => Some(SubbandScheme::Int5),
            SubbandStage::Pcb(_) => Some(SubbandScheme::Pcb),
            SubbandStage::Perfect => None,
        }
    }
}

/// A full feedback pipeline: wideband stage, polarization structure,
/// codebooks and the subband stage.
#[derive(Clone)]
pub struct Pipeline<'a> {
    pub wideband: WidebandStage,
    pub pol_mode: PolarizationMode,
    pub k: usize,
    /// Line codebook in the block dimension of `pol_mode`.
    pub cb: &'a LineCodebook,
    pub amp_cb: &'a AmplitudeCodebook,
    pub subband: SubbandStage<'a>,
    pub ind_coords: IndCoordinates,
}

/// Everything measured while quantizing one user's aggregate CSI.
pub struct UserOutcome {
    /// Wideband record; absent for the ideal wideband stage.
    pub wideband: Option<WidebandFeedback>,
    pub subbands: Vec<Option<SubbandFeedback>>,
    /// Reconstructed unit-norm per-subband directions, the BS view.
    pub reconstructed: Vec<CVec>,
    /// Projection distortion of the basis against this user's covariance.
    pub d_p: f64,
    /// Per-subband squared chordal distortion of the coordinates.
    pub d_b_terms: Vec<f64>,
    /// Per-subband squared chordal distortion of the full channel.
    pub d_h_terms: Vec<f64>,
    /// `| mean d_h - (in-span term + d_p) |`, the decomposition residual.
    pub decomposition_residual: f64,
    /// Whether the basis used for coordinates is orthonormal.
    pub orthonormal_basis: bool,
}

impl UserOutcome {
    pub fn d_h_mean(&self) -> f64 {
        mean(&self.d_h_terms)
    }

    pub fn d_b_mean(&self) -> f64 {
        mean(&self.d_b_terms)
    }
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Pseudo-inverse coordinates: minimum-norm solution of `V x ~ h`. The Gram
/// matrix can be singular when independent quantization maps two
/// eigenvectors onto one codeword, so small eigenvalues are pseudo-inverted
/// to zero rather than solved.
fn pinv_coordinates(v: &CMat, h: &CVec) -> Result<CVec, EvalError> {
    let gram = v.adjoint().mul(v);
    let k = gram.rows();
    let rhs = v.adjoint_mul_vec(h);
    match cholesky(&gram) {
        Ok(chol) => Ok(cholesky_solve(&chol, &rhs)),
        Err(_) => {
            let psd = HermitianPsd::new(gram.clone())?;
            let eig = crate::linalg::eigh_topk(&psd, k)?;
            let tol = 1e-12 * eig.values[0].max(1.0);
            let mut x = CVec::zeros(k);
            for j in 0..k {
                if eig.values[j] > tol {
                    let coeff = eig.vectors.col(j).dot(&rhs) / eig.values[j];
                    for i in 0..k {
                        x[i] += eig.vectors.col(j)[i] * coeff;
                    }
                }
            }
            Ok(x)
        }
    }
}

/// Run the full pipeline on one user: wideband feedback, per-subband
/// quantization, reconstruction and all per-user distortion measurements.
pub fn quantize_user(set: &ChannelSet, pipe: &Pipeline) -> Result<UserOutcome, EvalError> {
    if set.subbands.is_empty() {
        return Err(EvalError::EmptyChannelSet);
    }
    let r = normalized_sample_covariance(set)?;

    let (w, sigma_hat, wideband_fb): (CMat, Vec<f64>, Option<WidebandFeedback>) =
        match pipe.wideband {
            WidebandStage::Ideal => {
                let eig = crate::linalg::eigh_topk(&r, pipe.k)?;
                let sigma = eig.singular_values();
                (eig.vectors, sigma, None)
            }
            WidebandStage::Scheme(scheme) => {
                let fb = build_feedback(&r, scheme, pipe.pol_mode, pipe.k, pipe.cb, pipe.amp_cb)?;
                (fb.w.clone(), fb.sigma_hat.clone(), Some(fb))
            }
        };

    let orthonormal = crate::wideband::orthonormality_defect(&w) <= crate::wideband::ORTHONORMALITY_TOL;
    // The span projector tolerates the rank-deficient codeword matrices the
    // independent scheme can produce; on full rank it agrees with the plain
    // projector, so d_p keeps its meaning.
    let p_w = span_projector(&w)?;
    let d_p = {
        let trace = r.trace();
        if (trace - 1.0).abs() > 1e-9 {
            return Err(EvalError::Wideband(WidebandError::UnnormalizedCovariance(trace)));
        }
        (1.0 - p_w.mul(r.mat()).trace().re).clamp(0.0, 1.0)
    };

    let mut subbands = Vec::with_capacity(set.subbands.len());
    let mut reconstructed = Vec::with_capacity(set.subbands.len());
    let mut d_b_terms = Vec::with_capacity(set.subbands.len());
    let mut d_h_terms = Vec::with_capacity(set.subbands.len());
    let mut in_span_terms = Vec::with_capacity(set.subbands.len());

    for h in &set.subbands {
        // Effective coordinates. Orthonormal bases go through the shared
        // helper; a raw Ind basis uses the configured coordinate map.
        let (b, c) = if orthonormal {
            let eff = effective_channels(&w, &sigma_hat, h)?;
            (eff.b, eff.c)
        } else {
            let b = match pipe.ind_coords {
                IndCoordinates::PseudoInverse => pinv_coordinates(&w, h)?,
                IndCoordinates::Adjoint => w.adjoint_mul_vec(h),
            };
            let c = CVec::from_fn(b.len(), |j| {
                if sigma_hat[j] > 0.0 { b[j] / sigma_hat[j] } else { C64::new(0.0, 0.0) }
            });
            (b, c)
        };

        let (fb, c_hat) = match &pipe.subband {
            SubbandStage::Ext2(p) => {
                let fb = quantize_ext2(&c, &sigma_hat, p)?;
                let c_hat = reconstruct_coordinates(&fb.record, pipe.k, &sigma_hat, p)?;
                (Some(fb), c_hat)
            }
            SubbandStage::Int5(p) => {
                let fb = quantize_int5(&c, &sigma_hat, p)?;
                let c_hat = reconstruct_coordinates(&fb.record, pipe.k, &sigma_hat, p)?;
                (Some(fb), c_hat)
            }
            SubbandStage::Pcb(pcb) => {
                let fb = quantize_pcb_subband(&b, &sigma_hat, pcb)?;
                let c_hat = reconstruct_pcb_coordinates(&fb.record, pcb)?;
                (Some(fb), c_hat)
            }
            SubbandStage::Perfect => (None, c.clone()),
        };

        // Coordinate-domain distortion d^2(b, Sigma_hat c_hat).
        let b_hat = c_hat.weighted(&sigma_hat);
        let d_b = if b.norm_sq() > 0.0 && b_hat.norm_sq() > 0.0 {
            chordal_distance_sq(&b, &b_hat)?
        } else {
            1.0
        };
        // Channel-domain reconstruction and distortion.
        let h_hat = crate::subband::reconstruct(&w, &sigma_hat, &c_hat)?;
        let d_h = chordal_distance_sq(h, &h_hat)?;
        // In-span term of the decomposition: |h_par|^2/|h|^2 * d^2(h_par, h_hat).
        let h_par = p_w.mul_vec(h);
        let in_span = if h_par.norm_sq() > 0.0 {
            h_par.norm_sq() / h.norm_sq() * chordal_distance_sq(&h_par, &h_hat)?
        } else {
            0.0
        };

        subbands.push(fb);
        reconstructed.push(h_hat);
        d_b_terms.push(d_b);
        d_h_terms.push(d_h);
        in_span_terms.push(in_span);
    }

    let decomposition_residual = (mean(&d_h_terms) - (mean(&in_span_terms) + d_p)).abs();
    Ok(UserOutcome {
        wideband: wideband_fb,
        subbands,
        reconstructed,
        d_p,
        d_b_terms,
        d_h_terms,
        decomposition_residual,
        orthonormal_basis: orthonormal,
    })
}

/// Aggregated distortion measurements over a user population.
#[derive(Clone, Debug, Serialize)]
pub struct DistortionReport {
    pub d_h: f64,
    pub d_b: f64,
    pub d_p: f64,
    pub decomposition_residual: f64,
    pub lower_gap: f64,
    pub upper_gap: f64,
    pub orthonormal: bool,
    /// Users whose wideband quantization collided onto duplicate codewords
    /// and were excluded from the aggregates.
    pub excluded_users: usize,
    pub per_user_d_h: Vec<f64>,
    pub per_user_d_b: Vec<f64>,
    pub per_user_d_p: Vec<f64>,
}

/// Monte-Carlo mean of `d^2(h, h_hat)` over users and subbands, with the
/// companion quantities needed for the bound checks. Users whose shared
/// orthonormalization fails on a codeword collision are excluded and
/// counted; which users those are depends only on the data, so the report
/// stays deterministic.
pub fn distortion_report(
    sets: &[ChannelSet],
    pipe: &Pipeline,
) -> Result<DistortionReport, EvalError> {
    if sets.is_empty() {
        return Err(EvalError::EmptyChannelSet);
    }
    use rayon::prelude::*;
    let outcomes: Vec<Result<UserOutcome, EvalError>> =
        sets.par_iter().map(|set| quantize_user(set, pipe)).collect();
    let mut per_user_d_h = Vec::with_capacity(sets.len());
    let mut per_user_d_b = Vec::with_capacity(sets.len());
    let mut per_user_d_p = Vec::with_capacity(sets.len());
    let mut residual_worst = 0.0f64;
    let mut orthonormal = true;
    let mut excluded_users = 0usize;
    for outcome in outcomes {
        match outcome {
            Ok(outcome) => {
                per_user_d_h.push(outcome.d_h_mean());
                per_user_d_b.push(outcome.d_b_mean());
                per_user_d_p.push(outcome.d_p);
                residual_worst = residual_worst.max(outcome.decomposition_residual);
                orthonormal &= outcome.orthonormal_basis;
            }
            Err(EvalError::Wideband(WidebandError::RankDeficient { .. })) => {
                excluded_users += 1;
            }
            Err(e) => return Err(e),
        }
    }
    if per_user_d_h.is_empty() {
        return Err(EvalError::EmptyChannelSet);
    }
    let d_h = mean(&per_user_d_h);
    let d_b = mean(&per_user_d_b);
    let d_p = mean(&per_user_d_p);
    Ok(DistortionReport {
        d_h,
        d_b,
        d_p,
        decomposition_residual: residual_worst,
        lower_gap: d_h - d_p,
        upper_gap: (d_b + d_p) - d_h,
        orthonormal,
        excluded_users,
        per_user_d_h,
        per_user_d_b,
        per_user_d_p,
    })
}

/// Overall quantization distortion `D_H` alone.
pub fn overall_distortion(sets: &[ChannelSet], pipe: &Pipeline) -> Result<f64, EvalError> {
    Ok(distortion_report(sets, pipe)?.d_h)
}

/// Subband distortion `D_B = E[d^2(W^H h, b_hat)]` for an explicitly given
/// orthonormal basis. The coordinate-domain distortion is undefined for a
/// non-orthonormal basis (no isometry), hence the gate.
pub fn subband_distortion(
    sets: &[ChannelSet],
    w: &CMat,
    sigma_hat: &[f64],
    stage: &SubbandStage,
) -> Result<f64, EvalError> {
    let defect = crate::wideband::orthonormality_defect(w);
    if defect > crate::wideband::ORTHONORMALITY_TOL {
        return Err(EvalError::Wideband(WidebandError::NotOrthonormal(defect)));
    }
    if sets.is_empty() {
        return Err(EvalError::EmptyChannelSet);
    }
    let mut terms = Vec::new();
    for set in sets {
        for h in &set.subbands {
            let eff = effective_channels(w, sigma_hat, h)?;
            let c_hat = match stage {
                SubbandStage::Ext2(p) => {
                    let fb = quantize_ext2(&eff.c, sigma_hat, p)?;
                    reconstruct_coordinates(&fb.record, w.cols(), sigma_hat, p)?
                }
                SubbandStage::Int5(p) => {
                    let fb = quantize_int5(&eff.c, sigma_hat, p)?;
                    reconstruct_coordinates(&fb.record, w.cols(), sigma_hat, p)?
                }
                SubbandStage::Pcb(pcb) => {
                    let fb = quantize_pcb_subband(&eff.b, sigma_hat, pcb)?;
                    reconstruct_pcb_coordinates(&fb.record, pcb)?
                }
                SubbandStage::Perfect => eff.c.clone(),
            };
            let b_hat = c_hat.weighted(sigma_hat);
            terms.push(chordal_distance_sq(&eff.b, &b_hat)?);
        }
    }
    Ok(mean(&terms))
}

/// Verify the per-sample distortion decomposition on a sample set: quantize
/// each vector exhaustively over an in-span codebook and compare
/// `mean min d^2(h, h_hat)` with `mean |h_par|^2 min d^2(h_par, h_hat) +
/// d_p(W, R_emp)`, where `R_emp` is the empirical normalized covariance of
/// the same samples. The identity is algebraic; the residual stays at
/// machine precision for any orthonormal `w` and in-span codebook.
pub fn decomposition_check(
    samples: &[CVec],
    w: &CMat,
    codebook: &[CVec],
) -> Result<f64, EvalError> {
    if samples.is_empty() || codebook.is_empty() {
        return Err(EvalError::EmptyChannelSet);
    }
    let p_w = projector(w)?;
    for (i, word) in codebook.iter().enumerate() {
        let residual = word.sub(&p_w.mul_vec(word)).norm();
        if residual > 1e-9 {
            return Err(EvalError::CodewordOutOfSpan { index: i, residual });
        }
    }
    let r_emp = crate::channel::empirical_covariance(samples)?;
    let d_p = projection_distortion(w, &r_emp)?;

    let mut lhs_terms = Vec::with_capacity(samples.len());
    let mut in_span_terms = Vec::with_capacity(samples.len());
    for h in samples {
        let mut best = f64::INFINITY;
        let mut best_in_span = f64::INFINITY;
        let h_par = p_w.mul_vec(h);
        for word in codebook {
            let d2 = chordal_distance_sq(h, word)?;
            if d2 < best {
                best = d2;
                best_in_span = if h_par.norm_sq() > 0.0 {
                    h_par.norm_sq() / h.norm_sq() * chordal_distance_sq(&h_par, word)?
                } else {
                    0.0
                };
            }
        }
        lhs_terms.push(best);
        in_span_terms.push(best_in_span);
    }
    Ok((mean(&lhs_terms) - (mean(&in_span_terms) + d_p)).abs())
}

/// Lower and upper bound gaps of the distortion split: `d_h - d_p >= 0` and
/// `(d_b + d_p) - d_h >= 0` for orthonormal wideband feedback.
pub fn bounds_check(sets: &[ChannelSet], pipe: &Pipeline) -> Result<(f64, f64), EvalError> {
    let report = distortion_report(sets, pipe)?;
    Ok((report.lower_gap, report.upper_gap))
}

/// Zero-forcing precoder for user directions `h_hat` (unit rows): columns
/// `z_u` are unit-norm and satisfy `h_hat_v^H z_u = 0` for `v != u`, checked
/// to 1e-8.
pub fn zf_precoder(user_dirs: &[CVec]) -> Result<CMat, EvalError> {
    let u_count = user_dirs.len();
    if u_count == 0 {
        return Err(EvalError::EmptyChannelSet);
    }
    let n_t = user_dirs[0].len();
    if u_count > n_t {
        return Err(EvalError::BadDims(format!("{u_count} users exceed {n_t} antennas")));
    }
    let m = CMat::from_cols(user_dirs);
    let gram = m.adjoint().mul(&m);
    let chol = cholesky(&gram).map_err(|_| EvalError::ZfRankDeficient)?;
    let mut cols = Vec::with_capacity(u_count);
    for u in 0..u_count {
        let x = cholesky_solve(&chol, &CVec::unit(u_count, u));
        let z = m.mul_vec(&x);
        cols.push(z.normalized().map_err(|_| EvalError::ZfRankDeficient)?);
    }
    let z = CMat::from_cols(&cols);
    // nulling residual against the fed-back directions
    let mut worst = 0.0f64;
    for v in 0..u_count {
        for u in 0..u_count {
            if v != u {
                let ip = user_dirs[v].dot(&z.col(u)).norm();
                worst = worst.max(ip);
            }
        }
    }
    if worst > 1e-8 {
        return Err(EvalError::ZfNullingFailed(worst));
    }
    Ok(z)
}

/// Spectral-efficiency evaluation settings. The per-user SNR at a grid
/// point is `(P/U) * |h|^2 / N0` with channels normalized to unit mean
/// square norm, so the grid is applied by scaling `N0`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ZfConfig {
    pub users: usize,
    pub snr_grid_db: Vec<f64>,
    pub power: f64,
}

/// Mean spectral efficiency per SNR point, for the quantized pipeline and
/// the perfect-CSI baseline evaluated on the same drops.
#[derive(Clone, Debug, Serialize)]
pub struct SeCurve {
    pub snr_db: Vec<f64>,
    pub se_quantized: Vec<f64>,
    pub se_perfect: Vec<f64>,
    /// Drops skipped because a user's wideband feedback collided or the
    /// fed-back directions were degenerate beyond repair.
    pub skipped_drops: usize,
    /// User-subband transmissions dropped after two users fed back the same
    /// direction; the scheduled user counts toward the average with zero
    /// rate.
    pub dropped_users: usize,
}

/// Users served on one subband: any user whose direction duplicates an
/// earlier user's is dropped from transmission (the base station cannot
/// separate them), counted, and scored at zero rate.
fn served_users(dirs: &[CVec]) -> (Vec<usize>, usize) {
    let mut served: Vec<usize> = Vec::with_capacity(dirs.len());
    let mut dropped = 0usize;
    for u in 0..dirs.len() {
        let duplicate = served.iter().any(|&v| {
            chordal_distance_sq(&dirs[v], &dirs[u]).map(|d| d < 1e-18).unwrap_or(false)
        });
        if duplicate {
            dropped += 1;
        } else {
            served.push(u);
        }
    }
    (served, dropped)
}

struct DropOutcome {
    quant_sums: Vec<f64>,
    perfect_sums: Vec<f64>,
    samples: usize,
    dropped_users: usize,
}

/// Evaluate one drop (a fixed user set): per-SNR sums of `log2(1 + sinr)`
/// over users and subbands, for quantized and perfect CSI.
fn evaluate_drop(
    drop_sets: &[ChannelSet],
    pipe: &Pipeline,
    zf: &ZfConfig,
) -> Result<DropOutcome, EvalError> {
    let u_count = drop_sets.len();
    let s_count = drop_sets[0].n_subbands();
    // Normalize each user's channels to unit mean square norm.
    let scales: Vec<f64> = drop_sets
        .iter()
        .map(|set| {
            let mean_sq: f64 =
                set.subbands.iter().map(|h| h.norm_sq()).sum::<f64>() / s_count as f64;
            (1.0 / mean_sq).sqrt()
        })
        .collect();

    // Quantize every user once; reuse reconstructions across subbands.
    let outcomes: Vec<UserOutcome> = drop_sets
        .iter()
        .map(|set| quantize_user(set, pipe))
        .collect::<Result<_, _>>()?;

    let a_sq = zf.power / u_count as f64;
    let mut quant_sums = vec![0.0; zf.snr_grid_db.len()];
    let mut perfect_sums = vec![0.0; zf.snr_grid_db.len()];
    let mut samples = 0usize;
    let mut dropped_users = 0usize;
    for s in 0..s_count {
        let fed_dirs: Vec<CVec> =
            outcomes.iter().map(|o| o.reconstructed[s].clone()).collect();
        let true_dirs: Vec<CVec> = drop_sets
            .iter()
            .map(|set| set.subbands[s].normalized())
            .collect::<Result<_, _>>()?;
        let (served, dropped) = served_users(&fed_dirs);
        dropped_users += dropped * zf.snr_grid_db.len();
        let served_dirs: Vec<CVec> = served.iter().map(|&u| fed_dirs[u].clone()).collect();
        let z_quant = zf_precoder(&served_dirs)?;
        let z_perfect = zf_precoder(&true_dirs)?;
        for (g, &snr_db) in zf.snr_grid_db.iter().enumerate() {
            let rho = 10f64.powf(snr_db / 10.0);
            let n0 = a_sq / rho;
            for (zi, &u) in served.iter().enumerate() {
                let h = drop_sets[u].subbands[s].scale(C64::new(scales[u], 0.0));
                // quantized-CSI precoder scored against the true channel
                let sig = a_sq * h.dot(&z_quant.col(zi)).norm_sqr();
                let mut interf = 0.0;
                for vi in 0..served.len() {
                    if vi != zi {
                        interf += a_sq * h.dot(&z_quant.col(vi)).norm_sqr();
                    }
                }
                quant_sums[g] += (1.0 + sig / (interf + n0)).log2();
            }
            for u in 0..u_count {
                let h = drop_sets[u].subbands[s].scale(C64::new(scales[u], 0.0));
                let sig_p = a_sq * h.dot(&z_perfect.col(u)).norm_sqr();
                let mut interf_p = 0.0;
                for v in 0..u_count {
                    if v != u {
                        interf_p += a_sq * h.dot(&z_perfect.col(v)).norm_sqr();
                    }
                }
                perfect_sums[g] += (1.0 + sig_p / (interf_p + n0)).log2();
            }
        }
        samples += u_count;
    }
    Ok(DropOutcome { quant_sums, perfect_sums, samples, dropped_users })
}

/// Monte-Carlo spectral efficiency over drops of fixed user sets. Drops are
/// independent; the reduction is an ordered fold over the drop index, so the
/// result does not depend on how the work is scheduled. Drops whose feedback
/// degenerates (codeword collisions, unseparable users) are skipped and
/// counted.
pub fn spectral_efficiency(
    drops: &[Vec<ChannelSet>],
    pipe: &Pipeline,
    zf: &ZfConfig,
) -> Result<SeCurve, EvalError> {
    if drops.is_empty() {
        return Err(EvalError::EmptyChannelSet);
    }
    use rayon::prelude::*;
    let per_drop: Vec<Result<DropOutcome, EvalError>> = drops
        .par_iter()
        .map(|drop_sets| evaluate_drop(drop_sets, pipe, zf))
        .collect();
    let mut quant = vec![0.0; zf.snr_grid_db.len()];
    let mut perfect = vec![0.0; zf.snr_grid_db.len()];
    let mut total = 0usize;
    let mut skipped_drops = 0usize;
    let mut dropped_users = 0usize;
    for outcome in per_drop {
        match outcome {
            Ok(o) => {
                for g in 0..quant.len() {
                    quant[g] += o.quant_sums[g];
                    perfect[g] += o.perfect_sums[g];
                }
                total += o.samples;
                dropped_users += o.dropped_users;
            }
            Err(EvalError::Wideband(WidebandError::RankDeficient { .. }))
            | Err(EvalError::ZfRankDeficient) => {
                skipped_drops += 1;
            }
            Err(e) => return Err(e),
        }
    }
    if total == 0 {
        return Err(EvalError::EmptyChannelSet);
    }
    let scale = 1.0 / total as f64;
    Ok(SeCurve {
        snr_db: zf.snr_grid_db.clone(),
        se_quantized: quant.into_iter().map(|x| x * scale).collect(),
        se_perfect: perfect.into_iter().map(|x| x * scale).collect(),
        skipped_drops,
        dropped_users,
    })
}

/// One-sided sign-test p-value: probability of at least `wins` successes in
/// `trials` fair coin flips.
pub fn sign_test_p_one_sided(wins: usize, trials: usize) -> f64 {
    if trials == 0 {
        return 1.0;
    }
    // log-space binomial tail
    let n = trials as f64;
    let ln_half_n = n * (0.5f64).ln();
    let mut ln_choose = 0.0; // ln C(n, 0)
    let mut p = 0.0;
    for k in 0..=trials {
        if k >= wins {
            p += (ln_choose + ln_half_n).exp();
        }
        // ln C(n, k+1) = ln C(n, k) + ln((n - k) / (k + 1))
        ln_choose += ((n - k as f64) / (k as f64 + 1.0)).ln();
    }
    p.min(1.0)
}
