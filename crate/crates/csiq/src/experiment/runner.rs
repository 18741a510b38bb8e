//! Experiment orchestration: build codebooks, generate the user population,
//! run the requested sweeps and collect report rows plus hard-invariant
//! violations.
//!
//! Everything is deterministic in `(config, seed)`: users, training sets and
//! drops derive from labeled substreams, Monte-Carlo reductions are ordered
//! folds over stable indices, and parallelism only maps independent items,
//! so the emitted report is byte-identical for any worker count.

use super::config::{CodebookSpec, ExperimentConfig, PcbSection, SweepKind};
use super::report::{ReportRow, RunReport};
use crate::channel::{
    generate_user_channels, normalized_sample_covariance, polarization_blocks, ChannelError,
    ChannelSet, PolarizationBlocks, PolarizationMode,
};
use crate::codebook::{
    binary_chirp_2d, dft_oversampled, lloyd_train, quantize_line, tensored, CodebookError,
    LineCodebook, ProductCodebook,
};
use crate::evaluate::{
    distortion_report, spectral_efficiency, EvalError, Pipeline,
    SubbandStage, WidebandStage, ZfConfig,
};
use crate::linalg::{eigh_topk, C64, CVec, HermitianPsd, LinalgError};
use crate::rng::{stage, substream, substream_seed};
use crate::subband::{BitAllocationParams, SubbandError, SubbandScheme};
use crate::wideband::{AmplitudeCodebook, WidebandError, WidebandScheme};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Codebook(#[from] CodebookError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Wideband(#[from] WidebandError),
    #[error(transparent)]
    Subband(#[from] SubbandError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

/// Run-time overrides from the command line.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub seed_override: Option<u64>,
    pub threads: Option<usize>,
}

/// Execute the experiment described by `config`.
pub fn run(config: &ExperimentConfig, opts: &RunOptions) -> Result<RunReport, RunError> {
    if let Err(errors) = config.validate() {
        let joined = errors.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; ");
        return Err(RunError::InvalidConfig(joined));
    }
    let mut resolved = config.clone();
    if let Some(seed) = opts.seed_override {
        resolved.master_seed = seed;
    }
    match opts.threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| RunError::ThreadPool(e.to_string()))?;
            pool.install(|| run_inner(&resolved))
        }
        None => run_inner(&resolved),
    }
}

fn exclusion_note(excluded: usize) -> String {
    if excluded > 0 {
        format!("{excluded} user(s) excluded on codeword collision")
    } else {
        String::new()
    }
}

/// Block dimension a polarization mode quantizes in.
fn block_dim(mode: PolarizationMode, n_t: usize) -> usize {
    match mode {
        PolarizationMode::Full => n_t,
        _ => n_t / 2,
    }
}


struct RunContext {
    config: ExperimentConfig,
    users: Vec<ChannelSet>,
    covariances: Vec<HermitianPsd>,
    /// (codebook label, block dim) -> materialized codebook.
    codebooks: HashMap<(String, usize), LineCodebook>,
    /// component-size exponent -> product codebook.
    pcbs: HashMap<usize, ProductCodebook>,
    amp_cb: AmplitudeCodebook,
    rows: Vec<ReportRow>,
    violations: Vec<String>,
}

fn run_inner(config: &ExperimentConfig) -> Result<RunReport, RunError> {
    let seed = config.master_seed;
    let users: Vec<ChannelSet> = (0..config.users)
        .into_par_iter()
        .map(|u| generate_user_channels(&config.array, &config.channel, seed, u as u64))
        .collect::<Result<_, _>>()?;
    let covariances: Vec<HermitianPsd> = users
        .par_iter()
        .map(normalized_sample_covariance)
        .collect::<Result<_, _>>()?;

    let mut ctx = RunContext {
        config: config.clone(),
        users,
        covariances,
        codebooks: HashMap::new(),
        pcbs: HashMap::new(),
        amp_cb: AmplitudeCodebook::default(),
        rows: Vec::new(),
        violations: Vec::new(),
    };
    build_codebooks(&mut ctx)?;
    build_product_codebooks(&mut ctx)?;

    for sweep in config.sweeps.clone() {
        match sweep {
            SweepKind::WidebandVector => sweep_wideband_vector(&mut ctx)?,
            SweepKind::Projection => sweep_projection(&mut ctx)?,
            SweepKind::Subband => sweep_subband(&mut ctx)?,
            SweepKind::Overall => sweep_overall(&mut ctx)?,
            SweepKind::Bounds => sweep_bounds(&mut ctx)?,
            SweepKind::SpectralEfficiency => sweep_spectral_efficiency(&mut ctx)?,
        }
    }

    Ok(RunReport {
        config: ctx.config,
        master_seed: seed,
        rows: ctx.rows,
        invariant_violations: ctx.violations,
    })
}

/// Materialize every requested wideband codebook in every block dimension
/// the configured polarization modes need.
fn build_codebooks(ctx: &mut RunContext) -> Result<(), RunError> {
    let n_t = ctx.config.array.n_t();
    let mut dims: Vec<usize> = ctx
        .config
        .wideband
        .pol_modes
        .iter()
        .map(|m| block_dim(*m, n_t))
        .collect();
    dims.sort_unstable();
    dims.dedup();
    let specs = ctx.config.wideband.codebooks.clone();
    for spec in &specs {
        for &dim in &dims {
            let cb = build_one_codebook(ctx, spec, dim)?;
            ctx.codebooks.insert((spec.label(), dim), cb);
        }
    }
    Ok(())
}

fn build_one_codebook(
    ctx: &RunContext,
    spec: &CodebookSpec,
    dim: usize,
) -> Result<LineCodebook, RunError> {
    let array = &ctx.config.array;
    let n_t = array.n_t();
    match spec {
        CodebookSpec::Tsodft { oversampling_h, oversampling_v } => {
            let h = dft_oversampled(array.n_h, *oversampling_h)?;
            let v = dft_oversampled(array.n_v, *oversampling_v)?;
            let cb = if dim == n_t && array.n_p == 2 {
                let p = binary_chirp_2d();
                tensored(&[&p, &h, &v])?
            } else if array.n_v == 1 && dim == array.n_h {
                // degenerate vertical dimension: the horizontal part alone
                h
            } else {
                tensored(&[&h, &v])?
            };
            Ok(cb)
        }
        CodebookSpec::Lloyd { size_log2, iters, training_users } => {
            // Train on eigenvectors of a held-out population so the trained
            // codebook never sees the evaluation users.
            let train_seed = substream_seed(ctx.config.master_seed, &[stage::TRAINING_SET]);
            let k = ctx.config.wideband.k;
            let samples: Vec<CVec> = (0..*training_users)
                .into_par_iter()
                .map(|u| -> Result<Vec<CVec>, RunError> {
                    let set = generate_user_channels(
                        &ctx.config.array,
                        &ctx.config.channel,
                        train_seed,
                        u as u64,
                    )?;
                    let r = normalized_sample_covariance(&set)?;
                    let mut vecs = Vec::new();
                    if dim == n_t {
                        let eig = eigh_topk(&r, k.min(n_t))?;
                        for j in 0..eig.vectors.cols() {
                            vecs.push(eig.vectors.col(j));
                        }
                    } else {
                        // block-dimension training: eigenvectors of the
                        // averaged polarization block
                        match polarization_blocks(&r, PolarizationMode::B00B)? {
                            PolarizationBlocks::B00B(b) => {
                                let trace = b.trace();
                                let bn = HermitianPsd::new(
                                    b.mat().scale(C64::new(1.0 / trace, 0.0)),
                                )?;
                                let eig = eigh_topk(&bn, (k / 2).max(1).min(dim))?;
                                for j in 0..eig.vectors.cols() {
                                    vecs.push(eig.vectors.col(j));
                                }
                            }
                            _ => unreachable!(),
                        }
                    }
                    Ok(vecs)
                })
                .collect::<Result<Vec<_>, _>>()?
                .into_iter()
                .flatten()
                .collect();
            let lloyd_seed =
                substream_seed(ctx.config.master_seed, &[stage::LLOYD_TRAIN, dim as u64]);
            Ok(lloyd_train(&samples, 1usize << size_log2, *iters, lloyd_seed)?)
        }
    }
}

/// Train the shared component codebooks for every requested product size on
/// i.i.d. complex Gaussian coordinates.
fn build_product_codebooks(ctx: &mut RunContext) -> Result<(), RunError> {
    let Some(pcb_cfg) = ctx.config.subband.pcb.clone() else {
        return Ok(());
    };
    let k = ctx.config.wideband.k;
    for &n_b in &pcb_cfg.n_b {
        let pcb = train_product_codebook(ctx.config.master_seed, &pcb_cfg, n_b, k)?;
        ctx.pcbs.insert(n_b, pcb);
    }
    Ok(())
}

fn train_product_codebook(
    master_seed: u64,
    pcb_cfg: &PcbSection,
    n_b: usize,
    k: usize,
) -> Result<ProductCodebook, RunError> {
    let size = 1usize << n_b;
    let mut rng = substream(master_seed, &[stage::LLOYD_TRAIN, 1000 + n_b as u64]);
    let n_samples = (8 * size).max(1024);
    let samples: Vec<CVec> = (0..n_samples)
        .map(|_| {
            CVec::from_fn(pcb_cfg.n_ell, |_| {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                C64::new(re, im)
            })
        })
        .collect();
    let component = lloyd_train(
        &samples,
        size,
        pcb_cfg.train_iters,
        substream_seed(master_seed, &[stage::LLOYD_TRAIN, 2000 + n_b as u64]),
    )?;
    Ok(ProductCodebook::new(component, k / pcb_cfg.n_ell, pcb_cfg.phase_bits)?)
}

fn cb_for<'a>(
    ctx: &'a RunContext,
    spec: &CodebookSpec,
    mode: PolarizationMode,
) -> &'a LineCodebook {
    let dim = block_dim(mode, ctx.config.array.n_t());
    &ctx.codebooks[&(spec.label(), dim)]
}

/// Mean chordal vector-quantization distortion of the top-K eigenvectors
/// against each codebook (fully-occupied dimension), reported per codeword
/// bit width.
fn sweep_wideband_vector(ctx: &mut RunContext) -> Result<(), RunError> {
    let k = ctx.config.wideband.k;
    let specs = ctx.config.wideband.codebooks.clone();
    for spec in &specs {
        let cb = cb_full(ctx, spec)?;
        let sums: Vec<(f64, usize)> = ctx
            .covariances
            .par_iter()
            .map(|r| -> Result<(f64, usize), RunError> {
                let eig = eigh_topk(r, k)?;
                let mut acc = 0.0;
                for j in 0..eig.vectors.cols() {
                    let q = quantize_line(&eig.vectors.col(j).phase_normalized(), &cb)?;
                    acc += q.distortion * q.distortion;
                }
                Ok((acc, eig.vectors.cols()))
            })
            .collect::<Result<_, _>>()?;
        let total: f64 = sums.iter().map(|(a, _)| a).sum();
        let count: usize = sums.iter().map(|(_, n)| n).sum();
        ctx.rows.push(ReportRow {
            sweep: "wideband_vector".into(),
            scheme: String::new(),
            pol_mode: PolarizationMode::Full.label().into(),
            codebook: spec.label(),
            wb_basis_bits: Some(cb.index_bits()),
            wb_vector_distortion: Some(total / count as f64),
            ..Default::default()
        });
    }
    Ok(())
}

/// The fully-occupied-dimension codebook for a spec, building it on demand
/// if only block modes were configured.
fn cb_full(ctx: &mut RunContext, spec: &CodebookSpec) -> Result<LineCodebook, RunError> {
    let n_t = ctx.config.array.n_t();
    if let Some(cb) = ctx.codebooks.get(&(spec.label(), n_t)) {
        return Ok(cb.clone());
    }
    let cb = build_one_codebook(ctx, spec, n_t)?;
    ctx.codebooks.insert((spec.label(), n_t), cb.clone());
    Ok(cb)
}

/// Mean projection distortion per (scheme, polarization mode, codebook).
fn sweep_projection(ctx: &mut RunContext) -> Result<(), RunError> {
    let k = ctx.config.wideband.k;
    let specs = ctx.config.wideband.codebooks.clone();
    let modes = ctx.config.wideband.pol_modes.clone();
    let schemes = ctx.config.wideband.schemes.clone();
    for spec in &specs {
        for &mode in &modes {
            let cb = cb_for(ctx, spec, mode).clone();
            for &scheme in &schemes {
                let outcomes: Vec<Option<(f64, usize, usize)>> = ctx
                    .covariances
                    .par_iter()
                    .map(|r| -> Result<Option<(f64, usize, usize)>, RunError> {
                        let fb = match crate::wideband::build_feedback(
                            r,
                            scheme,
                            mode,
                            k,
                            &cb,
                            &ctx.amp_cb,
                        ) {
                            Ok(fb) => fb,
                            Err(WidebandError::RankDeficient { .. }) => return Ok(None),
                            Err(e) => return Err(e.into()),
                        };
                        // the independent scheme's basis may be singular;
                        // measure the energy captured by its span
                        let p = crate::linalg::span_projector(&fb.w)?;
                        let d_p = (1.0 - p.mul(r.mat()).trace().re).clamp(0.0, 1.0);
                        Ok(Some((d_p, fb.basis_bits, fb.amp_bits)))
                    })
                    .collect::<Result<_, _>>()?;
                let kept: Vec<&(f64, usize, usize)> =
                    outcomes.iter().flatten().collect();
                if kept.is_empty() {
                    return Err(RunError::InvalidConfig(format!(
                        "every user collided for {}/{}; use a finer codebook",
                        scheme.label(),
                        mode.label()
                    )));
                }
                let excluded = outcomes.len() - kept.len();
                let mean_dp =
                    kept.iter().map(|(d, _, _)| d).sum::<f64>() / kept.len() as f64;
                ctx.rows.push(ReportRow {
                    sweep: "projection".into(),
                    scheme: scheme.label().into(),
                    pol_mode: mode.label().into(),
                    codebook: spec.label(),
                    wb_basis_bits: Some(kept[0].1),
                    wb_amp_bits: Some(kept[0].2),
                    d_p: Some(mean_dp),
                    note: exclusion_note(excluded),
                    ..Default::default()
                });
            }
        }
    }
    Ok(())
}

/// Materialize the subband stage axis requested by the config: every Ext2
/// and Int5 allocation and every product size, in that order.
fn subband_axis(ctx: &RunContext) -> Vec<(String, usize, usize, SubbandAxis)> {
    let k = ctx.config.wideband.k;
    let mut axis = Vec::new();
    for scheme in &ctx.config.subband.schemes {
        match scheme {
            SubbandScheme::Ext2 => {
                for a in &ctx.config.subband.ext2 {
                    let p = BitAllocationParams::ext2(a.m, a.b_ell, a.b_s);
                    let bits = p.bit_count(SubbandScheme::Ext2, k).expect("validated");
                    axis.push(("ext2".into(), bits, bits, SubbandAxis::Ext2(p)));
                }
            }
            SubbandScheme::Int5 => {
                for a in &ctx.config.subband.int5 {
                    let p = BitAllocationParams::int5(a.m, a.b_ell, a.b_s);
                    let bits = p.bit_count(SubbandScheme::Int5, k).expect("validated");
                    axis.push((
                        "int5".into(),
                        bits,
                        bits + crate::bits::index_bits(k),
                        SubbandAxis::Int5(p),
                    ));
                }
            }
            SubbandScheme::Pcb => {
                let mut sizes: Vec<usize> = ctx.pcbs.keys().copied().collect();
                sizes.sort_unstable();
                for n_b in sizes {
                    let bits = ctx.pcbs[&n_b].total_bits();
                    axis.push(("pcb".into(), bits, bits, SubbandAxis::Pcb(n_b)));
                }
            }
        }
    }
    axis
}

#[derive(Clone)]
enum SubbandAxis {
    Ext2(BitAllocationParams),
    Int5(BitAllocationParams),
    Pcb(usize),
}

impl SubbandAxis {
    fn stage<'a>(&'a self, ctx: &'a RunContext) -> SubbandStage<'a> {
        match self {
            SubbandAxis::Ext2(p) => SubbandStage::Ext2(*p),
            SubbandAxis::Int5(p) => SubbandStage::Int5(*p),
            SubbandAxis::Pcb(n_b) => SubbandStage::Pcb(&ctx.pcbs[n_b]),
        }
    }
}

/// The anchor (polarization mode, codebook) for subband-level sweeps: the
/// first entries of the config lists.
fn anchor(ctx: &RunContext) -> (PolarizationMode, CodebookSpec) {
    (ctx.config.wideband.pol_modes[0], ctx.config.wideband.codebooks[0].clone())
}

/// Subband distortion vs bits under the ideal wideband stage and under the
/// first configured orthonormalizing scheme.
fn sweep_subband(ctx: &mut RunContext) -> Result<(), RunError> {
    let (mode, spec) = anchor(ctx);
    let k = ctx.config.wideband.k;
    let axis = subband_axis(ctx);
    let mut wb_stages: Vec<(String, WidebandStage)> =
        vec![("ideal".into(), WidebandStage::Ideal)];
    for &scheme in &ctx.config.wideband.schemes {
        if scheme != WidebandScheme::Ind {
            wb_stages.push((scheme.label().into(), WidebandStage::Scheme(scheme)));
        }
    }
    for (wb_label, wb_stage) in wb_stages {
        for (sb_label, bits, payload_bits, ax) in &axis {
            let cb = cb_for(ctx, &spec, mode).clone();
            let pipe = Pipeline {
                wideband: wb_stage,
                pol_mode: mode,
                k,
                cb: &cb,
                amp_cb: &ctx.amp_cb,
                subband: ax.stage(ctx),
                ind_coords: ctx.config.wideband.ind_coordinates,
            };
            let report = distortion_report(&ctx.users, &pipe)?;
            let note = exclusion_note(report.excluded_users);
            ctx.rows.push(ReportRow {
                sweep: "subband".into(),
                scheme: wb_label.clone(),
                pol_mode: mode.label().into(),
                codebook: spec.label(),
                sb_scheme: sb_label.clone(),
                sb_bits: Some(*bits),
                sb_payload_bits: Some(*payload_bits),
                d_b: Some(report.d_b),
                d_p: Some(report.d_p),
                note,
                ..Default::default()
            });
        }
    }
    Ok(())
}

/// Overall distortion vs subband bits for every configured combination of
/// wideband scheme and subband quantizer.
fn sweep_overall(ctx: &mut RunContext) -> Result<(), RunError> {
    let (mode, spec) = anchor(ctx);
    let k = ctx.config.wideband.k;
    let axis = subband_axis(ctx);
    let schemes = ctx.config.wideband.schemes.clone();
    for &scheme in &schemes {
        for (sb_label, bits, payload_bits, ax) in &axis {
            let cb = cb_for(ctx, &spec, mode).clone();
            let pipe = Pipeline {
                wideband: WidebandStage::Scheme(scheme),
                pol_mode: mode,
                k,
                cb: &cb,
                amp_cb: &ctx.amp_cb,
                subband: ax.stage(ctx),
                ind_coords: ctx.config.wideband.ind_coordinates,
            };
            let report = distortion_report(&ctx.users, &pipe)?;
            if report.orthonormal && report.decomposition_residual > 1e-9 {
                ctx.violations.push(format!(
                    "decomposition residual {:.3e} for {}/{} at {} bits",
                    report.decomposition_residual,
                    scheme.label(),
                    sb_label,
                    bits
                ));
            }
            if report.orthonormal && report.lower_gap < -1e-9 {
                ctx.violations.push(format!(
                    "lower bound violated for {}/{}: gap {:.3e}",
                    scheme.label(),
                    sb_label,
                    report.lower_gap
                ));
            }
            let note = exclusion_note(report.excluded_users);
            ctx.rows.push(ReportRow {
                sweep: "overall".into(),
                scheme: scheme.label().into(),
                pol_mode: mode.label().into(),
                codebook: spec.label(),
                sb_scheme: sb_label.clone(),
                sb_bits: Some(*bits),
                sb_payload_bits: Some(*payload_bits),
                d_p: Some(report.d_p),
                d_b: Some(report.d_b),
                d_h: Some(report.d_h),
                lower_gap: Some(report.lower_gap),
                upper_gap: Some(report.upper_gap),
                note,
                ..Default::default()
            });
        }
    }
    Ok(())
}

/// Bound gaps per combination. Orthonormalizing schemes must satisfy both
/// bounds (hard invariant); for the independent baseline the sweep searches
/// user populations for an upper-bound violation and records the first hit.
fn sweep_bounds(ctx: &mut RunContext) -> Result<(), RunError> {
    let (mode, spec) = anchor(ctx);
    let k = ctx.config.wideband.k;
    let axis = subband_axis(ctx);
    let schemes = ctx.config.wideband.schemes.clone();
    for &scheme in &schemes {
        for (sb_label, bits, payload_bits, ax) in &axis {
            let cb = cb_for(ctx, &spec, mode).clone();
            let pipe = Pipeline {
                wideband: WidebandStage::Scheme(scheme),
                pol_mode: mode,
                k,
                cb: &cb,
                amp_cb: &ctx.amp_cb,
                subband: ax.stage(ctx),
                ind_coords: ctx.config.wideband.ind_coordinates,
            };
            let report = distortion_report(&ctx.users, &pipe)?;
            let mut note = exclusion_note(report.excluded_users);
            if scheme == WidebandScheme::Ind {
                // per-user search for an upper-bound violation
                let hit = report
                    .per_user_d_h
                    .iter()
                    .zip(report.per_user_d_b.iter())
                    .zip(report.per_user_d_p.iter())
                    .enumerate()
                    .find(|(_, ((dh, db), dp))| **dh > *db + **dp + 1e-9);
                let found = match hit {
                    Some((user, ((dh, db), dp))) => format!(
                        "upper bound violated: user {user} d_h {dh:.6} > d_b {db:.6} + d_p {dp:.6}"
                    ),
                    None => "no upper-bound violation in this population".into(),
                };
                note = if note.is_empty() { found } else { format!("{note}; {found}") };
            } else {
                if report.lower_gap < -1e-9 {
                    ctx.violations.push(format!(
                        "bounds: lower gap {:.3e} for {}/{}",
                        report.lower_gap,
                        scheme.label(),
                        sb_label
                    ));
                }
                if report.upper_gap < -1e-9 {
                    ctx.violations.push(format!(
                        "bounds: upper gap {:.3e} for {}/{}",
                        report.upper_gap,
                        scheme.label(),
                        sb_label
                    ));
                }
            }
            ctx.rows.push(ReportRow {
                sweep: "bounds".into(),
                scheme: scheme.label().into(),
                pol_mode: mode.label().into(),
                codebook: spec.label(),
                sb_scheme: sb_label.clone(),
                sb_bits: Some(*bits),
                sb_payload_bits: Some(*payload_bits),
                d_p: Some(report.d_p),
                d_b: Some(report.d_b),
                d_h: Some(report.d_h),
                lower_gap: Some(report.lower_gap),
                upper_gap: Some(report.upper_gap),
                note,
                ..Default::default()
            });
        }
    }
    Ok(())
}

/// Wideband schemes pair with their best subband quantizer: the independent
/// baseline with the extrinsic scalar quantizer, the orthonormalizing
/// schemes with the intrinsic one.
fn se_pairings(ctx: &RunContext) -> Vec<(WidebandScheme, String, usize, usize, SubbandAxis)> {
    let k = ctx.config.wideband.k;
    let mut out = Vec::new();
    for &scheme in &ctx.config.wideband.schemes {
        match scheme {
            WidebandScheme::Ind => {
                for a in &ctx.config.subband.ext2 {
                    let p = BitAllocationParams::ext2(a.m, a.b_ell, a.b_s);
                    let bits = p.bit_count(SubbandScheme::Ext2, k).expect("validated");
                    out.push((scheme, "ext2".into(), bits, bits, SubbandAxis::Ext2(p)));
                }
            }
            WidebandScheme::Owp | WidebandScheme::Swp => {
                for a in &ctx.config.subband.int5 {
                    let p = BitAllocationParams::int5(a.m, a.b_ell, a.b_s);
                    let bits = p.bit_count(SubbandScheme::Int5, k).expect("validated");
                    out.push((
                        scheme,
                        "int5".into(),
                        bits,
                        bits + crate::bits::index_bits(k),
                        SubbandAxis::Int5(p),
                    ));
                }
            }
        }
    }
    out
}

/// Multiuser spectral efficiency vs SNR for each pairing, plus the
/// perfect-CSI baseline, on shared drops of fixed user sets.
fn sweep_spectral_efficiency(ctx: &mut RunContext) -> Result<(), RunError> {
    let Some(zf_cfg) = ctx.config.zf.clone() else {
        return Ok(());
    };
    let (mode, spec) = anchor(ctx);
    let k = ctx.config.wideband.k;
    let drop_seed = substream_seed(ctx.config.master_seed, &[stage::ZF_DROP]);
    let mut drop_channel_cfg = ctx.config.channel;
    drop_channel_cfg.n_subbands = zf_cfg.subbands;
    let drops: Vec<Vec<ChannelSet>> = (0..zf_cfg.drops)
        .into_par_iter()
        .map(|d| -> Result<Vec<ChannelSet>, RunError> {
            (0..zf_cfg.users)
                .map(|u| {
                    Ok(generate_user_channels(
                        &ctx.config.array,
                        &drop_channel_cfg,
                        drop_seed,
                        (d * zf_cfg.users + u) as u64,
                    )?)
                })
                .collect()
        })
        .collect::<Result<_, _>>()?;
    let zf = ZfConfig {
        users: zf_cfg.users,
        snr_grid_db: zf_cfg.snr_grid_db.clone(),
        power: zf_cfg.power,
    };

    let pairings = se_pairings(ctx);
    let mut perfect_row: Option<Vec<f64>> = None;
    for (scheme, sb_label, bits, payload_bits, ax) in &pairings {
        let cb = cb_for(ctx, &spec, mode).clone();
        let pipe = Pipeline {
            wideband: WidebandStage::Scheme(*scheme),
            pol_mode: mode,
            k,
            cb: &cb,
            amp_cb: &ctx.amp_cb,
            subband: ax.stage(ctx),
            ind_coords: ctx.config.wideband.ind_coordinates,
        };
        let curve = spectral_efficiency(&drops, &pipe, &zf)?;
        let ascending = zf.snr_grid_db.windows(2).all(|w| w[1] >= w[0]);
        if ascending {
            for g in 1..curve.se_quantized.len() {
                if curve.se_quantized[g] < curve.se_quantized[g - 1] - 1e-12 {
                    ctx.violations.push(format!(
                        "spectral efficiency not monotone in SNR for {}/{}",
                        scheme.label(),
                        sb_label
                    ));
                    break;
                }
            }
        }
        for g in 0..curve.se_quantized.len() {
            if curve.se_perfect[g] < curve.se_quantized[g] - 1e-9 {
                ctx.violations.push(format!(
                    "perfect-CSI curve dominated by {}/{} at {} dB",
                    scheme.label(),
                    sb_label,
                    curve.snr_db[g]
                ));
            }
        }
        perfect_row.get_or_insert_with(|| curve.se_perfect.clone());
        let mut note = String::new();
        if curve.skipped_drops > 0 {
            note.push_str(&format!("{} drop(s) skipped", curve.skipped_drops));
        }
        if curve.dropped_users > 0 {
            if !note.is_empty() {
                note.push_str("; ");
            }
            note.push_str(&format!("{} user-subband transmission(s) dropped", curve.dropped_users));
        }
        ctx.rows.push(ReportRow {
            sweep: "spectral_efficiency".into(),
            scheme: scheme.label().into(),
            pol_mode: mode.label().into(),
            codebook: spec.label(),
            sb_scheme: sb_label.clone(),
            sb_bits: Some(*bits),
            sb_payload_bits: Some(*payload_bits),
            note,
            se: curve.se_quantized,
            ..Default::default()
        });
    }
    if let Some(perfect) = perfect_row {
        ctx.rows.push(ReportRow {
            sweep: "spectral_efficiency".into(),
            scheme: "perfect".into(),
            pol_mode: mode.label().into(),
            codebook: String::new(),
            sb_scheme: String::new(),
            se: perfect,
            ..Default::default()
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn smoke_config() -> ExperimentConfig {
        ExperimentConfig::from_toml_str(crate::experiment::config::SMOKE).unwrap()
    }

    #[test]
    fn smoke_run_produces_rows() {
        let cfg = smoke_config();
        let report = run(&cfg, &RunOptions::default()).unwrap();
        assert!(report.invariant_violations.is_empty(), "{:?}", report.invariant_violations);
        // projection: 3 schemes x 1 mode x 1 codebook; overall: 3 x 1
        assert_eq!(report.rows.iter().filter(|r| r.sweep == "projection").count(), 3);
        assert_eq!(report.rows.iter().filter(|r| r.sweep == "overall").count(), 3);
    }

    #[test]
    fn rerun_is_byte_identical_across_thread_counts() {
        let cfg = smoke_config();
        let a = run(&cfg, &RunOptions { seed_override: None, threads: Some(1) }).unwrap();
        let b = run(&cfg, &RunOptions { seed_override: None, threads: Some(4) }).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
    }

    #[test]
    fn seed_override_changes_results() {
        let cfg = smoke_config();
        let a = run(&cfg, &RunOptions::default()).unwrap();
        let b = run(&cfg, &RunOptions { seed_override: Some(999), threads: None }).unwrap();
        assert_ne!(a.to_csv(), b.to_csv());
    }
}
