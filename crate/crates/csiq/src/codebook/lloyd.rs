//! Data-driven Grassmannian codebooks via the Lloyd algorithm under the
//! chordal distance.
//!
//! Assignment is nearest-line; the centroid update of a cell is the
//! principal eigenvector of the cell's normalized outer-product sum, which
//! maximizes the mean squared inner product over the cell. Empty cells are
//! re-seeded from the currently worst-quantized sample. Seeding is
//! farthest-line traversal from a seeded random start, so training is fully
//! deterministic.

use super::{CodebookError, LineCodebook};
use crate::linalg::{chordal_distance_sq, eigh_topk, CVec, HermitianPsd};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_chacha::rand_core::SeedableRng;
use rayon::prelude::*;

/// Train a `size`-word codebook on `samples` for `iters` Lloyd iterations.
///
/// The empirical distortion is non-increasing over iterations (asserted to
/// 1e-12); the returned codebook carries phase-normalized words.
pub fn lloyd_train(
    samples: &[CVec],
    size: usize,
    iters: usize,
    seed: u64,
) -> Result<LineCodebook, CodebookError> {
    if samples.is_empty() {
        return Err(CodebookError::Empty);
    }
    if size > samples.len() {
        return Err(CodebookError::NotEnoughSamples { samples: samples.len(), size });
    }
    let normalized: Vec<CVec> = samples
        .iter()
        .map(|s| s.normalized().map_err(CodebookError::from))
        .collect::<Result<_, _>>()?;
    let dim = normalized[0].len();
    for s in &normalized {
        if s.len() != dim {
            return Err(CodebookError::DimMismatch { input: s.len(), codebook: dim });
        }
    }

    let mut words = seed_farthest_lines(&normalized, size, seed);
    let mut prev_distortion = f64::INFINITY;
    for _ in 0..iters {
        // Assignment step: nearest word per sample, lowest index on ties.
        let assignment: Vec<(usize, f64)> = normalized
            .par_iter()
            .map(|s| {
                let mut best = (0usize, f64::INFINITY);
                for (w_idx, w) in words.iter().enumerate() {
                    let d2 = chordal_distance_sq(s, w).expect("validated dims");
                    if d2 < best.1 {
                        best = (w_idx, d2);
                    }
                }
                best
            })
            .collect();
        let distortion =
            assignment.iter().map(|(_, d2)| d2).sum::<f64>() / normalized.len() as f64;
        assert!(
            distortion <= prev_distortion + 1e-12,
            "Lloyd distortion increased: {prev_distortion} -> {distortion}"
        );
        prev_distortion = distortion;

        // Centroid step: principal eigenvector per cell.
        let mut cells: Vec<Vec<usize>> = vec![Vec::new(); size];
        for (s_idx, (w_idx, _)) in assignment.iter().enumerate() {
            cells[*w_idx].push(s_idx);
        }
        let mut worst: Option<(usize, f64)> = None;
        for (s_idx, (_, d2)) in assignment.iter().enumerate() {
            if worst.map_or(true, |(_, wd)| *d2 > wd) {
                worst = Some((s_idx, *d2));
            }
        }
        for (w_idx, cell) in cells.iter().enumerate() {
            if cell.is_empty() {
                let (worst_idx, _) = worst.expect("nonempty sample set");
                words[w_idx] = normalized[worst_idx].phase_normalized();
                continue;
            }
            let members: Vec<CVec> = cell.iter().map(|&i| normalized[i].clone()).collect();
            let weights = vec![1.0 / members.len() as f64; members.len()];
            let cov = HermitianPsd::from_outer_products(&members, &weights);
            let basis = eigh_topk(&cov, 1)?;
            words[w_idx] = basis.vectors.col(0);
        }
    }

    dedupe_words(&mut words, &normalized);
    LineCodebook::new(words, format!("lloyd{size}"))
}

/// Farthest-line seeding: first word is a seeded random sample, each further
/// word the sample farthest from all chosen so far (ties to lowest index).
fn seed_farthest_lines(samples: &[CVec], size: usize, seed: u64) -> Vec<CVec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let first = rng.gen_range(0..samples.len());
    let mut chosen = vec![first];
    let mut min_d2: Vec<f64> = samples
        .iter()
        .map(|s| chordal_distance_sq(s, &samples[first]).expect("validated"))
        .collect();
    while chosen.len() < size {
        let mut best = (0usize, -1.0f64);
        for (i, &d2) in min_d2.iter().enumerate() {
            if d2 > best.1 {
                best = (i, d2);
            }
        }
        chosen.push(best.0);
        for (i, s) in samples.iter().enumerate() {
            let d2 = chordal_distance_sq(s, &samples[best.0]).expect("validated");
            if d2 < min_d2[i] {
                min_d2[i] = d2;
            }
        }
    }
    chosen
        .into_iter()
        .map(|i| samples[i].phase_normalized())
        .collect()
}

/// Centroids can collide on degenerate training sets; nudge any duplicate to
/// the sample farthest from the colliding pair so the codebook invariant
/// holds.
fn dedupe_words(words: &mut [CVec], samples: &[CVec]) {
    for i in 0..words.len() {
        for j in i + 1..words.len() {
            if chordal_distance_sq(&words[i], &words[j]).unwrap_or(0.0) < 1e-18 {
                let mut best = (0usize, -1.0f64);
                for (s_idx, s) in samples.iter().enumerate() {
                    let d2 = chordal_distance_sq(s, &words[i]).expect("validated");
                    if d2 > best.1 {
                        best = (s_idx, d2);
                    }
                }
                words[j] = samples[best.0].phase_normalized();
            }
        }
    }
}
