//! Line-quantization codebooks: construction, training, serialization and
//! search.
//!
//! A [`LineCodebook`] is a finite set of unit-norm complex vectors considered
//! modulo phase. Constructions cover the tensored oversampled DFT family
//! matched to planar arrays, the 2-bit binary chirp set for the polarization
//! dimension, and data-driven codebooks trained with a Lloyd iteration under
//! the chordal distance. Product codebooks quantize higher-dimensional
//! vectors blockwise with explicit combining phases.

mod lloyd;
mod pcb;

pub use lloyd::lloyd_train;
pub use pcb::{pcb_quantize, PcbQuantizeResult, ProductCodebook};

use crate::linalg::{chordal_distance, C64, CVec, LinalgError};
use std::io::{self, Read, Write};
use thiserror::Error;

/// Materialized codebooks beyond this size must stay parametric.
pub const CODEBOOK_WORD_CAP: usize = 1 << 20;

/// Duplicate detection is quadratic; skip it above this size (parametric
/// constructions are duplicate-free structurally).
const DEDUP_CHECK_CAP: usize = 8192;

#[derive(Debug, Error)]
pub enum CodebookError {
    #[error("codeword {0} is not unit norm (|w| = {1})")]
    NotUnitNorm(usize, f64),
    #[error("codewords {0} and {1} span the same line")]
    DuplicateWords(usize, usize),
    #[error("empty codebook")]
    Empty,
    #[error("requested codebook of {requested} words exceeds the cap of {cap}")]
    TooLarge { requested: usize, cap: usize },
    #[error("dimension mismatch: input has {input}, codebook has {codebook}")]
    DimMismatch { input: usize, codebook: usize },
    #[error("training set of {samples} samples cannot seed {size} codewords")]
    NotEnoughSamples { samples: usize, size: usize },
    #[error("component dimension {n_ell} does not divide the vector dimension {k}")]
    BlockMismatch { n_ell: usize, k: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("codebook file i/o: {0}")]
    Io(#[from] io::Error),
    #[error("codebook file is malformed: {0}")]
    BadFile(String),
}

/// How a codebook was built; parametric descriptors serialize compactly and
/// reconstruct exactly.
#[derive(Clone, Debug, PartialEq)]
pub enum Construction {
    Explicit,
    Dft { n: usize, oversampling: usize },
}

/// A finite set of unit-norm complex vectors modulo phase.
#[derive(Clone, Debug)]
pub struct LineCodebook {
    dim: usize,
    words: Vec<CVec>,
    label: String,
    construction: Construction,
}

impl LineCodebook {
    /// Wrap explicit words, validating unit norms and (for codebooks small
    /// enough) pairwise distinctness of the spanned lines.
    pub fn new(words: Vec<CVec>, label: impl Into<String>) -> Result<Self, CodebookError> {
        Self::validated(words, label, Construction::Explicit, true)
    }

    fn validated(
        words: Vec<CVec>,
        label: impl Into<String>,
        construction: Construction,
        check_duplicates: bool,
    ) -> Result<Self, CodebookError> {
        if words.is_empty() {
            return Err(CodebookError::Empty);
        }
        if words.len() > CODEBOOK_WORD_CAP {
            return Err(CodebookError::TooLarge { requested: words.len(), cap: CODEBOOK_WORD_CAP });
        }
        let dim = words[0].len();
        for (i, w) in words.iter().enumerate() {
            if w.len() != dim {
                return Err(CodebookError::DimMismatch { input: w.len(), codebook: dim });
            }
            let n = w.norm();
            if (n - 1.0).abs() > 1e-12 {
                return Err(CodebookError::NotUnitNorm(i, n));
            }
        }
        if check_duplicates && words.len() <= DEDUP_CHECK_CAP {
            for i in 0..words.len() {
                for j in i + 1..words.len() {
                    if chordal_distance(&words[i], &words[j])? < 1e-9 {
                        return Err(CodebookError::DuplicateWords(i, j));
                    }
                }
            }
        }
        Ok(Self { dim, words, label: label.into(), construction })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn construction(&self) -> &Construction {
        &self.construction
    }

    pub fn word(&self, i: usize) -> &CVec {
        &self.words[i]
    }

    pub fn words(&self) -> &[CVec] {
        &self.words
    }

    /// Bits needed to index one codeword.
    pub fn index_bits(&self) -> usize {
        crate::bits::index_bits(self.len())
    }
}

/// Oversampled DFT codebook on `n` antennas: `n * oversampling` words, word
/// `m` has entries `exp(i 2 pi k m / (n * oversampling)) / sqrt(n)`. Words
/// come out phase-normalized (first entry real positive).
pub fn dft_oversampled(n: usize, oversampling: usize) -> Result<LineCodebook, CodebookError> {
    assert!(n >= 1 && oversampling >= 1);
    let size = n * oversampling;
    if size > CODEBOOK_WORD_CAP {
        return Err(CodebookError::TooLarge { requested: size, cap: CODEBOOK_WORD_CAP });
    }
    if n == 1 && oversampling > 1 {
        // every word spans the same 1-dimensional line
        return Err(CodebookError::DuplicateWords(0, 1));
    }
    let norm = 1.0 / (n as f64).sqrt();
    let words = (0..size)
        .map(|m| {
            CVec::from_fn(n, |k| {
                C64::from_polar(norm, 2.0 * std::f64::consts::PI * (k * m) as f64 / size as f64)
            })
        })
        .collect();
    // Distinct indices give distinct lines for n >= 2, no pairwise check.
    LineCodebook::validated(
        words,
        format!("dft{n}x{oversampling}"),
        Construction::Dft { n, oversampling },
        false,
    )
}

/// A seeded random-line codebook: `size` directions drawn uniformly on the
/// complex unit sphere. Random vector quantization of this kind has
/// radially distributed quantization errors, which makes these codebooks
/// the reference construction for statistical checks.
pub fn random_lines(dim: usize, size: usize, seed: u64) -> Result<LineCodebook, CodebookError> {
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = crate::rng::substream(seed, &[crate::rng::stage::SYNTHETIC_CODEBOOK]);
    let mut words = Vec::with_capacity(size);
    for _ in 0..size {
        let w = CVec::from_fn(dim, |_| {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            C64::new(re, im)
        });
        words.push(w.normalized()?.phase_normalized());
    }
    LineCodebook::validated(words, format!("rvq{size}"), Construction::Explicit, false)
}

/// The 2-bit binary chirp codebook in two dimensions:
/// `{(1,1), (1,-1), (1,i), (1,-i)} / sqrt(2)`.
pub fn binary_chirp_2d() -> LineCodebook {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let words = vec![
        CVec::new(vec![C64::new(s, 0.0), C64::new(s, 0.0)]),
        CVec::new(vec![C64::new(s, 0.0), C64::new(-s, 0.0)]),
        CVec::new(vec![C64::new(s, 0.0), C64::new(0.0, s)]),
        CVec::new(vec![C64::new(s, 0.0), C64::new(0.0, -s)]),
    ];
    LineCodebook::new(words, "bc2").expect("chirp codebook is valid")
}

/// Kronecker product of codebooks: every combination of one word per part,
/// ordered with the leftmost part slowest. Dimension and size are the
/// products of the parts'.
pub fn tensored(parts: &[&LineCodebook]) -> Result<LineCodebook, CodebookError> {
    assert!(!parts.is_empty());
    let mut size: usize = 1;
    let mut dim: usize = 1;
    for p in parts {
        size = size.saturating_mul(p.len());
        dim = dim.saturating_mul(p.dim());
    }
    if size > CODEBOOK_WORD_CAP {
        return Err(CodebookError::TooLarge { requested: size, cap: CODEBOOK_WORD_CAP });
    }
    let mut words: Vec<CVec> = vec![CVec::new(vec![C64::new(1.0, 0.0)])];
    for p in parts {
        let mut next = Vec::with_capacity(words.len() * p.len());
        for w in &words {
            for pw in p.words() {
                next.push(kron(w, pw));
            }
        }
        words = next;
    }
    let label = parts
        .iter()
        .map(|p| p.label().to_string())
        .collect::<Vec<_>>()
        .join("*");
    debug_assert_eq!(words.len(), size);
    debug_assert!(words.iter().all(|w| w.len() == dim));
    // Kronecker products of pairwise-distinct lines stay pairwise distinct
    // (|<a (x) b, a' (x) b'>| = |<a,a'>||<b,b'>|), skip the quadratic check.
    LineCodebook::validated(words, label, Construction::Explicit, false)
}

pub(crate) fn kron(a: &CVec, b: &CVec) -> CVec {
    let mut data = Vec::with_capacity(a.len() * b.len());
    for i in 0..a.len() {
        for j in 0..b.len() {
            data.push(a[i] * b[j]);
        }
    }
    CVec::new(data)
}

/// Result of quantizing one vector against a [`LineCodebook`].
#[derive(Clone, Debug, PartialEq)]
pub struct QuantizeResult {
    pub index: usize,
    pub word: CVec,
    /// Chordal distance between the input and the chosen word.
    pub distortion: f64,
}

/// Exhaustive minimum-chordal-distance search; ties break to the lowest
/// index.
pub fn quantize_line(u: &CVec, cb: &LineCodebook) -> Result<QuantizeResult, CodebookError> {
    if u.len() != cb.dim() {
        return Err(CodebookError::DimMismatch { input: u.len(), codebook: cb.dim() });
    }
    let nu = u.norm_sq();
    if nu <= 0.0 {
        return Err(CodebookError::Linalg(LinalgError::ZeroNorm));
    }
    let mut best = 0usize;
    let mut best_ip = -1.0f64;
    for (i, w) in cb.words().iter().enumerate() {
        let ip = u.dot(w).norm_sqr();
        if ip > best_ip {
            best_ip = ip;
            best = i;
        }
    }
    let d2 = (1.0 - best_ip / nu).clamp(0.0, 1.0);
    Ok(QuantizeResult { index: best, word: cb.word(best).clone(), distortion: d2.sqrt() })
}

/// Ranked nearest codewords (by chordal distance, ascending, ties by index),
/// used by callers that retry after a degenerate projection.
pub fn rank_candidates(u: &CVec, cb: &LineCodebook, count: usize) -> Vec<usize> {
    let mut scored: Vec<(usize, f64)> = cb
        .words()
        .iter()
        .enumerate()
        .map(|(i, w)| (i, u.dot(w).norm_sqr()))
        .collect();
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    scored.into_iter().take(count).map(|(i, _)| i).collect()
}

const FILE_MAGIC: &[u8; 8] = b"CSIQCB01";

/// Serialize a codebook. Parametric DFT constructions store parameters only;
/// everything else stores words as little-endian f64 `re, im` pairs.
pub fn write_codebook(out: &mut impl Write, cb: &LineCodebook) -> Result<(), CodebookError> {
    out.write_all(FILE_MAGIC)?;
    let label = cb.label().as_bytes();
    out.write_all(&(label.len() as u16).to_le_bytes())?;
    out.write_all(label)?;
    match cb.construction() {
        Construction::Dft { n, oversampling } => {
            out.write_all(&[1u8])?;
            out.write_all(&(*n as u32).to_le_bytes())?;
            out.write_all(&(*oversampling as u32).to_le_bytes())?;
        }
        Construction::Explicit => {
            out.write_all(&[0u8])?;
            out.write_all(&(cb.dim() as u32).to_le_bytes())?;
            out.write_all(&(cb.len() as u64).to_le_bytes())?;
            for w in cb.words() {
                for z in w.iter() {
                    out.write_all(&z.re.to_le_bytes())?;
                    out.write_all(&z.im.to_le_bytes())?;
                }
            }
        }
    }
    Ok(())
}

/// Deserialize a codebook written by [`write_codebook`].
pub fn read_codebook(inp: &mut impl Read) -> Result<LineCodebook, CodebookError> {
    let mut magic = [0u8; 8];
    inp.read_exact(&mut magic)?;
    if &magic != FILE_MAGIC {
        return Err(CodebookError::BadFile("bad magic".into()));
    }
    let mut u16buf = [0u8; 2];
    inp.read_exact(&mut u16buf)?;
    let label_len = u16::from_le_bytes(u16buf) as usize;
    let mut label_bytes = vec![0u8; label_len];
    inp.read_exact(&mut label_bytes)?;
    let label = String::from_utf8(label_bytes)
        .map_err(|_| CodebookError::BadFile("label is not utf-8".into()))?;
    let mut kind = [0u8; 1];
    inp.read_exact(&mut kind)?;
    let mut u32buf = [0u8; 4];
    match kind[0] {
        1 => {
            inp.read_exact(&mut u32buf)?;
            let n = u32::from_le_bytes(u32buf) as usize;
            inp.read_exact(&mut u32buf)?;
            let ov = u32::from_le_bytes(u32buf) as usize;
            dft_oversampled(n, ov)
        }
        0 => {
            inp.read_exact(&mut u32buf)?;
            let dim = u32::from_le_bytes(u32buf) as usize;
            let mut u64buf = [0u8; 8];
            inp.read_exact(&mut u64buf)?;
            let size = u64::from_le_bytes(u64buf) as usize;
            if size > CODEBOOK_WORD_CAP {
                return Err(CodebookError::TooLarge { requested: size, cap: CODEBOOK_WORD_CAP });
            }
            let mut f64buf = [0u8; 8];
            let mut words = Vec::with_capacity(size);
            for _ in 0..size {
                let mut data = Vec::with_capacity(dim);
                for _ in 0..dim {
                    inp.read_exact(&mut f64buf)?;
                    let re = f64::from_le_bytes(f64buf);
                    inp.read_exact(&mut f64buf)?;
                    let im = f64::from_le_bytes(f64buf);
                    data.push(C64::new(re, im));
                }
                words.push(CVec::new(data));
            }
            LineCodebook::new(words, label)
        }
        k => Err(CodebookError::BadFile(format!("unknown construction kind {k}"))),
    }
}
