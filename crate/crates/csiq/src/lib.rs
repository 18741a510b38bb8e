//! Modular CSI quantization for FDD massive MIMO.
//!
//! A base station with many antennas needs downlink channel state information
//! that users measure, quantize and feed back. This crate implements the
//! modular approach: a wideband stage quantizes an orthonormal basis for the
//! dominant channel subspace (independent columnwise quantization, shared
//! orthonormalization, or sequential self-correcting quantization), and a
//! subband stage quantizes the low-dimensional effective channels in that
//! basis (scalar bit-allocation quantizers and product codebooks). On top of
//! the quantizers sit distortion metrics, statistical checks of the
//! distortion-decomposition identities, and a multiuser zero-forcing
//! spectral-efficiency simulation on synthetic clustered channels.
//!
//! See the `book/` guide for a narrative walkthrough; the `csiq` CLI runs
//! full experiment sweeps from declarative TOML configs.

pub mod bits;
pub mod channel;
pub mod codebook;
pub mod evaluate;
pub mod experiment;
pub mod linalg;
pub mod rng;
pub mod subband;
pub mod wideband;

// The book's code blocks run as doc-tests so the guide cannot drift from
// the library.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/getting-started.md")]
    mod getting_started {}
    #[doc = include_str!("../../../book/src/modular-quantization.md")]
    mod modular_quantization {}
    #[doc = include_str!("../../../book/src/wideband-schemes.md")]
    mod wideband_schemes {}
    #[doc = include_str!("../../../book/src/subband-quantizers.md")]
    mod subband_quantizers {}
    #[doc = include_str!("../../../book/src/channel-model.md")]
    mod channel_model {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
    #[doc = include_str!("../../../book/src/formats.md")]
    mod formats {}
}
