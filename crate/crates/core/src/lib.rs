//! Dementia-subtype classification toolkit.
//!
//! The pipeline runs in stages: load segmented 3D brain volumes
//! ([`volume`]), compute per-structure radiomics features ([`radiomics`]),
//! fuse them with clinical/genetic/cognitive tabular data ([`tabular`]),
//! reduce multicollinearity ([`select`]), classify with a convolutional
//! feature-generation network ([`dfg`]), evaluate under patient-grouped
//! cross-validation ([`eval`]), explain ([`explain`]), and monitor
//! longitudinal diagnosis-probability trajectories ([`monitor`]).
//! [`synth`] generates deterministic synthetic cohorts for end-to-end
//! testing.

pub mod dfg;
pub mod error;
pub mod eval;
pub mod explain;
pub mod monitor;
pub mod radiomics;
pub mod select;
pub mod synth;
pub mod tabular;
pub mod volume;

pub use error::{Error, Result};

/// Stable 64-bit stream derivation used everywhere randomness is split
/// from a base seed (per-patient, per-fold, per-epoch, per-column).
///
/// SplitMix64 finalizer over the base seed xored with a salt; documented
/// in `docs/file_formats.md` so other-language ports can reproduce the
/// streams byte for byte.
pub fn derive_seed(base: u64, salt: u64) -> u64 {
    let mut z = base ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// SHA-256 hex digest of a byte slice; used for config/fold-plan digests
/// and the synthetic-cohort manifest.
pub fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let out = hasher.finalize();
    let mut s = String::with_capacity(64);
    for b in out {
        s.push_str(&format!("{b:02x}"));
    }
    s
}
