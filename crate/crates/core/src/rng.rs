//! The project-wide pseudorandom generator.
//!
//! Every seeded component draws from PCG-XSL-RR 128/64 (`Pcg64`) so that
//! scenarios, dataset splits and network initialization are reproducible
//! across platforms.

use rand::SeedableRng;

pub type ProjectRng = rand_pcg::Pcg64;

pub fn seeded(seed: u64) -> ProjectRng {
    ProjectRng::seed_from_u64(seed)
}

/// Independent stream for a (seed, purpose, index) triple.
pub fn stream(seed: u64, purpose: u64, index: u64) -> ProjectRng {
    let mixed = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).rotate_left(17)
        ^ purpose.wrapping_mul(0xBF58_476D_1CE4_E5B9)
        ^ index.wrapping_mul(0x94D0_49BB_1331_11EB);
    ProjectRng::seed_from_u64(mixed)
}
