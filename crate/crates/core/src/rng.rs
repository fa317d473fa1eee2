use rand::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

/// Golden-ratio increment used to space sub-stream seeds.
const STREAM_SPACING: u64 = 0x9E37_79B9_7F4A_7C15;

/// Seeded random stream owned by exactly one chain.
///
/// Identical seeds give bit-identical draw sequences. Independent
/// sub-streams are derived from the root seed by fixed offsets, so adding a
/// consumer of one sub-stream never perturbs the draws of another.
#[derive(Debug, Clone)]
pub struct RngHandle {
    seed: u64,
    inner: Xoshiro256PlusPlus,
}

impl RngHandle {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: Xoshiro256PlusPlus::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent stream number `index` derived from this handle's seed.
    pub fn substream(&self, index: u64) -> Self {
        let derived = self
            .seed
            .wrapping_add(STREAM_SPACING.wrapping_mul(index.wrapping_add(1)));
        Self::new(splitmix(derived))
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(STREAM_SPACING);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngCore for RngHandle {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}
