//! Seed plumbing. Every random draw in the crate comes from a ChaCha8 stream
//! addressed by `(seed, stream)`, so sub-experiments can be replayed in
//! isolation and in any order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stream ids for the independent uses of one replicate seed.
pub mod streams {
    pub const DATA: u64 = 1;
    pub const INDEX: u64 = 2;
    pub const DIFFERING: u64 = 3;
    pub const TEST: u64 = 4;
    pub const PAIRS: u64 = 5;
}

pub fn stream(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// SplitMix64 finalizer; decorrelates child seeds derived from one master.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Standard normal draw (Box–Muller).
pub fn normal(rng: &mut Rng) -> f64 {
    use rand::Rng as _;
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen::<f64>();
    libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(core::f64::consts::TAU * u2)
}

/// Uniform draw from the Euclidean ball of the given radius in `ℝ^dim`.
pub fn uniform_ball(rng: &mut Rng, dim: usize, radius: f64) -> alloc::vec::Vec<f64> {
    use rand::Rng as _;
    if dim == 1 {
        return alloc::vec![rng.gen_range(-radius..=radius)];
    }
    let mut v: alloc::vec::Vec<f64> = (0..dim).map(|_| normal(rng)).collect();
    let n = crate::math::norm2(&v);
    let r = radius * libm::pow(rng.gen::<f64>(), 1.0 / dim as f64);
    for x in v.iter_mut() {
        *x *= r / n;
    }
    v
}

/// Uniform random unit vector.
pub fn unit_vector(rng: &mut Rng, dim: usize) -> alloc::vec::Vec<f64> {
    use rand::Rng as _;
    if dim == 1 {
        return alloc::vec![if rng.gen::<bool>() { 1.0 } else { -1.0 }];
    }
    let mut v: alloc::vec::Vec<f64> = (0..dim).map(|_| normal(rng)).collect();
    let n = crate::math::norm2(&v);
    for x in v.iter_mut() {
        *x /= n;
    }
    v
}
