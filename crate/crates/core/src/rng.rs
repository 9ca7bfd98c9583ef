//! Counter-based random numbers.
//!
//! Every draw is a pure function of a 64-bit key and a counter, so results
//! do not depend on iteration order or thread scheduling. Keys are derived
//! by folding stream tags into a seed:
//!
//! ```text
//! mix(z)         = SplitMix64 finalizer of z
//! derive(k, tag) = mix(k ^ mix(tag + 0x9E3779B97F4A7C15))
//! draw(k, i)     = mix(k + (i + 1) * 0x9E3779B97F4A7C15)
//! ```
//!
//! Uniform doubles take the top 53 bits of a draw. Normal variates use the
//! Box-Muller cosine branch with `libm` so output is identical on every
//! platform.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output function.
pub fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child key from a parent key and a stream tag.
pub fn derive(key: u64, tag: u64) -> u64 {
    mix(key ^ mix(tag.wrapping_add(GOLDEN)))
}

/// Derives a key from a seed and a path of tags.
pub fn key(seed: u64, tags: &[u64]) -> u64 {
    tags.iter().fold(mix(seed), |k, &t| derive(k, t))
}

/// A keyed stream of random values.
#[derive(Debug, Clone)]
pub struct CounterRng {
    key: u64,
    counter: u64,
}

impl CounterRng {
    pub fn new(key: u64) -> Self {
        CounterRng { key, counter: 0 }
    }

    pub fn from_tags(seed: u64, tags: &[u64]) -> Self {
        Self::new(key(seed, tags))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix(self.key.wrapping_add(self.counter.wrapping_mul(GOLDEN)))
    }

    /// Uniform in `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `(0, 1]`.
    pub fn next_f64_open0(&mut self) -> f64 {
        ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal variate.
    pub fn next_normal(&mut self) -> f64 {
        let u1 = self.next_f64_open0();
        let u2 = self.next_f64();
        libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(2.0 * std::f64::consts::PI * u2)
    }

    /// Uniform integer in `[0, n)` by rejection; `n` must be positive.
    pub fn next_below(&mut self, n: u64) -> u64 {
        assert!(n > 0);
        let zone = u64::MAX - u64::MAX % n;
        loop {
            let v = self.next_u64();
            if v < zone {
                return v % n;
            }
        }
    }
}

/// Uniform `(0, 1]` value addressed directly by key and counter.
pub fn unit_at(key: u64, counter: u64) -> f64 {
    let v = mix(key.wrapping_add(counter.wrapping_add(1).wrapping_mul(GOLDEN)));
    ((v >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
}
