//! Counter-based, splittable random streams.
//!
//! A [`StreamKey`] is a 64-bit key derived from a master seed by folding in
//! labels and indices. The key addresses an infinite stream of words
//! `word(key, 0), word(key, 1), ...`, each computed independently from
//! `(key, counter)` alone. Streams for different `(seed, label, indices)`
//! tuples are therefore independent of evaluation order and thread layout.
//!
//! Words are produced with the SplitMix64 output function applied to
//! `key + (counter + 1) * GAMMA`; key derivation uses the MurmurHash3
//! finalizer so derivation and output never share a code path.

use rand::RngCore;

const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn splitmix_out(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[inline]
fn fmix64(mut k: u64) -> u64 {
    k ^= k >> 33;
    k = k.wrapping_mul(0xFF51_AFD7_ED55_8CCD);
    k ^= k >> 33;
    k = k.wrapping_mul(0xC4CE_B9FE_1A85_EC53);
    k ^ (k >> 33)
}

/// Converts a 64-bit word to a uniform double strictly inside (0, 1).
#[inline]
pub fn word_to_open01(w: u64) -> f64 {
    // 52 bits so that the half-step offset stays representable below 1
    ((w >> 12) as f64 + 0.5) * (1.0 / (1u64 << 52) as f64)
}

/// Key of one random stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct StreamKey(u64);

impl StreamKey {
    pub fn new(master_seed: u64) -> Self {
        StreamKey(fmix64(master_seed ^ 0x6A09_E667_F3BC_C908))
    }

    /// Child key for a textual label, e.g. `"X"` or `"trial"`.
    pub fn label(self, label: &str) -> Self {
        // FNV-1a over the label bytes, then fold like an index.
        let mut h: u64 = 0xCBF2_9CE4_8422_2325;
        for b in label.bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01B3);
        }
        self.index(h ^ 0xB7E1_5162_8AED_2A6A)
    }

    /// Child key for an integer index.
    pub fn index(self, i: u64) -> Self {
        StreamKey(fmix64(self.0 ^ fmix64(i.wrapping_mul(GAMMA) ^ 0xA076_1D64_78BD_642F)).wrapping_add(GAMMA))
    }

    pub fn raw(self) -> u64 {
        self.0
    }

    /// The `counter`-th word of this stream.
    #[inline]
    pub fn word(self, counter: u64) -> u64 {
        splitmix_out(self.0.wrapping_add(counter.wrapping_add(1).wrapping_mul(GAMMA)))
    }

    /// The `counter`-th uniform draw on (0, 1).
    #[inline]
    pub fn uniform(self, counter: u64) -> f64 {
        word_to_open01(self.word(counter))
    }

    /// Sequential generator over this stream, starting at counter 0.
    pub fn rng(self) -> CounterRng {
        CounterRng { key: self, counter: 0 }
    }
}

/// Sequential view of a [`StreamKey`]; implements [`RngCore`] so it plugs
/// into the `rand` API.
#[derive(Clone, Debug)]
pub struct CounterRng {
    key: StreamKey,
    counter: u64,
}

impl CounterRng {
    /// Uniform draw strictly inside (0, 1).
    #[inline]
    pub fn open01(&mut self) -> f64 {
        word_to_open01(self.next_u64())
    }

    /// Draw from Exp(rate) by inversion.
    #[inline]
    pub fn exp(&mut self, rate: f64) -> f64 {
        -self.open01().ln() / rate
    }
}

impl RngCore for CounterRng {
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    fn next_u64(&mut self) -> u64 {
        let w = self.key.word(self.counter);
        self.counter = self.counter.wrapping_add(1);
        w
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(8) {
            let w = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&w[..chunk.len()]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_deterministic_and_order_free() {
        let k = StreamKey::new(7).label("X").index(3).index(4);
        let mut a = k.rng();
        let first: Vec<u64> = (0..4).map(|_| a.next_u64()).collect();
        let direct: Vec<u64> = (0..4).map(|c| k.word(c)).collect();
        assert_eq!(first, direct);
    }

    #[test]
    fn index_order_matters() {
        let k = StreamKey::new(1);
        assert_ne!(k.index(1).index(2), k.index(2).index(1));
        assert_ne!(k.label("X"), k.label("Y"));
        assert_ne!(StreamKey::new(1), StreamKey::new(2));
    }

    #[test]
    fn open01_never_hits_endpoints() {
        assert!(word_to_open01(0) > 0.0);
        assert!(word_to_open01(u64::MAX) < 1.0);
    }

    #[test]
    fn uniform_moments() {
        let k = StreamKey::new(99).label("moments");
        let n = 200_000;
        let (mut s, mut s2) = (0.0, 0.0);
        for c in 0..n {
            let u = k.uniform(c);
            s += u;
            s2 += u * u;
        }
        let mean = s / n as f64;
        let var = s2 / n as f64 - mean * mean;
        assert!((mean - 0.5).abs() < 0.005, "mean {mean}");
        assert!((var - 1.0 / 12.0).abs() < 0.002, "var {var}");
    }

    #[test]
    fn sibling_streams_uncorrelated() {
        // product-moment test across sibling cells
        let base = StreamKey::new(5).label("X");
        let n = 100_000u64;
        let mut acc = 0.0;
        for t in 0..n {
            let trial = base.index(t);
            let a = trial.index(0).index(0).uniform(0) - 0.5;
            let b = trial.index(0).index(1).uniform(0) - 0.5;
            acc += a * b;
        }
        let corr = acc / n as f64 * 12.0;
        // sd of the sample correlation is ~1/sqrt(n)
        assert!(corr.abs() < 3.0 / (n as f64).sqrt(), "corr {corr}");
    }
}
