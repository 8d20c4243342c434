//! Counter-based SplitMix64 stream keyed per document.
//!
//! Output `i` of a stream is a pure function of `(key, i)`, so a document's
//! mutation never depends on which other documents were processed, or in
//! what order.

const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

fn finalize(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Sub-seed for one document: the global seed mixed with the FNV-1a hash of
/// its id.
pub fn document_seed(seed: u64, doc_id: &str) -> u64 {
    finalize(seed ^ finalize(fnv1a64(doc_id.as_bytes()).wrapping_add(GAMMA)))
}

#[derive(Debug, Clone)]
pub struct SplitMix64 {
    key: u64,
    counter: u64,
}

impl SplitMix64 {
    pub fn new(key: u64) -> Self {
        SplitMix64 { key, counter: 0 }
    }

    pub fn for_document(seed: u64, doc_id: &str) -> Self {
        Self::new(document_seed(seed, doc_id))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.counter += 1;
        finalize(self.key.wrapping_add(self.counter.wrapping_mul(GAMMA)))
    }

    /// Uniform integer in `0..n` (Lemire's multiply-and-reject).
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "empty range");
        let n = n as u64;
        let threshold = n.wrapping_neg() % n;
        loop {
            let m = (self.next_u64() as u128) * (n as u128);
            if (m as u64) >= threshold {
                return (m >> 64) as usize;
            }
        }
    }
}
