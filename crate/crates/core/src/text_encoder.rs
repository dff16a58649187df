//! Deterministic text encoders used for similarity classification.

/// Maps text to a fixed-dimension vector whose L2 norm is 1, or 0 when the
/// text has no tokens.
pub trait TextEncoder: Send + Sync {
    /// Identifier recorded in reports, including parameters.
    fn id(&self) -> String;
    fn dimension(&self) -> usize;
    fn encode(&self, text: &str) -> Vec<f64>;
}

pub const DEFAULT_DIMENSION: usize = 256;

/// Bag of FNV-1a-hashed tokens, L2-normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashingEncoder {
    dimension: usize,
}

impl HashingEncoder {
    /// # Panics
    /// If `dimension` is zero.
    pub fn new(dimension: usize) -> Self {
        assert!(dimension > 0, "encoder dimension must be positive");
        Self { dimension }
    }

    pub fn bucket(&self, token: &str) -> usize {
        (fnv1a64(token.as_bytes()) % self.dimension as u64) as usize
    }
}

impl Default for HashingEncoder {
    fn default() -> Self {
        Self::new(DEFAULT_DIMENSION)
    }
}

impl TextEncoder for HashingEncoder {
    fn id(&self) -> String {
        format!("hashing-fnv1a64-d{}", self.dimension)
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn encode(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dimension];
        for token in tokenize(text) {
            v[self.bucket(&token)] += 1.0;
        }
        l2_normalize(&mut v);
        v
    }
}

/// Lowercased runs of alphanumeric characters.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = OFFSET;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(PRIME);
    }
    h
}

fn l2_normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

/// Cosine similarity; 0 when either vector is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}
