use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// A named random stream derived from a master seed.
///
/// The ChaCha20 key is the SHA-256 of the seed and the label, so every
/// `(seed, label)` pair names an independent, reproducible sequence and
/// callers never share generator state.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub label: String,
}

impl RngStream {
    pub fn new(seed: u64, label: impl Into<String>) -> Self {
        Self {
            seed,
            label: label.into(),
        }
    }

    /// Sub-stream `"<label>/<name>"`.
    pub fn child(&self, name: impl AsRef<str>) -> Self {
        Self {
            seed: self.seed,
            label: format!("{}/{}", self.label, name.as_ref()),
        }
    }

    /// A fresh generator positioned at the start of this stream.
    pub fn rng(&self) -> ChaCha20Rng {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(self.label.as_bytes());
        ChaCha20Rng::from_seed(h.finalize().into())
    }
}

/// `n` draws from N(mean, std²).
pub fn gauss_sample(stream: &RngStream, n: usize, mean: f64, std: f64) -> Result<Vec<f64>> {
    if !(std >= 0.0) {
        return Err(Error::Domain(format!("standard deviation {std} < 0")));
    }
    let mut rng = stream.rng();
    Ok((0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            mean + std * z
        })
        .collect())
}
