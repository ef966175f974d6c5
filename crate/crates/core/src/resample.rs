use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResampleMode {
    WithoutReplacement,
    Bootstrap,
}

/// Multiplicity `C_i` of each of `n` observations in one resample of size `a`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Resample {
    mode: ResampleMode,
    counts: Vec<u32>,
    size: usize,
}

impl Resample {
    pub fn mode(&self) -> ResampleMode {
        self.mode
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    /// Indices in increasing order, each repeated `C_i` times.
    pub fn indices(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.size);
        for (i, &c) in self.counts.iter().enumerate() {
            out.extend(std::iter::repeat_n(i, c as usize));
        }
        out
    }
}

pub fn draw_resample<R: Rng + ?Sized>(
    n: usize,
    mode: ResampleMode,
    a: usize,
    rng: &mut R,
) -> Result<Resample> {
    if a == 0 || n == 0 {
        return Err(Error::Parameter(format!(
            "resample size {a} from {n} observations"
        )));
    }
    let mut counts = vec![0u32; n];
    match mode {
        ResampleMode::WithoutReplacement => {
            if a > n {
                return Err(Error::ResampleSize {
                    size: a,
                    population: n,
                });
            }
            for i in rand::seq::index::sample(rng, n, a) {
                counts[i] = 1;
            }
        }
        ResampleMode::Bootstrap => {
            for _ in 0..a {
                counts[rng.random_range(0..n)] += 1;
            }
        }
    }
    Ok(Resample {
        mode,
        counts,
        size: a,
    })
}
