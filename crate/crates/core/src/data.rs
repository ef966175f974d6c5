use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::function::RegressionFunction;
use crate::seed::{Purpose, SeedSpec};

/// `n` design points in `[0,1]^p` (row-major) with responses.
///
/// Noise is Gaussian, drawn with `rand_distr::StandardNormal` (ziggurat) from
/// a ChaCha8 stream and scaled by `σ`. Design points use a separate stream, so
/// changing `σ²` leaves `X` untouched.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: Vec<f64>,
    y: Vec<f64>,
    p: usize,
    noise_variance: f64,
    function: RegressionFunction,
    seed: Option<SeedSpec>,
}

impl Dataset {
    /// Build from explicit rows. Used for hand-made fixtures.
    pub fn from_parts(
        x: Vec<f64>,
        y: Vec<f64>,
        p: usize,
        noise_variance: f64,
        function: RegressionFunction,
    ) -> Result<Self> {
        if p == 0 || x.len() != y.len() * p {
            return Err(Error::Dimension(format!(
                "{} coordinates for {} responses in dimension {p}",
                x.len(),
                y.len()
            )));
        }
        if let Some(v) = x.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Domain(format!(
                "design coordinate {v} outside [0, 1]"
            )));
        }
        Ok(Self {
            x,
            y,
            p,
            noise_variance,
            function,
            seed: None,
        })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.p..(i + 1) * self.p]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> {
        self.x.chunks_exact(self.p)
    }

    pub fn design(&self) -> &[f64] {
        &self.x
    }

    pub fn responses(&self) -> &[f64] {
        &self.y
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    pub fn function(&self) -> &RegressionFunction {
        &self.function
    }

    pub fn seed(&self) -> Option<SeedSpec> {
        self.seed
    }

    /// Same design, different responses.
    pub fn with_responses(&self, y: Vec<f64>) -> Result<Self> {
        if y.len() != self.n() {
            return Err(Error::Dimension(format!(
                "{} responses for {} rows",
                y.len(),
                self.n()
            )));
        }
        Ok(Self { y, ..self.clone() })
    }

    /// `m(X_i)` for every row.
    pub fn regression_values(&self) -> Vec<f64> {
        self.rows().map(|r| self.function.value(r)).collect()
    }

    fn slice(&self, start: usize, end: usize) -> Self {
        Self {
            x: self.x[start * self.p..end * self.p].to_vec(),
            y: self.y[start..end].to_vec(),
            ..self.clone()
        }
    }
}

/// i.i.d. rows with `X ~ U([0,1]^p)` and `Y = m(X) + ε`, `ε ~ N(0, σ²)`.
pub fn gen_dataset(
    function: &RegressionFunction,
    n: usize,
    noise_variance: f64,
    seed: SeedSpec,
) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::EmptyData);
    }
    if !(noise_variance >= 0.0 && noise_variance.is_finite()) {
        return Err(Error::Parameter(format!(
            "noise variance {noise_variance} must be >= 0"
        )));
    }
    let p = function.dimension();
    let mut design_rng = seed.stream(Purpose::Data, 0);
    let x: Vec<f64> = (0..n * p).map(|_| design_rng.random::<f64>()).collect();
    let sigma = noise_variance.sqrt();
    let mut noise_rng = seed.stream(Purpose::Data, 1);
    let y = x
        .chunks_exact(p)
        .map(|row| {
            let eps: f64 = noise_rng.sample(StandardNormal);
            function.value(row) + sigma * eps
        })
        .collect();
    Ok(Dataset {
        x,
        y,
        p,
        noise_variance,
        function: *function,
        seed: Some(seed),
    })
}

/// First `n1` rows and the following `n2` rows.
pub fn split_holdout(d: &Dataset, n1: usize, n2: usize) -> Result<(Dataset, Dataset)> {
    if n1 == 0 || n2 == 0 || n1 + n2 != d.n() {
        return Err(Error::Partition {
            n1,
            n2,
            rows: d.n(),
        });
    }
    Ok((d.slice(0, n1), d.slice(n1, n1 + n2)))
}
