//! Replicate-level summaries: means, jackknife standard errors, OLS.

use serde::{Deserialize, Serialize};

/// A Monte-Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

impl Estimate {
    pub fn new(value: f64, se: f64) -> Self {
        Self { value, se }
    }

    pub fn exact(value: f64) -> Self {
        Self { value, se: 0.0 }
    }

    /// `|value − target| ≤ z · se`.
    pub fn within(&self, target: f64, z: f64) -> bool {
        (self.value - target).abs() <= z * self.se
    }

    /// Standard error of the difference of two independent estimates.
    pub fn combined_se(&self, other: &Estimate) -> f64 {
        self.se.hypot(other.se)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            value: self.value * factor,
            se: self.se * factor.abs(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.value.is_finite() && self.se.is_finite()
    }
}

/// Welford's online mean and variance. The mean of a constant sequence is
/// that constant exactly.
#[derive(Debug, Clone, Copy, Default)]
pub struct Welford {
    count: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    pub fn push(&mut self, v: f64) {
        self.count += 1;
        let delta = v - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (v - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance; zero below two observations.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }
}

impl FromIterator<f64> for Welford {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut w = Welford::default();
        for v in iter {
            w.push(v);
        }
        w
    }
}

/// Mean over replicates with its jackknife standard error (for a mean this is
/// `s/√R`).
pub fn mean_estimate(values: &[f64]) -> Estimate {
    let w: Welford = values.iter().copied().collect();
    let se = if values.len() < 2 {
        f64::NAN
    } else {
        (w.variance() / values.len() as f64).sqrt()
    };
    Estimate::new(w.mean(), se)
}

/// Jackknife from the full-sample statistic and the leave-one-out values:
/// bias-corrected value and standard error.
pub fn jackknife(full: f64, leave_one_out: &[f64]) -> Estimate {
    let r = leave_one_out.len() as f64;
    if leave_one_out.len() < 2 {
        return Estimate::new(full, f64::NAN);
    }
    let w: Welford = leave_one_out.iter().copied().collect();
    let ss = w.variance() * (r - 1.0);
    Estimate::new(r * full - (r - 1.0) * w.mean(), ((r - 1.0) / r * ss).sqrt())
}

/// Estimate of `μ²` where each replicate contributes the sum of
/// `per_group` i.i.d. draws with mean `μ`. The jackknife correction makes the
/// estimate unbiased.
pub fn squared_mean_estimate(group_sums: &[f64], per_group: usize) -> Estimate {
    let r = group_sums.len();
    let m = per_group as f64;
    let total: f64 = group_sums.iter().sum();
    let full = (total / (r as f64 * m)).powi(2);
    if r < 2 {
        return Estimate::new(full, f64::NAN);
    }
    let loo: Vec<f64> = group_sums
        .iter()
        .map(|g| ((total - g) / ((r - 1) as f64 * m)).powi(2))
        .collect();
    jackknife(full, &loo)
}

/// Ordinary least squares `y ≈ intercept + slope·x`, returning
/// `(slope, intercept, residual sum of squares)`.
pub fn ols(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    (slope, intercept, rss)
}
