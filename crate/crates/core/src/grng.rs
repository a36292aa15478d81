//! Gaussian random voltage generation.
//!
//! The entropy source is abstracted as a Gaussian pulse width
//! `T ~ N(mu_p, sigma_p^2)` (truncated at 0). A programmable scaling factor
//! `sigma' = sigma / sigma_p` turns it into `sigma' T ~ N(sigma' mu_p, sigma^2)`,
//! and subtracting the stored compensation `v_comp = sigma' mu_p` centres it:
//! `eps = sigma' T - v_comp ~ N(0, sigma^2)`. The result is added to a
//! column's search voltage.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal as StdNormal};

use crate::error::{Error, Result};

/// Pulse statistics shared by every column's generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GrngConfig {
    /// Mean pulse width, seconds.
    pub mu_p: f64,
    /// Pulse width standard deviation, seconds.
    pub sigma_p: f64,
    /// Slow shift of the pulse mean (endurance drift), seconds.
    pub drift: f64,
}

impl Default for GrngConfig {
    fn default() -> Self {
        GrngConfig {
            mu_p: 10e-9,
            sigma_p: 1e-9,
            drift: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrngPipeline {
    mu_p: f64,
    sigma_p: f64,
    sigma_target: f64,
    scale: f64,
    v_comp: f64,
    drift: f64,
}

impl GrngPipeline {
    /// Requires `mu_p >= 5 sigma_p` so truncation at zero is negligible.
    pub fn new(cfg: &GrngConfig, sigma_target: f64) -> Result<Self> {
        if !(cfg.sigma_p > 0.0) {
            return Err(Error::domain(format!("sigma_p must be > 0, got {}", cfg.sigma_p)));
        }
        if !(cfg.mu_p >= 5.0 * cfg.sigma_p) {
            return Err(Error::domain(format!(
                "mu_p ({}) must be at least 5 sigma_p ({}) to keep pulse truncation negligible",
                cfg.mu_p, cfg.sigma_p
            )));
        }
        Self::new_unchecked(cfg, sigma_target)
    }

    /// Skips the truncation guard (sigma_p must still be positive).
    pub fn new_unchecked(cfg: &GrngConfig, sigma_target: f64) -> Result<Self> {
        if !(cfg.sigma_p > 0.0) {
            return Err(Error::domain(format!("sigma_p must be > 0, got {}", cfg.sigma_p)));
        }
        if !(sigma_target >= 0.0 && sigma_target.is_finite()) {
            return Err(Error::domain(format!("sigma_target must be >= 0, got {sigma_target}")));
        }
        let scale = sigma_target / cfg.sigma_p;
        Ok(GrngPipeline {
            mu_p: cfg.mu_p,
            sigma_p: cfg.sigma_p,
            sigma_target,
            scale,
            v_comp: scale * cfg.mu_p,
            drift: cfg.drift,
        })
    }

    pub fn mu_p(&self) -> f64 {
        self.mu_p
    }

    pub fn sigma_p(&self) -> f64 {
        self.sigma_p
    }

    pub fn sigma_target(&self) -> f64 {
        self.sigma_target
    }

    /// `sigma' = sigma_target / sigma_p`.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn v_comp(&self) -> f64 {
        self.v_comp
    }

    pub fn drift(&self) -> f64 {
        self.drift
    }

    pub fn set_drift(&mut self, drift: f64) {
        self.drift = drift;
    }

    /// Re-stores the compensation voltage from a measured mean pulse width,
    /// which cancels any drift present at measurement time.
    pub fn recalibrate(&mut self, measured_mean_pulse: f64) {
        self.v_comp = self.scale * measured_mean_pulse;
    }

    /// Pulse width `T ~ N(mu_p + drift, sigma_p^2)`, redrawn while negative.
    pub fn sample_pulse<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let n = Normal::new(self.mu_p + self.drift, self.sigma_p).expect("sigma_p > 0");
        loop {
            let t = n.sample(rng);
            if t >= 0.0 {
                return t;
            }
        }
    }

    /// Zero-mean (absent drift) voltage `sigma' T - v_comp`.
    pub fn sample_epsilon<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.sigma_target == 0.0 {
            return 0.0;
        }
        self.scale * self.sample_pulse(rng) - self.v_comp
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
    /// Pearson correlation between sorted samples and standard normal
    /// quantiles at plotting positions `(i + 0.5) / n`.
    pub qq_correlation: f64,
    /// Largest gap between the empirical CDF and a normal CDF with the
    /// sample's own mean and standard deviation.
    pub ks_statistic: f64,
    pub ks_critical: f64,
    pub alpha: f64,
    pub ks_pass: bool,
    pub zero_variance: bool,
    pub pass: bool,
}

pub const MIN_QUALITY_SAMPLES: usize = 1000;
/// Minimum QQ correlation for a sample to count as Gaussian.
pub const QQ_THRESHOLD: f64 = 0.995;

fn standard_normal() -> StdNormal {
    StdNormal::new(0.0, 1.0).expect("unit normal")
}

/// `(theoretical quantile, sample quantile)` pairs for a QQ plot.
pub fn qq_points(samples: &[f64]) -> Vec<(f64, f64)> {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let z = standard_normal();
    sorted
        .into_iter()
        .enumerate()
        .map(|(i, x)| (z.inverse_cdf((i as f64 + 0.5) / n), x))
        .collect()
}

fn pearson(pairs: &[(f64, f64)]) -> f64 {
    let n = pairs.len() as f64;
    let (mx, my) = pairs
        .iter()
        .fold((0.0, 0.0), |(a, b), &(x, y)| (a + x / n, b + y / n));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for &(x, y) in pairs {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// Moments, QQ linearity, and a Kolmogorov-Smirnov test against the fitted
/// normal at significance `alpha` (asymptotic critical value).
pub fn quality_report(samples: &[f64], alpha: f64) -> Result<QualityReport> {
    let n = samples.len();
    if n < MIN_QUALITY_SAMPLES {
        return Err(Error::domain(format!(
            "quality report needs at least {MIN_QUALITY_SAMPLES} samples, got {n}"
        )));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::domain(format!("alpha must be in (0, 1), got {alpha}")));
    }
    let nf = n as f64;
    let mean = samples.iter().sum::<f64>() / nf;
    let (m2, m3, m4) = samples.iter().fold((0.0, 0.0, 0.0), |(a, b, c), &x| {
        let d = x - mean;
        (a + d * d / nf, b + d * d * d / nf, c + d * d * d * d / nf)
    });
    let std = m2.sqrt();
    let ks_critical = (-0.5 * (alpha / 2.0).ln()).sqrt() / nf.sqrt();

    if std == 0.0 || !std.is_finite() {
        return Ok(QualityReport {
            n,
            mean,
            std,
            skewness: 0.0,
            excess_kurtosis: 0.0,
            qq_correlation: 0.0,
            ks_statistic: 1.0,
            ks_critical,
            alpha,
            ks_pass: false,
            zero_variance: true,
            pass: false,
        });
    }

    let qq = qq_points(samples);
    let qq_correlation = pearson(&qq);
    let fitted = StdNormal::new(mean, std).expect("positive std");
    let ks_statistic = qq
        .iter()
        .enumerate()
        .map(|(i, &(_, x))| {
            let f = fitted.cdf(x);
            (f - i as f64 / nf).max((i + 1) as f64 / nf - f)
        })
        .fold(0.0, f64::max);
    let ks_pass = ks_statistic <= ks_critical;
    Ok(QualityReport {
        n,
        mean,
        std,
        skewness: m3 / (m2 * std),
        excess_kurtosis: m4 / (m2 * m2) - 3.0,
        qq_correlation,
        ks_statistic,
        ks_critical,
        alpha,
        ks_pass,
        zero_variance: false,
        pass: ks_pass && qq_correlation > QQ_THRESHOLD,
    })
}
