//! Device calibration profiles and the fitted sampling distributions behind them.
//!
//! A profile is a versioned TOML file:
//!
//! ```toml
//! format = 1
//! name = "paper-2023"
//! c2c_sigma = 0.05          # relative threshold spread per switching event
//! programming_noise = 0.01  # relative resistance spread per gradual RESET
//!
//! [hrs]                     # lognormal, truncated to [min, max]
//! min = 31000.0
//! max = 155000.0
//! mean = 65560.0            # mean of the truncated distribution
//! sigma = 0.26823965        # log-space
//!
//! [lrs]                     # normal, truncated to [min, max]
//! min = 1550.0
//! max = 1670.0
//! mean = 1640.0
//! sigma = 20.0
//!
//! [set_threshold]           # volts, normal truncated to (0, 2 * mean)
//! mean = 1.5
//! sigma = 0.01
//!
//! [reset_threshold]
//! mean = 1.5
//! sigma = 0.01
//! ```
//!
//! The location parameter of each truncated distribution is fitted at load
//! time so the truncated mean equals `mean`.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

pub const PROFILE_FORMAT: u32 = 1;

const PAPER_2023: &str = include_str!("../profiles/paper-2023.toml");
const IDEAL: &str = include_str!("../profiles/ideal.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResistanceRange {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    /// Log-space sigma (HRS) or linear sigma in ohms (LRS).
    #[serde(alias = "log_sigma")]
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSpread {
    pub mean: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionSpec {
    pub format: u32,
    pub name: String,
    pub c2c_sigma: f64,
    pub programming_noise: f64,
    pub hrs: ResistanceRange,
    pub lrs: ResistanceRange,
    pub set_threshold: ThresholdSpread,
    pub reset_threshold: ThresholdSpread,
}

impl DistributionSpec {
    /// Default profile with the measured HfO2 stack ranges.
    pub fn paper_2023() -> Self {
        Self::from_toml(PAPER_2023).expect("embedded profile parses")
    }

    /// Zero-variation profile at the nominal means of `paper-2023`.
    pub fn ideal() -> Self {
        Self::from_toml(IDEAL).expect("embedded profile parses")
    }

    /// Embedded profile by name, or a profile file by path.
    pub fn resolve(name_or_path: &str) -> Result<Self> {
        match name_or_path {
            "paper-2023" => Ok(Self::paper_2023()),
            "ideal" => Ok(Self::ideal()),
            path => Self::load(path),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: DistributionSpec =
            toml::from_str(text).map_err(|e| Error::format(format!("profile: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("profile serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.format != PROFILE_FORMAT {
            return Err(Error::InvalidCalibration(format!(
                "unsupported profile format {}",
                self.format
            )));
        }
        for (label, r) in [("hrs", &self.hrs), ("lrs", &self.lrs)] {
            let ok = r.min > 0.0
                && r.max >= r.min
                && r.sigma >= 0.0
                && r.mean >= r.min
                && r.mean <= r.max
                && [r.min, r.max, r.mean, r.sigma].iter().all(|v| v.is_finite());
            if !ok {
                return Err(Error::InvalidCalibration(format!(
                    "{label} range must be positive with min <= mean <= max and sigma >= 0"
                )));
            }
        }
        if self.hrs.min <= self.lrs.max {
            return Err(Error::OverlappingRanges {
                hrs_min: self.hrs.min,
                hrs_max: self.hrs.max,
                lrs_min: self.lrs.min,
                lrs_max: self.lrs.max,
            });
        }
        for (label, t) in [
            ("set_threshold", &self.set_threshold),
            ("reset_threshold", &self.reset_threshold),
        ] {
            if !(t.mean > 0.0 && t.sigma >= 0.0 && t.mean.is_finite() && t.sigma.is_finite()) {
                return Err(Error::InvalidCalibration(format!(
                    "{label} needs mean > 0 and sigma >= 0"
                )));
            }
        }
        if !(self.c2c_sigma >= 0.0 && self.programming_noise >= 0.0) {
            return Err(Error::InvalidCalibration(
                "c2c_sigma and programming_noise must be >= 0".into(),
            ));
        }
        Ok(())
    }

    /// Conductance of a nominal (mean) HRS device.
    pub fn nominal_hrs_conductance(&self) -> f64 {
        1.0 / self.hrs.mean
    }

    pub fn nominal_lrs_conductance(&self) -> f64 {
        1.0 / self.lrs.mean
    }

    /// Comparator level separating every possible LRS from every possible HRS
    /// device at `v_read`: geometric midpoint of the range boundaries.
    pub fn state_sense_threshold(&self, v_read: f64) -> f64 {
        v_read / (self.lrs.max * self.hrs.min).sqrt()
    }
}

fn std_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

fn std_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Normal distribution truncated to `[lo, hi]`, sampled by inverse CDF so
/// each draw consumes exactly one uniform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncatedNormal {
    pub mu: f64,
    pub sigma: f64,
    pub lo: f64,
    pub hi: f64,
}

impl TruncatedNormal {
    pub fn mean(&self) -> f64 {
        if self.sigma == 0.0 {
            return self.mu.clamp(self.lo, self.hi);
        }
        let a = (self.lo - self.mu) / self.sigma;
        let b = (self.hi - self.mu) / self.sigma;
        let mass = std_cdf(b) - std_cdf(a);
        self.mu + self.sigma * (std_pdf(a) - std_pdf(b)) / mass
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        if self.sigma == 0.0 {
            return self.mu.clamp(self.lo, self.hi);
        }
        let pa = std_cdf((self.lo - self.mu) / self.sigma);
        let pb = std_cdf((self.hi - self.mu) / self.sigma);
        let p = (pa + u * (pb - pa)).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON);
        let z = Normal::standard().inverse_cdf(p);
        (self.mu + self.sigma * z).clamp(self.lo, self.hi)
    }

    /// Fit `mu` so the truncated mean equals `target`.
    pub fn fit_mean(target: f64, sigma: f64, lo: f64, hi: f64) -> Result<Self> {
        if sigma == 0.0 {
            return Ok(TruncatedNormal { mu: target, sigma, lo, hi });
        }
        let mean_at = |mu: f64| TruncatedNormal { mu, sigma, lo, hi }.mean();
        let mu = bisect_increasing(mean_at, target, lo - 4.0 * sigma, hi + 4.0 * sigma)?;
        Ok(TruncatedNormal { mu, sigma, lo, hi })
    }
}

/// Lognormal truncated to `[lo, hi]` in linear space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncatedLogNormal {
    pub log: TruncatedNormal,
}

impl TruncatedLogNormal {
    pub fn mean(&self) -> f64 {
        let TruncatedNormal { mu, sigma, lo, hi } = self.log;
        if sigma == 0.0 {
            return mu.clamp(lo, hi).exp();
        }
        let s2 = sigma * sigma;
        let num = std_cdf((hi - mu - s2) / sigma) - std_cdf((lo - mu - s2) / sigma);
        let den = std_cdf((hi - mu) / sigma) - std_cdf((lo - mu) / sigma);
        (mu + 0.5 * s2).exp() * num / den
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let lo = self.log.lo.exp();
        let hi = self.log.hi.exp();
        self.log.sample(rng).exp().clamp(lo, hi)
    }

    pub fn fit_mean(target: f64, log_sigma: f64, lo: f64, hi: f64) -> Result<Self> {
        let (llo, lhi) = (lo.ln(), hi.ln());
        if log_sigma == 0.0 {
            return Ok(TruncatedLogNormal {
                log: TruncatedNormal { mu: target.ln(), sigma: 0.0, lo: llo, hi: lhi },
            });
        }
        let mean_at = |mu: f64| {
            TruncatedLogNormal { log: TruncatedNormal { mu, sigma: log_sigma, lo: llo, hi: lhi } }
                .mean()
        };
        let mu = bisect_increasing(mean_at, target, llo - 4.0 * log_sigma, lhi + 4.0 * log_sigma)?;
        Ok(TruncatedLogNormal { log: TruncatedNormal { mu, sigma: log_sigma, lo: llo, hi: lhi } })
    }
}

fn bisect_increasing(f: impl Fn(f64) -> f64, target: f64, mut lo: f64, mut hi: f64) -> Result<f64> {
    if !(f(lo) <= target && target <= f(hi)) {
        return Err(Error::InvalidCalibration(format!(
            "mean {target} unreachable for the given range and spread"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-13 * (1.0 + mid.abs()) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Fitted samplers for one profile; build once, draw many devices.
#[derive(Debug, Clone)]
pub struct FittedDistributions {
    pub spec: DistributionSpec,
    pub hrs: TruncatedLogNormal,
    pub lrs: TruncatedNormal,
    pub set_threshold: TruncatedNormal,
    pub reset_threshold: TruncatedNormal,
}

impl FittedDistributions {
    pub fn new(spec: &DistributionSpec) -> Result<Self> {
        spec.validate()?;
        let hrs = TruncatedLogNormal::fit_mean(spec.hrs.mean, spec.hrs.sigma, spec.hrs.min, spec.hrs.max)?;
        let lrs = TruncatedNormal::fit_mean(spec.lrs.mean, spec.lrs.sigma, spec.lrs.min, spec.lrs.max)?;
        let threshold = |t: &ThresholdSpread| TruncatedNormal {
            mu: t.mean,
            sigma: t.sigma,
            lo: 0.0,
            hi: 2.0 * t.mean,
        };
        Ok(FittedDistributions {
            spec: spec.clone(),
            hrs,
            lrs,
            set_threshold: threshold(&spec.set_threshold),
            reset_threshold: threshold(&spec.reset_threshold),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_stream;

    #[test]
    fn embedded_profiles_parse() {
        let p = DistributionSpec::paper_2023();
        assert_eq!(p.name, "paper-2023");
        assert_eq!(p.hrs.min, 31e3);
        assert_eq!(p.lrs.mean, 1.64e3);
        let i = DistributionSpec::ideal();
        assert_eq!(i.c2c_sigma, 0.0);
        assert_eq!(i.hrs.sigma, 0.0);
    }

    #[test]
    fn overlapping_ranges_rejected() {
        let mut p = DistributionSpec::paper_2023();
        p.hrs.min = 1.6e3;
        p.hrs.mean = 5e3;
        assert!(matches!(p.validate(), Err(Error::OverlappingRanges { .. })));
    }

    #[test]
    fn wrong_format_version_rejected() {
        let text = DistributionSpec::paper_2023().to_toml().replace("format = 1", "format = 7");
        assert!(DistributionSpec::from_toml(&text).is_err());
    }

    #[test]
    fn toml_round_trip() {
        let p = DistributionSpec::paper_2023();
        assert_eq!(DistributionSpec::from_toml(&p.to_toml()).unwrap(), p);
    }

    #[test]
    fn fitted_means_hit_targets() {
        let f = FittedDistributions::new(&DistributionSpec::paper_2023()).unwrap();
        assert!((f.hrs.mean() - 65.56e3).abs() < 1e-6 * 65.56e3);
        assert!((f.lrs.mean() - 1.64e3).abs() < 1e-6 * 1.64e3);
    }

    #[test]
    fn truncated_normal_mean_matches_quadrature() {
        // Independent check of the closed form with a midpoint-rule integral.
        let t = TruncatedNormal { mu: 1.0, sigma: 0.7, lo: 0.2, hi: 1.5 };
        let n = 200_000;
        let h = (t.hi - t.lo) / n as f64;
        let (mut num, mut den) = (0.0, 0.0);
        for k in 0..n {
            let x = t.lo + (k as f64 + 0.5) * h;
            let w = (-0.5 * ((x - t.mu) / t.sigma).powi(2)).exp();
            num += x * w;
            den += w;
        }
        assert!((t.mean() - num / den).abs() < 1e-8);
    }

    #[test]
    fn samples_stay_inside_bounds() {
        let f = FittedDistributions::new(&DistributionSpec::paper_2023()).unwrap();
        let mut rng = derive_stream(3, "test", 0);
        for _ in 0..10_000 {
            let h = f.hrs.sample(&mut rng);
            let l = f.lrs.sample(&mut rng);
            assert!((31e3..=155e3).contains(&h));
            assert!((1.55e3..=1.67e3).contains(&l));
        }
    }
}
