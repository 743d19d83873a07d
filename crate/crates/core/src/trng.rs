//! Random bits from stochastic threshold switching.
//!
//! A batch RESETs the whole array, applies one pulse near the median
//! switching threshold to every device and reads which devices ended in LRS.
//! Device-to-device spread is frozen per array, so batch-to-batch variation
//! comes from the cycle-to-cycle draw made at every switching event.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::calibration::{DistributionSpec, FittedDistributions};
use crate::crossbar::{Crossbar, Mode};
use crate::device::{Device, DeviceMode, PulseSpec};
use crate::error::{Error, Result};
use crate::peripherals::csa_compare;

/// Read voltage used to sense device states through the CSA.
pub const STATE_READ_VOLTAGE: f64 = 0.2;

/// Monte-Carlo population used by [`calibrate_p50_pulse`].
pub const CALIBRATION_POPULATION: usize = 200_000;

const MAX_BISECTION_STEPS: u32 = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrngBatch {
    pub bits: Vec<bool>,
    pub pulse_used: PulseSpec,
    pub generation_index: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct P50Calibration {
    pub pulse: PulseSpec,
    /// Switching fraction of the calibration population at `pulse`.
    pub fraction: f64,
    pub iterations: u32,
}

/// Bisect the pulse amplitude until a fresh Monte-Carlo population switches
/// with probability `0.5 +- tolerance / 2`.
///
/// Every population member gets a sampled threshold and one cycle-to-cycle
/// draw, fixed for the whole search, so the switching fraction is a step
/// function of the amplitude.
pub fn calibrate_p50_pulse<R: Rng + ?Sized>(
    calibration: &DistributionSpec,
    tolerance: f64,
    rng: &mut R,
) -> Result<P50Calibration> {
    if !(tolerance > 0.0 && tolerance < 0.5) {
        return Err(Error::invalid("tolerance must be in (0, 0.5)"));
    }
    let dist = FittedDistributions::new(calibration)?;
    let c2c = calibration.c2c_sigma;
    let mut eff: Vec<f64> = (0..CALIBRATION_POPULATION)
        .map(|_| {
            let t = dist.set_threshold.sample(rng);
            let z: f64 = rng.sample(StandardNormal);
            t * (1.0 + c2c * z)
        })
        .collect();
    eff.sort_by(f64::total_cmp);
    let (min, max) = (eff[0], eff[eff.len() - 1]);
    if min == max {
        let pulse = PulseSpec::standard(min.next_up());
        return Ok(P50Calibration { pulse, fraction: 1.0, iterations: 0 });
    }
    // a device switches iff amplitude > threshold
    let fraction = |a: f64| eff.partition_point(|&t| t < a) as f64 / eff.len() as f64;
    let (mut lo, mut hi) = (min, max.next_up());
    for step in 1..=MAX_BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        let f = fraction(mid);
        if (f - 0.5).abs() <= 0.5 * tolerance {
            return Ok(P50Calibration { pulse: PulseSpec::standard(mid), fraction: f, iterations: step });
        }
        if f < 0.5 {
            lo = mid;
        } else {
            hi = mid;
        }
        if lo == hi {
            break;
        }
    }
    Err(Error::NoConvergence(format!(
        "p50 bisection did not reach tolerance {tolerance}"
    )))
}

fn std_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Expected switching probability of one device under a SET pulse of
/// amplitude `a`.
pub fn switching_probability(device: &Device, a: f64) -> f64 {
    let t = device.params.set_threshold;
    let c2c = device.params.c2c_sigma;
    if c2c == 0.0 {
        return if a > t { 1.0 } else { 0.0 };
    }
    std_cdf((a / t - 1.0) / c2c)
}

/// Amplitude at which this particular array switches half of its devices on
/// average, solved on its frozen thresholds.
pub fn calibrate_p50_for_crossbar(xbar: &Crossbar) -> Result<PulseSpec> {
    let devices = xbar.devices();
    if devices.iter().all(|d| d.params.c2c_sigma == 0.0) {
        let mut t: Vec<f64> = devices.iter().map(|d| d.params.set_threshold).collect();
        t.sort_by(f64::total_cmp);
        let k = (t.len() - 1) / 2;
        let a = if t[k + usize::from(t.len() > 1)] > t[k] {
            0.5 * (t[k] + t[k + 1])
        } else {
            t[k].next_up()
        };
        return Ok(PulseSpec::standard(a));
    }
    let mean_p = |a: f64| devices.iter().map(|d| switching_probability(d, a)).sum::<f64>() / devices.len() as f64;
    let (mut lo, mut hi) = (0.0, devices.iter().map(|d| d.params.set_threshold).fold(0.0, f64::max) * 2.0);
    for _ in 0..MAX_BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if mean_p(mid) < 0.5 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * hi {
            break;
        }
    }
    Ok(PulseSpec::standard(0.5 * (lo + hi)))
}

/// CSA read of the binary state pattern at [`STATE_READ_VOLTAGE`].
pub(crate) fn sense_states(xbar: &Crossbar) -> Result<Vec<bool>> {
    let currents: Vec<f64> = xbar.devices().iter().map(|d| STATE_READ_VOLTAGE * d.conductance()).collect();
    let threshold = xbar.calibration().state_sense_threshold(STATE_READ_VOLTAGE);
    csa_compare(&currents, &[threshold])
}

fn require_binary(xbar: &Crossbar) -> Result<()> {
    if !xbar.all_devices_in(DeviceMode::Binary) {
        return Err(Error::DeviceModeMisuse("TRNG needs every device in binary mode".into()));
    }
    Ok(())
}

/// RESET every device, then apply `pulse` to every device, drawing all
/// switching noise from `rng`.
pub(crate) fn switch_all<R: Rng + ?Sized>(xbar: &mut Crossbar, pulse: &PulseSpec, rng: &mut R) -> Result<Vec<bool>> {
    let reset = PulseSpec::reset();
    for d in xbar.devices_mut() {
        d.apply_pulse(&reset, rng)?;
    }
    for d in xbar.devices_mut() {
        d.apply_pulse(pulse, rng)?;
    }
    sense_states(xbar)
}

pub fn generate_batch(xbar: &mut Crossbar, pulse: &PulseSpec) -> Result<TrngBatch> {
    xbar.require_mode(Mode::Trng)?;
    require_binary(xbar)?;
    let mut rng = xbar.rng_mut().clone();
    let bits = switch_all(xbar, pulse, &mut rng)?;
    *xbar.rng_mut() = rng;
    xbar.entropy_initialized = false;
    let generation_index = xbar.trng_generation;
    xbar.trng_generation += 1;
    Ok(TrngBatch { bits, pulse_used: *pulse, generation_index })
}

/// Concatenate whole batches and truncate to `n_bits`. With `fold > 1`,
/// every output bit is the XOR of `fold` consecutive raw bits.
pub fn harvest_stream(xbar: &mut Crossbar, pulse: &PulseSpec, n_bits: usize, fold: usize) -> Result<Vec<bool>> {
    if n_bits == 0 {
        return Err(Error::invalid("n_bits must be >= 1"));
    }
    if fold == 0 {
        return Err(Error::invalid("XOR fold factor must be >= 1"));
    }
    let raw_len = n_bits * fold;
    let mut raw = Vec::with_capacity(raw_len + xbar.devices().len());
    while raw.len() < raw_len {
        raw.extend(generate_batch(xbar, pulse)?.bits);
    }
    raw.truncate(raw_len);
    Ok(xor_fold(&raw, fold))
}

pub fn xor_fold(bits: &[bool], fold: usize) -> Vec<bool> {
    bits.chunks_exact(fold).map(|c| c.iter().fold(false, |a, b| a ^ b)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BitStatistics {
    pub len: usize,
    pub ones_fraction: f64,
    pub runs: usize,
    pub longest_run: usize,
    pub lag1_autocorrelation: f64,
}

pub fn ones_fraction(bits: &[bool]) -> f64 {
    crate::bits::ones(bits) as f64 / bits.len() as f64
}

/// Number of maximal blocks of identical bits.
pub fn runs(bits: &[bool]) -> usize {
    if bits.is_empty() {
        return 0;
    }
    1 + bits.windows(2).filter(|w| w[0] != w[1]).count()
}

pub fn longest_run(bits: &[bool]) -> usize {
    let (mut best, mut cur) = (0, 0);
    for (k, &b) in bits.iter().enumerate() {
        cur = if k > 0 && bits[k - 1] == b { cur + 1 } else { 1 };
        best = best.max(cur);
    }
    best
}

/// Sample lag-1 autocorrelation; 0 for constant sequences.
pub fn lag1_autocorrelation(bits: &[bool]) -> f64 {
    if bits.len() < 2 {
        return 0.0;
    }
    let x: Vec<f64> = bits.iter().map(|&b| f64::from(u8::from(b))).collect();
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    let var: f64 = x.iter().map(|v| (v - mean).powi(2)).sum();
    if var == 0.0 {
        return 0.0;
    }
    let cov: f64 = x.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum();
    cov / var
}

pub fn bit_statistics(bits: &[bool]) -> BitStatistics {
    BitStatistics {
        len: bits.len(),
        ones_fraction: if bits.is_empty() { 0.0 } else { ones_fraction(bits) },
        runs: runs(bits),
        longest_run: longest_run(bits),
        lag1_autocorrelation: lag1_autocorrelation(bits),
    }
}
