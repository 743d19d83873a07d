//! Single RRAM cell: sampled parameters, threshold switching and gradual RESET.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::calibration::{DistributionSpec, FittedDistributions};
use crate::error::{Error, Result};

/// Mapping from a multi-state level to a resistance between LRS and HRS.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum LevelMap {
    /// Log-spaced resistances.
    #[default]
    Geometric,
    /// Evenly spaced conductances, so conductance is affine in the level.
    LinearConductance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DeviceMode {
    Binary,
    Multistate { levels: u16, map: LevelMap },
}

impl DeviceMode {
    pub fn levels(&self) -> u16 {
        match *self {
            DeviceMode::Binary => 2,
            DeviceMode::Multistate { levels, .. } => levels,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceParams {
    pub hrs_resistance: f64,
    pub lrs_resistance: f64,
    /// Volts a positive pulse must exceed to SET.
    pub set_threshold: f64,
    /// Volts a negative pulse must exceed (in magnitude) to RESET.
    pub reset_threshold: f64,
    /// Relative threshold spread drawn per switching event.
    pub c2c_sigma: f64,
    /// Relative resistance spread of a gradual RESET.
    pub programming_noise: f64,
}

impl DeviceParams {
    pub fn check(&self) -> Result<()> {
        let ok = self.hrs_resistance > self.lrs_resistance
            && self.lrs_resistance > 0.0
            && self.set_threshold > 0.0
            && self.reset_threshold > 0.0
            && self.c2c_sigma >= 0.0
            && self.programming_noise >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("inconsistent device parameters {self:?}")))
        }
    }

    /// Resistance of `level` out of `levels` under `map`. Level 0 is HRS and
    /// `levels - 1` is LRS.
    pub fn level_resistance(&self, levels: u16, map: LevelMap, level: u16) -> f64 {
        debug_assert!(levels >= 2 && level < levels);
        let x = level as f64 / (levels - 1) as f64;
        match map {
            LevelMap::Geometric => self.hrs_resistance.powf(1.0 - x) * self.lrs_resistance.powf(x),
            LevelMap::LinearConductance => {
                let (gh, gl) = (1.0 / self.hrs_resistance, 1.0 / self.lrs_resistance);
                1.0 / (gh + x * (gl - gh))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceState {
    pub resistance: f64,
    pub level: u16,
    pub mode: DeviceMode,
}

impl DeviceState {
    pub fn is_lrs(&self) -> bool {
        self.level + 1 == self.mode.levels()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseSpec {
    /// Signed volts; positive is SET polarity.
    pub amplitude: f64,
    pub width_ns: f64,
    /// Carried for bookkeeping; switching ignores it.
    pub rise_fall_ns: f64,
}

impl PulseSpec {
    pub fn new(amplitude: f64, width_ns: f64, rise_fall_ns: f64) -> Result<Self> {
        if !(width_ns > 0.0 && rise_fall_ns >= 0.0 && amplitude.is_finite()) {
            return Err(Error::invalid("pulse needs width > 0 and rise/fall >= 0"));
        }
        Ok(PulseSpec { amplitude, width_ns, rise_fall_ns })
    }

    /// 150 ns, 10 ns edges, at the given amplitude.
    pub fn standard(amplitude: f64) -> Self {
        PulseSpec { amplitude, width_ns: 150.0, rise_fall_ns: 10.0 }
    }

    /// +2.0 V programming pulse.
    pub fn set() -> Self {
        Self::standard(2.0)
    }

    /// -2.0 V programming pulse.
    pub fn reset() -> Self {
        Self::standard(-2.0)
    }
}

/// Draw device parameters from already-fitted distributions.
pub fn sample_params<R: Rng + ?Sized>(dist: &FittedDistributions, rng: &mut R) -> DeviceParams {
    let hrs = dist.hrs.sample(rng);
    let lrs = dist.lrs.sample(rng);
    let set_threshold = dist.set_threshold.sample(rng);
    let reset_threshold = dist.reset_threshold.sample(rng);
    DeviceParams {
        hrs_resistance: hrs,
        lrs_resistance: lrs,
        set_threshold,
        reset_threshold,
        c2c_sigma: dist.spec.c2c_sigma,
        programming_noise: dist.spec.programming_noise,
    }
}

/// Draw one device from a calibration profile. Fits the profile on every call;
/// use [`FittedDistributions`] with [`sample_params`] for populations.
pub fn sample_device<R: Rng + ?Sized>(spec: &DistributionSpec, rng: &mut R) -> Result<DeviceParams> {
    Ok(sample_params(&FittedDistributions::new(spec)?, rng))
}

/// Multiplicative read noise: lognormal with mean 1 and relative std `sigma`.
pub fn read_noise_factor<R: Rng + ?Sized>(sigma: f64, rng: &mut R) -> f64 {
    if sigma == 0.0 {
        return 1.0;
    }
    let s2 = (1.0 + sigma * sigma).ln();
    let z: f64 = rng.sample(StandardNormal);
    (z * s2.sqrt() - 0.5 * s2).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Device {
    pub params: DeviceParams,
    pub state: DeviceState,
}

impl Device {
    /// Fresh binary device in HRS.
    pub fn new(params: DeviceParams) -> Self {
        Device {
            params,
            state: DeviceState {
                resistance: params.hrs_resistance,
                level: 0,
                mode: DeviceMode::Binary,
            },
        }
    }

    /// Switch operating mode. The device lands in HRS (level 0).
    pub fn configure(&mut self, mode: DeviceMode) -> Result<()> {
        if let DeviceMode::Multistate { levels, .. } = mode {
            if levels < 2 {
                return Err(Error::invalid("multistate mode needs at least 2 levels"));
            }
        }
        self.state = DeviceState { resistance: self.params.hrs_resistance, level: 0, mode };
        Ok(())
    }

    /// Per-event effective threshold for a pulse of this polarity.
    pub fn effective_threshold<R: Rng + ?Sized>(&self, set_polarity: bool, rng: &mut R) -> f64 {
        let base = if set_polarity { self.params.set_threshold } else { self.params.reset_threshold };
        let z: f64 = rng.sample(StandardNormal);
        base * (1.0 + self.params.c2c_sigma * z)
    }

    /// Binary threshold switching. One cycle-to-cycle draw is consumed per
    /// call whether or not the device switches.
    pub fn apply_pulse<R: Rng + ?Sized>(&mut self, pulse: &PulseSpec, rng: &mut R) -> Result<DeviceState> {
        if self.state.mode != DeviceMode::Binary {
            return Err(Error::DeviceModeMisuse(
                "threshold pulses apply to binary-mode devices only".into(),
            ));
        }
        let set_polarity = pulse.amplitude >= 0.0;
        let threshold = self.effective_threshold(set_polarity, rng);
        if pulse.amplitude.abs() > threshold {
            let (level, resistance) = if set_polarity {
                (1, self.params.lrs_resistance)
            } else {
                (0, self.params.hrs_resistance)
            };
            self.state.level = level;
            self.state.resistance = resistance;
        }
        Ok(self.state)
    }

    /// Multi-state SET to the top level (LRS).
    pub fn set_to_lrs(&mut self) -> Result<DeviceState> {
        let DeviceMode::Multistate { levels, .. } = self.state.mode else {
            return Err(Error::DeviceModeMisuse("SET reinitialization needs multistate mode".into()));
        };
        self.state.level = levels - 1;
        self.state.resistance = self.params.lrs_resistance;
        Ok(self.state)
    }

    /// Step a multi-state device down to `target_level` with incremental RESET
    /// pulses. The landing resistance carries the programming noise.
    pub fn gradual_reset<R: Rng + ?Sized>(&mut self, target_level: u16, rng: &mut R) -> Result<DeviceState> {
        let DeviceMode::Multistate { levels, map } = self.state.mode else {
            return Err(Error::DeviceModeMisuse("gradual RESET needs multistate mode".into()));
        };
        if target_level >= levels {
            return Err(Error::LevelOutOfRange { level: target_level, levels });
        }
        if target_level > self.state.level {
            return Err(Error::NeedsSet { current: self.state.level, target: target_level });
        }
        let nominal = self.params.level_resistance(levels, map, target_level);
        let z: f64 = rng.sample(StandardNormal);
        let r = nominal * (1.0 + self.params.programming_noise * z);
        self.state.level = target_level;
        self.state.resistance = r.clamp(self.params.lrs_resistance, self.params.hrs_resistance);
        Ok(self.state)
    }

    /// SET then gradual RESET to `level`.
    pub fn program_level<R: Rng + ?Sized>(&mut self, level: u16, rng: &mut R) -> Result<DeviceState> {
        self.set_to_lrs()?;
        self.gradual_reset(level, rng)
    }

    /// Non-destructive read.
    pub fn read_conductance<R: Rng + ?Sized>(&self, read_noise_sigma: f64, rng: &mut R) -> f64 {
        read_noise_factor(read_noise_sigma, rng) / self.state.resistance
    }

    pub fn conductance(&self) -> f64 {
        1.0 / self.state.resistance
    }
}
