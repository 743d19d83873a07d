//! Row DACs, column ADCs and the current sense amplifier.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Read-safe DAC full scale in volts.
pub const DAC_FULL_SCALE: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DacLevels {
    pub bits: u32,
    pub voltages: Vec<f64>,
}

impl DacLevels {
    pub fn new(voltages: Vec<f64>) -> Result<Self> {
        let n = voltages.len();
        if n < 2 || !n.is_power_of_two() {
            return Err(Error::invalid("DAC needs 2^k levels, k >= 1"));
        }
        if voltages[0] != 0.0 {
            return Err(Error::invalid("DAC level 0 must be 0 V"));
        }
        if !voltages.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::invalid("DAC levels must be strictly increasing"));
        }
        Ok(DacLevels { bits: n.trailing_zeros(), voltages })
    }

    /// `2^bits` evenly spaced levels from 0 to `full_scale`.
    pub fn linear(bits: u32, full_scale: f64) -> Result<Self> {
        if !(1..=16).contains(&bits) {
            return Err(Error::invalid("DAC bit width must be in 1..=16"));
        }
        let top = (1u32 << bits) - 1;
        Self::new((0..=top).map(|c| full_scale * c as f64 / top as f64).collect())
    }

    pub fn max_voltage(&self) -> f64 {
        *self.voltages.last().unwrap()
    }

    /// Rejects level sets whose top voltage could disturb a device whose
    /// switching threshold is `min_threshold`.
    pub fn check_disturb_margin(&self, min_threshold: f64) -> Result<()> {
        if self.max_voltage() >= min_threshold {
            return Err(Error::invalid(format!(
                "DAC full scale {} V reaches switching threshold {} V",
                self.max_voltage(),
                min_threshold
            )));
        }
        Ok(())
    }

    pub fn step(&self) -> f64 {
        self.voltages[1]
    }
}

pub fn dac_map(codes: &[u32], levels: &DacLevels) -> Result<Vec<f64>> {
    let max = levels.voltages.len() as u32 - 1;
    codes
        .iter()
        .map(|&c| {
            levels
                .voltages
                .get(c as usize)
                .copied()
                .ok_or(Error::CodeOutOfRange { code: c, max })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ResolutionMode {
    /// `ceil(log2(w * rows))` bits.
    Paper,
    /// Enough bits for the largest possible dot product.
    #[default]
    Exact,
}

fn ceil_log2(x: u64) -> u32 {
    if x <= 1 {
        0
    } else {
        64 - (x - 1).leading_zeros()
    }
}

/// ADC bit depth for `weight_bits`-bit weights, `input_bits`-bit inputs and
/// `rows` devices per column. Never below one bit.
pub fn adc_bits(weight_bits: u32, input_bits: u32, rows: usize, mode: ResolutionMode) -> u32 {
    let bits = match mode {
        ResolutionMode::Paper => ceil_log2(weight_bits as u64 * rows as u64),
        ResolutionMode::Exact => {
            let wmax = (1u64 << weight_bits) - 1;
            let xmax = (1u64 << input_bits) - 1;
            ceil_log2(wmax * xmax * rows as u64 + 1)
        }
    };
    bits.max(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdcConfig {
    pub weight_bits: u32,
    pub input_bits: u32,
    pub rows: usize,
    /// Current mapped to the top code, amperes.
    pub full_scale: f64,
    pub resolution: ResolutionMode,
}

impl AdcConfig {
    pub fn bits(&self) -> u32 {
        adc_bits(self.weight_bits, self.input_bits, self.rows, self.resolution)
    }

    pub fn max_code(&self) -> u32 {
        ((1u64 << self.bits()) - 1) as u32
    }

    pub fn lsb(&self) -> f64 {
        self.full_scale / self.max_code() as f64
    }
}

/// Round-to-nearest quantization, clamped to `[0, 2^bits - 1]`.
pub fn adc_quantize(currents: &[f64], cfg: &AdcConfig) -> Result<Vec<u32>> {
    if !(cfg.full_scale > 0.0) {
        return Err(Error::invalid("ADC full scale must be > 0"));
    }
    let lsb = cfg.lsb();
    let max = cfg.max_code() as f64;
    Ok(currents
        .iter()
        .map(|&i| (i / lsb).round().clamp(0.0, max) as u32)
        .collect())
}

/// Comparator bank: bit is set only when the current strictly exceeds its threshold.
pub fn csa_compare(currents: &[f64], thresholds: &[f64]) -> Result<Vec<bool>> {
    if thresholds.len() != currents.len() && thresholds.len() != 1 {
        return Err(Error::DimensionMismatch {
            expected: format!("{} thresholds", currents.len()),
            found: thresholds.len().to_string(),
        });
    }
    if thresholds.iter().any(|&t| !(t > 0.0)) {
        return Err(Error::invalid("CSA threshold must be > 0"));
    }
    Ok(currents
        .iter()
        .enumerate()
        .map(|(j, &i)| i > thresholds[if thresholds.len() == 1 { 0 } else { j }])
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn dac_maps_worked_example() {
        let dac = DacLevels::linear(2, DAC_FULL_SCALE).unwrap();
        let v = dac_map(&[1, 2, 2, 0], &dac).unwrap();
        let expected = [0.1, 0.2, 0.2, 0.0];
        for (a, b) in v.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(dac_map(&[0; 4], &dac).unwrap(), vec![0.0; 4]);
        assert!(matches!(dac_map(&[4], &dac), Err(Error::CodeOutOfRange { code: 4, max: 3 })));
    }

    #[test]
    fn dac_rejects_bad_levels() {
        assert!(DacLevels::new(vec![0.0, 0.2, 0.1, 0.3]).is_err());
        assert!(DacLevels::new(vec![0.05, 0.1]).is_err());
        assert!(DacLevels::new(vec![0.0, 0.1, 0.2]).is_err());
        assert!(DacLevels::linear(2, 0.3).unwrap().check_disturb_margin(1.4).is_ok());
        assert!(DacLevels::linear(2, 1.6).unwrap().check_disturb_margin(1.4).is_err());
    }

    #[test]
    fn adc_bit_depths() {
        assert_eq!(adc_bits(2, 2, 4, ResolutionMode::Paper), 3);
        // brute force the largest dot product for w=2, k=2, 4 rows
        let max_dot = (0..4u64).map(|_| 3 * 3).sum::<u64>();
        assert_eq!(max_dot, 36);
        let needed = (0..).find(|b| (1u64 << b) > max_dot).unwrap();
        assert_eq!(adc_bits(2, 2, 4, ResolutionMode::Exact), needed);
        assert_eq!(needed, 6);
        assert_eq!(adc_bits(1, 1, 1, ResolutionMode::Paper), 1);
        assert_eq!(adc_bits(1, 1, 1, ResolutionMode::Exact), 1);
    }

    #[test]
    fn adc_zero_and_clamp() {
        let cfg = AdcConfig { weight_bits: 2, input_bits: 2, rows: 4, full_scale: 7.0, resolution: ResolutionMode::Paper };
        assert_eq!(adc_quantize(&[0.0, 12.0, 3.2, -1.0], &cfg).unwrap(), vec![0, 7, 3, 0]);
        let bad = AdcConfig { full_scale: 0.0, ..cfg };
        assert!(adc_quantize(&[1.0], &bad).is_err());
    }

    #[test]
    fn csa_comparator_and_ties() {
        assert_eq!(csa_compare(&[2e-6, 80e-6], &[10e-6]).unwrap(), vec![false, true]);
        assert_eq!(csa_compare(&[10e-6, 10e-6], &[10e-6, 10e-6]).unwrap(), vec![false, false]);
        assert!(csa_compare(&[1.0], &[0.0]).is_err());
        assert!(csa_compare(&[1.0, 2.0, 3.0], &[1.0, 1.0]).is_err());
    }

    proptest! {
        #[test]
        fn csa_matches_elementwise(currents in prop::collection::vec(0.0f64..1e-3, 1..64), t in 1e-6f64..1e-3) {
            let bits = csa_compare(&currents, &[t]).unwrap();
            for (b, i) in bits.iter().zip(&currents) {
                prop_assert_eq!(*b, *i > t);
            }
        }

        #[test]
        fn adc_is_pure_and_in_range(i in -1e-3f64..1e-2, w in 1u32..4, k in 1u32..4, rows in 1usize..32) {
            let cfg = AdcConfig { weight_bits: w, input_bits: k, rows, full_scale: 1e-3, resolution: ResolutionMode::Exact };
            let a = adc_quantize(&[i], &cfg).unwrap();
            let b = adc_quantize(&[i], &cfg).unwrap();
            prop_assert_eq!(&a, &b);
            prop_assert!(a[0] <= cfg.max_code());
        }
    }
}
