//! Multi-bit weight storage and digital-in / digital-out vector-matrix
//! multiplication.
//!
//! Weights map to evenly spaced conductances between each device's HRS
//! (weight 0) and LRS (top weight), so a column current is
//! `g_hrs * sum(v) + unit * sum(code * weight)`. The readout subtracts the
//! nominal HRS baseline before the ADC and sets the ADC LSB to one
//! `unit` of current, which makes the codes the integer dot products when
//! devices are ideal.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::crossbar::{Crossbar, Mode, PeripheralPath};
use crate::device::{DeviceMode, LevelMap};
use crate::error::{Error, Result};
use crate::nodal::{ColumnCurrents, Termination};
use crate::peripherals::{adc_quantize, dac_map, AdcConfig, DacLevels, ResolutionMode, DAC_FULL_SCALE};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeightMatrix {
    rows: usize,
    cols: usize,
    bits: u32,
    values: Vec<u32>,
}

impl WeightMatrix {
    pub fn new(rows: usize, cols: usize, bits: u32, values: Vec<u32>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::invalid("weight matrix dimensions must be >= 1"));
        }
        if !(1..=8).contains(&bits) {
            return Err(Error::invalid("weight bit width must be in 1..=8"));
        }
        if values.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: format!("{} weights", rows * cols),
                found: values.len().to_string(),
            });
        }
        let limit = 1u32 << bits;
        if let Some(&bad) = values.iter().find(|&&v| v >= limit) {
            return Err(Error::CodeOutOfRange { code: bad, max: limit - 1 });
        }
        Ok(WeightMatrix { rows, cols, bits, values })
    }

    pub fn from_rows(bits: u32, rows: &[Vec<u32>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::invalid("ragged weight rows"));
        }
        Self::new(rows.len(), cols, bits, rows.concat())
    }

    /// The 4x4 two-bit matrix of the worked example.
    pub fn worked_example() -> Self {
        Self::from_rows(
            2,
            &[vec![1, 2, 3, 3], vec![0, 3, 0, 1], vec![2, 2, 0, 1], vec![3, 2, 2, 1]],
        )
        .unwrap()
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn values(&self) -> &[u32] {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize) -> u32 {
        self.values[i * self.cols + j]
    }

    /// `# w=<bits>` header, then one comma-separated row per line.
    pub fn to_csv(&self) -> String {
        let mut out = format!("# w={}\n", self.bits);
        for row in self.values.chunks(self.cols) {
            let line: Vec<String> = row.iter().map(u32::to_string).collect();
            let _ = writeln!(out, "{}", line.join(","));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let header = lines.next().ok_or_else(|| Error::format("empty weight file"))?;
        let bits = header
            .strip_prefix('#')
            .map(str::trim)
            .and_then(|h| h.strip_prefix("w="))
            .and_then(|b| b.trim().parse::<u32>().ok())
            .ok_or_else(|| Error::format(format!("expected '# w=<bits>' header, found '{header}'")))?;
        let rows = lines
            .map(|l| {
                l.split(',')
                    .map(|c| c.trim().parse::<u32>().map_err(|e| Error::format(format!("weight '{c}': {e}"))))
                    .collect::<Result<Vec<u32>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_rows(bits, &rows)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// Put every device in `2^bits`-level mode with evenly spaced conductances.
pub fn configure_for_weights(xbar: &mut Crossbar, bits: u32) -> Result<()> {
    if !(1..=8).contains(&bits) {
        return Err(Error::invalid("weight bit width must be in 1..=8"));
    }
    xbar.configure_devices(DeviceMode::Multistate {
        levels: 1 << bits,
        map: LevelMap::LinearConductance,
    })
}

/// Program weights row-major, each device SET to LRS then gradually RESET
/// to its weight level.
pub fn program_weights(xbar: &mut Crossbar, weights: &WeightMatrix) -> Result<()> {
    xbar.require_mode(Mode::Vmm)?;
    if weights.rows != xbar.rows() || weights.cols != xbar.cols() {
        return Err(Error::DimensionMismatch {
            expected: format!("{}x{}", xbar.rows(), xbar.cols()),
            found: format!("{}x{}", weights.rows, weights.cols),
        });
    }
    let levels = 1u16 << weights.bits;
    let ok = xbar
        .devices()
        .iter()
        .all(|d| matches!(d.state.mode, DeviceMode::Multistate { levels: l, .. } if l == levels));
    if !ok {
        return Err(Error::DeviceModeMisuse(format!(
            "weights need every device in {levels}-level multistate mode"
        )));
    }
    let (devices, rng) = xbar.devices_and_rng();
    for (d, &w) in devices.iter_mut().zip(&weights.values) {
        d.program_level(w as u16, rng)?;
    }
    xbar.entropy_initialized = false;
    xbar.csa_reference = None;
    xbar.programmed_weight_bits = Some(weights.bits);
    Ok(())
}

/// Levels currently held by the devices, as a weight matrix.
pub fn stored_weights(xbar: &Crossbar) -> Result<WeightMatrix> {
    let bits = xbar.programmed_weight_bits().ok_or(Error::NotProgrammed)?;
    WeightMatrix::new(
        xbar.rows(),
        xbar.cols(),
        bits,
        xbar.devices().iter().map(|d| d.state.level as u32).collect(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Readout {
    Ideal,
    Nodal(Termination),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VmmConfig {
    pub dac: DacLevels,
    pub resolution: ResolutionMode,
    pub readout: Readout,
    pub read_noise_sigma: f64,
}

impl VmmConfig {
    /// Linear DAC to 0.3 V, exact ADC, ideal readout, no read noise.
    pub fn new(input_bits: u32) -> Result<Self> {
        Ok(VmmConfig {
            dac: DacLevels::linear(input_bits, DAC_FULL_SCALE)?,
            resolution: ResolutionMode::Exact,
            readout: Readout::Ideal,
            read_noise_sigma: 0.0,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VmmResult {
    pub codes: Vec<u32>,
    pub adc_bits: u32,
    pub analog_currents: ColumnCurrents,
    /// Nominal HRS current subtracted from every column before the ADC.
    pub baseline: f64,
    /// Current of one unit of `input * weight`.
    pub lsb: f64,
}

pub fn vmm(xbar: &mut Crossbar, input: &[u32], cfg: &VmmConfig) -> Result<VmmResult> {
    xbar.require_path(PeripheralPath::Adc)?;
    let w = xbar.programmed_weight_bits().ok_or(Error::NotProgrammed)?;
    if input.len() != xbar.rows() {
        return Err(Error::DimensionMismatch {
            expected: format!("{} input codes", xbar.rows()),
            found: input.len().to_string(),
        });
    }
    let voltages = dac_map(input, &cfg.dac)?;
    let analog = match cfg.readout {
        Readout::Ideal => xbar.column_currents_ideal(&voltages, cfg.read_noise_sigma)?,
        Readout::Nodal(t) => xbar.column_currents_nodal(&voltages, t, cfg.read_noise_sigma)?,
    };

    let cal = xbar.calibration();
    let g_hrs = cal.nominal_hrs_conductance();
    let g_step = (cal.nominal_lrs_conductance() - g_hrs) / ((1u32 << w) - 1) as f64;
    let lsb = g_step * cfg.dac.step();
    let baseline = g_hrs * voltages.iter().sum::<f64>();

    let adc = AdcConfig {
        weight_bits: w,
        input_bits: cfg.dac.bits,
        rows: xbar.rows(),
        full_scale: 1.0,
        resolution: cfg.resolution,
    };
    let adc = AdcConfig { full_scale: lsb * adc.max_code() as f64, ..adc };
    let corrected: Vec<f64> = analog.amps.iter().map(|i| i - baseline).collect();
    let codes = adc_quantize(&corrected, &adc)?;
    Ok(VmmResult { codes, adc_bits: adc.bits(), analog_currents: analog, baseline, lsb })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::DistributionSpec;

    fn ideal_xbar(n: usize, m: usize) -> Crossbar {
        Crossbar::build(n, m, &DistributionSpec::ideal(), 0.0, 0).unwrap()
    }

    fn program(xbar: &mut Crossbar, w: &WeightMatrix) {
        configure_for_weights(xbar, w.bits()).unwrap();
        program_weights(xbar, w).unwrap();
    }

    #[test]
    fn worked_example_decodes_exactly() {
        let mut x = ideal_xbar(4, 4);
        program(&mut x, &WeightMatrix::worked_example());
        let r = vmm(&mut x, &[1, 2, 2, 0], &VmmConfig::new(2).unwrap()).unwrap();
        assert_eq!(r.codes, vec![5, 12, 3, 7]);
        assert_eq!(r.adc_bits, 6);
        let z = vmm(&mut x, &[0, 0, 0, 0], &VmmConfig::new(2).unwrap()).unwrap();
        assert_eq!(z.codes, vec![0; 4]);
    }

    #[test]
    fn paper_resolution_saturates_the_worked_example() {
        let mut x = ideal_xbar(4, 4);
        program(&mut x, &WeightMatrix::worked_example());
        let cfg = VmmConfig { resolution: ResolutionMode::Paper, ..VmmConfig::new(2).unwrap() };
        let r = vmm(&mut x, &[1, 2, 2, 0], &cfg).unwrap();
        assert_eq!(r.adc_bits, 3);
        assert_eq!(r.codes, vec![5, 7, 3, 7]);
    }

    #[test]
    fn programmed_levels_equal_weights() {
        let mut x = ideal_xbar(4, 4);
        let w = WeightMatrix::worked_example();
        program(&mut x, &w);
        assert_eq!(stored_weights(&x).unwrap(), w);
        let zero = WeightMatrix::new(4, 4, 2, vec![0; 16]).unwrap();
        program_weights(&mut x, &zero).unwrap();
        assert!(x.devices().iter().all(|d| d.state.level == 0 && d.state.resistance == d.params.hrs_resistance));
        program_weights(&mut x, &w).unwrap();
        assert_eq!(stored_weights(&x).unwrap(), w);
    }

    #[test]
    fn misuse_is_rejected() {
        let mut x = ideal_xbar(4, 4);
        let w = WeightMatrix::worked_example();
        // binary devices
        assert!(matches!(program_weights(&mut x, &w), Err(Error::DeviceModeMisuse(_))));
        configure_for_weights(&mut x, 2).unwrap();
        let small = WeightMatrix::new(2, 2, 2, vec![0; 4]).unwrap();
        assert!(matches!(program_weights(&mut x, &small), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(vmm(&mut x, &[0; 4], &VmmConfig::new(2).unwrap()), Err(Error::NotProgrammed)));
        program_weights(&mut x, &w).unwrap();
        x.set_mode(Mode::Trng);
        assert!(matches!(vmm(&mut x, &[0; 4], &VmmConfig::new(2).unwrap()), Err(Error::ModeMisuse { .. })));
        assert!(matches!(program_weights(&mut x, &w), Err(Error::ModeMisuse { .. })));
        x.set_mode(Mode::Vmm);
        assert!(vmm(&mut x, &[0; 3], &VmmConfig::new(2).unwrap()).is_err());
        assert!(matches!(vmm(&mut x, &[4, 0, 0, 0], &VmmConfig::new(2).unwrap()), Err(Error::CodeOutOfRange { .. })));
    }

    #[test]
    fn weight_range_checked() {
        assert!(WeightMatrix::new(1, 2, 2, vec![3, 4]).is_err());
        assert!(WeightMatrix::new(1, 2, 2, vec![3]).is_err());
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let w = WeightMatrix::worked_example();
        assert_eq!(w.to_csv().lines().next(), Some("# w=2"));
        assert_eq!(WeightMatrix::from_csv(&w.to_csv()).unwrap(), w);
        assert!(WeightMatrix::from_csv("1,2\n3,4\n").is_err());
        assert!(WeightMatrix::from_csv("# w=2\n1,2\n3\n").is_err());
        assert!(WeightMatrix::from_csv("# w=1\n1,2\n").is_err());
    }
}
