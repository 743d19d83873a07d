use std::fmt;

use serde::{Deserialize, Serialize};

use crate::calibration::{DistributionSpec, FittedDistributions};
use crate::device::{sample_params, Device, DeviceMode, DeviceState};
use crate::error::{Error, Result};
use crate::nodal::{self, ColumnCurrents, ConductanceGrid, Termination};
use crate::rng::{derive_stream, RandomStream, StreamState};

/// Wire resistance per cell pitch used by the experiment defaults, ohms.
pub const DEFAULT_LINE_RESISTANCE: f64 = 1.0;

/// Peripheral routing selected by the output DeMUX.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Mode {
    #[default]
    Vmm,
    Trng,
    Puf,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Vmm => "vmm",
            Mode::Trng => "trng",
            Mode::Puf => "puf",
        })
    }
}

impl Mode {
    pub fn path(&self) -> PeripheralPath {
        match self {
            Mode::Vmm => PeripheralPath::Adc,
            Mode::Trng | Mode::Puf => PeripheralPath::Csa,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PeripheralPath {
    Adc,
    /// Comparator output, ADC bypassed.
    Csa,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossbarSnapshot {
    pub rows: usize,
    pub cols: usize,
    pub seed: u64,
    pub line_resistance: f64,
    pub calibration: DistributionSpec,
    pub devices: Vec<Device>,
    pub mode: Mode,
    pub stream: StreamState,
    pub entropy_initialized: bool,
    pub csa_reference: Option<Vec<f64>>,
    pub programmed_weight_bits: Option<u32>,
    pub trng_generation: u64,
}

/// An `rows x cols` passive array with its peripherals and its own
/// cycle-to-cycle random stream.
#[derive(Debug, Clone)]
pub struct Crossbar {
    rows: usize,
    cols: usize,
    seed: u64,
    line_resistance: f64,
    calibration: DistributionSpec,
    devices: Vec<Device>,
    mode: Mode,
    rng: RandomStream,
    pub(crate) entropy_initialized: bool,
    pub(crate) csa_reference: Option<Vec<f64>>,
    pub(crate) programmed_weight_bits: Option<u32>,
    pub(crate) trng_generation: u64,
}

impl Crossbar {
    /// Sample `rows * cols` devices; device `k` (row-major) draws from the
    /// child stream `("device", k)` of `seed`.
    pub fn build(
        rows: usize,
        cols: usize,
        calibration: &DistributionSpec,
        line_resistance: f64,
        seed: u64,
    ) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::invalid("crossbar dimensions must be >= 1"));
        }
        if !(line_resistance >= 0.0 && line_resistance.is_finite()) {
            return Err(Error::invalid("line resistance must be finite and >= 0"));
        }
        let dist = FittedDistributions::new(calibration)?;
        let devices = (0..rows * cols)
            .map(|k| {
                let mut rng = derive_stream(seed, "device", k as u64);
                Device::new(sample_params(&dist, &mut rng))
            })
            .collect();
        Ok(Crossbar {
            rows,
            cols,
            seed,
            line_resistance,
            calibration: calibration.clone(),
            devices,
            mode: Mode::default(),
            rng: derive_stream(seed, "runtime", 0),
            entropy_initialized: false,
            csa_reference: None,
            programmed_weight_bits: None,
            trng_generation: 0,
        })
    }

    /// Every field needed to restore this array bit-exactly.
    pub fn snapshot(&self) -> CrossbarSnapshot {
        CrossbarSnapshot {
            rows: self.rows,
            cols: self.cols,
            seed: self.seed,
            line_resistance: self.line_resistance,
            calibration: self.calibration.clone(),
            devices: self.devices.clone(),
            mode: self.mode,
            stream: StreamState::capture(&self.rng),
            entropy_initialized: self.entropy_initialized,
            csa_reference: self.csa_reference.clone(),
            programmed_weight_bits: self.programmed_weight_bits,
            trng_generation: self.trng_generation,
        }
    }

    pub fn from_snapshot(s: CrossbarSnapshot) -> Result<Self> {
        if s.rows == 0 || s.cols == 0 || s.devices.len() != s.rows * s.cols {
            return Err(Error::format("device count does not match dimensions"));
        }
        if !(s.line_resistance >= 0.0 && s.line_resistance.is_finite()) {
            return Err(Error::format("line resistance must be finite and >= 0"));
        }
        if s.csa_reference.as_ref().is_some_and(|r| r.len() != s.cols) {
            return Err(Error::format("one CSA reference per column expected"));
        }
        s.calibration.validate()?;
        for d in &s.devices {
            d.params.check().map_err(|e| Error::format(e.to_string()))?;
        }
        Ok(Crossbar {
            rows: s.rows,
            cols: s.cols,
            seed: s.seed,
            line_resistance: s.line_resistance,
            calibration: s.calibration,
            devices: s.devices,
            mode: s.mode,
            rng: s.stream.restore(),
            entropy_initialized: s.entropy_initialized,
            csa_reference: s.csa_reference,
            programmed_weight_bits: s.programmed_weight_bits,
            trng_generation: s.trng_generation,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn line_resistance(&self) -> f64 {
        self.line_resistance
    }

    pub fn calibration(&self) -> &DistributionSpec {
        &self.calibration
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn devices(&self) -> &[Device] {
        &self.devices
    }

    pub fn device(&self, i: usize, j: usize) -> &Device {
        &self.devices[i * self.cols + j]
    }

    pub(crate) fn devices_mut(&mut self) -> &mut [Device] {
        &mut self.devices
    }

    pub(crate) fn rng_mut(&mut self) -> &mut RandomStream {
        &mut self.rng
    }

    /// Position of the cycle-to-cycle stream.
    pub fn stream_state(&self) -> StreamState {
        StreamState::capture(&self.rng)
    }

    pub fn restore_stream(&mut self, state: &StreamState) {
        self.rng = state.restore();
    }

    /// Split borrow for operations that mutate devices with the runtime stream.
    pub(crate) fn devices_and_rng(&mut self) -> (&mut [Device], &mut RandomStream) {
        (&mut self.devices, &mut self.rng)
    }

    #[cfg(test)]
    pub(crate) fn runtime_stream(&self) -> &RandomStream {
        &self.rng
    }

    pub fn states(&self) -> Vec<DeviceState> {
        self.devices.iter().map(|d| d.state).collect()
    }

    pub fn is_entropy_initialized(&self) -> bool {
        self.entropy_initialized
    }

    pub fn csa_reference(&self) -> Option<&[f64]> {
        self.csa_reference.as_deref()
    }

    pub fn programmed_weight_bits(&self) -> Option<u32> {
        self.programmed_weight_bits
    }

    /// Number of TRNG batches generated so far.
    pub fn trng_generation(&self) -> u64 {
        self.trng_generation
    }

    /// Switch the DeMUX. Device states are untouched.
    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    pub fn require_mode(&self, expected: Mode) -> Result<()> {
        if self.mode != expected {
            return Err(Error::ModeMisuse { expected, actual: self.mode });
        }
        Ok(())
    }

    /// Reject reads through a peripheral the current mode does not route to.
    pub fn require_path(&self, path: PeripheralPath) -> Result<()> {
        if self.mode.path() != path {
            let expected = match path {
                PeripheralPath::Adc => Mode::Vmm,
                PeripheralPath::Csa => Mode::Puf,
            };
            return Err(Error::ModeMisuse { expected, actual: self.mode });
        }
        Ok(())
    }

    /// Reconfigure every device (binary or multi-state). All devices land in
    /// HRS, so stored entropy and weights are discarded.
    pub fn configure_devices(&mut self, mode: DeviceMode) -> Result<()> {
        for d in &mut self.devices {
            d.configure(mode)?;
        }
        self.entropy_initialized = false;
        self.programmed_weight_bits = None;
        Ok(())
    }

    pub fn all_devices_in(&self, mode: DeviceMode) -> bool {
        self.devices.iter().all(|d| d.state.mode == mode)
    }

    /// Read every device once. Noise draws come from the runtime stream only
    /// when `read_noise_sigma > 0`.
    pub fn read_conductances(&mut self, read_noise_sigma: f64) -> Result<ConductanceGrid> {
        if !(read_noise_sigma >= 0.0) {
            return Err(Error::invalid("read noise sigma must be >= 0"));
        }
        let g = if read_noise_sigma == 0.0 {
            self.devices.iter().map(Device::conductance).collect()
        } else {
            let (devices, rng) = (&self.devices, &mut self.rng);
            devices.iter().map(|d| d.read_conductance(read_noise_sigma, rng)).collect()
        };
        ConductanceGrid::new(self.rows, self.cols, g)
    }

    pub fn column_currents_ideal(&mut self, voltages: &[f64], read_noise_sigma: f64) -> Result<ColumnCurrents> {
        let grid = self.read_conductances(read_noise_sigma)?;
        nodal::column_currents_ideal(&grid, voltages)
    }

    pub fn column_currents_nodal(
        &mut self,
        voltages: &[f64],
        termination: Termination,
        read_noise_sigma: f64,
    ) -> Result<ColumnCurrents> {
        let grid = self.read_conductances(read_noise_sigma)?;
        nodal::column_currents_nodal(&grid, self.line_resistance, voltages, termination)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::LevelMap;

    #[test]
    fn build_is_deterministic_in_seed() {
        let p = DistributionSpec::paper_2023();
        let a = Crossbar::build(16, 16, &p, 0.0, 42).unwrap();
        let b = Crossbar::build(16, 16, &p, 0.0, 42).unwrap();
        let c = Crossbar::build(16, 16, &p, 0.0, 43).unwrap();
        assert_eq!(a.devices().len(), 256);
        assert_eq!(a.devices(), b.devices());
        assert_ne!(a.devices(), c.devices());
    }

    #[test]
    fn minimal_and_degenerate_builds() {
        let p = DistributionSpec::paper_2023();
        assert_eq!(Crossbar::build(1, 1, &p, 0.0, 0).unwrap().devices().len(), 1);
        assert!(Crossbar::build(0, 4, &p, 0.0, 0).is_err());
        assert!(Crossbar::build(4, 0, &p, 0.0, 0).is_err());
        assert!(Crossbar::build(2, 2, &p, -1.0, 0).is_err());
    }

    #[test]
    fn ideal_profile_gives_identical_devices() {
        let x = Crossbar::build(4, 4, &DistributionSpec::ideal(), 0.0, 5).unwrap();
        assert!(x.devices().windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn peripheral_routing_follows_mode() {
        let mut x = Crossbar::build(2, 2, &DistributionSpec::paper_2023(), 0.0, 1).unwrap();
        assert!(x.require_path(PeripheralPath::Adc).is_ok());
        x.set_mode(Mode::Trng);
        assert!(matches!(x.require_path(PeripheralPath::Adc), Err(Error::ModeMisuse { .. })));
        x.set_mode(Mode::Puf);
        assert!(x.require_path(PeripheralPath::Csa).is_ok());
        assert!(x.require_path(PeripheralPath::Adc).is_err());
    }

    #[test]
    fn mode_round_trip_preserves_states() {
        let mut x = Crossbar::build(4, 4, &DistributionSpec::paper_2023(), 0.0, 2).unwrap();
        x.configure_devices(DeviceMode::Multistate { levels: 4, map: LevelMap::Geometric }).unwrap();
        let mut rng = derive_stream(0, "t", 0);
        for (k, d) in x.devices_mut().iter_mut().enumerate() {
            d.program_level((k % 4) as u16, &mut rng).unwrap();
        }
        let before = x.states();
        x.set_mode(Mode::Puf);
        x.set_mode(Mode::Vmm);
        assert_eq!(before, x.states());
    }

    #[test]
    fn noiseless_reads_leave_stream_untouched() {
        let mut x = Crossbar::build(3, 3, &DistributionSpec::paper_2023(), 0.0, 2).unwrap();
        let before = x.runtime_stream().get_word_pos();
        x.read_conductances(0.0).unwrap();
        assert_eq!(before, x.runtime_stream().get_word_pos());
        x.read_conductances(0.01).unwrap();
        assert_ne!(before, x.runtime_stream().get_word_pos());
    }
}
