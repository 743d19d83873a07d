//! Sneak-path PUF over a TRNG-initialized binary array, plus the standard
//! quality metrics.
//!
//! A challenge bit of 1 drives its row at [`V_READ`]; a 0 leaves the row
//! floating. Columns sit at virtual ground and each column current (sneak
//! paths included) is compared against a per-column reference fixed at
//! enrollment.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bits::{hamming, ones};
use crate::crossbar::{Crossbar, Mode, PeripheralPath};
use crate::device::{DeviceMode, PulseSpec};
use crate::error::{Error, Result};
use crate::nodal::{column_currents_nodal, ConductanceGrid, Termination};
use crate::peripherals::csa_compare;
use crate::rng::derive_stream;
use crate::trng::{sense_states, switch_all};

pub const V_READ: f64 = 0.2;

/// Monte-Carlo reads per device behind each column reference.
pub const DEFAULT_REFERENCE_SAMPLES: usize = 33;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Challenge {
    pub bits: Vec<bool>,
}

impl Challenge {
    pub fn new(bits: Vec<bool>) -> Self {
        Challenge { bits }
    }

    pub fn random<R: Rng + ?Sized>(rows: usize, rng: &mut R) -> Self {
        Challenge { bits: (0..rows).map(|_| rng.random()).collect() }
    }

    /// Exactly `ceil(rows / 2)` driven rows at random positions.
    pub fn random_balanced<R: Rng + ?Sized>(rows: usize, rng: &mut R) -> Self {
        let mut bits = vec![false; rows];
        for i in sample(rng, rows, rows.div_ceil(2)) {
            bits[i] = true;
        }
        Challenge { bits }
    }

    pub fn voltages(&self) -> Vec<f64> {
        self.bits.iter().map(|&b| if b { V_READ } else { 0.0 }).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Response {
    pub bits: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChallengeResponsePair {
    pub challenge: Challenge,
    pub response: Response,
    pub device_id: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PufMetricsReport {
    pub reliability: f64,
    pub uniqueness: f64,
    pub uniformity: f64,
    pub bit_aliasing: f64,
}

/// Outcome of writing the entropy pattern.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyReport {
    pub ones_fraction: f64,
    /// All devices ended in the same state.
    pub degenerate: bool,
}

/// One TRNG batch written into the array and kept as the PUF's entropy.
///
/// The switching noise comes from the device's own `("entropy-init", 0)`
/// stream, so the same physical array rewrites the same pattern every time.
pub fn initialize_entropy(xbar: &mut Crossbar, p50_pulse: &PulseSpec) -> Result<EntropyReport> {
    xbar.require_mode(Mode::Trng)?;
    if !xbar.all_devices_in(DeviceMode::Binary) {
        return Err(Error::DeviceModeMisuse("entropy needs every device in binary mode".into()));
    }
    let mut rng = derive_stream(xbar.seed(), "entropy-init", 0);
    let bits = switch_all(xbar, p50_pulse, &mut rng)?;
    xbar.entropy_initialized = true;
    xbar.programmed_weight_bits = None;
    let k = ones(&bits);
    Ok(EntropyReport {
        ones_fraction: k as f64 / bits.len() as f64,
        degenerate: k == 0 || k == bits.len(),
    })
}

/// Current binary state pattern, row-major (true = LRS).
pub fn entropy_pattern(xbar: &Crossbar) -> Result<Vec<bool>> {
    sense_states(xbar)
}

/// Per-column CSA references: the median, over `samples` Monte-Carlo reads,
/// of the column current under a random half-driven challenge over a random
/// half-LRS pattern of this array's own devices.
pub fn calibrate_references(xbar: &mut Crossbar, samples: usize) -> Result<Vec<f64>> {
    if samples == 0 {
        return Err(Error::invalid("reference sample count must be >= 1"));
    }
    let (n, m) = (xbar.rows(), xbar.cols());
    let mut rng = derive_stream(xbar.seed(), "csa-reference", 0);
    let mut per_col: Vec<Vec<f64>> = vec![Vec::with_capacity(samples); m];
    for _ in 0..samples {
        let lrs = sample(&mut rng, n * m, n * m / 2);
        let mut g: Vec<f64> = xbar.devices().iter().map(|d| 1.0 / d.params.hrs_resistance).collect();
        for k in lrs {
            g[k] = 1.0 / xbar.devices()[k].params.lrs_resistance;
        }
        let grid = ConductanceGrid::new(n, m, g)?;
        let c = Challenge::random_balanced(n, &mut rng);
        let i = column_currents_nodal(&grid, xbar.line_resistance(), &c.voltages(), Termination::FloatingUnselected)?;
        for (col, a) in per_col.iter_mut().zip(i.amps) {
            col.push(a);
        }
    }
    let refs: Vec<f64> = per_col
        .into_iter()
        .map(|mut v| {
            v.sort_by(f64::total_cmp);
            let k = v.len();
            if k % 2 == 1 {
                v[k / 2]
            } else {
                0.5 * (v[k / 2 - 1] + v[k / 2])
            }
        })
        .collect();
    xbar.csa_reference = Some(refs.clone());
    Ok(refs)
}

/// Apply a challenge and read the response. Device states are not touched.
pub fn evaluate(xbar: &mut Crossbar, challenge: &Challenge, read_noise_sigma: f64) -> Result<Response> {
    xbar.require_path(PeripheralPath::Csa)?;
    xbar.require_mode(Mode::Puf)?;
    if !xbar.is_entropy_initialized() {
        return Err(Error::EntropyUninitialized);
    }
    if challenge.bits.len() != xbar.rows() {
        return Err(Error::DimensionMismatch {
            expected: format!("{}-bit challenge", xbar.rows()),
            found: challenge.bits.len().to_string(),
        });
    }
    let refs = xbar.csa_reference().ok_or(Error::NotEnrolled)?.to_vec();
    let currents = xbar.column_currents_nodal(&challenge.voltages(), Termination::FloatingUnselected, read_noise_sigma)?;
    Ok(Response { bits: csa_compare(&currents.amps, &refs)? })
}

/// Binary devices, entropy written, references computed, left in PUF mode.
pub fn enroll_device(xbar: &mut Crossbar, p50_pulse: &PulseSpec, reference_samples: usize) -> Result<EntropyReport> {
    xbar.configure_devices(DeviceMode::Binary)?;
    xbar.set_mode(Mode::Trng);
    let report = initialize_entropy(xbar, p50_pulse)?;
    xbar.set_mode(Mode::Puf);
    calibrate_references(xbar, reference_samples)?;
    Ok(report)
}

/// Metrics over an enrolled population. The first repeat of every
/// (device, challenge) is the reference for reliability and the response
/// used for the inter-device metrics.
pub fn compute_metrics(
    population: &mut [Crossbar],
    challenges: &[Challenge],
    repeats: usize,
    read_noise_sigma: f64,
) -> Result<PufMetricsReport> {
    if population.len() < 2 {
        return Err(Error::InsufficientPopulation("need at least 2 crossbars".into()));
    }
    if challenges.is_empty() {
        return Err(Error::InsufficientPopulation("need at least 1 challenge".into()));
    }
    if repeats < 2 {
        return Err(Error::InsufficientPopulation("need at least 2 repeats".into()));
    }
    let m = population[0].cols();
    if population.iter().any(|x| x.cols() != m || x.rows() != population[0].rows()) {
        return Err(Error::invalid("population crossbars differ in size"));
    }

    // responses[d][c]
    let mut responses = Vec::with_capacity(population.len());
    let mut intra = (0usize, 0usize);
    for xbar in population.iter_mut() {
        let mut first = Vec::with_capacity(challenges.len());
        for c in challenges {
            let r0 = evaluate(xbar, c, read_noise_sigma)?.bits;
            for _ in 1..repeats {
                let r = evaluate(xbar, c, read_noise_sigma)?.bits;
                intra.0 += hamming(&r0, &r);
                intra.1 += m;
            }
            first.push(r0);
        }
        responses.push(first);
    }

    let d = responses.len();
    let mut inter = (0usize, 0usize);
    for a in 0..d {
        for b in a + 1..d {
            for (ra, rb) in responses[a].iter().zip(&responses[b]) {
                inter.0 += hamming(ra, rb);
                inter.1 += m;
            }
        }
    }
    let total_ones: usize = responses.iter().flatten().map(|r| ones(r)).sum();
    let total_bits = d * challenges.len() * m;

    let mut aliasing = 0.0;
    for c in 0..challenges.len() {
        for j in 0..m {
            let k = responses.iter().filter(|dev| dev[c][j]).count();
            aliasing += k as f64 / d as f64;
        }
    }
    aliasing /= (challenges.len() * m) as f64;

    Ok(PufMetricsReport {
        reliability: 100.0 * (1.0 - intra.0 as f64 / intra.1 as f64),
        uniqueness: 100.0 * inter.0 as f64 / inter.1 as f64,
        uniformity: 100.0 * total_ones as f64 / total_bits as f64,
        bit_aliasing: 100.0 * aliasing,
    })
}
