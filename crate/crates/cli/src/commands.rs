//! Command implementations. Each one loads its inputs, validates them before
//! touching any crossbar, and writes crossbar state back only through
//! [`Persist`].

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rram_core::bits::{bits_to_hex, hamming, pack_bits};
use rram_core::crossbar::DEFAULT_LINE_RESISTANCE;
use rram_core::crp_store::CrpStore;
use rram_core::device::DeviceMode;
use rram_core::locking::{
    enroll_and_lock, entropy_mismatches, unlock_with_record, EncryptedWeightBundle, EnrollmentRecord, ProtocolConfig,
};
use rram_core::nodal::Termination;
use rram_core::peripherals::ResolutionMode;
use rram_core::puf::{
    compute_metrics, enroll_device, entropy_pattern, evaluate, Challenge, ChallengeResponsePair, PufMetricsReport,
    DEFAULT_REFERENCE_SAMPLES,
};
use rram_core::rng::{child_seed, derive_stream};
use rram_core::trng::{bit_statistics, calibrate_p50_for_crossbar, harvest_stream};
use rram_core::vmm::{configure_for_weights, program_weights, stored_weights, vmm, Readout, VmmConfig, WeightMatrix};
use rram_core::{xbar_file, Crossbar, DistributionSpec, Error, Mode};
use serde_json::json;

use crate::*;

pub const EQ1_INPUT: [u32; 4] = [1, 2, 2, 0];
pub const EQ1_EXPECTED: [u32; 4] = [5, 12, 3, 7];

/// Published reference values, in percent.
pub const METRIC_TARGETS: PufMetricsReport =
    PufMetricsReport { reliability: 100.0, uniqueness: 47.78, uniformity: 49.79, bit_aliasing: 48.57 };

pub fn dispatch(cli: &Cli) -> CliResult<Report> {
    if !(cli.noise >= 0.0 && cli.noise.is_finite()) {
        return Err(CliError::Usage(format!("--noise must be finite and >= 0, got {}", cli.noise)));
    }
    match &cli.command {
        Command::DemoEq1 => demo_eq1(cli.seed, cli.noise),
        Command::Trng(TrngCmd::Gen(a)) => trng_gen(cli, a),
        Command::Puf(PufCmd::Enroll(a)) => puf_enroll(cli, a),
        Command::Puf(PufCmd::Eval(a)) => puf_eval(cli, a),
        Command::Puf(PufCmd::Metrics(a)) => puf_metrics(cli, a),
        Command::Vmm(VmmCmd::Program(a)) => vmm_program(a),
        Command::Vmm(VmmCmd::Run(a)) => vmm_run(cli, a),
        Command::Lock(a) => lock(cli, a),
        Command::Unlock(a) => unlock(cli, a),
        Command::Xbar(XbarCmd::New(a)) => xbar_new(cli, a),
        Command::Xbar(XbarCmd::Inspect(a)) => xbar_inspect(a),
    }
}

fn ok(text: String, json: serde_json::Value) -> CliResult<Report> {
    Ok(Report { text, json, check_failed: false })
}

fn bitstr(bits: &[bool]) -> String {
    bits.iter().map(|&b| if b { '1' } else { '0' }).collect()
}

fn parse_bitstr(s: &str, len: usize) -> CliResult<Vec<bool>> {
    let bits: Option<Vec<bool>> = s
        .chars()
        .map(|c| match c {
            '0' => Some(false),
            '1' => Some(true),
            _ => None,
        })
        .collect();
    match bits {
        Some(b) if b.len() == len => Ok(b),
        _ => Err(CliError::Usage(format!("challenge '{s}' must be {len} characters of 0/1"))),
    }
}

fn parse_codes(s: &str) -> CliResult<Vec<u32>> {
    s.split(',')
        .map(|t| t.trim().parse::<u32>().map_err(|_| CliError::Usage(format!("bad input code '{t}'"))))
        .collect()
}

fn now() -> u64 {
    std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(suffix);
    PathBuf::from(s)
}

fn is_json(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

fn save_xbar(x: &Crossbar, path: &Path) -> CliResult<()> {
    if is_json(path) {
        xbar_file::save_json(x, path)?;
    } else {
        xbar_file::save(x, path)?;
    }
    Ok(())
}

/// Write `x` where the flags say; returns the path written, if any.
fn persist(x: &Crossbar, input: &Path, p: &Persist) -> CliResult<Option<PathBuf>> {
    let target = match (&p.xbar_out, p.in_place) {
        (Some(out), _) => out.clone(),
        (None, true) => input.to_path_buf(),
        (None, false) => return Ok(None),
    };
    save_xbar(x, &target)?;
    Ok(Some(target))
}

fn persist_line(text: &mut String, written: &Option<PathBuf>) {
    match written {
        Some(p) => writeln!(text, "crossbar written to {}", p.display()).unwrap(),
        None => writeln!(text, "crossbar file unchanged").unwrap(),
    }
}

fn persist_json(written: &Option<PathBuf>) -> serde_json::Value {
    json!(written.as_ref().map(|p| p.display().to_string()))
}

/// The 4x4 worked example on ideal devices with an exact ADC.
pub fn demo_eq1(seed: u64, noise: f64) -> CliResult<Report> {
    let w = WeightMatrix::worked_example();
    let mut x = Crossbar::build(4, 4, &DistributionSpec::ideal(), 0.0, seed)?;
    configure_for_weights(&mut x, w.bits())?;
    program_weights(&mut x, &w)?;
    let mut cfg = VmmConfig::new(2)?;
    cfg.read_noise_sigma = noise;
    let r = vmm(&mut x, &EQ1_INPUT, &cfg)?;
    let errors = r.codes.iter().zip(EQ1_EXPECTED).filter(|(a, b)| **a != *b).count();

    let mut t = String::new();
    writeln!(t, "weights ({}-bit)", w.bits()).unwrap();
    for i in 0..w.rows() {
        let row: Vec<String> = (0..w.cols()).map(|j| w.get(i, j).to_string()).collect();
        writeln!(t, "  {}", row.join(" ")).unwrap();
    }
    writeln!(t, "input      {:?}", EQ1_INPUT).unwrap();
    writeln!(t, "output     {:?}", r.codes).unwrap();
    writeln!(t, "expected   {:?}", EQ1_EXPECTED).unwrap();
    writeln!(t, "adc        {} bits, exact", r.adc_bits).unwrap();
    writeln!(t, "read noise {noise}").unwrap();
    let status = if noise > 0.0 {
        writeln!(t, "errors     {errors} of {}", EQ1_EXPECTED.len()).unwrap();
        "unchecked"
    } else if errors == 0 {
        writeln!(t, "result     PASS").unwrap();
        "pass"
    } else {
        writeln!(t, "result     FAIL ({errors} of {} columns wrong)", EQ1_EXPECTED.len()).unwrap();
        "fail"
    };
    let json = json!({
        "command": "demo-eq1",
        "seed": seed,
        "read_noise": noise,
        "input": EQ1_INPUT,
        "output": r.codes,
        "expected": EQ1_EXPECTED,
        "adc_bits": r.adc_bits,
        "errors": errors,
        "status": status,
    });
    Ok(Report { text: t, json, check_failed: status == "fail" })
}

fn trng_gen(cli: &Cli, a: &TrngGenArgs) -> CliResult<Report> {
    let mut x = xbar_file::load(&a.xbar)?;
    x.set_mode(Mode::Trng);
    let pulse = calibrate_p50_for_crossbar(&x)?;
    let bits = harvest_stream(&mut x, &pulse, a.bits, a.fold)?;
    let st = bit_statistics(&bits);
    let expected_runs = 1.0 + (st.len as f64 - 1.0) / 2.0;

    let mut t = String::new();
    writeln!(t, "bits          {}", st.len).unwrap();
    writeln!(t, "xor fold      {}", a.fold).unwrap();
    writeln!(t, "pulse         {:.6} V, {} ns", pulse.amplitude, pulse.width_ns).unwrap();
    writeln!(t, "ones fraction {:.6}", st.ones_fraction).unwrap();
    writeln!(t, "bias          {:+.6}", st.ones_fraction - 0.5).unwrap();
    writeln!(t, "runs          {} (fair coin expects {:.1})", st.runs, expected_runs).unwrap();
    writeln!(t, "longest run   {}", st.longest_run).unwrap();
    writeln!(t, "lag-1 autocorrelation {:+.6}", st.lag1_autocorrelation).unwrap();
    writeln!(t, "output        {} ({} bytes, MSB first)", a.out.display(), st.len.div_ceil(8)).unwrap();

    std::fs::write(&a.out, pack_bits(&bits))?;
    let written = persist(&x, &a.xbar, &a.persist)?;
    persist_line(&mut t, &written);
    let json = json!({
        "command": "trng gen",
        "seed": cli.seed,
        "bits": st.len,
        "fold": a.fold,
        "pulse_amplitude": pulse.amplitude,
        "pulse_width_ns": pulse.width_ns,
        "ones_fraction": st.ones_fraction,
        "bias": st.ones_fraction - 0.5,
        "runs": st.runs,
        "expected_runs": expected_runs,
        "longest_run": st.longest_run,
        "lag1_autocorrelation": st.lag1_autocorrelation,
        "trng_generation": x.trng_generation(),
        "crossbar_written": persist_json(&written),
    });
    std::fs::write(with_suffix(&a.out, ".txt"), &t)?;
    std::fs::write(with_suffix(&a.out, ".json"), json_text(&json))?;
    ok(t, json)
}

fn puf_enroll(cli: &Cli, a: &PufEnrollArgs) -> CliResult<Report> {
    let mut x = xbar_file::load(&a.xbar)?;
    let pulse = calibrate_p50_for_crossbar(&x)?;
    let entropy = enroll_device(&mut x, &pulse, a.reference_samples)?;
    let mut rng = derive_stream(cli.seed, "puf-enroll", 0);
    let mut crps = Vec::with_capacity(a.challenges);
    for _ in 0..a.challenges {
        let challenge = Challenge::random_balanced(x.rows(), &mut rng);
        let response = evaluate(&mut x, &challenge, cli.noise)?;
        crps.push(ChallengeResponsePair { challenge, response, device_id: a.device_id.clone() });
    }
    let record = EnrollmentRecord { device_id: a.device_id.clone(), entropy: entropy_pattern(&x)?, crps };
    let ts = a.timestamp.unwrap_or_else(now);
    if let Some(s) = &a.store {
        CrpStore::new(s).append_enrollment(&record, ts)?;
    }
    let written = persist(&x, &a.xbar, &a.persist)?;

    let mut t = String::new();
    writeln!(t, "device        {}", a.device_id).unwrap();
    writeln!(t, "crossbar      {} x {}", x.rows(), x.cols()).unwrap();
    writeln!(t, "pulse         {:.6} V", pulse.amplitude).unwrap();
    writeln!(t, "entropy ones  {:.4}{}", entropy.ones_fraction, if entropy.degenerate { " (degenerate)" } else { "" })
        .unwrap();
    writeln!(t, "references    {} samples per column", a.reference_samples).unwrap();
    for p in &record.crps {
        writeln!(t, "crp           {} -> {}", bitstr(&p.challenge.bits), bitstr(&p.response.bits)).unwrap();
    }
    match &a.store {
        Some(s) => writeln!(t, "store         {} ({} CRPs appended)", s.display(), record.crps.len()).unwrap(),
        None => writeln!(t, "store         none").unwrap(),
    }
    persist_line(&mut t, &written);
    let json = json!({
        "command": "puf enroll",
        "seed": cli.seed,
        "device_id": a.device_id,
        "pulse_amplitude": pulse.amplitude,
        "entropy_ones_fraction": entropy.ones_fraction,
        "entropy_degenerate": entropy.degenerate,
        "entropy": bits_to_hex(&record.entropy),
        "reference_samples": a.reference_samples,
        "crps": record.crps.iter().map(|p| json!({
            "challenge": bits_to_hex(&p.challenge.bits),
            "response": bits_to_hex(&p.response.bits),
        })).collect::<Vec<_>>(),
        "crossbar_written": persist_json(&written),
    });
    ok(t, json)
}

fn puf_eval(cli: &Cli, a: &PufEvalArgs) -> CliResult<Report> {
    let mut x = xbar_file::load(&a.xbar)?;
    let mut jobs: Vec<(Challenge, Option<Vec<bool>>)> = Vec::new();
    for s in &a.challenges {
        jobs.push((Challenge::new(parse_bitstr(s, x.rows())?), None));
    }
    let mut rng = derive_stream(cli.seed, "puf-eval", 0);
    for _ in 0..a.random {
        jobs.push((Challenge::random_balanced(x.rows(), &mut rng), None));
    }
    if let (Some(store), Some(id)) = (&a.store, &a.device_id) {
        let rec = CrpStore::new(store)
            .enrollment(id)?
            .ok_or_else(|| CliError::Usage(format!("no enrollment for '{id}' in {}", store.display())))?;
        for p in rec.crps {
            if p.challenge.bits.len() != x.rows() {
                return Err(Error::DimensionMismatch {
                    expected: format!("{}-bit challenges", x.rows()),
                    found: p.challenge.bits.len().to_string(),
                }
                .into());
            }
            jobs.push((p.challenge, Some(p.response.bits)));
        }
    }
    if jobs.is_empty() {
        return Err(CliError::Usage("no challenges: use --challenge, --random or --store".into()));
    }

    let mut t = String::new();
    let mut rows = Vec::with_capacity(jobs.len());
    let (mut compared, mut differing) = (0usize, 0usize);
    for (c, expected) in &jobs {
        let r = evaluate(&mut x, c, cli.noise)?;
        let mut line = format!("{} -> {}", bitstr(&c.bits), bitstr(&r.bits));
        let distance = expected.as_ref().map(|e| hamming(e, &r.bits));
        if let (Some(e), Some(d)) = (expected, distance) {
            compared += e.len();
            differing += d;
            write!(line, "  enrolled {}  distance {d}", bitstr(e)).unwrap();
        }
        writeln!(t, "{line}").unwrap();
        rows.push(json!({
            "challenge": bits_to_hex(&c.bits),
            "response": bits_to_hex(&r.bits),
            "enrolled": expected.as_ref().map(|e| bits_to_hex(e)),
            "distance": distance,
        }));
    }
    if compared > 0 {
        writeln!(t, "enrolled bits matched {} of {}", compared - differing, compared).unwrap();
    }
    let written = persist(&x, &a.xbar, &a.persist)?;
    persist_line(&mut t, &written);
    let json = json!({
        "command": "puf eval",
        "seed": cli.seed,
        "read_noise": cli.noise,
        "evaluations": rows,
        "compared_bits": compared,
        "differing_bits": differing,
        "crossbar_written": persist_json(&written),
    });
    ok(t, json)
}

/// Parameters of a generated metrics run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRun {
    pub size: usize,
    pub rows: usize,
    pub cols: usize,
    pub challenges: usize,
    pub repeats: usize,
    pub seed: u64,
    pub noise: f64,
}

impl MetricsRun {
    pub fn desk_scale(seed: u64) -> Self {
        MetricsRun { size: 50, rows: 16, cols: 16, challenges: 100, repeats: 10, seed, noise: 0.0 }
    }
}

fn metric_challenges(seed: u64, rows: usize, count: usize) -> Vec<Challenge> {
    let mut rng = derive_stream(seed, "metric-challenges", 0);
    (0..count).map(|_| Challenge::random_balanced(rows, &mut rng)).collect()
}

/// Enroll a fresh population (member `k` seeded with `child_seed(seed,
/// "population", k)`) and evaluate balanced challenges on it.
pub fn reproduce_metrics(spec: &DistributionSpec, run: &MetricsRun) -> CliResult<PufMetricsReport> {
    if run.size < 2 {
        return Err(Error::InsufficientPopulation("population size must be >= 2".into()).into());
    }
    let mut pop = Vec::with_capacity(run.size);
    for k in 0..run.size {
        let seed = child_seed(run.seed, "population", k as u64);
        let mut x = Crossbar::build(run.rows, run.cols, spec, DEFAULT_LINE_RESISTANCE, seed)?;
        let pulse = calibrate_p50_for_crossbar(&x)?;
        enroll_device(&mut x, &pulse, DEFAULT_REFERENCE_SAMPLES)?;
        pop.push(x);
    }
    let challenges = metric_challenges(run.seed, run.rows, run.challenges);
    Ok(compute_metrics(&mut pop, &challenges, run.repeats, run.noise)?)
}

/// Measured metrics next to the published targets.
pub fn metrics_table(m: &PufMetricsReport) -> String {
    let t = METRIC_TARGETS;
    let mut s = String::from("metric          measured   target\n");
    for (name, v, target) in [
        ("reliability", m.reliability, t.reliability),
        ("uniqueness", m.uniqueness, t.uniqueness),
        ("uniformity", m.uniformity, t.uniformity),
        ("bit-aliasing", m.bit_aliasing, t.bit_aliasing),
    ] {
        writeln!(s, "{name:<14} {v:>9.2}% {target:>7.2}%").unwrap();
    }
    s
}

fn metrics_json(m: &PufMetricsReport) -> serde_json::Value {
    json!({
        "reliability": m.reliability,
        "uniqueness": m.uniqueness,
        "uniformity": m.uniformity,
        "bit_aliasing": m.bit_aliasing,
    })
}

fn puf_metrics(cli: &Cli, a: &PufMetricsArgs) -> CliResult<Report> {
    let (m, source, size, rows, cols) = match &a.population {
        Some(dir) => {
            let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
                .map(|e| e.map(|e| e.path()))
                .collect::<Result<_, _>>()?;
            files.retain(|p| p.extension().is_some_and(|e| e == "xbar"));
            files.sort();
            let mut pop = files.iter().map(xbar_file::load).collect::<Result<Vec<_>, _>>()?;
            if pop.is_empty() {
                return Err(CliError::Usage(format!("no .xbar files in {}", dir.display())));
            }
            let (rows, cols) = (pop[0].rows(), pop[0].cols());
            let challenges = metric_challenges(cli.seed, rows, a.challenges);
            let m = compute_metrics(&mut pop, &challenges, a.repeats, cli.noise)?;
            (m, dir.display().to_string(), pop.len(), rows, cols)
        }
        None => {
            let spec = DistributionSpec::resolve(&cli.profile)?;
            let run = MetricsRun {
                size: a.size,
                rows: a.rows,
                cols: a.cols,
                challenges: a.challenges,
                repeats: a.repeats,
                seed: cli.seed,
                noise: cli.noise,
            };
            (reproduce_metrics(&spec, &run)?, format!("generated ({})", spec.name), a.size, a.rows, a.cols)
        }
    };
    let mut t = String::new();
    writeln!(t, "population    {size} crossbars of {rows} x {cols}, {source}").unwrap();
    writeln!(t, "challenges    {} balanced, {} repeats, read noise {}", a.challenges, a.repeats, cli.noise).unwrap();
    t.push_str(&metrics_table(&m));
    let json = json!({
        "command": "puf metrics",
        "seed": cli.seed,
        "population": source,
        "size": size,
        "rows": rows,
        "cols": cols,
        "challenges": a.challenges,
        "repeats": a.repeats,
        "read_noise": cli.noise,
        "measured": metrics_json(&m),
        "target": metrics_json(&METRIC_TARGETS),
    });
    ok(t, json)
}

fn program(x: &mut Crossbar, w: &WeightMatrix) -> CliResult<()> {
    x.set_mode(Mode::Vmm);
    configure_for_weights(x, w.bits())?;
    program_weights(x, w)?;
    Ok(())
}

fn vmm_program(a: &VmmProgramArgs) -> CliResult<Report> {
    let w = WeightMatrix::load(&a.weights)?;
    let mut x = xbar_file::load(&a.xbar)?;
    program(&mut x, &w)?;
    let readback = stored_weights(&x)? == w;
    let written = persist(&x, &a.xbar, &a.persist)?;
    let mut t = String::new();
    writeln!(t, "programmed    {} x {} weights, {}-bit ({} levels)", w.rows(), w.cols(), w.bits(), 1u32 << w.bits())
        .unwrap();
    writeln!(t, "level readback {}", if readback { "matches" } else { "differs" }).unwrap();
    persist_line(&mut t, &written);
    let json = json!({
        "command": "vmm program",
        "rows": w.rows(),
        "cols": w.cols(),
        "weight_bits": w.bits(),
        "readback_matches": readback,
        "crossbar_written": persist_json(&written),
    });
    ok(t, json)
}

fn vmm_run(cli: &Cli, a: &VmmRunArgs) -> CliResult<Report> {
    let input = parse_codes(&a.input)?;
    let weights = a.weights.as_ref().map(WeightMatrix::load).transpose()?;
    let mut x = xbar_file::load(&a.xbar)?;
    if let Some(w) = &weights {
        program(&mut x, w)?;
    }
    let mut cfg = VmmConfig::new(a.input_bits)?;
    cfg.resolution = match a.adc {
        AdcMode::Exact => ResolutionMode::Exact,
        AdcMode::Paper => ResolutionMode::Paper,
    };
    cfg.readout = match a.readout {
        ReadoutArg::Ideal => Readout::Ideal,
        ReadoutArg::NodalGrounded => Readout::Nodal(Termination::VirtualGround),
        ReadoutArg::NodalFloating => Readout::Nodal(Termination::FloatingUnselected),
    };
    cfg.read_noise_sigma = cli.noise;
    let r = vmm(&mut x, &input, &cfg)?;
    let w = stored_weights(&x)?;
    let expected: Vec<u64> = (0..w.cols())
        .map(|j| (0..w.rows()).map(|i| input[i] as u64 * w.get(i, j) as u64).sum())
        .collect();
    let errors = r.codes.iter().zip(&expected).filter(|(c, e)| **c as u64 != **e).count();
    let mean_abs_error =
        r.codes.iter().zip(&expected).map(|(c, e)| (*c as f64 - *e as f64).abs()).sum::<f64>() / expected.len() as f64;
    let written = persist(&x, &a.xbar, &a.persist)?;

    let mut t = String::new();
    writeln!(t, "input         {input:?}").unwrap();
    writeln!(t, "output        {:?}", r.codes).unwrap();
    writeln!(t, "integer mat-vec {expected:?}").unwrap();
    writeln!(t, "mismatches    {errors} of {}, mean abs error {mean_abs_error:.4}", expected.len()).unwrap();
    writeln!(t, "adc           {} bits, {:?}", r.adc_bits, cfg.resolution).unwrap();
    writeln!(t, "readout       {:?}, read noise {}", a.readout, cli.noise).unwrap();
    persist_line(&mut t, &written);
    let json = json!({
        "command": "vmm run",
        "seed": cli.seed,
        "input": input,
        "output": r.codes,
        "expected": expected,
        "mismatches": errors,
        "mean_abs_error": mean_abs_error,
        "adc_bits": r.adc_bits,
        "currents": r.analog_currents.amps,
        "baseline": r.baseline,
        "lsb": r.lsb,
        "read_noise": cli.noise,
        "crossbar_written": persist_json(&written),
    });
    ok(t, json)
}

fn lock(cli: &Cli, a: &LockArgs) -> CliResult<Report> {
    let w = WeightMatrix::load(&a.weights)?;
    let mut x = xbar_file::load(&a.xbar)?;
    let cfg = ProtocolConfig {
        key_bits: a.key_bits,
        reference_samples: a.reference_samples,
        read_noise_sigma: cli.noise,
        ..ProtocolConfig::default()
    };
    let mut rng = derive_stream(cli.seed, "lock-challenges", 0);
    let (bundle, record) = enroll_and_lock(&mut x, &w, &cfg, &a.device_id, &mut rng)?;
    bundle.save(&a.out)?;
    if let Some(s) = &a.store {
        CrpStore::new(s).append_enrollment(&record, a.timestamp.unwrap_or_else(now))?;
    }
    let written = persist(&x, &a.xbar, &a.persist)?;
    let tag: String = bundle.integrity_tag.iter().map(|b| format!("{b:02x}")).collect();
    let mut t = String::new();
    writeln!(t, "weights       {} x {}, {}-bit", w.rows(), w.cols(), w.bits()).unwrap();
    writeln!(t, "key           {} bits from {} challenges", bundle.key_bits, bundle.challenges.len()).unwrap();
    writeln!(t, "bundle        {} ({} bytes)", a.out.display(), bundle.to_bytes().len()).unwrap();
    writeln!(t, "tag           {tag}").unwrap();
    match &a.store {
        Some(s) => writeln!(t, "enrollment    {} as '{}'", s.display(), a.device_id).unwrap(),
        None => writeln!(t, "enrollment    not stored").unwrap(),
    }
    persist_line(&mut t, &written);
    let json = json!({
        "command": "lock",
        "seed": cli.seed,
        "device_id": a.device_id,
        "rows": w.rows(),
        "cols": w.cols(),
        "weight_bits": w.bits(),
        "key_bits": bundle.key_bits,
        "challenges": bundle.challenges.len(),
        "bundle_bytes": bundle.to_bytes().len(),
        "integrity_tag": tag,
        "entropy": bits_to_hex(&record.entropy),
        "crossbar_written": persist_json(&written),
    });
    ok(t, json)
}

fn unlock(cli: &Cli, a: &UnlockArgs) -> CliResult<Report> {
    let bundle = EncryptedWeightBundle::load(&a.bundle)?;
    let mut x = xbar_file::load(&a.xbar)?;
    let record = match (&a.store, &a.device_id) {
        (Some(s), Some(id)) => Some(
            CrpStore::new(s)
                .enrollment(id)?
                .ok_or_else(|| CliError::Usage(format!("no enrollment for '{id}' in {}", s.display())))?,
        ),
        _ => None,
    };
    let cfg = ProtocolConfig {
        key_bits: bundle.key_bits,
        reference_samples: a.reference_samples,
        read_noise_sigma: cli.noise,
        ..ProtocolConfig::default()
    };
    let report = match unlock_with_record(&bundle, &mut x, &cfg, record.as_ref()) {
        Ok(r) => r,
        Err(Error::IntegrityFailure) => {
            if let Some(rec) = &record {
                if let Ok(k) = entropy_mismatches(&x, &rec.entropy) {
                    eprintln!("entropy pattern differs from enrollment in {k} of {} devices", rec.entropy.len());
                }
            }
            return Err(Error::IntegrityFailure.into());
        }
        Err(e) => return Err(e.into()),
    };
    if let Some(p) = &a.weights_out {
        report.weights.save(p)?;
    }
    let written = persist(&x, &a.xbar, &a.persist)?;
    let w = &report.weights;
    let mut t = String::new();
    writeln!(t, "integrity     ok").unwrap();
    writeln!(t, "weights       {} x {}, {}-bit, programmed", w.rows(), w.cols(), w.bits()).unwrap();
    if let Some(k) = report.entropy_mismatches {
        writeln!(t, "entropy       {k} of {} devices differ from enrollment", x.rows() * x.cols()).unwrap();
    }
    if let Some(p) = &a.weights_out {
        writeln!(t, "weights file  {}", p.display()).unwrap();
    }
    persist_line(&mut t, &written);
    let json = json!({
        "command": "unlock",
        "seed": cli.seed,
        "integrity": "ok",
        "rows": w.rows(),
        "cols": w.cols(),
        "weight_bits": w.bits(),
        "weights": w.values(),
        "entropy_mismatches": report.entropy_mismatches,
        "crossbar_written": persist_json(&written),
    });
    ok(t, json)
}

fn describe(x: &Crossbar) -> (String, serde_json::Value) {
    let n = x.devices().len() as f64;
    let binary = x.devices().iter().filter(|d| d.state.mode == DeviceMode::Binary).count();
    let lrs = x.devices().iter().filter(|d| d.state.is_lrs()).count();
    let mean = |f: &dyn Fn(&rram_core::device::Device) -> f64| x.devices().iter().map(f).sum::<f64>() / n;
    let hrs_mean = mean(&|d| d.params.hrs_resistance);
    let lrs_mean = mean(&|d| d.params.lrs_resistance);
    let set_mean = mean(&|d| d.params.set_threshold);
    let c = x.calibration();
    let mut t = String::new();
    writeln!(t, "dims          {} x {}", x.rows(), x.cols()).unwrap();
    writeln!(t, "seed          {}", x.seed()).unwrap();
    writeln!(t, "profile       {}", c.name).unwrap();
    writeln!(t, "line r        {} ohm", x.line_resistance()).unwrap();
    writeln!(t, "mode          {}", x.mode()).unwrap();
    writeln!(t, "devices       {binary} binary, {} multistate, {lrs} in LRS", x.devices().len() - binary).unwrap();
    writeln!(t, "mean HRS      {hrs_mean:.1} ohm").unwrap();
    writeln!(t, "mean LRS      {lrs_mean:.1} ohm").unwrap();
    writeln!(t, "mean V_set    {set_mean:.4} V").unwrap();
    writeln!(t, "entropy       {}", if x.is_entropy_initialized() { "written" } else { "none" }).unwrap();
    writeln!(t, "references    {}", if x.csa_reference().is_some() { "enrolled" } else { "none" }).unwrap();
    match x.programmed_weight_bits() {
        Some(w) => writeln!(t, "weights       {w}-bit").unwrap(),
        None => writeln!(t, "weights       none").unwrap(),
    }
    writeln!(t, "trng batches  {}", x.trng_generation()).unwrap();
    let json = json!({
        "rows": x.rows(),
        "cols": x.cols(),
        "seed": x.seed(),
        "profile": c.name,
        "line_resistance": x.line_resistance(),
        "mode": x.mode().to_string(),
        "binary_devices": binary,
        "lrs_devices": lrs,
        "mean_hrs": hrs_mean,
        "mean_lrs": lrs_mean,
        "mean_set_threshold": set_mean,
        "entropy_initialized": x.is_entropy_initialized(),
        "references": x.csa_reference(),
        "weight_bits": x.programmed_weight_bits(),
        "trng_generation": x.trng_generation(),
    });
    (t, json)
}

fn xbar_new(cli: &Cli, a: &XbarNewArgs) -> CliResult<Report> {
    let spec = DistributionSpec::resolve(&cli.profile)?;
    let x = Crossbar::build(a.rows, a.cols, &spec, a.line_resistance, cli.seed)?;
    if a.json {
        xbar_file::save_json(&x, &a.out)?;
    } else {
        xbar_file::save(&x, &a.out)?;
    }
    let (mut t, mut json) = describe(&x);
    writeln!(t, "written to    {}", a.out.display()).unwrap();
    json["command"] = json!("xbar new");
    json["path"] = json!(a.out.display().to_string());
    ok(t, json)
}

fn xbar_inspect(a: &XbarInspectArgs) -> CliResult<Report> {
    let x = xbar_file::load(&a.xbar)?;
    if let Some(p) = &a.export_json {
        xbar_file::save_json(&x, p)?;
    }
    let (mut t, mut json) = describe(&x);
    if let Some(p) = &a.export_json {
        writeln!(t, "exported to   {}", p.display()).unwrap();
    }
    json["command"] = json!("xbar inspect");
    ok(t, json)
}
