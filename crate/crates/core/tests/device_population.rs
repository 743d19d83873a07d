use rram_core::calibration::FittedDistributions;
use rram_core::device::{sample_params, Device, PulseSpec};
use rram_core::rng::derive_stream;
use rram_core::trng::calibrate_p50_pulse;
use rram_core::DistributionSpec;

const N: usize = 100_000;

fn fresh_devices(spec: &DistributionSpec, label: &str) -> Vec<Device> {
    let dist = FittedDistributions::new(spec).unwrap();
    let mut rng = derive_stream(2024, label, 0);
    (0..N).map(|_| Device::new(sample_params(&dist, &mut rng))).collect()
}

#[test]
fn resistance_population_matches_measured_statistics() {
    let spec = DistributionSpec::paper_2023();
    let devices = fresh_devices(&spec, "population");
    let hrs: Vec<f64> = devices.iter().map(|d| d.params.hrs_resistance).collect();
    let lrs: Vec<f64> = devices.iter().map(|d| d.params.lrs_resistance).collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    assert!((mean(&hrs) / 65.56e3 - 1.0).abs() <= 0.05, "HRS mean {}", mean(&hrs));
    assert!((mean(&lrs) / 1.64e3 - 1.0).abs() <= 0.01, "LRS mean {}", mean(&lrs));
    assert!(hrs.iter().all(|r| (31e3..=155e3).contains(r)));
    assert!(lrs.iter().all(|r| (1.55e3..=1.67e3).contains(r)));
}

#[test]
fn programming_pulse_switches_nearly_every_device() {
    let spec = DistributionSpec::paper_2023();
    let mut devices = fresh_devices(&spec, "set");
    let mut rng = derive_stream(2024, "set-c2c", 0);
    let switched = devices
        .iter_mut()
        .map(|d| d.apply_pulse(&PulseSpec::set(), &mut rng).unwrap())
        .filter(|s| s.is_lrs())
        .count();
    assert!(switched as f64 / N as f64 >= 0.999);
}

#[test]
fn p50_pulse_switches_half_of_fresh_devices() {
    let spec = DistributionSpec::paper_2023();
    let mut rng = derive_stream(2024, "calibration", 0);
    let cal = calibrate_p50_pulse(&spec, 0.01, &mut rng).unwrap();
    // counting oracle on an independent population
    let mut devices = fresh_devices(&spec, "p50-check");
    let mut rng = derive_stream(2024, "p50-c2c", 0);
    let switched = devices
        .iter_mut()
        .map(|d| d.apply_pulse(&cal.pulse, &mut rng).unwrap())
        .filter(|s| s.is_lrs())
        .count();
    let f = switched as f64 / N as f64;
    assert!((0.49..=0.51).contains(&f), "fraction {f}");
}

#[test]
fn profiles_round_trip_through_text() {
    let p = DistributionSpec::paper_2023();
    assert_eq!(DistributionSpec::from_toml(&p.to_toml()).unwrap(), p);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("custom.toml");
    std::fs::write(&path, p.to_toml()).unwrap();
    assert_eq!(DistributionSpec::resolve(path.to_str().unwrap()).unwrap(), p);
    assert_eq!(DistributionSpec::resolve("ideal").unwrap(), DistributionSpec::ideal());
    assert!(DistributionSpec::resolve("no-such-profile").is_err());
}
