use rram_core::bits::hamming;
use rram_core::device::PulseSpec;
use rram_core::trng::{
    bit_statistics, calibrate_p50_for_crossbar, generate_batch, harvest_stream, ones_fraction, switching_probability,
};
use rram_core::{Crossbar, DistributionSpec, Mode};

fn trng_xbar(seed: u64) -> (Crossbar, PulseSpec) {
    let mut x = Crossbar::build(16, 16, &DistributionSpec::paper_2023(), 1.0, seed).unwrap();
    x.set_mode(Mode::Trng);
    let p = calibrate_p50_for_crossbar(&x).unwrap();
    (x, p)
}

#[test]
fn one_batch_is_roughly_balanced() {
    for seed in 0..10 {
        let (mut x, p) = trng_xbar(seed);
        let b = generate_batch(&mut x, &p).unwrap();
        assert_eq!(b.bits.len(), 256);
        assert!((ones_fraction(&b.bits) - 0.5).abs() <= 0.1);
    }
}

#[test]
fn per_array_pulse_targets_half_expected_switching() {
    let (x, p) = trng_xbar(3);
    let mean: f64 = x.devices().iter().map(|d| switching_probability(d, p.amplitude)).sum::<f64>() / 256.0;
    assert!((mean - 0.5).abs() < 1e-9);
}

#[test]
fn successive_batches_differ() {
    let (mut x, p) = trng_xbar(4);
    let a = generate_batch(&mut x, &p).unwrap();
    let b = generate_batch(&mut x, &p).unwrap();
    assert!(hamming(&a.bits, &b.bits) > 0);
}

#[test]
fn batches_ignore_prior_history() {
    let (mut a, p) = trng_xbar(5);
    generate_batch(&mut a, &p).unwrap();
    let fork = a.stream_state();
    let mut b = a.clone();
    // different history on b: an all-LRS batch, then rewind to the forked stream
    generate_batch(&mut b, &PulseSpec::set()).unwrap();
    assert_ne!(a.states(), b.states());
    b.restore_stream(&fork);
    assert_eq!(generate_batch(&mut a, &p).unwrap().bits, generate_batch(&mut b, &p).unwrap().bits);
}

#[test]
fn harvested_stream_passes_fair_coin_bounds() {
    let (mut x, p) = trng_xbar(6);
    let bits = harvest_stream(&mut x, &p, 100_000, 1).unwrap();
    let s = bit_statistics(&bits);
    assert_eq!(s.len, 100_000);
    assert!((s.ones_fraction - 0.5).abs() <= 0.005, "{s:?}");
    assert!(s.lag1_autocorrelation.abs() <= 0.01, "{s:?}");
    assert!(s.longest_run <= 34, "{s:?}");
    // fair-coin runs count: mean 1 + (N - 1) / 2, sd about sqrt(N) / 2
    assert!((s.runs as f64 - 50_000.5).abs() < 5.0 * 158.2, "{s:?}");
}

#[test]
fn harvest_length_and_fold() {
    let (mut x, p) = trng_xbar(7);
    assert_eq!(harvest_stream(&mut x, &p, 256, 1).unwrap().len(), 256);
    assert_eq!(x.trng_generation(), 1);
    assert_eq!(harvest_stream(&mut x, &p, 300, 2).unwrap().len(), 300);
    assert!(harvest_stream(&mut x, &p, 0, 1).is_err());
}
