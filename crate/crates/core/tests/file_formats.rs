use rram_core::crp_store::CrpStore;
use rram_core::locking::{enroll_and_lock, EncryptedWeightBundle, ProtocolConfig};
use rram_core::rng::derive_stream;
use rram_core::vmm::WeightMatrix;
use rram_core::xbar_file;
use rram_core::{Crossbar, DistributionSpec};

#[test]
fn crossbar_enrollment_and_bundle_survive_disk() {
    let dir = tempfile::tempdir().unwrap();
    let mut x = Crossbar::build(4, 4, &DistributionSpec::paper_2023(), 1.0, 31).unwrap();
    let w = WeightMatrix::worked_example();
    let mut rng = derive_stream(31, "challenges", 0);
    let (bundle, record) = enroll_and_lock(&mut x, &w, &ProtocolConfig::default(), "dev-31", &mut rng).unwrap();

    let xp = dir.path().join("a.xbar");
    xbar_file::save(&x, &xp).unwrap();
    assert_eq!(xbar_file::load(&xp).unwrap().snapshot(), x.snapshot());
    let jp = dir.path().join("a.json");
    xbar_file::save_json(&x, &jp).unwrap();
    assert_eq!(xbar_file::load(&jp).unwrap().snapshot(), x.snapshot());

    let bp = dir.path().join("w.lock");
    bundle.save(&bp).unwrap();
    assert_eq!(EncryptedWeightBundle::load(&bp).unwrap(), bundle);

    let store = CrpStore::new(dir.path().join("crp.tsv"));
    store.append_enrollment(&record, 1_700_000_000).unwrap();
    assert_eq!(store.enrollment("dev-31").unwrap().unwrap(), record);

    let wp = dir.path().join("w.csv");
    w.save(&wp).unwrap();
    assert_eq!(WeightMatrix::load(&wp).unwrap(), w);
}

#[test]
fn garbage_inputs_are_format_errors() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("junk");
    std::fs::write(&p, b"\x00\x01garbage").unwrap();
    assert!(matches!(xbar_file::load(&p), Err(rram_core::Error::Format(_))));
    assert!(matches!(EncryptedWeightBundle::load(&p), Err(rram_core::Error::Format(_))));
    assert!(matches!(xbar_file::load(dir.path().join("missing")), Err(rram_core::Error::Io(_))));
}
