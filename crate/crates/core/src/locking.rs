//! Binding network weights to one physical array.
//!
//! Locking writes entropy into the array, applies random challenges, turns
//! the PUF responses into a key (HKDF-SHA256) and XORs the packed weights
//! with a ChaCha20 keystream. Unlocking replays the same steps on whatever
//! array it is given and only programs the weights when the 64-bit
//! integrity tag checks out.

use std::io::{Cursor, Read};
use std::path::Path;

use chacha20::cipher::{KeyIvInit, StreamCipher};
use chacha20::ChaCha20;
use hkdf::Hkdf;
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bits::{hamming, pack_bits, unpack_bits};
use crate::crossbar::{Crossbar, Mode};
use crate::device::PulseSpec;
use crate::error::{Error, Result};
use crate::puf::{enroll_device, entropy_pattern, evaluate, Challenge, ChallengeResponsePair, Response, DEFAULT_REFERENCE_SAMPLES};
use crate::trng::calibrate_p50_for_crossbar;
use crate::vmm::{configure_for_weights, program_weights, WeightMatrix};

pub const DEFAULT_KEY_BITS: usize = 128;
pub const BUNDLE_MAGIC: [u8; 4] = *b"WLCK";
pub const BUNDLE_VERSION: u16 = 1;

const KEY_SALT: &[u8] = b"rram-lock/v1";
const KEY_INFO: &[u8] = b"rram-lock/key";
const STREAM_INFO: &[u8] = b"rram-lock/keystream";

#[derive(Clone, PartialEq, Eq)]
pub struct KeyMaterial {
    bytes: Vec<u8>,
}

impl std::fmt::Debug for KeyMaterial {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "KeyMaterial({} bits)", self.len_bits())
    }
}

impl KeyMaterial {
    pub fn from_bytes(bytes: Vec<u8>) -> Result<Self> {
        if bytes.len() * 8 < DEFAULT_KEY_BITS {
            return Err(Error::invalid("keys must be at least 128 bits"));
        }
        Ok(KeyMaterial { bytes })
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn len_bits(&self) -> usize {
        self.bytes.len() * 8
    }

    pub fn bits(&self) -> Vec<bool> {
        unpack_bits(&self.bytes, self.len_bits()).unwrap()
    }
}

fn check_key_bits(key_bits: usize) -> Result<()> {
    if key_bits < DEFAULT_KEY_BITS || key_bits % 8 != 0 || key_bits > 255 * 32 * 8 {
        return Err(Error::invalid(format!(
            "key length {key_bits} must be a multiple of 8 in 128..=65280"
        )));
    }
    Ok(())
}

/// Extract-then-expand over the concatenated response bits.
pub fn derive_key(responses: &[Response], key_bits: usize) -> Result<KeyMaterial> {
    check_key_bits(key_bits)?;
    let bits: Vec<bool> = responses.iter().flat_map(|r| r.bits.iter().copied()).collect();
    if bits.len() < key_bits {
        return Err(Error::InsufficientEntropy { available: bits.len(), required: key_bits });
    }
    let mut ikm = (bits.len() as u64).to_le_bytes().to_vec();
    ikm.extend(pack_bits(&bits));
    let hk = Hkdf::<Sha256>::new(Some(KEY_SALT), &ikm);
    let mut out = vec![0u8; key_bits / 8];
    hk.expand(KEY_INFO, &mut out).expect("length checked above");
    Ok(KeyMaterial { bytes: out })
}

/// Number of challenges needed to fill `key_bits` with `cols`-bit responses.
pub fn challenge_count(key_bits: usize, cols: usize) -> usize {
    key_bits.div_ceil(cols)
}

pub fn keystream(key: &KeyMaterial, len: usize) -> Vec<u8> {
    let mut out = vec![0u8; len];
    apply_keystream(key, &mut out);
    out
}

fn apply_keystream(key: &KeyMaterial, data: &mut [u8]) {
    let hk = Hkdf::<Sha256>::new(None, &key.bytes);
    let mut k = [0u8; 32];
    hk.expand(STREAM_INFO, &mut k).expect("32 bytes is a valid length");
    let mut cipher = ChaCha20::new_from_slices(&k, &[0u8; 12]).expect("fixed key and nonce sizes");
    cipher.apply_keystream(data);
}

/// First 8 bytes of SHA-256(plaintext || key).
pub fn integrity_tag(plaintext: &[u8], key: &KeyMaterial) -> [u8; 8] {
    let mut h = Sha256::new();
    h.update(plaintext);
    h.update(&key.bytes);
    h.finalize()[..8].try_into().unwrap()
}

/// Row-major `w`-bit weights, MSB first.
pub fn pack_weights(weights: &WeightMatrix) -> Vec<u8> {
    let w = weights.bits();
    let bits: Vec<bool> = weights
        .values()
        .iter()
        .flat_map(|&v| (0..w).rev().map(move |b| v >> b & 1 == 1))
        .collect();
    pack_bits(&bits)
}

pub fn unpack_weights(bytes: &[u8], rows: usize, cols: usize, bits: u32) -> Result<WeightMatrix> {
    let flat = unpack_bits(bytes, rows * cols * bits as usize)?;
    let values = flat
        .chunks(bits as usize)
        .map(|c| c.iter().fold(0u32, |a, &b| a << 1 | u32::from(b)))
        .collect();
    WeightMatrix::new(rows, cols, bits, values)
}

pub fn packed_len(rows: usize, cols: usize, bits: u32) -> usize {
    (rows * cols * bits as usize).div_ceil(8)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncryptedWeightBundle {
    pub format_version: u16,
    pub rows: usize,
    pub cols: usize,
    pub weight_bits: u32,
    pub key_bits: usize,
    pub challenges: Vec<Challenge>,
    pub integrity_tag: [u8; 8],
    pub ciphertext: Vec<u8>,
}

pub fn lock_weights(weights: &WeightMatrix, key: &KeyMaterial, challenges: &[Challenge]) -> Result<EncryptedWeightBundle> {
    if challenges.iter().any(|c| c.bits.len() != weights.rows()) {
        return Err(Error::DimensionMismatch {
            expected: format!("{}-bit challenges", weights.rows()),
            found: "other".into(),
        });
    }
    let plaintext = pack_weights(weights);
    let tag = integrity_tag(&plaintext, key);
    let mut ciphertext = plaintext;
    apply_keystream(key, &mut ciphertext);
    Ok(EncryptedWeightBundle {
        format_version: BUNDLE_VERSION,
        rows: weights.rows(),
        cols: weights.cols(),
        weight_bits: weights.bits(),
        key_bits: key.len_bits(),
        challenges: challenges.to_vec(),
        integrity_tag: tag,
        ciphertext,
    })
}

impl EncryptedWeightBundle {
    /// Candidate plaintext under `key`, whether or not the key is right.
    pub fn candidate_plaintext(&self, key: &KeyMaterial) -> Vec<u8> {
        let mut p = self.ciphertext.clone();
        apply_keystream(key, &mut p);
        p
    }

    pub fn decrypt(&self, key: &KeyMaterial) -> Result<WeightMatrix> {
        let p = self.candidate_plaintext(key);
        if integrity_tag(&p, key) != self.integrity_tag {
            return Err(Error::IntegrityFailure);
        }
        unpack_weights(&p, self.rows, self.cols, self.weight_bits)
    }

    /// Little-endian container:
    /// `magic | version u16 | rows u32 | cols u32 | w u8 | key_bits u16 |
    /// count u32 | challenges | tag [8] | len u32 | ciphertext`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = BUNDLE_MAGIC.to_vec();
        out.extend(self.format_version.to_le_bytes());
        out.extend((self.rows as u32).to_le_bytes());
        out.extend((self.cols as u32).to_le_bytes());
        out.push(self.weight_bits as u8);
        out.extend((self.key_bits as u16).to_le_bytes());
        out.extend((self.challenges.len() as u32).to_le_bytes());
        for c in &self.challenges {
            out.extend(pack_bits(&c.bits));
        }
        out.extend(self.integrity_tag);
        out.extend((self.ciphertext.len() as u32).to_le_bytes());
        out.extend(&self.ciphertext);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Cursor::new(bytes);
        let mut magic = [0u8; 4];
        read_exact(&mut r, &mut magic)?;
        if magic != BUNDLE_MAGIC {
            return Err(Error::format("not a weight bundle (bad magic)"));
        }
        let version = u16::from_le_bytes(take(&mut r)?);
        if version != BUNDLE_VERSION {
            return Err(Error::format(format!("unsupported bundle version {version}")));
        }
        let rows = u32::from_le_bytes(take(&mut r)?) as usize;
        let cols = u32::from_le_bytes(take(&mut r)?) as usize;
        let [weight_bits] = take::<1>(&mut r)?;
        let key_bits = u16::from_le_bytes(take(&mut r)?) as usize;
        let count = u32::from_le_bytes(take(&mut r)?) as usize;
        if rows == 0 || cols == 0 || rows > 1 << 16 || cols > 1 << 16 || !(1..=8).contains(&weight_bits) {
            return Err(Error::format("bundle dimensions out of range"));
        }
        check_key_bits(key_bits).map_err(|_| Error::format(format!("bad key length {key_bits}")))?;
        if count != challenge_count(key_bits, cols) {
            return Err(Error::format("challenge count does not match key length"));
        }
        let mut challenges = Vec::with_capacity(count);
        let mut buf = vec![0u8; rows.div_ceil(8)];
        for _ in 0..count {
            read_exact(&mut r, &mut buf)?;
            challenges.push(Challenge::new(unpack_bits(&buf, rows)?));
        }
        let integrity_tag = take::<8>(&mut r)?;
        let len = u32::from_le_bytes(take(&mut r)?) as usize;
        if len != packed_len(rows, cols, weight_bits as u32) {
            return Err(Error::format("ciphertext length does not match dimensions"));
        }
        let mut ciphertext = vec![0u8; len];
        read_exact(&mut r, &mut ciphertext)?;
        if (r.position() as usize) != bytes.len() {
            return Err(Error::format("trailing bytes after bundle"));
        }
        Ok(EncryptedWeightBundle {
            format_version: version,
            rows,
            cols,
            weight_bits: weight_bits as u32,
            key_bits,
            challenges,
            integrity_tag,
            ciphertext,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

fn read_exact(r: &mut Cursor<&[u8]>, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|_| Error::format("truncated file"))
}

fn take<const N: usize>(r: &mut Cursor<&[u8]>) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    read_exact(r, &mut b)?;
    Ok(b)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EntropyPulse {
    /// Solve the array's own 50% amplitude from its frozen thresholds.
    PerCrossbar,
    Fixed(PulseSpec),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub entropy_pulse: EntropyPulse,
    pub key_bits: usize,
    pub reference_samples: usize,
    pub read_noise_sigma: f64,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            entropy_pulse: EntropyPulse::PerCrossbar,
            key_bits: DEFAULT_KEY_BITS,
            reference_samples: DEFAULT_REFERENCE_SAMPLES,
            read_noise_sigma: 0.0,
        }
    }
}

impl ProtocolConfig {
    fn pulse(&self, xbar: &Crossbar) -> Result<PulseSpec> {
        match self.entropy_pulse {
            EntropyPulse::PerCrossbar => calibrate_p50_for_crossbar(xbar),
            EntropyPulse::Fixed(p) => Ok(p),
        }
    }
}

/// What the server keeps after locking: never shipped with the bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnrollmentRecord {
    pub device_id: String,
    pub entropy: Vec<bool>,
    pub crps: Vec<ChallengeResponsePair>,
}

/// Write entropy, enroll, and read the responses to `challenges`.
fn collect_responses(xbar: &mut Crossbar, challenges: &[Challenge], cfg: &ProtocolConfig) -> Result<Vec<Response>> {
    let pulse = cfg.pulse(xbar)?;
    enroll_device(xbar, &pulse, cfg.reference_samples)?;
    challenges.iter().map(|c| evaluate(xbar, c, cfg.read_noise_sigma)).collect()
}

/// Lock `weights` to `xbar`. The array is left in PUF mode holding its
/// entropy pattern.
pub fn enroll_and_lock<R: Rng + ?Sized>(
    xbar: &mut Crossbar,
    weights: &WeightMatrix,
    cfg: &ProtocolConfig,
    device_id: &str,
    rng: &mut R,
) -> Result<(EncryptedWeightBundle, EnrollmentRecord)> {
    check_key_bits(cfg.key_bits)?;
    check_dims(xbar, weights.rows(), weights.cols())?;
    let challenges: Vec<Challenge> = (0..challenge_count(cfg.key_bits, xbar.cols()))
        .map(|_| Challenge::random(xbar.rows(), rng))
        .collect();
    let responses = collect_responses(xbar, &challenges, cfg)?;
    let key = derive_key(&responses, cfg.key_bits)?;
    let bundle = lock_weights(weights, &key, &challenges)?;
    let record = EnrollmentRecord {
        device_id: device_id.to_string(),
        entropy: entropy_pattern(xbar)?,
        crps: challenges
            .into_iter()
            .zip(responses)
            .map(|(challenge, response)| ChallengeResponsePair { challenge, response, device_id: device_id.to_string() })
            .collect(),
    };
    Ok((bundle, record))
}

fn check_dims(xbar: &Crossbar, rows: usize, cols: usize) -> Result<()> {
    if rows != xbar.rows() || cols != xbar.cols() {
        return Err(Error::DimensionMismatch {
            expected: format!("{}x{}", xbar.rows(), xbar.cols()),
            found: format!("{rows}x{cols}"),
        });
    }
    Ok(())
}

/// Re-derive the key a bundle's challenges produce on `xbar`. Leaves the
/// array in PUF mode holding its entropy pattern.
pub fn device_key(bundle: &EncryptedWeightBundle, xbar: &mut Crossbar, cfg: &ProtocolConfig) -> Result<KeyMaterial> {
    check_dims(xbar, bundle.rows, bundle.cols)?;
    let responses = collect_responses(xbar, &bundle.challenges, cfg)?;
    derive_key(&responses, bundle.key_bits)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnlockReport {
    pub weights: WeightMatrix,
    /// Devices whose entropy bit differs from the enrollment record.
    pub entropy_mismatches: Option<usize>,
}

/// Decrypt on `xbar` and, only if the tag verifies, program the weights onto
/// it in VMM mode, overwriting the entropy pattern.
pub fn unlock_weights(bundle: &EncryptedWeightBundle, xbar: &mut Crossbar, cfg: &ProtocolConfig) -> Result<WeightMatrix> {
    Ok(unlock_with_record(bundle, xbar, cfg, None)?.weights)
}

pub fn unlock_with_record(
    bundle: &EncryptedWeightBundle,
    xbar: &mut Crossbar,
    cfg: &ProtocolConfig,
    record: Option<&EnrollmentRecord>,
) -> Result<UnlockReport> {
    let key = device_key(bundle, xbar, cfg)?;
    let entropy_mismatches = match record {
        Some(r) => Some(entropy_mismatches(xbar, &r.entropy)?),
        None => None,
    };
    let weights = bundle.decrypt(&key)?;
    xbar.set_mode(Mode::Vmm);
    configure_for_weights(xbar, weights.bits())?;
    program_weights(xbar, &weights)?;
    Ok(UnlockReport { weights, entropy_mismatches })
}

pub fn entropy_mismatches(xbar: &Crossbar, expected: &[bool]) -> Result<usize> {
    let now = entropy_pattern(xbar)?;
    if now.len() != expected.len() {
        return Err(Error::DimensionMismatch { expected: expected.len().to_string(), found: now.len().to_string() });
    }
    Ok(hamming(&now, expected))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::DistributionSpec;
    use crate::rng::derive_stream;

    fn resp(bits: &[u8]) -> Response {
        Response { bits: bits.iter().map(|&b| b == 1).collect() }
    }

    #[test]
    fn key_needs_enough_bits() {
        let r = vec![resp(&[1; 16]); 7];
        assert!(matches!(derive_key(&r, 128), Err(Error::InsufficientEntropy { available: 112, required: 128 })));
        let r = vec![resp(&[1; 16]); 8];
        assert_eq!(derive_key(&r, 128).unwrap().len_bits(), 128);
        assert_eq!(derive_key(&r, 128).unwrap(), derive_key(&r, 128).unwrap());
        assert!(derive_key(&r, 120).is_err());
        assert!(derive_key(&r, 130).is_err());
        assert_eq!(challenge_count(128, 16), 8);
        assert_eq!(challenge_count(128, 3), 43);
    }

    #[test]
    fn zero_weights_encrypt_to_keystream() {
        let key = KeyMaterial::from_bytes(vec![7; 16]).unwrap();
        let w = WeightMatrix::new(4, 4, 2, vec![0; 16]).unwrap();
        let b = lock_weights(&w, &key, &[]).unwrap();
        assert_eq!(b.ciphertext, keystream(&key, 4));
        assert_eq!(b.decrypt(&key).unwrap(), w);
    }

    #[test]
    fn weight_packing() {
        let w = WeightMatrix::from_rows(3, &[vec![5, 1, 7]]).unwrap();
        assert_eq!(pack_weights(&w), vec![0b1010_0111, 0b1000_0000]);
        assert_eq!(unpack_weights(&pack_weights(&w), 1, 3, 3).unwrap(), w);
    }

    #[test]
    fn bundle_format_round_trip_and_rejects() {
        let key = KeyMaterial::from_bytes(vec![1; 16]).unwrap();
        let w = WeightMatrix::worked_example();
        let mut rng = derive_stream(0, "t", 0);
        let cs: Vec<Challenge> = (0..32).map(|_| Challenge::random(4, &mut rng)).collect();
        let b = lock_weights(&w, &key, &cs).unwrap();
        let bytes = b.to_bytes();
        assert_eq!(EncryptedWeightBundle::from_bytes(&bytes).unwrap(), b);
        assert!(EncryptedWeightBundle::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(EncryptedWeightBundle::from_bytes(&extra).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(EncryptedWeightBundle::from_bytes(&bad).is_err());
        let mut flipped = b.clone();
        flipped.ciphertext[0] ^= 1;
        assert!(matches!(flipped.decrypt(&key), Err(Error::IntegrityFailure)));
    }

    #[test]
    fn worked_example_round_trip_on_one_device() {
        let mut x = Crossbar::build(4, 4, &DistributionSpec::paper_2023(), 1.0, 11).unwrap();
        let cfg = ProtocolConfig::default();
        let w = WeightMatrix::worked_example();
        let mut rng = derive_stream(11, "challenges", 0);
        let (bundle, record) = enroll_and_lock(&mut x, &w, &cfg, "dev", &mut rng).unwrap();
        assert_eq!(bundle.challenges.len(), 32);
        let rep = unlock_with_record(&bundle, &mut x, &cfg, Some(&record)).unwrap();
        assert_eq!(rep.weights, w);
        assert_eq!(rep.entropy_mismatches, Some(0));
        assert_eq!(x.mode(), Mode::Vmm);
        assert_eq!(crate::vmm::stored_weights(&x).unwrap(), w);
    }

    #[test]
    fn dimension_mismatch_leaves_array_alone() {
        let mut x = Crossbar::build(4, 4, &DistributionSpec::paper_2023(), 1.0, 12).unwrap();
        let key = KeyMaterial::from_bytes(vec![1; 16]).unwrap();
        let w = WeightMatrix::new(2, 2, 2, vec![1, 2, 3, 0]).unwrap();
        let b = lock_weights(&w, &key, &[]).unwrap();
        let before = x.states();
        assert!(matches!(unlock_weights(&b, &mut x, &ProtocolConfig::default()), Err(Error::DimensionMismatch { .. })));
        assert_eq!(before, x.states());
    }
}
