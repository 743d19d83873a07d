//! Append-only enrollment record file.
//!
//! One tab-separated record per line:
//!
//! ```text
//! crp      <device_id> <challenge len:hex> <response len:hex> <unix seconds>
//! entropy  <device_id> <pattern len:hex> <unix seconds>
//! ```

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::bits::{bits_from_hex, bits_to_hex};
use crate::error::{Error, Result};
use crate::locking::EnrollmentRecord;
use crate::puf::{Challenge, ChallengeResponsePair, Response};

#[derive(Debug, Clone)]
pub struct CrpStore {
    path: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StoreEntry {
    Crp { pair: ChallengeResponsePair, timestamp: u64 },
    Entropy { device_id: String, pattern: Vec<bool>, timestamp: u64 },
}

fn check_id(id: &str) -> Result<()> {
    if id.is_empty() || id.contains(['\t', '\n', '\r']) {
        return Err(Error::invalid(format!("device id {id:?} must be non-empty without tabs or newlines")));
    }
    Ok(())
}

impl CrpStore {
    pub fn new(path: impl AsRef<Path>) -> Self {
        CrpStore { path: path.as_ref().to_path_buf() }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn append(&self, lines: &[String]) -> Result<()> {
        let mut f = OpenOptions::new().create(true).append(true).open(&self.path)?;
        let mut text = String::new();
        for l in lines {
            text.push_str(l);
            text.push('\n');
        }
        f.write_all(text.as_bytes())?;
        Ok(())
    }

    pub fn append_crps(&self, pairs: &[ChallengeResponsePair], timestamp: u64) -> Result<()> {
        let mut lines = Vec::with_capacity(pairs.len());
        for p in pairs {
            check_id(&p.device_id)?;
            lines.push(format!(
                "crp\t{}\t{}\t{}\t{timestamp}",
                p.device_id,
                bits_to_hex(&p.challenge.bits),
                bits_to_hex(&p.response.bits)
            ));
        }
        self.append(&lines)
    }

    pub fn append_enrollment(&self, record: &EnrollmentRecord, timestamp: u64) -> Result<()> {
        check_id(&record.device_id)?;
        self.append(&[format!("entropy\t{}\t{}\t{timestamp}", record.device_id, bits_to_hex(&record.entropy))])?;
        self.append_crps(&record.crps, timestamp)
    }

    pub fn entries(&self) -> Result<Vec<StoreEntry>> {
        let text = std::fs::read_to_string(&self.path)?;
        text.lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(k, l)| parse_line(l).map_err(|e| Error::format(format!("{}:{}: {e}", self.path.display(), k + 1))))
            .collect()
    }

    /// Latest entropy pattern and every CRP stored for `device_id`.
    pub fn enrollment(&self, device_id: &str) -> Result<Option<EnrollmentRecord>> {
        let mut entropy = None;
        let mut crps = Vec::new();
        for e in self.entries()? {
            match e {
                StoreEntry::Entropy { device_id: d, pattern, .. } if d == device_id => entropy = Some(pattern),
                StoreEntry::Crp { pair, .. } if pair.device_id == device_id => crps.push(pair),
                _ => {}
            }
        }
        Ok(entropy.map(|entropy| EnrollmentRecord { device_id: device_id.to_string(), entropy, crps }))
    }
}

fn parse_line(line: &str) -> Result<StoreEntry> {
    let f: Vec<&str> = line.split('\t').collect();
    let ts = |s: &str| s.parse::<u64>().map_err(|_| Error::format(format!("bad timestamp '{s}'")));
    match f.as_slice() {
        ["crp", id, c, r, t] => Ok(StoreEntry::Crp {
            pair: ChallengeResponsePair {
                challenge: Challenge::new(bits_from_hex(c)?),
                response: Response { bits: bits_from_hex(r)? },
                device_id: id.to_string(),
            },
            timestamp: ts(t)?,
        }),
        ["entropy", id, p, t] => Ok(StoreEntry::Entropy {
            device_id: id.to_string(),
            pattern: bits_from_hex(p)?,
            timestamp: ts(t)?,
        }),
        _ => Err(Error::format(format!("unrecognized record '{line}'"))),
    }
}
