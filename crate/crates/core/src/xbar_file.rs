//! `.xbar` crossbar files: a little-endian binary container and a lossless
//! JSON export of the same snapshot.
//!
//! ```text
//! "XBAR" | version u16 | seed u64 | rows u32 | cols u32 | line_r f64 | mode u8
//! | profile: len u32 + TOML text
//! | per device: hrs, lrs, set, reset, c2c, prog_noise, resistance (f64) | level u16
//! |             mode u8 (0 binary, 1 multistate) | levels u16 | map u8
//! | stream: key [32] | stream u64 | word_pos u128
//! | entropy u8 | weight bits u8 (0 = none) | trng generation u64
//! | references: present u8, then cols x f64
//! ```

use std::io::{Cursor, Read};
use std::path::Path;

use crate::calibration::DistributionSpec;
use crate::crossbar::{Crossbar, CrossbarSnapshot, Mode};
use crate::device::{Device, DeviceMode, DeviceParams, DeviceState, LevelMap};
use crate::error::{Error, Result};
use crate::rng::StreamState;

pub const XBAR_MAGIC: [u8; 4] = *b"XBAR";
pub const XBAR_VERSION: u16 = 1;

fn mode_tag(m: Mode) -> u8 {
    match m {
        Mode::Vmm => 0,
        Mode::Trng => 1,
        Mode::Puf => 2,
    }
}

pub fn to_bytes(xbar: &Crossbar) -> Vec<u8> {
    let s = xbar.snapshot();
    let mut out = XBAR_MAGIC.to_vec();
    out.extend(XBAR_VERSION.to_le_bytes());
    out.extend(s.seed.to_le_bytes());
    out.extend((s.rows as u32).to_le_bytes());
    out.extend((s.cols as u32).to_le_bytes());
    out.extend(s.line_resistance.to_le_bytes());
    out.push(mode_tag(s.mode));
    let profile = s.calibration.to_toml();
    out.extend((profile.len() as u32).to_le_bytes());
    out.extend(profile.as_bytes());
    for d in &s.devices {
        let p = &d.params;
        for v in [p.hrs_resistance, p.lrs_resistance, p.set_threshold, p.reset_threshold, p.c2c_sigma, p.programming_noise, d.state.resistance] {
            out.extend(v.to_le_bytes());
        }
        out.extend(d.state.level.to_le_bytes());
        match d.state.mode {
            DeviceMode::Binary => {
                out.push(0);
                out.extend(2u16.to_le_bytes());
                out.push(0);
            }
            DeviceMode::Multistate { levels, map } => {
                out.push(1);
                out.extend(levels.to_le_bytes());
                out.push(match map {
                    LevelMap::Geometric => 0,
                    LevelMap::LinearConductance => 1,
                });
            }
        }
    }
    out.extend(s.stream.key);
    out.extend(s.stream.stream.to_le_bytes());
    out.extend(s.stream.word_pos.to_le_bytes());
    out.push(u8::from(s.entropy_initialized));
    out.push(s.programmed_weight_bits.unwrap_or(0) as u8);
    out.extend(s.trng_generation.to_le_bytes());
    match &s.csa_reference {
        None => out.push(0),
        Some(r) => {
            out.push(1);
            for v in r {
                out.extend(v.to_le_bytes());
            }
        }
    }
    out
}

struct Reader<'a>(Cursor<&'a [u8]>);

impl Reader<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        self.0.read_exact(&mut b).map_err(|_| Error::format("truncated crossbar file"))?;
        Ok(b)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take::<1>()?[0])
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take()?))
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take()?))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take()?))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take()?))
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<Crossbar> {
    let mut r = Reader(Cursor::new(bytes));
    if r.take::<4>()? != XBAR_MAGIC {
        return Err(Error::format("not a crossbar file (bad magic)"));
    }
    let version = r.u16()?;
    if version != XBAR_VERSION {
        return Err(Error::format(format!("unsupported crossbar file version {version}")));
    }
    let seed = r.u64()?;
    let rows = r.u32()? as usize;
    let cols = r.u32()? as usize;
    let line_resistance = r.f64()?;
    let mode = match r.u8()? {
        0 => Mode::Vmm,
        1 => Mode::Trng,
        2 => Mode::Puf,
        t => return Err(Error::format(format!("unknown mode tag {t}"))),
    };
    let n = rows.checked_mul(cols).filter(|&n| n > 0 && n <= 1 << 24);
    let n = n.ok_or_else(|| Error::format("crossbar dimensions out of range"))?;
    let plen = r.u32()? as usize;
    if plen > bytes.len() {
        return Err(Error::format("truncated crossbar file"));
    }
    let mut ptext = vec![0u8; plen];
    r.0.read_exact(&mut ptext).map_err(|_| Error::format("truncated crossbar file"))?;
    let ptext = String::from_utf8(ptext).map_err(|_| Error::format("profile is not UTF-8"))?;
    let calibration = DistributionSpec::from_toml(&ptext)?;

    let mut devices = Vec::with_capacity(n);
    for _ in 0..n {
        let params = DeviceParams {
            hrs_resistance: r.f64()?,
            lrs_resistance: r.f64()?,
            set_threshold: r.f64()?,
            reset_threshold: r.f64()?,
            c2c_sigma: r.f64()?,
            programming_noise: r.f64()?,
        };
        let resistance = r.f64()?;
        let level = r.u16()?;
        let tag = r.u8()?;
        let levels = r.u16()?;
        let map = r.u8()?;
        let mode = match (tag, map) {
            (0, _) => DeviceMode::Binary,
            (1, 0) => DeviceMode::Multistate { levels, map: LevelMap::Geometric },
            (1, 1) => DeviceMode::Multistate { levels, map: LevelMap::LinearConductance },
            _ => return Err(Error::format("unknown device mode")),
        };
        if level >= mode.levels() || !(resistance > 0.0) {
            return Err(Error::format("device state out of range"));
        }
        devices.push(Device { params, state: DeviceState { resistance, level, mode } });
    }
    let stream = StreamState { key: r.take()?, stream: r.u64()?, word_pos: u128::from_le_bytes(r.take()?) };
    let entropy_initialized = match r.u8()? {
        0 => false,
        1 => true,
        _ => return Err(Error::format("bad entropy flag")),
    };
    let programmed_weight_bits = match r.u8()? {
        0 => None,
        w @ 1..=8 => Some(w as u32),
        _ => return Err(Error::format("bad weight bit width")),
    };
    let trng_generation = r.u64()?;
    let csa_reference = match r.u8()? {
        0 => None,
        1 => Some((0..cols).map(|_| r.f64()).collect::<Result<Vec<_>>>()?),
        _ => return Err(Error::format("bad reference flag")),
    };
    if r.0.position() as usize != bytes.len() {
        return Err(Error::format("trailing bytes after crossbar"));
    }
    Crossbar::from_snapshot(CrossbarSnapshot {
        rows,
        cols,
        seed,
        line_resistance,
        calibration,
        devices,
        mode,
        stream,
        entropy_initialized,
        csa_reference,
        programmed_weight_bits,
        trng_generation,
    })
}

pub fn to_json(xbar: &Crossbar) -> String {
    serde_json::to_string_pretty(&xbar.snapshot()).expect("snapshot serializes")
}

pub fn from_json(text: &str) -> Result<Crossbar> {
    let s: CrossbarSnapshot = serde_json::from_str(text).map_err(|e| Error::format(format!("crossbar JSON: {e}")))?;
    Crossbar::from_snapshot(s)
}

/// Read either form, picking by the leading bytes.
pub fn load(path: impl AsRef<Path>) -> Result<Crossbar> {
    let bytes = std::fs::read(path)?;
    if bytes.starts_with(&XBAR_MAGIC) {
        from_bytes(&bytes)
    } else {
        let text = std::str::from_utf8(&bytes).map_err(|_| Error::format("not a crossbar file"))?;
        from_json(text)
    }
}

pub fn save(xbar: &Crossbar, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, to_bytes(xbar))?;
    Ok(())
}

pub fn save_json(xbar: &Crossbar, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, to_json(xbar))?;
    Ok(())
}
