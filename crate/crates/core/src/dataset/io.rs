//! Little-endian binary feature files plus a JSON metadata sidecar.
//!
//! Layout (version 1):
//!
//! ```text
//! "LPRF"  u32 version
//! u32 |S|  u32 |O|  u32 d
//! u32 #seen  u32 #unseen  u32 #closed-world candidates
//! |S| x (u32 len, utf-8)   |O| x (u32 len, utf-8)
//! #seen x (u16 s, u16 o)   #unseen x (u16 s, u16 o)   #closed x (u16 s, u16 o)
//! f64 rows: |S| state, |O| object, |S|*|O| composition (state-major)
//! u32 #records, then per record: f64[d] feature, u16 s, u16 o, u8 split
//! ```
//!
//! The split code is 0 = train, 1 = val, 2 = test. Nothing may follow the
//! last record.

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::json;
use sha2::{Digest, Sha256};

use super::bank::TextBank;
use super::space::{CompositionSpace, Pair};
use super::{validate_record, Dataset, FeatureRecord, Split};
use crate::diffmath::Tensor;
use crate::error::{Error, Result};

pub const FEATURE_MAGIC: &[u8; 4] = b"LPRF";
pub const FEATURE_VERSION: u32 = 1;

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u16(&mut self, v: usize) {
        self.0.extend_from_slice(&(v as u16).to_le_bytes());
    }
    fn u32(&mut self, v: usize) {
        self.0.extend_from_slice(&(v as u32).to_le_bytes());
    }
    fn f64s(&mut self, vs: &[f64]) {
        for v in vs {
            self.0.extend_from_slice(&v.to_le_bytes());
        }
    }
    fn name(&mut self, s: &str) {
        self.u32(s.len());
        self.0.extend_from_slice(s.as_bytes());
    }
    fn pairs(&mut self, ps: &[Pair]) {
        for p in ps {
            self.u16(p.state);
            self.u16(p.object);
        }
    }
}

pub fn encode_features(ds: &Dataset) -> Vec<u8> {
    let space = &ds.space;
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(FEATURE_MAGIC);
    w.u32(FEATURE_VERSION as usize);
    w.u32(space.num_states());
    w.u32(space.num_objects());
    w.u32(ds.dim());
    w.u32(space.seen().len());
    w.u32(space.unseen().len());
    w.u32(space.closed_world().len());
    space.states().iter().for_each(|s| w.name(s));
    space.objects().iter().for_each(|s| w.name(s));
    w.pairs(space.seen());
    w.pairs(space.unseen());
    w.pairs(space.closed_world());
    w.f64s(ds.bank.states.data());
    w.f64s(ds.bank.objects.data());
    w.f64s(ds.bank.compositions.data());
    w.u32(ds.records.len());
    for r in &ds.records {
        w.f64s(&r.feature);
        w.u16(r.label.state);
        w.u16(r.label.object);
        w.u8(r.split.code());
    }
    w.0
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], String> {
        if self.buf.len() - self.pos < n {
            return Err(format!(
                "truncated while reading {what} at byte {} ({} bytes remain, {n} needed)",
                self.pos,
                self.buf.len() - self.pos
            ));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self, what: &str) -> Result<u8, String> {
        Ok(self.take(1, what)?[0])
    }
    fn u16(&mut self, what: &str) -> Result<usize, String> {
        let b = self.take(2, what)?;
        Ok(u16::from_le_bytes([b[0], b[1]]) as usize)
    }
    fn u32(&mut self, what: &str) -> Result<usize, String> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().unwrap()) as usize)
    }
    fn f64s(&mut self, n: usize, what: &str) -> Result<Vec<f64>, String> {
        let len = n.checked_mul(8).ok_or_else(|| format!("{what}: size overflow"))?;
        let b = self.take(len, what)?;
        Ok(b.chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
    fn name(&mut self, what: &str) -> Result<String, String> {
        let n = self.u32(what)?;
        let b = self.take(n, what)?;
        String::from_utf8(b.to_vec()).map_err(|_| format!("{what} is not valid UTF-8"))
    }
    fn pairs(&mut self, n: usize, what: &str) -> Result<Vec<Pair>, String> {
        (0..n)
            .map(|_| Ok(Pair::new(self.u16(what)?, self.u16(what)?)))
            .collect()
    }
}

fn decode(bytes: &[u8]) -> Result<Dataset, String> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4, "magic")? != FEATURE_MAGIC {
        return Err("malformed header: bad magic (expected LPRF)".into());
    }
    let version = r.u32("version")?;
    if version != FEATURE_VERSION as usize {
        return Err(format!("malformed header: unsupported version {version}"));
    }
    let n_states = r.u32("state count")?;
    let n_objects = r.u32("object count")?;
    let d = r.u32("dimension")?;
    let n_seen = r.u32("seen count")?;
    let n_unseen = r.u32("unseen count")?;
    let n_closed = r.u32("candidate count")?;
    if n_states == 0 || n_objects == 0 || d == 0 {
        return Err("malformed header: zero state, object or feature dimension".into());
    }
    // Cheap plausibility bound before allocating anything.
    let grid = n_states
        .checked_mul(n_objects)
        .ok_or("malformed header: grid size overflow")?;
    if [n_seen, n_unseen, n_closed].iter().any(|&n| n > grid) {
        return Err("malformed header: split larger than the composition grid".into());
    }
    let states = (0..n_states)
        .map(|i| r.name(&format!("state name {i}")))
        .collect::<Result<Vec<_>, _>>()?;
    let objects = (0..n_objects)
        .map(|i| r.name(&format!("object name {i}")))
        .collect::<Result<Vec<_>, _>>()?;
    let seen = r.pairs(n_seen, "seen pairs")?;
    let unseen = r.pairs(n_unseen, "unseen pairs")?;
    let closed = r.pairs(n_closed, "closed-world candidates")?;
    let space = CompositionSpace::new(states, objects, seen, unseen, closed).map_err(|e| e.to_string())?;

    let mat = |r: &mut Reader, rows: usize, what: &str| -> Result<Tensor, String> {
        let data = r.f64s(rows * d, what)?;
        Tensor::matrix(rows, d, data).map_err(|e| e.to_string())
    };
    let t_s = mat(&mut r, n_states, "state prototypes")?;
    let t_o = mat(&mut r, n_objects, "object prototypes")?;
    let t_c = mat(&mut r, grid, "composition prototypes")?;
    let bank = TextBank::new(&space, t_s, t_o, t_c).map_err(|e| e.to_string())?;

    let n_records = r.u32("record count")?;
    let mut records = Vec::with_capacity(n_records.min(r.buf.len() / (8 * d + 5)));
    for k in 0..n_records {
        let what = format!("record {k}");
        let feature = r.f64s(d, &what)?;
        let label = Pair::new(r.u16(&what)?, r.u16(&what)?);
        let code = r.u8(&what)?;
        let split = Split::from_code(code).ok_or_else(|| format!("record {k}: bad split tag {code}"))?;
        let rec = FeatureRecord { feature, label, split };
        validate_record(&space, d, k, &rec).map_err(|e| match e {
            Error::ShapeMismatch(m) if m.contains("non-unit feature") => {
                format!("non-unit feature at record {k}")
            }
            other => other.to_string(),
        })?;
        records.push(rec);
    }
    if r.pos != bytes.len() {
        return Err(format!("{} trailing bytes after the last record", bytes.len() - r.pos));
    }
    Dataset::new(space, bank, records).map_err(|e| e.to_string())
}

/// Parses a feature file held in memory.
pub fn decode_features(bytes: &[u8]) -> Result<Dataset> {
    decode(bytes).map_err(|reason| Error::Parse {
        path: PathBuf::from("<memory>"),
        reason,
    })
}

/// JSON metadata file written next to a feature file.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn save_features(path: &Path, ds: &Dataset) -> Result<()> {
    let bytes = encode_features(ds);
    let tmp = path.with_extension("partial");
    fs::write(&tmp, &bytes)?;
    fs::rename(&tmp, path)?;

    let space = &ds.space;
    let pairs = |ps: &[Pair]| ps.iter().map(|p| [p.state, p.object]).collect::<Vec<_>>();
    let count = |s: Split| ds.records.iter().filter(|r| r.split == s).count();
    let meta = json!({
        "format": "LPRF",
        "version": FEATURE_VERSION,
        "dim": ds.dim(),
        "states": space.states(),
        "objects": space.objects(),
        "seen": pairs(space.seen()),
        "unseen": pairs(space.unseen()),
        "closed_world": pairs(space.closed_world()),
        "open_world_size": space.open_world().len(),
        "records": { "train": count(Split::Train), "val": count(Split::Val), "test": count(Split::Test) },
        "sha256": ds.content_hash(),
    });
    fs::write(sidecar_path(path), serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

/// Reads a feature file. When the sidecar exists, the file must hash to the
/// digest it records.
pub fn load_features(path: &Path) -> Result<Dataset> {
    let bytes = fs::read(path)?;
    let fail = |reason: String| Error::Parse {
        path: path.to_path_buf(),
        reason,
    };
    let sidecar = sidecar_path(path);
    if sidecar.is_file() {
        let meta: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(&sidecar)?).map_err(|e| fail(format!("sidecar: {e}")))?;
        let expected = meta["sha256"]
            .as_str()
            .ok_or_else(|| fail("sidecar has no sha256 digest".into()))?;
        let actual = hex::encode(Sha256::digest(&bytes));
        if actual != expected {
            return Err(fail(format!("sha256 {actual} does not match the sidecar digest {expected}")));
        }
    }
    decode(&bytes).map_err(fail)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_synthetic, SyntheticConfig};

    fn small() -> Dataset {
        generate_synthetic(&SyntheticConfig {
            num_states: 3,
            num_objects: 4,
            dim: 6,
            train_per_seen: 3,
            test_per_composition: 2,
            ..SyntheticConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn round_trip_in_memory() {
        let ds = small();
        let back = decode_features(&encode_features(&ds)).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn every_truncation_fails() {
        let bytes = encode_features(&small());
        for cut in (0..bytes.len()).step_by(7) {
            let err = decode_features(&bytes[..cut]).unwrap_err();
            assert!(matches!(err, Error::Parse { .. }), "cut {cut}");
        }
    }

    #[test]
    fn trailing_bytes_rejected() {
        let mut bytes = encode_features(&small());
        bytes.push(0);
        let err = decode_features(&bytes).unwrap_err().to_string();
        assert!(err.contains("trailing"), "{err}");
    }

    #[test]
    fn bad_magic_and_version_rejected() {
        let mut bytes = encode_features(&small());
        bytes[0] = b'X';
        assert!(decode_features(&bytes).unwrap_err().to_string().contains("magic"));
        let mut bytes = encode_features(&small());
        bytes[4] = 9;
        assert!(decode_features(&bytes).unwrap_err().to_string().contains("version"));
    }

    #[test]
    fn sidecar_digest_checked() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.lprf");
        let ds = small();
        save_features(&path, &ds).unwrap();
        assert_eq!(load_features(&path).unwrap(), ds);
        let mut bytes = fs::read(&path).unwrap();
        // Inside the first state name: structurally valid, caught only by the digest.
        bytes[36] ^= 1;
        fs::write(&path, &bytes).unwrap();
        let err = load_features(&path).unwrap_err().to_string();
        assert!(err.contains("does not match the sidecar"), "{err}");
        fs::remove_file(sidecar_path(&path)).unwrap();
        assert_ne!(load_features(&path).unwrap(), ds);
    }

    #[test]
    fn non_unit_feature_named() {
        let mut ds = small();
        let k = 3;
        for v in ds.records[k].feature.iter_mut() {
            *v *= 0.5;
        }
        let err = decode_features(&encode_features(&ds)).unwrap_err().to_string();
        assert!(err.contains("non-unit feature at record 3"), "{err}");
    }
}
