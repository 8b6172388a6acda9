//! Weight files: a plain-text manifest next to a raw little-endian f32 payload.
//!
//! ```text
//! octflow-weights 1
//! payload weights.bin
//! total_count 230
//! params 2
//! param enc0.conv0.weight 5 1 3 3 offset 0 count 45
//! param enc0.conv0.bias 1 5 1 1 offset 180 count 5
//! end
//! ```
//!
//! Offsets are in bytes from the start of the payload file.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::nn::params::ParamStore;
use crate::tensor::{Dims, Tensor4};

pub const WEIGHTS_MAGIC: &str = "octflow-weights";
pub const WEIGHTS_VERSION: u32 = 1;

fn payload_path(manifest: &Path) -> PathBuf {
    manifest.with_extension("bin")
}

pub fn write_weights(store: &ParamStore<f32>, manifest: &Path) -> Result<()> {
    let payload = payload_path(manifest);
    let payload_name = payload
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| Error::format(manifest, "manifest path has no usable file name"))?;
    let mut text = String::new();
    let mut bytes = Vec::with_capacity(store.total_count() * 4);
    writeln!(text, "{WEIGHTS_MAGIC} {WEIGHTS_VERSION}").unwrap();
    writeln!(text, "payload {payload_name}").unwrap();
    writeln!(text, "total_count {}", store.total_count()).unwrap();
    writeln!(text, "params {}", store.len()).unwrap();
    for p in store.iter() {
        if p.name.is_empty() || p.name.contains(char::is_whitespace) {
            return Err(Error::Input(format!("parameter name {:?} is not a single token", p.name)));
        }
        let d = p.value.dims();
        writeln!(
            text,
            "param {} {} {} {} {} offset {} count {}",
            p.name,
            d.n,
            d.c,
            d.h,
            d.w,
            bytes.len(),
            d.len()
        )
        .unwrap();
        for v in p.value.data() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    text.push_str("end\n");
    fs::write(&payload, &bytes).map_err(|e| Error::io(&payload, e))?;
    fs::write(manifest, text).map_err(|e| Error::io(manifest, e))?;
    Ok(())
}

struct Entry {
    name: String,
    dims: Dims,
    offset: usize,
}

fn parse_usize(tok: Option<&str>, manifest: &Path, line: usize) -> Result<usize> {
    tok.and_then(|t| t.parse().ok())
        .ok_or_else(|| Error::format(manifest, format!("line {line}: expected an integer")))
}

pub fn read_weights(manifest: &Path) -> Result<ParamStore<f32>> {
    let text = fs::read_to_string(manifest).map_err(|e| Error::io(manifest, e))?;
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let bad = |detail: String| Error::format(manifest, detail);

    let (_, header) = lines.next().ok_or_else(|| bad("empty manifest".into()))?;
    let mut head = header.split_whitespace();
    if head.next() != Some(WEIGHTS_MAGIC) {
        return Err(bad("bad magic".into()));
    }
    let version = parse_usize(head.next(), manifest, 1)?;
    if version != WEIGHTS_VERSION as usize {
        return Err(bad(format!("unsupported version {version}")));
    }

    let mut payload_name = None;
    let mut total_count = None;
    let mut declared = None;
    let mut entries = Vec::new();
    let mut ended = false;
    for (no, line) in lines {
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("payload") => payload_name = tok.next().map(str::to_owned),
            Some("total_count") => total_count = Some(parse_usize(tok.next(), manifest, no)?),
            Some("params") => declared = Some(parse_usize(tok.next(), manifest, no)?),
            Some("param") => {
                let name = tok
                    .next()
                    .ok_or_else(|| bad(format!("line {no}: missing name")))?
                    .to_owned();
                let mut d = [0usize; 4];
                for v in &mut d {
                    *v = parse_usize(tok.next(), manifest, no)?;
                }
                let dims = Dims::new(d[0], d[1], d[2], d[3]);
                if tok.next() != Some("offset") {
                    return Err(bad(format!("line {no}: expected offset")));
                }
                let offset = parse_usize(tok.next(), manifest, no)?;
                if tok.next() != Some("count") {
                    return Err(bad(format!("line {no}: expected count")));
                }
                let count = parse_usize(tok.next(), manifest, no)?;
                let len = d.iter().try_fold(1usize, |a, &b| a.checked_mul(b));
                if len != Some(count) {
                    return Err(bad(format!("line {no}: dims do not match count {count}")));
                }
                entries.push(Entry { name, dims, offset });
            }
            Some("end") => {
                ended = true;
                break;
            }
            Some(other) => return Err(bad(format!("line {no}: unknown key {other}"))),
            None => {}
        }
    }
    if !ended {
        return Err(bad("manifest truncated (no end marker)".into()));
    }
    let payload_name = payload_name.ok_or_else(|| bad("missing payload".into()))?;
    let total_count = total_count.ok_or_else(|| bad("missing total_count".into()))?;
    if declared != Some(entries.len()) {
        return Err(bad(format!(
            "params line declares {declared:?} arrays, found {}",
            entries.len()
        )));
    }

    let payload = manifest.with_file_name(&payload_name);
    let bytes = fs::read(&payload).map_err(|e| Error::io(&payload, e))?;
    if bytes.len() != total_count * 4 {
        return Err(Error::format(
            &payload,
            format!("payload has {} bytes, manifest needs {}", bytes.len(), total_count * 4),
        ));
    }
    let mut store = ParamStore::new();
    let mut expected_offset = 0;
    for e in entries {
        if e.offset != expected_offset {
            return Err(bad(format!("{}: offset {} is not contiguous", e.name, e.offset)));
        }
        let end = e.offset + e.dims.len() * 4;
        if end > bytes.len() {
            return Err(bad(format!("{}: extends past payload", e.name)));
        }
        let values = bytes[e.offset..end]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        store.push(e.name, Tensor4::from_vec(e.dims, values)?);
        expected_offset = end;
    }
    if store.total_count() != total_count {
        return Err(bad(format!(
            "arrays hold {} values, total_count says {total_count}",
            store.total_count()
        )));
    }
    Ok(store)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store() -> ParamStore<f32> {
        let mut s = ParamStore::new();
        s.push(
            "a.weight",
            Tensor4::from_fn(Dims::new(2, 1, 3, 3), |n, _, y, x| (n * 9 + y * 3 + x) as f32 * 0.1 - 0.3),
        );
        s.push("a.bias", Tensor4::full(Dims::new(1, 2, 1, 1), f32::MIN_POSITIVE));
        s
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.txt");
        let s = store();
        write_weights(&s, &path).unwrap();
        let back = read_weights(&path).unwrap();
        assert_eq!(back.dims(), s.dims());
        let a: Vec<u32> = s.flat_values().map(f32::to_bits).collect();
        let b: Vec<u32> = back.flat_values().map(f32::to_bits).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.txt");
        write_weights(&store(), &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();

        fs::write(&path, text.replace(WEIGHTS_MAGIC, "nope")).unwrap();
        assert!(read_weights(&path).unwrap_err().to_string().contains("bad magic"));

        fs::write(&path, text.replace("end\n", "")).unwrap();
        assert!(read_weights(&path).is_err());

        fs::write(&path, &text).unwrap();
        let bin = payload_path(&path);
        let bytes = fs::read(&bin).unwrap();
        fs::write(&bin, &bytes[..bytes.len() - 4]).unwrap();
        assert!(read_weights(&path).is_err());
    }
}
