//! Container serialization for named arrays. Each entry is a little-endian
//! u32 header length, a UTF-8 JSON header line `{"name":..., "shape":[...],
//! "dtype":"f64"}` terminated by `\n` (the newline counts toward the header
//! length), then the raw values little-endian. Entries are concatenated.
//! Round-trips are bit-exact: values are moved as `f64::to_le_bytes` images,
//! never reformatted.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::array::Array;

#[derive(Debug, Serialize, Deserialize)]
struct EntryHeader {
    name: String,
    shape: Vec<usize>,
    dtype: String,
}

/// Writes named arrays to `path` in container format, in the given order.
pub fn write_container(path: &Path, entries: &[(&str, &Array)]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for (name, array) in entries {
        let header = EntryHeader {
            name: (*name).to_string(),
            shape: array.shape().to_vec(),
            dtype: "f64".to_string(),
        };
        let mut header_bytes = serde_json::to_vec(&header)?;
        header_bytes.push(b'\n');
        w.write_all(&(header_bytes.len() as u32).to_le_bytes())?;
        w.write_all(&header_bytes)?;
        for &v in array.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads every entry of a container file, preserving order.
pub fn read_container(path: &Path) -> Result<Vec<(String, Array)>> {
    let mut r = BufReader::new(File::open(path)?);
    let mut entries = Vec::new();
    loop {
        let mut len_bytes = [0u8; 4];
        match r.read_exact(&mut len_bytes) {
            Ok(()) => {}
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => break,
            Err(e) => return Err(e.into()),
        }
        let header_len = u32::from_le_bytes(len_bytes) as usize;
        let mut header_bytes = vec![0u8; header_len];
        r.read_exact(&mut header_bytes)?;
        let header: EntryHeader = serde_json::from_slice(&header_bytes)?;
        if header.dtype != "f64" {
            return Err(Error::InvalidConfig(format!(
                "container entry `{}` has unsupported dtype `{}`",
                header.name, header.dtype
            )));
        }
        let count: usize = header.shape.iter().product();
        let mut data = Vec::with_capacity(count);
        let mut buf = [0u8; 8];
        for _ in 0..count {
            r.read_exact(&mut buf)?;
            data.push(f64::from_le_bytes(buf));
        }
        // Bypass the finiteness check deliberately: verification must be able
        // to read a corrupted file and report the mismatch by name instead of
        // failing at the I/O layer.
        entries.push((header.name, Array::from_vec_unchecked(header.shape, data)));
    }
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::rng::Rng;

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("arrays.bin");
        let mut rng = Rng::new(3);
        let a = Array::from_vec(vec![3, 4], rng.uniform_vec(12, -5.0, 5.0)).unwrap();
        let b = Array::from_vec(vec![2, 2, 2], rng.uniform_vec(8, -1.0, 1.0)).unwrap();
        write_container(&path, &[("a", &a), ("b", &b)]).unwrap();
        let back = read_container(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].0, "a");
        assert_eq!(back[1].0, "b");
        for (orig, (_, read)) in [&a, &b].iter().zip(&back) {
            assert_eq!(orig.shape(), read.shape());
            for (x, y) in orig.data().iter().zip(read.data()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn rejects_unknown_dtype() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.bin");
        let header = b"{\"name\":\"x\",\"shape\":[1],\"dtype\":\"f32\"}\n";
        let mut bytes = (header.len() as u32).to_le_bytes().to_vec();
        bytes.extend_from_slice(header);
        bytes.extend_from_slice(&1.0f64.to_le_bytes());
        std::fs::write(&path, bytes).unwrap();
        assert!(read_container(&path).is_err());
    }
}
