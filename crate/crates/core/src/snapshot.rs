//! `CFLB1` binary snapshots.
//!
//! Layout, all little-endian: the 5-byte magic `CFLB1` padded with zeros to
//! 8 bytes, a `u32` version, a `u32` dimension `N`, `N` cell counts as
//! `u64`, the cell size and the time stamp as `f64`, the `N` origin
//! coordinates as `f64`, then the values in row-major order.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::solver::{Field, Grid};

pub const MAGIC: [u8; 8] = *b"CFLB1\0\0\0";
pub const VERSION: u32 = 1;

pub fn write_snapshot<W: Write>(field: &Field, mut out: W) -> Result<()> {
    let g = &field.grid;
    let mut buf = Vec::with_capacity(32 + 16 * g.dim() + 8 * g.len());
    buf.extend_from_slice(&MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(g.dim() as u32).to_le_bytes());
    for n in g.counts() {
        buf.extend_from_slice(&(*n as u64).to_le_bytes());
    }
    buf.extend_from_slice(&g.dx().to_le_bytes());
    buf.extend_from_slice(&field.time.to_le_bytes());
    for o in g.origin() {
        buf.extend_from_slice(&o.to_le_bytes());
    }
    for v in &field.values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&buf)?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl Cursor<'_> {
    fn take<const K: usize>(&mut self, what: &str) -> Result<[u8; K]> {
        let end = self.at + K;
        let s = self
            .bytes
            .get(self.at..end)
            .ok_or_else(|| Error::Format(format!("CFLB1 snapshot truncated while reading {what}")))?;
        self.at = end;
        Ok(s.try_into().expect("slice length"))
    }
    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(what)?))
    }
    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(what)?))
    }
    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(what)?))
    }
}

pub fn read_snapshot<R: Read>(mut input: R) -> Result<Field> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let mut c = Cursor { bytes: &bytes, at: 0 };
    let magic: [u8; 8] = c.take("magic").map_err(|_| Error::Format("not a CFLB1 snapshot: file too short".into()))?;
    if magic != MAGIC {
        return Err(Error::Format("not a CFLB1 snapshot: bad magic".into()));
    }
    let version = c.u32("version")?;
    if version != VERSION {
        return Err(Error::Format(format!("CFLB1 version {version} is not supported (expected {VERSION})")));
    }
    let dim = c.u32("dimension")? as usize;
    if !(1..=3).contains(&dim) {
        return Err(Error::Format(format!("CFLB1 dimension {dim} out of range")));
    }
    let mut counts = Vec::with_capacity(dim);
    for _ in 0..dim {
        counts.push(usize::try_from(c.u64("cell counts")?).map_err(|_| Error::Format("CFLB1 cell count overflow".into()))?);
    }
    let dx = c.f64("cell size")?;
    let time = c.f64("time")?;
    let mut origin = Vec::with_capacity(dim);
    for _ in 0..dim {
        origin.push(c.f64("origin")?);
    }
    let grid = Grid::new(counts, dx, origin).map_err(|e| Error::Format(format!("CFLB1 header describes no valid grid: {e}")))?;
    let expected = grid.len().checked_mul(8).ok_or_else(|| Error::Format("CFLB1 size overflow".into()))?;
    let rest = &bytes[c.at..];
    if rest.len() < expected {
        return Err(Error::Format(format!("CFLB1 snapshot truncated: {} of {expected} value bytes", rest.len())));
    }
    if rest.len() > expected {
        return Err(Error::Format(format!("CFLB1 snapshot has {} trailing bytes", rest.len() - expected)));
    }
    let values = rest.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().expect("chunk"))).collect();
    Field::new(grid, values, time)
}

pub fn save(field: &Field, path: &Path) -> Result<()> {
    let f = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(f);
    write_snapshot(field, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Field> {
    read_snapshot(std::io::BufReader::new(std::fs::File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Field {
        let g = Grid::new(vec![16, 18], 0.25, vec![-1.0, 3.5]).unwrap();
        Field::from_fn(g, -2.75, |z| (z[0] * 3.1).sin() * z[1])
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let f = sample();
        let mut buf = Vec::new();
        write_snapshot(&f, &mut buf).unwrap();
        assert_eq!(buf.len(), 8 + 4 + 4 + 16 + 16 + 16 + 16 * 18 * 8);
        let back = read_snapshot(buf.as_slice()).unwrap();
        assert_eq!(back.grid, f.grid);
        assert_eq!(back.time.to_bits(), f.time.to_bits());
        assert!(back.values.iter().zip(&f.values).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn corrupt_inputs_are_rejected() {
        let mut buf = Vec::new();
        write_snapshot(&sample(), &mut buf).unwrap();
        for cut in [3, 12, 40, buf.len() - 1] {
            let err = read_snapshot(&buf[..cut]).unwrap_err().to_string();
            assert!(err.contains("CFLB1"), "{err}");
        }
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(read_snapshot(bad.as_slice()).unwrap_err().to_string().contains("CFLB1"));
        let mut v2 = buf.clone();
        v2[8] = 2;
        assert!(read_snapshot(v2.as_slice()).unwrap_err().to_string().contains("version"));
        buf.push(0);
        assert!(read_snapshot(buf.as_slice()).is_err());
    }
}
