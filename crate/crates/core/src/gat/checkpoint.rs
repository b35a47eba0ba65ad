//! Binary parameter checkpoints.
//!
//! Layout, all little-endian: magic `GSCK`, `u32` format version, `u32`
//! section count, then per section a `u32` name length, the UTF-8 name,
//! `u32 rows`, `u32 cols` and `rows·cols` row-major `f64` values.
//!
//! Sections: `meta` = `[heads, d_in, head_dim, leaky_slope, activation]`,
//! `seed` = `[seed >> 32, seed & 0xffffffff]`, `head{k}.transform`,
//! `head{k}.attention` and `classifier`.

use std::io::Write;
use std::path::Path;

use ndarray::{Array1, Array2};

use super::{Activation, GatParams, HeadParams};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"GSCK";
const VERSION: u32 = 1;

struct Section {
    name: String,
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

fn section(name: impl Into<String>, rows: usize, cols: usize, values: Vec<f64>) -> Section {
    Section {
        name: name.into(),
        rows,
        cols,
        values,
    }
}

pub fn write_checkpoint(path: impl AsRef<Path>, params: &GatParams, seed: u64) -> Result<()> {
    let path = path.as_ref();
    let mut sections = vec![
        section(
            "meta",
            1,
            5,
            vec![
                params.num_heads() as f64,
                params.d_in() as f64,
                params.head_dim() as f64,
                params.leaky_slope,
                params.activation.code(),
            ],
        ),
        section("seed", 1, 2, vec![(seed >> 32) as f64, (seed & 0xffff_ffff) as f64]),
    ];
    for (k, h) in params.heads.iter().enumerate() {
        sections.push(section(
            format!("head{k}.transform"),
            h.transform.nrows(),
            h.transform.ncols(),
            h.transform.iter().copied().collect(),
        ));
        sections.push(section(
            format!("head{k}.attention"),
            1,
            h.attention.len(),
            h.attention.to_vec(),
        ));
    }
    sections.push(section(
        "classifier",
        params.classifier.nrows(),
        params.classifier.ncols(),
        params.classifier.iter().copied().collect(),
    ));

    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(sections.len() as u32).to_le_bytes());
    for s in &sections {
        buf.extend_from_slice(&(s.name.len() as u32).to_le_bytes());
        buf.extend_from_slice(s.name.as_bytes());
        buf.extend_from_slice(&(s.rows as u32).to_le_bytes());
        buf.extend_from_slice(&(s.cols as u32).to_le_bytes());
        for v in &s.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Shape("checkpoint truncated".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }
}

/// Reads a checkpoint; returns the parameters and the training seed.
pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<(GatParams, u64)> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut cur = Cursor { bytes: &bytes, pos: 0 };
    if cur.take(4)? != MAGIC {
        return Err(Error::Invalid(format!("{} is not a checkpoint", path.display())));
    }
    let version = cur.u32()?;
    if version != VERSION as usize {
        return Err(Error::Invalid(format!("unsupported checkpoint version {version}")));
    }
    let count = cur.u32()?;
    let mut sections = std::collections::HashMap::new();
    for _ in 0..count {
        let len = cur.u32()?;
        let name = String::from_utf8(cur.take(len)?.to_vec())
            .map_err(|_| Error::Invalid("checkpoint section name is not UTF-8".into()))?;
        let rows = cur.u32()?;
        let cols = cur.u32()?;
        let values: Vec<f64> = cur
            .take(rows * cols * 8)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        sections.insert(name.clone(), section(name, rows, cols, values));
    }
    if cur.pos != bytes.len() {
        return Err(Error::Shape("trailing bytes after checkpoint sections".into()));
    }

    let get = |name: &str| {
        sections
            .get(name)
            .ok_or_else(|| Error::Invalid(format!("checkpoint lacks section {name:?}")))
    };
    let meta = &get("meta")?.values;
    if meta.len() != 5 {
        return Err(Error::Shape("malformed meta section".into()));
    }
    let heads = meta[0] as usize;
    let d_in = meta[1] as usize;
    let head_dim = meta[2] as usize;
    let seed_vals = &get("seed")?.values;
    let seed = ((seed_vals[0] as u64) << 32) | seed_vals[1] as u64;

    let matrix = |name: &str, rows: usize, cols: usize| -> Result<Array2<f64>> {
        let s = get(name)?;
        if s.rows != rows || s.cols != cols {
            return Err(Error::Shape(format!(
                "section {name} is {}x{}, expected {rows}x{cols}",
                s.rows, s.cols
            )));
        }
        Ok(Array2::from_shape_vec((rows, cols), s.values.clone()).unwrap())
    };
    let mut head_params = Vec::with_capacity(heads);
    for k in 0..heads {
        head_params.push(HeadParams {
            transform: matrix(&format!("head{k}.transform"), head_dim, d_in)?,
            attention: Array1::from(
                matrix(&format!("head{k}.attention"), 1, 2 * head_dim)?.into_raw_vec_and_offset().0,
            ),
        });
    }
    let params = GatParams {
        heads: head_params,
        classifier: matrix("classifier", 2, heads * head_dim + 1)?,
        leaky_slope: meta[3],
        activation: Activation::from_code(meta[4])?,
    };
    if !params.is_finite() {
        return Err(Error::Invalid("checkpoint holds non-finite parameters".into()));
    }
    Ok((params, seed))
}

/// Writes `epoch,loss` rows.
pub fn write_loss_trace(path: impl AsRef<Path>, trace: &[f64]) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::new();
    writeln!(out, "epoch,loss").unwrap();
    for (e, l) in trace.iter().enumerate() {
        writeln!(out, "{e},{l}").unwrap();
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gat::GatConfig;

    #[test]
    fn round_trip() {
        let cfg = GatConfig {
            heads: 3,
            head_dim: Some(2),
            seed: 0xDEAD_BEEF_1234_5678,
            ..GatConfig::default()
        };
        let p = GatParams::init(5, &cfg);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.bin");
        write_checkpoint(&path, &p, cfg.seed).unwrap();
        let (q, seed) = read_checkpoint(&path).unwrap();
        assert_eq!(p, q);
        assert_eq!(seed, cfg.seed);

        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(read_checkpoint(&path).is_err());
    }
}
