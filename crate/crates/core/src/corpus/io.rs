use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::Array2;
use serde::Deserialize;

use super::{Corpus, EmbeddingMatrix, IdMap, Message, School, ScoreTable, SentimentLabel, Year};
use crate::error::{Error, Result};

/// Leading bytes of the binary embedding container.
pub const EMBEDDING_MAGIC: &[u8; 4] = b"GSEM";

#[derive(Deserialize)]
struct RawMessage {
    node_id: u64,
    user_id: u64,
    school: String,
    year: u16,
    #[serde(default)]
    text: Option<String>,
    #[serde(default)]
    label: Option<String>,
}

/// Reads a JSON-lines message file. Blank lines are skipped; node ids are
/// re-densified to `0..n` in file order.
pub fn load_messages(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut messages = Vec::new();
    let mut id_map = IdMap::default();

    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawMessage =
            serde_json::from_str(&line).map_err(|e| Error::parse(path, lineno, e.to_string()))?;
        let school: School = raw
            .school
            .parse()
            .map_err(|e: Error| Error::parse(path, lineno, e.to_string()))?;
        let year = Year::try_from(raw.year).map_err(|e| Error::parse(path, lineno, e.to_string()))?;
        let gold_label = raw
            .label
            .as_deref()
            .map(str::parse::<SentimentLabel>)
            .transpose()
            .map_err(|e| Error::parse(path, lineno, e.to_string()))?;
        let node_id = id_map.insert(raw.node_id)?;
        messages.push(Message {
            node_id,
            original_id: raw.node_id,
            user_id: raw.user_id,
            school,
            year,
            text: raw.text,
            gold_label,
        });
    }

    Ok(Corpus { messages, id_map })
}

/// Writes the id map as `original_id,node_id` CSV.
pub fn write_id_map(path: impl AsRef<Path>, id_map: &IdMap) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let write = |w: &mut BufWriter<File>| -> std::io::Result<()> {
        writeln!(w, "original_id,node_id")?;
        for (o, d) in id_map.pairs() {
            writeln!(w, "{o},{d}")?;
        }
        w.flush()
    };
    write(&mut w).map_err(|e| Error::io(path, e))
}

fn csv_reader(path: &Path) -> Result<csv::Reader<File>> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| csv_error(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::parse(path, line, format!("{other:?}")),
    }
}

/// A first row whose fields are all non-numeric is treated as a header.
fn is_header(record: &csv::StringRecord) -> bool {
    !record.is_empty() && record.iter().all(|f| f.parse::<f64>().is_err())
}

/// Reads a `replier_id,target_id` CSV and maps both ends into dense node ids.
/// Rows keep their file order; duplicates and self-edges are kept.
pub fn load_edges(path: impl AsRef<Path>, id_map: &IdMap) -> Result<Vec<(usize, usize)>> {
    let path = path.as_ref();
    let mut reader = csv_reader(path)?;
    let mut edges = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(idx + 1, |p| p.line() as usize);
        if idx == 0 && is_header(&record) {
            continue;
        }
        if record.len() != 2 {
            return Err(Error::parse(
                path,
                line,
                format!("expected 2 columns, found {}", record.len()),
            ));
        }
        let mut ends = [0usize; 2];
        for (slot, field) in ends.iter_mut().zip(record.iter()) {
            let original: u64 = field
                .parse()
                .map_err(|_| Error::parse(path, line, format!("not an integer id: {field:?}")))?;
            *slot = id_map.get(original).ok_or_else(|| {
                Error::parse(path, line, Error::UnknownId(original).to_string())
            })?;
        }
        edges.push((ends[0], ends[1]));
    }
    Ok(edges)
}

/// Reads an embedding matrix. Files starting with [`EMBEDDING_MAGIC`] are the
/// binary container (`u32 n`, `u32 d`, then `n·d` row-major `f64`, all
/// little-endian); anything else is parsed as CSV with one row per node.
pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingMatrix> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(EMBEDDING_MAGIC) {
        decode_binary(&bytes)
    } else {
        load_embeddings_csv(path)
    }
}

fn decode_binary(bytes: &[u8]) -> Result<EmbeddingMatrix> {
    if bytes.len() < 12 {
        return Err(Error::Shape("embedding header truncated".into()));
    }
    let n = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let d = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let payload = &bytes[12..];
    let expected = n
        .checked_mul(d)
        .and_then(|c| c.checked_mul(8))
        .ok_or_else(|| Error::Shape(format!("header n={n}, d={d} overflows")))?;
    if payload.len() != expected {
        return Err(Error::Shape(format!(
            "header declares {n}x{d} ({} values) but payload holds {} bytes",
            n * d,
            payload.len()
        )));
    }
    let values: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let array = Array2::from_shape_vec((n, d), values).map_err(|e| Error::Shape(e.to_string()))?;
    EmbeddingMatrix::new(array)
}

fn load_embeddings_csv(path: &Path) -> Result<EmbeddingMatrix> {
    let mut reader = csv_reader(path)?;
    let mut values = Vec::new();
    let mut d = None;
    let mut n = 0;
    for (idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(idx + 1, |p| p.line() as usize);
        if idx == 0 && is_header(&record) {
            continue;
        }
        match d {
            None => d = Some(record.len()),
            Some(d) if d != record.len() => {
                return Err(Error::Shape(format!(
                    "{}:{line}: row has {} columns, expected {d}",
                    path.display(),
                    record.len()
                )))
            }
            _ => {}
        }
        for (col, field) in record.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| Error::parse(path, line, format!("not a number: {field:?}")))?;
            if !v.is_finite() {
                return Err(Error::NonFinite { row: n, col });
            }
            values.push(v);
        }
        n += 1;
    }
    let array = Array2::from_shape_vec((n, d.unwrap_or(0)), values)
        .map_err(|e| Error::Shape(e.to_string()))?;
    EmbeddingMatrix::new(array)
}

/// Writes the binary embedding container.
pub fn write_embeddings(path: impl AsRef<Path>, m: &EmbeddingMatrix) -> Result<()> {
    let path = path.as_ref();
    let n = u32::try_from(m.n()).map_err(|_| Error::Shape("too many rows".into()))?;
    let d = u32::try_from(m.d()).map_err(|_| Error::Shape("too many columns".into()))?;
    let mut buf = Vec::with_capacity(12 + m.n() * m.d() * 8);
    buf.extend_from_slice(EMBEDDING_MAGIC);
    buf.extend_from_slice(&n.to_le_bytes());
    buf.extend_from_slice(&d.to_le_bytes());
    for v in m.values().iter() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Reads a `negative,neutral,positive` score CSV, one row per node.
pub fn load_scores(path: impl AsRef<Path>) -> Result<ScoreTable> {
    let path = path.as_ref();
    let mut reader = csv_reader(path)?;
    let mut rows = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(idx + 1, |p| p.line() as usize);
        if idx == 0 && is_header(&record) {
            continue;
        }
        if record.len() != 3 {
            return Err(Error::parse(
                path,
                line,
                format!("expected 3 columns, found {}", record.len()),
            ));
        }
        let mut row = [0.0; 3];
        for (slot, field) in row.iter_mut().zip(record.iter()) {
            *slot = field
                .parse()
                .map_err(|_| Error::parse(path, line, format!("not a number: {field:?}")))?;
        }
        rows.push(row);
    }
    ScoreTable::new(rows).map_err(|e| match e {
        Error::Invalid(msg) => Error::parse(path, 0, msg),
        other => other,
    })
}
