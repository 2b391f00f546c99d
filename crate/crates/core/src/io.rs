//! File formats: DPM1 depth maps, detection / ground-truth / weight-record
//! JSONL, and lookup-table JSON.
//!
//! Reals in JSON are written with the shortest representation that parses
//! back to the same `f64`, so every writer here is value-exact against its
//! reader.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dct::FitConfig;
use crate::error::{Error, Result};
use crate::types::{BBox, DepthMap, Detection, GroundTruthBox, LookupTable, ThresholdCurve};

pub const DPM_MAGIC: &[u8; 4] = b"DPM1";
pub const LUT_FORMAT: &str = "depthprior-lut-v1";
const DPM_HEADER_LEN: usize = 12;

// ---------------------------------------------------------------------------
// DPM1
// ---------------------------------------------------------------------------

pub fn encode_depth_map(map: &DepthMap) -> Vec<u8> {
    let mut out = Vec::with_capacity(DPM_HEADER_LEN + 4 * map.values().len());
    out.extend_from_slice(DPM_MAGIC);
    out.extend_from_slice(&(map.width() as u32).to_le_bytes());
    out.extend_from_slice(&(map.height() as u32).to_le_bytes());
    for v in map.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_depth_map(bytes: &[u8]) -> Result<DepthMap> {
    let fmt = |offset: usize, message: String| Error::DepthFormat { offset, message };
    if bytes.len() < 4 {
        return Err(fmt(
            0,
            format!("file too short for magic ({} bytes)", bytes.len()),
        ));
    }
    if &bytes[..4] != DPM_MAGIC {
        return Err(fmt(
            0,
            format!("bad magic {:?}, expected \"DPM1\"", &bytes[..4]),
        ));
    }
    if bytes.len() < DPM_HEADER_LEN {
        return Err(fmt(bytes.len(), "truncated header".into()));
    }
    let width = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let height = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    if width == 0 || height == 0 {
        return Err(fmt(4, format!("zero dimension {width}x{height}")));
    }
    let count = width
        .checked_mul(height)
        .ok_or_else(|| fmt(4, format!("dimensions {width}x{height} overflow")))?;
    let expected = DPM_HEADER_LEN + 4 * count;
    if bytes.len() < expected {
        return Err(fmt(
            bytes.len(),
            format!(
                "truncated payload: expected {expected} bytes, got {}",
                bytes.len()
            ),
        ));
    }
    if bytes.len() > expected {
        return Err(fmt(
            expected,
            format!("{} trailing bytes", bytes.len() - expected),
        ));
    }
    let mut values = Vec::with_capacity(count);
    for (i, chunk) in bytes[DPM_HEADER_LEN..].chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() || v < 0.0 {
            return Err(fmt(
                DPM_HEADER_LEN + 4 * i,
                format!("value {v} is not finite and non-negative"),
            ));
        }
        values.push(v);
    }
    DepthMap::new(width, height, values)
}

pub fn read_depth_map(path: impl AsRef<Path>) -> Result<DepthMap> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_depth_map(&bytes)
}

pub fn write_depth_map(map: &DepthMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_depth_map(map)).map_err(|e| Error::io(path, e))
}

/// Loads every `<image>.dpm` in `dir`, keyed by `<image>`.
pub fn read_depth_dir(dir: impl AsRef<Path>) -> Result<BTreeMap<String, DepthMap>> {
    let dir = dir.as_ref();
    let mut maps = BTreeMap::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        if let Some(stem) = name.strip_suffix(".dpm") {
            maps.insert(stem.to_string(), read_depth_map(&path)?);
        }
    }
    Ok(maps)
}

// ---------------------------------------------------------------------------
// JSONL records
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct DetectionRecord {
    image: String,
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
    score: f64,
    class: u32,
}

#[derive(Serialize, Deserialize)]
struct GroundTruthRecord {
    image: String,
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
    class: u32,
}

/// One DLW weight per ground-truth object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightRecord {
    pub image: String,
    pub object_index: usize,
    pub depth_norm: f64,
    pub weight: f64,
}

fn parse_jsonl<T, R, F, U>(reader: R, mut convert: F) -> Result<Vec<U>>
where
    T: for<'de> Deserialize<'de>,
    R: BufRead,
    F: FnMut(T) -> Result<U>,
{
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: T = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        let item = convert(record).map_err(|e| match e {
            Error::Domain(msg) => Error::Domain(format!("line {lineno}: {msg}")),
            other => other,
        })?;
        out.push(item);
    }
    Ok(out)
}

fn open(path: &Path) -> Result<BufReader<fs::File>> {
    Ok(BufReader::new(
        fs::File::open(path).map_err(|e| Error::io(path, e))?,
    ))
}

pub fn parse_detections(reader: impl BufRead) -> Result<Vec<Detection>> {
    parse_jsonl(reader, |r: DetectionRecord| {
        Detection::new(
            r.image,
            BBox::new(r.x1, r.y1, r.x2, r.y2)?,
            r.score,
            r.class,
        )
    })
}

pub fn parse_groundtruth(reader: impl BufRead) -> Result<Vec<GroundTruthBox>> {
    parse_jsonl(reader, |r: GroundTruthRecord| {
        GroundTruthBox::new(r.image, BBox::new(r.x1, r.y1, r.x2, r.y2)?, r.class)
    })
}

pub fn parse_weight_records(reader: impl BufRead) -> Result<Vec<WeightRecord>> {
    parse_jsonl(reader, Ok)
}

pub fn read_detections(path: impl AsRef<Path>) -> Result<Vec<Detection>> {
    parse_detections(open(path.as_ref())?)
}

pub fn read_groundtruth(path: impl AsRef<Path>) -> Result<Vec<GroundTruthBox>> {
    parse_groundtruth(open(path.as_ref())?)
}

pub fn read_weight_records(path: impl AsRef<Path>) -> Result<Vec<WeightRecord>> {
    parse_weight_records(open(path.as_ref())?)
}

fn write_jsonl_to<T: Serialize>(
    mut w: impl Write,
    records: impl Iterator<Item = T>,
) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, &r)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

fn write_jsonl<T: Serialize>(path: &Path, records: impl Iterator<Item = T>) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_jsonl_to(BufWriter::new(file), records).map_err(|e| Error::io(path, e))
}

fn detection_record(d: &Detection) -> DetectionRecord {
    DetectionRecord {
        image: d.image_id.clone(),
        x1: d.bbox.x1,
        y1: d.bbox.y1,
        x2: d.bbox.x2,
        y2: d.bbox.y2,
        score: d.score,
        class: d.class_id,
    }
}

fn groundtruth_record(g: &GroundTruthBox) -> GroundTruthRecord {
    GroundTruthRecord {
        image: g.image_id.clone(),
        x1: g.bbox.x1,
        y1: g.bbox.y1,
        x2: g.bbox.x2,
        y2: g.bbox.y2,
        class: g.class_id,
    }
}

pub fn detections_to_jsonl(dets: &[Detection]) -> String {
    let mut buf = Vec::new();
    write_jsonl_to(&mut buf, dets.iter().map(detection_record)).expect("in-memory write");
    String::from_utf8(buf).expect("serde_json emits UTF-8")
}

pub fn groundtruth_to_jsonl(gts: &[GroundTruthBox]) -> String {
    let mut buf = Vec::new();
    write_jsonl_to(&mut buf, gts.iter().map(groundtruth_record)).expect("in-memory write");
    String::from_utf8(buf).expect("serde_json emits UTF-8")
}

pub fn write_detections(dets: &[Detection], path: impl AsRef<Path>) -> Result<()> {
    write_jsonl(path.as_ref(), dets.iter().map(detection_record))
}

pub fn write_groundtruth(gts: &[GroundTruthBox], path: impl AsRef<Path>) -> Result<()> {
    write_jsonl(path.as_ref(), gts.iter().map(groundtruth_record))
}

pub fn write_weight_records(records: &[WeightRecord], path: impl AsRef<Path>) -> Result<()> {
    write_jsonl(path.as_ref(), records.iter())
}

// ---------------------------------------------------------------------------
// Lookup table
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct LutDocument {
    format: String,
    fit_config: FitConfig,
    entries: Vec<ThresholdCurve>,
}

pub fn lookup_table_to_json(table: &LookupTable) -> String {
    let doc = LutDocument {
        format: LUT_FORMAT.to_string(),
        fit_config: table.fit_config().clone(),
        entries: table.entries().to_vec(),
    };
    let mut s = serde_json::to_string_pretty(&doc).expect("lookup table serializes");
    s.push('\n');
    s
}

pub fn lookup_table_from_json(text: &str) -> Result<LookupTable> {
    let doc: LutDocument =
        serde_json::from_str(text).map_err(|e| Error::Format(format!("lookup table: {e}")))?;
    if doc.format != LUT_FORMAT {
        return Err(Error::Format(format!(
            "unknown lookup table format {:?}, expected {LUT_FORMAT:?}",
            doc.format
        )));
    }
    for w in doc.entries.windows(2) {
        if w[0].tau0 == w[1].tau0 {
            return Err(Error::Format(format!("duplicate tau0 key {}", w[0].tau0)));
        }
        if w[0].tau0 > w[1].tau0 {
            return Err(Error::Format(format!(
                "tau0 keys not increasing: {} before {}",
                w[0].tau0, w[1].tau0
            )));
        }
    }
    LookupTable::new(doc.entries, doc.fit_config).map_err(|e| match e {
        Error::Domain(m) | Error::Config(m) => Error::Format(m),
        other => other,
    })
}

pub fn write_lookup_table(table: &LookupTable, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, lookup_table_to_json(table)).map_err(|e| Error::io(path, e))
}

pub fn read_lookup_table(path: impl AsRef<Path>) -> Result<LookupTable> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    lookup_table_from_json(&text)
}
