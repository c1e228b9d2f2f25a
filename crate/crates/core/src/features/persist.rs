//! Table files: a plain-text header followed by a little-endian binary body.
//!
//! ```text
//! HAPTIC-PPF-TABLES
//! version 1
//! method PN
//! distance_step 5
//! angle_step 0.20943951023931953
//! objects 2
//! object bowl poses 360 keys 812 total 54000 records 360
//! object mug poses 360 keys 1204 total 54000 records none
//! body_bytes 40960
//! checksum <sha256 of body, hex>
//! end_header
//! ```
//!
//! Body, per object in header order: `keys` entries of key components
//! (u32 each, 4 for PN and 1 for P) plus a u64 count, sorted by key; then
//! `records` pose records of a u32 pose index and three keys.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{FeatureKey, Method, ObjectTable, Quantizer, TableSet};
use crate::{Error, Result};

const MAGIC: &str = "HAPTIC-PPF-TABLES";
pub const FORMAT_VERSION: u32 = 1;

fn push_key(body: &mut Vec<u8>, key: &FeatureKey) {
    for c in key.components() {
        body.extend_from_slice(&c.to_le_bytes());
    }
}

/// Serializes tables; fails on an empty or inconsistent set.
pub fn write_tables(tables: &[ObjectTable]) -> Result<Vec<u8>> {
    let set = TableSet::new(tables.to_vec())?;
    let mut header = String::new();
    let mut body = Vec::new();
    writeln!(header, "{MAGIC}").unwrap();
    writeln!(header, "version {FORMAT_VERSION}").unwrap();
    writeln!(header, "method {}", set.method()).unwrap();
    writeln!(header, "distance_step {}", set.quantizer().distance_step).unwrap();
    writeln!(header, "angle_step {}", set.quantizer().angle_step).unwrap();
    writeln!(header, "objects {}", set.len()).unwrap();
    for t in set.tables() {
        if t.name().is_empty() || t.name().chars().any(char::is_whitespace) {
            return Err(Error::InvalidConfig(format!(
                "object name `{}` must be non-empty without whitespace",
                t.name()
            )));
        }
        let records = t
            .pose_keys()
            .map_or_else(|| "none".to_string(), |r| r.len().to_string());
        writeln!(
            header,
            "object {} poses {} keys {} total {} records {}",
            t.name(),
            t.poses(),
            t.len(),
            t.total_count(),
            records
        )
        .unwrap();
        for (key, count) in t.sorted_entries() {
            push_key(&mut body, &key);
            body.extend_from_slice(&count.to_le_bytes());
        }
        if let Some(records) = t.pose_keys() {
            for (pose, keys) in records {
                body.extend_from_slice(&(*pose as u32).to_le_bytes());
                for k in keys {
                    push_key(&mut body, k);
                }
            }
        }
    }
    writeln!(header, "body_bytes {}", body.len()).unwrap();
    writeln!(header, "checksum {}", hex(&Sha256::digest(&body))).unwrap();
    writeln!(header, "end_header").unwrap();
    let mut out = header.into_bytes();
    out.extend_from_slice(&body);
    Ok(out)
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let slice = self
            .bytes
            .get(self.pos..self.pos + N)
            .ok_or_else(|| Error::CorruptFile("body ends early".into()))?;
        self.pos += N;
        Ok(slice.try_into().unwrap())
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take()?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take()?))
    }

    fn key(&mut self, method: Method) -> Result<FeatureKey> {
        Ok(match method {
            Method::PointNormal => {
                FeatureKey::PointNormal([self.u32()?, self.u32()?, self.u32()?, self.u32()?])
            }
            Method::Point => FeatureKey::Point(self.u32()?),
        })
    }
}

struct ObjectHeader {
    name: String,
    poses: usize,
    keys: usize,
    total: u64,
    records: Option<usize>,
}

fn field<'a>(line: Option<&'a str>, name: &str) -> Result<&'a str> {
    let line = line.ok_or_else(|| Error::CorruptFile(format!("header ends before `{name}`")))?;
    line.strip_prefix(name)
        .and_then(|rest| rest.strip_prefix(' '))
        .ok_or_else(|| Error::CorruptFile(format!("expected `{name}`, found `{line}`")))
}

fn number<T: std::str::FromStr>(text: &str, what: &str) -> Result<T> {
    text.parse()
        .map_err(|_| Error::CorruptFile(format!("bad {what} `{text}`")))
}

/// Parses a table file. With `expected`, the stored method and quantizer
/// must match exactly.
pub fn read_tables(bytes: &[u8], expected: Option<(Method, Quantizer)>) -> Result<TableSet> {
    let split = bytes
        .windows(b"end_header\n".len())
        .position(|w| w == b"end_header\n")
        .ok_or_else(|| Error::CorruptFile("missing end_header".into()))?;
    let header = std::str::from_utf8(&bytes[..split])
        .map_err(|_| Error::CorruptFile("header is not UTF-8".into()))?;
    let body = &bytes[split + b"end_header\n".len()..];
    let mut lines = header.lines();
    if lines.next() != Some(MAGIC) {
        return Err(Error::CorruptFile("not a table file".into()));
    }
    let version: u32 = number(field(lines.next(), "version")?, "version")?;
    if version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let method: Method = field(lines.next(), "method")?
        .parse()
        .map_err(|_| Error::CorruptFile("bad method".into()))?;
    let quantizer = Quantizer {
        distance_step: number(field(lines.next(), "distance_step")?, "distance step")?,
        angle_step: number(field(lines.next(), "angle_step")?, "angle step")?,
    };
    quantizer
        .validate()
        .map_err(|_| Error::CorruptFile(format!("bad quantizer {quantizer:?}")))?;
    if let Some((m, q)) = expected {
        if m != method {
            return Err(Error::TableMismatch(format!(
                "file holds {method} tables, {m} requested"
            )));
        }
        if q != quantizer {
            return Err(Error::QuantizerMismatch(format!(
                "file uses {quantizer:?}, {q:?} requested"
            )));
        }
    }
    let objects: usize = number(field(lines.next(), "objects")?, "object count")?;
    let mut headers = Vec::with_capacity(objects);
    for _ in 0..objects {
        let parts: Vec<&str> = field(lines.next(), "object")?.split(' ').collect();
        let [name, "poses", poses, "keys", keys, "total", total, "records", records] =
            parts.as_slice()
        else {
            return Err(Error::CorruptFile(format!(
                "bad object line `{}`",
                parts.join(" ")
            )));
        };
        headers.push(ObjectHeader {
            name: name.to_string(),
            poses: number(poses, "pose count")?,
            keys: number(keys, "key count")?,
            total: number(total, "total")?,
            records: match *records {
                "none" => None,
                n => Some(number(n, "record count")?),
            },
        });
    }
    let body_bytes: usize = number(field(lines.next(), "body_bytes")?, "body size")?;
    let checksum = field(lines.next(), "checksum")?;
    if lines.next().is_some() {
        return Err(Error::CorruptFile("unexpected header lines".into()));
    }
    if body.len() != body_bytes {
        return Err(Error::CorruptFile(format!(
            "body is {} bytes, header says {body_bytes}",
            body.len()
        )));
    }
    if hex(&Sha256::digest(body)) != checksum {
        return Err(Error::CorruptFile("checksum mismatch".into()));
    }

    let mut cursor = Cursor {
        bytes: body,
        pos: 0,
    };
    let mut tables = Vec::with_capacity(objects);
    for h in headers {
        let mut counts = Vec::with_capacity(h.keys);
        for _ in 0..h.keys {
            let key = cursor.key(method)?;
            counts.push((key, cursor.u64()?));
        }
        let records = match h.records {
            None => None,
            Some(n) => {
                let mut map = std::collections::BTreeMap::new();
                for _ in 0..n {
                    let pose = cursor.u32()? as usize;
                    let keys = [
                        cursor.key(method)?,
                        cursor.key(method)?,
                        cursor.key(method)?,
                    ];
                    map.insert(pose, keys);
                }
                Some(map)
            }
        };
        let table = ObjectTable::from_parts(h.name, method, quantizer, h.poses, counts, records)
            .map_err(|e| Error::CorruptFile(e.to_string()))?;
        if table.total_count() != h.total || table.len() != h.keys {
            return Err(Error::CorruptFile(format!(
                "table `{}` totals disagree with header",
                table.name()
            )));
        }
        tables.push(table);
    }
    if cursor.pos != body.len() {
        return Err(Error::CorruptFile("trailing bytes in body".into()));
    }
    TableSet::new(tables).map_err(|e| Error::CorruptFile(e.to_string()))
}

pub fn save_tables(tables: &[ObjectTable], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = write_tables(tables)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_tables(
    path: impl AsRef<Path>,
    expected: Option<(Method, Quantizer)>,
) -> Result<TableSet> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    read_tables(&bytes, expected)
}

/// CSV of one table's keys and counts in lexicographic key order.
pub fn dump_table_csv(table: &ObjectTable) -> String {
    let mut out = match table.method() {
        Method::PointNormal => {
            String::from("distance_bin,angle_n1_d_bin,angle_n2_d_bin,angle_n1_n2_bin,count\n")
        }
        Method::Point => String::from("distance_bin,count\n"),
    };
    for (key, count) in table.sorted_entries() {
        for c in key.components() {
            write!(out, "{c},").unwrap();
        }
        writeln!(out, "{count}").unwrap();
    }
    out
}
