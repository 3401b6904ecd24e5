//! Line-oriented dataset files.
//!
//! ```text
//! dpm-dataset v1 dim=2 seed=7 categories=illumination:2,spoof_type:3
//! 0,<x_0>,<x_1>,1,0,-,000,0.0000000000000000e0
//! ```
//!
//! Records are `id, x_0..x_{D-1}, c, s_1..s_K, flags, severity`. Semantic
//! columns follow the sorted category order of the header, `-` marks a
//! category that does not apply. `flags` is three `0`/`1` characters for
//! label-flipped, semantic-reassigned and data-corrupted. Reals carry 17
//! significant digits so a save/load cycle is exact.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use super::{Dataset, NoiseFlags, Sample};
use crate::error::{DpmError, Result};

const MAGIC: &str = "dpm-dataset";
const VERSION: &str = "v1";

pub(crate) fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_dataset<W: Write>(ds: &Dataset, mut w: W) -> Result<()> {
    let cats: Vec<String> = ds
        .categories
        .iter()
        .map(|(k, v)| format!("{k}:{v}"))
        .collect();
    writeln!(
        w,
        "{MAGIC} {VERSION} dim={} seed={} categories={}",
        ds.feature_dim,
        ds.seed,
        cats.join(",")
    )?;
    let mut line = String::new();
    for s in &ds.samples {
        line.clear();
        line.push_str(&s.id.to_string());
        for v in &s.x {
            line.push(',');
            line.push_str(&fmt_real(*v));
        }
        line.push(',');
        line.push_str(&s.c.to_string());
        for name in ds.categories.keys() {
            line.push(',');
            match s.s.get(name) {
                Some(label) => line.push_str(&label.to_string()),
                None => line.push('-'),
            }
        }
        let bit = |b: bool| if b { '1' } else { '0' };
        line.push(',');
        line.push(bit(s.noise.label_flipped));
        line.push(bit(s.noise.semantic_reassigned));
        line.push(bit(s.noise.data_corrupted));
        line.push(',');
        line.push_str(&fmt_real(s.noise.corruption_severity));
        writeln!(w, "{line}")?;
    }
    Ok(())
}

pub fn save_dataset(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut buf = Vec::new();
    write_dataset(ds, &mut buf)?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    read_dataset(fs::File::open(path)?)
}

struct Header {
    dim: usize,
    seed: u64,
    categories: BTreeMap<String, usize>,
}

fn parse_header(line: &str) -> Result<Header> {
    let mut parts = line.split(' ');
    if parts.next() != Some(MAGIC) {
        return Err(DpmError::parse(1, format!("expected `{MAGIC}` header")));
    }
    match parts.next() {
        Some(VERSION) => {}
        other => {
            return Err(DpmError::parse(
                1,
                format!("unsupported version {:?}", other.unwrap_or("")),
            ))
        }
    }
    let (mut dim, mut seed, mut categories) = (None, None, None);
    for part in parts {
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| DpmError::parse(1, format!("malformed header field {part:?}")))?;
        match key {
            "dim" => {
                dim = Some(value.parse::<usize>().map_err(|e| {
                    DpmError::parse(1, format!("field `dim`: {e}"))
                })?)
            }
            "seed" => {
                seed = Some(value.parse::<u64>().map_err(|e| {
                    DpmError::parse(1, format!("field `seed`: {e}"))
                })?)
            }
            "categories" => {
                let mut map = BTreeMap::new();
                for entry in value.split(',').filter(|e| !e.is_empty()) {
                    let (name, card) = entry.split_once(':').ok_or_else(|| {
                        DpmError::parse(1, format!("field `categories`: bad entry {entry:?}"))
                    })?;
                    let card = card.parse::<usize>().map_err(|e| {
                        DpmError::parse(1, format!("field `categories`: {name}: {e}"))
                    })?;
                    map.insert(name.to_string(), card);
                }
                categories = Some(map);
            }
            _ => return Err(DpmError::parse(1, format!("unknown header field {key:?}"))),
        }
    }
    let missing = |f: &str| DpmError::parse(1, format!("header is missing `{f}`"));
    Ok(Header {
        dim: dim.ok_or_else(|| missing("dim"))?,
        seed: seed.ok_or_else(|| missing("seed"))?,
        categories: categories.ok_or_else(|| missing("categories"))?,
    })
}

fn parse_record(header: &Header, line: &str, lineno: usize) -> Result<Sample> {
    let fields: Vec<&str> = line.split(',').collect();
    let k = header.categories.len();
    let expected = 1 + header.dim + 1 + k + 2;
    let id_field = fields[0];
    if fields.len() != expected {
        return Err(DpmError::parse(
            lineno,
            format!(
                "record id {id_field}: expected {expected} fields ({} features), found {}",
                header.dim,
                fields.len()
            ),
        ));
    }
    let err = |field: &str, msg: String| {
        DpmError::parse(lineno, format!("record id {id_field}, field `{field}`: {msg}"))
    };
    let id = id_field
        .parse::<usize>()
        .map_err(|e| err("id", e.to_string()))?;
    let x = fields[1..=header.dim]
        .iter()
        .enumerate()
        .map(|(j, f)| {
            f.parse::<f64>()
                .map_err(|e| err(&format!("x_{j}"), e.to_string()))
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut pos = 1 + header.dim;
    let c = match fields[pos] {
        "0" => 0,
        "1" => 1,
        other => return Err(err("c", format!("expected 0 or 1, found {other:?}"))),
    };
    pos += 1;
    let mut s = BTreeMap::new();
    for (name, &card) in &header.categories {
        let f = fields[pos];
        pos += 1;
        if f == "-" {
            continue;
        }
        let label = f.parse::<usize>().map_err(|e| err(name, e.to_string()))?;
        if label >= card {
            return Err(err(name, format!("label {label} >= cardinality {card}")));
        }
        s.insert(name.clone(), label);
    }
    let flags = fields[pos].as_bytes();
    if flags.len() != 3 || flags.iter().any(|b| *b != b'0' && *b != b'1') {
        return Err(err("flags", format!("expected three 0/1 bits, found {:?}", fields[pos])));
    }
    let severity = fields[pos + 1]
        .parse::<f64>()
        .map_err(|e| err("severity", e.to_string()))?;
    Ok(Sample {
        id,
        x,
        c,
        s,
        noise: NoiseFlags {
            label_flipped: flags[0] == b'1',
            semantic_reassigned: flags[1] == b'1',
            data_corrupted: flags[2] == b'1',
            corruption_severity: severity,
        },
    })
}

pub fn read_dataset<R: Read>(r: R) -> Result<Dataset> {
    let mut lines = BufReader::new(r).lines();
    let header = match lines.next() {
        None => return Err(DpmError::EmptyDataset),
        Some(line) => parse_header(line?.trim_end_matches('\r'))?,
    };
    let mut samples = Vec::new();
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let sample = parse_record(&header, &line, lineno)?;
        if sample.id != samples.len() {
            return Err(DpmError::parse(
                lineno,
                format!("record id {}: expected id {}", sample.id, samples.len()),
            ));
        }
        samples.push(sample);
    }
    if samples.is_empty() {
        return Err(DpmError::EmptyDataset);
    }
    let ds = Dataset {
        samples,
        feature_dim: header.dim,
        categories: header.categories,
        seed: header.seed,
    };
    ds.validate()?;
    Ok(ds)
}
