//! Model checkpoint container.
//!
//! A textual header of `key = value` lines terminated by `end_header`,
//! followed by named arrays. Each array is introduced by a line
//! `array <name> <count>` and stored as `count` row-major little-endian f64
//! values. Writing a checkpoint that was just read reproduces it byte for
//! byte.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array2, Array3};

use crate::error::{Error, Result};
use crate::rtucker::{CoreTensor, ModelKind, RtModel};
use crate::sparsity::{HardConcreteGates, HardConcreteParams};

pub const MAGIC: &str = "rtucker-checkpoint";
pub const FORMAT_VERSION: u32 = 1;

fn write_array<W: Write>(w: &mut W, name: &str, values: &[f64]) -> std::io::Result<()> {
    writeln!(w, "array {name} {}", values.len())?;
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn write_checkpoint<W: Write>(mut w: W, model: &RtModel) -> Result<()> {
    let io = |e| Error::io("<checkpoint>", e);
    let flag = |b: bool| u8::from(b);
    let mut header = String::new();
    header.push_str(&format!("{MAGIC}\nversion = {FORMAT_VERSION}\n"));
    header.push_str(&format!("model = {}\n", model.kind));
    header.push_str(&format!("num_entities = {}\n", model.num_entities()));
    header.push_str(&format!("num_relations = {}\n", model.num_relations()));
    header.push_str(&format!("entity_dim = {}\n", model.entity_dim()));
    header.push_str(&format!("relation_dim = {}\n", model.relation_dim()));
    header.push_str(&format!("relations_fixed = {}\n", flag(model.relations_fixed)));
    header.push_str(&format!("fixed_mask = {}\n", flag(model.core.fixed_mask().is_some())));
    header.push_str(&format!("gates = {}\n", flag(model.gates.is_some())));
    if let Some(g) = &model.gates {
        let p = g.params();
        header.push_str(&format!("gate_beta = {}\n", p.beta));
        header.push_str(&format!("gate_zeta = {}\n", p.zeta));
        header.push_str(&format!("gate_gamma = {}\n", p.gamma));
        header.push_str(&format!("gate_loc_mean = {}\n", p.loc_mean));
        header.push_str(&format!("gate_loc_std = {}\n", p.loc_std));
    }
    header.push_str("end_header\n");
    w.write_all(header.as_bytes()).map_err(io)?;

    let std_layout = "model arrays are in standard layout";
    write_array(&mut w, "entities", model.entities.as_slice().expect(std_layout)).map_err(io)?;
    write_array(&mut w, "relations", model.relations.as_slice().expect(std_layout)).map_err(io)?;
    write_array(&mut w, "core", model.core.values().as_slice().expect(std_layout)).map_err(io)?;
    if let Some(mask) = model.core.fixed_mask() {
        let values: Vec<f64> = mask.iter().map(|&f| if f { 1.0 } else { 0.0 }).collect();
        write_array(&mut w, "fixed_mask", &values).map_err(io)?;
    }
    if let Some(g) = &model.gates {
        write_array(&mut w, "gate_log_alpha", g.log_alpha()).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn save(path: &Path, model: &RtModel) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_checkpoint(BufWriter::new(file), model)
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

struct Header(BTreeMap<String, String>);

impl Header {
    fn get(&self, key: &str) -> Result<&str> {
        self.0
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| bad(format!("header is missing `{key}`")))
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.get(key)?;
        raw.parse()
            .map_err(|_| bad(format!("header `{key}` has unparsable value `{raw}`")))
    }

    fn flag(&self, key: &str) -> Result<bool> {
        match self.get(key)? {
            "0" => Ok(false),
            "1" => Ok(true),
            other => Err(bad(format!("header `{key}` must be 0 or 1, got `{other}`"))),
        }
    }
}

fn read_line<R: BufRead>(r: &mut R) -> Result<String> {
    let mut line = String::new();
    let n = r
        .read_line(&mut line)
        .map_err(|e| bad(format!("unreadable header: {e}")))?;
    if n == 0 {
        return Err(bad("unexpected end of file"));
    }
    Ok(line.trim_end_matches('\n').to_owned())
}

pub fn read_checkpoint<R: Read>(reader: R) -> Result<RtModel> {
    let mut r = BufReader::new(reader);
    if read_line(&mut r)? != MAGIC {
        return Err(bad("not a checkpoint file"));
    }
    let mut entries = BTreeMap::new();
    loop {
        let line = read_line(&mut r)?;
        if line == "end_header" {
            break;
        }
        let (k, v) = line
            .split_once(" = ")
            .ok_or_else(|| bad(format!("malformed header line `{line}`")))?;
        entries.insert(k.to_owned(), v.to_owned());
    }
    let header = Header(entries);
    let version: u32 = header.parse("version")?;
    if version != FORMAT_VERSION {
        return Err(bad(format!("unsupported format version {version}")));
    }
    let kind: ModelKind = header.get("model")?.parse().map_err(|e| bad(format!("{e}")))?;
    let n: usize = header.parse("num_entities")?;
    let k: usize = header.parse("num_relations")?;
    let d_e: usize = header.parse("entity_dim")?;
    let d_r: usize = header.parse("relation_dim")?;
    let relations_fixed = header.flag("relations_fixed")?;
    let has_mask = header.flag("fixed_mask")?;
    let has_gates = header.flag("gates")?;

    let mut read_array = |name: &str, count: usize| -> Result<Vec<f64>> {
        let line = read_line(&mut r)?;
        let expected = format!("array {name} {count}");
        if line != expected {
            return Err(bad(format!("expected `{expected}`, found `{line}`")));
        }
        let mut buf = vec![0u8; count * 8];
        r.read_exact(&mut buf)
            .map_err(|e| bad(format!("array `{name}` truncated: {e}")))?;
        Ok(buf
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect())
    };

    let shape_err = |e: ndarray::ShapeError| bad(format!("array shape: {e}"));
    let entities = Array2::from_shape_vec((n, d_e), read_array("entities", n * d_e)?).map_err(shape_err)?;
    let relations = Array2::from_shape_vec((k, d_r), read_array("relations", k * d_r)?).map_err(shape_err)?;
    let core_len = d_r * d_e * d_e;
    let core_values = Array3::from_shape_vec((d_r, d_e, d_e), read_array("core", core_len)?).map_err(shape_err)?;
    let mut core = CoreTensor::new(core_values)?;
    if has_mask {
        let raw = read_array("fixed_mask", core_len)?;
        let mask =
            Array3::from_shape_vec((d_r, d_e, d_e), raw.iter().map(|&v| v != 0.0).collect()).map_err(shape_err)?;
        core = core.with_fixed_mask(mask)?;
    }
    let mut model = RtModel::new(kind, entities, relations, core)?;
    model.relations_fixed = relations_fixed;
    if has_gates {
        let params = HardConcreteParams {
            beta: header.parse("gate_beta")?,
            zeta: header.parse("gate_zeta")?,
            gamma: header.parse("gate_gamma")?,
            loc_mean: header.parse("gate_loc_mean")?,
            loc_std: header.parse("gate_loc_std")?,
        };
        let log_alpha = read_array("gate_log_alpha", core_len)?;
        model = model.with_gates(HardConcreteGates::from_log_alpha(log_alpha, params)?)?;
    }
    let mut rest = Vec::new();
    r.read_to_end(&mut rest).map_err(|e| bad(format!("{e}")))?;
    if !rest.is_empty() {
        return Err(bad(format!("{} trailing bytes", rest.len())));
    }
    Ok(model)
}

pub fn load(path: &Path) -> Result<RtModel> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(file)
}
