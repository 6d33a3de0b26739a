use std::fs;
use std::path::Path;

use super::model::Model;
use crate::error::{Error, Result};

/// Writes `<stem>.bin` (little-endian `f64` values of every parameter,
/// concatenated) and `<stem>.manifest` (`name shape offset` per line, shape
/// as `AxB`, offset in values).
pub fn save_checkpoint(model: &Model, dir: &Path, stem: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut bytes = Vec::new();
    let mut manifest = String::new();
    let mut offset = 0;
    for (name, p) in model.parameter_names().iter().zip(model.parameters()) {
        let shape: Vec<String> = p.shape().iter().map(|d| d.to_string()).collect();
        manifest.push_str(&format!("{name} {} {offset}\n", shape.join("x")));
        for x in p.data() {
            bytes.extend_from_slice(&x.to_le_bytes());
        }
        offset += p.numel();
    }
    fs::write(dir.join(format!("{stem}.bin")), bytes)?;
    fs::write(dir.join(format!("{stem}.manifest")), manifest)?;
    Ok(())
}

/// Restores parameters into a model with the same architecture.
pub fn load_checkpoint(model: &mut Model, dir: &Path, stem: &str) -> Result<()> {
    let bytes = fs::read(dir.join(format!("{stem}.bin")))?;
    let manifest = fs::read_to_string(dir.join(format!("{stem}.manifest")))?;
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    let names = model.parameter_names();
    let lines: Vec<&str> = manifest.lines().filter(|l| !l.trim().is_empty()).collect();
    if lines.len() != names.len() {
        return Err(Error::validation(format!(
            "checkpoint has {} arrays, model has {}",
            lines.len(),
            names.len()
        )));
    }
    for (i, ((line, name), param)) in lines
        .iter()
        .zip(&names)
        .zip(model.parameters_mut())
        .enumerate()
    {
        let fields: Vec<&str> = line.split_whitespace().collect();
        let bad = |msg: &str| Error::at_line(msg.to_string(), i + 1);
        let [entry, shape, offset] = fields[..] else {
            return Err(bad("expected \"name shape offset\""));
        };
        if entry != name {
            return Err(bad(&format!("expected array {name}, found {entry}")));
        }
        let shape: Vec<usize> = shape
            .split('x')
            .map(|d| d.parse().map_err(|_| bad("bad shape")))
            .collect::<Result<_>>()?;
        if shape != param.shape() {
            return Err(bad(&format!(
                "shape {shape:?} differs from model {:?}",
                param.shape()
            )));
        }
        let offset: usize = offset.parse().map_err(|_| bad("bad offset"))?;
        let slice = values
            .get(offset..offset + param.numel())
            .ok_or_else(|| bad("array extends past end of data"))?;
        param.data_mut().copy_from_slice(slice);
    }
    Ok(())
}
