//! Field dump format: raw little-endian 64-bit floats, row-major, one file
//! per field per snapshot, with a sidecar `.meta` file in key = value form
//! recording shape and grid provenance.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use ndarray::{ArrayD, IxDyn};

use super::{GridError, PhaseGrid};

/// Sidecar metadata describing one dumped field.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldMeta {
    pub shape: Vec<usize>,
    pub d: usize,
    pub nx: usize,
    pub nv: usize,
    pub vmax: f64,
    pub time: f64,
    pub field_name: String,
    pub endianness: String,
}

impl FieldMeta {
    fn render(&self) -> String {
        let shape = self
            .shape
            .iter()
            .map(|s| s.to_string())
            .collect::<Vec<_>>()
            .join(", ");
        format!(
            "shape = [{shape}]\nd = {}\nnx = {}\nnv = {}\nvmax = {}\ntime = {}\nfield_name = \"{}\"\nendianness = \"{}\"\n",
            self.d, self.nx, self.nv, self.vmax, self.time, self.field_name, self.endianness
        )
    }

    fn parse(text: &str) -> Result<Self, GridError> {
        let mut shape = None;
        let mut d = None;
        let mut nx = None;
        let mut nv = None;
        let mut vmax = None;
        let mut time = None;
        let mut field_name = None;
        let mut endianness = None;
        for line in text.lines() {
            let Some((key, value)) = line.split_once('=') else { continue };
            let key = key.trim();
            let value = value.trim();
            match key {
                "shape" => {
                    let inner = value
                        .trim_start_matches('[')
                        .trim_end_matches(']')
                        .trim();
                    let parsed: Result<Vec<usize>, _> = if inner.is_empty() {
                        Ok(Vec::new())
                    } else {
                        inner.split(',').map(|s| s.trim().parse()).collect()
                    };
                    shape = Some(parsed.map_err(|e| GridError::BadFile(format!("shape: {e}")))?);
                }
                "d" => d = Some(value.parse().map_err(|e| GridError::BadFile(format!("d: {e}")))?),
                "nx" => nx = Some(value.parse().map_err(|e| GridError::BadFile(format!("nx: {e}")))?),
                "nv" => nv = Some(value.parse().map_err(|e| GridError::BadFile(format!("nv: {e}")))?),
                "vmax" => {
                    vmax = Some(value.parse().map_err(|e| GridError::BadFile(format!("vmax: {e}")))?)
                }
                "time" => {
                    time = Some(value.parse().map_err(|e| GridError::BadFile(format!("time: {e}")))?)
                }
                "field_name" => field_name = Some(value.trim_matches('"').to_string()),
                "endianness" => endianness = Some(value.trim_matches('"').to_string()),
                _ => return Err(GridError::BadFile(format!("unknown metadata key {key}"))),
            }
        }
        let missing = |what: &str| GridError::BadFile(format!("missing metadata key {what}"));
        Ok(Self {
            shape: shape.ok_or_else(|| missing("shape"))?,
            d: d.ok_or_else(|| missing("d"))?,
            nx: nx.ok_or_else(|| missing("nx"))?,
            nv: nv.ok_or_else(|| missing("nv"))?,
            vmax: vmax.ok_or_else(|| missing("vmax"))?,
            time: time.ok_or_else(|| missing("time"))?,
            field_name: field_name.ok_or_else(|| missing("field_name"))?,
            endianness: endianness.ok_or_else(|| missing("endianness"))?,
        })
    }
}

/// Writes `values` as raw little-endian f64 plus a sidecar `<stem>.meta`.
/// Returns the data file path.
pub fn write_field(
    dir: &Path,
    name: &str,
    time: f64,
    grid: &PhaseGrid,
    values: &ArrayD<f64>,
) -> Result<PathBuf, GridError> {
    fs::create_dir_all(dir)?;
    let data_path = dir.join(format!("{name}.f64"));
    let meta_path = dir.join(format!("{name}.meta"));
    let mut bytes = Vec::with_capacity(values.len() * 8);
    let standard = values.as_standard_layout();
    for &x in standard.iter() {
        bytes.extend_from_slice(&x.to_le_bytes());
    }
    fs::File::create(&data_path)?.write_all(&bytes)?;
    let meta = FieldMeta {
        shape: values.shape().to_vec(),
        d: grid.d(),
        nx: grid.nx(),
        nv: grid.nv(),
        vmax: grid.vmax(),
        time,
        field_name: name.to_string(),
        endianness: "little".to_string(),
    };
    fs::File::create(&meta_path)?.write_all(meta.render().as_bytes())?;
    Ok(data_path)
}

/// Reads a field written by [`write_field`], returning values and metadata.
pub fn read_field(data_path: &Path) -> Result<(ArrayD<f64>, FieldMeta), GridError> {
    let meta_path = data_path.with_extension("meta");
    let meta_text = fs::read_to_string(&meta_path)?;
    let meta = FieldMeta::parse(&meta_text)?;
    if meta.endianness != "little" {
        return Err(GridError::BadFile(format!("unsupported endianness {}", meta.endianness)));
    }
    let mut bytes = Vec::new();
    fs::File::open(data_path)?.read_to_end(&mut bytes)?;
    let expected: usize = meta.shape.iter().product::<usize>() * 8;
    if bytes.len() != expected {
        return Err(GridError::BadFile(format!(
            "data length {} does not match shape (expected {expected} bytes)",
            bytes.len()
        )));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let arr = ArrayD::from_shape_vec(IxDyn(&meta.shape), values)
        .map_err(|e| GridError::BadFile(format!("shape mismatch: {e}")))?;
    Ok((arr, meta))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_preserves_bits_and_metadata() {
        let dir = std::env::temp_dir().join(format!("spray-io-test-{}", std::process::id()));
        let grid = PhaseGrid::new(1, 16, 8, 4.0).unwrap();
        let field = grid.scalar_from_fn(|x| x[0].sin() + 1.0 / 3.0);
        let path = write_field(&dir, "rho_0001", 0.125, &grid, &field).unwrap();
        let (back, meta) = read_field(&path).unwrap();
        assert_eq!(meta.field_name, "rho_0001");
        assert_eq!(meta.nx, 16);
        assert_eq!(meta.time, 0.125);
        assert_eq!(meta.shape, vec![16]);
        for (a, b) in back.iter().zip(field.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        fs::remove_dir_all(&dir).ok();
    }
}
