//! Versioned binary model container: magic, version, architecture
//! descriptor, scaling block, then the tensor table with raw `f64`
//! little-endian payloads. Save/load round-trips are bitwise.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use shredmhd_core::dataset::{FieldKind, MinMax, OutputMap, ScalingParams};
use shredmhd_core::linalg::DenseMatrix;
use shredmhd_core::shred::{ShredArch, ShredModel};

use crate::error::{io_err, AppError, Result};

const MAGIC: &[u8; 8] = b"SHRDMDL\x00";
const VERSION: u32 = 1;

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn new() -> Self {
        Self { buf: Vec::new() }
    }
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn bool(&mut self, v: bool) {
        self.buf.push(u8::from(v));
    }
    fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.buf.extend_from_slice(s.as_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn err(&self, detail: impl Into<String>) -> AppError {
        AppError::Format {
            what: "model file",
            path: self.path.to_path_buf(),
            detail: detail.into(),
        }
    }
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(self.err(format!(
                "truncated: wanted {n} bytes at offset {}, file has {}",
                self.pos,
                self.bytes.len()
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn bool(&mut self) -> Result<bool> {
        Ok(self.take(1)?[0] != 0)
    }
    fn str(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        if n > 4096 {
            return Err(self.err(format!("implausible string length {n}")));
        }
        let bytes = self.take(n)?;
        String::from_utf8(bytes.to_vec()).map_err(|e| self.err(format!("bad utf8: {e}")))
    }
}

pub fn encode(model: &ShredModel) -> Vec<u8> {
    let mut w = Writer::new();
    w.buf.extend_from_slice(MAGIC);
    w.u32(VERSION);

    // Architecture.
    let a = &model.arch;
    w.u64(a.n_sensors as u64);
    w.u64(a.hidden as u64);
    w.u64(a.sdn_hidden.0 as u64);
    w.u64(a.sdn_hidden.1 as u64);
    w.u64(a.lag as u64);
    w.bool(a.output_map.param_head);
    w.u32(a.output_map.blocks.len() as u32);
    for (name, rank) in &a.output_map.blocks {
        w.str(name);
        w.u64(*rank as u64);
    }

    // Scaling.
    let s = &model.scaling;
    w.u32(s.fields.len() as u32);
    for (kind, mm) in &s.fields {
        w.str(kind.name());
        w.f64(mm.min);
        w.f64(mm.max);
    }
    w.u32(s.latent.len() as u32);
    for mm in &s.latent {
        w.f64(mm.min);
        w.f64(mm.max);
    }
    match &s.drive {
        Some(mm) => {
            w.bool(true);
            w.f64(mm.min);
            w.f64(mm.max);
        }
        None => w.bool(false),
    }

    // Tensor table and payloads.
    let tensors = model.tensors();
    w.u32(tensors.len() as u32);
    for t in &tensors {
        w.str(t.name);
        w.u64(t.rows as u64);
        w.u64(t.cols as u64);
    }
    for t in &tensors {
        for v in t.data {
            w.f64(*v);
        }
    }
    w.buf
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<ShredModel> {
    let mut r = Reader { bytes, pos: 0, path };
    let magic = r.take(8)?;
    if magic != MAGIC {
        return Err(r.err("bad magic"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(AppError::Version {
            found: version,
            expected: VERSION,
            path: path.to_path_buf(),
        });
    }

    let n_sensors = r.u64()? as usize;
    let hidden = r.u64()? as usize;
    let sdn1 = r.u64()? as usize;
    let sdn2 = r.u64()? as usize;
    let lag = r.u64()? as usize;
    let param_head = r.bool()?;
    let n_blocks = r.u32()? as usize;
    let mut blocks = Vec::with_capacity(n_blocks);
    for _ in 0..n_blocks {
        let name = r.str()?;
        let rank = r.u64()? as usize;
        blocks.push((name, rank));
    }
    let output_map = OutputMap { blocks, param_head };

    let n_fields = r.u32()? as usize;
    let mut fields = Vec::with_capacity(n_fields);
    for _ in 0..n_fields {
        let name = r.str()?;
        let kind = FieldKind::from_name(&name)
            .ok_or_else(|| r.err(format!("unknown field {name}")))?;
        let min = r.f64()?;
        let max = r.f64()?;
        fields.push((kind, MinMax { min, max }));
    }
    let n_latent = r.u32()? as usize;
    let mut latent = Vec::with_capacity(n_latent);
    for _ in 0..n_latent {
        let min = r.f64()?;
        let max = r.f64()?;
        latent.push(MinMax { min, max });
    }
    let drive = if r.bool()? {
        Some(MinMax {
            min: r.f64()?,
            max: r.f64()?,
        })
    } else {
        None
    };
    let scaling = ScalingParams {
        fields,
        latent,
        drive,
    };

    let arch = ShredArch {
        n_sensors,
        hidden,
        sdn_hidden: (sdn1, sdn2),
        lag,
        output_map,
    };
    let mut model = ShredModel::zeros(arch, scaling)
        .map_err(|e| r.err(format!("invalid architecture: {e}")))?;

    let n_tensors = r.u32()? as usize;
    let expected = model.tensors().len();
    if n_tensors != expected {
        return Err(r.err(format!("{n_tensors} tensors, expected {expected}")));
    }
    let mut shapes = Vec::with_capacity(n_tensors);
    {
        let views = model.tensors();
        for view in &views {
            let name = r.str()?;
            let rows = r.u64()? as usize;
            let cols = r.u64()? as usize;
            if name != view.name || rows != view.rows || cols != view.cols {
                return Err(r.err(format!(
                    "tensor {name} {rows}x{cols} does not match architecture {} {}x{}",
                    view.name, view.rows, view.cols
                )));
            }
            shapes.push(rows * cols);
        }
    }
    for (slice, len) in model.tensor_slices_mut().into_iter().zip(shapes) {
        debug_assert_eq!(slice.len(), len);
        for v in slice.iter_mut() {
            *v = r.f64()?;
        }
    }
    if r.pos != bytes.len() {
        return Err(r.err(format!(
            "{} trailing bytes after payload",
            bytes.len() - r.pos
        )));
    }
    Ok(model)
}

pub fn save_model(path: &Path, model: &ShredModel) -> Result<()> {
    let mut f = fs::File::create(path).map_err(io_err(path))?;
    f.write_all(&encode(model)).map_err(io_err(path))?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<ShredModel> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .map_err(io_err(path))?
        .read_to_end(&mut bytes)
        .map_err(io_err(path))?;
    decode(&bytes, path)
}

/// A basis with its singular values, stored as one dmx matrix whose first
/// row carries sigma (padded by zeros) above the U payload would be
/// ambiguous; instead sigma rides in the bundle manifest and U in plain
/// dmx. This helper reassembles a `ReducedBasis`.
pub fn basis_from_parts(
    u: DenseMatrix,
    sigma: Vec<f64>,
) -> std::result::Result<shredmhd_core::linalg::ReducedBasis, shredmhd_core::linalg::LinalgError> {
    shredmhd_core::linalg::ReducedBasis::new(u, sigma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use shredmhd_core::dataset::{MinMax, OutputMap, ScalingParams};
    use shredmhd_core::shred::{predict, ShredArch, ShredModel};

    fn sample_model() -> ShredModel {
        let arch = ShredArch {
            n_sensors: 3,
            hidden: 8,
            sdn_hidden: (10, 12),
            lag: 6,
            output_map: OutputMap {
                blocks: vec![("T".into(), 2), ("p".into(), 2)],
                param_head: true,
            },
        };
        let scaling = ScalingParams {
            fields: vec![
                (FieldKind::Temperature, MinMax { min: 560.0, max: 600.0 }),
                (FieldKind::Pressure, MinMax { min: -3.0, max: 7.0 }),
            ],
            latent: vec![
                MinMax { min: -1.0, max: 2.0 },
                MinMax { min: 0.0, max: 1.0 },
                MinMax { min: -5.0, max: 5.0 },
                MinMax { min: 0.25, max: 0.5 },
            ],
            drive: Some(MinMax { min: 0.5, max: 2.0 }),
        };
        ShredModel::init(arch, scaling, 77).unwrap()
    }

    #[test]
    fn save_load_save_is_bitwise() {
        let model = sample_model();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.bin");
        save_model(&path, &model).unwrap();
        let loaded = load_model(&path).unwrap();
        assert_eq!(model, loaded);
        let path2 = dir.path().join("model2.bin");
        save_model(&path2, &loaded).unwrap();
        let a = std::fs::read(&path).unwrap();
        let b = std::fs::read(&path2).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn loaded_model_predicts_identically() {
        let model = sample_model();
        let bytes = encode(&model);
        let loaded = decode(&bytes, Path::new("m.bin")).unwrap();
        let window = DenseMatrix::from_fn(6, 3, |i, j| ((i * 3 + j) as f64).sin() * 0.3);
        let a = predict(&model, &window).unwrap();
        let b = predict(&loaded, &window).unwrap();
        // Bitwise equality of every output component.
        for (x, y) in a.latent.iter().zip(&b.latent) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        assert_eq!(
            a.drive.unwrap().to_bits(),
            b.drive.unwrap().to_bits()
        );
    }

    #[test]
    fn truncated_and_corrupt_files_are_rejected() {
        let model = sample_model();
        let bytes = encode(&model);
        let p = Path::new("model.bin");
        assert!(decode(&bytes[..bytes.len() - 3], p).is_err());
        assert!(decode(&bytes[..40], p).is_err());
        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'X';
        assert!(decode(&bad_magic, p).is_err());
        let mut bad_version = bytes.clone();
        bad_version[8] = 99;
        assert!(matches!(
            decode(&bad_version, p),
            Err(AppError::Version { found: 99, .. })
        ));
        let mut trailing = bytes;
        trailing.push(0);
        assert!(decode(&trailing, p).is_err());
    }
}
