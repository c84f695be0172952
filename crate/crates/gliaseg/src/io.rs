//! Volume and result persistence.
//!
//! Inputs: multi-page grayscale TIFF stacks (pages are z slices; unsigned
//! integer samples are rescaled to [0, 1] by the type maximum) or the raw
//! format below. Outputs: masks as 8-bit TIFF stacks (0/255), level sets
//! as raw float32, and one JSON report with diagnostics and metrics.
//!
//! Raw format, bit-exact: 16-byte magic `GLIASEGRAWV001\0\0`, one UTF-8
//! JSON header line terminated by `\n`, then the payload, little-endian,
//! x-fastest axis order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write as IoWrite};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tiff::decoder::{Decoder, DecodingResult};
use tiff::encoder::colortype::Gray8;
use tiff::encoder::TiffEncoder;

use crate::error::{Error, Result};
use crate::init::BinaryMask;
use crate::levelset::SegmentationResult;
use crate::metrics::MetricsReport;
use crate::volume::ScalarVolume;

pub const RAW_MAGIC: &[u8; 16] = b"GLIASEGRAWV001\0\0";

/// Header line of the raw volume format.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VolumeHeader {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub dtype: String,
    pub axis_order: String,
}

fn open_input(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::InputNotFound(path.display().to_string())
        } else {
            Error::Io(e)
        }
    })
}

/// Read a volume from a raw file or a multi-page grayscale TIFF stack.
/// `spacing_override`, when given, wins over any header spacing.
pub fn read_volume(path: &Path, spacing_override: Option<(f64, f64, f64)>) -> Result<ScalarVolume> {
    let mut file = open_input(path)?;
    let mut magic = [0u8; 16];
    let is_raw = match file.read_exact(&mut magic) {
        Ok(()) => &magic == RAW_MAGIC,
        Err(_) => false,
    };
    drop(file);
    if is_raw {
        read_volume_raw(path, spacing_override)
    } else {
        read_volume_tiff(path, spacing_override)
    }
}

fn read_volume_raw(path: &Path, spacing_override: Option<(f64, f64, f64)>) -> Result<ScalarVolume> {
    let mut bytes = Vec::new();
    open_input(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 16 || &bytes[..16] != RAW_MAGIC {
        return Err(Error::Format("missing raw volume magic".into()));
    }
    let rest = &bytes[16..];
    let nl = rest
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Format("raw header line is not terminated".into()))?;
    let header: VolumeHeader = serde_json::from_slice(&rest[..nl])
        .map_err(|e| Error::Format(format!("bad raw header: {e}")))?;
    if header.axis_order != "x-fastest" {
        return Err(Error::Format(format!(
            "unsupported axis order {:?}; this reader expects \"x-fastest\"",
            header.axis_order
        )));
    }
    let payload = &rest[nl + 1..];
    let n: usize = header.dims.iter().product();
    let elem = match header.dtype.as_str() {
        "u8" => 1,
        "u16" => 2,
        "f32" => 4,
        other => {
            return Err(Error::Format(format!(
                "unsupported raw dtype {other:?}; expected u8, u16 or f32"
            )))
        }
    };
    if payload.len() != n * elem {
        return Err(Error::PayloadLength { expected: n * elem, actual: payload.len() });
    }
    let data: Vec<f64> = match header.dtype.as_str() {
        "u8" => payload.iter().map(|&b| b as f64 / 255.0).collect(),
        "u16" => payload
            .chunks_exact(2)
            .map(|c| u16::from_le_bytes([c[0], c[1]]) as f64 / 65535.0)
            .collect(),
        _ => payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect(),
    };
    let spacing = spacing_override.unwrap_or((header.spacing[0], header.spacing[1], header.spacing[2]));
    ScalarVolume::new((header.dims[0], header.dims[1], header.dims[2]), spacing, data)
}

fn read_volume_tiff(path: &Path, spacing_override: Option<(f64, f64, f64)>) -> Result<ScalarVolume> {
    let file = open_input(path)?;
    let mut decoder = Decoder::new(BufReader::new(file))
        .map_err(|e| Error::Format(format!("not a TIFF stack: {e}")))?;
    let mut slices: Vec<Vec<f64>> = Vec::new();
    let mut dims_xy: Option<(u32, u32)> = None;
    loop {
        let (w, h) = decoder
            .dimensions()
            .map_err(|e| Error::Format(format!("bad TIFF page: {e}")))?;
        match dims_xy {
            None => dims_xy = Some((w, h)),
            Some(d) if d != (w, h) => {
                return Err(Error::Format(format!(
                    "inconsistent page dimensions: {:?} then {:?}",
                    d,
                    (w, h)
                )))
            }
            _ => {}
        }
        let color = decoder
            .colortype()
            .map_err(|e| Error::Format(format!("bad TIFF color type: {e}")))?;
        match color {
            tiff::ColorType::Gray(_) => {}
            other => {
                return Err(Error::Format(format!(
                    "unsupported TIFF color type {other:?}; only grayscale pages are supported"
                )))
            }
        }
        let img = decoder
            .read_image()
            .map_err(|e| Error::Format(format!("failed to decode TIFF page: {e}")))?;
        let slice: Vec<f64> = match img {
            DecodingResult::U8(v) => v.iter().map(|&b| b as f64 / 255.0).collect(),
            DecodingResult::U16(v) => v.iter().map(|&b| b as f64 / 65535.0).collect(),
            DecodingResult::F32(v) => v.iter().map(|&b| b as f64).collect(),
            _ => {
                return Err(Error::Format(
                    "unsupported TIFF bit depth; expected 8-bit, 16-bit or float32 grayscale".into(),
                ))
            }
        };
        slices.push(slice);
        if !decoder.more_images() {
            break;
        }
        decoder
            .next_image()
            .map_err(|e| Error::Format(format!("failed to advance TIFF page: {e}")))?;
    }
    let (w, h) = dims_xy.expect("at least one page");
    let (nx, ny, nz) = (w as usize, h as usize, slices.len());
    let mut data = Vec::with_capacity(nx * ny * nz);
    for s in &slices {
        if s.len() != nx * ny {
            return Err(Error::PayloadLength { expected: nx * ny, actual: s.len() });
        }
        data.extend_from_slice(s);
    }
    let spacing = spacing_override.unwrap_or((1.0, 1.0, 1.0));
    ScalarVolume::new((nx, ny, nz), spacing, data)
}

/// Write a volume in the raw float32 format.
pub fn write_volume_raw(v: &ScalarVolume, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(RAW_MAGIC)?;
    let (nx, ny, nz) = v.dims();
    let (sx, sy, sz) = v.spacing();
    let header = VolumeHeader {
        dims: [nx, ny, nz],
        spacing: [sx, sy, sz],
        dtype: "f32".into(),
        axis_order: "x-fastest".into(),
    };
    serde_json::to_writer(&mut out, &header).map_err(|e| Error::Format(e.to_string()))?;
    out.write_all(b"\n")?;
    for &x in v.data() {
        out.write_all(&(x as f32).to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

/// Write a mask as an 8-bit multi-page TIFF (0 background, 255 inside).
pub fn write_mask_tiff(m: &BinaryMask, path: &Path) -> Result<()> {
    let file = File::create(path)?;
    let mut encoder = TiffEncoder::new(BufWriter::new(file))
        .map_err(|e| Error::Format(format!("cannot start TIFF: {e}")))?;
    let (nx, ny, nz) = m.dims();
    for z in 0..nz {
        let mut page = Vec::with_capacity(nx * ny);
        for y in 0..ny {
            for x in 0..nx {
                page.push(if m.get(x, y, z) { 255u8 } else { 0u8 });
            }
        }
        encoder
            .write_image::<Gray8>(nx as u32, ny as u32, &page)
            .map_err(|e| Error::Format(format!("cannot write TIFF page: {e}")))?;
    }
    Ok(())
}

/// Read an 8-bit mask TIFF back (any value above 127 is foreground).
pub fn read_mask_tiff(path: &Path) -> Result<BinaryMask> {
    let v = read_volume_tiff(path, None)?;
    let bits = v.data().iter().map(|&x| x > 127.0 / 255.0).collect();
    BinaryMask::from_bits(v.dims(), bits)
}

/// The complete run report: diagnostics plus (optional) metrics, one JSON
/// document with fixed field names.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub cell_id: String,
    pub dice: Option<f64>,
    pub dice_convex_hull: Option<f64>,
    pub ramification_index: Option<f64>,
    pub volume_voxels: usize,
    pub surface_area: f64,
    pub dice_both_empty: bool,
    pub iterations: usize,
    pub converged: bool,
    pub soma_absent: bool,
    pub tube_seed_empty: bool,
    pub cfl_warnings: usize,
    pub spacing: [f64; 3],
    pub energies: Vec<[f64; 2]>,
    pub overlap: Vec<usize>,
}

impl RunReport {
    pub fn assemble(result: &SegmentationResult, metrics: Option<&MetricsReport>, cell_id: &str) -> RunReport {
        let d = &result.diagnostics;
        let (sx, sy, sz) = result.phi_tuff.phi().spacing();
        RunReport {
            cell_id: cell_id.to_string(),
            dice: metrics.and_then(|m| m.dice),
            dice_convex_hull: metrics.and_then(|m| m.dice_convex_hull),
            ramification_index: metrics.and_then(|m| m.ramification_index),
            volume_voxels: metrics.map(|m| m.volume_voxels).unwrap_or(0),
            surface_area: metrics.map(|m| m.surface_area).unwrap_or(0.0),
            dice_both_empty: metrics.map(|m| m.dice_both_empty).unwrap_or(false),
            iterations: d.iterations,
            converged: d.converged,
            soma_absent: d.soma_seed_empty || result.soma.is_empty(),
            tube_seed_empty: d.tube_seed_empty,
            cfl_warnings: d.cfl_warnings,
            spacing: [sx, sy, sz],
            energies: d.energy_trace.iter().map(|&(a, b)| [a, b]).collect(),
            overlap: d.overlap_trace.clone(),
        }
    }
}

/// Write all result files into `dir`: three mask TIFFs, two raw level
/// sets and the JSON report. Returns the written paths.
pub fn write_result(result: &SegmentationResult, report: &RunReport, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for (name, mask) in [
        ("processes.tif", &result.processes),
        ("soma.tif", &result.soma),
        ("union.tif", &result.union_mask),
    ] {
        let p = dir.join(name);
        write_mask_tiff(mask, &p)?;
        written.push(p);
    }
    for (name, field) in [
        ("phi_tuff.raw", &result.phi_tuff),
        ("phi_bff.raw", &result.phi_bff),
    ] {
        let p = dir.join(name);
        write_volume_raw(field.phi(), &p)?;
        written.push(p);
    }
    let report_path = dir.join("report.json");
    let file = File::create(&report_path)?;
    serde_json::to_writer_pretty(BufWriter::new(file), report)
        .map_err(|e| Error::Format(e.to_string()))?;
    written.push(report_path);
    Ok(written)
}
