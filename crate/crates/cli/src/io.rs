//! File formats: system-matrix cache, sinogram, raw image dump + PGM render,
//! and convergence CSVs. All binary fields are little-endian.

use anyhow::{bail, Context, Result};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use jsct_core::image::ImageVolume;
use jsct_core::model::PoissonData;
use jsct_core::projector::{Geometry, SparseSystemMatrix};

/// Matrix cache magic, followed by `m` and `n` as u64, then per row an entry
/// count (u64) and (u32 index, f64 length) pairs.
pub const MATRIX_MAGIC: &[u8; 7] = b"JSCT-H1";
/// Sinogram magic, followed by `n_views` and `n_dets` as u64, then the
/// measured counts and the incident counts as f64 runs of length
/// `n_views * n_dets` each.
pub const SINOGRAM_MAGIC: &[u8; 7] = b"JSCT-S1";

fn write_u64(w: &mut impl Write, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}

pub fn write_matrix_cache(path: &Path, matrix: &SparseSystemMatrix) -> Result<()> {
    let mut w = BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    );
    w.write_all(MATRIX_MAGIC)?;
    write_u64(&mut w, matrix.m() as u64)?;
    write_u64(&mut w, matrix.n() as u64)?;
    for i in 0..matrix.m() {
        let (cols, vals) = matrix.row(i);
        write_u64(&mut w, cols.len() as u64)?;
        for (&j, &v) in cols.iter().zip(vals) {
            w.write_all(&j.to_le_bytes())?;
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix_cache(path: &Path) -> Result<SparseSystemMatrix> {
    let mut r = BufReader::new(
        File::open(path).with_context(|| format!("opening {}", path.display()))?,
    );
    let mut magic = [0u8; 7];
    r.read_exact(&mut magic)?;
    if &magic != MATRIX_MAGIC {
        bail!("{} is not a jsct matrix cache", path.display());
    }
    let m = read_u64(&mut r)? as usize;
    let n = read_u64(&mut r)? as usize;
    let mut rows = Vec::with_capacity(m);
    for _ in 0..m {
        let count = read_u64(&mut r)? as usize;
        let mut row = Vec::with_capacity(count);
        for _ in 0..count {
            let j = read_u32(&mut r)?;
            let v = read_f64(&mut r)?;
            row.push((j, v));
        }
        rows.push(row);
    }
    SparseSystemMatrix::from_rows(m, n, rows).map_err(|e| anyhow::anyhow!("{e}"))
}

pub fn write_sinogram(path: &Path, geom: &Geometry, data: &PoissonData) -> Result<()> {
    if data.len() != geom.n_rays() {
        bail!(
            "sinogram length {} does not match geometry ray count {}",
            data.len(),
            geom.n_rays()
        );
    }
    let mut w = BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    );
    w.write_all(SINOGRAM_MAGIC)?;
    write_u64(&mut w, geom.n_views as u64)?;
    write_u64(&mut w, geom.n_dets as u64)?;
    for &v in data.d() {
        w.write_all(&v.to_le_bytes())?;
    }
    for &v in data.i0() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a sinogram; returns the view/detector counts it claims plus the data.
pub fn read_sinogram(path: &Path) -> Result<(usize, usize, PoissonData)> {
    let mut r = BufReader::new(
        File::open(path).with_context(|| format!("opening {}", path.display()))?,
    );
    let mut magic = [0u8; 7];
    r.read_exact(&mut magic)?;
    if &magic != SINOGRAM_MAGIC {
        bail!("{} is not a jsct sinogram", path.display());
    }
    let n_views = read_u64(&mut r)? as usize;
    let n_dets = read_u64(&mut r)? as usize;
    let m = n_views
        .checked_mul(n_dets)
        .context("sinogram dimensions overflow")?;
    let mut d = Vec::with_capacity(m);
    for _ in 0..m {
        d.push(read_f64(&mut r)?);
    }
    let mut i0 = Vec::with_capacity(m);
    for _ in 0..m {
        i0.push(read_f64(&mut r)?);
    }
    let data = PoissonData::new(d, i0).map_err(|e| anyhow::anyhow!("{e}"))?;
    Ok((n_views, n_dets, data))
}

/// Writes the raw float32 little-endian dump plus its text sidecar
/// (`<path>.txt`: dims, pixel size, units).
pub fn write_raw_f32(path: &Path, img: &ImageVolume, pixel_size: f64) -> Result<()> {
    let mut w = BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    );
    for &v in img.data() {
        w.write_all(&(v as f32).to_le_bytes())?;
    }
    w.flush()?;
    let sidecar = sidecar_path(path);
    let meta = format!(
        "format = jsct-raw-f32-le\nn_rows = {}\nn_cols = {}\nn_slices = {}\npixel_size_mm = {}\nunits = mm^-1\n",
        img.n_rows(),
        img.n_cols(),
        img.n_slices(),
        pixel_size
    );
    std::fs::write(&sidecar, meta).with_context(|| format!("writing {}", sidecar.display()))?;
    Ok(())
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(".txt");
    std::path::PathBuf::from(s)
}

/// Reloads a raw dump via its sidecar. Values come back as the stored f32
/// bits, widened to f64.
pub fn read_raw_f32(path: &Path) -> Result<(ImageVolume, f64)> {
    let sidecar = sidecar_path(path);
    let meta = std::fs::read_to_string(&sidecar)
        .with_context(|| format!("reading sidecar {}", sidecar.display()))?;
    let mut n_rows = None;
    let mut n_cols = None;
    let mut n_slices = 1usize;
    let mut pixel_size = 1.0f64;
    for line in meta.lines() {
        let Some((key, value)) = line.split_once('=') else {
            continue;
        };
        let (key, value) = (key.trim(), value.trim());
        match key {
            "n_rows" => n_rows = Some(value.parse()?),
            "n_cols" => n_cols = Some(value.parse()?),
            "n_slices" => n_slices = value.parse()?,
            "pixel_size_mm" => pixel_size = value.parse()?,
            _ => {}
        }
    }
    let (n_rows, n_cols) = match (n_rows, n_cols) {
        (Some(r), Some(c)) => (r, c),
        _ => bail!("sidecar {} is missing image dimensions", sidecar.display()),
    };
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let expected = n_rows * n_cols * n_slices * 4;
    if bytes.len() != expected {
        bail!(
            "{}: expected {} bytes for {}x{}x{}, found {}",
            path.display(),
            expected,
            n_rows,
            n_cols,
            n_slices,
            bytes.len()
        );
    }
    let data: Vec<f64> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    let img = ImageVolume::from_vec_3d(n_rows, n_cols, n_slices, data)
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    Ok((img, pixel_size))
}

/// 8-bit binary PGM with linear windowing: values at or below `lo` map to 0,
/// at or above `hi` to 255, in between by round-half-up.
pub fn write_pgm(path: &Path, img: &ImageVolume, lo: f64, hi: f64) -> Result<()> {
    if !(lo < hi) {
        bail!("window must satisfy lo < hi (got [{lo}, {hi}])");
    }
    let mut w = BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    );
    write!(w, "P5\n{} {}\n255\n", img.n_cols(), img.n_rows())?;
    let mut bytes = Vec::with_capacity(img.n_rows() * img.n_cols());
    for &v in img.data().iter().take(img.n_rows() * img.n_cols()) {
        bytes.push(window_to_byte(v, lo, hi));
    }
    w.write_all(&bytes)?;
    w.flush()?;
    Ok(())
}

/// Round-half-up windowing to `0..=255`.
pub fn window_to_byte(v: f64, lo: f64, hi: f64) -> u8 {
    let t = (v - lo) / (hi - lo) * 255.0;
    let rounded = (t + 0.5).floor();
    rounded.clamp(0.0, 255.0) as u8
}

/// One row of a convergence CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceRecord {
    pub algorithm: String,
    pub pass: f64,
    pub objective: f64,
    pub normalized_error: f64,
    pub wall_seconds: f64,
}

pub const CSV_HEADER: &str = "algorithm,pass,objective,normalized_error,wall_seconds";

/// Writes records with 17 significant digits so values round-trip exactly.
pub fn write_convergence_csv(path: &Path, records: &[ConvergenceRecord]) -> Result<()> {
    let mut w = BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    );
    writeln!(w, "{CSV_HEADER}")?;
    for r in records {
        writeln!(
            w,
            "{},{:.16e},{:.16e},{:.16e},{:.16e}",
            r.algorithm, r.pass, r.objective, r.normalized_error, r.wall_seconds
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_convergence_csv(path: &Path) -> Result<Vec<ConvergenceRecord>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == CSV_HEADER => {}
        other => bail!("bad CSV header in {}: {other:?}", path.display()),
    }
    let mut out = Vec::new();
    for (idx, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            bail!("line {} of {}: expected 5 fields", idx + 2, path.display());
        }
        out.push(ConvergenceRecord {
            algorithm: fields[0].to_string(),
            pass: fields[1].parse()?,
            objective: fields[2].parse()?,
            normalized_error: fields[3].parse()?,
            wall_seconds: fields[4].parse()?,
        });
    }
    Ok(out)
}
