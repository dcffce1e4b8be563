//! File formats: grid densities and sample sets as CSV, compact
//! binary containers for samples (`LGS1`) and image stacks (`LGI1`),
//! plus spectrum and trace exports.
//!
//! All writers go through an atomic temp-and-rename so a crashed run
//! never leaves a half-written file behind. Floats in CSV use the
//! shortest round-tripping decimal form.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use ndarray::{Array2, Array4};

use crate::datasets::ImageTensorSet;
use crate::dynamics::SimulationTrace;
use crate::error::{Error, Result};
use crate::laplace::LaplaceSpectrum;
use crate::measure::{GridDensity, SampleSet};

const LGS1_MAGIC: &[u8; 4] = b"LGS1";
const LGI1_MAGIC: &[u8; 4] = b"LGI1";
/// Relative slack when checking that read-back coordinates sit on a
/// uniform grid.
const GRID_COORD_TOL: f64 = 1e-9;

/// Write `bytes` to `path` through a sibling temp file and a rename.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let stem = path
        .file_name()
        .ok_or_else(|| Error::invalid("output path has no file name"))?
        .to_string_lossy()
        .into_owned();
    let tmp_name = format!(".{stem}.{}.tmp", std::process::id());
    let tmp = match dir {
        Some(d) => d.join(&tmp_name),
        None => Path::new(&tmp_name).to_path_buf(),
    };
    let mut f = fs::File::create(&tmp)?;
    f.write_all(bytes)?;
    f.sync_all()?;
    drop(f);
    if let Err(e) = fs::rename(&tmp, path) {
        let _ = fs::remove_file(&tmp);
        return Err(e.into());
    }
    Ok(())
}

fn parse_f64(tok: &str, line_no: usize) -> Result<f64> {
    tok.trim()
        .parse::<f64>()
        .map_err(|_| Error::invalid(format!("line {line_no}: {tok:?} is not a number")))
}

/// CSV with header `axis0[,axis1],rho`, cells in row-major order.
pub fn write_density_csv(path: &Path, g: &GridDensity) -> Result<()> {
    let d = g.dim();
    let mut out = String::new();
    match d {
        1 => out.push_str("axis0,rho\n"),
        2 => out.push_str("axis0,axis1,rho\n"),
        _ => return Err(Error::DimensionTooHigh { dim: d, max: 2 }),
    }
    let shape = g.shape();
    for (flat, r) in g.rho().iter().enumerate() {
        match d {
            1 => {
                let x = g.coord(0, flat);
                out.push_str(&format!("{x},{r}\n"));
            }
            _ => {
                let (i0, i1) = (flat / shape[1], flat % shape[1]);
                let x = g.coord(0, i0);
                let y = g.coord(1, i1);
                out.push_str(&format!("{x},{y},{r}\n"));
            }
        }
    }
    atomic_write(path, out.as_bytes())
}

/// Rebuild a grid density from its CSV form; the grid geometry comes
/// back from the coordinate columns.
pub fn read_density_csv(path: &Path) -> Result<GridDensity> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::invalid("density file is empty"))?;
    let cols: Vec<&str> = header.split(',').map(|s| s.trim()).collect();
    let d = match cols.len() {
        2 => 1,
        3 => 2,
        n => {
            return Err(Error::invalid(format!(
                "density header has {n} columns, expected 2 or 3"
            )))
        }
    };
    let mut coords: Vec<Vec<f64>> = vec![Vec::new(); d];
    let mut rho = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let toks: Vec<&str> = line.split(',').collect();
        if toks.len() != d + 1 {
            return Err(Error::invalid(format!(
                "line {}: expected {} fields, got {}",
                idx + 1,
                d + 1,
                toks.len()
            )));
        }
        for (a, t) in toks[..d].iter().enumerate() {
            coords[a].push(parse_f64(t, idx + 1)?);
        }
        rho.push(parse_f64(toks[d], idx + 1)?);
    }
    if rho.is_empty() {
        return Err(Error::invalid("density file has no rows"));
    }

    let (domain, shape) = infer_grid(&coords, rho.len())?;
    GridDensity::from_values(&domain, &shape, rho)
}

/// Recover `(domain, shape)` from row-major coordinate columns.
fn infer_grid(coords: &[Vec<f64>], total: usize) -> Result<(Vec<(f64, f64)>, Vec<usize>)> {
    let d = coords.len();
    let shape: Vec<usize> = if d == 1 {
        vec![total]
    } else {
        // the fastest axis repeats its sweep every n1 rows
        let first = coords[0][0];
        let n1 = coords[0]
            .iter()
            .take_while(|v| **v == first)
            .count()
            .max(1);
        if total % n1 != 0 {
            return Err(Error::invalid("rows do not tile a rectangular grid"));
        }
        vec![total / n1, n1]
    };
    let mut domain = Vec::with_capacity(d);
    for a in 0..d {
        let n = shape[a];
        let pick = |i: usize| -> f64 {
            match (d, a) {
                (1, _) => coords[0][i],
                (_, 0) => coords[0][i * shape[1]],
                _ => coords[1][i],
            }
        };
        let lo = pick(0);
        let hi = pick(n - 1);
        if !(hi > lo) {
            return Err(Error::invalid("grid coordinates must increase"));
        }
        let h = (hi - lo) / (n - 1).max(1) as f64;
        for i in 0..n {
            let want = lo + h * i as f64;
            if (pick(i) - want).abs() > GRID_COORD_TOL * (hi - lo) {
                return Err(Error::invalid(format!(
                    "axis {a} is not uniformly spaced near index {i}"
                )));
            }
        }
        domain.push((lo, hi));
    }
    // every row must match its reconstructed position
    if d == 2 {
        let (n0, n1) = (shape[0], shape[1]);
        for i0 in 0..n0 {
            for i1 in 0..n1 {
                let row = i0 * n1 + i1;
                let want0 = domain[0].0 + (domain[0].1 - domain[0].0) / (n0 - 1).max(1) as f64 * i0 as f64;
                let want1 = domain[1].0 + (domain[1].1 - domain[1].0) / (n1 - 1).max(1) as f64 * i1 as f64;
                let span0 = domain[0].1 - domain[0].0;
                let span1 = domain[1].1 - domain[1].0;
                if (coords[0][row] - want0).abs() > GRID_COORD_TOL * span0
                    || (coords[1][row] - want1).abs() > GRID_COORD_TOL * span1
                {
                    return Err(Error::invalid(format!(
                        "row {row} is out of row-major order"
                    )));
                }
            }
        }
    }
    Ok((domain, shape))
}

/// CSV with one row per sample, header `x0,..,x{d-1}`. Reading also
/// accepts headerless numeric files.
pub fn write_samples_csv(path: &Path, s: &SampleSet) -> Result<()> {
    let d = s.dim();
    let mut out = String::new();
    let header: Vec<String> = (0..d).map(|a| format!("x{a}")).collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in s.points().rows() {
        let fields: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    atomic_write(path, out.as_bytes())
}

pub fn read_samples_csv(path: &Path) -> Result<SampleSet> {
    let text = fs::read_to_string(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut d = 0usize;
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let toks: Vec<&str> = line.split(',').collect();
        let parsed: Option<Vec<f64>> = toks
            .iter()
            .map(|t| t.trim().parse::<f64>().ok())
            .collect();
        match parsed {
            None if rows.is_empty() => continue, // header line
            None => {
                return Err(Error::invalid(format!(
                    "line {}: non-numeric row",
                    idx + 1
                )))
            }
            Some(vals) => {
                if d == 0 {
                    d = vals.len();
                } else if vals.len() != d {
                    return Err(Error::invalid(format!(
                        "line {}: expected {d} fields, got {}",
                        idx + 1,
                        vals.len()
                    )));
                }
                rows.push(vals);
            }
        }
    }
    if rows.is_empty() {
        return Err(Error::invalid("sample file has no rows"));
    }
    let n = rows.len();
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    let pts = Array2::from_shape_vec((n, d), flat).expect("row collection is rectangular");
    SampleSet::new(pts)
}

/// Binary sample container: magic `LGS1`, then `n`, `d`, and a
/// reserved word as little-endian u32, then `n * d` f32 coordinates.
pub fn write_samples_lgs1(path: &Path, s: &SampleSet) -> Result<()> {
    let mut out = Vec::with_capacity(16 + s.n() * s.dim() * 4);
    out.extend_from_slice(LGS1_MAGIC);
    out.extend_from_slice(&(s.n() as u32).to_le_bytes());
    out.extend_from_slice(&(s.dim() as u32).to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    for v in s.points().iter() {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    atomic_write(path, &out)
}

pub fn read_samples_lgs1(path: &Path) -> Result<SampleSet> {
    let bytes = fs::read(path)?;
    let body = parse_binary_header(&bytes, LGS1_MAGIC, 2, "sample")?;
    let (dims, data) = body;
    let (n, d) = (dims[0], dims[1]);
    if n == 0 || d == 0 {
        return Err(Error::invalid("sample container is empty"));
    }
    let flat: Vec<f64> = data.iter().map(|v| *v as f64).collect();
    let pts = Array2::from_shape_vec((n, d), flat)
        .map_err(|_| Error::invalid("sample container is truncated"))?;
    SampleSet::new(pts)
}

/// Load samples from either format, decided by the magic bytes.
pub fn read_samples(path: &Path) -> Result<SampleSet> {
    let mut magic = [0u8; 4];
    {
        use std::io::Read as _;
        let mut f = fs::File::open(path)?;
        let got = f.read(&mut magic)?;
        if got < 4 {
            return Err(Error::invalid("sample file is too short"));
        }
    }
    if &magic == LGS1_MAGIC {
        read_samples_lgs1(path)
    } else {
        read_samples_csv(path)
    }
}

/// Binary image container: magic `LGI1`, then `n`, `c`, `h`, `w` as
/// little-endian u32, then that many f32 intensities in `[0, 1]`.
pub fn write_images_lgi1(path: &Path, t: &ImageTensorSet) -> Result<()> {
    let (n, c, h, w) = t.shape4();
    let mut out = Vec::with_capacity(20 + n * c * h * w * 4);
    out.extend_from_slice(LGI1_MAGIC);
    for v in [n, c, h, w] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for v in t.data().iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    atomic_write(path, &out)
}

pub fn read_images_lgi1(path: &Path) -> Result<ImageTensorSet> {
    let bytes = fs::read(path)?;
    let (dims, data) = parse_binary_header(&bytes, LGI1_MAGIC, 4, "image")?;
    let arr = Array4::from_shape_vec((dims[0], dims[1], dims[2], dims[3]), data)
        .map_err(|_| Error::invalid("image container is truncated"))?;
    ImageTensorSet::new(arr)
}

/// Shared framing: magic, `k` u32 dimensions (an extra reserved word
/// for the 2-dim case), then f32 payload matching the product.
fn parse_binary_header<'a>(
    bytes: &'a [u8],
    magic: &[u8; 4],
    k: usize,
    what: &str,
) -> Result<(Vec<usize>, Vec<f32>)> {
    let dim_words = if k == 2 { 3 } else { k };
    let header_len = 4 + 4 * dim_words;
    if bytes.len() < header_len {
        return Err(Error::invalid(format!("{what} container is too short")));
    }
    if &bytes[..4] != magic {
        return Err(Error::invalid(format!(
            "{what} container has a wrong magic number"
        )));
    }
    let mut dims = Vec::with_capacity(k);
    for i in 0..k {
        let off = 4 + 4 * i;
        let v = u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
        dims.push(v as usize);
    }
    let count: usize = dims.iter().product();
    let payload = &bytes[header_len..];
    if payload.len() != count * 4 {
        return Err(Error::invalid(format!(
            "{what} container payload holds {} bytes, expected {}",
            payload.len(),
            count * 4
        )));
    }
    let data: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((dims, data))
}

/// Eigenvalue table: header `index,xi`, one row per mode.
pub fn write_spectrum_csv(path: &Path, s: &LaplaceSpectrum) -> Result<()> {
    let mut out = String::from("index,xi\n");
    for (i, xi) in s.xis().iter().enumerate() {
        out.push_str(&format!("{i},{xi}\n"));
    }
    atomic_write(path, out.as_bytes())
}

/// JSON summary with the spectral gap, mode count, and residuals.
pub fn write_spectrum_json(path: &Path, s: &LaplaceSpectrum) -> Result<()> {
    let doc = serde_json::json!({
        "xi_min": s.xi_min(),
        "k": s.k(),
        "residuals": s.residuals(),
    });
    let text = serde_json::to_string_pretty(&doc).expect("plain data serializes");
    atomic_write(path, text.as_bytes())
}

/// Norm history: header `t,u_norm,V_norm,mean_u`, one row per step.
pub fn write_trace_csv(path: &Path, tr: &SimulationTrace) -> Result<()> {
    let mut out = String::from("t,u_norm,V_norm,mean_u\n");
    for i in 0..tr.times.len() {
        out.push_str(&format!(
            "{},{},{},{}\n",
            tr.times[i], tr.u_norms[i], tr.v_norms[i], tr.mean_u[i]
        ));
    }
    atomic_write(path, out.as_bytes())
}
