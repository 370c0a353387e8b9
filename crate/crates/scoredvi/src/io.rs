//! Image file I/O (8-bit PNG / binary PNM), the SDVI1 binary tensor exchange
//! format, and weight checkpoints.
//!
//! SDVI1 layout: 5 magic bytes `SDVI1`, u32-LE ndim, ndim u32-LE dimensions,
//! then row-major f32-LE data.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::ImageTensor;

const SDVI_MAGIC: &[u8; 5] = b"SDVI1";

/// Load an 8-bit grayscale or RGB raster image, scaled to [0, 1].
pub fn load_image<T: Real>(path: impl AsRef<Path>) -> Result<ImageTensor<T>> {
    let path = path.as_ref();
    let img = image::open(path).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::Io(io),
        other => Error::Format(format!("{}: {other}", path.display())),
    })?;
    let scale = T::of(1.0 / 255.0);
    match img {
        image::DynamicImage::ImageLuma8(g) => {
            let (w, h) = (g.width() as usize, g.height() as usize);
            let data = g.into_raw().into_iter().map(|v| T::of(v as f64) * scale).collect();
            ImageTensor::new(1, h, w, data)
        }
        image::DynamicImage::ImageRgb8(rgb) => {
            let (w, h) = (rgb.width() as usize, rgb.height() as usize);
            let raw = rgb.into_raw();
            // Interleaved RGB -> planar CHW.
            let mut out = ImageTensor::zeros(3, h, w);
            for y in 0..h {
                for x in 0..w {
                    for c in 0..3 {
                        out.set(c, y, x, T::of(raw[(y * w + x) * 3 + c] as f64) * scale);
                    }
                }
            }
            Ok(out)
        }
        other => Err(Error::Format(format!(
            "{}: unsupported pixel layout {:?} (need 8-bit gray or RGB)",
            path.display(),
            other.color()
        ))),
    }
}

/// Save a 1- or 3-channel tensor as an 8-bit image. Values are clamped to
/// [0, 1] and quantized by round(v·255).
pub fn save_image<T: Real>(img: &ImageTensor<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if !img.all_finite() {
        return Err(Error::numeric("save_image: non-finite pixel values"));
    }
    let (channels, h, w) = img.shape();
    let quant = |v: T| -> u8 {
        let x = v.to_f64c().clamp(0.0, 1.0);
        (x * 255.0).round() as u8
    };
    let saved = match channels {
        1 => {
            let buf: Vec<u8> = img.data().iter().map(|&v| quant(v)).collect();
            let g = image::GrayImage::from_raw(w as u32, h as u32, buf)
                .expect("buffer sized from shape");
            g.save(path)
        }
        3 => {
            let mut buf = vec![0u8; w * h * 3];
            for y in 0..h {
                for x in 0..w {
                    for c in 0..3 {
                        buf[(y * w + x) * 3 + c] = quant(img.at(c, y, x));
                    }
                }
            }
            let rgb = image::RgbImage::from_raw(w as u32, h as u32, buf)
                .expect("buffer sized from shape");
            rgb.save(path)
        }
        n => return Err(Error::argument(format!("save_image: {n} channels unsupported"))),
    };
    saved.map_err(|e| match e {
        image::ImageError::IoError(io) => Error::Io(io),
        other => Error::Format(format!("{}: {other}", path.display())),
    })
}

/// Write a tensor with arbitrary dimensions in SDVI1 format.
pub fn write_sdvi_raw<T: Real>(path: impl AsRef<Path>, dims: &[u32], data: &[T]) -> Result<()> {
    let expect: usize = dims.iter().map(|&d| d as usize).product();
    if dims.is_empty() || expect != data.len() {
        return Err(Error::argument("sdvi dims do not match data length"));
    }
    let mut out = BufWriter::new(File::create(path)?);
    write_sdvi_to(&mut out, dims, data)?;
    out.flush()?;
    Ok(())
}

fn write_sdvi_to<T: Real>(out: &mut impl Write, dims: &[u32], data: &[T]) -> Result<()> {
    out.write_all(SDVI_MAGIC)?;
    out.write_all(&(dims.len() as u32).to_le_bytes())?;
    for &d in dims {
        out.write_all(&d.to_le_bytes())?;
    }
    for &v in data {
        out.write_all(&(v.to_f64c() as f32).to_le_bytes())?;
    }
    Ok(())
}

/// Read an SDVI1 file, returning its dimensions and data.
pub fn read_sdvi_raw<T: Real>(path: impl AsRef<Path>) -> Result<(Vec<u32>, Vec<T>)> {
    let mut rd = BufReader::new(File::open(path)?);
    read_sdvi_from(&mut rd)
}

fn read_sdvi_from<T: Real>(rd: &mut impl Read) -> Result<(Vec<u32>, Vec<T>)> {
    let mut magic = [0u8; 5];
    rd.read_exact(&mut magic)?;
    if &magic != SDVI_MAGIC {
        return Err(Error::Format("bad SDVI1 magic".into()));
    }
    let mut b4 = [0u8; 4];
    rd.read_exact(&mut b4)?;
    let ndim = u32::from_le_bytes(b4) as usize;
    if ndim == 0 || ndim > 8 {
        return Err(Error::Format(format!("implausible ndim {ndim}")));
    }
    let mut dims = Vec::with_capacity(ndim);
    let mut total = 1usize;
    for _ in 0..ndim {
        rd.read_exact(&mut b4)?;
        let d = u32::from_le_bytes(b4);
        if d == 0 {
            return Err(Error::Format("zero dimension".into()));
        }
        total = total
            .checked_mul(d as usize)
            .ok_or_else(|| Error::Format("dimension overflow".into()))?;
        dims.push(d);
    }
    let mut data = Vec::with_capacity(total);
    for _ in 0..total {
        rd.read_exact(&mut b4)?;
        data.push(T::of(f32::from_le_bytes(b4) as f64));
    }
    // Trailing garbage means the writer and reader disagree about the shape.
    let mut probe = [0u8; 1];
    if rd.read(&mut probe)? != 0 {
        return Err(Error::Format("trailing bytes after tensor data".into()));
    }
    Ok((dims, data))
}

/// Write a C×H×W tensor in SDVI1 format (ndim = 3).
pub fn write_sdvi<T: Real>(img: &ImageTensor<T>, path: impl AsRef<Path>) -> Result<()> {
    let (c, h, w) = img.shape();
    write_sdvi_raw(path, &[c as u32, h as u32, w as u32], img.data())
}

/// Read a C×H×W tensor from an SDVI1 file (requires ndim = 3).
pub fn read_sdvi<T: Real>(path: impl AsRef<Path>) -> Result<ImageTensor<T>> {
    let (dims, data) = read_sdvi_raw(path)?;
    if dims.len() != 3 {
        return Err(Error::Format(format!("expected 3 dims, got {}", dims.len())));
    }
    ImageTensor::new(dims[0] as usize, dims[1] as usize, dims[2] as usize, data)
}

/// One named tensor inside a weight checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightEntry<T> {
    pub name: String,
    pub dims: Vec<u32>,
    pub data: Vec<T>,
}

/// Save a checkpoint: concatenated SDVI1 blobs in `bin` plus a plain-text
/// manifest with one `name dim0xdim1x... offset` line per tensor.
pub fn save_weights<T: Real>(
    bin: impl AsRef<Path>,
    manifest: impl AsRef<Path>,
    entries: &[WeightEntry<T>],
) -> Result<()> {
    let mut blob = Vec::new();
    let mut lines = String::new();
    for e in entries {
        if e.name.contains(char::is_whitespace) {
            return Err(Error::argument(format!("weight name '{}' contains whitespace", e.name)));
        }
        let offset = blob.len();
        write_sdvi_to(&mut blob, &e.dims, &e.data)?;
        let shape: Vec<String> = e.dims.iter().map(|d| d.to_string()).collect();
        lines.push_str(&format!("{} {} {}\n", e.name, shape.join("x"), offset));
    }
    std::fs::write(bin, &blob)?;
    std::fs::write(manifest, lines)?;
    Ok(())
}

/// Load every tensor recorded in a checkpoint manifest.
pub fn load_weights<T: Real>(
    bin: impl AsRef<Path>,
    manifest: impl AsRef<Path>,
) -> Result<Vec<WeightEntry<T>>> {
    let blob = std::fs::read(bin)?;
    let text = std::fs::read_to_string(manifest)?;
    let mut entries = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let (name, shape, offset) = match (parts.next(), parts.next(), parts.next(), parts.next())
        {
            (Some(a), Some(b), Some(c), None) => (a, b, c),
            _ => return Err(Error::Format(format!("manifest line {}: bad field count", n + 1))),
        };
        let offset: usize = offset
            .parse()
            .map_err(|_| Error::Format(format!("manifest line {}: bad offset", n + 1)))?;
        let dims: Vec<u32> = shape
            .split('x')
            .map(|s| s.parse::<u32>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Format(format!("manifest line {}: bad shape", n + 1)))?;
        if offset >= blob.len() {
            return Err(Error::Format(format!("manifest line {}: offset past end", n + 1)));
        }
        let mut rd = &blob[offset..];
        let (got_dims, data) = read_sdvi_from_prefix::<T>(&mut rd)?;
        if got_dims != dims {
            return Err(Error::Format(format!(
                "manifest line {}: shape mismatch for '{name}'",
                n + 1
            )));
        }
        entries.push(WeightEntry { name: name.to_string(), dims, data });
    }
    Ok(entries)
}

// Like read_sdvi_from but tolerates following blobs in the same buffer.
fn read_sdvi_from_prefix<T: Real>(rd: &mut impl Read) -> Result<(Vec<u32>, Vec<T>)> {
    let mut magic = [0u8; 5];
    rd.read_exact(&mut magic)?;
    if &magic != SDVI_MAGIC {
        return Err(Error::Format("bad SDVI1 magic".into()));
    }
    let mut b4 = [0u8; 4];
    rd.read_exact(&mut b4)?;
    let ndim = u32::from_le_bytes(b4) as usize;
    if ndim == 0 || ndim > 8 {
        return Err(Error::Format(format!("implausible ndim {ndim}")));
    }
    let mut dims = Vec::with_capacity(ndim);
    let mut total = 1usize;
    for _ in 0..ndim {
        rd.read_exact(&mut b4)?;
        let d = u32::from_le_bytes(b4);
        total = total
            .checked_mul(d as usize)
            .ok_or_else(|| Error::Format("dimension overflow".into()))?;
        dims.push(d);
    }
    let mut data = Vec::with_capacity(total);
    for _ in 0..total {
        rd.read_exact(&mut b4)?;
        data.push(T::of(f32::from_le_bytes(b4) as f64));
    }
    Ok((dims, data))
}
