use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::image::Grid;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Colormap {
    Grayscale,
    #[default]
    Viridis,
}

const VIRIDIS: [[u8; 3]; 11] = [
    [68, 1, 84],
    [72, 36, 117],
    [65, 68, 135],
    [53, 95, 141],
    [42, 120, 142],
    [33, 145, 140],
    [34, 168, 132],
    [68, 191, 112],
    [122, 209, 81],
    [189, 223, 38],
    [253, 231, 37],
];

fn viridis(t: f64) -> [u8; 3] {
    let s = t.clamp(0.0, 1.0) * (VIRIDIS.len() - 1) as f64;
    let i = (s.floor() as usize).min(VIRIDIS.len() - 2);
    let f = s - i as f64;
    let mut out = [0u8; 3];
    for (c, o) in out.iter_mut().enumerate() {
        let a = VIRIDIS[i][c] as f64;
        let b = VIRIDIS[i + 1][c] as f64;
        *o = (a + (b - a) * f).round() as u8;
    }
    out
}

/// Raster image, 8-bit per channel, one or three channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Raster {
    pub width: u32,
    pub height: u32,
    pub channels: u8,
    pub pixels: Vec<u8>,
}

impl Raster {
    pub fn write_png<W: Write>(&self, w: W) -> Result<()> {
        let mut enc = png::Encoder::new(w, self.width, self.height);
        enc.set_color(if self.channels == 1 { png::ColorType::Grayscale } else { png::ColorType::Rgb });
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header().map_err(png_err)?;
        writer.write_image_data(&self.pixels).map_err(png_err)?;
        writer.finish().map_err(png_err)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut file = BufWriter::new(File::create(path)?);
        self.write_png(&mut file)?;
        file.flush()?;
        Ok(())
    }
}

fn png_err(e: png::EncodingError) -> Error {
    match e {
        png::EncodingError::IoError(io) => Error::Io(io),
        other => Error::Format(other.to_string()),
    }
}

/// Maps the grid's minimum to the darkest and its maximum to the brightest
/// colour. Row 0 of the grid is the top row of the image.
pub fn render_grid(grid: &Grid, colormap: Colormap) -> Raster {
    let (lo, hi) = grid.min_max();
    let span = hi - lo;
    let norm = |v: f64| if span > 0.0 { (v - lo) / span } else { 0.0 };
    let pixels = match colormap {
        Colormap::Grayscale => grid.data.iter().map(|&v| (norm(v) * 255.0).round() as u8).collect(),
        Colormap::Viridis => grid.data.iter().flat_map(|&v| viridis(norm(v))).collect(),
    };
    Raster {
        width: grid.width as u32,
        height: grid.height as u32,
        channels: if colormap == Colormap::Grayscale { 1 } else { 3 },
        pixels,
    }
}

/// Black polyline of `values` on a white `width × height` canvas, one
/// value per column after linear resampling, larger values nearer the top.
pub fn render_curve(values: &[f64], width: usize, height: usize) -> Raster {
    let mut pixels = vec![255u8; width * height];
    if !values.is_empty() && width > 0 && height > 0 {
        let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        let span = hi - lo;
        let sample = |c: usize| {
            let pos = if width == 1 { 0.0 } else { c as f64 * (values.len() - 1) as f64 / (width - 1) as f64 };
            let i = (pos.floor() as usize).min(values.len() - 1);
            let j = (i + 1).min(values.len() - 1);
            let v = values[i] + (values[j] - values[i]) * (pos - i as f64);
            let t = if span > 0.0 { (v - lo) / span } else { 0.5 };
            ((1.0 - t) * (height - 1) as f64).round() as i64
        };
        let mut prev = (0i64, sample(0));
        for c in 0..width {
            let cur = (c as i64, sample(c));
            line(&mut pixels, width, prev, cur);
            prev = cur;
        }
    }
    Raster { width: width as u32, height: height as u32, channels: 1, pixels }
}

fn line(pixels: &mut [u8], width: usize, (x0, y0): (i64, i64), (x1, y1): (i64, i64)) {
    let dx = (x1 - x0).abs();
    let dy = -(y1 - y0).abs();
    let sx = if x0 < x1 { 1 } else { -1 };
    let sy = if y0 < y1 { 1 } else { -1 };
    let (mut x, mut y, mut err) = (x0, y0, dx + dy);
    loop {
        pixels[y as usize * width + x as usize] = 0;
        if x == x1 && y == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

/// What to draw: a spectrogram-like grid or a PSD curve.
#[derive(Debug, Clone, Copy)]
pub enum RenderSource<'a> {
    Grid(&'a Grid),
    Curve { values: &'a [f64], width: usize, height: usize },
}

/// Renders `source` losslessly to a PNG at `path`.
pub fn render_image(source: RenderSource<'_>, colormap: Colormap, path: impl AsRef<Path>) -> Result<()> {
    let raster = match source {
        RenderSource::Grid(g) => render_grid(g, colormap),
        RenderSource::Curve { values, width, height } => render_curve(values, width, height),
    };
    raster.save(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decode(path: &Path) -> (png::OutputInfo, Vec<u8>) {
        let dec = png::Decoder::new(std::io::BufReader::new(File::open(path).unwrap()));
        let mut reader = dec.read_info().unwrap();
        let mut buf = vec![0; reader.output_buffer_size().unwrap()];
        let info = reader.next_frame(&mut buf).unwrap();
        buf.truncate(info.buffer_size());
        (info, buf)
    }

    #[test]
    fn grayscale_maps_extremes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.png");
        let g = Grid::new(2, 2, vec![-3.0, 1.0, 0.0, 5.0]).unwrap();
        render_image(RenderSource::Grid(&g), Colormap::Grayscale, &path).unwrap();
        let (info, px) = decode(&path);
        assert_eq!((info.width, info.height), (2, 2));
        assert_eq!(px[0], 0);
        assert_eq!(px[3], 255);
        assert_eq!(px[1], 128);
    }

    #[test]
    fn renders_are_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid::new(3, 4, (0..12).map(|v| (v as f64).sin()).collect()).unwrap();
        let a = dir.path().join("a.png");
        let b = dir.path().join("b.png");
        render_image(RenderSource::Grid(&g), Colormap::Viridis, &a).unwrap();
        render_image(RenderSource::Grid(&g), Colormap::Viridis, &b).unwrap();
        assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
    }

    #[test]
    fn viridis_endpoints() {
        assert_eq!(viridis(0.0), [68, 1, 84]);
        assert_eq!(viridis(1.0), [253, 231, 37]);
    }

    #[test]
    fn curve_is_connected() {
        let values: Vec<f64> = (0..50).map(|i| ((i as f64) / 5.0).sin()).collect();
        let r = render_curve(&values, 224, 224);
        for c in 0..224 {
            assert!((0..224).any(|row| r.pixels[row * 224 + c] == 0), "column {c}");
        }
    }

    #[test]
    fn full_profile_dimensions() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.png");
        let g = Grid::new(224, 224, vec![0.5; 224 * 224]).unwrap();
        render_image(RenderSource::Grid(&g), Colormap::Viridis, &path).unwrap();
        let (info, _) = decode(&path);
        assert_eq!((info.width, info.height), (224, 224));
    }

    #[test]
    fn unwritable_path_is_an_error() {
        let g = Grid::new(1, 1, vec![0.0]).unwrap();
        let err = render_image(RenderSource::Grid(&g), Colormap::Grayscale, "/nonexistent/dir/x.png");
        assert!(matches!(err, Err(Error::Io(_))));
    }
}
