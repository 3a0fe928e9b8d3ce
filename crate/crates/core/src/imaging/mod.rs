//! Grayscale images, noise injection and overlapping patch matrices.

mod pnm;

use std::path::Path;

use nalgebra::DMatrix;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};

pub use pnm::{decode_image, encode_pgm};

/// Row-major grayscale image with pixels in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGray {
    height: usize,
    width: usize,
    pixels: Vec<f64>,
    bit_depth: u8,
}

impl ImageGray {
    pub fn new(height: usize, width: usize, pixels: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidArgument(format!(
                "image dimensions must be positive, got {height}x{width}"
            )));
        }
        if pixels.len() != height * width {
            return Err(Error::DimensionMismatch(format!(
                "{} pixels for a {height}x{width} image",
                pixels.len()
            )));
        }
        if let Some(p) = pixels.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::InvalidArgument(format!(
                "pixel value {p} outside [0, 1]"
            )));
        }
        Ok(Self {
            height,
            width,
            pixels,
            bit_depth: 8,
        })
    }

    /// Builds an image by clipping every value into `[0, 1]`.
    pub fn from_clipped(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        let pixels = values.into_iter().map(clip_unit).collect();
        Self::new(height, width, pixels)
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Result<Self> {
        Self::new(height, width, vec![value; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bit_depth(&self) -> u8 {
        self.bit_depth
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.width + col]
    }
}

fn clip_unit(v: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 1.0)
    }
}

/// Additive Gaussian noise parameters on the `[0, 1]` pixel scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub mean: f64,
    pub variance: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(mean: f64, variance: f64, seed: u64) -> Result<Self> {
        if !variance.is_finite() || variance < 0.0 || !mean.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "noise needs finite mean and variance >= 0, got mean={mean} variance={variance}"
            )));
        }
        Ok(Self {
            mean,
            variance,
            seed,
        })
    }

    /// Standard deviation expressed on the 0..255 scale.
    pub fn sigma_8bit(&self) -> f64 {
        self.variance.sqrt() * 255.0
    }
}

/// Placement of patch columns inside their source image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchLayout {
    pub patch_side: usize,
    pub height: usize,
    pub width: usize,
}

impl PatchLayout {
    pub fn grid(&self) -> (usize, usize) {
        (
            self.height - self.patch_side + 1,
            self.width - self.patch_side + 1,
        )
    }

    pub fn patch_count(&self) -> usize {
        let (r, c) = self.grid();
        r * c
    }
}

/// M×Q matrix whose columns are signals (vectorized patches).
#[derive(Debug, Clone, PartialEq)]
pub struct PatchMatrix {
    pub data: DMatrix<f64>,
    /// Present when the columns came from [`extract_patches`].
    pub layout: Option<PatchLayout>,
}

impl PatchMatrix {
    pub fn new(data: DMatrix<f64>) -> Self {
        Self { data, layout: None }
    }

    pub fn dim_m(&self) -> usize {
        self.data.nrows()
    }

    pub fn count_q(&self) -> usize {
        self.data.ncols()
    }

    pub fn patch_side(&self) -> Option<usize> {
        self.layout.map(|l| l.patch_side)
    }

    pub fn source_dims(&self) -> Option<(usize, usize)> {
        self.layout.map(|l| (l.height, l.width))
    }
}

/// Reads a PGM (P5/P2) or grayscale PNG file.
pub fn load_image(path: impl AsRef<Path>) -> Result<ImageGray> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_image(&bytes)
}

/// Writes `img` as binary PGM with maxval 255.
pub fn save_image(img: &ImageGray, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_pgm(img)).map_err(|e| Error::io(path, e))
}

/// Quantizes a `[0, 1]` value to a byte, rounding half up.
pub fn quantize(p: f64) -> u8 {
    (p * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8
}

/// Block-mean decimation by `alpha`; partial edge blocks are dropped.
pub fn downscale(img: &ImageGray, alpha: usize) -> Result<ImageGray> {
    if alpha == 0 {
        return Err(Error::InvalidArgument(
            "decimation factor must be >= 1".into(),
        ));
    }
    if alpha == 1 {
        return Ok(img.clone());
    }
    let (h, w) = (img.height / alpha, img.width / alpha);
    if h == 0 || w == 0 {
        return Err(Error::InvalidArgument(format!(
            "decimation factor {alpha} exceeds image size {}x{}",
            img.height, img.width
        )));
    }
    let area = (alpha * alpha) as f64;
    let mut out = Vec::with_capacity(h * w);
    for r in 0..h {
        for c in 0..w {
            let mut sum = 0.0;
            for dr in 0..alpha {
                let row = (r * alpha + dr) * img.width;
                sum += img.pixels[row + c * alpha..row + (c + 1) * alpha]
                    .iter()
                    .sum::<f64>();
            }
            out.push(sum / area);
        }
    }
    ImageGray::from_clipped(h, w, out)
}

/// `len` independent Normal(mean, variance) draws for `noise`, row-major.
pub fn noise_field(len: usize, noise: &NoiseSpec) -> Vec<f64> {
    if noise.variance == 0.0 {
        return vec![noise.mean; len];
    }
    let normal = Normal::new(noise.mean, noise.variance.sqrt()).expect("validated variance");
    let mut rng = stream_rng(noise.seed, Stream::Noise);
    (0..len).map(|_| normal.sample(&mut rng)).collect()
}

/// Adds white Gaussian noise and clips back into `[0, 1]`.
pub fn add_awgn(img: &ImageGray, noise: &NoiseSpec) -> ImageGray {
    let field = noise_field(img.pixels.len(), noise);
    let pixels = img
        .pixels
        .iter()
        .zip(field)
        .map(|(p, n)| clip_unit(p + n))
        .collect();
    ImageGray {
        pixels,
        ..img.clone()
    }
}

/// All overlapping `patch_side`² patches, one column each.
///
/// Columns follow the top-left corner in row-major order; each column is the
/// patch read row by row.
pub fn extract_patches(img: &ImageGray, patch_side: usize) -> Result<PatchMatrix> {
    if patch_side == 0 || patch_side > img.height.min(img.width) {
        return Err(Error::InvalidArgument(format!(
            "patch side {patch_side} does not fit a {}x{} image",
            img.height, img.width
        )));
    }
    let layout = PatchLayout {
        patch_side,
        height: img.height,
        width: img.width,
    };
    let (rows, cols) = layout.grid();
    let m = patch_side * patch_side;
    let mut data = DMatrix::zeros(m, rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let mut col = data.column_mut(r * cols + c);
            for dr in 0..patch_side {
                let src = (r + dr) * img.width + c;
                for dc in 0..patch_side {
                    col[dr * patch_side + dc] = img.pixels[src + dc];
                }
            }
        }
    }
    Ok(PatchMatrix {
        data,
        layout: Some(layout),
    })
}

/// Overlap-averages patch columns back into an image (without clipping).
pub fn assemble_raw(patches: &PatchMatrix) -> Result<(usize, usize, Vec<f64>)> {
    let layout = patches
        .layout
        .ok_or_else(|| Error::InvalidArgument("patch matrix has no source layout".into()))?;
    let ps = layout.patch_side;
    if patches.dim_m() != ps * ps || patches.count_q() != layout.patch_count() {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} patch matrix does not match a {}x{} image with patch side {ps}",
            patches.dim_m(),
            patches.count_q(),
            layout.height,
            layout.width
        )));
    }
    let (rows, cols) = layout.grid();
    let mut acc = vec![0.0; layout.height * layout.width];
    let mut hits = vec![0u32; layout.height * layout.width];
    for r in 0..rows {
        for c in 0..cols {
            let col = patches.data.column(r * cols + c);
            for dr in 0..ps {
                let dst = (r + dr) * layout.width + c;
                for dc in 0..ps {
                    acc[dst + dc] += col[dr * ps + dc];
                    hits[dst + dc] += 1;
                }
            }
        }
    }
    for (a, &n) in acc.iter_mut().zip(&hits) {
        *a /= f64::from(n);
    }
    Ok((layout.height, layout.width, acc))
}

/// Inverse of [`extract_patches`]: each pixel is the mean over the patches
/// covering it, clipped to `[0, 1]`.
pub fn assemble_image(patches: &PatchMatrix) -> Result<ImageGray> {
    let (h, w, raw) = assemble_raw(patches)?;
    ImageGray::from_clipped(h, w, raw)
}

/// Splits columns into `parts` contiguous blocks; the first `Q mod P` blocks
/// get one extra column.
pub fn split_columns(y: &PatchMatrix, parts: usize) -> Result<Vec<PatchMatrix>> {
    let q = y.count_q();
    if parts == 0 || parts > q {
        return Err(Error::InvalidArgument(format!(
            "cannot split {q} columns into {parts} parts"
        )));
    }
    let (base, extra) = (q / parts, q % parts);
    let mut out = Vec::with_capacity(parts);
    let mut start = 0;
    for p in 0..parts {
        let len = base + usize::from(p < extra);
        out.push(PatchMatrix {
            data: y.data.columns(start, len).into_owned(),
            layout: y.layout,
        });
        start += len;
    }
    Ok(out)
}

/// Concatenates column blocks in order (inverse of [`split_columns`]).
pub fn concat_columns(parts: &[PatchMatrix]) -> Result<PatchMatrix> {
    let first = parts
        .first()
        .ok_or_else(|| Error::InvalidArgument("no parts to concatenate".into()))?;
    let m = first.dim_m();
    if let Some(bad) = parts.iter().find(|p| p.dim_m() != m) {
        return Err(Error::DimensionMismatch(format!(
            "part has {} rows, expected {m}",
            bad.dim_m()
        )));
    }
    let q: usize = parts.iter().map(PatchMatrix::count_q).sum();
    let mut data = DMatrix::zeros(m, q);
    let mut start = 0;
    for p in parts {
        data.columns_mut(start, p.count_q()).copy_from(&p.data);
        start += p.count_q();
    }
    Ok(PatchMatrix {
        data,
        layout: first.layout,
    })
}
