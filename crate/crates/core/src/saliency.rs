//! Label-independent saliency maps.
//!
//! Every method collapses the channel mode of a feature tensor with weights
//! taken from a channel-space singular vector, takes the absolute value and
//! min-max normalizes the result:
//!
//! * [`eigencam`]: leading right singular vector of the `(H·W) x C`
//!   matricization, centered per channel over spatial positions.
//! * [`tsm`]: leading mode-1 factor column of a full-rank Tucker
//!   decomposition of the raw tensor.
//! * [`multivec_eigencam`] / [`mtsm`]: average of one map per singular
//!   vector, each weighted by `σᵢ / σ₁`.

use std::fmt;
use std::str::FromStr;

use crate::decomp::{hooi, mode1_spectrum, HooiOptions, SingularSpectrum, TuckerFactors};
use crate::error::{Error, Result};
use crate::linalg::svd_thin;
use crate::tensor::{DenseMatrix, FeatureTensor};

/// Ranges narrower than this normalize to the all-zero map.
pub const DEGENERATE_RANGE: f64 = 1e-12;
/// Singular vectors with `σᵢ / σ₁` below this are left out of multivector maps.
pub const SIGMA_CUTOFF: f64 = 1e-12;

/// Unnormalized `H x W` grid, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct RawMap {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl RawMap {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![0.0; height * width],
        }
    }

    pub fn abs(mut self) -> Self {
        self.data.iter_mut().for_each(|x| *x = x.abs());
        self
    }
}

/// `H x W` saliency values in `[0, 1]`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SaliencyMap {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl SaliencyMap {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width || height == 0 || width == 0 {
            return Err(Error::ShapeMismatch(format!(
                "{height}x{width} map needs {} values, got {}",
                height * width,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidParameter(format!(
                "saliency value {} at index {i} outside [0, 1]",
                data[i]
            )));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn constant(height: usize, width: usize, value: f64) -> Result<Self> {
        Self::new(height, width, vec![value; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn max_abs_diff(&self, other: &SaliencyMap) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// An image with values in `[0, 1]`, row-major with interleaved channels.
#[derive(Clone, Debug, PartialEq)]
pub struct RasterImage {
    height: usize,
    width: usize,
    channels: usize,
    pixels: Vec<f64>,
}

impl RasterImage {
    pub fn new(height: usize, width: usize, channels: usize, pixels: Vec<f64>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidParameter(format!(
                "images have 1 or 3 channels, got {channels}"
            )));
        }
        if pixels.len() != height * width * channels || height == 0 || width == 0 {
            return Err(Error::ShapeMismatch(format!(
                "{height}x{width}x{channels} image needs {} values, got {}",
                height * width * channels,
                pixels.len()
            )));
        }
        if let Some(i) = pixels.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidParameter(format!(
                "pixel value {} at index {i} outside [0, 1]",
                pixels[i]
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            pixels,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn pixel(&self, y: usize, x: usize) -> &[f64] {
        let i = (y * self.width + x) * self.channels;
        &self.pixels[i..i + self.channels]
    }
}

/// The four supported saliency methods.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    EigenCam,
    Tsm,
    MultivecEigenCam,
    Mtsm,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::EigenCam,
        Method::Tsm,
        Method::MultivecEigenCam,
        Method::Mtsm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::EigenCam => "eigencam",
            Method::Tsm => "tsm",
            Method::MultivecEigenCam => "multivec-eigencam",
            Method::Mtsm => "mtsm",
        }
    }

    pub fn uses_tucker(self) -> bool {
        matches!(self, Method::Tsm | Method::Mtsm)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown method {s:?}")))
    }
}

/// How the channel collapse or the per-vector maps are combined.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reduction {
    Sum,
    Mean,
}

/// `(m - min) / (max - min)`, or all zeros when the range is degenerate.
pub fn minmax_norm(m: &RawMap) -> SaliencyMap {
    let (lo, hi) = m
        .data
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        });
    let range = hi - lo;
    let data = if m.data.is_empty() || !(range >= DEGENERATE_RANGE) {
        vec![0.0; m.data.len()]
    } else {
        m.data
            .iter()
            .map(|&x| ((x - lo) / range).clamp(0.0, 1.0))
            .collect()
    };
    SaliencyMap {
        height: m.height,
        width: m.width,
        data,
    }
}

/// `Σᵢ wᵢ · F[i, :, :]`.
pub fn weighted_collapse(f: &FeatureTensor, w: &[f64]) -> Result<RawMap> {
    collapse_with(f, w, Reduction::Sum)
}

fn collapse_with(f: &FeatureTensor, w: &[f64], reduction: Reduction) -> Result<RawMap> {
    if w.len() != f.channels() {
        return Err(Error::ShapeMismatch(format!(
            "{} weights for {} channels",
            w.len(),
            f.channels()
        )));
    }
    let mut out = RawMap::zeros(f.height(), f.width());
    for (c, &wc) in w.iter().enumerate() {
        if wc == 0.0 {
            continue;
        }
        for (o, &x) in out.data.iter_mut().zip(f.channel(c)) {
            *o += wc * x;
        }
    }
    if reduction == Reduction::Mean {
        let n = w.len() as f64;
        out.data.iter_mut().for_each(|x| *x /= n);
    }
    Ok(out)
}

/// Singular spectrum of the `(H·W) x C` matricization after subtracting each
/// channel's spatial mean. Vectors are right singular vectors (length C).
pub fn centered_svd_spectrum(f: &FeatureTensor) -> Result<SingularSpectrum> {
    let (c_n, hw) = (f.channels(), f.height() * f.width());
    let mut x = DenseMatrix::zeros(hw, c_n);
    for c in 0..c_n {
        let ch = f.channel(c);
        let mean = ch.iter().sum::<f64>() / hw as f64;
        for (p, &v) in ch.iter().enumerate() {
            x.set(p, c, v - mean);
        }
    }
    let svd = svd_thin(&x)?;
    Ok(SingularSpectrum {
        vectors: svd.v.transpose(),
        values: svd.sigma,
    })
}

/// Full-rank HOOI (unless `opts` truncates) and its mode-1 spectrum.
pub fn tucker_spectrum(
    f: &FeatureTensor,
    opts: &HooiOptions,
) -> Result<(SingularSpectrum, TuckerFactors)> {
    let factors = hooi(f, opts)?;
    Ok((mode1_spectrum(&factors), factors))
}

/// `minmax_norm(|collapse(F, w)|)`.
pub fn univector_map(f: &FeatureTensor, w: &[f64]) -> Result<SaliencyMap> {
    univector_map_with(f, w, Reduction::Sum)
}

pub fn univector_map_with(
    f: &FeatureTensor,
    w: &[f64],
    collapse: Reduction,
) -> Result<SaliencyMap> {
    Ok(minmax_norm(&collapse_with(f, w, collapse)?.abs()))
}

/// Combination of per-vector maps `(σᵢ/σ₁)·|collapse(F, vᵢ)|` over every
/// vector with `σᵢ/σ₁ ≥ SIGMA_CUTOFF`, min-max normalized.
pub fn multivector_map(f: &FeatureTensor, spectrum: &SingularSpectrum) -> Result<SaliencyMap> {
    multivector_map_with(f, spectrum, Reduction::Sum, Reduction::Mean)
}

pub fn multivector_map_with(
    f: &FeatureTensor,
    spectrum: &SingularSpectrum,
    collapse: Reduction,
    combine: Reduction,
) -> Result<SaliencyMap> {
    let sigma_max = spectrum.values.first().copied().unwrap_or(0.0);
    let mut acc = RawMap::zeros(f.height(), f.width());
    if !(sigma_max > 0.0) {
        return Ok(minmax_norm(&acc));
    }
    let mut used = 0usize;
    for (i, &s) in spectrum.values.iter().enumerate() {
        let weight = s / sigma_max;
        if weight < SIGMA_CUTOFF {
            continue;
        }
        let m = collapse_with(f, spectrum.vectors.row(i), collapse)?;
        for (a, x) in acc.data.iter_mut().zip(&m.data) {
            *a += weight * x.abs();
        }
        used += 1;
    }
    if combine == Reduction::Mean && used > 0 {
        acc.data.iter_mut().for_each(|x| *x /= used as f64);
    }
    Ok(minmax_norm(&acc))
}

/// EigenCAM: centered SVD, leading right singular vector as channel weights.
pub fn eigencam(f: &FeatureTensor) -> Result<SaliencyMap> {
    let s = centered_svd_spectrum(f)?;
    univector_map(f, s.leading_vector())
}

/// Tucker saliency map: leading mode-1 factor column of a full-rank HOOI.
pub fn tsm(f: &FeatureTensor) -> Result<SaliencyMap> {
    tsm_with(f, &HooiOptions::default()).map(|(m, _)| m)
}

pub fn tsm_with(f: &FeatureTensor, opts: &HooiOptions) -> Result<(SaliencyMap, TuckerFactors)> {
    let factors = hooi(f, opts)?;
    let w = factors.factors[0].column(0);
    Ok((univector_map(f, &w)?, factors))
}

pub fn multivec_eigencam(f: &FeatureTensor) -> Result<SaliencyMap> {
    multivector_map(f, &centered_svd_spectrum(f)?)
}

pub fn mtsm(f: &FeatureTensor) -> Result<SaliencyMap> {
    mtsm_with(f, &HooiOptions::default()).map(|(m, _)| m)
}

pub fn mtsm_with(f: &FeatureTensor, opts: &HooiOptions) -> Result<(SaliencyMap, TuckerFactors)> {
    let (spectrum, factors) = tucker_spectrum(f, opts)?;
    Ok((multivector_map(f, &spectrum)?, factors))
}

/// Saliency map plus the HOOI iteration count for Tucker-based methods.
#[derive(Clone, Debug)]
pub struct SaliencyOutput {
    pub map: SaliencyMap,
    pub iterations: Option<usize>,
}

pub fn compute(method: Method, f: &FeatureTensor, opts: &HooiOptions) -> Result<SaliencyOutput> {
    Ok(match method {
        Method::EigenCam => SaliencyOutput {
            map: eigencam(f)?,
            iterations: None,
        },
        Method::MultivecEigenCam => SaliencyOutput {
            map: multivec_eigencam(f)?,
            iterations: None,
        },
        Method::Tsm => {
            let (map, t) = tsm_with(f, opts)?;
            SaliencyOutput {
                map,
                iterations: Some(t.iterations),
            }
        }
        Method::Mtsm => {
            let (map, t) = mtsm_with(f, opts)?;
            SaliencyOutput {
                map,
                iterations: Some(t.iterations),
            }
        }
    })
}

/// Bilinear resampling with corner-aligned sample positions.
pub fn upsample_bilinear(m: &SaliencyMap, height: usize, width: usize) -> Result<SaliencyMap> {
    if height == 0 || width == 0 {
        return Err(Error::InvalidParameter(format!(
            "target size {height}x{width} must be positive"
        )));
    }
    if (height, width) == m.shape() {
        return Ok(m.clone());
    }
    let coord = |i: usize, out: usize, src: usize| -> (usize, usize, f64) {
        if out == 1 || src == 1 {
            return (0, 0, 0.0);
        }
        let pos = i as f64 * (src - 1) as f64 / (out - 1) as f64;
        let lo = (pos.floor() as usize).min(src - 1);
        let hi = (lo + 1).min(src - 1);
        (lo, hi, pos - lo as f64)
    };
    let mut data = Vec::with_capacity(height * width);
    for y in 0..height {
        let (y0, y1, fy) = coord(y, height, m.height);
        for x in 0..width {
            let (x0, x1, fx) = coord(x, width, m.width);
            let top = m.get(y0, x0) * (1.0 - fx) + m.get(y0, x1) * fx;
            let bottom = m.get(y1, x0) * (1.0 - fx) + m.get(y1, x1) * fx;
            data.push((top * (1.0 - fy) + bottom * fy).clamp(0.0, 1.0));
        }
    }
    SaliencyMap::new(height, width, data)
}

fn check_same_size(img: &RasterImage, m: &SaliencyMap) -> Result<()> {
    if (img.height, img.width) != m.shape() {
        return Err(Error::ShapeMismatch(format!(
            "image is {}x{} but saliency map is {}x{}",
            img.height, img.width, m.height, m.width
        )));
    }
    Ok(())
}

/// Multiplies every channel of the image by the saliency value.
pub fn apply_mask(img: &RasterImage, m: &SaliencyMap) -> Result<RasterImage> {
    check_same_size(img, m)?;
    let pixels = img
        .pixels
        .chunks(img.channels)
        .zip(&m.data)
        .flat_map(|(px, &s)| px.iter().map(move |v| v * s))
        .collect();
    RasterImage::new(img.height, img.width, img.channels, pixels)
}

/// Blue → green → red ramp, piecewise linear with green at 0.5.
pub fn colormap(v: f64) -> [f64; 3] {
    let v = v.clamp(0.0, 1.0);
    if v <= 0.5 {
        [0.0, 2.0 * v, 1.0 - 2.0 * v]
    } else {
        [2.0 * v - 1.0, 2.0 - 2.0 * v, 0.0]
    }
}

/// Half-and-half blend of the image with the colormapped saliency; the
/// output is always RGB.
pub fn render_overlay(img: &RasterImage, m: &SaliencyMap) -> Result<RasterImage> {
    check_same_size(img, m)?;
    let mut pixels = Vec::with_capacity(img.height * img.width * 3);
    for (px, &s) in img.pixels.chunks(img.channels).zip(&m.data) {
        let color = colormap(s);
        for (k, c) in color.iter().enumerate() {
            let base = if img.channels == 1 { px[0] } else { px[k] };
            pixels.push((0.5 * base + 0.5 * c).clamp(0.0, 1.0));
        }
    }
    RasterImage::new(img.height, img.width, 3, pixels)
}
