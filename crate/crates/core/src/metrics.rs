//! Saliency evaluation: Average Drop / Average Increase on classifier
//! confidences, embedding MSE, and mIoU of binarized maps against
//! segmentation masks.

use crate::decomp::SingularSpectrum;
use crate::error::{Error, Result};
use crate::saliency::SaliencyMap;

pub const DEFAULT_THRESHOLD: f64 = 0.5;
pub const DEFAULT_SWEEP: [f64; 6] = [0.4, 0.5, 0.6, 0.7, 0.8, 0.9];
pub const DEFAULT_SPECTRUM_DEPTH: usize = 5;

/// True-class probability on the original image (`p`) and on the image
/// masked by its saliency map (`o`).
#[derive(Clone, Debug, PartialEq)]
pub struct ConfidencePair {
    pub id: String,
    pub p: f64,
    pub o: f64,
}

impl ConfidencePair {
    pub fn new(id: impl Into<String>, p: f64, o: f64) -> Result<Self> {
        let id = id.into();
        for (name, v) in [("p", p), ("o", o)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidParameter(format!(
                    "{id}: probability {name} = {v} outside [0, 1]"
                )));
            }
        }
        Ok(Self { id, p, o })
    }
}

/// Encodings of the original (`z`) and masked (`z_masked`) image.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingPair {
    pub id: String,
    pub z: Vec<f64>,
    pub z_masked: Vec<f64>,
}

impl EmbeddingPair {
    pub fn new(id: impl Into<String>, z: Vec<f64>, z_masked: Vec<f64>) -> Result<Self> {
        let id = id.into();
        if z.len() != z_masked.len() {
            return Err(Error::ShapeMismatch(format!(
                "{id}: embeddings of length {} and {}",
                z.len(),
                z_masked.len()
            )));
        }
        if z.iter().chain(&z_masked).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("{id}: non-finite embedding")));
        }
        Ok(Self { id, z, z_masked })
    }
}

/// Row-major boolean grid; `true` is foreground.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(height: usize, width: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::ShapeMismatch(format!(
                "{height}x{width} mask needs {} values, got {}",
                height * width,
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, value: bool) -> Self {
        Self {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let data = (0..height)
            .flat_map(|y| (0..width).map(move |x| (y, x)))
            .map(|(y, x)| f(y, x))
            .collect();
        Self {
            height,
            width,
            data,
        }
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

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }
}

/// Average Drop and how many pairs were left out for having `p = 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DropReport {
    pub value: f64,
    pub n: usize,
    pub excluded: usize,
}

/// `100/N · Σ max(p - o, 0) / p` over pairs with `p > 0`.
pub fn average_drop(pairs: &[ConfidencePair]) -> Result<DropReport> {
    if pairs.is_empty() {
        return Err(Error::Empty("average drop needs at least one pair"));
    }
    let kept: Vec<&ConfidencePair> = pairs.iter().filter(|c| c.p > 0.0).collect();
    if kept.is_empty() {
        return Err(Error::Empty("every pair has p = 0"));
    }
    let sum: f64 = kept.iter().map(|c| (c.p - c.o).max(0.0) / c.p).sum();
    Ok(DropReport {
        value: sum / kept.len() as f64 * 100.0,
        n: kept.len(),
        excluded: pairs.len() - kept.len(),
    })
}

/// Percentage of pairs whose confidence strictly increases under masking.
pub fn average_increase(pairs: &[ConfidencePair]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Empty("average increase needs at least one pair"));
    }
    let hits = pairs.iter().filter(|c| c.p < c.o).count();
    Ok(hits as f64 / pairs.len() as f64 * 100.0)
}

/// `1/N · Σ ‖z - z̄‖²`.
pub fn embedding_mse(pairs: &[EmbeddingPair]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Empty("embedding MSE needs at least one pair"));
    }
    let mut total = 0.0;
    for pair in pairs {
        if pair.z.len() != pair.z_masked.len() {
            return Err(Error::ShapeMismatch(format!(
                "{}: embeddings of length {} and {}",
                pair.id,
                pair.z.len(),
                pair.z_masked.len()
            )));
        }
        total += pair
            .z
            .iter()
            .zip(&pair.z_masked)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>();
    }
    Ok(total / pairs.len() as f64)
}

/// Which side of the threshold counts as foreground.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Binarization {
    /// Foreground where saliency ≥ T: the salient region is the object.
    #[default]
    AtLeast,
    /// Foreground where saliency ≤ T, the literal reading of the original
    /// formula. Kept for comparison only.
    AtMost,
}

pub fn binarize(m: &SaliencyMap, threshold: f64) -> BinaryMask {
    binarize_with(m, threshold, Binarization::AtLeast)
}

pub fn binarize_with(m: &SaliencyMap, threshold: f64, direction: Binarization) -> BinaryMask {
    let data = m
        .data()
        .iter()
        .map(|&v| match direction {
            Binarization::AtLeast => v >= threshold,
            Binarization::AtMost => v <= threshold,
        })
        .collect();
    BinaryMask {
        height: m.height(),
        width: m.width(),
        data,
    }
}

/// Intersection and union pixel counts.
pub fn overlap_counts(b: &BinaryMask, s: &BinaryMask) -> Result<(usize, usize)> {
    if b.shape() != s.shape() {
        return Err(Error::ShapeMismatch(format!(
            "masks of shape {:?} and {:?}",
            b.shape(),
            s.shape()
        )));
    }
    let (mut inter, mut union) = (0, 0);
    for (&x, &y) in b.data.iter().zip(&s.data) {
        inter += usize::from(x && y);
        union += usize::from(x || y);
    }
    Ok((inter, union))
}

/// `|B ∩ S| / |B ∪ S|`, with two empty masks scoring 1.
pub fn iou(b: &BinaryMask, s: &BinaryMask) -> Result<f64> {
    iou_with(b, s, 1.0)
}

/// Like [`iou`] but with the value for an empty union given explicitly.
pub fn iou_with(b: &BinaryMask, s: &BinaryMask, empty_union: f64) -> Result<f64> {
    let (inter, union) = overlap_counts(b, s)?;
    Ok(if union == 0 {
        empty_union
    } else {
        inter as f64 / union as f64
    })
}

/// Mean per-image IoU of the binarized maps, in percent. Maps must already
/// have the masks' resolution.
pub fn miou(maps: &[SaliencyMap], masks: &[BinaryMask], threshold: f64) -> Result<f64> {
    if maps.len() != masks.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} maps for {} masks",
            maps.len(),
            masks.len()
        )));
    }
    if maps.is_empty() {
        return Err(Error::Empty("mIoU needs at least one image"));
    }
    let mut total = 0.0;
    for (m, s) in maps.iter().zip(masks) {
        total += iou(&binarize(m, threshold), s)?;
    }
    Ok(total / maps.len() as f64 * 100.0)
}

/// One `(threshold, mIoU)` row per threshold, in the given order.
pub fn threshold_sweep(
    maps: &[SaliencyMap],
    masks: &[BinaryMask],
    thresholds: &[f64],
) -> Result<Vec<(f64, f64)>> {
    if thresholds.is_empty() {
        return Err(Error::Empty("threshold sweep needs at least one threshold"));
    }
    thresholds
        .iter()
        .map(|&t| miou(maps, masks, t).map(|v| (t, v)))
        .collect()
}

/// Five-number summary; quartiles use linear interpolation between order
/// statistics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quartiles {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl Quartiles {
    pub fn of(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("quartiles of an empty list"));
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let at = |q: f64| {
            let pos = q * (sorted.len() - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
        };
        Ok(Self {
            min: sorted[0],
            q1: at(0.25),
            median: at(0.5),
            q3: at(0.75),
            max: sorted[sorted.len() - 1],
        })
    }
}

/// Per-tensor `σᵢ / Σσ` for the first `k` indices and their distribution
/// across tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumReport {
    pub k: usize,
    /// `ratios[t][i]` is `σᵢ / Σσ` of tensor `t`; indices past the spectrum
    /// length are zero.
    pub ratios: Vec<Vec<f64>>,
    /// One summary per index `i < k`.
    pub summaries: Vec<Quartiles>,
}

pub fn spectrum_report(spectra: &[SingularSpectrum], k: usize) -> Result<SpectrumReport> {
    if spectra.is_empty() {
        return Err(Error::Empty("spectrum report needs at least one spectrum"));
    }
    if k == 0 {
        return Err(Error::InvalidParameter("spectrum depth must be positive".into()));
    }
    let mut ratios = Vec::with_capacity(spectra.len());
    for s in spectra {
        let total: f64 = s.values.iter().sum();
        if !(total > 0.0) {
            return Err(Error::ZeroSpectrum);
        }
        ratios.push(
            (0..k)
                .map(|i| s.values.get(i).map_or(0.0, |v| v / total))
                .collect::<Vec<_>>(),
        );
    }
    let summaries = (0..k)
        .map(|i| Quartiles::of(&ratios.iter().map(|r| r[i]).collect::<Vec<_>>()))
        .collect::<Result<_>>()?;
    Ok(SpectrumReport {
        k,
        ratios,
        summaries,
    })
}
