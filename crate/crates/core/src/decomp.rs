//! Tucker decomposition of feature tensors (HOSVD and HOOI) and mode-1
//! singular spectra read off the core tensor.

use crate::error::{Error, Result};
use crate::linalg::leading_left_vectors;
use crate::tensor::{DenseMatrix, FeatureTensor, Mode};

pub const DEFAULT_TOL: f64 = 1e-5;
pub const DEFAULT_MAX_ITER: usize = 100;

/// Core tensor and per-mode factor matrices with orthonormal columns, so
/// that `T ≈ core ×₁ A⁽¹⁾ ×₂ A⁽²⁾ ×₃ A⁽³⁾`.
#[derive(Clone, Debug)]
pub struct TuckerFactors {
    pub core: FeatureTensor,
    pub factors: [DenseMatrix; 3],
    /// `1 - ‖T - reconstruction‖ / ‖T‖`.
    pub fit: f64,
    /// HOOI sweeps performed; 0 for a plain HOSVD.
    pub iterations: usize,
    /// ‖core‖ after initialization and after every HOOI sweep.
    pub core_norms: Vec<f64>,
}

impl TuckerFactors {
    pub fn ranks(&self) -> [usize; 3] {
        self.core.shape()
    }

    pub fn factor(&self, mode: Mode) -> &DenseMatrix {
        &self.factors[mode.axis()]
    }
}

/// Descending singular values paired with channel-space singular vectors:
/// row `i` of `vectors` goes with `values[i]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SingularSpectrum {
    pub values: Vec<f64>,
    pub vectors: DenseMatrix,
}

impl SingularSpectrum {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// The leading vector, used as the channel weights of a single-vector map.
    pub fn leading_vector(&self) -> &[f64] {
        self.vectors.row(0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HooiOptions {
    /// Per-mode ranks; `None` keeps the full tensor shape.
    pub ranks: Option<[usize; 3]>,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for HooiOptions {
    fn default() -> Self {
        Self {
            ranks: None,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

fn check_ranks(t: &FeatureTensor, ranks: [usize; 3]) -> Result<()> {
    for mode in Mode::ALL {
        let rank = ranks[mode.axis()];
        let size = t.dim(mode);
        if rank == 0 || rank > size {
            return Err(Error::RankOutOfBounds {
                mode: mode.index(),
                rank,
                size,
            });
        }
    }
    Ok(())
}

/// `T ×₁ A⁽¹⁾ᵀ ×₂ A⁽²⁾ᵀ ×₃ A⁽³⁾ᵀ`, skipping `skip` if given.
fn project(
    t: &FeatureTensor,
    factors: &[DenseMatrix; 3],
    skip: Option<Mode>,
) -> Result<FeatureTensor> {
    let mut out = t.clone();
    for mode in Mode::ALL {
        if Some(mode) == skip {
            continue;
        }
        out = out.mode_product(&factors[mode.axis()].transpose(), mode)?;
    }
    Ok(out)
}

fn fit_of(t: &FeatureTensor, core: &FeatureTensor, factors: &[DenseMatrix; 3]) -> Result<f64> {
    let norm = t.frobenius_norm();
    if norm == 0.0 {
        return Ok(1.0);
    }
    let approx = expand(core, factors)?;
    Ok(1.0 - t.sub(&approx)?.frobenius_norm() / norm)
}

fn expand(core: &FeatureTensor, factors: &[DenseMatrix; 3]) -> Result<FeatureTensor> {
    let mut out = core.clone();
    for mode in Mode::ALL {
        out = out.mode_product(&factors[mode.axis()], mode)?;
    }
    Ok(out)
}

/// Truncated higher-order SVD: each factor holds the leading left singular
/// vectors of the corresponding unfolding.
pub fn hosvd(t: &FeatureTensor, ranks: [usize; 3]) -> Result<TuckerFactors> {
    check_ranks(t, ranks)?;
    let factors = [
        leading_left_vectors(&t.unfold(Mode::Channel), ranks[0])?,
        leading_left_vectors(&t.unfold(Mode::Height), ranks[1])?,
        leading_left_vectors(&t.unfold(Mode::Width), ranks[2])?,
    ];
    let core = project(t, &factors, None)?;
    let fit = fit_of(t, &core, &factors)?;
    let core_norms = vec![core.frobenius_norm()];
    Ok(TuckerFactors {
        core,
        factors,
        fit,
        iterations: 0,
        core_norms,
    })
}

/// Higher-order orthogonal iteration, initialized from [`hosvd`].
///
/// Each sweep refits every factor to the leading left singular vectors of
/// the tensor projected onto the other two factors. Iteration stops once the
/// relative change of ‖core‖ drops below `tol` or after `max_iter` sweeps.
pub fn hooi(t: &FeatureTensor, opts: &HooiOptions) -> Result<TuckerFactors> {
    if let Some(i) = t.data().iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "tolerance must be positive, got {}",
            opts.tol
        )));
    }
    let ranks = opts.ranks.unwrap_or(t.shape());
    let init = hosvd(t, ranks)?;
    let mut factors = init.factors;
    let mut core = init.core;
    let mut core_norms = init.core_norms;
    let mut prev = core_norms[0];
    let mut iterations = 0;

    while iterations < opts.max_iter {
        iterations += 1;
        for mode in Mode::ALL {
            let partial = project(t, &factors, Some(mode))?;
            factors[mode.axis()] = leading_left_vectors(&partial.unfold(mode), ranks[mode.axis()])?;
        }
        core = project(t, &factors, None)?;
        let norm = core.frobenius_norm();
        core_norms.push(norm);
        let change = if prev > 0.0 {
            (norm - prev).abs() / prev
        } else {
            0.0
        };
        prev = norm;
        if change < opts.tol {
            break;
        }
    }

    let fit = fit_of(t, &core, &factors)?;
    Ok(TuckerFactors {
        core,
        factors,
        fit,
        iterations,
        core_norms,
    })
}

/// Expands the factors back into a full tensor.
pub fn reconstruct(f: &TuckerFactors) -> Result<FeatureTensor> {
    for mode in Mode::ALL {
        let a = &f.factors[mode.axis()];
        if a.cols() != f.core.dim(mode) {
            return Err(Error::ShapeMismatch(format!(
                "factor {mode} is {}x{} but the core has {} entries along that mode",
                a.rows(),
                a.cols(),
                f.core.dim(mode)
            )));
        }
    }
    expand(&f.core, &f.factors)
}

/// Mode-1 spectrum: σᵢ is the Frobenius norm of the i-th channel slice of
/// the core and its vector is column i of A⁽¹⁾, sorted jointly by σ.
pub fn mode1_spectrum(f: &TuckerFactors) -> SingularSpectrum {
    let a1 = &f.factors[0];
    let mut pairs: Vec<(f64, usize)> = (0..f.core.channels())
        .map(|i| {
            let s = f.core.channel(i).iter().map(|x| x * x).sum::<f64>().sqrt();
            (s, i)
        })
        .collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut vectors = DenseMatrix::zeros(pairs.len(), a1.rows());
    for (row, &(_, i)) in pairs.iter().enumerate() {
        for c in 0..a1.rows() {
            vectors.set(row, c, a1.get(c, i));
        }
    }
    SingularSpectrum {
        values: pairs.iter().map(|p| p.0).collect(),
        vectors,
    }
}

/// Share of the spectrum carried by the first `k` singular values.
pub fn variance_ratio(s: &SingularSpectrum, k: usize) -> Result<f64> {
    if k == 0 || k > s.values.len() {
        return Err(Error::InvalidParameter(format!(
            "k = {k} outside 1..={}",
            s.values.len()
        )));
    }
    let total: f64 = s.values.iter().sum();
    if total <= 0.0 {
        return Err(Error::ZeroSpectrum);
    }
    Ok(s.values[..k].iter().sum::<f64>() / total)
}
