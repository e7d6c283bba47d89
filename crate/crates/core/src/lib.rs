//! Label-independent saliency maps for convolutional feature tensors.
//!
//! A feature tensor `F` of shape `(C, H, W)` is reduced to an `H x W` map by
//! weighting its channels with singular vectors obtained either from a
//! centered SVD of its spatial-by-channel matricization or from a Tucker
//! decomposition of the tensor itself. The crate also carries the linear
//! algebra those methods need, evaluation metrics, and file formats for
//! batch runs driven by the `tsmap` binary.

pub mod cli;
pub mod decomp;
pub mod error;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod saliency;
pub mod tensor;

pub use decomp::{hooi, hosvd, mode1_spectrum, reconstruct, HooiOptions, SingularSpectrum, TuckerFactors};
pub use error::{Error, Result};
pub use linalg::{svd_thin, sym_eig, SvdResult};
pub use saliency::{compute, eigencam, mtsm, multivec_eigencam, tsm, Method, RasterImage, SaliencyMap};
pub use tensor::{DenseMatrix, FeatureTensor, Mode};
