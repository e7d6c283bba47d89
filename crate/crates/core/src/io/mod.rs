//! File formats: NPY arrays, PNG/PNM images and masks, CSV manifests and
//! reports.

mod image;
mod manifest;
mod npy;
mod report;

use thiserror::Error;

pub use self::image::{read_image, read_mask, read_mask_with, write_image, MaskOptions};
pub use self::manifest::{DatasetManifest, ManifestEntry, MANIFEST_COLUMNS};
pub use self::npy::{
    decode_npy, encode_npy, read_array, read_matrix, read_tensor, read_vector, write_array,
    ArrayValue,
};
pub use self::report::{format_sig6, write_report, Cell, Report};

/// What went wrong while decoding or encoding a file.
#[derive(Debug, Error)]
pub enum FormatError {
    #[error("bad magic bytes (not an NPY file)")]
    BadMagic,

    #[error("unsupported NPY version {major}.{minor}")]
    UnsupportedVersion { major: u8, minor: u8 },

    #[error("malformed header at byte {offset}: {reason}")]
    MalformedHeader { offset: usize, reason: String },

    #[error("unsupported dtype {0:?}")]
    UnsupportedDtype(String),

    #[error("unsupported order (Fortran-order arrays are not supported)")]
    UnsupportedOrder,

    #[error("unsupported shape {0:?}")]
    UnsupportedShape(Vec<usize>),

    #[error("truncated payload: expected {expected} bytes, found {actual}")]
    Truncated { expected: usize, actual: usize },

    #[error("unsupported bit depth {0}")]
    UnsupportedBitDepth(u32),

    #[error("unsupported image format: {0}")]
    UnsupportedImage(String),

    #[error("corrupt stream: {0}")]
    Corrupt(String),

    #[error("invalid value: {0}")]
    InvalidValue(String),
}
