//! Python bindings: feature tensors, Tucker decompositions, saliency maps and
//! evaluation metrics over numpy arrays.

use numpy::ndarray::{Array1, Array2, Array3};
use numpy::{IntoPyArray, PyArray1, PyArray2, PyArray3, PyReadonlyArray2, PyReadonlyArray3};
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use tucker_saliency::decomp::{DEFAULT_MAX_ITER, DEFAULT_TOL};
use tucker_saliency::io::{read_mask, read_tensor, write_array, ArrayValue};
use tucker_saliency::metrics::{self, BinaryMask, ConfidencePair, EmbeddingPair};
use tucker_saliency::saliency::upsample_bilinear;
use tucker_saliency::{
    DenseMatrix, Error, FeatureTensor, HooiOptions, Method, SaliencyMap, TuckerFactors,
};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

trait OrRaise<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> OrRaise<T> for tucker_saliency::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

fn matrix_array<'py>(py: Python<'py>, m: &DenseMatrix) -> Bound<'py, PyArray2<f64>> {
    Array2::from_shape_vec(m.shape(), m.data().to_vec())
        .expect("matrix storage matches its shape")
        .into_pyarray(py)
}

fn matrix_from(a: PyReadonlyArray2<'_, f64>) -> PyResult<DenseMatrix> {
    let (rows, cols) = a.as_array().dim();
    DenseMatrix::new(rows, cols, a.as_array().iter().copied().collect()).py()
}

#[pyclass(name = "FeatureTensor", module = "tucker_cam", frozen)]
struct PyTensor(FeatureTensor);

#[pymethods]
impl PyTensor {
    /// Wraps a float64 array of shape `(C, H, W)`.
    #[new]
    fn new(array: PyReadonlyArray3<'_, f64>) -> PyResult<Self> {
        let (c, h, w) = array.as_array().dim();
        FeatureTensor::new([c, h, w], array.as_array().iter().copied().collect())
            .py()
            .map(Self)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        read_tensor(path).py().map(Self)
    }

    fn save(&self, path: &str) -> PyResult<()> {
        write_array(&ArrayValue::Tensor(self.0.clone()), path).py()
    }

    #[getter]
    fn shape(&self) -> (usize, usize, usize) {
        let [c, h, w] = self.0.shape();
        (c, h, w)
    }

    fn to_numpy<'py>(&self, py: Python<'py>) -> Bound<'py, PyArray3<f64>> {
        let [c, h, w] = self.0.shape();
        Array3::from_shape_vec((c, h, w), self.0.data().to_vec())
            .expect("tensor storage matches its shape")
            .into_pyarray(py)
    }

    fn frobenius_norm(&self) -> f64 {
        self.0.frobenius_norm()
    }

    fn __repr__(&self) -> String {
        format!("FeatureTensor(shape={:?})", self.0.shape())
    }
}

/// A `FeatureTensor` or a float64 `(C, H, W)` array.
fn tensor_arg(obj: &Bound<'_, PyAny>) -> PyResult<FeatureTensor> {
    if let Ok(t) = obj.cast::<PyTensor>() {
        return Ok(t.get().0.clone());
    }
    let array: PyReadonlyArray3<'_, f64> = obj.extract().map_err(|_| {
        PyValueError::new_err("expected a FeatureTensor or a float64 array of shape (C, H, W)")
    })?;
    PyTensor::new(array).map(|t| t.0)
}

#[pyclass(name = "SaliencyMap", module = "tucker_cam", frozen)]
struct PyMap(SaliencyMap);

#[pymethods]
impl PyMap {
    #[getter]
    fn shape(&self) -> (usize, usize) {
        self.0.shape()
    }

    fn to_numpy<'py>(&self, py: Python<'py>) -> Bound<'py, PyArray2<f64>> {
        Array2::from_shape_vec(self.0.shape(), self.0.data().to_vec())
            .expect("map storage matches its shape")
            .into_pyarray(py)
    }

    fn upsample(&self, height: usize, width: usize) -> PyResult<Self> {
        upsample_bilinear(&self.0, height, width).py().map(Self)
    }

    fn save(&self, path: &str) -> PyResult<()> {
        let (h, w) = self.0.shape();
        let m = DenseMatrix::new(h, w, self.0.data().to_vec()).py()?;
        write_array(&ArrayValue::Matrix(m), path).py()
    }

    fn __repr__(&self) -> String {
        format!("SaliencyMap(shape={:?})", self.0.shape())
    }
}

#[pyclass(name = "TuckerFactors", module = "tucker_cam", frozen)]
struct PyTucker(TuckerFactors);

#[pymethods]
impl PyTucker {
    #[getter]
    fn core(&self) -> PyTensor {
        PyTensor(self.0.core.clone())
    }

    #[getter]
    fn factors<'py>(&self, py: Python<'py>) -> Vec<Bound<'py, PyArray2<f64>>> {
        self.0.factors.iter().map(|a| matrix_array(py, a)).collect()
    }

    #[getter]
    fn ranks(&self) -> (usize, usize, usize) {
        let [a, b, c] = self.0.ranks();
        (a, b, c)
    }

    #[getter]
    fn fit(&self) -> f64 {
        self.0.fit
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.0.iterations
    }

    #[getter]
    fn core_norms(&self) -> Vec<f64> {
        self.0.core_norms.clone()
    }

    fn reconstruct(&self) -> PyResult<PyTensor> {
        tucker_saliency::reconstruct(&self.0).py().map(PyTensor)
    }

    /// Mode-1 singular values and their channel vectors, one per row.
    fn spectrum<'py>(
        &self,
        py: Python<'py>,
    ) -> (Bound<'py, PyArray1<f64>>, Bound<'py, PyArray2<f64>>) {
        let s = tucker_saliency::mode1_spectrum(&self.0);
        (
            Array1::from(s.values).into_pyarray(py),
            matrix_array(py, &s.vectors),
        )
    }

    fn __repr__(&self) -> String {
        format!(
            "TuckerFactors(ranks={:?}, fit={}, iterations={})",
            self.0.ranks(),
            self.0.fit,
            self.0.iterations
        )
    }
}

fn hooi_options(
    ranks: Option<(usize, usize, usize)>,
    tol: f64,
    max_iter: usize,
) -> PyResult<HooiOptions> {
    if max_iter == 0 {
        return Err(PyValueError::new_err("max_iter must be positive"));
    }
    Ok(HooiOptions {
        ranks: ranks.map(|(a, b, c)| [a, b, c]),
        tol,
        max_iter,
    })
}

/// Thin SVD `M = U diag(s) Vᵀ` with descending singular values.
#[pyfunction]
#[allow(clippy::type_complexity)]
fn svd<'py>(
    py: Python<'py>,
    matrix: PyReadonlyArray2<'py, f64>,
) -> PyResult<(
    Bound<'py, PyArray2<f64>>,
    Bound<'py, PyArray1<f64>>,
    Bound<'py, PyArray2<f64>>,
)> {
    let r = tucker_saliency::svd_thin(&matrix_from(matrix)?).py()?;
    Ok((
        matrix_array(py, &r.u),
        Array1::from(r.sigma).into_pyarray(py),
        matrix_array(py, &r.v),
    ))
}

#[pyfunction]
fn hosvd(tensor: &Bound<'_, PyAny>, ranks: (usize, usize, usize)) -> PyResult<PyTucker> {
    tucker_saliency::hosvd(&tensor_arg(tensor)?, [ranks.0, ranks.1, ranks.2])
        .py()
        .map(PyTucker)
}

#[pyfunction]
#[pyo3(signature = (tensor, ranks=None, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER))]
fn hooi(
    tensor: &Bound<'_, PyAny>,
    ranks: Option<(usize, usize, usize)>,
    tol: f64,
    max_iter: usize,
) -> PyResult<PyTucker> {
    let opts = hooi_options(ranks, tol, max_iter)?;
    tucker_saliency::hooi(&tensor_arg(tensor)?, &opts)
        .py()
        .map(PyTucker)
}

/// Saliency map of `tensor` by one of `METHODS`.
#[pyfunction]
#[pyo3(signature = (tensor, method="tsm", tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER))]
fn saliency(
    tensor: &Bound<'_, PyAny>,
    method: &str,
    tol: f64,
    max_iter: usize,
) -> PyResult<PyMap> {
    let method: Method = method.parse().py()?;
    let opts = hooi_options(None, tol, max_iter)?;
    tucker_saliency::compute(method, &tensor_arg(tensor)?, &opts)
        .py()
        .map(|out| PyMap(out.map))
}

fn confidence(p: &[f64], o: &[f64]) -> PyResult<Vec<ConfidencePair>> {
    if p.len() != o.len() {
        return Err(PyValueError::new_err(format!(
            "{} values of p but {} of o",
            p.len(),
            o.len()
        )));
    }
    p.iter()
        .zip(o)
        .enumerate()
        .map(|(i, (&p, &o))| ConfidencePair::new(i.to_string(), p, o).py())
        .collect()
}

/// Returns `(value, n, excluded)`.
#[pyfunction]
fn average_drop(p: Vec<f64>, o: Vec<f64>) -> PyResult<(f64, usize, usize)> {
    let r = metrics::average_drop(&confidence(&p, &o)?).py()?;
    Ok((r.value, r.n, r.excluded))
}

#[pyfunction]
fn average_increase(p: Vec<f64>, o: Vec<f64>) -> PyResult<f64> {
    metrics::average_increase(&confidence(&p, &o)?).py()
}

/// Rows of `z` and `z_masked` are paired embeddings.
#[pyfunction]
fn embedding_mse(
    z: PyReadonlyArray2<'_, f64>,
    z_masked: PyReadonlyArray2<'_, f64>,
) -> PyResult<f64> {
    let (z, zm) = (z.as_array(), z_masked.as_array());
    if z.dim() != zm.dim() {
        return Err(PyValueError::new_err(format!(
            "z is {:?} but z_masked is {:?}",
            z.dim(),
            zm.dim()
        )));
    }
    let pairs = z
        .rows()
        .into_iter()
        .zip(zm.rows())
        .enumerate()
        .map(|(i, (a, b))| EmbeddingPair::new(i.to_string(), a.to_vec(), b.to_vec()).py())
        .collect::<PyResult<Vec<_>>>()?;
    metrics::embedding_mse(&pairs).py()
}

fn maps_and_masks(
    maps: &[PyRef<'_, PyMap>],
    masks: &[PyReadonlyArray2<'_, bool>],
) -> PyResult<(Vec<SaliencyMap>, Vec<BinaryMask>)> {
    let masks = masks
        .iter()
        .map(|m| {
            let (h, w) = m.as_array().dim();
            BinaryMask::new(h, w, m.as_array().iter().copied().collect()).py()
        })
        .collect::<PyResult<Vec<_>>>()?;
    Ok((maps.iter().map(|m| m.0.clone()).collect(), masks))
}

/// Mean IoU in percent of maps binarized at `threshold` against boolean masks.
#[pyfunction]
#[pyo3(signature = (maps, masks, threshold=metrics::DEFAULT_THRESHOLD))]
fn miou(
    maps: Vec<PyRef<'_, PyMap>>,
    masks: Vec<PyReadonlyArray2<'_, bool>>,
    threshold: f64,
) -> PyResult<f64> {
    let (maps, masks) = maps_and_masks(&maps, &masks)?;
    metrics::miou(&maps, &masks, threshold).py()
}

#[pyfunction]
#[pyo3(signature = (maps, masks, thresholds=metrics::DEFAULT_SWEEP.to_vec()))]
fn threshold_sweep(
    maps: Vec<PyRef<'_, PyMap>>,
    masks: Vec<PyReadonlyArray2<'_, bool>>,
    thresholds: Vec<f64>,
) -> PyResult<Vec<(f64, f64)>> {
    let (maps, masks) = maps_and_masks(&maps, &masks)?;
    metrics::threshold_sweep(&maps, &masks, &thresholds).py()
}

/// Foreground pixels of a segmentation mask image.
#[pyfunction]
fn load_mask<'py>(py: Python<'py>, path: &str) -> PyResult<Bound<'py, PyArray2<bool>>> {
    let m = read_mask(path).py()?;
    Ok(Array2::from_shape_vec(m.shape(), m.data().to_vec())
        .expect("mask storage matches its shape")
        .into_pyarray(py))
}

#[pymodule]
fn tucker_cam(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTensor>()?;
    m.add_class::<PyMap>()?;
    m.add_class::<PyTucker>()?;
    m.add_function(wrap_pyfunction!(svd, m)?)?;
    m.add_function(wrap_pyfunction!(hosvd, m)?)?;
    m.add_function(wrap_pyfunction!(hooi, m)?)?;
    m.add_function(wrap_pyfunction!(saliency, m)?)?;
    m.add_function(wrap_pyfunction!(average_drop, m)?)?;
    m.add_function(wrap_pyfunction!(average_increase, m)?)?;
    m.add_function(wrap_pyfunction!(embedding_mse, m)?)?;
    m.add_function(wrap_pyfunction!(miou, m)?)?;
    m.add_function(wrap_pyfunction!(threshold_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(load_mask, m)?)?;
    let methods: Vec<&str> = Method::ALL.iter().map(|m| m.name()).collect();
    m.add("METHODS", methods)?;
    Ok(())
}
