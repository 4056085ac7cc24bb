//! Python bindings: the `zkpc` extension module.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;

use zkpc_core::commit::Digest;
use zkpc_core::exprlang;
use zkpc_core::isa::{self, compute_image_id, DEFAULT_MAX_STEPS};
use zkpc_core::minilang::compile_minilang;
use zkpc_core::prover::{self, ProveOptions, DEFAULT_SAMPLES};
use zkpc_core::verifier;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn digest(hex: &str) -> PyResult<Digest> {
    Digest::from_hex(hex).ok_or_else(|| PyValueError::new_err("expected 64 hex digits"))
}

/// A compiler image in the guest ISA.
#[pyclass(name = "GuestImage", frozen)]
struct PyGuestImage(isa::GuestImage);

#[pymethods]
impl PyGuestImage {
    #[staticmethod]
    fn from_bytes(data: &[u8]) -> PyResult<Self> {
        isa::GuestImage::from_bytes(data).map(Self).map_err(value_err)
    }

    /// The bundled ExprLang compiler.
    #[staticmethod]
    fn exprcc() -> Self {
        Self(exprlang::exprcc_image().clone())
    }

    /// Compiles MiniLang source into an image.
    #[staticmethod]
    fn compile_minilang(source: &[u8]) -> PyResult<Self> {
        compile_minilang(source).map(Self).map_err(value_err)
    }

    fn to_bytes<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &self.0.to_bytes())
    }

    #[getter]
    fn image_id(&self) -> String {
        compute_image_id(&self.0).to_hex()
    }

    #[getter]
    fn entry_pc(&self) -> u32 {
        self.0.entry_pc()
    }

    #[getter]
    fn code(&self) -> Vec<u32> {
        self.0.code().to_vec()
    }

    fn __len__(&self) -> usize {
        self.0.code().len()
    }

    fn __repr__(&self) -> String {
        format!("GuestImage(words={}, image_id={})", self.0.code().len(), self.image_id())
    }
}

/// A provenance receipt.
#[pyclass(name = "Receipt", frozen)]
struct PyReceipt(prover::Receipt);

#[pymethods]
impl PyReceipt {
    #[staticmethod]
    fn from_bytes(data: &[u8]) -> PyResult<Self> {
        prover::Receipt::from_bytes(data).map(Self).map_err(value_err)
    }

    fn to_bytes<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &self.0.to_bytes())
    }

    #[getter]
    fn output<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &self.0.claim.output)
    }

    #[getter]
    fn exit_code(&self) -> u32 {
        self.0.claim.exit_code
    }

    #[getter]
    fn trace_len(&self) -> u64 {
        self.0.claim.trace_len
    }

    #[getter]
    fn trace_root(&self) -> String {
        self.0.claim.trace_root.to_hex()
    }

    #[getter]
    fn image_id(&self) -> String {
        self.0.claim.image_id.to_hex()
    }

    #[getter]
    fn input_digest(&self) -> String {
        self.0.claim.input_digest.to_hex()
    }

    #[getter]
    fn sample_count(&self) -> u32 {
        self.0.sample_count()
    }

    fn __repr__(&self) -> String {
        format!(
            "Receipt(trace_len={}, samples={}, output_len={})",
            self.0.claim.trace_len,
            self.0.sample_count(),
            self.0.claim.output.len()
        )
    }
}

#[pyclass(name = "VerifyReport", frozen)]
struct PyVerifyReport(verifier::VerifyReport);

#[pymethods]
impl PyVerifyReport {
    #[getter]
    fn accepted(&self) -> bool {
        self.0.accepted()
    }

    /// Failure class token, or None when accepted.
    #[getter]
    fn failure_class(&self) -> Option<&'static str> {
        self.0.failure.map(|c| c.token())
    }

    #[getter]
    fn detail(&self) -> String {
        self.0.detail.clone()
    }

    fn __bool__(&self) -> bool {
        self.0.accepted()
    }

    fn __str__(&self) -> String {
        self.0.to_string()
    }

    fn __repr__(&self) -> String {
        format!("VerifyReport({})", self.0)
    }
}

#[pyfunction]
#[pyo3(signature = (image, source, samples = DEFAULT_SAMPLES, max_steps = DEFAULT_MAX_STEPS))]
fn prove(py: Python<'_>, image: &PyGuestImage, source: &[u8], samples: u32, max_steps: u64) -> PyResult<PyReceipt> {
    let opts = ProveOptions { samples, max_steps };
    py.detach(|| prover::prove_with(&image.0, source, opts))
        .map(PyReceipt)
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

#[pyfunction]
fn verify(receipt: &PyReceipt, image_id: &str, source: &[u8], image: &PyGuestImage) -> PyResult<PyVerifyReport> {
    Ok(PyVerifyReport(verifier::verify(&receipt.0, &digest(image_id)?, source, &image.0)))
}

/// Verifies serialized receipt bytes; malformed input is a rejection.
#[pyfunction]
fn verify_bytes(receipt: &[u8], image_id: &str, source: &[u8], image: &PyGuestImage) -> PyResult<PyVerifyReport> {
    Ok(PyVerifyReport(verifier::verify_bytes(receipt, &digest(image_id)?, source, &image.0)))
}

#[pyfunction]
fn verify_full(py: Python<'_>, receipt: &PyReceipt, image_id: &str, source: &[u8], image: &PyGuestImage) -> PyResult<PyVerifyReport> {
    let id = digest(image_id)?;
    Ok(PyVerifyReport(py.detach(|| verifier::verify_full(&receipt.0, &id, source, &image.0))))
}

/// Host reference compiler: returns (StackAsm or error line, exit code).
#[pyfunction]
fn reference_compile<'py>(py: Python<'py>, source: &[u8]) -> (Bound<'py, PyBytes>, u32) {
    let c = exprlang::reference_compile(source);
    (PyBytes::new(py, &c.output), c.exit_code)
}

#[pyfunction]
fn stackvm_run<'py>(py: Python<'py>, asm: &[u8]) -> PyResult<Bound<'py, PyBytes>> {
    exprlang::stackvm_run(asm)
        .map(|out| PyBytes::new(py, &out))
        .map_err(|t| PyRuntimeError::new_err(t.to_string()))
}

#[pyfunction]
fn gen_program(seed: u64, size: usize) -> PyResult<String> {
    if size == 0 {
        return Err(PyValueError::new_err("size must be at least 1"));
    }
    Ok(exprlang::gen_program(seed, size))
}

/// Runs an image without recording: returns (output, exit code, steps).
/// Raises on traps.
#[pyfunction]
#[pyo3(signature = (image, input, max_steps = DEFAULT_MAX_STEPS))]
fn run<'py>(py: Python<'py>, image: &PyGuestImage, input: &[u8], max_steps: u64) -> PyResult<(Bound<'py, PyBytes>, u32, u64)> {
    let res = isa::run(&image.0, input, max_steps).map_err(value_err)?;
    if let Some(trap) = res.trap {
        return Err(PyRuntimeError::new_err(format!("guest trapped: {trap}")));
    }
    Ok((PyBytes::new(py, &res.output), res.exit_code, res.step_count))
}

#[pymodule]
fn zkpc(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGuestImage>()?;
    m.add_class::<PyReceipt>()?;
    m.add_class::<PyVerifyReport>()?;
    m.add_function(wrap_pyfunction!(prove, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add_function(wrap_pyfunction!(verify_bytes, m)?)?;
    m.add_function(wrap_pyfunction!(verify_full, m)?)?;
    m.add_function(wrap_pyfunction!(reference_compile, m)?)?;
    m.add_function(wrap_pyfunction!(stackvm_run, m)?)?;
    m.add_function(wrap_pyfunction!(gen_program, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add("DEFAULT_SAMPLES", DEFAULT_SAMPLES)?;
    Ok(())
}
