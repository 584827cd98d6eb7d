//! C ABI over `anchorlvm`: load or fit a model, score evidence, build the
//! internal-structure report.
//!
//! Every fallible call returns an [`AlvmStatus`]; on failure a message is
//! available from [`alvm_last_error`] on the same thread. Strings handed out
//! by the library are released with [`alvm_string_free`], models with
//! [`alvm_model_free`].

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use anchorlvm::assignment::Assignment;
use anchorlvm::cli::{fit_from_config, CliError, FitConfig};
use anchorlvm::identification::FittedModel;
use anchorlvm::inference::posterior_value;
use anchorlvm::report::{internal_structure_report, parse_probes};

/// Status codes. 2-5 match the command-line exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlvmStatus {
    Ok = 0,
    Config = 2,
    Data = 3,
    Identification = 4,
    Inference = 5,
    NullArgument = 10,
    InvalidUtf8 = 11,
    Panic = 12,
}

/// Opaque fitted model.
pub struct AlvmModel {
    inner: FittedModel,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AlvmPosterior {
    pub raw: f64,
    pub clamped: f64,
    pub evidence_probability: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: impl Into<String>) {
    let text = CString::new(message.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = text);
}

struct Failure(AlvmStatus, String);

impl From<CliError> for Failure {
    fn from(e: CliError) -> Self {
        let status = match e {
            CliError::Config(_) => AlvmStatus::Config,
            CliError::Identification(_) => AlvmStatus::Identification,
            CliError::Inference(_) => AlvmStatus::Inference,
            CliError::Data(_) | CliError::Certificate(_) => AlvmStatus::Data,
        };
        Failure(status, e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> AlvmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            AlvmStatus::Ok
        }
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic");
            AlvmStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(AlvmStatus::NullArgument, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(AlvmStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn model_ref<'a>(m: *const AlvmModel) -> Result<&'a FittedModel, Failure> {
    m.as_ref()
        .map(|m| &m.inner)
        .ok_or_else(|| Failure(AlvmStatus::NullArgument, "model is null".into()))
}

unsafe fn give_string(s: String, out: *mut *mut c_char) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure(AlvmStatus::NullArgument, "output pointer is null".into()));
    }
    *out = CString::new(s).expect("json has no interior nul").into_raw();
    Ok(())
}

unsafe fn give_model(m: FittedModel, out: *mut *mut AlvmModel) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure(AlvmStatus::NullArgument, "output pointer is null".into()));
    }
    *out = Box::into_raw(Box::new(AlvmModel { inner: m }));
    Ok(())
}

/// Message for the last failed call on this thread; empty after a success.
/// Valid until the next call into the library on this thread.
#[no_mangle]
pub extern "C" fn alvm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Parses a model document.
///
/// # Safety
/// `json` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn alvm_model_from_json(json: *const c_char, out: *mut *mut AlvmModel) -> AlvmStatus {
    guard(|| {
        let json = text(json, "json")?;
        let m = FittedModel::parse(json).map_err(|e| Failure(AlvmStatus::Data, e.to_string()))?;
        give_model(m, out)
    })
}

/// Reads a model document from `path`.
///
/// # Safety
/// `path` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn alvm_model_load(path: *const c_char, out: *mut *mut AlvmModel) -> AlvmStatus {
    guard(|| {
        let path = text(path, "path")?;
        let m = anchorlvm::cli::load_model(Path::new(path))?;
        give_model(m, out)
    })
}

/// Runs the fit pipeline described by a fit configuration file. Nothing is
/// written to disk.
///
/// # Safety
/// `config_path` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn alvm_fit(config_path: *const c_char, out: *mut *mut AlvmModel) -> AlvmStatus {
    guard(|| {
        let path = text(config_path, "config path")?;
        let config = FitConfig::load(Path::new(path))?.resolve()?;
        give_model(fit_from_config(&config)?, out)
    })
}

/// # Safety
/// `model` must come from this library and not be used afterwards. Null is
/// ignored.
#[no_mangle]
pub unsafe extern "C" fn alvm_model_free(model: *mut AlvmModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// `s` must come from this library. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn alvm_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Nodes in declaration order, including the latent node.
///
/// # Safety
/// `model` must be a live model or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn alvm_model_node_count(model: *const AlvmModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.spec().len())
}

/// Name of node `index`; release with [`alvm_string_free`].
///
/// # Safety
/// `model` must be a live model; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn alvm_model_node_name(model: *const AlvmModel, index: usize, out: *mut *mut c_char) -> AlvmStatus {
    guard(|| {
        let spec = model_ref(model)?.spec();
        let name = spec
            .names()
            .get(index)
            .ok_or_else(|| Failure(AlvmStatus::Data, format!("node index {index} out of range")))?;
        give_string(name.clone(), out)
    })
}

/// Serializes the model document.
///
/// # Safety
/// `model` must be a live model; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn alvm_model_to_json(model: *const AlvmModel, out: *mut *mut c_char) -> AlvmStatus {
    guard(|| give_string(model_ref(model)?.to_json(), out))
}

/// `P(V=1 | evidence)` with evidence as a JSON object `{"name": 0|1, ...}`.
///
/// # Safety
/// `model` must be a live model, `evidence_json` a nul-terminated string and
/// `out` writable.
#[no_mangle]
pub unsafe extern "C" fn alvm_posterior(
    model: *const AlvmModel,
    evidence_json: *const c_char,
    out: *mut AlvmPosterior,
) -> AlvmStatus {
    guard(|| {
        let m = model_ref(model)?;
        let json = text(evidence_json, "evidence")?;
        let named: BTreeMap<String, u8> =
            serde_json::from_str(json).map_err(|e| Failure(AlvmStatus::Data, format!("evidence: {e}")))?;
        let mut evidence = Assignment::empty();
        for (name, value) in named {
            let node = m
                .spec()
                .id(&name)
                .ok_or_else(|| Failure(AlvmStatus::Data, format!("unknown behavior {name:?}")))?;
            if value > 1 {
                return Err(Failure(AlvmStatus::Data, format!("non-binary value {name} = {value}")));
            }
            evidence.set(node, value == 1);
        }
        write_posterior(m, &evidence, out)
    })
}

/// As [`alvm_posterior`] with evidence given as parallel arrays of node
/// indices and 0/1 values.
///
/// # Safety
/// `nodes` and `values` must each hold `len` elements (or be null when
/// `len` is 0); `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn alvm_posterior_indexed(
    model: *const AlvmModel,
    nodes: *const usize,
    values: *const u8,
    len: usize,
    out: *mut AlvmPosterior,
) -> AlvmStatus {
    guard(|| {
        let m = model_ref(model)?;
        if len > 0 && (nodes.is_null() || values.is_null()) {
            return Err(Failure(AlvmStatus::NullArgument, "evidence arrays are null".into()));
        }
        let ids: Vec<_> = m.spec().node_ids().collect();
        let mut evidence = Assignment::empty();
        for i in 0..len {
            let (index, value) = (*nodes.add(i), *values.add(i));
            let node = *ids
                .get(index)
                .ok_or_else(|| Failure(AlvmStatus::Data, format!("node index {index} out of range")))?;
            evidence.set(node, value != 0);
        }
        write_posterior(m, &evidence, out)
    })
}

unsafe fn write_posterior(m: &FittedModel, evidence: &Assignment, out: *mut AlvmPosterior) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure(AlvmStatus::NullArgument, "output pointer is null".into()));
    }
    let r = posterior_value(m, evidence).map_err(|e| Failure(AlvmStatus::Inference, e.to_string()))?;
    *out = AlvmPosterior {
        raw: r.raw,
        clamped: r.clamped,
        evidence_probability: r.evidence_probability,
    };
    Ok(())
}

/// Internal-structure report as JSON. `probes_json` is a probes document
/// `{"probes": [...]}` or null.
///
/// # Safety
/// `model` must be a live model, `probes_json` null or a nul-terminated
/// string, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn alvm_report_json(
    model: *const AlvmModel,
    probes_json: *const c_char,
    out: *mut *mut c_char,
) -> AlvmStatus {
    guard(|| {
        let m = model_ref(model)?;
        let probes = if probes_json.is_null() {
            Vec::new()
        } else {
            parse_probes(text(probes_json, "probes")?, m.spec()).map_err(|e| Failure(AlvmStatus::Config, e.to_string()))?
        };
        give_string(internal_structure_report(m, &probes).to_json(), out)
    })
}
