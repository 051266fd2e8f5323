//! C ABI over the casework library.
//!
//! Every fallible function returns a `CwStatus`; on failure the message is
//! kept in a thread-local slot readable with `cw_last_error_message`.
//! Handles are opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use casework::data::{load_csv, one_hot_encode, EncodedDataset, HouseholdRecord, Intervention, Schema};
use casework::scoring::VulnerabilityScorer;
use casework::stats::{auc, delong_ci, resample_test};
use casework::synthgen::{generate, GeneratorConfig};
use casework::tree::{fit_tree, DecisionTree, TreeConfig};
use casework::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CwStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    ConfigError = 4,
    DataError = 5,
    InternalError = 6,
    Panic = 7,
}

/// Interventions in report order.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CwIntervention {
    Es = 0,
    Th = 1,
    Rrh = 2,
    Prev = 3,
}

impl From<CwIntervention> for Intervention {
    fn from(k: CwIntervention) -> Self {
        match k {
            CwIntervention::Es => Intervention::Es,
            CwIntervention::Th => Intervention::Th,
            CwIntervention::Rrh => Intervention::Rrh,
            CwIntervention::Prev => Intervention::Prev,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct CwAucEstimate {
    pub auc: f64,
    pub variance: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct CwResampleResult {
    pub observed_mean: f64,
    pub null_mean: f64,
    pub null_sd: f64,
    pub percentile: f64,
    pub p_two_sided: f64,
}

/// Household records with their one-hot encoding.
pub struct CwDataset {
    schema: Schema,
    records: Vec<HouseholdRecord>,
    encoded: EncodedDataset,
}

pub struct CwTree {
    tree: DecisionTree,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(e: &Error) -> CwStatus {
    match e {
        Error::InvalidConfig(_) | Error::InvalidSchema(_) => CwStatus::ConfigError,
        Error::InvalidArgument(_)
        | Error::LengthMismatch { .. }
        | Error::EmptyGroup
        | Error::GroupTooLarge { .. }
        | Error::IndexOutOfRange { .. }
        | Error::WidthMismatch { .. } => CwStatus::InvalidArgument,
        Error::Io { .. }
        | Error::UnknownColumn { .. }
        | Error::MissingColumn { .. }
        | Error::UnknownCategoryLevel { .. }
        | Error::MalformedRow { .. }
        | Error::ExcludedIntervention { .. }
        | Error::EmptyInput
        | Error::Csv(_)
        | Error::Json(_)
        | Error::SchemaMismatch(_)
        | Error::SingleClass
        | Error::InsufficientClassCount { .. }
        | Error::ConstantInput
        | Error::MissingCounterfactuals(_) => CwStatus::DataError,
        _ => CwStatus::InternalError,
    }
}

struct Fail(CwStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(CwStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, recording failures and trapping panics.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> CwStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CwStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside casework");
            CwStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(CwStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

fn dataset(records: Vec<HouseholdRecord>, schema: Schema) -> Result<Box<CwDataset>, Fail> {
    let encoded = one_hot_encode(&records, &schema)?;
    Ok(Box::new(CwDataset {
        schema,
        records,
        encoded,
    }))
}

/// Last error message on this thread, or null. Valid until the next call
/// into the library from the same thread.
#[no_mangle]
pub extern "C" fn cw_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Loads a household CSV with the built-in schema.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cw_dataset_load_csv(path: *const c_char, out: *mut *mut CwDataset) -> CwStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let path = str_arg(path, "path")?;
        let schema = Schema::household();
        let records = load_csv(path, &schema)?;
        *out = Box::into_raw(dataset(records, schema)?);
        Ok(())
    })
}

/// Generates a synthetic dataset from a JSON generator config.
///
/// # Safety
/// `config_json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cw_dataset_generate(config_json: *const c_char, out: *mut *mut CwDataset) -> CwStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let cfg = GeneratorConfig::from_json(str_arg(config_json, "config_json")?)?;
        let schema = Schema::household();
        let (records, _) = generate(&cfg, &schema)?;
        *out = Box::into_raw(dataset(records, schema)?);
        Ok(())
    })
}

/// # Safety
/// `ds` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cw_dataset_n_rows(ds: *const CwDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.records.len())
}

/// Number of encoded feature columns.
///
/// # Safety
/// `ds` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cw_dataset_n_cols(ds: *const CwDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.encoded.n_cols())
}

/// Writes 0/1 one-vs-all labels for `target` into `labels[0..len]`;
/// `len` must equal the row count.
///
/// # Safety
/// `ds` must be a live handle and `labels` must hold `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn cw_dataset_labels(
    ds: *const CwDataset,
    target: CwIntervention,
    labels: *mut u8,
    len: usize,
) -> CwStatus {
    guard(|| {
        let d = ref_arg(ds, "dataset")?;
        let out = out_slice(labels, len, d.records.len())?;
        let k = Intervention::from(target);
        for (o, r) in out.iter_mut().zip(&d.records) {
            *o = u8::from(r.actual == k);
        }
        Ok(())
    })
}

/// Vulnerability score of every record.
///
/// # Safety
/// `ds` must be a live handle and `scores` must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn cw_dataset_vulnerability(ds: *const CwDataset, scores: *mut u32, len: usize) -> CwStatus {
    guard(|| {
        let d = ref_arg(ds, "dataset")?;
        let out = out_slice(scores, len, d.records.len())?;
        let scorer = VulnerabilityScorer::standard(&d.schema)?;
        for (o, b) in out.iter_mut().zip(scorer.score_all(&d.records)?) {
            *o = b.total;
        }
        Ok(())
    })
}

/// # Safety
/// `ds` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cw_dataset_free(ds: *mut CwDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

unsafe fn out_slice<'a, T>(p: *mut T, len: usize, want: usize) -> Result<&'a mut [T], Fail> {
    if len != want {
        return Err(Fail(
            CwStatus::InvalidArgument,
            format!("buffer holds {len} values, need {want}"),
        ));
    }
    if want == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null("output buffer"));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

/// Fits a short explainable tree for `target` on the whole dataset.
/// `max_depth` of 0 keeps the default cap of four.
///
/// # Safety
/// `ds` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cw_tree_fit_short(
    ds: *const CwDataset,
    target: CwIntervention,
    max_depth: usize,
    seed: u64,
    out: *mut *mut CwTree,
) -> CwStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let d = ref_arg(ds, "dataset")?;
        let mut cfg = TreeConfig::short().with_seed(seed);
        if max_depth > 0 {
            cfg.max_depth = max_depth;
        }
        let k = Intervention::from(target);
        let y: Vec<u8> = d.records.iter().map(|r| u8::from(r.actual == k)).collect();
        let tree = fit_tree(&d.encoded, &y, &cfg)?;
        *out = Box::into_raw(Box::new(CwTree { tree }));
        Ok(())
    })
}

/// # Safety
/// `tree` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cw_tree_depth(tree: *const CwTree) -> usize {
    tree.as_ref().map_or(0, |t| t.tree.depth())
}

/// Positive-class probability for every row of `ds`.
///
/// # Safety
/// Handles must be live; `scores` must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn cw_tree_predict(
    tree: *const CwTree,
    ds: *const CwDataset,
    scores: *mut f64,
    len: usize,
) -> CwStatus {
    guard(|| {
        let t = ref_arg(tree, "tree")?;
        let d = ref_arg(ds, "dataset")?;
        let out = out_slice(scores, len, d.records.len())?;
        out.copy_from_slice(&t.tree.predict_dataset(&d.encoded)?);
        Ok(())
    })
}

/// Tree as JSON; release with `cw_string_free`.
///
/// # Safety
/// `tree` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cw_tree_to_json(tree: *const CwTree, out: *mut *mut c_char) -> CwStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let t = ref_arg(tree, "tree")?;
        let s = CString::new(t.tree.to_json()).map_err(|e| Fail(CwStatus::InternalError, e.to_string()))?;
        *out = s.into_raw();
        Ok(())
    })
}

/// # Safety
/// `tree` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cw_tree_free(tree: *mut CwTree) {
    if !tree.is_null() {
        drop(Box::from_raw(tree));
    }
}

/// # Safety
/// `s` must be null or a string returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cw_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Area under the ROC curve, ties counting one half.
///
/// # Safety
/// `scores` and `labels` must hold `n` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cw_auc(scores: *const f64, labels: *const u8, n: usize, out: *mut f64) -> CwStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = auc(slice_arg(scores, n, "scores")?, slice_arg(labels, n, "labels")?)?;
        Ok(())
    })
}

/// AUC with a DeLong confidence interval at `level`.
///
/// # Safety
/// `scores` and `labels` must hold `n` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cw_delong_ci(
    scores: *const f64,
    labels: *const u8,
    n: usize,
    level: f64,
    out: *mut CwAucEstimate,
) -> CwStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let e = delong_ci(slice_arg(scores, n, "scores")?, slice_arg(labels, n, "labels")?, level)?;
        *out = CwAucEstimate {
            auc: e.auc,
            variance: e.variance,
            ci_low: e.ci_low,
            ci_high: e.ci_high,
        };
        Ok(())
    })
}

/// Resampling test of the mean of `population[observed]` against
/// `n_resamples` random same-size groups.
///
/// # Safety
/// `population` must hold `n` values, `observed` `k` indices; `out` must be
/// writable.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn cw_resample_test(
    population: *const f64,
    n: usize,
    observed: *const usize,
    k: usize,
    n_resamples: usize,
    seed: u64,
    exclude_observed: bool,
    out: *mut CwResampleResult,
) -> CwStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let t = resample_test(
            slice_arg(population, n, "population")?,
            slice_arg(observed, k, "observed")?,
            n_resamples,
            seed,
            exclude_observed,
        )?;
        *out = CwResampleResult {
            observed_mean: t.observed_mean,
            null_mean: t.null_mean,
            null_sd: t.null_sd,
            percentile: t.percentile,
            p_two_sided: t.p_two_sided,
        };
        Ok(())
    })
}
