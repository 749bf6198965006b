//! C ABI over the `mmfs` library.
//!
//! Objects cross the boundary as opaque handles created by `mmfs_*_new`-style
//! functions and released with the matching `*_free`. Every fallible call
//! returns an [`MmfsStatus`]; on failure the message is available from
//! [`mmfs_last_error`] on the same thread. Panics never unwind into C.
//!
//! Masks are passed as byte arrays with one entry per feature (nonzero
//! means selected), in global column order: view 1 first, then view 2, and
//! so on.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use mmfs::data::{bayes_error_mc, load_multiview_csv, MultiViewDataset, SyntheticProblem, SyntheticSpec, Task};
use mmfs::eval::{cv_error, evaluate_on_test, make_fold_plan, EvalOptions};
use mmfs::metrics::{auc_binary, balanced_accuracy};
use mmfs::search::{run_mmfs_ga, NicheConfig, Preset, RunReport};
use mmfs::variation::BinaryChromosome;
use mmfs::{Error, ErrorKind};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MmfsStatus {
    Ok = 0,
    /// A required pointer was null.
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Data = 4,
    Runtime = 5,
    /// A Rust panic was caught; the handle arguments may be unusable.
    Panic = 6,
}

/// Benchmark variant for [`mmfs_dataset_synthetic`] and [`mmfs_bayes_error`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MmfsTask {
    Binary = 0,
    FourClass = 1,
}

/// Parameter preset for [`mmfs_run`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MmfsPreset {
    Paper = 0,
    Desk = 1,
}

/// Test-set metrics. Sensitivity and specificity are NaN for multiclass data.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct MmfsMetrics {
    pub balanced_accuracy: f64,
    pub auc: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub n_selected: usize,
}

/// Opaque multi-view dataset.
pub struct MmfsDataset {
    inner: MultiViewDataset,
}

/// Opaque outcome of a search run.
pub struct MmfsRunResult {
    inner: RunReport,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> MmfsStatus {
    match (e, e.kind()) {
        (Error::InvalidArgument(_), _) => MmfsStatus::InvalidArgument,
        (_, ErrorKind::Config) => MmfsStatus::Config,
        (_, ErrorKind::Data) => MmfsStatus::Data,
        (_, ErrorKind::Runtime) => MmfsStatus::Runtime,
    }
}

struct Fail(MmfsStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(MmfsStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> MmfsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            MmfsStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(&format!("panic: {msg}"));
            MmfsStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out_ref<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn mask_from(ptr: *const u8, len: usize, ds: &MultiViewDataset) -> Result<BinaryChromosome, Fail> {
    if ptr.is_null() {
        return Err(null("mask"));
    }
    if len != ds.n_features() {
        return Err(Fail(
            MmfsStatus::InvalidArgument,
            format!("mask has {len} entries, dataset has {} features", ds.n_features()),
        ));
    }
    let bytes = std::slice::from_raw_parts(ptr, len);
    Ok(BinaryChromosome::from_indices(len, (0..len).filter(|&i| bytes[i] != 0)))
}

fn task_of(t: MmfsTask) -> Task {
    match t {
        MmfsTask::Binary => Task::Binary,
        MmfsTask::FourClass => Task::FourClass,
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mmfs_version() -> *const c_char {
    static VERSION: &[u8] = concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes();
    VERSION.as_ptr().cast()
}

/// Message of the last failed call on this thread, empty after a success.
/// The pointer stays valid until the next library call on this thread.
#[no_mangle]
pub extern "C" fn mmfs_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Generates the training and test set of one synthetic benchmark replicate.
/// `view_dim` is the number of columns per view (500 in the benchmark) and
/// `samples_per_class` the size of each class (100).
///
/// # Safety
/// `train_out` and `test_out` must be valid pointers to writable handles.
#[no_mangle]
pub unsafe extern "C" fn mmfs_dataset_synthetic(
    task: MmfsTask,
    view_dim: usize,
    samples_per_class: usize,
    seed: u64,
    train_out: *mut *mut MmfsDataset,
    test_out: *mut *mut MmfsDataset,
) -> MmfsStatus {
    guard(|| {
        let train_out = out_ref(train_out, "train_out")?;
        let test_out = out_ref(test_out, "test_out")?;
        let spec = SyntheticSpec {
            view_dim,
            samples_per_class,
            ..SyntheticSpec::new(task_of(task))
        };
        let (train, test) = SyntheticProblem::new(&spec, seed)?.train_test(seed)?;
        *train_out = Box::into_raw(Box::new(MmfsDataset { inner: train }));
        *test_out = Box::into_raw(Box::new(MmfsDataset { inner: test }));
        Ok(())
    })
}

/// Loads a dataset from a TOML manifest of per-view CSV files.
///
/// # Safety
/// `manifest_path` must be a NUL-terminated string; `out` a writable handle.
#[no_mangle]
pub unsafe extern "C" fn mmfs_dataset_load(manifest_path: *const c_char, out: *mut *mut MmfsDataset) -> MmfsStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        if manifest_path.is_null() {
            return Err(null("manifest_path"));
        }
        let path = CStr::from_ptr(manifest_path)
            .to_str()
            .map_err(|_| Fail(MmfsStatus::InvalidArgument, "manifest_path is not UTF-8".into()))?;
        let ds = load_multiview_csv(Path::new(path))?;
        *out = Box::into_raw(Box::new(MmfsDataset { inner: ds }));
        Ok(())
    })
}

/// Releases a dataset. Null is ignored.
///
/// # Safety
/// `ds` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn mmfs_dataset_free(ds: *mut MmfsDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Writes sample, view, feature and class counts. Any output may be null.
///
/// # Safety
/// `ds` must be a live handle; non-null outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn mmfs_dataset_shape(
    ds: *const MmfsDataset,
    n_samples: *mut usize,
    n_views: *mut usize,
    n_features: *mut usize,
    n_classes: *mut usize,
) -> MmfsStatus {
    guard(|| {
        let ds = &deref(ds, "ds")?.inner;
        for (p, v) in [
            (n_samples, ds.n_samples()),
            (n_views, ds.n_views()),
            (n_features, ds.n_features()),
            (n_classes, ds.n_classes),
        ] {
            if let Some(p) = p.as_mut() {
                *p = v;
            }
        }
        Ok(())
    })
}

/// Number of features of view `view` (0-based).
///
/// # Safety
/// `ds` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mmfs_dataset_view_size(ds: *const MmfsDataset, view: usize, out: *mut usize) -> MmfsStatus {
    guard(|| {
        let ds = &deref(ds, "ds")?.inner;
        let out = out_ref(out, "out")?;
        *out = ds
            .views
            .get(view)
            .ok_or_else(|| Fail(MmfsStatus::InvalidArgument, format!("view {view} out of range")))?
            .n_features();
        Ok(())
    })
}

/// Ground-truth informative features, when the dataset carries them.
/// Fails with `Data` otherwise.
///
/// # Safety
/// `mask` must point to `len` writable bytes, `len` = feature count.
#[no_mangle]
pub unsafe extern "C" fn mmfs_dataset_informative_mask(ds: *const MmfsDataset, mask: *mut u8, len: usize) -> MmfsStatus {
    guard(|| {
        let ds = &deref(ds, "ds")?.inner;
        let m = ds
            .informative_mask()
            .ok_or_else(|| Fail(MmfsStatus::Data, "dataset has no ground-truth mask".into()))?;
        write_mask(&m, mask, len)
    })
}

unsafe fn write_mask(m: &BinaryChromosome, mask: *mut u8, len: usize) -> Result<(), Fail> {
    if mask.is_null() {
        return Err(null("mask"));
    }
    if len != m.len() {
        return Err(Fail(
            MmfsStatus::InvalidArgument,
            format!("buffer has {len} entries, mask has {}", m.len()),
        ));
    }
    let out = std::slice::from_raw_parts_mut(mask, len);
    for (i, b) in out.iter_mut().enumerate() {
        *b = u8::from(m.get(i));
    }
    Ok(())
}

/// Runs the full search. `threads` = 0 uses every core.
///
/// # Safety
/// `ds` must be a live handle and `out` a writable handle pointer.
#[no_mangle]
pub unsafe extern "C" fn mmfs_run(
    ds: *const MmfsDataset,
    preset: MmfsPreset,
    seed: u64,
    threads: usize,
    out: *mut *mut MmfsRunResult,
) -> MmfsStatus {
    guard(|| {
        let ds = &deref(ds, "ds")?.inner;
        let out = out_ref(out, "out")?;
        let mut cfg = NicheConfig::preset(match preset {
            MmfsPreset::Paper => Preset::Paper,
            MmfsPreset::Desk => Preset::Desk,
        });
        cfg.seed = seed;
        cfg.threads = (threads > 0).then_some(threads);
        let report = run_mmfs_ga(ds, &cfg)?;
        *out = Box::into_raw(Box::new(MmfsRunResult { inner: report }));
        Ok(())
    })
}

/// Releases a run result. Null is ignored.
///
/// # Safety
/// `r` must come from [`mmfs_run`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn mmfs_run_free(r: *mut MmfsRunResult) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

/// Copies the selected global mask into `mask` (`len` = feature count).
///
/// # Safety
/// `r` must be a live handle; `mask` must hold `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn mmfs_run_mask(r: *const MmfsRunResult, mask: *mut u8, len: usize) -> MmfsStatus {
    guard(|| write_mask(&deref(r, "result")?.inner.best_mask, mask, len))
}

/// Cross-validated error and feature count of the selected mask, and the
/// niche it came from. Any output may be null.
///
/// # Safety
/// `r` must be a live handle; non-null outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn mmfs_run_fitness(
    r: *const MmfsRunResult,
    cv_error: *mut f64,
    n_features: *mut usize,
    niche: *mut usize,
) -> MmfsStatus {
    guard(|| {
        let r = &deref(r, "result")?.inner;
        if let Some(p) = cv_error.as_mut() {
            *p = r.best_fitness.error;
        }
        if let Some(p) = n_features.as_mut() {
            *p = r.best_fitness.n_features;
        }
        if let Some(p) = niche.as_mut() {
            *p = r.best_niche;
        }
        Ok(())
    })
}

/// 10-fold stratified cross-validated balanced error of a mask, with the
/// fold plan drawn from `seed`.
///
/// # Safety
/// `ds` must be a live handle, `mask` must hold `len` bytes, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mmfs_cv_error(
    ds: *const MmfsDataset,
    mask: *const u8,
    len: usize,
    seed: u64,
    out: *mut f64,
) -> MmfsStatus {
    guard(|| {
        let ds = &deref(ds, "ds")?.inner;
        let out = out_ref(out, "out")?;
        let m = mask_from(mask, len, ds)?;
        let opts = EvalOptions::default();
        let plan = make_fold_plan(&ds.labels, opts.n_folds, seed)?;
        *out = cv_error(ds, &m, &plan, &opts)?;
        Ok(())
    })
}

/// Trains on `train` restricted to the mask and scores on `test`.
///
/// # Safety
/// Both handles must be live, `mask` must hold `len` bytes, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mmfs_evaluate(
    train: *const MmfsDataset,
    test: *const MmfsDataset,
    mask: *const u8,
    len: usize,
    out: *mut MmfsMetrics,
) -> MmfsStatus {
    guard(|| {
        let train = &deref(train, "train")?.inner;
        let test = &deref(test, "test")?.inner;
        let out = out_ref(out, "out")?;
        let m = mask_from(mask, len, train)?;
        let (report, _) = evaluate_on_test(train, test, &m, &EvalOptions::default())?;
        *out = MmfsMetrics {
            balanced_accuracy: report.balanced_accuracy,
            auc: report.auc,
            sensitivity: report.sensitivity.unwrap_or(f64::NAN),
            specificity: report.specificity.unwrap_or(f64::NAN),
            n_selected: m.count_ones(),
        };
        Ok(())
    })
}

/// Monte Carlo Bayes error of the benchmark using the informative features
/// of `views` (0-based view indices).
///
/// # Safety
/// `views` must hold `n_views` entries; outputs may be null.
#[no_mangle]
pub unsafe extern "C" fn mmfs_bayes_error(
    task: MmfsTask,
    views: *const usize,
    n_views: usize,
    n_samples: usize,
    seed: u64,
    value: *mut f64,
    std_error: *mut f64,
) -> MmfsStatus {
    guard(|| {
        if views.is_null() && n_views > 0 {
            return Err(null("views"));
        }
        let v = if n_views == 0 { &[][..] } else { std::slice::from_raw_parts(views, n_views) };
        let est = bayes_error_mc(&SyntheticSpec::new(task_of(task)), v, n_samples, seed)?;
        if let Some(p) = value.as_mut() {
            *p = est.value;
        }
        if let Some(p) = std_error.as_mut() {
            *p = est.std_error;
        }
        Ok(())
    })
}

/// Mean per-class recall of integer labels.
///
/// # Safety
/// Both label arrays must hold `n` entries; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mmfs_balanced_accuracy(
    y_true: *const usize,
    y_pred: *const usize,
    n: usize,
    out: *mut f64,
) -> MmfsStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        if y_true.is_null() || y_pred.is_null() {
            return Err(null("labels"));
        }
        let (t, p) = (std::slice::from_raw_parts(y_true, n), std::slice::from_raw_parts(y_pred, n));
        *out = balanced_accuracy(t, p)?;
        Ok(())
    })
}

/// Rank-statistic AUC; `labels` nonzero marks positives.
///
/// # Safety
/// `labels` and `scores` must hold `n` entries; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mmfs_auc(labels: *const u8, scores: *const f64, n: usize, out: *mut f64) -> MmfsStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        if labels.is_null() || scores.is_null() {
            return Err(null("labels or scores"));
        }
        let y: Vec<bool> = std::slice::from_raw_parts(labels, n).iter().map(|&b| b != 0).collect();
        *out = auc_binary(&y, std::slice::from_raw_parts(scores, n))?;
        Ok(())
    })
}
