use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use mmfs_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(mmfs_last_error()) }.to_string_lossy().into_owned()
}

fn small_pair(seed: u64) -> (*mut MmfsDataset, *mut MmfsDataset) {
    let (mut tr, mut te) = (ptr::null_mut(), ptr::null_mut());
    let s = unsafe { mmfs_dataset_synthetic(MmfsTask::Binary, 20, 30, seed, &mut tr, &mut te) };
    assert_eq!(s, MmfsStatus::Ok, "{}", last_error());
    (tr, te)
}

#[test]
fn version_matches_crate() {
    let v = unsafe { CStr::from_ptr(mmfs_version()) }.to_str().unwrap();
    assert_eq!(v, mmfs::VERSION);
}

#[test]
fn dataset_shape_and_truth() {
    let (tr, te) = small_pair(1);
    let (mut n, mut v, mut p, mut c) = (0, 0, 0, 0);
    unsafe {
        assert_eq!(mmfs_dataset_shape(tr, &mut n, &mut v, &mut p, &mut c), MmfsStatus::Ok);
        assert_eq!((n, v, p, c), (60, 5, 100, 2));
        let mut size = 0;
        assert_eq!(mmfs_dataset_view_size(tr, 4, &mut size), MmfsStatus::Ok);
        assert_eq!(size, 20);
        assert_eq!(mmfs_dataset_view_size(tr, 5, &mut size), MmfsStatus::InvalidArgument);
        assert!(last_error().contains("view 5"));

        let mut mask = vec![0u8; p];
        assert_eq!(mmfs_dataset_informative_mask(tr, mask.as_mut_ptr(), p), MmfsStatus::Ok);
        assert_eq!(mask.iter().filter(|&&b| b != 0).count(), 13);
        assert_eq!(
            mmfs_dataset_informative_mask(tr, mask.as_mut_ptr(), p - 1),
            MmfsStatus::InvalidArgument
        );

        let mut cv = f64::NAN;
        assert_eq!(mmfs_cv_error(tr, mask.as_ptr(), p, 0, &mut cv), MmfsStatus::Ok);
        assert!((0.0..0.3).contains(&cv), "{cv}");

        let mut m = MmfsMetrics::default();
        assert_eq!(mmfs_evaluate(tr, te, mask.as_ptr(), p, &mut m), MmfsStatus::Ok);
        assert!(m.balanced_accuracy > 0.7 && m.auc > 0.7, "{m:?}");
        assert_eq!(m.n_selected, 13);
        assert!(m.sensitivity.is_finite() && m.specificity.is_finite());

        let empty = vec![0u8; p];
        assert_ne!(mmfs_evaluate(tr, te, empty.as_ptr(), p, &mut m), MmfsStatus::Ok);
        assert!(!last_error().is_empty());

        mmfs_dataset_free(tr);
        mmfs_dataset_free(te);
        mmfs_dataset_free(ptr::null_mut());
    }
}

#[test]
fn null_pointers_are_reported() {
    unsafe {
        let mut out = 0.0;
        assert_eq!(mmfs_cv_error(ptr::null(), ptr::null(), 0, 0, &mut out), MmfsStatus::NullPointer);
        assert!(last_error().contains("null"));
        let mut ds = ptr::null_mut();
        assert_eq!(mmfs_dataset_load(ptr::null(), &mut ds), MmfsStatus::NullPointer);
        assert_eq!(mmfs_run_mask(ptr::null(), ptr::null_mut(), 0), MmfsStatus::NullPointer);
    }
}

#[test]
fn missing_manifest_is_a_data_error() {
    let path = CString::new("/nonexistent/train.toml").unwrap();
    let mut ds = ptr::null_mut();
    let s = unsafe { mmfs_dataset_load(path.as_ptr(), &mut ds) };
    assert_ne!(s, MmfsStatus::Ok);
    assert!(ds.is_null());
    assert!(last_error().contains("nonexistent"), "{}", last_error());
}

#[test]
fn metric_helpers() {
    let y = [0usize, 0, 1, 1, 1, 1];
    let p = [0usize, 1, 1, 1, 1, 0];
    let mut out = 0.0;
    unsafe {
        assert_eq!(mmfs_balanced_accuracy(y.as_ptr(), p.as_ptr(), 6, &mut out), MmfsStatus::Ok);
        assert!((out - 0.625).abs() < 1e-12);
        let labels = [0u8, 0, 1, 1];
        let scores = [0.1, 0.4, 0.35, 0.8];
        assert_eq!(mmfs_auc(labels.as_ptr(), scores.as_ptr(), 4, &mut out), MmfsStatus::Ok);
        assert!((out - 0.75).abs() < 1e-12);
        let (mut v, mut se) = (0.0, 0.0);
        let views = [0usize];
        assert_eq!(
            mmfs_bayes_error(MmfsTask::Binary, views.as_ptr(), 1, 20_000, 3, &mut v, &mut se),
            MmfsStatus::Ok
        );
        assert!(v > 0.0 && v < 0.2 && se > 0.0);
    }
}

#[test]
fn run_returns_consistent_mask() {
    let (tr, te) = small_pair(2);
    unsafe {
        let mut r = ptr::null_mut();
        assert_eq!(mmfs_run(tr, MmfsPreset::Desk, 7, 1, &mut r), MmfsStatus::Ok, "{}", last_error());
        let mut mask = vec![0u8; 100];
        assert_eq!(mmfs_run_mask(r, mask.as_mut_ptr(), 100), MmfsStatus::Ok);
        let (mut err, mut k, mut niche) = (0.0, 0, 99);
        assert_eq!(mmfs_run_fitness(r, &mut err, &mut k, &mut niche), MmfsStatus::Ok);
        assert_eq!(k, mask.iter().filter(|&&b| b != 0).count());
        assert!(k >= 1 && niche < 2);
        // The reported fitness is the cross-validated error under the run's fold plan.
        let mut again = 0.0;
        assert_eq!(mmfs_cv_error(tr, mask.as_ptr(), 100, 7, &mut again), MmfsStatus::Ok);
        assert!((again - err).abs() < 1e-9, "{again} vs {err}");
        mmfs_run_free(r);
        mmfs_dataset_free(tr);
        mmfs_dataset_free(te);
    }
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/mmfs.h")).unwrap();
    let src = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("src/lib.rs")).unwrap();
    let exports: Vec<&str> = src
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(exports.len() >= 15);
    for f in exports {
        assert!(header.contains(&format!("{f}(")), "{f} missing from header");
    }
    assert!(header.contains("typedef struct MmfsDataset MmfsDataset;"));
}

fn staticlib() -> Option<PathBuf> {
    // The archive built with this test sits next to it in deps/.
    let exe = std::env::current_exe().ok()?;
    let deps = exe.parent()?;
    let found = [deps, deps.parent()?]
        .into_iter()
        .map(|d| d.join("libmmfs_ffi.a"))
        .find(|p| p.exists());
    found
}

#[test]
fn c_program_links_against_header() {
    let Some(lib) = staticlib() else {
        eprintln!("skipped: libmmfs_ffi.a not built");
        return;
    };
    if Command::new("cc").arg("--version").output().is_err() {
        eprintln!("skipped: no C compiler");
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("smoke.c");
    std::fs::write(
        &src,
        r#"
#include <stdio.h>
#include <string.h>
#include "mmfs.h"
int main(void) {
    MmfsDataset *tr = NULL, *te = NULL;
    if (mmfs_dataset_synthetic(MMFS_TASK_BINARY, 10, 20, 1, &tr, &te) != MMFS_STATUS_OK) return 1;
    size_t p = 0;
    mmfs_dataset_shape(tr, NULL, NULL, &p, NULL);
    unsigned char mask[50];
    if (p != 50) return 2;
    if (mmfs_dataset_informative_mask(tr, mask, p) != MMFS_STATUS_OK) return 3;
    MmfsMetrics m;
    if (mmfs_evaluate(tr, te, mask, p, &m) != MMFS_STATUS_OK) return 4;
    if (mmfs_dataset_view_size(tr, 9, &p) != MMFS_STATUS_INVALID_ARGUMENT) return 5;
    if (strlen(mmfs_last_error()) == 0) return 6;
    printf("%s %.3f\n", mmfs_version(), m.balanced_accuracy);
    mmfs_dataset_free(tr);
    mmfs_dataset_free(te);
    return 0;
}
"#,
    )
    .unwrap();
    let bin = dir.path().join("smoke");
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let status = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(&include)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success(), "C compile failed");
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "smoke exited with {:?}", out.status.code());
    assert!(String::from_utf8_lossy(&out.stdout).starts_with(mmfs::VERSION));
}
