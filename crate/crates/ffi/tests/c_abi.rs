use std::ffi::{CStr, CString};
use std::process::Command;
use std::ptr;

use specdetect_ffi::*;

fn noise_image(size: usize, seed: u64) -> Vec<f64> {
    let mut s = seed
        .wrapping_mul(6364136223846793005)
        .wrapping_add(1442695040888963407);
    (0..size * size * 3)
        .map(|_| {
            s = s
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            0.25 + 0.5 * ((s >> 11) as f64 / (1u64 << 53) as f64)
        })
        .collect()
}

fn last_error() -> String {
    let p = sd_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn version_matches_crate() {
    let v = unsafe { CStr::from_ptr(sd_version()) };
    assert_eq!(v.to_str().unwrap(), specdetect::VERSION);
}

#[test]
fn spectral_handle_round_trip() {
    let mut b = ptr::null_mut();
    assert_eq!(
        unsafe { sd_backend_open_spectral(32, &mut b) },
        SdStatus::Ok
    );
    let mut dim = 0;
    let mut size = 0;
    unsafe {
        assert_eq!(sd_backend_embed_dim(b, &mut dim), SdStatus::Ok);
        assert_eq!(sd_backend_input_size(b, &mut size), SdStatus::Ok);
    }
    assert_eq!(size, 32);
    assert_eq!(dim, 3 * 16 * 4 + 3);

    let img = noise_image(32, 1);
    let mut out = vec![0.0; dim];
    let st = unsafe { sd_backend_embed(b, img.as_ptr(), 32, 32, 3, out.as_mut_ptr(), dim) };
    assert_eq!(st, SdStatus::Ok);
    let tensor = specdetect::ImageTensor::new(32, 32, 3, img.clone()).unwrap();
    let direct = specdetect::backend::spectral::spectral_reference_features(&tensor).unwrap();
    assert_eq!(out, direct.values());

    let st = unsafe { sd_backend_embed(b, img.as_ptr(), 32, 32, 3, out.as_mut_ptr(), dim - 1) };
    assert_eq!(st, SdStatus::InvalidArgument);

    let st = unsafe { sd_backend_embed(b, img.as_ptr(), 28, 28, 3, out.as_mut_ptr(), dim) };
    assert_eq!(st, SdStatus::Shape);
    assert!(last_error().contains("28"));
    unsafe { sd_backend_free(b) };
}

#[test]
fn score_matches_core() {
    let mut b = ptr::null_mut();
    assert_eq!(
        unsafe { sd_backend_open_spectral(56, &mut b) },
        SdStatus::Ok
    );
    let cfg = sd_perturb_config_default();
    let img = noise_image(56, 7);
    let mut s = f64::NAN;
    let st = unsafe { sd_score(b, &cfg, img.as_ptr(), 56, 56, 3, 5, &mut s) };
    assert_eq!(st, SdStatus::Ok);

    let core = specdetect::backend::SpectralReference::new(56).unwrap();
    let perturber = specdetect::Perturber::new(specdetect::PerturbConfig::default()).unwrap();
    let tensor = specdetect::ImageTensor::new(56, 56, 3, img).unwrap();
    let want = specdetect::detector::score(&tensor, &perturber, &core, 5).unwrap();
    assert_eq!(s, want);
    unsafe { sd_backend_free(b) };
}

#[test]
fn perturb_with_zero_lambda_is_identity() {
    let cfg = SdPerturbConfig {
        lambda: 0.0,
        ..sd_perturb_config_default()
    };
    let img = noise_image(28, 3);
    let mut out = vec![0.0; img.len()];
    let st = unsafe { sd_perturb(&cfg, img.as_ptr(), 28, 28, 3, 0, out.as_mut_ptr()) };
    assert_eq!(st, SdStatus::Ok);
    assert_eq!(out, img);

    let bad = SdPerturbConfig {
        patch_size: 0,
        ..sd_perturb_config_default()
    };
    let st = unsafe { sd_perturb(&bad, img.as_ptr(), 28, 28, 3, 0, out.as_mut_ptr()) };
    assert_eq!(st, SdStatus::Config);
}

#[test]
fn auc_and_error_paths() {
    let real = [0.1, 0.4];
    let fake = [0.35, 0.8, 0.9];
    let mut a = 0.0;
    let st = unsafe { sd_auc(real.as_ptr(), 2, fake.as_ptr(), 3, &mut a) };
    assert_eq!(st, SdStatus::Ok);
    assert_eq!(a, 5.0 / 6.0);

    let st = unsafe { sd_auc(ptr::null(), 0, fake.as_ptr(), 3, &mut a) };
    assert_eq!(st, SdStatus::Empty);

    let st = unsafe { sd_auc(real.as_ptr(), 2, fake.as_ptr(), 3, ptr::null_mut()) };
    assert_eq!(st, SdStatus::NullPointer);
    assert!(last_error().contains("null"));
}

#[test]
fn missing_bundle_reports_status() {
    let dir = CString::new("/nonexistent/bundle").unwrap();
    let mut b = ptr::null_mut();
    let st = unsafe { sd_backend_open_vit(dir.as_ptr(), 13, 224, &mut b) };
    assert_eq!(st, SdStatus::Bundle);
    assert!(b.is_null());
    unsafe { sd_backend_free(ptr::null_mut()) };
}

#[test]
fn header_compiles_as_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/specdetect.h");
    let text = std::fs::read_to_string(header).unwrap();
    for f in [
        "sd_backend_open_spectral",
        "sd_score",
        "sd_auc",
        "sd_last_error_message",
    ] {
        assert!(text.contains(f), "{f} missing from header");
    }
    let Ok(status) = Command::new("cc")
        .args(["-fsyntax-only", "-x", "c", header])
        .status()
    else {
        eprintln!("no C compiler; header syntax check skipped");
        return;
    };
    assert!(status.success());
}
