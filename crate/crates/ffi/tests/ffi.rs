// SPDX-License-Identifier: MIT OR Apache-2.0

use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use layertracer_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(lt_last_error_message()) }
        .to_string_lossy()
        .into_owned()
}

fn planted(arch: u8, layer: u32) -> *mut LtModel {
    let pattern = CString::new("AAAL").unwrap();
    let mut spec = lt_spec_reference(arch);
    spec.hybrid_pattern = pattern.as_ptr();
    let mut model = ptr::null_mut();
    let status = unsafe {
        lt_model_plant(
            &spec,
            layer,
            101,
            lt_default_plant_strength(64),
            5,
            &mut model,
        )
    };
    assert_eq!(status, LtStatus::Ok, "{}", last_error());
    model
}

#[test]
fn planted_model_round_trip() {
    for arch in [LT_ARCH_DECODER, LT_ARCH_LINEAR, LT_ARCH_HYBRID] {
        let model = planted(arch, 5);
        let tokens: Vec<u32> = b"abc def".iter().map(|&b| u32::from(b)).collect();
        let mut a = ptr::null_mut();
        unsafe {
            assert_eq!(
                lt_analyze(model, tokens.as_ptr(), tokens.len(), ptr::null(), &mut a),
                LtStatus::Ok
            );
            assert_eq!(lt_analysis_particle_layer(a), 5);
            assert_eq!(lt_analysis_vulnerable_layer(a), 5);
            assert_eq!(lt_analysis_target_token(a), 101);
            assert_eq!(lt_analysis_n_layers(a), 12);
            assert!(!lt_analysis_degenerate(a));
            assert!(lt_analysis_particle_ratio(a) > 0.5);
            let mut v = 0.0;
            assert_eq!(lt_analysis_lrs(a, &mut v), LtStatus::Ok);
            assert!(v > 0.0);
            assert_eq!(lt_analysis_target_prob(a, 12, &mut v), LtStatus::Ok);
            assert!(v > 0.5);
            assert_eq!(
                lt_analysis_target_prob(a, 0, &mut v),
                LtStatus::InvalidArgument
            );
            lt_analysis_free(a);
            lt_model_free(model);
        }
    }
}

#[test]
fn save_load_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("m.ltrc").to_str().unwrap()).unwrap();
    let model = planted(LT_ARCH_DECODER, 3);
    unsafe {
        assert_eq!(lt_model_save(model, path.as_ptr()), LtStatus::Ok);
        let mut loaded = ptr::null_mut();
        assert_eq!(lt_model_load(path.as_ptr(), &mut loaded), LtStatus::Ok);
        let text = CString::new("round trip").unwrap();
        let mut a = ptr::null_mut();
        let mut b = ptr::null_mut();
        assert_eq!(
            lt_analyze_text(model, text.as_ptr(), ptr::null(), &mut a),
            LtStatus::Ok
        );
        assert_eq!(
            lt_analyze_text(loaded, text.as_ptr(), ptr::null(), &mut b),
            LtStatus::Ok
        );
        let (mut ja, mut jb) = (ptr::null_mut(), ptr::null_mut());
        assert_eq!(lt_analysis_to_json(a, &mut ja), LtStatus::Ok);
        assert_eq!(lt_analysis_to_json(b, &mut jb), LtStatus::Ok);
        assert_eq!(CStr::from_ptr(ja), CStr::from_ptr(jb));
        assert!(CStr::from_ptr(ja)
            .to_str()
            .unwrap()
            .contains("\"particle\": {"));
        lt_string_free(ja);
        lt_string_free(jb);
        lt_analysis_free(a);
        lt_analysis_free(b);
        lt_model_free(loaded);
        lt_model_free(model);
    }
}

#[test]
fn error_codes() {
    let dir = tempfile::tempdir().unwrap();
    let junk = dir.path().join("junk.ltrc");
    std::fs::write(&junk, b"NOPE and some more bytes here").unwrap();
    let junk = CString::new(junk.to_str().unwrap()).unwrap();
    let mut model = ptr::null_mut();
    unsafe {
        assert_eq!(lt_model_load(junk.as_ptr(), &mut model), LtStatus::Format);
        assert!(last_error().contains("magic"));
        assert!(model.is_null());
        assert_eq!(
            lt_model_load(ptr::null(), &mut model),
            LtStatus::NullPointer
        );

        let mut spec = lt_spec_reference(LT_ARCH_DECODER);
        spec.n_heads = 5;
        assert_eq!(
            lt_model_init(&spec, 0, &mut model),
            LtStatus::InvalidArgument
        );
        spec.arch = LT_ARCH_HYBRID;
        spec.n_heads = 4;
        assert_eq!(lt_model_init(&spec, 0, &mut model), LtStatus::NullPointer);
        spec.arch = 9;
        assert_eq!(
            lt_model_init(&spec, 0, &mut model),
            LtStatus::InvalidArgument
        );

        let m = planted(LT_ARCH_LINEAR, 4);
        let mut a = ptr::null_mut();
        assert_eq!(
            lt_analyze(m, ptr::null(), 0, ptr::null(), &mut a),
            LtStatus::InvalidArgument
        );
        let bad = [1000u32];
        assert_eq!(
            lt_analyze(m, bad.as_ptr(), 1, ptr::null(), &mut a),
            LtStatus::InvalidArgument
        );
        let mut cfg = lt_config_default();
        cfg.mask_fraction = 2.0;
        assert_eq!(
            lt_analyze(m, [1u32].as_ptr(), 1, &cfg, &mut a),
            LtStatus::InvalidArgument
        );
        assert!(a.is_null());

        let mut v = 0.0;
        assert_eq!(lt_analysis_lrs(ptr::null(), &mut v), LtStatus::NullPointer);
        assert_eq!(lt_analysis_particle_layer(ptr::null()), 0);
        lt_model_free(ptr::null_mut());
        lt_analysis_free(ptr::null_mut());
        lt_string_free(ptr::null_mut());
        lt_model_free(m);
    }
}

#[test]
fn noop_config_is_degenerate() {
    let m = planted(LT_ARCH_DECODER, 6);
    let mut cfg = lt_config_default();
    cfg.mask_fraction = 0.0;
    let mut a = ptr::null_mut();
    unsafe {
        assert_eq!(
            lt_analyze(m, [1u32, 2, 3].as_ptr(), 3, &cfg, &mut a),
            LtStatus::Ok
        );
        assert!(lt_analysis_degenerate(a));
        lt_analysis_free(a);
        lt_model_free(m);
    }
}

#[test]
fn header_matches_exports() {
    let header = std::fs::read_to_string(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/include/layertracer.h"
    ))
    .unwrap();
    for name in [
        "lt_model_init",
        "lt_model_plant",
        "lt_model_load",
        "lt_model_save",
        "lt_model_free",
        "lt_analyze",
        "lt_analyze_text",
        "lt_analysis_js",
        "lt_analysis_to_json",
        "lt_string_free",
        "lt_last_error_message",
        "typedef struct LtModel LtModel",
        "LT_STATUS_FORMAT = 4",
    ] {
        assert!(header.contains(name), "header lacks {name}");
    }
}

/// Compiles and runs a C program against the generated header and the static
/// library. Skipped when no C compiler is on PATH.
#[test]
fn c_program_links_and_runs() {
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    if Command::new(&cc).arg("--version").output().is_err() {
        eprintln!("skipping: no C compiler");
        return;
    }
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().unwrap().parent().unwrap();
    let lib = profile_dir.join("liblayertracer_ffi.a");
    assert!(lib.exists(), "{} not built", lib.display());
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let dir = tempfile::tempdir().unwrap();
    let bin = dir.path().join("smoke");
    let out = Command::new(&cc)
        .args(["-std=c99", "-Wall", "-Werror", "-o"])
        .arg(&bin)
        .arg(manifest.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm"])
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "cc failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let run = Command::new(&bin).output().unwrap();
    assert!(
        run.status.success(),
        "smoke failed:\n{}{}",
        String::from_utf8_lossy(&run.stdout),
        String::from_utf8_lossy(&run.stderr)
    );
    assert!(String::from_utf8_lossy(&run.stdout).starts_with("ok "));
}
