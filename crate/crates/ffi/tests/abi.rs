use std::ffi::CString;
use std::process::Command;
use std::ptr;

use photocore_sim::fixtures::{generate, FixtureKind};
use photocore_sim::model::Domain;
use photocore_sim_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as std::ffi::c_char; 256];
    let n = unsafe { pc_last_error_message(buf.as_mut_ptr(), buf.len()) };
    assert!(n > 0);
    unsafe { std::ffi::CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned()
}

fn load_uniform(dir: &std::path::Path) -> *mut PcModel {
    generate(FixtureKind::Uniform, 3).unwrap().write(dir).unwrap();
    let path = CString::new(dir.join("model.json").to_str().unwrap()).unwrap();
    let mut model = ptr::null_mut();
    assert_eq!(unsafe { pc_model_load(path.as_ptr(), &mut model) }, PcStatus::Ok);
    model
}

#[test]
fn missing_model_reports_io_error() {
    let path = CString::new("/nonexistent/model.json").unwrap();
    let mut model = ptr::null_mut();
    let st = unsafe { pc_model_load(path.as_ptr(), &mut model) };
    assert_eq!(st, PcStatus::Io);
    assert!(model.is_null());
    assert!(last_error().contains("/nonexistent/model.json"));
}

#[test]
fn null_handles_are_rejected() {
    let mut v = 0.0;
    assert_eq!(unsafe { pc_energy(ptr::null(), 64, 1.0, 1, &mut v) }, PcStatus::NullPointer);
    assert_eq!(unsafe { pc_power(1.0, 64, ptr::null_mut()) }, PcStatus::NullPointer);
    unsafe {
        pc_model_free(ptr::null_mut());
        pc_config_free(ptr::null_mut());
    }
}

#[test]
fn ideal_simulation_matches_reference() {
    let dir = tempfile::tempdir().unwrap();
    let model = load_uniform(dir.path());
    let (mut inl, mut outl) = (0, 0);
    assert_eq!(unsafe { pc_model_io_len(model, &mut inl, &mut outl) }, PcStatus::Ok);
    let f = generate(FixtureKind::Uniform, 3).unwrap();
    let img = f.data.samples[0].image.data();
    assert_eq!(img.len(), inl);

    let mut cfg = ptr::null_mut();
    unsafe {
        assert_eq!(pc_config_new(&mut cfg), PcStatus::Ok);
        assert_eq!(pc_config_set(cfg, 64, 1.0, 7), PcStatus::Ok);
        assert_eq!(pc_config_set_noise_sigma(cfg, 0.0), PcStatus::Ok);
        assert_eq!(pc_config_set_bypass(cfg, PcBypass::All), PcStatus::Ok);
    }
    let mut sim = vec![0.0f32; outl];
    let mut reference = vec![0.0f32; outl];
    unsafe {
        assert_eq!(pc_simulate_forward(model, cfg, 0, img.as_ptr(), inl, sim.as_mut_ptr(), outl), PcStatus::Ok);
        assert_eq!(pc_reference_forward(model, img.as_ptr(), inl, reference.as_mut_ptr(), outl), PcStatus::Ok);
    }
    // bf16 accumulation may flip near-tied argmax pixels.
    let agree = sim.iter().zip(&reference).filter(|(a, b)| a == b).count();
    assert!(agree * 10 >= outl * 9, "{agree}/{outl}");

    let mut short = vec![0.0f32; outl - 1];
    let st = unsafe { pc_reference_forward(model, img.as_ptr(), inl, short.as_mut_ptr(), outl - 1) };
    assert_eq!(st, PcStatus::Shape);
    unsafe {
        pc_config_free(cfg);
        pc_model_free(model);
    }
}

#[test]
fn gemm_and_cost() {
    let mut cfg = ptr::null_mut();
    unsafe {
        pc_config_new(&mut cfg);
        assert_eq!(pc_config_set(cfg, 0, 1.0, 0), PcStatus::Config);
        assert!(last_error().contains("tile_size"));
        assert_eq!(pc_config_set(cfg, 4, 1.0, 0), PcStatus::Ok);
        pc_config_set_noise_sigma(cfg, 0.0);
        pc_config_set_bypass(cfg, PcBypass::All);
    }
    let w = [1.0f32, 2.0, 3.0, 4.0];
    let x = [1.0f32, 0.0, 0.0, 1.0];
    let mut out = [0.0f32; 4];
    assert_eq!(unsafe { pc_gemm(cfg, w.as_ptr(), 2, 2, x.as_ptr(), 2, 0, 0, out.as_mut_ptr()) }, PcStatus::Ok);
    assert_eq!(out, w);
    unsafe { pc_config_free(cfg) };

    let (mut p1, mut p2) = (0.0, 0.0);
    unsafe {
        pc_power(1.0, 64, &mut p1);
        pc_power(2.0, 64, &mut p2);
    }
    assert!((p2 / p1 - 1.4).abs() < 1e-9);
    assert_eq!(pc_bf16_round(1.004), 1.007_812_5);

    let dir = tempfile::tempdir().unwrap();
    let model = load_uniform(dir.path());
    let mut e = 0.0;
    assert_eq!(unsafe { pc_energy(model, 64, 1.0, 1, &mut e) }, PcStatus::Ok);
    assert!(e > 0.0);
    unsafe { pc_model_free(model) };
    // Declared-digital models cost nothing on the array.
    let f = generate(FixtureKind::Uniform, 3).unwrap();
    assert!(f.model.with_linear_domain(Domain::Digital).photocore_layers().is_empty());
}

#[test]
fn header_compiles_as_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/photocore_sim.h");
    assert!(std::fs::read_to_string(header).unwrap().contains("pc_simulate_forward"));
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("t.c");
    std::fs::write(&src, "#include \"photocore_sim.h\"\nint main(void) { return pc_bf16_round(1.0f) == 1.0f ? 0 : 1; }\n")
        .unwrap();
    let include = concat!(env!("CARGO_MANIFEST_DIR"), "/include");
    match Command::new("cc").args(["-fsyntax-only", "-std=c99", "-I", include]).arg(&src).status() {
        Ok(s) => assert!(s.success()),
        Err(_) => eprintln!("no C compiler, syntax check skipped"),
    }
}
