use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use tendon_ffi::*;

fn last_error() -> String {
    let p = tendon_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn take_string(p: *mut std::ffi::c_char) -> String {
    let s = unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned();
    unsafe { tendon_string_free(p) };
    s
}

#[test]
fn analytical_round_trip() {
    let mut cmd = TendonCommand::default();
    let st = unsafe { tendon_analytical_inverse(TendonPose { alpha: 90.0, beta: 0.0 }, &mut cmd) };
    assert_eq!(st, TendonStatus::Ok);
    assert!((cmd.l1 - 60.0).abs() < 1e-12 && (cmd.l2 + 30.0).abs() < 1e-12 && (cmd.l3 + 30.0).abs() < 1e-12);
    let mut pose = TendonPose::default();
    assert_eq!(unsafe { tendon_analytical_forward(cmd, &mut pose) }, TendonStatus::Ok);
    assert!((pose.alpha - 90.0).abs() < 1e-9 && pose.beta.abs() < 1e-9);
    assert!(tendon_last_error_message().is_null());
}

#[test]
fn errors_set_status_and_message() {
    let mut cmd = TendonCommand::default();
    let st = unsafe {
        tendon_analytical_inverse(
            TendonPose {
                alpha: f64::NAN,
                beta: 0.0,
            },
            &mut cmd,
        )
    };
    assert_eq!(st, TendonStatus::InvalidArgument);
    assert!(!last_error().is_empty());

    let st = unsafe { tendon_analytical_inverse(TendonPose::default(), ptr::null_mut()) };
    assert_eq!(st, TendonStatus::NullPointer);
    assert!(last_error().contains("out"));

    let name = CString::new("stormy").unwrap();
    let mut plant = ptr::null_mut();
    assert_eq!(
        unsafe { tendon_plant_new(name.as_ptr(), &mut plant) },
        TendonStatus::InvalidArgument
    );
    assert!(plant.is_null());

    let path = CString::new("/nonexistent/data.csv").unwrap();
    let mut ds = ptr::null_mut();
    assert_eq!(
        unsafe { tendon_dataset_read_csv(path.as_ptr(), &mut ds) },
        TendonStatus::NotFound
    );
}

#[test]
fn reference_block_evaluates_and_renders() {
    let mut tf = ptr::null_mut();
    assert_eq!(
        unsafe { tendon_tf_reference_gradient_boosting(&mut tf) },
        TendonStatus::Ok
    );
    let mut cmd = TendonCommand::default();
    assert_eq!(
        unsafe { tendon_tf_eval(tf, TendonPose::default(), &mut cmd) },
        TendonStatus::Ok
    );
    assert_eq!((cmd.l1, cmd.l2, cmd.l3), (1.0197, -0.4349, -0.5848));

    let mut text = ptr::null_mut();
    assert_eq!(unsafe { tendon_tf_render(tf, &mut text) }, TendonStatus::Ok);
    assert!(take_string(text).starts_with("L1 = 1.0197 + "));

    let mut json = ptr::null_mut();
    assert_eq!(unsafe { tendon_tf_to_json(tf, &mut json) }, TendonStatus::Ok);
    let json = CString::new(take_string(json)).unwrap();
    let mut back = ptr::null_mut();
    assert_eq!(
        unsafe { tendon_tf_from_json(json.as_ptr(), &mut back) },
        TendonStatus::Ok
    );
    let n = unsafe { tendon_tf_n_features(back) };
    assert_eq!(n, 6);
    let (mut a, mut b) = (vec![0.0; 3 * n], vec![0.0; 3 * n]);
    unsafe {
        assert_eq!(tendon_tf_coefficients(tf, a.as_mut_ptr(), a.len()), TendonStatus::Ok);
        assert_eq!(tendon_tf_coefficients(back, b.as_mut_ptr(), b.len()), TendonStatus::Ok);
        assert_eq!(
            tendon_tf_coefficients(back, b.as_mut_ptr(), 2),
            TendonStatus::InvalidArgument
        );
        tendon_tf_free(tf);
        tendon_tf_free(back);
    }
    assert_eq!(a, b);
}

#[test]
fn analytical_distillation_through_handles() {
    let mut tf = ptr::null_mut();
    assert_eq!(unsafe { tendon_tf_distill_analytical(2, &mut tf) }, TendonStatus::Ok);
    let mut w = vec![0.0; 18];
    assert_eq!(
        unsafe { tendon_tf_coefficients(tf, w.as_mut_ptr(), 18) },
        TendonStatus::Ok
    );
    assert!((w[1] - 2.0 / 3.0).abs() < 1e-9);
    assert!(unsafe { tendon_tf_residual_rms(tf) } < 1e-9);
    unsafe { tendon_tf_free(tf) };
    assert_eq!(
        unsafe { tendon_tf_distill_analytical(3, &mut tf) },
        TendonStatus::InvalidArgument
    );
}

#[test]
fn generate_fit_predict_distill() {
    let preset = CString::new("ideal").unwrap();
    let mut plant = ptr::null_mut();
    let mut ds = ptr::null_mut();
    let (mut train, mut val) = (ptr::null_mut(), ptr::null_mut());
    let mut model = ptr::null_mut();
    let family = CString::new("ridge").unwrap();
    let key = CString::new("lambda").unwrap();
    let keys = [key.as_ptr()];
    let values = [1e-9];
    unsafe {
        assert_eq!(tendon_plant_new(preset.as_ptr(), &mut plant), TendonStatus::Ok);
        assert_eq!(tendon_dataset_generate(plant, 1, 7, &mut ds), TendonStatus::Ok);
        assert_eq!(tendon_dataset_len(ds), 361);
        assert_eq!(tendon_dataset_split(ds, 0.8, 7, &mut train, &mut val), TendonStatus::Ok);
        assert_eq!(tendon_dataset_len(train) + tendon_dataset_len(val), 361);
        assert_eq!(
            tendon_model_fit(
                family.as_ptr(),
                7,
                keys.as_ptr(),
                values.as_ptr(),
                1,
                train,
                ptr::null(),
                &mut model
            ),
            TendonStatus::Ok
        );
        assert!(tendon_model_fit_seconds(model) > 0.0);

        let mut pose = TendonPose::default();
        let mut want = TendonCommand::default();
        assert_eq!(tendon_dataset_sample(val, 0, &mut pose, &mut want), TendonStatus::Ok);
        let mut got = [TendonCommand::default()];
        assert_eq!(
            tendon_model_predict(model, &pose, 1, got.as_mut_ptr()),
            TendonStatus::Ok
        );
        assert!((got[0].l1 - want.l1).abs() < 1e-3, "{:?} vs {:?}", got[0], want);

        let mut tf = ptr::null_mut();
        assert_eq!(tendon_tf_distill_model(model, 1, &mut tf), TendonStatus::Ok);
        assert_eq!(tendon_tf_n_features(tf), 3);

        let bad = CString::new("depth").unwrap();
        let bad_keys = [bad.as_ptr()];
        let mut other = ptr::null_mut();
        assert_eq!(
            tendon_model_fit(
                family.as_ptr(),
                7,
                bad_keys.as_ptr(),
                values.as_ptr(),
                1,
                train,
                val,
                &mut other
            ),
            TendonStatus::InvalidArgument
        );
        assert!(last_error().contains("depth"));

        tendon_tf_free(tf);
        tendon_model_free(model);
        tendon_dataset_free(train);
        tendon_dataset_free(val);
        tendon_dataset_free(ds);
        tendon_plant_free(plant);
    }
}

#[test]
fn plant_inverse_reaches_target() {
    let preset = CString::new("default").unwrap();
    let mut plant = ptr::null_mut();
    unsafe {
        assert_eq!(tendon_plant_new(preset.as_ptr(), &mut plant), TendonStatus::Ok);
        let target = TendonPose {
            alpha: 30.0,
            beta: -20.0,
        };
        let mut cmd = TendonCommand::default();
        assert_eq!(tendon_plant_invert(plant, target, &mut cmd), TendonStatus::Ok);
        let mut reached = TendonPose::default();
        assert_eq!(tendon_plant_forward(plant, cmd, &mut reached), TendonStatus::Ok);
        assert!((reached.alpha - target.alpha).abs() < 1e-6 && (reached.beta - target.beta).abs() < 1e-6);
        assert_eq!(tendon_plant_set_noise_sigma(plant, -1.0), TendonStatus::InvalidArgument);
        tendon_plant_free(plant);
    }
}

#[test]
fn header_declares_every_export_and_compiles_as_c() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let header = std::fs::read_to_string(dir.join("include/tendon.h")).unwrap();
    for f in [
        "tendon_last_error_message",
        "tendon_plant_new",
        "tendon_dataset_generate",
        "tendon_model_fit",
        "tendon_model_predict",
        "tendon_tf_distill_model",
        "tendon_tf_render",
        "tendon_tf_free",
        "tendon_string_free",
    ] {
        assert!(header.contains(&format!("{}(", f)), "{} missing from header", f);
    }
    let Ok(status) = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-x", "c", "-"])
        .arg("-I")
        .arg(dir.join("include"))
        .stdin(std::process::Stdio::piped())
        .spawn()
        .and_then(|mut child| {
            use std::io::Write;
            child
                .stdin
                .take()
                .unwrap()
                .write_all(b"#include \"tendon.h\"\nint main(void){TendonPose p={1,2};TendonCommand c;return tendon_analytical_inverse(p,&c)==TENDON_STATUS_OK?0:1;}\n")?;
            child.wait()
        })
    else {
        eprintln!("no C compiler available; skipped syntax check");
        return;
    };
    assert!(status.success());
}
