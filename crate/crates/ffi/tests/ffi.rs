use std::ffi::{CStr, CString};
use std::path::Path;
use std::ptr;

use tsa_core::kbstore::{self, ScenarioPlan};
use tsa_core::netmodel::NetworkCase;
use tsa_ffi::*;

fn c_path(p: &Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(tsa_last_error()) }.to_string_lossy().into_owned()
}

fn write_kb(dir: &Path) -> std::path::PathBuf {
    let mut plan = ScenarioPlan::new(vec![3, 7, 9], 0);
    plan.load_levels = vec![0.9, 1.2];
    plan.dispatches_per_level = 3;
    plan.horizon_s = 2.0;
    let kb = kbstore::generate_kb(&NetworkCase::bundled_case3(), &plan, None).unwrap();
    let path = dir.join("small.kb");
    kbstore::save_kb(&kb, &path).unwrap();
    path
}

#[test]
fn header_is_generated() {
    let header = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/tsa.h")).unwrap();
    for name in
        ["TsaStatus", "TSA_STATUS_OK", "tsa_model_predict", "tsa_train", "tsa_last_error", "typedef struct TsaModel"]
    {
        assert!(header.contains(name), "header lacks {name}");
    }
}

#[test]
fn train_predict_save_load() {
    let dir = tempfile::tempdir().unwrap();
    let kb_path = c_path(&write_kb(dir.path()));
    unsafe {
        let mut kb = ptr::null_mut();
        assert_eq!(tsa_kb_load(kb_path.as_ptr(), &mut kb), TsaStatus::Ok);
        let mut len = 0usize;
        assert_eq!(tsa_kb_len(kb, &mut len), TsaStatus::Ok);
        assert_eq!(len, 18);

        let scheme = CString::new("F1:g,F2:g,F3:g").unwrap();
        let mut model = ptr::null_mut();
        let mut acc = -1.0;
        assert_eq!(tsa_train(kb, scheme.as_ptr(), 12, 1, &mut model, &mut acc), TsaStatus::Ok, "{}", last_error());
        assert!((0.0..=1.0).contains(&acc));
        assert!(last_error().is_empty());

        let mut classes = 0usize;
        assert_eq!(tsa_model_num_classes(model, &mut classes), TsaStatus::Ok);
        assert_eq!(classes, 2);

        let n = tsa_num_features();
        let mut x = vec![0.0; n];
        let mut label = 0;
        assert_eq!(tsa_kb_sample(kb, 0, x.as_mut_ptr(), n, &mut label), TsaStatus::Ok);
        assert!(label == 1 || label == -1);

        let mut probs = [0.0; 2];
        let mut predicted = 0;
        assert_eq!(tsa_model_predict(model, x.as_ptr(), n, probs.as_mut_ptr(), 2, &mut predicted), TsaStatus::Ok);
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(predicted, if probs[0] >= probs[1] { 1 } else { -1 });

        let model_path = c_path(&dir.path().join("m.json"));
        assert_eq!(tsa_model_save(model, model_path.as_ptr()), TsaStatus::Ok);
        let mut loaded = ptr::null_mut();
        assert_eq!(tsa_model_load(model_path.as_ptr(), &mut loaded), TsaStatus::Ok);
        let mut again = [0.0; 2];
        let mut label_again = 0;
        assert_eq!(tsa_model_predict(loaded, x.as_ptr(), n, again.as_mut_ptr(), 2, &mut label_again), TsaStatus::Ok);
        assert_eq!(again, probs);
        assert_eq!(label_again, predicted);

        tsa_model_free(loaded);
        tsa_model_free(model);
        tsa_kb_free(kb);
    }
}

#[test]
fn error_codes_and_messages() {
    let dir = tempfile::tempdir().unwrap();
    unsafe {
        let mut model = ptr::null_mut();
        assert_eq!(tsa_model_load(ptr::null(), &mut model), TsaStatus::NullPointer);
        assert!(model.is_null());
        assert!(last_error().contains("path"));

        let missing = c_path(&dir.path().join("none.json"));
        assert_eq!(tsa_model_load(missing.as_ptr(), &mut model), TsaStatus::Io);
        assert!(!last_error().is_empty());

        let junk = dir.path().join("junk.kb");
        std::fs::write(&junk, "garbage\n").unwrap();
        let mut kb = ptr::null_mut();
        assert_eq!(tsa_kb_load(c_path(&junk).as_ptr(), &mut kb), TsaStatus::Format);
        assert!(kb.is_null());

        let kb_path = c_path(&write_kb(dir.path()));
        assert_eq!(tsa_kb_load(kb_path.as_ptr(), &mut kb), TsaStatus::Ok);
        let mut x = vec![0.0; tsa_num_features()];
        let mut label = 0;
        assert_eq!(tsa_kb_sample(kb, 10_000, x.as_mut_ptr(), x.len(), &mut label), TsaStatus::InvalidArgument);
        assert_eq!(tsa_kb_sample(kb, 0, x.as_mut_ptr(), 3, &mut label), TsaStatus::BufferTooSmall);
        assert_eq!(tsa_kb_sample(kb, 0, ptr::null_mut(), x.len(), &mut label), TsaStatus::NullPointer);

        let mut acc = 0.0;
        let bad_scheme = CString::new("F4:g").unwrap();
        assert_eq!(tsa_train(kb, bad_scheme.as_ptr(), 10, 0, &mut model, &mut acc), TsaStatus::InvalidArgument);
        let scheme = CString::new("F1:g").unwrap();
        assert_eq!(tsa_train(kb, scheme.as_ptr(), 0, 0, &mut model, &mut acc), TsaStatus::InvalidArgument);
        assert_eq!(tsa_train(ptr::null(), scheme.as_ptr(), 10, 0, &mut model, &mut acc), TsaStatus::NullPointer);

        assert_eq!(tsa_train(kb, scheme.as_ptr(), 10, 0, &mut model, &mut acc), TsaStatus::Ok);
        let mut probs = [0.0; 1];
        assert_eq!(
            tsa_model_predict(model, x.as_ptr(), x.len(), probs.as_mut_ptr(), 1, &mut label),
            TsaStatus::BufferTooSmall
        );
        let mut probs = [0.0; 2];
        assert_eq!(
            tsa_model_predict(model, x.as_ptr(), 5, probs.as_mut_ptr(), 2, &mut label),
            TsaStatus::InvalidArgument
        );

        tsa_model_free(model);
        tsa_kb_free(kb);
        tsa_model_free(ptr::null_mut());
        tsa_kb_free(ptr::null_mut());
    }
}
