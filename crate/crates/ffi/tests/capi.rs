use ddlqg_ffi::*;
use std::ffi::CStr;
use std::ptr;

const A: [f64; 4] = [0.7, 1.2, 0.0, 0.4];
const B: [f64; 2] = [0.0, 1.0];
const C: [f64; 2] = [1.0, 0.0];
const QW: [f64; 4] = [2.0, 0.0, 0.0, 2.0];
const RV: [f64; 1] = [1.0];
const I2: [f64; 4] = [1.0, 0.0, 0.0, 1.0];
const QX: [f64; 4] = [5.0, 0.0, 0.0, 5.0];
const RU: [f64; 1] = [1.0];

fn last_error() -> String {
    let p = ddlqg_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

unsafe fn system() -> *mut DdlqgSystem {
    let mut s = ptr::null_mut();
    let st = ddlqg_system_new(
        2,
        1,
        1,
        A.as_ptr(),
        B.as_ptr(),
        C.as_ptr(),
        QW.as_ptr(),
        RV.as_ptr(),
        I2.as_ptr(),
        &mut s,
    );
    assert_eq!(st, DdlqgStatus::Ok);
    s
}

unsafe fn weights() -> *mut DdlqgWeights {
    let mut w = ptr::null_mut();
    assert_eq!(
        ddlqg_weights_new(2, 1, QX.as_ptr(), RU.as_ptr(), &mut w),
        DdlqgStatus::Ok
    );
    w
}

unsafe fn dataset(sys: *const DdlqgSystem, horizon: usize, count: usize, seed: u64) -> *mut DdlqgDataset {
    let mut d = ptr::null_mut();
    assert_eq!(
        ddlqg_dataset_simulate(sys, RU.as_ptr(), horizon, count, seed, &mut d),
        DdlqgStatus::Ok
    );
    d
}

#[test]
fn data_driven_gain_is_close_to_model_gain() {
    unsafe {
        let (s, w) = (system(), weights());
        let d = dataset(s, 20, 20_000, 3);
        let (mut k, mut k_star) = ([0.0; 2], [0.0; 2]);
        assert_eq!(ddlqg_lqr_oracle(s, w, k_star.as_mut_ptr()), DdlqgStatus::Ok);
        assert_eq!(ddlqg_lqr_from_data(d, w, k.as_mut_ptr()), DdlqgStatus::Ok);
        assert!(ddlqg_last_error().is_null());
        let err = ((k[0] - k_star[0]).powi(2) + (k[1] - k_star[1]).powi(2)).sqrt();
        assert!(err < 0.1 * k_star[0].hypot(k_star[1]), "{k:?} vs {k_star:?}");
        ddlqg_dataset_free(d);
        ddlqg_weights_free(w);
        ddlqg_system_free(s);
    }
}

#[test]
fn filter_bank_matches_core_estimate() {
    unsafe {
        let s = system();
        let d = dataset(s, 6, 2_000, 8);
        let mut bank = ptr::null_mut();
        assert_eq!(ddlqg_filter_bank_new(d, &mut bank), DdlqgStatus::Ok);
        assert_eq!(ddlqg_filter_bank_horizon(bank), 6);

        let (mut horizon, mut count) = (0, 0);
        assert_eq!(ddlqg_dataset_shape(d, &mut horizon, &mut count), DdlqgStatus::Ok);
        assert_eq!((horizon, count), (6, 2_000));

        let u = [0.5, -1.0, 0.25];
        let y = [1.0, 0.0, -2.0, 0.5];
        let mut x_hat = [0.0; 2];
        let st = ddlqg_filter_bank_estimate(bank, 3, u.as_ptr(), 3, y.as_ptr(), 4, x_hat.as_mut_ptr());
        assert_eq!(st, DdlqgStatus::Ok);
        assert!(x_hat.iter().all(|v| v.is_finite()));

        let mut bad = [0.0; 2];
        let st = ddlqg_filter_bank_estimate(bank, 3, u.as_ptr(), 2, y.as_ptr(), 4, bad.as_mut_ptr());
        assert_eq!(st, DdlqgStatus::Shape);
        assert!(!last_error().is_empty());

        ddlqg_filter_bank_free(bank);
        ddlqg_dataset_free(d);
        ddlqg_system_free(s);
    }
}

#[test]
fn recorded_data_round_trips() {
    unsafe {
        let s = system();
        let d = dataset(s, 4, 50, 1);
        let mut y = vec![0.0; 5 * 50];
        assert_eq!(ddlqg_dataset_outputs(d, y.as_mut_ptr()), DdlqgStatus::Ok);
        let u = vec![1.0; 4 * 50];
        let x = vec![0.0; 2 * 5 * 50];
        let mut e = ptr::null_mut();
        let st = ddlqg_dataset_from_data(2, 1, 1, 4, 50, u.as_ptr(), x.as_ptr(), y.as_ptr(), &mut e);
        assert_eq!(st, DdlqgStatus::Ok);
        let mut y2 = vec![0.0; 5 * 50];
        assert_eq!(ddlqg_dataset_outputs(e, y2.as_mut_ptr()), DdlqgStatus::Ok);
        assert_eq!(y, y2);
        ddlqg_dataset_free(e);
        ddlqg_dataset_free(d);
        ddlqg_system_free(s);
    }
}

#[test]
fn errors_map_to_status_codes() {
    unsafe {
        let mut s = ptr::null_mut();
        let bad_rv = [-1.0];
        let st = ddlqg_system_new(
            2,
            1,
            1,
            A.as_ptr(),
            B.as_ptr(),
            C.as_ptr(),
            QW.as_ptr(),
            bad_rv.as_ptr(),
            I2.as_ptr(),
            &mut s,
        );
        assert_eq!(st, DdlqgStatus::InvalidCovariance);
        assert!(s.is_null());
        assert!(last_error().contains("R_v"));

        let st = ddlqg_system_new(
            2,
            1,
            1,
            ptr::null(),
            B.as_ptr(),
            C.as_ptr(),
            QW.as_ptr(),
            RV.as_ptr(),
            I2.as_ptr(),
            &mut s,
        );
        assert_eq!(st, DdlqgStatus::NullPointer);

        let sys = system();
        let d = dataset(sys, 10, 15, 2);
        let mut bank = ptr::null_mut();
        assert_eq!(ddlqg_filter_bank_new(d, &mut bank), DdlqgStatus::InsufficientData);
        assert!(bank.is_null());

        let mut k = [0.0; 2];
        assert_eq!(
            ddlqg_lqr_oracle(ptr::null(), ptr::null(), k.as_mut_ptr()),
            DdlqgStatus::NullPointer
        );
        assert_eq!(ddlqg_filter_bank_horizon(ptr::null()), 0);

        ddlqg_dataset_free(d);
        ddlqg_system_free(sys);
        ddlqg_system_free(ptr::null_mut());
    }
}

#[test]
fn version_is_a_c_string() {
    let v = unsafe { CStr::from_ptr(ddlqg_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}
