use std::ffi::CStr;
use std::ptr;

use cfunhddc_ffi::*;

fn last_error() -> String {
    let p = cfh_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn version_is_a_c_string() {
    let v = unsafe { CStr::from_ptr(cfh_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn parameter_count_and_ari() {
    let mut total = 0u64;
    let dims = [10usize, 10, 10];
    assert_eq!(
        unsafe { cfh_count_parameters(3, 100, dims.as_ptr(), &mut total) },
        CfhStatus::Ok
    );
    assert_eq!(total, 3176);
    assert!(cfh_last_error_message().is_null());

    let bad = [101usize, 1, 1];
    assert_eq!(
        unsafe { cfh_count_parameters(3, 100, bad.as_ptr(), &mut total) },
        CfhStatus::Selection
    );
    assert!(last_error().contains("101"));

    let a = [0i64, 0, 1, 1];
    let b = [5i64, 5, 2, 2];
    let mut score = 0.0;
    assert_eq!(
        unsafe { cfh_ari(a.as_ptr(), b.as_ptr(), 4, &mut score) },
        CfhStatus::Ok
    );
    assert_eq!(score, 1.0);
}

#[test]
fn null_pointers_are_reported() {
    assert_eq!(
        unsafe { cfh_ari(ptr::null(), ptr::null(), 3, ptr::null_mut()) },
        CfhStatus::NullPointer
    );
    assert_eq!(
        unsafe { cfh_simulate(CfhDataset::Dataset1, 0, ptr::null_mut()) },
        CfhStatus::NullPointer
    );
    let mut fit = ptr::null_mut();
    assert_eq!(
        unsafe { cfh_fit(ptr::null(), ptr::null(), 2, 1, 1, 0, &mut fit) },
        CfhStatus::NullPointer
    );
    assert!(last_error().contains("curves"));
    unsafe {
        cfh_fit_free(ptr::null_mut());
        cfh_basis_free(ptr::null_mut());
        cfh_curves_free(ptr::null_mut());
    }
}

#[test]
fn grid_curves_fit_end_to_end() {
    // two well-separated groups of univariate curves on a shared grid
    let (n, m) = (60usize, 30usize);
    let times: Vec<f64> = (0..m).map(|j| j as f64 / (m - 1) as f64).collect();
    let mut values = Vec::with_capacity(n * m);
    for i in 0..n {
        let shift = if i % 2 == 0 { 0.0 } else { 5.0 };
        for (j, t) in times.iter().enumerate() {
            let wiggle = ((i * 31 + j * 17) % 13) as f64 / 13.0 - 0.5;
            values.push(shift + (6.0 * t).sin() * (1.0 + 0.1 * (i % 5) as f64) + 0.2 * wiggle);
        }
    }
    unsafe {
        let mut curves = ptr::null_mut();
        assert_eq!(
            cfh_curves_from_grid(n, 1, m, times.as_ptr(), values.as_ptr(), &mut curves),
            CfhStatus::Ok
        );
        assert_eq!(cfh_curves_len(curves), n);
        let mut basis = ptr::null_mut();
        assert_eq!(cfh_basis_new(curves, 8, 3, &mut basis), CfhStatus::Ok);
        let mut fit = ptr::null_mut();
        assert_eq!(
            cfh_fit(curves, basis, 2, 2, 2, 1, &mut fit),
            CfhStatus::Ok,
            "{}",
            last_error()
        );
        assert_eq!(cfh_fit_n_clusters(fit), 2);
        assert!(cfh_fit_loglik(fit).is_finite());
        assert!(cfh_fit_bic(fit) < cfh_fit_loglik(fit));

        let mut labels = vec![9usize; n];
        assert_eq!(cfh_fit_labels(fit, labels.as_mut_ptr(), n), CfhStatus::Ok);
        let truth: Vec<i64> = (0..n as i64).map(|i| i % 2).collect();
        let ours: Vec<i64> = labels.iter().map(|&l| l as i64).collect();
        let mut score = 0.0;
        assert_eq!(
            cfh_ari(ours.as_ptr(), truth.as_ptr(), n, &mut score),
            CfhStatus::Ok
        );
        assert_eq!(score, 1.0);

        let mut flags = vec![7u8; n];
        assert_eq!(cfh_fit_outliers(fit, flags.as_mut_ptr(), n), CfhStatus::Ok);
        assert!(flags.iter().all(|f| *f <= 1));
        assert_eq!(
            cfh_fit_outliers(fit, flags.as_mut_ptr(), n - 1),
            CfhStatus::InvalidArgument
        );

        let mut too_big = ptr::null_mut();
        assert_eq!(
            cfh_fit(curves, basis, 2, 8, 1, 1, &mut too_big),
            CfhStatus::Selection
        );
        assert!(too_big.is_null());

        cfh_fit_free(fit);
        cfh_basis_free(basis);
        cfh_curves_free(curves);
    }
}

#[test]
fn simulated_handle() {
    unsafe {
        let mut curves = ptr::null_mut();
        assert_eq!(
            cfh_simulate(CfhDataset::Dataset2, 3, &mut curves),
            CfhStatus::Ok
        );
        assert_eq!(cfh_curves_len(curves), 1005);
        let mut basis = ptr::null_mut();
        assert_eq!(cfh_basis_new(curves, 2, 3, &mut basis), CfhStatus::Basis);
        assert!(basis.is_null());
        cfh_curves_free(curves);
    }
}
