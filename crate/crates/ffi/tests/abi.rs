use std::ffi::CStr;
use std::ptr;

use topopriv_ffi::*;

fn last_error() -> String {
    let p = tp_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn ring(n: usize) -> Vec<f64> {
    let mut w = vec![0.0; n * n];
    for i in 0..n {
        w[i * n + i] = 0.5;
        w[i * n + (i + 1) % n] = 0.25;
        w[i * n + (i + n - 1) % n] = 0.25;
    }
    w
}

fn topology(w: &[f64], n: usize) -> *mut TpTopology {
    let mut t = ptr::null_mut();
    assert_eq!(unsafe { tp_topology_new(w.as_ptr(), n, &mut t) }, TpStatus::Ok);
    t
}

#[test]
fn laplacian_lifecycle() {
    let n = 5;
    let t = topology(&ring(n), n);
    unsafe {
        assert_eq!(tp_topology_n(t), n);
        let mut pi = vec![0.0; n];
        assert_eq!(tp_topology_stationary(t, pi.as_mut_ptr(), n), TpStatus::Ok);
        for p in &pi {
            assert!((p - 0.2).abs() < 1e-12);
        }

        let mut fb = ptr::null_mut();
        assert_eq!(tp_design_laplacian(t, f64::NAN, &mut fb), TpStatus::Ok);
        assert_eq!(tp_feedback_verified(fb), 1);
        let mut k = vec![0.0; n * n];
        assert_eq!(tp_feedback_matrix(fb, k.as_mut_ptr(), k.len()), TpStatus::Ok);
        for i in 0..n {
            let row: f64 = k[i * n..(i + 1) * n].iter().sum();
            assert!(row.abs() < 1e-12);
        }

        let json = tp_feedback_to_json(fb);
        assert!(!json.is_null());
        let text = CStr::from_ptr(json).to_str().unwrap().to_owned();
        tp_string_free(json);
        assert!(text.contains("\"laplacian\""));

        tp_feedback_free(fb);
        tp_topology_free(t);
    }
}

#[test]
fn simulate_and_estimate_recover_the_weights() {
    let n = 4;
    // distinct eigenvalues, so one generic trajectory excites every mode
    let w = vec![
        0.5, 0.3, 0.0, 0.2, //
        0.1, 0.6, 0.3, 0.0, //
        0.0, 0.2, 0.7, 0.1, //
        0.4, 0.0, 0.1, 0.5,
    ];
    let t = topology(&w, n);
    let x0 = [1.0, -2.0, 0.5, 3.0];
    let horizon = 12;
    let mut states = vec![0.0; (horizon + 1) * n];
    unsafe {
        let s = tp_simulate(t, ptr::null(), x0.as_ptr(), horizon, states.as_mut_ptr(), states.len());
        assert_eq!(s, TpStatus::Ok);
        assert_eq!(&states[..n], &x0);

        let mut est = vec![0.0; n * n];
        let s = tp_ols_estimate(states.as_ptr(), n, horizon + 1, est.as_mut_ptr(), est.len());
        assert_eq!(s, TpStatus::Ok, "{}", last_error());

        let (mut er1, mut er2, mut gamma) = (0.0, 0.0, 0.0);
        let s = tp_inference_errors(est.as_ptr(), w.as_ptr(), n, &mut er1, &mut er2, &mut gamma);
        assert_eq!(s, TpStatus::Ok);
        assert!(er1 < 1e-6, "er1 = {er1}");
        assert!(er2 < 1e-6);
        assert!((gamma - 1.0).abs() < 1e-6);
        tp_topology_free(t);
    }
}

#[test]
fn distributed_design_keeps_row_sums() {
    let n = 6;
    let mut t = ptr::null_mut();
    unsafe {
        assert_eq!(tp_topology_random(n, 0.5, 3, &mut t), TpStatus::Ok);
        let x0: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let mut fb = ptr::null_mut();
        assert_eq!(tp_design_distributed(t, x0.as_ptr(), 1.0, 7, &mut fb), TpStatus::Ok);
        let mut k = vec![0.0; n * n];
        assert_eq!(tp_feedback_matrix(fb, k.as_mut_ptr(), k.len()), TpStatus::Ok);
        for i in 0..n {
            let row = &k[i * n..(i + 1) * n];
            assert!(row.iter().sum::<f64>().abs() < 1e-9);
            assert!(row.iter().map(|v| v.abs()).sum::<f64>() <= 1.0 + 1e-12);
        }
        tp_feedback_free(fb);
        tp_topology_free(t);
    }
}

#[test]
fn errors_map_to_status_codes() {
    unsafe {
        let mut t = ptr::null_mut();
        let bad = [0.5, 0.2, 0.5, 0.5];
        assert_eq!(tp_topology_new(bad.as_ptr(), 2, &mut t), TpStatus::InvalidArgument);
        assert!(t.is_null());
        assert!(!last_error().is_empty());

        assert_eq!(tp_topology_new(ptr::null(), 2, &mut t), TpStatus::NullPointer);

        let n = 4;
        let t = topology(&ring(n), n);
        // full observation leaves nothing to hide
        let mut c = vec![0.0; n * n];
        for i in 0..n {
            c[i * n + i] = 1.0;
        }
        let mut fb = ptr::null_mut();
        assert_eq!(tp_design_unobservable(t, c.as_ptr(), n, 0, &mut fb), TpStatus::Infeasible);
        assert!(fb.is_null());

        let mut pi = vec![0.0; n + 1];
        assert_eq!(tp_topology_stationary(t, pi.as_mut_ptr(), n + 1), TpStatus::BufferSize);
        assert!(last_error().contains("need 4"));

        assert_eq!(tp_design_distributed(t, [0.0; 4].as_ptr(), -1.0, 0, &mut fb), TpStatus::InvalidArgument);
        tp_topology_free(t);
    }
}

#[test]
fn null_handles_are_tolerated() {
    unsafe {
        tp_topology_free(ptr::null_mut());
        tp_feedback_free(ptr::null_mut());
        tp_string_free(ptr::null_mut());
        assert_eq!(tp_topology_n(ptr::null()), 0);
        assert_eq!(tp_feedback_verified(ptr::null()), 0);
        assert!(tp_feedback_to_json(ptr::null()).is_null());
        let mut fb = ptr::null_mut();
        assert_eq!(tp_design_kernel_pb(ptr::null(), 0, &mut fb), TpStatus::NullPointer);
    }
}

#[test]
fn header_declares_every_entry_point() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/topopriv.h")).unwrap();
    for name in [
        "tp_last_error_message",
        "tp_topology_new",
        "tp_topology_random",
        "tp_topology_free",
        "tp_topology_stationary",
        "tp_design_laplacian",
        "tp_design_kernel_pb",
        "tp_design_unobservable",
        "tp_design_invariant_subspace",
        "tp_design_distributed",
        "tp_feedback_matrix",
        "tp_feedback_to_json",
        "tp_simulate",
        "tp_ols_estimate",
        "tp_inference_errors",
        "TP_STATUS_INFEASIBLE = 3",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }
}
