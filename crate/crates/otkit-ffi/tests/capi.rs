//! Exercises the C ABI exactly as a foreign caller would: through raw
//! pointers and status codes. A final test compiles and runs a small C
//! program against the generated header.

use std::ffi::CStr;

use otkit_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(otk_last_error_message()).to_string_lossy().into_owned() }
}

#[test]
fn assign_scaled_roundtrip() {
    let values = [0.0, 1.0, 1.0, 0.0];
    let cost = unsafe { otk_cost_new(values.as_ptr(), 2, 2) };
    assert!(!cost.is_null());
    let mut sigma = [usize::MAX; 2];
    let mut psi = [f64::NAN; 2];
    let status =
        unsafe { otk_assign_scaled(cost, 1e-3, sigma.as_mut_ptr(), psi.as_mut_ptr()) };
    assert_eq!(status, OtkStatus::Ok);
    assert_eq!(sigma, [0, 1]);
    assert!(psi.iter().all(|p| p.is_finite()));
    unsafe { otk_cost_free(cost) };
}

#[test]
fn assign_rejects_nonpositive_eps_with_message() {
    let values = [0.0, 1.0, 1.0, 0.0];
    let cost = unsafe { otk_cost_new(values.as_ptr(), 2, 2) };
    let mut sigma = [0usize; 2];
    let mut psi = [0f64; 2];
    let status = unsafe { otk_assign(cost, 0.0, sigma.as_mut_ptr(), psi.as_mut_ptr()) };
    assert_eq!(status, OtkStatus::InvalidInput);
    assert!(last_error().contains("eps"), "message: {}", last_error());
    unsafe { otk_cost_free(cost) };
}

#[test]
fn null_pointers_are_reported_not_dereferenced() {
    let mut sigma = [0usize; 2];
    let mut psi = [0f64; 2];
    let status = unsafe {
        otk_assign(std::ptr::null(), 0.1, sigma.as_mut_ptr(), psi.as_mut_ptr())
    };
    assert_eq!(status, OtkStatus::NullPointer);
    let cost = unsafe { otk_cost_new(std::ptr::null(), 2, 2) };
    assert!(cost.is_null());
}

#[test]
fn sinkhorn_through_the_abi() {
    let values = [0.0, 1.0, 1.0, 0.0];
    let cost = unsafe { otk_cost_new(values.as_ptr(), 2, 2) };
    let mu = [0.5, 0.5];
    let nu = [0.5, 0.5];
    let mut plan = [0f64; 4];
    let mut phi = [0f64; 2];
    let mut psi = [0f64; 2];
    let status = unsafe {
        otk_sinkhorn(
            cost,
            mu.as_ptr(),
            nu.as_ptr(),
            1.0,
            1e-14,
            100_000,
            plan.as_mut_ptr(),
            phi.as_mut_ptr(),
            psi.as_mut_ptr(),
        )
    };
    assert_eq!(status, OtkStatus::Ok);
    let diag = 0.5 / (1.0 + (-1.0f64).exp());
    assert!((plan[0] - diag).abs() < 1e-12);
    assert!((plan[3] - diag).abs() < 1e-12);

    // Iteration cap reached on a skewed target: partial plan, NotConverged.
    let skewed = [0.25, 0.75];
    let status = unsafe {
        otk_sinkhorn(
            cost,
            mu.as_ptr(),
            skewed.as_ptr(),
            0.05,
            1e-14,
            1,
            plan.as_mut_ptr(),
            std::ptr::null_mut(),
            std::ptr::null_mut(),
        )
    };
    assert_eq!(status, OtkStatus::NotConverged);
    unsafe { otk_cost_free(cost) };
}

#[test]
fn semidiscrete_solvers_through_the_abi() {
    let density = otk_density_unit_square();
    let coords = [0.25, 0.5, 0.75, 0.5];
    let sites = unsafe { otk_sites_new(coords.as_ptr(), 2) };
    assert!(!sites.is_null());

    let psi0 = [0.0, 0.0];
    let mut masses = [0f64; 2];
    let status =
        unsafe { otk_laguerre_masses(sites, density, psi0.as_ptr(), masses.as_mut_ptr()) };
    assert_eq!(status, OtkStatus::Ok);
    assert!((masses[0] - 0.5).abs() < 1e-12);

    let nu = [0.25, 0.75];
    let mut psi = [0f64; 2];
    let status =
        unsafe { otk_semidiscrete_newton(sites, density, nu.as_ptr(), 1e-10, psi.as_mut_ptr()) };
    assert_eq!(status, OtkStatus::Ok);
    assert!((psi[0] - 1.0 / 16.0).abs() < 1e-8, "psi {psi:?}");

    let mut psi_op = [0f64; 2];
    let status =
        unsafe { otk_semidiscrete_op(sites, density, nu.as_ptr(), 1e-4, psi_op.as_mut_ptr()) };
    assert_eq!(status, OtkStatus::Ok);
    // Anchored at the first site: compare the price gap instead.
    assert!(((psi_op[0] - psi_op[1]) - 0.125).abs() < 1e-3, "psi_op {psi_op:?}");

    let mut psi_ent = [0f64; 2];
    let status = unsafe {
        otk_sd_entropic(sites, density, nu.as_ptr(), 0.01, 1e-9, 5, psi_ent.as_mut_ptr())
    };
    assert_eq!(status, OtkStatus::Ok);
    assert!((psi_ent[0] - 1.0 / 16.0).abs() < 0.05, "psi_ent {psi_ent:?}");

    unsafe {
        otk_sites_free(sites);
        otk_density_free(density);
    }
}

#[test]
fn duplicate_sites_yield_null_and_message() {
    let coords = [0.5, 0.5, 0.5, 0.5];
    let sites = unsafe { otk_sites_new(coords.as_ptr(), 2) };
    assert!(sites.is_null());
    assert!(last_error().contains("coincide"), "message: {}", last_error());
}

/// Compile and run a C consumer of the generated header against the cdylib.
#[test]
fn c_program_links_against_the_header() {
    use std::path::PathBuf;
    use std::process::Command;

    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let header_dir = manifest.join("include");
    assert!(header_dir.join("otkit.h").exists(), "cbindgen header missing");

    // The freshly built cdylib sits next to the test binary in deps/; the
    // copy one level up may be stale from an older build.
    let mut lib_dir = std::env::current_exe().unwrap();
    lib_dir.pop(); // the deps/ directory holding libotkit_ffi.so
    if !lib_dir.join("libotkit_ffi.so").exists() {
        lib_dir.pop();
    }
    let dir = tempfile::tempdir().unwrap();
    let c_src = dir.path().join("main.c");
    std::fs::write(
        &c_src,
        r#"
#include <stdio.h>
#include "otkit.h"

int main(void) {
    double values[4] = {0.0, 1.0, 1.0, 0.0};
    OtkCost *cost = otk_cost_new(values, 2, 2);
    if (!cost) return 1;
    size_t sigma[2];
    double psi[2];
    if (otk_assign_scaled(cost, 1e-3, sigma, psi) != Ok) return 2;
    otk_cost_free(cost);
    if (sigma[0] != 0 || sigma[1] != 1) return 3;
    printf("sigma = [%zu, %zu]\n", sigma[0], sigma[1]);
    return 0;
}
"#,
    )
    .unwrap();
    let exe = dir.path().join("capi_demo");
    let status = Command::new("cc")
        .arg(&c_src)
        .arg("-I")
        .arg(&header_dir)
        .arg("-L")
        .arg(&lib_dir)
        .arg("-lotkit_ffi")
        .arg("-o")
        .arg(&exe)
        .status()
        .expect("cc is available");
    assert!(status.success(), "compilation failed");
    let run = Command::new(&exe)
        .env("LD_LIBRARY_PATH", &lib_dir)
        .output()
        .expect("demo runs");
    assert!(run.status.success(), "demo exited with {:?}", run.status);
    assert_eq!(String::from_utf8_lossy(&run.stdout), "sigma = [0, 1]\n");
}
