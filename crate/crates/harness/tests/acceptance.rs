//! The ten acceptance criteria. Each test prints one pass/fail line.
//!
//! The lines go straight to the stderr handle, so they show even when libtest
//! captures output.

use std::io::Write;

use gaussian_polymer_harness::acceptance::{run_criterion, Context};

const SEED: u64 = 1;

fn check(id: u8) {
    let work = tempfile::tempdir().unwrap();
    let ctx = Context {
        seed: SEED,
        threads: 0,
        work_dir: work.path().to_path_buf(),
    };
    let r = run_criterion(id, &ctx).unwrap();
    let _ = writeln!(std::io::stderr(), "{r}");
    assert!(r.pass, "{r}");
}

#[test]
fn criterion_01_kernel_bound() {
    check(1);
}

#[test]
fn criterion_02_renewal_identity() {
    check(2);
}

#[test]
fn criterion_03_second_moment() {
    check(3);
}

#[test]
fn criterion_04_chaos_oracle() {
    check(4);
}

#[test]
fn criterion_05_moment_convergence() {
    check(5);
}

#[test]
fn criterion_06_erdos_taylor() {
    check(6);
}

#[test]
fn criterion_07_diagram_suite() {
    check(7);
}

#[test]
fn criterion_08_khasminskii() {
    check(8);
}

#[test]
fn criterion_09_martingale() {
    check(9);
}

#[test]
fn criterion_10_reproducibility() {
    check(10);
}
