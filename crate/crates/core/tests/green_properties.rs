//! Qualitative properties of the Monte Carlo Green function.

use sbm_core::bernstein::PhiSpec;
use sbm_core::geometry::Domain;
use sbm_core::montecarlo::{green_mc, PathParams};

fn params(n: usize, seed: u64) -> PathParams {
    PathParams::new(1e-2, n, seed).unwrap()
}

#[test]
fn symmetric_in_its_arguments() {
    let spec = PhiSpec::stable_sum(1.2, 0.6).unwrap();
    let ball = Domain::unit_ball(2, 1.0).unwrap();
    let (x, y) = ([0.2, 0.1], [-0.3, 0.4]);
    let a = green_mc(&spec, &ball, &x, &y, 0.05, &params(40_000, 1)).unwrap();
    let b = green_mc(&spec, &ball, &y, &x, 0.05, &params(40_000, 2)).unwrap();
    let se = (a.stderr.powi(2) + b.stderr.powi(2)).sqrt();
    assert!((a.mean - b.mean).abs() < 4.0 * se + 0.03 * a.mean, "{} vs {}", a.mean, b.mean);
}

#[test]
fn monotone_in_the_domain() {
    let spec = PhiSpec::stable(1.0).unwrap();
    let small = Domain::unit_ball(2, 0.7).unwrap();
    let big = Domain::unit_ball(2, 1.0).unwrap();
    let (x, y) = ([0.0, 0.0], [0.4, 0.0]);
    let g_small = green_mc(&spec, &small, &x, &y, 0.05, &params(20_000, 3)).unwrap();
    let g_big = green_mc(&spec, &big, &x, &y, 0.05, &params(20_000, 4)).unwrap();
    assert!(g_small.mean + 3.0 * g_small.stderr < g_big.mean, "{} vs {}", g_small.mean, g_big.mean);
}

#[test]
fn stderr_scales_like_inverse_square_root() {
    let spec = PhiSpec::stable(1.0).unwrap();
    let ball = Domain::unit_ball(2, 1.0).unwrap();
    let (x, y) = ([0.0, 0.0], [0.5, 0.0]);
    let a = green_mc(&spec, &ball, &x, &y, 0.05, &params(5_000, 6)).unwrap();
    let b = green_mc(&spec, &ball, &x, &y, 0.05, &params(20_000, 6)).unwrap();
    let ratio = a.stderr / b.stderr;
    assert!((1.7..2.3).contains(&ratio), "stderr ratio {ratio}");
}

#[test]
fn decays_towards_the_boundary() {
    let spec = PhiSpec::stable(1.0).unwrap();
    let ball = Domain::unit_ball(2, 1.0).unwrap();
    let x = [-0.3, 0.0];
    let g: Vec<f64> = [0.5, 0.8, 0.95]
        .iter()
        .map(|&y1| green_mc(&spec, &ball, &x, &[y1, 0.0], 0.02, &params(10_000, 9)).unwrap().mean)
        .collect();
    assert!(g[0] > g[1] && g[1] > g[2], "{g:?}");
}
