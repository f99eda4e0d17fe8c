//! The Lévy system identity P_x(X_τ ∈ A) = E_x ∫₀^τ J_A(X_t) dt for a set A
//! at positive distance from D, and Harnack comparability of the resulting
//! harmonic function.

use std::f64::consts::PI;

use sbm_core::bernstein::PhiSpec;
use sbm_core::geometry::{norm, Domain};
use sbm_core::kernels::KernelEvaluator;
use sbm_core::montecarlo::{harmonic_mc, occupation_mc, PathParams, TargetSet};
use sbm_core::quadrature::gauss_legendre;

const INNER: f64 = 1.5;
const OUTER: f64 = 2.0;

/// J_A(|z|) = ∫_A j(|w − z|) dw for the shell A = {INNER < |w| < OUTER},
/// tabulated on [0, 1] and interpolated linearly.
fn shell_intensity(ev: &KernelEvaluator) -> impl Fn(&[f64]) -> f64 + Sync {
    let radial = gauss_legendre(24);
    let angular = gauss_legendre(48);
    let nodes = 41;
    let table: Vec<f64> = (0..nodes)
        .map(|i| {
            let s = i as f64 / (nodes - 1) as f64;
            let mut total = 0.0;
            for &(u, wu) in &radial {
                let rho = INNER + 0.5 * (OUTER - INNER) * (u + 1.0);
                for &(v, wv) in &angular {
                    let theta = PI * (v + 1.0);
                    let r = (rho * rho + s * s - 2.0 * rho * s * theta.cos()).sqrt();
                    total += wu * wv * rho * ev.levy_kernel_j(r).unwrap();
                }
            }
            total * 0.5 * (OUTER - INNER) * PI
        })
        .collect();
    move |z: &[f64]| {
        let pos = norm(z).min(1.0) * (nodes - 1) as f64;
        let i = (pos.floor() as usize).min(nodes - 2);
        let f = pos - i as f64;
        (1.0 - f) * table[i] + f * table[i + 1]
    }
}

fn shell() -> TargetSet {
    TargetSet::Shell {
        center: vec![0.0, 0.0],
        inner: INNER,
        outer: OUTER,
    }
}

#[test]
fn exit_by_jump_matches_occupation_of_intensity() {
    let spec = PhiSpec::stable_sum(1.2, 0.6).unwrap();
    let ball = Domain::unit_ball(2, 1.0).unwrap();
    let ev = KernelEvaluator::new(&spec, 2).unwrap();
    let j_a = shell_intensity(&ev);
    let params = PathParams::new(1e-3, 20_000, 5).unwrap();
    for x in [[0.0, 0.0], [0.6, 0.0]] {
        let hit = harmonic_mc(&spec, &ball, &shell(), &x, &params).unwrap();
        let occ = occupation_mc(&spec, &ball, &x, &j_a, "shell-intensity", &params).unwrap();
        let rel = hit.mean / occ.mean - 1.0;
        assert!(
            rel.abs() < 0.15,
            "x = {x:?}: P = {} ± {}, occupation = {} ± {}",
            hit.mean,
            hit.stderr,
            occ.mean,
            occ.stderr
        );
    }
}

#[test]
fn harmonic_function_satisfies_harnack_on_inner_ball() {
    let spec = PhiSpec::stable(1.0).unwrap();
    let ball = Domain::unit_ball(2, 1.0).unwrap();
    let params = PathParams::new(1e-2, 20_000, 8).unwrap();
    let values: Vec<f64> = [[0.0, 0.0], [0.3, 0.0], [0.0, -0.4], [-0.35, 0.35]]
        .iter()
        .map(|x| harmonic_mc(&spec, &ball, &shell(), x, &params).unwrap().mean)
        .collect();
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(0.0, f64::max);
    assert!(lo > 0.0 && hi / lo < 10.0, "{values:?}");
}
