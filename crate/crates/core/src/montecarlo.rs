//! Simulation of subordinate Brownian motion killed on leaving a region.
//!
//! Paths live on a time grid of mesh `dt`. Each step draws a subordinator
//! increment ΔS and moves by a Gaussian with per-coordinate variance 2ΔS.
//! A path is killed at the first grid point outside the region; no bridge
//! correction is applied, so estimates carry an O(dt)-type bias.
//!
//! Path `i` draws from `ChaCha8Rng::seed_from_u64(seed)` on stream `i`.
//! Paths are grouped in fixed chunks whose statistics are merged pairwise,
//! so results do not depend on the number of worker threads.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use statrs::function::erf::{erf, erfc};
use statrs::function::gamma::{gamma, gamma_lr};

use crate::bernstein::{Family, PhiSpec};
use crate::error::{Error, Result};
use crate::geometry::{dist, BallPiece, Domain, Region};
use crate::quadrature::gauss_legendre;

/// Paths per chunk; fixed so the reduction tree is independent of threads.
const CHUNK: usize = 256;

/// Rejection attempts allowed per relativistic increment.
pub const RELATIVISTIC_RETRY_CAP: u64 = 1_000_000;

/// Fraction of paths allowed to hit `max_steps` before an estimate is flagged.
pub const EXHAUSTION_TOLERANCE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathParams {
    pub dt: f64,
    pub max_steps: usize,
    pub seed: u64,
    pub n_paths: usize,
}

impl Default for PathParams {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            max_steps: 200_000,
            seed: 0,
            n_paths: 10_000,
        }
    }
}

impl PathParams {
    pub fn new(dt: f64, n_paths: usize, seed: u64) -> Result<Self> {
        let p = Self {
            dt,
            n_paths,
            seed,
            ..Self::default()
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_max_steps(mut self, max_steps: usize) -> Self {
        self.max_steps = max_steps;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Domain(format!("dt must be positive, got {}", self.dt)));
        }
        if self.n_paths == 0 || self.max_steps == 0 {
            return Err(Error::Domain("n_paths and max_steps must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
    pub config_hash: String,
    #[serde(default)]
    pub flags: Vec<String>,
}

impl McEstimate {
    pub fn is_reliable(&self) -> bool {
        self.flags.is_empty()
    }
}

/// Linear extrapolation to dt = 0 from estimates at `dt_coarse` and `dt_fine`.
pub fn extrapolate_dt(coarse: &McEstimate, dt_coarse: f64, fine: &McEstimate, dt_fine: f64) -> Result<McEstimate> {
    if !(dt_fine > 0.0 && dt_fine < dt_coarse) {
        return Err(Error::Domain("need 0 < dt_fine < dt_coarse".into()));
    }
    let c = dt_fine / (dt_coarse - dt_fine);
    let mut flags = coarse.flags.clone();
    flags.extend(fine.flags.iter().cloned());
    Ok(McEstimate {
        mean: fine.mean + c * (fine.mean - coarse.mean),
        stderr: (((1.0 + c) * fine.stderr).powi(2) + (c * coarse.stderr).powi(2)).sqrt(),
        n: coarse.n + fine.n,
        config_hash: digest(&format!("extrapolate|{}|{}", coarse.config_hash, fine.config_hash)),
        flags,
    })
}

/// Seed for a named sub-run, so independent estimates in one job do not
/// share random streams.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    let h = Sha256::digest(format!("{seed}|{label}").as_bytes());
    u64::from_le_bytes(h[..8].try_into().expect("digest has 32 bytes"))
}

fn digest(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

fn config_hash(op: &str, spec: &PhiSpec, region: &str, params: &PathParams, extra: &str) -> String {
    digest(&format!(
        "{op}|{spec}|{region}|dt={:e}|max_steps={}|seed={}|n={}|{extra}",
        params.dt, params.max_steps, params.seed, params.n_paths
    ))
}

/// Subordinator increments over a fixed step.
#[derive(Debug, Clone, Copy)]
pub enum IncrementSampler {
    Stable { rho: f64, scale: f64 },
    Relativistic { rho: f64, scale: f64, theta: f64 },
    Sum { rho1: f64, scale1: f64, rho2: f64, scale2: f64 },
}

/// Positive ρ-stable variate with E e^{-λS} = e^{-λ^ρ} (Kanter's
/// representation).
fn positive_stable<R: Rng + ?Sized>(rho: f64, rng: &mut R) -> f64 {
    loop {
        let u = PI * rng.random::<f64>();
        let e: f64 = rng.sample(Exp1);
        if u <= 0.0 || e <= 0.0 {
            continue;
        }
        let s = (rho * u).sin() / u.sin().powf(1.0 / rho) * (((1.0 - rho) * u).sin() / e).powf((1.0 - rho) / rho);
        if s.is_finite() && s > 0.0 {
            return s;
        }
    }
}

impl IncrementSampler {
    pub fn new(spec: &PhiSpec, dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::Domain(format!("dt must be positive, got {dt}")));
        }
        let rho = spec.rho();
        match spec.family() {
            Family::Stable => Ok(Self::Stable {
                rho,
                scale: dt.powf(1.0 / rho),
            }),
            Family::Relativistic { mass } => Ok(Self::Relativistic {
                rho,
                scale: dt.powf(1.0 / rho),
                theta: mass.powf(1.0 / rho),
            }),
            Family::StableSum { beta } => {
                let rho2 = 0.5 * beta;
                Ok(Self::Sum {
                    rho1: rho,
                    scale1: dt.powf(1.0 / rho),
                    rho2,
                    scale2: dt.powf(1.0 / rho2),
                })
            }
            _ => Err(Error::Unsupported(format!("no exact sampler for {spec}"))),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        match *self {
            Self::Stable { rho, scale } => Ok(scale * positive_stable(rho, rng)),
            Self::Relativistic { rho, scale, theta } => {
                for _ in 0..RELATIVISTIC_RETRY_CAP {
                    let s = scale * positive_stable(rho, rng);
                    if rng.random::<f64>() < (-theta * s).exp() {
                        return Ok(s);
                    }
                }
                Err(Error::Check("relativistic sampler exceeded its retry cap".into()))
            }
            Self::Sum { rho1, scale1, rho2, scale2 } => {
                Ok(scale1 * positive_stable(rho1, rng) + scale2 * positive_stable(rho2, rng))
            }
        }
    }
}

/// One increment of S over `dt`.
pub fn sample_subordinator_increment<R: Rng + ?Sized>(spec: &PhiSpec, dt: f64, rng: &mut R) -> Result<f64> {
    IncrementSampler::new(spec, dt)?.sample(rng)
}

/// Move `x` in place by a Gaussian with per-coordinate variance 2·`ds`.
pub fn step_in_place<R: Rng + ?Sized>(x: &mut [f64], ds: f64, rng: &mut R) {
    let s = (2.0 * ds).sqrt();
    for c in x.iter_mut() {
        let z: f64 = rng.sample(StandardNormal);
        *c += s * z;
    }
}

pub fn step_position<R: Rng + ?Sized>(x: &[f64], ds: f64, rng: &mut R) -> Result<Vec<f64>> {
    if !(ds > 0.0) {
        return Err(Error::Domain(format!("dS must be positive, got {ds}")));
    }
    let mut y = x.to_vec();
    step_in_place(&mut y, ds, rng);
    Ok(y)
}

pub fn path_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

#[derive(Debug, Clone)]
pub struct PathEnd {
    /// Grid index of the first point outside the region.
    pub steps: usize,
    pub exit_point: Vec<f64>,
    pub exhausted: bool,
}

/// Run one path from `x0`. At every grid point inside `region` before the
/// first point outside it, `visit` receives the point and the subordinator
/// increment of the step about to be taken.
pub fn simulate_path<R: Rng + ?Sized>(
    sampler: &IncrementSampler,
    region: &dyn Region,
    x0: &[f64],
    max_steps: usize,
    rng: &mut R,
    mut visit: impl FnMut(&[f64], f64),
) -> Result<PathEnd> {
    let mut x = x0.to_vec();
    let mut k = 0;
    while region.contains(&x) {
        if k == max_steps {
            return Ok(PathEnd {
                steps: k,
                exit_point: x,
                exhausted: true,
            });
        }
        let ds = sampler.sample(rng)?;
        visit(&x, ds);
        step_in_place(&mut x, ds, rng);
        k += 1;
    }
    Ok(PathEnd {
        steps: k,
        exit_point: x,
        exhausted: false,
    })
}

/// Running statistics for several outputs per path.
#[derive(Debug, Clone)]
struct Stats {
    n: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
    exhausted: usize,
}

impl Stats {
    fn new(k: usize) -> Self {
        Self {
            n: 0,
            mean: vec![0.0; k],
            m2: vec![0.0; k],
            exhausted: 0,
        }
    }

    fn push(&mut self, values: &[f64], exhausted: bool) {
        self.n += 1;
        let n = self.n as f64;
        for ((m, s), v) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(values) {
            let delta = v - *m;
            *m += delta / n;
            *s += delta * (v - *m);
        }
        self.exhausted += exhausted as usize;
    }

    fn merge(a: Self, b: Self) -> Self {
        if a.n == 0 {
            return b;
        }
        if b.n == 0 {
            return a;
        }
        let n = a.n + b.n;
        let (na, nb, nn) = (a.n as f64, b.n as f64, n as f64);
        let mut mean = Vec::with_capacity(a.mean.len());
        let mut m2 = Vec::with_capacity(a.mean.len());
        for i in 0..a.mean.len() {
            let delta = b.mean[i] - a.mean[i];
            mean.push(a.mean[i] + delta * nb / nn);
            m2.push(a.m2[i] + b.m2[i] + delta * delta * na * nb / nn);
        }
        Self {
            n,
            mean,
            m2,
            exhausted: a.exhausted + b.exhausted,
        }
    }
}

fn merge_pairwise(mut parts: Vec<Stats>) -> Stats {
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some(a) = it.next() {
            next.push(match it.next() {
                Some(b) => Stats::merge(a, b),
                None => a,
            });
        }
        parts = next;
    }
    parts.pop().expect("at least one chunk")
}

/// Run `params.n_paths` paths; `path` returns k outputs and whether the path
/// was cut at `max_steps`.
fn run_paths<F>(params: &PathParams, k: usize, path: F) -> Result<Stats>
where
    F: Fn(&mut ChaCha8Rng, &mut [f64]) -> Result<bool> + Sync,
{
    params.validate()?;
    let chunks = params.n_paths.div_ceil(CHUNK);
    let parts = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut stats = Stats::new(k);
            let mut out = vec![0.0; k];
            for i in c * CHUNK..((c + 1) * CHUNK).min(params.n_paths) {
                let mut rng = path_rng(params.seed, i);
                out.iter_mut().for_each(|v| *v = 0.0);
                let exhausted = path(&mut rng, &mut out)?;
                stats.push(&out, exhausted);
            }
            Ok(stats)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(merge_pairwise(parts))
}

fn estimates(stats: &Stats, hashes: Vec<String>) -> Vec<McEstimate> {
    let n = stats.n;
    let mut flags = Vec::new();
    if stats.exhausted as f64 > EXHAUSTION_TOLERANCE * n as f64 {
        flags.push(format!("max_steps exhausted on {} of {n} paths", stats.exhausted));
    }
    stats
        .mean
        .iter()
        .zip(&stats.m2)
        .zip(hashes)
        .map(|((m, m2), config_hash)| {
            let var = if n > 1 { (m2 / (n - 1) as f64).max(0.0) } else { 0.0 };
            McEstimate {
                mean: *m,
                stderr: (var / n as f64).sqrt(),
                n,
                config_hash,
                flags: flags.clone(),
            }
        })
        .collect()
}

fn ball_volume(d: usize, r: f64) -> f64 {
    PI.powf(0.5 * d as f64) / gamma(0.5 * d as f64 + 1.0) * r.powi(d as i32)
}

fn fmt_point(p: &[f64]) -> String {
    let parts: Vec<String> = p.iter().map(|c| format!("{c:e}")).collect();
    format!("({})", parts.join(","))
}

const BALL_RULE_NODES: usize = 32;
/// Gaussian tails beyond this many standard deviations are dropped.
const BALL_CUTOFF: f64 = 8.0;

/// P(|m e₁ + σZ| < ρ) for a standard Gaussian Z in ℝ^d: an integral over the
/// first coordinate of the χ²_{d−1} distribution function of the rest.
pub fn ball_probability(m: f64, sigma: f64, rho: f64, d: usize, rule: &[(f64, f64)]) -> f64 {
    if m >= rho + BALL_CUTOFF * sigma {
        return 0.0;
    }
    if m + BALL_CUTOFF * sigma <= rho {
        return 1.0;
    }
    let normal_cdf = |z: f64| 0.5 * erfc(-z / std::f64::consts::SQRT_2);
    if d == 1 {
        return normal_cdf((rho - m) / sigma) - normal_cdf((-rho - m) / sigma);
    }
    let a = (-rho).max(m - BALL_CUTOFF * sigma);
    let b = rho.min(m + BALL_CUTOFF * sigma);
    let (half, mid) = (0.5 * (b - a), 0.5 * (b + a));
    let k = 0.5 * (d - 1) as f64;
    let mut total = 0.0;
    for &(node, weight) in rule {
        let t = mid + half * node;
        let z = (t - m) / sigma;
        let q = ((rho * rho - t * t) / (2.0 * sigma * sigma)).max(0.0);
        let rest = match d {
            2 => erf(q.sqrt()),
            3 => -(-q).exp_m1(),
            _ => gamma_lr(k, q),
        };
        total += weight * (-0.5 * z * z).exp() * rest;
    }
    (total * half / (sigma * (2.0 * PI).sqrt())).clamp(0.0, 1.0)
}

/// A ball B(center, radius) over which occupation time is averaged.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupationTarget {
    pub center: Vec<f64>,
    pub radius: f64,
}

/// Ball-averaged Green function G_D(x, ·) at several targets from one set of
/// paths started at `x`.
///
/// The estimator is the grid sum dt·Σ_k 1_B(X_k)/|B| over k < τ, with each
/// indicator for k ≥ 1 replaced by its conditional expectation given X_{k−1}
/// and ΔS_k. The mean is unchanged and the variance can only drop; in
/// particular targets reached only by long jumps still collect mass.
pub fn green_mc_multi(
    spec: &PhiSpec,
    domain: &Domain,
    x: &[f64],
    targets: &[OccupationTarget],
    params: &PathParams,
) -> Result<Vec<McEstimate>> {
    let d = domain.dim();
    if x.len() != d || !domain.contains_point(x) {
        return Err(Error::Domain("start point must lie in the domain".into()));
    }
    for t in targets {
        if t.center.len() != d || !(t.radius > 0.0) || domain.delta(&t.center) < t.radius {
            return Err(Error::Domain(format!(
                "target ball {} of radius {} must lie in the domain",
                fmt_point(&t.center),
                t.radius
            )));
        }
    }
    let sampler = IncrementSampler::new(spec, params.dt)?;
    // sweep targets by first coordinate
    let mut order: Vec<usize> = (0..targets.len()).collect();
    order.sort_by(|&a, &b| targets[a].center[0].total_cmp(&targets[b].center[0]));
    let keys: Vec<f64> = order.iter().map(|&i| targets[i].center[0]).collect();
    let r_max = targets.iter().map(|t| t.radius).fold(0.0, f64::max);
    let weights: Vec<f64> = targets.iter().map(|t| params.dt / ball_volume(d, t.radius)).collect();
    let rule = gauss_legendre(BALL_RULE_NODES);

    let stats = run_paths(params, targets.len(), |rng, out| {
        // the grid point k = 0 is deterministic
        for (i, t) in targets.iter().enumerate() {
            if dist(x, &t.center) < t.radius {
                out[i] += weights[i];
            }
        }
        // for k ≥ 1 the indicator of B at X_k is replaced by its conditional
        // probability given X_{k−1} and the increment ΔS_k
        let end = simulate_path(&sampler, domain, x, params.max_steps, rng, |p, ds| {
            let sigma = (2.0 * ds).sqrt();
            let reach = r_max + BALL_CUTOFF * sigma;
            let lo = keys.partition_point(|k| *k < p[0] - reach);
            for (&key, &i) in keys[lo..].iter().zip(&order[lo..]) {
                if key > p[0] + reach {
                    break;
                }
                let m = dist(p, &targets[i].center);
                let prob = ball_probability(m, sigma, targets[i].radius, d, &rule);
                if prob > 0.0 {
                    out[i] += weights[i] * prob;
                }
            }
        })?;
        Ok(end.exhausted)
    })?;
    let hashes = targets
        .iter()
        .map(|t| {
            config_hash(
                "green",
                spec,
                &domain.to_string(),
                params,
                &format!("x={}|y={}|rho={:e}", fmt_point(x), fmt_point(&t.center), t.radius),
            )
        })
        .collect();
    Ok(estimates(&stats, hashes))
}

/// (1/|B(y,ρ)|) E_x ∫₀^{τ_D} 1_{B(y,ρ)}(X_t) dt.
pub fn green_mc(spec: &PhiSpec, domain: &Domain, x: &[f64], y: &[f64], rho: f64, params: &PathParams) -> Result<McEstimate> {
    if !domain.contains_point(y) {
        return Err(Error::Domain("y must lie in the domain".into()));
    }
    let target = OccupationTarget {
        center: y.to_vec(),
        radius: rho,
    };
    Ok(green_mc_multi(spec, domain, x, &[target], params)?.remove(0))
}

/// E_x ∫₀^τ f(X_t) dt over `region`, by left Riemann sums.
pub fn occupation_mc(
    spec: &PhiSpec,
    region: &dyn Region,
    x: &[f64],
    f: &(dyn Fn(&[f64]) -> f64 + Sync),
    label: &str,
    params: &PathParams,
) -> Result<McEstimate> {
    let sampler = IncrementSampler::new(spec, params.dt)?;
    let stats = run_paths(params, 1, |rng, out| {
        let end = simulate_path(&sampler, region, x, params.max_steps, rng, |p, _| out[0] += f(p))?;
        out[0] *= params.dt;
        Ok(end.exhausted)
    })?;
    let hash = config_hash("occupation", spec, &region.describe(), params, &format!("x={}|f={label}", fmt_point(x)));
    Ok(estimates(&stats, vec![hash]).remove(0))
}

/// Sets the exit position is tested against.
#[derive(Debug, Clone, PartialEq)]
pub enum TargetSet {
    Everything,
    Ball { center: Vec<f64>, radius: f64 },
    /// {inner < |z − center| < outer}.
    Shell { center: Vec<f64>, inner: f64, outer: f64 },
    /// {|z − center| ≥ radius}.
    OutsideBall { center: Vec<f64>, radius: f64 },
}

impl Region for TargetSet {
    fn contains(&self, z: &[f64]) -> bool {
        match self {
            Self::Everything => true,
            Self::Ball { center, radius } => dist(z, center) < *radius,
            Self::Shell { center, inner, outer } => {
                let r = dist(z, center);
                *inner < r && r < *outer
            }
            Self::OutsideBall { center, radius } => dist(z, center) >= *radius,
        }
    }

    fn describe(&self) -> String {
        match self {
            Self::Everything => "everything".into(),
            Self::Ball { center, radius } => format!("ball{}:{radius:e}", fmt_point(center)),
            Self::Shell { center, inner, outer } => format!("shell{}:{inner:e}:{outer:e}", fmt_point(center)),
            Self::OutsideBall { center, radius } => format!("outside{}:{radius:e}", fmt_point(center)),
        }
    }
}

/// P_x(X_{τ} ∈ target) for the first exit τ from `piece`.
pub fn harmonic_mc(
    spec: &PhiSpec,
    piece: &dyn Region,
    target: &dyn Region,
    x: &[f64],
    params: &PathParams,
) -> Result<McEstimate> {
    let sampler = IncrementSampler::new(spec, params.dt)?;
    let stats = run_paths(params, 1, |rng, out| {
        let end = simulate_path(&sampler, piece, x, params.max_steps, rng, |_, _| {})?;
        if !end.exhausted && target.contains(&end.exit_point) {
            out[0] = 1.0;
        }
        Ok(end.exhausted)
    })?;
    let hash = config_hash(
        "harmonic",
        spec,
        &piece.describe(),
        params,
        &format!("x={}|target={}", fmt_point(x), target.describe()),
    );
    Ok(estimates(&stats, vec![hash]).remove(0))
}

/// Exit from D ∩ B(q, r): probability of landing in D and mean exit time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExitEstimate {
    pub probability: McEstimate,
    pub mean_exit_time: McEstimate,
}

pub fn exit_into_domain_mc(
    spec: &PhiSpec,
    domain: &Domain,
    q: &[f64],
    r: f64,
    x: &[f64],
    params: &PathParams,
) -> Result<ExitEstimate> {
    let piece = BallPiece {
        domain: domain.clone(),
        center: q.to_vec(),
        radius: r,
    };
    if !piece.contains(x) {
        return Err(Error::Domain("x must lie in D ∩ B(Q, r)".into()));
    }
    let sampler = IncrementSampler::new(spec, params.dt)?;
    let stats = run_paths(params, 2, |rng, out| {
        let end = simulate_path(&sampler, &piece, x, params.max_steps, rng, |_, _| {})?;
        if !end.exhausted && domain.contains_point(&end.exit_point) {
            out[0] = 1.0;
        }
        out[1] = end.steps as f64 * params.dt;
        Ok(end.exhausted)
    })?;
    let base = format!("x={}", fmt_point(x));
    let mut est = estimates(
        &stats,
        vec![
            config_hash("exit-probability", spec, &piece.describe(), params, &base),
            config_hash("exit-time", spec, &piece.describe(), params, &base),
        ],
    );
    let mean_exit_time = est.pop().expect("two outputs");
    let probability = est.pop().expect("two outputs");
    Ok(ExitEstimate {
        probability,
        mean_exit_time,
    })
}
