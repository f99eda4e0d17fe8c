//! Right-hand sides of the Green function and boundary estimates, and the
//! empirical checks that compare them with simulated values.
//!
//! Every check produces one or more [`RatioReport`]s. The first report of a
//! claim is the claim itself; later ones are auxiliary comparisons run on the
//! same samples.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bernstein::PhiSpec;
use crate::error::{Error, Result};
use crate::fluctuation::FluctuationTable;
use crate::geometry::{dist, pick_a, ABranch, BallPiece, Domain, KappaFatSetup};
use crate::kernels::KernelEvaluator;
use crate::montecarlo::{
    derive_seed, exit_into_domain_mc, green_mc_multi, harmonic_mc, McEstimate, OccupationTarget, PathParams, TargetSet,
};
use crate::report::{RatioReport, Sample};

/// Default spread cap for claims whose left side is simulated.
pub const MC_CAP: f64 = 100.0;
/// Default spread cap for comparisons between quadrature values.
pub const QUAD_CAP: f64 = 10.0;
/// Default spread cap for boundary decay checks.
pub const BOUNDARY_CAP: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Claim {
    /// Two-sided estimate in C^{1,1} sets.
    Gest21,
    /// Two-sided estimate in κ-fat sets.
    Gest,
    /// Boundary Harnack principle with decay rate V(δ_D).
    Bhp,
    /// Interior estimate G_D(x, y) ≍ G(x, y) away from the boundary.
    Interior,
    /// g(x) ≍ V(δ_D(x)) ∧ 1.
    GeAsymp,
}

impl Claim {
    pub const ALL: [Claim; 5] = [Claim::Gest21, Claim::Gest, Claim::Bhp, Claim::Interior, Claim::GeAsymp];
}

impl fmt::Display for Claim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Claim::Gest21 => "gest21",
            Claim::Gest => "gest",
            Claim::Bhp => "bhp",
            Claim::Interior => "interior",
            Claim::GeAsymp => "ge",
        })
    }
}

impl FromStr for Claim {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gest21" => Ok(Claim::Gest21),
            "gest" => Ok(Claim::Gest),
            "bhp" => Ok(Claim::Bhp),
            "interior" => Ok(Claim::Interior),
            "ge" | "geasymp" => Ok(Claim::GeAsymp),
            other => Err(Error::Parse(format!("unknown claim `{other}`"))),
        }
    }
}

/// The three equivalent right-hand sides of the C^{1,1} estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RhsForms {
    /// (1 ∧ (δδ′)^{α/2} ℓ(r⁻²) / (√(ℓ(δ⁻²)ℓ(δ′⁻²)) r^α)) / (ℓ(r⁻²) r^{d−α}).
    pub ell: f64,
    /// (1 ∧ φ(r⁻²)/√(φ(δ⁻²)φ(δ′⁻²))) / (r^d φ(r⁻²)).
    pub phi: f64,
    /// (1 ∧ V(δ)V(δ′)/V(r)²) G(r).
    pub v: f64,
}

pub fn rhs_c11(table: &FluctuationTable, ev: &KernelEvaluator, domain: &Domain, x: &[f64], y: &[f64]) -> Result<RhsForms> {
    let (dx, dy) = (domain.delta(x), domain.delta(y));
    if dx <= 0.0 || dy <= 0.0 {
        return Err(Error::Domain("both points must lie in the domain".into()));
    }
    let r = dist(x, y);
    if r == 0.0 {
        return Err(Error::Singular("x = y".into()));
    }
    let spec = ev.spec();
    let alpha = spec.alpha();
    let d = domain.dim() as f64;
    let (ir, ix, iy) = (r.powi(-2), dx.powi(-2), dy.powi(-2));

    let bracket = (dx * dy).powf(0.5 * alpha) * spec.ell(ir) / ((spec.ell(ix) * spec.ell(iy)).sqrt() * r.powf(alpha));
    let ell = bracket.min(1.0) / (spec.ell(ir) * r.powf(d - alpha));

    let bracket = (spec.ln_phi(ir) - 0.5 * (spec.ln_phi(ix) + spec.ln_phi(iy))).exp();
    let phi = bracket.min(1.0) / (r.powf(d) * spec.phi(ir));

    let (vx, vy, vr) = (
        table.renewal_extended(dx)?,
        table.renewal_extended(dy)?,
        table.renewal_extended(r)?,
    );
    let v = (vx * vy / (vr * vr)).min(1.0) * ev.free_green_g(r)?;
    Ok(RhsForms { ell, phi, v })
}

/// Tabulated g = Ĝ_D(·, z₀) ∧ g_cap at a fixed set of points.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GTable {
    pub z0: Vec<f64>,
    pub g_cap: f64,
    pub points: Vec<Vec<f64>>,
    pub estimates: Vec<McEstimate>,
}

impl GTable {
    /// Ĝ_D(p, z₀) without the cap; infinite at z₀ itself.
    pub fn raw(&self, p: &[f64]) -> Result<f64> {
        if p == self.z0.as_slice() {
            return Ok(f64::INFINITY);
        }
        self.points
            .iter()
            .position(|q| q.as_slice() == p)
            .map(|i| self.estimates[i].mean)
            .ok_or_else(|| Error::Coverage(format!("g table has no entry at {p:?}")))
    }

    pub fn g(&self, p: &[f64]) -> Result<f64> {
        Ok(self.raw(p)?.min(self.g_cap))
    }

    pub fn flags(&self) -> Vec<String> {
        collect_flags(&self.estimates)
    }
}

fn collect_flags(estimates: &[McEstimate]) -> Vec<String> {
    let mut flags: Vec<String> = estimates.iter().flat_map(|e| e.flags.iter().cloned()).collect();
    flags.sort();
    flags.dedup();
    flags
}

fn push_unique(points: &mut Vec<Vec<f64>>, p: Vec<f64>) {
    if !points.contains(&p) {
        points.push(p);
    }
}

/// Estimate Ĝ_D(p, z₀) for every point by running paths from z₀, and set
/// the cap to the largest estimate at distance ≥ δ_D(z₀)/2 from z₀.
///
/// Probe points at distance 0.55·δ_D(z₀) along each axis are added so the
/// cap reflects the largest values of the cap region.
pub fn build_g_table(
    spec: &PhiSpec,
    setup: &KappaFatSetup,
    points: &[Vec<f64>],
    rho_max: f64,
    params: &PathParams,
) -> Result<GTable> {
    let domain = &setup.domain;
    let z0 = &setup.z0;
    let depth0 = domain.delta(z0);
    let mut all: Vec<Vec<f64>> = Vec::new();
    for p in points {
        if p != z0 {
            push_unique(&mut all, p.clone());
        }
    }
    for axis in 0..domain.dim() {
        for sign in [-1.0, 1.0] {
            let mut p = z0.clone();
            p[axis] += sign * 0.55 * depth0;
            if domain.contains_point(&p) {
                push_unique(&mut all, p);
            }
        }
    }
    let mut targets = Vec::with_capacity(all.len());
    for p in &all {
        let radius = rho_max.min(0.5 * domain.delta(p)).min(0.5 * dist(p, z0));
        if !(radius > 0.0) {
            return Err(Error::Domain(format!("g table point {p:?} is not inside the domain")));
        }
        targets.push(OccupationTarget {
            center: p.clone(),
            radius,
        });
    }
    let params = PathParams {
        seed: derive_seed(params.seed, &format!("g-table|{z0:?}")),
        ..*params
    };
    let estimates = green_mc_multi(spec, domain, z0, &targets, &params)?;
    let g_cap = all
        .iter()
        .zip(&estimates)
        .filter(|(p, _)| setup.in_cap_region(p))
        .map(|(_, e)| e.mean)
        .fold(0.0, f64::max);
    if !(g_cap > 0.0) {
        return Err(Error::Check("no positive Green estimate in the cap region".into()));
    }
    Ok(GTable {
        z0: z0.clone(),
        g_cap,
        points: all,
        estimates,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KappaFatRhs {
    pub value: f64,
    pub a: Vec<f64>,
    pub branch: ABranch,
}

/// g(x)g(y) / (g(A)² |x−y|^{d−α} ℓ(|x−y|⁻²)) with A from [`pick_a`].
pub fn rhs_kappa_fat(setup: &KappaFatSetup, g: &GTable, ev: &KernelEvaluator, x: &[f64], y: &[f64]) -> Result<KappaFatRhs> {
    let r = dist(x, y);
    if r == 0.0 {
        return Err(Error::Singular("x = y".into()));
    }
    let (a, branch) = pick_a(setup, x, y)?;
    let spec = ev.spec();
    let d = setup.domain.dim() as f64;
    let ga = g.g(&a)?;
    let value = g.g(x)? * g.g(y)? / (ga * ga * r.powf(d - spec.alpha()) * spec.ell(r.powi(-2)));
    Ok(KappaFatRhs { value, a, branch })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stratum {
    NearNear,
    NearDeep,
    DeepDeep,
    SameBoundary,
    Interior,
}

impl fmt::Display for Stratum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stratum::NearNear => "near-near",
            Stratum::NearDeep => "near-deep",
            Stratum::DeepDeep => "deep-deep",
            Stratum::SameBoundary => "near-same-boundary-point",
            Stratum::Interior => "interior",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointPair {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub stratum: Stratum,
}

/// Relative depths of near-boundary and deep sample points, in units of the
/// C^{1,1} radius.
const NEAR_DEPTHS: [f64; 3] = [0.02, 0.05, 0.1];
const DEEP_DEPTHS: [f64; 3] = [0.4, 0.6, 0.8];
/// Pairs sharing one starting point, so one set of paths serves them all.
const PAIRS_PER_ANCHOR: usize = 5;

fn scale(domain: &Domain) -> f64 {
    domain.c11_characteristics().map_or(domain.kappa_fat().0, |c| c.0)
}

fn point_below(domain: &Domain, q: &[f64], depth: f64) -> Vec<f64> {
    let (q, n) = domain.boundary_projection(q);
    q.iter().zip(&n).map(|(a, b)| a - depth * b).collect()
}

fn random_boundary(domain: &Domain, rng: &mut ChaCha8Rng) -> Vec<f64> {
    domain.sample_boundary(1, rng.random()).remove(0)
}

/// Fixed-seed pairs stratified by distance to the boundary. Pairs come in
/// groups of five sharing the point `x`; near and deep anchors alternate.
pub fn stratified_pairs(domain: &Domain, n: usize, seed: u64) -> Result<Vec<PointPair>> {
    let s = scale(domain);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::with_capacity(n);
    let mut anchor = 0;
    while pairs.len() < n {
        let near = anchor % 2 == 0;
        let q = random_boundary(domain, &mut rng);
        let depths = if near { NEAR_DEPTHS } else { DEEP_DEPTHS };
        let x = point_below(domain, &q, depths[(anchor / 2) % 3] * s);
        let mut k = 0;
        let mut attempts = 0;
        while k < PAIRS_PER_ANCHOR && pairs.len() < n {
            attempts += 1;
            if attempts > 1000 {
                return Err(Error::Check("could not build a stratified pair plan".into()));
            }
            let near_depth = NEAR_DEPTHS[rng.random_range(0..3)] * s;
            let deep_depth = DEEP_DEPTHS[rng.random_range(0..3)] * s;
            let (y, stratum) = match (near, k) {
                (true, 0) => {
                    let offset: Vec<f64> = q.iter().map(|c| c + rng.random_range(-0.1..0.1) * s).collect();
                    (point_below(domain, &offset, near_depth), Stratum::SameBoundary)
                }
                (true, 3) => {
                    // separation and depths on the scale of δ_D(x)
                    let dx = domain.delta(&x);
                    let offset: Vec<f64> = q.iter().map(|c| c + rng.random_range(-0.5..0.5) * dx).collect();
                    (point_below(domain, &offset, rng.random_range(0.5..1.0) * dx), Stratum::SameBoundary)
                }
                (true, 2) => (point_below(domain, &random_boundary(domain, &mut rng), deep_depth), Stratum::NearDeep),
                (true, _) => (point_below(domain, &random_boundary(domain, &mut rng), near_depth), Stratum::NearNear),
                (false, 3) | (false, 4) => {
                    (point_below(domain, &random_boundary(domain, &mut rng), near_depth), Stratum::NearDeep)
                }
                (false, _) => (point_below(domain, &random_boundary(domain, &mut rng), deep_depth), Stratum::DeepDeep),
            };
            if !domain.contains_point(&y) || dist(&x, &y) < 1e-3 * s {
                continue;
            }
            pairs.push(PointPair {
                x: x.clone(),
                y,
                stratum,
            });
            k += 1;
        }
        anchor += 1;
    }
    Ok(pairs)
}

/// Pairs with `l1·|x − y| ≤ δ_D(x) ∧ δ_D(y)`, grouped like
/// [`stratified_pairs`].
pub fn interior_pairs(domain: &Domain, n: usize, l1: f64, seed: u64) -> Result<Vec<PointPair>> {
    let s = scale(domain);
    let d = domain.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::with_capacity(n);
    let mut anchor = 0;
    while pairs.len() < n {
        let q = random_boundary(domain, &mut rng);
        let x = point_below(domain, &q, DEEP_DEPTHS[anchor % 3] * s);
        let dx = domain.delta(&x);
        let mut k = 0;
        while k < PAIRS_PER_ANCHOR && pairs.len() < n {
            let dir: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let norm = dir.iter().map(|c| c * c).sum::<f64>().sqrt();
            if norm < 1e-3 {
                continue;
            }
            // |x − y| ≤ δ(x)/(l1 + 1) guarantees l1|x − y| ≤ δ(y) as well
            let len = rng.random_range(0.2..1.0) * dx / (l1 + 1.0);
            let y: Vec<f64> = x.iter().zip(&dir).map(|(a, u)| a + len * u / norm).collect();
            pairs.push(PointPair {
                x: x.clone(),
                y,
                stratum: Stratum::Interior,
            });
            k += 1;
        }
        anchor += 1;
    }
    Ok(pairs)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerifyConfig {
    pub params: PathParams,
    pub pairs: usize,
    pub plan_seed: u64,
    /// Largest radius of the balls Green functions are averaged over.
    pub rho_max: f64,
    pub mc_cap: f64,
    pub quad_cap: f64,
    pub boundary_cap: f64,
    /// Radius r of the boundary ball B(Q, r), relative to the C^{1,1} radius.
    pub boundary_radius: f64,
    /// Number of points in D ∩ B(Q, r/2) for boundary checks.
    pub boundary_points: usize,
    pub l1: f64,
    /// Depth of the alternative reference point, as a fraction of R₃.
    pub alt_z0_depth: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            params: PathParams::new(1e-3, 20_000, 1).expect("valid defaults"),
            pairs: 50,
            plan_seed: 2024,
            rho_max: 0.05,
            mc_cap: MC_CAP,
            quad_cap: QUAD_CAP,
            boundary_cap: BOUNDARY_CAP,
            boundary_radius: 0.2,
            boundary_points: 20,
            l1: 2.0,
            alt_z0_depth: 0.6,
        }
    }
}

/// Mark a report failed when any of its Monte Carlo inputs is unreliable.
fn with_flags(mut report: RatioReport, flags: &[String]) -> RatioReport {
    if !flags.is_empty() {
        report.pass = false;
        for f in flags {
            report.notes.push(format!("unreliable estimate: {f}"));
        }
    }
    report
}

/// State shared by the claims of one verification run.
pub struct Verifier {
    spec: PhiSpec,
    domain: Domain,
    config: VerifyConfig,
    table: FluctuationTable,
    ev: KernelEvaluator,
    pairs: Vec<PointPair>,
    green: Option<Vec<McEstimate>>,
    g_tables: Vec<(KappaFatSetup, GTable)>,
}

impl Verifier {
    pub fn new(spec: &PhiSpec, domain: &Domain, config: VerifyConfig) -> Result<Self> {
        config.params.validate()?;
        if config.pairs == 0 {
            return Err(Error::Domain("need at least one pair".into()));
        }
        if !domain.is_bounded() {
            return Err(Error::Unsupported("claims are checked on bounded domains only".into()));
        }
        let table = FluctuationTable::build_default(spec)?;
        let ev = KernelEvaluator::new(spec, domain.dim())?;
        let pairs = stratified_pairs(domain, config.pairs, config.plan_seed)?;
        Ok(Self {
            spec: spec.clone(),
            domain: domain.clone(),
            config,
            table,
            ev,
            pairs,
            green: None,
            g_tables: Vec::new(),
        })
    }

    pub fn pairs(&self) -> &[PointPair] {
        &self.pairs
    }

    pub fn table(&self) -> &FluctuationTable {
        &self.table
    }

    pub fn evaluator(&self) -> &KernelEvaluator {
        &self.ev
    }

    fn require_samplable(&self) -> Result<()> {
        if !self.spec.is_samplable() {
            return Err(Error::Unsupported(format!(
                "{} has no exact sampler; simulated claims are unavailable",
                self.spec
            )));
        }
        Ok(())
    }

    fn v(&self, t: f64) -> Result<f64> {
        self.table.renewal_extended(t)
    }

    /// Ĝ_D for a list of pairs, one path set per distinct starting point.
    fn green_for(&self, pairs: &[PointPair], label: &str) -> Result<Vec<McEstimate>> {
        let mut out: Vec<Option<McEstimate>> = vec![None; pairs.len()];
        let mut done = vec![false; pairs.len()];
        for i in 0..pairs.len() {
            if done[i] {
                continue;
            }
            let x = &pairs[i].x;
            let group: Vec<usize> = (i..pairs.len()).filter(|&j| !done[j] && &pairs[j].x == x).collect();
            let targets: Vec<OccupationTarget> = group
                .iter()
                .map(|&j| {
                    let y = &pairs[j].y;
                    OccupationTarget {
                        center: y.clone(),
                        radius: self
                            .config
                            .rho_max
                            .min(0.5 * self.domain.delta(y))
                            .min(0.25 * dist(x, y)),
                    }
                })
                .collect();
            let params = PathParams {
                seed: derive_seed(self.config.params.seed, &format!("{label}|{i}")),
                ..self.config.params
            };
            let est = green_mc_multi(&self.spec, &self.domain, x, &targets, &params)?;
            for (&j, e) in group.iter().zip(est) {
                out[j] = Some(e);
                done[j] = true;
            }
        }
        Ok(out.into_iter().map(|e| e.expect("every pair estimated")).collect())
    }

    /// Ĝ_D(x, y) over the stratified pairs, computed once per run.
    pub fn green_pairs(&mut self) -> Result<Vec<McEstimate>> {
        self.require_samplable()?;
        if self.green.is_none() {
            self.green = Some(self.green_for(&self.pairs, "pairs")?);
        }
        Ok(self.green.clone().expect("just filled"))
    }

    /// g tables for the default reference point and for the alternative
    /// one; built once per run.
    pub fn g_tables(&mut self) -> Result<Vec<(KappaFatSetup, GTable)>> {
        self.require_samplable()?;
        if self.g_tables.is_empty() {
            let base = KappaFatSetup::new(&self.domain)?;
            let alt_z0 = self.domain.point_at_depth(self.config.alt_z0_depth * base.r3)?;
            let alt = KappaFatSetup::with_z0(&self.domain, alt_z0)?;
            for setup in [base, alt] {
                let mut points = Vec::new();
                for p in &self.pairs {
                    push_unique(&mut points, p.x.clone());
                    push_unique(&mut points, p.y.clone());
                    push_unique(&mut points, pick_a(&setup, &p.x, &p.y)?.0);
                }
                for p in self.decay_grid(&setup)? {
                    push_unique(&mut points, p);
                }
                let table = build_g_table(&self.spec, &setup, &points, self.config.rho_max, &self.config.params)?;
                let setup = setup.with_g_cap(table.g_cap);
                self.g_tables.push((setup, table));
            }
        }
        Ok(self.g_tables.clone())
    }

    /// Points approaching the boundary on the far side from z₀.
    fn decay_grid(&self, setup: &KappaFatSetup) -> Result<Vec<Vec<f64>>> {
        let s = scale(&self.domain);
        let deep = self.domain.deepest_point_near(&setup.z0);
        let mirror: Vec<f64> = deep.iter().zip(&setup.z0).map(|(c, z)| 2.0 * c - z).collect();
        let start = if mirror == setup.z0 {
            self.domain.point_at_depth(0.01 * s)?
        } else {
            mirror
        };
        Ok([0.01, 0.02, 0.05, 0.1, 0.2, 0.4, 0.6]
            .iter()
            .map(|f| point_below(&self.domain, &start, f * s))
            .filter(|p| self.domain.contains_point(p) && dist(p, &setup.z0) > 0.25 * self.domain.delta(&setup.z0))
            .collect())
    }

    pub fn verify(&mut self, claim: Claim) -> Result<Vec<RatioReport>> {
        match claim {
            Claim::Gest21 => self.gest21(),
            Claim::Gest => self.gest(),
            Claim::Bhp => self.bhp(),
            Claim::Interior => self.interior(),
            Claim::GeAsymp => self.ge_asymp(),
        }
    }

    fn gest21(&mut self) -> Result<Vec<RatioReport>> {
        let green = self.green_pairs()?;
        let flags = collect_flags(&green);
        let mut main = Vec::new();
        let mut ell_vs_v = Vec::new();
        let mut phi_vs_v = Vec::new();
        for (p, g) in self.pairs.iter().zip(&green) {
            let rhs = rhs_c11(&self.table, &self.ev, &self.domain, &p.x, &p.y)?;
            let tag = p.stratum.to_string();
            main.push(Sample::new(p.x.clone(), p.y.clone(), g.mean, rhs.v).tagged(&tag));
            ell_vs_v.push(Sample::new(p.x.clone(), p.y.clone(), rhs.ell, rhs.v).tagged(&tag));
            phi_vs_v.push(Sample::new(p.x.clone(), p.y.clone(), rhs.phi, rhs.v).tagged(&tag));
        }
        let main = RatioReport::new("green-c11", main, self.config.mc_cap)
            .with_note("lhs: simulated G_D(x, y); rhs: renewal-function form times free Green function");
        Ok(vec![
            with_flags(main, &flags),
            RatioReport::new("green-c11-ell-vs-renewal-form", ell_vs_v, self.config.quad_cap),
            RatioReport::new("green-c11-phi-vs-renewal-form", phi_vs_v, self.config.quad_cap),
        ])
    }

    fn gest(&mut self) -> Result<Vec<RatioReport>> {
        let green = self.green_pairs()?;
        let tables = self.g_tables()?;
        let (setup, table) = &tables[0];
        let (alt_setup, alt_table) = &tables[1];
        let mut flags = collect_flags(&green);
        flags.extend(table.flags());
        let mut main = Vec::new();
        let mut cross = Vec::new();
        let mut sensitivity = Vec::new();
        let mut local = 0;
        for (p, g) in self.pairs.iter().zip(&green) {
            let kf = rhs_kappa_fat(setup, table, &self.ev, &p.x, &p.y)?;
            let alt = rhs_kappa_fat(alt_setup, alt_table, &self.ev, &p.x, &p.y)?;
            let c11 = rhs_c11(&self.table, &self.ev, &self.domain, &p.x, &p.y)?;
            if kf.branch == ABranch::Local {
                local += 1;
            }
            let tag = format!("{}|{:?}", p.stratum, kf.branch);
            main.push(Sample::new(p.x.clone(), p.y.clone(), g.mean, kf.value).tagged(&tag));
            cross.push(Sample::new(p.x.clone(), p.y.clone(), kf.value, c11.v).tagged(&tag));
            sensitivity.push(Sample::new(p.x.clone(), p.y.clone(), kf.value, alt.value).tagged(&tag));
        }
        let branches = format!("local branch used for {local} of {} pairs", self.pairs.len());
        let main = RatioReport::new("green-kappa-fat", main, self.config.mc_cap)
            .with_note(format!("z0 = {:?}, g_cap = {:e}", setup.z0, table.g_cap))
            .with_note(branches.clone());
        let cross = RatioReport::new("kappa-fat-vs-c11", cross, self.config.mc_cap).with_note(branches);
        let sensitivity = RatioReport::new("kappa-fat-z0-sensitivity", sensitivity, self.config.mc_cap)
            .with_note(format!("alternative z0 = {:?}, g_cap = {:e}", alt_setup.z0, alt_table.g_cap));
        let mut alt_flags = flags.clone();
        alt_flags.extend(alt_table.flags());
        Ok(vec![
            with_flags(main, &flags),
            with_flags(cross, &flags),
            with_flags(sensitivity, &alt_flags),
        ])
    }

    fn interior(&mut self) -> Result<Vec<RatioReport>> {
        self.require_samplable()?;
        let pairs = interior_pairs(&self.domain, self.config.pairs, self.config.l1, self.config.plan_seed ^ 0x5eed)?;
        let green = self.green_for(&pairs, "interior")?;
        let d = self.domain.dim() as f64;
        let alpha = self.spec.alpha();
        let samples = pairs
            .iter()
            .zip(&green)
            .map(|(p, g)| {
                let r = dist(&p.x, &p.y);
                let rhs = 1.0 / (r.powf(d - alpha) * self.spec.ell(r.powi(-2)));
                Sample::new(p.x.clone(), p.y.clone(), g.mean, rhs).tagged("interior")
            })
            .collect();
        let report = RatioReport::new("green-interior", samples, self.config.mc_cap)
            .with_note(format!("pairs satisfy {}|x - y| <= min(delta(x), delta(y))", self.config.l1));
        Ok(vec![with_flags(report, &collect_flags(&green))])
    }

    fn ge_asymp(&mut self) -> Result<Vec<RatioReport>> {
        let tables = self.g_tables()?;
        let (setup, table) = &tables[0];
        let mut samples = Vec::new();
        for p in self.decay_grid(setup)? {
            let v = self.v(self.domain.delta(&p))?.min(1.0);
            samples.push(Sample::new(p.clone(), Vec::new(), table.g(&p)?, v).tagged("decay"));
        }
        let report = RatioReport::new("green-z0-decay", samples, self.config.mc_cap)
            .with_note(format!("g = min(G_D(., z0), {:e}), z0 = {:?}", table.g_cap, setup.z0));
        Ok(vec![with_flags(report, &table.flags())])
    }

    /// Boundary point and radius used by the boundary checks.
    pub fn boundary_ball(&self) -> Result<(Vec<f64>, f64)> {
        let s = scale(&self.domain);
        let q = self.domain.boundary_projection(&self.domain.point_at_depth(0.01 * s)?).0;
        Ok((q, self.config.boundary_radius * s))
    }

    /// Points of D ∩ B(Q, r/2) at depths from r/50 to 0.4r, with tangential
    /// offsets when d ≥ 2.
    pub fn boundary_points(&self, q: &[f64], r: f64) -> Vec<Vec<f64>> {
        let n = self.config.boundary_points.max(2);
        let (_, normal) = self.domain.boundary_projection(q);
        let d = self.domain.dim();
        let tangent: Option<Vec<f64>> = (0..d).find_map(|axis| {
            let mut t = vec![0.0; d];
            t[axis] = 1.0;
            let dot: f64 = t.iter().zip(&normal).map(|(a, b)| a * b).sum();
            let t: Vec<f64> = t.iter().zip(&normal).map(|(a, b)| a - dot * b).collect();
            let norm = t.iter().map(|c| c * c).sum::<f64>().sqrt();
            (norm > 0.5).then(|| t.iter().map(|c| c / norm).collect())
        });
        let half = 0.5 * r;
        (0..n)
            .map(|i| {
                let depth = half * 0.04 * 20f64.powf(i as f64 / (n - 1) as f64);
                let shift = 0.4 * half * ((i % 3) as f64 - 1.0);
                let mut base = q.to_vec();
                if let Some(t) = &tangent {
                    base.iter_mut().zip(t).for_each(|(b, u)| *b += shift * u);
                }
                let p = point_below(&self.domain, &base, depth);
                if dist(&p, q) < half && self.domain.contains_point(&p) {
                    p
                } else {
                    point_below(&self.domain, q, depth)
                }
            })
            .collect()
    }

    fn bhp(&mut self) -> Result<Vec<RatioReport>> {
        self.require_samplable()?;
        let (q, r) = self.boundary_ball()?;
        let piece = BallPiece {
            domain: self.domain.clone(),
            center: q.clone(),
            radius: r,
        };
        let far = {
            let deep = self.domain.deepest_point_near(&self.domain.point_at_depth(0.9 * scale(&self.domain))?);
            let gap = dist(&deep, &q) - r;
            let radius = (0.5 * self.domain.delta(&deep)).min(0.9 * gap);
            if !(radius > 0.0) {
                return Err(Error::Domain("no room for a target ball away from B(Q, r)".into()));
            }
            TargetSet::Ball { center: deep, radius }
        };
        let outside = TargetSet::OutsideBall {
            center: q.clone(),
            radius: r,
        };
        let mut decay_u = Vec::new();
        let mut decay_v = Vec::new();
        let mut quotient = Vec::new();
        let mut estimates = Vec::new();
        for (i, x) in self.boundary_points(&q, r).into_iter().enumerate() {
            let params = |label: &str| PathParams {
                seed: derive_seed(self.config.params.seed, &format!("bhp|{label}|{i}")),
                ..self.config.params
            };
            let u = harmonic_mc(&self.spec, &piece, &far, &x, &params("u"))?;
            let v = harmonic_mc(&self.spec, &piece, &outside, &x, &params("v"))?;
            let vd = self.v(self.domain.delta(&x))?;
            decay_u.push(Sample::new(x.clone(), Vec::new(), u.mean, vd));
            decay_v.push(Sample::new(x.clone(), Vec::new(), v.mean, vd));
            quotient.push(Sample::new(x.clone(), Vec::new(), u.mean, v.mean));
            estimates.push(u);
            estimates.push(v);
        }
        let flags = collect_flags(&estimates);
        let where_ = format!("Q = {q:?}, r = {r}");
        Ok(vec![
            with_flags(
                RatioReport::new("bhp-decay", decay_u, self.config.boundary_cap)
                    .with_note(where_.clone())
                    .with_note(format!("u(x) = P_x(exit into {far:?})")),
                &flags,
            ),
            with_flags(
                RatioReport::new("bhp-decay-second", decay_v, self.config.boundary_cap)
                    .with_note("v(x) = P_x(exit outside B(Q, r))"),
                &flags,
            ),
            with_flags(
                RatioReport::new("bhp-quotient", quotient, self.config.boundary_cap).with_note(where_),
                &flags,
            ),
        ])
    }

    /// Exit from D ∩ B(Q, r) on a δ-grid of multiples of r approaching Q:
    /// probability of landing in D and mean exit time, both against
    /// V(δ_D(x)).
    pub fn exit_trends(&self, depth_fractions: &[f64]) -> Result<(RatioReport, RatioReport)> {
        self.require_samplable()?;
        let (q, r) = self.boundary_ball()?;
        let mut prob = Vec::new();
        let mut time = Vec::new();
        let mut estimates = Vec::new();
        for (i, f) in depth_fractions.iter().enumerate() {
            let x = point_below(&self.domain, &q, f * r);
            let params = PathParams {
                seed: derive_seed(self.config.params.seed, &format!("exit|{i}")),
                ..self.config.params
            };
            let e = exit_into_domain_mc(&self.spec, &self.domain, &q, r, &x, &params)?;
            let vd = self.v(self.domain.delta(&x))?;
            prob.push(Sample::new(x.clone(), Vec::new(), e.probability.mean, vd).tagged(format!("{f}r")));
            time.push(Sample::new(x, Vec::new(), e.mean_exit_time.mean, vd).tagged(format!("{f}r")));
            estimates.push(e.probability);
            estimates.push(e.mean_exit_time);
        }
        let flags = collect_flags(&estimates);
        Ok((
            with_flags(RatioReport::new("exit-into-domain", prob, self.config.boundary_cap), &flags),
            with_flags(RatioReport::new("exit-time", time, self.config.boundary_cap), &flags),
        ))
    }
}

/// Run one claim from scratch. The first report is the claim itself.
pub fn verify_theorem(claim: Claim, spec: &PhiSpec, domain: &Domain, config: VerifyConfig) -> Result<Vec<RatioReport>> {
    Verifier::new(spec, domain, config)?.verify(claim)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stable_setup() -> (FluctuationTable, KernelEvaluator, Domain) {
        let spec = PhiSpec::stable(1.0).unwrap();
        (
            FluctuationTable::build_default(&spec).unwrap(),
            KernelEvaluator::new(&spec, 2).unwrap(),
            Domain::unit_ball(2, 1.0).unwrap(),
        )
    }

    #[test]
    fn saturated_bracket_gives_free_green() {
        let (table, ev, ball) = stable_setup();
        // δ(x) = 0.2 = |x − y| and δ(y) = 0.4, so the bracket saturates
        let x2 = [0.8, 0.0];
        let y2 = [0.6, 0.0];
        let rhs = rhs_c11(&table, &ev, &ball, &x2, &y2).unwrap();
        let g = ev.free_green_g(0.2).unwrap();
        assert!((rhs.v / g - 1.0).abs() < 1e-6, "{rhs:?} {g}");
        assert!(matches!(rhs_c11(&table, &ev, &ball, &x2, &x2), Err(Error::Singular(_))));
    }

    #[test]
    fn stable_forms_agree_up_to_the_green_constant() {
        let (table, ev, ball) = stable_setup();
        let c = 1.0 / (2.0 * std::f64::consts::PI);
        for (x, y) in [
            ([0.0, 0.0], [0.5, 0.0]),
            ([0.95, 0.0], [0.9, 0.1]),
            ([0.99, 0.0], [-0.5, 0.3]),
            ([0.2, 0.3], [0.0, -0.97]),
        ] {
            let rhs = rhs_c11(&table, &ev, &ball, &x, &y).unwrap();
            assert!((rhs.ell / rhs.phi - 1.0).abs() < 1e-12, "{rhs:?}");
            assert!((rhs.v / (c * rhs.ell) - 1.0).abs() < 0.05, "{rhs:?}");
        }
    }

    #[test]
    fn rhs_decreases_toward_the_boundary() {
        let (table, ev, ball) = stable_setup();
        let x = [-0.3, 0.0];
        let values: Vec<f64> = [0.0, 0.3, 0.6, 0.9, 0.99, 0.999]
            .iter()
            .map(|t| rhs_c11(&table, &ev, &ball, &x, &[0.0, *t]).unwrap().v)
            .collect();
        assert!(values.windows(2).all(|w| w[1] <= w[0]), "{values:?}");
        assert!(values[5] < 0.2 * values[0]);
    }

    #[test]
    fn plans_are_deterministic_and_stratified() {
        let ball = Domain::unit_ball(2, 1.0).unwrap();
        let a = stratified_pairs(&ball, 50, 3).unwrap();
        assert_eq!(a, stratified_pairs(&ball, 50, 3).unwrap());
        assert_eq!(a.len(), 50);
        for s in [Stratum::NearNear, Stratum::NearDeep, Stratum::DeepDeep, Stratum::SameBoundary] {
            assert!(a.iter().any(|p| p.stratum == s), "{s}");
        }
        assert!(a.iter().all(|p| ball.contains_point(&p.x) && ball.contains_point(&p.y) && p.x != p.y));
        for p in interior_pairs(&ball, 20, 2.0, 5).unwrap() {
            let r = dist(&p.x, &p.y);
            assert!(2.0 * r <= ball.delta(&p.x).min(ball.delta(&p.y)) + 1e-12);
        }
    }

    #[test]
    fn claims_parse() {
        for c in Claim::ALL {
            assert_eq!(c.to_string().parse::<Claim>().unwrap(), c);
        }
        assert!("nope".parse::<Claim>().is_err());
    }

    #[test]
    fn g_table_reports_missing_points() {
        let table = GTable {
            z0: vec![0.25, 0.0],
            g_cap: 0.5,
            points: vec![vec![0.0, 0.0]],
            estimates: vec![McEstimate {
                mean: 2.0,
                stderr: 0.0,
                n: 1,
                config_hash: String::new(),
                flags: vec![],
            }],
        };
        assert_eq!(table.g(&[0.0, 0.0]).unwrap(), 0.5);
        assert_eq!(table.g(&[0.25, 0.0]).unwrap(), 0.5);
        assert!(matches!(table.g(&[0.1, 0.0]), Err(Error::Coverage(_))));
    }

    #[test]
    fn unsamplable_family_is_rejected_for_simulated_claims() {
        let spec = PhiSpec::log_power(1.0, 0.5).unwrap();
        let ball = Domain::unit_ball(3, 1.0).unwrap();
        let config = VerifyConfig {
            pairs: 5,
            ..VerifyConfig::default()
        };
        let err = verify_theorem(Claim::Gest21, &spec, &ball, config).unwrap_err();
        assert!(matches!(err, Error::Unsupported(_)), "{err}");
    }
}
