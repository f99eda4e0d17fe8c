//! Test domains with closed-form distance to the complement.
//!
//! Every supported shape is C^{1,1}: it satisfies the uniform interior and
//! exterior ball conditions with radius R, and is κ-fat with κ = 1/2 and
//! R₁ = R.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    Ball { center: Vec<f64>, radius: f64 },
    DisjointBalls(Vec<(Vec<f64>, f64)>),
    /// {ri < |x| < ro}, centred at the origin.
    Annulus { inner: f64, outer: f64 },
    /// Union of disjoint open intervals in ℝ.
    IntervalUnion(Vec<(f64, f64)>),
    /// {0 < x_d < height}.
    HalfSpaceSlab { height: f64 },
}

/// A set a killed process lives in.
pub trait Region: Sync {
    fn contains(&self, x: &[f64]) -> bool;
    /// Stable text used in configuration digests.
    fn describe(&self) -> String;
}

#[derive(Debug, Clone, PartialEq)]
pub struct Domain {
    shape: Shape,
    d: usize,
    c11: Option<(f64, f64)>,
    kappa_fat: (f64, f64),
}

pub fn norm(x: &[f64]) -> f64 {
    x.iter().map(|c| c * c).sum::<f64>().sqrt()
}

pub fn dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

fn unit(d: usize, axis: usize) -> Vec<f64> {
    let mut e = vec![0.0; d];
    e[axis] = 1.0;
    e
}

impl Domain {
    pub fn new(shape: Shape, d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::Domain("dimension must be at least 1".into()));
        }
        let r = match &shape {
            Shape::Ball { center, radius } => {
                if center.len() != d || !(*radius > 0.0) {
                    return Err(Error::Domain("ball needs a d-dimensional centre and positive radius".into()));
                }
                *radius
            }
            Shape::DisjointBalls(balls) => {
                if balls.is_empty() || balls.iter().any(|(c, r)| c.len() != d || !(*r > 0.0)) {
                    return Err(Error::Domain("balls need d-dimensional centres and positive radii".into()));
                }
                let mut r = balls.iter().map(|b| b.1).fold(f64::INFINITY, f64::min);
                for (i, (ci, ri)) in balls.iter().enumerate() {
                    for (cj, rj) in &balls[i + 1..] {
                        let gap = dist(ci, cj) - ri - rj;
                        if !(gap > 0.0) {
                            return Err(Error::Domain("balls must be separated by a positive distance".into()));
                        }
                        r = r.min(0.5 * gap);
                    }
                }
                r
            }
            Shape::Annulus { inner, outer } => {
                if !(*inner > 0.0 && inner < outer) || d < 2 {
                    return Err(Error::Domain("annulus needs 0 < ri < ro and d ≥ 2".into()));
                }
                inner.min(0.5 * (outer - inner))
            }
            Shape::IntervalUnion(intervals) => {
                if d != 1 || intervals.is_empty() {
                    return Err(Error::Domain("interval unions live in d = 1".into()));
                }
                let mut sorted = intervals.clone();
                sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
                if sorted.iter().any(|(a, b)| !(a < b)) {
                    return Err(Error::Domain("intervals must have positive length".into()));
                }
                let mut r = sorted.iter().map(|(a, b)| 0.5 * (b - a)).fold(f64::INFINITY, f64::min);
                for w in sorted.windows(2) {
                    let gap = w[1].0 - w[0].1;
                    if !(gap > 0.0) {
                        return Err(Error::Domain("intervals must be separated by positive gaps".into()));
                    }
                    r = r.min(0.5 * gap);
                }
                r
            }
            Shape::HalfSpaceSlab { height } => {
                if !(*height > 0.0) {
                    return Err(Error::Domain("slab height must be positive".into()));
                }
                0.5 * height
            }
        };
        Ok(Self {
            shape,
            d,
            c11: Some((r, 1.0 / r)),
            kappa_fat: (r, 0.5),
        })
    }

    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self> {
        let d = center.len();
        Self::new(Shape::Ball { center, radius }, d)
    }

    /// Ball of radius `radius` centred at the origin of ℝ^d.
    pub fn unit_ball(d: usize, radius: f64) -> Result<Self> {
        Self::ball(vec![0.0; d], radius)
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// C^{1,1} characteristics (R, Λ).
    pub fn c11_characteristics(&self) -> Option<(f64, f64)> {
        self.c11
    }

    /// κ-fat parameters (R₁, κ).
    pub fn kappa_fat(&self) -> (f64, f64) {
        self.kappa_fat
    }

    pub fn is_bounded(&self) -> bool {
        !matches!(self.shape, Shape::HalfSpaceSlab { .. })
    }

    /// Distance from `x` to the complement; 0 outside the domain.
    pub fn delta(&self, x: &[f64]) -> f64 {
        let v = match &self.shape {
            Shape::Ball { center, radius } => radius - dist(x, center),
            Shape::DisjointBalls(balls) => balls
                .iter()
                .map(|(c, r)| r - dist(x, c))
                .fold(f64::NEG_INFINITY, f64::max),
            Shape::Annulus { inner, outer } => {
                let n = norm(x);
                (n - inner).min(outer - n)
            }
            Shape::IntervalUnion(intervals) => intervals
                .iter()
                .map(|(a, b)| (x[0] - a).min(b - x[0]))
                .fold(f64::NEG_INFINITY, f64::max),
            Shape::HalfSpaceSlab { height } => {
                let t = x[self.d - 1];
                t.min(height - t)
            }
        };
        v.max(0.0)
    }

    /// Distance from `x` to the closure of the domain; 0 inside.
    pub fn distance_to(&self, x: &[f64]) -> f64 {
        let v = match &self.shape {
            Shape::Ball { center, radius } => dist(x, center) - radius,
            Shape::DisjointBalls(balls) => balls
                .iter()
                .map(|(c, r)| dist(x, c) - r)
                .fold(f64::INFINITY, f64::min),
            Shape::Annulus { inner, outer } => {
                let n = norm(x);
                (inner - n).max(n - outer)
            }
            Shape::IntervalUnion(intervals) => intervals
                .iter()
                .map(|(a, b)| (a - x[0]).max(x[0] - b))
                .fold(f64::INFINITY, f64::min),
            Shape::HalfSpaceSlab { height } => {
                let t = x[self.d - 1];
                (-t).max(t - height)
            }
        };
        v.max(0.0)
    }

    pub fn contains_point(&self, x: &[f64]) -> bool {
        self.delta(x) > 0.0
    }

    /// Deepest point of the component nearest to `p`.
    pub fn deepest_point_near(&self, p: &[f64]) -> Vec<f64> {
        match &self.shape {
            Shape::Ball { center, .. } => center.clone(),
            Shape::DisjointBalls(balls) => balls
                .iter()
                .min_by(|a, b| (dist(p, &a.0) - a.1).total_cmp(&(dist(p, &b.0) - b.1)))
                .map(|b| b.0.clone())
                .expect("at least one ball"),
            Shape::Annulus { inner, outer } => {
                let n = norm(p);
                let dir = if n > 0.0 {
                    p.iter().map(|c| c / n).collect()
                } else {
                    unit(self.d, 0)
                };
                dir.iter().map(|c| c * 0.5 * (inner + outer)).collect()
            }
            Shape::IntervalUnion(intervals) => {
                let (a, b) = intervals
                    .iter()
                    .min_by(|x, y| {
                        let dx = (x.0 - p[0]).max(p[0] - x.1);
                        let dy = (y.0 - p[0]).max(p[0] - y.1);
                        dx.total_cmp(&dy)
                    })
                    .expect("at least one interval");
                vec![0.5 * (a + b)]
            }
            Shape::HalfSpaceSlab { height } => {
                let mut q = p.to_vec();
                q[self.d - 1] = 0.5 * height;
                q
            }
        }
    }

    /// A point with δ_D equal to `depth`, on the first axis of the first
    /// component.
    pub fn point_at_depth(&self, depth: f64) -> Result<Vec<f64>> {
        let p = match &self.shape {
            Shape::Ball { center, radius } => {
                let mut p = center.clone();
                p[0] += radius - depth;
                p
            }
            Shape::DisjointBalls(balls) => {
                let (c, r) = &balls[0];
                let mut p = c.clone();
                p[0] += r - depth;
                p
            }
            Shape::Annulus { inner, .. } => {
                let mut p = vec![0.0; self.d];
                p[0] = inner + depth;
                p
            }
            Shape::IntervalUnion(intervals) => vec![intervals[0].0 + depth],
            Shape::HalfSpaceSlab { .. } => {
                let mut p = vec![0.0; self.d];
                p[self.d - 1] = depth;
                p
            }
        };
        if (self.delta(&p) - depth).abs() > 1e-12 * depth.max(1.0) {
            return Err(Error::Domain(format!("no point at depth {depth}")));
        }
        Ok(p)
    }

    /// Boundary point nearest to `x` together with the outward unit normal.
    pub fn boundary_projection(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let radial = |c: &[f64], r: f64, outward: f64| {
            let v: Vec<f64> = x.iter().zip(c).map(|(a, b)| a - b).collect();
            let n = norm(&v);
            let dir: Vec<f64> = if n > 0.0 { v.iter().map(|a| a / n).collect() } else { unit(self.d, 0) };
            let q = c.iter().zip(&dir).map(|(a, u)| a + r * u).collect();
            (q, dir.iter().map(|u| outward * u).collect())
        };
        match &self.shape {
            Shape::Ball { center, radius } => radial(center, *radius, 1.0),
            Shape::DisjointBalls(balls) => {
                let (c, r) = balls
                    .iter()
                    .min_by(|a, b| (dist(x, &a.0) - a.1).abs().total_cmp(&(dist(x, &b.0) - b.1).abs()))
                    .expect("at least one ball");
                radial(c, *r, 1.0)
            }
            Shape::Annulus { inner, outer } => {
                let origin = vec![0.0; self.d];
                let n = norm(x);
                if n - inner < outer - n {
                    radial(&origin, *inner, -1.0)
                } else {
                    radial(&origin, *outer, 1.0)
                }
            }
            Shape::IntervalUnion(intervals) => {
                let mut best = (f64::INFINITY, vec![0.0], vec![0.0]);
                for (a, b) in intervals {
                    for (end, n) in [(*a, -1.0), (*b, 1.0)] {
                        let dd = (x[0] - end).abs();
                        if dd < best.0 {
                            best = (dd, vec![end], vec![n]);
                        }
                    }
                }
                (best.1, best.2)
            }
            Shape::HalfSpaceSlab { height } => {
                let t = x[self.d - 1];
                let mut q = x.to_vec();
                let mut n = vec![0.0; self.d];
                if t < height - t {
                    q[self.d - 1] = 0.0;
                    n[self.d - 1] = -1.0;
                } else {
                    q[self.d - 1] = *height;
                    n[self.d - 1] = 1.0;
                }
                (q, n)
            }
        }
    }

    /// Deterministic sample of `n` boundary points.
    pub fn sample_boundary(&self, n: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let g: Vec<f64> = (0..self.d).map(|_| rng.sample(StandardNormal)).collect();
                let scale = match &self.shape {
                    Shape::Ball { radius, .. } => *radius,
                    Shape::Annulus { inner, outer } => {
                        if rng.random_bool(0.5) {
                            *inner
                        } else {
                            *outer
                        }
                    }
                    _ => 1.0,
                };
                let ng = norm(&g);
                let base: Vec<f64> = match &self.shape {
                    Shape::Ball { center, .. } => center.clone(),
                    _ => vec![0.0; self.d],
                };
                let x: Vec<f64> = base.iter().zip(&g).map(|(b, v)| b + scale * v / ng).collect();
                self.boundary_projection(&x).0
            })
            .collect()
    }

    /// Verify the interior and exterior ball conditions with radius R at
    /// each point of `boundary`: B(Q − Rn, R) ⊂ D and B(Q + Rn, R) ⊂ D^c.
    pub fn uniform_ball_condition(&self, boundary: &[Vec<f64>]) -> bool {
        let r = match self.c11 {
            Some((r, _)) => r,
            None => return false,
        };
        let tol = 1e-9 * r;
        boundary.iter().all(|q| {
            let (_, n) = self.boundary_projection(q);
            let inner: Vec<f64> = q.iter().zip(&n).map(|(a, b)| a - r * b).collect();
            let outer: Vec<f64> = q.iter().zip(&n).map(|(a, b)| a + r * b).collect();
            self.delta(&inner) >= r - tol && self.distance_to(&outer) >= r - tol
        })
    }

    /// r(x, y) = δ_D(x) ∨ δ_D(y) ∨ |x − y|.
    pub fn r_xy(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        let (dx, dy) = (self.delta(x), self.delta(y));
        if dx <= 0.0 || dy <= 0.0 {
            return Err(Error::Domain("r(x, y) needs both points inside the domain".into()));
        }
        Ok(dx.max(dy).max(dist(x, y)))
    }
}

impl Region for Domain {
    fn contains(&self, x: &[f64]) -> bool {
        self.contains_point(x)
    }

    fn describe(&self) -> String {
        self.to_string()
    }
}

pub fn delta_d(domain: &Domain, x: &[f64]) -> f64 {
    domain.delta(x)
}

/// D ∩ B(center, radius).
#[derive(Debug, Clone, PartialEq)]
pub struct BallPiece {
    pub domain: Domain,
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Region for BallPiece {
    fn contains(&self, x: &[f64]) -> bool {
        dist(x, &self.center) < self.radius && self.domain.contains_point(x)
    }

    fn describe(&self) -> String {
        format!("{}&B({},{})", self.domain, fmt_point(&self.center), self.radius)
    }
}

fn fmt_point(p: &[f64]) -> String {
    let parts: Vec<String> = p.iter().map(|c| c.to_string()).collect();
    format!("({})", parts.join(","))
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.shape {
            Shape::Ball { center, radius } => {
                write!(f, "ball:r={radius},c={}", fmt_point(center))
            }
            Shape::DisjointBalls(balls) => {
                write!(f, "balls:")?;
                for (i, (c, r)) in balls.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "c={},r={r}", fmt_point(c))?;
                }
                Ok(())
            }
            Shape::Annulus { inner, outer } => write!(f, "annulus:ri={inner},ro={outer},d={}", self.d),
            Shape::IntervalUnion(intervals) => {
                let parts: Vec<String> = intervals.iter().map(|(a, b)| format!("[{a},{b}]")).collect();
                write!(f, "intervals:{}", parts.join(","))
            }
            Shape::HalfSpaceSlab { height } => write!(f, "slab:h={height},d={}", self.d),
        }
    }
}

/// Split on commas outside brackets.
fn split_top(s: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, ch) in s.char_indices() {
        match ch {
            '(' | '[' => depth += 1,
            ')' | ']' => depth -= 1,
            ',' if depth == 0 => {
                out.push(s[start..i].trim());
                start = i + ch.len_utf8();
            }
            _ => {}
        }
    }
    out.push(s[start..].trim());
    out.into_iter().filter(|p| !p.is_empty()).collect()
}

fn parse_num(s: &str) -> Result<f64> {
    s.trim().parse().map_err(|_| Error::Parse(format!("bad number `{s}`")))
}

/// Parse `(a,b,...)`; a leading `±` on any coordinate expands to both signs.
fn parse_points(s: &str) -> Result<Vec<Vec<f64>>> {
    let inner = s
        .trim()
        .strip_prefix('(')
        .and_then(|t| t.strip_suffix(')'))
        .ok_or_else(|| Error::Parse(format!("expected (x,y,...), got `{s}`")))?;
    let mut points = vec![Vec::new()];
    for part in inner.split(',') {
        let part = part.trim();
        if let Some(rest) = part.strip_prefix('±').or_else(|| part.strip_prefix("+-")) {
            let v = parse_num(rest)?;
            points = points
                .into_iter()
                .flat_map(|p| {
                    let mut a = p.clone();
                    a.push(v);
                    let mut b = p;
                    b.push(-v);
                    [a, b]
                })
                .collect();
        } else {
            let v = parse_num(part)?;
            points.iter_mut().for_each(|p| p.push(v));
        }
    }
    Ok(points)
}

impl FromStr for Domain {
    type Err = Error;

    /// `ball:r=1[,c=(0,0)][,d=2]`, `annulus:ri=0.5,ro=1[,d=2]`,
    /// `balls:c=(±0.75,0),r=0.2`, `intervals:[0,1],[2,3]`, `slab:h=1,d=2`.
    fn from_str(s: &str) -> Result<Self> {
        let (kind, rest) = s
            .split_once(':')
            .ok_or_else(|| Error::Parse(format!("expected shape:params, got `{s}`")))?;
        let kind = kind.trim().to_ascii_lowercase();
        if kind == "intervals" {
            let intervals = split_top(rest)
                .into_iter()
                .map(|p| {
                    let inner = p
                        .strip_prefix('[')
                        .and_then(|t| t.strip_suffix(']'))
                        .ok_or_else(|| Error::Parse(format!("expected [a,b], got `{p}`")))?;
                    let (a, b) = inner
                        .split_once(',')
                        .ok_or_else(|| Error::Parse(format!("expected [a,b], got `{p}`")))?;
                    Ok((parse_num(a)?, parse_num(b)?))
                })
                .collect::<Result<Vec<_>>>()?;
            return Domain::new(Shape::IntervalUnion(intervals), 1);
        }
        let mut centers: Vec<Vec<f64>> = Vec::new();
        let mut radii: Vec<f64> = Vec::new();
        let mut scalars = std::collections::HashMap::new();
        for pair in split_top(rest) {
            let (key, value) = pair
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("expected key=value, got `{pair}`")))?;
            match key.trim() {
                "c" => centers.extend(parse_points(value)?),
                "r" => radii.push(parse_num(value)?),
                k @ ("ri" | "ro" | "h" | "d") => {
                    scalars.insert(k.to_string(), parse_num(value)?);
                }
                other => return Err(Error::Parse(format!("unknown parameter `{other}`"))),
            }
        }
        let dim = |default: usize| -> Result<usize> {
            match scalars.get("d") {
                Some(&v) if v >= 1.0 && v.fract() == 0.0 => Ok(v as usize),
                Some(v) => Err(Error::Parse(format!("bad dimension {v}"))),
                None => Ok(default),
            }
        };
        let need = |k: &str| {
            scalars
                .get(k)
                .copied()
                .ok_or_else(|| Error::Parse(format!("`{s}` lacks {k}")))
        };
        match kind.as_str() {
            "ball" => {
                let r = *radii.first().ok_or_else(|| Error::Parse("ball lacks r".into()))?;
                let center = match centers.as_slice() {
                    [] => vec![0.0; dim(2)?],
                    [c] => c.clone(),
                    _ => return Err(Error::Parse("ball takes one centre".into())),
                };
                if scalars.contains_key("d") && dim(2)? != center.len() {
                    return Err(Error::Parse("centre and dimension disagree".into()));
                }
                Domain::ball(center, r)
            }
            "balls" => {
                if centers.is_empty() || radii.is_empty() {
                    return Err(Error::Parse("balls need c and r".into()));
                }
                let radius_of = |i: usize| if radii.len() == 1 { Ok(radii[0]) } else { radii.get(i).copied().ok_or_else(|| Error::Parse("one radius per centre".into())) };
                let d = centers[0].len();
                let balls = centers
                    .iter()
                    .enumerate()
                    .map(|(i, c)| Ok((c.clone(), radius_of(i)?)))
                    .collect::<Result<Vec<_>>>()?;
                Domain::new(Shape::DisjointBalls(balls), d)
            }
            "annulus" => Domain::new(
                Shape::Annulus {
                    inner: need("ri")?,
                    outer: need("ro")?,
                },
                dim(2)?,
            ),
            "slab" => Domain::new(Shape::HalfSpaceSlab { height: need("h")? }, dim(2)?),
            other => Err(Error::Parse(format!("unknown shape `{other}`"))),
        }
    }
}

/// Data fixing the reference point z₀ and the scale ε₁ of the κ-fat
/// Green function estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct KappaFatSetup {
    pub domain: Domain,
    pub z0: Vec<f64>,
    pub r3: f64,
    pub kappa: f64,
    pub eps1: f64,
    /// Interior cap on G_D(·, z₀); set once the Green function has been
    /// estimated, see [`KappaFatSetup::with_g_cap`].
    pub g_cap: Option<f64>,
}

impl KappaFatSetup {
    /// R₃ = R₁ and z₀ at depth 3R₃/4 (for κ = 1/2 the bracket is
    /// κR₃ < δ_D(z₀) < R₃).
    pub fn new(domain: &Domain) -> Result<Self> {
        let (r1, _) = domain.kappa_fat();
        let z0 = domain.point_at_depth(0.75 * r1)?;
        Self::with_z0(domain, z0)
    }

    pub fn with_z0(domain: &Domain, z0: Vec<f64>) -> Result<Self> {
        let (r3, kappa) = domain.kappa_fat();
        let depth = domain.delta(&z0);
        if !(kappa * r3 < depth && depth < r3) {
            return Err(Error::Domain(format!(
                "z0 must satisfy {} < delta(z0) < {r3}, got {depth}",
                kappa * r3
            )));
        }
        Ok(Self {
            domain: domain.clone(),
            z0,
            r3,
            kappa,
            eps1: kappa * r3 / 24.0,
            g_cap: None,
        })
    }

    pub fn with_g_cap(mut self, cap: f64) -> Self {
        self.g_cap = Some(cap);
        self
    }

    /// Whether `p` counts for the interior cap: |p − z₀| ≥ δ_D(z₀)/2.
    pub fn in_cap_region(&self, p: &[f64]) -> bool {
        dist(p, &self.z0) >= 0.5 * self.domain.delta(&self.z0)
    }

    /// Membership in 𝓑(x, y) for the small-scale branch.
    pub fn in_b_set(&self, x: &[f64], y: &[f64], a: &[f64]) -> Result<bool> {
        let r = self.domain.r_xy(x, y)?;
        if r >= self.eps1 {
            return Ok(a == self.z0.as_slice());
        }
        Ok(self.domain.delta(a) > 0.5 * self.kappa * r && dist(x, a).max(dist(y, a)) < 5.0 * r)
    }
}

/// Which branch of 𝓑(x, y) produced A.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ABranch {
    Local,
    ReferencePoint,
}

/// A point of 𝓑(x, y): z₀ when r(x, y) ≥ ε₁, otherwise the first point
/// along the ray from the midpoint of x, y toward the nearest deepest point
/// that satisfies both defining inequalities.
pub fn pick_a(setup: &KappaFatSetup, x: &[f64], y: &[f64]) -> Result<(Vec<f64>, ABranch)> {
    let domain = &setup.domain;
    let r = domain.r_xy(x, y)?;
    if r >= setup.eps1 {
        return Ok((setup.z0.clone(), ABranch::ReferencePoint));
    }
    let mid: Vec<f64> = x.iter().zip(y).map(|(a, b)| 0.5 * (a + b)).collect();
    let deep = domain.deepest_point_near(&mid);
    let span = dist(&mid, &deep);
    let dir: Vec<f64> = if span > 0.0 {
        mid.iter().zip(&deep).map(|(m, q)| (q - m) / span).collect()
    } else {
        vec![0.0; mid.len()]
    };
    const STEPS: usize = 400;
    for i in 0..=STEPS {
        let tau = (5.0 * r * i as f64 / STEPS as f64).min(span);
        let a: Vec<f64> = mid.iter().zip(&dir).map(|(m, u)| m + tau * u).collect();
        if domain.delta(&a) > 0.5 * setup.kappa * r && dist(x, &a).max(dist(y, &a)) < 5.0 * r {
            return Ok((a, ABranch::Local));
        }
    }
    Err(Error::Check(format!("no point of B(x, y) found for r = {r}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn ball() -> Domain {
        "ball:r=1".parse().unwrap()
    }

    #[test]
    fn distances() {
        let b3 = Domain::unit_ball(3, 1.0).unwrap();
        assert!((b3.delta(&[0.3, 0.0, 0.0]) - 0.7).abs() < 1e-15);
        let ann: Domain = "annulus:ri=0.5,ro=1".parse().unwrap();
        assert!((ann.delta(&[0.75, 0.0]) - 0.25).abs() < 1e-15);
        assert_eq!(ball().delta(&[2.0, 0.0]), 0.0);
        assert_eq!(ann.delta(&[0.1, 0.0]), 0.0);
        let iv: Domain = "intervals:[0,1],[2,3]".parse().unwrap();
        assert!((iv.delta(&[2.25]) - 0.25).abs() < 1e-15);
        assert_eq!(iv.delta(&[1.5]), 0.0);
        let slab: Domain = "slab:h=1,d=2".parse().unwrap();
        assert!((slab.delta(&[7.0, 0.2]) - 0.2).abs() < 1e-15);
        assert!(!slab.is_bounded());
    }

    #[test]
    fn parsing() {
        let balls: Domain = "balls:c=(±0.75,0),r=0.2".parse().unwrap();
        match balls.shape() {
            Shape::DisjointBalls(b) => {
                assert_eq!(b.len(), 2);
                assert_eq!(b[0].0, vec![0.75, 0.0]);
                assert_eq!(b[1].0, vec![-0.75, 0.0]);
            }
            other => panic!("{other:?}"),
        }
        assert!((balls.delta(&[-0.7, 0.0]) - 0.15).abs() < 1e-15);
        let b: Domain = "ball:r=2,c=(1,1,1)".parse().unwrap();
        assert_eq!(b.dim(), 3);
        for s in ["ball:r=1", "annulus:ri=0.5,ro=1", "balls:c=(±0.75,0),r=0.2", "intervals:[0,1],[2,3]", "slab:h=1,d=2"] {
            let d: Domain = s.parse().unwrap();
            let back: Domain = d.to_string().parse().unwrap();
            assert_eq!(back, d, "{s}");
        }
        assert!("ball".parse::<Domain>().is_err());
        assert!("balls:c=(±0.1,0),r=0.2".parse::<Domain>().is_err());
        assert!("intervals:[0,2],[1,3]".parse::<Domain>().is_err());
        assert!("cube:r=1".parse::<Domain>().is_err());
    }

    #[test]
    fn r_xy_examples() {
        let b = ball();
        assert!((b.r_xy(&[0.5, 0.0], &[0.5, 0.0]).unwrap() - 0.5).abs() < 1e-15);
        assert!((b.r_xy(&[0.9, 0.0], &[-0.9, 0.0]).unwrap() - 1.8).abs() < 1e-15);
        assert!((b.r_xy(&[0.0, 0.0], &[0.1, 0.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!(b.r_xy(&[1.5, 0.0], &[0.0, 0.0]).is_err());
    }

    #[test]
    fn characteristics() {
        let b = ball();
        assert_eq!(b.c11_characteristics(), Some((1.0, 1.0)));
        assert_eq!(b.kappa_fat(), (1.0, 0.5));
        let ann: Domain = "annulus:ri=0.5,ro=1".parse().unwrap();
        assert_eq!(ann.kappa_fat().0, 0.25);
    }

    #[test]
    fn uniform_ball_condition_holds() {
        for s in ["ball:r=1", "annulus:ri=0.5,ro=1", "ball:r=0.5,c=(0.2,0.1,0)", "balls:c=(±0.75,0),r=0.2"] {
            let d: Domain = s.parse().unwrap();
            let pts = d.sample_boundary(200, 7);
            assert!(pts.iter().all(|q| d.delta(q) < 1e-12 && d.distance_to(q) < 1e-12));
            assert!(d.uniform_ball_condition(&pts), "{s}");
        }
        // a radius larger than R fails the test
        let ann: Domain = "annulus:ri=0.5,ro=1".parse().unwrap();
        let mut wide = ann.clone();
        wide.c11 = Some((0.3, 1.0 / 0.3));
        assert!(!wide.uniform_ball_condition(&ann.sample_boundary(50, 1)));
    }

    #[test]
    fn kappa_fat_setup() {
        let setup = KappaFatSetup::new(&ball()).unwrap();
        assert_eq!(setup.z0, vec![0.25, 0.0]);
        assert_eq!(setup.eps1, 0.5 * 1.0 / 24.0);
        assert!(KappaFatSetup::with_z0(&ball(), vec![0.0, 0.0]).is_err());
        let (a, branch) = pick_a(&setup, &[0.0, 0.0], &[0.5, 0.0]).unwrap();
        assert_eq!(branch, ABranch::ReferencePoint);
        assert_eq!(a, setup.z0);
        let (a, branch) = pick_a(&setup, &[0.99, 0.0], &[0.995, 0.001]).unwrap();
        assert_eq!(branch, ABranch::Local);
        assert!(setup.in_b_set(&[0.99, 0.0], &[0.995, 0.001], &a).unwrap());
        assert!(setup.in_cap_region(&[0.9, 0.0]));
        assert!(!setup.in_cap_region(&[0.3, 0.0]));
    }

    fn random_pairs(domain: &Domain, n: usize, seed: u64) -> Vec<(Vec<f64>, Vec<f64>)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = domain.dim();
        let draw = |rng: &mut ChaCha8Rng| loop {
            // concentrate near the boundary so both branches of 𝓑 occur
            let p: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            if domain.contains_point(&p) && (domain.delta(&p) < 0.03 || rng.random_bool(0.3)) {
                return p;
            }
        };
        (0..n)
            .map(|_| {
                let x = draw(&mut rng);
                let y = if rng.random_bool(0.5) {
                    let q: Vec<f64> = x.iter().map(|c| c + rng.random_range(-0.02..0.02)).collect();
                    if domain.contains_point(&q) { q } else { x.clone() }
                } else {
                    draw(&mut rng)
                };
                (x, y)
            })
            .collect()
    }

    #[test]
    fn pick_a_membership_on_random_pairs() {
        for s in ["ball:r=1", "annulus:ri=0.5,ro=1", "balls:c=(±0.5,0),r=0.3"] {
            let domain: Domain = s.parse().unwrap();
            let setup = KappaFatSetup::new(&domain).unwrap();
            let mut local = 0;
            for (x, y) in random_pairs(&domain, 1000, 11) {
                let (a, branch) = pick_a(&setup, &x, &y).unwrap();
                assert!(setup.in_b_set(&x, &y, &a).unwrap(), "{s}: {x:?} {y:?}");
                if branch == ABranch::Local {
                    local += 1;
                    // (1/6) δ(A) ≤ r(x, y) ≤ 2κ⁻¹ δ(A) on the small-scale branch
                    let r = domain.r_xy(&x, &y).unwrap();
                    let da = domain.delta(&a);
                    assert!(da / 6.0 <= r && r <= 2.0 / setup.kappa * da);
                }
            }
            assert!(local > 0, "{s}");
        }
    }

    #[test]
    fn pick_a_for_coincident_centre_points() {
        let setup = KappaFatSetup::new(&ball()).unwrap();
        let (a, _) = pick_a(&setup, &[0.0, 0.0], &[0.0, 0.0]).unwrap();
        assert!(setup.in_b_set(&[0.0, 0.0], &[0.0, 0.0], &a).unwrap());
    }

    proptest! {
        #[test]
        fn delta_is_one_lipschitz(x in prop::collection::vec(-1.5f64..1.5, 2), y in prop::collection::vec(-1.5f64..1.5, 2)) {
            for s in ["ball:r=1", "annulus:ri=0.5,ro=1", "balls:c=(±0.75,0),r=0.2", "slab:h=1,d=2"] {
                let d: Domain = s.parse().unwrap();
                prop_assert!((d.delta(&x) - d.delta(&y)).abs() <= dist(&x, &y) + 1e-12);
            }
        }

        #[test]
        fn interval_delta_is_one_lipschitz(x in -1.0f64..4.0, y in -1.0f64..4.0) {
            let d: Domain = "intervals:[0,1],[2,3]".parse().unwrap();
            prop_assert!((d.delta(&[x]) - d.delta(&[y])).abs() <= (x - y).abs() + 1e-12);
        }
    }
}
