//! Orbits with prescribed combinatorics: nodal orbits, periodic orbits with a
//! given number of impacts per arc, orbits following an admissible word, and
//! asymptotic orbits with a linear-speed certificate.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::cells::{domain_coords, CellsError, FundamentalQuad, Half, Transition, SLAB_MARGIN};
use crate::dynamics::{angle_gap, billiard_power, billiard_step, iterate, reflection_residual, DynamicsError, PhasePoint, StepRecord};
use crate::polygon::{CircularPolygon, PolygonError, RationalStructure};
use crate::symbolic::{Alphabet, AdmissibleWord, Symbol, SymbolicConstants, SymbolicError};

pub const TOL_REFLECT: f64 = 1e-9;
pub const TOL_CLOSURE_ORBIT: f64 = 1e-8;
/// Deepest word realized at double precision.
pub const MAX_SHOOTING_TURNS: usize = 40;
/// Interior margin of each visited quad, as a fraction of its height.
pub const MEMBERSHIP_MARGIN: f64 = SLAB_MARGIN / 2.0;
/// Fixed lateral coordinate of the first shooting node.
pub const SHOOTING_S0: f64 = 0.37;
/// Minimal distance (in `s`) kept from the singularity levels `s = 0, 1/2, 1`.
pub const SINGULAR_CLEARANCE: f64 = 1e-9;
/// Accepted node mismatch in domain coordinates, relative to the largest `t`.
pub const SHOOTING_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RealizationError {
    #[error("polygon has no rational structure")]
    NotRational,
    #[error("impacts per arc {0:?} lie outside the limit cone of the polytope")]
    NotInPolytope(Vec<i64>),
    #[error("no convergence: residual {residual:e}")]
    NoConvergence { residual: f64 },
    #[error("word is not admissible")]
    NotAdmissible,
    #[error("realization failed; deepest turn reached {turn}")]
    RealizationFailed { turn: usize },
    #[error("{0} turns exceed the shooting depth limit")]
    TooDeep(usize),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Cells(#[from] CellsError),
    #[error(transparent)]
    Symbolic(#[from] SymbolicError),
}

impl From<PolygonError> for RealizationError {
    fn from(_: PolygonError) -> Self {
        Self::NotRational
    }
}

/// A finite orbit segment. `points` has one more entry than `lengths`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Orbit {
    pub points: Vec<PhasePoint>,
    pub impacts: Vec<[f64; 2]>,
    pub lengths: Vec<f64>,
    pub itinerary: Option<AdmissibleWord>,
    /// For periodic orbits, the largest `|f(x_m) − x_{m+1}|` over one period.
    pub closure_residual: Option<f64>,
}

impl Orbit {
    fn from_steps(poly: &CircularPolygon, x0: PhasePoint, steps: &[StepRecord]) -> Self {
        let mut points = Vec::with_capacity(steps.len() + 1);
        points.push(PhasePoint::new(poly.reduce(x0.phi), x0.theta));
        points.extend(steps.iter().map(|s| s.post));
        Self::from_points(poly, points)
    }

    /// Links are recomputed from the boundary points.
    fn from_points(poly: &CircularPolygon, points: Vec<PhasePoint>) -> Self {
        let impacts: Vec<[f64; 2]> = points
            .iter()
            .map(|p| {
                let z = poly.point_at(p.phi);
                [z.re, z.im]
            })
            .collect();
        let lengths = impacts
            .windows(2)
            .map(|w| (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]))
            .collect();
        Self {
            points,
            impacts,
            lengths,
            itinerary: None,
            closure_residual: None,
        }
    }

    pub fn steps(&self) -> usize {
        self.lengths.len()
    }

    pub fn length(&self) -> f64 {
        self.lengths.iter().sum()
    }

    pub fn thetas(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.theta).collect()
    }

    /// Largest reflection-law mismatch over all links.
    pub fn max_reflection_residual(&self, poly: &CircularPolygon) -> f64 {
        let k = poly.k();
        self.points
            .windows(2)
            .zip(&self.lengths)
            .map(|(w, &len)| {
                let (from, to) = (poly.arc_index(w[0].phi), poly.arc_index(w[1].phi));
                let rec = StepRecord {
                    pre: w[0],
                    post: w[1],
                    arc_from: from,
                    arc_to: to,
                    crossed_nodes: (to + k - from) % k,
                    link_length: len,
                    node_hit: false,
                };
                reflection_residual(poly, &rec)
            })
            .fold(0.0, f64::max)
    }

    /// Every link stays on its arc or moves to the next one.
    pub fn is_sliding(&self, poly: &CircularPolygon) -> bool {
        let k = poly.k();
        self.points.windows(2).all(|w| {
            let (a, b) = (poly.arc_index(w[0].phi), poly.arc_index(w[1].phi));
            b == a || b == (a + 1) % k
        })
    }

    /// Impacts per arc among the first `steps()` points.
    pub fn arc_counts(&self, poly: &CircularPolygon) -> Vec<i64> {
        let mut out = vec![0; poly.k()];
        for p in &self.points[..self.steps()] {
            out[poly.arc_index(p.phi)] += 1;
        }
        out
    }
}

/// `Σ_j i m_j 2 r_j sin(δ/2i)`.
pub fn nodal_length(poly: &CircularPolygon, rs: &RationalStructure, i: u64) -> f64 {
    let psi = rs.delta / (2.0 * i as f64);
    (0..poly.k())
        .map(|j| (i * rs.multiplicities[j]) as f64 * 2.0 * poly.radius(j) * psi.sin())
        .sum()
}

/// The constant-angle orbit from the first node with `θ = δ/2i`, over one period.
pub fn nodal_orbit(poly: &CircularPolygon, i: u64) -> Result<Orbit, RealizationError> {
    let rs = poly.rational_structure(1e-12)?;
    let q = rs.total * i;
    let x0 = PhasePoint::new(poly.start_angle(0), rs.delta / (2.0 * i as f64));
    let steps = iterate(poly, x0, q as i64)?;
    let mut orbit = Orbit::from_steps(poly, x0, &steps);
    orbit.closure_residual = Some(orbit.points[q as usize].distance(&orbit.points[0]));
    Ok(orbit)
}

/// Departure and arrival angles of the chord from `φ0` on arc `j0` to `φ1` on arc `j1`.
fn link_angles(poly: &CircularPolygon, j0: usize, phi0: f64, j1: usize, phi1: f64) -> (f64, f64) {
    let z0 = poly.arc(j0).point(phi0);
    let z1 = poly.arc(j1).point(phi1);
    let u = (z1 - z0) / (z1 - z0).norm();
    let t0 = Complex64::i() * Complex64::cis(phi0);
    let t1 = Complex64::i() * Complex64::cis(phi1);
    ((u * t0.conj()).arg(), (t1 * u.conj()).arg())
}

/// Result of a periodic search.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeriodicOrbit {
    pub orbit: Orbit,
    pub impacts_per_arc: Vec<i64>,
    /// Offset of the first impact from `a_j`, per arc.
    pub offsets: Vec<f64>,
    /// Constant angle of reflection on each arc.
    pub angles: Vec<f64>,
    /// Newton residual of the link equations.
    pub residual: f64,
}

impl PeriodicOrbit {
    pub fn period(&self) -> i64 {
        self.impacts_per_arc.iter().sum()
    }
}

/// Closed-cone gate `α_j^- x_j ≤ x_{j+1} ≤ α_j^+ x_j`.
pub fn in_limit_cone(transitions: &[Transition], x: &[i64]) -> bool {
    let k = transitions.len();
    x.len() == k
        && x.iter().all(|&v| v >= 1)
        && (0..k).all(|j| {
            let (a, b) = (x[j] as f64, x[(j + 1) % k] as f64);
            let t = &transitions[j];
            t.alpha_minus * a <= b * (1.0 + 1e-12) && b <= t.alpha_plus * a * (1.0 + 1e-12)
        })
}

/// A `(1, q)`-periodic sliding orbit with `x_j` impacts on arc `j`.
/// Starting configuration of the periodic search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum InitStrategy {
    /// Equally spaced impacts from each node, `ψ_j = δ_j/2x_j`, polished by
    /// Newton directly; falls back to length ascent when Newton fails.
    #[default]
    EqualSpacing,
    /// Length maximization by coordinate ascent from centred spacing, then Newton.
    Ascent,
}

pub fn find_periodic(poly: &CircularPolygon, x: &[i64], init: InitStrategy) -> Result<PeriodicOrbit, RealizationError> {
    let transitions = Transition::all(poly);
    if !in_limit_cone(&transitions, x) {
        return Err(RealizationError::NotInPolytope(x.to_vec()));
    }
    let k = poly.k();
    let mut v = vec![0.0; 2 * k];
    for j in 0..k {
        let psi = poly.delta(j) / (2.0 * x[j] as f64);
        v[2 * j] = if init == InitStrategy::Ascent { psi } else { 0.0 };
        v[2 * j + 1] = psi;
    }
    let residual = |v: &[f64]| -> Option<Vec<f64>> { Some(periodic_residual(poly, x, v)) };
    let polish = |v: Vec<f64>| damped_newton(&residual, &|v| fd_jacobian(&residual, v, 1e-7), v, 1e-14, 1e-11, 60);
    let solved = match init {
        InitStrategy::EqualSpacing => polish(v.clone()).or_else(|| polish(ascend_length(poly, x, &v, 200))),
        InitStrategy::Ascent => polish(ascend_length(poly, x, &v, 200)),
    };
    let Some((v, res)) = solved else {
        return Err(RealizationError::NoConvergence { residual: f64::NAN });
    };
    // Impacts from the reduced solution; forward iteration over a whole
    // period would amplify rounding by the orbit's instability.
    let mut points = Vec::with_capacity(x.iter().sum::<i64>() as usize + 1);
    for j in 0..k {
        for l in 0..x[j] {
            let phi = poly.start_angle(j as i64) + v[2 * j] + 2.0 * l as f64 * v[2 * j + 1];
            points.push(PhasePoint::new(poly.reduce(phi), v[2 * j + 1]));
        }
    }
    points.push(points[0]);
    let mut defect: f64 = 0.0;
    for w in points.windows(2) {
        defect = defect.max(billiard_step(poly, w[0])?.post.distance(&w[1]));
    }
    let mut orbit = Orbit::from_points(poly, points);
    orbit.closure_residual = Some(defect);
    // impacts may sit exactly on a node, so arcs are checked with a margin
    // rather than through `arc_counts`
    let on_arcs = (0..k).all(|j| {
        let last = v[2 * j] + 2.0 * (x[j] - 1) as f64 * v[2 * j + 1];
        v[2 * j] >= -SINGULAR_CLEARANCE && last <= poly.delta(j) + SINGULAR_CLEARANCE
    });
    if defect > TOL_CLOSURE_ORBIT || !on_arcs {
        return Err(RealizationError::NoConvergence { residual: defect });
    }
    Ok(PeriodicOrbit {
        orbit,
        impacts_per_arc: x.to_vec(),
        offsets: (0..k).map(|j| v[2 * j]).collect(),
        angles: (0..k).map(|j| v[2 * j + 1]).collect(),
        residual: res,
    })
}

/// Reflection law on each transition link, unknowns `(u_j, ψ_j)` per arc.
fn periodic_residual(poly: &CircularPolygon, x: &[i64], v: &[f64]) -> Vec<f64> {
    let k = poly.k();
    let mut r = Vec::with_capacity(2 * k);
    for j in 0..k {
        let n = (j + 1) % k;
        let last = poly.start_angle(j as i64) + v[2 * j] + 2.0 * (x[j] - 1) as f64 * v[2 * j + 1];
        let first = poly.start_angle(j as i64 + 1) + v[2 * n];
        let (out, inn) = link_angles(poly, j, last, n, first);
        r.push(out - v[2 * j + 1]);
        r.push(inn - v[2 * n + 1]);
    }
    r
}

/// Cyclic coordinate ascent of the total length over all `q` impact angles,
/// each refined by golden-section search between its neighbours.
fn ascend_length(poly: &CircularPolygon, x: &[i64], v: &[f64], sweeps: usize) -> Vec<f64> {
    let k = poly.k();
    let mut phis = Vec::new();
    let mut arcs = Vec::new();
    for j in 0..k {
        for l in 0..x[j] {
            phis.push(poly.start_angle(j as i64) + v[2 * j] + 2.0 * l as f64 * v[2 * j + 1]);
            arcs.push(j);
        }
    }
    let q = phis.len();
    let z = |m: usize, phi: f64| poly.arc(arcs[m]).point(phi);
    for _ in 0..sweeps {
        for m in 0..q {
            let (p, n) = ((m + q - 1) % q, (m + 1) % q);
            let arc = poly.arc(arcs[m]);
            let (zp, zn) = (z(p, phis[p]), z(n, phis[n]));
            let lo = if arcs[p] == arcs[m] { phis[p] } else { arc.a };
            let mut hi = if arcs[n] == arcs[m] { phis[n] } else { arc.b };
            if n == 0 && hi < lo {
                hi += std::f64::consts::TAU;
            }
            let f = |phi: f64| (arc.point(phi) - zp).norm() + (zn - arc.point(phi)).norm();
            phis[m] = golden_max(f, lo, hi, 1e-13);
        }
    }
    let mut out = vec![0.0; 2 * k];
    let mut m = 0;
    for j in 0..k {
        let first = phis[m];
        let last = phis[m + x[j] as usize - 1];
        out[2 * j] = first - poly.start_angle(j as i64);
        out[2 * j + 1] = if x[j] > 1 {
            (last - first) / (2.0 * (x[j] - 1) as f64)
        } else {
            v[2 * j + 1]
        };
        m += x[j] as usize;
    }
    out
}

fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

fn fd_jacobian(f: &dyn Fn(&[f64]) -> Option<Vec<f64>>, v: &[f64], rel: f64) -> Option<DMatrix<f64>> {
    let m = f(v)?.len();
    let n = v.len();
    let mut jac = DMatrix::zeros(m, n);
    let mut w = v.to_vec();
    for c in 0..n {
        let h = rel * v[c].abs().max(1e-3);
        w[c] = v[c] + h;
        let fp = f(&w)?;
        w[c] = v[c] - h;
        let fm = f(&w)?;
        w[c] = v[c];
        for r in 0..m {
            jac[(r, c)] = (fp[r] - fm[r]) / (2.0 * h);
        }
    }
    Some(jac)
}

fn max_norm(r: &[f64]) -> f64 {
    r.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Newton's method with step halving on the max-norm of the residual. Stops
/// at `tol` or on stagnation; the iterate is returned when within `accept`.
fn damped_newton(
    f: &dyn Fn(&[f64]) -> Option<Vec<f64>>,
    jac: &dyn Fn(&[f64]) -> Option<DMatrix<f64>>,
    mut v: Vec<f64>,
    tol: f64,
    accept: f64,
    max_iter: usize,
) -> Option<(Vec<f64>, f64)> {
    let mut r = f(&v)?;
    let mut norm = max_norm(&r);
    for _ in 0..max_iter {
        if norm <= tol {
            return Some((v, norm));
        }
        let j = jac(&v)?; 
        let step = j.lu().solve(&DVector::from_vec(r.clone()))?;
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let trial: Vec<f64> = v.iter().zip(step.iter()).map(|(a, d)| a - lambda * d).collect();
            if let Some(rt) = f(&trial) {
                let nt = max_norm(&rt);
                if nt.is_finite() && nt < norm {
                    v = trial;
                    r = rt;
                    norm = nt;
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    (norm <= accept).then_some((v, norm))
}

/// Analytic gradient of the total length in the impact angles,
/// `r_m (cos θ_in − cos θ_out)` at each impact of a closed orbit.
pub fn length_gradient(poly: &CircularPolygon, orbit: &Orbit) -> Vec<f64> {
    let q = orbit.steps();
    (0..q)
        .map(|m| {
            let p = &orbit.points;
            let prev = &p[(m + q - 1) % q];
            let cur = &p[m];
            let next = &p[m + 1];
            let (_, th_in) = link_angles(poly, poly.arc_index(prev.phi), prev.phi, poly.arc_index(cur.phi), cur.phi);
            let (th_out, _) = link_angles(poly, poly.arc_index(cur.phi), cur.phi, poly.arc_index(next.phi), next.phi);
            poly.radius(poly.arc_index(cur.phi)) * (th_in.cos() - th_out.cos())
        })
        .collect()
}

/// Central finite differences of the closed polygon length in each impact angle.
pub fn length_gradient_fd(poly: &CircularPolygon, orbit: &Orbit, h: f64) -> Vec<f64> {
    let q = orbit.steps();
    let arcs: Vec<usize> = orbit.points[..q].iter().map(|p| poly.arc_index(p.phi)).collect();
    let phis: Vec<f64> = orbit.points[..q].iter().map(|p| p.phi).collect();
    let total = |phis: &[f64]| -> f64 {
        (0..q)
            .map(|m| {
                let n = (m + 1) % q;
                (poly.arc(arcs[n]).point(phis[n]) - poly.arc(arcs[m]).point(phis[m])).norm()
            })
            .sum()
    };
    (0..q)
        .map(|m| {
            let mut w = phis.clone();
            w[m] += h;
            let up = total(&w);
            w[m] -= 2.0 * h;
            let down = total(&w);
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// One visit of an itinerary: entering `D_j` inside `Q^ς_{j,n}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Visit {
    pub j: usize,
    pub n: i64,
    pub half: Half,
}

/// A realized finite itinerary: shooting nodes, one per visit, plus the
/// orbit through them.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RealizedItinerary {
    pub orbit: Orbit,
    pub visits: Vec<Visit>,
    pub nodes: Vec<PhasePoint>,
    /// Impact index of each node, the partial sums `s^i_j`.
    pub node_index: Vec<i64>,
    /// Largest mismatch between `f^n(node_m)` and `node_{m+1}` in domain coordinates.
    pub shooting_residual: f64,
    /// Smallest interior margin over all nodes, as a fraction of the quad height.
    pub min_margin: f64,
}

impl RealizedItinerary {
    /// Every node keeps the interior margin `MEMBERSHIP_MARGIN`.
    pub fn is_faithful(&self) -> bool {
        self.min_margin >= MEMBERSHIP_MARGIN
    }
}

fn visits_of(word: &AdmissibleWord) -> Vec<Visit> {
    word.symbols
        .iter()
        .flat_map(|s| s.0.iter().enumerate().map(|(j, &q)| Visit { j, n: q.abs(), half: Half::from_sign(q) }))
        .collect()
}

/// Margin of `(s, t)` inside the visit's half quad, in units of its height,
/// or a negative number when outside.
fn visit_margin(v: &Visit, s: f64, t: f64) -> f64 {
    let (lo, hi) = v.half.t_range(v.n);
    let h = hi - lo;
    ((t - lo) / h).min((hi - t) / h).min(s).min(1.0 - s)
}

/// Multiple shooting through every visit of the word. Unknowns are the
/// domain coordinates of each node, with `s_0` and the last `t` pinned.
pub fn realize_itinerary(
    poly: &CircularPolygon,
    alphabet: &Alphabet,
    word: &AdmissibleWord,
) -> Result<RealizedItinerary, RealizationError> {
    if word.is_empty() || !alphabet.is_admissible_word(word)? {
        return Err(RealizationError::NotAdmissible);
    }
    if word.len() > MAX_SHOOTING_TURNS {
        return Err(RealizationError::TooDeep(word.len()));
    }
    let k = poly.k();
    let visits = visits_of(word);
    let nv = visits.len();
    let centre = |v: &Visit| {
        let (lo, hi) = v.half.t_range(v.n);
        0.5 * (lo + hi)
    };
    // Continuation in the number of visits: each new node starts at the image
    // of the previous one with its t moved to the centre of its quad.
    let mut w = vec![SHOOTING_S0, centre(&visits[0])];
    let mut res = 0.0;
    for m in 1..nv {
        let g = if m == 1 {
            vec![0.0, 1.0]
        } else {
            pin_sensitivity(poly, &visits[..m], &w).ok_or(RealizationError::RealizationFailed { turn: (m - 1) / k })?
        };
        let guess = extend_guess(poly, &visits[..=m], &w, &g).ok_or(RealizationError::RealizationFailed { turn: m / k })?;
        let (sol, r) = shoot(poly, &visits[..=m], guess).ok_or(RealizationError::RealizationFailed { turn: m / k })?;
        w = sol;
        res = r;
    }
    let mut nodes = Vec::with_capacity(nv);
    let mut min_margin = f64::INFINITY;
    for (m, v) in visits.iter().enumerate() {
        let (s, t) = (w[2 * m], w[2 * m + 1]);
        let margin = visit_margin(v, s, t);
        let near_singular = [0.0, 0.5, 1.0].iter().any(|l| (s - l).abs() < SINGULAR_CLEARANCE);
        if margin <= 0.0 || near_singular {
            return Err(RealizationError::RealizationFailed { turn: m / k });
        }
        min_margin = min_margin.min(margin);
        nodes.push(FundamentalQuad::new(poly, v.j, v.n, v.half)?.point(poly, s, t));
    }
    let mut node_index = Vec::with_capacity(nv);
    let mut acc = 0i64;
    for v in &visits {
        node_index.push(acc);
        acc += v.n;
    }
    let orbit = orbit_through_nodes(poly, &nodes, &visits, word)?;
    Ok(RealizedItinerary {
        orbit,
        visits,
        nodes,
        node_index,
        shooting_residual: res,
        min_margin,
    })
}

fn shooting_image(poly: &CircularPolygon, v: &Visit, s: f64, t: f64) -> Option<(f64, f64)> {
    if s + t <= 0.0 || t <= 0.0 {
        return None;
    }
    let delta = poly.delta(v.j);
    let x = PhasePoint::new(poly.start_angle(v.j as i64) + s * delta / (s + t), delta / (2.0 * (s + t)));
    let y = billiard_power(poly, x, v.n as u64).ok()?;
    Some(domain_coords(poly, (v.j + 1) % poly.k(), y))
}

/// Newton on the node coordinates `w = (s_0, t_0, …)` with `s_0` and the last
/// `t` held at their values in `guess`. Iterates never leave the quads.
fn shoot(poly: &CircularPolygon, visits: &[Visit], guess: Vec<f64>) -> Option<(Vec<f64>, f64)> {
    let nv = visits.len();
    let (s0, t_last) = (guess[0], guess[2 * nv - 1]);
    let free: Vec<usize> = (1..2 * nv - 1).collect();
    let expand = |u: &[f64]| -> Vec<f64> {
        let mut w = Vec::with_capacity(2 * nv);
        w.push(s0);
        w.extend_from_slice(u);
        w.push(t_last);
        w
    };
    let residual = |u: &[f64]| -> Option<Vec<f64>> {
        let w = expand(u);
        if visits.iter().enumerate().any(|(m, v)| visit_margin(v, w[2 * m], w[2 * m + 1]) <= 0.0) {
            return None;
        }
        let mut r = Vec::with_capacity(2 * nv - 2);
        for m in 0..nv - 1 {
            let (s1, t1) = shooting_image(poly, &visits[m], w[2 * m], w[2 * m + 1])?;
            r.push(s1 - w[2 * m + 2]);
            r.push(t1 - w[2 * m + 3]);
        }
        Some(r)
    };
    let jacobian = |u: &[f64]| -> Option<DMatrix<f64>> {
        Some(shooting_jacobian(poly, visits, &expand(u))?.select_columns(free.iter()))
    };
    let u0 = guess[1..2 * nv - 1].to_vec();
    // Absolute precision of an image coordinate degrades linearly with t.
    let scale = guess.iter().skip(1).step_by(2).fold(1.0f64, |m, t| m.max(t.abs()));
    let (u, res) = damped_newton(&residual, &jacobian, u0, 1e-12 * scale, SHOOTING_TOL * scale, 80)?;
    Some((expand(&u), res))
}

fn shooting_jacobian(poly: &CircularPolygon, visits: &[Visit], w: &[f64]) -> Option<DMatrix<f64>> {
    let nv = visits.len();
    let mut jf = DMatrix::zeros(2 * nv - 2, 2 * nv);
    for m in 0..nv - 1 {
        for c in 0..2 {
            // Steps stay inside the quad: near its edges the map changes branch.
            let (lo, hi) = if c == 0 { (0.0, 1.0) } else { visits[m].half.t_range(visits[m].n) };
            let x = w[2 * m + c];
            let h = (1e-7 * x.abs().max(1.0)).min(0.5 * (x - lo).min(hi - x)).max(1e-13 * x.abs().max(1.0));
            let mut a = [w[2 * m], w[2 * m + 1]];
            let mut b = a;
            a[c] += h;
            b[c] -= h;
            let pa = shooting_image(poly, &visits[m], a[0], a[1])?;
            let pb = shooting_image(poly, &visits[m], b[0], b[1])?;
            jf[(2 * m, 2 * m + c)] = (pa.0 - pb.0) / (2.0 * h);
            jf[(2 * m + 1, 2 * m + c)] = (pa.1 - pb.1) / (2.0 * h);
        }
        jf[(2 * m, 2 * m + 2)] = -1.0;
        jf[(2 * m + 1, 2 * m + 3)] = -1.0;
    }
    Some(jf)
}

/// Derivative of every node coordinate with respect to the pinned last `t`.
fn pin_sensitivity(poly: &CircularPolygon, visits: &[Visit], w: &[f64]) -> Option<Vec<f64>> {
    let nv = visits.len();
    let jf = shooting_jacobian(poly, visits, w)?;
    let free: Vec<usize> = (1..2 * nv - 1).collect();
    let rhs = -jf.column(2 * nv - 1);
    let du = jf.select_columns(free.iter()).lu().solve(&rhs)?;
    let mut g = Vec::with_capacity(2 * nv);
    g.push(0.0);
    g.extend(du.iter());
    g.push(1.0);
    Some(g)
}

/// Samples per quad when scanning the previous node's `t` for a preimage.
const SCAN_SAMPLES: usize = 64;

/// Chooses the previous node's `t` so that its image lands at the centre of
/// the new visit's slab, among all preimages the one keeping the older nodes
/// deepest inside their quads, to first order along `g`.
fn extend_guess(poly: &CircularPolygon, visits: &[Visit], sol: &[f64], g: &[f64]) -> Option<Vec<f64>> {
    let nv = visits.len();
    let (prev, next) = (&visits[nv - 2], &visits[nv - 1]);
    let s_prev = sol[2 * nv - 4];
    let tau = sol[2 * nv - 3];
    let (lo, hi) = prev.half.t_range(prev.n);
    let (nlo, nhi) = next.half.t_range(next.n);
    let target = 0.5 * (nlo + nhi);
    let gap = |t: f64| shooting_image(poly, prev, s_prev, t).map(|(s1, t1)| (s1, t1 - target));
    let worst = |x: f64| {
        visits[..nv - 1]
            .iter()
            .enumerate()
            .map(|(i, v)| visit_margin(v, 0.5, sol[2 * i + 1] + g[2 * i + 1] * (x - tau)))
            .fold(f64::INFINITY, f64::min)
    };
    let edge = 1e-12 * hi;
    let ts: Vec<f64> = (0..=SCAN_SAMPLES)
        .map(|i| (lo + (hi - lo) * i as f64 / SCAN_SAMPLES as f64).clamp(lo + edge, hi - edge))
        .collect();
    let vals: Vec<Option<(f64, f64)>> = ts.iter().map(|&t| gap(t)).collect();
    let mut best: Option<(f64, f64)> = None;
    for i in 0..SCAN_SAMPLES {
        let (Some((_, ga)), Some((_, gb))) = (vals[i], vals[i + 1]) else { continue };
        if ga.signum() == gb.signum() {
            continue;
        }
        let (mut a, mut b, mut fa) = (ts[i], ts[i + 1], ga);
        for _ in 0..100 {
            let m = 0.5 * (a + b);
            let Some((_, fm)) = gap(m) else { break };
            if fm.signum() == fa.signum() {
                a = m;
                fa = fm;
            } else {
                b = m;
            }
        }
        let t = 0.5 * (a + b);
        let score = worst(t);
        if best.is_none_or(|(_, s)| score > s) {
            best = Some((t, score));
        }
    }
    let (t, score) = best?;
    if score <= 0.0 {
        return None;
    }
    let mut guess: Vec<f64> = sol.iter().zip(g).map(|(x, d)| x + d * (t - tau)).collect();
    let (s1, t1) = shooting_image(poly, prev, guess[2 * nv - 4], guess[2 * nv - 3])?;
    guess.push(s1.clamp(1e-9, 1.0 - 1e-9));
    guess.push(t1.clamp(nlo + 1e-9, nhi - 1e-9));
    Some(guess)
}

/// Impacts of every visit in closed form along the arc, then the transition
/// link taken from the billiard map; the final point closes the last visit.
fn orbit_through_nodes(
    poly: &CircularPolygon,
    nodes: &[PhasePoint],
    visits: &[Visit],
    word: &AdmissibleWord,
) -> Result<Orbit, RealizationError> {
    let total: i64 = visits.iter().map(|v| v.n).sum();
    let mut points = Vec::with_capacity(total as usize + 1);
    for (x, v) in nodes.iter().zip(visits) {
        for l in 0..v.n {
            points.push(PhasePoint::new(poly.reduce(x.phi + 2.0 * l as f64 * x.theta), x.theta));
        }
    }
    let last = *points.last().unwrap();
    points.push(billiard_step(poly, last)?.post);
    let mut orbit = Orbit::from_points(poly, points);
    orbit.itinerary = Some(word.clone());
    Ok(orbit)
}

/// Constants of the linear-speed estimates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpeedConstants {
    pub d_minus: f64,
    pub d_plus: f64,
    pub a: f64,
    pub b: f64,
}

pub fn speed_constants(poly: &CircularPolygon, alphabet: &Alphabet) -> SpeedConstants {
    let c = SymbolicConstants::new(alphabet);
    let chi = &alphabet.chi;
    let c0 = chi[0] as f64;
    let d0 = poly.delta(0);
    let dmax = poly.deltas().iter().copied().fold(0.0, f64::max);
    let dmin = poly.deltas().iter().copied().fold(f64::INFINITY, f64::min);
    let up = chi
        .iter()
        .map(|&x| (c0 + 1.0) * x as f64 / ((x as f64 - 1.0) * c0))
        .fold(0.0, f64::max);
    let down = chi
        .iter()
        .map(|&x| (c0 - 1.0) * x as f64 / ((x as f64 + 1.0) * c0))
        .fold(f64::INFINITY, f64::min);
    let d_plus = c.lambda_prime / d0 * dmax * up;
    let d_minus = c.nu_prime / d0 * dmin * down;
    SpeedConstants {
        d_minus,
        d_plus,
        a: (2.0 * c0 - 2.0) / (c0 * d0 * d_plus),
        b: (2.0 * c0 + 2.0) / (c0 * d0 * d_minus),
    }
}

/// Observed extremes of `l θ_l / θ_0` against `[n d_-, n d_+]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpeedCertificate {
    pub n: i64,
    pub constants: SpeedConstants,
    pub min_ratio: f64,
    pub max_ratio: f64,
    /// `θ_l = θ_0` for `l < n`.
    pub constant_start: bool,
    /// `n d_- ≤ l θ_l/θ_0 ≤ n d_+` for every impact `l ≥ n`.
    pub ratio_bounds_hold: bool,
    /// `1/θ_l ≤ b l` for every impact `l ≥ n`.
    pub inverse_speed_holds: bool,
}

/// The `ξ`-maximal word from `n`: `|q^i_j| = ξ^i_j(n)`, with the given signs
/// (all positive when `signs` is empty).
pub fn xi_maximal_word(alphabet: &Alphabet, n: i64, turns: usize, signs: &[i64]) -> Result<AdmissibleWord, RealizationError> {
    let k = alphabet.k();
    let mut symbols = Vec::with_capacity(turns);
    for i in 0..turns {
        let mut s = Vec::with_capacity(k);
        for j in 0..k {
            let (_, xi) = alphabet.xi_bounds(i as i64, j, n)?;
            let sign = signs.get(i * k + j).copied().unwrap_or(1).signum();
            s.push(if sign < 0 { -xi } else { xi });
        }
        symbols.push(Symbol(s));
    }
    Ok(AdmissibleWord::finite(symbols))
}

/// A random admissible word: each entry is drawn uniformly from the
/// successors of the previous one that can be continued, with a random sign.
pub fn random_word<R: Rng>(alphabet: &Alphabet, rng: &mut R, start: i64, turns: usize) -> Result<AdmissibleWord, RealizationError> {
    let k = alphabet.k();
    let mut prev = start.max(alphabet.chi[0]);
    let mut symbols = Vec::with_capacity(turns);
    for i in 0..turns {
        let mut s = Vec::with_capacity(k);
        for j in 0..k {
            let n = if i == 0 && j == 0 {
                prev
            } else {
                let (mut lo, hi) = alphabet
                    .successors((j + k - 1) % k, prev)?
                    .ok_or(RealizationError::NotAdmissible)?;
                // skip small values that leave no successor on the next arc
                while lo < hi && alphabet.successors(j, lo)?.is_none() {
                    lo += 1;
                }
                rng.gen_range(lo..=hi)
            };
            s.push(if rng.gen_bool(0.5) { n } else { -n });
            prev = n;
        }
        symbols.push(Symbol(s));
    }
    Ok(AdmissibleWord::finite(symbols))
}

pub fn asymptotic_orbit(
    poly: &CircularPolygon,
    alphabet: &Alphabet,
    n: i64,
    turns: usize,
) -> Result<(RealizedItinerary, SpeedCertificate), RealizationError> {
    let word = xi_maximal_word(alphabet, n, turns, &[])?;
    let realized = realize_itinerary(poly, alphabet, &word)?;
    let constants = speed_constants(poly, alphabet);
    let thetas = realized.orbit.thetas();
    let theta0 = thetas[0];
    let constant_start = thetas[..n as usize].iter().all(|&t| t == theta0);
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    let mut inverse_speed_holds = true;
    for (l, &t) in thetas.iter().enumerate().skip(n as usize) {
        if 1.0 / t > constants.b * l as f64 {
            inverse_speed_holds = false;
        }
        let r = l as f64 * t / theta0;
        lo = lo.min(r);
        hi = hi.max(r);
    }
    let nf = n as f64;
    let cert = SpeedCertificate {
        n,
        min_ratio: lo,
        max_ratio: hi,
        constant_start,
        ratio_bounds_hold: nf * constants.d_minus <= lo && hi <= nf * constants.d_plus,
        inverse_speed_holds,
        constants,
    };
    Ok((realized, cert))
}

/// Steps until the orbit of `x` next enters the fundamental domain `D_0`.
pub fn first_return_time(poly: &CircularPolygon, x: PhasePoint, max_steps: usize) -> Result<Option<usize>, RealizationError> {
    let mut cur = x;
    for m in 1..=max_steps {
        let rec = billiard_step(poly, cur)?;
        cur = rec.post;
        if rec.arc_to == 0 && rec.arc_from != 0 {
            let (s, _) = domain_coords(poly, 0, cur);
            if (0.0..1.0).contains(&s) {
                return Ok(Some(m));
            }
        }
    }
    Ok(None)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DivergenceReport {
    /// `min l θ_l` over all orbits and `l ≥ 1`.
    pub min_l_theta: f64,
    /// Smallest `Σ_{l<N} θ_l / Σ_{l<N/2} θ_l` over the orbits.
    pub min_sum_ratio: f64,
}

pub fn divergence_check(orbits: &[Orbit]) -> DivergenceReport {
    let mut min_l_theta = f64::INFINITY;
    let mut min_sum_ratio = f64::INFINITY;
    for o in orbits {
        let th = o.thetas();
        for (l, t) in th.iter().enumerate().skip(1) {
            min_l_theta = min_l_theta.min(l as f64 * t);
        }
        let n = th.len();
        let half: f64 = th[..n / 2].iter().sum();
        let all: f64 = th.iter().sum();
        min_sum_ratio = min_sum_ratio.min(all / half);
    }
    DivergenceReport { min_l_theta, min_sum_ratio }
}

/// An orbit of `n` steps from `x`.
pub fn orbit_from(poly: &CircularPolygon, x: PhasePoint, n: usize) -> Result<Orbit, RealizationError> {
    let steps = iterate(poly, x, n as i64)?;
    Ok(Orbit::from_steps(poly, x, &steps))
}

/// `|φ_q − φ_0|` on the circle and `|θ_q − θ_0|` of a closed orbit.
pub fn closure_parts(orbit: &Orbit) -> (f64, f64) {
    let (a, b) = (orbit.points[0], *orbit.points.last().unwrap());
    (angle_gap(a.phi, b.phi), (a.theta - b.theta).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symbolic::ChiPolicy;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn ellipse() -> CircularPolygon {
        CircularPolygon::pseudo_ellipse(FRAC_PI_2, 1.0, 2.0).unwrap()
    }

    #[test]
    fn nodal_orbits() {
        let e = ellipse();
        let o = nodal_orbit(&e, 1).unwrap();
        assert_eq!(o.steps(), 4);
        assert!((o.length() - 6.0 * 2f64.sqrt()).abs() < 1e-12);
        assert!(o.closure_residual.unwrap() < 1e-12);
        let egg = CircularPolygon::moss_egg(1.0).unwrap();
        let o = nodal_orbit(&egg, 2).unwrap();
        assert_eq!(o.steps(), 16);
        let expect = 4.0 * (PI / 16.0).sin() * (12.0 - 2.0 * 2f64.sqrt());
        assert!((o.length() - expect).abs() < 1e-9);
        let o = nodal_orbit(&e, 100).unwrap();
        let q = o.steps() as f64;
        let gamma = e.total_length();
        let c = (o.length() - gamma) * q * q;
        let target = -PI * PI * gamma / 6.0;
        assert!(((c - target) / target).abs() < 1e-3);
        assert!(o.max_reflection_residual(&e) < 1e-9);
        assert!(o.is_sliding(&e));
    }

    #[test]
    fn periodic_matches_nodal() {
        let e = ellipse();
        for i in [1u64, 3, 10] {
            let n = nodal_orbit(&e, i).unwrap();
            let x = vec![i as i64; 4];
            let p = find_periodic(&e, &x, InitStrategy::EqualSpacing).unwrap();
            assert!((p.orbit.length() - n.length()).abs() < 1e-8, "i = {i}");
            let m = find_periodic(&e, &x, InitStrategy::Ascent).unwrap();
            assert!(m.orbit.length() >= n.length() - 1e-12);
        }
    }

    #[test]
    fn periodic_orbit_at_q100() {
        let e = ellipse();
        let p = find_periodic(&e, &[25, 25, 25, 25], InitStrategy::default()).unwrap();
        let gamma = e.total_length();
        assert!(p.orbit.length() < gamma);
        assert!(p.orbit.closure_residual.unwrap() <= 1e-8);
        assert!(p.orbit.max_reflection_residual(&e) <= 1e-9);
        let (dphi, dtheta) = closure_parts(&p.orbit);
        assert!(dphi <= 1e-8 && dtheta <= 1e-10);
        let g = length_gradient(&e, &p.orbit);
        let fd = length_gradient_fd(&e, &p.orbit, 1e-6);
        assert!(g.iter().all(|v| v.abs() <= 1e-9));
        assert!(g.iter().zip(&fd).all(|(a, b)| (a - b).abs() <= 1e-5));
    }

    #[test]
    fn asymmetric_periodic_orbits() {
        let e = ellipse();
        let t = Transition::all(&e);
        for x in [[20i64, 24, 21, 25], [30, 36, 30, 36], [12, 13, 12, 14]] {
            if !in_limit_cone(&t, &x) {
                continue;
            }
            let p = find_periodic(&e, &x, InitStrategy::Ascent).unwrap();
            assert_eq!(p.orbit.arc_counts(&e), x.to_vec());
        }
        assert!(matches!(
            find_periodic(&e, &[20, 40, 20, 40], InitStrategy::default()),
            Err(RealizationError::NotInPolytope(_))
        ));
    }

    #[test]
    fn one_turn_word() {
        let e = ellipse();
        let a = Alphabet::new(&e, ChiPolicy::HypothesisX).unwrap();
        let w = AdmissibleWord::finite(vec![Symbol(vec![20, 23, 20, 23])]);
        let r = realize_itinerary(&e, &a, &w).unwrap();
        assert_eq!(r.nodes.len(), 4);
        for (x, v) in r.nodes.iter().zip(&r.visits) {
            assert!(FundamentalQuad::new(&e, v.j, v.n, v.half).unwrap().slab_contains(&e, *x));
        }
    }

    #[test]
    fn ten_turn_words_and_return_time() {
        let e = ellipse();
        let a = Alphabet::new(&e, ChiPolicy::HypothesisX).unwrap();
        let w = xi_maximal_word(&a, 30, 5, &[1, -1, 1, 1, -1]).unwrap();
        let r = realize_itinerary(&e, &a, &w).unwrap();
        assert!(r.min_margin > 0.0);
        assert!(r.orbit.max_reflection_residual(&e) < 1e-9);
        let ret = first_return_time(&e, r.nodes[0], 10_000).unwrap();
        assert_eq!(ret, Some(w.turn_sum(1).unwrap() as usize));
        let bad = AdmissibleWord::finite(vec![Symbol(vec![20, 23, 20, 23]), Symbol(vec![60, 70, 60, 70])]);
        assert!(matches!(realize_itinerary(&e, &a, &bad), Err(RealizationError::NotAdmissible)));
    }

    #[test]
    fn random_words_are_faithful() {
        use rand::SeedableRng;
        let e = ellipse();
        let a = Alphabet::new(&e, ChiPolicy::HypothesisX).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let w = random_word(&a, &mut rng, 25, 3).unwrap();
            assert!(a.is_admissible_word(&w).unwrap());
            let r = realize_itinerary(&e, &a, &w).unwrap();
            assert_eq!(r.orbit.steps() as i64, w.turn_sum(3).unwrap());
            assert!(r.orbit.max_reflection_residual(&e) < 1e-9);
            let ret = first_return_time(&e, r.nodes[0], 100_000).unwrap();
            assert_eq!(ret, Some(w.turn_sum(1).unwrap() as usize));
        }
    }

    #[test]
    fn asymptotic_certificate() {
        let e = ellipse();
        let a = Alphabet::new(&e, ChiPolicy::HypothesisX).unwrap();
        let (r, c) = asymptotic_orbit(&e, &a, 30, 10).unwrap();
        assert!(c.constant_start && c.ratio_bounds_hold && c.inverse_speed_holds, "{c:?}");
        assert!(r.orbit.max_reflection_residual(&e) < 1e-9);
        assert!(r.orbit.is_sliding(&e));
        assert!(c.constants.a < c.constants.b && c.constants.d_minus < c.constants.d_plus);
        let rep = divergence_check(std::slice::from_ref(&r.orbit));
        assert!(rep.min_l_theta > 0.0);
    }

    #[test]
    fn speed_constants_scale_free() {
        let a1 = Alphabet::new(&ellipse(), ChiPolicy::HypothesisX).unwrap();
        let big = CircularPolygon::pseudo_ellipse(FRAC_PI_2, 3.0, 6.0).unwrap();
        let a2 = Alphabet::new(&big, ChiPolicy::HypothesisX).unwrap();
        let (s1, s2) = (speed_constants(&ellipse(), &a1), speed_constants(&big, &a2));
        assert!((s1.a - s2.a).abs() < 1e-12 * s1.a && (s1.b - s2.b).abs() < 1e-12 * s1.b);
        let c = SymbolicConstants::new(&a1);
        assert!(s1.d_plus >= c.lambda_prime);
    }
}
