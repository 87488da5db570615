//! Lengths of sliding `(1, q)`-periodic orbits and their asymptotic constants.
//!
//! A configuration `y` in the limit polytope (impacts per arc over `q`)
//! produces orbits with `L = |Γ| + h(y)/q² + O(1/q³)`, where
//! `h(y) = −(1/24) Σ δ_j³ r_j / y_j²`.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::cells::Transition;
use crate::counting::{limit_polytope, vertices};
use crate::dynamics::angle_gap;
use crate::polygon::{CircularPolygon, PolygonError};
use crate::realization::{find_periodic, in_limit_cone, nodal_orbit, InitStrategy, Orbit, RealizationError};

/// Largest number of arcs handled by exhaustive vertex enumeration.
pub const MAX_VERTEX_ARCS: usize = 10;
/// Points closer than this (in φ) to a node are assigned to the arc starting there.
const NODE_SNAP: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectrumError {
    #[error("limit polytope has no vertices")]
    DegeneratePolytope,
    #[error("{0} arcs exceed the vertex enumeration limit")]
    TooManyArcs(usize),
    #[error("target {c} outside [{lo}, {hi}]")]
    TargetOutOfRange { c: f64, lo: f64, hi: f64 },
    #[error("orbit is not a sliding periodic orbit visiting every arc")]
    NotSliding,
    #[error("polygon has no rational structure")]
    NotRational,
    #[error("no integer configuration with {q} impacts rounds the target")]
    Rounding { q: i64 },
    #[error(transparent)]
    Realization(#[from] RealizationError),
}

impl From<PolygonError> for SpectrumError {
    fn from(_: PolygonError) -> Self {
        Self::NotRational
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumFunctional {
    pub delta: Vec<f64>,
    pub radii: Vec<f64>,
}

impl SpectrumFunctional {
    pub fn new(poly: &CircularPolygon) -> Self {
        Self {
            delta: poly.deltas().to_vec(),
            radii: (0..poly.k()).map(|j| poly.radius(j)).collect(),
        }
    }

    pub fn h(&self, y: &[f64]) -> f64 {
        -self
            .delta
            .iter()
            .zip(&self.radii)
            .zip(y)
            .map(|((d, r), y)| d.powi(3) * r / (y * y))
            .sum::<f64>()
            / 24.0
    }

    pub fn gradient(&self, y: &[f64]) -> Vec<f64> {
        self.delta
            .iter()
            .zip(&self.radii)
            .zip(y)
            .map(|((d, r), y)| d.powi(3) * r / (12.0 * y.powi(3)))
            .collect()
    }

    /// `S(ξ) = Σ δ_j r_j^ξ`.
    pub fn s(&self, xi: f64) -> f64 {
        self.delta.iter().zip(&self.radii).map(|(d, r)| d * r.powf(xi)).sum()
    }

    /// `w(ξ) = (δ_j r_j^ξ)_j / S(ξ)`; `w(1/3)` maximizes `h` on the simplex.
    pub fn w(&self, xi: f64) -> Vec<f64> {
        let s = self.s(xi);
        self.delta.iter().zip(&self.radii).map(|(d, r)| d * r.powf(xi) / s).collect()
    }

    /// `h(w(ξ)) = −S(ξ)² S(1−2ξ)/24`.
    pub fn h_of_w(&self, xi: f64) -> f64 {
        -self.s(xi).powi(2) * self.s(1.0 - 2.0 * xi) / 24.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumInterval {
    pub c1_minus: f64,
    pub c1_plus: f64,
    pub argmax: Vec<f64>,
    pub vertex_argmin: Vec<f64>,
    /// `−π²|Γ|/6`, the constant of the nodal sequence.
    pub nodal_constant: f64,
    pub vertices: Vec<Vec<f64>>,
}

impl SpectrumInterval {
    /// `c1_minus ≤ −π²|Γ|/6 < c1_plus < 0`, with a relative slack on the first.
    pub fn ordering_holds(&self) -> bool {
        let slack = 1e-12 * self.nodal_constant.abs();
        self.c1_minus <= self.nodal_constant + slack && self.nodal_constant < self.c1_plus && self.c1_plus < 0.0
    }
}

/// Vertices of the closed limit polytope `K^(1)_∞`, as points of the simplex in `R^k`.
pub fn limit_vertices(poly: &CircularPolygon) -> Result<Vec<Vec<f64>>, SpectrumError> {
    let k = poly.k();
    if k > MAX_VERTEX_ARCS {
        return Err(SpectrumError::TooManyArcs(k));
    }
    let t = Transition::all(poly);
    let am: Vec<f64> = t.iter().map(|t| t.alpha_minus).collect();
    let ap: Vec<f64> = t.iter().map(|t| t.alpha_plus).collect();
    let verts: Vec<Vec<f64>> = vertices(&limit_polytope(&am, &ap, 1))
        .into_iter()
        .map(|mut v| {
            let last = 1.0 - v.iter().sum::<f64>();
            v.push(last);
            v
        })
        .collect();
    if verts.is_empty() {
        return Err(SpectrumError::DegeneratePolytope);
    }
    Ok(verts)
}

pub fn spectrum_interval(poly: &CircularPolygon) -> Result<SpectrumInterval, SpectrumError> {
    let f = SpectrumFunctional::new(poly);
    let verts = limit_vertices(poly)?;
    let (vertex_argmin, c1_minus) = verts
        .iter()
        .map(|v| (v.clone(), f.h(v)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or(SpectrumError::DegeneratePolytope)?;
    Ok(SpectrumInterval {
        c1_minus,
        c1_plus: f.h_of_w(1.0 / 3.0),
        argmax: f.w(1.0 / 3.0),
        vertex_argmin,
        nodal_constant: -PI * PI * poly.total_length() / 6.0,
        vertices: verts,
    })
}

/// `−(1/24)(∫κ^{2/3} ds)³`, the constant of smooth strictly convex tables.
pub fn marvizi_melrose_c1(poly: &CircularPolygon) -> f64 {
    -poly.curvature_functional(1.0 / 3.0).powi(3) / 24.0
}

/// Per-arc pieces of a periodic orbit: `x_j − 1` circular links of length
/// `ℓ_j = 2 r_j sin ψ_j` and the two halves `ℓ^±_j` of the transition links.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArcDecomposition {
    pub impacts: usize,
    pub psi: f64,
    pub phi_minus: f64,
    pub phi_plus: f64,
    pub ell: f64,
    pub ell_minus: f64,
    pub ell_plus: f64,
    /// `φ^-_j + 2(x_j − 1)ψ_j + φ^+_j − δ_j`.
    pub angle_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LengthDecomposition {
    pub arcs: Vec<ArcDecomposition>,
    pub total: f64,
    pub chord_total: f64,
}

fn snapped_arc(poly: &CircularPolygon, phi: f64) -> usize {
    let k = poly.k();
    let j = poly.arc_index(phi);
    let next = (j + 1) % k;
    if angle_gap(phi, poly.arc(next).a) < NODE_SNAP {
        next
    } else {
        j
    }
}

/// Signed offset of `phi` from `base`, in `(−π, π]`.
fn offset(phi: f64, base: f64) -> f64 {
    let d = (phi - base).rem_euclid(std::f64::consts::TAU);
    if d > PI {
        d - std::f64::consts::TAU
    } else {
        d
    }
}

/// Splits one period of a sliding periodic orbit (starting anywhere) into arcs.
pub fn orbit_length_decomposition(poly: &CircularPolygon, orbit: &Orbit) -> Result<LengthDecomposition, SpectrumError> {
    let k = poly.k();
    let q = orbit.steps();
    let pts = &orbit.points[..q];
    let arcs: Vec<usize> = pts.iter().map(|p| snapped_arc(poly, p.phi)).collect();
    // rotate so the period starts at the first impact of a run on arc 0
    let start = (0..q)
        .find(|&m| arcs[m] == 0 && arcs[(m + q - 1) % q] != 0)
        .ok_or(SpectrumError::NotSliding)?;
    let order: Vec<usize> = (0..q).map(|m| (start + m) % q).collect();
    let mut runs: Vec<Vec<usize>> = vec![Vec::new(); k];
    let mut expected = 0;
    for &m in &order {
        let a = arcs[m];
        if a != expected {
            if a != (expected + 1) % k || runs[expected].is_empty() {
                return Err(SpectrumError::NotSliding);
            }
            expected = a;
        }
        if !runs[a].is_empty() && *runs[a].last().unwrap() != order[order.iter().position(|&x| x == m).unwrap() - 1] {
            return Err(SpectrumError::NotSliding);
        }
        runs[a].push(m);
    }
    if runs.iter().any(Vec::is_empty) {
        return Err(SpectrumError::NotSliding);
    }
    let mut out = Vec::with_capacity(k);
    for (j, run) in runs.iter().enumerate() {
        let arc = poly.arc(j);
        let r = arc.radius;
        let x = run.len();
        let psi = run.iter().map(|&m| pts[m].theta).sum::<f64>() / x as f64;
        let phi_minus = offset(pts[run[0]].phi, arc.a);
        let phi_plus = offset(arc.b, pts[*run.last().unwrap()].phi);
        let ell = 2.0 * r * psi.sin();
        let ell_minus = r * phi_minus.sin() / (psi - phi_minus).cos();
        let ell_plus = r * phi_plus.sin() / (psi - phi_plus).cos();
        out.push(ArcDecomposition {
            impacts: x,
            psi,
            phi_minus,
            phi_plus,
            ell,
            ell_minus,
            ell_plus,
            angle_residual: phi_minus + 2.0 * (x as f64 - 1.0) * psi + phi_plus - poly.delta(j),
        });
    }
    let total = out
        .iter()
        .map(|a| (a.impacts as f64 - 1.0) * a.ell + a.ell_minus + a.ell_plus)
        .sum();
    Ok(LengthDecomposition {
        arcs: out,
        total,
        chord_total: orbit.lengths[..q].iter().sum(),
    })
}

/// Integer configuration with `Σx = q` and `|qy − x|_∞ < 1`: floors, then the
/// remaining units to the largest fractional parts.
pub fn round_configuration(y: &[f64], q: i64) -> Vec<i64> {
    let scaled: Vec<f64> = y.iter().map(|v| v * q as f64).collect();
    let mut x: Vec<i64> = scaled.iter().map(|v| v.floor() as i64).collect();
    let mut rest = q - x.iter().sum::<i64>();
    let mut idx: Vec<usize> = (0..y.len()).collect();
    idx.sort_by(|&a, &b| (scaled[b] - scaled[b].floor()).total_cmp(&(scaled[a] - scaled[a].floor())));
    for &i in idx.iter().cycle() {
        if rest <= 0 {
            break;
        }
        x[i] += 1;
        rest -= 1;
    }
    x
}

/// A point of the limit polytope where `h` takes the value `c`: on the segment
/// from the minimizing vertex to `w(1/3)`, where `h` runs over `[c1_-, c1_+]`.
pub fn configuration_for(poly: &CircularPolygon, interval: &SpectrumInterval, c: f64) -> Result<Vec<f64>, SpectrumError> {
    let (lo, hi) = (interval.c1_minus, interval.c1_plus);
    if !(lo..=hi).contains(&c) {
        return Err(SpectrumError::TargetOutOfRange { c, lo, hi });
    }
    let f = SpectrumFunctional::new(poly);
    let at = |l: f64| -> Vec<f64> {
        interval
            .vertex_argmin
            .iter()
            .zip(&interval.argmax)
            .map(|(v, w)| (1.0 - l) * v + l * w)
            .collect()
    };
    if c == hi {
        return Ok(interval.argmax.clone());
    }
    // h is concave, hence increasing along the segment towards its maximizer
    let (mut a, mut b) = (0.0, 1.0);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if f.h(&at(m)) < c {
            a = m;
        } else {
            b = m;
        }
    }
    Ok(at(0.5 * (a + b)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumRow {
    pub q: i64,
    pub impacts: Vec<i64>,
    pub length: f64,
    pub scaled_defect: f64,
    pub target: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AsymptoticFit {
    pub rows: Vec<SpectrumRow>,
    /// `c` of the least-squares fit `(L − |Γ|)q² = c + d/q`.
    pub constant: f64,
    pub correction: f64,
}

/// Periodic orbits with `round(q y)` impacts per arc for each `q`, where
/// `h(y) = target`, and the extrapolated constant.
pub fn asymptotic_constant(poly: &CircularPolygon, target: f64, qs: &[i64]) -> Result<AsymptoticFit, SpectrumError> {
    let interval = spectrum_interval(poly)?;
    let y = configuration_for(poly, &interval, target)?;
    sequence_for(poly, &y, target, qs)
}

/// Periodic orbits along the configurations `round(q y)`.
pub fn sequence_for(poly: &CircularPolygon, y: &[f64], target: f64, qs: &[i64]) -> Result<AsymptoticFit, SpectrumError> {
    let transitions = Transition::all(poly);
    let gamma = poly.total_length();
    let rows = qs
        .par_iter()
        .map(|&q| {
            let x = round_configuration(y, q);
            if !in_limit_cone(&transitions, &x) {
                return Err(SpectrumError::Rounding { q });
            }
            let orbit = find_periodic(poly, &x, InitStrategy::EqualSpacing)?.orbit;
            let length = orbit.length();
            Ok(SpectrumRow {
                q,
                impacts: x,
                length,
                scaled_defect: (length - gamma) * (q * q) as f64,
                target,
            })
        })
        .collect::<Result<Vec<_>, SpectrumError>>()?;
    let (constant, correction) = fit_constant(&rows);
    Ok(AsymptoticFit { rows, constant, correction })
}

/// Least squares for `v = c + d/q`; a single row returns its value.
fn fit_constant(rows: &[SpectrumRow]) -> (f64, f64) {
    if rows.len() < 2 {
        return (rows.first().map_or(f64::NAN, |r| r.scaled_defect), 0.0);
    }
    let n = rows.len() as f64;
    let xs: Vec<f64> = rows.iter().map(|r| 1.0 / r.q as f64).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.scaled_defect).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let d = sxy / sxx;
    (my - d * mx, d)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodalAnomaly {
    pub q: u64,
    /// Boundary distance from an impact on each arc to the next impact.
    pub arc_gaps: Vec<f64>,
    /// `2π r_j / q`.
    pub expected: Vec<f64>,
    /// `|Γ| / q`, the gap of a smooth table with the Marvizi–Melrose property.
    pub uniform_gap: f64,
    /// Sum of all boundary distances over one period.
    pub period_sum: f64,
}

pub fn nodal_link_anomaly(poly: &CircularPolygon, i: u64) -> Result<NodalAnomaly, SpectrumError> {
    let orbit = nodal_orbit(poly, i)?;
    let k = poly.k();
    let q = orbit.steps();
    let mut arc_gaps = vec![f64::NAN; k];
    let mut period_sum = 0.0;
    for w in orbit.points.windows(2) {
        let (j0, j1) = (snapped_arc(poly, w[0].phi), snapped_arc(poly, w[1].phi));
        let gap = if j0 == j1 {
            poly.radius(j0) * offset(w[1].phi, w[0].phi)
        } else {
            let node = poly.arc(j1).a;
            poly.radius(j0) * offset(node, w[0].phi) + poly.radius(j1) * offset(w[1].phi, node)
        };
        // a link is charged to the arc it leaves
        arc_gaps[j0] = gap;
        period_sum += gap;
    }
    Ok(NodalAnomaly {
        q: q as u64,
        arc_gaps,
        expected: (0..k).map(|j| 2.0 * PI * poly.radius(j) / q as f64).collect(),
        uniform_gap: poly.total_length() / q as f64,
        period_sum,
    })
}
