//! Circular polygons: construction, validation, polar parametrisation and presets.
//!
//! Arc indices are 0-based. Angles are stored unreduced, so that
//! `a_0 < b_0 = a_1 < ... < b_{k-1} = a_0 + 2π`.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use num_integer::Integer;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ratio::rationalize;

/// Absolute tolerance for the closure conditions.
pub const TOL_CLOSURE: f64 = 1e-10;
/// Largest denominator accepted when rationalizing central angles.
pub const MAX_DENOMINATOR: i64 = 1_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolygonError {
    #[error("a circular polygon needs at least 4 arcs, got {0}")]
    InvalidArcCount(usize),
    #[error("closure violated: angle sum off by {angle:.3e}, vector sum off by {vector:.3e}")]
    ClosureViolation { angle: f64, vector: f64 },
    #[error("arcs {0} and {1} have equal radii")]
    EqualConsecutiveRadii(usize, usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("arcs {0} and {1} do not join continuously (gap {2:.3e})")]
    Discontinuity(usize, usize, f64),
    #[error("central angles are not commensurable with 2π")]
    NotRational,
}

/// One circular arc `center + radius·e^{iφ}`, `φ ∈ [a, b]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arc {
    pub center: Complex64,
    pub radius: f64,
    pub a: f64,
    pub b: f64,
}

impl Arc {
    pub fn point(&self, phi: f64) -> Complex64 {
        self.center + self.radius * Complex64::cis(phi)
    }

    pub fn start_point(&self) -> Complex64 {
        self.point(self.a)
    }

    pub fn end_point(&self) -> Complex64 {
        self.point(self.b)
    }
}

/// `δ = 2π/M` with `δ_j = m_j δ`.
#[derive(Debug, Clone, PartialEq)]
pub struct RationalStructure {
    pub delta: f64,
    pub multiplicities: Vec<u64>,
    pub total: u64,
}

/// A closed, strictly convex C¹ curve made of `k >= 4` circular arcs.
#[derive(Debug, Clone, PartialEq)]
pub struct CircularPolygon {
    arcs: Vec<Arc>,
    deltas: Vec<f64>,
}

impl CircularPolygon {
    /// Places the centers recursively from `O_{j+1} = O_j + (r_j − r_{j+1})e^{ib_j}`.
    pub fn build(
        radii: &[f64],
        central_angles: &[f64],
        first_center: Complex64,
        first_angle: f64,
    ) -> Result<Self, PolygonError> {
        let k = radii.len();
        if k < 4 {
            return Err(PolygonError::InvalidArcCount(k));
        }
        if central_angles.len() != k {
            return Err(PolygonError::InvalidParameter(format!(
                "{} radii but {} central angles",
                k,
                central_angles.len()
            )));
        }
        for (j, &r) in radii.iter().enumerate() {
            if !(r > 0.0 && r.is_finite()) {
                return Err(PolygonError::InvalidParameter(format!("radius {j} is {r}")));
            }
        }
        for (j, &d) in central_angles.iter().enumerate() {
            if !(d > 0.0 && d < TAU) {
                return Err(PolygonError::InvalidParameter(format!(
                    "central angle {j} is {d}"
                )));
            }
        }
        check_distinct_radii(radii)?;

        let angle_sum: f64 = central_angles.iter().sum();
        let mut closure = Complex64::new(0.0, 0.0);
        let mut a = first_angle;
        for j in 0..k {
            let b = a + central_angles[j];
            closure += radii[j] * (Complex64::cis(b) - Complex64::cis(a));
            a = b;
        }
        let angle_err = (angle_sum - TAU).abs();
        if angle_err > TOL_CLOSURE || closure.norm() > TOL_CLOSURE {
            return Err(PolygonError::ClosureViolation {
                angle: angle_err,
                vector: closure.norm(),
            });
        }

        let mut arcs = Vec::with_capacity(k);
        let mut center = first_center;
        let mut a = first_angle;
        for j in 0..k {
            let b = if j + 1 == k {
                first_angle + TAU
            } else {
                a + central_angles[j]
            };
            arcs.push(Arc {
                center,
                radius: radii[j],
                a,
                b,
            });
            let next = radii[(j + 1) % k];
            center += (radii[j] - next) * Complex64::cis(b);
            a = b;
        }
        Ok(Self {
            arcs,
            deltas: central_angles.to_vec(),
        })
    }

    /// Re-validates a list of arcs, e.g. read from a file.
    pub fn from_arcs(arcs: Vec<Arc>) -> Result<Self, PolygonError> {
        let k = arcs.len();
        if k < 4 {
            return Err(PolygonError::InvalidArcCount(k));
        }
        for (j, arc) in arcs.iter().enumerate() {
            if !(arc.radius > 0.0 && arc.radius.is_finite()) {
                return Err(PolygonError::InvalidParameter(format!(
                    "radius {j} is {}",
                    arc.radius
                )));
            }
            let d = arc.b - arc.a;
            if !(d > 0.0 && d < TAU) {
                return Err(PolygonError::InvalidParameter(format!(
                    "angular range of arc {j} has width {d}"
                )));
            }
        }
        let radii: Vec<f64> = arcs.iter().map(|a| a.radius).collect();
        check_distinct_radii(&radii)?;
        for j in 0..k {
            let next = (j + 1) % k;
            let expected = if next == 0 { arcs[0].a + TAU } else { arcs[next].a };
            if (arcs[j].b - expected).abs() > TOL_CLOSURE {
                return Err(PolygonError::Discontinuity(j, next, (arcs[j].b - expected).abs()));
            }
            let gap = (arcs[j].end_point() - arcs[next].start_point()).norm();
            if gap > TOL_CLOSURE {
                return Err(PolygonError::Discontinuity(j, next, gap));
            }
        }
        let deltas: Vec<f64> = arcs.iter().map(|a| a.b - a.a).collect();
        let angle_sum: f64 = deltas.iter().sum();
        let closure: Complex64 = arcs
            .iter()
            .map(|a| a.radius * (Complex64::cis(a.b) - Complex64::cis(a.a)))
            .sum();
        if (angle_sum - TAU).abs() > TOL_CLOSURE || closure.norm() > TOL_CLOSURE {
            return Err(PolygonError::ClosureViolation {
                angle: (angle_sum - TAU).abs(),
                vector: closure.norm(),
            });
        }
        Ok(Self { arcs, deltas })
    }

    /// Squared-or-not pseudo-ellipse with radii `(r, R, r, R)`.
    pub fn pseudo_ellipse(alpha: f64, r: f64, big_r: f64) -> Result<Self, PolygonError> {
        if !(alpha > 0.0 && alpha < PI) {
            return Err(PolygonError::InvalidParameter(format!(
                "pseudo-ellipse angle must lie in (0, π), got {alpha}"
            )));
        }
        if !(r > 0.0 && r < big_r) {
            return Err(PolygonError::InvalidParameter(format!(
                "pseudo-ellipse radii need 0 < r < R, got r = {r}, R = {big_r}"
            )));
        }
        Self::build(
            &[r, big_r, r, big_r],
            &[alpha, PI - alpha, alpha, PI - alpha],
            Complex64::new(0.0, 0.0),
            0.0,
        )
    }

    /// Moss's egg: radii `(r, 2r, (2−√2)r, 2r)`, angles `(π, π/4, π/2, π/4)`.
    pub fn moss_egg(r: f64) -> Result<Self, PolygonError> {
        if !(r > 0.0 && r.is_finite()) {
            return Err(PolygonError::InvalidParameter(format!("egg radius {r}")));
        }
        Self::build(
            &[r, 2.0 * r, (2.0 - 2f64.sqrt()) * r, 2.0 * r],
            &[PI, PI / 4.0, PI / 2.0, PI / 4.0],
            Complex64::new(0.0, 0.0),
            0.0,
        )
    }

    /// Parallel 6-gon around a triangle `A, B, C` given in clockwise order.
    /// Arcs are centered at `A, B, C, A, B, C` in turn.
    pub fn triangle_sixgon(
        a_pt: [f64; 2],
        b_pt: [f64; 2],
        c_pt: [f64; 2],
        r: f64,
    ) -> Result<Self, PolygonError> {
        let pa = Complex64::new(a_pt[0], a_pt[1]);
        let pb = Complex64::new(b_pt[0], b_pt[1]);
        let pc = Complex64::new(c_pt[0], c_pt[1]);
        let orient = ((pb - pa).conj() * (pc - pa)).im;
        if orient >= 0.0 {
            return Err(PolygonError::InvalidParameter(
                "triangle vertices must be distinct and clockwise".into(),
            ));
        }
        let side_a = (pc - pb).norm();
        let side_b = (pa - pc).norm();
        let side_c = (pb - pa).norm();
        if !(r > 0.0 && r > side_a - side_c && r > side_a - side_b) {
            return Err(PolygonError::InvalidParameter(format!(
                "6-gon radius must exceed max(0, a−c, a−b) = {}",
                0f64.max(side_a - side_c).max(side_a - side_b)
            )));
        }
        let angle_at = |p: Complex64, u: Complex64, v: Complex64| {
            let x = (u - p).conj() * (v - p);
            x.im.abs().atan2(x.re)
        };
        let alpha = angle_at(pa, pb, pc);
        let beta = angle_at(pb, pc, pa);
        let gamma = angle_at(pc, pa, pb);
        let radii = [
            r,
            r + side_c,
            r + side_c - side_a,
            r + side_c - side_a + side_b,
            r + side_b - side_a,
            r + side_b,
        ];
        let angles = [alpha, beta, gamma, alpha, beta, gamma];
        let b0 = (pa - pb).arg();
        Self::build(&radii, &angles, pa, b0 - alpha)
    }

    /// Mirror image traversed counter-clockwise, i.e. the arcs in reverse order.
    pub fn reversed(&self) -> Result<Self, PolygonError> {
        let k = self.k();
        let radii: Vec<f64> = (0..k).rev().map(|j| self.arcs[j].radius).collect();
        let deltas: Vec<f64> = (0..k).rev().map(|j| self.deltas[j]).collect();
        let last = &self.arcs[k - 1];
        Self::build(&radii, &deltas, last.center.conj(), -last.b)
    }

    pub fn k(&self) -> usize {
        self.arcs.len()
    }

    pub fn arcs(&self) -> &[Arc] {
        &self.arcs
    }

    /// Arc `j mod k`.
    pub fn arc(&self, j: usize) -> &Arc {
        &self.arcs[j % self.k()]
    }

    pub fn radius(&self, j: usize) -> f64 {
        self.arc(j).radius
    }

    pub fn radii(&self) -> Vec<f64> {
        self.arcs.iter().map(|a| a.radius).collect()
    }

    pub fn max_radius(&self) -> f64 {
        self.arcs.iter().map(|a| a.radius).fold(0.0, f64::max)
    }

    /// Central angle `δ_{j mod k}`.
    pub fn delta(&self, j: usize) -> f64 {
        self.deltas[j % self.k()]
    }

    pub fn deltas(&self) -> &[f64] {
        &self.deltas
    }

    /// `μ_j = sqrt(r_j / r_{j+1})`, indices mod k.
    pub fn mu(&self, j: usize) -> f64 {
        (self.radius(j) / self.radius(j + 1)).sqrt()
    }

    /// Start angle of arc `j`, extended periodically: `a_{j+k} = a_j + 2π`.
    pub fn start_angle(&self, j: i64) -> f64 {
        let k = self.k() as i64;
        let (turns, idx) = j.div_mod_floor(&k);
        self.arcs[idx as usize].a + TAU * turns as f64
    }

    pub fn first_angle(&self) -> f64 {
        self.arcs[0].a
    }

    pub fn total_length(&self) -> f64 {
        self.curvature_functional(1.0)
    }

    /// `S(ξ) = Σ δ_j r_j^ξ`; `S(1)` is the perimeter and `S(1/3) = ∫κ^{2/3} ds`.
    pub fn curvature_functional(&self, xi: f64) -> f64 {
        self.deltas
            .iter()
            .zip(&self.arcs)
            .map(|(d, a)| d * a.radius.powf(xi))
            .sum()
    }

    /// Reduces `φ` into `[a_0, a_0 + 2π)`.
    pub fn reduce(&self, phi: f64) -> f64 {
        let a0 = self.arcs[0].a;
        let mut x = phi - TAU * ((phi - a0) / TAU).floor();
        if x >= a0 + TAU {
            x -= TAU;
        }
        if x < a0 {
            x = a0;
        }
        x
    }

    /// Arc containing `φ`; a node `a_j` belongs to arc `j`.
    pub fn arc_index(&self, phi: f64) -> usize {
        let x = self.reduce(phi);
        match self.arcs[1..].iter().position(|arc| x < arc.a) {
            Some(i) => i,
            None => self.k() - 1,
        }
    }

    /// Polar parametrisation `z(φ) = O_j + r_j e^{iφ}`.
    pub fn point_at(&self, phi: f64) -> Complex64 {
        self.arcs[self.arc_index(phi)].point(phi)
    }

    /// Largest residual among the closure, node and tangent conditions.
    pub fn closure_residuals(&self) -> ClosureReport {
        let k = self.k();
        let angle = (self.deltas.iter().sum::<f64>() - TAU).abs();
        let vector = self
            .arcs
            .iter()
            .map(|a| a.radius * (Complex64::cis(a.b) - Complex64::cis(a.a)))
            .sum::<Complex64>()
            .norm();
        let mut node: f64 = 0.0;
        let mut tangent: f64 = 0.0;
        for j in 0..k {
            let next = &self.arcs[(j + 1) % k];
            let cur = &self.arcs[j];
            node = node.max((cur.end_point() - next.start_point()).norm());
            let t_cur = Complex64::i() * Complex64::cis(cur.b);
            let t_next = Complex64::i() * Complex64::cis(next.a);
            tangent = tangent.max((t_cur - t_next).norm());
        }
        ClosureReport {
            angle,
            vector,
            node,
            tangent,
        }
    }

    /// `δ = gcd(δ_j)` with integer multiplicities, via continued fractions of `δ_j/2π`.
    pub fn rational_structure(&self, tol: f64) -> Result<RationalStructure, PolygonError> {
        let mut fracs = Vec::with_capacity(self.k());
        for &d in &self.deltas {
            let (p, q) =
                rationalize(d / TAU, MAX_DENOMINATOR, tol).ok_or(PolygonError::NotRational)?;
            fracs.push((p, q));
        }
        let l = fracs.iter().fold(1i64, |acc, &(_, q)| acc.lcm(&q));
        let numerators: Vec<i64> = fracs.iter().map(|&(p, q)| p * (l / q)).collect();
        let g = numerators.iter().fold(0i64, |acc, &n| acc.gcd(&n));
        if g == 0 {
            return Err(PolygonError::NotRational);
        }
        let multiplicities: Vec<u64> = numerators.iter().map(|&n| (n / g) as u64).collect();
        let total = multiplicities.iter().sum();
        Ok(RationalStructure {
            delta: TAU * g as f64 / l as f64,
            multiplicities,
            total,
        })
    }
}

fn check_distinct_radii(radii: &[f64]) -> Result<(), PolygonError> {
    let k = radii.len();
    for j in 0..k {
        let (r, s) = (radii[j], radii[(j + 1) % k]);
        if (r - s).abs() <= 1e-12 * r.max(s) {
            return Err(PolygonError::EqualConsecutiveRadii(j, (j + 1) % k));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ClosureReport {
    pub angle: f64,
    pub vector: f64,
    pub node: f64,
    pub tangent: f64,
}

impl ClosureReport {
    pub fn max(&self) -> f64 {
        self.angle.max(self.vector).max(self.node).max(self.tangent)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArcRecord {
    pub center: [f64; 2],
    pub radius: f64,
    pub a: f64,
    pub b: f64,
}

/// File format `{"schema": 1, "arcs": [{"center": [x, y], "radius": r, "a": a, "b": b}]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolygonRecord {
    #[serde(default = "schema_version")]
    pub schema: u32,
    pub arcs: Vec<ArcRecord>,
}

fn schema_version() -> u32 {
    1
}

impl From<&CircularPolygon> for PolygonRecord {
    fn from(p: &CircularPolygon) -> Self {
        Self {
            schema: 1,
            arcs: p
                .arcs
                .iter()
                .map(|a| ArcRecord {
                    center: [a.center.re, a.center.im],
                    radius: a.radius,
                    a: a.a,
                    b: a.b,
                })
                .collect(),
        }
    }
}

impl TryFrom<PolygonRecord> for CircularPolygon {
    type Error = PolygonError;

    fn try_from(rec: PolygonRecord) -> Result<Self, Self::Error> {
        let arcs = rec
            .arcs
            .into_iter()
            .map(|a| Arc {
                center: Complex64::new(a.center[0], a.center[1]),
                radius: a.radius,
                a: a.a,
                b: a.b,
            })
            .collect();
        CircularPolygon::from_arcs(arcs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn ellipse() -> CircularPolygon {
        CircularPolygon::pseudo_ellipse(PI / 2.0, 1.0, 2.0).unwrap()
    }

    #[test]
    fn squared_pseudo_ellipse_builds() {
        let e = CircularPolygon::build(
            &[1.0, 2.0, 1.0, 2.0],
            &[PI / 2.0; 4],
            Complex64::new(0.0, 0.0),
            0.0,
        )
        .unwrap();
        assert_eq!(e.k(), 4);
        assert_abs_diff_eq!(e.total_length(), 3.0 * PI, epsilon = 1e-14);
        assert!(e.closure_residuals().max() < 1e-14);
    }

    #[test]
    fn equal_neighbours_rejected() {
        let err = CircularPolygon::build(
            &[1.0, 1.0, 2.0, 2.0],
            &[PI / 2.0; 4],
            Complex64::new(0.0, 0.0),
            0.0,
        )
        .unwrap_err();
        assert!(matches!(err, PolygonError::EqualConsecutiveRadii(0, 1)));
    }

    #[test]
    fn too_few_arcs() {
        let err = CircularPolygon::build(&[1.0, 2.0, 3.0], &[2.0; 3], Complex64::default(), 0.0)
            .unwrap_err();
        assert_eq!(err, PolygonError::InvalidArcCount(3));
    }

    #[test]
    fn open_chain_rejected() {
        let err = CircularPolygon::build(
            &[1.0, 2.0, 1.0, 3.0],
            &[PI / 2.0; 4],
            Complex64::default(),
            0.0,
        )
        .unwrap_err();
        assert!(matches!(err, PolygonError::ClosureViolation { .. }));
    }

    #[test]
    fn egg_angles() {
        let egg = CircularPolygon::moss_egg(1.0).unwrap();
        let d = egg.deltas();
        assert_eq!(d, &[PI, PI / 4.0, PI / 2.0, PI / 4.0]);
        assert!(egg.closure_residuals().max() < 1e-14);
    }

    #[test]
    fn sixgon_centers_are_triangle_vertices() {
        let g = CircularPolygon::triangle_sixgon([3.0, -1.0], [-1.0, -1.0], [0.0, 1.0], 1.0)
            .unwrap();
        assert_eq!(g.k(), 6);
        let expect = [
            (3.0, -1.0),
            (-1.0, -1.0),
            (0.0, 1.0),
            (3.0, -1.0),
            (-1.0, -1.0),
            (0.0, 1.0),
        ];
        for (arc, (x, y)) in g.arcs().iter().zip(expect) {
            assert_abs_diff_eq!(arc.center.re, x, epsilon = 1e-12);
            assert_abs_diff_eq!(arc.center.im, y, epsilon = 1e-12);
        }
        let (a, b, c) = (5f64.sqrt(), 13f64.sqrt(), 4.0);
        let r = g.radii();
        let want = [1.0, 1.0 + c, 1.0 + c - a, 1.0 + c - a + b, 1.0 + b - a, 1.0 + b];
        for (x, y) in r.iter().zip(want) {
            assert_abs_diff_eq!(*x, y, epsilon = 1e-12);
        }
        assert!(g.closure_residuals().max() < 1e-12);
    }

    #[test]
    fn sixgon_radius_precondition() {
        // a − b = √5 − √13 < 0 and a − c = √5 − 4 < 0, so only r > 0 is needed here
        assert!(CircularPolygon::triangle_sixgon([3.0, -1.0], [-1.0, -1.0], [0.0, 1.0], 0.0)
            .is_err());
        // counter-clockwise input is rejected
        assert!(CircularPolygon::triangle_sixgon([3.0, -1.0], [0.0, 1.0], [-1.0, -1.0], 1.0)
            .is_err());
    }

    #[test]
    fn pseudo_ellipse_parameters() {
        assert!(CircularPolygon::pseudo_ellipse(PI / 2.0, 2.0, 1.0).is_err());
        assert!(CircularPolygon::pseudo_ellipse(PI, 1.0, 2.0).is_err());
        let e = CircularPolygon::pseudo_ellipse(1.0, 1.0, 3.0).unwrap();
        assert!(e.closure_residuals().max() < 1e-13);
    }

    #[test]
    fn parametrisation_examples() {
        let e = ellipse();
        let z = e.point_at(0.0);
        assert_abs_diff_eq!(z.re, e.arc(0).center.re + 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(z.im, e.arc(0).center.im, epsilon = 1e-15);
        let b0 = e.arc(0).b;
        assert!((e.arc(0).point(b0) - e.point_at(b0)).norm() < 1e-14);
        assert_eq!(e.arc_index(b0), 1);
        assert_eq!(e.arc_index(PI / 2.0 + 0.1), 1);
        assert_eq!(e.arc_index(-0.1), 3);
        assert_eq!(e.arc_index(TAU), 0);
    }

    #[test]
    fn curvature_functional_values() {
        let e = ellipse();
        assert_abs_diff_eq!(e.curvature_functional(1.0), 3.0 * PI, epsilon = 1e-13);
        assert_abs_diff_eq!(
            e.curvature_functional(1.0 / 3.0),
            PI * (1.0 + 2f64.cbrt()),
            epsilon = 1e-13
        );
        assert_abs_diff_eq!(e.curvature_functional(0.0), TAU, epsilon = 1e-13);
        assert_abs_diff_eq!(e.curvature_functional(1.0 / 3.0), 7.09975, epsilon = 1e-5);
    }

    #[test]
    fn rational_structures() {
        let e = ellipse().rational_structure(1e-12).unwrap();
        assert_abs_diff_eq!(e.delta, PI / 2.0, epsilon = 1e-15);
        assert_eq!(e.multiplicities, vec![1, 1, 1, 1]);
        assert_eq!(e.total, 4);
        let egg = CircularPolygon::moss_egg(1.0).unwrap().rational_structure(1e-12).unwrap();
        assert_abs_diff_eq!(egg.delta, PI / 4.0, epsilon = 1e-15);
        assert_eq!(egg.multiplicities, vec![4, 1, 2, 1]);
        assert_eq!(egg.total, 8);
        // pseudo-ellipse with α = 1 rad has δ_1/δ_2 irrational
        let irr = CircularPolygon::pseudo_ellipse(1.0, 1.0, 2.0).unwrap();
        assert_eq!(irr.rational_structure(1e-12), Err(PolygonError::NotRational));
    }

    #[test]
    fn record_roundtrip() {
        let g = CircularPolygon::triangle_sixgon([3.0, -1.0], [-1.0, -1.0], [0.0, 1.0], 1.0)
            .unwrap();
        let text = serde_json::to_string(&PolygonRecord::from(&g)).unwrap();
        let back: PolygonRecord = serde_json::from_str(&text).unwrap();
        let h = CircularPolygon::try_from(back).unwrap();
        assert_eq!(g.arcs(), h.arcs());
    }

    #[test]
    fn reversal_inverts_mu() {
        for p in [
            ellipse(),
            CircularPolygon::moss_egg(1.0).unwrap(),
            CircularPolygon::triangle_sixgon([3.0, -1.0], [-1.0, -1.0], [0.0, 1.0], 1.0).unwrap(),
        ] {
            let r = p.reversed().unwrap();
            let k = p.k();
            assert!(r.closure_residuals().max() < 1e-12);
            for j in 0..k {
                assert_abs_diff_eq!(r.mu(j), 1.0 / p.mu((2 * k - 2 - j) % k), epsilon = 1e-12);
            }
        }
    }

    proptest! {
        #[test]
        fn pseudo_ellipses_close(alpha in 0.05f64..3.09, r in 0.1f64..5.0, extra in 0.01f64..5.0) {
            let p = CircularPolygon::pseudo_ellipse(alpha, r, r + extra).unwrap();
            let c = p.closure_residuals();
            prop_assert!(c.max() < 1e-12);
        }

        #[test]
        fn reduce_lands_in_fundamental_range(phi in -100.0f64..100.0) {
            let e = CircularPolygon::pseudo_ellipse(PI / 2.0, 1.0, 2.0).unwrap();
            let x = e.reduce(phi);
            prop_assert!(x >= e.first_angle() && x < e.first_angle() + TAU);
            let j = e.arc_index(phi);
            prop_assert!(e.arc(j).a <= x && x <= e.arc(j).b);
            let z = e.point_at(phi);
            prop_assert!(((z - e.arc(j).center).norm() - e.radius(j)).abs() < 1e-12);
        }

        #[test]
        fn sixgon_family_is_valid(r in 0.05f64..4.0) {
            let g = CircularPolygon::triangle_sixgon([3.0, -1.0], [-1.0, -1.0], [0.0, 1.0], r).unwrap();
            prop_assert!(g.closure_residuals().max() < 1e-11);
        }
    }
}
