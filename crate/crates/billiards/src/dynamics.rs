//! The billiard map on `M = T × [0, π]` and its inverse.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::polygon::CircularPolygon;

/// Slack on angular-range membership when casting a chord.
pub const TOL_RANGE: f64 = 1e-12;
/// Impacts this close to a node are snapped onto it.
pub const TOL_NODE: f64 = 1e-11;
/// Chord lengths below `TOL_CHORD · max r` signal numeric breakdown.
pub const TOL_CHORD: f64 = 1e-13;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("degenerate chord at phi = {phi}, theta = {theta}")]
    DegenerateChord { phi: f64, theta: f64 },
    #[error("chord from phi = {phi}, theta = {theta} hits no arc")]
    NoIntersection { phi: f64, theta: f64 },
    #[error("step {index} failed: {source}")]
    AtStep {
        index: usize,
        #[source]
        source: Box<DynamicsError>,
    },
    #[error("transition angle undefined: mu·sin(theta/2) = {0} exceeds 1")]
    DomainError(f64),
}

/// A point `(φ, θ)` of the phase cylinder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub phi: f64,
    pub theta: f64,
}

impl PhasePoint {
    pub fn new(phi: f64, theta: f64) -> Self {
        Self { phi, theta }
    }

    /// Time-reversal involution `(φ, θ) ↦ (φ, π − θ)`.
    pub fn reversed(self) -> Self {
        Self::new(self.phi, PI - self.theta)
    }

    /// Distance with `φ` measured on the circle.
    pub fn distance(&self, other: &PhasePoint) -> f64 {
        angle_gap(self.phi, other.phi).hypot(self.theta - other.theta)
    }
}

/// `|φ − ψ|` modulo 2π.
pub fn angle_gap(phi: f64, psi: f64) -> f64 {
    let d = (phi - psi).rem_euclid(std::f64::consts::TAU);
    d.min(std::f64::consts::TAU - d)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepRecord {
    pub pre: PhasePoint,
    pub post: PhasePoint,
    pub arc_from: usize,
    pub arc_to: usize,
    /// Nodes passed counter-clockwise, `(arc_to − arc_from) mod k`.
    pub crossed_nodes: usize,
    pub link_length: f64,
    /// The impact was snapped onto a node.
    pub node_hit: bool,
}

/// Transition angle `g(θ; μ) = acos((1−μ²) + μ² cos θ)`, evaluated as
/// `2 asin(μ sin(θ/2))` which avoids the cancellation of the acos form.
pub fn hubacher_angle(theta: f64, mu: f64) -> Result<f64, DynamicsError> {
    let s = mu * (0.5 * theta).sin();
    if s > 1.0 {
        return Err(DynamicsError::DomainError(s));
    }
    Ok(2.0 * s.asin())
}

/// `Ω(s) = sqrt(μ² + (1 − μ²)s²)`.
pub fn transition_factor(s: f64, mu: f64) -> f64 {
    (mu * mu + (1.0 - mu * mu) * s * s).sqrt()
}

/// One application of the billiard map.
pub fn billiard_step(poly: &CircularPolygon, x: PhasePoint) -> Result<StepRecord, DynamicsError> {
    let phi = poly.reduce(x.phi);
    let theta = x.theta;
    let j = poly.arc_index(phi);
    let pre = PhasePoint::new(phi, theta);
    if theta <= 0.0 || theta >= PI {
        return Ok(StepRecord {
            pre,
            post: pre,
            arc_from: j,
            arc_to: j,
            crossed_nodes: 0,
            link_length: 0.0,
            node_hit: false,
        });
    }
    let arc = poly.arc(j);
    let target = phi + 2.0 * theta;
    if target <= arc.b {
        let (post_phi, node_hit) = snap_to_node(poly, target);
        let arc_to = poly.arc_index(post_phi);
        return Ok(StepRecord {
            pre,
            post: PhasePoint::new(post_phi, theta),
            arc_from: j,
            arc_to,
            crossed_nodes: (arc_to + poly.k() - j) % poly.k(),
            link_length: 2.0 * arc.radius * theta.sin(),
            node_hit,
        });
    }
    cast_chord(poly, pre, j)
}

fn snap_to_node(poly: &CircularPolygon, phi: f64) -> (f64, bool) {
    let x = poly.reduce(phi);
    let k = poly.k();
    let j = poly.arc_index(x);
    let arc = poly.arc(j);
    if x - arc.a <= TOL_NODE {
        return (arc.a, true);
    }
    if arc.b - x <= TOL_NODE {
        return (poly.reduce(poly.arc((j + 1) % k).a), true);
    }
    (x, false)
}

/// General step: intersect the chord with the circles of arcs `j, j+1, …`.
fn cast_chord(
    poly: &CircularPolygon,
    pre: PhasePoint,
    j: usize,
) -> Result<StepRecord, DynamicsError> {
    let k = poly.k();
    let arc = poly.arc(j);
    let (phi, theta) = (pre.phi, pre.theta);
    let p = arc.point(phi);
    let tangent = Complex64::i() * Complex64::cis(phi);
    let dir = Complex64::cis(theta) * tangent;

    let mut hit: Option<(usize, f64, f64)> = None;
    'passes: for slack in [0.0, TOL_RANGE] {
        for step in 0..k {
            let m = (j + step) % k;
            let target = poly.arc(m);
            let t = if m == j {
                2.0 * arc.radius * theta.sin()
            } else {
                let w = p - target.center;
                let b = (dir.conj() * w).re;
                let c = w.norm_sqr() - target.radius * target.radius;
                let disc = b * b - c;
                if disc < 0.0 {
                    continue;
                }
                let root = disc.sqrt();
                // larger root, written to avoid cancellation when b > 0
                if b <= 0.0 {
                    root - b
                } else if c < 0.0 {
                    -c / (b + root)
                } else {
                    continue;
                }
            };
            if t <= 0.0 {
                continue;
            }
            let z = p + t * dir;
            let ang = (z - target.center).arg();
            let mid = 0.5 * (target.a + target.b);
            let ang = ang + std::f64::consts::TAU * ((mid - ang) / std::f64::consts::TAU).round();
            if ang >= target.a - slack && ang <= target.b + slack {
                hit = Some((m, ang.clamp(target.a, target.b), t));
                break 'passes;
            }
        }
    }
    let (m, ang, t) = hit.ok_or(DynamicsError::NoIntersection { phi, theta })?;
    if t < TOL_CHORD * poly.max_radius() {
        return Err(DynamicsError::DegenerateChord { phi, theta });
    }
    let target = poly.arc(m);
    let (post_phi, node_hit) = if ang - target.a <= TOL_NODE {
        (poly.reduce(target.a), true)
    } else if target.b - ang <= TOL_NODE {
        (poly.reduce(poly.arc(m + 1).a), true)
    } else {
        (poly.reduce(ang), false)
    };
    let post_tangent = Complex64::i() * Complex64::cis(ang);
    let theta_bar = (post_tangent * dir.conj()).arg().clamp(0.0, PI);
    let arc_to = poly.arc_index(post_phi);
    Ok(StepRecord {
        pre,
        post: PhasePoint::new(post_phi, theta_bar),
        arc_from: j,
        arc_to,
        crossed_nodes: (arc_to + k - j) % k,
        link_length: t,
        node_hit,
    })
}

/// `f⁻¹ = I ∘ f ∘ I`.
pub fn billiard_inverse(
    poly: &CircularPolygon,
    x: PhasePoint,
) -> Result<StepRecord, DynamicsError> {
    let rec = billiard_step(poly, x.reversed())?;
    let k = poly.k();
    Ok(StepRecord {
        pre: rec.pre.reversed(),
        post: rec.post.reversed(),
        arc_from: rec.arc_from,
        arc_to: rec.arc_to,
        crossed_nodes: (rec.arc_from + k - rec.arc_to) % k,
        link_length: rec.link_length,
        node_hit: rec.node_hit,
    })
}

/// `n` forward steps, or `|n|` backward steps when `n < 0`.
pub fn iterate(
    poly: &CircularPolygon,
    x: PhasePoint,
    n: i64,
) -> Result<Vec<StepRecord>, DynamicsError> {
    let mut out = Vec::with_capacity(n.unsigned_abs() as usize);
    let mut cur = x;
    for index in 0..n.unsigned_abs() as usize {
        let rec = if n > 0 {
            billiard_step(poly, cur)
        } else {
            billiard_inverse(poly, cur)
        }
        .map_err(|e| DynamicsError::AtStep {
            index,
            source: Box::new(e),
        })?;
        cur = rec.post;
        out.push(rec);
    }
    Ok(out)
}

/// Total chord length of a list of steps.
pub fn path_length(steps: &[StepRecord]) -> f64 {
    steps.iter().map(|s| s.link_length).sum()
}

/// `f^n(x)` for `n >= 0`, jumping over runs of impacts inside one arc in closed form.
/// Costs O(number of arc transitions) instead of O(n).
pub fn billiard_power(
    poly: &CircularPolygon,
    x: PhasePoint,
    n: u64,
) -> Result<PhasePoint, DynamicsError> {
    let mut cur = PhasePoint::new(poly.reduce(x.phi), x.theta);
    let mut left = n;
    while left > 0 {
        if cur.theta <= 0.0 || cur.theta >= PI {
            return Ok(cur);
        }
        let arc = poly.arc(poly.arc_index(cur.phi));
        let span = arc.b - cur.phi;
        let mut run = (span / (2.0 * cur.theta)).floor().max(0.0) as u64;
        while run > 0 && cur.phi + 2.0 * run as f64 * cur.theta > arc.b {
            run -= 1;
        }
        if run >= left {
            let phi = cur.phi + 2.0 * left as f64 * cur.theta;
            return Ok(PhasePoint::new(snap_to_node(poly, phi).0, cur.theta));
        }
        if run > 0 {
            let phi = cur.phi + 2.0 * run as f64 * cur.theta;
            cur = PhasePoint::new(snap_to_node(poly, phi).0, cur.theta);
            left -= run;
        }
        cur = billiard_step(poly, cur)?.post;
        left -= 1;
    }
    Ok(cur)
}

/// Largest mismatch between the chord/tangent angles measured geometrically and
/// the stored `θ`, `θ̄`.
pub fn reflection_residual(poly: &CircularPolygon, rec: &StepRecord) -> f64 {
    if rec.link_length == 0.0 {
        return 0.0;
    }
    let z0 = poly.point_at(rec.pre.phi);
    let z1 = poly.point_at(rec.post.phi);
    let u = (z1 - z0) / (z1 - z0).norm();
    let t0 = Complex64::i() * Complex64::cis(rec.pre.phi);
    let t1 = Complex64::i() * Complex64::cis(rec.post.phi);
    let out_angle = (u * t0.conj()).arg();
    let in_angle = (t1 * u.conj()).arg();
    (out_angle - rec.pre.theta)
        .abs()
        .max((in_angle - rec.post.theta).abs())
}
