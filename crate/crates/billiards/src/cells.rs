//! Singularity segments, fundamental quadrilaterals, the admissible pair
//! sandwiches and numerical verification of the stretching property.
//!
//! Points of the fundamental domain `D_j` are addressed by the coordinates
//! `s = (φ − a_j)/2θ` and `t = (a_{j+1} − φ)/2θ`, so that `s + t = δ_j/2θ`.
//! The segment `L_j^s` is a level set of `s`, and `L_{j+1}^{-t}` a level set of `t`.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{billiard_power, hubacher_angle, DynamicsError, PhasePoint};
use crate::polygon::CircularPolygon;
use crate::ratio::rationalize;

/// Fraction of a half-quad height trimmed from each horizontal side to form a slab.
pub const SLAB_MARGIN: f64 = 0.05;
/// Float comparisons of the sandwich inequalities closer than this are refused.
pub const GUARD_BAND: f64 = 1e-12;
/// Parameter samples per vertical path.
pub const PATH_SAMPLES: usize = 2048;

const EXACT_MAX_DEN: i64 = 10_000;
const EXACT_TOL: f64 = 1e-13;
const CLASSIFY_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CellsError {
    #[error("segments L^{s} and L^-{t} do not meet: s + t is below δ/2π")]
    EmptyIntersection { s: f64, t: f64 },
    #[error("quadrilaterals need n >= 2, got {0}")]
    InvalidN(i64),
    #[error("pair (n, n') = ({n}, {n_prime}) is not admissible for transition {j}")]
    NotAdmissiblePair { j: usize, n: i64, n_prime: i64 },
    #[error("sandwich comparison for transition {j} at (n, n') = ({n}, {n_prime}) falls inside the guard band")]
    GuardBand { j: usize, n: i64, n_prime: i64 },
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

/// Which part of a fundamental quadrilateral.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Half {
    Minus,
    Plus,
    Full,
}

impl Half {
    /// `t`-range `[lo, hi]`; the base side is `t = hi`, the top side `t = lo`.
    pub fn t_range(self, n: i64) -> (f64, f64) {
        let n = n as f64;
        match self {
            Half::Minus => (n - 0.5, n),
            Half::Plus => (n - 1.0, n - 0.5),
            Half::Full => (n - 1.0, n),
        }
    }

    pub fn from_sign(sign: i64) -> Self {
        if sign < 0 {
            Half::Minus
        } else {
            Half::Plus
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Half::Minus => "-",
            Half::Plus => "+",
            Half::Full => "full",
        }
    }
}

/// `L_j^s ∩ L_{j+1}^{-t}` as a phase point: `(a_j + sδ_j/(s+t), δ_j/(2s+2t))`.
pub fn segment_intersection(
    poly: &CircularPolygon,
    j: usize,
    s: f64,
    t: f64,
) -> Result<PhasePoint, CellsError> {
    let delta = poly.delta(j);
    if s < 0.0 || t < 0.0 || s + t < delta / TAU {
        return Err(CellsError::EmptyIntersection { s, t });
    }
    Ok(PhasePoint::new(
        poly.start_angle(j as i64) + s * delta / (s + t),
        delta / (2.0 * (s + t)),
    ))
}

/// Domain coordinates `(s, t)` of `x` with respect to `D_j`. The angle `φ` is
/// unwrapped to the branch nearest to arc `j`.
pub fn domain_coords(poly: &CircularPolygon, j: usize, x: PhasePoint) -> (f64, f64) {
    let a = poly.start_angle(j as i64);
    let delta = poly.delta(j);
    let mut d = (x.phi - a).rem_euclid(TAU);
    if d > 0.5 * (delta + TAU) {
        d -= TAU;
    }
    (d / (2.0 * x.theta), (delta - d) / (2.0 * x.theta))
}

/// Oriented fundamental quadrilateral `Q^ς_{j,n}` (or the full `Q_{j,n}`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FundamentalQuad {
    pub j: usize,
    pub n: i64,
    pub half: Half,
    pub bl: PhasePoint,
    pub br: PhasePoint,
    pub tr: PhasePoint,
    pub tl: PhasePoint,
}

impl FundamentalQuad {
    pub fn new(poly: &CircularPolygon, j: usize, n: i64, half: Half) -> Result<Self, CellsError> {
        if n < 2 {
            return Err(CellsError::InvalidN(n));
        }
        let (lo, hi) = half.t_range(n);
        Ok(Self {
            j,
            n,
            half,
            bl: segment_intersection(poly, j, 0.0, hi)?,
            br: segment_intersection(poly, j, 1.0, hi)?,
            tr: segment_intersection(poly, j, 1.0, lo)?,
            tl: segment_intersection(poly, j, 0.0, lo)?,
        })
    }

    pub fn corners(&self) -> [PhasePoint; 4] {
        [self.bl, self.br, self.tr, self.tl]
    }

    pub fn min_theta(&self) -> f64 {
        self.corners().iter().map(|c| c.theta).fold(f64::INFINITY, f64::min)
    }

    pub fn max_theta(&self) -> f64 {
        self.corners().iter().map(|c| c.theta).fold(0.0, f64::max)
    }

    /// Closed membership test with slack `tol` in domain coordinates.
    pub fn contains(&self, poly: &CircularPolygon, x: PhasePoint, tol: f64) -> bool {
        self.contains_with_margin(poly, x, -tol)
    }

    /// Membership in the slab obtained by trimming `margin` (in `t` units)
    /// from both horizontal sides. Lateral sides are kept, open.
    pub fn contains_with_margin(&self, poly: &CircularPolygon, x: PhasePoint, margin: f64) -> bool {
        if x.theta <= 0.0 {
            return false;
        }
        let (s, t) = domain_coords(poly, self.j, x);
        let (lo, hi) = self.half.t_range(self.n);
        let lateral = if margin > 0.0 { 0.0 } else { margin };
        s >= lateral && s <= 1.0 - lateral && t >= lo + margin && t <= hi - margin
    }

    /// Slab membership with the default margin `SLAB_MARGIN · height`.
    pub fn slab_contains(&self, poly: &CircularPolygon, x: PhasePoint) -> bool {
        let (lo, hi) = self.half.t_range(self.n);
        self.contains_with_margin(poly, x, SLAB_MARGIN * (hi - lo))
    }

    /// Point with domain coordinates `(s, t)`.
    pub fn point(&self, poly: &CircularPolygon, s: f64, t: f64) -> PhasePoint {
        let delta = poly.delta(self.j);
        PhasePoint::new(
            poly.start_angle(self.j as i64) + s * delta / (s + t),
            delta / (2.0 * (s + t)),
        )
    }
}

/// Coefficients of the transition from arc `j` to arc `j + 1`.
///
/// `ρ = δ_{j+1}/δ_j` and `μ² = r_j/r_{j+1}` are kept as exact rationals when
/// they have small denominators, so the sandwich inequalities can be decided
/// in integer arithmetic.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub j: usize,
    pub mu: f64,
    pub rho: f64,
    pub alpha_minus: f64,
    pub alpha_plus: f64,
    pub beta_minus: f64,
    pub beta_plus: f64,
    rho_exact: Option<(i128, i128)>,
    mu_sq_exact: Option<(i128, i128)>,
}

impl Transition {
    pub fn new(poly: &CircularPolygon, j: usize) -> Self {
        let k = poly.k();
        let j = j % k;
        let rho = poly.delta((j + 1) % k) / poly.delta(j);
        let mu_sq = poly.radius(j) / poly.radius((j + 1) % k);
        let mu = mu_sq.sqrt();
        let alpha_minus = rho / mu.max(1.0);
        let alpha_plus = rho / mu.min(1.0);
        let exact = |x: f64| rationalize(x, EXACT_MAX_DEN, EXACT_TOL).map(|(p, q)| (p as i128, q as i128));
        Self {
            j,
            mu,
            rho,
            alpha_minus,
            alpha_plus,
            beta_minus: alpha_minus + 1.0,
            beta_plus: alpha_plus + 1.0,
            rho_exact: exact(rho),
            mu_sq_exact: exact(mu_sq),
        }
    }

    /// All transitions of `poly`, indexed by `j`.
    pub fn all(poly: &CircularPolygon) -> Vec<Self> {
        (0..poly.k()).map(|j| Self::new(poly, j)).collect()
    }

    /// Whether both inequalities are decided in exact integer arithmetic.
    pub fn is_exact(&self) -> bool {
        self.rho_exact.is_some() && self.mu_sq_exact.is_some()
    }

    /// Sign of `lhs − ρ·m/c` where `c = μ` if `with_mu`, else `c = 1`.
    fn compare(&self, lhs: i64, m: i64, with_mu: bool, n: i64, n_prime: i64) -> Result<i32, CellsError> {
        if let Some((p, q)) = self.rho_exact {
            let (l, m) = (lhs as i128, m as i128);
            if !with_mu {
                return Ok(cmp_sign(l * q, p * m));
            }
            if let Some((u, v)) = self.mu_sq_exact {
                // l·μ vs ρ·m with ρ·m >= 0, squared: l² u q² vs p² m² v
                if l < 0 {
                    return Ok(-1);
                }
                return Ok(cmp_sign(l * l * u * q * q, p * p * m * m * v));
            }
        }
        let c = if with_mu { self.mu } else { 1.0 };
        self.float_sign(lhs as f64, self.rho * m as f64 / c, n, n_prime)
    }

    /// `α⁻ n + β⁻ ≤ n'` (or `<` when `strict`), i.e. `n' − 1 ≥ ρ(n+1)/max(1, μ)`.
    pub fn satisfies_lower(&self, n: i64, n_prime: i64, strict: bool) -> Result<bool, CellsError> {
        let sign = self.compare(n_prime - 1, n + 1, self.mu > 1.0, n, n_prime)?;
        Ok(if strict { sign > 0 } else { sign >= 0 })
    }

    /// `n' ≤ α⁺ n − β⁺` (or `<` when `strict`), i.e. `n' + 1 ≤ ρ(n−1)/min(1, μ)`.
    pub fn satisfies_upper(&self, n: i64, n_prime: i64, strict: bool) -> Result<bool, CellsError> {
        let sign = self.compare(n_prime + 1, n - 1, self.mu < 1.0, n, n_prime)?;
        Ok(if strict { sign < 0 } else { sign <= 0 })
    }

    fn float_sign(&self, lhs: f64, rhs: f64, n: i64, n_prime: i64) -> Result<i32, CellsError> {
        let d = lhs - rhs;
        if d.abs() <= GUARD_BAND * rhs.abs().max(1.0) {
            return Err(CellsError::GuardBand {
                j: self.j,
                n,
                n_prime,
            });
        }
        Ok(if d > 0.0 { 1 } else { -1 })
    }

    /// Both sandwich inequalities (no `χ` floors).
    pub fn sandwich(&self, n: i64, n_prime: i64, strict: bool) -> Result<bool, CellsError> {
        Ok(self.satisfies_lower(n, n_prime, strict)? && self.satisfies_upper(n, n_prime, strict)?)
    }

    /// Smallest `n'` satisfying the lower inequality.
    pub fn lower_min(&self, n: i64, strict: bool) -> Result<i64, CellsError> {
        let est = (1.0 + self.rho * (n + 1) as f64 / self.mu.max(1.0)).floor() as i64;
        let mut m = est - 2;
        while !self.satisfies_lower(n, m, strict)? {
            m += 1;
        }
        while self.satisfies_lower(n, m - 1, strict)? {
            m -= 1;
        }
        Ok(m)
    }

    /// Largest `n'` satisfying the upper inequality.
    pub fn upper_max(&self, n: i64, strict: bool) -> Result<i64, CellsError> {
        let est = (self.rho * (n - 1) as f64 / self.mu.min(1.0) - 1.0).ceil() as i64;
        let mut m = est + 2;
        while !self.satisfies_upper(n, m, strict)? {
            m -= 1;
        }
        while self.satisfies_upper(n, m + 1, strict)? {
            m += 1;
        }
        Ok(m)
    }

    /// All `n ≥ 1` with `sandwich(n, n_prime)`, as an inclusive interval.
    pub fn predecessor_range(&self, n_prime: i64, strict: bool) -> Result<Option<(i64, i64)>, CellsError> {
        // upper(n, n') holds for all large n, lower(n, n') for all small n
        let est_lo = 1.0 + (n_prime + 1) as f64 * self.mu.min(1.0) / self.rho;
        let est_hi = (n_prime - 1) as f64 * self.mu.max(1.0) / self.rho - 1.0;
        let lo = first_true(est_lo.floor() as i64, |n| self.satisfies_upper(n, n_prime, strict))?.max(1);
        let hi = first_true(est_hi.floor() as i64 + 1, |n| {
            self.satisfies_lower(n, n_prime, strict).map(|b| !b)
        })? - 1;
        Ok((lo <= hi).then_some((lo, hi)))
    }

    /// The endpoint inequalities that make both horizontal sides of `Q^ς_{j,n}`
    /// land on opposite sides of `Q_{j+1,n'}`.
    pub fn endpoint_inequalities(&self, poly: &CircularPolygon, n: i64, n_prime: i64) -> bool {
        let k = poly.k();
        let dj = poly.delta(self.j);
        let dn = poly.delta((self.j + 1) % k);
        let (n, m) = (n as f64, n_prime as f64);
        if self.mu < 1.0 {
            self.mu * dj / (2.0 * n - 1.0) <= dn / (2.0 * m + 2.0)
                && dn / (2.0 * m - 2.0) <= dj / (2.0 * n + 2.0)
        } else {
            self.mu * dj / (2.0 * n + 1.0) >= dn / (2.0 * m - 2.0)
                && dj / (2.0 * n - 2.0) <= dn / (2.0 * m + 2.0)
        }
    }
}

fn cmp_sign(a: i128, b: i128) -> i32 {
    match a.cmp(&b) {
        std::cmp::Ordering::Less => -1,
        std::cmp::Ordering::Equal => 0,
        std::cmp::Ordering::Greater => 1,
    }
}

/// All `n' ≥ χ_{j+1}` with `(n, n')` in `Υ_j` (non-strict) or `Ξ_j` (strict).
pub fn admissible_pairs(
    poly: &CircularPolygon,
    chi: &[i64],
    j: usize,
    n: i64,
    strict: bool,
) -> Result<Vec<i64>, CellsError> {
    let k = poly.k();
    if n < chi[j % k] {
        return Ok(Vec::new());
    }
    let tr = Transition::new(poly, j);
    let lo = tr.lower_min(n, strict)?.max(chi[(j + 1) % k]);
    let hi = tr.upper_max(n, strict)?;
    Ok((lo..=hi).collect())
}

/// Minimal floors `χ_j ≥ 2` that keep `θ ≤ δ_j` and the transition angle
/// `g(θ; μ_j) ≤ δ_{j+1}` on every `Q_{j,n}`, `n ≥ χ_j`.
pub fn compute_chi(poly: &CircularPolygon) -> Vec<i64> {
    let k = poly.k();
    (0..k)
        .map(|j| {
            let mu = poly.mu(j);
            let dj = poly.delta(j);
            let dn = poly.delta((j + 1) % k);
            if mu < 1.0 {
                2.max(1 + (mu * dj / (2.0 * dn)).ceil() as i64)
            } else {
                let mut chi = 2;
                loop {
                    let theta = dj / (2.0 * chi as f64 - 2.0);
                    if theta <= dj && hubacher_angle(theta, mu).is_ok_and(|g| g <= dn) {
                        break chi;
                    }
                    chi += 1;
                }
            }
        })
        .collect()
}

/// Which pairs `verify_stretching` accepts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StretchGate {
    /// `(n, n') ∈ Υ_j` together with the `χ` floors.
    #[default]
    Upsilon,
    /// Only the endpoint inequalities of the proof; wider than `Υ_j`.
    EndpointInequalities,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Witness {
    pub path: usize,
    /// Parameter interval whose image crosses the target cell.
    pub start: f64,
    pub end: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StretchReport {
    pub j: usize,
    pub n: i64,
    pub n_prime: i64,
    pub sigma: Half,
    pub sigma_prime: Half,
    pub seed: u64,
    pub paths: usize,
    pub success_fraction: f64,
    pub witnesses: Vec<Witness>,
}

/// A family of vertical paths in `Q^ς_{j,n}` together with their sampled
/// images under `f^n`. Images do not depend on the target, so one family
/// serves every `(n', ς')`.
#[derive(Debug, Clone)]
pub struct VerticalPaths {
    pub quad: FundamentalQuad,
    pub seed: u64,
    /// Straight segments from a base point to a top point.
    pub ends: Vec<(PhasePoint, PhasePoint)>,
    images: Vec<Vec<PhasePoint>>,
    /// Domain coordinates of the images on the next arc, `None` off the cylinder.
    coords: Vec<Vec<Option<(f64, f64)>>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    Above,
    Below,
    Inside,
    Outside,
}

impl VerticalPaths {
    /// The two lateral edges plus `n_random` segments between uniformly
    /// drawn base and top points.
    pub fn sample(
        poly: &CircularPolygon,
        quad: FundamentalQuad,
        n_random: usize,
        seed: u64,
    ) -> Result<Self, CellsError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (lo, hi) = quad.half.t_range(quad.n);
        let mut ends = vec![(quad.bl, quad.tl), (quad.br, quad.tr)];
        for _ in 0..n_random {
            let sb: f64 = rng.gen();
            let st: f64 = rng.gen();
            ends.push((quad.point(poly, sb, hi), quad.point(poly, st, lo)));
        }
        let images = ends
            .par_iter()
            .map(|&(b, t)| {
                (0..PATH_SAMPLES)
                    .map(|i| {
                        let u = i as f64 / (PATH_SAMPLES - 1) as f64;
                        billiard_power(poly, lerp(b, t, u), quad.n as u64)
                    })
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        let next = (quad.j + 1) % poly.k();
        let coords = images
            .iter()
            .map(|img| {
                img.iter()
                    .map(|&y| (y.theta > 0.0).then(|| domain_coords(poly, next, y)))
                    .collect()
            })
            .collect();
        Ok(Self {
            quad,
            seed,
            ends,
            images,
            coords,
        })
    }

    pub fn len(&self) -> usize {
        self.ends.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ends.is_empty()
    }

    /// Locate, on every path, a subpath whose image is vertical in `target`.
    pub fn witnesses(
        &self,
        poly: &CircularPolygon,
        target: &FundamentalQuad,
    ) -> Result<Vec<Option<Witness>>, CellsError> {
        (0..self.len())
            .into_par_iter()
            .map(|p| self.witness(poly, target, p))
            .collect()
    }

    fn witness(
        &self,
        poly: &CircularPolygon,
        target: &FundamentalQuad,
        p: usize,
    ) -> Result<Option<Witness>, CellsError> {
        let sides: Vec<Side> = if target.j == (self.quad.j + 1) % poly.k() {
            self.coords[p].iter().map(|&c| side_of(target, c)).collect()
        } else {
            self.images[p].iter().map(|&y| classify(poly, target, y)).collect()
        };
        let first = sides[0];
        let last = *sides.last().unwrap();
        let opposite = matches!(
            (first, last),
            (Side::Above, Side::Below) | (Side::Below, Side::Above)
        );
        if !opposite {
            return Ok(None);
        }
        let Some(e) = sides.iter().position(|&s| s == last) else {
            return Ok(None);
        };
        let Some(s) = sides[..e].iter().rposition(|&s| s == first) else {
            return Ok(None);
        };
        let param = |i: usize| i as f64 / (PATH_SAMPLES - 1) as f64;
        if s + 1 < e {
            if sides[s + 1..e].iter().all(|&c| c == Side::Inside) {
                return Ok(Some(Witness {
                    path: p,
                    start: param(s),
                    end: param(e),
                }));
            }
            return Ok(None);
        }
        // Adjacent samples jump over the target: bisect for an interior image.
        let (b, t) = self.ends[p];
        let (mut u0, mut u1) = (param(s), param(e));
        for _ in 0..60 {
            let um = 0.5 * (u0 + u1);
            let y = billiard_power(poly, lerp(b, t, um), self.quad.n as u64)?;
            match classify(poly, target, y) {
                Side::Inside => {
                    return Ok(Some(Witness {
                        path: p,
                        start: u0,
                        end: u1,
                    }))
                }
                Side::Outside => return Ok(None),
                c if c == first => u0 = um,
                _ => u1 = um,
            }
        }
        Ok(None)
    }
}

fn lerp(a: PhasePoint, b: PhasePoint, u: f64) -> PhasePoint {
    PhasePoint::new(a.phi + u * (b.phi - a.phi), a.theta + u * (b.theta - a.theta))
}

fn classify(poly: &CircularPolygon, target: &FundamentalQuad, y: PhasePoint) -> Side {
    side_of(target, (y.theta > 0.0).then(|| domain_coords(poly, target.j, y)))
}

fn side_of(target: &FundamentalQuad, coords: Option<(f64, f64)>) -> Side {
    let Some((s, t)) = coords else {
        return Side::Outside;
    };
    if !(-CLASSIFY_TOL..=1.0 + CLASSIFY_TOL).contains(&s) {
        return Side::Outside;
    }
    // the closed top and bottom edges count as reached
    let (lo, hi) = target.half.t_range(target.n);
    if t >= hi - CLASSIFY_TOL {
        Side::Below
    } else if t <= lo + CLASSIFY_TOL {
        Side::Above
    } else {
        Side::Inside
    }
}

/// Check that the admissibility gate lets `(n, n')` through.
pub fn check_gate(
    poly: &CircularPolygon,
    chi: &[i64],
    j: usize,
    n: i64,
    n_prime: i64,
    gate: StretchGate,
) -> Result<(), CellsError> {
    let k = poly.k();
    let tr = Transition::new(poly, j);
    let ok = match gate {
        StretchGate::Upsilon => {
            n >= chi[j % k] && n_prime >= chi[(j + 1) % k] && tr.sandwich(n, n_prime, false)?
        }
        StretchGate::EndpointInequalities => n >= 2 && n_prime >= 2 && tr.endpoint_inequalities(poly, n, n_prime),
    };
    if ok {
        Ok(())
    } else {
        Err(CellsError::NotAdmissiblePair {
            j: j % k,
            n,
            n_prime,
        })
    }
}

/// Sample `n_paths` random vertical paths (plus both lateral edges) in
/// `Q^ς_{j,n}` and report the fraction whose `f^n` image contains a subpath
/// vertical in `Q^ς'_{j+1,n'}`.
#[allow(clippy::too_many_arguments)]
pub fn verify_stretching(
    poly: &CircularPolygon,
    chi: &[i64],
    j: usize,
    n: i64,
    n_prime: i64,
    sigma: Half,
    sigma_prime: Half,
    n_paths: usize,
    seed: u64,
    gate: StretchGate,
) -> Result<StretchReport, CellsError> {
    let k = poly.k();
    let j = j % k;
    check_gate(poly, chi, j, n, n_prime, gate)?;
    let quad = FundamentalQuad::new(poly, j, n, sigma)?;
    let target = FundamentalQuad::new(poly, (j + 1) % k, n_prime, sigma_prime)?;
    let family = VerticalPaths::sample(poly, quad, n_paths, seed)?;
    let found = family.witnesses(poly, &target)?;
    Ok(report(&family, &target, &found))
}

/// Summarize witness search results into a report.
pub fn report(family: &VerticalPaths, target: &FundamentalQuad, found: &[Option<Witness>]) -> StretchReport {
    let witnesses: Vec<Witness> = found.iter().flatten().copied().collect();
    StretchReport {
        j: family.quad.j,
        n: family.quad.n,
        n_prime: target.n,
        sigma: family.quad.half,
        sigma_prime: target.half,
        seed: family.seed,
        paths: found.len(),
        success_fraction: witnesses.len() as f64 / found.len() as f64,
        witnesses,
    }
}

/// Smallest `v` (searching from `est`) for which the monotone predicate holds.
fn first_true(est: i64, mut pred: impl FnMut(i64) -> Result<bool, CellsError>) -> Result<i64, CellsError> {
    let mut v = est;
    if pred(v)? {
        while pred(v - 1)? {
            v -= 1;
        }
    } else {
        v += 1;
        while !pred(v)? {
            v += 1;
        }
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{billiard_step, hubacher_angle};
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn ellipse() -> CircularPolygon {
        CircularPolygon::pseudo_ellipse(FRAC_PI_2, 1.0, 2.0).unwrap()
    }

    /// Four arcs with `δ_0 = π/2`, `δ_1 = 1`, `μ_0 = 0.3`; the last two radii
    /// are solved from the closure condition.
    fn figure_polygon() -> CircularPolygon {
        let deltas = [FRAC_PI_2, 1.0, 2.0, 2.0 * PI - FRAC_PI_2 - 3.0];
        let r0 = 1.0;
        let r1 = r0 / 0.09;
        let mut a = [0.0; 5];
        for i in 0..4 {
            a[i + 1] = a[i] + deltas[i];
        }
        let w = |i: usize| num_complex::Complex64::cis(a[i + 1]) - num_complex::Complex64::cis(a[i]);
        let rhs = -(r0 * w(0) + r1 * w(1));
        let (m00, m01, m10, m11) = (w(2).re, w(3).re, w(2).im, w(3).im);
        let det = m00 * m11 - m01 * m10;
        let r2 = (rhs.re * m11 - m01 * rhs.im) / det;
        let r3 = (m00 * rhs.im - m10 * rhs.re) / det;
        CircularPolygon::build(&[r0, r1, r2, r3], &deltas, num_complex::Complex64::new(0.0, 0.0), 0.0).unwrap()
    }

    #[test]
    fn intersection_closed_forms() {
        let e = ellipse();
        let x = segment_intersection(&e, 0, 1.0, 3.0).unwrap();
        assert_abs_diff_eq!(x.theta, PI / 16.0, epsilon = 1e-15);
        assert_abs_diff_eq!(x.phi, PI / 8.0, epsilon = 1e-15);
        let x = segment_intersection(&e, 2, 0.0, 7.0).unwrap();
        assert_abs_diff_eq!(x.theta, FRAC_PI_2 / 14.0, epsilon = 1e-15);
        assert_eq!(x.phi, e.start_angle(2));
        for s in [0.5, 2.0, 9.0] {
            let x = segment_intersection(&e, 1, s, s).unwrap();
            assert_abs_diff_eq!(x.phi, e.start_angle(1) + FRAC_PI_2 / 2.0, epsilon = 1e-14);
        }
        assert!(matches!(
            segment_intersection(&e, 0, 0.1, 0.1),
            Err(CellsError::EmptyIntersection { .. })
        ));
    }

    #[test]
    fn quad_extremes() {
        let e = ellipse();
        let q = FundamentalQuad::new(&e, 0, 3, Half::Full).unwrap();
        assert_abs_diff_eq!(q.min_theta(), PI / 16.0, epsilon = 1e-15);
        assert_abs_diff_eq!(q.max_theta(), PI / 8.0, epsilon = 1e-15);
        let minus = FundamentalQuad::new(&e, 0, 3, Half::Minus).unwrap();
        assert_abs_diff_eq!(minus.tl.theta, FRAC_PI_2 / 5.0, epsilon = 1e-15);
        let plus = FundamentalQuad::new(&e, 0, 3, Half::Plus).unwrap();
        assert_eq!(minus.tl, plus.bl);
        assert_eq!(minus.tr, plus.br);
        let far = FundamentalQuad::new(&e, 0, 100_000, Half::Full).unwrap();
        assert!(far.max_theta() < 1e-4 && far.tr.phi - e.start_angle(0) < 1e-4);
        assert_eq!(FundamentalQuad::new(&e, 0, 1, Half::Full), Err(CellsError::InvalidN(1)));
    }

    #[test]
    fn quad_contains_its_centre() {
        let e = ellipse();
        for half in [Half::Minus, Half::Plus] {
            let q = FundamentalQuad::new(&e, 1, 12, half).unwrap();
            let (lo, hi) = half.t_range(12);
            let c = q.point(&e, 0.5, 0.5 * (lo + hi));
            assert!(q.contains(&e, c, 0.0) && q.slab_contains(&e, c));
            let edge = q.point(&e, 0.5, hi - 0.01);
            assert!(q.contains(&e, edge, 0.0) && !q.slab_contains(&e, edge));
        }
    }

    #[test]
    fn ellipse_pairs() {
        let e = ellipse();
        let chi = compute_chi(&e);
        assert_eq!(chi, vec![2, 2, 2, 2]);
        assert_eq!(admissible_pairs(&e, &chi, 0, 20, false).unwrap(), vec![22, 23, 24, 25]);
        assert!(admissible_pairs(&e, &chi, 0, 10, false).unwrap().is_empty());
        let tr = Transition::new(&e, 0);
        assert!(tr.is_exact());
        assert_abs_diff_eq!(tr.alpha_plus, 2f64.sqrt(), epsilon = 1e-15);
        assert_eq!(tr.alpha_minus, 1.0);
    }

    #[test]
    fn strict_pairs_inside_weak_pairs() {
        for poly in [ellipse(), CircularPolygon::moss_egg(1.0).unwrap()] {
            let chi = compute_chi(&poly);
            for j in 0..poly.k() {
                for n in 2..=200 {
                    let weak = admissible_pairs(&poly, &chi, j, n, false).unwrap();
                    let strict = admissible_pairs(&poly, &chi, j, n, true).unwrap();
                    assert!(strict.iter().all(|m| weak.contains(m)));
                }
            }
        }
    }

    #[test]
    fn exact_predicates_match_floats_away_from_ties() {
        let e = ellipse();
        for tr in Transition::all(&e) {
            for n in 2..300 {
                for m in 2..500 {
                    let lo = (m - 1) as f64 - tr.rho * (n + 1) as f64 / tr.mu.max(1.0);
                    let hi = (m + 1) as f64 - tr.rho * (n - 1) as f64 / tr.mu.min(1.0);
                    if lo.abs() > 1e-9 {
                        assert_eq!(tr.satisfies_lower(n, m, true).unwrap(), lo > 0.0);
                    }
                    if hi.abs() > 1e-9 {
                        assert_eq!(tr.satisfies_upper(n, m, true).unwrap(), hi < 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn ties_separate_strict_from_weak() {
        // α⁻ = 1 on the ellipse: n' = n + 2 is the tie of the lower inequality
        let tr = Transition::new(&ellipse(), 0);
        assert!(tr.satisfies_lower(20, 22, false).unwrap());
        assert!(!tr.satisfies_lower(20, 22, true).unwrap());
        assert_eq!(tr.lower_min(20, true).unwrap(), 23);
    }

    #[test]
    fn telescoping_factors() {
        for poly in [
            ellipse(),
            CircularPolygon::moss_egg(1.0).unwrap(),
            CircularPolygon::triangle_sixgon([3.0, -1.0], [-1.0, -1.0], [0.0, 1.0], 1.0).unwrap(),
        ] {
            let trs = Transition::all(&poly);
            let plus: f64 = trs.iter().map(|t| t.alpha_plus).product();
            let minus: f64 = trs.iter().map(|t| t.alpha_minus).product();
            assert_abs_diff_eq!(plus * minus, 1.0, epsilon = 1e-12);
            assert!(plus > 1.0);
        }
    }

    #[test]
    fn chi_guarantees_transition_inside_next_arc() {
        for poly in [
            ellipse(),
            CircularPolygon::moss_egg(1.0).unwrap(),
            CircularPolygon::triangle_sixgon([3.0, -1.0], [-1.0, -1.0], [0.0, 1.0], 1.0).unwrap(),
        ] {
            let chi = compute_chi(&poly);
            let k = poly.k();
            for j in 0..k {
                assert!(chi[j] >= 2);
                let theta = poly.delta(j) / (2.0 * chi[j] as f64 - 2.0);
                assert!(hubacher_angle(theta, poly.mu(j)).unwrap() <= poly.delta((j + 1) % k));
            }
        }
    }

    #[test]
    fn horizontal_sides_keep_theta() {
        let e = ellipse();
        for j in 0..4 {
            for n in [2, 5, 17] {
                let q = FundamentalQuad::new(&e, j, n, Half::Full).unwrap();
                for s in [0.0, 0.3, 0.77, 1.0] {
                    for t in [(n - 1) as f64, n as f64] {
                        let x = q.point(&e, s, t);
                        let y = billiard_power(&e, x, n as u64).unwrap();
                        assert_abs_diff_eq!(y.theta, x.theta, epsilon = 1e-10);
                    }
                }
            }
        }
    }

    #[test]
    fn mid_segment_images_obey_hubacher_bound() {
        let e = ellipse();
        for j in 0..4 {
            let mu = e.mu(j);
            for n in [3, 8, 20] {
                let q = FundamentalQuad::new(&e, j, n, Half::Full).unwrap();
                let nf = n as f64;
                for i in 1..20 {
                    let x = q.point(&e, i as f64 / 20.0, nf - 0.5);
                    let y = billiard_power(&e, x, n as u64).unwrap();
                    let bound = mu * e.delta(j) / if mu < 1.0 { 2.0 * nf - 1.0 } else { 2.0 * nf + 1.0 };
                    if mu < 1.0 {
                        assert!(y.theta < bound);
                    } else {
                        assert!(y.theta > bound);
                    }
                }
            }
        }
    }

    #[test]
    fn ellipse_stretching_example() {
        let e = ellipse();
        let chi = compute_chi(&e);
        for sigma in [Half::Minus, Half::Plus] {
            for sigma_prime in [Half::Minus, Half::Plus] {
                let rep = verify_stretching(
                    &e, &chi, 0, 20, 23, sigma, sigma_prime, 200, 7, StretchGate::Upsilon,
                )
                .unwrap();
                assert_eq!(rep.success_fraction, 1.0, "{sigma:?} {sigma_prime:?}");
                assert_eq!(rep.paths, 202);
            }
        }
    }

    #[test]
    fn figure_configuration_stretches() {
        let poly = figure_polygon();
        assert_abs_diff_eq!(poly.mu(0), 0.3, epsilon = 1e-12);
        let chi = compute_chi(&poly);
        assert!(check_gate(&poly, &chi, 0, 3, 4, StretchGate::Upsilon).is_err());
        for sigma in [Half::Minus, Half::Plus] {
            for sigma_prime in [Half::Minus, Half::Plus] {
                let rep = verify_stretching(
                    &poly,
                    &chi,
                    0,
                    3,
                    4,
                    sigma,
                    sigma_prime,
                    200,
                    11,
                    StretchGate::EndpointInequalities,
                )
                .unwrap();
                assert_eq!(rep.success_fraction, 1.0);
            }
        }
    }

    #[test]
    fn pair_outside_upsilon_is_rejected() {
        let e = ellipse();
        let chi = compute_chi(&e);
        let r = verify_stretching(&e, &chi, 0, 20, 27, Half::Minus, Half::Minus, 10, 1, StretchGate::Upsilon);
        assert_eq!(r.unwrap_err(), CellsError::NotAdmissiblePair { j: 0, n: 20, n_prime: 27 });
    }

    #[test]
    fn images_of_quads_land_in_next_domain() {
        let e = ellipse();
        let q = FundamentalQuad::new(&e, 1, 6, Half::Full).unwrap();
        let x = q.point(&e, 0.4, 5.5);
        let y = billiard_power(&e, x, 6).unwrap();
        let (s, _) = domain_coords(&e, 2, y);
        assert!((0.0..=1.0).contains(&s));
        let z = billiard_step(&e, y).unwrap();
        assert_eq!(z.arc_to, 2);
    }
}
