//! Lattice points of the unbounded polytope `P^(p)` with a prescribed
//! coordinate sum, and the explicit lower bounds built on them.

use num_bigint::BigUint;
use num_traits::{CheckedAdd, CheckedSub, One, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::cells::{CellsError, Transition};
use crate::polygon::CircularPolygon;

/// Slack used when a float half-space test meets an exact tie.
const ROW_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CountingError {
    #[error("p must be at least 1")]
    InvalidPeriod,
    #[error("cube radius t* = {0} is not positive")]
    EmptyCube(f64),
    #[error("dimension {dim} exceeds the limit {max} for this method")]
    DimensionTooLarge { dim: usize, max: usize },
    #[error("lower bound violated at q = {q}")]
    BoundViolation { q: i64 },
    #[error(transparent)]
    Cells(#[from] CellsError),
}

/// `{x : a·x < b}` (strict) or `{x : a·x ≤ b}` rows.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Halfspace {
    pub normal: Vec<f64>,
    pub offset: f64,
    pub strict: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HalfspacePolytope {
    pub dimension: usize,
    pub inequalities: Vec<Halfspace>,
}

impl HalfspacePolytope {
    pub fn new(dimension: usize) -> Self {
        Self {
            dimension,
            inequalities: Vec::new(),
        }
    }

    pub fn push(&mut self, normal: Vec<f64>, offset: f64, strict: bool) {
        assert_eq!(normal.len(), self.dimension);
        self.inequalities.push(Halfspace { normal, offset, strict });
    }

    fn row_holds(row: &Halfspace, x: &[f64]) -> bool {
        let lhs: f64 = row.normal.iter().zip(x).map(|(a, v)| a * v).sum();
        let scale = 1.0 + row.offset.abs() + row.normal.iter().zip(x).map(|(a, v)| (a * v).abs()).sum::<f64>();
        if row.strict {
            lhs < row.offset - ROW_TOL * scale
        } else {
            lhs <= row.offset + ROW_TOL * scale
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.inequalities.iter().all(|r| Self::row_holds(r, x))
    }

    /// Checks only the rows whose support lies in the first `len` coordinates.
    fn prefix_holds(&self, x: &[f64], len: usize) -> bool {
        self.inequalities.iter().all(|r| {
            let last = r.normal.iter().rposition(|a| *a != 0.0).unwrap_or(0);
            last >= len || Self::row_holds(r, x)
        })
    }
}

/// `P^(p)`: `kp` coordinates linked cyclically by strict sandwiches, with floors.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainPolytope {
    pub transitions: Vec<Transition>,
    pub chi: Vec<i64>,
    pub p: usize,
}

impl ChainPolytope {
    pub fn new(poly: &CircularPolygon, chi: Vec<i64>, p: usize) -> Result<Self, CountingError> {
        if p == 0 {
            return Err(CountingError::InvalidPeriod);
        }
        Ok(Self {
            transitions: Transition::all(poly),
            chi,
            p,
        })
    }

    pub fn k(&self) -> usize {
        self.transitions.len()
    }

    pub fn dimension(&self) -> usize {
        self.k() * self.p
    }

    /// The `3kp` rows of the float half-space representation.
    pub fn halfspaces(&self) -> HalfspacePolytope {
        let d = self.dimension();
        let k = self.k();
        let mut h = HalfspacePolytope::new(d);
        for i in 0..d {
            let t = &self.transitions[i % k];
            let next = (i + 1) % d;
            let mut lower = vec![0.0; d];
            lower[i] += t.alpha_minus;
            lower[next] -= 1.0;
            h.push(lower, -t.beta_minus, true);
            let mut upper = vec![0.0; d];
            upper[next] += 1.0;
            upper[i] -= t.alpha_plus;
            h.push(upper, -t.beta_plus, true);
        }
        for i in 0..d {
            let mut floor = vec![0.0; d];
            floor[i] = -1.0;
            h.push(floor, -(self.chi[i % k] as f64), false);
        }
        h
    }

    /// Exact membership of an integer point.
    pub fn contains(&self, x: &[i64]) -> Result<bool, CountingError> {
        let d = self.dimension();
        let k = self.k();
        if x.len() != d {
            return Ok(false);
        }
        for i in 0..d {
            if x[i] < self.chi[i % k] || !self.transitions[i % k].sandwich(x[i], x[(i + 1) % d], true)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// `G_q(P^(p))` for every `q ≤ q_max`.
    pub fn count_up_to(&self, q_max: i64) -> Result<Vec<BigUint>, CountingError> {
        match self.count_generic::<u128>(q_max)? {
            Some(v) => Ok(v.into_iter().map(BigUint::from).collect()),
            None => Ok(self.count_generic::<BigUint>(q_max)?.expect("big integers do not overflow")),
        }
    }

    pub fn count(&self, q: i64) -> Result<BigUint, CountingError> {
        Ok(self.count_up_to(q)?.pop().unwrap_or_default())
    }

    /// Dynamic programme over `(x_i, running sum)` conditioned on `x_0`,
    /// `None` on overflow of `T`.
    fn count_generic<T>(&self, q_max: i64) -> Result<Option<Vec<T>>, CountingError>
    where
        T: Clone + Zero + One + CheckedAdd + CheckedSub + Send + Sync,
    {
        let d = self.dimension();
        let k = self.k();
        let q_max = q_max.max(0);
        let floors: i64 = (0..d).map(|i| self.chi[i % k]).sum();
        let starts: Vec<i64> = (self.chi[0]..=q_max - floors + self.chi[0]).collect();
        let wrap = &self.transitions[(d - 1) % k];
        let parts: Vec<Option<Vec<T>>> = starts
            .par_iter()
            .map(|&v| self.count_from(v, q_max, wrap))
            .collect::<Result<_, _>>()?;
        let mut total = vec![T::zero(); q_max as usize + 1];
        for part in parts {
            let Some(part) = part else { return Ok(None) };
            for (acc, c) in total.iter_mut().zip(part) {
                match acc.checked_add(&c) {
                    Some(s) => *acc = s,
                    None => return Ok(None),
                }
            }
        }
        Ok(Some(total))
    }

    fn count_from<T>(&self, v: i64, q_max: i64, wrap: &Transition) -> Result<Option<Vec<T>>, CountingError>
    where
        T: Clone + Zero + One + CheckedAdd + CheckedSub,
    {
        let d = self.dimension();
        let k = self.k();
        let mut out = vec![T::zero(); q_max as usize + 1];
        // floors still owed by the coordinates after position i
        let owed: Vec<i64> = (0..d).map(|i| (i + 1..d).map(|m| self.chi[m % k]).sum()).collect();
        let mut layer = Layer::<T>::single(v, v);
        for i in 1..d {
            let t = &self.transitions[(i - 1) % k];
            let s_cap = q_max - owed[i];
            match layer.advance(t, self.chi[i % k], s_cap)? {
                Step::Next(next) => layer = next,
                Step::Empty => return Ok(Some(out)),
                Step::Overflow => return Ok(None),
            }
        }
        let Some((lo, hi)) = wrap.predecessor_range(v, true)? else {
            return Ok(Some(out));
        };
        let Some(sums) = layer.sum_over(lo, hi) else { return Ok(None) };
        for (s, c) in sums {
            let slot = &mut out[s as usize];
            match slot.checked_add(&c) {
                Some(x) => *slot = x,
                None => return Ok(None),
            }
        }
        Ok(Some(out))
    }

    /// Every integer point with coordinate sum at most `q_max`, by pruned
    /// enumeration against the float half-space rows.
    pub fn enumerate_brute(&self, q_max: i64) -> Vec<Vec<i64>> {
        let h = self.halfspaces();
        let d = self.dimension();
        let k = self.k();
        let owed: Vec<i64> = (0..d).map(|i| (i + 1..d).map(|m| self.chi[m % k]).sum()).collect();
        let mut out = Vec::new();
        let mut x = vec![0i64; d];
        let mut xf = vec![0.0; d];
        fn rec(
            depth: usize,
            sum: i64,
            ctx: (&HalfspacePolytope, &[i64], &[i64], i64, usize),
            x: &mut Vec<i64>,
            xf: &mut Vec<f64>,
            out: &mut Vec<Vec<i64>>,
        ) {
            let (h, chi, owed, q_max, k) = ctx;
            let d = x.len();
            if depth == d {
                if h.contains(xf) {
                    out.push(x.clone());
                }
                return;
            }
            for v in chi[depth % k]..=q_max - sum - owed[depth] {
                x[depth] = v;
                xf[depth] = v as f64;
                if depth + 1 < d && !h.prefix_holds(xf, depth + 1) {
                    continue;
                }
                rec(depth + 1, sum + v, ctx, x, xf, out);
            }
            xf[depth] = 0.0;
        }
        rec(0, 0, (&h, &self.chi, &owed, q_max, k), &mut x, &mut xf, &mut out);
        out
    }

    /// `G_q` for every `q ≤ q_max` from [`Self::enumerate_brute`].
    pub fn count_brute_up_to(&self, q_max: i64) -> Vec<u64> {
        let mut out = vec![0u64; q_max.max(0) as usize + 1];
        for x in self.enumerate_brute(q_max) {
            out[x.iter().sum::<i64>() as usize] += 1;
        }
        out
    }
}

enum Step<T> {
    Next(Layer<T>),
    Empty,
    Overflow,
}

/// Counts indexed by value (rows) and running sum (columns), both offset.
struct Layer<T> {
    x0: i64,
    s0: i64,
    width: usize,
    rows: Vec<Vec<T>>,
}

impl<T: Clone + Zero + One + CheckedAdd + CheckedSub> Layer<T> {
    fn single(x: i64, s: i64) -> Self {
        Self {
            x0: x,
            s0: s,
            width: 1,
            rows: vec![vec![T::one()]],
        }
    }

    fn x_hi(&self) -> i64 {
        self.x0 + self.rows.len() as i64 - 1
    }

    /// Prefix sums over `x` for each running sum.
    fn prefix(&self) -> Option<Vec<Vec<T>>> {
        let mut acc = vec![T::zero(); self.width];
        let mut out = Vec::with_capacity(self.rows.len() + 1);
        out.push(acc.clone());
        for row in &self.rows {
            for (a, c) in acc.iter_mut().zip(row) {
                *a = a.checked_add(c)?;
            }
            out.push(acc.clone());
        }
        Some(out)
    }

    fn advance(&self, t: &Transition, floor: i64, s_cap: i64) -> Result<Step<T>, CellsError> {
        let lo = t.lower_min(self.x0, true)?.max(floor);
        let hi = t.upper_max(self.x_hi(), true)?.min(s_cap - self.s0);
        if lo > hi {
            return Ok(Step::Empty);
        }
        let s0 = self.s0 + lo;
        let s_hi = (self.s0 + self.width as i64 - 1 + hi).min(s_cap);
        if s0 > s_hi {
            return Ok(Step::Empty);
        }
        let width = (s_hi - s0 + 1) as usize;
        let Some(pre) = self.prefix() else {
            return Ok(Step::Overflow);
        };
        let mut rows = Vec::with_capacity((hi - lo + 1) as usize);
        for xn in lo..=hi {
            let mut row = vec![T::zero(); width];
            if let Some((pl, ph)) = t.predecessor_range(xn, true)? {
                let pl = pl.max(self.x0);
                let ph = ph.min(self.x_hi());
                if pl <= ph {
                    let (a, b) = (&pre[(pl - self.x0) as usize], &pre[(ph - self.x0 + 1) as usize]);
                    for (c, slot) in row.iter_mut().enumerate() {
                        // previous running sum is s0 + c − xn
                        let prev = s0 + c as i64 - xn - self.s0;
                        if prev < 0 || prev >= self.width as i64 {
                            continue;
                        }
                        let p = prev as usize;
                        match b[p].checked_sub(&a[p]) {
                            Some(v) => *slot = v,
                            None => return Ok(Step::Overflow),
                        }
                    }
                }
            }
            rows.push(row);
        }
        Ok(Step::Next(Self { x0: lo, s0, width, rows }))
    }

    fn sum_over(&self, lo: i64, hi: i64) -> Option<Vec<(i64, T)>> {
        let lo = lo.max(self.x0);
        let hi = hi.min(self.x_hi());
        let mut acc = vec![T::zero(); self.width];
        for x in lo..=hi {
            for (a, c) in acc.iter_mut().zip(&self.rows[(x - self.x0) as usize]) {
                *a = a.checked_add(c)?;
            }
        }
        Some(acc.into_iter().enumerate().map(|(c, v)| (self.s0 + c as i64, v)).collect())
    }
}

/// Principal branch of the Lambert W function on `[-1/e, ∞)`.
pub fn lambert_w0(x: f64) -> f64 {
    let branch = -(-1f64).exp();
    assert!(x >= branch - 1e-15, "W0 is undefined below -1/e");
    if x == 0.0 {
        return 0.0;
    }
    let mut w = if x < 1.0 {
        let p = (2.0 * (std::f64::consts::E * x + 1.0)).max(0.0).sqrt();
        -1.0 + p - p * p / 3.0
    } else {
        let l = x.ln();
        l - l.ln().max(0.0)
    };
    for _ in 0..64 {
        let ew = w.exp();
        let f = w * ew - x;
        let wp1 = w + 1.0;
        if wp1.abs() < 1e-300 {
            break;
        }
        let step = f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1));
        w -= step;
        if step.abs() <= 4.0 * f64::EPSILON * (1.0 + w.abs()) {
            break;
        }
    }
    w
}

/// The explicit constants of the polynomial and exponential lower bounds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundConstants {
    pub a_star: f64,
    pub b_star: f64,
    pub h_star: f64,
    pub x_star: f64,
    pub m_star: f64,
    pub c_star_of_p: f64,
    pub p: usize,
    /// `α_j = sqrt(α_j^- α_j^+)`.
    pub alpha_mid: Vec<f64>,
    /// `A_j = Π_{i<j} α_i`.
    pub a_prods: Vec<f64>,
    /// Mean of the `A_j`.
    pub a_mean: f64,
}

impl BoundConstants {
    pub fn new(transitions: &[Transition], chi: &[i64], p: usize) -> Self {
        let k = transitions.len();
        let alpha_mid: Vec<f64> = transitions
            .iter()
            .map(|t| (t.alpha_minus * t.alpha_plus).sqrt())
            .collect();
        let mut a_prods = vec![1.0; k];
        for j in 1..k {
            a_prods[j] = a_prods[j - 1] * alpha_mid[j - 1];
        }
        let a_mean = a_prods.iter().sum::<f64>() / k as f64;
        let mut ratio = f64::INFINITY;
        for (j, t) in transitions.iter().enumerate() {
            let w = a_prods[j] / a_mean;
            ratio = ratio
                .min((alpha_mid[j] - t.alpha_minus) * w / (1.0 + t.alpha_minus))
                .min((t.alpha_plus - alpha_mid[j]) * w / (1.0 + t.alpha_plus));
        }
        let a_star = 4.0 * ratio;
        let b_star = 6.0 + 4.0 * *chi.iter().max().unwrap() as f64;
        let w = lambert_w0(b_star / std::f64::consts::E);
        let h_star = a_star * w / b_star;
        let x_star = a_star * w / ((1.0 + w) * b_star);
        let m_star = 2.0 * (a_star / x_star - b_star).powi(-(k as i32) - 1) / x_star;
        let kp = (k * p) as f64;
        let c_star_of_p = 2.0 * a_star.powf(kp - 1.0) / kp.powf(kp);
        Self {
            a_star,
            b_star,
            h_star,
            x_star,
            m_star,
            c_star_of_p,
            p,
            alpha_mid,
            a_prods,
            a_mean,
        }
    }

    pub fn for_polytope(poly: &ChainPolytope) -> Self {
        Self::new(&poly.transitions, &poly.chi, poly.p)
    }

    /// `2(a q/kp − b)^{kp−1}/kp`, defined for `q > b kp / a`.
    pub fn polynomial_bound(&self, k: usize, q: i64) -> Option<f64> {
        let kp = (k * self.p) as f64;
        let base = self.a_star * q as f64 / kp - self.b_star;
        (q as f64 > self.b_star * kp / self.a_star).then(|| 2.0 * base.powf(kp - 1.0) / kp)
    }

    /// `M(x) e^{h(x) q}/q` at `x = x⋆`, when `p = ⌊x⋆ q/k⌋` and the
    /// exponential lemma applies.
    pub fn exponential_bound(&self, k: usize, q: i64) -> Option<f64> {
        let p = (self.x_star * q as f64 / k as f64).floor() as usize;
        let ok = p == self.p && q as f64 >= (1.0 + self.b_star) * (k * p) as f64 / self.a_star;
        ok.then(|| self.m_star * (h_of(self.a_star, self.b_star, self.x_star) * q as f64).exp() / q as f64)
    }
}

/// `h(x) = x log(a/x − b)`.
pub fn h_of(a: f64, b: f64, x: f64) -> f64 {
    x * (a / x - b).ln()
}

/// The grid point maximizing `h` over `n` points of `(0, a/(b+1)]`, with the grid step.
pub fn h_grid_argmax(a: f64, b: f64, n: usize) -> (f64, f64) {
    let top = a / (b + 1.0);
    let step = top / n as f64;
    let best = (1..=n)
        .map(|i| i as f64 * step)
        .max_by(|x, y| h_of(a, b, *x).total_cmp(&h_of(a, b, *y)))
        .unwrap();
    (best, step)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundRow {
    pub q: i64,
    pub g_q: String,
    pub bound_a: Option<f64>,
    pub bound_b_applicable: bool,
    pub bound_b: Option<f64>,
    /// `2^{kp} G_q` over the polynomial bound, when it applies.
    pub ratio: Option<f64>,
}

/// Compares `2^{kp} G_q` against both bounds over `q_range`.
pub fn check_lower_bounds(
    poly: &ChainPolytope,
    q_range: std::ops::RangeInclusive<i64>,
) -> Result<Vec<BoundRow>, CountingError> {
    let c = BoundConstants::for_polytope(poly);
    let k = poly.k();
    let counts = poly.count_up_to(*q_range.end())?;
    let scale = 2f64.powi(poly.dimension() as i32);
    let mut rows = Vec::new();
    for q in q_range {
        let g = &counts[q as usize];
        let lhs = scale * g.to_f64().unwrap_or(f64::INFINITY);
        let bound_a = c.polynomial_bound(k, q);
        let bound_b = c.exponential_bound(k, q);
        if bound_a.is_some_and(|b| lhs < b) || bound_b.is_some_and(|b| lhs < b) {
            return Err(CountingError::BoundViolation { q });
        }
        rows.push(BoundRow {
            q,
            g_q: g.to_string(),
            bound_a,
            bound_b_applicable: bound_b.is_some(),
            bound_b,
            ratio: bound_a.map(|b| lhs / b),
        });
    }
    Ok(rows)
}

/// `G_q([0..m]^n)`, the weak compositions of `q` into `n` parts of size at most `m`.
pub fn weak_compositions(n: usize, m: usize, q: i64) -> BigUint {
    if q < 0 || q as usize > n * m {
        return BigUint::zero();
    }
    let mut coeffs = vec![BigUint::one()];
    for _ in 0..n {
        let mut next = vec![BigUint::zero(); coeffs.len() + m];
        for (i, c) in coeffs.iter().enumerate() {
            for slot in &mut next[i..=i + m] {
                *slot += c;
            }
        }
        coeffs = next;
    }
    coeffs[q as usize].clone()
}

/// The inscribed cube of the polynomial bound: centre and radius `t⋆`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InscribedCube {
    pub center: Vec<f64>,
    pub radius: f64,
}

pub fn cube_in_polytope(poly: &ChainPolytope, q: i64) -> Result<InscribedCube, CountingError> {
    let c = BoundConstants::for_polytope(poly);
    let d = poly.dimension();
    let tau = *poly.chi.iter().max().unwrap() as f64;
    let radius = c.a_star / 4.0 * q as f64 / d as f64 - tau;
    if radius <= 0.0 {
        return Err(CountingError::EmptyCube(radius));
    }
    let k = poly.k();
    let center = (0..d)
        .map(|j| q as f64 * c.a_prods[j % k] / (d as f64 * c.a_mean))
        .collect();
    Ok(InscribedCube { center, radius })
}

impl InscribedCube {
    /// Number of uniformly sampled cube points outside `P^(p)`.
    pub fn count_escapes(&self, poly: &ChainPolytope, samples: usize, seed: u64) -> usize {
        let h = poly.halfspaces();
        let shards = 16usize;
        (0..shards)
            .into_par_iter()
            .map(|shard| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(shard as u64));
                let mut x = vec![0.0; self.center.len()];
                let mut bad = 0;
                for _ in 0..samples.div_ceil(shards) {
                    for (xi, o) in x.iter_mut().zip(&self.center) {
                        *xi = o + self.radius * rng.gen_range(-1.0..1.0);
                    }
                    if !h.contains(&x) {
                        bad += 1;
                    }
                }
                bad
            })
            .sum()
    }
}

/// Test shapes for the Wills bound.
#[derive(Debug, Clone, PartialEq)]
pub enum WillsShape {
    /// `[0, a_1] × … × [0, a_n]`.
    Box(Vec<f64>),
    /// `{x ≥ 0 : Σ x ≤ 1}` in dimension `n`.
    UnitSimplex(usize),
}

impl WillsShape {
    pub fn dimension(&self) -> usize {
        match self {
            Self::Box(a) => a.len(),
            Self::UnitSimplex(n) => *n,
        }
    }

    pub fn volume(&self) -> f64 {
        match self {
            Self::Box(a) => a.iter().product(),
            Self::UnitSimplex(n) => 1.0 / (1..=*n).product::<usize>() as f64,
        }
    }

    pub fn inradius(&self) -> f64 {
        match self {
            Self::Box(a) => a.iter().copied().fold(f64::INFINITY, f64::min) / 2.0,
            Self::UnitSimplex(n) => 1.0 / (*n as f64 + (*n as f64).sqrt()),
        }
    }

    /// `#(tK ∩ Z^n)` by enumeration.
    pub fn lattice_count(&self, t: f64) -> u64 {
        let n = self.dimension();
        let top = match self {
            Self::Box(a) => a.iter().map(|s| (t * s).floor() as i64).collect::<Vec<_>>(),
            Self::UnitSimplex(_) => vec![t.floor() as i64; n],
        };
        let mut count = 0;
        let mut x = vec![0i64; n];
        loop {
            let inside = match self {
                Self::Box(_) => true,
                Self::UnitSimplex(_) => x.iter().sum::<i64>() as f64 <= t * (1.0 + 1e-12),
            };
            if inside {
                count += 1;
            }
            let mut i = 0;
            while i < n {
                x[i] += 1;
                if x[i] <= top[i] {
                    break;
                }
                x[i] = 0;
                i += 1;
            }
            if i == n {
                return count;
            }
        }
    }

    /// `V(K)(t − √n/2ϱ)^n`, or zero below the threshold.
    pub fn wills_bound(&self, t: f64) -> f64 {
        let s = t - self.wills_threshold();
        if s <= 0.0 {
            0.0
        } else {
            self.volume() * s.powi(self.dimension() as i32)
        }
    }

    pub fn wills_threshold(&self) -> f64 {
        (self.dimension() as f64).sqrt() / (2.0 * self.inradius())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WillsRow {
    pub t: f64,
    pub count: u64,
    pub bound: f64,
}

/// Exact counts and Wills bounds over `t_values`.
pub fn wills_check(shape: &WillsShape, t_values: &[f64]) -> Vec<WillsRow> {
    t_values
        .iter()
        .map(|&t| WillsRow {
            t,
            count: shape.lattice_count(t),
            bound: shape.wills_bound(t),
        })
        .collect()
}

/// The closed limit polytope `K̃^(p)_∞ ⊂ R^{kp−1}` for given factors.
pub fn limit_polytope(alpha_minus: &[f64], alpha_plus: &[f64], p: usize) -> HalfspacePolytope {
    let k = alpha_minus.len();
    let n = k * p - 1;
    let mut h = HalfspacePolytope::new(n);
    let ones = vec![1.0; n];
    let unit = |i: usize, c: f64| {
        let mut v = vec![0.0; n];
        v[i] = c;
        v
    };
    // x_n = 1 − ς enters through (−1, …, −1) plus the constant 1
    let last_as = |c: f64| ones.iter().map(|o| -o * c).collect::<Vec<f64>>();
    for j in 0..n {
        let (am, ap) = (alpha_minus[j % k], alpha_plus[j % k]);
        if j + 1 < n {
            let mut lo = unit(j, am);
            lo[j + 1] -= 1.0;
            h.push(lo, 0.0, false);
            let mut hi = unit(j + 1, 1.0);
            hi[j] -= ap;
            h.push(hi, 0.0, false);
        } else {
            // α⁻ x_j ≤ 1 − ς ≤ α⁺ x_j
            let mut lo = last_as(-1.0);
            lo[j] += am;
            h.push(lo, 1.0, false);
            let mut hi = last_as(1.0);
            hi[j] -= ap;
            h.push(hi, -1.0, false);
        }
    }
    let (am, ap) = (alpha_minus[n % k], alpha_plus[n % k]);
    // α⁻(1 − ς) ≤ x_0 ≤ α⁺(1 − ς)
    let mut lo = last_as(am);
    lo[0] -= 1.0;
    h.push(lo, -am, false);
    let mut hi = last_as(-ap);
    hi[0] += 1.0;
    h.push(hi, ap, false);
    for j in 0..n {
        h.push(unit(j, -1.0), 0.0, false);
    }
    h.push(ones.clone(), 1.0, false);
    h
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VolumeMethod {
    MonteCarlo { samples: usize, seed: u64 },
    Exact,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VolumeEstimate {
    pub volume: f64,
    /// 99% half-width for Monte Carlo, zero for the exact method.
    pub half_width: f64,
    /// `2^{kp} V`.
    pub c_star_optimal: f64,
}

pub const MAX_EXACT_DIM: usize = 4;
pub const MAX_MONTE_CARLO_DIM: usize = 7;

pub fn limit_polytope_volume(poly: &ChainPolytope, method: VolumeMethod) -> Result<VolumeEstimate, CountingError> {
    let am: Vec<f64> = poly.transitions.iter().map(|t| t.alpha_minus).collect();
    let ap: Vec<f64> = poly.transitions.iter().map(|t| t.alpha_plus).collect();
    let h = limit_polytope(&am, &ap, poly.p);
    let (volume, half_width) = polytope_volume(&h, method)?;
    Ok(VolumeEstimate {
        volume,
        half_width,
        c_star_optimal: 2f64.powi(poly.dimension() as i32) * volume,
    })
}

/// `q^{1−kp} G_q` at each `q`, the empirical approach to `V(K̃^(p)_∞)`.
pub fn scaled_counts(poly: &ChainPolytope, qs: &[i64]) -> Result<Vec<(i64, f64)>, CountingError> {
    let e = 1 - poly.dimension() as i32;
    qs.iter()
        .map(|&q| Ok((q, poly.count(q)?.to_f64().unwrap_or(f64::INFINITY) * (q as f64).powi(e))))
        .collect()
}

/// Removes the `O(1/q)` term from scaled counts at `q` and `2q`.
pub fn richardson(at_q: f64, at_2q: f64) -> f64 {
    2.0 * at_2q - at_q
}

/// Volume of a bounded polytope; Monte Carlo samples its vertex bounding box.
pub fn polytope_volume(h: &HalfspacePolytope, method: VolumeMethod) -> Result<(f64, f64), CountingError> {
    let dim = h.dimension;
    match method {
        VolumeMethod::Exact => {
            if dim > MAX_EXACT_DIM {
                return Err(CountingError::DimensionTooLarge { dim, max: MAX_EXACT_DIM });
            }
            let rows: Vec<(Vec<f64>, f64)> = h
                .inequalities
                .iter()
                .map(|r| (r.normal.clone(), r.offset))
                .collect();
            Ok((lasserre_volume(&rows, dim), 0.0))
        }
        VolumeMethod::MonteCarlo { samples, seed } => {
            if dim > MAX_MONTE_CARLO_DIM {
                return Err(CountingError::DimensionTooLarge {
                    dim,
                    max: MAX_MONTE_CARLO_DIM,
                });
            }
            let (lo, hi) = bounding_box(h);
            let side: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| b - a).collect();
            let box_volume: f64 = side.iter().product();
            if box_volume <= 0.0 {
                return Ok((0.0, 0.0));
            }
            let shards = 64usize;
            let per = samples.div_ceil(shards);
            let hits: usize = (0..shards)
                .into_par_iter()
                .map(|shard| {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (shard as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
                    let mut x = vec![0.0; dim];
                    let mut hits = 0;
                    for _ in 0..per {
                        for ((xi, a), w) in x.iter_mut().zip(&lo).zip(&side) {
                            *xi = a + w * rng.gen::<f64>();
                        }
                        if h.contains(&x) {
                            hits += 1;
                        }
                    }
                    hits
                })
                .sum();
            let n = (per * shards) as f64;
            let frac = hits as f64 / n;
            let half = 2.5758 * (frac * (1.0 - frac) / n).sqrt();
            Ok((frac * box_volume, half * box_volume))
        }
    }
}

/// Vertices of a bounded polytope: feasible solutions of every `d × d`
/// subsystem of tight rows.
pub fn vertices(h: &HalfspacePolytope) -> Vec<Vec<f64>> {
    let d = h.dimension;
    let m = h.inequalities.len();
    let mut out: Vec<Vec<f64>> = Vec::new();
    let mut pick: Vec<usize> = (0..d).collect();
    if m < d {
        return out;
    }
    loop {
        let a = nalgebra::DMatrix::from_fn(d, d, |r, c| h.inequalities[pick[r]].normal[c]);
        let b = nalgebra::DVector::from_fn(d, |r, _| h.inequalities[pick[r]].offset);
        if let Some(x) = a.lu().solve(&b) {
            let x: Vec<f64> = x.iter().copied().collect();
            let closed = h.inequalities.iter().all(|r| {
                let lhs: f64 = r.normal.iter().zip(&x).map(|(a, v)| a * v).sum();
                lhs <= r.offset + 1e-10
            });
            if x.iter().all(|v| v.is_finite()) && closed && !out.iter().any(|v| dist(v, &x) < 1e-10) {
                out.push(x);
            }
        }
        // next d-combination of 0..m
        let mut i = d;
        while i > 0 && pick[i - 1] == m - d + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return out;
        }
        pick[i - 1] += 1;
        for l in i..d {
            pick[l] = pick[l - 1] + 1;
        }
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Axis box spanned by the vertices, padded by a relative 1e−9.
fn bounding_box(h: &HalfspacePolytope) -> (Vec<f64>, Vec<f64>) {
    let d = h.dimension;
    let vs = vertices(h);
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for v in &vs {
        for i in 0..d {
            lo[i] = lo[i].min(v[i]);
            hi[i] = hi[i].max(v[i]);
        }
    }
    if vs.is_empty() {
        return (vec![0.0; d], vec![0.0; d]);
    }
    for i in 0..d {
        let pad = 1e-9 * (1.0 + hi[i] - lo[i]);
        lo[i] -= pad;
        hi[i] += pad;
    }
    (lo, hi)
}

/// Lasserre's recursion `V_d(P) = (1/d) Σ_i b_i/|a_ik| V_{d−1}(P_i)`, where `P_i`
/// is the facet `a_i·x = b_i` written in the coordinates other than `x_k`.
fn lasserre_volume(rows: &[(Vec<f64>, f64)], dim: usize) -> f64 {
    let rows = normalize_rows(rows);
    let Some(rows) = rows else { return 0.0 };
    if dim == 1 {
        let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
        for (a, b) in &rows {
            if a[0] > 0.0 {
                hi = hi.min(b / a[0]);
            } else {
                lo = lo.max(b / a[0]);
            }
        }
        return (hi - lo).max(0.0);
    }
    let mut total = 0.0;
    for (i, (a, b)) in rows.iter().enumerate() {
        if b.abs() < 1e-15 {
            continue;
        }
        let kk = (0..dim).max_by(|&x, &y| a[x].abs().total_cmp(&a[y].abs())).unwrap();
        let pivot = a[kk];
        let mut sub = Vec::with_capacity(rows.len() - 1);
        for (l, (c, e)) in rows.iter().enumerate() {
            if l == i {
                continue;
            }
            // substitute x_k = (b − Σ_{m≠k} a_m x_m)/a_k
            let f = c[kk] / pivot;
            let normal: Vec<f64> = (0..dim).filter(|&m| m != kk).map(|m| c[m] - f * a[m]).collect();
            sub.push((normal, e - f * b));
        }
        total += b / pivot.abs() * lasserre_volume(&sub, dim - 1);
    }
    total / dim as f64
}

/// Unit-normalizes rows, drops duplicates and trivial rows; `None` if some
/// trivial row is infeasible.
fn normalize_rows(rows: &[(Vec<f64>, f64)]) -> Option<Vec<(Vec<f64>, f64)>> {
    let mut out: Vec<(Vec<f64>, f64)> = Vec::with_capacity(rows.len());
    for (a, b) in rows {
        let norm = a.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < 1e-12 {
            if *b < -1e-12 {
                return None;
            }
            continue;
        }
        let a: Vec<f64> = a.iter().map(|v| v / norm).collect();
        let b = b / norm;
        let dup = out.iter_mut().find(|(c, _)| c.iter().zip(&a).all(|(x, y)| (x - y).abs() < 1e-12));
        match dup {
            Some((_, e)) => *e = e.min(b),
            None => out.push((a, b)),
        }
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cells::compute_chi;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn ellipse_chain(p: usize) -> ChainPolytope {
        let e = CircularPolygon::pseudo_ellipse(FRAC_PI_2, 1.0, 2.0).unwrap();
        ChainPolytope::new(&e, compute_chi(&e), p).unwrap()
    }

    #[test]
    fn polytope_rows_and_membership() {
        let c = ellipse_chain(1);
        assert_eq!(c.halfspaces().inequalities.len(), 12);
        let x = [20, 23, 20, 23];
        let h = c.halfspaces();
        let xf: Vec<f64> = x.iter().map(|&v| v as f64).collect();
        assert!(c.contains(&x).unwrap());
        assert!(h.contains(&xf));
        // (20, 23, 27, 31) breaks the second sandwich
        assert!(!c.contains(&[20, 23, 27, 31]).unwrap());
        assert!(!h.contains(&[20.0, 23.0, 27.0, 31.0]));
        assert!(!c.contains(&[1, 23, 20, 23]).unwrap());
        assert_eq!(ellipse_chain(2).halfspaces().inequalities.len(), 24);
    }

    #[test]
    fn dp_matches_brute_force_p1() {
        let c = ellipse_chain(1);
        let dp = c.count_up_to(120).unwrap();
        let brute = c.count_brute_up_to(120);
        for q in 0..=120 {
            assert_eq!(dp[q], BigUint::from(brute[q]), "q = {q}");
        }
        assert!(brute.iter().sum::<u64>() > 0);
        assert_eq!(dp[10], BigUint::zero());
    }

    #[test]
    fn dp_matches_brute_force_p2() {
        let c = ellipse_chain(2);
        let dp = c.count_up_to(150).unwrap();
        let brute = c.count_brute_up_to(150);
        for q in 0..=150 {
            assert_eq!(dp[q], BigUint::from(brute[q]), "q = {q}");
        }
        assert!(brute.iter().sum::<u64>() > 0);
    }

    #[test]
    fn support_is_contiguous_after_sparse_start() {
        let c = ellipse_chain(1);
        let dp = c.count_up_to(300).unwrap();
        let first = dp.iter().position(|g| !g.is_zero()).unwrap();
        assert_eq!(first, 62);
        // the smallest sums come one lattice point at a time, four apart
        assert!(dp[63..66].iter().all(Zero::is_zero) && !dp[66].is_zero());
        assert!(dp[70..].iter().all(|g| !g.is_zero()));
    }

    #[test]
    fn lambert_values() {
        assert_eq!(lambert_w0(0.0), 0.0);
        assert!((lambert_w0(std::f64::consts::E) - 1.0).abs() < 1e-15);
        assert!((lambert_w0(1.0) - 0.567_143_290_409_783_8).abs() < 1e-15);
        assert!((lambert_w0(-(-1f64).exp()) + 1.0).abs() < 1e-7);
        for i in 0..1000 {
            let x = i as f64;
            let w = lambert_w0(x);
            assert!((w * w.exp() - x).abs() <= 1e-12 * (1.0 + x), "x = {x}");
        }
    }

    #[test]
    fn constants_for_the_ellipse() {
        let c = BoundConstants::for_polytope(&ellipse_chain(1));
        assert!(c.a_star > 0.0 && c.a_star < 4.0);
        assert!(c.h_star < c.a_star / std::f64::consts::E);
        assert_eq!(c.b_star, 14.0);
        assert!(c.x_star > 0.0 && c.m_star > 0.0 && c.c_star_of_p > 0.0);
        let (best, step) = h_grid_argmax(c.a_star, c.b_star, 200);
        assert!((best - c.x_star).abs() <= step);
        assert!((h_of(c.a_star, c.b_star, c.x_star) - c.h_star).abs() < 1e-12);
    }

    #[test]
    fn polynomial_bound_holds() {
        let c = ellipse_chain(1);
        let rows = check_lower_bounds(&c, 1..=300).unwrap();
        assert!(rows.iter().any(|r| r.bound_a.is_some()));
        let k = BoundConstants::for_polytope(&c);
        let first = (k.b_star * 4.0 / k.a_star).floor() as i64 + 1;
        assert!(rows.iter().find(|r| r.q == first).unwrap().bound_a.is_some());
    }

    #[test]
    fn compositions() {
        assert_eq!(weak_compositions(2, 2, 2), BigUint::from(3u32));
        assert_eq!(weak_compositions(2, 2, 5), BigUint::zero());
        assert_eq!(weak_compositions(2, 2, -1), BigUint::zero());
        for n in 1..=6 {
            for m in 1..=6 {
                let g: Vec<u64> = (0..=(n * m) as i64)
                    .map(|q| weak_compositions(n, m, q).to_u64().unwrap())
                    .collect();
                let peak = n * m / 2;
                assert!(g[..=peak].windows(2).all(|w| w[0] <= w[1]));
                assert!(g[peak..].windows(2).all(|w| w[0] >= w[1]));
                assert!(g[peak] as f64 >= ((m + 1) as f64).powi(n as i32) / (n * m + 1) as f64);
                assert_eq!(g.iter().sum::<u64>(), ((m + 1) as u64).pow(n as u32));
            }
        }
    }

    #[test]
    fn inscribed_cube() {
        let c = ellipse_chain(1);
        let cube = cube_in_polytope(&c, 400).unwrap();
        assert!((cube.center.iter().sum::<f64>() - 400.0).abs() < 1e-9);
        assert_eq!(cube.count_escapes(&c, 100_000, 7), 0);
        assert!(matches!(cube_in_polytope(&c, 20), Err(CountingError::EmptyCube(_))));
    }

    #[test]
    fn wills_examples() {
        let square = WillsShape::Box(vec![1.0, 1.0]);
        assert_eq!(square.lattice_count(3.0), 16);
        assert!((square.wills_bound(3.0) - (3.0 - 2f64.sqrt()).powi(2)).abs() < 1e-12);
        assert_eq!(square.wills_bound(square.wills_threshold()), 0.0);
        let tri = WillsShape::UnitSimplex(2);
        assert_eq!(tri.lattice_count(4.0), 15);
        assert!(tri.wills_bound(4.0) <= 15.0);
    }

    #[test]
    fn exact_volumes_of_known_shapes() {
        let mut cube = HalfspacePolytope::new(3);
        for i in 0..3 {
            let mut a = vec![0.0; 3];
            a[i] = 1.0;
            cube.push(a.clone(), 0.5, false);
            a[i] = -1.0;
            cube.push(a, 0.0, false);
        }
        let (v, _) = polytope_volume(&cube, VolumeMethod::Exact).unwrap();
        assert!((v - 0.125).abs() < 1e-12);
        let mut simplex = HalfspacePolytope::new(3);
        for i in 0..3 {
            let mut a = vec![0.0; 3];
            a[i] = -1.0;
            simplex.push(a, 0.0, false);
        }
        simplex.push(vec![1.0; 3], 1.0, false);
        simplex.push(vec![1.0; 3], 2.0, false);
        let (v, _) = polytope_volume(&simplex, VolumeMethod::Exact).unwrap();
        assert!((v - 1.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn limit_volume_two_methods() {
        let c = ellipse_chain(1);
        let exact = limit_polytope_volume(&c, VolumeMethod::Exact).unwrap();
        let mc = limit_polytope_volume(&c, VolumeMethod::MonteCarlo { samples: 10_000_000, seed: 3 }).unwrap();
        assert!(exact.volume > 0.0);
        assert!((mc.volume - exact.volume).abs() <= 5e-3 * exact.volume);
        assert!((mc.volume - exact.volume).abs() <= mc.half_width * 1.5);
        assert!(matches!(
            limit_polytope_volume(&ellipse_chain(2), VolumeMethod::Exact),
            Err(CountingError::DimensionTooLarge { .. })
        ));
    }

    #[test]
    fn scaled_counts_approach_the_volume() {
        let c = ellipse_chain(1);
        let v = limit_polytope_volume(&c, VolumeMethod::Exact).unwrap().volume;
        let s = scaled_counts(&c, &[200, 400, 800]).unwrap();
        assert!(s[0].1 < s[1].1 && s[1].1 < s[2].1 && s[2].1 < v);
        assert!((richardson(s[1].1, s[2].1) / v - 1.0).abs() < 0.1);
        assert!((richardson(s[0].1, s[1].1) / v - 1.0).abs() > (richardson(s[1].1, s[2].1) / v - 1.0).abs());
    }

    #[test]
    fn vertices_of_a_square() {
        let mut sq = HalfspacePolytope::new(2);
        sq.push(vec![1.0, 0.0], 1.0, false);
        sq.push(vec![-1.0, 0.0], 0.0, false);
        sq.push(vec![0.0, 1.0], 1.0, false);
        sq.push(vec![0.0, -1.0], 0.0, false);
        sq.push(vec![1.0, 1.0], 5.0, false);
        assert_eq!(vertices(&sq).len(), 4);
    }

    #[test]
    fn degenerate_limit_volume_vanishes() {
        let mut prev = f64::INFINITY;
        for eps in [0.2, 0.1, 0.05, 0.01] {
            let am = vec![1.0 - eps; 4];
            let ap = vec![1.0 + eps; 4];
            let (v, _) = polytope_volume(&limit_polytope(&am, &ap, 1), VolumeMethod::Exact).unwrap();
            assert!(v < prev);
            prev = v;
        }
        assert!(prev < 1e-4);
    }

    #[test]
    fn counted_points_lie_in_limit_polytope() {
        let c = ellipse_chain(1);
        let am: Vec<f64> = c.transitions.iter().map(|t| t.alpha_minus).collect();
        let ap: Vec<f64> = c.transitions.iter().map(|t| t.alpha_plus).collect();
        let limit = limit_polytope(&am, &ap, 1);
        for x in c.enumerate_brute(110) {
            let q = x.iter().sum::<i64>() as f64;
            let proj: Vec<f64> = x[..3].iter().map(|&v| v as f64 / q).collect();
            assert!(limit.contains(&proj));
        }
    }

    proptest! {
        #[test]
        fn exact_and_float_membership_agree(x in proptest::collection::vec(2i64..80, 4)) {
            let c = ellipse_chain(1);
            let xf: Vec<f64> = x.iter().map(|&v| v as f64).collect();
            prop_assert_eq!(c.contains(&x).unwrap(), c.halfspaces().contains(&xf));
        }
    }
}
