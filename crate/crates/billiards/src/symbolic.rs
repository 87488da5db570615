//! Admissible symbols and words, the reachable sets `Ξ^i_j(n)`, the growth
//! constants that bound them, and word counting.
//!
//! A word is laid out as a chain of positions `P = i·k + j` (turn `i`, arc `j`);
//! consecutive positions are linked by transition `P mod k`. All sandwich
//! comparisons are strict and go through [`Transition`]'s exact predicates.

use std::collections::BTreeSet;

use num_bigint::BigUint;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cells::{compute_chi, CellsError, Transition};
use crate::polygon::CircularPolygon;

/// Largest `|i|` accepted by the `Ξ` queries.
pub const MAX_WINDOW: i64 = 64;
const TAU_TAIL: f64 = 1e-15;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SymbolicError {
    #[error("window |i| = {0} exceeds the configured maximum")]
    WindowTooLarge(i64),
    #[error("symbol has {got} entries, expected {expected}")]
    WrongLength { got: usize, expected: usize },
    #[error("start value {n} is below the floor {chi}")]
    BelowFloor { n: i64, chi: i64 },
    #[error("no admissible continuation reaches position ({i}, {j})")]
    EmptySet { i: i64, j: usize },
    #[error("index ({i}, {j}) is outside the word")]
    IndexOutOfRange { i: usize, j: usize },
    #[error("cap {cap} is below the first floor {chi}")]
    CapTooSmall { cap: i64, chi: i64 },
    #[error("target is unreachable from the given symbol")]
    Unreachable,
    #[error(transparent)]
    Cells(#[from] CellsError),
}

/// How the floors `χ_j` are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChiPolicy {
    /// Smallest floors keeping each transition inside the next arc.
    Geometric,
    /// Floors large enough for every estimate on `Ξ` to hold:
    /// gap-freeness forwards and backwards on every arc, and a first floor
    /// that dominates the growth constants.
    #[default]
    HypothesisX,
}

/// A per-turn symbol; signs select the lower or upper half quadrilateral.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Symbol(pub Vec<i64>);

impl Symbol {
    pub fn magnitude(&self) -> i64 {
        self.0.iter().map(|q| q.abs()).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WordKind {
    Finite,
    Periodic,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdmissibleWord {
    pub symbols: Vec<Symbol>,
    pub kind: WordKind,
}

impl AdmissibleWord {
    pub fn finite(symbols: Vec<Symbol>) -> Self {
        Self {
            symbols,
            kind: WordKind::Finite,
        }
    }

    pub fn periodic(symbols: Vec<Symbol>) -> Self {
        Self {
            symbols,
            kind: WordKind::Periodic,
        }
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    /// `s^i`: impacts during the first `i` turns.
    pub fn turn_sum(&self, i: usize) -> Result<i64, SymbolicError> {
        if i > self.symbols.len() {
            return Err(SymbolicError::IndexOutOfRange { i, j: 0 });
        }
        Ok(self.symbols[..i].iter().map(Symbol::magnitude).sum())
    }

    /// `s^i_j`: impacts before the visit to arc `j` on turn `i`.
    pub fn partial_sum(&self, i: usize, j: usize) -> Result<i64, SymbolicError> {
        let k = self.symbols.first().map_or(0, |s| s.0.len());
        if j > k || (j > 0 && i >= self.symbols.len()) {
            return Err(SymbolicError::IndexOutOfRange { i, j });
        }
        let head = self.turn_sum(i)?;
        if j == 0 {
            return Ok(head);
        }
        Ok(head + self.symbols[i].0[..j].iter().map(|q| q.abs()).sum::<i64>())
    }

    /// Entries flattened along the position chain.
    pub fn entries(&self) -> Vec<i64> {
        self.symbols.iter().flat_map(|s| s.0.iter().copied()).collect()
    }
}

/// Constants controlling the growth of `ξ^i_j(n)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SymbolicConstants {
    /// `α = Π α_j^+`.
    pub alpha: f64,
    pub nu: f64,
    pub lambda: f64,
    pub tau: f64,
    pub nu_prime: f64,
    pub lambda_prime: f64,
    /// `γ_j^-` per arc.
    pub gamma_minus: Vec<f64>,
    /// `γ_j^+` per arc.
    pub gamma_plus: Vec<f64>,
    /// `λ_j = Π_{l<j} α_l^+`.
    pub lambdas: Vec<f64>,
    /// Offsets with `λ_j n − γ_j ≤ ξ^0_j(n)`.
    pub gammas: Vec<f64>,
    /// Per-arc truncated products whose minimum is `τ`.
    pub taus: Vec<f64>,
}

/// The parts of the constants that do not depend on the floors.
struct GrowthTerms {
    alpha: f64,
    gamma_minus: Vec<f64>,
    gamma_plus: Vec<f64>,
    lambdas: Vec<f64>,
    gammas: Vec<f64>,
    nu: f64,
}

impl GrowthTerms {
    fn new(trs: &[Transition]) -> Self {
        let k = trs.len();
        let at = |j: i64| &trs[j.rem_euclid(k as i64) as usize];
        let cyclic = |j: usize, plus: bool| -> f64 {
            let mut total = 0.0;
            let mut prod = 1.0;
            for m in 1..=k as i64 {
                let t = at(j as i64 - m);
                let (a, b) = if plus {
                    (t.alpha_plus, t.beta_plus)
                } else {
                    (t.alpha_minus, t.beta_minus)
                };
                total += prod * (b + 1.0);
                prod *= a;
            }
            total
        };
        let gamma_minus = (0..k).map(|j| cyclic(j, false)).collect();
        let gamma_plus = (0..k).map(|j| cyclic(j, true)).collect();
        let mut lambdas = vec![1.0; k];
        let mut gammas = vec![0.0; k];
        for j in 1..k {
            lambdas[j] = lambdas[j - 1] * trs[j - 1].alpha_plus;
            gammas[j] = trs[j - 1].alpha_plus * gammas[j - 1] + trs[j - 1].beta_plus + 1.0;
        }
        let alpha = trs.iter().map(|t| t.alpha_plus).product();
        let nu = lambdas.iter().copied().fold(f64::INFINITY, f64::min) / 2.0;
        Self {
            alpha,
            gamma_minus,
            gamma_plus,
            lambdas,
            gammas,
            nu,
        }
    }

    /// Lower bound on `ξ^0_j(n)` for `n ≥ chi0`, or `None` when the bound is not
    /// yet positive and growing.
    fn tau_for(&self, j: usize, chi0: i64) -> Option<f64> {
        let g = self.gamma_plus[j];
        let mut x = self.lambdas[j] * chi0 as f64 - self.gammas[j];
        if x <= 0.0 || self.alpha * x - g <= x {
            return None;
        }
        let mut tau = 1.0;
        loop {
            let r = g / (self.alpha * x);
            tau *= 1.0 - r;
            if r < TAU_TAIL {
                return Some(tau);
            }
            x = self.alpha * x - g;
        }
    }
}

/// The alphabet `Q` of admissible symbols for a polygon.
#[derive(Debug, Clone, PartialEq)]
pub struct Alphabet {
    pub transitions: Vec<Transition>,
    pub chi: Vec<i64>,
}

impl Alphabet {
    pub fn new(poly: &CircularPolygon, policy: ChiPolicy) -> Result<Self, SymbolicError> {
        let transitions = Transition::all(poly);
        let geometric = compute_chi(poly);
        let chi = match policy {
            ChiPolicy::Geometric => geometric,
            ChiPolicy::HypothesisX => hypothesis_x_chi(&transitions, &geometric)?,
        };
        Ok(Self { transitions, chi })
    }

    pub fn with_chi(poly: &CircularPolygon, chi: Vec<i64>) -> Self {
        Self {
            transitions: Transition::all(poly),
            chi,
        }
    }

    pub fn k(&self) -> usize {
        self.transitions.len()
    }

    fn arc(&self, pos: i64) -> usize {
        pos.rem_euclid(self.k() as i64) as usize
    }

    /// Values allowed right after value `v` on arc `arc`, on arc `arc + 1`.
    pub fn successors(&self, arc: usize, v: i64) -> Result<Option<(i64, i64)>, SymbolicError> {
        let tr = &self.transitions[arc];
        let lo = tr.lower_min(v, true)?.max(self.chi[(arc + 1) % self.k()]);
        let hi = tr.upper_max(v, true)?;
        Ok((lo <= hi).then_some((lo, hi)))
    }

    /// Values on arc `arc − 1` (at least its floor) that may precede `x` on arc `arc`.
    pub fn predecessors(&self, arc: usize, x: i64) -> Result<Option<(i64, i64)>, SymbolicError> {
        let k = self.k();
        let from = (arc + k - 1) % k;
        let Some((lo, hi)) = self.transitions[from].predecessor_range(x, true)? else {
            return Ok(None);
        };
        let lo = lo.max(self.chi[from]);
        Ok((lo <= hi).then_some((lo, hi)))
    }

    fn forward(&self, arc: usize, (lo, hi): (i64, i64)) -> Result<Option<(i64, i64)>, SymbolicError> {
        let mut first = None;
        for v in lo..=hi {
            if let Some(r) = self.successors(arc, v)? {
                first = Some(r.0);
                break;
            }
        }
        let Some(a) = first else { return Ok(None) };
        for v in (lo..=hi).rev() {
            if let Some(r) = self.successors(arc, v)? {
                return Ok(Some((a, r.1)));
            }
        }
        Ok(None)
    }

    fn backward(&self, arc: usize, (lo, hi): (i64, i64)) -> Result<Option<(i64, i64)>, SymbolicError> {
        let mut first = None;
        for x in lo..=hi {
            if let Some(r) = self.predecessors(arc, x)? {
                first = Some(r.0);
                break;
            }
        }
        let Some(a) = first else { return Ok(None) };
        for x in (lo..=hi).rev() {
            if let Some(r) = self.predecessors(arc, x)? {
                return Ok(Some((a, r.1)));
            }
        }
        Ok(None)
    }

    /// `(ζ^i_j(n), ξ^i_j(n))`, the extreme values of `|q^i_j|` over admissible
    /// sequences with `|q^0_0| = n`.
    pub fn xi_bounds(&self, i: i64, j: usize, n: i64) -> Result<(i64, i64), SymbolicError> {
        if i.abs() > MAX_WINDOW {
            return Err(SymbolicError::WindowTooLarge(i));
        }
        if n < self.chi[0] {
            return Err(SymbolicError::BelowFloor { n, chi: self.chi[0] });
        }
        let target = i * self.k() as i64 + j as i64;
        let mut cur = (n, n);
        let mut pos = 0i64;
        let empty = SymbolicError::EmptySet { i, j };
        while pos < target {
            cur = self.forward(self.arc(pos), cur)?.ok_or(empty.clone())?;
            pos += 1;
        }
        while pos > target {
            cur = self.backward(self.arc(pos), cur)?.ok_or(empty.clone())?;
            pos -= 1;
        }
        Ok(cur)
    }

    /// `Ξ^i_j(n)` as an inclusive integer interval.
    pub fn xi_set(&self, i: i64, j: usize, n: i64) -> Result<std::ops::RangeInclusive<i64>, SymbolicError> {
        let (lo, hi) = self.xi_bounds(i, j, n)?;
        Ok(lo..=hi)
    }

    /// `Ξ^i_j(n)` by explicit set propagation, testing every candidate pair
    /// against the sandwich directly.
    pub fn xi_set_brute(&self, i: i64, j: usize, n: i64) -> Result<BTreeSet<i64>, SymbolicError> {
        let k = self.k();
        let target = i * k as i64 + j as i64;
        let mut cur: BTreeSet<i64> = [n].into();
        let mut pos = 0i64;
        while pos < target {
            let arc = self.arc(pos);
            let tr = &self.transitions[arc];
            let floor = self.chi[(arc + 1) % k];
            let mut next = BTreeSet::new();
            for &v in &cur {
                let top = (tr.alpha_plus * v as f64).ceil() as i64 + 2;
                for m in floor..=top {
                    if tr.sandwich(v, m, true)? {
                        next.insert(m);
                    }
                }
            }
            cur = next;
            pos += 1;
        }
        while pos > target {
            let from = self.arc(pos - 1);
            let tr = &self.transitions[from];
            let mut prev = BTreeSet::new();
            for &x in &cur {
                let top = ((x + 1) as f64 / tr.alpha_minus).ceil() as i64 + 2;
                for v in self.chi[from]..=top {
                    if tr.sandwich(v, x, true)? {
                        prev.insert(v);
                    }
                }
            }
            cur = prev;
            pos -= 1;
        }
        Ok(cur)
    }

    /// Strict sandwiches inside the symbol and the floors `|q_j| ≥ χ_j`.
    pub fn is_admissible_symbol(&self, q: &Symbol) -> Result<bool, SymbolicError> {
        let k = self.k();
        if q.0.len() != k {
            return Err(SymbolicError::WrongLength {
                got: q.0.len(),
                expected: k,
            });
        }
        for j in 0..k {
            if q.0[j].abs() < self.chi[j] {
                return Ok(false);
            }
        }
        for j in 0..k - 1 {
            if !self.transitions[j].sandwich(q.0[j].abs(), q.0[j + 1].abs(), true)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Whether `q` may be followed by `q'`.
    pub fn chains(&self, q: &Symbol, q_next: &Symbol) -> Result<bool, SymbolicError> {
        let k = self.k();
        Ok(self.transitions[k - 1].sandwich(q.0[k - 1].abs(), q_next.0[0].abs(), true)?)
    }

    pub fn is_admissible_word(&self, word: &AdmissibleWord) -> Result<bool, SymbolicError> {
        for q in &word.symbols {
            if !self.is_admissible_symbol(q)? {
                return Ok(false);
            }
        }
        for pair in word.symbols.windows(2) {
            if !self.chains(&pair[0], &pair[1])? {
                return Ok(false);
            }
        }
        if word.kind == WordKind::Periodic && !word.symbols.is_empty() {
            return self.chains(word.symbols.last().unwrap(), &word.symbols[0]);
        }
        Ok(true)
    }

    /// Values along positions `0..=steps` (arcs `start_arc + p`) leading from
    /// `start` to `target`, or `None` when `target` is not reachable.
    pub fn route(
        &self,
        start_arc: usize,
        start: i64,
        target: i64,
        steps: usize,
    ) -> Result<Option<Vec<i64>>, SymbolicError> {
        let Some(reach) = self.reach(start_arc, start, steps)? else {
            return Ok(None);
        };
        if !(reach[steps].0..=reach[steps].1).contains(&target) {
            return Ok(None);
        }
        let mut path = vec![0; steps + 1];
        path[steps] = target;
        for p in (0..steps).rev() {
            let arc = (start_arc + p + 1) % self.k();
            let Some((lo, hi)) = self.predecessors(arc, path[p + 1])? else {
                return Ok(None);
            };
            let (lo, hi) = (lo.max(reach[p].0), hi.min(reach[p].1));
            if lo > hi {
                return Ok(None);
            }
            path[p] = lo + (hi - lo) / 2;
        }
        Ok(Some(path))
    }

    /// Forward intervals reachable from `start` on arc `start_arc`.
    fn reach(&self, start_arc: usize, start: i64, steps: usize) -> Result<Option<Vec<(i64, i64)>>, SymbolicError> {
        let mut out = vec![(start, start)];
        for p in 0..steps {
            match self.forward((start_arc + p) % self.k(), out[p])? {
                Some(r) => out.push(r),
                None => return Ok(None),
            }
        }
        Ok(Some(out))
    }

    /// `(q⁻, q¹, …, qˡ, q⁺)` with the fewest intermediate symbols.
    pub fn connect_words(&self, q_minus: &Symbol, q_plus: &Symbol) -> Result<AdmissibleWord, SymbolicError> {
        let k = self.k();
        for q in [q_minus, q_plus] {
            if !self.is_admissible_symbol(q)? {
                return Err(SymbolicError::Unreachable);
            }
        }
        let start = q_minus.0[k - 1].abs();
        let target = q_plus.0[0].abs();
        let limit = 4 * (start.max(target) as usize + 16);
        for l in 0..limit {
            let Some(path) = self.route(k - 1, start, target, l * k + 1)? else {
                continue;
            };
            let mut symbols = vec![q_minus.clone()];
            symbols.extend(path[1..1 + l * k].chunks(k).map(|c| Symbol(c.to_vec())));
            symbols.push(q_plus.clone());
            let word = AdmissibleWord::finite(symbols);
            if self.is_admissible_word(&word)? {
                return Ok(word);
            }
        }
        Err(SymbolicError::Unreachable)
    }

    /// A symbol whose first entry is `first` and whose last entry lets the
    /// next turn start at `next_first`.
    pub fn symbol_between(&self, first: i64, next_first: i64) -> Result<Option<Symbol>, SymbolicError> {
        let k = self.k();
        Ok(self
            .route(0, first, next_first, k)?
            .map(|p| Symbol(p[..k].to_vec())))
    }

    /// `N` symbols with consecutive first entries, every ordered pair chaining.
    pub fn clique(&self, constants: &SymbolicConstants, size: usize) -> Result<Vec<Symbol>, SymbolicError> {
        let a = constants.alpha;
        let gm = constants.gamma_minus[0];
        let gp = constants.gamma_plus[0];
        let n = size as f64;
        let mut base = ((self.chi[0] as f64 - gm) * a)
            .max((n + gp) / (a - 1.0))
            .max((n + gm) / (1.0 - 1.0 / a))
            .max(self.chi[0] as f64)
            .ceil() as i64;
        for _ in 0..40 {
            let mid = base + (size as i64 - 1) / 2;
            let mut symbols = Vec::with_capacity(size);
            for m in 0..size as i64 {
                match self.symbol_between(base + m, mid)? {
                    Some(s) => symbols.push(s),
                    None => break,
                }
            }
            if symbols.len() == size && self.all_chain(&symbols)? {
                return Ok(symbols);
            }
            base += base / 2 + 1;
        }
        Err(SymbolicError::Unreachable)
    }

    fn all_chain(&self, symbols: &[Symbol]) -> Result<bool, SymbolicError> {
        for p in symbols {
            for q in symbols {
                if !self.chains(p, q)? {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }

    /// Number of admissible words of `turns` symbols (counted by magnitudes)
    /// whose first entries are at most `cap`, and `log(count)/turns`.
    pub fn count_words(&self, turns: usize, cap: i64) -> Result<(BigUint, f64), SymbolicError> {
        if cap < self.chi[0] {
            return Err(SymbolicError::CapTooSmall { cap, chi: self.chi[0] });
        }
        let k = self.k();
        let mut counts: Vec<BigUint> = vec![BigUint::zero(); cap as usize + 1];
        for c in counts.iter_mut().skip(self.chi[0] as usize) {
            *c = BigUint::from(1u32);
        }
        for pos in 0..turns * k - 1 {
            let arc = pos % k;
            let mut top = 0i64;
            let mut ranges = Vec::with_capacity(counts.len());
            for (v, c) in counts.iter().enumerate() {
                if c.is_zero() {
                    continue;
                }
                if let Some((lo, hi)) = self.successors(arc, v as i64)? {
                    let hi = if arc == k - 1 { hi.min(cap) } else { hi };
                    if lo <= hi {
                        ranges.push((lo as usize, hi as usize, v));
                        top = top.max(hi);
                    }
                }
            }
            let mut adds = vec![BigUint::zero(); top as usize + 2];
            let mut subs = vec![BigUint::zero(); top as usize + 2];
            for &(lo, hi, v) in &ranges {
                adds[lo] += &counts[v];
                subs[hi + 1] += &counts[v];
            }
            let mut next = vec![BigUint::zero(); top as usize + 1];
            let mut running = BigUint::zero();
            for (x, slot) in next.iter_mut().enumerate() {
                running += &adds[x];
                running -= &subs[x];
                *slot = running.clone();
            }
            counts = next;
        }
        let total: BigUint = counts.iter().sum();
        let rate = ln_big(&total) / turns as f64;
        Ok((total, rate))
    }

    /// Words of `turns` symbols drawn from `symbols`, with chaining checked pairwise.
    pub fn count_restricted_words(&self, symbols: &[Symbol], turns: usize) -> Result<(BigUint, f64), SymbolicError> {
        let m = symbols.len();
        let mut adj = vec![vec![false; m]; m];
        for a in 0..m {
            for b in 0..m {
                adj[a][b] = self.chains(&symbols[a], &symbols[b])?;
            }
        }
        let mut counts = vec![BigUint::from(1u32); m];
        for _ in 1..turns {
            let mut next = vec![BigUint::zero(); m];
            for a in 0..m {
                for b in 0..m {
                    if adj[a][b] {
                        next[b] += &counts[a];
                    }
                }
            }
            counts = next;
        }
        let total: BigUint = counts.iter().sum();
        Ok((total.clone(), ln_big(&total) / turns as f64))
    }
}

impl SymbolicConstants {
    pub fn new(alphabet: &Alphabet) -> Self {
        let g = GrowthTerms::new(&alphabet.transitions);
        let k = alphabet.k();
        let taus: Vec<f64> = (0..k)
            .map(|j| g.tau_for(j, alphabet.chi[0]).unwrap_or(0.0))
            .collect();
        let tau = taus.iter().copied().fold(f64::INFINITY, f64::min);
        let lambda = g.lambdas.iter().copied().fold(0.0, f64::max);
        let (alpha, nu) = (g.alpha, g.nu);
        let kf = k as f64;
        Self {
            alpha,
            nu,
            lambda,
            tau,
            nu_prime: kf * tau * nu / (lambda * alpha),
            lambda_prime: kf * lambda * alpha / (tau * nu * (alpha - 1.0)),
            gamma_minus: g.gamma_minus,
            gamma_plus: g.gamma_plus,
            lambdas: g.lambdas,
            gammas: g.gammas,
            taus,
        }
    }
}

fn hypothesis_x_chi(trs: &[Transition], geometric: &[i64]) -> Result<Vec<i64>, SymbolicError> {
    let k = trs.len();
    let gap_free = |t: &Transition| {
        let w = t.alpha_plus - t.alpha_minus;
        let fwd = (t.alpha_minus + t.beta_minus + t.beta_plus) / w;
        let bwd = ((1.0 + t.beta_plus) * t.alpha_minus + t.beta_minus * t.alpha_plus) / w;
        (fwd, bwd)
    };
    let mut chi = geometric.to_vec();
    for j in 0..k {
        let (fwd, _) = gap_free(&trs[j]);
        let (_, bwd) = gap_free(&trs[(j + k - 1) % k]);
        chi[j] = chi[j].max(fwd.floor() as i64 + 1).max(bwd.floor() as i64 + 1);
    }
    let g = GrowthTerms::new(trs);
    let a = g.alpha;
    let mut bound = chi[0] as f64;
    for j in 0..k {
        if j > 0 {
            bound = bound.max(g.gammas[j] / (g.lambdas[j] - g.nu));
        }
        // any κ in (1, α) will do, so strictly above γ⁺/(α − 1) suffices
        bound = bound.max((g.gamma_plus[j] / (a - 1.0)).floor() + 1.0);
    }
    bound = bound
        .max((1.0 + g.gamma_plus[0]) / (a - 1.0))
        .max((1.0 + g.gamma_minus[0]) / (1.0 - 1.0 / a));
    let mut c = bound.ceil() as i64;
    let probe = Alphabet {
        transitions: trs.to_vec(),
        chi: chi.clone(),
    };
    loop {
        let tau_ok = (0..k).all(|j| g.tau_for(j, c).is_some());
        if tau_ok && unclipped(&probe, c)? {
            chi[0] = c;
            return Ok(chi);
        }
        c += 1;
    }
}

/// The forward minimum chain from `n` on arc 0 stays above every floor.
fn unclipped(alphabet: &Alphabet, n: i64) -> Result<bool, SymbolicError> {
    let mut z = n;
    for j in 0..alphabet.k() - 1 {
        z = alphabet.transitions[j].lower_min(z, true)?;
        if z < alphabet.chi[j + 1] {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Natural logarithm of a big integer (`-inf` for zero).
pub fn ln_big(x: &BigUint) -> f64 {
    let bits = x.bits();
    if bits <= 1000 {
        return x.to_f64().unwrap_or(f64::INFINITY).ln();
    }
    let shift = bits - 64;
    let top = (x >> shift).to_f64().unwrap();
    top.ln() + shift as f64 * std::f64::consts::LN_2
}
