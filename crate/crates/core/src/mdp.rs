//! Finite discounted MDPs, policies, and closed-form oracles.
//!
//! Everything here is exact (dense direct solves): state values, Q tables,
//! optimal policies, discounted visitation distributions, stationary
//! distributions, and total-variation mixing diagnostics. The oracles back
//! both the algorithms (through opt-in diagnostics) and the test suite.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::linalg;

/// Row-sum / simplex slack tolerated at construction.
pub const SIMPLEX_TOL: f64 = 1e-12;
/// Probabilities below this are clipped before logarithms.
pub const INTERIOR_CLIP: f64 = 1e-12;
/// Edges with probability above this count for connectivity.
const EDGE_TOL: f64 = 1e-14;

/// A finite discounted MDP: transition kernel `P(s'|s,a)`, cost table
/// `c(s,a)` in `[0,1]`, and discount `gamma` in `[0,1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    gamma: f64,
    /// Row-major `(s, a, s')`.
    transition: Vec<f64>,
    /// Row-major `(s, a)`.
    cost: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct MdpDocument {
    n_states: usize,
    n_actions: usize,
    gamma: f64,
    transition: Vec<Vec<Vec<f64>>>,
    cost: Vec<Vec<f64>>,
}

impl TabularMdp {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        gamma: f64,
        transition: Vec<f64>,
        cost: Vec<f64>,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(CoreError::InvalidInput("state/action counts must be positive".into()));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(CoreError::InvalidInput(format!("gamma {gamma} outside [0,1)")));
        }
        if transition.len() != n_states * n_actions * n_states {
            return Err(CoreError::InvalidInput("transition table has wrong shape".into()));
        }
        if cost.len() != n_states * n_actions {
            return Err(CoreError::InvalidInput("cost table has wrong shape".into()));
        }
        for &c in &cost {
            if !(0.0..=1.0).contains(&c) {
                return Err(CoreError::InvalidInput(format!("cost {c} outside [0,1]")));
            }
        }
        for s in 0..n_states {
            for a in 0..n_actions {
                let row = &transition[(s * n_actions + a) * n_states..][..n_states];
                let mut sum = 0.0;
                for &p in row {
                    if p < 0.0 {
                        return Err(CoreError::InvalidInput(format!(
                            "negative transition probability at ({s},{a})"
                        )));
                    }
                    sum += p;
                }
                if (sum - 1.0).abs() > SIMPLEX_TOL {
                    return Err(CoreError::InvalidInput(format!(
                        "transition row ({s},{a}) sums to {sum}"
                    )));
                }
            }
        }
        Ok(Self { n_states, n_actions, gamma, transition, cost })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    /// `|Z| = |S| * |A|`.
    pub fn n_pairs(&self) -> usize {
        self.n_states * self.n_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Upper bound `1/(1-gamma)` on any value produced from costs in `[0,1]`.
    pub fn q_max(&self) -> f64 {
        1.0 / (1.0 - self.gamma)
    }

    pub fn cost(&self, s: usize, a: usize) -> f64 {
        self.cost[s * self.n_actions + a]
    }

    /// The row `P(.|s,a)`.
    pub fn transition_row(&self, s: usize, a: usize) -> &[f64] {
        &self.transition[(s * self.n_actions + a) * self.n_states..][..self.n_states]
    }

    /// Policy-averaged state kernel `P_pi(s,s') = sum_a pi(a|s) P(s'|s,a)`.
    pub fn policy_kernel(&self, pi: &Policy) -> DMatrix<f64> {
        let n = self.n_states;
        let mut m = DMatrix::zeros(n, n);
        for s in 0..n {
            for a in 0..self.n_actions {
                let w = pi.prob(s, a);
                if w == 0.0 {
                    continue;
                }
                let row = self.transition_row(s, a);
                for s2 in 0..n {
                    m[(s, s2)] += w * row[s2];
                }
            }
        }
        m
    }

    /// Policy-averaged regularized cost `sum_a pi(a|s) c(s,a) + h(pi(.|s))`.
    pub fn policy_cost(&self, pi: &Policy, h: &Regularizer) -> Vec<f64> {
        (0..self.n_states)
            .map(|s| {
                let mut c = 0.0;
                for a in 0..self.n_actions {
                    c += pi.prob(s, a) * self.cost(s, a);
                }
                c + h.eval(pi.row(s))
            })
            .collect()
    }

    /// Serialize to the canonical JSON document, bit-faithful for finite
    /// doubles.
    pub fn to_json(&self) -> String {
        let doc = MdpDocument {
            n_states: self.n_states,
            n_actions: self.n_actions,
            gamma: self.gamma,
            transition: (0..self.n_states)
                .map(|s| {
                    (0..self.n_actions).map(|a| self.transition_row(s, a).to_vec()).collect()
                })
                .collect(),
            cost: (0..self.n_states)
                .map(|s| (0..self.n_actions).map(|a| self.cost(s, a)).collect())
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("MDP serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: MdpDocument = serde_json::from_str(text)
            .map_err(|e| CoreError::InvalidInput(format!("bad MDP document: {e}")))?;
        let mut transition = Vec::with_capacity(doc.n_states * doc.n_actions * doc.n_states);
        for s in doc.transition {
            for a in s {
                transition.extend(a);
            }
        }
        let cost = doc.cost.into_iter().flatten().collect();
        Self::new(doc.n_states, doc.n_actions, doc.gamma, transition, cost)
    }
}

/// A row-stochastic table `pi(a|s)`: the optimization variable.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    n_states: usize,
    n_actions: usize,
    probs: Vec<f64>,
}

impl Policy {
    pub fn new(n_states: usize, n_actions: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != n_states * n_actions {
            return Err(CoreError::InvalidInput("policy table has wrong shape".into()));
        }
        for s in 0..n_states {
            let row = &probs[s * n_actions..(s + 1) * n_actions];
            let mut sum = 0.0;
            for &p in row {
                if p < -SIMPLEX_TOL {
                    return Err(CoreError::InvalidInput(format!("negative probability at state {s}")));
                }
                sum += p;
            }
            if (sum - 1.0).abs() > SIMPLEX_TOL {
                return Err(CoreError::InvalidInput(format!("policy row {s} sums to {sum}")));
            }
        }
        Ok(Self { n_states, n_actions, probs })
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Self {
            n_states,
            n_actions,
            probs: vec![1.0 / n_actions as f64; n_states * n_actions],
        }
    }

    /// Point mass on `actions[s]` at every state.
    pub fn deterministic(n_states: usize, n_actions: usize, actions: &[usize]) -> Result<Self> {
        if actions.len() != n_states {
            return Err(CoreError::InvalidInput("one action per state required".into()));
        }
        let mut probs = vec![0.0; n_states * n_actions];
        for (s, &a) in actions.iter().enumerate() {
            if a >= n_actions {
                return Err(CoreError::InvalidInput(format!("action {a} out of range")));
            }
            probs[s * n_actions + a] = 1.0;
        }
        Ok(Self { n_states, n_actions, probs })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s * self.n_actions + a]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.probs.chunks(self.n_actions)
    }

    /// Rebuild from per-state rows (used by per-state proximal sweeps).
    pub fn from_rows(n_states: usize, n_actions: usize, rows: Vec<Vec<f64>>) -> Result<Self> {
        let mut probs = Vec::with_capacity(n_states * n_actions);
        for r in rows {
            probs.extend(r);
        }
        Self::new(n_states, n_actions, probs)
    }

    /// If the policy is deterministic, the chosen action per state.
    pub fn as_deterministic(&self) -> Option<Vec<usize>> {
        let mut actions = Vec::with_capacity(self.n_states);
        for s in 0..self.n_states {
            let row = self.row(s);
            let mut arg = None;
            for (a, &p) in row.iter().enumerate() {
                if p > 1.0 - SIMPLEX_TOL {
                    arg = Some(a);
                }
            }
            actions.push(arg?);
        }
        Some(actions)
    }
}

/// Convex per-state regularizer added to the cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Regularizer {
    /// No regularization.
    None,
    /// Negative entropy with temperature `tau`, shifted by `tau ln|A|` so
    /// the value is nonnegative on the simplex.
    Entropy { tau: f64 },
}

impl Regularizer {
    /// Strong-convexity modulus with respect to the l1 norm.
    pub fn mu_h(&self) -> f64 {
        match self {
            Regularizer::None => 0.0,
            Regularizer::Entropy { tau } => *tau,
        }
    }

    /// Bound on subgradient norms after interior clipping, used by stepsize
    /// formulas.
    pub fn subgrad_bound(&self) -> f64 {
        match self {
            Regularizer::None => 0.0,
            Regularizer::Entropy { tau } => tau * (1.0 + (1.0 / INTERIOR_CLIP).ln()),
        }
    }

    /// Evaluate at an action distribution.
    pub fn eval(&self, p: &[f64]) -> f64 {
        match self {
            Regularizer::None => 0.0,
            Regularizer::Entropy { tau } => {
                let mut h = (p.len() as f64).ln();
                for &x in p {
                    if x > 0.0 {
                        let x = x.max(INTERIOR_CLIP);
                        h += x * x.ln();
                    }
                }
                tau * h
            }
        }
    }

    /// Subgradient coordinate at probability `x` (clipped).
    pub fn subgrad(&self, x: f64) -> f64 {
        match self {
            Regularizer::None => 0.0,
            Regularizer::Entropy { tau } => tau * (1.0 + x.max(INTERIOR_CLIP).ln()),
        }
    }
}

/// Per-state values `V(s)`.
pub type ValueFunction = Vec<f64>;

/// A per-pair table `Q(s,a)` stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct QFunction {
    pub n_states: usize,
    pub n_actions: usize,
    pub values: Vec<f64>,
}

impl QFunction {
    pub fn zeros(n_states: usize, n_actions: usize) -> Self {
        Self { n_states, n_actions, values: vec![0.0; n_states * n_actions] }
    }

    pub fn from_values(n_states: usize, n_actions: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), n_states * n_actions);
        Self { n_states, n_actions, values }
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.n_actions + a]
    }

    pub fn set(&mut self, s: usize, a: usize, v: f64) {
        self.values[s * self.n_actions + a] = v;
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn linf_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `<Q(s,.), pi(.|s)>` for every state.
    pub fn value_under(&self, pi: &Policy) -> ValueFunction {
        (0..self.n_states)
            .map(|s| self.row(s).iter().zip(pi.row(s)).map(|(q, p)| q * p).sum())
            .collect()
    }
}

/// Total-variation mixing diagnostics of an induced chain.
#[derive(Debug, Clone)]
pub struct MixingProfile {
    /// Unique stationary distribution.
    pub stationary: Vec<f64>,
    /// Envelope constant `C` with `d(t) <= C rho^t` at every probed `t`.
    pub c: f64,
    /// Geometric envelope rate.
    pub rho: f64,
    /// False when the distance to stationarity does not decay (periodic
    /// chains).
    pub is_geometric: bool,
    /// `d(t) = sup_s ||P^t(s,.) - nu||_tv` for `t = 0..=horizon`.
    pub tv_curve: Vec<f64>,
}

impl MixingProfile {
    pub fn min_stationary(&self) -> f64 {
        self.stationary.iter().cloned().fold(f64::MAX, f64::min)
    }

    /// Copy with the rate raised to at least 1/2, still a valid (looser)
    /// envelope; the structural bounds below assume rates in `[1/2, 1)`.
    pub fn with_rate_floor(&self) -> Self {
        let mut p = self.clone();
        p.rho = p.rho.max(0.5);
        p
    }
}

/// Outputs of the structural mixing bounds for perturbed policies.
#[derive(Debug, Clone, Copy)]
pub struct MixingBounds {
    /// Window length `ceil(log2(4/nu_min) / log2(1/rho))`.
    pub b_bar: u32,
    /// Upper bound on the perturbed chain's envelope rate.
    pub rho_bound: f64,
    /// Lower bound on the perturbed chain's stationary probabilities.
    pub nu_floor: f64,
}

/// Exact state values: solves `(I - gamma P_pi) V = c_pi + h_pi` densely.
pub fn exact_value(mdp: &TabularMdp, pi: &Policy, h: &Regularizer) -> Result<ValueFunction> {
    let n = mdp.n_states();
    let p = mdp.policy_kernel(pi);
    let a = DMatrix::identity(n, n) - mdp.gamma() * p;
    let b = DVector::from_vec(mdp.policy_cost(pi, h));
    let v = linalg::solve_checked(&a, &b, 1e-10)?;
    Ok(v.iter().cloned().collect())
}

/// Exact Q table: `Q(s,a) = c(s,a) + h(pi(.|s)) + gamma <P(.|s,a), V>`.
pub fn exact_q(mdp: &TabularMdp, pi: &Policy, h: &Regularizer) -> Result<QFunction> {
    let v = exact_value(mdp, pi, h)?;
    let mut q = QFunction::zeros(mdp.n_states(), mdp.n_actions());
    for s in 0..mdp.n_states() {
        let hs = h.eval(pi.row(s));
        for a in 0..mdp.n_actions() {
            let row = mdp.transition_row(s, a);
            let lookahead: f64 = row.iter().zip(&v).map(|(p, v)| p * v).sum();
            q.set(s, a, mdp.cost(s, a) + hs + mdp.gamma() * lookahead);
        }
    }
    Ok(q)
}

/// Value iteration to sup-norm tolerance 1e-10, then the greedy
/// deterministic policy (ties toward the lowest action index) and its exact
/// value.
pub fn solve_optimal(mdp: &TabularMdp, h: &Regularizer) -> Result<(Policy, ValueFunction)> {
    if !matches!(h, Regularizer::None) {
        return Err(CoreError::InvalidInput(
            "optimal-policy oracle supports only the unregularized objective".into(),
        ));
    }
    let n = mdp.n_states();
    let na = mdp.n_actions();
    let mut v = vec![0.0; n];
    let max_iter = 10_000_000usize;
    let tol = 1e-10 * (1.0 - mdp.gamma()).max(1e-6);
    for _ in 0..max_iter {
        let mut delta: f64 = 0.0;
        let mut next = vec![0.0; n];
        for s in 0..n {
            let mut best = f64::MAX;
            for a in 0..na {
                let row = mdp.transition_row(s, a);
                let q: f64 =
                    mdp.cost(s, a) + mdp.gamma() * row.iter().zip(&v).map(|(p, v)| p * v).sum::<f64>();
                if q < best {
                    best = q;
                }
            }
            delta = delta.max((best - v[s]).abs());
            next[s] = best;
        }
        v = next;
        if delta <= tol {
            break;
        }
    }
    let mut actions = vec![0usize; n];
    for s in 0..n {
        let mut best = f64::MAX;
        let mut arg = 0usize;
        for a in 0..na {
            let row = mdp.transition_row(s, a);
            let q: f64 =
                mdp.cost(s, a) + mdp.gamma() * row.iter().zip(&v).map(|(p, v)| p * v).sum::<f64>();
            if q < best - 0.0 {
                best = q;
                arg = a;
            }
        }
        actions[s] = arg;
    }
    let pi = Policy::deterministic(n, na, &actions)?;
    let v_star = exact_value(mdp, &pi, h)?;
    Ok((pi, v_star))
}

/// Advantage of playing distribution `p` at state `s` against `pi`:
/// `<Q(s,.), p> - V(s) + h(p) - h(pi(.|s))`.
pub fn advantage(
    mdp: &TabularMdp,
    pi: &Policy,
    h: &Regularizer,
    s: usize,
    p: &[f64],
) -> Result<f64> {
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > 1e-9 || p.iter().any(|&x| x < -SIMPLEX_TOL) {
        return Err(CoreError::InvalidInput("action distribution is not on the simplex".into()));
    }
    let q = exact_q(mdp, pi, h)?;
    let v = q.value_under(pi);
    Ok(advantage_from(&q, &v, h, pi, s, p))
}

/// Advantage from precomputed `Q`/`V`, avoiding repeated solves.
pub fn advantage_from(
    q: &QFunction,
    v: &ValueFunction,
    h: &Regularizer,
    pi: &Policy,
    s: usize,
    p: &[f64],
) -> f64 {
    let dot: f64 = q.row(s).iter().zip(p).map(|(q, p)| q * p).sum();
    dot - v[s] + h.eval(p) - h.eval(pi.row(s))
}

/// Discounted state visitation distribution started at `q`:
/// `(1-gamma) * (row q of (I - gamma P_pi)^{-1})`.
pub fn discounted_visitation(mdp: &TabularMdp, pi: &Policy, q: usize) -> Result<Vec<f64>> {
    let n = mdp.n_states();
    if q >= n {
        return Err(CoreError::InvalidInput(format!("state {q} out of range")));
    }
    let p = mdp.policy_kernel(pi);
    let a = (DMatrix::identity(n, n) - mdp.gamma() * p).transpose();
    let mut e = DVector::zeros(n);
    e[q] = 1.0 - mdp.gamma();
    let x = linalg::solve_checked(&a, &e, 1e-10)?;
    Ok(x.iter().map(|&v| if v < 0.0 { 0.0 } else { v }).collect())
}

/// Mixture `(1-f) kappa_{s_or} + f * mean_q kappa_q` used as the flexible
/// weighting origin.
pub fn mixed_visitation(mdp: &TabularMdp, pi: &Policy, s_or: usize, f: f64) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&f) {
        return Err(CoreError::InvalidInput(format!("frequency {f} outside [0,1]")));
    }
    let n = mdp.n_states();
    let base = discounted_visitation(mdp, pi, s_or)?;
    if f == 0.0 {
        return Ok(base);
    }
    let mut mean = vec![0.0; n];
    for q in 0..n {
        let k = discounted_visitation(mdp, pi, q)?;
        for s in 0..n {
            mean[s] += k[s] / n as f64;
        }
    }
    Ok((0..n).map(|s| (1.0 - f) * base[s] + f * mean[s]).collect())
}

/// Stationary distribution of the induced chain, or `NotIrreducible` when
/// the support graph of `P_pi` is not strongly connected.
pub fn stationary_distribution(mdp: &TabularMdp, pi: &Policy) -> Result<Vec<f64>> {
    let n = mdp.n_states();
    let p = mdp.policy_kernel(pi);
    if !strongly_connected(&p) {
        return Err(CoreError::NotIrreducible);
    }
    // nu P = nu, sum nu = 1: replace the last balance equation with the
    // normalization.
    let mut a = p.transpose() - DMatrix::identity(n, n);
    for s in 0..n {
        a[(n - 1, s)] = 1.0;
    }
    let mut b = DVector::zeros(n);
    b[n - 1] = 1.0;
    let x = linalg::solve_checked(&a, &b, 1e-8)?;
    let nu: Vec<f64> = x.iter().map(|&v| if v < 0.0 { 0.0 } else { v }).collect();
    let resid = {
        let nu_v = DVector::from_vec(nu.clone());
        (p.transpose() * &nu_v - &nu_v).amax()
    };
    if resid > 1e-9 {
        return Err(CoreError::SingularSystem(format!("stationarity residual {resid:.3e}")));
    }
    Ok(nu)
}

fn strongly_connected(p: &DMatrix<f64>) -> bool {
    let n = p.nrows();
    let forward = |s: usize| (0..n).filter(move |&t| p[(s, t)] > EDGE_TOL);
    let backward = |s: usize| (0..n).filter(move |&t| p[(t, s)] > EDGE_TOL);
    reaches_all(n, forward) && reaches_all(n, backward)
}

fn reaches_all<I, F>(n: usize, neighbors: F) -> bool
where
    I: Iterator<Item = usize>,
    F: Fn(usize) -> I,
{
    let mut seen = vec![false; n];
    let mut stack = vec![0usize];
    seen[0] = true;
    let mut count = 1;
    while let Some(s) = stack.pop() {
        for t in neighbors(s) {
            if !seen[t] {
                seen[t] = true;
                count += 1;
                stack.push(t);
            }
        }
    }
    count == n
}

/// Probe `d(t) = sup_s ||P_pi^t(s,.) - nu||_tv` up to `horizon` and fit a
/// geometric envelope.
///
/// The rate comes from the tail slope of `d(t)` (exact for genuinely
/// geometric decay); the constant is the tightest `C` making the envelope
/// hold at every probed `t`. When that `C` exceeds 2 the fit falls back to
/// the minimal rate subject to `C = 2`, and keeps the free-`C` slope fit
/// only if no rate below 1 works.
pub fn mixing_profile(mdp: &TabularMdp, pi: &Policy, horizon: usize) -> Result<MixingProfile> {
    if horizon == 0 {
        return Err(CoreError::InvalidInput("horizon must be at least 1".into()));
    }
    let nu = stationary_distribution(mdp, pi)?;
    let n = mdp.n_states();
    let p = mdp.policy_kernel(pi);
    let mut pow = DMatrix::<f64>::identity(n, n);
    let mut tv_curve = Vec::with_capacity(horizon + 1);
    for _ in 0..=horizon {
        let mut worst: f64 = 0.0;
        for s in 0..n {
            let mut tv = 0.0;
            for s2 in 0..n {
                tv += (pow[(s, s2)] - nu[s2]).abs();
            }
            worst = worst.max(0.5 * tv);
        }
        tv_curve.push(worst);
        pow *= &p;
    }

    let d = &tv_curve;
    let is_geometric = d[horizon] <= f64::max(1e-12, 0.5 * d[1]);
    if d[1] <= 1e-15 {
        // mixes in one step
        return Ok(MixingProfile {
            stationary: nu,
            c: d[0].max(1e-16),
            rho: 1e-16,
            is_geometric: true,
            tv_curve,
        });
    }
    if !is_geometric {
        return Ok(MixingProfile {
            stationary: nu,
            c: d.iter().cloned().fold(0.0, f64::max),
            rho: 1.0,
            is_geometric: false,
            tv_curve,
        });
    }

    // last index with numerically meaningful mass
    let last = (1..=horizon).rev().find(|&t| d[t] > 1e-280).unwrap_or(1);
    let t_lo = (last / 2).max(1);
    let rho_slope = if last > t_lo && d[t_lo] > 0.0 {
        ((d[last].ln() - d[t_lo].ln()) / (last - t_lo) as f64).exp()
    } else {
        (d[last].max(1e-280).ln() / last as f64).exp()
    };
    let rho_slope = rho_slope.clamp(1e-16, 1.0 - 1e-12);
    let envelope_c = |rho: f64| -> f64 {
        let lr = rho.ln();
        (0..=last)
            .filter(|&t| d[t] > 0.0)
            .map(|t| (d[t].ln() - t as f64 * lr).exp())
            .fold(0.0, f64::max)
    };
    let c_slope = envelope_c(rho_slope).max(d[0]);
    let (c, rho) = if c_slope <= 2.0 {
        (c_slope, rho_slope)
    } else {
        let rho_c2 = (1..=last)
            .filter(|&t| d[t] > 0.0)
            .map(|t| ((d[t] / 2.0).ln() / t as f64).exp())
            .fold(0.0, f64::max);
        if rho_c2 < 1.0 {
            (2.0, rho_c2)
        } else {
            (c_slope, rho_slope)
        }
    };
    Ok(MixingProfile { stationary: nu, c, rho, is_geometric, tv_curve })
}

/// Structural bounds for a perturbed policy: from the optimal chain's
/// envelope `(C* <= 2, rho* in [1/2,1), nu_min* > 0)` and the minimum
/// probability `underline_pi` kept on the optimal actions, bound the
/// perturbed chain's rate and stationary floor.
pub fn implicit_mixing_bounds(
    profile_star: &MixingProfile,
    underline_pi: f64,
) -> Result<MixingBounds> {
    if !(0.0..=1.0).contains(&underline_pi) || underline_pi == 0.0 {
        return Err(CoreError::InvalidInput(format!("underline_pi {underline_pi} outside (0,1]")));
    }
    if !profile_star.is_geometric {
        return Err(CoreError::InvalidInput("profile is not geometric".into()));
    }
    if profile_star.c > 2.0 + 1e-12 {
        return Err(CoreError::InvalidInput(format!("envelope constant {} exceeds 2", profile_star.c)));
    }
    if !(0.5..1.0).contains(&profile_star.rho) {
        return Err(CoreError::InvalidInput(format!(
            "envelope rate {} outside [1/2, 1)",
            profile_star.rho
        )));
    }
    let nu_min = profile_star.min_stationary();
    if nu_min <= 0.0 {
        return Err(CoreError::InvalidInput("stationary floor must be positive".into()));
    }
    let b_bar = ((4.0 / nu_min).log2() / (1.0 / profile_star.rho).log2()).ceil() as u32;
    let b = b_bar.max(1);
    let pib = underline_pi.powi(b as i32);
    Ok(MixingBounds {
        b_bar: b,
        rho_bound: 1.0 - pib * nu_min * nu_min / (2.0 * b as f64),
        nu_floor: pib * nu_min / 2.0,
    })
}
