//! The single-trajectory online data model.
//!
//! A [`SampleStream`] owns the environment state, a sample counter that
//! advances by exactly one per transition, and two independent ChaCha
//! substreams: one for trajectory randomness, one for algorithm-internal
//! draws. No resets ever happen during algorithm runs; identical seeds
//! reproduce identical trajectories bit-exactly.

use rand_chacha::ChaCha8Rng;

use crate::error::{CoreError, Result};
use crate::mdp::{Policy, QFunction, TabularMdp};
use crate::rng::{derive_seed, make_rng, sample_geometric, sample_index, STREAM_AUX, STREAM_TRAJECTORY};

/// Default hard sample cap converting non-termination into `BudgetExceeded`.
pub const DEFAULT_BUDGET: u64 = 100_000_000;

/// One environment transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub s: usize,
    pub a: usize,
    pub cost: f64,
    pub s_next: usize,
}

/// Stateful single-trajectory simulator with seeded randomness.
#[derive(Debug, Clone)]
pub struct SampleStream<'a> {
    mdp: &'a TabularMdp,
    state: usize,
    samples: u64,
    budget: u64,
    seed: u64,
    forks: u64,
    rng: ChaCha8Rng,
    aux: ChaCha8Rng,
}

impl<'a> SampleStream<'a> {
    pub fn new(mdp: &'a TabularMdp, seed: u64) -> Self {
        Self {
            mdp,
            state: 0,
            samples: 0,
            budget: DEFAULT_BUDGET,
            seed,
            forks: 0,
            rng: make_rng(seed, STREAM_TRAJECTORY),
            aux: make_rng(seed, STREAM_AUX),
        }
    }

    pub fn mdp(&self) -> &'a TabularMdp {
        self.mdp
    }

    pub fn state(&self) -> usize {
        self.state
    }

    /// Cumulative transition count.
    pub fn samples(&self) -> u64 {
        self.samples
    }

    pub fn budget(&self) -> u64 {
        self.budget
    }

    /// Cap the cumulative sample counter.
    pub fn set_budget(&mut self, budget: u64) {
        self.budget = budget;
    }

    /// Child stream with an independently derived seed, starting from the
    /// parent's current state with the parent's remaining budget.
    /// Replicates forked in index order are deterministic regardless of the
    /// threads that later run them.
    pub fn fork(&mut self) -> SampleStream<'a> {
        self.forks += 1;
        let seed = derive_seed(self.seed, self.forks);
        let mut child = SampleStream::new(self.mdp, seed);
        child.state = self.state;
        child.budget = self.budget.saturating_sub(self.samples);
        child
    }

    /// Fold a batch of finished children back into this stream: counts are
    /// summed and the trajectory continues from the last child's state.
    pub fn absorb(&mut self, children: &[SampleStream<'a>]) -> Result<()> {
        for child in children {
            self.samples = self.samples.saturating_add(child.samples);
        }
        if let Some(last) = children.last() {
            self.state = last.state;
        }
        if self.samples > self.budget {
            return Err(CoreError::BudgetExceeded { budget: self.budget });
        }
        Ok(())
    }

    /// Advance one transition under `pi`.
    pub fn step(&mut self, pi: &Policy) -> Result<Transition> {
        if self.samples >= self.budget {
            return Err(CoreError::BudgetExceeded { budget: self.budget });
        }
        let s = self.state;
        let a = sample_index(&mut self.rng, pi.row(s));
        let cost = self.mdp.cost(s, a);
        let s_next = sample_index(&mut self.rng, self.mdp.transition_row(s, a));
        self.state = s_next;
        self.samples += 1;
        Ok(Transition { s, a, cost, s_next })
    }

    /// Draw an action at the current state without advancing the chain.
    pub fn draw_action(&mut self, pi: &Policy) -> usize {
        sample_index(&mut self.rng, pi.row(self.state))
    }

    /// Algorithm-internal uniform draw (independent of the trajectory).
    pub fn aux_f64(&mut self) -> f64 {
        rand::Rng::random(&mut self.aux)
    }

    /// Algorithm-internal uniform index draw.
    pub fn aux_index(&mut self, n: usize) -> usize {
        rand::Rng::random_range(&mut self.aux, 0..n)
    }

    /// Algorithm-internal Geometric(1-gamma) draw on {0,1,2,...}.
    pub fn aux_geometric(&mut self, gamma: f64) -> u64 {
        sample_geometric(&mut self.aux, gamma)
    }
}

/// Per-pair first hitting times over a window of length `m`; unhit pairs
/// carry `tau = m` with an explicit flag to keep "hit at m" and "never hit"
/// distinguishable.
#[derive(Debug, Clone)]
pub struct HittingRecord {
    pub m: usize,
    pub tau: Vec<usize>,
    pub hit: Vec<bool>,
}

impl HittingRecord {
    pub fn from_window(window: &[Transition], n_states: usize, n_actions: usize) -> Self {
        let m = window.len();
        let nz = n_states * n_actions;
        let mut tau = vec![m; nz];
        let mut hit = vec![false; nz];
        for (t, tr) in window.iter().enumerate() {
            let z = tr.s * n_actions + tr.a;
            if !hit[z] {
                hit[z] = true;
                tau[z] = t;
            }
        }
        Self { m, tau, hit }
    }
}

/// The state-action pairs `pi` plays with probability at least
/// `underline_pi`.
pub fn nonrare_set(pi: &Policy, underline_pi: f64) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for s in 0..pi.n_states() {
        for a in 0..pi.n_actions() {
            if pi.prob(s, a) >= underline_pi {
                out.push((s, a));
            }
        }
    }
    out
}

/// Discounted hitting value `gamma^(m - tau)`.
pub fn discounted_hitting(m: usize, tau: usize, gamma: f64) -> f64 {
    debug_assert!(tau <= m);
    gamma.powi((m - tau) as i32)
}

/// Truncated on-policy Monte-Carlo Q estimate over a window.
///
/// Rare pairs get the pessimistic value `1/(1-gamma)`; non-rare pairs first
/// hit at `tau` get `sum_{t=tau}^{m-1} gamma^(t-tau) c(z_t)`; unhit
/// non-rare pairs get 0 by the empty-sum convention.
pub fn tomc_estimate(
    window: &[Transition],
    pi: &Policy,
    underline_pi: f64,
    gamma: f64,
) -> QFunction {
    let ns = pi.n_states();
    let na = pi.n_actions();
    let m = window.len();
    let hitting = HittingRecord::from_window(window, ns, na);
    // suffix discounted cost: suffix[t] = sum_{j>=t} gamma^{j-t} c(z_j)
    let mut suffix = vec![0.0; m + 1];
    for t in (0..m).rev() {
        suffix[t] = window[t].cost + gamma * suffix[t + 1];
    }
    let mut q = QFunction::zeros(ns, na);
    for s in 0..ns {
        for a in 0..na {
            let z = s * na + a;
            let v = if pi.prob(s, a) < underline_pi {
                1.0 / (1.0 - gamma)
            } else if hitting.hit[z] {
                suffix[hitting.tau[z]]
            } else {
                0.0
            };
            q.set(s, a, v);
        }
    }
    q
}

/// Output of the dynamic-mixing-time collection.
#[derive(Debug, Clone)]
pub struct CollectOutcome {
    pub q: QFunction,
    pub m_used: usize,
    pub hitting: HittingRecord,
}

/// Stream on-policy samples until every non-rare pair's discounted hitting
/// value `gamma^(m - tau)` falls below `varsigma (1-gamma)`, then return
/// the Monte-Carlo estimate over that window.
///
/// Uses the closed form `m = max_z tau(z) + ceil(ln(1/(varsigma(1-gamma))) /
/// ln(1/gamma))` once every non-rare pair has been hit; equivalent because
/// tau is fixed from then on and the hitting value decreases in `m`.
pub fn dynamic_mixing_collect(
    stream: &mut SampleStream<'_>,
    pi: &Policy,
    varsigma: f64,
    underline_pi: f64,
) -> Result<CollectOutcome> {
    if varsigma <= 0.0 {
        return Err(CoreError::InvalidInput(format!("varsigma {varsigma} must be positive")));
    }
    let gamma = stream.mdp().gamma();
    let ns = pi.n_states();
    let na = pi.n_actions();
    let level = varsigma * (1.0 - gamma);
    let nonrare = nonrare_set(pi, underline_pi);

    let mut window: Vec<Transition> = Vec::new();
    if nonrare.is_empty() || level >= 1.0 {
        // the stopping condition holds vacuously at the minimal window m = 1
        window.push(stream.step(pi)?);
        let q = tomc_estimate(&window, pi, underline_pi, gamma);
        let hitting = HittingRecord::from_window(&window, ns, na);
        return Ok(CollectOutcome { q, m_used: 1, hitting });
    }

    let mut is_nonrare = vec![false; ns * na];
    for &(s, a) in &nonrare {
        is_nonrare[s * na + a] = true;
    }
    let mut seen = vec![false; ns * na];
    let mut remaining = nonrare.len();
    let mut tau_max = 0usize;
    while remaining > 0 {
        let tr = stream.step(pi)?;
        let z = tr.s * na + tr.a;
        if is_nonrare[z] && !seen[z] {
            seen[z] = true;
            remaining -= 1;
            tau_max = window.len();
        }
        window.push(tr);
    }
    let extra = if gamma == 0.0 {
        1
    } else {
        ((1.0 / level).ln() / (1.0 / gamma).ln()).ceil().max(1.0) as usize
    };
    let m_used = tau_max + extra;
    while window.len() < m_used {
        window.push(stream.step(pi)?);
    }
    let q = tomc_estimate(&window, pi, underline_pi, gamma);
    let hitting = HittingRecord::from_window(&window, ns, na);
    Ok(CollectOutcome { q, m_used, hitting })
}

/// Two-phase Q estimation for the certificate.
///
/// Phase I is [`dynamic_mixing_collect`] with threshold `eps_state`. Phase
/// II revisits each pair still carrying the pessimistic placeholder: roll
/// the state-exploration policy until the pair itself is played (the drawn
/// action matches), then continue under `pi` for the Phase-I window length
/// and overwrite the entry with the finite-sum estimate. Entries come out
/// with elementwise bias at most `varsigma`.
pub fn two_phase_estimate(
    stream: &mut SampleStream<'_>,
    pi: &Policy,
    varsigma: f64,
    eps_state: f64,
) -> Result<QFunction> {
    if !(0.0 < eps_state && eps_state <= 1.0) {
        return Err(CoreError::InvalidInput(format!("eps_state {eps_state} outside (0,1]")));
    }
    let gamma = stream.mdp().gamma();
    let na = pi.n_actions();
    let outcome = dynamic_mixing_collect(stream, pi, varsigma, eps_state)?;
    let mut q = outcome.q;
    let m = outcome.m_used;

    let rare: Vec<(usize, usize)> = (0..pi.n_states())
        .flat_map(|s| (0..na).map(move |a| (s, a)))
        .filter(|&(s, a)| pi.prob(s, a) < eps_state)
        .collect();
    if rare.is_empty() {
        return Ok(q);
    }
    let explore = crate::linear::perturb_state_policy(pi, eps_state);
    for (s, a) in rare {
        // wait until the pair itself is played under the exploration policy
        let first = loop {
            let tr = stream.step(&explore)?;
            if tr.s == s && tr.a == a {
                break tr;
            }
        };
        let mut acc = first.cost;
        let mut disc = 1.0;
        for _ in 1..m {
            let tr = stream.step(pi)?;
            disc *= gamma;
            acc += disc * tr.cost;
        }
        q.set(s, a, acc);
    }
    Ok(q)
}

/// Render a trajectory window as CSV for debugging dumps.
pub fn window_to_csv(window: &[Transition]) -> String {
    let mut out = String::from("t,s,a,cost,s_next\n");
    for (t, tr) in window.iter().enumerate() {
        out.push_str(&format!("{t},{},{},{},{}\n", tr.s, tr.a, tr.cost, tr.s_next));
    }
    out
}
