//! Parameter synthesis and the driver for tabular auto-exploration: the
//! mirror-descent loop fed by dynamic-mixing-time Monte-Carlo estimates,
//! plus the exploration-difficulty diagnostic.

use crate::error::{CoreError, Result};
use crate::mdp::{exact_value, solve_optimal, MixingProfile, Policy, Regularizer, TabularMdp};
use crate::mirror::{spmd_sweep, tsallis_index, DistanceGenerator};
use crate::record::RunRecord;
use crate::sampler::{dynamic_mixing_collect, SampleStream};

/// Derived parameters for a tabular auto-exploration run at accuracy
/// `epsilon` and reliability `delta`.
#[derive(Debug, Clone)]
pub struct TabularAutoConfig {
    pub epsilon: f64,
    pub delta: f64,
    pub gamma: f64,
    pub n_states: usize,
    pub n_actions: usize,
    pub m_h: f64,
    /// Tsallis entropic index.
    pub p: f64,
    /// Stepsize scale.
    pub alpha: f64,
    /// Iteration count; in anytime mode this is the loop length while the
    /// per-iteration parameters substitute `t+1` for `k`.
    pub k: u64,
    /// Bias target for the Monte-Carlo estimator.
    pub varsigma: f64,
    /// Non-rare probability threshold.
    pub underline_pi: f64,
    pub anytime: bool,
}

impl TabularAutoConfig {
    pub fn eta(&self, t: u64) -> f64 {
        if self.anytime {
            self.alpha / ((t + 1) as f64).sqrt()
        } else {
            self.alpha / (self.k as f64).sqrt()
        }
    }

    pub fn varsigma_at(&self, t: u64) -> f64 {
        if self.anytime {
            (1.0 - self.gamma) / (36.0 * (t + 1) as f64)
        } else {
            self.varsigma
        }
    }

    pub fn underline_pi_at(&self, t: u64) -> f64 {
        if self.anytime {
            underline_pi_formula(self.gamma, self.n_actions, self.n_states, t + 1, self.delta)
        } else {
            self.underline_pi
        }
    }
}

fn underline_pi_formula(gamma: f64, n_actions: usize, n_states: usize, k: u64, delta: f64) -> f64 {
    let log_term = (2.0 * n_states as f64 * k as f64 / delta).log2();
    let log_gamma = (1.0 / (1.0 - gamma)).log2();
    (1.0 - gamma) / (n_actions as f64 * 1296.0 * log_term * log_gamma * log_gamma)
}

/// Exact parameter synthesis: stepsize scale, iteration count, bias target,
/// and non-rare threshold as functions of `(gamma, |A|, |S|, epsilon,
/// delta, M_h)`. All logs are base 2.
pub fn theorem_params(
    gamma: f64,
    n_actions: usize,
    n_states: usize,
    epsilon: f64,
    delta: f64,
    m_h: f64,
) -> Result<TabularAutoConfig> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(CoreError::InvalidInput(format!("gamma {gamma} outside [0,1)")));
    }
    let q_bar = 1.0 / (1.0 - gamma);
    if !(epsilon > 0.0 && epsilon < q_bar) {
        return Err(CoreError::InvalidInput(format!(
            "epsilon {epsilon} outside (0, {q_bar})"
        )));
    }
    if !(0.0 < delta && delta < 1.0) {
        return Err(CoreError::InvalidInput(format!("delta {delta} outside (0,1)")));
    }
    if m_h < 0.0 || m_h > q_bar {
        return Err(CoreError::InvalidInput(format!("M_h {m_h} outside [0, {q_bar}]")));
    }
    let p = tsallis_index(gamma);
    let na = n_actions as f64;
    let magnitude = q_bar * q_bar + m_h * m_h;
    let alpha = (na.powf(1.0 - p) / ((1.0 - p) * p * magnitude)).sqrt();
    let k = (1296.0 * na.powf(1.0 - p) * magnitude
        / ((1.0 - gamma).powi(2) * (1.0 - p) * p * epsilon * epsilon))
        .ceil();
    if !k.is_finite() || k > 1e18 {
        return Err(CoreError::InvalidInput(format!("iteration count {k} overflows")));
    }
    let k = (k as u64).max(4);
    let varsigma = (1.0 - gamma) * epsilon / 36.0;
    let underline_pi = underline_pi_formula(gamma, n_actions, n_states, k, delta);
    Ok(TabularAutoConfig {
        epsilon,
        delta,
        gamma,
        n_states,
        n_actions,
        m_h,
        p,
        alpha,
        k,
        varsigma,
        underline_pi,
        anytime: false,
    })
}

/// Algorithm-independent difficulty-of-exploration constant.
#[derive(Debug, Clone, Copy)]
pub struct ExplorationDifficulty {
    pub value: f64,
    pub b_bar: u32,
    pub n_actions: usize,
    pub n_pairs: usize,
    pub delta: f64,
    pub gamma: f64,
    pub rho_star: f64,
    pub nu_floor_star: f64,
}

/// `D_expl = (|A| log2(|Z|/delta) / (1-gamma))^{2 b_bar} / ((1-rho*)
/// (nu_min*)^3)` from the optimal chain's mixing profile.
pub fn d_expl(
    profile_star: &MixingProfile,
    n_actions: usize,
    n_pairs: usize,
    delta: f64,
    gamma: f64,
) -> Result<ExplorationDifficulty> {
    if !profile_star.is_geometric {
        return Err(CoreError::InvalidInput("profile is not geometric".into()));
    }
    let nu_min = profile_star.min_stationary();
    let rho = profile_star.rho;
    if nu_min <= 0.0 {
        return Err(CoreError::InvalidInput("stationary floor must be positive".into()));
    }
    if rho >= 1.0 {
        return Err(CoreError::InvalidInput("envelope rate must be below 1".into()));
    }
    if !(0.0 < delta && delta < 1.0) {
        return Err(CoreError::InvalidInput(format!("delta {delta} outside (0,1)")));
    }
    let b_bar = (((4.0 / nu_min).log2() / (1.0 / rho).log2()).ceil() as u32).max(1);
    let base = n_actions as f64 * (n_pairs as f64 / delta).log2() / (1.0 - gamma);
    let value = base.powi(2 * b_bar as i32) / ((1.0 - rho) * nu_min.powi(3));
    Ok(ExplorationDifficulty {
        value,
        b_bar,
        n_actions,
        n_pairs,
        delta,
        gamma,
        rho_star: rho,
        nu_floor_star: nu_min,
    })
}

/// Run the auto-exploring loop: each iteration collects a dynamic-mixing
/// Monte-Carlo estimate on-policy and applies the Tsallis proximal sweep.
///
/// With `oracle` attached, the record carries the exact sup-norm gap and
/// the minimum probability the policy keeps on oracle-optimal actions; the
/// algorithm itself never reads the model.
pub fn run(
    stream: &mut SampleStream<'_>,
    config: &TabularAutoConfig,
    budget: u64,
    oracle: Option<&TabularMdp>,
) -> Result<(Policy, RunRecord)> {
    if budget == 0 {
        return Err(CoreError::InvalidInput("budget must be positive".into()));
    }
    stream.set_budget(stream.samples().saturating_add(budget));
    let dgf = DistanceGenerator::tsallis(config.p)?;
    let h = Regularizer::None;
    let start = stream.samples();
    let oracle_data = match oracle {
        Some(mdp) => {
            let (pi_star, v_star) = solve_optimal(mdp, &h)?;
            let actions = pi_star.as_deterministic().ok_or_else(|| {
                CoreError::InvalidInput("oracle produced a non-deterministic policy".into())
            })?;
            Some((mdp, actions, v_star))
        }
        None => None,
    };

    let mut record =
        RunRecord::new(vec!["iter", "samples_cum", "m_tilde", "gap_linf", "min_optact_prob"]);
    let mut pi = Policy::uniform(config.n_states, config.n_actions);
    for t in 0..config.k {
        let outcome =
            dynamic_mixing_collect(stream, &pi, config.varsigma_at(t), config.underline_pi_at(t))?;
        pi = spmd_sweep(&pi, &outcome.q, &h, config.eta(t), dgf)?;
        let (gap, min_opt) = match &oracle_data {
            Some((mdp, actions, v_star)) => {
                let v = exact_value(mdp, &pi, &h)?;
                let gap = v.iter().zip(v_star).map(|(a, b)| a - b).fold(f64::MIN, f64::max);
                let min_opt = actions
                    .iter()
                    .enumerate()
                    .map(|(s, &a)| pi.prob(s, a))
                    .fold(f64::MAX, f64::min);
                (gap, min_opt)
            }
            None => (f64::NAN, f64::NAN),
        };
        record.push_row(vec![
            t as f64,
            (stream.samples() - start) as f64,
            outcome.m_used as f64,
            gap,
            min_opt,
        ])?;
    }
    let total = stream.samples() - start;
    let final_gap = record.last_value("gap_linf").filter(|g| !g.is_nan());
    record.summary = serde_json::json!({
        "iterations": config.k,
        "total_samples": total,
        "final_gap_linf": final_gap,
        "anytime": config.anytime,
    });
    Ok((pi, record))
}
