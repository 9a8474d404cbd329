//! The doubling-trick outer loop: halve the visitation lower-bound guess
//! each epoch, run mirror descent with conditional-TD evaluation, and stop
//! at the first policy the advantage-gap certificate accepts.

use crate::certificate::{certificate_passes, estimate_gap};
use crate::error::{CoreError, Result};
use crate::linear::FeatureMap;
use crate::mdp::{exact_value, solve_optimal, Policy, Regularizer, TabularMdp};
use crate::record::RunRecord;
use crate::sampler::SampleStream;
use crate::spmd_ctd::{spmd_ctd_run, synth_params_desk, DeskScale};

/// Epoch-by-epoch trace of the doubling loop.
#[derive(Debug, Clone)]
pub struct DoublingState {
    pub epochs: Vec<EpochSummary>,
    /// `ceil(log2(1/underline_kappa))`.
    pub e_max: u32,
}

#[derive(Debug, Clone, Copy)]
pub struct EpochSummary {
    pub ep: u32,
    pub kappa_tilde: f64,
    pub certified: bool,
    pub samples: u64,
    pub gap_max_est: f64,
}

/// Lower-bound presets for the doubling loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KappaPreset {
    /// `(1-gamma) f / |S|`, valid whenever the mixture frequency is
    /// positive.
    WithFrequency { f: f64 },
    /// Small-approximation-error path: frequency 0 and no state
    /// exploration; the guess starts at 1 and the certificate alone decides.
    SmallApproxError,
}

/// Resolve a preset to `(underline_kappa, f, zero_state_exploration)`.
pub fn kappa_presets(
    preset: KappaPreset,
    gamma: f64,
    n_states: usize,
) -> Result<(f64, f64, bool)> {
    match preset {
        KappaPreset::WithFrequency { f } => {
            if !(0.0 < f && f <= 1.0) {
                return Err(CoreError::InvalidInput(format!(
                    "frequency {f} must be positive for the frequency preset"
                )));
            }
            Ok((((1.0 - gamma) * f) / n_states as f64, f, false))
        }
        KappaPreset::SmallApproxError => Ok((1.0, 0.0, true)),
    }
}

/// Options for a parameter-free run.
#[derive(Debug, Clone)]
pub struct ParamfreeOptions {
    pub epsilon: f64,
    pub delta: f64,
    pub f: f64,
    pub underline_kappa: f64,
    /// Disable state exploration (the small-approximation-error path).
    pub zero_state_exploration: bool,
    pub desk: DeskScale,
    /// Divisor on the certificate replicate count `ceil(8/((1-gamma)^2
    /// eps^2))`.
    pub cert_div: f64,
    pub budget: u64,
}

/// Run the doubling loop. All epochs share one stream: the trajectory
/// carries over between epochs and is never reset. Each epoch restarts
/// mirror descent from the uniform policy.
pub fn paramfree_run(
    stream: &mut SampleStream<'_>,
    fmap: &FeatureMap,
    opts: &ParamfreeOptions,
    oracle: Option<&TabularMdp>,
) -> Result<(Policy, RunRecord, DoublingState)> {
    if !(0.0 < opts.underline_kappa && opts.underline_kappa <= 1.0) {
        return Err(CoreError::InvalidInput(format!(
            "underline_kappa {} outside (0,1]",
            opts.underline_kappa
        )));
    }
    if opts.cert_div < 1.0 {
        return Err(CoreError::InvalidInput("cert_div must be at least 1".into()));
    }
    let mdp = stream.mdp();
    let gamma = mdp.gamma();
    stream.set_budget(stream.samples().saturating_add(opts.budget));
    let e_max = ((1.0 / opts.underline_kappa).log2().ceil() as u32).min(63);
    let m_exact = 8.0 / ((1.0 - gamma).powi(2) * opts.epsilon * opts.epsilon);
    let cert_replicates = ((m_exact / opts.cert_div).ceil() as usize).max(1);

    let start = stream.samples();
    let mut record = RunRecord::new(vec![
        "ep",
        "kappa_tilde",
        "samples_cum",
        "gap_max_est",
        "certificate_pass",
    ]);
    let mut epochs = Vec::new();
    let mut final_policy: Option<Policy> = None;
    let mut certified = false;
    let mut certified_ep = 0u32;
    for ep in 0..=e_max {
        let kappa_tilde = 2.0f64.powi(-(ep as i32));
        let mut cfg = synth_params_desk(
            gamma,
            fmap,
            mdp.n_actions(),
            mdp.n_states(),
            opts.epsilon,
            opts.delta / 2.0,
            kappa_tilde,
            &opts.desk,
        )?;
        cfg.f = opts.f;
        if opts.zero_state_exploration {
            cfg.eps_state = 0.0;
        }
        let ep_start = stream.samples();
        let (pi, _) = spmd_ctd_run(stream, fmap, &cfg, None, oracle)?;
        let gap_est = estimate_gap(
            stream,
            &pi,
            opts.epsilon / 2.0,
            cert_replicates,
            // the certificate keeps the synthesized exploration threshold
            // even on the zero-state-exploration path, where it only sets
            // the rare-pair cutoff
            cfg.eps_state.max(f64::MIN_POSITIVE),
        )?;
        let pass = certificate_passes(&gap_est, opts.epsilon, cfg.k, mdp.n_pairs(), opts.delta);
        let ep_samples = stream.samples() - ep_start;
        record.push_row(vec![
            ep as f64,
            kappa_tilde,
            (stream.samples() - start) as f64,
            gap_est.max(),
            if pass { 1.0 } else { 0.0 },
        ])?;
        epochs.push(EpochSummary {
            ep,
            kappa_tilde,
            certified: pass,
            samples: ep_samples,
            gap_max_est: gap_est.max(),
        });
        final_policy = Some(pi);
        if pass {
            certified = true;
            certified_ep = ep;
            break;
        }
    }
    let pi = final_policy.expect("at least one epoch always runs");
    let final_gap_oracle = match oracle {
        Some(mdp) => {
            let h = Regularizer::None;
            let (_, v_star) = solve_optimal(mdp, &h)?;
            let v = exact_value(mdp, &pi, &h)?;
            Some(v.iter().zip(&v_star).map(|(a, b)| a - b).fold(f64::MIN, f64::max))
        }
        None => None,
    };
    let total = stream.samples() - start;
    record.summary = serde_json::json!({
        "certified": certified,
        "epoch": if certified { certified_ep } else { e_max },
        "total_samples": total,
        "final_gap_oracle": final_gap_oracle,
    });
    let state = DoublingState { epochs, e_max };
    Ok((pi, record, state))
}
