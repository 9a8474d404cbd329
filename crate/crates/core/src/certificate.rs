//! Advantage-gap machinery: the exact gap oracle, the Monte-Carlo gap
//! estimator built on the two-phase Q estimator, and the early-termination
//! test.

use crate::error::{CoreError, Result};
use crate::mdp::{exact_q, Policy, QFunction, Regularizer, TabularMdp};
use crate::par;
use crate::sampler::{two_phase_estimate, SampleStream};

/// Estimated per-state advantage gap.
#[derive(Debug, Clone)]
pub struct GapEstimate {
    pub g_hat: Vec<f64>,
    /// Number of averaged two-phase replicates.
    pub replicates: usize,
    pub varsigma: f64,
}

impl GapEstimate {
    pub fn max(&self) -> f64 {
        self.g_hat.iter().cloned().fold(f64::MIN, f64::max)
    }
}

/// Exact advantage gap `g(s) = max_p { -psi(s,p) }`.
///
/// For the unregularized objective the maximum sits at a vertex:
/// `g(s) = V(s) - min_a Q(s,a)`. With entropy regularization the inner
/// minimum has the log-sum-exp closed form.
pub fn exact_gap(mdp: &TabularMdp, pi: &Policy, h: &Regularizer) -> Result<Vec<f64>> {
    let q = exact_q(mdp, pi, h)?;
    let v = q.value_under(pi);
    let na = mdp.n_actions();
    let mut g = Vec::with_capacity(mdp.n_states());
    for s in 0..mdp.n_states() {
        let row = q.row(s);
        let min_reg = match h {
            Regularizer::None => row.iter().cloned().fold(f64::MAX, f64::min),
            Regularizer::Entropy { tau } => {
                // min_p <Q, p> + tau sum p ln p + tau ln|A|
                let m = row.iter().cloned().fold(f64::MAX, f64::min);
                let lse: f64 = row.iter().map(|&qa| (-(qa - m) / tau).exp()).sum();
                m - tau * lse.ln() + tau * (na as f64).ln()
            }
        };
        g.push(v[s] + h.eval(pi.row(s)) - min_reg);
    }
    Ok(g)
}

/// Centered advantage estimates from one Q table:
/// `psi(s,a) = Q(s,a) - <Q(s,.), pi(.|s)>`.
fn centered_advantage(q: &QFunction, pi: &Policy) -> Vec<f64> {
    let v = q.value_under(pi);
    let mut psi = Vec::with_capacity(q.values.len());
    for s in 0..q.n_states {
        for a in 0..q.n_actions {
            psi.push(q.get(s, a) - v[s]);
        }
    }
    psi
}

/// Monte-Carlo advantage gap: average the centered advantages of
/// `replicates` independent two-phase estimates, then take the best vertex
/// per state. The replicates run on forked substreams in parallel.
pub fn estimate_gap(
    stream: &mut SampleStream<'_>,
    pi: &Policy,
    varsigma: f64,
    replicates: usize,
    eps_state: f64,
) -> Result<GapEstimate> {
    if replicates == 0 {
        return Err(CoreError::InvalidInput("at least one replicate required".into()));
    }
    let children: Vec<SampleStream> = (0..replicates).map(|_| stream.fork()).collect();
    let runs = par::map_collect(children, |mut child| {
        let q = two_phase_estimate(&mut child, pi, varsigma, eps_state);
        (child, q)
    });
    let na = pi.n_actions();
    let ns = pi.n_states();
    let mut psi_sum = vec![0.0; ns * na];
    let mut finished = Vec::with_capacity(runs.len());
    for (child, q) in runs {
        finished.push(child);
        let psi = centered_advantage(&q?, pi);
        for (acc, x) in psi_sum.iter_mut().zip(&psi) {
            *acc += x;
        }
    }
    stream.absorb(&finished)?;
    let m = replicates as f64;
    let g_hat = (0..ns)
        .map(|s| (0..na).map(|a| -psi_sum[s * na + a] / m).fold(f64::MIN, f64::max))
        .collect();
    Ok(GapEstimate { g_hat, replicates, varsigma })
}

/// Early-termination test: passes iff
/// `max_s g_hat(s) <= 4 epsilon (log2(8 |Z| k / delta))^2` (non-strict).
pub fn certificate_passes(
    gap_est: &GapEstimate,
    epsilon: f64,
    k: u64,
    n_pairs: usize,
    delta: f64,
) -> bool {
    gap_est.max() <= certificate_threshold(epsilon, k, n_pairs, delta)
}

/// The certificate threshold `4 epsilon (log2(8 |Z| k / delta))^2`.
pub fn certificate_threshold(epsilon: f64, k: u64, n_pairs: usize, delta: f64) -> f64 {
    let l = (8.0 * n_pairs as f64 * k as f64 / delta).log2();
    4.0 * epsilon * l * l
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::gen_garnet;
    use crate::mdp::{exact_value, solve_optimal};

    #[test]
    fn gap_vanishes_at_the_optimum() {
        let mdp = gen_garnet(4, 3, 4, 0, 0.8).unwrap();
        let (pi_star, _) = solve_optimal(&mdp, &Regularizer::None).unwrap();
        let g = exact_gap(&mdp, &pi_star, &Regularizer::None).unwrap();
        for x in g {
            assert!(x.abs() < 1e-9, "gap {x}");
        }
    }

    #[test]
    fn gap_vanishes_with_one_action() {
        let mdp = gen_garnet(3, 1, 3, 1, 0.7).unwrap();
        let g = exact_gap(&mdp, &Policy::uniform(3, 1), &Regularizer::None).unwrap();
        for x in g {
            assert!(x.abs() < 1e-10);
        }
    }

    #[test]
    fn sandwich_inequality_holds() {
        for seed in 0..10 {
            let mdp = gen_garnet(4, 2, 4, seed, 0.7).unwrap();
            let h = Regularizer::None;
            let pi = {
                let mut rng = crate::rng::make_rng(seed, 2);
                let rows: Vec<Vec<f64>> =
                    (0..4).map(|_| crate::rng::sample_simplex(&mut rng, 2)).collect();
                Policy::from_rows(4, 2, rows).unwrap()
            };
            let g = exact_gap(&mdp, &pi, &h).unwrap();
            let (_, v_star) = solve_optimal(&mdp, &h).unwrap();
            let v = exact_value(&mdp, &pi, &h).unwrap();
            let g_max = g.iter().cloned().fold(f64::MIN, f64::max);
            for s in 0..4 {
                let diff = v[s] - v_star[s];
                assert!(g[s] <= diff + 1e-10);
                assert!(diff <= g_max / (1.0 - 0.7) + 1e-10);
            }
        }
    }

    #[test]
    fn entropy_gap_is_nonnegative_and_zero_only_at_softmin() {
        let mdp = gen_garnet(3, 3, 3, 2, 0.6).unwrap();
        let h = Regularizer::Entropy { tau: 0.2 };
        let g = exact_gap(&mdp, &Policy::uniform(3, 3), &h).unwrap();
        for x in g {
            assert!(x > -1e-10);
        }
    }

    #[test]
    fn injected_exact_q_reproduces_exact_gap() {
        // definition collapse: with Q-tilde = Q^pi the estimator equals the oracle
        let mdp = gen_garnet(4, 2, 4, 3, 0.6).unwrap();
        let pi = Policy::uniform(4, 2);
        let h = Regularizer::None;
        let q = exact_q(&mdp, &pi, &h).unwrap();
        let psi = centered_advantage(&q, &pi);
        let g: Vec<f64> = (0..4)
            .map(|s| (0..2).map(|a| -psi[s * 2 + a]).fold(f64::MIN, f64::max))
            .collect();
        let oracle = exact_gap(&mdp, &pi, &h).unwrap();
        for (a, b) in g.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn one_action_estimate_is_exactly_zero() {
        let mdp = gen_garnet(3, 1, 3, 4, 0.5).unwrap();
        let pi = Policy::uniform(3, 1);
        let mut stream = SampleStream::new(&mdp, 0);
        let est = estimate_gap(&mut stream, &pi, 0.5, 3, 0.5).unwrap();
        for g in est.g_hat {
            assert_eq!(g, 0.0);
        }
    }

    #[test]
    fn gap_estimate_invariant_to_state_constant_shift() {
        // centering removes any per-state constant added to Q-tilde
        let q = QFunction::from_values(2, 2, vec![0.3, 0.7, 0.2, 0.9]);
        let mut shifted = q.clone();
        for a in 0..2 {
            let v = shifted.get(0, a) + 5.0;
            shifted.set(0, a, v);
            let v = shifted.get(1, a) - 2.0;
            shifted.set(1, a, v);
        }
        let pi = Policy::new(2, 2, vec![0.4, 0.6, 0.5, 0.5]).unwrap();
        let a = centered_advantage(&q, &pi);
        let b = centered_advantage(&shifted, &pi);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn certificate_threshold_monotone_and_boundary_inclusive() {
        let est = GapEstimate { g_hat: vec![0.0, 0.1], replicates: 1, varsigma: 0.1 };
        assert!(certificate_passes(&est, 0.01, 10, 8, 0.1));
        // passing at eps implies passing at 2 eps
        for eps in [1e-5, 1e-4, 1e-3] {
            if certificate_passes(&est, eps, 10, 8, 0.1) {
                assert!(certificate_passes(&est, 2.0 * eps, 10, 8, 0.1));
            }
        }
        let threshold = certificate_threshold(0.01, 10, 8, 0.1);
        let boundary = GapEstimate { g_hat: vec![threshold], replicates: 1, varsigma: 0.1 };
        assert!(certificate_passes(&boundary, 0.01, 10, 8, 0.1));
    }

    #[test]
    fn zero_gap_always_passes() {
        let est = GapEstimate { g_hat: vec![0.0; 3], replicates: 1, varsigma: 1.0 };
        assert!(certificate_passes(&est, 1e-12, 1, 1, 0.999));
    }

    #[test]
    fn estimate_tracks_oracle_on_small_instance() {
        let mdp = gen_garnet(4, 2, 4, 5, 0.5).unwrap();
        let pi = Policy::uniform(4, 2);
        let h = Regularizer::None;
        let mut stream = SampleStream::new(&mdp, 3);
        let est = estimate_gap(&mut stream, &pi, 0.02, 400, 1e-4).unwrap();
        let oracle = exact_gap(&mdp, &pi, &h).unwrap();
        for (e, o) in est.g_hat.iter().zip(&oracle) {
            assert!((e - o).abs() < 0.2, "estimate {e} oracle {o}");
        }
    }
}
