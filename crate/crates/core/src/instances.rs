//! Benchmark instance generators.

use rand::seq::SliceRandom;

use crate::error::{CoreError, Result};
use crate::mdp::TabularMdp;
use crate::rng::{make_rng, sample_simplex};

/// Random MDP with a fixed branching factor: each `(s,a)` transitions to
/// `branching` distinct uniformly-chosen successors with Dirichlet(1)
/// masses; costs are uniform on `[0,1]`. Deterministic per seed.
pub fn gen_garnet(
    n_states: usize,
    n_actions: usize,
    branching: usize,
    seed: u64,
    gamma: f64,
) -> Result<TabularMdp> {
    if n_states == 0 || n_actions == 0 {
        return Err(CoreError::InvalidInput("state/action counts must be positive".into()));
    }
    if branching == 0 || branching > n_states {
        return Err(CoreError::InvalidInput(format!(
            "branching {branching} outside [1, {n_states}]"
        )));
    }
    let mut rng = make_rng(seed, 0);
    let mut transition = vec![0.0; n_states * n_actions * n_states];
    let mut cost = vec![0.0; n_states * n_actions];
    let mut states: Vec<usize> = (0..n_states).collect();
    for s in 0..n_states {
        for a in 0..n_actions {
            states.shuffle(&mut rng);
            let succ = &states[..branching];
            let masses = sample_simplex(&mut rng, branching);
            let row = &mut transition[(s * n_actions + a) * n_states..][..n_states];
            for (i, &s2) in succ.iter().enumerate() {
                row[s2] = masses[i];
            }
            cost[s * n_actions + a] = rand::Rng::random::<f64>(&mut rng);
        }
    }
    TabularMdp::new(n_states, n_actions, gamma, transition, cost)
}

/// Riverswim-style chain: two actions (back, forward). Forward advances one
/// state with probability `1 - slip` and slips backward otherwise; back
/// always retreats. Only the far end state is cheap, so reaching it
/// requires a sustained run of forward actions.
pub fn gen_hard_chain(n_states: usize, slip: f64, gamma: f64) -> Result<TabularMdp> {
    if n_states < 2 {
        return Err(CoreError::InvalidInput("hard chain needs at least 2 states".into()));
    }
    if !(0.0 < slip && slip < 1.0) {
        return Err(CoreError::InvalidInput(format!("slip {slip} outside (0,1)")));
    }
    let n_actions = 2usize;
    let mut transition = vec![0.0; n_states * n_actions * n_states];
    let mut cost = vec![1.0; n_states * n_actions];
    for s in 0..n_states {
        let down = s.saturating_sub(1);
        let up = (s + 1).min(n_states - 1);
        {
            // action 0: back
            let row = &mut transition[(s * n_actions) * n_states..][..n_states];
            row[down] = 1.0;
        }
        {
            // action 1: forward
            let row = &mut transition[(s * n_actions + 1) * n_states..][..n_states];
            row[up] += 1.0 - slip;
            row[down] += slip;
        }
        if s == n_states - 1 {
            cost[s * n_actions] = 0.0;
            cost[s * n_actions + 1] = 0.0;
        }
    }
    TabularMdp::new(n_states, n_actions, gamma, transition, cost)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{stationary_distribution, Policy};

    #[test]
    fn degenerate_garnet_is_single_state() {
        let mdp = gen_garnet(1, 1, 1, 0, 0.5).unwrap();
        assert_eq!(mdp.n_states(), 1);
        assert!((mdp.transition_row(0, 0)[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn garnet_is_deterministic_per_seed() {
        let a = gen_garnet(5, 3, 2, 7, 0.9).unwrap();
        let b = gen_garnet(5, 3, 2, 7, 0.9).unwrap();
        assert_eq!(a, b);
        let c = gen_garnet(5, 3, 2, 8, 0.9).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn full_branching_garnet_is_irreducible_under_uniform() {
        for seed in 0..10 {
            let mdp = gen_garnet(4, 2, 4, seed, 0.8).unwrap();
            let pi = Policy::uniform(4, 2);
            for s in 0..4 {
                for a in 0..2 {
                    for &p in mdp.transition_row(s, a) {
                        assert!(p > 0.0);
                    }
                }
            }
            assert!(stationary_distribution(&mdp, &pi).is_ok());
        }
    }

    #[test]
    fn hard_chain_two_states_moves_forward_with_prob() {
        let mdp = gen_hard_chain(2, 0.3, 0.9).unwrap();
        let row = mdp.transition_row(0, 1);
        assert!((row[1] - 0.7).abs() < 1e-15);
        assert!((row[0] - 0.3).abs() < 1e-15);
    }

    #[test]
    fn hard_chain_low_slip_is_nearly_deterministic() {
        let mdp = gen_hard_chain(4, 1e-9, 0.9).unwrap();
        let row = mdp.transition_row(1, 1);
        assert!(row[2] > 1.0 - 1e-8);
    }

    #[test]
    fn hard_chain_end_state_rarely_visited_by_uniform() {
        let mdp = gen_hard_chain(6, 0.5, 0.9).unwrap();
        let pi = Policy::uniform(6, 2);
        let nu = stationary_distribution(&mdp, &pi).unwrap();
        assert!(nu[5] < 0.05, "stationary mass at end state = {}", nu[5]);
    }
}
