//! Distance-generating functions, Bregman divergences, and the per-state
//! proximal policy update.
//!
//! The KL prox has a multiplicative-weights closed form. The Tsallis prox
//! has none; its scalar dual is solved by bisection on the simplex-sum
//! residual with the multiplier bracketed by exponential search.

use crate::error::{CoreError, Result};
use crate::mdp::{Policy, QFunction, Regularizer, TabularMdp, INTERIOR_CLIP};
use crate::par;
use crate::record::RunRecord;

/// Tolerance on the dual simplex-sum residual.
pub const BISECTION_TOL: f64 = 1e-12;

/// Distance-generating function for the Bregman prox.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DistanceGenerator {
    /// Shannon entropy; Bregman distance is the KL divergence.
    Kl,
    /// Negative Tsallis entropy with entropic index `p` strictly inside
    /// (0,1): `omega(u) = -sum_a u_a^p / ((1-p) p)`.
    Tsallis { p: f64 },
}

impl DistanceGenerator {
    pub fn tsallis(p: f64) -> Result<Self> {
        if !(0.0 < p && p < 1.0) {
            return Err(CoreError::InvalidInput(format!("entropic index {p} outside (0,1)")));
        }
        Ok(DistanceGenerator::Tsallis { p })
    }

    fn omega(&self, u: &[f64]) -> f64 {
        match self {
            DistanceGenerator::Kl => u
                .iter()
                .map(|&x| if x > 0.0 { let x = x.max(INTERIOR_CLIP); x * x.ln() } else { 0.0 })
                .sum(),
            DistanceGenerator::Tsallis { p } => {
                let s: f64 = u.iter().map(|&x| x.max(0.0).powf(*p)).sum();
                -s / ((1.0 - p) * p)
            }
        }
    }

    fn grad(&self, x: f64) -> f64 {
        let x = x.max(INTERIOR_CLIP);
        match self {
            DistanceGenerator::Kl => 1.0 + x.ln(),
            DistanceGenerator::Tsallis { p } => -x.powf(p - 1.0) / (1.0 - p),
        }
    }
}

/// Entropic index used for the auto-exploration guarantees:
/// `1 / log2(1/(1-gamma))`, clamped into `(0, 1/2]` (the clamp only binds
/// for `gamma < 3/4`, where the flat value 1/2 is used).
pub fn tsallis_index(gamma: f64) -> f64 {
    let p = 1.0 / (1.0 / (1.0 - gamma)).log2();
    p.clamp(1e-6, 0.5)
}

/// Stepsize schedule for the mirror-descent loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepsizeSchedule {
    /// `eta_t = alpha / sqrt(k)` for a fixed iteration count `k`.
    ConstantOverSqrtK,
    /// `eta_t = alpha / sqrt(t+1)`.
    Anytime,
}

/// Configuration of a mirror-descent run.
#[derive(Debug, Clone)]
pub struct SpmdConfig {
    pub alpha: f64,
    pub k: usize,
    pub schedule: StepsizeSchedule,
    pub dgf: DistanceGenerator,
    pub bisection_tol: f64,
}

impl SpmdConfig {
    pub fn new(alpha: f64, k: usize, schedule: StepsizeSchedule, dgf: DistanceGenerator) -> Result<Self> {
        if alpha <= 0.0 {
            return Err(CoreError::InvalidInput(format!("alpha {alpha} must be positive")));
        }
        if k < 4 {
            return Err(CoreError::InvalidInput(format!("iteration count {k} below 4")));
        }
        Ok(Self { alpha, k, schedule, dgf, bisection_tol: BISECTION_TOL })
    }

    pub fn eta(&self, t: usize) -> f64 {
        match self.schedule {
            StepsizeSchedule::ConstantOverSqrtK => self.alpha / (self.k as f64).sqrt(),
            StepsizeSchedule::Anytime => self.alpha / ((t + 1) as f64).sqrt(),
        }
    }
}

fn check_simplex(v: &[f64], name: &str) -> Result<()> {
    let sum: f64 = v.iter().sum();
    if (sum - 1.0).abs() > 1e-9 || v.iter().any(|&x| x < -1e-12) {
        return Err(CoreError::InvalidInput(format!("{name} is not on the simplex (sum {sum})")));
    }
    Ok(())
}

/// Bregman divergence `D(u, v) = omega(v) - omega(u) - <grad omega(u), v - u>`,
/// with `u` clipped into the relative interior before the gradient.
pub fn bregman(dgf: DistanceGenerator, u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(CoreError::InvalidInput("dimension mismatch".into()));
    }
    check_simplex(u, "u")?;
    check_simplex(v, "v")?;
    let mut d = dgf.omega(v) - dgf.omega(u);
    for (&ui, &vi) in u.iter().zip(v) {
        d -= dgf.grad(ui) * (vi - ui);
    }
    Ok(d)
}

/// One proximal step on the simplex:
/// `argmin_v { <q_row, v> + h(v) + D(pi_s, v) / eta }`.
///
/// Output rows are exactly normalized; interior inputs give strictly
/// positive outputs for both generators.
pub fn spmd_step(
    pi_s: &[f64],
    q_row: &[f64],
    h: &Regularizer,
    eta: f64,
    dgf: DistanceGenerator,
) -> Result<Vec<f64>> {
    if eta <= 0.0 {
        return Err(CoreError::InvalidInput(format!("eta {eta} must be positive")));
    }
    if q_row.iter().any(|q| !q.is_finite()) {
        return Err(CoreError::InvalidInput("q row contains non-finite entries".into()));
    }
    check_simplex(pi_s, "pi_s")?;
    let q_min = q_row.iter().cloned().fold(f64::MAX, f64::min);
    let q_max = q_row.iter().cloned().fold(f64::MIN, f64::max);
    if q_max == q_min && matches!(h, Regularizer::None) {
        // objective is the pure prox plus a constant
        return Ok(pi_s.to_vec());
    }
    // shifting q by a constant leaves the argmin unchanged
    let q: Vec<f64> = q_row.iter().map(|x| x - q_min).collect();
    match (dgf, h) {
        (DistanceGenerator::Kl, Regularizer::None) => {
            let mut w: Vec<f64> = pi_s.iter().zip(&q).map(|(&p, &qa)| p * (-eta * qa).exp()).collect();
            let s: f64 = w.iter().sum();
            if !(s.is_finite() && s > 0.0) {
                return Err(CoreError::BisectionFailed);
            }
            for x in &mut w {
                *x /= s;
            }
            Ok(w)
        }
        (DistanceGenerator::Kl, Regularizer::Entropy { tau }) => {
            let beta = 1.0 / (1.0 + eta * tau);
            let mut w: Vec<f64> = pi_s
                .iter()
                .zip(&q)
                .map(|(&p, &qa)| p.max(INTERIOR_CLIP).powf(beta) * (-eta * qa * beta).exp())
                .collect();
            let s: f64 = w.iter().sum();
            if !(s.is_finite() && s > 0.0) {
                return Err(CoreError::BisectionFailed);
            }
            for x in &mut w {
                *x /= s;
            }
            Ok(w)
        }
        (DistanceGenerator::Tsallis { p }, _) => tsallis_prox(pi_s, &q, h, eta, p),
    }
}

/// Tsallis prox by bisection on the dual multiplier.
fn tsallis_prox(pi_s: &[f64], q: &[f64], h: &Regularizer, eta: f64, p: f64) -> Result<Vec<f64>> {
    let omp = 1.0 - p;
    // grad omega(pi) per coordinate, pi clipped into the interior
    let gpi: Vec<f64> = pi_s.iter().map(|&x| x.max(INTERIOR_CLIP).powf(p - 1.0)).collect();

    // coordinate value at multiplier lambda; None encodes +infinity
    let coord = |a: usize, lam: f64| -> Option<f64> {
        match h {
            Regularizer::None => {
                let bracket = gpi[a] + omp * eta * (q[a] + lam);
                if bracket <= 0.0 {
                    None
                } else {
                    Some(bracket.powf(1.0 / (p - 1.0)))
                }
            }
            Regularizer::Entropy { tau } => {
                // root of rising g(x) = q + tau(1+ln x) + (gpi - x^{p-1})/((1-p) eta) + lam
                let g = |x: f64| {
                    q[a] + tau * (1.0 + x.ln()) + (gpi[a] - x.powf(p - 1.0)) / (omp * eta) + lam
                };
                let mut hi = 1.0f64;
                let mut n = 0;
                while g(hi) < 0.0 {
                    hi *= 2.0;
                    n += 1;
                    if n > 200 {
                        return None;
                    }
                }
                let mut lo = hi.min(1.0) * 1e-300;
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if g(mid) < 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                Some(0.5 * (lo + hi))
            }
        }
    };
    let sum_at = |lam: f64| -> f64 {
        let mut s = 0.0;
        for a in 0..q.len() {
            match coord(a, lam) {
                Some(x) => s += x,
                None => return f64::INFINITY,
            }
        }
        s
    };

    // the sum is strictly decreasing in lambda; bracket lambda* by
    // exponential search
    let lam_floor = match h {
        Regularizer::None => q
            .iter()
            .zip(&gpi)
            .map(|(&qa, &g)| -qa - g / (omp * eta))
            .fold(f64::MIN, f64::max),
        Regularizer::Entropy { .. } => {
            let mut lo = -1.0f64;
            let mut n = 0;
            while sum_at(lo) < 1.0 {
                lo *= 2.0;
                n += 1;
                if n > 200 {
                    return Err(CoreError::BisectionFailed);
                }
            }
            lo
        }
    };
    let mut lo = lam_floor;
    let mut step = 1.0f64.max(lam_floor.abs() * 1e-6);
    let mut hi = lam_floor + step;
    let mut n = 0;
    while sum_at(hi) >= 1.0 {
        step *= 2.0;
        hi = lam_floor + step;
        n += 1;
        if n > 200 {
            return Err(CoreError::BisectionFailed);
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let s = sum_at(mid);
        if s >= 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi.abs().max(1.0) && (s - 1.0).abs() <= BISECTION_TOL {
            break;
        }
    }
    let lam = 0.5 * (lo + hi);
    let mut out: Vec<f64> = (0..q.len())
        .map(|a| coord(a, lam).unwrap_or(f64::MAX))
        .collect();
    let s: f64 = out.iter().sum();
    if !(s.is_finite() && s > 0.0) {
        return Err(CoreError::BisectionFailed);
    }
    for x in &mut out {
        *x /= s;
    }
    Ok(out)
}

/// Apply the prox at every state; the per-state subproblems are independent
/// and run in parallel.
pub fn spmd_sweep(
    pi: &Policy,
    q: &QFunction,
    h: &Regularizer,
    eta: f64,
    dgf: DistanceGenerator,
) -> Result<Policy> {
    let n = pi.n_states();
    let rows = par::map_indices(n, |s| spmd_step(pi.row(s), q.row(s), h, eta, dgf));
    let rows: Result<Vec<Vec<f64>>> = rows.into_iter().collect();
    Policy::from_rows(n, pi.n_actions(), rows?)
}

/// Mirror-descent driver over a caller-supplied Q estimator.
///
/// Starts from the uniform policy, applies [`spmd_sweep`] each iteration,
/// and returns the last iterate. With `oracle` attached, records the
/// per-iteration sup-norm optimality gap.
pub fn spmd_run<F>(
    n_states: usize,
    n_actions: usize,
    mut q_estimator: F,
    config: &SpmdConfig,
    h: &Regularizer,
    oracle: Option<&TabularMdp>,
) -> Result<(Policy, RunRecord)>
where
    F: FnMut(&Policy, usize) -> Result<QFunction>,
{
    let mut record = RunRecord::new(vec!["iter", "gap_linf"]);
    let v_star = match oracle {
        Some(mdp) => Some(crate::mdp::solve_optimal(mdp, &Regularizer::None)?.1),
        None => None,
    };
    let gap_of = |pi: &Policy| -> Result<f64> {
        match (oracle, &v_star) {
            (Some(mdp), Some(vs)) => {
                let v = crate::mdp::exact_value(mdp, pi, h)?;
                Ok(v.iter().zip(vs).map(|(a, b)| a - b).fold(f64::MIN, f64::max))
            }
            _ => Ok(f64::NAN),
        }
    };
    let mut pi = Policy::uniform(n_states, n_actions);
    for t in 0..config.k {
        let q = q_estimator(&pi, t)?;
        pi = spmd_sweep(&pi, &q, h, config.eta(t), config.dgf)?;
        record.push_row(vec![t as f64, gap_of(&pi)?])?;
    }
    let final_gap = gap_of(&pi)?;
    record.summary = serde_json::json!({
        "iterations": config.k,
        "final_gap_linf": if final_gap.is_nan() { None } else { Some(final_gap) },
    });
    Ok((pi, record))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bregman_vanishes_on_the_diagonal() {
        for dgf in [DistanceGenerator::Kl, DistanceGenerator::tsallis(0.5).unwrap()] {
            let u = [0.3, 0.7];
            assert!(bregman(dgf, &u, &u).unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn bregman_tsallis_hand_value() {
        // p = 1/2, u = (0.25, 0.75), v = (0.5, 0.5)
        let d = bregman(DistanceGenerator::tsallis(0.5).unwrap(), &[0.25, 0.75], &[0.5, 0.5]).unwrap();
        assert!((d - 0.22990).abs() < 1e-4, "got {d}");
    }

    #[test]
    fn bregman_kl_matches_direct_formula_at_clipped_vertex() {
        let u = [0.5, 0.5];
        let v = [1.0, 0.0];
        let d = bregman(DistanceGenerator::Kl, &u, &v).unwrap();
        let direct: f64 = v
            .iter()
            .zip(&u)
            .filter(|(&vi, _)| vi > 0.0)
            .map(|(&vi, &ui)| vi * (vi / ui).ln())
            .sum();
        assert!((d - direct).abs() < 1e-9, "d={d} direct={direct}");
    }

    #[test]
    fn bregman_rejects_off_simplex() {
        assert!(bregman(DistanceGenerator::Kl, &[0.5, 0.4], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn prox_with_tiny_eta_stays_at_anchor() {
        let pi = [0.3, 0.7];
        let q = [5.0, -1.0];
        for dgf in [DistanceGenerator::Kl, DistanceGenerator::tsallis(0.4).unwrap()] {
            let out = spmd_step(&pi, &q, &Regularizer::None, 1e-12, dgf).unwrap();
            for (o, p) in out.iter().zip(&pi) {
                assert!((o - p).abs() < 1e-6, "{out:?}");
            }
        }
    }

    #[test]
    fn prox_with_constant_q_returns_anchor_exactly() {
        let pi = [0.3, 0.7];
        let q = [2.5, 2.5];
        for dgf in [DistanceGenerator::Kl, DistanceGenerator::tsallis(0.5).unwrap()] {
            let out = spmd_step(&pi, &q, &Regularizer::None, 1.0, dgf).unwrap();
            assert_eq!(out, pi.to_vec());
        }
    }

    #[test]
    fn kl_prox_matches_multiplicative_weights() {
        let pi = [0.2, 0.5, 0.3];
        let q = [1.0, -0.5, 0.25];
        let eta = 0.7;
        let out = spmd_step(&pi, &q, &Regularizer::None, eta, DistanceGenerator::Kl).unwrap();
        let mut expect: Vec<f64> = pi.iter().zip(&q).map(|(&p, &qa)| p * (-eta * qa).exp()).collect();
        let s: f64 = expect.iter().sum();
        for x in &mut expect {
            *x /= s;
        }
        for (o, e) in out.iter().zip(&expect) {
            assert!((o - e).abs() < 1e-9);
        }
    }

    #[test]
    fn tsallis_prox_satisfies_kkt_stationarity() {
        let pi = [0.25, 0.25, 0.5];
        let q = [0.9, 0.1, 0.4];
        let eta = 0.8;
        let p = 0.5;
        let dgf = DistanceGenerator::tsallis(p).unwrap();
        let out = spmd_step(&pi, &q, &Regularizer::None, eta, dgf).unwrap();
        let sum: f64 = out.iter().sum();
        assert!((sum - 1.0).abs() < 1e-10);
        // implied multiplier must agree across coordinates on the support
        let lam: Vec<f64> = (0..3)
            .map(|a| -q[a] - (dgf.grad(out[a]) - dgf.grad(pi[a])) / eta)
            .collect();
        let spread = lam.iter().cloned().fold(f64::MIN, f64::max)
            - lam.iter().cloned().fold(f64::MAX, f64::min);
        assert!(spread < 1e-8, "multiplier spread {spread}");
    }

    #[test]
    fn tsallis_prox_with_entropy_regularizer_stays_feasible() {
        let pi = [0.6, 0.4];
        let q = [0.2, 0.9];
        let h = Regularizer::Entropy { tau: 0.3 };
        let out = spmd_step(&pi, &q, &h, 0.5, DistanceGenerator::tsallis(0.3).unwrap()).unwrap();
        let sum: f64 = out.iter().sum();
        assert!((sum - 1.0).abs() < 1e-10);
        assert!(out.iter().all(|&x| x > 0.0));
        assert!(out[0] > out[1]);
    }

    #[test]
    fn prox_output_descends_against_random_candidates() {
        use rand::Rng;
        let mut rng = crate::rng::make_rng(3, 0);
        let dgf = DistanceGenerator::tsallis(0.5).unwrap();
        let pi = [0.2, 0.3, 0.5];
        let q = [0.4, 0.1, 0.8];
        let eta = 1.3;
        let h = Regularizer::None;
        let out = spmd_step(&pi, &q, &h, eta, dgf).unwrap();
        let objective = |v: &[f64]| -> f64 {
            let lin: f64 = v.iter().zip(&q).map(|(a, b)| a * b).sum();
            lin + h.eval(v) + bregman(dgf, &pi, v).unwrap() / eta
        };
        let f_out = objective(&out);
        for _ in 0..1000 {
            let mut cand = crate::rng::sample_simplex(&mut rng, 3);
            for c in &mut cand {
                *c = c.max(1e-9);
            }
            let s: f64 = cand.iter().sum();
            for c in &mut cand {
                *c /= s;
            }
            assert!(f_out <= objective(&cand) + 1e-9);
        }
    }

    #[test]
    fn initial_bregman_diameter_bound() {
        // uniform anchor to a deterministic vertex, p in (0, 1/2]
        for &na in &[2usize, 3, 5] {
            for &p in &[0.2, 0.5] {
                let dgf = DistanceGenerator::tsallis(p).unwrap();
                let uniform = vec![1.0 / na as f64; na];
                let mut vertex = vec![0.0; na];
                vertex[0] = 1.0;
                let d = bregman(dgf, &uniform, &vertex).unwrap();
                let exact = ((na as f64).powf(1.0 - p) - 1.0) / ((1.0 - p) * p);
                let bound = (na as f64).powf(1.0 - p) / ((1.0 - p) * p);
                assert!((d - exact).abs() < 1e-6, "d={d} exact={exact}");
                assert!(d <= bound);
            }
        }
    }

    #[test]
    fn tsallis_index_formula() {
        assert!((tsallis_index(0.75) - 0.5).abs() < 1e-12);
        assert!((tsallis_index(0.9) - 1.0 / (10.0f64).log2()).abs() < 1e-12);
        assert_eq!(tsallis_index(0.5), 0.5); // clamped
    }

    #[test]
    fn spmd_run_with_exact_q_reduces_gap() {
        use crate::instances::gen_garnet;
        use crate::mdp::{exact_q, exact_value, solve_optimal};
        let mdp = gen_garnet(3, 2, 3, 0, 0.8).unwrap();
        let h = Regularizer::None;
        let config = SpmdConfig::new(
            1.0,
            500,
            StepsizeSchedule::ConstantOverSqrtK,
            DistanceGenerator::tsallis(tsallis_index(0.8)).unwrap(),
        )
        .unwrap();
        let (pi_k, record) =
            spmd_run(3, 2, |pi, _| exact_q(&mdp, pi, &h), &config, &h, Some(&mdp)).unwrap();
        let (_, v_star) = solve_optimal(&mdp, &h).unwrap();
        let v0 = exact_value(&mdp, &Policy::uniform(3, 2), &h).unwrap();
        let gap0 = v0.iter().zip(&v_star).map(|(a, b)| a - b).fold(f64::MIN, f64::max);
        let vk = exact_value(&mdp, &pi_k, &h).unwrap();
        let gapk = vk.iter().zip(&v_star).map(|(a, b)| a - b).fold(f64::MIN, f64::max);
        assert!(gapk <= 0.05 * gap0, "gap0={gap0} gapk={gapk}");
        assert!(record.last_value("gap_linf").unwrap() <= gap0);
    }

    #[test]
    fn single_state_run_has_zero_gap() {
        let mdp = TabularMdp::new(1, 1, 0.5, vec![1.0], vec![0.4]).unwrap();
        let h = Regularizer::None;
        let config = SpmdConfig::new(
            1.0,
            4,
            StepsizeSchedule::Anytime,
            DistanceGenerator::Kl,
        )
        .unwrap();
        let (_, record) =
            spmd_run(1, 1, |pi, _| crate::mdp::exact_q(&mdp, pi, &h), &config, &h, Some(&mdp))
                .unwrap();
        assert!(record.last_value("gap_linf").unwrap().abs() < 1e-10);
    }

    #[test]
    fn constant_cost_mdp_keeps_zero_gap_throughout() {
        let mdp = TabularMdp::new(
            2,
            2,
            0.7,
            vec![0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5],
            vec![0.3, 0.3, 0.3, 0.3],
        )
        .unwrap();
        let h = Regularizer::None;
        let config = SpmdConfig::new(
            0.5,
            10,
            StepsizeSchedule::ConstantOverSqrtK,
            DistanceGenerator::tsallis(0.5).unwrap(),
        )
        .unwrap();
        let (_, record) =
            spmd_run(2, 2, |pi, _| crate::mdp::exact_q(&mdp, pi, &h), &config, &h, Some(&mdp))
                .unwrap();
        for g in record.column("gap_linf").unwrap() {
            assert!(g.abs() < 1e-9);
        }
    }
}
