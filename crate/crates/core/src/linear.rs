//! Linear function approximation: feature maps, the flexible weighting
//! distribution, the deterministic operator `F` with its direct-solve
//! oracle, the three-step stochastic operator, anytime conditional TD, and
//! robust min-norm aggregation.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::linalg;
use crate::mdp::{Policy, QFunction, TabularMdp};
use crate::rng::make_rng;
use crate::sampler::SampleStream;

/// Full-column-rank feature table over state-action pairs, with its
/// spectral norm and smallest singular value cached.
#[derive(Debug, Clone)]
pub struct FeatureMap {
    n_pairs: usize,
    d: usize,
    /// Row-major `|Z| x d`.
    rows: Vec<f64>,
    omega: f64,
    sigma_min: f64,
}

#[derive(Serialize, Deserialize)]
struct FeatureDocument {
    d: usize,
    rows: Vec<Vec<f64>>,
}

impl FeatureMap {
    pub fn new(n_pairs: usize, d: usize, rows: Vec<f64>) -> Result<Self> {
        if d == 0 || d > n_pairs {
            return Err(CoreError::InvalidInput(format!("feature size {d} outside [1, {n_pairs}]")));
        }
        if rows.len() != n_pairs * d {
            return Err(CoreError::InvalidInput("feature table has wrong shape".into()));
        }
        let m = DMatrix::from_row_slice(n_pairs, d, &rows);
        let (omega, sigma_min) = linalg::singular_extremes(&m)?;
        if sigma_min <= 1e-10 {
            return Err(CoreError::InvalidInput(format!(
                "features are rank deficient (sigma_min = {sigma_min:.3e})"
            )));
        }
        Ok(Self { n_pairs, d, rows, omega, sigma_min })
    }

    /// Identity features: one indicator per pair, `d = |Z|`.
    pub fn identity(n_pairs: usize) -> Self {
        let mut rows = vec![0.0; n_pairs * n_pairs];
        for z in 0..n_pairs {
            rows[z * n_pairs + z] = 1.0;
        }
        Self { n_pairs, d: n_pairs, rows, omega: 1.0, sigma_min: 1.0 }
    }

    /// One indicator per state shared by its actions (rank |S| over pairs
    /// grouped as `z = s * |A| + a`); full column rank with `d = |S|`.
    pub fn one_hot_state(n_states: usize, n_actions: usize) -> Self {
        let n_pairs = n_states * n_actions;
        let mut rows = vec![0.0; n_pairs * n_states];
        for s in 0..n_states {
            for a in 0..n_actions {
                rows[(s * n_actions + a) * n_states + s] = 1.0;
            }
        }
        let na = n_actions as f64;
        Self { n_pairs, d: n_states, rows, omega: na.sqrt(), sigma_min: na.sqrt() }
    }

    /// Dense i.i.d. Gaussian features with a fixed seed.
    pub fn gaussian(n_pairs: usize, d: usize, seed: u64) -> Result<Self> {
        let mut rng = make_rng(seed, 0);
        let rows: Vec<f64> = (0..n_pairs * d).map(|_| StandardNormal.sample(&mut rng)).collect();
        Self::new(n_pairs, d, rows)
    }

    pub fn n_pairs(&self) -> usize {
        self.n_pairs
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Spectral norm of the feature matrix.
    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn sigma_min(&self) -> f64 {
        self.sigma_min
    }

    pub fn phi(&self, z: usize) -> &[f64] {
        &self.rows[z * self.d..(z + 1) * self.d]
    }

    pub fn as_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n_pairs, self.d, &self.rows)
    }

    /// `Q_theta = Phi theta` as a Q table.
    pub fn q_from_theta(&self, n_states: usize, n_actions: usize, theta: &[f64]) -> QFunction {
        debug_assert_eq!(n_states * n_actions, self.n_pairs);
        let values = (0..self.n_pairs).map(|z| dot(self.phi(z), theta)).collect();
        QFunction::from_values(n_states, n_actions, values)
    }

    pub fn to_json(&self) -> String {
        let doc = FeatureDocument {
            d: self.d,
            rows: (0..self.n_pairs).map(|z| self.phi(z).to_vec()).collect(),
        };
        serde_json::to_string_pretty(&doc).expect("feature serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: FeatureDocument = serde_json::from_str(text)
            .map_err(|e| CoreError::InvalidInput(format!("bad feature document: {e}")))?;
        let n_pairs = doc.rows.len();
        let rows = doc.rows.into_iter().flatten().collect();
        Self::new(n_pairs, doc.d, rows)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// The weighting distribution over pairs, its parameters, and the derived
/// curvature `mu = lambda_min(Phi^T W Phi)`.
#[derive(Debug, Clone)]
pub struct WeightModel {
    pub w: Vec<f64>,
    pub s_or: usize,
    pub f: f64,
    pub eps_action: f64,
    pub mu: f64,
}

impl WeightModel {
    pub fn min_weight(&self) -> f64 {
        self.w.iter().cloned().fold(f64::MAX, f64::min)
    }

    /// `||u||_W = sqrt(sum_z w(z) u(z)^2)`.
    pub fn w_norm(&self, u: &[f64]) -> f64 {
        u.iter().zip(&self.w).map(|(x, w)| w * x * x).sum::<f64>().sqrt()
    }
}

/// Action-exploration mixture `(1-eps) pi + eps / |A|`.
pub fn perturb_action_policy(pi: &Policy, eps: f64) -> Policy {
    let na = pi.n_actions() as f64;
    let probs = pi
        .rows()
        .flat_map(|row| row.iter().map(move |&p| (1.0 - eps) * p + eps / na))
        .collect();
    Policy::new(pi.n_states(), pi.n_actions(), probs).expect("mixture stays row-stochastic")
}

/// State-exploration mixture `(1-eps) pi + eps / |S|`, renormalized.
///
/// The raw mixture sums to `1 - eps + eps |A| / |S|` per row, which is not
/// 1 when `|S| != |A|`; rows are rescaled to sum to 1, which keeps the
/// `eps/|S|` floor up to a factor of 2 for `eps <= 1/2`.
pub fn perturb_state_policy(pi: &Policy, eps: f64) -> Policy {
    let ns = pi.n_states() as f64;
    let na = pi.n_actions() as f64;
    let norm = 1.0 - eps + eps * na / ns;
    let probs = pi
        .rows()
        .flat_map(|row| row.iter().map(move |&p| ((1.0 - eps) * p + eps / ns) / norm))
        .collect();
    Policy::new(pi.n_states(), pi.n_actions(), probs).expect("mixture stays row-stochastic")
}

/// Build the weighting distribution `w(z) = kappa_{s_or,f}(s) *
/// pi_explore(a|s)` and cache `mu`.
pub fn build_weights(
    mdp: &TabularMdp,
    pi: &Policy,
    fmap: &FeatureMap,
    s_or: usize,
    f: f64,
    eps_action: f64,
) -> Result<WeightModel> {
    if !(0.0..=1.0).contains(&eps_action) {
        return Err(CoreError::InvalidInput(format!("eps_action {eps_action} outside [0,1]")));
    }
    let kappa = crate::mdp::mixed_visitation(mdp, pi, s_or, f)?;
    let tpi = perturb_action_policy(pi, eps_action);
    let na = mdp.n_actions();
    let mut w = vec![0.0; mdp.n_pairs()];
    for s in 0..mdp.n_states() {
        for a in 0..na {
            w[s * na + a] = kappa[s] * tpi.prob(s, a);
        }
    }
    let phi = fmap.as_matrix();
    let wphi = {
        let mut m = phi.clone();
        for z in 0..mdp.n_pairs() {
            for j in 0..fmap.d() {
                m[(z, j)] *= w[z];
            }
        }
        m
    };
    let gram = phi.transpose() * wphi;
    let mu = linalg::symmetric_lambda_min(&gram);
    if mu <= 1e-14 {
        return Err(CoreError::InvalidInput(format!(
            "weighted Gram matrix is not positive definite (mu = {mu:.3e})"
        )));
    }
    Ok(WeightModel { w, s_or, f, eps_action, mu })
}

/// Pair kernel applied to a Q vector:
/// `(P^pi q)(s,a) = sum_{s'} P(s'|s,a) sum_{a'} pi(a'|s') q(s',a')`.
pub fn pair_kernel_apply(mdp: &TabularMdp, pi: &Policy, q: &[f64]) -> Vec<f64> {
    let ns = mdp.n_states();
    let na = mdp.n_actions();
    let mut state_avg = vec![0.0; ns];
    for s in 0..ns {
        for a in 0..na {
            state_avg[s] += pi.prob(s, a) * q[s * na + a];
        }
    }
    let mut out = vec![0.0; ns * na];
    for s in 0..ns {
        for a in 0..na {
            let row = mdp.transition_row(s, a);
            out[s * na + a] = row.iter().zip(&state_avg).map(|(p, v)| p * v).sum();
        }
    }
    out
}

/// Deterministic operator `F(theta) = Phi^T W (Phi theta - c - gamma P^pi
/// Phi theta)`.
pub fn exact_f(
    mdp: &TabularMdp,
    pi: &Policy,
    fmap: &FeatureMap,
    wm: &WeightModel,
    theta: &[f64],
) -> Vec<f64> {
    let na = mdp.n_actions();
    let nz = mdp.n_pairs();
    let q: Vec<f64> = (0..nz).map(|z| dot(fmap.phi(z), theta)).collect();
    let pq = pair_kernel_apply(mdp, pi, &q);
    let mut out = vec![0.0; fmap.d()];
    for z in 0..nz {
        let resid = wm.w[z] * (q[z] - mdp.cost(z / na, z % na) - mdp.gamma() * pq[z]);
        for (j, &p) in fmap.phi(z).iter().enumerate() {
            out[j] += p * resid;
        }
    }
    out
}

/// Direct solve of the projected Bellman system
/// `Phi^T W (I - gamma P^pi) Phi theta = Phi^T W c`.
pub fn solve_projected_bellman(
    mdp: &TabularMdp,
    pi: &Policy,
    fmap: &FeatureMap,
    wm: &WeightModel,
) -> Result<(Vec<f64>, QFunction)> {
    let nz = mdp.n_pairs();
    let na = mdp.n_actions();
    let d = fmap.d();
    // columns of (I - gamma P^pi) Phi via the kernel action
    let mut mcols = DMatrix::zeros(nz, d);
    for j in 0..d {
        let col: Vec<f64> = (0..nz).map(|z| fmap.phi(z)[j]).collect();
        let pcol = pair_kernel_apply(mdp, pi, &col);
        for z in 0..nz {
            mcols[(z, j)] = col[z] - mdp.gamma() * pcol[z];
        }
    }
    let phi = fmap.as_matrix();
    let mut wm_m = mcols;
    let mut wc = DVector::zeros(nz);
    for z in 0..nz {
        for j in 0..d {
            wm_m[(z, j)] *= wm.w[z];
        }
        wc[z] = wm.w[z] * mdp.cost(z / na, z % na);
    }
    let a = phi.transpose() * wm_m;
    let b = phi.transpose() * wc;
    let theta = linalg::solve_checked(&a, &b, 1e-10)?;
    let theta: Vec<f64> = theta.iter().cloned().collect();
    let q = fmap.q_from_theta(mdp.n_states(), na, &theta);
    Ok((theta, q))
}

/// Parameters of one conditional-TD run.
#[derive(Debug, Clone)]
pub struct CtdConfig {
    /// Half-run length: the loop runs `2n` iterations and averages the tail
    /// `n` iterates.
    pub n: usize,
    /// Stepsize.
    pub iota: f64,
    /// Geometric-mixing cap: horizons drawn at or above `m` contribute the
    /// zero vector.
    pub m: usize,
    pub s_or: usize,
    pub f: f64,
    pub eps_state: f64,
    pub eps_action: f64,
    /// Independent runs aggregated by [`robust_min_norm`].
    pub replicates: usize,
}

impl CtdConfig {
    /// The stepsize cap `(1-gamma) / (512 Omega^2)` under which the bias
    /// and variance bounds hold.
    pub fn iota_cap(gamma: f64, omega: f64) -> f64 {
        (1.0 - gamma) / (512.0 * omega * omega)
    }

    /// The mixing floor `log_{1/gamma}((Omega^2 + 1) |S|^{1/2} / mu)`.
    pub fn mixing_floor(gamma: f64, omega: f64, n_states: usize, mu: f64) -> usize {
        let v = ((omega * omega + 1.0) * (n_states as f64).sqrt() / mu).ln() / (1.0 / gamma).ln();
        v.ceil().max(1.0) as usize
    }
}

/// One draw of the three-step stochastic operator.
///
/// Step 1 samples an origin (the configured one w.p. `1-f`, uniform w.p.
/// `f`) from the auxiliary RNG and rolls the state-exploration policy until
/// hitting it. Step 2 draws a Geometric(1-gamma) horizon and, when it is
/// below the cap, rolls `pi` for that many steps. Step 3 plays one
/// action-exploration action, observes the cost and next state, draws one
/// on-policy action, and assembles the TD residual in feature space.
/// Horizons at or above the cap skip all three steps and return zero.
pub fn sample_f_hat(
    stream: &mut SampleStream<'_>,
    pi: &Policy,
    theta: &[f64],
    fmap: &FeatureMap,
    cfg: &CtdConfig,
) -> Result<(Vec<f64>, u64)> {
    let mdp = stream.mdp();
    let gamma = mdp.gamma();
    let na = mdp.n_actions();
    let before = stream.samples();

    let s_target = if cfg.f > 0.0 && stream.aux_f64() < cfg.f {
        stream.aux_index(mdp.n_states())
    } else {
        cfg.s_or
    };
    let horizon = stream.aux_geometric(gamma);
    if horizon >= cfg.m as u64 {
        return Ok((vec![0.0; fmap.d()], 0));
    }
    let explore = perturb_state_policy(pi, cfg.eps_state);
    while stream.state() != s_target {
        stream.step(&explore)?;
    }
    for _ in 0..horizon {
        stream.step(pi)?;
    }
    let tpia = perturb_action_policy(pi, cfg.eps_action);
    let tr = stream.step(&tpia)?;
    let z1 = tr.s * na + tr.a;
    let a2 = stream.draw_action(pi);
    let z2 = tr.s_next * na + a2;
    let resid = dot(fmap.phi(z1), theta) - tr.cost - gamma * dot(fmap.phi(z2), theta);
    let g = fmap.phi(z1).iter().map(|&p| p * resid).collect();
    Ok((g, stream.samples() - before))
}

/// Anytime conditional TD: `2n` fixed-stepsize iterations from `theta_0 =
/// 0`, returning `Phi` applied to the average of the tail `n` iterates.
pub fn ctd_run(
    stream: &mut SampleStream<'_>,
    pi: &Policy,
    fmap: &FeatureMap,
    cfg: &CtdConfig,
) -> Result<QFunction> {
    let d = fmap.d();
    let mut theta = vec![0.0; d];
    let mut tail = vec![0.0; d];
    for t in 0..2 * cfg.n {
        if t >= cfg.n {
            for (acc, th) in tail.iter_mut().zip(&theta) {
                *acc += th;
            }
        }
        let (g, _) = sample_f_hat(stream, pi, &theta, fmap, cfg)?;
        for (th, gi) in theta.iter_mut().zip(&g) {
            *th -= cfg.iota * gi;
        }
    }
    for acc in &mut tail {
        *acc /= cfg.n as f64;
    }
    Ok(fmap.q_from_theta(stream.mdp().n_states(), stream.mdp().n_actions(), &tail))
}

/// Among candidate Q tables, the one with smallest sup norm; ties break
/// toward the lowest index.
pub fn robust_min_norm(candidates: &[QFunction]) -> Result<QFunction> {
    let mut best: Option<(usize, f64)> = None;
    for (i, q) in candidates.iter().enumerate() {
        let norm = q.linf_norm();
        match best {
            Some((_, b)) if norm >= b => {}
            _ => best = Some((i, norm)),
        }
    }
    match best {
        Some((i, _)) => Ok(candidates[i].clone()),
        None => Err(CoreError::EmptyCandidates),
    }
}
