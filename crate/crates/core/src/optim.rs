//! Loss functions, analytic subgradients through the SDP certificates, Adam
//! updates, and the training loop.
//!
//! The gradient path avoids differentiating through the solver: for
//! `ζ(C) = min_σ Tr(σC)` the optimal witness σ* is an exact subgradient of
//! the concave value function, so each active hinge contributes its witness
//! (Danskin's rule). The eigenvalue-bound term ξ uses first-order eigenvalue
//! perturbation through the transfer matrix instead.

use ndarray::Array2;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::choi::{build_choi, ChoiMatrix, ChoiParams};
use crate::error::{Error, Result};
use crate::sdp::{CertEngine, Certificate, SolverOptions};
use crate::tensor::{
    eig_general, max_ent_vector, reshuffle, unreshuffle, CMat, Herm,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossMode {
    Main,
    Bound,
    PptSquare,
    DecomposableGen,
}

/// Hinge weights and margins of the training losses.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LossConfig {
    pub epsilon: f64,
    pub gamma: f64,
    /// Positivity margin used by the bound-violation loss.
    pub delta: f64,
    /// Weight of the eigenvalue-bound hinge.
    pub omega: f64,
    /// Margin of the eigenvalue-bound hinge.
    pub nu: f64,
    pub k: usize,
    pub mode: LossMode,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            epsilon: 0.05,
            gamma: 2.0,
            delta: 0.01,
            omega: 1.0,
            nu: 0.01,
            k: 2,
            mode: LossMode::Main,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epsilon <= 0.0 || self.gamma <= 0.0 {
            return Err(Error::Input(
                "epsilon and gamma must be positive".into(),
            ));
        }
        if self.delta < 0.0 || self.omega < 0.0 || self.nu < 0.0 {
            return Err(Error::Input("delta, omega, nu must be non-negative".into()));
        }
        if self.k < 2 {
            return Err(Error::Input("hierarchy level k must be >= 2".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub seed: u64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            max_epochs: 2000,
            seed: 0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 {
            return Err(Error::Input("learning rate must be positive".into()));
        }
        if self.max_epochs == 0 {
            return Err(Error::Input("max_epochs must be >= 1".into()));
        }
        Ok(())
    }
}

fn relu(x: f64) -> f64 {
    x.max(0.0)
}

/// Loss and certificates of the main objective
/// `ReLU(ε + ζ₁) + γ ReLU(−ζ_k)`.
#[derive(Debug, Clone)]
pub struct MainLoss {
    pub loss: f64,
    pub zeta1: Certificate,
    pub zetak: Certificate,
}

/// Main loss extended by the eigenvalue-bound hinge
/// `ReLU(ε + ζ₁) + γ ReLU(δ − ζ_k) + ω ReLU(ν + ξ)`.
#[derive(Debug, Clone)]
pub struct BoundLoss {
    pub loss: f64,
    pub zeta1: Certificate,
    pub zetak: Certificate,
    pub xi: XiValue,
}

/// ξ(C) = −Tr Φ + d·min Re σ(Φ) + d² − d; negative means the trace bound for
/// 2-positive TP maps is violated.
#[derive(Debug, Clone)]
pub struct XiValue {
    pub value: f64,
    pub trace_phi: f64,
    pub min_re: f64,
    /// Minimal-real-part eigenvalue nearly degenerate (gap < 1e−9).
    pub degenerate: bool,
}

pub fn xi(c: &ChoiMatrix) -> Result<XiValue> {
    if c.d_in() != c.d_out() {
        return Err(Error::Input(
            "the eigenvalue bound applies to square maps only".into(),
        ));
    }
    let d = c.d_in();
    let m = reshuffle(c.herm(), d, d)?;
    let tr: C64 = (0..d * d).map(|i| m[(i, i)]).sum();
    let eig = eig_general(&m)?;
    let mut idx = 0;
    for i in 1..eig.values.len() {
        if eig.values[i].re < eig.values[idx].re {
            idx = i;
        }
    }
    let min_re = eig.values[idx].re;
    let mut degenerate = false;
    for i in 0..eig.values.len() {
        if i != idx && (eig.values[i].re - min_re).abs() < 1e-9 {
            degenerate = true;
        }
    }
    let value = -tr.re + (d as f64) * min_re + (d * d - d) as f64;
    Ok(XiValue {
        value,
        trace_phi: tr.re,
        min_re,
        degenerate,
    })
}

/// Hermitian gradient of ξ with respect to the Choi matrix, via first-order
/// perturbation of the minimal-real-part transfer-matrix eigenvalue. At a
/// degenerate eigenvalue the first one in sorted order is used (a subgradient
/// choice) and the degeneracy is flagged.
pub fn xi_gradient(c: &ChoiMatrix) -> Result<(Herm, bool)> {
    if c.d_in() != c.d_out() {
        return Err(Error::Input(
            "the eigenvalue bound applies to square maps only".into(),
        ));
    }
    let d = c.d_in();
    let m = reshuffle(c.herm(), d, d)?;
    let eig = eig_general(&m)?;
    let mut idx = 0;
    for i in 1..eig.values.len() {
        if eig.values[i].re < eig.values[idx].re {
            idx = i;
        }
    }
    let min_re = eig.values[idx].re;
    let mut degenerate = false;
    for i in 0..eig.values.len() {
        if i != idx && (eig.values[i].re - min_re).abs() < 1e-9 {
            degenerate = true;
        }
    }
    let u = eig.left.column(idx).to_owned();
    let v = eig.right.column(idx).to_owned();
    let denom: C64 = u.iter().zip(v.iter()).map(|(a, b)| a.conj() * b).sum();
    if denom.norm() < 1e-12 {
        degenerate = true;
    }
    let n = d * d;
    // dλ/dM[a,b] = conj(u_a) v_b / (u†v)
    let mut w = CMat::zeros((n, n));
    for a in 0..n {
        for b in 0..n {
            w[(a, b)] = u[a].conj() * v[b] / denom;
        }
    }
    // transport onto Choi indices and hermitize the Re[λ] pairing
    let gt = unreshuffle(&w, d, d)?;
    let mut g = CMat::zeros((n, n));
    for r in 0..n {
        for cc in 0..n {
            g[(r, cc)] = 0.5 * (gt[(r, cc)].conj() + gt[(cc, r)]);
        }
    }
    // ∇ξ = −|ψ⟩⟨ψ| + d·G
    let psi = max_ent_vector(d);
    let proj = Herm::outer(&psi);
    let grad = Herm::from_exact(g)
        .scale(d as f64)
        .add(&proj.scale(-1.0));
    Ok((grad, degenerate))
}

/// Certificate evaluation with template reuse across epochs.
pub struct LossEvaluator {
    pub engine: CertEngine,
    pub opts: SolverOptions,
}

impl LossEvaluator {
    pub fn new(opts: SolverOptions) -> Self {
        LossEvaluator {
            engine: CertEngine::new(),
            opts,
        }
    }

    pub fn eval_main(&mut self, c: &ChoiMatrix, cfg: &LossConfig) -> Result<MainLoss> {
        let zeta1 = self.engine.zeta1(c, &self.opts)?;
        let zetak = self.engine.zeta_k(c, cfg.k, &self.opts)?;
        if !zeta1.status.usable() || !zetak.status.usable() {
            return Err(Error::Solver("certificate solve failed".into()));
        }
        let loss = relu(cfg.epsilon + zeta1.value) + cfg.gamma * relu(-zetak.value);
        Ok(MainLoss { loss, zeta1, zetak })
    }

    pub fn eval_bound(&mut self, c: &ChoiMatrix, cfg: &LossConfig) -> Result<BoundLoss> {
        let zeta1 = self.engine.zeta1(c, &self.opts)?;
        let zetak = self.engine.zeta_k(c, cfg.k, &self.opts)?;
        if !zeta1.status.usable() || !zetak.status.usable() {
            return Err(Error::Solver("certificate solve failed".into()));
        }
        let xi_val = xi(c)?;
        let loss = relu(cfg.epsilon + zeta1.value)
            + cfg.gamma * relu(cfg.delta - zetak.value)
            + cfg.omega * relu(cfg.nu + xi_val.value);
        Ok(BoundLoss {
            loss,
            zeta1,
            zetak,
            xi: xi_val,
        })
    }
}

/// One-shot wrappers.
pub fn loss_main(c: &ChoiMatrix, cfg: &LossConfig, opts: &SolverOptions) -> Result<MainLoss> {
    LossEvaluator::new(opts.clone()).eval_main(c, cfg)
}

pub fn loss_bound(c: &ChoiMatrix, cfg: &LossConfig, opts: &SolverOptions) -> Result<BoundLoss> {
    LossEvaluator::new(opts.clone()).eval_bound(c, cfg)
}

/// Convert a Hermitian gradient over the Choi matrix into the raw gradient
/// over the parameter tensor: `∂L/∂X[r,c] = Re G[r,c] + Im G[r,c]`.
pub fn herm_grad_to_params(g: &Herm) -> Array2<f64> {
    let n = g.dim();
    Array2::from_shape_fn((n, n), |(r, c)| g.mat()[(r, c)].re + g.mat()[(r, c)].im)
}

/// Assemble the loss subgradient with respect to the free parameters.
///
/// `xi_term` carries the ξ value and its Hermitian gradient when the bound
/// hinge participates. Hinges exactly at zero are treated as inactive.
pub fn subgradient(
    params: &ChoiParams,
    cfg: &LossConfig,
    zeta1: &Certificate,
    zetak: &Certificate,
    xi_term: Option<(f64, &Herm)>,
) -> Array2<f64> {
    let n = params.dim();
    let mut g = Herm::zeros(n);
    if cfg.epsilon + zeta1.value > 0.0 {
        g = g.add(&zeta1.witness);
    }
    let delta = if cfg.mode == LossMode::Bound { cfg.delta } else { 0.0 };
    if delta - zetak.value > 0.0 {
        g = g.add(&zetak.witness.scale(-cfg.gamma));
    }
    if let Some((xi_value, xi_grad)) = xi_term {
        if cfg.nu + xi_value > 0.0 {
            g = g.add(&xi_grad.scale(cfg.omega));
        }
    }
    params.fold_gradient(herm_grad_to_params(&g))
}

/// Adam optimizer state congruent with the parameter tensor.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub m: Array2<f64>,
    pub v: Array2<f64>,
    pub t: usize,
}

impl AdamState {
    pub fn new(shape: (usize, usize)) -> Self {
        AdamState {
            m: Array2::zeros(shape),
            v: Array2::zeros(shape),
            t: 0,
        }
    }
}

/// Standard Adam update with bias correction; structural projection keeps
/// masked and TP-dependent slots untouched.
pub fn adam_step(
    params: &mut ChoiParams,
    grad: &Array2<f64>,
    state: &mut AdamState,
    cfg: &TrainConfig,
) {
    state.t += 1;
    let t = state.t as i32;
    let b1 = cfg.adam_beta1;
    let b2 = cfg.adam_beta2;
    let bc1 = 1.0 - b1.powi(t);
    let bc2 = 1.0 - b2.powi(t);
    let n = params.dim();
    for r in 0..n {
        for c in 0..n {
            let g = grad[(r, c)];
            let m = b1 * state.m[(r, c)] + (1.0 - b1) * g;
            let v = b2 * state.v[(r, c)] + (1.0 - b2) * g * g;
            state.m[(r, c)] = m;
            state.v[(r, c)] = v;
            let mhat = m / bc1;
            let vhat = v / bc2;
            params.x[(r, c)] -= cfg.learning_rate * mhat / (vhat.sqrt() + cfg.adam_eps);
        }
    }
    params.apply_structure();
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Success,
    Exhausted,
    SolverFailed,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochRow {
    pub epoch: usize,
    pub loss: f64,
    pub zeta1: f64,
    pub zetak: f64,
    pub xi: Option<f64>,
    pub wall_s: f64,
}

/// Full record of one training run.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub rows: Vec<EpochRow>,
    pub outcome: Outcome,
    /// 1-based epoch at which the loss first vanished (evaluated before the
    /// parameter update).
    pub success_epoch: Option<usize>,
    pub final_choi: ChoiMatrix,
}

impl RunRecord {
    pub fn csv(&self) -> String {
        let mut out = String::from("epoch,loss,zeta1,zetak,xi,wall_s\n");
        for r in &self.rows {
            let xi = r.xi.map(|x| format!("{x}")).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.epoch, r.loss, r.zeta1, r.zetak, xi, r.wall_s
            ));
        }
        out
    }

    /// Numerically comparable view: trajectory without wall-clock columns.
    pub fn trajectory(&self) -> Vec<(usize, f64, f64, f64, Option<f64>)> {
        self.rows
            .iter()
            .map(|r| (r.epoch, r.loss, r.zeta1, r.zetak, r.xi))
            .collect()
    }
}

/// Relaxed tolerances used for in-loop solves; candidate successes and final
/// artifacts are always confirmed at the configured tolerances.
fn training_opts(opts: &SolverOptions) -> SolverOptions {
    let mut o = opts.clone();
    o.feasibility_tol = (opts.feasibility_tol * 100.0).min(1e-6);
    o.duality_gap_tol = (opts.duality_gap_tol * 100.0).min(1e-6);
    o
}

/// Run the main (or bound-mode) training loop.
///
/// Each epoch evaluates the certificates on the current Choi matrix, records
/// the loss, and stops with success when the loss vanishes (confirmed by a
/// re-solve at full tolerance); otherwise one Adam step is taken. Epochs are
/// 1-based; a run whose initial point already has zero loss succeeds at
/// epoch 1.
pub fn train_loop(
    init: &ChoiParams,
    loss_cfg: &LossConfig,
    train_cfg: &TrainConfig,
    solver_opts: &SolverOptions,
) -> Result<RunRecord> {
    loss_cfg.validate()?;
    train_cfg.validate()?;
    if loss_cfg.mode == LossMode::Bound && init.d_in != init.d_out {
        return Err(Error::Input(
            "bound mode requires equal input and output dimensions".into(),
        ));
    }

    let mut params = init.clone();
    params.apply_structure();
    let mut state = AdamState::new((params.dim(), params.dim()));
    let mut relaxed = LossEvaluator::new(training_opts(solver_opts));
    let mut tight = LossEvaluator::new(solver_opts.clone());

    let mut rows = Vec::new();
    let mut outcome = Outcome::Exhausted;
    let mut success_epoch = None;
    let mut final_choi = build_choi(&params)?;

    for epoch in 1..=train_cfg.max_epochs {
        let t0 = std::time::Instant::now();
        let c = build_choi(&params)?;
        let use_bound = loss_cfg.mode == LossMode::Bound;

        let eval = if use_bound {
            relaxed.eval_bound(&c, loss_cfg)
        } else {
            relaxed.eval_main(&c, loss_cfg).map(|m| BoundLoss {
                loss: m.loss,
                zeta1: m.zeta1,
                zetak: m.zetak,
                xi: XiValue {
                    value: f64::NAN,
                    trace_phi: f64::NAN,
                    min_re: f64::NAN,
                    degenerate: false,
                },
            })
        };
        let mut eval = match eval {
            Ok(e) => e,
            Err(Error::Solver(msg)) => {
                log::warn!("epoch {epoch}: solver failure: {msg}");
                outcome = Outcome::SolverFailed;
                final_choi = c;
                break;
            }
            Err(e) => return Err(e),
        };

        if eval.loss <= 0.0 {
            // confirm at full tolerance before declaring success
            let confirm = if use_bound {
                tight.eval_bound(&c, loss_cfg)
            } else {
                tight.eval_main(&c, loss_cfg).map(|m| BoundLoss {
                    loss: m.loss,
                    zeta1: m.zeta1,
                    zetak: m.zetak,
                    xi: eval.xi.clone(),
                })
            };
            match confirm {
                Ok(conf) => {
                    eval = conf;
                    if eval.loss <= 0.0 {
                        rows.push(EpochRow {
                            epoch,
                            loss: eval.loss,
                            zeta1: eval.zeta1.value,
                            zetak: eval.zetak.value,
                            xi: use_bound.then_some(eval.xi.value),
                            wall_s: t0.elapsed().as_secs_f64(),
                        });
                        outcome = Outcome::Success;
                        success_epoch = Some(epoch);
                        final_choi = c;
                        break;
                    }
                }
                Err(Error::Solver(msg)) => {
                    log::warn!("epoch {epoch}: confirmation solve failed: {msg}");
                    outcome = Outcome::SolverFailed;
                    final_choi = c;
                    break;
                }
                Err(e) => return Err(e),
            }
        }

        let xi_term = if use_bound {
            if eval.xi.degenerate {
                log::warn!("epoch {epoch}: near-degenerate transfer spectrum in xi gradient");
            }
            Some(xi_gradient(&c)?)
        } else {
            None
        };
        let grad = subgradient(
            &params,
            loss_cfg,
            &eval.zeta1,
            &eval.zetak,
            xi_term.as_ref().map(|(g, _)| (eval.xi.value, g)),
        );
        adam_step(&mut params, &grad, &mut state, train_cfg);

        rows.push(EpochRow {
            epoch,
            loss: eval.loss,
            zeta1: eval.zeta1.value,
            zetak: eval.zetak.value,
            xi: use_bound.then_some(eval.xi.value),
            wall_s: t0.elapsed().as_secs_f64(),
        });
        final_choi = c;
    }

    Ok(RunRecord {
        rows,
        outcome,
        success_epoch,
        final_choi,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::choi::{transposition_choi, FamilyParams};
    use crate::tensor::ZERO;
        use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn xi_known_values() {
        // identity map: Tr Φ = d², eigenvalues all 1 -> ξ = 0
        for d in [2usize, 3] {
            let c = crate::choi::identity_choi(d);
            let x = xi(&c).unwrap();
            assert!((x.trace_phi - (d * d) as f64).abs() < 1e-10);
            assert!(x.value.abs() < 1e-9, "identity d={d}: xi = {}", x.value);
        }
        // transposition: d=2 -> ξ = −2 (violated); d=3 -> ξ = 0
        let x = xi(&transposition_choi(2)).unwrap();
        assert!((x.value + 2.0).abs() < 1e-9, "xi = {}", x.value);
        assert!((x.trace_phi - 2.0).abs() < 1e-10);
        assert!((x.min_re + 1.0).abs() < 1e-10);
        let x = xi(&transposition_choi(3)).unwrap();
        assert!(x.value.abs() < 1e-9);

        // family instance a=1, b=c=0, w=z=√2/2: ξ = 3 − (5/2)√2
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let p = FamilyParams::new(1.0, 0.0, 0.0, C64::new(s, 0.0), C64::new(s, 0.0)).unwrap();
        let c = crate::choi::family_choi(&p).unwrap();
        let x = xi(&c).unwrap();
        let expect = 3.0 - 2.5 * std::f64::consts::SQRT_2;
        assert!(
            (x.value - expect).abs() < 1e-6,
            "family xi = {} expect {}",
            x.value,
            expect
        );
        assert!((x.trace_phi - (3.0 + std::f64::consts::SQRT_2)).abs() < 1e-9);
        assert!((x.min_re + s).abs() < 1e-9);
    }

    #[test]
    fn xi_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut checked = 0;
        for seed in 0..8u64 {
            let mut params = ChoiParams::random(3, 3, 100 + seed);
            params.tp = true;
            params.apply_structure();
            let c = build_choi(&params).unwrap();
            let (grad, degenerate) = xi_gradient(&c).unwrap();
            if degenerate {
                continue;
            }
            // random Hermitian direction
            let dist = StandardNormal;
            let dm = CMat::from_shape_fn((9, 9), |_| {
                C64::new(dist.sample(&mut rng), dist.sample(&mut rng))
            });
            let dir = Herm::symmetrize(&dm).unwrap();
            let t = 1e-6;
            let cp = ChoiMatrix::new(3, 3, c.herm().add(&dir.scale(t)), c.flags()).unwrap();
            let cm = ChoiMatrix::new(3, 3, c.herm().add(&dir.scale(-t)), c.flags()).unwrap();
            let fd = (xi(&cp).unwrap().value - xi(&cm).unwrap().value) / (2.0 * t);
            let analytic = grad.inner(&dir);
            assert!(
                (fd - analytic).abs() < 1e-4 * (1.0 + analytic.abs()),
                "fd {fd} vs analytic {analytic}"
            );
            checked += 1;
        }
        assert!(checked >= 5);
    }

    #[test]
    fn adam_first_step_closed_form() {
        let mut params = ChoiParams::zeros(2, 2);
        let mut state = AdamState::new((4, 4));
        let cfg = TrainConfig {
            learning_rate: 0.01,
            ..Default::default()
        };
        let mut grad = Array2::zeros((4, 4));
        grad[(0, 1)] = 3.0;
        grad[(2, 3)] = -0.5;
        adam_step(&mut params, &grad, &mut state, &cfg);
        // first step: update = -lr * g/(|g| + eps)
        assert!((params.x[(0, 1)] + 0.01 * 3.0 / (3.0 + 1e-8)).abs() < 1e-12);
        assert!((params.x[(2, 3)] - 0.01 * 0.5 / (0.5 + 1e-8)).abs() < 1e-12);
        assert_eq!(params.x[(1, 1)], 0.0);

        // zero gradient leaves parameters unchanged
        let snapshot = params.x.clone();
        adam_step(&mut params, &Array2::zeros((4, 4)), &mut state, &cfg);
        // m decays but sign of update follows m; with g=0 the update is
        // -lr * m_hat/(sqrt(v_hat)+eps) which is nonzero after a nonzero
        // step; so instead check a fully fresh state:
        let mut p2 = ChoiParams::zeros(2, 2);
        let mut s2 = AdamState::new((4, 4));
        adam_step(&mut p2, &Array2::zeros((4, 4)), &mut s2, &cfg);
        assert_eq!(p2.x, Array2::<f64>::zeros((4, 4)));
        let _ = snapshot;
    }

    #[test]
    fn adam_matches_scalar_oracle() {
        // hand-rolled scalar Adam recurrence over a few steps
        let cfg = TrainConfig {
            learning_rate: 0.1,
            ..Default::default()
        };
        let grads = [1.0, -2.0, 0.3, 0.3, -1.1];
        let mut theta = 0.0f64;
        let (mut m, mut v) = (0.0f64, 0.0f64);
        for (i, g) in grads.iter().enumerate() {
            let t = (i + 1) as i32;
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let mhat = m / (1.0 - 0.9f64.powi(t));
            let vhat = v / (1.0 - 0.999f64.powi(t));
            theta -= 0.1 * mhat / (vhat.sqrt() + 1e-8);
        }

        let mut params = ChoiParams::zeros(2, 2);
        let mut state = AdamState::new((4, 4));
        for g in grads {
            let mut grad = Array2::zeros((4, 4));
            grad[(0, 2)] = g;
            adam_step(&mut params, &grad, &mut state, &cfg);
        }
        assert!((params.x[(0, 2)] - theta).abs() < 1e-14);
    }

    #[test]
    fn loss_arithmetic() {
        // hinge arithmetic on synthetic certificate values
        let cfg = LossConfig::default();
        assert_eq!(relu(cfg.epsilon + -0.1) + cfg.gamma * relu(-0.02_f64.max(0.0)), 0.0);
        let l = relu(cfg.epsilon + 0.0) + cfg.gamma * relu(0.01);
        assert!((l - 0.07).abs() < 1e-15);
    }

    #[test]
    fn loss_main_on_psd_choi() {
        // C = |ψ⟩⟨ψ| at d=d'=3, k=2: ζ₁ = ζ₂ = 0, loss = ε
        let c = crate::choi::identity_choi(3);
        let cfg = LossConfig::default();
        let out = loss_main(&c, &cfg, &SolverOptions::default()).unwrap();
        assert!(out.zeta1.value.abs() < 1e-6);
        assert!(out.zetak.value.abs() < 1e-6);
        assert!((out.loss - cfg.epsilon).abs() < 1e-6);
    }

    #[test]
    fn zeta1_danskin_directional_derivative() {
        // The step size balances solver noise (tolerance / step) against
        // curvature truncation. A kink inside the interval (non-unique
        // witness) shows up as a second difference of order `jump · t`,
        // well above the `f'' · t²` of smooth curvature; those points are
        // skipped.
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let dist = StandardNormal;
        let mut opts = SolverOptions::default();
        opts.duality_gap_tol = 1e-9;
        opts.feasibility_tol = 1e-9;
        let mut engine = CertEngine::new();
        let mut checked = 0;
        for seed in 0..6u64 {
            let params = ChoiParams::random(2, 3, 40 + seed);
            let c = build_choi(&params).unwrap();
            let cert = engine.zeta1(&c, &opts).unwrap();
            let dm = CMat::from_shape_fn((6, 6), |_| {
                C64::new(dist.sample(&mut rng), dist.sample(&mut rng))
            });
            let dir = Herm::symmetrize(&dm).unwrap();
            let t = 1e-3;
            let cp = ChoiMatrix::new(2, 3, c.herm().add(&dir.scale(t)), c.flags()).unwrap();
            let cm = ChoiMatrix::new(2, 3, c.herm().add(&dir.scale(-t)), c.flags()).unwrap();
            let zp = engine.zeta1(&cp, &opts).unwrap().value;
            let zm = engine.zeta1(&cm, &opts).unwrap().value;
            // kinks (non-unique witnesses) give a one-sided slope mismatch
            // that does not shrink with t; smooth curvature stays well below
            // this threshold at t = 1e-3
            let slope_p = (zp - cert.value) / t;
            let slope_m = (cert.value - zm) / t;
            if (slope_p - slope_m).abs() > 1e-2 * (1.0 + slope_p.abs()) {
                continue;
            }
            let fd = (zp - zm) / (2.0 * t);
            let danskin = cert.witness.inner(&dir);
            assert!(
                (fd - danskin).abs() < 1e-4 * (1.0 + danskin.abs()),
                "fd {fd} vs danskin {danskin}"
            );
            checked += 1;
        }
        assert!(checked >= 4);
    }

    #[test]
    fn gradient_zero_when_hinges_inactive() {
        let params = ChoiParams::random(2, 2, 5);
        let cfg = LossConfig::default();
        // synthetic certificates with inactive hinges
        let cert = |value: f64| Certificate {
            value,
            witness: Herm::identity(4).scale(0.25),
            status: crate::sdp::CertStatus::Optimal,
            k: 1,
            solve_seconds: 0.0,
            iterations: 0,
        };
        let g = subgradient(&params, &cfg, &cert(-0.2), &cert(0.5), None);
        assert_eq!(g, Array2::<f64>::zeros((4, 4)));
    }

    #[test]
    fn herm_grad_conversion_matches_loss_change() {
        // directional check of the chain rule through the parametrization:
        // for L(C) = Tr(σC) with fixed σ, dL/dX = fold(ReΣ + ImΣ)
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let dist = StandardNormal;
        let sm = CMat::from_shape_fn((9, 9), |_| {
            C64::new(dist.sample(&mut rng), dist.sample(&mut rng))
        });
        let sigma = Herm::symmetrize(&sm).unwrap();
        let mut params = ChoiParams::random(3, 3, 77);
        params.tp = true;
        params.apply_structure();
        let g_raw = herm_grad_to_params(&sigma);
        let g = params.fold_gradient(g_raw);
        // finite differences over a few free slots
        let c0 = build_choi(&params).unwrap();
        let l0 = sigma.inner(c0.herm());
        let t = 1e-7;
        let mut checked = 0;
        for (r, c) in [(0usize, 1usize), (2, 5), (4, 4), (0, 3), (1, 1)] {
            // skip TP-dependent slots
            if params.tp && r % 3 == 2 && c % 3 == 2 {
                continue;
            }
            let mut p2 = params.clone();
            p2.x[(r, c)] += t;
            let c2 = build_choi(&p2).unwrap();
            let l2 = sigma.inner(c2.herm());
            let fd = (l2 - l0) / t;
            assert!(
                (fd - g[(r, c)]).abs() < 1e-5 * (1.0 + fd.abs()),
                "slot ({r},{c}): fd {fd} vs {}",
                g[(r, c)]
            );
            checked += 1;
        }
        assert!(checked >= 4);
    }

    #[test]
    fn run_record_csv_shape() {
        let rec = RunRecord {
            rows: vec![EpochRow {
                epoch: 1,
                loss: 0.5,
                zeta1: -0.2,
                zetak: -0.1,
                xi: None,
                wall_s: 0.01,
            }],
            outcome: Outcome::Exhausted,
            success_epoch: None,
            final_choi: crate::choi::identity_choi(2),
        };
        let csv = rec.csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "epoch,loss,zeta1,zetak,xi,wall_s");
        let row = lines.next().unwrap();
        assert!(row.starts_with("1,0.5,-0.2,-0.1,,"));
    }

    #[test]
    fn masked_slots_never_move() {
        let mask = crate::choi::builtin_mask("family9").unwrap();
        let mut params = ChoiParams::random(3, 3, 91)
            .with_mask(mask.clone())
            .unwrap()
            .with_flags(true, false);
        let mut state = AdamState::new((9, 9));
        let cfg = TrainConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let dist = StandardNormal;
        for _ in 0..5 {
            let gm = CMat::from_shape_fn((9, 9), |_| {
                C64::new(dist.sample(&mut rng), dist.sample(&mut rng))
            });
            let g = params.fold_gradient(herm_grad_to_params(&Herm::symmetrize(&gm).unwrap()));
            adam_step(&mut params, &g, &mut state, &cfg);
            let c = build_choi(&params).unwrap();
            for r in 0..9 {
                for cc in 0..9 {
                    if !mask.keep[(r, cc)] {
                        assert_eq!(c.mat()[(r, cc)], ZERO);
                    }
                }
            }
            assert!(c.tp_residual() <= 1e-13);
        }
    }
}
