//! Constrained LR-schedule optimization: minimize a fitted law's predicted
//! final loss over monotone nonincreasing schedules, plus shape analysis of
//! the result.

use crate::law::{predict, LawError, LawVariant, MplParams};
use crate::schedule::{Schedule, ScheduleError, ScheduleKind};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OptError {
    #[error("invalid optimization config: {0}")]
    BadConfig(String),
    #[error("surrogate became non-finite at iteration {iter}")]
    NonFiniteSurrogate { iter: usize },
    #[error("variant {0} has no schedule-dependent surrogate to optimize")]
    UnsupportedVariant(&'static str),
    #[error("phase detection requires a monotone schedule")]
    NotMonotone,
    #[error(transparent)]
    Law(#[from] LawError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptConfig {
    /// Post-warmup horizon T.
    pub horizon: usize,
    /// Peak LR eta_0 (fixed, not optimized).
    pub eta0: f64,
    /// Warmup length, fixing the warmup LR-sum term of the surrogate.
    pub warmup_steps: usize,
    /// Adam step sizes to try; the best final loss wins.
    #[serde(default = "default_step_sizes")]
    pub step_sizes: Vec<f64>,
    #[serde(default = "default_opt_iters")]
    pub iters: usize,
    /// Floor below which an LR counts as zero and later reductions are
    /// dropped.
    #[serde(default = "default_eps_clamp")]
    pub eps_clamp: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_step_sizes() -> Vec<f64> {
    vec![2e-8, 1e-8, 5e-9, 2e-9, 1e-9]
}

fn default_opt_iters() -> usize {
    50_000
}

fn default_eps_clamp() -> f64 {
    1e-10
}

impl OptConfig {
    fn validate(&self) -> Result<(), OptError> {
        if self.horizon < 2 {
            return Err(OptError::BadConfig("horizon must be >= 2".into()));
        }
        if !(self.eta0 > 0.0) {
            return Err(OptError::BadConfig("eta0 must be positive".into()));
        }
        if !(self.eps_clamp > 0.0) {
            return Err(OptError::BadConfig("eps_clamp must be positive".into()));
        }
        if self.step_sizes.is_empty() || self.step_sizes.iter().any(|&s| !(s > 0.0)) {
            return Err(OptError::BadConfig("step sizes must be positive".into()));
        }
        if self.iters == 0 {
            return Err(OptError::BadConfig("iters must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptResult {
    pub predicted_final_loss: f64,
    pub chosen_step_size: f64,
    pub lrs: Vec<f64>,
}

/// Detected shape of a monotone schedule: stable-phase end, fitted decay
/// exponent, and final-to-peak LR ratio.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhaseReport {
    pub t_stable: usize,
    /// Power-decay exponent, absent when there is no decay phase.
    pub decay_exponent: Option<f64>,
    pub final_lr_ratio: f64,
}

/// Single predicted value at the final step, the optimization surrogate.
pub fn predicted_final_loss(v: LawVariant, p: &MplParams, s: &Schedule) -> Result<f64, OptError> {
    Ok(predict(v, p, s, &[s.horizon()])?[0])
}

/// Optimize the LR schedule under a fitted law by projected Adam over the
/// per-step LR reductions, starting from the all-peak (zero-reduction)
/// schedule. Returns the feasible schedule with the best surrogate value
/// seen across the step-size grid.
pub fn optimize_schedule(
    v: LawVariant,
    p: &MplParams,
    cfg: &OptConfig,
) -> Result<(Schedule, OptResult), OptError> {
    cfg.validate()?;
    if matches!(v, LawVariant::Cdsl) {
        return Err(OptError::UnsupportedVariant(v.name()));
    }
    let runs: Vec<Result<(f64, Vec<f64>, f64), OptError>> = cfg
        .step_sizes
        .par_iter()
        .map(|&lr| optimize_one_cell(v, p, cfg, lr).map(|(loss, deltas)| (loss, deltas, lr)))
        .collect();
    let mut best: Option<(f64, Vec<f64>, f64)> = None;
    for r in runs {
        let (loss, deltas, lr) = r?;
        if best.as_ref().map_or(true, |(b, _, _)| loss < *b) {
            best = Some((loss, deltas, lr));
        }
    }
    let (loss, deltas, lr) = best.unwrap();
    let lrs = lrs_from_deltas(cfg.eta0, &deltas);
    let schedule =
        Schedule::new(ScheduleKind::Explicit { lrs: lrs.clone() }, cfg.warmup_steps, cfg.eta0)?
            .with_label("optimized");
    let result = OptResult {
        predicted_final_loss: loss,
        chosen_step_size: lr,
        lrs,
    };
    Ok((schedule, result))
}

fn lrs_from_deltas(eta0: f64, deltas: &[f64]) -> Vec<f64> {
    let mut lrs = Vec::with_capacity(deltas.len());
    let mut eta = eta0;
    for &d in deltas {
        eta -= d;
        lrs.push(eta.max(0.0));
    }
    lrs
}

/// Clamp reductions into [0, eta0], cap each so the LR stays nonnegative,
/// and zero out reductions past the point where the LR has fallen to the
/// eps floor.
fn project(deltas: &mut [f64], eta0: f64, eps: f64) {
    let mut eta = eta0;
    for d in deltas.iter_mut() {
        if eta <= eps {
            *d = 0.0;
            continue;
        }
        *d = d.clamp(0.0, eta0).min(eta);
        eta -= *d;
    }
}

/// Euclidean projection onto {delta >= 0, sum delta <= budget}. Keeps the
/// implied schedule feasible while distributing the reduction budget by
/// magnitude instead of first-come-first-served, which the corner optima
/// of the convex surrogates require.
fn project_capped_simplex(deltas: &mut [f64], budget: f64) {
    let mut positive_sum = 0.0;
    for d in deltas.iter_mut() {
        if *d < 0.0 {
            *d = 0.0;
        } else {
            positive_sum += *d;
        }
    }
    if positive_sum <= budget {
        return;
    }
    // Project onto the simplex {delta >= 0, sum = budget}: threshold tau
    // with sum max(delta - tau, 0) = budget.
    let mut sorted: Vec<f64> = deltas.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cum = 0.0;
    let mut tau = 0.0;
    for (i, &v) in sorted.iter().enumerate() {
        cum += v;
        let candidate = (cum - budget) / (i + 1) as f64;
        if i + 1 == sorted.len() || sorted[i + 1] <= candidate {
            tau = candidate;
            break;
        }
    }
    for d in deltas.iter_mut() {
        *d = (*d - tau).max(0.0);
    }
}

/// Surrogates whose loss-reduction term is linear in the reductions are
/// convex in delta; plain projected gradient steps (normalized to the same
/// per-iteration displacement scale as the adaptive steps) converge to
/// their corner optima, which sign-normalized adaptive steps cannot locate.
fn is_linear_ld(v: LawVariant) -> bool {
    matches!(
        v,
        LawVariant::Opl | LawVariant::Lldl | LawVariant::Spl | LawVariant::Mtl { .. }
    )
}

fn optimize_one_cell(
    v: LawVariant,
    p: &MplParams,
    cfg: &OptConfig,
    step_size: f64,
) -> Result<(f64, Vec<f64>), OptError> {
    let t_total = cfg.horizon;
    let s_w = 0.5 * cfg.eta0 * cfg.warmup_steps as f64;
    let mut deltas = vec![0.0f64; t_total];
    let mut grad = vec![0.0f64; t_total];
    let mut m = vec![0.0f64; t_total];
    let mut vv = vec![0.0f64; t_total];
    let mut best_loss = f64::INFINITY;
    let mut best_deltas = deltas.clone();
    let plain = is_linear_ld(v);

    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    for it in 1..=cfg.iters {
        let loss = surrogate_grad(v, p, cfg.eta0, s_w, &deltas, &mut grad)?;
        if !loss.is_finite() {
            return Err(OptError::NonFiniteSurrogate { iter: it });
        }
        if loss < best_loss {
            best_loss = loss;
            best_deltas.copy_from_slice(&deltas);
        }
        if plain {
            let sup = grad.iter().fold(0.0f64, |a, &g| a.max(g.abs()));
            if sup > 0.0 {
                let scale = step_size / sup;
                for i in 0..t_total {
                    deltas[i] -= scale * grad[i];
                }
            }
            project_capped_simplex(&mut deltas, cfg.eta0);
            project(&mut deltas, cfg.eta0, cfg.eps_clamp);
        } else {
            let bc1 = 1.0 - B1.powi(it as i32);
            let bc2 = 1.0 - B2.powi(it as i32);
            for i in 0..t_total {
                m[i] = B1 * m[i] + (1.0 - B1) * grad[i];
                vv[i] = B2 * vv[i] + (1.0 - B2) * grad[i] * grad[i];
                deltas[i] -= step_size * (m[i] / bc1) / ((vv[i] / bc2).sqrt() + EPS);
            }
            project(&mut deltas, cfg.eta0, cfg.eps_clamp);
        }
    }
    // Score the final iterate as well.
    let loss = surrogate_grad(v, p, cfg.eta0, s_w, &deltas, &mut grad)?;
    if loss < best_loss {
        best_loss = loss;
        best_deltas.copy_from_slice(&deltas);
    }
    if plain {
        // First-order steps stall on the nearly flat valley between
        // adjacent reduction positions; pairwise mass exchanges resolve the
        // vertex the convex surrogate provably attains.
        exchange_polish(v, p, cfg, &mut best_deltas, &mut best_loss)?;
    }
    Ok((best_loss, best_deltas))
}

fn exchange_polish(
    v: LawVariant,
    p: &MplParams,
    cfg: &OptConfig,
    deltas: &mut Vec<f64>,
    best_loss: &mut f64,
) -> Result<(), OptError> {
    let s_w = 0.5 * cfg.eta0 * cfg.warmup_steps as f64;
    let t_total = deltas.len();
    let mut grad = vec![0.0f64; t_total];
    for _ in 0..4 * t_total {
        let loss = surrogate_grad(v, p, cfg.eta0, s_w, deltas, &mut grad)?;
        let mut donor: Option<usize> = None;
        for j in 0..t_total {
            if deltas[j] > 0.0 && donor.map_or(true, |d| grad[j] > grad[d]) {
                donor = Some(j);
            }
        }
        let Some(donor) = donor else { break };
        let mut receiver = 0usize;
        for j in 0..t_total {
            if grad[j] < grad[receiver] {
                receiver = j;
            }
        }
        if receiver == donor || grad[donor] - grad[receiver] <= 0.0 {
            break;
        }
        let mut moved = deltas[donor];
        let mut improved = false;
        // Full transfer first, then halvings until something improves.
        for _ in 0..8 {
            let mut cand = deltas.clone();
            cand[donor] -= moved;
            cand[receiver] += moved;
            project(&mut cand, cfg.eta0, cfg.eps_clamp);
            let cand_loss = surrogate_grad(v, p, cfg.eta0, s_w, &cand, &mut grad)?;
            if cand_loss < loss {
                *deltas = cand;
                if cand_loss < *best_loss {
                    *best_loss = cand_loss;
                }
                improved = true;
                break;
            }
            moved *= 0.5;
        }
        if !improved {
            break;
        }
    }
    Ok(())
}

/// Surrogate value and analytic gradient with respect to the reductions,
/// O(T) via prefix/suffix accumulation.
fn surrogate_grad(
    v: LawVariant,
    p: &MplParams,
    eta0: f64,
    s_w: f64,
    deltas: &[f64],
    grad: &mut [f64],
) -> Result<f64, OptError> {
    let t_total = deltas.len();
    // eta_k and suffix sums S_k(T).
    let mut etas = vec![0.0f64; t_total];
    let mut eta = eta0;
    for (k, &d) in deltas.iter().enumerate() {
        eta -= d;
        etas[k] = eta.max(0.0);
    }
    let mut tails = vec![0.0f64; t_total + 1];
    for k in (0..t_total).rev() {
        tails[k] = tails[k + 1] + etas[k];
    }
    let s1 = tails[0];
    let base = s1 + s_w;
    let pw = base.powf(-p.alpha);
    let power_coeff = p.alpha * p.a * base.powf(-p.alpha - 1.0);

    // Per-step saturation factors and the pieces of their derivatives.
    let mut ld = 0.0;
    match v {
        LawVariant::Opl => {
            for (j, g) in grad.iter_mut().enumerate() {
                *g = power_coeff * (t_total - j) as f64;
            }
        }
        LawVariant::Lldl => {
            for (j, g) in grad.iter_mut().enumerate() {
                *g = power_coeff * (t_total - j) as f64 - p.b;
            }
            ld = p.b * deltas.iter().sum::<f64>();
        }
        LawVariant::Mtl { lambda } => {
            let lnl = lambda.ln();
            for (j, g) in grad.iter_mut().enumerate() {
                let steps_left = (t_total - j) as f64;
                let gk = (1.0 - (steps_left * lnl).exp()) / (1.0 - lambda);
                ld += p.b * deltas[j] * gk;
                *g = power_coeff * steps_left - p.b * gk;
            }
        }
        LawVariant::Spl => {
            for (j, g) in grad.iter_mut().enumerate() {
                let x = (t_total - j) as f64;
                let gk = 1.0 - (p.c * x + 1.0).powf(-p.beta);
                ld += p.b * deltas[j] * gk;
                *g = power_coeff * x - p.b * gk;
            }
        }
        LawVariant::Mpl | LawVariant::NoGamma | LawVariant::Mel => {
            let gamma = match v {
                LawVariant::Mpl => p.gamma,
                _ => 0.0,
            };
            let mut g_sat = vec![0.0f64; t_total];
            // y_k = d_k G'(x_k) (gamma eta^{-gamma-1} S_k - eta^{-gamma} (T-k+1))
            // u_k = d_k G'(x_k) eta^{-gamma}
            let mut y = vec![0.0f64; t_total];
            let mut u = vec![0.0f64; t_total];
            for k in 0..t_total {
                let eta_k = etas[k];
                let s_k = tails[k];
                if eta_k <= 0.0 {
                    // Frozen zero-LR tail: saturation argument limit is 0.
                    continue;
                }
                let scale = if gamma == 0.0 { 1.0 } else { eta_k.powf(-gamma) };
                let (gk, gp) = match v {
                    LawVariant::Mel => {
                        let x = s_k;
                        let e = (-p.c * x).exp();
                        (1.0 - e, p.c * e)
                    }
                    _ => {
                        let x = scale * s_k;
                        let cx1 = p.c * x + 1.0;
                        let inner = cx1.powf(-p.beta - 1.0);
                        (1.0 - inner * cx1, p.beta * p.c * inner)
                    }
                };
                g_sat[k] = gk;
                ld += p.b * deltas[k] * gk;
                let dk_gp = deltas[k] * gp;
                if dk_gp != 0.0 {
                    let steps_left = (t_total - k) as f64;
                    match v {
                        LawVariant::Mel => {
                            y[k] = -dk_gp * steps_left;
                            u[k] = dk_gp;
                        }
                        _ => {
                            y[k] =
                                dk_gp * (gamma * scale / eta_k * s_k - scale * steps_left);
                            u[k] = dk_gp * scale;
                        }
                    }
                }
            }
            // Suffix of y and prefix of u.
            let mut suf_y = vec![0.0f64; t_total + 1];
            for k in (0..t_total).rev() {
                suf_y[k] = suf_y[k + 1] + y[k];
            }
            let mut pre_u = 0.0;
            for j in 0..t_total {
                let steps_left = (t_total - j) as f64;
                grad[j] =
                    power_coeff * steps_left - p.b * (g_sat[j] + suf_y[j]) + p.b * steps_left * pre_u;
                pre_u += u[j];
            }
        }
        LawVariant::Cdsl => unreachable!("rejected in optimize_schedule"),
    }
    Ok(p.l0 + p.a * pw - ld)
}

/// Stable/decay phase detection: the stable phase ends at the last step
/// whose LR stays within `tol` of the peak; the decay exponent comes from
/// least squares of log(eta_t / eta_0) against log(1 - tau) over the decay
/// phase.
pub fn detect_phases(s: &Schedule, tol: f64) -> Result<PhaseReport, OptError> {
    if !s.is_monotone() {
        return Err(OptError::NotMonotone);
    }
    let t_total = s.horizon();
    let eta0 = s.peak_lr();
    let threshold = (1.0 - tol) * eta0;
    let mut t_stable = 0usize;
    for t in 1..=t_total {
        if s.lr(t) >= threshold {
            t_stable = t;
        } else {
            break;
        }
    }
    let final_lr_ratio = s.lr(t_total) / eta0;
    if t_stable >= t_total {
        return Ok(PhaseReport {
            t_stable,
            decay_exponent: None,
            final_lr_ratio,
        });
    }
    let span = (t_total - t_stable) as f64;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for t in (t_stable + 1)..t_total {
        let lr = s.lr(t);
        if lr <= 0.0 {
            break;
        }
        xs.push(((t_total - t) as f64 / span).ln());
        ys.push((lr / eta0).ln());
    }
    if xs.len() < 2 {
        return Ok(PhaseReport {
            t_stable,
            decay_exponent: None,
            final_lr_ratio,
        });
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { f64::NAN };
    Ok(PhaseReport {
        t_stable,
        decay_exponent: if slope.is_finite() { Some(slope) } else { None },
        final_lr_ratio,
    })
}

/// Predicted final losses for the standard baseline shapes at a fixed
/// horizon: cosine plus WSD / WSDLD over a grid of decay lengths.
pub fn baseline_final_losses(
    v: LawVariant,
    p: &MplParams,
    horizon: usize,
    warmup_steps: usize,
    eta0: f64,
    end_lr: f64,
    decay_grid: &[usize],
) -> Result<Vec<(String, f64)>, OptError> {
    let mut out = Vec::new();
    let cosine = Schedule::new(
        ScheduleKind::Cosine {
            total_steps: horizon,
            end_ratio: end_lr / eta0,
        },
        warmup_steps,
        eta0,
    )?;
    out.push(("cosine".to_string(), predicted_final_loss(v, p, &cosine)?));
    for &decay in decay_grid {
        if decay >= horizon {
            return Err(OptError::BadConfig(format!(
                "decay steps {decay} must be < horizon {horizon}"
            )));
        }
        let stable = horizon - decay;
        let wsd = Schedule::new(
            ScheduleKind::Wsd {
                total_steps: horizon,
                stable_steps: stable,
                end_lr,
            },
            warmup_steps,
            eta0,
        )?;
        out.push((
            format!("wsd-decay{decay}"),
            predicted_final_loss(v, p, &wsd)?,
        ));
        let wsdld = Schedule::new(
            ScheduleKind::Wsdld {
                total_steps: horizon,
                stable_steps: stable,
                end_lr,
            },
            warmup_steps,
            eta0,
        )?;
        out.push((
            format!("wsdld-decay{decay}"),
            predicted_final_loss(v, p, &wsdld)?,
        ));
    }
    Ok(out)
}
