//! Noisy SGD on random quadratics: exact second-moment recursions, Monte
//! Carlo simulation, and the theory-side loss estimates built from
//! power-law spectra.

use crate::schedule::{Schedule, ScheduleError};
use crate::special::{gamma, lower_incomplete_gamma, SpecialError};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum QuadError {
    #[error("invalid spectrum hyperparameters: {0}")]
    BadSpec(String),
    #[error("instance is malformed: {0}")]
    BadInstance(String),
    #[error("S_1(t) must be positive for the theory curve")]
    ZeroLrSum,
    #[error(transparent)]
    Special(#[from] SpecialError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
}

/// Hyperparameters of the power-law spectrum family: eigenvalue density
/// `p(lambda) ∝ lambda^{-nu}` on (0, lambda_cap], conditional noise mean
/// `∝ lambda^{-rho} e^{-r lambda}`, and initial offsets with
/// `E[Delta^2 | lambda] = init_scale^2 lambda^{-kappa}`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadSpec {
    pub d: usize,
    pub nu: f64,
    pub lambda_cap: f64,
    pub rho: f64,
    pub r: f64,
    pub kappa: f64,
    pub init_scale: f64,
    pub eta0: f64,
    /// Mean noise level E[Sigma]; the theory constants scale linearly in it.
    #[serde(default = "default_mu")]
    pub mu: f64,
}

fn default_mu() -> f64 {
    1.0
}

impl QuadSpec {
    pub fn validate(&self) -> Result<(), QuadError> {
        if self.d == 0 {
            return Err(QuadError::BadSpec("dimension must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.nu) {
            return Err(QuadError::BadSpec(format!("nu must be in [0,1), got {}", self.nu)));
        }
        if !(self.rho < 1.0 - self.nu) {
            return Err(QuadError::BadSpec(format!(
                "rho must satisfy rho < 1 - nu, got rho={} nu={}",
                self.rho, self.nu
            )));
        }
        if !(self.r > 0.0) {
            return Err(QuadError::BadSpec("r must be positive".into()));
        }
        if !(0.0 <= self.kappa && self.kappa < 2.0 - self.nu) {
            return Err(QuadError::BadSpec(format!(
                "kappa must be in [0, 2 - nu), got {}",
                self.kappa
            )));
        }
        if !(self.lambda_cap > 0.0) {
            return Err(QuadError::BadSpec("lambda_cap must be positive".into()));
        }
        if !(self.init_scale > 0.0) || !(self.eta0 > 0.0) || !(self.mu > 0.0) {
            return Err(QuadError::BadSpec(
                "init_scale, eta0, and mu must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Constants of the theory-side law derived from a spectrum family.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TheoryParams {
    pub l0: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Density normalization Z = lambda_cap^{1-nu} / (1-nu).
    pub z: f64,
    /// Conditional-mean normalization F = Z r^beta / igamma(beta, r*cap).
    pub f: f64,
}

impl TheoryParams {
    pub fn from_spec(spec: &QuadSpec, eta0: f64) -> Result<Self, QuadError> {
        spec.validate()?;
        let alpha = 2.0 - spec.nu - spec.kappa;
        let beta = 1.0 - spec.nu - spec.rho;
        let z = spec.lambda_cap.powf(1.0 - spec.nu) / (1.0 - spec.nu);
        let f = z * spec.r.powf(beta) / lower_incomplete_gamma(beta, spec.r * spec.lambda_cap)?;
        let d = spec.d as f64;
        Ok(TheoryParams {
            l0: 0.25 * d * eta0 * spec.mu,
            a: d * gamma(alpha) * spec.init_scale * spec.init_scale / (2f64.powf(alpha + 1.0) * z),
            b: 0.25 * d * spec.mu,
            c: 2.0 / spec.r,
            alpha,
            beta,
            z,
            f,
        })
    }
}

/// A sampled spectrum: eigenvalues, per-coordinate noise variances, and
/// initial offsets in the eigenbasis.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectrumInstance {
    pub lambdas: Vec<f64>,
    pub sigmas: Vec<f64>,
    pub deltas: Vec<f64>,
}

impl SpectrumInstance {
    pub fn validate(&self) -> Result<(), QuadError> {
        let d = self.lambdas.len();
        if d == 0 || self.sigmas.len() != d || self.deltas.len() != d {
            return Err(QuadError::BadInstance(format!(
                "need equal nonzero lengths, got {}/{}/{}",
                d,
                self.sigmas.len(),
                self.deltas.len()
            )));
        }
        if self.lambdas.iter().any(|&l| !(l > 0.0)) {
            return Err(QuadError::BadInstance("eigenvalues must be positive".into()));
        }
        if self.sigmas.iter().any(|&s| !(s >= 0.0)) {
            return Err(QuadError::BadInstance("noise variances must be nonnegative".into()));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lambdas.len()
    }

    pub fn lambda_max(&self) -> f64 {
        self.lambdas.iter().copied().fold(0.0, f64::max)
    }

    /// Loss at the initialization, (1/2) sum_i lambda_i delta_i^2.
    pub fn initial_loss(&self) -> f64 {
        0.5 * self
            .lambdas
            .iter()
            .zip(&self.deltas)
            .map(|(&l, &d)| l * d * d)
            .sum::<f64>()
    }
}

/// Draw a spectrum instance: eigenvalues by inverse-CDF sampling of the
/// power-law density, noise variances and squared offsets at their
/// conditional means, offset signs random.
pub fn sample_spectra(spec: &QuadSpec, seed: u64) -> Result<SpectrumInstance, QuadError> {
    spec.validate()?;
    let tp = TheoryParams::from_spec(spec, spec.eta0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let exponent = 1.0 / (1.0 - spec.nu);
    let mut lambdas = Vec::with_capacity(spec.d);
    let mut sigmas = Vec::with_capacity(spec.d);
    let mut deltas = Vec::with_capacity(spec.d);
    for _ in 0..spec.d {
        let u: f64 = rng.gen_range(f64::MIN_POSITIVE..=1.0);
        let lambda = spec.lambda_cap * u.powf(exponent);
        lambdas.push(lambda);
        sigmas.push(tp.f * spec.mu * lambda.powf(-spec.rho) * (-spec.r * lambda).exp());
        let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
        deltas.push(sign * spec.init_scale * lambda.powf(-0.5 * spec.kappa));
    }
    Ok(SpectrumInstance {
        lambdas,
        sigmas,
        deltas,
    })
}

/// Per-coordinate second-moment recursion
/// `E[theta_{t,i}^2] = (1 - eta_t lambda_i)^2 E[theta_{t-1,i}^2] + eta_t^2 Sigma_ii`,
/// exact for Gaussian noise. Returns the expected loss at steps 0..=T.
pub fn exact_expected_loss(inst: &SpectrumInstance, s: &Schedule) -> Result<Vec<f64>, QuadError> {
    inst.validate()?;
    let t_total = s.horizon();
    let d = inst.dim();
    let mut second: Vec<f64> = inst.deltas.iter().map(|&x| x * x).collect();
    let mut curve = Vec::with_capacity(t_total + 1);
    curve.push(inst.initial_loss());
    for t in 1..=t_total {
        let eta = s.lr(t);
        let mut loss = 0.0;
        for i in 0..d {
            let shrink = 1.0 - eta * inst.lambdas[i];
            second[i] = shrink * shrink * second[i] + eta * eta * inst.sigmas[i];
            loss += inst.lambdas[i] * second[i];
        }
        curve.push(0.5 * loss);
    }
    Ok(curve)
}

/// Mean and standard error of the simulated loss at steps 0..=T.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct McCurve {
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
}

/// Gaussian sampler using the Marsaglia polar method over a seeded
/// counter-based generator.
struct NormalSource<R: RngCore> {
    rng: R,
    spare: Option<f64>,
}

impl<R: RngCore> NormalSource<R> {
    fn new(rng: R) -> Self {
        NormalSource { rng, spare: None }
    }

    fn next(&mut self) -> f64 {
        if let Some(v) = self.spare.take() {
            return v;
        }
        loop {
            let u = self.rng.gen_range(-1.0f64..1.0);
            let v = self.rng.gen_range(-1.0f64..1.0);
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                let scale = (-2.0 * s.ln() / s).sqrt();
                self.spare = Some(v * scale);
                return u * scale;
            }
        }
    }
}

/// Simulate SGD trajectories `theta_t = theta_{t-1} - eta_t g_t` with
/// `g_t ~ N(H theta_{t-1}, Sigma)` (diagonal H and Sigma). One independent
/// generator stream per trial; trials run in parallel and reduce in trial
/// order.
pub fn sgd_monte_carlo(
    inst: &SpectrumInstance,
    s: &Schedule,
    trials: usize,
    seed: u64,
) -> Result<McCurve, QuadError> {
    inst.validate()?;
    if trials == 0 {
        return Err(QuadError::BadInstance("trials must be >= 1".into()));
    }
    let t_total = s.horizon();
    let d = inst.dim();
    let noise_scale: Vec<f64> = inst.sigmas.iter().map(|&v| v.sqrt()).collect();
    let curves: Vec<Vec<f64>> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(trial as u64 + 1);
            let mut normal = NormalSource::new(rng);
            let mut theta = inst.deltas.clone();
            let mut curve = Vec::with_capacity(t_total + 1);
            let loss_of = |theta: &[f64]| {
                0.5 * inst
                    .lambdas
                    .iter()
                    .zip(theta)
                    .map(|(&l, &x)| l * x * x)
                    .sum::<f64>()
            };
            curve.push(loss_of(&theta));
            for t in 1..=t_total {
                let eta = s.lr(t);
                for i in 0..d {
                    let g = inst.lambdas[i] * theta[i] + noise_scale[i] * normal.next();
                    theta[i] -= eta * g;
                }
                curve.push(loss_of(&theta));
            }
            curve
        })
        .collect();
    let n = trials as f64;
    let mut mean = vec![0.0f64; t_total + 1];
    for curve in &curves {
        for (m, &v) in mean.iter_mut().zip(curve) {
            *m += v;
        }
    }
    for m in mean.iter_mut() {
        *m /= n;
    }
    let mut stderr = vec![0.0f64; t_total + 1];
    if trials > 1 {
        for curve in &curves {
            for (sdev, (&v, &m)) in stderr.iter_mut().zip(curve.iter().zip(&mean)) {
                *sdev += (v - m) * (v - m);
            }
        }
        for sdev in stderr.iter_mut() {
            *sdev = (*sdev / (n - 1.0)).sqrt() / n.sqrt();
        }
    }
    Ok(McCurve { mean, stderr })
}

/// The closed-form estimate of the expected final loss and its error bound.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MEstimate {
    pub value: f64,
    pub error_bound: f64,
}

/// Closed-form estimate M(theta_0, E) of the expected loss at the final
/// step, with the accompanying error bound (valid for
/// eta_max <= 1 / lambda_max).
pub fn m_estimate(inst: &SpectrumInstance, s: &Schedule, eta0: f64) -> Result<MEstimate, QuadError> {
    inst.validate()?;
    let t_total = s.horizon();
    let d = inst.dim();
    // Suffix sums S_k = eta_k + ... + eta_T for k = 1..=T+1.
    let mut tails = vec![0.0f64; t_total + 2];
    for k in (1..=t_total).rev() {
        tails[k] = tails[k + 1] + s.lr(k);
    }
    let s1 = tails[1];
    let mut value = 0.0;
    for i in 0..d {
        let l = inst.lambdas[i];
        let e = (-2.0 * l * s1).exp();
        value += 0.5
            * (inst.deltas[i] * inst.deltas[i] * l * e
                + eta0 * inst.sigmas[i] * 0.5 * (1.0 - e));
    }
    let mut prev_eta = eta0;
    for k in 1..=t_total {
        let eta = s.lr(k);
        let drop = prev_eta - eta;
        prev_eta = eta;
        if drop == 0.0 {
            continue;
        }
        let mut inner = 0.0;
        for i in 0..d {
            inner += inst.sigmas[i] * 0.5 * (1.0 - (-2.0 * inst.lambdas[i] * tails[k]).exp());
        }
        value -= 0.5 * drop * inner;
    }
    let eta_max = (1..=t_total).map(|t| s.lr(t)).fold(eta0, f64::max);
    let mut bound = 0.0;
    for i in 0..d {
        let l = inst.lambdas[i];
        bound += 5.0 * eta_max * l.powi(3) * s1 * (-2.0 * l * s1).exp() * inst.deltas[i] * inst.deltas[i];
        bound += 7.5 * eta_max * eta_max * inst.sigmas[i] * l;
    }
    Ok(MEstimate {
        value,
        error_bound: bound,
    })
}

/// Theory-side saturation factor
/// `G_hat(x) = 1 - igamma(beta, (2x + r) cap) / igamma(beta, r cap) * (Cx + 1)^{-beta}`
/// with `C = 2 / r`.
pub fn g_hat(x: f64, beta: f64, r: f64, lambda_cap: f64) -> Result<f64, QuadError> {
    if x < 0.0 {
        return Err(QuadError::BadSpec(format!("g_hat requires x >= 0, got {x}")));
    }
    let denom = lower_incomplete_gamma(beta, r * lambda_cap)?;
    let num = lower_incomplete_gamma(beta, (2.0 * x + r) * lambda_cap)?;
    let c = 2.0 / r;
    Ok(1.0 - num / denom * (c * x + 1.0).powf(-beta))
}

/// The power-form C that matches `g_hat`'s large-x tail:
/// `C_matched = (2/r) * (Gamma(beta) / igamma(beta, r cap))^{-1/beta}`.
pub fn matched_power_c(beta: f64, r: f64, lambda_cap: f64) -> Result<f64, QuadError> {
    let ratio = gamma(beta) / lower_incomplete_gamma(beta, r * lambda_cap)?;
    Ok(2.0 / r * ratio.powf(-1.0 / beta))
}

/// Theory-law estimate of the expected loss at steps 1..=T:
/// `L(t) = L0 + A S_1(t)^{-alpha} - B sum_k (eta_{k-1} - eta_k) G_hat(S_k(t))`.
pub fn theory_curve(spec: &QuadSpec, s: &Schedule, eta0: f64) -> Result<Vec<f64>, QuadError> {
    let tp = TheoryParams::from_spec(spec, eta0)?;
    let t_total = s.horizon();
    if !(s.total_to(1) > 0.0) {
        return Err(QuadError::ZeroLrSum);
    }
    // (position, drop) pairs; eta_0 = eta0 for the k = 1 term.
    let mut drops = Vec::new();
    let mut prev = eta0;
    for k in 1..=t_total {
        let eta = s.lr(k);
        if eta != prev {
            drops.push((k, prev - eta));
        }
        prev = eta;
    }
    let denom = lower_incomplete_gamma(tp.beta, spec.r * spec.lambda_cap)?;
    let mut out = Vec::with_capacity(t_total);
    for t in 1..=t_total {
        let s1 = s.total_to(t);
        let mut ld = 0.0;
        for &(k, drop) in &drops {
            if k > t {
                break;
            }
            let sk = s.total_to(t) - s.total_to(k - 1);
            let num = lower_incomplete_gamma(tp.beta, (2.0 * sk + spec.r) * spec.lambda_cap)?;
            let ghat = 1.0 - num / denom * (tp.c * sk + 1.0).powf(-tp.beta);
            ld += drop * ghat;
        }
        out.push(tp.l0 + tp.a * s1.powf(-tp.alpha) - tp.b * ld);
    }
    Ok(out)
}

/// Intermediate loss reduction between the k-th and (k+1)-th auxiliary
/// processes at the equal-LR-sum steps of target step `t`, computed from
/// exact expected-loss curves (linear interpolation at fractional steps).
pub fn auxiliary_ld(
    inst: &SpectrumInstance,
    s: &Schedule,
    k: usize,
    t: usize,
) -> Result<f64, QuadError> {
    let lk = aux_loss_at(inst, s, k, t)?;
    let lk1 = aux_loss_at(inst, s, k + 1, t)?;
    Ok(lk - lk1)
}

/// Expected loss of the k-th auxiliary process (shares eta_1..eta_k, then
/// constant eta_k) at its equal-LR-sum step Z_k(t).
pub fn aux_loss_at(
    inst: &SpectrumInstance,
    s: &Schedule,
    k: usize,
    t: usize,
) -> Result<f64, QuadError> {
    let z = s.equivalent_step(k, t)?;
    let horizon = z.ceil() as usize + 1;
    let mut lrs: Vec<f64> = (1..=k.min(horizon)).map(|i| s.lr(i)).collect();
    let cont = s.lr(k);
    while lrs.len() < horizon {
        lrs.push(cont);
    }
    let aux = Schedule::from_lrs(s.warmup_steps(), s.peak_lr(), lrs)?;
    let curve = exact_expected_loss(inst, &aux)?;
    Ok(interp(&curve, z))
}

fn interp(curve: &[f64], x: f64) -> f64 {
    let lo = x.floor() as usize;
    let hi = lo + 1;
    if hi >= curve.len() {
        return curve[curve.len() - 1];
    }
    let frac = x - lo as f64;
    curve[lo] * (1.0 - frac) + curve[hi] * frac
}
