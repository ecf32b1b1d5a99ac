//! Multi-power-law family: the full law, its simplified variants, and
//! analytic parameter gradients.
//!
//! All laws share the decomposition `L(t) = L0 + A (S_1(t) + S_W)^{-alpha}
//! - LD(t)` with a variant-specific loss-reduction term `LD`.

use crate::schedule::{segment_area, Schedule};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum LawError {
    #[error("step {t} outside schedule horizon {horizon}")]
    StepOutOfRange { t: usize, horizon: usize },
    #[error("invalid law parameters: {0}")]
    BadParams(String),
    #[error("zero LR with a positive reduction at step {k}: eta_k^(-gamma) undefined")]
    UndefinedExponent { k: usize },
    #[error("momentum lambda must lie in (0,1), got {0}")]
    LambdaRange(f64),
    #[error("sampled schedule is malformed: {0}")]
    BadSamples(String),
}

/// The seven law parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MplParams {
    pub l0: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl MplParams {
    /// Strict invariants used by the fitting pipeline: positive
    /// coefficients, exponents in (0,1).
    pub fn validate(&self) -> Result<(), LawError> {
        let pos = [
            ("L0", self.l0),
            ("A", self.a),
            ("B", self.b),
            ("C", self.c),
        ];
        for (name, v) in pos {
            if !(v > 0.0 && v.is_finite()) {
                return Err(LawError::BadParams(format!("{name} must be positive, got {v}")));
            }
        }
        let unit = [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
        ];
        for (name, v) in unit {
            if !(v > 0.0 && v < 1.0) {
                return Err(LawError::BadParams(format!(
                    "{name} must lie in (0,1), got {v}"
                )));
            }
        }
        Ok(())
    }

    /// Looser check for evaluation: zero A or B is meaningful (it switches
    /// terms off), exponents still need to be in range.
    fn check_evaluable(&self) -> Result<(), LawError> {
        for (name, v) in [
            ("L0", self.l0),
            ("A", self.a),
            ("B", self.b),
            ("C", self.c),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(LawError::BadParams(format!(
                    "{name} must be finite and nonnegative, got {v}"
                )));
            }
        }
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(LawError::BadParams(format!(
                    "{name} must lie in (0,1), got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Which member of the law family to evaluate or fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "kebab-case")]
pub enum LawVariant {
    /// Full multi-power law.
    Mpl,
    /// One-power law: no loss-reduction term.
    Opl,
    /// Linear loss reduction B (eta_0 - eta_t).
    Lldl,
    /// Multi-power law with gamma fixed to zero.
    NoGamma,
    /// Step-based saturation argument G(t - k + 1).
    Spl,
    /// Exponential saturation G(x) = 1 - e^{-Cx} on the LR sum.
    Mel,
    /// Momentum law with decay hyperparameter lambda.
    Mtl { lambda: f64 },
    /// Data scaling law L0 + A t^{-alpha} on step counts only.
    Cdsl,
}

impl LawVariant {
    pub fn name(&self) -> &'static str {
        match self {
            LawVariant::Mpl => "MPL",
            LawVariant::Opl => "OPL",
            LawVariant::Lldl => "LLDL",
            LawVariant::NoGamma => "No-gamma",
            LawVariant::Spl => "SPL",
            LawVariant::Mel => "MEL",
            LawVariant::Mtl { .. } => "MTL",
            LawVariant::Cdsl => "CDSL",
        }
    }

    pub fn validate(&self) -> Result<(), LawError> {
        if let LawVariant::Mtl { lambda } = self {
            if !(*lambda > 0.0 && *lambda < 1.0) {
                return Err(LawError::LambdaRange(*lambda));
            }
        }
        Ok(())
    }
}

/// A recorded loss curve: strictly increasing post-warmup steps with
/// positive losses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossCurve {
    pub steps: Vec<usize>,
    pub losses: Vec<f64>,
}

impl LossCurve {
    pub fn validate(&self) -> Result<(), LawError> {
        if self.steps.is_empty() || self.steps.len() != self.losses.len() {
            return Err(LawError::BadSamples(format!(
                "curve needs matching nonempty steps/losses, got {}/{}",
                self.steps.len(),
                self.losses.len()
            )));
        }
        let mut prev = 0usize;
        for (&s, &l) in self.steps.iter().zip(&self.losses) {
            if s <= prev {
                return Err(LawError::BadSamples(format!(
                    "steps must be strictly increasing positive integers (step {s} after {prev})"
                )));
            }
            if !(l > 0.0 && l.is_finite()) {
                return Err(LawError::BadSamples(format!(
                    "losses must be positive, got {l} at step {s}"
                )));
            }
            prev = s;
        }
        Ok(())
    }
}

/// Saturation factor G(x) = 1 - (Cx + 1)^{-beta}; lies in [0, 1) and is
/// strictly increasing for x >= 0.
pub fn g_saturation(x: f64, c: f64, beta: f64) -> f64 {
    assert!(x >= 0.0, "g_saturation requires x >= 0, got {x}");
    1.0 - (c * x + 1.0).powf(-beta)
}

/// A schedule reduced to (step, lr, cumulative LR sum) knots. The law is
/// evaluated on knots only; with one knot per step this is exact, with
/// validation-step knots it is the LR-area surrogate used for fitting.
#[derive(Debug, Clone)]
pub struct SampledSchedule {
    pub peak_lr: f64,
    pub warmup_sum: f64,
    pub steps: Vec<usize>,
    pub lrs: Vec<f64>,
    /// cum[j] approximates S_1(steps[j]).
    pub cum: Vec<f64>,
}

impl SampledSchedule {
    /// One knot per step with exact prefix sums.
    pub fn dense(s: &Schedule) -> Self {
        let t_max = s.horizon();
        let steps: Vec<usize> = (1..=t_max).collect();
        let lrs = s.post_lrs().to_vec();
        let cum = (1..=t_max).map(|t| s.total_to(t)).collect();
        SampledSchedule {
            peak_lr: s.peak_lr(),
            warmup_sum: s.warmup_sum(),
            steps,
            lrs,
            cum,
        }
    }

    /// Knots at the given validation steps, with exact prefix sums taken
    /// from the full schedule.
    pub fn at_steps(s: &Schedule, steps: &[usize]) -> Result<Self, LawError> {
        let horizon = s.horizon();
        let mut prev = 0usize;
        for &v in steps {
            if v <= prev || v > horizon {
                return Err(LawError::BadSamples(format!(
                    "validation step {v} invalid for horizon {horizon}"
                )));
            }
            prev = v;
        }
        Ok(SampledSchedule {
            peak_lr: s.peak_lr(),
            warmup_sum: s.warmup_sum(),
            steps: steps.to_vec(),
            lrs: steps.iter().map(|&v| s.lr(v)).collect(),
            cum: steps.iter().map(|&v| s.total_to(v)).collect(),
        })
    }

    /// Knots from raw (step, lr) samples, e.g. an ingested curve file.
    /// Cumulative sums come from the piecewise-linear LR-area surrogate.
    pub fn from_samples(
        peak_lr: f64,
        warmup_sum: f64,
        steps: Vec<usize>,
        lrs: Vec<f64>,
    ) -> Result<Self, LawError> {
        if steps.is_empty() || steps.len() != lrs.len() {
            return Err(LawError::BadSamples(
                "need matching nonempty steps and lrs".into(),
            ));
        }
        let mut prev_step = 0usize;
        let mut prev_lr = peak_lr;
        let mut acc = 0.0;
        let mut cum = Vec::with_capacity(steps.len());
        for (&v, &lr) in steps.iter().zip(&lrs) {
            if v <= prev_step {
                return Err(LawError::BadSamples(format!(
                    "sample steps must be strictly increasing (step {v})"
                )));
            }
            if !(lr >= 0.0 && lr.is_finite()) {
                return Err(LawError::BadSamples(format!("bad LR {lr} at step {v}")));
            }
            acc += segment_area(prev_step, prev_lr, v, lr);
            cum.push(acc);
            prev_step = v;
            prev_lr = lr;
        }
        Ok(SampledSchedule {
            peak_lr,
            warmup_sum,
            steps,
            lrs,
            cum,
        })
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    fn lr_before(&self, j: usize) -> f64 {
        if j == 0 {
            self.peak_lr
        } else {
            self.lrs[j - 1]
        }
    }

    /// S_k(t) analogue for the drop lumped at knot i, target knot j >= i.
    fn tail_sum(&self, i: usize, j: usize) -> f64 {
        self.cum[j] - self.cum[i] + self.lrs[i]
    }
}

/// Evaluate a law variant at knot `j` of a sampled schedule.
pub fn eval_at_knot(
    v: LawVariant,
    p: &MplParams,
    ss: &SampledSchedule,
    j: usize,
) -> Result<f64, LawError> {
    p.check_evaluable()?;
    v.validate()?;
    if let LawVariant::Cdsl = v {
        return Ok(p.l0 + p.a * (ss.steps[j] as f64).powf(-p.alpha));
    }
    let power = p.a * (ss.cum[j] + ss.warmup_sum).powf(-p.alpha);
    let ld = ld_at_knot(v, p, ss, j)?;
    Ok(p.l0 + power - ld)
}

fn ld_at_knot(
    v: LawVariant,
    p: &MplParams,
    ss: &SampledSchedule,
    j: usize,
) -> Result<f64, LawError> {
    match v {
        LawVariant::Opl | LawVariant::Cdsl => Ok(0.0),
        LawVariant::Lldl => Ok(p.b * (ss.peak_lr - ss.lrs[j])),
        LawVariant::Mtl { lambda } => {
            let mut acc = 0.0;
            for i in 0..=j {
                let d = ss.lr_before(i) - ss.lrs[i];
                if d == 0.0 {
                    continue;
                }
                let m = (ss.steps[j] - ss.steps[i] + 1) as f64;
                acc += d * (1.0 - lambda.powf(m)) / (1.0 - lambda);
            }
            Ok(p.b * acc)
        }
        LawVariant::Mpl | LawVariant::NoGamma | LawVariant::Spl | LawVariant::Mel => {
            let gamma = match v {
                LawVariant::Mpl => p.gamma,
                _ => 0.0,
            };
            let mut acc = 0.0;
            for i in 0..=j {
                let d = ss.lr_before(i) - ss.lrs[i];
                if d == 0.0 {
                    continue;
                }
                let g = match v {
                    LawVariant::Spl => {
                        let x = (ss.steps[j] - ss.steps[i] + 1) as f64;
                        g_saturation(x, p.c, p.beta)
                    }
                    LawVariant::Mel => {
                        let x = ss.tail_sum(i, j);
                        1.0 - (-p.c * x).exp()
                    }
                    _ => {
                        let s_tail = ss.tail_sum(i, j);
                        let eta = ss.lrs[i];
                        if eta <= 0.0 {
                            if s_tail <= 0.0 {
                                // eta -> 0 with S_k <= (t-k+1) eta forces the
                                // saturation argument to 0, so the term vanishes.
                                continue;
                            }
                            return Err(LawError::UndefinedExponent { k: ss.steps[i] });
                        }
                        let x = if gamma == 0.0 {
                            s_tail
                        } else {
                            eta.powf(-gamma) * s_tail
                        };
                        g_saturation(x, p.c, p.beta)
                    }
                };
                acc += d * g;
            }
            Ok(p.b * acc)
        }
    }
}

/// Predictions of a law variant over a full schedule at the given steps
/// (exact per-step sums).
pub fn predict(
    v: LawVariant,
    p: &MplParams,
    s: &Schedule,
    steps: &[usize],
) -> Result<Vec<f64>, LawError> {
    let horizon = s.horizon();
    for &t in steps {
        if t < 1 || t > horizon {
            return Err(LawError::StepOutOfRange { t, horizon });
        }
    }
    let dense = SampledSchedule::dense(s);
    steps
        .iter()
        .map(|&t| eval_at_knot(v, p, &dense, t - 1))
        .collect()
}

/// Predictions at every knot of a sampled schedule (the fitting surrogate).
pub fn predict_sampled(
    v: LawVariant,
    p: &MplParams,
    ss: &SampledSchedule,
) -> Result<Vec<f64>, LawError> {
    (0..ss.len()).map(|j| eval_at_knot(v, p, ss, j)).collect()
}

/// Exact loss-reduction term LD(t) of the full law.
pub fn loss_reduction(p: &MplParams, s: &Schedule, t: usize) -> Result<f64, LawError> {
    let horizon = s.horizon();
    if t < 1 || t > horizon {
        return Err(LawError::StepOutOfRange { t, horizon });
    }
    let dense = SampledSchedule::dense(s);
    ld_at_knot(LawVariant::Mpl, p, &dense, t - 1)
}

/// Order of partial derivatives in gradient vectors.
pub const PARAM_NAMES: [&str; 7] = ["L0", "A", "B", "C", "alpha", "beta", "gamma"];

/// Analytic partials of the full-law prediction with respect to
/// (L0, A, B, C, alpha, beta, gamma) at each requested step.
pub fn predict_gradient(
    p: &MplParams,
    s: &Schedule,
    steps: &[usize],
) -> Result<Vec<[f64; 7]>, LawError> {
    let horizon = s.horizon();
    for &t in steps {
        if t < 1 || t > horizon {
            return Err(LawError::StepOutOfRange { t, horizon });
        }
    }
    let dense = SampledSchedule::dense(s);
    steps
        .iter()
        .map(|&t| eval_with_grad(LawVariant::Mpl, p, &dense, t - 1).map(|(_, g)| g))
        .collect()
}

/// Value and parameter gradient of a law variant at knot `j`, computed in
/// one pass over the knots. Partials of parameters a variant does not use
/// are zero.
pub fn eval_with_grad(
    v: LawVariant,
    p: &MplParams,
    ss: &SampledSchedule,
    j: usize,
) -> Result<(f64, [f64; 7]), LawError> {
    let mut g = [0.0f64; 7];
    g[0] = 1.0; // dL/dL0
    if let LawVariant::Cdsl = v {
        let t = ss.steps[j] as f64;
        let pw = t.powf(-p.alpha);
        g[1] = pw;
        g[4] = -p.a * pw * t.ln();
        return Ok((p.l0 + p.a * pw, g));
    }
    let base = ss.cum[j] + ss.warmup_sum;
    let pw = base.powf(-p.alpha);
    g[1] = pw;
    g[4] = -p.a * pw * base.ln();
    let mut ld = 0.0;

    match v {
        LawVariant::Opl | LawVariant::Cdsl => {}
        LawVariant::Lldl => {
            let drop = ss.peak_lr - ss.lrs[j];
            ld = p.b * drop;
            g[2] = -drop;
        }
        LawVariant::Mtl { lambda } => {
            let mut acc = 0.0;
            for i in 0..=j {
                let d = ss.lr_before(i) - ss.lrs[i];
                if d == 0.0 {
                    continue;
                }
                let m = (ss.steps[j] - ss.steps[i] + 1) as f64;
                acc += d * (1.0 - lambda.powf(m)) / (1.0 - lambda);
            }
            ld = p.b * acc;
            g[2] = -acc;
        }
        LawVariant::Mpl | LawVariant::NoGamma | LawVariant::Spl | LawVariant::Mel => {
            let gamma = match v {
                LawVariant::Mpl => p.gamma,
                _ => 0.0,
            };
            // Accumulators for d(LD)/d{B, C, beta, gamma}; the loss gets
            // the opposite sign.
            let (mut acc_b, mut acc_c, mut acc_beta, mut acc_gamma) = (0.0, 0.0, 0.0, 0.0);
            for i in 0..=j {
                let d = ss.lr_before(i) - ss.lrs[i];
                if d == 0.0 {
                    continue;
                }
                match v {
                    LawVariant::Mel => {
                        let x = ss.tail_sum(i, j);
                        let e = (-p.c * x).exp();
                        acc_b += d * (1.0 - e);
                        acc_c += p.b * d * x * e;
                    }
                    _ => {
                        let (x, eta) = match v {
                            LawVariant::Spl => {
                                ((ss.steps[j] - ss.steps[i] + 1) as f64, ss.lrs[i])
                            }
                            _ => {
                                let s_tail = ss.tail_sum(i, j);
                                let eta = ss.lrs[i];
                                if eta <= 0.0 {
                                    if s_tail <= 0.0 {
                                        continue;
                                    }
                                    return Err(LawError::UndefinedExponent { k: ss.steps[i] });
                                }
                                let x = if gamma == 0.0 {
                                    s_tail
                                } else {
                                    eta.powf(-gamma) * s_tail
                                };
                                (x, eta)
                            }
                        };
                        let cx1 = p.c * x + 1.0;
                        let sat = cx1.powf(-p.beta);
                        acc_b += d * (1.0 - sat);
                        let inner = p.b * d * p.beta * cx1.powf(-p.beta - 1.0);
                        acc_c += inner * x;
                        acc_beta += p.b * d * sat * cx1.ln();
                        if let LawVariant::Mpl = v {
                            // dx/dgamma = -ln(eta) x
                            acc_gamma += inner * p.c * (-eta.ln()) * x;
                        }
                    }
                }
            }
            ld = p.b * acc_b;
            g[2] = -acc_b;
            g[3] = -acc_c;
            g[5] = -acc_beta;
            if let LawVariant::Mpl = v {
                g[6] = -acc_gamma;
            }
        }
    }
    Ok((p.l0 + p.a * pw - ld, g))
}

/// Brute-force O(t^2) momentum-law double sum
/// S_2 = sum_{i=1..t} sum_{k=1..i} (eta_{k-1} - eta_k) lambda^{i-k}.
/// Used as an oracle for the closed form.
pub fn mtl_double_sum(lambda: f64, s: &Schedule, t: usize) -> Result<f64, LawError> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(LawError::LambdaRange(lambda));
    }
    let horizon = s.horizon();
    if t < 1 || t > horizon {
        return Err(LawError::StepOutOfRange { t, horizon });
    }
    let mut total = 0.0;
    for i in 1..=t {
        let mut inner = 0.0;
        for k in 1..=i {
            let d = s.lr(k - 1) - s.lr(k);
            if d != 0.0 {
                inner += d * lambda.powi((i - k) as i32);
            }
        }
        total += inner;
    }
    Ok(total)
}

/// Momentum-law prediction evaluated through the double-sum oracle.
pub fn mtl_predict_via_double_sum(
    p: &MplParams,
    lambda: f64,
    s: &Schedule,
    t: usize,
) -> Result<f64, LawError> {
    let s2 = mtl_double_sum(lambda, s, t)?;
    let base = s.total_to(t) + s.warmup_sum();
    Ok(p.l0 + p.a * base.powf(-p.alpha) - p.b * s2)
}
