//! Learning-rate schedules: construction, validation, prefix sums, and
//! the trapezoid LR-area surrogate.
//!
//! Step indexing convention: `t = 1` is the first step after warmup, and
//! the implicit `eta_0` equals the peak LR reached at the end of warmup.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ScheduleError {
    #[error("invalid schedule parameter: {0}")]
    InvalidParam(String),
    #[error("step index out of range: k={k}, t={t}, horizon={horizon}")]
    IndexOutOfRange { k: usize, t: usize, horizon: usize },
    #[error("learning rate is zero at step {0}; equivalent step undefined")]
    ZeroLr(usize),
    #[error("validation steps must be strictly increasing and within [1, T]: {0}")]
    BadValidationSteps(String),
}

/// Multi-stage step-decay description: `boundaries[0] < … < boundaries[n]`,
/// stage `i` (1-based) spans `boundaries[i-1]+1 ..= boundaries[i]` at
/// `stage_lrs[i-1]`. Steps `1..=boundaries[0]` stay at the peak LR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSpec {
    pub boundaries: Vec<usize>,
    pub stage_lrs: Vec<f64>,
}

impl StageSpec {
    pub fn validate(&self, peak_lr: f64) -> Result<(), ScheduleError> {
        if self.stage_lrs.is_empty() || self.boundaries.len() != self.stage_lrs.len() + 1 {
            return Err(ScheduleError::InvalidParam(format!(
                "need n stages and n+1 boundaries, got {} and {}",
                self.stage_lrs.len(),
                self.boundaries.len()
            )));
        }
        if !self.boundaries.windows(2).all(|w| w[0] < w[1]) {
            return Err(ScheduleError::InvalidParam(
                "boundaries must be strictly increasing".into(),
            ));
        }
        if self.stage_lrs.iter().any(|&lr| lr <= 0.0) {
            return Err(ScheduleError::InvalidParam(
                "stage LRs must be positive".into(),
            ));
        }
        if !self.stage_lrs.windows(2).all(|w| w[0] > w[1]) {
            return Err(ScheduleError::InvalidParam(
                "stage LRs must be strictly decreasing".into(),
            ));
        }
        if self.stage_lrs[0] > peak_lr {
            return Err(ScheduleError::InvalidParam(format!(
                "first stage LR {} exceeds peak {}",
                self.stage_lrs[0], peak_lr
            )));
        }
        Ok(())
    }
}

/// Schedule family plus its kind-specific parameters. `total_steps` is the
/// post-warmup horizon `T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ScheduleKind {
    Constant {
        total_steps: usize,
    },
    Cosine {
        total_steps: usize,
        /// Final LR as a fraction of the peak; 0.1 unless stated otherwise.
        #[serde(default = "default_end_ratio")]
        end_ratio: f64,
    },
    /// Warmup-Stable-Decay with exponential decay to `end_lr` (inclusive at T).
    Wsd {
        total_steps: usize,
        stable_steps: usize,
        end_lr: f64,
    },
    /// WSD with linear decay to `end_lr`.
    Wsdld {
        total_steps: usize,
        stable_steps: usize,
        end_lr: f64,
    },
    /// WSD with cosine-shaped decay to `end_lr`.
    WsdCosine {
        total_steps: usize,
        stable_steps: usize,
        end_lr: f64,
    },
    /// WSD with power-1.5 ("sqrt-cube") decay to zero:
    /// eta_t = peak * ((T - t) / (T - stable))^1.5.
    Wsdsc {
        total_steps: usize,
        stable_steps: usize,
    },
    TwoStage {
        stage_a_steps: usize,
        stage_b_steps: usize,
        stage_b_lr: f64,
    },
    MultiStage {
        stages: StageSpec,
    },
    /// Constant phase followed by triangle waves between the peak and `floor_lr`.
    Cyclic {
        total_steps: usize,
        stable_steps: usize,
        half_cycle: usize,
        floor_lr: f64,
    },
    /// Piecewise-linear interpolation between seeded random milestones in
    /// [lo_lr, hi_lr], anchored at the peak LR at step 0.
    RandomPolyline {
        total_steps: usize,
        interval: usize,
        lo_lr: f64,
        hi_lr: f64,
        seed: u64,
    },
    Explicit {
        lrs: Vec<f64>,
    },
}

fn default_end_ratio() -> f64 {
    0.1
}

impl ScheduleKind {
    pub fn tag(&self) -> &'static str {
        match self {
            ScheduleKind::Constant { .. } => "constant",
            ScheduleKind::Cosine { .. } => "cosine",
            ScheduleKind::Wsd { .. } => "wsd",
            ScheduleKind::Wsdld { .. } => "wsdld",
            ScheduleKind::WsdCosine { .. } => "wsd-cosine",
            ScheduleKind::Wsdsc { .. } => "wsdsc",
            ScheduleKind::TwoStage { .. } => "two-stage",
            ScheduleKind::MultiStage { .. } => "multi-stage",
            ScheduleKind::Cyclic { .. } => "cyclic",
            ScheduleKind::RandomPolyline { .. } => "random-polyline",
            ScheduleKind::Explicit { .. } => "explicit",
        }
    }
}

/// An immutable post-warmup LR schedule with cached prefix sums.
#[derive(Debug, Clone)]
pub struct Schedule {
    kind: ScheduleKind,
    warmup_steps: usize,
    peak_lr: f64,
    post_lrs: Vec<f64>,
    /// prefix[t] = S_1(t) for t in 0..=T, Kahan-compensated.
    prefix: Vec<f64>,
    monotone: bool,
    label: Option<String>,
}

impl Schedule {
    /// Build a schedule from a kind description, warmup length, and peak LR.
    pub fn new(kind: ScheduleKind, warmup_steps: usize, peak_lr: f64) -> Result<Self, ScheduleError> {
        if !(peak_lr > 0.0) {
            return Err(ScheduleError::InvalidParam(format!(
                "peak LR must be positive, got {peak_lr}"
            )));
        }
        let post_lrs = generate_lrs(&kind, peak_lr)?;
        if post_lrs.is_empty() {
            return Err(ScheduleError::InvalidParam("empty schedule (T = 0)".into()));
        }
        if post_lrs.iter().any(|lr| !lr.is_finite() || *lr < 0.0) {
            return Err(ScheduleError::InvalidParam(
                "per-step LRs must be finite and nonnegative".into(),
            ));
        }
        let mut prev = peak_lr;
        let mut monotone = true;
        for &lr in &post_lrs {
            if lr > prev {
                monotone = false;
                break;
            }
            prev = lr;
        }
        let prefix = kahan_prefix(&post_lrs);
        Ok(Schedule {
            kind,
            warmup_steps,
            peak_lr,
            post_lrs,
            prefix,
            monotone,
            label: None,
        })
    }

    /// Attach a free-form label reported by `kind_tag`.
    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn from_lrs(
        warmup_steps: usize,
        peak_lr: f64,
        lrs: Vec<f64>,
    ) -> Result<Self, ScheduleError> {
        Schedule::new(ScheduleKind::Explicit { lrs }, warmup_steps, peak_lr)
    }

    pub fn kind(&self) -> &ScheduleKind {
        &self.kind
    }

    pub fn kind_tag(&self) -> &str {
        self.label.as_deref().unwrap_or_else(|| self.kind.tag())
    }

    pub fn horizon(&self) -> usize {
        self.post_lrs.len()
    }

    pub fn warmup_steps(&self) -> usize {
        self.warmup_steps
    }

    pub fn peak_lr(&self) -> f64 {
        self.peak_lr
    }

    pub fn post_lrs(&self) -> &[f64] {
        &self.post_lrs
    }

    pub fn is_monotone(&self) -> bool {
        self.monotone
    }

    /// LR at step `t`; `t = 0` returns the peak LR.
    pub fn lr(&self, t: usize) -> f64 {
        if t == 0 {
            self.peak_lr
        } else {
            self.post_lrs[t - 1]
        }
    }

    /// LR sum over the warmup phase: S_W = peak * W / 2 (linear warmup).
    pub fn warmup_sum(&self) -> f64 {
        0.5 * self.peak_lr * self.warmup_steps as f64
    }

    /// S_k(t) = sum of eta_k ..= eta_t, from the cached cumulative array.
    pub fn lr_prefix_sum(&self, k: usize, t: usize) -> Result<f64, ScheduleError> {
        let horizon = self.horizon();
        if k < 1 || k > t || t > horizon {
            return Err(ScheduleError::IndexOutOfRange { k, t, horizon });
        }
        Ok(self.prefix[t] - self.prefix[k - 1])
    }

    /// S_1(t) without error plumbing for hot paths; t in 0..=T.
    pub fn total_to(&self, t: usize) -> f64 {
        self.prefix[t]
    }

    /// Equal-LR-sum step Z_k(t) = k - 1 + S_k(t) / eta_k in the k-th
    /// auxiliary process; Z_0(t) = S_1(t) / eta_0.
    pub fn equivalent_step(&self, k: usize, t: usize) -> Result<f64, ScheduleError> {
        let horizon = self.horizon();
        if t < 1 || t > horizon || k > t {
            return Err(ScheduleError::IndexOutOfRange { k, t, horizon });
        }
        if k == 0 {
            return Ok(self.prefix[t] / self.peak_lr);
        }
        let eta_k = self.lr(k);
        if eta_k <= 0.0 {
            return Err(ScheduleError::ZeroLr(k));
        }
        Ok((k - 1) as f64 + self.lr_prefix_sum(k, t)? / eta_k)
    }

    /// Cumulative LR-area surrogate at each validation step.
    ///
    /// Segments contribute `(v - u) * (lr_u + lr_v) / 2 + (lr_v - lr_u) / 2`,
    /// which equals the exact prefix sum whenever the LR is linear in the
    /// step index between consecutive samples (the polyline assumption).
    pub fn lr_area_at(&self, validation_steps: &[usize]) -> Result<Vec<f64>, ScheduleError> {
        validate_steps(validation_steps, self.horizon())?;
        let mut out = Vec::with_capacity(validation_steps.len());
        let mut prev_step = 0usize;
        let mut prev_lr = self.peak_lr;
        let mut acc = 0.0;
        for &v in validation_steps {
            let lr_v = self.lr(v);
            acc += segment_area(prev_step, prev_lr, v, lr_v);
            out.push(acc);
            prev_step = v;
            prev_lr = lr_v;
        }
        Ok(out)
    }
}

/// LR sum of the integer steps in (u, v] assuming the LR is linear on [u, v].
pub fn segment_area(u: usize, lr_u: f64, v: usize, lr_v: f64) -> f64 {
    let n = (v - u) as f64;
    n * 0.5 * (lr_u + lr_v) + 0.5 * (lr_v - lr_u)
}

fn validate_steps(steps: &[usize], horizon: usize) -> Result<(), ScheduleError> {
    if steps.is_empty() {
        return Err(ScheduleError::BadValidationSteps("empty".into()));
    }
    let mut prev = 0usize;
    for &s in steps {
        if s <= prev {
            return Err(ScheduleError::BadValidationSteps(format!(
                "step {s} after {prev} is not strictly increasing"
            )));
        }
        if s > horizon {
            return Err(ScheduleError::BadValidationSteps(format!(
                "step {s} exceeds horizon {horizon}"
            )));
        }
        prev = s;
    }
    Ok(())
}

fn kahan_prefix(lrs: &[f64]) -> Vec<f64> {
    let mut prefix = Vec::with_capacity(lrs.len() + 1);
    prefix.push(0.0);
    let mut sum = 0.0;
    let mut comp = 0.0;
    for &lr in lrs {
        let y = lr - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
        prefix.push(sum);
    }
    prefix
}

fn generate_lrs(kind: &ScheduleKind, peak: f64) -> Result<Vec<f64>, ScheduleError> {
    match kind {
        ScheduleKind::Constant { total_steps } => {
            require(*total_steps >= 1, "T must be >= 1")?;
            Ok(vec![peak; *total_steps])
        }
        ScheduleKind::Cosine {
            total_steps,
            end_ratio,
        } => {
            require(*total_steps >= 1, "T must be >= 1")?;
            require(
                (0.0..=1.0).contains(end_ratio),
                "cosine end ratio must lie in [0, 1]",
            )?;
            let t_total = *total_steps as f64;
            Ok((1..=*total_steps)
                .map(|t| {
                    let c = (std::f64::consts::PI * t as f64 / t_total).cos();
                    0.5 * (1.0 + end_ratio) * peak + 0.5 * (1.0 - end_ratio) * peak * c
                })
                .collect())
        }
        ScheduleKind::Wsd {
            total_steps,
            stable_steps,
            end_lr,
        } => {
            validate_wsd(*total_steps, *stable_steps)?;
            require(*end_lr > 0.0 && *end_lr <= peak, "WSD end LR must be in (0, peak]")?;
            let span = (*total_steps - *stable_steps) as f64;
            let ratio = end_lr / peak;
            Ok((1..=*total_steps)
                .map(|t| {
                    if t <= *stable_steps {
                        peak
                    } else {
                        peak * ratio.powf((t - *stable_steps) as f64 / span)
                    }
                })
                .collect())
        }
        ScheduleKind::Wsdld {
            total_steps,
            stable_steps,
            end_lr,
        } => {
            validate_wsd(*total_steps, *stable_steps)?;
            require(*end_lr >= 0.0 && *end_lr <= peak, "WSDLD end LR must be in [0, peak]")?;
            let span = (*total_steps - *stable_steps) as f64;
            Ok((1..=*total_steps)
                .map(|t| {
                    if t <= *stable_steps {
                        peak
                    } else {
                        peak + (end_lr - peak) * (t - *stable_steps) as f64 / span
                    }
                })
                .collect())
        }
        ScheduleKind::WsdCosine {
            total_steps,
            stable_steps,
            end_lr,
        } => {
            validate_wsd(*total_steps, *stable_steps)?;
            require(*end_lr >= 0.0 && *end_lr <= peak, "end LR must be in [0, peak]")?;
            let span = (*total_steps - *stable_steps) as f64;
            Ok((1..=*total_steps)
                .map(|t| {
                    if t <= *stable_steps {
                        peak
                    } else {
                        let x = std::f64::consts::PI * (t - *stable_steps) as f64 / span;
                        end_lr + 0.5 * (peak - end_lr) * (1.0 + x.cos())
                    }
                })
                .collect())
        }
        ScheduleKind::Wsdsc {
            total_steps,
            stable_steps,
        } => {
            validate_wsd(*total_steps, *stable_steps)?;
            let span = (*total_steps - *stable_steps) as f64;
            Ok((1..=*total_steps)
                .map(|t| {
                    if t <= *stable_steps {
                        peak
                    } else {
                        peak * ((*total_steps - t) as f64 / span).powf(1.5)
                    }
                })
                .collect())
        }
        ScheduleKind::TwoStage {
            stage_a_steps,
            stage_b_steps,
            stage_b_lr,
        } => {
            require(*stage_a_steps >= 1 && *stage_b_steps >= 1, "both stages need steps")?;
            require(
                *stage_b_lr > 0.0 && *stage_b_lr <= peak,
                "stage-B LR must be in (0, peak]",
            )?;
            let mut lrs = vec![peak; *stage_a_steps];
            lrs.extend(std::iter::repeat(*stage_b_lr).take(*stage_b_steps));
            Ok(lrs)
        }
        ScheduleKind::MultiStage { stages } => {
            stages.validate(peak)?;
            let total = *stages.boundaries.last().unwrap();
            require(total >= 1, "multi-stage horizon must be >= 1")?;
            let mut lrs = Vec::with_capacity(total);
            lrs.extend(std::iter::repeat(peak).take(stages.boundaries[0]));
            for (i, &lr) in stages.stage_lrs.iter().enumerate() {
                let len = stages.boundaries[i + 1] - stages.boundaries[i];
                lrs.extend(std::iter::repeat(lr).take(len));
            }
            Ok(lrs)
        }
        ScheduleKind::Cyclic {
            total_steps,
            stable_steps,
            half_cycle,
            floor_lr,
        } => {
            require(*total_steps >= 1, "T must be >= 1")?;
            require(*stable_steps < *total_steps, "stable phase must end before T")?;
            require(*half_cycle >= 1, "half cycle must be >= 1")?;
            require(
                *floor_lr >= 0.0 && *floor_lr < peak,
                "cyclic floor LR must be in [0, peak)",
            )?;
            let half = *half_cycle as f64;
            Ok((1..=*total_steps)
                .map(|t| {
                    if t <= *stable_steps {
                        peak
                    } else {
                        let phase = (t - *stable_steps) % (2 * *half_cycle);
                        let frac = if phase <= *half_cycle {
                            phase as f64 / half
                        } else {
                            (2.0 * half - phase as f64) / half
                        };
                        peak + (floor_lr - peak) * frac
                    }
                })
                .collect())
        }
        ScheduleKind::RandomPolyline {
            total_steps,
            interval,
            lo_lr,
            hi_lr,
            seed,
        } => {
            require(*total_steps >= 1, "T must be >= 1")?;
            require(*interval >= 1, "milestone interval must be >= 1")?;
            require(
                *lo_lr > 0.0 && lo_lr < hi_lr,
                "need 0 < lo_lr < hi_lr for the milestone range",
            )?;
            require(
                peak >= *lo_lr && peak <= *hi_lr,
                "peak LR must lie within the milestone range [lo_lr, hi_lr]",
            )?;
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let mut milestones = vec![(0usize, peak)];
            let mut pos = 0usize;
            while pos < *total_steps {
                pos = (pos + interval).min(*total_steps);
                milestones.push((pos, rng.gen_range(*lo_lr..=*hi_lr)));
            }
            let mut lrs = Vec::with_capacity(*total_steps);
            for w in milestones.windows(2) {
                let (u, lr_u) = w[0];
                let (v, lr_v) = w[1];
                for t in (u + 1)..=v {
                    let frac = (t - u) as f64 / (v - u) as f64;
                    lrs.push(lr_u + (lr_v - lr_u) * frac);
                }
            }
            Ok(lrs)
        }
        ScheduleKind::Explicit { lrs } => Ok(lrs.clone()),
    }
}

fn validate_wsd(total: usize, stable: usize) -> Result<(), ScheduleError> {
    require(total >= 1, "T must be >= 1")?;
    require(stable < total, "stable phase must end before T")
}

fn require(cond: bool, msg: &str) -> Result<(), ScheduleError> {
    if cond {
        Ok(())
    } else {
        Err(ScheduleError::InvalidParam(msg.into()))
    }
}

/// On-disk schedule record.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleRecord {
    pub kind: ScheduleKind,
    pub warmup_steps: usize,
    pub peak_lr: f64,
}

impl ScheduleRecord {
    pub fn build(self) -> Result<Schedule, ScheduleError> {
        Schedule::new(self.kind, self.warmup_steps, self.peak_lr)
    }
}

impl From<&Schedule> for ScheduleRecord {
    fn from(s: &Schedule) -> Self {
        ScheduleRecord {
            kind: s.kind.clone(),
            warmup_steps: s.warmup_steps,
            peak_lr: s.peak_lr,
        }
    }
}
