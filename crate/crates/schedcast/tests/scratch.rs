use schedcast::fit::*;
use schedcast::law::*;
use schedcast::optimize::*;
use schedcast::schedule::*;

#[test]
#[ignore]
fn golden_cosine_value() {
    // Literal direct-summation oracle, O(T^2).
    let t_total = 24000usize;
    let peak = 3e-4f64;
    let w = 2160usize;
    let (l0, a, b, c, alpha, beta, gamma) = (2.52, 0.66, 614.30, 0.16, 0.42, 0.88, 0.56);
    let lr = |t: usize| -> f64 {
        if t == 0 {
            peak
        } else {
            0.5 * (1.0 + 0.1) * peak
                + 0.5 * (1.0 - 0.1) * peak * (std::f64::consts::PI * t as f64 / t_total as f64).cos()
        }
    };
    let s_w = 0.5 * peak * w as f64;
    let t = t_total;
    let mut s1 = 0.0;
    for tau in 1..=t {
        s1 += lr(tau);
    }
    let mut ld = 0.0;
    for k in 1..=t {
        let d = lr(k - 1) - lr(k);
        if d == 0.0 {
            continue;
        }
        let mut sk = 0.0;
        for tau in k..=t {
            sk += lr(tau);
        }
        let x = lr(k).powf(-gamma) * sk;
        ld += d * (1.0 - (c * x + 1.0).powf(-beta));
    }
    let oracle = l0 + a * (s1 + s_w).powf(-alpha) - b * ld;
    println!("oracle value at t=24000: {oracle:.17e}");
    let s = Schedule::new(
        ScheduleKind::Cosine {
            total_steps: t_total,
            end_ratio: 0.1,
        },
        w,
        peak,
    )
    .unwrap();
    let p = MplParams {
        l0,
        a,
        b,
        c,
        alpha,
        beta,
        gamma,
    };
    let lib = predict(LawVariant::Mpl, &p, &s, &[t_total]).unwrap()[0];
    println!("library value at t=24000: {lib:.17e}");
    println!("rel diff: {:.3e}", ((oracle - lib) / oracle).abs());
}

fn table5() -> MplParams {
    MplParams {
        l0: 2.52,
        a: 0.66,
        b: 614.30,
        c: 0.16,
        alpha: 0.42,
        beta: 0.88,
        gamma: 0.56,
    }
}

fn knots(s: &Schedule, every: usize) -> Vec<usize> {
    let mut steps: Vec<usize> = (1..=s.horizon() / every).map(|i| i * every).collect();
    if let ScheduleKind::TwoStage { stage_a_steps, .. } = s.kind() {
        // Post-switch region sampled every 2 steps.
        steps.push(*stage_a_steps);
        let mut t = stage_a_steps + 1;
        while t <= (stage_a_steps + 200).min(s.horizon()) {
            steps.push(t);
            t += 2;
        }
        steps.sort_unstable();
        steps.dedup();
    }
    steps
}

#[test]
#[ignore]
fn rehearse_criterion6() {
    let p = table5();
    let train = [
        Schedule::new(ScheduleKind::Constant { total_steps: 24000 }, 2160, 3e-4).unwrap(),
        Schedule::new(
            ScheduleKind::Cosine {
                total_steps: 24000,
                end_ratio: 0.1,
            },
            2160,
            3e-4,
        )
        .unwrap(),
        Schedule::new(
            ScheduleKind::TwoStage {
                stage_a_steps: 8000,
                stage_b_steps: 8000,
                stage_b_lr: 9e-5,
            },
            2160,
            3e-4,
        )
        .unwrap(),
    ];
    let data: Vec<(Schedule, LossCurve)> = train
        .iter()
        .map(|s| {
            let steps = knots(s, 100);
            let losses = predict(LawVariant::Mpl, &p, s, &steps).unwrap();
            (s.clone(), LossCurve { steps, losses })
        })
        .collect();
    for (spp, phases) in [(3000usize, 2usize), (6000, 2)] {
        let t0 = std::time::Instant::now();
        let cfg = FitConfig {
            steps_per_phase: spp,
            phases,
            trace_every: 0,
            ..FitConfig::default()
        };
        let report = fit_law(LawVariant::Mpl, &data, &cfg).unwrap();
        let q = report.params;
        println!(
            "spp={spp}: obj={:.3e} L0={:.4} A={:.4} B={:.1} C={:.4} a={:.4} b={:.4} g={:.4} [{:.1?}]",
            report.objective, q.l0, q.a, q.b, q.c, q.alpha, q.beta, q.gamma, t0.elapsed()
        );
        for (tag, kind) in [
            (
                "wsd",
                ScheduleKind::Wsd {
                    total_steps: 24000,
                    stable_steps: 20000,
                    end_lr: 3e-5,
                },
            ),
            (
                "wsdld",
                ScheduleKind::Wsdld {
                    total_steps: 24000,
                    stable_steps: 20000,
                    end_lr: 3e-5,
                },
            ),
        ] {
            let s = Schedule::new(kind, 2160, 3e-4).unwrap();
            let steps: Vec<usize> = (1..=240).map(|i| i * 100).collect();
            let gt = predict(LawVariant::Mpl, &p, &s, &steps).unwrap();
            let pred = predict(LawVariant::Mpl, &report.params, &s, &steps).unwrap();
            let m = schedcast::metrics::evaluate_metrics(&pred, &gt).unwrap();
            println!(
                "  {tag}: R2={:.6} WorstE={:.2e}",
                m.r2.unwrap(),
                m.worste
            );
        }
    }
}

#[test]
#[ignore]
fn rehearse_criterion5() {
    use schedcast::quad::*;
    let base_eta = 0.2f64;
    let base_t = 512usize;
    let spec = QuadSpec {
        d: 4096,
        nu: 0.3,
        lambda_cap: 1.0,
        rho: 0.2,
        r: 2.0,
        kappa: 0.5,
        init_scale: 1.0,
        eta0: base_eta,
        mu: 1.0,
    };
    let inst = sample_spectra(&spec, 42).unwrap();
    let mut prev: Option<f64> = None;
    for level in 0..4 {
        let eta = base_eta / 2f64.powi(level);
        let t_total = base_t << level;
        let s = Schedule::new(
            ScheduleKind::TwoStage {
                stage_a_steps: t_total / 2,
                stage_b_steps: t_total / 2,
                stage_b_lr: eta / 3.0,
            },
            0,
            eta,
        )
        .unwrap();
        let exact = exact_expected_loss(&inst, &s).unwrap();
        let theory = theory_curve(&spec, &s, eta).unwrap();
        // Checkpoints at fixed fractions of the horizon, so S_1(t) is
        // comparable across levels.
        let max_err = (1..=16)
            .map(|i| {
                let t = i * t_total / 16;
                (exact[t] - theory[t - 1]).abs()
            })
            .fold(0.0f64, f64::max);
        let ratio = prev.map(|p| max_err / p);
        println!(
            "level {level}: eta={eta:.4} T={t_total} max_err={max_err:.4} ratio={ratio:?}"
        );
        prev = Some(max_err);
    }
}

#[test]
#[ignore]
fn rehearse_criterion7() {
    // Fitted-ish params (from the criterion-6 rehearsal).
    let p = MplParams {
        l0: 2.5207,
        a: 0.6592,
        b: 648.3,
        c: 0.9085,
        alpha: 0.4204,
        beta: 0.6463,
        gamma: 0.4078,
    };
    for (iters, steps) in [(30000usize, vec![2e-8, 1e-8]), (60000, vec![2e-8, 1e-8])] {
        let t0 = std::time::Instant::now();
        let cfg = OptConfig {
            horizon: 24000,
            eta0: 3e-4,
            warmup_steps: 2160,
            step_sizes: steps,
            iters,
            eps_clamp: 1e-10,
            seed: 0,
        };
        let (sched, result) = optimize_schedule(LawVariant::Mpl, &p, &cfg).unwrap();
        let phase = detect_phases(&sched, 0.02).unwrap();
        let baselines = baseline_final_losses(
            LawVariant::Mpl,
            &p,
            24000,
            2160,
            3e-4,
            3e-5,
            &[3000, 4000, 5000, 6000, 7000],
        )
        .unwrap();
        let best_baseline = baselines
            .iter()
            .map(|&(_, v)| v)
            .fold(f64::INFINITY, f64::min);
        let cosine = baselines[0].1;
        println!(
            "iters={iters}: opt={:.6} cosine={:.6} best_baseline={:.6} t_stable={} exp={:?} ratio={:.2e} [{:.0?}]",
            result.predicted_final_loss,
            cosine,
            best_baseline,
            phase.t_stable,
            phase.decay_exponent,
            phase.final_lr_ratio,
            t0.elapsed()
        );
    }
}

#[test]
#[ignore]
fn debug_cdsl() {
    let (l0, a, alpha) = (2.8, 3.5, 0.37);
    let mut data = Vec::new();
    for t in [1496usize, 2008, 2776, 4056, 5336, 7200] {
        let s = Schedule::new(
            ScheduleKind::Cosine {
                total_steps: t,
                end_ratio: 0.1,
            },
            216,
            3e-4,
        )
        .unwrap();
        let steps: Vec<usize> = (1..=t / 100).map(|i| i * 100).collect();
        let losses: Vec<f64> = steps
            .iter()
            .map(|&st| l0 + a * (st as f64).powf(-alpha))
            .collect();
        data.push((s, LossCurve { steps, losses }));
    }
    for (steps, phases, ms) in [(4000usize, 2usize, 8usize), (20000, 2, 8), (20000, 3, 8), (60000, 2, 8)] {
        let cfg = FitConfig {
            steps_per_phase: steps,
            phases,
            multi_start: ms,
            trace_every: 0,
            ..FitConfig::default()
        };
        let report = fit_law(LawVariant::Cdsl, &data, &cfg).unwrap();
        println!(
            "CDSL steps={steps} phases={phases}: l0={:.4} a={:.4} alpha={:.5} obj={:.3e}",
            report.params.l0, report.params.a, report.params.alpha, report.objective
        );
    }
}

#[test]
#[ignore]
fn rehearse_criterion8() {
    // Fit MTL on the criterion-6 dataset, then optimize its surrogate.
    let p = table5();
    let train = [
        Schedule::new(ScheduleKind::Constant { total_steps: 24000 }, 2160, 3e-4).unwrap(),
        Schedule::new(
            ScheduleKind::Cosine {
                total_steps: 24000,
                end_ratio: 0.1,
            },
            2160,
            3e-4,
        )
        .unwrap(),
        Schedule::new(
            ScheduleKind::TwoStage {
                stage_a_steps: 8000,
                stage_b_steps: 8000,
                stage_b_lr: 9e-5,
            },
            2160,
            3e-4,
        )
        .unwrap(),
    ];
    let data: Vec<(Schedule, LossCurve)> = train
        .iter()
        .map(|s| {
            let steps = knots(s, 100);
            let losses = predict(LawVariant::Mpl, &p, s, &steps).unwrap();
            (s.clone(), LossCurve { steps, losses })
        })
        .collect();
    let t0 = std::time::Instant::now();
    let cfg = FitConfig {
        steps_per_phase: 800,
        phases: 2,
        multi_start: 2,
        trace_every: 0,
        ..FitConfig::default()
    };
    let report = fit_law(LawVariant::Mtl { lambda: 0.99 }, &data, &cfg).unwrap();
    println!(
        "MTL fit: {:?} B={:.3} obj={:.3e} [{:.0?}]",
        report.variant, report.params.b, report.objective, t0.elapsed()
    );
    let t0 = std::time::Instant::now();
    let ocfg = OptConfig {
        horizon: 24000,
        eta0: 3e-4,
        warmup_steps: 2160,
        step_sizes: vec![1e-7, 2e-8],
        iters: 20000,
        eps_clamp: 1e-10,
        seed: 0,
    };
    let (sched, result) = optimize_schedule(report.variant, &report.params, &ocfg).unwrap();
    let lrs = sched.post_lrs();
    let interior = lrs
        .iter()
        .filter(|&&lr| lr > ocfg.eps_clamp && lr < ocfg.eta0 - 1e-8)
        .count();
    let n_peak = lrs.iter().filter(|&&lr| lr >= ocfg.eta0 - 1e-8).count();
    println!(
        "MTL opt: best={:.6} interior={interior} peak={n_peak} [{:.0?}]",
        result.predicted_final_loss,
        t0.elapsed()
    );
}

#[test]
#[ignore]
fn debug_opt() {
    let p = MplParams {
        l0: 2.52,
        a: 0.66,
        b: 614.30,
        c: 0.16,
        alpha: 0.42,
        beta: 0.88,
        gamma: 0.56,
    };
    let cfg = OptConfig {
        horizon: 600,
        eta0: 3e-4,
        warmup_steps: 216,
        step_sizes: vec![5e-7, 2e-7],
        iters: 4000,
        eps_clamp: 1e-10,
        seed: 0,
    };
    let (sched, result) = optimize_schedule(LawVariant::Mpl, &p, &cfg).unwrap();
    let direct = predicted_final_loss(LawVariant::Mpl, &p, &sched).unwrap();
    println!(
        "surrogate best {:.17e}, direct {:.17e}, diff {:.3e}",
        result.predicted_final_loss,
        direct,
        (direct - result.predicted_final_loss).abs()
    );
    let lrs = sched.post_lrs();
    println!("first lrs {:?}", &lrs[..5]);
    println!("last lrs {:?}", &lrs[595..]);
}

#[test]
#[ignore]
fn debug_mtl_collapse() {
    let p = MplParams {
        l0: 2.52,
        a: 0.66,
        b: 40.0,
        c: 0.16,
        alpha: 0.42,
        beta: 0.88,
        gamma: 0.56,
    };
    let cfg = OptConfig {
        horizon: 400,
        eta0: 3e-4,
        warmup_steps: 216,
        step_sizes: vec![1e-6],
        iters: 6000,
        eps_clamp: 1e-10,
        seed: 0,
    };
    // Hand-computed surrogate at the full-collapse-at-1 schedule.
    let mut lrs = vec![0.0; 400];
    let hand = Schedule::from_lrs(216, 3e-4, lrs.clone()).unwrap();
    let v = predicted_final_loss(LawVariant::Mtl { lambda: 0.99 }, &p, &hand).unwrap();
    println!("collapse-at-1 predicted loss: {v}");
    lrs = vec![3e-4; 400];
    for (i, lr) in lrs.iter_mut().enumerate() {
        if i >= 21 {
            *lr = 0.0;
        }
    }
    let hand = Schedule::from_lrs(216, 3e-4, lrs).unwrap();
    let v = predicted_final_loss(LawVariant::Mtl { lambda: 0.99 }, &p, &hand).unwrap();
    println!("collapse-at-22 predicted loss: {v}");
    let mut best_k = (f64::INFINITY, 0usize);
    for k in 0..=399usize {
        let mut lrs = vec![3e-4; 400];
        for lr in lrs.iter_mut().skip(k) {
            *lr = 0.0;
        }
        let s = Schedule::from_lrs(216, 3e-4, lrs).unwrap();
        let v = predicted_final_loss(LawVariant::Mtl { lambda: 0.99 }, &p, &s).unwrap();
        if v < best_k.0 {
            best_k = (v, k);
        }
    }
    println!("best peak-then-zero: k={} loss={:.6}", best_k.1, best_k.0);
    // And the best constant schedule is the all-peak one:
    let s = Schedule::from_lrs(216, 3e-4, vec![3e-4; 400]).unwrap();
    println!(
        "all-peak loss: {:.6}",
        predicted_final_loss(LawVariant::Mtl { lambda: 0.99 }, &p, &s).unwrap()
    );
    for (iters, lr) in [(6000usize, 1e-6), (30000, 1e-6), (30000, 5e-6), (60000, 2e-6)] {
        let cfg = OptConfig {
            iters,
            step_sizes: vec![lr],
            ..cfg.clone()
        };
        let (sched, result) =
            optimize_schedule(LawVariant::Mtl { lambda: 0.99 }, &p, &cfg).unwrap();
        let lrs = sched.post_lrs();
        let interior = lrs
            .iter()
            .filter(|&&lr| lr > cfg.eps_clamp && lr < cfg.eta0 - 1e-8)
            .count();
        let n_peak = lrs.iter().filter(|&&lr| lr >= cfg.eta0 - 1e-8).count();
        let n_zero = lrs.iter().filter(|&&lr| lr <= cfg.eps_clamp).count();
        println!(
            "iters={iters} lr={lr:.0e}: best={:.6}, interior={interior}, peak={n_peak}, zero={n_zero}",
            result.predicted_final_loss
        );
    }
}
