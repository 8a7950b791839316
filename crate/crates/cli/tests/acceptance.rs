//! Acceptance suite. Each check prints one PASS/FAIL line with its timing;
//! the process exits nonzero if any check fails.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use contact_field::eval::{combine_losses, direction_loss, eff_norm, focal_loss, Confusion, LossConfig};
use contact_field::force_opt::{cone_project, solve, Candidate, SocpProblem, SolverConfig};
use contact_field::real_label::{label_episode_real, HeuristicConfig, RealLabels};
use contact_field::sim_label::{
    extrapolate_forces, soft_contact_prob, ExtrapolationConfig, SoftContactConfig, SparseContact,
};
use contact_field::synth::{generate_episode, NoiseConfig, SynthConfig, SynthEpisode};
use contact_field::tactile::{savitzky_golay, spatial_filter, FilterConfig};
use contact_field::{CalibrationScale, FrameId, Vec3, Wrench};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;
type Named = (&'static str, fn() -> Check);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(elapsed < limit, || format!("took {elapsed:?}, limit {limit:?}"))
}

fn random_unit(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v / n;
        }
    }
}

fn in_cone(v: &Vec3, n: &Vec3, tol: f64) -> bool {
    v.norm() <= 2.0 * v.dot(n) + tol
}

// ---------------------------------------------------------------- soft contact

fn soft_contact_anchor() -> Check {
    let start = Instant::now();
    let cfg = SoftContactConfig::default();
    let c = soft_contact_prob(&[0.0, 0.005], &cfg).map_err(|e| e.to_string())?;
    let lambda = cfg.length_scale();
    let self_check = (-(0.005 / lambda).powf(1.7)).exp();
    let elapsed = start.elapsed();
    ensure(c[0] == 1.0, || format!("c(0) = {}", c[0]))?;
    ensure((c[1] - 0.5).abs() < 1e-9, || format!("c(5mm) = {}", c[1]))?;
    ensure((self_check - 0.5).abs() < 1e-9, || format!("self-consistency {self_check}"))?;
    within(elapsed, Duration::from_millis(1))?;
    Ok(format!("c(5mm)={:.12} lambda_c={lambda:.7} in {elapsed:?}", c[1]))
}

// ------------------------------------------------------------------------ cone

fn feasible_sample(rng: &mut ChaCha8Rng, n: &Vec3) -> Vec3 {
    let a = rng.gen_range(0.0..4.0);
    let mut t = random_unit(rng);
    t -= n * t.dot(n);
    let t = t.normalize() * (3f64.sqrt() * a * rng.gen_range(0.0f64..1.0).sqrt());
    n * a + t
}

fn cone_geometry() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst_gap: f64 = 0.0;
    let mut worst_idem: f64 = 0.0;
    for case in 0..100_000 {
        let n = random_unit(&mut rng);
        let v = random_unit(&mut rng) * rng.gen_range(0.0..5.0);
        let p = cone_project(&v, &n);
        let gap = (p.norm() - 2.0 * p.dot(&n)).max(0.0);
        worst_gap = worst_gap.max(gap);
        worst_idem = worst_idem.max((cone_project(&p, &n) - p).norm());
        if case % 1000 == 0 {
            let d = (v - p).norm();
            for _ in 0..10_000 {
                let y = feasible_sample(&mut rng, &n);
                ensure((v - y).norm() >= d - 1e-12, || {
                    format!("case {case}: sample closer than projection")
                })?;
            }
        }
    }
    ensure(worst_gap <= 1e-12, || format!("feasibility gap {worst_gap:e}"))?;
    ensure(worst_idem <= 1e-12, || format!("idempotence error {worst_idem:e}"))?;

    // bisect the polar angle at which vectors stop being fixed points
    let mut worst_angle: f64 = 0.0;
    for _ in 0..20 {
        let n = random_unit(&mut rng);
        let mut t = random_unit(&mut rng);
        t = (t - n * t.dot(&n)).normalize();
        let at = |th: f64| n * th.cos() + t * th.sin();
        let (mut lo, mut hi) = (0.0f64, std::f64::consts::FRAC_PI_2);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let v = at(mid);
            if cone_project(&v, &n) == v {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        worst_angle = worst_angle.max((lo.to_degrees() - 60.0).abs());
    }
    ensure(worst_angle <= 1e-9, || format!("half-angle off by {worst_angle:e} deg"))?;
    let elapsed = start.elapsed();
    within(elapsed, Duration::from_secs(5))?;
    Ok(format!(
        "gap {worst_gap:.1e}, idempotence {worst_idem:.1e}, angle error {worst_angle:.1e} deg in {elapsed:?}"
    ))
}

// ------------------------------------------------------------------------ SOCP

const LC: f64 = 0.05;

/// Dense projected gradient on the stacked unknowns, constant 1/L step,
/// projection through the cone's boundary ray.
fn reference_objective(p: &SocpProblem) -> f64 {
    let mut cols: Vec<[f64; 6]> = Vec::new();
    for c in &p.candidates {
        for k in 0..3 {
            let mut e = Vec3::zeros();
            e[k] = 1.0;
            let t = c.position.cross(&e) / LC;
            cols.push([e.x, e.y, e.z, t.x, t.y, t.z]);
        }
    }
    let f = p.target.force;
    let tau = p.target.torque / LC;
    let target = [f.x, f.y, f.z, tau.x, tau.y, tau.z];
    let ridge: Vec<f64> = p.candidates.iter().map(|c| p.reg_lambda / (c.prob + p.reg_eps)).collect();
    let residual = |x: &[f64]| {
        let mut r = target.map(|v| -v);
        for (col, xi) in cols.iter().zip(x) {
            for k in 0..6 {
                r[k] += col[k] * xi;
            }
        }
        r
    };
    let fro: f64 = cols.iter().flatten().map(|v| v * v).sum();
    let step = 0.5 / (fro + ridge.iter().cloned().fold(0.0, f64::max));
    let mut x = vec![0.0; cols.len()];
    for _ in 0..500_000 {
        let r = residual(&x);
        let mut moved = 0.0;
        for (k, col) in cols.iter().enumerate() {
            let g = 2.0 * col.iter().zip(&r).map(|(a, b)| a * b).sum::<f64>() + 2.0 * ridge[k / 3] * x[k];
            moved += (step * g).abs();
            x[k] -= step * g;
        }
        for (i, c) in p.candidates.iter().enumerate() {
            let v = Vec3::new(x[3 * i], x[3 * i + 1], x[3 * i + 2]);
            let a = v.dot(&c.normal);
            let t = v - c.normal * a;
            let proj = if v.norm() <= 2.0 * a {
                v
            } else if t.norm() < 1e-300 {
                Vec3::zeros()
            } else {
                let d = (c.normal + t.normalize() * 3f64.sqrt()) / 2.0;
                d * v.dot(&d).max(0.0)
            };
            x[3 * i..3 * i + 3].copy_from_slice(proj.as_slice());
        }
        if moved < 1e-16 {
            break;
        }
    }
    let r = residual(&x);
    r.iter().map(|v| v * v).sum::<f64>()
        + x.iter().enumerate().map(|(k, v)| ridge[k / 3] * v * v).sum::<f64>()
}

fn random_problem(rng: &mut ChaCha8Rng) -> SocpProblem {
    let n = rng.gen_range(2..=8);
    let cands = (0..n)
        .map(|_| Candidate {
            position: Vec3::new(rng.gen_range(-0.05..0.05), rng.gen_range(-0.05..0.05), rng.gen_range(-0.1..0.0)),
            normal: random_unit(rng),
            prob: rng.gen_range(0.0..1.0),
        })
        .collect();
    let dir: [f64; 6] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
    let scale = rng.gen_range(0.0..5.0) / dir.iter().map(|v| v * v).sum::<f64>().sqrt();
    let force = Vec3::new(dir[0], dir[1], dir[2]) * scale;
    let torque = Vec3::new(dir[3], dir[4], dir[5]) * scale * LC;
    SocpProblem::new(cands, Wrench::new(force, torque, FrameId::Gripper))
}

fn socp_correctness() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cfg = SolverConfig::default();
    let mut times = Vec::new();
    let mut worst_rel: f64 = 0.0;
    let mut worst_kkt: f64 = 0.0;
    for case in 0..50 {
        let p = random_problem(&mut rng);
        let t0 = Instant::now();
        let sol = solve(&p, &cfg).map_err(|e| e.to_string())?;
        times.push(t0.elapsed());
        let reference = reference_objective(&p);
        let rel = if reference.abs() < 1e-12 {
            (sol.objective - reference).abs()
        } else {
            (sol.objective - reference).abs() / reference
        };
        worst_rel = worst_rel.max(rel);
        worst_kkt = worst_kkt.max(sol.kkt_residual);
        ensure(sol.forces.iter().zip(&p.candidates).all(|(f, c)| in_cone(f, &c.normal, 1e-12)), || {
            format!("case {case}: infeasible force")
        })?;
    }
    ensure(worst_rel <= 1e-6, || format!("objective off by {worst_rel:e} relative"))?;
    ensure(worst_kkt < 1e-6, || format!("kkt {worst_kkt:e}"))?;

    let single = SocpProblem::new(
        vec![Candidate { position: Vec3::zeros(), normal: Vec3::z(), prob: 1.0 }],
        Wrench::new(Vec3::new(0.0, 0.0, 2.0), Vec3::zeros(), FrameId::Gripper),
    );
    let t0 = Instant::now();
    let f = solve(&single, &cfg).map_err(|e| e.to_string())?.forces[0];
    times.push(t0.elapsed());
    ensure((f - Vec3::new(0.0, 0.0, 1.98022)).norm() < 1e-5, || format!("single candidate gave {f:?}"))?;

    let total: Duration = times.iter().sum();
    times.sort();
    let median = times[times.len() / 2];
    within(total, Duration::from_secs(10))?;
    within(median, Duration::from_millis(10))?;
    Ok(format!(
        "rel {worst_rel:.1e}, kkt {worst_kkt:.1e}, fz {:.6}, total {total:?}, median {median:?}",
        f.z
    ))
}

// --------------------------------------------------------------------- filters

fn filter_identities() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let series: Vec<f64> = (0..200).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let out = savitzky_golay(&series, 7, 1).map_err(|e| e.to_string())?;
    let mut worst_avg: f64 = 0.0;
    for i in 3..series.len() - 3 {
        let avg = series[i - 3..=i + 3].iter().sum::<f64>() / 7.0;
        worst_avg = worst_avg.max((out[i] - avg).abs());
    }
    ensure(worst_avg <= 1e-12, || format!("moving-average gap {worst_avg:e}"))?;

    let ramp: Vec<f64> = (0..50).map(|t| -1.25 + 0.37 * t as f64).collect();
    let out = savitzky_golay(&ramp, 7, 1).map_err(|e| e.to_string())?;
    let worst_ramp = ramp
        .iter()
        .zip(&out)
        .map(|(a, b)| (a - b).abs() / a.abs().max(1.0))
        .fold(0.0, f64::max);
    // rounding only: a handful of ulps
    ensure(worst_ramp <= 1e-13, || format!("ramp error {worst_ramp:e}"))?;

    let mut worst_sum: f64 = 0.0;
    for &(rows, cols) in &[(7usize, 9usize), (9, 7), (5, 5)] {
        for sigma in [0.25, 0.5, 1.0, 2.0] {
            let grid: Vec<f64> = (0..rows * cols).map(|_| rng.gen_range(-1e-3..1e-3)).collect();
            let out = spatial_filter(&grid, rows, cols, sigma).map_err(|e| e.to_string())?;
            let diff = (grid.iter().sum::<f64>() - out.iter().sum::<f64>()).abs();
            worst_sum = worst_sum.max(diff);
        }
    }
    ensure(worst_sum <= 1e-9, || format!("sum drift {worst_sum:e}"))?;
    Ok(format!("avg {worst_avg:.1e}, ramp {worst_ramp:.1e}, sum {worst_sum:.1e}"))
}

// ---------------------------------------------------------------------- losses

fn loss_anchors() -> Check {
    let cfg = LossConfig::default();
    let focal = focal_loss(&[0.5], &[1.0], &cfg).map_err(|e| e.to_string())?;
    // -alpha (1 - p)^gamma ln p at p = 0.5
    let oracle = -0.9 * 0.5f64.powf(0.75) * 0.5f64.ln();
    ensure((focal - 0.37099).abs() < 1e-4, || format!("focal {focal}"))?;
    ensure((focal - oracle).abs() < 1e-12, || format!("focal {focal} vs {oracle}"))?;

    for (p, m, d) in [(0.0, 0.0, 0.0), (1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0), (0.3, 0.2, 0.7)] {
        let total = combine_losses(p, m, d, &cfg).total;
        let expected = p + 2.0 * (1.5 * m + d);
        ensure((total - expected).abs() < 1e-12, || format!("composite ({p},{m},{d}) = {total}"))?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for _ in 0..10_000 {
        let a = random_unit(&mut rng) * rng.gen_range(0.0..3.0);
        let b = random_unit(&mut rng) * rng.gen_range(0.01..3.0);
        let l = direction_loss(&[a], &[b], &cfg).map_err(|e| e.to_string())?;
        lo = lo.min(l);
        hi = hi.max(l);
    }
    ensure(lo >= 0.0 && hi <= 2.0, || format!("direction loss range [{lo}, {hi}]"))?;
    Ok(format!("focal {focal:.6}, direction range [{lo:.3}, {hi:.3}]"))
}

// --------------------------------------------------------------- extrapolation

fn random_contacts(rng: &mut ChaCha8Rng, k: usize) -> Vec<SparseContact> {
    (0..k)
        .map(|_| {
            let p = Vec3::new(rng.gen_range(-0.04..0.04), rng.gen_range(-0.01..0.01), rng.gen_range(-0.1..-0.05));
            SparseContact::new(p, random_unit(rng), rng.gen_range(0.0..5.0))
        })
        .collect()
}

fn random_cloud(rng: &mut ChaCha8Rng, n: usize) -> (Vec<Vec3>, Vec<f64>) {
    let pts = (0..n)
        .map(|_| Vec3::new(rng.gen_range(-0.04..0.04), rng.gen_range(-0.01..0.01), rng.gen_range(-0.1..-0.05)))
        .collect();
    let d = (0..n).map(|_| rng.gen_range(-0.002..0.008)).collect();
    (pts, d)
}

fn force_extrapolation() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let unclipped = ExtrapolationConfig { clip_percentile: None, ..Default::default() };
    let clipped = ExtrapolationConfig::default();
    let mut worst_lin: f64 = 0.0;
    let mut clip_fired = 0;
    let mut worst_clip: f64 = 0.0;
    for _ in 0..200 {
        let (pts, d) = random_cloud(&mut rng, 80);
        let k = rng.gen_range(1..6);
        let a = random_contacts(&mut rng, k);
        let mut b = a.clone();
        for c in b.iter_mut() {
            c.magnitude = rng.gen_range(0.0..5.0);
        }
        let (s, t) = (rng.gen_range(0.0..2.0), rng.gen_range(0.0..2.0));
        let mut mix = a.clone();
        for (m, (ca, cb)) in mix.iter_mut().zip(a.iter().zip(&b)) {
            m.magnitude = s * ca.magnitude + t * cb.magnitude;
        }
        let run = |c: &[SparseContact], cfg| extrapolate_forces(&pts, &d, c, cfg).map_err(|e| e.to_string());
        let (fa, fb, fm) = (run(&a, &unclipped)?, run(&b, &unclipped)?, run(&mix, &unclipped)?);
        for i in 0..pts.len() {
            worst_lin = worst_lin.max((fm[i] - (fa[i] * s + fb[i] * t)).norm());
        }
        let fmax = a.iter().map(|c| c.magnitude).fold(0.0, f64::max);
        for f in run(&a, &clipped)?.iter().chain(&fa) {
            ensure(f.norm() <= fmax * (1.0 + 1e-12), || format!("hull bound broken: {} > {fmax}", f.norm()))?;
        }

        // independent percentile over nonzero magnitudes, linear interpolation
        let mut mags: Vec<f64> = fa.iter().map(|f| f.norm()).filter(|m| *m > 0.0).collect();
        if mags.len() < 2 {
            continue;
        }
        mags.sort_by(f64::total_cmp);
        let rank = 0.98 * (mags.len() - 1) as f64;
        let (i, frac) = (rank.floor() as usize, rank.fract());
        let cap = mags[i] + frac * (mags[(i + 1).min(mags.len() - 1)] - mags[i]);
        let top = *mags.last().unwrap();
        if top > cap {
            clip_fired += 1;
            let out_max = run(&a, &clipped)?.iter().map(|f| f.norm()).fold(0.0, f64::max);
            worst_clip = worst_clip.max((out_max - cap).abs());
        }
    }
    ensure(worst_lin <= 1e-9, || format!("linearity error {worst_lin:e}"))?;
    ensure(clip_fired > 0, || "clipping never fired".into())?;
    ensure(worst_clip <= 1e-9, || format!("post-clip max off by {worst_clip:e}"))?;
    Ok(format!("linearity {worst_lin:.1e}, clip fired {clip_fired}x, clip error {worst_clip:.1e}"))
}

// ------------------------------------------------------------------ end to end

fn label(ep: &SynthEpisode, lambda: f64) -> Result<RealLabels, String> {
    label_episode_real(
        &ep.frames,
        &FilterConfig::disabled(),
        &HeuristicConfig::default(),
        CalibrationScale::identity(),
        lambda,
        1e-3,
    )
    .map_err(|e| e.to_string())
}

fn pooled_f1(ep: &SynthEpisode, labels: &RealLabels) -> f64 {
    let mut conf = Confusion::default();
    for (field, set) in labels.fields.iter().zip(&ep.contact_sets) {
        let mut truth = vec![false; field.len()];
        for &i in set {
            truth[i] = true;
        }
        conf = conf.merge(Confusion::from_scores(&field.prob, &truth, 0.5).unwrap());
    }
    conf.f1()
}

/// Largest per-frame wrench residual, absolute and relative to the injected norm.
fn worst_residual(ep: &SynthEpisode, labels: &RealLabels) -> (f64, f64) {
    let mut worst = (0.0f64, 0.0f64);
    for (k, frame) in ep.frames.iter().enumerate() {
        let pose = &frame.gripper_pose;
        let mut force = Vec3::zeros();
        let mut torque = Vec3::zeros();
        for (p, f) in frame.tool_points.iter().zip(&labels.fields[k].force) {
            let fg = pose.world_to_gripper_vector(f);
            force += fg;
            torque += pose.world_to_gripper_point(p).cross(&fg);
        }
        let target = ep.wrenches[k];
        let err = Wrench::new(force - target.force, torque - target.torque, FrameId::Gripper).scaled_norm();
        let norm = target.scaled_norm();
        worst.0 = worst.0.max(err);
        if norm > 0.0 {
            worst.1 = worst.1.max(err / norm);
        } else if err > 0.0 {
            worst.1 = f64::INFINITY;
        }
    }
    worst
}

fn end_to_end() -> Check {
    let start = Instant::now();
    let mut worst_clean = 0.0f64;
    let mut worst_default = 0.0f64;
    let mut min_f1 = 1.0f64;
    for seed in 0..10 {
        let cfg = SynthConfig { rng_seed: seed, ..Default::default() };
        let ep = generate_episode(&cfg).map_err(|e| e.to_string())?;
        let labels = label(&ep, 1e-6)?;
        let f1 = pooled_f1(&ep, &labels);
        ensure(f1 == 1.0, || format!("seed {seed}: zero-noise F1 {f1}"))?;
        worst_clean = worst_clean.max(worst_residual(&ep, &labels).0);
        worst_default = worst_default.max(worst_residual(&ep, &label(&ep, 0.01)?).1);
    }
    ensure(worst_clean <= 1e-4, || format!("zero-noise residual {worst_clean:e}"))?;

    let mut worst_noisy = 0.0f64;
    for seed in 0..10 {
        let cfg = SynthConfig {
            rng_seed: 100 + seed,
            noise: NoiseConfig { point_sigma: 0.001, marker_sigma: 0.05 },
            ..Default::default()
        };
        let ep = generate_episode(&cfg).map_err(|e| e.to_string())?;
        let labels = label(&ep, 0.01)?;
        min_f1 = min_f1.min(pooled_f1(&ep, &labels));
        worst_noisy = worst_noisy.max(worst_residual(&ep, &labels).1);
    }
    ensure(min_f1 >= 0.9, || format!("noisy F1 {min_f1}"))?;
    ensure(worst_noisy <= 0.05, || format!("noisy residual {:.2}% of |W|", 100.0 * worst_noisy))?;
    let elapsed = start.elapsed();
    within(elapsed, Duration::from_secs(30))?;
    Ok(format!(
        "clean residual {worst_clean:.1e} (lambda 1e-6; default lambda {:.2}% of |W|), noisy F1 {min_f1:.3}, noisy residual {:.2}% in {elapsed:?}",
        100.0 * worst_default,
        100.0 * worst_noisy
    ))
}

// -------------------------------------------------------------------- eff norm

fn eff_norm_cases() -> Check {
    let e = |a, b, c| eff_norm(a, b, c).map_err(|e| e.to_string());
    let a = e(0.6, 0.08, 0.1)?;
    let b = e(0.9, 0.08, 0.1)?;
    let c = e(0.42, 0.1, 0.1)?;
    ensure(a == 0.6 / (0.08 / 0.1), || format!("eff 0.6 gave {a}"))?;
    ensure((a - 0.75).abs() < 1e-15, || format!("eff 0.6 gave {a}"))?;
    ensure(b == 1.0, || format!("eff 0.9 gave {b}"))?;
    ensure(c == 0.42, || format!("full blade gave {c}"))?;
    ensure(eff_norm(0.5, 0.0, 0.1).is_err(), || "zero blade accepted".into())?;
    Ok(format!("{a}, {b}, {c}"))
}

// ------------------------------------------------------------------------- CLI

fn cli(dir: &Path, args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_contact-field"))
        .current_dir(dir)
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("{args:?}: {:?} {}", out.status.code(), String::from_utf8_lossy(&out.stderr)));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn jsonl(path: &Path) -> Result<Vec<serde_json::Value>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| e.to_string()))
        .collect()
}

fn cli_round_trip() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = tmp.path();
    let start = Instant::now();
    cli(d, &["synth", "--out", "ep.jsonl", "--frames", "100"])?;
    cli(d, &["filter", "--episode", "ep.jsonl", "--out", "filtered.jsonl"])?;
    cli(d, &["label-real", "--episode", "filtered.jsonl", "--out", "fields.jsonl"])?;
    let stdout = cli(d, &["eval", "--pred", "fields.jsonl", "--gt", "ep.jsonl", "--report", "report.json"])?;
    let elapsed = start.elapsed();

    let episode = jsonl(&d.join("ep.jsonl"))?;
    let filtered = jsonl(&d.join("filtered.jsonl"))?;
    let fields = jsonl(&d.join("fields.jsonl"))?;
    let diag = jsonl(&d.join("fields.jsonl.diag.jsonl"))?;
    ensure(episode.len() == 100 && filtered.len() == 100, || "episode length changed".into())?;
    ensure(fields.len() == 100 && diag.len() == 100, || format!("{} fields, {} diagnostics", fields.len(), diag.len()))?;
    for (f, e) in fields.iter().zip(&episode) {
        let n = e["tool_points"].as_array().map_or(0, |a| a.len());
        let c = f["labels"]["c"].as_array().ok_or("field lacks labels.c")?;
        let force = f["labels"]["f"].as_array().ok_or("field lacks labels.f")?;
        ensure(f["t"] == e["t"], || "time stamps differ".into())?;
        ensure(c.len() == n && force.len() == n, || "field length differs from cloud".into())?;
        ensure(c.iter().all(|v| v.as_f64().is_some_and(|p| (0.0..=1.0).contains(&p))), || "probability out of range".into())?;
        ensure(force.iter().all(|v| v.as_array().is_some_and(|a| a.len() == 3)), || "force not a 3-vector".into())?;
    }
    let report: serde_json::Value = serde_json::from_str(&stdout).map_err(|e| e.to_string())?;
    for key in ["frames", "points", "f1", "force_mse", "loss"] {
        ensure(report.get(key).is_some(), || format!("report lacks {key}"))?;
    }
    within(elapsed, Duration::from_secs(10))?;
    Ok(format!("F1 {}, force MSE {:.2e} in {elapsed:?}", report["f1"], report["force_mse"].as_f64().unwrap_or(f64::NAN)))
}

fn main() {
    let checks: [Named; 9] = [
        ("soft-contact anchor", soft_contact_anchor),
        ("cone geometry", cone_geometry),
        ("SOCP correctness", socp_correctness),
        ("filter identities", filter_identities),
        ("loss anchors", loss_anchors),
        ("force extrapolation", force_extrapolation),
        ("end-to-end synthetic pipeline", end_to_end),
        ("eff norm", eff_norm_cases),
        ("CLI round trip", cli_round_trip),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        match check() {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name}: {why}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", checks.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
