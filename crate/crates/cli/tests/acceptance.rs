//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if
//! any fails. Set `FLOWTRACK_WRITE_FIXTURES=1` to regenerate the metric
//! fixture trajectories (the golden report is hand-written).

use std::cell::Cell;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::{Matrix4, Vector3, Vector4};
use ndarray::{s, Array2, Array3, Array4, ArrayView2, ArrayView3, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use flowtrack_core::annotate::{disparity_to_depth, project_background, project_vehicle};
use flowtrack_core::correlation::{build_pyramid, lookup, lookup_width};
use flowtrack_core::features::FeatureEncoder;
use flowtrack_core::geometry::{uvd_to_xyz, xyz_to_uvd};
use flowtrack_core::loss::{fd_gradient, LossConfig, Probe};
use flowtrack_core::metrics::{denormalize_2d, evaluate, normalize_2d};
use flowtrack_core::synthdata::{generate, inject_query_outliers, BodySpec, SceneSpec};
use flowtrack_core::tracker::{baseline_sf_chain, baseline_tap, plan_windows, random_weights};
use flowtrack_core::updater::{build_positional, Residuals, TransformerUpdater, Updater, OUTPUT_HEAD_PREFIXES};
use flowtrack_core::{
    CameraIntrinsics, CoordFrame, Point3, PoseLog, Result as CoreResult, RigidTransform, RunConfig, TrajectorySet,
    Tracker,
};

type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn core<T>(r: CoreResult<T>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/metric")
}

/// Reduced network used wherever only plumbing matters.
fn small_config() -> RunConfig {
    RunConfig {
        window: 4,
        levels: 2,
        radius: 1,
        feature_dim: 8,
        motion_dim: 8,
        intermediate_dim: 8,
        transformer_dim: 16,
        block_pairs: 1,
        heads: 2,
        mlp_ratio: 2,
        encoder_widths: [4, 4, 8],
        iterations: 2,
        ..RunConfig::default()
    }
}

fn still_tracker(cfg: &RunConfig) -> CoreResult<Tracker> {
    let mut w = random_weights(cfg, 11);
    w.zero_prefixed(&OUTPUT_HEAD_PREFIXES);
    Tracker::from_weights(&w, cfg)
}

// --- AC1 -------------------------------------------------------------------

/// Hat-function form of border-clamped bilinear interpolation.
fn hat_sample(map: ArrayView2<'_, f64>, x: f64, y: f64) -> f64 {
    let (h, w) = map.dim();
    let x = x.clamp(0.0, (w - 1) as f64);
    let y = y.clamp(0.0, (h - 1) as f64);
    let mut acc = 0.0;
    for i in 0..h {
        for j in 0..w {
            let wx = (1.0 - (x - j as f64).abs()).max(0.0);
            let wy = (1.0 - (y - i as f64).abs()).max(0.0);
            acc += wx * wy * map[[i, j]];
        }
    }
    acc
}

fn ac1() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let (h, w) = (rng.random_range(1..=8usize), rng.random_range(1..=8usize));
        let (c, n, frames) = (rng.random_range(1..=4), rng.random_range(1..=4), rng.random_range(1..=4));
        let max_levels = 1 + (h.min(w) as f64).log2().floor() as usize;
        let levels = rng.random_range(1..=max_levels);
        let radius = rng.random_range(0..=2usize);
        let q = Array3::from_shape_fn((n, frames, c), |_| rng.random_range(-1.0f32..1.0));
        let f = Array4::from_shape_fn((frames, c, h, w), |_| rng.random_range(-1.0f32..1.0));
        let p = Array3::from_shape_fn((n, frames, 2), |(_, _, k)| {
            let extent = if k == 0 { w } else { h } as f64;
            rng.random_range(-1.5..extent + 0.5)
        });
        let pyr = core(build_pyramid(q.view(), f.view(), levels))?;
        let got = lookup(&pyr, p.view(), radius);
        let per = (2 * radius + 1).pow(2);
        ensure!(got.dim() == (n, frames, levels * per), "lookup shape {:?}", got.dim());
        for a in 0..n {
            for t in 0..frames {
                for l in 0..levels {
                    let b = 1usize << l;
                    let (hl, wl) = (h >> l, w >> l);
                    let pooled = Array2::from_shape_fn((hl, wl), |(i, j)| {
                        let mut sum = 0.0;
                        for y in i * b..(i + 1) * b {
                            for x in j * b..(j + 1) * b {
                                sum += (0..c).map(|ch| q[[a, t, ch]] as f64 * f[[t, ch, y, x]] as f64).sum::<f64>();
                            }
                        }
                        sum / (b * b) as f64
                    });
                    let (cx, cy) = (p[[a, t, 0]] / b as f64, p[[a, t, 1]] / b as f64);
                    let r = radius as isize;
                    let mut k = l * per;
                    for dy in -r..=r {
                        for dx in -r..=r {
                            let want = hat_sample(pooled.view(), cx + dx as f64, cy + dy as f64);
                            worst = worst.max((got[[a, t, k]] as f64 - want).abs());
                            k += 1;
                        }
                    }
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure!(worst <= 1e-5, "max deviation {worst:e}");
    ensure!(secs < 1.0, "took {secs:.2} s");
    Ok(format!("20 random cases, max deviation {worst:.1e}, {secs:.3} s"))
}

// --- AC2 -------------------------------------------------------------------

fn ac2() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let k = CameraIntrinsics::new(
            rng.random_range(20.0..2000.0),
            rng.random_range(20.0..2000.0),
            rng.random_range(0.0..1000.0),
            rng.random_range(0.0..1000.0),
        )
        .unwrap();
        let p = Point3::new(rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0), rng.random_range(0.05..100.0));
        let back = core(uvd_to_xyz(core(xyz_to_uvd(&p, &k))?, &k))?;
        worst = worst.max((back - p).norm() / p.coords.norm());
        let (h, w) = (rng.random_range(1..2000usize), rng.random_range(1..2000usize));
        let uv = [rng.random_range(-100.0..2100.0), rng.random_range(-100.0..2100.0)];
        let [u2, v2] = denormalize_2d(normalize_2d(uv, h, w), h, w);
        let scale = uv[0].abs().max(uv[1].abs()).max(1.0);
        worst = worst.max((u2 - uv[0]).abs().max((v2 - uv[1]).abs()) / scale);
    }
    let secs = start.elapsed().as_secs_f64();
    ensure!(worst <= 1e-9, "max relative error {worst:e}");
    ensure!(secs < 1.0, "took {secs:.2} s");
    Ok(format!("10^4 points, max relative error {worst:.1e}, {secs:.3} s"))
}

// --- AC3 -------------------------------------------------------------------

fn random_pose(rng: &mut ChaCha8Rng) -> RigidTransform {
    let mut v = |r: f64| Vector3::new(rng.random_range(-r..r), rng.random_range(-r..r), rng.random_range(-r..r));
    let (a, t) = (v(3.0), v(10.0));
    RigidTransform::from_axis_angle(a, t)
}

fn ac3() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let hom = |p: &Point3| Vector4::new(p.x, p.y, p.z, 1.0);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let (w1, wt, b1, bt) = (random_pose(&mut rng), random_pose(&mut rng), random_pose(&mut rng), random_pose(&mut rng));
        let log = PoseLog::new(vec![w1, wt]).with_box("obj", vec![Some(b1), Some(bt)]);
        let x = Point3::new(rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0), rng.random_range(0.5..60.0));
        let inv = |m: Matrix4<f64>| m.try_inverse().unwrap();
        let m = |t: &RigidTransform| t.to_matrix();
        let bg = inv(m(&wt)) * m(&w1) * hom(&x);
        let veh = inv(m(&wt)) * inv(m(&bt)) * m(&b1) * m(&w1) * hom(&x);
        let gb = core(project_background(&x, &log, 1))?;
        let gv = core(project_vehicle(&x, &log, "obj", 1))?;
        for (got, want) in [(gb, bg), (gv, veh)] {
            let err = (got.coords - want.xyz()).norm() / want.xyz().norm().max(1.0);
            worst = worst.max(err);
        }
        let still = PoseLog::new(vec![w1, wt]).with_box("obj", vec![Some(b1), Some(b1)]);
        ensure!(
            core(project_vehicle(&x, &still, "obj", 1))? == core(project_background(&x, &still, 1))?,
            "still box does not reduce to the background chain"
        );
        let (fx, b, c) = (rng.random_range(50.0..2000.0), rng.random_range(0.05..1.0), rng.random_range(0.1..300.0));
        let d = core(disparity_to_depth(fx, b, c))?;
        ensure!(d == fx * b / c, "depth {d} != fx*b/c");
        worst = worst.max((fx * b / d - c).abs() / c);
    }
    ensure!(worst <= 1e-12, "max relative error {worst:e}");
    Ok(format!("10^3 random transform chains, max relative error {worst:.1e}"))
}

// --- AC4 -------------------------------------------------------------------

/// Derivative of `gamma^(n-1-i) * (|du| + |dv| + alpha |1/d - 1/d_gt|)`.
fn analytic_gradient(p: [f64; 3], gt: [f64; 3], coord: usize, weight: f64, alpha: f64) -> f64 {
    if coord < 2 {
        weight * (p[coord] - gt[coord]).signum()
    } else {
        weight * alpha * (1.0 / p[2] - 1.0 / gt[2]).signum() * -(p[2] * p[2]).recip()
    }
}

fn ac4() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let cfg = LossConfig::default();
    ensure!(cfg.gamma == 0.8 && cfg.alpha == 250.0, "defaults {cfg:?}");
    let h = 1e-5;
    let (mut checked, mut worst, mut depth_probes) = (0, 0.0f64, 0);
    while checked < 100 {
        let iters = rng.random_range(1..=4);
        let gt = Array3::from_shape_fn((2, 3, 3), |(_, _, c)| {
            if c == 2 { rng.random_range(0.5..20.0) } else { rng.random_range(-50.0..50.0) }
        });
        let its: Vec<Array3<f64>> = (0..iters)
            .map(|_| gt.mapv(|v| v) + Array3::from_shape_fn((2, 3, 3), |(_, _, c)| {
                if c == 2 { rng.random_range(-0.4..4.0) } else { rng.random_range(-5.0..5.0) }
            }))
            .collect();
        let views: Vec<ArrayView3<'_, f64>> = its.iter().map(|a| a.view()).collect();
        let probe = Probe {
            iteration: rng.random_range(0..iters),
            point: rng.random_range(0..2),
            frame: rng.random_range(0..3),
            coord: rng.random_range(0..3),
        };
        let Ok(fd) = fd_gradient(&views, gt.view(), None, &cfg, probe, h) else { continue };
        let idx = |a: &Array3<f64>| {
            let e = a.slice(s![probe.point, probe.frame, ..]);
            [e[0], e[1], e[2]]
        };
        let weight = cfg.gamma.powi((iters - 1 - probe.iteration) as i32);
        let want = analytic_gradient(idx(&its[probe.iteration]), idx(&gt), probe.coord, weight, cfg.alpha);
        let rel = (fd - want).abs() / want.abs().max(1e-12);
        worst = worst.max(rel);
        checked += 1;
        depth_probes += usize::from(probe.coord == 2);
    }
    ensure!(worst <= 1e-4, "max relative error {worst:e}");
    Ok(format!("100 probes ({depth_probes} on depth), max relative error {worst:.1e}"))
}

// --- AC5 -------------------------------------------------------------------

fn ac5() -> Check {
    let cfg = RunConfig::default();
    let plan = core(plan_windows(40, cfg.window))?;
    ensure!(plan.starts == vec![1, 9, 17, 25], "window starts {:?}", plan.starts);
    let mut spec = SceneSpec::new(64, 64, 40, 5);
    spec.queries = 8;
    spec.camera.velocity = [0.02, 0.0, 0.0];
    spec.bodies.push(BodySpec::plane([0.0, 0.0, 4.0], 8.0, 8.0));
    spec.bodies.push(BodySpec::ellipsoid([0.0, 0.1, 2.5], [0.5, 0.4, 0.3]).spinning([0.0, 0.1, 0.0]));
    let record = core(generate(&spec))?;
    let out = core(core(still_tracker(&cfg))?.track(&record.video, record.queries.view()))?;
    for t in 0..40 {
        ensure!(out.positions.index_axis(Axis(1), t) == record.queries, "frame {} moved", t + 1);
    }
    Ok("T=40, S=16: windows {1,9,17,25}; every frame equals the queries bit-for-bit".into())
}

// --- AC6 -------------------------------------------------------------------

/// Sets every depth in window `w` to `10 + w`; uv and templates stay put.
struct WindowStamp {
    calls: Cell<usize>,
    iterations: usize,
    feature_dim: usize,
}

impl Updater for WindowStamp {
    fn update(&self, _x: ArrayView3<'_, f32>, p: ArrayView3<'_, f64>) -> CoreResult<Residuals> {
        let w = self.calls.get() / self.iterations;
        self.calls.set(self.calls.get() + 1);
        let (n, frames, _) = p.dim();
        let mut delta_p = Array3::zeros((n, frames, 3));
        for a in 0..n {
            for t in 0..frames {
                delta_p[[a, t, 2]] = (10.0 + w as f64 - p[[a, t, 2]]) as f32;
            }
        }
        Ok(Residuals {
            delta_p,
            delta_q: Array3::zeros((n, frames, self.feature_dim)),
        })
    }
}

fn ac6() -> Check {
    let cfg = small_config();
    let frames = 10;
    let mut spec = SceneSpec::new(32, 48, frames, 6);
    spec.queries = 3;
    spec.bodies.push(BodySpec::plane([0.0, 0.0, 2.0], 8.0, 8.0));
    let record = core(generate(&spec))?;
    let encoder = core(FeatureEncoder::from_weights(&random_weights(&cfg, 1), &cfg.encoder()))?;
    let stub = WindowStamp {
        calls: Cell::new(0),
        iterations: cfg.iterations,
        feature_dim: cfg.feature_dim,
    };
    let tracker = core(Tracker::new(encoder, stub, &cfg))?;
    let k = record.intrinsics();
    let query_uvd = Array2::from_shape_fn((3, 3), |(a, c)| {
        let q = xyz_to_uvd(&Point3::new(record.queries[[a, 0]], record.queries[[a, 1]], record.queries[[a, 2]]), &k).unwrap();
        [q.u, q.v, q.d][c]
    });
    let prepared = core(tracker.prepare(&record.video))?;
    let out = core(tracker.track_prepared(&prepared, &record.video, query_uvd.view(), &mut ()))?;
    let plan = core(plan_windows(frames, cfg.window))?;
    for t in 1..=frames {
        let last = plan.starts.iter().rposition(|s| *s <= t).unwrap();
        for a in 0..3 {
            let d = out[[a, t - 1, 2]];
            ensure!(d == 10.0 + last as f64, "point {a}, frame {t}: depth {d}, expected window {last}");
            ensure!(out[[a, t - 1, 0]] == query_uvd[[a, 0]] && out[[a, t - 1, 1]] == query_uvd[[a, 1]], "uv moved");
        }
    }
    Ok(format!("windows {:?}: every overlap frame carries the later window's stamp", plan.starts))
}

// --- AC7 -------------------------------------------------------------------

fn ac7() -> Check {
    let start = Instant::now();
    let mut spec = SceneSpec::new(64, 96, 8, 7);
    spec.intrinsics = Some([64.0, 64.0, 48.0, 32.0]);
    spec.queries = 16;
    spec.bodies.push(BodySpec::plane([0.0, 0.0, 2.0], 10.0, 10.0));
    let mut record = core(generate(&spec))?;
    let tracker = core(still_tracker(&small_config()))?;
    let (h, w) = (64, 96);
    let clean = core(baseline_tap(&tracker, &record.video, record.queries.view()))?;
    let clean_epe = core(evaluate(&clean, &record.trajectories, h, w, None))?.epe3d;
    ensure!(clean_epe == 0.0, "noiseless EPE {clean_epe}");

    let hit = core(inject_query_outliers(&mut record, 0.1, 1.5, 70))?;
    let noisy = core(baseline_tap(&tracker, &record.video, record.queries.view()))?;
    let noisy_epe = core(evaluate(&noisy, &record.trajectories, h, w, None))?.epe3d;
    ensure!(noisy_epe >= 0.1, "EPE with outliers {noisy_epe}");

    // Ground truth scored against itself with corrupted entries masked out.
    let mut masked = record.trajectories.clone();
    for ((a, t), v) in masked.valid.indexed_iter_mut() {
        let [x, y, z] = record.trajectories.point(a, t);
        let q = xyz_to_uvd(&Point3::new(x, y, z), &record.intrinsics()).unwrap();
        *v &= record.outliers[[t, q.v.round() as usize, q.u.round() as usize]] == 0;
    }
    let gt_epe = core(evaluate(&record.trajectories, &masked, h, w, None))?.epe3d;
    ensure!(gt_epe == 0.0, "masked ground-truth EPE {gt_epe}");
    let secs = start.elapsed().as_secs_f64();
    ensure!(secs < 10.0, "took {secs:.1} s");
    Ok(format!(
        "TAP EPE 0 clean, {noisy_epe:.3} m with {hit} corrupted entries (1.5 m); masked GT EPE 0; {secs:.2} s"
    ))
}

// --- AC8 -------------------------------------------------------------------

fn ac8() -> Check {
    let occluded = 4; // 1-based
    let mut spec = SceneSpec::new(48, 64, 8, 8);
    spec.intrinsics = Some([64.0, 64.0, 32.0, 24.0]);
    spec.queries = 6;
    spec.bodies.push(BodySpec::plane([0.0, 0.0, 3.0], 20.0, 20.0).moving([0.1, 0.0, 0.0]));
    spec.bodies.push(BodySpec::plane([0.0, 0.0, 2.95], 20.0, 20.0).visible_in(occluded, occluded));
    let record = core(generate(&spec))?;
    let gt = &record.trajectories;
    for a in 0..gt.num_points() {
        for t in 0..8 {
            ensure!(gt.valid[[a, t]] == (t + 1 != occluded), "GT mask wrong at point {a}, frame {}", t + 1);
            ensure!(gt.point(a, t).iter().all(|v| v.is_finite()), "GT not recoverable");
        }
    }
    let pred = core(baseline_sf_chain(&record.video, record.queries.view(), &record.flow_source()))?;
    let err = |t: usize| -> f64 {
        (0..gt.num_points())
            .map(|a| {
                let (p, g) = (pred.point(a, t), gt.point(a, t));
                ((p[0] - g[0]).powi(2) + (p[1] - g[1]).powi(2) + (p[2] - g[2]).powi(2)).sqrt()
            })
            .sum::<f64>()
            / gt.num_points() as f64
    };
    let before = err(occluded - 2);
    let at = err(occluded - 1);
    ensure!(before < 1e-6, "drift before the occlusion: {before}");
    ensure!(at > 1e-3, "occlusion left no error: {at}");
    for t in occluded..8 {
        ensure!(err(t) >= at, "error shrank to {} at frame {}", err(t), t + 1);
    }
    Ok(format!(
        "error {before:.1e} before, {at:.3} m at occluded frame {occluded}, {:.3} m at frame 8; GT masked only there",
        err(7)
    ))
}

// --- AC9 -------------------------------------------------------------------

/// Two points over four frames with known errors; see the golden report.
fn metric_fixture() -> (TrajectorySet, TrajectorySet) {
    let k = CameraIntrinsics::new(40.0, 40.0, 128.0, 128.0).unwrap();
    let gt = Array3::from_shape_fn((2, 4, 3), |(_, _, c)| if c == 2 { 1.0 } else { 0.0 });
    let mut pred = Array3::zeros((2, 4, 3));
    for t in 0..4 {
        // Point A: 0.075 m (3 px) off along x in every frame.
        pred[[0, t, 0]] = 0.075;
        pred[[0, t, 2]] = 1.0;
        // Point B: 1.5 px off (20 px in frame 3), scaled along its ray so the
        // 3D error is 0.25 m (0.55 m in frame 3).
        let (x, e): (f64, f64) = if t == 2 { (20.0 / 40.0, 0.55) } else { (1.5 / 40.0, 0.25) };
        let a = 1.0 + x * x;
        let lambda = (2.0 + (4.0 - 4.0 * a * (1.0 - e * e)).sqrt()) / (2.0 * a);
        pred[[1, t, 0]] = lambda * x;
        pred[[1, t, 2]] = lambda;
    }
    (
        TrajectorySet::all_valid(pred, CoordFrame::Camera, Some(k)).unwrap(),
        TrajectorySet::all_valid(gt, CoordFrame::Camera, Some(k)).unwrap(),
    )
}

fn ac9() -> Check {
    let dir = fixtures();
    let (pred, gt) = metric_fixture();
    if std::env::var_os("FLOWTRACK_WRITE_FIXTURES").is_some() {
        core(pred.write(&dir.join("pred")))?;
        core(gt.write(&dir.join("gt")))?;
    }
    ensure!(core(TrajectorySet::read(&dir.join("pred")))? == pred, "committed pred fixture is stale");
    ensure!(core(TrajectorySet::read(&dir.join("gt")))? == gt, "committed gt fixture is stale");
    let out = Command::new(env!("CARGO_BIN_EXE_flowtrack"))
        .args(["eval", "--resolution", "256x256"])
        .arg(dir.join("pred"))
        .arg(dir.join("gt"))
        .output()
        .map_err(|e| e.to_string())?;
    ensure!(out.status.success(), "eval failed: {}", String::from_utf8_lossy(&out.stderr));
    let golden = fs::read(dir.join("report.txt")).map_err(|e| e.to_string())?;
    ensure!(
        out.stdout == golden,
        "report differs from golden:\n{}",
        String::from_utf8_lossy(&out.stdout)
    );
    Ok("CLI report byte-identical to the hand-computed golden file".into())
}

// --- AC10 ------------------------------------------------------------------

fn ac10() -> Check {
    let cfg = RunConfig::default();
    let ucfg = cfg.updater();
    let weights = random_weights(&cfg, 10);
    let updater = core(TransformerUpdater::from_weights(&weights, &ucfg))?;
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let (n, frames) = (5, 4);
    ensure!(cfg.correlation_dim() == 196 && ucfg.input_dim == 328, "input widths {} / {}", cfg.correlation_dim(), ucfg.input_dim);
    let x = Array3::from_shape_fn((n, frames, ucfg.input_dim), |_| rng.random_range(-1.0f32..1.0));
    let p = Array3::from_shape_fn((n, frames, 3), |(_, _, c)| {
        if c == 2 { rng.random_range(1.0..5.0) } else { rng.random_range(0.0..12.0) }
    });

    let mut row_err = 0.0f32;
    let base = core(updater.forward_with_probe(x.view(), p.view(), &mut |_, attn| {
        for row in attn.rows() {
            row_err = row_err.max((row.sum() - 1.0).abs());
        }
    }))?;
    ensure!(row_err <= 1e-6, "attention row sums off by {row_err:e}");
    ensure!(base.delta_p.dim() == (n, frames, 3), "dP shape {:?}", base.delta_p.dim());
    ensure!(base.delta_q.dim() == (n, frames, 128), "dQ shape {:?}", base.delta_q.dim());

    let perm = [3, 0, 4, 1, 2];
    let permuted = core(updater.forward(x.select(Axis(0), &perm).view(), p.select(Axis(0), &perm).view()))?;
    ensure!(permuted.delta_p == base.delta_p.select(Axis(0), &perm), "dP not permutation-equivariant");
    ensure!(permuted.delta_q == base.delta_q.select(Axis(0), &perm), "dQ not permutation-equivariant");

    // The same trajectories seen in a later window (other absolute frames,
    // other positions) get the same temporal encoding.
    let shifted = p.mapv(|v| v + 7.0);
    let (t1, _) = core(build_positional(p.view(), ucfg.width))?;
    let (t2, _) = core(build_positional(shifted.view(), ucfg.width))?;
    ensure!(t1 == t2, "temporal encoding depends on the window");
    Ok(format!(
        "permutation-equivariant bit-exact, row sums within {row_err:.1e}, shapes ({n},{frames},3)/({n},{frames},128)"
    ))
}

// --- AC11 ------------------------------------------------------------------

/// Peak resident memory of a child, polled from /proc.
fn run_measured(cmd: &mut Command) -> Result<(Duration, Option<u64>), String> {
    let start = Instant::now();
    let mut child = cmd.spawn().map_err(|e| e.to_string())?;
    let status_file = format!("/proc/{}/status", child.id());
    let mut peak_kb = None;
    let status = loop {
        if let Ok(text) = fs::read_to_string(&status_file) {
            if let Some(kb) = text
                .lines()
                .find_map(|l| l.strip_prefix("VmHWM:"))
                .and_then(|v| v.trim().trim_end_matches("kB").trim().parse::<u64>().ok())
            {
                peak_kb = Some(peak_kb.unwrap_or(0).max(kb));
            }
        }
        if let Some(s) = child.try_wait().map_err(|e| e.to_string())? {
            break s;
        }
        std::thread::sleep(Duration::from_millis(20));
    };
    ensure!(status.success(), "exit {:?}", status.code());
    Ok((start.elapsed(), peak_kb))
}

fn ac11() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let spec = tmp.path().join("spec.toml");
    fs::write(
        &spec,
        r#"
[[sample]]
name = "budget"
seed = 11
height = 64
width = 96
frames = 40
queries = 16
camera = { velocity = [0.01, 0.0, 0.005] }
[[sample.body]]
size = [6.0, 6.0, 0.0]
position = [0.0, 0.0, 4.0]
[[sample.body]]
shape = "ellipsoid"
size = [0.4, 0.3, 0.3]
position = [0.2, 0.0, 2.5]
motion = { velocity = [-0.01, 0.0, 0.0], angular_velocity = [0.0, 0.05, 0.0] }
"#,
    )
    .map_err(|e| e.to_string())?;
    let bin = env!("CARGO_BIN_EXE_flowtrack");
    run_measured(Command::new(bin).arg("generate").arg(&spec).arg("--out").arg(tmp.path()).stdout(std::process::Stdio::null()))?;
    let sample = tmp.path().join("budget");
    let mut runs = vec![];
    for name in ["run_a", "run_b"] {
        let out = tmp.path().join(name);
        let (time, peak) = run_measured(
            Command::new(bin)
                .args(["track", "--random-seed", "42", "--out"])
                .arg(&out)
                .arg(&sample)
                .stdout(std::process::Stdio::null()),
        )?;
        ensure!(time.as_secs_f64() < 60.0, "{name} took {:.1} s", time.as_secs_f64());
        if let Some(kb) = peak {
            ensure!(kb < 2 * 1024 * 1024, "{name} peaked at {} MB", kb / 1024);
        }
        runs.push((out, time, peak));
    }
    for f in ["tensors.bin", "manifest", "trajectories.csv", "run_config.json"] {
        let a = fs::read(runs[0].0.join(f)).map_err(|e| e.to_string())?;
        let b = fs::read(runs[1].0.join(f)).map_err(|e| e.to_string())?;
        ensure!(a == b, "{f} differs between runs");
    }
    let traj = core(TrajectorySet::read(&runs[0].0))?;
    ensure!(traj.positions.dim() == (16, 40, 3), "shape {:?}", traj.positions.dim());
    ensure!(traj.positions.iter().all(|v| v.is_finite()), "non-finite output");
    let mem = runs
        .iter()
        .filter_map(|r| r.2)
        .max()
        .map_or("peak memory unavailable".to_string(), |kb| format!("peak {} MB", kb / 1024));
    Ok(format!(
        "two runs bit-identical and finite; {:.1} s / {:.1} s, {mem}",
        runs[0].1.as_secs_f64(),
        runs[1].1.as_secs_f64()
    ))
}

// --- AC12 ------------------------------------------------------------------

fn ac12() -> Check {
    let cfg = RunConfig::default();
    ensure!(cfg.updater_input_dim() == 328, "concat width {}", cfg.updater_input_dim());
    ensure!(lookup_width(cfg.levels, cfg.radius) == 196, "c_a {}", lookup_width(cfg.levels, cfg.radius));
    let (h, w) = (16, 24);
    let q = Array3::from_elem((2, 3, cfg.feature_dim), 0.5f32);
    let f = Array4::from_elem((3, cfg.feature_dim, h, w), 0.25f32);
    let pyr = core(build_pyramid(q.view(), f.view(), cfg.levels))?;
    let want: Vec<(usize, usize)> = (0..4).map(|l| (h >> l, w >> l)).collect();
    ensure!(pyr.level_shapes() == want, "levels {:?}", pyr.level_shapes());
    let c_a = lookup(&pyr, Array3::from_elem((2, 3, 2), 3.0).view(), cfg.radius).dim().2;
    ensure!(c_a == 196, "lookup width {c_a}");
    ensure!(cfg.window == 16 && cfg.stride == 8 && cfg.feature_dim == 128 && cfg.motion_dim == 128, "defaults drifted");
    Ok(format!("concat 328, c_a 196, pyramid {want:?}"))
}

fn main() {
    let criteria: [(&str, fn() -> Check); 12] = [
        ("correlation lookup matches brute force", ac1),
        ("geometry round trips", ac2),
        ("pose chains and disparity exact", ac3),
        ("loss gradient matches finite differences", ac4),
        ("zero residuals are a fixed point", ac5),
        ("later window wins on overlaps", ac6),
        ("depth outliers break the TAP baseline", ac7),
        ("occlusion drift in chained scene flow", ac8),
        ("metric fixture reproduces the golden report", ac9),
        ("transformer invariants", ac10),
        ("end-to-end determinism and budget", ac11),
        ("shape ledger", ac12),
    ];
    let mut failed = 0;
    let mut out = std::io::stdout().lock();
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => writeln!(out, "AC{:<2} PASS  {name}: {detail} [{secs:.2} s]", i + 1),
            Err(why) => {
                failed += 1;
                writeln!(out, "AC{:<2} FAIL  {name}: {why} [{secs:.2} s]", i + 1)
            }
        }
        .unwrap();
        out.flush().unwrap();
    }
    writeln!(out, "acceptance: {} passed, {failed} failed", criteria.len() - failed).unwrap();
    if failed > 0 {
        std::process::exit(1);
    }
}
