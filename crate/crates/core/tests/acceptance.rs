//! Acceptance suite. Prints one line per criterion and exits non-zero when
//! any criterion fails. Tolerances and time limits are fixed below.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::*;
use nalgebra::{Matrix3, Vector3, Vector6};
use rand::Rng;
use ttreg::geometry::{align_known_correspondences, sample_perturbation};
use ttreg::pipeline::memory::{dense_bytes, format_bytes, point_cloud_bytes, tt_bytes};
use ttreg::pipeline::{is_success, run_rank_sweep, run_sweep, Method, RankSweepSpec, Scene, SceneSpec, SweepSpec};
use ttreg::registration::{accumulate, evaluate_cost, OutOfBoundsPolicy};
use ttreg::tensor_train::{tt_svd_values, DiffMatrix};
use ttreg::volume::{analytic_sdf, sample_surface_points, sdf_from_occupancy};
use ttreg::*;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

struct Criterion {
    id: u32,
    name: &'static str,
    limit: Option<Duration>,
    run: fn() -> Outcome,
}

const CRITERIA: &[Criterion] = &[
    Criterion { id: 1, name: "TT-SVD lossless on random 8^3", limit: Some(Duration::from_secs(1)), run: c1_lossless },
    Criterion { id: 2, name: "TT-SVD truncation bound", limit: Some(Duration::from_secs(5)), run: c2_bound },
    Criterion { id: 3, name: "derivative TT vs dense stencil", limit: Some(Duration::from_secs(5)), run: c3_derivative },
    Criterion { id: 4, name: "stencil exact on polynomials", limit: Some(Duration::from_secs(1)), run: c4_stencil },
    Criterion { id: 5, name: "EDT vs brute force", limit: Some(Duration::from_secs(10)), run: c5_edt },
    Criterion { id: 6, name: "SE(3) suite", limit: Some(Duration::from_secs(1)), run: c6_se3 },
    Criterion { id: 7, name: "gradient vs finite differences", limit: Some(Duration::from_secs(5)), run: c7_jacobian },
    Criterion { id: 8, name: "registration recovery on the sphere", limit: Some(Duration::from_secs(60)), run: c8_recovery },
    Criterion { id: 9, name: "lossless TT trace equals dense", limit: None, run: c9_lossless_trace },
    Criterion { id: 10, name: "rank saturation", limit: Some(Duration::from_secs(30)), run: c10_rank },
    Criterion { id: 11, name: "memory formulas", limit: None, run: c11_memory },
    Criterion { id: 12, name: "SDF at least as robust as TSDF", limit: Some(Duration::from_secs(60)), run: c12_tsdf },
];

fn main() -> ExitCode {
    let mut failed = 0;
    for c in CRITERIA {
        let start = Instant::now();
        let mut out = (c.run)();
        let elapsed = start.elapsed();
        if let Some(limit) = c.limit {
            if elapsed > limit {
                out.pass = false;
                out.detail.push_str(&format!("; over time limit {limit:?}"));
            }
        }
        if !out.pass {
            failed += 1;
        }
        println!(
            "criterion {:>2}: {} {} [{:.2}s] {}",
            c.id,
            if out.pass { "PASS" } else { "FAIL" },
            c.name,
            elapsed.as_secs_f64(),
            out.detail
        );
    }
    println!("acceptance: {} passed, {} failed", CRITERIA.len() - failed, failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn c1_lossless() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..100 {
        let values = uniform(512, &mut rng(seed));
        let grid = Grid::cube([8; 3], 1.0).unwrap();
        let vol = DenseVolume::new(grid, values.clone()).unwrap();
        let tt = tt_svd(&vol, &TtBuildSpec::lossless()).unwrap();
        worst = worst.max(frobenius_diff(&contract(&tt), &values) / frobenius(&values));
    }
    outcome(worst <= 1e-12, format!("worst relative error {worst:.3e} (limit 1e-12, 100 seeds)"))
}

fn c2_bound() -> Outcome {
    // Allowance for round-off in the measured error itself.
    const ROUNDING: f64 = 1e-12;
    let mut worst_ratio: f64 = 0.0;
    let mut violations = 0;
    for seed in 0..20 {
        let values = uniform(16 * 16 * 16, &mut rng(100 + seed));
        for cap in [2, 4, 8] {
            let (tt, report) = tt_svd_values([16; 3], &values, &TtBuildSpec::with_max_rank(cap)).unwrap();
            let err = frobenius_diff(&contract(&tt), &values);
            let bound = report.error_bound();
            worst_ratio = worst_ratio.max(err / bound);
            if err > bound * (1.0 + ROUNDING) {
                violations += 1;
            }
        }
    }
    outcome(
        violations == 0,
        format!("max error/bound {worst_ratio:.15}, {violations} violations over 60 builds"),
    )
}

fn c3_derivative() -> Outcome {
    let h = 0.125;
    let mut worst: f64 = 0.0;
    for seed in 0..50 {
        let mut r = rng(200 + seed);
        let ranks = [r.random_range(1..=6), r.random_range(1..=6)];
        let tt = random_tt([8; 3], ranks, &mut r);
        let dense = contract(&tt);
        for (axis_id, axis) in [Axis::X, Axis::Y, Axis::Z].into_iter().enumerate() {
            let d = tt.derivative(axis, h).unwrap();
            let want = finite_difference(&dense, [8; 3], axis_id, h);
            let got = contract(&d);
            for (a, b) in got.iter().zip(&want) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    outcome(worst <= 1e-10, format!("max elementwise difference {worst:.3e} (limit 1e-10, 50 seeds x 3 axes)"))
}

fn c4_stencil() -> Outcome {
    let mut worst_ratio: f64 = 0.0;
    for n in [3usize, 10, 101] {
        for h in [1.0, 0.1, 0.037] {
            let d = DiffMatrix::new(n, h).unwrap();
            let x: Vec<f64> = (0..n).map(|k| -0.7 + k as f64 * h).collect();
            let cases: [(Box<dyn Fn(f64) -> f64>, Box<dyn Fn(f64) -> f64>); 3] = [
                (Box::new(|_| 2.5), Box::new(|_| 0.0)),
                (Box::new(|t| 1.5 - 3.0 * t), Box::new(|_| -3.0)),
                (Box::new(|t| 0.3 + 2.0 * t - 1.25 * t * t), Box::new(|t| 2.0 - 2.5 * t)),
            ];
            for (f, df) in &cases {
                let values: Vec<f64> = x.iter().map(|&t| f(t)).collect();
                let scale = values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
                // A handful of roundings in a three-term stencil, divided by h.
                let tol = 32.0 * f64::EPSILON * scale / h;
                for (got, &t) in d.apply(&values).iter().zip(&x) {
                    worst_ratio = worst_ratio.max((got - df(t)).abs() / tol);
                }
            }
        }
    }
    outcome(
        worst_ratio <= 1.0,
        format!("worst error is {worst_ratio:.3} of 32 eps max|f|/h"),
    )
}

fn c5_edt() -> Outcome {
    let dims = [8; 3];
    let grid = Grid::new(dims, Vector3::zeros(), Vector3::repeat(1.0)).unwrap();
    let mut mismatched = 0;
    for seed in 0..20 {
        let mut r = rng(300 + seed);
        let density = r.random_range(0.05..0.6);
        let mut occ: Vec<bool> = (0..512).map(|_| r.random_bool(density)).collect();
        occ[r.random_range(0..512)] = true;
        occ[r.random_range(0..512)] = false;
        if occ.iter().all(|&o| o) || occ.iter().all(|&o| !o) {
            occ[0] = !occ[0];
        }
        let grid_occ = OccupancyGrid::new(grid.clone(), occ.clone()).unwrap();
        let got = sdf_from_occupancy(&grid_occ).unwrap();
        if got.values() != brute_force_edt(&occ, dims, [1.0; 3]).as_slice() {
            mismatched += 1;
        }
    }
    outcome(mismatched == 0, format!("{mismatched} of 20 occupancies differ from brute force"))
}

fn c6_se3() -> Outcome {
    let mut r = rng(400);
    let zero = exp_se3(&Twist::zero());
    let identity_ok = zero.rotation == Matrix3::identity() && zero.translation == Vector3::zeros();
    let (mut round_trip, mut quat, mut align): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for _ in 0..200 {
        let pose = Pose::new(random_rotation(&mut r), random_vector(3.0, &mut r)).unwrap();
        let xi = Twist::new(random_vector(1.5, &mut r), random_vector(2.0, &mut r));
        let back = retract(&retract(&pose, &xi), &-xi);
        round_trip = round_trip
            .max((back.rotation - pose.rotation).amax())
            .max((back.translation - pose.translation).amax());
        let inv = pose.compose(&pose.inverse());
        round_trip = round_trip.max((inv.rotation - Matrix3::identity()).amax()).max(inv.translation.amax());

        let other = Pose::new(random_rotation(&mut r), random_vector(3.0, &mut r)).unwrap();
        let e = pose_error(&pose, &other);
        quat = quat.max((e.rotation - quaternion_angle(&pose.rotation, &other.rotation)).abs());

        let src: Vec<Vector3<f64>> = (0..50).map(|_| random_vector(1.0, &mut r)).collect();
        let dst: Vec<Vector3<f64>> = src.iter().map(|p| pose.transform_point(p)).collect();
        let est = align_known_correspondences(&PointCloud::new(src), &PointCloud::new(dst)).unwrap();
        let e = pose_error(&est, &pose);
        align = align.max(e.rotation).max(e.translation);
    }
    let pass = identity_ok && round_trip <= 1e-9 && quat <= 1e-9 && align <= 1e-9;
    outcome(
        pass,
        format!(
            "exp(0)=I {identity_ok}, round trip {round_trip:.1e}, quaternion {quat:.1e}, alignment {align:.1e} (limits 1e-9)"
        ),
    )
}

/// The default sphere scene: 128^3 grid on [-1, 1]^3, radius 0.5, 2000 points.
fn sphere_parts() -> (DenseVolume, PointCloud) {
    let spec = SceneSpec::default();
    let grid = Grid::cube([spec.dims; 3], spec.half_width).unwrap();
    let sdf = analytic_sdf(&spec.shape, &grid).unwrap();
    let cloud = sample_surface_points(&spec.shape, &grid, spec.points, &mut rng(7)).unwrap();
    (sdf, cloud)
}

fn c7_jacobian() -> Outcome {
    // Two voxels per step: the cost is piecewise constant between voxel
    // centers, so smaller steps resolve individual rounding jumps.
    const STEP_VOXELS: f64 = 2.0;
    let (sdf, cloud) = sphere_parts();
    let h = sdf.grid().min_spacing();
    let map = DenseSdfMap::new(sdf).unwrap();
    let policy = OutOfBoundsPolicy::Drop;
    let mut r = rng(1);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let pose = sample_perturbation(0.1, 0.1, &mut r);
        let analytic = 2.0 * accumulate(&cloud, &pose, &map, policy).gradient;
        let mut fd = Vector6::zeros();
        for k in 0..6 {
            // Rotation steps move surface points (radius 0.5) by the same arc.
            let d = if k < 3 { STEP_VOXELS * h / 0.5 } else { STEP_VOXELS * h };
            let mut e = [0.0; 6];
            e[k] = d;
            let plus = evaluate_cost(&cloud, &retract(&pose, &Twist::from_array(e)), &map, policy).0;
            e[k] = -d;
            let minus = evaluate_cost(&cloud, &retract(&pose, &Twist::from_array(e)), &map, policy).0;
            fd[k] = (plus - minus) / (2.0 * d);
        }
        worst = worst.max((fd - analytic).norm() / analytic.norm());
    }
    outcome(worst <= 0.01, format!("worst relative difference {:.3}% over 20 poses (limit 1%)", 100.0 * worst))
}

fn c8_recovery() -> Outcome {
    let scene = Scene::analytic(&SceneSpec::default(), &[Method::DenseSdf, Method::TtSdf]).unwrap();
    let h = scene.spacing();
    let spec = SweepSpec {
        translations: vec![0.05, 0.1, 0.2],
        rotations: vec![0.01, 0.02, 0.05],
        samples: 5,
        methods: vec![Method::DenseSdf, Method::TtSdf],
        ..Default::default()
    };
    let report = run_sweep(&scene, &spec).unwrap();
    let rate = |method: Method, trans: f64, rot: f64| {
        let cells: Vec<_> = report.cells.iter().filter(|c| c.method == method).collect();
        let ok = cells
            .iter()
            .filter(|c| c.error.is_some_and(|e| e.translation <= trans && e.rotation <= rot))
            .count();
        ok as f64 / cells.len() as f64
    };
    let dense = rate(Method::DenseSdf, 1.5 * h, 0.02);
    let tt = rate(Method::TtSdf, 3.0 * h, 0.04);
    let worst_trans = report
        .cells
        .iter()
        .filter_map(|c| c.error.map(|e| e.translation / h))
        .fold(0.0, f64::max);
    let per_mag: Vec<String> = (0..3)
        .map(|m| {
            let s = report.summary(Method::DenseSdf, m).unwrap();
            let q = s.rotation.unwrap();
            format!("({} m, {} rad) rot median {:.3}", s.trans_mag, s.rot_mag, q.median)
        })
        .collect();
    outcome(
        dense >= 0.9 && tt >= 0.9,
        format!(
            "dense {:.0}% within 1.5h/0.02 rad, TT R=20 {:.0}% within 3h/0.04 rad (need 90%); worst trans {:.2} voxels; dense {}",
            100.0 * dense,
            100.0 * tt,
            worst_trans,
            per_mag.join(", ")
        ),
    )
}

fn c9_lossless_trace() -> Outcome {
    let (sdf, cloud) = sphere_parts();
    let dense = DenseSdfMap::new(sdf.clone()).unwrap();
    let tt = CompressedSdf::from_volume(&sdf, &TtBuildSpec::lossless(), None).unwrap();
    let config = RegistrationConfig::default();
    let mut r = rng(900);
    let (mut worst, mut mismatched_iters, mut entries) = (0.0f64, 0, 0);
    for _ in 0..5 {
        let init = sample_perturbation(0.1, 0.05, &mut r);
        let a = register_dense(&cloud, &dense, &init, &config).unwrap();
        let b = register(&cloud, &tt, &init, &config).unwrap();
        if a.iterations != b.iterations {
            mismatched_iters += 1;
        }
        for (x, y) in a.trace.iter().zip(&b.trace) {
            worst = worst.max((x.cost - y.cost).abs() / x.cost);
            entries += 1;
        }
    }
    outcome(
        worst <= 1e-9 && mismatched_iters == 0,
        format!(
            "ranks {:?}, worst relative cost difference {worst:.2e} over {entries} iterations (limit 1e-9), {mismatched_iters} runs with different lengths",
            tt.ranks()
        ),
    )
}

fn c10_rank() -> Outcome {
    let scene = Scene::analytic(&SceneSpec::default(), &[Method::DenseSdf]).unwrap();
    let spec = RankSweepSpec { ranks: vec![4, 16, 32], ..Default::default() };
    let report = run_rank_sweep(&scene, &spec).unwrap();
    let err: Vec<f64> = report.points.iter().map(|p| p.error.map_or(f64::INFINITY, |e| e.translation)).collect();
    let (e4, e16, e32) = (err[0], err[1], err[2]);
    let pass = (e16 - e32).abs() <= 0.5 * (e4 - e32).abs();
    outcome(
        pass,
        format!(
            "trans_err R=4 {e4:.4e}, R=16 {e16:.4e}, R=32 {e32:.4e}; |e16-e32| <= 0.5 |e4-e32|; rel map error R=4 {:.1e}, R=16 {:.1e}",
            report.points[0].rel_error, report.points[1].rel_error
        ),
    )
}

fn c11_memory() -> Outcome {
    let dims = [346, 153, 152];
    let dense = dense_bytes(dims);
    let pc = point_cloud_bytes(26_757);
    let tt = tt_bytes(dims, [70, 70]);
    let dense_ok = dense == 32_186_496;
    let pc_ok = pc == 321_084;
    let tt_ok = ((tt as f64 - 3.1e6) / 3.1e6).abs() <= 0.05;
    outcome(
        dense_ok && pc_ok && tt_ok,
        format!(
            "dense {dense} B ({}) expected 32186496 B: {}; PC {pc} B ({}): {}; TT R=70 {tt} B ({}) within 5% of 3.1MB: {}",
            format_bytes(dense),
            dense_ok,
            format_bytes(pc),
            pc_ok,
            format_bytes(tt),
            tt_ok
        ),
    )
}

fn c12_tsdf() -> Outcome {
    let scene = Scene::analytic(&SceneSpec::default(), &Method::ALL).unwrap();
    let spec = SweepSpec {
        translations: vec![0.5],
        rotations: vec![0.0],
        samples: 5,
        ..Default::default()
    };
    let report = run_sweep(&scene, &spec).unwrap();
    let rate = |m| report.summary(m, 0).unwrap().success_rate;
    let (sdf, tsdf) = (rate(Method::DenseSdf), rate(Method::DenseTsdf));
    debug_assert!(report.cells.iter().all(|c| c.error.is_none_or(|e| c.success == is_success(&e, report.spacing))));
    outcome(
        sdf >= tsdf,
        format!(
            "0.5 m: dense SDF {:.0}% vs dense TSDF {:.0}% (mu 5 voxels); TT-SDF {:.0}%, TT-TSDF {:.0}%",
            100.0 * sdf,
            100.0 * tsdf,
            100.0 * rate(Method::TtSdf),
            100.0 * rate(Method::TtTsdf)
        ),
    )
}
