mod common;

use common::*;
use nalgebra::Vector3;
use ttreg::geometry::sample_perturbation;
use ttreg::registration::{register_with, write_trace_csv, OutOfBoundsPolicy, SdfMap};
use ttreg::volume::{analytic_sdf, sample_surface_points};
use ttreg::*;

struct Fixture {
    sdf: DenseVolume,
    cloud: PointCloud,
}

/// Three overlapping spheres: smooth near the surface and, unlike a single
/// sphere, every rotation changes the cost.
fn blobs_fixture(n: usize, points: usize) -> Fixture {
    let shape: Shape = "union:sphere:0.35@-0.3,0,0;sphere:0.3@0.3,0.1,0;sphere:0.25@0,-0.15,0.35"
        .parse()
        .unwrap();
    let grid = Grid::cube([n; 3], 1.0).unwrap();
    let sdf = analytic_sdf(&shape, &grid).unwrap();
    let cloud = sample_surface_points(&shape, &grid, points, &mut rng(4)).unwrap();
    Fixture { sdf, cloud }
}

#[test]
fn blobs_recovered_on_dense_and_compressed_maps() {
    let f = blobs_fixture(64, 1500);
    let h = f.sdf.grid().min_spacing();
    let dense = DenseSdfMap::new(f.sdf.clone()).unwrap();
    let tt = CompressedSdf::from_volume(&f.sdf, &TtBuildSpec::with_max_rank(20), None).unwrap();
    let config = RegistrationConfig::default();
    for seed in 0..4 {
        let init = sample_perturbation(2.0 * h, 0.03, &mut rng(seed));
        for (name, res) in [
            ("dense", register_dense(&f.cloud, &dense, &init, &config).unwrap()),
            ("tt", register(&f.cloud, &tt, &init, &config).unwrap()),
        ] {
            let e = pose_error(&res.pose, &Pose::identity());
            assert!(e.translation <= h && e.rotation <= 0.01, "{name} seed {seed}: {e:?}");
            assert!(res.final_cost < res.trace[0].cost);
        }
    }
}

#[test]
fn lossless_map_reproduces_dense_trace() {
    let f = blobs_fixture(32, 400);
    let dense = DenseSdfMap::new(f.sdf.clone()).unwrap();
    let tt = CompressedSdf::from_volume(&f.sdf, &TtBuildSpec::lossless(), None).unwrap();
    let init = sample_perturbation(0.05, 0.05, &mut rng(11));
    let config = RegistrationConfig::default();
    let a = register_dense(&f.cloud, &dense, &init, &config).unwrap();
    let b = register(&f.cloud, &tt, &init, &config).unwrap();
    assert_eq!(a.iterations, b.iterations);
    for (x, y) in a.trace.iter().zip(&b.trace) {
        assert!((x.cost - y.cost).abs() <= 1e-9 * x.cost.max(1e-300));
        assert_eq!(x.active_points, y.active_points);
    }
    let e = pose_error(&a.pose, &b.pose);
    assert!(e.rotation < 1e-9 && e.translation < 1e-9);
}

#[test]
fn result_independent_of_thread_count() {
    let f = blobs_fixture(32, 2100);
    let tt = CompressedSdf::from_volume(&f.sdf, &TtBuildSpec::with_max_rank(6), None).unwrap();
    let init = sample_perturbation(0.04, 0.03, &mut rng(5));
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| register(&f.cloud, &tt, &init, &RegistrationConfig::default()).unwrap())
    };
    let one = run(1);
    assert_eq!(one, run(4));
    assert_eq!(one, run(7));
}

#[test]
fn out_of_bounds_policies() {
    let f = blobs_fixture(32, 300);
    let map = DenseSdfMap::new(f.sdf.clone()).unwrap();
    // Shifted so that part of the cloud lands outside the grid.
    let init = Pose::from_translation(Vector3::new(0.6, 0.0, 0.0));
    let mut config = RegistrationConfig { max_iterations: 5, ..Default::default() };

    config.out_of_bounds = OutOfBoundsPolicy::Clamp;
    let clamp = register_with(&f.cloud, &map, &init, &config).unwrap();
    assert!(clamp.trace.iter().all(|e| e.active_points == f.cloud.len()));

    config.out_of_bounds = OutOfBoundsPolicy::Drop;
    let drop = register_with(&f.cloud, &map, &init, &config).unwrap();
    assert!(drop.trace.iter().all(|e| e.active_points <= f.cloud.len()));
    assert!(drop.trace[0].active_points < f.cloud.len());
    let inside = f
        .cloud
        .points()
        .iter()
        .filter(|p| map.grid().world_to_index(&init.transform_point(p)).is_some())
        .count();
    assert_eq!(drop.trace[0].active_points, inside);
}

#[test]
fn truncated_map_holds_the_truth() {
    let f = blobs_fixture(48, 800);
    let mu = 5.0 * f.sdf.grid().min_spacing();
    let tsdf = f.sdf.truncate(mu).unwrap();
    let tt = CompressedSdf::from_volume(&tsdf, &TtBuildSpec::with_max_rank(24), Some(mu)).unwrap();
    let res = register(&f.cloud, &tt, &Pose::identity(), &RegistrationConfig::default()).unwrap();
    let e = pose_error(&res.pose, &Pose::identity());
    assert!(res.converged);
    assert!(e.translation <= 0.5 * f.sdf.grid().min_spacing() && e.rotation <= 0.01, "{e:?}");
}

#[test]
fn far_outside_the_grid_is_an_error() {
    let f = blobs_fixture(16, 50);
    let map = DenseSdfMap::new(f.sdf).unwrap();
    let init = Pose::from_translation(Vector3::new(10.0, 0.0, 0.0));
    assert!(register_dense(&f.cloud, &map, &init, &RegistrationConfig::default()).is_err());
}

#[test]
fn trace_csv_has_one_row_per_iteration() {
    let f = blobs_fixture(32, 300);
    let map = DenseSdfMap::new(f.sdf).unwrap();
    let init = sample_perturbation(0.05, 0.02, &mut rng(2));
    let res = register_dense(&f.cloud, &map, &init, &RegistrationConfig::default()).unwrap();
    let mut out = Vec::new();
    write_trace_csv(&mut out, &res, Some(&Pose::identity())).unwrap();
    let text = String::from_utf8(out).unwrap();
    let rows: Vec<Vec<&str>> = text.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), res.iterations);
    for (n, row) in rows.iter().enumerate() {
        assert_eq!(row.len(), 6);
        assert_eq!(row[0].parse::<usize>().unwrap(), n + 1);
        let cost: f64 = row[1].parse().unwrap();
        assert!((cost - res.trace[n].cost).abs() <= 1e-11 * cost);
    }
    let last: f64 = rows.last().unwrap()[5].parse().unwrap();
    assert!((last - res.pose.translation.norm()).abs() < 1e-11);
}
