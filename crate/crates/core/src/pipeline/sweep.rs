use std::io::{self, Write};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::stats::{quartiles, Quartiles};
use super::{PipelineError, Method, Scene, SUCCESS_ROTATION, SUCCESS_VOXELS};
use crate::geometry::{pose_error, sample_perturbation, Pose, PoseError};
use crate::registration::{CompressedSdf, RegistrationConfig};
use crate::tensor_train::{TtBuildSpec, DEFAULT_MEMORY_BUDGET};

/// Perturbation sweep. Translation and rotation magnitudes are paired by
/// position: the k-th run perturbs by `translations[k]` meters and
/// `rotations[k]` radians.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub translations: Vec<f64>,
    pub rotations: Vec<f64>,
    /// Random directions per magnitude.
    pub samples: usize,
    pub seed: u64,
    pub methods: Vec<Method>,
    /// Worker threads; 0 picks the number of CPUs.
    pub jobs: usize,
    pub config: RegistrationConfig,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            translations: vec![0.05, 0.1, 0.2, 0.5, 1.0],
            rotations: vec![0.01, 0.02, 0.05, 0.1, 0.25],
            samples: 5,
            seed: 0,
            methods: Method::ALL.to_vec(),
            jobs: 0,
            config: RegistrationConfig::default(),
        }
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: &str| Err(PipelineError::Invalid(m.into()));
        if self.translations.len() != self.rotations.len() {
            return bad("translation and rotation magnitude lists differ in length");
        }
        if self.translations.is_empty() {
            return bad("no magnitudes");
        }
        if self
            .translations
            .iter()
            .chain(&self.rotations)
            .any(|m| !(*m >= 0.0 && m.is_finite()))
        {
            return bad("magnitudes must be finite and nonnegative");
        }
        if self.samples == 0 {
            return bad("samples must be at least 1");
        }
        if self.methods.is_empty() {
            return bad("no methods");
        }
        self.config.validate()?;
        Ok(())
    }

    /// Initial pose of one cell. Every method sees the same perturbation.
    pub fn initial_pose(&self, magnitude: usize, sample: usize, truth: &Pose) -> Pose {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream((magnitude * self.samples + sample) as u64);
        let offset = sample_perturbation(self.translations[magnitude], self.rotations[magnitude], &mut rng);
        offset.compose(truth)
    }
}

/// Outcome of registering one (method, magnitude, direction) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub method: Method,
    pub magnitude: usize,
    pub trans_mag: f64,
    pub rot_mag: f64,
    pub sample: usize,
    /// `None` when registration stopped with an error.
    pub error: Option<PoseError>,
    pub failure: Option<String>,
    pub converged: bool,
    pub iterations: usize,
    pub success: bool,
    pub seconds: f64,
}

/// Statistics pooled over all directions of one (method, magnitude).
#[derive(Debug, Clone, PartialEq)]
pub struct MagnitudeSummary {
    pub method: Method,
    pub trans_mag: f64,
    pub rot_mag: f64,
    pub runs: usize,
    /// Runs that ended with an error; they count as unsuccessful and are
    /// left out of the quartiles.
    pub failures: usize,
    pub success_rate: f64,
    pub rotation: Option<Quartiles>,
    pub translation: Option<Quartiles>,
    pub seconds: f64,
    pub map_bytes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub spacing: f64,
    pub cells: Vec<CellResult>,
    pub summaries: Vec<MagnitudeSummary>,
    pub wall_seconds: f64,
}

impl SweepReport {
    pub fn summary(&self, method: Method, magnitude: usize) -> Option<&MagnitudeSummary> {
        self.summaries.iter().filter(|s| s.method == method).nth(magnitude)
    }
}

/// `trans_err ≤ 3 voxels` and `rot_err ≤ 0.05 rad`.
pub fn is_success(error: &PoseError, spacing: f64) -> bool {
    error.translation <= SUCCESS_VOXELS * spacing && error.rotation <= SUCCESS_ROTATION
}

fn thread_pool(jobs: usize) -> Result<rayon::ThreadPool, PipelineError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| PipelineError::Invalid(format!("thread pool: {e}")))
}

/// Registers every (method, magnitude, direction) cell. Cells run in
/// parallel; results are ordered by method, magnitude, then direction.
pub fn run_sweep(scene: &Scene, spec: &SweepSpec) -> Result<SweepReport, PipelineError> {
    spec.validate()?;
    if let Some(m) = spec.methods.iter().find(|&&m| !scene.has(m)) {
        return Err(PipelineError::Invalid(format!("scene was built without {m}")));
    }
    let spacing = scene.spacing();
    let mut jobs = Vec::new();
    for &method in &spec.methods {
        for magnitude in 0..spec.translations.len() {
            for sample in 0..spec.samples {
                jobs.push((method, magnitude, sample));
            }
        }
    }

    let start = Instant::now();
    let cells: Vec<CellResult> = thread_pool(spec.jobs)?.install(|| {
        jobs.par_iter()
            .map(|&(method, magnitude, sample)| {
                let initial = spec.initial_pose(magnitude, sample, scene.truth());
                let t = Instant::now();
                let outcome = scene.register(method, &initial, &spec.config);
                let seconds = t.elapsed().as_secs_f64();
                let mut cell = CellResult {
                    method,
                    magnitude,
                    trans_mag: spec.translations[magnitude],
                    rot_mag: spec.rotations[magnitude],
                    sample,
                    error: None,
                    failure: None,
                    converged: false,
                    iterations: 0,
                    success: false,
                    seconds,
                };
                match outcome {
                    Ok(r) => {
                        let e = pose_error(&r.pose, scene.truth());
                        cell.success = is_success(&e, spacing);
                        cell.error = Some(e);
                        cell.converged = r.converged;
                        cell.iterations = r.iterations;
                    }
                    Err(e) => cell.failure = Some(e.to_string()),
                }
                cell
            })
            .collect()
    });
    let wall_seconds = start.elapsed().as_secs_f64();

    let summaries = cells
        .chunks(spec.samples)
        .map(|group| summarize(group, scene.map_bytes(group[0].method)))
        .collect();
    Ok(SweepReport {
        spacing,
        cells,
        summaries,
        wall_seconds,
    })
}

fn summarize(group: &[CellResult], map_bytes: usize) -> MagnitudeSummary {
    let errors: Vec<&PoseError> = group.iter().filter_map(|c| c.error.as_ref()).collect();
    let rot: Vec<f64> = errors.iter().map(|e| e.rotation).collect();
    let trans: Vec<f64> = errors.iter().map(|e| e.translation).collect();
    MagnitudeSummary {
        method: group[0].method,
        trans_mag: group[0].trans_mag,
        rot_mag: group[0].rot_mag,
        runs: group.len(),
        failures: group.len() - errors.len(),
        success_rate: group.iter().filter(|c| c.success).count() as f64 / group.len() as f64,
        rotation: quartiles(&rot),
        translation: quartiles(&trans),
        seconds: group.iter().map(|c| c.seconds).sum(),
        map_bytes,
    }
}

pub const SWEEP_SCHEMA: &str = "# ttreg sweep v1";

/// One row per cell. Timing is left out so equal seeds give equal files.
pub fn write_cells_csv<W: Write>(w: &mut W, report: &SweepReport) -> io::Result<()> {
    writeln!(w, "{SWEEP_SCHEMA}")?;
    writeln!(
        w,
        "method,trans_mag,rot_mag,sample,rot_err,trans_err,converged,iterations,success,failure"
    )?;
    for c in &report.cells {
        let (rot, trans) = match &c.error {
            Some(e) => (format!("{:.12e}", e.rotation), format!("{:.12e}", e.translation)),
            None => (String::new(), String::new()),
        };
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            c.method,
            c.trans_mag,
            c.rot_mag,
            c.sample,
            rot,
            trans,
            c.converged,
            c.iterations,
            c.success,
            c.failure.as_deref().unwrap_or("").replace(',', ";"),
        )?;
    }
    Ok(())
}

fn fmt_quartiles(q: &Option<Quartiles>) -> String {
    match q {
        Some(q) => format!("{:.3e} [{:.3e}, {:.3e}]", q.median, q.q1, q.q3),
        None => "n/a".into(),
    }
}

/// Fixed-width table with one line per (method, magnitude).
pub fn write_summary<W: Write>(w: &mut W, report: &SweepReport) -> io::Result<()> {
    writeln!(
        w,
        "{:<10} {:>6} {:>6} {:>5} {:>8} {:<36} {:<36} {:>8} {:>10}",
        "method", "trans", "rot", "runs", "success", "trans_err median [Q1, Q3]", "rot_err median [Q1, Q3]", "seconds", "map_bytes"
    )?;
    for s in &report.summaries {
        writeln!(
            w,
            "{:<10} {:>6} {:>6} {:>5} {:>7.0}% {:<36} {:<36} {:>8.2} {:>10}",
            s.method.name(),
            s.trans_mag,
            s.rot_mag,
            s.runs,
            100.0 * s.success_rate,
            fmt_quartiles(&s.translation),
            fmt_quartiles(&s.rotation),
            s.seconds,
            s.map_bytes
        )?;
    }
    writeln!(
        w,
        "voxel {:.6} m, success: trans <= {SUCCESS_VOXELS} voxels and rot <= {SUCCESS_ROTATION} rad, wall {:.2} s",
        report.spacing, report.wall_seconds
    )
}

/// Rank sweep: every rank registers the same perturbed observation.
#[derive(Debug, Clone, PartialEq)]
pub struct RankSweepSpec {
    pub ranks: Vec<usize>,
    pub trans_mag: f64,
    pub rot_mag: f64,
    pub seed: u64,
    /// Compress the truncated map instead of the full SDF.
    pub truncated: bool,
    pub jobs: usize,
    pub config: RegistrationConfig,
}

impl Default for RankSweepSpec {
    fn default() -> Self {
        RankSweepSpec {
            ranks: vec![2, 4, 8, 16, 32],
            trans_mag: 0.1,
            rot_mag: 0.1,
            seed: 0,
            truncated: false,
            jobs: 0,
            config: RegistrationConfig::default(),
        }
    }
}

impl RankSweepSpec {
    pub fn initial_pose(&self, truth: &Pose) -> Pose {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        sample_perturbation(self.trans_mag, self.rot_mag, &mut rng).compose(truth)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankPoint {
    /// Requested cap.
    pub rank: usize,
    /// Ranks actually used.
    pub ranks: [usize; 2],
    pub memory_bytes: usize,
    /// `‖V − TT(V)‖_F / ‖V‖_F`.
    pub rel_error: f64,
    pub error: Option<PoseError>,
    pub failure: Option<String>,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankSweepReport {
    pub initial: Pose,
    pub points: Vec<RankPoint>,
    /// Same observation registered on the uncompressed map.
    pub dense: Option<PoseError>,
}

pub fn run_rank_sweep(scene: &Scene, spec: &RankSweepSpec) -> Result<RankSweepReport, PipelineError> {
    if spec.ranks.is_empty() || spec.ranks.contains(&0) {
        return Err(PipelineError::Invalid("ranks must be a nonempty list of positive integers".into()));
    }
    if !(spec.trans_mag >= 0.0 && spec.rot_mag >= 0.0) {
        return Err(PipelineError::Invalid("magnitudes must be nonnegative".into()));
    }
    spec.config.validate()?;
    let volume = if spec.truncated {
        scene.sdf().truncate(scene.mu())?
    } else {
        scene.sdf().clone()
    };
    let norm = volume.frobenius_norm();
    let initial = spec.initial_pose(scene.truth());
    let truth = *scene.truth();
    let cloud = scene.cloud();
    let mu = spec.truncated.then_some(scene.mu());

    let dense_map = crate::registration::DenseSdfMap::new(volume.clone())?;
    let dense = crate::registration::register_dense(cloud, &dense_map, &initial, &spec.config)
        .ok()
        .map(|r| pose_error(&r.pose, &truth));

    let points = thread_pool(spec.jobs)?.install(|| {
        spec.ranks
            .par_iter()
            .map(|&rank| -> Result<RankPoint, PipelineError> {
                let map = CompressedSdf::from_volume(&volume, &TtBuildSpec::with_max_rank(rank), mu)?;
                let values = map.value_tt().reconstruct_values(DEFAULT_MEMORY_BUDGET)?;
                let diff = values
                    .iter()
                    .zip(volume.values())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                let mut point = RankPoint {
                    rank,
                    ranks: map.ranks(),
                    memory_bytes: map.memory_bytes(super::memory::BYTES_PER_SCALAR),
                    rel_error: if norm > 0.0 { diff / norm } else { diff },
                    error: None,
                    failure: None,
                    converged: false,
                    iterations: 0,
                };
                match crate::registration::register(cloud, &map, &initial, &spec.config) {
                    Ok(r) => {
                        point.error = Some(pose_error(&r.pose, &truth));
                        point.converged = r.converged;
                        point.iterations = r.iterations;
                    }
                    Err(e) => point.failure = Some(e.to_string()),
                }
                Ok(point)
            })
            .collect::<Result<Vec<_>, _>>()
    })?;
    Ok(RankSweepReport {
        initial,
        points,
        dense,
    })
}

pub const RANK_SCHEMA: &str = "# ttreg rank-sweep v1";

pub fn write_rank_csv<W: Write>(w: &mut W, report: &RankSweepReport) -> io::Result<()> {
    writeln!(w, "{RANK_SCHEMA}")?;
    writeln!(w, "rank,r1,r2,memory_bytes,rel_error,rot_err,trans_err,converged,iterations,failure")?;
    for p in &report.points {
        let (rot, trans) = match &p.error {
            Some(e) => (format!("{:.12e}", e.rotation), format!("{:.12e}", e.translation)),
            None => (String::new(), String::new()),
        };
        writeln!(
            w,
            "{},{},{},{},{:.12e},{},{},{},{},{}",
            p.rank,
            p.ranks[0],
            p.ranks[1],
            p.memory_bytes,
            p.rel_error,
            rot,
            trans,
            p.converged,
            p.iterations,
            p.failure.as_deref().unwrap_or("").replace(',', ";"),
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::SceneSpec;
    use crate::volume::Shape;

    /// Full-rank maps, so the TT methods see the dense values.
    fn small_scene(methods: &[Method]) -> Scene {
        let spec = SceneSpec {
            shape: Shape::sphere(0.5),
            dims: 32,
            points: 300,
            rank: 32,
            ..SceneSpec::default()
        };
        Scene::analytic(&spec, methods).unwrap()
    }

    fn small_sweep() -> SweepSpec {
        SweepSpec {
            translations: vec![0.0, 0.1],
            rotations: vec![0.0, 0.0],
            samples: 3,
            jobs: 2,
            ..SweepSpec::default()
        }
    }

    #[test]
    fn sweep_is_deterministic_and_ordered() {
        let scene = small_scene(&Method::ALL);
        let spec = small_sweep();
        let a = run_sweep(&scene, &spec).unwrap();
        let b = run_sweep(&scene, &SweepSpec { jobs: 1, ..spec.clone() }).unwrap();
        assert_eq!(a.cells.len(), 4 * 2 * 3);
        let strip = |r: &SweepReport| -> Vec<_> {
            r.cells.iter().map(|c| (c.method, c.magnitude, c.sample, c.error, c.iterations)).collect()
        };
        assert_eq!(strip(&a), strip(&b));
        let (mut ca, mut cb) = (Vec::new(), Vec::new());
        write_cells_csv(&mut ca, &a).unwrap();
        write_cells_csv(&mut cb, &b).unwrap();
        assert_eq!(ca, cb);
        assert!(String::from_utf8(ca).unwrap().starts_with(SWEEP_SCHEMA));
        for s in &a.summaries {
            for q in [s.rotation, s.translation].into_iter().flatten() {
                assert!(q.q1 <= q.median && q.median <= q.q3);
            }
        }
    }

    #[test]
    fn zero_magnitude_row_stays_at_truth() {
        let scene = small_scene(&Method::ALL);
        let report = run_sweep(&scene, &small_sweep()).unwrap();
        for m in Method::ALL {
            let s = report.summary(m, 0).unwrap();
            assert_eq!(s.trans_mag, 0.0);
            assert_eq!(s.success_rate, 1.0, "{m}");
            assert!(s.translation.unwrap().median <= scene.spacing(), "{m}");
        }
    }

    #[test]
    fn same_perturbation_for_every_method() {
        let spec = small_sweep();
        let truth = Pose::identity();
        let p = spec.initial_pose(1, 2, &truth);
        assert_eq!(p, spec.initial_pose(1, 2, &truth));
        assert_ne!(p, spec.initial_pose(1, 1, &truth));
        assert!((p.translation.norm() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_specs() {
        let scene = small_scene(&[Method::DenseSdf]);
        let mut spec = small_sweep();
        spec.rotations.pop();
        assert!(run_sweep(&scene, &spec).is_err());
        let spec = SweepSpec { methods: vec![Method::TtSdf], ..small_sweep() };
        assert!(run_sweep(&scene, &spec).is_err());
        let spec = SweepSpec { samples: 0, ..small_sweep() };
        assert!(run_sweep(&scene, &spec).is_err());
    }

    #[test]
    fn full_rank_matches_dense_path() {
        let scene = small_scene(&[Method::DenseSdf]);
        let spec = RankSweepSpec { ranks: vec![2, 32], jobs: 2, ..RankSweepSpec::default() };
        let report = run_rank_sweep(&scene, &spec).unwrap();
        assert_eq!(report.points[1].ranks, [32, 32]);
        assert!(report.points[1].rel_error < 1e-12);
        assert!(report.points[0].rel_error > report.points[1].rel_error);
        let full = report.points[1].error.unwrap();
        let dense = report.dense.unwrap();
        assert!((full.translation - dense.translation).abs() < 1e-9);
        assert!((full.rotation - dense.rotation).abs() < 1e-9);
        let mut out = Vec::new();
        write_rank_csv(&mut out, &report).unwrap();
        assert_eq!(String::from_utf8(out).unwrap().lines().count(), 4);
    }
}
