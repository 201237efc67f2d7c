//! `ttreg` command-line front end.

use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use nalgebra::{Matrix3, Vector3};
use ttreg::pipeline::memory::{self, memory_report, write_memory_csv};
use ttreg::pipeline::{
    run_rank_sweep, run_sweep, write_cells_csv, write_rank_csv, write_summary, Method,
    RankSweepSpec, Scene, SceneSpec, SweepSpec,
};
use ttreg::registration::{register_with, write_trace_csv, OutOfBoundsPolicy, SdfMap};
use ttreg::tensor_train::{self as tt, Precedence, DEFAULT_MEMORY_BUDGET};
use ttreg::volume::{self, analytic_sdf, sample_surface_points, sdf_from_occupancy};
use ttreg::*;

const POSE_HELP: &str = "12 comma-separated numbers (row-major rotation, then translation) \
or 6 numbers (wx,wy,wz,vx,vy,vz) exponentiated as a twist";

#[derive(Parser)]
#[command(name = "ttreg", version, about = "Tensor Train compressed SDF maps and point cloud registration")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compress a VOL3 volume into a TT3F file.
    Compress(CompressArgs),
    /// Expand a TT3F file into a VOL3 volume.
    Decompress(DecompressArgs),
    /// Describe a TT3F or VOL3 file.
    Info { path: PathBuf },
    /// Build an SDF from an analytic shape or an occupancy volume.
    SdfBuild(SdfBuildArgs),
    /// Register a point cloud against a TT3F or VOL3 map.
    Register(RegisterArgs),
    /// Perturbation sweep over map representations.
    Sweep(SweepArgs),
    /// Registration error and memory against TT rank.
    RankSweep(RankSweepArgs),
    /// Storage of each map representation.
    MemReport(MemReportArgs),
}

#[derive(Args)]
struct CompressArgs {
    input: PathBuf,
    output: PathBuf,
    /// Rank cap for both unfoldings.
    #[arg(long)]
    max_rank: Option<usize>,
    /// Relative Frobenius error target; 0 keeps every nonzero singular value.
    #[arg(long)]
    tol: Option<f64>,
    /// With both limits, let the tolerance override the rank cap.
    #[arg(long)]
    tol_wins: bool,
}

#[derive(Args)]
struct GridArgs {
    /// Center of voxel (0,0,0); defaults to a grid on [-1,1]^3.
    #[arg(long, value_parser = parse_vec3)]
    origin: Option<Vector3<f64>>,
    /// Voxel size, one value or three.
    #[arg(long, value_parser = parse_vec3_or_scalar)]
    spacing: Option<Vector3<f64>>,
}

impl GridArgs {
    fn grid(&self, dims: [usize; 3]) -> Result<Grid> {
        let default = Grid::cube(dims, 1.0)?;
        Ok(Grid::new(
            dims,
            self.origin.unwrap_or(default.origin()),
            self.spacing.unwrap_or(default.spacing()),
        )?)
    }
}

#[derive(Args)]
struct DecompressArgs {
    input: PathBuf,
    output: PathBuf,
    #[command(flatten)]
    grid: GridArgs,
}

#[derive(Args)]
struct SdfBuildArgs {
    /// Output VOL3 path.
    #[arg(long)]
    out: PathBuf,
    /// Analytic shape: sphere:R[@x,y,z], box:hx,hy,hz[@x,y,z], union:A;B;...
    #[arg(long, conflicts_with = "occupancy")]
    shape: Option<Shape>,
    /// Voxels per axis for --shape.
    #[arg(long, default_value_t = 128)]
    dims: usize,
    /// The --shape grid covers [-w, w]^3.
    #[arg(long, default_value_t = 1.0)]
    half_width: f64,
    /// VOL3 whose voxels at or above --threshold are occupied.
    #[arg(long)]
    occupancy: Option<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    /// Truncate to [-mu, mu] (world units).
    #[arg(long)]
    mu: Option<f64>,
    /// Also write surface points sampled from the SDF (XYZ, or PLY by extension).
    #[arg(long)]
    cloud: Option<PathBuf>,
    #[arg(long, default_value_t = 2000)]
    points: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct SolverArgs {
    #[arg(long, default_value_t = 50)]
    max_iterations: usize,
    #[arg(long, default_value_t = 1.0)]
    step_scale: f64,
    /// Stop after two consecutive steps with norm below this.
    #[arg(long, default_value_t = 1e-4)]
    threshold: f64,
    /// Relative Levenberg damping: lambda = damping * trace(H) / 6.
    #[arg(long, default_value_t = 1e-3)]
    damping: f64,
    /// Sample the nearest boundary voxel for points outside the grid instead of dropping them.
    #[arg(long)]
    clamp: bool,
}

impl SolverArgs {
    fn config(&self) -> RegistrationConfig {
        RegistrationConfig {
            max_iterations: self.max_iterations,
            step_scale: self.step_scale,
            convergence_threshold: self.threshold,
            levenberg_damping: self.damping,
            out_of_bounds: if self.clamp {
                OutOfBoundsPolicy::Clamp
            } else {
                OutOfBoundsPolicy::Drop
            },
            ..Default::default()
        }
    }
}

#[derive(Args)]
struct RegisterArgs {
    /// TT3F or VOL3 map.
    #[arg(long)]
    map: PathBuf,
    /// Observation, XYZ or PLY.
    #[arg(long)]
    cloud: PathBuf,
    #[arg(long, value_parser = parse_pose, help = format!("Initial pose: {POSE_HELP}"))]
    init: Option<Pose>,
    #[arg(long, value_parser = parse_pose, help = format!("Ground-truth pose for error reporting: {POSE_HELP}"))]
    gt: Option<Pose>,
    /// Write the per-iteration trace as CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Exit with an error when the solver does not converge.
    #[arg(long)]
    strict: bool,
    /// Grid placement of a TT3F map (VOL3 files carry their own).
    #[command(flatten)]
    grid: GridArgs,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Args)]
struct SceneArgs {
    #[arg(long, default_value = "sphere:0.5")]
    shape: Shape,
    #[arg(long, default_value_t = 128)]
    dims: usize,
    #[arg(long, default_value_t = 1.0)]
    half_width: f64,
    /// Surface points in the observation.
    #[arg(long, default_value_t = 2000)]
    points: usize,
    /// TSDF truncation in voxels.
    #[arg(long, default_value_t = 5.0)]
    mu_voxels: f64,
    /// TT rank cap of the compressed maps.
    #[arg(long, default_value_t = 20)]
    rank: usize,
    /// Use this VOL3 SDF instead of --shape (ground truth is the identity).
    #[arg(long, requires = "scene_cloud")]
    sdf: Option<PathBuf>,
    /// Observation for --sdf.
    #[arg(long = "scene-cloud", id = "scene_cloud", requires = "sdf")]
    scene_cloud: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads; 0 uses every CPU.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

impl SceneArgs {
    fn build(&self, methods: &[Method]) -> Result<Scene> {
        match (&self.sdf, &self.scene_cloud) {
            (Some(sdf), Some(cloud)) => {
                let sdf = volume::io::load(sdf).with_context(|| format!("reading {}", sdf.display()))?;
                let cloud = PointCloud::load(cloud).with_context(|| format!("reading {}", cloud.display()))?;
                let mu = self.mu_voxels * sdf.grid().min_spacing();
                Ok(Scene::from_parts(sdf, cloud, Pose::identity(), mu, self.rank, methods)?)
            }
            _ => {
                let spec = SceneSpec {
                    shape: self.shape.clone(),
                    dims: self.dims,
                    half_width: self.half_width,
                    points: self.points,
                    mu_voxels: self.mu_voxels,
                    rank: self.rank,
                    seed: self.seed,
                };
                Ok(Scene::analytic(&spec, methods)?)
            }
        }
    }
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    scene: SceneArgs,
    /// Translation magnitudes in meters, paired with --rotations.
    #[arg(long, value_delimiter = ',', default_values_t = [0.05, 0.1, 0.2, 0.5, 1.0])]
    translations: Vec<f64>,
    /// Rotation magnitudes in radians.
    #[arg(long, value_delimiter = ',', default_values_t = [0.01, 0.02, 0.05, 0.1, 0.25])]
    rotations: Vec<f64>,
    /// Random directions per magnitude.
    #[arg(long, default_value_t = 5)]
    samples: usize,
    #[arg(long, value_delimiter = ',', default_value = "dense-sdf,dense-tsdf,tt-sdf,tt-tsdf")]
    methods: Vec<Method>,
    /// Per-run CSV.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Args)]
struct RankSweepArgs {
    #[command(flatten)]
    scene: SceneArgs,
    #[arg(long, value_delimiter = ',', default_values_t = [2, 4, 8, 16, 32])]
    ranks: Vec<usize>,
    #[arg(long, default_value_t = 0.1)]
    trans: f64,
    #[arg(long, default_value_t = 0.1)]
    rot: f64,
    /// Compress the TSDF instead of the SDF.
    #[arg(long)]
    truncated: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Args)]
struct MemReportArgs {
    /// Take dims and ranks from a TT3F file.
    #[arg(long, conflicts_with_all = ["dims", "ranks"])]
    tt: Option<PathBuf>,
    /// N1,N2,N3.
    #[arg(long, value_delimiter = ',')]
    dims: Option<Vec<usize>>,
    /// One rank for both unfoldings, or two.
    #[arg(long, value_delimiter = ',')]
    ranks: Option<Vec<usize>>,
    /// Count points from a cloud file.
    #[arg(long, conflicts_with = "points")]
    cloud: Option<PathBuf>,
    #[arg(long)]
    points: Option<usize>,
    /// Keypoint map for comparison: K,D.
    #[arg(long, value_delimiter = ',')]
    features: Option<Vec<usize>>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Compress(a) => compress(a),
        Command::Decompress(a) => decompress(a),
        Command::Info { path } => info(&path),
        Command::SdfBuild(a) => sdf_build(a),
        Command::Register(a) => register_cmd(a),
        Command::Sweep(a) => sweep(a),
        Command::RankSweep(a) => rank_sweep(a),
        Command::MemReport(a) => mem_report(a),
    }
}

/// Dense reconstruction cap in bytes, from `TTREG_MEM_BUDGET` when set.
fn memory_budget() -> Result<usize> {
    match std::env::var("TTREG_MEM_BUDGET") {
        Ok(v) => v
            .trim()
            .parse()
            .with_context(|| format!("TTREG_MEM_BUDGET must be a byte count, got {v:?}")),
        Err(_) => Ok(DEFAULT_MEMORY_BUDGET),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn compress(a: CompressArgs) -> Result<()> {
    let vol = volume::io::load(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    if a.max_rank.is_none() && a.tol.is_none() {
        bail!("give --max-rank, --tol or both");
    }
    let spec = TtBuildSpec {
        max_rank: a.max_rank,
        rel_tolerance: a.tol,
        precedence: if a.tol_wins { Precedence::Tolerance } else { Precedence::RankCap },
    };
    let tt = tt_svd(&vol, &spec)?;
    tt::io::save(&a.output, &tt).with_context(|| format!("writing {}", a.output.display()))?;

    let dims = tt.dims();
    let ratio = memory::dense_bytes(dims) as f64 / tt.memory_bytes(memory::BYTES_PER_SCALAR) as f64;
    let rel = match tt.reconstruct_values(memory_budget()?) {
        Ok(values) => {
            let diff: f64 = values.iter().zip(vol.values()).map(|(x, y)| (x - y) * (x - y)).sum();
            format!("{:.6e}", diff.sqrt() / vol.frobenius_norm().max(f64::MIN_POSITIVE))
        }
        Err(_) => "skipped (over memory budget)".into(),
    };
    println!(
        "dims {}x{}x{} ranks {},{} bytes {} ratio {ratio:.2} rel_error {rel}",
        dims[0],
        dims[1],
        dims[2],
        tt.ranks()[0],
        tt.ranks()[1],
        tt.memory_bytes(memory::BYTES_PER_SCALAR)
    );
    Ok(())
}

fn decompress(a: DecompressArgs) -> Result<()> {
    let tt = tt::io::load(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let grid = a.grid.grid(tt.dims())?;
    let vol = tt.reconstruct_on(grid, memory_budget()?)?;
    volume::io::save(&a.output, &vol).with_context(|| format!("writing {}", a.output.display()))?;
    Ok(())
}

fn magic(path: &Path) -> Result<[u8; 4]> {
    let mut buf = [0u8; 4];
    File::open(path)
        .and_then(|mut f| f.read_exact(&mut buf))
        .with_context(|| format!("reading {}", path.display()))?;
    Ok(buf)
}

fn info(path: &Path) -> Result<()> {
    let m = magic(path)?;
    if &m == tt::io::MAGIC {
        let t = tt::io::load(path)?;
        let [n1, n2, n3] = t.dims();
        let [r1, r2] = t.ranks();
        println!("format TT3F");
        println!("dims {n1}x{n2}x{n3}");
        println!("ranks {r1},{r2}");
        println!("core_bytes {}", t.memory_bytes(memory::BYTES_PER_SCALAR));
        println!("bytes {}", tt::io::encoded_len(&t));
        println!(
            "ratio {:.2}",
            memory::dense_bytes(t.dims()) as f64 / t.memory_bytes(memory::BYTES_PER_SCALAR) as f64
        );
    } else if &m == volume::io::MAGIC {
        let v = volume::io::load(path)?;
        let [n1, n2, n3] = v.dims();
        let (o, h) = (v.grid().origin(), v.grid().spacing());
        let (lo, hi) = v.values().iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
        println!("format VOL3");
        println!("dims {n1}x{n2}x{n3}");
        println!("origin {},{},{}", o.x, o.y, o.z);
        println!("spacing {},{},{}", h.x, h.y, h.z);
        println!("range {lo} {hi}");
        println!("bytes {}", volume::io::HEADER_LEN + memory::dense_bytes(v.dims()) + 4);
    } else {
        bail!("{} is neither TT3F nor VOL3", path.display());
    }
    Ok(())
}

fn sdf_build(a: SdfBuildArgs) -> Result<()> {
    let sdf = match (&a.shape, &a.occupancy) {
        (Some(shape), None) => analytic_sdf(shape, &Grid::cube([a.dims; 3], a.half_width)?)?,
        (None, Some(path)) => {
            let vol = volume::io::load(path).with_context(|| format!("reading {}", path.display()))?;
            sdf_from_occupancy(&OccupancyGrid::from_threshold(&vol, a.threshold))?
        }
        _ => bail!("give exactly one of --shape or --occupancy"),
    };
    if let Some(path) = &a.cloud {
        let mut rng = rand_seeded(a.seed);
        let cloud = match &a.shape {
            Some(shape) => sample_surface_points(shape, sdf.grid(), a.points, &mut rng)?,
            None => sample_surface_points(&sdf, sdf.grid(), a.points, &mut rng)?,
        };
        cloud.save(path).with_context(|| format!("writing {}", path.display()))?;
    }
    let out = match a.mu {
        Some(mu) => sdf.truncate(mu)?,
        None => sdf,
    };
    volume::io::save(&a.out, &out).with_context(|| format!("writing {}", a.out.display()))?;
    Ok(())
}

fn rand_seeded(seed: u64) -> impl rand::Rng {
    use rand::SeedableRng;
    rand_chacha::ChaCha8Rng::seed_from_u64(seed)
}

fn register_cmd(a: RegisterArgs) -> Result<()> {
    let cloud = PointCloud::load(&a.cloud).with_context(|| format!("reading {}", a.cloud.display()))?;
    let init = a.init.unwrap_or_else(Pose::identity);
    let config = a.solver.config();
    let map: Box<dyn SdfMap + Sync> = if &magic(&a.map)? == tt::io::MAGIC {
        let t = tt::io::load(&a.map)?;
        let grid = a.grid.grid(t.dims())?;
        Box::new(CompressedSdf::new(t, grid, None)?)
    } else {
        if a.grid.origin.is_some() || a.grid.spacing.is_some() {
            bail!("--origin and --spacing apply only to TT3F maps");
        }
        Box::new(DenseSdfMap::new(volume::io::load(&a.map)?)?)
    };
    let result = register_with(&cloud, map.as_ref(), &init, &config)?;

    let row = result.pose.to_row_major().map(|v| format!("{v:.9}")).join(",");
    println!("pose {row}");
    println!(
        "converged {} iterations {} cost {:.6e}",
        result.converged, result.iterations, result.final_cost
    );
    if let Some(gt) = &a.gt {
        let e = pose_error(&result.pose, gt);
        println!("rot_err {:.6e} trans_err {:.6e}", e.rotation, e.translation);
    }
    if let Some(path) = &a.trace {
        let mut w = create(path)?;
        write_trace_csv(&mut w, &result, a.gt.as_ref())?;
        w.flush()?;
    }
    if a.strict && !result.converged {
        bail!("did not converge in {} iterations", result.iterations);
    }
    Ok(())
}

fn sweep(a: SweepArgs) -> Result<()> {
    let scene = a.scene.build(&a.methods)?;
    let spec = SweepSpec {
        translations: a.translations,
        rotations: a.rotations,
        samples: a.samples,
        seed: a.scene.seed,
        methods: a.methods,
        jobs: a.scene.jobs,
        config: a.solver.config(),
    };
    let report = run_sweep(&scene, &spec)?;
    write_summary(&mut io::stdout().lock(), &report)?;
    if let Some(path) = &a.out {
        let mut w = create(path)?;
        write_cells_csv(&mut w, &report)?;
        w.flush()?;
    }
    Ok(())
}

fn rank_sweep(a: RankSweepArgs) -> Result<()> {
    let scene = a.scene.build(&[Method::DenseSdf])?;
    let spec = RankSweepSpec {
        ranks: a.ranks,
        trans_mag: a.trans,
        rot_mag: a.rot,
        seed: a.scene.seed,
        truncated: a.truncated,
        jobs: a.scene.jobs,
        config: a.solver.config(),
    };
    let report = run_rank_sweep(&scene, &spec)?;
    let mut out = io::stdout().lock();
    write_rank_csv(&mut out, &report)?;
    if let Some(e) = &report.dense {
        writeln!(out, "# dense rot_err {:.6e} trans_err {:.6e}", e.rotation, e.translation)?;
    }
    if let Some(path) = &a.out {
        let mut w = create(path)?;
        write_rank_csv(&mut w, &report)?;
        w.flush()?;
    }
    Ok(())
}

fn mem_report(a: MemReportArgs) -> Result<()> {
    let (dims, ranks) = match (&a.tt, &a.dims, &a.ranks) {
        (Some(path), _, _) => {
            let t = tt::io::load(path).with_context(|| format!("reading {}", path.display()))?;
            (t.dims(), t.ranks())
        }
        (None, Some(d), Some(r)) => {
            let dims = match d.as_slice() {
                [n1, n2, n3] => [*n1, *n2, *n3],
                _ => bail!("--dims takes three values"),
            };
            let ranks = match r.as_slice() {
                [r] => [*r, *r],
                [r1, r2] => [*r1, *r2],
                _ => bail!("--ranks takes one or two values"),
            };
            (dims, ranks)
        }
        _ => bail!("give --tt, or both --dims and --ranks"),
    };
    let points = match (&a.cloud, a.points) {
        (Some(path), _) => PointCloud::load(path).with_context(|| format!("reading {}", path.display()))?.len(),
        (None, Some(n)) => n,
        (None, None) => bail!("give --points or --cloud"),
    };
    let features = match a.features.as_deref() {
        None => None,
        Some([k, d]) => Some((*k, *d)),
        Some(_) => bail!("--features takes K,D"),
    };
    let rows = memory_report(points, dims, ranks, features);
    let mut out = io::stdout().lock();
    write_memory_csv(&mut out, &rows)?;
    if let Some(path) = &a.out {
        let mut w = create(path)?;
        write_memory_csv(&mut w, &rows)?;
        w.flush()?;
    }
    Ok(())
}

fn parse_numbers(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| anyhow!("{t:?}: {e}")))
        .collect()
}

fn parse_vec3(s: &str) -> Result<Vector3<f64>> {
    match parse_numbers(s)?.as_slice() {
        [x, y, z] => Ok(Vector3::new(*x, *y, *z)),
        _ => bail!("expected x,y,z"),
    }
}

fn parse_vec3_or_scalar(s: &str) -> Result<Vector3<f64>> {
    match parse_numbers(s)?.as_slice() {
        [h] => Ok(Vector3::repeat(*h)),
        [x, y, z] => Ok(Vector3::new(*x, *y, *z)),
        _ => bail!("expected one value or three"),
    }
}

fn parse_pose(s: &str) -> Result<Pose> {
    let v = parse_numbers(s)?;
    match v.len() {
        12 => {
            let rotation = Matrix3::new(v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8]);
            Ok(Pose::new(rotation, Vector3::new(v[9], v[10], v[11]))?)
        }
        6 => Ok(exp_se3(&Twist::from_array([v[0], v[1], v[2], v[3], v[4], v[5]]))),
        n => bail!("a pose needs 12 or 6 numbers, got {n}"),
    }
}
