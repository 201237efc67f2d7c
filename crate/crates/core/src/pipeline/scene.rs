use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::memory;
use super::PipelineError;
use crate::cloud::PointCloud;
use crate::geometry::Pose;
use crate::registration::{
    register_with, CompressedSdf, DenseSdfMap, RegistrationConfig, RegistrationError,
    RegistrationResult,
};
use crate::tensor_train::TtBuildSpec;
use crate::volume::{analytic_sdf, sample_surface_points, DenseVolume, Grid, Shape};

/// Map representation used for registration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    DenseSdf,
    DenseTsdf,
    TtSdf,
    TtTsdf,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::DenseSdf, Method::DenseTsdf, Method::TtSdf, Method::TtTsdf];

    pub fn name(self) -> &'static str {
        match self {
            Method::DenseSdf => "dense-sdf",
            Method::DenseTsdf => "dense-tsdf",
            Method::TtSdf => "tt-sdf",
            Method::TtTsdf => "tt-tsdf",
        }
    }

    pub fn is_truncated(self) -> bool {
        matches!(self, Method::DenseTsdf | Method::TtTsdf)
    }

    pub fn is_compressed(self) -> bool {
        matches!(self, Method::TtSdf | Method::TtTsdf)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Method, PipelineError> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| PipelineError::Invalid(format!("unknown method {s:?}")))
    }
}

/// Synthetic scene: an analytic shape sampled on a cube grid, observed as a
/// cloud of surface points in the map frame.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub shape: Shape,
    /// Voxels per axis.
    pub dims: usize,
    /// The grid covers `[-half_width, half_width]³`.
    pub half_width: f64,
    pub points: usize,
    /// Truncation distance of the TSDF maps, in voxels.
    pub mu_voxels: f64,
    /// TT rank cap of the compressed maps.
    pub rank: usize,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            shape: Shape::sphere(0.5),
            dims: 128,
            half_width: 1.0,
            points: 2000,
            mu_voxels: 5.0,
            rank: 20,
            seed: 0,
        }
    }
}

/// Maps built for a set of methods plus the observation to register.
#[derive(Debug, Clone)]
pub struct Scene {
    sdf: DenseSdfMap,
    tsdf: Option<DenseSdfMap>,
    tt_sdf: Option<CompressedSdf>,
    tt_tsdf: Option<CompressedSdf>,
    cloud: PointCloud,
    truth: Pose,
    mu: f64,
    rank: usize,
}

impl Scene {
    pub fn analytic(spec: &SceneSpec, methods: &[Method]) -> Result<Scene, PipelineError> {
        if spec.points == 0 {
            return Err(PipelineError::Invalid("scene needs at least one point".into()));
        }
        let grid = Grid::cube([spec.dims; 3], spec.half_width)?;
        let sdf = analytic_sdf(&spec.shape, &grid)?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let cloud = sample_surface_points(&spec.shape, &grid, spec.points, &mut rng)?;
        let mu = spec.mu_voxels * grid.min_spacing();
        Scene::from_parts(sdf, cloud, Pose::identity(), mu, spec.rank, methods)
    }

    /// `truth` maps cloud coordinates into the map frame.
    pub fn from_parts(
        sdf: DenseVolume,
        cloud: PointCloud,
        truth: Pose,
        mu: f64,
        rank: usize,
        methods: &[Method],
    ) -> Result<Scene, PipelineError> {
        if rank == 0 {
            return Err(PipelineError::Invalid("rank must be positive".into()));
        }
        let needs = |pred: fn(Method) -> bool| methods.iter().any(|&m| pred(m));
        let tsdf_volume = if needs(Method::is_truncated) {
            Some(sdf.truncate(mu)?)
        } else {
            None
        };
        let spec = TtBuildSpec::with_max_rank(rank);
        let tt_sdf = if methods.contains(&Method::TtSdf) {
            Some(CompressedSdf::from_volume(&sdf, &spec, None)?)
        } else {
            None
        };
        let tt_tsdf = match (&tsdf_volume, methods.contains(&Method::TtTsdf)) {
            (Some(t), true) => Some(CompressedSdf::from_volume(t, &spec, Some(mu))?),
            _ => None,
        };
        let tsdf = tsdf_volume.map(DenseSdfMap::new).transpose()?;
        Ok(Scene {
            sdf: DenseSdfMap::new(sdf)?,
            tsdf,
            tt_sdf,
            tt_tsdf,
            cloud,
            truth,
            mu,
            rank,
        })
    }

    pub fn sdf(&self) -> &DenseVolume {
        self.sdf.volume()
    }

    pub fn grid(&self) -> &Grid {
        self.sdf.volume().grid()
    }

    pub fn cloud(&self) -> &PointCloud {
        &self.cloud
    }

    pub fn truth(&self) -> &Pose {
        &self.truth
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Voxel size used by the success threshold.
    pub fn spacing(&self) -> f64 {
        self.grid().min_spacing()
    }

    pub fn compressed(&self, method: Method) -> Option<&CompressedSdf> {
        match method {
            Method::TtSdf => self.tt_sdf.as_ref(),
            Method::TtTsdf => self.tt_tsdf.as_ref(),
            _ => None,
        }
    }

    pub fn has(&self, method: Method) -> bool {
        match method {
            Method::DenseSdf => true,
            Method::DenseTsdf => self.tsdf.is_some(),
            m => self.compressed(m).is_some(),
        }
    }

    /// Stored size of the map a method reads, at four bytes per scalar.
    pub fn map_bytes(&self, method: Method) -> usize {
        match self.compressed(method) {
            Some(tt) => tt.memory_bytes(memory::BYTES_PER_SCALAR),
            None => memory::dense_bytes(self.grid().dims()),
        }
    }

    /// Registers the scene's cloud from `initial` using `method`'s map.
    pub fn register(
        &self,
        method: Method,
        initial: &Pose,
        config: &RegistrationConfig,
    ) -> Result<RegistrationResult, PipelineError> {
        let missing = || PipelineError::Invalid(format!("scene was built without {method}"));
        let result = match method {
            Method::DenseSdf => register_with(&self.cloud, &self.sdf, initial, config),
            Method::DenseTsdf => {
                register_with(&self.cloud, self.tsdf.as_ref().ok_or_else(missing)?, initial, config)
            }
            m => register_with(&self.cloud, self.compressed(m).ok_or_else(missing)?, initial, config),
        };
        result.map_err(PipelineError::from)
    }
}

impl From<RegistrationError> for PipelineError {
    fn from(e: RegistrationError) -> Self {
        PipelineError::Registration(e)
    }
}
