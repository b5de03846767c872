use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::burgers::{solve_burgers1d, BURGERS_NU};
use super::grf::{sample_grf_1d_periodic, GrfFamily, GrfSpec};
use super::grid::{Grid1D, Grid3D};
use super::heat::{blob_ic, heat_stable_dt, solve_heat3d, BlobSpec3D};
use super::kdv::{solve_kdv1d, KDV_ETA, KDV_GAMMA};
use super::ks::{solve_ks1d_etdrk4, KS_LENGTH};
use super::soliton::{soliton_ic, SolitonSpec, SOLITON_PERIOD};
use super::trajectory::Trajectory;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, indexed_seed, rng};
use crate::tensor::Tensor;

pub const DATASET_FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const DATA_FILE: &str = "u.bin";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PdeTag {
    Burgers1d,
    Kdv1d,
    Ks1d,
    Heat3d,
}

impl PdeTag {
    pub const ALL: [PdeTag; 4] = [PdeTag::Burgers1d, PdeTag::Kdv1d, PdeTag::Ks1d, PdeTag::Heat3d];

    pub fn name(self) -> &'static str {
        match self {
            PdeTag::Burgers1d => "burgers1d",
            PdeTag::Kdv1d => "kdv1d",
            PdeTag::Ks1d => "ks1d",
            PdeTag::Heat3d => "heat3d",
        }
    }
}

impl std::fmt::Display for PdeTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for PdeTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PdeTag::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown pde `{s}` (expected burgers1d, kdv1d, ks1d or heat3d)")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SpatialGrid {
    Line(Grid1D),
    LShape(Grid3D),
}

impl SpatialGrid {
    pub fn n_points(&self) -> usize {
        match self {
            SpatialGrid::Line(g) => g.n_points,
            SpatialGrid::LShape(g) => g.len(),
        }
    }

    pub fn spatial_shape(&self) -> Vec<usize> {
        match self {
            SpatialGrid::Line(g) => vec![g.n_points],
            SpatialGrid::LShape(g) => vec![g.nx, g.ny, g.nz],
        }
    }

    /// Flat indices that carry degrees of freedom seen by models and norms.
    pub fn active_indices(&self) -> Vec<usize> {
        match self {
            SpatialGrid::Line(g) => (0..g.n_points).collect(),
            SpatialGrid::LShape(g) => g.active_indices(),
        }
    }

    /// Coordinates of the active points, `n_active × d`.
    pub fn active_coords(&self) -> Tensor {
        match self {
            SpatialGrid::Line(g) => g.coord_tensor(),
            SpatialGrid::LShape(g) => g.active_coords(),
        }
    }

    pub fn domain_length(&self) -> Vec<f64> {
        match self {
            SpatialGrid::Line(g) => vec![g.length],
            SpatialGrid::LShape(_) => vec![1.0; 3],
        }
    }
}

/// Everything that fixes how one PDE family's samples are produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemSetup {
    pub pde: PdeTag,
    pub grid: SpatialGrid,
    pub dt_save: f64,
    /// Number of saved steps; each sample holds `n_t + 1` frames.
    pub n_t: usize,
    pub t_train: f64,
    pub dt_solver: f64,
    pub solver: String,
    pub coefficients: BTreeMap<String, f64>,
}

impl ProblemSetup {
    /// Default setup. `paper_scale` only changes the heat grid (16×16×8 → 32×32×16).
    pub fn new(pde: PdeTag, paper_scale: bool) -> Result<Self> {
        let mut coefficients = BTreeMap::new();
        let s = match pde {
            PdeTag::Burgers1d => {
                coefficients.insert("nu".into(), BURGERS_NU);
                Self {
                    pde,
                    grid: SpatialGrid::Line(Grid1D::periodic_with_endpoint(101, 1.0)?),
                    dt_save: 0.01,
                    n_t: 100,
                    t_train: 0.5,
                    dt_solver: 5e-4,
                    solver: "pseudo-spectral, integrating-factor RK4, 2/3 dealiasing".into(),
                    coefficients,
                }
            }
            PdeTag::Kdv1d => {
                coefficients.insert("eta".into(), KDV_ETA);
                coefficients.insert("gamma".into(), KDV_GAMMA);
                Self {
                    pde,
                    grid: SpatialGrid::Line(Grid1D::periodic(100, SOLITON_PERIOD)?),
                    dt_save: 0.025,
                    n_t: 200,
                    t_train: 2.5,
                    dt_solver: 2.5e-4,
                    solver: "pseudo-spectral, integrating-factor midpoint, 2/3 dealiasing".into(),
                    coefficients,
                }
            }
            PdeTag::Ks1d => Self {
                pde,
                grid: SpatialGrid::Line(Grid1D::periodic(128, KS_LENGTH)?),
                dt_save: 0.1,
                n_t: 300,
                t_train: 15.0,
                dt_solver: 0.1,
                solver: "ETDRK4, 32-point contour quadrature, 2/3 dealiasing".into(),
                coefficients,
            },
            PdeTag::Heat3d => {
                let (grid, sigma, lo, hi) = if paper_scale {
                    (Grid3D::new(32, 32, 16)?, 4.0, 4.0, 11.0)
                } else {
                    (Grid3D::new(16, 16, 8)?, 2.0, 2.0, 5.0)
                };
                coefficients.insert("alpha".into(), 1.0);
                coefficients.insert("blob_sigma".into(), sigma);
                coefficients.insert("blob_center_lo".into(), lo);
                coefficients.insert("blob_center_hi".into(), hi);
                let dt_solver = heat_stable_dt(&grid, 1.0, 0.01);
                Self {
                    pde,
                    grid: SpatialGrid::LShape(grid),
                    dt_save: 0.01,
                    n_t: 100,
                    t_train: 0.33,
                    dt_solver,
                    solver: "explicit Euler, 7-point CD2 Laplacian, Dirichlet T = 0".into(),
                    coefficients,
                }
            }
        };
        Ok(s)
    }

    pub fn coefficient(&self, name: &str) -> Result<f64> {
        self.coefficients
            .get(name)
            .copied()
            .ok_or_else(|| Error::Config(format!("{} setup lacks coefficient `{name}`", self.pde)))
    }

    pub fn t_final(&self) -> f64 {
        self.n_t as f64 * self.dt_save
    }

    /// Index of the last frame inside the training window.
    pub fn train_steps(&self) -> usize {
        (self.t_train / self.dt_save).round() as usize
    }

    /// Draws the initial condition for one sample and solves it.
    pub fn solve_sample(&self, sample_seed: u64) -> Result<(Trajectory, serde_json::Value)> {
        let t_final = self.t_final();
        match (&self.pde, &self.grid) {
            (PdeTag::Burgers1d, SpatialGrid::Line(g)) => {
                let spec = GrfSpec {
                    family: GrfFamily::Spectral1d,
                    sigma: 25.0,
                    tau: 5.0,
                    gamma: 4.0,
                    seed: sample_seed,
                };
                let u0 = sample_grf_1d_periodic(&spec, g, 1)?;
                let tr = solve_burgers1d(u0.data(), self.coefficient("nu")?, g, self.dt_solver, t_final, self.dt_save)?;
                Ok((tr, serde_json::to_value(&spec)?))
            }
            (PdeTag::Kdv1d, SpatialGrid::Line(g)) => {
                let spec = SolitonSpec::sample(&mut rng(sample_seed));
                let u0 = soliton_ic(&spec, g)?;
                let (eta, gamma) = (self.coefficient("eta")?, self.coefficient("gamma")?);
                let tr = solve_kdv1d(&u0, eta, gamma, g, self.dt_solver, t_final, self.dt_save)?;
                Ok((tr, serde_json::to_value(&spec)?))
            }
            (PdeTag::Ks1d, SpatialGrid::Line(g)) => {
                let spec = GrfSpec {
                    family: GrfFamily::Laplacian1d,
                    sigma: 1.0,
                    tau: 2.0,
                    gamma: 1.0,
                    seed: sample_seed,
                };
                let u0 = sample_grf_1d_periodic(&spec, g, 1)?;
                let tr = solve_ks1d_etdrk4(u0.data(), g, self.dt_solver, t_final, self.dt_save)?;
                Ok((tr, serde_json::to_value(&spec)?))
            }
            (PdeTag::Heat3d, SpatialGrid::LShape(g)) => {
                let range = (self.coefficient("blob_center_lo")?, self.coefficient("blob_center_hi")?);
                let spec = BlobSpec3D::sample(&mut rng(sample_seed), range, self.coefficient("blob_sigma")?);
                spec.validate(g)?;
                let u0 = blob_ic(&spec, g);
                let tr = solve_heat3d(&u0, self.coefficient("alpha")?, g, self.dt_solver, t_final, self.dt_save)?;
                Ok((tr, serde_json::to_value(&spec)?))
            }
            (pde, grid) => Err(Error::Config(format!("{pde} cannot run on grid {grid:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub pde: PdeTag,
    pub n_samples: usize,
    /// The first `n_train` samples form the training split.
    pub n_train: usize,
    pub seed: u64,
    #[serde(default)]
    pub paper_scale: bool,
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::Config("dataset needs at least one sample".into()));
        }
        if self.n_train > self.n_samples {
            return Err(Error::Config(format!(
                "n_train {} exceeds n_samples {}",
                self.n_train, self.n_samples
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub setup: ProblemSetup,
    pub spatial_shape: Vec<usize>,
    pub t_final: f64,
    pub train_steps: usize,
    pub n_samples: usize,
    pub n_train: usize,
    pub seed: u64,
    pub byte_order: String,
    pub dtype: String,
    pub ic_params: Vec<serde_json::Value>,
}

/// Solution frames for many samples, `[sample][time][space]`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryDataset {
    pub manifest: Manifest,
    data: Vec<f64>,
}

impl TrajectoryDataset {
    pub fn setup(&self) -> &ProblemSetup {
        &self.manifest.setup
    }

    pub fn n_samples(&self) -> usize {
        self.manifest.n_samples
    }

    pub fn n_frames(&self) -> usize {
        self.manifest.setup.n_t + 1
    }

    pub fn n_space(&self) -> usize {
        self.manifest.spatial_shape.iter().product()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        let len = self.n_frames() * self.n_space();
        &self.data[i * len..(i + 1) * len]
    }

    pub fn frame(&self, i: usize, t: usize) -> &[f64] {
        let m = self.n_space();
        &self.sample(i)[t * m..(t + 1) * m]
    }

    /// `[n_frames × n_space]`
    pub fn sample_tensor(&self, i: usize) -> Tensor {
        Tensor::matrix(self.n_frames(), self.n_space(), self.sample(i).to_vec()).expect("consistent dataset")
    }

    /// Samples `range`, re-labelled as a standalone dataset.
    pub fn subset(&self, range: std::ops::Range<usize>) -> Result<Self> {
        if range.start >= range.end || range.end > self.n_samples() {
            return Err(Error::contract(format!(
                "subset {range:?} out of 0..{}",
                self.n_samples()
            )));
        }
        let len = self.n_frames() * self.n_space();
        let mut manifest = self.manifest.clone();
        manifest.n_samples = range.len();
        manifest.n_train = self.manifest.n_train.saturating_sub(range.start).min(range.len());
        manifest.ic_params = self.manifest.ic_params[range.clone()].to_vec();
        Ok(Self {
            manifest,
            data: self.data[range.start * len..range.end * len].to_vec(),
        })
    }

    pub fn train_split(&self) -> Result<Self> {
        self.subset(0..self.manifest.n_train)
    }

    pub fn test_split(&self) -> Result<Self> {
        self.subset(self.manifest.n_train..self.n_samples())
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut json = serde_json::to_vec_pretty(&self.manifest)?;
        json.push(b'\n');
        fs::write(dir.join(MANIFEST_FILE), json)?;
        let mut bytes = Vec::with_capacity(self.data.len() * 8);
        for v in &self.data {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        fs::write(dir.join(DATA_FILE), bytes)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let mpath = dir.join(MANIFEST_FILE);
        let dpath = dir.join(DATA_FILE);
        for p in [&mpath, &dpath] {
            if !p.is_file() {
                return Err(Error::Missing(p.clone()));
            }
        }
        let manifest: Manifest = serde_json::from_slice(&fs::read(&mpath)?)?;
        if manifest.format_version != DATASET_FORMAT_VERSION {
            return Err(Error::Config(format!(
                "dataset format version {} is not supported",
                manifest.format_version
            )));
        }
        if manifest.dtype != "f64" || manifest.byte_order != "little" {
            return Err(Error::Config(format!(
                "dataset stores {} / {}, expected f64 / little",
                manifest.dtype, manifest.byte_order
            )));
        }
        let bytes = fs::read(&dpath)?;
        let expected = manifest.n_samples * (manifest.setup.n_t + 1) * manifest.spatial_shape.iter().product::<usize>();
        if bytes.len() != expected * 8 {
            return Err(Error::Config(format!(
                "{} holds {} bytes, manifest implies {}",
                dpath.display(),
                bytes.len(),
                expected * 8
            )));
        }
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        Ok(Self { manifest, data })
    }
}

/// Per-sample seed under a dataset seed.
pub fn sample_seed(seed: u64, index: usize) -> u64 {
    indexed_seed(derive_seed(seed, "dataset"), index as u64)
}

/// Draws and solves every sample (in parallel on the current rayon pool).
/// A failed sample aborts generation with its index.
pub fn generate_dataset(cfg: &DatasetConfig) -> Result<TrajectoryDataset> {
    cfg.validate()?;
    let setup = ProblemSetup::new(cfg.pde, cfg.paper_scale)?;
    let results: Vec<Result<(Trajectory, serde_json::Value)>> = (0..cfg.n_samples)
        .into_par_iter()
        .map(|i| setup.solve_sample(sample_seed(cfg.seed, i)))
        .collect();
    let per_sample = (setup.n_t + 1) * setup.grid.n_points();
    let mut data = Vec::with_capacity(cfg.n_samples * per_sample);
    let mut ic_params = Vec::with_capacity(cfg.n_samples);
    for (index, r) in results.into_iter().enumerate() {
        let (tr, ic) = r.map_err(|e| Error::Sample {
            index,
            source: Box::new(e),
        })?;
        if tr.n_frames() != setup.n_t + 1 {
            return Err(Error::contract(format!(
                "sample {index} produced {} frames, expected {}",
                tr.n_frames(),
                setup.n_t + 1
            )));
        }
        data.extend(tr.frames.into_iter().flatten());
        ic_params.push(ic);
    }
    let manifest = Manifest {
        format_version: DATASET_FORMAT_VERSION,
        spatial_shape: setup.grid.spatial_shape(),
        t_final: setup.t_final(),
        train_steps: setup.train_steps(),
        n_samples: cfg.n_samples,
        n_train: cfg.n_train,
        seed: cfg.seed,
        byte_order: "little".into(),
        dtype: "f64".into(),
        ic_params,
        setup,
    };
    Ok(TrajectoryDataset { manifest, data })
}
