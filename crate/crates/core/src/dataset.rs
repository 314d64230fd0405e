//! MIMO training data: angle sweeps through the simulated plant, seeded
//! splits and CSV persistence.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::RngStream;
use crate::plant::{invert_plant, plant_forward, PlantParams, PoseAngles, TendonDelta, INVERSION_MARGIN};

pub const CSV_HEADER: [&str; 7] = ["alpha_deg", "beta_deg", "l1", "l2", "l3", "replicate", "edge_flag"];

/// Largest |l1 + l2 + l3| accepted when reading: three 6-decimal roundings
/// of a zero-sum command can leave at most one unit in the last place.
pub const SUM_TOLERANCE: f64 = 1e-6 + 1e-9;

/// Minimum fraction of grid points that must invert for a dataset to be usable.
pub const MIN_SUCCESS_FRACTION: f64 = 0.9;

/// Axis sweep `min..=max` in steps of `step`, applied to both angles.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub min_deg: f64,
    pub max_deg: f64,
    pub step: f64,
}

impl GridSpec {
    pub const fn new(min_deg: f64, max_deg: f64, step: f64) -> Self {
        GridSpec { min_deg, max_deg, step }
    }

    /// −90..90 at 10 degree intervals.
    pub const fn paper_sweep() -> Self {
        GridSpec::new(-90.0, 90.0, 10.0)
    }

    /// Number of values along one axis.
    pub fn axis_len(&self) -> Result<usize> {
        if !(self.min_deg.is_finite() && self.max_deg.is_finite() && self.step.is_finite()) {
            return Err(Error::BadGridSpec(format!("non-finite grid {:?}", self)));
        }
        if self.min_deg >= self.max_deg {
            return Err(Error::BadGridSpec(format!(
                "min {} must be below max {}",
                self.min_deg, self.max_deg
            )));
        }
        if self.step <= 0.0 {
            return Err(Error::BadGridSpec(format!("step {} must be positive", self.step)));
        }
        let intervals = (self.max_deg - self.min_deg) / self.step;
        if (intervals - intervals.round()).abs() > 1e-9 {
            return Err(Error::BadGridSpec(format!(
                "range {}..{} is not a whole number of {} steps",
                self.min_deg, self.max_deg, self.step
            )));
        }
        Ok(intervals.round() as usize + 1)
    }

    pub fn axis_values(&self) -> Result<Vec<f64>> {
        let n = self.axis_len()?;
        Ok((0..n).map(|k| self.min_deg + k as f64 * self.step).collect())
    }

    /// Index of the axis value nearest to `v`, clamped to the grid.
    pub fn nearest_index(&self, v: f64) -> usize {
        let n = self.axis_len().unwrap_or(1);
        let k = ((v - self.min_deg) / self.step).round();
        k.clamp(0.0, (n - 1) as f64) as usize
    }
}

/// Cartesian product of the axis values, yaw outer and pitch inner.
pub fn generate_grid(spec: &GridSpec) -> Result<Vec<PoseAngles>> {
    let axis = spec.axis_values()?;
    Ok(axis
        .iter()
        .flat_map(|&a| axis.iter().map(move |&b| PoseAngles::new(a, b)))
        .collect())
}

/// Yaw sweep with zero pitch followed by a pitch sweep with zero yaw.
pub fn alternating_sweep(spec: &GridSpec) -> Result<Vec<PoseAngles>> {
    let axis = spec.axis_values()?;
    Ok(axis
        .iter()
        .map(|&a| PoseAngles::new(a, 0.0))
        .chain(axis.iter().map(|&b| PoseAngles::new(0.0, b)))
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    /// Achieved pose; the model input.
    pub pose: PoseAngles,
    /// Tendon command; the model output.
    pub cmd: TendonDelta,
    pub replicate: u32,
    /// Target lies outside the guaranteed inversion margin.
    pub edge: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub plant_preset: Option<String>,
    pub plant: PlantParams,
    pub grid: Option<GridSpec>,
    pub replicates: u32,
    pub noise_sigma: f64,
    pub master_seed: u64,
    pub inversion_failures: usize,
}

impl DatasetMeta {
    /// Metadata for data that did not come from a grid sweep.
    pub fn external() -> Self {
        DatasetMeta {
            plant_preset: None,
            plant: PlantParams::default(),
            grid: None,
            replicates: 1,
            noise_sigma: 0.0,
            master_seed: 0,
            inversion_failures: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub meta: DatasetMeta,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn poses(&self) -> Vec<PoseAngles> {
        self.samples.iter().map(|s| s.pose).collect()
    }

    pub fn cmds(&self) -> Vec<TendonDelta> {
        self.samples.iter().map(|s| s.cmd).collect()
    }

    pub fn with_preset_label(mut self, label: &str) -> Self {
        self.meta.plant_preset = Some(label.to_string());
        self
    }
}

/// Sweeps the grid through the plant.
///
/// Each target is inverted on the noise-free plant; each replicate then
/// records the achieved pose, with measurement noise drawn from the stream
/// keyed on `(seed, point, replicate)`.
pub fn build_dataset(grid: &GridSpec, replicates: u32, params: &PlantParams, seed: u64) -> Result<Dataset> {
    if replicates == 0 {
        return Err(Error::InvalidParameter("replicates must be >= 1".into()));
    }
    params.validate()?;
    let targets = generate_grid(grid)?;
    let clean = params.noise_free();

    let mut samples = Vec::with_capacity(targets.len() * replicates as usize);
    let mut failures = 0;
    for (idx, target) in targets.iter().enumerate() {
        let cmd = match invert_plant(*target, &clean) {
            Ok(c) => c,
            Err(Error::NoConvergence { .. }) => {
                failures += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        let edge = target.alpha.abs() > INVERSION_MARGIN || target.beta.abs() > INVERSION_MARGIN;
        for rep in 0..replicates {
            let pose = if params.noise_sigma > 0.0 {
                let task = idx as u64 * replicates as u64 + rep as u64;
                let mut rng = RngStream::derive(seed, "dataset", task);
                plant_forward(cmd, params, Some(&mut rng))
            } else {
                *target
            };
            samples.push(Sample {
                pose,
                cmd,
                replicate: rep,
                edge,
            });
        }
    }

    let succeeded = targets.len() - failures;
    if (succeeded as f64) < MIN_SUCCESS_FRACTION * targets.len() as f64 {
        return Err(Error::DatasetTooSparse {
            succeeded,
            total: targets.len(),
        });
    }
    Ok(Dataset {
        samples,
        meta: DatasetMeta {
            plant_preset: None,
            plant: *params,
            grid: Some(*grid),
            replicates,
            noise_sigma: params.noise_sigma,
            master_seed: seed,
            inversion_failures: failures,
        },
    })
}

/// Seeded shuffle then prefix split into `(train, validation)`.
pub fn split(ds: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "train fraction {} must lie in (0, 1)",
            train_fraction
        )));
    }
    let n = ds.len();
    let n_train = (train_fraction * n as f64).round() as usize;
    if n_train == 0 || n_train == n {
        return Err(Error::TooFewSamples(format!(
            "{} samples at fraction {} leaves an empty side",
            n, train_fraction
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    RngStream::derive(seed, "split", 0).shuffle(&mut order);
    let pick = |idx: &[usize]| Dataset {
        samples: idx.iter().map(|&i| ds.samples[i]).collect(),
        meta: ds.meta.clone(),
    };
    Ok((pick(&order[..n_train]), pick(&order[n_train..])))
}

/// Path of the JSON sidecar next to a dataset CSV.
pub fn meta_path(csv_path: &Path) -> PathBuf {
    let stem = csv_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    csv_path.with_file_name(format!("{}.meta.json", stem))
}

fn fixed6(v: f64) -> String {
    format!("{:.6}", v)
}

pub fn write_csv(ds: &Dataset, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut out = String::with_capacity(64 * (ds.len() + 1));
    out.push_str(&CSV_HEADER.join(","));
    out.push('\n');
    for s in &ds.samples {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            fixed6(s.pose.alpha),
            fixed6(s.pose.beta),
            fixed6(s.cmd.l1),
            fixed6(s.cmd.l2),
            fixed6(s.cmd.l3),
            s.replicate,
            u8::from(s.edge)
        ));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))?;
    let meta = serde_json::to_string_pretty(&ds.meta)?;
    let mp = meta_path(path);
    fs::write(&mp, meta + "\n").map_err(|e| Error::io(&mp, e))?;
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    if text.trim().is_empty() {
        return Err(Error::SchemaMismatch(format!("{} is empty", path.display())));
    }
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let mut columns = [0usize; 7];
    for (slot, name) in columns.iter_mut().zip(CSV_HEADER) {
        *slot = header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::SchemaMismatch(format!("missing column `{}`", name)))?;
    }
    if header.len() != CSV_HEADER.len() {
        return Err(Error::SchemaMismatch(format!(
            "expected {} columns, found {}",
            CSV_HEADER.len(),
            header.len()
        )));
    }

    let mut samples = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec?;
        let field = |k: usize| -> Result<&str> {
            rec.get(columns[k])
                .map(str::trim)
                .ok_or_else(|| Error::SchemaMismatch(format!("row {} is short", line + 2)))
        };
        let num = |k: usize| -> Result<f64> {
            let raw = field(k)?;
            let v: f64 = raw.parse().map_err(|_| {
                Error::SchemaMismatch(format!(
                    "row {}: `{}` is not a number in `{}`",
                    line + 2,
                    raw,
                    CSV_HEADER[k]
                ))
            })?;
            if !v.is_finite() {
                return Err(Error::SchemaMismatch(format!(
                    "row {}: non-finite `{}`",
                    line + 2,
                    CSV_HEADER[k]
                )));
            }
            Ok(v)
        };
        let replicate: u32 = field(5)?
            .parse()
            .map_err(|_| Error::SchemaMismatch(format!("row {}: bad replicate", line + 2)))?;
        let edge = match field(6)? {
            "0" => false,
            "1" => true,
            other => {
                return Err(Error::SchemaMismatch(format!(
                    "row {}: edge_flag `{}` must be 0 or 1",
                    line + 2,
                    other
                )))
            }
        };
        let cmd = TendonDelta::new(num(2)?, num(3)?, num(4)?);
        if cmd.sum().abs() > SUM_TOLERANCE {
            return Err(Error::SchemaMismatch(format!(
                "row {}: tendon command sums to {:e}, not zero",
                line + 2,
                cmd.sum()
            )));
        }
        samples.push(Sample {
            pose: PoseAngles::new(num(0)?, num(1)?),
            cmd,
            replicate,
            edge,
        });
    }
    if samples.is_empty() {
        return Err(Error::SchemaMismatch(format!("{} has no data rows", path.display())));
    }

    let mp = meta_path(path);
    let meta = if mp.exists() {
        let raw = fs::read_to_string(&mp).map_err(|e| Error::io(&mp, e))?;
        serde_json::from_str(&raw)?
    } else {
        DatasetMeta::external()
    };
    Ok(Dataset { samples, meta })
}
