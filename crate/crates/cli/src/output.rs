//! CSV tables, JSON documents and the stored trajectory format.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use hfbflow::dynamics::{AbortRecord, HfbState, Model, MonitorRecord, SpectralMask, Trajectory};
use hfbflow::potential::PotentialSpec;
use hfbflow::{Field, Grid, Kernel, Symmetry};
use ndarray::{Array1, Array2};
use num_complex::Complex64 as C64;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// 17 significant digits.
pub fn fmt_sci(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let io = |e: csv::Error| CliError::Io(format!("{}: {e}", path.display()));
    w.write_record(header).map_err(io)?;
    for row in rows {
        w.write_record(row.iter().map(|v| fmt_sci(*v))).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::Io(e.to_string()))?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let file = File::open(path).map_err(|e| CliError::Trajectory(format!("{}: {e}", path.display())))?;
    serde_json::from_reader(BufReader::new(file))
        .map_err(|e| CliError::Trajectory(format!("{}: {e}", path.display())))
}

fn pairs(values: impl Iterator<Item = C64>) -> Vec<[f64; 2]> {
    values.map(|z| [z.re, z.im]).collect()
}

fn complex(values: &[[f64; 2]]) -> impl Iterator<Item = C64> + '_ {
    values.iter().map(|p| C64::new(p[0], p[1]))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrameRecord {
    pub t: f64,
    /// `[re, im]` pairs.
    pub phi: Vec<[f64; 2]>,
    /// Row-major `[re, im]` pairs.
    pub lambda: Vec<[f64; 2]>,
    pub gamma: Vec<[f64; 2]>,
}

/// Everything needed to rebuild a [`Trajectory`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoryFile {
    pub grid: Grid,
    pub potential: PotentialSpec,
    /// Retained plane waves when the run was spectrally projected.
    pub mask_modes: Option<Vec<[i64; 3]>>,
    pub dt: f64,
    pub output_every: usize,
    pub frames: Vec<FrameRecord>,
    pub monitors: Vec<MonitorRecord>,
    pub abort: Option<AbortRecord>,
}

impl TrajectoryFile {
    pub fn from_trajectory(traj: &Trajectory, mask_modes: Option<Vec<[i64; 3]>>) -> Result<Self, CliError> {
        let first = traj
            .frames
            .first()
            .ok_or_else(|| CliError::Trajectory("empty trajectory".into()))?;
        let frames = traj
            .frames
            .iter()
            .map(|f| FrameRecord {
                t: f.t,
                phi: pairs(f.phi.values().iter().copied()),
                lambda: pairs(f.lambda.values().iter().copied()),
                gamma: pairs(f.gamma.values().iter().copied()),
            })
            .collect();
        Ok(Self {
            grid: *first.grid(),
            potential: *first.model.potential(),
            mask_modes,
            dt: traj.dt,
            output_every: traj.output_every,
            frames,
            monitors: traj.monitors.clone(),
            abort: traj.abort.clone(),
        })
    }

    pub fn to_trajectory(&self) -> Result<Trajectory, CliError> {
        let bad = |msg: String| CliError::Trajectory(msg);
        let grid = Grid::new(self.grid.dim(), self.grid.n(), self.grid.length())
            .map_err(|e| bad(e.to_string()))?;
        let model = match &self.mask_modes {
            Some(modes) => {
                let mask = SpectralMask::from_modes(&grid, modes).map_err(|e| bad(e.to_string()))?;
                Model::with_mask(grid, self.potential, mask)
            }
            None => Model::new(grid, self.potential),
        }
        .map_err(|e| bad(e.to_string()))?;
        if self.frames.is_empty() {
            return Err(bad("no frames".into()));
        }
        let g = grid.len();
        let frames = self
            .frames
            .iter()
            .enumerate()
            .map(|(i, f)| frame_state(&model, f, g).map_err(|e| bad(format!("frame {i}: {e}"))))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Trajectory {
            frames,
            monitors: self.monitors.clone(),
            abort: self.abort.clone(),
            dt: self.dt,
            output_every: self.output_every,
        })
    }
}

/// Tags a loaded kernel when it passes the check; corrupted frames stay untagged.
fn kernel(grid: Grid, values: &[[f64; 2]], tag: Symmetry) -> Result<Kernel, String> {
    let g = grid.len();
    if values.len() != g * g {
        return Err(format!("kernel has {} entries, expected {}", values.len(), g * g));
    }
    let arr = Array2::from_shape_vec((g, g), complex(values).collect()).map_err(|e| e.to_string())?;
    let k = Kernel::new(grid, arr).map_err(|e| e.to_string())?;
    Ok(k.clone().with_symmetry(tag).unwrap_or(k))
}

fn frame_state(model: &Arc<Model>, f: &FrameRecord, g: usize) -> Result<HfbState, String> {
    let grid = *model.grid();
    if f.phi.len() != g {
        return Err(format!("condensate has {} entries, expected {g}", f.phi.len()));
    }
    if !f.t.is_finite() {
        return Err("non-finite time".into());
    }
    let phi = Field::new(grid, Array1::from_iter(complex(&f.phi))).map_err(|e| e.to_string())?;
    Ok(HfbState {
        t: f.t,
        phi,
        lambda: kernel(grid, &f.lambda, Symmetry::Symmetric)?,
        gamma: kernel(grid, &f.gamma, Symmetry::Hermitian)?,
        model: model.clone(),
    })
}
