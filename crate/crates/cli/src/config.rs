//! Run configuration, read from TOML.

use std::path::{Path, PathBuf};

use hfbflow::dynamics::Scheme;
use hfbflow::potential::{PotentialSpec, Profile};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridSection,
    pub potential: PotentialSection,
    #[serde(default)]
    pub initial: InitialSection,
    pub time: TimeSection,
    #[serde(default)]
    pub oracle: OracleSection,
    #[serde(default)]
    pub diagnostics: DiagnosticsSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub d: usize,
    pub n: usize,
    #[serde(rename = "L")]
    pub length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSection {
    #[serde(default)]
    pub profile: Profile,
    pub amplitude: f64,
    pub sigma: f64,
    pub beta: f64,
    #[serde(rename = "N")]
    pub particles: u32,
}

impl PotentialSection {
    pub fn spec(&self) -> PotentialSpec {
        PotentialSpec {
            profile: self.profile,
            amplitude: self.amplitude,
            sigma: self.sigma,
            beta: self.beta,
            particles: self.particles,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PhiProfile {
    /// Normalized Gaussian bump with an optional plane-wave phase.
    #[default]
    Gaussian,
    PlaneWave,
    /// Random coefficients on the lowest `phi_modes` plane waves.
    RandomSmooth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PairMode {
    #[default]
    Zero,
    /// `k(x, y) = a phi(x) phi(y) exp(-|x - y|^2 / (2 w^2))`.
    GaussianPair,
    /// Coherent `Gamma`, `Lambda = phi phi (1 - N^{beta-1} w(N^beta (x - y)))`.
    PairCorrected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialSection {
    pub phi_profile: PhiProfile,
    /// Centre of the bump; defaults to the middle of the box.
    pub phi_center: Option<Vec<f64>>,
    pub phi_width: f64,
    /// Integer mode vector of the phase (Gaussian) or of the wave (plane wave).
    pub phi_mode: Vec<i64>,
    pub phi_modes: usize,
    /// Norm of `phi`.
    pub phi_norm: f64,
    pub k_mode: PairMode,
    pub pair_amplitude: f64,
    pub pair_width: f64,
    pub correction_amplitude: f64,
    pub correction_width: f64,
}

impl Default for InitialSection {
    fn default() -> Self {
        Self {
            phi_profile: PhiProfile::Gaussian,
            phi_center: None,
            phi_width: 0.8,
            phi_mode: Vec::new(),
            phi_modes: 3,
            phi_norm: 1.0,
            k_mode: PairMode::Zero,
            pair_amplitude: 0.2,
            pair_width: 0.5,
            correction_amplitude: 0.5,
            correction_width: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSection {
    #[serde(rename = "T")]
    pub t_final: f64,
    pub dt: f64,
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
    /// Steps between stored frames and CSV rows.
    #[serde(default = "default_cadence")]
    pub output_cadence: usize,
}

fn default_scheme() -> Scheme {
    Scheme::Strang
}

fn default_cadence() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CutoffPolicy {
    /// Smallest cutoff whose predicted tail is below `tail_target`, plus `n_max_margin`.
    #[default]
    Auto,
    /// Use `n_max` as given.
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleSection {
    pub enabled: bool,
    pub modes: usize,
    pub n_max_policy: CutoffPolicy,
    pub n_max: Option<usize>,
    pub n_max_margin: usize,
    pub tail_target: f64,
    /// Largest admissible realized tail mass.
    pub tail_bound: f64,
    pub krylov_tol: f64,
    /// Memory bound on the occupation basis.
    pub max_states: usize,
}

impl Default for OracleSection {
    fn default() -> Self {
        Self {
            enabled: false,
            modes: 3,
            n_max_policy: CutoffPolicy::Auto,
            n_max: None,
            n_max_margin: 10,
            tail_target: 1e-10,
            tail_bound: 1e-8,
            krylov_tol: 1e-10,
            max_states: 2_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnosticsSection {
    pub enabled: bool,
    pub epsilon: f64,
    /// Exponents of the collapsing norms.
    pub s_list: Vec<f64>,
}

impl Default for DiagnosticsSection {
    fn default() -> Self {
        Self {
            enabled: false,
            epsilon: hfbflow::diagnostics::DEFAULT_EPSILON,
            s_list: vec![0.5],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub directory: PathBuf,
    pub seed: u64,
    /// Store every frame for later `diagnose` runs.
    pub write_trajectory: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            directory: PathBuf::from("out"),
            seed: 0,
            write_trajectory: true,
        }
    }
}

fn invalid(msg: String) -> CliError {
    CliError::Config(msg)
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| {
            let at = e.span().map(|s| {
                let before = &text[..s.start.min(text.len())];
                let line = before.matches('\n').count() + 1;
                let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
                format!("line {line}, column {column}: ")
            });
            invalid(format!("{}{}", at.unwrap_or_default(), e.message().trim()))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// Range checks on every numeric field.
    pub fn validate(&self) -> Result<(), CliError> {
        let g = &self.grid;
        if !(1..=3).contains(&g.d) {
            return Err(invalid(format!("grid.d = {} must be 1, 2 or 3", g.d)));
        }
        if g.n < 8 || !g.n.is_power_of_two() {
            return Err(invalid(format!("grid.n = {} must be a power of two >= 8", g.n)));
        }
        if g.n.pow(g.d as u32) > 4096 {
            return Err(invalid(format!(
                "grid has {} points; kernels are limited to 4096 points",
                g.n.pow(g.d as u32)
            )));
        }
        if !(g.length.is_finite() && g.length > 0.0) {
            return Err(invalid(format!("grid.L = {} must be positive", g.length)));
        }
        self.potential
            .spec()
            .validate()
            .map_err(|e| invalid(format!("potential: {e}")))?;

        let i = &self.initial;
        if !(i.phi_width.is_finite() && i.phi_width > 0.0) {
            return Err(invalid(format!("initial.phi_width = {} must be positive", i.phi_width)));
        }
        if !(i.phi_norm.is_finite() && i.phi_norm > 0.0) {
            return Err(invalid(format!("initial.phi_norm = {} must be positive", i.phi_norm)));
        }
        if let Some(c) = &i.phi_center {
            if c.len() != g.d || c.iter().any(|v| !v.is_finite()) {
                return Err(invalid(format!("initial.phi_center needs {} finite entries", g.d)));
            }
        }
        if !i.phi_mode.is_empty() && i.phi_mode.len() != g.d {
            return Err(invalid(format!("initial.phi_mode needs {} entries", g.d)));
        }
        if i.phi_profile == PhiProfile::PlaneWave && i.phi_mode.is_empty() {
            return Err(invalid("initial.phi_mode is required for a plane wave".into()));
        }
        if i.phi_modes == 0 || i.phi_modes > g.n.pow(g.d as u32) {
            return Err(invalid(format!("initial.phi_modes = {} out of range", i.phi_modes)));
        }
        if !(i.pair_amplitude.is_finite() && i.pair_amplitude >= 0.0) {
            return Err(invalid(format!("initial.pair_amplitude = {} must be >= 0", i.pair_amplitude)));
        }
        for (name, v) in [("pair_width", i.pair_width), ("correction_width", i.correction_width)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(format!("initial.{name} = {v} must be positive")));
            }
        }
        if !i.correction_amplitude.is_finite() {
            return Err(invalid("initial.correction_amplitude must be finite".into()));
        }

        let t = &self.time;
        if !(t.t_final.is_finite() && t.t_final >= 0.0) {
            return Err(invalid(format!("time.T = {} must be >= 0", t.t_final)));
        }
        if !(t.dt.is_finite() && t.dt > 0.0) {
            return Err(invalid(format!("time.dt = {} must be positive", t.dt)));
        }
        if t.t_final > 0.0 && t.dt > t.t_final * (1.0 + 1e-12) {
            return Err(invalid(format!("time.dt = {} exceeds time.T = {}", t.dt, t.t_final)));
        }
        if t.output_cadence == 0 {
            return Err(invalid("time.output_cadence must be >= 1".into()));
        }

        let o = &self.oracle;
        if o.modes == 0 || o.modes > g.n.pow(g.d as u32) {
            return Err(invalid(format!("oracle.modes = {} out of range", o.modes)));
        }
        if o.n_max_policy == CutoffPolicy::Fixed && o.n_max.is_none() {
            return Err(invalid("oracle.n_max is required with the fixed policy".into()));
        }
        for (name, v) in [
            ("tail_target", o.tail_target),
            ("tail_bound", o.tail_bound),
            ("krylov_tol", o.krylov_tol),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(invalid(format!("oracle.{name} = {v} must lie in (0, 1)")));
            }
        }
        if o.max_states == 0 {
            return Err(invalid("oracle.max_states must be positive".into()));
        }
        if o.enabled && self.initial.k_mode == PairMode::PairCorrected {
            return Err(invalid(
                "the oracle needs a pair kernel; pair_corrected data has none".into(),
            ));
        }

        let dg = &self.diagnostics;
        if !(dg.epsilon.is_finite() && dg.epsilon > 0.0 && dg.epsilon <= 1.0) {
            return Err(invalid(format!("diagnostics.epsilon = {} must lie in (0, 1]", dg.epsilon)));
        }
        if let Some(s) = dg.s_list.iter().find(|s| !(-2.0..=2.0).contains(*s)) {
            return Err(invalid(format!("diagnostics.s_list entry {s} not in [-2, 2]")));
        }
        Ok(())
    }

    /// Applies one `name=value` sweep assignment.
    pub fn with_axis_value(&self, axis: SweepAxis, value: f64) -> Result<Self, CliError> {
        let mut c = self.clone();
        match axis {
            SweepAxis::N => {
                if value < 1.0 || value.fract() != 0.0 || value > u32::MAX as f64 {
                    return Err(invalid(format!("N = {value} must be a positive integer")));
                }
                c.potential.particles = value as u32;
            }
            SweepAxis::Beta => c.potential.beta = value,
            SweepAxis::Dt => c.time.dt = value,
            SweepAxis::Grid => {
                if value < 1.0 || value.fract() != 0.0 {
                    return Err(invalid(format!("n = {value} must be a positive integer")));
                }
                c.grid.n = value as usize;
            }
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepAxis {
    #[serde(rename = "N")]
    N,
    #[serde(rename = "beta")]
    Beta,
    #[serde(rename = "dt")]
    Dt,
    #[serde(rename = "n")]
    Grid,
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::N => "N",
            SweepAxis::Beta => "beta",
            SweepAxis::Dt => "dt",
            SweepAxis::Grid => "n",
        }
    }
}

/// Parses `NAME=v1,v2,...`.
pub fn parse_axis(spec: &str) -> Result<(SweepAxis, Vec<f64>), CliError> {
    let (name, values) = spec
        .split_once('=')
        .ok_or_else(|| invalid(format!("axis `{spec}` must look like NAME=v1,v2")))?;
    let axis = match name.trim() {
        "N" => SweepAxis::N,
        "beta" => SweepAxis::Beta,
        "dt" => SweepAxis::Dt,
        "n" => SweepAxis::Grid,
        other => return Err(invalid(format!("unknown sweep axis `{other}` (N, beta, dt, n)"))),
    };
    let values = values
        .split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|e| invalid(format!("axis value `{v}`: {e}")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if values.is_empty() {
        return Err(invalid("sweep axis has no values".into()));
    }
    Ok((axis, values))
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const SAMPLE: &str = r#"
[grid]
d = 1
n = 32
L = 6.283185307179586

[potential]
profile = "gaussian"
amplitude = 1.0
sigma = 0.5
beta = 0.5
N = 16

[initial]
phi_profile = "gaussian"
phi_width = 0.7
k_mode = "gaussian_pair"
pair_amplitude = 0.1

[time]
T = 0.01
dt = 0.001
scheme = "strang"
output_cadence = 5

[diagnostics]
enabled = true
s_list = [0.5, 1.0]

[output]
directory = "runs/sample"
seed = 7
"#;

    #[test]
    fn sample_parses_and_roundtrips() {
        let c = RunConfig::from_toml(SAMPLE).unwrap();
        assert_eq!(c.grid.n, 32);
        assert_eq!(c.potential.particles, 16);
        assert_eq!(c.time.scheme, Scheme::Strang);
        assert_eq!(c.initial.k_mode, PairMode::GaussianPair);
        assert_eq!(c.output.seed, 7);
        assert!(!c.oracle.enabled);
        let back = RunConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let bad = SAMPLE.replace("sigma = 0.5", "sigma = 0.5\nsigmaa = 0.5");
        let err = RunConfig::from_toml(&bad).unwrap_err();
        assert!(err.to_string().contains("sigmaa"), "{err}");
        let bad = SAMPLE.replace("[output]", "[outptu]");
        assert!(RunConfig::from_toml(&bad).is_err());
    }

    #[test]
    fn ranges_are_checked() {
        for (from, to) in [
            ("n = 32", "n = 30"),
            ("dt = 0.001", "dt = -1.0"),
            ("beta = 0.5", "beta = 1.5"),
            ("N = 16", "N = 0"),
            ("output_cadence = 5", "output_cadence = 0"),
            ("s_list = [0.5, 1.0]", "s_list = [3.0]"),
            ("T = 0.01", "T = 0.0001"),
        ] {
            let bad = SAMPLE.replace(from, to);
            assert!(RunConfig::from_toml(&bad).is_err(), "{to} accepted");
        }
    }

    #[test]
    fn axes_parse_and_apply() {
        let (axis, values) = parse_axis("N=2,4, 8").unwrap();
        assert_eq!(axis, SweepAxis::N);
        assert_eq!(values, vec![2.0, 4.0, 8.0]);
        assert!(parse_axis("gamma=1").is_err());
        assert!(parse_axis("N").is_err());
        assert!(parse_axis("dt=a").is_err());
        let c = RunConfig::from_toml(SAMPLE).unwrap();
        assert_eq!(c.with_axis_value(SweepAxis::N, 8.0).unwrap().potential.particles, 8);
        assert!(c.with_axis_value(SweepAxis::N, 2.5).is_err());
        assert_eq!(c.with_axis_value(SweepAxis::Grid, 16.0).unwrap().grid.n, 16);
    }
}
