//! Experiment configuration: one TOML file fully determines a run.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::carleman::WeightConfig;
use crate::coefficients::{read_columns, CoefficientSet, PerturbationMask};
use crate::error::{Error, Result};
use crate::geometry::{build_grid, Domain, SpatialGrid};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub domain: DomainSpec,
    pub grid: GridSpec,
    #[serde(default)]
    pub baseline: BaselineSpec,
    #[serde(default)]
    pub weights: WeightSpec,
    #[serde(default)]
    pub probes: ProbeSpec,
    #[serde(default)]
    pub study: StudySpec,
    #[serde(default)]
    pub forward: ForwardSpec,
    #[serde(default)]
    pub carleman: ScanSpec,
    #[serde(default)]
    pub reconstruct: ReconstructSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub t_final: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub nodes: Vec<usize>,
    pub dt: f64,
}

/// Each scalar field is affine, `c0 + c1 x + c2 y`; trailing coefficients
/// may be omitted. `a` holds one constant per axis. `file` replaces all of
/// them with a coefficient column file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselineSpec {
    pub bound: f64,
    pub a: Vec<f64>,
    pub p: Vec<f64>,
    pub qplus: Vec<f64>,
    pub qminus: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
}

impl Default for BaselineSpec {
    fn default() -> Self {
        Self {
            bound: 2.0,
            a: Vec::new(),
            p: Vec::new(),
            qplus: Vec::new(),
            qminus: Vec::new(),
            file: None,
        }
    }
}

fn affine(c: &[f64], x: &[f64]) -> f64 {
    c.first().copied().unwrap_or(0.0) + c.iter().skip(1).zip(x).map(|(a, b)| a * b).sum::<f64>()
}

impl BaselineSpec {
    pub fn p_at(&self, x: &[f64]) -> f64 {
        affine(&self.p, x)
    }

    pub fn qplus_at(&self, x: &[f64]) -> f64 {
        affine(&self.qplus, x)
    }

    pub fn qminus_at(&self, x: &[f64]) -> f64 {
        affine(&self.qminus, x)
    }

    pub fn a_const(&self, k: usize) -> f64 {
        self.a.get(k).copied().unwrap_or(0.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WeightSpec {
    /// Defaults to `lo - (hi - lo) / 2` on every axis.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    pub r: f64,
    pub lambda: f64,
}

impl Default for WeightSpec {
    fn default() -> Self {
        Self { x0: None, r: 1.1, lambda: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeSpec {
    pub alpha: f64,
    pub order: usize,
}

impl Default for ProbeSpec {
    fn default() -> Self {
        Self { alpha: 1.0, order: 2 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskSpec {
    All,
    P,
    A,
}

impl From<MaskSpec> for PerturbationMask {
    fn from(m: MaskSpec) -> Self {
        match m {
            MaskSpec::All => PerturbationMask::ALL,
            MaskSpec::P => PerturbationMask::P_ONLY,
            MaskSpec::A => PerturbationMask::A_ONLY,
        }
    }
}

/// Amplitudes are fractions of the baseline bound `M`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StudySpec {
    pub amplitudes: Vec<f64>,
    pub seeds: Vec<u64>,
    pub mask: MaskSpec,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weighted_s: Option<f64>,
}

impl Default for StudySpec {
    fn default() -> Self {
        Self {
            amplitudes: vec![0.1, 0.05, 0.025],
            seeds: (0..20).collect(),
            mask: MaskSpec::All,
            weighted_s: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitialState {
    /// `(Π sin(π ξ_k), 0)` in unit coordinates.
    Eigenmode,
    /// One state of the probe suite, see `forward.probe`.
    Probe,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForwardSpec {
    pub initial: InitialState,
    pub probe: usize,
    pub export_every: usize,
    pub manufactured: bool,
}

impl Default for ForwardSpec {
    fn default() -> Self {
        Self {
            initial: InitialState::Eigenmode,
            probe: 0,
            export_every: 10,
            manufactured: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanSpec {
    pub family_size: usize,
    pub seed: u64,
    pub s: Vec<f64>,
    pub time_cells: usize,
}

impl Default for ScanSpec {
    fn default() -> Self {
        Self {
            family_size: 20,
            seed: 7,
            s: vec![2.0, 4.0, 8.0, 16.0, 32.0],
            time_cells: 201,
        }
    }
}

/// `amplitude` is a fraction of `M`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReconstructSpec {
    pub amplitude: f64,
    pub seed: u64,
    pub mask: MaskSpec,
    pub identical: bool,
    pub cross_tol: f64,
}

impl Default for ReconstructSpec {
    fn default() -> Self {
        Self {
            amplitude: 0.05,
            seed: 0,
            mask: MaskSpec::All,
            identical: false,
            cross_tol: 1e-3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSpec {
    pub dir: PathBuf,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self { dir: PathBuf::from("output") }
    }
}

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Line of `key` inside `[section]`, if the file sets it explicitly.
fn line_of(text: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(rest) = line.strip_prefix('[') {
            current = rest.trim_end_matches(']').trim().to_string();
            continue;
        }
        if current == section {
            if let Some((k, _)) = line.split_once('=') {
                if k.trim() == key {
                    return Some(i + 1);
                }
            }
        }
    }
    None
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Parse {
            line: e.span().map(|s| line_of_offset(text, s.start)).unwrap_or(0),
            message: e.message().to_string(),
        })?;
        cfg.validate_located(Some(text))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_toml(&text)?;
        // relative coefficient files are resolved against the config file
        if let (Some(f), Some(dir)) = (&cfg.baseline.file, path.parent()) {
            if f.is_relative() {
                cfg.baseline.file = Some(dir.join(f));
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_located(None)
    }

    fn validate_located(&self, text: Option<&str>) -> Result<()> {
        let fail = |section: &str, key: &str, msg: String| -> Error {
            match text.and_then(|t| line_of(t, section, key)) {
                Some(line) => Error::Parse {
                    line,
                    message: format!("{section}.{key}: {msg}"),
                },
                None => Error::Config(format!("{section}.{key}: {msg}")),
            }
        };
        let d = &self.domain;
        let dim = d.lo.len();
        if !(1..=2).contains(&dim) || d.hi.len() != dim {
            return Err(fail("domain", "lo", format!("need 1 or 2 matching bounds, got {} and {}", d.lo.len(), d.hi.len())));
        }
        if d.lo.iter().zip(&d.hi).any(|(a, b)| !(a < b)) {
            return Err(fail("domain", "hi", "every upper bound must exceed the lower bound".into()));
        }
        if !(d.t_final > 0.0 && d.t_final.is_finite()) {
            return Err(fail("domain", "t_final", format!("must be positive, got {}", d.t_final)));
        }
        let g = &self.grid;
        if g.nodes.len() != dim {
            return Err(fail("grid", "nodes", format!("need {dim} entries, got {}", g.nodes.len())));
        }
        if let Some(n) = g.nodes.iter().find(|&&n| n < 3) {
            return Err(fail("grid", "nodes", format!("need at least 3 nodes per axis, got {n}")));
        }
        if !(g.dt > 0.0 && g.dt.is_finite()) {
            return Err(fail("grid", "dt", format!("must be positive, got {}", g.dt)));
        }
        let steps = d.t_final / g.dt;
        if steps.round() < 2.0 || (steps - steps.round()).abs() > 1e-9 * steps {
            return Err(fail("grid", "dt", format!("{} does not divide t_final = {} into at least two steps", g.dt, d.t_final)));
        }
        let b = &self.baseline;
        if !(b.bound > 0.0) {
            return Err(fail("baseline", "bound", format!("must be positive, got {}", b.bound)));
        }
        if b.a.len() > dim {
            return Err(fail("baseline", "a", format!("at most {dim} entries, got {}", b.a.len())));
        }
        for (key, c) in [("p", &b.p), ("qplus", &b.qplus), ("qminus", &b.qminus)] {
            if c.len() > dim + 1 {
                return Err(fail("baseline", key, format!("at most {} affine coefficients, got {}", dim + 1, c.len())));
            }
        }
        let w = &self.weights;
        if let Some(x0) = &w.x0 {
            if x0.len() != dim {
                return Err(fail("weights", "x0", format!("need {dim} entries, got {}", x0.len())));
            }
            let inside = x0.iter().zip(d.lo.iter().zip(&d.hi)).all(|(x, (a, b))| a <= x && x <= b);
            if inside {
                return Err(fail("weights", "x0", format!("{x0:?} lies in the closed domain")));
            }
        }
        if !(w.r > 1.0) {
            return Err(fail("weights", "r", format!("must exceed 1, got {}", w.r)));
        }
        if !(w.lambda > 0.0) {
            return Err(fail("weights", "lambda", format!("must be positive, got {}", w.lambda)));
        }
        if !(self.probes.alpha > 0.0 && self.probes.alpha.is_finite()) {
            return Err(fail("probes", "alpha", format!("must be positive, got {}", self.probes.alpha)));
        }
        let s = &self.study;
        if let Some(a) = s.amplitudes.iter().find(|a| !(**a >= 0.0 && a.is_finite())) {
            return Err(fail("study", "amplitudes", format!("amplitudes must be nonnegative, got {a}")));
        }
        if s.amplitudes.is_empty() || s.seeds.is_empty() {
            return Err(fail("study", if s.seeds.is_empty() { "seeds" } else { "amplitudes" }, "must not be empty".into()));
        }
        if let Some(ws) = s.weighted_s {
            if !(ws > 0.0) {
                return Err(fail("study", "weighted_s", format!("must be positive, got {ws}")));
            }
        }
        let f = &self.forward;
        if f.export_every == 0 {
            return Err(fail("forward", "export_every", "must be at least 1".into()));
        }
        if f.probe >= dim + 2 {
            return Err(fail("forward", "probe", format!("probe index must be below {}, got {}", dim + 2, f.probe)));
        }
        if f.manufactured && (dim != 1 || b.file.is_some()) {
            return Err(fail("forward", "manufactured", "needs a 1D domain and an affine baseline".into()));
        }
        let c = &self.carleman;
        if let Some(v) = c.s.iter().find(|v| !(**v > 0.0)) {
            return Err(fail("carleman", "s", format!("values must be positive, got {v}")));
        }
        if c.time_cells < 3 || c.time_cells % 2 == 0 {
            return Err(fail("carleman", "time_cells", format!("must be odd and at least 3, got {}", c.time_cells)));
        }
        let r = &self.reconstruct;
        if !(r.amplitude >= 0.0 && r.amplitude.is_finite()) {
            return Err(fail("reconstruct", "amplitude", format!("must be nonnegative, got {}", r.amplitude)));
        }
        if !(r.cross_tol > 0.0) {
            return Err(fail("reconstruct", "cross_tol", format!("must be positive, got {}", r.cross_tol)));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.domain.lo.len()
    }

    pub fn steps(&self) -> usize {
        (self.domain.t_final / self.grid.dt).round() as usize
    }

    pub fn build_grid(&self) -> Result<SpatialGrid> {
        let d = Domain::new(self.domain.lo.clone(), self.domain.hi.clone(), self.domain.t_final)?;
        build_grid(&d, &self.grid.nodes)
    }

    pub fn x0(&self) -> Vec<f64> {
        self.weights.x0.clone().unwrap_or_else(|| {
            self.domain.lo.iter().zip(&self.domain.hi).map(|(a, b)| a - 0.5 * (b - a)).collect()
        })
    }

    pub fn weight_config(&self) -> WeightConfig {
        WeightConfig {
            x0: self.x0(),
            r: self.weights.r,
            lambda: self.weights.lambda,
            t_final: self.domain.t_final,
        }
    }

    /// Baseline coefficients on `grid`; sup-norms are checked against `M`.
    pub fn baseline_set(&self, grid: &SpatialGrid) -> Result<CoefficientSet> {
        let b = &self.baseline;
        let set = match &b.file {
            Some(path) => read_columns(grid, b.bound, BufReader::new(File::open(path)?))?,
            None => CoefficientSet {
                a: (0..grid.dim()).map(|k| vec![b.a_const(k); grid.len()]).collect(),
                p: grid.sample(|x| b.p_at(x)),
                qplus: grid.sample(|x| b.qplus_at(x)),
                qminus: grid.sample(|x| b.qminus_at(x)),
                bound: b.bound,
            },
        };
        set.check_shape(grid)?;
        let sup = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        for (field, value) in [("A", set.sup_a()), ("p", sup(&set.p)), ("q+", sup(&set.qplus)), ("q-", sup(&set.qminus))] {
            if value > b.bound {
                return Err(Error::BoundExceeded { field, value, bound: b.bound });
            }
        }
        Ok(set)
    }
}
