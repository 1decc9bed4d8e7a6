//! TOML scenario files: the form, the data measure, and per-command settings.
//!
//! ```toml
//! name = "p3-dirac"
//! k_schedule = [0.25, 0.5, 0.75]
//!
//! [form]
//! kind = "local"
//! dim = 1
//! n_per_side = 3
//! upper = 4.0
//!
//! [[measure.atoms]]
//! node = 1
//! mass = 1.0
//! tag = "concentrated"
//! ```
//!
//! Unknown keys are rejected. Validation reports every violation at once.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::continuum::{LevelProfile, QuadratureConfig, RadialFn};
use crate::error::{Error, Result};
use crate::lattice::{
    build_fractional_form, build_local_form, Conductance, DiscreteForm, FractionalInterval, LevelFunction, LocalGrid, Point,
};
use crate::measures::{SignedMeasure, Tag};
use crate::renorm::{RefinementSetting, SemilinearConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Solve,
    Verify,
    Structure,
    Refine,
    Reconstruct,
    Occupation,
    Mc,
    Semilinear,
    Aab,
    Capacity,
}

impl Command {
    pub const ALL: [Command; 10] = [
        Command::Solve,
        Command::Verify,
        Command::Structure,
        Command::Refine,
        Command::Reconstruct,
        Command::Occupation,
        Command::Mc,
        Command::Semilinear,
        Command::Aab,
        Command::Capacity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Verify => "verify",
            Command::Structure => "structure",
            Command::Refine => "refine",
            Command::Reconstruct => "reconstruct",
            Command::Occupation => "occupation",
            Command::Mc => "mc",
            Command::Semilinear => "semilinear",
            Command::Aab => "aab",
            Command::Capacity => "capacity",
        }
    }
}

fn zero() -> f64 {
    0.0
}
fn one() -> f64 {
    1.0
}
fn half() -> f64 {
    0.5
}
fn tenth() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FormSpec {
    Local {
        #[serde(default = "default_dim")]
        dim: usize,
        n_per_side: usize,
        #[serde(default = "zero")]
        lower: f64,
        #[serde(default = "one")]
        upper: f64,
        #[serde(default = "one")]
        conductance: f64,
    },
    Fractional {
        n: usize,
        alpha: f64,
        #[serde(default = "one")]
        c: f64,
        #[serde(default = "zero")]
        lower: f64,
        #[serde(default = "one")]
        upper: f64,
    },
}

fn default_dim() -> usize {
    1
}

impl FormSpec {
    pub fn node_count(&self) -> usize {
        match *self {
            FormSpec::Local { dim, n_per_side, .. } => n_per_side.saturating_pow(dim.min(2) as u32),
            FormSpec::Fractional { n, .. } => n,
        }
    }

    pub fn dim(&self) -> usize {
        match *self {
            FormSpec::Local { dim, .. } => dim,
            FormSpec::Fractional { .. } => 1,
        }
    }

    pub fn build(&self) -> Result<DiscreteForm> {
        match *self {
            FormSpec::Local { dim, n_per_side, lower, upper, conductance } => {
                build_local_form(&LocalGrid { dim, n_per_side, lower, upper, conductance: Conductance::Uniform(conductance) })
            }
            FormSpec::Fractional { n, alpha, c, lower, upper } => build_fractional_form(&FractionalInterval { lower, upper, n, alpha, c }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomSpec {
    #[serde(default)]
    pub node: Option<usize>,
    /// Snapped to the nearest node.
    #[serde(default)]
    pub position: Option<Vec<f64>>,
    pub mass: f64,
    #[serde(default)]
    pub tag: Option<Tag>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityRef {
    pub name: String,
    #[serde(default = "one")]
    pub scale: f64,
}

/// Named density; its node masses are `density(x) m(x)`, tagged diffuse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DensitySpec {
    Uniform {
        #[serde(default = "one")]
        value: f64,
    },
    /// `height * max(0, 1 - (|x - center| / radius)^2)`
    Bump {
        center: Vec<f64>,
        radius: f64,
        #[serde(default = "one")]
        height: f64,
    },
    /// `height * exp(-|x - center|^2 / width^2)`
    Gaussian {
        center: Vec<f64>,
        width: f64,
        #[serde(default = "one")]
        height: f64,
    },
}

impl DensitySpec {
    pub fn eval(&self, p: &Point) -> f64 {
        let dist2 = |c: &[f64]| p.iter().zip(c.iter().chain(std::iter::repeat(&0.0))).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        match self {
            DensitySpec::Uniform { value } => *value,
            DensitySpec::Bump { center, radius, height } => height * (1.0 - dist2(center) / (radius * radius)).max(0.0),
            DensitySpec::Gaussian { center, width, height } => height * (-dist2(center) / (width * width)).exp(),
        }
    }

    fn problems(&self, name: &str, dim: usize, out: &mut Vec<String>) {
        match self {
            DensitySpec::Uniform { .. } => {}
            DensitySpec::Bump { center, radius: s, .. } | DensitySpec::Gaussian { center, width: s, .. } => {
                if center.len() != dim {
                    out.push(format!("densities.{name}.center: expected {dim} coordinates, got {}", center.len()));
                }
                if !(*s > 0.0) {
                    out.push(format!("densities.{name}: width/radius must be positive"));
                }
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureSpec {
    #[serde(default)]
    pub atoms: Vec<AtomSpec>,
    #[serde(default)]
    pub densities: Vec<DensityRef>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DictionarySpec {
    #[serde(default = "default_per_side")]
    pub per_side: usize,
}

fn default_per_side() -> usize {
    4
}

impl Default for DictionarySpec {
    fn default() -> Self {
        Self { per_side: default_per_side() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub solver: f64,
    pub identity: f64,
    pub structure: f64,
    pub quadrature: f64,
    pub semilinear: f64,
    pub mc_sigmas: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { solver: 1e-10, identity: 1e-9, structure: 1e-10, quadrature: 1e-6, semilinear: 1e-8, mc_sigmas: 3.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RefinementSection {
    pub setting: RefinementSetting,
    pub resolutions: Vec<usize>,
    #[serde(default = "half")]
    pub theta: f64,
    #[serde(default = "tenth")]
    pub slack: f64,
    /// Largest acceptable distance to the atoms on the finest mesh.
    #[serde(default = "tenth")]
    pub bl_threshold: f64,
    /// Relative tolerance on `|nu|(E)` against `|mu_c|(E)` on the finest mesh.
    #[serde(default = "tenth")]
    pub mass_tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McSection {
    #[serde(default = "default_paths")]
    pub n_paths: usize,
    /// Start node; defaults to the node with the largest potential.
    #[serde(default)]
    pub start: Option<usize>,
    /// Stopping level; defaults to the first scheduled `k`.
    #[serde(default)]
    pub k: Option<f64>,
    /// Extra seeds `seed + 1 ..= seed + battery` run as a pass-rate battery.
    #[serde(default)]
    pub battery: usize,
    #[serde(default = "default_pass_rate")]
    pub min_pass_rate: f64,
    #[serde(default = "default_max_time")]
    pub max_time: f64,
}

fn default_paths() -> usize {
    10_000
}
fn default_pass_rate() -> f64 {
    0.95
}
fn default_max_time() -> f64 {
    1e6
}

impl Default for McSection {
    fn default() -> Self {
        Self { n_paths: default_paths(), start: None, k: None, battery: 0, min_pass_rate: default_pass_rate(), max_time: default_max_time() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RadialSpec {
    Constant { value: f64 },
    Gaussian { width: f64 },
    Cutoff { r0: f64, r1: f64 },
}

impl RadialSpec {
    pub fn build(&self) -> RadialFn {
        match *self {
            RadialSpec::Constant { value } => RadialFn::constant(value),
            RadialSpec::Gaussian { width } => RadialFn::gaussian(width),
            RadialSpec::Cutoff { r0, r1 } => RadialFn::annular_cutoff(r0, r1),
        }
    }
}

impl Default for RadialSpec {
    fn default() -> Self {
        RadialSpec::Constant { value: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileKind {
    Indicator,
    Bump,
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OccupationSpec {
    pub profile: ProfileKind,
    pub lower: f64,
    pub upper: f64,
    #[serde(default)]
    pub eta: RadialSpec,
}

impl OccupationSpec {
    pub fn profile(&self) -> LevelProfile {
        match self.profile {
            ProfileKind::Indicator => LevelProfile::indicator(self.lower, self.upper),
            ProfileKind::Bump => LevelProfile::bump(self.lower, self.upper),
            ProfileKind::Zero => LevelProfile::zero(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RieszSpec {
    /// Node indices where lattice and quadrature are compared.
    pub nodes: Vec<usize>,
    #[serde(default = "half")]
    pub k_fraction: f64,
    #[serde(default = "default_relative")]
    pub relative_tolerance: f64,
}

fn default_relative() -> f64 {
    0.02
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContinuumSection {
    #[serde(default = "default_pairs")]
    pub pairs: Vec<[f64; 2]>,
    #[serde(default)]
    pub reconstruction_eta: RadialSpec,
    #[serde(default = "default_line_levels")]
    pub line_levels: Vec<f64>,
    #[serde(default = "default_occupation")]
    pub occupation: Vec<OccupationSpec>,
    #[serde(default)]
    pub riesz: Option<RieszSpec>,
}

fn default_pairs() -> Vec<[f64; 2]> {
    vec![[1.0, 2.0], [5.0, 5.1]]
}
fn default_line_levels() -> Vec<f64> {
    vec![0.5, 1.0, 5.0]
}
fn default_occupation() -> Vec<OccupationSpec> {
    vec![OccupationSpec { profile: ProfileKind::Indicator, lower: 1.0, upper: 2.0, eta: RadialSpec::default() }]
}

impl Default for ContinuumSection {
    fn default() -> Self {
        Self {
            pairs: default_pairs(),
            reconstruction_eta: RadialSpec::default(),
            line_levels: default_line_levels(),
            occupation: default_occupation(),
            riesz: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NonlinearityKind {
    Zero,
    /// `-c u`
    Linear,
    /// `-c u^3`
    Cubic,
    /// `-c tanh(u)`
    Tanh,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SemilinearSection {
    #[serde(default = "default_nonlinearity")]
    pub nonlinearity: NonlinearityKind,
    #[serde(default = "one")]
    pub coefficient: f64,
    /// Random ordered data pairs `mu_1 <= mu_2` checked for comparison.
    #[serde(default)]
    pub comparison_pairs: usize,
    #[serde(default = "half")]
    pub damping: f64,
    #[serde(default = "default_semilinear_iterations")]
    pub max_iterations: usize,
}

fn default_nonlinearity() -> NonlinearityKind {
    NonlinearityKind::Cubic
}
fn default_semilinear_iterations() -> usize {
    20_000
}

impl Default for SemilinearSection {
    fn default() -> Self {
        Self {
            nonlinearity: default_nonlinearity(),
            coefficient: 1.0,
            comparison_pairs: 0,
            damping: 0.5,
            max_iterations: default_semilinear_iterations(),
        }
    }
}

impl SemilinearSection {
    pub fn nonlinearity(&self) -> impl Fn(usize, f64) -> f64 + Sync {
        let c = self.coefficient;
        let kind = self.nonlinearity;
        move |_, u| match kind {
            NonlinearityKind::Zero => 0.0,
            NonlinearityKind::Linear => -c * u,
            NonlinearityKind::Cubic => -c * u * u * u,
            NonlinearityKind::Tanh => -c * u.tanh(),
        }
    }

    pub fn config(&self) -> SemilinearConfig {
        SemilinearConfig { damping: self.damping, max_iterations: self.max_iterations, ..SemilinearConfig::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LevelKind {
    Indicator,
    Hat,
    Bump,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelSpec {
    pub kind: LevelKind,
    pub bound: f64,
}

impl LevelSpec {
    pub fn build(&self) -> LevelFunction {
        match self.kind {
            LevelKind::Indicator => LevelFunction::indicator(self.bound),
            LevelKind::Hat => LevelFunction::hat(self.bound),
            LevelKind::Bump => LevelFunction::bump(self.bound),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AabSection {
    /// Defaults to an indicator, a hat and a bump with bound `1.25 |u|_inf`.
    #[serde(default)]
    pub h: Vec<LevelSpec>,
    /// Number of dictionary members used as test functions.
    #[serde(default = "default_eta_count")]
    pub eta_count: usize,
}

fn default_eta_count() -> usize {
    5
}

impl Default for AabSection {
    fn default() -> Self {
        Self { h: Vec::new(), eta_count: default_eta_count() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObstacleSpec {
    pub h: Vec<f64>,
    #[serde(default = "default_penalties")]
    pub penalties: Vec<f64>,
    /// Running-cost weight; defaults to 1 on every node.
    #[serde(default)]
    pub g: Option<Vec<f64>>,
    /// Largest acceptable `|h^1_n - h|_inf` at the last penalty.
    #[serde(default = "default_limit_tolerance")]
    pub limit_tolerance: f64,
}

fn default_penalties() -> Vec<f64> {
    vec![0.0, 1.0, 10.0, 1e3, 1e9]
}
fn default_limit_tolerance() -> f64 {
    1e-6
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapacitySection {
    /// Defaults to the nodes carrying concentrated atoms.
    #[serde(default)]
    pub set: Vec<usize>,
    #[serde(default)]
    pub obstacle: Option<ObstacleSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub commands: Vec<Command>,
    pub form: FormSpec,
    #[serde(default)]
    pub measure: MeasureSpec,
    #[serde(default)]
    pub densities: BTreeMap<String, DensitySpec>,
    /// Defaults to `{1/4, 1/2, 3/4} * |u|_inf`.
    #[serde(default)]
    pub k_schedule: Vec<f64>,
    #[serde(default)]
    pub dictionary: DictionarySpec,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub refinement: Option<RefinementSection>,
    #[serde(default)]
    pub mc: McSection,
    #[serde(default)]
    pub continuum: ContinuumSection,
    #[serde(default)]
    pub semilinear: SemilinearSection,
    #[serde(default)]
    pub aab: AabSection,
    #[serde(default)]
    pub capacity: CapacitySection,
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self> {
        let s: Scenario = toml::from_str(text).map_err(|e| Error::ScenarioParse(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::ScenarioParse(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::ScenarioInvalid(v))
        }
    }

    /// Every rule the scenario breaks.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let n = self.form.node_count();
        let dim = self.form.dim();
        match self.form {
            FormSpec::Local { dim, n_per_side, lower, upper, conductance } => {
                if !(1..=2).contains(&dim) {
                    out.push(format!("form.dim: must be 1 or 2, got {dim}"));
                }
                if n_per_side == 0 {
                    out.push("form.n_per_side: must be at least 1".into());
                }
                if !(upper > lower) {
                    out.push("form: upper must exceed lower".into());
                }
                if !(conductance > 0.0) {
                    out.push("form.conductance: must be positive".into());
                }
            }
            FormSpec::Fractional { n, alpha, c, lower, upper } => {
                if n < 2 {
                    out.push("form.n: must be at least 2".into());
                }
                if !(alpha > 0.0 && alpha < 1.0) {
                    out.push(format!("form.alpha: must lie in (0,1), got {alpha}"));
                }
                if !(c > 0.0) {
                    out.push("form.c: must be positive".into());
                }
                if !(upper > lower) {
                    out.push("form: upper must exceed lower".into());
                }
            }
        }
        for (i, a) in self.measure.atoms.iter().enumerate() {
            if a.tag.is_none() && a.mass != 0.0 {
                out.push(format!("measure.atoms[{i}]: untagged atom"));
            }
            match (&a.node, &a.position) {
                (Some(_), Some(_)) | (None, None) => out.push(format!("measure.atoms[{i}]: give exactly one of node or position")),
                (Some(x), None) if *x >= n => out.push(format!("measure.atoms[{i}].node: {x} out of range (n = {n})")),
                (None, Some(p)) if p.len() != dim => {
                    out.push(format!("measure.atoms[{i}].position: expected {dim} coordinates, got {}", p.len()))
                }
                _ => {}
            }
        }
        for (i, d) in self.measure.densities.iter().enumerate() {
            if !self.densities.contains_key(&d.name) {
                out.push(format!("measure.densities[{i}]: unknown density \"{}\"", d.name));
            }
        }
        for (name, d) in &self.densities {
            d.problems(name, dim, &mut out);
        }
        if self.k_schedule.iter().any(|k| !(*k > 0.0)) {
            out.push("k_schedule: levels must be positive".into());
        }
        if self.k_schedule.windows(2).any(|w| !(w[1] > w[0])) {
            out.push("k_schedule: must be strictly increasing".into());
        }
        if self.dictionary.per_side == 0 {
            out.push("dictionary.per_side: must be at least 1".into());
        }
        let t = &self.tolerances;
        for (name, v) in [
            ("solver", t.solver),
            ("identity", t.identity),
            ("structure", t.structure),
            ("quadrature", t.quadrature),
            ("semilinear", t.semilinear),
            ("mc_sigmas", t.mc_sigmas),
        ] {
            if !(v > 0.0) {
                out.push(format!("tolerances.{name}: must be positive"));
            }
        }
        if let Some(r) = &self.refinement {
            if r.resolutions.is_empty() {
                out.push("refinement.resolutions: must not be empty".into());
            }
            if r.resolutions.windows(2).any(|w| w[1] <= w[0]) {
                out.push("refinement.resolutions: must be strictly increasing".into());
            }
            if !(r.theta > 0.0 && r.theta < 1.0) {
                out.push("refinement.theta: must lie in (0,1)".into());
            }
            if self.measure.atoms.iter().any(|a| a.position.is_none()) {
                out.push("refinement: atoms must be given by position".into());
            }
        }
        if self.mc.n_paths == 0 {
            out.push("mc.n_paths: must be at least 1".into());
        }
        if matches!(self.mc.start, Some(x) if x >= n) {
            out.push(format!("mc.start: node out of range (n = {n})"));
        }
        if matches!(self.mc.k, Some(k) if !(k > 0.0)) {
            out.push("mc.k: must be positive".into());
        }
        for (i, [b, c]) in self.continuum.pairs.iter().enumerate() {
            if !(*b > 0.0 && c > b) {
                out.push(format!("continuum.pairs[{i}]: need 0 < b < c"));
            }
        }
        for (i, o) in self.continuum.occupation.iter().enumerate() {
            if o.profile != ProfileKind::Zero && !(o.lower > 0.0 && o.upper > o.lower && o.upper.is_finite()) {
                out.push(format!("continuum.occupation[{i}]: support must be a bounded interval in (0, inf)"));
            }
        }
        if let Some(r) = &self.continuum.riesz {
            if !matches!(self.form, FormSpec::Fractional { .. }) {
                out.push("continuum.riesz: needs a fractional form".into());
            }
            if r.nodes.iter().any(|&x| x >= n) {
                out.push("continuum.riesz.nodes: out of range".into());
            }
            if !(r.k_fraction > 0.0 && r.k_fraction < 1.0) {
                out.push("continuum.riesz.k_fraction: must lie in (0,1)".into());
            }
        }
        if !(self.semilinear.damping > 0.0 && self.semilinear.damping <= 1.0) {
            out.push("semilinear.damping: must lie in (0,1]".into());
        }
        if !(self.semilinear.coefficient >= 0.0) {
            out.push("semilinear.coefficient: must be nonnegative (f nonincreasing)".into());
        }
        if self.aab.h.iter().any(|h| !(h.bound > 0.0)) {
            out.push("aab.h: bounds must be positive".into());
        }
        if self.capacity.set.iter().any(|&x| x >= n) {
            out.push("capacity.set: node out of range".into());
        }
        if let Some(o) = &self.capacity.obstacle {
            if o.h.len() != n {
                out.push(format!("capacity.obstacle.h: expected {n} values, got {}", o.h.len()));
            }
            if matches!(&o.g, Some(g) if g.len() != n || g.iter().any(|v| !(*v > 0.0))) {
                out.push("capacity.obstacle.g: needs one positive value per node".into());
            }
            if o.penalties.iter().any(|p| !(*p >= 0.0)) || o.penalties.windows(2).any(|w| w[1] <= w[0]) {
                out.push("capacity.obstacle.penalties: must be nonnegative and strictly increasing".into());
            }
        }
        out
    }

    pub fn solver_config(&self) -> crate::green::SolverConfig {
        crate::green::SolverConfig { tolerance: self.tolerances.solver, ..Default::default() }
    }

    pub fn quadrature_config(&self) -> QuadratureConfig {
        // internal target well below the acceptance tolerance
        QuadratureConfig { tolerance: (self.tolerances.quadrature * 1e-4).max(1e-13), ..Default::default() }
    }

    /// Node masses of the data measure on `form`.
    pub fn build_measure(&self, form: &DiscreteForm) -> Result<SignedMeasure> {
        let space = form.space();
        let mut mu = SignedMeasure::zero(form.len());
        for (i, a) in self.measure.atoms.iter().enumerate() {
            let tag = a.tag.ok_or_else(|| Error::ScenarioInvalid(vec![format!("measure.atoms[{i}]: untagged atom")]))?;
            let node = match (&a.node, &a.position) {
                (Some(x), _) => *x,
                (None, Some(p)) => space.nearest(&to_point(p)).0,
                (None, None) => unreachable!("validated"),
            };
            mu.add_atom(node, a.mass, tag);
        }
        for d in &self.measure.densities {
            let spec = &self.densities[&d.name];
            for (x, p) in space.positions().iter().enumerate() {
                let mass = d.scale * spec.eval(p) * space.weights()[x];
                if mass != 0.0 {
                    mu.add_atom(x, mass, Tag::Diffuse);
                }
            }
        }
        Ok(mu)
    }

    /// Atoms by position, for refinement studies.
    pub fn positioned_atoms(&self) -> Vec<(Point, f64)> {
        self.measure.atoms.iter().filter_map(|a| a.position.as_ref().map(|p| (to_point(p), a.mass))).collect()
    }
}

fn to_point(p: &[f64]) -> Point {
    [p.first().copied().unwrap_or(0.0), p.get(1).copied().unwrap_or(0.0)]
}

#[cfg(test)]
mod tests {
    use super::*;

    const P3: &str = r#"
name = "p3"
[form]
kind = "local"
n_per_side = 3
upper = 4.0
[[measure.atoms]]
node = 1
mass = 1.0
tag = "concentrated"
"#;

    #[test]
    fn minimal_file_gets_defaults() {
        let s = Scenario::from_toml(P3).unwrap();
        assert_eq!(s.tolerances, Tolerances::default());
        assert_eq!(s.dictionary.per_side, 4);
        assert_eq!(s.mc.n_paths, 10_000);
        let form = s.form.build().unwrap();
        let mu = s.build_measure(&form).unwrap();
        assert_eq!(mu.masses(), &[0.0, 1.0, 0.0]);
        assert_eq!(mu.tags()[1], Some(Tag::Concentrated));
    }

    #[test]
    fn decreasing_schedule_names_field() {
        let err = Scenario::from_toml(&format!("k_schedule = [0.5, 0.25]\n{P3}")).unwrap_err();
        assert!(err.to_string().contains("k_schedule"), "{err}");
    }

    #[test]
    fn untagged_atom_rejected() {
        let err = Scenario::from_toml(&P3.replace("tag = \"concentrated\"", "")).unwrap_err();
        assert!(err.to_string().contains("untagged atom"), "{err}");
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = Scenario::from_toml(&P3.replace("upper = 4.0", "upper = 4.0\nspacing = 1.0")).unwrap_err();
        assert!(matches!(err, Error::ScenarioParse(_)), "{err}");
    }

    #[test]
    fn all_violations_listed() {
        let text = format!("k_schedule = [1.0, 0.5]\n{}\n[[measure.densities]]\nname = \"nope\"\n", P3.replace("node = 1", "node = 9"));
        let Err(Error::ScenarioInvalid(v)) = Scenario::from_toml(&text) else { panic!() };
        assert_eq!(v.len(), 3, "{v:?}");
    }

    #[test]
    fn densities_are_diffuse() {
        let text = r#"
name = "grid"
[form]
kind = "local"
dim = 2
n_per_side = 4
[densities.flat]
kind = "uniform"
value = 2.0
[[measure.densities]]
name = "flat"
"#;
        let s = Scenario::from_toml(text).unwrap();
        let form = s.form.build().unwrap();
        let mu = s.build_measure(&form).unwrap();
        assert!((mu.total() - 2.0 * 16.0 / 25.0).abs() < 1e-12);
        assert!(mu.tags().iter().all(|t| *t == Some(Tag::Diffuse)));
    }
}
