//! Monte Carlo surrogate of the process generated by `-M^{-1} L`: a
//! continuous-time chain jumping `x -> y` at rate `2 J(x,y) / m(x)` and killed
//! at rate `kappa(x) / m(x)`.
//!
//! Path `i` draws from ChaCha8 keyed by the seed on stream `i`, so the path
//! set does not depend on the thread count. Per-path values are summed
//! pairwise in index order.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::green::GreenOperator;
use crate::lattice::DiscreteForm;
use crate::measures::{decompose, tv_norm, SignedMeasure};
use crate::sparse::norm_inf;

pub const RNG_ALGORITHM: &str = "chacha8, key = seed, stream = path index";

/// Fewer paths than this and confidence checks are reported as insufficient.
pub const MIN_PATHS_FOR_CHECK: usize = 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Start {
    Node(usize),
    /// Probability weights over nodes.
    Distribution(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    pub n_paths: usize,
    pub seed: u64,
    pub start: Start,
    /// Paths alive past this time are cut and excluded.
    #[serde(default = "default_max_time")]
    pub max_time: f64,
    /// Width of the acceptance band in standard errors.
    #[serde(default = "default_sigmas")]
    pub sigmas: f64,
}

fn default_max_time() -> f64 {
    1e6
}

fn default_sigmas() -> f64 {
    3.0
}

impl McConfig {
    pub fn new(n_paths: usize, seed: u64, start: usize) -> Self {
        Self { n_paths, seed, start: Start::Node(start), max_time: default_max_time(), sigmas: default_sigmas() }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.n_paths == 0 {
            return Err(Error::InvalidArgument("n_paths must be at least 1".into()));
        }
        if !(self.max_time > 0.0) || !(self.sigmas > 0.0) {
            return Err(Error::InvalidArgument("max_time and sigmas must be positive".into()));
        }
        match &self.start {
            Start::Node(x) if *x >= n => Err(Error::InvalidArgument(format!("start node {x} out of range"))),
            Start::Distribution(p) => {
                check_len(n, p.len())?;
                if p.iter().any(|w| !(*w >= 0.0)) || !(p.iter().sum::<f64>() > 0.0) {
                    return Err(Error::InvalidArgument("start distribution needs nonnegative weights with positive total".into()));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum McStatus {
    /// No exact value to compare against.
    Estimate,
    Pass,
    Fail,
    InsufficientPaths,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n_effective: usize,
    /// `mean -/+ sigmas * stderr`
    pub band: [f64; 2],
    pub exact: Option<f64>,
    pub residual: Option<f64>,
    pub status: McStatus,
}

impl McEstimate {
    fn from_samples(samples: &[f64], sigmas: f64) -> Self {
        let n = samples.len();
        if n == 0 {
            return Self { mean: f64::NAN, stderr: f64::NAN, n_effective: 0, band: [f64::NAN; 2], exact: None, residual: None, status: McStatus::InsufficientPaths };
        }
        let mean = pairwise_sum(samples) / n as f64;
        let dev: Vec<f64> = samples.iter().map(|s| (s - mean) * (s - mean)).collect();
        let var = if n > 1 { pairwise_sum(&dev) / (n - 1) as f64 } else { f64::INFINITY };
        let stderr = (var / n as f64).sqrt();
        let status = if n < MIN_PATHS_FOR_CHECK { McStatus::InsufficientPaths } else { McStatus::Estimate };
        Self { mean, stderr, n_effective: n, band: [mean - sigmas * stderr, mean + sigmas * stderr], exact: None, residual: None, status }
    }

    /// Attaches an exact value and grades the estimate against the band.
    pub fn against(mut self, exact: f64, sigmas: f64) -> Self {
        let residual = (self.mean - exact).abs();
        self.exact = Some(exact);
        self.residual = Some(residual);
        if self.status != McStatus::InsufficientPaths {
            // tiny absolute slack covers deterministic functionals with zero variance
            let slack = 1e-12 * exact.abs().max(1.0);
            self.status = if residual <= sigmas * self.stderr + slack { McStatus::Pass } else { McStatus::Fail };
        }
        self
    }

    pub fn failed(&self) -> bool {
        self.status == McStatus::Fail
    }
}

/// Pairwise summation in a fixed tree order.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Path functional evaluated on every simulated path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Functional {
    /// `int_0^zeta f(X_s) ds`
    Occupation { f: Vec<f64> },
    /// `int_0^zeta eta(X_s) dA^mu_s`, where `A^mu` grows at rate `mu(z)/m(z)` at `z`.
    Additive { masses: Vec<f64>, eta: Vec<f64> },
    Lifetime,
    /// `u(X_{tau_k})` with `tau_k` the first landing in `{|u| >= k}` or death (`u = 0` there).
    StoppedValue { u: Vec<f64>, k: f64 },
    /// `A^mu_{tau_k}` for the same stopping time.
    StoppedAdditive { u: Vec<f64>, k: f64, masses: Vec<f64> },
}

impl Functional {
    fn validate(&self, n: usize) -> Result<()> {
        match self {
            Functional::Occupation { f } => check_len(n, f.len()),
            Functional::Additive { masses, eta } => check_len(n, masses.len()).and(check_len(n, eta.len())),
            Functional::Lifetime => Ok(()),
            Functional::StoppedValue { u, k } => check_len(n, u.len()).and(check_level(*k)),
            Functional::StoppedAdditive { u, k, masses } => check_len(n, u.len()).and(check_len(n, masses.len())).and(check_level(*k)),
        }
    }

    fn evaluate(&self, path: &Path, weights: &[f64]) -> f64 {
        match self {
            Functional::Occupation { f } => path.steps.iter().map(|&(x, t)| f[x] * t).sum(),
            Functional::Additive { masses, eta } => path.steps.iter().map(|&(x, t)| eta[x] * masses[x] / weights[x] * t).sum(),
            Functional::Lifetime => path.steps.iter().map(|s| s.1).sum(),
            Functional::StoppedValue { u, k } => match path.first_landing(u, *k) {
                Some(i) => u[path.steps[i].0],
                None => 0.0,
            },
            Functional::StoppedAdditive { u, k, masses } => {
                let end = path.first_landing(u, *k).unwrap_or(path.steps.len());
                path.steps[..end].iter().map(|&(x, t)| masses[x] / weights[x] * t).sum()
            }
        }
    }
}

fn check_level(k: f64) -> Result<()> {
    if k > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("stopping level must be positive, got {k}")))
    }
}

/// Visited nodes with holding times; the chain is killed after the last step
/// unless `truncated`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pub steps: Vec<(usize, f64)>,
    pub truncated: bool,
}

impl Path {
    /// Index of the first step whose node lies in `{|u| >= k}`.
    fn first_landing(&self, u: &[f64], k: f64) -> Option<usize> {
        self.steps.iter().position(|&(x, _)| u[x].abs() >= k)
    }
}

/// Jump table of the chain.
struct Chain {
    /// Per node: targets, cumulative rates (killing last), total rate.
    rows: Vec<(Vec<usize>, Vec<f64>, f64)>,
}

impl Chain {
    fn new(form: &DiscreteForm) -> Self {
        let rows = (0..form.len())
            .map(|x| {
                let m = form.weights()[x];
                let mut targets = Vec::new();
                let mut cum = Vec::new();
                let mut acc = 0.0;
                for nb in form.neighbors(x) {
                    acc += 2.0 * nb.jump / m;
                    targets.push(nb.node);
                    cum.push(acc);
                }
                acc += form.kappa()[x] / m;
                cum.push(acc);
                (targets, cum, acc)
            })
            .collect();
        Self { rows }
    }

    fn run(&self, start: usize, max_time: f64, rng: &mut ChaCha8Rng) -> Path {
        let mut steps = Vec::new();
        let mut x = start;
        let mut t = 0.0;
        loop {
            let (targets, cum, total) = &self.rows[x];
            let hold = Exp::new(*total).expect("positive rate").sample(rng);
            if t + hold > max_time {
                steps.push((x, max_time - t));
                return Path { steps, truncated: true };
            }
            t += hold;
            steps.push((x, hold));
            let r = rng.random::<f64>() * total;
            let j = cum.partition_point(|&c| c <= r);
            if j >= targets.len() {
                return Path { steps, truncated: false };
            }
            x = targets[j];
        }
    }
}

fn path_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn draw_start(start: &Start, rng: &mut ChaCha8Rng) -> usize {
    match start {
        Start::Node(x) => *x,
        Start::Distribution(p) => {
            let total: f64 = p.iter().sum();
            let r = rng.random::<f64>() * total;
            let mut acc = 0.0;
            for (i, w) in p.iter().enumerate() {
                acc += w;
                if r < acc {
                    return i;
                }
            }
            p.iter().rposition(|w| *w > 0.0).unwrap_or(0)
        }
    }
}

fn simulate_path(chain: &Chain, cfg: &McConfig, index: usize) -> Path {
    let mut rng = path_rng(cfg.seed, index);
    let x0 = draw_start(&cfg.start, &mut rng);
    chain.run(x0, cfg.max_time, &mut rng)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Simulation {
    pub estimates: Vec<McEstimate>,
    pub n_paths: usize,
    pub truncated_paths: usize,
    pub seed: u64,
    pub rng: String,
}

/// Simulates `cfg.n_paths` paths and estimates every functional on the same path set.
pub fn simulate(form: &DiscreteForm, cfg: &McConfig, functionals: &[Functional]) -> Result<Simulation> {
    cfg.validate(form.len())?;
    for f in functionals {
        f.validate(form.len())?;
    }
    let chain = Chain::new(form);
    let weights = form.weights();
    let per_path: Vec<Option<Vec<f64>>> = (0..cfg.n_paths)
        .into_par_iter()
        .map(|i| {
            let path = simulate_path(&chain, cfg, i);
            (!path.truncated).then(|| functionals.iter().map(|f| f.evaluate(&path, weights)).collect())
        })
        .collect();
    let kept: Vec<&Vec<f64>> = per_path.iter().flatten().collect();
    let estimates = (0..functionals.len())
        .map(|j| {
            let samples: Vec<f64> = kept.iter().map(|v| v[j]).collect();
            McEstimate::from_samples(&samples, cfg.sigmas)
        })
        .collect();
    Ok(Simulation { estimates, n_paths: cfg.n_paths, truncated_paths: cfg.n_paths - kept.len(), seed: cfg.seed, rng: RNG_ALGORITHM.into() })
}

/// Writes `path,step,node,holding_time` for at most 100 paths.
pub fn write_trace_csv<W: Write>(form: &DiscreteForm, cfg: &McConfig, mut w: W) -> Result<()> {
    cfg.validate(form.len())?;
    let chain = Chain::new(form);
    writeln!(w, "path,step,node,holding_time")?;
    for i in 0..cfg.n_paths.min(100) {
        let path = simulate_path(&chain, cfg, i);
        for (s, (x, t)) in path.steps.iter().enumerate() {
            writeln!(w, "{i},{s},{x},{t:e}")?;
        }
    }
    Ok(())
}

/// `E_x int eta(X_t) dA^mu_t` against `sum_y eta(y) G(x,y) mu(y)`.
pub fn revuz_check(green: &GreenOperator, mu: &SignedMeasure, eta: &[f64], x: usize, cfg: &McConfig) -> Result<McEstimate> {
    let form = green.form();
    check_len(form.len(), mu.len())?;
    check_len(form.len(), eta.len())?;
    if !mu.is_nonnegative() {
        return Err(Error::InvalidArgument("the additive functional needs a nonnegative measure".into()));
    }
    let weighted: Vec<f64> = mu.masses().iter().zip(eta).map(|(m, e)| m * e).collect();
    let exact = green.solve(&weighted)?[x];
    let cfg = McConfig { start: Start::Node(x), ..cfg.clone() };
    let sim = simulate(form, &cfg, &[Functional::Additive { masses: mu.masses().to_vec(), eta: eta.to_vec() }])?;
    Ok(sim.estimates[0].against(exact, cfg.sigmas))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynkinReport {
    /// `E_x[u(X_{tau_k}) + A^{mu_d}_{tau_k}]` against `u(x)`.
    pub identity: McEstimate,
    /// `E_x u(X_{tau_k})`, recorded for trend analysis.
    pub stopped_value: McEstimate,
    /// `(G mu_c)(x)`, the value the stopped mean tends to as `k` grows in the continuum.
    pub reduced: f64,
}

/// Optional stopping at the first landing in `{|u| >= k}` for `u = G mu`.
pub fn dynkin_check(green: &GreenOperator, u: &[f64], mu: &SignedMeasure, k: f64, x: usize, cfg: &McConfig) -> Result<DynkinReport> {
    let form = green.form();
    check_len(form.len(), u.len())?;
    let (mu_d, mu_c) = decompose(mu)?;
    let lu = form.apply(u)?;
    let defect = lu.iter().zip(mu.masses()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    if defect > 1e-8 * tv_norm(mu).max(norm_inf(&lu)).max(1.0) {
        return Err(Error::InvalidArgument(format!("u is not the potential of mu (residual {defect:e})")));
    }
    let cfg = McConfig { start: Start::Node(x), ..cfg.clone() };
    let functionals = [
        Functional::StoppedValue { u: u.to_vec(), k },
        Functional::StoppedAdditive { u: u.to_vec(), k, masses: mu_d.masses().to_vec() },
    ];
    let chain = Chain::new(form);
    cfg.validate(form.len())?;
    for f in &functionals {
        f.validate(form.len())?;
    }
    let per_path: Vec<Option<[f64; 2]>> = (0..cfg.n_paths)
        .into_par_iter()
        .map(|i| {
            let path = simulate_path(&chain, &cfg, i);
            (!path.truncated).then(|| [functionals[0].evaluate(&path, form.weights()), functionals[1].evaluate(&path, form.weights())])
        })
        .collect();
    let kept: Vec<[f64; 2]> = per_path.into_iter().flatten().collect();
    let sums: Vec<f64> = kept.iter().map(|v| v[0] + v[1]).collect();
    let stopped: Vec<f64> = kept.iter().map(|v| v[0]).collect();
    let reduced = green.green_apply(&mu_c)?[x];
    Ok(DynkinReport {
        identity: McEstimate::from_samples(&sums, cfg.sigmas).against(u[x], cfg.sigmas),
        stopped_value: McEstimate::from_samples(&stopped, cfg.sigmas),
        reduced,
    })
}

/// Whether `|value_i - target_i|` is nonincreasing along a sequence, within a
/// relative slack.
pub fn trend_toward(values: &[f64], targets: &[f64], slack: f64) -> bool {
    let gaps: Vec<f64> = values.iter().zip(targets).map(|(v, t)| (v - t).abs()).collect();
    gaps.windows(2).all(|w| w[1] <= (1.0 + slack) * w[0])
}

/// Empirical mean holding time per node against `m(x) / (sum_y 2J(x,y) + kappa(x))`.
pub fn holding_time_calibration(form: &DiscreteForm, samples: usize, seed: u64, sigmas: f64) -> Result<Vec<McEstimate>> {
    if samples == 0 {
        return Err(Error::InvalidArgument("need at least one sample".into()));
    }
    let chain = Chain::new(form);
    Ok((0..form.len())
        .into_par_iter()
        .map(|x| {
            let total = chain.rows[x].2;
            let exp = Exp::new(total).expect("positive rate");
            let mut rng = path_rng(seed, x);
            let draws: Vec<f64> = (0..samples).map(|_| exp.sample(&mut rng)).collect();
            McEstimate::from_samples(&draws, sigmas).against(1.0 / total, sigmas)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Battery {
    pub seeds: Vec<u64>,
    pub passes: usize,
    pub pass_rate: f64,
}

/// Runs a check over independent seeds; a seed passes when none of its estimates fail.
pub fn battery(seeds: &[u64], check: impl Fn(u64) -> Result<Vec<McEstimate>>) -> Result<Battery> {
    let mut passes = 0;
    for &s in seeds {
        if check(s)?.iter().all(|e| !e.failed()) {
            passes += 1;
        }
    }
    Ok(Battery { seeds: seeds.to_vec(), passes, pass_rate: passes as f64 / seeds.len().max(1) as f64 })
}
