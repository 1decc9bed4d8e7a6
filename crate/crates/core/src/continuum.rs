//! Closed-form continuum oracles: the planar log potential of a point mass and
//! the one-dimensional Riesz kernel.
//!
//! For `u(x) = log(1/|x|) / (2 pi)` the level set `{u = a}` is the circle of
//! radius `r_a = exp(-2 pi a)` and `|grad u| = 1 / (2 pi r)`, so every check
//! reduces to a radial integral.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{DiscreteForm, FormDescriptor};
use crate::renorm::jump_lambda;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [0.129_484_966_168_869_7, 0.279_705_391_489_276_7, 0.381_830_050_505_118_9, 0.417_959_183_673_469_4];

/// One Gauss-Kronrod 7/15 panel: `(kronrod, |kronrod - gauss|)`.
fn gk15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for i in 0..7 {
        let dx = h * XGK[i];
        let s = f(c - dx) + f(c + dx);
        k += WGK[i] * s;
        if i % 2 == 1 {
            g += WG[i / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadratureConfig {
    pub tolerance: f64,
    pub max_panels: usize,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self { tolerance: 1e-11, max_panels: 20_000 }
    }
}

impl QuadratureConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) || self.max_panels == 0 {
            return Err(Error::InvalidArgument(format!("bad quadrature settings {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub value: f64,
    pub error: f64,
    pub panels: usize,
}

/// Globally adaptive Gauss-Kronrod on `[a, b]`, bisecting the worst panel
/// until the summed error estimate is below `tol * max(1, |value|)`.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, cfg: QuadratureConfig) -> Result<Quadrature> {
    if a == b {
        return Ok(Quadrature { value: 0.0, error: 0.0, panels: 0 });
    }
    let (v, e) = gk15(f, a, b);
    let mut panels = vec![(a, b, v, e)];
    loop {
        let value: f64 = panels.iter().map(|p| p.2).sum();
        let error: f64 = panels.iter().map(|p| p.3).sum();
        if error <= cfg.tolerance * value.abs().max(1.0) {
            return Ok(Quadrature { value, error, panels: panels.len() });
        }
        if panels.len() >= cfg.max_panels {
            return Err(Error::NoConvergence { iterations: panels.len(), residual: error });
        }
        let worst = (0..panels.len()).max_by(|&i, &j| panels[i].3.total_cmp(&panels[j].3)).unwrap();
        let (lo, hi, _, _) = panels.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = gk15(f, lo, mid);
        let (v2, e2) = gk15(f, mid, hi);
        panels.push((lo, mid, v1, e1));
        panels.push((mid, hi, v2, e2));
    }
}

/// Integrates over `[a, b]` split at the given interior points.
pub fn integrate_pieces(f: &dyn Fn(f64) -> f64, a: f64, b: f64, cuts: &[f64], cfg: QuadratureConfig) -> Result<f64> {
    let mut pts: Vec<f64> = cuts.iter().copied().filter(|&c| c > a && c < b).collect();
    pts.push(a);
    pts.push(b);
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts.windows(2).map(|w| integrate(f, w[0], w[1], cfg).map(|q| q.value)).sum()
}

/// Radial test function `eta(r)` on the plane.
#[derive(Clone)]
pub struct RadialFn {
    name: String,
    f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl std::fmt::Debug for RadialFn {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RadialFn").field("name", &self.name).finish()
    }
}

impl RadialFn {
    pub fn new(name: impl Into<String>, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self { name: name.into(), f: Arc::new(f) }
    }

    pub fn constant(c: f64) -> Self {
        Self::new(format!("const({c})"), move |_| c)
    }

    /// Smooth, 0 on `[0, r0]`, 1 on `[r1, inf)`.
    pub fn annular_cutoff(r0: f64, r1: f64) -> Self {
        Self::new(format!("cutoff({r0},{r1})"), move |r| smoothstep((r - r0) / (r1 - r0)))
    }

    /// `exp(-r^2 / s^2)`
    pub fn gaussian(s: f64) -> Self {
        Self::new(format!("gauss({s})"), move |r| (-(r * r) / (s * s)).exp())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn eval(&self, r: f64) -> f64 {
        (self.f)(r)
    }
}

fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * t * (t * (6.0 * t - 15.0) + 10.0)
}

/// Level profile `phi(a)` supported in `[lower, upper]`.
#[derive(Clone)]
pub struct LevelProfile {
    name: String,
    lower: f64,
    upper: f64,
    f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl std::fmt::Debug for LevelProfile {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LevelProfile").field("name", &self.name).field("lower", &self.lower).field("upper", &self.upper).finish()
    }
}

impl LevelProfile {
    pub fn new(name: impl Into<String>, lower: f64, upper: f64, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self { name: name.into(), lower, upper, f: Arc::new(f) }
    }

    pub fn indicator(lower: f64, upper: f64) -> Self {
        Self::new(format!("1[{lower},{upper}]"), lower, upper, |_| 1.0)
    }

    /// `sin^2` bump vanishing at both ends.
    pub fn bump(lower: f64, upper: f64) -> Self {
        Self::new(format!("bump[{lower},{upper}]"), lower, upper, move |a| {
            (PI * (a - lower) / (upper - lower)).sin().powi(2)
        })
    }

    pub fn zero() -> Self {
        Self::new("zero", 1.0, 2.0, |_| 0.0)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn support(&self) -> (f64, f64) {
        (self.lower, self.upper)
    }

    pub fn eval(&self, a: f64) -> f64 {
        if a < self.lower || a > self.upper {
            0.0
        } else {
            (self.f)(a)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ExampleKind {
    /// `u = log(1/|x|) / (2 pi)` on the plane, `mu_c = delta_0`.
    Log2d,
    /// Kernel `c / |x-y|^(1+2 alpha)` with the exterior of `[lower, upper]` killed.
    Riesz1d { alpha: f64, c: f64, lower: f64, upper: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuumExample {
    pub kind: ExampleKind,
    pub quadrature: QuadratureConfig,
}

impl ContinuumExample {
    pub fn log2d() -> Self {
        Self { kind: ExampleKind::Log2d, quadrature: QuadratureConfig::default() }
    }

    pub fn riesz1d(alpha: f64, c: f64, lower: f64, upper: f64) -> Self {
        Self { kind: ExampleKind::Riesz1d { alpha, c, lower, upper }, quadrature: QuadratureConfig::default() }
    }

    pub fn validate(&self) -> Result<()> {
        self.quadrature.validate()?;
        if let ExampleKind::Riesz1d { alpha, c, lower, upper } = self.kind {
            if !(alpha > 0.0 && alpha < 1.0) || !(c > 0.0) || !(upper > lower) {
                return Err(Error::InvalidArgument(format!("bad Riesz example {:?}", self.kind)));
            }
        }
        Ok(())
    }

    fn require_log(&self) -> Result<()> {
        self.validate()?;
        match self.kind {
            ExampleKind::Log2d => Ok(()),
            _ => Err(Error::InvalidArgument("this check needs the log2d example".into())),
        }
    }
}

/// Radius of the level circle `{u = a}`.
pub fn level_radius(a: f64) -> f64 {
    (-2.0 * PI * a).exp()
}

/// `(1/(c-b)) int_{b <= u <= c} eta 2|grad u|^2 dm`, which equals `2 eta(0)`
/// for every annulus when `eta` is continuous at the origin and the annulus is small.
pub fn reconstruction_check(ex: &ContinuumExample, b: f64, c: f64, eta: &RadialFn) -> Result<f64> {
    ex.require_log()?;
    if !(b > 0.0) {
        return Err(Error::InvalidArgument(format!("level b = {b} must be positive")));
    }
    if !(c > b) {
        return Err(Error::InvalidArgument(format!("need c > b, got b = {b}, c = {c}")));
    }
    // r = e^s turns dr / (pi r) into ds / pi
    let q = integrate(&|s: f64| eta.eval(s.exp()) / PI, -2.0 * PI * c, -2.0 * PI * b, ex.quadrature)?;
    Ok(q.value / (c - b))
}

/// `<l_a(u), eta> = int_{u=a} eta 2|grad u| dsigma = 2 eta(r_a)`.
pub fn level_line_mass(ex: &ContinuumExample, a: f64, eta: &RadialFn) -> Result<f64> {
    ex.require_log()?;
    let r = level_radius(a);
    let grad = 1.0 / (2.0 * PI * r);
    Ok(eta.eval(r) * 2.0 * grad * 2.0 * PI * r)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OccupationResult {
    /// `int phi(a) <l_a(u), eta> da`
    pub lhs: f64,
    /// `<mu^c_<u>, phi(u) eta>`
    pub rhs: f64,
    pub scale: f64,
}

impl OccupationResult {
    pub fn gap(&self) -> f64 {
        (self.lhs - self.rhs).abs()
    }
}

/// Both sides of the occupation formula; the left by level quadrature of the
/// coarea line masses, the right by radial quadrature of `phi(u) eta 2|grad u|^2`.
pub fn occupation_check(ex: &ContinuumExample, phi: &LevelProfile, eta: &RadialFn) -> Result<OccupationResult> {
    ex.require_log()?;
    let (lo, hi) = phi.support();
    if !(lo > 0.0) || !hi.is_finite() || !(hi > lo) {
        return Err(Error::InvalidArgument(format!("level profile support [{lo}, {hi}] must be a bounded interval in (0, inf)")));
    }
    let lhs = integrate(&|a| phi.eval(a) * level_line_mass(ex, a, eta).unwrap_or(f64::NAN), lo, hi, ex.quadrature)?.value;
    let u = |r: f64| (1.0 / r).ln() / (2.0 * PI);
    let density = |r: f64| {
        let g = 1.0 / (2.0 * PI * r);
        phi.eval(u(r)) * eta.eval(r) * 2.0 * g * g * 2.0 * PI * r
    };
    let rhs = integrate(&density, level_radius(hi), level_radius(lo), ex.quadrature)?.value;
    let scale = 1f64.max(lhs.abs()).max(rhs.abs());
    Ok(OccupationResult { lhs, rhs, scale })
}

/// A function on the line evaluated by the Riesz quadrature.
pub trait Profile: Sync {
    fn value(&self, y: f64) -> f64;
    /// Points where the profile may fail to be smooth.
    fn breakpoints(&self) -> Vec<f64> {
        Vec::new()
    }
    /// Constant value outside the domain, if the profile settles to one there.
    fn exterior(&self) -> Option<f64>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantProfile(pub f64);

impl Profile for ConstantProfile {
    fn value(&self, _: f64) -> f64 {
        self.0
    }
    fn exterior(&self) -> Option<f64> {
        Some(self.0)
    }
}

/// Linear interpolation through `(x_i, v_i)`, zero outside `[lower, upper]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinear {
    xs: Vec<f64>,
    vs: Vec<f64>,
}

impl PiecewiseLinear {
    /// Pins the profile to zero at `lower` and `upper`.
    pub fn with_zero_ends(lower: f64, upper: f64, xs: &[f64], vs: &[f64]) -> Result<Self> {
        crate::error::check_len(xs.len(), vs.len())?;
        let mut px = vec![lower];
        let mut pv = vec![0.0];
        px.extend_from_slice(xs);
        pv.extend_from_slice(vs);
        px.push(upper);
        pv.push(0.0);
        if px.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument("interpolation nodes must be strictly increasing inside the interval".into()));
        }
        Ok(Self { xs: px, vs: pv })
    }

    /// Interpolant of a node function on a one-dimensional form.
    pub fn from_form(form: &DiscreteForm, u: &[f64]) -> Result<Self> {
        let space = form.space();
        if space.dim() != 1 {
            return Err(Error::InvalidArgument("interpolation needs a one-dimensional state space".into()));
        }
        let (lo, hi) = space.domain();
        let xs: Vec<f64> = space.positions().iter().map(|p| p[0]).collect();
        Self::with_zero_ends(lo[0], hi[0], &xs, u)
    }
}

impl Profile for PiecewiseLinear {
    fn value(&self, y: f64) -> f64 {
        let n = self.xs.len();
        if y <= self.xs[0] || y >= self.xs[n - 1] {
            return 0.0;
        }
        let i = self.xs.partition_point(|&x| x <= y) - 1;
        let t = (y - self.xs[i]) / (self.xs[i + 1] - self.xs[i]);
        self.vs[i] + t * (self.vs[i + 1] - self.vs[i])
    }
    fn breakpoints(&self) -> Vec<f64> {
        self.xs.clone()
    }
    fn exterior(&self) -> Option<f64> {
        Some(0.0)
    }
}

/// Closed-form profile; `exterior = None` marks a profile that does not settle.
#[derive(Clone)]
pub struct ClosedForm {
    pub f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub exterior: Option<f64>,
}

impl Profile for ClosedForm {
    fn value(&self, y: f64) -> f64 {
        (self.f)(y)
    }
    fn exterior(&self) -> Option<f64> {
        self.exterior
    }
}

pub use crate::renorm::convexity_gap;

/// Density of `j_k(u)` at each point of `xs`:
/// `2c int gap(u(x), u(y)) / |x-y|^(1+2 alpha) dy`, with the exterior of the
/// domain integrated in closed form.
pub fn riesz_jk_quadrature(ex: &ContinuumExample, u: &dyn Profile, k: f64, xs: &[f64]) -> Result<Vec<f64>> {
    ex.validate()?;
    let ExampleKind::Riesz1d { alpha, c, lower, upper } = ex.kind else {
        return Err(Error::InvalidArgument("this check needs the riesz1d example".into()));
    };
    let Some(ext) = u.exterior() else {
        return Err(Error::NonIntegrableTail("profile does not settle outside the domain".into()));
    };
    let mut cuts = u.breakpoints();
    cuts.retain(|&b| b > lower && b < upper);
    let cfg = ex.quadrature;
    xs.par_iter()
        .map(|&x| {
            if !(x > lower && x < upper) {
                return Err(Error::InvalidArgument(format!("evaluation point {x} outside ({lower}, {upper})")));
            }
            let w = u.value(x);
            let integrand = |y: f64| {
                let d = (y - x).abs();
                if d == 0.0 {
                    return 0.0;
                }
                convexity_gap(w, u.value(y), k) / d.powf(1.0 + 2.0 * alpha)
            };
            let mut pieces = cuts.clone();
            pieces.push(x);
            pieces.extend(level_crossings(u, k, lower, upper, &cuts));
            let inside = integrate_pieces(&integrand, lower, upper, &pieces, cfg)?;
            let gap_ext = convexity_gap(w, ext, k);
            let tails = gap_ext * ((x - lower).powf(-2.0 * alpha) + (upper - x).powf(-2.0 * alpha)) / (2.0 * alpha);
            Ok(2.0 * c * (inside + tails))
        })
        .collect()
}

/// Points in `(lower, upper)` where `u - k` changes sign, located by bisection
/// between consecutive breakpoints.
fn level_crossings(u: &dyn Profile, k: f64, lower: f64, upper: f64, cuts: &[f64]) -> Vec<f64> {
    let mut grid = vec![lower];
    grid.extend_from_slice(cuts);
    grid.push(upper);
    grid.sort_by(f64::total_cmp);
    if grid.len() < 64 {
        let step = (upper - lower) / 64.0;
        grid.extend((1..64).map(|i| lower + step * i as f64));
        grid.sort_by(f64::total_cmp);
    }
    let mut out = Vec::new();
    for w in grid.windows(2) {
        let (mut a, mut b) = (w[0], w[1]);
        let fa = u.value(a) - k;
        let fb = u.value(b) - k;
        if fa == 0.0 {
            out.push(a);
            continue;
        }
        if fa * fb >= 0.0 {
            continue;
        }
        for _ in 0..100 {
            let m = 0.5 * (a + b);
            if (u.value(m) - k) * fa > 0.0 {
                a = m;
            } else {
                b = m;
            }
        }
        out.push(0.5 * (a + b));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RieszCrossValidation {
    pub nodes: Vec<usize>,
    pub points: Vec<f64>,
    pub lattice: Vec<f64>,
    pub quadrature: Vec<f64>,
    pub max_relative_error: f64,
}

/// Compares the lattice jump density `j_k(u)/m` with quadrature of the
/// continuum kernel applied to the interpolant of `u`.
pub fn cross_validate_riesz(form: &DiscreteForm, u: &[f64], k: f64, nodes: &[usize], quadrature: QuadratureConfig) -> Result<RieszCrossValidation> {
    let FormDescriptor::Fractional(frac) = form.descriptor() else {
        return Err(Error::InvalidArgument("cross-validation needs a fractional form".into()));
    };
    let ex = ContinuumExample {
        kind: ExampleKind::Riesz1d { alpha: frac.alpha, c: frac.c, lower: frac.lower, upper: frac.upper },
        quadrature,
    };
    if let Some(&bad) = nodes.iter().find(|&&i| i >= form.len()) {
        return Err(Error::InvalidArgument(format!("node {bad} out of range")));
    }
    let j = jump_lambda(form, u, k)?;
    let lattice: Vec<f64> = nodes.iter().map(|&i| j.masses()[i] / form.weights()[i]).collect();
    let points: Vec<f64> = nodes.iter().map(|&i| form.space().positions()[i][0]).collect();
    let profile = PiecewiseLinear::from_form(form, u)?;
    let quadrature = riesz_jk_quadrature(&ex, &profile, k, &points)?;
    let max_relative_error = lattice
        .iter()
        .zip(&quadrature)
        .map(|(l, q)| (l - q).abs() / q.abs().max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max);
    Ok(RieszCrossValidation { nodes: nodes.to_vec(), points, lattice, quadrature, max_relative_error })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gk_exact_on_polynomials() {
        let q = integrate(&|x| x.powi(9) - 3.0 * x * x, -1.0, 2.0, QuadratureConfig::default()).unwrap();
        let exact = (2f64.powi(10) - 1.0) / 10.0 - (8.0 + 1.0);
        assert!((q.value - exact).abs() < 1e-12);
        assert_eq!(q.panels, 1);
    }

    #[test]
    fn gk_adapts_to_singular_integrand() {
        let q = integrate(&|x: f64| 1.0 / x.sqrt(), 0.0, 1.0, QuadratureConfig::default()).unwrap();
        assert!((q.value - 2.0).abs() < 1e-9, "{q:?}");
    }

    #[test]
    fn reconstruction_examples() {
        let ex = ContinuumExample::log2d();
        let one = RadialFn::constant(1.0);
        assert!((reconstruction_check(&ex, 1.0, 2.0, &one).unwrap() - 2.0).abs() < 1e-12);
        assert!((reconstruction_check(&ex, 5.0, 5.1, &one).unwrap() - 2.0).abs() < 1e-12);
        // annulus r in [e^{-4 pi}, e^{-2 pi}] lies inside the region where eta = 0
        let cutoff = RadialFn::annular_cutoff(0.01, 0.02);
        assert_eq!(reconstruction_check(&ex, 1.0, 2.0, &cutoff).unwrap(), 0.0);
        assert!(reconstruction_check(&ex, 2.0, 2.0, &one).is_err());
    }

    #[test]
    fn level_line_masses() {
        let ex = ContinuumExample::log2d();
        for a in [0.5, 1.0, 5.0] {
            assert!((level_line_mass(&ex, a, &RadialFn::constant(1.0)).unwrap() - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn occupation_indicator() {
        let ex = ContinuumExample::log2d();
        let r = occupation_check(&ex, &LevelProfile::indicator(1.0, 2.0), &RadialFn::constant(1.0)).unwrap();
        assert!((r.lhs - 2.0).abs() < 1e-10);
        assert!(r.gap() < 1e-8, "{r:?}");
        let z = occupation_check(&ex, &LevelProfile::zero(), &RadialFn::constant(1.0)).unwrap();
        assert_eq!((z.lhs, z.rhs), (0.0, 0.0));
        assert!(occupation_check(&ex, &LevelProfile::indicator(0.0, 1.0), &RadialFn::constant(1.0)).is_err());
    }

    #[test]
    fn riesz_constant_profile_vanishes() {
        let ex = ContinuumExample::riesz1d(0.5, 1.0, 0.0, 1.0);
        let v = riesz_jk_quadrature(&ex, &ConstantProfile(0.7), 0.3, &[0.2, 0.5, 0.9]).unwrap();
        assert!(v.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn riesz_rejects_non_decaying() {
        let ex = ContinuumExample::riesz1d(0.5, 1.0, 0.0, 1.0);
        let p = ClosedForm { f: Arc::new(|y: f64| y), exterior: None };
        assert!(matches!(riesz_jk_quadrature(&ex, &p, 0.3, &[0.5]), Err(Error::NonIntegrableTail(_))));
    }

    #[test]
    fn riesz_step_has_closed_form() {
        // u = 1 on (1/4, 3/4), 0 elsewhere; k = 1/2; x = 0.1 sees the plateau with gap 1
        let ex = ContinuumExample::riesz1d(0.5, 1.0, 0.0, 1.0);
        let p = ClosedForm { f: Arc::new(|y: f64| if (0.25..0.75).contains(&y) { 1.0 } else { 0.0 }), exterior: Some(0.0) };
        let v = riesz_jk_quadrature(&ex, &p, 0.5, &[0.1]).unwrap()[0];
        let exact = 2.0 * (1.0 / 0.15 - 1.0 / 0.65);
        assert!((v - exact).abs() < 1e-6 * exact, "{v} vs {exact}");
    }

    #[test]
    fn convexity_gap_nonnegative() {
        for w in [-1.0, 0.0, 0.3, 2.0] {
            for v in [-2.0, 0.0, 0.3, 0.5, 5.0] {
                for k in [-0.5, 0.0, 0.3] {
                    assert!(convexity_gap(w, v, k) >= 0.0);
                }
            }
        }
    }
}
