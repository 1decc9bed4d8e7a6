//! Finite-state symmetric Dirichlet forms.
//!
//! A [`DiscreteForm`] is the Beurling-Deny ledger of a form on a node set:
//! jump intensities `J(x,y)` over ordered pairs, a killing vector `kappa` and
//! reference weights `m`. Its energy is
//!
//! ```text
//! E(u,v) = sum_{x,y} J(x,y) (u(x)-u(y)) (v(x)-v(y)) + sum_x kappa(x) u(x) v(x) = u^T L v
//! ```
//!
//! with no factor 1/2, so the stiffness operator is
//! `(L u)(x) = sum_y 2 J(x,y) (u(x) - u(y)) + kappa(x) u(x)`.
//! A graph conductance `c_xy` therefore maps to `J(x,y) = J(y,x) = c_xy / 2`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::measures::SignedMeasure;
use crate::sparse::CsrMatrix;

/// Node position; the second coordinate is zero in one dimension.
pub type Point = [f64; 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSpace {
    dim: usize,
    spacing: f64,
    positions: Vec<Point>,
    weights: Vec<f64>,
    lower: Point,
    upper: Point,
}

impl StateSpace {
    /// `lower`/`upper` bound the continuum domain the nodes discretize.
    pub fn new(dim: usize, spacing: f64, positions: Vec<Point>, weights: Vec<f64>, lower: Point, upper: Point) -> Result<Self> {
        if !(1..=2).contains(&dim) {
            return Err(Error::InvalidForm(format!("dimension {dim} not in {{1,2}}")));
        }
        if !(spacing > 0.0) {
            return Err(Error::InvalidForm(format!("spacing {spacing} must be positive")));
        }
        check_len(positions.len(), weights.len())?;
        if let Some(i) = weights.iter().position(|&w| !(w > 0.0)) {
            return Err(Error::InvalidForm(format!("weight at node {i} is not positive")));
        }
        let mut sorted: Vec<&Point> = positions.iter().collect();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidForm("overlapping nodes".into()));
        }
        Ok(Self { dim, spacing, positions, weights, lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[Point] {
        &self.positions
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn domain(&self) -> (Point, Point) {
        (self.lower, self.upper)
    }

    /// Index of the node closest to `p` (lowest index on ties) and its distance.
    pub fn nearest(&self, p: &Point) -> (usize, f64) {
        self.positions
            .iter()
            .enumerate()
            .map(|(i, q)| (i, crate::measures::distance(p, q)))
            .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
    }

    /// Ingests a density against the reference weights: `masses(x) = f(x) m(x)`.
    pub fn integrate_density(&self, f: impl Fn(&Point) -> f64) -> Vec<f64> {
        self.positions.iter().zip(&self.weights).map(|(p, w)| f(p) * w).collect()
    }
}

/// Unordered node pair `a < b` carrying `J(a,b) = J(b,a)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub jump: f64,
    pub local: bool,
}

#[derive(Clone)]
pub enum Conductance {
    Uniform(f64),
    /// Conductance of the edge between two points (the second may be a boundary point).
    Field(Arc<dyn Fn(Point, Point) -> f64 + Send + Sync>),
}

impl Conductance {
    fn at(&self, x: Point, y: Point) -> f64 {
        match self {
            Conductance::Uniform(a) => *a,
            Conductance::Field(f) => f(x, y),
        }
    }
}

impl std::fmt::Debug for Conductance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Conductance::Uniform(a) => write!(f, "Uniform({a})"),
            Conductance::Field(_) => write!(f, "Field(..)"),
        }
    }
}

/// Cube `[lower, upper]^d` with `n_per_side` interior nodes per axis at spacing
/// `h = (upper - lower) / (n_per_side + 1)`; the boundary layer is absorbed into `kappa`.
#[derive(Debug, Clone)]
pub struct LocalGrid {
    pub dim: usize,
    pub n_per_side: usize,
    pub lower: f64,
    pub upper: f64,
    pub conductance: Conductance,
}

/// Interval `[lower, upper]` split into `n` cells of width `h`, one node per cell centre.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FractionalInterval {
    pub lower: f64,
    pub upper: f64,
    pub n: usize,
    pub alpha: f64,
    pub c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FormDescriptor {
    Local { dim: usize, n_per_side: usize, lower: f64, upper: f64, conductance: Option<f64> },
    Fractional(FractionalInterval),
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub node: usize,
    pub jump: f64,
    pub local: bool,
}

#[derive(Debug, Clone)]
pub struct DiscreteForm {
    space: StateSpace,
    edges: Vec<Edge>,
    kappa: Vec<f64>,
    descriptor: FormDescriptor,
    adjacency: Vec<Vec<Neighbor>>,
    stiffness: CsrMatrix,
}

impl DiscreteForm {
    /// Validates and assembles a form. Edges must have `a != b`; duplicate
    /// pairs are rejected. Transience requires `kappa` to be nonzero on every
    /// connected component.
    pub fn new(space: StateSpace, edges: Vec<Edge>, kappa: Vec<f64>, descriptor: FormDescriptor) -> Result<Self> {
        let n = space.len();
        check_len(n, kappa.len())?;
        if let Some(i) = kappa.iter().position(|&k| !(k >= 0.0)) {
            return Err(Error::InvalidForm(format!("negative killing intensity at node {i}")));
        }
        let mut adjacency: Vec<Vec<Neighbor>> = vec![Vec::new(); n];
        for e in &edges {
            if e.a == e.b || e.a >= n || e.b >= n {
                return Err(Error::InvalidForm(format!("bad edge ({}, {})", e.a, e.b)));
            }
            if !(e.jump >= 0.0) {
                return Err(Error::InvalidForm(format!("negative jump intensity on ({}, {})", e.a, e.b)));
            }
            adjacency[e.a].push(Neighbor { node: e.b, jump: e.jump, local: e.local });
            adjacency[e.b].push(Neighbor { node: e.a, jump: e.jump, local: e.local });
        }
        for (i, nbrs) in adjacency.iter_mut().enumerate() {
            nbrs.sort_by_key(|nb| nb.node);
            if nbrs.windows(2).any(|w| w[0].node == w[1].node) {
                return Err(Error::InvalidForm(format!("duplicate edge at node {i}")));
            }
        }
        check_transient(&adjacency, &kappa)?;

        let mut triplets = Vec::with_capacity(n + 2 * edges.len());
        for (i, nbrs) in adjacency.iter().enumerate() {
            let mut diag = kappa[i];
            for nb in nbrs {
                diag += 2.0 * nb.jump;
                triplets.push((i, nb.node, -2.0 * nb.jump));
            }
            triplets.push((i, i, diag));
        }
        let stiffness = CsrMatrix::from_triplets(n, &triplets);
        Ok(Self { space, edges, kappa, descriptor, adjacency, stiffness })
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn len(&self) -> usize {
        self.space.len()
    }

    pub fn is_empty(&self) -> bool {
        self.space.is_empty()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn kappa(&self) -> &[f64] {
        &self.kappa
    }

    pub fn weights(&self) -> &[f64] {
        self.space.weights()
    }

    pub fn descriptor(&self) -> &FormDescriptor {
        &self.descriptor
    }

    pub fn neighbors(&self, x: usize) -> &[Neighbor] {
        &self.adjacency[x]
    }

    /// `J(x,y)` for an ordered pair (zero on the diagonal and for non-neighbors).
    pub fn jump(&self, x: usize, y: usize) -> f64 {
        self.adjacency[x]
            .binary_search_by_key(&y, |nb| nb.node)
            .map(|pos| self.adjacency[x][pos].jump)
            .unwrap_or(0.0)
    }

    pub fn stiffness(&self) -> &CsrMatrix {
        &self.stiffness
    }

    pub fn apply(&self, u: &[f64]) -> Result<Vec<f64>> {
        check_len(self.len(), u.len())?;
        Ok(self.stiffness.matvec(u))
    }

    /// Total exit rate `sum_y 2 J(x,y) + kappa(x)` (mass per time).
    pub fn exit_intensity(&self, x: usize) -> f64 {
        self.adjacency[x].iter().map(|nb| 2.0 * nb.jump).sum::<f64>() + self.kappa[x]
    }

    pub fn has_local_part(&self) -> bool {
        self.edges.iter().any(|e| e.local)
    }

    pub fn dump(&self) -> FormDump {
        FormDump {
            descriptor: self.descriptor.clone(),
            nodes: self
                .space
                .positions()
                .iter()
                .zip(self.space.weights())
                .enumerate()
                .map(|(index, (&position, &weight))| DumpNode { index, position, weight })
                .collect(),
            jumps: self.edges.iter().map(|e| (e.a, e.b, e.jump, e.local)).collect(),
            kappa: self.kappa.clone(),
        }
    }
}

/// JSON debug view of a form: node list, `J` triplets over unordered pairs
/// `(a, b, J, local)`, and the killing vector.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FormDump {
    pub descriptor: FormDescriptor,
    pub nodes: Vec<DumpNode>,
    pub jumps: Vec<(usize, usize, f64, bool)>,
    pub kappa: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DumpNode {
    pub index: usize,
    pub position: Point,
    pub weight: f64,
}

fn check_transient(adjacency: &[Vec<Neighbor>], kappa: &[f64]) -> Result<()> {
    let n = kappa.len();
    let mut component = vec![usize::MAX; n];
    let mut killed = Vec::new();
    for start in 0..n {
        if component[start] != usize::MAX {
            continue;
        }
        let id = killed.len();
        killed.push(false);
        let mut stack = vec![start];
        component[start] = id;
        while let Some(x) = stack.pop() {
            if kappa[x] > 0.0 {
                killed[id] = true;
            }
            for nb in &adjacency[x] {
                if nb.jump > 0.0 && component[nb.node] == usize::MAX {
                    component[nb.node] = id;
                    stack.push(nb.node);
                }
            }
        }
    }
    if let Some(id) = killed.iter().position(|k| !k) {
        let node = component.iter().position(|&c| c == id).unwrap();
        return Err(Error::InvalidForm(format!("component containing node {node} has no killing: form is recurrent")));
    }
    Ok(())
}

/// Nearest-neighbour form of `div(a grad u)` on a cube with Dirichlet exterior.
///
/// `J(x,y) = a h^{d-2} / 2` on interior edges; edges to the exterior become
/// `kappa(x) += a h^{d-2}`; `m = h^d`. All edges are flagged local.
pub fn build_local_form(grid: &LocalGrid) -> Result<DiscreteForm> {
    let LocalGrid { dim, n_per_side: n, lower, upper, ref conductance } = *grid;
    if !(1..=2).contains(&dim) {
        return Err(Error::InvalidForm(format!("dimension {dim} not in {{1,2}}")));
    }
    if n == 0 {
        return Err(Error::InvalidForm("n_per_side must be at least 1".into()));
    }
    if !(upper > lower) {
        return Err(Error::InvalidForm("empty domain".into()));
    }
    let h = (upper - lower) / (n + 1) as f64;
    let scale = h.powi(dim as i32 - 2);
    let coord = |i: isize| lower + (i + 1) as f64 * h;
    let ny = if dim == 2 { n } else { 1 };
    let point = |i: isize, j: isize| -> Point { [coord(i), if dim == 2 { coord(j) } else { 0.0 }] };

    let count = n * ny;
    let mut positions = Vec::with_capacity(count);
    for j in 0..ny {
        for i in 0..n {
            positions.push(point(i as isize, j as isize));
        }
    }
    let space = StateSpace::new(dim, h, positions, vec![h.powi(dim as i32); count], [lower; 2], [upper, if dim == 2 { upper } else { lower }])?;

    let mut edges = Vec::new();
    let mut kappa = vec![0.0; count];
    let dirs: &[(isize, isize)] = if dim == 2 { &[(1, 0), (-1, 0), (0, 1), (0, -1)] } else { &[(1, 0), (-1, 0)] };
    for j in 0..ny as isize {
        for i in 0..n as isize {
            let x = (i + j * n as isize) as usize;
            for &(di, dj) in dirs {
                let (ni, nj) = (i + di, j + dj);
                let a = conductance.at(point(i, j), point(ni, nj));
                if !(a > 0.0) {
                    return Err(Error::InvalidForm(format!("non-positive conductance {a} at node {x}")));
                }
                let inside = (0..n as isize).contains(&ni) && (0..ny as isize).contains(&nj);
                if inside {
                    let y = (ni + nj * n as isize) as usize;
                    if y > x {
                        edges.push(Edge { a: x, b: y, jump: 0.5 * a * scale, local: true });
                    }
                } else {
                    kappa[x] += a * scale;
                }
            }
        }
    }
    let descriptor = FormDescriptor::Local {
        dim,
        n_per_side: n,
        lower,
        upper,
        conductance: match conductance {
            Conductance::Uniform(a) => Some(*a),
            Conductance::Field(_) => None,
        },
    };
    DiscreteForm::new(space, edges, kappa, descriptor)
}

/// Cell-centred discretization of the kernel `c / |x-y|^{1+2 alpha}` on an interval
/// with the exterior absorbed into `kappa`.
///
/// * `|x - y| > h`: `J(x,y) = c h^2 / |x-y|^{1+2 alpha}`.
/// * nearest neighbours: the singular range `|z| <= h` is replaced by a local
///   conductance `2J = c h^{1-2 alpha} / (1 - alpha)`, matching the kernel's
///   truncated second moment on smooth functions.
/// * `kappa(x) = h * 2c * int_{R \ (lower, upper)} |x-y|^{-1-2 alpha} dy`, in closed form.
pub fn build_fractional_form(spec: &FractionalInterval) -> Result<DiscreteForm> {
    let FractionalInterval { lower, upper, n, alpha, c } = *spec;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidForm(format!("alpha = {alpha} outside (0,1)")));
    }
    if n < 2 {
        return Err(Error::InvalidForm("need at least two nodes".into()));
    }
    if !(c > 0.0) {
        return Err(Error::InvalidForm(format!("normalizing constant {c} must be positive")));
    }
    let h = (upper - lower) / n as f64;
    if !(h > 0.0) {
        return Err(Error::InvalidForm("overlapping nodes".into()));
    }
    let positions: Vec<Point> = (0..n).map(|i| [lower + (i as f64 + 0.5) * h, 0.0]).collect();
    let space = StateSpace::new(1, h, positions.clone(), vec![h; n], [lower, 0.0], [upper, 0.0])?;

    let exponent = 1.0 + 2.0 * alpha;
    let proxy = c * h.powf(1.0 - 2.0 * alpha) / (2.0 * (1.0 - alpha));
    let mut edges = Vec::with_capacity(n * (n - 1) / 2);
    for a in 0..n {
        for b in a + 1..n {
            if b == a + 1 {
                edges.push(Edge { a, b, jump: proxy, local: true });
            } else {
                let r = (b - a) as f64 * h;
                edges.push(Edge { a, b, jump: c * h * h / r.powf(exponent), local: false });
            }
        }
    }
    let kappa = positions
        .iter()
        .map(|p| h * exterior_kernel_mass(p[0], lower, upper, alpha, c))
        .collect();
    DiscreteForm::new(space, edges, kappa, FormDescriptor::Fractional(*spec))
}

/// `2c * int_{R \ (lower, upper)} |x-y|^{-1-2 alpha} dy` for `x` inside the interval.
pub fn exterior_kernel_mass(x: f64, lower: f64, upper: f64, alpha: f64, c: f64) -> f64 {
    let two_alpha = 2.0 * alpha;
    2.0 * c * ((x - lower).powf(-two_alpha) + (upper - x).powf(-two_alpha)) / two_alpha
}

pub fn energy(form: &DiscreteForm, u: &[f64], v: &[f64]) -> Result<f64> {
    check_len(form.len(), u.len())?;
    check_len(form.len(), v.len())?;
    Ok(energy_part(form, u, v, EnergyPart::All))
}

/// Which summands of the form to include.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnergyPart {
    All,
    /// Local-flagged edges only.
    Local,
    /// Non-local edges only.
    Jump,
    Killing,
}

pub fn energy_part(form: &DiscreteForm, u: &[f64], v: &[f64], part: EnergyPart) -> f64 {
    let edge_sum: f64 = form
        .edges
        .iter()
        .filter(|e| match part {
            EnergyPart::All => true,
            EnergyPart::Local => e.local,
            EnergyPart::Jump => !e.local,
            EnergyPart::Killing => false,
        })
        .map(|e| 2.0 * e.jump * (u[e.a] - u[e.b]) * (v[e.a] - v[e.b]))
        .sum();
    let killing: f64 = match part {
        EnergyPart::All | EnergyPart::Killing => form.kappa.iter().zip(u.iter().zip(v)).map(|(k, (a, b))| k * a * b).sum(),
        _ => 0.0,
    };
    edge_sum + killing
}

/// Energy measures of `u`: `(local part, jump part)` with node masses
/// `sum_y 2 J(x,y) (u(x) - u(y))^2` over local-flagged and non-local edges.
/// The killing term contributes to neither.
pub fn energy_measure(form: &DiscreteForm, u: &[f64]) -> Result<(SignedMeasure, SignedMeasure)> {
    check_len(form.len(), u.len())?;
    let n = form.len();
    let mut local = vec![0.0; n];
    let mut jump = vec![0.0; n];
    for e in &form.edges {
        let w = 2.0 * e.jump * (u[e.a] - u[e.b]).powi(2);
        let target = if e.local { &mut local } else { &mut jump };
        target[e.a] += w;
        target[e.b] += w;
    }
    Ok((SignedMeasure::diffuse(local), SignedMeasure::diffuse(jump)))
}

/// Scalar function of the solution value, `h(u)`, with a declared support bound:
/// `h(s) = 0` for `|s| > M`.
#[derive(Clone)]
pub struct LevelFunction {
    name: String,
    support: Option<f64>,
    f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl std::fmt::Debug for LevelFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LevelFunction").field("name", &self.name).field("support", &self.support).finish()
    }
}

impl LevelFunction {
    pub fn compact(name: impl Into<String>, bound: f64, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self { name: name.into(), support: Some(bound), f: Arc::new(f) }
    }

    /// A function without a support bound; rejected by [`extended_energy`].
    pub fn unbounded(name: impl Into<String>, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self { name: name.into(), support: None, f: Arc::new(f) }
    }

    /// `1` on `[-M, M]`.
    pub fn indicator(bound: f64) -> Self {
        Self::compact(format!("indicator[{bound}]"), bound, |_| 1.0)
    }

    /// `max(0, 1 - |s| / M)`.
    pub fn hat(bound: f64) -> Self {
        Self::compact(format!("hat[{bound}]"), bound, move |s| (1.0 - s.abs() / bound).max(0.0))
    }

    /// `(1 - (s/M)^2)^2`, a C^1 bump.
    pub fn bump(bound: f64) -> Self {
        Self::compact(format!("bump[{bound}]"), bound, move |s| (1.0 - (s / bound).powi(2)).max(0.0).powi(2))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn support(&self) -> Option<f64> {
        self.support
    }

    pub fn eval(&self, s: f64) -> f64 {
        match self.support {
            Some(m) if s.abs() > m => 0.0,
            _ => (self.f)(s),
        }
    }
}

/// `E(u, h(u) eta)` written as the four-term sum
///
/// ```text
/// E_loc(T_M u, h(u) eta)
///   + sum J (u(x)-u(y)) (h(u)(x)-h(u)(y)) (eta(x)+eta(y))/2
///   + sum J (u(x)-u(y)) (eta(x)-eta(y)) (h(u)(x)+h(u)(y))/2
///   + sum kappa u h(u) eta
/// ```
///
/// with the jump sums over non-local edges. On a finite space every function
/// has finite energy, so the truncation level of the local term is lifted to
/// `max(M, |u|_inf)`; the value is then independent of the declared bound.
pub fn extended_energy(form: &DiscreteForm, u: &[f64], h: &LevelFunction, eta: &[f64]) -> Result<f64> {
    check_len(form.len(), u.len())?;
    check_len(form.len(), eta.len())?;
    let bound = h
        .support()
        .ok_or_else(|| Error::InvalidArgument(format!("level function {} has no declared support bound", h.name())))?;
    let level = bound.max(crate::sparse::norm_inf(u));
    let hu: Vec<f64> = u.iter().map(|&s| h.eval(s)).collect();
    let mut total = 0.0;
    for e in &form.edges {
        let (x, y) = (e.a, e.b);
        let du = u[x] - u[y];
        if e.local {
            let dt = u[x].clamp(-level, level) - u[y].clamp(-level, level);
            total += 2.0 * e.jump * dt * (hu[x] * eta[x] - hu[y] * eta[y]);
        } else {
            let sym_h = du * (hu[x] - hu[y]) * 0.5 * (eta[x] + eta[y]);
            let sym_eta = du * (eta[x] - eta[y]) * 0.5 * (hu[x] + hu[y]);
            total += 2.0 * e.jump * (sym_h + sym_eta);
        }
    }
    total += form.kappa.iter().enumerate().map(|(i, k)| k * u[i] * hu[i] * eta[i]).sum::<f64>();
    Ok(total)
}
