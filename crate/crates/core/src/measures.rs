//! Bounded signed measures on a node set, their diffuse/concentrated split,
//! and a dictionary-based bounded-Lipschitz distance used as a computable
//! stand-in for narrow convergence.
//!
//! Masses are stored already integrated against the reference weights, so
//! `<mu, eta> = sum_x eta(x) * masses[x]` and the equation `L u = masses`
//! needs no extra weighting.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::lattice::{Point, StateSpace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tag {
    Diffuse,
    Concentrated,
}

impl Tag {
    pub fn as_str(self) -> &'static str {
        match self {
            Tag::Diffuse => "diffuse",
            Tag::Concentrated => "concentrated",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignedMeasure {
    masses: Vec<f64>,
    tags: Vec<Option<Tag>>,
}

impl SignedMeasure {
    pub fn zero(n: usize) -> Self {
        Self { masses: vec![0.0; n], tags: vec![None; n] }
    }

    /// Measure with no tags; fine for derived measures (`nu_k`, energy measures)
    /// that are never decomposed.
    pub fn untagged(masses: Vec<f64>) -> Self {
        let n = masses.len();
        Self { masses, tags: vec![None; n] }
    }

    pub fn with_tag(masses: Vec<f64>, tag: Tag) -> Self {
        let tags = masses.iter().map(|&m| if m != 0.0 { Some(tag) } else { None }).collect();
        Self { masses, tags }
    }

    pub fn diffuse(masses: Vec<f64>) -> Self {
        Self::with_tag(masses, Tag::Diffuse)
    }

    pub fn concentrated(masses: Vec<f64>) -> Self {
        Self::with_tag(masses, Tag::Concentrated)
    }

    pub fn from_parts(masses: Vec<f64>, tags: Vec<Option<Tag>>) -> Result<Self> {
        check_len(masses.len(), tags.len())?;
        Ok(Self { masses, tags })
    }

    /// A unit-free Dirac: `mass` at `node`, tagged.
    pub fn dirac(n: usize, node: usize, mass: f64, tag: Tag) -> Self {
        let mut m = Self::zero(n);
        m.add_atom(node, mass, tag);
        m
    }

    /// Adds mass at a node. A node that receives both kinds of mass is tagged
    /// concentrated: one tag per node.
    pub fn add_atom(&mut self, node: usize, mass: f64, tag: Tag) {
        self.masses[node] += mass;
        match self.tags[node] {
            None => self.tags[node] = Some(tag),
            Some(existing) if existing == tag => {}
            Some(_) => self.tags[node] = Some(Tag::Concentrated),
        }
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn tags(&self) -> &[Option<Tag>] {
        &self.tags
    }

    pub fn pair(&self, eta: &[f64]) -> f64 {
        self.masses.iter().zip(eta).map(|(m, e)| m * e).sum()
    }

    pub fn total(&self) -> f64 {
        self.masses.iter().sum()
    }

    pub fn is_nonnegative(&self) -> bool {
        self.masses.iter().all(|&m| m >= 0.0)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self { masses: self.masses.iter().map(|m| m * factor).collect(), tags: self.tags.clone() }
    }

    /// Untagged difference `self - other`.
    pub fn minus(&self, other: &SignedMeasure) -> Result<SignedMeasure> {
        check_len(self.len(), other.len())?;
        Ok(Self::untagged(self.masses.iter().zip(&other.masses).map(|(a, b)| a - b).collect()))
    }

    /// Restriction to the nodes where `keep` is true.
    pub fn restrict(&self, keep: impl Fn(usize) -> bool) -> Self {
        let mut out = self.clone();
        for i in 0..out.len() {
            if !keep(i) {
                out.masses[i] = 0.0;
                out.tags[i] = None;
            }
        }
        out
    }

    pub fn positive_part(&self) -> Self {
        self.map_masses(|m| m.max(0.0))
    }

    pub fn negative_part(&self) -> Self {
        self.map_masses(|m| (-m).max(0.0))
    }

    /// Total variation measure `|mu|`.
    pub fn abs(&self) -> Self {
        self.map_masses(f64::abs)
    }

    fn map_masses(&self, f: impl Fn(f64) -> f64) -> Self {
        let masses: Vec<f64> = self.masses.iter().map(|&m| f(m)).collect();
        let tags = masses
            .iter()
            .zip(&self.tags)
            .map(|(&m, &t)| if m != 0.0 { t } else { None })
            .collect();
        Self { masses, tags }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "node,mass,tag")?;
        for (i, (m, t)) in self.masses.iter().zip(&self.tags).enumerate() {
            let tag = t.map(Tag::as_str).unwrap_or("");
            writeln!(w, "{i},{m:e},{tag}")?;
        }
        Ok(())
    }
}

/// Splits `mu` into `(mu_d, mu_c)` by tag.
pub fn decompose(mu: &SignedMeasure) -> Result<(SignedMeasure, SignedMeasure)> {
    let n = mu.len();
    let mut diffuse = SignedMeasure::zero(n);
    let mut concentrated = SignedMeasure::zero(n);
    for (i, (&m, &t)) in mu.masses.iter().zip(&mu.tags).enumerate() {
        if m == 0.0 {
            continue;
        }
        match t {
            Some(Tag::Diffuse) => diffuse.add_atom(i, m, Tag::Diffuse),
            Some(Tag::Concentrated) => concentrated.add_atom(i, m, Tag::Concentrated),
            None => return Err(Error::UntaggedAtom(i)),
        }
    }
    Ok((diffuse, concentrated))
}

pub fn tv_norm(mu: &SignedMeasure) -> f64 {
    mu.masses.iter().map(|m| m.abs()).sum()
}

/// Bounded test function with sup-norm at most 1 and Lipschitz constant at most 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TestFunction {
    Constant { value: f64 },
    /// `clamp(x[axis] - center, -1, 1)`.
    Ramp { axis: usize, center: f64 },
    /// `max(0, height - |x - center|)`, slope 1.
    Tent { center: Point, height: f64 },
    /// Arbitrary node values; bounds are checked pairwise over the node set.
    Sampled { values: Vec<f64> },
}

impl TestFunction {
    pub fn eval(&self, p: &Point) -> f64 {
        match self {
            TestFunction::Constant { value } => *value,
            TestFunction::Ramp { axis, center } => (p[*axis] - center).clamp(-1.0, 1.0),
            TestFunction::Tent { center, height } => (height - distance(p, center)).max(0.0),
            TestFunction::Sampled { .. } => panic!("sampled test functions are only defined on nodes"),
        }
    }

    fn values_on(&self, space: &StateSpace) -> Vec<f64> {
        match self {
            TestFunction::Sampled { values } => values.clone(),
            f => space.positions().iter().map(|p| f.eval(p)).collect(),
        }
    }
}

pub fn distance(a: &Point, b: &Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestDictionary {
    members: Vec<TestFunction>,
}

impl TestDictionary {
    pub fn new(members: Vec<TestFunction>, space: Option<&StateSpace>) -> Result<Self> {
        for (index, f) in members.iter().enumerate() {
            let bad = |reason: String| Err(Error::DictionaryBounds { index, reason });
            match f {
                TestFunction::Constant { value } if value.abs() > 1.0 => {
                    return bad(format!("|constant| = {} > 1", value.abs()))
                }
                TestFunction::Ramp { axis, .. } if *axis > 1 => return bad(format!("axis {axis} out of range")),
                TestFunction::Tent { height, .. } if !(0.0..=1.0).contains(height) => {
                    return bad(format!("tent height {height} outside [0,1]"))
                }
                TestFunction::Sampled { values } => {
                    let Some(space) = space else {
                        return bad("sampled function without a state space".into());
                    };
                    check_len(space.len(), values.len())?;
                    if let Some(v) = values.iter().find(|v| v.abs() > 1.0 + 1e-12) {
                        return bad(format!("sup norm {} > 1", v.abs()));
                    }
                    let pos = space.positions();
                    for i in 0..values.len() {
                        for j in 0..i {
                            if (values[i] - values[j]).abs() > distance(&pos[i], &pos[j]) + 1e-12 {
                                return bad(format!("Lipschitz bound fails between nodes {j} and {i}"));
                            }
                        }
                    }
                }
                _ => {}
            }
        }
        Ok(Self { members })
    }

    /// Constant 1, one ramp per axis through the domain midpoint, and slope-1
    /// tents on a coarse `(per_side + 1)^d` sub-grid of the domain box, in two
    /// heights (1 and the sub-grid spacing, capped at 1).
    pub fn standard(lower: Point, upper: Point, dim: usize, per_side: usize) -> Self {
        let per_side = per_side.max(1);
        let mut members = vec![TestFunction::Constant { value: 1.0 }];
        for axis in 0..dim {
            members.push(TestFunction::Ramp { axis, center: 0.5 * (lower[axis] + upper[axis]) });
        }
        let step: Vec<f64> = (0..2).map(|a| (upper[a] - lower[a]) / per_side as f64).collect();
        let small = step[..dim].iter().cloned().fold(f64::INFINITY, f64::min).min(1.0);
        let ny = if dim == 2 { per_side } else { 0 };
        for j in 0..=ny {
            for i in 0..=per_side {
                let center = [lower[0] + i as f64 * step[0], if dim == 2 { lower[1] + j as f64 * step[1] } else { 0.0 }];
                members.push(TestFunction::Tent { center, height: 1.0 });
                if small < 1.0 {
                    members.push(TestFunction::Tent { center, height: small });
                }
            }
        }
        Self { members }
    }

    pub fn default_for(space: &StateSpace) -> Self {
        let (lower, upper) = space.domain();
        Self::standard(lower, upper, space.dim(), 4)
    }

    pub fn members(&self) -> &[TestFunction] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Node values of every member, in dictionary order.
    pub fn evaluate(&self, space: &StateSpace) -> Vec<Vec<f64>> {
        self.members.iter().map(|f| f.values_on(space)).collect()
    }
}

/// Anything that can be integrated against a test function.
pub trait Pairing {
    fn pair_with(&self, f: &TestFunction) -> f64;
}

/// A node measure together with the positions it lives on.
#[derive(Debug, Clone, Copy)]
pub struct Located<'a> {
    pub measure: &'a SignedMeasure,
    pub space: &'a StateSpace,
}

impl Pairing for Located<'_> {
    fn pair_with(&self, f: &TestFunction) -> f64 {
        match f {
            TestFunction::Sampled { values } => self.measure.pair(values),
            f => self
                .measure
                .masses()
                .iter()
                .zip(self.space.positions())
                .filter(|(m, _)| **m != 0.0)
                .map(|(m, p)| m * f.eval(p))
                .sum(),
        }
    }
}

/// Finite atomic measure given by positions, independent of any mesh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomList {
    pub atoms: Vec<(Point, f64)>,
}

impl AtomList {
    pub fn abs(&self) -> Self {
        Self { atoms: self.atoms.iter().map(|&(p, m)| (p, m.abs())).collect() }
    }
}

impl Pairing for AtomList {
    fn pair_with(&self, f: &TestFunction) -> f64 {
        match f {
            TestFunction::Sampled { .. } => panic!("sampled test functions cannot be paired with free atoms"),
            f => self.atoms.iter().map(|(p, m)| m * f.eval(p)).sum(),
        }
    }
}

/// `max_{eta in dict} |<mu - nu, eta>|`.
pub fn bl_distance(mu: &dyn Pairing, nu: &dyn Pairing, dict: &TestDictionary) -> Result<f64> {
    if dict.is_empty() {
        return Err(Error::EmptyDictionary);
    }
    Ok(dict
        .members()
        .iter()
        .map(|f| (mu.pair_with(f) - nu.pair_with(f)).abs())
        .fold(0.0, f64::max))
}
