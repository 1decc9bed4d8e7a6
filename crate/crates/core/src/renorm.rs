//! Truncations `T_k(u)`, the residual measures `nu_k`, the jump measures
//! `j_a(u)` and the diagnostics built on them.
//!
//! For `u = G mu` the weak identity `E(T_k u, eta) = <mu_d, eta> + <nu_k, eta>`
//! defines `nu_k = L T_k(u) - mu_d`. On a finite chain every edge is a jump, so
//! `lambda_a = j_a` and
//!
//! ```text
//! nu_k = -1_{u > k or u <= -k} mu_d + (j_k - j_{-k}) / 2
//! ```
//!
//! holds exactly whenever `mu_c` is carried by `{|u| > k}`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::green::{capacity, GreenOperator, SolverConfig};
use crate::lattice::{
    build_fractional_form, build_local_form, energy, energy_part, extended_energy, Conductance, DiscreteForm, EnergyPart,
    FractionalInterval, LevelFunction, LocalGrid, Point,
};
use crate::measures::{bl_distance, decompose, tv_norm, AtomList, Located, SignedMeasure, Tag, TestDictionary};
use crate::sparse::norm_inf;

/// `sign(x) = 1` for `x > 0` and `-1` otherwise (including zero).
pub fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// Convexity gap `|v - k| - |w - k| - sign(w - k)(v - w)` of `|. - k|` at `w`,
/// evaluated as `2 (k - v)^+` for `w > k` and `2 (v - k)^+` otherwise.
pub fn convexity_gap(w: f64, v: f64, k: f64) -> f64 {
    if w > k {
        2.0 * (k - v).max(0.0)
    } else {
        2.0 * (v - k).max(0.0)
    }
}

pub fn truncate(u: &[f64], k: f64) -> Result<Vec<f64>> {
    if !(k >= 0.0) {
        return Err(Error::NegativeLevel(k));
    }
    Ok(u.iter().map(|&x| x.clamp(-k, k)).collect())
}

/// `nu_k = L T_k(u) - mu_d`.
pub fn extract_nu(form: &DiscreteForm, u: &[f64], mu_d: &SignedMeasure, k: f64) -> Result<SignedMeasure> {
    check_len(form.len(), mu_d.len())?;
    let lt = form.apply(&truncate(u, k)?)?;
    Ok(SignedMeasure::untagged(lt.iter().zip(mu_d.masses()).map(|(a, b)| a - b).collect()))
}

/// Jump measure at level `a`:
///
/// ```text
/// j_a(x) = sum_y 2 J(x,y) (|u(y)-a| - |u(x)-a| - sign(u(x)-a) (u(y)-u(x)))
///        + kappa(x) (1_{u(x)>a} (|a|+a) + 1_{u(x)<=a} (|a|-a))
/// ```
///
/// Every summand is a convexity gap of `|. - a|`, so `j_a >= 0`; the killing
/// term is the gap against the cemetery value 0.
pub fn jump_lambda(form: &DiscreteForm, u: &[f64], a: f64) -> Result<SignedMeasure> {
    check_len(form.len(), u.len())?;
    let masses = (0..form.len())
        .map(|x| {
            let kernel: f64 = form.neighbors(x).iter().map(|nb| 2.0 * nb.jump * convexity_gap(u[x], u[nb.node], a)).sum();
            kernel + form.kappa()[x] * convexity_gap(u[x], 0.0, a)
        })
        .collect();
    Ok(SignedMeasure::untagged(masses))
}

/// `lambda_a = l_a + j_a` over a schedule of levels. The local part is zero on
/// lattices; it is only realized by the continuum oracles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaFamily {
    pub levels: Vec<f64>,
    pub jump: Vec<SignedMeasure>,
    pub local: Vec<SignedMeasure>,
}

impl LambdaFamily {
    pub fn compute(form: &DiscreteForm, u: &[f64], levels: &[f64]) -> Result<Self> {
        let jump = levels.iter().map(|&a| jump_lambda(form, u, a)).collect::<Result<Vec<_>>>()?;
        let local = levels.iter().map(|_| SignedMeasure::zero(form.len())).collect();
        Ok(Self { levels: levels.to_vec(), jump, local })
    }

    pub fn lambda(&self, i: usize) -> SignedMeasure {
        let m = self.jump[i].masses().iter().zip(self.local[i].masses()).map(|(a, b)| a + b).collect();
        SignedMeasure::untagged(m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StructureResiduals {
    /// `|nu_k - (-1_{u>k or u<=-k} mu_d + (j_k - j_{-k})/2)|_TV`
    pub nu_identity: f64,
    /// `|L(u^+ ^ k) - (1_{0<u<=k} mu_d + j_k/2 - j_0/2)|_TV`
    pub positive_part: f64,
    /// `|L(u^- ^ k) - (-1_{-k<u<=0} mu_d + j_{-k}/2 - j_0/2)|_TV`
    pub negative_part: f64,
    /// TV of `mu_c` on `{|u| <= k}`; the identities assume this is zero.
    pub concentrated_below_level: f64,
    pub scale: f64,
}

impl StructureResiduals {
    pub fn max(&self) -> f64 {
        self.nu_identity.max(self.positive_part).max(self.negative_part)
    }

    pub fn within(&self, tolerance: f64) -> bool {
        self.max() <= tolerance * self.scale
    }
}

fn tv_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

pub fn structure_check(form: &DiscreteForm, u: &[f64], mu: &SignedMeasure, k: f64) -> Result<StructureResiduals> {
    check_len(form.len(), u.len())?;
    if !(k > 0.0) {
        return Err(Error::InvalidArgument(format!("structure check needs k > 0, got {k}")));
    }
    let (mu_d, mu_c) = decompose(mu)?;
    let d = mu_d.masses();
    let nu = extract_nu(form, u, &mu_d, k)?;
    let jk = jump_lambda(form, u, k)?;
    let jmk = jump_lambda(form, u, -k)?;
    let j0 = jump_lambda(form, u, 0.0)?;
    let (jk, jmk, j0) = (jk.masses(), jmk.masses(), j0.masses());

    let n = form.len();
    let predicted_nu: Vec<f64> = (0..n)
        .map(|x| {
            let outside = u[x] > k || u[x] <= -k;
            -(if outside { d[x] } else { 0.0 }) + 0.5 * (jk[x] - jmk[x])
        })
        .collect();

    let pos: Vec<f64> = u.iter().map(|&x| x.max(0.0).min(k)).collect();
    let neg: Vec<f64> = u.iter().map(|&x| (-x).max(0.0).min(k)).collect();
    let l_pos = form.apply(&pos)?;
    let l_neg = form.apply(&neg)?;
    let predicted_pos: Vec<f64> = (0..n)
        .map(|x| (if u[x] > 0.0 && u[x] <= k { d[x] } else { 0.0 }) + 0.5 * jk[x] - 0.5 * j0[x])
        .collect();
    let predicted_neg: Vec<f64> = (0..n)
        .map(|x| -(if u[x] > -k && u[x] <= 0.0 { d[x] } else { 0.0 }) + 0.5 * jmk[x] - 0.5 * j0[x])
        .collect();

    let concentrated_below_level = (0..n).filter(|&x| u[x].abs() <= k).map(|x| mu_c.masses()[x].abs()).sum();
    let scale = [1.0, tv_norm(mu), tv_norm(&nu), jk.iter().sum::<f64>(), j0.iter().sum::<f64>()]
        .into_iter()
        .fold(0.0, f64::max);
    Ok(StructureResiduals {
        nu_identity: tv_diff(nu.masses(), &predicted_nu),
        positive_part: tv_diff(&l_pos, &predicted_pos),
        negative_part: tv_diff(&l_neg, &predicted_neg),
        concentrated_below_level,
        scale,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncationRecord {
    pub k: f64,
    pub nu: SignedMeasure,
    pub tv: f64,
    pub bl_to_mu_c: f64,
    /// Distance between `|nu_k|` and `|mu_c|`.
    pub bl_abs_to_mu_c: f64,
    pub structure: StructureResiduals,
    /// `<j_k / 2, 1>`
    pub half_jump_total: f64,
    /// `E(u, T_{k+1} u - T_k u)`
    pub aab_energy: f64,
    /// `E(T_k u, T_k u)`
    pub truncation_energy: f64,
    /// `sum J (u(x)-u(y)) (T_k u(x) - T_k u(y))`, bounded by `k |mu|_TV`.
    pub cross_energy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncationReport {
    pub mesh: Option<String>,
    pub k_schedule: Vec<f64>,
    pub mu_tv: f64,
    pub mu_c_tv: f64,
    pub records: Vec<TruncationRecord>,
}

impl TruncationReport {
    pub fn tv_nonincreasing(&self, slack: f64) -> bool {
        self.records.windows(2).all(|w| w[1].tv <= w[0].tv + slack)
    }

    pub fn truncation_energy_nondecreasing(&self, slack: f64) -> bool {
        self.records.windows(2).all(|w| w[1].truncation_energy >= w[0].truncation_energy - slack)
    }

    pub fn cross_energy_bounded(&self, slack: f64) -> bool {
        self.records.iter().all(|r| r.cross_energy <= r.k * self.mu_tv + slack)
    }

    pub fn max_structure_residual(&self) -> f64 {
        self.records.iter().map(|r| r.structure.max()).fold(0.0, f64::max)
    }
}

pub fn validate_schedule(k_schedule: &[f64]) -> Result<()> {
    if k_schedule.iter().any(|k| !(*k > 0.0)) {
        return Err(Error::InvalidArgument("k schedule entries must be positive".into()));
    }
    if k_schedule.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument("k schedule must be strictly increasing".into()));
    }
    Ok(())
}

pub fn verify_renormalized(
    form: &DiscreteForm,
    u: &[f64],
    mu: &SignedMeasure,
    k_schedule: &[f64],
    dict: &TestDictionary,
) -> Result<TruncationReport> {
    validate_schedule(k_schedule)?;
    let (mu_d, mu_c) = decompose(mu)?;
    let space = form.space();
    let mu_c_abs = mu_c.abs();
    let mu_tv = tv_norm(mu);
    let records = k_schedule
        .par_iter()
        .map(|&k| -> Result<TruncationRecord> {
            let nu = extract_nu(form, u, &mu_d, k)?;
            let nu_abs = nu.abs();
            let tk = truncate(u, k)?;
            let tk1 = truncate(u, k + 1.0)?;
            let phi: Vec<f64> = tk1.iter().zip(&tk).map(|(a, b)| a - b).collect();
            let jk = jump_lambda(form, u, k)?;
            let no_kill = energy_part(form, u, &tk, EnergyPart::Local) + energy_part(form, u, &tk, EnergyPart::Jump);
            Ok(TruncationRecord {
                k,
                tv: tv_norm(&nu),
                bl_to_mu_c: bl_distance(&Located { measure: &nu, space }, &Located { measure: &mu_c, space }, dict)?,
                bl_abs_to_mu_c: bl_distance(
                    &Located { measure: &nu_abs, space },
                    &Located { measure: &mu_c_abs, space },
                    dict,
                )?,
                structure: structure_check(form, u, mu, k)?,
                half_jump_total: 0.5 * jk.total(),
                aab_energy: energy(form, u, &phi)?,
                truncation_energy: energy(form, &tk, &tk)?,
                cross_energy: no_kill,
                nu,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TruncationReport { mesh: None, k_schedule: k_schedule.to_vec(), mu_tv, mu_c_tv: tv_norm(&mu_c), records })
}

/// Discretization family for a refinement study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RefinementSetting {
    Local1d { lower: f64, upper: f64 },
    Local2d { lower: f64, upper: f64 },
    Fractional1d { lower: f64, upper: f64, alpha: f64, c: f64 },
}

impl RefinementSetting {
    /// Whether single points lose capacity as the mesh is refined.
    pub fn points_have_vanishing_capacity(&self) -> bool {
        match self {
            RefinementSetting::Local1d { .. } => false,
            RefinementSetting::Local2d { .. } => true,
            RefinementSetting::Fractional1d { alpha, .. } => *alpha <= 0.5,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            RefinementSetting::Local2d { .. } => 2,
            _ => 1,
        }
    }

    pub fn domain(&self) -> (Point, Point) {
        match *self {
            RefinementSetting::Local2d { lower, upper } => ([lower; 2], [upper; 2]),
            RefinementSetting::Local1d { lower, upper } | RefinementSetting::Fractional1d { lower, upper, .. } => {
                ([lower, 0.0], [upper, 0.0])
            }
        }
    }

    /// Builds the form for one mesh; `resolution` is nodes per side (local)
    /// or cells (fractional).
    pub fn build(&self, resolution: usize) -> Result<DiscreteForm> {
        match *self {
            RefinementSetting::Local1d { lower, upper } => {
                build_local_form(&LocalGrid { dim: 1, n_per_side: resolution, lower, upper, conductance: Conductance::Uniform(1.0) })
            }
            RefinementSetting::Local2d { lower, upper } => {
                build_local_form(&LocalGrid { dim: 2, n_per_side: resolution, lower, upper, conductance: Conductance::Uniform(1.0) })
            }
            RefinementSetting::Fractional1d { lower, upper, alpha, c } => {
                build_fractional_form(&FractionalInterval { lower, upper, n: resolution, alpha, c })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementSpec {
    pub setting: RefinementSetting,
    /// Increasing resolutions (finer meshes later).
    pub resolutions: Vec<usize>,
    /// Concentrated atoms, by position.
    pub atoms: Vec<(Point, f64)>,
    /// `k_h = theta * sup u_h`.
    pub theta: f64,
    pub dictionary_per_side: usize,
    pub solver: SolverConfig,
    /// Relative slack for monotone trends.
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshRecord {
    pub resolution: usize,
    pub spacing: f64,
    pub nodes: usize,
    pub sup_u: f64,
    pub k: f64,
    pub bl_to_mu_c: f64,
    pub bl_abs_to_mu_c: f64,
    pub nu_tv: f64,
    pub nu_total: f64,
    pub atom_capacity: f64,
    pub snap_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementReport {
    pub meshes: Vec<MeshRecord>,
    pub mu_c_tv: f64,
    pub bl_monotone: bool,
    pub capacity_decreasing: bool,
}

/// Solves each mesh with the atoms snapped to their nearest nodes and records
/// `nu_{k_h}` against the continuum atom list.
pub fn refinement_study(spec: &RefinementSpec) -> Result<RefinementReport> {
    if !spec.setting.points_have_vanishing_capacity() {
        return Err(Error::Refused(
            "points keep positive capacity in this setting (1D local, or fractional with alpha > 1/2), \
             so a concentrated atom cannot be told apart from diffuse data under refinement"
                .into(),
        ));
    }
    if spec.atoms.is_empty() {
        return Err(Error::InvalidArgument("refinement study needs at least one concentrated atom".into()));
    }
    if spec.resolutions.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("resolutions must be strictly increasing".into()));
    }
    if !(spec.theta > 0.0 && spec.theta < 1.0) {
        return Err(Error::InvalidArgument(format!("theta = {} outside (0,1)", spec.theta)));
    }
    let (lower, upper) = spec.setting.domain();
    let dict = TestDictionary::standard(lower, upper, spec.setting.dim(), spec.dictionary_per_side);
    let target = AtomList { atoms: spec.atoms.clone() };
    let target_abs = target.abs();
    let mut meshes = Vec::with_capacity(spec.resolutions.len());
    for &res in &spec.resolutions {
        let form = spec.setting.build(res)?;
        let n = form.len();
        let mut mu = SignedMeasure::zero(n);
        let mut atom_nodes = Vec::new();
        let mut snap_distance: f64 = 0.0;
        for (p, mass) in &spec.atoms {
            let (node, dist) = form.space().nearest(p);
            snap_distance = snap_distance.max(dist);
            mu.add_atom(node, *mass, Tag::Concentrated);
            atom_nodes.push(node);
        }
        let spacing = form.space().spacing();
        let green = GreenOperator::new(form, spec.solver)?;
        let form = green.form();
        let u = green.green_apply(&mu)?;
        let sup_u = norm_inf(&u);
        let k = spec.theta * sup_u;
        let nu = extract_nu(form, &u, &SignedMeasure::zero(n), k)?;
        let nu_abs = nu.abs();
        let located = Located { measure: &nu, space: form.space() };
        let located_abs = Located { measure: &nu_abs, space: form.space() };
        atom_nodes.sort_unstable();
        atom_nodes.dedup();
        meshes.push(MeshRecord {
            resolution: res,
            spacing,
            nodes: n,
            sup_u,
            k,
            bl_to_mu_c: bl_distance(&located, &target, &dict)?,
            bl_abs_to_mu_c: bl_distance(&located_abs, &target_abs, &dict)?,
            nu_tv: tv_norm(&nu),
            nu_total: nu.total(),
            atom_capacity: capacity(&green, &atom_nodes)?.capacity,
            snap_distance,
        });
    }
    let slack = 1.0 + spec.slack;
    let bl_monotone = meshes.windows(2).all(|w| w[1].bl_to_mu_c <= slack * w[0].bl_to_mu_c);
    let capacity_decreasing = meshes.windows(2).all(|w| w[1].atom_capacity < w[0].atom_capacity);
    let mu_c_tv = spec.atoms.iter().map(|(_, m)| m.abs()).sum();
    Ok(RefinementReport { meshes, mu_c_tv, bl_monotone, capacity_decreasing })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AabEntry {
    pub h: String,
    pub eta: usize,
    pub residual: f64,
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AabReport {
    pub entries: Vec<AabEntry>,
    /// `(k, E(u, Phi_k(u)))` with `Phi_k = T_{k+1} - T_k`.
    pub phi_energies: Vec<(f64, f64)>,
    pub tolerance: f64,
    pub identity_passed: bool,
    pub phi_nonincreasing: bool,
    /// `E(u, Phi_k(u)) = 0` for every scheduled `k >= |u|_inf`.
    pub phi_vanishes: bool,
}

impl AabReport {
    pub fn passed(&self) -> bool {
        self.identity_passed && self.phi_nonincreasing && self.phi_vanishes
    }
}

/// Checks `E(u, h(u) eta) = <mu, h(u) eta>` for every `h` and `eta`, and the
/// decay of `E(u, Phi_k(u))` along the schedule. Only for diffuse data.
pub fn verify_aab(
    form: &DiscreteForm,
    u: &[f64],
    mu: &SignedMeasure,
    hs: &[LevelFunction],
    etas: &[Vec<f64>],
    k_schedule: &[f64],
    tolerance: f64,
) -> Result<AabReport> {
    validate_schedule(k_schedule)?;
    let (_, mu_c) = decompose(mu)?;
    if tv_norm(&mu_c) > 0.0 {
        return Err(Error::Refused("this renormalization is only defined for diffuse data; mu has a concentrated part".into()));
    }
    let mut entries = Vec::new();
    for h in hs {
        let hu: Vec<f64> = u.iter().map(|&s| h.eval(s)).collect();
        for (i, eta) in etas.iter().enumerate() {
            let lhs = extended_energy(form, u, h, eta)?;
            let test: Vec<f64> = hu.iter().zip(eta).map(|(a, b)| a * b).collect();
            let rhs = mu.pair(&test);
            let scale = 1f64.max(lhs.abs()).max(rhs.abs()).max(tv_norm(mu) * norm_inf(&test));
            entries.push(AabEntry { h: h.name().to_string(), eta: i, residual: (lhs - rhs).abs(), scale });
        }
    }
    let sup = norm_inf(u);
    let phi_energies = k_schedule
        .iter()
        .map(|&k| -> Result<(f64, f64)> {
            let phi: Vec<f64> = truncate(u, k + 1.0)?.iter().zip(truncate(u, k)?).map(|(a, b)| a - b).collect();
            Ok((k, energy(form, u, &phi)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let e_scale = phi_energies.iter().map(|(_, e)| e.abs()).fold(1.0, f64::max);
    let phi_nonincreasing = phi_energies.windows(2).all(|w| w[1].1 <= w[0].1 + tolerance * e_scale);
    let phi_vanishes = phi_energies.iter().filter(|(k, _)| *k >= sup).all(|(_, e)| *e == 0.0);
    let identity_passed = entries.iter().all(|e| e.residual <= tolerance * e.scale);
    Ok(AabReport { entries, phi_energies, tolerance, identity_passed, phi_nonincreasing, phi_vanishes })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SemilinearConfig {
    /// Initial step along the fixed-point direction; halved until the residual decreases.
    pub damping: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SemilinearConfig {
    fn default() -> Self {
        Self { damping: 0.5, tolerance: 1e-12, max_iterations: 20_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemilinearSolution {
    pub u: Vec<f64>,
    pub iterations: usize,
    /// `|L u - m f(u) - mu|_inf`
    pub residual: f64,
}

/// Nonlinearity `f(x, u)`, nonincreasing in `u`.
pub type Nonlinearity<'a> = &'a (dyn Fn(usize, f64) -> f64 + Sync);

fn semilinear_residual(green: &GreenOperator, f: Nonlinearity, mu: &SignedMeasure, u: &[f64]) -> Result<Vec<f64>> {
    let form = green.form();
    let lu = form.apply(u)?;
    Ok((0..u.len()).map(|x| lu[x] - form.weights()[x] * f(x, u[x]) - mu.masses()[x]).collect())
}

/// Damped fixed-point iteration `u <- G(mu + m f(u))` for `-A u = f(., u) + mu`.
///
/// The step `d = G(mu + m f(u)) - u = -G R(u)` is a descent direction for the
/// merit `R^T G R`; steps start at `damping` and are halved until the merit decreases.
pub fn solve_semilinear(
    green: &GreenOperator,
    f: Nonlinearity,
    mu: &SignedMeasure,
    initial: &[f64],
    config: SemilinearConfig,
) -> Result<SemilinearSolution> {
    check_len(green.form().len(), initial.len())?;
    check_len(green.form().len(), mu.len())?;
    let scale = 1f64.max(tv_norm(mu));
    let mut u = initial.to_vec();
    let mut r = semilinear_residual(green, f, mu, &u)?;
    let mut d: Vec<f64> = green.solve(&r)?.into_iter().map(|x| -x).collect();
    let mut merit = -crate::sparse::dot(&r, &d);
    for it in 0..config.max_iterations {
        let res = norm_inf(&r);
        let step = norm_inf(&d);
        if res <= config.tolerance * scale && step <= config.tolerance * 1f64.max(norm_inf(&u)) {
            return Ok(SemilinearSolution { u, iterations: it, residual: res });
        }
        let mut theta = config.damping;
        loop {
            let trial: Vec<f64> = u.iter().zip(&d).map(|(u, d)| u + theta * d).collect();
            let r_trial = semilinear_residual(green, f, mu, &trial)?;
            let d_trial: Vec<f64> = green.solve(&r_trial)?.into_iter().map(|x| -x).collect();
            let merit_trial = -crate::sparse::dot(&r_trial, &d_trial);
            if merit_trial < merit {
                u = trial;
                r = r_trial;
                d = d_trial;
                merit = merit_trial;
                break;
            }
            theta *= 0.5;
            if theta < 1e-12 {
                // no further decrease is representable; accept if the residual is already small
                if res <= 1e3 * config.tolerance * scale {
                    return Ok(SemilinearSolution { u, iterations: it, residual: res });
                }
                return Err(Error::NoConvergence { iterations: it, residual: res });
            }
        }
    }
    Err(Error::NoConvergence { iterations: config.max_iterations, residual: norm_inf(&r) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniquenessWitness {
    pub from_zero: SemilinearSolution,
    pub from_potential: SemilinearSolution,
    pub max_difference: f64,
}

/// Solves from `u0 = 0` and from `u0 = G mu` and compares the limits.
pub fn semilinear_uniqueness(green: &GreenOperator, f: Nonlinearity, mu: &SignedMeasure, config: SemilinearConfig) -> Result<UniquenessWitness> {
    let zero = vec![0.0; green.form().len()];
    let potential = green.green_apply(mu)?;
    let from_zero = solve_semilinear(green, f, mu, &zero, config)?;
    let from_potential = solve_semilinear(green, f, mu, &potential, config)?;
    let max_difference = from_zero.u.iter().zip(&from_potential.u).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    Ok(UniquenessWitness { from_zero, from_potential, max_difference })
}
