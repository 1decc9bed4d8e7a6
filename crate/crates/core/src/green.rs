//! Green operator `G = L^{-1}`, resolvents, capacities, excessive functions and
//! the optimal-stopping approximants of bounded test functions.
//!
//! The generator is realized as `A = -M^{-1} L` with `M = diag(m)`, so
//! `-A u = mu` is solved as `L u = masses(mu)`.

use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::lattice::DiscreteForm;
use crate::measures::SignedMeasure;
use crate::sparse::{dot, norm2, norm_inf, pcg, CsrMatrix, SkylineCholesky};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Relative residual bound `|L u - b| <= tolerance |b|`.
    pub tolerance: f64,
    /// Node count at and above which conjugate gradients replaces the direct factor.
    pub direct_threshold: usize,
    pub max_iterations: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { tolerance: 1e-10, direct_threshold: 5000, max_iterations: 100_000 }
    }
}

#[derive(Debug, Clone)]
enum Factor {
    Direct(SkylineCholesky),
    Iterative,
}

/// A factorized symmetric positive definite system.
#[derive(Debug, Clone)]
pub struct LinearSolver {
    matrix: CsrMatrix,
    factor: Factor,
    config: SolverConfig,
}

impl LinearSolver {
    pub fn new(matrix: CsrMatrix, config: SolverConfig) -> Result<Self> {
        let factor = if matrix.n() < config.direct_threshold {
            Factor::Direct(SkylineCholesky::factor(&matrix)?)
        } else {
            Factor::Iterative
        };
        Ok(Self { matrix, factor, config })
    }

    pub fn is_direct(&self) -> bool {
        matches!(self.factor, Factor::Direct(_))
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        check_len(self.matrix.n(), b.len())?;
        let b_norm = norm2(b);
        if b_norm == 0.0 {
            return Ok(vec![0.0; b.len()]);
        }
        match &self.factor {
            Factor::Direct(chol) => {
                let mut x = chol.solve(b);
                // iterative refinement if rounding left the residual above tolerance
                for _ in 0..2 {
                    let r: Vec<f64> = self.matrix.matvec(&x).iter().zip(b).map(|(ax, b)| b - ax).collect();
                    let rel = norm2(&r) / b_norm;
                    if rel <= self.config.tolerance {
                        return Ok(x);
                    }
                    let dx = chol.solve(&r);
                    x.iter_mut().zip(dx).for_each(|(x, d)| *x += d);
                }
                let r: Vec<f64> = self.matrix.matvec(&x).iter().zip(b).map(|(ax, b)| b - ax).collect();
                let rel = norm2(&r) / b_norm;
                if rel <= self.config.tolerance {
                    Ok(x)
                } else {
                    Err(Error::NoConvergence { iterations: 0, residual: rel })
                }
            }
            Factor::Iterative => pcg(&self.matrix, b, self.config.tolerance, self.config.max_iterations).map(|(x, _)| x),
        }
    }
}

/// Solve handle for the stiffness operator of a form.
#[derive(Debug, Clone)]
pub struct GreenOperator {
    form: Arc<DiscreteForm>,
    solver: LinearSolver,
}

impl GreenOperator {
    pub fn new(form: impl Into<Arc<DiscreteForm>>, config: SolverConfig) -> Result<Self> {
        let form = form.into();
        let solver = LinearSolver::new(form.stiffness().clone(), config)?;
        Ok(Self { form, solver })
    }

    pub fn with_defaults(form: impl Into<Arc<DiscreteForm>>) -> Result<Self> {
        Self::new(form, SolverConfig::default())
    }

    pub fn form(&self) -> &DiscreteForm {
        &self.form
    }

    pub fn form_arc(&self) -> Arc<DiscreteForm> {
        self.form.clone()
    }

    pub fn config(&self) -> SolverConfig {
        self.solver.config
    }

    pub fn is_direct(&self) -> bool {
        self.solver.is_direct()
    }

    /// `u = L^{-1} b` for a raw mass vector.
    pub fn solve(&self, masses: &[f64]) -> Result<Vec<f64>> {
        self.solver.solve(masses)
    }

    /// Potential `u(x) = sum_y G(x,y) mu({y})`.
    pub fn green_apply(&self, mu: &SignedMeasure) -> Result<Vec<f64>> {
        self.solve(mu.masses())
    }

    /// `R_alpha f`: solves `(alpha M + L) v = M f`.
    pub fn resolvent_apply(&self, alpha: f64, f: &[f64]) -> Result<Vec<f64>> {
        if !(alpha >= 0.0) {
            return Err(Error::InvalidArgument(format!("resolvent rate {alpha} must be nonnegative")));
        }
        check_len(self.form.len(), f.len())?;
        let m = self.form.weights();
        let rhs: Vec<f64> = f.iter().zip(m).map(|(f, m)| f * m).collect();
        if alpha == 0.0 {
            return self.solve(&rhs);
        }
        self.shifted(alpha)?.solve(&rhs)
    }

    /// Solver for `alpha M + L`.
    pub fn shifted(&self, alpha: f64) -> Result<LinearSolver> {
        let shift: Vec<f64> = self.form.weights().iter().map(|m| alpha * m).collect();
        LinearSolver::new(self.form.stiffness().add_diagonal(&shift), self.solver.config)
    }

    /// `G(x, y)` for all `x`, i.e. the potential of a unit mass at `y`.
    pub fn column(&self, y: usize) -> Result<Vec<f64>> {
        let mut e = vec![0.0; self.form.len()];
        e[y] = 1.0;
        self.solve(&e)
    }

    pub fn write_columns_csv<W: Write>(&self, columns: &[usize], mut w: W) -> Result<()> {
        let cols: Vec<Vec<f64>> = columns.iter().map(|&y| self.column(y)).collect::<Result<_>>()?;
        let header: Vec<String> = columns.iter().map(|y| format!("G_x_{y}")).collect();
        writeln!(w, "node,{}", header.join(","))?;
        for x in 0..self.form.len() {
            let row: Vec<String> = cols.iter().map(|c| format!("{:e}", c[x])).collect();
            writeln!(w, "{x},{}", row.join(","))?;
        }
        Ok(())
    }

    /// Smallest eigenvalue of `L` by power iteration on `G`.
    pub fn smallest_eigenvalue(&self, iterations: usize) -> Result<f64> {
        let n = self.form.len();
        let mut v: Vec<f64> = (0..n).map(|i| 1.0 + (i % 7) as f64 * 0.1).collect();
        let mut lambda = 0.0;
        for _ in 0..iterations {
            let norm = norm2(&v);
            v.iter_mut().for_each(|x| *x /= norm);
            let w = self.solve(&v)?;
            lambda = dot(&v, &w);
            v = w;
        }
        Ok(1.0 / lambda)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Capacity {
    pub capacity: f64,
    pub potential: Vec<f64>,
}

/// Capacity of a node set: `min E(u,u)` over `u = 1` on the set, attained by
/// the equilibrium potential (harmonic off the set).
pub fn capacity(green: &GreenOperator, set: &[usize]) -> Result<Capacity> {
    let form = green.form();
    let n = form.len();
    let mut in_set = vec![false; n];
    for &b in set {
        if b >= n {
            return Err(Error::InvalidArgument(format!("node {b} out of range")));
        }
        in_set[b] = true;
    }
    let free: Vec<usize> = (0..n).filter(|&i| !in_set[i]).collect();
    let mut potential: Vec<f64> = in_set.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    if set.is_empty() {
        return Ok(Capacity { capacity: 0.0, potential });
    }
    if !free.is_empty() {
        let l = form.stiffness();
        let rhs: Vec<f64> = free
            .iter()
            .map(|&i| -l.row(i).filter(|&(j, _)| in_set[j]).map(|(_, v)| v).sum::<f64>())
            .collect();
        let sub = LinearSolver::new(l.principal_submatrix(&free), green.config())?;
        let e = sub.solve(&rhs)?;
        for (&i, v) in free.iter().zip(e) {
            potential[i] = v;
        }
    }
    let capacity = crate::lattice::energy(form, &potential, &potential)?;
    Ok(Capacity { capacity, potential })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExcessiveCheck {
    pub excessive: bool,
    /// Node with the most negative value of `min(u, L u)`.
    pub witness: usize,
    pub min_value: f64,
    pub min_generator: f64,
}

/// Discrete excessivity: `u >= 0` and `L u >= 0` up to `tol`.
pub fn is_excessive(form: &DiscreteForm, u: &[f64], tol: f64) -> Result<ExcessiveCheck> {
    let lu = form.apply(u)?;
    let mut witness = 0;
    let mut worst = f64::INFINITY;
    for i in 0..u.len() {
        let v = u[i].min(lu[i]);
        if v < worst {
            worst = v;
            witness = i;
        }
    }
    let min_value = u.iter().cloned().fold(f64::INFINITY, f64::min);
    let min_generator = lu.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(ExcessiveCheck { excessive: min_value >= -tol && min_generator >= -tol, witness, min_value, min_generator })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObstacleConfig {
    pub relaxation: f64,
    /// Stop when the largest nodewise update is below `tolerance * scale`.
    pub tolerance: f64,
    pub max_sweeps: usize,
}

impl Default for ObstacleConfig {
    fn default() -> Self {
        Self { relaxation: 1.5, tolerance: 1e-12, max_sweeps: 1_000_000 }
    }
}

/// Value function of optimal stopping with reward `h` and running cost `n g`:
/// the solution of `v >= h`, `L v + n M g >= 0`, `(v - h)(L v + n M g) = 0`,
/// by projected successive over-relaxation.
///
/// The lower approximant is `-excessive_majorant(-h)`.
pub fn excessive_majorant(green: &GreenOperator, h: &[f64], n: f64, g: &[f64], config: ObstacleConfig) -> Result<Vec<f64>> {
    let form = green.form();
    check_len(form.len(), h.len())?;
    check_len(form.len(), g.len())?;
    if !(n >= 0.0) {
        return Err(Error::InvalidArgument(format!("penalty level {n} must be nonnegative")));
    }
    if let Some(i) = g.iter().position(|&x| !(x > 0.0)) {
        return Err(Error::InvalidArgument(format!("running cost weight g must be positive (node {i})")));
    }
    let l = form.stiffness();
    let rhs: Vec<f64> = g.iter().zip(form.weights()).map(|(g, m)| -n * m * g).collect();
    let diag = l.diagonal();
    let scale = norm_inf(h).max(1.0);
    let mut v = h.to_vec();
    for sweep in 0..config.max_sweeps {
        let mut largest: f64 = 0.0;
        for i in 0..v.len() {
            let off: f64 = l.row(i).filter(|&(j, _)| j != i).map(|(j, a)| a * v[j]).sum();
            let gs = (rhs[i] - off) / diag[i];
            let next = (v[i] + config.relaxation * (gs - v[i])).max(h[i]);
            largest = largest.max((next - v[i]).abs());
            v[i] = next;
        }
        if largest <= config.tolerance * scale {
            return Ok(v);
        }
        if sweep + 1 == config.max_sweeps {
            return Err(Error::NoConvergence { iterations: config.max_sweeps, residual: largest });
        }
    }
    Ok(v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityResiduals {
    /// `|<u, eta m> - <mu, R eta>|`
    pub duality: f64,
    /// `|<u, -A eta>_m - <mu, eta>|`
    pub very_weak: f64,
    /// `|R(-A eta) - eta|_inf`
    pub lemma: f64,
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialReport {
    pub entries: Vec<IdentityResiduals>,
    pub tolerance: f64,
    pub passed: bool,
}

/// Duality, very-weak and `R(-A eta) = eta` residuals for `u = G mu`, one
/// entry per test function.
pub fn verify_potential_identities(green: &GreenOperator, mu: &SignedMeasure, etas: &[Vec<f64>], tolerance: f64) -> Result<PotentialReport> {
    let form = green.form();
    let m = form.weights();
    let u = green.green_apply(mu)?;
    let mut entries = Vec::with_capacity(etas.len());
    for eta in etas {
        check_len(form.len(), eta.len())?;
        let r_eta = green.resolvent_apply(0.0, eta)?;
        let u_eta_m: f64 = u.iter().zip(eta).zip(m).map(|((u, e), m)| u * e * m).sum();
        let mu_r_eta = mu.pair(&r_eta);
        let l_eta = form.apply(eta)?;
        // <u, -A eta>_m = sum u m (M^{-1} L eta) = u . L eta
        let u_l_eta = dot(&u, &l_eta);
        let mu_eta = mu.pair(eta);
        // g = -A eta = M^{-1} L eta; R g solves L v = M g = L eta
        let g: Vec<f64> = l_eta.iter().zip(m).map(|(l, m)| l / m).collect();
        let back = green.resolvent_apply(0.0, &g)?;
        let lemma = back.iter().zip(eta).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let scale = [1.0, u_eta_m.abs(), mu_r_eta.abs(), u_l_eta.abs(), mu_eta.abs(), norm_inf(eta)]
            .into_iter()
            .fold(0.0, f64::max);
        entries.push(IdentityResiduals {
            duality: (u_eta_m - mu_r_eta).abs(),
            very_weak: (u_l_eta - mu_eta).abs(),
            lemma,
            scale,
        });
    }
    let passed = entries
        .iter()
        .all(|e| e.duality <= tolerance * e.scale && e.very_weak <= tolerance * e.scale && e.lemma <= tolerance * e.scale);
    Ok(PotentialReport { entries, tolerance, passed })
}

/// `|R_a f - R_b f - (b - a) R_a R_b f|_inf`.
pub fn resolvent_identity_residual(green: &GreenOperator, a: f64, b: f64, f: &[f64]) -> Result<f64> {
    let ra = green.resolvent_apply(a, f)?;
    let rb = green.resolvent_apply(b, f)?;
    let rarb = green.resolvent_apply(a, &rb)?;
    Ok(ra
        .iter()
        .zip(&rb)
        .zip(&rarb)
        .map(|((x, y), z)| (x - y - (b - a) * z).abs())
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_local_form, Conductance, LocalGrid};
    use crate::measures::Tag;

    fn p3() -> GreenOperator {
        let f = build_local_form(&LocalGrid { dim: 1, n_per_side: 3, lower: 0.0, upper: 4.0, conductance: Conductance::Uniform(1.0) })
            .unwrap();
        GreenOperator::with_defaults(f).unwrap()
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn green_apply_p3() {
        let g = p3();
        let delta = SignedMeasure::dirac(3, 1, 1.0, Tag::Concentrated);
        let u = g.green_apply(&delta).unwrap();
        assert!(close(&u, &[0.5, 1.0, 0.5], 1e-14));
        assert_eq!(g.green_apply(&SignedMeasure::zero(3)).unwrap(), vec![0.0; 3]);
        let u2 = g.green_apply(&delta.scaled(2.0)).unwrap();
        assert!(close(&u2, &[1.0, 2.0, 1.0], 1e-14));
    }

    #[test]
    fn resolvent_approximates_identity() {
        let g = p3();
        let f = [0.3, -1.0, 2.0];
        let errs: Vec<f64> = [1e2, 1e4, 1e6]
            .iter()
            .map(|&a| {
                let r = g.resolvent_apply(a, &f).unwrap();
                r.iter().zip(&f).map(|(r, f)| (a * r - f).abs()).fold(0.0, f64::max)
            })
            .collect();
        assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
        assert!(g.resolvent_apply(-1.0, &f).is_err());
    }

    #[test]
    fn lemma_r_of_generator() {
        let g = p3();
        let eta = [1.0, 2.0, 1.0];
        let l_eta = g.form().apply(&eta).unwrap();
        let gen: Vec<f64> = l_eta.iter().zip(g.form().weights()).map(|(l, m)| l / m).collect();
        let back = g.resolvent_apply(0.0, &gen).unwrap();
        assert!(close(&back, &eta, 1e-10));
    }

    #[test]
    fn resolvent_identity_holds() {
        let g = p3();
        assert!(resolvent_identity_residual(&g, 1.0, 2.0, &[1.0, -0.5, 0.25]).unwrap() < 1e-10);
    }

    #[test]
    fn capacity_examples() {
        let g = p3();
        let c = capacity(&g, &[1]).unwrap();
        assert!(close(&c.potential, &[0.5, 1.0, 0.5], 1e-14));
        assert!((c.capacity - 1.0).abs() < 1e-14);
        assert_eq!(capacity(&g, &[]).unwrap().capacity, 0.0);
        let c12 = capacity(&g, &[0, 1]).unwrap();
        let c1 = capacity(&g, &[0]).unwrap();
        assert!(c1.capacity <= c12.capacity);
        let all = capacity(&g, &[0, 1, 2]).unwrap();
        assert!((all.capacity - 2.0).abs() < 1e-14);
    }

    #[test]
    fn excessive_examples() {
        let g = p3();
        let f = g.form();
        assert!(is_excessive(f, &[0.5, 1.0, 0.5], 1e-12).unwrap().excessive);
        assert!(is_excessive(f, &[1.0, 1.0, 1.0], 1e-12).unwrap().excessive);
        let bad = is_excessive(f, &[-1.0, 0.0, 0.0], 1e-12).unwrap();
        assert!(!bad.excessive);
        assert_eq!(bad.witness, 0);
    }

    #[test]
    fn reduite_on_p3() {
        let g = p3();
        let v = excessive_majorant(&g, &[1.0, 0.0, 0.0], 0.0, &[1.0; 3], ObstacleConfig::default()).unwrap();
        assert!(close(&v, &[1.0, 2.0 / 3.0, 1.0 / 3.0], 1e-10), "{v:?}");
    }

    #[test]
    fn huge_penalty_returns_obstacle() {
        let g = p3();
        let h = [1.0, 0.0, -0.5];
        let v = excessive_majorant(&g, &h, 1e9, &[1.0; 3], ObstacleConfig::default()).unwrap();
        assert!(close(&v, &h, 1e-6));
    }

    #[test]
    fn excessive_obstacle_is_fixed() {
        let g = p3();
        let h = [0.5, 1.0, 0.5];
        for n in [0.0, 1.0, 10.0] {
            let v = excessive_majorant(&g, &h, n, &[1.0; 3], ObstacleConfig::default()).unwrap();
            assert!(close(&v, &h, 1e-12));
        }
    }

    #[test]
    fn majorant_rejects_nonpositive_g() {
        let g = p3();
        assert!(excessive_majorant(&g, &[0.0; 3], 1.0, &[1.0, 0.0, 1.0], ObstacleConfig::default()).is_err());
    }

    #[test]
    fn potential_identities_p3() {
        let g = p3();
        let delta = SignedMeasure::dirac(3, 1, 1.0, Tag::Concentrated);
        let r1 = g.resolvent_apply(0.0, &[1.0; 3]).unwrap();
        assert!(close(&r1, &[1.5, 2.0, 1.5], 1e-14));
        let rep = verify_potential_identities(&g, &delta, &[vec![1.0; 3]], 1e-10).unwrap();
        assert!(rep.passed);
        let rep0 = verify_potential_identities(&g, &SignedMeasure::zero(3), &[vec![1.0; 3]], 1e-10).unwrap();
        assert_eq!(rep0.entries[0].duality, 0.0);
        assert_eq!(rep0.entries[0].very_weak, 0.0);
    }

    #[test]
    fn smallest_eigenvalue_p3() {
        let g = p3();
        let lam = g.smallest_eigenvalue(200).unwrap();
        assert!((lam - (2.0 - 2f64.sqrt())).abs() < 1e-10);
    }

    #[test]
    fn iterative_path_matches_direct() {
        let f = build_local_form(&LocalGrid { dim: 2, n_per_side: 10, lower: 0.0, upper: 1.0, conductance: Conductance::Uniform(1.0) })
            .unwrap();
        let direct = GreenOperator::with_defaults(f.clone()).unwrap();
        let iterative = GreenOperator::new(f, SolverConfig { direct_threshold: 1, ..SolverConfig::default() }).unwrap();
        assert!(direct.is_direct() && !iterative.is_direct());
        let b: Vec<f64> = (0..100).map(|i| (i % 9) as f64 * 0.01).collect();
        let a = direct.solve(&b).unwrap();
        let c = iterative.solve(&b).unwrap();
        assert!(close(&a, &c, 1e-8));
    }

    #[test]
    fn green_columns_csv() {
        let g = p3();
        let mut buf = Vec::new();
        g.write_columns_csv(&[1], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "node,G_x_1");
        assert_eq!(text.lines().count(), 4);
    }
}
