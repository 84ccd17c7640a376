//! Convex programs with linear and convex quadratic constraints, solved by
//! lowering to second-order cones and running a primal-dual interior-point
//! method.
//!
//! A quadratic constraint `‖F z + f‖² + qᵀz ≤ r` becomes the rotated cone
//! `‖(2(F z + f), t − 1)‖ ≤ t + 1` with `t = r − qᵀz`, or the plain cone
//! `‖F z + f‖ ≤ √r` when `q = 0`. A squared-norm objective term is moved
//! into an epigraph variable.

mod dump;
mod ipm;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use dump::{parse_program, write_program};

/// `‖F z + f‖²`.
#[derive(Debug, Clone, PartialEq)]
pub struct SquaredNorm {
    pub matrix: DMatrix<f64>,
    pub offset: DVector<f64>,
}

impl SquaredNorm {
    pub fn new(matrix: DMatrix<f64>, offset: DVector<f64>) -> Result<Self> {
        if matrix.nrows() != offset.len() {
            return Err(Error::Dimension(format!(
                "{} rows but offset of length {}",
                matrix.nrows(),
                offset.len()
            )));
        }
        Ok(Self { matrix, offset })
    }

    pub fn residual(&self, z: &DVector<f64>) -> DVector<f64> {
        &self.matrix * z + &self.offset
    }

    pub fn value(&self, z: &DVector<f64>) -> f64 {
        self.residual(z).norm_squared()
    }

    pub fn gradient(&self, z: &DVector<f64>) -> DVector<f64> {
        self.matrix.tr_mul(&self.residual(z)) * 2.0
    }

    fn hessian(&self) -> DMatrix<f64> {
        self.matrix.tr_mul(&self.matrix) * 2.0
    }

    fn finite(&self) -> bool {
        self.matrix.iter().chain(self.offset.iter()).all(|v| v.is_finite())
    }
}

/// One inequality `g(z) ≤ 0`.
#[derive(Debug, Clone, PartialEq)]
pub enum Constraint {
    /// `aᵀz ≤ b`
    Linear { coeffs: DVector<f64>, bound: f64 },
    /// `‖F z + f‖² + qᵀz ≤ r`
    Quadratic {
        norm: SquaredNorm,
        coeffs: DVector<f64>,
        bound: f64,
    },
}

impl Constraint {
    pub fn linear(coeffs: Vec<f64>, bound: f64) -> Self {
        Constraint::Linear {
            coeffs: DVector::from_vec(coeffs),
            bound,
        }
    }

    pub fn quadratic(norm: SquaredNorm, coeffs: Vec<f64>, bound: f64) -> Self {
        Constraint::Quadratic {
            norm,
            coeffs: DVector::from_vec(coeffs),
            bound,
        }
    }

    fn num_vars(&self) -> usize {
        match self {
            Constraint::Linear { coeffs, .. } | Constraint::Quadratic { coeffs, .. } => coeffs.len(),
        }
    }

    pub fn bound(&self) -> f64 {
        match self {
            Constraint::Linear { bound, .. } | Constraint::Quadratic { bound, .. } => *bound,
        }
    }

    /// `lhs − bound`; positive values are violations.
    pub fn value(&self, z: &DVector<f64>) -> f64 {
        match self {
            Constraint::Linear { coeffs, bound } => coeffs.dot(z) - bound,
            Constraint::Quadratic {
                norm,
                coeffs,
                bound,
            } => norm.value(z) + coeffs.dot(z) - bound,
        }
    }

    pub fn gradient(&self, z: &DVector<f64>) -> DVector<f64> {
        match self {
            Constraint::Linear { coeffs, .. } => coeffs.clone(),
            Constraint::Quadratic { norm, coeffs, .. } => norm.gradient(z) + coeffs,
        }
    }
}

/// `cᵀz + ‖F₀ z + f₀‖² + constant`.
#[derive(Debug, Clone, PartialEq)]
pub struct Objective {
    pub linear: DVector<f64>,
    pub quadratic: Option<SquaredNorm>,
    pub constant: f64,
}

impl Objective {
    pub fn value(&self, z: &DVector<f64>) -> f64 {
        self.linear.dot(z) + self.quadratic.as_ref().map_or(0.0, |q| q.value(z)) + self.constant
    }

    pub fn gradient(&self, z: &DVector<f64>) -> DVector<f64> {
        match &self.quadratic {
            Some(q) => &self.linear + q.gradient(z),
            None => self.linear.clone(),
        }
    }
}

/// A minimization problem over a real vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexProgram {
    num_vars: usize,
    objective: Objective,
    constraints: Vec<Constraint>,
}

impl ConvexProgram {
    /// Program with zero objective and no constraints.
    pub fn new(num_vars: usize) -> Result<Self> {
        if num_vars == 0 {
            return Err(Error::Dimension("program needs at least one variable".into()));
        }
        Ok(Self {
            num_vars,
            objective: Objective {
                linear: DVector::zeros(num_vars),
                quadratic: None,
                constant: 0.0,
            },
            constraints: Vec::new(),
        })
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn objective(&self) -> &Objective {
        &self.objective
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn set_linear_objective(&mut self, coeffs: Vec<f64>) -> Result<()> {
        if coeffs.len() != self.num_vars {
            return Err(Error::Dimension(format!(
                "objective has {} coefficients for {} variables",
                coeffs.len(),
                self.num_vars
            )));
        }
        if coeffs.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite objective coefficient".into()));
        }
        self.objective.linear = DVector::from_vec(coeffs);
        Ok(())
    }

    pub fn set_quadratic_objective(&mut self, norm: SquaredNorm) -> Result<()> {
        if norm.matrix.ncols() != self.num_vars {
            return Err(Error::Dimension(format!(
                "objective term has {} columns for {} variables",
                norm.matrix.ncols(),
                self.num_vars
            )));
        }
        if !norm.finite() {
            return Err(Error::Domain("non-finite objective term".into()));
        }
        self.objective.quadratic = Some(norm);
        Ok(())
    }

    pub fn set_objective_constant(&mut self, constant: f64) {
        self.objective.constant = constant;
    }

    /// Appends a constraint and returns its index.
    pub fn add(&mut self, constraint: Constraint) -> Result<usize> {
        if constraint.num_vars() != self.num_vars {
            return Err(Error::Dimension(format!(
                "constraint over {} variables in a {}-variable program",
                constraint.num_vars(),
                self.num_vars
            )));
        }
        let finite = match &constraint {
            Constraint::Linear { coeffs, bound } => {
                bound.is_finite() && coeffs.iter().all(|v| v.is_finite())
            }
            Constraint::Quadratic {
                norm,
                coeffs,
                bound,
            } => {
                norm.matrix.ncols() == self.num_vars
                    && norm.finite()
                    && bound.is_finite()
                    && coeffs.iter().all(|v| v.is_finite())
            }
        };
        if let Constraint::Quadratic { norm, .. } = &constraint {
            if norm.matrix.ncols() != self.num_vars {
                return Err(Error::Dimension(format!(
                    "quadratic term has {} columns in a {}-variable program",
                    norm.matrix.ncols(),
                    self.num_vars
                )));
            }
        }
        if !finite {
            return Err(Error::Domain("non-finite constraint data".into()));
        }
        self.constraints.push(constraint);
        Ok(self.constraints.len() - 1)
    }

    /// The same program with the objective multiplied by `factor > 0`.
    pub fn scaled_objective(&self, factor: f64) -> Result<Self> {
        if !(factor.is_finite() && factor > 0.0) {
            return Err(Error::Domain(format!("scale {factor} must be positive")));
        }
        let mut out = self.clone();
        out.objective.linear *= factor;
        out.objective.constant *= factor;
        if let Some(q) = &mut out.objective.quadratic {
            q.matrix *= factor.sqrt();
            q.offset *= factor.sqrt();
        }
        Ok(out)
    }

    fn lower(&self) -> Lowered {
        let n = self.num_vars;
        let epigraph = self.objective.quadratic.is_some();
        let nv = n + usize::from(epigraph);
        let mut rows_lin: Vec<(Vec<f64>, f64)> = Vec::new();
        let mut socs: Vec<(DMatrix<f64>, DVector<f64>)> = Vec::new();
        let mut slots = Vec::with_capacity(self.constraints.len());

        let pad = |v: &DVector<f64>| {
            let mut out = vec![0.0; nv];
            out[..n].copy_from_slice(v.as_slice());
            out
        };
        let rotated = |norm: &SquaredNorm, q: Vec<f64>, r: f64| {
            let rows = norm.matrix.nrows();
            let mut g = DMatrix::zeros(rows + 2, nv);
            let mut h = DVector::zeros(rows + 2);
            for j in 0..nv {
                g[(0, j)] = q[j];
                g[(1, j)] = q[j];
            }
            h[0] = r + 1.0;
            h[1] = r - 1.0;
            for i in 0..rows {
                for j in 0..n {
                    g[(i + 2, j)] = -2.0 * norm.matrix[(i, j)];
                }
                h[i + 2] = 2.0 * norm.offset[i];
            }
            (g, h)
        };

        for c in &self.constraints {
            match c {
                Constraint::Linear { coeffs, bound } => {
                    slots.push(Slot::Orthant(rows_lin.len()));
                    rows_lin.push((pad(coeffs), *bound));
                }
                Constraint::Quadratic {
                    norm,
                    coeffs,
                    bound,
                } => {
                    if coeffs.iter().all(|v| *v == 0.0) && *bound > 0.0 {
                        let rows = norm.matrix.nrows();
                        let root = bound.sqrt();
                        let mut g = DMatrix::zeros(rows + 1, nv);
                        let mut h = DVector::zeros(rows + 1);
                        h[0] = root;
                        for i in 0..rows {
                            for j in 0..n {
                                g[(i + 1, j)] = -norm.matrix[(i, j)];
                            }
                            h[i + 1] = norm.offset[i];
                        }
                        slots.push(Slot::PlainSoc(socs.len(), root));
                        socs.push((g, h));
                    } else {
                        slots.push(Slot::RotatedSoc(socs.len()));
                        socs.push(rotated(norm, pad(coeffs), *bound));
                    }
                }
            }
        }
        let mut c = DVector::zeros(nv);
        c.rows_mut(0, n).copy_from(&self.objective.linear);
        if let Some(q) = &self.objective.quadratic {
            c[n] = 1.0;
            let mut e = vec![0.0; nv];
            e[n] = -1.0;
            socs.push(rotated(q, e, 0.0));
        }

        let nonneg = rows_lin.len();
        let dims: Vec<usize> = socs.iter().map(|(g, _)| g.nrows()).collect();
        let m = nonneg + dims.iter().sum::<usize>();
        let mut g = DMatrix::zeros(m, nv);
        let mut h = DVector::zeros(m);
        for (i, (row, b)) in rows_lin.iter().enumerate() {
            for j in 0..nv {
                g[(i, j)] = row[j];
            }
            h[i] = *b;
        }
        let mut offsets = Vec::with_capacity(socs.len());
        let mut off = nonneg;
        for (gb, hb) in &socs {
            offsets.push(off);
            g.rows_mut(off, gb.nrows()).copy_from(gb);
            h.rows_mut(off, hb.len()).copy_from(hb);
            off += gb.nrows();
        }
        Lowered {
            problem: ipm::ConeProblem {
                c,
                g,
                h,
                cones: ipm::Cones {
                    nonneg,
                    socs: dims,
                },
            },
            slots,
            soc_offsets: offsets,
        }
    }
}

enum Slot {
    Orthant(usize),
    RotatedSoc(usize),
    PlainSoc(usize, f64),
}

struct Lowered {
    problem: ipm::ConeProblem,
    slots: Vec<Slot>,
    soc_offsets: Vec<usize>,
}

impl Lowered {
    /// Multiplier of each original constraint from a conic dual vector.
    fn multipliers(&self, z: &DVector<f64>) -> Vec<f64> {
        self.slots
            .iter()
            .map(|slot| match *slot {
                Slot::Orthant(i) => z[i],
                Slot::RotatedSoc(k) => {
                    let o = self.soc_offsets[k];
                    z[o] + z[o + 1]
                }
                Slot::PlainSoc(k, root) => z[self.soc_offsets[k]] / (2.0 * root),
            })
            .collect()
    }
}

/// Termination status of an interior-point solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Optimal,
    /// No feasible point; the certificate holds nonnegative multipliers
    /// whose weighted constraint sum is contradictory.
    Infeasible,
    /// Objective unbounded below.
    Unbounded,
    MaxIterations,
    NumericalFailure,
}

/// Tolerances and limits of the interior-point method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    pub feasibility_tolerance: f64,
    pub gap_tolerance: f64,
    pub max_iterations: usize,
    pub step_fraction: f64,
    pub refinement_steps: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            feasibility_tolerance: 1e-8,
            gap_tolerance: 1e-8,
            max_iterations: 200,
            step_fraction: 0.99,
            refinement_steps: 3,
        }
    }
}

/// Objective values and residuals at one interior-point iterate. The
/// embedded objectives are only comparable once the residuals vanish; pass
/// `multipliers` to [`lagrangian_bound`] for a bound valid at every iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct IterateSummary {
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
    /// Nonnegative constraint multipliers read off the conic dual iterate.
    pub multipliers: Vec<f64>,
}

/// Result of [`solve`].
#[derive(Debug, Clone, PartialEq)]
pub struct PrimalDualSolution {
    pub status: Status,
    pub primal: DVector<f64>,
    /// One multiplier per constraint, in insertion order.
    pub duals: Vec<f64>,
    pub objective: f64,
    pub dual_objective: f64,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
    /// Farkas-style multipliers when the status is `Infeasible`.
    pub certificate: Option<Vec<f64>>,
    pub history: Vec<IterateSummary>,
}

impl PrimalDualSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == Status::Optimal
    }
}

/// Solves `program` to the tolerances in `settings`.
pub fn solve(program: &ConvexProgram, settings: &SolverSettings) -> PrimalDualSolution {
    let lowered = program.lower();
    let res = ipm::solve(&lowered.problem, settings);
    let n = program.num_vars;
    let primal = DVector::from_iterator(n, res.x.iter().take(n).copied());
    let constant = program.objective.constant;
    let history = res
        .history
        .iter()
        .map(|r| IterateSummary {
            primal_objective: r.primal_objective + constant,
            dual_objective: r.dual_objective + constant,
            primal_residual: r.primal_residual,
            dual_residual: r.dual_residual,
            gap: r.gap,
            multipliers: lowered
                .multipliers(&r.z)
                .into_iter()
                .map(|l| l.max(0.0))
                .collect(),
        })
        .collect();
    let (duals, certificate) = match res.status {
        Status::Infeasible => (
            vec![0.0; program.constraints.len()],
            Some(lowered.multipliers(&res.z)),
        ),
        Status::Optimal => (polish_duals(program, &primal, lowered.multipliers(&res.z)), None),
        _ => (lowered.multipliers(&res.z), None),
    };
    let (primal, duals) = if res.status == Status::Optimal {
        polish(program, primal, duals)
    } else {
        (primal, duals)
    };
    let objective = match res.status {
        Status::Optimal | Status::MaxIterations | Status::NumericalFailure => {
            program.objective.value(&primal)
        }
        _ => res.primal_objective,
    };
    // At an optimal point the Lagrangian is the dual bound.
    let (dual_objective, gap) = if res.status == Status::Optimal {
        let lagrangian = objective
            + program
                .constraints
                .iter()
                .zip(&duals)
                .map(|(c, l)| l * c.value(&primal))
                .sum::<f64>();
        (lagrangian, objective - lagrangian)
    } else {
        (res.dual_objective + constant, res.gap)
    };
    PrimalDualSolution {
        status: res.status,
        primal,
        duals,
        objective,
        dual_objective,
        iterations: res.iterations,
        primal_residual: res.primal_residual,
        dual_residual: res.dual_residual,
        gap,
        certificate,
        history,
    }
}

/// Newton steps on the optimality conditions restricted to the active
/// constraints. The interior-point iterate stops at a relative gap, which
/// leaves the argmin of a curved objective a few digits short; the polished
/// pair is kept only if its multipliers stay nonnegative and its KKT
/// residuals improve.
fn polish(program: &ConvexProgram, z: DVector<f64>, duals: Vec<f64>) -> (DVector<f64>, Vec<f64>) {
    let n = program.num_vars;
    let scale = duals.iter().fold(1.0_f64, |a, l| a.max(l.abs()));
    let active: Vec<usize> = program
        .constraints
        .iter()
        .enumerate()
        .filter(|(i, c)| duals[*i] > 1e-9 * scale && c.value(&z).abs() <= 1e-6 * (1.0 + c.bound().abs()))
        .map(|(i, _)| i)
        .collect();
    let a = active.len();
    if a > n {
        return (z, duals);
    }
    let hessian_obj = program
        .objective
        .quadratic
        .as_ref()
        .map_or_else(|| DMatrix::zeros(n, n), SquaredNorm::hessian);
    let hessians: Vec<Option<DMatrix<f64>>> = active
        .iter()
        .map(|&i| match &program.constraints[i] {
            Constraint::Quadratic { norm, .. } => Some(norm.hessian()),
            Constraint::Linear { .. } => None,
        })
        .collect();
    let score = |z: &DVector<f64>, l: &[f64]| residuals(program, z, l).max();
    let start = score(&z, &duals);
    let mut best = (z.clone(), duals.clone(), start);
    let mut cur_z = z;
    let mut cur_l = vec![0.0; duals.len()];
    for &i in &active {
        cur_l[i] = duals[i];
    }
    for _ in 0..8 {
        let mut kkt = DMatrix::zeros(n + a, n + a);
        let mut rhs = DVector::zeros(n + a);
        let mut grad = program.objective.gradient(&cur_z);
        let mut h = hessian_obj.clone();
        for (j, &i) in active.iter().enumerate() {
            let c = &program.constraints[i];
            let g = c.gradient(&cur_z);
            grad.axpy(cur_l[i], &g, 1.0);
            if let Some(hi) = &hessians[j] {
                h += hi * cur_l[i];
            }
            for r in 0..n {
                kkt[(r, n + j)] = g[r];
                kkt[(n + j, r)] = g[r];
            }
            rhs[n + j] = -c.value(&cur_z);
        }
        kkt.view_mut((0, 0), (n, n)).copy_from(&h);
        rhs.rows_mut(0, n).copy_from(&(-grad));
        let Some(step) = kkt.lu().solve(&rhs) else {
            break;
        };
        if step.iter().any(|v| !v.is_finite()) {
            break;
        }
        cur_z += step.rows(0, n);
        for (j, &i) in active.iter().enumerate() {
            cur_l[i] += step[n + j];
        }
        if active.iter().any(|&i| cur_l[i] < 0.0) {
            break;
        }
        let sc = score(&cur_z, &cur_l);
        if sc < best.2 {
            best = (cur_z.clone(), cur_l.clone(), sc);
        } else {
            break;
        }
    }
    (best.0, best.1)
}

/// Conic multipliers of curved constraints are only accurate to about the
/// square root of the gap. Refit the multipliers of the active constraints
/// by least squares on the stationarity condition and keep the fit when it
/// is nonnegative and better.
fn polish_duals(program: &ConvexProgram, z: &DVector<f64>, duals: Vec<f64>) -> Vec<f64> {
    let grads: Vec<DVector<f64>> = program.constraints.iter().map(|c| c.gradient(z)).collect();
    let scale = duals.iter().fold(1.0_f64, |a, l| a.max(l.abs()));
    let active: Vec<usize> = program
        .constraints
        .iter()
        .enumerate()
        .filter(|(i, c)| duals[*i] > 1e-9 * scale && c.value(z).abs() <= 1e-6 * (1.0 + c.bound().abs()))
        .map(|(i, _)| i)
        .collect();
    if active.is_empty() || active.len() > program.num_vars {
        return duals;
    }
    let residual = |lam: &[f64]| {
        let mut r = program.objective.gradient(z);
        for (g, l) in grads.iter().zip(lam) {
            r.axpy(*l, g, 1.0);
        }
        r
    };
    let mut base = duals.clone();
    for &i in &active {
        base[i] = 0.0;
    }
    let rhs = -residual(&base);
    let jac = DMatrix::from_columns(&active.iter().map(|&i| grads[i].clone()).collect::<Vec<_>>());
    let Ok(fit) = jac.svd(true, true).solve(&rhs, 1e-12) else {
        return duals;
    };
    if fit.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
        return duals;
    }
    let mut polished = base;
    for (&i, l) in active.iter().zip(fit.iter()) {
        polished[i] = *l;
    }
    if residual(&polished).amax() < residual(&duals).amax() {
        polished
    } else {
        duals
    }
}

/// `inf_z L(z, λ)` for multipliers `λ ≥ 0`: a lower bound on the optimal
/// value of `program`. `-inf` when the Lagrangian is unbounded below.
pub fn lagrangian_bound(program: &ConvexProgram, multipliers: &[f64]) -> Result<f64> {
    if multipliers.len() != program.constraints.len() {
        return Err(Error::Dimension(format!(
            "{} multipliers for {} constraints",
            multipliers.len(),
            program.constraints.len()
        )));
    }
    if let Some(l) = multipliers.iter().find(|l| !(l.is_finite() && **l >= 0.0)) {
        return Err(Error::Domain(format!("multiplier {l} must be nonnegative")));
    }
    let n = program.num_vars;
    // L(z) = ½ zᵀHz + bᵀz + k
    let mut h = DMatrix::zeros(n, n);
    let mut b = program.objective.linear.clone();
    let mut k = program.objective.constant;
    let add_norm = |norm: &SquaredNorm, w: f64, h: &mut DMatrix<f64>, b: &mut DVector<f64>, k: &mut f64| {
        *h += norm.hessian() * w;
        b.axpy(2.0 * w, &norm.matrix.tr_mul(&norm.offset), 1.0);
        *k += w * norm.offset.norm_squared();
    };
    if let Some(q) = &program.objective.quadratic {
        add_norm(q, 1.0, &mut h, &mut b, &mut k);
    }
    for (c, &l) in program.constraints.iter().zip(multipliers) {
        match c {
            Constraint::Linear { coeffs, bound } => {
                b.axpy(l, coeffs, 1.0);
                k -= l * bound;
            }
            Constraint::Quadratic {
                norm,
                coeffs,
                bound,
            } => {
                add_norm(norm, l, &mut h, &mut b, &mut k);
                b.axpy(l, coeffs, 1.0);
                k -= l * bound;
            }
        }
    }
    let eig = h.symmetric_eigen();
    let top = eig.eigenvalues.amax();
    let proj = eig.eigenvectors.tr_mul(&b);
    let mut value = k;
    for (mu, bj) in eig.eigenvalues.iter().zip(proj.iter()) {
        if *mu > 1e-12 * top {
            value -= 0.5 * bj * bj / mu;
        } else if bj.abs() > 1e-9 * (1.0 + b.amax()) {
            return Ok(f64::NEG_INFINITY);
        }
    }
    Ok(value)
}

/// Optimality-condition residuals of a candidate primal-dual pair, measured
/// on the original (unlowered) program. All entries are max-norms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktResiduals {
    /// `‖∇f₀(z) + Σ λᵢ ∇gᵢ(z)‖`
    pub stationarity: f64,
    /// `max(0, gᵢ(z))`
    pub primal_feasibility: f64,
    /// `max(0, −λᵢ)`
    pub dual_feasibility: f64,
    /// `|λᵢ gᵢ(z)|`
    pub complementary_slackness: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.stationarity
            .max(self.primal_feasibility)
            .max(self.dual_feasibility)
            .max(self.complementary_slackness)
    }
}

pub fn kkt_residuals(program: &ConvexProgram, solution: &PrimalDualSolution) -> Result<KktResiduals> {
    if solution.primal.len() != program.num_vars || solution.duals.len() != program.constraints.len()
    {
        return Err(Error::Dimension(
            "solution does not match the program dimensions".into(),
        ));
    }
    Ok(residuals(program, &solution.primal, &solution.duals))
}

fn residuals(program: &ConvexProgram, z: &DVector<f64>, duals: &[f64]) -> KktResiduals {
    let mut grad = program.objective.gradient(z);
    let mut primal: f64 = 0.0;
    let mut dual: f64 = 0.0;
    let mut comp: f64 = 0.0;
    for (c, &lam) in program.constraints.iter().zip(duals) {
        let g = c.value(z);
        grad += c.gradient(z) * lam;
        primal = primal.max(g.max(0.0));
        dual = dual.max((-lam).max(0.0));
        comp = comp.max((lam * g).abs());
    }
    KktResiduals {
        stationarity: grad.amax(),
        primal_feasibility: primal,
        dual_feasibility: dual,
        complementary_slackness: comp,
    }
}
