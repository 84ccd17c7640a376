//! Convex-program fixtures shared by the cone and acceptance suites.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rsma_core::cone::*;

pub fn settings() -> SolverSettings {
    SolverSettings::default()
}

pub fn norm(f: DMatrix<f64>, off: Vec<f64>) -> SquaredNorm {
    let n = off.len();
    SquaredNorm::new(f, DVector::from_vec(off)).unwrap_or_else(|_| panic!("bad norm of {n} rows"))
}

pub fn ball(n: usize, center: &[f64], radius: f64) -> Constraint {
    let off: Vec<f64> = center.iter().map(|c| -c).collect();
    Constraint::quadratic(norm(DMatrix::identity(n, n), off), vec![0.0; n], radius * radius)
}

/// `min ‖z − a‖²` plus the given constraints.
pub fn projection(a: &[f64], constraints: Vec<Constraint>) -> ConvexProgram {
    let n = a.len();
    let mut p = ConvexProgram::new(n).unwrap();
    p.set_quadratic_objective(norm(DMatrix::identity(n, n), a.iter().map(|x| -x).collect())).unwrap();
    for c in constraints {
        p.add(c).unwrap();
    }
    p
}
/// Random strictly convex QCQP: `min ‖F₀z + f₀‖² + c₀ᵀz` subject to
/// `‖Fᵢz + fᵢ‖² + qᵢᵀz ≤ rᵢ`, with `z = 0` strictly feasible.
pub struct Qcqp {
    pub f: Vec<DMatrix<f64>>,
    pub off: Vec<DVector<f64>>,
    pub lin: Vec<DVector<f64>>,
    pub bound: Vec<f64>,
}

pub fn random_qcqp(seed: u64, n: usize, m: usize) -> Qcqp {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mat = |rows: usize, base: f64| {
        DMatrix::from_fn(rows, n, |i, j| {
            let d = if i == j { base } else { 0.0 };
            d + rng.random_range(-0.5..0.5)
        })
    };
    let mut f = vec![mat(n, 1.0)];
    for _ in 0..m {
        f.push(mat(n, 0.8));
    }
    let mut off = Vec::new();
    let mut lin = Vec::new();
    let mut bound = vec![0.0];
    for i in 0..=m {
        let scale = if i == 0 { 3.0 } else { 0.5 };
        off.push(DVector::from_fn(n, |_, _| rng.random_range(-scale..scale)));
        lin.push(DVector::from_fn(n, |_, _| rng.random_range(-0.5..0.5)));
        if i > 0 {
            let f0 = off[i].norm_squared();
            bound.push(f0 + rng.random_range(0.2..1.5));
        }
    }
    Qcqp { f, off, lin, bound }
}

impl Qcqp {
    pub fn program(&self) -> ConvexProgram {
        let n = self.f[0].ncols();
        let mut p = ConvexProgram::new(n).unwrap();
        p.set_quadratic_objective(SquaredNorm::new(self.f[0].clone(), self.off[0].clone()).unwrap()).unwrap();
        p.set_linear_objective(self.lin[0].iter().copied().collect()).unwrap();
        for i in 1..self.f.len() {
            p.add(Constraint::quadratic(
                SquaredNorm::new(self.f[i].clone(), self.off[i].clone()).unwrap(),
                self.lin[i].iter().copied().collect(),
                self.bound[i],
            ))
            .unwrap();
        }
        p
    }

    fn term(&self, i: usize, z: &DVector<f64>) -> f64 {
        (&self.f[i] * z + &self.off[i]).norm_squared() + self.lin[i].dot(z) - self.bound[i]
    }

    /// Minimizer of the Lagrangian for multipliers `lam`.
    fn argmin(&self, lam: &[f64]) -> DVector<f64> {
        let n = self.f[0].ncols();
        let mut h = DMatrix::zeros(n, n);
        let mut g = DVector::zeros(n);
        for i in 0..self.f.len() {
            let w = if i == 0 { 1.0 } else { lam[i - 1] };
            h += (self.f[i].transpose() * &self.f[i]) * (2.0 * w);
            g += (self.f[i].transpose() * &self.off[i] * 2.0 + &self.lin[i]) * w;
        }
        -h.cholesky().expect("positive definite").solve(&g)
    }

    fn dual(&self, lam: &[f64]) -> f64 {
        let z = self.argmin(lam);
        self.term(0, &z) + lam.iter().enumerate().map(|(i, l)| l * self.term(i + 1, &z)).sum::<f64>()
    }

    /// Projected gradient ascent on the Lagrange dual with backtracking;
    /// returns the primal optimum at the dual maximizer.
    pub fn oracle(&self) -> (f64, DVector<f64>) {
        let m = self.f.len() - 1;
        let mut lam = vec![0.0; m];
        let mut step = 1.0;
        for _ in 0..200_000 {
            let z = self.argmin(&lam);
            let grad: Vec<f64> = (1..=m).map(|i| self.term(i, &z)).collect();
            let d0 = self.dual(&lam);
            let next = loop {
                let cand: Vec<f64> = lam.iter().zip(&grad).map(|(l, g)| (l + step * g).max(0.0)).collect();
                let diff: f64 = cand.iter().zip(&lam).zip(&grad).map(|((c, l), g)| g * (c - l)).sum();
                let dist: f64 = cand.iter().zip(&lam).map(|(c, l)| (c - l).powi(2)).sum();
                if self.dual(&cand) >= d0 + diff - dist / (2.0 * step) - 1e-15 || step < 1e-12 {
                    break cand;
                }
                step *= 0.5;
            };
            let moved: f64 = next.iter().zip(&lam).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            lam = next;
            step *= 1.5;
            if moved / step.max(1e-12) < 1e-11 {
                break;
            }
        }
        let z = self.argmin(&lam);
        (self.term(0, &z), z)
    }
}
