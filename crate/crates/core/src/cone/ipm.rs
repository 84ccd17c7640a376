//! Primal-dual interior-point method for
//!
//! ```text
//! minimize c'x   subject to   G x + s = h,   s ∈ K
//! ```
//!
//! where `K` is a product of a nonnegative orthant and second-order cones.
//! The iterates live on the homogeneous self-dual embedding, so primal or
//! dual infeasibility shows up as `τ → 0` with a certificate in `z` or `x`.
//! Search directions use Nesterov–Todd scaling and Mehrotra
//! predictor-corrector steps; each Newton system is reduced to a dense
//! normal-equations solve with iterative refinement.

use nalgebra::{Cholesky, DMatrix, DVector};

use super::{SolverSettings, Status};

/// Cone layout of the slack vector: `nonneg` orthant rows first, then one
/// block per second-order cone.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Cones {
    pub nonneg: usize,
    pub socs: Vec<usize>,
}

impl Cones {
    pub fn dim(&self) -> usize {
        self.nonneg + self.socs.iter().sum::<usize>()
    }

    fn degree(&self) -> usize {
        self.nonneg + self.socs.len()
    }

    fn soc_ranges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let mut offset = self.nonneg;
        self.socs.iter().map(move |&d| {
            let r = (offset, d);
            offset += d;
            r
        })
    }
}

#[derive(Debug, Clone)]
pub(crate) struct ConeProblem {
    pub c: DVector<f64>,
    pub g: DMatrix<f64>,
    pub h: DVector<f64>,
    pub cones: Cones,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct IterateRecord {
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
    pub step: f64,
    /// Conic dual iterate `z / τ`.
    pub z: DVector<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct ConeResult {
    pub status: Status,
    pub x: DVector<f64>,
    #[cfg_attr(not(test), allow(dead_code))]
    pub s: DVector<f64>,
    pub z: DVector<f64>,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub history: Vec<IterateRecord>,
}

/// Per-cone NT scaling `W` with `W z = W⁻ᵀ s = λ`. `W` is symmetric.
struct Scaling {
    orth: Vec<f64>,
    socs: Vec<SocScaling>,
    lambda: DVector<f64>,
}

struct SocScaling {
    offset: usize,
    w: DMatrix<f64>,
    winv: DMatrix<f64>,
}

fn jnorm(u: &[f64]) -> Option<f64> {
    let tail = u[1..].iter().map(|v| v * v).sum::<f64>().sqrt();
    let d = (u[0] - tail) * (u[0] + tail);
    (u[0] > 0.0 && d > 0.0).then(|| d.sqrt())
}

impl Scaling {
    fn new(cones: &Cones, s: &DVector<f64>, z: &DVector<f64>) -> Option<Self> {
        let mut orth = Vec::with_capacity(cones.nonneg);
        let mut lambda = DVector::zeros(s.len());
        for i in 0..cones.nonneg {
            if !(s[i] > 0.0 && z[i] > 0.0) {
                return None;
            }
            orth.push((s[i] / z[i]).sqrt());
            lambda[i] = (s[i] * z[i]).sqrt();
        }
        let mut socs = Vec::with_capacity(cones.socs.len());
        for (off, d) in cones.soc_ranges() {
            let sv = &s.as_slice()[off..off + d];
            let zv = &z.as_slice()[off..off + d];
            let sn = jnorm(sv)?;
            let zn = jnorm(zv)?;
            let sbar: Vec<f64> = sv.iter().map(|v| v / sn).collect();
            let zbar: Vec<f64> = zv.iter().map(|v| v / zn).collect();
            let dot: f64 = sbar.iter().zip(&zbar).map(|(a, b)| a * b).sum();
            let gamma = ((1.0 + dot) / 2.0).sqrt();
            let mut wbar = vec![0.0; d];
            wbar[0] = (sbar[0] + zbar[0]) / (2.0 * gamma);
            for i in 1..d {
                wbar[i] = (sbar[i] - zbar[i]) / (2.0 * gamma);
            }
            let beta = (sn / zn).sqrt();
            let denom = (2.0 * (wbar[0] + 1.0)).sqrt();
            let mut v = DVector::from_vec(wbar);
            v[0] += 1.0;
            v /= denom;
            // W = β (2 v vᵀ − J),  W⁻¹ = (2 J v vᵀ J − J) / β
            let mut w = &v * v.transpose() * 2.0;
            let mut jv = v.clone();
            for i in 1..d {
                jv[i] = -jv[i];
            }
            let mut winv = &jv * jv.transpose() * 2.0;
            w[(0, 0)] -= 1.0;
            winv[(0, 0)] -= 1.0;
            for i in 1..d {
                w[(i, i)] += 1.0;
                winv[(i, i)] += 1.0;
            }
            w *= beta;
            winv /= beta;
            let lam = &w * DVector::from_column_slice(zv);
            lambda.rows_mut(off, d).copy_from(&lam);
            socs.push(SocScaling {
                offset: off,
                w,
                winv,
            });
        }
        Some(Self { orth, socs, lambda })
    }

    fn apply(&self, u: &DVector<f64>, inverse: bool) -> DVector<f64> {
        let mut out = u.clone();
        for (i, w) in self.orth.iter().enumerate() {
            out[i] = if inverse { u[i] / w } else { u[i] * w };
        }
        for sc in &self.socs {
            let d = sc.w.nrows();
            let block = u.rows(sc.offset, d);
            let m = if inverse { &sc.winv } else { &sc.w };
            out.rows_mut(sc.offset, d).copy_from(&(m * block));
        }
        out
    }

    /// `W⁻¹ G`, row block by row block.
    fn scale_rows_inv(&self, g: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = g.clone();
        for (i, w) in self.orth.iter().enumerate() {
            let mut row = out.row_mut(i);
            row /= *w;
        }
        for sc in &self.socs {
            let d = sc.w.nrows();
            let block = g.rows(sc.offset, d);
            out.rows_mut(sc.offset, d).copy_from(&(&sc.winv * block));
        }
        out
    }
}

/// Jordan product `u ∘ v`.
fn jordan(cones: &Cones, u: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(u.len());
    for i in 0..cones.nonneg {
        out[i] = u[i] * v[i];
    }
    for (off, d) in cones.soc_ranges() {
        let ub = u.rows(off, d);
        let vb = v.rows(off, d);
        out[off] = ub.dot(&vb);
        for i in 1..d {
            out[off + i] = ub[0] * vb[i] + vb[0] * ub[i];
        }
    }
    out
}

/// Solves `λ ∘ x = d` for `x`.
fn jordan_div(cones: &Cones, lambda: &DVector<f64>, d: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(d.len());
    for i in 0..cones.nonneg {
        out[i] = d[i] / lambda[i];
    }
    for (off, n) in cones.soc_ranges() {
        let l = lambda.rows(off, n);
        let db = d.rows(off, n);
        let l1 = l.rows(1, n - 1);
        let d1 = db.rows(1, n - 1);
        let det = l[0] * l[0] - l1.norm_squared();
        let x0 = (l[0] * db[0] - l1.dot(&d1)) / det;
        out[off] = x0;
        for i in 1..n {
            out[off + i] = (db[i] - x0 * l[i]) / l[0];
        }
    }
    out
}

fn add_identity(cones: &Cones, u: &mut DVector<f64>, scale: f64) {
    for i in 0..cones.nonneg {
        u[i] += scale;
    }
    for (off, _) in cones.soc_ranges() {
        u[off] += scale;
    }
}

/// Largest `α ≥ 0` with `u + α d` in the cone, for `u` interior; capped at
/// `cap`.
fn max_step(cones: &Cones, u: &DVector<f64>, d: &DVector<f64>, cap: f64) -> f64 {
    let mut alpha = cap;
    for i in 0..cones.nonneg {
        if d[i] < 0.0 {
            alpha = alpha.min(-u[i] / d[i]);
        }
    }
    for (off, n) in cones.soc_ranges() {
        let ub = u.rows(off, n);
        let db = d.rows(off, n);
        let a = db[0] * db[0] - db.rows(1, n - 1).norm_squared();
        let b = ub[0] * db[0] - ub.rows(1, n - 1).dot(&db.rows(1, n - 1));
        let c = ub[0] * ub[0] - ub.rows(1, n - 1).norm_squared();
        // smallest positive root of a α² + 2 b α + c, c > 0
        let root = if a.abs() <= 1e-300 {
            if b < 0.0 {
                Some(-c / (2.0 * b))
            } else {
                None
            }
        } else {
            let disc = b * b - a * c;
            if disc < 0.0 {
                None
            } else {
                let q = -(b + b.signum() * disc.sqrt());
                let roots = [q / a, if q != 0.0 { c / q } else { f64::INFINITY }];
                roots
                    .into_iter()
                    .filter(|r| *r > 0.0 && r.is_finite())
                    .fold(None, |m: Option<f64>, r| Some(m.map_or(r, |m| m.min(r))))
            }
        };
        if let Some(r) = root {
            alpha = alpha.min(r);
        }
        // the direction may also leave through the apex-side half-line
        if db[0] < 0.0 {
            alpha = alpha.min(-ub[0] / db[0]);
        }
    }
    alpha
}

/// Shift that moves `u` into the cone interior, as in the standard
/// least-squares start.
fn interior_shift(cones: &Cones, u: &mut DVector<f64>) {
    let mut worst = f64::NEG_INFINITY;
    for i in 0..cones.nonneg {
        worst = worst.max(-u[i]);
    }
    for (off, n) in cones.soc_ranges() {
        worst = worst.max(u.rows(off + 1, n - 1).norm() - u[off]);
    }
    if worst >= 0.0 {
        add_identity(cones, u, 1.0 + worst);
    }
}

fn cholesky(mut h: DMatrix<f64>) -> Option<Cholesky<f64, nalgebra::Dyn>> {
    let scale = (0..h.nrows()).map(|i| h[(i, i)].abs()).fold(1.0, f64::max);
    let mut reg = 1e-13 * scale;
    for _ in 0..8 {
        if let Some(ch) = Cholesky::new(h.clone()) {
            return Some(ch);
        }
        for i in 0..h.nrows() {
            h[(i, i)] += reg;
        }
        reg *= 100.0;
    }
    None
}

/// Reduced Newton system `[0 Gᵀ; G −WᵀW] [dx; dz] = [bx; bz]`.
struct Kkt<'a> {
    g: &'a DMatrix<f64>,
    scaling: &'a Scaling,
    scaled_g: DMatrix<f64>,
    factor: Cholesky<f64, nalgebra::Dyn>,
    refine: usize,
}

impl<'a> Kkt<'a> {
    fn new(g: &'a DMatrix<f64>, scaling: &'a Scaling, refine: usize) -> Option<Self> {
        let scaled_g = scaling.scale_rows_inv(g);
        let factor = cholesky(scaled_g.tr_mul(&scaled_g))?;
        Some(Self {
            g,
            scaling,
            scaled_g,
            factor,
            refine,
        })
    }

    fn solve_once(&self, bx: &DVector<f64>, bz: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let t = self.scaling.apply(bz, true);
        let dx = self.factor.solve(&(bx + self.scaled_g.tr_mul(&t)));
        let dz = self.scaling.apply(&(&self.scaled_g * &dx - t), true);
        (dx, dz)
    }

    fn solve(&self, bx: &DVector<f64>, bz: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let (mut dx, mut dz) = self.solve_once(bx, bz);
        for _ in 0..self.refine {
            let rx = bx - self.g.tr_mul(&dz);
            let wwdz = self.scaling.apply(&self.scaling.apply(&dz, false), false);
            let rz = bz - (self.g * &dx - wwdz);
            let size = rx.amax().max(rz.amax());
            if size <= 1e-15 * (1.0 + bx.amax().max(bz.amax())) {
                break;
            }
            let (cx, cz) = self.solve_once(&rx, &rz);
            dx += cx;
            dz += cz;
        }
        (dx, dz)
    }
}

struct Direction {
    x: DVector<f64>,
    s: DVector<f64>,
    z: DVector<f64>,
    tau: f64,
    kappa: f64,
}

pub(crate) fn solve(problem: &ConeProblem, settings: &SolverSettings) -> ConeResult {
    let ConeProblem { c, g, h, cones } = problem;
    let n = c.len();
    let m = h.len();
    debug_assert_eq!(m, cones.dim());
    let degree = cones.degree() as f64;
    let hnorm = h.amax();
    let cnorm = c.amax();

    // Least-squares start, shifted into the cone interior.
    let identity = Scaling {
        orth: vec![1.0; cones.nonneg],
        socs: cones
            .soc_ranges()
            .map(|(offset, d)| SocScaling {
                offset,
                w: DMatrix::identity(d, d),
                winv: DMatrix::identity(d, d),
            })
            .collect(),
        lambda: DVector::zeros(m),
    };
    let Some(kkt0) = Kkt::new(g, &identity, settings.refinement_steps) else {
        return failure(n, m, Status::NumericalFailure);
    };
    let (mut x, stilde) = kkt0.solve(&DVector::zeros(n), h);
    let mut s = -stilde;
    let (_, mut z) = kkt0.solve(&(-c), &DVector::zeros(m));
    interior_shift(cones, &mut s);
    interior_shift(cones, &mut z);
    let mut tau = 1.0;
    let mut kappa = 1.0;

    let mut history = Vec::new();
    let mut status = Status::MaxIterations;
    let mut last = (f64::INFINITY, f64::INFINITY, f64::INFINITY, 0.0, 0.0);
    let mut iterations = 0;

    for iter in 0..=settings.max_iterations {
        iterations = iter;
        let rx = g.tr_mul(&z) + c * tau;
        let rz = &s + g * &x - h * tau;
        let ctx = c.dot(&x);
        let htz = h.dot(&z);
        let rtau = kappa + ctx + htz;
        let sz = s.dot(&z);
        let mu = (sz + tau * kappa) / (degree + 1.0);

        let pcost = ctx / tau;
        let dcost = -htz / tau;
        let pres = rz.amax() / tau / (1.0 + hnorm);
        let dres = rx.amax() / tau / (1.0 + cnorm);
        let gap = sz / (tau * tau);
        last = (pres, dres, gap, pcost, dcost);

        let gap_ok = gap <= settings.gap_tolerance * (1.0 + pcost.abs())
            && (pcost - dcost).abs() <= settings.gap_tolerance * (1.0 + pcost.abs());
        if pres <= settings.feasibility_tolerance && dres <= settings.feasibility_tolerance && gap_ok {
            status = Status::Optimal;
            break;
        }
        if htz < 0.0 {
            let res = g.tr_mul(&z).amax() / (-htz);
            if res <= settings.feasibility_tolerance {
                status = Status::Infeasible;
                break;
            }
        }
        if ctx < 0.0 {
            let res = (g * &x + &s).amax() / (-ctx);
            if res <= settings.feasibility_tolerance {
                status = Status::Unbounded;
                break;
            }
        }
        if iter == settings.max_iterations {
            break;
        }

        let Some(scaling) = Scaling::new(cones, &s, &z) else {
            status = Status::NumericalFailure;
            break;
        };
        let Some(kkt) = Kkt::new(g, &scaling, settings.refinement_steps) else {
            status = Status::NumericalFailure;
            break;
        };
        let lambda = &scaling.lambda;
        let (x1, z1) = kkt.solve(&(-c), h);
        let denom_base = c.dot(&x1) + h.dot(&z1);

        let direction = |eta: f64, ds: &DVector<f64>, dkappa: f64| -> Direction {
            let lds = jordan_div(cones, lambda, ds);
            let bx = &rx * (-eta);
            let bz = &rz * (-eta) - scaling.apply(&lds, false);
            let (x2, z2) = kkt.solve(&bx, &bz);
            let dtau = (-eta * rtau - dkappa / tau - c.dot(&x2) - h.dot(&z2))
                / (denom_base - kappa / tau);
            let dx = x2 + &x1 * dtau;
            let dz = z2 + &z1 * dtau;
            let wdz = scaling.apply(&dz, false);
            let ds_vec = scaling.apply(&(lds - wdz), false);
            let dk = (dkappa - kappa * dtau) / tau;
            Direction {
                x: dx,
                s: ds_vec,
                z: dz,
                tau: dtau,
                kappa: dk,
            }
        };
        let step_length = |d: &Direction| -> f64 {
            let sd = scaling.apply(&d.s, true);
            let zd = scaling.apply(&d.z, false);
            let mut a = max_step(cones, lambda, &sd, f64::INFINITY);
            a = a.min(max_step(cones, lambda, &zd, f64::INFINITY));
            if d.tau < 0.0 {
                a = a.min(-tau / d.tau);
            }
            if d.kappa < 0.0 {
                a = a.min(-kappa / d.kappa);
            }
            a
        };

        // predictor
        let lsq = jordan(cones, lambda, lambda);
        let aff = direction(1.0, &(-&lsq), -tau * kappa);
        let alpha_aff = step_length(&aff).min(1.0);
        let sigma = (1.0 - alpha_aff).powi(3).clamp(0.0, 1.0);

        // corrector
        let sd = scaling.apply(&aff.s, true);
        let zd = scaling.apply(&aff.z, false);
        let mut ds = -lsq - jordan(cones, &sd, &zd);
        add_identity(cones, &mut ds, sigma * mu);
        let dkappa = -tau * kappa - aff.tau * aff.kappa + sigma * mu;
        let dir = direction(1.0 - sigma, &ds, dkappa);
        let alpha = (settings.step_fraction * step_length(&dir)).min(1.0);

        history.push(IterateRecord {
            primal_objective: pcost,
            dual_objective: dcost,
            primal_residual: pres,
            dual_residual: dres,
            gap,
            step: alpha,
            z: &z / tau,
        });
        if !(alpha > 0.0) || !alpha.is_finite() {
            status = Status::NumericalFailure;
            break;
        }

        x += &dir.x * alpha;
        s += &dir.s * alpha;
        z += &dir.z * alpha;
        tau += dir.tau * alpha;
        kappa += dir.kappa * alpha;
        if !(tau > 0.0 && kappa > 0.0)
            || x.iter().chain(s.iter()).chain(z.iter()).any(|v| !v.is_finite())
        {
            status = Status::NumericalFailure;
            break;
        }
    }

    let (pres, dres, gap, pcost, dcost) = last;
    match status {
        Status::Infeasible => {
            let scale = -h.dot(&z);
            ConeResult {
                status,
                x: DVector::zeros(n),
                s: DVector::zeros(m),
                z: z / scale,
                iterations,
                primal_residual: pres,
                dual_residual: dres,
                gap,
                primal_objective: f64::INFINITY,
                dual_objective: f64::INFINITY,
                history,
            }
        }
        Status::Unbounded => {
            let scale = -c.dot(&x);
            ConeResult {
                status,
                x: x / scale,
                s: s / scale,
                z: DVector::zeros(m),
                iterations,
                primal_residual: pres,
                dual_residual: dres,
                gap,
                primal_objective: f64::NEG_INFINITY,
                dual_objective: f64::NEG_INFINITY,
                history,
            }
        }
        _ => ConeResult {
            status,
            x: x / tau,
            s: s / tau,
            z: z / tau,
            iterations,
            primal_residual: pres,
            dual_residual: dres,
            gap,
            primal_objective: pcost,
            dual_objective: dcost,
            history,
        },
    }
}

fn failure(n: usize, m: usize, status: Status) -> ConeResult {
    ConeResult {
        status,
        x: DVector::zeros(n),
        s: DVector::zeros(m),
        z: DVector::zeros(m),
        iterations: 0,
        primal_residual: f64::INFINITY,
        dual_residual: f64::INFINITY,
        gap: f64::INFINITY,
        primal_objective: f64::NAN,
        dual_objective: f64::NAN,
        history: Vec::new(),
    }
}
