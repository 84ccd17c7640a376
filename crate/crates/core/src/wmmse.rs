//! Weighted-MMSE reformulation and the alternating optimization driver.
//!
//! For fixed equalizers `g` and weights `w`, every augmented WMSE is a
//! convex quadratic in the precoders, so the joint update of the precoders
//! and the transformed shares `X_k^A` is a convex program. The driver
//! alternates closed-form `(g, w)` updates with that program.
//!
//! Internally the augmented WMSE uses the natural logarithm,
//! `ξ = w ε − ln w`, and shares are carried in nats, `X_k^A = −C_k^A ln 2`.
//! With this form `min_w ξ = 1 − ln(1 + γ)` is attained at `w = 1/ε`, so
//! every block update is an exact minimization and the weighted sum-rate
//! cannot decrease between accepted iterations.

use std::collections::BTreeMap;
use std::f64::consts::LN_2;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channels::ChannelState;
use crate::cone::{self, Constraint, ConvexProgram, SolverSettings, SquaredNorm};
use crate::error::{Error, Result};
use crate::model::{PrecoderSet, ProblemInstance, StreamLayout, UserSet};
use crate::rate::{CommonRateAllocation, RateContext, RateReport};

/// Slack allowed on the WSR of an accepted iteration.
pub const MONOTONE_SLACK: f64 = 1e-9;

/// A WSR drop beyond this is recorded as a warning.
pub const WARNING_DROP: f64 = 1e-6;

/// `T_k^A = |h_k^H p_A|² + I_k^A + σ²`.
pub fn mmse_denominator(ctx: &RateContext<'_>, user: usize, stream: UserSet) -> Result<f64> {
    let idx = locate(ctx, user, stream)?;
    Ok(denominator_at(ctx, user, idx))
}

fn denominator_at(ctx: &RateContext<'_>, user: usize, idx: usize) -> f64 {
    ctx.gain(user, idx) + ctx.interference_at(user, idx) + ctx.noise(user)
}

fn locate(ctx: &RateContext<'_>, user: usize, stream: UserSet) -> Result<usize> {
    let layout = ctx.layout();
    if user == 0 || user > layout.num_users() {
        return Err(Error::UnknownUser {
            user,
            users: layout.num_users(),
        });
    }
    let idx = layout.index_of(stream).ok_or(Error::UnknownStream(stream))?;
    if !stream.contains(user) {
        return Err(Error::NotInStream { user, stream });
    }
    Ok(idx)
}

fn equalizer_at(ctx: &RateContext<'_>, user: usize, idx: usize) -> Complex64 {
    ctx.projection(user, idx).conj() / denominator_at(ctx, user, idx)
}

fn weight_at(ctx: &RateContext<'_>, user: usize, idx: usize) -> f64 {
    let t = denominator_at(ctx, user, idx);
    t / (t - ctx.gain(user, idx))
}

/// `g_k^A = p_A^H h_k / T_k^A`.
pub fn mmse_equalizer(ctx: &RateContext<'_>, user: usize, stream: UserSet) -> Result<Complex64> {
    let idx = locate(ctx, user, stream)?;
    Ok(equalizer_at(ctx, user, idx))
}

/// `w_k^A = T_k^A / (T_k^A − |h_k^H p_A|²)`, which equals `1 + γ_k^A`.
pub fn mmse_weight(ctx: &RateContext<'_>, user: usize, stream: UserSet) -> Result<f64> {
    let idx = locate(ctx, user, stream)?;
    Ok(weight_at(ctx, user, idx))
}

/// `ε = |g|² T − 2 Re{g h^H p_A} + 1`.
pub fn mse(ctx: &RateContext<'_>, user: usize, stream: UserSet, g: Complex64) -> Result<f64> {
    let idx = locate(ctx, user, stream)?;
    Ok(mse_at(ctx, user, idx, g))
}

fn mse_at(ctx: &RateContext<'_>, user: usize, idx: usize, g: Complex64) -> f64 {
    g.norm_sqr() * denominator_at(ctx, user, idx) - 2.0 * (g * ctx.projection(user, idx)).re + 1.0
}

/// `ξ = w ε − log2 w`; at the MMSE `(g, w)` this is `1 − R_k^A`.
pub fn augmented_wmse(
    ctx: &RateContext<'_>,
    user: usize,
    stream: UserSet,
    g: Complex64,
    w: f64,
) -> Result<f64> {
    if !(w.is_finite() && w > 0.0) {
        return Err(Error::Domain(format!("weight {w} must be positive")));
    }
    Ok(w * mse(ctx, user, stream, g)? - w.log2())
}

/// Equalizers, weights and transformed shares of one AO iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct WmmseState {
    /// Current precoders.
    pub precoders: PrecoderSet,
    /// Decode pairs `(stream index, user)` in layout order.
    pub pairs: Vec<(usize, usize)>,
    /// `g_k^A` per decode pair.
    pub equalizers: Vec<Complex64>,
    /// `w_k^A` per decode pair.
    pub weights: Vec<f64>,
    /// `X_k^A` in nats per share variable, see [`share_pairs`].
    pub shares: Vec<f64>,
    pub iteration: usize,
    /// WSR after each accepted iteration.
    pub trace: Vec<f64>,
}

/// Share variables `(stream index, user)`: every allocation-enabled member
/// of every multi-user stream.
pub fn share_pairs(layout: &StreamLayout) -> Vec<(usize, usize)> {
    layout
        .streams()
        .iter()
        .enumerate()
        .filter(|(_, s)| s.order() >= 2)
        .flat_map(|(i, _)| layout.allocation(i).members().map(move |k| (i, k)))
        .collect()
}

impl WmmseState {
    /// State at `precoders` with MMSE equalizers and weights and zero shares.
    pub fn new(
        layout: &StreamLayout,
        channel: &ChannelState,
        noise: &[f64],
        precoders: PrecoderSet,
    ) -> Result<Self> {
        let pairs: Vec<_> = layout.decode_pairs().collect();
        let mut state = Self {
            precoders,
            equalizers: vec![Complex64::new(0.0, 0.0); pairs.len()],
            weights: vec![1.0; pairs.len()],
            pairs,
            shares: vec![0.0; share_pairs(layout).len()],
            iteration: 0,
            trace: Vec::new(),
        };
        state.update_mmse(layout, channel, noise)?;
        Ok(state)
    }

    /// Closed-form `g ← g^MMSE(P)`, `w ← w^MMSE(P)` at the current precoders.
    pub fn update_mmse(
        &mut self,
        layout: &StreamLayout,
        channel: &ChannelState,
        noise: &[f64],
    ) -> Result<()> {
        let ctx = RateContext::new(layout, &self.precoders, channel, noise)?;
        for (i, &(s, k)) in self.pairs.iter().enumerate() {
            self.equalizers[i] = equalizer_at(&ctx, k, s);
            self.weights[i] = weight_at(&ctx, k, s);
        }
        Ok(())
    }

    /// Sets the shares to `X = −C ln 2` for the given allocation.
    pub fn set_shares(&mut self, layout: &StreamLayout, allocation: &CommonRateAllocation) {
        self.shares = share_pairs(layout)
            .iter()
            .map(|&(s, k)| -allocation.get(layout.stream(s), k) * LN_2)
            .collect();
    }
}

/// Column layout of the subproblem's decision vector.
#[derive(Debug, Clone, PartialEq)]
pub struct VariableMap {
    num_bs: usize,
    num_streams: usize,
    shares: Vec<(usize, usize)>,
    share_index: BTreeMap<(usize, usize), usize>,
    /// Precoder variables are `p / scale`.
    scale: f64,
    slack: Option<usize>,
}

impl VariableMap {
    fn new(layout: &StreamLayout, num_bs: usize, scale: f64, slack: bool) -> Self {
        let shares = share_pairs(layout);
        let base = 2 * layout.num_streams() * num_bs;
        let share_index = shares
            .iter()
            .enumerate()
            .map(|(i, p)| (*p, base + i))
            .collect();
        let slack = slack.then_some(base + shares.len());
        Self {
            num_bs,
            num_streams: layout.num_streams(),
            shares,
            share_index,
            scale,
            slack,
        }
    }

    /// Index of `Re p_{s,m}`; the imaginary part follows it.
    pub fn precoder(&self, stream: usize, bs: usize) -> usize {
        2 * (stream * self.num_bs + bs)
    }

    pub fn share(&self, stream: usize, user: usize) -> Option<usize> {
        self.share_index.get(&(stream, user)).copied()
    }

    pub fn slack(&self) -> Option<usize> {
        self.slack
    }

    pub fn num_vars(&self) -> usize {
        2 * self.num_streams * self.num_bs + self.shares.len() + usize::from(self.slack.is_some())
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Precoders and shares in nats read from a primal point.
    pub fn extract(&self, z: &DVector<f64>) -> (PrecoderSet, Vec<f64>) {
        let columns = (0..self.num_streams)
            .map(|s| {
                (0..self.num_bs)
                    .map(|m| {
                        let i = self.precoder(s, m);
                        Complex64::new(z[i], z[i + 1]) * self.scale
                    })
                    .collect()
            })
            .collect();
        let shares = self
            .shares
            .iter()
            .map(|p| z[self.share_index[p]].min(0.0))
            .collect();
        (
            PrecoderSet::new(self.num_bs, columns).unwrap_or_else(|_| {
                PrecoderSet::zeros(self.num_bs, self.num_streams)
            }),
            shares,
        )
    }
}

/// Structure counts of an assembled subproblem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubproblemSize {
    pub precoder_columns: usize,
    pub precoder_vars: usize,
    pub share_vars: usize,
    pub common_constraints: usize,
    pub power_constraints: usize,
    pub qos_constraints: usize,
    pub sign_constraints: usize,
}

/// The convex program of one AO iteration and how to read its solution.
#[derive(Debug, Clone)]
pub struct Subproblem {
    pub program: ConvexProgram,
    pub variables: VariableMap,
    pub size: SubproblemSize,
}

/// `ξ_k^A` as a quadratic in the decision vector:
/// `‖F z‖² + aᵀz + constant`.
struct WmseForm {
    rows: Vec<Vec<f64>>,
    linear: Vec<f64>,
    constant: f64,
}

/// Rows of `Re` and `Im` of `h^H p_s` over the decision vector.
fn projection_rows(h: &[Complex64], stream: usize, vars: &VariableMap) -> (Vec<f64>, Vec<f64>) {
    let n = vars.num_vars();
    let mut re = vec![0.0; n];
    let mut im = vec![0.0; n];
    for (m, hm) in h.iter().enumerate() {
        let i = vars.precoder(stream, m);
        // conj(a + ib)(x + iy) = (ax + by) + i(ay − bx)
        re[i] = hm.re * vars.scale;
        re[i + 1] = hm.im * vars.scale;
        im[i] = -hm.im * vars.scale;
        im[i + 1] = hm.re * vars.scale;
    }
    (re, im)
}

fn wmse_form(
    ctx: &RateContext<'_>,
    vars: &VariableMap,
    stream: usize,
    user: usize,
    g: Complex64,
    w: f64,
) -> WmseForm {
    let h = ctx.channel().user(user);
    let n = vars.num_vars();
    let coef = (w * g.norm_sqr()).sqrt();
    let mut rows = Vec::new();
    let mut linear = vec![0.0; n];
    for other in 0..ctx.layout().num_streams() {
        if other != stream && !ctx.interferes(user, stream, other) {
            continue;
        }
        let (re, im) = projection_rows(h, other, vars);
        if other == stream {
            // −2w Re{g v} = −2w (g_r Re v − g_i Im v)
            for j in 0..n {
                linear[j] = -2.0 * w * (g.re * re[j] - g.im * im[j]);
            }
        }
        if coef > 0.0 {
            rows.push(re.iter().map(|v| v * coef).collect());
            rows.push(im.iter().map(|v| v * coef).collect());
        }
    }
    WmseForm {
        rows,
        linear,
        constant: w * (g.norm_sqr() * ctx.noise(user) + 1.0) - w.ln(),
    }
}

fn norm_of(rows: &[Vec<f64>], n: usize) -> Option<SquaredNorm> {
    if rows.iter().all(|r| r.iter().all(|v| *v == 0.0)) {
        return None;
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    let matrix = DMatrix::from_row_slice(rows.len(), n, &flat);
    Some(SquaredNorm {
        offset: DVector::zeros(rows.len()),
        matrix,
    })
}

/// Adds `‖F z‖² + qᵀz ≤ r`, as a linear constraint when `F = 0`; trivially
/// satisfied constraints with an all-zero left side are skipped.
fn push(
    program: &mut ConvexProgram,
    rows: &[Vec<f64>],
    coeffs: Vec<f64>,
    bound: f64,
) -> Result<bool> {
    let n = program.num_vars();
    let constraint = match norm_of(rows, n) {
        Some(norm) => Constraint::quadratic(norm, coeffs, bound),
        None if coeffs.iter().all(|v| *v == 0.0) => {
            if bound >= 0.0 {
                return Ok(false);
            }
            Constraint::linear(coeffs, bound)
        }
        None => Constraint::linear(coeffs, bound),
    };
    program.add(constraint)?;
    Ok(true)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    /// Minimize the weighted total WMSE.
    Main,
    /// Minimize the largest QoS violation.
    Feasibility,
}

/// Builds the convex subproblem in `(P, x)` for the fixed `(g, w)` of
/// `state`.
pub fn assemble_subproblem(
    state: &WmmseState,
    instance: &ProblemInstance,
    layout: &StreamLayout,
    channel: &ChannelState,
) -> Result<Subproblem> {
    assemble(state, instance, layout, channel, Phase::Main)
}

fn assemble(
    state: &WmmseState,
    instance: &ProblemInstance,
    layout: &StreamLayout,
    channel: &ChannelState,
    phase: Phase,
) -> Result<Subproblem> {
    check_dimensions(instance, layout, channel, &state.precoders)?;
    let pairs: Vec<_> = layout.decode_pairs().collect();
    if state.pairs != pairs
        || state.equalizers.len() != pairs.len()
        || state.weights.len() != pairs.len()
    {
        return Err(Error::Assembly(
            "equalizers and weights do not cover the decode pairs".into(),
        ));
    }
    if let Some(w) = state.weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
        return Err(Error::Assembly(format!("weight {w} is not positive")));
    }
    if state.equalizers.iter().any(|g| !(g.re.is_finite() && g.im.is_finite())) {
        return Err(Error::Assembly("non-finite equalizer".into()));
    }

    let noise = instance.noise_variance();
    let ctx = RateContext::new(layout, &state.precoders, channel, noise)?;
    let budgets = instance.per_bs_power();
    let scale = budgets.iter().fold(0.0_f64, |a, b| a.max(*b)).sqrt();
    let vars = VariableMap::new(layout, instance.num_bs(), scale, phase == Phase::Feasibility);
    let n = vars.num_vars();
    let mut program = ConvexProgram::new(n)?;
    let mut size = SubproblemSize {
        precoder_columns: layout.num_streams(),
        precoder_vars: 2 * layout.num_streams() * instance.num_bs(),
        share_vars: share_pairs(layout).len(),
        common_constraints: 0,
        power_constraints: 0,
        qos_constraints: 0,
        sign_constraints: 0,
    };

    let forms: Vec<WmseForm> = pairs
        .iter()
        .enumerate()
        .map(|(i, &(s, k))| wmse_form(&ctx, &vars, s, k, state.equalizers[i], state.weights[i]))
        .collect();
    let form_of = |s: usize, k: usize| pairs.iter().position(|p| *p == (s, k)).map(|i| &forms[i]);

    // Σ_{k'∈A} X_{k'}^A + 1 ≥ ξ_k^A for every member k.
    for (i, &(s, _)) in pairs.iter().enumerate() {
        if layout.stream(s).order() < 2 {
            continue;
        }
        let f = &forms[i];
        let mut q = f.linear.clone();
        for k in layout.allocation(s).members() {
            if let Some(j) = vars.share(s, k) {
                q[j] -= 1.0;
            }
        }
        if push(&mut program, &f.rows, q, 1.0 - f.constant)? {
            size.common_constraints += 1;
        }
    }

    // [P P^H]_{m,m} ≤ P_m
    for (m, budget) in budgets.iter().enumerate() {
        let rows: Vec<Vec<f64>> = (0..layout.num_streams())
            .flat_map(|s| {
                let i = vars.precoder(s, m);
                [i, i + 1].map(|j| {
                    let mut r = vec![0.0; n];
                    r[j] = 1.0;
                    r
                })
            })
            .collect();
        if push(&mut program, &rows, vec![0.0; n], budget / (scale * scale))? {
            size.power_constraints += 1;
        }
    }

    // ξ_{k,tot} = Σ_{A∋k} X_k^A + ξ_k^k
    let mut objective_rows: Vec<Vec<f64>> = Vec::new();
    let mut objective_linear = vec![0.0; n];
    let mut objective_constant = 0.0;
    let top = instance.weights().iter().fold(0.0_f64, |a, b| a.max(*b));
    for k in 1..=layout.num_users() {
        let mut rows = Vec::new();
        let mut q = vec![0.0; n];
        let mut constant = 0.0;
        let private = layout.private_stream(k);
        if let Some(form) = private.and_then(|s| form_of(s, k)) {
            rows.clone_from(&form.rows);
            q.clone_from(&form.linear);
            constant = form.constant;
        }
        for (s, a) in layout.streams().iter().enumerate() {
            if a.order() >= 2 {
                if let Some(j) = vars.share(s, k) {
                    q[j] += 1.0;
                }
            }
        }
        // Without a private stream, R_{k,tot} = −Σ X / ln 2 and the 1 is dropped.
        let one = if private.is_some() { 1.0 } else { 0.0 };
        let bound = one - instance.qos()[k - 1] * LN_2 - constant;
        let mut qos_q = q.clone();
        if let Some(t) = vars.slack() {
            qos_q[t] = -1.0;
        }
        if push(&mut program, &rows, qos_q, bound)? {
            size.qos_constraints += 1;
        }
        if phase == Phase::Main {
            let u = instance.weights()[k - 1] / top;
            let su = u.sqrt();
            objective_rows.extend(rows.iter().map(|r| r.iter().map(|v| v * su).collect::<Vec<_>>()));
            for j in 0..n {
                objective_linear[j] += u * q[j];
            }
            objective_constant += u * (constant - one);
        }
    }

    // x ≤ 0
    for &(s, k) in &share_pairs(layout) {
        let mut a = vec![0.0; n];
        a[vars.share(s, k).expect("share variable")] = 1.0;
        program.add(Constraint::linear(a, 0.0))?;
        size.sign_constraints += 1;
    }

    match phase {
        Phase::Main => {
            program.set_linear_objective(objective_linear)?;
            if let Some(norm) = norm_of(&objective_rows, n) {
                program.set_quadratic_objective(norm)?;
            }
            program.set_objective_constant(objective_constant);
        }
        Phase::Feasibility => {
            let t = vars.slack().expect("slack variable");
            let mut c = vec![0.0; n];
            c[t] = 1.0;
            program.set_linear_objective(c)?;
            let mut floor = vec![0.0; n];
            floor[t] = -1.0;
            program.add(Constraint::linear(floor, 1.0))?;
        }
    }
    Ok(Subproblem {
        program,
        variables: vars,
        size,
    })
}

fn check_dimensions(
    instance: &ProblemInstance,
    layout: &StreamLayout,
    channel: &ChannelState,
    precoders: &PrecoderSet,
) -> Result<()> {
    precoders.check_layout(layout)?;
    if instance.num_users() != layout.num_users() || channel.num_users() != layout.num_users() {
        return Err(Error::Dimension(format!(
            "instance has {} users, layout {} and channel {}",
            instance.num_users(),
            layout.num_users(),
            channel.num_users()
        )));
    }
    if instance.num_bs() != channel.num_bs() || precoders.num_bs() != channel.num_bs() {
        return Err(Error::Dimension(format!(
            "instance has {} BSs, channel {} and precoders {}",
            instance.num_bs(),
            channel.num_bs(),
            precoders.num_bs()
        )));
    }
    Ok(())
}

/// Dominant left singular vector of `[h_k]_{k∈A}`, the unit `v` maximizing
/// `Σ_{k∈A} |h_k^H v|²`.
fn dominant_direction(channel: &ChannelState, stream: UserSet) -> Vec<Complex64> {
    let m = channel.num_bs();
    let members = stream.member_vec();
    let stacked = DMatrix::from_fn(m, members.len(), |i, j| channel.user(members[j])[i]);
    let fallback = vec![Complex64::new(1.0 / (m as f64).sqrt(), 0.0); m];
    let svd = stacked.svd(true, false);
    let Some(u) = svd.u else { return fallback };
    let best = svd
        .singular_values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if *v > acc.1 { (i, *v) } else { acc });
    if !(best.1 > 0.0) {
        return fallback;
    }
    let mut v: Vec<Complex64> = u.column(best.0).iter().copied().collect();
    // Fix the global phase so the largest entry is real and positive.
    if let Some(pivot) = v.iter().copied().max_by(|a, b| a.norm().total_cmp(&b.norm())) {
        if pivot.norm() > 0.0 {
            let phase = pivot.conj() / pivot.norm();
            for e in &mut v {
                *e *= phase;
            }
        }
    }
    v
}

/// Initial precoders: matched filters for private streams, dominant
/// singular directions for multi-user streams. Half the power goes to the
/// highest-order streams (all of it is shared equally when every stream is
/// private), the rest is split equally, and the result is scaled so the most
/// loaded BS sits exactly at its budget.
pub fn initialize_precoders(
    instance: &ProblemInstance,
    layout: &StreamLayout,
    channel: &ChannelState,
) -> Result<PrecoderSet> {
    let probe = PrecoderSet::zeros(instance.num_bs(), layout.num_streams());
    check_dimensions(instance, layout, channel, &probe)?;
    let streams = layout.streams();
    let top = streams[0].order();
    let n_top = streams.iter().filter(|s| s.order() == top).count();
    let n_rest = streams.len() - n_top;
    let shares: Vec<f64> = streams
        .iter()
        .map(|s| {
            if top == 1 || n_rest == 0 {
                1.0 / streams.len() as f64
            } else if s.order() == top {
                0.5 / n_top as f64
            } else {
                0.5 / n_rest as f64
            }
        })
        .collect();
    let total = instance.total_power();
    let columns: Vec<Vec<Complex64>> = streams
        .iter()
        .zip(&shares)
        .map(|(s, q)| {
            let dir = dominant_direction(channel, *s);
            let amp = (q * total).sqrt();
            dir.into_iter().map(|v| v * amp).collect()
        })
        .collect();
    let mut precoders = PrecoderSet::new(instance.num_bs(), columns)?;
    let load = precoders
        .per_bs_power()
        .iter()
        .zip(instance.per_bs_power())
        .map(|(p, b)| p / b)
        .fold(0.0_f64, f64::max);
    if load > 0.0 {
        let scale = load.sqrt().recip();
        for s in 0..precoders.num_streams() {
            for v in precoders.column_mut(s) {
                *v *= scale;
            }
        }
    }
    precoders.clip_to_budgets(instance.per_bs_power());
    Ok(precoders)
}

/// Termination of [`ao_solve`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AoStatus {
    /// WSR change fell below the tolerance, or no further ascent was found.
    Converged,
    MaxIterations,
    /// The QoS thresholds could not be met.
    Infeasible,
    /// The inner solver failed before convergence.
    SolverStalled,
}

impl AoStatus {
    /// Whether the returned point satisfies the QoS thresholds.
    pub fn is_feasible(self) -> bool {
        self != AoStatus::Infeasible
    }
}

/// Options of the alternating optimization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AoOptions {
    /// Stop once `|WSR^[n] − WSR^[n−1]|` is at most this (bit/s/Hz).
    pub tolerance: f64,
    pub max_iterations: usize,
    /// QoS slack accepted on reported points (bit/s/Hz).
    pub qos_tolerance: f64,
    pub max_feasibility_iterations: usize,
    pub solver: SolverSettings,
}

impl Default for AoOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-4,
            max_iterations: 300,
            qos_tolerance: 1e-6,
            max_feasibility_iterations: 200,
            solver: SolverSettings::default(),
        }
    }
}

/// One line of the iteration trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub wsr: f64,
    /// `max_m ([PP^H]_{m,m} − P_m)`.
    pub max_power_residual: f64,
    /// `max_k (R_k^th − R_{k,tot})`.
    pub max_qos_residual: f64,
}

/// Solver-side information about a run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub warnings: Vec<String>,
    /// Interior-point iterations summed over all subproblems.
    pub solver_iterations: usize,
    pub feasibility_iterations: usize,
    pub last_solver_status: Option<cone::Status>,
}

/// Result of [`ao_solve`].
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub precoders: PrecoderSet,
    /// `c = −x / ln 2`.
    pub allocation: CommonRateAllocation,
    pub report: RateReport,
    pub status: AoStatus,
    /// AO iterations performed.
    pub iterations: usize,
    pub per_bs_power: Vec<f64>,
    pub trace: Vec<TraceRecord>,
    pub diagnostics: Diagnostics,
}

impl Solution {
    pub fn wsr(&self) -> f64 {
        self.report.wsr
    }

    pub fn user_rates(&self) -> &[f64] {
        &self.report.user_totals
    }
}

#[derive(Debug, Clone)]
struct Point {
    precoders: PrecoderSet,
    allocation: CommonRateAllocation,
    report: RateReport,
    qos_residual: f64,
}

/// Makes `raw` a valid allocation for `precoders`: shares off the layout's
/// enabled pairs are dropped, streams whose shares exceed `R_A` are scaled
/// down, and leftover stream rate goes to the enabled member with the
/// largest weight.
fn settle_allocation(
    ctx: &RateContext<'_>,
    weights: &[f64],
    raw: impl IntoIterator<Item = (usize, usize, f64)>,
) -> Result<CommonRateAllocation> {
    let layout = ctx.layout();
    let mut alloc = CommonRateAllocation::new();
    for (s, k, c) in raw {
        let stream = layout.stream(s);
        if layout.allows_share(stream, k) && c > 0.0 && c.is_finite() {
            alloc.set(stream, k, c)?;
        }
    }
    for (s, stream) in layout.streams().iter().enumerate() {
        if stream.order() < 2 {
            continue;
        }
        let rate = ctx.common_stream_rate_at(s).max(0.0);
        let total = alloc.stream_total(*stream);
        if total > rate {
            alloc.scale_stream(*stream, rate / total);
        }
        let leftover = rate - alloc.stream_total(*stream);
        if leftover > 0.0 {
            let best = layout
                .allocation(s)
                .members()
                .fold(None::<usize>, |b, k| match b {
                    Some(j) if weights[j - 1] >= weights[k - 1] => Some(j),
                    _ => Some(k),
                });
            if let Some(k) = best {
                let c = alloc.get(*stream, k) + leftover;
                alloc.set(*stream, k, c)?;
            }
        }
    }
    Ok(alloc)
}

fn evaluate(
    instance: &ProblemInstance,
    layout: &StreamLayout,
    channel: &ChannelState,
    precoders: PrecoderSet,
    raw: impl IntoIterator<Item = (usize, usize, f64)>,
) -> Result<Point> {
    let ctx = RateContext::new(layout, &precoders, channel, instance.noise_variance())?;
    let allocation = settle_allocation(&ctx, instance.weights(), raw)?;
    let report = ctx.report(instance.weights(), &allocation)?;
    let qos_residual = report
        .user_totals
        .iter()
        .zip(instance.qos())
        .map(|(r, th)| th - r)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(Point {
        precoders,
        allocation,
        report,
        qos_residual,
    })
}

fn record(iteration: usize, point: &Point, budgets: &[f64]) -> TraceRecord {
    TraceRecord {
        iteration,
        wsr: point.report.wsr,
        max_power_residual: point.precoders.max_power_residual(budgets),
        max_qos_residual: point.qos_residual,
    }
}

/// Solves one subproblem at `point` and returns the candidate it yields.
fn step(
    instance: &ProblemInstance,
    layout: &StreamLayout,
    channel: &ChannelState,
    point: &Point,
    phase: Phase,
    options: &AoOptions,
    diagnostics: &mut Diagnostics,
) -> Result<(cone::Status, Option<Point>)> {
    let mut state = WmmseState::new(
        layout,
        channel,
        instance.noise_variance(),
        point.precoders.clone(),
    )?;
    state.set_shares(layout, &point.allocation);
    let sub = assemble(&state, instance, layout, channel, phase)?;
    let sol = cone::solve(&sub.program, &options.solver);
    diagnostics.solver_iterations += sol.iterations;
    diagnostics.last_solver_status = Some(sol.status);
    if matches!(sol.status, cone::Status::Infeasible | cone::Status::Unbounded) {
        return Ok((sol.status, None));
    }
    let (mut precoders, shares) = sub.variables.extract(&sol.primal);
    precoders.clip_to_budgets(instance.per_bs_power());
    let raw = share_pairs(layout)
        .into_iter()
        .zip(shares)
        .map(|((s, k), x)| (s, k, -x / LN_2));
    Ok((sol.status, Some(evaluate(instance, layout, channel, precoders, raw)?)))
}

/// Runs the feasibility phase from `point`; returns the best point found
/// and whether it meets the QoS thresholds with margin.
fn feasibility_phase(
    instance: &ProblemInstance,
    layout: &StreamLayout,
    channel: &ChannelState,
    mut point: Point,
    options: &AoOptions,
    diagnostics: &mut Diagnostics,
) -> Result<(Point, bool)> {
    let margin = -options.qos_tolerance.min(1e-7);
    let mut idle = 0;
    for _ in 0..options.max_feasibility_iterations {
        if point.qos_residual <= margin {
            return Ok((point, true));
        }
        diagnostics.feasibility_iterations += 1;
        let (_, candidate) =
            step(instance, layout, channel, &point, Phase::Feasibility, options, diagnostics)?;
        match candidate {
            Some(c) if c.qos_residual < point.qos_residual - 1e-9 => {
                if c.qos_residual > point.qos_residual - 1e-7 {
                    idle += 1;
                } else {
                    idle = 0;
                }
                point = c;
            }
            _ => idle += 1,
        }
        if idle >= 10 {
            break;
        }
    }
    let ok = point.qos_residual <= margin;
    Ok((point, ok))
}

/// Alternating optimization from `init` with zero initial shares.
pub fn ao_solve(
    instance: &ProblemInstance,
    layout: &StreamLayout,
    channel: &ChannelState,
    init: &PrecoderSet,
    options: &AoOptions,
) -> Result<Solution> {
    ao_solve_warm(instance, layout, channel, init, None, options)
}

/// Alternating optimization from `init` and, optionally, an initial share
/// allocation. The returned WSR is never below that of the starting point
/// when the start meets the QoS thresholds.
pub fn ao_solve_warm(
    instance: &ProblemInstance,
    layout: &StreamLayout,
    channel: &ChannelState,
    init: &PrecoderSet,
    allocation: Option<&CommonRateAllocation>,
    options: &AoOptions,
) -> Result<Solution> {
    check_dimensions(instance, layout, channel, init)?;
    let budgets = instance.per_bs_power();
    let excess = init.max_power_residual(budgets);
    if excess > 1e-6 * (1.0 + budgets.iter().fold(0.0_f64, |a, b| a.max(*b))) {
        return Err(Error::Domain(format!(
            "initial precoders exceed a BS budget by {excess:.3e} W"
        )));
    }
    let mut precoders = init.clone();
    precoders.clip_to_budgets(budgets);
    let raw: Vec<(usize, usize, f64)> = allocation
        .map(|a| {
            a.iter()
                .filter_map(|(s, k, c)| layout.index_of(s).map(|i| (i, k, c)))
                .collect()
        })
        .unwrap_or_default();
    let mut point = evaluate(instance, layout, channel, precoders, raw)?;
    let mut diagnostics = Diagnostics::default();

    if point.qos_residual > 0.0 {
        let (p, ok) = feasibility_phase(instance, layout, channel, point, options, &mut diagnostics)?;
        point = p;
        if !ok {
            return Ok(finish(point, AoStatus::Infeasible, 0, Vec::new(), diagnostics, budgets));
        }
    }

    let mut trace = vec![record(0, &point, budgets)];
    let mut status = AoStatus::MaxIterations;
    let mut iterations = 0;
    for it in 1..=options.max_iterations {
        iterations = it;
        let (solver, candidate) =
            step(instance, layout, channel, &point, Phase::Main, options, &mut diagnostics)?;
        let accepted = candidate.filter(|c| {
            c.report.wsr >= point.report.wsr - MONOTONE_SLACK
                && c.qos_residual <= options.qos_tolerance.max(point.qos_residual)
        });
        let Some(next) = accepted else {
            let stalled = solver != cone::Status::Optimal;
            if !stalled {
                diagnostics.warnings.push(format!(
                    "iteration {it}: no ascent step, stopping at WSR {:.9}",
                    point.report.wsr
                ));
            } else {
                diagnostics
                    .warnings
                    .push(format!("iteration {it}: inner solver ended with {solver:?}"));
            }
            status = if stalled {
                AoStatus::SolverStalled
            } else {
                AoStatus::Converged
            };
            break;
        };
        let delta = next.report.wsr - point.report.wsr;
        if delta < -WARNING_DROP {
            diagnostics
                .warnings
                .push(format!("iteration {it}: WSR decreased by {:.3e}", -delta));
        }
        point = next;
        trace.push(record(it, &point, budgets));
        if delta.abs() <= options.tolerance {
            status = AoStatus::Converged;
            break;
        }
    }
    Ok(finish(point, status, iterations, trace, diagnostics, budgets))
}

fn finish(
    point: Point,
    status: AoStatus,
    iterations: usize,
    trace: Vec<TraceRecord>,
    diagnostics: Diagnostics,
    budgets: &[f64],
) -> Solution {
    let trace = if trace.is_empty() {
        vec![record(0, &point, budgets)]
    } else {
        trace
    };
    Solution {
        per_bs_power: point.precoders.per_bs_power(),
        precoders: point.precoders,
        allocation: point.allocation,
        report: point.report,
        status,
        iterations,
        trace,
        diagnostics,
    }
}
