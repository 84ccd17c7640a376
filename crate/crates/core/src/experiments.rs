//! Rate-region and sum-rate experiments over Wyner-model channel draws.
//!
//! Every realization is solved independently (in parallel when a rayon pool
//! is available) and results are reduced in realization order, so serial
//! and parallel runs give identical output.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channels::{ChannelState, Topology};
use crate::error::{Error, Result};
use crate::model::{decoding_order_variants, PrecoderSet, ProblemInstance, StreamLayout};
use crate::rate::{CommonRateAllocation, ALLOCATION_TOLERANCE};
use crate::schemes::{build_scheme, SchemeFamily, POWER_TOLERANCE, QOS_TOLERANCE};
use crate::wmmse::{ao_solve_warm, initialize_precoders, AoOptions, AoStatus, Solution, TraceRecord};

/// `[-3] ∪ {-1, -0.95, …, 1} ∪ [3]`, 43 exponents of `u_2`.
pub fn default_weight_exponents() -> Vec<f64> {
    let mut x = vec![-3.0];
    x.extend((-20..=20).map(|i| i as f64 / 20.0));
    x.push(3.0);
    x
}

/// SNR grid of the sum-rate experiment (dB).
pub const DEFAULT_SNR_DB: [f64; 7] = [0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0];

/// QoS thresholds paired with [`DEFAULT_SNR_DB`] (bit/s/Hz).
pub const DEFAULT_QOS_SCHEDULE: [f64; 7] = [0.001, 0.01, 0.03, 0.08, 0.1, 0.1, 0.1];

/// Desk-scale Monte Carlo size.
pub const DEFAULT_REALIZATIONS: usize = 25;

/// Everything needed to reproduce an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub topology: Topology,
    pub alpha: f64,
    pub beta: f64,
    pub snr_db: Vec<f64>,
    pub schemes: Vec<SchemeFamily>,
    pub realizations: usize,
    pub seed: u64,
    /// Exponents `x` of `u_2 = 10^x` (`u_1 = 1`); region experiments only.
    pub weight_exponents: Vec<f64>,
    /// One QoS threshold per SNR point, applied to every user.
    pub qos: Vec<f64>,
    /// AO stopping tolerance on the WSR change (bit/s/Hz).
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl ExperimentConfig {
    /// Two-user rate-region sweep at 20 dB with zero QoS thresholds.
    pub fn region(topology: Topology, alpha: f64, beta: f64) -> Self {
        Self {
            topology,
            alpha,
            beta,
            snr_db: vec![20.0],
            schemes: vec![
                SchemeFamily::Rs,
                SchemeFamily::OneLayerRs,
                SchemeFamily::Mulp,
                SchemeFamily::Scsic,
            ],
            realizations: DEFAULT_REALIZATIONS,
            seed: 1,
            weight_exponents: default_weight_exponents(),
            qos: vec![0.0],
            tolerance: 1e-4,
            max_iterations: 300,
        }
    }

    /// Sum rate over the default SNR grid and QoS schedule with unit weights.
    pub fn sum_rate(topology: Topology, alpha: f64, beta: f64) -> Self {
        Self {
            topology,
            alpha,
            beta,
            snr_db: DEFAULT_SNR_DB.to_vec(),
            schemes: SchemeFamily::ALL.to_vec(),
            realizations: DEFAULT_REALIZATIONS,
            seed: 1,
            weight_exponents: Vec::new(),
            qos: DEFAULT_QOS_SCHEDULE.to_vec(),
            tolerance: 1e-4,
            max_iterations: 300,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.topology.variance_profile(self.alpha, self.beta)?;
        if self.realizations == 0 {
            return Err(Error::Config("realization count must be at least 1".into()));
        }
        if self.snr_db.is_empty() {
            return Err(Error::Config("SNR grid is empty".into()));
        }
        if let Some(s) = self.snr_db.iter().find(|s| !s.is_finite() || s.abs() > 100.0) {
            return Err(Error::Config(format!("SNR {s} dB outside [-100, 100]")));
        }
        if self.qos.len() != self.snr_db.len() {
            return Err(Error::Config(format!(
                "QoS schedule has {} entries for {} SNR points",
                self.qos.len(),
                self.snr_db.len()
            )));
        }
        if let Some(q) = self.qos.iter().find(|q| !(q.is_finite() && **q >= 0.0)) {
            return Err(Error::Config(format!("QoS threshold {q} must be nonnegative")));
        }
        if self.schemes.is_empty() {
            return Err(Error::Config("no schemes selected".into()));
        }
        for (i, s) in self.schemes.iter().enumerate() {
            if self.schemes[..i].contains(s) {
                return Err(Error::Config(format!("scheme {s} listed twice")));
            }
        }
        if let Some(x) = self
            .weight_exponents
            .iter()
            .find(|x| !x.is_finite() || x.abs() > 12.0)
        {
            return Err(Error::Config(format!("weight exponent {x} outside [-12, 12]")));
        }
        if !(self.tolerance.is_finite() && self.tolerance > 0.0) {
            return Err(Error::Config(format!("tolerance {} must be positive", self.tolerance)));
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("iteration cap must be at least 1".into()));
        }
        Ok(())
    }

    fn options(&self) -> AoOptions {
        AoOptions {
            tolerance: self.tolerance,
            max_iterations: self.max_iterations,
            ..AoOptions::default()
        }
    }

    /// `P_m = 10^(SNR/10) / M`.
    pub fn per_bs_power(&self, snr_db: f64) -> Vec<f64> {
        let m = self.topology.num_bs();
        vec![10f64.powf(snr_db / 10.0) / m as f64; m]
    }

    fn instance(&self, snr_idx: usize, weights: Vec<f64>) -> Result<ProblemInstance> {
        let k = self.topology.num_users();
        ProblemInstance::new(
            self.per_bs_power(self.snr_db[snr_idx]),
            vec![self.qos[snr_idx]; k],
            weights,
        )
    }

    pub fn channel(&self, realization: usize) -> Result<ChannelState> {
        self.topology
            .realization(self.alpha, self.beta, self.seed, realization as u64)
    }
}

/// Mean of one metric with a normal-approximation 95% half-width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloSummary {
    pub mean: f64,
    /// `None` for a single sample.
    pub halfwidth: Option<f64>,
    pub count: usize,
}

/// Averages each metric (column) over realizations (rows).
pub fn monte_carlo_average(samples: &[Vec<f64>]) -> Result<Vec<MonteCarloSummary>> {
    let Some(first) = samples.first() else {
        return Err(Error::Config("no realizations to average".into()));
    };
    let width = first.len();
    if samples.iter().any(|s| s.len() != width) {
        return Err(Error::Dimension("ragged Monte Carlo samples".into()));
    }
    let n = samples.len();
    Ok((0..width)
        .map(|j| {
            let mean = samples.iter().map(|s| s[j]).sum::<f64>() / n as f64;
            let halfwidth = (n > 1).then(|| {
                let var = samples.iter().map(|s| (s[j] - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
                1.96 * (var / n as f64).sqrt()
            });
            MonteCarloSummary {
                mean,
                halfwidth,
                count: n,
            }
        })
        .collect())
}

/// Upper-right boundary of the convex hull of `points`: the vertices that
/// are maximal for some nonnegative weight pair, ordered by increasing
/// first coordinate.
pub fn convex_hull_2d(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut pts: Vec<[f64; 2]> = points
        .iter()
        .copied()
        .filter(|p| p[0].is_finite() && p[1].is_finite())
        .collect();
    if pts.is_empty() {
        return pts;
    }
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(b[1].total_cmp(&a[1])));
    pts.dedup();
    let top = pts
        .iter()
        .copied()
        .max_by(|a, b| a[1].total_cmp(&b[1]).then(a[0].total_cmp(&b[0])))
        .expect("nonempty");
    let right = pts
        .iter()
        .copied()
        .max_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])))
        .expect("nonempty");
    let cross = |o: [f64; 2], a: [f64; 2], b: [f64; 2]| {
        (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
    };
    let mut hull: Vec<[f64; 2]> = Vec::new();
    for p in pts
        .into_iter()
        .filter(|p| p[0] >= top[0] && p[1] >= right[1])
    {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) >= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    hull.retain(|p| *p == top || *p == right || (p[0] > top[0] && p[1] > right[1]));
    hull
}

/// Euclidean distance from `point` to the region spanned by `hull`
/// (its convex hull together with everything it dominates in the
/// nonnegative quadrant); zero inside.
pub fn distance_outside(hull: &[[f64; 2]], point: [f64; 2]) -> f64 {
    if hull.is_empty() {
        return point[0].max(0.0).hypot(point[1].max(0.0));
    }
    let mut poly = vec![[0.0, 0.0], [0.0, hull[0][1].max(0.0)]];
    poly.extend(hull.iter().copied());
    poly.push([hull[hull.len() - 1][0].max(0.0), 0.0]);
    poly.dedup();
    let n = poly.len();
    // clockwise: inside means every edge has the point on its right
    let inside = (0..n).all(|i| {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        (b[0] - a[0]) * (point[1] - a[1]) - (b[1] - a[1]) * (point[0] - a[0]) <= 0.0
    });
    if inside {
        return 0.0;
    }
    (0..n)
        .map(|i| segment_distance(poly[i], poly[(i + 1) % n], point))
        .fold(f64::INFINITY, f64::min)
}

fn segment_distance(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> f64 {
    let d = [b[0] - a[0], b[1] - a[1]];
    let len2 = d[0] * d[0] + d[1] * d[1];
    let t = if len2 > 0.0 {
        (((p[0] - a[0]) * d[0] + (p[1] - a[1]) * d[1]) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (p[0] - a[0] - t * d[0]).hypot(p[1] - a[1] - t * d[1])
}

/// Largest distance of an `inner` vertex outside the region of `outer`.
pub fn hull_dominance_gap(outer: &[[f64; 2]], inner: &[[f64; 2]]) -> f64 {
    inner
        .iter()
        .map(|p| distance_outside(outer, *p))
        .fold(0.0, f64::max)
}

/// One solved scheme variant at one operating point.
#[derive(Debug, Clone)]
struct Solved {
    family: SchemeFamily,
    order: String,
    layout: StreamLayout,
    solution: Solution,
}

/// Outcome of one scheme variant on one realization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealizationRecord {
    pub realization: usize,
    pub family: SchemeFamily,
    /// Decoding-order label, `-` when the family has a single order.
    pub order: String,
    pub snr_db: f64,
    pub weight_exponent: Option<f64>,
    pub rates: Vec<f64>,
    pub wsr: f64,
    pub status: AoStatus,
    /// Largest per-BS power excess (W).
    pub max_power_residual: f64,
}

fn variants(
    family: SchemeFamily,
    num_users: usize,
) -> Result<Vec<(String, StreamLayout)>> {
    let label = |s: String| if s.is_empty() { "-".to_string() } else { s };
    if family == SchemeFamily::Rs {
        let full = StreamLayout::full(num_users)?;
        return decoding_order_variants(&full)?
            .into_iter()
            .map(|l| Ok((label(l.order_label()), l)))
            .collect();
    }
    family
        .variants(num_users)?
        .into_iter()
        .map(|k| Ok((label(k.order_label()), build_scheme(&k, num_users)?)))
        .collect()
}

/// Families in the order they are solved; restrictions come first so they
/// can seed the larger schemes.
const SOLVE_ORDER: [SchemeFamily; 5] = [
    SchemeFamily::Mulp,
    SchemeFamily::Scsic,
    SchemeFamily::ScsicGroup,
    SchemeFamily::OneLayerRs,
    SchemeFamily::Rs,
];

fn restricts(small: SchemeFamily, large: SchemeFamily) -> bool {
    match large {
        SchemeFamily::Rs => small != SchemeFamily::Rs,
        SchemeFamily::OneLayerRs => small == SchemeFamily::Mulp,
        _ => false,
    }
}

fn better(a: &Solution, b: &Solution) -> bool {
    match (a.status.is_feasible(), b.status.is_feasible()) {
        (true, false) => true,
        (false, true) => false,
        _ => a.wsr() > b.wsr(),
    }
}

/// Solves every requested variant at one operating point. Each variant
/// keeps the best of: the default initialization, the previous point's
/// solution of the same variant, and every restriction solved here that
/// embeds into it.
fn solve_point(
    config: &ExperimentConfig,
    instance: &ProblemInstance,
    channel: &ChannelState,
    previous: Option<&[Solved]>,
) -> Result<Vec<Solved>> {
    let options = config.options();
    let k = instance.num_users();
    let mut solved: Vec<Solved> = Vec::new();
    for family in SOLVE_ORDER {
        if !config.schemes.contains(&family) {
            continue;
        }
        for (order, layout) in variants(family, k)? {
            let mut starts: Vec<(PrecoderSet, Option<CommonRateAllocation>)> =
                vec![(initialize_precoders(instance, &layout, channel)?, None)];
            if let Some(prev) = previous
                .and_then(|p| p.iter().find(|s| s.family == family && s.order == order))
            {
                starts.push((prev.solution.precoders.clone(), Some(prev.solution.allocation.clone())));
            }
            for r in solved.iter().filter(|s| restricts(s.family, family)) {
                if let Ok(p) = r.solution.precoders.embed(&r.layout, &layout) {
                    starts.push((p, Some(r.solution.allocation.clone())));
                }
            }
            let mut best: Option<Solution> = None;
            for (init, alloc) in starts {
                let s = ao_solve_warm(instance, &layout, channel, &init, alloc.as_ref(), &options)?;
                if best.as_ref().is_none_or(|b| better(&s, b)) {
                    best = Some(s);
                }
            }
            solved.push(Solved {
                family,
                order,
                layout,
                solution: best.expect("at least one start"),
            });
        }
    }
    Ok(solved)
}

fn record(
    realization: usize,
    snr_db: f64,
    weight_exponent: Option<f64>,
    instance: &ProblemInstance,
    s: &Solved,
) -> RealizationRecord {
    RealizationRecord {
        realization,
        family: s.family,
        order: s.order.clone(),
        snr_db,
        weight_exponent,
        rates: s.solution.report.user_totals.clone(),
        wsr: s.solution.wsr(),
        status: s.solution.status,
        max_power_residual: s.solution.precoders.max_power_residual(instance.per_bs_power()),
    }
}

/// Averaged operating point of one scheme variant at one weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionPoint {
    pub family: SchemeFamily,
    pub order: String,
    pub weight_exponent: f64,
    pub weights: Vec<f64>,
    pub rates: Vec<f64>,
    pub sum_rate: MonteCarloSummary,
    pub realization_count: usize,
}

/// Output of [`rate_region`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionResult {
    pub points: Vec<RegionPoint>,
    /// Upper-right hull per family over all its orders and weights.
    pub hulls: BTreeMap<SchemeFamily, Vec<[f64; 2]>>,
    pub records: Vec<RealizationRecord>,
}

fn map_realizations<T: Send>(
    count: usize,
    f: impl Fn(usize) -> Result<T> + Sync + Send,
) -> Result<Vec<T>> {
    (0..count).into_par_iter().map(f).collect()
}

/// Weight sweep for two users: each realization is solved along the weight
/// grid with warm starts, rate pairs are averaged per weight point, then
/// hulled per family.
pub fn rate_region(config: &ExperimentConfig) -> Result<RegionResult> {
    config.validate()?;
    if config.topology.num_users() != 2 {
        return Err(Error::Config(format!(
            "rate regions need two users, {} has {}",
            config.topology,
            config.topology.num_users()
        )));
    }
    if config.snr_db.len() != 1 {
        return Err(Error::Config("a rate region uses a single SNR".into()));
    }
    if config.weight_exponents.is_empty() {
        return Err(Error::Config("weight grid is empty".into()));
    }
    let snr = config.snr_db[0];
    let per_realization = map_realizations(config.realizations, |r| {
        let channel = config.channel(r)?;
        let mut previous: Option<Vec<Solved>> = None;
        let mut out = Vec::new();
        for &x in &config.weight_exponents {
            let instance = config.instance(0, vec![1.0, 10f64.powf(x)])?;
            let solved = solve_point(config, &instance, &channel, previous.as_deref())?;
            out.extend(solved.iter().map(|s| record(r, snr, Some(x), &instance, s)));
            previous = Some(solved);
        }
        Ok(out)
    })?;
    let records: Vec<RealizationRecord> = per_realization.into_iter().flatten().collect();

    let mut points = Vec::new();
    let mut hull_input: BTreeMap<SchemeFamily, Vec<[f64; 2]>> = BTreeMap::new();
    let keys = records
        .iter()
        .filter(|r| r.realization == 0)
        .map(|r| (r.family, r.order.clone(), r.weight_exponent.expect("weighted")));
    for (family, order, x) in keys {
        let samples: Vec<Vec<f64>> = records
            .iter()
            .filter(|r| {
                r.family == family
                    && r.order == order
                    && r.weight_exponent == Some(x)
                    && r.status.is_feasible()
            })
            .map(|r| {
                let mut v = r.rates.clone();
                v.push(r.rates.iter().sum());
                v
            })
            .collect();
        if samples.is_empty() {
            continue;
        }
        let avg = monte_carlo_average(&samples)?;
        let rates: Vec<f64> = avg[..2].iter().map(|s| s.mean).collect();
        hull_input.entry(family).or_default().push([rates[0], rates[1]]);
        points.push(RegionPoint {
            family,
            order,
            weight_exponent: x,
            weights: vec![1.0, 10f64.powf(x)],
            rates,
            sum_rate: avg[2],
            realization_count: samples.len(),
        });
    }
    let hulls = hull_input
        .into_iter()
        .map(|(f, pts)| (f, convex_hull_2d(&pts)))
        .collect();
    Ok(RegionResult {
        points,
        hulls,
        records,
    })
}

/// Averaged sum rate of one family at one SNR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SumRatePoint {
    pub family: SchemeFamily,
    pub snr_db: f64,
    pub qos: f64,
    pub rates: Vec<f64>,
    pub sum_rate: MonteCarloSummary,
    pub realization_count: usize,
}

/// Output of [`sum_rate_vs_snr`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SumRateResult {
    pub points: Vec<SumRatePoint>,
    /// Best variant of each family per realization and SNR.
    pub records: Vec<RealizationRecord>,
}

/// Sum rate with unit weights over the SNR grid; every family reports its
/// best decoding order per realization, infeasible draws are left out of
/// the averages.
pub fn sum_rate_vs_snr(config: &ExperimentConfig) -> Result<SumRateResult> {
    config.validate()?;
    let k = config.topology.num_users();
    let per_realization = map_realizations(config.realizations, |r| {
        let channel = config.channel(r)?;
        let mut out = Vec::new();
        for (i, &snr) in config.snr_db.iter().enumerate() {
            let instance = config.instance(i, vec![1.0; k])?;
            let solved = solve_point(config, &instance, &channel, None)?;
            for family in SOLVE_ORDER.iter().filter(|f| config.schemes.contains(f)) {
                let best = solved
                    .iter()
                    .filter(|s| s.family == *family)
                    .reduce(|a, b| if better(&b.solution, &a.solution) { b } else { a })
                    .expect("family solved");
                out.push(record(r, snr, None, &instance, best));
            }
        }
        Ok(out)
    })?;
    let records: Vec<RealizationRecord> = per_realization.into_iter().flatten().collect();
    let mut points = Vec::new();
    for (i, &snr) in config.snr_db.iter().enumerate() {
        for &family in &config.schemes {
            let samples: Vec<Vec<f64>> = records
                .iter()
                .filter(|r| r.family == family && r.snr_db == snr && r.status.is_feasible())
                .map(|r| {
                    let mut v = r.rates.clone();
                    v.push(r.rates.iter().sum());
                    v
                })
                .collect();
            if samples.is_empty() {
                points.push(SumRatePoint {
                    family,
                    snr_db: snr,
                    qos: config.qos[i],
                    rates: vec![f64::NAN; k],
                    sum_rate: MonteCarloSummary {
                        mean: f64::NAN,
                        halfwidth: None,
                        count: 0,
                    },
                    realization_count: 0,
                });
                continue;
            }
            let avg = monte_carlo_average(&samples)?;
            points.push(SumRatePoint {
                family,
                snr_db: snr,
                qos: config.qos[i],
                rates: avg[..k].iter().map(|s| s.mean).collect(),
                sum_rate: avg[k],
                realization_count: samples.len(),
            });
        }
    }
    Ok(SumRateResult { points, records })
}

/// Channel draw and weights of a single solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveTarget {
    pub weights: Vec<f64>,
    pub realization: usize,
}

/// Output of [`single_solve`].
#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    /// One record per scheme variant.
    pub records: Vec<RealizationRecord>,
    /// AO trace of each record, same order.
    pub traces: Vec<Vec<TraceRecord>>,
}

/// Solves every variant of the selected families on one channel draw at
/// the first SNR point.
pub fn single_solve(config: &ExperimentConfig, target: &SolveTarget) -> Result<SolveResult> {
    config.validate()?;
    if config.snr_db.len() != 1 {
        return Err(Error::Config("a single solve uses one SNR".into()));
    }
    let k = config.topology.num_users();
    if target.weights.len() != k {
        return Err(Error::Config(format!(
            "{} weights for {k} users",
            target.weights.len()
        )));
    }
    let channel = config.channel(target.realization)?;
    let instance = config.instance(0, target.weights.clone())?;
    let solved = solve_point(config, &instance, &channel, None)?;
    Ok(SolveResult {
        records: solved
            .iter()
            .map(|s| record(target.realization, config.snr_db[0], None, &instance, s))
            .collect(),
        traces: solved.into_iter().map(|s| s.solution.trace).collect(),
    })
}

/// Formats `v` with 9 significant digits, trailing zeros removed.
pub fn format_sig(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return if v.is_nan() { "NaN".into() } else if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let s = format!("{v:.8e}");
    let (mantissa, exp) = s.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..15).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        let fixed = format!("{:.*}", decimals, mantissa.parse::<f64>().expect("mantissa") * 10f64.powi(exp));
        let fixed = if fixed.contains('.') {
            fixed.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            fixed
        };
        if fixed == "-0" {
            "0".into()
        } else {
            fixed
        }
    } else {
        let m = mantissa.trim_end_matches('0').trim_end_matches('.');
        format!("{m}e{exp}")
    }
}

/// Column names of result CSVs for `K` users.
pub fn csv_header(num_users: usize) -> Vec<String> {
    let mut h: Vec<String> = ["scheme", "alpha", "beta", "snr_db", "u2_exponent", "realization_count"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    h.extend((1..=num_users).map(|k| format!("rate_user_{k}")));
    h.extend(
        ["sum_rate", "halfwidth", "decoding_order", "record", "realization", "status"]
            .iter()
            .map(|s| s.to_string()),
    );
    h
}

struct Row<'a> {
    config: &'a ExperimentConfig,
    family: SchemeFamily,
    snr_db: f64,
    u2_exponent: Option<f64>,
    count: usize,
    rates: &'a [f64],
    halfwidth: Option<f64>,
    order: &'a str,
    kind: &'a str,
    realization: Option<usize>,
    status: Option<AoStatus>,
}

fn write_row<W: Write>(w: &mut csv::Writer<W>, row: Row<'_>) -> Result<()> {
    let dash = || "-".to_string();
    let mut fields = vec![
        row.family.to_string(),
        format_sig(row.config.alpha),
        format_sig(row.config.beta),
        format_sig(row.snr_db),
        row.u2_exponent.map(format_sig).unwrap_or_else(dash),
        row.count.to_string(),
    ];
    fields.extend(row.rates.iter().map(|r| format_sig(*r)));
    fields.push(format_sig(row.rates.iter().sum()));
    fields.push(row.halfwidth.map(format_sig).unwrap_or_else(|| "NA".into()));
    fields.push(row.order.to_string());
    fields.push(row.kind.to_string());
    fields.push(row.realization.map(|r| r.to_string()).unwrap_or_else(dash));
    fields.push(
        row.status
            .map(|s| serde_json::to_value(s).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default())
            .unwrap_or_else(dash),
    );
    w.write_record(&fields)?;
    Ok(())
}

/// Writes mean rows, hull vertices and per-realization rows of a region.
pub fn write_region_csv<W: Write>(writer: W, config: &ExperimentConfig, result: &RegionResult) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(csv_header(2))?;
    let snr = config.snr_db[0];
    for p in &result.points {
        write_row(&mut w, Row {
            config,
            family: p.family,
            snr_db: snr,
            u2_exponent: Some(p.weight_exponent),
            count: p.realization_count,
            rates: &p.rates,
            halfwidth: p.sum_rate.halfwidth,
            order: &p.order,
            kind: "mean",
            realization: None,
            status: None,
        })?;
    }
    for (family, hull) in &result.hulls {
        let count = result
            .points
            .iter()
            .filter(|p| p.family == *family)
            .map(|p| p.realization_count)
            .max()
            .unwrap_or(0);
        for v in hull {
            write_row(&mut w, Row {
                config,
                family: *family,
                snr_db: snr,
                u2_exponent: None,
                count,
                rates: v,
                halfwidth: None,
                order: "-",
                kind: "hull",
                realization: None,
                status: None,
            })?;
        }
    }
    write_records(&mut w, config, &result.records)?;
    w.flush()?;
    Ok(())
}

fn write_records<W: Write>(
    w: &mut csv::Writer<W>,
    config: &ExperimentConfig,
    records: &[RealizationRecord],
) -> Result<()> {
    for r in records {
        write_row(w, Row {
            config,
            family: r.family,
            snr_db: r.snr_db,
            u2_exponent: r.weight_exponent,
            count: 1,
            rates: &r.rates,
            halfwidth: None,
            order: &r.order,
            kind: "realization",
            realization: Some(r.realization),
            status: Some(r.status),
        })?;
    }
    Ok(())
}

/// Writes mean rows per (family, SNR) and per-realization rows.
pub fn write_sum_rate_csv<W: Write>(
    writer: W,
    config: &ExperimentConfig,
    result: &SumRateResult,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(csv_header(config.topology.num_users()))?;
    for p in &result.points {
        write_row(&mut w, Row {
            config,
            family: p.family,
            snr_db: p.snr_db,
            u2_exponent: None,
            count: p.realization_count,
            rates: &p.rates,
            halfwidth: p.sum_rate.halfwidth,
            order: "best",
            kind: "mean",
            realization: None,
            status: None,
        })?;
    }
    write_records(&mut w, config, &result.records)?;
    w.flush()?;
    Ok(())
}

/// Writes one row per solved variant.
pub fn write_solve_csv<W: Write>(writer: W, config: &ExperimentConfig, result: &SolveResult) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(csv_header(config.topology.num_users()))?;
    write_records(&mut w, config, &result.records)?;
    w.flush()?;
    Ok(())
}

/// Writes the AO iteration traces of a single solve.
pub fn write_trace_csv<W: Write>(writer: W, result: &SolveResult) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "scheme",
        "decoding_order",
        "iteration",
        "wsr",
        "max_power_residual",
        "max_qos_residual",
    ])?;
    for (r, trace) in result.records.iter().zip(&result.traces) {
        for t in trace {
            w.write_record([
                r.family.to_string(),
                r.order.clone(),
                t.iteration.to_string(),
                format_sig(t.wsr),
                format_sig(t.max_power_residual),
                format_sig(t.max_qos_residual),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Experiment pipelines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Solve,
    Region,
    Sumrate,
}

/// Numerical tolerances in force for a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub ao_tolerance: f64,
    pub ao_max_iterations: usize,
    pub monotone_slack: f64,
    pub allocation: f64,
    pub power: f64,
    pub qos: f64,
    pub solver_feasibility: f64,
    pub solver_gap: f64,
    pub solver_max_iterations: usize,
}

/// JSON record sufficient to rerun an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub experiment: ExperimentKind,
    pub config: ExperimentConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solve: Option<SolveTarget>,
    pub tolerances: Tolerances,
}

impl Manifest {
    pub fn new(experiment: ExperimentKind, config: ExperimentConfig) -> Self {
        let options = config.options();
        Self {
            tool: "rsma-comp".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            experiment,
            tolerances: Tolerances {
                ao_tolerance: options.tolerance,
                ao_max_iterations: options.max_iterations,
                monotone_slack: crate::wmmse::MONOTONE_SLACK,
                allocation: ALLOCATION_TOLERANCE,
                power: POWER_TOLERANCE,
                qos: QOS_TOLERANCE,
                solver_feasibility: options.solver.feasibility_tolerance,
                solver_gap: options.solver.gap_tolerance,
                solver_max_iterations: options.solver.max_iterations,
            },
            config,
            solve: None,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: Manifest = serde_json::from_str(text)?;
        m.config.validate()?;
        Ok(m)
    }

    /// Runs the experiment and returns the result CSV.
    pub fn run(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        match self.experiment {
            ExperimentKind::Solve => {
                let target = self
                    .solve
                    .as_ref()
                    .ok_or_else(|| Error::Config("solve manifest without a target".into()))?;
                let r = single_solve(&self.config, target)?;
                write_solve_csv(&mut out, &self.config, &r)?;
            }
            ExperimentKind::Region => {
                let r = rate_region(&self.config)?;
                write_region_csv(&mut out, &self.config, &r)?;
            }
            ExperimentKind::Sumrate => {
                let r = sum_rate_vs_snr(&self.config)?;
                write_sum_rate_csv(&mut out, &self.config, &r)?;
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weight_grid_has_43_points() {
        let x = default_weight_exponents();
        assert_eq!(x.len(), 43);
        assert_eq!(x[0], -3.0);
        assert_eq!(x[1], -1.0);
        assert_eq!(x[41], 1.0);
        assert_eq!(x[42], 3.0);
        assert_eq!(format_sig(x[4]), "-0.85");
    }

    #[test]
    fn power_split() {
        let c = ExperimentConfig::sum_rate(Topology::TwoCell, 1.0, 1.0);
        let p = c.per_bs_power(20.0);
        assert!((p[0] - 50.0).abs() < 1e-12 && (p[1] - 50.0).abs() < 1e-12);
    }

    #[test]
    fn hull_examples() {
        assert_eq!(
            convex_hull_2d(&[[1.0, 0.0], [0.0, 1.0]]),
            vec![[0.0, 1.0], [1.0, 0.0]]
        );
        assert_eq!(convex_hull_2d(&[[1.0, 1.0], [0.5, 0.5]]), vec![[1.0, 1.0]]);
        assert_eq!(
            convex_hull_2d(&[[0.0, 2.0], [1.0, 1.0], [2.0, 0.0], [0.9, 0.9]]),
            vec![[0.0, 2.0], [2.0, 0.0]]
        );
        assert!(convex_hull_2d(&[]).is_empty());
    }

    #[test]
    fn distance_to_region() {
        let hull = [[0.0, 1.0], [1.0, 0.0]];
        assert_eq!(distance_outside(&hull, [0.2, 0.2]), 0.0);
        assert!((distance_outside(&hull, [1.0, 1.0]) - 0.5f64.sqrt()).abs() < 1e-12);
        assert!((distance_outside(&hull, [2.0, 0.0]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn averages() {
        let one = monte_carlo_average(&[vec![2.5]]).unwrap();
        assert_eq!(one[0].mean, 2.5);
        assert_eq!(one[0].halfwidth, None);
        let flat = monte_carlo_average(&[vec![1.0], vec![1.0], vec![1.0]]).unwrap();
        assert_eq!(flat[0].halfwidth, Some(0.0));
        assert!(monte_carlo_average(&[]).is_err());
    }

    #[test]
    fn significant_digits() {
        assert_eq!(format_sig(1.0), "1");
        assert_eq!(format_sig(0.1), "0.1");
        assert_eq!(format_sig(std::f64::consts::PI), "3.14159265");
        assert_eq!(format_sig(123456.789012), "123456.789");
        assert_eq!(format_sig(-0.000123456789012), "-0.000123456789");
        assert_eq!(format_sig(1e-9), "1e-9");
        assert_eq!(format_sig(0.0), "0");
    }

    #[test]
    fn config_validation() {
        let mut c = ExperimentConfig::sum_rate(Topology::ThreeCell, 1.0, 1.0);
        assert!(c.validate().is_ok());
        c.qos.pop();
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::region(Topology::TwoCell, 1.0, 1.0);
        c.realizations = 0;
        assert!(c.validate().is_err());
        let c = ExperimentConfig::region(Topology::TwoCell, 1.5, 1.0);
        assert!(c.validate().is_err());
        let c = ExperimentConfig::region(Topology::ThreeCell, 1.0, 1.0);
        assert!(rate_region(&c).is_err());
    }
}
