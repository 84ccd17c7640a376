//! Multiple-access strategies as restrictions of the generalized layout.

use std::fmt;
use std::str::FromStr;

use itertools::Itertools;
use serde::{Deserialize, Serialize};

use crate::channels::ChannelState;
use crate::error::{Error, Result};
use crate::model::{enumerate_streams, ProblemInstance, StreamLayout, UserSet, MAX_ENUMERATED_USERS};
use crate::rate::{CommonRateAllocation, RateContext};
use crate::wmmse::Solution;

/// Slack on `[PP^H]_{m,m} ≤ P_m` for reported solutions (W).
pub const POWER_TOLERANCE: f64 = 1e-8;

/// Slack on `R_{k,tot} ≥ R_k^th` for reported solutions (bit/s/Hz).
pub const QOS_TOLERANCE: f64 = 1e-4;

/// One concrete strategy.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeKind {
    /// Every user subset carries a stream.
    GeneralizedRs,
    /// One `K`-order common stream plus private streams.
    OneLayerRs,
    /// Private streams only (SDMA).
    Mulp,
    /// Superposition coding with SIC; user `order[i]` rides the stream
    /// `{order[i], …, order[K-1]}` (NOMA).
    Scsic(Vec<usize>),
    /// SC–SIC inside each group; every inner list is a group in its
    /// decoding order.
    ScsicPerGroup(Vec<Vec<usize>>),
}

fn check_permutation(users: &[usize], num_users: usize) -> Result<()> {
    let mut seen = vec![false; num_users + 1];
    for &k in users {
        if k == 0 || k > num_users || seen[k] {
            return Err(Error::InvalidScheme(format!(
                "{users:?} is not a permutation of 1..={num_users}"
            )));
        }
        seen[k] = true;
    }
    if users.len() != num_users {
        return Err(Error::InvalidScheme(format!(
            "{users:?} is not a permutation of 1..={num_users}"
        )));
    }
    Ok(())
}

/// Nested streams `{σ_i, …, σ_last}` and the single user riding each.
fn nested(order: &[usize]) -> Result<Vec<(UserSet, usize)>> {
    (0..order.len())
        .map(|i| Ok((UserSet::from_members(&order[i..])?, order[i])))
        .collect()
}

impl SchemeKind {
    /// `{1}, {2, …, K}` with ascending intra-group order.
    pub fn default_groups(num_users: usize) -> Vec<Vec<usize>> {
        if num_users == 1 {
            return vec![vec![1]];
        }
        vec![vec![1], (2..=num_users).collect()]
    }

    pub fn validate(&self, num_users: usize) -> Result<()> {
        UserSet::all(num_users)?;
        match self {
            SchemeKind::Scsic(order) => check_permutation(order, num_users),
            SchemeKind::ScsicPerGroup(groups) => {
                if groups.iter().any(Vec::is_empty) {
                    return Err(Error::InvalidScheme("empty group".into()));
                }
                let flat: Vec<usize> = groups.iter().flatten().copied().sorted().collect();
                check_permutation(&flat, num_users)
                    .map_err(|_| Error::InvalidScheme(format!("{groups:?} does not partition 1..={num_users}")))
            }
            _ => Ok(()),
        }
    }

    pub fn family(&self) -> SchemeFamily {
        match self {
            SchemeKind::GeneralizedRs => SchemeFamily::Rs,
            SchemeKind::OneLayerRs => SchemeFamily::OneLayerRs,
            SchemeKind::Mulp => SchemeFamily::Mulp,
            SchemeKind::Scsic(_) => SchemeFamily::Scsic,
            SchemeKind::ScsicPerGroup(_) => SchemeFamily::ScsicGroup,
        }
    }

    /// Decoding-order label, e.g. `1>2>3` or `1|2>3`; empty when fixed.
    pub fn order_label(&self) -> String {
        match self {
            SchemeKind::Scsic(order) => order.iter().join(">"),
            SchemeKind::ScsicPerGroup(groups) => groups.iter().map(|g| g.iter().join(">")).join("|"),
            _ => String::new(),
        }
    }
}

/// Builds the stream layout of `kind` for `K` users.
pub fn build_scheme(kind: &SchemeKind, num_users: usize) -> Result<StreamLayout> {
    kind.validate(num_users)?;
    match kind {
        SchemeKind::GeneralizedRs => StreamLayout::full(num_users),
        SchemeKind::OneLayerRs => StreamLayout::new(
            num_users,
            enumerate_streams(num_users, |s| s.order() == 1 || s.order() == num_users)?,
        ),
        SchemeKind::Mulp => {
            StreamLayout::new(num_users, enumerate_streams(num_users, |s| s.order() == 1)?)
        }
        SchemeKind::Scsic(order) => nested_layout(num_users, std::slice::from_ref(order)),
        SchemeKind::ScsicPerGroup(groups) => nested_layout(num_users, groups),
    }
}

fn nested_layout(num_users: usize, groups: &[Vec<usize>]) -> Result<StreamLayout> {
    let pieces: Vec<(UserSet, usize)> = groups
        .iter()
        .map(|g| nested(g))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    let mut layout = StreamLayout::new(num_users, pieces.iter().map(|p| p.0).collect())?;
    for (stream, user) in pieces {
        if stream.order() >= 2 {
            layout = layout.with_allocation(stream, UserSet::singleton(user)?)?;
        }
    }
    Ok(layout)
}

/// The generalized layout whose decoding orders put the streams of
/// `layout` first, in their own order, within every stream order.
pub fn full_layout_for(layout: &StreamLayout) -> Result<StreamLayout> {
    let k = layout.num_users();
    let mut full = StreamLayout::full(k)?;
    for l in 2..=k {
        let mine = layout.decoding_order(l);
        let rest = full.decoding_order(l).into_iter().filter(|s| !mine.contains(s));
        let perm: Vec<UserSet> = mine.iter().copied().chain(rest).collect();
        full = full.with_decoding_order(l, &perm)?;
    }
    Ok(full)
}

/// Maps a solution under `layout` into the generalized stream space,
/// padding absent streams with zero precoders and shares.
pub fn embed_solution(
    layout: &StreamLayout,
    solution: &Solution,
) -> Result<(StreamLayout, crate::model::PrecoderSet, CommonRateAllocation)> {
    let full = full_layout_for(layout)?;
    let precoders = solution.precoders.embed(layout, &full)?;
    Ok((full, precoders, solution.allocation.clone()))
}

/// Whether `solution`, computed under `build_scheme(kind, K)`, stays
/// feasible and keeps its WSR when embedded into the generalized layout.
pub fn reduction_check(
    kind: &SchemeKind,
    instance: &ProblemInstance,
    channel: &ChannelState,
    solution: &Solution,
) -> Result<bool> {
    let layout = build_scheme(kind, instance.num_users())?;
    let (full, precoders, allocation) = embed_solution(&layout, solution)?;
    if precoders.max_power_residual(instance.per_bs_power()) > POWER_TOLERANCE {
        return Ok(false);
    }
    let ctx = RateContext::new(&full, &precoders, channel, instance.noise_variance())?;
    let Ok(report) = ctx.report(instance.weights(), &allocation) else {
        return Ok(false);
    };
    let qos_ok = report
        .user_totals
        .iter()
        .zip(instance.qos())
        .all(|(r, th)| *r >= th - QOS_TOLERANCE);
    let wsr_ok = (report.wsr - solution.wsr()).abs() <= 1e-9 * (1.0 + solution.wsr().abs());
    Ok(qos_ok && wsr_ok)
}

/// Strategy families as compared in experiments. SC–SIC variants stand for
/// the best over their decoding orders.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SchemeFamily {
    #[serde(rename = "rs")]
    Rs,
    #[serde(rename = "1-layer-rs")]
    OneLayerRs,
    #[serde(rename = "mulp")]
    Mulp,
    #[serde(rename = "scsic")]
    Scsic,
    #[serde(rename = "scsic-group")]
    ScsicGroup,
}

impl SchemeFamily {
    pub const ALL: [SchemeFamily; 5] = [
        SchemeFamily::Rs,
        SchemeFamily::OneLayerRs,
        SchemeFamily::Mulp,
        SchemeFamily::Scsic,
        SchemeFamily::ScsicGroup,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SchemeFamily::Rs => "rs",
            SchemeFamily::OneLayerRs => "1-layer-rs",
            SchemeFamily::Mulp => "mulp",
            SchemeFamily::Scsic => "scsic",
            SchemeFamily::ScsicGroup => "scsic-group",
        }
    }

    /// The concrete schemes searched for this family.
    pub fn variants(self, num_users: usize) -> Result<Vec<SchemeKind>> {
        if num_users > MAX_ENUMERATED_USERS {
            return Err(Error::TooLarge(format!(
                "decoding orders are enumerated for at most {MAX_ENUMERATED_USERS} users"
            )));
        }
        UserSet::all(num_users)?;
        Ok(match self {
            SchemeFamily::Rs => vec![SchemeKind::GeneralizedRs],
            SchemeFamily::OneLayerRs => vec![SchemeKind::OneLayerRs],
            SchemeFamily::Mulp => vec![SchemeKind::Mulp],
            SchemeFamily::Scsic => (1..=num_users)
                .permutations(num_users)
                .map(SchemeKind::Scsic)
                .collect(),
            SchemeFamily::ScsicGroup => SchemeKind::default_groups(num_users)
                .into_iter()
                .map(|g| {
                    let n = g.len();
                    g.into_iter().permutations(n).collect::<Vec<_>>().into_iter()
                })
                .multi_cartesian_product()
                .map(SchemeKind::ScsicPerGroup)
                .collect(),
        })
    }
}

impl fmt::Display for SchemeFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchemeFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "rs" | "rsma" => Ok(SchemeFamily::Rs),
            "1-layer-rs" | "rs1" | "one-layer-rs" => Ok(SchemeFamily::OneLayerRs),
            "mulp" | "sdma" => Ok(SchemeFamily::Mulp),
            "scsic" | "noma" => Ok(SchemeFamily::Scsic),
            "scsic-group" | "scsic-per-group" => Ok(SchemeFamily::ScsicGroup),
            other => Err(Error::InvalidScheme(format!("unknown scheme {other:?}"))),
        }
    }
}
