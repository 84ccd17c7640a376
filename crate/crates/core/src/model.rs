//! Core domain types: problem instances, user-subset streams, stream
//! layouts with their per-order decoding orders, and precoder sets.
//!
//! Users are identified by 1-based ids throughout the public API. A stream
//! `s_A` is identified by the set `A` of users that decode it; its order is
//! `|A|`. Higher-order streams are decoded first, and within one order each
//! user follows the layout's permutation `π_l` restricted to the streams it
//! decodes.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use itertools::Itertools;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest user count accepted by any layout.
pub const MAX_USERS: usize = 16;

/// Largest user count for which decoding orders are enumerated exhaustively.
pub const MAX_ENUMERATED_USERS: usize = 4;

/// A nonempty set of users, stored as a bitmask (bit `k - 1` for user `k`).
///
/// The ordering is the canonical stream order: descending cardinality, then
/// lexicographic on the ascending member list.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct UserSet(u32);

impl UserSet {
    pub fn from_members(members: &[usize]) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::InvalidLayout("empty user set".into()));
        }
        let mut bits = 0u32;
        for &k in members {
            if k == 0 || k > MAX_USERS {
                return Err(Error::InvalidLayout(format!(
                    "user id {k} outside 1..={MAX_USERS}"
                )));
            }
            let bit = 1u32 << (k - 1);
            if bits & bit != 0 {
                return Err(Error::InvalidLayout(format!("user {k} repeated")));
            }
            bits |= bit;
        }
        Ok(UserSet(bits))
    }

    pub fn singleton(user: usize) -> Result<Self> {
        Self::from_members(&[user])
    }

    /// All users `{1..K}`.
    pub fn all(num_users: usize) -> Result<Self> {
        if num_users == 0 || num_users > MAX_USERS {
            return Err(Error::InvalidInstance(format!(
                "user count {num_users} outside 1..={MAX_USERS}"
            )));
        }
        Ok(UserSet(((1u64 << num_users) - 1) as u32))
    }

    pub(crate) fn from_bits(bits: u32) -> Self {
        debug_assert!(bits != 0);
        UserSet(bits)
    }

    pub fn bits(self) -> u32 {
        self.0
    }

    /// Stream order `l = |A|`.
    pub fn order(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn contains(self, user: usize) -> bool {
        (1..=32).contains(&user) && self.0 & (1 << (user - 1)) != 0
    }

    pub fn is_subset_of(self, other: UserSet) -> bool {
        self.0 & !other.0 == 0
    }

    /// Largest member id.
    pub fn max_user(self) -> usize {
        32 - self.0.leading_zeros() as usize
    }

    /// Members in ascending order.
    pub fn members(self) -> impl Iterator<Item = usize> {
        let bits = self.0;
        (1..=32usize).filter(move |k| bits & (1u32 << (k - 1)) != 0)
    }

    pub fn member_vec(self) -> Vec<usize> {
        self.members().collect()
    }

    /// Compact label, e.g. `123` for `{1,2,3}`; members are dot-separated
    /// once any id has two digits.
    pub fn label(self) -> String {
        let members = self.member_vec();
        if members.iter().all(|&k| k < 10) {
            members.iter().map(|k| k.to_string()).collect()
        } else {
            members.iter().map(|k| k.to_string()).join(".")
        }
    }
}

impl Ord for UserSet {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .order()
            .cmp(&self.order())
            .then_with(|| self.members().cmp(other.members()))
    }
}

impl PartialOrd for UserSet {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for UserSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for UserSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{}}}", self.members().join(","))
    }
}

impl TryFrom<Vec<usize>> for UserSet {
    type Error = Error;

    fn try_from(members: Vec<usize>) -> Result<Self> {
        UserSet::from_members(&members)
    }
}

impl From<UserSet> for Vec<usize> {
    fn from(set: UserSet) -> Self {
        set.member_vec()
    }
}

/// Power budgets, QoS thresholds, weights and noise levels of one problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemInstance {
    per_bs_power: Vec<f64>,
    qos: Vec<f64>,
    weights: Vec<f64>,
    noise_variance: Vec<f64>,
}

impl ProblemInstance {
    /// Builds an instance with unit noise variance at every user.
    pub fn new(per_bs_power: Vec<f64>, qos: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        let noise = vec![1.0; weights.len()];
        Self::with_noise(per_bs_power, qos, weights, noise)
    }

    pub fn with_noise(
        per_bs_power: Vec<f64>,
        qos: Vec<f64>,
        weights: Vec<f64>,
        noise_variance: Vec<f64>,
    ) -> Result<Self> {
        if per_bs_power.is_empty() {
            return Err(Error::InvalidInstance("no base stations".into()));
        }
        if weights.is_empty() {
            return Err(Error::InvalidInstance("no users".into()));
        }
        if weights.len() > MAX_USERS {
            return Err(Error::InvalidInstance(format!(
                "{} users exceeds the limit of {MAX_USERS}",
                weights.len()
            )));
        }
        if qos.len() != weights.len() || noise_variance.len() != weights.len() {
            return Err(Error::InvalidInstance(format!(
                "{} weights but {} QoS thresholds and {} noise variances",
                weights.len(),
                qos.len(),
                noise_variance.len()
            )));
        }
        if let Some(p) = per_bs_power.iter().find(|p| !(p.is_finite() && **p > 0.0)) {
            return Err(Error::InvalidInstance(format!("power limit {p} must be positive")));
        }
        if let Some(r) = qos.iter().find(|r| !(r.is_finite() && **r >= 0.0)) {
            return Err(Error::InvalidInstance(format!("QoS threshold {r} must be nonnegative")));
        }
        if let Some(u) = weights.iter().find(|u| !(u.is_finite() && **u > 0.0)) {
            return Err(Error::InvalidInstance(format!("weight {u} must be positive")));
        }
        if let Some(s) = noise_variance.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return Err(Error::InvalidInstance(format!("noise variance {s} must be positive")));
        }
        Ok(Self {
            per_bs_power,
            qos,
            weights,
            noise_variance,
        })
    }

    /// Splits `total_power` evenly over `num_bs` base stations.
    pub fn equal_split(
        total_power: f64,
        num_bs: usize,
        qos: Vec<f64>,
        weights: Vec<f64>,
    ) -> Result<Self> {
        if num_bs == 0 {
            return Err(Error::InvalidInstance("no base stations".into()));
        }
        Self::new(vec![total_power / num_bs as f64; num_bs], qos, weights)
    }

    pub fn num_bs(&self) -> usize {
        self.per_bs_power.len()
    }

    pub fn num_users(&self) -> usize {
        self.weights.len()
    }

    pub fn per_bs_power(&self) -> &[f64] {
        &self.per_bs_power
    }

    pub fn total_power(&self) -> f64 {
        self.per_bs_power.iter().sum()
    }

    pub fn qos(&self) -> &[f64] {
        &self.qos
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn noise_variance(&self) -> &[f64] {
        &self.noise_variance
    }

    pub fn with_weights(&self, weights: Vec<f64>) -> Result<Self> {
        Self::with_noise(
            self.per_bs_power.clone(),
            self.qos.clone(),
            weights,
            self.noise_variance.clone(),
        )
    }

    pub fn with_qos(&self, qos: Vec<f64>) -> Result<Self> {
        Self::with_noise(
            self.per_bs_power.clone(),
            qos,
            self.weights.clone(),
            self.noise_variance.clone(),
        )
    }
}

/// The active streams of a transmission strategy, the per-order decoding
/// orders, and which users may be allocated a share of each multi-user
/// stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StreamLayout {
    num_users: usize,
    streams: Vec<UserSet>,
    allocation: Vec<UserSet>,
    orders: Vec<Vec<usize>>,
    rank: Vec<usize>,
    index: BTreeMap<UserSet, usize>,
}

impl StreamLayout {
    /// Builds a layout over the given streams with every member allowed a
    /// share and each `π_l` in canonical order.
    pub fn new(num_users: usize, streams: Vec<UserSet>) -> Result<Self> {
        UserSet::all(num_users)?;
        if streams.is_empty() {
            return Err(Error::InvalidLayout("no streams".into()));
        }
        let mut streams = streams;
        streams.sort();
        if streams.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidLayout("duplicate stream".into()));
        }
        if let Some(s) = streams.iter().find(|s| s.max_user() > num_users) {
            return Err(Error::InvalidLayout(format!(
                "stream {s} names a user beyond {num_users}"
            )));
        }
        let allocation = streams.clone();
        let index = streams.iter().enumerate().map(|(i, s)| (*s, i)).collect();
        let mut orders = vec![Vec::new(); num_users];
        for (i, s) in streams.iter().enumerate() {
            orders[s.order() - 1].push(i);
        }
        let mut layout = Self {
            num_users,
            streams,
            allocation,
            orders,
            rank: Vec::new(),
            index,
        };
        layout.refresh_rank();
        Ok(layout)
    }

    /// Generalized layout with all `2^K - 1` streams.
    pub fn full(num_users: usize) -> Result<Self> {
        Self::new(num_users, enumerate_streams(num_users, |_| true)?)
    }

    fn refresh_rank(&mut self) {
        self.rank = vec![0; self.streams.len()];
        for order in &self.orders {
            for (pos, &s) in order.iter().enumerate() {
                self.rank[s] = pos;
            }
        }
    }

    /// Restricts which members of `stream` may carry a rate share.
    pub fn with_allocation(mut self, stream: UserSet, users: UserSet) -> Result<Self> {
        let idx = self.index_of(stream).ok_or(Error::UnknownStream(stream))?;
        if !users.is_subset_of(stream) {
            return Err(Error::InvalidLayout(format!(
                "allocation {users} is not a subset of stream {stream}"
            )));
        }
        self.allocation[idx] = users;
        Ok(self)
    }

    /// Replaces `π_l` by the given permutation of the active `l`-order streams.
    pub fn with_decoding_order(mut self, order: usize, permutation: &[UserSet]) -> Result<Self> {
        if order == 0 || order > self.num_users {
            return Err(Error::InvalidLayout(format!(
                "order {order} outside 1..={}",
                self.num_users
            )));
        }
        let current = &self.orders[order - 1];
        let mut perm = Vec::with_capacity(permutation.len());
        for s in permutation {
            match self.index_of(*s) {
                Some(i) if s.order() == order && !perm.contains(&i) => perm.push(i),
                _ => {
                    return Err(Error::InvalidLayout(format!(
                        "{s} is not an unused active {order}-order stream"
                    )))
                }
            }
        }
        if perm.len() != current.len() {
            return Err(Error::InvalidLayout(format!(
                "decoding order lists {} of {} active {order}-order streams",
                perm.len(),
                current.len()
            )));
        }
        self.orders[order - 1] = perm;
        self.refresh_rank();
        Ok(self)
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_streams(&self) -> usize {
        self.streams.len()
    }

    /// Streams in canonical order; precoder columns follow this order.
    pub fn streams(&self) -> &[UserSet] {
        &self.streams
    }

    pub fn stream(&self, idx: usize) -> UserSet {
        self.streams[idx]
    }

    pub fn index_of(&self, stream: UserSet) -> Option<usize> {
        self.index.get(&stream).copied()
    }

    pub fn contains(&self, stream: UserSet) -> bool {
        self.index.contains_key(&stream)
    }

    /// Users allowed a share of stream `idx`; empty meaning is irrelevant for
    /// 1-order streams.
    pub fn allocation(&self, idx: usize) -> UserSet {
        self.allocation[idx]
    }

    pub fn allows_share(&self, stream: UserSet, user: usize) -> bool {
        self.index_of(stream)
            .map(|i| stream.order() >= 2 && self.allocation[i].contains(user))
            .unwrap_or(false)
    }

    /// Position of stream `idx` within `π_{|A|}`.
    pub fn rank(&self, idx: usize) -> usize {
        self.rank[idx]
    }

    /// `π_l` as stream sets.
    pub fn decoding_order(&self, order: usize) -> Vec<UserSet> {
        self.orders
            .get(order.wrapping_sub(1))
            .map(|o| o.iter().map(|&i| self.streams[i]).collect())
            .unwrap_or_default()
    }

    pub(crate) fn order_indices(&self, order: usize) -> &[usize] {
        &self.orders[order - 1]
    }

    pub fn private_stream(&self, user: usize) -> Option<usize> {
        UserSet::singleton(user).ok().and_then(|s| self.index_of(s))
    }

    /// Compact description of the nontrivial decoding orders, e.g. `12>13>23`.
    pub fn order_label(&self) -> String {
        (2..self.num_users)
            .rev()
            .filter(|&l| self.orders[l - 1].len() > 1)
            .map(|l| self.decoding_order(l).iter().map(|s| s.label()).join(">"))
            .join("|")
    }

    /// Every pair `(stream index, user)` with user decoding the stream.
    pub fn decode_pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.streams
            .iter()
            .enumerate()
            .flat_map(|(i, s)| s.members().map(move |k| (i, k)))
    }
}

/// All nonempty subsets of `{1..K}` accepted by `filter`, in canonical order.
pub fn enumerate_streams<F>(num_users: usize, filter: F) -> Result<Vec<UserSet>>
where
    F: Fn(&UserSet) -> bool,
{
    if num_users == 0 {
        return Err(Error::InvalidInstance("user count must be at least 1".into()));
    }
    UserSet::all(num_users)?;
    let mut sets: Vec<UserSet> = (1u32..(1u32 << num_users))
        .map(UserSet::from_bits)
        .filter(|s| filter(s))
        .collect();
    sets.sort();
    Ok(sets)
}

/// The active streams user `k` decodes, highest order first, each order
/// group sorted by `π_l`.
pub fn streams_for_user(user: usize, layout: &StreamLayout) -> Result<Vec<UserSet>> {
    if user == 0 || user > layout.num_users() {
        return Err(Error::UnknownUser {
            user,
            users: layout.num_users(),
        });
    }
    Ok((1..=layout.num_users())
        .rev()
        .flat_map(|l| layout.order_indices(l).iter())
        .map(|&i| layout.stream(i))
        .filter(|s| s.contains(user))
        .collect())
}

/// All permutations of the active `l`-order streams.
pub fn enumerate_decoding_orders(layout: &StreamLayout, order: usize) -> Result<Vec<Vec<UserSet>>> {
    if order == 0 || order > layout.num_users() {
        return Err(Error::InvalidLayout(format!(
            "order {order} outside 1..={}",
            layout.num_users()
        )));
    }
    if layout.num_users() > MAX_ENUMERATED_USERS {
        return Err(Error::TooLarge(format!(
            "decoding-order enumeration supports at most {MAX_ENUMERATED_USERS} users"
        )));
    }
    let streams: Vec<UserSet> = layout
        .streams()
        .iter()
        .copied()
        .filter(|s| s.order() == order)
        .collect();
    if streams.is_empty() {
        return Ok(Vec::new());
    }
    let n = streams.len();
    Ok(streams.into_iter().permutations(n).collect())
}

/// Every layout obtained from `layout` by choosing `π_l` for the orders
/// `2..K-1`. 1-order and `K`-order orderings cannot change any rate.
pub fn decoding_order_variants(layout: &StreamLayout) -> Result<Vec<StreamLayout>> {
    let mut variants = vec![layout.clone()];
    for l in 2..layout.num_users() {
        let perms = enumerate_decoding_orders(layout, l)?;
        if perms.len() <= 1 {
            continue;
        }
        let mut next = Vec::with_capacity(variants.len() * perms.len());
        for v in &variants {
            for p in &perms {
                next.push(v.clone().with_decoding_order(l, p)?);
            }
        }
        variants = next;
    }
    Ok(variants)
}

/// One complex precoder per stream, `p_A` in the layout's stream order.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecoderSet {
    num_bs: usize,
    columns: Vec<Vec<Complex64>>,
}

impl PrecoderSet {
    pub fn new(num_bs: usize, columns: Vec<Vec<Complex64>>) -> Result<Self> {
        if num_bs == 0 {
            return Err(Error::Dimension("precoders need at least one BS".into()));
        }
        if let Some(c) = columns.iter().find(|c| c.len() != num_bs) {
            return Err(Error::Dimension(format!(
                "precoder of length {} for {num_bs} base stations",
                c.len()
            )));
        }
        if columns.iter().flatten().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::Domain("non-finite precoder entry".into()));
        }
        Ok(Self { num_bs, columns })
    }

    pub fn zeros(num_bs: usize, num_streams: usize) -> Self {
        Self {
            num_bs,
            columns: vec![vec![Complex64::new(0.0, 0.0); num_bs]; num_streams],
        }
    }

    pub fn num_bs(&self) -> usize {
        self.num_bs
    }

    pub fn num_streams(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, idx: usize) -> &[Complex64] {
        &self.columns[idx]
    }

    pub fn column_mut(&mut self, idx: usize) -> &mut [Complex64] {
        &mut self.columns[idx]
    }

    pub fn columns(&self) -> &[Vec<Complex64>] {
        &self.columns
    }

    /// Transmit power at each BS, the diagonal of `P P^H`.
    pub fn per_bs_power(&self) -> Vec<f64> {
        (0..self.num_bs)
            .map(|m| self.columns.iter().map(|c| c[m].norm_sqr()).sum())
            .collect()
    }

    /// Largest excess of per-BS power over the budgets (negative when slack).
    pub fn max_power_residual(&self, budgets: &[f64]) -> f64 {
        self.per_bs_power()
            .iter()
            .zip(budgets)
            .map(|(p, b)| p - b)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn check_layout(&self, layout: &StreamLayout) -> Result<()> {
        if self.columns.len() != layout.num_streams() {
            return Err(Error::Dimension(format!(
                "{} precoder columns for {} streams",
                self.columns.len(),
                layout.num_streams()
            )));
        }
        Ok(())
    }

    /// Rescales row `m` so BS `m` uses at most its budget.
    pub fn clip_to_budgets(&mut self, budgets: &[f64]) {
        for (m, (used, budget)) in self.per_bs_power().into_iter().zip(budgets).enumerate() {
            if used > *budget {
                let scale = (budget / used).sqrt();
                for c in &mut self.columns {
                    c[m] *= scale;
                }
            }
        }
    }

    /// Maps precoders from `from` onto `to`; streams absent from `from` get
    /// zero precoders. Fails if an active stream of `from` is missing in `to`.
    pub fn embed(&self, from: &StreamLayout, to: &StreamLayout) -> Result<PrecoderSet> {
        self.check_layout(from)?;
        let mut out = PrecoderSet::zeros(self.num_bs, to.num_streams());
        for (i, s) in from.streams().iter().enumerate() {
            let j = to.index_of(*s).ok_or(Error::UnknownStream(*s))?;
            out.columns[j] = self.columns[i].clone();
        }
        Ok(out)
    }
}
