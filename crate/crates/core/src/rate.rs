//! Interference, SINR and rate evaluation for a layout, precoders and
//! channel. This is the reference the optimizer is checked against.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channels::ChannelState;
use crate::error::{Error, Result};
use crate::model::{PrecoderSet, StreamLayout, UserSet};

/// Tolerance on `Σ_{k∈A} C_k^A ≤ R_A`, in bit/s/Hz.
pub const ALLOCATION_TOLERANCE: f64 = 1e-7;

/// `h^H p`.
pub fn inner(h: &[Complex64], p: &[Complex64]) -> Complex64 {
    h.iter().zip(p).map(|(h, p)| h.conj() * p).sum()
}

/// Shares `C_k^A` of multi-user streams, keyed by `(stream, user)`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CommonRateAllocation {
    shares: BTreeMap<UserSet, BTreeMap<usize, f64>>,
}

impl CommonRateAllocation {
    pub fn new() -> Self {
        Self::default()
    }

    /// Sets `C_k^A`; shares must be finite and nonnegative, and 1-order
    /// streams carry no shared rate.
    pub fn set(&mut self, stream: UserSet, user: usize, share: f64) -> Result<()> {
        if !stream.contains(user) {
            return Err(Error::NotInStream { user, stream });
        }
        if stream.order() < 2 {
            return Err(Error::InvalidLayout(format!(
                "1-order stream {stream} carries no shared rate"
            )));
        }
        if !(share.is_finite() && share >= 0.0) {
            return Err(Error::Domain(format!("share {share} must be nonnegative")));
        }
        self.shares.entry(stream).or_default().insert(user, share);
        Ok(())
    }

    pub fn get(&self, stream: UserSet, user: usize) -> f64 {
        self.shares
            .get(&stream)
            .and_then(|m| m.get(&user))
            .copied()
            .unwrap_or(0.0)
    }

    /// `Σ_{k∈A} C_k^A`.
    pub fn stream_total(&self, stream: UserSet) -> f64 {
        self.shares
            .get(&stream)
            .map(|m| m.values().sum())
            .unwrap_or(0.0)
    }

    /// `Σ_{A∋k} C_k^A`.
    pub fn user_total(&self, user: usize) -> f64 {
        self.shares
            .values()
            .filter_map(|m| m.get(&user))
            .sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (UserSet, usize, f64)> + '_ {
        self.shares
            .iter()
            .flat_map(|(s, m)| m.iter().map(move |(k, c)| (*s, *k, *c)))
    }

    /// Scales the shares of `stream` by `factor`.
    pub(crate) fn scale_stream(&mut self, stream: UserSet, factor: f64) {
        if let Some(m) = self.shares.get_mut(&stream) {
            for c in m.values_mut() {
                *c *= factor;
            }
        }
    }

    /// Checks that every nonzero share sits on an allocation-enabled pair.
    pub fn check_layout(&self, layout: &StreamLayout) -> Result<()> {
        for (stream, user, share) in self.iter() {
            if share > 0.0 && !layout.allows_share(stream, user) {
                return Err(Error::InvalidLayout(format!(
                    "share for user {user} on stream {stream} is not allowed by the layout"
                )));
            }
        }
        Ok(())
    }
}

/// Per-stream decode rates and shared rate of one active stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamRates {
    pub stream: UserSet,
    /// `(k, R_k^A)` for every member.
    pub decode_rates: Vec<(usize, f64)>,
    /// `R_A = min_k R_k^A`.
    pub shared_rate: f64,
}

/// Every rate of one evaluated operating point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub streams: Vec<StreamRates>,
    /// `R_k`, zero for users without an active private stream.
    pub private_rates: Vec<f64>,
    /// `R_{k,tot}`.
    pub user_totals: Vec<f64>,
    pub wsr: f64,
}

impl RateReport {
    pub fn sum_rate(&self) -> f64 {
        self.user_totals.iter().sum()
    }
}

/// Precomputed channel gains `|h_k^H p_A|²` for one operating point.
#[derive(Debug, Clone)]
pub struct RateContext<'a> {
    layout: &'a StreamLayout,
    channel: &'a ChannelState,
    noise: &'a [f64],
    projections: Vec<Vec<Complex64>>,
}

impl<'a> RateContext<'a> {
    pub fn new(
        layout: &'a StreamLayout,
        precoders: &PrecoderSet,
        channel: &'a ChannelState,
        noise: &'a [f64],
    ) -> Result<Self> {
        precoders.check_layout(layout)?;
        if channel.num_users() != layout.num_users() || noise.len() != layout.num_users() {
            return Err(Error::Dimension(format!(
                "layout has {} users, channel {} and noise {}",
                layout.num_users(),
                channel.num_users(),
                noise.len()
            )));
        }
        if channel.num_bs() != precoders.num_bs() {
            return Err(Error::Dimension(format!(
                "channel has {} BSs, precoders {}",
                channel.num_bs(),
                precoders.num_bs()
            )));
        }
        let projections = (1..=layout.num_users())
            .map(|k| {
                let h = channel.user(k);
                (0..layout.num_streams())
                    .map(|s| inner(h, precoders.column(s)))
                    .collect()
            })
            .collect();
        Ok(Self {
            layout,
            channel,
            noise,
            projections,
        })
    }

    pub fn layout(&self) -> &StreamLayout {
        self.layout
    }

    pub fn channel(&self) -> &ChannelState {
        self.channel
    }

    /// `h_k^H p_s` for stream index `s`.
    pub fn projection(&self, user: usize, stream_idx: usize) -> Complex64 {
        self.projections[user - 1][stream_idx]
    }

    /// `|h_k^H p_s|²`.
    pub fn gain(&self, user: usize, stream_idx: usize) -> f64 {
        self.projections[user - 1][stream_idx].norm_sqr()
    }

    pub fn noise(&self, user: usize) -> f64 {
        self.noise[user - 1]
    }

    fn locate(&self, user: usize, stream: UserSet) -> Result<usize> {
        if user == 0 || user > self.layout.num_users() {
            return Err(Error::UnknownUser {
                user,
                users: self.layout.num_users(),
            });
        }
        let idx = self
            .layout
            .index_of(stream)
            .ok_or(Error::UnknownStream(stream))?;
        if !stream.contains(user) {
            return Err(Error::NotInStream { user, stream });
        }
        Ok(idx)
    }

    /// Whether stream `other` still interferes when `user` decodes stream
    /// `target`: same-order intended streams later in `π_l`, all lower-order
    /// intended streams, and every stream the user does not decode.
    pub fn interferes(&self, user: usize, target: usize, other: usize) -> bool {
        if other == target {
            return false;
        }
        let a = self.layout.stream(target);
        let b = self.layout.stream(other);
        if !b.contains(user) {
            return true;
        }
        match b.order().cmp(&a.order()) {
            std::cmp::Ordering::Less => true,
            std::cmp::Ordering::Greater => false,
            std::cmp::Ordering::Equal => self.layout.rank(other) > self.layout.rank(target),
        }
    }

    /// Interference power by stream index; `user` must decode the stream.
    pub fn interference_at(&self, user: usize, stream_idx: usize) -> f64 {
        (0..self.layout.num_streams())
            .filter(|&o| self.interferes(user, stream_idx, o))
            .map(|o| self.gain(user, o))
            .sum()
    }

    pub fn interference(&self, user: usize, stream: UserSet) -> Result<f64> {
        let idx = self.locate(user, stream)?;
        Ok(self.interference_at(user, idx))
    }

    pub fn sinr_at(&self, user: usize, stream_idx: usize) -> f64 {
        self.gain(user, stream_idx) / (self.interference_at(user, stream_idx) + self.noise(user))
    }

    pub fn sinr(&self, user: usize, stream: UserSet) -> Result<f64> {
        let idx = self.locate(user, stream)?;
        Ok(self.sinr_at(user, idx))
    }

    pub fn stream_rate_at(&self, user: usize, stream_idx: usize) -> f64 {
        self.sinr_at(user, stream_idx).ln_1p() / std::f64::consts::LN_2
    }

    /// `R_k^A = log2(1 + γ_k^A)`.
    pub fn stream_rate(&self, user: usize, stream: UserSet) -> Result<f64> {
        let idx = self.locate(user, stream)?;
        Ok(self.stream_rate_at(user, idx))
    }

    pub fn common_stream_rate_at(&self, stream_idx: usize) -> f64 {
        self.layout
            .stream(stream_idx)
            .members()
            .map(|k| self.stream_rate_at(k, stream_idx))
            .fold(f64::INFINITY, f64::min)
    }

    /// `R_A = min_{k∈A} R_k^A`.
    pub fn common_stream_rate(&self, stream: UserSet) -> Result<f64> {
        let idx = self
            .layout
            .index_of(stream)
            .ok_or(Error::UnknownStream(stream))?;
        Ok(self.common_stream_rate_at(idx))
    }

    /// `R_k`, zero when user `k` has no active private stream.
    pub fn private_rate(&self, user: usize) -> f64 {
        self.layout
            .private_stream(user)
            .map(|i| self.stream_rate_at(user, i))
            .unwrap_or(0.0)
    }

    /// Checks `Σ_{k∈A} C_k^A ≤ R_A` within [`ALLOCATION_TOLERANCE`].
    pub fn check_allocation(&self, allocation: &CommonRateAllocation) -> Result<()> {
        allocation.check_layout(self.layout)?;
        for (i, s) in self.layout.streams().iter().enumerate() {
            if s.order() < 2 {
                continue;
            }
            let excess = allocation.stream_total(*s) - self.common_stream_rate_at(i);
            if excess > ALLOCATION_TOLERANCE {
                return Err(Error::InfeasibleAllocation {
                    stream: *s,
                    excess,
                });
            }
        }
        Ok(())
    }

    /// `R_{k,tot} = Σ_{A∋k, |A|≥2} C_k^A + R_k`.
    pub fn user_total_rate(&self, user: usize, allocation: &CommonRateAllocation) -> Result<f64> {
        if user == 0 || user > self.layout.num_users() {
            return Err(Error::UnknownUser {
                user,
                users: self.layout.num_users(),
            });
        }
        self.check_allocation(allocation)?;
        Ok(allocation.user_total(user) + self.private_rate(user))
    }

    /// `Σ_k u_k R_{k,tot}`.
    pub fn wsr(&self, weights: &[f64], allocation: &CommonRateAllocation) -> Result<f64> {
        Ok(self.report(weights, allocation)?.wsr)
    }

    pub fn report(&self, weights: &[f64], allocation: &CommonRateAllocation) -> Result<RateReport> {
        if weights.len() != self.layout.num_users() {
            return Err(Error::Dimension(format!(
                "{} weights for {} users",
                weights.len(),
                self.layout.num_users()
            )));
        }
        self.check_allocation(allocation)?;
        let streams = self
            .layout
            .streams()
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let decode_rates: Vec<(usize, f64)> =
                    s.members().map(|k| (k, self.stream_rate_at(k, i))).collect();
                let shared_rate = decode_rates
                    .iter()
                    .map(|(_, r)| *r)
                    .fold(f64::INFINITY, f64::min);
                StreamRates {
                    stream: *s,
                    decode_rates,
                    shared_rate,
                }
            })
            .collect();
        let k = self.layout.num_users();
        let private_rates: Vec<f64> = (1..=k).map(|u| self.private_rate(u)).collect();
        let user_totals: Vec<f64> = (1..=k)
            .map(|u| allocation.user_total(u) + private_rates[u - 1])
            .collect();
        let wsr = user_totals.iter().zip(weights).map(|(r, u)| r * u).sum();
        Ok(RateReport {
            streams,
            private_rates,
            user_totals,
            wsr,
        })
    }
}
