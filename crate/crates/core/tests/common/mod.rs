#![allow(dead_code)]

pub mod qcqp;

use num_complex::Complex64;
use proptest::prelude::*;
use rsma_core::channels::ChannelState;
use rsma_core::model::{PrecoderSet, StreamLayout, UserSet};

pub fn set(members: &[usize]) -> UserSet {
    UserSet::from_members(members).unwrap()
}

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn complex() -> impl Strategy<Value = Complex64> {
    (-2.0..2.0f64, -2.0..2.0f64).prop_map(|(a, b)| c(a, b))
}

pub fn channel(k: usize, m: usize) -> impl Strategy<Value = ChannelState> {
    prop::collection::vec(prop::collection::vec(complex(), m), k)
        .prop_map(|g| ChannelState::from_gains(g).unwrap())
}

pub fn precoders(m: usize, streams: usize) -> impl Strategy<Value = PrecoderSet> {
    prop::collection::vec(prop::collection::vec(complex(), m), streams)
        .prop_map(move |cols| PrecoderSet::new(m, cols).unwrap())
}

/// Interference at `user` decoding `target`, from the definition: every
/// stream not containing the user, every lower-order stream it decodes, and
/// the same-order streams decoded after `target`.
pub fn oracle_interference(
    layout: &StreamLayout,
    p: &PrecoderSet,
    h: &ChannelState,
    user: usize,
    target: UserSet,
) -> f64 {
    let hk = h.user(user);
    let gain = |s: UserSet| {
        let i = layout.index_of(s).unwrap();
        let v: Complex64 = hk
            .iter()
            .zip(p.column(i))
            .map(|(a, b)| a.conj() * b)
            .sum();
        v.norm_sqr()
    };
    let order = layout.decoding_order(target.order());
    let pos = |s: UserSet| order.iter().position(|x| *x == s).unwrap();
    layout
        .streams()
        .iter()
        .filter(|&&b| b != target)
        .filter(|&&b| {
            !b.contains(user)
                || b.order() < target.order()
                || (b.order() == target.order() && pos(b) > pos(target))
        })
        .map(|&b| gain(b))
        .sum()
}

pub fn oracle_rate(
    layout: &StreamLayout,
    p: &PrecoderSet,
    h: &ChannelState,
    noise: f64,
    user: usize,
    target: UserSet,
) -> f64 {
    let hk = h.user(user);
    let i = layout.index_of(target).unwrap();
    let s: Complex64 = hk.iter().zip(p.column(i)).map(|(a, b)| a.conj() * b).sum();
    let gamma = s.norm_sqr() / (oracle_interference(layout, p, h, user, target) + noise);
    (1.0 + gamma).log2()
}

/// Exhaustive MU-LP search over real precoders on a grid of `step`, two
/// users and two BSs. `h[k][m]` is the real gain from BS `m` to user `k`.
/// Returns the best weighted sum-rate found.
pub fn grid_search_mulp(h: [[f64; 2]; 2], budgets: [f64; 2], weights: [f64; 2], noise: f64, step: f64) -> f64 {
    let axis = |p: f64| -> Vec<f64> {
        let n = (p.sqrt() / step).floor() as i64;
        (-n..=n).map(|i| i as f64 * step).collect()
    };
    let bs1 = axis(budgets[0]);
    let bs2 = axis(budgets[1]);
    // Pairs (p1, p2) on BS 2 within its budget, with their projections.
    let inner: Vec<[f64; 4]> = bs2
        .iter()
        .flat_map(|&b| bs2.iter().map(move |&d| (b, d)))
        .filter(|(b, d)| b * b + d * d <= budgets[1] + 1e-12)
        .map(|(b, d)| [h[0][1] * b, h[0][1] * d, h[1][1] * b, h[1][1] * d])
        .collect();
    let mut best = f64::NEG_INFINITY;
    // A common sign flip of one precoder changes nothing, so a, c >= 0.
    for &a in bs1.iter().filter(|v| **v >= 0.0) {
        for &c in bs1.iter().filter(|v| **v >= 0.0) {
            if a * a + c * c > budgets[0] + 1e-12 {
                continue;
            }
            let (s11, s12, s21, s22) = (h[0][0] * a, h[0][0] * c, h[1][0] * a, h[1][0] * c);
            for q in &inner {
                let own1 = s11 + q[0];
                let int1 = s12 + q[1];
                let own2 = s22 + q[3];
                let int2 = s21 + q[2];
                let r1 = (own1 * own1 / (int1 * int1 + noise)).ln_1p();
                let r2 = (own2 * own2 / (int2 * int2 + noise)).ln_1p();
                let v = weights[0] * r1 + weights[1] * r2;
                if v > best {
                    best = v;
                }
            }
        }
    }
    best / std::f64::consts::LN_2
}

/// A random problem for convergence and feasibility checks.
pub struct RandomCase {
    pub kind: rsma_core::schemes::SchemeKind,
    pub instance: rsma_core::model::ProblemInstance,
    pub channel: ChannelState,
}

/// Instances with `K <= 3`, `M <= 3`, unit-variance Rayleigh gains, SNR in
/// [0, 20] dB split equally over the BSs, weights in [0.5, 2], and QoS
/// thresholds that are zero half of the time and small otherwise. The
/// scheme is drawn uniformly from every variant of every family.
pub fn random_case(seed: u64) -> RandomCase {
    use rand::{Rng, SeedableRng};
    use rsma_core::channels::sample_complex_gaussian;
    use rsma_core::model::ProblemInstance;
    use rsma_core::schemes::SchemeFamily;

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let k = rng.random_range(1..=3usize);
    let m = rng.random_range(1..=3usize);
    let kinds: Vec<_> = SchemeFamily::ALL
        .iter()
        .flat_map(|f| f.variants(k).unwrap())
        .collect();
    let kind = kinds[rng.random_range(0..kinds.len())].clone();
    let snr_db: f64 = rng.random_range(0.0..20.0);
    let per_bs = 10f64.powf(snr_db / 10.0) / m as f64;
    let weights: Vec<f64> = (0..k).map(|_| rng.random_range(0.5..2.0)).collect();
    let qos: Vec<f64> = if rng.random_bool(0.5) {
        vec![0.0; k]
    } else {
        (0..k).map(|_| rng.random_range(0.0..0.1)).collect()
    };
    let gains: Vec<Vec<Complex64>> = (0..k)
        .map(|_| (0..m).map(|_| sample_complex_gaussian(1.0, &mut rng).unwrap()).collect())
        .collect();
    RandomCase {
        kind,
        instance: ProblemInstance::new(vec![per_bs; m], qos, weights).unwrap(),
        channel: ChannelState::from_gains(gains).unwrap(),
    }
}
