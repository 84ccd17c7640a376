mod common;

use common::{c, grid_search_mulp, random_case, set};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rsma_core::channels::{sample_complex_gaussian, ChannelState};
use rsma_core::model::{PrecoderSet, ProblemInstance, StreamLayout};
use rsma_core::rate::{CommonRateAllocation, RateContext};
use rsma_core::schemes::{build_scheme, SchemeKind, POWER_TOLERANCE, QOS_TOLERANCE};
use rsma_core::wmmse::{
    ao_solve, ao_solve_warm, assemble_subproblem, augmented_wmse, initialize_precoders,
    mmse_equalizer, mmse_weight, mse, share_pairs, AoOptions, AoStatus, WmmseState,
    MONOTONE_SLACK,
};

// Grid-search optimum for the channel in `grid_oracle_reference`, frozen.
const GRID_REFERENCE_WSR: f64 = 3.931_835_901_152_76;

fn random_state(rng: &mut ChaCha8Rng) -> (StreamLayout, ChannelState, PrecoderSet, Vec<f64>) {
    let k = rng.random_range(1..=3usize);
    let m = rng.random_range(1..=3usize);
    let layout = StreamLayout::full(k).unwrap();
    let gains: Vec<Vec<Complex64>> = (0..k)
        .map(|_| (0..m).map(|_| sample_complex_gaussian(1.0, rng).unwrap()).collect())
        .collect();
    let cols: Vec<Vec<Complex64>> = (0..layout.num_streams())
        .map(|_| (0..m).map(|_| sample_complex_gaussian(2.0, rng).unwrap()).collect())
        .collect();
    let noise: Vec<f64> = (0..k).map(|_| rng.random_range(0.1..2.0)).collect();
    (
        layout,
        ChannelState::from_gains(gains).unwrap(),
        PrecoderSet::new(m, cols).unwrap(),
        noise,
    )
}

/// Largest deviation from `w − 1 = γ` and `ξ = 1 − R` over every decode pair.
fn identity_error(layout: &StreamLayout, h: &ChannelState, p: &PrecoderSet, noise: &[f64]) -> f64 {
    let ctx = RateContext::new(layout, p, h, noise).unwrap();
    let mut worst = 0.0_f64;
    for (s, k) in layout.decode_pairs() {
        let stream = layout.stream(s);
        let gamma = ctx.sinr(k, stream).unwrap();
        let rate = ctx.stream_rate(k, stream).unwrap();
        let g = mmse_equalizer(&ctx, k, stream).unwrap();
        let w = mmse_weight(&ctx, k, stream).unwrap();
        let xi = augmented_wmse(&ctx, k, stream, g, w).unwrap();
        worst = worst.max((w - 1.0 - gamma).abs()).max((xi - (1.0 - rate)).abs());
    }
    worst
}

#[test]
fn identities_hold_on_random_states() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0_f64;
    for _ in 0..100 {
        let (layout, h, p, noise) = random_state(&mut rng);
        worst = worst.max(identity_error(&layout, &h, &p, &noise));
    }
    assert!(worst <= 1e-9, "max identity error {worst:e}");
}

#[test]
fn identities_hold_along_the_ao_trajectory() {
    for seed in 0..4 {
        let case = random_case(100 + seed);
        let layout = build_scheme(&case.kind, case.instance.num_users()).unwrap();
        let init = initialize_precoders(&case.instance, &layout, &case.channel).unwrap();
        for iters in 1..=6 {
            let options = AoOptions {
                max_iterations: iters,
                ..AoOptions::default()
            };
            let sol = ao_solve(&case.instance, &layout, &case.channel, &init, &options).unwrap();
            let err = identity_error(&layout, &case.channel, &sol.precoders, case.instance.noise_variance());
            assert!(err <= 1e-9, "seed {seed} iteration {iters}: {err:e}");
        }
    }
}

#[test]
fn mse_closed_forms() {
    let layout = StreamLayout::full(1).unwrap();
    let h = ChannelState::from_gains(vec![vec![c(1.0, 0.0)]]).unwrap();
    let p = PrecoderSet::new(1, vec![vec![c(1.0, 0.0)]]).unwrap();
    let ctx = RateContext::new(&layout, &p, &h, &[1.0]).unwrap();
    let s = set(&[1]);
    // T = 2, g = 1/2, w = 2, ε = 1/2, ξ = 1 − log2 2 = 0.
    assert!((mmse_equalizer(&ctx, 1, s).unwrap() - c(0.5, 0.0)).norm() < 1e-15);
    assert!((mmse_weight(&ctx, 1, s).unwrap() - 2.0).abs() < 1e-15);
    assert!((mse(&ctx, 1, s, c(0.5, 0.0)).unwrap() - 0.5).abs() < 1e-15);
    assert!(augmented_wmse(&ctx, 1, s, c(0.5, 0.0), 2.0).unwrap().abs() < 1e-15);
    // g = 0 leaves the full symbol error.
    assert_eq!(mse(&ctx, 1, s, c(0.0, 0.0)).unwrap(), 1.0);
    assert!(augmented_wmse(&ctx, 1, s, c(0.5, 0.0), 0.0).is_err());
    assert!(augmented_wmse(&ctx, 1, s, c(0.5, 0.0), -1.0).is_err());
}

#[test]
fn mmse_equalizer_minimizes_the_mse() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..20 {
        let (layout, h, p, noise) = random_state(&mut rng);
        let ctx = RateContext::new(&layout, &p, &h, &noise).unwrap();
        for (s, k) in layout.decode_pairs() {
            let stream = layout.stream(s);
            let g = mmse_equalizer(&ctx, k, stream).unwrap();
            let best = mse(&ctx, k, stream, g).unwrap();
            for d in [c(1e-3, 0.0), c(0.0, 1e-3), c(-1e-3, 5e-4)] {
                assert!(mse(&ctx, k, stream, g + d).unwrap() >= best - 1e-15);
            }
            // ε^MMSE = 1 / (1 + γ).
            let gamma = ctx.sinr(k, stream).unwrap();
            assert!((best - 1.0 / (1.0 + gamma)).abs() <= 1e-12);
        }
    }
}

#[test]
fn single_user_meets_the_per_antenna_bound() {
    let h = [c(0.8, -0.3), c(-0.2, 1.1)];
    let channel = ChannelState::from_gains(vec![h.to_vec()]).unwrap();
    let layout = build_scheme(&SchemeKind::GeneralizedRs, 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..10 {
        let budgets = vec![rng.random_range(0.05..20.0), rng.random_range(0.05..20.0)];
        let instance = ProblemInstance::new(budgets.clone(), vec![0.0], vec![1.0]).unwrap();
        let init = initialize_precoders(&instance, &layout, &channel).unwrap();
        let sol = ao_solve(&instance, &layout, &channel, &init, &AoOptions::default()).unwrap();
        let bound = (1.0 + (budgets[0].sqrt() * h[0].norm() + budgets[1].sqrt() * h[1].norm()).powi(2)).log2();
        assert!((sol.wsr() - bound).abs() <= 1e-3, "{} vs {bound}", sol.wsr());
        assert!(sol.wsr() <= bound + 1e-9);
    }
}

fn grid_case(h: [[f64; 2]; 2]) -> (f64, f64) {
    let snr = 10.0_f64;
    let per_bs = snr / 2.0;
    let channel = ChannelState::from_real(&[&h[0], &h[1]]).unwrap();
    let instance = ProblemInstance::new(vec![per_bs; 2], vec![0.0; 2], vec![1.0; 2]).unwrap();
    let layout = build_scheme(&SchemeKind::Mulp, 2).unwrap();
    let init = initialize_precoders(&instance, &layout, &channel).unwrap();
    let sol = ao_solve(&instance, &layout, &channel, &init, &AoOptions::default()).unwrap();
    let grid = grid_search_mulp(h, [per_bs; 2], [1.0; 2], 1.0, 0.02);
    (sol.wsr(), grid)
}

#[test]
fn grid_oracle_reference() {
    let (ao, grid) = grid_case([[1.0, 0.4], [0.3, 0.8]]);
    assert!((grid - GRID_REFERENCE_WSR).abs() <= 1e-9, "grid {grid}");
    assert!((ao - grid).abs() <= 0.05, "ao {ao} grid {grid}");
}

#[test]
fn grid_oracle_on_random_real_channels() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    for _ in 0..2 {
        let mut h = [[0.0; 2]; 2];
        for v in h.iter_mut().flatten() {
            *v = rng.random_range(-1.5..1.5);
        }
        let (ao, grid) = grid_case(h);
        assert!((ao - grid).abs() <= 0.05, "{h:?}: ao {ao} grid {grid}");
    }
}

#[test]
fn random_instances_are_monotone_and_feasible() {
    for seed in 0..30 {
        let case = random_case(seed);
        let inst = &case.instance;
        let layout = build_scheme(&case.kind, inst.num_users()).unwrap();
        let init = initialize_precoders(inst, &layout, &case.channel).unwrap();
        let sol = ao_solve(inst, &layout, &case.channel, &init, &AoOptions::default()).unwrap();
        for pair in sol.trace.windows(2) {
            assert!(pair[1].wsr >= pair[0].wsr - MONOTONE_SLACK, "seed {seed}: {pair:?}");
        }
        if sol.status == AoStatus::Infeasible {
            continue;
        }
        assert!(sol.precoders.max_power_residual(inst.per_bs_power()) <= POWER_TOLERANCE);
        for (r, th) in sol.user_rates().iter().zip(inst.qos()) {
            assert!(*r >= th - QOS_TOLERANCE, "seed {seed}: rate {r} below {th}");
        }
        for (_, _, share) in sol.allocation.iter() {
            assert!(share >= 0.0);
        }
        let ctx = RateContext::new(&layout, &sol.precoders, &case.channel, inst.noise_variance()).unwrap();
        let wsr = ctx.wsr(inst.weights(), &sol.allocation).unwrap();
        assert!((wsr - sol.wsr()).abs() <= 1e-6, "seed {seed}");
        assert!(sol.iterations <= 300);
    }
}

#[test]
fn converged_point_is_a_fixed_point() {
    for seed in [2, 7, 11] {
        let case = random_case(seed);
        let inst = &case.instance;
        let layout = build_scheme(&case.kind, inst.num_users()).unwrap();
        let init = initialize_precoders(inst, &layout, &case.channel).unwrap();
        let sol = ao_solve(inst, &layout, &case.channel, &init, &AoOptions::default()).unwrap();
        if sol.status != AoStatus::Converged {
            continue;
        }
        let options = AoOptions {
            max_iterations: 1,
            ..AoOptions::default()
        };
        let again =
            ao_solve_warm(inst, &layout, &case.channel, &sol.precoders, Some(&sol.allocation), &options)
                .unwrap();
        assert!(again.wsr() >= sol.wsr() - MONOTONE_SLACK);
        assert!(again.wsr() <= sol.wsr() + 1e-3, "seed {seed}: {} vs {}", again.wsr(), sol.wsr());
    }
}

#[test]
fn shares_reproduce_the_weighted_sum_rate() {
    let case = random_case(4);
    let inst = &case.instance;
    let layout = StreamLayout::full(inst.num_users()).unwrap();
    let init = initialize_precoders(inst, &layout, &case.channel).unwrap();
    let sol = ao_solve(inst, &layout, &case.channel, &init, &AoOptions::default()).unwrap();
    let mut state = WmmseState::new(&layout, &case.channel, inst.noise_variance(), sol.precoders.clone()).unwrap();
    state.set_shares(&layout, &sol.allocation);
    // Shares in nats map back to c = −x / ln 2.
    let mut back = CommonRateAllocation::new();
    for ((s, k), x) in share_pairs(&layout).iter().zip(&state.shares) {
        back.set(layout.stream(*s), *k, -x / std::f64::consts::LN_2).unwrap();
    }
    let ctx = RateContext::new(&layout, &sol.precoders, &case.channel, inst.noise_variance()).unwrap();
    let wsr = ctx.wsr(inst.weights(), &back).unwrap();
    assert!((wsr - sol.wsr()).abs() <= 1e-9);
}

#[test]
fn subproblem_sizes() {
    let channel = ChannelState::from_real(&[&[1.0, 0.3], &[0.2, 0.9]]).unwrap();
    let instance = ProblemInstance::new(vec![1.0, 1.0], vec![0.0; 2], vec![1.0; 2]).unwrap();
    let size = |kind: SchemeKind| {
        let layout = build_scheme(&kind, 2).unwrap();
        let p = initialize_precoders(&instance, &layout, &channel).unwrap();
        let state = WmmseState::new(&layout, &channel, instance.noise_variance(), p).unwrap();
        assemble_subproblem(&state, &instance, &layout, &channel).unwrap().size
    };
    let full = size(SchemeKind::GeneralizedRs);
    assert_eq!((full.precoder_columns, full.precoder_vars), (3, 12));
    assert_eq!((full.share_vars, full.common_constraints), (2, 2));
    assert_eq!((full.power_constraints, full.qos_constraints), (2, 2));
    let mulp = size(SchemeKind::Mulp);
    assert_eq!((mulp.precoder_columns, mulp.share_vars, mulp.common_constraints), (2, 0, 0));
    let noma = size(SchemeKind::Scsic(vec![1, 2]));
    assert_eq!((noma.precoder_columns, noma.share_vars, noma.common_constraints), (2, 1, 2));
}

#[test]
fn unreachable_qos_is_flagged() {
    let channel = ChannelState::from_real(&[&[1.0, 0.3], &[0.2, 0.9]]).unwrap();
    let instance = ProblemInstance::new(vec![0.1, 0.1], vec![5.0, 5.0], vec![1.0; 2]).unwrap();
    for kind in [SchemeKind::GeneralizedRs, SchemeKind::Mulp] {
        let layout = build_scheme(&kind, 2).unwrap();
        let init = initialize_precoders(&instance, &layout, &channel).unwrap();
        let sol = ao_solve(&instance, &layout, &channel, &init, &AoOptions::default()).unwrap();
        assert_eq!(sol.status, AoStatus::Infeasible);
        assert!(!sol.status.is_feasible());
    }
}

#[test]
fn over_budget_start_is_rejected() {
    let channel = ChannelState::from_real(&[&[1.0, 0.3], &[0.2, 0.9]]).unwrap();
    let instance = ProblemInstance::new(vec![1.0, 1.0], vec![0.0; 2], vec![1.0; 2]).unwrap();
    let layout = build_scheme(&SchemeKind::Mulp, 2).unwrap();
    let p = PrecoderSet::new(2, vec![vec![c(2.0, 0.0), c(0.0, 0.0)], vec![c(0.0, 0.0); 2]]).unwrap();
    assert!(ao_solve(&instance, &layout, &channel, &p, &AoOptions::default()).is_err());
}

#[test]
fn initialization_meets_budgets_exactly() {
    for seed in 0..20 {
        let case = random_case(seed);
        let layout = build_scheme(&case.kind, case.instance.num_users()).unwrap();
        let p = initialize_precoders(&case.instance, &layout, &case.channel).unwrap();
        let loads = p.per_bs_power();
        let budgets = case.instance.per_bs_power();
        assert!(loads.iter().zip(budgets).all(|(l, b)| *l <= b + 1e-12));
        assert!(loads.iter().zip(budgets).any(|(l, b)| (l - b).abs() <= 1e-9 * b));
    }
}
