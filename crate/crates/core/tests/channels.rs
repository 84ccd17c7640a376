mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rsma_core::channels::*;

fn approx_eq(a: &[Vec<f64>], b: &[&[f64]]) -> bool {
    a.len() == b.len()
        && a.iter().zip(b).all(|(x, y)| x.len() == y.len() && x.iter().zip(*y).all(|(p, q)| (p - q).abs() < 1e-15))
}

#[test]
fn two_cell_profiles() {
    let v = Topology::TwoCell.variance_profile(1.0, 1.0).unwrap();
    assert!(approx_eq(&v, &[&[1.0, 1.0], &[1.0, 1.0]]));
    let v = Topology::TwoCell.variance_profile(0.05, 0.1).unwrap();
    assert!(approx_eq(&v, &[&[1.0, 0.05], &[0.005, 0.1]]));
    for alpha in [0.05, 0.3, 1.0] {
        let v = Topology::TwoCell.variance_profile(alpha, 1.0).unwrap();
        assert_eq!(v[0].iter().sum::<f64>(), 1.0 + alpha);
        assert_eq!(v[1].iter().sum::<f64>(), 1.0 + alpha);
    }
}

#[test]
fn three_cell_profiles() {
    let v = Topology::ThreeCell.variance_profile(1.0, 1.0).unwrap();
    assert!(approx_eq(&v, &[&[1.0, 1.0, 0.0], &[1.0, 1.0, 1.0], &[0.0, 1.0, 1.0]]));
    let v = Topology::ThreeCell.variance_profile(0.5, 0.3).unwrap();
    assert!((v[1][0] - 0.15).abs() < 1e-15 && (v[1][2] - 0.15).abs() < 1e-15);
    assert_eq!(v[1][1], 0.3);
    assert_eq!(v[2][1], 0.5);
}

#[test]
fn parameter_ranges() {
    for (a, b) in [(0.0, 1.0), (1.5, 1.0), (1.0, 0.0), (1.0, -0.2), (f64::NAN, 1.0)] {
        assert!(Topology::TwoCell.variance_profile(a, b).is_err());
        assert!(Topology::ThreeCell.realization(a, b, 1, 0).is_err());
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    assert!(wyner_two_cell(2.0, 1.0, &mut rng).is_err());
    assert!(wyner_three_cell(1.0, 1.01, &mut rng).is_err());
}

#[test]
fn structural_zeros() {
    for draw in 0..200 {
        let h = Topology::ThreeCell.realization(0.7, 0.4, 3, draw).unwrap();
        assert_eq!(h.user(1)[2], common::c(0.0, 0.0));
        assert_eq!(h.user(3)[0], common::c(0.0, 0.0));
        assert!(h.user(2).iter().all(|g| g.norm() > 0.0));
    }
}

#[test]
fn complex_gaussian_sampler() {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    assert_eq!(sample_complex_gaussian(0.0, &mut rng).unwrap(), common::c(0.0, 0.0));
    assert!(sample_complex_gaussian(-1.0, &mut rng).is_err());
    let n = 100_000;
    let (mut power, mut re2, mut im2) = (0.0, 0.0, 0.0);
    for _ in 0..n {
        let g = sample_complex_gaussian(1.0, &mut rng).unwrap();
        power += g.norm_sqr();
        re2 += g.re * g.re;
        im2 += g.im * g.im;
    }
    let power = power / n as f64;
    assert!((0.98..=1.02).contains(&power), "{power}");
    assert!((re2 / n as f64 - 0.5).abs() < 0.01 && (im2 / n as f64 - 0.5).abs() < 0.01);

    let a: Vec<_> = {
        let mut r = realization_rng(5, 2);
        (0..10).map(|_| sample_complex_gaussian(1.0, &mut r).unwrap()).collect()
    };
    let b: Vec<_> = {
        let mut r = realization_rng(5, 2);
        (0..10).map(|_| sample_complex_gaussian(1.0, &mut r).unwrap()).collect()
    };
    assert_eq!(a, b);
}

fn moments(topology: Topology, alpha: f64, beta: f64) {
    let n = 10_000;
    let m = topology.num_bs();
    let k = topology.num_users();
    let draws: Vec<ChannelState> = (0..n).map(|d| topology.realization(alpha, beta, 99, d).unwrap()).collect();
    let profile = topology.variance_profile(alpha, beta).unwrap();
    let entries: Vec<(usize, usize)> = (1..=k).flat_map(|u| (0..m).map(move |b| (u, b))).collect();
    for &(u, b) in &entries {
        let var = draws.iter().map(|h| h.user(u)[b].norm_sqr()).sum::<f64>() / n as f64;
        let want = profile[u - 1][b];
        if want == 0.0 {
            assert_eq!(var, 0.0);
        } else {
            assert!((var / want - 1.0).abs() < 0.05, "entry ({u},{b}): {var} vs {want}");
        }
    }
    for (i, &(u, b)) in entries.iter().enumerate() {
        for &(v, d) in &entries[i + 1..] {
            let (su, sv) = (profile[u - 1][b], profile[v - 1][d]);
            if su == 0.0 || sv == 0.0 {
                continue;
            }
            let cross: num_complex::Complex64 = draws
                .iter()
                .map(|h| h.user(u)[b] * h.user(v)[d].conj())
                .sum::<num_complex::Complex64>()
                / n as f64;
            let rho = cross.norm() / (su * sv).sqrt();
            assert!(rho <= 0.05, "({u},{b}) vs ({v},{d}): {rho}");
        }
    }
}

#[test]
fn two_cell_moments() {
    moments(Topology::TwoCell, 0.05, 0.1);
    moments(Topology::TwoCell, 1.0, 1.0);
}

#[test]
fn three_cell_moments() {
    moments(Topology::ThreeCell, 0.5, 0.3);
}

#[test]
fn realizations_are_independent_of_evaluation_order() {
    let forward: Vec<_> = (0..8).map(|d| Topology::TwoCell.realization(1.0, 1.0, 4, d).unwrap()).collect();
    let backward: Vec<_> = (0..8).rev().map(|d| Topology::TwoCell.realization(1.0, 1.0, 4, d).unwrap()).collect();
    for (a, b) in forward.iter().zip(backward.iter().rev()) {
        assert_eq!(a, b);
    }
    assert_ne!(forward[0], forward[1]);
    assert_ne!(forward[0], Topology::TwoCell.realization(1.0, 1.0, 5, 0).unwrap());
    assert_eq!(forward[3].seed(), Some(4));
    assert_eq!(forward[3].draw(), Some(3));
}

#[test]
fn topology_names() {
    assert_eq!("two-cell".parse::<Topology>().unwrap(), Topology::TwoCell);
    assert_eq!(Topology::ThreeCell.to_string(), "three-cell");
    assert!("four-cell".parse::<Topology>().is_err());
}

#[test]
fn malformed_dumps() {
    let bad = [
        "",
        "realization,user,bs,re\n",
        "realization,user,bs,re,im\n0,0,1,1,0\n",
        "realization,user,bs,re,im\n1,1,1,1,0\n",
        "realization,user,bs,re,im\n0,1,1,1,0\n0,1,1,2,0\n",
        "realization,user,bs,re,im\n0,1,1,inf,0\n",
        "realization,user,bs,re,im\n0,1,1,x,0\n",
        "realization,user,bs,re,im\n0,1,2,1,0\n",
        "realization,user,bs,re,im\n0,1,1,1,0\n0,2,2,1,0\n",
        "realization,user,bs,re,im\n0,1,1,1,0\n0,1,2,1,0\n1,1,1,1,0\n",
    ];
    for text in bad {
        assert!(read_channel_csv(text.as_bytes()).is_err(), "{text:?}");
    }
}

proptest! {
    #[test]
    fn csv_round_trip(draws in prop::collection::vec(common::channel(3, 2), 1..4)) {
        let mut out = Vec::new();
        write_channel_csv(&mut out, &draws).unwrap();
        let back = read_channel_csv(out.as_slice()).unwrap();
        prop_assert_eq!(back.len(), draws.len());
        for (a, b) in back.iter().zip(&draws) {
            prop_assert_eq!(a.gains(), b.gains());
        }
    }

    #[test]
    fn seeded_draws_repeat(seed in any::<u64>(), draw in any::<u64>(), alpha in 0.01..=1.0f64, beta in 0.01..=1.0f64) {
        let a = Topology::ThreeCell.realization(alpha, beta, seed, draw).unwrap();
        let b = Topology::ThreeCell.realization(alpha, beta, seed, draw).unwrap();
        prop_assert_eq!(a, b);
    }
}
