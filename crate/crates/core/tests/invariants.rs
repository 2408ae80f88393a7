mod common;

use common::{breslow, efron_brute, random_field, random_outcomes};
use lagsurv::eval::default_x_grid;
use lagsurv::{
    build_masks, c_index, cumulative_effect, efron_loss, exposure_forward, gmse, init_params, lag_convolve,
    project_kernel, ContributionGrid, EvalMode, ExposurePanel, HazardField, LagKernel, NetConfig,
};
use proptest::prelude::*;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn efron_shift_invariant(seed: u64, n in 1usize..10, horizon in 1usize..8, c in -50.0f64..50.0) {
        let mut r = rng(seed);
        let out = random_outcomes(&mut r, n, horizon, true);
        let h = random_field(&mut r, n, horizon, 3.0);
        let masks = build_masks(&out, horizon).unwrap();
        let a = efron_loss(&h, &masks).unwrap();
        let b = efron_loss(&h.map(|v| v + c), &masks).unwrap();
        prop_assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn efron_matches_direct_sums(seed: u64, n in 1usize..10, horizon in 1usize..6) {
        let mut r = rng(seed);
        let out = random_outcomes(&mut r, n, horizon, true);
        let h = random_field(&mut r, n, horizon, 2.0);
        let masks = build_masks(&out, horizon).unwrap();
        prop_assert!((efron_loss(&h, &masks).unwrap() - efron_brute(&h, &out)).abs() < 1e-9);
    }

    #[test]
    fn untied_events_reduce_to_breslow(seed: u64, n in 1usize..10, horizon in 1usize..12) {
        let mut r = rng(seed);
        let out = random_outcomes(&mut r, n, horizon, false);
        let h = random_field(&mut r, n, horizon, 2.0);
        let masks = build_masks(&out, horizon).unwrap();
        prop_assert!((efron_loss(&h, &masks).unwrap() - breslow(&h, &out)).abs() < 1e-9);
    }

    #[test]
    fn raising_event_hazard_never_raises_loss(seed: u64, n in 1usize..10, horizon in 1usize..12, delta in 0.0f64..5.0) {
        let mut r = rng(seed);
        let out = random_outcomes(&mut r, n, horizon, false);
        let h = random_field(&mut r, n, horizon, 2.0);
        let masks = build_masks(&out, horizon).unwrap();
        let events: Vec<usize> = (0..n).filter(|&i| out[i].event).collect();
        let i = events[r.random_range(0..events.len())];
        let mut raised = h.clone();
        raised.values_mut()[i * horizon + out[i].time - 1] += delta;
        let before = efron_loss(&h, &masks).unwrap();
        let after = efron_loss(&raised, &masks).unwrap();
        prop_assert!(after <= before + 1e-12);
    }

    #[test]
    fn masked_cells_are_ignored(seed: u64, n in 1usize..10, horizon in 1usize..10, garbage in -1e6f64..1e6) {
        let mut r = rng(seed);
        let out = random_outcomes(&mut r, n, horizon, true);
        let h = random_field(&mut r, n, horizon, 2.0);
        let masks = build_masks(&out, horizon).unwrap();
        let mut noisy = h.clone();
        for (i, o) in out.iter().enumerate() {
            for t in o.time + 1..=horizon {
                noisy.values_mut()[i * horizon + t - 1] = garbage;
            }
        }
        prop_assert_eq!(efron_loss(&h, &masks).unwrap(), efron_loss(&noisy, &masks).unwrap());
    }

    #[test]
    fn convolution_scale_invariant(seed: u64, lag in 0usize..6, len in 1usize..20, k in prop::sample::select(vec![-2.0, 0.5, 10.0, -0.1, 3.0])) {
        let mut r = rng(seed);
        let w: Vec<f64> = (0..=lag).map(|_| r.random_range(-1.0..1.0)).collect();
        let f: Vec<f64> = (0..len).map(|_| r.random_range(-2.0..2.0)).collect();
        let base = lag_convolve(&LagKernel(w.clone()), &f);
        let scaled = lag_convolve(
            &LagKernel(w.iter().map(|v| v / k).collect()),
            &f.iter().map(|v| v * k).collect::<Vec<_>>(),
        );
        for (a, b) in base.iter().zip(&scaled) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn projection_idempotent(w in prop::collection::vec(-10.0f64..10.0, 1..25)) {
        prop_assume!(w.iter().any(|v| v.abs() > 1e-6));
        let once = project_kernel(&LagKernel(w)).unwrap();
        let twice = project_kernel(&once).unwrap();
        prop_assert!((once.norm() - 1.0).abs() < 1e-12);
        for (a, b) in once.weights().iter().zip(twice.weights()) {
            prop_assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn gmse_symmetric(seed: u64) {
        let mut r = rng(seed);
        let x = default_x_grid();
        let l: Vec<usize> = (0..=5).collect();
        let mk = |r: &mut ChaCha8Rng| {
            let f: Vec<f64> = x.iter().map(|_| r.random_range(-1.0..1.0)).collect();
            let w: Vec<f64> = l.iter().map(|_| r.random_range(-1.0..1.0)).collect();
            ContributionGrid::from_functions(&x, &l, &f, &w)
        };
        let a = mk(&mut r);
        let b = mk(&mut r);
        prop_assert_eq!(gmse(&a, &b).unwrap(), gmse(&b, &a).unwrap());
        prop_assert_eq!(gmse(&a, &a).unwrap(), 0.0);
        prop_assert!(gmse(&a, &b).unwrap() >= 0.0);
    }

    #[test]
    fn c_index_shift_and_negation(seed: u64, n in 2usize..30, horizon in 1usize..10, shift in -8i32..8) {
        let mut r = rng(seed);
        let out = random_outcomes(&mut r, n, horizon, true);
        let v: Vec<f64> = (0..n * horizon).map(|_| r.random_range(-8i32..8) as f64 * 0.25).collect();
        let h = HazardField::new(n, horizon, v).unwrap();
        let Ok(c) = c_index(&h, &out) else { return Ok(()); };
        let shifted = c_index(&h.map(|x| x + shift as f64 * 0.25), &out).unwrap();
        let negated = c_index(&h.map(|x| -x), &out).unwrap();
        prop_assert_eq!(c, shifted);
        prop_assert!((negated - (1.0 - c)).abs() < 1e-12);
    }

    #[test]
    fn causal_in_time(seed: u64, t0 in 1usize..15, bump in 0.05f64..0.9) {
        let cfg = NetConfig::new(vec![5, 5], 3);
        let p = init_params(&cfg, seed).unwrap();
        let (n, horizon) = (2, 15);
        let mut r = rng(seed ^ 1);
        let v: Vec<f64> = (0..n * horizon).map(|_| r.random_range(0.0..0.1)).collect();
        let base = ExposurePanel::new(n, horizon, v.clone()).unwrap();
        let mut moved = v;
        moved[horizon + t0 - 1] += bump;
        let moved = ExposurePanel::new(n, horizon, moved).unwrap();
        let a = cumulative_effect(&p, &base, EvalMode::Inference).unwrap();
        let b = cumulative_effect(&p, &moved, EvalMode::Inference).unwrap();
        prop_assert_eq!(a.row(0), b.row(0));
        for t in 1..=horizon {
            let changed = a.get(1, t) != b.get(1, t);
            if changed {
                prop_assert!((t0..=t0 + 3).contains(&t));
            }
        }
    }

    #[test]
    fn composition_matches_pointwise_then_convolve(seed: u64) {
        let cfg = NetConfig::new(vec![6], 4);
        let p = init_params(&cfg, seed).unwrap();
        let mut r = rng(seed);
        let (n, horizon) = (3, 9);
        let v: Vec<f64> = (0..n * horizon).map(|_| r.random_range(0.0..1.0)).collect();
        let panel = ExposurePanel::new(n, horizon, v).unwrap();
        let h = cumulative_effect(&p, &panel, EvalMode::Inference).unwrap();
        let kernel = LagKernel(p.kernel().to_vec());
        for i in 0..n {
            let f = exposure_forward(&p, panel.row(i), EvalMode::Inference).unwrap();
            let direct = lag_convolve(&kernel, &f);
            for (a, b) in h.row(i).iter().zip(&direct) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
