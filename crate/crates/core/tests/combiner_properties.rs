use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use combofilter::combiner::{lambda_from_a, rho_a_upper_bound, update_a_sign};
use combofilter::{
    CombinerConfig, CombinerState, FilterConfig, FilterState, MixingRule, TapDelayLine,
    TransferScheme,
};

fn combiner(config: CombinerConfig, taps: usize) -> CombinerState {
    let fast = FilterState::new(FilterConfig::new(0.05, 1e-4, taps).unwrap());
    let slow = FilterState::new(FilterConfig::new(0.005, 1e-4, taps).unwrap());
    CombinerState::new(fast, slow, config).unwrap()
}

/// Desired signal from a fixed 4-tap system plus occasional large spikes.
fn stream(seed: u64, len: usize) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let system = [0.5, -0.4, 0.3, 0.2];
    let x: Vec<f64> = (0..len).map(|_| rng.gen_range(-1.7..1.7)).collect();
    let mut line = TapDelayLine::new(4);
    let d = x
        .iter()
        .map(|&s| {
            line.push(s);
            let clean: f64 = system.iter().zip(line.as_slice()).map(|(w, x)| w * x).sum();
            let spike = if rng.gen_bool(0.02) {
                rng.gen_range(-50.0..50.0)
            } else {
                0.0
            };
            clean + rng.gen_range(-0.1..0.1) + spike
        })
        .collect();
    (x, d)
}

fn configs() -> impl Strategy<Value = CombinerConfig> {
    (
        0.1f64..50.0,
        1.0f64..6.0,
        1u64..8,
        prop_oneof![Just(MixingRule::SignCost), Just(MixingRule::SquaredCost)],
        prop_oneof![Just(TransferScheme::Tracking), Just(TransferScheme::None)],
    )
        .prop_map(
            |(rho_a, a_plus, window, mixing_rule, transfer)| CombinerConfig {
                rho_a,
                nu_a: rho_a,
                a_plus,
                window,
                eps_u: 1e-2,
                mixing_rule,
                transfer,
            },
        )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn step_invariants_hold(config in configs(), seed in any::<u64>()) {
        let (x, d) = stream(seed, 1_500);
        let mut s = combiner(config, 4);
        let mut line = TapDelayLine::new(4);
        for (xn, dn) in x.iter().zip(&d) {
            line.push(*xn);
            let window_hit = s.at_window();
            let diag = s.step(&line, *dn);

            let scale = dn.abs() + diag.y_fast.abs() + diag.y_slow.abs();
            let e_mix = diag.lambda * diag.e_fast + (1.0 - diag.lambda) * diag.e_slow;
            prop_assert!((diag.e - e_mix).abs() <= 1e-12 * scale.max(1e-300));
            prop_assert!((diag.y - (dn - diag.e)).abs() <= 1e-12 * scale.max(1e-300));

            prop_assert!((0.0..=1.0).contains(&s.lambda));
            let limited = window_hit || config.transfer == TransferScheme::None;
            if limited {
                prop_assert!(s.a.abs() <= config.a_plus);
            }
            if diag.transfer_fired {
                prop_assert_eq!(s.slow.weights(), s.fast.weights());
            }
        }
    }

    /// Frozen-output scalar model: a sign-rule step well inside the bound
    /// never moves the error away from zero.
    #[test]
    fn small_steps_contract_error(
        a in -4.0f64..4.0,
        y1 in -10.0f64..10.0,
        y2 in -10.0f64..10.0,
        d in -10.0f64..10.0,
        fraction in 0.001f64..0.1,
    ) {
        let e_at = |a: f64| {
            let l = lambda_from_a(a);
            d - (l * y1 + (1.0 - l) * y2)
        };
        let e = e_at(a);
        let l = lambda_from_a(a);
        let bound = rho_a_upper_bound(e, y1, y2, l);
        prop_assume!(e != 0.0 && bound.is_finite());
        let rho = fraction * bound;
        let first_order = rho * (y1 - y2).powi(2) * (l * (1.0 - l)).powi(2);
        prop_assume!(first_order >= 1e-12 * e.abs());
        let e_next = e_at(update_a_sign(a, e, y1, y2, l, rho));
        prop_assert!(e_next.abs() < e.abs());
    }
}

#[test]
fn sign_rule_ignores_spike_magnitude() {
    let (x, d) = stream(9, 2_000);
    let spike_at = 700;
    let mut scaled = d.clone();
    scaled[spike_at] += 1e6 * 40.0;
    let mut d = d;
    d[spike_at] += 40.0;

    let run = |d: &[f64]| {
        let mut s = combiner(CombinerConfig::default(), 4);
        let mut line = TapDelayLine::new(4);
        let mut a = Vec::with_capacity(d.len());
        for (xn, dn) in x.iter().zip(d) {
            line.push(*xn);
            s.step(&line, *dn);
            a.push(s.a);
        }
        (a, s)
    };
    let (a1, s1) = run(&d);
    let (a2, s2) = run(&scaled);
    assert_eq!(a1, a2);
    assert_eq!(s1.fast, s2.fast);
    assert_eq!(s1.slow, s2.slow);
}

#[test]
fn squared_rule_reacts_to_spike_magnitude() {
    let (x, d) = stream(9, 2_000);
    let mut scaled = d.clone();
    scaled[700] += 1e6 * 40.0;
    let config = CombinerConfig {
        mixing_rule: MixingRule::SquaredCost,
        ..CombinerConfig::default()
    };
    let run = |d: &[f64]| {
        let mut s = combiner(config, 4);
        let mut line = TapDelayLine::new(4);
        for (xn, dn) in x.iter().zip(d) {
            line.push(*xn);
            s.step(&line, *dn);
        }
        s.a
    };
    assert_ne!(run(&d), run(&scaled));
}

#[test]
fn tracking_transfer_fires_early_and_copies() {
    let (x, d) = stream(3, 3_000);
    let mut s = combiner(CombinerConfig::default(), 4);
    let mut line = TapDelayLine::new(4);
    let mut fired = 0;
    for (xn, dn) in x.iter().zip(&d) {
        line.push(*xn);
        if s.step(&line, *dn).transfer_fired {
            fired += 1;
        }
    }
    assert!(
        fired > 0,
        "the fast filter should dominate during initial convergence"
    );
}

#[test]
fn no_transfer_never_copies() {
    let (x, d) = stream(3, 3_000);
    let config = CombinerConfig {
        transfer: TransferScheme::None,
        ..CombinerConfig::default()
    };
    let mut s = combiner(config, 4);
    let mut line = TapDelayLine::new(4);
    for (xn, dn) in x.iter().zip(&d) {
        line.push(*xn);
        let diag = s.step(&line, *dn);
        assert!(!diag.transfer_fired);
        assert_eq!(s.lambda, lambda_from_a(s.a));
    }
}
