mod common;

use common::*;
use madrop_core::rng::substream;
use madrop_core::sim::{run_replications, run_sim, shuffled, sic_energy, step_user, SimConfig, Step};
use madrop_core::*;
use proptest::prelude::*;

const F: FadingModel = FadingModel::RayleighUnitMean;

fn reference() -> (SchemeSpec, TransitionMatrix) {
    let s = spec(SchemeKind::Best, 1, 2, 0.02);
    (s, matrix(&s, &q_bst_rows()))
}

fn config(s: SchemeSpec, q: &TransitionMatrix, users: usize, slots: usize, seed: u64) -> SimConfig {
    SimConfig::new(users, slots, seed, s, thresholds_from_probs(q, &F).unwrap(), ChannelModels::default())
}

#[test]
fn termination_state_always_sends() {
    let (s, q) = reference();
    let t = thresholds_from_probs(&q, &F).unwrap();
    let m = s.termination();
    for f in [1e-12, 0.01, 0.5, 3.0] {
        assert!(step_user(m, f, &t, &s).packets >= 1);
    }
}

#[test]
fn weak_fading_below_buffer_is_buffered() {
    let (s, q) = reference();
    let t = thresholds_from_probs(&q, &F).unwrap();
    let low = t.state(0)[0];
    assert_eq!(step_user(0, 0.5 * low, &t, &s), Step { next: 1, packets: 0 });
}

#[test]
fn sic_examples() {
    assert!((sic_energy(&[1.0], 0.5).unwrap() - 0.414_213_562_373_095).abs() < 1e-12);
    assert_eq!(sic_energy(&[], 0.5).unwrap(), 0.0);
    assert!((sic_energy(&[1.0, 2.0], 0.5).unwrap() - 0.707_106_781_186_547_5).abs() < 1e-12);
    assert!(sic_energy(&[2.0, 1.0], 0.5).is_err());
    assert!(sic_energy(&[-1.0], 0.5).is_err());
}

#[test]
fn occupancy_matches_stationary_law() {
    let (s, q) = reference();
    let pi = stationary(&q).unwrap();
    let rep = run_sim(&config(s, &q, 100, 10_000, 3)).unwrap();
    assert!(rep.occupancy_tv(&pi.pi) < 0.01);
}

#[test]
fn single_user_runs_at_full_rate() {
    let (s, q) = reference();
    let rep = run_sim(&SimConfig { warmup: 0, ..config(s, &q, 1, 5000, 1) }).unwrap();
    assert!(rep.max_successive_drops <= 2);
    assert!(rep.empirical_eb_n0_linear > 0.0);
    assert_eq!(rep.empirical_theta_r, rep.packets_dropped as f64 / 5000.0);
}

#[test]
fn replications_use_consecutive_seeds() {
    let (s, q) = reference();
    let cfg = config(s, &q, 10, 500, 40);
    let reps = run_replications(&cfg, 3).unwrap();
    for (r, rep) in reps.iter().enumerate() {
        assert_eq!(rep, &run_sim(&SimConfig { seed: 40 + r as u64, ..cfg.clone() }).unwrap());
    }
}

#[test]
fn invalid_configs_are_rejected() {
    let (s, q) = reference();
    assert!(run_sim(&config(s, &q, 0, 10, 0)).is_err());
    let mut cfg = config(s, &q, 5, 10, 0);
    cfg.thresholds.kappa.pop();
    assert!(run_sim(&cfg).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn packets_are_conserved_and_drop_runs_bounded((s, q) in arb_matrix(), users in 1usize..20, slots in 1usize..400, warmup in 0usize..50, seed in 0u64..1000) {
        let cfg = SimConfig { warmup, ..config(s, &q, users, slots, seed) };
        let rep = run_sim(&cfg).unwrap();
        let l = rep.ledger;
        prop_assert_eq!(l.arrivals, (users * (slots + warmup)) as u64);
        prop_assert_eq!(l.arrivals, l.sent + l.dropped + l.buffered);
        prop_assert!(rep.max_successive_drops <= s.continuity);
        prop_assert_eq!(rep.empirical_theta_r, rep.packets_dropped as f64 / (users * slots) as f64);
        prop_assert_eq!(rep.state_occupancy.iter().sum::<u64>(), (users * slots) as u64);
    }

    #[test]
    fn sic_energy_ignores_tie_order(levels in prop::collection::vec(1u32..6, 1..40), rate in 0.01f64..1.0, seed in 0u64..100) {
        let gains: Vec<f64> = levels.iter().map(|&l| 0.25 * f64::from(l)).collect();
        let mut rng = substream(seed, "ties");
        let mut a = shuffled(&gains, &mut rng);
        let mut b = shuffled(&gains, &mut rng);
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        prop_assert_eq!(sic_energy(&a, rate).unwrap(), sic_energy(&b, rate).unwrap());
        // a tie group of size g entering at level k costs (2^((k+g)R) - 2^(kR)) / h
        let mut grouped = 0.0;
        let mut k = 0;
        let mut i = 0;
        while i < a.len() {
            let g = a[i..].iter().take_while(|&&x| x == a[i]).count();
            grouped += (((k + g) as f64 * rate).exp2() - (k as f64 * rate).exp2()) / a[i];
            k += g;
            i += g;
        }
        let e = sic_energy(&a, rate).unwrap();
        prop_assert!((e - grouped).abs() <= 1e-12 * grouped);
    }
}

#[test]
fn drop_runs_bounded_on_every_seed() {
    let (s, q) = reference();
    for seed in 0..20 {
        let rep = run_sim(&config(s, &q, 50, 2000, seed)).unwrap();
        assert!(rep.max_successive_drops <= 2);
    }
}
