mod common;

use std::sync::Arc;

use common::*;
use madrop_core::chain::{packets_scheduled, probs_from_thresholds, TransitionKind};
use madrop_core::rng::substream;
use madrop_core::sim::step_user;
use madrop_core::*;
use proptest::prelude::*;
use rand::Rng;

const F: FadingModel = FadingModel::RayleighUnitMean;

fn allowed_rows(s: &Structure) -> Vec<Vec<usize>> {
    (0..s.n_states()).map(|p| (0..s.n_states()).filter(|&q| s.allowed(p, q)).collect()).collect()
}

#[test]
fn best_mask_for_one_drop_two_buffers() {
    let s = build_mask(&spec(SchemeKind::Best, 2, 1, 0.1));
    assert_eq!(allowed_rows(&s), vec![vec![0, 1], vec![0, 1, 2], vec![0, 1, 2, 3], vec![0, 1, 2]]);
}

#[test]
fn sse_mask_skips_state_two() {
    let s = build_mask(&spec(SchemeKind::Sse, 3, 2, 0.1));
    for p in 3..=5 {
        assert_eq!(s.targets(p), &[0, 1, 3]);
        assert!(!s.allowed(p, 2));
        assert_eq!(s.kind(p, 2), TransitionKind::Schedule);
    }
}

#[test]
fn ooa_mask_keeps_none_one_or_all() {
    let s = build_mask(&spec(SchemeKind::Ooa, 3, 1, 0.1));
    let row: Vec<usize> = (0..5).filter(|&q| s.allowed(2, q)).collect();
    assert_eq!(row, vec![0, 2, 3]);
}

#[test]
fn sse_targets_append_mu() {
    assert_eq!(SchemeKind::Sse.targets(4), vec![0, 1, 3, 4]);
    assert_eq!(SchemeKind::Sse.targets(3), vec![0, 1, 3]);
}

#[test]
fn scheduled_packet_counts() {
    assert_eq!(packets_scheduled(3, 0, 3).unwrap(), 4);
    assert_eq!(packets_scheduled(1, 1, 3).unwrap(), 1);
    assert_eq!(packets_scheduled(5, 3, 3).unwrap(), 1);
    assert!(packets_scheduled(2, 3, 3).is_err());
}

#[test]
fn stationary_small_examples() {
    let symmetric = spec(SchemeKind::Best, 1, 0, 0.1);
    let q = matrix(&symmetric, &[vec![0.5, 0.5], vec![0.5, 0.5]]);
    let pi = stationary(&q).unwrap();
    assert!((pi.get(0) - 0.5).abs() < 1e-12 && (pi.get(1) - 0.5).abs() < 1e-12);

    let s = spec(SchemeKind::Best, 0, 1, 0.1);

    let absorbing = matrix(&s, &[vec![1.0, 0.0], vec![1.0, 0.0]]);
    assert_eq!(stationary(&absorbing).unwrap().pi, vec![1.0, 0.0]);

    let q = matrix(&s, &[vec![0.9, 0.1], vec![1.0, 0.0]]);
    let pi = stationary(&q).unwrap();
    assert!((pi.get(0) - 10.0 / 11.0).abs() < 1e-12);
    assert!((drop_rate(&q, &pi) - 1.0 / 11.0).abs() < 1e-12);
}

#[test]
fn reference_matrix_stationary_law_and_rates() {
    let s = spec(SchemeKind::Best, 1, 2, 0.02);
    let q = matrix(&s, &q_bst_rows());
    let pi = stationary(&q).unwrap();
    let oracle = power_stationary(&q);
    for (a, b) in pi.pi.iter().zip(&oracle) {
        assert!((a - b).abs() < 1e-10);
    }
    for (got, want) in pi.pi.iter().zip([0.709, 0.272, 0.019, 0.0011]) {
        assert!((got - want).abs() < 0.01, "{got} vs {want}");
    }
    let theta = drop_rate(&q, &pi);
    assert!((theta - 0.02).abs() < 0.002, "drop rate {theta}");
    let lambda = buffer_feed_rate(&q, &pi).unwrap();
    assert!((lambda - 0.22).abs() < 0.005, "feed rate {lambda}");
    assert!((0.02 / lambda - 0.09).abs() < 0.005);
}

#[test]
fn feed_rate_edge_cases() {
    let s = spec(SchemeKind::Best, 1, 1, 0.1);
    let never_fed = matrix(&s, &[vec![1.0, 0.0, 0.0], vec![0.5, 0.3, 0.2], vec![1.0, 0.0, 0.0]]);
    assert_eq!(buffer_feed_rate(&never_fed, &stationary(&never_fed).unwrap()).unwrap(), 0.0);
    let always_fed = matrix(&s, &[vec![0.0, 1.0, 0.0], vec![0.5, 0.3, 0.2], vec![1.0, 0.0, 0.0]]);
    let pi = stationary(&always_fed).unwrap();
    assert!((buffer_feed_rate(&always_fed, &pi).unwrap() - pi.get(0)).abs() < 1e-15);
    let zero = spec(SchemeKind::Best, 0, 1, 0.1);
    let q = matrix(&zero, &[vec![0.5, 0.5], vec![1.0, 0.0]]);
    assert!(buffer_feed_rate(&q, &stationary(&q).unwrap()).is_err());
}

#[test]
fn no_forward_drops_means_no_drop_rate() {
    let s = spec(SchemeKind::Best, 1, 2, 0.1);
    let q = matrix(&s, &[vec![0.4, 0.6, 0.0, 0.0], vec![0.3, 0.7, 0.0, 0.0], vec![0.5, 0.5, 0.0, 0.0], vec![0.5, 0.5, 0.0, 0.0]]);
    assert_eq!(drop_rate(&q, &stationary(&q).unwrap()), 0.0);
}

#[test]
fn threshold_examples() {
    let s = spec(SchemeKind::Best, 0, 1, 0.1);
    let q = matrix(&s, &[vec![0.5, 0.5], vec![1.0, 0.0]]);
    let t = thresholds_from_probs(&q, &F).unwrap();
    assert!((t.state(0)[0] - 0.693_147_180_559_945_3).abs() < 1e-12);
    assert_eq!(t.state(1)[0], 0.0);

    let q = matrix(&s, &[vec![0.0, 1.0], vec![1.0, 0.0]]);
    assert_eq!(thresholds_from_probs(&q, &F).unwrap().state(0)[0], f64::INFINITY);
}

#[test]
fn forward_mass_in_termination_row_is_rejected() {
    let s = spec(SchemeKind::Best, 0, 1, 0.1);
    let structure = Arc::new(build_mask(&s));
    assert!(TransitionMatrix::from_rows(structure, &[vec![0.5, 0.5], vec![0.5, 0.5]]).is_err());
}

fn draw_state<R: Rng>(row: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (t, &v) in row.iter().enumerate() {
        acc += v;
        if u < acc {
            return t;
        }
    }
    row.iter().rposition(|&v| v > 0.0).unwrap()
}

/// Simulates the chain directly from its rows and by threshold decisions on
/// fading draws; both must reproduce the stationary law, the drop rate and
/// the mean packet count `1 / c` within three batch-means standard errors.
fn chain_monte_carlo(spec: &SchemeSpec, q: &TransitionMatrix, seed: u64) {
    const STEPS: usize = 1_000_000;
    let pi = stationary(q).unwrap();
    let theta = drop_rate(q, &pi);
    let thresholds = thresholds_from_probs(q, &F).unwrap();
    let vu = VuDistribution::new(spec.scheme, &thresholds, &pi, spec.buffer, F).unwrap();
    let n = q.n_states();
    let m = q.termination();

    let mut rng = substream(seed, "chain");
    let mut state = 0;
    let mut visits = vec![Vec::with_capacity(STEPS); n];
    let mut drops = Vec::with_capacity(STEPS);
    for _ in 0..STEPS {
        for (s, v) in visits.iter_mut().enumerate() {
            v.push(f64::from(u8::from(s == state)));
        }
        let next = draw_state(q.row(state), &mut rng);
        drops.push(f64::from(u8::from(state >= spec.buffer && state < m && next == state + 1)));
        state = next;
    }
    for (s, v) in visits.iter().enumerate() {
        let (mean, se) = batch_mean_se(v, 100);
        assert!((mean - pi.get(s)).abs() <= 3.0 * se + 1e-9, "state {s}: {mean} vs {} (se {se})", pi.get(s));
    }
    let (mean, se) = batch_mean_se(&drops, 100);
    assert!((mean - theta).abs() <= 3.0 * se + 1e-9, "drops {mean} vs {theta}");

    let mut state = 0;
    let mut packets = Vec::with_capacity(STEPS);
    for _ in 0..STEPS {
        let step = step_user(state, F.sample(&mut rng), &thresholds, spec);
        packets.push(step.packets as f64);
        state = step.next;
    }
    let (mean, se) = batch_mean_se(&packets, 100);
    assert!((mean - 1.0 / vu.norm_const()).abs() <= 3.0 * se, "packets {mean} vs {}", 1.0 / vu.norm_const());
    assert!((vu.mean_packets_per_slot() - (1.0 - theta)).abs() < 1e-12);
}

#[test]
fn chain_monte_carlo_matches_reference_matrix() {
    let s = spec(SchemeKind::Best, 1, 2, 0.02);
    chain_monte_carlo(&s, &matrix(&s, &q_bst_rows()), 11);
}

#[test]
fn chain_monte_carlo_matches_random_matrices() {
    let mut rng = substream(5, "matrices");
    for (k, scheme) in SchemeKind::ALL.into_iter().enumerate() {
        let s = spec(scheme, 3, 2, 0.1);
        let w: Vec<f64> = (0..40).map(|_| rng.gen_range(0.05..1.0)).collect();
        chain_monte_carlo(&s, &matrix_from_weights(&s, &w), 20 + k as u64);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn stationary_law_is_balanced((_, q) in arb_matrix()) {
        let pi = stationary(&q).unwrap();
        prop_assert!((pi.pi.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for t in 0..q.n_states() {
            let flow: f64 = (0..q.n_states()).map(|s| pi.get(s) * q.get(s, t)).sum();
            prop_assert!((flow - pi.get(t)).abs() < 1e-10);
        }
        let oracle = power_stationary(&q);
        for (a, b) in pi.pi.iter().zip(&oracle) {
            prop_assert!((a - b).abs() < 1e-6, "{:?} vs {:?}", pi.pi, oracle);
        }
        let theta = drop_rate(&q, &pi);
        prop_assert!((0.0..=1.0).contains(&theta));
    }

    #[test]
    fn thresholds_round_trip((s, q) in arb_matrix()) {
        let t = thresholds_from_probs(&q, &F).unwrap();
        t.validate().unwrap();
        let back = probs_from_thresholds(&t, q.structure().clone(), &F).unwrap();
        for p in 0..q.n_states() {
            for dst in 0..q.n_states() {
                prop_assert!((back.get(p, dst) - q.get(p, dst)).abs() < 1e-12, "({p},{dst}) in {s:?}");
            }
        }
    }

    #[test]
    fn thresholds_strictly_decrease_across_positive_bands((_, q) in arb_matrix()) {
        let t = thresholds_from_probs(&q, &F).unwrap();
        let st = q.structure();
        for p in 0..q.n_states() {
            let k = t.state(p);
            for &dst in st.targets(p) {
                if dst > 0 && q.get(p, dst) > 1e-9 && k[dst - 1].is_finite() {
                    prop_assert!(k[dst] < k[dst - 1]);
                }
            }
        }
        prop_assert_eq!(t.state(q.termination()).last().copied(), Some(0.0));
    }

    #[test]
    fn entries_respect_structure((_, q) in arb_matrix()) {
        q.validate(1e-12).unwrap();
        let st = q.structure();
        let m = q.termination();
        for p in 0..=m {
            for dst in 0..=m {
                let kind = st.kind(p, dst);
                let expect = if dst == p + 1 && p < m {
                    if p < st.buffer { TransitionKind::Buffer } else { TransitionKind::Drop }
                } else if dst <= st.mu(p) {
                    TransitionKind::Schedule
                } else {
                    TransitionKind::Forbidden
                };
                prop_assert_eq!(kind, expect);
                prop_assert_eq!(st.allowed(p, dst), kind != TransitionKind::Forbidden && (kind != TransitionKind::Schedule || st.targets(p).contains(&dst)));
                if !st.allowed(p, dst) {
                    prop_assert_eq!(q.get(p, dst), 0.0);
                }
            }
        }
    }
}
