use gaptae::envs::random_mdp;
use gaptae::{stream_rng, DeterministicPolicy, TabularMdp, VisitCounts};
use proptest::prelude::*;

#[test]
fn fair_row_frequency() {
    let mdp = TabularMdp::new(2, 1, 1, 0, vec![0.5, 0.5, 0.5, 0.5]).unwrap();
    let mut rng = stream_rng(1, 0);
    let zeros = (0..10_000).filter(|_| mdp.sample_next(0, 0, &mut rng) == 0).count();
    let freq = zeros as f64 / 10_000.0;
    assert!((0.47..=0.53).contains(&freq), "{freq}");
}

#[test]
fn frequencies_match_rows() {
    let (mdp, _) = random_mdp(5, 2, 1, &mut stream_rng(2, 0)).unwrap();
    let n = 100_000;
    let mut rng = stream_rng(2, 1);
    for a in 0..2 {
        let mut hits = [0usize; 5];
        for _ in 0..n {
            hits[mdp.sample_next(3, a, &mut rng)] += 1;
        }
        for (y, &c) in hits.iter().enumerate() {
            let p = mdp.prob(3, a, y);
            let band = 6.0 * (p * (1.0 - p) / n as f64).sqrt();
            assert!((c as f64 / n as f64 - p).abs() <= band, "P[3][{a}][{y}]");
        }
    }
}

#[test]
fn chain_rollout_follows_policy() {
    // 0 -> 1 -> 2 -> 2 under every action.
    let p = vec![0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0];
    let mdp = TabularMdp::new(3, 1, 2, 0, p).unwrap();
    let pi = DeterministicPolicy::constant(2, 3, 0);
    let traj = mdp.rollout(&pi, &mut stream_rng(0, 0));
    assert_eq!(traj.steps, vec![(0, 0), (1, 0)]);
    assert_eq!(traj.terminal_state, 2);
}

#[test]
fn empirical_kernel_converges_on_visited_rows() {
    let (mdp, _) = random_mdp(3, 2, 3, &mut stream_rng(6, 0)).unwrap();
    let pi = DeterministicPolicy::random(3, 3, 2, &mut stream_rng(6, 1));
    let mut counts = VisitCounts::new(3, 2);
    for k in 0..100_000 {
        counts.absorb(&mdp.rollout(&pi, &mut stream_rng(7, k)));
    }
    let p_hat = counts.empirical_transition();
    for x in 0..3 {
        for a in 0..2 {
            if counts.n_sa(x, a) == 0 {
                continue;
            }
            for y in 0..3 {
                assert!((p_hat.prob(x, a, y) - mdp.prob(x, a, y)).abs() <= 0.02);
            }
        }
    }
}

proptest! {
    #[test]
    fn rollouts_have_full_length_and_start_at_x1(seed in any::<u64>(), h in 1usize..6) {
        let (mdp, _) = random_mdp(4, 3, h, &mut stream_rng(seed, 0)).unwrap();
        let pi = DeterministicPolicy::random(h, 4, 3, &mut stream_rng(seed, 1));
        let a = mdp.rollout(&pi, &mut stream_rng(seed, 2));
        let b = mdp.rollout(&pi, &mut stream_rng(seed, 2));
        prop_assert_eq!(a.len(), h);
        prop_assert_eq!(a.steps[0].0, mdp.initial_state());
        prop_assert_eq!(a, b);
    }

    #[test]
    fn counts_ignore_trajectory_order(seed in any::<u64>(), k in 1usize..20) {
        let (mdp, _) = random_mdp(4, 2, 3, &mut stream_rng(seed, 0)).unwrap();
        let pi = DeterministicPolicy::random(3, 4, 2, &mut stream_rng(seed, 1));
        let trajs: Vec<_> = (0..k).map(|i| mdp.rollout(&pi, &mut stream_rng(seed, 2 + i as u64))).collect();
        let mut forward = VisitCounts::new(4, 2);
        let mut backward = VisitCounts::new(4, 2);
        trajs.iter().for_each(|t| forward.absorb(t));
        trajs.iter().rev().for_each(|t| backward.absorb(t));
        prop_assert_eq!(&forward, &backward);
        prop_assert_eq!(forward.total(), (k * 3) as u64);
    }

    #[test]
    fn empirical_rows_sum_to_one(seed in any::<u64>(), k in 0usize..30) {
        let (mdp, _) = random_mdp(4, 2, 3, &mut stream_rng(seed, 0)).unwrap();
        let pi = DeterministicPolicy::random(3, 4, 2, &mut stream_rng(seed, 1));
        let mut counts = VisitCounts::new(4, 2);
        for i in 0..k {
            counts.absorb(&mdp.rollout(&pi, &mut stream_rng(seed, 2 + i as u64)));
        }
        let p_hat = counts.empirical_transition();
        for x in 0..4 {
            for a in 0..2 {
                let sum: f64 = (0..4).map(|y| p_hat.prob(x, a, y)).sum();
                prop_assert!((sum - 1.0).abs() <= 1e-12);
            }
        }
    }
}
