use dvrl::envs::{compute_reward, run_episode, EnvConfig, Environment, GoalObservation};
use dvrl::learner::ReplayBuffer;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn filled_buffer(config: &EnvConfig, episodes: usize) -> ReplayBuffer {
    let mut env = Environment::make(config.clone()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let dim = config.action_dim();
    let mut policy = move |_: &GoalObservation| -> Vec<f64> {
        (0..dim).map(|_| rng.gen_range(-1.0..=1.0)).collect()
    };
    let mut buffer = ReplayBuffer::new(config, episodes).unwrap();
    for _ in 0..episodes {
        buffer
            .store_episode(&run_episode(&mut env, &mut policy).unwrap())
            .unwrap();
    }
    buffer
}

#[test]
fn relabel_fraction_and_reward_audit() {
    for config in [
        EnvConfig::reach().with_seed(3),
        EnvConfig::pick().with_seed(4),
    ] {
        let buffer = filled_buffer(&config, 20);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let goal_at = config.kind.goal_offset();
        let (mut relabeled, mut total) = (0usize, 0usize);
        for _ in 0..100 {
            let batch = buffer.sample_her_batch(1000, 4, &mut rng).unwrap();
            for i in 0..batch.len() {
                let t = batch.transition(i);
                let recomputed = compute_reward(
                    &t.next_achieved_goal,
                    &t.desired_goal,
                    config.threshold,
                    config.workspace.range,
                );
                if t.relabeled {
                    assert_eq!(t.reward, recomputed);
                    relabeled += 1;
                }
                assert_eq!(&t.state[goal_at..], &t.desired_goal[..]);
                assert_eq!(&t.next_state[goal_at..], &t.desired_goal[..]);
                total += 1;
            }
        }
        let fraction = relabeled as f64 / total as f64;
        assert_eq!(total, 100_000);
        assert!((fraction - 0.8).abs() <= 0.02, "fraction {fraction}");
    }
}

#[test]
fn k_zero_never_relabels() {
    let config = EnvConfig::reach().with_seed(6).with_horizon(10);
    let buffer = filled_buffer(&config, 5);
    let batch = buffer
        .sample_her_batch(500, 0, &mut ChaCha8Rng::seed_from_u64(1))
        .unwrap();
    assert!(batch.relabeled.iter().all(|r| !r));
}

#[test]
fn relabeled_goals_sometimes_succeed() {
    // Goals drawn from the future of the same trajectory are often reached
    // already, which is what makes sparse rewards learnable.
    let config = EnvConfig::reach().with_seed(7);
    let buffer = filled_buffer(&config, 10);
    let batch = buffer
        .sample_her_batch(2000, 4, &mut ChaCha8Rng::seed_from_u64(2))
        .unwrap();
    let hits = (0..batch.len())
        .filter(|&i| batch.relabeled[i] && batch.rewards[i] == 0.0)
        .count();
    assert!(hits > 0);
}
