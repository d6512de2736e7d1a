use dvrl::envs::{generate_demos, EnvConfig, GoalObservation, GoalSampling, ScriptedController};
use dvrl::learner::{evaluate, read_metrics, resume, train, TrainerConfig, METRICS_FILE};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_trainer() -> TrainerConfig {
    TrainerConfig {
        epochs: 1,
        cycles_per_epoch: 5,
        updates_per_cycle: 10,
        n_envs: 2,
        batch_size: 64,
        demo_batch_size: 32,
        hidden_sizes: vec![32, 32],
        eval_episodes: 10,
        seed: 7,
        ..TrainerConfig::default()
    }
}

#[test]
fn degenerate_fixed_goal_is_solved_within_three_epochs() {
    let mut env = EnvConfig::reach().with_seed(1);
    env.goal_sampling = GoalSampling::AtStart;
    let cfg = TrainerConfig {
        epochs: 3,
        n_envs: 2,
        hidden_sizes: vec![64, 64, 64],
        stop_at_success: Some(1.0),
        seed: 0,
        ..TrainerConfig::default()
    };
    let summary = train(&env, &cfg, None, None, &mut |_| {}).unwrap();
    assert!(summary
        .metrics
        .iter()
        .all(|m| (0.0..=1.0).contains(&m.success_rate)));
    assert_eq!(summary.best_success, 1.0, "{:?}", summary.metrics);
}

#[test]
fn scripted_reach_controller_as_policy() {
    let env = EnvConfig::reach().with_seed(2);
    let mut controller = ScriptedController::new(&env);
    let short = evaluate(&mut controller, &env, 50, None).unwrap();
    assert!(short.success_rate >= 0.9, "{short:?}");
    let long = evaluate(&mut controller, &env, 50, Some(1000)).unwrap();
    assert_eq!(long.success_rate, 1.0);
}

#[test]
fn uniform_random_reach_policy_rarely_succeeds() {
    let env = EnvConfig::reach().with_seed(3);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut policy = move |_: &GoalObservation| -> Vec<f64> {
        (0..3).map(|_| rng.gen_range(-1.0..=1.0)).collect()
    };
    let report = evaluate(&mut policy, &env, 400, None).unwrap();
    assert!(report.success_rate <= 0.05, "{report:?}");
}

#[test]
fn evaluate_rejects_zero_episodes() {
    let env = EnvConfig::reach();
    let mut controller = ScriptedController::new(&env);
    assert!(evaluate(&mut controller, &env, 0, None).is_err());
}

fn masked_metrics(path: &std::path::Path) -> Vec<String> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.rsplit_once(',').unwrap().0.to_string())
        .collect()
}

#[test]
fn identical_seeds_give_identical_runs() {
    let env = EnvConfig::pick().with_seed(4);
    let (demos, _) = generate_demos(&env, 5).unwrap();
    let cfg = TrainerConfig {
        epochs: 3,
        ..small_trainer()
    };
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for dir in &dirs {
        train(&env, &cfg, Some(&demos), Some(dir.path()), &mut |_| {}).unwrap();
    }
    let a = masked_metrics(&dirs[0].path().join(METRICS_FILE));
    let b = masked_metrics(&dirs[1].path().join(METRICS_FILE));
    assert_eq!(a.len(), 4);
    assert_eq!(a, b);
    let ckpt = |d: &tempfile::TempDir| std::fs::read(d.path().join("latest.ckpt")).unwrap();
    assert_eq!(ckpt(&dirs[0]), ckpt(&dirs[1]));

    let other = TrainerConfig { seed: 8, ..cfg };
    let dir = tempfile::tempdir().unwrap();
    train(&env, &other, Some(&demos), Some(dir.path()), &mut |_| {}).unwrap();
    assert_ne!(
        std::fs::read(dir.path().join("latest.ckpt")).unwrap(),
        ckpt(&dirs[0])
    );
}

#[test]
fn run_directory_is_resumable() {
    let env = EnvConfig::reach().with_seed(5);
    let dir = tempfile::tempdir().unwrap();
    let cfg = TrainerConfig {
        epochs: 2,
        ..small_trainer()
    };
    let first = train(&env, &cfg, None, Some(dir.path()), &mut |_| {}).unwrap();
    assert_eq!(first.metrics.len(), 2);
    assert!(dir.path().join("best.ckpt").exists());
    let more = TrainerConfig { epochs: 4, ..cfg };
    let mut seen = Vec::new();
    let resumed = resume(dir.path(), &more, None, &mut |m| seen.push(m.epoch)).unwrap();
    assert_eq!(seen, vec![3, 4]);
    assert_eq!(resumed.metrics.len(), 4);
    let rows = read_metrics(dir.path().join(METRICS_FILE)).unwrap();
    assert_eq!(
        rows.iter().map(|r| r.epoch).collect::<Vec<_>>(),
        vec![1, 2, 3, 4]
    );
    assert!(rows.iter().all(|r| r.bc_loss.is_none()));
    assert!(rows.iter().all(|r| (0.0..=1.0).contains(&r.success_rate)));
}

#[test]
fn bc_loss_recorded_with_demos() {
    let env = EnvConfig::pick().with_seed(6);
    let (demos, _) = generate_demos(&env, 5).unwrap();
    let cfg = TrainerConfig {
        epochs: 2,
        ..small_trainer()
    };
    let summary = train(&env, &cfg, Some(&demos), None, &mut |_| {}).unwrap();
    let bc: Vec<f64> = summary.metrics.iter().map(|m| m.bc_loss.unwrap()).collect();
    assert!(bc.iter().all(|v| v.is_finite() && *v >= 0.0));
    assert!(bc[1] < bc[0], "{bc:?}");
}
