use droneracer::harness::{train, Checkpoint, RunConfig, TrainOptions, FINAL_CHECKPOINT, METRICS_FILE};

fn small() -> RunConfig {
    let mut cfg = RunConfig::mini();
    cfg.train.rollout_steps = 256;
    cfg.train.minibatch_size = 64;
    cfg.train.epochs_per_update = 2;
    cfg.train.hidden = vec![16, 16, 16];
    cfg.train.total_steps = 2048;
    cfg.harness.n_envs = 2;
    cfg.harness.checkpoint_interval = 3;
    cfg
}

#[test]
fn interrupted_run_resumes_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let whole = train(small(), 21, &dir.path().join("whole"), &TrainOptions::default()).unwrap();
    assert_eq!(whole.global_step, 2048);

    let part = dir.path().join("part");
    let first = train(small(), 21, &part, &TrainOptions { stop_after: Some(768), ..TrainOptions::default() }).unwrap();
    assert_eq!(first.global_step, 768);
    let opts = TrainOptions { resume: Some(first.final_checkpoint.clone()), ..TrainOptions::default() };
    let second = train(small(), 21, &part, &opts).unwrap();
    assert_eq!(second.global_step, 2048);

    let a = std::fs::read(dir.path().join("whole").join(METRICS_FILE)).unwrap();
    let b = std::fs::read(part.join(METRICS_FILE)).unwrap();
    assert_eq!(a, b);

    let ca = Checkpoint::load(&dir.path().join("whole").join(FINAL_CHECKPOINT)).unwrap();
    let cb = Checkpoint::load(&part.join(FINAL_CHECKPOINT)).unwrap();
    assert_eq!(ca.to_bytes(), cb.to_bytes());
}

#[test]
fn resume_from_periodic_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    train(small(), 5, &run, &TrainOptions::default()).unwrap();
    let periodic = run.join("update-000003.ckpt");
    let c = Checkpoint::load(&periodic).unwrap();
    assert_eq!(c.updates, 3);
    assert_eq!(c.global_step, 768);

    let again = dir.path().join("again");
    std::fs::create_dir_all(&again).unwrap();
    // replay the log up to the periodic checkpoint, then continue from it
    let log = std::fs::read_to_string(run.join(METRICS_FILE)).unwrap();
    let cut = log.find("\"update\":3,").unwrap();
    let upto = &log[..cut + log[cut..].find('\n').unwrap() + 1];
    std::fs::write(again.join(METRICS_FILE), upto).unwrap();
    train(small(), 5, &again, &TrainOptions { resume: Some(periodic), ..TrainOptions::default() }).unwrap();
    assert_eq!(std::fs::read_to_string(again.join(METRICS_FILE)).unwrap(), log);
}

#[test]
fn resume_rejects_corrupt_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.ckpt");
    std::fs::write(&bad, b"DRNRCKPT garbage").unwrap();
    let err = train(small(), 1, &dir.path().join("out"), &TrainOptions { resume: Some(bad), ..TrainOptions::default() });
    assert!(err.is_err());
}
