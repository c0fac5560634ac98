use qseq::bench::{multi_run, runs_csv, DataConfig, DataSource, RunConfig, SyntheticSource};
use qseq::models::ModelKind;

fn config() -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.data = DataConfig {
        source: DataSource::Synthetic(SyntheticSource::sinusoid(240, 0.05, 3)),
        ..DataConfig::default()
    };
    cfg.train.models = vec![ModelKind::Lstm, ModelKind::Qfwp8];
    cfg.train.seq_lens = vec![4, 6];
    cfg.train.seeds = vec![0, 1];
    cfg.train.max_epochs = 3;
    cfg
}

#[test]
fn worker_count_does_not_change_results() {
    let cfg = config();
    let one = multi_run(&cfg, 1, &|_, _| {}).unwrap();
    let three = multi_run(&cfg, 3, &|_, _| {}).unwrap();
    assert!(one.completed() && three.completed());
    assert_eq!(one.runs.len(), 8);
    assert_eq!(
        runs_csv(&one.runs, false).unwrap(),
        runs_csv(&three.runs, false).unwrap()
    );
    for (a, b) in one.runs.iter().zip(&three.runs) {
        assert_eq!(a.history, b.history);
    }
}

#[test]
fn failing_jobs_are_collected_not_fatal() {
    let mut cfg = config();
    // Windows longer than the test segment cannot be formed.
    cfg.train.seq_lens = vec![4, 200];
    assert!(multi_run(&cfg, 1, &|_, _| {}).is_err());
    cfg.train.seq_lens = vec![4];
    cfg.models.insert(
        ModelKind::Qfwp8,
        qseq::bench::ArchOverride {
            n_qubits: Some(0),
            ..Default::default()
        },
    );
    let sweep = multi_run(&cfg, 1, &|_, _| {}).unwrap();
    assert_eq!(sweep.runs.len(), 2);
    assert_eq!(sweep.failures.len(), 2);
    assert!(sweep.failures.iter().all(|f| f.model == ModelKind::Qfwp8));
}
