use neuromap::analytics::{ExperimentRecord, RecordMode, Recorder};
use neuromap::cli::run_search;
use neuromap::optimize::{AlgoParams, Algorithm, DesignProblem, Evaluator, SpaceConfig};
use neuromap::sim::HardwareConfig;
use neuromap::workload::{synth_trace, toy_chain};

#[test]
fn fps_sweep_gives_one_trend_row_per_rate() {
    let model = toy_chain(64, &[48, 8], 0.3);
    let trace = synth_trace(&model, 6, 0, 5);
    let space = SpaceConfig {
        fps: vec![0, 30, 60, 120],
        ..SpaceConfig::default()
    };
    let hw = HardwareConfig {
        npes_per_core: 1,
        t_npe_op: 1000.0,
        ..HardwareConfig::default()
    };
    let problem = DesignProblem::new(model, trace, hw, &space).unwrap();
    let params = AlgoParams {
        pop_size: 16,
        offspring: 16,
        generations: 6,
        weights: vec![1.0, 0.0],
        space,
        ..AlgoParams::defaults(Algorithm::Nsga2)
    };
    let tmp = tempfile::tempdir().unwrap();
    let record = ExperimentRecord::create(
        tmp.path(),
        Algorithm::Nsga2,
        "toy_chain",
        problem.layout.gene_names(),
        &params.to_toml_string(),
        "",
    )
    .unwrap();
    let mut rec = Recorder::new(record, &problem, RecordMode::All);
    run_search(&problem, &params, 3, &Evaluator::new(1).unwrap(), &mut rec);
    assert!(rec.failure().is_none());
    let (_, summary) = rec.finish().unwrap();

    let text = std::fs::read_to_string(summary.join("trend_fps.csv")).unwrap();
    let keys: Vec<u32> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(keys, vec![0, 30, 60, 120]);
}
