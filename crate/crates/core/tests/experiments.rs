use gossip_lab::experiments::{
    hybrid_scan, linear_fit, majority_pair_experiment, read_csv, run_sweep, run_sweep_with, wilson_interval,
    write_csv, ExperimentSpec, InitialCondition, ProtocolKind, SweepOptions, CSV_HEADER,
};
use gossip_lab::protocols::MajorityParams;
use gossip_lab::schedulers::ModelKind;
use gossip_lab::{Error, NoiseChannel};

fn spec(n_values: Vec<usize>, eps: Vec<f64>, replicas: u64) -> ExperimentSpec {
    ExperimentSpec {
        n_values,
        epsilon_values: eps,
        replicas,
        master_seed: 11,
        initial_condition: InitialCondition::Random,
        ..Default::default()
    }
}

fn csv(spec: &ExperimentSpec) -> String {
    let res = run_sweep_with(spec, SweepOptions { omit_wall_time: true }).unwrap();
    let mut buf = Vec::new();
    write_csv(&res.records, &mut buf).unwrap();
    String::from_utf8(buf).unwrap()
}

#[test]
fn single_replica_is_reproducible() {
    let s = spec(vec![64], vec![0.3], 1);
    assert_eq!(csv(&s), csv(&s));
    let other = ExperimentSpec { master_seed: 12, ..s.clone() };
    let (a, b) = (csv(&s), csv(&other));
    assert_ne!(a.lines().nth(1), b.lines().nth(1));
}

#[test]
fn records_cover_every_cell_in_order() {
    let s = spec(vec![32, 16], vec![0.4, 0.2, 0.3], 5);
    let res = run_sweep(&s).unwrap();
    assert_eq!(res.records.len(), 2 * 3 * 5);
    let keys: Vec<_> = res.records.iter().map(|r| (r.n, r.epsilon, r.replica_index)).collect();
    let mut sorted = keys.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    assert_eq!(keys, sorted);
    let mut ids: Vec<_> = res.records.iter().map(|r| r.run_id).collect();
    ids.sort();
    ids.dedup();
    assert_eq!(ids.len(), 30);
    assert_eq!(res.summary.cells.len(), 6);
    assert!(res.summary.cells.iter().all(|c| c.replicas == 5));
}

#[test]
fn csv_round_trips_with_exact_header() {
    let s = ExperimentSpec {
        infection_source: Some(0),
        ..spec(vec![16], vec![0.25], 3)
    };
    let text = csv(&s);
    assert_eq!(text.lines().next(), Some(CSV_HEADER));
    let back = read_csv(text.as_bytes()).unwrap();
    assert_eq!(back.len(), 3);
    assert!(back.iter().all(|r| r.infected_final.is_some() && r.wall_time_ms == 0.0));
}

#[test]
fn invalid_spec_lists_fields() {
    let s = ExperimentSpec {
        replicas: 0,
        n_values: vec![3],
        ..Default::default()
    };
    match run_sweep(&s) {
        Err(Error::InvalidSpec(errs)) => {
            let fields: Vec<_> = errs.iter().map(|e| e.field).collect();
            assert!(fields.contains(&"replicas") && fields.contains(&"n_values"));
        }
        other => panic!("expected spec errors, got {other:?}"),
    }
}

#[test]
fn rounds_grow_linearly_in_log_n() {
    let ns = vec![1 << 10, 1 << 11, 1 << 12, 1 << 13];
    let s = ExperimentSpec {
        initial_condition: InitialCondition::Bias { b: 0 },
        ..spec(ns.clone(), vec![0.25], 20)
    };
    let res = run_sweep(&s).unwrap();
    let xs: Vec<f64> = ns.iter().map(|&n| (n as f64).log2()).collect();
    let ys: Vec<f64> = res.summary.cells.iter().map(|c| c.mean_rounds).collect();
    let fit = linear_fit(&xs, &ys).unwrap();
    assert!(fit.slope > 0.0 && fit.r_squared >= 0.9, "{fit:?}");
}

#[test]
fn samples_per_node_scale_with_inverse_square_eps() {
    let p = MajorityParams::default();
    let n = 1 << 12;
    let eps = [0.4, 0.2, 0.1];
    for w in eps.windows(2) {
        let ratio = p.samples_per_node(n, w[1]) as f64 / p.samples_per_node(n, w[0]) as f64;
        assert!((ratio / 4.0 - 1.0).abs() <= 0.25, "{ratio}");
    }
}

#[test]
fn split_halves_agree() {
    let s = ExperimentSpec {
        initial_condition: InitialCondition::Bias { b: 2 },
        params: MajorityParams {
            k1: Some(3),
            c4: 0.5,
            ..Default::default()
        },
        ..spec(vec![64], vec![0.2], 400)
    };
    let res = run_sweep(&s).unwrap();
    let (a, b) = res.records.split_at(200);
    let rate = |rs: &[gossip_lab::experiments::RunRecord]| rs.iter().filter(|r| r.final_value == Some(0)).count() as u64;
    let (ra, rb) = (rate(a), rate(b));
    let (lo_a, hi_a) = wilson_interval(ra, 200);
    let (lo_b, hi_b) = wilson_interval(rb, 200);
    assert!(lo_a <= hi_b && lo_b <= hi_a, "{ra} vs {rb}");
}

#[test]
fn hybrid_fixture_is_exact() {
    let report = hybrid_scan(
        ProtocolKind::CopyNodeOne,
        ModelKind::GeneralPull,
        &NoiseChannel::noiseless(),
        &MajorityParams::default(),
        8,
        5,
        0.0,
        1,
    )
    .unwrap();
    assert_eq!(report.z, vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    assert_eq!((report.k_star, report.max_gap, report.source), (1, 1.0, 0));
    assert_eq!(report.infection_estimate, 1.0);
}

#[test]
fn hybrid_gaps_telescope() {
    let report = hybrid_scan(
        ProtocolKind::Majority,
        ModelKind::UniformPull,
        &NoiseChannel::new(0.3).unwrap(),
        &MajorityParams::default(),
        12,
        200,
        0.1,
        2,
    )
    .unwrap();
    let sum: f64 = report.gaps.iter().sum();
    assert!((sum - (report.z[0] - report.z[12])).abs() < 1e-12);
    assert!(report.max_gap >= 1.0 / 24.0);
}

#[test]
fn hybrid_rejects_wrong_model_and_size() {
    let ch = NoiseChannel::noiseless();
    let p = MajorityParams::default();
    assert!(matches!(
        hybrid_scan(ProtocolKind::CopyNodeOne, ModelKind::UniformPull, &ch, &p, 8, 5, 0.0, 1),
        Err(Error::ModelMismatch { .. })
    ));
    assert!(hybrid_scan(ProtocolKind::Majority, ModelKind::UniformPull, &ch, &p, 65, 5, 0.0, 1).is_err());
}

#[test]
fn majority_pair_unanimous_sides() {
    let n = 1 << 10;
    let ch = NoiseChannel::new(0.25).unwrap();
    let r = majority_pair_experiment(n, n, ProtocolKind::Majority, &ch, &MajorityParams::default(), 100, 3).unwrap();
    assert!(r.correct_rate.iter().all(|&c| c >= 0.95), "{:?}", r.correct_rate);
}

#[test]
fn majority_pair_needs_source_infection() {
    let n = 1 << 10;
    let params = MajorityParams {
        k1: Some(3),
        ..Default::default()
    };
    let r = majority_pair_experiment(n, 2, ProtocolKind::Majority, &NoiseChannel::noiseless(), &params, 200, 4).unwrap();
    let median = r.median_infected_when_correct.expect("some replicas correct on both sides");
    assert!(median >= 0.5, "{median}");
}

#[test]
fn majority_pair_parity() {
    let ch = NoiseChannel::noiseless();
    let p = MajorityParams::default();
    assert!(majority_pair_experiment(16, 3, ProtocolKind::Majority, &ch, &p, 2, 1).is_err());
}

#[test]
fn spec_file_round_trip() {
    let s = spec(vec![16, 32], vec![0.1], 4);
    let json = serde_json::to_string_pretty(&s).unwrap();
    assert_eq!(ExperimentSpec::from_json(&json).unwrap(), s);
}
