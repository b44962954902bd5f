use mfdyn::experiments::{
    init_scale_sweep, registry, run_scenario, scenario_by_name, ExpectedProperty, SweepReport,
    TrainOverrides,
};
use mfdyn::linalg::RankPolicy;

#[test]
fn registry_scenarios_pass_and_write_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    for s in registry() {
        let out = dir.path().join(&s.name);
        let report = run_scenario(&s, Some(&out));
        let failed: Vec<_> = report
            .failed_properties()
            .map(|p| (&p.property, &p.detail))
            .collect();
        assert!(
            report.passed,
            "{}: {failed:?} {:?}",
            s.name, report.diagnostics
        );
        for name in [
            "trajectory.csv",
            "loss.svg",
            "sv.svg",
            "oracle.json",
            "report.json",
        ] {
            assert!(out.join(name).is_file(), "{}: missing {name}", s.name);
        }
        assert!(report.audit.iter().all(|a| !a.violation));
    }
}

#[test]
fn m3_at_moderate_init_reaches_rank_two_with_himt() {
    let mut s = scenario_by_name("M3").unwrap();
    s.train = TrainOverrides {
        init_variance: Some(1e-8),
        ..s.train
    };
    s.oracles.clear();
    s.expected = vec![
        ExpectedProperty::FinalRank { rank: 2 },
        ExpectedProperty::HimtFraction {
            min_fraction: 0.99,
            angle_tol: 1e-2,
        },
    ];
    let report = run_scenario(&s, None);
    assert!(report.passed, "{:?}", report.properties);
}

fn sweep(name: &str, variances: &[f64], positions: Option<&[(usize, usize)]>) -> SweepReport {
    let s = scenario_by_name(name).unwrap();
    let m = s.instance.resolve().unwrap();
    init_scale_sweep(&m, variances, 3, positions, &s.train_config(&m), 0).unwrap()
}

const DECADES: [f64; 5] = [1e-1, 1e-3, 1e-5, 1e-7, 1e-9];

#[test]
fn m4_missing_entry_approaches_six() {
    let r = sweep("M4", &DECADES, None);
    for rep in 0..3 {
        let errs: Vec<f64> = r
            .rows
            .iter()
            .filter(|x| x.rep == rep)
            .map(|x| (x.entries[0] - 6.0).abs())
            .collect();
        assert!(errs.windows(2).all(|w| w[1] < w[0]), "rep {rep}: {errs:?}");
        assert!(errs[errs.len() - 1] < 1.0, "rep {rep}: {errs:?}");
    }
}

#[test]
fn fig4_asymmetry_shrinks_with_scale() {
    let r = sweep("fig4", &DECADES, Some(&[(0, 1), (1, 0)]));
    let asym: Vec<f64> = DECADES
        .iter()
        .map(|&v| {
            r.rows_at(v)
                .map(|x| (x.entries[0] - x.entries[1]).abs())
                .sum::<f64>()
                / 3.0
        })
        .collect();
    assert!(asym.windows(2).all(|w| w[1] < w[0]), "{asym:?}");
    assert!(asym[asym.len() - 1] < 1e-3);
}

#[test]
fn staircase_is_full_rank_at_unit_variance_and_rank_three_in_the_limit() {
    let r = sweep("staircase", &[1.0], None);
    assert!(r
        .rows
        .iter()
        .all(|x| RankPolicy::default().rank_of(&x.sv) == 4));
    let r = sweep("staircase", &[1e-5, 1e-7, 1e-9], None);
    assert_eq!(r.extrapolated_ranks, vec![3, 3, 3]);
}
