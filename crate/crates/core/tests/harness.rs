mod common;

use std::fs;
use std::path::{Path, PathBuf};

use common::*;
use irscr::channels::{calibrate, w_to_dbm, CorrelationSpec, UncertaintyModel};
use irscr::harness::*;
use irscr::linalg::CMat;
use irscr::problem::interference;
use irscr::Error;

fn tiny(schemes: &[Scheme], realizations: usize) -> ExperimentConfig {
    ExperimentConfig {
        schemes: schemes.to_vec(),
        realizations,
        seed: 5,
        mc_samples: 1000,
        wc_samples: 1000,
        ..ExperimentConfig::default()
    }
}

fn read(path: &Path) -> String {
    fs::read_to_string(path).unwrap()
}

fn is_config_err<T>(r: Result<T, Error>) -> bool {
    matches!(r, Err(Error::Config(_)))
}

#[test]
fn config_rejects_unknown_keys() {
    assert!(is_config_err(ExperimentConfig::from_json(r#"{"realisations": 3}"#)));
    assert!(is_config_err(ExperimentConfig::from_json(r#"{"base": {"mt": 4}}"#)));
    assert!(is_config_err(ExperimentConfig::from_json(r#"{"geometry": {"pr_location": [0, 0]}}"#)));
    assert!(is_config_err(ExperimentConfig::from_json(r#"{"options": {"zeta2": 1e-3}}"#)));
    assert!(is_config_err(ExperimentConfig::from_json(r#"{"sweep": [{"axis": "q", "values": [1]}]}"#)));
    assert!(ExperimentConfig::from_json("{}").is_ok());
}

#[test]
fn config_rejects_bad_values() {
    for text in [
        r#"{"realizations": 0}"#,
        r#"{"schemes": []}"#,
        r#"{"schemes": ["STA", "SCD", "STA"]}"#,
        r#"{"workers": 0}"#,
        r#"{"mc_samples": 10}"#,
        r#"{"base": {"beta": 0.0}}"#,
        r#"{"base": {"delta_g": 1.0}}"#,
        r#"{"sweep": [{"axis": "n", "values": [4.5]}]}"#,
        r#"{"sweep": [{"axis": "n", "values": []}]}"#,
        r#"{"sweep": [{"axis": "rate", "values": [1]}, {"axis": "rate", "values": [2]}]}"#,
        r#"{"sweep": [{"axis": "beta", "values": [0.1, 1.0]}]}"#,
        r#"not json"#,
    ] {
        assert!(is_config_err(ExperimentConfig::from_json(text)), "{text}");
    }
}

#[test]
fn shipped_config_loads() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/baseline.json");
    let cfg = ExperimentConfig::load(&path).unwrap();
    assert_eq!(cfg.schemes.len(), 5);
    assert!(is_config_err(ExperimentConfig::load(Path::new("/nonexistent/config.json"))));
}

#[test]
fn grid_varies_first_axis_slowest() {
    let cfg = ExperimentConfig::from_json(
        r#"{"sweep": [{"axis": "delta_g", "values": [0.02, 0.1]}, {"axis": "n", "values": [5, 10, 15]}]}"#,
    )
    .unwrap();
    let grid = cfg.grid();
    let pairs: Vec<(f64, f64)> = grid
        .iter()
        .map(|p| (p.get(Axis::DeltaG).unwrap(), p.get(Axis::N).unwrap()))
        .collect();
    assert_eq!(
        pairs,
        vec![(0.02, 5.0), (0.02, 10.0), (0.02, 15.0), (0.1, 5.0), (0.1, 10.0), (0.1, 15.0)]
    );
    assert_eq!(cfg.axes(), vec![Axis::DeltaG, Axis::N]);
    let setup = cfg.setup(&grid[4]);
    assert_eq!(setup.base.delta_g, 0.1);
    assert_eq!(setup.base.n, 10);
    assert_eq!(setup.base.m_t, 4);
    // no sweep means one point at the base
    assert_eq!(ExperimentConfig::default().grid().len(), 1);
}

#[test]
fn setup_applies_geometry_axes() {
    let cfg = ExperimentConfig::from_json(r#"{"sweep": [{"axis": "pr_y", "values": [60]}, {"axis": "irs_x", "values": [280]}]}"#)
        .unwrap();
    let s = cfg.setup(&cfg.grid()[0]);
    assert_eq!(s.geometry.pr, [0.0, 60.0]);
    assert_eq!(s.geometry.irs, [280.0, 30.0]);
}

#[test]
fn outage_sampling_extremes() {
    let fx = fixture(&reference(), 0);
    let s = &fx.scenario;
    let UncertaintyModel::Statistical(st) = &fx.stat else { unreachable!() };
    let w = random_w(1, s.m_t, s.k);
    let phi = unit_phases(2, s.n);
    let never = monte_carlo_outage(&w, &phi, &s.g_d[0], &s.g_r[0], &st[0].cov, f64::MAX, 2000, &mut rng(0));
    let always = monte_carlo_outage(&w, &phi, &s.g_d[0], &s.g_r[0], &st[0].cov, 0.0, 2000, &mut rng(0));
    assert_eq!((never, always), (0.0, 1.0));
    let zero = monte_carlo_outage(&CMat::zeros(s.m_t, s.k), &phi, &s.g_d[0], &s.g_r[0], &st[0].cov, 0.0, 2000, &mut rng(0));
    assert_eq!(zero, 0.0);
    assert!((outage_acceptance(0.05, 10_000) - (0.05 + 2.0 * (0.0475f64 / 1e4).sqrt())).abs() < 1e-15);
}

#[test]
fn worst_case_sampling_without_errors_is_nominal() {
    let fx = fixture(&reference(), 1);
    let s = &fx.scenario;
    let (_, bounded) = calibrate(s, &CorrelationSpec { c_eta: 0.9, delta_g: 0.0 }, 0.05).unwrap();
    let UncertaintyModel::Bounded(radii) = &bounded else { unreachable!() };
    let w = random_w(3, s.m_t, s.k);
    let phi = unit_phases(4, s.n);
    let nominal = interference(&s.g_d[0], &s.g_r[0], &w, &phi);
    let (worst, ok) = worst_case_sample_it(&w, &phi, &s.g_d[0], &s.g_r[0], &radii[0], nominal * 1.001, 1000, &mut rng(0));
    assert!(rel_err(worst, nominal) < 1e-12);
    assert!(ok);
    let (_, ok) = worst_case_sample_it(&w, &phi, &s.g_d[0], &s.g_r[0], &radii[0], nominal * 0.999, 1000, &mut rng(0));
    assert!(!ok);
    // with errors the sampled worst case can only grow over more draws
    let UncertaintyModel::Bounded(radii) = &fx.bounded else { unreachable!() };
    let (few, _) = worst_case_sample_it(&w, &phi, &s.g_d[0], &s.g_r[0], &radii[0], f64::MAX, 1000, &mut rng(7));
    let (many, _) = worst_case_sample_it(&w, &phi, &s.g_d[0], &s.g_r[0], &radii[0], f64::MAX, 5000, &mut rng(7));
    assert!(many >= few);
}

#[test]
fn single_realization_single_scheme() {
    let res = run_experiment(&tiny(&[Scheme::Sta], 1), RunMode::Full).unwrap();
    assert_eq!(res.records.len(), 1);
    let r = &res.records[0];
    assert_eq!((r.point, r.realization, r.scheme), (0, 0, Scheme::Sta));
    assert!(r.runtime_ms.is_none());
    assert_eq!(res.summary.points.len(), 1);
    assert!(res.summary.trends.is_empty());
}

#[test]
fn records_are_consistent() {
    let cfg = tiny(&Scheme::ALL, 3);
    let res = run_experiment(&cfg, RunMode::Full).unwrap();
    assert_eq!(res.records.len(), 15);
    // merged in realization order, schemes in config order
    for (i, r) in res.records.iter().enumerate() {
        assert_eq!(r.realization, i / 5);
        assert_eq!(r.scheme, cfg.schemes[i % 5]);
    }
    for r in &res.records {
        if r.feasible {
            let p = r.power_w.unwrap();
            assert!((r.power_dbm.unwrap() - (10.0 * p.log10() + 30.0)).abs() < 1e-9);
            assert_eq!(r.certified(), Some(true), "{r:?}");
            assert!(r.mc_outage.is_some());
            assert_eq!(r.wc_margin.is_some(), r.scheme == Scheme::Scd);
        } else {
            assert!(r.power_w.is_none() && r.solution.is_none());
        }
    }
    for s in &res.summary.points[0].schemes {
        let feasible = res.records.iter().filter(|r| r.scheme == s.scheme && r.feasible).count();
        assert_eq!(s.feasible, feasible);
        assert_eq!(s.realizations, 3);
        assert_eq!(s.feasibility_rate, feasible as f64 / 3.0);
        if let Some(p) = s.mean_power_w {
            assert!((s.mean_power_dbm.unwrap() - w_to_dbm(p)).abs() < 1e-12);
        }
    }
    assert_eq!(res.summary.certificate_failures, 0);
}

#[test]
fn timing_is_recorded_only_on_request() {
    let mut cfg = tiny(&[Scheme::PrephaseSta], 1);
    cfg.timing = true;
    let res = run_experiment(&cfg, RunMode::Full).unwrap();
    assert!(res.records[0].runtime_ms.unwrap() > 0.0);
}

#[test]
fn empty_result_writes_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("out");
    let result = ExperimentResult {
        records: Vec::new(),
        summary: Summary {
            realizations: 0,
            seed: 0,
            points: Vec::new(),
            trends: Vec::new(),
            certificate_failures: 0,
        },
    };
    assert!(is_config_err(emit_results(&result, &ExperimentConfig::default(), &dir)));
    assert!(!dir.exists());
}

#[test]
fn record_file_layout() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny(&[Scheme::Sta], 1);
    let res = run_experiment(&cfg, RunMode::Full).unwrap();
    let paths = emit_results(&res, &cfg, tmp.path()).unwrap();
    let text = read(&paths.records);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(
        lines[0],
        "realization_id,scheme,feasible,iterations,power_dbm,runtime_ms,mc_outage,wc_margin,rank_ratio,power_w,certified,note"
    );
    assert_eq!(lines[0].split(',').collect::<Vec<_>>(), record_header(&[]));
    let row: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(row[1], "STA");
    assert!(row[5].is_empty(), "runtime must be blank without timing");
    let axes = record_header(&[Axis::DeltaG, Axis::MT]);
    assert_eq!(&axes[..3], ["realization_id", "delta_g", "m_t"]);
    let summary: Summary = serde_json::from_str(&read(&paths.summary)).unwrap();
    assert_eq!(summary, res.summary);
    assert_eq!(read(&paths.plot).lines().next().unwrap(), "STA_feasibility_rate,STA_mean_power_dbm");
    assert!(paths.solutions.is_empty());
}

#[test]
fn infeasible_records_carry_no_power() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = tiny(&[Scheme::Scd, Scheme::Sta], 2);
    cfg.geometry.pr = [300.0, 60.0];
    cfg.base.gamma_dbm = -100.0;
    cfg.base.delta_g = 0.3;
    cfg.base.rate = 4.0;
    let res = run_experiment(&cfg, RunMode::Full).unwrap();
    assert!(res.records.iter().all(|r| !r.feasible));
    let paths = emit_results(&res, &cfg, tmp.path()).unwrap();
    for line in read(&paths.records).lines().skip(1) {
        let row: Vec<&str> = line.split(',').collect();
        assert_eq!(row[2], "false");
        assert!(row[4].is_empty() && row[9].is_empty());
    }
    for s in &res.summary.points[0].schemes {
        assert_eq!(s.feasibility_rate, 0.0);
        assert!(s.mean_power_w.is_none());
    }
}

fn emit_to(cfg: &ExperimentConfig, mode: RunMode, dir: &Path) -> Vec<String> {
    let res = run_experiment(cfg, mode).unwrap();
    let p = emit_results(&res, cfg, dir).unwrap();
    vec![read(&p.records), read(&p.summary), read(&p.plot)]
}

fn sweep_fixture() -> ExperimentConfig {
    let mut cfg = tiny(&Scheme::ALL, 2);
    cfg.sweep = vec![SweepAxis {
        axis: Axis::DeltaG,
        values: vec![0.02, 0.1],
    }];
    cfg
}

#[test]
fn outputs_do_not_depend_on_worker_count() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = sweep_fixture();
    let one = emit_to(&cfg, RunMode::Full, &tmp.path().join("a"));
    let again = emit_to(&cfg, RunMode::Full, &tmp.path().join("b"));
    cfg.workers = 3;
    let three = emit_to(&cfg, RunMode::Full, &tmp.path().join("c"));
    assert_eq!(one, again);
    assert_eq!(one, three);
}

#[test]
fn seed_changes_the_channels() {
    let mut cfg = tiny(&[Scheme::PrephaseSta], 2);
    let a = run_experiment(&cfg, RunMode::Full).unwrap();
    cfg.seed += 1;
    let b = run_experiment(&cfg, RunMode::Full).unwrap();
    assert_ne!(a.records[0].scenario_seed, b.records[0].scenario_seed);
    assert_ne!(a.records[0].power_w, b.records[0].power_w);
}

#[test]
fn realizations_share_fading_across_grid_points() {
    let cfg = sweep_fixture();
    let res = run_experiment(&cfg, RunMode::FeasibilityOnly).unwrap();
    let seeds = |p: usize| -> Vec<u64> {
        res.records.iter().filter(|r| r.point == p).map(|r| r.scenario_seed).collect()
    };
    assert_eq!(seeds(0), seeds(1));
}

#[test]
fn trend_checks_follow_the_sweep() {
    let res = run_experiment(&sweep_fixture(), RunMode::FeasibilityOnly).unwrap();
    // two metrics for each of the five schemes along δ_g
    assert_eq!(res.summary.trends.len(), 10);
    for t in &res.summary.trends {
        assert_eq!(t.axis, Axis::DeltaG);
        assert_eq!(t.x, vec![0.02, 0.1]);
        let defined: Vec<f64> = t.y.iter().flatten().copied().collect();
        let expect = (defined.len() >= 2).then(|| defined.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(t.held, expect);
    }
}

fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

/// Set `IRSCR_BLESS=1` to rewrite the reference outputs.
#[test]
fn outputs_match_golden_files() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = sweep_fixture();
    let res = run_experiment(&cfg, RunMode::Full).unwrap();
    let p = emit_results(&res, &cfg, tmp.path()).unwrap();
    let golden = golden_dir();
    let bless = std::env::var("IRSCR_BLESS").is_ok_and(|v| v == "1");
    for (got, name) in [(&p.records, "records.csv"), (&p.summary, "summary.json"), (&p.plot, "plot.csv")] {
        let want = golden.join(name);
        if bless {
            fs::create_dir_all(&golden).unwrap();
            fs::copy(got, &want).unwrap();
        }
        assert_eq!(read(got), read(&want), "{name} differs from the golden copy");
    }
}

#[test]
fn solution_files_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = tiny(&[Scheme::Scd, Scheme::Sta, Scheme::NoIrsSta], 1);
    cfg.save_solutions = true;
    let res = run_experiment(&cfg, RunMode::Full).unwrap();
    let paths = emit_results(&res, &cfg, tmp.path()).unwrap();
    let solved = res.records.iter().filter(|r| r.feasible && r.solution.is_some()).count();
    assert_eq!(paths.solutions.len(), solved);
    assert!(solved >= 2);
    for path in &paths.solutions {
        let file: SolutionFile = serde_json::from_str(&read(path)).unwrap();
        let rec = res.records.iter().find(|r| r.scheme == file.scheme).unwrap();
        assert_eq!(Some(&file.solution), rec.solution.as_ref());
        let cert = validate_solution(&file, 2000, 0).unwrap();
        assert!(cert.passed, "{:?}: {cert:?}", file.scheme);

        let mut tampered = file.clone();
        tampered.scenario.noise[0] *= 2.0;
        let err = validate_solution(&tampered, 2000, 0).unwrap_err();
        assert!(matches!(&err, Error::Config(m) if m.contains("hash")), "{err}");
    }
}
