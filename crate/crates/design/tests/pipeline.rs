use lattice_design::config::{InitSpec, SolverKind, TargetSpec};
use lattice_design::pipeline::{run_dir, run_in_workspace, select_target, RunStatus};
use lattice_design::{io, run_design, run_design_with, DesignConfig, DesignReport, RunOptions, Workspace};
use lattice_design_core::{Census, Composition, Error as CoreError};

fn small() -> DesignConfig {
    let mut cfg = DesignConfig::new(3, 3, Composition::new(vec![3, 3, 3]).unwrap());
    cfg.candidates = 10;
    cfg.solver.restarts = 20;
    cfg.solver.max_restarts = 100;
    cfg.max_cycles = 3;
    cfg.halt_on_success = false;
    cfg
}

fn json(r: &DesignReport) -> String {
    serde_json::to_string(r).unwrap()
}

#[test]
fn same_config_same_report() {
    let mut cfg = small();
    cfg.seed = 4;
    cfg.track_roc = true;
    let a = run_design(&cfg).unwrap();
    let b = run_design(&cfg).unwrap();
    assert_eq!(json(&a), json(&b));
    assert_eq!(a.cycles.len(), 4);
    assert!(a.cycles.iter().all(|c| c.roc_q.is_some()));
}

#[test]
fn interrupted_runs_resume_to_the_same_report() {
    let mut cfg = small();
    cfg.seed = 9;
    let whole = run_design(&cfg).unwrap();

    let root = tempfile::tempdir().unwrap();
    let opts = RunOptions {
        run_root: Some(root.path().to_path_buf()),
        stop_after: Some(2),
        ..RunOptions::default()
    };
    assert!(run_design_with(&cfg, &opts).is_err());
    let dir = run_dir(root.path(), &cfg);
    assert!(dir.join("cycle_001.json").exists());
    assert!(!dir.join("cycle_002.json").exists());
    let resumed = run_design_with(&cfg, &RunOptions { stop_after: None, ..opts }).unwrap();
    assert_eq!(json(&resumed), json(&whole));
    let on_disk: DesignReport = io::read_json(&dir.join("report.json")).unwrap();
    assert_eq!(json(&on_disk), json(&whole));

    // the run directory refuses a different config
    let mut other = cfg.clone();
    other.seed = 10;
    std::fs::create_dir_all(run_dir(root.path(), &other)).unwrap();
    std::fs::copy(dir.join("config.json"), run_dir(root.path(), &other).join("config.json")).unwrap();
    assert!(run_design_with(&other, &RunOptions { run_root: Some(root.path().to_path_buf()), ..RunOptions::default() }).is_err());
}

#[test]
fn zero_cycles_only_evaluates() {
    let mut cfg = small();
    cfg.max_cycles = 0;
    let r = run_design(&cfg).unwrap();
    assert_eq!(r.cycles.len(), 1);
    assert!(r.cycles[0].refinement.is_none());
    assert_eq!(r.cycles[0].candidates.len(), r.cycles[0].success.size);
}

#[test]
fn ground_truth_start_stops_at_once() {
    let mut cfg = DesignConfig::new(4, 3, Composition::new(vec![5, 5, 6]).unwrap());
    cfg.init = InitSpec::GroundTruth;
    let r = run_design(&cfg).unwrap();
    assert_eq!(r.cycles.len(), 1);
    assert_eq!(r.status, RunStatus::Solved);
    assert_eq!(r.target, 5);
    assert_eq!(r.target_designing_sequences, Some(11_640));
    assert!(r.cycles[0].success.f_c >= 0.5);
}

#[test]
fn history_and_constraints_only_grow() {
    let mut cfg = small();
    cfg.side = 4;
    cfg.composition = Composition::new(vec![5, 5, 6]).unwrap();
    cfg.candidates = 30;
    cfg.solver.restarts = 200;
    cfg.solver.max_restarts = 2000;
    cfg.max_cycles = 4;
    cfg.seed = 1;
    let r = run_design(&cfg).unwrap();
    let cum: Vec<usize> = r.cycles.iter().map(|c| c.cumulative_sequences).collect();
    assert!(cum.windows(2).all(|w| w[0] <= w[1]), "{cum:?}");
    let cons: Vec<usize> = r.cycles.iter().filter_map(|c| c.refinement.as_ref().map(|x| x.constraints)).collect();
    assert!(cons.windows(2).all(|w| w[0] <= w[1]), "{cons:?}");
    for c in &r.cycles {
        assert!((0.0..=1.0).contains(&c.success.f_c));
        assert!(c.candidates.windows(2).all(|w| w[0].g <= w[1].g));
    }
    // a refinement's output is the next cycle's matrix
    for w in r.cycles.windows(2) {
        assert_eq!(w[0].refinement.as_ref().unwrap().next_epsilon, w[1].epsilon);
    }
}

#[test]
fn other_solvers_drive_the_loop() {
    for kind in [SolverKind::Exhaustive, SolverKind::QuboSa] {
        let mut cfg = small();
        cfg.solver.kind = kind;
        cfg.max_cycles = 1;
        let r = run_design(&cfg).unwrap();
        assert_eq!(r.cycles.len(), 2, "{kind:?}");
        assert!(r.cycles.iter().all(|c| !c.candidates.is_empty()));
    }
}

#[test]
fn non_designable_targets_are_refused() {
    let cfg = DesignConfig::new(4, 3, Composition::new(vec![5, 5, 6]).unwrap());
    let ws = Workspace::new(&cfg).unwrap();
    let census = ws.census.as_ref().unwrap();
    // every 4x4 structure is designable here, so use an empty census
    let none = Census::empty(ws.conformations.len());
    for spec in [TargetSpec::Index(5), TargetSpec::MostDesignable] {
        let err = select_target(&spec, &ws.conformations, Some(&none)).unwrap_err();
        assert!(matches!(err.downcast_ref::<CoreError>(), Some(CoreError::Domain(_))));
    }
    assert!(select_target(&TargetSpec::MostDesignable, &ws.conformations, None).is_err());
    assert_eq!(select_target(&TargetSpec::Index(7), &ws.conformations, None).unwrap(), 7);
    assert!(select_target(&TargetSpec::Index(99), &ws.conformations, Some(census)).is_err());
    // the same structure given as a transformed chain resolves to its index
    let chain = ws.conformations[5].transformed(3).reversed().to_string();
    assert_eq!(select_target(&TargetSpec::Conformation(chain), &ws.conformations, Some(census)).unwrap(), 5);

    let mut other = cfg.clone();
    other.seed = 3;
    other.max_cycles = 0;
    let r = run_in_workspace(&other, &ws, &RunOptions::default()).unwrap();
    assert_eq!(r.target, 5);
}
