use std::fs;
use std::path::Path;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use paradram::cli::{main_with, run_help, EXIT_CONFIG, EXIT_OK, EXIT_REFUSED, EXIT_RUNTIME};
use paradram::config::{merge_settings, parse_config_text, spec_from_settings, RunArgs, GlobalArgs, FIELDS};
use paradram::persist::{chain_header, detect_incomplete, encode_row, read_chain_file, variable_names, RunStatus};
use paradram::report::ParsedReport;
use paradram_core::chain::ChainRow;
use paradram_core::spec::ChainFormat;
use tempfile::TempDir;

fn cli(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let mut full = vec!["paradram"];
    full.extend_from_slice(args);
    let code = main_with(full, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn prefix(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).to_string_lossy().into_owned()
}

#[test]
fn run_produces_suite_and_exit_codes() {
    let dir = TempDir::new().unwrap();
    let out = prefix(&dir, "run1");
    let args = ["run", "--target", "mvn", "--dim", "2", "--chain-len", "2000", "--seed", "42", "--out", &out];
    let (code, stdout, stderr) = cli(&args);
    assert_eq!(code, EXIT_OK, "{stderr}");
    assert!(stdout.contains("2000 unique"));
    for suffix in ["_chain.txt", "_sample.txt", "_report.txt", "_progress.txt", "_restart.bin"] {
        assert!(Path::new(&format!("{out}{suffix}")).exists(), "{suffix}");
    }
    assert_eq!(detect_incomplete(Path::new(&out)).unwrap(), RunStatus::Complete);

    let (code, _, stderr) = cli(&args);
    assert_eq!(code, EXIT_REFUSED);
    assert!(stderr.contains("--force-overwrite"));
    let mut forced = args.to_vec();
    forced.push("--force-overwrite");
    assert_eq!(cli(&forced).0, EXIT_OK);
}

#[test]
fn config_errors_exit_one() {
    let dir = TempDir::new().unwrap();
    let out = prefix(&dir, "bad");
    let (code, _, stderr) = cli(&["run", "--dim", "0", "--out", &out]);
    assert_eq!(code, EXIT_CONFIG);
    assert!(stderr.contains("dimension must be at least 1"), "{stderr}");
    assert_eq!(cli(&["run", "--no-such-flag"]).0, EXIT_CONFIG);
    assert_eq!(cli(&["run", "--dim", "2", "--chain-len", "many", "--out", &out]).0, EXIT_CONFIG);
    assert_eq!(cli(&["run", "--dim", "2", "--mode", "sideways", "--out", &out]).0, EXIT_CONFIG);
    assert_eq!(cli(&["run", "--target", "himmelblau", "--dim", "3", "--out", &out]).0, EXIT_CONFIG);
    assert!(!Path::new(&format!("{out}_chain.txt")).exists());
}

#[test]
fn help_lists_every_field() {
    let help = run_help();
    for (key, _) in FIELDS {
        assert!(help.contains(&format!("--{key}")), "--{key} missing from run help");
    }
    assert_eq!(cli(&["--help"]).0, EXIT_OK);
}

#[test]
fn config_file_and_flags_give_the_same_spec() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("sim.cfg");
    fs::write(
        &cfg,
        "# banana run\n[target]\ntarget = banana\ndim = 3\ncurvature = 0.05 # twist\nchain-len = 1234\n\
         dr_stages = 2\nmode = forkjoin\nworkers = 8\nseed = 9\nformat = binary\ndelimiter = tab\n",
    )
    .unwrap();
    let from_file = RunArgs { config: Some(cfg), ..Default::default() };
    let a = spec_from_settings(&merge_settings(&from_file, &GlobalArgs::default()).unwrap()).unwrap();
    let flags = RunArgs {
        target: Some("banana".into()),
        dim: Some("3".into()),
        curvature: Some("0.05".into()),
        chain_len: Some("1234".into()),
        dr_stages: Some("2".into()),
        mode: Some("forkjoin".into()),
        workers: Some("8".into()),
        delimiter: Some("tab".into()),
        ..Default::default()
    };
    let global = GlobalArgs { seed: Some("9".into()), format: Some("binary".into()), ..Default::default() };
    let b = spec_from_settings(&merge_settings(&flags, &global).unwrap()).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.output.delimiter, '\t');

    // flags win over the file
    let over = RunArgs { config: from_file.config.clone(), dim: Some("4".into()), ..Default::default() };
    assert_eq!(spec_from_settings(&merge_settings(&over, &GlobalArgs::default()).unwrap()).unwrap().dimension(), 4);

    assert!(parse_config_text("bogus = 1").is_err());
    assert!(parse_config_text("dim = 1\ndim = 2").is_err());
}

#[test]
fn refine_is_near_idempotent_and_matches_its_audit() {
    let dir = TempDir::new().unwrap();
    let out = prefix(&dir, "r");
    let args = ["run", "--dim", "2", "--chain-len", "20000", "--seed", "5", "--out", &out, "--deterministic-test-mode"];
    assert_eq!(cli(&args).0, EXIT_OK);
    let first = read_chain_file(Path::new(&format!("{out}_sample.txt"))).unwrap();
    let again = dir.path().join("again.txt");
    let (code, stdout, stderr) = cli(&["refine", &format!("{out}_sample.txt"), again.to_str().unwrap()]);
    assert_eq!(code, EXIT_OK, "{stderr}");
    let second = read_chain_file(&again).unwrap();
    let points = |c: &paradram::persist::ChainFile| c.chain.verbose_len();
    assert!((points(&first) - points(&second)) as f64 / (points(&first) as f64) < 0.05);
    let reported: u64 = stdout.lines().last().unwrap().trim_start_matches("points = ").parse().unwrap();
    assert_eq!(reported, points(&second));
    // final audit row agrees when thinning happened
    let audit: Vec<&str> = stdout.lines().filter(|l| l.chars().next().is_some_and(|c| c.is_ascii_digit())).collect();
    if let Some(last) = audit.last() {
        assert_eq!(last.rsplit(',').next().unwrap().parse::<u64>().unwrap(), reported);
    }
}

fn write_chain(path: &Path, rows: &[ChainRow]) {
    let mut bytes = chain_header(ChainFormat::Ascii, ',', &variable_names(1));
    for r in rows {
        encode_row(ChainFormat::Ascii, ',', r, &mut bytes);
    }
    fs::write(path, bytes).unwrap();
}

#[test]
fn predict_from_acceptance_rate() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("c_chain.txt");
    let rows: Vec<ChainRow> = (0..4)
        .map(|i| ChainRow { mean_acceptance_rate: 0.5, ..ChainRow::new(vec![i as f64], -1.0, 2) })
        .collect();
    write_chain(&path, &rows);
    let (code, stdout, stderr) = cli(&["predict", path.to_str().unwrap(), "--max-workers", "8"]);
    assert_eq!(code, EXIT_OK, "{stderr}");
    // (1 - 0.5^P) / 0.5
    for line in ["P,predictedSpeedup", "1,1\n", "2,1.5\n", "4,1.875\n", "8,1.9921875\n"] {
        assert!(stdout.contains(line), "{line} not in {stdout}");
    }
    assert!(!stdout.contains("16,"));
    assert_eq!(cli(&["predict", dir.path().join("missing").to_str().unwrap()]).0, EXIT_CONFIG);
}

#[test]
fn export_plotdata_figures() {
    let dir = TempDir::new().unwrap();
    let out = prefix(&dir, "fj");
    let args = [
        "run", "--target", "himmelblau", "--mode", "forkjoin", "--workers", "8", "--chain-len", "3000", "--out", &out,
    ];
    assert_eq!(cli(&args).0, EXIT_OK);
    let csv = |figure: &str| {
        let path = dir.path().join(format!("{figure}.csv"));
        let (code, _, err) = cli(&["export-plotdata", &out, figure, path.to_str().unwrap()]);
        assert_eq!(code, EXIT_OK, "{err}");
        fs::read_to_string(path).unwrap()
    };
    let contributions = csv("contributions");
    assert_eq!(contributions.lines().next(), Some("rank,count,fittedProbability"));
    assert_eq!(contributions.lines().count(), 1 + 8);
    let scaling = csv("scaling");
    assert!(scaling.lines().nth(1).unwrap().starts_with("1,1,"));
    let adaptation = csv("adaptation");
    for line in adaptation.lines().skip(1) {
        let m: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        assert!((0.0..=1.0).contains(&m));
    }
    assert!(csv("covariance").lines().count() > 1);

    let report = ParsedReport::parse(&fs::read_to_string(format!("{out}_report.txt")).unwrap());
    assert!(report.table("contributions").is_some());
    assert_eq!(cli(&["export-plotdata", &prefix(&dir, "nothing"), "scaling", "x.csv"]).0, EXIT_CONFIG);
}

#[test]
fn run_status_detection() {
    let dir = TempDir::new().unwrap();
    let p = dir.path().join("s");
    assert_eq!(detect_incomplete(&p).unwrap(), RunStatus::Fresh);
    // leftovers with no restart file are not resumable
    fs::write(dir.path().join("s_chain.txt"), "junk").unwrap();
    assert_eq!(detect_incomplete(&p).unwrap(), RunStatus::Fresh);
    fs::write(dir.path().join("s_restart.bin"), b"PDRMRST\0garbage").unwrap();
    assert!(detect_incomplete(&p).is_err());
    let (code, _, _) = cli(&["run", "--dim", "1", "--out", p.to_str().unwrap()]);
    assert_eq!(code, EXIT_RUNTIME);
}

#[test]
fn resume_rejects_a_changed_spec_but_allows_a_longer_run() {
    use paradram::runner::{run_simulation, Interrupt, RunControl, RunFailure};
    use paradram_core::model::BuiltinTargetSpec;
    use paradram_core::spec::SimulationSpec;
    use std::sync::Arc;

    let dir = TempDir::new().unwrap();
    let p = dir.path().join("x").to_string_lossy().into_owned();
    let mut spec = SimulationSpec::new(BuiltinTargetSpec::standard_normal(2), 3, &p);
    spec.deterministic_test_mode = true;
    spec.kernel.chain_length_target = 5000;
    let stop: Interrupt = Arc::new(|_, rows| rows == 2500);
    let r = run_simulation(&spec, RunControl { force_overwrite: false, interrupt: Some(stop) });
    assert!(matches!(r, Err(RunFailure::Persist(_))));
    assert_eq!(detect_incomplete(Path::new(&p)).unwrap(), RunStatus::Restartable);

    let mut other = spec.clone();
    other.target = BuiltinTargetSpec::standard_normal(3);
    other.kernel.start_point = vec![0.0; 3];
    let e = run_simulation(&other, RunControl::default()).unwrap_err();
    assert_eq!(e.exit_code(), 2, "{e}");

    let mut longer = spec.clone();
    longer.kernel.chain_length_target = 8000;
    let done = run_simulation(&longer, RunControl::default()).unwrap();
    assert!(done.chains[0].resumed);
    assert_eq!(done.chains[0].run.as_ref().unwrap().chain.len(), 8000);
}

#[test]
fn killed_process_resumes_to_the_same_chain() {
    let dir = TempDir::new().unwrap();
    let bin = env!("CARGO_BIN_EXE_paradram");
    let args = |out: &str| {
        vec![
            "run".to_string(),
            "--dim".into(),
            "3".into(),
            "--chain-len".into(),
            "400000".into(),
            "--seed".into(),
            "11".into(),
            "--out".into(),
            out.to_string(),
            "--deterministic-test-mode".into(),
        ]
    };
    let clean = prefix(&dir, "clean");
    assert!(Command::new(bin).args(args(&clean)).stdout(Stdio::null()).status().unwrap().success());

    let killed = prefix(&dir, "killed");
    let mut child = Command::new(bin).args(args(&killed)).stdout(Stdio::null()).spawn().unwrap();
    let restart = format!("{killed}_restart.bin");
    let t0 = Instant::now();
    while fs::metadata(&restart).map(|m| m.len()).unwrap_or(0) == 0 {
        assert!(t0.elapsed() < Duration::from_secs(60));
        std::thread::sleep(Duration::from_millis(5));
    }
    std::thread::sleep(Duration::from_millis(100));
    child.kill().unwrap();
    child.wait().unwrap();

    let report = format!("{killed}_report.txt");
    let finished_early = fs::read_to_string(&report).is_ok_and(|r| r.contains("# end of report"));
    if !finished_early {
        assert_eq!(detect_incomplete(Path::new(&killed)).unwrap(), RunStatus::Restartable);
        let out = Command::new(bin).args(args(&killed)).output().unwrap();
        assert!(out.status.success());
        assert!(String::from_utf8_lossy(&out.stdout).contains("(resumed)"));
    }
    let a = fs::read(format!("{clean}_chain.txt")).unwrap();
    let b = fs::read(format!("{killed}_chain.txt")).unwrap();
    assert!(a == b, "resumed chain differs");
    assert_eq!(fs::read(format!("{clean}_sample.txt")).unwrap(), fs::read(format!("{killed}_sample.txt")).unwrap());
}
