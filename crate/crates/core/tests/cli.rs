use std::process::{Command, Output};

use paropt::log::IterationLog;

fn paropt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_paropt"))
        .args(args)
        .env_remove("PAROPT_WORKERS")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn without_elapsed(report: &str) -> String {
    report
        .lines()
        .filter(|l| !l.starts_with("elapsed_s"))
        .collect::<Vec<_>>()
        .join("\n")
}

fn dataset(dir: &tempfile::TempDir) -> String {
    let path = dir.path().join("samples.txt");
    let o = paropt(&[
        "gen-data",
        "--n",
        "1000",
        "--seed",
        "7",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    path.to_str().unwrap().to_string()
}

#[test]
fn exit_code_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(&dir);
    let cases: &[(&[&str], i32)] = &[
        (&["problems"], 0),
        (
            &[
                "optimize",
                "--problem",
                "quadratic",
                "--par0",
                "1,1",
                "--method",
                "lbfgsb",
            ],
            0,
        ),
        (
            &[
                "optimize",
                "--problem",
                "rosenbrock",
                "--par0",
                "-1.2,1",
                "--method",
                "bfgs",
            ],
            0,
        ),
        (
            &[
                "optimize",
                "--problem",
                "rosenbrock",
                "--par0",
                "-1.2,1",
                "--maxit",
                "3",
            ],
            1,
        ),
        (
            &[
                "optimize",
                "--problem",
                "normal_negll",
                "--data",
                &data,
                "--par0",
                "1,1",
            ],
            0,
        ),
        (&["gradcheck", "--problem", "rosenbrock"], 0),
        (&["gen-data", "--n", "3"], 0),
        (&[], 2),
        (&["frobnicate"], 2),
        (&["optimize", "--problem", "quadratic"], 2),
        (
            &[
                "optimize",
                "--problem",
                "quadratic",
                "--par0",
                "1",
                "--bogus",
            ],
            2,
        ),
        (&["optimize", "--problem", "unknown", "--par0", "1"], 2),
        (
            &["optimize", "--problem", "quadratic", "--par0", "1,abc"],
            2,
        ),
        (
            &[
                "optimize",
                "--problem",
                "quadratic",
                "--par0",
                "1",
                "--method",
                "nm",
            ],
            2,
        ),
        (
            &[
                "optimize",
                "--problem",
                "quadratic",
                "--par0",
                "5",
                "--upper",
                "1",
            ],
            2,
        ),
        (
            &[
                "optimize",
                "--problem",
                "quadratic",
                "--par0",
                "1",
                "--lower",
                "0",
                "--method",
                "cg",
            ],
            2,
        ),
        (
            &["optimize", "--problem", "normal_negll", "--par0", "1,1"],
            2,
        ),
        (
            &[
                "optimize",
                "--problem",
                "normal_negll",
                "--data",
                "/no/such/file",
                "--par0",
                "1,1",
            ],
            2,
        ),
        (&["optimize", "--problem", "rosenbrock", "--par0", "1"], 2),
        (&["gradcheck", "--problem", "unknown"], 2),
        (&["gen-data", "--sd", "0"], 2),
        (&["bench", "--reps", "0"], 2),
        (&["bench", "--modes", "turbo"], 2),
    ];
    for (args, code) in cases {
        let o = paropt(args);
        assert_eq!(
            o.status.code(),
            Some(*code),
            "{args:?}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
        if *code == 2 {
            assert!(
                !o.stderr.is_empty(),
                "{args:?} should explain itself on stderr"
            );
        }
    }
}

#[test]
fn likelihood_run_with_log_file() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(&dir);
    let log = dir.path().join("path.csv");
    let o = paropt(&[
        "optimize",
        "--problem",
        "normal_negll",
        "--data",
        &data,
        "--par0",
        "1,1",
        "--lower",
        "-inf,0.0001",
        "--loginfo",
        "--log-out",
        log.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.contains("convergence: 0"), "{out}");
    assert!(out.contains(&format!("log: {}", log.display())));
    let parsed = IterationLog::from_csv(&std::fs::read_to_string(&log).unwrap()).unwrap();
    assert_eq!(parsed.rows()[0].par, vec![1.0, 1.0]);
    let par_line = out.lines().find(|l| l.starts_with("par: ")).unwrap();
    let par: Vec<f64> = par_line[5..]
        .split(", ")
        .map(|t| t.parse().unwrap())
        .collect();
    assert_eq!(parsed.rows().last().unwrap().par, par);
    assert!(par[1] >= 1e-4);
}

#[test]
fn json_report_is_flat() {
    let o = paropt(&[
        "optimize",
        "--problem",
        "quadratic",
        "--par0",
        "1,-1",
        "--json",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let obj = v.as_object().unwrap();
    for key in [
        "par",
        "value",
        "convergence",
        "fn_calls",
        "gr_calls",
        "batches",
        "elapsed_s",
    ] {
        assert!(obj.contains_key(key), "{key}");
    }
    assert_eq!(obj["convergence"], 0);
    assert!(obj.values().all(|v| !v.is_object()));
}

#[test]
fn worker_count_does_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(&dir);
    let runs: &[&[&str]] = &[
        &[
            "--problem",
            "quadratic",
            "--par0",
            "1,2,3",
            "--scheme",
            "central",
        ],
        &[
            "--problem",
            "rosenbrock",
            "--par0",
            "-1.2,1,0.5",
            "--scheme",
            "forward",
        ],
        &[
            "--problem",
            "rosenbrock",
            "--par0",
            "-1.2,1",
            "--method",
            "cg",
            "--maxit",
            "500",
        ],
        &[
            "--problem",
            "normal_negll",
            "--data",
            &data,
            "--par0",
            "1,1",
            "--scheme",
            "central",
        ],
    ];
    for args in runs {
        let mut reports = Vec::new();
        for workers in ["1", "5"] {
            let mut full = vec!["optimize", "--workers", workers];
            full.extend_from_slice(args);
            let o = paropt(&full);
            reports.push(without_elapsed(&stdout(&o)));
        }
        assert_eq!(reports[0], reports[1], "{args:?}");
    }
}

#[test]
fn workers_from_environment() {
    let o = Command::new(env!("CARGO_BIN_EXE_paropt"))
        .args(["optimize", "--problem", "quadratic", "--par0", "1"])
        .env("PAROPT_WORKERS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn gradcheck_passes_for_every_registered_problem() {
    for name in ["quadratic", "rosenbrock", "normal_negll", "sleep"] {
        let o = paropt(&[
            "gradcheck",
            "--problem",
            name,
            "--points",
            "10",
            "--seed",
            "3",
        ]);
        assert_eq!(o.status.code(), Some(0), "{name}: {}", stdout(&o));
        assert!(stdout(&o).contains("10/10 points agree"));
    }
}

#[test]
fn bench_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bench.csv");
    let o = paropt(&[
        "bench",
        "--dims",
        "1,2",
        "--sleeps",
        "0",
        "--reps",
        "2",
        "--workers",
        "3",
        "--modes",
        "serial_approx,parallel_approx",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let rows = paropt::bench::parse_bench_csv(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(rows.len(), 2 * 2 * 2);
}

#[test]
fn gen_data_is_reproducible() {
    let a = paropt(&["gen-data", "--n", "5", "--seed", "9"]);
    let b = paropt(&["gen-data", "--n", "5", "--seed", "9"]);
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(stdout(&a).lines().count(), 5);
}
