use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_scissor-qkd"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

/// Data rows of a CSV with `#` provenance lines, header checked.
fn rows(text: &str, header: &str) -> Vec<Vec<String>> {
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    assert_eq!(lines.next(), Some(header));
    lines
        .map(|l| l.split(',').map(str::to_owned).collect())
        .collect()
}

fn num(s: &str) -> f64 {
    s.parse().unwrap()
}

const KEYRATE_HEADER: &str = "L_km,K,K_PLOB,F,P_Q,gaussianity_ratio";

#[test]
fn keyrate_curve_crosses_near_the_table_range() {
    let o = run(&[
        "keyrate",
        "--lambda-a",
        "0.815",
        "--ts",
        "0.041",
        "--l-min",
        "1",
        "--l-max",
        "310",
    ]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(!text.contains('\r'));
    for key in [
        "# scissor-qkd-cli ",
        "# config: ",
        "# beta: 1",
        "# k_min: 1e-6",
        "# cutoffs: ",
        "# tolerances: ",
    ] {
        assert!(text.contains(key), "missing {key}");
    }
    let r = rows(&text, KEYRATE_HEADER);
    assert_eq!(r.len(), 310);
    // 12 significant digits
    assert!(r
        .iter()
        .flatten()
        .all(|c| c.split('e').next().unwrap().trim_start_matches('-').len() == 13));
    let last_k = r.iter().rfind(|row| num(&row[1]) >= 1e-6).unwrap();
    assert_eq!(num(&last_k[0]), 288.0);
    let last_plob = r.iter().rfind(|row| num(&row[2]) >= 1e-6).unwrap();
    assert_eq!(num(&last_plob[0]), 307.0);
    assert!(r.iter().all(|row| num(&row[1]) <= num(&row[2])));
}

#[test]
fn keyrate_is_deterministic_and_vacuum_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    for p in [&a, &b] {
        let o = run(&[
            "keyrate",
            "--lambda-a",
            "0.5",
            "--ts",
            "0.2",
            "--eps",
            "0.01",
            "--l-max",
            "50",
            "--out",
            p.to_str().unwrap(),
        ]);
        assert!(o.status.success());
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let o = run(&["keyrate", "--lambda-a", "0", "--ts", "0.2", "--l-max", "20"]);
    let r = rows(&stdout(&o), KEYRATE_HEADER);
    assert!(r.iter().all(|row| num(&row[1]) == 0.0));
}

#[test]
fn keyrate_json_has_schema_and_provenance() {
    let o = run(&[
        "keyrate",
        "--lambda-a",
        "0.5",
        "--ts",
        "0.2",
        "--l-max",
        "3",
        "--format",
        "json",
    ]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["schema_version"], "1");
    assert_eq!(v["provenance"]["beta"], 1.0);
    assert_eq!(v["provenance"]["config"]["lambda_a"], 0.5);
    assert_eq!(v["columns"].as_array().unwrap().len(), 6);
    assert_eq!(v["rows"].as_array().unwrap().len(), 3);
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.conf");
    std::fs::write(&cfg, "lambda-a = 0.5\nts = 0.2\neps = 0.05\nl-max = 2\n").unwrap();
    let c = cfg.to_str().unwrap();
    let from_file = stdout(&run(&["--config", c, "keyrate"]));
    assert!(from_file.contains("\"eps\":0.05"));
    let flagged = stdout(&run(&["--config", c, "keyrate", "--eps", "0.01"]));
    assert!(flagged.contains("\"eps\":0.01"));
    assert_ne!(
        rows(&from_file, KEYRATE_HEADER),
        rows(&flagged, KEYRATE_HEADER)
    );

    std::fs::write(&cfg, "colour = blue\n").unwrap();
    assert_eq!(
        run(&["--config", c, "keyrate", "--lambda-a", "0.5", "--ts", "0.2"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn configuration_errors_exit_with_two() {
    assert_eq!(
        run(&["keyrate", "--lambda-a", "1.2", "--ts", "0.2"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(run(&["keyrate", "--ts", "0.2"]).status.code(), Some(2));
    assert_eq!(
        run(&[
            "keyrate",
            "--lambda-a",
            "0.5",
            "--ts",
            "0.2",
            "--l-min",
            "0"
        ])
        .status
        .code(),
        Some(2)
    );
    assert_eq!(run(&["table1"]).status.code(), Some(2));
    assert_eq!(run(&["optimize", "--step", "0.1"]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn pdf_columns_and_normalisation() {
    let o = run(&[
        "pdf",
        "--lambda-a",
        "0.6",
        "--ts",
        "0.1",
        "--eps",
        "0.01",
        "--distance",
        "20",
        "--points",
        "2001",
    ]);
    assert!(o.status.success());
    let r = rows(&stdout(&o), "x,f,gaussian_part,nongaussian_part");
    assert_eq!(num(&r[0][0]), -4.0);
    assert_eq!(num(&r[2000][0]), 4.0);
    let h = 8.0 / 2000.0;
    let mut integral = 0.0;
    for (i, row) in r.iter().enumerate() {
        let f = num(&row[1]);
        assert!(f >= 0.0);
        assert!((f - num(&row[2]) - num(&row[3])).abs() <= 1e-11 * f.max(1e-300));
        integral += if i == 0 || i == 2000 { 0.5 * f } else { f };
    }
    assert!((integral * h - 1.0).abs() < 1e-6, "{}", integral * h);

    let o = run(&["pdf", "--lambda-a", "0", "--ts", "0.3", "--distance", "5"]);
    let r = rows(&stdout(&o), "x,f,gaussian_part,nongaussian_part");
    assert!(r.iter().all(|row| num(&row[3]) == 0.0));
}

fn optimize(out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "optimize",
        "--step",
        "0.1",
        "--eps",
        "0.01",
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    run(&args)
}

#[test]
fn optimize_writes_reproducible_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let o = optimize(&a, &["--workers", "1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).starts_with("best lambda_a="));
    assert!(optimize(&b, &["--workers", "2"]).status.success());
    for f in ["grid.csv", "summary.json", "checkpoint.json"] {
        assert_eq!(
            std::fs::read(a.join(f)).unwrap(),
            std::fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
    let grid = std::fs::read_to_string(a.join("grid.csv")).unwrap();
    let r = rows(
        &grid,
        "lambda_a,t_s,range_km,fidelity,k_at_range,converged,crossings,bisection_steps",
    );
    assert_eq!(r.len(), 63);

    let before = std::fs::read(a.join("grid.csv")).unwrap();
    assert!(optimize(&a, &["--resume"]).status.success());
    assert_eq!(before, std::fs::read(a.join("grid.csv")).unwrap());

    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(a.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["schema_version"], "1");
    assert_eq!(summary["points"], 63);
    let best = summary["best"]["range_km"].as_f64().unwrap();
    assert!(r.iter().all(|row| num(&row[2]) <= best));
}

#[test]
fn unreachable_resolution_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let o = optimize(
        &dir.path().join("x"),
        &[
            "--lambda-min",
            "0.5",
            "--lambda-max",
            "0.5",
            "--ts-min",
            "0.2",
            "--ts-max",
            "0.2",
            "--resolution-km",
            "1e-20",
        ],
    );
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn regions_from_grid_and_presets() {
    let dir = tempfile::tempdir().unwrap();
    let grid_dir = dir.path().join("grid");
    assert!(optimize(&grid_dir, &[]).status.success());
    let grid = grid_dir.join("grid.csv");
    let out = dir.path().join("empty");
    let o = run(&[
        "regions",
        "--grid-file",
        grid.to_str().unwrap(),
        "--r-min",
        "1000",
        "--f-min",
        "0.99",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    // near-vacuum inputs do reach F > 0.99, so only these two are empty
    for f in ["range.csv", "intersection.csv"] {
        let text = std::fs::read_to_string(out.join(f)).unwrap();
        assert!(rows(&text, "lambda_a,t_s").is_empty(), "{f}");
    }
    assert!(out.join("fidelity.csv").exists());

    for (preset, l, t) in [("zero-noise", 0.359, 0.004), ("low-noise", 0.413, 0.087)] {
        let out = dir.path().join(preset);
        let (l_lo, l_hi, t_lo, t_hi) = (l - 0.002, l + 0.002, t - 0.002, t + 0.002);
        let o = run(&[
            "regions",
            "--preset",
            preset,
            "--resolution-km",
            "0.001",
            "--lambda-min",
            &l_lo.to_string(),
            "--lambda-max",
            &l_hi.to_string(),
            "--ts-min",
            &t_lo.to_string(),
            "--ts-max",
            &t_hi.to_string(),
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let both = rows(
            &std::fs::read_to_string(out.join("intersection.csv")).unwrap(),
            "lambda_a,t_s",
        );
        assert!(!both.is_empty(), "{preset}");
    }
}

#[test]
fn table1_spot_cells() {
    let o = run(&["table1", "--beta", "1.0"]);
    assert!(o.status.success());
    let r = rows(
        &stdout(&o),
        "quantity,eps_0,eps_0.001,eps_0.005,eps_0.01,eps_0.05",
    );
    assert_eq!(r.len(), 14);
    let cell = |name: &str, col: usize| num(&r.iter().find(|row| row[0] == name).unwrap()[col]);
    assert!((cell("R_km", 1) - 288.0).abs() < 1.0);
    assert_eq!(cell("lambda_a_high_f", 4), 0.423);
    assert_eq!(cell("t_s_high_f", 4), 0.257);
    assert!((cell("R_km_high_f", 4) - 62.0).abs() < 1.0);
    assert!((cell("F_high_f", 4) - 0.93).abs() < 0.01);
    assert!((cell("delta_F_pct", 4) - 304.0).abs() < 10.0);
}

#[test]
fn validate_reports_every_quantity() {
    let o = run(&["validate"]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let r = rows(&stdout(&o), "quantity,max_abs_error,tolerance,passed");
    assert_eq!(r.len(), 12);
    assert!(r.iter().all(|row| row[3] == "true"));

    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.csv");
    std::fs::write(&empty, "lambda_a,lambda_e,t_c,t_s,cutoff\n").unwrap();
    assert_eq!(
        run(&["validate", "--battery", empty.to_str().unwrap()])
            .status
            .code(),
        Some(2)
    );
}
