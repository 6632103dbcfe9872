use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hrstat::linalg::SpdMatrix;
use hrstat::sim::generate::{gen_elliptical, DistSpec};
use hrstat::sim::models::{make_qda_cov, QdaCovModel};
use nalgebra::{DMatrix, DVector};
use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_hrstat"));
    c.env_remove("HRSTAT_THREADS");
    c
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("hrstat-cli-{}-{name}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_matrix(path: &Path, x: &DMatrix<f64>) {
    let mut f = std::fs::File::create(path).unwrap();
    hrstat::io::write_csv(x, &mut f).unwrap();
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!("{e}: {}", String::from_utf8_lossy(&out.stderr))
    })
}

fn normal_sample(dir: &Path, n: usize, p: usize, seed: u64) -> PathBuf {
    let x = gen_elliptical(&DistSpec::normal(), &DVector::zeros(p), &SpdMatrix::identity(p), n, seed).unwrap();
    let path = dir.join(format!("x{seed}.csv"));
    write_matrix(&path, &x);
    path
}

#[test]
fn estimate_reports_config_and_seed() {
    let dir = scratch("estimate");
    let input = normal_sample(&dir, 40, 6, 1);
    let out = run(bin().args(["estimate", "--input"]).arg(&input).args(["--bandwidth", "2"]));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    assert_eq!(v["seed"], 20240501);
    assert_eq!(v["config"]["bandwidth"], "2");
    assert_eq!(v["hr"]["bandwidth"], 2);
    assert_eq!(v["estimate"]["mu"].as_array().unwrap().len(), 6);
}

#[test]
fn exit_codes() {
    let dir = scratch("codes");
    let good = normal_sample(&dir, 30, 5, 2);

    let ragged = dir.join("ragged.csv");
    std::fs::write(&ragged, "1,2,3\n4,5\n").unwrap();
    let out = run(bin().args(["estimate", "--input"]).arg(&ragged));
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("row 2"));

    let missing = run(bin().args(["estimate", "--input"]).arg(dir.join("nope.csv")));
    assert_eq!(missing.status.code(), Some(1));

    let constant = dir.join("constant.csv");
    std::fs::write(&constant, "1,1,1\n".repeat(6)).unwrap();
    assert_eq!(run(bin().args(["estimate", "--input"]).arg(&constant)).status.code(), Some(2));

    assert_eq!(run(bin().args(["test", "--alpha", "7", "--input"]).arg(&good)).status.code(), Some(3));
    assert_eq!(run(bin().args(["test", "--method", "median", "--input"]).arg(&good)).status.code(), Some(3));
    assert_eq!(run(bin().args(["estimate", "--format", "csv", "--input"]).arg(&good)).status.code(), Some(3));
    assert_eq!(run(bin().args(["estimate", "--reps", "5", "--input"]).arg(&good)).status.code(), Some(3));
    assert_eq!(run(bin().args(["estimate", "--threads", "0", "--input"]).arg(&good)).status.code(), Some(3));
    assert_eq!(run(bin().args(["frobnicate"])).status.code(), Some(3));
    assert_eq!(run(bin().args(["simulate", "--preset", "table9-x"])).status.code(), Some(3));
}

#[test]
fn test_command_reports_all_methods() {
    let dir = scratch("test");
    let input = normal_sample(&dir, 40, 12, 3);
    let out = run(bin().args(["test", "--boot-m", "20", "--seed", "5", "--input"]).arg(&input));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    assert_eq!(v["seed"], 5);
    let reports = v["reports"].as_array().unwrap();
    assert_eq!(reports.len(), 7);
    for r in reports {
        let p = r["p_value"].as_f64().unwrap();
        assert!(p > 0.0 && p < 1.0, "{r}");
    }

    let csv = run(bin()
        .args(["test", "--boot-m", "20", "--seed", "5", "--method", "cc3", "--format", "csv", "--input"])
        .arg(&input));
    let text = String::from_utf8(csv.stdout).unwrap();
    assert!(text.starts_with("# seed = 5\n"));
    let body: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(body[0], "method,statistic,p_value,reject,calibration");
    assert!(body[1].starts_with("cc3,"));
    let cc3 = reports.iter().find(|r| r["method"] == "cc3").unwrap();
    let p: f64 = body[1].split(',').nth(2).unwrap().parse().unwrap();
    assert_eq!(p, cc3["p_value"].as_f64().unwrap());
}

#[test]
fn config_file_then_flags() {
    let dir = scratch("config");
    let input = normal_sample(&dir, 30, 5, 4);
    let cfg = dir.join("run.conf");
    std::fs::write(&cfg, "# settings\nbandwidth = 1\nseed = 99\nlambda-c1 = 2.0\n").unwrap();
    let out = run(bin().args(["estimate", "--bandwidth", "2", "--input"]).arg(&input).arg("--config").arg(&cfg));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    assert_eq!(v["hr"]["bandwidth"], 2);
    assert_eq!(v["hr"]["lambda_c1"], 2.0);
    assert_eq!(v["seed"], 99);

    std::fs::write(&cfg, "boot_m = 10\n").unwrap();
    let out = run(bin().args(["estimate", "--input"]).arg(&input).arg("--config").arg(&cfg));
    assert_eq!(out.status.code(), Some(3));
    std::fs::write(&cfg, "seed = 1\nseed = 2\n").unwrap();
    let out = run(bin().args(["estimate", "--input"]).arg(&input).arg("--config").arg(&cfg));
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn qda_train_then_predict() {
    let dir = scratch("qda");
    let (n, p) = (60, 10);
    let (c1, c2) = make_qda_cov(QdaCovModel::QI, p).unwrap();
    let a = gen_elliptical(&DistSpec::normal(), &DVector::zeros(p), &c1.sigma, n, 6).unwrap();
    let b = gen_elliptical(&DistSpec::normal(), &DVector::from_element(p, 0.5), &c2.sigma, n, 7).unwrap();
    let mut t = DMatrix::zeros(2 * n, p + 1);
    t.view_mut((0, 0), (n, p)).copy_from(&a);
    t.view_mut((n, 0), (n, p)).copy_from(&b);
    for i in 0..2 * n {
        t[(i, p)] = if i < n { 1.0 } else { 2.0 };
    }
    let train = dir.join("train.csv");
    write_matrix(&train, &t);
    let model = dir.join("model.json");

    let out = run(bin().args(["qda-train", "--input"]).arg(&train).arg("--out").arg(&model));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: Value = serde_json::from_slice(&std::fs::read(&model).unwrap()).unwrap();
    assert!(doc["training_metrics"]["acc"].as_f64().unwrap() > 0.8);

    let out = run(bin().args(["qda-predict", "--labels", "last", "--input"]).arg(&train).arg("--model").arg(&model));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    for key in ["acc", "spec", "sens", "mcc"] {
        assert!(v["metrics"][key].is_number(), "{key}");
    }
    assert_eq!(v["metrics"], doc["training_metrics"]);
    assert_eq!(v["predictions"].as_array().unwrap().len(), 2 * n);

    let short = dir.join("short.csv");
    write_matrix(&short, &a.columns(0, 4).into_owned());
    let out = run(bin().args(["qda-predict", "--input"]).arg(&short).arg("--model").arg(&model));
    assert_eq!(out.status.code(), Some(1));
}

fn small_size_config(dir: &Path) -> PathBuf {
    let cfg = dir.join("sim.conf");
    std::fs::write(&cfg, "preset = table1-modelI-normal-p120\np = 8\nn = 24\nboot_m = 8\n").unwrap();
    cfg
}

#[test]
fn simulate_preset_with_reps() {
    let dir = scratch("sim");
    let cfg = small_size_config(&dir);
    let out = run(bin().args(["simulate", "--reps", "100", "--config"]).arg(&cfg));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("# seed = 20240501"));
    assert!(text.contains("# reps = 100"));
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).skip(1).collect();
    assert_eq!(rows.len(), 4);
    for (r, m) in rows.iter().zip(["max", "sum", "cc1", "cc3"]) {
        let f: Vec<&str> = r.split(',').collect();
        assert_eq!(f[4], m);
        let rate: f64 = f[5].parse().unwrap();
        assert!((0.0..=1.0).contains(&rate));
    }
}

#[test]
fn simulate_is_thread_invariant() {
    let dir = scratch("threads");
    let cfg = small_size_config(&dir);
    let one = run(bin().args(["simulate", "--reps", "100", "--threads", "1", "--config"]).arg(&cfg));
    let eight = run(bin().args(["simulate", "--reps", "100", "--threads", "8", "--config"]).arg(&cfg));
    let env = run(bin().env("HRSTAT_THREADS", "3").args(["simulate", "--reps", "100", "--config"]).arg(&cfg));
    assert_eq!(one.status.code(), Some(0));
    assert_eq!(one.stdout, eight.stdout);
    assert_eq!(one.stdout, env.stdout);


    let qcfg = dir.join("qda.conf");
    std::fs::write(&qcfg, "preset = table2-qdaIII-t3-p10\nn = 30\nreps = 6\nformat = json\n").unwrap();
    let q1 = run(bin().args(["simulate", "--threads", "1", "--config"]).arg(&qcfg));
    let q8 = run(bin().args(["simulate", "--threads", "8", "--config"]).arg(&qcfg));
    assert_eq!(q1.status.code(), Some(0), "{}", String::from_utf8_lossy(&q1.stderr));
    assert_eq!(q1.stdout, q8.stdout);
}
