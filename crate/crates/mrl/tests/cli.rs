use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mrl"))
}

struct Scratch(PathBuf);

impl Scratch {
    fn new(tag: &str) -> Self {
        let p = std::env::temp_dir().join(format!("mrl-cli-{tag}-{}", std::process::id()));
        let _ = std::fs::remove_dir_all(&p);
        std::fs::create_dir_all(&p).unwrap();
        Scratch(p)
    }

    fn path(&self, name: &str) -> PathBuf {
        self.0.join(name)
    }
}

impl Drop for Scratch {
    fn drop(&mut self) {
        let _ = std::fs::remove_dir_all(&self.0);
    }
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let o = run(args);
    assert!(o.status.success(), "{args:?} failed:\n{}", String::from_utf8_lossy(&o.stderr));
    o
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const QUICK: [&str; 8] = ["--iterations", "80", "--burn-in", "20", "--thinning", "2", "--truncation", "12"];

fn simulate(dir: &Scratch, scenario: &str, extra: &[&str]) -> PathBuf {
    let mut args = vec!["simulate", "--scenario", scenario, "--seed", "7", "--truth-points", "20", "--out", s(&dir.0)];
    args.extend_from_slice(extra);
    ok(&args);
    dir.path("data.csv")
}

fn fit(data: Option<&Path>, model: &str, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["fit", "--model", model, "--out", s(out)];
    if let Some(d) = data {
        args.extend(["--data", s(d)]);
    }
    for pair in QUICK.chunks(2) {
        if !extra.contains(&pair[0]) {
            args.extend_from_slice(pair);
        }
    }
    args.extend_from_slice(extra);
    run(&args)
}

#[test]
fn simulate_sim1_sizes() {
    let dir = Scratch::new("sim1");
    let data = simulate(&dir, "sim1", &[]);
    let text = std::fs::read_to_string(&data).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("time,status,group"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 350);
    assert_eq!(rows.iter().filter(|r| r.ends_with(",C")).count(), 250);
    assert_eq!(rows.iter().filter(|r| r.ends_with(",T")).count(), 100);
    let truth = std::fs::read_to_string(dir.path("truth.csv")).unwrap();
    assert!(truth.starts_with("functional,group,covariate,grid,value\n"));
    assert_eq!(truth.lines().count(), 1 + 2 * 3 * 20);
}

#[test]
fn simulate_regression_has_covariate_and_regression_truth() {
    let dir = Scratch::new("regression");
    let data = simulate(&dir, "regression", &["--n", "300", "--censoring", "uniform:0:200"]);
    let text = std::fs::read_to_string(&data).unwrap();
    assert!(text.starts_with("time,status,covariate\n"));
    assert_eq!(text.lines().count(), 301);
    assert!(text.lines().skip(1).any(|l| l.split(',').nth(1) == Some("1")));
    let truth = std::fs::read_to_string(dir.path("truth.csv")).unwrap();
    assert!(truth.lines().any(|l| l.starts_with("mean_regression,")));
}

#[test]
fn usage_errors_exit_2_without_files() {
    let dir = Scratch::new("usage");
    let o = run(&["simulate", "--scenario", "sim9", "--out", s(&dir.0)]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(std::fs::read_dir(&dir.0).unwrap().count(), 0);
    let o = run(&["simulate", "--scenario", "sim1", "--censoring", "uniform:3:1", "--out", s(&dir.0)]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["simulate", "--scenario", "sim1", "--n", "10", "--out", s(&dir.0)]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(std::fs::read_dir(&dir.0).unwrap().count(), 0);
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    let o = fit(None, "dpmm", &dir.path("c.jsonl"), &["--thinning", "0"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn precondition_errors_exit_3() {
    let dir = Scratch::new("pre");
    let o = fit(Some(&dir.path("missing.csv")), "dpmm", &dir.path("c.jsonl"), &[]);
    assert_eq!(o.status.code(), Some(3));
    let bad = dir.path("bad.csv");
    std::fs::write(&bad, "time,status,covariate\n1.0,0,2\n0,0,1\n3,1,\n").unwrap();
    let o = fit(Some(&bad), "dpmm", &dir.path("c.jsonl"), &[]);
    assert_eq!(o.status.code(), Some(3));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("row 1") && err.contains("row 2"), "{err}");
    let single = dir.path("single.csv");
    std::fs::write(&single, "time,status\n1,0\n2,0\n").unwrap();
    assert_eq!(fit(Some(&single), "ddpmm", &dir.path("c.jsonl"), &[]).status.code(), Some(3));
}

#[test]
fn prior_only_fit_succeeds() {
    let dir = Scratch::new("prior");
    for model in ["dpmm", "ddpmm"] {
        let out = dir.path(&format!("{model}.jsonl"));
        let o = fit(None, model, &out, &[]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let text = std::fs::read_to_string(&out).unwrap();
        assert_eq!(text.lines().count(), 1 + 30);
        assert!(dir.path(&format!("{model}.diagnostics.json")).exists());
    }
}

#[test]
fn ddpmm_weights_sum_to_one_and_ewm_has_four_parameters() {
    let dir = Scratch::new("fit");
    let data = simulate(&dir, "sim1", &[]);
    let chain = dir.path("ddp.jsonl");
    assert!(fit(Some(&data), "ddpmm", &chain, &[]).status.success());
    for line in std::fs::read_to_string(&chain).unwrap().lines().skip(1) {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        let w = v["sticks"]["weights"].as_array().unwrap();
        assert_eq!(w.len(), 2);
        for g in w {
            let sum: f64 = g.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }
    let d: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path("ddp.diagnostics.json")).unwrap()).unwrap();
    assert!(d["max_weight_sum_error"].as_f64().unwrap() < 1e-12);
    assert!(d["traces"]["b"]["ess"].as_f64().unwrap() > 0.0);

    let ewm = dir.path("ewm.jsonl");
    assert!(fit(Some(&data), "ewm", &ewm, &["--iterations", "400", "--burn-in", "100"]).status.success());
    let text = std::fs::read_to_string(&ewm).unwrap();
    let draw: serde_json::Value = serde_json::from_str(text.lines().nth(1).unwrap()).unwrap();
    assert_eq!(draw.as_object().unwrap().len(), 4);
    let d: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path("ewm.diagnostics.json")).unwrap()).unwrap();
    assert_eq!(d["traces"].as_object().unwrap().len(), 4);
}

fn files(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> =
        std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect();
    v.sort();
    v
}

#[test]
fn functionals_write_one_file_per_curve() {
    let dir = Scratch::new("fun");
    let data = simulate(&dir, "regression", &["--n", "200"]);
    let chain = dir.path("dp.jsonl");
    assert!(fit(Some(&data), "dpmm", &chain, &[]).status.success());
    let out = dir.path("curves");
    ok(&[
        "functionals", "--chain", s(&chain), "--kind", "mrl", "--kind", "survival",
        "--covariates=-10,-5,0,5,10,15", "--grid", "0:30:16", "--out", s(&out),
    ]);
    let names: Vec<String> = files(&out).into_iter().filter(|n| n.ends_with(".csv")).collect();
    assert_eq!(names.len(), 12, "{names:?}");
    assert!(names.contains(&"mrl_x-10.0.csv".to_string()));
    let text = std::fs::read_to_string(out.join("survival_x5.0.csv")).unwrap();
    assert!(text.starts_with("grid,mean,q_0.025,q_0.5,q_0.975\n"));

    let reg = dir.path("reg");
    ok(&[
        "functionals", "--chain", s(&chain), "--kind", "mean-regression", "--grid=-15:20:36",
        "--quantiles", "", "--out", s(&reg),
    ]);
    let text = std::fs::read_to_string(reg.join("mean_regression.csv")).unwrap();
    assert!(text.starts_with("grid,mean\n"));
    assert_eq!(text.lines().count(), 37);

    let o = run(&["functionals", "--chain", s(&chain), "--kind", "mean-regression", "--out", s(&reg)]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["functionals", "--chain", s(&dir.path("nope.jsonl")), "--kind", "mrl", "--out", s(&reg)]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn two_group_functionals_add_mrl_order() {
    let dir = Scratch::new("fun2");
    let data = simulate(&dir, "sim2", &["--n-c", "60", "--n-t", "60"]);
    let chain = dir.path("ddp.jsonl");
    assert!(fit(Some(&data), "ddpmm", &chain, &[]).status.success());
    let out = dir.path("curves");
    ok(&["functionals", "--chain", s(&chain), "--kind", "mrl", "--kind", "density", "--grid-points", "25", "--out", s(&out)]);
    let names = files(&out);
    for n in ["mrl_C.csv", "mrl_T.csv", "density_C.csv", "density_T.csv", "prob_mrl_order.csv"] {
        assert!(names.contains(&n.to_string()), "{names:?}");
    }
    let p = mrl::io::read_curve(&out.join("prob_mrl_order.csv")).unwrap();
    assert!(p.mean.iter().all(|v| v.is_nan() || (0.0..=1.0).contains(v)));

    let ewm = dir.path("ewm.jsonl");
    assert!(fit(Some(&data), "ewm", &ewm, &[]).status.success());
    let eo = dir.path("ewm_curves");
    ok(&["functionals", "--chain", s(&ewm), "--kind", "mrl", "--kind", "hazard", "--grid", "0:10:11", "--out", s(&eo)]);
    assert_eq!(files(&eo).iter().filter(|n| n.ends_with(".csv")).count(), 4);
}

#[test]
fn compare_reports_alpml_and_guards_the_dataset() {
    let dir = Scratch::new("cmp");
    let data = simulate(&dir, "sim1", &["--n-c", "40", "--n-t", "30"]);
    let ddp = dir.path("ddp.jsonl");
    let ewm = dir.path("ewm.jsonl");
    assert!(fit(Some(&data), "ddpmm", &ddp, &[]).status.success());
    assert!(fit(Some(&data), "ewm", &ewm, &["--iterations", "400", "--burn-in", "100"]).status.success());
    let out = dir.path("cmp");
    ok(&["compare", "--data", s(&data), "--chain", s(&ddp), "--chain", s(&ewm), "--out", s(&out)]);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    let models = summary["models"].as_array().unwrap();
    assert_eq!(models.len(), 2);
    assert_eq!(models[0]["model"], "ddpmm");
    assert_eq!(models[1]["model"], "ewm");
    assert!(models.iter().all(|m| m["alpml"].as_f64().unwrap().is_finite()));
    let cpo = std::fs::read_to_string(out.join("cpo_ddpmm.csv")).unwrap();
    assert!(cpo.starts_with("group,row,time,status,cpo,log_cpo,unstable\n"));
    assert_eq!(cpo.lines().count(), 71);

    let one = dir.path("one");
    ok(&["compare", "--data", s(&data), "--chain", s(&ewm), "--out", s(&one)]);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(one.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["models"].as_array().unwrap().len(), 1);

    let other = Scratch::new("cmp-other");
    let data2 = {
        ok(&["simulate", "--scenario", "sim1", "--seed", "8", "--n-c", "40", "--n-t", "30", "--out", s(&other.0)]);
        other.path("data.csv")
    };
    let o = run(&["compare", "--data", s(&data2), "--chain", s(&ddp), "--out", s(&dir.path("bad"))]);
    assert_eq!(o.status.code(), Some(3));
    assert!(!dir.path("bad").join("summary.json").exists());
}

#[test]
fn identical_seeds_give_identical_bytes() {
    let dir = Scratch::new("det");
    let data = simulate(&dir, "sim1", &["--n-c", "50", "--n-t", "40"]);
    let mut outputs = Vec::new();
    for rep in 0..2 {
        let chain = dir.path(&format!("c{rep}.jsonl"));
        assert!(fit(Some(&data), "ddpmm", &chain, &["--chains", "2", "--seed", "11"]).status.success());
        let curves = dir.path(&format!("curves{rep}"));
        ok(&["functionals", "--chain", s(&chain), "--kind", "mrl", "--kind", "hazard", "--grid-points", "15", "--out", s(&curves)]);
        let mut blobs = vec![std::fs::read(&chain).unwrap(), std::fs::read(dir.path(&format!("c{rep}.diagnostics.json"))).unwrap()];
        for f in files(&curves) {
            blobs.push(std::fs::read(curves.join(f)).unwrap());
        }
        outputs.push(blobs);
    }
    assert_eq!(outputs[0].len(), outputs[1].len());
    assert!(outputs[0] == outputs[1]);
    let other = dir.path("c2.jsonl");
    assert!(fit(Some(&data), "ddpmm", &other, &["--chains", "2", "--seed", "12"]).status.success());
    assert_ne!(std::fs::read(&other).unwrap(), outputs[0][0]);
}

#[test]
fn config_file_and_flags_layer() {
    let dir = Scratch::new("cfg");
    let cfg = dir.path("run.toml");
    std::fs::write(&cfg, "preset = \"sim1\"\n[mcmc]\niterations = 50\nburn_in = 10\nadapt_until = 5\nthinning = 1\n[prior]\ntruncation = 7\n").unwrap();
    let out = dir.path("c.jsonl");
    ok(&["fit", "--model", "ddpmm", "--config", s(&cfg), "--thinning", "4", "--out", s(&out)]);
    let h = mrl::io::read_chain_header(&out).unwrap();
    assert_eq!(h.meta.truncation, 7);
    assert_eq!(h.meta.thinning, 4);
    assert_eq!(h.draws, 10);
    std::fs::write(&cfg, "[prior]\nnot_a_key = 1\n").unwrap();
    assert_eq!(run(&["fit", "--model", "dpmm", "--config", s(&cfg), "--out", s(&out)]).status.code(), Some(2));
}

#[test]
fn properties_table_has_every_formula() {
    let dir = Scratch::new("props");
    let out = dir.path("p.csv");
    ok(&["properties", "--n-sticks", "2000", "--n-prior", "400", "--truncation", "60", "--out", s(&out)]);
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("formula,alpha,b,analytic,mc_estimate,mc_se,pass"));
    // 12 grid points x (cor_zeta + 3x3 weight rows + cov_g, cor_g, cov_t, cor_t)
    assert_eq!(lines.count(), 12 * 14);
}

#[test]
fn shipped_configs_match_templates() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    for (name, preset) in [("regression", mrl::config::Preset::Regression), ("sim1", mrl::config::Preset::Sim1), ("sim2", mrl::config::Preset::Sim2)] {
        let text = std::fs::read_to_string(root.join(format!("{name}.toml"))).unwrap();
        assert_eq!(text, mrl::config::template(preset), "{name}.toml is stale");
    }
}
