mod fixtures;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use histoprompt_core::data::{DatasetManifest, ManifestRecord};
use histoprompt_core::sampling::{GridResult, SamplingPlan};
use histoprompt_core::stats::{write_responses_csv, Choice, ResponseRecord, Truth};
use serde_json::Value;

fn histoprompt(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_histoprompt"))
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .args(args)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout_json(o: &Output) -> Value {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).unwrap()
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&histoprompt(d, &["run", "--stages", ""])), 0);
    let m: Value = serde_json::from_str(&fs::read_to_string(d.join("out/run_manifest.json")).unwrap()).unwrap();
    assert_eq!(m["stages"], serde_json::json!([]));

    let o = histoprompt(d, &["metrics", "fid", "--real", "a.emb", "--synth", "b.emb"]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("stage metrics: missing input a.emb"));

    assert_eq!(code(&histoprompt(d, &["--set", "nope=1", "config"])), 2);
    assert_eq!(code(&histoprompt(d, &["--set", "metrics.k=\"three\"", "config"])), 2);
    assert_eq!(code(&histoprompt(d, &["run", "--stages", "curate,paint"])), 2);
    assert_eq!(code(&histoprompt(d, &["frobnicate"])), 2);

    // Malformed embedding content is a validation error.
    fs::write(d.join("bad.emb"), b"EMB0\0\0\0\0").unwrap();
    let o = histoprompt(d, &["metrics", "fid", "--real", "bad.emb", "--synth", "bad.emb"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn config_file_and_flags() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("c.json"), r#"{"metrics.k": 5, "seed.grid": 9}"#).unwrap();
    let v = stdout_json(&histoprompt(d, &["--config", "c.json", "--set", "metrics.k=8", "config"]));
    assert_eq!(v["metrics.k"], 8);
    assert_eq!(v["seed.grid"], 9);
    assert_eq!(v["balance.prompts_per_class"], 21);
}

#[test]
fn metrics_reports() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fixtures::gaussian_embeddings(&d.join("r.emb"), 60, 3, 0.0, 1);
    fixtures::gaussian_embeddings(&d.join("s.emb"), 60, 3, 0.0, 1);
    let fid = stdout_json(&histoprompt(d, &["metrics", "fid", "--real", "r.emb", "--synth", "s.emb"]));
    assert!(fid["fid"].as_f64().unwrap() <= 1e-3);
    assert_eq!(fid["d"], 3);
    let o = histoprompt(d, &["metrics", "pr", "--real", "r.emb", "--synth", "s.emb", "--k", "5", "--out", "pr.json"]);
    assert!(o.status.success());
    let pr: Value = serde_json::from_str(&fs::read_to_string(d.join("pr.json")).unwrap()).unwrap();
    assert_eq!((pr["precision"].as_f64(), pr["recall"].as_f64(), pr["k"].as_u64()), (Some(1.0), Some(1.0), Some(5)));
}

#[test]
fn grid_make_and_aggregate() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let pool = |prefix: &str, n: usize| {
        let records = (0..n)
            .map(|i| ManifestRecord::new(format!("{prefix}{i}"), fixtures::LABELS[i % 2]))
            .collect();
        DatasetManifest::new(records)
    };
    pool("r", 40).write_jsonl(&d.join("real.jsonl")).unwrap();
    pool("s", 80).write_jsonl(&d.join("synth.jsonl")).unwrap();
    let grid = ["--set", "grid.regimes=[10,20]", "--set", "grid.ratios_pct=[0,25,200]", "--set", "grid.folds=2"];
    let mut args = grid.to_vec();
    args.extend(["grid", "make", "--real", "real.jsonl", "--synth", "synth.jsonl", "--out", "plans.jsonl"]);
    assert!(histoprompt(d, &args).status.success());
    let plans: Vec<SamplingPlan> = histoprompt_core::jsonl::read(&d.join("plans.jsonl")).unwrap();
    assert_eq!(plans.len(), 12);
    for p in &plans {
        assert_eq!(p.real_ids.len(), p.regime);
        assert_eq!(p.synthetic_ids.len(), histoprompt_core::sampling::synthetic_count(p.regime, p.ratio_pct));
    }

    let results: Vec<GridResult> = plans
        .iter()
        .map(|p| GridResult {
            regime: p.regime,
            ratio_pct: p.ratio_pct,
            fold: p.fold,
            auc: 0.5 + p.fold as f64 / 10.0,
        })
        .collect();
    histoprompt_core::jsonl::write(&d.join("results.jsonl"), &results).unwrap();
    let mut args = grid.to_vec();
    args.extend(["grid", "aggregate", "--results", "results.jsonl", "--out", "summary.csv"]);
    assert!(histoprompt(d, &args).status.success());
    let csv = fs::read_to_string(d.join("summary.csv")).unwrap();
    assert!(csv.starts_with("regime,ratio_pct,median,q1,q3,min,max\n10,0,0.55,0.525,0.575,0.5,0.6\n"), "{csv}");
    assert_eq!(csv.lines().count(), 7);
}

fn responses(path: &Path) {
    let mut records = Vec::new();
    for reader in ["r1", "r2", "r3"] {
        for i in 0..40 {
            let truth = if i < 20 { Truth::Real } else { Truth::Synthetic };
            let correct = (i * 7 + reader.len() * 3 + reader.as_bytes()[1] as usize) % 5 != 0;
            let choice = match (truth, correct) {
                (Truth::Real, true) => Choice::MaybeReal,
                (Truth::Real, false) => Choice::DefinitelySynthetic,
                (Truth::Synthetic, true) => Choice::DefinitelySynthetic,
                (Truth::Synthetic, false) => Choice::MaybeReal,
            };
            records.push(ResponseRecord {
                reader_id: reader.into(),
                item_id: format!("item-{i:02}"),
                truth,
                choice,
                lead_time_s: 3.0 + (i % 7) as f64 + if truth == Truth::Real { 0.0 } else { 1.5 },
                comment: None,
            });
        }
    }
    write_responses_csv(fs::File::create(path).unwrap(), &records).unwrap();
}

#[test]
fn stats_reports() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    responses(&d.join("responses.csv"));
    let readers = stdout_json(&histoprompt(d, &["stats", "readers", "--responses", "responses.csv"]));
    assert_eq!(readers.as_array().unwrap().len(), 3);
    assert_eq!(readers[0]["n"], 40);
    let kappa = stdout_json(&histoprompt(d, &["stats", "kappa", "--responses", "responses.csv"]));
    let subsets: Vec<&str> = kappa.as_array().unwrap().iter().map(|k| k["subset"].as_str().unwrap()).collect();
    assert_eq!(subsets, ["all", "truth_real", "truth_synthetic"]);
    assert_eq!(kappa[0]["pairs"].as_array().unwrap().len(), 3);
    let lt = stdout_json(&histoprompt(d, &["stats", "leadtime", "--responses", "responses.csv"]));
    assert_eq!(lt["readers"].as_array().unwrap().len(), 3);
    assert!(lt["readers"][0]["intra_p"].as_f64().unwrap() < 0.05);

    let o = histoprompt(d, &["run", "--stages", "stats", "--set", "paths.responses=responses.csv"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["readers.json", "kappa.json", "leadtime.json"] {
        assert!(d.join("out").join(f).exists());
    }
}

#[test]
fn study_prepare_serve_export() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fixtures::image_dir(&d.join("real"), 25, 0);
    fixtures::image_dir(&d.join("synth"), 22, 100);
    let o = histoprompt(d, &["study", "prepare", "--real-dir", "real", "--synth-dir", "synth", "--out", "s/study.json"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let def: Value = serde_json::from_str(&fs::read_to_string(d.join("s/study.json")).unwrap()).unwrap();
    let items = def["items"].as_array().unwrap();
    assert_eq!(items.len(), 40);
    for item in items {
        let rel = item["image_path"].as_str().unwrap();
        assert!(Path::new(rel).is_relative());
        let img = image::open(d.join("s").join(rel)).unwrap();
        assert_eq!((img.width(), img.height()), (512, 512));
    }

    let export = ["study", "export", "--definition", "s/study.json", "--data-dir", "data"];
    let o = histoprompt(d, &export);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(String::from_utf8(o.stdout).unwrap(), "reader_id,item_id,truth,choice,lead_time_s,comment\n");

    // Serve on a free port, answer one item, stop, then export offline.
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let addr = format!("127.0.0.1:{port}");
    let mut child = Command::new(env!("CARGO_BIN_EXE_histoprompt"))
        .current_dir(d)
        .env("RUST_LOG", "warn")
        .args(["study", "serve", "--definition", "s/study.json", "--data-dir", "data", "--addr", &addr])
        .spawn()
        .unwrap();
    let rt = tokio::runtime::Runtime::new().unwrap();
    let answered = rt.block_on(async {
        let client = reqwest::Client::new();
        let base = format!("http://{addr}");
        let start = Instant::now();
        let sid = loop {
            let r = client
                .post(format!("{base}/api/studies/vtt/sessions"))
                .json(&serde_json::json!({"reader_id": "r1"}))
                .send()
                .await;
            match r {
                Ok(r) => break r.json::<Value>().await.unwrap()["session_id"].as_str().unwrap().to_string(),
                Err(_) if start.elapsed() < Duration::from_secs(20) => tokio::time::sleep(Duration::from_millis(50)).await,
                Err(e) => panic!("server never came up: {e}"),
            }
        };
        let next: Value = client.get(format!("{base}/api/sessions/{sid}/next")).send().await.unwrap().json().await.unwrap();
        let item = next["item_id"].as_str().unwrap().to_string();
        let ok: Value = client
            .post(format!("{base}/api/sessions/{sid}/responses"))
            .json(&serde_json::json!({"item_id": item, "choice": "maybe_real"}))
            .send()
            .await
            .unwrap()
            .json()
            .await
            .unwrap();
        assert_eq!(ok["accepted"], true);
        item
    });
    child.kill().unwrap();
    child.wait().unwrap();
    let o = histoprompt(d, &export);
    let csv = String::from_utf8(o.stdout).unwrap();
    assert_eq!(csv.lines().count(), 2);
    assert!(csv.lines().nth(1).unwrap().starts_with(&format!("r1,{answered},")));
}
