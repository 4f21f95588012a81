//! The command line driven end to end on a small configuration.

use std::path::{Path, PathBuf};

use ocr::cli::{dispatch, REPORT_KIND};
use ocr::harness::EvalReport;
use ocr::io::read_document;

const CONFIG: &str = r#"
[seeds]
demos = "0..11"
eval_id = "10000..10002"
eval_ood = "20000..20002"
augment = "30000..30002"
"#;

struct Run {
    dir: tempfile::TempDir,
}

impl Run {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("run.toml"), CONFIG).unwrap();
        Self { dir }
    }

    fn p(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn ocr(&self, args: &[&str]) -> i32 {
        let cfg = self.p("run.toml");
        let mut argv = vec!["ocr".to_string(), "--config".into(), cfg.display().to_string()];
        // `@name` stands for a file inside the run directory
        argv.extend(args.iter().map(|a| match a.strip_prefix('@') {
            Some(name) => self.p(name).display().to_string(),
            None => a.to_string(),
        }));
        dispatch(argv)
    }
}

fn bytes(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap()
}

#[test]
fn full_pipeline_through_the_cli() {
    let r = Run::new();
    assert_eq!(r.ocr(&["demo-collect", "--out", "@demos.jsonl"]), 0);
    assert_eq!(
        r.ocr(&["build-rec", "--demos", "@demos.jsonl", "--out", "@rec.jsonl"]),
        0
    );
    assert_eq!(r.ocr(&["fit-manifold", "--rec", "@rec.jsonl", "--out", "@fit.json"]), 0);
    assert_eq!(
        r.ocr(&[
            "calibrate",
            "--model",
            "@fit.json",
            "--rec",
            "@rec.jsonl",
            "--out",
            "@m.json"
        ]),
        0
    );
    assert_eq!(
        r.ocr(&["train-base", "--demos", "@demos.jsonl", "--out", "@base.json"]),
        0
    );
    assert_eq!(
        r.ocr(&["train-inverse", "--rec", "@rec.jsonl", "--out", "@inv.json"]),
        0
    );

    let joint = [
        "--policy",
        "joint",
        "--base",
        "@base.json",
        "--inverse",
        "@inv.json",
        "--manifold",
        "@m.json",
    ];
    let mut eval: Vec<&str> = vec!["eval"];
    eval.extend(joint);
    eval.extend(["--region", "ood", "--seeds", "20000..20002", "--out", "@joint.json"]);
    assert_eq!(r.ocr(&eval), 0);
    let first = bytes(&r.p("joint.json"));
    assert_eq!(r.ocr(&eval), 0);
    assert_eq!(bytes(&r.p("joint.json")), first, "re-running eval changed the report");

    let (header, rep): (_, EvalReport) = read_document(&r.p("joint.json"), REPORT_KIND).unwrap();
    assert_eq!(rep.n_seeds, 3);
    assert_eq!(
        header.config["seeds"]["eval_ood"],
        serde_json::json!([20000, 20001, 20002])
    );
    assert_eq!(header.config["seeds"]["demos"].as_array().unwrap().len(), 12);
    let csv = std::fs::read_to_string(r.p("joint.csv")).unwrap();
    assert!(csv.starts_with("policy,region,n_seeds,successes,success_rate"));
    assert_eq!(
        std::fs::read_to_string(r.p("joint.seeds.csv")).unwrap().lines().count(),
        4
    );

    let mut roll: Vec<&str> = vec!["rollout"];
    roll.extend(joint);
    roll.extend(["--seed", "20001", "--out", "@trace.jsonl"]);
    assert_eq!(r.ocr(&roll), 0);

    assert_eq!(
        r.ocr(&[
            "augment",
            "--demos",
            "@demos.jsonl",
            "--base",
            "@base.json",
            "--inverse",
            "@inv.json",
            "--manifold",
            "@m.json",
            "--out-dir",
            "@aug.d"
        ]),
        0
    );
    assert!(r.p("aug.d").join("base_aug.json").exists());
    assert!(r.p("aug.d").join("augment.json").exists());

    let out = r.p("plots");
    let out_s = out.display().to_string();
    assert_eq!(
        r.ocr(&[
            "report",
            "--reports",
            "@joint.json",
            "--traces",
            "@trace.jsonl",
            "--manifold",
            "@m.json",
            "--out-dir",
            &out_s
        ]),
        0
    );
    for f in [
        "summary.csv",
        "success.svg",
        "trace.csv",
        "trace_density.svg",
        "quiver_k0.svg",
    ] {
        assert!(out.join(f).exists(), "missing {f}");
    }
}

#[test]
fn flags_override_the_config_file() {
    let r = Run::new();
    assert_eq!(
        r.ocr(&["--set", "seeds.demos=\"0..1\"", "demo-collect", "--out", "@d.jsonl"]),
        0
    );
    let (h, eps) = ocr::io::load_episodes::<ocr::dataset::Episode>(&r.p("d.jsonl")).unwrap();
    assert_eq!(eps.len(), 2);
    assert_eq!(h.config["seeds"]["demos"], serde_json::json!([0, 1]));
    assert_eq!(r.ocr(&["demo-collect", "--seeds", "5", "--out", "@e.jsonl"]), 0);
    assert_eq!(
        ocr::io::load_episodes::<ocr::dataset::Episode>(&r.p("e.jsonl"))
            .unwrap()
            .1
            .len(),
        1
    );
}

#[test]
fn error_exit_codes() {
    let r = Run::new();
    std::fs::write(r.p("empty.jsonl"), "").unwrap();
    assert_eq!(r.ocr(&["fit-manifold", "--rec", "@empty.jsonl", "--out", "@m.json"]), 3);
    assert_eq!(
        r.ocr(&["build-rec", "--demos", "@nothing.jsonl", "--out", "@rec.jsonl"]),
        3
    );
    assert_eq!(
        r.ocr(&[
            "--set",
            "plan.alpha=-1",
            "build-rec",
            "--demos",
            "@x.jsonl",
            "--out",
            "@y.jsonl"
        ]),
        2
    );
    std::fs::write(r.p("bad.toml"), "[plan]\nbogus = 1\n").unwrap();
    let bad = r.p("bad.toml").display().to_string();
    assert_eq!(dispatch(["ocr", "--config", &bad, "demo-collect", "--out", "z"]), 2);
    std::fs::write(r.p("junk.jsonl"), "not json\n").unwrap();
    assert_eq!(
        r.ocr(&["build-rec", "--demos", "@junk.jsonl", "--out", "@rec.jsonl"]),
        1
    );
}
