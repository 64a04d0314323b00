// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::{Path, PathBuf};

use layertracer::cli::{self, EXIT_DEGENERATE, EXIT_ERROR, EXIT_OK, EXIT_PARTIAL, EXIT_USAGE};
use layertracer::models::load_weights;
use serde_json::Value;

fn run(args: &[&str]) -> u8 {
    cli::run(std::iter::once("layertracer").chain(args.iter().copied()))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_json(p: PathBuf) -> Value {
    serde_json::from_slice(&std::fs::read(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display())))
        .unwrap()
}

fn planted_model(dir: &Path, arch: &[&str], k: &str) -> PathBuf {
    let path = dir.join(format!("model_{k}.ltrc"));
    let mut args = vec!["init-model", "--plant-layer", k, "--out", s(&path)];
    args.extend_from_slice(arch);
    assert_eq!(run(&args), EXIT_OK);
    path
}

#[test]
fn init_model_writes_requested_spec() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("h.ltrc");
    let code = run(&[
        "init-model",
        "--arch",
        "hybrid",
        "--pattern",
        "AAL",
        "--layers",
        "6",
        "--d-model",
        "32",
        "--heads",
        "2",
        "--d-ff",
        "48",
        "--vocab",
        "128",
        "--max-seq",
        "16",
        "--seed",
        "4",
        "--out",
        s(&path),
    ]);
    assert_eq!(code, EXIT_OK);
    let m = load_weights(&path).unwrap();
    let spec = m.spec();
    assert_eq!(spec.arch.pattern(6), "AALAAL");
    assert_eq!(
        (
            spec.d_model,
            spec.n_heads,
            spec.d_ff,
            spec.vocab_size,
            spec.max_seq
        ),
        (32, 2, 48, 128, 16)
    );
}

#[test]
fn analyze_single_prompt_all_formats() {
    let dir = tempfile::tempdir().unwrap();
    for arch in [
        &["--arch", "decoder"][..],
        &["--arch", "linear"],
        &["--arch", "hybrid", "--pattern", "AAAL"],
    ] {
        let model = planted_model(dir.path(), arch, "9");
        let out = dir.path().join(format!("out_{}", arch[1]));
        let code = run(&[
            "analyze",
            "--model",
            s(&model),
            "--prompt",
            "Hello, world",
            "--format",
            "json,csv,svg",
            "--out",
            s(&out),
        ]);
        assert_eq!(code, EXIT_OK);
        let report = read_json(out.join("prompt_000.json"));
        assert_eq!(report["particle"]["layer"], 9);
        assert_eq!(report["vulnerability"]["layer"], 9);
        assert_eq!(report["layers"].as_array().unwrap().len(), 12);
        assert!(out.join("prompt_000.csv").exists());
        assert!(out.join("ratio_heatmap.svg").exists());
        assert!(out.join("js_heatmap.svg").exists());
        assert!(!out.join("aggregate.json").exists());
    }
}

#[test]
fn single_phase_commands() {
    let dir = tempfile::tempdir().unwrap();
    let model = planted_model(dir.path(), &[], "4");
    let out = dir.path().join("p");
    assert_eq!(
        run(&[
            "particle",
            "--model",
            s(&model),
            "--prompt",
            "abc",
            "--format",
            "json,svg",
            "--out",
            s(&out)
        ]),
        EXIT_OK
    );
    let r = read_json(out.join("prompt_000.json"));
    assert_eq!(r["particle"]["layer"], 4);
    assert!(r["vulnerability"].is_null());
    assert!(r["layers"][0]["js"].is_null());
    assert!(out.join("ratio_heatmap.svg").exists() && !out.join("js_heatmap.svg").exists());

    let out = dir.path().join("v");
    assert_eq!(
        run(&[
            "vulnerable",
            "--model",
            s(&model),
            "--prompt",
            "abc",
            "--out",
            s(&out)
        ]),
        EXIT_OK
    );
    let r = read_json(out.join("prompt_000.json"));
    assert!(r["particle"].is_null());
    assert_eq!(r["vulnerability"]["layer"], 4);
    assert!(r["layers"][3]["target_prob"].is_null());
}

#[test]
fn layer_subset_restricts_both_phases() {
    let dir = tempfile::tempdir().unwrap();
    let model = planted_model(dir.path(), &[], "6");
    let out = dir.path().join("o");
    assert_eq!(
        run(&[
            "analyze",
            "--model",
            s(&model),
            "--prompt",
            "subset",
            "--layers",
            "8,2,6,4",
            "--out",
            s(&out)
        ]),
        EXIT_OK
    );
    let r = read_json(out.join("prompt_000.json"));
    let idx: Vec<u64> = r["layers"]
        .as_array()
        .unwrap()
        .iter()
        .map(|l| l["index"].as_u64().unwrap())
        .collect();
    assert_eq!(idx, vec![2, 4, 6, 8]);
    assert_eq!(r["particle"]["layer"], 6);
    assert_eq!(r["vulnerability"]["layer"], 6);
    assert_eq!(
        run(&[
            "analyze",
            "--model",
            s(&model),
            "--prompt",
            "x",
            "--layers",
            "0,13",
            "--out",
            s(&out)
        ]),
        EXIT_USAGE
    );
}

#[test]
fn corpus_with_failures_and_categories() {
    let dir = tempfile::tempdir().unwrap();
    let model = planted_model(dir.path(), &[], "10");
    let corpus = dir.path().join("c.jsonl");
    let long = "x".repeat(200);
    std::fs::write(
        &corpus,
        format!(
            "{{\"text\": \"one\", \"category\": \"a\"}}\n{{\"text\": \"{long}\", \"category\": \"a\"}}\n{{\"text\": \"three\", \"category\": \"b\"}}\n"
        ),
    )
    .unwrap();
    let out = dir.path().join("o");
    let code = run(&[
        "analyze",
        "--model",
        s(&model),
        "--prompt-file",
        s(&corpus),
        "--format",
        "json,svg",
        "--out",
        s(&out),
    ]);
    assert_eq!(code, EXIT_PARTIAL);
    let agg = read_json(out.join("aggregate.json"));
    assert_eq!(agg["aggregate"]["overall"]["count"], 2);
    assert_eq!(agg["aggregate"]["failures"][0]["index"], 1);
    assert!(agg["aggregate"]["by_category"]["a"].is_object());
    assert!(out.join("prompt_000.json").exists() && !out.join("prompt_001.json").exists());
    let svg = std::fs::read_to_string(out.join("ratio_heatmap.svg")).unwrap();
    assert!(svg.contains("p002 b"));
}

#[test]
fn noop_perturbation_exits_degenerate() {
    let dir = tempfile::tempdir().unwrap();
    let model = planted_model(dir.path(), &[], "3");
    let out = dir.path().join("o");
    let code = run(&[
        "vulnerable",
        "--model",
        s(&model),
        "--prompt",
        "calm",
        "--mask-fraction",
        "0",
        "--out",
        s(&out),
    ]);
    assert_eq!(code, EXIT_DEGENERATE);
    assert_eq!(
        read_json(out.join("prompt_000.json"))["vulnerability"]["degenerate"],
        true
    );
}

#[test]
fn advise_from_report() {
    let dir = tempfile::tempdir().unwrap();
    let model = planted_model(dir.path(), &["--arch", "hybrid", "--pattern", "AAAL"], "8");
    let out = dir.path().join("o");
    assert_eq!(
        run(&[
            "analyze",
            "--model",
            s(&model),
            "--prompt",
            "advice",
            "--out",
            s(&out)
        ]),
        EXIT_OK
    );
    let report = out.join("prompt_000.json");
    let plan_path = dir.path().join("plan.json");
    assert_eq!(
        run(&["advise", "--report", s(&report), "--out", s(&plan_path)]),
        EXIT_OK
    );
    let plan = read_json(plan_path.clone());
    assert_eq!(plan["plan"]["capacity_pattern"], "LLLLLLLFFFFF");
    assert_eq!(plan["plan"]["capacity_ratio"], "7:5");
    assert!(plan["plan"]["frozen_layers"]
        .as_array()
        .unwrap()
        .contains(&Value::from(8)));

    assert_eq!(
        run(&[
            "advise",
            "--report",
            s(&report),
            "--freeze-quantile",
            "0",
            "--out",
            s(&plan_path)
        ]),
        EXIT_OK
    );
    let plan = read_json(plan_path.clone());
    assert_eq!(plan["plan"]["frozen_layers"].as_array().unwrap().len(), 12);
    assert!(!plan["plan"]["warnings"].as_array().unwrap().is_empty());

    assert_eq!(
        run(&[
            "advise",
            "--report",
            s(&report),
            "--freeze-quantile",
            "1.5",
            "--out",
            s(&plan_path)
        ]),
        EXIT_ERROR
    );
    let partial = dir.path().join("p");
    assert_eq!(
        run(&[
            "particle",
            "--model",
            s(&model),
            "--prompt",
            "advice",
            "--out",
            s(&partial)
        ]),
        EXIT_OK
    );
    assert_eq!(
        run(&["advise", "--report", s(&partial.join("prompt_000.json"))]),
        EXIT_ERROR
    );
}

#[test]
fn bad_inputs_fail_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let junk = dir.path().join("junk.ltrc");
    std::fs::write(&junk, b"not a model").unwrap();
    let out = dir.path().join("o");
    assert_eq!(
        run(&[
            "analyze",
            "--model",
            s(&junk),
            "--prompt",
            "x",
            "--out",
            s(&out)
        ]),
        EXIT_ERROR
    );
    assert_eq!(
        run(&["analyze", "--model", "/nonexistent.ltrc", "--prompt", "x"]),
        EXIT_ERROR
    );
    let model = planted_model(dir.path(), &[], "5");
    let empty = dir.path().join("empty.txt");
    std::fs::write(&empty, "\n\n").unwrap();
    assert_eq!(
        run(&[
            "analyze",
            "--model",
            s(&model),
            "--prompt-file",
            s(&empty),
            "--out",
            s(&out)
        ]),
        EXIT_ERROR
    );
    assert_eq!(
        run(&[
            "analyze",
            "--model",
            s(&model),
            "--prompt",
            "x",
            "--mask-fraction",
            "1.5",
            "--out",
            s(&out)
        ]),
        EXIT_USAGE
    );
    assert_eq!(
        run(&[
            "analyze",
            "--model",
            s(&model),
            "--prompt",
            "x",
            "--format",
            "pdf"
        ]),
        EXIT_USAGE
    );
    assert_eq!(
        run(&[
            "init-model",
            "--plant-layer",
            "13",
            "--out",
            s(&dir.path().join("m.ltrc"))
        ]),
        EXIT_USAGE
    );
}

#[test]
fn phase_outputs_agree_and_heatmaps_have_one_row_per_prompt() {
    let dir = tempfile::tempdir().unwrap();
    let model = planted_model(dir.path(), &["--arch", "linear"], "10");
    let corpus = dir.path().join("c.txt");
    let prompts: Vec<String> = (0..10).map(|i| format!("prompt {i}")).collect();
    std::fs::write(&corpus, prompts.join("\n")).unwrap();
    let both = dir.path().join("both");
    let only = dir.path().join("only");
    let vuln = dir.path().join("vuln");
    for (cmd, out) in [
        ("analyze", &both),
        ("particle", &only),
        ("vulnerable", &vuln),
    ] {
        let code = run(&[
            cmd,
            "--model",
            s(&model),
            "--prompt-file",
            s(&corpus),
            "--format",
            "json,svg",
            "--out",
            s(out),
        ]);
        assert_eq!(code, EXIT_OK, "{cmd}");
    }
    for i in 0..10 {
        let name = format!("prompt_{i:03}.json");
        let a = read_json(both.join(&name));
        let p = read_json(only.join(&name));
        let v = read_json(vuln.join(&name));
        for l in 0..12 {
            assert_eq!(a["layers"][l]["target_prob"], p["layers"][l]["target_prob"]);
            assert_eq!(a["layers"][l]["js"], v["layers"][l]["js"]);
        }
        assert_eq!(v["vulnerability"]["layer"], 10);
    }
    for svg in ["ratio_heatmap.svg", "js_heatmap.svg"] {
        let text = std::fs::read_to_string(both.join(svg)).unwrap();
        let doc = roxmltree::Document::parse(&text).unwrap();
        let rows: std::collections::BTreeSet<&str> = doc
            .descendants()
            .filter_map(|n| n.attribute("data-row"))
            .collect();
        assert_eq!(rows.len(), 10, "{svg}");
    }
}
