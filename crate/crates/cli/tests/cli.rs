use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use irsr_core::{load_image, save_image, upscale_x4, BitDepth, Filter, Image};

const IRSR: &str = env!("CARGO_BIN_EXE_irsr");
const STUB: &str = env!("CARGO_BIN_EXE_irsr-stub-engine");

fn irsr(args: &[&str]) -> Output {
    Command::new(IRSR).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Small dataset plus bicubic and nearest SR outputs.
fn dataset(root: &Path) -> (PathBuf, PathBuf, PathBuf) {
    let out = irsr(&[
        "gen-synth",
        "--out",
        p(&root.join("ds")),
        "--seed",
        "1",
        "--plan",
        "32x32:2,48x32:1",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let ds = root.join("ds");
    let mut dirs = Vec::new();
    for f in [Filter::bicubic(), Filter::Nearest] {
        let sr = root.join(f.name());
        fs::create_dir_all(&sr).unwrap();
        for e in fs::read_dir(ds.join("LR")).unwrap() {
            let path = e.unwrap().path();
            let up = upscale_x4(&load_image(&path).unwrap(), f).unwrap();
            save_image(&up, sr.join(path.file_name().unwrap())).unwrap();
        }
        dirs.push(sr);
    }
    let nearest = dirs.pop().unwrap();
    (ds, dirs.pop().unwrap(), nearest)
}

#[test]
fn help_and_usage_errors() {
    let out = irsr(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("tune-weights"));
    let out = irsr(&["score", "--sr", "x", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("Usage"));
    assert!(stdout(&out).is_empty());
    assert_eq!(irsr(&[]).status.code(), Some(1));
}

#[test]
fn score_formats() {
    let tmp = tempfile::tempdir().unwrap();
    let (ds, bicubic, _) = dataset(tmp.path());
    let out = irsr(&[
        "score",
        "--sr",
        p(&bicubic),
        "--data",
        p(&ds),
        "--format",
        "csv",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let csv = stdout(&out);
    assert_eq!(csv.lines().next(), Some("image_id,psnr,ssim,score"));
    assert_eq!(csv.lines().count(), 4);

    let report = tmp.path().join("r.json");
    let out = irsr(&[
        "score",
        "--sr",
        p(&bicubic),
        "--data",
        p(&ds),
        "--format",
        "json",
        "--out",
        p(&report),
    ]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(v["meta"]["n_images"], 3);
    assert_eq!(v["meta"]["scale"], 4);
    assert_eq!(v["meta"]["phase"], "validation");
    assert_eq!(v["per_image"][0]["image_id"], "syn_0000_32x32");
    let agg = &v["aggregate"];
    let total = agg["mean_psnr"].as_f64().unwrap() + 20.0 * agg["mean_ssim"].as_f64().unwrap();
    assert!((total - agg["mean_score"].as_f64().unwrap()).abs() < 1e-9);

    let text = stdout(&irsr(&["score", "--sr", p(&bicubic), "--data", p(&ds)]));
    assert!(text.lines().last().unwrap().starts_with("mean (3)"));

    let sym = stdout(&irsr(&[
        "score",
        "--sr",
        p(&bicubic),
        "--data",
        p(&ds),
        "--format",
        "csv",
        "--ssim-pad",
        "symmetric",
    ]));
    assert_ne!(sym, csv);
    let out = irsr(&[
        "score",
        "--sr",
        p(&bicubic),
        "--data",
        p(&ds),
        "--format",
        "xml",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn score_errors_map_to_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let (ds, bicubic, _) = dataset(tmp.path());
    fs::remove_file(bicubic.join("syn_0001_32x32.png")).unwrap();
    let out = irsr(&["score", "--sr", p(&bicubic), "--data", p(&ds)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("syn_0001_32x32"));

    let out = irsr(&[
        "score",
        "--sr",
        p(&tmp.path().join("absent")),
        "--data",
        p(&ds),
    ]);
    assert_eq!(out.status.code(), Some(2));

    fs::write(bicubic.join("syn_0001_32x32.png"), b"not a png").unwrap();
    let out = irsr(&["score", "--sr", p(&bicubic), "--data", p(&ds)]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    assert!(stderr(&out).contains("syn_0001_32x32"));
}

#[test]
fn tune_weights_writes_sensitivity_and_choice() {
    let tmp = tempfile::tempdir().unwrap();
    let (ds, bicubic, nearest) = dataset(tmp.path());
    let out = irsr(&[
        "tune-weights",
        "--a",
        p(&bicubic),
        "--b",
        p(&nearest),
        "--gt",
        p(&ds),
        "--lo",
        "0.30",
        "--hi",
        "0.60",
        "--step",
        "0.01",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let csv = stdout(&out);
    assert_eq!(
        csv.lines().next(),
        Some("w1,w2,mean_psnr,mean_ssim,mean_score")
    );
    assert_eq!(csv.lines().count(), 32);
    assert!(csv.lines().nth(1).unwrap().starts_with("0.3,0.7,"));
    // bicubic beats nearest, so the top of the range wins
    assert!(
        stderr(&out).contains("chosen alpha=0.6 "),
        "{}",
        stderr(&out)
    );

    let file = tmp.path().join("sens.csv");
    let out = irsr(&[
        "tune-weights",
        "--a",
        p(&bicubic),
        "--b",
        p(&nearest),
        "--gt",
        p(&ds.join("HR")),
        "--candidates",
        "0.2,0.9,0.5",
        "--out",
        p(&file),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).starts_with("chosen alpha=0.9 "));
    assert_eq!(fs::read_to_string(&file).unwrap().lines().count(), 4);

    let out = irsr(&[
        "tune-weights",
        "--inputs",
        p(&bicubic),
        p(&nearest),
        p(&bicubic),
        "--gt",
        p(&ds),
        "--step",
        "0.5",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(
        stdout(&out).lines().next(),
        Some("w1,w2,w3,mean_psnr,mean_ssim,mean_score")
    );
    assert_eq!(stdout(&out).lines().count(), 7);
    let out = irsr(&[
        "tune-weights",
        "--inputs",
        p(&bicubic),
        p(&nearest),
        "--gt",
        p(&ds),
        "--step",
        "0.001",
        "--cap",
        "100",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn fuse_and_degrade() {
    let tmp = tempfile::tempdir().unwrap();
    let (ds, bicubic, nearest) = dataset(tmp.path());
    let fused = tmp.path().join("fused");
    let out = irsr(&[
        "fuse",
        "--input",
        p(&bicubic),
        "--input",
        p(&nearest),
        "--weights",
        "1,0",
        "--out",
        p(&fused),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    for e in fs::read_dir(&bicubic).unwrap() {
        let path = e.unwrap().path();
        assert_eq!(
            load_image(&path).unwrap(),
            load_image(fused.join(path.file_name().unwrap())).unwrap()
        );
    }
    let out = irsr(&[
        "fuse",
        "--input",
        p(&bicubic),
        "--input",
        p(&nearest),
        "--weights",
        "0.5,0.6",
        "--out",
        p(&fused),
    ]);
    assert_eq!(out.status.code(), Some(1));

    let lr = tmp.path().join("lr");
    assert!(
        irsr(&["degrade", "--hr", p(&ds.join("HR")), "--out", p(&lr)])
            .status
            .success()
    );
    for e in fs::read_dir(ds.join("LR")).unwrap() {
        let path = e.unwrap().path();
        assert_eq!(
            fs::read(&path).unwrap(),
            fs::read(lr.join(path.file_name().unwrap())).unwrap()
        );
    }
    let odd = tmp.path().join("odd.png");
    save_image(&Image::filled(10, 8, BitDepth::Eight, 5).unwrap(), &odd).unwrap();
    let out = irsr(&[
        "degrade",
        "--hr",
        p(&odd),
        "--out",
        p(&tmp.path().join("o.png")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("divisible"), "{}", stderr(&out));
}

#[test]
fn rank_recomputes_totals() {
    let tmp = tempfile::tempdir().unwrap();
    let results = tmp.path().join("teams.csv");
    fs::write(&results, "Team Name,Test PSNR,Test SSIM,Total Score\nNTR,35.6544,0.9180,0\nCASWiT_SR_IR,35.6529,0.9182,0\n").unwrap();
    let out = irsr(&["rank", "--results", p(&results)]);
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = stdout(&out);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "team,rank,test_psnr,test_ssim,total_score");
    assert_eq!(lines[1], "CASWiT_SR_IR,1,35.6529,0.9182,54.0169");
    assert_eq!(lines[2], "NTR,2,35.6544,0.9180,54.0144");
}

#[test]
fn gen_synth_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    for d in ["a", "b"] {
        let out = irsr(&[
            "gen-synth",
            "--seed",
            "7",
            "--plan",
            "default",
            "--out",
            p(&tmp.path().join(d)),
        ]);
        assert!(out.status.success());
    }
    let names: Vec<_> = fs::read_dir(tmp.path().join("a/HR"))
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    assert_eq!(names.len(), 10);
    for n in names {
        for sub in ["HR", "LR"] {
            assert_eq!(
                fs::read(tmp.path().join("a").join(sub).join(&n)).unwrap(),
                fs::read(tmp.path().join("b").join(sub).join(&n)).unwrap()
            );
        }
    }
    let out = irsr(&[
        "gen-synth",
        "--plan",
        "63x64:1",
        "--out",
        p(&tmp.path().join("c")),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn config_supplies_defaults_and_models() {
    let tmp = tempfile::tempdir().unwrap();
    let (ds, bicubic, _) = dataset(tmp.path());
    let cfg = tmp.path().join("irsr.toml");
    fs::write(
        &cfg,
        format!(
            "format = \"json\"\n[score]\nssim_pad = \"symmetric\"\n[models.stub]\ncommand = \"'{STUB}' {{input_dir}} {{output_dir}}\"\nwindow_multiple = 8\ntimeout = 30\n"
        ),
    )
    .unwrap();
    let out = irsr(&[
        "--config",
        p(&cfg),
        "score",
        "--sr",
        p(&bicubic),
        "--data",
        p(&ds),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).trim_start().starts_with('{'));
    let sym = stdout(&irsr(&[
        "score",
        "--sr",
        p(&bicubic),
        "--data",
        p(&ds),
        "--format",
        "json",
        "--ssim-pad",
        "symmetric",
    ]));
    assert_eq!(stdout(&out), sym);

    // command-line flags win over the file
    let out = irsr(&[
        "score",
        "--config",
        p(&cfg),
        "--sr",
        p(&bicubic),
        "--data",
        p(&ds),
        "--format",
        "csv",
    ]);
    assert!(stdout(&out).starts_with("image_id,psnr,ssim,score"));

    let sr = tmp.path().join("stub-sr");
    let out = irsr(&[
        "--config",
        p(&cfg),
        "infer",
        "--lr",
        p(&ds.join("LR")),
        "--out",
        p(&sr),
        "--model",
        "stub",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let lr = load_image(ds.join("LR/syn_0002_48x32.png")).unwrap();
    assert_eq!(
        load_image(sr.join("syn_0002_48x32.png")).unwrap(),
        upscale_x4(&lr, Filter::Nearest).unwrap()
    );

    fs::write(&cfg, "[score]\nno_such_option = 1\n").unwrap();
    let out = irsr(&[
        "--config",
        p(&cfg),
        "score",
        "--sr",
        p(&bicubic),
        "--data",
        p(&ds),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let out = irsr(&[
        "--config",
        p(&tmp.path().join("missing.toml")),
        "score",
        "--sr",
        p(&bicubic),
        "--data",
        p(&ds),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn engine_failures_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let (ds, _, _) = dataset(tmp.path());
    let lr = p(&ds.join("LR")).to_string();
    let out_dir = tmp.path().join("o");
    let run = |tmpl: &str| {
        irsr(&[
            "tta-infer",
            "--lr",
            &lr,
            "--out",
            p(&out_dir),
            "--model-cmd",
            tmpl,
            "--timeout",
            "30",
        ])
    };

    let out = run(&format!(
        "'{STUB}' --fault exit {{input_dir}} {{output_dir}}"
    ));
    assert_eq!(out.status.code(), Some(2));
    assert!(
        stderr(&out).contains("injected failure"),
        "{}",
        stderr(&out)
    );
    let out = run(&format!(
        "'{STUB}' --fault missing {{input_dir}} {{output_dir}}"
    ));
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("00000.png"), "{}", stderr(&out));

    let out = run("echo {input_dir}");
    assert_eq!(out.status.code(), Some(1), "{}", stderr(&out));
    let out = irsr(&[
        "infer",
        "--lr",
        &lr,
        "--out",
        p(&out_dir),
        "--model",
        "waifu",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("waifu"));
}

#[test]
fn pipeline_with_two_models_and_workers() {
    let tmp = tempfile::tempdir().unwrap();
    let (ds, _, _) = dataset(tmp.path());
    let run = |workers: &str| {
        Command::new(IRSR)
            .args([
                "run-pipeline",
                "--data",
                p(&ds),
                "--model",
                "bicubic",
                "--model",
                "lanczos3",
            ])
            .args([
                "--weights",
                "0.4,0.6",
                "--format",
                "csv",
                "--out",
                p(&tmp.path().join("run")),
            ])
            .env("HARNESS_WORKERS", workers)
            .output()
            .unwrap()
    };
    let one = run("1");
    assert!(one.status.success(), "{}", stderr(&one));
    assert_eq!(stdout(&one), stdout(&run("3")));
    assert!(tmp.path().join("run/SR/syn_0002_48x32.png").is_file());
    assert!(tmp.path().join("run/LR/syn_0002_48x32.png").is_file());
}
