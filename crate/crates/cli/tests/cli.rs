use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn rl2(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rl2"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = rl2(dir, args);
    assert!(
        out.status.success(),
        "rl2 {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(dir: &Path, args: &[&str]) -> i32 {
    rl2(dir, args).status.code().expect("exit code")
}

const QUICK: &[&str] = &[
    "--epochs",
    "2",
    "--layers",
    "2",
    "--hidden",
    "16",
    "--batch-size",
    "32",
];

/// 160 clean textures plus a quickly trained checkpoint at `run/model.rl2m`.
fn fixture() -> TempDir {
    let tmp = TempDir::new().unwrap();
    ok(tmp.path(), &["synth", "--out", "clean", "--count", "160"]);
    let mut args = vec!["train", "--real", "clean", "--out", "run"];
    args.extend_from_slice(QUICK);
    ok(tmp.path(), &args);
    tmp
}

fn metric(stdout: &str, name: &str) -> f64 {
    stdout
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{name},")))
        .and_then(|rest| rest.split(',').next())
        .and_then(|v| v.parse().ok())
        .unwrap_or_else(|| panic!("no {name} row in {stdout}"))
}

#[test]
fn train_writes_checkpoint_and_report_reproducibly() {
    let tmp = fixture();
    let dir = tmp.path();
    let report = std::fs::read_to_string(dir.join("run/train_report.txt")).unwrap();
    assert!(report.contains("final_val_nll = "));
    let first = std::fs::read(dir.join("run/model.rl2m")).unwrap();
    assert_eq!(&first[..4], b"RL2M");

    let mut args = vec!["train", "--real", "clean", "--out", "again"];
    args.extend_from_slice(QUICK);
    ok(dir, &args);
    assert_eq!(first, std::fs::read(dir.join("again/model.rl2m")).unwrap());

    args.extend_from_slice(&["--seed", "9"]);
    args[4] = "other-seed";
    ok(dir, &args);
    assert_ne!(
        first,
        std::fs::read(dir.join("other-seed/model.rl2m")).unwrap()
    );
}

#[test]
fn eval_scores_identity_and_degradation_order() {
    let tmp = fixture();
    let dir = tmp.path();
    let same = ok(
        dir,
        &[
            "eval",
            "--checkpoint",
            "run/model.rl2m",
            "--real",
            "clean",
            "--eval",
            "clean",
            "--metric",
            "both",
        ],
    );
    assert!(same.starts_with("name,value,n_real,n_eval\n"));
    assert_eq!(metric(&same, "RL2"), 0.0);
    assert!(metric(&same, "FID").abs() < 1e-9);

    ok(
        dir,
        &["--seed", "3", "synth", "--out", "held", "--count", "80"],
    );
    let mut rl2_at = Vec::new();
    for (p, out) in [("0.1", "p01"), ("0.4", "p04")] {
        ok(
            dir,
            &[
                "degrade",
                "--input",
                "held",
                "--out",
                out,
                "--kind",
                "salt_pepper",
                "--severity",
                p,
            ],
        );
        let s = ok(
            dir,
            &[
                "eval",
                "--checkpoint",
                "run/model.rl2m",
                "--real",
                "clean",
                "--eval",
                out,
                "--out",
                out,
            ],
        );
        assert_eq!(
            std::fs::read_to_string(dir.join(out).join("metrics.csv")).unwrap(),
            s
        );
        rl2_at.push(metric(&s, "RL2"));
    }
    assert!(rl2_at[1] > rl2_at[0], "{rl2_at:?}");
}

#[test]
fn degrade_at_zero_copies_bytes() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    ok(dir, &["synth", "--out", "src", "--count", "5"]);
    for kind in ["blur", "salt_pepper", "rect_patch", "diffusion"] {
        let out = format!("zero-{kind}");
        ok(
            dir,
            &[
                "degrade",
                "--input",
                "src",
                "--out",
                &out,
                "--kind",
                kind,
                "--severity",
                "0",
            ],
        );
        for i in 0..5 {
            let name = format!("tex_{i:05}.png");
            assert_eq!(
                std::fs::read(dir.join("src").join(&name)).unwrap(),
                std::fs::read(dir.join(&out).join(&name)).unwrap()
            );
        }
    }
    assert_eq!(
        code(
            dir,
            &[
                "degrade",
                "--input",
                "src",
                "--out",
                "x",
                "--kind",
                "blur",
                "--severity",
                "-1"
            ]
        ),
        2
    );
    assert_eq!(
        code(
            dir,
            &[
                "degrade",
                "--input",
                "src",
                "--out",
                "x",
                "--kind",
                "smudge",
                "--severity",
                "1"
            ]
        ),
        2
    );
}

#[test]
fn filter_appends_auc_when_labels_are_given() {
    let tmp = fixture();
    let dir = tmp.path();
    ok(
        dir,
        &["--seed", "5", "synth", "--out", "test", "--count", "20"],
    );
    ok(
        dir,
        &[
            "degrade",
            "--input",
            "test",
            "--out",
            "noisy",
            "--kind",
            "salt_pepper",
            "--severity",
            "0.5",
        ],
    );
    std::fs::create_dir(dir.join("mixed")).unwrap();
    let mut labels = String::from("name,label\n");
    for i in 0..20 {
        let name = format!("tex_{i:05}.png");
        let (src, label) = if i % 2 == 0 {
            ("test", 0)
        } else {
            ("noisy", 1)
        };
        std::fs::copy(dir.join(src).join(&name), dir.join("mixed").join(&name)).unwrap();
        labels.push_str(&format!("{name},{label}\n"));
    }
    std::fs::write(dir.join("labels.csv"), labels).unwrap();

    let plain = ok(
        dir,
        &[
            "filter",
            "--checkpoint",
            "run/model.rl2m",
            "--eval",
            "mixed",
        ],
    );
    assert_eq!(plain.lines().count(), 21);
    assert!(!plain.contains("AUC"));

    let labelled = ok(
        dir,
        &[
            "filter",
            "--checkpoint",
            "run/model.rl2m",
            "--eval",
            "mixed",
            "--labels",
            "labels.csv",
            "--out",
            "filt",
        ],
    );
    let last = labelled.lines().last().unwrap();
    assert!(last.starts_with("AUC,"), "{last}");
    assert!(metric(&labelled, "AUC") > 0.9, "{labelled}");
    assert!(dir.join("filt/roc.csv").exists());
    assert_eq!(
        std::fs::read_to_string(dir.join("filt/nll.csv")).unwrap(),
        labelled
    );

    std::fs::write(dir.join("partial.csv"), "tex_00000.png,0\n").unwrap();
    assert_eq!(
        code(
            dir,
            &[
                "filter",
                "--checkpoint",
                "run/model.rl2m",
                "--eval",
                "mixed",
                "--labels",
                "partial.csv"
            ]
        ),
        2
    );
}

#[test]
fn sweep_with_only_severity_zero_is_trivially_monotone() {
    let tmp = fixture();
    let dir = tmp.path();
    let out = ok(
        dir,
        &[
            "sweep",
            "--checkpoint",
            "run/model.rl2m",
            "--real",
            "clean",
            "--kind",
            "blur",
            "--severities",
            "0",
            "--out",
            "sw",
        ],
    );
    assert_eq!(out, "kind,levels,monotone,spearman\nblur,1,true,1\n");
    let rows = std::fs::read_to_string(dir.join("sw/sweep.csv")).unwrap();
    assert!(rows.starts_with("kind,severity,rl2\nblur,0,"), "{rows}");
    assert_eq!(
        code(
            dir,
            &[
                "sweep",
                "--checkpoint",
                "run/model.rl2m",
                "--real",
                "clean",
                "--kind",
                "blur",
                "--severities",
                "0,2,1"
            ]
        ),
        2
    );
}

#[test]
fn config_file_values_and_flag_overrides() {
    let tmp = fixture();
    let dir = tmp.path();
    std::fs::create_dir(dir.join("exp")).unwrap();
    std::fs::write(
        dir.join("exp/stab.ini"),
        "# stability run\ncheckpoint = ../run/model.rl2m\nreal = ../clean\neval = ../clean\nresamples = 3\nsizes = 10, 20\n",
    )
    .unwrap();
    let from_file = ok(dir, &["--config", "exp/stab.ini", "stability"]);
    assert!(
        from_file.starts_with("n,mean_rl2,std_rl2,resamples\n10,"),
        "{from_file}"
    );
    assert_eq!(from_file.lines().count(), 3);
    let overridden = ok(
        dir,
        &["--config", "exp/stab.ini", "stability", "--sizes", "15"],
    );
    assert!(
        overridden.contains("\n15,") && overridden.lines().count() == 2,
        "{overridden}"
    );

    std::fs::write(dir.join("bad.ini"), "epoch = 3\n").unwrap();
    assert_eq!(code(dir, &["--config", "bad.ini", "stability"]), 2);
}

#[test]
fn exit_codes_distinguish_failure_classes() {
    let tmp = fixture();
    let dir = tmp.path();
    assert_eq!(
        code(dir, &["train", "--real", "missing-dir", "--out", "x"]),
        2
    );
    assert_eq!(
        code(
            dir,
            &[
                "eval",
                "--checkpoint",
                "nope.rl2m",
                "--real",
                "clean",
                "--eval",
                "clean"
            ]
        ),
        2
    );
    std::fs::write(dir.join("junk.rl2m"), b"XXXXjunk").unwrap();
    assert_eq!(
        code(
            dir,
            &[
                "eval",
                "--checkpoint",
                "junk.rl2m",
                "--real",
                "clean",
                "--eval",
                "clean"
            ]
        ),
        2
    );
    assert_eq!(code(dir, &["eval"]), 2);

    // an 8-d checkpoint against 512-d image features
    let mut small = vec!["train", "--real", "run/feat8.rl2f", "--out", "small"];
    small.extend_from_slice(QUICK);
    write_rl2f(&dir.join("run/feat8.rl2f"), 200, 8, |i| {
        ((i * 7919) % 101) as f32 / 10.0
    });
    ok(dir, &small);
    assert_eq!(
        code(
            dir,
            &[
                "eval",
                "--checkpoint",
                "small/model.rl2m",
                "--real",
                "clean",
                "--eval",
                "clean"
            ]
        ),
        4
    );

    let mut diverge = vec![
        "train",
        "--real",
        "run/feat8.rl2f",
        "--out",
        "boom",
        "--learning-rate",
        "1e200",
    ];
    diverge.extend_from_slice(QUICK);
    let out = rl2(dir, &diverge);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("epoch"));
}

fn write_rl2f(path: &Path, count: u32, dim: u32, value: impl Fn(usize) -> f32) {
    let mut bytes = b"RL2F".to_vec();
    bytes.extend_from_slice(&1u16.to_le_bytes());
    bytes.extend_from_slice(&count.to_le_bytes());
    bytes.extend_from_slice(&dim.to_le_bytes());
    for i in 0..(count * dim) as usize {
        bytes.extend_from_slice(&value(i).to_le_bytes());
    }
    let tag = b"test";
    bytes.extend_from_slice(&(tag.len() as u32).to_le_bytes());
    bytes.extend_from_slice(tag);
    std::fs::write(path, bytes).unwrap();
}
