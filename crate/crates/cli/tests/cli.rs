use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use duoflow_cli::{apply_override, RunConfig};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_duoflow"))
}

fn run(args: &[&str], dir: &Path) -> Output {
    bin().args(args).current_dir(dir).output().expect("spawn duoflow")
}

fn scratch(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("duoflow-cli-{name}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&d);
    std::fs::create_dir_all(&d).unwrap();
    d
}

const TINY: &str = r#"
[world]
height = 8
width = 8
radius_range = [1.0, 1.5]
init_x = [0.0, 8.0]
init_y = [0.0, 4.0]
init_vx = [-5.0, 5.0]
init_vy = [-2.5, 2.5]

[data]
sequences = 4
frames = 6

[model]
d = 16
depth = 2
heads = 2
patch = 4
height = 8
width = 8
max_tokens = 24
mlp_ratio = 2

[train]
batch_size = 2
micro_batch = 2
steps = 4

[sample]
steps = 3
cond_frames = 2

[eval]
heldout_sequences = 2
"#;

#[test]
fn defaults_round_trip_through_print_config() {
    let cfg = RunConfig::from_toml("", &[]).unwrap();
    let text = cfg.to_toml();
    assert!(text.contains("# unset: model.cross_depths"));
    assert_eq!(RunConfig::from_toml(&text, &[]).unwrap(), cfg);

    let dir = scratch("print");
    let out = run(&["--print-config", "gen-data"], &dir);
    assert!(out.status.success());
    assert_eq!(String::from_utf8(out.stdout).unwrap(), text);
}

#[test]
fn overrides_apply_at_any_depth() {
    let cfg = RunConfig::from_toml(
        "",
        &[
            "train.optimizer.learning_rate=0.001".into(),
            "train.regime=freeze-video".into(),
            "model.cross_depths=[0, 3]".into(),
            "paths.init_checkpoint=run/start.phck".into(),
        ],
    )
    .unwrap();
    assert_eq!(cfg.train.optimizer.learning_rate, 1e-3);
    assert_eq!(cfg.train.regime, duoflow::trainer::Regime::FreezeVideo);
    assert_eq!(cfg.model.cross_depths, Some(vec![0, 3]));
    assert_eq!(cfg.paths.init_checkpoint, Some("run/start.phck".into()));
    let text = cfg.to_toml();
    assert_eq!(RunConfig::from_toml(&text, &[]).unwrap(), cfg);

    let mut t = toml::Table::new();
    assert!(apply_override(&mut t, "no_equals_sign").is_err());
    assert!(apply_override(&mut t, "a..b=1").is_err());
}

#[test]
fn configuration_errors_exit_with_code_2() {
    let dir = scratch("bad");
    for bad in [
        "[model]\nwidth_typo = 3\n",
        "[model]\nphysics_dim = 7\n",
        "[model]\nheight = 16\nwidth = 16\nmax_tokens = 512\n",
        "[world]\nbogus = 1\n",
        "[sample]\ncond_frames = 40\n",
    ] {
        std::fs::write(dir.join("bad.toml"), bad).unwrap();
        let out = run(&["-c", "bad.toml", "gen-data"], &dir);
        assert_eq!(out.status.code(), Some(2), "{bad}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let out = run(&["-s", "train.steps=0", "train"], &dir);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_dataset_is_a_plain_failure() {
    let dir = scratch("missing");
    std::fs::write(dir.join("tiny.toml"), TINY).unwrap();
    let out = run(&["-c", "tiny.toml", "train"], &dir);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn gradcheck_passes() {
    let dir = scratch("grad");
    let out = run(&["gradcheck", "--seeds", "20"], &dir);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(out.status.success(), "{text}");
    assert!(text.contains("dual-model"));
    assert!(!text.contains("FAIL"));
}

fn pipeline(dir: &Path) -> Vec<(String, Vec<u8>)> {
    std::fs::write(dir.join("tiny.toml"), TINY).unwrap();
    for cmd in ["gen-data", "train", "sample", "eval"] {
        let out = run(&["-c", "tiny.toml", cmd], dir);
        assert!(out.status.success(), "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let mut files = Vec::new();
    let mut stack = vec![dir.join("run")];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                files.push((p.strip_prefix(dir).unwrap().display().to_string(), std::fs::read(&p).unwrap()));
            }
        }
    }
    files.sort();
    files
}

#[test]
fn full_pipeline_is_byte_reproducible() {
    let a = pipeline(&scratch("pipe-a"));
    let b = pipeline(&scratch("pipe-b"));
    let names: Vec<&str> = a.iter().map(|(n, _)| n.as_str()).collect();
    for want in ["run/data.phnt", "run/model.phck", "run/train_log.csv", "run/metrics.csv", "run/samples/video.f32", "run/samples/states.csv", "run/samples/frame_0000.pgm"] {
        assert!(names.contains(&want), "{want} missing from {names:?}");
    }
    assert_eq!(a, b);
    let states = &a.iter().find(|(n, _)| n == "run/samples/states.csv").unwrap().1;
    assert!(String::from_utf8_lossy(states).starts_with("frame,ball,x,y,vx,vy,radius,active"));
}
