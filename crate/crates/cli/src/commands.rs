use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use duoflow::ablation::{run_ablation, AblationEvent};
use duoflow::diffengine::primitive_grad_errors;
use duoflow::duomodel::{model_grad_check, Checkpoint, ModelError, ModelParams};
use duoflow::evalkit::{write_metrics_csv, METRICS_HEADER};
use duoflow::flowmatch::FlowError;
use duoflow::physworld::{export_pgm_frames, make_dataset, read_dataset, PhysStateSeq, WorldError};
use duoflow::pipeline::{clips_from_dataset, decode_sample, evaluate_heldout_clip, sample_clip, PipelineError};
use duoflow::trainer::{train_loop_observed, TrainError};

use crate::config::{ConfigError, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "duoflow", version, about = "Dual-branch video/physics flow matching on a bouncing-ball world")]
pub struct Cli {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long, short, global = true)]
    pub config: Option<PathBuf>,
    /// Dotted override such as `train.steps=200`; repeatable.
    #[arg(long = "set", short = 's', global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Print the resolved configuration as TOML and exit.
    #[arg(long, global = true)]
    pub print_config: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate, render and write the training dataset.
    GenData,
    /// Train from the dataset, writing the loss log and checkpoint.
    Train,
    /// Sample one dataset clip and write frames, raw video and states.
    Sample {
        #[arg(long, default_value_t = 0)]
        record: usize,
    },
    /// Score the checkpoint on regenerated held-out clips.
    Eval,
    /// Finite-difference checks of every primitive and of the full model.
    Gradcheck {
        #[arg(long, default_value_t = 100)]
        seeds: u64,
    },
    /// Dual-branch versus zero-coupling comparison across seeds.
    Ablate,
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numeric(String),
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Other(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration: {m}"),
            CliError::Numeric(m) => write!(f, "numeric abort: {m}"),
            CliError::Other(m) => f.write_str(m),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.0)
    }
}

impl From<WorldError> for CliError {
    fn from(e: WorldError) -> Self {
        match e {
            WorldError::InvalidConfig(m) => CliError::Config(m),
            e => CliError::Other(e.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::InvalidConfig(_) | ModelError::Divisibility { .. } => CliError::Config(e.to_string()),
            e => CliError::Other(e.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::NonFinite { .. } => CliError::Numeric(e.to_string()),
            TrainError::InvalidConfig(m) => CliError::Config(m),
            e => CliError::Other(e.to_string()),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Train(t) => t.into(),
            PipelineError::World(w) => w.into(),
            PipelineError::Model(m) => m.into(),
            PipelineError::Flow(FlowError::NonFinite { step }) => {
                CliError::Numeric(format!("sampler state became non-finite at step {step}"))
            }
            e => CliError::Other(e.to_string()),
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Other(format!("{}: {e}", path.display()))
}

fn ensure_parent(path: &Path) -> Result<(), CliError> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => fs::create_dir_all(dir).map_err(|e| io_err(dir, e)),
        _ => Ok(()),
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    ensure_parent(path)?;
    fs::write(path, bytes).map_err(|e| io_err(path, e))
}

fn load_params(cfg: &RunConfig) -> Result<ModelParams, CliError> {
    let params = Checkpoint::load(&cfg.paths.checkpoint)?.params;
    if params.config() != &cfg.model {
        return Err(CliError::Config(format!(
            "{} was trained with a different model configuration",
            cfg.paths.checkpoint.display()
        )));
    }
    Ok(params)
}

pub fn states_csv(states: &PhysStateSeq) -> String {
    let mut s = String::from("frame,ball,x,y,vx,vy,radius,active\n");
    for (t, frame) in states.frames().iter().enumerate() {
        for (i, b) in frame.iter().enumerate() {
            s.push_str(&format!(
                "{t},{i},{:?},{:?},{:?},{:?},{:?},{}\n",
                b.x, b.y, b.vx, b.vy, b.radius, b.active as u8
            ));
        }
    }
    s
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = RunConfig::load(cli.config.as_deref(), &cli.overrides)?;
    if cli.print_config {
        print!("{}", cfg.to_toml());
        return Ok(());
    }
    match &cli.command {
        Command::GenData => gen_data(&cfg),
        Command::Train => train(&cfg),
        Command::Sample { record } => sample(&cfg, *record),
        Command::Eval => eval(&cfg),
        Command::Gradcheck { seeds } => gradcheck(*seeds),
        Command::Ablate => ablate(&cfg),
    }
}

fn gen_data(cfg: &RunConfig) -> Result<(), CliError> {
    ensure_parent(&cfg.paths.dataset)?;
    let h = make_dataset(&cfg.world, &cfg.data, &cfg.paths.dataset)?;
    println!(
        "wrote {} clips of {} frames ({}x{}) to {}",
        h.records,
        h.frames,
        h.height,
        h.width,
        cfg.paths.dataset.display()
    );
    Ok(())
}

fn train(cfg: &RunConfig) -> Result<(), CliError> {
    let ds = read_dataset(&cfg.paths.dataset)?;
    if (ds.header.height as usize, ds.header.width as usize) != (cfg.world.height, cfg.world.width) {
        return Err(CliError::Config("dataset frame size differs from world".into()));
    }
    let clips = clips_from_dataset(&ds, &cfg.world, cfg.model.patch)?;
    let params = match &cfg.paths.init_checkpoint {
        Some(p) => {
            let params = Checkpoint::load(p)?.params;
            if params.config() != &cfg.model {
                return Err(CliError::Config(format!("{} does not match [model]", p.display())));
            }
            params
        }
        None => ModelParams::init(&cfg.model, cfg.train.seed)?,
    };
    ensure_parent(&cfg.paths.checkpoint)?;
    ensure_parent(&cfg.paths.log)?;
    let train = duoflow::trainer::TrainConfig {
        checkpoint_path: Some(cfg.paths.checkpoint.clone()),
        log_path: Some(cfg.paths.log.clone()),
        ..cfg.train.clone()
    };
    let every = (train.steps / 20).max(1);
    let start = std::time::Instant::now();
    let out = train_loop_observed(&clips, params, &train, |r| {
        if r.step % every == 0 || r.step + 1 == train.steps {
            eprintln!(
                "step {:>6}  L_v {:.5}  L_z {:.5}  alpha_z {:.4}  |g_z| {:.4}  resets {}",
                r.step, r.l_v, r.l_z, r.alpha_z, r.grad_norm_z, r.reset_count
            );
        }
    })?;
    println!(
        "trained {} steps in {:.1} s, {} schedule resets; checkpoint {}",
        out.log.len(),
        start.elapsed().as_secs_f64(),
        out.schedule.reset_count,
        cfg.paths.checkpoint.display()
    );
    Ok(())
}

fn sample(cfg: &RunConfig, record: usize) -> Result<(), CliError> {
    let params = load_params(cfg)?;
    let ds = read_dataset(&cfg.paths.dataset)?;
    let rec = ds
        .records
        .get(record)
        .ok_or_else(|| CliError::Other(format!("dataset has {} records, asked for {record}", ds.records.len())))?;
    let clip = duoflow::pipeline::clip_from_record(rec, &cfg.world, cfg.model.patch)?;
    let latent = sample_clip(&params, &clip, &cfg.sample)?;
    let (frames, states) = decode_sample(&latent, &cfg.world, cfg.model.patch)?;
    let dir = &cfg.paths.samples;
    export_pgm_frames(&frames, dir)?;
    let raw: Vec<u8> = frames.data().iter().flat_map(|v| v.to_le_bytes()).collect();
    write_file(&dir.join("video.f32"), &raw)?;
    write_file(&dir.join("states.csv"), states_csv(&states).as_bytes())?;
    println!(
        "sampled record {record}: {} frames ({} conditioning) to {}",
        frames.len(),
        cfg.sample.cond_frames,
        dir.display()
    );
    Ok(())
}

fn eval(cfg: &RunConfig) -> Result<(), CliError> {
    let params = load_params(cfg)?;
    let heldout = duoflow::physworld::DataConfig {
        sequences: cfg.eval.heldout_sequences,
        seed: cfg.eval.heldout_seed,
        ..cfg.data.clone()
    };
    let rows = (0..heldout.sequences)
        .map(|i| {
            evaluate_heldout_clip(&params, &cfg.world, &heldout, i, &cfg.sample, cfg.eval.tau)
                .map(|m| (format!("heldout_{i}"), m))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut buf = Vec::new();
    write_metrics_csv(&mut buf, &rows).expect("in-memory write");
    write_file(&cfg.paths.metrics, &buf)?;
    let text = String::from_utf8(buf).expect("utf-8 csv");
    println!("{METRICS_HEADER}");
    println!("{}", text.lines().last().unwrap_or(""));
    Ok(())
}

fn gradcheck(seeds: u64) -> Result<(), CliError> {
    let mut ok = true;
    let errors = primitive_grad_errors(0..seeds.max(1), 1e-5).map_err(|e| CliError::Other(e.to_string()))?;
    for (name, err) in &errors {
        let pass = *err < 1e-6;
        ok &= pass;
        println!("{:<14} {err:.3e} {}", name, if pass { "ok" } else { "FAIL" });
    }
    let worst = model_grad_check(0, 1e-5)?;
    let pass = worst < 1e-5;
    ok &= pass;
    println!("{:<14} {worst:.3e} {}", "dual-model", if pass { "ok" } else { "FAIL" });
    if ok {
        Ok(())
    } else {
        Err(CliError::Numeric("gradient check exceeded tolerance".into()))
    }
}

fn ablate(cfg: &RunConfig) -> Result<(), CliError> {
    let report = run_ablation(
        &cfg.world,
        &cfg.data,
        &cfg.model,
        &cfg.train,
        &cfg.sample,
        &cfg.ablate,
        |e| match e {
            AblationEvent::Stage { seed, stage } => eprintln!("seed {seed}: {stage}"),
            AblationEvent::Step { record, .. } if record.step % 500 == 0 => eprintln!(
                "  step {:>5}  L_v {:.5}  L_z {:.5}  alpha_z {:.4}",
                record.step, record.l_v, record.l_z, record.alpha_z
            ),
            AblationEvent::Step { .. } => {}
        },
    )?;
    write_file(&cfg.paths.ablation, report.to_csv().as_bytes())?;
    let per_clip = cfg.paths.ablation.with_extension("clips.csv");
    let mut buf = Vec::new();
    writeln!(buf, "seed,arm,{}", METRICS_HEADER).expect("in-memory write");
    for s in &report.seeds {
        for a in [&s.dual, &s.zero] {
            for (i, m) in a.per_clip.iter().enumerate() {
                writeln!(buf, "{},{},{}", s.seed, a.arm.name(), m.csv_row(&format!("heldout_{i}"))).expect("in-memory write");
            }
        }
    }
    write_file(&per_clip, &buf)?;
    print!("{}", report.table());
    println!("criterion {}", if report.passes() { "met" } else { "not met" });
    Ok(())
}
