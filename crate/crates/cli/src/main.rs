//! `meshcodec`: train, encode, decode, evaluate and self-check the mesh
//! autoencoder from the command line.
//!
//! Exit codes: 1 configuration error, 2 data error, 3 runtime failure.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use meshcodec::dataset::{load_split, SplitScheme};
use meshcodec::io::{load_mesh_auto, save_mesh, MeshFormat};
use meshcodec::model::{make_schedule, ArchitectureConfig, Checkpoint, LatentCode, Model};
use meshcodec::pool::{pool_to_target, replay_pool, unpool, PoolLayer, PoolRecordStack, PoolTarget};
use meshcodec::trainer::{evaluate, with_workers, Sample, Trainer};
use meshcodec::{Error, Mesh};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use config::CliConfig;

#[derive(Parser)]
#[command(name = "meshcodec", version, about = "Face-convolution mesh autoencoder")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON config file
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Parallel mesh workers (0: one per core)
    #[arg(long)]
    workers: Option<usize>,
    /// Print machine-readable JSON instead of text
    #[arg(long)]
    json: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Train on a dataset split
    Train {
        #[command(flatten)]
        common: Common,
        /// Dataset root
        #[arg(long)]
        data: Option<PathBuf>,
        /// shrec11 or manifold40
        #[arg(long)]
        split: Option<SplitScheme>,
        /// Output directory for checkpoints and log.csv
        #[arg(long)]
        out: PathBuf,
        /// Continue from a checkpoint
        #[arg(long)]
        resume: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        max_steps: Option<u64>,
    },
    /// Compress a mesh into a latent code file
    Encode {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rebuild a mesh from a latent code file
    Decode {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// Output mesh (.off or .obj)
        #[arg(long)]
        out: PathBuf,
    },
    /// Score reconstructions of a test set
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long, required_unless_present = "identity", conflicts_with = "identity")]
        checkpoint: Option<PathBuf>,
        /// Use a model that passes geometry through unchanged, without pooling
        #[arg(long)]
        identity: bool,
        /// Dataset root; the test split is evaluated
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        split: Option<SplitScheme>,
        /// Individual mesh files, instead of or in addition to --data
        #[arg(long = "mesh")]
        meshes: Vec<PathBuf>,
        /// Directory for report.txt and report.json
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pool a mesh down to the latent vertex floor with random features,
    /// unpool it, and check the connectivity comes back bit for bit
    Roundtrip {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
        /// Latent budget in scalars (default from config)
        #[arg(long)]
        m: Option<usize>,
        /// Number of pooling stages (default from config)
        #[arg(long)]
        stages: Option<usize>,
        /// Replay this record file instead of choosing collapses
        #[arg(long)]
        records: Option<PathBuf>,
        /// Save the record stack that was used
        #[arg(long)]
        write_records: Option<PathBuf>,
    },
}

#[derive(Debug)]
enum Failure {
    Config(String),
    Data(String),
    Runtime(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 1,
            Failure::Data(_) => 2,
            Failure::Runtime(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Data(m) | Failure::Runtime(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::Config(_) => Failure::Config(msg),
            Error::Parse { .. }
            | Error::IndexOutOfRange { .. }
            | Error::DegenerateFace { .. }
            | Error::Io { .. }
            | Error::Dataset(_)
            | Error::Format(_)
            | Error::VersionMismatch(_)
            | Error::Records(_)
            | Error::Empty(_) => Failure::Data(msg),
            Error::DegenerateGeometry(_) | Error::Shape(_) => Failure::Runtime(msg),
        }
    }
}

type Outcome = std::result::Result<(), Failure>;

fn settings(common: &Common) -> std::result::Result<CliConfig, Failure> {
    let mut cfg = CliConfig::load(common.config.as_deref())?;
    if let Some(s) = common.seed {
        cfg.training.seed = s;
    }
    if let Some(w) = common.workers {
        cfg.training.workers = w;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn report(common: &Common, text: &str, value: serde_json::Value) {
    if common.json {
        println!("{value}");
    } else {
        print!("{text}");
    }
}

fn load_checkpoint(path: &Path) -> std::result::Result<Checkpoint, Failure> {
    Ok(Checkpoint::load(path)?)
}

fn test_samples(
    cfg: &CliConfig,
    data: Option<PathBuf>,
    split: Option<SplitScheme>,
    files: Vec<PathBuf>,
) -> std::result::Result<Vec<Sample>, Failure> {
    let mut samples: Vec<Sample> = Vec::new();
    if let Some(root) = data.or_else(|| cfg.data.clone()) {
        let scheme = split.or(cfg.split).unwrap_or(SplitScheme::Shrec11);
        let s = load_split(&root, scheme, cfg.training.seed)?;
        samples.extend(s.test.into_iter().map(Sample::File));
    }
    samples.extend(files.into_iter().map(Sample::File));
    if samples.is_empty() {
        return Err(Failure::Data("no test meshes given (use --data or --mesh)".into()));
    }
    Ok(samples)
}

fn cmd_train(
    common: Common,
    data: Option<PathBuf>,
    split: Option<SplitScheme>,
    out: PathBuf,
    resume: Option<PathBuf>,
    epochs: Option<usize>,
    max_steps: Option<u64>,
) -> Outcome {
    let mut cfg = settings(&common)?;
    if let Some(e) = epochs {
        cfg.training.epochs = e;
    }
    if max_steps.is_some() {
        cfg.training.max_steps = max_steps;
    }
    let root = data
        .or_else(|| cfg.data.clone())
        .ok_or_else(|| Failure::Config("no dataset root (use --data)".into()))?;
    if !root.is_dir() {
        return Err(Failure::Data(format!("dataset root {} does not exist", root.display())));
    }
    let scheme = split.or(cfg.split).unwrap_or(SplitScheme::Shrec11);
    let ds = load_split(&root, scheme, cfg.training.seed)?;
    let train: Vec<Sample> = ds.train.into_iter().map(Sample::File).collect();
    let test: Vec<Sample> = ds.test.into_iter().map(Sample::File).collect();
    let mut trainer = match resume {
        Some(p) => Trainer::resume(load_checkpoint(&p)?, cfg.training.clone())?,
        None => Trainer::new(cfg.architecture.clone(), cfg.training.clone())?,
    };
    trainer.train(&train, &test, Some(&out))?;
    let last = trainer.log().losses().last().copied();
    report(
        &common,
        &format!(
            "trained {} steps on {} meshes; final loss {}\noutput: {}\n",
            trainer.step(),
            train.len(),
            last.map_or("n/a".into(), |l| format!("{l:.6e}")),
            out.display()
        ),
        json!({"steps": trainer.step(), "train_meshes": train.len(), "final_loss": last, "out": out}),
    );
    Ok(())
}

fn cmd_encode(common: Common, checkpoint: PathBuf, input: PathBuf, out: PathBuf) -> Outcome {
    let cfg = settings(&common)?;
    let ckpt = load_checkpoint(&checkpoint)?;
    let mesh = meshcodec::mesh::normalize_unit_sphere(&load_mesh_auto(&input)?)?;
    let code = with_workers(cfg.training.workers, || ckpt.model.encode_latent(&mesh))??;
    code.save(&out)?;
    let record_bytes = code.record_bytes()?;
    report(
        &common,
        &format!(
            "latent scalars: {} (budget {})\nbase mesh: {} vertices, {} faces\nrecord bytes: {record_bytes}\nwrote {}\n",
            code.latent_scalars(),
            ckpt.model.config.m,
            code.base_vertices.len(),
            code.base_faces.len(),
            out.display()
        ),
        json!({
            "latent_scalars": code.latent_scalars(),
            "budget": ckpt.model.config.m,
            "base_vertices": code.base_vertices.len(),
            "base_faces": code.base_faces.len(),
            "record_bytes": record_bytes,
            "out": out,
        }),
    );
    Ok(())
}

fn cmd_decode(common: Common, checkpoint: PathBuf, input: PathBuf, out: PathBuf) -> Outcome {
    let cfg = settings(&common)?;
    let ckpt = load_checkpoint(&checkpoint)?;
    let code = LatentCode::load(&input)?;
    let mesh = with_workers(cfg.training.workers, || ckpt.model.decode_latent(&code))??;
    let format = MeshFormat::from_path(&out).unwrap_or(MeshFormat::Off);
    save_mesh(&mesh, &out, format)?;
    report(
        &common,
        &format!(
            "decoded {} vertices, {} faces\nwrote {}\n",
            mesh.num_vertices(),
            mesh.num_faces(),
            out.display()
        ),
        json!({"vertices": mesh.num_vertices(), "faces": mesh.num_faces(), "out": out}),
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_eval(
    common: Common,
    checkpoint: Option<PathBuf>,
    identity: bool,
    data: Option<PathBuf>,
    split: Option<SplitScheme>,
    meshes: Vec<PathBuf>,
    out: Option<PathBuf>,
) -> Outcome {
    let cfg = settings(&common)?;
    let model = if identity {
        let arch = ArchitectureConfig {
            pooling: false,
            ..cfg.architecture.clone()
        };
        Model::identity(arch)?
    } else {
        load_checkpoint(checkpoint.as_deref().expect("clap requires a checkpoint"))?.model
    };
    let samples = test_samples(&cfg, data, split, meshes)?;
    let rep = with_workers(cfg.training.workers, || evaluate(&model, &samples))??;
    if let Some(dir) = &out {
        std::fs::create_dir_all(dir).map_err(|e| Failure::Data(format!("{}: {e}", dir.display())))?;
        let write = |name: &str, body: String| {
            let p = dir.join(name);
            std::fs::write(&p, body).map_err(|e| Failure::Data(format!("{}: {e}", p.display())))
        };
        write("report.txt", rep.to_text())?;
        write("report.json", rep.to_json())?;
    }
    report(&common, &rep.to_text(), serde_json::to_value(&rep).expect("report serializes"));
    Ok(())
}

fn random_features(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-1.0..1.0))
}

const ROUNDTRIP_CHANNELS: usize = 8;

fn cmd_roundtrip(
    common: Common,
    input: PathBuf,
    m: Option<usize>,
    stages: Option<usize>,
    records: Option<PathBuf>,
    write_records: Option<PathBuf>,
) -> Outcome {
    let cfg = settings(&common)?;
    let m = m.unwrap_or(cfg.architecture.m);
    let stages = stages.unwrap_or(cfg.architecture.stages());
    if m < 12 || stages == 0 {
        return Err(Failure::Config("need m >= 12 and at least one stage".into()));
    }
    let mesh = load_mesh_auto(&input)?;
    let seed = cfg.training.seed;
    let given = match &records {
        Some(p) => {
            let bytes = std::fs::read(p).map_err(|e| Failure::Data(format!("{}: {e}", p.display())))?;
            let stack = PoolRecordStack::from_bytes(&bytes)?;
            if stack.vertex_count as usize != mesh.num_vertices() {
                return Err(Failure::Data(format!(
                    "records describe {} vertices, mesh has {}",
                    stack.vertex_count,
                    mesh.num_vertices()
                )));
            }
            Some(stack)
        }
        None => None,
    };
    let n_stages = given.as_ref().map_or(stages, |s| s.layers.len());
    let schedule = make_schedule(mesh.num_faces(), mesh.referenced_vertex_count(), m, n_stages);

    let mut levels: Vec<Mesh> = vec![mesh.clone()];
    let mut layers: Vec<PoolLayer> = Vec::new();
    let mut text = String::new();
    let mut rows = Vec::new();
    for i in 0..n_stages {
        let cur = levels.last().unwrap();
        let x = random_features(cur.num_faces(), ROUNDTRIP_CHANNELS, seed.wrapping_add(i as u64));
        let out = match (&given, schedule.target(i)) {
            (Some(stack), _) => replay_pool(cur, &x, &stack.layers[i])?,
            (None, Some(t)) => pool_to_target(cur, &x, t)?,
            (None, None) => pool_to_target(cur, &x, PoolTarget::faces(cur.num_faces()))?,
        };
        let df = out.mesh.num_faces() as i64 - cur.num_faces() as i64;
        let dv = out.mesh.referenced_vertex_count() as i64 - cur.referenced_vertex_count() as i64;
        text.push_str(&format!(
            "stage {}: F {} -> {} (\u{394}F={df}), V {} -> {} (\u{394}V={dv}), {} collapses\n",
            i + 1,
            cur.num_faces(),
            out.mesh.num_faces(),
            cur.referenced_vertex_count(),
            out.mesh.referenced_vertex_count(),
            out.layer.records.len()
        ));
        rows.push(json!({
            "stage": i + 1,
            "faces": out.mesh.num_faces(),
            "vertices": out.mesh.referenced_vertex_count(),
            "delta_f": df,
            "delta_v": dv,
            "collapses": out.layer.records.len(),
        }));
        layers.push(out.layer);
        levels.push(out.mesh);
    }
    let stack = PoolRecordStack {
        vertex_count: mesh.num_vertices() as u32,
        layers,
    };
    if let Some(p) = &write_records {
        std::fs::write(p, stack.to_bytes()?).map_err(|e| Failure::Data(format!("{}: {e}", p.display())))?;
    }

    let mut cur = levels.pop().unwrap();
    for layer in stack.layers.iter().rev() {
        let x = random_features(cur.num_faces(), ROUNDTRIP_CHANNELS, seed);
        cur = unpool(&cur, &x, layer)?.mesh;
    }
    let ok = cur.faces() == mesh.faces();
    text.push_str(if ok {
        "connectivity restored: OK\n"
    } else {
        "connectivity restored: FAILED\n"
    });
    report(
        &common,
        &text,
        json!({"stages": rows, "restored": ok, "record_bytes": stack.to_bytes()?.len()}),
    );
    if ok {
        Ok(())
    } else {
        Err(Failure::Runtime("unpooled face matrix differs from the input".into()))
    }
}

fn run(cli: Cli) -> Outcome {
    match cli.command {
        Command::Train {
            common,
            data,
            split,
            out,
            resume,
            epochs,
            max_steps,
        } => cmd_train(common, data, split, out, resume, epochs, max_steps),
        Command::Encode {
            common,
            checkpoint,
            input,
            out,
        } => cmd_encode(common, checkpoint, input, out),
        Command::Decode {
            common,
            checkpoint,
            input,
            out,
        } => cmd_decode(common, checkpoint, input, out),
        Command::Eval {
            common,
            checkpoint,
            identity,
            data,
            split,
            meshes,
            out,
        } => cmd_eval(common, checkpoint, identity, data, split, meshes, out),
        Command::Roundtrip {
            common,
            input,
            m,
            stages,
            records,
            write_records,
        } => cmd_roundtrip(common, input, m, stages, records, write_records),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
