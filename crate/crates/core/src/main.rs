use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use gcnn::checkpoint::{load_checkpoint, save_checkpoint};
use gcnn::checks::{bench_gconv, equivariance_suite, gradient_suite, BenchRow, GradientCheck, Values};
use gcnn::data::{dataset_file, load_amat, split_train_valid, LabeledDataset, TEST_FILE, TRAIN_SIZE, TRAIN_VALID_FILE};
use gcnn::model::{build_model, ModelName};
use gcnn::train::{evaluate, train, DatasetInfo, OptimizerState, RunManifest, TrainConfig};
use gcnn::{Error, GroupId};

const EXIT_FAILED: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_IO: u8 = 3;
const ADJOINT_TOLERANCE: f64 = 1e-10;

#[derive(Parser)]
#[command(name = "gcnn", version, about = "Group-equivariant CNNs on Z2, p4 and p4m")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model on rotated MNIST and write a checkpoint.
    Train(TrainArgs),
    /// Report the error rate of a checkpoint on the validation or test split.
    Eval(EvalArgs),
    /// Run property suites.
    #[command(subcommand)]
    Check(CheckCommand),
    /// Time the convolution paths.
    #[command(subcommand)]
    Bench(BenchCommand),
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    model: String,
    /// Directory holding the rotated-MNIST `.amat` files.
    #[arg(long, env = "GCNN_DATA_DIR")]
    data: PathBuf,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long, default_value_t = 128)]
    batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Run manifest path; defaults to the checkpoint path with `.json` appended.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Train on the first N training items only.
    #[arg(long)]
    train_size: Option<usize>,
    /// Validate on the first N validation items only.
    #[arg(long)]
    valid_size: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Split {
    Valid,
    Test,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long, env = "GCNN_DATA_DIR")]
    data: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    split: Split,
    #[arg(long, default_value_t = 256)]
    batch_size: usize,
}

#[derive(Subcommand)]
enum CheckCommand {
    /// Equivariance identities on random inputs.
    Equivariance {
        #[arg(long, default_value = "p4", value_parser = parse_group)]
        group: GroupId,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Backward passes against finite differences.
    Gradients {
        #[arg(long, default_value_t = 10)]
        trials: usize,
        #[arg(long, default_value_t = 1e-5)]
        tol: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Subcommand)]
enum BenchCommand {
    /// Direct, fast and planar G-correlation timings as CSV.
    Gconv {
        #[arg(long, default_value = "p4", value_parser = parse_group)]
        group: GroupId,
        /// Comma-separated input sizes.
        #[arg(long, value_delimiter = ',', default_value = "8,16,28")]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 10)]
        k_in: usize,
        #[arg(long, default_value_t = 10)]
        k_out: usize,
        #[arg(long, default_value_t = 3)]
        n: usize,
        #[arg(long, default_value_t = 5)]
        reps: usize,
    },
}

fn parse_group(s: &str) -> Result<GroupId, String> {
    GroupId::parse(s).ok_or_else(|| format!("unknown group `{s}` (expected z2, p4 or p4m)"))
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io { .. }
        | Error::Format(_)
        | Error::Version { .. }
        | Error::Parse { .. }
        | Error::Range { .. }
        | Error::SizeMismatch { .. } => EXIT_IO,
        Error::UnknownModel(_) | Error::InvalidArgument(_) => EXIT_USAGE,
        _ => EXIT_FAILED,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(args) => run_train(args),
        Command::Eval(args) => run_eval(args),
        Command::Check(CheckCommand::Equivariance {
            group,
            trials,
            tol,
            seed,
        }) => run_equivariance(group, trials, tol, seed),
        Command::Check(CheckCommand::Gradients { trials, tol, seed }) => run_gradients(trials, tol, seed),
        Command::Bench(BenchCommand::Gconv {
            group,
            sizes,
            k_in,
            k_out,
            n,
            reps,
        }) => run_bench(group, &sizes, k_in, k_out, n, reps),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// Train/validation sets from the train_valid file. A standard 12000-item
/// file is split 10000/2000; `--train-size`/`--valid-size` then take
/// prefixes. Any other file needs both sizes and is cut in file order.
fn training_data(args: &TrainArgs) -> gcnn::Result<(LabeledDataset, LabeledDataset)> {
    let all = load_amat(dataset_file(&args.data, TRAIN_VALID_FILE)?)?;
    let (train, valid) = match split_train_valid(&all) {
        Ok(split) => split,
        Err(e) => match (args.train_size, args.valid_size) {
            (Some(t), Some(v)) if t + v <= all.len() => (all.slice(0, t)?, all.slice(t, t + v)?),
            _ => return Err(e),
        },
    };
    let train = match args.train_size {
        Some(n) if n < train.len() => train.slice(0, n)?,
        _ => train,
    };
    let valid = match args.valid_size {
        Some(n) if n < valid.len() => valid.slice(0, n)?,
        _ => valid,
    };
    Ok((train, valid))
}

fn run_train(args: TrainArgs) -> gcnn::Result<u8> {
    let name = ModelName::parse(&args.model)?;
    let (train_set, valid_set) = training_data(&args)?;
    let config = TrainConfig {
        epochs: args.epochs,
        batch_size: args.batch_size,
        lr: args.lr,
        seed: args.seed,
        ..TrainConfig::default()
    };
    let mut model = build_model::<f32>(name.as_str(), args.seed)?;
    let mut optimizer = OptimizerState::new(&model, config.adam());
    println!(
        "model={name} parameters={} train={} valid={}",
        model.parameter_count(),
        train_set.len(),
        valid_set.len()
    );
    let mut best = f64::INFINITY;
    let mut selected = None;
    let mut clock = Instant::now();
    let epochs = train(&mut model, &mut optimizer, &train_set, Some(&valid_set), &config, |m, model, opt| {
        let err = m.valid_error.unwrap_or(f64::NAN);
        println!(
            "epoch={} lr={} train_loss={:.6} valid_error={:.4} seconds={:.1}",
            m.epoch + 1,
            m.lr,
            m.train_loss,
            err,
            clock.elapsed().as_secs_f64()
        );
        clock = Instant::now();
        if err < best {
            best = err;
            selected = Some(m.epoch);
            save_checkpoint(model, Some(opt), &args.out)?;
        }
        Ok(())
    })?;
    if selected.is_none() {
        save_checkpoint(&model, Some(&optimizer), &args.out)?;
    }
    let manifest = RunManifest {
        model: name.to_string(),
        parameters: model.parameter_count(),
        config,
        loss: "mean softmax cross-entropy".into(),
        dropout: match name {
            ModelName::P4cnn => 0.0,
            _ => 0.3,
        },
        batch_norm: "conv -> batch norm -> relu; momentum 0.1, eps 1e-5".into(),
        split_rule: format!("file order: first {TRAIN_SIZE} train, last 2000 valid"),
        datasets: vec![
            DatasetInfo {
                role: "train".into(),
                items: train_set.len(),
                sha256: train_set.hash().to_string(),
            },
            DatasetInfo {
                role: "valid".into(),
                items: valid_set.len(),
                sha256: valid_set.hash().to_string(),
            },
        ],
        epochs,
        selected_epoch: selected,
    };
    let manifest_path = args.manifest.unwrap_or_else(|| with_suffix(&args.out, ".json"));
    manifest.write(&manifest_path)?;
    println!("checkpoint={} manifest={}", args.out.display(), manifest_path.display());
    Ok(0)
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn run_eval(args: EvalArgs) -> gcnn::Result<u8> {
    let mut model = load_checkpoint(&args.ckpt)?.model;
    let data = match args.split {
        Split::Valid => split_train_valid(&load_amat(dataset_file(&args.data, TRAIN_VALID_FILE)?)?)?.1,
        Split::Test => load_amat(dataset_file(&args.data, TEST_FILE)?)?,
    };
    let err = evaluate(&mut model, &data, args.batch_size)?;
    println!("error_rate={err}");
    Ok(0)
}

fn run_equivariance(group: GroupId, trials: usize, tol: f64, seed: u64) -> gcnn::Result<u8> {
    let start = Instant::now();
    let mut ok = true;
    println!("{:<34} {:<8} {:>6} {:>14}  result", "identity", "values", "trials", "max_violation");
    for values in [Values::Integer, Values::Real] {
        for r in equivariance_suite(group, trials, values, seed)? {
            // integer inputs admit no rounding at all
            let limit = if values == Values::Integer { 0.0 } else { tol };
            let pass = r.max_violation <= limit;
            ok &= pass;
            println!(
                "{:<34} {:<8} {:>6} {:>14.3e}  {}",
                r.name,
                values.name(),
                r.trials,
                r.max_violation,
                if pass { "PASS" } else { "FAIL" }
            );
        }
    }
    println!("group={group} seconds={:.2}", start.elapsed().as_secs_f64());
    Ok(if ok { 0 } else { EXIT_FAILED })
}

fn run_gradients(trials: usize, tol: f64, seed: u64) -> gcnn::Result<u8> {
    let start = Instant::now();
    let mut ok = true;
    println!("{:<52} {:<10} {:>12}  result", "check", "kind", "max_error");
    for r in gradient_suite(trials, seed)? {
        let (kind, limit) = match r.check {
            GradientCheck::FiniteDifference => ("fd", tol),
            GradientCheck::Adjoint => ("adjoint", ADJOINT_TOLERANCE),
        };
        let pass = r.max_error <= limit;
        ok &= pass;
        println!(
            "{:<52} {:<10} {:>12.3e}  {}",
            r.name,
            kind,
            r.max_error,
            if pass { "PASS" } else { "FAIL" }
        );
    }
    println!("trials={trials} seconds={:.2}", start.elapsed().as_secs_f64());
    Ok(if ok { 0 } else { EXIT_FAILED })
}

fn run_bench(group: GroupId, sizes: &[usize], k_in: usize, k_out: usize, n: usize, reps: usize) -> gcnn::Result<u8> {
    let rows = bench_gconv(group, sizes, k_in, k_out, n, reps)?;
    println!("{}", BenchRow::CSV_HEADER);
    for r in &rows {
        println!("{}", r.csv());
    }
    for r in rows.iter().filter(|r| r.overhead() > 4.0) {
        eprintln!(
            "warning: {} {} H={} fast path is {:.1}x the planar correlation",
            r.group,
            r.kind.name(),
            r.height,
            r.overhead()
        );
    }
    Ok(0)
}
