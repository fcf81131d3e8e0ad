use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use vembeam_experiment::commands::{self, ConvergenceSettings};
use vembeam_experiment::{DatasetConfig, Result};

#[derive(Parser)]
#[command(
    name = "vembeam",
    version,
    about = "VEM frame solver and neural surrogate experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a frame description with the VEM solver.
    Solve {
        #[arg(long)]
        model_file: PathBuf,
        /// Element order applied to every member.
        #[arg(long)]
        order: Option<usize>,
        /// Element count applied to every member.
        #[arg(long)]
        elems_per_edge: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sample materials, solve porticos and write train/test JSONL files.
    GenDataset {
        /// Dataset configuration (JSON); defaults are used when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 80)]
        n_train: usize,
        #[arg(long, default_value_t = 20)]
        n_test: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        order: Option<usize>,
        #[arg(long)]
        elems_per_edge: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the surrogate on a dataset file.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        /// Training configuration (JSON).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// History CSV; defaults to `<out>.history.csv`.
        #[arg(long)]
        history: Option<PathBuf>,
    },
    /// H¹ error of a trained surrogate on a dataset file.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        report: PathBuf,
    },
    /// Error curves over element orders and mesh sizes.
    Convergence {
        #[arg(long, value_delimiter = ',', default_value = "4,5")]
        orders: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "24,48,96,192,384")]
        elems: Vec<usize>,
        #[arg(long)]
        dataset_config: Option<PathBuf>,
        #[arg(long)]
        train_config: Option<PathBuf>,
        #[arg(long, default_value_t = 80)]
        n_train: usize,
        #[arg(long, default_value_t = 20)]
        n_test: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Solve {
            model_file,
            order,
            elems_per_edge,
            out,
        } => {
            let file = commands::solve(&model_file, order, elems_per_edge, &out)?;
            eprintln!(
                "solved {} DOFs, relative residual {:.3e}",
                file.solution.dofs.len(),
                file.solution.residual_norm / file.solution.load_norm.max(f64::MIN_POSITIVE)
            );
        }
        Command::GenDataset {
            config,
            n_train,
            n_test,
            seed,
            order,
            elems_per_edge,
            out,
        } => {
            let base = commands::load_dataset_config(config.as_deref())?;
            let config = DatasetConfig {
                order: order.unwrap_or(base.order),
                elems_per_edge: elems_per_edge.unwrap_or(base.elems_per_edge),
                ..base
            };
            let data = commands::gen_dataset(&config, n_train, n_test, seed, &out)?;
            eprintln!(
                "wrote {} train and {} test records ({} rejected draws)",
                data.train.len(),
                data.test.len(),
                data.manifest.rejected_draws
            );
        }
        Command::Train {
            dataset,
            config,
            out,
            history,
        } => {
            commands::train(&dataset, config.as_deref(), &out, history.as_deref())?;
        }
        Command::Eval { model, dataset, report } => {
            let r = commands::eval(&model, &dataset, &report)?;
            for c in &r.configurations {
                eprintln!(
                    "order {} / {} elems: H1 mean {:.4e} std {:.4e}, relative mean {:.4e}",
                    c.order, c.elems_per_edge, c.h1_mean, c.h1_std, c.relative_mean
                );
            }
        }
        Command::Convergence {
            orders,
            elems,
            dataset_config,
            train_config,
            n_train,
            n_test,
            seed,
            out,
        } => {
            let settings = ConvergenceSettings {
                base: commands::load_dataset_config(dataset_config.as_deref())?,
                training: commands::load_train_file(train_config.as_deref())?,
                n_train,
                n_test,
                seed,
            };
            let rows = commands::convergence(&orders, &elems, &settings, &out)?;
            let failed = rows.iter().filter(|r| r.status != "ok").count();
            if failed > 0 {
                eprintln!(
                    "{failed} of {} configurations failed; see {}",
                    rows.len(),
                    out.display()
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
