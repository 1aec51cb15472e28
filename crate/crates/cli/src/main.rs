//! `gridsparse`: generate, sparsify and evaluate landmark maps.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gridsparse::problem::WeightScheme;
use gridsparse::{Bounds, Grid2DConfig};

use config::{Method, Mode, RunConfig};

/// Error with the process exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_INPUT: u8 = 3;
pub const EXIT_SOLVER: u8 = 4;

impl Failure {
    pub fn usage(message: String) -> Self {
        Failure { code: EXIT_USAGE, message }
    }

    pub fn input(message: String) -> Self {
        Failure { code: EXIT_INPUT, message }
    }
}

impl From<gridsparse::Error> for Failure {
    fn from(e: gridsparse::Error) -> Self {
        use gridsparse::Error as E;
        let code = match &e {
            E::Config(_) | E::GridTooLarge { .. } => EXIT_USAGE,
            E::Io { .. } | E::Parse(_) | E::Schema { .. } | E::Integrity { .. } | E::Validation(_) => {
                EXIT_INPUT
            }
            E::Numerical { .. } | E::Check(_) | E::Contract(_) | E::TooLarge(_) => EXIT_SOLVER,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

#[derive(Parser)]
#[command(name = "gridsparse", version, about = "Landmark map sparsification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic map (and optionally query views).
    Synth {
        /// Scene file (TOML, or JSON with a .json extension) with SceneSpec fields.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Write generated query views here.
        #[arg(long)]
        queries: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Select a subset of landmarks and write the compact map.
    Sparsify {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        params: ParamArgs,
        #[command(flatten)]
        limits: LimitArgs,
        /// Solve log (JSON). Defaults to the output path with a `.log.json` extension.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Also write the program in LP format.
        #[arg(long)]
        export_lp: Option<PathBuf>,
    },
    /// Replay query views against compact maps and write a CSV report.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Compact map to evaluate; repeat for several methods.
        #[arg(long, required = true)]
        compact: Vec<PathBuf>,
        /// Query file; queries are generated from the map when absent.
        #[arg(long)]
        queries: Option<PathBuf>,
        /// CSV report path; printed to stdout when absent.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Matched landmarks needed for a successful localization.
        #[arg(long)]
        inliers: Option<u32>,
        /// Queries per stratum when generating.
        #[arg(long)]
        count: Option<usize>,
        /// Also count valid 3D cells at this resolution.
        #[arg(long)]
        grid3d_res: Option<f64>,
        #[arg(long)]
        k2: Option<u32>,
        #[arg(long)]
        bounds: Option<Bounds>,
    },
    /// Time several methods over generated scenes.
    Bench {
        /// Scene file; repeat for several scenes.
        #[arg(long = "scene")]
        scenes: Vec<PathBuf>,
        /// Comma-separated methods.
        #[arg(long, value_delimiter = ',')]
        methods: Vec<Method>,
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        params: ParamArgs,
        #[command(flatten)]
        limits: LimitArgs,
    },
    /// Write the program of a method in LP format.
    ExportLp {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        params: ParamArgs,
    },
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; flags override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Input map.
    #[arg(long)]
    map: Option<PathBuf>,
    /// Output file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ParamArgs {
    #[arg(long, value_enum)]
    method: Option<Method>,
    #[arg(long)]
    k1: Option<u32>,
    #[arg(long)]
    k2: Option<u32>,
    #[arg(long)]
    lambda1: Option<f64>,
    #[arg(long)]
    lambda2: Option<f64>,
    #[arg(long)]
    lambda3: Option<f64>,
    /// Image grid as COLSxROWS.
    #[arg(long)]
    grid2d: Option<Grid2DConfig>,
    /// 3D cell size in meters; required by ours3d.
    #[arg(long)]
    grid3d_res: Option<f64>,
    /// `auto` or x0,y0,z0,x1,y1,z1.
    #[arg(long)]
    bounds: Option<Bounds>,
    /// inverse-match or uniform.
    #[arg(long)]
    weights: Option<WeightScheme>,
}

#[derive(Args)]
struct LimitArgs {
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    /// Seconds.
    #[arg(long)]
    time_limit: Option<f64>,
    /// Relative gap at which branch-and-bound stops.
    #[arg(long)]
    gap: Option<f64>,
    #[arg(long)]
    node_limit: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
}

impl Common {
    fn load(&self) -> Result<RunConfig, Failure> {
        let mut cfg = RunConfig::load(self.config.as_deref())?;
        if self.seed.is_some() {
            cfg.seed = self.seed;
        }
        if self.map.is_some() {
            cfg.paths.map.clone_from(&self.map);
        }
        if self.out.is_some() {
            cfg.paths.out.clone_from(&self.out);
        }
        Ok(cfg)
    }
}

fn set<T: Clone>(target: &mut T, value: &Option<T>) {
    if let Some(v) = value {
        *target = v.clone();
    }
}

impl ParamArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        set(&mut cfg.method, &self.method);
        let p = &mut cfg.params;
        set(&mut p.k1, &self.k1);
        set(&mut p.k2, &self.k2);
        if self.lambda1.is_some() {
            p.lambda1 = self.lambda1;
        }
        set(&mut p.lambda2, &self.lambda2);
        set(&mut p.lambda3, &self.lambda3);
        set(&mut p.grid2d, &self.grid2d);
        if self.grid3d_res.is_some() {
            p.grid3d_res = self.grid3d_res;
        }
        set(&mut p.bounds, &self.bounds);
        set(&mut p.weight_scheme, &self.weights);
    }
}

impl LimitArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        set(&mut cfg.mode, &self.mode);
        let l = &mut cfg.limits;
        if self.time_limit.is_some() {
            l.time_limit = self.time_limit;
        }
        set(&mut l.gap, &self.gap);
        if self.node_limit.is_some() {
            l.node_limit = self.node_limit;
        }
        set(&mut l.workers, &self.workers);
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Synth { spec, queries, common } => {
            let mut cfg = common.load()?;
            if let Some(s) = spec {
                cfg.paths.spec = vec![s];
            }
            if queries.is_some() {
                cfg.paths.queries = queries;
            }
            commands::synth(&cfg)
        }
        Command::Sparsify {
            common,
            params,
            limits,
            log,
            export_lp,
        } => {
            let mut cfg = common.load()?;
            params.apply(&mut cfg);
            limits.apply(&mut cfg);
            if log.is_some() {
                cfg.paths.log = log;
            }
            if export_lp.is_some() {
                cfg.paths.export_lp = export_lp;
            }
            commands::sparsify(&cfg)
        }
        Command::Eval {
            common,
            compact,
            queries,
            report,
            inliers,
            count,
            grid3d_res,
            k2,
            bounds,
        } => {
            let mut cfg = common.load()?;
            cfg.paths.compact = compact;
            if queries.is_some() {
                cfg.paths.queries = queries;
            }
            if report.is_some() {
                cfg.paths.report = report;
            }
            set(&mut cfg.eval.inliers, &inliers);
            set(&mut cfg.eval.queries_per_stratum, &count);
            if grid3d_res.is_some() {
                cfg.params.grid3d_res = grid3d_res;
            }
            set(&mut cfg.params.k2, &k2);
            set(&mut cfg.params.bounds, &bounds);
            commands::eval(&cfg)
        }
        Command::Bench {
            scenes,
            methods,
            common,
            params,
            limits,
        } => {
            let mut cfg = common.load()?;
            params.apply(&mut cfg);
            limits.apply(&mut cfg);
            if !scenes.is_empty() {
                cfg.paths.spec = scenes;
            }
            if !methods.is_empty() {
                cfg.methods = methods;
            }
            commands::bench(&cfg)
        }
        Command::ExportLp { common, params } => {
            let mut cfg = common.load()?;
            params.apply(&mut cfg);
            commands::export_lp(&cfg)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
