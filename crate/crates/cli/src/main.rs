use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sobolmda::analytic::{analytic_example1, AnalyticDecomposition, Example1Params};
use sobolmda::importance::{oob_report, tt_report, ImportanceOptions, OobContext};
use sobolmda::retrain::retrain_report;
use sobolmda::selection::{rfe, RfeOptions};
use sobolmda::simulate::{sample_gaussian, GaussianSpec};
use sobolmda::{Dataset, Error, Forest, ForestConfig, ImportanceReport, Method, Rng};

#[derive(Parser)]
#[command(name = "sobolmda", version, about = "Random forest variable importance: MDA variants, Sobol-MDA, retrain")]
struct Cli {
    /// Worker threads (default: available parallelism)
    #[arg(long, global = true, env = "SOBOLMDA_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a forest, save it as JSON and print its out-of-bag error
    Fit(FitArgs),
    /// Importance of every covariate for one or more methods
    Importance(ImportanceArgs),
    /// Simulate one of the Gaussian examples, or a spec file
    Simulate(SimulateArgs),
    /// Recursive feature elimination with cross-validated error
    Rfe(RfeArgs),
    /// Closed-form decomposition for the interaction example
    Analytic(AnalyticArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args)]
struct DataArgs {
    /// CSV file with a header row
    #[arg(long)]
    data: PathBuf,
    /// Response column: name, or 0-based index
    #[arg(long, default_value = "y")]
    target: String,
}

#[derive(Args)]
struct ForestArgs {
    /// JSON forest config; the flags below override its fields
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    trees: Option<usize>,
    #[arg(long)]
    subsample_size: Option<usize>,
    #[arg(long)]
    max_leaves: Option<usize>,
    #[arg(long)]
    min_node_size: Option<usize>,
    #[arg(long)]
    mtry: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl ForestArgs {
    fn config(&self) -> sobolmda::Result<ForestConfig> {
        let mut c = match &self.config {
            Some(path) => ForestConfig::from_json_file(path)?,
            None => ForestConfig::default(),
        };
        if let Some(v) = self.trees {
            c.n_trees = v;
        }
        if self.subsample_size.is_some() {
            c.subsample_size = self.subsample_size;
        }
        if self.max_leaves.is_some() {
            c.max_leaves = self.max_leaves;
        }
        if let Some(v) = self.min_node_size {
            c.min_node_size = v;
        }
        if self.mtry.is_some() {
            c.mtry = self.mtry;
        }
        if let Some(v) = self.gamma {
            c.gamma = v;
        }
        if let Some(v) = self.delta {
            c.delta = v;
        }
        c.seed = self.seed;
        Ok(c)
    }
}

#[derive(Args)]
struct OutputArgs {
    /// Output file (default: standard output)
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    forest: ForestArgs,
    /// Where to save the fitted forest
    #[arg(long)]
    out: PathBuf,
    /// Format of the printed summary
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Args)]
struct ImportanceArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    forest: ForestArgs,
    #[command(flatten)]
    output: OutputArgs,
    /// Comma-separated: tt, bc, bc_normalized, ik, sobol, lundberg, retrain
    #[arg(long, default_value = "sobol")]
    methods: String,
    #[arg(long, default_value_t = 1)]
    reps: usize,
    /// Divide bc by 2 V̂[Y] and ik, tt by V̂[Y], 2 V̂[Y]
    #[arg(long)]
    normalized: bool,
    /// Trees per block for ik (default: one block)
    #[arg(long)]
    ik_block_size: Option<usize>,
    /// Independent test sample, required by tt
    #[arg(long)]
    test: Option<PathBuf>,
    /// Use a saved forest instead of fitting one
    #[arg(long)]
    forest_file: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Built-in example, 1 or 2
    #[arg(long, conflicts_with = "spec", required_unless_present = "spec")]
    example: Option<u8>,
    /// GaussianSpec JSON file
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Noise share V[eps] / V[Y] for the built-in examples
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    /// Extra independent noise covariates appended to example 1
    #[arg(long, default_value_t = 0)]
    extra: usize,
    /// CSV output; a sidecar `<out>.json` records the spec and oracle
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RfeArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    forest: ForestArgs,
    #[command(flatten)]
    output: OutputArgs,
    /// One of bc, ik, sobol, retrain
    #[arg(long, alias = "method", default_value = "sobol")]
    methods: String,
    #[arg(long, default_value_t = 10)]
    folds: usize,
    #[arg(long, default_value_t = 1)]
    repeats: usize,
    /// Remove 5% of the remaining covariates per step
    #[arg(long)]
    batch: bool,
}

#[derive(Args)]
struct AnalyticArgs {
    #[arg(long, default_value_t = 1.5)]
    alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    /// Five standard deviations, comma-separated
    #[arg(long, value_delimiter = ',', num_args = 5, default_value = "1,1,1,1,1")]
    sigma: Vec<f64>,
    #[arg(long, default_value_t = 0.9, allow_hyphen_values = true)]
    rho12: f64,
    #[arg(long, default_value_t = 0.6, allow_hyphen_values = true)]
    rho45: f64,
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Failure with the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidConfig(_) | Error::UnknownMethod(_) => 2,
            _ => 1,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure {
            code: 1,
            message: e.to_string(),
        }
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure {
            code: 1,
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

type CmdResult = Result<(), Failure>;

fn open_output(out: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    match out {
        Some(p) if p != Path::new("-") => {
            let file = File::create(p).map_err(|e| Error::io(p, e))?;
            Ok(Box::new(BufWriter::new(file)))
        }
        _ => Ok(Box::new(BufWriter::new(io::stdout()))),
    }
}

fn load(args: &DataArgs) -> Result<Dataset, Failure> {
    Ok(Dataset::load_csv(&args.data, args.target.as_str())?)
}

fn parse_methods(s: &str) -> Result<Vec<Method>, Failure> {
    let methods = s
        .split(',')
        .map(|m| m.trim())
        .filter(|m| !m.is_empty())
        .map(|m| m.parse::<Method>())
        .collect::<sobolmda::Result<Vec<_>>>()?;
    if methods.is_empty() {
        return Err(usage("no importance method given"));
    }
    Ok(methods)
}

fn cmd_fit(args: FitArgs) -> CmdResult {
    let data = load(&args.data)?;
    let config = args.forest.config()?;
    let forest = Forest::fit(&data, &config)?;
    forest.save(&args.out)?;
    let oob = forest.oob_error(&data)?;
    let mut w = open_output(None)?;
    match args.format {
        Format::Json => {
            #[derive(Serialize)]
            struct Summary {
                oob_mse: f64,
                n_defined: usize,
                n_trees: usize,
            }
            let s = Summary {
                oob_mse: oob.mse,
                n_defined: oob.n_defined,
                n_trees: forest.trees().len(),
            };
            writeln!(w, "{}", serde_json::to_string_pretty(&s)?)?;
        }
        Format::Csv => {
            writeln!(w, "oob_mse,n_defined,n_trees")?;
            writeln!(w, "{},{},{}", oob.mse, oob.n_defined, forest.trees().len())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn cmd_importance(args: ImportanceArgs) -> CmdResult {
    let methods = parse_methods(&args.methods)?;
    if args.reps == 0 {
        return Err(usage("--reps must be at least 1"));
    }
    let test = match (&args.test, methods.contains(&Method::Tt)) {
        (Some(path), _) => Some(Dataset::load_csv(path, args.data.target.as_str())?),
        (None, true) => return Err(usage("method tt needs --test")),
        (None, false) => None,
    };
    let data = load(&args.data)?;
    let config = args.forest.config()?;
    let needs_oob = methods
        .iter()
        .any(|m| !matches!(m, Method::Tt | Method::Retrain));
    if needs_oob {
        config.resolve_for_oob(data.n(), data.p())?;
    }
    let forest = match &args.forest_file {
        Some(path) => Forest::load(path)?,
        None => Forest::fit(&data, &config)?,
    };
    let opts = ImportanceOptions {
        repetitions: args.reps,
        seed: args.forest.seed,
        ik_block_size: args.ik_block_size,
        normalize: args.normalized,
        keep_per_rep: false,
    };
    let ctx = if needs_oob {
        Some(OobContext::new(&forest, &data)?)
    } else {
        None
    };
    let mut reports: Vec<ImportanceReport> = Vec::new();
    for m in methods {
        let r = match m {
            Method::Tt => tt_report(&forest, test.as_ref().expect("checked above"), &opts)?,
            Method::Retrain => retrain_report(&forest, &data, &opts)?,
            _ => oob_report(ctx.as_ref().expect("checked above"), m, &opts)?,
        };
        for warning in &r.warnings {
            eprintln!("warning: {warning}");
        }
        reports.push(r);
    }
    let mut w = open_output(args.output.out.as_deref())?;
    match args.output.format {
        Format::Json => writeln!(w, "{}", serde_json::to_string_pretty(&reports)?)?,
        Format::Csv => {
            writeln!(w, "method,feature,value,std")?;
            for r in &reports {
                let mut buf = Vec::new();
                r.write_csv(&mut buf)?;
                let text = String::from_utf8(buf).expect("csv is utf-8");
                // drop the per-report header
                for line in text.lines().skip(1) {
                    writeln!(w, "{line}")?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn sidecar_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn cmd_simulate(args: SimulateArgs) -> CmdResult {
    let spec = match (args.example, &args.spec) {
        (_, Some(path)) => GaussianSpec::from_json_file(path)?,
        (Some(1), None) => GaussianSpec::example1(
            &Example1Params {
                noise_ratio: args.noise,
                ..Example1Params::default()
            },
            args.extra,
        )?,
        (Some(2), None) => GaussianSpec::example2(args.noise)?,
        (Some(e), None) => return Err(usage(format!("unknown example {e}; use 1 or 2"))),
        (None, None) => return Err(usage("give --example or --spec")),
    };
    if args.n < 2 {
        return Err(usage("--n must be at least 2"));
    }
    let data = sample_gaussian(&spec, args.n, &mut Rng::new(args.seed))?;
    data.save_csv(&args.out, "y")?;

    #[derive(Serialize)]
    struct Sidecar<'a> {
        seed: u64,
        n: usize,
        spec: &'a GaussianSpec,
        #[serde(skip_serializing_if = "Option::is_none")]
        oracle: Option<AnalyticDecomposition>,
    }
    // the closed form of the interaction model is the one worth shipping
    let oracle = match args.example {
        Some(1) if args.spec.is_none() => spec.analytic(),
        _ => None,
    };
    let sidecar = Sidecar {
        seed: args.seed,
        n: args.n,
        spec: &spec,
        oracle,
    };
    let path = sidecar_path(&args.out);
    let mut w = open_output(Some(&path))?;
    writeln!(w, "{}", serde_json::to_string_pretty(&sidecar)?)?;
    w.flush()?;
    Ok(())
}

fn cmd_rfe(args: RfeArgs) -> CmdResult {
    let methods = parse_methods(&args.methods)?;
    let [method] = methods[..] else {
        return Err(usage("rfe takes exactly one method"));
    };
    let data = load(&args.data)?;
    let config = args.forest.config()?;
    let opts = RfeOptions {
        folds: args.folds,
        repeats: args.repeats,
        batch: args.batch,
    };
    let trace = rfe(&data, &config, method, &opts, &Rng::new(args.forest.seed))?;
    let mut w = open_output(args.output.out.as_deref())?;
    match args.output.format {
        Format::Json => writeln!(w, "{}", serde_json::to_string_pretty(&trace)?)?,
        Format::Csv => trace.write_csv(&mut w)?,
    }
    w.flush()?;
    Ok(())
}

fn cmd_analytic(args: AnalyticArgs) -> CmdResult {
    let params = Example1Params {
        alpha: args.alpha,
        beta: args.beta,
        sigma: args.sigma.as_slice().try_into().map_err(|_| usage("--sigma takes 5 values"))?,
        rho12: args.rho12,
        rho45: args.rho45,
        noise_ratio: args.noise,
    };
    let d = analytic_example1(&params)?;
    let names: Vec<String> = (1..=5).map(|j| format!("x{j}")).collect();
    let mut w = open_output(args.out.as_deref())?;
    match args.format {
        Format::Json => writeln!(w, "{}", serde_json::to_string_pretty(&d)?)?,
        Format::Csv => {
            writeln!(w, "feature,mda_star,mda1,mda2,mda3,st,st_mg,bc_normalized,ik_normalized,var_y")?;
            for (j, t) in d.terms.iter().enumerate() {
                writeln!(
                    w,
                    "{},{},{},{},{},{},{},{},{},{}",
                    names[j],
                    t.mda_star,
                    t.mda1,
                    t.mda2,
                    t.mda3,
                    t.st,
                    t.st_mg,
                    d.bc_normalized(j),
                    d.ik_normalized(j),
                    d.var_y
                )?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    if let Some(t) = cli.threads {
        if t == 0 {
            eprintln!("error: --threads must be positive");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Importance(a) => cmd_importance(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Rfe(a) => cmd_rfe(a),
        Command::Analytic(a) => cmd_analytic(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
