use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use ultragen::coalsim::{
    caterpillar_r0, convergence_experiment, simulate_kingman, simulate_moran, tree_from_coalescent, AncestryGrid,
    ExperimentConfig, PartitionPath,
};
use ultragen::gen::{random_identifiable, random_tree, TreeSpec};
use ultragen::measures::{gp_upper_bound, gwa_distance_surrogate, nu2, prohorov_bracket, AtomicMeasure1D, GpStrategy};
use ultragen::profiles::{skorohod_distance, ProfilePath, SkorohodOptions};
use ultragen::reconstruct::{tree_from_nu2, tree_from_path, ReconstructOptions, ReconstructionTrace};
use ultragen::rng::stream_id;
use ultragen::umspace::{MergeTree, TreeFile, UltrametricMatrixSpace, SCHEMA};

#[derive(Parser)]
#[command(name = "ultragen", version, about = "Family-size decompositions, reconstruction and coalescent simulation for ultrametric measure trees")]
struct Cli {
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[arg(long, global = true, default_value_t = 1e-9)]
    tol: f64,
    /// Output directory; results go to stdout when absent.
    #[arg(long, global = true, env = "ULTRAGEN_OUT")]
    out: Option<PathBuf>,
    /// Worker threads for replications (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a tree.
    Gen {
        #[arg(long, value_enum, default_value_t = GenKind::RandomIdentifiable)]
        kind: GenKind,
        #[arg(long, default_value_t = 8)]
        n: usize,
        /// Distance matrix CSV (for `from-matrix`).
        #[arg(long)]
        matrix: Option<PathBuf>,
    },
    /// Family-size decomposition path of a tree.
    Decompose {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Distance between two trees.
    Dist {
        #[arg(long, value_enum)]
        kind: DistKind,
        #[arg(long)]
        a: PathBuf,
        /// Second tree; defaults to the coarsening of `a` at `--psi`.
        #[arg(long)]
        b: Option<PathBuf>,
        #[arg(long)]
        psi: Option<f64>,
        /// Depth for `l1-profile`.
        #[arg(long)]
        h: Option<f64>,
    },
    /// Rebuild a tree from its decomposition path or from ν².
    Reconstruct {
        #[arg(long, value_enum)]
        from: Source,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = 2_000_000)]
        budget: usize,
        /// Skip the identifiability precheck.
        #[arg(long)]
        lax: bool,
    },
    /// Tree-valued Moran model or Kingman coalescent replications.
    Simulate {
        #[arg(value_enum)]
        model: Model,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 1.0)]
        t: f64,
        #[arg(long, default_value_t = 1)]
        reps: usize,
    },
    /// Family sizes of coupled coalescent trees for growing populations.
    ConvergenceExperiment {
        #[arg(long, value_delimiter = ',', default_values_t = [10, 50, 100])]
        populations: Vec<usize>,
        #[arg(long, default_value_t = 1.0)]
        t: f64,
        #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.5, 1.0])]
        depths: Vec<f64>,
        #[arg(long, default_value_t = 100)]
        reps: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum GenKind {
    RandomIdentifiable,
    RandomBinary,
    FromMatrix,
}

#[derive(Clone, Copy, ValueEnum)]
enum DistKind {
    L1Profile,
    Skorohod,
    ProhorovNu2,
    GpBound,
    GwaSurrogate,
}

#[derive(Clone, Copy, ValueEnum)]
enum Source {
    Path,
    Nu2,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Model {
    Moran,
    Kingman,
}

#[derive(Debug)]
enum CliError {
    Lib(ultragen::Error),
    Io(PathBuf, std::io::Error),
    Usage(String),
}

impl From<ultragen::Error> for CliError {
    fn from(e: ultragen::Error) -> Self {
        CliError::Lib(e)
    }
}

impl CliError {
    fn code(&self) -> u8 {
        use ultragen::Error as E;
        match self {
            CliError::Lib(E::AmbiguousMatch(_) | E::MultipleCompletions(_)) => 3,
            CliError::Lib(E::BudgetExceeded(_)) => 4,
            CliError::Lib(E::Io(_)) | CliError::Io(..) => 1,
            CliError::Lib(_) | CliError::Usage(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Lib(e) => write!(f, "{e}"),
            CliError::Io(p, e) => write!(f, "{}: {e}", p.display()),
            CliError::Usage(m) => write!(f, "{m}"),
        }
    }
}

type Res<T> = Result<T, CliError>;

fn read(path: &Path) -> Res<String> {
    fs::read_to_string(path).map_err(|e| CliError::Io(path.to_path_buf(), e))
}

fn read_tree(path: &Path) -> Res<MergeTree> {
    Ok(MergeTree::from_json(&read(path)?)?)
}

struct Sink {
    dir: Option<PathBuf>,
}

impl Sink {
    /// Writes `name` into the output directory, or prints it.
    fn emit(&self, name: &str, content: &str) -> Res<()> {
        match &self.dir {
            Some(dir) => {
                fs::create_dir_all(dir).map_err(|e| CliError::Io(dir.clone(), e))?;
                let path = dir.join(name);
                fs::write(&path, content).map_err(|e| CliError::Io(path, e))
            }
            None => {
                print!("{content}");
                if !content.ends_with('\n') {
                    println!();
                }
                Ok(())
            }
        }
    }

    fn require_dir(&self, cmd: &str) -> Res<()> {
        if self.dir.is_none() {
            return Err(CliError::Usage(format!("{cmd} writes several files; pass --out <dir> or set ULTRAGEN_OUT")));
        }
        Ok(())
    }
}

fn pretty(v: &impl Serialize) -> String {
    serde_json::to_string_pretty(v).expect("serializable output") + "\n"
}

fn tree_json(tree: &MergeTree, seed: Option<u64>) -> String {
    pretty(&TreeFile::from_tree(tree, seed))
}

fn to_csv<T: Serialize>(rows: &[T]) -> Res<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(ultragen::Error::from)?;
    }
    Ok(String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8 csv"))
}

fn cmd_gen(cli: &Cli, sink: &Sink, kind: GenKind, n: usize, matrix: Option<&Path>) -> Res<()> {
    if n == 0 {
        return Err(CliError::Usage("--n must be at least 1".into()));
    }
    let tree = match kind {
        GenKind::RandomBinary => random_tree(&TreeSpec::binary(n), cli.seed),
        GenKind::RandomIdentifiable => random_identifiable(&TreeSpec::multifurcating(n), cli.seed, 100)?,
        GenKind::FromMatrix => {
            let path = matrix.ok_or_else(|| CliError::Usage("from-matrix needs --matrix <csv>".into()))?;
            let file = fs::File::open(path).map_err(|e| CliError::Io(path.to_path_buf(), e))?;
            UltrametricMatrixSpace::from_csv_reader(file)?.quotient_zero_distance()?.to_merge_tree()?
        }
    };
    sink.emit("tree.json", &tree_json(&tree, Some(cli.seed)))
}

fn cmd_decompose(cli: &Cli, sink: &Sink, input: &Path) -> Res<()> {
    let path = read_tree(input)?.decomposition_path();
    match (&sink.dir, cli.format) {
        (Some(_), _) => {
            sink.emit("path.json", &(path.to_json() + "\n"))?;
            sink.emit("plateaus.csv", &path.to_csv())
        }
        (None, Format::Json) => sink.emit("path.json", &path.to_json()),
        (None, Format::Csv) => sink.emit("plateaus.csv", &path.to_csv()),
    }
}

fn cmd_dist(cli: &Cli, sink: &Sink, kind: DistKind, a: &Path, b: Option<&Path>, psi: Option<f64>, h: Option<f64>) -> Res<()> {
    let ta = read_tree(a)?;
    let tb = match (b, psi) {
        (Some(b), None) => read_tree(b)?,
        (None, Some(depth)) => ta.psi(depth)?,
        _ => return Err(CliError::Usage("pass exactly one of --b and --psi".into())),
    };
    let (value, certificate) = match kind {
        DistKind::L1Profile => {
            let h = h.ok_or_else(|| CliError::Usage("l1-profile needs --h".into()))?;
            let v = ta.family_sizes(h)?.l1_distance(&tb.family_sizes(h)?);
            (v, json!({ "h": h }))
        }
        DistKind::Skorohod => {
            let e = skorohod_distance(&ta.decomposition_path(), &tb.decomposition_path(), &SkorohodOptions::default())?;
            (
                e.value,
                json!({ "strategy": "matched-jumps", "identity_value": e.identity_value, "seq_term": e.seq_term, "max_term": e.max_term }),
            )
        }
        DistKind::ProhorovNu2 => {
            let (lo, hi) = prohorov_bracket(&nu2(&ta), &nu2(&tb), cli.tol)?;
            (hi, json!({ "strategy": "flow-bisection", "bracket": [lo, hi] }))
        }
        DistKind::GpBound => {
            let g = gp_upper_bound(&ta, &tb, GpStrategy::Auto)?;
            (g.value, json!({ "strategy": g.strategy, "bracket": [g.bracket.0, g.bracket.1], "depth": g.depth }))
        }
        DistKind::GwaSurrogate => {
            let s = gwa_distance_surrogate(&ta, &tb)?;
            (
                s.value,
                json!({
                    "strategy": s.gp.strategy,
                    "bracket": [s.gp.bracket.0, s.gp.bracket.1],
                    "gp": s.gp.value,
                    "atom_gap": s.atom_gap,
                    "cdf_term": s.cdf_term,
                    "atomic_cdf_term": s.atomic_cdf_term,
                }),
            )
        }
    };
    let kind_name = kind.to_possible_value().expect("named variant").get_name().to_string();
    match cli.format {
        Format::Json => sink.emit(
            "dist.json",
            &pretty(&json!({ "schema": SCHEMA, "kind": kind_name, "value": value, "certificate": certificate })),
        ),
        Format::Csv => sink.emit("dist.csv", &format!("kind,value\n{kind_name},{value:?}\n")),
    }
}

fn cmd_reconstruct(cli: &Cli, sink: &Sink, from: Source, input: &Path, budget: usize, lax: bool) -> Res<()> {
    if !(cli.tol > 0.0) {
        return Err(CliError::Usage("--tol must be positive".into()));
    }
    let opts = ReconstructOptions {
        tol: cli.tol,
        check_identifiable: !lax,
        budget,
    };
    let text = read(input)?;
    let (tree, trace): (MergeTree, ReconstructionTrace) = match from {
        Source::Path => tree_from_path(&ProfilePath::from_json(&text)?, &opts)?,
        Source::Nu2 => tree_from_nu2(&AtomicMeasure1D::from_json(&text)?, &opts)?,
    };
    let trace = json!({ "schema": SCHEMA, "trace": trace });
    if sink.dir.is_some() {
        sink.emit("tree.json", &tree_json(&tree, None))?;
        sink.emit("trace.json", &pretty(&trace))
    } else {
        let tree: Value = serde_json::to_value(TreeFile::from_tree(&tree, None)).expect("tree serializes");
        sink.emit("reconstruction.json", &pretty(&json!({ "schema": SCHEMA, "tree": tree, "trace": trace["trace"] })))
    }
}

#[derive(Serialize)]
struct SimRow {
    rep: usize,
    seed: u64,
    events: usize,
    root_height: Option<f64>,
    families_at_t: Option<usize>,
    sum_squares_at_t: Option<f64>,
}

struct SimRep {
    row: SimRow,
    files: Vec<(String, String)>,
}

fn simulate_rep(model: Model, n: usize, t: f64, base: u64, rep: usize) -> Res<SimRep> {
    let seed = stream_id(&[base, rep as u64]);
    let r0 = caterpillar_r0(n);
    let mut files = Vec::new();
    let (tree, events) = match model {
        Model::Moran => {
            let (tree, ancestry) = simulate_moran(n, t, &r0, &AncestryGrid::Events, seed)?;
            files.push((
                format!("rep{rep:04}_ancestry.json"),
                pretty(&json!({ "schema": SCHEMA, "seed": seed, "rep": rep, "ancestry": ancestry })),
            ));
            (Some(tree), ancestry.events)
        }
        Model::Kingman => {
            let path: PartitionPath = simulate_kingman(n, t, seed)?;
            files.push((
                format!("rep{rep:04}_partition.json"),
                pretty(&json!({ "schema": SCHEMA, "seed": seed, "rep": rep, "path": path })),
            ));
            let tree = if t.is_finite() { Some(tree_from_coalescent(&path, t, &r0)?) } else { None };
            (tree, path.events().len())
        }
    };
    let mut row = SimRow {
        rep,
        seed,
        events,
        root_height: None,
        families_at_t: None,
        sum_squares_at_t: None,
    };
    if let Some(tree) = tree {
        row.root_height = Some(tree.root_height());
        if t > 0.0 {
            let f = tree.family_sizes(t)?;
            row.families_at_t = Some(f.len());
            row.sum_squares_at_t = Some(f.sum_of_squares());
        }
        files.push((format!("rep{rep:04}_tree.json"), tree_json(&tree, Some(seed))));
    }
    Ok(SimRep { row, files })
}

fn cmd_simulate(cli: &Cli, sink: &Sink, model: Model, n: usize, t: f64, reps: usize) -> Res<()> {
    sink.require_dir("simulate")?;
    if model == Model::Moran && !t.is_finite() {
        return Err(CliError::Usage("the Moran model needs a finite --t".into()));
    }
    let results: Vec<SimRep> = (0..reps)
        .into_par_iter()
        .map(|rep| simulate_rep(model, n, t, cli.seed, rep))
        .collect::<Res<_>>()?;
    let mut rows = Vec::with_capacity(reps);
    for r in results {
        for (name, content) in &r.files {
            sink.emit(name, content)?;
        }
        rows.push(r.row);
    }
    sink.emit("summary.csv", &to_csv(&rows)?)
}

fn cmd_convergence(cli: &Cli, sink: &Sink, populations: &[usize], t: f64, depths: &[f64], reps: usize) -> Res<()> {
    sink.require_dir("convergence-experiment")?;
    let report = convergence_experiment(&ExperimentConfig {
        populations: populations.to_vec(),
        t,
        depths: depths.to_vec(),
        reps,
        seed: cli.seed,
    })?;
    sink.emit("families.csv", &report.rows_csv())?;
    sink.emit("summary.csv", &report.summary_csv())?;
    sink.emit(
        "experiment.json",
        &pretty(&json!({
            "schema": SCHEMA,
            "seed": cli.seed,
            "populations": populations,
            "t": t,
            "depths": depths,
            "reps": reps,
            "summaries": report.summaries,
        })),
    )
}

fn run(cli: &Cli) -> Res<()> {
    let sink = Sink { dir: cli.out.clone() };
    match &cli.command {
        Command::Gen { kind, n, matrix } => cmd_gen(cli, &sink, *kind, *n, matrix.as_deref()),
        Command::Decompose { input } => cmd_decompose(cli, &sink, input),
        Command::Dist { kind, a, b, psi, h } => cmd_dist(cli, &sink, *kind, a, b.as_deref(), *psi, *h),
        Command::Reconstruct {
            from,
            input,
            budget,
            lax,
        } => cmd_reconstruct(cli, &sink, *from, input, *budget, *lax),
        Command::Simulate { model, n, t, reps } => cmd_simulate(cli, &sink, *model, *n, *t, *reps),
        Command::ConvergenceExperiment {
            populations,
            t,
            depths,
            reps,
        } => cmd_convergence(cli, &sink, populations, *t, depths, *reps),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build();
    let result = match pool {
        Ok(pool) => pool.install(|| run(&cli)),
        Err(e) => Err(CliError::Usage(format!("cannot start {} worker threads: {e}", cli.jobs))),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
