//! Command-line surface: dataset ingestion checks, synthetic fixture
//! generation, Laplacian export, two-stage/one-stage equivalence
//! verification, training, cross-validation, and hyperparameter sweeps.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use hgraphormer::baselines::verify_equivalence;
use hgraphormer::data::{
    generate_synthetic, load_dataset, write_checkpoint, write_dataset, DataError, Dataset,
    SyntheticConfig,
};
use hgraphormer::model::ModelConfig;
use hgraphormer::tensor::Tensor;
use hgraphormer::train::{
    cross_validate_k, evaluate, label_rate_split, make_folds, sweep, train_one_fold, TrainError,
};
use hgraphormer::Real;

const USAGE: &str = "\
hgraphormer <command> [flags]

commands:
  synth               generate a synthetic community dataset
      --out DIR [--name N] [--nodes 60] [--classes 3] [--edges-per-class 20]
      [--edge-size 4] [--noise 1.0] [--seed 0]
  ingest-check        load a dataset and print its statistics
      --manifest FILE
  laplacian           write the dense hypergraph Laplacian as CSV
      --manifest FILE [--out FILE]
  verify-equivalence  compare two-stage vs merged one-stage message passing
      [--trials 100] [--max-nodes 12] [--max-edges 8] [--seed 7] [--tol 1e-9]
  train               train on a single split and report accuracy
      --manifest FILE [model flags] [--label-rate F] [--checkpoint FILE]
      [--out LOSS_CSV]
  cv                  stratified k-fold cross-validation
      --manifest FILE [model flags] [--folds 10] [--out CSV] [--json FILE]
  sweep               cross-validate over a grid of one hyperparameter
      --manifest FILE --param NAME --values V1,V2,... [model flags] [--out CSV]

model flags:
  --gamma F --layers N --heads N --d-h N --d-k N --d-q N --dropout F
  --no-residual --epochs N --lr F --weight-decay F --seed N --threads N
";

enum CliError {
    Usage(String),
    Data(String),
    Numeric(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Numeric(m) => m,
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::UnknownParameter(_) | TrainError::InvalidSweepValue { .. } => {
                CliError::Usage(e.to_string())
            }
            TrainError::TooFewClasses(_) | TrainError::EmptyMask => CliError::Data(e.to_string()),
            other => CliError::Numeric(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let command = args.first().map(String::as_str).unwrap_or("<none>");
            eprintln!("hgraphormer {command}: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

fn run(args: &[String]) -> Result<(), CliError> {
    let Some(command) = args.first() else {
        eprint!("{USAGE}");
        return Err(CliError::Usage("missing command".to_string()));
    };
    if command == "help" || command == "--help" || command == "-h" {
        print!("{USAGE}");
        return Ok(());
    }
    let flags = Flags::parse(&args[1..])?;
    match command.as_str() {
        "synth" => cmd_synth(&flags),
        "ingest-check" => cmd_ingest_check(&flags),
        "laplacian" => cmd_laplacian(&flags),
        "verify-equivalence" => cmd_verify_equivalence(&flags),
        "train" => cmd_train(&flags),
        "cv" => cmd_cv(&flags),
        "sweep" => cmd_sweep(&flags),
        other => {
            eprint!("{USAGE}");
            Err(CliError::Usage(format!("unknown command '{other}'")))
        }
    }
}

/// `--key value` flags plus bare `--no-residual` style switches.
struct Flags {
    values: BTreeMap<String, String>,
    switches: Vec<String>,
}

const SWITCH_FLAGS: &[&str] = &["no-residual"];

impl Flags {
    fn parse(args: &[String]) -> Result<Flags, CliError> {
        let mut values = BTreeMap::new();
        let mut switches = Vec::new();
        let mut it = args.iter();
        while let Some(arg) = it.next() {
            let Some(key) = arg.strip_prefix("--") else {
                return Err(CliError::Usage(format!("expected a --flag, found '{arg}'")));
            };
            if SWITCH_FLAGS.contains(&key) {
                switches.push(key.to_string());
                continue;
            }
            let Some(value) = it.next() else {
                return Err(CliError::Usage(format!("flag --{key} needs a value")));
            };
            values.insert(key.to_string(), value.clone());
        }
        Ok(Flags { values, switches })
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    fn has_switch(&self, key: &str) -> bool {
        self.switches.iter().any(|s| s == key)
    }

    fn required(&self, key: &str) -> Result<&str, CliError> {
        self.get(key)
            .ok_or_else(|| CliError::Usage(format!("missing required flag --{key}")))
    }

    fn parse_value<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T, CliError> {
        match self.get(key) {
            None => Ok(default),
            Some(raw) => raw
                .parse()
                .map_err(|_| CliError::Usage(format!("flag --{key}: cannot parse '{raw}'"))),
        }
    }
}

fn model_config(flags: &Flags, dataset: &Dataset) -> Result<ModelConfig, CliError> {
    let defaults = ModelConfig::default();
    let cfg = ModelConfig {
        gamma: flags.parse_value("gamma", defaults.gamma)?,
        num_layers: flags.parse_value("layers", defaults.num_layers)?,
        num_heads: flags.parse_value("heads", defaults.num_heads)?,
        d_h: flags.parse_value("d-h", defaults.d_h)?,
        d_k: flags.parse_value("d-k", defaults.d_k)?,
        d_q: flags.parse_value("d-q", defaults.d_q)?,
        dropout_p: flags.parse_value("dropout", defaults.dropout_p)?,
        use_residual: !flags.has_switch("no-residual"),
        num_classes: dataset.num_classes,
        feature_dim: dataset.feature_dim(),
        seed: flags.parse_value("seed", defaults.seed)?,
        lr: flags.parse_value("lr", defaults.lr)?,
        weight_decay: flags.parse_value("weight-decay", defaults.weight_decay)?,
        epochs: flags.parse_value("epochs", defaults.epochs)?,
    };
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    if let Some(threads) = flags.get("threads") {
        let n: usize = threads
            .parse()
            .map_err(|_| CliError::Usage(format!("--threads: cannot parse '{threads}'")))?;
        // Ignore failure when a pool already exists (e.g. repeated calls).
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    Ok(cfg)
}

/// Every run prints the full effective configuration so reports are
/// self-describing.
fn echo_config(dataset: &Dataset, cfg: &ModelConfig) {
    println!(
        "config: {}",
        serde_json::json!({
            "dataset": dataset.name,
            "num_nodes": dataset.num_nodes(),
            "num_edges": dataset.hypergraph.num_edges(),
            "model": cfg,
        })
    );
}

fn load(flags: &Flags) -> Result<Dataset, CliError> {
    let manifest = flags.required("manifest")?;
    let dataset = load_dataset(Path::new(manifest))?;
    for w in dataset.stratification_warnings(10) {
        eprintln!("warning: {w}");
    }
    Ok(dataset)
}

fn write_output(path: &str, content: &str) -> Result<(), CliError> {
    std::fs::write(path, content).map_err(|e| CliError::Data(format!("cannot write {path}: {e}")))
}

fn cmd_synth(flags: &Flags) -> Result<(), CliError> {
    let out = PathBuf::from(flags.required("out")?);
    let defaults = SyntheticConfig::default();
    let cfg = SyntheticConfig {
        name: flags.get("name").unwrap_or(&defaults.name).to_string(),
        num_nodes: flags.parse_value("nodes", defaults.num_nodes)?,
        num_classes: flags.parse_value("classes", defaults.num_classes)?,
        edges_per_class: flags.parse_value("edges-per-class", defaults.edges_per_class)?,
        edge_size: flags.parse_value("edge-size", defaults.edge_size)?,
        noise: flags.parse_value("noise", defaults.noise)?,
        seed: flags.parse_value("seed", defaults.seed)?,
    };
    println!(
        "config: {}",
        serde_json::to_string(&cfg).expect("config serializes")
    );
    let dataset = generate_synthetic(&cfg)?;
    let manifest = write_dataset(&dataset, &out)?;
    println!(
        "wrote {} ({} nodes, {} hyperedges, {} classes) to {}",
        dataset.name,
        dataset.num_nodes(),
        dataset.hypergraph.num_edges(),
        dataset.num_classes,
        manifest.display()
    );
    Ok(())
}

fn cmd_ingest_check(flags: &Flags) -> Result<(), CliError> {
    println!(
        "config: {}",
        serde_json::json!({ "manifest": flags.required("manifest")? })
    );
    let dataset = load(flags)?;
    let deg = dataset.hypergraph.compute_degrees();
    let avg_dv: Real = deg.node_degrees.iter().sum::<Real>() / dataset.num_nodes() as Real;
    let avg_de: Real = deg.edge_degrees.iter().map(|&d| d as Real).sum::<Real>()
        / dataset.hypergraph.num_edges() as Real;
    println!(
        "dataset {}: N={} M={} c={} C={} avg_dv={avg_dv:.2} avg_de={avg_de:.2}",
        dataset.name,
        dataset.num_nodes(),
        dataset.hypergraph.num_edges(),
        dataset.feature_dim(),
        dataset.num_classes,
    );
    Ok(())
}

fn cmd_laplacian(flags: &Flags) -> Result<(), CliError> {
    eprintln!(
        "config: {}",
        serde_json::json!({
            "manifest": flags.required("manifest")?,
            "out": flags.get("out"),
        })
    );
    let dataset = load(flags)?;
    let lap = dataset.hypergraph.laplacian();
    if lap.has_isolated_nodes() {
        eprintln!(
            "warning: {} isolated node(s) produce zero Laplacian rows",
            lap.isolated_nodes().len()
        );
    }
    let m = lap.matrix();
    let mut csv = String::new();
    for i in 0..m.rows() {
        let row: Vec<String> = m.row(i).iter().map(|v| format!("{v}")).collect();
        csv.push_str(&row.join(","));
        csv.push('\n');
    }
    match flags.get("out") {
        Some(path) => {
            write_output(path, &csv)?;
            println!("wrote {}x{} Laplacian to {path}", m.rows(), m.cols());
        }
        None => print!("{csv}"),
    }
    Ok(())
}

fn cmd_verify_equivalence(flags: &Flags) -> Result<(), CliError> {
    let trials = flags.parse_value("trials", 100usize)?;
    let max_nodes = flags.parse_value("max-nodes", 12usize)?;
    let max_edges = flags.parse_value("max-edges", 8usize)?;
    let seed = flags.parse_value("seed", 7u64)?;
    let tol: Real = flags.parse_value("tol", 1e-9)?;
    println!(
        "config: {}",
        serde_json::json!({
            "trials": trials, "max_nodes": max_nodes,
            "max_edges": max_edges, "seed": seed, "tol": tol,
        })
    );
    let report = verify_equivalence(trials, max_nodes, max_edges, seed);
    println!(
        "power-mean update:      max |two-stage - one-stage| = {:e}",
        report.max_dev_power_mean
    );
    println!(
        "degree-normalized update: max |two-stage - one-stage| = {:e}",
        report.max_dev_degree_norm
    );
    if report.passes(tol) {
        println!("equivalence holds at tolerance {tol:e}");
        Ok(())
    } else {
        Err(CliError::Numeric(format!(
            "deviation exceeds tolerance {tol:e}"
        )))
    }
}

fn cmd_train(flags: &Flags) -> Result<(), CliError> {
    let dataset = load(flags)?;
    let cfg = model_config(flags, &dataset)?;
    echo_config(&dataset, &cfg);

    let split = match flags.get("label-rate") {
        Some(raw) => {
            let rate: Real = raw
                .parse()
                .map_err(|_| CliError::Usage(format!("--label-rate: cannot parse '{raw}'")))?;
            if !(rate > 0.0 && rate < 1.0) {
                return Err(CliError::Usage(format!(
                    "--label-rate must be in (0, 1), got {rate}"
                )));
            }
            label_rate_split(&dataset.labels, rate, cfg.seed)
        }
        None => make_folds(&dataset.labels, 10, cfg.seed)?
            .into_iter()
            .next()
            .expect("ten folds"),
    };
    let train_nodes = split.train_mask.iter().filter(|&&b| b).count();
    println!(
        "training on {train_nodes}/{} nodes, evaluating on the rest",
        dataset.num_nodes()
    );

    let lap = dataset.hypergraph.laplacian();
    let outcome = train_one_fold(&dataset, lap.matrix(), &split, &cfg, cfg.seed)?;
    let x = Tensor::from_dense(&dataset.features);
    let lap_t = Tensor::from_dense(lap.matrix());
    let train_acc = evaluate(
        &outcome.model,
        &x,
        &lap_t,
        &dataset.labels,
        &split.train_mask,
    )?;
    let test_acc = evaluate(
        &outcome.model,
        &x,
        &lap_t,
        &dataset.labels,
        &split.test_mask,
    )?;
    println!(
        "final loss {:.6}  train accuracy {train_acc:.4}  test accuracy {test_acc:.4}",
        outcome.losses.last().copied().unwrap_or(Real::NAN)
    );

    if let Some(path) = flags.get("out") {
        let mut csv = String::from("epoch,loss\n");
        for (epoch, loss) in outcome.losses.iter().enumerate() {
            csv.push_str(&format!("{epoch},{loss}\n"));
        }
        write_output(path, &csv)?;
        println!("wrote loss trace to {path}");
    }
    if let Some(path) = flags.get("checkpoint") {
        write_checkpoint(&outcome.model.params, Path::new(path))?;
        println!("wrote checkpoint to {path}");
    }
    Ok(())
}

fn cmd_cv(flags: &Flags) -> Result<(), CliError> {
    let dataset = load(flags)?;
    let cfg = model_config(flags, &dataset)?;
    let folds = flags.parse_value("folds", 10usize)?;
    echo_config(&dataset, &cfg);
    let report = cross_validate_k(&dataset, &cfg, folds)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    for a in &report.aborted_folds {
        eprintln!(
            "warning: fold {} aborted at epoch {}: {}",
            a.fold, a.epoch, a.message
        );
    }
    println!(
        "accuracy {:.4} +/- {:.4} over {} folds ({:.1}s)",
        report.mean_accuracy,
        report.std_accuracy,
        report.fold_accuracies.len(),
        report.wall_seconds
    );
    if let Some(path) = flags.get("out") {
        write_output(path, &report.to_csv())?;
        println!("wrote fold report to {path}");
    }
    if let Some(path) = flags.get("json") {
        write_output(path, &report.to_json())?;
        println!("wrote JSON report to {path}");
    }
    Ok(())
}

fn cmd_sweep(flags: &Flags) -> Result<(), CliError> {
    let dataset = load(flags)?;
    let cfg = model_config(flags, &dataset)?;
    let param = flags.required("param")?;
    let raw_values = flags.required("values")?;
    let mut values = Vec::new();
    for token in raw_values.split(',') {
        let v: Real = token
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("--values: cannot parse '{token}'")))?;
        values.push(v);
    }
    if values.is_empty() {
        return Err(CliError::Usage("--values is empty".to_string()));
    }
    echo_config(&dataset, &cfg);
    println!("sweeping {param} over {values:?}");
    let table = sweep(&dataset, &cfg, param, &values)?;
    for row in &table.rows {
        println!(
            "{param}={}  accuracy {:.4} +/- {:.4}",
            row.value, row.mean, row.std
        );
    }
    if let Some(path) = flags.get("out") {
        write_output(path, &table.to_csv())?;
        println!("wrote sweep table to {path}");
    }
    Ok(())
}
