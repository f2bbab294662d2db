use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;
use serde_json::json;
use stelle::concepts::ConceptSet;
use stelle::data::{load_dataset, load_dataset_with_labels, Dataset};
use stelle::explain::{explain_global, explain_local, GlobalExplanation, LocalExplanation, Reference};
use stelle::metrics::{global_prf, global_separability, local_separability, readability, Readability};
use stelle::pipeline::{mine_concepts, train_pipeline, Pipeline, RunConfig};
use stelle::stl::{Atom, Formula};
use stelle::{Error, Result};

/// Exit codes, one per failure class.
const EXIT_USAGE: u8 = 2;
const EXIT_IO: u8 = 3;
const EXIT_DATA: u8 = 4;
const EXIT_PARAM: u8 = 5;

#[derive(Parser)]
#[command(name = "stelle", version, about = "Time-series classification with STL concept explanations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Mine a diverse concept set from training data.
    GenConcepts {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Fit a model and write the bundle.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// Concept file from gen-concepts; mined on the fly when omitted.
        #[arg(long)]
        concepts: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Class and probabilities for each trajectory.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// One STL conjunction per trajectory, explaining its predicted class.
    ExplainLocal {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Training data; the reference trajectories for separation.
        #[arg(long)]
        train_data: PathBuf,
        #[arg(long, conflicts_with = "cum")]
        budget: Option<usize>,
        #[arg(long)]
        cum: Option<f64>,
        /// Write per-trajectory metrics as JSON.
        #[arg(long)]
        metrics: Option<PathBuf>,
    },
    /// One STL disjunction per class, built from training data.
    ExplainGlobal {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        train_data: PathBuf,
        #[arg(long)]
        coverage: Option<f64>,
        /// Only this class (label as written in the data).
        #[arg(long)]
        class: Option<String>,
        #[arg(long)]
        metrics: Option<PathBuf>,
    },
    /// Accuracy, separability and readability on a labelled split.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Training data for reference trajectories and global explanations.
        #[arg(long)]
        train_data: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Full RunConfig as JSON; the flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    per_var: Option<usize>,
    #[arg(long)]
    min_total: Option<usize>,
    #[arg(long)]
    sim_threshold: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Monte Carlo trajectories for the kernel embedding.
    #[arg(long)]
    mc: Option<usize>,
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => serde_json::from_str(&read(p)?)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg = cfg.with_seed(s);
        }
        if let Some(n) = self.per_var {
            cfg.selection.per_variable_count = n;
        }
        if let Some(n) = self.min_total {
            cfg.selection.min_total = n;
        }
        if let Some(t) = self.sim_threshold {
            cfg.selection.similarity_threshold = t;
        }
        if let Some(e) = self.epochs {
            cfg.train.epochs = e;
        }
        if let Some(m) = self.mc {
            cfg.model.kernel.mc_trajectories = m;
        }
        Ok(cfg)
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// `x` with six significant digits.
fn num(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let mag = x.abs().log10().floor() as i32;
    if (-5..6).contains(&mag) {
        format!("{:.*}", (5 - mag).max(0) as usize, x)
    } else {
        format!("{x:.5e}")
    }
}

/// `phi` for display, thresholds rounded to six significant digits.
fn show(phi: &Formula) -> String {
    let round = |x: f64| format!("{x:.5e}").parse().unwrap_or(x);
    phi.map_atoms(&mut |a, _| Atom::new(a.var, a.rel, round(a.threshold))).to_string()
}

fn load_model(path: &Path) -> Result<Pipeline> {
    let p = Pipeline::load(path)?;
    info!("model config: {}", serde_json::to_string(&p.bundle.config)?);
    Ok(p)
}

/// Loads a split with the model's label map and applies the model's preprocessing.
fn load_prepared(p: &Pipeline, path: &Path) -> Result<Dataset> {
    let ds = load_dataset_with_labels(path, &p.bundle.label_map)?;
    p.prepare(&ds)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenConcepts { data, out, run } => {
            let cfg = run.resolve()?;
            let (generated, _) = mine_concepts(&load_dataset(&data)?, &cfg)?;
            write(&out, &generated.concepts.to_string())?;
            println!("concepts\t{}", generated.concepts.len());
            println!("candidates_seen\t{}", generated.candidates_seen);
            println!("exhausted\t{}", generated.exhausted);
        }
        Command::Train { data, concepts, out, run } => {
            let cfg = run.resolve()?;
            let set = concepts.map(|p| read(&p)?.parse::<ConceptSet>().map_err(Error::from)).transpose()?;
            let trained = train_pipeline(&load_dataset(&data)?, set.as_ref(), &cfg)?;
            trained.pipeline.bundle.save(&out)?;
            let preds = trained.pipeline.predict(&trained.train.trajectories)?;
            let hits = preds.iter().zip(&trained.train.trajectories).filter(|(q, t)| Some(q.class) == t.label()).count();
            let h = &trained.history;
            println!("concepts\t{}", trained.pipeline.model.n_concepts());
            println!("epochs\t{}", h.train_loss.len());
            println!("best_epoch\t{}", h.best_epoch);
            println!("final_train_loss\t{}", num(*h.train_loss.last().unwrap_or(&f64::NAN)));
            println!("train_accuracy\t{}", num(hits as f64 / preds.len() as f64));
        }
        Command::Predict { model, data } => {
            let p = load_model(&model)?;
            let ds = load_prepared(&p, &data)?;
            let preds = p.predict(&ds.trajectories)?;
            println!("id\tclass\t{}", p.bundle.label_map.iter().map(|l| format!("p[{l}]")).collect::<Vec<_>>().join("\t"));
            for (t, q) in ds.trajectories.iter().zip(&preds) {
                let probs: Vec<String> = q.probabilities.iter().map(|&v| num(v)).collect();
                println!("{}\t{}\t{}", t.id(), p.bundle.label_map[q.class], probs.join("\t"));
            }
        }
        Command::ExplainLocal { model, data, train_data, budget, cum, metrics } => {
            let p = load_model(&model)?;
            let mut cfg = p.bundle.config.explain;
            cfg.budget = budget;
            if let Some(g) = cum {
                cfg.cumulative = g;
            }
            let train = load_prepared(&p, &train_data)?;
            let reference = Reference::new(&train.trajectories, p.bundle.label_map.len())?;
            let ds = load_prepared(&p, &data)?;
            let mut rows = Vec::new();
            for t in &ds.trajectories {
                let y = p.model.predict(t)?.class;
                let e = explain_local(&p.model, t, y, &reference, &cfg)?;
                let sep = local_separability(&e.postprocessed, t, &reference.others(y))?;
                println!("{}\t{}\t{}\t{}", t.id(), p.bundle.label_map[y], num(sep), show(&e.postprocessed));
                rows.push(local_json(&e, sep, &p.bundle.label_map));
            }
            if let Some(m) = metrics {
                write(&m, &serde_json::to_string_pretty(&rows)?)?;
            }
        }
        Command::ExplainGlobal { model, train_data, coverage, class, metrics } => {
            let p = load_model(&model)?;
            let mut cfg = p.bundle.config.explain;
            if let Some(c) = coverage {
                cfg.global_coverage = c;
            }
            let labels = &p.bundle.label_map;
            let classes: Vec<usize> = match class {
                Some(c) => vec![labels
                    .iter()
                    .position(|l| *l == c)
                    .ok_or_else(|| Error::InvalidParam(format!("unknown class {c:?}")))?],
                None => (0..labels.len()).collect(),
            };
            let train = load_prepared(&p, &train_data)?;
            let reference = Reference::new(&train.trajectories, labels.len())?;
            let mut rows = Vec::new();
            for k in classes {
                let g = explain_global(&p.model, &reference, k, &cfg, None)?;
                println!("{}\t{}", labels[k], g.disjunction.as_ref().map_or("(none)".to_string(), show));
                rows.push(global_json(&g, labels));
            }
            if let Some(m) = metrics {
                write(&m, &serde_json::to_string_pretty(&rows)?)?;
            }
        }
        Command::Evaluate { model, data, train_data } => evaluate(&load_model(&model)?, &data, &train_data)?,
    }
    Ok(())
}

fn local_json(e: &LocalExplanation, sep: f64, labels: &[String]) -> serde_json::Value {
    json!({
        "id": e.trajectory_id,
        "class": labels[e.target_class],
        "concepts": e.concept_indices,
        "relevance": e.selected.iter().map(|s| s.1).collect::<Vec<_>>(),
        "conjunction": e.conjunction.to_string(),
        "explanation": e.postprocessed.to_string(),
        "nodes": e.postprocessed.node_count(),
        "separability": sep,
        "degenerate": e.degenerate,
    })
}

fn global_json(g: &GlobalExplanation, labels: &[String]) -> serde_json::Value {
    json!({
        "class": labels[g.class_index],
        "explanation": g.disjunction.as_ref().map(Formula::to_string),
        "disjuncts": g.disjuncts.iter().map(Formula::to_string).collect::<Vec<_>>(),
        "uncovered": g.uncovered,
        "pool_size": g.pool_size,
    })
}

fn print_readability(name: &str, r: &Readability) {
    println!(
        "{name}\t{} ± {}\t{} ± {}",
        num(r.nodes.mean),
        num(r.nodes.std),
        num(r.variables.mean),
        num(r.variables.std)
    );
}

fn evaluate(p: &Pipeline, data: &Path, train_data: &Path) -> Result<()> {
    let labels = &p.bundle.label_map;
    let train = load_prepared(p, train_data)?;
    let reference = Reference::new(&train.trajectories, labels.len())?;
    let test = load_prepared(p, data)?;
    if test.trajectories.iter().any(|t| t.label().is_none()) {
        return Err(Error::Data("evaluation data must be labelled".into()));
    }
    let cfg = p.bundle.config.explain;
    let preds = p.predict(&test.trajectories)?;
    let hits = preds.iter().zip(&test.trajectories).filter(|(q, t)| Some(q.class) == t.label()).count();

    let mut seps = Vec::new();
    let mut locals = Vec::new();
    for (t, q) in test.trajectories.iter().zip(&preds) {
        let e = explain_local(&p.model, t, q.class, &reference, &cfg)?;
        seps.push(local_separability(&e.postprocessed, t, &reference.others(q.class))?);
        locals.push(e.postprocessed);
    }
    let globals: Vec<Option<Formula>> = (0..labels.len())
        .map(|k| Ok(explain_global(&p.model, &reference, k, &cfg, None)?.disjunction))
        .collect::<Result<_>>()?;
    let taus: Vec<_> = test.trajectories.iter().collect();
    let gsep = global_separability(&globals, &taus)?;
    let prf = global_prf(&globals, &taus)?;
    let perfect = seps.iter().filter(|&&s| s >= 100.0).count();

    println!("accuracy\t{}", num(hits as f64 / preds.len() as f64));
    println!();
    println!("separability");
    println!("local_mean\t{}", num(seps.iter().sum::<f64>() / seps.len().max(1) as f64));
    println!("local_perfect\t{perfect}/{}", seps.len());
    for (k, s) in gsep.per_class.iter().enumerate() {
        println!("global[{}]\t{}", labels[k], num(*s));
    }
    println!("global_micro\t{}", num(gsep.micro));
    println!("precision\t{}", num(prf.precision));
    println!("recall\t{}", num(prf.recall));
    println!("f1\t{}", num(prf.f1));
    println!();
    println!("readability\tnodes\tvariables");
    print_readability("local", &readability(&locals));
    print_readability("global", &readability(globals.iter().flatten()));
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io { .. } => EXIT_IO,
        Error::InvalidParam(_) => EXIT_PARAM,
        _ => EXIT_DATA,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("{}", e.render().to_string().lines().next().unwrap_or_default());
            return ExitCode::from(EXIT_USAGE);
        }
    };
    if let Ok(n) = std::env::var("STELLE_THREADS") {
        match n.parse::<usize>() {
            Ok(n) if n > 0 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    eprintln!("error: thread pool: {e}");
                    return ExitCode::from(EXIT_PARAM);
                }
            }
            _ => {
                eprintln!("error: STELLE_THREADS must be a positive integer, got {n:?}");
                return ExitCode::from(EXIT_PARAM);
            }
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
