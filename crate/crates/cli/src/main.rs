//! `carl`: answer causal queries over relational data from the command
//! line. Subcommands: parse, ground, covariates, answer, synth.

mod manifest;

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use carl_core::analysis::{compute_peers, detect_covariates};
use carl_core::embed::EmbeddingKind;
use carl_core::error::CarlError;
use carl_core::estimate::{answer_universal_baseline, EstimatorConfig, EstimatorMethod};
use carl_core::ground::{build_graph, ground_rules};
use carl_core::instance::{load_instance, InstanceBundle};
use carl_core::lang::{bind_model, bind_query, parse_model, parse_query, BoundModel};
use carl_core::pipeline::{answer, AnswerOptions};
use carl_core::schema::{load_schema, SchemaDef};
use carl_core::synth::{generate, SynthConfig};

use manifest::RunManifest;

#[derive(Parser)]
#[command(name = "carl", version, about = "Relational causal inference engine")]
struct Cli {
    /// Worker threads (default: hardware count; CARL_THREADS also works).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Write the run manifest to this file in addition to stderr.
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct DataArgs {
    /// Schema file (.carlschema).
    #[arg(long)]
    schema: PathBuf,
    /// Data directory with one CSV per predicate and observed attribute.
    #[arg(long)]
    data: PathBuf,
    /// Causal rule file (.carl).
    #[arg(long)]
    model: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum EstimatorArg {
    Ols,
    Stratify,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a rule file and report its shape.
    Parse {
        /// Causal rule file (.carl).
        #[arg(long)]
        model: PathBuf,
    },
    /// Ground a model against an instance and emit the causal graph.
    Ground {
        #[command(flatten)]
        data: DataArgs,
        /// Write the graph JSON here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per response unit: treated influencers, adjustment set, and whether
    /// minimization pruned the default parents.
    Covariates {
        #[command(flatten)]
        data: DataArgs,
        /// Causal query string.
        #[arg(long)]
        query: String,
    },
    /// Answer a causal query end to end.
    Answer {
        #[command(flatten)]
        data: DataArgs,
        /// Causal query string.
        #[arg(long)]
        query: String,
        /// mean | median | moments[:k] | padding
        #[arg(long, default_value = "mean")]
        embedding: String,
        #[arg(long, value_enum, default_value_t = EstimatorArg::Ols)]
        estimator: EstimatorArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Bootstrap replicates for standard errors (0 disables).
        #[arg(long, default_value_t = 200)]
        bootstrap: usize,
        /// Own-treatment arm conditioning the relational effect.
        #[arg(long = "are-arm", default_value_t = 1)]
        are_arm: u8,
        /// Equal-frequency bins for the stratified estimator.
        #[arg(long, default_value_t = 5)]
        strata_bins: usize,
        /// Longest relational path considered for unification.
        #[arg(long = "max-path-len", default_value_t = 4)]
        max_path_len: usize,
        /// Report the universal-table baseline instead of the engine.
        #[arg(long)]
        baseline: Option<String>,
        /// Dump the flat unit table as CSV.
        #[arg(long = "dump-unit-table")]
        dump_unit_table: Option<PathBuf>,
        /// Dump the grounded causal graph as JSON.
        #[arg(long = "dump-graph")]
        dump_graph: Option<PathBuf>,
    },
    /// Generate synthetic review data with known ground truth.
    Synth {
        /// Flat TOML config; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Override the config's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn exit_code_for(err: &CarlError) -> u8 {
    match err {
        CarlError::NotConnected(_) => 3,
        CarlError::Unidentifiable(_) => 4,
        CarlError::DegenerateContrast(_)
        | CarlError::RankDeficient(_)
        | CarlError::EmptyStrata(_)
        | CarlError::EmptyDataset(_)
        | CarlError::PadOverflow { .. }
        | CarlError::JoinEmpty(_) => 5,
        _ => 2,
    }
}

fn fail(err: CarlError) -> ExitCode {
    eprintln!(
        "{}",
        serde_json::json!({ "error": err.kind(), "message": err.to_string() })
    );
    ExitCode::from(exit_code_for(&err))
}

fn read_text(path: &Path) -> Result<String, CarlError> {
    std::fs::read_to_string(path).map_err(|_| CarlError::MissingFile(path.display().to_string()))
}

fn load_all(args: &DataArgs) -> Result<(SchemaDef, InstanceBundle, BoundModel), CarlError> {
    let schema = load_schema(&read_text(&args.schema)?)?;
    let bundle = load_instance(&schema, &args.data)?;
    let model = bind_model(&parse_model(&read_text(&args.model)?)?, &schema)?;
    Ok((schema, bundle, model))
}

fn parse_embedding(text: &str) -> Result<(EmbeddingKind, Option<usize>), CarlError> {
    match text {
        "mean" => Ok((EmbeddingKind::Mean, None)),
        "median" => Ok((EmbeddingKind::Median, None)),
        "padding" => Ok((EmbeddingKind::Padding, None)),
        "moments" => Ok((EmbeddingKind::Moments, None)),
        other => match other.strip_prefix("moments:") {
            Some(k) => {
                let k: usize = k
                    .parse()
                    .map_err(|_| CarlError::Domain(format!("bad moments order in `{other}`")))?;
                Ok((EmbeddingKind::Moments, Some(k.max(1))))
            }
            None => Err(CarlError::Domain(format!(
                "unknown embedding `{other}` (expected mean|median|moments[:k]|padding)"
            ))),
        },
    }
}

fn observed_names(bundle: &InstanceBundle, model: &BoundModel) -> BTreeSet<String> {
    let mut observed: BTreeSet<String> = bundle
        .schema
        .attributes
        .iter()
        .filter(|a| a.observed)
        .map(|a| a.name.clone())
        .collect();
    for rule in &model.model.agg_rules {
        if observed.contains(&rule.source.attribute) {
            observed.insert(rule.target.attribute.clone());
        }
    }
    observed
}

fn run(cli: &Cli, manifest: &mut RunManifest) -> Result<(), CarlError> {
    match &cli.command {
        Command::Parse { model } => {
            manifest.add_input(model)?;
            let ast = parse_model(&read_text(model)?)?;
            println!(
                "{} rules, {} aggregate rules",
                ast.rules.len(),
                ast.agg_rules.len()
            );
            Ok(())
        }
        Command::Ground { data, out } => {
            manifest.add_inputs(&[&data.schema, &data.model])?;
            let (_, bundle, model) = load_all(data)?;
            let grounded = ground_rules(&model, &bundle);
            let graph = build_graph(&grounded, &[])?;
            let json = serde_json::to_string_pretty(&graph.to_json()).expect("graph serializes");
            match out {
                Some(path) => std::fs::write(path, json + "\n")?,
                None => println!("{json}"),
            }
            Ok(())
        }
        Command::Covariates { data, query } => {
            manifest.add_inputs(&[&data.schema, &data.model])?;
            let (schema, bundle, model) = load_all(data)?;
            let q = bind_query(&parse_query(query)?, &schema, &model)?;
            let grounded = ground_rules(&model, &bundle);
            let graph = build_graph(&grounded, &[])?;
            let observed = observed_names(&bundle, &model);
            let covs = detect_covariates(
                &graph,
                &observed,
                &q.ast.treatment.attribute,
                &q.response_base,
            )?;
            let peers = compute_peers(&graph, &q.ast.treatment.attribute, &q.response_base);
            for unit in &covs.per_unit {
                let treated: Vec<String> = unit
                    .treated
                    .iter()
                    .map(|n| graph.node(*n).to_string())
                    .collect();
                let z: Vec<String> = unit
                    .covariates
                    .iter()
                    .map(|n| graph.node(*n).to_string())
                    .collect();
                println!(
                    "{}",
                    serde_json::json!({
                        "unit": unit.unit,
                        "treated_influencers": treated,
                        "covariates": z,
                        "minimized": unit.minimized,
                        "peers": peers.peers(&unit.unit),
                    })
                );
            }
            Ok(())
        }
        Command::Answer {
            data,
            query,
            embedding,
            estimator,
            seed,
            bootstrap,
            are_arm,
            strata_bins,
            max_path_len,
            baseline,
            dump_unit_table,
            dump_graph,
        } => {
            manifest.add_inputs(&[&data.schema, &data.model])?;
            manifest.seed = Some(*seed);
            let (schema, bundle, model) = load_all(data)?;
            let q = bind_query(&parse_query(query)?, &schema, &model)?;
            let (kind, moments_k) = parse_embedding(embedding)?;
            let estimator = EstimatorConfig {
                method: match estimator {
                    EstimatorArg::Ols => EstimatorMethod::Ols,
                    EstimatorArg::Stratify => EstimatorMethod::Stratify,
                },
                bootstrap_reps: *bootstrap,
                seed: *seed,
                strata_bins: *strata_bins,
                are_arm: *are_arm,
            };
            if let Some(which) = baseline {
                if which != "universal" {
                    return Err(CarlError::Domain(format!(
                        "unknown baseline `{which}` (expected `universal`)"
                    )));
                }
                let result = answer_universal_baseline(&bundle, &q, &estimator)?;
                println!(
                    "{}",
                    serde_json::to_string(&result).expect("result serializes")
                );
                return Ok(());
            }
            let opts = AnswerOptions {
                embedding: kind,
                moments_k,
                estimator,
                max_path_len: *max_path_len,
            };
            let (prepared, result) = answer(&bundle, &model, &q, &opts)?;
            if let Some(path) = dump_unit_table {
                std::fs::write(path, prepared.table.to_csv())?;
            }
            if let Some(path) = dump_graph {
                let json = serde_json::to_string_pretty(&prepared.graph.to_json())
                    .expect("graph serializes");
                std::fs::write(path, json + "\n")?;
            }
            println!(
                "{}",
                serde_json::to_string(&result).expect("result serializes")
            );
            Ok(())
        }
        Command::Synth { config, out, seed } => {
            let mut cfg = match config {
                Some(path) => {
                    manifest.add_input(path)?;
                    SynthConfig::from_toml(&read_text(path)?)?
                }
                None => SynthConfig::default(),
            };
            if let Some(seed) = seed {
                cfg.seed = *seed;
            }
            manifest.seed = Some(cfg.seed);
            let truth = generate(&cfg, out)?;
            println!(
                "{}",
                serde_json::to_string(&truth).expect("truth serializes")
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();

    let threads = cli.threads.or_else(|| {
        std::env::var("CARL_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(n) = threads {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global();
    }

    let mut manifest = RunManifest::new(std::env::args().collect());
    let status = run(&cli, &mut manifest);
    manifest.finish();
    eprintln!("{}", manifest.to_json());
    if let Some(path) = &cli.manifest {
        if let Err(err) = std::fs::write(path, manifest.to_json() + "\n") {
            eprintln!("warning: could not write manifest: {err}");
        }
    }

    match status {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => fail(err),
    }
}
