use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use casework::data::{load_csv, one_hot_encode, write_csv, EncodedDataset, HouseholdRecord, Intervention, Schema};
use casework::discretion::{analyze, subgroup_indices, cross_tab};
use casework::pipeline::{
    analyze_config, auc_table_csv, auc_table_text, consistency, discretion_inputs, matrix_csv, train_all,
    train_short_trees, ModelFamily, PipelineConfig, ScoringPopulation,
};
use casework::scoring::VulnerabilityScorer;
use casework::stats::roc_curve;
use casework::synthgen::{generate, GeneratorConfig};
use casework::tree::{extract_rules, rules_to_text};
use casework::{svg, Error};

#[derive(Parser)]
#[command(name = "casework", version, about = "Caseworker decision analysis pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic household dataset and its ground truth.
    Gen(Common),
    /// Train short trees, CART and boosted models and report test AUCs.
    Train {
        #[command(flatten)]
        common: Common,
        /// Override the short-tree depth cap.
        #[arg(long)]
        depth: Option<usize>,
    },
    /// Spearman consistency of the short-tree replicates.
    Consistency(Common),
    /// Resampling tests on the discretionary ES/TH subgroups.
    Discretion {
        #[command(flatten)]
        common: Common,
        /// Score every household.
        #[arg(long, conflicts_with = "test_split")]
        full_data: bool,
        /// Score only the held-out split.
        #[arg(long)]
        test_split: bool,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    threads: Option<usize>,
}

enum Failure {
    Config(String),
    Data(String),
    Internal(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Data(_) => 3,
            Failure::Internal(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Data(m) | Failure::Internal(m) => m,
        }
    }
}

fn config_err(e: Error) -> Failure {
    Failure::Config(e.to_string())
}

fn data_err(e: Error) -> Failure {
    match e {
        Error::InvalidConfig(_) | Error::InvalidSchema(_) => Failure::Config(e.to_string()),
        Error::Io { .. }
        | Error::UnknownColumn { .. }
        | Error::MissingColumn { .. }
        | Error::UnknownCategoryLevel { .. }
        | Error::MalformedRow { .. }
        | Error::ExcludedIntervention { .. }
        | Error::EmptyInput
        | Error::Csv(_)
        | Error::SchemaMismatch(_)
        | Error::SingleClass
        | Error::InsufficientClassCount { .. }
        | Error::MissingCounterfactuals(_) => Failure::Data(e.to_string()),
        _ => Failure::Internal(e.to_string()),
    }
}

fn internal(e: Error) -> Failure {
    match e {
        Error::Io { .. } => Failure::Data(e.to_string()),
        _ => Failure::Internal(e.to_string()),
    }
}

/// Run configuration for the analysis commands. Paths are relative to the
/// config file.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunConfig {
    /// Household CSV.
    data: Option<PathBuf>,
    /// Generator config, used when `data` is absent.
    generator: Option<PathBuf>,
    schema: Option<PathBuf>,
    #[serde(default)]
    pipeline: PipelineConfig,
}

struct Loaded {
    cfg: PipelineConfig,
    schema: Schema,
    records: Vec<HouseholdRecord>,
    data: EncodedDataset,
    source: String,
}

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

fn load_run(common: &Common) -> Result<Loaded, Failure> {
    let text = read_text(&common.config)?;
    let run: RunConfig =
        serde_json::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", common.config.display())))?;
    let base = common.config.parent().unwrap_or(Path::new("."));
    let schema = match &run.schema {
        Some(p) => Schema::load(base.join(p)).map_err(config_err)?,
        None => Schema::household(),
    };
    let mut cfg = run.pipeline;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    let (records, source) = match (&run.data, &run.generator) {
        (Some(p), None) => {
            let path = base.join(p);
            (load_csv(&path, &schema).map_err(data_err)?, sha256_file(&path)?)
        }
        (None, Some(p)) => {
            let path = base.join(p);
            let gen = GeneratorConfig::load(&path).map_err(config_err)?;
            let (records, _) = generate(&gen, &schema).map_err(data_err)?;
            (records, sha256_file(&path)?)
        }
        _ => return Err(Failure::Config("config needs exactly one of `data` or `generator`".into())),
    };
    let data = one_hot_encode(&records, &schema).map_err(data_err)?;
    Ok(Loaded {
        cfg,
        schema,
        records,
        data,
        source,
    })
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn sha256_file(path: &Path) -> Result<String, Failure> {
    let bytes = fs::read(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    Ok(sha256_hex(&bytes))
}

#[derive(Serialize)]
struct ManifestEntry {
    path: String,
    bytes: usize,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest {
    command: &'static str,
    version: &'static str,
    seed: u64,
    config_sha256: String,
    input_sha256: String,
    files: Vec<ManifestEntry>,
}

/// Collects output files and writes them with a manifest.
struct Output {
    dir: PathBuf,
    files: BTreeMap<String, Vec<u8>>,
}

impl Output {
    fn new(dir: &Path) -> Self {
        Output {
            dir: dir.to_path_buf(),
            files: BTreeMap::new(),
        }
    }

    fn add(&mut self, name: impl Into<String>, bytes: impl Into<Vec<u8>>) {
        self.files.insert(name.into(), bytes.into());
    }

    fn finish(self, command: &'static str, seed: u64, config: &Path, input_sha256: String) -> Result<(), Failure> {
        let io = |p: &Path, e: std::io::Error| Failure::Data(format!("{}: {e}", p.display()));
        let mut entries = Vec::new();
        for (name, bytes) in &self.files {
            let path = self.dir.join(name);
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent).map_err(|e| io(parent, e))?;
            }
            fs::write(&path, bytes).map_err(|e| io(&path, e))?;
            entries.push(ManifestEntry {
                path: name.clone(),
                bytes: bytes.len(),
                sha256: sha256_hex(bytes),
            });
        }
        let manifest = Manifest {
            command,
            version: env!("CARGO_PKG_VERSION"),
            seed,
            config_sha256: sha256_file(config)?,
            input_sha256,
            files: entries,
        };
        let path = self.dir.join("manifest.json");
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| Failure::Internal(e.to_string()))?;
        fs::write(&path, text + "\n").map_err(|e| io(&path, e))
    }
}

fn cmd_gen(common: &Common) -> Result<(), Failure> {
    let mut cfg = GeneratorConfig::load(&common.config).map_err(config_err)?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    let schema = Schema::household();
    let (records, truth) = generate(&cfg, &schema).map_err(|e| match e {
        Error::InvalidConfig(_) | Error::InvalidArgument(_) => config_err(e),
        e => internal(e),
    })?;
    let mut out = Output::new(&common.out);
    let mut buf = Vec::new();
    write_csv(&mut buf, &records, &schema).map_err(internal)?;
    out.add("households.csv", buf);
    let mut buf = Vec::new();
    truth.write_csv(&mut buf).map_err(internal)?;
    out.add("ground_truth.csv", buf);
    let shares: Vec<String> = Intervention::ALL
        .iter()
        .zip(truth.label_shares())
        .map(|(k, v)| format!("{}={v:.4}", k.code()))
        .collect();
    eprintln!(
        "generated {} households ({}), {} flipped",
        records.len(),
        shares.join(" "),
        truth.n_flipped()
    );
    out.finish("gen", cfg.seed, &common.config, String::new())
}

fn cmd_train(common: &Common, depth: Option<usize>) -> Result<(), Failure> {
    let mut run = load_run(common)?;
    if let Some(d) = depth {
        run.cfg.short_tree.max_depth = d;
    }
    run.cfg.validate().map_err(config_err)?;
    let trained = train_all(&run.data, &run.cfg).map_err(data_err)?;
    let mut out = Output::new(&common.out);
    out.add("auc_table.txt", auc_table_text(&trained.rows));
    out.add("auc_table.csv", auc_table_csv(&trained.rows).map_err(internal)?);
    for k in Intervention::ALL {
        let code = k.code();
        for rep in &trained.short.replicates[&k] {
            out.add(format!("models/short_{code}_{}.json", rep.index), rep.tree.to_json());
        }
        let best = trained.short.best(k);
        out.add(
            format!("rules_{code}.txt"),
            rules_to_text(&extract_rules(&best.tree, code, 1)),
        );
        out.add(format!("models/cart_{code}.json"), trained.cart[&k].to_json());
        let fit = &trained.boosted[&k];
        out.add(format!("models/boosted_{code}.json"), fit.model.to_json());
        out.add(
            format!("grid_{code}.json"),
            serde_json::to_string_pretty(&fit.grid).map_err(|e| Failure::Internal(e.to_string()))?,
        );
        let mut curves = Vec::new();
        for family in [ModelFamily::ShortTree, ModelFamily::Cart, ModelFamily::Boosted] {
            let (scores, labels) = &trained.test_scores[&(family, k)];
            curves.push((family.label().to_string(), roc_curve(scores, labels).map_err(internal)?));
        }
        let refs: Vec<(String, &_)> = curves.iter().map(|(n, c)| (n.clone(), c)).collect();
        out.add(format!("roc_{code}.svg"), svg::roc_plot(&format!("ROC, {}", k.long_name()), &refs));
    }
    print!("{}", auc_table_text(&trained.rows));
    out.finish("train", run.cfg.seed, &common.config, run.source)
}

fn cmd_consistency(common: &Common) -> Result<(), Failure> {
    let run = load_run(common)?;
    run.cfg.validate().map_err(config_err)?;
    if run.cfg.n_replicates == 1 {
        eprintln!("warning: a single replicate gives a 1x1 matrix with no off-diagonal entries");
    }
    let short = train_short_trees(&run.data, &run.cfg).map_err(data_err)?;
    let results = consistency(&run.data, &short).map_err(data_err)?;
    let mut out = Output::new(&common.out);
    let mut summary = String::from("intervention  mean off-diagonal Spearman\n");
    for c in &results {
        out.add(format!("consistency_{}.csv", c.intervention.code()), matrix_csv(&c.matrix));
        let value = c.mean_off_diagonal.map_or("n/a".to_string(), |m| format!("{m:.4}"));
        summary.push_str(&format!("{:<14}{value}\n", c.intervention.code()));
    }
    out.add("consistency.txt", summary.clone());
    out.add(
        "consistency.json",
        serde_json::to_string_pretty(&results).map_err(|e| Failure::Internal(e.to_string()))?,
    );
    print!("{summary}");
    out.finish("consistency", run.cfg.seed, &common.config, run.source)
}

fn cmd_discretion(common: &Common, population: Option<ScoringPopulation>) -> Result<(), Failure> {
    let mut run = load_run(common)?;
    if let Some(p) = population {
        run.cfg.scoring_population = p;
    }
    run.cfg.validate().map_err(config_err)?;
    let scorer = VulnerabilityScorer::standard(&run.schema).map_err(config_err)?;
    let short = train_short_trees(&run.data, &run.cfg).map_err(data_err)?;
    let (records, predicted) = discretion_inputs(&run.records, &run.data, &short, &run.cfg).map_err(data_err)?;
    let actual: Vec<Intervention> = records.iter().map(|r| r.actual).collect();
    let groups = subgroup_indices(&predicted, &actual).map_err(internal)?;
    let mut out = Output::new(&common.out);
    let text = if groups.es_to_th.is_empty() || groups.th_to_es.is_empty() {
        let tab = cross_tab(&predicted, &actual).map_err(internal)?;
        let text = format!(
            "{}\nno discretionary records (EStoTH {}, THtoES {}); resampling tests skipped\n",
            tab.to_text(),
            groups.es_to_th.len(),
            groups.th_to_es.len()
        );
        let json = serde_json::json!({ "crosstab": tab, "tests": null });
        out.add(
            "discretion.json",
            serde_json::to_string_pretty(&json).map_err(|e| Failure::Internal(e.to_string()))?,
        );
        text
    } else {
        let report = analyze(&records, &predicted, &scorer, &analyze_config(&run.cfg)).map_err(data_err)?;
        for (group, metric, pop, t) in report.tests.entries() {
            let label = if metric == "VS" { "mean vulnerability score" } else { "mean marginal benefit" };
            out.add(
                format!("null_{group}_{metric}.svg"),
                svg::histogram(&format!("{group} {metric} vs {pop}"), label, &t.null_means, t.observed_mean, 30),
            );
        }
        out.add("discretion.json", report.to_json().map_err(internal)?);
        report.to_text()
    };
    out.add("discretion.txt", text.clone());
    print!("{text}");
    out.finish("discretion", run.cfg.seed, &common.config, run.source)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let common = match &cli.command {
        Command::Gen(c) | Command::Consistency(c) => c,
        Command::Train { common, .. } | Command::Discretion { common, .. } => common,
    };
    if let Some(n) = common.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(4);
        }
    }
    let result = match &cli.command {
        Command::Gen(c) => cmd_gen(c),
        Command::Train { common, depth } => cmd_train(common, *depth),
        Command::Consistency(c) => cmd_consistency(c),
        Command::Discretion {
            common,
            full_data,
            test_split,
        } => {
            let population = match (full_data, test_split) {
                (true, _) => Some(ScoringPopulation::FullData),
                (_, true) => Some(ScoringPopulation::TestSplit),
                _ => None,
            };
            cmd_discretion(common, population)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
