use std::collections::BTreeMap;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use genescan_core::blocking::extract_blocks;
use genescan_core::canonicalize::{apply_rules, default_rules, parse_rules, RewriteRule};
use genescan_core::dot::block_graph_to_dot;
use genescan_core::ingest::{export_json_graph, load_model, LoadedModel, ModelSource};
use genescan_core::matcher::{block_highlights, scan, ScanMode, ScanOptions, ScanReport};
use genescan_core::signature::{lint_signatures, parse_signatures, FamilySignature, Severity};
use genescan_core::ConstantOps;

const EXIT_FINDINGS: u8 = 1;
const EXIT_UNREADABLE: u8 = 2;
const EXIT_USAGE: u8 = 64;
const EXIT_NO_INPUT: u8 = 66;

#[derive(Parser)]
#[command(
    name = "genescan",
    version,
    about = "Identify neural-network architecture families from model graphs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Scan models against a signature database.
    Scan {
        /// Signature file or directory of *.json files.
        #[arg(long, env = "GENESCAN_SIGS")]
        sigs: PathBuf,
        /// Rewrite rules file; defaults to the built-in rules.
        #[arg(long)]
        rules: Option<PathBuf>,
        /// Report only the most specific matching family.
        #[arg(long)]
        best: bool,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
        /// Skip the operator-fusion pass.
        #[arg(long)]
        no_canonicalize: bool,
        /// Models scanned in parallel.
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u16).range(1..))]
        jobs: u16,
        /// Reject models whose values resolve to nothing.
        #[arg(long)]
        strict: bool,
        #[arg(required = true)]
        models: Vec<PathBuf>,
    },
    /// Check a signature database.
    Lint {
        #[arg(env = "GENESCAN_SIGS")]
        sigs: PathBuf,
    },
    /// Print a model's block decomposition as JSON or DOT.
    Blocks {
        model: PathBuf,
        #[arg(long)]
        dot: bool,
        /// Color blocks belonging to families matched from this database.
        #[arg(long)]
        sigs: Option<PathBuf>,
        #[arg(long)]
        rules: Option<PathBuf>,
        #[arg(long)]
        no_canonicalize: bool,
    },
    /// Print a model in the JSON graph interchange format.
    Export {
        model: PathBuf,
        /// Apply the operator-fusion pass first.
        #[arg(long)]
        canonicalize: bool,
        #[arg(long)]
        rules: Option<PathBuf>,
    },
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

fn require(path: &Path) -> Result<(), Failure> {
    if path.exists() {
        Ok(())
    } else {
        Err(Failure::new(
            EXIT_NO_INPUT,
            format!("{}: no such file or directory", path.display()),
        ))
    }
}

fn load_signatures(path: &Path) -> Result<Vec<FamilySignature>, Failure> {
    require(path)?;
    let files = if path.is_dir() {
        let mut files: Vec<PathBuf> = std::fs::read_dir(path)
            .map_err(|e| Failure::new(EXIT_NO_INPUT, format!("{}: {e}", path.display())))?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == "json"))
            .collect();
        files.sort();
        files
    } else {
        vec![path.to_path_buf()]
    };
    let mut db = Vec::new();
    let mut origin: BTreeMap<String, PathBuf> = BTreeMap::new();
    for file in files {
        let bytes =
            std::fs::read(&file).map_err(|e| Failure::new(EXIT_NO_INPUT, format!("{}: {e}", file.display())))?;
        let families =
            parse_signatures(&bytes).map_err(|e| Failure::new(EXIT_FINDINGS, format!("{}: {e}", file.display())))?;
        for family in families {
            if path.is_dir() {
                if let Some(previous) = origin.get(&family.name) {
                    return Err(Failure::new(
                        EXIT_FINDINGS,
                        format!(
                            "family '{}' defined in both {} and {}",
                            family.name,
                            previous.display(),
                            file.display()
                        ),
                    ));
                }
                origin.insert(family.name.clone(), file.clone());
            }
            db.push(family);
        }
    }
    Ok(db)
}

fn load_rules(path: Option<&Path>, enabled: bool) -> Result<Vec<RewriteRule>, Failure> {
    if !enabled {
        return Ok(Vec::new());
    }
    match path {
        None => Ok(default_rules()),
        Some(p) => {
            require(p)?;
            let bytes = std::fs::read(p).map_err(|e| Failure::new(EXIT_NO_INPUT, format!("{}: {e}", p.display())))?;
            parse_rules(&bytes).map_err(|e| Failure::new(EXIT_FINDINGS, format!("{}: {e}", p.display())))
        }
    }
}

fn read_model(path: &Path, strict: bool) -> Result<LoadedModel, Failure> {
    let source = ModelSource::from_path(path)
        .map_err(|e| Failure::new(EXIT_NO_INPUT, format!("{}: {e}", path.display())))?
        .map_err(|e| Failure::new(EXIT_UNREADABLE, e.to_string()))?;
    load_model(&source, strict).map_err(|e| Failure::new(EXIT_UNREADABLE, e.to_string()))
}

fn render_text(report: &ScanReport) -> String {
    let mut out = format!(
        "{}: {} detection(s), {} nodes, {} blocks, {:.1} ms\n",
        report.origin,
        report.detections.len(),
        report.stats.nodes,
        report.stats.blocks,
        report.stats.ms
    );
    for d in &report.detections {
        out.push_str(&format!(
            "  {:<28} specificity {:>3}  components {}  occurrences {:?}\n",
            d.family, d.specificity, d.total_components, d.start_block_ids
        ));
    }
    for w in &report.warnings {
        out.push_str(&format!("  warning: {w}\n"));
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn run_scan(
    sigs: &Path,
    rules: Option<&Path>,
    best: bool,
    format: Format,
    canonicalize: bool,
    jobs: usize,
    strict: bool,
    models: &[PathBuf],
) -> Result<u8, Failure> {
    for m in models {
        require(m)?;
    }
    let db = load_signatures(sigs)?;
    let options = ScanOptions {
        mode: if best {
            ScanMode::BestMatch
        } else {
            ScanMode::AllMatches
        },
        rules: load_rules(rules, canonicalize)?,
        constant_ops: ConstantOps::default(),
    };

    let results: Vec<Mutex<Option<Result<ScanReport, Failure>>>> = models.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|s| {
        for _ in 0..jobs.min(models.len()) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(path) = models.get(i) else { break };
                let result = read_model(path, strict).map(|loaded| {
                    let mut report = scan(&loaded.graph, &db, &options, &path.display().to_string());
                    let mut warnings = loaded.warnings;
                    warnings.append(&mut report.warnings);
                    report.warnings = warnings;
                    report
                });
                *results[i].lock().expect("worker panicked") = Some(result);
            });
        }
    });

    let stdout = io::stdout();
    let mut out = stdout.lock();
    let mut code = 0;
    for slot in results {
        match slot
            .into_inner()
            .expect("worker panicked")
            .expect("every model scanned")
        {
            Ok(report) => {
                let text = match format {
                    Format::Json => report.to_json() + "\n",
                    Format::Text => render_text(&report),
                };
                let _ = out.write_all(text.as_bytes());
            }
            Err(f) => {
                eprintln!("genescan: {}", f.message);
                code = code.max(f.code);
            }
        }
    }
    Ok(code)
}

fn run_lint(sigs: &Path) -> Result<u8, Failure> {
    let db = load_signatures(sigs)?;
    let findings = lint_signatures(&db);
    for f in &findings {
        println!("{f}");
    }
    let errors = findings.iter().filter(|f| f.severity == Severity::Error).count();
    eprintln!(
        "{} families, {} error(s), {} warning(s)",
        db.len(),
        errors,
        findings.len() - errors
    );
    Ok(if errors > 0 { EXIT_FINDINGS } else { 0 })
}

fn run_blocks(
    model: &Path,
    dot: bool,
    sigs: Option<&Path>,
    rules: Option<&Path>,
    canonicalize: bool,
) -> Result<u8, Failure> {
    require(model)?;
    let db = sigs.map(load_signatures).transpose()?;
    let rules = load_rules(rules, canonicalize)?;
    let loaded = read_model(model, false)?;
    let consts = ConstantOps::default();
    let graph = apply_rules(&loaded.graph, &rules, &consts).graph;
    let blocks = extract_blocks(&graph, &consts);
    let highlights = db.map(|db| block_highlights(&db, &blocks)).unwrap_or_default();
    if dot {
        print!("{}", block_graph_to_dot(&blocks, &highlights));
        return Ok(0);
    }
    let name = |id: &genescan_core::NodeId| graph.nodes()[id.0].name.clone();
    let doc = json!({
        "blocks": blocks.blocks().iter().map(|b| json!({
            "id": b.id,
            "ops": b.op_types,
            "nodes": b.node_ids.iter().map(name).collect::<Vec<_>>(),
            "families": highlights.get(&b.id).cloned().unwrap_or_default(),
        })).collect::<Vec<_>>(),
        "edges": blocks.edges().iter().map(|e| json!({
            "src": e.src, "dst": e.dst, "multiplicity": e.multiplicity,
        })).collect::<Vec<_>>(),
        "isolated": blocks.isolated().iter().map(name).collect::<Vec<_>>(),
    });
    println!("{}", serde_json::to_string_pretty(&doc).expect("serializable"));
    Ok(0)
}

fn run_export(model: &Path, canonicalize: bool, rules: Option<&Path>) -> Result<u8, Failure> {
    require(model)?;
    let rules = load_rules(rules, canonicalize)?;
    let loaded = read_model(model, false)?;
    let graph = apply_rules(&loaded.graph, &rules, &ConstantOps::default()).graph;
    let doc = export_json_graph(&graph, loaded.opset_version)
        .map_err(|e| Failure::new(EXIT_FINDINGS, format!("{}: {e}", model.display())))?;
    println!("{}", serde_json::to_string_pretty(&doc).expect("serializable"));
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    let result = match &cli.command {
        Command::Scan {
            sigs,
            rules,
            best,
            format,
            no_canonicalize,
            jobs,
            strict,
            models,
        } => run_scan(
            sigs,
            rules.as_deref(),
            *best,
            *format,
            !no_canonicalize,
            usize::from(*jobs),
            *strict,
            models,
        ),
        Command::Lint { sigs } => run_lint(sigs),
        Command::Blocks {
            model,
            dot,
            sigs,
            rules,
            no_canonicalize,
        } => run_blocks(model, *dot, sigs.as_deref(), rules.as_deref(), !no_canonicalize),
        Command::Export {
            model,
            canonicalize,
            rules,
        } => run_export(model, *canonicalize, rules.as_deref()),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("genescan: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
