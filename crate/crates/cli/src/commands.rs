use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};

use bbc_core::biometric::{enroll_fleet, BiometricId, Registry, DEFAULT_DIM};
use bbc_core::chain::validate_chain;
use bbc_core::credit::{audit, AuditReport};
use bbc_core::sim::{run, RunResult, WorldError};
use bbc_core::store::chain_from_text;
use bbc_core::Chain;

use crate::config::RunConfig;
use crate::{CliError, ExitStatus};

fn read(path: &Path, status: ExitStatus) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::new(status, format!("cannot read {}: {e}", path.display())))
}

fn internal(e: impl fmt::Display) -> CliError {
    CliError::new(ExitStatus::Internal, e.to_string())
}

fn load_registry(path: &Path) -> Result<Registry, CliError> {
    let text = read(path, ExitStatus::Config)?;
    Registry::from_text(&text)
        .map_err(|e| CliError::new(ExitStatus::Validation, format!("registry {}: {e}", path.display())))
}

/// `registry.txt` beside the chain store, or one level up for stores kept
/// under `chains/`.
fn find_registry(chain: &Path) -> Option<PathBuf> {
    let dir = chain.parent()?;
    [dir.join("registry.txt"), dir.parent()?.join("registry.txt")].into_iter().find(|p| p.is_file())
}

fn registry_for(chain: &Path, registry: Option<&Path>) -> Result<Registry, CliError> {
    let path = match registry {
        Some(p) => p.to_path_buf(),
        None => find_registry(chain).ok_or_else(|| {
            CliError::new(ExitStatus::Config, format!("no --registry given and none found near {}", chain.display()))
        })?,
    };
    load_registry(&path)
}

fn load_chain(path: &Path) -> Result<Chain, CliError> {
    let text = read(path, ExitStatus::Validation)?;
    chain_from_text(&text).map_err(|e| CliError::new(ExitStatus::Validation, format!("{}: {e}", path.display())))
}

/// What `bbc run` should do with one or more configs.
#[derive(Debug, Clone, Default)]
pub struct RunRequest {
    pub configs: Vec<PathBuf>,
    pub out: Option<PathBuf>,
    pub golden: Option<PathBuf>,
    pub registry: Option<PathBuf>,
}

fn stem(path: &Path) -> String {
    path.file_stem().map_or("run".to_string(), |s| s.to_string_lossy().into_owned())
}

/// Byte-compares a run against a golden directory tree, or its run log
/// against a golden file.
pub fn compare_golden(result: &RunResult, golden: &Path) -> Result<(), CliError> {
    let mismatch = |m: String| CliError::new(ExitStatus::Mismatch, m);
    let files = result.output_files();
    if golden.is_dir() {
        for (rel, text) in &files {
            let expected = read(&golden.join(rel), ExitStatus::Mismatch)?;
            if &expected != text {
                return Err(mismatch(format!("golden mismatch in {rel} ({})", first_difference(&expected, text))));
            }
        }
        let chains = golden.join("chains");
        if chains.is_dir() {
            let ours = files.iter().filter(|(r, _)| r.starts_with("chains/")).count();
            let theirs = std::fs::read_dir(&chains).map_err(internal)?.count();
            if ours != theirs {
                return Err(mismatch(format!("golden has {theirs} node chains, run produced {ours}")));
            }
        }
        Ok(())
    } else {
        let expected = read(golden, ExitStatus::Mismatch)?;
        let log = result.run_log();
        if expected == log {
            Ok(())
        } else {
            Err(mismatch(format!("golden mismatch in run.log ({})", first_difference(&expected, &log))))
        }
    }
}

fn first_difference(expected: &str, actual: &str) -> String {
    let mut e = expected.lines();
    let mut a = actual.lines();
    let mut line = 1;
    loop {
        match (e.next(), a.next()) {
            (Some(x), Some(y)) if x == y => line += 1,
            (None, None) => return "trailing bytes differ".to_string(),
            _ => return format!("first difference at line {line}"),
        }
    }
}

fn run_one(config: &Path, req: &RunRequest, batch: bool) -> Result<String, CliError> {
    let cfg = RunConfig::load(config)?;
    let scenario = cfg.scenario()?;
    let out = match (&req.out, &cfg.out_dir) {
        (Some(dir), _) if batch => dir.join(stem(config)),
        (Some(dir), _) => dir.clone(),
        (None, Some(dir)) => dir.clone(),
        (None, None) => PathBuf::from("out").join(stem(config)),
    };
    let result = run(&scenario).map_err(|e| match e {
        WorldError::Scenario(s) => CliError::new(ExitStatus::Config, s.to_string()),
        other => internal(other),
    })?;
    if let Some(path) = &req.registry {
        let given = load_registry(path)?;
        if given.to_text() != result.registry.to_text() {
            return Err(CliError::new(
                ExitStatus::Config,
                format!(
                    "registry {} (fleet_seed={} size={} dim={}) does not match the scenario (seed={} nodes={} feature_dim={})",
                    path.display(),
                    given.fleet_seed(),
                    given.len(),
                    given.dim(),
                    scenario.seed,
                    scenario.n_nodes(),
                    scenario.feature_dim
                ),
            ));
        }
    }
    result.write_to(&out).map_err(|e| internal(format!("cannot write {}: {e}", out.display())))?;

    let m = &result.metrics;
    let mut report = String::new();
    if cfg.verbosity >= 2 {
        for t in &result.traces {
            let _ = writeln!(report, "{}", t.to_line());
        }
    }
    if cfg.verbosity >= 1 {
        let _ = writeln!(
            report,
            "run {}: rounds={} height={} commit_rate={} converged={} rejected={} -> {}",
            stem(config),
            m.rounds,
            m.final_height,
            m.commit_rate().map_or("undefined".to_string(), |r| format!("{r:.6}")),
            m.converged,
            m.rejected_total(),
            out.display()
        );
    }
    if let Some(golden) = req.golden.as_ref().or(cfg.golden.as_ref()) {
        compare_golden(&result, golden)?;
        if cfg.verbosity >= 1 {
            let _ = writeln!(report, "golden {}: identical", golden.display());
        }
    }
    Ok(report)
}

/// Runs every config. Several configs run concurrently, each into its own
/// `<out>/<stem>` directory; the worst status wins.
pub fn cmd_run(req: &RunRequest) -> Result<String, CliError> {
    match req.configs.len() {
        0 => Err(CliError::new(ExitStatus::Config, "run needs at least one --config")),
        1 => run_one(&req.configs[0], req, false),
        _ => {
            if req.golden.is_some() {
                return Err(CliError::new(ExitStatus::Config, "--golden takes a single --config"));
            }
            let results: Vec<Result<String, CliError>> = std::thread::scope(|s| {
                let handles: Vec<_> = req.configs.iter().map(|c| s.spawn(move || run_one(c, req, true))).collect();
                handles.into_iter().map(|h| h.join().unwrap_or_else(|_| Err(internal("run thread panicked")))).collect()
            });
            let mut report = String::new();
            let mut worst: Option<CliError> = None;
            for (cfg, r) in req.configs.iter().zip(results) {
                match r {
                    Ok(text) => report.push_str(&text),
                    Err(e) => {
                        let _ = writeln!(report, "{}: {e}", cfg.display());
                        if worst.as_ref().is_none_or(|w| e.status > w.status) {
                            worst = Some(e);
                        }
                    }
                }
            }
            match worst {
                Some(w) => Err(CliError::new(w.status, report.trim_end().to_string())),
                None => Ok(report),
            }
        }
    }
}

/// Full structural and cryptographic validation of a chain store.
pub fn cmd_validate(chain: &Path, registry: Option<&Path>) -> Result<String, CliError> {
    let registry = registry_for(chain, registry)?;
    let parsed = load_chain(chain)?;
    validate_chain(&parsed, &registry).map_err(|e| {
        CliError::new(ExitStatus::Validation, format!("{}: height {}: {}", chain.display(), e.height, e.rejection))
    })?;
    Ok(format!("ok: {} blocks, height {}, head {}\n", parsed.blocks().len(), parsed.height(), parsed.head()))
}

/// Reads `credit.<id>=<n>` lines from a metrics file.
pub fn parse_credit_snapshot(text: &str) -> Result<BTreeMap<BiometricId, u64>, String> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let Some(rest) = line.strip_prefix("credit.") else { continue };
        let (id, value) = rest.split_once('=').ok_or(format!("line {}: malformed credit entry", i + 1))?;
        let id = BiometricId::from_hex(id).map_err(|e| format!("line {}: {e}", i + 1))?;
        let value: u64 = value.parse().map_err(|_| format!("line {}: bad credit {value:?}", i + 1))?;
        if out.insert(id, value).is_some() {
            return Err(format!("line {}: duplicate credit for {id}", i + 1));
        }
    }
    Ok(out)
}

fn fold_events(report: &AuditReport) -> BTreeMap<BiometricId, i64> {
    let mut table = BTreeMap::new();
    for e in &report.events {
        *table.entry(e.subject).or_insert(0i64) += e.delta;
    }
    table
}

/// Replays the chain into a credit event log and table. When a metrics
/// snapshot is given, or `metrics.txt` sits beside the chain, its credit
/// table must match exactly.
pub fn cmd_audit(chain: &Path, registry: Option<&Path>, metrics: Option<&Path>) -> Result<String, CliError> {
    let registry = registry_for(chain, registry)?;
    let parsed = load_chain(chain)?;
    let report = audit(&parsed, &registry)
        .map_err(|e| CliError::new(ExitStatus::Validation, format!("{}: {e}", chain.display())))?;

    let folded = fold_events(&report);
    let table: BTreeMap<BiometricId, i64> = report.ledger.credits().iter().map(|(k, v)| (*k, *v as i64)).collect();
    if folded != table {
        return Err(CliError::new(ExitStatus::Mismatch, "event log does not fold to the credit table"));
    }

    let mut text = report.to_text();
    let snapshot = metrics
        .map(Path::to_path_buf)
        .or_else(|| chain.parent().map(|d| d.join("metrics.txt")).filter(|p| p.is_file()));
    if let Some(path) = snapshot {
        let snap = parse_credit_snapshot(&read(&path, ExitStatus::Config)?)
            .map_err(|e| CliError::new(ExitStatus::Mismatch, format!("{}: {e}", path.display())))?;
        if &snap != report.ledger.credits() {
            let differing = report
                .ledger
                .credits()
                .iter()
                .find(|(id, c)| snap.get(id) != Some(c))
                .map(|(id, c)| format!("{id}: chain {c}, snapshot {:?}", snap.get(id)))
                .unwrap_or_else(|| "snapshot lists identities the chain does not".to_string());
            return Err(CliError::new(
                ExitStatus::Mismatch,
                format!("{text}audit mismatch against {}: {differing}", path.display()),
            ));
        }
        let _ = writeln!(text, "snapshot {}: match", path.display());
    }
    Ok(text)
}

/// Generates a synthetic fleet registry. Writes it to `registry`, or to
/// `<out>/registry.txt`, or returns it for stdout.
pub fn cmd_enroll(
    seed: u64,
    size: usize,
    dim: Option<usize>,
    registry: Option<&Path>,
    out: Option<&Path>,
) -> Result<String, CliError> {
    if size == 0 {
        return Err(CliError::new(ExitStatus::Config, "invalid size: must be at least 1"));
    }
    let dim = dim.unwrap_or(DEFAULT_DIM);
    if dim < 2 {
        return Err(CliError::new(ExitStatus::Config, "invalid dim: must be at least 2"));
    }
    let fleet = enroll_fleet(seed, size, dim).map_err(internal)?;
    let text = fleet.registry.to_text();
    let target = registry.map(Path::to_path_buf).or_else(|| out.map(|d| d.join("registry.txt")));
    match target {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(internal)?;
            }
            std::fs::write(&path, &text).map_err(|e| internal(format!("cannot write {}: {e}", path.display())))?;
            Ok(format!("enrolled {size} identities (seed {seed}, dim {dim}) -> {}\n", path.display()))
        }
        None => Ok(text),
    }
}
