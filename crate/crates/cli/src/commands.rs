use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use ildae_core::analytics::{label_difficulty_report, ood_correlation_compare, ood_mu_sweep, region_report};
use ildae_core::curation::{flag_instances, repair_report, FlagSet, DEFAULT_FLAG_COUNT};
use ildae_core::difficulty::{build_manifest, compute_difficulty, EnsembleManifest};
use ildae_core::io::{
    correctness_log_lines, prediction_log_lines, read_correctness_log, read_difficulty_csv, read_document,
    read_instances, read_ood_accuracies, read_prediction_log, to_document, write_difficulty_csv, write_document,
    write_file, write_instances, write_ood_accuracies, write_prediction_log, write_sweep_csv, CsvOrder, ReadOptions,
};
use ildae_core::selection::{
    budget_from_percentage, select_banded, select_length_heuristic, select_random, PolicyKind, SelectionPolicy,
};
use ildae_core::simulator::{
    gen_candidate_correctness, gen_ensemble_confidences, gen_instances, gen_ood, gen_world, CorrectnessMode,
    WorldParams,
};
use ildae_core::sweep::{fidelity_sweep, SweepConfig, SweepReport};
use ildae_core::types::{DifficultyVector, WeightingParams};
use serde::Serialize;
use serde_json::Value;

use crate::cli::*;

/// Deterministic record of how an output was produced.
#[derive(Debug, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub version: &'static str,
    pub core_version: &'static str,
    pub command: String,
    pub parameters: Value,
}

impl Provenance {
    pub fn new(command: &str, parameters: &impl Serialize) -> Result<Self> {
        Ok(Self {
            tool: "ildae",
            version: env!("CARGO_PKG_VERSION"),
            core_version: ildae_core_version(),
            command: command.into(),
            parameters: serde_json::to_value(parameters)?,
        })
    }
}

fn ildae_core_version() -> &'static str {
    // Both crates share the workspace version.
    env!("CARGO_PKG_VERSION")
}

fn provenance_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".provenance.json");
    out.with_file_name(name)
}

fn write_provenance(out: &Path, command: &str, params: &impl Serialize) -> Result<()> {
    write_document(&provenance_path(out), "provenance", &Provenance::new(command, params)?)?;
    Ok(())
}

fn read_difficulty(path: &Path) -> Result<DifficultyVector> {
    let file = File::open(path).with_context(|| format!("cannot open difficulty file {}", path.display()))?;
    read_difficulty_csv(file, CsvOrder::Strict).with_context(|| format!("in {}", path.display()))
}

fn write_difficulty(path: &Path, d: &DifficultyVector) -> Result<()> {
    let mut buf = Vec::new();
    write_difficulty_csv(d, &mut buf)?;
    write_file(path, &buf)?;
    Ok(())
}

fn band_policy(kind: PolicyKind, bands: &BandArgs, seed: u64) -> Result<SelectionPolicy> {
    let (e, s) = (&bands.band_edges, &bands.band_shares);
    if e.len() != 2 || s.len() != 3 {
        bail!("--band-edges takes two values and --band-shares three");
    }
    Ok(SelectionPolicy::new(kind, (e[0], e[1]), (s[0], s[1], s[2]), seed)?)
}

pub fn manifest(a: &ManifestArgs) -> Result<()> {
    let m = build_manifest(&a.data_fractions, &a.corruption_fractions, a.epochs)?;
    write_document(&a.out, "manifest", &m)?;
    write_provenance(&a.out, "manifest", a)?;
    println!("manifest: {} entries -> {}", m.len(), a.out.display());
    Ok(())
}

pub fn score(a: &ScoreArgs) -> Result<()> {
    let manifest = a
        .manifest
        .as_deref()
        .map(|p| read_document::<EnsembleManifest>(p, "manifest"))
        .transpose()?;
    let opts = ReadOptions {
        manifest,
        strict: !a.lenient,
    };
    let log = read_prediction_log(&a.log, &opts)?;
    let d = compute_difficulty(&log.confidences);
    write_difficulty(&a.out, &d)?;
    write_provenance(&a.out, "score", a)?;
    println!(
        "score: {} instances from {} runs ({} masked cells) -> {}",
        d.len(),
        log.confidences.n_models(),
        log.masked_entries,
        a.out.display()
    );
    Ok(())
}

pub fn select(a: &SelectArgs) -> Result<()> {
    let d = read_difficulty(&a.difficulty)?;
    let budget = match (a.budget, a.percent) {
        (Some(b), _) => b,
        (None, Some(p)) => budget_from_percentage(d.len(), p)?,
        (None, None) => bail!("give --budget or --percent"),
    };
    let kind = PolicyKind::from(a.policy);
    let policy = band_policy(kind, &a.bands, a.seed)?;
    let plan = match kind {
        PolicyKind::Banded => select_banded(&d, budget, &policy)?,
        PolicyKind::Random => select_random(d.instance_ids(), budget, a.seed)?,
        PolicyKind::LengthHeuristic => {
            let path = a.instances.as_deref().context("the length policy needs --instances")?;
            let set = read_instances(path)?;
            select_length_heuristic(set.records(), budget, &policy)?
        }
    };
    write_document(&a.out, "selection_plan", &plan)?;
    write_provenance(&a.out, "select", a)?;
    println!(
        "select: {} of {} instances ({}) -> {}",
        plan.len(),
        d.len(),
        kind.as_str(),
        a.out.display()
    );
    Ok(())
}

fn sweep_config(
    policies: &[PolicyArg],
    budgets: &[f64],
    replicates: usize,
    seed: u64,
    bands: &BandArgs,
) -> Result<SweepConfig> {
    let p = band_policy(PolicyKind::Banded, bands, seed)?;
    Ok(SweepConfig {
        policies: policies.iter().map(|&p| p.into()).collect(),
        percentages: budgets.to_vec(),
        replicates,
        seed,
        band_edges: p.band_edges,
        band_shares: p.band_shares,
    })
}

/// Table with one row per policy and one `mean±std` column per budget.
pub fn format_grid(report: &SweepReport, percentages: &[f64]) -> String {
    let mut out = format!("{:<18}", "policy \\ budget");
    for p in percentages {
        out.push_str(&format!("{:>16}", format!("{p}%")));
    }
    out.push('\n');
    let mut policies: Vec<PolicyKind> = Vec::new();
    for c in &report.cells {
        if !policies.contains(&c.policy) {
            policies.push(c.policy);
        }
    }
    for policy in policies {
        out.push_str(&format!("{:<18}", policy.as_str()));
        for &p in percentages {
            let cell = report.cell(policy, p).expect("grid cell");
            let text = match (cell.mean_tau, cell.std_tau) {
                (Some(m), Some(s)) => format!("{m:.3}±{s:.3}"),
                _ => "-".to_string(),
            };
            out.push_str(&format!("{text:>16}"));
        }
        out.push('\n');
    }
    out
}

pub fn fidelity(a: &FidelityArgs) -> Result<()> {
    let v = read_correctness_log(&a.correctness)?;
    let d = read_difficulty(&a.difficulty)?;
    let records = a.instances.as_deref().map(read_instances).transpose()?;
    let cfg = sweep_config(&a.policies, &a.budgets, a.replicates, a.seed, &a.bands)?;
    let report = fidelity_sweep(&v, &d, records.as_ref().map(|s| s.records()), &cfg, a.workers)?;
    write_document(&a.out, "fidelity_sweep", &report)?;
    if let Some(csv) = &a.csv {
        let mut buf = Vec::new();
        write_sweep_csv(&report, &mut buf)?;
        write_file(csv, &buf)?;
    }
    write_provenance(&a.out, "fidelity", a)?;
    print!("{}", format_grid(&report, &a.budgets));
    Ok(())
}

pub fn report(kind: &ReportCommand) -> Result<()> {
    match kind {
        ReportCommand::Regions(a) => {
            let v = read_correctness_log(&a.correctness)?;
            let d = read_difficulty(&a.difficulty)?;
            let r = region_report(&v, &d, a.bins)?;
            write_document(&a.out, "region_report", &r)?;
            write_provenance(&a.out, "report regions", a)?;
            println!("report regions: {} bins -> {}", a.bins, a.out.display());
        }
        ReportCommand::Labels(a) => {
            let set = read_instances(&a.instances)?;
            let d = read_difficulty(&a.difficulty)?;
            let r = label_difficulty_report(&set, &d)?;
            write_document(&a.out, "label_report", &r)?;
            write_provenance(&a.out, "report labels", a)?;
            for (label, s) in &r.labels {
                println!("{label:<16} n={:<6} mean={:.4} std={:.4}", s.count, s.mean, s.std);
            }
        }
        ReportCommand::Ood(a) => {
            let v = read_correctness_log(&a.correctness)?;
            let d = read_difficulty(&a.difficulty)?;
            let ood = read_ood_accuracies(
                File::open(&a.ood_accuracies).with_context(|| format!("cannot open {}", a.ood_accuracies.display()))?,
            )?;
            let r = ood_report(&v, &d, &ood, a.mu, &a.mu_grid)?;
            write_document(&a.out, "ood_report", &r)?;
            write_provenance(&a.out, "report ood", a)?;
            println!(
                "report ood: tau unweighted {:.4}, weighted (mu={}) {:.4}",
                r.comparison.tau_unweighted, a.mu, r.comparison.tau_weighted
            );
        }
        ReportCommand::Repair(a) => {
            let before = read_correctness_log(&a.before)?;
            let after = read_correctness_log(&a.after)?;
            let flags: FlagSet = read_document(&a.flags, "flag_set")?;
            let r = repair_report(&before, &after, &flags)?;
            write_document(&a.out, "repair_report", &r)?;
            write_provenance(&a.out, "report repair", a)?;
            for (name, class) in [("trivial", &r.trivial), ("erroneous", &r.erroneous)] {
                if let Some(c) = class {
                    println!(
                        "{name:<10} before {:.4} after {:.4} delta {:+.4}",
                        c.before, c.after, c.delta
                    );
                }
            }
        }
    }
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct OodReport {
    pub comparison: ildae_core::analytics::OodComparison,
    pub sweep: Vec<ildae_core::analytics::MuSweepPoint>,
}

fn ood_report(
    v: &ildae_core::types::CorrectnessMatrix,
    d: &DifficultyVector,
    ood: &BTreeMap<String, f64>,
    mu: f64,
    grid: &[f64],
) -> Result<OodReport> {
    Ok(OodReport {
        comparison: ood_correlation_compare(v, d, WeightingParams::new(mu)?, ood)?,
        sweep: ood_mu_sweep(v, d, grid, ood)?,
    })
}

pub fn flag(a: &FlagArgs) -> Result<()> {
    let d = read_difficulty(&a.difficulty)?;
    let flags = flag_instances(&d, a.k_low, a.k_high)?;
    write_document(&a.out, "flag_set", &flags)?;
    write_provenance(&a.out, "flag", a)?;
    println!(
        "flag: {} trivial, {} erroneous candidates -> {}",
        flags.trivial_ids.len(),
        flags.erroneous_candidate_ids.len(),
        a.out.display()
    );
    Ok(())
}

fn write_lines(path: &Path, lines: &[String]) -> Result<()> {
    let mut text = String::with_capacity(lines.iter().map(|l| l.len() + 1).sum());
    for l in lines {
        text.push_str(l);
        text.push('\n');
    }
    write_file(path, text.as_bytes())?;
    Ok(())
}

/// Materializes world → logs → scores → reports under `a.out`.
pub fn simulate(a: &SimulateArgs) -> Result<()> {
    let mut params = WorldParams::with_seed(a.seed);
    params.n_instances = a.n_instances;
    params.n_candidates = a.n_candidates;
    params.noise_sd = a.noise_sd;
    params.mislabel_rate = a.mislabel_rate;
    let world = gen_world(&params)?;
    let manifest = EnsembleManifest::default();
    let out = &a.out;
    std::fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;

    write_document(&out.join("manifest.json"), "manifest", &manifest)?;
    write_document(&out.join("world.json"), "world", &world)?;

    let instances = gen_instances(&world);
    let file = BufWriter::new(File::create(out.join("instances.jsonl")).context("cannot create instances.jsonl")?);
    write_instances(&instances, file)?;

    let conf = gen_ensemble_confidences(&world, &manifest)?;
    let mut buf = Vec::new();
    write_prediction_log(&prediction_log_lines(&conf, Some(&manifest)), &mut buf)?;
    write_file(&out.join("predictions.jsonl"), &buf)?;
    drop(buf);

    let correct = gen_candidate_correctness(&world, CorrectnessMode::Stochastic)?;
    write_lines(&out.join("candidates.jsonl"), &correctness_log_lines(&correct)?)?;
    let ood = gen_ood(&world, a.ood_shift, CorrectnessMode::Stochastic)?;
    let ood_acc: BTreeMap<String, f64> = ood
        .rows()
        .map(|(id, row)| Ok((id.to_string(), ildae_core::analytics::accuracy(row)?)))
        .collect::<ildae_core::Result<_>>()?;
    let mut buf = Vec::new();
    write_ood_accuracies(&ood_acc, &mut buf)?;
    write_file(&out.join("ood_accuracies.csv"), &buf)?;

    // Scores come from the log as written, like any external log would.
    let log = read_prediction_log(
        &out.join("predictions.jsonl"),
        &ReadOptions {
            manifest: Some(manifest),
            strict: true,
        },
    )?;
    let d = compute_difficulty(&log.confidences);
    write_difficulty(&out.join("difficulty.csv"), &d)?;

    let k = DEFAULT_FLAG_COUNT.min(d.len() / 2);
    write_document(&out.join("flags.json"), "flag_set", &flag_instances(&d, k, k)?)?;

    let cfg = SweepConfig {
        percentages: a.budgets.clone(),
        replicates: a.replicates,
        seed: a.seed,
        ..SweepConfig::default()
    };
    let sweep = fidelity_sweep(&correct, &d, None, &cfg, a.workers)?;
    write_document(&out.join("fidelity.json"), "fidelity_sweep", &sweep)?;
    let mut buf = Vec::new();
    write_sweep_csv(&sweep, &mut buf)?;
    write_file(&out.join("fidelity.csv"), &buf)?;

    let reports = out.join("reports");
    write_document(
        &reports.join("regions.json"),
        "region_report",
        &region_report(&correct, &d, ildae_core::analytics::DEFAULT_REGION_BINS)?,
    )?;
    let set = ildae_core::types::InstanceSet::new(instances)?;
    write_document(
        &reports.join("labels.json"),
        "label_report",
        &label_difficulty_report(&set, &d)?,
    )?;
    let ood_r = ood_report(
        &correct,
        &d,
        &ood_acc,
        WeightingParams::DEFAULT_MU,
        &ildae_core::analytics::default_mu_grid(),
    )?;
    write_document(&reports.join("ood.json"), "ood_report", &ood_r)?;

    let prov = to_document("provenance", &Provenance::new("simulate", a)?)?;
    write_file(&out.join("provenance.json"), prov.as_bytes())?;

    println!("simulate: seed {} -> {}", a.seed, out.display());
    print!("{}", format_grid(&sweep, &a.budgets));
    Ok(())
}

pub fn serve(a: &ServeArgs) -> Result<()> {
    let mut config = ildae_service::ServiceConfig::from_env()?;
    if let Some(dir) = &a.data_dir {
        config.data_dir = dir.clone();
    }
    if let Some(addr) = a.addr {
        config.addr = addr;
    }
    if a.predictor_url.is_some() {
        config.predictor_url = a.predictor_url.clone();
    }
    if a.token.is_some() {
        config.token = a.token.clone();
    }
    config.stub_seed = a.stub_seed;
    config.timeout = std::time::Duration::from_millis(a.timeout_ms);
    config.concurrency = a.concurrency;
    let runtime = tokio::runtime::Runtime::new().context("cannot start async runtime")?;
    runtime.block_on(ildae_service::serve(config))?;
    Ok(())
}
