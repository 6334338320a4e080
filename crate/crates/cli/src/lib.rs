//! Command implementations for the `dataperim` binary.
//!
//! Exit codes: 0 success or clean check, 1 check found violations, 2 input
//! error, 3 internal invariant breach.

use std::fs;
use std::io::{Read, Write};
use std::path::PathBuf;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand, ValueEnum};
use dataperim::ingestion::{
    generate_synthetic_tenant, parse_family_document, parse_snapshot, FamilyDocument,
    GeneratorConfig, GrantResolver, MetricFamily, TenantSnapshot,
};
use dataperim::metric::DEFAULT_VIOLATION_LIMIT;
use dataperim::scalar::{fixed6, render_exact};
use dataperim::{
    assess_spn, band_of, band_report, check_ultrametricity, enumerate_bands, grant_distances,
    infimum_distances, nn_tour, rank_spns, DistanceMatrix, Exact, ExactRisk, ImpactModel, Scalar,
    Violation,
};
use rayon::prelude::*;
use serde_json::{json, Value};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VIOLATIONS: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "dataperim",
    version,
    about = "Blast radius and data perimeter for service principals"
)]
pub struct Cli {
    /// Output format.
    #[arg(long, value_enum, global = true, default_value_t = Format::Csv)]
    pub format: Format,
    /// Worker threads for per-principal computation.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    /// Generator seed, or anonymization seed for `bands`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Shuffle and relabel bands with Roman numerals.
    #[arg(long, global = true)]
    pub anonymize: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ArchetypeArg {
    Tight,
    Dispersed,
    Mixed,
    /// Half tight, half dispersed.
    Balanced,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// One ranked record per service principal.
    Scan {
        /// Snapshot path, or `-` for standard input.
        snapshot: PathBuf,
    },
    /// Per-band spread-ratio table.
    Bands { snapshot: PathBuf },
    /// Strong-triangle check of pointwise-infimum distances.
    CheckFamily { snapshot: PathBuf },
    /// Emit a synthetic tenant snapshot.
    Generate {
        /// JSON generator config; flags override it.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        spns: Option<usize>,
        #[arg(long, value_enum, default_value_t = ArchetypeArg::Balanced)]
        archetype: ArchetypeArg,
    },
    /// Grants, tour and metrics for one principal.
    Explain { snapshot: PathBuf, spn: String },
}

enum Failure {
    Input(anyhow::Error),
    Internal(String),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Input(e)
    }
}

type CmdResult = Result<i32, Failure>;

/// Runs one parsed command line; returns the process exit code.
pub fn run(cli: &Cli, stdin: &mut dyn Read, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let result = match &cli.command {
        Command::Scan { snapshot } => cmd_scan(cli, snapshot, stdin, out),
        Command::Bands { snapshot } => cmd_bands(cli, snapshot, stdin, out),
        Command::CheckFamily { snapshot } => cmd_check_family(cli, snapshot, stdin, out, err),
        Command::Generate {
            config,
            spns,
            archetype,
        } => cmd_generate(cli, config.as_ref(), *spns, *archetype, out),
        Command::Explain { snapshot, spn } => cmd_explain(snapshot, spn, stdin, out),
    };
    match result {
        Ok(code) => code,
        Err(Failure::Input(e)) => {
            let _ = writeln!(err, "error: {e:#}");
            EXIT_INPUT
        }
        Err(Failure::Internal(msg)) => {
            let _ = writeln!(err, "internal invariant breach: {msg}");
            EXIT_INTERNAL
        }
    }
}

fn read_input(path: &PathBuf, stdin: &mut dyn Read) -> anyhow::Result<Vec<u8>> {
    if path.as_os_str() == "-" {
        let mut buf = Vec::new();
        stdin
            .read_to_end(&mut buf)
            .context("reading standard input")?;
        Ok(buf)
    } else {
        fs::read(path).with_context(|| format!("reading {}", path.display()))
    }
}

fn load_snapshot(path: &PathBuf, stdin: &mut dyn Read) -> anyhow::Result<TenantSnapshot> {
    let bytes = read_input(path, stdin)?;
    parse_snapshot(&bytes).with_context(|| format!("invalid snapshot {}", path.display()))
}

fn write_out(out: &mut dyn Write, text: &str) -> CmdResult {
    out.write_all(text.as_bytes())
        .map_err(|e| Failure::Input(anyhow!("writing output: {e}")))?;
    Ok(EXIT_OK)
}

/// Assesses every principal on a pool of `jobs` workers, then ranks.
fn assess_all(snapshot: &TenantSnapshot, jobs: usize) -> Result<Vec<ExactRisk>, Failure> {
    let tree = snapshot.native_tree().map_err(anyhow::Error::from)?;
    let resolver = GrantResolver::new(snapshot).map_err(anyhow::Error::from)?;
    let model = ImpactModel::default();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Failure::Internal(format!("thread pool: {e}")))?;
    let risks: Vec<ExactRisk> = pool
        .install(|| {
            snapshot
                .spns
                .par_iter()
                .map(|spn| assess_spn::<Exact>(spn, &resolver, &tree, &model))
                .collect::<Result<_, _>>()
        })
        .map_err(anyhow::Error::from)?;
    for r in &risks {
        r.check_invariants().map_err(Failure::Internal)?;
    }
    Ok(rank_spns(risks))
}

fn scan_record(risk: &ExactRisk, band: &str) -> Value {
    let mean = risk.mean_or_zero();
    json!({
        "spn": risk.spn,
        "n": risk.n,
        "blast_radius": risk.blast_radius.to_string(),
        "blast_radius_exact": risk.blast_radius.exact_string(),
        "band": band,
        "perimeter": dataperim::scalar::render(risk.perimeter),
        "perimeter_exact": render_exact(&risk.perimeter.to_big_rational()),
        "mean_distance": dataperim::scalar::render(mean),
        "mean_distance_exact": render_exact(&mean.to_big_rational()),
        "spread_ratio": dataperim::scalar::render(risk.spread_ratio),
        "spread_ratio_exact": render_exact(&risk.spread_ratio.to_big_rational()),
        "ultracycle": risk.ultracycle.is_some(),
    })
}

fn cmd_scan(cli: &Cli, path: &PathBuf, stdin: &mut dyn Read, out: &mut dyn Write) -> CmdResult {
    let snapshot = load_snapshot(path, stdin)?;
    let risks = assess_all(&snapshot, cli.jobs)?;
    let bands =
        enumerate_bands(&ImpactModel::default()).map_err(|e| Failure::Internal(e.to_string()))?;

    let mut rows = Vec::with_capacity(risks.len());
    for risk in &risks {
        let label = match band_of(risk.blast_radius, &bands) {
            Ok(Some(b)) => b.label(),
            Ok(None) => "none".to_string(),
            Err(e) => return Err(Failure::Internal(format!("{}: {e}", risk.spn))),
        };
        rows.push(scan_record(risk, &label));
    }

    match cli.format {
        Format::Json => {
            let text = serde_json::to_string_pretty(&rows).expect("json") + "\n";
            write_out(out, &text)
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record([
                "spn",
                "n",
                "blast_radius",
                "band",
                "perimeter",
                "mean_distance",
                "spread_ratio",
                "ultracycle",
            ])
            .map_err(|e| Failure::Internal(e.to_string()))?;
            for r in &rows {
                let field = |k: &str| match &r[k] {
                    Value::String(s) => s.clone(),
                    v => v.to_string(),
                };
                w.write_record(
                    [
                        "spn",
                        "n",
                        "blast_radius",
                        "band",
                        "perimeter",
                        "mean_distance",
                        "spread_ratio",
                        "ultracycle",
                    ]
                    .map(field),
                )
                .map_err(|e| Failure::Internal(e.to_string()))?;
            }
            let bytes = w
                .into_inner()
                .map_err(|e| Failure::Internal(e.to_string()))?;
            write_out(out, &String::from_utf8(bytes).expect("utf8"))
        }
    }
}

fn cmd_bands(cli: &Cli, path: &PathBuf, stdin: &mut dyn Read, out: &mut dyn Write) -> CmdResult {
    let snapshot = load_snapshot(path, stdin)?;
    let risks = assess_all(&snapshot, cli.jobs)?;
    let report = band_report(
        &risks,
        &ImpactModel::default(),
        cli.anonymize,
        cli.seed.unwrap_or(0),
    )
    .map_err(|e| Failure::Internal(e.to_string()))?;
    let text = match cli.format {
        Format::Json => serde_json::to_string_pretty(&report.to_json()).expect("json") + "\n",
        Format::Csv => {
            let mut s = report.to_csv();
            if report.no_permissions > 0 {
                s.push_str(&format!("\nno_permissions,{}\n", report.no_permissions));
            }
            s
        }
    };
    write_out(out, &text)
}

const FALLBACK_ADVICE: &str =
    "recommendation: the pointwise infimum over this hierarchy family is not \
ultrametric; treat the data perimeter with care and fall back to the native tenant hierarchy.";

fn show<S: Scalar>(v: S) -> String {
    let r = v.to_big_rational();
    format!("{} ({})", render_exact(&r), fixed6(&r))
}

fn describe<S: Scalar>(names: &[&str], m: &DistanceMatrix<S>, v: &Violation) -> String {
    let (i, j, k) = (v.i, v.j, v.k);
    format!(
        "({a}, {b}, {c}): d({a}, {c}) = {} > max(d({a}, {b}) = {}, d({b}, {c}) = {})",
        show(m.get(i, k)),
        show(m.get(i, j)),
        show(m.get(j, k)),
        a = names[i],
        b = names[j],
        c = names[k],
    )
}

fn violation_json<S: Scalar>(names: &[&str], m: &DistanceMatrix<S>, v: &Violation) -> Value {
    let e = |x: usize, y: usize| render_exact(&m.get(x, y).to_big_rational());
    json!({
        "triple": [names[v.i], names[v.j], names[v.k]],
        "d_ik": e(v.i, v.k),
        "d_ij": e(v.i, v.j),
        "d_jk": e(v.j, v.k),
    })
}

fn cmd_check_family(
    cli: &Cli,
    path: &PathBuf,
    stdin: &mut dyn Read,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> CmdResult {
    let bytes = read_input(path, stdin)?;
    let doc = parse_family_document(&bytes)
        .with_context(|| format!("invalid family document {}", path.display()))?;
    match doc {
        FamilyDocument::Metrics(family) => check_metric_family(cli, &family, out),
        FamilyDocument::Snapshot(snapshot) => {
            if snapshot.alternates.is_empty() {
                let _ = writeln!(err, "error: snapshot defines no alternate hierarchies");
                return Ok(EXIT_INPUT);
            }
            check_snapshot_family(cli, &snapshot, out)
        }
    }
}

fn check_metric_family(cli: &Cli, family: &MetricFamily, out: &mut dyn Write) -> CmdResult {
    if family.members.len() < 2 {
        return Err(Failure::Input(anyhow!(
            "metric family needs at least two members to form an infimum"
        )));
    }
    let names: Vec<&str> = family.points.iter().map(String::as_str).collect();
    let inf = family.infimum();
    let violations = check_ultrametricity(&inf, DEFAULT_VIOLATION_LIMIT);
    let member_names: Vec<&str> = family.members.iter().map(|(n, _)| n.as_str()).collect();

    let text = match cli.format {
        Format::Json => {
            let members: Vec<Value> = family
                .members
                .iter()
                .map(|(n, m)| {
                    json!({"name": n, "ultrametric": check_ultrametricity(m, 1).is_empty()})
                })
                .collect();
            serde_json::to_string_pretty(&json!({
                "members": members,
                "violations": violations.iter().map(|v| violation_json(&names, &inf, v)).collect::<Vec<_>>(),
            }))
            .expect("json")
                + "\n"
        }
        Format::Csv => {
            let mut s = format!(
                "family: {} (pointwise minimum over {} metrics, {} points)\n",
                member_names.join(", "),
                member_names.len(),
                names.len()
            );
            for (name, m) in &family.members {
                let ok = check_ultrametricity(m, 1).is_empty();
                s.push_str(&format!(
                    "member {name}: {}\n",
                    if ok { "ultrametric" } else { "NOT ultrametric" }
                ));
            }
            s.push_str(&format!("violations: {}\n", violations.len()));
            for v in &violations {
                s.push_str(&format!("  {}\n", describe(&names, &inf, v)));
            }
            if !violations.is_empty() {
                s.push_str(FALLBACK_ADVICE);
                s.push('\n');
            }
            s
        }
    };
    write_out(out, &text)?;
    Ok(if violations.is_empty() {
        EXIT_OK
    } else {
        EXIT_VIOLATIONS
    })
}

fn check_snapshot_family(cli: &Cli, snapshot: &TenantSnapshot, out: &mut dyn Write) -> CmdResult {
    let family = snapshot.family().map_err(anyhow::Error::from)?;
    let resolver = GrantResolver::new(snapshot).map_err(anyhow::Error::from)?;
    let model = ImpactModel::default();

    let mut total = 0;
    let mut text_lines = Vec::new();
    let mut json_rows = Vec::new();
    for spn in &snapshot.spns {
        let grants = resolver.resolve(spn).map_err(anyhow::Error::from)?;
        let inf = infimum_distances(&grants, &family, &model)
            .map_err(anyhow::Error::from)?
            .map(Exact::from_dyadic);
        let violations = check_ultrametricity(&inf, DEFAULT_VIOLATION_LIMIT);
        if violations.is_empty() {
            continue;
        }
        total += violations.len();
        let labels: Vec<String> = (0..grants.len()).map(|i| format!("g{i}")).collect();
        let names: Vec<&str> = labels.iter().map(String::as_str).collect();
        text_lines.push(format!("spn {spn}: {} violation(s)", violations.len()));
        for (label, g) in labels.iter().zip(&grants) {
            text_lines.push(format!("  {label} = {g}"));
        }
        for v in &violations {
            text_lines.push(format!("  {}", describe(&names, &inf, v)));
        }
        json_rows.push(json!({
            "spn": spn,
            "grants": labels.iter().zip(&grants).map(|(l, g)| json!({"label": l, "grant": g.to_string()})).collect::<Vec<_>>(),
            "violations": violations.iter().map(|v| violation_json(&names, &inf, v)).collect::<Vec<_>>(),
        }));
    }

    let alt_names: Vec<&str> = family
        .alternates()
        .iter()
        .map(|(n, _)| n.as_str())
        .collect();
    let text = match cli.format {
        Format::Json => {
            serde_json::to_string_pretty(&json!({
                "hierarchies": std::iter::once("native").chain(alt_names.iter().copied()).collect::<Vec<_>>(),
                "spns": json_rows,
            }))
            .expect("json")
                + "\n"
        }
        Format::Csv => {
            let mut s = format!(
                "family: native + {} ({} principals checked)\n",
                alt_names.join(", "),
                snapshot.spns.len()
            );
            s.push_str(&format!("violations: {total}\n"));
            for line in &text_lines {
                s.push_str(line);
                s.push('\n');
            }
            if total > 0 {
                s.push_str(FALLBACK_ADVICE);
                s.push('\n');
            }
            s
        }
    };
    write_out(out, &text)?;
    Ok(if total == 0 { EXIT_OK } else { EXIT_VIOLATIONS })
}

fn cmd_generate(
    cli: &Cli,
    config_path: Option<&PathBuf>,
    spns: Option<usize>,
    archetype: ArchetypeArg,
    out: &mut dyn Write,
) -> CmdResult {
    let mut config = match config_path {
        Some(p) => {
            let bytes = fs::read(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_slice::<GeneratorConfig>(&bytes)
                .with_context(|| format!("invalid generator config {}", p.display()))?
        }
        None => GeneratorConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(n) = spns {
        let (t, d, m) = match archetype {
            ArchetypeArg::Tight => (n, 0, 0),
            ArchetypeArg::Dispersed => (0, n, 0),
            ArchetypeArg::Mixed => (0, 0, n),
            ArchetypeArg::Balanced => (n - n / 2, n / 2, 0),
        };
        config.tight = t;
        config.dispersed = d;
        config.mixed = m;
    }
    let snapshot = generate_synthetic_tenant(&config).map_err(anyhow::Error::from)?;
    write_out(out, &snapshot.to_document())
}

fn cmd_explain(path: &PathBuf, spn: &str, stdin: &mut dyn Read, out: &mut dyn Write) -> CmdResult {
    let snapshot = load_snapshot(path, stdin)?;
    let tree = snapshot.native_tree().map_err(anyhow::Error::from)?;
    let resolver = GrantResolver::new(&snapshot).map_err(anyhow::Error::from)?;
    let model = ImpactModel::default();
    let grants = resolver.resolve(spn).map_err(anyhow::Error::from)?;
    let dist = grant_distances(&grants, &tree, &model).map_err(anyhow::Error::from)?;
    let risk = ExactRisk::assess(spn, &dist);
    risk.check_invariants().map_err(Failure::Internal)?;
    let bands = enumerate_bands(&model).map_err(|e| Failure::Internal(e.to_string()))?;
    let band = band_of(risk.blast_radius, &bands).map_err(|e| Failure::Internal(e.to_string()))?;

    let mut s = format!("spn: {spn}\ngrants (n={}):\n", grants.len());
    for (i, g) in grants.iter().enumerate() {
        s.push_str(&format!("  [{i}] {g}\n"));
    }
    let exact = dist.map(Exact::from_dyadic);
    if grants.is_empty() {
        s.push_str("tour: (empty)\n");
    } else {
        let tour = nn_tour(&exact, 0).map_err(|e| Failure::Internal(e.to_string()))?;
        let order: Vec<String> = tour.order.iter().map(usize::to_string).collect();
        s.push_str(&format!("tour: {}\n", order.join(" -> ")));
        for (a, b) in tour.edges() {
            s.push_str(&format!(
                "  [{a}] -> [{b}]  d = {}\n",
                show(exact.get(a, b))
            ));
        }
        s.push_str(&format!("tour length: {}\n", show(tour.length)));
    }
    let band_text = match band {
        Some(b) => format!("{} ({})", b.label(), b.regime()),
        None => "none".to_string(),
    };
    s.push_str(&format!(
        "blast_radius: {} band {band_text}\n",
        show(Exact::from_dyadic(risk.blast_radius))
    ));
    s.push_str(&format!("perimeter: {}\n", show(risk.perimeter)));
    s.push_str(&format!(
        "mean_distance: {}\n",
        risk.mean_distance
            .map(show)
            .unwrap_or_else(|| "undefined (n < 2)".into())
    ));
    s.push_str(&format!("spread_ratio: {}\n", show(risk.spread_ratio)));
    s.push_str(&format!(
        "ultracycle: {}\n",
        match risk.ultracycle {
            Some(xi) => format!("yes (common distance {})", show(Exact::from_dyadic(xi))),
            None => "no".into(),
        }
    ));
    write_out(out, &s)
}
