use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use qjn_core::optimize::{
    optimal_homogeneous_parallel, optimal_homogeneous_tandem, optimal_parallel_split, optimal_source_rate, Optimum,
    SearchMethod,
};
use qjn_core::sim::{estimate_capacity, simulate as run_simulation, write_estimate_csv, write_trace_csv, RngPolicy};
use qjn_core::{jackson_capacity, parse_network, validate as validate_spec, Defect, NetworkSpec, Topology};
use rayon::prelude::*;

use crate::format::{csv_preamble, sig6, spec_hash, table};
use crate::{AnalyzeArgs, CliError, CliResult, OptimizeArgs, SimulateArgs, TopologyArg};

/// Reads and parses a spec; also returns the hash of the raw bytes.
pub(crate) fn load(path: &Path) -> CliResult<(NetworkSpec, String)> {
    let bytes = fs::read(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    let text = String::from_utf8(bytes).map_err(|_| CliError::input(format!("{}: not UTF-8", path.display())))?;
    let spec = parse_network(&text)?;
    Ok((spec, spec_hash(text.as_bytes())))
}

pub(crate) fn write_file(path: &PathBuf, contents: &[u8]) -> CliResult<()> {
    fs::write(path, contents).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

/// Replication thread pool, bounded by `QJN_THREADS` when set.
pub(crate) fn thread_pool() -> CliResult<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("QJN_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| CliError::input(format!("QJN_THREADS must be a positive integer, got `{v}`")))?;
        builder = builder.num_threads(n);
    }
    builder.build().map_err(|e| CliError::input(e.to_string()))
}

pub fn validate(path: &Path, out: &mut dyn Write) -> CliResult<()> {
    let (spec, _) = load(path)?;
    let report = validate_spec(&spec);
    writeln!(out, "topology: {}", report.topology)?;
    if let Some(t) = &report.traffic {
        let rows: Vec<Vec<String>> = spec
            .nodes()
            .iter()
            .enumerate()
            .map(|(i, n)| {
                vec![
                    n.id.clone(),
                    sig6(n.mu),
                    sig6(t.xi[i]),
                    sig6(t.xi[i] / n.mu),
                    if t.stable[i] { "yes" } else { "no" }.into(),
                ]
            })
            .collect();
        write!(out, "{}", table(&["node", "mu", "xi", "rho", "stable"], &rows))?;
    }
    if report.ok {
        writeln!(out, "ok")?;
        return Ok(());
    }
    for d in &report.defects {
        writeln!(out, "defect: {d}")?;
    }
    Err(CliError::invalid(format!("{} defect(s) found", report.defects.len())))
}

pub fn analyze(args: &AnalyzeArgs, out: &mut dyn Write) -> CliResult<()> {
    let (spec, hash) = load(&args.spec)?;
    let ids: Vec<String> = match &args.source {
        Some(id) => vec![spec.sources()[spec.source_index(id)?].id.clone()],
        None => spec.sources().iter().map(|s| s.id.clone()).collect(),
    };
    let reports = ids.iter().map(|id| jackson_capacity(&spec, id)).collect::<Result<Vec<_>, _>>()?;

    let mut csv = csv_preamble(None, &hash);
    csv.push_str("source,lambda,capacity,method,route,probability,survival,contribution\n");
    for r in &reports {
        writeln!(
            out,
            "source {}: lambda = {}, capacity = {} bits/sec ({})",
            r.source,
            sig6(r.lambda),
            sig6(r.capacity),
            r.method
        )?;
        let rows: Vec<Vec<String>> = r
            .routes
            .iter()
            .map(|c| vec![c.route.label(&spec), sig6(c.probability), sig6(c.survival), sig6(c.contribution)])
            .collect();
        write!(out, "{}", table(&["route", "probability", "survival", "contribution"], &rows))?;
        for c in &r.routes {
            csv.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.source,
                r.lambda,
                r.capacity,
                r.method,
                c.route.label(&spec),
                c.probability,
                c.survival,
                c.contribution
            ));
        }
    }
    if let Some(path) = &args.csv {
        write_file(path, csv.as_bytes())?;
    }
    Ok(())
}

/// Analytical capacity per source, or the reason there is none.
fn analytical_column(spec: &NetworkSpec) -> CliResult<Vec<Result<f64, &'static str>>> {
    let report = validate_spec(spec);
    if report.topology == Topology::Cyclic {
        return Ok(vec![Err("n/a (loop-back)"); spec.sources().len()]);
    }
    if report.defects.iter().any(|d| matches!(d, Defect::Unstable { .. })) {
        return Ok(vec![Err("n/a (unstable)"); spec.sources().len()]);
    }
    spec.sources().iter().map(|s| Ok(Ok(jackson_capacity(spec, &s.id)?.capacity))).collect()
}

pub fn simulate(args: &SimulateArgs, out: &mut dyn Write, err: &mut dyn Write) -> CliResult<()> {
    let (spec, hash) = load(&args.spec)?;
    if args.replications == 0 {
        return Err(CliError::input("--replications must be at least 1"));
    }
    let report = validate_spec(&spec);
    if report.defects.contains(&Defect::SingularRouting) {
        return Err(CliError::invalid("traffic equations are singular: routing traps flow in a cycle"));
    }
    for d in report.defects.iter().filter(|d| matches!(d, Defect::Unstable { .. })) {
        writeln!(err, "warning: {d}; queues grow without bound")?;
    }
    let analytical = analytical_column(&spec)?;

    // replication 0 runs on the given seed, later ones on derived seeds
    let policy = RngPolicy::new(args.seed);
    let seeds: Vec<u64> =
        (0..args.replications).map(|k| if k == 0 { args.seed } else { policy.replication_seed(k) }).collect();
    let pool = thread_pool()?;
    let runs = pool.install(|| {
        seeds
            .par_iter()
            .enumerate()
            .map(|(k, &seed)| {
                let trace = run_simulation(&spec, args.emissions, seed)?;
                let est = estimate_capacity(&trace)?;
                let mut trace_csv = None;
                if k == 0 && args.trace.is_some() {
                    let mut buf = csv_preamble(Some(seed), &hash).into_bytes();
                    write_trace_csv(&trace, &mut buf).expect("in-memory write");
                    trace_csv = Some(buf);
                }
                Ok((est, trace_csv))
            })
            .collect::<Result<Vec<_>, qjn_core::Error>>()
    })?;

    let mut runs = runs.into_iter();
    let (mut pooled, trace_csv) = runs.next().expect("at least one replication");
    for (est, _) in runs {
        pooled = pooled.merge(&est)?;
    }

    writeln!(
        out,
        "{} replication(s), {} emissions per source each, seed {}",
        args.replications, args.emissions, args.seed
    )?;
    let rows: Vec<Vec<String>> = pooled
        .per_source
        .iter()
        .zip(&analytical)
        .map(|(s, a)| {
            let (value, covered) = match a {
                Ok(c) => (sig6(*c), if s.covers(*c) { "covered" } else { "not covered" }.to_string()),
                Err(reason) => (reason.to_string(), "-".into()),
            };
            vec![s.source_id.clone(), sig6(s.lambda), sig6(s.capacity_estimate), sig6(s.ci_halfwidth), value, covered]
        })
        .collect();
    write!(out, "{}", table(&["source", "lambda", "estimate", "ci95", "analytical", "check"], &rows))?;

    if let Some(path) = &args.csv {
        let mut buf = csv_preamble(Some(args.seed), &hash).into_bytes();
        let values: Vec<Option<f64>> = analytical.iter().map(|a| a.ok()).collect();
        write_estimate_csv(&pooled, &values, &mut buf)?;
        write_file(path, &buf)?;
    }
    if let (Some(path), Some(buf)) = (&args.trace, trace_csv) {
        write_file(path, &buf)?;
    }
    Ok(())
}

fn require_kappa(args: &OptimizeArgs) -> CliResult<f64> {
    args.kappa.ok_or_else(|| CliError::input("--kappa is required"))
}

pub fn optimize(args: &OptimizeArgs, out: &mut dyn Write) -> CliResult<()> {
    let opt = match (&args.spec, args.topology) {
        (Some(path), _) => {
            let (spec, _) = load(path)?;
            let source = match &args.source {
                Some(id) => id.clone(),
                None => spec.sources()[0].id.clone(),
            };
            writeln!(out, "network {}, source {source}", path.display())?;
            optimal_source_rate(&spec, &source)?
        }
        (None, Some(TopologyArg::Tandem)) => {
            let kappa = require_kappa(args)?;
            writeln!(out, "tandem: m = {}, mu = {}, kappa = {kappa}", args.m, sig6(args.mu))?;
            optimal_homogeneous_tandem(args.m, args.mu, kappa)?
        }
        (None, Some(TopologyArg::Parallel)) => {
            let kappa = require_kappa(args)?;
            match (args.mu1, args.mu2) {
                (Some(mu1), Some(mu2)) => {
                    let lambda = args.lambda.ok_or_else(|| CliError::input("--lambda is required with --mu1/--mu2"))?;
                    writeln!(out, "parallel: mu1 = {mu1}, mu2 = {mu2}, kappa = {kappa}, lambda = {lambda}")?;
                    optimal_parallel_split(lambda, mu1, mu2, kappa)?
                }
                _ => {
                    writeln!(out, "parallel: mu = {}, kappa = {kappa}", sig6(args.mu))?;
                    optimal_homogeneous_parallel(args.mu, kappa)?
                }
            }
        }
        (None, None) => return Err(CliError::input("give a spec file or --topology")),
    };
    write!(out, "{}", render_optimum(&opt))?;
    Ok(())
}

fn opt_cell(x: Option<f64>) -> String {
    x.map_or_else(|| "-".into(), sig6)
}

fn render_optimum(opt: &Optimum) -> String {
    let mut rows = vec![vec![opt.method.to_string(), opt_cell(opt.lambda), opt_cell(opt.delta), sig6(opt.capacity)]];
    if let Some(c) = &opt.certification {
        // the heterogeneous split formula is only reported, never trusted
        let label =
            if opt.method == SearchMethod::GoldenSection { "printed_formula".into() } else { c.method.to_string() };
        rows.push(vec![label, opt_cell(c.lambda), opt_cell(c.delta), sig6(c.capacity)]);
    }
    let mut s = table(&["method", "lambda*", "delta*", "capacity"], &rows);
    if let Some(c) = &opt.certification {
        s.push_str(&format!("argument gap: {}\nvalue gap: {}\n", sig6(c.argument_gap), sig6(c.value_gap)));
    }
    s
}
