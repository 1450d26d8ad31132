use std::io::Write;

use qjn_core::sim::{estimate_capacity, simulate};
use qjn_core::{jackson_capacity, solve_traffic, ErasureModel, Error, NetworkSpec, NetworkType};

use crate::commands::{load, write_file};
use crate::format::{cell, csv_preamble, spec_hash};
use crate::{CliError, CliResult, Param, Preset, SweepArgs};

struct Series {
    label: String,
    spec: NetworkSpec,
    source: usize,
}

struct Plan {
    series: Vec<Series>,
    param: Param,
    node: Option<usize>,
    from: f64,
    to: f64,
    steps: usize,
    hash: String,
}

fn exp(kappa: f64) -> ErasureModel {
    ErasureModel::exponential(kappa).expect("preset kappa")
}

fn preset_plan(preset: Preset) -> CliResult<Plan> {
    let ra = NetworkType::RepeaterAssisted;
    let (param, from, to, steps, specs) = match preset {
        Preset::Fig3 => (
            Param::Lambda,
            0.0,
            0.99,
            100,
            [1.0, 0.5]
                .iter()
                .map(|&k| Ok((format!("kappa={k}"), NetworkSpec::tandem(0.5, &[1.0, 1.0], exp(k), ra)?)))
                .collect::<Result<Vec<_>, Error>>()?,
        ),
        Preset::Fig5 => (
            Param::Delta,
            0.0,
            1.0,
            101,
            [1.0, 1.9]
                .iter()
                .map(|&l| Ok((format!("lambda={l}"), NetworkSpec::parallel(l, 0.5, 2.0, 3.0, exp(1.0), ra)?)))
                .collect::<Result<Vec<_>, Error>>()?,
        ),
        Preset::Fig6 => (
            Param::Lambda,
            0.0,
            1.98,
            100,
            [1.0, 0.5]
                .iter()
                .map(|&k| Ok((format!("kappa={k}"), NetworkSpec::parallel(0.5, 0.5, 1.0, 1.0, exp(k), ra)?)))
                .collect::<Result<Vec<_>, Error>>()?,
        ),
    };
    let mut docs = String::new();
    for (_, spec) in &specs {
        docs.push_str(&spec.to_json()?);
        docs.push('\n');
    }
    Ok(Plan {
        series: specs.into_iter().map(|(label, spec)| Series { label, spec, source: 0 }).collect(),
        param,
        node: None,
        from,
        to,
        steps,
        hash: spec_hash(docs.as_bytes()),
    })
}

fn plan(args: &SweepArgs) -> CliResult<Plan> {
    let mut plan = match args.preset {
        Some(preset) => preset_plan(preset)?,
        None => {
            let path = args.spec.as_ref().expect("clap enforces spec without preset");
            let (spec, hash) = load(path)?;
            let param = args.param.expect("clap enforces param without preset");
            let source = match &args.source {
                Some(id) => spec.source_index(id)?,
                None => 0,
            };
            let node = args.node.as_deref().map(|id| spec.node_index(id)).transpose()?;
            let (from, to, steps) = match (args.from, args.to, args.steps) {
                (Some(a), Some(b), Some(k)) => (a, b, k),
                _ => return Err(CliError::input("--from, --to and --steps are required without --preset")),
            };
            Plan { series: vec![Series { label: "spec".into(), spec, source }], param, node, from, to, steps, hash }
        }
    };
    plan.from = args.from.unwrap_or(plan.from);
    plan.to = args.to.unwrap_or(plan.to);
    plan.steps = args.steps.unwrap_or(plan.steps);
    if !(plan.from < plan.to) || !plan.from.is_finite() || !plan.to.is_finite() {
        return Err(CliError::input(format!("sweep range needs from < to, got [{}, {}]", plan.from, plan.to)));
    }
    if plan.steps < 2 {
        return Err(CliError::input("--steps must be at least 2"));
    }
    for s in &plan.series {
        match plan.param {
            Param::Mu if plan.node.is_none() => return Err(CliError::input("--param mu needs --node")),
            Param::Kappa if s.spec.erasure().kappa().is_none() => {
                return Err(CliError::input("--param kappa needs an exponential erasure model"))
            }
            Param::Delta => {
                split_nodes(&s.spec, s.source, plan.node)?;
            }
            _ => {}
        }
    }
    Ok(plan)
}

/// The two entry nodes of a source; the first receives delta.
fn split_nodes(spec: &NetworkSpec, source: usize, first: Option<usize>) -> CliResult<(usize, usize)> {
    let entry = &spec.sources()[source].entry;
    let nodes: Vec<usize> = (0..entry.len()).filter(|&j| entry[j] > 0.0).collect();
    let [a, b] = nodes[..] else {
        return Err(CliError::input(format!(
            "--param delta needs a source with exactly two entry nodes; `{}` has {}",
            spec.sources()[source].id,
            nodes.len()
        )));
    };
    match first {
        None => Ok((a, b)),
        Some(j) if j == a => Ok((a, b)),
        Some(j) if j == b => Ok((b, a)),
        Some(_) => Err(CliError::input("--node is not an entry node of the source")),
    }
}

fn apply(plan: &Plan, s: &Series, v: f64) -> Result<NetworkSpec, Error> {
    match plan.param {
        Param::Lambda => s.spec.with_source_rate(s.source, v),
        Param::Delta => {
            let (a, b) = split_nodes(&s.spec, s.source, plan.node).expect("checked in plan");
            let mut entry = s.spec.sources()[s.source].entry.clone();
            entry[a] = v;
            entry[b] = 1.0 - v;
            s.spec.with_source_entry(s.source, entry)
        }
        Param::Kappa => s.spec.with_erasure(ErasureModel::exponential(v)?),
        Param::Mu => s.spec.with_service_rate(plan.node.expect("checked in plan"), v),
    }
}

pub fn sweep(args: &SweepArgs, out: &mut dyn Write) -> CliResult<()> {
    let plan = plan(args)?;
    let seed = if args.simulate { args.seed } else { None };
    let mut csv = csv_preamble(seed, &plan.hash);
    csv.push_str("series,param,value,source,feasible,analytical,simulated,ci_halfwidth\n");
    let span = plan.to - plan.from;
    for s in &plan.series {
        let source_id = &s.spec.sources()[s.source].id;
        for k in 0..plan.steps {
            let v = plan.from + span * k as f64 / (plan.steps - 1) as f64;
            let point = apply(&plan, s, v).ok();
            let feasible = point.as_ref().is_some_and(|p| solve_traffic(p).is_ok_and(|t| t.all_stable()));
            let mut analytical = String::new();
            let (mut simulated, mut halfwidth) = (None, None);
            if let (true, Some(p)) = (feasible, &point) {
                analytical = match jackson_capacity(p, source_id) {
                    Ok(r) => r.capacity.to_string(),
                    Err(Error::Cycle { .. }) => "n/a".into(),
                    Err(e) => return Err(e.into()),
                };
                if let (true, Some(seed)) = (args.simulate, args.seed) {
                    let est = estimate_capacity(&simulate(p, args.emissions, seed)?)?;
                    let e = &est.per_source[s.source];
                    simulated = Some(e.capacity_estimate);
                    halfwidth = Some(e.ci_halfwidth);
                }
            }
            csv.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                s.label,
                plan.param,
                v,
                source_id,
                feasible,
                analytical,
                cell(simulated),
                cell(halfwidth)
            ));
        }
    }
    match &args.csv {
        Some(path) => write_file(path, csv.as_bytes()),
        None => Ok(out.write_all(csv.as_bytes())?),
    }
}
