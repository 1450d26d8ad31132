use std::io::{self, Write};

use super::{SimEstimate, SimTrace};

/// One row per qubit; node and sojourn sequences are `;`-separated.
pub fn write_trace_csv(trace: &SimTrace, out: &mut impl Write) -> io::Result<()> {
    writeln!(out, "qubit_id,source_id,emit_time,node_sequence,sojourn_sequence,erased,delivery_time")?;
    let mut nodes = String::new();
    let mut sojourns = String::new();
    for rec in &trace.records {
        nodes.clear();
        sojourns.clear();
        for (k, hop) in rec.hops.iter().enumerate() {
            if k > 0 {
                nodes.push(';');
                sojourns.push(';');
            }
            nodes.push_str(&trace.node_ids[hop.node as usize]);
            sojourns.push_str(&hop.sojourn.to_string());
        }
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            rec.qubit_id,
            trace.source_ids[rec.source as usize],
            rec.emit_time,
            nodes,
            sojourns,
            rec.erased,
            rec.delivery_time
        )?;
    }
    Ok(())
}

/// One row per source. `analytical[k]`, when known, adds the closed-form
/// capacity and whether the interval covers it.
pub fn write_estimate_csv(est: &SimEstimate, analytical: &[Option<f64>], out: &mut impl Write) -> io::Result<()> {
    writeln!(
        out,
        "source_id,lambda,replications,n_emitted,n_measured,n_delivered_unerased,capacity_estimate,ci_halfwidth,analytical,covered"
    )?;
    for (k, s) in est.per_source.iter().enumerate() {
        let (value, covered) = match analytical.get(k).copied().flatten() {
            Some(c) => (c.to_string(), s.covers(c).to_string()),
            None => ("n/a".to_string(), "n/a".to_string()),
        };
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            s.source_id,
            s.lambda,
            est.seeds.len(),
            s.n_emitted,
            s.n_measured,
            s.n_delivered_unerased,
            s.capacity_estimate,
            s.ci_halfwidth,
            value,
            covered
        )?;
    }
    Ok(())
}
