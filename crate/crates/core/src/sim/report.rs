//! CSV output and report comparison.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{Report, Scenario, SimError};

pub const REPORT_FILES: [&str; 5] = ["cost.csv", "latency.csv", "wan.csv", "migration.csv", "hitrate.csv"];

const METRIC_HEADER: &str = "metric,value";

pub(super) fn write_file(path: &Path, text: &str) -> Result<(), SimError> {
    fs::write(path, text).map_err(|source| SimError::Io { path: path.to_path_buf(), source })
}

fn cost_csv(rep: &Report) -> String {
    let mut s = format!("{METRIC_HEADER}\n");
    let c = &rep.cost;
    let rows: [(&str, f64); 12] = [
        ("storage", c.storage),
        ("read", c.read),
        ("write", c.write),
        ("association", c.association),
        ("total", c.total),
        ("mean_latency_ms", rep.mean_latency() * 1000.0),
        ("max_latency_ms", rep.max_latency() * 1000.0),
        ("wan_bytes", rep.wan_bytes()),
        ("replicas", rep.replicas as f64),
        ("violations_c", rep.violations[2] as f64),
        ("violations_d", rep.violations[3] as f64),
        ("violations_other", (rep.violations[0] + rep.violations[1] + rep.violations[4]) as f64),
    ];
    for (k, v) in rows {
        let _ = writeln!(s, "{k},{v}");
    }
    s
}

fn latency_csv(sc: &Scenario, rep: &Report) -> String {
    let mut s = String::from("pattern,origin,rate,parts,latency_ms,requirement_ms,met\n");
    for r in &rep.requests {
        let met = r.latency <= r.requirement + 1e-12;
        let _ = writeln!(s, "{},{},{},{},{},{},{}", r.pattern, sc.wan.dc(r.origin).id, r.rate, r.parts, r.latency * 1000.0, r.requirement * 1000.0, met);
    }
    s
}

fn wan_csv(sc: &Scenario, rep: &Report) -> String {
    let mut s = String::from("from,to,read_bytes,sync_bytes\n");
    for (&(a, b), &(r, w)) in &rep.wan {
        let _ = writeln!(s, "{},{},{},{}", sc.wan.dc(a).id, sc.wan.dc(b).id, r, w);
    }
    s
}

fn migration_csv(rep: &Report) -> String {
    let mut s = String::from("job,items,retained,migration_bytes,migrated_edge_ratio,offline_comm,gather_comm,gathered\n");
    for m in &rep.migration {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            m.job, m.items, m.retained, m.migration_bytes, m.migrated_edge_ratio, m.offline_comm, m.gather_comm, m.gathered
        );
    }
    s
}

fn hitrate_csv(rep: &Report) -> String {
    let mut s = String::from("quantile,cached,hits,hit_rate,evicted\n");
    for h in &rep.hitrate {
        let rate = h.hit_rate.map(|r| r.to_string()).unwrap_or_default();
        let _ = writeln!(s, "{},{},{},{},{}", h.quantile, h.cached, h.hits, rate, h.evicted);
    }
    s
}

pub(super) fn write_all(sc: &Scenario, rep: &Report, dir: &Path) -> Result<(), SimError> {
    fs::create_dir_all(dir).map_err(|source| SimError::Io { path: dir.to_path_buf(), source })?;
    let bodies = [cost_csv(rep), latency_csv(sc, rep), wan_csv(sc, rep), migration_csv(rep), hitrate_csv(rep)];
    for (name, body) in REPORT_FILES.iter().zip(bodies) {
        write_file(&dir.join(name), &body)?;
    }
    if let Some(g) = &rep.gap {
        write_file(&dir.join("gap.csv"), &format!("cost,optimum,gap_percent,leaves\n{},{},{},{}\n", g.cost, g.optimum, g.gap_percent, g.leaves))?;
    }
    if let Some(log) = &rep.log {
        let mut buf = Vec::new();
        log.write_csv(&mut buf).map_err(|source| SimError::Io { path: dir.join("placement_log.csv"), source })?;
        write_file(&dir.join("placement_log.csv"), &String::from_utf8_lossy(&buf))?;
    }
    Ok(())
}

/// Reads a `metric,value` file, keeping row order.
pub fn read_metrics(path: &Path) -> Result<Vec<(String, f64)>, SimError> {
    let text = fs::read_to_string(path).map_err(|source| SimError::Io { path: path.to_path_buf(), source })?;
    let mut lines = text.lines();
    if lines.next() != Some(METRIC_HEADER) {
        return Err(SimError::Schema(format!("{} does not start with `{METRIC_HEADER}`", path.display())));
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            let (k, v) = l.split_once(',').ok_or_else(|| SimError::Schema(format!("{}: bad row `{l}`", path.display())))?;
            let v = v.parse().map_err(|_| SimError::Schema(format!("{}: bad value in `{l}`", path.display())))?;
            Ok((k.to_string(), v))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompareRow {
    pub metric: String,
    pub a: f64,
    pub b: f64,
    /// b / a; 1.0 when both are zero.
    pub ratio: f64,
}

/// Metrics of B normalised to A. Either argument may be a report
/// directory or its cost file.
pub fn compare(a: &Path, b: &Path) -> Result<Vec<CompareRow>, SimError> {
    let pick = |p: &Path| if p.is_dir() { p.join("cost.csv") } else { p.to_path_buf() };
    let ma = read_metrics(&pick(a))?;
    let mb = read_metrics(&pick(b))?;
    let keys_a: Vec<&str> = ma.iter().map(|(k, _)| k.as_str()).collect();
    let keys_b: Vec<&str> = mb.iter().map(|(k, _)| k.as_str()).collect();
    if keys_a != keys_b {
        return Err(SimError::Schema(format!("metrics differ: {keys_a:?} vs {keys_b:?}")));
    }
    let lookup: BTreeMap<&str, f64> = mb.iter().map(|(k, v)| (k.as_str(), *v)).collect();
    Ok(ma
        .iter()
        .map(|(k, av)| {
            let bv = lookup[k.as_str()];
            let ratio = if *av == 0.0 && bv == 0.0 { 1.0 } else { bv / av };
            CompareRow { metric: k.clone(), a: *av, b: bv, ratio }
        })
        .collect())
}
