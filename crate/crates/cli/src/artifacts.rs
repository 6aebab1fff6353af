//! On-disk artifacts of a run. Every CSV opens with a `#schema=` line and
//! writes reals in shortest round-trip form.

use crate::error::{CliError, CliResult};
use nclab_core::metrics::MetricsReport;
use nclab_core::network::NetworkConfig;
use nclab_core::trainer::{Trajectory, TrajectoryRecord};
use nclab_core::Matrix;
use serde::Serialize;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

pub const TRAJECTORY_CSV: &str = "trajectory.csv";
pub const METRICS_CSV: &str = "metrics.csv";
pub const REPORT_JSON: &str = "report.json";
pub const CONFIG_JSON: &str = "config.resolved.json";
pub const PARAMS_JSON: &str = "params.json";
pub const SWEEP_CSV: &str = "sweep.csv";

pub const TRAJECTORY_SCHEMA: &str = "nclab.trajectory/1";
pub const METRICS_SCHEMA: &str = "nclab.metrics/1";
pub const MEANS_GRAM_SCHEMA: &str = "nclab.means_gram/1";
pub const SWEEP_SCHEMA: &str = "nclab.sweep/1";
pub const REPORT_SCHEMA: &str = "nclab.report/1";
pub const PARAMS_SCHEMA: &str = "nclab.params/1";

pub fn means_gram_name(layer: usize) -> String {
    format!("means_gram_{layer}.csv")
}

pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path, e))
}

/// Writes `#schema=<schema>`, one `#` line per note, then the header and rows.
pub fn write_csv(path: &Path, schema: &str, notes: &[String], header: &[String], rows: &[Vec<String>]) -> CliResult<()> {
    let mut f = create(path)?;
    writeln!(f, "#schema={schema}").map_err(|e| CliError::io(path, e))?;
    for n in notes {
        writeln!(f, "#{n}").map_err(|e| CliError::io(path, e))?;
    }
    let mut w = csv::Writer::from_writer(f);
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))?;
    Ok(())
}

/// Reads a CSV written by [`write_csv`], checking its schema line.
pub fn read_csv(path: &Path, schema: &str) -> CliResult<(Vec<String>, Vec<Vec<String>>)> {
    let f = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut reader = BufReader::new(f);
    let mut first = String::new();
    reader.read_line(&mut first).map_err(|e| CliError::io(path, e))?;
    let expect = format!("#schema={schema}");
    if first.trim_end() != expect {
        return Err(CliError::Config(format!(
            "{}: expected first line {expect:?}, found {:?}",
            path.display(),
            first.trim_end()
        )));
    }
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(reader);
    let header = r.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        rows.push(rec?.iter().map(str::to_string).collect());
    }
    Ok((header, rows))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut f = create(path)?;
    serde_json::to_writer_pretty(&mut f, value).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    writeln!(f).map_err(|e| CliError::io(path, e))?;
    f.flush().map_err(|e| CliError::io(path, e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let at = e.path().to_string();
        CliError::Config(format!("{}: {at}: {}", path.display(), e.into_inner()))
    })
}

fn linear_interfaces(cfg: &NetworkConfig) -> std::ops::Range<usize> {
    cfg.l1 + 1..cfg.depth()
}

pub fn trajectory_header(cfg: &NetworkConfig) -> Vec<String> {
    let mut h: Vec<String> = ["step", "eta", "c_lambda", "c0", "param_norm", "dist_from_init", "eps1", "grad_norm"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    h.extend(linear_interfaces(cfg).map(|l| format!("gap_{l}")));
    h.extend((1..=cfg.depth()).map(|l| format!("opnorm_{l}")));
    h
}

pub fn write_trajectory(path: &Path, cfg: &NetworkConfig, traj: &Trajectory) -> CliResult<()> {
    let rows: Vec<Vec<String>> = traj
        .records
        .iter()
        .map(|r| {
            let mut row = vec![
                r.step.to_string(),
                fmt_f64(r.eta),
                fmt_f64(r.c_lambda),
                fmt_f64(r.c0),
                fmt_f64(r.param_norm),
                fmt_f64(r.dist_from_init),
                fmt_f64(r.eps1),
                fmt_f64(r.grad_norm),
            ];
            row.extend(r.balancedness.iter().copied().map(fmt_f64));
            row.extend(r.op_norms.iter().copied().map(fmt_f64));
            row
        })
        .collect();
    let notes = vec![match traj.diverged_at {
        Some(k) => format!("diverged=true,step={k}"),
        None => "diverged=false".to_string(),
    }];
    write_csv(path, TRAJECTORY_SCHEMA, &notes, &trajectory_header(cfg), &rows)
}

fn parse_f64(path: &Path, col: &str, s: &str) -> CliResult<f64> {
    s.parse::<f64>()
        .map_err(|_| CliError::Config(format!("{}: column {col}: {s:?} is not a number", path.display())))
}

pub fn read_trajectory(path: &Path, cfg: &NetworkConfig) -> CliResult<Vec<TrajectoryRecord>> {
    let (header, rows) = read_csv(path, TRAJECTORY_SCHEMA)?;
    let expect = trajectory_header(cfg);
    if header != expect {
        return Err(CliError::Config(format!(
            "{}: header {:?} does not match the network (expected {:?})",
            path.display(),
            header,
            expect
        )));
    }
    let n_gaps = linear_interfaces(cfg).len();
    let mut out = Vec::with_capacity(rows.len());
    for row in rows {
        if row.len() != header.len() {
            return Err(CliError::Config(format!("{}: ragged row", path.display())));
        }
        let v = |i: usize| parse_f64(path, &header[i], &row[i]);
        let step = row[0]
            .parse::<usize>()
            .map_err(|_| CliError::Config(format!("{}: bad step {:?}", path.display(), row[0])))?;
        out.push(TrajectoryRecord {
            step,
            eta: v(1)?,
            c_lambda: v(2)?,
            c0: v(3)?,
            param_norm: v(4)?,
            dist_from_init: v(5)?,
            eps1: v(6)?,
            grad_norm: v(7)?,
            balancedness: (8..8 + n_gaps).map(v).collect::<CliResult<_>>()?,
            op_norms: (8 + n_gaps..header.len()).map(v).collect::<CliResult<_>>()?,
        });
    }
    Ok(out)
}

pub fn metrics_header() -> Vec<String> {
    ["step", "layer", "index", "nc1", "nc2", "nc3", "nc3_means", "gap", "ratio", "negativity"]
        .iter()
        .map(|s| s.to_string())
        .collect()
}

/// One row per layer `1..=L` of each reported step.
pub fn metrics_rows(cfg: &NetworkConfig, step: usize, m: &MetricsReport) -> Vec<Vec<String>> {
    (1..=cfg.depth())
        .map(|l| {
            let lm = m.layer(l);
            let iface = m.interfaces.iter().find(|i| i.layer == l);
            let neg = m.negativity.iter().find(|n| n.layer == l);
            vec![
                step.to_string(),
                l.to_string(),
                lm.map(|x| x.index.to_string()).unwrap_or_default(),
                fmt_opt(lm.and_then(|x| x.nc1)),
                fmt_opt(lm.and_then(|x| x.nc2)),
                fmt_opt(lm.and_then(|x| x.nc3)),
                fmt_opt(lm.and_then(|x| x.nc3_means)),
                fmt_opt(iface.map(|i| i.gap)),
                fmt_opt(iface.and_then(|i| i.ratio)),
                fmt_opt(neg.and_then(|n| n.value)),
            ]
        })
        .collect()
}

pub fn write_matrix_csv(path: &Path, schema: &str, m: &Matrix) -> CliResult<()> {
    let header: Vec<String> = (0..m.cols()).map(|j| format!("c{j}")).collect();
    let rows: Vec<Vec<String>> = (0..m.rows())
        .map(|i| m.row(i).iter().copied().map(fmt_f64).collect())
        .collect();
    write_csv(path, schema, &[], &header, &rows)
}
