//! `train`, `bounds`, `sweep` and `verify`.

use crate::artifacts::*;
use crate::config::{load_config, RunConfig};
use crate::error::{CliError, CliResult};
use crate::evaluate::{evaluate, Report};
use nclab_core::bounds::Holds;
use nclab_core::data::Dataset;
use nclab_core::metrics::{class_means, report, MetricsReport};
use nclab_core::network::{forward, NetworkConfig, ParamSet};
use nclab_core::trainer::{train_observed, InitSpec};
use nclab_core::verify::{format_table, run_suite, Faults, Level};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamsFile {
    pub schema: String,
    pub params: ParamSet,
}

pub struct RunOutcome {
    pub report: Report,
}

fn mkdir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

/// Trains one configuration and writes every artifact into `out`.
pub fn run_train(rc: &RunConfig, out: &Path) -> CliResult<RunOutcome> {
    mkdir(out)?;
    let mut resolved = rc.clone();
    resolved.output.dir = None;
    resolved.output.report_every = Some(rc.report_every());
    write_json(&out.join(CONFIG_JSON), &resolved)?;

    let ds = rc.load_dataset()?;
    let cfg = &rc.network;
    let every = rc.report_every();
    let steps = rc.train.steps;
    let mut rows = Vec::new();
    let mut metrics_err = None;
    let (params, traj) = train_observed(cfg, &rc.train, &ds.x, &ds.y, |view| {
        let step = view.record.step;
        if step % every != 0 && step != steps {
            return;
        }
        match report(cfg, view.params, view.trace, &ds.idx, &ds.y) {
            Ok(m) => rows.extend(metrics_rows(cfg, step, &m)),
            Err(e) => {
                metrics_err.get_or_insert(e);
            }
        }
    })?;
    if let Some(e) = metrics_err.filter(|_| !traj.diverged) {
        return Err(e.into());
    }
    write_trajectory(&out.join(TRAJECTORY_CSV), cfg, &traj)?;
    write_csv(&out.join(METRICS_CSV), METRICS_SCHEMA, &[], &metrics_header(), &rows)?;

    let finite = params.is_finite();
    if finite {
        write_json(
            &out.join(PARAMS_JSON),
            &ParamsFile {
                schema: PARAMS_SCHEMA.into(),
                params: params.clone(),
            },
        )?;
        write_means_grams(cfg, &params, &ds, out)?;
    }
    let rep = evaluate(rc, &ds, &params, &traj.records, traj.diverged)?;
    write_json(&out.join(REPORT_JSON), &rep)?;
    if traj.diverged {
        return Err(CliError::Diverged(format!(
            "training diverged at step {}",
            traj.diverged_at.unwrap_or_default()
        )));
    }
    Ok(RunOutcome { report: rep })
}

/// `Z̄ᵀZ̄` of the last three layers.
fn write_means_grams(cfg: &NetworkConfig, params: &ParamSet, ds: &Dataset, out: &Path) -> CliResult<()> {
    let trace = forward(cfg, params, &ds.x)?;
    let l = cfg.depth();
    for j in l.saturating_sub(2).max(1)..=l {
        let (zbar, _) = class_means(&trace.z[j], &ds.idx)?;
        write_matrix_csv(&out.join(means_gram_name(j)), MEANS_GRAM_SCHEMA, &zbar.t_matmul(&zbar))?;
    }
    Ok(())
}

pub fn cmd_train(config: &Path, out: Option<&Path>) -> CliResult<()> {
    let rc = load_config(config)?;
    let dir = out
        .map(Path::to_path_buf)
        .or_else(|| rc.output.dir.clone())
        .ok_or_else(|| CliError::Config("no output directory: pass --out or set output.dir".into()))?;
    let out = run_train(&rc, &dir)?;
    print_summary(&out.report);
    Ok(())
}

fn print_summary(rep: &Report) {
    for e in rep.entries() {
        let tag = match e.holds {
            Holds::Holds => "holds",
            Holds::Violated => "VIOLATED",
            Holds::Vacuous => "vacuous",
        };
        println!(
            "{:<34} {:<8} measured {:<24} bound {}",
            e.name,
            tag,
            fmt_opt(e.measured),
            fmt_opt(e.bound)
        );
    }
    println!(
        "{} hold, {} violated, {} vacuous",
        rep.summary.holds, rep.summary.violated, rep.summary.vacuous
    );
}

pub fn cmd_bounds(run: &Path) -> CliResult<()> {
    let rc: RunConfig = read_json(&run.join(CONFIG_JSON))?;
    rc.validate()?;
    let records = read_trajectory(&run.join(TRAJECTORY_CSV), &rc.network)?;
    let diverged = records.last().map_or(true, |r| r.step < rc.train.steps);
    let params = if diverged {
        ParamSet::new(vec![])
    } else {
        let p: ParamsFile = read_json(&run.join(PARAMS_JSON))?;
        if p.schema != PARAMS_SCHEMA {
            return Err(CliError::Config(format!("{PARAMS_JSON}: unknown schema {:?}", p.schema)));
        }
        if p.params.depth() != rc.network.depth()
            || (1..=rc.network.depth()).any(|l| p.params.layer(l).shape() != rc.network.layer_shape(l))
        {
            return Err(CliError::Config(format!("{PARAMS_JSON}: shapes do not match the network")));
        }
        p.params
    };
    let ds = rc.load_dataset()?;
    let rep = evaluate(&rc, &ds, &params, &records, diverged)?;
    write_json(&run.join(REPORT_JSON), &rep)?;
    print_summary(&rep);
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum Axis {
    LinearDepth,
    NonlinearDepth,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::LinearDepth => "linear_depth",
            Axis::NonlinearDepth => "nonlinear_depth",
        }
    }
}

/// Per-layer init scales of the derived network: nonlinear layers reuse the
/// base's last nonlinear scale, hidden linear layers its last hidden linear
/// scale, the output layer keeps its own.
fn derive_scales(base: &NetworkConfig, scales: &[f64], l1: usize, l2: usize) -> Vec<f64> {
    let last = scales[scales.len() - 1];
    let nl = if base.l1 > 0 { scales[base.l1 - 1] } else { last };
    let hidden = if base.l2 >= 2 { scales[scales.len() - 2] } else { last };
    let mut out = vec![nl; l1];
    out.extend(std::iter::repeat(hidden).take(l2 - 1));
    out.push(last);
    out
}

/// Member configuration of a sweep.
pub fn derive_member(base: &RunConfig, axis: Axis, value: usize, seed: u64) -> CliResult<RunConfig> {
    let net = &base.network;
    let k = net.num_classes();
    let nl_widths = &net.widths[..net.l1];
    let lin_hidden: Vec<usize> = net.widths[net.l1..net.depth() - 1].to_vec();
    let (l1, l2) = match axis {
        Axis::LinearDepth => (net.l1, value),
        Axis::NonlinearDepth => (value, net.l2),
    };
    if l2 == 0 {
        return Err(CliError::Config("--values: linear depth must be at least 1".into()));
    }
    let nl_width = nl_widths.last().copied().unwrap_or(net.input_dim);
    let hidden_width = lin_hidden.last().copied().unwrap_or(nl_width);
    let mut widths: Vec<usize> = match axis {
        Axis::LinearDepth => nl_widths.to_vec(),
        Axis::NonlinearDepth => vec![nl_width; l1],
    };
    match axis {
        Axis::LinearDepth => widths.extend(std::iter::repeat(hidden_width).take(l2 - 1)),
        Axis::NonlinearDepth => widths.extend(&lin_hidden),
    }
    widths.push(k);
    let mut rc = base.clone();
    rc.network = NetworkConfig {
        input_dim: net.input_dim,
        widths,
        l1,
        l2,
        activation: net.activation,
    };
    rc.train.seed = seed;
    rc.train.init = match &base.train.init {
        InitSpec::FanIn { gain } => InitSpec::FanIn { gain: *gain },
        InitSpec::Gaussian { scales } => InitSpec::Gaussian {
            scales: derive_scales(net, scales, l1, l2),
        },
        InitSpec::Orthogonal { scales } => InitSpec::Orthogonal {
            scales: derive_scales(net, scales, l1, l2),
        },
        InitSpec::Custom { .. } => {
            return Err(CliError::Config("train.init: custom weights cannot be swept over depth".into()));
        }
    };
    rc.validate()?;
    Ok(rc)
}

pub fn sweep_header() -> Vec<String> {
    [
        "axis",
        "value",
        "seed",
        "status",
        "nc1_last",
        "nc2_last",
        "nc1_head_input",
        "nc2_head_input",
        "balancedness_min",
        "balancedness_mean",
        "negativity_min",
        "negativity_mean",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

fn min_mean(v: &[f64]) -> (Option<f64>, Option<f64>) {
    if v.is_empty() {
        return (None, None);
    }
    let min = v.iter().copied().fold(f64::INFINITY, f64::min);
    (Some(min), Some(v.iter().sum::<f64>() / v.len() as f64))
}

/// Sweep columns from a final metrics report. "last" is `Z_{L-1}`, the head
/// input is `Z_{l1}`.
pub fn sweep_values(cfg: &NetworkConfig, m: &MetricsReport) -> Vec<Option<f64>> {
    let l = cfg.depth();
    let last = m.layer(l - 1);
    let head = m.layer(cfg.l1);
    let ratios: Vec<f64> = m.interfaces.iter().filter_map(|i| i.ratio).collect();
    let negs: Vec<f64> = m.negativity.iter().filter_map(|n| n.value).collect();
    let (bmin, bmean) = min_mean(&ratios);
    let (nmin, nmean) = min_mean(&negs);
    vec![
        last.and_then(|x| x.nc1),
        last.and_then(|x| x.nc2),
        head.and_then(|x| x.nc1),
        head.and_then(|x| x.nc2),
        bmin,
        bmean,
        nmin,
        nmean,
    ]
}

pub fn cmd_sweep(
    config: &Path,
    axis: Axis,
    values: &[usize],
    seeds: &[u64],
    jobs: usize,
    out: Option<&Path>,
) -> CliResult<()> {
    let base = load_config(config)?;
    if values.is_empty() || seeds.is_empty() {
        return Err(CliError::Config("--values and --seeds must be non-empty".into()));
    }
    let dir = out
        .map(Path::to_path_buf)
        .or_else(|| base.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from(format!("sweep-{}", axis.name())));
    let mut members = Vec::new();
    for &v in values {
        for &s in seeds {
            members.push((v, s, derive_member(&base, axis, v, s)?));
        }
    }
    mkdir(&dir)?;
    let results = nclab_core::par::with_jobs(jobs, || {
        nclab_core::par::map(&members, |(v, s, rc)| {
            let run_dir = dir.join(format!("{}={v}", axis.name())).join(format!("seed={s}"));
            (run_train(rc, &run_dir), rc.network.clone())
        })
    });
    let mut rows = Vec::new();
    for ((v, s, _), (res, net)) in members.iter().zip(results) {
        let mut row = vec![axis.name().to_string(), v.to_string(), s.to_string()];
        match res {
            Ok(RunOutcome {
                report: Report {
                    final_metrics: Some(m), ..
                },
            }) => {
                row.push("ok".into());
                row.extend(sweep_values(&net, &m).into_iter().map(fmt_opt));
            }
            Ok(_) => {
                row.push("no_metrics".into());
                row.extend(std::iter::repeat(String::new()).take(8));
            }
            Err(e) => {
                let status = match e {
                    CliError::Diverged(_) => "diverged".to_string(),
                    other => format!("error: {other}"),
                };
                eprintln!("{}={v} seed={s}: {status}", axis.name());
                row.push(status);
                row.extend(std::iter::repeat(String::new()).take(8));
            }
        }
        rows.push(row);
    }
    let path = dir.join(SWEEP_CSV);
    write_csv(&path, SWEEP_SCHEMA, &[], &sweep_header(), &rows)?;
    println!("wrote {}", path.display());
    Ok(())
}

pub fn cmd_verify(level: Level, faults: &Faults, dump: Option<&Path>) -> CliResult<()> {
    let results = run_suite(level, faults);
    print!("{}", format_table(&results));
    let failed: Vec<_> = results.iter().filter(|r| !r.passed).collect();
    if failed.is_empty() {
        return Ok(());
    }
    let cx: Vec<_> = failed.iter().filter_map(|r| r.counterexample.clone()).collect();
    let text = serde_json::to_string_pretty(&cx).unwrap_or_default();
    eprintln!("counterexamples:\n{text}");
    if let Some(p) = dump {
        std::fs::write(p, &text).map_err(|e| CliError::io(p, e))?;
    }
    let names: Vec<&str> = failed.iter().map(|r| r.name.as_str()).collect();
    Err(CliError::Verify(format!("failing properties: {}", names.join(", "))))
}
