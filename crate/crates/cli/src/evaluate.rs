//! Post-hoc bound evaluation of a finished run, shared by `train` and
//! `bounds`.

use crate::artifacts::REPORT_SCHEMA;
use crate::config::RunConfig;
use crate::error::CliResult;
use nclab_core::bounds::{
    balanced_power_gap, init_spectra, large_lr_check, ntk_lower_bound, pl_check, prop2_kappa_bound, residual_to_pinv,
    thm1_check, thm2_check, thm2_schedule, BoundEntry, BoundReport, Holds, Premise, Relation, Thm1Inputs, Thm1Observed,
    Thm2Observed, Thm2Schedule, Thm2Setup, Vacuous,
};
use nclab_core::data::Dataset;
use nclab_core::densemat::{cond, op_norm, singular_values, DEFAULT_RANK_TOL};
use nclab_core::metrics::{extract_thm1_inputs, nc1, nc2, nc3_rescaled, report, MetricsReport};
use nclab_core::network::{forward, head_product, loss, ParamSet};
use nclab_core::ntk::{ntk_opnorm, DEFAULT_MAX_ITER, DEFAULT_SEED, DEFAULT_TOL};
use nclab_core::trainer::{init_params, Trajectory, TrajectoryRecord};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measured {
    /// `‖Z_L − Y‖_F` from the last trajectory record.
    pub eps1: f64,
    /// Largest linear-interface gap from the last trajectory record.
    pub eps2: f64,
    pub r: f64,
    pub sk_y: f64,
    pub data_opnorm: f64,
    pub head_input_opnorm: f64,
    pub kappa_head: Option<f64>,
    pub kappa_wl: Option<f64>,
    pub param_norm_sq: f64,
    pub ntk_opnorm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Thm2Section {
    pub schedule: Thm2Schedule,
    pub report: BoundReport,
    pub pl: BoundReport,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub holds: usize,
    pub violated: usize,
    pub vacuous: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema: String,
    pub diverged: bool,
    pub final_step: Option<usize>,
    pub final_metrics: Option<MetricsReport>,
    pub measured: Option<Measured>,
    pub thm1: BoundReport,
    pub balanced_power: BoundReport,
    pub thm2: Option<Thm2Section>,
    /// Why the schedule checks were not run, when they were not.
    pub thm2_skipped: Option<String>,
    pub props: BoundReport,
    pub summary: Summary,
}

impl Report {
    pub fn entries(&self) -> impl Iterator<Item = &BoundEntry> {
        let thm2 = self
            .thm2
            .iter()
            .flat_map(|s| s.report.entries.iter().chain(&s.pl.entries));
        self.thm1
            .entries
            .iter()
            .chain(&self.balanced_power.entries)
            .chain(thm2)
            .chain(&self.props.entries)
    }

    fn reports_mut(&mut self) -> Vec<&mut BoundReport> {
        let mut v = vec![&mut self.thm1, &mut self.balanced_power, &mut self.props];
        if let Some(s) = self.thm2.as_mut() {
            v.push(&mut s.report);
            v.push(&mut s.pl);
        }
        v
    }

    fn diverged(final_step: Option<usize>) -> Self {
        Self {
            schema: REPORT_SCHEMA.into(),
            diverged: true,
            final_step,
            final_metrics: None,
            measured: None,
            thm1: BoundReport::default(),
            balanced_power: BoundReport::default(),
            thm2: None,
            thm2_skipped: Some("run diverged".into()),
            props: BoundReport::default(),
            summary: Summary::default(),
        }
    }
}

fn vacuous_entry(name: &str, why: &str) -> BoundEntry {
    BoundEntry::new(name, Err(Vacuous(why.into())), None, Relation::Le, vec![])
}

/// Evaluates every applicable bound on the final parameters, taking `ε₁` and
/// `ε₂` from the last trajectory record.
pub fn evaluate(
    rc: &RunConfig,
    ds: &Dataset,
    params: &ParamSet,
    records: &[TrajectoryRecord],
    diverged: bool,
) -> CliResult<Report> {
    let cfg = &rc.network;
    let last = records.last();
    if diverged || last.is_none() || !params.is_finite() {
        return Ok(Report::diverged(last.map(|r| r.step)));
    }
    let last = last.expect("checked above");
    let l = cfg.depth();
    let k = cfg.num_classes();
    let n = ds.len();
    let trace = forward(cfg, params, &ds.x)?;
    let metrics = report(cfg, params, &trace, &ds.idx, &ds.y)?;
    let eps1 = last.eps1;
    let eps2 = last.balancedness.iter().copied().fold(0.0, f64::max);
    let r = extract_thm1_inputs(cfg, &trace, params, &ds.y)?.r;
    let sk_y = *singular_values(&ds.y)?.last().expect("labels are non-empty");
    let head = head_product(cfg, params);
    let kappa_head = cond(&head, DEFAULT_RANK_TOL).ok();
    let w_l = params.layer(l);
    let z = &trace.z[l - 1];
    let mut measured = Measured {
        eps1,
        eps2,
        r,
        sk_y,
        data_opnorm: op_norm(&ds.x)?,
        head_input_opnorm: op_norm(&trace.z[cfg.l1])?,
        kappa_head,
        kappa_wl: cond(w_l, DEFAULT_RANK_TOL).ok(),
        param_norm_sq: params.norm_sq(),
        ntk_opnorm: None,
    };

    let inputs = Thm1Inputs {
        eps1,
        eps2,
        r,
        n_lminus1: if l >= 2 { cfg.widths[l - 2] } else { cfg.input_dim },
        k,
        n,
        sk_y,
        x_opnorm: measured.head_input_opnorm,
        l1: cfg.l1,
        l2: cfg.l2,
        c3: kappa_head,
    };
    let observed = Thm1Observed {
        nc1: nc1(z, &ds.idx).ok(),
        kappa_wl: measured.kappa_wl,
        nc2: nc2(z, &ds.idx, DEFAULT_RANK_TOL).ok(),
        nc3_rescaled: nc3_rescaled(z, w_l, &ds.idx).ok(),
        residual: residual_to_pinv(z, w_l, &ds.y)?.ok(),
    };
    let has_interface = cfg.l2 >= 2;
    let thm1 = thm1_check(&inputs, &observed, has_interface, true);

    let balanced_power = if has_interface {
        balanced_power_gap(cfg, params, r, eps2)?
    } else {
        let mut rep = BoundReport::default();
        rep.push(vacuous_entry("lemma_balanced_power", "no linear interface (l2 = 1)"));
        rep
    };

    let (thm2, thm2_skipped) = match (rc.bounds.eps1, cfg.l1 >= 1 && l >= 3) {
        (None, _) => (None, Some("bounds.eps1 not configured".to_string())),
        (Some(_), false) => (None, Some("needs l1 >= 1 and depth >= 3".to_string())),
        (Some(target), true) => (Some(thm2_section(rc, ds, records, target, &measured, z)?), None),
    };

    let mut props = BoundReport::default();
    let lk = (l * k) as f64;
    let c = measured.param_norm_sq - lk;
    props.push(
        BoundEntry::new(
            "prop2_kappa_head",
            prop2_kappa_bound(eps1, c, cfg.l1, k, sk_y, measured.data_opnorm),
            kappa_head,
            Relation::Le,
            vec![],
        )
        .with_note(format!("c = ||theta||^2 - LK = {c:?}")),
    );
    if rc.bounds.ntk {
        let theta = ntk_opnorm(cfg, params, &ds.x, DEFAULT_TOL, DEFAULT_MAX_ITER, DEFAULT_SEED)?.theta_opnorm;
        measured.ntk_opnorm = Some(theta);
        props.push(BoundEntry::new(
            "prop3_ntk_lower",
            ntk_lower_bound(sk_y, eps1, k, r, cfg.l2),
            Some(theta),
            Relation::Ge,
            vec![],
        ));
        let m = rc.bounds.prop3_m.unwrap_or(cfg.l2);
        let (entry, best) = large_lr_check(cfg, params, theta, m, r, sk_y, eps1, vec![])?;
        let entry = match best {
            Some((layer, _)) => entry.with_note(format!("best partial product starts at layer {layer}, C = measured NTK")),
            None => entry,
        };
        props.push(entry);
    }

    let mut out = Report {
        schema: REPORT_SCHEMA.into(),
        diverged: false,
        final_step: Some(last.step),
        final_metrics: Some(metrics),
        measured: Some(measured),
        thm1,
        balanced_power,
        thm2,
        thm2_skipped,
        props,
        summary: Summary::default(),
    };
    for rep in out.reports_mut() {
        for e in rep.entries.iter_mut().filter(|e| e.bound.is_some_and(|b| !b.is_finite())) {
            *e = e.clone().with_note("bound overflows f64 and is written as null");
        }
    }
    let mut s = Summary::default();
    for e in out.entries() {
        match e.holds {
            Holds::Holds => s.holds += 1,
            Holds::Violated => s.violated += 1,
            Holds::Vacuous => s.vacuous += 1,
        }
    }
    out.summary = s;
    Ok(out)
}

fn thm2_section(
    rc: &RunConfig,
    ds: &Dataset,
    records: &[TrajectoryRecord],
    target: f64,
    m: &Measured,
    z_lminus1: &nclab_core::Matrix,
) -> CliResult<Thm2Section> {
    let cfg = &rc.network;
    let theta0 = init_params(cfg, &rc.train.init, rc.train.seed)?;
    let sp = init_spectra(cfg, &theta0, &ds.x)?;
    let setup = Thm2Setup {
        eps1: target,
        eps2: rc.bounds.eps2,
        b: ds.b_bound(),
        x_opnorm: m.data_opnorm,
        theta0_norm: theta0.norm(),
        c0_init: loss(cfg, &theta0, &ds.x, &ds.y, 0.0)?.1,
        k: cfg.num_classes(),
        n: ds.len(),
        lambda: rc.train.lambda,
        eta: rc.train.eta,
    };
    let schedule = thm2_schedule(&sp, cfg, &setup);
    let l = cfg.depth();
    let obs = Thm2Observed {
        steps: records.last().map_or(0, |r| r.step),
        loss_non_increasing: records.windows(2).all(|w| w[1].c_lambda <= w[0].c_lambda),
        final_eps1: m.eps1,
        final_eps2: m.eps2,
        final_r: m.r,
        final_nc1: nc1(z_lminus1, &ds.idx).ok(),
        pyramidal: cfg.is_pyramidal(ds.len()),
        activation_ok: cfg.activation.validate().is_ok() && cfg.activation.contraction_check().holds,
        sk_y: m.sk_y,
        n_lminus1: cfg.widths[l - 2],
    };
    let report = thm2_check(&schedule, &obs);
    let traj = Trajectory {
        records: records.to_vec(),
        diverged: false,
        diverged_at: None,
    };
    let mut pl = pl_check(&traj, &schedule, rc.train.lambda, rc.train.eta);
    if rc.train.lr_drop_fraction < 1.0 {
        let constant = Premise::new("constant_step_size", false);
        for e in pl.entries.iter_mut() {
            e.premises.push(constant.clone());
            e.holds = Holds::Vacuous;
        }
    }
    Ok(Thm2Section { schedule, report, pl })
}
