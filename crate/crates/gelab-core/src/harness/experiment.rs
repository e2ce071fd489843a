//! Replicate fan-out and aggregation.
//!
//! Each replicate gets its own derived RNG streams, so results are a pure
//! function of (config, seed, replicate). Parallel runs collect into a
//! replicate-indexed vector and aggregate sequentially, which makes every
//! output byte-identical regardless of worker count.

use super::config::{ExperimentConfig, ModelChoice, SimKind};
use crate::error::ModelError;
use crate::feller::feller_exact_sample;
use crate::graph::run_graph_observed;
use crate::jump::run_jump_observed;
use crate::model::init_population;
use crate::rng::{SeedSpec, StreamRole};
use crate::sim::{recording_grid, GridRecorder, GridRow};
use crate::stats::{self, AuxRow, PathTracker};
use std::fmt::Write as _;

pub const RAW_HEADER: &str = "replicate,t,Z,rho2,rho3,gap2,events_so_far";
pub const RAW_HEADER_EXTENDED: &str =
    "replicate,t,Z,rho2,rho3,gap2,events_so_far,occ_gap2,qv_sum,qv_comp";
pub const REPORT_HEADER: &str = "model,n,t,stat,value,se";

/// Worker count: `GELAB_WORKERS` if set and >= 1, otherwise the number of
/// available cores.
pub fn effective_workers() -> usize {
    std::env::var("GELAB_WORKERS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&w| w >= 1)
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        })
}

/// One replicate's recorded path: state row plus path-functional row per
/// grid time.
#[derive(Debug, Clone)]
pub struct ReplicatePath {
    pub rows: Vec<(GridRow, AuxRow)>,
}

fn one_replicate(
    kind: SimKind,
    n: usize,
    cfg: &ExperimentConfig,
    replicate: u64,
) -> Result<ReplicatePath, ModelError> {
    let spec = SeedSpec::new(cfg.seed, replicate);
    let mut init_rng = spec.stream(StreamRole::Init);
    let mut pop = init_population(&cfg.init, n, &mut init_rng)?;
    let grid = recording_grid(&cfg.grid, cfg.t_end);
    let mut rec = GridRecorder::new(&grid);
    let mut aux = PathTracker::new(&grid);
    let params = cfg.params_for(n);
    match kind {
        SimKind::Jump => {
            let mut rng = spec.stream(StreamRole::JumpSim);
            run_jump_observed(
                &mut pop,
                &params,
                cfg.t_end,
                &mut [&mut rec, &mut aux],
                &mut rng,
            )?;
        }
        SimKind::Graph => {
            let mut rng = spec.stream(StreamRole::GraphSim);
            run_graph_observed(
                &mut pop,
                &params,
                cfg.t_end,
                &mut [&mut rec, &mut aux],
                &mut rng,
            )?;
        }
    }
    let rec = rec.into_record();
    debug_assert_eq!(rec.rows.len(), aux.rows.len());
    Ok(ReplicatePath {
        rows: rec.rows.into_iter().zip(aux.rows).collect(),
    })
}

fn fan_out<T: Send>(
    reps: u64,
    workers: usize,
    job: impl Fn(u64) -> Result<T, ModelError> + Sync,
) -> Result<Vec<T>, ModelError> {
    if workers <= 1 {
        return (0..reps).map(job).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(|| {
            use rayon::prelude::*;
            (0..reps).into_par_iter().map(&job).collect()
        }),
        Err(_) => (0..reps).map(job).collect(),
    }
}

/// All replicates of one (simulator, N) cell, in replicate order.
pub fn run_cell(
    kind: SimKind,
    n: usize,
    cfg: &ExperimentConfig,
    workers: usize,
) -> Result<Vec<ReplicatePath>, ModelError> {
    fan_out(cfg.replicates, workers, |rep| {
        one_replicate(kind, n, cfg, rep)
    })
}

/// Per-replicate values of one statistic at one grid index.
pub fn column(
    paths: &[ReplicatePath],
    grid_index: usize,
    f: impl Fn(&GridRow, &AuxRow) -> f64,
) -> Vec<f64> {
    paths
        .iter()
        .map(|p| {
            let (g, a) = &p.rows[grid_index];
            f(g, a)
        })
        .collect()
}

pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn push_raw_row(buf: &mut String, replicate: u64, g: &GridRow, aux: Option<&AuxRow>) {
    write!(
        buf,
        "{replicate},{},{},{},{},{},{}",
        g.t, g.z, g.rho2, g.rho3, g.gap2, g.events
    )
    .unwrap();
    if let Some(a) = aux {
        write!(buf, ",{},{},{}", a.occ_gap2, a.qv_sum, a.qv_comp).unwrap();
    }
    buf.push('\n');
}

/// Raw per-replicate CSV; `extended` adds the path-functional columns.
pub fn raw_csv(paths: &[ReplicatePath], extended: bool) -> Vec<u8> {
    let mut buf = String::new();
    buf.push_str(if extended {
        RAW_HEADER_EXTENDED
    } else {
        RAW_HEADER
    });
    buf.push('\n');
    for (rep, path) in paths.iter().enumerate() {
        for (g, a) in &path.rows {
            push_raw_row(&mut buf, rep as u64, g, extended.then_some(a));
        }
    }
    buf.into_bytes()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub model: &'static str,
    pub n: usize,
    pub t: f64,
    pub stat: String,
    pub value: f64,
    pub se: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConvergenceReport {
    pub rows: Vec<ReportRow>,
}

impl ConvergenceReport {
    pub fn to_csv(&self) -> Vec<u8> {
        let mut buf = String::from(REPORT_HEADER);
        buf.push('\n');
        for r in &self.rows {
            writeln!(
                buf,
                "{},{},{},{},{},{}",
                r.model, r.n, r.t, r.stat, r.value, r.se
            )
            .unwrap();
        }
        buf.into_bytes()
    }

    pub fn get_row(&self, model: &str, n: usize, t: f64, stat: &str) -> Option<&ReportRow> {
        self.rows
            .iter()
            .find(|r| r.model == model && r.n == n && r.t == t && r.stat == stat)
    }

    pub fn value(&self, model: &str, n: usize, t: f64, stat: &str) -> Option<f64> {
        self.get_row(model, n, t, stat).map(|r| r.value)
    }
}

#[derive(Debug, Clone)]
pub struct RawCsv {
    pub name: String,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub raw: Vec<RawCsv>,
    pub report: ConvergenceReport,
}

fn cell_report_rows(
    kind: SimKind,
    n: usize,
    cfg: &ExperimentConfig,
    grid: &[f64],
    paths: &[ReplicatePath],
    feller_ref: &[Option<Vec<f64>>],
    out: &mut Vec<ReportRow>,
) {
    let model = kind.name();
    let neutral = cfg.is_neutral();
    let e0 = cfg.init.initial_sq_gap(n);
    let z0 = cfg.init.mean();
    for (gi, &t) in grid.iter().enumerate() {
        let mut push = |stat: &str, value: f64, se: f64| {
            out.push(ReportRow {
                model,
                n,
                t,
                stat: stat.to_string(),
                value,
                se,
            });
        };
        let z = column(paths, gi, |g, _| g.z);
        for (stat, vals) in [
            ("z", z.clone()),
            ("rho2", column(paths, gi, |g, _| g.rho2)),
            ("gap2", column(paths, gi, |g, _| g.gap2)),
            ("events", column(paths, gi, |g, _| g.events as f64)),
            ("occ_gap2", column(paths, gi, |_, a| a.occ_gap2)),
            ("qv_sum", column(paths, gi, |_, a| a.qv_sum)),
            ("qv_comp", column(paths, gi, |_, a| a.qv_comp)),
        ] {
            let (m, se) = mean_se(&vals);
            push(stat, m, se);
        }
        let qv_diff = column(paths, gi, |_, a| a.qv_sum - a.qv_comp);
        let (m, se) = mean_se(&qv_diff);
        push("qv_gap", m, se);
        if neutral {
            let sq_gap = column(paths, gi, |g, _| g.z * g.z - g.rho2);
            let (m, se) = mean_se(&sq_gap);
            push("sq_gap", m, se);
            push(
                "ode_resid",
                m - stats::second_moment_ode_solution(n, t, e0, z0),
                se,
            );
        }
        if let Some(reference) = feller_ref.get(gi).and_then(|r| r.as_ref()) {
            let d = stats::distance_suite(&z, reference);
            push("w1_feller", d.w1, 0.0);
            push("ks_feller", d.ks, 0.0);
            push("ks_p_feller", d.ks_p, 0.0);
        }
    }
}

/// Run the configured experiment. The config must already be validated (the
/// parser does this); outputs are deterministic in (config, seed) and
/// independent of `workers`.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    workers: usize,
) -> Result<ExperimentOutput, ModelError> {
    let grid = recording_grid(&cfg.grid, cfg.t_end);
    let feller_ref: Vec<Option<Vec<f64>>> = if cfg.is_neutral() && cfg.feller_samples > 0 {
        let z0 = cfg.init.mean();
        grid.iter()
            .enumerate()
            .map(|(gi, &t)| {
                if t <= 0.0 {
                    return Ok(None);
                }
                let mut rng = SeedSpec::new(cfg.seed, gi as u64).stream(StreamRole::FellerExact);
                (0..cfg.feller_samples)
                    .map(|_| feller_exact_sample(z0, t, &mut rng))
                    .collect::<Result<Vec<f64>, _>>()
                    .map(Some)
            })
            .collect::<Result<_, ModelError>>()?
    } else {
        vec![None; grid.len()]
    };

    // Per (kind, n) cell: the replicate Z values and the rho2 mean/SE at
    // each grid index, kept for the cross-simulator rows below.
    type CrossCell = (SimKind, usize, Vec<Vec<f64>>, Vec<(f64, f64)>);

    let mut raw = Vec::new();
    let mut rows = Vec::new();
    let mut z_by_kind: Vec<CrossCell> = Vec::new();
    for &kind in cfg.model.kinds() {
        for &n in &cfg.n_values {
            let paths = run_cell(kind, n, cfg, workers)?;
            raw.push(RawCsv {
                name: format!("raw_{}_{}.csv", kind.name(), n),
                bytes: raw_csv(&paths, true),
            });
            cell_report_rows(kind, n, cfg, &grid, &paths, &feller_ref, &mut rows);
            if cfg.model == ModelChoice::Both {
                let z_cols: Vec<Vec<f64>> = (0..grid.len())
                    .map(|gi| column(&paths, gi, |g, _| g.z))
                    .collect();
                let rho2_stats: Vec<(f64, f64)> = (0..grid.len())
                    .map(|gi| mean_se(&column(&paths, gi, |g, _| g.rho2)))
                    .collect();
                z_by_kind.push((kind, n, z_cols, rho2_stats));
            }
        }
    }

    if cfg.model == ModelChoice::Both {
        for &n in &cfg.n_values {
            let jump = z_by_kind
                .iter()
                .find(|(k, m, ..)| *k == SimKind::Jump && *m == n);
            let graph = z_by_kind
                .iter()
                .find(|(k, m, ..)| *k == SimKind::Graph && *m == n);
            if let (Some((_, _, zj, rj)), Some((_, _, zg, rg))) = (jump, graph) {
                for (gi, &t) in grid.iter().enumerate() {
                    let p = stats::ks_pvalue(
                        stats::ks_statistic(&zj[gi], &zg[gi]),
                        zj[gi].len(),
                        zg[gi].len(),
                    );
                    rows.push(ReportRow {
                        model: "both",
                        n,
                        t,
                        stat: "cross_ks_p_z".into(),
                        value: p,
                        se: 0.0,
                    });
                    let (mj, sj) = rj[gi];
                    let (mg, sg) = rg[gi];
                    let denom = (sj * sj + sg * sg).sqrt();
                    let zscore = if denom > 0.0 {
                        (mj - mg).abs() / denom
                    } else if mj == mg {
                        0.0
                    } else {
                        f64::INFINITY
                    };
                    rows.push(ReportRow {
                        model: "both",
                        n,
                        t,
                        stat: "cross_rho2_zscore".into(),
                        value: zscore,
                        se: 0.0,
                    });
                }
            }
        }
    }

    Ok(ExperimentOutput {
        raw,
        report: ConvergenceReport { rows },
    })
}

/// Mean/SE summary of a raw CSV produced by `simulate` or `compare`,
/// grouped by grid time; summarizes whichever columns are present.
pub fn summarize_raw_csv(text: &str) -> Result<Vec<u8>, String> {
    let mut lines = text.lines();
    let header = lines.next().ok_or("empty CSV")?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.first() != Some(&"replicate") || cols.get(1) != Some(&"t") {
        return Err(format!("unexpected header `{header}`"));
    }
    let stat_names: Vec<String> = cols[2..].iter().map(|s| s.to_string()).collect();
    let mut order: Vec<String> = Vec::new();
    let mut groups: std::collections::HashMap<String, Vec<Vec<f64>>> =
        std::collections::HashMap::new();
    for (idx, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols.len() {
            return Err(format!(
                "row {}: expected {} fields, got {}",
                idx + 2,
                cols.len(),
                fields.len()
            ));
        }
        let t_key = fields[1].to_string();
        let slot = groups.entry(t_key.clone()).or_insert_with(|| {
            order.push(t_key.clone());
            vec![Vec::new(); stat_names.len()]
        });
        for (ci, field) in fields[2..].iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| format!("row {}: bad number `{field}`", idx + 2))?;
            slot[ci].push(v);
        }
    }
    let mut out = String::from("t,stat,mean,se,replicates\n");
    for t_key in order {
        let slot = &groups[&t_key];
        for (ci, name) in stat_names.iter().enumerate() {
            let (m, se) = mean_se(&slot[ci]);
            writeln!(out, "{t_key},{name},{m},{se},{}", slot[ci].len()).unwrap();
        }
    }
    Ok(out.into_bytes())
}

/// The 7-column per-replicate CSV for the `simulate` subcommand.
pub fn simulate_csv(
    kind: SimKind,
    n: usize,
    cfg: &ExperimentConfig,
    workers: usize,
) -> Result<Vec<u8>, ModelError> {
    let paths = run_cell(kind, n, cfg, workers)?;
    Ok(raw_csv(&paths, false))
}
