use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use bec_core::channel::empirical_forgetting;
use bec_core::filter::window_table;
use bec_core::io::{
    distribution_to_json, fmt_float, load_distribution, load_model, pareto_csv, to_json_string, window_table_csv,
    witness_to_json,
};
use bec_core::region::{
    achieving_distribution, boundary_sweep_table, canonicalize as canonical_form, sandwich, weighted_optimum,
    ParetoPoint, DEFAULT_SWEEP_POINTS,
};
use bec_core::sim::{decode_verify, read_trace, simulate as run_sim, write_trace, SlotRecord};
use bec_core::{ActionDistribution, ChannelModel, Scheduler, SimConfig, WindowTable};
use serde_json::Value;

use crate::config::RunConfig;
use crate::error::CliError;

const DEFAULT_SLOTS: u64 = 100_000;
const DEFAULT_SAMPLES: usize = 1000;

fn write_out(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::Config(format!("cannot write {}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn json_out(path: Option<&Path>, value: &impl serde::Serialize) -> Result<(), CliError> {
    let mut text = to_json_string(value).map_err(|e| CliError::Numeric(e.to_string()))?;
    text.push('\n');
    write_out(path, &text)
}

fn model_and_table(cfg: &RunConfig) -> Result<(ChannelModel, WindowTable), CliError> {
    let model = load_model(cfg.model()?)?;
    let table = window_table(&model, cfg.len()?)?;
    Ok((model, table))
}

/// The weighted optimum at `lambda`.
fn point_at(table: &WindowTable, lambda: f64) -> Result<ParetoPoint, CliError> {
    let (_, witness) = weighted_optimum(table, lambda, 1.0 - lambda, 0.0)?
        .ok_or_else(|| CliError::Numeric(format!("region program infeasible at lambda = {lambda}")))?;
    Ok(ParetoPoint {
        lambda,
        r1: witness.r1,
        r2: witness.r2,
        witness,
    })
}

pub fn region(cfg: &RunConfig) -> Result<(), CliError> {
    let (model, table) = model_and_table(cfg)?;
    let (points, lambdas) = match cfg.lambda {
        Some(_) => {
            let l = cfg.lambda()?;
            (vec![point_at(&table, l)?], vec![l])
        }
        None => {
            let k = cfg.sweep.unwrap_or(DEFAULT_SWEEP_POINTS);
            let lambdas = (0..k.max(2)).map(|i| i as f64 / (k.max(2) - 1) as f64).collect();
            (boundary_sweep_table(&table, k)?, lambdas)
        }
    };
    write_out(cfg.out.as_deref(), &pareto_csv(&points))?;
    if let Some(path) = &cfg.witness {
        let items = points
            .iter()
            .map(|p| {
                let mut v: Value = serde_json::from_str(&witness_to_json(&p.witness)).expect("witness json");
                v["lambda"] = p.lambda.into();
                v
            })
            .collect::<Vec<_>>();
        json_out(Some(path), &items)?;
    }
    if let Some(path) = &cfg.sandwich {
        let len = table.len;
        let items = lambdas
            .iter()
            .map(|&l| {
                let s = sandwich(&model, len, l, 1.0 - l)?;
                let mut v = serde_json::to_value(s).expect("sandwich json");
                v["lambda"] = l.into();
                Ok(v)
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        json_out(Some(path), &items)?;
    }
    Ok(())
}

fn scheduler(cfg: &RunConfig, table: impl FnOnce() -> Result<WindowTable, CliError>) -> Result<Scheduler, CliError> {
    let name = cfg.scheduler.as_deref().unwrap_or("maxweight");
    let dist_path = match name.split_once(':') {
        Some(("probabilistic", p)) => Some(Path::new(p).to_path_buf()),
        _ if name == "probabilistic" => cfg.dist.clone(),
        _ if name == "maxweight" => return Ok(Scheduler::MaxWeight),
        _ => {
            return Err(CliError::Config(format!(
                "unknown scheduler {name:?} (maxweight, probabilistic, probabilistic:<dist.json>)"
            )))
        }
    };
    let dist = match dist_path {
        Some(p) => load_distribution(&p)?,
        None => derived_distribution(&table()?, cfg.lambda()?)?,
    };
    Ok(Scheduler::Probabilistic { dist })
}

/// Canonical distribution supporting the region point at `lambda`.
fn derived_distribution(table: &WindowTable, lambda: f64) -> Result<ActionDistribution, CliError> {
    let p = point_at(table, lambda)?;
    let (canon, _) = achieving_distribution(table, &p.witness, 0.0)?
        .ok_or_else(|| CliError::Numeric(format!("no canonical distribution supports the point at lambda = {lambda}")))?;
    Ok(canon.dist)
}

fn slots_csv(rows: &[SlotRecord]) -> String {
    let mut out = String::from("slot,action,z1,z2,totalQ,delivered1,delivered2\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.slot, r.action, r.z1 as u8, r.z2 as u8, r.total, r.delivered1, r.delivered2
        );
    }
    out
}

pub fn simulate(cfg: &RunConfig) -> Result<(), CliError> {
    let model = load_model(cfg.model()?)?;
    let table = || -> Result<WindowTable, CliError> { Ok(window_table(&model, cfg.len()?)?) };
    let rates = match (cfg.rates, cfg.scale) {
        (Some(r), _) => r,
        (None, Some(s)) => {
            let p = point_at(&table()?, cfg.lambda()?)?;
            [(p.r1 * s).clamp(0.0, 1.0), (p.r2 * s).clamp(0.0, 1.0)]
        }
        (None, None) => return Err(CliError::Config("no rates given (--rates R1,R2 or --scale)".into())),
    };
    let sched = scheduler(cfg, table)?;
    let mut sim = SimConfig::new(
        rates[0],
        rates[1],
        cfg.slots.unwrap_or(DEFAULT_SLOTS),
        cfg.seed.unwrap_or(0),
    );
    sim.record_trace = cfg.trace.is_some();
    sim.record_slots = cfg.csv.is_some();
    let report = run_sim(&model, &sched, &sim)?;
    json_out(cfg.out.as_deref(), &report)?;
    if let Some(path) = &cfg.csv {
        write_out(Some(path), &slots_csv(&report.slots))?;
    }
    if let Some(path) = &cfg.trace {
        let cannot = |e: std::io::Error| CliError::Config(format!("cannot write {}: {e}", path.display()));
        let mut w = BufWriter::new(File::create(path).map_err(cannot)?);
        write_trace(&mut w, &report.trace).map_err(cannot)?;
        w.flush().map_err(cannot)?;
    }
    match &report.decode {
        Some(d) if !d.ok() => Err(CliError::Numeric(format!("decodability check failed: {d:?}"))),
        _ => Ok(()),
    }
}

pub fn forgetting(cfg: &RunConfig) -> Result<(), CliError> {
    let model = load_model(cfg.model()?)?;
    let lmax = cfg.len()?;
    let horizon = cfg.horizon.unwrap_or(lmax + 8);
    let samples = cfg.samples.unwrap_or(DEFAULT_SAMPLES);
    let seed = cfg.seed.unwrap_or(0);
    let sigma = model.forgetting_rate_bound();
    let mut out = String::from("L,tv,bound\n");
    for l in 1..=lmax {
        let tv = empirical_forgetting(&model, l, horizon, samples, seed).map_err(|e| match e {
            bec_core::channel::ForgettingError::Horizon { .. } => CliError::Config(e.to_string()),
            e => CliError::Numeric(e.to_string()),
        })?;
        let bound = sigma.map(|s| fmt_float(2.0 * (1.0 - s).powi(l as i32))).unwrap_or_default();
        let _ = writeln!(out, "{l},{},{bound}", fmt_float(tv));
    }
    write_out(cfg.out.as_deref(), &out)
}

pub fn verify(cfg: &RunConfig) -> Result<(), CliError> {
    let path = cfg
        .trace
        .as_deref()
        .ok_or_else(|| CliError::Config("no trace given".into()))?;
    let file = File::open(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            CliError::Config(format!("trace file not found: {}", path.display()))
        } else {
            CliError::Config(format!("cannot read {}: {e}", path.display()))
        }
    })?;
    let trace = read_trace(BufReader::new(file))?;
    let report = decode_verify(&trace);
    json_out(cfg.out.as_deref(), &report)?;
    if report.ok() {
        return Ok(());
    }
    let bad = [&report.rx1, &report.rx2]
        .into_iter()
        .enumerate()
        .filter_map(|(i, r)| r.counterexample.map(|id| format!("rx{} packet {id}", i + 1)))
        .collect::<Vec<_>>();
    Err(CliError::Numeric(format!("undecodable delivery: {}", bad.join(", "))))
}

pub fn canonicalize(cfg: &RunConfig) -> Result<(), CliError> {
    let path = cfg
        .dist
        .as_deref()
        .ok_or_else(|| CliError::Config("no distribution given (--dist)".into()))?;
    let dist = load_distribution(path)?;
    if let Some(l) = cfg.len {
        if l != dist.len {
            return Err(CliError::Config(format!("--L {l} does not match the distribution's L = {}", dist.len)));
        }
    }
    let model = load_model(cfg.model()?)?;
    let table = window_table(&model, dist.len)?;
    let canon = canonical_form(&dist, &table)?;
    eprintln!("case {:?}, theta {}", canon.case, fmt_float(canon.theta));
    write_out(cfg.out.as_deref(), &(distribution_to_json(&canon.dist) + "\n"))
}

pub fn dump_window_table(cfg: &RunConfig) -> Result<(), CliError> {
    let (_, table) = model_and_table(cfg)?;
    write_out(cfg.out.as_deref(), &window_table_csv(&table))
}
