//! Subcommand bodies. Each returns the files to write; nothing here touches
//! the filesystem, so identical configs give identical bytes.

use serde::Serialize;
use serde_json::{json, Value};

use poisson_ident_core::captools::{
    capacity, id_capacity, secrecy_capacity, AmplitudeGrid, CapacityResult, SolverOptions,
};
use poisson_ident_core::channel::WiretapChannelPair;
use poisson_ident_core::idcode::SchemeSelector;
use poisson_ident_core::phycode::{CodeBudget, WiretapCodebook};
use poisson_ident_core::simkit::{
    derive_seed, scaling_study, EveReport, IdentificationSystem, SameDecoder, ScalingParams, ScalingRow, Sizing,
    SystemSpec, TypeTwoMode,
};
use poisson_ident_core::Error as CoreError;

use crate::config::ExperimentConfig;
use crate::error::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Column order of the `idsim` CSV.
pub const IDSIM_COLUMNS: [&str; 19] = [
    "n",
    "epsilon",
    "q1",
    "k1",
    "q2",
    "k2",
    "N_log2log2",
    "M_prime",
    "M_dprime",
    "type1",
    "type1_lo",
    "type1_hi",
    "type2",
    "type2_lo",
    "type2_hi",
    "eve_yes_rate",
    "leakage_bits",
    "collision_bound",
    "seed",
];

/// Leading columns of the `sweep` CSV; the `idsim` columns follow.
pub const SWEEP_COLUMNS: [&str; 6] = [
    "lambda_b",
    "lambda_e",
    "peak",
    "budget_capacity",
    "secrecy_capacity",
    "status",
];

pub const SCALING_COLUMNS: [&str; 18] = [
    "n",
    "epsilon",
    "outer_bits",
    "q1",
    "k1",
    "q2",
    "k2",
    "identity_digits",
    "log2_log2",
    "log2_log2_per_n",
    "log2_log2_per_outer_bit",
    "M_prime",
    "M_dprime",
    "capped",
    "feasible",
    "type1",
    "type2",
    "note",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Capacity,
    Secrecy,
    Idsim,
    Leakage,
    Sweep,
    Scaling,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Capacity => "capacity",
            Command::Secrecy => "secrecy",
            Command::Idsim => "idsim",
            Command::Leakage => "leakage",
            Command::Sweep => "sweep",
            Command::Scaling => "scaling",
        }
    }
}

/// Files produced by a command, and the exit status it asks for.
#[derive(Debug, Clone, PartialEq)]
pub struct Output {
    pub files: Vec<(String, Vec<u8>)>,
    pub summary: String,
    pub exit_code: i32,
}

impl Output {
    pub fn file(&self, name: &str) -> Option<&[u8]> {
        self.files.iter().find(|(n, _)| n == name).map(|(_, b)| b.as_slice())
    }
}

/// Validates the config and runs one command. Failures after validation
/// still produce an `error.json` with whatever diagnostics exist.
pub fn execute(cmd: Command, cfg: &ExperimentConfig) -> Result<Output, (CliError, Option<Output>)> {
    cfg.validate().map_err(|e| (e, None))?;
    let run = match cmd {
        Command::Capacity => cmd_capacity(cfg),
        Command::Secrecy => cmd_secrecy(cfg),
        Command::Idsim => cmd_idsim(cfg),
        Command::Leakage => cmd_leakage(cfg),
        Command::Sweep => cmd_sweep(cfg),
        Command::Scaling => cmd_scaling(cfg),
    };
    run.map_err(|e| {
        let report = error_report(cmd, cfg, &e);
        let out = Output {
            files: vec![("error.json".to_string(), report)],
            summary: e.to_string(),
            exit_code: e.exit_code(),
        };
        (e, Some(out))
    })
}

fn envelope(cmd: Command, cfg: &ExperimentConfig, result: Value) -> Value {
    json!({
        "tool": "poisson-ident",
        "version": VERSION,
        "command": cmd.name(),
        "config": cfg,
        "result": result,
    })
}

fn to_json(v: &Value) -> Result<Vec<u8>, CliError> {
    let mut bytes = serde_json::to_vec_pretty(v)?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn error_report(cmd: Command, cfg: &ExperimentConfig, e: &CliError) -> Vec<u8> {
    let diagnostics = match e {
        CliError::Core(CoreError::Convergence {
            iterations,
            lower,
            upper,
        }) => json!({ "iterations": iterations, "lower": finite(*lower), "upper": finite(*upper) }),
        _ => Value::Null,
    };
    let v = envelope(
        cmd,
        cfg,
        json!({ "error": e.to_string(), "exit_code": e.exit_code(), "diagnostics": diagnostics }),
    );
    to_json(&v).unwrap_or_default()
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

fn solver_options(cfg: &ExperimentConfig) -> SolverOptions {
    SolverOptions {
        tol: cfg.solver.tol,
        max_iter: cfg.solver.max_iter,
        tail_tol: cfg.solver.tail_tol,
        average_power: cfg.channel.average_power,
        ..SolverOptions::default()
    }
}

fn pair(cfg: &ExperimentConfig) -> Result<WiretapChannelPair, CliError> {
    Ok(WiretapChannelPair::new(cfg.channel.lambda_b, cfg.channel.lambda_e)?)
}

fn grid(cfg: &ExperimentConfig, peak: f64) -> Result<AmplitudeGrid, CliError> {
    Ok(AmplitudeGrid::uniform(peak, cfg.channel.grid_points)?)
}

fn optimizer_csv(result: &CapacityResult) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["x", "mass"])?;
    for (x, p) in result.optimizer.grid().points().iter().zip(result.optimizer.mass()) {
        w.write_record([x.to_string(), p.to_string()])?;
    }
    w.into_inner().map_err(|e| CliError::Encode(e.to_string()))
}

fn capacity_json(r: &CapacityResult) -> Value {
    json!({
        "value_bits": r.value,
        "duality_gap": r.duality_gap,
        "iterations": r.iterations,
        "truncation": r.truncation,
        "tail_tol": r.tail_tol,
        "grid": r.optimizer.grid().points(),
        "optimizer": r.optimizer.mass(),
    })
}

pub fn cmd_capacity(cfg: &ExperimentConfig) -> Result<Output, CliError> {
    let g = grid(cfg, cfg.channel.peak)?;
    let p = pair(cfg)?;
    let r = capacity(&g, p.main(), &solver_options(cfg))?;
    let report = envelope(Command::Capacity, cfg, capacity_json(&r));
    Ok(Output {
        summary: format!("C(W) = {:.9} bits per use (gap {:.2e})", r.value, r.duality_gap),
        files: vec![
            ("capacity.json".into(), to_json(&report)?),
            ("capacity_optimizer.csv".into(), optimizer_csv(&r)?),
        ],
        exit_code: 0,
    })
}

pub fn cmd_secrecy(cfg: &ExperimentConfig) -> Result<Output, CliError> {
    let g = grid(cfg, cfg.channel.peak)?;
    let p = pair(cfg)?;
    let id = id_capacity(&g, &p, cfg.solver.positivity_threshold, &solver_options(cfg))?;
    let line = if id.secure {
        format!(
            "C_ID = C(W) = {:.9} bits, since C_s(W,V) = {:.9} > {:e}",
            id.value, id.secrecy_capacity, id.positivity_threshold
        )
    } else {
        format!(
            "C_ID = 0, since C_s(W,V) = {:.9} <= {:e}",
            id.secrecy_capacity, id.positivity_threshold
        )
    };
    let result = json!({
        "secrecy_capacity": capacity_json(&id.secrecy),
        "transmission_capacity": id.transmission.as_ref().map(capacity_json),
        "id_capacity": {
            "value_bits": id.value,
            "secure": id.secure,
            "positivity_threshold": id.positivity_threshold,
            "dichotomy": line,
            "conjectural": id.conjectural,
            "caveat": "the positivity dichotomy is applied to the Poisson pair as a conjecture",
        },
    });
    let report = envelope(Command::Secrecy, cfg, result);
    Ok(Output {
        summary: line,
        files: vec![
            ("secrecy.json".into(), to_json(&report)?),
            ("secrecy_optimizer.csv".into(), optimizer_csv(&id.secrecy)?),
        ],
        exit_code: 0,
    })
}

/// On-off capacity of the main channel, used as the budget's `C`.
fn on_off_capacity(cfg: &ExperimentConfig, lambda_b: f64, peak: f64) -> Result<f64, CliError> {
    let channel = poisson_ident_core::PoissonChannel::new(lambda_b)?;
    let opts = SolverOptions {
        average_power: None,
        ..solver_options(cfg)
    };
    Ok(capacity(&AmplitudeGrid::on_off(peak)?, &channel, &opts)?.value)
}

fn selector(cfg: &ExperimentConfig) -> SchemeSelector {
    SchemeSelector {
        delta: cfg.code.delta,
        field_cap_bits: cfg.code.field_cap_bits,
    }
}

struct IdsimRun {
    capacity: f64,
    sizing: Sizing,
    report: EveReport,
}

fn run_idsim(cfg: &ExperimentConfig, lambda_e: f64, peak: f64, n: usize) -> Result<IdsimRun, CliError> {
    let c = on_off_capacity(cfg, cfg.channel.lambda_b, peak)?;
    let budget = CodeBudget::new(n, cfg.code.epsilon, c).map_err(|e| match e {
        CoreError::Domain(msg) => CliError::Config(vec![format!("code.epsilon: {msg}")]),
        other => other.into(),
    })?;
    let spec = SystemSpec {
        budget,
        pair: WiretapChannelPair::new(cfg.channel.lambda_b, lambda_e)?,
        peak,
        bin_size: cfg.code.bin_size,
        code_cap: cfg.code.cap,
        selector: selector(cfg),
        seed: cfg.seed,
    };
    let (system, sizing) = IdentificationSystem::build(&spec)?;
    let report = system.eve_advantage(
        cfg.trials,
        derive_seed(cfg.seed, 1),
        &TypeTwoMode::Uniform,
        &SameDecoder,
    )?;
    Ok(IdsimRun {
        capacity: c,
        sizing,
        report,
    })
}

fn num(v: f64) -> String {
    v.to_string()
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn idsim_fields(run: &IdsimRun, seed: u64) -> Vec<String> {
    let b = &run.report.bob;
    let s = b.scheme;
    vec![
        run.sizing.n.to_string(),
        num(run.sizing.epsilon),
        s.q1().to_string(),
        s.k1().to_string(),
        s.q2().to_string(),
        s.k2().to_string(),
        num(s.log2_log2()),
        run.sizing.m_prime.to_string(),
        run.sizing.m_dprime.to_string(),
        num(b.type1_rate),
        num(b.type1_ci.0),
        num(b.type1_ci.1),
        num(b.type2_rate),
        num(b.type2_ci.0),
        num(b.type2_ci.1),
        num(run.report.eve_yes_rate),
        opt(run.report.leakage_bits),
        num(b.collision_bound),
        seed.to_string(),
    ]
}

fn idsim_json(run: &IdsimRun) -> Value {
    json!({
        "capacity_estimate_bits": run.capacity,
        "sizing": run.sizing,
        "identity_count_log2_log2": run.report.bob.scheme.log2_log2(),
        "bob": run.report.bob,
        "eve": {
            "attacker": run.report.attacker,
            "yes_rate_on_sent": run.report.eve_yes_rate,
            "yes_rate_ci": run.report.eve_yes_ci,
            "baseline": run.report.baseline,
            "advantage": run.report.advantage,
            "report": run.report.eve,
        },
        "leakage_bits": run.report.leakage_bits,
        "leakage_note": run.report.leakage_note,
    })
}

fn csv_bytes(header: &[&str], rows: &[Vec<String>]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.into_inner().map_err(|e| CliError::Encode(e.to_string()))
}

pub fn cmd_idsim(cfg: &ExperimentConfig) -> Result<Output, CliError> {
    let run = run_idsim(cfg, cfg.channel.lambda_e, cfg.channel.peak, cfg.code.n)?;
    let report = envelope(Command::Idsim, cfg, idsim_json(&run));
    let b = &run.report.bob;
    Ok(Output {
        summary: format!(
            "type I {:.4} [{:.4}, {:.4}], type II {:.4} [{:.4}, {:.4}], collision bound {:.4}, Eve yes {:.4}",
            b.type1_rate,
            b.type1_ci.0,
            b.type1_ci.1,
            b.type2_rate,
            b.type2_ci.0,
            b.type2_ci.1,
            b.collision_bound,
            run.report.eve_yes_rate
        ),
        files: vec![
            ("idsim.json".into(), to_json(&report)?),
            (
                "idsim.csv".into(),
                csv_bytes(&IDSIM_COLUMNS, &[idsim_fields(&run, cfg.seed)])?,
            ),
        ],
        exit_code: 0,
    })
}

#[derive(Serialize)]
struct LeakageEntry {
    block_length: usize,
    messages: u64,
    bin_size: usize,
    status: String,
    leakage_bits: Option<f64>,
    bob_information_bits: Option<f64>,
}

pub fn cmd_leakage(cfg: &ExperimentConfig) -> Result<Output, CliError> {
    let p = pair(cfg)?;
    let peak = cfg.channel.peak;
    let codes: Vec<(usize, u64, usize, Result<WiretapCodebook, CoreError>)> = match &cfg.leakage {
        Some(l) => l
            .bin_sizes
            .iter()
            .map(|&r| {
                let code = WiretapCodebook::random(l.block_length, l.messages, r, peak, derive_seed(cfg.seed, 0x7774));
                (l.block_length, l.messages, r, code)
            })
            .collect(),
        None => {
            let c = on_off_capacity(cfg, cfg.channel.lambda_b, peak)?;
            let spec = SystemSpec {
                budget: CodeBudget::new(cfg.code.n, cfg.code.epsilon, c)?,
                pair: p,
                peak,
                bin_size: cfg.code.bin_size,
                code_cap: cfg.code.cap,
                selector: selector(cfg),
                seed: cfg.seed,
            };
            let (system, sizing) = IdentificationSystem::build(&spec)?;
            vec![(
                sizing.wiretap_length,
                sizing.m_dprime,
                sizing.bin_size,
                Ok(system.wiretap_code().clone()),
            )]
        }
    };
    let mut entries = Vec::new();
    let mut worst = 0;
    for (block_length, messages, bin_size, code) in codes {
        let measured = code.and_then(|c| {
            let eve = c.exact_leakage(&p, cfg.solver.tail_tol)?;
            let bob = c.exact_information(p.main(), cfg.solver.tail_tol)?;
            Ok((eve, bob))
        });
        let entry = match measured {
            Ok((eve, bob)) => LeakageEntry {
                block_length,
                messages,
                bin_size,
                status: "ok".into(),
                leakage_bits: Some(eve),
                bob_information_bits: Some(bob),
            },
            Err(e) => {
                worst = worst.max(CliError::from(e.clone()).exit_code());
                LeakageEntry {
                    block_length,
                    messages,
                    bin_size,
                    status: e.to_string(),
                    leakage_bits: None,
                    bob_information_bits: None,
                }
            }
        };
        entries.push(entry);
    }
    let summary = entries
        .iter()
        .map(|e| match e.leakage_bits {
            Some(v) => format!("R={}: I(K;Z) = {v:.6e} bits", e.bin_size),
            None => format!("R={}: {}", e.bin_size, e.status),
        })
        .collect::<Vec<_>>()
        .join("; ");
    let report = envelope(
        Command::Leakage,
        cfg,
        json!({ "tail_tol": cfg.solver.tail_tol, "codes": entries }),
    );
    Ok(Output {
        summary,
        files: vec![("leakage.json".into(), to_json(&report)?)],
        exit_code: worst,
    })
}

pub fn cmd_sweep(cfg: &ExperimentConfig) -> Result<Output, CliError> {
    let lambdas = cfg.sweep.lambda_e.clone().unwrap_or_else(|| vec![cfg.channel.lambda_e]);
    let peaks = cfg.sweep.peak.clone().unwrap_or_else(|| vec![cfg.channel.peak]);
    let ns = cfg.sweep.n.clone().unwrap_or_else(|| vec![cfg.code.n]);
    let header: Vec<&str> = SWEEP_COLUMNS.iter().chain(IDSIM_COLUMNS.iter()).copied().collect();
    let opts = solver_options(cfg);
    let mut rows = Vec::new();
    for &peak in &peaks {
        let g = grid(cfg, peak)?;
        for &lambda_e in &lambdas {
            let p = WiretapChannelPair::new(cfg.channel.lambda_b, lambda_e)?;
            let cs = secrecy_capacity(&g, &p, &opts)?.value;
            for &n in &ns {
                let mut row = vec![
                    num(cfg.channel.lambda_b),
                    num(lambda_e),
                    num(peak),
                    String::new(),
                    num(cs),
                ];
                match run_idsim(cfg, lambda_e, peak, n) {
                    Ok(run) => {
                        row[3] = num(run.capacity);
                        row.push("ok".into());
                        row.extend(idsim_fields(&run, cfg.seed));
                    }
                    Err(e @ (CliError::Core(CoreError::Infeasible(_)) | CliError::Config(_))) => {
                        row[3] = opt(on_off_capacity(cfg, cfg.channel.lambda_b, peak).ok());
                        row.push(format!("infeasible: {}", e.to_string().replace('\n', " ")));
                        let mut blank = vec![String::new(); IDSIM_COLUMNS.len()];
                        blank[0] = n.to_string();
                        blank[1] = num(cfg.code.epsilon);
                        blank[18] = cfg.seed.to_string();
                        row.extend(blank);
                    }
                    Err(e) => return Err(e),
                }
                rows.push(row);
            }
        }
    }
    Ok(Output {
        summary: format!("{} sweep rows", rows.len()),
        files: vec![("sweep.csv".into(), csv_bytes(&header, &rows)?)],
        exit_code: 0,
    })
}

fn scaling_fields(r: &ScalingRow) -> Vec<String> {
    let s = r.scheme;
    vec![
        r.n.to_string(),
        num(r.epsilon),
        opt(r.outer_bits),
        opt(s.map(|s| s.q1())),
        opt(s.map(|s| s.k1())),
        opt(s.map(|s| s.q2())),
        opt(s.map(|s| s.k2())),
        opt(r.identity_digits),
        opt(r.log2_log2),
        opt(r.log2_log2_per_n),
        opt(r.log2_log2_per_outer_bit),
        opt(r.m_prime),
        opt(r.m_dprime),
        r.capped.to_string(),
        r.feasible.to_string(),
        opt(r.report.as_ref().map(|x| x.type1_rate)),
        opt(r.report.as_ref().map(|x| x.type2_rate)),
        r.note.clone().unwrap_or_default(),
    ]
}

pub fn cmd_scaling(cfg: &ExperimentConfig) -> Result<Output, CliError> {
    let mut budgets = Vec::new();
    let mut issues = Vec::new();
    for (i, b) in cfg.scaling.budgets.iter().enumerate() {
        let c = match b.capacity {
            Some(c) => c,
            None => on_off_capacity(cfg, cfg.channel.lambda_b, cfg.channel.peak)?,
        };
        match CodeBudget::new(b.n, b.epsilon, c) {
            Ok(budget) => budgets.push(budget),
            Err(e) => issues.push(format!("scaling.budgets[{i}]: {e}")),
        }
    }
    if !issues.is_empty() {
        return Err(CliError::Config(issues));
    }
    let params = ScalingParams {
        pair: pair(cfg)?,
        peak: cfg.channel.peak,
        bin_size: cfg.code.bin_size,
        code_cap: cfg.scaling.cap,
        selector: selector(cfg),
        trials: cfg.scaling.trials,
    };
    let rows = scaling_study(&budgets, &params, cfg.seed);
    let csv_rows: Vec<Vec<String>> = rows.iter().map(scaling_fields).collect();
    let report = envelope(Command::Scaling, cfg, json!({ "rows": rows }));
    Ok(Output {
        summary: format!(
            "{} scaling rows, {} feasible",
            rows.len(),
            rows.iter().filter(|r| r.feasible).count()
        ),
        files: vec![
            ("scaling.json".into(), to_json(&report)?),
            ("scaling.csv".into(), csv_bytes(&SCALING_COLUMNS, &csv_rows)?),
        ],
        exit_code: 0,
    })
}
