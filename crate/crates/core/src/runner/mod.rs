//! Running configured experiments, sweeping one parameter, and writing
//! reports.

mod config;

use std::collections::BTreeSet;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

pub use config::{
    ConfigFile, Experiment, ExperimentConfig, Format, Kind, ParamSpec, Params, DEFAULT_SEED,
    DEFAULT_TRIALS,
};

use crate::commitments::{self, CommitmentParams, BUILTIN_ADVERSARIES};
use crate::error::{LabError, Result};
use crate::pgm::{self, PgmParams};
use crate::prsg::{self, HybridSpec, Mode, PrsParams};
use crate::qla::blocks::gram_trace_distance_with_budget;
use crate::report::{csv_field, fmt_f64, Check, ExperimentReport};
use crate::rng::substream;
use crate::tol;
use crate::typestates;

/// Environment variable holding the worker-thread count.
pub const THREADS_ENV: &str = "CHS_LAB_THREADS";

/// Size the global thread pool from [`THREADS_ENV`]; unset means all cores.
/// Returns the number of threads in use.
pub fn configure_threads() -> Result<usize> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
            LabError::Config(format!("{THREADS_ENV} = {v:?} is not a positive integer"))
        })?;
        // a pool built earlier in the process wins; that is fine for tests
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    Ok(rayon::current_num_threads())
}

/// Run one experiment and write its report to `output_path` when set.
pub fn run(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let params = config.validate()?;
    let start = Instant::now();
    let mut report = dispatch(config, &params)?;
    report.seed = Some(config.seed);
    if config.record_duration {
        report.duration_secs = Some(start.elapsed().as_secs_f64());
    }
    if let Some(path) = &config.output_path {
        write_file(path, &render(&report, config.format))?;
    }
    Ok(report)
}

pub fn render(report: &ExperimentReport, format: Format) -> String {
    match format {
        Format::Csv => report.to_csv(),
        Format::Json => report.to_json(),
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, text)?;
    Ok(())
}

fn prs_params(p: &Params, with_p: bool) -> Result<PrsParams> {
    let keys = if with_p { p.usize("p") } else { 1 };
    PrsParams::new(p.u32("lam"), p.u32("n"), p.usize("ell"), p.usize("t"), keys)
}

fn dispatch(cfg: &ExperimentConfig, p: &Params) -> Result<ExperimentReport> {
    let budget = &cfg.budget;
    let mut r = match cfg.experiment {
        Experiment::HybridScan => hybrid_scan(cfg, p)?,
        Experiment::PrsgTd => {
            let params = prs_params(p, false)?;
            let mode = match p.str("mode") {
                "exact" => Mode::Exact,
                _ => Mode::Sampled {
                    trials: cfg.trials,
                    batches: p.u32("batches").max(1) as u64,
                    seed: cfg.seed,
                },
            };
            prsg::prsg_td(&params, mode, budget)?
        }
        Experiment::MultikeyTd => prsg::multikey_td(&prs_params(p, true)?, budget)?,
        Experiment::Impossibility => prsg::impossibility_attack(&prs_params(p, false)?, budget)?,
        Experiment::CommitBinding => commit_binding(cfg, p)?,
        Experiment::CommitHiding => commitments::hiding_distance(
            p.u32("lam"),
            p.u32("n"),
            p.usize("p"),
            p.usize("t"),
            budget,
        )?,
        Experiment::Pgm => {
            let params = PgmParams::new(p.u32("n"), p.usize("m"), budget)?;
            match p.str("measure") {
                "bound" => pgm::pgm_bound_check(&params, budget)?,
                "guess" => pgm::pgm_guess_prob(&params, budget)?,
                _ => {
                    let mut r = pgm::pgm_bound_check(&params, budget)?;
                    absorb(&mut r, pgm::pgm_guess_prob(&params, budget)?, "guess.");
                    r
                }
            }
        }
        Experiment::Typestats => typestats(cfg, p)?,
    };
    r.experiment = cfg.experiment.name().to_string();
    for spec in cfg.experiment.schema() {
        r.params
            .entry(spec.name.to_string())
            .or_insert_with(|| p.str(spec.name).to_string());
    }
    r.param("trials", cfg.trials);
    Ok(r)
}

/// Fold `other` into `into`, prefixing its quantities, checks and notes.
/// Bounds that already exist with the same value are shared.
fn absorb(into: &mut ExperimentReport, other: ExperimentReport, prefix: &str) {
    for (k, v) in other.params {
        into.params.entry(k).or_insert(v);
    }
    for (k, v) in other.quantities {
        into.quantities.insert(format!("{prefix}{k}"), v);
    }
    for (k, v) in other.bounds {
        match into.bounds.get(&k) {
            Some(old) if old.to_bits() == v.to_bits() => {}
            None => {
                into.bounds.insert(k, v);
            }
            Some(_) => {
                into.bounds.insert(format!("{prefix}{k}"), v);
            }
        }
    }
    for mut c in other.checks {
        c.name = format!("{prefix}{}", c.name);
        into.checks.push(c);
    }
    for n in other.notes {
        if !into.notes.contains(&n) {
            into.notes.push(n);
        }
    }
    into.estimate |= other.estimate;
}

fn hybrid_scan(cfg: &ExperimentConfig, p: &Params) -> Result<ExperimentReport> {
    let params = prs_params(p, false)?;
    let budget = &cfg.budget;
    let mut r = ExperimentReport::new("hybrid-scan");
    let exact = p.str("mode") == "exact";
    let hybrids: Vec<Option<_>> = if exact {
        prsg::exact_hybrids(&params, budget)?
    } else {
        r.estimate = true;
        (1..=8u8)
            .into_par_iter()
            .map(|i| {
                let spec = HybridSpec::new(i, params)?;
                let mut rng = substream(cfg.seed, i as u64);
                match prsg::hybrid_sampled(&spec, cfg.trials, &mut rng, budget) {
                    Ok(e) => Ok(Some(e)),
                    Err(LabError::EmptySet(_) | LabError::RejectBudget(_)) if i != 1 && i != 8 => {
                        Ok(None)
                    }
                    Err(e) => Err(e),
                }
            })
            .collect::<Result<_>>()?
    };
    for (i, h) in hybrids.iter().enumerate() {
        if h.is_none() {
            r.note(format!("hybrid {} has an empty sampling set", i + 1));
        }
    }
    let pairs: Vec<(usize, usize)> = (0..8)
        .flat_map(|i| (i + 1..8).map(move |j| (i, j)))
        .filter(|&(i, j)| hybrids[i].is_some() && hybrids[j].is_some())
        .collect();
    let tds = pairs
        .par_iter()
        .map(|&(i, j)| {
            gram_trace_distance_with_budget(
                hybrids[i].as_ref().unwrap(),
                hybrids[j].as_ref().unwrap(),
                budget,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    for (&(i, j), &td) in pairs.iter().zip(&tds) {
        r.quantity(&format!("td_h{}_h{}", i + 1, j + 1), td);
        if exact && ((i, j) == (1, 2) || (i, j) == (4, 5)) {
            r.check(Check::le(
                format!("h{}_equals_h{}", i + 1, j + 1),
                format!("TD(H{},H{}) <= 1e-10", i + 1, j + 1),
                td,
                0.0,
                tol::IDENTITY,
            ));
        }
    }
    if !exact {
        r.note("sampled hybrids carry sampling noise; equality checks run in exact mode only");
    }
    Ok(r)
}

fn commit_binding(cfg: &ExperimentConfig, p: &Params) -> Result<ExperimentReport> {
    let mut rng = substream(cfg.seed, 0);
    let params = CommitmentParams::sampled(p.u32("lam"), p.u32("n"), p.usize("p"), &mut rng)?;
    let which = p.str("adversary");
    if which != "all" {
        let i = BUILTIN_ADVERSARIES
            .iter()
            .position(|&a| a == which)
            .expect("schema choice");
        let adv =
            commitments::builtin_adversary(which, &params, &mut substream(cfg.seed, 1 + i as u64))?;
        return commitments::binding_experiment(&adv, &params);
    }
    let mut r = ExperimentReport::new("commit-binding");
    for (i, name) in BUILTIN_ADVERSARIES.iter().enumerate() {
        let adv =
            commitments::builtin_adversary(name, &params, &mut substream(cfg.seed, 1 + i as u64))?;
        let mut sub = commitments::binding_experiment(&adv, &params)?;
        sub.params.remove("adversary");
        absorb(&mut r, sub, &format!("{name}."));
    }
    Ok(r)
}

fn typestats(cfg: &ExperimentConfig, p: &Params) -> Result<ExperimentReport> {
    let (lam, m, ell, t) = (
        p.u32("lam"),
        p.u32("m_suffix"),
        p.usize("ell"),
        p.usize("t"),
    );
    let mut r = ExperimentReport::new("typestats");
    let est = typestates::estimate_cf_probability(
        lam,
        m,
        ell,
        t,
        cfg.trials,
        &mut substream(cfg.seed, 0),
    )?;
    r.estimate = true;
    r.quantity("cf_probability", est.probability)
        .quantity("cf_stderr", est.stderr)
        .bound("rate", est.rate)
        .bound("failure_union_bound", est.union_bound)
        .bound("failure_union_bound_literal", est.union_bound_literal);
    match typestates::exact_cf_probability(lam, m, ell, t, cfg.budget.max_types) {
        Ok(exact) => {
            r.quantity("cf_probability_exact", exact);
            r.check(Check::le(
                "estimate_consistent",
                "|P_est - P_exact| <= 5 stderr + 1/trials",
                (est.probability - exact).abs(),
                5.0 * est.stderr + 1.0 / cfg.trials as f64,
                0.0,
            ));
        }
        Err(LabError::BudgetExceeded { .. }) => {
            r.note("exact enumeration exceeds the type budget; only the estimate is reported");
        }
        Err(e) => return Err(e),
    }
    r.note("the union bound is printed with the denominator read as (2^lam - 2 ell); the literal reading is also reported");
    Ok(r)
}

/// Outcome of a one-parameter sweep, in input order.
#[derive(Debug)]
pub struct SweepResult {
    pub experiment: Experiment,
    pub axis: String,
    pub values: Vec<String>,
    pub runs: Vec<Result<ExperimentReport>>,
}

impl SweepResult {
    /// Every run completed and every check passed.
    pub fn all_passed(&self) -> bool {
        self.runs
            .iter()
            .all(|r| matches!(r, Ok(rep) if rep.all_passed()))
    }

    /// Wide table: one row per value, one column per quantity or bound.
    pub fn to_csv(&self) -> String {
        let mut quantities = BTreeSet::new();
        let mut bounds = BTreeSet::new();
        for rep in self.runs.iter().flatten() {
            quantities.extend(rep.quantities.keys().cloned());
            bounds.extend(rep.bounds.keys().cloned());
        }
        let mut header = vec![
            csv_field(&self.axis),
            "status".to_string(),
            "all_passed".to_string(),
        ];
        header.extend(quantities.iter().map(|q| csv_field(q)));
        header.extend(bounds.iter().map(|b| csv_field(&format!("bound_{b}"))));
        header.push("error".to_string());
        let mut out = header.join(",") + "\n";
        for (value, run) in self.values.iter().zip(&self.runs) {
            let mut row = vec![csv_field(value)];
            match run {
                Ok(rep) => {
                    row.push(if rep.all_passed() { "ok" } else { "failed" }.to_string());
                    row.push(rep.all_passed().to_string());
                    row.extend(
                        quantities
                            .iter()
                            .map(|q| rep.quantities.get(q).map_or(String::new(), |v| fmt_f64(*v))),
                    );
                    row.extend(
                        bounds
                            .iter()
                            .map(|b| rep.bounds.get(b).map_or(String::new(), |v| fmt_f64(*v))),
                    );
                    row.push(String::new());
                }
                Err(e) => {
                    row.push("error".to_string());
                    row.push("false".to_string());
                    row.extend(std::iter::repeat_n(
                        String::new(),
                        quantities.len() + bounds.len(),
                    ));
                    row.push(csv_field(&e.to_string()));
                }
            }
            out += &(row.join(",") + "\n");
        }
        out
    }

    pub fn to_json(&self) -> String {
        let runs: Vec<serde_json::Value> = self
            .values
            .iter()
            .zip(&self.runs)
            .map(|(v, run)| match run {
                Ok(rep) => serde_json::json!({ "value": v, "report": rep.to_json_value() }),
                Err(e) => serde_json::json!({ "value": v, "error": e.to_string() }),
            })
            .collect();
        let doc = serde_json::json!({
            "experiment": self.experiment.name(),
            "axis": self.axis,
            "runs": runs,
        });
        serde_json::to_string_pretty(&doc).expect("valid JSON") + "\n"
    }
}

/// Run `base` once per value of `axis`. Runs fail independently; the combined
/// table is written to `base.output_path` when set.
pub fn sweep(base: &ExperimentConfig, axis: &str, values: &[String]) -> Result<SweepResult> {
    if base.experiment.spec(axis).is_none() {
        let names: Vec<_> = base.experiment.schema().iter().map(|s| s.name).collect();
        return Err(LabError::Config(format!(
            "{} has no parameter {axis:?} to sweep; known: {names:?}",
            base.experiment
        )));
    }
    let runs = values
        .par_iter()
        .map(|v| {
            let mut cfg = base.clone();
            cfg.output_path = None;
            cfg.params.insert(axis.to_string(), v.clone());
            run(&cfg)
        })
        .collect();
    let result = SweepResult {
        experiment: base.experiment,
        axis: axis.to_string(),
        values: values.to_vec(),
        runs,
    };
    if let Some(path) = &base.output_path {
        let text = match base.format {
            Format::Csv => result.to_csv(),
            Format::Json => result.to_json(),
        };
        write_file(path, &text)?;
    }
    Ok(result)
}
