//! One runner per subcommand. Runners compute everything in memory; the
//! caller writes files only once a run has finished.

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use starkprobe::basis::binomial;
use starkprobe::estimation::{estimator_statistics, probe_truth, write_estimation_csv, ModelCache, RNG_ALGORITHM};
use starkprobe::fisher::{write_fisher_csv, BoundTally, FisherPoint, BOUND_TOL};
use starkprobe::open_dynamics::{dephasing_qfi_trajectory, write_trajectory_csv, DephasingSpec, IntegratorConfig};
use starkprobe::scaling::{alpha_fit, beta_scan, fixed_n_beta, long_time_sweep, size_scaling, size_sweep, FitReport};
use starkprobe::{MemoryBudget, StarkProbe};

use crate::config::{
    AlphaParams, BetaScanParams, BoundCheckParams, ChainParams, DephaseParams, EstimateParams, EvolveParams,
    FixedNParams, Params, QfiSweepParams, RunConfig, ScalingRecipe, SizeScalingParams,
};
use crate::error::CliError;

const UNITS: &str = "units: energies and fields in J, times in 1/J";

pub struct OutputFile {
    pub name: String,
    pub bytes: Vec<u8>,
}

#[derive(Default)]
pub struct RunOutput {
    pub files: Vec<OutputFile>,
    pub warnings: Vec<String>,
    pub rng: Option<&'static str>,
    /// Set when the run completed but its check failed.
    pub failure: Option<CliError>,
}

impl RunOutput {
    fn file(&mut self, name: String, bytes: Vec<u8>) {
        self.files.push(OutputFile { name, bytes });
    }
}

pub fn run(config: &RunConfig) -> Result<RunOutput, CliError> {
    let budget = config.budget();
    match &config.params {
        Params::Evolve(p) => evolve(config, p, budget),
        Params::QfiSweep(p) => qfi_sweep(config, p, budget),
        Params::Scaling(r) => scaling(config, r, budget),
        Params::Dephase(p) => dephase(config, p, budget),
        Params::Estimate(p) => estimate(config, p, budget),
        Params::BoundCheck(p) => bound_check(config, p, budget),
    }
}

fn describe(sites: usize, chain: &ChainParams) -> String {
    format!(
        "L={sites} N={} Delta={} J={} initial={}",
        chain.excitations,
        chain.anisotropy,
        chain.hopping,
        serde_json::to_string(&chain.initial).unwrap_or_default()
    )
}

fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>, CliError> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| CliError::Resource(e.to_string()))?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Checks the dense memory of an `N`-excitation sector before any work is
/// scheduled.
fn preflight(budget: MemoryBudget, sites: usize, excitations: usize) -> Result<(), CliError> {
    let dim = if excitations == 1 {
        sites as u128
    } else {
        binomial(sites, excitations)
    };
    let dim = usize::try_from(dim).unwrap_or(usize::MAX);
    budget.check(dim, &format!("L={sites} N={excitations} sector"))?;
    Ok(())
}

fn probes(sizes: &[usize], chain: &ChainParams, budget: MemoryBudget) -> Result<Vec<StarkProbe>, CliError> {
    Ok(sizes
        .iter()
        .map(|&l| chain.probe(l, budget))
        .collect::<starkprobe::Result<Vec<_>>>()?)
}

fn evolve(config: &RunConfig, p: &EvolveParams, budget: MemoryBudget) -> Result<RunOutput, CliError> {
    let probe = p.chain.probe(p.sites, budget)?;
    let times = p.times.values().map_err(CliError::Config)?;
    let profile = probe.occupation_profile(p.field, &times)?;
    let comments = [
        UNITS.to_string(),
        format!("{} h={}", describe(p.sites, &p.chain), p.field),
        "P_l: occupation of site l".to_string(),
    ];
    let mut bytes = Vec::new();
    profile.write_csv(&mut bytes, &comments)?;
    let mut out = RunOutput::default();
    out.file(format!("{}.csv", config.name), bytes);
    Ok(out)
}

fn qfi_sweep(config: &RunConfig, p: &QfiSweepParams, budget: MemoryBudget) -> Result<RunOutput, CliError> {
    let fields = p.fields.values().map_err(CliError::Config)?;
    let probes = probes(&p.sites, &p.chain, budget)?;
    let mut out = RunOutput::default();
    let mut points = Vec::new();
    let mut tally = BoundTally::default();
    for probe in &probes {
        let curve = long_time_sweep(probe, &fields, &p.window, p.with_cfi)?;
        let unsaturated = curve.iter().filter(|c| !c.saturated).count();
        if unsaturated > 0 {
            out.warnings.push(format!(
                "L={}: {unsaturated} of {} fields not saturated over the window",
                probe.sites(),
                curve.len()
            ));
        }
        for c in &curve {
            tally.record_ratio(c.bound_ratio);
            points.push(FisherPoint::from_long_time(
                probe.sites(),
                probe.excitations(),
                p.chain.anisotropy,
                c,
            ));
        }
    }
    if !tally.passed() {
        out.warnings.push(format!(
            "{} points exceed F_Q <= t^2 ||H2||^2 (max ratio {})",
            tally.violations, tally.max_ratio
        ));
    }
    let comments = [
        UNITS.to_string(),
        format!(
            "{}; window {}..{} Bloch periods, {} samples",
            describe(p.sites[0], &p.chain),
            p.window.first,
            p.window.last,
            p.window.samples
        ),
        "qfi_over_t2, cfi_over_t2: window averages of F/t^2; t: last window time; qfi, cfi: the averages times t^2"
            .to_string(),
    ];
    let mut bytes = Vec::new();
    write_fisher_csv(&mut bytes, &points, &comments)?;
    out.file(format!("{}.csv", config.name), bytes);
    Ok(out)
}

fn scaling(config: &RunConfig, recipe: &ScalingRecipe, budget: MemoryBudget) -> Result<RunOutput, CliError> {
    let mut out = RunOutput::default();
    let reports = match recipe {
        ScalingRecipe::SizeScaling(p) => size_scaling_report(p, budget)?,
        ScalingRecipe::BetaScan(p) => beta_scan_report(p, budget)?,
        ScalingRecipe::AlphaVsDelta(p) => alpha_report(p, budget, &mut out.warnings)?,
        ScalingRecipe::FixedN(p) => fixed_n_report(p, budget)?,
    };
    for r in &reports {
        for f in &r.flags {
            out.warnings.push(format!("{} {}: {f}", r.name, r.inputs));
        }
    }
    out.file(format!("{}.json", config.name), json_bytes(&reports)?);
    Ok(out)
}

fn size_scaling_report(p: &SizeScalingParams, budget: MemoryBudget) -> Result<Vec<FitReport>, CliError> {
    for &l in &p.sizes {
        preflight(budget, l, p.chain.excitations)?;
    }
    let s = size_scaling(&p.sizes, |l| p.chain.probe(l, budget), &p.choice, &p.window)?;
    let fields: Vec<f64> = s.points.iter().map(|q| q.value.field).collect();
    let flags = s
        .points
        .iter()
        .filter_map(|q| q.transition.as_ref())
        .filter(|t| t.at_boundary)
        .map(|t| format!("L={}: transition on the grid boundary", t.sites))
        .collect();
    let inputs = json!({ "sizes": p.sizes, "fields": fields, "excitations": p.chain.excitations, "anisotropy": p.chain.anisotropy });
    Ok(vec![FitReport::new("size_scaling", inputs, &s.fit, flags)])
}

fn beta_scan_report(p: &BetaScanParams, budget: MemoryBudget) -> Result<Vec<FitReport>, CliError> {
    for &l in &p.sizes {
        preflight(budget, l, p.chain.excitations)?;
    }
    let fields = p.fields.values().map_err(CliError::Config)?;
    let sweep = size_sweep(&p.sizes, &fields, |l| p.chain.probe(l, budget), &p.window)?;
    Ok(beta_scan(&sweep, p.span, p.chain.hopping)?
        .iter()
        .map(|b| {
            let inputs = json!({ "field": b.field, "scaled_field": b.scaled_field, "sizes": b.fit.x });
            FitReport::new("beta_scan", inputs, &b.fit, Vec::new())
        })
        .collect())
}

fn alpha_report(p: &AlphaParams, budget: MemoryBudget, warnings: &mut Vec<String>) -> Result<Vec<FitReport>, CliError> {
    for &n in &p.excitations {
        preflight(budget, p.sites, n)?;
    }
    let mut reports = Vec::new();
    let mut previous: Option<(f64, f64)> = None;
    for &delta in &p.anisotropies {
        let a = alpha_fit(p.sites, &p.excitations, delta, &p.choice, &p.window)?;
        if let Some((d0, a0)) = previous {
            if a.fit.exponent > a0 {
                warnings.push(format!(
                    "alpha rises from {a0} at Delta={d0} to {} at Delta={delta}",
                    a.fit.exponent
                ));
            }
        }
        previous = Some((delta, a.fit.exponent));
        let fields: Vec<f64> = a.points.iter().map(|q| q.value.field).collect();
        let inputs = json!({ "sites": p.sites, "anisotropy": delta, "excitations": p.excitations, "fields": fields });
        reports.push(FitReport::new("alpha", inputs, &a.fit, Vec::new()));
    }
    Ok(reports)
}

fn fixed_n_report(p: &FixedNParams, budget: MemoryBudget) -> Result<Vec<FitReport>, CliError> {
    for &l in &p.sizes {
        preflight(budget, l, p.excitations)?;
    }
    p.anisotropies
        .iter()
        .map(|&delta| {
            let s = fixed_n_beta(p.excitations, &p.sizes, delta, &p.grid, &p.window)?;
            let fields: Vec<f64> = s.points.iter().map(|q| q.value.field).collect();
            let inputs =
                json!({ "excitations": p.excitations, "anisotropy": delta, "sizes": p.sizes, "fields": fields });
            Ok(FitReport::new("fixed_n", inputs, &s.fit, Vec::new()))
        })
        .collect()
}

fn dephase(config: &RunConfig, p: &DephaseParams, budget: MemoryBudget) -> Result<RunOutput, CliError> {
    let probe = p.chain.probe(p.sites, budget)?;
    let times = p.times.values().map_err(CliError::Config)?;
    let integrator = IntegratorConfig {
        max_step: p.max_step,
        hopping: p.chain.hopping,
    };
    let jobs: Vec<(f64, f64)> = p
        .fields
        .iter()
        .flat_map(|&h| p.gammas.iter().map(move |&g| (h, g)))
        .collect();
    let runs = jobs
        .par_iter()
        .map(|&(h, g)| {
            let spec = DephasingSpec::new(g, p.form)?;
            dephasing_qfi_trajectory(&probe, h, &spec, &times, p.dh, &integrator)
        })
        .collect::<starkprobe::Result<Vec<_>>>()?;
    let mut out = RunOutput::default();
    for (&(h, g), run) in jobs.iter().zip(&runs) {
        if g != 0.0 {
            continue;
        }
        let evo = probe.evolution(h)?;
        for point in run {
            let closed = evo.qfi(point.time)?;
            let dev = (point.qfi - closed).abs() / closed.max(f64::MIN_POSITIVE);
            if point.time > 0.0 && dev > 1e-4 {
                out.warnings.push(format!(
                    "gamma=0 h={h} t={}: integrated QFI {} departs from the closed-system {closed} by {dev:e}",
                    point.time, point.qfi
                ));
            }
        }
    }
    let points: Vec<_> = runs.into_iter().flatten().collect();
    let comments = [
        UNITS.to_string(),
        format!(
            "{}; jump operators {:?}; d rho/dh by central differences, dh={}",
            describe(p.sites, &p.chain),
            p.form,
            p.dh
        ),
        "trace_err: |tr rho - 1| before renormalisation; min_eig: smallest eigenvalue of rho".to_string(),
    ];
    let mut bytes = Vec::new();
    write_trajectory_csv(&mut bytes, &points, &comments)?;
    out.file(format!("{}.csv", config.name), bytes);
    Ok(out)
}

fn estimate(config: &RunConfig, p: &EstimateParams, budget: MemoryBudget) -> Result<RunOutput, CliError> {
    let probe = p.chain.probe(p.sites, budget)?;
    let mut out = RunOutput {
        rng: Some(RNG_ALGORITHM),
        ..RunOutput::default()
    };
    let mut rows = Vec::new();
    for (k, &h) in p.h_true.iter().enumerate() {
        let truth = probe_truth(&probe, h, p.time)?;
        let model = ModelCache::from_probe(&probe, p.grid(h)?, p.time)?;
        let seed = config.seed.wrapping_add(k as u64);
        let r = estimator_statistics(h, &truth, &model, p.samples, p.repetitions, seed, p.refine)?;
        if r.degenerate {
            out.warnings.push(format!("h_true={h}: the measurement carries no information on the grid"));
        }
        if (r.h_es_mean - h).abs() > p.step {
            out.warnings.push(format!(
                "h_true={h}: mean estimate {} is more than one grid step away",
                r.h_es_mean
            ));
        }
        rows.push(r);
    }
    let comments = [
        UNITS.to_string(),
        format!(
            "{} t={}; likelihood grid h_true +- {} step {}; refine={}",
            describe(p.sites, &p.chain),
            p.time,
            p.half_width,
            p.step,
            p.refine
        ),
        format!("delta_h: population std of the estimates; crb: 1/sqrt(M F_C); seed of row k: {} + k", config.seed),
    ];
    let mut bytes = Vec::new();
    write_estimation_csv(&mut bytes, &rows, &comments)?;
    out.file(format!("{}.csv", config.name), bytes);
    Ok(out)
}

#[derive(Serialize)]
struct BoundPoint {
    sites: usize,
    field: f64,
    time: f64,
    qfi: f64,
    ratio: f64,
}

#[derive(Serialize)]
struct BoundReport {
    passed: bool,
    tolerance: f64,
    points: usize,
    violations: usize,
    max_ratio: f64,
    worst: Option<BoundPoint>,
    corrupt_qfi: Option<f64>,
}

fn bound_check(config: &RunConfig, p: &BoundCheckParams, budget: MemoryBudget) -> Result<RunOutput, CliError> {
    let fields = p.fields.values().map_err(CliError::Config)?;
    let times = p.times.values().map_err(CliError::Config)?;
    let probes = probes(&p.sites, &p.chain, budget)?;
    let factor = p.corrupt_qfi.unwrap_or(1.0);
    let mut tally = BoundTally::default();
    let mut worst: Option<BoundPoint> = None;
    for probe in &probes {
        let norm = probe.seminorm();
        let rows = fields
            .par_iter()
            .map(|&h| {
                let evo = probe.evolution(h)?;
                times
                    .iter()
                    .map(|&t| Ok((h, t, factor * evo.qfi(t)?)))
                    .collect::<starkprobe::Result<Vec<_>>>()
            })
            .collect::<starkprobe::Result<Vec<_>>>()?;
        for (h, t, qfi) in rows.into_iter().flatten() {
            let ratio = qfi / (t * t * norm * norm);
            tally.record_ratio(ratio);
            if worst.as_ref().map_or(true, |w| ratio > w.ratio) {
                worst = Some(BoundPoint {
                    sites: probe.sites(),
                    field: h,
                    time: t,
                    qfi,
                    ratio,
                });
            }
        }
    }
    let report = BoundReport {
        passed: tally.passed(),
        tolerance: BOUND_TOL,
        points: tally.points,
        violations: tally.violations,
        max_ratio: tally.max_ratio,
        worst,
        corrupt_qfi: p.corrupt_qfi,
    };
    let mut out = RunOutput::default();
    if !report.passed {
        out.failure = Some(CliError::Numeric(format!(
            "{} of {} points violate F_Q <= t^2 ||H2||^2 (max ratio {})",
            report.violations, report.points, report.max_ratio
        )));
    }
    out.file(format!("{}.json", config.name), json_bytes(&report)?);
    Ok(out)
}
