//! The six commands as pure functions from a run configuration (and the input
//! files it names) to output documents.

use crate::cli::{Command, RunConfig};
use crate::error::{Error, Result};
use crate::io::{emit_csv, emit_dated, fmt_g17, ingest_csv};
use crate::mc::run_parallel;
use crate::records::*;
use crate::returns::to_negative_weekly_log_returns;
use expectile_core::covariance::SampleFit;
use expectile_core::inference::{marginal_interval_from_fit, region_from_fit, Method, RegionKind};
use expectile_core::marginal::MarginFit;
use expectile_core::numerics::chi_square_quantile;
use expectile_core::sample::{effective_size, tau_from_k, MultivariateSample, TailLevelPair};
use expectile_core::simulation::{McConfig, McPlan, McTask, ModelKind, RngStream, SimulationModel};
use expectile_core::testing::{test_from_fit, CovarianceScaling, TestKind};
use std::fmt::Write;

/// Documents produced by a command. `files` are written under `--out`;
/// without it the ones named in `stdout_files` are printed instead.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Output {
    pub summary: String,
    pub files: Vec<(String, String)>,
    pub stdout_files: Vec<String>,
    pub partial_failures: usize,
}

impl Output {
    fn file(&mut self, name: impl Into<String>, contents: String, to_stdout: bool) {
        let name = name.into();
        if to_stdout {
            self.stdout_files.push(name.clone());
        }
        self.files.push((name, contents));
    }
}

pub fn execute(command: &Command) -> Result<Output> {
    match command {
        Command::Estimate(c) => cmd_estimate(c),
        Command::Region(c) => cmd_region(c),
        Command::Test(c) => cmd_test(c),
        Command::TraceScan(c) => cmd_trace_scan(c),
        Command::Simulate(c) => cmd_simulate(c),
        Command::Ingest(c) => cmd_ingest(c),
    }
}

fn load(c: &RunConfig) -> Result<MultivariateSample> {
    let path = c.input.as_ref().ok_or_else(|| Error::Config("--input is required".into()))?;
    Ok(ingest_csv(path, c.dates)?.sample)
}

/// `(τ, τ')` for a sample of size `n`; exactly one of `--k`, `--tau` is required.
pub fn levels(c: &RunConfig, n: usize) -> Result<TailLevelPair> {
    let tp = c.tau_prime.unwrap_or_else(|| TailLevelPair::default_tau_prime(n));
    Ok(match (c.k, c.tau) {
        (Some(k), None) => TailLevelPair::from_k(n, k, tp)?,
        (None, Some(t)) => TailLevelPair::new(n, t, tp)?,
        (Some(_), Some(_)) => return Err(Error::Config("give either --k or --tau, not both".into())),
        (None, None) => return Err(Error::Config("one of --k or --tau is required".into())),
    })
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!("--alpha must lie in (0, 1), got {alpha}")));
    }
    Ok(())
}

fn methods(c: &RunConfig) -> Result<Vec<Method>> {
    match c.method.as_str() {
        "both" => Ok(vec![Method::Laws, Method::Qb]),
        m => Ok(vec![Method::parse(m)?]),
    }
}

fn test_kinds(c: &RunConfig) -> Result<Vec<TestKind>> {
    Ok(match c.method.as_str() {
        "both" | "all" => vec![TestKind::Laws, TestKind::Qb, TestKind::Quantile],
        "laws" => vec![TestKind::Laws],
        "qb" => vec![TestKind::Qb],
        "quantile" => vec![TestKind::Quantile],
        m => return Err(Error::Config(format!("unknown test kind {m:?}"))),
    })
}

fn scaling(c: &RunConfig) -> Result<CovarianceScaling> {
    match c.scaling.as_str() {
        "unsquared" => Ok(CovarianceScaling::Unsquared),
        "squared" => Ok(CovarianceScaling::Squared),
        s => Err(Error::Config(format!("unknown scaling {s:?}"))),
    }
}

fn extreme_level(c: &RunConfig, default: bool) -> Result<bool> {
    match c.level.as_deref() {
        None => Ok(default),
        Some("extreme") => Ok(true),
        Some("intermediate") => Ok(false),
        Some(l) => Err(Error::Config(format!("unknown level {l:?}"))),
    }
}

fn margin_index(sample: &MultivariateSample, token: &str) -> Result<usize> {
    let token = token.trim();
    if let Some(j) = sample.labels().iter().position(|l| l == token) {
        return Ok(j);
    }
    match token.parse::<usize>() {
        Ok(j) if j < sample.d() => Ok(j),
        _ => Err(Error::Config(format!("unknown margin {token:?}"))),
    }
}

/// Requested margin groups, or every pair.
fn margin_groups(c: &RunConfig, sample: &MultivariateSample) -> Result<Vec<Vec<usize>>> {
    match &c.margins {
        Some(spec) => spec
            .split(';')
            .filter(|g| !g.trim().is_empty())
            .map(|g| g.split(',').map(|t| margin_index(sample, t)).collect())
            .collect(),
        None => Ok(pairs(sample.d())),
    }
}

fn pairs(d: usize) -> Vec<Vec<usize>> {
    (0..d).flat_map(|j| (j + 1..d).map(move |l| vec![j, l])).collect()
}

fn f4(x: f64) -> String {
    format!("{x:.4}")
}

// ---------------------------------------------------------------------------

pub fn cmd_estimate(c: &RunConfig) -> Result<Output> {
    check_alpha(c.alpha)?;
    let sample = load(c)?;
    let lv = levels(c, sample.n())?;
    let mut out = Output::default();
    let mut margins = Vec::with_capacity(sample.d());
    for (j, label) in sample.labels().iter().enumerate() {
        let fit = MarginFit::new(sample.column(j), lv.tau).map_err(|source| Error::Margin { label: label.clone(), source })?;
        let mut errors = Vec::new();
        let mut keep = |r: expectile_core::Result<f64>| r.map_err(|e| errors.push(e.to_string())).ok();
        let xi_star_qb = keep(fit.extrapolated_qb(lv.tau_prime));
        let one = sample.select(&[j])?;
        let single = SampleFit::new(&one, lv.tau)?;
        let mut interval = |m: Method| match marginal_interval_from_fit(&single, m, lv.tau_prime, 0, c.alpha, c.naive) {
            Ok(i) => Some(IntervalRecord::from(&i)),
            Err(e) => {
                errors.push(format!("{} interval: {e}", m.name()));
                None
            }
        };
        let interval_laws = interval(Method::Laws);
        let interval_qb = interval(Method::Qb);
        out.partial_failures += !errors.is_empty() as usize;
        margins.push(MarginRecord {
            label: label.clone(),
            gamma_hat: fit.gamma(),
            q_hat: fit.estimates.q_hat,
            xi_laws: fit.estimates.xi_laws,
            xi_qb: fit.estimates.xi_qb,
            xi_star_laws: Some(fit.extrapolated_laws(lv.tau_prime)).filter(|x| x.is_finite()),
            xi_star_qb,
            q_star: Some(fit.weissman(lv.tau_prime)).filter(|x| x.is_finite()),
            interval_laws,
            interval_qb,
            errors,
        });
    }
    let record = EstimateRecord {
        schema: SCHEMA_VERSION,
        n: sample.n(),
        k: lv.k,
        tau: lv.tau,
        tau_prime: lv.tau_prime,
        alpha: c.alpha,
        naive: c.naive,
        margins,
    };
    out.summary = estimate_table(&record);
    out.file("estimate.json", to_json(&record), true);
    Ok(out)
}

fn estimate_table(r: &EstimateRecord) -> String {
    let opt = |x: Option<f64>| x.map(f4).unwrap_or_else(|| "-".into());
    let ci = |i: &Option<IntervalRecord>| i.as_ref().map(|i| format!("[{}, {}]", f4(i.lower), f4(i.upper))).unwrap_or_else(|| "-".into());
    let mut s = format!(
        "Tail index and extreme expectile estimates (n = {}, k = {}, tau' = {})\n{:<12} {:>8} {:>10} {:>10} {:>10} {:>24} {:>10} {:>24}\n",
        r.n, r.k, r.tau_prime, "margin", "gamma", "xi_laws", "xi_qb", "xi*_laws", "LAWS interval", "xi*_qb", "QB interval"
    );
    for m in &r.margins {
        let _ = writeln!(
            s,
            "{:<12} {:>8} {:>10} {:>10} {:>10} {:>24} {:>10} {:>24}",
            m.label,
            f4(m.gamma_hat),
            f4(m.xi_laws),
            opt(m.xi_qb),
            opt(m.xi_star_laws),
            ci(&m.interval_laws),
            opt(m.xi_star_qb),
            ci(&m.interval_qb)
        );
        for e in &m.errors {
            let _ = writeln!(s, "  {}: {e}", m.label);
        }
    }
    s
}

// ---------------------------------------------------------------------------

pub fn cmd_region(c: &RunConfig) -> Result<Output> {
    check_alpha(c.alpha)?;
    let sample = load(c)?;
    if sample.d() < 2 {
        return Err(Error::Config("joint regions need at least two margins".into()));
    }
    let lv = levels(c, sample.n())?;
    let extreme = extreme_level(c, true)?;
    let mut out = Output::default();
    let mut all = Vec::new();
    for group in margin_groups(c, &sample)? {
        if group.len() < 2 {
            return Err(Error::Config(format!("margin group {group:?} needs at least two margins")));
        }
        let sub = sample.select(&group)?;
        let labels = sub.labels().to_vec();
        let tag = labels.join("-");
        let fit = SampleFit::new(&sub, lv.tau)?;
        for method in methods(c)? {
            let kind = RegionKind::new(method, extreme);
            let region = region_from_fit(&fit, kind, extreme.then_some(lv.tau_prime), c.alpha, c.naive).map(|r| (r.boundary().ok(), r));
            match region {
                Ok((points, region)) => {
                    let record = RegionRecord::new(&region, labels.clone());
                    let stem = format!("region_{}{}_{tag}", kind.name(), if c.naive { "_naive" } else { "" });
                    let _ = writeln!(out.summary, "{stem}: center {:?}, radius {}", region.center, fmt_g17(region.radius));
                    out.file(format!("{stem}.json"), to_json(&record), false);
                    if let Some(points) = points {
                        out.file(format!("{stem}.csv"), boundary_csv(&points, &labels), false);
                    }
                    all.push(record);
                }
                Err(e) => {
                    out.partial_failures += 1;
                    let _ = writeln!(out.summary, "{} {tag}: failed: {e}", kind.name());
                }
            }
        }
    }
    out.file("regions.json", to_json(&all), true);
    Ok(out)
}

// ---------------------------------------------------------------------------

pub fn cmd_test(c: &RunConfig) -> Result<Output> {
    check_alpha(c.alpha)?;
    let sample = load(c)?;
    if sample.d() < 2 {
        return Err(Error::Config("equality tests need at least two margins".into()));
    }
    let lv = levels(c, sample.n())?;
    let scaling = scaling(c)?;
    let kinds = test_kinds(c)?;
    let mut groups = vec![(0..sample.d()).collect::<Vec<_>>()];
    if sample.d() > 2 {
        groups.extend(pairs(sample.d()));
    }
    let mut out = Output::default();
    let mut records = Vec::new();
    for group in &groups {
        let sub = sample.select(group)?;
        let fit = SampleFit::new(&sub, lv.tau);
        for &kind in &kinds {
            let result = fit.clone().map_err(Error::from).and_then(|f| Ok(test_from_fit(&f, kind, lv.tau_prime, c.alpha, scaling)?));
            records.push(match result {
                Ok(mut t) => {
                    t.margins = group.clone();
                    TestRecord::new(&t, sample.labels())
                }
                Err(e) => {
                    out.partial_failures += 1;
                    let labels = group.iter().map(|&j| sample.labels()[j].clone()).collect();
                    TestRecord::failed(kind.name(), labels, c.alpha, lv.tau, lv.tau_prime, lv.k, scaling.name(), e.to_string())
                }
            });
        }
    }
    out.summary = test_table(&records, &kinds);
    let mut csv = format!("{TEST_CSV_HEADER}\n");
    for r in &records {
        csv.push_str(&test_csv_row(r));
        csv.push('\n');
    }
    out.file("tests.json", to_json(&records), true);
    out.file("tests.csv", csv, false);
    Ok(out)
}

fn test_table(records: &[TestRecord], kinds: &[TestKind]) -> String {
    let mut s = format!("{:<28} {:>6}", "Hypothesis testing outcome", "chi2");
    for k in kinds {
        let _ = write!(s, " {:>16}", format!("Lambda_{}", k.name()));
    }
    s.push('\n');
    for row in records.chunks(kinds.len()) {
        let df = row.iter().find_map(|r| r.df).unwrap_or(row[0].margins.len() as u32 - 1);
        let crit = chi_square_quantile(1.0 - row[0].alpha, df).map(f4).unwrap_or_default();
        let _ = write!(s, "{:<28} {:>6}", row[0].margins.join(" = "), crit);
        for r in row {
            let cell = match (r.statistic, r.reject) {
                (Some(x), Some(rej)) => format!("{}{}", f4(x), if rej { "*" } else { "" }),
                _ => "failed".into(),
            };
            let _ = write!(s, " {cell:>16}");
        }
        s.push('\n');
    }
    s.push_str("* rejected at level alpha\n");
    s
}

// ---------------------------------------------------------------------------

pub fn cmd_trace_scan(c: &RunConfig) -> Result<Output> {
    let sample = load(c)?;
    let n = sample.n();
    let spec = c.k_range.as_deref().map(str::to_string).or_else(|| c.k.map(|k| k.to_string()));
    let spec = spec.ok_or_else(|| Error::Config("--k-range first:last[:step] is required".into()))?;
    let ks = parse_k_range(&spec)?;
    if ks.iter().any(|&k| k < 2 || k + 1 > n) {
        return Err(Error::Config(format!("k-range must lie within [2, {}]", n - 1)));
    }
    let tp = c.tau_prime.unwrap_or_else(|| TailLevelPair::default_tau_prime(n));
    let mut out = Output::default();
    let mut csv = String::from("k,tau,trace,status\n");
    for k in ks {
        let tau = tau_from_k(n, k)?;
        let trace = SampleFit::new(&sample, tau).and_then(|f| f.v_star_laws(tp)).map(|v| v.matrix.trace());
        match trace {
            Ok(t) => {
                let _ = writeln!(csv, "{k},{},{},ok", fmt_g17(tau), fmt_g17(t));
            }
            Err(e) => {
                out.partial_failures += 1;
                let _ = writeln!(csv, "{k},{},,\"failed: {}\"", fmt_g17(tau), e.to_string().replace('"', "'"));
            }
        }
    }
    out.summary = format!("trace of the extreme LAWS covariance at tau' = {tp}\n");
    out.file("trace.csv", csv, true);
    Ok(out)
}

pub fn parse_k_range(spec: &str) -> Result<Vec<usize>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let num = |s: &str| s.trim().parse::<usize>().map_err(|_| Error::Config(format!("bad k-range {spec:?}")));
    let (first, last, step) = match parts.as_slice() {
        [k] => (num(k)?, num(k)?, 1),
        [a, b] => (num(a)?, num(b)?, 1),
        [a, b, s] => (num(a)?, num(b)?, num(s)?),
        _ => return Err(Error::Config(format!("bad k-range {spec:?}"))),
    };
    if first > last || step == 0 {
        return Err(Error::Config(format!("bad k-range {spec:?}")));
    }
    Ok((first..=last).step_by(step).collect())
}

// ---------------------------------------------------------------------------

/// The simulation model named by `--model`, `--d` and `--gammas`.
pub fn build_model(c: &RunConfig) -> Result<SimulationModel> {
    let name = c.model.as_deref().ok_or_else(|| Error::Config("--model is required".into()))?;
    let kind = ModelKind::parse(name)?;
    let gammas: Option<Vec<f64>> = c
        .gammas
        .as_deref()
        .map(|g| g.split(',').map(|x| x.trim().parse().map_err(|_| Error::Config(format!("bad gamma {x:?}")))).collect())
        .transpose()?;
    if kind.is_univariate() {
        let g = match gammas.as_deref() {
            None => 1.0 / 3.0,
            Some([g]) => *g,
            Some(_) => return Err(Error::Config("univariate models take one gamma".into())),
        };
        return Ok(SimulationModel::univariate(kind, g)?);
    }
    let model = SimulationModel::new(kind, c.d)?;
    Ok(match gammas {
        None => model,
        Some(g) if g.len() == 1 => model.with_gammas(vec![g[0]; c.d])?,
        Some(g) => model.with_gammas(g)?,
    })
}

fn tasks(c: &RunConfig, d: usize) -> Result<Vec<McTask>> {
    let extreme = extreme_level(c, false)?;
    Ok(match c.task.as_str() {
        "mse" => vec![McTask::Mse { extreme }],
        "coverage" => methods(c)?.into_iter().map(|method| McTask::Coverage { extreme, method, naive: c.naive }).collect(),
        "interval" => methods(c)?.into_iter().map(|method| McTask::IntervalCoverage { method, margin: c.margin, naive: c.naive }).collect(),
        "power" => {
            let scaling = scaling(c)?;
            let kinds = if c.method == "both" { vec![TestKind::Laws, TestKind::Qb] } else { test_kinds(c)? };
            kinds.into_iter().map(|kind| McTask::Power { kind, scaling }).collect()
        }
        "tail-copula" | "tail_copula" => {
            let (j, l) = match c.margins.as_deref() {
                None => (0, 1),
                Some(m) => {
                    let idx: Vec<usize> = m.split(',').map(|t| t.trim().parse().map_err(|_| Error::Config(format!("bad margin {t:?}")))).collect::<Result<_>>()?;
                    match idx.as_slice() {
                        [j, l] if *j < d && *l < d => (*j, *l),
                        _ => return Err(Error::Config("tail-copula needs --margins j,l".into())),
                    }
                }
            };
            vec![McTask::TailCopula { j, l }]
        }
        t => return Err(Error::Config(format!("unknown task {t:?}"))),
    })
}

/// Plans for every task in the configuration; `τ` defaults to `1 - 1/√n`.
pub fn simulation_plans(c: &RunConfig) -> Result<Vec<McPlan>> {
    check_alpha(c.alpha)?;
    let model = build_model(c)?;
    let n = c.n;
    let tau = match (c.k, c.tau) {
        (Some(k), None) => tau_from_k(n, k)?,
        (None, Some(t)) => t,
        (None, None) => 1.0 - 1.0 / (n as f64).sqrt(),
        (Some(_), Some(_)) => return Err(Error::Config("give either --k or --tau, not both".into())),
    };
    tasks(c, model.d)?
        .into_iter()
        .map(|task| {
            let tau_prime = c.tau_prime.or_else(|| task.needs_extreme_level().then(|| TailLevelPair::default_tau_prime(n)));
            let config = McConfig { model: model.clone(), n, tau, tau_prime, alpha: c.alpha, task, replications: c.reps, master_seed: c.seed };
            Ok(McPlan::new(config)?)
        })
        .collect()
}

pub fn cmd_simulate(c: &RunConfig) -> Result<Output> {
    if c.task == "sample" {
        return simulate_sample(c);
    }
    let plans = simulation_plans(c)?;
    let mut out = Output::default();
    let mut records = Vec::new();
    let mut csv = format!("{MC_CSV_HEADER}\n");
    for plan in &plans {
        let mut report = run_parallel(plan, c.threads)?;
        if !c.timing {
            report.wall_clock_seconds = None;
        }
        let record = McRecord::from(&report);
        csv.push_str(&mc_csv_row(&record));
        csv.push('\n');
        let _ = writeln!(out.summary, "{}", mc_line(&record));
        if report.failures > 0 {
            out.partial_failures += 1;
            let _ = writeln!(out.summary, "  {} of {} replications failed, e.g. {:?}", report.failures, report.replications, report.failure_samples.first());
        }
        records.push(record);
    }
    out.file("simulate.json", to_json(&records), true);
    out.file("simulate.csv", csv, false);
    Ok(out)
}

/// One draw of `--n` observations on stream 0 of `--seed`.
fn simulate_sample(c: &RunConfig) -> Result<Output> {
    let model = build_model(c)?;
    let sample = model.sample(c.n, &mut RngStream::new(c.seed, 0))?;
    let mut out = Output { summary: format!("{} n={} seed={}\n", model.description(), c.n, c.seed), ..Output::default() };
    out.file("sample.csv", emit_csv(&sample), true);
    Ok(out)
}

fn mc_line(r: &McRecord) -> String {
    let mut s = format!("{} d={} n={} k={} {} {}{} M={}:", r.model, r.d, r.n, r.k, r.task, r.method, if r.naive { " naive" } else { "" }, r.replications);
    if let (Some(a), Some(b)) = (r.root_rel_mse_laws, r.root_rel_mse_qb) {
        let _ = write!(s, " sqrt relMSE x100 laws {} qb {}", f4(a), f4(b));
    }
    if let Some(rate) = r.rate {
        let _ = write!(s, " rate {}%", f4(100.0 * rate));
    }
    if let Some(v) = r.mean_value {
        let _ = write!(s, " mean {}", f4(v));
    }
    s
}

// ---------------------------------------------------------------------------

pub fn cmd_ingest(c: &RunConfig) -> Result<Output> {
    let path = c.input.as_ref().ok_or_else(|| Error::Config("--input is required".into()))?;
    let ingested = ingest_csv(path, c.dates)?;
    let mut out = Output::default();
    let (name, csv, rows) = match ingested.dated() {
        Some(panel) if !c.raw => {
            let returns = to_negative_weekly_log_returns(&panel)?;
            let rows = returns.len();
            ("returns.csv", emit_dated(&returns), rows)
        }
        Some(panel) => ("ingest.csv", emit_dated(&panel), panel.len()),
        None => ("ingest.csv", emit_csv(&ingested.sample), ingested.sample.n()),
    };
    out.summary = format!("{}: {} rows, {} columns [{}]\n", name, rows, ingested.sample.d(), ingested.sample.labels().join(", "));
    if name == "returns.csv" {
        let k = effective_size(rows, 1.0 - 1.0 / (rows as f64).sqrt());
        let _ = writeln!(out.summary, "  weekly negative log-returns; k = {k} at the default tau = 1 - 1/sqrt(n)");
    }
    out.file(name, csv, true);
    Ok(out)
}
