use std::path::{Path, PathBuf};
use std::time::Instant;

use klemu::design::{lhs_sample, validate_design, DesignOfExperiments, SeedRegistry};
use klemu::emulator::KlEmulator;
use klemu::empirical::TrajectoryMatrix;
use klemu::metrics::{cdf_pairs, compare, shared_histogram, MetricReport};
use klemu::simulators::sample_trajectories;
use klemu::storage::{self, Artifact, Provenance};
use klemu::validation::{k_fold_validate, summarize, MetricSummary, ValidationSummary};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Reference, RunConfig};
use crate::CliError;

pub const DOE: &str = "doe.json";
pub const TRAJECTORIES: &str = "trajectories.json";
pub const EMULATOR: &str = "emulator.json";
pub const PREDICTIONS: &str = "predictions.json";
pub const VALIDATION: &str = "validation.json";
pub const REPORT: &str = "report.json";

/// Ensembles predicted at a list of points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Predictions {
    pub points: Vec<Vec<f64>>,
    pub seeds: SeedRegistry,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub samples: Vec<Vec<f64>>,
}

impl Artifact for Predictions {
    const KIND: &'static str = "predictions";
}

/// One row of the summary table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub emulator: String,
    pub pathway: String,
    pub surrogate: String,
    pub m: usize,
    pub n: usize,
    pub modes: usize,
    pub metrics: MetricSummary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub simulator: String,
    pub test_points: usize,
    pub test_seed: u64,
    pub bins: usize,
    pub alpha: f64,
    pub reference: Reference,
    pub rows: Vec<SummaryRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub validation: Option<ValidationSummary>,
}

impl Artifact for ReportSummary {
    const KIND: &'static str = "report";
}

pub struct Ctx {
    pub cfg: RunConfig,
    pub out: PathBuf,
}

impl Ctx {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn provenance(&self, inputs: &[&Path]) -> Result<Provenance, CliError> {
        let mut p = Provenance::now().with_config(self.cfg.to_json());
        for path in inputs {
            let name = path.file_name().map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned());
            p = p.with_input(&name, storage::file_sha256(path)?);
        }
        Ok(p)
    }

    fn load<A: Artifact>(&self, path: &Path, producer: &str) -> Result<A, CliError> {
        if !path.exists() {
            return Err(CliError::data(format!("missing {}; run `klemu {producer}` first", path.display())));
        }
        Ok(storage::load::<A>(path)?.0)
    }

    fn save<A: Artifact>(&self, value: &A, name: &str, inputs: &[&Path]) -> Result<PathBuf, CliError> {
        let path = self.path(name);
        storage::save(value, &path, self.provenance(inputs)?)?;
        Ok(path)
    }

    fn check_simulator(&self, recorded: Option<&str>) -> Result<(), CliError> {
        match recorded {
            Some(id) if id != self.cfg.simulator => Err(CliError::data(format!(
                "artifact was produced by simulator `{id}`, configuration names `{}`",
                self.cfg.simulator
            ))),
            _ => Ok(()),
        }
    }

    fn test_points(&self) -> Vec<Vec<f64>> {
        self.cfg.space().sample_uniform(self.cfg.test_points, self.cfg.test_seed)
    }
}

fn done(cmd: &str, path: &Path, detail: String, start: Instant) {
    log::info!("{cmd}: wrote {} ({detail}) in {:.3}s", path.display(), start.elapsed().as_secs_f64());
}

pub fn doe(ctx: &Ctx) -> Result<(), CliError> {
    let start = Instant::now();
    let doe = lhs_sample(&ctx.cfg.space(), ctx.cfg.m, ctx.cfg.seed)?;
    let problems = validate_design(&doe);
    if !problems.is_empty() {
        return Err(CliError::data(problems.join("; ")));
    }
    let path = ctx.save(&doe, DOE, &[])?;
    storage::write_doe_csv(&doe, &ctx.path("doe.csv"))?;
    done("doe", &path, format!("{} points in {} dims", doe.len(), doe.space.dims()), start);
    Ok(())
}

pub fn simulate(ctx: &Ctx) -> Result<(), CliError> {
    let start = Instant::now();
    let doe_path = ctx.path(DOE);
    let doe: DesignOfExperiments<f64> = ctx.load(&doe_path, "doe")?;
    let sim = ctx.cfg.simulator();
    if doe.space.dims() != sim.input_space().dims() {
        return Err(CliError::data(format!(
            "design has {} dims, simulator `{}` takes {}",
            doe.space.dims(),
            sim.id(),
            sim.input_space().dims()
        )));
    }
    let seeds = SeedRegistry::range(ctx.cfg.seed_start, ctx.cfg.n);
    let data = sample_trajectories(sim.as_ref(), &doe, &seeds)?;
    let path = ctx.save(&data, TRAJECTORIES, &[&doe_path])?;
    storage::write_trajectories_csv(&data, &ctx.path("trajectories.csv"))?;
    done("simulate", &path, format!("{} points x {} seeds", data.n_points(), data.n_seeds()), start);
    Ok(())
}

pub fn fit(ctx: &Ctx) -> Result<(), CliError> {
    let start = Instant::now();
    let data_path = ctx.path(TRAJECTORIES);
    let data: TrajectoryMatrix<f64> = ctx.load(&data_path, "simulate")?;
    ctx.check_simulator(data.simulator())?;
    let emu = ctx.cfg.emulator().fit(&data, &[])?.with_space(ctx.cfg.space())?;
    let path = ctx.save(&emu, EMULATOR, &[&data_path])?;
    done("fit", &path, format!("{} via {}, {} modes", emu.surrogate_kind(), emu.pathway(), emu.n_modes()), start);
    Ok(())
}

fn read_points(path: &Path, dims: usize) -> Result<Vec<Vec<f64>>, CliError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    let mut points = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
        let p = rec
            .iter()
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<Vec<f64>, _>>()
            .map_err(|_| CliError::data(format!("{}: row {} is not numeric", path.display(), i + 1)))?;
        if p.len() != dims {
            return Err(CliError::data(format!("{}: row {} has {} values, expected {dims}", path.display(), i + 1, p.len())));
        }
        points.push(p);
    }
    Ok(points)
}

pub fn predict(ctx: &Ctx, input: Option<&Path>) -> Result<(), CliError> {
    let start = Instant::now();
    let emu_path = ctx.path(EMULATOR);
    let emu: KlEmulator<f64> = ctx.load(&emu_path, "fit")?;
    let (points, mut inputs) = match input {
        Some(p) => (read_points(p, emu.dims())?, vec![p]),
        None => (ctx.test_points(), vec![]),
    };
    inputs.push(&emu_path);
    let samples = emu.predict_many(&points)?;
    let stats: Vec<(f64, f64)> = points
        .par_iter()
        .map(|x| Ok((emu.predict_mean(x)?, emu.predict_variance_gaussian(x)?)))
        .collect::<klemu::Result<_>>()?;
    let preds = Predictions {
        points,
        seeds: emu.seeds().clone(),
        mean: stats.iter().map(|s| s.0).collect(),
        variance: stats.iter().map(|s| s.1).collect(),
        samples,
    };
    let path = ctx.save(&preds, PREDICTIONS, &inputs)?;
    write_predictions_csv(&preds, &ctx.path("predictions.csv"))?;
    done("predict", &path, format!("{} points x {} samples", preds.points.len(), preds.seeds.len()), start);
    Ok(())
}

fn csv_writer(path: &Path) -> Result<csv::Writer<Vec<u8>>, CliError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    Ok(csv::Writer::from_writer(Vec::new()))
}

fn finish_csv(w: csv::Writer<Vec<u8>>, path: &Path) -> Result<(), CliError> {
    let bytes = w.into_inner().map_err(|e| CliError::data(e.to_string()))?;
    storage::write_atomic(path, &bytes)?;
    Ok(())
}

fn csv_row(w: &mut csv::Writer<Vec<u8>>, row: Vec<String>) -> Result<(), CliError> {
    w.write_record(row).map_err(|e| CliError::data(e.to_string()))
}

fn write_predictions_csv(p: &Predictions, path: &Path) -> Result<(), CliError> {
    let mut w = csv_writer(path)?;
    let dims = p.points.first().map_or(0, Vec::len);
    let mut header: Vec<String> = (1..=dims).map(|i| format!("x{i}")).collect();
    header.extend(["mean".to_owned(), "variance".to_owned()]);
    header.extend(p.seeds.seeds().iter().map(|s| format!("seed_{s}")));
    csv_row(&mut w, header)?;
    for (i, x) in p.points.iter().enumerate() {
        let mut row: Vec<String> = x.iter().map(f64::to_string).collect();
        row.push(p.mean[i].to_string());
        row.push(p.variance[i].to_string());
        row.extend(p.samples[i].iter().map(f64::to_string));
        csv_row(&mut w, row)?;
    }
    finish_csv(w, path)
}

pub fn validate(ctx: &Ctx) -> Result<(), CliError> {
    let start = Instant::now();
    let data_path = ctx.path(TRAJECTORIES);
    let data: TrajectoryMatrix<f64> = ctx.load(&data_path, "simulate")?;
    ctx.check_simulator(data.simulator())?;
    let run = k_fold_validate(&data, &ctx.cfg.validation_plan(), ctx.cfg.seed)?;
    let path = ctx.save(&run.summary, VALIDATION, &[&data_path])?;
    storage::write_fold_records_csv(&run.records, &ctx.path("validation_records.csv"))?;
    let m = run.summary.metrics;
    done(
        "validate",
        &path,
        format!("{} comparisons, KS rejection rate {:.4}, hist intersection {:.4}", m.count, m.ks_rejection_rate, m.hist_intersection.mean),
        start,
    );
    Ok(())
}

/// Per-point comparison plus the data behind it.
struct PointResult {
    report: MetricReport<f64>,
    cdf: Vec<(f64, f64, f64)>,
    edges: Vec<f64>,
    masses: (Vec<f64>, Vec<f64>),
}

fn evaluate_point(ctx: &Ctx, emu: &KlEmulator<f64>, seeds: &SeedRegistry, x: &[f64]) -> klemu::Result<PointResult> {
    let sim = ctx.cfg.simulator();
    let reference = seeds.seeds().iter().map(|&s| sim.evaluate(x, s)).collect::<klemu::Result<Vec<f64>>>()?;
    let predicted = emu.predict_samples(x)?;
    let report = compare(&predicted, &reference, ctx.cfg.bins, ctx.cfg.alpha)?;
    let (p, q) = shared_histogram(&predicted, &reference, ctx.cfg.bins)?;
    Ok(PointResult { report, cdf: cdf_pairs(&predicted, &reference)?, edges: p.edges, masses: (p.masses, q.masses) })
}

pub fn report(ctx: &Ctx, emulators: &[PathBuf]) -> Result<(), CliError> {
    let start = Instant::now();
    let default = [ctx.path(EMULATOR)];
    let emulators = if emulators.is_empty() { &default[..] } else { emulators };
    let test = ctx.test_points();
    let mut rows = Vec::new();
    for emu_path in emulators {
        let emu: KlEmulator<f64> = ctx.load(emu_path, "fit")?;
        ctx.check_simulator(emu.simulator())?;
        let seeds = match ctx.cfg.reference {
            Reference::Crn => emu.seeds().clone(),
            Reference::Fresh => SeedRegistry::range(ctx.cfg.fresh_seed_start, emu.n_samples()),
        };
        let results: Vec<PointResult> = test
            .par_iter()
            .enumerate()
            .map(|(i, x)| evaluate_point(ctx, &emu, &seeds, x).map_err(|e| e.context(format_args!("test point {i}"))))
            .collect::<klemu::Result<_>>()?;
        let stem = emu_path.file_stem().map_or("emulator".into(), |s| s.to_string_lossy().into_owned());
        write_point_tables(ctx, &stem, &test, &results)?;
        let reports: Vec<MetricReport<f64>> = results.iter().map(|r| r.report).collect();
        rows.push(SummaryRow {
            emulator: emu_path.display().to_string(),
            pathway: emu.pathway().to_string(),
            surrogate: emu.surrogate_kind().to_string(),
            m: emu.doe().len(),
            n: emu.n_samples(),
            modes: emu.n_modes(),
            metrics: summarize(&reports),
        });
    }
    let validation_path = ctx.path(VALIDATION);
    let validation = if validation_path.exists() { Some(ctx.load::<ValidationSummary>(&validation_path, "validate")?) } else { None };
    let summary = ReportSummary {
        simulator: ctx.cfg.simulator.clone(),
        test_points: test.len(),
        test_seed: ctx.cfg.test_seed,
        bins: ctx.cfg.bins,
        alpha: ctx.cfg.alpha,
        reference: ctx.cfg.reference,
        rows,
        validation,
    };
    let mut inputs: Vec<&Path> = emulators.iter().map(PathBuf::as_path).collect();
    if summary.validation.is_some() {
        inputs.push(&validation_path);
    }
    write_summary_tables(ctx, &summary)?;
    let path = ctx.save(&summary, REPORT, &inputs)?;
    done("report", &path, format!("{} emulators x {} test points", summary.rows.len(), summary.test_points), start);
    Ok(())
}

fn write_point_tables(ctx: &Ctx, stem: &str, test: &[Vec<f64>], results: &[PointResult]) -> Result<(), CliError> {
    let reports: Vec<MetricReport<f64>> = results.iter().map(|r| r.report).collect();
    storage::write_report_csv(test, &reports, &ctx.path(&format!("points_{stem}.csv")))?;

    let path = ctx.path(&format!("cdf_{stem}.csv"));
    let mut w = csv_writer(&path)?;
    csv_row(&mut w, ["point", "value", "cdf_predicted", "cdf_reference"].map(String::from).to_vec())?;
    for (i, r) in results.iter().enumerate() {
        for &(v, a, b) in &r.cdf {
            csv_row(&mut w, vec![i.to_string(), v.to_string(), a.to_string(), b.to_string()])?;
        }
    }
    finish_csv(w, &path)?;

    let path = ctx.path(&format!("hist_{stem}.csv"));
    let mut w = csv_writer(&path)?;
    csv_row(&mut w, ["point", "bin", "left", "right", "mass_predicted", "mass_reference"].map(String::from).to_vec())?;
    for (i, r) in results.iter().enumerate() {
        for b in 0..r.masses.0.len() {
            csv_row(
                &mut w,
                vec![
                    i.to_string(),
                    b.to_string(),
                    r.edges[b].to_string(),
                    r.edges[b + 1].to_string(),
                    r.masses.0[b].to_string(),
                    r.masses.1[b].to_string(),
                ],
            )?;
        }
    }
    finish_csv(w, &path)
}

fn write_summary_tables(ctx: &Ctx, s: &ReportSummary) -> Result<(), CliError> {
    let path = ctx.path("summary.csv");
    let mut w = csv_writer(&path)?;
    let header = [
        "emulator", "pathway", "surrogate", "m", "n", "modes", "hist_int", "hist_int_std", "hellinger", "hellinger_std", "jsd",
        "jsd_std", "ks_stat", "ks_reject_rate",
    ];
    csv_row(&mut w, header.map(String::from).to_vec())?;
    for r in &s.rows {
        let m = &r.metrics;
        csv_row(
            &mut w,
            vec![
                r.emulator.clone(),
                r.pathway.clone(),
                r.surrogate.clone(),
                r.m.to_string(),
                r.n.to_string(),
                r.modes.to_string(),
                m.hist_intersection.mean.to_string(),
                m.hist_intersection.std.to_string(),
                m.hellinger.mean.to_string(),
                m.hellinger.std.to_string(),
                m.js_divergence.mean.to_string(),
                m.js_divergence.std.to_string(),
                m.ks_statistic.mean.to_string(),
                m.ks_rejection_rate.to_string(),
            ],
        )?;
    }
    finish_csv(w, &path)?;

    let mut md = format!(
        "Mean error over {} test points ({} bins, alpha {}, {} reference)\n\n\
         | pathway | surrogate | M | N | modes | hist. intersection | Hellinger | JSD | KS stat | KS reject |\n\
         |---|---|---|---|---|---|---|---|---|---|\n",
        s.test_points,
        s.bins,
        s.alpha,
        match s.reference {
            Reference::Crn => "common-seed",
            Reference::Fresh => "fresh-seed",
        }
    );
    for r in &s.rows {
        let m = &r.metrics;
        md += &format!(
            "| {} | {} | {} | {} | {} | {:.3} | {:.3} | {:.4} | {:.3} | {:.1}% |\n",
            r.pathway,
            r.surrogate,
            r.m,
            r.n,
            r.modes,
            m.hist_intersection.mean,
            m.hellinger.mean,
            m.js_divergence.mean,
            m.ks_statistic.mean,
            100.0 * m.ks_rejection_rate
        );
    }
    if let Some(v) = &s.validation {
        let m = &v.metrics;
        md += &format!(
            "\nCross-validation ({} folds x {} repetitions, {} comparisons)\n\n\
             | hist. intersection | Hellinger | JSD | KS reject |\n|---|---|---|---|\n\
             | {:.3} ± {:.3} | {:.3} ± {:.3} | {:.4} ± {:.4} | {:.2}% |\n",
            v.plan.k,
            v.plan.repetitions,
            m.count,
            m.hist_intersection.mean,
            m.hist_intersection.std,
            m.hellinger.mean,
            m.hellinger.std,
            m.js_divergence.mean,
            m.js_divergence.std,
            100.0 * m.ks_rejection_rate
        );
    }
    storage::write_atomic(&ctx.path("summary.md"), md.as_bytes())?;
    Ok(())
}
