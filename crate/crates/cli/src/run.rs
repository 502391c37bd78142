use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use bsdelab_core::envelope::envelope;
use bsdelab_core::lab::{
    counterexample_curve, lambda_dependence_curve, uniqueness_gap, xi_dependence_curve,
    LabSettings,
};
use bsdelab_core::solver::{
    maximal_solution, minimal_solution, scheme_error, solve_lipschitz, Generator,
};
use bsdelab_core::{DependenceReport, EnvelopeDriver, EnvelopeKind, Selector, SolutionField};
use serde::Serialize;
use serde_json::json;

use crate::config::{Command, ExperimentConfig};
use crate::plan::{plan, Plan, ENVELOPE_H};
use crate::{numeric, CliError};

pub const RUN_RECORD: &str = "run.json";

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ManifestEntry {
    pub file: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunRecord {
    pub config: ExperimentConfig,
    pub version: String,
    pub wall_time_s: f64,
    pub outputs: Vec<ManifestEntry>,
    pub scheme_error: Option<f64>,
}

struct Writer {
    dir: PathBuf,
    files: Vec<ManifestEntry>,
}

impl Writer {
    fn new(dir: &Path) -> Result<Writer, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(Writer {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn put(&mut self, name: &str, bytes: Vec<u8>) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, &bytes).map_err(|e| CliError::io(&path, e))?;
        self.files.push(ManifestEntry {
            file: name.to_string(),
            bytes: bytes.len() as u64,
        });
        Ok(())
    }

    fn json(&mut self, name: &str, value: &impl Serialize) -> Result<(), CliError> {
        let mut text = serde_json::to_vec_pretty(value).expect("serialisable output");
        text.push(b'\n');
        self.put(name, text)
    }

    fn csv(&mut self, name: &str, header: &[&str], rows: Vec<Vec<String>>) -> Result<(), CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| CliError::Io(format!("{name}: {e}"));
        w.write_record(header).map_err(io)?;
        for row in rows {
            w.write_record(&row).map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Io(format!("{name}: {e}")))?;
        self.put(name, bytes)
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn report_rows(report: &DependenceReport) -> Vec<Vec<String>> {
    (0..report.distances.len())
        .map(|i| {
            vec![
                report.labels[i].clone(),
                report.perturbations[i].to_string(),
                report.distances[i].to_string(),
                opt(report.ratios[i]),
                opt(report.rhs.get(i).copied()),
            ]
        })
        .collect()
}

const REPORT_HEADER: &[&str] = &["label", "perturbation", "distance", "ratio", "rhs"];

/// Execute a config, writing outputs and `run.json` into `out_dir`.
pub fn run(config: &ExperimentConfig, out_dir: &Path) -> Result<RunRecord, CliError> {
    let start = Instant::now();
    let plan = plan(config).map_err(|d| CliError::Config(d.iter().map(|d| d.to_string()).collect()))?;
    let mut out = Writer::new(out_dir)?;

    let scheme_error = match config.command {
        Command::Solve => solve(config, &plan, &mut out)?,
        Command::Envelope => envelope_table(&plan, &mut out)?,
        Command::Dependence => dependence(config, &plan, &mut out)?,
        Command::Counterexample => counterexample(config, &plan, &mut out)?,
        Command::Uniqueness => uniqueness(config, &plan, &mut out)?,
    };

    let mut echo = config.clone();
    echo.output = Some(out_dir.to_path_buf());
    let record = RunRecord {
        config: echo,
        version: env!("CARGO_PKG_VERSION").to_string(),
        wall_time_s: start.elapsed().as_secs_f64(),
        outputs: out.files.clone(),
        scheme_error,
    };
    out.json(RUN_RECORD, &record)?;
    Ok(record)
}

fn solve(config: &ExperimentConfig, plan: &Plan, out: &mut Writer) -> Result<Option<f64>, CliError> {
    let lattice = &plan.lattice;
    let driver = plan.driver.as_ref().expect("planned driver");
    let xi = plan.terminal.as_ref().expect("planned terminal");

    let (field, err): (SolutionField, Option<f64>) = if plan.schedule.is_empty() {
        let f = solve_lipschitz(lattice, driver, xi, config.scheme).map_err(numeric)?;
        (f, scheme_error(lattice, driver, xi).ok())
    } else {
        let fields = match config.selector {
            Selector::Min => minimal_solution(lattice, driver, xi, &plan.schedule, config.scheme),
            Selector::Max => maximal_solution(lattice, driver, xi, &plan.schedule, config.scheme),
        }
        .map_err(numeric)?;
        let m = *plan.schedule.last().expect("nonempty schedule");
        let env = EnvelopeDriver::new(driver.clone(), m, config.selector.kind(), lattice.dt())
            .map_err(numeric)?;
        let err = scheme_error(lattice, &env as &dyn Generator, xi).ok();
        (fields.into_iter().last().expect("nonempty schedule"), err)
    };

    let rows = (0..=lattice.steps())
        .map(|k| {
            let slice = field.y.slice(k);
            let mean: f64 = lattice.weights(k).iter().zip(slice).map(|(p, y)| p * y).sum();
            let lo = slice.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = slice.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            vec![
                lattice.time(k).to_string(),
                mean.to_string(),
                lo.to_string(),
                hi.to_string(),
            ]
        })
        .collect();
    out.csv("solve.csv", &["t", "y_root", "min_y", "max_y"], rows)?;
    out.json(
        "summary.json",
        &json!({
            "driver": field.meta.driver,
            "scheme": field.meta.scheme,
            "N": lattice.steps(),
            "m": field.meta.m,
            "kind": field.meta.kind,
            "y0": field.y0(),
        }),
    )?;
    Ok(err)
}

fn envelope_table(plan: &Plan, out: &mut Writer) -> Result<Option<f64>, CliError> {
    let driver = plan.driver.as_ref().expect("planned driver");
    let h = plan.h.unwrap_or(ENVELOPE_H);
    let grid = &plan.grid;
    let ys = grid.points();
    let mut rows = Vec::new();
    for &m in &plan.schedule {
        for kind in [EnvelopeKind::Lower, EnvelopeKind::Upper] {
            for &z in &grid.z {
                for &y in &ys {
                    let v = envelope(driver, kind, m, grid.t, y, &[z], h).map_err(numeric)?;
                    rows.push(vec![
                        kind.as_str().to_string(),
                        m.to_string(),
                        grid.t.to_string(),
                        y.to_string(),
                        z.to_string(),
                        v.to_string(),
                    ]);
                }
            }
        }
    }
    out.csv("envelope.csv", &["kind", "m", "t", "y", "z", "value"], rows)?;
    Ok(None)
}

fn settings(config: &ExperimentConfig, plan: &Plan) -> LabSettings {
    LabSettings {
        m: plan.max_m().expect("planned schedule"),
        scheme: config.scheme,
        sampling: config.sampling.into(),
        threshold: config.threshold,
    }
}

fn dependence(config: &ExperimentConfig, plan: &Plan, out: &mut Writer) -> Result<Option<f64>, CliError> {
    let xi = plan.terminal.as_ref().expect("planned terminal");
    let settings = settings(config, plan);
    let report = match &plan.family {
        Some(family) => lambda_dependence_curve(
            &plan.lattice,
            family,
            xi,
            &plan.lambdas,
            config.selector,
            &settings,
        ),
        None => xi_dependence_curve(
            &plan.lattice,
            plan.driver.as_ref().expect("planned driver"),
            xi,
            &plan.xi_seq,
            config.selector,
            &settings,
        ),
    }
    .map_err(numeric)?;
    out.json("report.json", &report)?;
    out.csv("report.csv", REPORT_HEADER, report_rows(&report))?;
    Ok(Some(report.scheme_error))
}

fn counterexample(config: &ExperimentConfig, plan: &Plan, out: &mut Writer) -> Result<Option<f64>, CliError> {
    let report = counterexample_curve(
        plan.lattice.horizon(),
        &plan.ns,
        config.selector,
        plan.lattice.steps(),
        config.threshold,
    )
    .map_err(numeric)?;
    out.json("counterexample.json", &report)?;
    out.csv("counterexample.csv", REPORT_HEADER, report_rows(&report))?;
    Ok(Some(report.scheme_error))
}

fn uniqueness(config: &ExperimentConfig, plan: &Plan, out: &mut Writer) -> Result<Option<f64>, CliError> {
    let driver = plan.driver.as_ref().expect("planned driver");
    let xi = plan.terminal.as_ref().expect("planned terminal");
    let m = plan.max_m().expect("planned schedule");
    let lattice = &plan.lattice;
    let gap = uniqueness_gap(lattice, driver, xi, m, &config.sampling.into()).map_err(numeric)?;
    let env = EnvelopeDriver::new(driver.clone(), m, EnvelopeKind::Upper, lattice.dt())
        .map_err(numeric)?;
    let err = scheme_error(lattice, &env as &dyn Generator, xi).map_err(numeric)?;
    out.json(
        "uniqueness.json",
        &json!({
            "driver": driver.name(),
            "terminal": xi.to_string(),
            "N": lattice.steps(),
            "m": m,
            "gap": gap,
            "scheme_error": err,
        }),
    )?;
    Ok(Some(err))
}
