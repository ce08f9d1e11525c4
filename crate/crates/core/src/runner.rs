//! Runs one scenario task and writes its outputs.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::aperture::{aperture_channel, ApertureCoefficients, Dephasing};
use crate::density::{DensityMatrix, DensityRecord};
use crate::error::{Error, Result};
use crate::measurement::{child_rng, hom_scan, hom_scan_sampled, visibility, HomScan, HomSetup, Sampling};
use crate::metrics::{BellTarget, MetricReport};
use crate::mode::to_two_qubit;
use crate::scenario::{state_label, Scenario, Task};
use crate::source::{prepare_state, SourceModel, SpectralProfile};
use crate::tomography::{
    bootstrap_errors, mle_reconstruct, records_to_problem, simulate_counts, standard_settings,
    write_counts_csv, MetricStd, MleOptions, Resampling,
};

pub const DEFAULT_BOOTSTRAP: usize = 100;

/// Stream families; the low bits carry state, aperture and point indices.
const HOM_STREAMS: u64 = 0;
const COUNT_STREAMS: u64 = 1 << 40;
const BOOTSTRAP_STREAMS: u64 = 2 << 40;
const JITTER_STREAMS: u64 = 3 << 40;
const SWEEP_STREAMS: u64 = 4 << 40;

/// Command-line overrides.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub repeats: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub out_dir: PathBuf,
    pub manifest: Manifest,
}

#[derive(Debug, Clone, Serialize)]
pub struct ResolvedParameters {
    pub visibility: f64,
    pub sigma_tau_fs: f64,
    pub delay_fs: f64,
    pub noise_lambda: f64,
    pub pair_flux: f64,
    pub profile: SpectralProfile,
    pub alpha: Option<[f64; 2]>,
    pub beta: Option<[f64; 2]>,
    pub eta: Option<f64>,
    pub dephasing: Option<Dephasing>,
    pub scale: Option<f64>,
    pub repeats: Option<usize>,
    pub bootstrap: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PreparedState {
    pub label: String,
    pub hwp_deg: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct VisibilityEntry {
    pub state_label: String,
    pub aperture_index: Option<usize>,
    pub value: f64,
    pub raw: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub name: String,
    pub task: Task,
    pub version: String,
    pub master_seed: Option<u64>,
    pub resolved: ResolvedParameters,
    pub states: Vec<PreparedState>,
    pub files: Vec<String>,
    pub non_convergence: bool,
    pub warnings: Vec<String>,
    pub visibilities: Vec<VisibilityEntry>,
}

/// Seed for a named purpose, derived from the master seed.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    use rand::RngCore;
    child_rng(master, stream).next_u64()
}

struct Run {
    scenario: Scenario,
    dir: PathBuf,
    source: SourceModel,
    aperture: Option<ApertureCoefficients>,
    states: Vec<PreparedState>,
    files: Vec<String>,
    warnings: Vec<String>,
    visibilities: Vec<VisibilityEntry>,
}

impl Run {
    fn write(&mut self, name: &str, contents: &[u8]) -> Result<()> {
        fs::write(self.dir.join(name), contents)?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    fn seed(&self) -> Option<u64> {
        self.scenario.sampling().seed
    }
}

/// Default output directory when neither the command line nor the scenario
/// names one.
pub fn default_out_dir(scenario: &Scenario) -> PathBuf {
    Path::new("out").join(&scenario.name)
}

/// Validates, runs `task` and writes every output plus `manifest.json`.
pub fn run_scenario(task: Task, mut scenario: Scenario, options: &RunOptions) -> Result<RunOutcome> {
    if options.seed.is_some() || options.repeats.is_some() {
        let mut sampling = scenario.sampling();
        if let Some(seed) = options.seed {
            sampling.seed = Some(seed);
        }
        if let Some(r) = options.repeats {
            sampling.repeats = Some(r);
        }
        scenario.sampling = Some(sampling);
    }
    scenario.validate(task)?;

    let dir = options
        .out
        .clone()
        .or_else(|| scenario.output.dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| default_out_dir(&scenario));
    fs::create_dir_all(&dir)?;

    let source = scenario.source.model();
    let aperture = scenario.aperture.as_ref().map(|a| a.coefficients()).transpose()?;
    let states = scenario
        .prep
        .hwp_deg
        .values()
        .into_iter()
        .map(|hwp_deg| PreparedState { label: state_label(hwp_deg), hwp_deg })
        .collect();
    let mut run = Run {
        scenario,
        dir,
        source,
        aperture,
        states,
        files: Vec::new(),
        warnings: Vec::new(),
        visibilities: Vec::new(),
    };

    match task {
        Task::Prepare => run_prepare(&mut run)?,
        Task::Metrics => run_metrics(&mut run)?,
        Task::HomScan => run_hom(&mut run)?,
        Task::Tomography => run_tomography(&mut run)?,
        Task::ApertureSweep => run_sweep(&mut run)?,
    }

    let sampling = run.scenario.sampling();
    let block = run.scenario.aperture.as_ref();
    let manifest = Manifest {
        name: run.scenario.name.clone(),
        task,
        version: env!("CARGO_PKG_VERSION").to_string(),
        master_seed: sampling.seed,
        resolved: ResolvedParameters {
            visibility: run.scenario.source.visibility,
            sigma_tau_fs: run.scenario.source.sigma_tau_fs,
            delay_fs: run.scenario.source.delay_fs,
            noise_lambda: run.scenario.source.noise_lambda,
            pair_flux: run.scenario.source.pair_flux,
            profile: run.scenario.source.profile,
            alpha: block.map(|a| a.alpha),
            beta: block.map(|a| a.beta),
            eta: block.map(|a| a.eta),
            dephasing: block.map(|a| a.dephasing),
            scale: sampling.scale,
            repeats: sampling.repeats,
            bootstrap: (task == Task::Tomography)
                .then(|| sampling.bootstrap.unwrap_or(DEFAULT_BOOTSTRAP)),
        },
        states: run.states.clone(),
        files: {
            let mut f = run.files.clone();
            f.push("manifest.json".into());
            f
        },
        non_convergence: !run.warnings.is_empty(),
        warnings: run.warnings.clone(),
        visibilities: std::mem::take(&mut run.visibilities),
    };
    run.write_json("manifest.json", &manifest)?;
    Ok(RunOutcome { out_dir: run.dir, manifest })
}

/// Conditional two-qubit state, coincidence probability and aperture
/// transmission for one preparation angle.
pub fn conditional_state(
    hwp_deg: f64,
    source: &SourceModel,
    aperture: Option<&ApertureCoefficients>,
) -> Result<(DensityMatrix, f64, f64)> {
    let mixture = prepare_state(hwp_deg.to_radians(), source)?;
    match aperture {
        None => {
            let (rho, p) = to_two_qubit(&mixture)?;
            Ok((rho, p, 1.0))
        }
        Some(c) => {
            let out = aperture_channel(&mixture, c)?;
            Ok((out.rho, 0.5, out.transmission))
        }
    }
}

/// Bell target matching a label; other angles pick the closer of Φ±.
pub fn target_for(label: &str, rho: &DensityMatrix) -> Result<BellTarget> {
    Ok(match label {
        "minus" => BellTarget::PhiMinus,
        "plus" => BellTarget::PhiPlus,
        _ => {
            let plus = MetricReport::evaluate(rho, BellTarget::PhiPlus)?.fidelity;
            let minus = MetricReport::evaluate(rho, BellTarget::PhiMinus)?.fidelity;
            if minus >= plus {
                BellTarget::PhiMinus
            } else {
                BellTarget::PhiPlus
            }
        }
    })
}

#[derive(Serialize)]
struct StateOutput<'a> {
    state_label: &'a str,
    hwp_deg: f64,
    coincidence_probability: f64,
    transmission: f64,
    rho: DensityRecord,
    metrics: MetricReport,
}

fn run_prepare(run: &mut Run) -> Result<()> {
    for s in run.states.clone() {
        let (rho, p, t) = conditional_state(s.hwp_deg, &run.source, run.aperture.as_ref())?;
        let target = target_for(&s.label, &rho)?;
        let out = StateOutput {
            state_label: &s.label,
            hwp_deg: s.hwp_deg,
            coincidence_probability: p,
            transmission: t,
            rho: rho.to_record(),
            metrics: MetricReport::evaluate(&rho, target)?,
        };
        run.write_json(&format!("state_{}.json", s.label), &out)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct MetricsRow<'a> {
    state_label: &'a str,
    hwp_deg: f64,
    target: &'a str,
    concurrence: f64,
    negativity: f64,
    fidelity: f64,
    purity: f64,
    transmission: f64,
}

fn run_metrics(run: &mut Run) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for s in &run.states {
        let (rho, _, t) = conditional_state(s.hwp_deg, &run.source, run.aperture.as_ref())?;
        let m = MetricReport::evaluate(&rho, target_for(&s.label, &rho)?)?;
        w.serialize(MetricsRow {
            state_label: &s.label,
            hwp_deg: s.hwp_deg,
            target: &m.target,
            concurrence: m.concurrence,
            negativity: m.negativity,
            fidelity: m.fidelity,
            purity: m.purity,
            transmission: t,
        })?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    run.write("metrics.csv", &bytes)
}

fn hom_setup(run: &Run, s: &PreparedState, aperture: Option<ApertureCoefficients>) -> HomSetup {
    HomSetup {
        label: s.label.clone(),
        source: run.source.clone(),
        hwp_angle: s.hwp_deg.to_radians(),
        aperture,
    }
}

fn scan(setup: &HomSetup, delays: &[f64], run: &Run, stream: u64) -> Result<HomScan> {
    let sampling = run.scenario.sampling();
    match (sampling.scale, sampling.seed) {
        (Some(scale), Some(seed)) => hom_scan_sampled(
            setup,
            delays,
            &Sampling {
                pairs_per_point: scale,
                repeats: sampling.repeats.unwrap_or(1),
                dark_counts: sampling.dark_counts,
                seed,
                stream,
            },
        ),
        _ => hom_scan(setup, delays),
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn run_hom(run: &mut Run) -> Result<()> {
    let grid = run.scenario.source.delay_scan.clone().expect("validated");
    let delays_fs = grid.delays_fs();
    let delays = grid.delays();
    let with_std = run.scenario.sampling().scale.is_some() && run.scenario.sampling().repeats.unwrap_or(1) > 1;

    let mut scans = Vec::new();
    for (i, s) in run.states.iter().enumerate() {
        let setup = hom_setup(run, s, run.aperture.clone());
        scans.push(scan(&setup, &delays, run, HOM_STREAMS + ((i as u64) << 16))?);
    }

    let mut w = csv::Writer::from_writer(Vec::new());
    if with_std {
        w.write_record(["tau_fs", "rate_normalized", "rate_std", "state_label"])?;
    } else {
        w.write_record(["tau_fs", "rate_normalized", "state_label"])?;
    }
    let mut dat = String::new();
    for sc in &scans {
        let _ = writeln!(dat, "# {}", sc.state_label);
        let _ = writeln!(dat, "# tau_fs rate_normalized{}", if with_std { " rate_std" } else { "" });
        for (p, fs) in sc.points.iter().zip(&delays_fs) {
            let tau = fs.to_string();
            let rate = p.rate.to_string();
            if with_std {
                let std = fmt_opt(p.rate_std);
                w.write_record([tau.as_str(), &rate, &std, &sc.state_label])?;
                let _ = writeln!(dat, "{tau} {rate} {std}");
            } else {
                w.write_record([tau.as_str(), &rate, &sc.state_label])?;
                let _ = writeln!(dat, "{tau} {rate}");
            }
        }
        dat.push_str("\n\n");
        if let Ok(v) = visibility(sc) {
            run.visibilities.push(VisibilityEntry {
                state_label: sc.state_label.clone(),
                aperture_index: None,
                value: v.value,
                raw: v.raw,
            });
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    run.write("hom_scan.csv", &bytes)?;
    if run.scenario.output.gnuplot {
        run.write("hom_scan.dat", dat.as_bytes())?;
    }
    Ok(())
}

#[derive(Serialize)]
struct TomographyOutput<'a> {
    state_label: &'a str,
    scenario: &'a str,
    hwp_deg: f64,
    rho: DensityRecord,
    metrics: MetricReport,
    metrics_std: Option<MetricStd>,
    expected_metrics: MetricReport,
    log_likelihood: f64,
    iterations: usize,
    converged: bool,
    bootstrap_replicas: usize,
    bootstrap_unconverged: usize,
}

#[derive(Serialize)]
struct TableRow<'a> {
    state_label: &'a str,
    scenario: &'a str,
    concurrence: f64,
    concurrence_std: Option<f64>,
    negativity: f64,
    negativity_std: Option<f64>,
    fidelity: f64,
    fidelity_std: Option<f64>,
}

fn run_tomography(run: &mut Run) -> Result<()> {
    let sampling = run.scenario.sampling();
    let seed = sampling.seed.expect("validated");
    let scale = sampling.scale.expect("validated");
    let n_boot = sampling.bootstrap.unwrap_or(DEFAULT_BOOTSTRAP);
    let duration = if run.source.pair_flux > 0.0 { scale / run.source.pair_flux } else { 0.0 };
    let settings = standard_settings();
    let options = MleOptions::default();
    let name = run.scenario.name.clone();

    let mut table = csv::Writer::from_writer(Vec::new());
    for (i, s) in run.states.clone().iter().enumerate() {
        let (truth, _, _) = conditional_state(s.hwp_deg, &run.source, run.aperture.as_ref())?;
        let target = target_for(&s.label, &truth)?;
        let records = simulate_counts(&truth, &settings, scale, seed, COUNT_STREAMS + i as u64, duration)?;
        let mut buf = Vec::new();
        write_counts_csv(&records, &mut buf)?;
        run.write(&format!("counts_{}.csv", s.label), &buf)?;

        let (fit_settings, counts) = records_to_problem(&records)?;
        let fit = mle_reconstruct(&counts, &fit_settings, &options)?;
        if !fit.converged {
            run.warnings.push(format!(
                "maximum-likelihood fit for `{}` stopped after {} iterations (gradient {:e})",
                s.label, fit.iterations, fit.gradient_norm
            ));
        }
        let metrics = MetricReport::evaluate(&fit.rho, target)?;
        let boot = if n_boot >= 2 {
            let b = bootstrap_errors(
                &counts,
                &fit_settings,
                target,
                n_boot,
                derive_seed(seed, BOOTSTRAP_STREAMS + i as u64),
                Resampling::Poisson,
                &options,
            )?;
            if b.unconverged > 0 {
                run.warnings.push(format!(
                    "{} of {} bootstrap fits for `{}` did not converge",
                    b.unconverged, b.replicas, s.label
                ));
            }
            Some(b)
        } else {
            None
        };
        let std = boot.as_ref().map(|b| b.std);
        table.serialize(TableRow {
            state_label: &s.label,
            scenario: &name,
            concurrence: metrics.concurrence,
            concurrence_std: std.map(|d| d.concurrence),
            negativity: metrics.negativity,
            negativity_std: std.map(|d| d.negativity),
            fidelity: metrics.fidelity,
            fidelity_std: std.map(|d| d.fidelity),
        })?;
        let out = TomographyOutput {
            state_label: &s.label,
            scenario: &name,
            hwp_deg: s.hwp_deg,
            rho: fit.rho.to_record(),
            metrics,
            metrics_std: std,
            expected_metrics: MetricReport::evaluate(&truth, target)?,
            log_likelihood: fit.log_likelihood,
            iterations: fit.iterations,
            converged: fit.converged,
            bootstrap_replicas: boot.as_ref().map_or(0, |b| b.replicas),
            bootstrap_unconverged: boot.as_ref().map_or(0, |b| b.unconverged),
        };
        run.write_json(&format!("rho_{}.json", s.label), &out)?;
    }
    let bytes = table.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    run.write("table1.csv", &bytes)
}

#[derive(Serialize)]
struct SweepRow<'a> {
    aperture_index: usize,
    alpha_re: f64,
    alpha_im: f64,
    beta_re: f64,
    beta_im: f64,
    eta: f64,
    state_label: &'a str,
    visibility: f64,
    visibility_raw: f64,
}

/// Jittered copies of the scenario aperture; the first draw uses a child
/// stream of the master seed.
pub fn sweep_apertures(base: &ApertureCoefficients, jitter: f64, count: usize, seed: Option<u64>) -> Vec<ApertureCoefficients> {
    match seed {
        Some(seed) if jitter > 0.0 => {
            let mut rng = child_rng(seed, JITTER_STREAMS);
            (0..count).map(|_| base.jitter(jitter, &mut rng)).collect()
        }
        _ => vec![base.clone(); count],
    }
}

fn run_sweep(run: &mut Run) -> Result<()> {
    let block = run.scenario.aperture.clone().expect("validated");
    let base = run.aperture.clone().expect("validated");
    let apertures = sweep_apertures(&base, block.jitter, block.count, run.seed());
    let delays = [0.0, f64::INFINITY];

    let mut w = csv::Writer::from_writer(Vec::new());
    let mut dat = String::from("# aperture_index state_label visibility\n");
    for (k, c) in apertures.iter().enumerate() {
        for (i, s) in run.states.clone().iter().enumerate() {
            let setup = hom_setup(run, s, Some(c.clone()));
            let stream = SWEEP_STREAMS + ((k as u64) << 20) + ((i as u64) << 16);
            let v = visibility(&scan(&setup, &delays, run, stream)?)?;
            w.serialize(SweepRow {
                aperture_index: k,
                alpha_re: c.alpha.re,
                alpha_im: c.alpha.im,
                beta_re: c.beta.re,
                beta_im: c.beta.im,
                eta: c.eta,
                state_label: &s.label,
                visibility: v.value,
                visibility_raw: v.raw,
            })?;
            let _ = writeln!(dat, "{k} {} {}", s.label, v.value);
            run.visibilities.push(VisibilityEntry {
                state_label: s.label.clone(),
                aperture_index: Some(k),
                value: v.value,
                raw: v.raw,
            });
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    run.write("aperture_sweep.csv", &bytes)?;
    if run.scenario.output.gnuplot {
        run.write("aperture_sweep.dat", dat.as_bytes())?;
    }
    Ok(())
}
