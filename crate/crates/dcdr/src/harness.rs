//! Config-driven experiment runner: baseline vs. optimized sweeps over the
//! deferral horizon, across the three program modes, with normalized CSV
//! reports.
//!
//! The configuration is a TOML tree (see `configs/` in the repository root
//! and the README for the schema). Every solved run is audited with
//! [`verify_solution`]; runs that fail to solve or to verify are kept in the
//! report as failures and excluded from normalization.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::model::{baseline_cost, BillingModel, DemandInput, DemandWindow, FleetModel};
use crate::optimizer::{
    build_base_program, build_renewable_program, build_shutdown_program, solve, verify_solution,
    Mode, ProgramSpec, RenewableProfile, ShutdownParams, SolveOptions, DEFAULT_TOGGLE_ENERGY_KWH,
    DEFAULT_WEAR_COST_USD,
};
use crate::trace::{load_request_trace, load_wind_trace, synth_diurnal_trace, wind_to_power, TurbineCurve};

/// A per-slot quantity given either as one value for every slot or as a full
/// series.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum ScalarOrSeries {
    Scalar(f64),
    Series(Vec<f64>),
}

impl ScalarOrSeries {
    fn materialize(&self, tau: usize, what: &'static str) -> Result<Vec<f64>> {
        match self {
            ScalarOrSeries::Scalar(v) => Ok(vec![*v; tau]),
            ScalarOrSeries::Series(s) if s.len() == tau => Ok(s.clone()),
            ScalarOrSeries::Series(s) => Err(Error::DimensionMismatch {
                what,
                expected: tau,
                actual: s.len(),
            }),
        }
    }
}

/// Slot set of a demand window: `"all"`, an inclusive 1-based range, or an
/// explicit 1-based list.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum SlotSpec {
    All(String),
    Range { start: usize, end: usize },
    List(Vec<usize>),
}

impl SlotSpec {
    fn materialize(&self, tau: usize) -> Result<Vec<usize>> {
        let bad = |detail: String| Err(Error::Config(detail));
        match self {
            SlotSpec::All(s) if s == "all" => Ok((0..tau).collect()),
            SlotSpec::All(s) => bad(format!("unknown slot spec '{s}' (expected \"all\")")),
            SlotSpec::Range { start, end } => {
                if *start == 0 || *end < *start || *end > tau {
                    return bad(format!("slot range {start}..{end} outside 1..{tau}"));
                }
                Ok((*start - 1..*end).collect())
            }
            SlotSpec::List(slots) => {
                let mut out = Vec::with_capacity(slots.len());
                for &s in slots {
                    if s == 0 || s > tau {
                        return bad(format!("slot {s} outside 1..{tau}"));
                    }
                    out.push(s - 1);
                }
                Ok(out)
            }
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowConfig {
    pub slots: SlotSpec,
    pub price_per_kw: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BillingConfig {
    pub tau: usize,
    pub slot_hours: f64,
    pub energy_price: ScalarOrSeries,
    pub windows: Vec<WindowConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FleetConfig {
    pub servers: u32,
    pub idle_power_kw: f64,
    pub util_power_kw: f64,
    pub per_server_capacity: f64,
    pub pue: ScalarOrSeries,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    pub base: f64,
    pub amplitude: f64,
    pub period: f64,
    #[serde(default)]
    pub noise_amplitude: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemandConfig {
    /// Request-trace CSV; exactly one of `trace` / `synthetic`.
    pub trace: Option<PathBuf>,
    #[serde(default = "default_scale")]
    pub scale: f64,
    pub synthetic: Option<SyntheticConfig>,
    pub elastic_fraction: ScalarOrSeries,
    pub reward_floor: ScalarOrSeries,
    pub reward_ceiling: ScalarOrSeries,
}

fn default_scale() -> f64 {
    1.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShutdownConfig {
    /// Servers on at cycle start; defaults to the whole fleet.
    pub initial_on: Option<f64>,
    #[serde(default = "default_toggle_energy")]
    pub toggle_energy_kwh: f64,
    #[serde(default = "default_wear_cost")]
    pub wear_cost_usd: f64,
    pub max_toggle: Option<f64>,
}

fn default_toggle_energy() -> f64 {
    DEFAULT_TOGGLE_ENERGY_KWH
}

fn default_wear_cost() -> f64 {
    DEFAULT_WEAR_COST_USD
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TurbineConfig {
    pub cut_in_mps: f64,
    pub rated_mps: f64,
    pub cut_out_mps: f64,
    pub rated_power_kw: f64,
    pub count: u32,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RenewableConfig {
    pub wind_trace: PathBuf,
    pub turbine: TurbineConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    #[serde(default = "default_modes")]
    pub modes: Vec<Mode>,
    pub d_values: Vec<usize>,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default)]
    pub seed: u64,
    pub output: Option<PathBuf>,
}

fn default_modes() -> Vec<Mode> {
    vec![Mode::Base]
}

fn default_tolerance() -> f64 {
    1e-6
}

/// Everything one experiment needs, as read from a TOML config file.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub billing: BillingConfig,
    pub fleet: FleetConfig,
    pub demand: DemandConfig,
    pub experiment: ExperimentSection,
    pub shutdown: Option<ShutdownConfig>,
    pub renewable: Option<RenewableConfig>,
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let config: ExperimentConfig =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{path:?}: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<()> {
        if self.experiment.d_values.is_empty() {
            return Err(Error::Config("experiment.d_values is empty".into()));
        }
        if self.experiment.modes.is_empty() {
            return Err(Error::Config("experiment.modes is empty".into()));
        }
        match (&self.demand.trace, &self.demand.synthetic) {
            (Some(_), Some(_)) => Err(Error::Config(
                "demand.trace and demand.synthetic are mutually exclusive".into(),
            )),
            (None, None) => Err(Error::Config(
                "one of demand.trace or demand.synthetic is required".into(),
            )),
            _ => Ok(()),
        }?;
        if self.experiment.modes.contains(&Mode::Shutdown) && self.shutdown.is_none() {
            return Err(Error::Config(
                "mode 'shutdown' requires a [shutdown] section".into(),
            ));
        }
        if self.experiment.modes.contains(&Mode::Renewable) && self.renewable.is_none() {
            return Err(Error::Config(
                "mode 'renewable' requires a [renewable] section".into(),
            ));
        }
        Ok(())
    }

    /// Demand series from the trace file or the synthetic generator.
    pub fn demand_series(&self) -> Result<Vec<f64>> {
        let tau = self.billing.tau;
        let lam = match (&self.demand.trace, &self.demand.synthetic) {
            (Some(path), None) => load_request_trace(path, self.demand.scale)?,
            (None, Some(synth)) => synth_diurnal_trace(
                tau,
                synth.base,
                synth.amplitude,
                synth.period,
                synth.noise_amplitude,
                self.experiment.seed,
            )?,
            _ => unreachable!("validated at load"),
        };
        if lam.len() != tau {
            return Err(Error::Config(format!(
                "demand trace has {} slots, config declares tau = {tau}",
                lam.len()
            )));
        }
        Ok(lam)
    }

    /// Builds the model triple the optimizer consumes.
    pub fn models(&self) -> Result<(BillingModel, FleetModel, DemandInput)> {
        let tau = self.billing.tau;
        let energy_price = self.billing.energy_price.materialize(tau, "energy price")?;
        let mut windows = Vec::with_capacity(self.billing.windows.len());
        for w in &self.billing.windows {
            windows.push(DemandWindow::new(w.slots.materialize(tau)?, w.price_per_kw)?);
        }
        let billing = BillingModel::new(self.billing.slot_hours, energy_price, windows)?;
        let fleet = FleetModel::new(
            self.fleet.servers,
            self.fleet.idle_power_kw,
            self.fleet.util_power_kw,
            self.fleet.per_server_capacity,
            self.fleet.pue.materialize(tau, "pue")?,
        )?;
        let demand = DemandInput::new(
            self.demand_series()?,
            self.demand
                .elastic_fraction
                .materialize(tau, "elastic fraction")?,
            self.demand.reward_floor.materialize(tau, "reward floor")?,
            self.demand
                .reward_ceiling
                .materialize(tau, "reward ceiling")?,
        )?;
        Ok((billing, fleet, demand))
    }

    fn shutdown_params(&self, fleet: &FleetModel) -> Result<ShutdownParams> {
        let section = self
            .shutdown
            .as_ref()
            .ok_or_else(|| Error::Config("missing [shutdown] section".into()))?;
        let mut params = ShutdownParams::new(
            section.initial_on.unwrap_or(f64::from(fleet.servers)),
            section.toggle_energy_kwh,
            section.wear_cost_usd,
        );
        params.max_toggle = section.max_toggle;
        Ok(params)
    }

    fn renewable_profile(&self, billing: &BillingModel) -> Result<RenewableProfile> {
        let section = self
            .renewable
            .as_ref()
            .ok_or_else(|| Error::Config("missing [renewable] section".into()))?;
        let curve = TurbineCurve::new(
            section.turbine.cut_in_mps,
            section.turbine.rated_mps,
            section.turbine.cut_out_mps,
            section.turbine.rated_power_kw,
            section.turbine.count,
        )?;
        let speeds = load_wind_trace(&section.wind_trace)?;
        if speeds.len() != billing.tau() {
            return Err(Error::Config(format!(
                "wind trace has {} slots, config declares tau = {}",
                speeds.len(),
                billing.tau()
            )));
        }
        wind_to_power(&speeds, &curve, billing.slot_hours)
    }

    /// Builds the program for one `(mode, d_max)` cell.
    pub fn build_program(&self, mode: Mode, d_max: usize) -> Result<ProgramSpec> {
        let (billing, fleet, demand) = self.models()?;
        match mode {
            Mode::Base => build_base_program(&demand, &fleet, &billing, d_max),
            Mode::Shutdown => {
                let params = self.shutdown_params(&fleet)?;
                build_shutdown_program(&demand, &fleet, &billing, d_max, params)
            }
            Mode::Renewable => {
                let green = self.renewable_profile(&billing)?;
                build_renewable_program(&demand, &fleet, &billing, d_max, green)
            }
        }
    }
}

/// Result of one `(mode, D)` run.
#[derive(Debug, Clone)]
pub enum RunOutcome {
    Solved {
        peak_kw: f64,
        cost_usd: f64,
        reward_usd: f64,
        wear_usd: f64,
        profit_delta_usd: f64,
        solve_ms: f64,
        iterations: u32,
    },
    Failed {
        reason: String,
    },
}

#[derive(Debug, Clone)]
pub struct RunRecord {
    pub mode: Mode,
    pub d_max: usize,
    pub outcome: RunOutcome,
}

/// Baseline figures plus one record per sweep cell, ordered by mode then D.
#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub baseline_peak_kw: f64,
    pub baseline_cost_usd: f64,
    pub runs: Vec<RunRecord>,
}

/// Runs the configured sweep. Infeasible or non-verifying cells are recorded
/// as failures; the sweep continues.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let (billing, fleet, demand) = config.models()?;
    let baseline = baseline_cost(&demand, &fleet, &billing)?;
    let baseline_peak = crate::model::power_profile(&demand.requests, &fleet)?.peak();
    let options = SolveOptions::with_tolerance(config.experiment.tolerance);

    let mut cells: Vec<(Mode, usize)> = Vec::new();
    for &mode in &config.experiment.modes {
        for &d in &config.experiment.d_values {
            cells.push((mode, d));
        }
    }
    cells.sort();
    cells.dedup();

    let mut runs = Vec::with_capacity(cells.len());
    for (mode, d_max) in cells {
        let outcome = run_cell(config, mode, d_max, &options);
        runs.push(RunRecord {
            mode,
            d_max,
            outcome,
        });
    }
    Ok(ExperimentReport {
        baseline_peak_kw: baseline_peak,
        baseline_cost_usd: baseline.total(),
        runs,
    })
}

fn run_cell(
    config: &ExperimentConfig,
    mode: Mode,
    d_max: usize,
    options: &SolveOptions,
) -> RunOutcome {
    let started = Instant::now();
    let attempt = (|| -> Result<RunOutcome> {
        let program = config.build_program(mode, d_max)?;
        let solution = solve(&program, options)?;
        let report = verify_solution(&solution, &program)?;
        if !report.passes(options.tolerance) {
            return Ok(RunOutcome::Failed {
                reason: format!(
                    "verification failed: max violation {:.3e}, objective gap {:.3e}",
                    report.max_violation(),
                    report.objective_gap()
                ),
            });
        }
        let peak = program.billed_peak_kw(&solution.schedule, solution.shutdown.as_ref())?;
        Ok(RunOutcome::Solved {
            peak_kw: peak,
            cost_usd: solution.cost.total(),
            reward_usd: solution.cost.reward,
            wear_usd: solution.cost.wear,
            profit_delta_usd: solution.cost.profit_delta(),
            solve_ms: started.elapsed().as_secs_f64() * 1e3,
            iterations: solution.diagnostics.iterations,
        })
    })();
    match attempt {
        Ok(outcome) => outcome,
        Err(e) => RunOutcome::Failed {
            reason: e.to_string(),
        },
    }
}

/// Renders the report as CSV: a header, the baseline row, one row per
/// successful run, and one trailing `# failed` comment line per failure.
/// All numeric fields round-trip exactly; `solve_ms` is wall-clock time and
/// is the only field expected to vary between identical runs.
pub fn render_report(report: &ExperimentReport) -> String {
    let mut out = String::new();
    out.push_str(
        "mode,D,peak_kw,peak_norm,cost_usd,cost_norm,reward_usd,wear_usd,profit_delta_usd,solve_ms\n",
    );
    let _ = writeln!(
        out,
        "baseline,0,{},1,{},1,0,0,0,0",
        report.baseline_peak_kw, report.baseline_cost_usd
    );
    for run in &report.runs {
        if let RunOutcome::Solved {
            peak_kw,
            cost_usd,
            reward_usd,
            wear_usd,
            profit_delta_usd,
            solve_ms,
            ..
        } = &run.outcome
        {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                run.mode,
                run.d_max,
                peak_kw,
                peak_kw / report.baseline_peak_kw,
                cost_usd,
                cost_usd / report.baseline_cost_usd,
                reward_usd,
                wear_usd,
                profit_delta_usd,
                solve_ms
            );
        }
    }
    for run in &report.runs {
        if let RunOutcome::Failed { reason } = &run.outcome {
            let _ = writeln!(out, "# failed,{},{}: {}", run.mode, run.d_max, reason);
        }
    }
    out
}

/// Writes [`render_report`] to a file.
pub fn export_report(report: &ExperimentReport, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, render_report(report)).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn demo_toml(tau: usize, modes: &str, d_values: &str) -> String {
        format!(
            r#"
[billing]
tau = {tau}
slot_hours = 1.0
energy_price = 0.05207
[[billing.windows]]
slots = "all"
price_per_kw = 15.59

[fleet]
servers = 30
idle_power_kw = 0.1
util_power_kw = 0.1
per_server_capacity = 20.0
pue = 1.2

[demand]
elastic_fraction = 0.5
reward_floor = 1e-3
reward_ceiling = 1e-2
[demand.synthetic]
base = 300.0
amplitude = 200.0
period = 12.0

[experiment]
modes = {modes}
d_values = {d_values}
seed = 7
"#
        )
    }

    #[test]
    fn config_round_trips_through_models() {
        let config = ExperimentConfig::from_toml_str(&demo_toml(24, "[\"base\"]", "[0, 2]"))
            .unwrap();
        let (billing, fleet, demand) = config.models().unwrap();
        assert_eq!(billing.tau(), 24);
        assert_eq!(fleet.servers, 30);
        assert_eq!(demand.tau(), 24);
        assert_eq!(billing.windows[0].slots.len(), 24);
    }

    #[test]
    fn config_rejects_contradictions() {
        let text = demo_toml(24, "[\"base\"]", "[]");
        assert!(matches!(
            ExperimentConfig::from_toml_str(&text),
            Err(Error::Config(_))
        ));
        let text = demo_toml(24, "[\"shutdown\"]", "[0]");
        assert!(matches!(
            ExperimentConfig::from_toml_str(&text),
            Err(Error::Config(_))
        ));
        let text = demo_toml(24, "[\"base\"]", "[0]") + "\n[demand]\ntrace = \"x.csv\"\n";
        assert!(ExperimentConfig::from_toml_str(&text).is_err());
    }

    #[test]
    fn degenerate_sweep_normalizes_to_one() {
        let config =
            ExperimentConfig::from_toml_str(&demo_toml(24, "[\"base\"]", "[0]")).unwrap();
        let report = run_experiment(&config).unwrap();
        assert_eq!(report.runs.len(), 1);
        match &report.runs[0].outcome {
            RunOutcome::Solved {
                peak_kw, cost_usd, ..
            } => {
                assert_eq!(peak_kw / report.baseline_peak_kw, 1.0);
                assert_eq!(cost_usd / report.baseline_cost_usd, 1.0);
            }
            RunOutcome::Failed { reason } => panic!("run failed: {reason}"),
        }
    }

    #[test]
    fn report_rows_are_sorted_and_parse_back() {
        let config =
            ExperimentConfig::from_toml_str(&demo_toml(24, "[\"base\"]", "[2, 0]")).unwrap();
        let report = run_experiment(&config).unwrap();
        let text = render_report(&report);
        let mut lines = text.lines();
        assert!(lines.next().unwrap().starts_with("mode,D,"));
        assert!(lines.next().unwrap().starts_with("baseline,0,"));
        let d_order: Vec<usize> = lines
            .filter(|l| l.starts_with("base,"))
            .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
            .collect();
        assert_eq!(d_order, vec![0, 2]);

        // numeric fields round-trip through shortest-repr formatting
        for line in text.lines().skip(1).filter(|l| !l.starts_with('#')) {
            let fields: Vec<&str> = line.split(',').collect();
            assert_eq!(fields.len(), 10);
            for f in &fields[2..] {
                let v: f64 = f.parse().unwrap();
                assert_relative_eq!(v, f.parse::<f64>().unwrap(), max_relative = 1e-15);
            }
        }
    }

    #[test]
    fn empty_sweep_renders_header_and_baseline_only() {
        let report = ExperimentReport {
            baseline_peak_kw: 44.4,
            baseline_cost_usd: 1001.87,
            runs: vec![],
        };
        let text = render_report(&report);
        assert_eq!(text.lines().count(), 2);
    }

    #[test]
    fn failed_runs_become_comment_rows() {
        let report = ExperimentReport {
            baseline_peak_kw: 1.0,
            baseline_cost_usd: 1.0,
            runs: vec![RunRecord {
                mode: Mode::Shutdown,
                d_max: 3,
                outcome: RunOutcome::Failed {
                    reason: "program infeasible".into(),
                },
            }],
        };
        let text = render_report(&report);
        assert!(text.lines().last().unwrap().starts_with("# failed,shutdown,3:"));
    }
}
