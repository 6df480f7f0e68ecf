//! The four subcommands: solve, sweep, compare, validate.

use std::path::Path;

use anyhow::{bail, Context, Result};

use cpumdp::doc::{ModelDoc, SolveDoc};
use cpumdp::model::{MdpModel, StateId};
use cpumdp::scenarios::{build_parameterized, ScenarioSpec};
use cpumdp::simulator::{
    aggregate, energy_savings, run_seed, run_trajectories, simulate_with_curve, value_stddev,
    Agent, SummaryStat,
};
use cpumdp::solver::{value_iteration, SolveResult};
use cpumdp::ProcessKind;

use crate::config::{ExperimentConfig, OutputFormat, ScenarioSection};
use crate::output::{fmt_f64, runs_csv, runs_json, write_artifact, CsvTable};

/// A parsed command invocation: merged configuration plus the sweep-level
/// selections that are not part of the configuration document.
pub struct Invocation {
    pub config: ExperimentConfig,
    /// Kinds a sweep-style command covers (one or both, fixed order).
    pub kinds: Vec<ProcessKind>,
    /// Explicit `--p` values replacing the built-in sweep list.
    pub p_list: Option<Vec<f64>>,
    pub include_p_half: bool,
}

fn build_checked(section: &ScenarioSection, spec: &ScenarioSpec) -> Result<MdpModel<f64>> {
    let model = build_parameterized::<f64>(spec, &section.rewards)?;
    let report = model.validate();
    if !report.is_ok() {
        bail!("model validation failed:\n{report}");
    }
    Ok(model)
}

fn solve_checked(config: &ExperimentConfig, model: &MdpModel<f64>) -> Result<SolveResult<f64>> {
    let result = value_iteration(model, config.solver.epsilon, config.solver.max_iter)?;
    if !result.converged {
        bail!(
            "value iteration did not converge within {} sweeps (epsilon {})",
            config.solver.max_iter,
            config.solver.epsilon
        );
    }
    Ok(result)
}

fn is_table_default(spec: &ScenarioSpec) -> bool {
    spec.n_states == 3
        && spec.p_change.is_none()
        && spec.p_change_add.is_none()
        && spec.p_change_remove.is_none()
}

fn history_csv(result: &SolveResult<f64>) -> String {
    let n = result.optimal_values.len();
    let mut header = vec!["iteration".to_string()];
    header.extend((0..n).map(|s| format!("v_s{s}")));
    let mut table = CsvTable::new(header);
    for (iteration, values) in result.history.iter().enumerate() {
        let mut row = vec![iteration.to_string()];
        row.extend(values.iter().map(fmt_f64));
        table.row(row);
    }
    table.render()
}

/// `solve`: build the configured scenario, run value iteration, and write
/// the convergence history, policy, summary, and model documents.
pub fn cmd_solve(inv: &Invocation) -> Result<()> {
    let config = &inv.config;
    let section = &config.scenario;
    let model = build_checked(section, &section.spec)?;
    let result = solve_checked(config, &model)?;

    let dir = &config.output.directory;
    let history_name = if is_table_default(&section.spec) {
        match section.spec.kind {
            ProcessKind::Sdr => "fig2_sdr_convergence.csv",
            ProcessKind::Sdn => "fig3_sdn_convergence.csv",
        }
    } else {
        "convergence.csv"
    };
    let doc = SolveDoc::from_result(&result);
    write_artifact(dir, history_name, &history_csv(&result))?;
    write_artifact(dir, "policy.json", &{
        let mut s = serde_json::to_string_pretty(&doc.policy).expect("map serializes");
        s.push('\n');
        s
    })?;
    write_artifact(dir, "summary.json", &doc.to_json_string())?;
    write_artifact(dir, "model.json", &ModelDoc::from_model(&model).to_json_string())?;

    println!(
        "solved {} ({} states): policy {}, {} iterations, epsilon {}",
        section.spec.kind,
        section.spec.n_states,
        result.policy,
        result.iterations,
        config.solver.epsilon
    );
    println!("wrote {history_name}, policy.json, summary.json, model.json to {}", dir.display());
    Ok(())
}

/// Sweep p values for one kind: the built-in list or the explicit one,
/// with 0.5 optionally inserted, ascending and deduplicated.
fn sweep_ps(inv: &Invocation, kind: ProcessKind) -> Vec<f64> {
    let mut ps = inv
        .p_list
        .clone()
        .unwrap_or_else(|| kind.sweep_probabilities().to_vec());
    if inv.include_p_half && !ps.contains(&0.5) {
        ps.push(0.5);
    }
    ps.sort_by(|a, b| a.partial_cmp(b).expect("finite probabilities"));
    ps.dedup();
    ps
}

fn spec_at(config: &ExperimentConfig, kind: ProcessKind, p: f64) -> ScenarioSpec {
    ScenarioSpec {
        kind,
        n_states: config.scenario.spec.n_states,
        p_change: Some(p),
        p_change_add: None,
        p_change_remove: None,
        gamma: config.scenario.spec.gamma,
    }
}

/// `sweep`: solve each sweep scenario and tabulate the optimal values and
/// their across-state standard deviation per change probability.
pub fn cmd_sweep(inv: &Invocation) -> Result<()> {
    let config = &inv.config;
    let n = config.scenario.spec.n_states;
    let mut header = vec!["kind".to_string(), "p_change".to_string()];
    header.extend((0..n).map(|s| format!("v_s{s}")));
    header.push("stddev".to_string());
    let mut table = CsvTable::new(header);

    #[derive(serde::Serialize)]
    struct SweepRow {
        kind: String,
        p_change: f64,
        values: Vec<f64>,
        stddev: f64,
    }
    let mut json_rows = Vec::new();

    for &kind in &inv.kinds {
        for p in sweep_ps(inv, kind) {
            let spec = spec_at(config, kind, p);
            let model = build_checked(&config.scenario, &spec)
                .with_context(|| format!("{kind} p={p}"))?;
            let result = solve_checked(config, &model)?;
            let stddev = value_stddev(&result.optimal_values)?;

            let mut row = vec![kind.label().to_string(), fmt_f64(p)];
            row.extend(result.optimal_values.iter().map(fmt_f64));
            row.push(fmt_f64(stddev));
            table.row(row);
            json_rows.push(SweepRow {
                kind: kind.label().to_string(),
                p_change: p,
                values: result.optimal_values.iter().collect(),
                stddev,
            });
        }
    }

    let dir = &config.output.directory;
    write_artifact(dir, "fig4_sweep_stddev.csv", &table.render())?;
    if config.output.format == OutputFormat::Json {
        let mut s = serde_json::to_string_pretty(&json_rows).expect("rows serialize");
        s.push('\n');
        write_artifact(dir, "sweep.json", &s)?;
    }
    println!(
        "swept {} scenario(s); wrote fig4_sweep_stddev.csv to {}",
        json_rows.len(),
        dir.display()
    );
    Ok(())
}

fn default_curve_p(kind: ProcessKind) -> f64 {
    match kind {
        ProcessKind::Sdr => 0.1,
        ProcessKind::Sdn => 0.7,
    }
}

fn stat_cells(vi: &SummaryStat<f64>, ras: &SummaryStat<f64>) -> [String; 4] {
    [
        fmt_f64(vi.mean),
        fmt_f64(ras.mean),
        fmt_f64(vi.std_dev),
        fmt_f64(ras.std_dev),
    ]
}

/// `compare`: Monte Carlo comparison of the solved policy against random
/// action selection, per sweep probability, plus a single-run cumulative
/// reward curve and an energy summary.
pub fn cmd_compare(inv: &Invocation) -> Result<()> {
    let config = &inv.config;
    let sim = &config.simulation;
    let init = StateId::new(config.init_state_for(config.scenario.spec.n_states));
    let dir = &config.output.directory;

    let comparison_header = [
        "kind", "p_change", "vi_mean", "ras_mean", "vi_std", "ras_std",
    ];
    let mut cpu_delta = CsvTable::new(comparison_header);
    let mut high_load = CsvTable::new(comparison_header);
    let mut energy = CsvTable::new([
        "kind",
        "p_change",
        "vi_mean_delta",
        "ras_mean_delta",
        "cores_saved",
        "kwh_per_day",
    ]);
    let mut curves = CsvTable::new([
        "kind",
        "p_change",
        "step",
        "vi_cum_raw",
        "vi_cum_discounted",
        "ras_cum_raw",
        "ras_cum_discounted",
    ]);

    for &kind in &inv.kinds {
        for p in sweep_ps(inv, kind) {
            let spec = spec_at(config, kind, p);
            let model = build_checked(&config.scenario, &spec)
                .with_context(|| format!("{kind} p={p}"))?;
            let result = solve_checked(config, &model)?;

            // Paired seeding: both agents replay the same per-run
            // environment streams; the random agent draws its coin flips
            // from a separate stream of the same seeds.
            let vi_agent = Agent::FixedPolicy(result.policy.clone());
            let vi_runs =
                run_trajectories(&model, &vi_agent, sim.runs, sim.steps, init, sim.master_seed)?;
            let ras_runs =
                run_trajectories(&model, &Agent::Ras, sim.runs, sim.steps, init, sim.master_seed)?;
            let vi = aggregate(&vi_runs)?;
            let ras = aggregate(&ras_runs)?;

            let mut delta_row = vec![kind.label().to_string(), fmt_f64(p)];
            delta_row.extend(stat_cells(&vi.net_core_delta, &ras.net_core_delta));
            cpu_delta.row(delta_row);

            let mut frac_row = vec![kind.label().to_string(), fmt_f64(p)];
            frac_row.extend(stat_cells(&vi.frac_highest, &ras.frac_highest));
            high_load.row(frac_row);

            let cores_saved = ras.net_core_delta.mean - vi.net_core_delta.mean;
            energy.row([
                kind.label().to_string(),
                fmt_f64(p),
                fmt_f64(vi.net_core_delta.mean),
                fmt_f64(ras.net_core_delta.mean),
                fmt_f64(cores_saved),
                fmt_f64(energy_savings(cores_saved, &config.energy)),
            ]);

            for (agent_name, runs) in [("vi", &vi_runs), ("ras", &ras_runs)] {
                let (name, contents) = match config.output.format {
                    OutputFormat::Csv => (
                        format!("runs_{kind}_p{p}_{agent_name}.csv"),
                        runs_csv(runs),
                    ),
                    OutputFormat::Json => (
                        format!("runs_{kind}_p{p}_{agent_name}.json"),
                        runs_json(runs),
                    ),
                };
                write_artifact(dir, &name, &contents)?;
            }
        }

        // Single-run cumulative reward curves at the configured probability.
        let curve_p = sim.curve_p.unwrap_or_else(|| default_curve_p(kind));
        let spec = spec_at(config, kind, curve_p);
        let model = build_checked(&config.scenario, &spec)
            .with_context(|| format!("{kind} curve at p={curve_p}"))?;
        let result = solve_checked(config, &model)?;
        let seed = run_seed(sim.master_seed, 0);
        let vi_curve = simulate_with_curve(
            &model,
            &Agent::FixedPolicy(result.policy.clone()),
            sim.steps,
            init,
            seed,
        )?;
        let ras_curve = simulate_with_curve(&model, &Agent::Ras, sim.steps, init, seed)?;
        let vi_points = vi_curve.reward_curve.as_ref().expect("curve recorded");
        let ras_points = ras_curve.reward_curve.as_ref().expect("curve recorded");
        for (vi_point, ras_point) in vi_points.iter().zip(ras_points) {
            curves.row([
                kind.label().to_string(),
                fmt_f64(curve_p),
                vi_point.step.to_string(),
                fmt_f64(vi_point.cumulative_raw),
                fmt_f64(vi_point.cumulative_discounted),
                fmt_f64(ras_point.cumulative_raw),
                fmt_f64(ras_point.cumulative_discounted),
            ]);
        }
    }

    write_artifact(dir, "fig5_reward_curves.csv", &curves.render())?;
    write_artifact(dir, "fig6_cpu_delta.csv", &cpu_delta.render())?;
    write_artifact(dir, "fig7_high_load_frac.csv", &high_load.render())?;
    write_artifact(dir, "energy_summary.csv", &energy.render())?;
    println!(
        "compared value-iteration policies against random action selection \
         ({} runs x {} steps per point, seed {})",
        sim.runs, sim.steps, sim.master_seed
    );
    println!(
        "wrote fig5_reward_curves.csv, fig6_cpu_delta.csv, fig7_high_load_frac.csv, \
         energy_summary.csv and per-run dumps to {}",
        dir.display()
    );
    Ok(())
}

/// `validate`: check a model document, or the configured scenario, against
/// the model invariants. Violations are printed and set a nonzero exit.
pub fn cmd_validate(inv: &Invocation, model_path: Option<&Path>) -> Result<()> {
    let model: MdpModel<f64> = match model_path {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading model document {}", path.display()))?;
            ModelDoc::from_json_str(&text)
                .with_context(|| format!("parsing model document {}", path.display()))?
                .to_model()
                .with_context(|| format!("building model from {}", path.display()))?
        }
        None => build_parameterized(&inv.config.scenario.spec, &inv.config.scenario.rewards)?,
    };
    let report = model.validate();
    print!("{report}");
    if report.is_ok() {
        println!();
        Ok(())
    } else {
        bail!("{} violation(s) found", report.violations.len());
    }
}
