use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use spillbound::exposure::build_propensity_classes;
use spillbound::intervals::{
    analyze, beta_adj_interval, estimate, AnalysisSpec, BetaAdjBounds, IntervalConfig, NamedEstimand,
    ThetaConstraint,
};
use spillbound::report::{render_csv, render_estimates_csv, render_estimates_text, render_text, Scale};
use spillbound::sim::{
    adversarial_coverage, coverage_study, gen_generic, gen_vaccinesim, BetaAdjProcedure, CoverageReport,
    GeneralProcedure, GenericPopulation, GenericSpec, Population, Tau1Procedure,
    VaccineSimParams,
};
use spillbound::solver::{brute_force, solve_bnb, solve_relaxed};
use spillbound::{
    expand_aggregate, load_experiment, write_experiment, AggregateTable, BoundProblem, DesignKind, Estimand,
    ExperimentData, IntervalResult, Schema, SolveResult, SolverConfig, SplitMethod, WeightScheme,
};

/// Exit status for unreadable or missing inputs.
const EXIT_INPUT: u8 = 2;

#[derive(Parser)]
#[command(name = "spillbound", version, about = "Randomization-based prediction intervals under interference")]
struct Cli {
    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Point estimates and bias bounds.
    Estimate(AnalysisArgs),
    /// Point estimates, bias bounds and prediction intervals.
    Interval(IntervalArgs),
    /// Write a synthetic experiment to CSV.
    Simulate(SimulateArgs),
    /// Coverage study on a synthetic population.
    Coverage(CoverageArgs),
    /// Solve a bound problem file.
    Solve(SolveArgs),
}

#[derive(Args, Clone, Serialize)]
struct InputArgs {
    /// Aggregate count table (group,arm,events,size).
    #[arg(long, conflicts_with = "data")]
    aggregate: Option<PathBuf>,
    /// Unit-level CSV.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Edge list CSV (src,dst) for --data.
    #[arg(long, requires = "data")]
    edges: Option<PathBuf>,
    #[arg(long, default_value = "y")]
    outcome: String,
    #[arg(long, default_value = "x")]
    treatment: String,
    /// Column holding a known counterfactual (simulated data).
    #[arg(long)]
    theta_column: Option<String>,
    /// Add the reverse of every listed edge.
    #[arg(long)]
    undirected: bool,
}

#[derive(Args, Clone, Serialize)]
struct AnalysisArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Analysis spec (JSON); defaults to the difference in means under srs.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Assume mean(theta) <= CAP.
    #[arg(long)]
    theta_mean_cap: Option<f64>,
    /// Coverage level of the interval (z = Φ⁻¹((1+level)/2)).
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    /// Monte Carlo replications for moments without a closed form.
    #[arg(long, default_value_t = spillbound::moments::DEFAULT_REPLICATIONS)]
    replications: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
    format: OutputFormat,
    #[arg(long, value_enum, default_value_t = ScaleArg::Raw)]
    scale: ScaleArg,
    /// Decimal places in text tables.
    #[arg(long, default_value_t = 3)]
    digits: usize,
    /// Write to this file instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args, Clone, Serialize)]
struct SolverArgs {
    #[arg(long, value_enum, default_value_t = SplitArg::SdpLite)]
    split: SplitArg,
    /// Maximum branch-and-bound relaxations per endpoint.
    #[arg(long, default_value_t = 20_000)]
    node_budget: usize,
    /// Seconds per endpoint; 0 disables the limit.
    #[arg(long, default_value_t = 60.0)]
    time_budget: f64,
}

impl SolverArgs {
    fn config(&self) -> SolverConfig {
        SolverConfig {
            split: self.split.into(),
            node_budget: self.node_budget,
            time_budget: (self.time_budget > 0.0).then_some(self.time_budget),
            ..SolverConfig::default()
        }
    }
}

#[derive(Args, Clone, Serialize)]
struct IntervalArgs {
    #[command(flatten)]
    analysis: AnalysisArgs,
    #[command(flatten)]
    solver: SolverArgs,
    /// Solve both endpoints by enumeration (small problems only).
    #[arg(long)]
    brute_force: bool,
    /// Move the interval endpoints out by the bias bound.
    #[arg(long)]
    widen_by_bias: bool,
    /// Also report the interval width under every split method.
    #[arg(long)]
    all_splits: bool,
    /// Use the closed-form design bounds for beta_adj estimands (srs only).
    #[arg(long)]
    beta_adj_closed_form: bool,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum OutputFormat {
    Text,
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum ScaleArg {
    Raw,
    Percent,
    PerThousand,
}

impl From<ScaleArg> for Scale {
    fn from(s: ScaleArg) -> Scale {
        match s {
            ScaleArg::Raw => Scale::Raw,
            ScaleArg::Percent => Scale::Percent,
            ScaleArg::PerThousand => Scale::PerThousand,
        }
    }
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum SplitArg {
    Gershgorin,
    EigShift,
    SdpLite,
}

impl From<SplitArg> for SplitMethod {
    fn from(s: SplitArg) -> SplitMethod {
        match s {
            SplitArg::Gershgorin => SplitMethod::Gershgorin,
            SplitArg::EigShift => SplitMethod::EigShift,
            SplitArg::SdpLite => SplitMethod::SdpLite,
        }
    }
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Model {
    /// Vaccine-trial model with neighborhood spillovers.
    Vaccine,
    /// Generic network population (requires --params).
    Generic,
}

#[derive(Args, Clone, Serialize)]
struct ModelArgs {
    #[arg(long, value_enum, default_value_t = Model::Vaccine)]
    model: Model,
    /// Model parameters (JSON); vaccine defaults are used when omitted.
    #[arg(long)]
    params: Option<PathBuf>,
    /// Treatment probability of the generic model's observed draw.
    #[arg(long, default_value_t = 0.5)]
    rho: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Clone, Serialize)]
struct SimulateArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Unit CSV to write (y, x, theta, covariates).
    #[arg(long)]
    units: PathBuf,
    /// Edge CSV to write.
    #[arg(long)]
    edges: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum ProcedureArg {
    /// Moments plus the bound solver.
    General,
    /// Closed forms: tau1 and beta_adj under srs.
    ClosedForm,
}

#[derive(Args, Clone, Serialize)]
struct CoverageArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Analysis spec; the design is resolved on the reference experiment.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Estimand name within the spec (default: the first).
    #[arg(long)]
    estimand: Option<String>,
    #[arg(long, value_enum, default_value_t = ProcedureArg::General)]
    procedure: ProcedureArg,
    #[arg(long, default_value_t = 1_000)]
    reps: usize,
    #[arg(long, default_value_t = 0.90)]
    level: f64,
    #[arg(long, default_value_t = spillbound::moments::DEFAULT_REPLICATIONS)]
    replications: usize,
    #[arg(long)]
    theta_mean_cap: Option<f64>,
    /// Replace theta by the maximizer of the upper error bound (generic model).
    #[arg(long)]
    adversarial: bool,
    #[command(flatten)]
    solver: SolverArgs,
    /// Coverage CSV destination (default: stdout).
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args, Clone, Serialize)]
struct SolveArgs {
    /// Problem file (JSON with bar_w, q, z, sense and optional constraints).
    #[arg(long)]
    problem: PathBuf,
    #[arg(long, conflicts_with = "relaxed")]
    brute_force: bool,
    /// Report only the certified relaxation bound.
    #[arg(long)]
    relaxed: bool,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
    format: OutputFormat,
}

/// A named input that does not exist or cannot be read.
#[derive(Debug)]
struct InputError(PathBuf, String);

impl std::fmt::Display for InputError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "cannot read input {}: {}", self.0.display(), self.1)
    }
}

impl std::error::Error for InputError {}

fn require(path: &Path) -> anyhow::Result<()> {
    if !path.is_file() {
        return Err(InputError(path.to_path_buf(), "no such file".into()).into());
    }
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    require(path)?;
    let text = std::fs::read_to_string(path).map_err(|e| InputError(path.to_path_buf(), e.to_string()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn load_input(input: &InputArgs) -> anyhow::Result<ExperimentData> {
    if let Some(path) = &input.aggregate {
        require(path)?;
        let table = AggregateTable::load(path)?;
        return Ok(expand_aggregate(&table)?);
    }
    let Some(path) = &input.data else {
        bail!("one of --aggregate or --data is required");
    };
    require(path)?;
    if let Some(e) = &input.edges {
        require(e)?;
    }
    let schema = Schema {
        outcome: input.outcome.clone(),
        treatment: input.treatment.clone(),
        theta: input.theta_column.clone(),
        undirected: input.undirected,
        ..Schema::default()
    };
    Ok(load_experiment(path, input.edges.as_deref(), &schema)?)
}

fn default_spec() -> AnalysisSpec {
    AnalysisSpec {
        design: Default::default(),
        estimands: vec![NamedEstimand {
            name: "tau1".into(),
            estimand: Estimand::Tau1,
        }],
        constraints: Vec::new(),
    }
}

fn load_spec(path: Option<&Path>) -> anyhow::Result<AnalysisSpec> {
    match path {
        Some(p) => read_json(p),
        None => Ok(default_spec()),
    }
}

fn interval_config(a: &AnalysisArgs) -> IntervalConfig {
    IntervalConfig {
        level: a.level,
        replications: a.replications,
        seed: a.seed,
        constraints: a
            .theta_mean_cap
            .map(|cap| vec![ThetaConstraint::MeanCap { cap }])
            .unwrap_or_default(),
        ..IntervalConfig::default()
    }
}

/// Output sink honoring `--output`.
fn sink(output: Option<&Path>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match output {
        Some(p) => Box::new(std::io::BufWriter::new(
            std::fs::File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn config_line<T: Serialize>(config: &T) -> anyhow::Result<String> {
    Ok(format!("# config: {}\n", serde_json::to_string(config)?))
}

#[derive(Serialize)]
struct Resolved<'a, A: Serialize> {
    command: &'a str,
    args: &'a A,
    spec: &'a AnalysisSpec,
    interval: &'a IntervalConfig,
}

fn run_estimate(a: &AnalysisArgs) -> anyhow::Result<()> {
    let data = load_input(&a.input)?;
    let spec = load_spec(a.spec.as_deref())?;
    let config = interval_config(a);
    let rows = estimate(&spec, &data, &config)?;
    let resolved = Resolved {
        command: "estimate",
        args: a,
        spec: &spec,
        interval: &config,
    };
    let mut out = sink(a.output.as_deref())?;
    match a.format {
        OutputFormat::Json => {
            let doc = serde_json::json!({ "config": resolved, "results": rows });
            writeln!(out, "{}", serde_json::to_string_pretty(&doc)?)?;
        }
        OutputFormat::Text => {
            out.write_all(config_line(&resolved)?.as_bytes())?;
            out.write_all(render_estimates_text(&rows, a.scale.into(), a.digits).as_bytes())?;
        }
        OutputFormat::Csv => {
            out.write_all(config_line(&resolved)?.as_bytes())?;
            out.write_all(render_estimates_csv(&rows, a.scale.into()).as_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

fn intervals_for(
    spec: &AnalysisSpec,
    data: &ExperimentData,
    config: &IntervalConfig,
    closed_form_beta_adj: bool,
) -> anyhow::Result<Vec<IntervalResult>> {
    let mut out = Vec::with_capacity(spec.estimands.len());
    for e in &spec.estimands {
        let single = AnalysisSpec {
            estimands: vec![e.clone()],
            ..spec.clone()
        };
        match (&e.estimand, closed_form_beta_adj) {
            (Estimand::BetaAdj { classes }, true) => {
                let classes = build_propensity_classes(data, classes)?;
                let mut cfg = config.clone();
                cfg.constraints.extend(spec.constraints.iter().cloned());
                let mut r = beta_adj_interval(data, &classes, &cfg)?;
                r.estimand = e.name.clone();
                out.push(r);
            }
            _ => out.extend(analyze(&single, data, config)?),
        }
    }
    Ok(out)
}

#[derive(Serialize)]
struct SplitWidths {
    estimand: String,
    widths: Vec<(String, f64)>,
}

fn run_interval(a: &IntervalArgs) -> anyhow::Result<()> {
    let data = load_input(&a.analysis.input)?;
    let spec = load_spec(a.analysis.spec.as_deref())?;
    let config = IntervalConfig {
        solver: a.solver.config(),
        brute_force: a.brute_force,
        widen_by_bias: a.widen_by_bias,
        ..interval_config(&a.analysis)
    };
    let results = intervals_for(&spec, &data, &config, a.beta_adj_closed_form)?;
    let widths = if a.all_splits {
        let mut per: Vec<SplitWidths> = results
            .iter()
            .map(|r| SplitWidths {
                estimand: r.estimand.clone(),
                widths: Vec::new(),
            })
            .collect();
        for method in SplitMethod::ALL {
            let mut cfg = config.clone();
            cfg.solver.split = method;
            cfg.brute_force = false;
            for (row, r) in per.iter_mut().zip(intervals_for(&spec, &data, &cfg, a.beta_adj_closed_form)?) {
                row.widths.push((method.name().to_string(), r.interval.1 - r.interval.0));
            }
        }
        Some(per)
    } else {
        None
    };
    let resolved = Resolved {
        command: "interval",
        args: a,
        spec: &spec,
        interval: &config,
    };
    let scale: Scale = a.analysis.scale.into();
    let mut out = sink(a.analysis.output.as_deref())?;
    match a.analysis.format {
        OutputFormat::Json => {
            let doc = serde_json::json!({ "config": resolved, "results": results, "split_widths": widths });
            writeln!(out, "{}", serde_json::to_string_pretty(&doc)?)?;
        }
        OutputFormat::Csv => {
            out.write_all(config_line(&resolved)?.as_bytes())?;
            out.write_all(render_csv(&results, scale).as_bytes())?;
        }
        OutputFormat::Text => {
            out.write_all(config_line(&resolved)?.as_bytes())?;
            out.write_all(render_text(&results, scale, a.analysis.digits, None).as_bytes())?;
            if let Some(r) = results.first() {
                writeln!(
                    out,
                    "# level {} uses z = {:.6} (alpha = {:.4} per endpoint)",
                    r.level, r.z, r.alpha
                )?;
            }
            for r in &results {
                writeln!(
                    out,
                    "# {}: U {} ({} nodes), L {} ({} nodes), split {}, moments {}",
                    r.estimand,
                    r.upper.status.name(),
                    r.upper.nodes,
                    r.lower.status.name(),
                    r.lower.nodes,
                    r.split.map_or("none", SplitMethod::name),
                    r.moments
                )?;
            }
            if let Some(per) = &widths {
                writeln!(out, "# interval width by split method:")?;
                for row in per {
                    let cells: Vec<String> = row
                        .widths
                        .iter()
                        .map(|(m, w)| format!("{m} {:.*}", a.analysis.digits, w * scale.factor()))
                        .collect();
                    writeln!(out, "#   {}: {}", row.estimand, cells.join(", "))?;
                }
            }
        }
    }
    out.flush()?;
    Ok(())
}

enum SimPopulation {
    Vaccine(spillbound::sim::VaccinePopulation),
    Generic(GenericPopulation),
}

impl SimPopulation {
    fn as_dyn(&self) -> &dyn Population {
        match self {
            SimPopulation::Vaccine(p) => p,
            SimPopulation::Generic(p) => p,
        }
    }
}

fn build_population(m: &ModelArgs) -> anyhow::Result<(SimPopulation, ExperimentData, serde_json::Value)> {
    match m.model {
        Model::Vaccine => {
            let params: VaccineSimParams = match &m.params {
                Some(p) => read_json(p)?,
                None => VaccineSimParams::default(),
            };
            let (pop, data) = gen_vaccinesim(&params, m.seed)?;
            Ok((SimPopulation::Vaccine(pop), data, serde_json::to_value(&params)?))
        }
        Model::Generic => {
            let path = m
                .params
                .as_ref()
                .ok_or_else(|| anyhow!("--model generic needs --params"))?;
            let spec: GenericSpec = read_json(path)?;
            let design = spillbound::design::DesignDescriptor::bernoulli(m.rho, m.seed);
            let (pop, data) = gen_generic(&spec, &design, m.seed)?;
            Ok((SimPopulation::Generic(pop), data, serde_json::to_value(&spec)?))
        }
    }
}

fn run_simulate(a: &SimulateArgs) -> anyhow::Result<()> {
    let (_, data, params) = build_population(&a.model)?;
    write_experiment(&data, &a.units, a.edges.as_deref())?;
    let config = serde_json::json!({ "command": "simulate", "args": a, "params": params });
    let mut out = std::io::stdout().lock();
    out.write_all(config_line(&config)?.as_bytes())?;
    writeln!(
        out,
        "wrote {} units ({} treated, {} edges) to {}",
        data.n_units(),
        data.n_treated(),
        data.network().n_edges(),
        a.units.display()
    )?;
    Ok(())
}

fn run_coverage(a: &CoverageArgs) -> anyhow::Result<()> {
    if a.adversarial && !matches!(a.procedure, ProcedureArg::General) {
        bail!("--adversarial needs --procedure general");
    }
    let (pop, reference, params) = build_population(&a.model)?;
    let spec = load_spec(a.spec.as_deref())?;
    let named = match &a.estimand {
        Some(name) => spec
            .estimands
            .iter()
            .find(|e| &e.name == name)
            .ok_or_else(|| anyhow!("estimand `{name}` not in spec"))?,
        None => spec.estimands.first().ok_or_else(|| anyhow!("spec lists no estimands"))?,
    };
    let design = spec.design.resolve(&reference, a.model.seed)?;
    let mut config = IntervalConfig {
        level: a.level,
        replications: a.replications,
        seed: a.model.seed,
        solver: a.solver.config(),
        constraints: spec.constraints.clone(),
        ..IntervalConfig::default()
    };
    if let Some(cap) = a.theta_mean_cap {
        config.constraints.push(ThetaConstraint::MeanCap { cap });
    }
    let srs = matches!(design.kind, DesignKind::Srs { .. });
    let report: CoverageReport = match (a.procedure, &named.estimand) {
        (ProcedureArg::ClosedForm, Estimand::Tau1) if srs => {
            let cap = match config.constraints.as_slice() {
                [] => None,
                [ThetaConstraint::MeanCap { cap }] => Some(*cap),
                _ => bail!("closed-form tau1 accepts at most a mean cap"),
            };
            let proc_ = Tau1Procedure {
                level: a.level,
                theta_mean_cap: cap,
            };
            coverage_study(pop.as_dyn(), &design, &proc_, a.reps, a.level, a.model.seed)?
        }
        (ProcedureArg::ClosedForm, Estimand::BetaAdj { classes }) if srs => {
            let classes = build_propensity_classes(&reference, classes)?;
            let bounds = BetaAdjBounds::new(reference.network(), &classes, reference.n_treated(), &config)?;
            let proc_ = BetaAdjProcedure { bounds, classes };
            coverage_study(pop.as_dyn(), &design, &proc_, a.reps, a.level, a.model.seed)?
        }
        (ProcedureArg::ClosedForm, _) => bail!("closed-form procedures cover tau1 and beta_adj under srs only"),
        (ProcedureArg::General, estimand) => {
            let scheme = WeightScheme::new(&named.name, estimand.clone(), &reference)?;
            let proc_ = GeneralProcedure::new(scheme, design.clone(), config.clone());
            if a.adversarial {
                let SimPopulation::Generic(g) = &pop else {
                    bail!("--adversarial needs --model generic");
                };
                adversarial_coverage(g, &proc_, &reference, a.reps, a.model.seed)?.1
            } else {
                coverage_study(pop.as_dyn(), &design, &proc_, a.reps, a.level, a.model.seed)?
            }
        }
    };
    let resolved = serde_json::json!({
        "command": "coverage",
        "args": a,
        "params": params,
        "spec": spec,
        "design": design,
        "interval": config,
    });
    let mut out = sink(a.output.as_deref())?;
    out.write_all(config_line(&resolved)?.as_bytes())?;
    report.write_csv(&mut out)?;
    out.flush()?;
    eprintln!(
        "{}: coverage {:.2}% ± {:.2} over {} replications ({} failed), nominal {:.0}%, mean width {:.4}, one-sided binomial p = {:.3}",
        report.procedure,
        100.0 * report.coverage(),
        100.0 * report.standard_error(),
        report.rows.len(),
        report.failures.len(),
        100.0 * report.nominal,
        report.mean_width(),
        report.binomial_p_value()
    );
    Ok(())
}

#[derive(Serialize)]
struct SolveOutput<'a> {
    config: serde_json::Value,
    mode: &'a str,
    result: &'a SolveResult,
}

fn run_solve(a: &SolveArgs) -> anyhow::Result<()> {
    require(&a.problem)?;
    let text = std::fs::read_to_string(&a.problem).map_err(|e| InputError(a.problem.clone(), e.to_string()))?;
    let mut problem = BoundProblem::from_json(&text).with_context(|| format!("parsing {}", a.problem.display()))?;
    let cfg = a.solver.config();
    let (mode, result) = if a.brute_force {
        ("brute-force", brute_force(&problem)?)
    } else {
        if problem.split.is_none() {
            problem = problem.with_split(cfg.split)?;
        }
        if a.relaxed {
            ("relaxed", solve_relaxed(&problem)?)
        } else {
            ("branch-and-bound", solve_bnb(&problem, &cfg)?)
        }
    };
    let config = serde_json::json!({ "command": "solve", "args": a, "solver": cfg });
    let mut out = std::io::stdout().lock();
    match a.format {
        OutputFormat::Json => {
            let doc = SolveOutput {
                config,
                mode,
                result: &result,
            };
            writeln!(out, "{}", serde_json::to_string_pretty(&doc)?)?;
        }
        OutputFormat::Csv => {
            out.write_all(config_line(&config)?.as_bytes())?;
            writeln!(out, "mode,value,status,nodes,gap,incumbent_value")?;
            writeln!(
                out,
                "{mode},{},{},{},{},{}",
                result.value,
                result.status.name(),
                result.nodes,
                result.gap,
                result.incumbent_value
            )?;
        }
        OutputFormat::Text => {
            out.write_all(config_line(&config)?.as_bytes())?;
            writeln!(out, "mode:      {mode}")?;
            writeln!(out, "value:     {:.10}", result.value)?;
            writeln!(out, "status:    {}", result.status.name())?;
            writeln!(out, "nodes:     {}", result.nodes)?;
            writeln!(out, "gap:       {:.3e}", result.gap)?;
            if !result.incumbent.is_empty() {
                let t: Vec<String> = result.incumbent.iter().map(u64::to_string).collect();
                writeln!(out, "incumbent: [{}] (value {:.10})", t.join(", "), result.incumbent_value)?;
            }
        }
    }
    Ok(())
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the worker pool")?;
    }
    match &cli.command {
        Command::Estimate(a) => run_estimate(a),
        Command::Interval(a) => run_interval(a),
        Command::Simulate(a) => run_simulate(a),
        Command::Coverage(a) => run_coverage(a),
        Command::Solve(a) => run_solve(a),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let input = err.chain().any(|e| {
        e.is::<InputError>() || matches!(e.downcast_ref::<spillbound::Error>(), Some(spillbound::Error::Io { .. }))
    });
    if input {
        EXIT_INPUT
    } else {
        1
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
