use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use policy_choice::comparison::{
    dominance_class, equivalence_report, extremeness_check, ratio_table, TwoRouteScenario,
};
use policy_choice::estimation::{fit, simulate, FitOptions, Model, ObservationSet};
use policy_choice::io::{
    format_sig, load_network, parse_observations, policy_records, ObservationRecord, StateRecord,
};
use policy_choice::recursive::{sequence_probabilities, solve_value_functions_from};
use policy_choice::state_space::StateSpace;
use policy_choice::{
    enumerate_policies, origin_states, policy_expected_utility, Attribute, LinkId, LinkUtilitySpec,
    NonRecursiveModel, State, StdNetwork, SupportPointSet, DEFAULT_POLICY_CAP,
};

#[derive(Parser)]
#[command(
    name = "policy-choice",
    version,
    about = "Routing-policy choice models on stochastic time-dependent networks"
)]
#[command(allow_negative_numbers = true)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Random seed for simulation.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Logit scale parameter.
    #[arg(long, global = true, default_value_t = 1.0)]
    mu: f64,
    /// Comma-separated utility coefficients, one per attribute.
    #[arg(long, global = true, value_delimiter = ',', default_value = "-1")]
    beta: Vec<f64>,
    /// Comma-separated attributes: travel_time, link_count or link:<id>.
    #[arg(
        long,
        global = true,
        value_delimiter = ',',
        default_value = "travel_time"
    )]
    attributes: Vec<String>,
    /// Largest policy choice set to enumerate.
    #[arg(long, global = true, default_value_t = DEFAULT_POLICY_CAP)]
    cap_policies: usize,
    /// Write the result here instead of standard output.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Check a network file and report its size.
    Validate { network: PathBuf },
    /// List every routing policy from each origin state as JSON.
    EnumeratePolicies { network: PathBuf },
    /// Choice, policy, sequence and path probabilities as CSV.
    Predict {
        network: PathBuf,
        #[arg(long, value_enum, default_value_t = ModelChoice::Both)]
        model: ModelChoice,
    },
    /// Draw observed trajectories as JSON observation records.
    Simulate {
        network: PathBuf,
        #[arg(long, value_enum, default_value_t = ModelChoice::Recursive)]
        model: ModelChoice,
        #[arg(long, default_value_t = 1000)]
        count: usize,
    },
    /// Fit the coefficients by maximum likelihood, starting from --beta.
    Estimate {
        network: PathBuf,
        observations: PathBuf,
        #[arg(long, value_enum, default_value_t = ModelChoice::Both)]
        model: ModelChoice,
        /// Print the result as JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Two-route odds ratios, dominance and extremeness as CSV, or the model
    /// agreement report for a network.
    Compare(CompareArgs),
}

#[derive(Args)]
struct CompareArgs {
    /// Report model agreement on this network over a range of scales instead.
    #[arg(long, conflicts_with = "sweep")]
    network: Option<PathBuf>,
    #[arg(long, default_value_t = 3.0)]
    a: f64,
    #[arg(long, default_value_t = 2.0)]
    b: f64,
    #[arg(long, default_value_t = -1.0)]
    x: f64,
    #[arg(long, default_value_t = 0.0)]
    y: f64,
    #[arg(long, default_value_t = 0.5)]
    p: f64,
    /// Evaluate a grid over x, y and p for the given a and b.
    #[arg(long)]
    sweep: bool,
    /// Grid as lo:hi:count. Defaults to -0.9a:5:12.
    #[arg(long)]
    x_range: Option<String>,
    /// Grid as lo:hi:count. Defaults to -0.9b:5:12.
    #[arg(long)]
    y_range: Option<String>,
    /// Grid as lo:hi:count.
    #[arg(long, default_value = "0.05:0.95:5")]
    p_range: String,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModelChoice {
    Recursive,
    Nonrecursive,
    Both,
}

impl ModelChoice {
    fn models(self) -> Vec<Model> {
        match self {
            Self::Recursive => vec![Model::Recursive],
            Self::Nonrecursive => vec![Model::NonRecursive],
            Self::Both => vec![Model::Recursive, Model::NonRecursive],
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    let g = &cli.global;
    if !(g.mu.is_finite() && g.mu > 0.0) {
        bail!("--mu must be positive, got {}", g.mu);
    }
    if g.cap_policies == 0 {
        bail!("--cap-policies must be positive");
    }
    let mut out: Box<dyn Write> = match &g.output {
        Some(path) => Box::new(io::BufWriter::new(
            fs::File::create(path).with_context(|| format!("cannot create {}", path.display()))?,
        )),
        None => Box::new(io::BufWriter::new(io::stdout().lock())),
    };
    match &cli.command {
        Command::Validate { network } => validate(network, g, &mut out)?,
        Command::EnumeratePolicies { network } => enumerate(network, g, &mut out)?,
        Command::Predict { network, model } => predict(network, *model, g, &mut out)?,
        Command::Simulate {
            network,
            model,
            count,
        } => {
            let [model] = model.models()[..] else {
                bail!("simulate needs a single model: recursive or nonrecursive");
            };
            let (net, spp) = read_network(network)?;
            let seqs = simulate(
                model,
                &net,
                &spp,
                &utility(g)?,
                *count,
                g.seed,
                g.cap_policies,
            )?;
            let records: Vec<ObservationRecord> = seqs
                .iter()
                .enumerate()
                .map(|(i, s)| ObservationRecord::from_sequence(format!("t{i}"), s))
                .collect();
            serde_json::to_writer_pretty(&mut out, &records)?;
            writeln!(out)?;
        }
        Command::Estimate {
            network,
            observations,
            model,
            json,
        } => estimate(network, observations, *model, *json, g, &mut out)?,
        Command::Compare(args) => compare(args, g, &mut out)?,
    }
    out.flush()?;
    Ok(())
}

fn read_network(path: &Path) -> Result<(StdNetwork, SupportPointSet)> {
    let text =
        fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    load_network(&text).with_context(|| format!("invalid network {}", path.display()))
}

fn parse_attribute(s: &str) -> Result<Attribute> {
    match s.trim() {
        "travel_time" => Ok(Attribute::TravelTime),
        "link_count" => Ok(Attribute::LinkCount),
        other => match other.strip_prefix("link:").map(str::parse::<u32>) {
            Some(Ok(id)) => Ok(Attribute::LinkIndicator { link: LinkId(id) }),
            _ => {
                bail!("unknown attribute {other:?}; expected travel_time, link_count or link:<id>")
            }
        },
    }
}

fn attribute_name(a: &Attribute) -> String {
    match a {
        Attribute::TravelTime => "travel_time".into(),
        Attribute::LinkCount => "link_count".into(),
        Attribute::LinkIndicator { link } => format!("link:{link}"),
    }
}

fn utility(g: &Global) -> Result<LinkUtilitySpec> {
    let attributes = g
        .attributes
        .iter()
        .map(|s| parse_attribute(s))
        .collect::<Result<Vec<_>>>()?;
    Ok(LinkUtilitySpec::new(g.beta.clone(), attributes, g.mu)?)
}

fn validate(path: &Path, g: &Global, out: &mut dyn Write) -> Result<()> {
    let (net, spp) = read_network(path)?;
    let u = utility(g)?;
    let space = StateSpace::build(&net, &spp, &origin_states(&net, &spp), u.attributes())?;
    writeln!(
        out,
        "valid: {} links, {} support points, {} periods, {} reachable states",
        net.link_count(),
        spp.len(),
        spp.periods(),
        space.len()
    )?;
    Ok(())
}

fn enumerate(path: &Path, g: &Global, out: &mut dyn Write) -> Result<()> {
    let (net, spp) = read_network(path)?;
    let u = utility(g)?;
    let mut sets = Vec::new();
    for root in origin_states(&net, &spp) {
        let cs = enumerate_policies(&net, &spp, &root, g.cap_policies)?;
        let records = policy_records(cs.policies());
        let policies = cs
            .policies()
            .iter()
            .zip(records)
            .map(|(policy, rec)| {
                let v = policy_expected_utility(&net, &spp, policy, &u)?;
                Ok(json!({
                    "policy": rec.policy,
                    "expected_utility": v,
                    "decisions": rec.decisions,
                }))
            })
            .collect::<Result<Vec<_>>>()?;
        sets.push(json!({
            "initial_state": StateRecord::from(&root),
            "count": policies.len(),
            "policies": policies,
        }));
    }
    serde_json::to_writer_pretty(&mut *out, &sets)?;
    writeln!(out)?;
    Ok(())
}

struct Rows(csv::Writer<Vec<u8>>);

impl Rows {
    fn new() -> Result<Self> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["model", "kind", "key", "value"])?;
        Ok(Self(w))
    }

    fn push(&mut self, model: Model, kind: &str, key: &str, value: f64) -> Result<()> {
        self.0
            .write_record([model.name(), kind, key, &format_sig(value)])?;
        Ok(())
    }

    fn finish(self, out: &mut dyn Write) -> Result<()> {
        out.write_all(&self.0.into_inner()?)?;
        Ok(())
    }
}

fn path_key(links: &[LinkId]) -> String {
    links
        .iter()
        .map(|l| l.to_string())
        .collect::<Vec<_>>()
        .join("-")
}

fn predict(path: &Path, choice: ModelChoice, g: &Global, out: &mut dyn Write) -> Result<()> {
    let (net, spp) = read_network(path)?;
    let u = utility(g)?;
    let roots = origin_states(&net, &spp);
    let mut rows = Rows::new()?;
    for model in choice.models() {
        // Sequence and path probabilities are unconditional: each origin
        // state contributes with its probability.
        let mut sequences = Vec::new();
        let mut paths: BTreeMap<Vec<LinkId>, f64> = BTreeMap::new();
        match model {
            Model::Recursive => {
                let vf = solve_value_functions_from(&net, &spp, &u, &roots)?;
                let mut nodes: Vec<_> = vf.space().nodes().iter().enumerate().collect();
                nodes.sort_by(|a, b| a.1.state.cmp(&b.1.state));
                for (idx, node) in nodes.into_iter().filter(|(_, n)| !n.terminal) {
                    for (t, p) in node.transitions.iter().zip(vf.choice_probs_at(idx)) {
                        rows.push(model, "choice", &format!("{} -> {}", node.state, t.link), p)?;
                    }
                }
                for root in &roots {
                    let w = spp.mass(&root.ev);
                    for (seq, p) in sequence_probabilities(&vf, root, g.cap_policies)? {
                        *paths.entry(seq.path()).or_insert(0.0) += w * p;
                        sequences.push((seq, w * p));
                    }
                }
            }
            Model::NonRecursive => {
                let mut choices: BTreeMap<State, BTreeMap<LinkId, f64>> = BTreeMap::new();
                let mut policy_rows = Vec::new();
                for root in &roots {
                    let w = spp.mass(&root.ev);
                    let cs = enumerate_policies(&net, &spp, root, g.cap_policies)?;
                    let nr = NonRecursiveModel::new(cs, &net, &spp, &u)?;
                    let probs = nr.policy_probabilities();
                    for (i, (policy, p)) in
                        nr.choice_set().policies().iter().zip(&probs).enumerate()
                    {
                        let key = format!("{root} #{}", i + 1);
                        policy_rows.push((key.clone(), "policy_utility", nr.policy_utilities()[i]));
                        policy_rows.push((key, "policy", *p));
                        for (state, link) in policy.decisions() {
                            *choices
                                .entry(state.clone())
                                .or_default()
                                .entry(*link)
                                .or_insert(0.0) += p;
                        }
                    }
                    for (seq, p) in nr.sequence_probabilities() {
                        *paths.entry(seq.path()).or_insert(0.0) += w * p;
                        sequences.push((seq, w * p));
                    }
                }
                // Probability of each decision among the policies that reach the state.
                for (state, links) in &choices {
                    let total: f64 = links.values().sum();
                    for (link, p) in links {
                        rows.push(model, "choice", &format!("{state} -> {link}"), p / total)?;
                    }
                }
                for (key, kind, v) in policy_rows {
                    rows.push(model, kind, &key, v)?;
                }
            }
        }
        sequences.sort_by(|a, b| a.0.cmp(&b.0));
        for (seq, p) in &sequences {
            rows.push(model, "sequence", &seq.to_string(), *p)?;
        }
        for (links, p) in &paths {
            rows.push(model, "path", &path_key(links), *p)?;
        }
    }
    rows.finish(out)
}

fn estimate(
    network: &Path,
    observations: &Path,
    choice: ModelChoice,
    as_json: bool,
    g: &Global,
    out: &mut dyn Write,
) -> Result<()> {
    let (net, spp) = read_network(network)?;
    let text = fs::read_to_string(observations)
        .with_context(|| format!("cannot read {}", observations.display()))?;
    let records = parse_observations(&text)
        .with_context(|| format!("invalid observations {}", observations.display()))?;
    let obs = ObservationSet::from_records(&records, &net, &spp)?;
    let start = utility(g)?;
    let names: Vec<String> = start.attributes().iter().map(attribute_name).collect();
    let mut results = Vec::new();
    for model in choice.models() {
        let res = fit(model, &net, &spp, &obs, &start, &FitOptions::default())
            .with_context(|| format!("{model} estimation failed"))?;
        results.push(res);
    }
    if as_json {
        serde_json::to_writer_pretty(&mut *out, &results)?;
        writeln!(out)?;
        return Ok(());
    }
    for (i, res) in results.iter().enumerate() {
        if i > 0 {
            writeln!(out)?;
        }
        writeln!(out, "model           {}", res.model)?;
        writeln!(out, "observations    {}", res.observations)?;
        writeln!(out, "log-likelihood  {}", format_sig(res.log_likelihood))?;
        writeln!(out, "iterations      {}", res.iterations)?;
        writeln!(out, "converged       {}", res.converged)?;
        writeln!(out, "gradient norm   {}", format_sig(res.gradient_norm))?;
        writeln!(
            out,
            "{:<15} {:>18} {:>18}",
            "coefficient", "estimate", "std. error"
        )?;
        for (j, name) in names.iter().enumerate() {
            let se = res
                .std_errors
                .as_ref()
                .map_or_else(|| "n/a".to_string(), |se| format_sig(se[j]));
            writeln!(
                out,
                "{:<15} {:>18} {:>18}",
                name,
                format_sig(res.beta_hat[j]),
                se
            )?;
        }
    }
    Ok(())
}

fn parse_range(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let [lo, hi, n] = parts[..] else {
        bail!("range {spec:?} must be lo:hi:count");
    };
    let (lo, hi): (f64, f64) = (lo.trim().parse()?, hi.trim().parse()?);
    let n: usize = n.trim().parse()?;
    match n {
        0 => bail!("range {spec:?} has no points"),
        1 => Ok(vec![lo]),
        _ => Ok((0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect()),
    }
}

fn compare(args: &CompareArgs, g: &Global, out: &mut dyn Write) -> Result<()> {
    if let Some(path) = &args.network {
        let (net, spp) = read_network(path)?;
        let report = equivalence_report(&net, &spp, &utility(g)?)?;
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "mu",
            "max_divergence",
            "recursive_optimal_mass",
            "nonrecursive_optimal_mass",
        ])?;
        for p in &report.sweep {
            w.write_record([
                format_sig(p.mu),
                format_sig(p.max_divergence),
                format_sig(p.recursive_optimal_mass),
                format_sig(p.nonrecursive_optimal_mass),
            ])?;
        }
        out.write_all(&w.into_inner()?)?;
        eprintln!(
            "deterministic: {}; path divergence at mu={}: {}; monotone: {}",
            report.deterministic,
            g.mu,
            format_sig(report.path_divergence),
            report.monotone
        );
        return Ok(());
    }

    let scenarios = if args.sweep {
        let xs = match &args.x_range {
            Some(r) => parse_range(r)?,
            None => parse_range(&format!("{}:5:12", -0.9 * args.a))?,
        };
        let ys = match &args.y_range {
            Some(r) => parse_range(r)?,
            None => parse_range(&format!("{}:5:12", -0.9 * args.b))?,
        };
        let ps = parse_range(&args.p_range)?;
        let mut v = Vec::with_capacity(xs.len() * ys.len() * ps.len());
        for &x in &xs {
            for &y in &ys {
                for &p in &ps {
                    v.push(TwoRouteScenario::new(args.a, args.b, x, y, p)?);
                }
            }
        }
        v
    } else {
        vec![TwoRouteScenario::new(
            args.a, args.b, args.x, args.y, args.p,
        )?]
    };

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "a",
        "b",
        "x",
        "y",
        "p",
        "recursive_state1",
        "recursive_state2",
        "recursive_marginal",
        "nonrecursive_state1",
        "nonrecursive_state2",
        "nonrecursive_marginal",
        "dominance",
        "extremeness",
    ])?;
    for s in &scenarios {
        let t = ratio_table(s);
        let mut row: Vec<String> = [
            s.a,
            s.b,
            s.x,
            s.y,
            s.p,
            t.recursive.state1,
            t.recursive.state2,
            t.recursive.marginal,
            t.nonrecursive.state1,
            t.nonrecursive.state2,
            t.nonrecursive.marginal,
        ]
        .iter()
        .map(|v| format_sig(*v))
        .collect();
        row.push(dominance_class(s).to_string());
        row.push(extremeness_check(s).verdict.to_string());
        w.write_record(&row)?;
    }
    out.write_all(&w.into_inner()?)?;
    Ok(())
}
