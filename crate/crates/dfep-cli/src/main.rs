//! Command-line front end: generate instances, build trees, evaluate
//! costs, run the exact reference solvers, and compare the two.
//!
//! Exit codes: 0 on success, 2 on user or input errors, 3 on internal
//! invariant violations.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};

use dfep::builder::build;
use dfep::costs::{tree_costs, CostReport};
use dfep::format::{
    cost_report_json, instance_to_json, parse_instance, parse_setcover, parse_tree,
    ratio_decimal, ratio_string, tree_to_json,
};
use dfep::generators::{
    gen_identification_dichotomy, gen_random, gen_setcover_reduction, ProbShape, RandomParams,
};
use dfep::instance::Instance;
use dfep::oracle::{opt_expected, opt_worst, sepcost_star, totcost_star, OracleLimits};
use dfep::submodular::{find_budget, find_budget_linear};
use dfep::tree::DecisionTree;

#[derive(Parser)]
#[command(name = "dfep", version, about = "Build and verify decision trees for costly-test classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an instance file.
    Gen {
        #[command(subcommand)]
        kind: GenKind,
    },
    /// Build a decision tree and report its costs.
    Build(BuildArgs),
    /// Re-evaluate a serialized tree against an instance.
    Eval(EvalArgs),
    /// Run the exact reference solvers.
    Oracle(OracleArgs),
    /// Build, solve exactly, and print the ratio table.
    Compare(CompareArgs),
    /// Print instance statistics.
    Stats(StatsArgs),
}

#[derive(Subcommand)]
enum GenKind {
    /// The identification family with geometric probabilities and all
    /// nonconstant binary tests at unit cost.
    Huffman {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// A seeded random instance.
    Random {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        n: usize,
        #[arg(long, value_name = "M")]
        classes: usize,
        #[arg(long)]
        tests: usize,
        #[arg(long, default_value_t = 2)]
        outcomes: u32,
        #[arg(long, default_value_t = 4)]
        max_cost: u64,
        #[arg(long, value_enum, default_value_t = ProbShapeArg::Dyadic)]
        prob_shape: ProbShapeArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// The set-cover translation of a `{"universe": n, "sets": [...]}`
    /// file.
    Setcover {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        b: usize,
        /// Probability assigned to each non-distinguished object, as an
        /// exact rational; defaults just under the feasibility bound.
        #[arg(long)]
        eta: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ProbShapeArg {
    Uniform,
    Dyadic,
    ZeroSpiked,
}

impl From<ProbShapeArg> for ProbShape {
    fn from(v: ProbShapeArg) -> ProbShape {
        match v {
            ProbShapeArg::Uniform => ProbShape::Uniform,
            ProbShapeArg::Dyadic => ProbShape::Dyadic,
            ProbShapeArg::ZeroSpiked => ProbShape::ZeroSpiked,
        }
    }
}

#[derive(Args)]
struct BuildArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Also write a Graphviz rendering.
    #[arg(long)]
    dot: Option<PathBuf>,
    /// Worker threads for the independent subtree recursions; the
    /// output is identical for every value.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    tree: PathBuf,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = OracleWhich::All)]
    which: OracleWhich,
    /// Raise the size limits to their hard ceilings.
    #[arg(long)]
    force_limit: bool,
    #[arg(long)]
    json: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OracleWhich {
    #[value(name = "opt_e")]
    OptE,
    #[value(name = "opt_w")]
    OptW,
    Sepcost,
    Totcost,
    All,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long = "in", conflicts_with = "seed_range")]
    input: Option<PathBuf>,
    /// Compare a batch of random instances, e.g. `--seed-range 1..20`
    /// (inclusive), and summarize the worst ratios.
    #[arg(long)]
    seed_range: Option<String>,
    #[arg(long, default_value_t = 6)]
    n: usize,
    #[arg(long, value_name = "M", default_value_t = 3)]
    classes: usize,
    #[arg(long, default_value_t = 6)]
    tests: usize,
    #[arg(long, default_value_t = 2)]
    outcomes: u32,
    #[arg(long, default_value_t = 4)]
    max_cost: u64,
    /// Also run the linear budget scan and report any disagreement
    /// with the binary search.
    #[arg(long)]
    budget_scan: bool,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    json: bool,
}

/// User and input problems exit with 2, internal invariant violations
/// with 3.
enum CliError {
    Usage(String),
    Internal(String),
}

impl CliError {
    fn usage(e: impl std::fmt::Display) -> CliError {
        CliError::Usage(e.to_string())
    }

    fn internal(e: impl std::fmt::Display) -> CliError {
        CliError::Internal(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Internal(msg)) => {
            eprintln!("internal error: {msg}");
            ExitCode::from(3)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Gen { kind } => run_gen(kind),
        Command::Build(args) => run_build(args),
        Command::Eval(args) => run_eval(args),
        Command::Oracle(args) => run_oracle(args),
        Command::Compare(args) => run_compare(args),
        Command::Stats(args) => run_stats(args),
    }
}

fn read_file(path: &PathBuf) -> Result<String, CliError> {
    fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))
}

fn write_file(path: &PathBuf, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents)
        .map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))
}

fn load_instance(path: &PathBuf) -> Result<Instance, CliError> {
    parse_instance(&read_file(path)?).map_err(CliError::usage)
}

fn run_gen(kind: GenKind) -> Result<(), CliError> {
    match kind {
        GenKind::Huffman { n, out } => {
            let inst = gen_identification_dichotomy(n).map_err(CliError::usage)?;
            write_file(&out, &instance_to_json(&inst))?;
            println!("wrote {} ({} objects, {} tests)", out.display(), inst.num_objects(), inst.num_tests());
        }
        GenKind::Random { seed, n, classes, tests, outcomes, max_cost, prob_shape, out } => {
            let params = RandomParams {
                seed,
                num_objects: n,
                num_classes: classes,
                num_tests: tests,
                num_outcomes: outcomes,
                max_cost,
                prob_shape: prob_shape.into(),
            };
            let inst = gen_random(&params).map_err(CliError::usage)?;
            write_file(&out, &instance_to_json(&inst))?;
            println!("wrote {} ({} objects, {} tests)", out.display(), inst.num_objects(), inst.num_tests());
        }
        GenKind::Setcover { input, b, eta, out } => {
            let sc = parse_setcover(&read_file(&input)?).map_err(CliError::usage)?;
            let eta = eta
                .map(|s| dfep::format::parse_ratio(&s))
                .transpose()
                .map_err(CliError::usage)?;
            let red = gen_setcover_reduction(&sc, b, eta).map_err(CliError::usage)?;
            write_file(&out, &instance_to_json(&red.instance))?;
            println!(
                "wrote {} ({} objects, {} tests, eta {})",
                out.display(),
                red.instance.num_objects(),
                red.instance.num_tests(),
                ratio_string(&red.eta)
            );
        }
    }
    Ok(())
}

fn build_with_threads(inst: &Instance, threads: Option<usize>) -> Result<DecisionTree, CliError> {
    match threads {
        None => build(inst).map_err(CliError::internal),
        Some(k) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(k)
                .build()
                .map_err(|e| CliError::Usage(format!("cannot build thread pool: {e}")))?;
            pool.install(|| build(inst)).map_err(CliError::internal)
        }
    }
}

fn run_build(args: BuildArgs) -> Result<(), CliError> {
    let inst = load_instance(&args.input)?;
    let tree = build_with_threads(&inst, args.threads)?;
    tree.verify(&inst).map_err(CliError::internal)?;
    write_file(&args.out, &tree_to_json(&tree))?;
    if let Some(dot) = &args.dot {
        write_file(dot, &tree.to_dot(&inst))?;
    }
    let report = tree_costs(&tree, &inst).map_err(CliError::internal)?;
    println!("cost_W = {}", report.worst);
    println!("cost_E = {} ({})", ratio_string(&report.expected), ratio_decimal(&report.expected, 6));
    for (i, record) in tree.backbones().iter().enumerate() {
        let Some(budget) = record.budget else { continue };
        let total = record.cost_a(&inst) + record.cost_b(&inst);
        let coverage = if record.pairs == 0 {
            1.0
        } else {
            record.pairs_covered as f64 / record.pairs as f64
        };
        println!(
            "invocation {i}: B={budget} coverage={:.4} totcost/B={:.4} (t_A={:?}, t_B={:?})",
            coverage,
            total as f64 / budget as f64,
            record.t_a,
            record.t_b
        );
    }
    Ok(())
}

fn run_eval(args: EvalArgs) -> Result<(), CliError> {
    let inst = load_instance(&args.input)?;
    let tree = parse_tree(&read_file(&args.tree)?, &inst).map_err(CliError::usage)?;
    // A tree that does not fit the instance is an input problem.
    tree.verify(&inst).map_err(CliError::usage)?;
    let report = tree_costs(&tree, &inst).map_err(CliError::usage)?;
    if args.json {
        let json = serde_json::to_string_pretty(&cost_report_json(&report, 6))
            .map_err(CliError::internal)?;
        println!("{json}");
    } else {
        println!("cost_W = {}", report.worst);
        println!(
            "cost_E = {} ({})",
            ratio_string(&report.expected),
            ratio_decimal(&report.expected, 6)
        );
        println!("leaf partition: ok");
    }
    Ok(())
}

fn oracle_limits(force: bool) -> OracleLimits {
    if force {
        OracleLimits::forced()
    } else {
        OracleLimits::default()
    }
}

fn run_oracle(args: OracleArgs) -> Result<(), CliError> {
    let inst = load_instance(&args.input)?;
    let limits = oracle_limits(args.force_limit);
    let mut out = serde_json::Map::new();
    let mut text = String::new();

    if matches!(args.which, OracleWhich::OptE | OracleWhich::All) {
        let r = opt_expected(&inst, &limits).map_err(CliError::usage)?;
        let _ = writeln!(
            text,
            "OPT_E = {} ({}) [{} states]",
            ratio_string(&r.value),
            ratio_decimal(&r.value, 6),
            r.explored_states
        );
        out.insert(
            "opt_e".into(),
            serde_json::json!({
                "value": ratio_string(&r.value),
                "decimal": ratio_decimal(&r.value, 6),
                "explored_states": r.explored_states,
                "witness": serde_json::from_str::<serde_json::Value>(&tree_to_json(&r.tree)).unwrap(),
            }),
        );
    }
    if matches!(args.which, OracleWhich::OptW | OracleWhich::All) {
        let r = opt_worst(&inst, &limits).map_err(CliError::usage)?;
        let _ = writeln!(text, "OPT_W = {} [{} states]", r.value, r.explored_states);
        out.insert(
            "opt_w".into(),
            serde_json::json!({
                "value": r.value,
                "explored_states": r.explored_states,
                "witness": serde_json::from_str::<serde_json::Value>(&tree_to_json(&r.tree)).unwrap(),
            }),
        );
    }
    if matches!(args.which, OracleWhich::Sepcost | OracleWhich::All) {
        let r = sepcost_star(&inst, &limits).map_err(CliError::usage)?;
        let _ = writeln!(
            text,
            "sepcost* = {} ({}) via {:?} [{} states]",
            ratio_string(&r.value),
            ratio_decimal(&r.value, 6),
            r.sequence,
            r.explored_states
        );
        out.insert(
            "sepcost_star".into(),
            serde_json::json!({
                "value": ratio_string(&r.value),
                "decimal": ratio_decimal(&r.value, 6),
                "sequence": r.sequence,
                "explored_states": r.explored_states,
            }),
        );
    }
    if matches!(args.which, OracleWhich::Totcost | OracleWhich::All) {
        let r = totcost_star(&inst, &limits).map_err(CliError::usage)?;
        let _ = writeln!(
            text,
            "totcost* = {} via {:?} [{} states]",
            r.value, r.sequence, r.explored_states
        );
        out.insert(
            "totcost_star".into(),
            serde_json::json!({
                "value": r.value,
                "sequence": r.sequence,
                "explored_states": r.explored_states,
            }),
        );
    }

    if args.json {
        println!("{}", serde_json::to_string_pretty(&serde_json::Value::Object(out)).unwrap());
    } else {
        print!("{text}");
    }
    Ok(())
}

struct Comparison {
    report: CostReport,
    opt_e: BigRational,
    opt_w: u64,
    /// The covering-sequence optima are skipped (None) when the test
    /// count exceeds the subset-enumeration limit.
    sepcost: Option<BigRational>,
    totcost: Option<u64>,
    budget: Option<u64>,
    backbone_cost: u64,
    min_coverage: Option<f64>,
    scan_disagreement: Option<(u64, u64)>,
}

fn ratio_or_one(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        if num == 0.0 {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        num / den
    }
}

fn compare_instance(inst: &Instance, budget_scan: bool) -> Result<Comparison, CliError> {
    let limits = OracleLimits::default();
    let tree = build(inst).map_err(CliError::internal)?;
    tree.verify(inst).map_err(CliError::internal)?;
    let report = tree_costs(&tree, inst).map_err(CliError::internal)?;
    let opt_e = opt_expected(inst, &limits).map_err(CliError::usage)?.value;
    let opt_w = opt_worst(inst, &limits).map_err(CliError::usage)?.value;
    let sep = sepcost_star(inst, &limits).map_err(CliError::usage)?.value;
    let tot = totcost_star(inst, &limits).map_err(CliError::usage)?.value;

    let root = &tree.backbones()[0];
    let budget = root.budget;
    let backbone_cost = root.cost_a(inst) + root.cost_b(inst);
    let min_coverage = tree
        .backbones()
        .iter()
        .filter(|r| r.pairs >= 2)
        .map(|r| r.pairs_covered as f64 / r.pairs as f64)
        .min_by(|a, b| a.total_cmp(b));

    let scan_disagreement = if budget_scan && inst.count_pairs(inst.full_mask()) > 0 {
        let bin = find_budget(inst).map_err(CliError::internal)?.budget;
        let lin = find_budget_linear(inst).map_err(CliError::internal)?.budget;
        if bin != lin {
            Some((bin, lin))
        } else {
            None
        }
    } else {
        None
    };

    Ok(Comparison {
        report,
        opt_e,
        opt_w,
        sepcost: sep,
        totcost: tot,
        budget,
        backbone_cost,
        min_coverage,
        scan_disagreement,
    })
}

fn comparison_json(c: &Comparison) -> serde_json::Value {
    let expected = c.report.expected.to_f64().unwrap_or(f64::NAN);
    let opt_e = c.opt_e.to_f64().unwrap_or(f64::NAN);
    serde_json::json!({
        "cost_w": c.report.worst,
        "cost_e": ratio_string(&c.report.expected),
        "opt_w": c.opt_w,
        "opt_e": ratio_string(&c.opt_e),
        "sepcost_star": ratio_string(&c.sepcost),
        "totcost_star": c.totcost,
        "budget": c.budget,
        "backbone_cost": c.backbone_cost,
        "ratio_worst": ratio_or_one(c.report.worst as f64, c.opt_w as f64),
        "ratio_expected": ratio_or_one(expected, opt_e),
        "min_coverage": c.min_coverage,
        "coverage_threshold": 49.0 / 400.0,
        "budget_scan_disagreement": c.scan_disagreement.map(|(b, l)| serde_json::json!({
            "binary": b, "linear": l
        })),
    })
}

fn print_comparison(c: &Comparison) {
    println!("cost_W = {}  OPT_W = {}  ratio = {:.4}", c.report.worst, c.opt_w,
        ratio_or_one(c.report.worst as f64, c.opt_w as f64));
    println!(
        "cost_E = {} ({})  OPT_E = {} ({})  ratio = {:.4}",
        ratio_string(&c.report.expected),
        ratio_decimal(&c.report.expected, 6),
        ratio_string(&c.opt_e),
        ratio_decimal(&c.opt_e, 6),
        ratio_or_one(
            c.report.expected.to_f64().unwrap_or(f64::NAN),
            c.opt_e.to_f64().unwrap_or(f64::NAN)
        )
    );
    println!(
        "sepcost* = {} ({})  totcost* = {}",
        ratio_string(&c.sepcost),
        ratio_decimal(&c.sepcost, 6),
        c.totcost
    );
    match c.budget {
        Some(b) => {
            println!(
                "B = {b}  B/totcost* = {:.4}  totcost(backbone) = {}  backbone/totcost* = {:.4}",
                ratio_or_one(b as f64, c.totcost as f64),
                c.backbone_cost,
                ratio_or_one(c.backbone_cost as f64, c.totcost as f64)
            );
        }
        None => println!("B = n/a (base case)"),
    }
    match c.min_coverage {
        Some(cov) => println!("min backbone coverage = {cov:.4} (threshold {:.4})", 49.0 / 400.0),
        None => println!("min backbone coverage = n/a"),
    }
    if let Some((bin, lin)) = c.scan_disagreement {
        println!("WARNING: budget binary search found {bin}, linear scan found {lin}");
    }
}

fn parse_seed_range(s: &str) -> Result<(u64, u64), CliError> {
    let (a, b) = s
        .split_once("..")
        .ok_or_else(|| CliError::Usage(format!("bad seed range {s:?}, expected A..B")))?;
    let lo: u64 =
        a.parse().map_err(|_| CliError::Usage(format!("bad seed range start {a:?}")))?;
    let hi: u64 = b.parse().map_err(|_| CliError::Usage(format!("bad seed range end {b:?}")))?;
    if hi < lo {
        return Err(CliError::Usage(format!("empty seed range {s:?}")));
    }
    Ok((lo, hi))
}

fn run_compare(args: CompareArgs) -> Result<(), CliError> {
    if let Some(range) = &args.seed_range {
        let (lo, hi) = parse_seed_range(range)?;
        let mut worst_ratio_w: f64 = 0.0;
        let mut worst_ratio_e: f64 = 0.0;
        let mut min_coverage: f64 = 1.0;
        let mut disagreements = Vec::new();
        let mut rows = Vec::new();
        for seed in lo..=hi {
            let params = RandomParams {
                seed,
                num_objects: args.n,
                num_classes: args.classes,
                num_tests: args.tests,
                num_outcomes: args.outcomes,
                max_cost: args.max_cost,
                prob_shape: ProbShape::Dyadic,
            };
            let inst = gen_random(&params).map_err(CliError::usage)?;
            let c = compare_instance(&inst, args.budget_scan)?;
            worst_ratio_w = worst_ratio_w.max(ratio_or_one(c.report.worst as f64, c.opt_w as f64));
            worst_ratio_e = worst_ratio_e.max(ratio_or_one(
                c.report.expected.to_f64().unwrap_or(f64::NAN),
                c.opt_e.to_f64().unwrap_or(f64::NAN),
            ));
            if let Some(cov) = c.min_coverage {
                min_coverage = min_coverage.min(cov);
            }
            if let Some((bin, lin)) = c.scan_disagreement {
                disagreements.push((seed, bin, lin));
            }
            rows.push((seed, comparison_json(&c)));
        }
        if args.json {
            let json = serde_json::json!({
                "seeds": rows.iter().map(|(s, v)| serde_json::json!({"seed": s, "result": v})).collect::<Vec<_>>(),
                "worst_ratio_worst": worst_ratio_w,
                "worst_ratio_expected": worst_ratio_e,
                "min_coverage": min_coverage,
                "budget_scan_disagreements": disagreements.iter().map(|(s, b, l)| serde_json::json!({
                    "seed": s, "binary": b, "linear": l
                })).collect::<Vec<_>>(),
            });
            println!("{}", serde_json::to_string_pretty(&json).unwrap());
        } else {
            println!("seeds {lo}..={hi}: worst cost_W ratio {worst_ratio_w:.4}, worst cost_E ratio {worst_ratio_e:.4}, min coverage {min_coverage:.4}");
            for (seed, bin, lin) in &disagreements {
                println!("WARNING: seed {seed}: budget binary search {bin} != linear scan {lin}");
            }
        }
        return Ok(());
    }

    let input = args
        .input
        .as_ref()
        .ok_or_else(|| CliError::Usage("compare needs --in FILE or --seed-range A..B".into()))?;
    let inst = load_instance(input)?;
    let c = compare_instance(&inst, args.budget_scan)?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&comparison_json(&c)).unwrap());
    } else {
        print_comparison(&c);
    }
    Ok(())
}

fn run_stats(args: StatsArgs) -> Result<(), CliError> {
    let inst = load_instance(&args.input)?;
    let pairs = inst.count_pairs(inst.full_mask());
    let mut costs: Vec<u64> = inst.tests().iter().map(|t| t.cost).collect();
    costs.sort_unstable();
    let zero_prob = (0..inst.num_objects()).filter(|&o| inst.prob(o).is_zero()).count();
    if args.json {
        let json = serde_json::json!({
            "num_objects": inst.num_objects(),
            "num_classes": inst.num_classes(),
            "num_tests": inst.num_tests(),
            "num_outcomes": inst.num_outcomes(),
            "pairs": pairs,
            "zero_probability_objects": zero_prob,
            "costs": {
                "min": costs.first(),
                "max": costs.last(),
                "total": costs.iter().sum::<u64>(),
                "spectrum": costs,
            },
        });
        println!("{}", serde_json::to_string_pretty(&json).unwrap());
    } else {
        println!("objects: {}  classes: {}  tests: {}  outcomes: {}",
            inst.num_objects(), inst.num_classes(), inst.num_tests(), inst.num_outcomes());
        println!("pairs P(S) = {pairs}");
        println!(
            "costs: min {} max {} total {} spectrum {:?}",
            costs.first().copied().unwrap_or(0),
            costs.last().copied().unwrap_or(0),
            costs.iter().sum::<u64>(),
            costs
        );
        if zero_prob > 0 {
            println!("zero-probability objects: {zero_prob}");
        }
    }
    Ok(())
}
