use std::path::PathBuf;
use std::process::ExitCode;

use clap::parser::ValueSource;
use clap::{value_parser, Arg, ArgAction, ArgMatches, Command};

use chs_core::acceptance;
use chs_core::runner::{self, ConfigFile, Experiment, ExperimentConfig, Format, Kind};
use chs_core::LabError;

fn common_args(cmd: Command) -> Command {
    cmd.arg(
        Arg::new("config")
            .long("config")
            .value_name("FILE")
            .value_parser(value_parser!(PathBuf))
            .help("JSON config; flags override its values"),
    )
    .arg(
        Arg::new("seed")
            .long("seed")
            .value_name("S")
            .help("base seed for every random choice [default: 0]")
            .value_parser(value_parser!(u64)),
    )
    .arg(
        Arg::new("trials")
            .long("trials")
            .value_name("N")
            .help("samples per estimate in sampled modes [default: 1000]")
            .value_parser(value_parser!(u64)),
    )
    .arg(
        Arg::new("out")
            .long("out")
            .value_name("PATH")
            .help("write the report here instead of stdout")
            .value_parser(value_parser!(PathBuf)),
    )
    .arg(
        Arg::new("format")
            .long("format")
            .help("report format [default: json]")
            .value_parser(["csv", "json"]),
    )
    .arg(
        Arg::new("timing")
            .long("timing")
            .action(ArgAction::SetTrue)
            .help("record wall-clock duration in the report"),
    )
    .arg(
        Arg::new("max-dense-dim")
            .long("max-dense-dim")
            .value_name("N")
            .help("largest dense matrix side [default: 4096]")
            .value_parser(value_parser!(usize)),
    )
    .arg(
        Arg::new("max-types")
            .long("max-types")
            .value_name("N")
            .help("largest type enumeration [default: 100000]")
            .value_parser(value_parser!(u64)),
    )
    .arg(
        Arg::new("max-subset-pairs")
            .long("max-subset-pairs")
            .value_name("N")
            .help("largest subset-pair scan [default: 1000000]")
            .value_parser(value_parser!(u64)),
    )
}

fn experiment_command(e: Experiment) -> Command {
    let mut cmd = Command::new(e.name()).about(e.about());
    for spec in e.schema() {
        let mut arg = Arg::new(spec.name)
            .long(spec.name)
            .value_name("V")
            .help(format!("{} [default: {}]", spec.help, spec.default));
        if let Kind::Choice(options) = spec.kind {
            arg = arg.value_parser(options.to_vec());
        }
        cmd = cmd.arg(arg);
    }
    common_args(cmd)
}

fn cli() -> Command {
    let mut sweep = Command::new("sweep")
        .about("run one experiment over a list of values of one parameter")
        .subcommand_required(true);
    for e in Experiment::ALL {
        sweep = sweep.subcommand(
            experiment_command(e)
                .arg(
                    Arg::new("axis")
                        .long("axis")
                        .required(true)
                        .value_name("PARAM"),
                )
                .arg(
                    Arg::new("values")
                        .long("values")
                        .required(true)
                        .value_delimiter(',')
                        .num_args(0..)
                        .value_name("V,V,.."),
                ),
        );
    }
    let mut cmd = Command::new("chs-lab")
        .about("Exact experiments on phase-key pseudorandom states and SWAP-test commitments")
        .version(chs_core::ARTIFACT_VERSION)
        .subcommand_required(true)
        .arg_required_else_help(true);
    for e in Experiment::ALL {
        cmd = cmd.subcommand(experiment_command(e));
    }
    cmd.subcommand(sweep).subcommand(
        Command::new("acceptance")
            .about("run the acceptance suite; exits non-zero on any failure")
            .arg(
                Arg::new("seed")
                    .long("seed")
                    .value_name("S")
                    .help("suite seed [default: 20240601]")
                    .value_parser(value_parser!(u64)),
            )
            .arg(
                Arg::new("only")
                    .long("only")
                    .value_delimiter(',')
                    .value_parser(value_parser!(u8).range(1..=10))
                    .value_name("ID,..")
                    .help("run only these criteria, e.g. 1,5,10"),
            ),
    )
}

fn from_cli(flag: &ArgMatches, id: &str) -> bool {
    flag.value_source(id) == Some(ValueSource::CommandLine)
}

fn build_config(e: Experiment, m: &ArgMatches) -> Result<ExperimentConfig, LabError> {
    let mut cfg = match m.get_one::<PathBuf>("config") {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            ConfigFile::parse(&text)?.into_config(Some(e))?
        }
        None => ExperimentConfig::new(e),
    };
    for spec in e.schema() {
        if let Some(v) = m.get_one::<String>(spec.name) {
            cfg.params.insert(spec.name.to_string(), v.clone());
        }
    }
    if let Some(&s) = m.get_one::<u64>("seed") {
        cfg.seed = s;
    }
    if let Some(&t) = m.get_one::<u64>("trials") {
        cfg.trials = t;
    }
    if let Some(p) = m.get_one::<PathBuf>("out") {
        cfg.output_path = Some(p.clone());
    }
    if let Some(f) = m.get_one::<String>("format") {
        cfg.format = f.parse::<Format>()?;
    }
    if from_cli(m, "timing") {
        cfg.record_duration = true;
    }
    if let Some(&v) = m.get_one::<usize>("max-dense-dim") {
        cfg.budget.max_dense_dim = v;
    }
    if let Some(&v) = m.get_one::<u64>("max-types") {
        cfg.budget.max_types = v;
    }
    if let Some(&v) = m.get_one::<u64>("max-subset-pairs") {
        cfg.budget.max_subset_pairs = v;
    }
    Ok(cfg)
}

fn run_one(e: Experiment, m: &ArgMatches) -> Result<bool, LabError> {
    let cfg = build_config(e, m)?;
    let report = runner::run(&cfg)?;
    match &cfg.output_path {
        Some(p) => eprintln!("wrote {}", p.display()),
        None => print!("{}", runner::render(&report, cfg.format)),
    }
    for c in report.failed_checks() {
        eprintln!(
            "check failed: {} ({}): lhs {:e}, rhs {:e}",
            c.name, c.inequality, c.lhs, c.rhs
        );
    }
    Ok(report.all_passed())
}

fn run_sweep(e: Experiment, m: &ArgMatches) -> Result<bool, LabError> {
    let cfg = build_config(e, m)?;
    let axis = m.get_one::<String>("axis").expect("required");
    let values: Vec<String> = m
        .get_many::<String>("values")
        .map(|v| v.cloned().collect())
        .unwrap_or_default();
    let values: Vec<String> = values.into_iter().filter(|v| !v.is_empty()).collect();
    let result = runner::sweep(&cfg, axis, &values)?;
    match &cfg.output_path {
        Some(p) => eprintln!("wrote {}", p.display()),
        None => match cfg.format {
            Format::Csv => print!("{}", result.to_csv()),
            Format::Json => print!("{}", result.to_json()),
        },
    }
    for (v, r) in result.values.iter().zip(&result.runs) {
        match r {
            Err(err) => eprintln!("{axis} = {v}: {err}"),
            Ok(rep) if !rep.all_passed() => eprintln!("{axis} = {v}: checks failed"),
            Ok(_) => {}
        }
    }
    Ok(result.all_passed())
}

fn run_acceptance(m: &ArgMatches) -> bool {
    let seed = m
        .get_one::<u64>("seed")
        .copied()
        .unwrap_or(acceptance::DEFAULT_SEED);
    let outcomes = match m.get_many::<u8>("only") {
        Some(ids) => ids.map(|&id| acceptance::run_criterion(id, seed)).collect(),
        None => acceptance::run_all(seed),
    };
    for o in &outcomes {
        println!("{}", o.line());
    }
    let passed = outcomes.iter().filter(|o| o.passed).count();
    println!("{passed}/{} criteria passed", outcomes.len());
    passed == outcomes.len()
}

fn main() -> ExitCode {
    if let Err(e) = runner::configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    let matches = cli().get_matches();
    let outcome = match matches.subcommand() {
        Some(("acceptance", m)) => Ok(run_acceptance(m)),
        Some(("sweep", sm)) => {
            let (name, m) = sm.subcommand().expect("subcommand required");
            run_sweep(name.parse().expect("registered experiment"), m)
        }
        Some((name, m)) => run_one(name.parse().expect("registered experiment"), m),
        None => unreachable!("subcommand required"),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
