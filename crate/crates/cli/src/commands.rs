use std::io::Write;
use std::path::{Path, PathBuf};

use corrgraph::pairs::pairs;
use corrgraph::pipeline::{test_correlations, Calibration, OmegaSource};
use corrgraph::procedures::{Method, ProcedureKind, ThresholdScale};
use corrgraph::quantiles::{cholesky_psd, gaussian_draws_from_factor};
use corrgraph::rng::domain;
use corrgraph::simulation::{
    adjacency_spectrum, admissible_sbm_model, run_experiment, sample_gaussian, sbm_adjacency_at,
    AdjacencyMatrix, CorrelationHistogram, MetricsRow, MAX_ADJACENCY_ATTEMPTS,
};
use corrgraph::statistics::PairCovariance;
use corrgraph::{CorrelationMatrix, Error, StatKind};

use crate::config::RunConfig;
use crate::io::{
    create, finish, io_failure, read_dataset, read_matrix, write_dataset, write_matrix, CliResult,
    Failure, EXIT_NOT_PD, EXIT_NOT_PSD,
};
use crate::{GraphFormat, MethodArg, ModelArgs, OmegaArg, QuantileArgs, SampleArgs, SimulateArgs, StatArg, TestArgs};

fn stat_kind(s: StatArg) -> StatKind {
    match s {
        StatArg::Empirical => StatKind::Empirical,
        StatArg::Student => StatKind::Student,
        StatArg::Fisher => StatKind::Fisher,
        StatArg::Secondorder => StatKind::SecondOrder,
    }
}

fn method(m: MethodArg) -> Method {
    match m {
        MethodArg::Bonferroni => Method::Bonferroni,
        MethodArg::Sidak => Method::Sidak,
        MethodArg::Bootrw => Method::BootRW,
        MethodArg::Maxt => Method::MaxT,
        MethodArg::Bh => Method::BenjaminiHochberg,
    }
}

fn check_alpha(alpha: f64) -> CliResult<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Failure::usage(format!("--alpha must lie in (0, 1), got {alpha}")))
    }
}

fn dot_id(name: &str) -> String {
    format!("\"{}\"", name.replace('\\', "\\\\").replace('"', "\\\""))
}

fn graph_path(args: &TestArgs, format: GraphFormat) -> PathBuf {
    args.graph.clone().unwrap_or_else(|| {
        args.output.with_extension(match format {
            GraphFormat::Edgelist => "edgelist",
            GraphFormat::Dot => "dot",
        })
    })
}

pub fn test(args: TestArgs) -> CliResult<()> {
    check_alpha(args.alpha)?;
    let method = method(args.method);
    let procedure = ProcedureKind::new(method, args.step_down).map_err(|e| Failure::usage(format!("--step-down: {e}")))?;
    let mut calibration = Calibration {
        omega: match args.omega {
            OmegaArg::Gaussian => OmegaSource::Gaussian,
            OmegaArg::FourthMoment => OmegaSource::FourthMoment,
        },
        ..Calibration::default()
    };
    match (method, args.draws) {
        (Method::MaxT, Some(d)) => calibration.maxt_draws = d,
        (Method::BootRW, Some(d)) => calibration.bootstrap_draws = d,
        (_, Some(_)) => return Err(Failure::usage(format!("--draws has no effect with --method {method}"))),
        (_, None) => {}
    }
    if method.needs_draws() {
        calibration.validate().map_err(|e| Failure::usage(format!("--draws: {e}")))?;
    }
    let data = read_dataset(&args.input)?;
    let kind = stat_kind(args.stat);
    let outcome = test_correlations(&data.samples, kind, procedure, args.alpha, &calibration, args.seed, None)
        .map_err(|e| match e {
            Error::Degenerate(msg) => Failure::new(crate::io::EXIT_DEGENERATE, msg),
            e => e.into(),
        })?;
    let rejection = &outcome.rejection;
    let stats = &outcome.evaluated.stats.values;
    let pvalues = &outcome.evaluated.pvalues.0;
    let p = data.samples.p();
    let mask = rejection.mask();

    let mut w = csv::Writer::from_writer(create(&args.output)?);
    let fail = |e: csv::Error| io_failure(&args.output, e);
    w.write_record(["i", "j", "name_i", "name_j", "statistic", "p_value", "threshold", "rejected"])
        .map_err(fail)?;
    for pair in pairs(p) {
        w.write_record([
            (pair.i + 1).to_string(),
            (pair.j + 1).to_string(),
            data.names[pair.i].clone(),
            data.names[pair.j].clone(),
            stats[pair.flat].to_string(),
            pvalues[pair.flat].to_string(),
            rejection.pair_thresholds[pair.flat].to_string(),
            mask[pair.flat].to_string(),
        ])
        .map_err(fail)?;
    }
    w.flush().map_err(|e| io_failure(&args.output, e))?;

    if let Some(format) = args.graph_format {
        let path = graph_path(&args, format);
        let mut g = create(&path)?;
        let mut edges = pairs(p).filter(|pr| mask[pr.flat]);
        let result = match format {
            GraphFormat::Edgelist => {
                edges.try_for_each(|pr| writeln!(g, "{}\t{}", data.names[pr.i], data.names[pr.j]))
            }
            GraphFormat::Dot => (|| {
                writeln!(g, "graph corrgraph {{")?;
                for name in &data.names {
                    writeln!(g, "  {};", dot_id(name))?;
                }
                for pr in edges {
                    writeln!(g, "  {} -- {};", dot_id(&data.names[pr.i]), dot_id(&data.names[pr.j]))?;
                }
                writeln!(g, "}}")
            })(),
        };
        result.map_err(|e| io_failure(&path, e))?;
        finish(g, &path)?;
    }

    let scale = match rejection.scale {
        ThresholdScale::PValue => "p-value",
        ThresholdScale::Statistic => "|statistic|",
    };
    println!("variables: {p}");
    println!("observations: {}", data.samples.n());
    println!("pairs tested: {}", pairs(p).count());
    println!("edges detected: {}", rejection.len());
    println!("statistic: {kind}");
    println!("procedure: {procedure}");
    println!("alpha: {}", args.alpha);
    println!("iterations: {}", rejection.iterations);
    println!("thresholds ({scale}): {}", join(&rejection.thresholds));
    Ok(())
}

fn join(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn metric(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        v.to_string()
    }
}

fn write_metrics(path: &Path, rows: &[MetricsRow]) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let fail = |e: csv::Error| io_failure(path, e);
    w.write_record([
        "stat", "method", "stepdown", "n", "p_inter", "rho", "replicates", "fwer", "fwer_se", "power", "power_se",
        "fdp", "fdp_se",
    ])
    .map_err(fail)?;
    for r in rows {
        w.write_record([
            r.stat.to_string(),
            r.procedure.method.to_string(),
            r.procedure.stepdown.to_string(),
            r.n.to_string(),
            r.p_inter.to_string(),
            r.rho.to_string(),
            r.replicates.to_string(),
            metric(r.fwer),
            metric(r.fwer_se),
            opt(r.power),
            opt(r.power_se),
            metric(r.fdp),
            metric(r.fdp_se),
        ])
        .map_err(fail)?;
    }
    w.flush().map_err(|e| io_failure(path, e))
}

fn write_histograms(path: &Path, histograms: &[CorrelationHistogram]) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let fail = |e: csv::Error| io_failure(path, e);
    w.write_record(["n", "p_inter", "rho", "bin_low", "bin_high", "null_count", "alternative_count"])
        .map_err(fail)?;
    for h in histograms {
        for b in 0..h.null_counts.len() {
            w.write_record([
                h.n.to_string(),
                h.p_inter.to_string(),
                h.rho.to_string(),
                h.edges[b].to_string(),
                h.edges[b + 1].to_string(),
                h.null_counts[b].to_string(),
                h.alternative_counts[b].to_string(),
            ])
            .map_err(fail)?;
        }
    }
    w.flush().map_err(|e| io_failure(path, e))
}

pub fn simulate(args: SimulateArgs) -> CliResult<()> {
    let run = RunConfig::load(&args.config)?;
    let mut config = run.to_experiment()?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(reps) = args.reps {
        if reps == 0 {
            return Err(Failure::usage("--reps must be at least 1"));
        }
        config.replicates = reps;
    }
    let result = run_experiment(&config)?;
    for row in result.rows.iter().filter(|r| r.failure.is_some()) {
        eprintln!(
            "warning: cell {} {} n={} p_inter={} rho={} failed: {}",
            row.stat,
            row.procedure,
            row.n,
            row.p_inter,
            row.rho,
            row.failure.as_deref().unwrap_or_default()
        );
    }
    write_metrics(&args.output, &result.rows)?;
    if let Some(path) = &run.output.histogram {
        write_histograms(path, &result.histograms)?;
    }
    println!("rows: {}", result.rows.len());
    println!("replicates: {}", config.replicates);
    println!("seed: {}", config.seed);
    Ok(())
}

fn rho_range(lambda_min: f64, lambda_max: f64) -> (f64, f64) {
    let upper = if lambda_min < 0.0 { (1.0 / -lambda_min).min(1.0) } else { 1.0 };
    let lower = if lambda_max > 0.0 { (-1.0 / lambda_max).max(-1.0) } else { -1.0 };
    (lower, upper)
}

pub fn model(args: ModelArgs) -> CliResult<()> {
    let path = [domain::ADJACENCY];
    let (model, attempts) = admissible_sbm_model(args.p, args.p_intra, args.p_inter, &[args.rho], args.seed, &path)
        .map_err(|e| match e {
            Error::NotPositiveDefinite { .. } => {
                let first = sbm_adjacency_at(args.p, args.p_intra, args.p_inter, args.seed, &[domain::ADJACENCY, 0]);
                let range = first
                    .map(|a| {
                        let (lo, hi) = rho_range_of(&a);
                        format!("; for the first graph drawn the admissible range is ({lo}, {hi})")
                    })
                    .unwrap_or_default();
                Failure::new(
                    EXIT_NOT_PD,
                    format!(
                        "I + rho A is not positive definite at rho = {} for any of {MAX_ADJACENCY_ATTEMPTS} graphs drawn{range}",
                        args.rho
                    ),
                )
            }
            e => Failure::usage(e),
        })?;
    let (lower, upper) = rho_range(model.min_eigenvalue, model.max_eigenvalue);
    println!("edges: {} of {}", model.adjacency.edge_count(), model.adjacency.edges().len());
    println!("graphs rejected: {attempts}");
    println!("lambda_min: {}", model.min_eigenvalue);
    println!("lambda_max: {}", model.max_eigenvalue);
    println!("rho bound: {}", 1.0 / model.min_eigenvalue.abs());
    println!("admissible rho: ({lower}, {upper})");
    std::fs::create_dir_all(&args.output).map_err(|e| io_failure(&args.output, e))?;
    write_matrix(&args.output.join("adjacency.csv"), &model.adjacency.to_matrix())?;
    write_matrix(&args.output.join("correlation.csv"), model.gamma.as_matrix())?;
    Ok(())
}

fn rho_range_of(a: &AdjacencyMatrix) -> (f64, f64) {
    let (min, max) = adjacency_spectrum(a);
    rho_range(min, max)
}

pub fn sample(args: SampleArgs) -> CliResult<()> {
    let values = read_matrix(&args.correlation)?;
    let gamma = CorrelationMatrix::new_model(values).map_err(|e| Failure::new(EXIT_NOT_PSD, e))?;
    if args.n < corrgraph::sample::MIN_OBSERVATIONS {
        return Err(Failure::usage(format!(
            "--n must be at least {}",
            corrgraph::sample::MIN_OBSERVATIONS
        )));
    }
    let samples = sample_gaussian(&gamma, args.n, args.seed)?;
    let names: Vec<String> = (1..=gamma.p()).map(|k| format!("x{k}")).collect();
    write_dataset(&args.output, &names, &samples)
}

pub fn quantile(args: QuantileArgs) -> CliResult<()> {
    check_alpha(args.alpha)?;
    if args.draws < corrgraph::quantiles::MIN_GAUSSIAN_DRAWS {
        return Err(Failure::usage(format!(
            "--draws must be at least {}",
            corrgraph::quantiles::MIN_GAUSSIAN_DRAWS
        )));
    }
    let values = read_matrix(&args.sigma)?;
    let sigma = PairCovariance::from_matrix(values).map_err(|e| Failure::new(EXIT_NOT_PSD, e))?;
    let factor = cholesky_psd(&sigma).map_err(|e| Failure::new(EXIT_NOT_PSD, e))?;
    let draws = gaussian_draws_from_factor(&factor, args.draws, args.seed)?;
    let all: Vec<usize> = (0..sigma.dim()).collect();
    let estimate = draws.quantile_estimate(args.alpha, &all)?;
    println!("quantile: {}", estimate.value);
    println!("alpha: {}", estimate.alpha);
    println!("draws: {}", estimate.draws);
    println!("dimension: {}", sigma.dim());
    println!("jitter: {}", factor.jitter);
    println!("seed: {}", estimate.seed);
    Ok(())
}
