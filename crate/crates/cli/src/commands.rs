use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use privirec::costmodel::{estimate, reconcile_default, CostParams, Variant};
use privirec::dataset::{generate_synthetic, load_dataset, split_clients, InteractionDataset};
use privirec::eval::{evaluate_with, EvalOptions, EvalReport, RecallConvention};
use privirec::protocol::{run_privirec, run_privirec_k, FilterSet, ProtocolConfig};
use privirec::recommender::{centralized_pipeline, Method, PolyMode, ScoringConfig, TurboConfig};

use crate::args::{CostArgs, DataArgs, EvalArgs, MethodArg, OutputArgs, PolyArg, ProtocolArgs, RecallArg, RunArgs, ScoringArgs, SweepArgs};
use crate::error::CliError;

const RUN_HEADER: [&str; 15] = [
    "dataset",
    "method",
    "variant",
    "alpha",
    "gamma",
    "L",
    "rank_k",
    "filter_rank_p",
    "fraction_bits",
    "recall@20",
    "ndcg@20",
    "client_bytes",
    "server_bytes",
    "wall_time_ms",
    "recall_denominator",
];

const COST_HEADER: [&str; 14] = [
    "variant",
    "n",
    "items",
    "L",
    "k1",
    "k2",
    "k3",
    "e",
    "client_floats",
    "server_floats",
    "predicted_client_bytes",
    "measured_client_bytes",
    "ratio",
    "status",
];

struct Dataset {
    label: String,
    data: InteractionDataset,
}

#[derive(Clone, Copy)]
enum Pipeline {
    Centralized,
    PriviRec,
    PriviRecK,
}

impl Pipeline {
    fn name(self) -> &'static str {
        match self {
            Pipeline::Centralized => "centralized",
            Pipeline::PriviRec => "privirec",
            Pipeline::PriviRecK => "privirec-k",
        }
    }
}

struct RunRow<'a> {
    dataset: &'a str,
    scoring: &'a ScoringConfig,
    pipeline: &'a str,
    config: &'a ProtocolConfig,
    report: &'a EvalReport,
    client_bytes: f64,
    server_bytes: u64,
    wall_ms: Option<u128>,
}

impl RunRow<'_> {
    fn record(&self) -> Vec<String> {
        vec![
            self.dataset.to_string(),
            self.scoring.variant_label().to_string(),
            self.pipeline.to_string(),
            self.config.alpha.to_string(),
            self.scoring.gamma.to_string(),
            self.config.iterations.to_string(),
            self.config.rank.to_string(),
            self.config.filter_rank.to_string(),
            self.config.fraction_bits.to_string(),
            self.report.recall_at_k.to_string(),
            self.report.ndcg_at_k.to_string(),
            format!("{:.0}", self.client_bytes),
            self.server_bytes.to_string(),
            self.wall_ms.map(|t| t.to_string()).unwrap_or_default(),
            self.report.recall_convention.label().to_string(),
        ]
    }
}

pub fn centralized(args: &RunArgs) -> Result<(), CliError> {
    single_run(args, Pipeline::Centralized)
}

pub fn privirec(args: &RunArgs) -> Result<(), CliError> {
    single_run(args, Pipeline::PriviRec)
}

fn single_run(args: &RunArgs, pipeline: Pipeline) -> Result<(), CliError> {
    let ds = load_data(&args.data, args.protocol.seed)?;
    let config = protocol_config(&args.protocol, args.rank, args.scoring.gamma);
    let scoring = scoring_config(&args.scoring);
    let options = eval_options(&args.scoring);

    let started = Instant::now();
    let filters = build_filters(&ds.data, &config, pipeline)?;
    let report = evaluate_with(&ds.data, &filters, &scoring, &options)?;
    let wall = started.elapsed().as_millis();

    if let Some(path) = &args.filters_out {
        write_filters(&filters, path)?;
    }
    let row = RunRow {
        dataset: &ds.label,
        scoring: &scoring,
        pipeline: pipeline.name(),
        config: &config,
        report: &report,
        client_bytes: filters.ledger.mean_client_sent(None),
        server_bytes: filters.ledger.server().total(),
        wall_ms: (!args.output.omit_timing).then_some(wall),
    };
    write_rows(&args.output, &RUN_HEADER, vec![row.record()])
}

pub fn privirec_k(args: &SweepArgs) -> Result<(), CliError> {
    if args.rank.is_empty() {
        return Err(CliError::Usage("--rank needs at least one value".into()));
    }
    let ds = load_data(&args.data, args.protocol.seed)?;
    let scoring = scoring_config(&args.scoring);
    let options = eval_options(&args.scoring);

    let mut rows = Vec::with_capacity(args.rank.len());
    for &rank in &args.rank {
        let config = protocol_config(&args.protocol, rank, args.scoring.gamma);
        let started = Instant::now();
        let filters = build_filters(&ds.data, &config, Pipeline::PriviRecK)?;
        let report = evaluate_with(&ds.data, &filters, &scoring, &options)?;
        let wall = started.elapsed().as_millis();
        if let Some(prefix) = &args.filters_out {
            write_filters(&filters, &sweep_path(prefix, rank))?;
        }
        log::info!("rank {rank}: ndcg {:.4}", report.ndcg_at_k);
        let row = RunRow {
            dataset: &ds.label,
            scoring: &scoring,
            pipeline: Pipeline::PriviRecK.name(),
            config: &config,
            report: &report,
            client_bytes: filters.ledger.mean_client_sent(None),
            server_bytes: filters.ledger.server().total(),
            wall_ms: (!args.output.omit_timing).then_some(wall),
        };
        rows.push(row.record());
    }
    write_rows(&args.output, &RUN_HEADER, rows)
}

pub fn eval(args: &EvalArgs) -> Result<(), CliError> {
    let file = File::open(&args.filters).map_err(|e| CliError::io(format!("opening {}", args.filters.display()), e))?;
    let filters = FilterSet::read_from(BufReader::new(file))?;
    let ds = load_data(&args.data, args.seed)?;
    let scoring = scoring_config(&args.scoring);
    let options = eval_options(&args.scoring);

    let started = Instant::now();
    let report = evaluate_with(&ds.data, &filters, &scoring, &options)?;
    let wall = started.elapsed().as_millis();
    let config = ProtocolConfig {
        rank: filters.rank,
        filter_rank: filters.lowpass.rank(),
        fraction_bits: filters.fraction_bits,
        gamma: args.scoring.gamma,
        ..ProtocolConfig::default()
    };
    let row = RunRow {
        dataset: &ds.label,
        scoring: &scoring,
        pipeline: "file",
        config: &config,
        report: &report,
        client_bytes: 0.0,
        server_bytes: 0,
        wall_ms: (!args.output.omit_timing).then_some(wall),
    };
    let mut record = row.record();
    // Alpha and L are not stored in the container.
    record[3].clear();
    record[5].clear();
    write_rows(&args.output, &RUN_HEADER, vec![record])
}

pub fn cost(args: &CostArgs) -> Result<(), CliError> {
    let data = if args.data.train.is_some() || args.data.synthetic.is_some() {
        Some(load_data(&args.data, args.seed)?)
    } else {
        None
    };
    let clients = data.as_ref().map(|ds| split_clients(&ds.data).clients);
    let params = CostParams {
        n: clients.as_ref().map_or(args.n, Vec::len),
        items: data.as_ref().map_or(args.items, |ds| ds.data.n_items()),
        iterations: args.iterations,
        k1: args.k1,
        k2: args.k2,
        k3: args.k3,
        epochs: args.epochs,
    };

    let mut rows = Vec::new();
    for variant in [Variant::PriviRec, Variant::PriviRecK, Variant::FederatedGcn] {
        let est = estimate(variant, &params)?;
        let mut record = vec![
            variant.name().to_string(),
            params.n.to_string(),
            params.items.to_string(),
            params.iterations.to_string(),
            params.k1.to_string(),
            params.k2.to_string(),
            params.k3.to_string(),
            params.epochs.to_string(),
            format!("{:.0}", est.client_floats),
            format!("{:.0}", est.server_floats),
        ];
        let measured = match (&clients, variant) {
            (Some(clients), Variant::PriviRec | Variant::PriviRecK) => {
                let rank = if variant == Variant::PriviRec { args.k1 } else { args.k2 };
                let config = ProtocolConfig {
                    rank,
                    filter_rank: rank,
                    iterations: args.iterations,
                    seed: args.seed,
                    ..ProtocolConfig::default()
                };
                let mut agg = config.aggregator(clients.len())?;
                let filters = if variant == Variant::PriviRec {
                    run_privirec(clients, params.items, &config, &mut agg)?
                } else {
                    run_privirec_k(clients, params.items, &config, &mut agg)?
                };
                Some(reconcile_default(&est, &filters.ledger)?)
            }
            _ => None,
        };
        match measured {
            Some(r) => {
                log::info!("{r}");
                record.extend([
                    format!("{:.0}", r.predicted_bytes),
                    format!("{:.0}", r.measured_bytes),
                    format!("{:.4}", r.ratio),
                    if r.pass { "PASS" } else { "FAIL" }.to_string(),
                ]);
            }
            None => {
                record.extend([format!("{:.0}", est.client_floats * 8.0), String::new(), String::new(), String::new()]);
            }
        }
        rows.push(record);
    }
    let output = OutputArgs {
        out: args.out.clone(),
        omit_timing: true,
    };
    write_rows(&output, &COST_HEADER, rows)
}

fn build_filters(ds: &InteractionDataset, config: &ProtocolConfig, pipeline: Pipeline) -> Result<FilterSet, CliError> {
    let split = split_clients(ds);
    if split.omitted_users > 0 {
        log::warn!("{} users without train items take no part in the protocol", split.omitted_users);
    }
    let n_items = ds.n_items();
    Ok(match pipeline {
        Pipeline::Centralized => centralized_pipeline(ds, config)?,
        Pipeline::PriviRec => {
            let mut agg = config.aggregator(split.clients.len())?;
            run_privirec(&split.clients, n_items, config, &mut agg)?
        }
        Pipeline::PriviRecK => {
            let mut agg = config.aggregator(split.clients.len())?;
            run_privirec_k(&split.clients, n_items, config, &mut agg)?
        }
    })
}

fn load_data(args: &DataArgs, seed: u64) -> Result<Dataset, CliError> {
    match (&args.train, &args.test, &args.synthetic) {
        (Some(train), Some(test), None) => {
            let data = load_dataset(train, test)?;
            Ok(Dataset {
                label: dataset_label(train),
                data,
            })
        }
        (None, None, Some(spec)) => {
            let (n, items, density) = parse_synthetic(spec)?;
            let data = generate_synthetic(n, items, density, seed)?;
            Ok(Dataset {
                label: format!("synthetic-{n}x{items}-{density}-s{seed}"),
                data,
            })
        }
        _ => Err(CliError::Usage(
            "choose a dataset with --train and --test, or with --synthetic N,ITEMS,DENSITY".into(),
        )),
    }
}

fn dataset_label(train: &Path) -> String {
    train
        .parent()
        .and_then(Path::file_name)
        .or_else(|| train.file_stem())
        .map(|s| s.to_string_lossy().into_owned())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "dataset".into())
}

fn parse_synthetic(spec: &str) -> Result<(usize, usize, f64), CliError> {
    let bad = || CliError::Usage(format!("--synthetic expects N,ITEMS,DENSITY, got {spec:?}"));
    let parts: Vec<&str> = spec.split(',').map(str::trim).collect();
    let [n, items, density] = parts.as_slice() else {
        return Err(bad());
    };
    Ok((
        n.parse().map_err(|_| bad())?,
        items.parse().map_err(|_| bad())?,
        density.parse().map_err(|_| bad())?,
    ))
}

fn protocol_config(args: &ProtocolArgs, rank: usize, gamma: f64) -> ProtocolConfig {
    ProtocolConfig {
        alpha: args.alpha,
        iterations: args.iterations,
        rank,
        filter_rank: args.filter_rank.unwrap_or(rank).min(rank),
        gamma,
        seed: args.seed,
        fraction_bits: args.fraction_bits,
        degree_factor: args.degree_factor,
        two_qr: args.two_qr,
        ..ProtocolConfig::default()
    }
}

fn scoring_config(args: &ScoringArgs) -> ScoringConfig {
    ScoringConfig {
        method: match args.method {
            MethodArg::Gfcf => Method::GfCf,
            MethodArg::Turbocf => Method::TurboCf,
        },
        gamma: args.gamma,
        turbo: TurboConfig {
            s: args.turbo_s,
            alphas: args.turbo_alphas.clone(),
            mode: match args.turbo_mode {
                PolyArg::AsWritten => PolyMode::AsWritten,
                PolyArg::Polynomial => PolyMode::Polynomial,
            },
        },
    }
}

fn eval_options(args: &ScoringArgs) -> EvalOptions {
    EvalOptions {
        recall: match args.recall {
            RecallArg::Min => RecallConvention::MinTestK,
            RecallArg::Test => RecallConvention::TestSize,
        },
        ..EvalOptions::default()
    }
}

fn sweep_path(prefix: &Path, rank: usize) -> PathBuf {
    let mut name = prefix.as_os_str().to_owned();
    name.push(format!(".k{rank}.prvf"));
    PathBuf::from(name)
}

fn write_filters(filters: &FilterSet, path: &Path) -> Result<(), CliError> {
    let context = || format!("writing {}", path.display());
    let file = File::create(path).map_err(|e| CliError::io(context(), e))?;
    let mut out = BufWriter::new(file);
    filters.write_to(&mut out).map_err(|e| CliError::io(context(), e))?;
    out.flush().map_err(|e| CliError::io(context(), e))
}

fn write_rows(output: &OutputArgs, header: &[&str], rows: Vec<Vec<String>>) -> Result<(), CliError> {
    let sink: Box<dyn Write> = match &output.out {
        Some(path) => Box::new(File::create(path).map_err(|e| CliError::io(format!("creating {}", path.display()), e))?),
        None => Box::new(io::stdout().lock()),
    };
    let mut writer = csv::Writer::from_writer(sink);
    writer.write_record(header)?;
    for row in rows {
        writer.write_record(&row)?;
    }
    writer.flush().map_err(|e| CliError::io("flushing csv output", e))
}
