//! Experiment runner.
//!
//! ```text
//! rgc --mode train --config run.conf --out metrics.csv
//! rgc --mode cost-sweep --out sweep.csv
//! rgc --mode selection-bench
//! rgc --mode collective-test
//! ```
//!
//! Modes:
//! * `train`: data-parallel training with compressed synchronization;
//!   per-step CSV metrics plus a final summary.
//! * `cost-sweep`: analytic sparse-vs-dense timing sweep over p.
//! * `selection-bench`: wall times of the four selection algorithms.
//! * `collective-test`: allgather/allreduce agreement, step and byte report.
//!
//! Exit codes: 0 ok, 2 configuration error, 3 runtime error.
//!
//! The sockets topology runs one rank per process: pass `--rank N` for each,
//! or omit `--rank` to let the parent spawn all local ranks itself.

use rgc::codec::SparseMessage;
use rgc::collective::{allgather_sparse, allreduce_dense, Communicator, SocketTransport};
use rgc::config::{ConfigError, DatasetSpec, ExperimentConfig, Mode, Topology};
use rgc::cost;
use rgc::data::Dataset;
use rgc::metrics;
use rgc::model::{Activation, Loss, MlpModel};
use rgc::rng::Rng;
use rgc::selection::{self, SelectorConfig, ThresholdCache};
use rgc::tensor::DenseTensor;
use rgc::trainer::{self, RunSummary, StepObserver, TrainError};
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::{Arc, Mutex};
use std::time::Instant;

const USAGE: &str = "\
usage: rgc [--mode MODE] [--config PATH] [--rank N] [--seed N] [--out PATH]

modes: train | cost-sweep | selection-bench | collective-test
config: flat `key = value` file; flags override file values
exit codes: 0 ok, 2 config error, 3 runtime error";

struct CliArgs {
    mode: Option<String>,
    config: Option<PathBuf>,
    rank: Option<usize>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    help: bool,
}

fn parse_args(args: &[String]) -> Result<CliArgs, String> {
    let mut parsed = CliArgs {
        mode: None,
        config: None,
        rank: None,
        seed: None,
        out: None,
        help: false,
    };
    let mut it = args.iter();
    while let Some(arg) = it.next() {
        let mut take = |name: &str| {
            it.next()
                .cloned()
                .ok_or_else(|| format!("{name} requires a value"))
        };
        match arg.as_str() {
            "--mode" => parsed.mode = Some(take("--mode")?),
            "--config" => parsed.config = Some(PathBuf::from(take("--config")?)),
            "--rank" => {
                parsed.rank = Some(
                    take("--rank")?
                        .parse()
                        .map_err(|e| format!("--rank: {e}"))?,
                )
            }
            "--seed" => {
                parsed.seed = Some(
                    take("--seed")?
                        .parse()
                        .map_err(|e| format!("--seed: {e}"))?,
                )
            }
            "--out" => parsed.out = Some(PathBuf::from(take("--out")?)),
            "--help" | "-h" => parsed.help = true,
            other => return Err(format!("unknown flag {other:?}\n{USAGE}")),
        }
    }
    Ok(parsed)
}

fn load_config(cli: &CliArgs) -> Result<ExperimentConfig, ConfigError> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::from_path(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(mode) = &cli.mode {
        cfg.mode = Mode::parse(mode)?;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
        cfg.train.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out = Some(out.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn build_dataset(cfg: &ExperimentConfig) -> Result<Dataset, String> {
    match &cfg.dataset {
        DatasetSpec::Blobs {
            samples,
            dim,
            classes,
            separation,
        } => Ok(Dataset::gaussian_blobs(
            *samples,
            *dim,
            *classes,
            *separation,
            cfg.seed,
        )),
        DatasetSpec::Csv(path) => Dataset::from_csv_path(path).map_err(|e| e.to_string()),
    }
}

fn build_model(cfg: &ExperimentConfig, dataset: &Dataset) -> MlpModel {
    let mut dims = vec![dataset.dim()];
    dims.extend_from_slice(&cfg.hidden);
    dims.push(dataset.classes());
    let mut rng = Rng::new(cfg.seed);
    MlpModel::new(&dims, Activation::Tanh, Loss::SoftmaxCrossEntropy, &mut rng)
}

type SharedWriter = Arc<Mutex<std::io::BufWriter<std::fs::File>>>;

fn open_out(path: &PathBuf) -> Result<std::io::BufWriter<std::fs::File>, String> {
    std::fs::File::create(path)
        .map(std::io::BufWriter::new)
        .map_err(|e| format!("cannot create {}: {e}", path.display()))
}

fn csv_sink(
    cfg: &ExperimentConfig,
    pairs: &[(String, String)],
) -> Result<Option<SharedWriter>, String> {
    match &cfg.out {
        Some(path) => {
            let mut writer = open_out(path)?;
            metrics::write_train_header(&mut writer, pairs, cfg.world_size)
                .map_err(|e| e.to_string())?;
            Ok(Some(Arc::new(Mutex::new(writer))))
        }
        None => Ok(None),
    }
}

/// Streams one CSV row per step, flushing as it goes so failed runs leave
/// partial output behind.
fn row_observer(sink: &Option<SharedWriter>) -> Option<StepObserver> {
    sink.clone().map(|sink| {
        Box::new(move |row: &rgc::trainer::WorkerStepRow| {
            let mut writer = sink.lock().unwrap();
            let _ = metrics::write_train_row(&mut *writer, row);
            let _ = writer.flush();
        }) as StepObserver
    })
}

fn print_summary(summary: &RunSummary) {
    println!(
        "train done: {} steps, final accuracy {:.4}, final loss {:.6}, \
         rank0 bytes {}, mean union ratio {:.6}",
        summary.steps.len(),
        summary.final_accuracy,
        summary.final_loss,
        summary.total_bytes_rank0,
        summary.mean_union_ratio()
    );
}

fn run_train(cfg: &ExperimentConfig) -> Result<(), String> {
    let dataset = build_dataset(cfg)?;
    let model = build_model(cfg, &dataset);
    let pairs = cfg.resolved_pairs();

    match &cfg.topology {
        Topology::Threads => {
            let sink = csv_sink(cfg, &pairs)?;
            let observer = row_observer(&sink);
            let summary = trainer::run_threads_with_observer(
                &model,
                &dataset,
                &cfg.train,
                cfg.world_size,
                observer,
            )
            .map_err(train_error)?;
            if let Some(sink) = sink {
                let mut writer = sink.lock().unwrap();
                metrics::write_train_summary(&mut *writer, &summary)
                    .and_then(|_| writer.flush())
                    .map_err(|e| e.to_string())?;
            }
            print_summary(&summary);
            Ok(())
        }
        Topology::Sockets(addrs) => {
            let addrs = addrs.clone();
            match rank_from_env() {
                Some(rank) => {
                    let transport = SocketTransport::connect(rank, &addrs, cfg.train.comm_timeout)
                        .map_err(|e| e.to_string())?;
                    let mut comm =
                        Communicator::new(Box::new(transport)).map_err(|e| e.to_string())?;

                    // Rank 0 owns the metrics file.
                    let sink = if rank == 0 {
                        csv_sink(cfg, &pairs)?
                    } else {
                        None
                    };
                    let observer = row_observer(&sink);

                    let output =
                        trainer::run_worker(model, &mut comm, &cfg.train, &dataset, observer)
                            .map_err(train_error)?;
                    if rank == 0 {
                        println!(
                            "rank 0 done: final accuracy {:.4}, final loss {:.6}, bytes {}",
                            output.final_accuracy, output.final_loss, output.total_bytes
                        );
                        if let Some(sink) = sink {
                            let mut writer = sink.lock().unwrap();
                            writeln!(writer, "# final_accuracy = {}", output.final_accuracy)
                                .and_then(|_| {
                                    writeln!(writer, "# final_loss = {}", output.final_loss)
                                })
                                .and_then(|_| writer.flush())
                                .map_err(|e| e.to_string())?;
                        }
                    }
                    Ok(())
                }
                // Helper path: spawn one local process per rank.
                None => spawn_local_ranks(cfg),
            }
        }
    }
}

/// Rank is carried in an env var so spawned children can reuse an
/// identical command line; `--rank` sets it in `main`.
fn rank_from_env() -> Option<usize> {
    std::env::var("RGC_RANK").ok().and_then(|v| v.parse().ok())
}

/// Spawns one child process per rank, handing each the fully resolved
/// config through a temp file so every rank sees identical settings.
fn spawn_local_ranks(cfg: &ExperimentConfig) -> Result<(), String> {
    let exe = std::env::current_exe().map_err(|e| e.to_string())?;
    let world = cfg.world_size;

    let mut resolved = String::new();
    for (k, v) in cfg.resolved_pairs() {
        resolved.push_str(&format!("{k} = {v}\n"));
    }
    let tmp = std::env::temp_dir().join(format!("rgc-launch-{}.conf", std::process::id()));
    std::fs::write(&tmp, resolved).map_err(|e| e.to_string())?;

    let mut children = Vec::new();
    for rank in 0..world {
        let mut command = std::process::Command::new(&exe);
        command.arg("--config").arg(&tmp);
        // The output path is not part of the resolved pairs; forward it.
        if let Some(out) = &cfg.out {
            command.arg("--out").arg(out);
        }
        let child = command
            .env("RGC_RANK", rank.to_string())
            .spawn()
            .map_err(|e| format!("spawn rank {rank}: {e}"))?;
        children.push((rank, child));
    }
    let mut failed = Vec::new();
    for (rank, mut child) in children {
        let status = child.wait().map_err(|e| format!("wait rank {rank}: {e}"))?;
        if !status.success() {
            failed.push(rank);
        }
    }
    let _ = std::fs::remove_file(&tmp);
    if failed.is_empty() {
        Ok(())
    } else {
        Err(format!("ranks {failed:?} exited with failure"))
    }
}

fn train_error(e: TrainError) -> String {
    e.to_string()
}

fn run_cost_sweep(cfg: &ExperimentConfig) -> Result<(), String> {
    let mut lines = String::new();
    for (k, v) in cfg.resolved_pairs() {
        lines.push_str(&format!("# {k} = {v}\n"));
    }
    lines.push_str("p,d,t_sparse,t_dense,speedup,bandwidth_ratio\n");
    let mut p = cfg.cost.p_min;
    while p <= cfg.cost.p_max {
        let params = cost::CostParams {
            p,
            ..cfg.cost.params
        };
        let ts = cost::t_sparse(&params, cfg.cost.mode);
        let td = cost::t_dense(&params, cfg.cost.mode);
        lines.push_str(&format!(
            "{p},{},{ts},{td},{},{}\n",
            params.d,
            td / ts,
            cost::bandwidth_ratio(p, params.d)
        ));
        p *= 2;
    }
    match &cfg.out {
        Some(path) => {
            std::fs::write(path, lines).map_err(|e| e.to_string())?;
            println!("cost sweep written to {}", path.display());
        }
        None => print!("{lines}"),
    }
    Ok(())
}

fn run_selection_bench(cfg: &ExperimentConfig) -> Result<(), String> {
    let mut lines = String::from("size,algorithm,total_ms,mean_selected\n");
    let sel_cfg = SelectorConfig {
        ratio: cfg.bench.ratio,
        ..Default::default()
    };
    for &size in &cfg.bench.sizes {
        // Standard uniform data, matching the usual benchmark setup.
        let mut rng = Rng::new(cfg.seed);
        let mut values = vec![0.0f32; size];
        for v in &mut values {
            *v = rng.next_f32();
        }
        let x = DenseTensor::from_vec(values);
        let k = selection::k_for_ratio(size, cfg.bench.ratio);

        type Algo<'a> = (&'a str, Box<dyn Fn() -> usize + 'a>);
        let algos: Vec<Algo> = vec![
            (
                "exact",
                Box::new(|| selection::exact_top_k(&x, k).unwrap().count()),
            ),
            (
                "trimmed",
                Box::new(|| selection::trimmed_top_k(&x, k, &sel_cfg).unwrap().count()),
            ),
            (
                "threshold-bs",
                Box::new(|| {
                    selection::threshold_binary_search(&x, k, &sel_cfg)
                        .unwrap()
                        .count()
                }),
            ),
        ];
        for (name, run) in algos {
            let start = Instant::now();
            let mut total = 0usize;
            for _ in 0..cfg.bench.reps {
                total += run();
            }
            let ms = start.elapsed().as_secs_f64() * 1e3;
            lines.push_str(&format!(
                "{size},{name},{ms:.3},{}\n",
                total / cfg.bench.reps
            ));
        }
        // The sampled variant amortizes searches across a call sequence.
        let mut cache = ThresholdCache::new();
        let start = Instant::now();
        let mut total = 0usize;
        for _ in 0..cfg.bench.reps {
            total += selection::sampled_threshold_search(&x, k, &sel_cfg, &mut cache)
                .unwrap()
                .count();
        }
        let ms = start.elapsed().as_secs_f64() * 1e3;
        lines.push_str(&format!(
            "{size},sampled-bs,{ms:.3},{}\n",
            total / cfg.bench.reps
        ));
    }
    match &cfg.out {
        Some(path) => {
            std::fs::write(path, lines).map_err(|e| e.to_string())?;
            println!("selection bench written to {}", path.display());
        }
        None => print!("{lines}"),
    }
    Ok(())
}

fn run_collective_test(cfg: &ExperimentConfig) -> Result<(), String> {
    let p = cfg.world_size;
    let elements = cfg.ct_elements;
    let seed = cfg.seed;
    match &cfg.topology {
        Topology::Threads => {
            let results = run_collective_ranks_threads(p, cfg.train.comm_timeout, move |comm| {
                collective_checks(comm, elements, seed)
            })?;
            report_collective(&results, p, elements)
        }
        Topology::Sockets(addrs) => {
            let addrs = addrs.clone();
            match rank_from_env() {
                Some(rank) => {
                    let transport = SocketTransport::connect(rank, &addrs, cfg.train.comm_timeout)
                        .map_err(|e| e.to_string())?;
                    let mut comm =
                        Communicator::new(Box::new(transport)).map_err(|e| e.to_string())?;
                    let result = collective_checks(&mut comm, elements, seed)?;
                    println!(
                        "rank {rank}: allgather steps {}, allreduce steps {}, \
                         max_rel_err {:.2e}, bytes {}",
                        result.gather_steps,
                        result.reduce_steps,
                        result.max_rel_err,
                        result.total_bytes
                    );
                    if result.max_rel_err >= 1e-5 {
                        return Err("allreduce disagrees with oracle".into());
                    }
                    Ok(())
                }
                None => spawn_local_ranks(cfg),
            }
        }
    }
}

struct CollectiveCheck {
    gather_steps: u64,
    gather_bytes: u64,
    frame_bytes: usize,
    reduce_steps: u64,
    reduce_bytes: u64,
    total_bytes: u64,
    max_rel_err: f64,
}

fn run_collective_ranks_threads<T: Send + 'static>(
    p: usize,
    timeout: std::time::Duration,
    f: impl Fn(&mut Communicator) -> Result<T, String> + Send + Sync + 'static,
) -> Result<Vec<T>, String> {
    let f = Arc::new(f);
    let mut handles = Vec::new();
    for transport in rgc::collective::InProcTransport::mesh(p, timeout) {
        let f = f.clone();
        handles.push(std::thread::spawn(move || {
            let mut comm = Communicator::new(Box::new(transport)).map_err(|e| e.to_string())?;
            f(&mut comm)
        }));
    }
    let mut out = Vec::new();
    for h in handles {
        out.push(h.join().map_err(|_| "worker panicked".to_string())??);
    }
    Ok(out)
}

/// One allgather plus one allreduce with oracle and instrumentation checks.
fn collective_checks(
    comm: &mut Communicator,
    elements: usize,
    seed: u64,
) -> Result<CollectiveCheck, String> {
    let rank = comm.rank();
    let p = comm.world_size();

    // Sparse allgather of equal-size messages.
    let indices: Vec<u32> = (0..8u32).map(|i| i * 7 + rank as u32).collect();
    let values: Vec<f32> = indices.iter().map(|&i| i as f32 * 0.5).collect();
    let msg = SparseMessage::dense(indices, values).map_err(|e| e.to_string())?;
    let frame_bytes = msg.encoded_len();

    let before = comm.stats();
    let gathered = allgather_sparse(comm, &msg).map_err(|e| e.to_string())?;
    let gather_delta = comm.stats().delta_since(&before);
    if gathered.len() != p {
        return Err(format!("gathered {} of {p} messages", gathered.len()));
    }

    // Dense allreduce against a per-rank reproducible vector.
    let mut rng = Rng::new(seed + rank as u64);
    let mut mine = vec![0.0f32; elements];
    rng.fill_normal(&mut mine);
    let x = DenseTensor::from_vec(mine);

    let before = comm.stats();
    let summed = allreduce_dense(comm, &x).map_err(|e| e.to_string())?;
    let reduce_delta = comm.stats().delta_since(&before);

    // Direct-sum oracle in f64.
    let mut oracle = vec![0.0f64; elements];
    for r in 0..p {
        let mut rng = Rng::new(seed + r as u64);
        let mut v = vec![0.0f32; elements];
        rng.fill_normal(&mut v);
        for (o, val) in oracle.iter_mut().zip(&v) {
            *o += *val as f64;
        }
    }
    let mut max_rel_err = 0.0f64;
    for (got, want) in summed.as_slice().iter().zip(&oracle) {
        let rel = (*got as f64 - want).abs() / want.abs().max(1.0);
        max_rel_err = max_rel_err.max(rel);
    }

    Ok(CollectiveCheck {
        gather_steps: gather_delta.steps,
        gather_bytes: gather_delta.bytes_sent,
        frame_bytes,
        reduce_steps: reduce_delta.steps,
        reduce_bytes: reduce_delta.bytes_sent,
        total_bytes: comm.stats().bytes_sent,
        max_rel_err,
    })
}

fn report_collective(results: &[CollectiveCheck], p: usize, elements: usize) -> Result<(), String> {
    let lg = (p as f64).log2().round() as u64;
    let mut all_ok = true;
    for (rank, r) in results.iter().enumerate() {
        let gather_report = cost::reconcile_allgather(
            &rgc::collective::TransportStats {
                messages_sent: 0,
                bytes_sent: r.gather_bytes,
                steps: r.gather_steps,
            },
            p as u64,
            r.frame_bytes as f64,
        );
        let reduce_report = cost::reconcile_allreduce(
            &rgc::collective::TransportStats {
                messages_sent: 0,
                bytes_sent: r.reduce_bytes,
                steps: r.reduce_steps,
            },
            p as u64,
            elements as u64,
        );
        let ok = r.gather_steps == lg
            && r.reduce_steps == 2 * lg
            && r.max_rel_err < 1e-5
            && gather_report.bytes_deviation_pct.abs() < 1.0;
        all_ok &= ok;
        println!(
            "rank {rank}: allgather {{{gather_report}}} allreduce {{{reduce_report}}} \
             max_rel_err {:.2e} -> {}",
            r.max_rel_err,
            if ok { "ok" } else { "MISMATCH" }
        );
    }
    if all_ok {
        println!("collective-test: all ranks agree");
        Ok(())
    } else {
        Err("collective-test found mismatches".to_string())
    }
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let cli = match parse_args(&args) {
        Ok(cli) => cli,
        Err(message) => {
            eprintln!("{message}");
            return ExitCode::from(2);
        }
    };
    if cli.help {
        println!("{USAGE}");
        return ExitCode::SUCCESS;
    }
    // Forward --rank through the environment so spawned children can reuse
    // an identical command line.
    if let Some(rank) = cli.rank {
        std::env::set_var("RGC_RANK", rank.to_string());
    }
    let cfg = match load_config(&cli) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(2);
        }
    };
    let result = match cfg.mode {
        Mode::Train => run_train(&cfg),
        Mode::CostSweep => run_cost_sweep(&cfg),
        Mode::SelectionBench => run_selection_bench(&cfg),
        Mode::CollectiveTest => run_collective_test(&cfg),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::from(3)
        }
    }
}
