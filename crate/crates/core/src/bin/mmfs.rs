//! `mmfs`: generate benchmarks, run the search, evaluate masks, estimate
//! Bayes error.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mmfs::config::{DatasetSource, ExperimentConfig, Overrides};
use mmfs::data::{
    bayes_error_mc, conditional_pmc, format_mask, load_multiview_csv, read_mask_file, write_multiview_csv,
    MultiViewDataset, SyntheticProblem, SyntheticSpec, Task,
};
use mmfs::eval::{evaluate_on_test, EvalOptions};
use mmfs::metrics::EvaluationReport;
use mmfs::search::{run_mmfs_ga, NicheConfig, Preset, RunReport};
use mmfs::{Error, ErrorKind, Result};

#[derive(Parser)]
#[command(name = "mmfs", version, about = "Multi-view multi-objective feature selection")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "MMFS_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write synthetic train/test replicates as CSV plus manifests.
    Synth {
        #[arg(long, default_value = "binary")]
        task: Task,
        #[arg(long, default_value_t = 1)]
        replicates: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 500)]
        view_dim: usize,
    },
    /// Run the search as described by a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        preset: Option<Preset>,
        /// Monte Carlo samples for the conditional error of synthetic runs;
        /// 0 skips it.
        #[arg(long, default_value_t = 0)]
        pmc_samples: usize,
    },
    /// Train on a manifest restricted to a mask and report test metrics.
    Eval {
        #[arg(long)]
        mask: PathBuf,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo Bayes error of the synthetic benchmark.
    Bayes {
        #[arg(long, default_value = "binary")]
        task: Task,
        /// 1-based view numbers, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "1,2")]
        views: Vec<usize>,
        #[arg(long, default_value_t = 1_000_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.into(), source: e })?;
    }
    fs::write(path, text).map_err(|e| Error::Io { path: path.into(), source: e })
}

fn global_pool(threads: Option<usize>) -> Result<()> {
    if let Some(t) = threads {
        if t == 0 {
            return Err(Error::Config { field: "threads".into(), reason: "must be at least 1".into() });
        }
        // Fails only if a pool already exists, which is harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    Ok(())
}

fn synth_spec(task: Task, view_dim: usize) -> SyntheticSpec {
    SyntheticSpec { view_dim, ..SyntheticSpec::new(task) }
}

fn cmd_synth(task: Task, replicates: usize, seed: u64, out: &Path, view_dim: usize) -> Result<()> {
    let spec = synth_spec(task, view_dim);
    for r in 0..replicates {
        let data_seed = seed + r as u64;
        let problem = SyntheticProblem::new(&spec, data_seed)?;
        let (train, test) = problem.train_test(data_seed)?;
        let dir = out.join(format!("rep{r}"));
        write_multiview_csv(&train, &dir, "train")?;
        write_multiview_csv(&test, &dir, "test")?;
        let truth = train.informative_mask().expect("synthetic data carries ground truth");
        write(&dir.join("informative.mask"), &format_mask(&truth, &train)?)?;
        println!("{}: {} train / {} test samples, seed {data_seed}", dir.display(), train.n_samples(), test.n_samples());
    }
    Ok(())
}

fn niche_report(report: &RunReport, dataset: &MultiViewDataset) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "best_niche = {}", report.best_niche);
    let _ = writeln!(s, "best_cv_error = {:.6}", report.best_fitness.error);
    let _ = writeln!(s, "best_n_features = {}", report.best_fitness.n_features);
    let _ = writeln!(s, "evaluations = {}", report.evaluations);
    let _ = writeln!(s, "min_features_evaluated = {}", report.min_features_evaluated);
    let _ = writeln!(s, "time_total_secs = {:.3}", report.timings.total_secs);
    for (v, t) in report.timings.ivfs_secs.iter().enumerate() {
        let _ = writeln!(s, "time_ivfs.{} = {t:.3}", dataset.views[v].name);
    }
    let _ = writeln!(s, "time_bvfs_secs = {:.3}", report.timings.bvfs_secs);
    for n in &report.niches {
        let genes: Vec<String> = n.genes.genes.iter().map(|g| g.to_string()).collect();
        let counts: Vec<String> = n.selected_per_view.iter().map(|c| c.to_string()).collect();
        let _ = writeln!(
            s,
            "niche.{} = cv_error {:.6}, features {}, genes {}, per_view {}",
            n.niche,
            n.fitness.error,
            n.fitness.n_features,
            genes.join(","),
            counts.join(",")
        );
    }
    s
}

fn trajectory_csv(report: &RunReport, dataset: &MultiViewDataset) -> String {
    let mut s = String::from("stage,view,niche,generation,best_error,mean_error,similarity\n");
    for (v, per_niche) in report.ivfs_trajectories.iter().enumerate() {
        for (n, traj) in per_niche.iter().enumerate() {
            for g in traj {
                let sim = g.similarity.map(|x| format!("{x:.6}")).unwrap_or_default();
                let _ = writeln!(
                    s,
                    "ivfs,{},{n},{},{:.6},{:.6},{sim}",
                    dataset.views[v].name, g.generation, g.best_error, g.mean_error
                );
            }
        }
    }
    for n in &report.niches {
        for g in &n.bvfs_trajectory {
            let _ = writeln!(s, "bvfs,,{},{},{:.6},{:.6},", n.niche, g.generation, g.best_error, g.mean_error);
        }
    }
    s
}

fn metadata(cfg: &ExperimentConfig, replicate: usize, data_seed: Option<u64>) -> Result<String> {
    let mut s = String::new();
    let _ = writeln!(s, "version = \"{}\"", mmfs::VERSION);
    let _ = writeln!(s, "config_hash = \"{}\"", cfg.hash()?);
    let _ = writeln!(s, "seed = {}", cfg.seed);
    let _ = writeln!(s, "replicate = {replicate}");
    let _ = writeln!(s, "search_seed = {}", cfg.seed + replicate as u64);
    if let Some(d) = data_seed {
        let _ = writeln!(s, "data_seed = {d}");
    }
    let _ = writeln!(s, "\n# Resolved configuration\n[config]");
    // Re-home the config under [config] by prefixing its tables.
    for line in cfg.to_toml()?.lines() {
        if let Some(rest) = line.strip_prefix('[') {
            let _ = writeln!(s, "[config.{rest}");
        } else {
            let _ = writeln!(s, "{line}");
        }
    }
    Ok(s)
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

struct Replicate {
    train: MultiViewDataset,
    test: Option<MultiViewDataset>,
    problem: Option<SyntheticProblem>,
    data_seed: Option<u64>,
    dir: PathBuf,
}

fn replicates(cfg: &ExperimentConfig) -> Result<Vec<Replicate>> {
    match &cfg.dataset {
        DatasetSource::Synthetic { replicates, data_seed, .. } => {
            let spec = cfg.dataset.synthetic_spec().expect("synthetic");
            let base = data_seed.unwrap_or(cfg.seed);
            (0..*replicates)
                .map(|r| {
                    let seed = base + r as u64;
                    let problem = SyntheticProblem::new(&spec, seed)?;
                    let (train, test) = problem.train_test(seed)?;
                    Ok(Replicate {
                        train,
                        test: Some(test),
                        problem: Some(problem),
                        data_seed: Some(seed),
                        dir: cfg.out_dir.join(format!("rep{r}")),
                    })
                })
                .collect()
        }
        DatasetSource::Manifest { train, test } => Ok(vec![Replicate {
            train: load_multiview_csv(train)?,
            test: test.as_deref().map(load_multiview_csv).transpose()?,
            problem: None,
            data_seed: None,
            dir: cfg.out_dir.clone(),
        }]),
    }
}

fn cmd_run(cfg: &ExperimentConfig, pmc_samples: usize) -> Result<()> {
    let reps = replicates(cfg)?;
    let mut table = String::from("experiment,accuracy\n");
    let mut accs = Vec::new();
    let mut summary = String::from("replicate,cv_error,n_features,test_balanced_accuracy,test_auc,conditional_pmc\n");
    for (r, rep) in reps.iter().enumerate() {
        eprintln!("replicate {}: {} samples, {} features", r + 1, rep.train.n_samples(), rep.train.n_features());
        // Replicate r searches with seed + r, like its data.
        let search = NicheConfig { seed: cfg.seed + r as u64, ..cfg.search.clone() };
        let report = run_mmfs_ga(&rep.train, &search)?;
        write(&rep.dir.join("mask.txt"), &format_mask(&report.best_mask, &rep.train)?)?;
        write(&rep.dir.join("report.txt"), &niche_report(&report, &rep.train))?;
        write(&rep.dir.join("trajectory.csv"), &trajectory_csv(&report, &rep.train))?;
        write(&rep.dir.join("metadata.toml"), &metadata(cfg, r, rep.data_seed)?)?;
        let mut row = format!("{},{:.6},{}", r + 1, report.best_fitness.error, report.best_fitness.n_features);
        if let Some(test) = &rep.test {
            let (eval, model) = evaluate_on_test(&rep.train, test, &report.best_mask, &cfg.search.eval)?;
            write(&rep.dir.join("test_report.txt"), &eval.to_key_value())?;
            write(&rep.dir.join("test_report.csv"), &format!("{}\n{}\n", eval.csv_header(), eval.csv_row()))?;
            let _ = writeln!(table, "Experiment {},{:.2}", r + 1, eval.balanced_accuracy);
            accs.push(eval.balanced_accuracy);
            let pmc = match (&rep.problem, pmc_samples) {
                (Some(p), n) if n > 0 => {
                    let est = conditional_pmc(&model, &report.best_mask, p, n, search.seed)?;
                    format!("{:.6}", est.value)
                }
                _ => String::new(),
            };
            let _ = write!(row, ",{:.6},{:.6},{pmc}", eval.balanced_accuracy, eval.auc);
            println!("Experiment {}: balanced accuracy {:.4}", r + 1, eval.balanced_accuracy);
        } else {
            row.push_str(",,,");
        }
        let _ = writeln!(summary, "{row}");
    }
    if !accs.is_empty() {
        let (m, sd) = mean_std(&accs);
        let _ = writeln!(table, "Mean,{m:.2} ± {sd:.3}");
        println!("Mean: {m:.4} ± {sd:.4}");
        write(&cfg.out_dir.join("table4.csv"), &table)?;
    }
    write(&cfg.out_dir.join("summary.csv"), &summary)?;
    Ok(())
}

fn cmd_eval(mask: &Path, train: &Path, test: &Path, out: Option<&Path>) -> Result<EvaluationReport> {
    let train = load_multiview_csv(train)?;
    let test = load_multiview_csv(test)?;
    let mask = read_mask_file(mask, &train)?;
    let (report, _) = evaluate_on_test(&train, &test, &mask, &EvalOptions::default())?;
    let text = report.to_key_value();
    print!("{text}");
    if let Some(p) = out {
        write(p, &text)?;
    }
    Ok(report)
}

fn cmd_bayes(task: Task, views: &[usize], samples: usize, seed: u64) -> Result<()> {
    let spec = SyntheticSpec::new(task);
    if views.iter().any(|&v| v == 0) {
        return Err(Error::InvalidArgument("views are numbered from 1".into()));
    }
    let zero_based: Vec<usize> = views.iter().map(|v| v - 1).collect();
    let est = bayes_error_mc(&spec, &zero_based, samples, seed)?;
    println!("bayes_error = {:.6}", est.value);
    println!("std_error = {:.6}", est.std_error);
    println!("n_samples = {}", est.n_samples);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { task, replicates, seed, out, view_dim } => {
            global_pool(cli.threads)?;
            cmd_synth(task, replicates, seed, &out, view_dim)
        }
        Command::Run { config, seed, out, preset, pmc_samples } => {
            let overrides = Overrides { preset, seed, out_dir: out, threads: cli.threads };
            let cfg = ExperimentConfig::load(&config, &overrides)?;
            cmd_run(&cfg, pmc_samples)
        }
        Command::Eval { mask, train, test, out } => {
            global_pool(cli.threads)?;
            cmd_eval(&mask, &train, &test, out.as_deref()).map(|_| ())
        }
        Command::Bayes { task, views, samples, seed } => {
            global_pool(cli.threads)?;
            cmd_bayes(task, &views, samples, seed)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.kind() {
                ErrorKind::Config => 2,
                ErrorKind::Data => 3,
                ErrorKind::Runtime => 4,
            })
        }
    }
}
