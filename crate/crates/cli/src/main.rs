use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ivl_core::backend::{BackendModel, SpeakerTemplate};
use ivl_core::eval::{compute_eer, trials_to_csv};
use ivl_core::gmm::{accumulate_all, train_ubm, DiagonalGmm};
use ivl_core::harness::{
    enroll, extract_ivectors, load_features, parse_manifest, read_jsonl, run_experiment, score_test_set, train_backend,
    write_jsonl, ExperimentConfig, IvectorRecord, System, TemplateRecord,
};
use ivl_core::synth::{generate_corpus, DatasetTag, SplitRole, MANIFEST_FILE};
use ivl_core::tv::{train_t_matrix, TotalVariabilityModel};
use ivl_core::{derive_seed, Error, Result};

/// i-vector speaker recognition pipeline and enrollment-composition experiment.
#[derive(Parser)]
#[command(name = "ivl", version)]
struct Cli {
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML configuration; paths inside are relative to its directory.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a setting, e.g. `--set ubm.components=32`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    fn load(&self, require_seed: bool) -> Result<ExperimentConfig> {
        ExperimentConfig::load(self.config.as_deref(), self.seed, &self.overrides, require_seed)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic corpus (WAV files and manifest.jsonl).
    Synth {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the UBM on the manifest's background utterances.
    UbmTrain {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the total variability matrix on background utterances.
    TvTrain {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        ubm: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Extract i-vectors (JSON lines) for manifest entries.
    Extract {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        ubm: PathBuf,
        #[arg(long)]
        tv: PathBuf,
        /// Only entries with this role (BACKGROUND, ENROLL or TEST).
        #[arg(long)]
        role: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train LDA, WCCN and PLDA on i-vectors.
    BackendTrain {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        ivectors: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build speaker templates from SYS1 (TR1) or SYS2 (TR2) enrollment.
    Enroll {
        #[arg(long)]
        backend: PathBuf,
        #[arg(long)]
        ivectors: PathBuf,
        #[arg(long)]
        system: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score every template against every utterance of a test set.
    Score {
        #[arg(long)]
        backend: PathBuf,
        #[arg(long)]
        templates: PathBuf,
        #[arg(long)]
        ivectors: PathBuf,
        /// TS1..TS7
        #[arg(long)]
        test_set: String,
        /// Trial CSV.
        #[arg(long)]
        out: PathBuf,
        /// Optional score-matrix CSV.
        #[arg(long)]
        matrix: Option<PathBuf>,
    },
    /// EER of a trial CSV.
    Eval {
        #[arg(long)]
        scores: PathBuf,
    },
    /// Run the whole experiment and write report.md / report.csv.
    Experiment {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Overrides the configured output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("IVL_LOG", "info")).init();
    let cli = Cli::parse();
    let result = rayon_pool(cli.jobs).and_then(|pool| pool.install(|| run(cli)));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn rayon_pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

fn load_ubm_stats(
    config: &ExperimentConfig,
    manifest: &Path,
    ubm: Option<&DiagonalGmm>,
) -> Result<(Vec<ivl_core::frontend::FeatureMatrix>, Vec<String>)> {
    let manifest = parse_manifest(manifest)?;
    let entries: Vec<_> = manifest.select(SplitRole::Background, None).collect();
    if entries.is_empty() {
        return Err(Error::InvalidInput("manifest has no background utterances".into()));
    }
    if let Some(u) = ubm {
        if u.dims() != config.frontend.output_dims() {
            return Err(Error::Config(
                "UBM dimension does not match the front-end config".into(),
            ));
        }
    }
    let ids = entries.iter().map(|e| e.utterance_id.clone()).collect();
    Ok((load_features(&manifest, &entries, &config.frontend)?, ids))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { cfg, out } => {
            let config = cfg.load(true)?;
            let manifest = generate_corpus(&config.corpus, config.seed, &out)?;
            log::info!(
                "wrote {} utterances to {}",
                manifest.entries.len(),
                out.join(MANIFEST_FILE).display()
            );
        }
        Command::UbmTrain { cfg, manifest, out } => {
            let config = cfg.load(true)?;
            let (feats, _) = load_ubm_stats(&config, &manifest, None)?;
            let (ubm, log) = train_ubm(&feats, &config.ubm, derive_seed(config.seed, "ubm"))?;
            log::info!("UBM log-likelihood per iteration: {:?}", log.log_likelihood);
            ubm.save(&out, config.ubm.variance_floor, config.seed)?;
        }
        Command::TvTrain {
            cfg,
            manifest,
            ubm,
            out,
        } => {
            let config = cfg.load(true)?;
            let ubm = DiagonalGmm::load(&ubm)?;
            let (feats, _) = load_ubm_stats(&config, &manifest, Some(&ubm))?;
            let stats = accumulate_all(&ubm, &feats)?;
            let (tv, log) = train_t_matrix(&ubm, &stats, &config.tv, derive_seed(config.seed, "tv"))?;
            log::info!("T objective per iteration: {:?}", log.objective);
            tv.save(&out)?;
        }
        Command::Extract {
            cfg,
            manifest,
            ubm,
            tv,
            role,
            out,
        } => {
            let config = cfg.load(false)?;
            let ubm = DiagonalGmm::load(&ubm)?;
            let tv = TotalVariabilityModel::load(&tv, &ubm)?;
            let manifest = parse_manifest(&manifest)?;
            let role: Option<SplitRole> = role
                .map(|r| {
                    serde_json::from_value(serde_json::Value::String(r.to_ascii_uppercase()))
                        .map_err(|_| Error::Config(format!("unknown role {r}")))
                })
                .transpose()?;
            let entries: Vec<_> = manifest
                .entries
                .iter()
                .filter(|e| role.is_none_or(|r| e.role == r))
                .collect();
            let records = extract_ivectors(&manifest, &entries, &config.frontend, &ubm, &tv)?;
            write_jsonl(&out, &records)?;
            log::info!("wrote {} i-vectors", records.len());
        }
        Command::BackendTrain { cfg, ivectors, out } => {
            let config = cfg.load(false)?;
            let records: Vec<IvectorRecord> = read_jsonl(&ivectors)?;
            let (model, warnings) = train_backend(&records, &config.backend)?;
            for w in warnings {
                log::warn!("{w}");
            }
            model.save(&out)?;
        }
        Command::Enroll {
            backend,
            ivectors,
            system,
            out,
        } => {
            let system: System = system.parse()?;
            let backend = BackendModel::load(&backend)?;
            let records: Vec<IvectorRecord> = read_jsonl(&ivectors)?;
            let templates = enroll(&backend, &records, system)?;
            let out_records: Vec<TemplateRecord> = templates.iter().map(TemplateRecord::from).collect();
            write_jsonl(&out, &out_records)?;
        }
        Command::Score {
            backend,
            templates,
            ivectors,
            test_set,
            out,
            matrix,
        } => {
            let test_set = parse_test_set(&test_set)?;
            let backend = BackendModel::load(&backend)?;
            let templates: Vec<SpeakerTemplate> = read_jsonl::<TemplateRecord>(&templates)?
                .into_iter()
                .map(SpeakerTemplate::from)
                .collect();
            let records: Vec<IvectorRecord> = read_jsonl(&ivectors)?;
            let m = score_test_set(&backend, &templates, &records, test_set)?;
            std::fs::write(&out, trials_to_csv(&m.trials())).map_err(|e| Error::io(&out, e))?;
            if let Some(p) = matrix {
                m.write_csv(&p)?;
            }
        }
        Command::Eval { scores } => {
            let (tar, non) = read_trial_csv(&scores)?;
            let (eer, threshold) = compute_eer(&tar, &non)?;
            println!(
                "EER {:.4}% at threshold {threshold:.6} ({} target, {} non-target trials)",
                100.0 * eer,
                tar.len(),
                non.len()
            );
        }
        Command::Experiment { cfg, out } => {
            let mut config = cfg.load(true)?;
            if let Some(o) = out {
                config.output_dir = o;
            }
            let report = run_experiment(&config, cli.jobs)?;
            print!("{}", report.to_markdown());
        }
    }
    Ok(())
}

fn parse_test_set(s: &str) -> Result<DatasetTag> {
    DatasetTag::ALL
        .into_iter()
        .find(|t| t.test_set_name().eq_ignore_ascii_case(s) || t.to_string().eq_ignore_ascii_case(s))
        .ok_or_else(|| Error::Config(format!("unknown test set {s}")))
}

fn read_trial_csv(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let (mut tar, mut non) = (Vec::new(), Vec::new());
    for (i, line) in text.lines().enumerate().skip(1) {
        let bad = || Error::Manifest {
            line: i + 1,
            message: format!(
                "{}: expected enroll_spk,test_utt,test_spk,score,is_target",
                path.display()
            ),
        };
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(bad());
        }
        let score: f64 = fields[3].parse().map_err(|_| bad())?;
        match fields[4] {
            "1" | "true" => tar.push(score),
            "0" | "false" => non.push(score),
            _ => return Err(bad()),
        }
    }
    Ok((tar, non))
}
