//! End-to-end enrollment-composition experiment and the stage helpers the
//! command-line tool is built from.

mod manifest;
mod records;
mod report;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use manifest::parse_manifest;
pub use records::{read_jsonl, write_jsonl, IvectorRecord, TemplateRecord};
pub use report::{ExperimentReport, ReportCell, System, REPORT_CSV_HEADER};

use crate::backend::{build_template, BackendModel, BackendOptions, SpeakerTemplate};
use crate::derive_seed;
use crate::error::{Error, Result, StageContext};
use crate::eval::{diagonal_dominance, score_matrix, trials_to_csv, ScoreMatrix, TestVector};
use crate::frontend::{extract_features, read_wav, FeatureMatrix, FrontendConfig};
use crate::gmm::{accumulate_all, accumulate_stats, train_ubm, DiagonalGmm, UbmOptions};
use crate::synth::{generate_corpus, ContentLabel, CorpusConfig, CorpusManifest, DatasetTag, ManifestEntry, SplitRole};
use crate::tv::{train_t_matrix, TotalVariabilityModel, TvOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub corpus: CorpusConfig,
    #[serde(default)]
    pub frontend: FrontendConfig,
    #[serde(default)]
    pub ubm: UbmOptions,
    #[serde(default)]
    pub tv: TvOptions,
    #[serde(default)]
    pub backend: BackendOptions,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("experiment")
}

impl ExperimentConfig {
    /// Default pipeline with the given seed.
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            output_dir: default_output_dir(),
            corpus: CorpusConfig::default(),
            frontend: FrontendConfig::default(),
            ubm: UbmOptions::default(),
            tv: TvOptions::default(),
            backend: BackendOptions::default(),
        }
    }

    /// Parses TOML text. A relative `output_dir` is taken relative to
    /// `base_dir`; `seed_override` replaces or supplies the seed.
    pub fn from_toml_str(text: &str, base_dir: &Path, seed_override: Option<u64>) -> Result<Self> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        if let Some(seed) = seed_override {
            let seed =
                i64::try_from(seed).map_err(|_| Error::Config("seed must fit in a signed 64-bit integer".into()))?;
            table.insert("seed".into(), toml::Value::Integer(seed));
        }
        let mut config: ExperimentConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        if config.output_dir.is_relative() {
            config.output_dir = base_dir.join(&config.output_dir);
        }
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: &Path, seed_override: Option<u64>) -> Result<Self> {
        Self::load(Some(path), seed_override, &[], true)
    }

    /// Config file (or defaults) plus `section.key=value` overrides. Stages
    /// that draw no random numbers pass `require_seed = false` and get seed 0
    /// when none is given.
    pub fn load(path: Option<&Path>, seed: Option<u64>, overrides: &[String], require_seed: bool) -> Result<Self> {
        let (text, base) = match path {
            Some(p) => (
                fs::read_to_string(p).map_err(|e| Error::io(p, e))?,
                p.parent().unwrap_or_else(|| Path::new(".")).to_path_buf(),
            ),
            None => (String::new(), PathBuf::from(".")),
        };
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let seed = match seed {
            Some(s) => Some(s),
            None if !require_seed && !table.contains_key("seed") => Some(0),
            None => None,
        };
        Self::from_toml_str(&table.to_string(), &base, seed)
    }

    pub fn validate(&self) -> Result<()> {
        self.corpus.validate()?;
        self.frontend.validate()?;
        self.ubm.validate()?;
        if self.tv.rank == 0 {
            return Err(Error::Config("T rank must be positive".into()));
        }
        if self.backend.lda_dim == 0 {
            return Err(Error::Config("LDA dimension must be positive".into()));
        }
        if self.corpus.speakers < 2 {
            return Err(Error::Config(
                "the experiment needs at least 2 evaluation speakers".into(),
            ));
        }
        if self.corpus.background_speakers < 2 {
            return Err(Error::Config(
                "the experiment needs at least 2 background speakers".into(),
            ));
        }
        if self.corpus.test_utterances.contains(&0) || self.corpus.enroll_neutral == 0 {
            return Err(Error::Config(
                "every test and enrollment set needs at least one utterance".into(),
            ));
        }
        if self.corpus.enroll_mixed_neutral + self.corpus.enroll_mixed_laughter == 0 {
            return Err(Error::Config("the mixed enrollment set is empty".into()));
        }
        Ok(())
    }

    /// Digest of every setting that affects results (not the output path).
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        let json = serde_json::to_vec(&c).expect("config serializes");
        Sha256::digest(json)[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{spec}` is not key=value")))?;
    let value = format!("v = {}", raw.trim())
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));
    let parts: Vec<&str> = key.trim().split('.').collect();
    let (last, sections) = parts.split_last().expect("split yields at least one part");
    let mut cur = table;
    for p in sections {
        cur = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override `{key}`: {p} is not a section")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

/// Front-end features for each entry, in entry order.
pub fn load_features(
    manifest: &CorpusManifest,
    entries: &[&ManifestEntry],
    frontend: &FrontendConfig,
) -> Result<Vec<FeatureMatrix>> {
    entries
        .par_iter()
        .map(|e| {
            let audio = read_wav(&manifest.resolve(e))?;
            extract_features(&audio, frontend).map_err(|err| match err {
                Error::NoSpeech => Error::InvalidInput(format!("{}: no speech frames", e.utterance_id)),
                other => other,
            })
        })
        .collect()
}

fn record_for(entry: &ManifestEntry, w: &nalgebra::DVector<f64>) -> IvectorRecord {
    IvectorRecord {
        utterance_id: entry.utterance_id.clone(),
        speaker_id: entry.speaker_id.clone(),
        label: entry.label,
        role: entry.role,
        dataset: entry.dataset,
        w: w.iter().copied().collect(),
    }
}

/// Audio -> features -> statistics -> i-vector, one utterance at a time.
pub fn extract_ivectors(
    manifest: &CorpusManifest,
    entries: &[&ManifestEntry],
    frontend: &FrontendConfig,
    ubm: &DiagonalGmm,
    tv: &TotalVariabilityModel,
) -> Result<Vec<IvectorRecord>> {
    entries
        .par_iter()
        .map(|e| {
            let feats = load_features(manifest, std::slice::from_ref(e), frontend)?.remove(0);
            let stats = accumulate_stats(ubm, &feats)?;
            Ok(record_for(e, &tv.extract(&stats)?.w))
        })
        .collect()
}

pub fn train_backend(records: &[IvectorRecord], options: &BackendOptions) -> Result<(BackendModel, Vec<String>)> {
    let vectors: Vec<_> = records.iter().map(|r| r.vector()).collect();
    let speakers: Vec<&str> = records.iter().map(|r| r.speaker_id.as_str()).collect();
    let (model, log) = BackendModel::train(&vectors, &speakers, options)?;
    Ok((model, log.warnings))
}

/// Templates from the system's enrollment utterances, ordered by speaker.
pub fn enroll(backend: &BackendModel, records: &[IvectorRecord], system: System) -> Result<Vec<SpeakerTemplate>> {
    let mut by_speaker: BTreeMap<&str, Vec<nalgebra::DVector<f64>>> = BTreeMap::new();
    for r in records
        .iter()
        .filter(|r| r.role == SplitRole::Enroll && r.dataset == Some(system.enroll_dataset()))
    {
        if r.label.contains(ContentLabel::SpeechLaugh) {
            return Err(Error::InvalidInput(format!(
                "{}: speech-laugh content is not allowed in enrollment",
                r.utterance_id
            )));
        }
        by_speaker
            .entry(&r.speaker_id)
            .or_default()
            .push(backend.transform(&r.vector())?);
    }
    if by_speaker.is_empty() {
        return Err(Error::InvalidInput(format!(
            "no {} enrollment utterances",
            system.enroll_set_name()
        )));
    }
    by_speaker.iter().map(|(spk, vs)| build_template(spk, vs)).collect()
}

/// Every template against every test utterance of one test set.
pub fn score_test_set(
    backend: &BackendModel,
    templates: &[SpeakerTemplate],
    records: &[IvectorRecord],
    test_set: DatasetTag,
) -> Result<ScoreMatrix> {
    let tests = records
        .iter()
        .filter(|r| r.role == SplitRole::Test && r.dataset == Some(test_set))
        .map(|r| {
            Ok(TestVector {
                utterance_id: r.utterance_id.clone(),
                speaker_id: r.speaker_id.clone(),
                vector: backend.transform(&r.vector())?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if tests.is_empty() {
        return Err(Error::InvalidInput(format!(
            "no test utterances for {}",
            test_set.test_set_name()
        )));
    }
    score_matrix(templates, &tests, &backend.plda)
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Runs the full experiment on a pool of `jobs` workers (0 = all cores).
/// Outputs are identical for any worker count.
pub fn run_experiment(config: &ExperimentConfig, jobs: usize) -> Result<ExperimentReport> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| run_pipeline(config))
}

fn run_pipeline(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let started = Instant::now();
    let out = &config.output_dir;
    let models = out.join("models");
    let scores = out.join("scores");
    for dir in [out, &models, &scores] {
        create_dir(dir)?;
    }
    let resolved = toml::to_string(config).map_err(|e| Error::Config(e.to_string()))?;
    write_text(&out.join("config.resolved.toml"), &resolved)?;
    let mut warnings = Vec::new();

    log::info!("generating corpus");
    let corpus = generate_corpus(&config.corpus, config.seed, &out.join("corpus")).stage("synth")?;
    check_split(&corpus).stage("synth")?;

    log::info!("extracting background features");
    let background: Vec<&ManifestEntry> = corpus.select(SplitRole::Background, None).collect();
    let bg_features = load_features(&corpus, &background, &config.frontend).stage("extract")?;

    log::info!("training UBM on {} utterances", bg_features.len());
    let (ubm, ubm_log) = train_ubm(&bg_features, &config.ubm, derive_seed(config.seed, "ubm")).stage("ubm-train")?;
    log::debug!("UBM log-likelihood: {:?}", ubm_log.log_likelihood);
    ubm.save(&models.join("ubm.ivlg"), config.ubm.variance_floor, config.seed)
        .stage("ubm-train")?;
    let bg_stats = accumulate_all(&ubm, &bg_features).stage("ubm-train")?;
    drop(bg_features);

    log::info!("training total variability matrix");
    let (tv, tv_log) = train_t_matrix(&ubm, &bg_stats, &config.tv, derive_seed(config.seed, "tv")).stage("tv-train")?;
    log::debug!("T objective: {:?}", tv_log.objective);
    tv.save(&models.join("tv.ivlt")).stage("tv-train")?;

    log::info!("training LDA/WCCN/PLDA back-end");
    let bg_records = background
        .iter()
        .zip(&bg_stats)
        .map(|(e, s)| Ok(record_for(e, &tv.extract(s)?.w)))
        .collect::<Result<Vec<_>>>()
        .stage("extract")?;
    let (backend, backend_warnings) = train_backend(&bg_records, &config.backend).stage("backend-train")?;
    warnings.extend(backend_warnings);
    backend.save(&models.join("backend.ivlb")).stage("backend-train")?;

    log::info!("extracting evaluation i-vectors");
    let eval_entries: Vec<&ManifestEntry> = corpus
        .entries
        .iter()
        .filter(|e| e.role != SplitRole::Background)
        .collect();
    let eval_records = extract_ivectors(&corpus, &eval_entries, &config.frontend, &ubm, &tv).stage("extract")?;
    write_jsonl(&models.join("ivectors.jsonl"), &eval_records).stage("extract")?;

    let mut cells = Vec::new();
    for system in System::ALL {
        let templates = enroll(&backend, &eval_records, system).stage("enroll")?;
        let tpl_records: Vec<TemplateRecord> = templates.iter().map(TemplateRecord::from).collect();
        write_jsonl(&models.join(format!("templates_{system}.jsonl")), &tpl_records).stage("enroll")?;
        for test_set in DatasetTag::ALL {
            let ts = test_set.test_set_name();
            let matrix = score_test_set(&backend, &templates, &eval_records, test_set).stage("score")?;
            write_text(
                &scores.join(format!("{system}_{ts}_trials.csv")),
                &trials_to_csv(&matrix.trials()),
            )
            .stage("score")?;
            matrix
                .write_csv(&scores.join(format!("{system}_{ts}_matrix.csv")))
                .stage("score")?;
            let (tar, non) = matrix.split_scores();
            let (eer, threshold) = matrix.eer().stage("eval")?;
            cells.push(ReportCell {
                test_set,
                system,
                eer,
                threshold,
                target_trials: tar.len(),
                nontarget_trials: non.len(),
                diagonal_dominance: diagonal_dominance(&matrix).stage("eval")?,
                identification_rate: matrix.identification_rate(),
            });
        }
    }
    cells.sort_by_key(|c| (c.test_set, c.system));

    let report = ExperimentReport {
        seed: config.seed,
        config_hash: config.hash(),
        cells,
        runtime_s: started.elapsed().as_secs_f64(),
        warnings,
    };
    write_text(&out.join("report.csv"), &report.to_csv())?;
    write_text(&out.join("report.md"), &report.to_markdown())?;
    log::info!("experiment finished in {:.1} s", report.runtime_s);
    Ok(report)
}

/// Background and evaluation speakers must not overlap, and no enrollment
/// utterance may contain speech-laugh.
pub fn check_split(manifest: &CorpusManifest) -> Result<()> {
    let background: BTreeSet<String> = manifest.speakers(SplitRole::Background).into_iter().collect();
    for role in [SplitRole::Enroll, SplitRole::Test] {
        if let Some(s) = manifest.speakers(role).iter().find(|s| background.contains(*s)) {
            return Err(Error::InvalidInput(format!(
                "speaker {s} is in both background and evaluation sets"
            )));
        }
    }
    if let Some(e) = manifest
        .select(SplitRole::Enroll, None)
        .find(|e| e.label.contains(ContentLabel::SpeechLaugh))
    {
        return Err(Error::InvalidInput(format!(
            "{}: speech-laugh in enrollment",
            e.utterance_id
        )));
    }
    Ok(())
}
