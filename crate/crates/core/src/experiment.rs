//! Experiment drivers behind the command-line tool: baseline quality sweeps,
//! optimization jobs with JFIF emission, rate-proxy reports and evaluation.
//! Results are flat [`ExperimentRecord`] rows written as CSV.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{bpp_from_bytes, decode_to_rgb8, encode_quantized, encode_with_tables, CodecError};
use crate::image::{load_image, ImageError, ImagePlanes};
use crate::jfif::JfifFile;
use crate::loss::LossWeights;
use crate::metrics::{ms_ssim, psnr, MetricError, MS_SSIM_MIN_SIDE};
use crate::surrogate::{forward_from_input, SurrogateError, SurrogateInput, SurrogateParams};
use crate::tables::{quality_to_tables, IntegerTables, QuantTablePair, TableError};
use crate::train::{train_per_image, train_qtables_corpus, OptimizedParams, TrainConfig, TrainError, TrainMode};

/// `image_id` of per-setting test-set averages.
pub const AVERAGE_ID: &str = "average";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Table(#[from] TableError),
    #[error(transparent)]
    Surrogate(#[from] SurrogateError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },
    #[error("quality list is empty")]
    NoQualities,
    #[error("quality {0} outside [1, 100]")]
    Quality(i64),
    #[error("no PNG or PPM images found in {0}")]
    NoImages(String),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordMode {
    Baseline,
    Qtables,
    QtablesAttention,
    QtablesCorpus,
}

impl RecordMode {
    pub fn from_train(mode: TrainMode) -> Self {
        match mode {
            TrainMode::PerImageQA => RecordMode::QtablesAttention,
            TrainMode::PerImageQ => RecordMode::Qtables,
            TrainMode::CorpusQ => RecordMode::QtablesCorpus,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RecordMode::Baseline => "baseline",
            RecordMode::Qtables => "qtables",
            RecordMode::QtablesAttention => "qtables_attention",
            RecordMode::QtablesCorpus => "qtables_corpus",
        }
    }
}

impl FromStr for TrainMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "per-image-qa" => Ok(TrainMode::PerImageQA),
            "per-image-q" => Ok(TrainMode::PerImageQ),
            "corpus-q" => Ok(TrainMode::CorpusQ),
            other => Err(format!("unknown mode {other:?} (expected per-image-qa, per-image-q or corpus-q)")),
        }
    }
}

impl fmt::Display for TrainMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TrainMode::PerImageQA => "per-image-qa",
            TrainMode::PerImageQ => "per-image-q",
            TrainMode::CorpusQ => "corpus-q",
        })
    }
}

/// One rate-distortion point. `setting` is the quality factor for baseline
/// rows and λ otherwise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub image_id: String,
    pub mode: RecordMode,
    pub setting: f64,
    pub bpp: f64,
    pub psnr_db: f64,
    /// Empty when the image is below the MS-SSIM minimum side.
    pub ms_ssim: Option<f64>,
    pub rate_q: f64,
    pub rate_attention: f64,
    /// Mean size for average rows.
    pub file_bytes: f64,
    pub seed: u64,
}

impl ExperimentRecord {
    pub fn is_average(&self) -> bool {
        self.image_id == AVERAGE_ID
    }
}

pub fn write_records(path: &Path, records: &[ExperimentRecord]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

pub fn records_to_csv(records: &[ExperimentRecord]) -> Result<Vec<u8>, HarnessError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in records {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| HarnessError::Io {
        path: "<memory>".into(),
        source: e.into_error(),
    })
}

pub fn read_records(path: &Path) -> Result<Vec<ExperimentRecord>, HarnessError> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

/// A failure that did not stop the batch.
#[derive(Debug, Clone, PartialEq)]
pub struct JobFailure {
    pub job: String,
    pub message: String,
}

#[derive(Debug, Default)]
pub struct Outcome {
    pub records: Vec<ExperimentRecord>,
    pub failures: Vec<JobFailure>,
    pub files: Vec<PathBuf>,
}

/// An input image and its identifier (file stem).
#[derive(Clone)]
pub struct NamedImage {
    pub id: String,
    pub image: ImagePlanes<f64>,
}

/// PNG and PPM files directly inside `dir`, or `dir` itself when it is a file, sorted by name.
pub fn list_images(input: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    if input.is_file() {
        return Ok(vec![input.to_path_buf()]);
    }
    let mut paths: Vec<PathBuf> = fs::read_dir(input)
        .map_err(io_err(input))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "ppm" | "pnm"))
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(HarnessError::NoImages(input.display().to_string()));
    }
    Ok(paths)
}

fn image_id(path: &Path) -> String {
    path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
}

/// Loads every image under `input`; unreadable files become failures.
pub fn load_dataset(input: &Path) -> Result<(Vec<NamedImage>, Vec<JobFailure>), HarnessError> {
    let mut images = Vec::new();
    let mut failures = Vec::new();
    for path in list_images(input)? {
        match load_image::<f64>(&path) {
            Ok(image) => images.push(NamedImage {
                id: image_id(&path),
                image,
            }),
            Err(e) => {
                log::error!("{e}");
                failures.push(JobFailure {
                    job: path.display().to_string(),
                    message: e.to_string(),
                });
            }
        }
    }
    Ok((images, failures))
}

/// Quality measurements of a decoded file against its original.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub file_bytes: usize,
    pub bpp: f64,
    pub psnr_db: f64,
    pub ms_ssim: Option<f64>,
}

fn ms_ssim_if_large(x: &ImagePlanes<f64>, y: &ImagePlanes<f64>) -> Result<Option<f64>, HarnessError> {
    if x.width().min(x.height()) < MS_SSIM_MIN_SIDE {
        return Ok(None);
    }
    Ok(Some(ms_ssim(x, y)?))
}

/// Decodes `bytes` with the internal baseline decoder and scores it against `original`.
pub fn evaluate(original: &ImagePlanes<f64>, bytes: &[u8]) -> Result<Evaluation, HarnessError> {
    let decoded = decode_to_rgb8::<f64>(bytes)?;
    Ok(Evaluation {
        file_bytes: bytes.len(),
        bpp: bpp_from_bytes(bytes.len(), original.width(), original.height())?,
        psnr_db: psnr(original, &decoded)?,
        ms_ssim: ms_ssim_if_large(original, &decoded)?,
    })
}

/// Rate proxy of fixed integer tables with attention disabled.
fn table_rate(tables: &IntegerTables, weights: &LossWeights<f64>) -> (f64, f64) {
    let p = SurrogateParams::tables_only(QuantTablePair::from_integer(tables, 1e-5));
    crate::loss::rate_loss(&p, weights)
}

fn check_qualities(qualities: &[i64]) -> Result<(), HarnessError> {
    if qualities.is_empty() {
        return Err(HarnessError::NoQualities);
    }
    if let Some(&q) = qualities.iter().find(|&&q| !(1..=100).contains(&q)) {
        return Err(HarnessError::Quality(q));
    }
    Ok(())
}

/// Per-setting means of `records`, one row per (mode, setting).
pub fn average_rows(records: &[ExperimentRecord]) -> Vec<ExperimentRecord> {
    let mut groups: BTreeMap<(RecordMode, u64), Vec<&ExperimentRecord>> = BTreeMap::new();
    for r in records.iter().filter(|r| !r.is_average()) {
        groups.entry((r.mode, r.setting.to_bits())).or_default().push(r);
    }
    let mut rows: Vec<ExperimentRecord> = groups
        .into_values()
        .map(|members| {
            let n = members.len() as f64;
            let mean = |f: fn(&ExperimentRecord) -> f64| members.iter().map(|r| f(r)).sum::<f64>() / n;
            let ms_ssim = members
                .iter()
                .map(|r| r.ms_ssim)
                .collect::<Option<Vec<f64>>>()
                .map(|v| v.iter().sum::<f64>() / n);
            ExperimentRecord {
                image_id: AVERAGE_ID.into(),
                mode: members[0].mode,
                setting: members[0].setting,
                bpp: mean(|r| r.bpp),
                psnr_db: mean(|r| r.psnr_db),
                ms_ssim,
                rate_q: mean(|r| r.rate_q),
                rate_attention: mean(|r| r.rate_attention),
                file_bytes: mean(|r| r.file_bytes),
                seed: members[0].seed,
            }
        })
        .collect();
    rows.sort_by(|a, b| a.mode.cmp(&b.mode).then(a.setting.total_cmp(&b.setting)));
    rows
}

fn sort_records(records: &mut [ExperimentRecord]) {
    records.sort_by(|a, b| {
        a.image_id
            .cmp(&b.image_id)
            .then(a.mode.cmp(&b.mode))
            .then(a.setting.total_cmp(&b.setting))
    });
}

/// Baseline JPEG at each quality for each image; per-image rows first
/// (sorted by image, then quality) followed by per-quality averages.
pub fn cmd_baseline_sweep(
    images: &[NamedImage],
    qualities: &[i64],
    weights: &LossWeights<f64>,
    seed: u64,
) -> Result<Outcome, HarnessError> {
    check_qualities(qualities)?;
    let jobs: Vec<(&NamedImage, i64)> = images
        .iter()
        .flat_map(|img| qualities.iter().map(move |&q| (img, q)))
        .collect();
    let results: Vec<Result<ExperimentRecord, JobFailure>> = jobs
        .par_iter()
        .map(|&(img, q)| {
            baseline_record(img, q, weights, seed).map_err(|e| JobFailure {
                job: format!("{} q={q}", img.id),
                message: e.to_string(),
            })
        })
        .collect();
    let mut out = Outcome::default();
    for r in results {
        match r {
            Ok(rec) => out.records.push(rec),
            Err(f) => {
                log::error!("{}: {}", f.job, f.message);
                out.failures.push(f);
            }
        }
    }
    sort_records(&mut out.records);
    let averages = average_rows(&out.records);
    out.records.extend(averages);
    Ok(out)
}

fn baseline_record(
    img: &NamedImage,
    quality: i64,
    weights: &LossWeights<f64>,
    seed: u64,
) -> Result<ExperimentRecord, HarnessError> {
    let tables = quality_to_tables(quality)?;
    let file = encode_with_tables(&img.image, &tables)?;
    let eval = evaluate(&img.image, &file.bytes)?;
    let (rate_q, rate_attention) = table_rate(&tables, weights);
    Ok(ExperimentRecord {
        image_id: img.id.clone(),
        mode: RecordMode::Baseline,
        setting: quality as f64,
        bpp: eval.bpp,
        psnr_db: eval.psnr_db,
        ms_ssim: eval.ms_ssim,
        rate_q,
        rate_attention,
        file_bytes: eval.file_bytes as f64,
        seed,
    })
}

/// Final encode of trained parameters: attention-edited coefficients are
/// quantized with the integer-rounded tables and entropy-coded.
pub fn encode_optimized(
    image: &ImagePlanes<f64>,
    params: &SurrogateParams<f64>,
) -> Result<(JfifFile, IntegerTables), HarnessError> {
    let tables = params.tables.to_integer();
    let exact = SurrogateParams {
        tables: QuantTablePair::from_integer(&tables, params.tables.scale_s),
        attention: params.attention.clone(),
    };
    let out = forward_from_input(&SurrogateInput::new(image), &exact)?;
    let file = encode_quantized(&out.z, &tables, image.width(), image.height())?;
    Ok((file, tables))
}

/// Output file name of one optimized encode.
pub fn output_name(id: &str, mode: RecordMode, lambda: f64) -> String {
    format!("{id}_{}_lambda{lambda:e}.jpg", mode.as_str())
}

/// Writes the encode, re-reads its size from disk and scores the internal decode.
fn emit(
    img: &NamedImage,
    trained: &OptimizedParams<f64>,
    out_dir: &Path,
) -> Result<(ExperimentRecord, PathBuf), HarnessError> {
    let mode = RecordMode::from_train(trained.mode);
    let (file, _) = encode_optimized(&img.image, &trained.params)?;
    let path = out_dir.join(output_name(&img.id, mode, trained.lambda));
    fs::write(&path, &file.bytes).map_err(io_err(&path))?;
    let on_disk = fs::metadata(&path).map_err(io_err(&path))?.len() as usize;
    let bytes = fs::read(&path).map_err(io_err(&path))?;
    let mut eval = evaluate(&img.image, &bytes)?;
    eval.bpp = bpp_from_bytes(on_disk, img.image.width(), img.image.height())?;
    Ok((
        ExperimentRecord {
            image_id: img.id.clone(),
            mode,
            setting: trained.lambda,
            bpp: eval.bpp,
            psnr_db: eval.psnr_db,
            ms_ssim: eval.ms_ssim,
            rate_q: trained.report.rate_q,
            rate_attention: trained.report.rate_attention,
            file_bytes: on_disk as f64,
            seed: trained.seed,
        },
        path,
    ))
}

/// Trains per configured λ and emits one JFIF file per (image, λ).
///
/// Per-image modes run one job per (image, λ); corpus mode trains one table
/// pair per λ on all images and encodes each image with it. Failed jobs are
/// reported and skipped.
pub fn cmd_optimize(images: &[NamedImage], config: &TrainConfig, out_dir: &Path) -> Result<Outcome, HarnessError> {
    config.validate()?;
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let results: Vec<Result<Vec<(ExperimentRecord, PathBuf)>, JobFailure>> = match config.mode {
        TrainMode::CorpusQ => {
            let dataset: Vec<ImagePlanes<f64>> = images.iter().map(|n| n.image.clone()).collect();
            config
                .lambda_values
                .par_iter()
                .map(|&lambda| {
                    let fail = |e: HarnessError| JobFailure {
                        job: format!("corpus lambda={lambda:e}"),
                        message: e.to_string(),
                    };
                    let trained = train_qtables_corpus(&dataset, lambda, config, |_| {}).map_err(|e| fail(e.into()))?;
                    images.iter().map(|img| emit(img, &trained, out_dir).map_err(fail)).collect()
                })
                .collect()
        }
        _ => {
            let jobs: Vec<(&NamedImage, f64)> = images
                .iter()
                .flat_map(|img| config.lambda_values.iter().map(move |&l| (img, l)))
                .collect();
            jobs.par_iter()
                .map(|&(img, lambda)| {
                    let run = || -> Result<_, HarnessError> {
                        let trained = train_per_image(&img.image, lambda, config, |_| {})?;
                        Ok(vec![emit(img, &trained, out_dir)?])
                    };
                    run().map_err(|e| JobFailure {
                        job: format!("{} lambda={lambda:e}", img.id),
                        message: e.to_string(),
                    })
                })
                .collect()
        }
    };
    let mut out = Outcome::default();
    for r in results {
        match r {
            Ok(rows) => {
                for (rec, path) in rows {
                    out.records.push(rec);
                    out.files.push(path);
                }
            }
            Err(f) => {
                log::error!("{}: {}", f.job, f.message);
                out.failures.push(f);
            }
        }
    }
    sort_records(&mut out.records);
    out.files.sort();
    let averages = average_rows(&out.records);
    out.records.extend(averages);
    Ok(out)
}

/// Spearman rank correlation with average ranks for ties; `None` for fewer
/// than three points or a constant input.
pub fn spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    assert_eq!(a.len(), b.len());
    if a.len() < 3 {
        return None;
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return None;
    }
    Some(cov / (va * vb).sqrt())
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            out[k] = rank;
        }
        i = j + 1;
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProxyRow {
    pub image_id: String,
    pub mode: RecordMode,
    pub setting: f64,
    pub rate_q: f64,
    pub rate_attention: f64,
    pub combined: f64,
    pub true_bpp: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RateProxyReport {
    pub rows: Vec<ProxyRow>,
    pub spearman_q: Option<f64>,
    pub spearman_attention: Option<f64>,
    pub spearman_combined: Option<f64>,
}

/// Pairs each optimized record's rate terms with its measured bpp.
pub fn cmd_rate_proxy_report(records: &[ExperimentRecord]) -> RateProxyReport {
    let rows: Vec<ProxyRow> = records
        .iter()
        .filter(|r| r.mode != RecordMode::Baseline && !r.is_average())
        .map(|r| ProxyRow {
            image_id: r.image_id.clone(),
            mode: r.mode,
            setting: r.setting,
            rate_q: r.rate_q,
            rate_attention: r.rate_attention,
            combined: r.rate_q + r.rate_attention,
            true_bpp: r.bpp,
        })
        .collect();
    let bpp: Vec<f64> = rows.iter().map(|r| r.true_bpp).collect();
    let col = |f: fn(&ProxyRow) -> f64| rows.iter().map(f).collect::<Vec<f64>>();
    RateProxyReport {
        spearman_q: spearman(&col(|r| r.rate_q), &bpp),
        spearman_attention: spearman(&col(|r| r.rate_attention), &bpp),
        spearman_combined: spearman(&col(|r| r.combined), &bpp),
        rows,
    }
}

pub fn write_proxy_report(path: &Path, report: &RateProxyReport) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in &report.rows {
        w.serialize(r)?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

/// Baseline PSNR at `bpp`, linearly interpolated along a quality sweep of one
/// image. `None` outside the sweep's bpp range.
pub fn interpolate_baseline_psnr(sweep: &[ExperimentRecord], bpp: f64) -> Option<f64> {
    let mut pts: Vec<(f64, f64)> = sweep.iter().map(|r| (r.bpp, r.psnr_db)).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    pts.windows(2).find_map(|w| {
        let ((b0, p0), (b1, p1)) = (w[0], w[1]);
        (bpp >= b0 && bpp <= b1 && b1 > b0).then(|| p0 + (p1 - p0) * (bpp - b0) / (b1 - b0))
    })
}

/// The record of `image_id` whose bpp is closest to `target`.
pub fn closest_to_bpp<'a>(records: &'a [ExperimentRecord], image_id: &str, target: f64) -> Option<&'a ExperimentRecord> {
    records
        .iter()
        .filter(|r| r.image_id == image_id)
        .min_by(|a, b| (a.bpp - target).abs().total_cmp(&(b.bpp - target).abs()))
}

/// Reads a flat `key = value` config into `base`. Blank lines and `#`
/// comments are ignored; unknown keys are errors.
pub fn parse_config(text: &str, base: TrainConfig) -> Result<TrainConfig, HarnessError> {
    let mut cfg = base;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let err = |message: String| HarnessError::Config { line, message };
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| err(format!("expected key = value, got {content:?}")))?;
        let (key, value) = (key.trim(), value.trim());
        let num = |v: &str| v.parse::<f64>().map_err(|e| err(format!("{key}: {e}")));
        let int = |v: &str| v.parse::<u64>().map_err(|e| err(format!("{key}: {e}")));
        match key {
            "alpha" => cfg.weights.alpha = num(value)?,
            "beta" => cfg.weights.beta = num(value)?,
            "gamma" => cfg.weights.gamma = num(value)?,
            "lambda" | "lambdas" => cfg.lambda_values = parse_list(value).map_err(err)?,
            "lr" | "learning_rate" => cfg.learning_rate = num(value)?,
            "steps" => cfg.steps = int(value)? as usize,
            "batch" | "batch_size" => cfg.batch_size = int(value)? as usize,
            "crop" | "crop_size" => cfg.crop_size = int(value)? as usize,
            "seed" => cfg.seed = int(value)?,
            "s" | "scale_s" => cfg.scale_s = num(value)?,
            "mode" => cfg.mode = value.parse().map_err(err)?,
            other => return Err(err(format!("unknown key {other:?}"))),
        }
    }
    Ok(cfg)
}

/// Comma-separated numbers.
pub fn parse_list<T: FromStr>(value: &str) -> Result<Vec<T>, String>
where
    T::Err: fmt::Display,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|e| format!("{s:?}: {e}")))
        .collect()
}
