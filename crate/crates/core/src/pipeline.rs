//! File-level stages behind the `depthsight` command line.
//!
//! Every stage is deterministic for fixed inputs: frames are processed in
//! parallel but results are collected in frame order, and no report carries
//! timing or thread information.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::depthmap::{self, DepthMap, QuantizationSpec};
use crate::detector::{self, Detection, DetectionSource, DetectionsRecord, DetectorParams};
use crate::error::{Error, Result};
use crate::evalkit::{self, DepthStudySpec, MatchSpec, Provenance, SequenceResult};
use crate::geometry::StereoRig;
use crate::io::{self, FileKind};
use crate::localizer::{self, LocalizedRecord, ZrefMethod};
use crate::synth::{self, Annotation, SequenceSpec};

/// Run `f` on a dedicated pool of `threads` workers (`None`: rayon default).
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        if n == 0 {
            return Err(Error::Config("--threads must be >= 1".into()));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Invariant(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Short SHA-256 over a sequence of inputs, each length-prefixed.
pub fn config_hash<'a>(parts: impl IntoIterator<Item = &'a [u8]>) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    hex::encode(&h.finalize()[..8])
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn parse_json<T: serde::de::DeserializeOwned>(path: &Path, bytes: &[u8]) -> Result<T> {
    serde_json::from_slice(bytes).map_err(|e| Error::json(path, e))
}

/// `frames/NNNN.pfm` files of a dataset directory, ordered by frame id.
pub fn list_frames(dir: &Path) -> Result<Vec<(u32, PathBuf)>> {
    let frames_dir = dir.join("frames");
    let entries = fs::read_dir(&frames_dir).map_err(|e| Error::io(&frames_dir, e))?;
    let mut frames = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(&frames_dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("pfm") {
            continue;
        }
        let id = path
            .file_stem()
            .and_then(|s| s.to_str())
            .and_then(|s| s.parse::<u32>().ok())
            .ok_or_else(|| Error::Format {
                format: "dataset",
                message: format!("frame name {} is not a number", path.display()),
            })?;
        frames.push((id, path));
    }
    if frames.is_empty() {
        return Err(Error::EmptyInput("dataset has no frames"));
    }
    frames.sort();
    Ok(frames)
}

fn load_frames(dir: &Path) -> Result<Vec<(u32, DepthMap)>> {
    list_frames(dir)?
        .into_par_iter()
        .map(|(id, path)| io::read_pfm(&path).map(|m| (id, m)))
        .collect()
}

#[derive(Serialize)]
struct Manifest<'a> {
    provenance: &'a Provenance,
    frames: usize,
    visible_frames: usize,
}

/// Render a sequence spec into a dataset directory.
pub fn synth_stage(
    spec_path: &Path,
    out: &Path,
    seed_override: Option<u64>,
) -> Result<Vec<Annotation>> {
    let bytes = read_file(spec_path)?;
    let mut spec: SequenceSpec = parse_json(spec_path, &bytes)?;
    if let Some(seed) = seed_override {
        spec.scene.seed = seed;
    }
    let frames = synth::generate_sequence(&spec.scene, &spec.trajectory)?;
    synth::write_dataset(out, &spec, &frames)?;
    let seed_bytes = spec.scene.seed.to_le_bytes();
    let provenance = Provenance::new(
        config_hash([bytes.as_slice(), &seed_bytes]),
        spec.scene.seed,
    );
    io::write_json(
        out.join("manifest.json"),
        &Manifest {
            provenance: &provenance,
            frames: frames.len(),
            visible_frames: frames
                .iter()
                .filter(|f| f.annotation.gt_box.is_some())
                .count(),
        },
    )?;
    Ok(frames.into_iter().map(|f| f.annotation).collect())
}

/// Detect on every frame of `dataset`. With `quantization`, detection sees
/// the 8-bit encoding of each frame instead of metric depth.
pub fn detect_stage(
    dataset: &Path,
    params: &DetectorParams,
    quantization: Option<&QuantizationSpec>,
    out: &Path,
) -> Result<Vec<DetectionsRecord>> {
    params.validate()?;
    let frames = load_frames(dataset)?;
    let records = frames
        .par_iter()
        .map(|(id, m)| {
            let dets = match quantization {
                Some(q) => {
                    let coded = depthmap::dequantize(&depthmap::quantize(m, q), q)?;
                    detector::detect(&coded, params)
                }
                None => detector::detect(m, params),
            };
            let dets = match dets {
                Ok(d) => d,
                Err(Error::NoValidDepth) => Vec::new(),
                Err(e) => return Err(e),
            };
            Ok(DetectionsRecord::new(*id, &dets))
        })
        .collect::<Result<Vec<_>>>()?;
    io::write_jsonl(out, &records)?;
    Ok(records)
}

/// Localize every detection. Boxes without valid depth are skipped.
pub fn localize_stage(
    dataset: &Path,
    detections: &Path,
    rig: &StereoRig,
    method: ZrefMethod,
    out: &Path,
) -> Result<Vec<LocalizedRecord>> {
    let frames = load_frames(dataset)?;
    let dets = detector::load_external_detections(detections, rig.width(), rig.height())?;
    for (id, m) in &frames {
        if m.width() != rig.width() || m.height() != rig.height() {
            return Err(Error::Config(format!(
                "frame {id} is {}x{} but the rig is {}x{}",
                m.width(),
                m.height(),
                rig.width(),
                rig.height()
            )));
        }
    }
    let per_frame = frames
        .par_iter()
        .map(|(id, m)| {
            let mut out = Vec::new();
            for d in dets.for_frame(*id) {
                match localizer::localize(m, d, rig, method) {
                    Ok(l) => out.push(LocalizedRecord::new(*id, &l)),
                    Err(Error::NoDepthInBox) => {
                        log::warn!("frame {id}: box {:?} has no valid depth", d.rect)
                    }
                    Err(e) => return Err(e),
                }
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    let records: Vec<LocalizedRecord> = per_frame.into_iter().flatten().collect();
    io::write_jsonl(out, &records)?;
    Ok(records)
}

/// A detections file line: either the plain box schema or a localized record.
#[derive(Deserialize)]
#[serde(untagged)]
enum ScoredLine {
    Localized(LocalizedRecord),
    Boxes(DetectionsRecord),
}

struct FrameDetections {
    dets: Vec<Detection>,
    depths: Vec<Option<f64>>,
}

fn read_scored(path: &Path) -> Result<BTreeMap<u32, FrameDetections>> {
    let mut frames: BTreeMap<u32, FrameDetections> = BTreeMap::new();
    for (_, line) in io::read_jsonl::<ScoredLine>(path)? {
        match line {
            ScoredLine::Localized(r) => {
                let f = frames.entry(r.frame_id).or_insert_with(|| FrameDetections {
                    dets: Vec::new(),
                    depths: Vec::new(),
                });
                f.dets.push(Detection {
                    rect: r.rect,
                    confidence: r.conf,
                    source: DetectionSource::External,
                });
                f.depths.push(Some(r.xyz[2]));
            }
            ScoredLine::Boxes(r) => {
                let text = serde_json::to_string(&r).map_err(|e| Error::json(path, e))?;
                let parsed = detector::parse_detections(&text, u32::MAX, u32::MAX)?;
                let f = frames.entry(r.frame_id).or_insert_with(|| FrameDetections {
                    dets: Vec::new(),
                    depths: Vec::new(),
                });
                for d in parsed.for_frame(r.frame_id) {
                    f.dets.push(*d);
                    f.depths.push(None);
                }
            }
        }
    }
    Ok(frames)
}

/// One sequence to score.
#[derive(Debug, Clone)]
pub struct EvalInput {
    pub name: String,
    pub annotations: PathBuf,
    pub detections: PathBuf,
}

/// Localization error over true-positive frames, from the best-matching
/// localized detection of each frame.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalizationSummary {
    pub sequence: String,
    pub n_frames: usize,
    pub rmse_mm: Option<f64>,
    pub max_error_mm: Option<f64>,
}

#[derive(Serialize)]
struct EvalParameters<'a> {
    #[serde(rename = "match")]
    match_spec: &'a MatchSpec,
    localization: &'a [LocalizationSummary],
}

/// Score sequences and write `sequences.csv` + `report.json` into `out`.
pub fn eval_stage(
    inputs: &[EvalInput],
    match_spec: &MatchSpec,
    out: &Path,
    provenance: &Provenance,
) -> Result<Vec<SequenceResult>> {
    match_spec.validate()?;
    if inputs.is_empty() {
        return Err(Error::EmptyInput("no sequences to evaluate"));
    }
    let mut results = Vec::new();
    let mut localization = Vec::new();
    for input in inputs {
        let gt = synth::read_annotations(&input.annotations)?;
        let scored = read_scored(&input.detections)?;
        let mut outcomes = Vec::with_capacity(gt.len());
        let mut errors = Vec::new();
        for a in &gt {
            let (dets, depths) = match scored.get(&a.frame_id) {
                Some(f) => (f.dets.as_slice(), f.depths.as_slice()),
                None => (&[][..], &[][..]),
            };
            let kept: Vec<(Detection, Option<f64>)> = dets
                .iter()
                .zip(depths)
                .filter(|(d, _)| d.confidence >= match_spec.confidence_threshold)
                .map(|(d, z)| (*d, *z))
                .collect();
            let kept_dets: Vec<Detection> = kept.iter().map(|k| k.0).collect();
            let outcome = evalkit::match_frame(&kept_dets, a.gt_box, match_spec);
            if let (evalkit::FrameOutcome::TruePositive, Some(gt_box), Some(target)) =
                (outcome, a.gt_box, a.target_position)
            {
                let best = kept
                    .iter()
                    .filter(|(d, _)| d.rect.iou(&gt_box) >= match_spec.iou_threshold)
                    .max_by(|x, y| x.0.rect.iou(&gt_box).total_cmp(&y.0.rect.iou(&gt_box)));
                if let Some((_, Some(z))) = best {
                    errors.push(1000.0 * (z - target.z));
                }
            }
            outcomes.push(outcome);
        }
        results.push(evalkit::sequence_metrics(&input.name, &outcomes)?);
        let n = errors.len();
        localization.push(LocalizationSummary {
            sequence: input.name.clone(),
            n_frames: n,
            rmse_mm: (n > 0).then(|| (errors.iter().map(|e| e * e).sum::<f64>() / n as f64).sqrt()),
            max_error_mm: (n > 0).then(|| errors.iter().fold(0.0f64, |m, e| m.max(e.abs()))),
        });
    }
    evalkit::emit_sequence_report(
        out,
        &results,
        &EvalParameters {
            match_spec,
            localization: &localization,
        },
        provenance,
    )?;
    Ok(results)
}

/// Run a hover study spec and write its reports into `out`.
pub fn depth_study_stage(spec_path: &Path, out: &Path) -> Result<evalkit::DepthStudy> {
    let bytes = read_file(spec_path)?;
    let spec: DepthStudySpec = parse_json(spec_path, &bytes)?;
    let study = spec.run()?;
    let provenance = Provenance::new(config_hash([bytes.as_slice()]), spec.seed);
    evalkit::emit_depth_report(out, &study, &spec, &provenance)?;
    Ok(study)
}

/// Convert between metric PFM and 8-bit PGM/PNG depth. Encoding writes a
/// quantization sidecar next to the output; decoding reads the sidecar of
/// the input unless `quantization` is given.
pub fn convert(input: &Path, output: &Path, quantization: Option<QuantizationSpec>) -> Result<()> {
    let from = FileKind::from_path(input)?;
    let to = FileKind::from_path(output)?;
    match (from, to) {
        (FileKind::Pfm, FileKind::Pgm | FileKind::Png) => {
            let q = quantization.unwrap_or_default();
            let m = io::read_pfm(input)?;
            io::write_image8(output, &depthmap::quantize(&m, &q))?;
            io::write_sidecar(output, &q)
        }
        (FileKind::Pgm | FileKind::Png, FileKind::Pfm) => {
            let q = match quantization {
                Some(q) => q,
                None => io::read_sidecar(input)?,
            };
            let img = io::read_image8(input)?;
            io::write_pfm(output, &depthmap::dequantize(&img, &q)?)
        }
        _ => Err(Error::UnknownFormat(format!(
            "no conversion from {} to {}",
            input.display(),
            output.display()
        ))),
    }
}

/// End-to-end run description. Relative paths resolve against the
/// directory of the config file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Sequence spec for the synth stage.
    pub synth: PathBuf,
    /// Calibration used for localization; defaults to the synthesized rig.
    #[serde(default)]
    pub rig: Option<PathBuf>,
    #[serde(default)]
    pub detector: Option<PathBuf>,
    #[serde(default = "default_method")]
    pub method: ZrefMethod,
    #[serde(default, rename = "match")]
    pub match_spec: Option<PathBuf>,
    /// Run detection on the 8-bit encoding of each frame.
    #[serde(default)]
    pub quantization: Option<QuantizationSpec>,
    /// Overrides the seed of the synth spec.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

fn default_method() -> ZrefMethod {
    ZrefMethod::MinDepth
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub out_dir: PathBuf,
    pub results: Vec<SequenceResult>,
}

/// synth, detect, localize and eval in order. `out` overrides the
/// config's output directory.
pub fn run_pipeline(config_path: &Path, out: Option<&Path>) -> Result<PipelineOutput> {
    let base = config_path.parent().unwrap_or(Path::new("."));
    let config_bytes = read_file(config_path)?;
    let config: PipelineConfig = parse_json(config_path, &config_bytes)?;
    let resolve = |p: &Path| {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base.join(p)
        }
    };

    let out_dir = match (out, &config.out) {
        (Some(o), _) => o.to_path_buf(),
        (None, Some(o)) => resolve(o),
        (None, None) => return Err(Error::Config("no output directory given".into())),
    };

    // hash every input that shapes the outputs
    let synth_path = resolve(&config.synth);
    let synth_bytes = read_file(&synth_path)?;
    let mut hashed: Vec<Vec<u8>> = vec![config_bytes.clone(), synth_bytes.clone()];
    let params = match &config.detector {
        Some(p) => {
            let p = resolve(p);
            let bytes = read_file(&p)?;
            let params: DetectorParams = parse_json(&p, &bytes)?;
            hashed.push(bytes);
            params
        }
        None => DetectorParams::default(),
    };
    let match_spec = match &config.match_spec {
        Some(p) => {
            let p = resolve(p);
            let bytes = read_file(&p)?;
            let spec: MatchSpec = parse_json(&p, &bytes)?;
            hashed.push(bytes);
            spec
        }
        None => MatchSpec::default(),
    };
    let rig_override = match &config.rig {
        Some(p) => {
            let p = resolve(p);
            let bytes = read_file(&p)?;
            let rig: StereoRig = parse_json(&p, &bytes)?;
            hashed.push(bytes);
            Some(rig)
        }
        None => None,
    };
    let spec: SequenceSpec = parse_json(&synth_path, &synth_bytes)?;
    let seed = config.seed.unwrap_or(spec.scene.seed);
    hashed.push(seed.to_le_bytes().to_vec());
    let provenance = Provenance::new(config_hash(hashed.iter().map(Vec::as_slice)), seed);

    let dataset = out_dir.join("dataset");
    synth_stage(&synth_path, &dataset, Some(seed))?;
    let rig = rig_override.unwrap_or(spec.scene.rig);
    let detections = out_dir.join("detections.jsonl");
    detect_stage(&dataset, &params, config.quantization.as_ref(), &detections)?;
    let localized = out_dir.join("localized.jsonl");
    localize_stage(&dataset, &detections, &rig, config.method, &localized)?;
    let inputs = [EvalInput {
        name: "sequence".into(),
        annotations: dataset.join("annotations.jsonl"),
        detections: localized,
    }];
    let results = eval_stage(&inputs, &match_spec, &out_dir.join("report"), &provenance)?;
    Ok(PipelineOutput { out_dir, results })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_is_stable_and_input_sensitive() {
        let a = config_hash([b"abc".as_slice(), b"d"]);
        assert_eq!(a, config_hash([b"abc".as_slice(), b"d"]));
        assert_ne!(a, config_hash([b"ab".as_slice(), b"cd"]));
        assert_eq!(a.len(), 16);
    }

    #[test]
    fn zero_threads_rejected() {
        assert!(with_threads(Some(0), || ()).is_err());
        assert_eq!(
            with_threads(Some(2), rayon::current_num_threads).unwrap(),
            2
        );
    }

    #[test]
    fn convert_rejects_unknown_pairs() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.pfm");
        let b = dir.path().join("b.tiff");
        assert!(matches!(
            convert(&a, &b, None),
            Err(Error::UnknownFormat(_))
        ));
        let c = dir.path().join("c.pfm");
        assert!(matches!(
            convert(&a, &c, None),
            Err(Error::UnknownFormat(_))
        ));
    }
}
