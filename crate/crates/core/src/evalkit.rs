//! Scoring against synthetic ground truth.
//!
//! Precision and recall are frame-level: precision counts frames with a
//! correct detection among frames with any detection, recall counts frames
//! with a correct detection among frames that contain the target. A detection
//! is correct when its IoU with the ground-truth box reaches the threshold.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::depthmap::DepthMap;
use crate::detector::{self, Detection, DetectorParams};
use crate::error::{Error, Result};
use crate::geometry::StereoRig;
use crate::io;
use crate::localizer::{self, ZrefMethod};
use crate::rect::PixelRect;
use crate::synth::{self, DroneModel, NoiseSpec, Pose, Primitive, SceneSpec, Target};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatchSpec {
    pub iou_threshold: f64,
    pub confidence_threshold: f64,
}

impl Default for MatchSpec {
    fn default() -> Self {
        Self {
            iou_threshold: 0.5,
            confidence_threshold: 0.7,
        }
    }
}

impl MatchSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.iou_threshold)
            || !(0.0..=1.0).contains(&self.confidence_threshold)
        {
            return Err(Error::Config(format!(
                "match thresholds must lie in [0, 1]: {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameOutcome {
    TruePositive,
    /// Detections exist but none matches. `target_present` marks frames where
    /// the target was visible and therefore also missed.
    FalsePositive {
        target_present: bool,
    },
    FalseNegative,
    TrueNegative,
}

/// Classify one frame. `dets` must already be filtered by confidence.
pub fn match_frame(dets: &[Detection], gt: Option<PixelRect>, spec: &MatchSpec) -> FrameOutcome {
    match (gt, dets.is_empty()) {
        (None, true) => FrameOutcome::TrueNegative,
        (None, false) => FrameOutcome::FalsePositive {
            target_present: false,
        },
        (Some(_), true) => FrameOutcome::FalseNegative,
        (Some(gt), false) => {
            if dets.iter().any(|d| d.rect.iou(&gt) >= spec.iou_threshold) {
                FrameOutcome::TruePositive
            } else {
                FrameOutcome::FalsePositive {
                    target_present: true,
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceResult {
    pub name: String,
    pub n_frames: usize,
    pub tp_frames: usize,
    /// Frames with detections of which none is correct.
    pub fp_frames: usize,
    /// Frames containing the target without a correct detection.
    pub fn_frames: usize,
    pub tn_frames: usize,
    /// Percent; `None` when no frame had a detection.
    pub precision: Option<f64>,
    /// Percent; `None` when no frame contained the target.
    pub recall: Option<f64>,
}

impl SequenceResult {
    /// Build from frame counts, assuming every false-positive frame contained
    /// the target (so it is also among the `fn_` misses).
    pub fn from_counts(name: &str, n_frames: usize, tp: usize, fp: usize, fn_: usize) -> Self {
        let pct = |num: usize, den: usize| (den > 0).then(|| 100.0 * num as f64 / den as f64);
        let tn = n_frames.saturating_sub(tp + fn_);
        Self {
            name: name.to_string(),
            n_frames,
            tp_frames: tp,
            fp_frames: fp,
            fn_frames: fn_,
            tn_frames: tn,
            precision: pct(tp, tp + fp),
            recall: pct(tp, tp + fn_),
        }
    }
}

pub fn sequence_metrics(name: &str, frames: &[FrameOutcome]) -> Result<SequenceResult> {
    if frames.is_empty() {
        return Err(Error::EmptyInput("sequence has no frames"));
    }
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for f in frames {
        match f {
            FrameOutcome::TruePositive => tp += 1,
            FrameOutcome::FalsePositive { target_present } => {
                fp += 1;
                if *target_present {
                    fn_ += 1;
                }
            }
            FrameOutcome::FalseNegative => fn_ += 1,
            FrameOutcome::TrueNegative => tn += 1,
        }
    }
    let mut r = SequenceResult::from_counts(name, frames.len(), tp, fp, fn_);
    r.tn_frames = tn;
    Ok(r)
}

/// Truncate a percentage to one decimal, the convention of tabulated
/// precision/recall figures (2/3 prints as 66.6).
pub fn truncate_tenths(pct: f64) -> f64 {
    (pct * 10.0 + 1e-9).floor() / 10.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregateMode {
    Unweighted,
    FrameWeighted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mode: AggregateMode,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
}

/// Average per-sequence percentages. Sequences whose metric is undefined are
/// left out of that metric's average.
pub fn aggregate(results: &[SequenceResult], mode: AggregateMode) -> Result<Aggregate> {
    if results.is_empty() {
        return Err(Error::EmptyInput("no sequences to aggregate"));
    }
    let avg = |metric: fn(&SequenceResult) -> Option<f64>| {
        let (mut num, mut den) = (0.0, 0.0);
        for r in results {
            if let Some(v) = metric(r) {
                let w = match mode {
                    AggregateMode::Unweighted => 1.0,
                    AggregateMode::FrameWeighted => r.n_frames as f64,
                };
                num += w * v;
                den += w;
            }
        }
        (den > 0.0).then(|| num / den)
    };
    Ok(Aggregate {
        mode,
        precision: avg(|r| r.precision),
        recall: avg(|r| r.recall),
    })
}

pub fn aggregate_both(results: &[SequenceResult]) -> Result<[Aggregate; 2]> {
    Ok([
        aggregate(results, AggregateMode::Unweighted)?,
        aggregate(results, AggregateMode::FrameWeighted)?,
    ])
}

// Depth study

/// Repeated frames of a target hovering at a fixed position.
#[derive(Debug, Clone)]
pub struct HoverGroup {
    pub hover_distance_m: f64,
    pub z_true: f64,
    pub frames: Vec<DepthMap>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthErrorResult {
    pub hover_distance_mm: u32,
    pub method: ZrefMethod,
    pub rmse_mm: f64,
    /// Signed mean of `z - z_true`.
    pub mean_error_mm: f64,
    pub min_error_mm: f64,
    pub max_error_mm: f64,
    pub n_samples: usize,
}

impl DepthErrorResult {
    /// Statistics of `z - z_true` samples given in meters.
    pub fn from_errors(
        hover_distance_mm: u32,
        method: ZrefMethod,
        errors_m: &[f64],
    ) -> Result<Self> {
        if errors_m.is_empty() {
            return Err(Error::EmptyInput("no depth errors"));
        }
        let n = errors_m.len() as f64;
        let mm: Vec<f64> = errors_m.iter().map(|e| e * 1000.0).collect();
        let abs = mm.iter().map(|e| e.abs());
        Ok(Self {
            hover_distance_mm,
            method,
            rmse_mm: (mm.iter().map(|e| e * e).sum::<f64>() / n).sqrt(),
            mean_error_mm: mm.iter().sum::<f64>() / n,
            min_error_mm: abs.clone().fold(f64::INFINITY, f64::min),
            max_error_mm: abs.fold(0.0, f64::max),
            n_samples: errors_m.len(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Shortfall {
    pub hover_distance_mm: u32,
    pub found: usize,
    pub required: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthStudy {
    pub results: Vec<DepthErrorResult>,
    /// Hover groups where fewer frames than requested produced a detection.
    pub shortfalls: Vec<Shortfall>,
}

impl DepthStudy {
    pub fn result(&self, hover_distance_mm: u32, method: ZrefMethod) -> Option<&DepthErrorResult> {
        self.results
            .iter()
            .find(|r| r.hover_distance_mm == hover_distance_mm && r.method == method)
    }

    /// Turn the first shortfall into an error.
    pub fn require_complete(&self) -> Result<()> {
        match self.shortfalls.first() {
            Some(s) => Err(Error::InsufficientDetections {
                hover_distance_mm: s.hover_distance_mm,
                found: s.found,
                required: s.required,
            }),
            None => Ok(()),
        }
    }
}

pub fn millimeters(m: f64) -> u32 {
    (m * 1000.0).round() as u32
}

/// Run detect then localize on the first `n_samples` frames of every group.
///
/// Each frame contributes the highest-confidence detection passing
/// `confidence_threshold`. Groups with fewer detections are recorded as
/// shortfalls; their remaining samples still produce results.
pub fn depth_error_study(
    groups: &[HoverGroup],
    rig: &StereoRig,
    methods: &[ZrefMethod],
    n_samples: usize,
    params: &DetectorParams,
    confidence_threshold: f64,
) -> Result<DepthStudy> {
    if n_samples == 0 {
        return Err(Error::Config("n_samples must be >= 1".into()));
    }
    params.validate()?;
    let mut study = DepthStudy {
        results: Vec::new(),
        shortfalls: Vec::new(),
    };
    for g in groups {
        let hover_mm = millimeters(g.hover_distance_m);
        let frames = &g.frames[..n_samples.min(g.frames.len())];
        let picks: Vec<Option<Detection>> = frames
            .par_iter()
            .map(|m| -> Result<Option<Detection>> {
                let dets = match detector::detect(m, params) {
                    Ok(d) => d,
                    Err(Error::NoValidDepth) => return Ok(None),
                    Err(e) => return Err(e),
                };
                Ok(detector::filter_by_confidence(&dets, confidence_threshold)
                    .first()
                    .copied())
            })
            .collect::<Result<_>>()?;
        let found = picks.iter().filter(|p| p.is_some()).count();
        if found < n_samples {
            log::warn!("hover {hover_mm} mm: {found} of {n_samples} frames detected");
            study.shortfalls.push(Shortfall {
                hover_distance_mm: hover_mm,
                found,
                required: n_samples,
            });
        }
        if found == 0 {
            continue;
        }
        for &method in methods {
            let errors = frames
                .iter()
                .zip(&picks)
                .filter_map(|(m, p)| p.map(|d| (m, d)))
                .map(|(m, d)| {
                    localizer::localize(m, &d, rig, method).map(|l| l.position.z - g.z_true)
                })
                .collect::<Result<Vec<f64>>>()?;
            study
                .results
                .push(DepthErrorResult::from_errors(hover_mm, method, &errors)?);
        }
    }
    Ok(study)
}

fn default_samples() -> usize {
    10
}

fn default_methods() -> Vec<ZrefMethod> {
    ZrefMethod::ALL.to_vec()
}

fn default_confidence() -> f64 {
    MatchSpec::default().confidence_threshold
}

/// Hover experiment: a target held at several distances straight ahead,
/// `n_samples` independent noise draws each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthStudySpec {
    pub rig: StereoRig,
    #[serde(default)]
    pub background: Vec<Primitive>,
    pub model: DroneModel,
    /// Lateral target offset `[x, y]`, meters.
    #[serde(default)]
    pub offset: [f64; 2],
    #[serde(default)]
    pub yaw: f64,
    pub hover_distances_m: Vec<f64>,
    #[serde(default = "default_samples")]
    pub n_samples: usize,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_methods")]
    pub methods: Vec<ZrefMethod>,
    #[serde(default)]
    pub detector: DetectorParams,
    #[serde(default = "default_confidence")]
    pub confidence_threshold: f64,
}

impl DepthStudySpec {
    /// Render every hover group. Sample `s` of group `g` uses noise seed
    /// `seed + g * n_samples + s`.
    pub fn build_groups(&self) -> Result<Vec<HoverGroup>> {
        if self.hover_distances_m.is_empty() {
            return Err(Error::EmptyInput("no hover distances"));
        }
        if self.n_samples == 0 {
            return Err(Error::Config("n_samples must be >= 1".into()));
        }
        self.hover_distances_m
            .iter()
            .enumerate()
            .map(|(g, &z)| {
                if z.is_nan() || z <= 0.0 {
                    return Err(Error::Config(format!("hover distance {z} must be > 0")));
                }
                let pose = Pose::new(
                    crate::geometry::Point3D::new(self.offset[0], self.offset[1], z),
                    self.yaw,
                );
                let scene = SceneSpec {
                    rig: self.rig,
                    background: self.background.clone(),
                    target: Some(Target {
                        model: self.model.clone(),
                        pose,
                    }),
                    noise: self.noise,
                    seed: self.seed,
                };
                let frames = (0..self.n_samples)
                    .into_par_iter()
                    .map(|s| {
                        synth::render_frame(&scene, (g * self.n_samples + s) as u32)
                            .map(|f| f.depth)
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(HoverGroup {
                    hover_distance_m: z,
                    z_true: z,
                    frames,
                })
            })
            .collect()
    }

    pub fn run(&self) -> Result<DepthStudy> {
        let groups = self.build_groups()?;
        depth_error_study(
            &groups,
            &self.rig,
            &self.methods,
            self.n_samples,
            &self.detector,
            self.confidence_threshold,
        )
    }
}

// Reports

/// Identifies the inputs a report was produced from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
}

impl Provenance {
    pub fn new(config_hash: String, seed: u64) -> Self {
        Self {
            tool: "depthsight".into(),
            version: crate::VERSION.into(),
            config_hash,
            seed,
        }
    }

    fn csv_comment(&self) -> String {
        format!(
            "# {} {} config_hash={} seed={}\n",
            self.tool, self.version, self.config_hash, self.seed
        )
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |v| format!("{v:.4}"))
}

/// One CSV row per sequence followed by both averages.
pub fn sequence_csv(results: &[SequenceResult], provenance: &Provenance) -> Result<String> {
    let [unweighted, weighted] = aggregate_both(results)?;
    let mut out = provenance.csv_comment();
    out.push_str("sequence,n_frames,tp,fp,fn,tn,precision_pct,recall_pct\n");
    for r in results {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.name,
            r.n_frames,
            r.tp_frames,
            r.fp_frames,
            r.fn_frames,
            r.tn_frames,
            fmt_opt(r.precision),
            fmt_opt(r.recall)
        );
    }
    let total: usize = results.iter().map(|r| r.n_frames).sum();
    for (label, a) in [
        ("mean_unweighted", unweighted),
        ("mean_frame_weighted", weighted),
    ] {
        let _ = writeln!(
            out,
            "{label},{total},,,,,{},{}",
            fmt_opt(a.precision),
            fmt_opt(a.recall)
        );
    }
    Ok(out)
}

/// Long-form depth error CSV: one row per hover distance and method.
pub fn depth_csv(study: &DepthStudy, provenance: &Provenance) -> Result<String> {
    if study.results.is_empty() {
        return Err(Error::EmptyInput("depth study has no results"));
    }
    let mut out = provenance.csv_comment();
    out.push_str("hover_mm,method,rmse_mm,min_mm,max_mm,mean_mm,n_samples\n");
    for r in &study.results {
        let _ = writeln!(
            out,
            "{},{},{:.3},{:.3},{:.3},{:.3},{}",
            r.hover_distance_mm,
            r.method,
            r.rmse_mm,
            r.min_error_mm,
            r.max_error_mm,
            r.mean_error_mm,
            r.n_samples
        );
    }
    Ok(out)
}

/// Wide table: RMSE per method in columns, hover distances in rows, and a
/// final per-method average row.
pub fn depth_table_csv(study: &DepthStudy, provenance: &Provenance) -> Result<String> {
    if study.results.is_empty() {
        return Err(Error::EmptyInput("depth study has no results"));
    }
    let mut methods: Vec<ZrefMethod> = study.results.iter().map(|r| r.method).collect();
    methods.sort();
    methods.dedup();
    let mut hovers: Vec<u32> = Vec::new();
    for r in &study.results {
        if !hovers.contains(&r.hover_distance_mm) {
            hovers.push(r.hover_distance_mm);
        }
    }
    let mut out = provenance.csv_comment();
    out.push_str("hover_mm");
    for m in &methods {
        let _ = write!(out, ",rmse_{m}_mm");
    }
    out.push('\n');
    for h in &hovers {
        let _ = write!(out, "{h}");
        for m in &methods {
            match study.result(*h, *m) {
                Some(r) => {
                    let _ = write!(out, ",{:.3}", r.rmse_mm);
                }
                None => out.push_str(",NA"),
            }
        }
        out.push('\n');
    }
    out.push_str("average");
    for m in &methods {
        let vals: Vec<f64> = study
            .results
            .iter()
            .filter(|r| r.method == *m)
            .map(|r| r.rmse_mm)
            .collect();
        let _ = write!(out, ",{:.3}", vals.iter().sum::<f64>() / vals.len() as f64);
    }
    out.push('\n');
    Ok(out)
}

#[derive(Serialize)]
struct SequenceReportJson<'a, P: Serialize> {
    provenance: &'a Provenance,
    parameters: &'a P,
    sequences: &'a [SequenceResult],
    averages: [Aggregate; 2],
}

/// Write `sequences.csv` and `report.json` into `dir`.
pub fn emit_sequence_report<P: Serialize>(
    dir: &Path,
    results: &[SequenceResult],
    parameters: &P,
    provenance: &Provenance,
) -> Result<()> {
    let csv = sequence_csv(results, provenance)?;
    io::write_bytes(dir.join("sequences.csv"), csv.as_bytes())?;
    io::write_json(
        dir.join("report.json"),
        &SequenceReportJson {
            provenance,
            parameters,
            sequences: results,
            averages: aggregate_both(results)?,
        },
    )
}

#[derive(Serialize)]
struct DepthReportJson<'a, P: Serialize> {
    provenance: &'a Provenance,
    parameters: &'a P,
    study: &'a DepthStudy,
}

/// Write `depth_errors.csv`, `depth_table.csv` and `depth_study.json` into `dir`.
pub fn emit_depth_report<P: Serialize>(
    dir: &Path,
    study: &DepthStudy,
    parameters: &P,
    provenance: &Provenance,
) -> Result<()> {
    io::write_bytes(
        dir.join("depth_errors.csv"),
        depth_csv(study, provenance)?.as_bytes(),
    )?;
    io::write_bytes(
        dir.join("depth_table.csv"),
        depth_table_csv(study, provenance)?.as_bytes(),
    )?;
    io::write_json(
        dir.join("depth_study.json"),
        &DepthReportJson {
            provenance,
            parameters,
            study,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::DetectionSource;
    use proptest::prelude::*;

    fn det(rect: PixelRect, confidence: f64) -> Detection {
        Detection {
            rect,
            confidence,
            source: DetectionSource::External,
        }
    }

    #[test]
    fn frame_outcomes() {
        let spec = MatchSpec::default();
        let gt = PixelRect::new(10, 10, 10, 10);
        assert_eq!(
            match_frame(&[det(gt, 1.0)], Some(gt), &spec),
            FrameOutcome::TruePositive
        );
        assert_eq!(
            match_frame(&[], Some(gt), &spec),
            FrameOutcome::FalseNegative
        );
        assert_eq!(
            match_frame(&[det(PixelRect::new(50, 50, 5, 5), 1.0)], Some(gt), &spec),
            FrameOutcome::FalsePositive {
                target_present: true
            }
        );
        assert_eq!(
            match_frame(&[det(gt, 1.0)], None, &spec),
            FrameOutcome::FalsePositive {
                target_present: false
            }
        );
        assert_eq!(match_frame(&[], None, &spec), FrameOutcome::TrueNegative);
    }

    #[test]
    fn counts_to_percentages() {
        let r = SequenceResult::from_counts("s", 27, 20, 0, 7);
        assert_eq!(r.precision, Some(100.0));
        assert!((r.recall.unwrap() - 74.074_074).abs() < 1e-5);
    }

    #[test]
    fn all_negative_frames_are_undefined() {
        let r = sequence_metrics("s", &[FrameOutcome::TrueNegative; 5]).unwrap();
        assert_eq!((r.precision, r.recall), (None, None));
        assert_eq!(r.tn_frames, 5);
        assert!(sequence_metrics("s", &[]).is_err());
    }

    #[test]
    fn wrong_box_on_target_counts_as_miss() {
        let frames = [
            FrameOutcome::TruePositive,
            FrameOutcome::TruePositive,
            FrameOutcome::FalsePositive {
                target_present: true,
            },
            FrameOutcome::FalseNegative,
        ];
        let r = sequence_metrics("s", &frames).unwrap();
        assert_eq!((r.tp_frames, r.fp_frames, r.fn_frames), (2, 1, 2));
        assert!((r.precision.unwrap() - 200.0 / 3.0).abs() < 1e-12);
        assert_eq!(r.recall, Some(50.0));
    }

    #[test]
    fn aggregate_modes() {
        let one = SequenceResult::from_counts("a", 10, 9, 1, 1);
        for mode in [AggregateMode::Unweighted, AggregateMode::FrameWeighted] {
            let a = aggregate(std::slice::from_ref(&one), mode).unwrap();
            assert_eq!((a.precision, a.recall), (one.precision, one.recall));
        }
        let two = SequenceResult::from_counts("b", 10, 5, 0, 5);
        let [u, w] = aggregate_both(&[one.clone(), two.clone()]).unwrap();
        assert_eq!(u.precision, w.precision);
        assert_eq!(u.recall, w.recall);
        let three = SequenceResult::from_counts("c", 30, 5, 0, 5);
        let [u, w] = aggregate_both(&[one, three]).unwrap();
        assert_ne!(u.precision, w.precision);
        assert!(aggregate(&[], AggregateMode::Unweighted).is_err());
    }

    #[test]
    fn truncation_matches_tabulated_style() {
        assert_eq!(truncate_tenths(200.0 / 3.0), 66.6);
        assert_eq!(truncate_tenths(100.0), 100.0);
        assert_eq!(truncate_tenths(74.0), 74.0);
    }

    #[test]
    fn error_statistics() {
        let r =
            DepthErrorResult::from_errors(2000, ZrefMethod::MinDepth, &[-0.1, 0.2, -0.3]).unwrap();
        assert!((r.min_error_mm - 100.0).abs() < 1e-9);
        assert!((r.max_error_mm - 300.0).abs() < 1e-9);
        assert!((r.rmse_mm - (140_000.0f64 / 3.0).sqrt()).abs() < 1e-9);
        assert!(DepthErrorResult::from_errors(1, ZrefMethod::MinDepth, &[]).is_err());
    }

    #[test]
    fn empty_reports_are_errors() {
        let p = Provenance::new("x".into(), 0);
        let empty = DepthStudy {
            results: vec![],
            shortfalls: vec![],
        };
        assert!(depth_csv(&empty, &p).is_err());
        assert!(sequence_csv(&[], &p).is_err());
    }

    #[test]
    fn depth_csv_schema() {
        let p = Provenance::new("abc".into(), 3);
        let study = DepthStudy {
            results: vec![
                DepthErrorResult::from_errors(1500, ZrefMethod::MinDepth, &[0.05]).unwrap(),
                DepthErrorResult::from_errors(1500, ZrefMethod::MeanBelowQ1, &[0.1]).unwrap(),
            ],
            shortfalls: vec![],
        };
        let csv = depth_csv(&study, &p).unwrap();
        let mut lines = csv.lines();
        assert!(lines.next().unwrap().starts_with("# depthsight"));
        assert_eq!(
            lines.next().unwrap(),
            "hover_mm,method,rmse_mm,min_mm,max_mm,mean_mm,n_samples"
        );
        assert_eq!(
            lines.next().unwrap(),
            "1500,min,50.000,50.000,50.000,50.000,1"
        );
        let table = depth_table_csv(&study, &p).unwrap();
        assert!(table.contains(
            "hover_mm,rmse_min_mm,rmse_meanq1_mm\n1500,50.000,100.000\naverage,50.000,100.000\n"
        ));
    }

    proptest! {
        #[test]
        fn rmse_bounds(errors in prop::collection::vec(-2.0f64..2.0, 1..30)) {
            let r = DepthErrorResult::from_errors(1000, ZrefMethod::MinDepth, &errors).unwrap();
            prop_assert!(r.rmse_mm >= r.mean_error_mm.abs() - 1e-9);
            prop_assert!(r.rmse_mm <= r.max_error_mm + 1e-9);
            prop_assert!(r.min_error_mm <= r.rmse_mm + 1e-9);
        }

        #[test]
        fn threshold_sweep_is_monotone(
            frames in prop::collection::vec(
                (prop::option::of((0u32..40, 0u32..40, 1u32..20, 1u32..20)),
                 prop::collection::vec(((0u32..40, 0u32..40, 1u32..20, 1u32..20), 0.0f64..1.0), 0..4)),
                1..25),
            lo in 0.0f64..1.0,
            delta in 0.0f64..0.5,
        ) {
            let hi = (lo + delta).min(1.0);
            let spec = MatchSpec::default();
            let run = |t: f64| {
                let outcomes: Vec<FrameOutcome> = frames
                    .iter()
                    .map(|(gt, dets)| {
                        let gt = gt.map(|(x, y, w, h)| PixelRect::new(x, y, w, h));
                        let dets: Vec<Detection> = dets
                            .iter()
                            .map(|&((x, y, w, h), c)| det(PixelRect::new(x, y, w, h), c))
                            .collect();
                        match_frame(&detector::filter_by_confidence(&dets, t), gt, &spec)
                    })
                    .collect();
                sequence_metrics("s", &outcomes).unwrap()
            };
            let (a, b) = (run(lo), run(hi));
            prop_assert!(b.tp_frames <= a.tp_frames);
            prop_assert!(b.fn_frames >= a.fn_frames);
            prop_assert!(b.tp_frames + b.fp_frames <= a.tp_frames + a.fp_frames);
        }

        #[test]
        fn single_detection_frames_never_gain_false_positives(
            frames in prop::collection::vec(
                (prop::option::of((0u32..40, 0u32..40, 1u32..20, 1u32..20)),
                 prop::option::of(((0u32..40, 0u32..40, 1u32..20, 1u32..20), 0.0f64..1.0))),
                1..25),
            lo in 0.0f64..1.0,
            delta in 0.0f64..0.5,
        ) {
            let hi = (lo + delta).min(1.0);
            let spec = MatchSpec::default();
            let run = |t: f64| {
                let outcomes: Vec<FrameOutcome> = frames
                    .iter()
                    .map(|(gt, d)| {
                        let gt = gt.map(|(x, y, w, h)| PixelRect::new(x, y, w, h));
                        let dets: Vec<Detection> = d
                            .iter()
                            .map(|&((x, y, w, h), c)| det(PixelRect::new(x, y, w, h), c))
                            .collect();
                        match_frame(&detector::filter_by_confidence(&dets, t), gt, &spec)
                    })
                    .collect();
                sequence_metrics("s", &outcomes).unwrap()
            };
            let (a, b) = (run(lo), run(hi));
            prop_assert!(b.fp_frames <= a.fp_frames);
            prop_assert!(b.fn_frames >= a.fn_frames);
        }
    }

    #[test]
    fn extra_low_confidence_match_can_flip_a_frame_to_false_positive() {
        // A confident wrong box plus a weak correct one: raising the
        // threshold removes the correct box and the frame becomes a false positive.
        let gt = PixelRect::new(0, 0, 10, 10);
        let dets = [det(PixelRect::new(30, 30, 5, 5), 0.9), det(gt, 0.6)];
        let spec = MatchSpec::default();
        assert_eq!(
            match_frame(&detector::filter_by_confidence(&dets, 0.5), Some(gt), &spec),
            FrameOutcome::TruePositive
        );
        assert_eq!(
            match_frame(&detector::filter_by_confidence(&dets, 0.7), Some(gt), &spec),
            FrameOutcome::FalsePositive {
                target_present: true
            }
        );
    }
}
