use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use depthsight::evalkit::Provenance;
use depthsight::io;
use depthsight::pipeline::{self, EvalInput};
use depthsight::{
    DetectorParams, Error, MatchSpec, QuantizationSpec, Result, StereoRig, ZrefMethod,
};

#[derive(Parser)]
#[command(
    name = "depthsight",
    version,
    about = "Depth-based drone detection and 3D localization"
)]
struct Cli {
    /// Worker threads for frame-parallel stages (outputs do not depend on it).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic sequence into a dataset directory.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the seed stored in the spec.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the depth-contrast detector over a dataset.
    Detect {
        #[arg(long = "in")]
        input: PathBuf,
        /// Detector parameters; defaults when omitted.
        #[arg(long)]
        params: Option<PathBuf>,
        /// Detect on the 8-bit encoding described by this quantization spec.
        #[arg(long)]
        quantization: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pick a representative depth in each box and reproject it to 3D.
    Localize {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        detections: PathBuf,
        #[arg(long, default_value = "min")]
        method: ZrefMethod,
        /// Calibration; the dataset's own rig.json when omitted.
        #[arg(long)]
        rig: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score detections against annotations. Repeat --gt/--detections for
    /// several sequences.
    Eval {
        #[arg(long, required = true)]
        gt: Vec<PathBuf>,
        #[arg(long, required = true)]
        detections: Vec<PathBuf>,
        /// Sequence names, in --gt order; defaults to seq1, seq2, ...
        #[arg(long)]
        name: Vec<String>,
        #[arg(long = "match")]
        match_spec: Option<PathBuf>,
        /// Seed recorded in the report header.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Hover-distance depth error study.
    DepthStudy {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Convert between metric PFM and 8-bit PGM/PNG depth images.
    Convert {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        quantization: Option<PathBuf>,
    },
    /// synth, detect, localize and eval from one pipeline config.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn eval(
    gt: Vec<PathBuf>,
    detections: Vec<PathBuf>,
    names: Vec<String>,
    match_path: Option<PathBuf>,
    seed: u64,
    out: &Path,
) -> Result<()> {
    if gt.len() != detections.len() {
        return Err(Error::Config(format!(
            "{} --gt files but {} --detections files",
            gt.len(),
            detections.len()
        )));
    }
    if !names.is_empty() && names.len() != gt.len() {
        return Err(Error::Config("--name must be given once per --gt".into()));
    }
    let mut hashed = Vec::new();
    let match_spec = match &match_path {
        Some(p) => {
            hashed.push(read_bytes(p)?);
            io::read_json(p)?
        }
        None => MatchSpec::default(),
    };
    let mut inputs = Vec::new();
    for (i, (g, d)) in gt.into_iter().zip(detections).enumerate() {
        hashed.push(read_bytes(&g)?);
        hashed.push(read_bytes(&d)?);
        let name = names
            .get(i)
            .cloned()
            .unwrap_or_else(|| format!("seq{}", i + 1));
        hashed.push(name.clone().into_bytes());
        inputs.push(EvalInput {
            name,
            annotations: g,
            detections: d,
        });
    }
    hashed.push(seed.to_le_bytes().to_vec());
    let provenance = Provenance::new(
        pipeline::config_hash(hashed.iter().map(Vec::as_slice)),
        seed,
    );
    let results = pipeline::eval_stage(&inputs, &match_spec, out, &provenance)?;
    for r in &results {
        println!(
            "{}: frames={} tp={} fp={} fn={} precision={} recall={}",
            r.name,
            r.n_frames,
            r.tp_frames,
            r.fp_frames,
            r.fn_frames,
            pct(r.precision),
            pct(r.recall)
        );
    }
    Ok(())
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |p| format!("{p:.1}%"))
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Synth { spec, out, seed } => {
            let annotations = pipeline::synth_stage(&spec, &out, seed)?;
            let visible = annotations.iter().filter(|a| a.gt_box.is_some()).count();
            println!(
                "wrote {} frames ({visible} with target) to {}",
                annotations.len(),
                out.display()
            );
        }
        Command::Detect {
            input,
            params,
            quantization,
            out,
        } => {
            let params: DetectorParams = match params {
                Some(p) => io::read_json(p)?,
                None => DetectorParams::default(),
            };
            let q: Option<QuantizationSpec> = quantization.map(io::read_json).transpose()?;
            let records = pipeline::detect_stage(&input, &params, q.as_ref(), &out)?;
            let boxes: usize = records.iter().map(|r| r.boxes.len()).sum();
            println!("{boxes} detections over {} frames", records.len());
        }
        Command::Localize {
            input,
            detections,
            method,
            rig,
            out,
        } => {
            let rig = StereoRig::load(rig.unwrap_or_else(|| input.join("rig.json")))?;
            let records = pipeline::localize_stage(&input, &detections, &rig, method, &out)?;
            println!("localized {} detections with {method}", records.len());
        }
        Command::Eval {
            gt,
            detections,
            name,
            match_spec,
            seed,
            out,
        } => eval(gt, detections, name, match_spec, seed, &out)?,
        Command::DepthStudy { spec, out } => {
            let study = pipeline::depth_study_stage(&spec, &out)?;
            for s in &study.shortfalls {
                log::warn!(
                    "{} mm: only {} of {} samples detected",
                    s.hover_distance_mm,
                    s.found,
                    s.required
                );
            }
            for r in &study.results {
                println!(
                    "{:>6} mm  {:<8}  rmse {:>8.1} mm  (n={})",
                    r.hover_distance_mm, r.method, r.rmse_mm, r.n_samples
                );
            }
        }
        Command::Convert {
            input,
            out,
            quantization,
        } => {
            let q: Option<QuantizationSpec> = quantization.map(io::read_json).transpose()?;
            pipeline::convert(&input, &out, q)?;
        }
        Command::Run { config, out } => {
            let output = pipeline::run_pipeline(&config, out.as_deref())?;
            for r in &output.results {
                println!(
                    "{}: precision={} recall={}",
                    r.name,
                    pct(r.precision),
                    pct(r.recall)
                );
            }
            println!("reports in {}", output.out_dir.join("report").display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let command = cli.command;
    match pipeline::with_threads(cli.threads, move || execute(command)).and_then(|r| r) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
