//! `prnu` — sensor fingerprint estimation, attribution, and spoofing.

mod config;

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use prnu_core::denoise::residual;
use prnu_core::fingerprint::{
    classify, estimate_reference_mode, load_pattern, save_pattern, NCCScore, SensorGallery,
};
use prnu_core::harness::{run_identification, run_iteration_study, SpoofMethod};
use prnu_core::imageio::{load_dir, load_image, save_pgm};
use prnu_core::report::{
    to_json, write_identification_report, write_iteration_report, write_spoof_report,
    write_trajectories,
};
use prnu_core::seeds::stream_seed;
use prnu_core::spoof::{
    baseline1_inject, baseline2_substitute, baseline_denoised_inject, perturb_with_options,
    select_candidate, SpoofOptions,
};
use prnu_core::synth::{make_scene_bank, save_field, SyntheticSensor};

use config::CliConfig;

#[derive(Parser)]
#[command(name = "prnu", version, about = "PRNU fingerprint toolkit")]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed; every stochastic choice derives from it.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads; defaults to the number of logical cores.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Progress chatter on standard error.
    #[arg(long, global = true)]
    verbose: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate a sensor's reference pattern from a directory of images.
    Estimate {
        /// Directory of PGM/PNG training images.
        #[arg(long)]
        sensor_dir: PathBuf,
        /// Output `.prnu` file.
        #[arg(long)]
        out: PathBuf,
        /// Sensor label; defaults to the directory name.
        #[arg(long)]
        sensor_id: Option<String>,
    },
    /// Attribute an image to a sensor from a gallery of patterns.
    Identify {
        #[arg(long)]
        image: PathBuf,
        /// Directory of `.prnu` pattern files.
        #[arg(long)]
        gallery_dir: PathBuf,
    },
    /// Re-attribute an image to a target sensor.
    Spoof {
        #[arg(long)]
        image: PathBuf,
        /// Directory of candidate images from the target sensor.
        #[arg(long)]
        candidate_gallery_dir: PathBuf,
        /// Source sensor's `.prnu` pattern.
        #[arg(long)]
        source_pattern: PathBuf,
        /// Target sensor's `.prnu` pattern.
        #[arg(long)]
        target_pattern: PathBuf,
        /// Output image (PGM).
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = MethodArg::Proposed)]
        method: MethodArg,
        /// Write the per-iteration score trajectory as CSV.
        #[arg(long)]
        save_trajectory: Option<PathBuf>,
    },
    /// Run a configured experiment and write its reports.
    Experiment {
        #[arg(long, value_enum)]
        kind: ExperimentKind,
        /// Report directory; overrides `output_dir` from the config.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Synthetic-data utilities.
    Synth {
        #[command(subcommand)]
        command: SynthCommand,
    },
}

#[derive(Subcommand)]
enum SynthCommand {
    /// Generate a synthetic multi-sensor dataset on disk.
    Gen {
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Number of sensors.
        #[arg(long, default_value_t = 2)]
        sensors: usize,
        /// Training images per sensor.
        #[arg(long, default_value_t = 55)]
        train: usize,
        /// Test images per sensor.
        #[arg(long, default_value_t = 100)]
        test: usize,
        #[arg(long, default_value_t = 120)]
        height: usize,
        #[arg(long, default_value_t = 160)]
        width: usize,
        /// Multiplicative response-field strength.
        #[arg(long, default_value_t = prnu_core::harness::DEFAULT_STRENGTH)]
        strength: f64,
        #[arg(long, default_value_t = prnu_core::harness::DEFAULT_READ_NOISE)]
        read_noise: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Proposed,
    Baseline1,
    Baseline2,
    DenoisedInject,
}

impl From<MethodArg> for SpoofMethod {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Proposed => SpoofMethod::Proposed,
            MethodArg::Baseline1 => SpoofMethod::Baseline1,
            MethodArg::Baseline2 => SpoofMethod::Baseline2,
            MethodArg::DenoisedInject => SpoofMethod::DenoisedInject,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ExperimentKind {
    Identify,
    Spoof,
    Iterations,
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .context("initializing the worker pool")?;
    }

    let mut config = match &cli.config {
        Some(path) => CliConfig::load(path)?,
        None => CliConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.experiment.seed = seed;
    }
    let verbose = cli.verbose;

    match cli.command {
        Command::Estimate {
            sensor_dir,
            out,
            sensor_id,
        } => cmd_estimate(&config, &sensor_dir, &out, sensor_id.as_deref(), verbose),
        Command::Identify { image, gallery_dir } => cmd_identify(&config, &image, &gallery_dir),
        Command::Spoof {
            image,
            candidate_gallery_dir,
            source_pattern,
            target_pattern,
            out,
            method,
            save_trajectory,
        } => cmd_spoof(
            &config,
            SpoofArgs {
                image: &image,
                candidate_gallery_dir: &candidate_gallery_dir,
                source_pattern: &source_pattern,
                target_pattern: &target_pattern,
                out: &out,
                method: method.into(),
                save_trajectory: save_trajectory.as_deref(),
            },
            verbose,
        ),
        Command::Experiment { kind, out_dir } => {
            if cli.config.is_none() {
                bail!("experiment requires --config");
            }
            cmd_experiment(&config, kind, out_dir.as_deref(), verbose)
        }
        Command::Synth {
            command:
                SynthCommand::Gen {
                    out,
                    sensors,
                    train,
                    test,
                    height,
                    width,
                    strength,
                    read_noise,
                },
        } => cmd_synth_gen(
            &config, &out, sensors, train, test, height, width, strength, read_noise, verbose,
        ),
    }
}

fn cmd_estimate(
    config: &CliConfig,
    sensor_dir: &Path,
    out: &Path,
    sensor_id: Option<&str>,
    verbose: bool,
) -> anyhow::Result<()> {
    let images = load_dir(sensor_dir, None)?;
    if images.is_empty() {
        bail!("no training images in {}", sensor_dir.display());
    }
    let id = match sensor_id {
        Some(id) => id.to_string(),
        None => sensor_dir
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "sensor".to_string()),
    };
    if verbose {
        eprintln!("estimating {:?} from {} images", id, images.len());
    }
    let pattern = estimate_reference_mode(
        &images,
        &config.experiment.denoise,
        &id,
        config.experiment.postprocess,
    )?;
    save_pattern(&pattern, out)?;
    if verbose {
        eprintln!("wrote {}", out.display());
    }
    Ok(())
}

#[derive(serde::Serialize)]
struct IdentifyOutput {
    predicted: String,
    scores: Vec<NCCScore>,
}

fn cmd_identify(config: &CliConfig, image: &Path, gallery_dir: &Path) -> anyhow::Result<()> {
    let gallery = SensorGallery::load_dir(gallery_dir)?;
    let dims = gallery.dims();
    let img = load_image(image, Some(dims))?;
    let (predicted, scores) = classify(&img, &gallery, &config.experiment.denoise)?;
    print!("{}", to_json(&IdentifyOutput { predicted, scores }));
    Ok(())
}

struct SpoofArgs<'a> {
    image: &'a Path,
    candidate_gallery_dir: &'a Path,
    source_pattern: &'a Path,
    target_pattern: &'a Path,
    out: &'a Path,
    method: SpoofMethod,
    save_trajectory: Option<&'a Path>,
}

#[derive(serde::Serialize)]
struct SpoofOutput {
    method: SpoofMethod,
    #[serde(skip_serializing_if = "Option::is_none")]
    succeeded: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    iterations_used: Option<usize>,
    final_scores: Vec<NCCScore>,
    psnr_db: f64,
    output_image: String,
}

fn cmd_spoof(config: &CliConfig, args: SpoofArgs<'_>, verbose: bool) -> anyhow::Result<()> {
    let source = load_pattern(args.source_pattern)?;
    let target = load_pattern(args.target_pattern)?;
    let dims = source.dims();
    let input = load_image(args.image, Some(dims))?;
    let dp = &config.experiment.denoise;
    let seed = config.experiment.seed;

    let (perturbed, result) = match args.method {
        SpoofMethod::Proposed => {
            let candidates = load_dir(args.candidate_gallery_dir, Some(dims))?;
            let mut patch = config.experiment.perturb.patch.clone();
            patch.rng_seed = stream_seed(seed, "candidate-patches", 0);
            let (candidate, index) = select_candidate(&input, &candidates, &patch)?;
            if verbose {
                eprintln!("candidate image index {index}");
            }
            let mut params = config.experiment.perturb.clone();
            params.patch = patch;
            params.rng_seed = stream_seed(seed, "perturb-patches", 0);
            let result = perturb_with_options(
                &input,
                &candidate,
                &source,
                &target,
                &params,
                dp,
                SpoofOptions {
                    record_trajectory: args.save_trajectory.is_some(),
                },
            )?;
            (result.perturbed.clone(), Some(result))
        }
        SpoofMethod::Baseline1 => (baseline1_inject(&input, &target, 1.0)?, None),
        SpoofMethod::Baseline2 => (baseline2_substitute(&input, &source, &target, 1.0, 1.0)?, None),
        SpoofMethod::DenoisedInject => (baseline_denoised_inject(&input, &target, 1.0, dp)?, None),
    };

    let final_scores = match &result {
        Some(r) => r.final_scores.clone(),
        None => {
            let res = residual(&perturbed, dp)?;
            vec![
                prnu_core::fingerprint::ncc(&res, &source)?,
                prnu_core::fingerprint::ncc(&res, &target)?,
            ]
        }
    };

    if let (Some(path), Some(r)) = (args.save_trajectory, &result) {
        if let Some(trajectory) = &r.trajectory {
            let mut csv = String::from("iteration,phi_target,phi_source\n");
            for p in trajectory {
                csv.push_str(&format!("{},{},{}\n", p.iteration, p.phi_target, p.phi_source));
            }
            std::fs::write(path, csv)
                .with_context(|| format!("writing {}", path.display()))?;
        }
    }

    save_pgm(&perturbed, args.out)?;
    let output = SpoofOutput {
        method: args.method,
        succeeded: result.as_ref().map(|r| r.succeeded),
        iterations_used: result.as_ref().map(|r| r.iterations_used),
        final_scores,
        psnr_db: prnu_core::harness::psnr(&input, &perturbed)?,
        output_image: args.out.display().to_string(),
    };
    print!("{}", to_json(&output));
    Ok(())
}

fn cmd_experiment(
    config: &CliConfig,
    kind: ExperimentKind,
    out_dir: Option<&Path>,
    verbose: bool,
) -> anyhow::Result<()> {
    let dir = out_dir
        .map(Path::to_path_buf)
        .or_else(|| config.experiment.output_dir.clone())
        .context("no output directory: set output_dir in the config or pass --out-dir")?;
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;

    match kind {
        ExperimentKind::Identify => {
            let matrix = run_identification(&config.experiment)?;
            write_identification_report(&matrix, &dir)?;
            if verbose {
                eprint!("{}", matrix.render_text());
            }
        }
        ExperimentKind::Spoof => {
            if config.spoof_pairs.is_empty() {
                bail!("config has no spoof_pairs");
            }
            for (source, target) in &config.spoof_pairs {
                for &method in &config.methods {
                    if verbose {
                        eprintln!("attacking {source} -> {target} with {method}");
                    }
                    let (report, details) =
                        prnu_core::harness::run_spoof_experiment_detailed(
                            &config.experiment,
                            source,
                            target,
                            method,
                        )?;
                    write_spoof_report(&report, &dir)?;
                    if config.experiment.save_trajectories {
                        write_trajectories(&report, &details, &dir)?;
                    }
                    if verbose {
                        eprint!("{}", report.render_text());
                    }
                }
            }
        }
        ExperimentKind::Iterations => {
            let (source, target) = config.iteration_pair()?;
            if config.m_values.is_empty() {
                bail!("config has no m_values");
            }
            let reports =
                run_iteration_study(&config.experiment, &source, &target, &config.m_values)?;
            write_iteration_report(&config.m_values, &reports, &dir)?;
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_synth_gen(
    config: &CliConfig,
    out: &Path,
    sensors: usize,
    train: usize,
    test: usize,
    height: usize,
    width: usize,
    strength: f64,
    read_noise: f64,
    verbose: bool,
) -> anyhow::Result<()> {
    if sensors == 0 || train == 0 {
        bail!("need at least one sensor and one training image");
    }
    let seed = config.experiment.seed;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;

    let mut sensor_specs = Vec::new();
    for idx in 0..sensors {
        let id = format!("cam{:02}", idx + 1);
        let sensor = SyntheticSensor::new(
            &id,
            height,
            width,
            strength,
            read_noise,
            stream_seed(seed, "sensor-field", idx as u64),
        )?;
        let scenes = make_scene_bank(
            train + test,
            (height, width),
            stream_seed(seed, "scenes", idx as u64),
        );
        let sensor_dir = out.join(&id);
        std::fs::create_dir_all(&sensor_dir)
            .with_context(|| format!("creating {}", sensor_dir.display()))?;
        for (i, scene) in scenes.iter().enumerate() {
            let shot = sensor.capture(scene, i as u64)?;
            let name = format!("img_{i:04}.pgm");
            save_pgm(&shot, &sensor_dir.join(name))?;
        }
        save_field(&sensor, &out.join(format!("{id}.synk")))?;
        if verbose {
            eprintln!("wrote sensor {id}: {} images", train + test);
        }

        let mut spec = prnu_core::harness::SensorSpec::synthetic(&id);
        spec.kind = prnu_core::harness::SensorKind::Directory;
        spec.dir = Some(sensor_dir);
        sensor_specs.push(spec);
    }

    // a ready-to-run experiment config pointing at the generated images
    let mut generated = CliConfig::default();
    generated.experiment.sensors = sensor_specs;
    generated.experiment.train_count = train;
    generated.experiment.test_count = test;
    generated.experiment.working_height = height;
    generated.experiment.working_width = width;
    generated.experiment.seed = seed;
    generated.experiment.output_dir = Some(out.join("reports"));
    if sensors >= 2 {
        generated.spoof_pairs = vec![("cam01".to_string(), "cam02".to_string())];
        generated.iteration_pair = Some(("cam01".to_string(), "cam02".to_string()));
    }
    let toml_text = toml::to_string_pretty(&generated).context("serializing config")?;
    std::fs::write(out.join("config.toml"), toml_text)
        .with_context(|| format!("writing {}", out.join("config.toml").display()))?;
    Ok(())
}
