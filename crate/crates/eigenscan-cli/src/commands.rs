//! Command implementations.
//!
//! Everything here is deterministic given its inputs and seeds: directory
//! walks are sorted, corpora derive per-variant seeds from the master seed,
//! and the only wall-clock value ever printed is the scan summary timing.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};

use eigenscan::classifier::{self, ceil_sigma, train_model, Verdict};
use eigenscan::eigencore::TrainingMatrix;
use eigenscan::model_store;
use eigenscan::mutation_engine::{self, assemble, parse_program, MutationConfig};
use eigenscan::sample_prep::{self, ExtractMode, RawSample, SampleVector};

use crate::{
    CalibrateArgs, ExportVizArgs, GenCorpusArgs, Mode, ScanArgs, StatsArgs, TrainArgs,
};

impl Mode {
    fn extract(self) -> ExtractMode {
        match self {
            Mode::Raw => ExtractMode::Raw,
            Mode::Pe => ExtractMode::PeSections,
        }
    }
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    entries.sort();
    Ok(entries)
}

fn vectorize(path: &Path, mode: Mode, n: usize) -> Result<SampleVector> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let sample = RawSample::new(bytes, path.display().to_string());
    let code = sample_prep::extract_code(&sample, mode.extract())
        .with_context(|| format!("extracting code from {}", path.display()))?;
    Ok(sample_prep::to_sample_vector(&code, n))
}

/// Walk a tree shaped `dir/<class>/<file>` in sorted order.
fn load_labeled_tree(dir: &Path, mode: Mode, n: usize) -> Result<Vec<(SampleVector, String)>> {
    let mut out = Vec::new();
    for class_dir in sorted_entries(dir)? {
        if !class_dir.is_dir() {
            continue;
        }
        let label = class_dir
            .file_name()
            .and_then(|s| s.to_str())
            .context("class directory name is not valid unicode")?
            .to_string();
        let files: Vec<PathBuf> =
            sorted_entries(&class_dir)?.into_iter().filter(|p| p.is_file()).collect();
        if files.is_empty() {
            bail!("class directory {} contains no files", class_dir.display());
        }
        for file in files {
            out.push((vectorize(&file, mode, n)?, label.clone()));
        }
    }
    if out.is_empty() {
        bail!("{} contains no class subdirectories", dir.display());
    }
    Ok(out)
}

pub fn train(args: TrainArgs) -> Result<u8> {
    if args.n == 0 {
        bail!("--n must be at least 1");
    }
    let samples = load_labeled_tree(&args.samples_dir, args.mode, args.n)?;
    let (columns, labels): (Vec<_>, Vec<_>) = samples.into_iter().unzip();
    let matrix = TrainingMatrix::new(columns, labels);
    let outcome = train_model(&matrix, args.m_prime)?;

    let class_count = outcome.model.classes.len();
    println!(
        "trained on {} samples across {} classes (n = {})",
        matrix.column_count(),
        class_count,
        args.n
    );
    println!(
        "retained rank {} of {}; basis width {}{}",
        outcome.retained_rank,
        matrix.column_count(),
        outcome.effective_m_prime,
        if outcome.effective_m_prime < args.m_prime {
            " (clamped from requested m-prime)"
        } else {
            ""
        }
    );
    let spectrum = outcome
        .spectrum
        .iter()
        .map(|l| format!("{l:.6e}"))
        .collect::<Vec<_>>()
        .join(" ");
    println!("eigenvalue spectrum: {spectrum}");

    model_store::save_model(&outcome.model, &args.out)?;
    println!("wrote {}", args.out.display());
    Ok(0)
}

pub fn calibrate(args: CalibrateArgs) -> Result<u8> {
    if !(args.margin.is_finite() && args.margin >= 1.0) {
        bail!("--margin must be finite and >= 1.0");
    }
    let model = model_store::load_model(&args.model)?;
    let samples = load_labeled_tree(&args.labeled_dir, args.mode, model.n())?;
    let calibration = classifier::calibrate(&model, &samples, args.margin)?;

    println!("{:<16} {:>8} {:>18} {:>18}", "class", "matched", "class threshold", "space threshold");
    for row in &calibration.rows {
        println!(
            "{:<16} {:>8} {:>18.6} {:>18.6}",
            row.label, row.matched, row.class_threshold, row.space_threshold
        );
        if row.matched == 0 {
            eprintln!(
                "warning: class {} had no correctly matched calibration samples; thresholds stay 0",
                row.label
            );
        }
    }

    let out = args.out.unwrap_or(args.model);
    model_store::save_model(&calibration.model, &out)?;
    println!("wrote {}", out.display());
    Ok(0)
}

pub fn scan(args: ScanArgs) -> Result<u8> {
    let started = Instant::now();
    let model = model_store::load_model(&args.model)?;

    println!("#path\tverdict\tnearest\tepsilon\talpha\tcase\tnote");
    let mut matches: Vec<(String, usize)> =
        model.classes.iter().map(|c| (c.label.clone(), 0)).collect();
    let mut clean = 0usize;
    let mut errors = 0usize;

    for path in &args.files {
        match vectorize(path, args.mode, model.n())
            .and_then(|phi| classifier::classify(&phi, &model).map_err(Into::into))
        {
            Ok(decision) => {
                let verdict = match &decision.verdict {
                    Verdict::Match(label) => {
                        if let Some(slot) = matches.iter_mut().find(|(l, _)| l == label) {
                            slot.1 += 1;
                        }
                        format!("match:{label}")
                    }
                    Verdict::Clean => {
                        clean += 1;
                        "clean".to_string()
                    }
                };
                println!(
                    "{}\t{}\t{}\t{}\t{}\t{}\t",
                    path.display(),
                    verdict,
                    decision.nearest_label,
                    decision.class_distance,
                    decision.space_distance,
                    decision.case.letter()
                );
            }
            Err(err) => {
                errors += 1;
                println!("{}\terror\t-\t-\t-\t-\t{err:#}", path.display());
            }
        }
    }

    let matched_total: usize = matches.iter().map(|(_, k)| k).sum();
    println!("# files scanned: {}", args.files.len());
    for (label, count) in &matches {
        println!("# matches[{label}]: {count}");
    }
    println!("# clean: {clean}");
    println!("# errors: {errors}");
    println!("# seconds: {:.3}", started.elapsed().as_secs_f64());

    if matched_total > 0 {
        Ok(1)
    } else if errors > 0 {
        Ok(3)
    } else {
        Ok(0)
    }
}

pub fn stats(args: StatsArgs) -> Result<u8> {
    let model = model_store::load_model(&args.model)?;
    let stats = classifier::class_stats(&model);

    println!("{:<16} {:>18} {:>18}", "class", "class threshold", "space threshold");
    for class in &model.classes {
        println!(
            "{:<16} {:>18.6} {:>18.6}",
            class.label, class.class_threshold, class.space_threshold
        );
    }

    println!();
    println!("{:<16} {:<30} sigma (ceil)", "class", "sigma (raw)");
    for (label, sigma) in &stats {
        let raw = sigma.iter().map(|s| format!("{s:.3}")).collect::<Vec<_>>().join(" ");
        let rounded = ceil_sigma(sigma)
            .iter()
            .map(u64::to_string)
            .collect::<Vec<_>>()
            .join(" ");
        println!("{label:<16} {raw:<30} {rounded}");
    }
    Ok(0)
}

pub fn gen_corpus(args: GenCorpusArgs) -> Result<u8> {
    if !(0.0..=1.0).contains(&args.garbage_rate) {
        bail!("--garbage-rate must be in [0, 1]");
    }
    if args.rounds == 0 {
        bail!("--rounds must be at least 1");
    }

    let base = MutationConfig {
        seed: 0,
        garbage_rate: args.garbage_rate,
        garbage: !args.no_garbage,
        rename: !args.no_rename,
        substitute: !args.no_substitute,
        permute: !args.no_permute,
        transpose: !args.no_transpose,
        rounds: args.rounds,
    };

    std::fs::create_dir_all(&args.out)?;
    let mut manifest = String::from("#file\tfamily\tseed\n");

    for seed_path in &args.seeds {
        let family = seed_path
            .file_stem()
            .and_then(|s| s.to_str())
            .context("seed file name is not valid unicode")?
            .to_string();
        let text = std::fs::read_to_string(seed_path)
            .with_context(|| format!("reading {}", seed_path.display()))?;
        let program = match parse_program(&text) {
            Ok(p) => p,
            Err(e) => bail!("{}: {e}", seed_path.display()),
        };

        let family_dir = args.out.join(&family);
        std::fs::create_dir_all(&family_dir)?;
        for index in 0..args.count {
            let seed = mutation_engine::variant_seed(args.seed, &family, index);
            let mutated = mutation_engine::mutate(&program, &base.clone().with_seed(seed));
            let bytes = assemble(&mutated.program)
                .with_context(|| format!("assembling {family}/{index}"))?;
            let rel = format!("{family}/{index}.bin");
            std::fs::write(args.out.join(&rel), bytes)?;
            let _ = writeln!(manifest, "{rel}\t{family}\t{seed}");
        }
        println!("{family}: {} variants", args.count);
    }

    std::fs::write(args.out.join("manifest.tsv"), manifest)?;
    println!("wrote {}", args.out.join("manifest.tsv").display());
    Ok(0)
}

/// Linear rescale of a basis vector to 0–255 gray. A constant vector has no
/// range to stretch, so it renders mid-gray.
fn gray_bytes(vector: &[f64]) -> Vec<u8> {
    let min = vector.iter().copied().fold(f64::INFINITY, f64::min);
    let max = vector.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max > min {
        vector
            .iter()
            .map(|&v| ((v - min) / (max - min) * 255.0).round() as u8)
            .collect()
    } else {
        vec![128; vector.len()]
    }
}

fn write_pgm(path: &Path, pixels: &[u8], width: usize, height: usize) -> Result<()> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    std::fs::write(path, out)?;
    Ok(())
}

fn csv_field(text: &str) -> String {
    if text.contains([',', '"', '\n']) {
        format!("\"{}\"", text.replace('"', "\"\""))
    } else {
        text.to_string()
    }
}

pub fn export_viz(args: ExportVizArgs) -> Result<u8> {
    let model = model_store::load_model(&args.model)?;
    std::fs::create_dir_all(&args.out)?;

    let n = model.n();
    let width = (n as f64).sqrt().ceil() as usize;
    let height = n.div_ceil(width);
    for (j, vector) in model.basis.vectors().iter().enumerate() {
        let mut pixels = gray_bytes(vector);
        pixels.resize(width * height, 0);
        let path = args.out.join(format!("eigenvirus_{j}.pgm"));
        write_pgm(&path, &pixels, width, height)?;
        println!("wrote {}", path.display());
    }

    let mut csv = String::from("label");
    for j in 1..=model.m_prime() {
        let _ = write!(csv, ",w{j}");
    }
    csv.push('\n');
    for class in &model.classes {
        for weights in &class.training_weights {
            csv.push_str(&csv_field(&class.label));
            for w in weights.weights() {
                let _ = write!(csv, ",{w}");
            }
            csv.push('\n');
        }
    }
    for path in &args.files {
        let phi = vectorize(path, args.mode, n)?;
        let omega = eigenscan::eigencore::project(&phi, &model.basis)?;
        csv.push_str(&csv_field(&path.display().to_string()));
        for w in omega.weights() {
            let _ = write!(csv, ",{w}");
        }
        csv.push('\n');
    }
    let csv_path = args.out.join("weights.csv");
    std::fs::write(&csv_path, csv)?;
    println!("wrote {}", csv_path.display());
    Ok(0)
}
