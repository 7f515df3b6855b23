//! Command-line front end: encode/decode, rate sweeps, regulator-ladder
//! fitting, curve comparison and bit accounting.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgGroup, Parser, Subcommand};

use qvrf::codec::{account_bits, decode_image, encode_image, rd_sweep, sweep_csv};
use qvrf::metrics::{bd_rate, ms_ssim, psnr, RdCurve};
use qvrf::rate_control::{
    lambda_to_regulator, optimize_vector, FitConfig, LambdaSet, SearchConfig,
};
use qvrf::transform::Image;
use qvrf::{pnm, Regulator};

#[derive(Parser)]
#[command(
    name = "qvrf",
    version,
    about = "Variable-rate image codec with a single rate knob"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Encode a PGM/PPM image to a .qvrf container.
    #[command(group(ArgGroup::new("rate").required(true).args(["a", "lambda"])))]
    Encode {
        /// Input image (PGM P5 or PPM P6; color is converted to luma).
        #[arg(short, long)]
        input: PathBuf,
        /// Output container path.
        #[arg(short, long)]
        output: PathBuf,
        /// Quantization regulator, within [0.25, 32].
        #[arg(long)]
        a: Option<f64>,
        /// Lagrange multiplier; mapped to a regulator through --fit.
        #[arg(long, requires = "fit")]
        lambda: Option<f64>,
        /// Fit config produced by `qvrf fit`.
        #[arg(long)]
        fit: Option<PathBuf>,
        /// Transform block size (4, 8 or 16).
        #[arg(long, default_value_t = 8)]
        block: usize,
    },
    /// Decode a .qvrf container to a PGM image.
    Decode {
        #[arg(short, long)]
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Encode/decode every image in a directory across a range of
    /// regulator values and write an RD curve CSV.
    Sweep {
        /// Directory of .pgm/.ppm images.
        #[arg(long)]
        images: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        a_min: f64,
        #[arg(long, default_value_t = 10.0)]
        a_max: f64,
        /// Number of log-spaced regulator values.
        #[arg(long, default_value_t = 8)]
        points: usize,
        /// Output CSV path.
        #[arg(long)]
        csv: PathBuf,
        #[arg(long, default_value_t = 8)]
        block: usize,
        /// Optional fit config used to back-fill the lambda column.
        #[arg(long)]
        fit: Option<PathBuf>,
    },
    /// Optimize one regulator per lambda on a calibration set and fit the
    /// regulator-to-sqrt(lambda) line.
    Fit {
        /// Comma-separated, strictly increasing lambda values.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        lambdas: Vec<f64>,
        /// Directory of calibration images.
        #[arg(long)]
        images: PathBuf,
        /// Output fit config path.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 8)]
        block: usize,
    },
    /// Average bitrate difference between two sweep CSVs.
    Bdrate {
        #[arg(long)]
        anchor: PathBuf,
        #[arg(long)]
        test: PathBuf,
    },
    /// Per-segment bit accounting of a container.
    Account {
        #[arg(short, long)]
        input: PathBuf,
    },
    /// PSNR (and similarity when the image is large enough) between two
    /// images.
    Psnr {
        /// Reference image.
        #[arg(short, long)]
        reference: PathBuf,
        /// Distorted image.
        #[arg(short, long)]
        distorted: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("qvrf: {e}");
            ExitCode::FAILURE
        }
    }
}

type AnyResult<T> = Result<T, Box<dyn std::error::Error>>;

fn load_images(dir: &Path) -> AnyResult<Vec<(String, Image)>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            matches!(
                p.extension().and_then(|e| e.to_str()),
                Some("pgm") | Some("ppm")
            )
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(format!("no .pgm/.ppm images in {}", dir.display()).into());
    }
    paths
        .into_iter()
        .map(|p| {
            let name = p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| p.display().to_string());
            Ok((name, pnm::read(&p)?))
        })
        .collect()
}

fn log_spaced(a_min: f64, a_max: f64, points: usize) -> AnyResult<Vec<f64>> {
    if points == 0 || a_min <= 0.0 || a_max < a_min {
        return Err("need points >= 1 and 0 < a-min <= a-max".into());
    }
    if points == 1 {
        return Ok(vec![a_min]);
    }
    let step = (a_max / a_min).ln() / (points - 1) as f64;
    Ok((0..points)
        .map(|i| (a_min.ln() + step * i as f64).exp())
        .collect())
}

/// Reads RD points out of a sweep CSV: `average` rows when present,
/// otherwise every data row, ordered by rate.
fn curve_from_csv(path: &Path) -> AnyResult<RdCurve> {
    let text = std::fs::read_to_string(path)?;
    let mut all = Vec::new();
    let mut averages = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        if ln == 0 || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 8 {
            return Err(format!("{}:{}: expected 8 CSV fields", path.display(), ln + 1).into());
        }
        let rate: f64 = fields[3].parse()?;
        let quality: f64 = fields[6].parse()?;
        if fields[0] == "average" {
            averages.push((rate, quality));
        }
        all.push((rate, quality));
    }
    let mut points = if averages.is_empty() { all } else { averages };
    points.sort_by(|p, q| p.0.total_cmp(&q.0));
    Ok(RdCurve::new(points)?)
}

fn run(cmd: Command) -> AnyResult<()> {
    match cmd {
        Command::Encode {
            input,
            output,
            a,
            lambda,
            fit,
            block,
        } => {
            let img = pnm::read(&input)?;
            let regulator = match (a, lambda) {
                (Some(a), None) => Regulator::new(a)?,
                (None, Some(l)) => {
                    let fit_path = fit.expect("clap enforces --fit with --lambda");
                    let cfg = FitConfig::from_text(&std::fs::read_to_string(fit_path)?)?;
                    lambda_to_regulator(l, &cfg.fit)
                }
                _ => unreachable!("clap enforces exactly one rate flag"),
            };
            let outcome = encode_image(&img, &regulator, block)?;
            std::fs::write(&output, &outcome.bytes)?;
            let b = account_bits(&outcome.bytes)?;
            println!(
                "{} -> {}: a={} total={:.6} bpp (latent {:.6}, side {:.6})",
                input.display(),
                output.display(),
                regulator.value(),
                b.total_bpp,
                b.latent_bpp,
                b.side_bpp
            );
            Ok(())
        }
        Command::Decode { input, output } => {
            let img = decode_image(&std::fs::read(&input)?)?;
            pnm::write_pgm(&output, &img)?;
            println!(
                "{} -> {} ({}x{})",
                input.display(),
                output.display(),
                img.width(),
                img.height()
            );
            Ok(())
        }
        Command::Sweep {
            images,
            a_min,
            a_max,
            points,
            csv,
            block,
            fit,
        } => {
            let set = load_images(&images)?;
            let a_values = log_spaced(a_min, a_max, points)?;
            let fit_cfg = fit
                .map(|p| -> AnyResult<FitConfig> {
                    Ok(FitConfig::from_text(&std::fs::read_to_string(p)?)?)
                })
                .transpose()?;
            let result = rd_sweep(&set, &a_values, block, fit_cfg.as_ref().map(|c| &c.fit))?;
            std::fs::write(&csv, sweep_csv(&result, set.len()))?;
            println!(
                "{:>10} {:>10} {:>10} {:>10} {:>9} {:>9}",
                "a", "total", "latent", "side", "psnr", "msssim"
            );
            for (i, avg) in result.averages.iter().enumerate() {
                let row = &result.rows[i * set.len()];
                let (latent, side) = if set.len() == 1 {
                    (row.breakdown.latent_bpp, row.breakdown.side_bpp)
                } else {
                    // per-a means across images
                    let group = &result.rows[i * set.len()..(i + 1) * set.len()];
                    (
                        group.iter().map(|r| r.breakdown.latent_bpp).sum::<f64>()
                            / set.len() as f64,
                        group.iter().map(|r| r.breakdown.side_bpp).sum::<f64>() / set.len() as f64,
                    )
                };
                println!(
                    "{:>10.4} {:>10.5} {:>10.5} {:>10.5} {:>9.3} {:>9.5}",
                    avg.a, avg.bpp, latent, side, avg.psnr_db, avg.ms_ssim
                );
            }
            println!("wrote {}", csv.display());
            Ok(())
        }
        Command::Fit {
            lambdas,
            images,
            out,
            block,
        } => {
            let set = load_images(&images)?;
            let imgs: Vec<Image> = set.into_iter().map(|(_, img)| img).collect();
            let lambdas = LambdaSet::new(lambdas)?;
            let cfg = SearchConfig {
                block,
                ..Default::default()
            };
            let opt = optimize_vector(&lambdas, &imgs, &cfg)?;
            for (r, &l) in opt.results.iter().zip(lambdas.values()) {
                let flag = if r.grid_fallback {
                    " (grid fallback)"
                } else {
                    ""
                };
                println!("lambda={l} a={:.6} cost={:.6}{flag}", r.a, r.cost);
            }
            let vector = opt.into_vector()?;
            let config = FitConfig::from_ladder(&lambdas, &vector)?;
            std::fs::write(&out, config.to_text())?;
            println!(
                "fit: slope={:.6} intercept={:.6} r2={:.6} -> {}",
                config.fit.slope,
                config.fit.intercept,
                config.fit.r_squared,
                out.display()
            );
            Ok(())
        }
        Command::Bdrate { anchor, test } => {
            let a = curve_from_csv(&anchor)?;
            let t = curve_from_csv(&test)?;
            println!("{:+.4}%", bd_rate(&a, &t)?);
            Ok(())
        }
        Command::Account { input } => {
            let bytes = std::fs::read(&input)?;
            let header = qvrf::codec::Header::parse(&bytes)?;
            let b = account_bits(&bytes)?;
            println!(
                "{}x{} block={} a={}",
                header.width,
                header.height,
                header.block,
                header.a()
            );
            println!("total: {:.6} bpp ({} bytes)", b.total_bpp, bytes.len());
            println!(
                "latent: {:.6} bpp ({} bytes)",
                b.latent_bpp,
                bytes.len() - qvrf::codec::HEADER_LEN - header.side_len as usize
            );
            println!("side: {:.6} bpp ({} bytes)", b.side_bpp, header.side_len);
            println!(
                "header: {:.6} bpp ({} bytes)",
                b.header_bpp(),
                qvrf::codec::HEADER_LEN
            );
            Ok(())
        }
        Command::Psnr {
            reference,
            distorted,
        } => {
            let a = pnm::read(&reference)?;
            let b = pnm::read(&distorted)?;
            println!("{:.4}", psnr(&a, &b)?);
            if let Ok(s) = ms_ssim(&a, &b) {
                println!("{:.6}", s);
            }
            Ok(())
        }
    }
}
