//! `tubular`: command-line extraction, synthetic fixtures, evaluation and
//! debug exports.

use std::fmt::Write as _;
use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use tubular_core::geodesic::GeodesicPath;
use tubular_core::grid::{ScalarImage, UnitVector2};
use tubular_core::io;
use tubular_core::metrics::{assemble_t_coh, build_m_aniso_2d, control_set_ellipse, control_set_csv};
use tubular_core::orientation::bin_angle;
use tubular_core::pipeline::{
    distance_map, evaluate_theta, generate_preset, run_extraction, DistanceKind, ExtractionConfig, FeatureStack,
    Preset, PropagationMode, StageTiming,
};

#[derive(Parser)]
#[command(name = "tubular", version, about = "Geodesic centerline extraction for tubular structures")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Single,
    Partial,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Afc,
    Aniso,
    Iso,
}

#[derive(clap::Args)]
struct ImageArgs {
    /// PNG or PGM image.
    #[arg(long)]
    image: PathBuf,
    /// Flat `key = value` config file; missing keys keep their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Invert intensities (bright vessels on a dark background).
    #[arg(long)]
    invert: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Extract a centerline through an ordered list of points.
    Extract {
        #[command(flatten)]
        input: ImageArgs,
        /// x1,y1,x2,y2[,x3,y3...]
        #[arg(long)]
        points: String,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        /// Refine with the radius-lifted region-constrained pass.
        #[arg(long)]
        radius_lift: bool,
        /// Ground-truth mask; prints the coverage score of the result.
        #[arg(long)]
        mask: Option<PathBuf>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Write a synthetic test image with masks and centerlines.
    Synth {
        /// parallel, cross, loop, equal-cross or tube
        #[arg(long)]
        preset: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Print the coverage score of a path against a binary mask.
    Eval {
        /// Path as JSON or CSV.
        #[arg(long)]
        path: PathBuf,
        #[arg(long)]
        mask: PathBuf,
    },
    /// Full distance map from one point, as a heat map PNG and raw f32 dump.
    Distmap {
        #[command(flatten)]
        input: ImageArgs,
        /// x,y
        #[arg(long)]
        point: String,
        #[arg(long, value_enum, default_value = "afc")]
        kind: Kind,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Unit-ball boundaries of the metric tensors at one pixel, as CSV.
    Controlset {
        #[command(flatten)]
        input: ImageArgs,
        /// x,y
        #[arg(long)]
        at: String,
        #[arg(long, default_value_t = 64)]
        samples: usize,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Orientation score profile at one pixel, as `angle,value` CSV.
    Polar {
        #[command(flatten)]
        input: ImageArgs,
        #[arg(long)]
        at: String,
        /// Print the raw score instead of the enhanced one.
        #[arg(long)]
        raw: bool,
    },
    /// Print the default configuration file.
    Defaults,
    /// Run the HTTP service.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn parse_coords(text: &str) -> Result<Vec<[usize; 2]>> {
    let v: Vec<usize> = text
        .split(',')
        .map(|t| t.trim().parse::<usize>().with_context(|| format!("bad coordinate '{t}'")))
        .collect::<Result<_>>()?;
    if !v.len().is_multiple_of(2) || v.is_empty() {
        bail!("expected x,y pairs, got {} numbers", v.len());
    }
    Ok(v.chunks(2).map(|c| [c[0], c[1]]).collect())
}

fn parse_point(text: &str) -> Result<[usize; 2]> {
    match parse_coords(text)?.as_slice() {
        [p] => Ok(*p),
        _ => bail!("expected a single x,y point"),
    }
}

fn load_config(path: Option<&Path>) -> Result<ExtractionConfig> {
    Ok(match path {
        Some(p) => ExtractionConfig::load(p).with_context(|| format!("reading {}", p.display()))?,
        None => ExtractionConfig::default(),
    })
}

fn load_input(args: &ImageArgs) -> Result<(ScalarImage, ExtractionConfig)> {
    let mut image = io::load_image(&args.image).with_context(|| format!("reading {}", args.image.display()))?;
    if args.invert {
        image = image.map(|v| 1.0 - v)?;
    }
    Ok((image, load_config(args.config.as_deref())?))
}

fn write(path: PathBuf, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn timings_csv(stages: &[StageTiming], total: f64) -> String {
    let mut out = String::from("stage,seconds\n");
    for t in stages {
        let _ = writeln!(out, "{},{:.6}", t.stage, t.seconds);
    }
    let _ = writeln!(out, "total,{total:.6}");
    out
}

fn extract(
    input: &ImageArgs,
    points: &str,
    mode: Option<Mode>,
    radius_lift: bool,
    mask: Option<&Path>,
    out: &Path,
) -> Result<()> {
    let start = Instant::now();
    let (image, mut cfg) = load_input(input)?;
    if let Some(m) = mode {
        cfg.mode = match m {
            Mode::Single => PropagationMode::Single,
            Mode::Partial => PropagationMode::Partial,
        };
    }
    cfg.radius_lift |= radius_lift;
    let points = parse_coords(points)?;
    fs::create_dir_all(out)?;
    let stack = FeatureStack::compute(image, &cfg)?;
    let res = run_extraction(&stack, &points, &cfg)?;
    let total = start.elapsed().as_secs_f64();

    io::write_path_json(out.join("path.json"), &res.path)?;
    let mut drawn: Vec<(&GeodesicPath, [u8; 3])> = vec![(&res.path, [230, 30, 30])];
    if let Some(rc) = &res.radius_path {
        io::write_path_json(out.join("radius_path.json"), rc)?;
        drawn.push((rc, [30, 200, 60]));
    }
    let markers: Vec<_> = points.iter().map(|p| ([p[0] as f64, p[1] as f64], [40, 90, 255])).collect();
    write(out.join("overlay.png"), io::encode_overlay(&stack.image, &drawn, &markers)?)?;
    let stages: Vec<StageTiming> = stack.timings.iter().chain(&res.timings).cloned().collect();
    write(out.join("timings.csv"), timings_csv(&stages, total))?;
    write(out.join("diagnostics.json"), serde_json::to_vec_pretty(&res.segments)?)?;

    println!("path: {} samples, length {:.2}", res.path.len(), res.path.length());
    if let Some(mask) = mask {
        let (w, h, cells) = io::load_mask(mask)?;
        println!("theta: {:.4}", evaluate_theta(&res.path.points, &cells, w, h)?);
        if let Some(rc) = &res.radius_path {
            println!("theta (radius-lifted): {:.4}", evaluate_theta(&rc.points, &cells, w, h)?);
        }
    }
    println!("wall time: {total:.3} s");
    Ok(())
}

fn synth(preset: &str, seed: u64, out: &Path) -> Result<()> {
    let preset: Preset = preset.parse()?;
    let syn = generate_preset(preset, seed)?;
    let (w, h) = (syn.spec.width, syn.spec.height);
    fs::create_dir_all(out)?;
    write(out.join("image.png"), io::encode_gray_png(w, h, syn.image.values())?)?;
    write(out.join("target_mask.png"), io::encode_mask_png(w, h, syn.target_mask())?)?;
    write(out.join("other_mask.png"), io::encode_mask_png(w, h, &syn.other_mask())?)?;
    // spec.json records the seed, tubes and points
    write(out.join("spec.json"), serde_json::to_vec_pretty(&syn.spec)?)?;
    let pts: Vec<String> = syn.points_with_waypoints().iter().map(|p| format!("{},{}", p[0], p[1])).collect();
    write(out.join("points.txt"), pts.join(",") + "\n")?;
    println!("{} seed {seed}: {w}x{h}, points {}", preset.name(), pts.join(","));
    Ok(())
}

fn eval(path: &Path, mask: &Path) -> Result<()> {
    let p = io::read_path(path)?;
    let (w, h, cells) = io::load_mask(mask)?;
    println!("{:.6}", evaluate_theta(&p.points, &cells, w, h)?);
    Ok(())
}

fn distmap(input: &ImageArgs, point: &str, kind: Kind, out: &Path) -> Result<()> {
    let (image, cfg) = load_input(input)?;
    let s = parse_point(point)?;
    let stack = FeatureStack::compute(image, &cfg)?;
    let kind = match kind {
        Kind::Afc => DistanceKind::Afc,
        Kind::Aniso => DistanceKind::Aniso,
        Kind::Iso => DistanceKind::Iso,
    };
    let u = distance_map(&stack, s, kind, &cfg)?;
    fs::create_dir_all(out)?;
    write(out.join("distance.png"), io::encode_heat_map(stack.width(), stack.height(), &u)?)?;
    write(out.join("distance.f32"), io::encode_f32_raw(&u))?;
    let reached = u.iter().filter(|v| v.is_finite()).count();
    println!("{}x{} f32 little-endian, {reached} cells reached", stack.width(), stack.height());
    Ok(())
}

fn controlset(input: &ImageArgs, at: &str, samples: usize, out: Option<&Path>) -> Result<()> {
    let (image, cfg) = load_input(input)?;
    let [x, y] = parse_point(at)?;
    let stack = FeatureStack::compute(image, &cfg)?;
    if x >= stack.width() || y >= stack.height() {
        return Err(tubular_core::Error::Domain(format!("pixel ({x}, {y}) outside the image")).into());
    }
    let center = [x as f64, y as f64];
    let mut tensors = vec![("base".to_string(), *stack.t_base.get(x, y))];
    tensors.push(("flux".to_string(), *build_m_aniso_2d(&stack.scale_map, cfg.c_ratio)?.0.get(x, y)));
    for &k in stack.peaks.peaks(x, y) {
        let p = UnitVector2::from_angle(bin_angle(k as usize, cfg.n_theta));
        tensors.push((format!("coherent-{k}"), assemble_t_coh(*stack.t_base.get(x, y), p, 1.0, cfg.xi_aniso)));
    }
    let mut csv = String::from("tensor,x,y\n");
    for (name, t) in tensors {
        let pts = control_set_ellipse(&t, samples)?;
        // close the polyline
        let mut body = control_set_csv(&pts, center).lines().skip(1).map(str::to_string).collect::<Vec<_>>();
        body.push(body[0].clone());
        for line in body {
            let _ = writeln!(csv, "{name},{line}");
        }
    }
    match out {
        Some(p) => write(p.to_path_buf(), csv),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

fn polar(input: &ImageArgs, at: &str, raw: bool) -> Result<()> {
    let (image, cfg) = load_input(input)?;
    let [x, y] = parse_point(at)?;
    let stack = FeatureStack::compute(image, &cfg)?;
    if x >= stack.width() || y >= stack.height() {
        return Err(tubular_core::Error::Domain(format!("pixel ({x}, {y}) outside the image")).into());
    }
    let vol = if raw { &stack.raw } else { &stack.enhanced };
    print!("{}", vol.polar_csv(x, y));
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Extract { input, points, mode, radius_lift, mask, out } => {
            extract(&input, &points, mode, radius_lift, mask.as_deref(), &out)
        }
        Command::Synth { preset, seed, out } => synth(&preset, seed, &out),
        Command::Eval { path, mask } => eval(&path, &mask),
        Command::Distmap { input, point, kind, out } => distmap(&input, &point, kind, &out),
        Command::Controlset { input, at, samples, out } => controlset(&input, &at, samples, out.as_deref()),
        Command::Polar { input, at, raw } => polar(&input, &at, raw),
        Command::Defaults => {
            print!("{}", ExtractionConfig::default().to_text());
            Ok(())
        }
        Command::Serve { addr, config } => {
            let cfg = load_config(config.as_deref())?;
            let rt = tokio::runtime::Runtime::new()?;
            eprintln!("listening on http://{addr}");
            rt.block_on(tubular_service::serve(addr, cfg))?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = e.downcast_ref::<tubular_core::Error>().map_or("error", |c| c.code());
            eprintln!("error [{code}]: {e:#}");
            ExitCode::from(2)
        }
    }
}
