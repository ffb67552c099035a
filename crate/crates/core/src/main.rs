use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use oslo::codec::{decode_image, encode_image, load_dataset, train, Checkpoint, CodecModel, LatentFile, TrainConfig};
use oslo::healpix::{erp_rigidity_statistics, rigidity_statistics, Direction, Order, MAX_ORDER};
use oslo::metrics::{psnr, spsnr, wspsnr_erp, wspsnr_healpix, MetricsRow, SphereSignal};
use oslo::resample::{
    erp_to_healpix, healpix_to_erp, mollweide_render, read_hpxm, read_image, write_hpxm, write_image, BitDepth, Dtype,
    ErpImage, HealpixLookup,
};
use oslo::tensor::SphereMap;
use oslo::Error;

/// HEALPix geometry, spherical CNN operators and a toy spherical codec.
#[derive(Parser)]
#[command(name = "oslo", version)]
struct Cli {
    /// Machine-readable JSON on stdout instead of text/CSV.
    #[arg(long, global = true)]
    json: bool,
    /// Seed for every random choice (overrides config files).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Cap on worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert between equirectangular images and HEALPix maps.
    Convert {
        #[command(subcommand)]
        dir: Convert,
    },
    /// Grid statistics.
    Stats {
        #[command(subcommand)]
        what: Stats,
    },
    /// Compare a test signal against a reference.
    Metrics(MetricsArgs),
    /// Train a codec from a JSON config.
    Train(TrainArgs),
    /// Compress a HEALPix map into a latent file.
    Encode(CodecIo),
    /// Reconstruct a HEALPix map (f64) from a latent file.
    Decode(CodecIo),
    /// Render a HEALPix map to PNG/PPM.
    Render(RenderArgs),
    /// Write the first analysis kernel of a model as CSV.
    DumpKernels {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn order_arg(s: &str) -> Result<u8, String> {
    let v: u8 = s.parse().map_err(|e| format!("{e}"))?;
    if v > MAX_ORDER {
        return Err(format!("order must be at most {MAX_ORDER}"));
    }
    Ok(v)
}

#[derive(Clone, Copy, ValueEnum)]
enum Lookup {
    Nearest,
    Four,
}

impl From<Lookup> for HealpixLookup {
    fn from(l: Lookup) -> Self {
        match l {
            Lookup::Nearest => HealpixLookup::Nearest,
            Lookup::Four => HealpixLookup::FourNearest,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Depth {
    #[value(name = "8")]
    Eight,
    #[value(name = "16")]
    Sixteen,
}

impl From<Depth> for BitDepth {
    fn from(d: Depth) -> Self {
        match d {
            Depth::Eight => BitDepth::Eight,
            Depth::Sixteen => BitDepth::Sixteen,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum DtypeArg {
    F32,
    F64,
}

#[derive(Subcommand)]
enum Convert {
    /// Equirectangular PNG/PPM to HPXM.
    Erp2hpx {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_parser = order_arg)]
        order: u8,
        #[arg(long, value_enum, default_value = "f32")]
        dtype: DtypeArg,
    },
    /// HPXM to equirectangular PNG/PPM (height = width / 2).
    Hpx2erp {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        width: usize,
        #[arg(long, value_enum, default_value = "four")]
        lookup: Lookup,
        #[arg(long, value_enum, default_value = "8")]
        depth: Depth,
    },
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Grid {
    Healpix,
    Erp,
}

#[derive(Subcommand)]
enum Stats {
    /// Per-direction neighbor rigidity table.
    Rigidity {
        #[arg(long, value_parser = order_arg, required_if_eq("grid", "healpix"))]
        order: Option<u8>,
        #[arg(long, value_enum, default_value = "healpix")]
        grid: Grid,
        /// ERP height in rows; the width is twice this.
        #[arg(long, conflicts_with = "order", required_if_eq("grid", "erp"))]
        height: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Metric {
    Psnr,
    Wspsnr,
    Spsnr,
}

#[derive(Args)]
struct MetricsArgs {
    #[arg(long = "ref")]
    reference: PathBuf,
    #[arg(long)]
    test: PathBuf,
    /// Metrics to report; all when omitted.
    #[arg(long, value_enum, value_delimiter = ',')]
    metric: Vec<Metric>,
    /// Signal peak: 1 for [0,1] data, 255 to score 8-bit values.
    #[arg(long, default_value_t = 1.0)]
    peak: f64,
    #[arg(long, value_enum, default_value = "four")]
    lookup: Lookup,
    /// Latent file whose size fills the rate column.
    #[arg(long)]
    latent: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long, default_value = "model.oslm")]
    out: PathBuf,
    /// Training log CSV.
    #[arg(long, default_value = "train_log.csv")]
    log: PathBuf,
}

#[derive(Args)]
struct CodecIo {
    #[arg(long)]
    model: PathBuf,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Projection {
    Mollweide,
    Erp,
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1024)]
    width: usize,
    #[arg(long, value_enum, default_value = "mollweide")]
    projection: Projection,
    #[arg(long, value_enum, default_value = "8")]
    depth: Depth,
}

fn emit(json: bool, value: serde_json::Value, text: String) {
    if json {
        println!("{value}");
    } else {
        print!("{text}");
        if !text.ends_with('\n') {
            println!();
        }
    }
}

fn write_or_print(out: Option<&Path>, body: &str) -> oslo::Result<()> {
    match out {
        Some(p) => std::fs::write(p, body).map_err(Error::from),
        None => {
            print!("{body}");
            Ok(())
        }
    }
}

fn is_image(p: &Path) -> bool {
    matches!(p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(), Some("png" | "ppm" | "pgm" | "pnm"))
}

enum Signal {
    Map(SphereMap),
    Image(ErpImage),
}

fn load_signal(p: &Path) -> oslo::Result<Signal> {
    if is_image(p) {
        read_image(p).map(Signal::Image)
    } else {
        read_hpxm(p).map(Signal::Map)
    }
}

fn as_signal(s: &Signal, lookup: HealpixLookup) -> SphereSignal<'_> {
    match s {
        Signal::Map(m) => SphereSignal::Healpix(m, lookup),
        Signal::Image(i) => SphereSignal::Erp(i),
    }
}

fn run_metrics(args: &MetricsArgs, json: bool) -> oslo::Result<()> {
    let (r, t) = (load_signal(&args.reference)?, load_signal(&args.test)?);
    let wanted = |m: Metric| args.metric.is_empty() || args.metric.contains(&m);
    let lookup: HealpixLookup = args.lookup.into();
    let same_grid = |what: &str| -> oslo::Result<(&[f64], &[f64])> {
        match (&r, &t) {
            (Signal::Map(a), Signal::Map(b)) if a.shape() == b.shape() => Ok((a.data(), b.data())),
            (Signal::Image(a), Signal::Image(b)) => Ok((a.data(), b.data())),
            _ => Err(Error::InvalidArgument(format!("{what} needs both signals on the same grid"))),
        }
    };
    let explicit = |m: Metric| args.metric.contains(&m);
    let mixed = matches!((&r, &t), (Signal::Map(_), Signal::Image(_)) | (Signal::Image(_), Signal::Map(_)));
    // grid-bound metrics are skipped for mixed inputs unless asked for
    let psnr_v = if explicit(Metric::Psnr) || (wanted(Metric::Psnr) && !mixed) {
        let (a, b) = same_grid("psnr")?;
        Some(psnr(a, b, args.peak)?)
    } else {
        None
    };
    let ws = if explicit(Metric::Wspsnr) || (wanted(Metric::Wspsnr) && !mixed) {
        Some(match (&r, &t) {
            (Signal::Map(a), Signal::Map(b)) => wspsnr_healpix(a, b, args.peak)?,
            (Signal::Image(a), Signal::Image(b)) => wspsnr_erp(a, b, args.peak)?,
            _ => return Err(Error::InvalidArgument("wspsnr needs both signals on the same grid".into())),
        })
    } else {
        None
    };
    let sp = if wanted(Metric::Spsnr) { Some(spsnr(as_signal(&r, lookup), as_signal(&t, lookup), args.peak)?) } else { None };
    let rate_bytes = match &args.latent {
        Some(p) => Some(std::fs::metadata(p)?.len()),
        None => None,
    };
    let row = MetricsRow {
        image_id: args.test.file_stem().and_then(|s| s.to_str()).unwrap_or("test").to_string(),
        rate_bytes,
        psnr: psnr_v,
        wspsnr: ws,
        spsnr: sp,
    };
    if json {
        println!("{}", serde_json::to_string(&row.capped())?);
    } else {
        println!("{}\n{}", MetricsRow::CSV_HEADER, row.to_csv());
    }
    Ok(())
}

fn run(cli: Cli) -> oslo::Result<()> {
    let json = cli.json;
    match cli.command {
        Command::Convert { dir: Convert::Erp2hpx { input, out, order, dtype } } => {
            let img = read_image(&input)?;
            let m = erp_to_healpix(&img, Order::new(order)?);
            let dtype = match dtype {
                DtypeArg::F32 => Dtype::F32,
                DtypeArg::F64 => Dtype::F64,
            };
            write_hpxm(&out, &m, dtype)?;
            emit(
                json,
                json!({"width": img.width(), "height": img.height(), "channels": m.channels(), "order": order, "npix": m.npix()}),
                format!("{}x{} -> order {} ({} pixels, {} channels)", img.width(), img.height(), order, m.npix(), m.channels()),
            );
        }
        Command::Convert { dir: Convert::Hpx2erp { input, out, width, lookup, depth } } => {
            if width < 2 || width % 2 != 0 {
                return Err(Error::InvalidArgument(format!("width {width} must be even and at least 2")));
            }
            let m = read_hpxm(&input)?;
            let img = healpix_to_erp(&m, width, width / 2, lookup.into())?;
            write_image(&out, &img, depth.into())?;
            emit(
                json,
                json!({"order": m.order().value(), "npix": m.npix(), "width": img.width(), "height": img.height()}),
                format!("order {} ({} pixels) -> {}x{}", m.order().value(), m.npix(), img.width(), img.height()),
            );
        }
        Command::Stats { what: Stats::Rigidity { order, grid, height, out } } => {
            let table = match grid {
                Grid::Healpix => {
                    let o = order.ok_or_else(|| Error::InvalidArgument("--order is required".into()))?;
                    rigidity_statistics(Order::new(o)?)
                }
                Grid::Erp => {
                    let h = height.ok_or_else(|| Error::InvalidArgument("--height is required".into()))?;
                    erp_rigidity_statistics(h, 2 * h)
                }
            };
            if let Some(p) = &out {
                std::fs::write(p, table.to_csv())?;
            }
            if json {
                println!("{}", serde_json::to_string(&table)?);
            } else if out.is_none() {
                print!("{}", table.to_csv());
            }
        }
        Command::Metrics(args) => run_metrics(&args, json)?,
        Command::Train(args) => {
            let mut cfg: TrainConfig = serde_json::from_slice(&std::fs::read(&args.config)?)?;
            if let Some(s) = args.steps {
                cfg.steps = s;
            }
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            cfg.validate()?;
            let images = load_dataset(&cfg)?;
            let mut model = CodecModel::new(cfg.arch.clone(), &mut ChaCha8Rng::seed_from_u64(cfg.seed))?;
            let log = train(&mut model, &cfg, &images)?;
            std::fs::write(&args.log, log.to_csv())?;
            Checkpoint { model, lambda: cfg.lambda }.save(&args.out)?;
            let last = log.rows.last();
            emit(
                json,
                json!({"steps": log.rows.len(), "model": args.out, "log": args.log, "final": last}),
                match last {
                    Some(r) => format!(
                        "{} steps, final loss {:.6}, {:.2} dB, {:.4} bpp -> {}",
                        log.rows.len(),
                        r.loss,
                        r.mse_db,
                        r.rate_bpp,
                        args.out.display()
                    ),
                    None => format!("0 steps -> {}", args.out.display()),
                },
            );
        }
        Command::Encode(io) => {
            let ckpt = Checkpoint::load(&io.model)?;
            let x = read_hpxm(&io.input)?;
            let (file, _) = encode_image(&ckpt, &x)?;
            file.save(&io.out)?;
            let bpp = file.rate_bits / x.npix() as f64;
            emit(
                json,
                json!({"rate_bits": file.rate_bits, "bpp": bpp, "wspsnr": oslo::metrics::capped(file.wspsnr), "lambda": file.lambda}),
                format!("{:.1} bits ({:.4} bpp), WS-PSNR {:.2} dB", file.rate_bits, bpp, oslo::metrics::capped(file.wspsnr)),
            );
        }
        Command::Decode(io) => {
            let ckpt = Checkpoint::load(&io.model)?;
            let file = LatentFile::load(&io.input)?;
            let x_hat = decode_image(&ckpt.model, &file)?;
            write_hpxm(&io.out, &x_hat, Dtype::F64)?;
            emit(
                json,
                json!({"order": x_hat.order().value(), "channels": x_hat.channels(), "recorded_wspsnr": oslo::metrics::capped(file.wspsnr)}),
                format!("order {} ({} channels) -> {}", x_hat.order().value(), x_hat.channels(), io.out.display()),
            );
        }
        Command::Render(args) => {
            let m = read_hpxm(&args.input)?;
            if args.width < 2 {
                return Err(Error::InvalidArgument("width must be at least 2".into()));
            }
            let img = match args.projection {
                Projection::Mollweide => mollweide_render(&m, args.width)?,
                Projection::Erp => healpix_to_erp(&m, args.width, (args.width / 2).max(1), HealpixLookup::FourNearest)?,
            };
            write_image(&args.out, &img, args.depth.into())?;
            emit(
                json,
                json!({"width": img.width(), "height": img.height()}),
                format!("{}x{} -> {}", img.width(), img.height(), args.out.display()),
            );
        }
        Command::DumpKernels { model, out } => {
            let ckpt = Checkpoint::load(&model)?;
            let order = Order::new(ckpt.model.config().input_order)?;
            let table = rigidity_statistics(order);
            let spacing = (4.0 * std::f64::consts::PI / order.npix() as f64).sqrt();
            let mut offsets = [(0.0, 0.0); 9];
            for d in Direction::ALL {
                let row = table.row(d);
                let a = row.mean_angle_deg.to_radians();
                offsets[d.slot() + 1] = (row.mean_dist * a.sin() / spacing, row.mean_dist * a.cos() / spacing);
            }
            write_or_print(out.as_deref(), &ckpt.model.first_kernel().to_csv(&offsets))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be positive");
            return ExitCode::from(2);
        }
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Diverged { .. } | Error::NonFinite(_) => ExitCode::from(3),
                _ => ExitCode::from(2),
            }
        }
    }
}
