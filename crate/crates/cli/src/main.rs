use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use kdgrid_core::alignment::ResizeMethod;
use kdgrid_core::allocation::{allocate_shapes, annotate};
use kdgrid_core::bench::{self, DEFAULT_REPEATS};
use kdgrid_core::decomposition::{decompose_traced, objective, Partition, DEFAULT_N_MAX};
use kdgrid_core::interpolation::scatter_to_grid;
use kdgrid_core::io::{read_cloud, read_grid, read_partition, write_cloud, write_grid, write_partition};
use kdgrid_core::pipeline::{export_dataset, Assignment, Discretization, SamplePair};
use kdgrid_core::synth::{self, SyntheticField};
use kdgrid_core::PointCloud;

mod plot;

const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), " (file format 1)");

#[derive(Parser)]
#[command(name = "kdgrid", version = VERSION, about = "Non-uniform point clouds to per-subdomain uniform grids")]
struct Cli {
    /// Print structured JSON instead of text.
    #[arg(long, global = true)]
    json: bool,

    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded Gaussian-mixture cloud.
    Synth(SynthArgs),
    /// Split a cloud into subdomains.
    Decompose(DecomposeArgs),
    /// Give every leaf of a partition a uniform grid.
    Allocate(AllocateArgs),
    /// Move values between a cloud and the leaf grids.
    Interp(InterpArgs),
    /// Round-trip interpolation error of a single grid vs. subdomain grids.
    Roundtrip(RoundtripArgs),
    /// Write aligned input/target tensors for a set of samples.
    Export(ExportArgs),
    /// Run a benchmark and write CSV.
    Bench {
        #[command(subcommand)]
        which: BenchCommand,
    },
    /// Draw a benchmark CSV as an SVG chart.
    Plot(PlotArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 2)]
    dims: usize,
    #[arg(long, default_value_t = 4096)]
    count: usize,
    /// `c1,c2,..:sigma:weight` entries separated by `;`.
    #[arg(long, default_value = "")]
    clusters: String,
    /// Uniform share of the points (default: one minus the cluster weights).
    #[arg(long)]
    background: Option<f64>,
    /// Attach a smooth-plus-bump field, bump on the first cluster.
    #[arg(long)]
    field: bool,
    /// Use the reference dense-centre 2D cloud with its field instead.
    #[arg(long, conflicts_with_all = ["clusters", "background", "field", "dims", "count"])]
    preset: Option<Preset>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    DenseCentre,
}

#[derive(Args)]
struct DecomposeArgs {
    /// One cloud, or several that are stacked into one decomposition
    /// (points of later samples are then matched with `--assign location`).
    #[arg(long, required = true, num_args = 1..)]
    cloud: Vec<PathBuf>,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = DEFAULT_N_MAX)]
    nmax: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AllocateArgs {
    #[arg(long)]
    partition: PathBuf,
    #[arg(long)]
    ratio: f64,
    /// Write here instead of updating the partition file in place.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Direction {
    Forward,
    Backward,
}

#[derive(Clone, Copy, ValueEnum)]
enum AssignArg {
    Id,
    Location,
}

impl From<AssignArg> for Assignment {
    fn from(a: AssignArg) -> Self {
        match a {
            AssignArg::Id => Assignment::ById,
            AssignArg::Location => Assignment::ByLocation,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ResizeArg {
    Spectral,
    Multilinear,
}

impl From<ResizeArg> for ResizeMethod {
    fn from(r: ResizeArg) -> Self {
        match r {
            ResizeArg::Spectral => ResizeMethod::Spectral,
            ResizeArg::Multilinear => ResizeMethod::Multilinear,
        }
    }
}

#[derive(Args)]
struct InterpArgs {
    #[arg(long)]
    cloud: PathBuf,
    #[arg(long)]
    partition: PathBuf,
    #[arg(long, value_enum)]
    direction: Direction,
    /// Forward: directory receiving `leaf_000.json` etc. Backward: cloud file
    /// with the interpolated values.
    #[arg(long)]
    out: PathBuf,
    /// Directory of leaf grids to read (backward only).
    #[arg(long)]
    grids: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "id")]
    assign: AssignArg,
}

#[derive(Args)]
struct RoundtripArgs {
    #[arg(long)]
    cloud: PathBuf,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    ratio: f64,
    #[arg(long, default_value_t = DEFAULT_N_MAX)]
    nmax: usize,
}

#[derive(Args)]
struct ExportArgs {
    /// Glob of input cloud manifests, paired with targets in sorted order.
    #[arg(long)]
    inputs: String,
    #[arg(long)]
    targets: String,
    /// Partition with allocated grids.
    #[arg(long)]
    partition: PathBuf,
    /// Separate partition (with grids) for the targets.
    #[arg(long)]
    target_partition: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "id")]
    assign: AssignArg,
    #[arg(long, value_enum, default_value = "spectral")]
    resize: ResizeArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum BenchCommand {
    /// Round-trip error against the oversampling ratio.
    Roundtrip(BenchRoundtripArgs),
    /// Decomposition time against cloud size.
    Scaling(BenchScalingArgs),
}

#[derive(Args)]
struct BenchRoundtripArgs {
    /// Cloud with values (default: the reference cloud for `--seed`).
    #[arg(long)]
    cloud: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 5)]
    n: usize,
    #[arg(long, value_delimiter = ',', default_values_t = [0.5, 1.0, 2.0, 4.0])]
    ratios: Vec<f64>,
    #[arg(long, default_value_t = DEFAULT_REPEATS)]
    repeats: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    plot: Option<PathBuf>,
}

#[derive(Args)]
struct BenchScalingArgs {
    #[arg(long, default_value_t = 3)]
    dims: usize,
    #[arg(long, default_value_t = 16)]
    n: usize,
    #[arg(long, value_delimiter = ',', default_values_t = [25_000, 50_000, 100_000, 200_000])]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_REPEATS)]
    repeats: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    plot: Option<PathBuf>,
}

#[derive(Args)]
struct PlotArgs {
    #[arg(long)]
    csv: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

/// What a command reports: a JSON value and its text rendering.
struct Report {
    json: Value,
    text: String,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let as_json = cli.json;
    match run(cli) {
        Ok(report) => {
            if as_json {
                println!("{}", report.json);
            } else if !report.text.is_empty() {
                print!("{}", report.text);
            }
            ExitCode::SUCCESS
        }
        Err(err) => {
            let kind = err
                .chain()
                .find_map(|e| e.downcast_ref::<kdgrid_core::Error>())
                .map_or("cli", |e| e.kind());
            eprintln!("{}", json!({ "error": format!("{err:#}"), "kind": kind }));
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<Report> {
    if let Some(w) = cli.workers {
        ensure!(w > 0, "--workers must be at least 1");
        rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
            .context("configuring the worker pool")?;
    }
    match cli.command {
        Command::Synth(a) => synth_cmd(a),
        Command::Decompose(a) => decompose_cmd(a),
        Command::Allocate(a) => allocate_cmd(a),
        Command::Interp(a) => interp_cmd(a),
        Command::Roundtrip(a) => roundtrip_cmd(a),
        Command::Export(a) => export_cmd(a),
        Command::Bench { which } => match which {
            BenchCommand::Roundtrip(a) => bench_roundtrip_cmd(a),
            BenchCommand::Scaling(a) => bench_scaling_cmd(a),
        },
        Command::Plot(a) => plot_cmd(a),
    }
}

fn load_cloud(path: &Path) -> Result<PointCloud> {
    read_cloud(path).with_context(|| format!("reading cloud {}", path.display()))
}

fn load_partition(path: &Path) -> Result<Partition> {
    read_partition(path).with_context(|| format!("reading partition {}", path.display()))
}

fn synth_cmd(a: SynthArgs) -> Result<Report> {
    let cloud = match a.preset {
        Some(Preset::DenseCentre) => synth::dense_centre_sample(a.seed)?,
        None => {
            let clusters = synth::parse_clusters(&a.clusters)?;
            let background = a
                .background
                .unwrap_or_else(|| (1.0 - clusters.iter().map(|c| c.weight).sum::<f64>()).max(0.0));
            let cloud = synth::gen_gaussian_mixture(a.seed, a.dims, a.count, &clusters, background)?;
            if a.field {
                let center = clusters.first().map_or(vec![0.5; a.dims], |c| c.center.clone());
                let width = clusters.first().map_or(0.05, |c| c.sigma / 2.0);
                SyntheticField::random(a.seed, a.dims, center, width).attach(cloud)?
            } else {
                cloud
            }
        }
    };
    write_cloud(&a.out, &cloud).with_context(|| format!("writing {}", a.out.display()))?;
    Ok(Report {
        json: json!({"out": a.out, "count": cloud.len(), "dims": cloud.dims(), "channels": cloud.channels()}),
        text: format!(
            "wrote {} points ({}D, channels: {}) to {}\n",
            cloud.len(),
            cloud.dims(),
            cloud.channels(),
            a.out.display()
        ),
    })
}

fn decompose_cmd(a: DecomposeArgs) -> Result<Report> {
    let clouds = a.cloud.iter().map(|p| load_cloud(p)).collect::<Result<Vec<_>>>()?;
    let cloud = match clouds.len() {
        1 => clouds.into_iter().next().expect("one cloud"),
        _ => PointCloud::stack(&clouds)?,
    };
    let before = objective(&cloud, &Partition::identity(&cloud)?)?;
    let (partition, steps) = decompose_traced(&cloud, a.n, a.nmax)?;
    let after = objective(&cloud, &partition)?;
    write_partition(&a.out, &partition).with_context(|| format!("writing {}", a.out.display()))?;

    let mut text = format!("objective {before:.6} -> {after:.6}\n");
    for (i, s) in steps.iter().enumerate() {
        text += &format!(
            "split {:>3}: leaf {} ({} points) x[{}] <= {} gain {:.6}\n",
            i + 1,
            s.leaf,
            s.size,
            s.candidate.axis,
            s.candidate.threshold,
            s.candidate.gain
        );
    }
    if partition.terminated_early() {
        text += &format!(
            "stopped early: {} of {} leaves, no leaf can be split further\n",
            partition.len(),
            a.n
        );
    }
    text += &format!("wrote {} leaves to {}\n", partition.len(), a.out.display());
    Ok(Report {
        json: json!({
            "objective_before": before,
            "objective_after": after,
            "leaves": partition.len(),
            "requested": a.n,
            "terminated_early": partition.terminated_early(),
            "splits": steps.iter().map(|s| json!({
                "leaf": s.leaf, "size": s.size,
                "axis": s.candidate.axis, "threshold": s.candidate.threshold, "gain": s.candidate.gain,
            })).collect::<Vec<_>>(),
            "out": a.out,
        }),
        text,
    })
}

fn allocate_cmd(a: AllocateArgs) -> Result<Report> {
    let mut partition = load_partition(&a.partition)?;
    let shapes = allocate_shapes(&partition, a.ratio)?;
    annotate(&mut partition, &shapes)?;
    let out = a.out.unwrap_or(a.partition);
    write_partition(&out, &partition).with_context(|| format!("writing {}", out.display()))?;
    let nodes: usize = shapes.iter().map(|s| s.node_count()).sum();
    let mut text = String::new();
    for (k, s) in shapes.iter().enumerate() {
        text += &format!(
            "leaf {k}: {} points, grid {:?}\n",
            partition.leaves[k].point_ids.len(),
            s.dims
        );
    }
    text += &format!("{nodes} nodes for {} points\n", partition.point_count());
    Ok(Report {
        json: json!({
            "grids": shapes.iter().map(|s| &s.dims).collect::<Vec<_>>(),
            "nodes": nodes,
            "points": partition.point_count(),
            "out": out,
        }),
        text,
    })
}

fn leaf_grid_path(dir: &Path, k: usize) -> PathBuf {
    dir.join(format!("leaf_{k:03}.json"))
}

fn interp_cmd(a: InterpArgs) -> Result<Report> {
    let cloud = load_cloud(&a.cloud)?;
    let partition = load_partition(&a.partition)?;
    let disc = Discretization::from_stored(partition, a.assign.into())?;
    match a.direction {
        Direction::Forward => {
            ensure!(a.grids.is_none(), "--grids is only read by --direction backward");
            let rows = disc.leaf_rows(&cloud)?;
            fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
            for (k, (rows, shape)) in rows.iter().zip(&disc.shapes).enumerate() {
                ensure!(!rows.is_empty(), "leaf {k} holds none of the cloud's points");
                let grid = scatter_to_grid(&cloud.select(rows), shape)?;
                write_grid(&leaf_grid_path(&a.out, k), &grid)?;
            }
            Ok(Report {
                json: json!({"grids": disc.shapes.len(), "out": a.out}),
                text: format!("wrote {} leaf grids to {}\n", disc.shapes.len(), a.out.display()),
            })
        }
        Direction::Backward => {
            let dir = a
                .grids
                .ok_or_else(|| anyhow!("--direction backward needs --grids DIR"))?;
            let grids = (0..disc.shapes.len())
                .map(|k| {
                    let path = leaf_grid_path(&dir, k);
                    let g = read_grid(&path).with_context(|| format!("reading {}", path.display()))?;
                    ensure!(
                        g.shape.dims == disc.shapes[k].dims,
                        "{} does not match leaf {k}",
                        path.display()
                    );
                    Ok(g)
                })
                .collect::<Result<Vec<_>>>()?;
            let channels = grids.first().map_or(0, |g| g.channels);
            let values = disc.gather(&grids, &cloud)?;
            let out = cloud.without_values().with_values(values)?;
            write_cloud(&a.out, &out)?;
            Ok(Report {
                json: json!({"points": out.len(), "channels": channels, "out": a.out}),
                text: format!("wrote {} interpolated points to {}\n", out.len(), a.out.display()),
            })
        }
    }
}

fn roundtrip_cmd(a: RoundtripArgs) -> Result<Report> {
    let cloud = load_cloud(&a.cloud)?;
    let global = bench::roundtrip_error(&cloud, &Partition::identity(&cloud)?, a.ratio)?;
    let (partition, _) = decompose_traced(&cloud, a.n, a.nmax)?;
    let sub = bench::roundtrip_error(&cloud, &partition, a.ratio)?;
    Ok(Report {
        json: json!({"ratio": a.ratio, "n": a.n, "leaves": partition.len(), "global": global, "subdomain": sub}),
        text: format!(
            "ratio {}: global {global:.6e}, subdomain ({} leaves) {sub:.6e}\n",
            a.ratio,
            partition.len()
        ),
    })
}

fn expand_glob(pattern: &str) -> Result<Vec<PathBuf>> {
    let mut paths = glob::glob(pattern)
        .with_context(|| format!("bad pattern {pattern:?}"))?
        .collect::<std::result::Result<Vec<_>, _>>()?;
    paths.sort();
    ensure!(!paths.is_empty(), "no files match {pattern:?}");
    Ok(paths)
}

fn export_cmd(a: ExportArgs) -> Result<Report> {
    let inputs = expand_glob(&a.inputs)?;
    let targets = expand_glob(&a.targets)?;
    ensure!(
        inputs.len() == targets.len(),
        "{} input files but {} target files",
        inputs.len(),
        targets.len()
    );
    let samples = inputs
        .iter()
        .zip(&targets)
        .map(|(i, t)| {
            Ok(SamplePair {
                input: load_cloud(i)?,
                target: load_cloud(t)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let disc = Discretization::from_stored(load_partition(&a.partition)?, a.assign.into())?;
    let target_disc = match &a.target_partition {
        Some(p) => Some(Discretization::from_stored(load_partition(p)?, a.assign.into())?),
        None => None,
    };
    let summary = export_dataset(&a.out, &samples, &disc, target_disc.as_ref(), a.resize.into())?;
    Ok(Report {
        text: format!(
            "wrote {} samples: inputs {} x {} x {:?}, targets {} x {} x {:?} to {}\n",
            summary.inputs.samples,
            summary.inputs.leaves,
            summary.inputs.channels,
            summary.inputs.shape,
            summary.targets.leaves,
            summary.targets.channels,
            summary.targets.shape,
            a.out.display()
        ),
        json: serde_json::to_value(&summary)?,
    })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn bench_roundtrip_cmd(a: BenchRoundtripArgs) -> Result<Report> {
    let cloud = match &a.cloud {
        Some(p) => load_cloud(p)?,
        None => synth::dense_centre_sample(a.seed)?,
    };
    let rows = bench::bench_roundtrip(&cloud, a.n, &a.ratios, a.repeats)?;
    bench::write_csv(create(&a.out)?, &rows)?;
    if let Some(p) = &a.plot {
        plot::roundtrip(p, &rows)?;
    }
    let mut text = String::new();
    for r in &rows {
        text += &format!("{:>6} {:<9} {:.6e} {:.4}s\n", r.ratio, r.method, r.error, r.seconds);
    }
    Ok(Report {
        json: json!({"rows": rows, "out": a.out}),
        text,
    })
}

fn bench_scaling_cmd(a: BenchScalingArgs) -> Result<Report> {
    let rows = bench::bench_decompose_scaling(a.dims, a.n, &a.sizes, a.seed, a.repeats)?;
    bench::write_csv(create(&a.out)?, &rows)?;
    if let Some(p) = &a.plot {
        plot::scaling(p, &rows)?;
    }
    let mut text = String::new();
    for (i, r) in rows.iter().enumerate() {
        let growth = match i {
            0 => String::new(),
            _ => format!("  x{:.2}", r.seconds / rows[i - 1].seconds),
        };
        text += &format!("m={:<8} {} leaves {:.4}s{growth}\n", r.m, r.leaves, r.seconds);
    }
    Ok(Report {
        json: json!({"rows": rows, "out": a.out}),
        text,
    })
}

fn plot_cmd(a: PlotArgs) -> Result<Report> {
    let text = fs::read_to_string(&a.csv).with_context(|| format!("reading {}", a.csv.display()))?;
    let header = text.lines().next().unwrap_or_default();
    match header {
        "ratio,method,error,seconds" => plot::roundtrip(&a.out, &bench::read_roundtrip_csv(text.as_bytes())?)?,
        "m,dims,leaves,seconds" => plot::scaling(&a.out, &bench::read_scaling_csv(text.as_bytes())?)?,
        other => bail!("unrecognised benchmark header {other:?}"),
    }
    Ok(Report {
        json: json!({"out": a.out}),
        text: format!("wrote {}\n", a.out.display()),
    })
}
