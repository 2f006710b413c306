//! The `ebimgnn` command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or validation error,
//! 3 reference-table mismatch.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::checkpoint::{format_checkpoint, load_checkpoint};
use crate::cloud::{load_labels, load_point_cloud, CloudFormat};
use crate::config::{load_config, Config};
use crate::error::{Error, Result};
use crate::geometry::Box7;
use crate::graph::voxel_downsample;
use crate::pointgnn::{
    format_detections, parse_detections, prepare_training, prototypes_from_labels, train_with, Detector, LabelledCloud,
};
use crate::prototypes::{
    count_matches, energy_report, match_all, matching_loss_for, reproduce, stats_by_class, MatchResult,
    PrototypeSet, ReferenceTables, PROTOTYPES_PER_CLASS,
};
use crate::scene::generate_scene;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_MISMATCH: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "ebimgnn", version, about = "Building detection and prototype energy reports from point clouds")]
struct Cli {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run seed; overrides the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate synthetic scenes and their labels.
    Gen {
        /// Number of scenes; defaults to the `scenes` setting.
        #[arg(long)]
        count: Option<usize>,
    },
    /// Downsample a cloud, build its radius graph and dump edge statistics.
    Graph {
        #[arg(long)]
        input: PathBuf,
    },
    /// Train the detector on a directory written by `gen`.
    Train {
        #[arg(long)]
        input: PathBuf,
    },
    /// Detect buildings in a cloud.
    Detect {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        model: PathBuf,
    },
    /// Derive prototypes from a detections or labels CSV.
    Prototypes {
        #[arg(long)]
        input: PathBuf,
    },
    /// Match boxes from a detections or labels CSV to prototypes.
    Match {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        prototypes: PathBuf,
    },
    /// Energy report from a matches CSV.
    Report {
        #[arg(long)]
        input: PathBuf,
        /// Prototype file supplying the prototype energies; the configured
        /// energies are used without it.
        #[arg(long)]
        prototypes: Option<PathBuf>,
    },
    /// Regenerate the bundled reference tables and compare.
    ReproduceTables,
}

/// Everything a subcommand needs besides its own arguments.
struct Run<'a> {
    config: Config,
    out: PathBuf,
    stdout: &'a mut dyn Write,
}

impl Run<'_> {
    fn header(&self) -> String {
        format!(
            "# ebimgnn {VERSION} seed={} config={}\n",
            self.config.seed,
            self.config.hash()
        )
    }

    fn write(&self, name: &str, body: &str) -> Result<PathBuf> {
        let path = self.out.join(name);
        let text = format!("{}{}", self.header(), body);
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    fn say(&mut self, text: &str) {
        let _ = writeln!(self.stdout, "{text}");
    }
}

/// Holds `<out>/.lock` for the lifetime of a run.
struct Lock(PathBuf);

impl Lock {
    fn acquire(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(".lock");
        let mut f = OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
            .map_err(|e| {
                if e.kind() == std::io::ErrorKind::AlreadyExists {
                    Error::Config(format!("{} exists: another run is using this directory", path.display()))
                } else {
                    Error::io(&path, e)
                }
            })?;
        let _ = writeln!(f, "{}", std::process::id());
        Ok(Lock(path))
    }
}

impl Drop for Lock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

/// Boxes from a labels CSV (8 columns) or a detections CSV (10 columns).
pub fn load_boxes(path: &Path) -> Result<Vec<(usize, Box7)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let columns = text
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty() && !l.starts_with('#'))
        .map_or(0, |l| l.split(',').count());
    if columns == 10 {
        Ok(parse_detections(&text)?
            .into_iter()
            .map(|d| (d.class_id, d.bbox))
            .collect())
    } else {
        Ok(crate::cloud::parse_labels(&text)?
            .into_iter()
            .map(|g| (g.class_id, g.bbox))
            .collect())
    }
}

pub fn format_matches(matches: &[MatchResult]) -> String {
    let mut out = String::from("index,classId,prototype,zL,zH,zW,meanZ\n");
    for m in matches {
        let z = m.z_scores;
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            m.detection,
            m.class_id,
            m.prototype,
            z[0],
            z[1],
            z[2],
            m.mean_z()
        ));
    }
    out
}

/// `(classId, prototype)` pairs from a matches CSV.
pub fn parse_matches(text: &str) -> Result<Vec<(usize, usize)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("index") {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        let bad = || Error::Parse {
            line: i + 1,
            message: format!("malformed match row `{line}`"),
        };
        if cells.len() != 7 {
            return Err(bad());
        }
        let class = cells[1].parse().map_err(|_| bad())?;
        let proto = cells[2].parse().map_err(|_| bad())?;
        out.push((class, proto));
    }
    Ok(out)
}

fn scene_name(i: usize) -> String {
    format!("scene_{i:04}")
}

/// Labelled clouds of a `gen` directory, in file-name order.
pub fn load_scene_dir(dir: &Path) -> Result<Vec<LabelledCloud>> {
    let mut labels: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.to_string_lossy().ends_with(".labels.csv"))
        .collect();
    labels.sort();
    if labels.is_empty() {
        return Err(Error::Format(format!("no *.labels.csv files in {}", dir.display())));
    }
    labels
        .iter()
        .map(|lp| {
            let name = lp.file_name().unwrap_or_default().to_string_lossy().into_owned();
            let stem = name.trim_end_matches(".labels.csv");
            let cloud_path = [format!("{stem}.bin"), format!("{stem}.csv")]
                .into_iter()
                .map(|n| dir.join(n))
                .find(|p| p.exists())
                .ok_or_else(|| Error::Format(format!("no cloud next to {}", lp.display())))?;
            let cloud = load_point_cloud(&cloud_path, CloudFormat::from_path(&cloud_path))?;
            Ok((cloud, load_labels(lp)?))
        })
        .collect()
}

fn gen(run: &mut Run, count: Option<usize>) -> Result<()> {
    let n = count.unwrap_or(run.config.scenes);
    let ext = match run.config.cloud_format {
        CloudFormat::BinaryXyzr => "bin",
        CloudFormat::Csv => "csv",
    };
    let mut manifest = String::from("cloud,labels,points,buildings\n");
    for i in 0..n {
        let mut sc = run.config.scene.clone();
        sc.seed = run.config.seed.wrapping_add(i as u64);
        let (cloud, labels) = generate_scene(&sc)?;
        let name = scene_name(i);
        let cloud_path = run.out.join(format!("{name}.{ext}"));
        match run.config.cloud_format {
            CloudFormat::BinaryXyzr => crate::cloud::save_point_cloud(&cloud, &cloud_path, CloudFormat::BinaryXyzr)?,
            CloudFormat::Csv => {
                run.write(&format!("{name}.csv"), &crate::cloud::format_cloud_csv(&cloud))?;
            }
        }
        run.write(&format!("{name}.labels.csv"), &crate::cloud::format_labels(&labels))?;
        manifest.push_str(&format!(
            "{name}.{ext},{name}.labels.csv,{},{}\n",
            cloud.len(),
            labels.len()
        ));
    }
    run.write("manifest.csv", &manifest)?;
    run.say(&format!("wrote {n} scenes to {}", run.out.display()));
    Ok(())
}

fn graph(run: &mut Run, input: &Path) -> Result<()> {
    let cloud = load_point_cloud(input, CloudFormat::from_path(input))?;
    let cfg = &run.config.detector;
    let (down, _) = voxel_downsample(&cloud, cfg.voxel_size)?;
    let g = crate::graph::build_radius_graph_for_cloud(&down, cfg.radius)?;
    let degrees: Vec<usize> = (0..g.vertex_count()).map(|i| g.neighbors(i).len()).collect();
    let isolated = degrees.iter().filter(|&&d| d == 0).count();
    let mean = if degrees.is_empty() {
        0.0
    } else {
        degrees.iter().sum::<usize>() as f64 / degrees.len() as f64
    };
    let stats = format!(
        "points = {}\nvertices = {}\nedges = {}\nradius = {}\nvoxel_size = {}\nmean_degree = {mean:.3}\nmax_degree = {}\nisolated = {isolated}\n",
        cloud.len(),
        g.vertex_count(),
        g.edges().len(),
        cfg.radius,
        cfg.voxel_size,
        degrees.iter().max().copied().unwrap_or(0),
    );
    run.write("graph_stats.txt", &stats)?;
    run.write("edges.csv", &g.edges_csv())?;
    run.say(stats.trim_end());
    Ok(())
}

fn train_cmd(run: &mut Run, input: &Path) -> Result<()> {
    let data = load_scene_dir(input)?;
    let mut cfg = run.config.detector.clone();
    let types = data
        .iter()
        .flat_map(|(_, l)| l.iter().map(|g| g.class_id + 1))
        .max()
        .unwrap_or(0);
    if types > cfg.building_types {
        return Err(Error::Validation {
            row: 0,
            message: format!(
                "labels use {types} building types but building_types = {}",
                cfg.building_types
            ),
        });
    }
    let protos = prototypes_from_labels(&data, &run.config.prototype_energies)?;
    let scenes = prepare_training(&mut cfg, &data, Some(&protos))?;
    let mut detector = Detector::new(cfg)?;
    let mut lines = Vec::new();
    let history = train_with(&mut detector, &scenes, |e| {
        lines.push(format!("epoch {:>4}  loss {:.5}", e.epoch, e.loss.total));
    })?;
    for l in lines {
        run.say(&l);
    }
    let model = run.write("model.ckpt", &format_checkpoint(&detector))?;
    run.write("loss.csv", &history.to_csv())?;
    run.write("prototypes.csv", &protos.to_csv())?;
    run.say(&format!("wrote {}", model.display()));
    Ok(())
}

fn detect_cmd(run: &mut Run, input: &Path, model: &Path) -> Result<()> {
    let detector = load_checkpoint(model)?;
    let cloud = load_point_cloud(input, CloudFormat::from_path(input))?;
    let dets = detector.detect(&cloud)?;
    let path = run.write("detections.csv", &format_detections(&dets))?;
    run.say(&format!("{} detections written to {}", dets.len(), path.display()));
    Ok(())
}

fn prototypes_cmd(run: &mut Run, input: &Path) -> Result<()> {
    let boxes = load_boxes(input)?;
    let mut set = PrototypeSet::from_stats(&stats_by_class(&boxes)?, &run.config.prototype_energies)?;
    set.coefficients = run.config.phi.clone();
    let path = run.write("prototypes.csv", &set.to_csv())?;
    run.say(&format!(
        "{} classes, {} prototypes written to {}",
        set.classes.len(),
        set.classes.len() * PROTOTYPES_PER_CLASS,
        path.display()
    ));
    Ok(())
}

fn match_cmd(run: &mut Run, input: &Path, prototypes: &Path) -> Result<()> {
    let boxes = load_boxes(input)?;
    let mut set = PrototypeSet::load(prototypes)?;
    set.coefficients = run.config.phi.clone();
    let matches = match_all(&boxes, &set)?;
    let loss = matching_loss_for(&boxes, &matches, &set)?;
    let path = run.write("matches.csv", &format_matches(&matches))?;
    run.say(&format!(
        "{} boxes matched, matching loss {loss:.4}, written to {}",
        matches.len(),
        path.display()
    ));
    Ok(())
}

fn report_cmd(run: &mut Run, input: &Path, prototypes: Option<&Path>) -> Result<()> {
    let text = fs::read_to_string(input).map_err(|e| Error::io(input, e))?;
    let pairs = parse_matches(&text)?;
    let types = run.config.scene.classes.len();
    let counts = count_matches(&pairs, types)?;
    let actual: Vec<f64> = run.config.scene.classes.iter().map(|c| c.energy).collect();
    let columns: Vec<Vec<f64>> = match prototypes {
        Some(p) => {
            let set = PrototypeSet::load(p)?;
            (0..types)
                .map(|t| set.class(t).map(|c| c.energies()).unwrap_or_else(|_| vec![0.0; PROTOTYPES_PER_CLASS]))
                .collect()
        }
        None => (0..types)
            .map(|t| {
                run.config
                    .prototype_energies
                    .get(&t)
                    .cloned()
                    .unwrap_or_else(|| vec![0.0; PROTOTYPES_PER_CLASS])
            })
            .collect(),
    };
    let energies: Vec<Vec<f64>> = (0..PROTOTYPES_PER_CLASS)
        .map(|k| columns.iter().map(|c| c[k]).collect())
        .collect();
    let report = energy_report(&counts, &actual, &energies)?;
    run.write("report.csv", &report.to_csv())?;
    run.write("report.txt", &report.to_table())?;
    run.say(report.to_table().trim_end());
    Ok(())
}

fn reproduce_cmd(run: &mut Run) -> Result<bool> {
    let tables = ReferenceTables::bundled()?;
    let r = reproduce(&tables)?;
    run.say(r.report.to_table().trim_end());
    run.say(&format!(
        "prototype ranges: {} endpoints, max deviation {:.2e} m",
        r.range_endpoints, r.max_range_error
    ));
    run.say(&format!(
        "usages: max deviation {}; percentages: max deviation {:.4} points",
        r.max_usage_error, r.max_percent_error
    ));
    let ok = r.passes(1e-3, 0.005);
    run.say(if ok { "reference tables reproduced" } else { "MISMATCH against reference tables" });
    Ok(ok)
}

fn dispatch(run: &mut Run, command: &Command) -> Result<i32> {
    if let Command::ReproduceTables = command {
        return Ok(if reproduce_cmd(run)? { 0 } else { EXIT_MISMATCH });
    }
    let _lock = Lock::acquire(&run.out)?;
    match command {
        Command::Gen { count } => gen(run, *count)?,
        Command::Graph { input } => graph(run, input)?,
        Command::Train { input } => train_cmd(run, input)?,
        Command::Detect { input, model } => detect_cmd(run, input, model)?,
        Command::Prototypes { input } => prototypes_cmd(run, input)?,
        Command::Match { input, prototypes } => match_cmd(run, input, prototypes)?,
        Command::Report { input, prototypes } => report_cmd(run, input, prototypes.as_deref())?,
        Command::ReproduceTables => unreachable!(),
    }
    Ok(0)
}

/// Runs the command line `args` (program name first) and returns the exit code.
pub fn run_with<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() {
                let _ = write!(stderr, "{e}");
                EXIT_USAGE
            } else {
                let _ = write!(stdout, "{e}");
                0
            };
            return code;
        }
    };
    let config = match &cli.config {
        Some(p) => load_config(p),
        None => Ok(Config::default()),
    };
    let mut config = match config {
        Ok(c) => c,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            return EXIT_DATA;
        }
    };
    if let Some(seed) = cli.seed {
        config = config.with_seed(seed);
    }
    let mut run = Run {
        config,
        out: cli.out.clone(),
        stdout,
    };
    match dispatch(&mut run, &cli.command) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            EXIT_DATA
        }
    }
}

pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    run_with(args, &mut std::io::stdout(), &mut std::io::stderr())
}
