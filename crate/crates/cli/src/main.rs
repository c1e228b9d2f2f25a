use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use haptic_ppf::explore::{build_predictions, Policy};
use haptic_ppf::features::{dump_table_csv, load_tables, save_tables, train, Method};
use haptic_ppf::grasp::{build_pose_grid, load_contacts, save_contacts, PoseGrid};
use haptic_ppf::harness::report::{
    emit_plots, read_records_csv, summary_csv, traces_csv, write_outputs,
};
use haptic_ppf::harness::{
    records_from_trace, run_experiment, run_trace, summarize, ExperimentConfig, MethodModel,
    Trained, TrialSpec,
};
use haptic_ppf::mesh::{load_ply_scaled, write_ply, PlyEncoding, TriangleMesh};
use haptic_ppf::recognizer::Weighting;
use haptic_ppf::{fixtures, Error, Result};

/// Haptic object identification with point pair features.
#[derive(Parser)]
#[command(name = "haptic-ppf", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Grasp objects on the pose grid, write contact files and hash tables.
    Train(TrainArgs),
    /// Run one identification trial against a trained model.
    Identify(IdentifyArgs),
    /// Run the full experiment sweep and write CSV and SVG results.
    Experiment(ExperimentArgs),
    /// Print one object's hash table as CSV.
    DumpTable(DumpArgs),
    /// Redraw the figures from a records CSV.
    Plot(PlotArgs),
    /// Write the bundled fixture meshes as PLY files.
    ExportFixtures(ExportArgs),
}

/// Settings shared by commands that read an experiment config.
#[derive(Args)]
struct ConfigArgs {
    /// TOML config file; flags below override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated fixture names.
    #[arg(long, value_delimiter = ',')]
    objects: Option<Vec<String>>,
    #[arg(long)]
    poses: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    weighting: Option<Weighting>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(o) = &self.objects {
            cfg.objects = o.clone();
        }
        if let Some(p) = self.poses {
            cfg.poses = p;
        }
        if let Some(s) = self.samples {
            cfg.samples = s;
        }
        if let Some(w) = self.weighting {
            cfg.weighting = w;
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Noise seed for the training samples.
    #[arg(long)]
    seed: Option<u64>,
    /// Extra object from a PLY file, as NAME=PATH (repeatable).
    #[arg(long = "mesh", value_name = "NAME=PATH")]
    meshes: Vec<String>,
    /// Multiplier taking PLY units to millimetres.
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct IdentifyArgs {
    /// Directory written by `train`.
    #[arg(long)]
    model: PathBuf,
    /// True object (must be one of the trained objects).
    #[arg(long)]
    object: String,
    /// Contact file to grasp instead of the trained one for that object.
    #[arg(long)]
    contacts: Option<PathBuf>,
    #[arg(long, default_value = "PN")]
    method: Method,
    #[arg(long, default_value = "passive")]
    policy: Policy,
    #[arg(long, default_value_t = 0.99)]
    beta: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    trial: usize,
    /// Write the per-grasp trace here.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    trials: Option<usize>,
    /// Worker threads (results do not depend on it).
    #[arg(long)]
    workers: Option<usize>,
    /// Skip writing traces.csv.
    #[arg(long)]
    no_traces: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DumpArgs {
    /// Table file written by `train`.
    #[arg(long)]
    tables: PathBuf,
    #[arg(long)]
    object: String,
    /// Write here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PlotArgs {
    /// records.csv written by `experiment`.
    #[arg(long)]
    records: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    out: PathBuf,
    /// Write binary instead of ASCII PLY.
    #[arg(long)]
    binary: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Identify(a) => cmd_identify(a),
        Command::Experiment(a) => cmd_experiment(a),
        Command::DumpTable(a) => cmd_dump(a),
        Command::Plot(a) => cmd_plot(a),
        Command::ExportFixtures(a) => cmd_export(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}: {e}", e.kind());
            ExitCode::FAILURE
        }
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn tables_path(dir: &Path, method: Method) -> PathBuf {
    dir.join(format!("tables-{}.bin", method.tag()))
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let mut cfg = a.config.load()?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    let mut meshes: Vec<(String, TriangleMesh)> = Vec::new();
    for name in &cfg.objects {
        meshes.push((name.clone(), fixtures::load(name)?));
    }
    for spec in &a.meshes {
        let (name, path) = spec.split_once('=').ok_or_else(|| {
            Error::InvalidConfig(format!("--mesh expects NAME=PATH, got `{spec}`"))
        })?;
        meshes.push((name.to_string(), load_ply_scaled(path, a.scale)?));
    }
    cfg.objects = meshes.iter().map(|m| m.0.clone()).collect();
    cfg.validate()?;
    let contacts = a.out.join("contacts");
    create_dir(&contacts)?;
    let mut grids = Vec::new();
    for (name, mesh) in &meshes {
        let grid = build_pose_grid(name, mesh, cfg.poses, &cfg.hand)?;
        save_contacts(&grid, contacts.join(format!("{name}.contacts")))?;
        println!(
            "{name}: {} of {} poses graspable",
            grid.valid_count(),
            grid.poses()
        );
        grids.push(grid);
    }
    for &method in &cfg.methods {
        let set = train(&grids, &cfg.training_options(), method)?;
        let path = tables_path(&a.out, method);
        save_tables(set.tables(), &path)?;
        println!("{method}: wrote {}", path.display());
    }
    write(&a.out.join("config.toml"), cfg.to_toml())
}

fn load_model(dir: &Path) -> Result<(ExperimentConfig, Trained)> {
    let cfg = ExperimentConfig::load(&dir.join("config.toml"))?;
    let mut grids = Vec::new();
    for name in &cfg.objects {
        grids.push(load_contacts(
            dir.join("contacts").join(format!("{name}.contacts")),
        )?);
    }
    grids.sort_by(|a, b| a.object.cmp(&b.object));
    let mut models = BTreeMap::new();
    for &method in &cfg.methods {
        let tables = load_tables(tables_path(dir, method), Some((method, cfg.quantizer())))?;
        let predictions = build_predictions(&tables, cfg.weighting, cfg.smoothing)?;
        models.insert(
            method,
            MethodModel {
                tables,
                predictions,
            },
        );
    }
    Ok((cfg, Trained { grids, models }))
}

fn cmd_identify(a: IdentifyArgs) -> Result<()> {
    let (mut cfg, mut trained) = load_model(&a.model)?;
    cfg.seed = a.seed;
    let names = trained.names();
    let object = names
        .iter()
        .position(|n| *n == a.object)
        .ok_or_else(|| Error::InvalidConfig(format!("`{}` is not a trained object", a.object)))?;
    if let Some(path) = &a.contacts {
        let grid: PoseGrid = load_contacts(path)?;
        if grid.poses() != cfg.poses {
            return Err(Error::InvalidConfig(format!(
                "contact file has {} poses, model has {}",
                grid.poses(),
                cfg.poses
            )));
        }
        trained.grids[object] = grid;
    }
    let spec = TrialSpec {
        object,
        method: a.method,
        policy: a.policy,
        trial: a.trial,
    };
    let trace = run_trace(spec, &trained, &cfg, a.beta)?;
    let record = records_from_trace(&trace, &names, &[a.beta], cfg.cap).remove(0);
    for row in &trace.rows {
        let (best, p) =
            row.posterior
                .iter()
                .enumerate()
                .fold(
                    (0, f64::NEG_INFINITY),
                    |acc, (i, &p)| if p > acc.1 { (i, p) } else { acc },
                );
        println!(
            "grasp {:>3}  pose {:>3}  leading {} ({p:.4})",
            row.grasp, row.pose, names[best]
        );
    }
    match &record.decided {
        Some(d) => println!(
            "decided {d} after {} grasps ({})",
            record.grasps,
            if record.correct { "correct" } else { "wrong" }
        ),
        None => println!("undecided after {} grasps", record.grasps),
    }
    if let Some(path) = &a.trace {
        write(path, traces_csv(&[trace], &names))?;
    }
    Ok(())
}

fn cmd_experiment(a: ExperimentArgs) -> Result<()> {
    let mut cfg = a.config.load()?;
    cfg.seed = a.seed;
    if let Some(t) = a.trials {
        cfg.trials = t;
    }
    if a.no_traces {
        cfg.record_traces = false;
    }
    cfg.validate()?;
    let output = run_experiment(&cfg, a.workers)?;
    create_dir(&a.out)?;
    write(&a.out.join("config.toml"), cfg.to_toml())?;
    for path in write_outputs(&output, &a.out)? {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_dump(a: DumpArgs) -> Result<()> {
    let set = load_tables(&a.tables, None)?;
    let i = set
        .index_of(&a.object)
        .ok_or_else(|| Error::InvalidConfig(format!("no table for `{}`", a.object)))?;
    let csv = dump_table_csv(&set.tables()[i]);
    match &a.out {
        Some(p) => write(p, csv),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

fn cmd_plot(a: PlotArgs) -> Result<()> {
    let text = fs::read_to_string(&a.records).map_err(|e| Error::io(&a.records, e))?;
    let records = read_records_csv(&text)?;
    let summaries = summarize(&records)?;
    create_dir(&a.out)?;
    write(&a.out.join("summary.csv"), summary_csv(&summaries))?;
    for path in emit_plots(&summaries, &records, &a.out)? {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_export(a: ExportArgs) -> Result<()> {
    create_dir(&a.out)?;
    let encoding = if a.binary {
        PlyEncoding::BinaryLittleEndian
    } else {
        PlyEncoding::Ascii
    };
    for info in fixtures::ALL {
        let mesh = fixtures::generate(info.name)?;
        let path = a.out.join(format!("{}.ply", info.name));
        let mut bytes = Vec::new();
        write_ply(&mesh, encoding, &fixtures::ply_comments(&info), &mut bytes)
            .map_err(|e| Error::io(&path, e))?;
        write(&path, bytes)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
