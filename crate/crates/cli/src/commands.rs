use std::path::{Path, PathBuf};
use std::time::Instant;

use tilesynth_core::geodata::{parse_geojson, synth_grid_city, to_geojson, BBox};
use tilesynth_core::metrics::evaluate;
use tilesynth_core::raster::{build_dataset, DatasetManifest, DatasetOptions, Split};
use tilesynth_core::stitch::{stitch, Region};
use tilesynth_core::xyz::list_tiles;
use tilesynth_core::TileId;
use tilesynth_nn::gan::{self, Checkpoint, CHECKPOINT_FILE};

use crate::args::{Command, EvaluateArgs, GenerateArgs, ServeArgs, StitchArgs, TrainArgs};
use crate::config::PipelineConfig;
use crate::serve::{parse_mount, serve_blocking};
use crate::CliError;

fn required(slot: &Option<PathBuf>, flag: &str) -> Result<PathBuf, CliError> {
    slot.clone().ok_or_else(|| CliError::Usage(format!("missing required path {flag}")))
}

fn existing_dir(path: &Path, what: &str) -> Result<(), CliError> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(CliError::Validation(format!("{what} {} is not a directory", path.display())))
    }
}

fn load_manifest(root: &Path) -> Result<DatasetManifest, CliError> {
    DatasetManifest::load(root).map_err(|e| CliError::Validation(e.to_string()))
}

fn split_filter(dataset: Option<&Path>, split: Option<Split>) -> Result<Option<Vec<TileId>>, CliError> {
    match (dataset, split) {
        (Some(root), Some(split)) => Ok(Some(load_manifest(root)?.split_tiles(split))),
        _ => Ok(None),
    }
}

/// Runs `f` on a pool of `jobs` threads, or the global pool when unset.
fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    match jobs {
        None => Ok(f()),
        Some(0) => Err(CliError::Usage("--jobs must be at least 1".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(n).build().map_err(|e| CliError::Runtime(e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

pub fn execute(command: &Command, cfg: &PipelineConfig, jobs: Option<usize>) -> Result<(), CliError> {
    let started = Instant::now();
    match command {
        Command::Fixture(_) => fixture(cfg)?,
        Command::Rasterize(_) => rasterize(cfg, jobs)?,
        Command::Train(a) => train(cfg, a)?,
        Command::Generate(a) => generate(cfg, a, jobs)?,
        Command::Stitch(a) => stitch_cmd(cfg, a, jobs)?,
        Command::Evaluate(a) => evaluate_cmd(cfg, a, jobs)?,
        Command::Serve(a) => serve_cmd(a)?,
    }
    log::info!("event=done secs={:.2}", started.elapsed().as_secs_f64());
    Ok(())
}

fn fixture(cfg: &PipelineConfig) -> Result<(), CliError> {
    let out = required(&cfg.paths.output, "--out")?;
    let (bx, by) = cfg.blocks;
    let city = synth_grid_city(bx, by, cfg.seed);
    let text = serde_json::to_string(&to_geojson(&city)).expect("GeoJSON serializes");
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| CliError::Runtime(format!("{}: {e}", parent.display())))?;
    }
    std::fs::write(&out, text).map_err(|e| CliError::Runtime(format!("{}: {e}", out.display())))?;
    log::info!(
        "event=fixture blocks={bx}x{by} roads={} buildings={} landuse={} out={}",
        city.roads.len(),
        city.buildings.len(),
        city.landuse.len(),
        out.display()
    );
    Ok(())
}

fn rasterize(cfg: &PipelineConfig, jobs: Option<usize>) -> Result<(), CliError> {
    let input = required(&cfg.paths.vectors, "--input")?;
    let out = required(&cfg.paths.output, "--out")?;
    let text = std::fs::read_to_string(&input).map_err(|e| CliError::Validation(format!("cannot read {}: {e}", input.display())))?;
    let layers = parse_geojson(&text).map_err(|e| CliError::Validation(format!("{}: {e}", input.display())))?;
    let opts = DatasetOptions {
        zoom: cfg.zoom,
        style: cfg.style,
        palette: cfg.palette.clone(),
        split_ratio: cfg.train.split_ratio,
        min_building_px: cfg.min_building_px,
        seed: cfg.seed,
        tile_px: cfg.tile_px,
    };
    let manifest = with_jobs(jobs, || build_dataset(&layers, &opts, &out))?.map_err(CliError::from_raster)?;
    log::info!(
        "event=rasterize tiles={} train={} test={} zoom={} style={} out={}",
        manifest.tiles.len(),
        manifest.split_tiles(Split::Train).len(),
        manifest.split_tiles(Split::Test).len(),
        manifest.zoom,
        manifest.style,
        out.display()
    );
    Ok(())
}

fn train(cfg: &PipelineConfig, args: &TrainArgs) -> Result<(), CliError> {
    let root = required(&cfg.paths.dataset, "--dataset")?;
    let out = required(&cfg.paths.output, "--out")?;
    let manifest = load_manifest(&root)?;
    let ckpt = match &args.resume {
        Some(path) => {
            let mut c = Checkpoint::load(path).map_err(CliError::from_gan)?;
            // Only the schedule may change on resume.
            c.train.epochs = cfg.train.epochs;
            c.train.checkpoint_every = cfg.train.checkpoint_every;
            gan::resume(&manifest, c, Some(&out))
        }
        None => gan::train(&manifest, &cfg.generator_config(), &cfg.discriminator_config(), &cfg.train, Some(&out)),
    }
    .map_err(CliError::from_gan)?;
    if let Some(last) = ckpt.history.last() {
        log::info!("event=train_done epoch={} g_l1={:.5} d_loss={:.5} out={}", last.epoch, last.g_l1, last.d_loss, out.display());
    }
    Ok(())
}

fn checkpoint_file(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(CHECKPOINT_FILE)
    } else {
        path.to_path_buf()
    }
}

fn generate(cfg: &PipelineConfig, args: &GenerateArgs, jobs: Option<usize>) -> Result<(), CliError> {
    let ckpt_path = checkpoint_file(&required(&cfg.paths.checkpoint, "--checkpoint")?);
    let out = required(&cfg.paths.output, "--out")?;
    let input = match (&cfg.paths.tiles, &cfg.paths.dataset) {
        (Some(dir), _) => dir.clone(),
        (None, Some(root)) => load_manifest(root)?.input_dir(),
        (None, None) => return Err(CliError::Usage("missing required path --input (or --dataset)".into())),
    };
    existing_dir(&input, "input tile tree")?;
    if !ckpt_path.is_file() {
        return Err(CliError::Validation(format!("checkpoint {} does not exist", ckpt_path.display())));
    }
    let only = split_filter(cfg.paths.dataset.as_deref(), args.split)?;
    let ckpt = Checkpoint::load(&ckpt_path).map_err(CliError::from_gan)?;
    let report = with_jobs(jobs, || gan::generate(&ckpt.generator, &input, &out, only.as_deref()))?.map_err(CliError::from_gan)?;
    if !report.errors.is_empty() {
        for (t, m) in &report.errors {
            eprintln!("tile {t}: {m}");
        }
        return Err(CliError::Runtime(format!("{} of {} tiles failed", report.errors.len(), report.errors.len() + report.written.len())));
    }
    Ok(())
}

fn stitch_cmd(cfg: &PipelineConfig, args: &StitchArgs, jobs: Option<usize>) -> Result<(), CliError> {
    let tiles = required(&cfg.paths.tiles, "--tiles")?;
    let out = required(&cfg.paths.output, "--out")?;
    existing_dir(&tiles, "tile tree")?;
    let region = match &args.bbox {
        Some(s) => Region::BBox(BBox::parse(s).ok_or_else(|| CliError::Usage(format!("bad --bbox {s:?}, expected min_lon,min_lat,max_lon,max_lat")))?),
        None => Region::Tiles(list_tiles(&tiles).into_iter().map(|(t, _)| t).filter(|t| t.z == cfg.zoom).collect()),
    };
    let result = with_jobs(jobs, || stitch(&tiles, cfg.zoom, &region))?.map_err(CliError::from_stitch)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| CliError::Runtime(format!("{}: {e}", parent.display())))?;
    }
    result.save(&out).map_err(CliError::from_stitch)?;
    let m = &result.mosaic;
    log::info!(
        "event=stitch cols={} rows={} width={} height={} missing={} out={}",
        m.cols,
        m.rows,
        m.image.width(),
        m.image.height(),
        result.missing.len(),
        out.display()
    );
    Ok(())
}

fn evaluate_cmd(cfg: &PipelineConfig, args: &EvaluateArgs, jobs: Option<usize>) -> Result<(), CliError> {
    let generated = required(&cfg.paths.generated, "--generated")?;
    let truth = match (&cfg.paths.truth, &cfg.paths.dataset) {
        (Some(dir), _) => dir.clone(),
        (None, Some(root)) => load_manifest(root)?.target_dir(),
        (None, None) => return Err(CliError::Usage("missing required path --truth (or --dataset)".into())),
    };
    existing_dir(&generated, "generated tile tree")?;
    existing_dir(&truth, "truth tile tree")?;
    let spec = cfg.extractor_spec()?;
    let only = split_filter(cfg.paths.dataset.as_deref(), args.split)?;
    let report = with_jobs(jobs, || evaluate(&generated, &truth, &spec, cfg.threshold, only.as_deref()))?.map_err(CliError::from_metrics)?;
    if let Some(dir) = &cfg.paths.output {
        report.write(dir).map_err(CliError::from_metrics)?;
    }
    print!("{}", report.summary());
    log::info!("event=evaluate fid={} miou={} extractor={}", report.fid, report.miou, report.extractor);
    Ok(())
}

fn serve_cmd(args: &ServeArgs) -> Result<(), CliError> {
    let mounts = args.layers.iter().map(|s| parse_mount(s)).collect::<Result<Vec<_>, _>>().map_err(CliError::Validation)?;
    serve_blocking(mounts, &args.bind)
}
