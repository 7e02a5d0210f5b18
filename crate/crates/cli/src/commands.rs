use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use image::GrayImage;
use rayon::prelude::*;
use rayon::ThreadPool;
use serde::Serialize;

use msrd::eval::aggregate;
use msrd::io::{read_tensor, write_tensor};
use msrd::manifest::{read_manifest, ManifestOptions};
use msrd::pipeline::{boxes_for_map, class_maps, combine, evaluate_maps, image_map, sample_final_maps};
use msrd::{BoundingBox, LocalizationMap, PipelineConfig, SampleManifest};

use crate::args::{EvalArgs, FuseArgs, LocmapArgs, RunArgs, StageArgs, SynthArgs};
use crate::error::CliError;

type Map = LocalizationMap<f64>;

/// `<dir>/<image_id>.c<class>.<tag>.msrd`
pub fn map_path(dir: &Path, image_id: &str, class: usize, tag: &str) -> PathBuf {
    dir.join(format!("{image_id}.c{class}.{tag}.msrd"))
}

fn read_map(path: &Path, tag: &str) -> msrd::Result<Map> {
    LocalizationMap::new(read_tensor(path)?.cast::<f64>()?, tag)
}

fn write_map(map: &Map, path: &Path) -> msrd::Result<()> {
    write_tensor(&map.map.cast::<f32>()?, path)
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|source| CliError::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    fs::write(path, text).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

struct Context {
    cfg: PipelineConfig,
    samples: Vec<SampleManifest>,
    pool: ThreadPool,
}

impl Context {
    fn new(run: &RunArgs) -> Result<Self, CliError> {
        let cfg = run.pipeline();
        cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        let workers = match run.workers {
            Some(0) => return Err(CliError::Usage("--workers must be at least 1".into())),
            Some(n) => n,
            None => std::thread::available_parallelism().map_or(1, |n| n.get()),
        };
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
        let samples = read_manifest(&run.manifest, ManifestOptions::default())?;
        for s in &samples {
            let sets = std::iter::once(&s.layers).chain(s.class_layers.values());
            for set in sets {
                if let Some(missing) = cfg.layers.iter().find(|l| !set.contains_key(*l)) {
                    return Err(CliError::Sample {
                        id: s.image_id.clone(),
                        source: msrd::Error::Validation(format!(
                            "layer `{missing}` not in manifest (has {:?})",
                            set.keys().collect::<Vec<_>>()
                        )),
                    });
                }
            }
        }
        Ok(Context { cfg, samples, pool })
    }

    /// Runs `f` on every sample in parallel; results keep manifest order and
    /// the first failure in that order wins.
    fn each<R, F>(&self, f: F) -> Result<Vec<R>, CliError>
    where
        R: Send,
        F: Fn(&SampleManifest) -> msrd::Result<R> + Sync,
    {
        let results: Vec<msrd::Result<R>> = self.pool.install(|| self.samples.par_iter().map(&f).collect());
        results
            .into_iter()
            .zip(&self.samples)
            .map(|(r, s)| {
                r.map_err(|source| CliError::Sample {
                    id: s.image_id.clone(),
                    source,
                })
            })
            .collect()
    }

    /// Final map per class, from stored maps or computed from the manifest.
    fn final_maps(&self, sample: &SampleManifest, maps: Option<&Path>) -> msrd::Result<BTreeMap<usize, Map>> {
        match maps {
            None => sample_final_maps::<f64>(sample, &self.cfg),
            Some(dir) => {
                let tag = self.cfg.final_tag();
                sample
                    .class_inputs()
                    .into_iter()
                    .map(|(class, _)| Ok((class, read_map(&map_path(dir, &sample.image_id, class, tag), tag)?)))
                    .collect()
            }
        }
    }
}

pub fn synth(args: &SynthArgs) -> Result<(), CliError> {
    let spec = args.spec();
    spec.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let path = msrd::synth::generate(&spec, &args.out)?;
    println!("{}", path.display());
    Ok(())
}

pub fn locmap(args: &LocmapArgs) -> Result<(), CliError> {
    let ctx = Context::new(&args.run)?;
    create_dir(&args.out)?;
    let fused = ctx.cfg.layers.len() > 1;
    let counts = ctx.each(|s| {
        let mut n = 0;
        for (class, files) in s.class_inputs() {
            let maps = class_maps::<f64>(files, &ctx.cfg)?;
            for m in &maps.per_layer {
                write_map(m, &map_path(&args.out, &s.image_id, class, &m.scale_tag))?;
                n += 1;
            }
            if fused {
                write_map(&maps.final_map, &map_path(&args.out, &s.image_id, class, "fused"))?;
                n += 1;
            }
        }
        Ok(n)
    })?;
    println!("wrote {} maps to {}", counts.iter().sum::<usize>(), args.out.display());
    Ok(())
}

pub fn fuse(args: &FuseArgs) -> Result<(), CliError> {
    let ctx = Context::new(&args.run)?;
    create_dir(&args.out)?;
    let tag = ctx.cfg.final_tag();
    let counts = ctx.each(|s| {
        let mut n = 0;
        for (class, _) in s.class_inputs() {
            let layers = ctx
                .cfg
                .layers
                .iter()
                .map(|l| read_map(&map_path(&args.maps, &s.image_id, class, l), l))
                .collect::<msrd::Result<Vec<_>>>()?;
            let fused = combine(&layers, ctx.cfg.fuse_mode)?;
            write_map(&fused, &map_path(&args.out, &s.image_id, class, tag))?;
            n += 1;
        }
        Ok(n)
    })?;
    println!("wrote {} maps to {}", counts.iter().sum::<usize>(), args.out.display());
    Ok(())
}

#[derive(Serialize)]
struct BoxRecord {
    image_id: String,
    class: usize,
    boxes: Vec<BoundingBox>,
}

pub fn boxes(args: &StageArgs) -> Result<(), CliError> {
    let ctx = Context::new(&args.run)?;
    let per_sample = ctx.each(|s| {
        let finals = ctx.final_maps(s, args.maps.as_deref())?;
        // target class first, as in the manifest's class order
        s.class_inputs()
            .into_iter()
            .map(|(class, _)| {
                let boxes = boxes_for_map(&finals[&class], &ctx.cfg.segmentation, s.image_width, s.image_height)?;
                Ok(BoxRecord {
                    image_id: s.image_id.clone(),
                    class,
                    boxes,
                })
            })
            .collect::<msrd::Result<Vec<_>>>()
    })?;
    let records: Vec<BoxRecord> = per_sample.into_iter().flatten().collect();
    let mut text = serde_json::to_string_pretty(&records).map_err(msrd::Error::from)?;
    text.push('\n');
    write_text(&args.out, &text)?;
    println!("wrote boxes for {} image/class pairs to {}", records.len(), args.out.display());
    Ok(())
}

pub fn eval(args: &EvalArgs) -> Result<(), CliError> {
    let ctx = Context::new(&args.run)?;
    let records = ctx.each(|s| {
        if s.predicted_classes.is_empty() {
            log::warn!("{}: no predictions, skipped", s.image_id);
            return Ok(None);
        }
        let finals = ctx.final_maps(s, args.maps.as_deref())?;
        evaluate_maps(s, &finals, &ctx.cfg).map(Some)
    })?;
    let skipped = records.iter().filter(|r| r.is_none()).count();
    let records: Vec<_> = records.into_iter().flatten().collect();
    let summary = aggregate(&records, ctx.cfg.meta(), skipped)?;
    let table = summary.to_table();
    match &args.out {
        Some(path) => {
            write_text(path, &summary.to_json())?;
            print!("{table}");
        }
        None => print!("{}", summary.to_json()),
    }
    if let Some(path) = &args.table {
        write_text(path, &table)?;
    }
    Ok(())
}

/// Normalized map as 8-bit gray, 0 → black, map maximum → 255.
pub fn to_gray(map: &Map) -> GrayImage {
    let (h, w) = map.hw();
    let pixels = map
        .map
        .data()
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    GrayImage::from_raw(w as u32, h as u32, pixels).expect("buffer matches map size")
}

pub fn heatmap(args: &StageArgs) -> Result<(), CliError> {
    let ctx = Context::new(&args.run)?;
    create_dir(&args.out)?;
    let counts = ctx.each(|s| {
        let finals = ctx.final_maps(s, args.maps.as_deref())?;
        let mut n = 0;
        for (class, m) in &finals {
            let img = to_gray(&image_map(m, s.image_width, s.image_height)?);
            let path = args.out.join(format!("{}.c{class}.png", s.image_id));
            img.save(&path).map_err(|e| msrd::Error::Validation(format!("{}: {e}", path.display())))?;
            n += 1;
        }
        Ok(n)
    })?;
    println!("wrote {} heatmaps to {}", counts.iter().sum::<usize>(), args.out.display());
    Ok(())
}
