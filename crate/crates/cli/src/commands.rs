use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use ttta_core::baseline::{sweep_c, SweepTable, DEFAULT_SWEEP};
use ttta_core::metrics::{aggregate, auroc, prf1_image, ImageRecord};
use ttta_core::par::Execution;
use ttta_core::pipeline::{segment_sample, SampleInputs, DIAGNOSTICS_HEADER};
use ttta_core::preproc::upsample_bilinear;
use ttta_core::scorer::{build_bank, image_score, score_map_with, validation_stats, BankConfig};
use ttta_core::synth::{generate_split, load_dataset, run_experiment};
use ttta_core::tensor::{read_mask, read_score_map, write_manifest, write_mask, write_score_map, SampleRecord};
use ttta_core::{MaskImage, MemoryBank, Method, PixelStats, ScoreMap};

use crate::batch::{self, create_dir, for_each_sample, sample_path, summarize, usage, write_text, Dataset, Header};
use crate::{BankArgs, BaselineArgs, EvalArgs, Mode, Root, ScoreArgs, SegmentArgs, StatsArgs, SynthGenArgs, SynthRunArgs};

const MEAN_FILE: &str = "mean.ttta";
const STD_FILE: &str = "std.ttta";

fn load_stats(dir: &Path) -> Result<PixelStats> {
    let read = |name: &str| {
        let p = dir.join(name);
        read_score_map(&p).with_context(|| format!("reading {}", p.display()))
    };
    let stats = PixelStats {
        mean: read(MEAN_FILE)?,
        std: read(STD_FILE)?,
    };
    if stats.mean.size() != stats.std.size() {
        bail!("mean and std maps in {} differ in size", dir.display());
    }
    Ok(stats)
}

fn load_bank(dir: &Path, stem: &str) -> Result<MemoryBank> {
    MemoryBank::load(dir, stem).with_context(|| format!("loading bank {stem} from {}", dir.display()))
}

pub fn stats(root: &Root, mut header: Header, args: &StatsArgs) -> Result<usize> {
    let manifest = root.join(&args.manifest);
    let out = root.join(&args.out);
    let bank_dir = args.bank.as_ref().map(|b| root.join(b));
    header
        .set("manifest", manifest.display())
        .set("out", out.display())
        .set("bank", bank_dir.as_ref().map_or("-".into(), |b| b.display().to_string()))
        .set("bank_stem", &args.bank_stem);
    header.print();
    let data = Dataset::open(&manifest)?;
    let bank = bank_dir.as_ref().map(|d| load_bank(d, &args.bank_stem)).transpose()?;
    let outcome = for_each_sample(&data.records, |r| {
        if r.score_path.is_some() {
            return data.scores(r);
        }
        let bank = bank
            .as_ref()
            .ok_or_else(|| anyhow!("no score map listed and no --bank given"))?;
        let features = data.features(r, None)?;
        Ok(score_map_with(bank, &features, Execution::Sequential)?)
    });
    let maps: Vec<ScoreMap> = outcome.done.into_iter().map(|(_, s)| s).collect();
    let stats = validation_stats(&maps).context("computing validation statistics")?;
    create_dir(&out)?;
    write_score_map(&stats.mean, out.join(MEAN_FILE))?;
    write_score_map(&stats.std, out.join(STD_FILE))?;
    Ok(summarize(data.records.len(), outcome.failed))
}

pub fn bank(root: &Root, mut header: Header, args: &BankArgs) -> Result<usize> {
    let manifest = root.join(&args.manifest);
    let out = root.join(&args.out);
    if !(args.coreset_ratio > 0.0 && args.coreset_ratio <= 1.0) {
        return Err(usage(format!("--coreset-ratio must be in (0, 1], got {}", args.coreset_ratio)));
    }
    if !(args.projection_scale > 0.0 && args.projection_scale.is_finite()) {
        return Err(usage(format!("--projection-scale must be positive, got {}", args.projection_scale)));
    }
    header
        .set("manifest", manifest.display())
        .set("out", out.display())
        .set("stem", &args.stem)
        .set("coreset_ratio", args.coreset_ratio)
        .set("projection_scale", args.projection_scale)
        .set("seed", args.seed);
    header.print();
    let data = Dataset::open(&manifest)?;
    let outcome = for_each_sample(&data.records, |r| data.features(r, None));
    let ids: Vec<String> = outcome
        .done
        .iter()
        .map(|(i, _)| data.records[*i].sample_id.clone())
        .collect();
    let maps: Vec<_> = outcome.done.into_iter().map(|(_, f)| f).collect();
    let config = BankConfig {
        coreset_ratio: args.coreset_ratio,
        projection_scale: args.projection_scale,
        seed: args.seed,
    };
    let bank = build_bank(&maps, &config, ids).context("building memory bank")?;
    create_dir(&out)?;
    bank.save(&out, &args.stem)?;
    println!("bank_entries\t{}", bank.len());
    Ok(summarize(data.records.len(), outcome.failed))
}

/// `path` (resolved through `data`) expressed relative to `base`.
fn relative_to(data: &Dataset, path: &str, base: &Path) -> Result<String> {
    let full = data.resolve(path);
    let full = full.canonicalize().or_else(|_| std::path::absolute(&full))?;
    let base = base.canonicalize()?;
    let rel = pathdiff::diff_paths(&full, &base).ok_or_else(|| anyhow!("cannot relate {path} to the output"))?;
    rel.to_str()
        .map(str::to_string)
        .ok_or_else(|| anyhow!("non UTF-8 path {}", rel.display()))
}

pub fn score(root: &Root, mut header: Header, args: &ScoreArgs) -> Result<usize> {
    let manifest = root.join(&args.manifest);
    let bank_dir = root.join(&args.bank);
    let out = root.join(&args.out);
    header
        .set("manifest", manifest.display())
        .set("bank", bank_dir.display())
        .set("bank_stem", &args.bank_stem)
        .set("out", out.display())
        .set("out_size", batch::show_size(args.out_size));
    header.print();
    let data = Dataset::open(&manifest)?;
    let bank = load_bank(&bank_dir, &args.bank_stem)?;
    create_dir(&out)?;
    let outcome = for_each_sample(&data.records, |r| {
        let features = data.features(r, None)?;
        let mut s = score_map_with(&bank, &features, Execution::Sequential)?;
        if let Some((h, w)) = args.out_size {
            s = upsample_bilinear(&s.to_feature_map(), h, w)
                .map(|f| ScoreMap::new(h, w, f.into_values()))??;
        }
        let name = format!("{}.score.ttta", r.sample_id);
        write_score_map(&s, sample_path(&out, &r.sample_id, ".score.ttta")?)?;
        let rebase = |p: &String| relative_to(&data, p, &out);
        Ok(SampleRecord {
            sample_id: r.sample_id.clone(),
            score_path: Some(name),
            feature_paths: r.feature_paths.iter().map(rebase).collect::<Result<_>>()?,
            point_map_path: r.point_map_path.as_ref().map(rebase).transpose()?,
            ground_truth_mask_path: r.ground_truth_mask_path.as_ref().map(rebase).transpose()?,
        })
    });
    let records: Vec<SampleRecord> = outcome.done.into_iter().map(|(_, r)| r).collect();
    write_manifest(&records, out.join("manifest.tsv"))?;
    Ok(summarize(data.records.len(), outcome.failed))
}

/// Masks for `method` on every record, written under `out`. Returns the
/// diagnostics rows and the failure count.
fn write_masks(
    data: &Dataset,
    method: Method,
    stats: Option<&PixelStats>,
    config: &ttta_core::SegmentConfig,
    ransac: &ttta_core::preproc::RansacConfig,
    out: &Path,
) -> Result<(Vec<String>, usize)> {
    create_dir(out)?;
    let outcome = for_each_sample(&data.records, |r| {
        let scores = data.scores(r)?;
        let features = if method.needs_features() {
            Some(data.features(r, Some(scores.size()))?)
        } else {
            None
        };
        let exclude = data.exclusion(r, ransac, scores.size())?;
        let inputs = SampleInputs {
            scores: &scores,
            features: features.as_ref(),
            exclude: exclude.as_ref(),
        };
        let result = segment_sample(method, &inputs, stats, config)?;
        write_mask(&result.mask, sample_path(out, &r.sample_id, ".pgm")?)?;
        Ok(result.diagnostics.map(|d| d.tsv_row(&r.sample_id)))
    });
    let rows = outcome.done.into_iter().filter_map(|(_, d)| d).collect();
    Ok((rows, outcome.failed))
}

pub fn segment(root: &Root, mut header: Header, args: &SegmentArgs) -> Result<usize> {
    let manifest = root.join(&args.manifest);
    let out = root.join(&args.out);
    let config = args.classifier.config()?;
    let method = match (args.mode, args.ablation_score_input) {
        (Mode::Thr, _) => Method::Threshold { c: args.c },
        (Mode::Ttt4as, false) => Method::Ttt4as,
        (Mode::Ttt4as, true) | (Mode::Ablation, _) => Method::ScoreAblation,
    };
    let stats_dir = match (args.mode, &args.stats_dir) {
        (Mode::Thr, None) => return Err(usage("--mode thr needs --stats-dir")),
        (_, dir) => dir.as_ref().map(|d| root.join(d)),
    };
    header
        .set("manifest", manifest.display())
        .set("out", out.display())
        .set("method", method);
    if let Some(dir) = &stats_dir {
        header.set("stats_dir", dir.display());
    }
    if method.needs_stats() {
        header.set("c", args.c).set("seed", args.classifier.seed);
    } else {
        args.classifier.describe(&mut header);
    }
    args.ransac.describe(&mut header);
    header.print();
    let data = Dataset::open(&manifest)?;
    let stats = if method.needs_stats() {
        stats_dir.as_deref().map(load_stats).transpose()?
    } else {
        None
    };
    let (rows, failed) = write_masks(&data, method, stats.as_ref(), &config, &args.ransac.config(args.classifier.seed), &out)?;
    if !method.needs_stats() {
        let mut text = format!("{DIAGNOSTICS_HEADER}\n");
        for row in rows {
            text.push_str(&row);
            text.push('\n');
        }
        write_text(&out.join("diagnostics.tsv"), &text)?;
    }
    Ok(summarize(data.records.len(), failed))
}

fn sweep_tsv(table: &SweepTable) -> String {
    let mut text = String::from("c\tprecision\trecall\tf1\timages\tpredicted_anomalous\n");
    for row in &table.rows {
        let m = &row.metrics;
        let _ = writeln!(
            text,
            "{}\t{:.6}\t{:.6}\t{:.6}\t{}\t{}",
            row.c, m.precision, m.recall, m.f1, m.images, row.predicted_anomalous
        );
    }
    let _ = writeln!(text, "selected\t{}", table.best_c());
    text
}

pub fn baseline(root: &Root, mut header: Header, args: &BaselineArgs) -> Result<usize> {
    let manifest = root.join(&args.manifest);
    let out = root.join(&args.out);
    let stats_dir = root.join(&args.stats_dir);
    if let Some(cs) = &args.sweep {
        if cs.is_empty() || cs.iter().any(|c| !c.is_finite()) {
            return Err(usage("--sweep needs finite multipliers"));
        }
    }
    let data = Dataset::open(&manifest)?;
    let stats = load_stats(&stats_dir)?;
    let mut sweep_failed = 0;
    let (c, sweep_text) = match &args.sweep {
        None => (args.c, None),
        Some(cs) => {
            let outcome = for_each_sample(&data.records, |r| {
                let p = r
                    .ground_truth_mask_path
                    .as_deref()
                    .ok_or_else(|| anyhow!("no ground truth listed"))?;
                let gt = read_mask(data.resolve(p)).with_context(|| format!("reading {p}"))?;
                Ok((data.scores(r)?, gt))
            });
            sweep_failed = outcome.failed;
            let (scores, gts): (Vec<_>, Vec<_>) = outcome.done.into_iter().map(|(_, v)| v).unzip();
            let table = sweep_c(&scores, &stats, &gts, cs).context("sweeping c")?;
            (table.best_c(), Some(sweep_tsv(&table)))
        }
    };
    header
        .set("manifest", manifest.display())
        .set("out", out.display())
        .set("stats_dir", stats_dir.display())
        .set(
            "sweep",
            args.sweep.as_ref().map_or("-".into(), |cs| {
                cs.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
            }),
        )
        .set("c", c)
        .set("seed", args.seed);
    args.ransac.describe(&mut header);
    header.print();
    let method = Method::Threshold { c };
    let (_, failed) = write_masks(&data, method, Some(&stats), &Default::default(), &args.ransac.config(args.seed), &out)?;
    if let Some(text) = sweep_text {
        write_text(&out.join("sweep.tsv"), &text)?;
    }
    Ok(summarize(data.records.len(), failed.max(sweep_failed)))
}

struct EvalSample {
    record: Option<ImageRecord>,
    /// Scores and labels of non-excluded pixels, when a score map exists.
    pixels: Option<(Vec<f64>, Vec<bool>)>,
    image: Option<(f64, bool)>,
}

pub fn eval(root: &Root, mut header: Header, args: &EvalArgs) -> Result<usize> {
    let manifest = root.join(&args.manifest);
    let masks = root.join(&args.masks);
    let out = root.join(&args.out);
    header
        .set("manifest", manifest.display())
        .set("masks", masks.display())
        .set("out", out.display())
        .set("seed", args.seed);
    args.ransac.describe(&mut header);
    header.print();
    let data = Dataset::open(&manifest)?;
    if data.records.iter().all(|r| r.ground_truth_mask_path.is_none()) {
        bail!("no sample in {} lists a ground-truth mask", manifest.display());
    }
    let ransac = args.ransac.config(args.seed);
    let outcome = for_each_sample(&data.records, |r| {
        let Some(gt_path) = r.ground_truth_mask_path.as_deref() else {
            return Ok(EvalSample {
                record: None,
                pixels: None,
                image: None,
            });
        };
        let gt = read_mask(data.resolve(gt_path)).with_context(|| format!("reading {gt_path}"))?;
        let exclude = data.exclusion(r, &ransac, gt.size())?;
        // images whose defect lies entirely in the background count as nominal
        let visible = (0..gt.height() * gt.width())
            .any(|i| gt.is_on_flat(i) && !exclude.as_ref().is_some_and(|m| m.is_on_flat(i)));
        let record = if visible {
            let mask_path = masks.join(format!("{}.pgm", r.sample_id));
            let mask = read_mask(&mask_path).with_context(|| format!("reading {}", mask_path.display()))?;
            let m = prf1_image(&mask, &gt, exclude.as_ref())?;
            Some(ImageRecord::new(r.sample_id.clone(), r.class_name(), m))
        } else {
            None
        };
        let (pixels, image) = if r.score_path.is_some() {
            let s = data.scores(r)?;
            if s.size() != gt.size() {
                bail!("score map and ground truth differ in size");
            }
            let keep = |i: usize| !exclude.as_ref().is_some_and(|m: &MaskImage| m.is_on_flat(i));
            let idx: Vec<usize> = (0..s.len()).filter(|&i| keep(i)).collect();
            let scores = idx.iter().map(|&i| s.values()[i] as f64).collect();
            let labels = idx.iter().map(|&i| gt.is_on_flat(i)).collect();
            (Some((scores, labels)), Some((image_score(&s) as f64, gt.any_on())))
        } else {
            (None, None)
        };
        Ok(EvalSample { record, pixels, image })
    });

    let mut records = Vec::new();
    let (mut ps, mut pl, mut is, mut il) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (_, sample) in outcome.done {
        records.extend(sample.record);
        if let Some((s, l)) = sample.pixels {
            ps.extend(s);
            pl.extend(l);
        }
        if let Some((s, l)) = sample.image {
            is.push(s);
            il.push(l);
        }
    }
    let mut report = aggregate(&records).context("no anomalous sample could be evaluated")?;
    report.p_auroc = auroc(&ps, &pl).ok();
    report.i_auroc = auroc(&is, &il).ok();
    create_dir(&out)?;
    write_text(&out.join("report.tsv"), &report.to_tsv())?;
    write_text(&out.join("per_image.tsv"), &report.images_tsv())?;
    print!("{}", report.to_tsv());
    Ok(summarize(data.records.len(), outcome.failed))
}

pub fn synth_gen(root: &Root, mut header: Header, args: &SynthGenArgs) -> Result<usize> {
    let out = root.join(&args.out);
    let config = args.knobs.config();
    if config.height == 0 || config.width == 0 || config.channels == 0 {
        return Err(usage("scene dimensions must be positive"));
    }
    if config.min_blobs > config.max_blobs || config.min_radius > config.max_radius {
        return Err(usage("blob count and radius ranges must be ordered"));
    }
    if !(config.gain_range.0 > 0.0 && config.gain_range.0 <= config.gain_range.1) {
        return Err(usage("gain range must be positive and ordered"));
    }
    if args.n_val == 0 || args.n_test == 0 {
        return Err(usage("--n-val and --n-test must be positive"));
    }
    header
        .set("out", out.display())
        .set("n_val", args.n_val)
        .set("n_test", args.n_test)
        .set("seed", args.seed);
    header
        .set("size", format!("{}x{}x{}", config.height, config.width, config.channels))
        .set("feature_noise", config.feature_noise)
        .set("base_scale", config.base_scale)
        .set("anomaly_shift", config.anomaly_shift)
        .set("blobs", format!("{}..={}", config.min_blobs, config.max_blobs))
        .set("radius", format!("{}..={}", config.min_radius, config.max_radius))
        .set("score_blur", config.score_blur)
        .set("score_amplitude", config.score_amplitude)
        .set("score_noise", config.score_noise)
        .set("gain", match config.fixed_gain {
            Some(g) => format!("fixed {g}"),
            None => format!("{}..{}", config.gain_range.0, config.gain_range.1),
        });
    header.print();
    generate_split(&out, args.n_val, args.n_test, &config, args.seed, Execution::Parallel)?;
    Ok(0)
}

pub fn synth_run(root: &Root, mut header: Header, args: &SynthRunArgs) -> Result<usize> {
    let data_dir = root.join(&args.data);
    let out = root.join(&args.out);
    let config = args.classifier.config()?;
    if args.methods.is_empty() {
        return Err(usage("--methods needs at least one method"));
    }
    header
        .set("data", data_dir.display())
        .set("out", out.display())
        .set(
            "methods",
            args.methods.iter().map(Method::to_string).collect::<Vec<_>>().join(","),
        );
    args.classifier.describe(&mut header);
    header.print();
    let data = load_dataset(&data_dir).with_context(|| format!("loading {}", data_dir.display()))?;
    let report = run_experiment(&data, &args.methods, &config, Execution::Parallel)?;
    create_dir(&out)?;
    write_text(&out.join("comparison.tsv"), &report.to_tsv())?;
    for m in &report.methods {
        let dir: PathBuf = out.join(m.method.to_string());
        create_dir(&dir)?;
        write_text(&dir.join("per_image.tsv"), &m.report.images_tsv())?;
        for (i, mask) in m.masks.iter().enumerate() {
            write_mask(mask, dir.join(format!("test_{i:04}.pgm")))?;
        }
    }
    let val: Vec<ScoreMap> = data.validation.iter().map(|s| s.scores.clone()).collect();
    let stats = validation_stats(&val)?;
    let scores: Vec<ScoreMap> = data.test.iter().map(|s| s.scores.clone()).collect();
    let gts: Vec<MaskImage> = data.test.iter().map(|s| s.gt.clone()).collect();
    let table = sweep_c(&scores, &stats, &gts, &DEFAULT_SWEEP)?;
    write_text(&out.join("sweep.tsv"), &sweep_tsv(&table))?;
    print!("{}", report.to_tsv());
    Ok(0)
}
