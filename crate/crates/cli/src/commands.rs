use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rl2_core::degrade::{DegradeKind, DegradeSpec, NoiseSchedule};
use rl2_core::features::{save_features, DEFAULT_EXTRACTOR_SEED};
use rl2_core::harness::{
    monotonicity_sweep, roc_auc, roc_csv, stability_csv, stability_curve, sweep_csv, sweep_summary,
};
use rl2_core::image::{list_image_files, load_dir};
use rl2_core::metrics::{fid, gaussian_summary, per_sample_nll, rl2};
use rl2_core::synth::{texture, SynthConfig};
use rl2_core::train::train;
use rl2_core::{seed, BuiltinExtractor, FlowArch, FlowModel, MetricValue, TrainConfig};

use crate::config::Config;
use crate::io::{create_dir, file_name, load_source, read_labels, write_atomic};
use crate::{
    Cli, CliError, Command, DegradeArgs, EvalArgs, ExtractArgs, FilterArgs, MetricChoice,
    StabilityArgs, SweepArgs, SynthArgs, TrainArgs,
};

const DEFAULT_SEED: u64 = 42;

/// Shared state of one invocation.
struct Ctx {
    config: Config,
    root_seed: u64,
    extractor: BuiltinExtractor,
}

impl Ctx {
    fn seed_for(&self, subsystem: &str) -> u64 {
        seed::derive(self.root_seed, subsystem)
    }

    fn required_path(&self, flag: Option<PathBuf>, key: &str) -> Result<PathBuf, CliError> {
        self.config
            .path(flag, key)
            .ok_or_else(|| CliError::Usage(format!("--{} is required", key.replace('_', "-"))))
    }

    fn out_dir(&self, flag: Option<PathBuf>) -> Result<Option<PathBuf>, CliError> {
        let out = self.config.path(flag, "out");
        if let Some(dir) = &out {
            create_dir(dir)?;
        }
        Ok(out)
    }

    fn checkpoint(&self, flag: Option<PathBuf>) -> Result<FlowModel, CliError> {
        Ok(FlowModel::load(self.required_path(flag, "checkpoint")?)?)
    }

    fn schedule(
        &self,
        steps: Option<usize>,
        start: Option<f64>,
        end: Option<f64>,
    ) -> Result<NoiseSchedule, CliError> {
        let steps = self.config.value(steps, "diffusion_steps")?.unwrap_or(1000);
        let start = self.config.value(start, "beta_start")?.unwrap_or(1e-4);
        let end = self.config.value(end, "beta_end")?.unwrap_or(0.02);
        Ok(NoiseSchedule::linear(steps, start, end)?)
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let config = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    let root_seed = config.value(cli.seed, "seed")?.unwrap_or(DEFAULT_SEED);
    let extractor_seed = config
        .value(cli.extractor_seed, "extractor_seed")?
        .unwrap_or(DEFAULT_EXTRACTOR_SEED);
    let ctx = Ctx {
        config,
        root_seed,
        extractor: BuiltinExtractor::new(extractor_seed),
    };
    match cli.command {
        Command::Synth(args) => synth(&ctx, args),
        Command::Extract(args) => extract(&ctx, args),
        Command::Train(args) => train_cmd(&ctx, args),
        Command::Eval(args) => eval(&ctx, args),
        Command::Degrade(args) => degrade(&ctx, args),
        Command::Filter(args) => filter(&ctx, args),
        Command::Stability(args) => stability(&ctx, args),
        Command::Sweep(args) => sweep(&ctx, args),
    }
}

fn synth(ctx: &Ctx, args: SynthArgs) -> Result<(), CliError> {
    let out = ctx
        .out_dir(args.out)?
        .ok_or_else(|| CliError::Usage("--out is required".into()))?;
    let count = ctx.config.value(args.count, "count")?.unwrap_or(100);
    let defaults = SynthConfig::default();
    let config = SynthConfig {
        size: ctx
            .config
            .value(args.size, "size")?
            .unwrap_or(defaults.size),
        ..defaults
    };
    if config.size < rl2_core::features::MIN_IMAGE_SIDE {
        return Err(CliError::Usage(format!(
            "--size must be at least {}",
            rl2_core::features::MIN_IMAGE_SIDE
        )));
    }
    let corpus_seed = ctx.seed_for("synth");
    for i in 0..count {
        let path = out.join(format!("tex_{i:05}.png"));
        texture(&config, corpus_seed, i as u64).save_png(&path)?;
    }
    println!("wrote {count} images to {}", out.display());
    Ok(())
}

fn extract(ctx: &Ctx, args: ExtractArgs) -> Result<(), CliError> {
    let input = ctx.required_path(args.input, "input")?;
    let out = ctx.required_path(args.out, "out")?;
    let images: Vec<_> = load_dir(&input)?.into_iter().map(|(_, im)| im).collect();
    let set = ctx
        .extractor
        .extract_features(&images, &input.display().to_string())?;
    save_features(&set, &out)?;
    println!(
        "wrote {} x {} features to {}",
        set.len(),
        set.dim(),
        out.display()
    );
    Ok(())
}

fn train_config(ctx: &Ctx, args: &TrainArgs) -> Result<TrainConfig, CliError> {
    let c = &ctx.config;
    let defaults = TrainConfig::default();
    let arch = FlowArch::default();
    Ok(TrainConfig {
        epochs: c.value(args.epochs, "epochs")?.unwrap_or(defaults.epochs),
        batch_size: c
            .value(args.batch_size, "batch_size")?
            .unwrap_or(defaults.batch_size),
        learning_rate: c
            .value(args.learning_rate, "learning_rate")?
            .unwrap_or(defaults.learning_rate),
        val_fraction: c
            .value(args.val_fraction, "val_fraction")?
            .unwrap_or(defaults.val_fraction),
        seed: ctx.seed_for("train"),
        arch: FlowArch {
            num_layers: c.value(args.layers, "layers")?.unwrap_or(arch.num_layers),
            hidden: c
                .list(args.hidden.clone(), "hidden")?
                .unwrap_or(arch.hidden),
            scale_clamp: c
                .value(args.scale_clamp, "scale_clamp")?
                .unwrap_or(arch.scale_clamp),
        },
        ..defaults
    })
}

fn train_cmd(ctx: &Ctx, args: TrainArgs) -> Result<(), CliError> {
    let real = ctx.required_path(args.real.clone(), "real")?;
    let config = train_config(ctx, &args)?;
    let out = ctx.out_dir(args.out.clone())?.unwrap_or_default();
    let checkpoint = ctx
        .config
        .path(args.checkpoint.clone(), "checkpoint")
        .unwrap_or_else(|| out.join("model.rl2m"));

    let source = load_source(&real, &ctx.extractor)?;
    let (model, report) = train(&source.features, &config)?;
    write_atomic(&checkpoint, &model.to_bytes())?;
    let report_path = out.join("train_report.txt");
    write_atomic(&report_path, report.to_text().as_bytes())?;

    println!("checkpoint = {}", checkpoint.display());
    println!("report = {}", report_path.display());
    println!("checksum = {}", report.checksum);
    if let (Some(t), Some(v)) = (report.train_nll.last(), report.val_nll.last()) {
        println!("final_train_nll = {t}");
        println!("final_val_nll = {v}");
    }
    eprintln!("trained in {:.1} s", report.wall_clock_seconds);
    Ok(())
}

fn eval(ctx: &Ctx, args: EvalArgs) -> Result<(), CliError> {
    let model = ctx.checkpoint(args.checkpoint)?;
    let real = load_source(&ctx.required_path(args.real, "real")?, &ctx.extractor)?.features;
    let evaluated = load_source(&ctx.required_path(args.eval, "eval")?, &ctx.extractor)?.features;
    let metric = ctx
        .config
        .value(args.metric, "metric")?
        .unwrap_or(MetricChoice::Rl2);

    let mut rows: Vec<MetricValue> = Vec::new();
    if metric != MetricChoice::Fid {
        rows.push(rl2(&real, &evaluated, &model)?);
    }
    if metric != MetricChoice::Rl2 {
        rows.push(fid(
            &gaussian_summary(&real)?,
            &gaussian_summary(&evaluated)?,
        )?);
    }
    let mut csv = format!("{}\n", MetricValue::CSV_HEADER);
    for row in &rows {
        writeln!(csv, "{}", row.csv_row()).unwrap();
    }
    print!("{csv}");
    if let Some(out) = ctx.out_dir(args.out)? {
        write_atomic(&out.join("metrics.csv"), csv.as_bytes())?;
    }
    Ok(())
}

fn degrade(ctx: &Ctx, args: DegradeArgs) -> Result<(), CliError> {
    let input = ctx.required_path(args.input, "input")?;
    let out = ctx
        .out_dir(args.out)?
        .ok_or_else(|| CliError::Usage("--out is required".into()))?;
    let kind: DegradeKind = ctx
        .config
        .value::<String>(args.kind, "kind")?
        .ok_or_else(|| CliError::Usage("--kind is required".into()))?
        .parse()?;
    let severity = ctx
        .config
        .value(args.severity, "severity")?
        .ok_or_else(|| CliError::Usage("--severity is required".into()))?;
    let schedule = ctx.schedule(args.diffusion_steps, args.beta_start, args.beta_end)?;
    let spec = DegradeSpec::new(kind, severity, ctx.seed_for("degrade"));
    spec.validate(&schedule)?;

    let files = list_image_files(&input)?;
    if files.is_empty() {
        return Err(CliError::Usage(format!(
            "no images found in {}",
            input.display()
        )));
    }
    let mut written = std::collections::HashSet::new();
    for (i, path) in files.iter().enumerate() {
        let target = if severity == 0.0 {
            out.join(file_name(path))
        } else {
            out.join(Path::new(&file_name(path)).with_extension("png"))
        };
        if !written.insert(target.clone()) {
            return Err(CliError::Usage(format!(
                "two inputs map to the same output {}",
                target.display()
            )));
        }
        if severity == 0.0 {
            let bytes = std::fs::read(path).map_err(|e| rl2_core::Error::io(path, e))?;
            write_atomic(&target, &bytes)?;
        } else {
            let image = rl2_core::Image::load(path)?;
            spec.apply(&image, &schedule, i as u64)?.save_png(&target)?;
        }
    }
    println!("wrote {} images to {}", files.len(), out.display());
    Ok(())
}

fn filter(ctx: &Ctx, args: FilterArgs) -> Result<(), CliError> {
    let model = ctx.checkpoint(args.checkpoint)?;
    let source = load_source(&ctx.required_path(args.eval, "eval")?, &ctx.extractor)?;
    let scores = per_sample_nll(&source.features, &model)?;
    let labels = match ctx.config.path(args.labels, "labels") {
        Some(path) => {
            let table = read_labels(&path)?;
            let labels = source
                .names
                .iter()
                .map(|name| {
                    table.get(name).copied().ok_or_else(|| {
                        CliError::Usage(format!("{} has no label for {name}", path.display()))
                    })
                })
                .collect::<Result<Vec<u8>, _>>()?;
            Some(labels)
        }
        None => None,
    };

    let mut csv = String::from("name,nll,label\n");
    for (i, (name, score)) in source.names.iter().zip(&scores).enumerate() {
        let label = labels
            .as_ref()
            .map(|l| l[i].to_string())
            .unwrap_or_default();
        writeln!(csv, "{name},{score},{label}").unwrap();
    }
    let roc = labels.map(|l| roc_auc(&scores, &l)).transpose()?;
    if let Some(roc) = &roc {
        writeln!(csv, "AUC,{},", roc.auc).unwrap();
        for w in &roc.warnings {
            eprintln!("warning: {w}");
        }
    }
    print!("{csv}");
    if let Some(out) = ctx.out_dir(args.out)? {
        write_atomic(&out.join("nll.csv"), csv.as_bytes())?;
        if let Some(roc) = &roc {
            write_atomic(&out.join("roc.csv"), roc_csv(roc).as_bytes())?;
        }
    }
    Ok(())
}

fn stability(ctx: &Ctx, args: StabilityArgs) -> Result<(), CliError> {
    let model = ctx.checkpoint(args.checkpoint)?;
    let real = load_source(&ctx.required_path(args.real, "real")?, &ctx.extractor)?.features;
    let evaluated = load_source(&ctx.required_path(args.eval, "eval")?, &ctx.extractor)?.features;
    let sizes = ctx
        .config
        .list(args.sizes, "sizes")?
        .unwrap_or(vec![30, 100, 300]);
    let resamples = ctx.config.value(args.resamples, "resamples")?.unwrap_or(10);
    let curve = stability_curve(
        &real,
        &evaluated,
        &sizes,
        resamples,
        &model,
        ctx.seed_for("stability"),
    )?;
    let csv = stability_csv(&curve);
    print!("{csv}");
    if let Some(out) = ctx.out_dir(args.out)? {
        write_atomic(&out.join("stability.csv"), csv.as_bytes())?;
    }
    Ok(())
}

fn sweep(ctx: &Ctx, args: SweepArgs) -> Result<(), CliError> {
    let model = ctx.checkpoint(args.checkpoint)?;
    let real = ctx.required_path(args.real, "real")?;
    let kinds: Vec<DegradeKind> = match ctx.config.list::<String>(args.kind, "kind")? {
        None => DegradeKind::ALL.to_vec(),
        Some(names) if names.len() == 1 && names[0] == "all" => DegradeKind::ALL.to_vec(),
        Some(names) => names.iter().map(|n| n.parse()).collect::<Result<_, _>>()?,
    };
    let shared = ctx.config.list::<f64>(args.severities, "severities")?;
    if shared.is_some() && kinds.len() != 1 {
        return Err(CliError::Usage(
            "--severities needs a single --kind; use severities.<kind> config keys for several"
                .into(),
        ));
    }
    let schedule = ctx.schedule(args.diffusion_steps, args.beta_start, args.beta_end)?;
    let images: Vec<_> = load_dir(&real)?.into_iter().map(|(_, im)| im).collect();
    let sweep_seed = ctx.seed_for("sweep");

    let mut results = Vec::with_capacity(kinds.len());
    for kind in kinds {
        let ladder = match &shared {
            Some(s) => s.clone(),
            None => ctx
                .config
                .list(None, &format!("severities.{}", kind.name()))?
                .unwrap_or_else(|| kind.default_ladder()),
        };
        let seed = seed::derive(sweep_seed, kind.name());
        results.push(monotonicity_sweep(
            &images,
            kind,
            &ladder,
            &model,
            &ctx.extractor,
            &schedule,
            seed,
        )?);
    }
    let summary = sweep_summary(&results);
    print!("{summary}");
    if let Some(out) = ctx.out_dir(args.out)? {
        write_atomic(&out.join("sweep.csv"), sweep_csv(&results).as_bytes())?;
        write_atomic(&out.join("sweep_summary.csv"), summary.as_bytes())?;
    }
    Ok(())
}
