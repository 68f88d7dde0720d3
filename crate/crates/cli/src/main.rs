use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use linebench::dataset::{
    self, export_training_layout, ingest, parse_volunteers, Assignment, IngestOptions, Registry, SplitSpec, SplitTag,
    Status, GT_SUFFIX,
};
use linebench::engines::{load_engines, train_reference, EngineConfig, EngineHandle, ReferenceModel};
use linebench::formkit::{extract_boxes, register_scan, render_template, FormLayout, ScanRegistration, TemplateDescriptor};
use linebench::imaging::{preprocess, LineGeometry, PreprocessParams, DEFAULT_BLUR_K, DEFAULT_THRESHOLD};
use linebench::metrics::{aggregate, score_sample, Average, EvalReport, RateOptions, ReportTable};
use linebench::synth::{degrade, generate_corpus, load_corpus, write_corpus, CorpusOptions, DegradeParams, GlyphAtlas, RenderedLine};
use linebench::textnorm::{normalize_text, GroundTruth};
use linebench::Raster;

#[derive(Parser)]
#[command(name = "linebench", version, about = "Handwritten line dataset preparation and OCR evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Grayscale, blur, binarize and normalize line images.
    Preprocess(PreprocessArgs),
    /// Render a collection form page and its template.json.
    Template(TemplateArgs),
    /// Cut the per-sentence boxes out of a scanned form.
    Extract(ExtractArgs),
    /// Build manifest.jsonl from <id>.png / <id>.gt.txt pairs.
    Ingest(IngestArgs),
    /// Assign clean samples to train/eval with a seeded shuffle.
    Split(SplitArgs),
    /// Corpus and volunteer statistics.
    Stats(StatsArgs),
    /// Write the trainer directory layout for the current split.
    ExportTraining(ExportArgs),
    /// Score hypotheses (or an engine run) against ground truth.
    Eval(EvalArgs),
    /// Render a table from saved evaluation reports.
    Report(ReportArgs),
    /// Generate a synthetic line corpus.
    Synth(SynthArgs),
    /// Fit the built-in recognizer on a synthetic corpus.
    TrainReference(TrainArgs),
    /// Run the review HTTP API on the loopback interface.
    Serve(ServeArgs),
}

#[derive(Args)]
struct PreprocessArgs {
    /// A PNG file or a directory of PNGs.
    #[arg(long)]
    input: PathBuf,
    /// Output file, or directory when the input is a directory.
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = DEFAULT_BLUR_K)]
    blur_k: usize,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    threshold: u8,
    #[arg(long)]
    invert: bool,
    /// Fit into the fixed line canvas (--width x --height, right-aligned).
    #[arg(long)]
    normalize: bool,
    #[arg(long, default_value_t = 1200)]
    width: usize,
    #[arg(long, default_value_t = 110)]
    height: usize,
}

#[derive(Args)]
struct TemplateArgs {
    /// One sentence per line; blank lines are skipped.
    #[arg(long)]
    sentences: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 300.0)]
    dpi: f64,
    #[arg(long, default_value = "form-v1")]
    template_id: String,
}

#[derive(Args)]
struct ExtractArgs {
    #[arg(long)]
    scan: PathBuf,
    #[arg(long)]
    template: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Skip fiducial detection and assume an unshifted scan at --dpi.
    #[arg(long, requires = "dpi")]
    no_fiducials: bool,
    #[arg(long)]
    dpi: Option<f64>,
    /// Crops are named <prefix>_<slot>, e.g. a01 gives a01_01.png.
    #[arg(long, default_value = "slot")]
    id_prefix: String,
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    dir: PathBuf,
    /// Initial status of every sample.
    #[arg(long, default_value = "raw")]
    status: Status,
}

#[derive(Args)]
struct SplitArgs {
    #[arg(long, default_value = ".")]
    root: PathBuf,
    #[arg(long, default_value_t = 0.9)]
    ratio: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Keep each author's samples on one side.
    #[arg(long)]
    by_author: bool,
    /// Print the assignment without updating the manifest.
    #[arg(long)]
    dry_run: bool,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long, default_value = ".")]
    root: PathBuf,
    #[arg(long)]
    volunteers: Option<PathBuf>,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long, default_value = ".")]
    root: PathBuf,
    /// KEY VALUE training configuration file.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in configuration: esyr, esyr_lesstrain or esyr_short.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Directory with <id>.gt.txt (and <id>.png when running an engine).
    #[arg(long)]
    gt: PathBuf,
    /// Directory with <id>.txt or <id>.gt.txt hypotheses.
    #[arg(long, conflicts_with = "engine")]
    hyp: Option<PathBuf>,
    /// Engine name from --engines, or `reference` with --model.
    #[arg(long)]
    engine: Option<String>,
    #[arg(long)]
    engines: Option<PathBuf>,
    #[arg(long)]
    model: Option<PathBuf>,
    /// Row label; defaults to the engine name or "hyp".
    #[arg(long)]
    name: Option<String>,
    #[arg(long, default_value = "test")]
    dataset: String,
    /// Also report WER.
    #[arg(long)]
    words: bool,
    /// Pooled counts instead of the mean of per-sample rates.
    #[arg(long)]
    micro: bool,
    #[arg(long)]
    per_sample: bool,
    #[arg(long)]
    ignore_spaces: bool,
    /// Save the full report as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Report files written by `eval --json`.
    #[arg(required = true)]
    reports: Vec<PathBuf>,
    #[arg(long)]
    words: bool,
    #[arg(long)]
    micro: bool,
    #[arg(long, default_value_t = 2)]
    precision: usize,
    /// Tab-separated output without % signs.
    #[arg(long)]
    tsv: bool,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    salt_pepper: f64,
    #[arg(long, default_value_t = 1)]
    blur_k: usize,
    /// Per-codepoint substitution probability in the rendered image; the
    /// written ground truth stays uncorrupted.
    #[arg(long, default_value_t = 0.0)]
    char_corrupt: f64,
    #[arg(long, default_value_t = 20)]
    lines_per_author: usize,
}

#[derive(Args)]
struct TrainArgs {
    /// Directory written by `synth` (needs boxes.jsonl).
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value = ".")]
    root: PathBuf,
    #[arg(long, default_value_t = 8080)]
    port: u16,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Preprocess(a) => cmd_preprocess(a),
        Command::Template(a) => cmd_template(a),
        Command::Extract(a) => cmd_extract(a),
        Command::Ingest(a) => cmd_ingest(a),
        Command::Split(a) => cmd_split(a),
        Command::Stats(a) => cmd_stats(a),
        Command::ExportTraining(a) => cmd_export(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Report(a) => cmd_report(a),
        Command::Synth(a) => cmd_synth(a),
        Command::TrainReference(a) => cmd_train(a),
        Command::Serve(a) => cmd_serve(a),
    }
}

fn sorted_entries(dir: &Path, suffix: &str) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let name = e?.file_name().to_string_lossy().into_owned();
        if let Some(stem) = name.strip_suffix(suffix) {
            out.push(stem.to_string());
        }
    }
    out.sort();
    Ok(out)
}

fn cmd_preprocess(a: PreprocessArgs) -> Result<()> {
    let params = PreprocessParams {
        blur_k: a.blur_k,
        threshold: a.threshold,
        invert: a.invert,
        normalize: a.normalize.then(|| LineGeometry {
            target_width: a.width,
            target_height: a.height,
            ..Default::default()
        }),
    };
    let run = |input: &Path, output: &Path| -> Result<()> {
        let img = Raster::read_png(input).with_context(|| format!("reading {}", input.display()))?;
        preprocess(&img, &params)?.write_png(output)?;
        Ok(())
    };
    if a.input.is_dir() {
        std::fs::create_dir_all(&a.output)?;
        let stems = sorted_entries(&a.input, ".png")?;
        for stem in &stems {
            let name = format!("{stem}.png");
            run(&a.input.join(&name), &a.output.join(&name))?;
        }
        println!("processed {} images", stems.len());
    } else {
        run(&a.input, &a.output)?;
    }
    Ok(())
}

fn read_sentences(path: &Path) -> Result<Vec<GroundTruth>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| normalize_text(l).with_context(|| format!("sentence on line {}", i + 1)))
        .collect()
}

fn cmd_template(a: TemplateArgs) -> Result<()> {
    let sentences = read_sentences(&a.sentences)?;
    let layout = FormLayout {
        template_id: a.template_id,
        dpi: a.dpi,
        ..Default::default()
    };
    let (page, tpl) = render_template(&sentences, &layout, &GlyphAtlas::default_syriac())?;
    std::fs::create_dir_all(&a.out)?;
    std::fs::write(a.out.join("template.json"), tpl.to_json())?;
    page.write_png(a.out.join("form.png"))?;
    println!("{} slots, {}x{} px", tpl.slots.len(), page.width(), page.height());
    Ok(())
}

fn cmd_extract(a: ExtractArgs) -> Result<()> {
    let tpl = TemplateDescriptor::from_json(&std::fs::read_to_string(&a.template)?)?;
    let scan = Raster::read_png(&a.scan).with_context(|| format!("reading {}", a.scan.display()))?;
    let reg = if a.no_fiducials {
        ScanRegistration::fixed(a.dpi.expect("clap requires --dpi"))
    } else {
        register_scan(&scan, &tpl)?
    };
    eprintln!("registration: {:.1} dpi, residual {:.2} px", reg.dpi, reg.residual_px);
    let crops = extract_boxes(&scan, &tpl, &reg)?;
    std::fs::create_dir_all(&a.out)?;
    for (crop, slot) in crops.iter().zip(&tpl.slots) {
        let name = format!("{}_{:02}", a.id_prefix, crop.slot_id);
        crop.image.write_png(a.out.join(format!("{name}.png")))?;
        if let Ok(gt) = normalize_text(&slot.prompt) {
            std::fs::write(a.out.join(format!("{name}{GT_SUFFIX}")), gt.to_file_string())?;
        }
        let ink = crop.image.dark_ratio();
        let r = crop.rect;
        let flag = if ink < 0.001 { "\tempty" } else { "" };
        println!("{name}\t{}\t{}\t{}\t{}\t{:.2}%{flag}", r.x, r.y, r.w, r.h, ink * 100.0);
    }
    Ok(())
}

fn cmd_ingest(a: IngestArgs) -> Result<()> {
    let reg = ingest(
        &a.dir,
        IngestOptions {
            initial_status: a.status,
            ..Default::default()
        },
    )?;
    reg.save()?;
    println!("{} samples -> {}", reg.len(), a.dir.join(dataset::MANIFEST_FILE).display());
    Ok(())
}

fn cmd_split(a: SplitArgs) -> Result<()> {
    let mut reg = Registry::load(&a.root)?;
    let mut spec = SplitSpec::new(a.ratio, a.seed)?;
    spec.by_author = a.by_author;
    let assignment = dataset::split(&reg, &spec)?;
    println!("train {}\neval {}", assignment.train.len(), assignment.eval.len());
    if !a.dry_run {
        dataset::apply_assignment(&mut reg, &assignment)?;
        reg.save()?;
    }
    Ok(())
}

fn cmd_stats(a: StatsArgs) -> Result<()> {
    let reg = Registry::load(&a.root)?;
    let volunteers = match &a.volunteers {
        Some(p) => parse_volunteers(std::fs::File::open(p).with_context(|| format!("opening {}", p.display()))?)?,
        None => Vec::new(),
    };
    let stats = dataset::stats(&reg, &volunteers);
    println!("{}", serde_json::to_string_pretty(&stats)?);
    Ok(())
}

fn cmd_export(a: ExportArgs) -> Result<()> {
    let cfg = match (&a.config, &a.preset) {
        (Some(p), _) => EngineConfig::parse(&std::fs::read_to_string(p)?)?,
        (None, Some(name)) => EngineConfig::presets()
            .into_iter()
            .find(|c| &c.name == name)
            .ok_or_else(|| anyhow!("unknown preset {name:?}"))?,
        (None, None) => bail!("pass --config or --preset"),
    };
    let reg = Registry::load(&a.root)?;
    let pick = |tag| -> Vec<String> {
        reg.samples()
            .filter(|s| s.status == Status::Clean && s.split == tag)
            .map(|s| s.id.clone())
            .collect()
    };
    let assignment = Assignment {
        train: pick(SplitTag::Train),
        eval: pick(SplitTag::Eval),
    };
    let m = export_training_layout(&reg, &assignment, &cfg, &a.out)?;
    println!(
        "{} train, {} eval -> {}",
        m.train.len(),
        m.eval.len(),
        m.ground_truth_dir.display()
    );
    Ok(())
}

fn read_gt(path: &Path) -> Result<GroundTruth> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    GroundTruth::from_file_bytes(&bytes).with_context(|| format!("ground truth {}", path.display()))
}

fn select_engine(a: &EvalArgs, name: &str) -> Result<EngineHandle> {
    if let Some(model) = &a.model {
        return Ok(EngineHandle::Reference(ReferenceModel::from_json(&std::fs::read_to_string(model)?)?));
    }
    let file = a.engines.as_ref().ok_or_else(|| anyhow!("--engine needs --engines or --model"))?;
    let mut engines = load_engines(file)?;
    engines.remove(name).ok_or_else(|| anyhow!("no engine {name:?} in {}", file.display()))
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let ids = sorted_entries(&a.gt, GT_SUFFIX)?;
    if ids.is_empty() {
        bail!("no {GT_SUFFIX} files in {}", a.gt.display());
    }
    let engine = match &a.engine {
        Some(name) => Some(select_engine(&a, name)?),
        None if a.hyp.is_none() => bail!("pass --hyp or --engine"),
        None => None,
    };
    let opts = RateOptions {
        ignore_spaces: a.ignore_spaces,
    };
    let mut scores = Vec::with_capacity(ids.len());
    for id in &ids {
        let reference = read_gt(&a.gt.join(format!("{id}{GT_SUFFIX}")))?;
        let hypothesis = match (&engine, &a.hyp) {
            (Some(e), _) => e
                .recognize(&a.gt.join(format!("{id}.png")))
                .with_context(|| format!("recognizing {id}"))?,
            (None, Some(dir)) => {
                let txt = dir.join(format!("{id}.txt"));
                let path = if txt.is_file() { txt } else { dir.join(format!("{id}{GT_SUFFIX}")) };
                let raw = std::fs::read_to_string(&path).with_context(|| format!("no hypothesis for {id}"))?;
                linebench::textnorm::normalize_lenient(&raw)
            }
            (None, None) => unreachable!(),
        };
        scores.push(score_sample(id.clone(), &reference, &hypothesis, opts)?);
    }
    let name = a.name.clone().or_else(|| a.engine.clone()).unwrap_or_else(|| "hyp".into());
    let report = aggregate(&name, &a.dataset, &scores)?;
    if let Some(path) = &a.json {
        std::fs::write(path, serde_json::to_string_pretty(&report)?)?;
    }
    let avg = if a.micro { Average::Micro } else { Average::Macro };
    print!("{}", render_table(&[report.clone()], avg, a.words, 2, true));
    if a.per_sample {
        println!();
        for s in &report.per_sample {
            println!("{}\t{:.2}\t{:.2}", s.id, s.cer, s.wer);
        }
    }
    Ok(())
}

fn render_table(reports: &[EvalReport], avg: Average, words: bool, precision: usize, tsv: bool) -> String {
    let mut table = ReportTable::rates(reports, avg).with_precision(precision);
    if !words {
        table.header.truncate(2);
        for row in &mut table.rows {
            row.truncate(2);
        }
    }
    if tsv {
        table.to_tsv()
    } else {
        table.to_text()
    }
}

fn cmd_report(a: ReportArgs) -> Result<()> {
    let reports: Vec<EvalReport> = a
        .reports
        .iter()
        .map(|p| -> Result<EvalReport> {
            Ok(serde_json::from_str(&std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?)
        })
        .collect::<Result<_>>()?;
    let avg = if a.micro { Average::Micro } else { Average::Macro };
    print!("{}", render_table(&reports, avg, a.words, a.precision, a.tsv));
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    let atlas = GlyphAtlas::default_syriac();
    let opts = CorpusOptions {
        lines_per_author: a.lines_per_author,
        ..Default::default()
    };
    let clean = generate_corpus(a.count, a.seed, &atlas, &opts)?;
    let degraded = a.salt_pepper > 0.0 || a.blur_k > 1 || a.char_corrupt > 0.0;
    let lines: Vec<(String, RenderedLine)> = if degraded {
        clean
            .into_iter()
            .enumerate()
            .map(|(i, (id, line))| {
                let params = DegradeParams {
                    salt_pepper: a.salt_pepper,
                    blur_k: a.blur_k,
                    char_corrupt: a.char_corrupt,
                    seed: a.seed.wrapping_add(i as u64),
                };
                let d = degrade(&line, &atlas, &params)?;
                Ok((
                    id,
                    RenderedLine {
                        image: d.image,
                        text: line.text,
                        glyph_boxes: d.glyph_boxes,
                    },
                ))
            })
            .collect::<Result<_>>()?
    } else {
        clean
    };
    write_corpus(&lines, &a.out)?;
    println!("{} lines -> {}", lines.len(), a.out.display());
    Ok(())
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let lines: Vec<RenderedLine> = load_corpus(&a.corpus)?.into_iter().map(|(_, l)| l).collect();
    let model = train_reference(&lines)?;
    std::fs::write(&a.out, model.to_json())?;
    println!("{} classes from {} lines", model.prototypes.len(), lines.len());
    Ok(())
}

fn cmd_serve(a: ServeArgs) -> Result<()> {
    let state = linebench_review::AppState::open(&a.root)?;
    let rt = tokio::runtime::Runtime::new()?;
    eprintln!("listening on http://127.0.0.1:{}", a.port);
    rt.block_on(linebench_review::serve(state, a.port))?;
    Ok(())
}

