//! Subcommand implementations. Every stage reads and writes files only.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use sg2v::graph::{load_jsonl_with, load_tu_dataset_with};
use sg2v::kernel::{deep_wl_kernel_with, load_labels, save_labels};
use sg2v::{
    adjusted_rand_index, affinity_propagation, evaluate_classification, load_embeddings, normalize_kernel,
    train as train_embeddings, wl_kernel, ApParams, Encoding, EvalConfig, EvalResult, GraphDataset, KernelMatrix,
    KernelMode, LoadOptions, Preference, SubgraphVocab, TrainingConfig,
};

use crate::config::PipelineConfig;
use crate::{CliError, DatasetArgs, Format};

/// `dir/file.txt` with extension `ext` replacing the original one.
pub fn sibling(path: &Path, ext: &str) -> PathBuf {
    path.with_extension(ext)
}

fn require(path: &Path, what: &str) -> Result<(), CliError> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("{what} {} does not exist", path.display())))
    }
}

fn create(path: &Path) -> Result<std::io::BufWriter<fs::File>, CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::Runtime(format!("{}: {e}", parent.display())))?;
    }
    fs::File::create(path)
        .map(std::io::BufWriter::new)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Runtime(format!("{}: {e}", path.display()))
}

pub fn load_dataset(args: &DatasetArgs) -> Result<GraphDataset, CliError> {
    require(&args.input, "input")?;
    let opts = LoadOptions {
        directed: args.directed,
    };
    let ds = match args.format {
        Format::Tu => {
            let name = match &args.name {
                Some(n) => n.clone(),
                None => args
                    .input
                    .file_name()
                    .map(|s| s.to_string_lossy().into_owned())
                    .ok_or_else(|| CliError::Usage("cannot infer the TU dataset name; pass --name".into()))?,
            };
            load_tu_dataset_with(&args.input, &name, opts)?
        }
        Format::Jsonl => load_jsonl_with(&args.input, opts)?,
    };
    log::info!(
        "loaded {}: {} graphs, {} node labels, mean {:.2} nodes",
        ds.name,
        ds.len(),
        ds.label_alphabet().len(),
        ds.mean_nodes()
    );
    Ok(ds)
}

fn load_vocab(path: &Path) -> Result<SubgraphVocab, CliError> {
    require(path, "vocabulary")?;
    Ok(SubgraphVocab::load(path)?)
}

pub fn vocab(data: &DatasetArgs, degree: usize, compress: bool, output: &Path) -> Result<(), CliError> {
    let ds = load_dataset(data)?;
    let encoding = if compress { Encoding::Compressed } else { Encoding::Full };
    let vocab = SubgraphVocab::build_with(&ds, degree, encoding)?;
    log::info!("vocabulary size {} (degree {degree})", vocab.len());
    vocab.save(output)?;
    Ok(())
}

pub fn train(
    data: &DatasetArgs,
    vocab_path: &Path,
    mut cfg: TrainingConfig,
    output: &Path,
    loss_log: &Path,
) -> Result<(), CliError> {
    let ds = load_dataset(data)?;
    let vocab = load_vocab(vocab_path)?;
    cfg.max_degree = vocab.max_degree();
    cfg.validate()?;
    if !cfg.deterministic {
        log::warn!("non-deterministic training with {} threads", cfg.threads);
    }
    let model = train_embeddings(&ds, &vocab, &cfg)?;
    if let Some(parent) = output.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    model.save_embeddings(output)?;
    let mut w = create(loss_log)?;
    (|| -> std::io::Result<()> {
        writeln!(
            w,
            "# seed={} dimensions={} epochs={} neg_count={} lr_initial={} lr_min={} degree={} deterministic={}",
            cfg.seed,
            cfg.dimensions,
            cfg.epochs,
            cfg.neg_count,
            cfg.lr_initial,
            cfg.lr_min,
            cfg.max_degree,
            cfg.deterministic
        )?;
        writeln!(w, "# epoch\tmean_loss")?;
        for (e, l) in model.epoch_losses.iter().enumerate() {
            writeln!(w, "{}\t{l:?}", e + 1)?;
        }
        w.flush()
    })()
    .map_err(io_err(loss_log))?;
    if let (Some(first), Some(last)) = (model.epoch_losses.first(), model.epoch_losses.last()) {
        log::info!("loss {first:.4} -> {last:.4} over {} epochs", cfg.epochs);
    }
    Ok(())
}

pub fn kernel(
    data: &DatasetArgs,
    vocab_path: &Path,
    mode: KernelMode,
    embeddings: Option<&Path>,
    normalize: bool,
    output: &Path,
    labels: &Path,
) -> Result<(), CliError> {
    if mode == KernelMode::Deep && embeddings.is_none() {
        return Err(CliError::Usage("--embeddings is required for the deep kernel".into()));
    }
    let ds = load_dataset(data)?;
    let vocab = load_vocab(vocab_path)?;
    let mut k = match (mode, embeddings) {
        (KernelMode::Deep, Some(path)) => {
            require(path, "embeddings")?;
            deep_wl_kernel_with(&ds, &vocab, &load_embeddings(path)?)?
        }
        _ => wl_kernel(&ds, &vocab)?,
    };
    if normalize {
        k = normalize_kernel(&k)?;
    }
    if let Some(parent) = output.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    k.save(output)?;
    save_labels(&ds, labels)?;
    log::info!(
        "{} kernel over {} graphs written to {}",
        mode,
        k.len(),
        output.display()
    );
    Ok(())
}

/// Reorders `classes` to follow the kernel's graph ids.
fn aligned_labels(kernel: &KernelMatrix, labels_path: &Path) -> Result<Vec<String>, CliError> {
    require(labels_path, "labels")?;
    let (ids, classes) = load_labels(labels_path)?;
    let lookup: std::collections::HashMap<usize, &String> = ids.iter().copied().zip(&classes).collect();
    kernel
        .graph_ids
        .iter()
        .map(|id| {
            lookup
                .get(id)
                .map(|c| (*c).clone())
                .ok_or_else(|| CliError::Usage(format!("graph {id} has no entry in {}", labels_path.display())))
        })
        .collect()
}

pub fn classify(
    kernel_path: &Path,
    labels_path: &Path,
    dataset: &str,
    cfg: &EvalConfig,
    output: Option<&Path>,
) -> Result<EvalResult, CliError> {
    require(kernel_path, "kernel")?;
    let k = KernelMatrix::load(kernel_path)?;
    let labels = aligned_labels(&k, labels_path)?;
    let result = evaluate_classification(&k.values, &labels, cfg)?;
    let mode = if k.normalized {
        format!("{}-normalized", k.mode)
    } else {
        k.mode.to_string()
    };
    let mut buf = Vec::new();
    result
        .write_report(dataset, &mode, &mut buf)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    match output {
        Some(p) => {
            let mut w = create(p)?;
            w.write_all(&buf).and_then(|_| w.flush()).map_err(io_err(p))?;
        }
        None => std::io::stdout()
            .write_all(&buf)
            .map_err(|e| CliError::Runtime(e.to_string()))?,
    }
    log::info!("accuracy {:.4} ± {:.4}", result.mean, result.std);
    Ok(result)
}

pub fn cluster(
    kernel_path: &Path,
    truth: Option<&Path>,
    params: &ApParams,
    output: Option<&Path>,
) -> Result<Option<f64>, CliError> {
    require(kernel_path, "kernel")?;
    let mut k = KernelMatrix::load(kernel_path)?;
    if !k.normalized {
        log::info!("normalizing kernel before clustering");
        k = normalize_kernel(&k)?;
    }
    let result = affinity_propagation(&k.values, params)?;
    let ari = match truth {
        Some(p) => Some(adjusted_rand_index(&result.labels, &aligned_labels(&k, p)?)?),
        None => None,
    };
    let preference = match &params.preference {
        Preference::Median => "median".to_string(),
        Preference::Value(v) => v.to_string(),
        Preference::PerPoint(_) => "per-point".to_string(),
    };
    let mut buf = Vec::new();
    (|| -> std::io::Result<()> {
        writeln!(
            buf,
            "# damping={} preference={preference} iterations={} converged={} clusters={}",
            params.damping,
            result.iterations,
            result.converged,
            result.n_clusters()
        )?;
        if let Some(a) = ari {
            writeln!(buf, "# ari={a:.6}")?;
        }
        writeln!(buf, "# graph_id, cluster_id, exemplar_id")?;
        result.write(&k.graph_ids, &mut buf)
    })()
    .map_err(|e| CliError::Runtime(e.to_string()))?;
    match output {
        Some(p) => {
            let mut w = create(p)?;
            w.write_all(&buf).and_then(|_| w.flush()).map_err(io_err(p))?;
        }
        None => std::io::stdout()
            .write_all(&buf)
            .map_err(|e| CliError::Runtime(e.to_string()))?,
    }
    if !result.converged {
        log::warn!(
            "affinity propagation did not converge in {} iterations",
            result.iterations
        );
    }
    match ari {
        Some(a) => log::info!("{} clusters, ARI {a:.4}", result.n_clusters()),
        None => log::info!("{} clusters", result.n_clusters()),
    }
    Ok(ari)
}

fn header_value<'a>(line: &'a str, key: &str) -> Option<&'a str> {
    line.trim_start_matches('#')
        .split_whitespace()
        .find_map(|kv| kv.strip_prefix(key).and_then(|v| v.strip_prefix('=')))
}

/// One summary line for a recognized artifact, or `None`.
fn summarize(path: &Path) -> Option<String> {
    let text = fs::read_to_string(path).ok()?;
    let mut lines = text.lines();
    let first = lines.next()?;
    if first.starts_with("# seed=") && text.contains("# dataset, kernel_mode,") {
        let rows: Vec<&str> = text
            .lines()
            .filter(|l| !l.starts_with('#') && l.contains(", "))
            .collect();
        let summary = text.lines().last()?.trim();
        let (dataset, mode) = rows.first().map_or(("?", "?"), |r| {
            let mut f = r.split(", ");
            (f.next().unwrap_or("?"), f.next().unwrap_or("?"))
        });
        return Some(format!(
            "classification  {dataset} {mode}: accuracy {summary} over {} repeats (seed {})",
            rows.len(),
            header_value(first, "seed").unwrap_or("?")
        ));
    }
    if first.starts_with("# damping=") {
        let ari = text
            .lines()
            .find_map(|l| header_value(l, "ari"))
            .map(|a| format!(", ARI {a}"));
        let points = text.lines().filter(|l| !l.starts_with('#') && !l.is_empty()).count();
        return Some(format!(
            "clustering      {} clusters over {points} graphs{}, converged={}",
            header_value(first, "clusters").unwrap_or("?"),
            ari.unwrap_or_default(),
            header_value(first, "converged").unwrap_or("?")
        ));
    }
    if first.starts_with("# seed=") && text.contains("# epoch") {
        let losses: Vec<&str> = text
            .lines()
            .filter(|l| !l.starts_with('#'))
            .filter_map(|l| l.split('\t').nth(1))
            .collect();
        let fmt = |s: Option<&&str>| {
            s.and_then(|v| v.parse::<f64>().ok())
                .map_or("?".into(), |v| format!("{v:.4}"))
        };
        return Some(format!(
            "training        {} epochs, loss {} -> {} (seed {})",
            losses.len(),
            fmt(losses.first()),
            fmt(losses.last()),
            header_value(first, "seed").unwrap_or("?")
        ));
    }
    let fields: Vec<&str> = first.split_whitespace().collect();
    if fields.len() == 3 && (fields[1] == "wl" || fields[1] == "deep") {
        return Some(format!(
            "kernel          {} graphs, mode {}, normalized {}",
            fields[0], fields[1], fields[2]
        ));
    }
    if fields.len() == 2 && fields.iter().all(|f| f.parse::<usize>().is_ok()) {
        return Some(format!(
            "embeddings      {} subgraphs x {} dimensions",
            fields[0], fields[1]
        ));
    }
    let cols: Vec<&str> = first.splitn(4, '\t').collect();
    if cols.len() == 4 && cols[..3].iter().all(|c| c.parse::<u64>().is_ok()) {
        let rows: Vec<Vec<&str>> = text.lines().map(|l| l.splitn(4, '\t').collect()).collect();
        let max_degree = rows
            .iter()
            .filter_map(|r| r.get(1)?.parse::<usize>().ok())
            .max()
            .unwrap_or(0);
        return Some(format!(
            "vocabulary      {} subgraphs up to degree {max_degree}",
            rows.len()
        ));
    }
    None
}

pub fn report(dir: &Path) -> Result<String, CliError> {
    if !dir.is_dir() {
        return Err(CliError::Usage(format!("{} is not a directory", dir.display())));
    }
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    entries.sort();
    let mut out = String::new();
    let width = entries
        .iter()
        .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().len()))
        .max()
        .unwrap_or(8)
        .max(8);
    let _ = writeln!(out, "{:width$}  summary", "artifact");
    let mut found = 0;
    for p in &entries {
        if let Some(s) = summarize(p) {
            let name = p.file_name().unwrap_or_default().to_string_lossy();
            let _ = writeln!(out, "{name:width$}  {s}");
            found += 1;
        }
    }
    if found == 0 {
        return Err(CliError::Usage(format!("no artifacts found in {}", dir.display())));
    }
    Ok(out)
}

pub fn pipeline(cfg: &PipelineConfig) -> Result<(), CliError> {
    let format = match cfg.format.as_str() {
        "tu" => Format::Tu,
        "jsonl" => Format::Jsonl,
        other => return Err(CliError::Usage(format!("format must be tu or jsonl, got {other:?}"))),
    };
    let train_cfg = TrainingConfig {
        max_degree: cfg.degree,
        dimensions: cfg.dimensions,
        epochs: cfg.epochs,
        neg_count: cfg.neg_count,
        lr_initial: cfg.lr_initial,
        lr_min: cfg.lr_min,
        seed: cfg.seed,
        deterministic: true,
        threads: cfg.threads,
        ..Default::default()
    };
    let eval_cfg = EvalConfig {
        repeats: cfg.repeats,
        train_frac: cfg.train_frac,
        folds: cfg.folds,
        c_grid: cfg.c_grid.clone(),
        seed: cfg.seed,
        tol: cfg.tol,
    };
    let ap = ApParams {
        damping: cfg.damping,
        preference: cfg.preference.map_or(Preference::Median, Preference::Value),
        max_iter: cfg.max_iter,
        convergence_window: cfg.window,
    };
    // Validate everything before any work starts.
    train_cfg.validate()?;
    eval_cfg.validate()?;
    if !(0.5..1.0).contains(&ap.damping) {
        return Err(CliError::Usage(format!(
            "damping must lie in [0.5, 1), got {}",
            ap.damping
        )));
    }
    let data = DatasetArgs {
        input: cfg.input.clone(),
        format,
        name: cfg.name.clone(),
        directed: cfg.directed,
    };
    require(&data.input, "input")?;
    fs::create_dir_all(&cfg.output_dir).map_err(io_err(&cfg.output_dir))?;
    let out = |f: &str| cfg.output_dir.join(f);

    vocab(&data, cfg.degree, cfg.compress, &out("vocab.tsv"))?;
    let embeddings = if cfg.mode == KernelMode::Deep {
        train(
            &data,
            &out("vocab.tsv"),
            train_cfg,
            &out("embeddings.txt"),
            &out("loss.log"),
        )?;
        Some(out("embeddings.txt"))
    } else {
        None
    };
    kernel(
        &data,
        &out("vocab.tsv"),
        cfg.mode,
        embeddings.as_deref(),
        cfg.normalize,
        &out("kernel.txt"),
        &out("kernel.labels"),
    )?;
    let dataset = cfg.name.clone().unwrap_or_else(|| {
        cfg.input
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "dataset".into())
    });
    if cfg.classify {
        classify(
            &out("kernel.txt"),
            &out("kernel.labels"),
            &dataset,
            &eval_cfg,
            Some(&out("classify.txt")),
        )?;
    }
    if cfg.cluster {
        cluster(
            &out("kernel.txt"),
            Some(&out("kernel.labels")),
            &ap,
            Some(&out("clusters.txt")),
        )?;
    }
    print!("{}", report(&cfg.output_dir)?);
    Ok(())
}
