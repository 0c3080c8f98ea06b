use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use optpick::{save_dataset, Instance, LabelCatalog, LabelId};

#[derive(Clone, Copy, ValueEnum)]
pub enum Format {
    /// Decide from the file extension
    Auto,
    Csv,
    Jsonl,
}

#[derive(Args)]
pub struct IngestArgs {
    /// Raw records with a text and a label field
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "auto")]
    format: Format,
    #[arg(long, default_value = "text")]
    text_field: String,
    #[arg(long, default_value = "label")]
    label_field: String,
    /// Existing catalog to validate against; otherwise one is built from
    /// the labels in order of first appearance
    #[arg(long)]
    catalog: Option<PathBuf>,
    /// Receives catalog.json (when built) and dataset.jsonl
    #[arg(long)]
    out_dir: PathBuf,
}

fn read_csv(path: &Path, text: &str, label: &str) -> Result<Vec<(String, String)>> {
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .with_context(|| format!("{}: no `{name}` column", path.display()))
    };
    let (ti, li) = (col(text)?, col(label)?);
    let mut out = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row.with_context(|| format!("{}: row {}", path.display(), i + 2))?;
        out.push((row[ti].to_string(), row[li].to_string()));
    }
    Ok(out)
}

fn read_jsonl(path: &Path, text: &str, label: &str) -> Result<Vec<(String, String)>> {
    let raw = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let map: serde_json::Map<String, serde_json::Value> =
            serde_json::from_str(line).with_context(|| format!("{}:{}", path.display(), i + 1))?;
        let field = |name: &str| -> Result<String> {
            match map.get(name) {
                Some(serde_json::Value::String(s)) => Ok(s.clone()),
                Some(v) => Ok(v.to_string()),
                None => bail!("{}:{}: missing `{name}`", path.display(), i + 1),
            }
        };
        out.push((field(text)?, field(label)?));
    }
    Ok(out)
}

pub fn run(args: &IngestArgs) -> Result<()> {
    let is_csv = match args.format {
        Format::Csv => true,
        Format::Jsonl => false,
        Format::Auto => args.input.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")),
    };
    let rows = if is_csv {
        read_csv(&args.input, &args.text_field, &args.label_field)?
    } else {
        read_jsonl(&args.input, &args.text_field, &args.label_field)?
    };
    if rows.is_empty() {
        bail!("{} holds no records", args.input.display());
    }
    fs::create_dir_all(&args.out_dir).with_context(|| format!("creating {}", args.out_dir.display()))?;

    let catalog = match &args.catalog {
        Some(p) => LabelCatalog::load(p)?,
        None => {
            let mut seen = HashSet::new();
            let labels: Vec<&str> = rows
                .iter()
                .map(|(_, l)| l.trim())
                .filter(|l| seen.insert(*l))
                .collect();
            let catalog = LabelCatalog::new(labels)?;
            catalog.save(args.out_dir.join("catalog.json"))?;
            catalog
        }
    };
    let mut unknown = Vec::new();
    let instances: Vec<Instance> = rows
        .into_iter()
        .enumerate()
        .map(|(i, (text, label))| {
            let id = LabelId::new(&label);
            if !catalog.contains(&id) {
                unknown.push(format!("record {}: `{label}`", i + 1));
            }
            Instance::new(i, text, id)
        })
        .collect();
    if !unknown.is_empty() {
        bail!("labels missing from the catalog:\n  {}", unknown.join("\n  "));
    }
    let out = args.out_dir.join("dataset.jsonl");
    save_dataset(&out, &instances)?;
    println!(
        "wrote {} record(s) over {} label(s) to {}",
        instances.len(),
        catalog.len(),
        out.display()
    );
    Ok(())
}
