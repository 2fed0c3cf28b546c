//! File formats: schema files, dataset/point/design CSVs, prediction CSVs and model files.
//!
//! CSV files carry a header row. Point files list the quantitative inputs
//! followed by the qualitative factors; dataset files add a final response
//! column. Factor cells may hold a level label or a 1-based level index.

use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::covariance::KernelConfig;
use crate::doe::Design;
use crate::domain::{Dataset, InputSchema, MixedPoint};
use crate::error::{Error, Result};
use crate::fit::{FitDiagnostics, FittedModel};
use crate::predict::Prediction;

/// Reads a schema from JSON (`.json`) or TOML (anything else).
pub fn load_schema(path: &Path) -> Result<InputSchema> {
    let text = std::fs::read_to_string(path)?;
    if path.extension().is_some_and(|e| e == "json") {
        Ok(serde_json::from_str(&text)?)
    } else {
        toml::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
    }
}

fn parse_row(schema: &InputSchema, rec: &csv::StringRecord, line: usize) -> Result<MixedPoint> {
    let p = schema.p();
    let mut x = Vec::with_capacity(p);
    for (i, q) in schema.quantitative.iter().enumerate() {
        let cell = rec.get(i).unwrap_or("").trim();
        let v: f64 = cell
            .parse()
            .map_err(|_| Error::Parse(format!("line {line}: `{cell}` is not a number for `{}`", q.name)))?;
        x.push(v);
    }
    let mut t = Vec::with_capacity(schema.q());
    for (j, f) in schema.qualitative.iter().enumerate() {
        let cell = rec.get(p + j).unwrap_or("");
        let l = f
            .parse_level(cell)
            .ok_or_else(|| Error::Parse(format!("line {line}: `{cell}` is not a level of `{}`", f.name)))?;
        t.push(l);
    }
    Ok(MixedPoint::new(x, t))
}

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(r)
}

fn check_width(rec: &csv::StringRecord, expected: usize, line: usize) -> Result<()> {
    if rec.len() != expected {
        return Err(Error::Parse(format!("line {line}: expected {expected} columns, found {}", rec.len())));
    }
    Ok(())
}

/// Reads points (native units) from a CSV with `p + q` columns. A dataset
/// file with one extra trailing response column is accepted and the
/// responses are ignored.
pub fn read_points<R: Read>(schema: &InputSchema, r: R) -> Result<Vec<MixedPoint>> {
    let mut width = schema.p() + schema.q();
    let mut rdr = reader(r);
    if rdr.headers()?.len() == width + 1 {
        width += 1;
    }
    check_width(rdr.headers()?, width, 1)?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        check_width(&rec, width, i + 2)?;
        out.push(parse_row(schema, &rec, i + 2)?);
    }
    Ok(out)
}

/// Reads a dataset from a CSV with `p + q` input columns and a final response column.
pub fn read_dataset<R: Read>(schema: &InputSchema, r: R) -> Result<Dataset> {
    let width = schema.p() + schema.q() + 1;
    let mut rdr = reader(r);
    check_width(rdr.headers()?, width, 1)?;
    let mut pts = Vec::new();
    let mut y = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        check_width(&rec, width, i + 2)?;
        pts.push(parse_row(schema, &rec, i + 2)?);
        let cell = &rec[width - 1];
        y.push(cell.parse().map_err(|_| Error::Parse(format!("line {}: bad response `{cell}`", i + 2)))?);
    }
    Dataset::new(schema.clone(), pts, y)
}

pub fn read_dataset_file(schema: &InputSchema, path: &Path) -> Result<Dataset> {
    read_dataset(schema, File::open(path)?)
}

/// Writes a dataset in native units with level labels.
pub fn write_dataset<W: Write>(data: &Dataset, w: W) -> Result<()> {
    let schema = data.schema();
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = schema.column_names();
    header.push("y".into());
    wtr.write_record(&header)?;
    for (p, y) in data.points().iter().zip(data.y()) {
        let mut row: Vec<String> = p.x.iter().map(|v| v.to_string()).collect();
        row.extend(p.t.iter().zip(&schema.qualitative).map(|(l, f)| f.levels[l - 1].clone()));
        row.push(y.to_string());
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Writes a unit-cube design: one column per input, 1-based levels, seed in a comment line.
pub fn write_design<W: Write>(design: &Design, schema: &InputSchema, mut w: W) -> Result<()> {
    writeln!(w, "# seed={}", design.seed)?;
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(schema.column_names())?;
    for (x, t) in design.x.iter().zip(&design.t) {
        let row: Vec<String> = x.iter().map(|v| v.to_string()).chain(t.iter().map(|l| l.to_string())).collect();
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Reads a design written by [`write_design`].
pub fn read_design<R: Read>(schema: &InputSchema, r: R) -> Result<Design> {
    let mut buf = BufReader::new(r);
    let mut first = String::new();
    buf.read_line(&mut first)?;
    let seed = first
        .trim()
        .strip_prefix("# seed=")
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Parse("design file must start with `# seed=<u64>`".into()))?;
    let pts = read_points(&schema.unit_cube(), buf)?;
    let x: Vec<Vec<f64>> = pts.iter().map(|p| p.x.clone()).collect();
    let score = crate::doe::min_pairwise_distance(&x);
    Ok(Design { x, t: pts.into_iter().map(|p| p.t).collect(), seed, score })
}

pub fn write_predictions<W: Write>(preds: &[Prediction], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["mean", "variance"])?;
    for p in preds {
        wtr.write_record([p.mean.to_string(), p.variance.to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}

const MODEL_FORMAT: &str = "lvgp-model";
const MODEL_VERSION: u32 = 1;

/// On-disk form of a fitted model. Reloading refactorizes the correlation
/// matrix at the recorded jitter, which reproduces predictions bit for bit.
#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    config: KernelConfig,
    packed: Vec<f64>,
    jitter: f64,
    nll: f64,
    mu: f64,
    sigma2: f64,
    data: Dataset,
    diagnostics: Option<FitDiagnostics>,
}

pub fn write_model<W: Write>(model: &FittedModel, w: W) -> Result<()> {
    let file = ModelFile {
        format: MODEL_FORMAT.into(),
        version: MODEL_VERSION,
        config: *model.config(),
        packed: model.packed().to_vec(),
        jitter: model.jitter(),
        nll: model.nll(),
        mu: model.mu(),
        sigma2: model.sigma2(),
        data: model.training_data().clone(),
        diagnostics: model.diagnostics().cloned(),
    };
    serde_json::to_writer_pretty(w, &file)?;
    Ok(())
}

pub fn read_model<R: Read>(r: R) -> Result<FittedModel> {
    let file: ModelFile = serde_json::from_reader(r)?;
    if file.format != MODEL_FORMAT || file.version != MODEL_VERSION {
        return Err(Error::Parse(format!("unsupported model file {} v{}", file.format, file.version)));
    }
    let mut model = FittedModel::from_packed(&file.data, &file.config, file.packed, Some(file.jitter))?;
    if model.nll().to_bits() != file.nll.to_bits() {
        return Err(Error::Parse(format!(
            "model file is inconsistent: stored nll {} but the data give {}",
            file.nll,
            model.nll()
        )));
    }
    model.diagnostics = file.diagnostics;
    Ok(model)
}

pub fn save_model(model: &FittedModel, path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(File::create(path)?);
    write_model(model, &mut f)?;
    f.flush()?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<FittedModel> {
    read_model(BufReader::new(File::open(path)?))
}
