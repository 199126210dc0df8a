//! File formats and run configuration.
//!
//! Patterns are CSV with header `pattern_id,x,y[,label]` (`x1..xd` for other
//! dimensions). A row whose coordinate cells are all blank declares a pattern
//! with no points. Results are JSON with floats written to 17 significant
//! digits, plus a long-format CSV for plotting.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::{
    run_experiment, sweep_k, sweep_sigma, ExperimentResult, ExperimentSpec, KSweep, SigmaSweep,
};
use crate::intensity::IntensityEstimate;
use crate::pattern::{LabeledPattern, PointPattern, Window};

/// Margin added on each side of an inferred bounding window, as a fraction of
/// the side length.
pub const BOUNDING_MARGIN: f64 = 0.01;

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// One pattern as read from CSV, before a window is attached.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternRecord {
    pub id: String,
    pub dim: usize,
    /// Flat coordinates, `dim` per point.
    pub coords: Vec<f64>,
    pub label: Option<usize>,
}

impl PatternRecord {
    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }
}

fn coordinate_columns(headers: &csv::StringRecord) -> Result<(Vec<usize>, Option<usize>)> {
    let names: Vec<&str> = headers.iter().map(str::trim).collect();
    let parse_err = |message: String| Error::Parse { line: 1, message };
    if names.first() != Some(&"pattern_id") {
        return Err(parse_err(format!(
            "header must start with pattern_id, got {:?}",
            headers.iter().collect::<Vec<_>>()
        )));
    }
    let label = names.iter().position(|n| *n == "label");
    let rest: Vec<&str> = names[1..]
        .iter()
        .copied()
        .filter(|n| *n != "label")
        .collect();
    let expected: Vec<String> = if rest == ["x", "y"] {
        vec!["x".into(), "y".into()]
    } else {
        (1..=rest.len()).map(|i| format!("x{i}")).collect()
    };
    if rest.is_empty() || rest != expected.iter().map(String::as_str).collect::<Vec<_>>() {
        return Err(parse_err(format!(
            "coordinate columns must be x,y or x1..xd, got {rest:?}"
        )));
    }
    let cols = rest
        .iter()
        .map(|n| names.iter().position(|m| m == n).expect("taken from names"))
        .collect();
    Ok((cols, label))
}

/// Reads patterns grouped by `pattern_id`, in order of first appearance.
pub fn read_pattern_records(path: &Path) -> Result<Vec<PatternRecord>> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    read_pattern_records_from(file)
}

/// [`read_pattern_records`] over any reader.
pub fn read_pattern_records_from<R: std::io::Read>(reader: R) -> Result<Vec<PatternRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let headers = rdr.headers().map_err(csv_err)?.clone();
    let (cols, label_col) = coordinate_columns(&headers)?;
    let dim = cols.len();
    let mut out: Vec<PatternRecord> = Vec::new();
    let mut index = std::collections::HashMap::new();
    for row in rdr.records() {
        let row = row.map_err(csv_err)?;
        let line = row.position().map_or(0, |p| p.line());
        let err = |message: String| Error::Parse { line, message };
        if row.len() != headers.len() {
            return Err(err(format!(
                "expected {} fields, got {}",
                headers.len(),
                row.len()
            )));
        }
        let id = row[0].trim().to_string();
        if id.is_empty() {
            return Err(err("empty pattern_id".into()));
        }
        let cells: Vec<&str> = cols.iter().map(|&c| row[c].trim()).collect();
        let point = if cells.iter().all(|c| c.is_empty()) {
            None
        } else {
            let mut p = Vec::with_capacity(dim);
            for c in &cells {
                let v: f64 = c
                    .parse()
                    .map_err(|_| err(format!("coordinate {c:?} is not a number")))?;
                if !v.is_finite() {
                    return Err(err(format!("coordinate {c:?} is not finite")));
                }
                p.push(v);
            }
            Some(p)
        };
        let label = match label_col.map(|c| row[c].trim()) {
            None | Some("") => None,
            Some(s) => Some(
                s.parse::<usize>()
                    .map_err(|_| err(format!("label {s:?} is not a nonnegative integer")))?,
            ),
        };
        let slot = *index.entry(id.clone()).or_insert_with(|| {
            out.push(PatternRecord {
                id: id.clone(),
                dim,
                coords: Vec::new(),
                label,
            });
            out.len() - 1
        });
        let rec = &mut out[slot];
        if rec.label != label {
            return Err(err(format!(
                "pattern {id} has inconsistent labels {:?} and {label:?}",
                rec.label
            )));
        }
        if let Some(p) = point {
            rec.coords.extend(p);
        }
    }
    Ok(out)
}

fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    Error::Parse {
        line,
        message: e.to_string(),
    }
}

/// Attaches `window` (or the 1%-margin bounding box of every point) to the
/// records.
pub fn to_patterns(
    records: &[PatternRecord],
    window: Option<&Window>,
) -> Result<Vec<PointPattern>> {
    let window = match window {
        Some(w) => w.clone(),
        None => bounding_window(records.iter())?,
    };
    records
        .iter()
        .map(|r| {
            window.check_dim(r.dim)?;
            PointPattern::from_flat(window.clone(), r.coords.clone())
        })
        .collect()
}

/// The bounding box of every point in `records`, widened by 1% per side.
pub fn bounding_window<'a>(records: impl Iterator<Item = &'a PatternRecord>) -> Result<Window> {
    let records: Vec<&PatternRecord> = records.collect();
    let points = records.iter().flat_map(|r| r.coords.chunks_exact(r.dim));
    Window::bounding(points, BOUNDING_MARGIN)
}

/// Like [`to_patterns`] but every record must carry a label.
pub fn to_labeled(
    records: &[PatternRecord],
    window: Option<&Window>,
) -> Result<Vec<LabeledPattern>> {
    let patterns = to_patterns(records, window)?;
    records
        .iter()
        .zip(patterns)
        .map(|(r, p)| match r.label {
            Some(l) => Ok(LabeledPattern::new(p, l)),
            None => Err(Error::Config(format!("pattern {} has no label", r.id))),
        })
        .collect()
}

/// Reads labelled patterns sharing `window` (inferred when `None`).
pub fn read_patterns(path: &Path, window: Option<&Window>) -> Result<Vec<LabeledPattern>> {
    to_labeled(&read_pattern_records(path)?, window)
}

/// Creates `path` for writing, making missing parent directories.
fn create(path: &Path) -> Result<File> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    File::create(path).map_err(|e| io_err(path, e))
}

/// Writes patterns in the format read by [`read_pattern_records`].
pub fn write_patterns<'a>(
    path: &Path,
    patterns: impl IntoIterator<Item = (String, &'a PointPattern, Option<usize>)>,
) -> Result<()> {
    let file = create(path)?;
    write_patterns_to(BufWriter::new(file), patterns).map_err(|e| match e {
        Error::Io { source, .. } => io_err(path, source),
        other => other,
    })
}

/// [`write_patterns`] over any writer.
pub fn write_patterns_to<'a, W: Write>(
    writer: W,
    patterns: impl IntoIterator<Item = (String, &'a PointPattern, Option<usize>)>,
) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header_written = false;
    let mut labelled = None;
    for (id, p, label) in patterns {
        if !header_written {
            let mut header = vec!["pattern_id".to_string()];
            header.extend(coordinate_names(p.dim()));
            if label.is_some() {
                header.push("label".into());
            }
            wtr.write_record(&header).map_err(csv_write_err)?;
            header_written = true;
            labelled = Some(label.is_some());
        }
        if labelled != Some(label.is_some()) {
            return Err(Error::invalid(
                "either every pattern has a label or none does",
            ));
        }
        let label_cell = label.map(|l| l.to_string());
        if p.is_empty() {
            let mut row = vec![id.clone()];
            row.extend(std::iter::repeat_n(String::new(), p.dim()));
            row.extend(label_cell.clone());
            wtr.write_record(&row).map_err(csv_write_err)?;
        }
        for pt in p.iter() {
            let mut row = vec![id.clone()];
            row.extend(pt.iter().map(|v| format_f64(*v)));
            row.extend(label_cell.clone());
            wtr.write_record(&row).map_err(csv_write_err)?;
        }
    }
    if !header_written {
        wtr.write_record(["pattern_id", "x", "y", "label"])
            .map_err(csv_write_err)?;
    }
    wtr.flush().map_err(|e| Error::Io {
        path: PathBuf::new(),
        source: e,
    })
}

fn csv_write_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::Io {
            path: PathBuf::new(),
            source,
        },
        other => Error::Invariant(format!("csv writer: {other:?}")),
    }
}

fn coordinate_names(dim: usize) -> Vec<String> {
    if dim == 2 {
        vec!["x".into(), "y".into()]
    } else {
        (1..=dim).map(|i| format!("x{i}")).collect()
    }
}

/// Formats `v` with 17 significant digits, which round-trips every `f64`.
/// Positional notation is used for moderate magnitudes and exponent notation
/// otherwise.
pub fn format_f64(v: f64) -> String {
    if v == 0.0 {
        return if v.is_sign_negative() {
            "-0.0".into()
        } else {
            "0.0".into()
        };
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let sci = format!("{v:.16e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-5..17).contains(&exp) {
        return sci;
    }
    let (sign, mantissa) = match mantissa.strip_prefix('-') {
        Some(m) => ("-", m),
        None => ("", mantissa),
    };
    let digits: String = mantissa.chars().filter(|c| *c != '.').collect();
    let body = if exp < 0 {
        format!("0.{}{}", "0".repeat((-exp - 1) as usize), digits)
    } else {
        let split = exp as usize + 1;
        let frac = &digits[split..];
        format!(
            "{}.{}",
            &digits[..split],
            if frac.is_empty() { "0" } else { frac }
        )
    };
    format!("{sign}{body}")
}

/// JSON formatter that pretty-prints and writes floats with [`format_f64`].
struct RoundTripFormatter<'a> {
    inner: serde_json::ser::PrettyFormatter<'a>,
}

impl serde_json::ser::Formatter for RoundTripFormatter<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()> {
        if value.is_finite() {
            writer.write_all(format_f64(value).as_bytes())
        } else {
            writer.write_all(b"null")
        }
    }

    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.inner.begin_array(w)
    }

    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.inner.end_array(w)
    }

    fn begin_array_value<W: ?Sized + Write>(
        &mut self,
        w: &mut W,
        first: bool,
    ) -> std::io::Result<()> {
        self.inner.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.inner.end_array_value(w)
    }

    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.inner.begin_object(w)
    }

    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.inner.end_object(w)
    }

    fn begin_object_key<W: ?Sized + Write>(
        &mut self,
        w: &mut W,
        first: bool,
    ) -> std::io::Result<()> {
        self.inner.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.inner.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.inner.end_object_value(w)
    }
}

/// Serializes `value` as pretty JSON with round-trip exact floats.
pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let fmt = RoundTripFormatter {
        inner: serde_json::ser::PrettyFormatter::with_indent(b"  "),
    };
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, fmt);
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

/// Writes `value` as JSON to `path`.
pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = to_json_string(value)?;
    create(path)?
        .write_all(text.as_bytes())
        .map_err(|e| io_err(path, e))
}

/// Reads a JSON document from `path`, rejecting it with a config error when it
/// does not match `T`.
pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// Path of the CSV written next to a JSON result.
pub fn companion_csv(path: &Path) -> PathBuf {
    path.with_extension("csv")
}

/// A table of `(label columns..., replication, error)` rows.
fn write_long_csv(path: &Path, header: &[&str], rows: Vec<(Vec<String>, &[f64])>) -> Result<()> {
    let file = create(path)?;
    let mut wtr = csv::Writer::from_writer(BufWriter::new(file));
    let mut full: Vec<&str> = header.to_vec();
    full.extend(["replication", "error"]);
    let wrap = |e: csv::Error| match csv_write_err(e) {
        Error::Io { source, .. } => io_err(path, source),
        other => other,
    };
    wtr.write_record(&full).map_err(wrap)?;
    for (labels, rates) in rows {
        for (rep, rate) in rates.iter().enumerate() {
            let mut row = labels.clone();
            row.push(rep.to_string());
            row.push(format_f64(*rate));
            wtr.write_record(&row).map_err(wrap)?;
        }
    }
    wtr.flush().map_err(|e| io_err(path, e))
}

/// Writes an experiment result as JSON plus a `classifier,replication,error`
/// CSV next to it. Refuses results whose rate lists do not match the
/// replication count.
pub fn write_result(result: &ExperimentResult, path: &Path) -> Result<()> {
    result.validate()?;
    write_json(result, path)?;
    let rows = result
        .results
        .iter()
        .map(|(id, r)| (vec![id.to_string()], r.rates.as_slice()))
        .collect();
    write_long_csv(&companion_csv(path), &["classifier"], rows)
}

pub fn read_result(path: &Path) -> Result<ExperimentResult> {
    let result: ExperimentResult = read_json(path)?;
    result.validate()?;
    Ok(result)
}

pub fn write_k_sweep(sweep: &KSweep, path: &Path) -> Result<()> {
    sweep.validate()?;
    write_json(sweep, path)?;
    let rows = sweep
        .rows
        .iter()
        .map(|r| {
            (
                vec![r.classifier.to_string(), r.k.to_string()],
                r.rates.as_slice(),
            )
        })
        .collect();
    write_long_csv(&companion_csv(path), &["classifier", "k"], rows)
}

pub fn write_sigma_sweep(sweep: &SigmaSweep, path: &Path) -> Result<()> {
    sweep.validate()?;
    write_json(sweep, path)?;
    let classes = sweep.rows.first().map_or(0, |r| r.sigmas.len());
    let names: Vec<String> = (0..classes).map(|c| format!("sigma{c}")).collect();
    let header: Vec<&str> = names.iter().map(String::as_str).collect();
    let rows = sweep
        .rows
        .iter()
        .map(|r| {
            (
                r.sigmas.iter().map(|s| format_f64(*s)).collect(),
                r.rates.as_slice(),
            )
        })
        .collect();
    write_long_csv(&companion_csv(path), &header, rows)
}

/// Writes `(x, y, lambda_hat)` rows (`x1..xd` in other dimensions) of an
/// estimate on a regular grid with `nodes` points per axis.
pub fn write_intensity_grid(estimate: &IntensityEstimate, nodes: usize, path: &Path) -> Result<()> {
    let file = create(path)?;
    let mut wtr = csv::Writer::from_writer(BufWriter::new(file));
    let wrap = |e: csv::Error| match csv_write_err(e) {
        Error::Io { source, .. } => io_err(path, source),
        other => other,
    };
    let mut header = coordinate_names(estimate.window().dim());
    header.push("lambda_hat".into());
    wtr.write_record(&header).map_err(wrap)?;
    for (node, value) in estimate.on_grid(nodes) {
        let mut row: Vec<String> = node.iter().map(|v| format_f64(*v)).collect();
        row.push(format_f64(value));
        wtr.write_record(&row).map_err(wrap)?;
    }
    wtr.flush().map_err(|e| io_err(path, e))
}

/// What a bench run computes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BenchMode {
    Experiment,
    SweepK {
        k_list: Vec<usize>,
    },
    /// Each entry holds one bandwidth per class.
    SweepSigma {
        sigmas: Vec<Vec<f64>>,
    },
}

/// Configuration file of the `bench` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    pub experiment: ExperimentSpec,
    #[serde(default = "default_mode")]
    pub mode: BenchMode,
    /// Result JSON; the CSV goes next to it. Relative paths resolve against
    /// the directory of the config file.
    pub out: PathBuf,
}

fn default_mode() -> BenchMode {
    BenchMode::Experiment
}

/// Output of a bench run.
#[derive(Debug, Clone, PartialEq)]
pub enum BenchOutput {
    Experiment(ExperimentResult),
    SweepK(KSweep),
    SweepSigma(SigmaSweep),
}

/// Runs the computation of `config` without touching the filesystem.
pub fn run_bench(config: &BenchConfig) -> Result<BenchOutput> {
    match &config.mode {
        BenchMode::Experiment => run_experiment(&config.experiment).map(BenchOutput::Experiment),
        BenchMode::SweepK { k_list } => {
            sweep_k(&config.experiment, k_list).map(BenchOutput::SweepK)
        }
        BenchMode::SweepSigma { sigmas } => {
            sweep_sigma(&config.experiment, sigmas).map(BenchOutput::SweepSigma)
        }
    }
}

pub fn write_bench_output(output: &BenchOutput, path: &Path) -> Result<()> {
    match output {
        BenchOutput::Experiment(r) => write_result(r, path),
        BenchOutput::SweepK(s) => write_k_sweep(s, path),
        BenchOutput::SweepSigma(s) => write_sigma_sweep(s, path),
    }
}

/// Loads a bench config and resolves its output path; returns the config and
/// the absolute-or-config-relative output path.
pub fn load_bench_config(path: &Path) -> Result<(BenchConfig, PathBuf)> {
    let config: BenchConfig = read_json(path)?;
    let out = if config.out.is_absolute() {
        config.out.clone()
    } else {
        path.parent().unwrap_or(Path::new("")).join(&config.out)
    };
    Ok((config, out))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn format_round_trips() {
        for v in [
            0.1,
            1.0 / 3.0,
            0.083,
            123456.789,
            1e-7,
            -2.5e20,
            5e-324,
            f64::MAX,
            1.0,
            12345678901234567.0,
            -0.0,
        ] {
            let s = format_f64(v);
            let back: f64 = s.parse().unwrap();
            assert_eq!(back.to_bits(), v.to_bits(), "{v} -> {s}");
        }
        assert_eq!(format_f64(0.5), "0.50000000000000000");
        assert_eq!(format_f64(50.0), "50.000000000000000");
    }

    #[test]
    fn read_groups_rows() {
        let text = "pattern_id,x,y,label\na,0.1,0.2,1\na,0.3,0.4,1\nb,,,0\n";
        let recs = read_pattern_records_from(text.as_bytes()).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].coords, vec![0.1, 0.2, 0.3, 0.4]);
        assert_eq!(recs[0].label, Some(1));
        assert!(recs[1].is_empty());
    }

    #[test]
    fn header_only_is_empty() {
        let recs = read_pattern_records_from("pattern_id,x,y\n".as_bytes()).unwrap();
        assert!(recs.is_empty());
    }

    #[test]
    fn bad_number_reports_line() {
        let text = "pattern_id,x,y\na,0.1,0.2\na,zz,0.4\n";
        match read_pattern_records_from(text.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn inconsistent_label_names_id() {
        let text = "pattern_id,x,y,label\nq7,0.1,0.2,0\nq7,0.3,0.4,1\n";
        let err = read_pattern_records_from(text.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("q7"), "{err}");
    }

    #[test]
    fn three_dimensional_header() {
        let text = "pattern_id,x1,x2,x3\na,1,2,3\n";
        let recs = read_pattern_records_from(text.as_bytes()).unwrap();
        assert_eq!(recs[0].dim, 3);
        assert!(read_pattern_records_from("pattern_id,x,z\n".as_bytes()).is_err());
    }
}
