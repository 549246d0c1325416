//! File formats: model documents, datasets, layouts and comment headers.
//!
//! Model files are pretty-printed JSON in which every float is written with
//! 17 significant digits, so a save/load cycle reproduces each value bit
//! for bit. Delimited exports start with `#` comment lines carrying the
//! tool version, the resolved configuration and the seed.

use std::fmt::Write as _;
use std::io::{self, BufRead, Write};
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::crbm::{ConditionVector, ConditioningLayout, CrbmParams, LabeledState};
use crate::error::{Error, Result};
use crate::oracle::{DetectorAngle, Outcome, TwoQubitState};
use crate::training::{Dataset, TrainingConfig, TrainingHistory, Trial};

pub const TOOL_NAME: &str = "bellcrbm";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const MODEL_FORMAT: &str = "bellcrbm-model";
pub const MODEL_VERSION: u32 = 1;
pub const DATASET_COLUMNS: &str = "state_idx,a_idx,b_idx,x_A,x_B";

/// Pretty JSON with floats rendered as `d.dddddddddddddddde±x`.
struct Sig17Formatter<'a>(PrettyFormatter<'a>);

impl Formatter for Sig17Formatter<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        if !value.is_finite() {
            return Err(io::Error::new(io::ErrorKind::InvalidData, format!("non-finite value {value}")));
        }
        write!(writer, "{value:.16e}")
    }
    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }
    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }
    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }
    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }
    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }
    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

/// Serializes `value` as pretty JSON with 17-significant-digit floats.
/// Non-finite floats are an error.
pub fn to_json_sig17<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Sig17Formatter(PrettyFormatter::new()));
    value.serialize(&mut ser)?;
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

/// Provenance of a trained parameter set.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Lineage {
    pub seed: u64,
    /// Restart that produced the parameters; its streams are derived from `seed`.
    pub attempt: usize,
    pub config: Option<TrainingConfig>,
    /// Preset name, layout file, or dataset path the model was trained on.
    pub source: String,
    pub epochs_run: usize,
    pub final_mean_tv: Option<f64>,
    pub converged: bool,
}

/// Versioned model document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub tool_version: String,
    pub layout: ConditioningLayout,
    pub params: CrbmParams,
    pub lineage: Lineage,
}

impl ModelFile {
    pub fn new(layout: ConditioningLayout, params: CrbmParams, lineage: Lineage) -> Result<Self> {
        params.validate()?;
        params.check_layout(&layout)?;
        Ok(Self {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            tool_version: TOOL_VERSION.into(),
            layout,
            params,
            lineage,
        })
    }

    pub fn to_text(&self) -> Result<String> {
        let mut text = to_json_sig17(self)?;
        text.push('\n');
        Ok(text)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        if file.format != MODEL_FORMAT {
            return Err(Error::Parse(format!("not a model file (format '{}')", file.format)));
        }
        if file.version != MODEL_VERSION {
            return Err(Error::Parse(format!(
                "unsupported model file version {} (expected {MODEL_VERSION})",
                file.version
            )));
        }
        file.layout.validate()?;
        file.params.validate()?;
        file.params.check_layout(&file.layout)?;
        Ok(file)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

/// Leading `#` lines of every delimited export.
#[derive(Clone, Debug, PartialEq)]
pub struct FileHeader {
    pub command: String,
    pub seed: Option<u64>,
    /// Resolved configuration as a JSON value.
    pub config: serde_json::Value,
}

impl FileHeader {
    pub fn new<C: Serialize>(command: &str, seed: Option<u64>, config: &C) -> Result<Self> {
        Ok(Self {
            command: command.into(),
            seed,
            config: serde_json::to_value(config)?,
        })
    }

    pub fn render(&self) -> String {
        let mut out = format!("# {TOOL_NAME} {TOOL_VERSION}\n# command: {}\n", self.command);
        match self.seed {
            Some(s) => {
                let _ = writeln!(out, "# seed: {s}");
            }
            None => out.push_str("# seed: none\n"),
        }
        let _ = writeln!(out, "# config: {}", self.config);
        out
    }
}

/// Prepends the header comment to a delimited body.
pub fn with_header(header: &FileHeader, body: &str) -> String {
    let mut out = header.render();
    out.push_str(body);
    out
}

/// Strips leading `#` lines.
pub fn strip_comments(text: &str) -> impl Iterator<Item = &str> {
    text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty())
}

/// Dataset read back from disk.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetFile {
    pub dataset: Dataset,
    /// Layout recorded in the header, if any.
    pub layout: Option<ConditioningLayout>,
}

pub fn write_dataset<W: Write>(mut w: W, dataset: &Dataset, layout: &ConditioningLayout, header: &FileHeader) -> Result<()> {
    w.write_all(header.render().as_bytes())?;
    writeln!(w, "# layout: {}", serde_json::to_string(layout)?)?;
    writeln!(w, "# dataset_seed: {}", dataset.seed)?;
    writeln!(w, "# oracle: {}", dataset.oracle)?;
    writeln!(w, "{DATASET_COLUMNS}")?;
    for t in &dataset.trials {
        writeln!(
            w,
            "{},{},{},{:+},{:+}",
            t.condition.state,
            t.condition.a,
            t.condition.b,
            t.outcome.0.sign(),
            t.outcome.1.sign()
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset<R: BufRead>(r: R) -> Result<DatasetFile> {
    let mut layout = None;
    let mut seed = 0;
    let mut oracle = String::from("unknown");
    let mut trials = Vec::new();
    let mut saw_columns = false;
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        let parse_err = |msg: String| Error::Parse(format!("dataset line {}: {msg}", lineno + 1));
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            let comment = comment.trim();
            if let Some(json) = comment.strip_prefix("layout:") {
                layout = Some(serde_json::from_str::<ConditioningLayout>(json.trim()).map_err(|e| parse_err(e.to_string()))?);
            } else if let Some(s) = comment.strip_prefix("dataset_seed:") {
                seed = s.trim().parse().map_err(|_| parse_err(format!("bad seed '{}'", s.trim())))?;
            } else if let Some(s) = comment.strip_prefix("oracle:") {
                oracle = s.trim().to_string();
            }
            continue;
        }
        if !saw_columns {
            if line.replace(' ', "") != DATASET_COLUMNS {
                return Err(parse_err(format!("expected column header '{DATASET_COLUMNS}'")));
            }
            saw_columns = true;
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 5 {
            return Err(parse_err(format!("expected 5 fields, found {}", fields.len())));
        }
        let idx = |s: &str| s.parse::<usize>().map_err(|_| parse_err(format!("bad index '{s}'")));
        let outcome = |s: &str| {
            s.parse::<i32>()
                .map_err(|_| parse_err(format!("bad outcome '{s}'")))
                .and_then(|x| Outcome::from_sign(x).map_err(|_| parse_err(format!("outcome must be +1 or -1, got '{s}'"))))
        };
        trials.push(Trial {
            condition: ConditionVector::new(idx(fields[1])?, idx(fields[2])?, idx(fields[0])?),
            outcome: (outcome(fields[3])?, outcome(fields[4])?),
        });
    }
    if !saw_columns {
        return Err(Error::Parse("dataset has no column header".into()));
    }
    let dataset = Dataset { trials, seed, oracle };
    if let Some(l) = &layout {
        l.validate()?;
        dataset.check_layout(l)?;
    }
    Ok(DatasetFile { dataset, layout })
}

pub fn history_csv(history: &TrainingHistory, header: &FileHeader) -> String {
    with_header(header, &history.to_csv())
}

/// A prepared state in a layout file: a known name, or explicit amplitudes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateSpec {
    pub label: String,
    /// `[re, im]` over `(++, +−, −+, −−)`; normalized on load.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitudes: Option<[[f64; 2]; 4]>,
}

/// User-supplied layout: angles in radians plus states, optionally with a
/// hidden-unit count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayoutFile {
    pub detector_a: Vec<f64>,
    pub detector_b: Vec<f64>,
    pub states: Vec<StateSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_hidden: Option<usize>,
}

/// Named states accepted in layout files.
pub fn named_state(name: &str) -> Option<TwoQubitState> {
    use Outcome::{Minus, Plus};
    Some(match name {
        "singlet" => TwoQubitState::singlet(),
        "++" => TwoQubitState::product(Plus, Plus),
        "+-" => TwoQubitState::product(Plus, Minus),
        "-+" => TwoQubitState::product(Minus, Plus),
        "--" => TwoQubitState::product(Minus, Minus),
        _ => return None,
    })
}

impl LayoutFile {
    pub fn from_text(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    pub fn to_layout(&self) -> Result<ConditioningLayout> {
        let states = self
            .states
            .iter()
            .map(|s| {
                let state = match s.amplitudes {
                    Some(amps) => TwoQubitState::normalized(amps.map(|[re, im]| Complex64::new(re, im)))?,
                    None => named_state(&s.label).ok_or_else(|| {
                        Error::InvalidInput(format!(
                            "state '{}' has no amplitudes and is not one of singlet, ++, +-, -+, --",
                            s.label
                        ))
                    })?,
                };
                Ok(LabeledState::new(s.label.clone(), state))
            })
            .collect::<Result<Vec<_>>>()?;
        let angles = |v: &[f64]| v.iter().copied().map(DetectorAngle).collect::<Vec<_>>();
        let layout = ConditioningLayout::new(angles(&self.detector_a), angles(&self.detector_b), states)?;
        if self.n_hidden == Some(0) {
            return Err(Error::InvalidInput("n_hidden must be >= 1".into()));
        }
        Ok(layout)
    }
}
