//! Text formats: parameter checkpoints, oracle fixtures and the metrics CSV.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::env::EncodingMode;
use crate::error::{Error, Result};
use crate::nn::{MlpSpec, ParamVector};
use crate::oracle::OracleSolution;

/// Column names shared by every metrics file.
pub const CSV_HEADER: &str = "seed,step,loss,proxy,eval_reward,diverged";

/// What a checkpoint parameterizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckpointKind {
    /// A Q-network over `encode(state)`.
    Q,
    /// A Whittle Q-network over `encode(state)` followed by the subsidy.
    SubsidizedQ,
    /// A Whittle index network.
    Index,
}

impl CheckpointKind {
    fn as_str(self) -> &'static str {
        match self {
            CheckpointKind::Q => "q",
            CheckpointKind::SubsidizedQ => "subsidized-q",
            CheckpointKind::Index => "index",
        }
    }
}

impl FromStr for CheckpointKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "q" => Ok(CheckpointKind::Q),
            "subsidized-q" => Ok(CheckpointKind::SubsidizedQ),
            "index" => Ok(CheckpointKind::Index),
            other => Err(Error::Parse(format!("unknown checkpoint kind {other:?}"))),
        }
    }
}

fn encoding_name(mode: EncodingMode) -> &'static str {
    match mode {
        EncodingMode::OneHot => "one-hot",
        EncodingMode::NormalizedScalar => "normalized-scalar",
        EncodingMode::TupleNormalized => "tuple-normalized",
    }
}

fn parse_encoding(s: &str) -> Result<EncodingMode> {
    match s {
        "one-hot" => Ok(EncodingMode::OneHot),
        "normalized-scalar" => Ok(EncodingMode::NormalizedScalar),
        "tuple-normalized" => Ok(EncodingMode::TupleNormalized),
        other => Err(Error::Parse(format!("unknown encoding {other:?}"))),
    }
}

/// Network parameters plus enough metadata to rebuild the network.
///
/// On disk: a `#` header line of `key=value` fields, the parameter count, then
/// one value per line in shortest round-trip form.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub kind: CheckpointKind,
    pub env: String,
    pub encoding: EncodingMode,
    pub spec: MlpSpec,
    pub params: ParamVector,
}

impl Checkpoint {
    pub fn to_text(&self) -> String {
        let mut widths = vec![self.spec.input_dim];
        widths.extend(&self.spec.hidden);
        widths.push(self.spec.output_dim);
        let mlp: Vec<String> = widths.iter().map(usize::to_string).collect();
        let mut out = format!(
            "# avgq-checkpoint kind={} env={} encoding={} mlp={}\n{}\n",
            self.kind.as_str(),
            self.env,
            encoding_name(self.encoding),
            mlp.join("-"),
            self.params.len()
        );
        for v in &self.params.0 {
            writeln!(out, "{v:?}").expect("write to string");
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .and_then(|l| l.strip_prefix("# avgq-checkpoint"))
            .ok_or_else(|| Error::Parse("missing checkpoint header".into()))?;
        let (mut kind, mut env, mut encoding, mut mlp) = (None, None, None, None);
        for field in header.split_whitespace() {
            let (k, v) = field.split_once('=').ok_or_else(|| Error::Parse(format!("bad header field {field:?}")))?;
            match k {
                "kind" => kind = Some(v.parse::<CheckpointKind>()?),
                "env" => env = Some(v.to_string()),
                "encoding" => encoding = Some(parse_encoding(v)?),
                "mlp" => {
                    let w: Vec<usize> = v
                        .split('-')
                        .map(|x| x.parse().map_err(|_| Error::Parse(format!("bad layer width {x:?}"))))
                        .collect::<Result<_>>()?;
                    if w.len() < 3 {
                        return Err(Error::Parse(format!("mlp needs at least three widths, got {v:?}")));
                    }
                    mlp = Some(MlpSpec::new(w[0], w[1..w.len() - 1].to_vec(), w[w.len() - 1])?);
                }
                _ => return Err(Error::Parse(format!("unknown header field {k:?}"))),
            }
        }
        let missing = |what: &str| Error::Parse(format!("checkpoint header lacks {what}"));
        let spec = mlp.ok_or_else(|| missing("mlp"))?;
        let count: usize = lines
            .next()
            .and_then(|l| l.trim().parse().ok())
            .ok_or_else(|| Error::Parse("missing parameter count".into()))?;
        let values: Vec<f64> = lines
            .filter(|l| !l.trim().is_empty())
            .map(|l| l.trim().parse::<f64>().map_err(|_| Error::Parse(format!("bad parameter value {l:?}"))))
            .collect::<Result<_>>()?;
        if values.len() != count {
            return Err(Error::DimensionMismatch { what: "checkpoint values", expected: count, got: values.len() });
        }
        if count != spec.num_params() {
            return Err(Error::DimensionMismatch { what: "checkpoint parameters", expected: spec.num_params(), got: count });
        }
        Ok(Self {
            kind: kind.ok_or_else(|| missing("kind"))?,
            env: env.ok_or_else(|| missing("env"))?,
            encoding: encoding.ok_or_else(|| missing("encoding"))?,
            spec,
            params: ParamVector(values),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}

/// Oracle solution as text: header, `beta`, `residual`, then one
/// `state V Q_0 .. Q_{A-1}` row per state.
pub fn oracle_fixture_text(env: &str, sol: &OracleSolution) -> String {
    let mut out = format!("# avgq-oracle env={env}\nbeta {:?}\nresidual {:?}\n", sol.beta, sol.residual);
    let actions = sol.q.first().map_or(0, Vec::len);
    let cols: Vec<String> = (0..actions).map(|u| format!("q{u}")).collect();
    writeln!(out, "state v {}", cols.join(" ")).expect("write to string");
    for (i, (v, q)) in sol.v.iter().zip(&sol.q).enumerate() {
        let qs: Vec<String> = q.iter().map(|x| format!("{x:?}")).collect();
        writeln!(out, "{i} {v:?} {}", qs.join(" ")).expect("write to string");
    }
    out
}

/// Values read back from an oracle fixture.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleFixture {
    pub env: String,
    pub beta: f64,
    pub v: Vec<f64>,
    pub q: Vec<Vec<f64>>,
}

fn header_env(line: Option<&str>, tag: &str) -> Result<String> {
    line.and_then(|l| l.strip_prefix(tag))
        .and_then(|rest| rest.trim().strip_prefix("env="))
        .map(str::to_string)
        .ok_or_else(|| Error::Parse(format!("missing {tag} header")))
}

fn parse_f64(s: &str) -> Result<f64> {
    s.parse().map_err(|_| Error::Parse(format!("bad number {s:?}")))
}

pub fn parse_oracle_fixture(text: &str) -> Result<OracleFixture> {
    let mut lines = text.lines();
    let env = header_env(lines.next(), "# avgq-oracle")?;
    let mut beta = None;
    let (mut v, mut q) = (Vec::new(), Vec::new());
    for line in lines {
        let cols: Vec<&str> = line.split_whitespace().collect();
        match cols.as_slice() {
            [] | ["state", ..] | ["residual", _] => {}
            ["beta", b] => beta = Some(parse_f64(b)?),
            [i, vi, qs @ ..] if !qs.is_empty() => {
                if i.parse::<usize>().ok() != Some(v.len()) {
                    return Err(Error::Parse(format!("out-of-order state row {line:?}")));
                }
                v.push(parse_f64(vi)?);
                q.push(qs.iter().map(|x| parse_f64(x)).collect::<Result<Vec<_>>>()?);
            }
            _ => return Err(Error::Parse(format!("unrecognized fixture line {line:?}"))),
        }
    }
    Ok(OracleFixture { env, beta: beta.ok_or_else(|| Error::Parse("fixture lacks beta".into()))?, v, q })
}

/// Whittle indices as text: header then `state lambda` rows.
pub fn whittle_fixture_text(env: &str, indices: &[f64]) -> String {
    let mut out = format!("# avgq-whittle env={env}\nstate lambda\n");
    for (k, l) in indices.iter().enumerate() {
        writeln!(out, "{k} {l:?}").expect("write to string");
    }
    out
}

pub fn parse_whittle_fixture(text: &str) -> Result<(String, Vec<f64>)> {
    let mut lines = text.lines();
    let env = header_env(lines.next(), "# avgq-whittle")?;
    let mut out = Vec::new();
    for line in lines {
        let cols: Vec<&str> = line.split_whitespace().collect();
        match cols.as_slice() {
            [] | ["state", "lambda"] => {}
            [k, l] if k.parse::<usize>().ok() == Some(out.len()) => out.push(parse_f64(l)?),
            _ => return Err(Error::Parse(format!("unrecognized fixture line {line:?}"))),
        }
    }
    Ok((env, out))
}

/// One metrics row. `eval_reward` is blank when no evaluation ran at this step.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub seed: u64,
    pub step: u64,
    pub loss: f64,
    pub proxy: f64,
    pub eval_reward: Option<f64>,
    pub diverged: bool,
    /// Extra Whittle columns, in the order of the file's extra header.
    pub extra: Vec<Option<f64>>,
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:?}")).unwrap_or_default()
}

impl MetricsRow {
    pub fn to_csv(&self) -> String {
        let mut line = format!(
            "{},{},{:?},{:?},{},{}",
            self.seed,
            self.step,
            self.loss,
            self.proxy,
            cell(self.eval_reward),
            u8::from(self.diverged)
        );
        for v in &self.extra {
            line.push(',');
            line.push_str(&cell(*v));
        }
        line
    }
}

/// Append-only CSV writer, flushed on demand.
pub struct MetricsWriter {
    out: std::io::BufWriter<std::fs::File>,
    path: std::path::PathBuf,
    columns: usize,
}

impl MetricsWriter {
    pub fn create(path: &Path, extra_columns: &[String]) -> Result<Self> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = Self { out: std::io::BufWriter::new(file), path: path.to_path_buf(), columns: extra_columns.len() };
        let mut header = CSV_HEADER.to_string();
        for c in extra_columns {
            header.push(',');
            header.push_str(c);
        }
        w.line(&header)?;
        Ok(w)
    }

    fn line(&mut self, s: &str) -> Result<()> {
        writeln!(self.out, "{s}").map_err(|e| Error::io(&self.path, e))
    }

    pub fn write(&mut self, row: &MetricsRow) -> Result<()> {
        if row.extra.len() != self.columns {
            return Err(Error::DimensionMismatch { what: "metrics columns", expected: self.columns, got: row.extra.len() });
        }
        self.line(&row.to_csv())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }
}
