//! Per-episode metrics CSV.
//!
//! Header: `episode,policy,seed,chosen_task,explored,u_<id>...,
//! target_loss_mean,cumulative_updates,wallclock_ms`, one `u_` column per
//! source task in registration order. Reals carry 9 significant digits.
//! `wallclock_ms` is the only column that varies between identical runs.

use std::io::Write;

use crate::error::{Error, Result};

pub const WALLCLOCK_COLUMN: &str = "wallclock_ms";

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub episode: u64,
    pub policy: String,
    pub seed: u64,
    pub chosen_task: String,
    pub explored: bool,
    /// `None` for baselines, which do not compute utilities.
    pub utilities: Option<Vec<f64>>,
    pub target_loss_mean: f64,
    pub cumulative_updates: u64,
    pub wallclock_ms: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsTable {
    pub sources: Vec<String>,
    pub rows: Vec<MetricsRow>,
}

pub fn header(sources: &[String]) -> Vec<String> {
    let mut cols: Vec<String> = ["episode", "policy", "seed", "chosen_task", "explored"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    cols.extend(sources.iter().map(|s| format!("u_{s}")));
    cols.extend(
        ["target_loss_mean", "cumulative_updates", WALLCLOCK_COLUMN]
            .iter()
            .map(|s| s.to_string()),
    );
    cols
}

/// Renders `x` with 9 significant digits, in the shortest of fixed or
/// exponent notation the way C's `%.9g` chooses, trailing zeros dropped.
pub fn format_real(x: f64) -> String {
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..9).contains(&exp) {
        let mantissa = trim_zeros(mantissa);
        return format!("{mantissa}e{exp}");
    }
    let decimals = (8 - exp).max(0) as usize;
    trim_zeros(&format!("{x:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Streams rows to `out`, one flushed line at a time.
pub struct MetricsWriter<W: Write> {
    out: csv::Writer<W>,
    sources: Vec<String>,
}

impl<W: Write> MetricsWriter<W> {
    pub fn new(out: W, sources: &[String]) -> Result<Self> {
        let mut out = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        out.write_record(header(sources))?;
        out.flush()?;
        Ok(Self {
            out,
            sources: sources.to_vec(),
        })
    }

    pub fn write_row(&mut self, row: &MetricsRow) -> Result<()> {
        let n = self.sources.len();
        let mut fields = vec![
            row.episode.to_string(),
            row.policy.clone(),
            row.seed.to_string(),
            row.chosen_task.clone(),
            u8::from(row.explored).to_string(),
        ];
        match &row.utilities {
            Some(u) if u.len() == n => fields.extend(u.iter().map(|&v| format_real(v))),
            Some(u) => {
                return Err(Error::Metrics(format!(
                    "episode {} has {} utilities for {n} source columns",
                    row.episode,
                    u.len()
                )))
            }
            None => fields.extend(std::iter::repeat_n(String::new(), n)),
        }
        fields.push(format_real(row.target_loss_mean));
        fields.push(row.cumulative_updates.to_string());
        fields.push(row.wallclock_ms.to_string());
        self.out.write_record(&fields)?;
        self.out.flush()?;
        Ok(())
    }

    pub fn into_inner(self) -> Result<W> {
        self.out
            .into_inner()
            .map_err(|e| Error::Metrics(format!("flush failed: {}", e.error())))
    }
}

pub fn write_metrics_csv(sources: &[String], rows: &[MetricsRow]) -> Result<Vec<u8>> {
    let mut w = MetricsWriter::new(Vec::new(), sources)?;
    for row in rows {
        w.write_row(row)?;
    }
    w.into_inner()
}

pub fn read_metrics_csv(bytes: &[u8]) -> Result<MetricsTable> {
    let mut rdr = csv::ReaderBuilder::new().from_reader(bytes);
    let head: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let fixed_front = ["episode", "policy", "seed", "chosen_task", "explored"];
    let fixed_back = ["target_loss_mean", "cumulative_updates", WALLCLOCK_COLUMN];
    if head.len() < fixed_front.len() + fixed_back.len() {
        return Err(Error::Metrics(format!("header too short: {head:?}")));
    }
    let n = head.len() - fixed_front.len() - fixed_back.len();
    let sources: Vec<String> = head[fixed_front.len()..fixed_front.len() + n]
        .iter()
        .map(|c| {
            c.strip_prefix("u_")
                .map(str::to_string)
                .ok_or_else(|| Error::Metrics(format!("unexpected column `{c}`")))
        })
        .collect::<Result<_>>()?;
    if head != header(&sources) {
        return Err(Error::Metrics(format!("unexpected header {head:?}")));
    }
    let num = |s: &str, col: &str| -> Result<f64> {
        s.parse()
            .map_err(|_| Error::Metrics(format!("bad {col} value `{s}`")))
    };
    let int = |s: &str, col: &str| -> Result<u64> {
        s.parse()
            .map_err(|_| Error::Metrics(format!("bad {col} value `{s}`")))
    };
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let f: Vec<&str> = rec.iter().collect();
        let u = &f[5..5 + n];
        let utilities = if u.iter().all(|s| s.is_empty()) {
            None
        } else {
            Some(u.iter().map(|s| num(s, "utility")).collect::<Result<Vec<_>>>()?)
        };
        rows.push(MetricsRow {
            episode: int(f[0], "episode")?,
            policy: f[1].to_string(),
            seed: int(f[2], "seed")?,
            chosen_task: f[3].to_string(),
            explored: match f[4] {
                "0" => false,
                "1" => true,
                other => return Err(Error::Metrics(format!("bad explored value `{other}`"))),
            },
            utilities,
            target_loss_mean: num(f[5 + n], "target_loss_mean")?,
            cumulative_updates: int(f[6 + n], "cumulative_updates")?,
            wallclock_ms: int(f[7 + n], WALLCLOCK_COLUMN)?,
        });
    }
    Ok(MetricsTable { sources, rows })
}

/// The CSV text with the wall-clock column removed, for determinism checks.
pub fn without_wallclock(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes)
        .lines()
        .map(|line| match line.rsplit_once(',') {
            Some((rest, _)) => rest,
            None => line,
        })
        .collect::<Vec<_>>()
        .join("\n")
}
