//! On-disk formats: pulse traces and group summaries (CSV), run manifests
//! and analysis reports (JSON), and plot-ready curve tables (CSV).
//!
//! Floats in CSV files are written with 17 significant digits so a
//! write/read cycle reproduces every value bit for bit.

use std::io::{self, BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::attack::AttackConfig;
use crate::config::RunConfig;
use crate::estimator::{BlockAnalysis, BlockVerdict, GroupStats, LinearFit, QuadratureAnalysis, Thresholds, VarianceUnit};
use crate::params::{Quadrature, SystemParams};
use crate::sim::PulseRecord;

pub const TRACE_HEADER: &str = "index,quadrature,atten_index,alice_value,bob_value_volts";
pub const SUMMARY_HEADER: &str = "quadrature,atten_index,ratio,count,s_v2,n_var_v2";

#[derive(Debug, thiserror::Error)]
pub enum TraceError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

type Result<T> = std::result::Result<T, TraceError>;

fn parse_err(line: u64, message: impl Into<String>) -> TraceError {
    TraceError::Parse {
        line,
        message: message.into(),
    }
}

/// Streams records to `W` as CSV.
pub struct TraceWriter<W: Write> {
    out: W,
    rows: u64,
}

impl<W: Write> TraceWriter<W> {
    pub fn new(mut out: W) -> Result<Self> {
        writeln!(out, "{TRACE_HEADER}")?;
        Ok(TraceWriter { out, rows: 0 })
    }

    pub fn write(&mut self, r: &PulseRecord) -> Result<()> {
        writeln!(
            self.out,
            "{},{},{},{:.16e},{:.16e}",
            r.index, r.quadrature, r.atten_index, r.alice_value, r.bob_value_volts
        )?;
        self.rows += 1;
        Ok(())
    }

    pub fn rows(&self) -> u64 {
        self.rows
    }

    pub fn finish(mut self) -> Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

/// Iterator over the records of a CSV trace. Errors carry the 1-based line
/// number of the offending row.
pub struct TraceReader<R: BufRead> {
    lines: io::Lines<R>,
    line: u64,
}

impl<R: BufRead> TraceReader<R> {
    pub fn new(input: R) -> Result<Self> {
        let mut lines = input.lines();
        match lines.next() {
            Some(Ok(h)) if h.trim_end() == TRACE_HEADER => Ok(TraceReader { lines, line: 1 }),
            Some(Ok(h)) => Err(parse_err(1, format!("expected header `{TRACE_HEADER}`, got `{h}`"))),
            Some(Err(e)) => Err(e.into()),
            None => Err(parse_err(1, "empty trace")),
        }
    }
}

fn parse_record(text: &str, line: u64) -> Result<PulseRecord> {
    let mut it = text.trim_end().split(',');
    let mut field = |name: &str| {
        it.next()
            .ok_or_else(|| parse_err(line, format!("missing column `{name}`")))
    };
    let index = field("index")?;
    let quadrature = field("quadrature")?;
    let atten_index = field("atten_index")?;
    let alice = field("alice_value")?;
    let bob = field("bob_value_volts")?;
    if it.next().is_some() {
        return Err(parse_err(line, "too many columns"));
    }
    let bad = |name: &str, v: &str| parse_err(line, format!("bad {name} `{v}`"));
    Ok(PulseRecord {
        index: index.parse().map_err(|_| bad("index", index))?,
        quadrature: quadrature.parse().map_err(|_| bad("quadrature", quadrature))?,
        atten_index: atten_index.parse().map_err(|_| bad("atten_index", atten_index))?,
        alice_value: alice.parse().map_err(|_| bad("alice_value", alice))?,
        bob_value_volts: bob.parse().map_err(|_| bad("bob_value_volts", bob))?,
    })
}

impl<R: BufRead> Iterator for TraceReader<R> {
    type Item = Result<PulseRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let text = match self.lines.next()? {
                Ok(t) => t,
                Err(e) => return Some(Err(e.into())),
            };
            self.line += 1;
            if text.trim().is_empty() {
                continue;
            }
            return Some(parse_record(&text, self.line));
        }
    }
}

pub fn write_trace<'r, W: Write>(records: impl IntoIterator<Item = &'r PulseRecord>, out: W) -> Result<W> {
    let mut w = TraceWriter::new(out)?;
    for r in records {
        w.write(r)?;
    }
    w.finish()
}

pub fn read_trace<R: BufRead>(input: R) -> Result<Vec<PulseRecord>> {
    TraceReader::new(input)?.collect()
}

/// Per-group statistics in volts² with the nominal ratio of each group.
pub fn write_group_summary<W: Write>(stats: &[GroupStats], ratios: &[f64], mut out: W) -> Result<W> {
    writeln!(out, "{SUMMARY_HEADER}")?;
    for g in stats {
        let ratio = ratios.get(g.atten_index).copied().unwrap_or(f64::NAN);
        writeln!(
            out,
            "{},{},{:.16e},{},{:.16e},{:.16e}",
            g.quadrature, g.atten_index, ratio, g.n, g.s, g.n_var
        )?;
    }
    out.flush()?;
    Ok(out)
}

/// Reads a group summary back as `(stats, ratios)`.
pub fn read_group_summary<R: BufRead>(input: R) -> Result<(Vec<GroupStats>, Vec<f64>)> {
    let mut lines = input.lines();
    match lines.next() {
        Some(Ok(h)) if h.trim_end() == SUMMARY_HEADER => {}
        Some(Ok(h)) => return Err(parse_err(1, format!("expected header `{SUMMARY_HEADER}`, got `{h}`"))),
        Some(Err(e)) => return Err(e.into()),
        None => return Err(parse_err(1, "empty summary")),
    }
    let mut stats = Vec::new();
    let mut ratios: Vec<Option<f64>> = Vec::new();
    for (i, text) in lines.enumerate() {
        let line = i as u64 + 2;
        let text = text?;
        if text.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = text.trim_end().split(',').collect();
        if cols.len() != 6 {
            return Err(parse_err(line, format!("expected 6 columns, got {}", cols.len())));
        }
        let bad = |name: &str, v: &str| parse_err(line, format!("bad {name} `{v}`"));
        let quadrature: Quadrature = cols[0].parse().map_err(|_| bad("quadrature", cols[0]))?;
        let atten_index: usize = cols[1].parse().map_err(|_| bad("atten_index", cols[1]))?;
        let ratio: f64 = cols[2].parse().map_err(|_| bad("ratio", cols[2]))?;
        let n: u64 = cols[3].parse().map_err(|_| bad("count", cols[3]))?;
        let s: f64 = cols[4].parse().map_err(|_| bad("s_v2", cols[4]))?;
        let n_var: f64 = cols[5].parse().map_err(|_| bad("n_var_v2", cols[5]))?;
        if ratios.len() <= atten_index {
            ratios.resize(atten_index + 1, None);
        }
        match ratios[atten_index] {
            Some(r) if r.to_bits() != ratio.to_bits() => {
                return Err(parse_err(line, format!("ratio {ratio} disagrees with {r} for level {atten_index}")))
            }
            _ => ratios[atten_index] = Some(ratio),
        }
        stats.push(GroupStats {
            atten_index,
            quadrature,
            n,
            s,
            n_var,
            unit: VarianceUnit::Volts2,
        });
    }
    let ratios = ratios
        .into_iter()
        .enumerate()
        .map(|(i, r)| r.ok_or_else(|| parse_err(0, format!("no group for level {i}"))))
        .collect::<Result<Vec<f64>>>()?;
    Ok((stats, ratios))
}

/// What produced a trace; written next to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub config_sha256: String,
    pub config: RunConfig,
    pub params: SystemParams,
    pub ratios: Vec<f64>,
    pub applied_ratios: Vec<f64>,
    pub attack: Option<AttackConfig>,
    pub thresholds: Thresholds,
    pub pulses: u64,
    pub files: Vec<String>,
}

impl Manifest {
    pub fn new(config: &RunConfig) -> std::result::Result<Self, crate::Error> {
        let run = config.resolve()?;
        Ok(Manifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: run.params.seed,
            config_sha256: config.hash_hex(),
            config: config.clone(),
            ratios: run.schedule.ratios().to_vec(),
            applied_ratios: (0..run.schedule.len()).map(|i| run.schedule.applied_ratio(i)).collect(),
            attack: config.attack.clone(),
            thresholds: run.thresholds,
            params: run.params,
            pulses: 0,
            files: Vec::new(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureFits {
    pub quadrature: Quadrature,
    /// Noise vs signal, volts².
    pub noise_vs_signal: Option<LinearFit>,
    /// Signal (volts²) vs nominal ratio.
    pub signal_vs_attenuation: Option<LinearFit>,
}

/// Analysis output: the block verdict plus the data behind it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub accepted: bool,
    pub verdict: BlockVerdict,
    pub thresholds: Thresholds,
    pub ratios: Vec<f64>,
    pub groups: Vec<GroupStats>,
    pub fits: Vec<QuadratureFits>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_sha256: Option<String>,
}

impl Report {
    pub fn from_analysis(a: &BlockAnalysis, thresholds: Thresholds, config_sha256: Option<String>) -> Self {
        let fits = [&a.x, &a.p]
            .iter()
            .map(|q| QuadratureFits {
                quadrature: q.verdict.quadrature,
                noise_vs_signal: q.noise_fit.clone(),
                signal_vs_attenuation: q.atten_fit.clone(),
            })
            .collect();
        Report {
            accepted: a.verdict.accepted,
            verdict: a.verdict.clone(),
            thresholds,
            ratios: a.x.ratios.clone(),
            groups: a.x.stats.iter().chain(&a.p.stats).copied().collect(),
            fits,
            config_sha256,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// Divisor that puts a quadrature's variances in SNU, or 1 when the noise
/// fit gave no usable intercept (values then stay in volts²).
fn unit_scale(q: &QuadratureAnalysis) -> (f64, &'static str) {
    match (&q.noise_fit, &q.stats_snu) {
        (Some(f), Some(_)) => (f.intercept, "SNU"),
        _ => (1.0, "V2"),
    }
}

/// Noise-vs-signal points with the fitted line, both quadratures.
pub fn write_noise_vs_signal<W: Write>(a: &BlockAnalysis, mut out: W) -> Result<W> {
    writeln!(out, "quadrature,atten_index,ratio,signal,noise,fitted_noise,residual,unit")?;
    for q in [&a.x, &a.p] {
        let (scale, unit) = unit_scale(q);
        for (i, g) in q.stats.iter().enumerate() {
            let (fitted, residual) = match &q.noise_fit {
                Some(f) => (f.predict(g.s) / scale, f.residuals[i] / scale),
                None => (f64::NAN, f64::NAN),
            };
            writeln!(
                out,
                "{},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{unit}",
                g.quadrature,
                g.atten_index,
                q.ratios[g.atten_index],
                g.s / scale,
                g.n_var / scale,
                fitted,
                residual
            )?;
        }
    }
    out.flush()?;
    Ok(out)
}

/// Signal-vs-nominal-ratio points with the fitted line, both quadratures.
pub fn write_signal_vs_attenuation<W: Write>(a: &BlockAnalysis, mut out: W) -> Result<W> {
    writeln!(out, "quadrature,atten_index,ratio,signal,fitted_signal,residual,unit")?;
    for q in [&a.x, &a.p] {
        let (scale, unit) = unit_scale(q);
        for (i, g) in q.stats.iter().enumerate() {
            let (fitted, residual) = match &q.atten_fit {
                Some(f) => (f.predict(q.ratios[g.atten_index]) / scale, f.residuals[i] / scale),
                None => (f64::NAN, f64::NAN),
            };
            writeln!(
                out,
                "{},{},{:.16e},{:.16e},{:.16e},{:.16e},{unit}",
                g.quadrature,
                g.atten_index,
                q.ratios[g.atten_index],
                g.s / scale,
                fitted,
                residual
            )?;
        }
    }
    out.flush()?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::{analyze_moments, group_stats};
    use crate::schedule::AttenuationSchedule;
    use crate::sim::{moments_from_records, simulate_block};
    use proptest::prelude::*;

    fn small_block() -> (Vec<PulseRecord>, AttenuationSchedule) {
        let p = SystemParams {
            n_per_group: 300,
            ..SystemParams::honest_default()
        };
        let s = AttenuationSchedule::geometric(4, 0.5, 1.0).unwrap();
        (simulate_block(&p, &s, None).unwrap(), s)
    }

    #[test]
    fn trace_round_trip_is_exact() {
        let (recs, _) = small_block();
        let bytes = write_trace(&recs, Vec::new()).unwrap();
        let text = String::from_utf8(bytes.clone()).unwrap();
        assert!(text.starts_with(TRACE_HEADER));
        let back = read_trace(&bytes[..]).unwrap();
        assert_eq!(back, recs);
        let again = write_trace(&back, Vec::new()).unwrap();
        assert_eq!(again, bytes);
    }

    #[test]
    fn malformed_row_is_named() {
        let text = format!("{TRACE_HEADER}\n0,X,1,0.5,0.25\n1,Q,1,0.5,0.25\n");
        match read_trace(text.as_bytes()) {
            Err(TraceError::Parse { line, message }) => {
                assert_eq!(line, 3);
                assert!(message.contains("quadrature"), "{message}");
            }
            other => panic!("{other:?}"),
        }
        let short = format!("{TRACE_HEADER}\n0,X,1,0.5\n");
        assert!(matches!(read_trace(short.as_bytes()), Err(TraceError::Parse { line: 2, .. })));
        assert!(matches!(read_trace(&b"a,b\n"[..]), Err(TraceError::Parse { line: 1, .. })));
    }

    #[test]
    fn summary_round_trip() {
        let (recs, s) = small_block();
        let m = moments_from_records(&recs, s.ratios()).unwrap();
        let stats = group_stats(&m).unwrap();
        let bytes = write_group_summary(&stats, s.ratios(), Vec::new()).unwrap();
        let (back, ratios) = read_group_summary(&bytes[..]).unwrap();
        assert_eq!(back, stats);
        assert_eq!(ratios, s.ratios());
    }

    #[test]
    fn report_round_trip_and_figures() {
        let (recs, s) = small_block();
        let m = moments_from_records(&recs, s.ratios()).unwrap();
        let t = Thresholds::default().scaled_for_group_size(300);
        let a = analyze_moments(&m, &t).unwrap();
        let rep = Report::from_analysis(&a, t, Some("ab".into()));
        let back = Report::from_json(&rep.to_json().unwrap()).unwrap();
        assert_eq!(back, rep);
        let json: serde_json::Value = serde_json::from_str(&rep.to_json().unwrap()).unwrap();
        for key in [
            "quadrature",
            "accepted",
            "r2_noise_signal",
            "r2_signal_atten",
            "max_residual_snu",
            "shot_noise_estimate_v2",
            "shot_noise_estimate_snu",
            "excess_noise_slope",
            "reject_reasons",
        ] {
            assert!(json["verdict"]["x"].get(key).is_some(), "{key}");
        }
        let ns = String::from_utf8(write_noise_vs_signal(&a, Vec::new()).unwrap()).unwrap();
        assert_eq!(ns.lines().count(), 1 + 2 * 4);
        let sa = String::from_utf8(write_signal_vs_attenuation(&a, Vec::new()).unwrap()).unwrap();
        assert_eq!(sa.lines().count(), 1 + 2 * 4);
    }

    #[test]
    fn manifest_has_no_clock_and_round_trips() {
        let c = RunConfig::honest_default();
        let m = Manifest::new(&c).unwrap();
        let text = serde_json::to_string(&m).unwrap();
        assert!(!text.contains("time"));
        let back: Manifest = serde_json::from_str(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(m.ratios.len(), 16);
        assert_eq!(m.config_sha256, c.hash_hex());
    }

    proptest! {
        #[test]
        fn any_record_round_trips(
            index in 0u64..u64::MAX,
            p in any::<bool>(),
            atten in 0usize..64,
            alice in prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO,
            bob in prop::num::f64::NORMAL | prop::num::f64::ZERO,
        ) {
            let r = PulseRecord {
                index,
                quadrature: if p { Quadrature::P } else { Quadrature::X },
                atten_index: atten,
                alice_value: alice,
                bob_value_volts: bob,
            };
            let bytes = write_trace([&r], Vec::new()).unwrap();
            let back = read_trace(&bytes[..]).unwrap();
            prop_assert_eq!(back.len(), 1);
            prop_assert_eq!(back[0].alice_value.to_bits(), alice.to_bits());
            prop_assert_eq!(back[0].bob_value_volts.to_bits(), bob.to_bits());
            prop_assert_eq!(back[0], r);
        }
    }
}
