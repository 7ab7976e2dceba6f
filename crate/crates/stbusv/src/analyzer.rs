//! The bus analyzer: compares two waveform databases port by port, cycle by
//! cycle, computes per-port alignment rates, and renders the sign-off
//! verdict. Also reconstructs bus transactions offline from a VCD, which
//! lets misaligned runs be diffed at transaction level.

use serde::Serialize;
use thiserror::Error;

use crate::interconnect::{port_kind_from_name, PortSignals, PortTrace};
use crate::vcdio::{port_signal_layout, Value, WaveDb};
use crate::verif::MonitorTxn;
use crate::protocol::Endianness;

pub const DEFAULT_SIGNOFF_THRESHOLD: f64 = 0.99;

#[derive(Debug, Error)]
pub enum AnalyzerError {
    #[error("no cycles to compare")]
    EmptyTraces,
    #[error("signal sets differ: {0}")]
    SignalSetMismatch(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PortAlignment {
    pub port: String,
    pub aligned_cycles: u64,
    pub total_cycles: u64,
    pub rate: f64,
    /// First misaligned cycle, when any.
    pub first_divergence: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlignmentReport {
    pub ports: Vec<PortAlignment>,
    pub min_rate: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl AlignmentReport {
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str("port           aligned/total      rate   first divergence\n");
        for p in &self.ports {
            out.push_str(&format!(
                "{:<14} {:>9}/{:<9} {:>7.4}   {}\n",
                p.port,
                p.aligned_cycles,
                p.total_cycles,
                p.rate,
                p.first_divergence.map_or("-".to_string(), |c| c.to_string()),
            ));
        }
        out.push_str(&format!(
            "min rate {:.4} vs threshold {:.4}: {}\n",
            self.min_rate,
            self.threshold,
            if self.pass { "PASS" } else { "FAIL" }
        ));
        out
    }
}

/// Pairs of identically named ports to compare; built from the union of
/// port scopes unless an explicit map is given.
pub type PortMap = Vec<(String, String)>;

/// Compares two waveform databases cycle by cycle.
///
/// A port is aligned at cycle k iff every one of its signals samples equal
/// at k in both databases ('x' equals 'x' but differs from any defined
/// value). The denominator is the larger cycle span; cycles absent from one
/// trace count as misaligned.
pub fn compare(
    db_a: &WaveDb,
    db_b: &WaveDb,
    clock_period_ns: u64,
    port_map: Option<&PortMap>,
    threshold: f64,
) -> Result<AlignmentReport, AnalyzerError> {
    let default_map: PortMap;
    let map = match port_map {
        Some(m) => m,
        None => {
            let ports_a = db_a.ports();
            let ports_b = db_b.ports();
            if ports_a != ports_b {
                return Err(AnalyzerError::SignalSetMismatch(format!(
                    "port scopes {ports_a:?} vs {ports_b:?}"
                )));
            }
            default_map = ports_a.into_iter().map(|p| (p.clone(), p)).collect();
            &default_map
        }
    };
    let span_a = db_a.span_cycles(clock_period_ns);
    let span_b = db_b.span_cycles(clock_period_ns);
    let total = span_a.max(span_b);
    if total == 0 {
        return Err(AnalyzerError::EmptyTraces);
    }

    let mut ports = Vec::with_capacity(map.len());
    for (name_a, name_b) in map {
        let sigs_a = port_signals(db_a, name_a);
        let sigs_b = port_signals(db_b, name_b);
        let names_a: Vec<&str> = sigs_a.iter().map(|&(_, n, _)| n).collect();
        let names_b: Vec<&str> = sigs_b.iter().map(|&(_, n, _)| n).collect();
        if names_a != names_b || names_a.is_empty() {
            return Err(AnalyzerError::SignalSetMismatch(format!(
                "port {name_a}: signals {names_a:?} vs {names_b:?}"
            )));
        }
        let widths_a: Vec<u32> = sigs_a.iter().map(|&(_, _, w)| w).collect();
        let widths_b: Vec<u32> = sigs_b.iter().map(|&(_, _, w)| w).collect();
        if widths_a != widths_b {
            return Err(AnalyzerError::SignalSetMismatch(format!(
                "port {name_a}: widths {widths_a:?} vs {widths_b:?}"
            )));
        }

        let mut aligned = 0u64;
        let mut first_divergence = None;
        let common = span_a.min(span_b);
        // Cursor walk per signal pair over both change lists.
        let values_a = sample_matrix(db_a, &sigs_a, clock_period_ns, common);
        let values_b = sample_matrix(db_b, &sigs_b, clock_period_ns, common);
        for k in 0..total {
            let ok = k < common
                && (0..sigs_a.len())
                    .all(|s| values_a[s][k as usize] == values_b[s][k as usize]);
            if ok {
                aligned += 1;
            } else if first_divergence.is_none() {
                first_divergence = Some(k);
            }
        }
        ports.push(PortAlignment {
            port: name_a.clone(),
            aligned_cycles: aligned,
            total_cycles: total,
            rate: aligned as f64 / total as f64,
            first_divergence,
        });
    }
    let min_rate = ports.iter().map(|p| p.rate).fold(f64::INFINITY, f64::min);
    let min_rate = if min_rate.is_finite() { min_rate } else { 1.0 };
    Ok(AlignmentReport { ports, min_rate, threshold, pass: min_rate >= threshold })
}

/// Signals of one port scope: (db index, name, width) in declaration order.
fn port_signals<'a>(db: &'a WaveDb, port: &str) -> Vec<(usize, &'a str, u32)> {
    db.signals
        .iter()
        .enumerate()
        .filter(|(_, s)| s.scope.get(1).map(String::as_str) == Some(port))
        .map(|(i, s)| (i, s.name.as_str(), s.width))
        .collect()
}

/// Per-signal dense value tables over `span` cycles, via a linear walk of
/// the change list (the binary-search `sample_at` is the reference oracle).
fn sample_matrix(
    db: &WaveDb,
    sigs: &[(usize, &str, u32)],
    period: u64,
    span: u64,
) -> Vec<Vec<Value>> {
    let mut per_signal: Vec<Vec<(u64, &Value)>> = vec![Vec::new(); sigs.len()];
    let index_of: std::collections::HashMap<usize, usize> =
        sigs.iter().enumerate().map(|(k, &(idx, _, _))| (idx, k)).collect();
    for (t, sig, value) in &db.changes {
        if let Some(&k) = index_of.get(sig) {
            per_signal[k].push((*t, value));
        }
    }
    sigs.iter()
        .enumerate()
        .map(|(k, &(_, _, width))| {
            let mut out = Vec::with_capacity(span as usize);
            let mut cur = Value::all_x(width);
            let mut it = per_signal[k].iter().peekable();
            for cycle in 0..span {
                let t = cycle * period;
                while let Some((ct, v)) = it.peek() {
                    if *ct <= t {
                        cur = (*v).clone();
                        it.next();
                    } else {
                        break;
                    }
                }
                out.push(cur.clone());
            }
            out
        })
        .collect()
}

/// Reconstructs the dense port trace encoded in a VCD and runs the monitor
/// on it; equivalent to the live monitor on the engine's own trace.
pub fn extract_bus_txns(
    db: &WaveDb,
    port: &str,
    clock_period_ns: u64,
    endianness: Endianness,
) -> Result<Vec<MonitorTxn>, AnalyzerError> {
    let sigs = port_signals(db, port);
    let kind = port_kind_from_name(port).ok_or_else(|| {
        AnalyzerError::SignalSetMismatch(format!("port {port} is not an initN/targN scope"))
    })?;
    let width_bits = sigs
        .iter()
        .find(|&&(_, n, _)| n == "data")
        .map(|&(_, _, w)| w)
        .ok_or_else(|| AnalyzerError::SignalSetMismatch(format!("port {port} has no data signal")))?;
    let expected: Vec<&str> = port_signal_layout(width_bits).iter().map(|&(n, _)| n).collect();
    let got: Vec<&str> = sigs.iter().map(|&(_, n, _)| n).collect();
    if got != expected {
        return Err(AnalyzerError::SignalSetMismatch(format!(
            "port {port}: signals {got:?} do not match the port schema"
        )));
    }
    let span = db.span_cycles(clock_period_ns);
    let matrix = sample_matrix(db, &sigs, clock_period_ns, span);
    let cycles: Vec<PortSignals> = (0..span as usize)
        .map(|k| {
            let row: Vec<Value> = (0..sigs.len()).map(|s| matrix[s][k].clone()).collect();
            PortSignals::from_signal_values(&row, width_bits)
        })
        .collect();
    let trace = PortTrace { name: port.to_string(), kind, width_bits, cycles };
    Ok(crate::verif::monitor_extract(&trace, endianness))
}

/// The sign-off rule: every port must align at or above the threshold.
pub fn signoff(report: &AlignmentReport, threshold: f64) -> bool {
    report.ports.iter().all(|p| p.rate >= threshold)
}
