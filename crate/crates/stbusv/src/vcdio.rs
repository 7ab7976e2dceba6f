//! Bit-exact Value Change Dump writer and parser.
//!
//! The emitted subset: `$date`/`$version`/`$timescale 1ns` header, a two-level
//! scope tree `top/<port>/<signal>`, `$dumpvars` with all initial values at
//! time 0, change-only records afterwards, and a trailing bare timestamp at
//! `span * period` that pins the trace length under change-only encoding.
//! Output is byte-stable for identical input. The parser accepts this subset
//! plus tolerant whitespace and `z` values (mapped to `x`).

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use crate::interconnect::PortTrace;

#[derive(Debug, Error)]
pub enum VcdError {
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("duplicate signal name {0}")]
    DuplicateName(String),
    #[error("vcd syntax error at line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("unknown id code {0}")]
    UnknownIdCode(String),
    #[error("value width {got} does not match declared width {want} for {signal}")]
    WidthMismatch { signal: String, want: u32, got: usize },
    #[error("unknown signal {0}")]
    UnknownSignal(String),
}

/// A four-state-less logic value: 0, 1 or unknown.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Bit {
    Zero,
    One,
    X,
}

impl Bit {
    fn as_char(self) -> char {
        match self {
            Bit::Zero => '0',
            Bit::One => '1',
            Bit::X => 'x',
        }
    }

    fn from_char(c: char) -> Option<Bit> {
        match c {
            '0' => Some(Bit::Zero),
            '1' => Some(Bit::One),
            'x' | 'X' | 'z' | 'Z' => Some(Bit::X),
            _ => None,
        }
    }
}

/// A signal value: scalar or vector. Vectors are stored normalized to the
/// declared width, most significant bit first.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Value {
    Scalar(Bit),
    Vector(Vec<Bit>),
}

impl Value {
    pub fn all_x(width: u32) -> Value {
        if width == 1 {
            Value::Scalar(Bit::X)
        } else {
            Value::Vector(vec![Bit::X; width as usize])
        }
    }

    /// Interprets the value as an unsigned integer, x bits as 0.
    pub fn to_u64(&self) -> u64 {
        match self {
            Value::Scalar(b) => u64::from(*b == Bit::One),
            Value::Vector(bits) => bits
                .iter()
                .fold(0u64, |acc, b| (acc << 1) | u64::from(*b == Bit::One)),
        }
    }

    pub fn from_u64(mut v: u64, width: u32) -> Value {
        if width == 1 {
            return Value::Scalar(if v & 1 == 1 { Bit::One } else { Bit::Zero });
        }
        let mut bits = vec![Bit::Zero; width as usize];
        for i in (0..width as usize).rev() {
            if v & 1 == 1 {
                bits[i] = Bit::One;
            }
            v >>= 1;
        }
        Value::Vector(bits)
    }

    /// Vector value from bytes, byte `0` least significant.
    pub fn from_bytes_le(bytes: &[u8], width: u32) -> Value {
        let mut bits = vec![Bit::Zero; width as usize];
        for (lane, byte) in bytes.iter().enumerate() {
            for k in 0..8 {
                let bit_index = lane * 8 + k;
                if bit_index >= width as usize {
                    break;
                }
                if byte >> k & 1 == 1 {
                    bits[width as usize - 1 - bit_index] = Bit::One;
                }
            }
        }
        Value::Vector(bits)
    }

    /// Inverse of [`Value::from_bytes_le`]; x bits read as 0.
    pub fn to_bytes_le(&self, lanes: usize) -> Vec<u8> {
        let mut out = vec![0u8; lanes];
        if let Value::Vector(bits) = self {
            let width = bits.len();
            for (i, b) in bits.iter().enumerate() {
                if *b == Bit::One {
                    let bit_index = width - 1 - i;
                    let lane = bit_index / 8;
                    if lane < lanes {
                        out[lane] |= 1 << (bit_index % 8);
                    }
                }
            }
        }
        out
    }
}

/// A declared signal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignalDef {
    /// Scope path below the root, e.g. `["top", "init0"]`.
    pub scope: Vec<String>,
    pub name: String,
    pub width: u32,
    pub id: String,
}

impl SignalDef {
    pub fn full_name(&self) -> String {
        let mut s = self.scope.join(".");
        s.push('.');
        s.push_str(&self.name);
        s
    }
}

/// Parsed or constructed waveform database.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WaveDb {
    pub timescale_ns: u64,
    pub signals: Vec<SignalDef>,
    /// (time_ns, signal index, new value), time non-decreasing.
    pub changes: Vec<(u64, usize, Value)>,
    /// Largest timestamp seen, including the trailing span marker.
    pub end_time_ns: u64,
}

impl WaveDb {
    pub fn signal_index(&self, full_name: &str) -> Option<usize> {
        self.signals.iter().position(|s| s.full_name() == full_name)
    }

    /// Trace span in cycles for a clock period: the last change cycle plus
    /// one, or the bare end marker, whichever is larger.
    pub fn span_cycles(&self, clock_period_ns: u64) -> u64 {
        let from_changes = self
            .changes
            .last()
            .map(|(t, _, _)| t / clock_period_ns + 1)
            .unwrap_or(0);
        let from_marker = self.end_time_ns.div_ceil(clock_period_ns);
        from_changes.max(from_marker)
    }

    /// Port scopes (children of `top`) in declaration order.
    pub fn ports(&self) -> Vec<String> {
        let mut out = Vec::new();
        for sig in &self.signals {
            if let Some(port) = sig.scope.get(1) {
                if !out.contains(port) {
                    out.push(port.clone());
                }
            }
        }
        out
    }
}

/// Value of `signal` (full dotted name) at `time_ns`: the most recent change
/// at or before that instant, `x` before the first one.
pub fn sample_at(db: &WaveDb, signal: &str, time_ns: u64) -> Result<Value, VcdError> {
    let idx = db
        .signal_index(signal)
        .ok_or_else(|| VcdError::UnknownSignal(signal.to_string()))?;
    let width = db.signals[idx].width;
    // Binary search for the last change of any signal at or before time_ns,
    // then walk back to this signal's most recent change.
    let mut lo = 0usize;
    let mut hi = db.changes.len();
    while lo < hi {
        let mid = (lo + hi) / 2;
        if db.changes[mid].0 <= time_ns {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    for k in (0..lo).rev() {
        let (_, sig, value) = &db.changes[k];
        if *sig == idx {
            return Ok(value.clone());
        }
    }
    Ok(Value::all_x(width))
}

fn id_code(index: usize) -> String {
    // Printable ASCII '!'..='~' in base 94, least significant first.
    let mut n = index;
    let mut s = String::new();
    loop {
        s.push((33 + (n % 94)) as u8 as char);
        n /= 94;
        if n == 0 {
            break;
        }
        n -= 1;
    }
    s
}

fn format_value(value: &Value, id: &str, out: &mut String) {
    match value {
        Value::Scalar(b) => {
            out.push(b.as_char());
            out.push_str(id);
            out.push('\n');
        }
        Value::Vector(bits) => {
            out.push('b');
            // Trim leading zeros but keep at least one digit, and keep a
            // guard zero when the next bit is x (parsers x-extend otherwise).
            let mut first = bits
                .iter()
                .position(|b| *b != Bit::Zero)
                .unwrap_or(bits.len() - 1);
            if bits[first] == Bit::X && first > 0 {
                first -= 1;
            }
            for b in &bits[first..] {
                out.push(b.as_char());
            }
            out.push(' ');
            out.push_str(id);
            out.push('\n');
        }
    }
}

/// The fixed signal layout of a port scope: (name, width given the data
/// width W in bits).
pub fn port_signal_layout(width_bits: u32) -> Vec<(&'static str, u32)> {
    vec![
        ("req", 1),
        ("gnt", 1),
        ("opc", 8),
        ("addr", 32),
        ("data", width_bits),
        ("be", width_bits / 8),
        ("eop", 1),
        ("lck", 1),
        ("src", 5),
        ("tid", 8),
        ("r_req", 1),
        ("r_gnt", 1),
        ("r_opc", 2),
        ("r_data", width_bits),
        ("r_eop", 1),
        ("r_src", 5),
        ("r_tid", 8),
    ]
}

/// Builds a WaveDb from dense port traces sampled at `clock_period_ns`.
pub fn trace_db(traces: &[PortTrace], clock_period_ns: u64) -> Result<WaveDb, VcdError> {
    let mut signals = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for trace in traces {
        if !seen.insert(trace.name.clone()) {
            return Err(VcdError::DuplicateName(trace.name.clone()));
        }
        for (name, width) in port_signal_layout(trace.width_bits) {
            let idx = signals.len();
            signals.push(SignalDef {
                scope: vec!["top".to_string(), trace.name.clone()],
                name: name.to_string(),
                width,
                id: id_code(idx),
            });
        }
    }

    let span = traces.iter().map(|t| t.cycles.len()).max().unwrap_or(0) as u64;
    let mut changes: Vec<(u64, usize, Value)> = Vec::new();
    let mut last: Vec<Option<Value>> = vec![None; signals.len()];
    for cycle in 0..span {
        let t = cycle * clock_period_ns;
        let mut sig_base = 0;
        for trace in traces {
            let n_sigs = port_signal_layout(trace.width_bits).len();
            if let Some(rec) = trace.cycles.get(cycle as usize) {
                for (k, value) in rec.signal_values(trace.width_bits).into_iter().enumerate() {
                    let idx = sig_base + k;
                    if last[idx].as_ref() != Some(&value) {
                        changes.push((t, idx, value.clone()));
                        last[idx] = Some(value);
                    }
                }
            }
            sig_base += n_sigs;
        }
    }
    Ok(WaveDb {
        timescale_ns: 1,
        signals,
        changes,
        end_time_ns: span * clock_period_ns,
    })
}

/// Writes dense port traces as a VCD file. Identical input produces
/// byte-identical output.
pub fn write_vcd(
    traces: &[PortTrace],
    clock_period_ns: u64,
    path: &Path,
) -> Result<(), VcdError> {
    let db = trace_db(traces, clock_period_ns)?;
    write_db(&db, path)
}

/// Writes a WaveDb as VCD text.
pub fn write_db(db: &WaveDb, path: &Path) -> Result<(), VcdError> {
    let mut out = String::new();
    out.push_str("$date\n    (fixed for reproducibility)\n$end\n");
    out.push_str("$version\n    stbusv waveform writer\n$end\n");
    out.push_str("$timescale 1ns $end\n");

    // Scope tree in declaration order.
    let mut open: Vec<String> = Vec::new();
    for sig in &db.signals {
        while !sig.scope.starts_with(&open) {
            out.push_str("$upscope $end\n");
            open.pop();
        }
        while open.len() < sig.scope.len() {
            let _ = writeln!(out, "$scope module {} $end", sig.scope[open.len()]);
            open.push(sig.scope[open.len()].clone());
        }
        let _ = writeln!(out, "$var wire {} {} {} $end", sig.width, sig.id, sig.name);
    }
    while open.pop().is_some() {
        out.push_str("$upscope $end\n");
    }
    out.push_str("$enddefinitions $end\n");

    // Initial values at time 0 inside $dumpvars, declaration order; any
    // signal without a change at 0 dumps as x.
    out.push_str("#0\n$dumpvars\n");
    let mut at_zero: Vec<Option<&Value>> = vec![None; db.signals.len()];
    let mut rest = 0usize;
    for (i, (t, sig, value)) in db.changes.iter().enumerate() {
        if *t == 0 {
            at_zero[*sig] = Some(value);
            rest = i + 1;
        } else {
            break;
        }
    }
    for (idx, sig) in db.signals.iter().enumerate() {
        match at_zero[idx] {
            Some(value) => format_value(value, &sig.id, &mut out),
            None => format_value(&Value::all_x(sig.width), &sig.id, &mut out),
        }
    }
    out.push_str("$end\n");

    let mut current_time = 0u64;
    for (t, sig, value) in &db.changes[rest..] {
        if *t != current_time {
            let _ = writeln!(out, "#{t}");
            current_time = *t;
        }
        format_value(value, &db.signals[*sig].id, &mut out);
    }
    if db.end_time_ns > current_time {
        let _ = writeln!(out, "#{}", db.end_time_ns);
    }
    fs::write(path, out)?;
    Ok(())
}

/// Parses a VCD file into a WaveDb.
pub fn parse_vcd(path: &Path) -> Result<WaveDb, VcdError> {
    let text = fs::read_to_string(path)?;
    parse_vcd_text(&text)
}

pub fn parse_vcd_text(text: &str) -> Result<WaveDb, VcdError> {
    let mut parser = Parser::new(text);
    parser.run()?;
    if !parser.definitions_done {
        return Err(VcdError::Syntax {
            line: parser.line,
            reason: "missing $enddefinitions".to_string(),
        });
    }
    Ok(WaveDb {
        timescale_ns: parser.timescale_ns,
        signals: parser.signals,
        changes: parser.changes,
        end_time_ns: parser.end_time,
    })
}

struct Parser<'a> {
    tokens: std::iter::Peekable<TokenIter<'a>>,
    line: usize,
    timescale_ns: u64,
    signals: Vec<SignalDef>,
    changes: Vec<(u64, usize, Value)>,
    end_time: u64,
    definitions_done: bool,
    scope: Vec<String>,
    by_id: std::collections::HashMap<String, usize>,
    time: u64,
    in_dump: bool,
}

struct TokenIter<'a> {
    rest: &'a str,
    line: usize,
}

impl<'a> Iterator for TokenIter<'a> {
    type Item = (usize, &'a str);

    fn next(&mut self) -> Option<(usize, &'a str)> {
        let mut chars = self.rest.char_indices();
        let start = loop {
            match chars.next() {
                Some((_, '\n')) => self.line += 1,
                Some((i, c)) if !c.is_whitespace() => break i,
                Some(_) => continue,
                None => {
                    self.rest = "";
                    return None;
                }
            }
        };
        let end = chars
            .find(|(_, c)| c.is_whitespace())
            .map(|(i, _)| i)
            .unwrap_or(self.rest.len());
        let tok = &self.rest[start..end];
        let line = self.line;
        self.rest = &self.rest[end..];
        Some((line, tok))
    }
}

impl<'a> Parser<'a> {
    fn new(text: &'a str) -> Self {
        Self {
            tokens: TokenIter { rest: text, line: 1 }.peekable(),
            line: 1,
            timescale_ns: 1,
            signals: Vec::new(),
            changes: Vec::new(),
            end_time: 0,
            definitions_done: false,
            scope: Vec::new(),
            by_id: std::collections::HashMap::new(),
            time: 0,
            in_dump: false,
        }
    }

    fn syntax(&self, reason: impl Into<String>) -> VcdError {
        VcdError::Syntax { line: self.line, reason: reason.into() }
    }

    fn next_tok(&mut self) -> Option<&'a str> {
        let (line, tok) = self.tokens.next()?;
        self.line = line;
        Some(tok)
    }

    fn expect(&mut self, what: &str) -> Result<&'a str, VcdError> {
        self.next_tok().ok_or_else(|| self.syntax(format!("unexpected end of file, expected {what}")))
    }

    fn skip_to_end(&mut self) -> Result<(), VcdError> {
        loop {
            let tok = self.expect("$end")?;
            if tok == "$end" {
                return Ok(());
            }
        }
    }

    fn run(&mut self) -> Result<(), VcdError> {
        while let Some(tok) = self.next_tok() {
            match tok {
                "$date" | "$version" | "$comment" => self.skip_to_end()?,
                "$timescale" => self.parse_timescale()?,
                "$scope" => {
                    let _kind = self.expect("scope kind")?;
                    let name = self.expect("scope name")?;
                    self.scope.push(name.to_string());
                    self.skip_to_end()?;
                }
                "$upscope" => {
                    self.scope.pop();
                    self.skip_to_end()?;
                }
                "$var" => self.parse_var()?,
                "$enddefinitions" => {
                    self.skip_to_end()?;
                    self.definitions_done = true;
                }
                "$dumpvars" | "$dumpall" | "$dumpon" | "$dumpoff" => {
                    self.in_dump = true;
                }
                "$end" => {
                    self.in_dump = false;
                }
                t if t.starts_with('#') => {
                    let time: u64 = t[1..]
                        .parse()
                        .map_err(|_| self.syntax(format!("bad timestamp {t}")))?;
                    if time < self.time {
                        return Err(self.syntax("timestamps must be non-decreasing"));
                    }
                    self.time = time;
                    self.end_time = self.end_time.max(time);
                }
                t => self.parse_change(t)?,
            }
        }
        Ok(())
    }

    fn parse_timescale(&mut self) -> Result<(), VcdError> {
        // Accept "1ns" or "1 ns" forms; only nanosecond multiples supported.
        let first = self.expect("timescale")?;
        let (num, unit) = if let Some(stripped) = first.strip_suffix("ns") {
            (stripped.to_string(), "ns".to_string())
        } else {
            (first.to_string(), self.expect("timescale unit")?.to_string())
        };
        if unit != "ns" && unit != "$end" {
            return Err(self.syntax(format!("unsupported timescale unit {unit}")));
        }
        self.timescale_ns = num
            .trim()
            .parse()
            .map_err(|_| self.syntax(format!("bad timescale value {num}")))?;
        if unit != "$end" {
            self.skip_to_end()?;
        }
        Ok(())
    }

    fn parse_var(&mut self) -> Result<(), VcdError> {
        let _ty = self.expect("var type")?;
        let width: u32 = self
            .expect("var width")?
            .parse()
            .map_err(|_| self.syntax("bad var width"))?;
        let id = self.expect("var id")?.to_string();
        let name = self.expect("var name")?.to_string();
        // Optional index suffix like [7:0] before $end.
        self.skip_to_end()?;
        if self.by_id.contains_key(&id) {
            return Err(VcdError::DuplicateName(id));
        }
        let def = SignalDef { scope: self.scope.clone(), name, width, id: id.clone() };
        if self.signals.iter().any(|s| s.full_name() == def.full_name()) {
            return Err(VcdError::DuplicateName(def.full_name()));
        }
        self.by_id.insert(id, self.signals.len());
        self.signals.push(def);
        Ok(())
    }

    fn parse_change(&mut self, tok: &str) -> Result<(), VcdError> {
        if let Some(first) = tok.chars().next() {
            if first == 'b' || first == 'B' {
                let bits: Option<Vec<Bit>> = tok[1..].chars().map(Bit::from_char).collect();
                let bits = bits.ok_or_else(|| self.syntax(format!("bad vector value {tok}")))?;
                if bits.is_empty() {
                    return Err(self.syntax("empty vector value"));
                }
                let id = self.expect("id code")?;
                let idx = *self
                    .by_id
                    .get(id)
                    .ok_or_else(|| VcdError::UnknownIdCode(id.to_string()))?;
                let width = self.signals[idx].width as usize;
                if bits.len() > width {
                    return Err(VcdError::WidthMismatch {
                        signal: self.signals[idx].full_name(),
                        want: width as u32,
                        got: bits.len(),
                    });
                }
                // Left-extend: with x if the msb is x, else with zeros.
                let fill = if bits[0] == Bit::X { Bit::X } else { Bit::Zero };
                let mut full = vec![fill; width - bits.len()];
                full.extend(bits);
                self.push_change(idx, Value::Vector(full));
                return Ok(());
            }
            if let Some(bit) = Bit::from_char(first) {
                let id = &tok[first.len_utf8()..];
                if id.is_empty() {
                    return Err(self.syntax(format!("scalar change without id: {tok}")));
                }
                let idx = *self
                    .by_id
                    .get(id)
                    .ok_or_else(|| VcdError::UnknownIdCode(id.to_string()))?;
                if self.signals[idx].width != 1 {
                    return Err(VcdError::WidthMismatch {
                        signal: self.signals[idx].full_name(),
                        want: self.signals[idx].width,
                        got: 1,
                    });
                }
                self.push_change(idx, Value::Scalar(bit));
                return Ok(());
            }
        }
        Err(self.syntax(format!("unrecognized token {tok}")))
    }

    fn push_change(&mut self, idx: usize, value: Value) {
        self.changes.push((self.time, idx, value));
    }
}
