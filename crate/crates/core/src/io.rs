//! Line-oriented text formats for models and controllers, and CSV output
//! for sweeps.
//!
//! Model files:
//!
//! ```text
//! # comment
//! states: w1 w2
//! actions: a b
//! signals: s
//! signal_map:
//! w1 s
//! w2 s
//! init:
//! w1 1
//! payoff:            # optional, missing entries are 0
//! w1 a 1
//! transition:
//! w1 a w2 1
//! ```
//!
//! Name lists may also continue on the lines after their header. Numbers
//! are serialized in the shortest form that parses back to the same bits.

use std::collections::HashSet;
use std::io::Write;

use crate::error::{Error, Result};
use crate::model::{validate_model, PomdpModel, RawModel};
use crate::strategy::FiniteStateController;

#[derive(Debug, Clone, Copy)]
struct Token<'a> {
    text: &'a str,
    column: usize,
}

/// Splits a line into whitespace-separated tokens with one-based columns,
/// dropping everything from `#` on.
fn tokenize(line: &str) -> Vec<Token<'_>> {
    let content = match line.find('#') {
        Some(i) => &line[..i],
        None => line,
    };
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in content.char_indices() {
        match (c.is_whitespace(), start) {
            (false, None) => start = Some(i),
            (true, Some(s)) => {
                out.push(Token {
                    text: &content[s..i],
                    column: content[..s].chars().count() + 1,
                });
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push(Token {
            text: &content[s..],
            column: content[..s].chars().count() + 1,
        });
    }
    out
}

fn parse_error(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        column,
        message: message.into(),
    }
}

fn number(line: usize, tok: Token<'_>) -> Result<f64> {
    let v: f64 = tok
        .text
        .parse()
        .map_err(|_| parse_error(line, tok.column, format!("invalid number '{}'", tok.text)))?;
    if !v.is_finite() {
        return Err(parse_error(line, tok.column, format!("number '{}' is not finite", tok.text)));
    }
    Ok(v)
}

fn expect_fields(line: usize, toks: &[Token<'_>], n: usize, end_column: usize) -> Result<()> {
    if toks.len() == n {
        return Ok(());
    }
    let column = if toks.len() > n {
        toks[n].column
    } else {
        end_column
    };
    Err(parse_error(line, column, format!("expected {n} fields, found {}", toks.len())))
}

fn lookup(line: usize, names: &[String], tok: Token<'_>) -> Result<usize> {
    names
        .iter()
        .position(|n| n == tok.text)
        .ok_or_else(|| Error::UnknownName {
            line,
            name: tok.text.to_string(),
        })
}

/// Column just past the last non-comment character, for "missing field"
/// errors.
fn end_column(line: &str) -> usize {
    let content = match line.find('#') {
        Some(i) => &line[..i],
        None => line,
    };
    content.trim_end().chars().count() + 1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Section {
    States,
    Actions,
    Signals,
    SignalMap,
    Init,
    Payoff,
    Transition,
}

impl Section {
    fn from_header(text: &str) -> Option<Section> {
        Some(match text {
            "states:" => Section::States,
            "actions:" => Section::Actions,
            "signals:" => Section::Signals,
            "signal_map:" => Section::SignalMap,
            "init:" => Section::Init,
            "payoff:" => Section::Payoff,
            "transition:" => Section::Transition,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Section::States => "states",
            Section::Actions => "actions",
            Section::Signals => "signals",
            Section::SignalMap => "signal_map",
            Section::Init => "init",
            Section::Payoff => "payoff",
            Section::Transition => "transition",
        }
    }
}

struct RawBuilder {
    states: Vec<String>,
    actions: Vec<String>,
    signals: Vec<String>,
    raw: Option<RawModel>,
    seen: HashSet<Vec<usize>>,
}

impl RawBuilder {
    fn add_name(&mut self, section: Section, line: usize, tok: Token<'_>) -> Result<()> {
        if tok.text.ends_with(':') {
            return Err(parse_error(line, tok.column, format!("unknown section '{}'", tok.text)));
        }
        let list = match section {
            Section::States => &mut self.states,
            Section::Actions => &mut self.actions,
            _ => &mut self.signals,
        };
        if list.iter().any(|n| n == tok.text) {
            return Err(Error::DuplicateEntry { line });
        }
        list.push(tok.text.to_string());
        Ok(())
    }

    /// Tensors are sized once the first data entry arrives.
    fn raw(&mut self, line: usize, column: usize) -> Result<&mut RawModel> {
        if self.raw.is_none() {
            for (list, name) in [(&self.states, "states"), (&self.actions, "actions"), (&self.signals, "signals")] {
                if list.is_empty() {
                    return Err(parse_error(line, column, format!("section '{name}' must be declared before data")));
                }
            }
            self.raw = Some(RawModel::with_names(
                self.states.clone(),
                self.actions.clone(),
                self.signals.clone(),
            ));
        }
        Ok(self.raw.as_mut().expect("just built"))
    }

    fn mark(&mut self, line: usize, key: Vec<usize>) -> Result<()> {
        if self.seen.insert(key) {
            Ok(())
        } else {
            Err(Error::DuplicateEntry { line })
        }
    }

    fn entry(&mut self, section: Section, line: usize, toks: &[Token<'_>], end: usize) -> Result<()> {
        let col = toks[0].column;
        let tag = section as usize;
        match section {
            Section::SignalMap => {
                expect_fields(line, toks, 2, end)?;
                let w = lookup(line, &self.states, toks[0])?;
                let s = lookup(line, &self.signals, toks[1])?;
                self.mark(line, vec![tag, w])?;
                self.raw(line, col)?.signal_map[w] = Some(s);
            }
            Section::Init => {
                expect_fields(line, toks, 2, end)?;
                let w = lookup(line, &self.states, toks[0])?;
                let p = number(line, toks[1])?;
                self.mark(line, vec![tag, w])?;
                self.raw(line, col)?.init[w] = p;
            }
            Section::Payoff => {
                expect_fields(line, toks, 3, end)?;
                let w = lookup(line, &self.states, toks[0])?;
                let a = lookup(line, &self.actions, toks[1])?;
                let g = number(line, toks[2])?;
                self.mark(line, vec![tag, w, a])?;
                self.raw(line, col)?.payoff[w][a] = g;
            }
            Section::Transition => {
                expect_fields(line, toks, 4, end)?;
                let w = lookup(line, &self.states, toks[0])?;
                let a = lookup(line, &self.actions, toks[1])?;
                let x = lookup(line, &self.states, toks[2])?;
                let p = number(line, toks[3])?;
                self.mark(line, vec![tag, w, a, x])?;
                self.raw(line, col)?.transition[w][a][x] = p;
            }
            Section::States | Section::Actions | Section::Signals => unreachable!("handled as names"),
        }
        Ok(())
    }
}

/// Parses a model file into its unvalidated form.
pub fn parse_raw(text: &str) -> Result<RawModel> {
    let mut b = RawBuilder {
        states: Vec::new(),
        actions: Vec::new(),
        signals: Vec::new(),
        raw: None,
        seen: HashSet::new(),
    };
    let mut section: Option<Section> = None;
    let mut declared: HashSet<Section> = HashSet::new();
    let mut last_line = 0;
    for (i, line) in text.lines().enumerate() {
        let n = i + 1;
        last_line = n;
        let toks = tokenize(line);
        if toks.is_empty() {
            continue;
        }
        let mut rest = &toks[..];
        if let Some(sec) = Section::from_header(toks[0].text) {
            let is_list = matches!(sec, Section::States | Section::Actions | Section::Signals);
            if is_list && !declared.insert(sec) {
                return Err(parse_error(n, toks[0].column, format!("section '{}' declared twice", sec.name())));
            }
            if is_list && b.raw.is_some() {
                return Err(parse_error(n, toks[0].column, format!("section '{}' after data", sec.name())));
            }
            if !is_list && toks.len() > 1 {
                return Err(parse_error(n, toks[1].column, "unexpected text after section header"));
            }
            section = Some(sec);
            rest = &toks[1..];
            if rest.is_empty() {
                continue;
            }
        } else if toks[0].text.ends_with(':') {
            return Err(parse_error(n, toks[0].column, format!("unknown section '{}'", toks[0].text)));
        }
        match section {
            None => return Err(parse_error(n, toks[0].column, "entry outside of a section")),
            Some(sec @ (Section::States | Section::Actions | Section::Signals)) => {
                for &t in rest {
                    b.add_name(sec, n, t)?;
                }
            }
            Some(sec) => b.entry(sec, n, rest, end_column(line))?,
        }
    }
    for sec in [Section::States, Section::Actions, Section::Signals] {
        if !declared.contains(&sec) {
            return Err(parse_error(last_line + 1, 1, format!("missing section '{}'", sec.name())));
        }
    }
    b.raw(last_line + 1, 1)?;
    Ok(b.raw.expect("built above"))
}

/// Parses and validates a model file.
pub fn parse_pomdp(text: &str) -> Result<PomdpModel> {
    validate_model(parse_raw(text)?)
}

fn nonzero(x: f64) -> bool {
    x.to_bits() != 0
}

/// Canonical text form: declaration order throughout, zero entries and an
/// all-zero payoff section omitted.
pub fn serialize_pomdp(m: &PomdpModel) -> String {
    let mut out = String::new();
    let (st, ac, si) = (m.state_names(), m.action_names(), m.signal_names());
    out.push_str(&format!("states: {}\n", st.join(" ")));
    out.push_str(&format!("actions: {}\n", ac.join(" ")));
    out.push_str(&format!("signals: {}\n", si.join(" ")));
    out.push_str("\nsignal_map:\n");
    for (w, name) in st.iter().enumerate() {
        out.push_str(&format!("{name} {}\n", si[m.signal_of(w)]));
    }
    out.push_str("\ninit:\n");
    for (w, &p) in m.init().iter().enumerate() {
        if nonzero(p) {
            out.push_str(&format!("{} {p}\n", st[w]));
        }
    }
    let mut payoff = String::new();
    for w in 0..st.len() {
        for a in 0..ac.len() {
            let g = m.payoff(w, a);
            if nonzero(g) {
                payoff.push_str(&format!("{} {} {g}\n", st[w], ac[a]));
            }
        }
    }
    if !payoff.is_empty() {
        out.push_str("\npayoff:\n");
        out.push_str(&payoff);
    }
    out.push_str("\ntransition:\n");
    for w in 0..st.len() {
        for a in 0..ac.len() {
            for (x, &p) in m.transition_row(w, a).iter().enumerate() {
                if nonzero(p) {
                    out.push_str(&format!("{} {} {} {p}\n", st[w], ac[a], st[x]));
                }
            }
        }
    }
    out
}

/// Parses a controller file for model `m`:
///
/// ```text
/// memory: q0 q1
/// init:            # signal memory prob
/// s1 q0 1
/// action:          # memory action prob
/// q0 a 1
/// update:          # memory action signal next_memory prob
/// q0 a s1 q1 1
/// ```
pub fn parse_controller(text: &str, m: &PomdpModel) -> Result<FiniteStateController> {
    let actions = m.action_names().to_vec();
    let signals = m.signal_names().to_vec();
    let mut memory: Vec<String> = Vec::new();
    let mut section: Option<&'static str> = None;
    let mut init: Vec<(usize, usize, f64)> = Vec::new();
    let mut rule: Vec<(usize, usize, f64)> = Vec::new();
    let mut update: Vec<(usize, usize, usize, usize, f64)> = Vec::new();
    let mut seen: HashSet<Vec<usize>> = HashSet::new();
    let mut last_line = 0;
    for (i, line) in text.lines().enumerate() {
        let n = i + 1;
        last_line = n;
        let toks = tokenize(line);
        if toks.is_empty() {
            continue;
        }
        let mut rest = &toks[..];
        let header = match toks[0].text {
            "memory:" => Some("memory"),
            "init:" => Some("init"),
            "action:" => Some("action"),
            "update:" => Some("update"),
            t if t.ends_with(':') => {
                return Err(parse_error(n, toks[0].column, format!("unknown section '{t}'")));
            }
            _ => None,
        };
        if let Some(hd) = header {
            if hd != "memory" && toks.len() > 1 {
                return Err(parse_error(n, toks[1].column, "unexpected text after section header"));
            }
            section = Some(hd);
            rest = &toks[1..];
            if rest.is_empty() {
                continue;
            }
        }
        let end = end_column(line);
        let mut mark = |key: Vec<usize>| {
            if seen.insert(key) {
                Ok(())
            } else {
                Err(Error::DuplicateEntry { line: n })
            }
        };
        match section {
            None => return Err(parse_error(n, toks[0].column, "entry outside of a section")),
            Some("memory") => {
                for t in rest {
                    if memory.iter().any(|q| q == t.text) {
                        return Err(Error::DuplicateEntry { line: n });
                    }
                    memory.push(t.text.to_string());
                }
            }
            Some("init") => {
                expect_fields(n, rest, 3, end)?;
                let s = lookup(n, &signals, rest[0])?;
                let q = lookup(n, &memory, rest[1])?;
                mark(vec![0, s, q])?;
                init.push((s, q, number(n, rest[2])?));
            }
            Some("action") => {
                expect_fields(n, rest, 3, end)?;
                let q = lookup(n, &memory, rest[0])?;
                let a = lookup(n, &actions, rest[1])?;
                mark(vec![1, q, a])?;
                rule.push((q, a, number(n, rest[2])?));
            }
            Some(_) => {
                expect_fields(n, rest, 5, end)?;
                let q = lookup(n, &memory, rest[0])?;
                let a = lookup(n, &actions, rest[1])?;
                let s = lookup(n, &signals, rest[2])?;
                let q2 = lookup(n, &memory, rest[3])?;
                mark(vec![2, q, a, s, q2])?;
                update.push((q, a, s, q2, number(n, rest[4])?));
            }
        }
    }
    if memory.is_empty() {
        return Err(parse_error(last_line + 1, 1, "missing section 'memory'"));
    }
    let nq = memory.len();
    let (na, ns) = (actions.len(), signals.len());
    let mut init_t = vec![vec![0.0; nq]; ns];
    for (s, q, p) in init {
        init_t[s][q] = p;
    }
    let mut rule_t = vec![vec![0.0; na]; nq];
    for (q, a, p) in rule {
        rule_t[q][a] = p;
    }
    let mut update_t = vec![vec![0.0; nq]; nq * na * ns];
    for (q, a, s, q2, p) in update {
        update_t[(q * na + a) * ns + s][q2] = p;
    }
    FiniteStateController::from_fn(
        nq,
        na,
        ns,
        |s| init_t[s].clone(),
        |q| rule_t[q].clone(),
        |q, a, s| update_t[(q * na + a) * ns + s].clone(),
    )?
    .with_memory_names(memory)
}

/// Text form of a controller for model `m`, readable by [`parse_controller`].
pub fn serialize_controller(fsc: &FiniteStateController, m: &PomdpModel) -> String {
    let q = fsc.memory_names();
    let (ac, si) = (m.action_names(), m.signal_names());
    let mut out = format!("memory: {}\n\ninit:\n", q.join(" "));
    for s in 0..fsc.n_signals() {
        for (j, &p) in fsc.init_row(s).iter().enumerate() {
            if nonzero(p) {
                out.push_str(&format!("{} {} {p}\n", si[s], q[j]));
            }
        }
    }
    out.push_str("\naction:\n");
    for i in 0..fsc.n_memory() {
        for (a, &p) in fsc.action_row(i).iter().enumerate() {
            if nonzero(p) {
                out.push_str(&format!("{} {} {p}\n", q[i], ac[a]));
            }
        }
    }
    out.push_str("\nupdate:\n");
    for i in 0..fsc.n_memory() {
        for a in 0..fsc.n_actions() {
            for s in 0..fsc.n_signals() {
                for (j, &p) in fsc.update_row(i, a, s).iter().enumerate() {
                    if nonzero(p) {
                        out.push_str(&format!("{} {} {} {} {p}\n", q[i], ac[a], si[s], q[j]));
                    }
                }
            }
        }
    }
    out
}

/// One line of sweep output.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub h: f64,
    pub lambda: Option<f64>,
    pub value: f64,
    pub mode: String,
    pub diag: String,
    pub seed: Option<u64>,
}

pub const CSV_HEADER: [&str; 6] = ["h", "lambda", "value", "mode", "diag", "seed"];

/// Writes rows with header `h,lambda,value,mode,diag,seed` and LF line ends.
pub fn write_sweep_csv<W: Write>(out: W, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    let csv_err = |e: csv::Error| Error::Csv(e.to_string());
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for r in rows {
        if !r.value.is_finite() {
            return Err(Error::Csv(format!("non-finite value at h = {}", r.h)));
        }
        w.write_record([
            r.h.to_string(),
            r.lambda.map(|l| l.to_string()).unwrap_or_default(),
            r.value.to_string(),
            r.mode.clone(),
            r.diag.clone(),
            r.seed.map(|s| s.to_string()).unwrap_or_default(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Csv(e.to_string()))?;
    Ok(())
}
