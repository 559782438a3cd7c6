//! Append-only event log with a stable digest.
//!
//! Lines render as `seq;sim_ms;component;event;subject;detail`. Fields are
//! sanitised so that a `;` or newline inside a value cannot shift columns.

use std::fmt;

use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogLine {
    pub seq: u64,
    pub sim_ms: u64,
    pub component: String,
    pub event: String,
    pub subject: String,
    pub detail: String,
}

impl fmt::Display for LogLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{};{};{};{};{};{}",
            self.seq, self.sim_ms, self.component, self.event, self.subject, self.detail
        )
    }
}

impl LogLine {
    pub fn parse(line: &str) -> Option<Self> {
        let mut it = line.splitn(6, ';');
        Some(Self {
            seq: it.next()?.parse().ok()?,
            sim_ms: it.next()?.parse().ok()?,
            component: it.next()?.to_string(),
            event: it.next()?.to_string(),
            subject: it.next()?.to_string(),
            detail: it.next()?.to_string(),
        })
    }
}

fn clean(s: &str) -> String {
    s.chars()
        .map(|c| match c {
            ';' => ',',
            '\n' | '\r' => ' ',
            c => c,
        })
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EventLog {
    lines: Vec<LogLine>,
}

impl EventLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, sim_ms: u64, component: &str, event: &str, subject: &str, detail: &str) {
        let seq = self.lines.len() as u64 + 1;
        self.lines.push(LogLine {
            seq,
            sim_ms,
            component: clean(component),
            event: clean(event),
            subject: clean(subject),
            detail: clean(detail),
        });
    }

    /// Appends every line of `other`, renumbering and shifting times by
    /// `offset_ms`.
    pub fn append(&mut self, other: &EventLog, offset_ms: u64) {
        for l in &other.lines {
            self.push(l.sim_ms + offset_ms, &l.component, &l.event, &l.subject, &l.detail);
        }
    }

    pub fn lines(&self) -> &[LogLine] {
        &self.lines
    }

    pub fn len(&self) -> usize {
        self.lines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }

    pub fn last_ms(&self) -> u64 {
        self.lines.last().map_or(0, |l| l.sim_ms)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for l in &self.lines {
            out.push_str(&l.to_string());
            out.push('\n');
        }
        out
    }

    /// SHA-256 over the rendered log, hex encoded.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for l in &self.lines {
            h.update(l.to_string().as_bytes());
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separators_in_fields_are_neutralised() {
        let mut log = EventLog::new();
        log.push(5, "ap:a", "note", "m;1", "x\ny");
        let line = &log.render();
        assert_eq!(line, "1;5;ap:a;note;m,1;x y\n");
        assert_eq!(LogLine::parse(line.trim_end()).unwrap(), log.lines()[0]);
    }

    #[test]
    fn digest_tracks_content() {
        let mut a = EventLog::new();
        let mut b = EventLog::new();
        a.push(1, "c", "e", "s", "d");
        b.push(1, "c", "e", "s", "d");
        assert_eq!(a.digest(), b.digest());
        b.push(2, "c", "e", "s", "d");
        assert_ne!(a.digest(), b.digest());
    }
}
