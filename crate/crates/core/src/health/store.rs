//! Byte dump of everything the platform holds, for leakage scans.
//!
//! Entry layout, all integers big-endian:
//!
//! ```text
//! u8 kind | u16 len | account | u16 len | key id | u32 len | blob
//! ```

use super::{HealthError, Platform};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DumpKind {
    Account = 1,
    Ciphertext = 2,
    WrappedKey = 3,
    Grant = 4,
    PendingHandshake = 5,
    EventLog = 6,
}

impl DumpKind {
    fn from_u8(b: u8) -> Option<Self> {
        Some(match b {
            1 => Self::Account,
            2 => Self::Ciphertext,
            3 => Self::WrappedKey,
            4 => Self::Grant,
            5 => Self::PendingHandshake,
            6 => Self::EventLog,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DumpEntry {
    pub kind: DumpKind,
    pub account: String,
    pub key_id: String,
    pub blob: Vec<u8>,
}

fn push_entry(out: &mut Vec<u8>, kind: DumpKind, account: &str, key_id: &str, blob: &[u8]) {
    out.push(kind as u8);
    out.extend_from_slice(&(account.len() as u16).to_be_bytes());
    out.extend_from_slice(account.as_bytes());
    out.extend_from_slice(&(key_id.len() as u16).to_be_bytes());
    out.extend_from_slice(key_id.as_bytes());
    out.extend_from_slice(&(blob.len() as u32).to_be_bytes());
    out.extend_from_slice(blob);
}

pub fn parse_dump(mut bytes: &[u8]) -> Result<Vec<DumpEntry>, HealthError> {
    fn split<'a>(b: &mut &'a [u8], n: usize) -> Result<&'a [u8], HealthError> {
        if b.len() < n {
            return Err(HealthError::MalformedRecord);
        }
        let (h, t) = b.split_at(n);
        *b = t;
        Ok(h)
    }
    let mut out = Vec::new();
    while !bytes.is_empty() {
        let kind = DumpKind::from_u8(split(&mut bytes, 1)?[0]).ok_or(HealthError::MalformedRecord)?;
        let n = u16::from_be_bytes(split(&mut bytes, 2)?.try_into().expect("2 bytes")) as usize;
        let account = String::from_utf8(split(&mut bytes, n)?.to_vec()).map_err(|_| HealthError::MalformedRecord)?;
        let n = u16::from_be_bytes(split(&mut bytes, 2)?.try_into().expect("2 bytes")) as usize;
        let key_id = String::from_utf8(split(&mut bytes, n)?.to_vec()).map_err(|_| HealthError::MalformedRecord)?;
        let n = u32::from_be_bytes(split(&mut bytes, 4)?.try_into().expect("4 bytes")) as usize;
        let blob = split(&mut bytes, n)?.to_vec();
        out.push(DumpEntry {
            kind,
            account,
            key_id,
            blob,
        });
    }
    Ok(out)
}

/// Number of occurrences of any marker anywhere in `haystack`.
pub fn scan_for_markers(haystack: &[u8], markers: &[[u8; 32]]) -> usize {
    markers
        .iter()
        .map(|m| haystack.windows(m.len()).filter(|w| w == m).count())
        .sum()
}

impl Platform {
    /// Everything the platform persists: accounts, ciphertexts, wrapped
    /// keys, grants, pending handshakes and its event log. The research
    /// store is a separate system and is not included.
    pub fn dump_store(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for a in self.accounts.values() {
            let mut blob = a.public_key.to_vec();
            for h in a.handles.values() {
                blob.extend_from_slice(h.as_bytes());
                blob.push(0);
            }
            blob.push(a.validated as u8);
            push_entry(&mut out, DumpKind::Account, &a.id, &a.key_id, &blob);
        }
        for r in self.records.values() {
            let mut blob = r.nonce.to_vec();
            blob.extend_from_slice(&r.ciphertext);
            push_entry(&mut out, DumpKind::Ciphertext, &r.owner, &r.key_id, &blob);
            for (reader, w) in &r.wrapped {
                let key_id = self.accounts.get(reader).map_or("", |a| a.key_id.as_str());
                push_entry(&mut out, DumpKind::WrappedKey, reader, key_id, &w.to_bytes());
            }
        }
        for g in self.grants.values() {
            let blob = format!("{}|{}|{}|{:?}", g.grantee, g.mode, g.created_ms, g.records);
            push_entry(&mut out, DumpKind::Grant, &g.owner, "", blob.as_bytes());
        }
        for h in self.handshakes.values() {
            push_entry(&mut out, DumpKind::PendingHandshake, &h.owner, "", &h.persisted_bytes());
        }
        push_entry(&mut out, DumpKind::EventLog, "", "", self.log.render().as_bytes());
        out
    }
}
