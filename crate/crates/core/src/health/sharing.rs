//! PIN handshake sharing.
//!
//! The owner's client picks the records, wraps their keys for the grantee's
//! public key and hands the platform only the wrapped keys and a PIN hash.
//! The PIN itself travels out of band. The wrapped keys are released to the
//! records once the grantee presents the matching PIN.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::{Rng, RngCore};
use sha2::{Digest, Sha256};

use super::{wrap_key, CitizenAccount, HealthError, Platform, RecordId, WrappedKey};

pub const PIN_EXPIRY_MS: u64 = 10 * 60 * 1000;
pub const PIN_ATTEMPTS: u32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ShareMode {
    InPerson,
    RemoteLive,
    Asynchronous,
}

impl fmt::Display for ShareMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ShareMode::InPerson => "in-person",
            ShareMode::RemoteLive => "remote-live",
            ShareMode::Asynchronous => "asynchronous",
        })
    }
}

impl std::str::FromStr for ShareMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "in-person" => Ok(Self::InPerson),
            "remote-live" => Ok(Self::RemoteLive),
            "asynchronous" | "async" => Ok(Self::Asynchronous),
            other => Err(format!("unknown share mode `{other}`")),
        }
    }
}

/// Six decimal digits.
#[derive(Clone, PartialEq, Eq)]
pub struct Pin(pub String);

impl fmt::Debug for Pin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Pin(******)")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct HandshakeId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GrantId(pub u64);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShareGrant {
    pub id: GrantId,
    pub owner: String,
    pub grantee: String,
    pub mode: ShareMode,
    pub records: BTreeSet<RecordId>,
    pub created_ms: u64,
}

#[derive(Debug, Clone)]
pub(super) struct PendingHandshake {
    pub owner: String,
    pub grantee: String,
    pub mode: ShareMode,
    pub pin_hash: [u8; 32],
    pub expires_ms: u64,
    pub attempts_left: u32,
    pub wrapped: BTreeMap<RecordId, WrappedKey>,
}

impl PendingHandshake {
    pub fn persisted_bytes(&self) -> Vec<u8> {
        let mut out = self.pin_hash.to_vec();
        for w in self.wrapped.values() {
            out.extend_from_slice(&w.to_bytes());
        }
        out
    }
}

fn pin_hash(id: HandshakeId, pin: &Pin) -> [u8; 32] {
    Sha256::digest(format!("pin:{}:{}", id.0, pin.0)).into()
}

impl Platform {
    /// Owner side: prepares wrapped keys for `grantee` and returns the PIN
    /// to pass on out of band.
    pub fn start_handshake(
        &mut self,
        owner: &CitizenAccount,
        grantee: &str,
        mode: ShareMode,
        records: &[RecordId],
        rng: &mut impl RngCore,
    ) -> Result<(HandshakeId, Pin), HealthError> {
        self.account_entry(&owner.id)?;
        let grantee_entry = self.account_entry(grantee)?.clone();
        if mode == ShareMode::Asynchronous && self.policy.async_requires_validation && !grantee_entry.validated {
            return Err(HealthError::ValidationRequired);
        }
        let mut wrapped = BTreeMap::new();
        for &rid in records {
            let rec = self.records.get(&rid).ok_or(HealthError::UnknownRecord(rid))?;
            if rec.owner != owner.id {
                return Err(HealthError::AccessDenied {
                    account: owner.id.clone(),
                    record: rid,
                });
            }
            let dk = owner.data_key(rec)?;
            wrapped.insert(rid, wrap_key(&dk, &grantee_entry.public_key, rng));
        }
        self.next_handshake += 1;
        let id = HandshakeId(self.next_handshake);
        let pin = Pin(format!("{:06}", rng.gen_range(0..1_000_000u32)));
        self.handshakes.insert(
            id,
            PendingHandshake {
                owner: owner.id.clone(),
                grantee: grantee.to_string(),
                mode,
                pin_hash: pin_hash(id, &pin),
                expires_ms: self.now_ms + PIN_EXPIRY_MS,
                attempts_left: PIN_ATTEMPTS,
                wrapped,
            },
        );
        self.log.push(
            self.now_ms,
            "platform",
            "handshake-start",
            &format!("hs-{}", id.0),
            &format!("owner={} grantee={grantee} mode={mode}", owner.id),
        );
        Ok((id, pin))
    }

    /// Grantee side: presents the PIN received from the owner.
    pub fn confirm_handshake(&mut self, id: HandshakeId, grantee: &str, pin: &Pin) -> Result<ShareGrant, HealthError> {
        let now = self.now_ms;
        let hs = self.handshakes.get_mut(&id).ok_or(HealthError::UnknownHandshake(id.0))?;
        if hs.grantee != grantee {
            return Err(HealthError::UnknownHandshake(id.0));
        }
        let subject = format!("hs-{}", id.0);
        if now > hs.expires_ms {
            self.handshakes.remove(&id);
            self.log.push(now, "platform", "handshake-expired", &subject, "");
            return Err(HealthError::PinExpired);
        }
        if pin_hash(id, pin) != hs.pin_hash {
            hs.attempts_left -= 1;
            let remaining = hs.attempts_left;
            self.log.push(now, "platform", "pin-mismatch", &subject, &format!("remaining={remaining}"));
            if remaining == 0 {
                self.handshakes.remove(&id);
                return Err(HealthError::PinAttemptsExhausted);
            }
            return Err(HealthError::PinMismatch { remaining });
        }
        let hs = self.handshakes.remove(&id).expect("present");
        for (rid, w) in &hs.wrapped {
            if let Some(rec) = self.records.get_mut(rid) {
                rec.wrapped.insert(hs.grantee.clone(), w.clone());
            }
        }
        self.next_grant += 1;
        let grant = ShareGrant {
            id: GrantId(self.next_grant),
            owner: hs.owner,
            grantee: hs.grantee,
            mode: hs.mode,
            records: hs.wrapped.keys().copied().collect(),
            created_ms: now,
        };
        self.grants.insert(grant.id, grant.clone());
        self.log.push(
            now,
            "platform",
            "grant",
            &format!("grant-{}", grant.id.0),
            &format!("owner={} grantee={} records={}", grant.owner, grant.grantee, grant.records.len()),
        );
        Ok(grant)
    }

    /// Start plus confirm; `channel` models the out-of-band exchange and
    /// returns what the grantee types in.
    pub fn handshake_share(
        &mut self,
        owner: &CitizenAccount,
        grantee: &str,
        mode: ShareMode,
        records: &[RecordId],
        channel: impl FnOnce(&Pin) -> Pin,
        rng: &mut impl RngCore,
    ) -> Result<ShareGrant, HealthError> {
        let (id, pin) = self.start_handshake(owner, grantee, mode, records, rng)?;
        let entered = channel(&pin);
        self.confirm_handshake(id, grantee, &entered)
    }

    /// Ends a grant and drops the grantee's wrapped keys for records no
    /// other live grant still covers.
    pub fn revoke(&mut self, owner: &str, grant: GrantId) -> Result<(), HealthError> {
        match self.grants.get(&grant) {
            Some(g) if g.owner == owner => {}
            _ => return Err(HealthError::UnknownGrant(grant.0)),
        }
        let g = self.grants.remove(&grant).expect("checked");
        for rid in &g.records {
            let still = self
                .grants
                .values()
                .any(|o| o.grantee == g.grantee && o.records.contains(rid));
            if !still {
                if let Some(rec) = self.records.get_mut(rid) {
                    rec.wrapped.remove(&g.grantee);
                }
            }
        }
        self.log.push(self.now_ms, "platform", "revoke", &format!("grant-{}", grant.0), "");
        Ok(())
    }

    pub fn grants(&self) -> impl Iterator<Item = &ShareGrant> {
        self.grants.values()
    }
}

#[cfg(test)]
mod tests {
    use super::super::{ContactHandles, HealthRecord};
    use super::*;
    use crate::calendar::SimDate;
    use crate::eidas::{AuthResult, PersonIdentity};
    use crate::registry::AssuranceLevel;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    struct Fixture {
        p: Platform,
        owner: CitizenAccount,
        doctor: CitizenAccount,
        rec: RecordId,
        rng: ChaCha8Rng,
    }

    fn fixture() -> Fixture {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut p = Platform::new(SimDate::ymd(2020, 1, 1), 2);
        let owner = p.register_citizen(ContactHandles::email("o@x"), None, &mut rng).unwrap();
        let doctor = p.register_citizen(ContactHandles::email("d@x"), None, &mut rng).unwrap();
        let rec = p.upload_record(&owner, &HealthRecord::new("note", "x-ray ok"), &mut rng).unwrap();
        Fixture {
            p,
            owner,
            doctor,
            rec,
            rng,
        }
    }

    #[test]
    fn matching_pin_grants_access() {
        let mut f = fixture();
        let g = f
            .p
            .handshake_share(&f.owner, &f.doctor.id, ShareMode::InPerson, &[f.rec], |p| p.clone(), &mut f.rng)
            .unwrap();
        assert_eq!(f.p.read(&f.doctor, f.rec).unwrap().payload, b"x-ray ok");
        f.p.revoke(&f.owner.id, g.id).unwrap();
        assert!(f.p.read(&f.doctor, f.rec).is_err());
    }

    #[test]
    fn wrong_pin_and_exhaustion() {
        let mut f = fixture();
        let (id, pin) = f
            .p
            .start_handshake(&f.owner, &f.doctor.id, ShareMode::RemoteLive, &[f.rec], &mut f.rng)
            .unwrap();
        let wrong = Pin(if pin.0 == "000000" { "000001".into() } else { "000000".into() });
        assert_eq!(
            f.p.confirm_handshake(id, &f.doctor.id, &wrong),
            Err(HealthError::PinMismatch { remaining: 2 })
        );
        assert_eq!(
            f.p.confirm_handshake(id, &f.doctor.id, &wrong),
            Err(HealthError::PinMismatch { remaining: 1 })
        );
        assert_eq!(
            f.p.confirm_handshake(id, &f.doctor.id, &wrong),
            Err(HealthError::PinAttemptsExhausted)
        );
        assert_eq!(
            f.p.confirm_handshake(id, &f.doctor.id, &pin),
            Err(HealthError::UnknownHandshake(id.0))
        );
    }

    #[test]
    fn pin_expires_after_ten_minutes() {
        let mut f = fixture();
        let (id, pin) = f
            .p
            .start_handshake(&f.owner, &f.doctor.id, ShareMode::InPerson, &[f.rec], &mut f.rng)
            .unwrap();
        f.p.advance_ms(PIN_EXPIRY_MS + 1);
        assert_eq!(f.p.confirm_handshake(id, &f.doctor.id, &pin), Err(HealthError::PinExpired));
    }

    #[test]
    fn asynchronous_mode_needs_validated_grantee() {
        let mut f = fixture();
        assert_eq!(
            f.p.start_handshake(&f.owner, &f.doctor.id, ShareMode::Asynchronous, &[f.rec], &mut f.rng)
                .unwrap_err(),
            HealthError::ValidationRequired
        );
        let eid = AuthResult::Success {
            identity: PersonIdentity::new("Rossi", "Marco", SimDate::ymd(1970, 1, 1), "IT/1"),
            asserting_scheme: "IT".parse().unwrap(),
            assurance: AssuranceLevel::Substantial,
        };
        let vd = f
            .p
            .register_citizen(ContactHandles::email("v@x"), Some(&eid), &mut f.rng)
            .unwrap();
        f.p.handshake_share(&f.owner, &vd.id, ShareMode::Asynchronous, &[f.rec], |p| p.clone(), &mut f.rng)
            .unwrap();
    }

    #[derive(Debug, Clone)]
    enum Op {
        Grant(usize, Vec<usize>),
        Revoke(usize),
    }

    fn op() -> impl Strategy<Value = Op> {
        prop_oneof![
            (0..3usize, prop::collection::vec(0..4usize, 1..4)).prop_map(|(g, r)| Op::Grant(g, r)),
            (0..8usize).prop_map(Op::Revoke),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn readers_are_owner_plus_live_grantees(ops in prop::collection::vec(op(), 0..12)) {
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            let mut p = Platform::new(SimDate::ymd(2020, 1, 1), 3);
            let owner = p.register_citizen(ContactHandles::email("o@x"), None, &mut rng).unwrap();
            let others: Vec<_> = (0..3)
                .map(|i| p.register_citizen(ContactHandles::email(format!("g{i}@x")), None, &mut rng).unwrap())
                .collect();
            let recs: Vec<_> = (0..4)
                .map(|i| p.upload_record(&owner, &HealthRecord::new("t", vec![i as u8]), &mut rng).unwrap())
                .collect();
            let mut live: Vec<GrantId> = Vec::new();
            for o in ops {
                match o {
                    Op::Grant(g, rs) => {
                        let rs: Vec<_> = rs.iter().map(|i| recs[*i]).collect();
                        let grant = p
                            .handshake_share(&owner, &others[g].id, ShareMode::InPerson, &rs, |p| p.clone(), &mut rng)
                            .unwrap();
                        live.push(grant.id);
                    }
                    Op::Revoke(i) if !live.is_empty() => {
                        let id = live.remove(i % live.len());
                        p.revoke(&owner.id, id).unwrap();
                    }
                    Op::Revoke(_) => {}
                }
            }
            for &r in &recs {
                let mut expected: std::collections::BTreeSet<String> = [owner.id.clone()].into();
                for g in p.grants() {
                    if g.records.contains(&r) {
                        expected.insert(g.grantee.clone());
                    }
                }
                prop_assert_eq!(p.readers(r).unwrap(), expected.clone());
                for acct in std::iter::once(&owner).chain(others.iter()) {
                    prop_assert_eq!(p.read(acct, r).is_ok(), expected.contains(&acct.id));
                }
            }
        }
    }
}
