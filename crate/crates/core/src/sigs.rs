//! Simulated signatures: an omniscient ledger of issued tokens.
//!
//! Real signatures are replaced by ledger entries so the simulator can count
//! them exactly and so unforgeability holds by construction: `check` succeeds
//! only for (signer, payload) pairs that were actually signed. A Byzantine
//! process can sign anything *with its own key* and can copy any token bytes
//! it has observed (tokens are plain data), but it cannot mint a token that
//! verifies for a correct process's key on a payload that process never
//! signed.
//!
//! Payloads are domain-separated: the digest binds the protocol, the instance
//! and the message kind along with the body, so a signature issued for one
//! slot can never validate in another context.

use crate::types::{Blob, ProcessId};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::{BTreeMap, BTreeSet};

/// Domain tag for a signature payload.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SigDomain {
    /// Protocol family: "cb", "rb", "consensus".
    pub proto: String,
    /// Instance label, e.g. "cb/0" or "consensus/0".
    pub instance: String,
    /// Message kind within the protocol: "sender-msg", "echo", "view-change", …
    pub kind: String,
}

impl SigDomain {
    pub fn new(proto: &str, instance: &str, kind: &str) -> Self {
        SigDomain {
            proto: proto.into(),
            instance: instance.into(),
            kind: kind.into(),
        }
    }
}

/// Digest of a domain-separated payload. Length-prefixed fields prevent
/// ambiguity between (domain, body) splits.
pub fn payload_digest(domain: &SigDomain, body: &[u8]) -> [u8; 32] {
    let mut h = Sha256::new();
    for part in [
        domain.proto.as_bytes(),
        domain.instance.as_bytes(),
        domain.kind.as_bytes(),
        body,
    ] {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part);
    }
    h.finalize().into()
}

/// The token bytes protocols store in registers / embed in messages.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SigToken {
    pub signer: ProcessId,
    pub digest: [u8; 32],
}

impl SigToken {
    pub fn encode(&self) -> Blob {
        Blob::from(serde_json::to_vec(self).expect("token serializes"))
    }

    /// Decode token bytes; garbage yields `None` (and thus fails verification).
    pub fn decode(bytes: &[u8]) -> Option<SigToken> {
        serde_json::from_slice(bytes).ok()
    }
}

/// Per-process counts of issued signatures.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct SignerStats {
    pub total: u64,
    pub background: u64,
}

/// Ledger of every signature issued during a run.
#[derive(Clone, Debug, Default, Serialize)]
pub struct SigLedger {
    issued: BTreeSet<(ProcessId, [u8; 32])>,
    stats: BTreeMap<ProcessId, SignerStats>,
}

impl SigLedger {
    /// Record a signature by `signer` over (domain, body) and return the
    /// token. Caller identity is enforced by the world wrapper.
    pub fn sign(&mut self, signer: ProcessId, domain: &SigDomain, body: &[u8], background: bool) -> SigToken {
        let digest = payload_digest(domain, body);
        self.issued.insert((signer, digest));
        let s = self.stats.entry(signer).or_default();
        s.total += 1;
        if background {
            s.background += 1;
        }
        SigToken { signer, digest }
    }

    /// Pure verification: do these token bytes prove that `expected_signer`
    /// signed (domain, body)?
    pub fn check(&self, token_bytes: &[u8], expected_signer: ProcessId, domain: &SigDomain, body: &[u8]) -> bool {
        let Some(token) = SigToken::decode(token_bytes) else {
            return false;
        };
        token.signer == expected_signer
            && token.digest == payload_digest(domain, body)
            && self.issued.contains(&(token.signer, token.digest))
    }

    /// Whether `signer` ever issued a signature over (domain, body), token
    /// bytes aside. Lets an observer ask "could a valid token for this
    /// payload exist anywhere?" — the basis for checking certificate
    /// invariants against everything signed so far, not just tokens still
    /// sitting in registers.
    pub fn was_issued(&self, signer: ProcessId, domain: &SigDomain, body: &[u8]) -> bool {
        self.issued.contains(&(signer, payload_digest(domain, body)))
    }

    pub fn stats(&self) -> &BTreeMap<ProcessId, SignerStats> {
        &self.stats
    }

    pub fn total_signatures(&self) -> u64 {
        self.stats.values().map(|s| s.total).sum()
    }

    /// Erase the counters, keeping the issued-signature set. The counters are
    /// reporting material — nothing behavioral reads them — so state hashing
    /// drops them: re-signing an already-signed payload must not make a state
    /// look new.
    pub fn scrub_stats(&mut self) {
        self.stats.clear();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dom() -> SigDomain {
        SigDomain::new("cb", "cb/0", "sender-msg")
    }

    #[test]
    fn signed_payload_verifies_for_signer_only() {
        let mut ledger = SigLedger::default();
        let token = ledger.sign(3, &dom(), b"m1", true).encode();
        assert!(ledger.check(token.as_slice(), 3, &dom(), b"m1"));
        // Same bytes claimed for another signer: rejected.
        assert!(!ledger.check(token.as_slice(), 2, &dom(), b"m1"));
        // Same signer, different body: rejected.
        assert!(!ledger.check(token.as_slice(), 3, &dom(), b"m2"));
    }

    #[test]
    fn domain_separation_blocks_cross_instance_replay() {
        let mut ledger = SigLedger::default();
        let token = ledger.sign(1, &dom(), b"m", false).encode();
        let other = SigDomain::new("cb", "cb/1", "sender-msg");
        assert!(!ledger.check(token.as_slice(), 1, &other, b"m"));
        let other_kind = SigDomain::new("rb", "cb/0", "sender-msg");
        assert!(!ledger.check(token.as_slice(), 1, &other_kind, b"m"));
    }

    #[test]
    fn fabricated_tokens_do_not_verify() {
        let ledger = SigLedger::default();
        let forged = SigToken {
            signer: 0,
            digest: payload_digest(&dom(), b"m1"),
        }
        .encode();
        assert!(!ledger.check(forged.as_slice(), 0, &dom(), b"m1"));
        assert!(!ledger.check(b"not a token", 0, &dom(), b"m1"));
    }

    #[test]
    fn stats_split_background_from_explicit() {
        let mut ledger = SigLedger::default();
        ledger.sign(0, &dom(), b"a", true);
        ledger.sign(0, &dom(), b"b", false);
        ledger.sign(1, &dom(), b"c", true);
        assert_eq!(ledger.stats()[&0].total, 2);
        assert_eq!(ledger.stats()[&0].background, 1);
        assert_eq!(ledger.stats()[&1].total, 1);
        assert_eq!(ledger.total_signatures(), 3);
    }
}
