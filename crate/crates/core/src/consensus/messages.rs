//! Consensus message types, signatures and digests.
//!
//! Replicas exchange messages over per-process FIFO streams of consistent
//! broadcasts; the message *content* is one of the variants below, encoded
//! as JSON into the broadcast value. Prepare and Commit are plain data —
//! their authenticity comes from the broadcast itself. View changes and acks
//! carry explicit signatures, because they get re-packaged into transferable
//! certificates.

use crate::sigs::SigDomain;
use crate::types::{Blob, ProcessId};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// A set of view-change certificates (the justification a new-view Prepare
/// carries, and what a view-change tuple points back to).
pub type Proof = Vec<Certificate>;

/// Claim "`val` was the accepted proposal of `view`, justified by `proof`".
/// The initial tuple is `(0, ⊥, ∅)`; a tuple with `val = ⊥` is only ever
/// that. `proof` is empty exactly when `view == 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VcTuple {
    pub view: u64,
    pub val: Option<Blob>,
    pub proof: Proof,
}

impl VcTuple {
    pub fn initial() -> VcTuple {
        VcTuple { view: 0, val: None, proof: Vec::new() }
    }
}

/// The signed portion of a view-change message.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewChangeBody {
    pub target_view: u64,
    pub tuple: VcTuple,
}

impl ViewChangeBody {
    /// Canonical bytes covered by the author's signature.
    pub fn signing_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("view-change body serializes")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignedViewChange {
    pub author: ProcessId,
    pub body: ViewChangeBody,
    pub token: Blob,
}

impl SignedViewChange {
    /// Content digest acks refer to (hex): binds author and body.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.author.to_le_bytes());
        h.update(self.body.signing_bytes());
        hex::encode(h.finalize())
    }
}

/// A co-signature on a view-change digest. `n−f−1` of these from distinct
/// processes (other than the view-change author) complete a certificate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignedAck {
    pub author: ProcessId,
    pub target_view: u64,
    pub vc_digest: String,
    pub token: Blob,
}

/// A view change co-signed by a quorum: by pigeonhole at least one correct
/// process vouched for it, so it can be trusted (and forwarded) without
/// re-running the history checks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub vc: SignedViewChange,
    pub acks: Vec<SignedAck>,
}

impl Certificate {
    pub fn target_view(&self) -> u64 {
        self.vc.body.target_view
    }

    pub fn tuple(&self) -> &VcTuple {
        &self.vc.body.tuple
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ConsensusMsg {
    /// The view's proposal, sent by its primary. `proof` justifies the value
    /// choice for views > 0 and is empty for view 0.
    Prepare { view: u64, val: Blob, proof: Proof },
    /// Second-phase vote: what this replica accepted this view (⊥ when the
    /// primary timed out or proposed invalidly).
    Commit { view: u64, val: Option<Blob> },
    ViewChange(SignedViewChange),
    Ack(SignedAck),
    /// Anything that failed to decode — Byzantine noise occupying one FIFO
    /// slot.
    Opaque(Blob),
}

impl ConsensusMsg {
    pub fn encode(&self) -> Blob {
        Blob::from(serde_json::to_vec(self).expect("consensus message serializes"))
    }

    pub fn decode(bytes: &[u8]) -> ConsensusMsg {
        serde_json::from_slice(bytes).unwrap_or_else(|_| ConsensusMsg::Opaque(Blob::from(bytes)))
    }

    /// View tag used on the signature event of the carrying broadcast.
    pub fn view_tag(&self) -> Option<u64> {
        match self {
            ConsensusMsg::Prepare { view, .. } | ConsensusMsg::Commit { view, .. } => Some(*view),
            ConsensusMsg::ViewChange(svc) => Some(svc.body.target_view),
            ConsensusMsg::Ack(sa) => Some(sa.target_view),
            ConsensusMsg::Opaque(_) => None,
        }
    }
}

pub fn vc_domain(target_view: u64) -> SigDomain {
    SigDomain::new("consensus", &format!("vc/{target_view}"), "view-change")
}

pub fn ack_domain(target_view: u64) -> SigDomain {
    SigDomain::new("consensus", &format!("vc/{target_view}"), "ack")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn messages_round_trip_and_garbage_becomes_opaque() {
        let msg = ConsensusMsg::Prepare { view: 0, val: Blob::from("v"), proof: Vec::new() };
        let blob = msg.encode();
        assert_eq!(ConsensusMsg::decode(blob.as_ref()), msg);

        let noise = ConsensusMsg::decode(b"\xff\xfenot json");
        assert!(matches!(noise, ConsensusMsg::Opaque(_)));
    }

    #[test]
    fn view_change_digest_binds_author_and_content() {
        let body = ViewChangeBody { target_view: 1, tuple: VcTuple::initial() };
        let a = SignedViewChange { author: 0, body: body.clone(), token: Blob::from("t") };
        let b = SignedViewChange { author: 1, body: body.clone(), token: Blob::from("t") };
        assert_ne!(a.digest(), b.digest());
        let mut c = a.clone();
        c.body.target_view = 2;
        assert_ne!(a.digest(), c.digest());
        // The token is not part of the digest — acks co-sign content.
        let mut d = a.clone();
        d.token = Blob::from("other");
        assert_eq!(a.digest(), d.digest());
    }
}
