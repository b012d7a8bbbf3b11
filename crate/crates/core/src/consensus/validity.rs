//! Validity rules for consensus messages.
//!
//! Everything here is a deterministic predicate over message structures and
//! a receiver's per-author FIFO delivery history. Correct processes deliver
//! identical per-author prefixes (FIFO over consistent broadcasts), so their
//! verdicts on the same message coincide — that is what makes an ack by any
//! single correct process transferable evidence.
//!
//! Signature checks go through the world so they are traced; there is no
//! other side effect.

use super::messages::{
    ack_domain, vc_domain, Certificate, ConsensusMsg, Proof, SignedViewChange, VcTuple,
};
use crate::substrate::world::World;
use crate::types::{Blob, ProcessId};
use std::collections::BTreeSet;

/// Round-robin primary: ordinal of the view's proposer.
pub fn primary_ordinal(n: usize, view: u64) -> usize {
    (view % n as u64) as usize
}

/// Structural + signature check of one certificate against its target view.
/// Deliberately *not* a history check — holding a well-formed certificate is
/// proof that somebody correct already did that (a quorum of contributors
/// must include a correct process).
pub fn validate_certificate(world: &mut World, me: ProcessId, cert: &Certificate, target: u64) -> bool {
    let quorum = world.cfg.quorum();
    let replicas = world.cfg.replicators.clone();
    let svc = &cert.vc;
    if svc.body.target_view != target || !replicas.contains(&svc.author) {
        return false;
    }
    if !tuple_shape_ok(&svc.body.tuple) || svc.body.tuple.view >= target {
        return false;
    }
    let body = svc.body.signing_bytes();
    if !world.verify_token(me, svc.token.as_ref(), svc.author, &vc_domain(target), &body) {
        return false;
    }
    if cert.acks.len() < quorum.saturating_sub(1) {
        return false;
    }
    let digest = svc.digest();
    let mut seen = BTreeSet::new();
    for ack in &cert.acks {
        if ack.author == svc.author
            || !replicas.contains(&ack.author)
            || !seen.insert(ack.author)
            || ack.target_view != target
            || ack.vc_digest != digest
        {
            return false;
        }
        if !world.verify_token(
            me,
            ack.token.as_ref(),
            ack.author,
            &ack_domain(target),
            digest.as_bytes(),
        ) {
            return false;
        }
    }
    true
}

/// Shape constraints every tuple must satisfy regardless of context:
/// a ⊥ value only in the initial tuple, and a proof exactly when view > 0.
fn tuple_shape_ok(t: &VcTuple) -> bool {
    if t.val.is_none() && (t.view != 0 || !t.proof.is_empty()) {
        return false;
    }
    if t.view == 0 && !t.proof.is_empty() {
        return false;
    }
    if t.view > 0 && t.proof.is_empty() {
        return false;
    }
    true
}

/// Full recursive tuple check: shape, then (for view > 0) a valid proof for
/// that view whose extracted estimate the value matches. Terminates because
/// certificate tuples have strictly smaller views than their target.
pub fn validate_tuple(world: &mut World, me: ProcessId, tuple: &VcTuple) -> bool {
    if !tuple_shape_ok(tuple) {
        return false;
    }
    if tuple.view == 0 {
        return true; // any value (or ⊥) is a legal view-0 outcome
    }
    let val = tuple.val.as_ref().expect("shape check rules out ⊥ here");
    validate_proof(world, me, &tuple.proof, tuple.view)
        && prepare_val_ok(world, me, &tuple.proof, val)
}

/// A proof justifies entering `target`: a quorum of certificates for it from
/// distinct authors, pairwise non-conflicting.
pub fn validate_proof(world: &mut World, me: ProcessId, proof: &Proof, target: u64) -> bool {
    let quorum = world.cfg.quorum();
    if proof.len() < quorum {
        return false;
    }
    let mut authors = BTreeSet::new();
    for cert in proof {
        if !authors.insert(cert.vc.author) {
            return false;
        }
        if !validate_certificate(world, me, cert, target) {
            return false;
        }
    }
    for (i, a) in proof.iter().enumerate() {
        for b in proof.iter().skip(i + 1) {
            if certificates_conflict(world, me, a, b) {
                return false;
            }
        }
    }
    true
}

/// Two certificates conflict when their tuples claim different accepted
/// values for the same view and both claims hold up under full validation.
/// (Unsubstantiated claims cannot conflict — they are ignored instead.)
pub fn certificates_conflict(world: &mut World, me: ProcessId, a: &Certificate, b: &Certificate) -> bool {
    let (ta, tb) = (a.tuple(), b.tuple());
    ta.view == tb.view
        && ta.val.is_some()
        && tb.val.is_some()
        && ta.val != tb.val
        && validate_tuple(world, me, ta)
        && validate_tuple(world, me, tb)
}

/// The estimate a proof carries: the value of the highest-view fully valid
/// non-⊥ tuple (ties broken toward the lowest author — by conflict-freedom
/// the tied values are equal anyway). `None` means every tuple was initial:
/// the new primary is free to propose.
pub fn extract_est(world: &mut World, me: ProcessId, proof: &Proof) -> Option<Blob> {
    let mut best: Option<(u64, ProcessId, Blob)> = None;
    for cert in proof {
        let t = cert.tuple();
        let Some(val) = &t.val else { continue };
        if !validate_tuple(world, me, t) {
            continue;
        }
        let candidate = (t.view, cert.vc.author, val.clone());
        best = match best {
            None => Some(candidate),
            Some(cur) => {
                if (candidate.0, std::cmp::Reverse(candidate.1)) > (cur.0, std::cmp::Reverse(cur.1)) {
                    Some(candidate)
                } else {
                    Some(cur)
                }
            }
        };
    }
    best.map(|(_, _, v)| v)
}

/// Is `val` an admissible proposal given `proof`? Bound to the extracted
/// estimate when one exists, free otherwise.
pub fn prepare_val_ok(world: &mut World, me: ProcessId, proof: &Proof, val: &Blob) -> bool {
    match extract_est(world, me, proof) {
        Some(est) => *val == est,
        None => true,
    }
}

/// Validity of the proposal for `view` (authorship and first-in-stream are
/// the caller's job; this checks the justification).
pub fn validate_prepare(world: &mut World, me: ProcessId, view: u64, val: &Blob, proof: &Proof) -> bool {
    if view == 0 {
        proof.is_empty()
    } else {
        validate_proof(world, me, proof, view) && prepare_val_ok(world, me, proof, val)
    }
}

// ---- per-author FIFO history checks -------------------------------------------

/// First Prepare for `view` in the primary's stream (later ones are ignored:
/// within one FIFO stream, the first proposal per view is *the* proposal).
pub fn first_prepare_in(history: &[ConsensusMsg], view: u64) -> Option<(&Blob, &Proof)> {
    history.iter().find_map(|m| match m {
        ConsensusMsg::Prepare { view: v, val, proof } if *v == view => Some((val, proof)),
        _ => None,
    })
}

/// First Commit for `view` in an author's stream, with its position.
pub fn first_commit_in(history: &[ConsensusMsg], view: u64) -> Option<(usize, &Option<Blob>)> {
    history.iter().enumerate().find_map(|(i, m)| match m {
        ConsensusMsg::Commit { view: v, val } if *v == view => Some((i, val)),
        _ => None,
    })
}

/// FIFO staleness rule for a Commit at `pos`: invalid if its author had
/// already moved to a later view (sent a view change targeting a view beyond
/// this one) earlier in its stream.
pub fn commit_fifo_ok(history: &[ConsensusMsg], pos: usize, view: u64) -> bool {
    !history[..pos].iter().any(|m| match m {
        ConsensusMsg::ViewChange(svc) => svc.body.target_view > view,
        _ => false,
    })
}

/// The author's latest non-⊥-valued Commit in a prefix: what its view-change
/// tuple must match.
pub fn latest_valued_commit(prefix: &[ConsensusMsg]) -> Option<(u64, &Blob)> {
    prefix.iter().rev().find_map(|m| match m {
        ConsensusMsg::Commit { view, val: Some(v) } => Some((*view, v)),
        _ => None,
    })
}

/// Full check for acking another replica's view change, given the FIFO
/// prefix of that author's stream *before* the view change itself.
pub fn validate_view_change(
    world: &mut World,
    me: ProcessId,
    prefix: &[ConsensusMsg],
    svc: &SignedViewChange,
) -> bool {
    let target = svc.body.target_view;
    if target == 0 || !world.cfg.replicators.contains(&svc.author) {
        return false;
    }
    // Only the first view change per target view counts.
    let repeat = prefix.iter().any(|m| match m {
        ConsensusMsg::ViewChange(prev) => prev.body.target_view == target,
        _ => false,
    });
    if repeat {
        return false;
    }
    // The author must have participated in every elapsed view: exactly one
    // Commit each for views 0..target-1.
    for u in 0..target {
        let commits = prefix
            .iter()
            .filter(|m| matches!(m, ConsensusMsg::Commit { view, .. } if *view == u))
            .count();
        if commits != 1 {
            return false;
        }
    }
    // The tuple must restate the author's own latest accepted value.
    let tuple = &svc.body.tuple;
    match latest_valued_commit(prefix) {
        Some((cv, cval)) => {
            if tuple.view != cv || tuple.val.as_ref() != Some(cval) {
                return false;
            }
        }
        None => {
            if *tuple != VcTuple::initial() {
                return false;
            }
        }
    }
    let body = svc.body.signing_bytes();
    if !world.verify_token(me, svc.token.as_ref(), svc.author, &vc_domain(target), &body) {
        return false;
    }
    validate_tuple(world, me, tuple)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::consensus::messages::{SignedAck, ViewChangeBody};
    use crate::substrate::world::SimParams;
    use crate::types::SystemConfig;

    fn world3() -> World {
        let cfg = SystemConfig { num_processes: 3, f: 1, replicators: vec![0, 1, 2] };
        World::new(cfg, SimParams::default(), false).unwrap()
    }

    fn signed_vc(world: &mut World, author: ProcessId, target: u64, tuple: VcTuple) -> SignedViewChange {
        let body = ViewChangeBody { target_view: target, tuple };
        let bytes = body.signing_bytes();
        let token = world
            .sign_token(author, author, &vc_domain(target), &bytes, false, Some(target))
            .unwrap();
        SignedViewChange { author, body, token }
    }

    fn ack_of(world: &mut World, acker: ProcessId, svc: &SignedViewChange) -> SignedAck {
        let target = svc.body.target_view;
        let digest = svc.digest();
        let token = world
            .sign_token(acker, acker, &ack_domain(target), digest.as_bytes(), false, Some(target))
            .unwrap();
        SignedAck { author: acker, target_view: target, vc_digest: digest, token }
    }

    fn cert_of(world: &mut World, author: ProcessId, target: u64, tuple: VcTuple, ackers: &[ProcessId]) -> Certificate {
        let svc = signed_vc(world, author, target, tuple);
        let acks = ackers.iter().map(|&a| ack_of(world, a, &svc)).collect();
        Certificate { vc: svc, acks }
    }

    #[test]
    fn certificate_requires_quorum_of_distinct_foreign_acks() {
        let mut w = world3();
        let good = cert_of(&mut w, 0, 1, VcTuple::initial(), &[1]);
        assert!(validate_certificate(&mut w, 2, &good, 1));

        // Wrong target view.
        assert!(!validate_certificate(&mut w, 2, &good, 2));

        // No acks at all (quorum-1 = 1 needed).
        let bare = Certificate { vc: good.vc.clone(), acks: vec![] };
        assert!(!validate_certificate(&mut w, 2, &bare, 1));

        // Self-ack doesn't count.
        let selfish = {
            let svc = signed_vc(&mut w, 1, 1, VcTuple::initial());
            let ack = ack_of(&mut w, 1, &svc);
            Certificate { vc: svc, acks: vec![ack] }
        };
        assert!(!validate_certificate(&mut w, 2, &selfish, 1));

        // Ack token by a different signer than claimed.
        let forged = {
            let svc = signed_vc(&mut w, 0, 1, VcTuple::initial());
            let mut ack = ack_of(&mut w, 1, &svc);
            ack.author = 2; // claims 2, token is 1's
            Certificate { vc: svc, acks: vec![ack] }
        };
        assert!(!validate_certificate(&mut w, 2, &forged, 1));
    }

    #[test]
    fn tuple_shape_violations_are_rejected() {
        let mut w = world3();
        // ⊥ value outside the initial tuple.
        let bad1 = cert_of(&mut w, 0, 2, VcTuple { view: 1, val: None, proof: vec![] }, &[1]);
        assert!(!validate_certificate(&mut w, 2, &bad1, 2));
        // Tuple view must precede the target.
        let bad2 = cert_of(
            &mut w,
            0,
            1,
            VcTuple { view: 1, val: Some(Blob::from("v")), proof: vec![] },
            &[1],
        );
        assert!(!validate_certificate(&mut w, 2, &bad2, 1));
    }

    fn quorum_proof(world: &mut World, target: u64, tuples: &[(ProcessId, VcTuple)]) -> Proof {
        tuples
            .iter()
            .map(|(author, t)| {
                let ackers: Vec<ProcessId> =
                    world.cfg.replicators.iter().copied().filter(|r| r != author).take(1).collect();
                cert_of(world, *author, target, t.clone(), &ackers)
            })
            .collect()
    }

    #[test]
    fn proof_extracts_highest_view_estimate() {
        let mut w = world3();
        // All-initial proof: free choice.
        let p0 = quorum_proof(&mut w, 1, &[(0, VcTuple::initial()), (1, VcTuple::initial())]);
        assert!(validate_proof(&mut w, 2, &p0, 1));
        assert_eq!(extract_est(&mut w, 2, &p0), None);
        assert!(prepare_val_ok(&mut w, 2, &p0, &Blob::from("anything")));

        // One participant accepted "v" in view 0: the estimate binds.
        let accepted = VcTuple { view: 0, val: Some(Blob::from("v")), proof: vec![] };
        let p1 = quorum_proof(&mut w, 1, &[(0, accepted), (1, VcTuple::initial())]);
        assert!(validate_proof(&mut w, 2, &p1, 1));
        assert_eq!(extract_est(&mut w, 2, &p1), Some(Blob::from("v")));
        assert!(!prepare_val_ok(&mut w, 2, &p1, &Blob::from("other")));
        assert!(validate_prepare(&mut w, 2, 1, &Blob::from("v"), &p1));
    }

    #[test]
    fn conflicting_certificates_invalidate_a_proof() {
        let mut w = world3();
        let t_v = VcTuple { view: 0, val: Some(Blob::from("v")), proof: vec![] };
        let t_w = VcTuple { view: 0, val: Some(Blob::from("w")), proof: vec![] };
        let proof = quorum_proof(&mut w, 1, &[(0, t_v.clone()), (1, t_w.clone())]);
        let c0 = proof[0].clone();
        let c1 = proof[1].clone();
        assert!(certificates_conflict(&mut w, 2, &c0, &c1));
        assert!(!validate_proof(&mut w, 2, &proof, 1));
        // Same claims, same value: no conflict.
        let proof2 = quorum_proof(&mut w, 1, &[(0, t_v.clone()), (1, t_v)]);
        assert!(validate_proof(&mut w, 2, &proof2, 1));
        // ⊥ never conflicts.
        let proof3 = quorum_proof(&mut w, 1, &[(0, t_w), (1, VcTuple::initial())]);
        assert!(validate_proof(&mut w, 2, &proof3, 1));
    }

    #[test]
    fn duplicate_authors_invalidate_a_proof() {
        let mut w = world3();
        let proof = quorum_proof(&mut w, 1, &[(0, VcTuple::initial()), (0, VcTuple::initial())]);
        assert!(!validate_proof(&mut w, 2, &proof, 1));
    }

    #[test]
    fn view_zero_prepare_must_carry_no_proof() {
        let mut w = world3();
        assert!(validate_prepare(&mut w, 2, 0, &Blob::from("v"), &vec![]));
        let p = quorum_proof(&mut w, 1, &[(0, VcTuple::initial()), (1, VcTuple::initial())]);
        assert!(!validate_prepare(&mut w, 2, 0, &Blob::from("v"), &p));
    }

    #[test]
    fn view_change_checks_commit_history() {
        let mut w = world3();
        let commit_v = ConsensusMsg::Commit { view: 0, val: Some(Blob::from("v")) };
        let accepted = VcTuple { view: 0, val: Some(Blob::from("v")), proof: vec![] };

        // Honest: committed v in view 0, tuple restates it.
        let svc = signed_vc(&mut w, 1, 1, accepted.clone());
        assert!(validate_view_change(&mut w, 0, &[commit_v.clone()], &svc));

        // Lying tuple: claims v but committed w.
        let commit_w = ConsensusMsg::Commit { view: 0, val: Some(Blob::from("w")) };
        let svc2 = signed_vc(&mut w, 1, 1, accepted.clone());
        assert!(!validate_view_change(&mut w, 0, &[commit_w], &svc2));

        // Claims initial but committed a value.
        let svc3 = signed_vc(&mut w, 1, 1, VcTuple::initial());
        assert!(!validate_view_change(&mut w, 0, &[commit_v.clone()], &svc3));

        // Committed ⊥: initial tuple is correct.
        let commit_bot = ConsensusMsg::Commit { view: 0, val: None };
        let svc4 = signed_vc(&mut w, 1, 1, VcTuple::initial());
        assert!(validate_view_change(&mut w, 0, &[commit_bot], &svc4));

        // Missing the view-0 commit entirely: no participation, no ack.
        let svc5 = signed_vc(&mut w, 1, 1, VcTuple::initial());
        assert!(!validate_view_change(&mut w, 0, &[], &svc5));

        // A second view change for the same target is ignored.
        let svc6 = signed_vc(&mut w, 1, 1, accepted.clone());
        let prefix = vec![commit_v, ConsensusMsg::ViewChange(svc6.clone())];
        assert!(!validate_view_change(&mut w, 0, &prefix, &svc6));
    }

    #[test]
    fn stale_commits_after_a_view_change_are_invalid() {
        let mut w = world3();
        let svc = signed_vc(&mut w, 1, 2, VcTuple::initial());
        let history = vec![
            ConsensusMsg::Commit { view: 0, val: Some(Blob::from("v")) },
            ConsensusMsg::ViewChange(svc),
            ConsensusMsg::Commit { view: 1, val: Some(Blob::from("v")) },
        ];
        let (pos, _) = first_commit_in(&history, 1).unwrap();
        assert_eq!(pos, 2);
        // The view change targeted view 2 > 1, so the later commit for view 1
        // is stale.
        assert!(!commit_fifo_ok(&history, pos, 1));
        let (pos0, _) = first_commit_in(&history, 0).unwrap();
        assert!(commit_fifo_ok(&history, pos0, 0));
    }
}
