//! Single-writer multi-reader atomic registers.
//!
//! Each register has exactly one owner process that may write it; every
//! process may read it. The simulator is single-threaded and each scheduler
//! choice performs at most one register access, so accesses are trivially
//! linearizable: the linearization order *is* the schedule order. Registers
//! start at ⊥ (`None`), which is distinct from holding an empty blob.

use crate::types::{Blob, ProcessId};
use serde::Serialize;

/// Dense register handle. Indexes into the world's register file.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct RegisterId(pub u32);

#[derive(Clone, Debug, Serialize)]
pub struct Register {
    pub owner: ProcessId,
    /// Human-readable path, e.g. `cb/0/repl/2/sgn`; appears in traces.
    pub path: String,
    pub value: Option<Blob>,
    /// Number of writes so far. Tasks block on "version unchanged" to avoid
    /// re-polling quiescent memory; the counter is real state (it is part of
    /// the model checker's state identity).
    pub version: u32,
}

/// The world's register file. Registers are allocated once per protocol
/// instance and never freed.
#[derive(Clone, Debug, Default, Serialize)]
pub struct RegisterFile {
    pub regs: Vec<Register>,
}

impl RegisterFile {
    pub fn alloc(&mut self, owner: ProcessId, path: String) -> RegisterId {
        let id = RegisterId(self.regs.len() as u32);
        self.regs.push(Register {
            owner,
            path,
            value: None,
            version: 0,
        });
        id
    }

    pub fn get(&self, id: RegisterId) -> &Register {
        &self.regs[id.0 as usize]
    }

    pub fn get_mut(&mut self, id: RegisterId) -> &mut Register {
        &mut self.regs[id.0 as usize]
    }

    /// Current version of a register (write count).
    pub fn version(&self, id: RegisterId) -> u32 {
        self.get(id).version
    }

    /// True if any of the watched registers has been written since the
    /// recorded version.
    pub fn any_changed(&self, watch: &[(RegisterId, u32)]) -> bool {
        watch.iter().any(|&(id, ver)| self.version(id) != ver)
    }

    /// Rewrite a version snapshot in place as writes-since-snapshot. The
    /// absolute write count is scheduling history; the only thing a snapshot
    /// means is "how far has this register moved since I looked". State
    /// hashing rebases every stored snapshot and then zeroes the registers'
    /// own counters so that histories reaching the same protocol state
    /// actually collide.
    pub fn rebase_snapshot(&self, watch: &mut [(RegisterId, u32)]) {
        for (id, ver) in watch {
            *ver = self.version(*id).saturating_sub(*ver);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registers_start_at_bottom_and_version_zero() {
        let mut file = RegisterFile::default();
        let r = file.alloc(1, "x/msg".into());
        assert_eq!(file.get(r).value, None);
        assert_eq!(file.version(r), 0);
    }

    #[test]
    fn watch_detects_new_writes() {
        let mut file = RegisterFile::default();
        let a = file.alloc(0, "a".into());
        let b = file.alloc(0, "b".into());
        let watch = vec![(a, file.version(a)), (b, file.version(b))];
        assert!(!file.any_changed(&watch));
        let reg = file.get_mut(b);
        reg.value = Some(Blob::from("v"));
        reg.version += 1;
        assert!(file.any_changed(&watch));
    }
}
