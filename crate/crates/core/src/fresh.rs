//! Fresh-name supply for locations, abstract names and symbolic constants.

use crate::lang::{AbsName, Loc, SymId};
use std::sync::atomic::{AtomicU32, Ordering};

/// Per-run generator. Counters are atomic so the supply can be shared, and
/// never hand out a name twice.
#[derive(Debug, Default)]
pub struct Fresh {
    loc: AtomicU32,
    abs: AtomicU32,
    sym: AtomicU32,
}

impl Fresh {
    pub fn new() -> Fresh {
        Fresh::default()
    }

    pub fn loc(&self) -> Loc {
        Loc::Addr(self.loc.fetch_add(1, Ordering::Relaxed))
    }

    pub fn abs(&self) -> AbsName {
        AbsName(self.abs.fetch_add(1, Ordering::Relaxed))
    }

    pub fn sym(&self) -> SymId {
        SymId(self.sym.fetch_add(1, Ordering::Relaxed))
    }

    /// Make sure future symbolic constants are numbered above `k`.
    pub fn reserve_sym(&self, k: SymId) {
        self.sym.fetch_max(k.0 + 1, Ordering::Relaxed);
    }

    pub fn reserve_abs(&self, a: AbsName) {
        self.abs.fetch_max(a.0 + 1, Ordering::Relaxed);
    }
}
