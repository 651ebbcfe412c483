use std::fmt;

use serde::{Deserialize, Serialize};

use crate::frontend::FuncIdx;

/// A call site: the calling function and the instruction's pre-order ordinal in its body.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SiteId {
    pub func: FuncIdx,
    pub ordinal: u32,
}

impl fmt::Display for SiteId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.func, self.ordinal)
    }
}

/// A may-call (or did-call) relation observed at one site.
///
/// Ordering is by caller, then callee, then site ordinal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CallEdge {
    pub caller: FuncIdx,
    pub callee: FuncIdx,
    pub site: u32,
}

impl CallEdge {
    pub fn site_id(&self) -> SiteId {
        SiteId { func: self.caller, ordinal: self.site }
    }
}

impl fmt::Display for CallEdge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} -> {} @ {}", self.caller, self.callee, self.site)
    }
}
