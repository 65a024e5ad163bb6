use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Position of an agent in the network, fixed for the lifetime of a scenario.
///
/// Stored 0-based. Everything user-facing (configs, traces, CSV) uses the
/// 1-based label, so agent 3 is the agent sitting at bus 3.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AgentIndex(pub usize);

impl AgentIndex {
    pub fn from_label(label: usize) -> Option<Self> {
        label.checked_sub(1).map(AgentIndex)
    }

    pub fn label(self) -> usize {
        self.0 + 1
    }
}

impl fmt::Display for AgentIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.label())
    }
}

impl Serialize for AgentIndex {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(self.label() as u64)
    }
}

impl<'de> Deserialize<'de> for AgentIndex {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let label = u64::deserialize(d)? as usize;
        AgentIndex::from_label(label)
            .ok_or_else(|| serde::de::Error::custom("agent labels start at 1"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_are_one_based() {
        let a = AgentIndex(2);
        assert_eq!(a.label(), 3);
        assert_eq!(serde_json::to_string(&a).unwrap(), "3");
        assert_eq!(serde_json::from_str::<AgentIndex>("3").unwrap(), a);
        assert!(serde_json::from_str::<AgentIndex>("0").is_err());
    }
}
