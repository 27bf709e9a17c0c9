use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Mitigation primitive a switch agent can request, in increasing severity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Action {
    Allow,
    Alert,
    Mirror,
    RateLimit,
    DropFlow,
    Quarantine,
}

impl Action {
    pub const ALL: [Action; 6] =
        [Action::Allow, Action::Alert, Action::Mirror, Action::RateLimit, Action::DropFlow, Action::Quarantine];

    pub const COUNT: usize = 6;

    pub fn severity_rank(self) -> u8 {
        self as u8
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    /// Actions realized through controller-installed rules with delayed effect.
    pub fn is_controller_heavy(self) -> bool {
        matches!(self, Action::DropFlow | Action::Quarantine)
    }

    /// Counted as an attack detection when scoring F1.
    pub fn is_positive(self) -> bool {
        matches!(self, Action::Alert | Action::RateLimit | Action::DropFlow | Action::Quarantine)
    }

    /// Actions that actually restrict traffic.
    pub fn is_containment(self) -> bool {
        matches!(self, Action::RateLimit | Action::DropFlow | Action::Quarantine)
    }

    /// FlowMod / meter jobs one submission of this action places on the controller.
    pub fn nominal_flowmods(self) -> u32 {
        match self {
            Action::RateLimit => 1,
            Action::DropFlow => 3,
            Action::Quarantine => 4,
            _ => 0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Action::Allow => "ALLOW",
            Action::Alert => "ALERT",
            Action::Mirror => "MIRROR",
            Action::RateLimit => "RATE_LIMIT",
            Action::DropFlow => "DROP_FLOW",
            Action::Quarantine => "QUARANTINE",
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Action {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Action::ALL
            .into_iter()
            .find(|a| a.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown action `{s}`"))
    }
}

/// Bit set over the six actions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct ActionSet(u8);

impl ActionSet {
    pub const EMPTY: ActionSet = ActionSet(0);
    pub const FULL: ActionSet = ActionSet(0b11_1111);

    pub fn only(a: Action) -> Self {
        ActionSet(1 << a.index())
    }

    pub fn contains(self, a: Action) -> bool {
        self.0 & (1 << a.index()) != 0
    }

    pub fn insert(&mut self, a: Action) {
        self.0 |= 1 << a.index();
    }

    pub fn remove(&mut self, a: Action) {
        self.0 &= !(1 << a.index());
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_subset(self, other: ActionSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = Action> {
        Action::ALL.into_iter().filter(move |a| self.contains(*a))
    }
}

impl FromIterator<Action> for ActionSet {
    fn from_iter<I: IntoIterator<Item = Action>>(iter: I) -> Self {
        let mut s = ActionSet::EMPTY;
        for a in iter {
            s.insert(a);
        }
        s
    }
}
