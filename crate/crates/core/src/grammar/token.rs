//! Trajectory tokens and the agent kinds they delimit.

use std::fmt;

use serde::{Deserialize, Serialize};

/// One of the nine fixed special strings of the trajectory language.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TokenKind {
    InstructionEnd,
    ReconstructorHead,
    ReconstructorEnd,
    RetrievalHead,
    RetrievalEnd,
    LocatorHead,
    LocatorEnd,
    GeneratorHead,
    GeneratorEnd,
}

impl TokenKind {
    pub const ALL: [TokenKind; 9] = [
        TokenKind::InstructionEnd,
        TokenKind::ReconstructorHead,
        TokenKind::ReconstructorEnd,
        TokenKind::RetrievalHead,
        TokenKind::RetrievalEnd,
        TokenKind::LocatorHead,
        TokenKind::LocatorEnd,
        TokenKind::GeneratorHead,
        TokenKind::GeneratorEnd,
    ];

    /// Canonical surface form.
    pub const fn as_str(self) -> &'static str {
        match self {
            TokenKind::InstructionEnd => "</eoi>",
            TokenKind::ReconstructorHead => "<Reconstructor>",
            TokenKind::ReconstructorEnd => "</eor>",
            TokenKind::RetrievalHead => "<retrieval>",
            TokenKind::RetrievalEnd => "</retrieval>",
            TokenKind::LocatorHead => "<Locator>",
            TokenKind::LocatorEnd => "</eol>",
            TokenKind::GeneratorHead => "<Generator>",
            TokenKind::GeneratorEnd => "</eog>",
        }
    }

    pub fn is_head(self) -> bool {
        self.head_of().is_some()
    }

    pub fn is_end(self) -> bool {
        self.end_of().is_some()
    }

    /// The agent this token opens, if it is a head token.
    pub fn head_of(self) -> Option<AgentKind> {
        AgentKind::ALL.into_iter().find(|a| a.head() == self)
    }

    /// The agent this token closes, if it is an end token.
    pub fn end_of(self) -> Option<AgentKind> {
        AgentKind::ALL.into_iter().find(|a| a.end() == self)
    }

    /// Token whose surface form starts exactly at `s[0..]`.
    pub fn at_start(s: &str) -> Option<TokenKind> {
        if !s.starts_with('<') {
            return None;
        }
        TokenKind::ALL.into_iter().find(|t| s.starts_with(t.as_str()))
    }

    /// First token occurring in `s` at or after byte offset `from`.
    pub fn find_next(s: &str, from: usize) -> Option<(TokenKind, usize)> {
        let tail = &s[from..];
        tail.match_indices('<')
            .find_map(|(i, _)| TokenKind::at_start(&tail[i..]).map(|t| (t, from + i)))
    }

    /// True if any token surface form occurs in `s`.
    pub fn occurs_in(s: &str) -> Option<TokenKind> {
        TokenKind::find_next(s, 0).map(|(t, _)| t)
    }
}

impl fmt::Display for TokenKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The four agent sections of a trajectory, in pipeline order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AgentKind {
    Reconstructor,
    Retrieval,
    Locator,
    Generator,
}

impl AgentKind {
    pub const ALL: [AgentKind; 4] = [
        AgentKind::Reconstructor,
        AgentKind::Retrieval,
        AgentKind::Locator,
        AgentKind::Generator,
    ];

    pub const fn head(self) -> TokenKind {
        match self {
            AgentKind::Reconstructor => TokenKind::ReconstructorHead,
            AgentKind::Retrieval => TokenKind::RetrievalHead,
            AgentKind::Locator => TokenKind::LocatorHead,
            AgentKind::Generator => TokenKind::GeneratorHead,
        }
    }

    pub const fn end(self) -> TokenKind {
        match self {
            AgentKind::Reconstructor => TokenKind::ReconstructorEnd,
            AgentKind::Retrieval => TokenKind::RetrievalEnd,
            AgentKind::Locator => TokenKind::LocatorEnd,
            AgentKind::Generator => TokenKind::GeneratorEnd,
        }
    }

    /// Position in the fixed pipeline order.
    pub const fn rank(self) -> usize {
        self as usize
    }

    /// The agent expected to follow this one in a full trajectory.
    pub fn next(self) -> Option<AgentKind> {
        AgentKind::ALL.get(self.rank() + 1).copied()
    }

    /// True for sections written by the language model (supervised in training).
    pub fn is_generated(self) -> bool {
        self != AgentKind::Retrieval
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            AgentKind::Reconstructor => "reconstructor",
            AgentKind::Retrieval => "retrieval",
            AgentKind::Locator => "locator",
            AgentKind::Generator => "generator",
        };
        f.write_str(s)
    }
}
