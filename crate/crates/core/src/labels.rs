//! Token-level transcripts and their frame-level expansions.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

fn check_ids(ids: &[usize], classes: usize, what: &str) -> Result<()> {
    if ids.is_empty() {
        return Err(domain(format!("{what} must be non-empty")));
    }
    if let Some(bad) = ids.iter().find(|&&id| id >= classes) {
        return Err(domain(format!("{what} id {bad} out of range for {classes} classes")));
    }
    Ok(())
}

/// Transcript `y`: an ordered, non-empty list of class ids.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenSequence(Vec<usize>);

/// Frame-level labels `y_hat`, one class id per frame.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FrameLabels(Vec<usize>);

impl TokenSequence {
    pub fn new(ids: Vec<usize>, classes: usize) -> Result<Self> {
        check_ids(&ids, classes, "token sequence")?;
        Ok(Self(ids))
    }

    pub fn ids(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn has_adjacent_repeats(&self) -> bool {
        self.0.windows(2).any(|w| w[0] == w[1])
    }

    /// Parses whitespace-separated ids, e.g. `"3 1 0 2"`.
    pub fn parse(line: &str, classes: usize) -> Result<Self> {
        let ids = line
            .split_whitespace()
            .map(|tok| {
                tok.parse::<usize>()
                    .map_err(|_| domain(format!("bad token id {tok:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(ids, classes)
    }
}

impl FrameLabels {
    pub fn new(ids: Vec<usize>, classes: usize) -> Result<Self> {
        check_ids(&ids, classes, "frame labels")?;
        Ok(Self(ids))
    }

    pub fn ids(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Checks that every id is a valid class.
    pub fn validate(&self, classes: usize) -> Result<()> {
        check_ids(&self.0, classes, "frame labels")
    }

    /// Run-length collapse of consecutive duplicates.
    pub fn collapse(&self) -> TokenSequence {
        let mut ids = self.0.clone();
        ids.dedup();
        TokenSequence(ids)
    }
}

fn write_ids(f: &mut fmt::Formatter<'_>, ids: &[usize]) -> fmt::Result {
    for (i, id) in ids.iter().enumerate() {
        if i > 0 {
            f.write_str(" ")?;
        }
        write!(f, "{id}")?;
    }
    Ok(())
}

impl fmt::Display for TokenSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_ids(f, &self.0)
    }
}

impl fmt::Display for FrameLabels {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_ids(f, &self.0)
    }
}

/// Repeats each token for its duration.
pub fn expand_durations(tokens: &TokenSequence, durations: &[usize]) -> Result<FrameLabels> {
    if durations.len() != tokens.len() {
        return Err(domain(format!(
            "{} durations for {} tokens",
            durations.len(),
            tokens.len()
        )));
    }
    if let Some(i) = durations.iter().position(|&d| d == 0) {
        return Err(domain(format!("duration of token {i} is zero")));
    }
    let frames = tokens
        .ids()
        .iter()
        .zip(durations)
        .flat_map(|(&id, &d)| std::iter::repeat_n(id, d))
        .collect();
    Ok(FrameLabels(frames))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn expansion_examples() {
        let y = TokenSequence::new(vec![0, 1], 2).unwrap();
        assert_eq!(expand_durations(&y, &[2, 3]).unwrap().ids(), &[0, 0, 1, 1, 1]);
        assert_eq!(expand_durations(&y, &[1, 1]).unwrap().ids(), y.ids());
        assert!(expand_durations(&y, &[1, 0]).is_err());
        assert!(expand_durations(&y, &[1]).is_err());
    }

    #[test]
    fn collapse_example() {
        let l = FrameLabels::new(vec![0, 0, 1, 1, 1], 2).unwrap();
        assert_eq!(l.collapse().ids(), &[0, 1]);
    }

    #[test]
    fn validation() {
        assert!(TokenSequence::new(vec![], 3).is_err());
        assert!(TokenSequence::new(vec![3], 3).is_err());
        assert!(FrameLabels::new(vec![0, 2], 3).is_ok());
        assert_eq!(TokenSequence::parse(" 2 0  1\n", 3).unwrap().ids(), &[2, 0, 1]);
        assert!(TokenSequence::parse("2 x", 3).is_err());
    }

    fn no_repeat_sequence() -> impl Strategy<Value = (Vec<usize>, Vec<usize>)> {
        (1usize..20).prop_flat_map(|n| {
            (
                proptest::collection::vec(0usize..5, n),
                proptest::collection::vec(1usize..6, n),
            )
        })
    }

    proptest! {
        #[test]
        fn collapse_inverts_expansion((raw, durations) in no_repeat_sequence()) {
            let mut ids = raw;
            for i in 1..ids.len() {
                if ids[i] == ids[i - 1] {
                    ids[i] = (ids[i] + 1) % 5;
                }
            }
            let y = TokenSequence::new(ids, 5).unwrap();
            let expanded = expand_durations(&y, &durations).unwrap();
            prop_assert_eq!(expanded.len(), durations.iter().sum::<usize>());
            prop_assert_eq!(expanded.collapse(), y);
        }
    }
}
