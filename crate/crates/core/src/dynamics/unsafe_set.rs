use serde::{Deserialize, Serialize};

use super::AgentState;
use crate::poly::Polynomial;

/// Union of blocks; a block is the set where all of its polynomials are
/// strictly positive. Polynomials are in one agent's position coordinates.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UnsafeSet {
    pub labels: Vec<String>,
    pub blocks: Vec<Vec<Polynomial>>,
}

impl UnsafeSet {
    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Index of the first block containing `x`.
    pub fn block_containing(&self, x: &[f64]) -> Option<usize> {
        self.blocks.iter().position(|b| b.iter().all(|w| w.evaluate(x) > 0.0))
    }
}

/// Per agent, the index of the first unsafe block its position lies in.
pub fn unsafe_membership(states: &[AgentState], set: &UnsafeSet) -> Vec<Option<usize>> {
    states.iter().map(|s| set.block_containing(&s.x)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::parse_polynomial;

    fn road() -> UnsafeSet {
        let p = |s: &str| parse_polynomial(s, 2).unwrap();
        UnsafeSet {
            labels: (1..=5).map(|k| format!("omega{k}")).collect(),
            blocks: vec![
                vec![p("4 - (x1 - 8)^2 - (x2 - 4)^2")],
                vec![p("x1 - 7"), p("-2 - x2")],
                vec![p("-x1"), p("x2 - 2")],
                vec![p("-6 - x2")],
                vec![p("x2 - 6")],
            ],
        }
    }

    #[test]
    fn road_membership() {
        let at = |x: f64, y: f64| AgentState::new(vec![x, y], vec![0.0, 0.0]);
        let got = unsafe_membership(&[at(8.0, 4.0), at(0.0, 0.0), at(3.0, 7.0), at(9.0, -3.0)], &road());
        assert_eq!(got, vec![Some(0), None, Some(4), Some(1)]);
    }
}
