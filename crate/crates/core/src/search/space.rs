//! The bounded-weight hypercube `{s : n_l <= HW(s) <= n_u}` and its
//! Hamming-distance-1 neighborhood.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prng::Rng;
use crate::state::DropoutState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchSpaceBounds {
    pub n_total: usize,
    pub n_l: usize,
    pub n_u: usize,
}

impl SearchSpaceBounds {
    /// Validates `n_l <= n_u <= n_total`. Equal bounds are accepted with a
    /// warning: such a space has no edges.
    pub fn new(n_total: usize, n_l: usize, n_u: usize) -> Result<Self> {
        let b = SearchSpaceBounds { n_total, n_l, n_u };
        b.validate()?;
        if n_l == n_u {
            log::warn!(
                "n_l == n_u == {n_l}: every state is isolated, neighbor moves are impossible"
            );
        }
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_total == 0 {
            return Err(Error::Search("search space over zero neurons".into()));
        }
        if self.n_l > self.n_u || self.n_u > self.n_total {
            return Err(Error::Search(format!(
                "infeasible bounds: need n_l <= n_u <= N, got n_l={} n_u={} N={}",
                self.n_l, self.n_u, self.n_total
            )));
        }
        Ok(())
    }

    pub fn contains(&self, s: &DropoutState) -> bool {
        s.len() == self.n_total && (self.n_l..=self.n_u).contains(&s.weight())
    }

    /// `|S| = sum_{i=n_l}^{n_u} C(N, i)`, saturating at `u128::MAX`.
    pub fn cardinality(&self) -> u128 {
        (self.n_l..=self.n_u).fold(0u128, |acc, k| {
            acc.saturating_add(binomial(self.n_total, k))
        })
    }

    /// Bits whose flip keeps `s` inside the bounds, in ascending order.
    pub fn valid_flips(&self, s: &DropoutState) -> Vec<usize> {
        let w = s.weight();
        let can_raise = w < self.n_u;
        let can_lower = w > self.n_l;
        (0..self.n_total)
            .filter(|&i| if s.get(i) { can_lower } else { can_raise })
            .collect()
    }

    pub fn neighbors(&self, s: &DropoutState) -> Vec<DropoutState> {
        self.valid_flips(s).into_iter().map(|i| s.flipped(i)).collect()
    }
}

/// `C(n, k)`, saturating at `u128::MAX`.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for i in 0..k {
        // c * (n - i) / (i + 1) stays integral at every step.
        c = match c.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    c
}

/// Draws a weight uniformly from `[n_l, n_u]`, then a uniform subset of
/// that size.
pub fn random_state(bounds: &SearchSpaceBounds, rng: &mut Rng) -> Result<DropoutState> {
    bounds.validate()?;
    let k = rng.range_inclusive(bounds.n_l, bounds.n_u);
    DropoutState::from_indices(bounds.n_total, &rng.sample_subset(bounds.n_total, k))
}

/// Uniform sample from the in-bounds Hamming neighbors of `s`.
pub fn generate_neighbor(
    s: &DropoutState,
    bounds: &SearchSpaceBounds,
    rng: &mut Rng,
) -> Result<DropoutState> {
    if !bounds.contains(s) {
        return Err(Error::Search(format!(
            "state {s:?} lies outside bounds [{}, {}] over {} neurons",
            bounds.n_l, bounds.n_u, bounds.n_total
        )));
    }
    let flips = bounds.valid_flips(s);
    if flips.is_empty() {
        return Err(Error::Search(format!(
            "state {s:?} has no neighbor within bounds [{}, {}]",
            bounds.n_l, bounds.n_u
        )));
    }
    Ok(s.flipped(flips[rng.below_usize(flips.len())]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    #[test]
    fn binomials() {
        assert_eq!(binomial(16, 2), 120);
        assert_eq!(binomial(16, 4), 1820);
        assert_eq!(binomial(5, 6), 0);
        assert_eq!(binomial(384, 0), 1);
        assert_eq!(binomial(400, 200), u128::MAX);
    }

    #[test]
    fn cardinality_examples() {
        assert_eq!(SearchSpaceBounds::new(6, 2, 3).unwrap().cardinality(), 35);
        assert_eq!(SearchSpaceBounds::new(16, 2, 4).unwrap().cardinality(), 2500);
        assert_eq!(SearchSpaceBounds::new(4, 1, 2).unwrap().cardinality(), 10);
    }

    #[test]
    fn infeasible_bounds() {
        assert!(SearchSpaceBounds::new(4, 3, 2).is_err());
        assert!(SearchSpaceBounds::new(4, 1, 5).is_err());
        let mut rng = Rng::new(0);
        let bad = SearchSpaceBounds {
            n_total: 4,
            n_l: 3,
            n_u: 2,
        };
        assert!(random_state(&bad, &mut rng).is_err());
    }

    #[test]
    fn fixed_weight_draws() {
        let b = SearchSpaceBounds::new(10, 3, 3).unwrap();
        let mut rng = Rng::new(1);
        for _ in 0..100 {
            assert_eq!(random_state(&b, &mut rng).unwrap().weight(), 3);
        }
    }

    #[test]
    fn draws_respect_bounds_and_weights_are_uniform() {
        let b = SearchSpaceBounds::new(16, 2, 4).unwrap();
        let mut rng = Rng::new(2);
        let mut hist = [0usize; 3];
        for _ in 0..10_000 {
            let s = random_state(&b, &mut rng).unwrap();
            assert!(b.contains(&s));
            hist[s.weight() - 2] += 1;
        }
        // Chi-square with 2 degrees of freedom; 13.8 is the 0.001 quantile.
        let expected = 10_000.0 / 3.0;
        let chi2: f64 = hist
            .iter()
            .map(|&o| (o as f64 - expected).powi(2) / expected)
            .sum();
        assert!(chi2 < 13.8, "{hist:?} chi2={chi2}");
    }

    #[test]
    fn upper_edge_excludes_raising_flips() {
        let b = SearchSpaceBounds::new(4, 1, 2).unwrap();
        let s = DropoutState::from_bits(&[true, true, false, false]);
        assert_eq!(b.valid_flips(&s), vec![0, 1]);
        let mut rng = Rng::new(3);
        let mut counts: HashMap<String, usize> = HashMap::new();
        for _ in 0..1000 {
            let n = generate_neighbor(&s, &b, &mut rng).unwrap();
            *counts.entry(n.to_hex()).or_default() += 1;
        }
        assert_eq!(counts.len(), 2);
        for (_, c) in counts {
            assert!((430..570).contains(&c), "{c}");
        }
    }

    #[test]
    fn lower_edge_excludes_lowering_flip() {
        let b = SearchSpaceBounds::new(4, 1, 3).unwrap();
        let s = DropoutState::from_bits(&[true, false, false, false]);
        assert_eq!(b.valid_flips(&s), vec![1, 2, 3]);
        assert!(b.neighbors(&s).iter().all(|n| n.weight() == 2));
    }

    #[test]
    fn interior_state_has_all_flips() {
        let b = SearchSpaceBounds::new(6, 1, 4).unwrap();
        let s = DropoutState::from_bits(&[true, true, false, false, false, false]);
        assert_eq!(b.valid_flips(&s).len(), 6);
    }

    #[test]
    fn no_neighbor_is_an_error() {
        let b = SearchSpaceBounds::new(4, 2, 2).unwrap();
        let s = DropoutState::from_bits(&[true, true, false, false]);
        assert!(matches!(
            generate_neighbor(&s, &b, &mut Rng::new(0)),
            Err(Error::Search(_))
        ));
        let outside = DropoutState::zeros(4);
        assert!(generate_neighbor(&outside, &b, &mut Rng::new(0)).is_err());
    }
}
