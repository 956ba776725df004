//! Fully symmetric rank-3 and rank-4 tensors over three axes, stored by their
//! independent (sorted-index) entries.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

const AXES: [char; 3] = ['x', 'y', 'z'];

/// Sorted index tuples of a given rank with their permutation multiplicity.
#[derive(Debug)]
pub(crate) struct Layout<const R: usize> {
    pub tuples: Vec<[usize; R]>,
    pub multiplicity: Vec<f64>,
}

impl<const R: usize> Layout<R> {
    fn build() -> Self {
        let mut tuples = Vec::new();
        let mut idx = [0usize; R];
        loop {
            tuples.push(idx);
            // next non-decreasing tuple
            let mut p = R;
            while p > 0 && idx[p - 1] == 2 {
                p -= 1;
            }
            if p == 0 {
                break;
            }
            idx[p - 1] += 1;
            for q in p..R {
                idx[q] = idx[p - 1];
            }
        }
        let multiplicity = tuples.iter().map(permutations).collect();
        Self { tuples, multiplicity }
    }

    pub fn position(&self, idx: [usize; R]) -> usize {
        let mut s = idx;
        s.sort_unstable();
        self.tuples.iter().position(|t| *t == s).expect("index in range")
    }
}

fn permutations<const R: usize>(t: &[usize; R]) -> f64 {
    let fact = |n: usize| (1..=n).product::<usize>() as f64;
    let mut counts = [0usize; 3];
    for &i in t {
        counts[i] += 1;
    }
    fact(R) / counts.iter().map(|&c| fact(c)).product::<f64>()
}

pub(crate) fn cubic_layout() -> &'static Layout<3> {
    static L: OnceLock<Layout<3>> = OnceLock::new();
    L.get_or_init(Layout::build)
}

pub(crate) fn quartic_layout() -> &'static Layout<4> {
    static L: OnceLock<Layout<4>> = OnceLock::new();
    L.get_or_init(Layout::build)
}

fn label<const R: usize>(t: &[usize; R]) -> String {
    t.iter().map(|&i| AXES[i]).collect()
}

fn parse_label<const R: usize>(s: &str) -> Option<[usize; R]> {
    let chars: Vec<char> = s.chars().collect();
    if chars.len() != R {
        return None;
    }
    let mut out = [0usize; R];
    for (o, c) in out.iter_mut().zip(chars) {
        *o = AXES.iter().position(|&a| a == c)?;
    }
    Some(out)
}

macro_rules! sym_tensor {
    ($name:ident, $rank:literal, $n:literal, $layout:ident) => {
        #[derive(Debug, Clone, Copy, PartialEq, Default)]
        pub struct $name(pub [f64; $n]);

        impl $name {
            pub const LEN: usize = $n;

            /// Entry for any index ordering.
            pub fn get(&self, idx: [usize; $rank]) -> f64 {
                self.0[$layout().position(idx)]
            }

            /// Sets the entry shared by all permutations of `idx`.
            pub fn set(&mut self, idx: [usize; $rank], value: f64) {
                self.0[$layout().position(idx)] = value;
            }

            pub fn entries(&self) -> impl Iterator<Item = ([usize; $rank], f64, f64)> + '_ {
                let l = $layout();
                l.tuples.iter().zip(&l.multiplicity).zip(&self.0).map(|((t, m), c)| (*t, *m, *c))
            }

            pub fn labels() -> Vec<String> {
                $layout().tuples.iter().map(label).collect()
            }

            pub fn is_zero(&self) -> bool {
                self.0.iter().all(|&c| c == 0.0)
            }

            pub fn max_abs(&self) -> f64 {
                self.0.iter().fold(0.0, |a, c| a.max(c.abs()))
            }

            fn as_map(&self) -> BTreeMap<String, f64> {
                $layout().tuples.iter().map(label).zip(self.0).collect()
            }

            fn from_map(map: &BTreeMap<String, f64>) -> Result<Self> {
                let mut out = Self::default();
                for (k, v) in map {
                    let idx = parse_label::<$rank>(k)
                        .ok_or_else(|| Error::InvalidParameter(format!("bad tensor index `{k}`")))?;
                    let mut sorted = idx;
                    sorted.sort_unstable();
                    if sorted != idx {
                        return Err(Error::InvalidParameter(format!("tensor index `{k}` must be sorted")));
                    }
                    out.set(idx, *v);
                }
                Ok(out)
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
                self.as_map().serialize(s)
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
                let map = BTreeMap::<String, f64>::deserialize(d)?;
                Self::from_map(&map).map_err(serde::de::Error::custom)
            }
        }
    };
}

sym_tensor!(Cubic, 3, 10, cubic_layout);
sym_tensor!(Quartic, 4, 15, quartic_layout);

pub type FullQuartic = [[[[f64; 3]; 3]; 3]; 3];

impl Quartic {
    /// Builds symmetric storage from a full tensor, rejecting any entry that
    /// differs from its permutations by more than `rel_tol` of the largest entry.
    pub fn from_full(full: &FullQuartic, rel_tol: f64) -> Result<Self> {
        let scale = full.iter().flatten().flatten().flatten().fold(0.0f64, |a, c| a.max(c.abs()));
        let mut out = Self::default();
        for (slot, t) in quartic_layout().tuples.iter().enumerate() {
            let reference = full[t[0]][t[1]][t[2]][t[3]];
            for p in permutations_of(t) {
                let v = full[p[0]][p[1]][p[2]][p[3]];
                if (v - reference).abs() > rel_tol * scale {
                    return Err(Error::Asymmetric(format!(
                        "γ′_{} = {v:e} differs from γ′_{} = {reference:e}",
                        label(&p),
                        label(t)
                    )));
                }
            }
            out.0[slot] = reference;
        }
        Ok(out)
    }

    pub fn to_full(&self) -> FullQuartic {
        let mut full = [[[[0.0; 3]; 3]; 3]; 3];
        for (i, a) in full.iter_mut().enumerate() {
            for (j, b) in a.iter_mut().enumerate() {
                for (k, c) in b.iter_mut().enumerate() {
                    for (l, d) in c.iter_mut().enumerate() {
                        *d = self.get([i, j, k, l]);
                    }
                }
            }
        }
        full
    }
}

fn permutations_of(t: &[usize; 4]) -> Vec<[usize; 4]> {
    let mut out = Vec::with_capacity(24);
    for a in 0..4 {
        for b in 0..4 {
            for c in 0..4 {
                for d in 0..4 {
                    if a != b && a != c && a != d && b != c && b != d && c != d {
                        out.push([t[a], t[b], t[c], t[d]]);
                    }
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layouts_have_expected_sizes_and_multiplicities() {
        let c = cubic_layout();
        let q = quartic_layout();
        assert_eq!(c.tuples.len(), 10);
        assert_eq!(q.tuples.len(), 15);
        assert_eq!(c.multiplicity.iter().sum::<f64>(), 27.0);
        assert_eq!(q.multiplicity.iter().sum::<f64>(), 81.0);
        assert_eq!(q.multiplicity[q.position([0, 1, 0, 1])], 6.0);
    }

    #[test]
    fn labelled_json_round_trip() {
        let mut g = Quartic::default();
        g.set([2, 0, 0, 1], 1.5);
        let s = serde_json::to_string(&g).unwrap();
        assert!(s.contains("\"xxyz\":1.5"), "{s}");
        let back: Quartic = serde_json::from_str(&s).unwrap();
        assert_eq!(back, g);
        assert!(serde_json::from_str::<Quartic>("{\"yx\":1.0}").is_err());
    }

    #[test]
    fn full_tensor_symmetry_is_checked() {
        let mut g = Quartic::default();
        g.set([0, 0, 1, 1], 2.0);
        let mut full = g.to_full();
        assert_eq!(Quartic::from_full(&full, 1e-12).unwrap(), g);
        full[0][1][0][1] = 2.5;
        assert!(matches!(Quartic::from_full(&full, 1e-12), Err(Error::Asymmetric(_))));
    }
}
