//! DAGs under a parent ordering.
//!
//! Vertices are 0-based. Every edge points from a larger index to a smaller
//! one, so `parents(i)` only ever holds vertices `j > i` and acyclicity is
//! structural. The text format on disk is 1-based.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Parent-ordered DAG. Parent lists are kept sorted, so derived equality,
/// hashing and ordering are canonical.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Dag {
    parents: Vec<Vec<usize>>,
}

impl Dag {
    pub fn empty(p: usize) -> Self {
        Self {
            parents: vec![Vec::new(); p],
        }
    }

    /// Every admissible edge present.
    pub fn full(p: usize) -> Self {
        Self {
            parents: (0..p).map(|i| (i + 1..p).collect()).collect(),
        }
    }

    pub fn from_parents(p: usize, mut parents: Vec<Vec<usize>>) -> Result<Self> {
        if parents.len() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                found: parents.len(),
            });
        }
        for (i, pa) in parents.iter_mut().enumerate() {
            pa.sort_unstable();
            pa.dedup();
            for &j in pa.iter() {
                if j >= p {
                    return Err(Error::IndexOutOfRange { index: j, p });
                }
                if j <= i {
                    return Err(Error::InvalidEdge { from: j, to: i });
                }
            }
        }
        Ok(Self { parents })
    }

    #[inline]
    pub fn p(&self) -> usize {
        self.parents.len()
    }

    fn check(&self, i: usize) -> Result<()> {
        if i >= self.p() {
            Err(Error::IndexOutOfRange {
                index: i,
                p: self.p(),
            })
        } else {
            Ok(())
        }
    }

    pub fn parents(&self, i: usize) -> Result<&[usize]> {
        self.check(i)?;
        Ok(&self.parents[i])
    }

    /// Parent list without the bounds check; panics on a bad index.
    #[inline]
    pub fn parents_of(&self, i: usize) -> &[usize] {
        &self.parents[i]
    }

    /// Number of parents of `i`.
    pub fn nu(&self, i: usize) -> Result<usize> {
        self.check(i)?;
        Ok(self.parents[i].len())
    }

    pub fn children(&self, i: usize) -> Result<Vec<usize>> {
        self.check(i)?;
        Ok((0..i)
            .filter(|&j| self.parents[j].binary_search(&i).is_ok())
            .collect())
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        to < self.p() && self.parents[to].binary_search(&from).is_ok()
    }

    pub fn edge_count(&self) -> usize {
        self.parents.iter().map(Vec::len).sum()
    }

    /// Edges as `(parent, child)` pairs in child-major order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.parents
            .iter()
            .enumerate()
            .flat_map(|(c, pa)| pa.iter().map(move |&j| (j, c)))
    }

    /// `parents[j] = { i > j : |L[i][j]| > tau }`.
    pub fn from_cholesky_support(l: &Matrix, tau: f64) -> Self {
        let p = l.rows();
        let parents = (0..p)
            .map(|j| (j + 1..p).filter(|&i| l[(i, j)].abs() > tau).collect())
            .collect();
        Self { parents }
    }

    /// Adds the edge `from -> to` if absent, removes it if present.
    pub fn toggle_edge(&self, from: usize, to: usize) -> Result<Self> {
        let mut out = self.clone();
        out.toggle_in_place(from, to)?;
        Ok(out)
    }

    pub(crate) fn toggle_in_place(&mut self, from: usize, to: usize) -> Result<()> {
        if from <= to {
            return Err(Error::InvalidEdge { from, to });
        }
        self.check(from)?;
        let pa = &mut self.parents[to];
        match pa.binary_search(&from) {
            Ok(pos) => {
                pa.remove(pos);
            }
            Err(pos) => pa.insert(pos, from),
        }
        Ok(())
    }

    /// All `2^(p(p-1)/2)` parent-ordered DAGs on `p` vertices. Small `p` only.
    pub fn enumerate_all(p: usize) -> Vec<Dag> {
        let slots: Vec<(usize, usize)> = (0..p)
            .flat_map(|c| (c + 1..p).map(move |j| (j, c)))
            .collect();
        assert!(slots.len() < 24, "too many DAGs to enumerate");
        (0u32..1 << slots.len())
            .map(|mask| {
                let mut dag = Dag::empty(p);
                for (b, &(j, c)) in slots.iter().enumerate() {
                    if mask >> b & 1 == 1 {
                        dag.parents[c].push(j);
                    }
                }
                dag
            })
            .collect()
    }

    /// Text form: a line with `p`, then `i: j1 j2 ...` per vertex, 1-based.
    pub fn to_text(&self) -> String {
        let mut s = format!("{}\n", self.p());
        for (i, pa) in self.parents.iter().enumerate() {
            let _ = write!(s, "{}:", i + 1);
            for j in pa {
                let _ = write!(s, " {}", j + 1);
            }
            s.push('\n');
        }
        s
    }

    pub fn parse_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let (ln, first) = lines.next().ok_or(Error::Parse {
            line: 1,
            msg: "empty DAG file".into(),
        })?;
        let p: usize = first.trim().parse().map_err(|_| Error::Parse {
            line: ln + 1,
            msg: format!("expected vertex count, found {first:?}"),
        })?;
        let mut parents = vec![None; p];
        for (ln, line) in lines {
            let perr = |msg: String| Error::Parse { line: ln + 1, msg };
            let (head, tail) = line
                .split_once(':')
                .ok_or_else(|| perr("expected \"i: parents\"".into()))?;
            let i: usize = head
                .trim()
                .parse()
                .map_err(|_| perr(format!("bad vertex {head:?}")))?;
            if i == 0 || i > p {
                return Err(perr(format!("vertex {i} out of range 1..={p}")));
            }
            let pa = tail
                .split_whitespace()
                .map(|t| match t.parse::<usize>() {
                    Ok(j) if j >= 1 && j <= p => Ok(j - 1),
                    _ => Err(perr(format!("bad parent {t:?}"))),
                })
                .collect::<Result<Vec<_>>>()?;
            if parents[i - 1].replace(pa).is_some() {
                return Err(perr(format!("vertex {i} listed twice")));
            }
        }
        let parents = parents
            .into_iter()
            .enumerate()
            .map(|(i, pa)| {
                pa.ok_or(Error::Parse {
                    line: 0,
                    msg: format!("vertex {} missing", i + 1),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Dag::from_parents(p, parents)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn nu_examples() {
        assert_eq!(Dag::empty(4).nu(2).unwrap(), 0);
        assert_eq!(Dag::full(4).nu(0).unwrap(), 3);
        let d = Dag::from_parents(3, vec![vec![2], vec![], vec![]]).unwrap();
        assert_eq!(d.nu(0).unwrap(), 1);
        assert!(matches!(d.nu(3), Err(Error::IndexOutOfRange { .. })));
    }

    #[test]
    fn children_examples() {
        assert!(Dag::empty(3).children(2).unwrap().is_empty());
        let d = Dag::from_parents(3, vec![vec![2], vec![2], vec![]]).unwrap();
        assert_eq!(d.children(2).unwrap(), vec![0, 1]);
        assert_eq!(Dag::full(3).children(1).unwrap(), vec![0]);
    }

    #[test]
    fn support_thresholding() {
        assert_eq!(Dag::from_cholesky_support(&Matrix::identity(3), 0.0), Dag::empty(3));
        let l = Matrix::from_rows(&[[1.0, 0.0], [0.5, 1.0]]);
        let d = Dag::from_cholesky_support(&l, 0.4);
        assert_eq!(d.parents(0).unwrap(), &[1]);
        assert_eq!(Dag::from_cholesky_support(&l, 0.5), Dag::empty(2));
    }

    #[test]
    fn toggle_examples() {
        let d = Dag::empty(2).toggle_edge(1, 0).unwrap();
        assert_eq!(d.parents(0).unwrap(), &[1]);
        assert_eq!(d.toggle_edge(1, 0).unwrap(), Dag::empty(2));
        assert!(matches!(
            Dag::empty(2).toggle_edge(0, 1),
            Err(Error::InvalidEdge { .. })
        ));
    }

    #[test]
    fn parent_child_duality() {
        for p in 1..=5 {
            for dag in Dag::enumerate_all(p) {
                for i in 0..p {
                    for j in 0..p {
                        let is_parent = dag.parents(j).unwrap().contains(&i);
                        let is_child = dag.children(i).unwrap().contains(&j);
                        assert_eq!(is_parent, is_child);
                    }
                }
            }
        }
    }

    #[test]
    fn enumeration_counts() {
        assert_eq!(Dag::enumerate_all(1).len(), 1);
        assert_eq!(Dag::enumerate_all(3).len(), 8);
        assert_eq!(Dag::enumerate_all(4).len(), 64);
    }

    #[test]
    fn text_format() {
        let d = Dag::from_parents(3, vec![vec![1, 2], vec![], vec![]]).unwrap();
        let t = d.to_text();
        assert_eq!(t, "3\n1: 2 3\n2:\n3:\n");
        assert_eq!(Dag::parse_text(&t).unwrap(), d);
        assert!(Dag::parse_text("2\n1: 1\n2:\n").is_err());
        assert!(Dag::parse_text("2\n1:\n").is_err());
    }

    fn arb_dag() -> impl Strategy<Value = Dag> {
        (1usize..=10).prop_flat_map(|p| {
            proptest::collection::vec(any::<bool>(), p * (p - 1) / 2).prop_map(move |bits| {
                let mut it = bits.into_iter();
                let parents = (0..p)
                    .map(|c| (c + 1..p).filter(|_| it.next().unwrap()).collect())
                    .collect();
                Dag::from_parents(p, parents).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn toggle_is_involution(dag in arb_dag(), a in 0usize..10, b in 0usize..10) {
            let p = dag.p();
            prop_assume!(p >= 2);
            let (from, to) = ((a % p).max(b % p), (a % p).min(b % p));
            prop_assume!(from != to);
            let once = dag.toggle_edge(from, to).unwrap();
            prop_assert_ne!(&once, &dag);
            prop_assert_eq!(once.toggle_edge(from, to).unwrap(), dag);
        }

        #[test]
        fn support_is_antitone(p in 1usize..8, vals in proptest::collection::vec(-1.0f64..1.0, 64),
                               t1 in 0.0f64..1.0, t2 in 0.0f64..1.0) {
            let l = Matrix::from_fn(p, p, |i, j| if i == j { 1.0 } else if i > j { vals[i * 8 + j] } else { 0.0 });
            let (lo, hi) = (t1.min(t2), t1.max(t2));
            let sparse = Dag::from_cholesky_support(&l, hi);
            let dense = Dag::from_cholesky_support(&l, lo);
            for (from, to) in sparse.edges() {
                prop_assert!(dense.has_edge(from, to));
            }
        }
    }
}
