//! Stencils: the finite set of integer offset vectors that difference
//! operators are built from.
//!
//! The offset set always contains the zero vector, listed first; the nonzero
//! offsets are what carry actual differencing. Offsets are restricted to
//! integer vectors so that a step of `h` times an offset always lands on a
//! grid point of a torus grid with spacing `h`.

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StencilError {
    #[error("stencil dimension must be at least 1")]
    ZeroDimension,
    #[error("stencil must be nonempty and list the zero offset first")]
    MissingZeroOffset,
    #[error("offset {0:?} has wrong dimension")]
    WrongOffsetDimension(Vec<i64>),
    #[error("duplicate offset {0:?}")]
    DuplicateOffset(Vec<i64>),
    #[error("offset {0:?} is not a member of the stencil")]
    UnknownOffset(Vec<i64>),
}

/// An ordered set of integer offsets in `Z^d`, zero first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stencil {
    dim: usize,
    offsets: Vec<Vec<i64>>,
}

impl Stencil {
    /// Builds a stencil from an explicit offset list. The zero vector must be
    /// present; it is moved to the front if listed elsewhere is *not* done —
    /// the caller lists it first.
    pub fn new(dim: usize, offsets: Vec<Vec<i64>>) -> Result<Self, StencilError> {
        if dim == 0 {
            return Err(StencilError::ZeroDimension);
        }
        let zero = vec![0i64; dim];
        if offsets.first() != Some(&zero) {
            return Err(StencilError::MissingZeroOffset);
        }
        for off in &offsets {
            if off.len() != dim {
                return Err(StencilError::WrongOffsetDimension(off.clone()));
            }
        }
        for (i, off) in offsets.iter().enumerate() {
            if offsets[..i].contains(off) {
                return Err(StencilError::DuplicateOffset(off.clone()));
            }
        }
        Ok(Self { dim, offsets })
    }

    /// The coordinate stencil `{0, e_1, ..., e_d}`.
    pub fn coordinate(dim: usize) -> Self {
        let mut offsets = vec![vec![0i64; dim]];
        for axis in 0..dim {
            let mut e = vec![0i64; dim];
            e[axis] = 1;
            offsets.push(e);
        }
        Self::new(dim, offsets).expect("coordinate stencil is valid")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of offsets including zero.
    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// All offsets, zero first.
    pub fn offsets(&self) -> &[Vec<i64>] {
        &self.offsets
    }

    pub fn offset(&self, idx: usize) -> &[i64] {
        &self.offsets[idx]
    }

    /// Indices of the nonzero offsets.
    pub fn nonzero_indices(&self) -> impl Iterator<Item = usize> + '_ {
        1..self.offsets.len()
    }

    /// Index of an offset within the stencil, if present.
    pub fn index_of(&self, offset: &[i64]) -> Option<usize> {
        self.offsets.iter().position(|o| o.as_slice() == offset)
    }

    pub fn require_member(&self, offset: &[i64]) -> Result<usize, StencilError> {
        self.index_of(offset)
            .ok_or_else(|| StencilError::UnknownOffset(offset.to_vec()))
    }
}

/// A tuple `(λ_1, ..., λ_p)` of stencil offsets; the empty tuple stands for
/// the identity operator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OffsetTuple {
    components: Vec<Vec<i64>>,
}

impl OffsetTuple {
    /// Validates each component against the stencil.
    pub fn new(stencil: &Stencil, components: &[&[i64]]) -> Result<Self, StencilError> {
        for c in components {
            stencil.require_member(c)?;
        }
        Ok(Self {
            components: components.iter().map(|c| c.to_vec()).collect(),
        })
    }

    pub fn identity() -> Self {
        Self {
            components: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn components(&self) -> &[Vec<i64>] {
        &self.components
    }
}

/// All ordered `r`-tuples drawn from the stencil offsets, in lexicographic
/// index order. Used by the discrete Sobolev norms.
pub fn offset_tuples(stencil: &Stencil, r: usize) -> Vec<OffsetTuple> {
    let mut out = Vec::new();
    let mut idx = vec![0usize; r];
    loop {
        out.push(OffsetTuple {
            components: idx.iter().map(|&i| stencil.offset(i).to_vec()).collect(),
        });
        // odometer increment
        let mut pos = r;
        loop {
            if pos == 0 {
                return out;
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < stencil.len() {
                break;
            }
            idx[pos] = 0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_must_come_first() {
        assert_eq!(
            Stencil::new(1, vec![vec![1], vec![0]]),
            Err(StencilError::MissingZeroOffset)
        );
        assert!(Stencil::new(1, vec![vec![0], vec![1]]).is_ok());
    }

    #[test]
    fn duplicates_rejected() {
        assert_eq!(
            Stencil::new(1, vec![vec![0], vec![1], vec![1]]),
            Err(StencilError::DuplicateOffset(vec![1]))
        );
    }

    #[test]
    fn dimension_validated() {
        assert_eq!(Stencil::new(0, vec![]), Err(StencilError::ZeroDimension));
        assert_eq!(
            Stencil::new(2, vec![vec![0, 0], vec![1]]),
            Err(StencilError::WrongOffsetDimension(vec![1]))
        );
    }

    #[test]
    fn coordinate_stencil() {
        let s = Stencil::coordinate(2);
        assert_eq!(s.len(), 3);
        assert_eq!(s.offset(0), &[0, 0]);
        assert_eq!(s.offset(1), &[1, 0]);
        assert_eq!(s.offset(2), &[0, 1]);
        assert_eq!(s.index_of(&[0, 1]), Some(2));
        assert_eq!(s.index_of(&[1, 1]), None);
    }

    #[test]
    fn tuple_membership_checked() {
        let s = Stencil::coordinate(1);
        assert!(OffsetTuple::new(&s, &[&[1], &[0]]).is_ok());
        assert!(OffsetTuple::new(&s, &[&[2]]).is_err());
        assert!(OffsetTuple::identity().is_empty());
    }

    #[test]
    fn tuple_enumeration_counts() {
        let s = Stencil::coordinate(1); // |Λ| = 2
        assert_eq!(offset_tuples(&s, 0).len(), 1);
        assert_eq!(offset_tuples(&s, 1).len(), 2);
        assert_eq!(offset_tuples(&s, 3).len(), 8);
    }
}
