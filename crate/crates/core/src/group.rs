//! Exact integer arithmetic for the plane symmetry groups Z², p4 and p4m.
//!
//! Elements are stored as canonical integer tuples `(m, r, u, v)` and carry
//! the matrix semantics
//!
//! ```text
//! [ (-1)^m cos(rπ/2)   -(-1)^m sin(rπ/2)   u ]
//! [        sin(rπ/2)           cos(rπ/2)   v ]
//! [        0                   0           1 ]
//! ```
//!
//! Composition goes through the matrix form. The rotation/mirror part is
//! recovered by lookup in a table of the valid 2×2 blocks, so no floating
//! point is involved anywhere.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GroupId {
    Z2,
    P4,
    P4M,
}

impl GroupId {
    /// Number of elements fixing the origin: 1, 4 or 8.
    pub fn stabilizer_size(self) -> usize {
        match self {
            GroupId::Z2 => 1,
            GroupId::P4 => 4,
            GroupId::P4M => 8,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            GroupId::Z2 => "z2",
            GroupId::P4 => "p4",
            GroupId::P4M => "p4m",
        }
    }

    pub fn parse(s: &str) -> Option<GroupId> {
        match s.to_ascii_lowercase().as_str() {
            "z2" => Some(GroupId::Z2),
            "p4" => Some(GroupId::P4),
            "p4m" => Some(GroupId::P4M),
            _ => None,
        }
    }
}

impl fmt::Display for GroupId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

// cos and sin of r quarter turns.
const COS: [i64; 4] = [1, 0, -1, 0];
const SIN: [i64; 4] = [0, 1, 0, -1];

type Block = [[i64; 2]; 2];

fn block(m: u8, r: u8) -> Block {
    let sign = if m == 1 { -1 } else { 1 };
    let (c, s) = (COS[r as usize], SIN[r as usize]);
    [[sign * c, -sign * s], [s, c]]
}

/// Homogeneous 3×3 integer matrix with last row `(0, 0, 1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Mat3(pub [[i64; 3]; 3]);

impl Mat3 {
    pub const IDENTITY: Mat3 = Mat3([[1, 0, 0], [0, 1, 0], [0, 0, 1]]);

    pub fn mul(&self, rhs: &Mat3) -> Mat3 {
        let mut out = [[0i64; 3]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = (0..3).map(|k| self.0[i][k] * rhs.0[k][j]).sum();
            }
        }
        Mat3(out)
    }

    pub fn det(&self) -> i64 {
        let a = &self.0;
        a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
            - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
            + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
    }

    /// Inverse of an isometry matrix: the 2×2 block is orthogonal, so its
    /// inverse is its transpose.
    fn block(&self) -> Block {
        [[self.0[0][0], self.0[0][1]], [self.0[1][0], self.0[1][1]]]
    }
}

/// An element of Z², p4 or p4m in canonical form (`r` mod 4, `m` mod 2).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct GroupElement {
    group: GroupId,
    m: u8,
    r: u8,
    u: i64,
    v: i64,
}

impl GroupElement {
    pub fn new(group: GroupId, m: i64, r: i64, u: i64, v: i64) -> Result<Self> {
        make_element(group, m, r, u, v)
    }

    pub fn identity(group: GroupId) -> Self {
        GroupElement {
            group,
            m: 0,
            r: 0,
            u: 0,
            v: 0,
        }
    }

    /// Pure translation by `(u, v)`.
    pub fn translation(group: GroupId, u: i64, v: i64) -> Self {
        GroupElement {
            group,
            m: 0,
            r: 0,
            u,
            v,
        }
    }

    pub fn group(&self) -> GroupId {
        self.group
    }

    pub fn m(&self) -> u8 {
        self.m
    }

    pub fn r(&self) -> u8 {
        self.r
    }

    pub fn u(&self) -> i64 {
        self.u
    }

    pub fn v(&self) -> i64 {
        self.v
    }

    pub fn is_identity(&self) -> bool {
        self.m == 0 && self.r == 0 && self.u == 0 && self.v == 0
    }

    /// Position of the rotation/mirror part in the canonical stabilizer order.
    pub fn stabilizer_index(&self) -> usize {
        4 * self.m as usize + self.r as usize
    }

    /// The stabilizer part `s` of the split `g = t·s`.
    pub fn stabilizer_part(&self) -> GroupElement {
        GroupElement {
            u: 0,
            v: 0,
            ..*self
        }
    }

    /// The translation part `t` of the split `g = t·s`.
    pub fn translation_part(&self) -> GroupElement {
        GroupElement::translation(self.group, self.u, self.v)
    }

    pub fn to_matrix(&self) -> Mat3 {
        to_matrix(self)
    }

    pub fn compose(&self, other: &GroupElement) -> Result<GroupElement> {
        compose(self, other)
    }

    pub fn inverse(&self) -> GroupElement {
        inverse(self)
    }

    pub fn act(&self, p: (i64, i64)) -> (i64, i64) {
        act_on_point(self, p)
    }
}

impl fmt::Display for GroupElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}(m={}, r={}, u={}, v={})",
            self.group, self.m, self.r, self.u, self.v
        )
    }
}

pub fn make_element(group: GroupId, m: i64, r: i64, u: i64, v: i64) -> Result<GroupElement> {
    let m = m.rem_euclid(2) as u8;
    let r = r.rem_euclid(4) as u8;
    let ok = match group {
        GroupId::Z2 => m == 0 && r == 0,
        GroupId::P4 => m == 0,
        GroupId::P4M => true,
    };
    if !ok {
        return Err(Error::GroupMismatch(format!(
            "{group} has no element with m={m}, r={r}"
        )));
    }
    Ok(GroupElement { group, m, r, u, v })
}

pub fn to_matrix(a: &GroupElement) -> Mat3 {
    let b = block(a.m, a.r);
    Mat3([[b[0][0], b[0][1], a.u], [b[1][0], b[1][1], a.v], [0, 0, 1]])
}

pub fn from_matrix(mat: &Mat3, group: GroupId) -> Result<GroupElement> {
    if mat.0[2] != [0, 0, 1] {
        return Err(Error::InvalidMatrix(group));
    }
    let b = mat.block();
    let (mirrors, rotations) = match group {
        GroupId::Z2 => (1, 1),
        GroupId::P4 => (1, 4),
        GroupId::P4M => (2, 4),
    };
    let (m, r) = (0..mirrors)
        .flat_map(|m| (0..rotations).map(move |r| (m, r)))
        .find(|&(m, r)| block(m, r) == b)
        .ok_or(Error::InvalidMatrix(group))?;
    debug_assert_eq!(m as i64, (1 - mat.det()) / 2);
    Ok(GroupElement {
        group,
        m,
        r,
        u: mat.0[0][2],
        v: mat.0[1][2],
    })
}

pub fn compose(a: &GroupElement, b: &GroupElement) -> Result<GroupElement> {
    if a.group != b.group {
        return Err(Error::mismatch(a.group, b.group));
    }
    // a mirror conjugates a rotation into its inverse
    let r1 = if b.m == 1 { (4 - a.r) % 4 } else { a.r };
    let (u, v) = a.act((b.u, b.v));
    Ok(GroupElement {
        group: a.group,
        m: (a.m + b.m) % 2,
        r: (r1 + b.r) % 4,
        u,
        v,
    })
}

pub fn inverse(a: &GroupElement) -> GroupElement {
    let r = if a.m == 1 { a.r } else { (4 - a.r) % 4 };
    let b = GroupElement {
        u: 0,
        v: 0,
        r,
        ..*a
    };
    let (u, v) = b.act((-a.u, -a.v));
    GroupElement { u, v, ..b }
}

pub fn act_on_point(g: &GroupElement, p: (i64, i64)) -> (i64, i64) {
    let b = block(g.m, g.r);
    (
        b[0][0] * p.0 + b[0][1] * p.1 + g.u,
        b[1][0] * p.0 + b[1][1] * p.1 + g.v,
    )
}

/// Elements fixing the origin, in the frozen order: `r = 0..4` for p4,
/// lexicographic `(m, r)` for p4m.
pub fn stabilizer_elements(group: GroupId) -> Vec<GroupElement> {
    let mirrors = if group == GroupId::P4M { 2 } else { 1 };
    let rotations = if group == GroupId::Z2 { 1 } else { 4 };
    (0..mirrors)
        .flat_map(|m| {
            (0..rotations).map(move |r| GroupElement {
                group,
                m,
                r,
                u: 0,
                v: 0,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn el(group: GroupId, m: i64, r: i64, u: i64, v: i64) -> GroupElement {
        make_element(group, m, r, u, v).unwrap()
    }

    #[test]
    fn make_element_reduces_and_rejects() {
        assert!(el(GroupId::P4, 0, 0, 0, 0).is_identity());
        let a = el(GroupId::P4, 0, 5, 2, -1);
        assert_eq!((a.m(), a.r(), a.u(), a.v()), (0, 1, 2, -1));
        assert!(matches!(
            make_element(GroupId::Z2, 0, 1, 0, 0),
            Err(Error::GroupMismatch(_))
        ));
        assert!(make_element(GroupId::P4, 1, 0, 0, 0).is_err());
        assert_eq!(el(GroupId::P4M, -1, -1, 0, 0).stabilizer_index(), 7);
    }

    #[test]
    fn matrices() {
        assert_eq!(
            el(GroupId::P4, 0, 0, 3, -2).to_matrix(),
            Mat3([[1, 0, 3], [0, 1, -2], [0, 0, 1]])
        );
        assert_eq!(
            el(GroupId::P4, 0, 1, 0, 0).to_matrix(),
            Mat3([[0, -1, 0], [1, 0, 0], [0, 0, 1]])
        );
        assert_eq!(
            el(GroupId::P4M, 1, 0, 0, 0).to_matrix(),
            Mat3([[-1, 0, 0], [0, 1, 0], [0, 0, 1]])
        );
    }

    #[test]
    fn from_matrix_cases() {
        let m = from_matrix(&Mat3([[-1, 0, 0], [0, 1, 0], [0, 0, 1]]), GroupId::P4M).unwrap();
        assert_eq!(m, el(GroupId::P4M, 1, 0, 0, 0));
        assert!(from_matrix(&Mat3::IDENTITY, GroupId::P4).unwrap().is_identity());
        let g = from_matrix(&Mat3([[0, 1, 0], [-1, 0, 1], [0, 0, 1]]), GroupId::P4).unwrap();
        assert_eq!(g, el(GroupId::P4, 0, 3, 0, 1));
        // mirror blocks are not in p4
        assert!(from_matrix(&Mat3([[-1, 0, 0], [0, 1, 0], [0, 0, 1]]), GroupId::P4).is_err());
        assert!(from_matrix(&Mat3([[2, 0, 0], [0, 1, 0], [0, 0, 1]]), GroupId::P4M).is_err());
        assert!(from_matrix(&Mat3([[1, 0, 0], [0, 1, 0], [1, 0, 1]]), GroupId::Z2).is_err());
    }

    #[test]
    fn compose_and_inverse_examples() {
        let q = el(GroupId::P4, 0, 1, 0, 0);
        assert_eq!(compose(&q, &q).unwrap(), el(GroupId::P4, 0, 2, 0, 0));
        let a = el(GroupId::P4, 0, 1, 1, 0);
        let b = el(GroupId::P4, 0, 0, 1, 0);
        assert_eq!(compose(&a, &b).unwrap(), el(GroupId::P4, 0, 1, 1, 1));
        let f = el(GroupId::P4M, 1, 0, 0, 0);
        assert!(compose(&f, &f).unwrap().is_identity());
        assert!(compose(&q, &f).is_err());

        assert_eq!(inverse(&q), el(GroupId::P4, 0, 3, 0, 0));
        assert_eq!(inverse(&a), el(GroupId::P4, 0, 3, 0, 1));
        assert_eq!(
            inverse(&el(GroupId::Z2, 0, 0, 5, -3)),
            el(GroupId::Z2, 0, 0, -5, 3)
        );
    }

    #[test]
    fn point_action() {
        assert_eq!(GroupElement::identity(GroupId::P4).act((7, -2)), (7, -2));
        assert_eq!(el(GroupId::P4, 0, 1, 0, 0).act((1, 0)), (0, 1));
        assert_eq!(el(GroupId::Z2, 0, 0, 2, 3).act((1, 1)), (3, 4));
    }

    #[test]
    fn stabilizers() {
        assert_eq!(stabilizer_elements(GroupId::Z2), vec![GroupElement::identity(GroupId::Z2)]);
        assert_eq!(stabilizer_elements(GroupId::P4).len(), 4);
        let p4m = stabilizer_elements(GroupId::P4M);
        assert_eq!(p4m.len(), 8);
        for (i, s) in p4m.iter().enumerate() {
            assert_eq!(s.stabilizer_index(), i);
            assert!(p4m.contains(&s.inverse()));
            for t in &p4m {
                assert!(p4m.contains(&compose(s, t).unwrap()));
            }
        }
    }
}
