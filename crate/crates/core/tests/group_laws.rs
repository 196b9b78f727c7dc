use gcnn::checks::group_law_suite;
use gcnn::group::{from_matrix, make_element, stabilizer_elements, Mat3};
use gcnn::{GroupElement, GroupId};
use proptest::prelude::*;

/// Matrix written out from the parameters, independent of the library.
fn matrix(m: i64, r: i64, u: i64, v: i64) -> [[i64; 3]; 3] {
    let (c, s) = [(1, 0), (0, 1), (-1, 0), (0, -1)][r as usize];
    let sign = if m == 1 { -1 } else { 1 };
    [[sign * c, -sign * s, u], [s, c, v], [0, 0, 1]]
}

fn mul(a: [[i64; 3]; 3], b: [[i64; 3]; 3]) -> [[i64; 3]; 3] {
    let mut out = [[0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

fn group_strategy() -> impl Strategy<Value = GroupId> {
    prop_oneof![Just(GroupId::Z2), Just(GroupId::P4), Just(GroupId::P4M)]
}

fn params(group: GroupId) -> impl Strategy<Value = (i64, i64, i64, i64)> {
    let (ms, rs) = match group {
        GroupId::Z2 => (1i64, 1i64),
        GroupId::P4 => (1, 4),
        GroupId::P4M => (2, 4),
    };
    (0..ms, 0..rs, -1000i64..=1000, -1000i64..=1000)
}

fn element(group: GroupId, (m, r, u, v): (i64, i64, i64, i64)) -> GroupElement {
    make_element(group, m, r, u, v).unwrap()
}

#[test]
fn axioms_hold_on_every_group() {
    for group in [GroupId::Z2, GroupId::P4, GroupId::P4M] {
        let report = group_law_suite(group, 2);
        assert_eq!(report.elements, 25 * group.stabilizer_size());
        assert_eq!(report.failures, 0, "{group}: {report:?}");
    }
}

#[test]
fn stabilizer_order_is_fixed() {
    let p4m = stabilizer_elements(GroupId::P4M);
    for (index, s) in p4m.iter().enumerate() {
        assert_eq!(s.m() as usize, index / 4);
        assert_eq!(s.r() as usize, index % 4);
        assert_eq!(s.to_matrix().0, matrix(index as i64 / 4, index as i64 % 4, 0, 0));
    }
    let p4: Vec<_> = stabilizer_elements(GroupId::P4).iter().map(|s| (s.m(), s.r())).collect();
    let first: Vec<_> = p4m[..4].iter().map(|s| (s.m(), s.r())).collect();
    assert_eq!(p4, first);
}

#[test]
fn rejects_foreign_matrices() {
    let scale = Mat3([[2, 0, 0], [0, 1, 0], [0, 0, 1]]);
    assert!(from_matrix(&scale, GroupId::P4M).is_err());
    let mirror = Mat3(matrix(1, 0, 3, 4));
    assert!(from_matrix(&mirror, GroupId::P4).is_err());
    let rotation = Mat3(matrix(0, 1, 0, 0));
    assert!(from_matrix(&rotation, GroupId::Z2).is_err());
    let affine_row = Mat3([[1, 0, 0], [0, 1, 0], [1, 0, 1]]);
    assert!(from_matrix(&affine_row, GroupId::P4M).is_err());
    assert_eq!(make_element(GroupId::P4, 0, 5, 0, 0).unwrap().r(), 1);
    assert!(make_element(GroupId::P4, 1, 0, 0, 0).is_err());
}

#[test]
fn mixing_groups_is_an_error() {
    let a = GroupElement::identity(GroupId::P4);
    let b = GroupElement::identity(GroupId::P4M);
    assert!(a.compose(&b).is_err());
}

proptest! {
    #[test]
    fn matrix_round_trip(
        (group, p) in group_strategy().prop_flat_map(|g| (Just(g), params(g)))
    ) {
        let g = element(group, p);
        prop_assert_eq!(g.to_matrix().0, matrix(p.0, p.1, p.2, p.3));
        prop_assert_eq!(from_matrix(&g.to_matrix(), group).unwrap(), g);
    }

    #[test]
    fn composition_is_matrix_product(
        (group, p, q, w) in group_strategy().prop_flat_map(|g| (Just(g), params(g), params(g), params(g)))
    ) {
        let (a, b, c) = (element(group, p), element(group, q), element(group, w));
        let ab = a.compose(&b).unwrap();
        prop_assert_eq!(ab.to_matrix().0, mul(matrix(p.0, p.1, p.2, p.3), matrix(q.0, q.1, q.2, q.3)));
        prop_assert_eq!(ab.compose(&c).unwrap(), a.compose(&b.compose(&c).unwrap()).unwrap());
        let e = GroupElement::identity(group);
        prop_assert_eq!(a.compose(&a.inverse()).unwrap(), e);
        prop_assert_eq!(a.inverse().compose(&a).unwrap(), e);
        prop_assert_eq!(e.compose(&a).unwrap(), a);
    }

    #[test]
    fn action_matches_matrix(
        (group, p) in group_strategy().prop_flat_map(|g| (Just(g), params(g))),
        x in -50i64..=50,
        y in -50i64..=50,
    ) {
        let g = element(group, p);
        let m = matrix(p.0, p.1, p.2, p.3);
        let expected = (m[0][0] * x + m[0][1] * y + m[0][2], m[1][0] * x + m[1][1] * y + m[1][2]);
        prop_assert_eq!(g.act((x, y)), expected);
        prop_assert_eq!(g.inverse().act(expected), (x, y));
    }
}
