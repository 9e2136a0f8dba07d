use hkgf_core::fusion::{coupling_adjacency, coupling_features};
use hkgf_core::Matrix;

fn m(rows: &[&[f64]]) -> Matrix {
    Matrix::from_rows(rows).unwrap()
}

// Rows normalise to F̂ = [(1,0), (0,1), (0.6,0.8)] and
// Ŝ = [(0,1), (1,1)/√2, (0.8,0.6)], so A_C[i][j] = F̂ᵢ·Ŝⱼ by hand.
#[test]
fn coupling_adjacency_hand_values() {
    let xf = m(&[&[1.0, 0.0], &[0.0, 2.0], &[3.0, 4.0]]);
    let xs = m(&[&[0.0, 1.0], &[1.0, 1.0], &[4.0, 3.0]]);
    let a = coupling_adjacency(&xf, &xs).unwrap();
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let want = [
        [0.0, r, 0.8],
        [1.0, r, 0.6],
        [0.8, 1.4 * r, 0.96],
    ];
    for i in 0..3 {
        for j in 0..3 {
            assert!((a[(i, j)] - want[i][j]).abs() < 1e-15, "({i},{j}) {}", a[(i, j)]);
        }
    }
}

#[test]
fn coupling_features_concatenate_unit_rows() {
    let xf = m(&[&[3.0, 4.0], &[0.0, -2.0]]);
    let xs = m(&[&[1.0], &[-5.0]]);
    let x = coupling_features(&xf, &xs).unwrap();
    assert_eq!(x.shape(), (2, 3));
    assert_eq!(x.row(0), [0.6, 0.8, 1.0]);
    assert_eq!(x.row(1), [0.0, -1.0, -1.0]);
}
