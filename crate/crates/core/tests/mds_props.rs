use nalgebra::DMatrix;
use proptest::prelude::*;
use testmap_core::corpus::DiversitySource;
use testmap_core::mds::{classical_layout, classical_mds, double_center, stress, Embedding};
use testmap_core::similarity::DistanceMatrix;

/// Cyclic Jacobi rotations; slow but independent of the production solver.
fn jacobi_eigenvalues(mut a: DMatrix<f64>) -> Vec<f64> {
    let n = a.nrows();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum();
        if off < 1e-26 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if a[(p, q)].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * a[(p, q)]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[(k, p)], a[(k, q)]);
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[(p, k)], a[(q, k)]);
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    ev.sort_by(|x, y| y.total_cmp(x));
    ev
}

fn pairwise(points: &[[f64; 2]]) -> DMatrix<f64> {
    let n = points.len();
    DMatrix::from_fn(n, n, |i, j| {
        let (dx, dy) = (points[i][0] - points[j][0], points[i][1] - points[j][1]);
        (dx * dx + dy * dy).sqrt()
    })
}

fn planar() -> impl Strategy<Value = Vec<[f64; 2]>> {
    prop::collection::vec((0.0f64..0.7, 0.0f64..0.7).prop_map(|(x, y)| [x, y]), 3..40)
}

fn symmetric_dissimilarity() -> impl Strategy<Value = DMatrix<f64>> {
    (3usize..14).prop_flat_map(|n| {
        prop::collection::vec(0.0f64..1.0, n * n).prop_map(move |v| {
            DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { v[i.min(j) * n + i.max(j)] })
        })
    })
}

fn as_matrix(d: &DMatrix<f64>) -> DistanceMatrix {
    let n = d.nrows();
    let rows = (0..n).map(|i| (0..n).map(|j| d[(i, j)]).collect()).collect();
    let ids = (0..n).map(|i| format!("p{i:02}")).collect();
    DistanceMatrix::from_rows(ids, rows, DiversitySource::Name, 5).unwrap()
}

proptest! {
    #[test]
    fn eigenvalues_match_jacobi(d in symmetric_dissimilarity()) {
        let layout = classical_layout(&d).unwrap();
        let oracle = jacobi_eigenvalues(double_center(&d));
        prop_assert_eq!(layout.eigenvalues.len(), oracle.len());
        for (a, b) in layout.eigenvalues.iter().zip(&oracle) {
            prop_assert!((a - b).abs() <= 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn eigenvalues_sum_to_trace(d in symmetric_dissimilarity()) {
        let b = double_center(&d);
        prop_assert_eq!(&b, &b.transpose());
        let layout = classical_layout(&d).unwrap();
        let sum: f64 = layout.eigenvalues.iter().sum();
        prop_assert!((sum - b.trace()).abs() <= 1e-9, "{sum} vs {}", b.trace());
    }

    #[test]
    fn layout_is_centered(d in symmetric_dissimilarity()) {
        let layout = classical_layout(&d).unwrap();
        let n = layout.coords.len() as f64;
        for axis in 0..2 {
            let mean = layout.coords.iter().map(|c| c[axis]).sum::<f64>() / n;
            prop_assert!(mean.abs() <= 1e-9, "axis {axis}: {mean}");
        }
    }

    #[test]
    fn planar_inputs_clip_nothing(points in planar()) {
        let layout = classical_layout(&pairwise(&points)).unwrap();
        prop_assert_eq!(layout.clipped_negative_mass, 0.0);
    }

    #[test]
    fn orthogonal_transforms_keep_distances_and_stress(points in planar(), angle in 0.0f64..std::f64::consts::TAU, flip in any::<bool>()) {
        let m = as_matrix(&pairwise(&points));
        let e = classical_mds(&m).unwrap();
        let (c, s) = (angle.cos(), angle.sin());
        let mirror = if flip { -1.0 } else { 1.0 };
        let moved = Embedding {
            coords: e.coords.iter().map(|p| [c * p[0] - s * p[1], mirror * (s * p[0] + c * p[1])]).collect(),
            ..e.clone()
        };
        for i in 0..e.len() {
            for j in 0..e.len() {
                prop_assert!((e.distance(i, j) - moved.distance(i, j)).abs() <= 1e-12);
            }
        }
        prop_assert!((stress(&m, &e).unwrap() - stress(&m, &moved).unwrap()).abs() <= 1e-9);
    }
}

#[test]
fn three_dimensional_simplex_loses_mass_to_third_axis() {
    // regular tetrahedron: Euclidean but not planar, so the third eigenvalue
    // is positive and stress is non-zero while no negative mass appears
    let d = DMatrix::from_fn(4, 4, |i, j| if i == j { 0.0 } else { 1.0 });
    let layout = classical_layout(&d).unwrap();
    assert_eq!(layout.clipped_negative_mass, 0.0);
    assert!(layout.eigenvalues[2] > 0.1);
    let e = classical_mds(&as_matrix(&d)).unwrap();
    assert!(e.stress > 0.0);
}

#[test]
fn non_euclidean_input_reports_negative_mass() {
    // triangle inequality broken: d(0,2) > d(0,1) + d(1,2)
    let d = DMatrix::from_row_slice(3, 3, &[0.0, 0.1, 1.0, 0.1, 0.0, 0.1, 1.0, 0.1, 0.0]);
    let layout = classical_layout(&d).unwrap();
    assert!(layout.clipped_negative_mass > 0.0);
}
