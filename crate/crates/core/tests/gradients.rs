mod common;

use nalgebra::DMatrix;
use proptest::prelude::*;
use ssvmr_core::Tensor;

#[test]
fn tape_gradients_match_central_differences_on_random_networks() {
    for seed in 0..100 {
        let net = common::random_net(seed);
        let err = net.max_relative_error(1e-5);
        assert!(err < 1e-4, "net {seed} ({}): relative error {err:e}", net.name);
    }
}

fn to_na(t: &Tensor) -> DMatrix<f64> {
    DMatrix::from_row_slice(t.rows(), t.cols(), t.data())
}

fn close(t: &Tensor, m: &DMatrix<f64>) -> bool {
    t.rows() == m.nrows() && t.cols() == m.ncols() && (0..t.rows()).all(|i| (0..t.cols()).all(|j| (t.get(i, j) - m[(i, j)]).abs() < 1e-12))
}

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Tensor> {
    prop::collection::vec(-3.0f64..3.0, rows * cols).prop_map(move |d| Tensor::new(rows, cols, d).unwrap())
}

proptest! {
    #[test]
    fn matmul_and_transpose_agree_with_nalgebra((a, b) in (1usize..6, 1usize..6, 1usize..6).prop_flat_map(|(n, k, m)| (matrix(n, k), matrix(k, m)))) {
        let got = a.matmul(&b).unwrap();
        prop_assert!(close(&got, &(to_na(&a) * to_na(&b))));
        prop_assert!(close(&a.transpose(), &to_na(&a).transpose()));
    }

    #[test]
    fn row_softmax_sums_to_one(a in (1usize..5, 1usize..7).prop_flat_map(|(n, m)| matrix(n, m))) {
        let s = a.softmax_rows().unwrap();
        for i in 0..s.rows() {
            prop_assert!((s.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let ls = a.log_softmax_rows().unwrap().exp().unwrap();
        prop_assert!(ls.data().iter().zip(s.data()).all(|(x, y)| (x - y).abs() < 1e-12));
    }
}
