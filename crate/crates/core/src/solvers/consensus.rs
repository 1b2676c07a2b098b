// SPDX-License-Identifier: Apache-2.0

//! Synchronous average consensus `y_i <- y_i + sum_j w_ij (y_j - y_i)`.
//!
//! Updates are applied as antisymmetric edge flows, so in exact or
//! fixed-point arithmetic the network sum is conserved bit for bit.

use crate::graph::Network;
use crate::scalar::Scalar;

/// One synchronous round, in place.
pub fn consensus_step<T: Scalar>(net: &Network, weights: &[T], y: &mut [Vec<T>], scratch: &mut [Vec<T>]) {
    for row in scratch.iter_mut() {
        row.iter_mut().for_each(|v| *v = T::zero());
    }
    for (&(i, j, _), w) in net.edges().iter().zip(weights) {
        for k in 0..y[i].len() {
            let flow = w.clone() * (y[j][k].clone() - y[i][k].clone());
            scratch[i][k] = scratch[i][k].clone() + flow.clone();
            scratch[j][k] = scratch[j][k].clone() - flow;
        }
    }
    for (row, d) in y.iter_mut().zip(scratch.iter()) {
        for (v, dv) in row.iter_mut().zip(d) {
            *v = v.clone() + dv.clone();
        }
    }
}

/// Edge weights converted once to `T`, in edge order.
pub fn edge_weights<T: Scalar>(net: &Network) -> Vec<T> {
    net.edges().iter().map(|&(_, _, w)| T::from_f64(w)).collect()
}

/// `rounds` synchronous rounds from `y0`.
pub fn average_consensus<T: Scalar>(net: &Network, mut y: Vec<Vec<T>>, rounds: usize) -> Vec<Vec<T>> {
    let weights = edge_weights::<T>(net);
    let mut scratch = y.clone();
    for _ in 0..rounds {
        consensus_step(net, &weights, &mut y, &mut scratch);
    }
    y
}

/// `max_{i,j} ||y_i - y_j||_inf`, in `f64`.
pub fn max_disagreement<T: Scalar>(y: &[Vec<T>]) -> f64 {
    let dim = y.first().map_or(0, Vec::len);
    (0..dim)
        .map(|k| {
            let (lo, hi) = y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), row| {
                let v = row[k].to_f64();
                (lo.min(v), hi.max(v))
            });
            hi - lo
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_cycle;
    use crate::wide::Wide;
    use num_bigint::BigInt;
    use num_rational::BigRational;
    use num_traits::Zero;
    use proptest::prelude::*;

    #[test]
    fn equal_states_are_fixed() {
        let net = build_cycle(5, 0.2).unwrap();
        let y0 = vec![vec![1.5, -2.0]; 5];
        assert_eq!(average_consensus(&net, y0.clone(), 50), y0);
    }

    #[test]
    fn triangle_contracts_at_spectral_rate() {
        let net = build_cycle(3, 0.3).unwrap();
        let weights = edge_weights::<f64>(&net);
        let mut y: Vec<Vec<f64>> = vec![vec![0.0], vec![0.0], vec![3.0]];
        let mut scratch = y.clone();
        let mut prev = y.iter().map(|r| (r[0] - 1.0).abs()).fold(0.0, f64::max);
        for _ in 0..12 {
            consensus_step(&net, &weights, &mut y, &mut scratch);
            let err = y.iter().map(|r| (r[0] - 1.0).abs()).fold(0.0, f64::max);
            assert!(err <= (0.1 + 1e-9) * prev + 1e-15, "{err} vs {prev}");
            prev = err;
        }
        assert!(prev < 1e-11);
    }

    #[test]
    fn f64_sum_conserved_to_roundoff() {
        let net = build_cycle(10, 0.3).unwrap();
        let weights = edge_weights::<f64>(&net);
        let mut y: Vec<Vec<f64>> = (0..10).map(|i| vec![(i * i) as f64 - 7.5, 1e3 * i as f64]).collect();
        let mut scratch = y.clone();
        let total = |y: &[Vec<f64>], k: usize| y.iter().map(|r| r[k]).sum::<f64>();
        let t0 = [total(&y, 0), total(&y, 1)];
        for _ in 0..500 {
            consensus_step(&net, &weights, &mut y, &mut scratch);
            for k in 0..2 {
                let scale = y.iter().map(|r| r[k].abs()).sum::<f64>().max(1.0);
                assert!((total(&y, k) - t0[k]).abs() <= 1e-12 * scale);
            }
        }
    }

    #[test]
    fn rational_run_matches_f64() {
        let net = build_cycle(4, 0.25).unwrap();
        let y0: Vec<Vec<f64>> = vec![vec![1.0], vec![-3.0], vec![0.5], vec![8.0]];
        let exact: Vec<Vec<BigRational>> = y0
            .iter()
            .map(|r| r.iter().map(|&v| <BigRational as Scalar>::from_f64(v)).collect())
            .collect();
        let fe = average_consensus(&net, y0, 20);
        let ee = average_consensus(&net, exact.clone(), 20);
        let sum: BigRational = ee.iter().map(|r| r[0].clone()).sum();
        let sum0: BigRational = exact.iter().map(|r| r[0].clone()).sum();
        assert_eq!(sum, sum0);
        for (f, e) in fe.iter().zip(&ee) {
            assert!((f[0] - e[0].to_f64()).abs() < 1e-14);
        }
    }

    proptest! {
        #[test]
        fn wide_sum_is_exact(vals in proptest::collection::vec(-1e30f64..1e30, 6), w in 0.01f64..0.49) {
            let net = build_cycle(6, w).unwrap();
            let y0: Vec<Vec<Wide<4>>> = vals.iter().map(|&v| vec![Wide::from_f64(v)]).collect();
            let total0: BigInt = y0.iter().map(|r| r[0].to_raw()).sum();
            let y = average_consensus(&net, y0, 40);
            let total: BigInt = y.iter().map(|r| r[0].to_raw()).sum();
            prop_assert!((total - total0).is_zero());
        }
    }
}
