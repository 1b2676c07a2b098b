// SPDX-License-Identifier: Apache-2.0

//! Summary statistics. Quartiles use the inclusive-median convention: the
//! lower and upper halves both contain the median when the count is odd.

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub min: f64,
    pub max: f64,
}

fn median_sorted(v: &[f64]) -> f64 {
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

impl Summary {
    /// Statistics of the finite values; `None` if there are none.
    pub fn of(values: &[f64]) -> Option<Self> {
        let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        let k = v.len();
        let half = k.div_ceil(2);
        Some(Self {
            count: k,
            mean: v.iter().sum::<f64>() / k as f64,
            median: median_sorted(&v),
            q1: median_sorted(&v[..half]),
            q3: median_sorted(&v[k - half..]),
            min: v[0],
            max: v[k - 1],
        })
    }
}
