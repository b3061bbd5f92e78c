//! First-derivative finite-difference weights on uniform grids.

/// Fornberg's recursion for the weights of the `m`-th derivative at `x0`
/// from the nodes `xs`. Returns one weight per node.
pub fn fornberg(x0: f64, xs: &[f64], m: usize) -> Vec<f64> {
    let n = xs.len();
    let mut c = vec![vec![0.0; m + 1]; n];
    let mut c1 = 1.0;
    let mut c4 = xs[0] - x0;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = xs[i] - x0;
        for j in 0..i {
            let c3 = xs[i] - xs[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] *= c4 / c3;
        }
        c1 = c2;
    }
    c.into_iter().map(|row| row[m]).collect()
}

/// Even-order first-derivative stencil, central in the interior and shifted
/// one-sided near the ends of a line of `len` nodes.
#[derive(Debug, Clone)]
pub struct Stencil {
    order: usize,
    len: usize,
    /// weights[s] for window shift s = 0..=order (start offset relative to the
    /// central window), in units of 1/h
    weights: Vec<Vec<f64>>,
}

impl Stencil {
    /// `order` must be even and at least 2; needs `len > order`.
    pub fn new(order: usize, len: usize) -> Option<Self> {
        if order < 2 || order % 2 == 1 || len <= order {
            return None;
        }
        let weights = (0..=order)
            .map(|start| {
                let xs: Vec<f64> = (0..=order).map(|q| q as f64).collect();
                fornberg(start as f64, &xs, 1)
            })
            .collect();
        Some(Stencil { order, len, weights })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// (first node, weights, centered) for the derivative at node `i`.
    pub fn at(&self, i: usize) -> (usize, &[f64], bool) {
        let half = self.order / 2;
        let start = i.saturating_sub(half).min(self.len - self.order - 1);
        let w = &self.weights[i - start];
        (start, w, i - start == half)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn second_order_central() {
        let w = fornberg(0.0, &[-1.0, 0.0, 1.0], 1);
        assert!((w[0] + 0.5).abs() < 1e-15 && w[1].abs() < 1e-15 && (w[2] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn exact_on_polynomials() {
        for order in [2, 4, 6, 8] {
            let len = 20;
            let s = Stencil::new(order, len).unwrap();
            let h = 0.1;
            let f = |x: f64| (0..=order).map(|p| x.powi(p as i32) * (p as f64 + 1.0)).sum::<f64>();
            let df = |x: f64| {
                (1..=order)
                    .map(|p| p as f64 * x.powi(p as i32 - 1) * (p as f64 + 1.0))
                    .sum::<f64>()
            };
            for i in 0..len {
                let (start, w, _) = s.at(i);
                let d: f64 = w
                    .iter()
                    .enumerate()
                    .map(|(q, wq)| wq * f((start + q) as f64 * h))
                    .sum::<f64>()
                    / h;
                assert!((d - df(i as f64 * h)).abs() < 1e-8 * (1.0 + df(i as f64 * h).abs()), "order {order} node {i}");
            }
        }
    }

    #[test]
    fn central_flag() {
        let s = Stencil::new(4, 10).unwrap();
        assert!(!s.at(0).2 && !s.at(1).2 && s.at(2).2 && s.at(7).2 && !s.at(9).2);
        assert!(Stencil::new(3, 10).is_none());
        assert!(Stencil::new(8, 8).is_none());
    }
}
