//! One-dimensional nodal bases and quadrature on `[0, 1]`.

/// Gauss–Lobatto points of order `p` (endpoints included), ascending.
pub fn gll_points(p: usize) -> Vec<f64> {
    match p {
        1 => vec![0.0, 1.0],
        2 => vec![0.0, 0.5, 1.0],
        3 => {
            let a = 0.5 / 5f64.sqrt();
            vec![0.0, 0.5 - a, 0.5 + a, 1.0]
        }
        4 => {
            let a = 0.5 * (3.0f64 / 7.0).sqrt();
            vec![0.0, 0.5 - a, 0.5, 0.5 + a, 1.0]
        }
        _ => panic!("unsupported order {p}"),
    }
}

/// Values of the Lagrange polynomials through `nodes` at `x`.
pub fn lagrange(nodes: &[f64], x: f64) -> Vec<f64> {
    (0..nodes.len())
        .map(|i| {
            let mut v = 1.0;
            for (j, &xj) in nodes.iter().enumerate() {
                if j != i {
                    v *= (x - xj) / (nodes[i] - xj);
                }
            }
            v
        })
        .collect()
}

/// Derivatives of the Lagrange polynomials through `nodes` at `x`.
pub fn lagrange_deriv(nodes: &[f64], x: f64) -> Vec<f64> {
    let n = nodes.len();
    (0..n)
        .map(|i| {
            let mut s = 0.0;
            for k in 0..n {
                if k == i {
                    continue;
                }
                let mut term = 1.0 / (nodes[i] - nodes[k]);
                for (j, &xj) in nodes.iter().enumerate() {
                    if j != i && j != k {
                        term *= (x - xj) / (nodes[i] - xj);
                    }
                }
                s += term;
            }
            s
        })
        .collect()
}

/// `n`-point Gauss–Legendre rule mapped to `[0, 1]`: (points, weights).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut pts = vec![0.0; n];
    let mut wts = vec![0.0; n];
    for i in 0..n {
        // Chebyshev initial guess, then Newton on P_n
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { x } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pm) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        pts[n - 1 - i] = 0.5 * (x + 1.0);
        wts[n - 1 - i] = 1.0 / ((1.0 - x * x) * dp * dp);
    }
    (pts, wts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_rules_integrate_monomials() {
        for n in 1..=7 {
            let (x, w) = gauss_legendre(n);
            for k in 0..2 * n {
                let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(k as i32)).sum();
                assert!((q - 1.0 / (k as f64 + 1.0)).abs() < 1e-14, "n={n} k={k}");
            }
        }
    }

    #[test]
    fn two_point_rule() {
        let (x, w) = gauss_legendre(2);
        let a = 0.5 / 3f64.sqrt();
        assert!((x[0] - (0.5 - a)).abs() < 1e-15 && (x[1] - (0.5 + a)).abs() < 1e-15);
        assert!((w[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn lobatto_points_are_roots_of_legendre_derivative() {
        // interior GLL points of order p are the roots of P'_p on [-1, 1]
        for p in 2..=4 {
            let pts = gll_points(p);
            for &t in &pts[1..p] {
                let x = 2.0 * t - 1.0;
                let h = 1e-6;
                let leg = |x: f64| {
                    let (mut p0, mut p1) = (1.0, x);
                    for k in 2..=p {
                        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                        p0 = p1;
                        p1 = p2;
                    }
                    p1
                };
                let d = (leg(x + h) - leg(x - h)) / (2.0 * h);
                assert!(d.abs() < 1e-8, "p={p} t={t} d={d}");
            }
        }
    }

    #[test]
    fn lagrange_partition_of_unity_and_derivative() {
        let nodes = gll_points(4);
        for &x in &[0.0, 0.13, 0.5, 0.77, 1.0] {
            let v = lagrange(&nodes, x);
            assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-14);
            let d = lagrange_deriv(&nodes, x);
            assert!(d.iter().sum::<f64>().abs() < 1e-12);
            // derivative of x^3 reproduced
            let dx3: f64 = nodes.iter().zip(&d).map(|(n, d)| n.powi(3) * d).sum();
            assert!((dx3 - 3.0 * x * x).abs() < 1e-12);
        }
        let v = lagrange(&nodes, nodes[2]);
        assert_eq!(v, [0.0, 0.0, 1.0, 0.0, 0.0]);
    }
}
