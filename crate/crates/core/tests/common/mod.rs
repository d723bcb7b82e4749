#![allow(dead_code)]
//! Global constrained oracle for hanging-node meshes: every geometric node is
//! an unknown, continuity across hanging faces is imposed as `G u = 0`, and
//! the problem is solved in the null space of `G`.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use amr_bddc::assembly::{element_poisson, Discretization, Operator, ProblemData};
use amr_bddc::basis::{gll_points, lagrange};
use amr_bddc::dofs::{enumerate_dofs, local_multi_index};
use amr_bddc::forest::{Forest, Pattern};
use amr_bddc::solver::solve_direct;

fn source(x: [f64; 3]) -> f64 {
    1.0 + x[0] * (1.0 - x[1]) + 2.0 * x[2]
}

struct Problem;

impl ProblemData for Problem {
    fn operator(&self) -> Operator {
        Operator::Laplace
    }
    fn source(&self, x: [f64; 3], out: &mut [f64]) {
        out[0] = source(x);
    }
    fn dirichlet(&self, _: [f64; 3], out: &mut [f64]) {
        out[0] = 0.0;
    }
}

pub fn key(x: [f64; 3]) -> [i64; 3] {
    x.map(|v| (v * 1e9).round() as i64)
}

pub fn element_coords(f: &Forest, e: usize, p: usize) -> Vec<[f64; 3]> {
    let dim = f.dim();
    let g = f.geometry(e);
    let gll = gll_points(p);
    (0..(p + 1).pow(dim as u32))
        .map(|k| {
            let m = local_multi_index(dim, p, k);
            let mut x = [0.0; 3];
            for a in 0..dim {
                x[a] = g.lower[a] + g.h * gll[m[a]];
            }
            x
        })
        .collect()
}

/// Nodal solution over all geometric nodes, keyed by coordinate.
pub fn constrained_oracle(f: &Forest, p: usize) -> HashMap<[i64; 3], f64> {
    let dim = f.dim();
    let mut index: HashMap<[i64; 3], usize> = HashMap::new();
    let mut coords = Vec::new();
    let conn: Vec<Vec<usize>> = (0..f.len())
        .map(|e| {
            element_coords(f, e, p)
                .into_iter()
                .map(|x| {
                    *index.entry(key(x)).or_insert_with(|| {
                        coords.push(x);
                        coords.len() - 1
                    })
                })
                .collect()
        })
        .collect();
    let n = coords.len();
    let mut a = DMatrix::<f64>::zeros(n, n);
    let mut b = DVector::<f64>::zeros(n);
    for e in 0..f.len() {
        let em = element_poisson(dim, p, &f.geometry(e), &source);
        for (i, &gi) in conn[e].iter().enumerate() {
            b[gi] += em.f[i];
            for (j, &gj) in conn[e].iter().enumerate() {
                a[(gi, gj)] += em.a.get(i, j);
            }
        }
    }
    // continuity: a node inside a closed element but not among its nodes
    // takes the value of that element's polynomial there
    let gll = gll_points(p);
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    for (x_id, &x) in coords.iter().enumerate() {
        for e in 0..f.len() {
            let g = f.geometry(e);
            let inside = (0..dim).all(|d| x[d] >= g.lower[d] - 1e-12 && x[d] <= g.lower[d] + g.h + 1e-12);
            if !inside || conn[e].contains(&x_id) {
                continue;
            }
            let per_axis: Vec<Vec<f64>> = (0..dim).map(|d| lagrange(&gll, (x[d] - g.lower[d]) / g.h)).collect();
            let mut row = vec![(x_id, -1.0)];
            for (k, &gk) in conn[e].iter().enumerate() {
                let m = local_multi_index(dim, p, k);
                let w: f64 = (0..dim).map(|d| per_axis[d][m[d]]).product();
                if w.abs() > 1e-14 {
                    row.push((gk, w));
                }
            }
            rows.push(row);
        }
    }
    let on_boundary = |x: &[f64; 3]| (0..dim).any(|d| x[d].abs() < 1e-12 || (x[d] - 1.0).abs() < 1e-12);
    let free: Vec<usize> = (0..n).filter(|&i| !on_boundary(&coords[i])).collect();
    let mut pos = vec![usize::MAX; n];
    free.iter().enumerate().for_each(|(k, &i)| pos[i] = k);
    let nf = free.len();
    let mut gmat = DMatrix::<f64>::zeros(rows.len().max(1), nf);
    for (r, row) in rows.iter().enumerate() {
        for &(i, w) in row {
            if pos[i] != usize::MAX {
                gmat[(r, pos[i])] += w;
            }
        }
    }
    // null space of G: right singular vectors of the square GᵀG with zero singular value
    let svd = (gmat.transpose() * &gmat).svd(false, true);
    let vt = svd.v_t.expect("requested");
    let scale = svd.singular_values.max().max(1.0);
    let cols: Vec<usize> = (0..nf).filter(|&k| svd.singular_values[k] < 1e-10 * scale).collect();
    assert_eq!(nf - cols.len(), gmat.clone().svd(false, false).singular_values.iter().filter(|&&v| v > 1e-8).count());
    let z = DMatrix::from_fn(nf, cols.len(), |i, j| vt[(cols[j], i)]);
    let af = DMatrix::from_fn(nf, nf, |i, j| a[(free[i], free[j])]);
    let bf = DVector::from_fn(nf, |i, _| b[free[i]]);
    let red = z.transpose() * &af * &z;
    let y = red.cholesky().expect("reduced operator SPD").solve(&(z.transpose() * bf));
    let uf = &z * y;
    let mut out = HashMap::new();
    for (i, x) in coords.iter().enumerate() {
        out.insert(key(*x), if pos[i] == usize::MAX { 0.0 } else { uf[pos[i]] });
    }
    out
}

pub fn random_balanced(dim: usize, target: usize, seed: u64) -> Forest {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut f = Forest::uniform(dim, 1).unwrap();
    while f.len() + (1 << dim) - 1 <= target {
        let i = rng.gen_range(0..f.len());
        if f.leaf(i).level < 5 {
            f = f.refine(&[i]).unwrap();
        }
    }
    f.balance_2to1().unwrap()
}

/// Largest nodal deviation of the eliminated solve from the oracle, relative to max |u|.
pub fn deviation(f: &Forest, p: usize) -> f64 {
    let map = enumerate_dofs(f, p).unwrap();
    assert!(map.constrained_elements() > 0, "mesh has no hanging nodes");
    let disc = Discretization::new(f, map, &Problem).unwrap();
    assert!(disc.n_dofs() <= 2000);
    let u = solve_direct(f, &disc, &Problem).unwrap();
    let oracle = constrained_oracle(f, p);
    let umax = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    disc.map.node_coords.iter().enumerate().map(|(g, x)| (u[g] - oracle[&key(*x)]).abs() / umax).fold(0.0, f64::max)
}

/// Meshes with hanging nodes and the orders checked on each.
pub fn hanging_cases() -> Vec<(Forest, Vec<usize>)> {
    vec![
        (Forest::uniform(2, 1).unwrap().apply_pattern(Pattern::Square, 3).unwrap(), vec![1, 2, 4]),
        (random_balanced(2, 40, 3), vec![1, 2, 4]),
        (Forest::uniform(3, 1).unwrap().apply_pattern(Pattern::Square, 1).unwrap(), vec![1, 2]),
        (random_balanced(3, 36, 7), vec![1, 2]),
        (Forest::uniform(3, 1).unwrap().refine(&[0]).unwrap(), vec![4]),
    ]
}
