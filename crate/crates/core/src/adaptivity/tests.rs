use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::assembly::Operator;
use crate::dofs::enumerate_dofs;
use crate::forest::Pattern;
use crate::problems::{ArctanSolution, ProblemSpec};

/// Harmonic quadratic `x² − y²` (plus `z` in 3D).
struct Quadratic;

impl ExactSolution for Quadratic {
    fn value(&self, x: [f64; 3], out: &mut [f64]) {
        out[0] = x[0] * x[0] - x[1] * x[1] + x[2];
    }
    fn gradient(&self, x: [f64; 3], out: &mut [[f64; 3]]) {
        out[0] = [2.0 * x[0], -2.0 * x[1], 1.0];
    }
}

impl ProblemData for Quadratic {
    fn operator(&self) -> Operator {
        Operator::Laplace
    }
    fn source(&self, _: [f64; 3], out: &mut [f64]) {
        out[0] = 0.0;
    }
    fn dirichlet(&self, x: [f64; 3], out: &mut [f64]) {
        self.value(x, out)
    }
}

fn interpolate(disc: &Discretization, exact: &dyn ExactSolution) -> Vec<f64> {
    let mut v = [0.0];
    disc.map.node_coords.iter().map(|&x| {
        exact.value(x, &mut v);
        v[0]
    }).collect()
}

fn discretize(forest: &Forest, p: usize, problem: &dyn ProblemData) -> Discretization {
    Discretization::new(forest, enumerate_dofs(forest, p).unwrap(), problem).unwrap()
}

#[test]
fn representable_solution_has_zero_indicator() {
    let meshes = [
        Forest::uniform(2, 2).unwrap().apply_pattern(Pattern::Square, 2).unwrap(),
        Forest::uniform(3, 1).unwrap().apply_pattern(Pattern::Circle, 2).unwrap(),
    ];
    for f in &meshes {
        for p in [2, 4] {
            let disc = discretize(f, p, &Quadratic);
            let u = interpolate(&disc, &Quadratic);
            let est = estimate_error(f, &disc, &u, &Quadratic);
            assert!(est.eta_max() <= 1e-10, "p={p}: {}", est.eta_max());
            assert!(est.l2 <= 1e-10);
        }
    }
}

#[test]
fn indicator_agrees_with_refined_quadrature() {
    let problem = ProblemSpec::poisson_arctan(2);
    let exact = problem.exact().unwrap();
    let f = Forest::uniform(2, 5).unwrap();
    for p in [1, 2] {
        let disc = discretize(&f, p, &problem);
        let u = interpolate(&disc, &exact);
        let a = estimate_error(&f, &disc, &u, &exact);
        let b = estimate_error_with_points(&f, &disc, &u, &exact, p + 8);
        assert!((a.h1 - b.h1).abs() <= 0.05 * b.h1, "{} vs {}", a.h1, b.h1);
        assert!((a.l2 - b.l2).abs() <= 0.1 * b.l2, "{} vs {}", a.l2, b.l2);
        let sum: f64 = a.eta.iter().map(|e| e * e).sum();
        assert!((sum.sqrt() - a.h1).abs() <= 1e-12 * a.h1);
    }
}

#[test]
fn largest_indicator_sits_on_the_layer() {
    for dim in [2, 3] {
        let problem = ProblemSpec::poisson_arctan(dim);
        let exact = problem.exact().unwrap();
        let f = Forest::uniform(dim, if dim == 2 { 5 } else { 3 }).unwrap();
        let disc = discretize(&f, 1, &problem);
        let u = interpolate(&disc, &exact);
        let est = estimate_error(&f, &disc, &u, &exact);
        let k = (0..f.len()).max_by(|&a, &b| est.eta[a].total_cmp(&est.eta[b])).unwrap();
        let g = f.geometry(k);
        let r = exact.distance(g.center(dim));
        assert!((r - exact.radius).abs() <= g.h * (dim as f64).sqrt(), "r = {r}");
    }
}

#[test]
fn threshold_examples() {
    assert_eq!(mark_threshold(&[1.0, 0.6, 0.4], 0.5).unwrap(), vec![0, 1]);
    assert_eq!(mark_threshold(&[0.3, 1.0, 1.0, 0.999], 1.0 - 1e-12).unwrap(), vec![1, 2]);
    assert!(matches!(mark_threshold(&[1.0], 1.0), Err(AdaptError::Threshold(_))));
    assert!(matches!(mark_threshold(&[1.0], 0.0), Err(AdaptError::Threshold(_))));
}

proptest! {
    #[test]
    fn threshold_equals_filter(eta in prop::collection::vec(0.0f64..10.0, 1..200), theta in 0.01f64..0.99) {
        let max = eta.iter().cloned().fold(0.0, f64::max);
        let want: Vec<usize> = (0..eta.len()).filter(|&i| eta[i] > theta * max).collect();
        prop_assert_eq!(mark_threshold(&eta, theta).unwrap(), want);
    }

    #[test]
    fn histogram_marks_at_least_the_fraction(eta in prop::collection::vec(0.0f64..1.0, 1..400), zeta in 0.01f64..0.99, bins in 2usize..200) {
        let h = mark_fraction_histogram(&eta, zeta, bins).unwrap();
        let n = eta.len();
        prop_assert_eq!(h.histogram.iter().sum::<u64>(), n as u64);
        let need = (zeta * n as f64).ceil() as usize;
        prop_assert!(h.marked.len() >= need);
        // the overshoot is confined to the lowest marked bin
        let lowest = h.marked.iter().map(|&i| bin_of(eta[i], h.bin_width, bins)).min().unwrap();
        prop_assert!(h.marked.len() - (h.histogram[lowest - 1] as usize) < need);
        // every unmarked element is no larger than any marked one
        let min_marked = h.marked.iter().map(|&i| eta[i]).fold(f64::INFINITY, f64::min);
        let mut is_marked = vec![false; n];
        h.marked.iter().for_each(|&i| is_marked[i] = true);
        for i in 0..n {
            if !is_marked[i] {
                prop_assert!(eta[i] <= min_marked);
            }
        }
        prop_assert!((h.theta / h.bin_width - (h.theta / h.bin_width).round()).abs() < 1e-9 || h.bin_width == 0.0);
    }
}

#[test]
fn histogram_uniform_fraction_within_one_bin() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let eta: Vec<f64> = (0..100_000).map(|_| 1.0 - rng.gen::<f64>()).collect();
    let h = mark_fraction_histogram(&eta, 0.15, 100).unwrap();
    let frac = h.marked.len() as f64 / eta.len() as f64;
    assert!((0.15..=0.16).contains(&frac), "{frac}");
    assert!(eta.iter().zip(0..).all(|(&v, i)| (v > h.theta) == h.marked.binary_search(&i).is_ok()));
}

#[test]
fn histogram_matches_sorting_when_bins_resolve_values() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let k = 50;
    let eta: Vec<f64> = (0..5000).map(|_| rng.gen_range(1..=k) as f64).collect();
    for zeta in [0.05, 0.15, 0.33, 0.5] {
        let h = mark_fraction_histogram(&eta, zeta, k).unwrap();
        let mut sorted = eta.clone();
        sorted.sort_by(|a, b| b.total_cmp(a));
        let need = (zeta * eta.len() as f64).ceil() as usize;
        // smallest count of top elements, whole value groups, reaching ζ N
        let cut = sorted[need - 1];
        let want = sorted.iter().filter(|&&v| v >= cut).count();
        assert_eq!(h.marked.len(), want, "zeta {zeta}");
    }
}

#[test]
fn histogram_is_order_independent() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let eta: Vec<f64> = (0..50_000).map(|_| rng.gen::<f64>().powi(3)).collect();
    let mut rev = eta.clone();
    rev.reverse();
    let l = 1.0 / 64.0;
    assert_eq!(histogram(&eta, l, 64), histogram(&rev, l, 64));
    let serial: Vec<u64> = eta.iter().fold(vec![0; 64], |mut h, &v| {
        h[bin_of(v, l, 64) - 1] += 1;
        h
    });
    assert_eq!(histogram(&eta, l, 64), serial);
}

#[test]
fn equal_indicators_mark_everything() {
    let h = mark_fraction_histogram(&[0.5; 10], 0.15, 100).unwrap();
    assert_eq!(h.marked.len(), 10);
    assert!((h.theta - 99.0 * h.bin_width).abs() < 1e-15);
    let z = mark_fraction_histogram(&[0.0; 4], 0.5, 10).unwrap();
    assert_eq!(z.marked.len(), 4);
}

#[test]
fn histogram_rejects_bad_parameters() {
    assert!(matches!(mark_fraction_histogram(&[1.0], 0.0, 10), Err(AdaptError::Fraction(_))));
    assert!(matches!(mark_fraction_histogram(&[1.0], 1.0, 10), Err(AdaptError::Fraction(_))));
    assert!(matches!(mark_fraction_histogram(&[1.0], 0.5, 1), Err(AdaptError::Bins(1))));
}

fn config(order: usize, steps: usize, n_subdomains: usize) -> AdaptConfig {
    AdaptConfig {
        order,
        n_subdomains,
        steps,
        marker: Marker::default_for_order(order),
        bddc: BddcOptions::default(),
        pcg: PcgOptions { tol: 1e-10, max_iter: 500 },
    }
}

#[test]
fn zero_steps_is_one_solve() {
    let problem = ProblemSpec::poisson_arctan(2);
    let run = adapt_loop(&Forest::uniform(2, 3).unwrap(), &problem, &problem.exact().unwrap(), &config(1, 0, 4)).unwrap();
    assert_eq!(run.steps.len(), 1);
    assert_eq!(run.steps[0].n_marked, 0);
    assert_eq!(run.forest.len(), 64);
    let csv = adapt_csv(&run.steps);
    assert_eq!(csv.lines().next().unwrap(), "step,n_elements,n_dofs,n_interface,n_coarse,iterations,setup_time,pcg_time,L2_error,H1_error");
    assert_eq!(csv.lines().count(), 2);
}

#[test]
fn adaptive_errors_decrease() {
    let problem = ProblemSpec::poisson_arctan(2);
    let exact: ArctanSolution = problem.exact().unwrap();
    let run = adapt_loop(&Forest::uniform(2, 3).unwrap(), &problem, &exact, &config(1, 7, 4)).unwrap();
    for w in run.steps.windows(2) {
        assert!(w[1].l2_error < w[0].l2_error, "{:?}", run.steps);
        assert!(w[1].h1_error < w[0].h1_error);
        assert!(w[1].n_elements > w[0].n_elements);
    }
    assert!(run.forest.is_balanced());
}

#[test]
fn three_dimensional_refinement_doubles_near_the_layer() {
    let problem = ProblemSpec::poisson_arctan(3);
    let exact = problem.exact().unwrap();
    let run = adapt_loop(&Forest::uniform(3, 3).unwrap(), &problem, &exact, &config(1, 5, 8)).unwrap();
    let n: Vec<usize> = run.steps.iter().map(|s| s.n_elements).collect();
    for (k, w) in run.steps.windows(2).enumerate() {
        // marked elements alone: each becomes eight
        let marked = (w[0].n_elements + 7 * w[0].n_marked) as f64 / w[0].n_elements as f64;
        assert!((1.8..=2.3).contains(&marked), "{n:?}");
        // the 2:1 closure adds a further share near the refined band
        let total = w[1].n_elements as f64 / w[0].n_elements as f64;
        if k > 0 {
            assert!((1.8..=2.5).contains(&total), "{n:?}");
        }
    }
    // the finest leaves sit around the sphere
    let f = &run.forest;
    let finest = f.finest_level();
    for i in (0..f.len()).filter(|&i| f.leaf(i).level == finest) {
        let g = f.geometry(i);
        let r = exact.distance(g.center(3));
        assert!((r - exact.radius).abs() < 0.3, "leaf at r = {r}");
    }
}
