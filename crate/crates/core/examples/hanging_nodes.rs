//! Hanging-node elimination: transition matrices of a constrained element and
//! a solve on a locally refined mesh.

use amr_bddc::assembly::{Operator, ProblemData};
use amr_bddc::dofs::enumerate_dofs;
use amr_bddc::forest::Forest;
use amr_bddc::assembly::Discretization;
use amr_bddc::solver::solve_direct;

struct UnitLoad;

impl ProblemData for UnitLoad {
    fn operator(&self) -> Operator {
        Operator::Laplace
    }
    fn source(&self, _: [f64; 3], out: &mut [f64]) {
        out[0] = 1.0;
    }
    fn dirichlet(&self, _: [f64; 3], out: &mut [f64]) {
        out[0] = 0.0;
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // one quadrant refined: its neighbours see hanging nodes
    let forest = Forest::uniform(2, 1)?.refine(&[0])?;
    for p in [1, 2, 4] {
        let map = enumerate_dofs(&forest, p)?;
        println!("p={p}: {} global nodes, {} constrained elements", map.n_global, map.constrained_elements());
        if let Some(e) = (0..forest.len()).find(|&e| map.transition(e).is_some()) {
            for (row, entries) in &map.transition(e).unwrap().rows {
                let terms: Vec<String> = entries.iter().map(|(k, w)| format!("{w:+.4}·u{k}")).collect();
                println!("  element {e}, local node {row} = {}", terms.join(" "));
            }
        }
        let disc = Discretization::new(&forest, map, &UnitLoad)?;
        let u = solve_direct(&forest, &disc, &UnitLoad)?;
        let centre = disc.map.node_coords.iter().position(|x| (x[0] - 0.5).abs() < 1e-12 && (x[1] - 0.5).abs() < 1e-12).unwrap();
        println!("  u(0.5, 0.5) = {:.6}", u[centre]);
    }
    Ok(())
}
