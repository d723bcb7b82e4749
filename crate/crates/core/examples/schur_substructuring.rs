//! Iterative substructuring without a preconditioner: matrix-free interface
//! Schur complement, reduced right-hand side, PCG and interior recovery.

use amr_bddc::assembly::{Operator, ProblemData};
use amr_bddc::forest::{Forest, Pattern};
use amr_bddc::krylov::{pcg, PcgOptions};
use amr_bddc::solver::{relative_energy_difference, solve_direct, Substructured};
use amr_bddc::substructuring::{recover_interior, reduced_rhs};

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
    let forest = Forest::uniform(2, 4)?.apply_pattern(Pattern::Circle, 2)?;
    let sub = Substructured::new(&forest, 2, 6, &UnitLoad)?;
    let schur = sub.schur()?;
    println!("{} free dofs, {} on the interface of {} subdomains", sub.n_free(), schur.n_interface, schur.num_subdomains());
    let g = reduced_rhs(&schur, &sub.systems);
    let (ug, report) = pcg(|x| schur.apply(x), |r| r.to_vec(), &g, PcgOptions::default())?;
    println!("unpreconditioned CG: {} iterations, condition ≈ {:.1}", report.iterations, report.condition_estimate());
    let u = recover_interior(&schur, &sub.systems, &sub.ic, &ug, &sub.disc.boundary_values);
    let direct = solve_direct(&forest, &sub.disc, &UnitLoad)?;
    println!("relative energy difference to the direct solve: {:.2e}", relative_energy_difference(&forest, &sub.disc, &UnitLoad, &u, &direct));
    Ok(())
}
