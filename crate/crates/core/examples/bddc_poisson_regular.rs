//! Poisson on a uniform cube split into `k^3` regular subdomains, solved
//! with two-level BDDC. Usage: `bddc_poisson_regular [level] [subdomains] [order]`.

use std::time::Instant;

use amr_bddc::assembly::{Operator, ProblemData};
use amr_bddc::bddc::BddcOptions;
use amr_bddc::forest::Forest;
use amr_bddc::krylov::PcgOptions;
use amr_bddc::solver::{solve_bddc, Substructured};

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
    let args: Vec<usize> = std::env::args().skip(1).map(|a| a.parse()).collect::<Result<_, _>>()?;
    let level = args.first().copied().unwrap_or(4) as u8;
    let nsub = args.get(1).copied().unwrap_or(8);
    let order = args.get(2).copied().unwrap_or(1);
    let t = Instant::now();
    let forest = Forest::uniform(3, level)?;
    let sub = Substructured::new(&forest, order, nsub, &UnitLoad)?;
    println!("assembled {} free dofs in {:.2}s", sub.n_free(), t.elapsed().as_secs_f64());
    let out = solve_bddc(&sub, BddcOptions::default(), PcgOptions::default())?;
    println!("N_S {nsub}  n {}  nΓ {}  n_C {}", out.n, out.n_interface, out.n_coarse);
    println!("iterations {}  residual {:.2e}  condition ≈ {:.2}", out.report.iterations, out.report.final_residual(), out.report.condition_estimate());
    println!("setup {:.2}s  pcg {:.2}s", out.setup_seconds, out.pcg_seconds);
    Ok(())
}
