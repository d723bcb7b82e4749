//! Uniform and adaptive error curves for the 2D arctan problem.

use amr_bddc::problems::{convergence_report, ConvergenceSetup, ProblemSpec, RefinementMode};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let problem = ProblemSpec::poisson_arctan(2);
    let uniform = ConvergenceSetup { initial_level: 3, steps: 4, n_subdomains: 4, marker: None };
    let adaptive = ConvergenceSetup { steps: 10, ..uniform };
    for (mode, setup) in [(RefinementMode::Uniform, uniform), (RefinementMode::Adaptive, adaptive)] {
        for curve in convergence_report(&problem, &[1, 2], mode, &setup)? {
            print!("{}", curve.to_gnuplot());
            if mode == RefinementMode::Uniform {
                let (l2, h1) = curve.observed_orders().last().copied().unwrap_or_default();
                println!("# observed orders on the last step: L2 {l2:.2}, H1 {h1:.2}");
            }
            println!();
        }
    }
    Ok(())
}
