//! Clamped elastic cube under its own weight, with corner and average
//! constraints.

use amr_bddc::bddc::BddcOptions;
use amr_bddc::krylov::PcgOptions;
use amr_bddc::problems::{ForestRecipe, ProblemSpec};
use amr_bddc::solver::{solve_bddc, Substructured};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let problem = ProblemSpec::elasticity();
    for ns in [8, 27] {
        let forest = ForestRecipe::Lattice { h_ratio: 4 }.build(3, ns)?;
        let sub = Substructured::new(&forest, 1, ns, &problem)?;
        let opts = BddcOptions { policy: problem.policy(), ..Default::default() };
        let out = solve_bddc(&sub, opts, PcgOptions::default())?;
        let min_uz = out.u.iter().skip(2).step_by(3).fold(0.0f64, |m, &v| m.min(v));
        println!(
            "N_S {ns}: n {}, nΓ {}, n_C {}, {} iterations, condition ≈ {:.2}, max downward displacement {:.3e}",
            out.n,
            out.n_interface,
            out.n_coarse,
            out.report.iterations,
            out.report.condition_estimate(),
            -min_uz
        );
    }
    Ok(())
}
