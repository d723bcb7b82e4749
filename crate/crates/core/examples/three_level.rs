//! Two- and three-level BDDC on the same regular problem. Usage:
//! `three_level [subdomains-per-edge] [H/h]`.

use amr_bddc::bddc::{BddcOptions, CoarseMode};
use amr_bddc::krylov::PcgOptions;
use amr_bddc::problems::{ForestRecipe, ProblemSpec};
use amr_bddc::solver::{solve_bddc, Substructured};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<usize> = std::env::args().skip(1).map(|a| a.parse()).collect::<Result<_, _>>()?;
    let k = args.first().copied().unwrap_or(4);
    let h_ratio = args.get(1).copied().unwrap_or(4);
    let ns = k * k * k;
    let problem = ProblemSpec::poisson_const(3);
    let forest = ForestRecipe::Lattice { h_ratio }.build(3, ns)?;
    let sub = Substructured::new(&forest, 1, ns, &problem)?;
    let modes = [
        ("2-level", BddcOptions::default()),
        ("3-level", BddcOptions { levels: 3, ..Default::default() }),
        ("3-level, inner PCG", BddcOptions { levels: 3, coarse_mode: CoarseMode::InnerPcg { tol: 1e-8, max_iter: 200 }, ..Default::default() }),
    ];
    for (name, opts) in modes {
        let out = solve_bddc(&sub, opts, PcgOptions::default())?;
        let second = out.second_level.map(|(n, g, c)| format!(" | level 2: N_S {n}, nΓ {g}, n_C {c}")).unwrap_or_default();
        println!(
            "{name:>20}: N_S {ns}, nΓ {}, n_C {}{second} | {} iterations, condition ≈ {:.2}",
            out.n_interface,
            out.n_coarse,
            out.report.iterations,
            out.report.condition_estimate()
        );
    }
    Ok(())
}
