//! A subdomain made of two separated blocks: constraints shared across the
//! blocks leave a rigid-body kernel, per-component constraints do not.

use amr_bddc::bddc::{factor_saddle, select_constraints, BddcOptions, ConstraintPolicy};
use amr_bddc::forest::{Forest, Partition};
use amr_bddc::krylov::PcgOptions;
use amr_bddc::problems::ProblemSpec;
use amr_bddc::solver::{solve_bddc, Substructured};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let forest = Forest::uniform(3, 3)?;
    let owner: Vec<usize> = (0..forest.len())
        .map(|e| {
            let c = forest.geometry(e).center(3);
            let a = c.iter().all(|&x| x > 0.125 && x < 0.375);
            let b = c.iter().all(|&x| x > 0.625 && x < 0.875);
            usize::from(!(a || b))
        })
        .collect();
    let problem = ProblemSpec::elasticity();
    let sub = Substructured::with_partition(&forest, 1, Partition::from_owner(2, owner), &problem)?;
    let t = &sub.topology;
    println!("subdomain 0: {} components, floating {:?}", sub.labeling.n_components[0], t.floating[0]);

    let mut blind = t.clone();
    blind.dof_component[0].iter_mut().for_each(|c| *c = 0);
    blind.n_components[0] = 1;
    blind.floating[0] = vec![false];
    let policy = ConstraintPolicy::AVERAGES_AND_CORNERS;
    let shared = select_constraints(&sub.ic, &blind, policy)?;
    match factor_saddle(&sub.systems[0].a, &shared.rows[0], &t.dof_component[0], &t.floating[0], t.kernel_dim, 0) {
        Ok(_) => println!("shared constraints: factorized (unexpected)"),
        Err(e) => println!("shared constraints ({} rows): {e}", shared.rows[0].len()),
    }
    let own = select_constraints(&sub.ic, t, policy)?;
    let f = factor_saddle(&sub.systems[0].a, &own.rows[0], &t.dof_component[0], &t.floating[0], t.kernel_dim, 0)?;
    println!("per-component constraints ({} rows): inertia {:?}", own.rows[0].len(), f.inertia);

    let out = solve_bddc(&sub, BddcOptions { policy, ..Default::default() }, PcgOptions::default())?;
    println!("BDDC-PCG: {} iterations, final residual {:.1e}", out.report.iterations, out.report.final_residual());
    Ok(())
}
