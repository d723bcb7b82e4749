//! Adaptive refinement of the arctan internal-layer problem with histogram
//! marking. Usage: `adaptivity_arctan [dim] [steps] [order] [subdomains]`.

use amr_bddc::adaptivity::{adapt_csv, adapt_loop, AdaptConfig, Marker};
use amr_bddc::bddc::BddcOptions;
use amr_bddc::forest::Forest;
use amr_bddc::krylov::PcgOptions;
use amr_bddc::problems::ProblemSpec;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<usize> = std::env::args().skip(1).map(|a| a.parse()).collect::<Result<_, _>>()?;
    let dim = args.first().copied().unwrap_or(3);
    let steps = args.get(1).copied().unwrap_or(5);
    let order = args.get(2).copied().unwrap_or(1);
    let n_subdomains = args.get(3).copied().unwrap_or(8);
    let problem = ProblemSpec::poisson_arctan(dim);
    let exact = problem.exact().expect("arctan has a closed form");
    let config = AdaptConfig {
        order,
        n_subdomains,
        steps,
        marker: Marker::default_for_order(order),
        bddc: BddcOptions::default(),
        pcg: PcgOptions::default(),
    };
    let run = adapt_loop(&Forest::uniform(dim, 3)?, &problem, &exact, &config)?;
    print!("{}", adapt_csv(&run.steps));
    let growth: Vec<String> = run.steps.windows(2).map(|w| format!("{:.2}", w[1].n_elements as f64 / w[0].n_elements as f64)).collect();
    println!("element growth per step: {}", growth.join(" "));
    Ok(())
}
