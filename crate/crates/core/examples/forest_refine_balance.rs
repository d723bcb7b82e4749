//! Prescribed circle/square refinements of the unit cube, 2:1 balancing and
//! equal-count Z-order partitioning.

use amr_bddc::forest::{AdjacencyRule, Forest, Pattern};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let base = Forest::uniform(3, 2)?;
    let refined = base.apply_pattern(Pattern::Circle, 2)?.apply_pattern(Pattern::Square, 2)?;
    println!("leaves: {} -> {}, finest level {}", base.len(), refined.len(), refined.finest_level());
    println!("2:1 balanced: {}", refined.is_balanced());

    let unbalanced = Forest::uniform(3, 1)?.refine(&[0])?.refine(&[7])?.refine(&[14])?;
    let fixed = unbalanced.balance_2to1()?;
    println!("closure of a deep local refinement: {} -> {} leaves (balanced: {} -> {})", unbalanced.len(), fixed.len(), unbalanced.is_balanced(), fixed.is_balanced());

    let part = refined.partition_equal(7)?;
    println!("Z-order slices for 7 subdomains: {:?}", part.sizes());
    let labels = refined.detect_components(&part, AdjacencyRule::Face);
    println!("face-connected components per subdomain: {:?}", labels.n_components);

    let brick = Forest::brick(3, 3, 1)?;
    let sizes = brick.partition_equal(27)?.sizes();
    println!("3x3x3 brick of trees: {} leaves, 27 subdomains of {} to {} leaves", brick.len(), sizes.iter().min().unwrap(), sizes.iter().max().unwrap());
    Ok(())
}
