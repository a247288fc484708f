//! Builds each supported network shape and prints its diagnostics.
//!
//! cargo run --release --example topology

use d4l::topology::{build_cycle, build_grid, build_random, build_small_world, Topology};

fn describe(name: &str, t: &Topology) -> d4l::Result<()> {
    let (gamma, big) = t.spectral_bounds(1)?;
    let degrees: Vec<usize> = (0..t.n_nodes()).map(|i| t.degree(i)).collect();
    println!(
        "{name:<12} N={:<3} directed edges={:<4} diameter={:?} gamma={gamma:.4} Gamma={big:.4} min/max degree={}/{}",
        t.n_nodes(),
        t.n_edges(),
        t.diameter(),
        degrees.iter().min().unwrap(),
        degrees.iter().max().unwrap(),
    );
    Ok(())
}

fn main() -> d4l::Result<()> {
    describe("cycle", &build_cycle(10)?)?;
    describe("grid", &build_grid(16)?)?;
    describe("random", &build_random(10, 0.2, 7)?)?;
    describe("small-world", &build_small_world(20, 0.1, 7)?)?;

    // Edges come in reverse pairs; multipliers live on the tail node.
    let t = build_cycle(4)?;
    for (e, &(i, j)) in t.edges().iter().enumerate() {
        println!("edge {e}: {i} -> {j}, reverse edge {}", t.reverse_edge(e));
    }
    println!("{}", t.to_json());
    Ok(())
}
