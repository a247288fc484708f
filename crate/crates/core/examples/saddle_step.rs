//! One network of agents driven by fixed gradients: primal steps, dual
//! steps, feasibility and stationarity, step by step.
//!
//! cargo run --release --example saddle_step

use d4l::coding::Dictionary;
use d4l::losses::ClassifierParams;
use d4l::saddle::{stationarity_report, AgentGradient, AgentState, Bounds, NetworkState, StepSchedule};
use d4l::topology::build_cycle;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> d4l::Result<()> {
    let (m, k, c) = (8, 6, 3);
    let topo = build_cycle(5)?;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let init = AgentState {
        dict: Dictionary::random(m, k, &mut rng),
        clf: ClassifierParams::zeros(k, c),
    };
    let bounds = Bounds::defaults(m, k, c);
    let schedule = StepSchedule::new(0.1, 20)?;
    let mut state = NetworkState::broadcast(&topo, &init);

    // Each agent pulls toward its own target, so the multipliers have to
    // do the work of reaching consensus.
    let targets: Vec<DMatrix<f64>> = (0..topo.n_nodes())
        .map(|_| DMatrix::from_fn(m, k, |_, _| rng.random_range(-0.3..0.3)))
        .collect();
    for t in 1..=200 {
        let eps = schedule.step_size(t)?;
        let grads: Vec<AgentGradient> = state
            .agents
            .iter()
            .zip(&targets)
            .map(|(a, target)| AgentGradient {
                dict: a.dict.atoms() - target,
                clf: DMatrix::zeros(k + 1, c),
            })
            .collect();
        let next = state.step(&topo, &grads, eps, &bounds)?;
        if t % 40 == 0 {
            let report = stationarity_report(&topo, &state, &grads, &next.agents, eps, &bounds)?;
            let spread = (next.agents[0].dict.atoms() - next.agents[2].dict.atoms()).norm();
            println!(
                "t={t:<4} eps={eps:.4} |D0-D2|={spread:.4} primal={:.4} dual={:.4} violations={}",
                report.primal_dict_norm,
                report.dual_lambda_norm,
                next.feasibility_violations(&bounds)
            );
        }
        state = next;
    }
    Ok(())
}
