use std::time::Instant;
use tethersim::bench::synthetic_flight_trace;
use tethersim::lumped::*;
use tethersim::pipeline::project_to_plane;
use tethersim::TetherSpec;

fn main() {
    let spec = TetherSpec::from_total_mass(32.0, 0.450, 0.0026, 1.2).unwrap();
    let trace = synthetic_flight_trace(40, 0.1);
    let model = LumpedModel::new(spec, 60).unwrap();
    for fraction in [0.5, 0.125, 1.0 / 16.0, 1.0 / 30.0, 1.0 / 60.0] {
        let solver = EquilibriumSolver::new(model).with_options(EquilibriumOptions {
            tol: 1e-8,
            max_iters: 400,
            early_abort_growth_steps: 8,
            max_step_fraction: fraction,
        });
        let mut ok = 0;
        let mut iters_sum = 0usize;
        let mut worst = 0usize;
        let t0 = Instant::now();
        for s in &trace {
            let p = project_to_plane(s).unwrap();
            let init = straight_line_init(&p.boundary, solver.model());
            if let Ok(sol) = solver.solve(&p.boundary, &p.environment, &init, "straight-line") {
                ok += 1;
                iters_sum += sol.solution.diagnostics.iterations;
                worst = worst.max(sol.solution.diagnostics.iterations);
            }
        }
        println!(
            "fraction={fraction:.4}: {ok}/40 converged, mean iters {:.1}, worst {worst}, total {:.2}s",
            iters_sum as f64 / ok.max(1) as f64,
            t0.elapsed().as_secs_f64()
        );
    }
}
