//! Simulation designs, test-set metrics and adversarial fixtures.

mod hard;
mod metrics;
mod simulate;

pub use hard::{hard_instance_generator, HardInstance, HardInstanceConfig, HardInstancePolicy};
pub use metrics::{empirical_robust_value, gaussian_kl_equal_variance, kl_sphere_perturb, v_min_metric};
pub use simulate::{
    sim_behavior, sim_best_arm, sim_beta, sim_means, simulate, simulate_linear_boundary, target_policy_rings, RingsPolicy,
    Simulated, Simulation, SIM_ACTIONS, SIM_DIM, SIM_SIGMA,
};
