//! Small reference topologies used throughout the tests and examples.

use crate::network::{FlowSpec, Network, NetError, Queue};

/// One queue, one flow type ("SQ1").
pub fn single_queue(nu: f64, mu: f64, c_max: f64) -> Result<Network, NetError> {
    Network::new(vec![Queue::new("l1", "v")], &[], vec![FlowSpec::new("l1", "v", nu, mu)], &[vec![0]], c_max)
}

/// Two queues in tandem, `l1 -> l2`, served by mutually exclusive schedules
/// ("T2"). A single flow type enters at `l1`.
pub fn tandem(nu: f64, mu: f64, c_max: f64) -> Result<Network, NetError> {
    Network::new(
        vec![Queue::new("l1", "v"), Queue::new("l2", "v")],
        &[(0, 1)],
        vec![FlowSpec::new("l1", "v", nu, mu)],
        &[vec![0], vec![1]],
        c_max,
    )
}

/// SQ1 with `mu = 0.5`, `C = 10` at offered load `rho`.
pub fn sq1(rho: f64) -> Network {
    single_queue(rho * 0.5, 0.5, 10.0).expect("valid SQ1 load")
}

/// T2 with `mu = 0.5`, `C = 10` at offered load `rho`.
pub fn t2(rho: f64) -> Network {
    tandem(rho * 0.5, 0.5, 10.0).expect("valid T2 load")
}
