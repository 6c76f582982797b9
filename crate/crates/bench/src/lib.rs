//! Fixed inputs shared by the benchmarks.

use delayou::{Beta, DelayKernel, DelayOperator, ModeSystem};

/// Dirichlet heat model on `[0, 1]` with `A1 = A`, first-mode forcing.
pub fn heat_discrete(modes: usize) -> (ModeSystem, DelayKernel) {
    let mut f = vec![0.0; modes];
    f[0] = 1.0;
    let sys = ModeSystem::dirichlet(1.0, DelayOperator::Laplacian, DelayOperator::None, &f).unwrap();
    (sys, DelayKernel::new(0.1, 0.5, Beta::Zero).unwrap())
}

/// Dirichlet heat model with an exponential distributed kernel through `A`.
pub fn heat_exponential(modes: usize) -> (ModeSystem, DelayKernel) {
    let f = vec![1.0; modes];
    let sys = ModeSystem::dirichlet(1.0, DelayOperator::None, DelayOperator::Laplacian, &f).unwrap();
    (sys, DelayKernel::new(1.0, 0.0, Beta::Exponential { a: 0.3, b: -1.0 }).unwrap())
}
