#![allow(dead_code)]

use fedsuplinucb::env::EnvSpec;
use fedsuplinucb::orchestrator::{execute, Algo, ArrivalSpec, Execution, RunOptions, RunRequest};
use fedsuplinucb::AlgoConfig;

pub const SEEDS: [u64; 10] = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10];

/// d=10, K=10, M=5, T=20000, σ=0.1.
pub fn desk_cfg() -> AlgoConfig {
    AlgoConfig {
        dim: 10,
        arms: 10,
        clients: 5,
        horizon: 20_000,
        ..AlgoConfig::default()
    }
}

pub fn desk_env() -> EnvSpec {
    EnvSpec::synthetic(10, 0.1)
}

pub fn request(
    algo: Algo,
    cfg: AlgoConfig,
    env: EnvSpec,
    arrivals: ArrivalSpec,
    seed: u64,
) -> RunRequest {
    RunRequest {
        algo,
        cfg,
        env,
        arrivals,
        seed,
    }
}

pub fn run(req: &RunRequest) -> Execution {
    execute(req, &RunOptions::default()).expect("run succeeds")
}

pub fn run_with(req: &RunRequest, opts: RunOptions) -> Execution {
    execute(req, &opts).expect("run succeeds")
}

pub fn median(v: &[f64]) -> f64 {
    fedsuplinucb::cli::median(v).expect("nonempty")
}
