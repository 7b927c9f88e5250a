mod common;

use common::*;
use fedsuplinucb::bandit::{slucb_select, ClientState, SelectMode, SigmaBarParams};
use fedsuplinucb::env::{
    best_arm, AdversarySpec, AdversaryStrategy, EnvSpec, LinearEnv, NoiseModel, SigmaSchedule,
};
use fedsuplinucb::metrics::{cumulative_regret, loglog_slope};
use fedsuplinucb::orchestrator::{
    execute, make_arrivals, run_variance_adaptive, Algo, ArrivalPattern, ArrivalSpec, RunOptions,
};
use fedsuplinucb::protocol::{async_trigger, ServerState};
use fedsuplinucb::{AlgoConfig, Error, Variant};

fn small_cfg(clients: usize, horizon: usize) -> AlgoConfig {
    AlgoConfig {
        dim: 4,
        arms: 5,
        clients,
        horizon,
        ..AlgoConfig::default()
    }
}

#[test]
fn identical_requests_give_identical_logs() {
    let req = request(
        Algo::Async,
        small_cfg(3, 600),
        EnvSpec::synthetic(4, 0.1),
        ArrivalSpec::Random,
        11,
    );
    let a = run(&req);
    let b = run(&req);
    assert_eq!(a.log, b.log);
    assert_eq!(
        serde_json::to_string(&a.log).unwrap(),
        serde_json::to_string(&b.log).unwrap()
    );
    let other = run(&request(
        Algo::Async,
        small_cfg(3, 600),
        EnvSpec::synthetic(4, 0.1),
        ArrivalSpec::Random,
        12,
    ));
    assert_ne!(a.log.records, other.log.records);
}

#[test]
fn async_m1_c0_matches_centralized() {
    for seed in 1..=5 {
        let cfg = AlgoConfig {
            async_threshold: Some(0.0),
            clients: 1,
            horizon: 300,
            ..small_cfg(1, 300)
        };
        let env = EnvSpec::synthetic(4, 0.0);
        let a = run(&request(
            Algo::Async,
            cfg.clone(),
            env.clone(),
            ArrivalSpec::RoundRobin,
            seed,
        ));
        let b = run(&request(
            Algo::Baseline,
            cfg.clone(),
            env,
            ArrivalSpec::RoundRobin,
            seed,
        ));
        assert_eq!(a.log.actions(), b.log.actions(), "seed {seed}");
        assert_eq!(
            a.log.records.iter().map(|r| r.layer).collect::<Vec<_>>(),
            b.log.records.iter().map(|r| r.layer).collect::<Vec<_>>()
        );

        let noiseless_short = AlgoConfig { horizon: 10, ..cfg };
        let a = run(&request(
            Algo::Async,
            noiseless_short.clone(),
            EnvSpec::synthetic(4, 0.0),
            ArrivalSpec::RoundRobin,
            seed,
        ));
        let b = run(&request(
            Algo::Baseline,
            noiseless_short,
            EnvSpec::synthetic(4, 0.0),
            ArrivalSpec::RoundRobin,
            seed,
        ));
        assert_eq!(a.log.actions(), b.log.actions());
    }
}

/// Independent lazy SupLinUCB for one client, written against the public
/// building blocks only.
fn lazy_local_actions(
    cfg: &AlgoConfig,
    env_spec: &EnvSpec,
    seed: u64,
    pattern: &[usize],
    client: usize,
) -> Vec<usize> {
    let schedule = fedsuplinucb::build_schedule(cfg).unwrap();
    let mut env = LinearEnv::build(env_spec, seed).unwrap();
    let mut state = ClientState::new(client, schedule.layers(), cfg.dim, cfg.ridge_lambda).unwrap();
    let mut out = Vec::new();
    for (n, &c) in pattern.iter().enumerate() {
        if c != client {
            continue;
        }
        let ctx = env.gen_contexts(client, cfg.arms).unwrap();
        let sel = slucb_select(&state, &schedule, &ctx, SelectMode::Lazy).unwrap();
        let o = env.pull(client, &ctx, sel.action, n as u64).unwrap();
        state
            .record(sel.layer, &ctx[sel.action], o.observed, 1.0)
            .unwrap();
        out.push(sel.action);
    }
    out
}

#[test]
fn infinite_c_means_no_communication() {
    let cfg = AlgoConfig {
        async_threshold: Some(f64::INFINITY),
        ..small_cfg(3, 300)
    };
    let env = EnvSpec::synthetic(4, 0.1);
    let ex = run(&request(
        Algo::Async,
        cfg.clone(),
        env.clone(),
        ArrivalSpec::RoundRobin,
        2,
    ));
    assert_eq!(ex.log.comm_batches(), 0);
    assert!(ex.comm.events.is_empty());
    let pattern: Vec<usize> = (0..300).map(|t| t % 3).collect();
    for i in 0..3 {
        let logged: Vec<usize> = ex
            .log
            .records
            .iter()
            .filter(|r| r.client == i)
            .map(|r| r.arm)
            .collect();
        assert_eq!(logged, lazy_local_actions(&cfg, &env, 2, &pattern, i));
    }
}

#[test]
fn default_config_communicates_less_than_t() {
    let ex = run(&request(
        Algo::Async,
        small_cfg(4, 2000),
        EnvSpec::synthetic(4, 0.1),
        ArrivalSpec::Random,
        1,
    ));
    assert!(ex.log.comm_batches() > 0);
    assert!((ex.log.comm_batches() as usize) < 2000);
    assert_eq!(ex.log.comm_batches(), ex.log.comm_exchanges());
}

#[test]
fn async_trigger_never_left_pending() {
    let ex = run(&request(
        Algo::Async,
        small_cfg(3, 1500),
        EnvSpec::synthetic(4, 0.1),
        ArrivalSpec::Random,
        4,
    ));
    let c = ex.log.meta.async_threshold;
    for client in &ex.clients {
        for s in 0..client.layers() {
            assert!(!async_trigger(client.synced(s), client.pending(s), c).unwrap());
        }
    }
}

#[test]
fn sync_m1_d0_matches_centralized() {
    for seed in 1..=4 {
        let cfg = AlgoConfig {
            sync_threshold: Some(0.0),
            ..small_cfg(1, 250)
        };
        let env = EnvSpec::synthetic(4, 0.1);
        let s = run(&request(
            Algo::Sync,
            cfg.clone(),
            env.clone(),
            ArrivalSpec::RoundRobin,
            seed,
        ));
        let b = run(&request(
            Algo::Baseline,
            cfg,
            env,
            ArrivalSpec::RoundRobin,
            seed,
        ));
        assert_eq!(s.log.actions(), b.log.actions());
        assert!(s.log.comm_batches() > 0);
        assert!(s
            .log
            .records
            .iter()
            .filter(|r| r.comm_batch)
            .all(|r| r.comm_exchanges == 1));
    }
}

#[test]
fn sync_activity_and_accounting() {
    let cfg = small_cfg(3, 200);
    let ex = run(&request(
        Algo::Sync,
        cfg,
        EnvSpec::synthetic(4, 0.1),
        ArrivalSpec::RoundRobin,
        5,
    ));
    assert_eq!(ex.log.records.len(), 600);
    for (round, chunk) in ex.log.records.chunks(3).enumerate() {
        assert!(chunk.iter().all(|r| r.t == round as u64 + 1));
        assert_eq!(
            chunk.iter().map(|r| r.client).collect::<Vec<_>>(),
            vec![0, 1, 2]
        );
        assert!(!chunk[0].comm_batch && !chunk[1].comm_batch);
    }
    for r in ex.log.records.iter().filter(|r| r.comm_batch) {
        assert_eq!(r.comm_exchanges, 3);
    }
    assert_eq!(ex.comm.events.len() as u64, ex.log.comm_batches());
}

#[test]
fn sync_full_scale_default_runs_with_few_events() {
    let cfg = AlgoConfig {
        dim: 25,
        arms: 20,
        clients: 20,
        horizon: 2000,
        ..AlgoConfig::default()
    };
    let ex = run(&request(
        Algo::Sync,
        cfg,
        EnvSpec::synthetic(25, 0.01),
        ArrivalSpec::RoundRobin,
        1,
    ));
    assert_eq!(ex.log.records.len(), 40_000);
    assert!(
        ex.log.comm_exchanges() < 40_000 / 10,
        "{}",
        ex.log.comm_exchanges()
    );
}

#[test]
fn async_activity_model() {
    let ex = run(&request(
        Algo::Async,
        small_cfg(4, 400),
        EnvSpec::synthetic(4, 0.1),
        ArrivalSpec::ClickLeave,
        3,
    ));
    assert_eq!(ex.log.records.len(), 400);
    for (n, r) in ex.log.records.iter().enumerate() {
        assert_eq!(r.t, n as u64 + 1);
        assert_eq!(r.client, n / 100);
    }
}

#[test]
fn regret_accounting_matches_oracle() {
    let req = request(
        Algo::Async,
        small_cfg(3, 500),
        EnvSpec::synthetic(4, 0.1),
        ArrivalSpec::Random,
        8,
    );
    let ex = run(&req);
    let mut env = LinearEnv::build(&req.env, req.seed).unwrap();
    let theta = env.theta().to_vec();
    let mut total = 0.0;
    for r in &ex.log.records {
        let ctx = env.gen_contexts(r.client, 5).unwrap();
        let (_, best) = best_arm(&theta, &ctx).unwrap();
        let chosen: f64 = theta.iter().zip(&ctx[r.arm]).map(|(a, b)| a * b).sum();
        assert_eq!(r.inst_regret, best - chosen);
        assert!(r.inst_regret >= 0.0 && r.inst_regret <= 2.0);
        total += best - chosen;
    }
    assert_eq!(total, ex.log.final_regret());
}

#[test]
fn single_arm_has_zero_regret() {
    for algo in [Algo::Async, Algo::Baseline, Algo::Sync] {
        let cfg = AlgoConfig {
            arms: 1,
            ..small_cfg(if algo == Algo::Baseline { 1 } else { 2 }, 200)
        };
        let ex = run(&request(
            algo,
            cfg,
            EnvSpec::synthetic(4, 0.1),
            ArrivalSpec::RoundRobin,
            1,
        ));
        assert!(ex
            .log
            .records
            .iter()
            .all(|r| r.inst_regret == 0.0 && r.arm == 0));
    }
}

#[test]
fn baseline_regret_is_sublinear_in_low_dimension() {
    let slopes: Vec<f64> = (1..=5)
        .map(|seed| {
            let cfg = AlgoConfig {
                dim: 2,
                arms: 5,
                clients: 1,
                horizon: 5000,
                ..AlgoConfig::default()
            };
            let ex = run(&request(
                Algo::Baseline,
                cfg,
                EnvSpec::synthetic(2, 0.1),
                ArrivalSpec::RoundRobin,
                seed,
            ));
            loglog_slope(&cumulative_regret(&ex.log)).unwrap_or(0.0)
        })
        .collect();
    assert!(median(&slopes) < 0.75, "{slopes:?}");
}

#[test]
fn baseline_requires_single_client() {
    let mut env = LinearEnv::build(&EnvSpec::synthetic(4, 0.1), 1).unwrap();
    let err = fedsuplinucb::orchestrator::run_baseline_suplinucb(
        &small_cfg(2, 10),
        &mut env,
        &RunOptions::default(),
    );
    assert!(matches!(err, Err(Error::InvalidConfig { ref field, .. }) if field == "M"));
}

fn hetero_env(levels: SigmaSchedule) -> EnvSpec {
    EnvSpec {
        noise: NoiseModel::BoundedHetero {
            bound: 1.0,
            schedule: levels,
        },
        ..EnvSpec::synthetic(4, 0.0)
    }
}

#[test]
fn variance_weights_follow_clipping_rule() {
    let cfg = AlgoConfig {
        noise_bound: 1.0,
        ..small_cfg(2, 300)
    };
    let params = SigmaBarParams::from_config(&cfg);
    let ex = run(&request(
        Algo::Variance,
        cfg.clone(),
        hetero_env(SigmaSchedule::Constant { sigma: 1.0 }),
        ArrivalSpec::RoundRobin,
        1,
    ));
    for r in &ex.log.records {
        let bar = 1f64.max(params.rho).max(params.gamma * r.width_norm.sqrt());
        assert_eq!(r.weight, 1.0 / (bar * bar));
        assert_eq!(r.sigma_t, Some(1.0));
    }
    let ex = run(&request(
        Algo::Variance,
        cfg,
        hetero_env(SigmaSchedule::Constant { sigma: 0.0 }),
        ArrivalSpec::RoundRobin,
        1,
    ));
    for r in &ex.log.records {
        let bar = params.rho.max(params.gamma * r.width_norm.sqrt());
        assert_eq!(r.weight, 1.0 / (bar * bar));
    }
}

#[test]
fn variance_run_needs_sigma_channel() {
    let cfg = AlgoConfig {
        variant: Variant::VarianceAdaptive,
        ..small_cfg(2, 10)
    };
    let mut env = LinearEnv::build(&EnvSpec::synthetic(4, 0.1), 1).unwrap();
    let pattern = ArrivalPattern {
        spec: ArrivalSpec::RoundRobin,
        schedule: (0..10).map(|t| t % 2).collect(),
    };
    assert!(matches!(
        run_variance_adaptive(&cfg, &mut env, &pattern, &RunOptions::default()),
        Err(Error::Environment(_))
    ));
}

fn adversarial(strategy: AdversaryStrategy, budget: f64) -> EnvSpec {
    EnvSpec {
        adversary: Some(AdversarySpec { strategy, budget }),
        ..EnvSpec::synthetic(4, 0.1)
    }
}

#[test]
fn corruption_budget_is_conserved() {
    for strategy in [
        AdversaryStrategy::SignFlipPrefix,
        AdversaryStrategy::TargetedBestArm { magnitude: 0.5 },
    ] {
        let cfg = AlgoConfig {
            corruption_budget: 25.5,
            ..small_cfg(3, 600)
        };
        let ex = run(&request(
            Algo::Corruption,
            cfg,
            adversarial(strategy, 25.5),
            ArrivalSpec::RoundRobin,
            3,
        ));
        let logged: f64 = ex.log.records.iter().map(|r| r.corruption.abs()).sum();
        assert_eq!(logged, ex.adversary_spent);
        assert!(logged <= 25.5);
        assert!(logged > 0.0);
    }
}

#[test]
fn sign_flip_touches_only_the_prefix() {
    let cfg = AlgoConfig {
        corruption_budget: 40.0,
        ..small_cfg(2, 400)
    };
    let ex = run(&request(
        Algo::Corruption,
        cfg,
        adversarial(AdversaryStrategy::SignFlipPrefix, 40.0),
        ArrivalSpec::RoundRobin,
        1,
    ));
    for (n, r) in ex.log.records.iter().enumerate() {
        if n >= 40 {
            assert_eq!(r.corruption, 0.0);
        }
    }
    let weights_below_one = ex.log.records.iter().any(|r| r.weight < 1.0);
    assert!(weights_below_one);
}

#[test]
fn custom_adversary_over_budget_is_rejected() {
    let env = adversarial(
        AdversaryStrategy::Custom {
            corruptions: vec![3.0, -3.0],
        },
        5.0,
    );
    let req = request(
        Algo::Async,
        small_cfg(1, 10),
        env,
        ArrivalSpec::RoundRobin,
        1,
    );
    assert!(matches!(
        execute(&req, &RunOptions::default()),
        Err(Error::BudgetExceeded { .. })
    ));
}

#[test]
fn robust_with_zero_budget_equals_standard() {
    let a = run(&request(
        Algo::Corruption,
        small_cfg(3, 500),
        EnvSpec::synthetic(4, 0.1),
        ArrivalSpec::Random,
        6,
    ));
    let b = run(&request(
        Algo::Async,
        small_cfg(3, 500),
        EnvSpec::synthetic(4, 0.1),
        ArrivalSpec::Random,
        6,
    ));
    assert_eq!(a.log.records, b.log.records);
}

#[test]
fn uploads_replay_to_server_state() {
    for algo in [Algo::Async, Algo::Sync] {
        let req = request(
            algo,
            small_cfg(3, 400),
            EnvSpec::synthetic(4, 0.1),
            ArrivalSpec::Random,
            9,
        );
        let ex = run_with(
            &req,
            RunOptions {
                capture_uploads: true,
                ..RunOptions::default()
            },
        );
        let uploads = ex.uploads.clone().unwrap();
        assert!(!uploads.is_empty());
        let layers = ex.server.layers();
        let replayed = ServerState::replay(layers, 4, 1.0, uploads).unwrap();
        for s in 0..layers {
            assert_eq!(replayed.layer(s).gram(), ex.server.layer(s).gram());
            assert_eq!(replayed.layer(s).moment(), ex.server.layer(s).moment());
            assert!((replayed.layer(s).log_det() - ex.server.layer(s).log_det()).abs() < 1e-9);
        }
    }
}

#[test]
fn sync_communication_grows_slowly_with_horizon() {
    let batches = |tc: usize| {
        let cfg = small_cfg(3, tc);
        run(&request(
            Algo::Sync,
            cfg,
            EnvSpec::synthetic(4, 0.1),
            ArrivalSpec::RoundRobin,
            2,
        ))
        .log
        .comm_batches()
    };
    let (a, b) = (batches(1000), batches(2000));
    assert!(b < 2 * a.max(1), "{a} -> {b}");
}

#[test]
fn async_communication_rate_falls_with_horizon() {
    let rates: Vec<f64> = [1000usize, 2000, 4000, 8000]
        .iter()
        .map(|&t| {
            let ex = run(&request(
                Algo::Async,
                small_cfg(3, t),
                EnvSpec::synthetic(4, 0.1),
                ArrivalSpec::RoundRobin,
                1,
            ));
            ex.log.comm_exchanges() as f64 / t as f64
        })
        .collect();
    assert!(rates.windows(2).all(|w| w[1] <= w[0]), "{rates:?}");
}

#[test]
fn arrival_pattern_must_cover_horizon() {
    let mut env = LinearEnv::build(&EnvSpec::synthetic(4, 0.1), 1).unwrap();
    let pattern = make_arrivals(&ArrivalSpec::RoundRobin, 2, 5, &mut rand::rng()).unwrap();
    let err = fedsuplinucb::orchestrator::run_async(
        &small_cfg(2, 6),
        &mut env,
        &pattern,
        &RunOptions::default(),
    );
    assert!(err.is_err());
}

#[test]
fn mismatched_env_dimension_is_rejected() {
    let req = request(
        Algo::Async,
        small_cfg(2, 10),
        EnvSpec::synthetic(3, 0.1),
        ArrivalSpec::RoundRobin,
        1,
    );
    assert!(matches!(
        execute(&req, &RunOptions::default()),
        Err(Error::DimensionMismatch { .. })
    ));
}

#[test]
fn file_backed_run_reports_normalized_reward() {
    use std::io::Write;
    let mut f = tempfile::NamedTempFile::new().unwrap();
    writeln!(f, "round,arm,x_1,x_2,reward").unwrap();
    for t in 0..60 {
        writeln!(f, "{t},0,1,0,1").unwrap();
        writeln!(f, "{t},1,0,1,0").unwrap();
    }
    f.flush().unwrap();
    let env = EnvSpec {
        contexts: fedsuplinucb::env::ContextSourceSpec::FileStream {
            path: f.path().to_path_buf(),
        },
        file_rewards: true,
        ..EnvSpec::synthetic(2, 0.0)
    };
    let cfg = AlgoConfig {
        dim: 2,
        arms: 2,
        clients: 2,
        horizon: 60,
        ..AlgoConfig::default()
    };
    let ex = run(&request(
        Algo::Async,
        cfg.clone(),
        env.clone(),
        ArrivalSpec::RoundRobin,
        1,
    ));
    let norm = ex.log.per_client_normalized_reward(2);
    assert!(norm.iter().all(|v| *v >= 0.0 && *v <= 2.0));
    assert!(ex.log.records.iter().all(|r| r.inst_regret == 1.0 - r.mean));

    let too_long = AlgoConfig { horizon: 61, ..cfg };
    let err = execute(
        &request(Algo::Async, too_long, env, ArrivalSpec::RoundRobin, 1),
        &RunOptions::default(),
    );
    assert!(matches!(err, Err(Error::Environment(_))));
}
