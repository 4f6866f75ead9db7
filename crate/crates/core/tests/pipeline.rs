use tinymarl_core::agents::{build_agents, run_episodes, AgentSettings, Algorithm};
use tinymarl_core::env::{theoretical_baseline, EnvConfig, PricingEnv, Warmup};
use tinymarl_core::game::{
    all_followers_respond, solve_equilibrium_with, verify_equilibrium, GameInstance, SolverConfig, VerifyConfig,
};
use tinymarl_core::par::Execution;

fn market() -> GameInstance {
    GameInstance::from_log_qualities(
        &[(12.0, 3.0, vec![0.3, 0.5]), (15.0, 4.0, vec![0.6, 0.2]), (18.0, 2.5, vec![0.4, 0.4])],
        &[(1.5, 30.0, 20.0), (2.5, 25.0, 25.0)],
    )
    .unwrap()
}

#[test]
fn solver_strategies_agree_and_verify() {
    let g = market();
    let seq = solve_equilibrium_with(&g, &SolverConfig { execution: Execution::Sequential, ..Default::default() }).unwrap();
    let par = solve_equilibrium_with(&g, &SolverConfig { execution: Execution::Parallel, ..Default::default() }).unwrap();
    assert_eq!(seq, par);
    assert!(seq.consistent);
    assert_eq!(seq.demands, all_followers_respond(&g, &seq.prices));
    let report = verify_equilibrium(&g, &seq, &VerifyConfig { num_probes: 300, ..Default::default() });
    assert!(report.is_clean(), "{report:?}");
}

#[test]
fn tiny_madrl_prunes_and_keeps_training() {
    let g = market();
    let mut env = PricingEnv::new(g.clone(), EnvConfig { history_length: 2, warmup: Warmup::UniformRandom, ..Default::default() })
        .unwrap();
    let mut agents = build_agents(Algorithm::TinyMadrl, &env, &AgentSettings::default(), 5).unwrap();
    // one update every two episodes; the default schedule ends at update 60
    let stats = run_episodes(&mut env, &mut agents, 130, 5).unwrap();
    assert_eq!(stats.len(), 130);
    assert!(stats.windows(2).all(|w| w[1].sparsity >= w[0].sparsity));
    assert!(stats.iter().all(|s| s.average.is_finite()));
    assert_eq!(stats[0].sparsity, Some(0.0));
    let last = stats.last().unwrap().sparsity.unwrap();
    assert!((0.45..=0.55).contains(&last), "final sparsity {last}");
    let baseline = theoretical_baseline(&g).unwrap();
    assert!(baseline.consistent && baseline.value > 0.0);
}

#[test]
fn every_algorithm_replays_identically() {
    for algo in Algorithm::ALL {
        let run = || {
            let mut env = PricingEnv::new(market(), EnvConfig::default()).unwrap();
            let mut agents = build_agents(algo, &env, &AgentSettings::default(), 9).unwrap();
            run_episodes(&mut env, &mut agents, 8, 9).unwrap()
        };
        assert_eq!(run(), run(), "{algo}");
    }
}
