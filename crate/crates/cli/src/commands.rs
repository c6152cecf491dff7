use std::fs;
use std::path::Path;

use mwum_net::capacity::{critical_resources, effective_load, Admissibility, CapacityError, VirtualResource};
use mwum_net::compare::{fluid_reference, summarize, sup_distance, CompareRow};
use mwum_net::fluid::{h_max, integrate_with, FluidParams, FluidState, FluidTrajectory};
use mwum_net::lifting::{hitting_time, is_invariant, lift_distance, lifting_map};
use mwum_net::sim::{simulate_policy, verify_conservation, Mwum, SimConfig, Trajectory};
use mwum_net::workload::{balance_factor, beta_hat, cost, effective_cost, lyapunov, CostReport};
use mwum_net::{build_network, Network, PolicyParams, TopologyConfig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::output::{ensure_dir, parse_reals, parse_seeds, print_json, state_vector, write_file, write_manifest, Table};
use crate::{
    BalanceArgs, CapacityArgs, CliError, Command, Common, CompareArgs, FluidArgs, InvariantArgs, LiftArgs, PolicyChoice,
    SimulateArgs,
};

fn numeric(e: impl std::fmt::Display) -> CliError {
    CliError::Numeric(e.to_string())
}

pub fn dispatch(cmd: &Command) -> Result<(), CliError> {
    match cmd {
        Command::Capacity(a) => capacity(cmd, a),
        Command::Simulate(a) => simulate(cmd, a),
        Command::Fluid(a) => fluid(cmd, a),
        Command::Compare(a) => compare(cmd, a),
        Command::Invariant(a) => invariant(cmd, a),
        Command::Balance(a) => balance(cmd, a),
        Command::Lift(a) => lift(cmd, a),
    }
}

/// Parsed network plus the raw topology text for the manifest.
fn load(common: &Common) -> Result<(Network, String), CliError> {
    let text = fs::read_to_string(&common.topology)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", common.topology.display())))?;
    let mut cfg = TopologyConfig::from_json(&text).map_err(|e| CliError::Config(e.to_string()))?;
    if !(common.rho_scale.is_finite() && common.rho_scale > 0.0) {
        return Err(CliError::Config(format!("--rho-scale must be positive, got {}", common.rho_scale)));
    }
    cfg.scale_load(common.rho_scale);
    if let Some(c) = common.c_max {
        cfg.c_max = c;
    }
    let net = build_network(&cfg).map_err(|e| CliError::Config(e.to_string()))?;
    Ok((net, text))
}

fn policy(net: &Network, alpha: f64) -> Result<PolicyParams, CliError> {
    PolicyParams::for_network(net, alpha).map_err(|e| CliError::Config(e.to_string()))
}

fn step(net: &Network, step: Option<f64>) -> Result<f64, CliError> {
    let hm = h_max(net);
    match step {
        None => Ok(hm),
        Some(h) if h > 0.0 && h <= hm => Ok(h),
        Some(h) => Err(CliError::Config(format!("--step {h} outside (0, {hm}]"))),
    }
}

fn stride(h: f64, every: f64) -> Result<usize, CliError> {
    if !(every.is_finite() && every > 0.0) {
        return Err(CliError::Config("--record-every must be positive".into()));
    }
    Ok(((every / h).round() as usize).max(1))
}

fn positive(v: f64, flag: &str) -> Result<(), CliError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(CliError::Config(format!("--{flag} must be positive and finite, got {v}")))
    }
}

/// Critical resources; a network that is not critically loaded is a usage error.
fn resources(net: &Network) -> Result<Vec<VirtualResource>, CliError> {
    critical_resources(&net.rho(), net).map_err(|e| match e {
        CapacityError::NotCritical(l) => CliError::Config(format!("network is not critically loaded (Leff = {l})")),
        other => numeric(other),
    })
}

fn thread_pool() -> Result<rayon::ThreadPool, CliError> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("MWUM_NET_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| CliError::Config(format!("MWUM_NET_THREADS must be a positive integer, got {v:?}")))?;
        b = b.num_threads(n);
    }
    b.build().map_err(|e| CliError::Config(e.to_string()))
}

fn flow_labels(net: &Network, prefix: &str) -> Vec<String> {
    net.flows().iter().enumerate().map(|(i, f)| format!("{prefix}[{i}:{}/{}]", f.source_link, f.dest)).collect()
}

fn queue_labels(net: &Network, prefix: &str) -> Vec<String> {
    net.queues().iter().map(|q| format!("{prefix}[{}]", q.label())).collect()
}

fn fmt(v: &[f64]) -> impl Iterator<Item = String> + '_ {
    v.iter().map(|x| x.to_string())
}

fn capacity(cmd: &Command, a: &CapacityArgs) -> Result<(), CliError> {
    let (net, text) = load(&a.common)?;
    let (leff, class) = effective_load(&net.rho(), &net).map_err(numeric)?;
    let mut report = json!({ "Leff": leff, "class": class.as_str() });
    if class == Admissibility::Critical {
        let cr = critical_resources(&net.rho(), &net).map_err(numeric)?;
        let gamma = balance_factor(&net, &cr).map_err(numeric)?;
        report["CRstar"] = json!(cr.iter().map(|r| r.zeta.clone()).collect::<Vec<_>>());
        report["gamma"] = json!(gamma);
    }
    print_json(&report)?;
    if let Some(out) = &a.out {
        ensure_dir(out)?;
        write_file(&out.join("capacity.json"), report.to_string() + "\n")?;
        write_manifest(out, cmd, &text, &[], &["capacity.json".into()])?;
    }
    Ok(())
}

fn counts(arg: Option<&String>, flag: &str, len: usize) -> Result<Vec<u64>, CliError> {
    let v = state_vector(arg, flag, len, 0.0)?;
    if v.iter().any(|x| x.fract() != 0.0) {
        return Err(CliError::Config(format!("--{flag}: counts must be integers")));
    }
    Ok(v.into_iter().map(|x| x as u64).collect())
}

fn write_trajectory(dir: &Path, name: &str, traj: &Trajectory, net: &Network) -> Result<String, CliError> {
    let mut header: Vec<String> = vec!["t".into(), "kind".into(), "entity".into()];
    header.extend(flow_labels(net, "N"));
    header.extend(queue_labels(net, "Q"));
    let mut table = Table::new(dir, name, &header)?;
    for snap in &traj.snapshots {
        let mut row = vec![snap.tau.to_string(), "snapshot".into(), String::new()];
        row.extend(snap.state.n.iter().chain(&snap.state.q).map(u64::to_string));
        table.row(row)?;
    }
    table.finish()
}

fn simulate(cmd: &Command, a: &SimulateArgs) -> Result<(), CliError> {
    let (net, text) = load(&a.common)?;
    let params = policy(&net, a.alpha)?;
    if a.horizon == 0 {
        return Err(CliError::Config("--horizon must be at least one slot".into()));
    }
    let mut seeds = match &a.seeds {
        Some(s) => parse_seeds(s)?,
        None => Vec::new(),
    };
    if seeds.is_empty() {
        if !a.allow_unseeded {
            return Err(CliError::Config("a seed is required (pass --seeds or --allow-unseeded)".into()));
        }
        seeds.push(rand_seed());
    }
    let n0 = counts(a.n0.as_ref(), "n0", net.num_flows())?;
    let q0 = counts(a.q0.as_ref(), "q0", net.num_queues())?;
    ensure_dir(&a.out)?;

    let pool = thread_pool()?;
    let runs: Vec<Result<Trajectory, CliError>> = pool.install(|| {
        seeds
            .par_iter()
            .map(|&seed| {
                let cfg = SimConfig::new(a.horizon, seed).with_initial(n0.clone(), q0.clone());
                simulate_policy(&net, &Mwum(params), &cfg).map_err(numeric)
            })
            .collect()
    });
    let mut files = Vec::new();
    for (seed, traj) in seeds.iter().zip(runs) {
        let traj = traj?;
        files.push(write_trajectory(&a.out, &format!("sim_seed{seed}.csv"), &traj, &net)?);
        if a.events {
            let name = format!("events_seed{seed}.jsonl");
            let mut buf = String::new();
            for e in &traj.events {
                buf.push_str(&serde_json::to_string(e).map_err(numeric)?);
                buf.push('\n');
            }
            write_file(&a.out.join(&name), buf)?;
            files.push(name);
        }
        let rep = verify_conservation(&traj, &net);
        let last = traj.final_state();
        print_json(&json!({
            "seed": seed,
            "events": traj.events.len(),
            "conservation_ok": rep.ok,
            "idle_total": rep.idle_total,
            "final_n": last.n,
            "final_q": last.q,
            "departures": last.d,
        }))?;
        if !rep.ok {
            return Err(CliError::Numeric(format!(
                "seed {seed}: conservation violated: {}",
                rep.first_violation.unwrap_or_default()
            )));
        }
    }
    write_manifest(&a.out, cmd, &text, &seeds, &files)
}

fn rand_seed() -> u64 {
    use std::hash::{BuildHasher, RandomState};
    RandomState::new().hash_one(std::time::SystemTime::now())
}

fn fluid_params(net: &Network, alpha: f64, which: PolicyChoice) -> Result<FluidParams, CliError> {
    let p = policy(net, alpha)?;
    Ok(match which {
        PolicyChoice::Mwum => FluidParams::mwum(&p),
        PolicyChoice::RoundRobin => FluidParams::round_robin(&p),
    })
}

fn run_fluid(
    net: &Network,
    params: &FluidParams,
    n0: Vec<f64>,
    q0: Vec<f64>,
    horizon: f64,
    h: f64,
    stride: usize,
) -> Result<FluidTrajectory, CliError> {
    let init = FluidState::initial(n0, q0, net).map_err(|e| CliError::Config(e.to_string()))?;
    integrate_with(&init, horizon, h, stride, net, params).map_err(numeric)
}

fn fluid(cmd: &Command, a: &FluidArgs) -> Result<(), CliError> {
    let (net, text) = load(&a.common)?;
    positive(a.horizon, "horizon")?;
    let params = fluid_params(&net, a.alpha, a.policy)?;
    let h = step(&net, a.step)?;
    let n0 = state_vector(a.n0.as_ref(), "n0", net.num_flows(), 1.0)?;
    let q0 = state_vector(a.q0.as_ref(), "q0", net.num_queues(), 1.0)?;
    let traj = run_fluid(&net, &params, n0, q0, a.horizon, h, stride(h, a.record_every)?)?;
    ensure_dir(&a.out)?;

    let mut header = vec!["t".to_string()];
    header.extend(flow_labels(&net, "n"));
    header.extend(queue_labels(&net, "q"));
    header.extend(queue_labels(&net, "z"));
    header.extend(["L_alpha".into(), "cost".into()]);
    let mut table = Table::new(&a.out, "fluid.csv", &header)?;
    for s in traj.samples() {
        let mut row = vec![s.t.to_string()];
        row.extend(fmt(&s.n).chain(fmt(&s.q)).chain(fmt(&s.z)));
        row.push(lyapunov(&s.n, &s.q, &net, a.alpha).0.to_string());
        row.push(cost(&s.n, &s.q, &net).to_string());
        table.row(row)?;
    }
    let files = vec![table.finish()?];
    let last = traj.last();
    print_json(&json!({
        "h": traj.h,
        "samples": traj.samples().len(),
        "final_n": last.n,
        "final_q": last.q,
        "max_residual": traj.residuals.max(),
        "clip_steps": traj.clip_steps,
        "max_clip": traj.max_clip,
    }))?;
    write_manifest(&a.out, cmd, &text, &[], &files)
}

fn compare(cmd: &Command, a: &CompareArgs) -> Result<(), CliError> {
    let (net, text) = load(&a.common)?;
    positive(a.horizon, "horizon")?;
    let params = policy(&net, a.alpha)?;
    let scales = parse_reals(&a.scales, "scales")?;
    if scales.len() < 2 || scales.iter().any(|&r| r <= 0.0) {
        return Err(CliError::Config("--scales needs at least two positive values".into()));
    }
    let seeds = match &a.seeds {
        Some(s) => parse_seeds(s)?,
        None => Vec::new(),
    };
    if seeds.is_empty() {
        return Err(CliError::Config("--seeds is required: there is nothing to compare the fluid model with".into()));
    }
    let h = step(&net, a.step)?;
    let n0 = state_vector(a.n0.as_ref(), "n0", net.num_flows(), 1.0)?;
    let q0 = state_vector(a.q0.as_ref(), "q0", net.num_queues(), 1.0)?;
    let reference = fluid_reference(&net, &params, &n0, &q0, a.horizon, h, stride(h, a.record_every)?).map_err(numeric)?;
    ensure_dir(&a.out)?;

    let jobs: Vec<(f64, u64)> = scales.iter().flat_map(|&r| seeds.iter().map(move |&s| (r, s))).collect();
    let pool = thread_pool()?;
    let rows: Vec<CompareRow> = pool.install(|| {
        jobs.par_iter()
            .map(|&(r, seed)| {
                sup_distance(&net, &params, &reference, r, seed).map(|distance| CompareRow { r, seed, distance })
            })
            .collect::<Result<Vec<_>, _>>()
    })
    .map_err(numeric)?;
    let summary = summarize(&rows);

    let mut runs = Table::new(&a.out, "compare_runs.csv", &["r".into(), "seed".into(), "distance".into()])?;
    let mut sorted = rows.clone();
    sorted.sort_by(|x, y| x.r.total_cmp(&y.r).then(x.seed.cmp(&y.seed)));
    for row in &sorted {
        runs.row([row.r.to_string(), row.seed.to_string(), row.distance.to_string()])?;
    }
    let header: Vec<String> = ["r", "runs", "mean", "max"].map(String::from).to_vec();
    let mut table = Table::new(&a.out, "compare.csv", &header)?;
    println!("{}", header.join(","));
    for s in &summary {
        let fields = [s.r.to_string(), s.runs.to_string(), s.mean.to_string(), s.max.to_string()];
        println!("{}", fields.join(","));
        table.row(fields)?;
    }
    let files = vec![runs.finish()?, table.finish()?];
    write_manifest(&a.out, cmd, &text, &seeds, &files)
}

#[derive(Deserialize, Serialize)]
struct StateSpec {
    n: Vec<f64>,
    q: Vec<f64>,
}

/// Every combination of `n_f ∈ {0, 0.5, 1}` and `q_e ∈ {0, 0.5, 1, 2}`.
fn default_grid(net: &Network) -> Vec<StateSpec> {
    let (nf, m) = (net.num_flows(), net.num_queues());
    let (nv, qv) = ([0.0, 0.5, 1.0], [0.0, 0.5, 1.0, 2.0]);
    let total = 3usize.pow(nf as u32) * 4usize.pow(m as u32);
    let digits = |mut k: usize, base: usize, len: usize| {
        let mut d = vec![0; len];
        for x in &mut d {
            *x = k % base;
            k /= base;
        }
        d
    };
    (0..total)
        .map(|k| StateSpec {
            n: digits(k % 3usize.pow(nf as u32), 3, nf).into_iter().map(|i| nv[i]).collect(),
            q: digits(k / 3usize.pow(nf as u32), 4, m).into_iter().map(|i| qv[i]).collect(),
        })
        .collect()
}

const MAX_GRID_STATES: usize = 100_000;

fn invariant(cmd: &Command, a: &InvariantArgs) -> Result<(), CliError> {
    let (net, text) = load(&a.common)?;
    policy(&net, a.alpha)?;
    let cr = resources(&net)?;
    let states = match &a.states {
        Some(p) => {
            let s = fs::read_to_string(p).map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
            let v: Vec<StateSpec> = serde_json::from_str(&s).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            for st in &v {
                if st.n.len() != net.num_flows() || st.q.len() != net.num_queues() {
                    return Err(CliError::Config("state has the wrong number of coordinates".into()));
                }
                if st.n.iter().chain(&st.q).any(|x| !(x.is_finite() && *x >= 0.0)) {
                    return Err(CliError::Config("state coordinates must be finite and nonnegative".into()));
                }
            }
            v
        }
        None => {
            if 3f64.powi(net.num_flows() as i32) * 4f64.powi(net.num_queues() as i32) > MAX_GRID_STATES as f64 {
                return Err(CliError::Config("default grid is too large for this network; pass --states".into()));
            }
            default_grid(&net)
        }
    };
    ensure_dir(&a.out)?;
    let mut header = flow_labels(&net, "n");
    header.extend(queue_labels(&net, "q"));
    header.extend(["is_invariant".into(), "lift_distance".into()]);
    let mut table = Table::new(&a.out, "invariant.csv", &header)?;
    let mut count = 0;
    for s in &states {
        let inv = is_invariant(&s.n, &s.q, &net, a.alpha, a.tol);
        let d = lift_distance(&s.n, &s.q, &net, a.alpha, &cr).map_err(numeric)?;
        count += inv as usize;
        let mut row: Vec<String> = fmt(&s.n).chain(fmt(&s.q)).collect();
        row.extend([inv.to_string(), d.to_string()]);
        table.row(row)?;
    }
    let files = vec![table.finish()?];
    print_json(&json!({ "states": states.len(), "invariant": count }))?;
    write_manifest(&a.out, cmd, &text, &[], &files)
}

fn balance(cmd: &Command, a: &BalanceArgs) -> Result<(), CliError> {
    let (net, text) = load(&a.common)?;
    positive(a.horizon, "horizon")?;
    if !(a.eps > 0.0) {
        return Err(CliError::Config("--eps must be positive".into()));
    }
    let cr = resources(&net)?;
    let h = step(&net, a.step)?;
    let k = stride(h, a.record_every)?;
    let n0 = state_vector(a.n0.as_ref(), "n0", net.num_flows(), 1.0)?;
    let q0 = state_vector(a.q0.as_ref(), "q0", net.num_queues(), 1.0)?;
    let mw = run_fluid(&net, &fluid_params(&net, a.alpha, PolicyChoice::Mwum)?, n0.clone(), q0.clone(), a.horizon, h, k)?;
    let rr = run_fluid(&net, &fluid_params(&net, a.alpha, PolicyChoice::RoundRobin)?, n0.clone(), q0.clone(), a.horizon, h, k)?;
    let gamma = balance_factor(&net, &cr).map_err(numeric)?;
    let beta = beta_hat(a.alpha, &net);
    let factor = (1.0 + beta) / gamma;
    ensure_dir(&a.out)?;

    let header: Vec<String> = ["t", "cost_mwum", "cost_round_robin", "bound"].map(String::from).to_vec();
    let mut table = Table::new(&a.out, "balance.csv", &header)?;
    let mut worst_margin = f64::INFINITY;
    for (s, r) in mw.samples().iter().zip(rr.samples()) {
        let (cm, cr_) = (cost(&s.n, &s.q, &net), cost(&r.n, &r.q, &net));
        worst_margin = worst_margin.min(factor * cr_ - cm);
        table.row([s.t.to_string(), cm.to_string(), cr_.to_string(), (factor * cr_).to_string()])?;
    }
    let files = vec![table.finish()?];
    let report = CostReport::new(&n0, &q0, &net, a.alpha, &cr).map_err(numeric)?;
    let hit = hitting_time(&mw, a.eps, &net, a.alpha, &cr);
    print_json(&json!({
        "gamma": gamma,
        "beta_hat": beta,
        "initial": report,
        "effective_cost_floor": effective_cost(&n0, &q0, &net, &cr).map_err(numeric)?,
        "balance_holds": worst_margin >= -1e-6,
        "worst_margin": worst_margin,
        "hitting_time": hit.time,
        "horizon": hit.horizon,
    }))?;
    write_manifest(&a.out, cmd, &text, &[], &files)
}

fn lift(cmd: &Command, a: &LiftArgs) -> Result<(), CliError> {
    let (net, text) = load(&a.common)?;
    policy(&net, a.alpha)?;
    let cr = resources(&net)?;
    let n = state_vector(a.n0.as_ref(), "n0", net.num_flows(), 0.0)?;
    let q = state_vector(a.q0.as_ref(), "q0", net.num_queues(), 0.0)?;
    let (ln, lq) = lifting_map(&n, &q, &net, a.alpha, &cr).map_err(numeric)?;
    let distance: f64 = n.iter().zip(&ln).chain(q.iter().zip(&lq)).map(|(x, y)| (x - y).abs()).sum();
    let report = json!({
        "n": n,
        "q": q,
        "lifted_n": ln,
        "lifted_q": lq,
        "distance": distance,
        "is_invariant": is_invariant(&n, &q, &net, a.alpha, 1e-9),
        "lifted": CostReport::new(&ln, &lq, &net, a.alpha, &cr).map_err(numeric)?,
    });
    print_json(&report)?;
    if let Some(out) = &a.out {
        ensure_dir(out)?;
        write_file(&out.join("lift.json"), report.to_string() + "\n")?;
        write_manifest(out, cmd, &text, &[], &["lift.json".into()])?;
    }
    Ok(())
}
