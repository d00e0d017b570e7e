use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::Path;
use std::time::Duration;

use ispo_core::bnb::{solve_ispo_exact, BnbParams, IspoSolution, SolveStatus};
use ispo_core::bounds::BoundTable;
use ispo_core::field::{
    compute_rro, read_differences, realize_sales, wilcoxon_signed_rank, FieldStudySpec,
    PricingPolicy, Realization,
};
use ispo_core::lp::export_lp;
use ispo_core::model::{desk_config, generate_instance, tiny_instance, GeneratorConfig};
use ispo_core::pingpong::{best_bound_map, solve_pingpong, PingPongParams};
use ispo_core::sop::{
    modified_costs, read_assignment_csv, sfa_heuristic, solve_sop_exact, write_assignment_csv,
    SfaParams,
};
use ispo_core::trajectory::instance_trajectories;
use ispo_core::{
    inventory_from_assignment, ispo_objective, solve_pop_exact, Error, Instance, LotAssignment,
    PriceTrajectory, Result, ScenarioTrajectoryMap,
};

use crate::{Command, Preset, SimulatePolicy, SolveMethod, StatsTest};

pub fn run(command: Command) -> Result<u8> {
    match command {
        Command::Validate { file } => validate(&file),
        Command::Generate {
            config,
            preset,
            seed,
            output,
        } => generate(config.as_deref(), preset, seed, output.as_deref()),
        Command::Solve { method } => solve(method),
        Command::Bound {
            file,
            scenario,
            trajectory,
        } => bound(&file, scenario.zip(trajectory)),
        Command::ExportLp {
            file,
            output,
            tight,
        } => {
            let inst = load(&file)?;
            let counts = export_lp(&inst, &output, tight)?;
            println!("wrote {}", output.display());
            print!("{counts}");
            Ok(0)
        }
        Command::Simulate {
            policy:
                SimulatePolicy::RhPop {
                    file,
                    seed,
                    assignment,
                    smoothing,
                    output,
                },
        } => simulate_rhpop(&file, seed, assignment.as_deref(), smoothing, output.as_deref()),
        Command::Fieldstudy {
            config,
            seed,
            output,
        } => fieldstudy(&config, seed, output.as_deref()),
        Command::Stats {
            test: StatsTest::Wilcoxon { file },
        } => {
            let diffs = read_differences(BufReader::new(File::open(&file)?))?;
            let res = wilcoxon_signed_rank(&diffs)?;
            println!("n {}", res.n);
            println!("w_plus {}", res.w_plus);
            println!("p_value {:.6}", res.p_value);
            Ok(0)
        }
    }
}

/// Reports a bad argument value; exit code as for invalid input.
fn bad_arg(msg: impl std::fmt::Display) -> u8 {
    eprintln!("error: {msg}");
    2
}

fn load(path: &Path) -> Result<Instance> {
    Instance::from_json(&fs::read_to_string(path)?)
}

/// A buffered file, or stdout.
fn sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn read_assignment(path: &Path, inst: &Instance) -> Result<LotAssignment> {
    let a = read_assignment_csv(BufReader::new(File::open(path)?), inst)?;
    inst.check_assignment(&a)?;
    Ok(a)
}

fn write_assignment(path: Option<&Path>, inst: &Instance, a: &LotAssignment) -> Result<()> {
    if let Some(p) = path {
        write_assignment_csv(BufWriter::new(File::create(p)?), inst, a)?;
    }
    Ok(())
}

fn read_map(path: &Path, inst: &Instance) -> Result<ScenarioTrajectoryMap> {
    let entries = fs::read_to_string(path)?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::parse::<PriceTrajectory>)
        .collect::<Result<Vec<_>>>()?;
    let map = ScenarioTrajectoryMap::new(entries);
    map.check(inst)?;
    Ok(map)
}

fn validate(file: &Path) -> Result<u8> {
    let inst = load(file)?;
    println!(
        "ok: {} branches, {} sizes, {} lot-types, {} multiplicities, {} scenarios, {} periods, {} prices, {} trajectories",
        inst.n_branches(),
        inst.n_sizes(),
        inst.n_lot_types(),
        inst.multiplicities.len(),
        inst.n_scenarios(),
        inst.n_periods(),
        inst.prices.len(),
        instance_trajectories(&inst).len()
    );
    Ok(0)
}

fn generate(config: Option<&Path>, preset: Option<Preset>, seed: u64, output: Option<&Path>) -> Result<u8> {
    let inst = match (config, preset) {
        (Some(path), _) => {
            let cfg: GeneratorConfig = serde_json::from_str(&fs::read_to_string(path)?)?;
            generate_instance(&cfg, seed)
        }
        (None, Some(Preset::Tiny)) => tiny_instance(seed),
        (None, Some(Preset::Desk) | None) => generate_instance(&desk_config(), seed),
    };
    inst.validate()?;
    let mut out = sink(output)?;
    writeln!(out, "{}", inst.to_json())?;
    out.flush()?;
    Ok(0)
}

fn print_solution(inst: &Instance, sol: &IspoSolution) {
    println!("status {}", sol.status);
    println!("objective {:.4}", sol.objective);
    println!("dual_bound {:.4}", sol.dual_bound);
    println!("gap {:.4}%", 100.0 * sol.relative_gap());
    println!("lot_types_used {}", sol.assignment.used_lot_types().len());
    print_map(inst, &sol.map);
}

fn print_map(inst: &Instance, map: &ScenarioTrajectoryMap) {
    for (e, t) in map.entries().iter().enumerate() {
        println!("scenario {e} p={:.4} {t}", inst.scenarios[e].probability);
    }
}

fn solve(method: SolveMethod) -> Result<u8> {
    match method {
        SolveMethod::Exact {
            file,
            time_limit,
            log,
            output,
        } => {
            let inst = load(&file)?;
            let time_limit = match time_limit {
                Some(s) if !(s.is_finite() && s >= 0.0) => {
                    return Ok(bad_arg(format!("time limit must be a nonnegative number, got {s}")))
                }
                Some(s) => Some(Duration::from_secs_f64(s)),
                None => None,
            };
            let params = BnbParams {
                time_limit,
                incumbent: None,
                record_log: log.is_some(),
                parallel: log.is_none(),
            };
            let outcome = solve_ispo_exact(&inst, &params)?;
            print_solution(&inst, &outcome.solution);
            let s = &outcome.stats;
            println!(
                "nodes {} leaves {} pruned {} improvements {}",
                s.nodes, s.leaves, s.pruned, s.improvements
            );
            if let Some(path) = log {
                let mut w = BufWriter::new(File::create(path)?);
                for line in &outcome.log {
                    writeln!(w, "{line}")?;
                }
                w.flush()?;
            }
            write_assignment(output.as_deref(), &inst, &outcome.solution.assignment)?;
            Ok(if outcome.solution.status == SolveStatus::GapBounded { 4 } else { 0 })
        }
        SolveMethod::Pingpong {
            file,
            max_iters,
            log,
            output,
        } => {
            let inst = load(&file)?;
            let params = PingPongParams {
                max_iters,
                ..PingPongParams::default()
            };
            let outcome = solve_pingpong(&inst, &params)?;
            print_solution(&inst, &outcome.solution);
            println!("iterations {}", outcome.iterations());
            if let Some(path) = log {
                outcome.write_trace_csv(BufWriter::new(File::create(path)?))?;
            }
            write_assignment(output.as_deref(), &inst, &outcome.solution.assignment)?;
            Ok(0)
        }
        SolveMethod::Sop {
            file,
            map,
            heuristic,
            output,
        } => {
            let inst = load(&file)?;
            let map = match map {
                Some(path) => read_map(&path, &inst)?,
                None => {
                    let trajectories = instance_trajectories(&inst);
                    let table = BoundTable::compute(&inst, &trajectories)?;
                    best_bound_map(&table, &trajectories)?
                }
            };
            let coeffs = modified_costs(&inst, &map)?;
            let sol = if heuristic {
                sfa_heuristic(&coeffs, &inst, &SfaParams::default())?
            } else {
                solve_sop_exact(&coeffs, &inst)?
            };
            println!("value {:.4}", sol.value);
            println!("objective {:.4}", ispo_objective(&sol.assignment, &map, &inst)?);
            println!("subsets_evaluated {}", sol.subsets_evaluated);
            println!("lot_types_used {}", sol.assignment.used_lot_types().len());
            print_map(&inst, &map);
            write_assignment(output.as_deref(), &inst, &sol.assignment)?;
            Ok(0)
        }
        SolveMethod::Pop { file, assignment } => {
            let inst = load(&file)?;
            let a = read_assignment(&assignment, &inst)?;
            let supply = inventory_from_assignment(&a, &inst).to_supply();
            let pop = solve_pop_exact(&supply, &inst)?;
            for (e, sp) in pop.per_scenario.iter().enumerate() {
                println!(
                    "scenario {e} p={:.4} {} value {:.4}",
                    inst.scenarios[e].probability, sp.trajectory, sp.value
                );
            }
            let map = ScenarioTrajectoryMap::new(pop.per_scenario.into_iter().map(|s| s.trajectory).collect());
            println!("expected {:.4}", pop.expected);
            println!("objective {:.4}", ispo_objective(&a, &map, &inst)?);
            Ok(0)
        }
    }
}

fn bound(file: &Path, single: Option<(usize, usize)>) -> Result<u8> {
    let inst = load(file)?;
    let trajectories = instance_trajectories(&inst);
    let table = BoundTable::compute(&inst, &trajectories)?;
    if let Some((e, t)) = single {
        if e >= inst.n_scenarios() || t >= trajectories.len() {
            return Ok(bad_arg(format!(
                "({e}, {t}) outside {} scenarios x {} trajectories",
                inst.n_scenarios(),
                trajectories.len()
            )));
        }
        let entry = table.get(e, t);
        println!(
            "scenario {e} trajectory {t} {} bound {:.4} provenance {}",
            trajectories[t], entry.value, entry.provenance
        );
        return Ok(0);
    }
    let mut w = csv::Writer::from_writer(io::stdout().lock());
    w.write_record(["scenario", "trajectory", "prices", "bound", "provenance"])?;
    for e in 0..inst.n_scenarios() {
        for (t, traj) in trajectories.iter().enumerate() {
            let entry = table.get(e, t);
            w.write_record([
                e.to_string(),
                t.to_string(),
                traj.to_string(),
                format!("{:.4}", entry.value),
                entry.provenance.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(0)
}

fn write_periods<W: Write>(out: W, inst: &Instance, real: &Realization) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["period", "price_index", "price", "stock", "sales", "alpha", "markdown"])?;
    let flags = real.markdown_flags();
    for k in 0..real.n_periods() {
        let mut stock = 0;
        let mut sales = 0;
        for b in 0..real.n_branches {
            for s in 0..real.n_sizes {
                stock += real.stock_at(k, b, s);
                sales += real.sales_at(k, b, s);
            }
        }
        let p = real.prices[k];
        w.write_record([
            k.to_string(),
            p.to_string(),
            format!("{:.4}", inst.prices[p]),
            stock.to_string(),
            sales.to_string(),
            real.alpha.get(k).map(|a| format!("{a:.4}")).unwrap_or_default(),
            if flags[k] { "yes" } else { "no" }.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn simulate_rhpop(
    file: &Path,
    seed: u64,
    assignment: Option<&Path>,
    smoothing: f64,
    output: Option<&Path>,
) -> Result<u8> {
    if !(0.0..=1.0).contains(&smoothing) {
        return Ok(bad_arg(format!("smoothing must lie in [0, 1], got {smoothing}")));
    }
    let inst = load(file)?;
    let a = match assignment {
        Some(path) => read_assignment(path, &inst)?,
        None => solve_pingpong(&inst, &PingPongParams::default())?.solution.assignment,
    };
    let supply = inventory_from_assignment(&a, &inst);
    let real = realize_sales(&inst, &supply, &PricingPolicy::RhPop { smoothing }, seed)?;
    let all: Vec<usize> = (0..inst.n_branches()).collect();
    let rro = match compute_rro(&real, &a, &inst, &all) {
        Ok(v) => format!("{v:.4}"),
        Err(Error::ZeroDenominator) => "undefined".into(),
        Err(e) => return Err(e),
    };
    let mut out = sink(output)?;
    write_periods(&mut out, &inst, &real)?;
    writeln!(out, "# scenario {}", real.scenario)?;
    writeln!(out, "# supply {}", supply.total())?;
    writeln!(out, "# sold {}", real.total_sales())?;
    writeln!(out, "# leftover {}", real.terminal_stock.iter().sum::<u64>())?;
    writeln!(out, "# rro {rro}")?;
    out.flush()?;
    Ok(0)
}

fn fieldstudy(config: &Path, seed: u64, output: Option<&Path>) -> Result<u8> {
    let spec: FieldStudySpec = serde_json::from_str(&fs::read_to_string(config)?)?;
    let report = spec.run(seed)?;
    let mut out = sink(output)?;
    report.write_csv(&mut out)?;
    out.flush()?;
    if output.is_some() {
        println!("pairs {}", report.outcomes.len());
        println!("mean_rro_test {:.4}", report.mean_rro_test());
        println!("mean_rro_control {:.4}", report.mean_rro_control());
        match &report.wilcoxon {
            Ok(w) => {
                println!("w_plus {}", w.w_plus);
                println!("p_value {:.6}", w.p_value);
            }
            Err(e) => println!("wilcoxon {e}"),
        }
    }
    Ok(0)
}
