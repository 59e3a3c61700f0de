//! One function per subcommand: resolve the config, run the experiment,
//! write the report files.

use serde::Serialize;

use kinlab::diagnostics::{
    cascade_report, contraction_report, energy_report, ito_defect_with, lp_norm, regularity_report,
    C2Function, SpatialTest, Stat,
};
use kinlab::grid::{raw_sidecar, write_field_csv, write_field_raw};
use kinlab::kinetic::{
    chain_rule_residual, estimate_measures_with, kinetic_residual, vanishing_xi_mass,
    SpatialFactor, TestFunction,
};
use kinlab::noise::{member_seed, NoisePath};
use kinlab::solver::{all_step_times, solve_from, SolveFailure};
use kinlab::Error as LibError;

use crate::config::{ConfigError, PhiKind, Resolved, RunConfig};
use crate::report::{fmt_f64, ReportWriter};

/// Failure classes mapped to exit codes by main.
#[derive(Debug)]
pub enum CliFailure {
    /// Exit 2: schema violation or semantic validation failure.
    Config(ConfigError),
    /// Exit 3: the time stepper produced a non-finite state.
    BlowUp { step: usize },
    /// Exit 1: anything else.
    Other(String),
}

impl From<ConfigError> for CliFailure {
    fn from(e: ConfigError) -> Self {
        CliFailure::Config(e)
    }
}

impl From<std::io::Error> for CliFailure {
    fn from(e: std::io::Error) -> Self {
        CliFailure::Other(format!("io error: {e}"))
    }
}

impl From<LibError> for CliFailure {
    fn from(e: LibError) -> Self {
        match e {
            LibError::BlowUp { step } => CliFailure::BlowUp { step },
            other => CliFailure::Other(other.to_string()),
        }
    }
}

impl From<SolveFailure> for CliFailure {
    fn from(e: SolveFailure) -> Self {
        match e {
            SolveFailure::BlowUp(info) => CliFailure::BlowUp { step: info.step },
            SolveFailure::Invalid(e) => e.into(),
        }
    }
}

fn sample_member_path(r: &Resolved, member: usize, steps: usize) -> Result<NoisePath, CliFailure> {
    let modes = r.spec.noise.modes();
    Ok(NoisePath::sample(
        member_seed(r.seed, member),
        steps,
        r.params.dt,
        modes,
    )?)
}

// ---------------------------------------------------------------------------
// run
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct SnapshotSummary {
    time: f64,
    mass: f64,
    l1: f64,
    l2: f64,
    min: f64,
    max: f64,
    file: String,
}

#[derive(Serialize)]
struct RunPayload {
    dt: f64,
    steps: usize,
    snapshots: Vec<SnapshotSummary>,
}

pub fn run(config: &RunConfig, writer: &ReportWriter) -> Result<(), CliFailure> {
    let r = config.resolve()?;
    let times = config.output_times(&r.params)?;
    let n = r.params.n_steps()?;
    let path = NoisePath::sample(r.seed, n, r.params.dt, r.spec.noise.modes())?;
    let u0 = r.spec.initial.generate(r.grid);
    let traj = solve_from(&r.spec, r.grid, &r.params, &path, &u0, &times)?;

    let mut snapshots = Vec::new();
    for (j, (&t, field)) in traj.times().iter().zip(traj.fields()).enumerate() {
        let name = format!("snapshot_{j:04}.csv");
        let file = std::fs::File::create(writer.out_dir().join(&name))?;
        write_field_csv(field, std::io::BufWriter::new(file))?;
        snapshots.push(SnapshotSummary {
            time: t,
            mass: field.mean(),
            l1: lp_norm(field, 1.0)?,
            l2: lp_norm(field, 2.0)?,
            min: field.min(),
            max: field.max(),
            file: name,
        });
    }
    // Final state additionally as a raw block with its JSON sidecar.
    let (t_last, last) = traj.last();
    let raw = std::fs::File::create(writer.out_dir().join("final.f64le"))?;
    write_field_raw(last, std::io::BufWriter::new(raw))?;
    std::fs::write(
        writer.out_dir().join("final.f64le.json"),
        raw_sidecar(last, t_last),
    )?;

    writer.write_csv(
        "run_summary.csv",
        "time,mass,l1,l2,min,max",
        snapshots.iter().map(|s| {
            format!(
                "{},{},{},{},{},{}",
                fmt_f64(s.time),
                fmt_f64(s.mass),
                fmt_f64(s.l1),
                fmt_f64(s.l2),
                fmt_f64(s.min),
                fmt_f64(s.max)
            )
        }),
    )?;
    let payload = RunPayload {
        dt: r.params.dt,
        steps: n,
        snapshots,
    };
    writer.write_json("run.json", "run", config, r.seed, &payload)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// cascade
// ---------------------------------------------------------------------------

pub fn cascade(config: &RunConfig, writer: &ReportWriter) -> Result<(), CliFailure> {
    let r = config.resolve()?;
    if r.tau_list.len() < 2 {
        return Err(ConfigError {
            field: "params.tau_list".into(),
            message: "cascade needs at least two viscosities".into(),
        }
        .into());
    }
    let times = config.output_times(&r.params)?;
    let u0 = r.spec.initial.generate(r.grid);
    let report = cascade_report(
        &r.spec,
        r.grid,
        &r.params,
        &r.tau_list,
        config.ensemble.members,
        &times,
        r.seed,
        &u0,
    )?;
    let k = r.tau_list.len();
    let mut rows = Vec::new();
    for i in 0..k {
        for j in 0..k {
            rows.push(format!(
                "{},{},{},{},{},{}",
                i,
                j,
                fmt_f64(report.taus[i]),
                fmt_f64(report.taus[j]),
                fmt_f64(report.mean[i][j]),
                fmt_f64(report.se[i][j])
            ));
        }
    }
    writer.write_csv("cascade.csv", "i,j,tau_i,tau_j,mean,se", rows)?;
    writer.write_json("cascade.json", "cascade", config, r.seed, &report)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// contraction
// ---------------------------------------------------------------------------

pub fn contraction(config: &RunConfig, writer: &ReportWriter) -> Result<(), CliFailure> {
    let r = config.resolve()?;
    let times = config.output_times(&r.params)?;
    let u0_a = r.spec.initial.generate(r.grid);
    let u0_b = match &config.experiment.initial_b {
        Some(init) => init.generate(r.grid),
        None => {
            return Err(ConfigError {
                field: "experiment.initial_b".into(),
                message: "contraction needs the second initial profile".into(),
            }
            .into())
        }
    };
    let report = contraction_report(
        &r.spec,
        r.grid,
        &r.params,
        &u0_a,
        &u0_b,
        config.ensemble.members,
        r.seed,
        &times,
    )?;
    writer.write_csv(
        "contraction.csv",
        "time,distance_mean,distance_se,ratio,ratio_se",
        (0..report.times.len()).map(|j| {
            format!(
                "{},{},{},{},{}",
                fmt_f64(report.times[j]),
                fmt_f64(report.distance[j].mean),
                fmt_f64(report.distance[j].se),
                fmt_f64(report.ratio[j]),
                fmt_f64(report.ratio_se[j])
            )
        }),
    )?;
    writer.write_json("contraction.json", "contraction", config, r.seed, &report)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// energy
// ---------------------------------------------------------------------------

pub fn energy(config: &RunConfig, writer: &ReportWriter) -> Result<(), CliFailure> {
    let r = config.resolve()?;
    let report = energy_report(
        &r.spec,
        r.grid,
        &r.params,
        &r.tau_list,
        config.ensemble.members,
        config.experiment.p,
        r.seed,
    )?;
    writer.write_csv(
        "energy.csv",
        "tau,sup_mean,sup_se,dissipation_mean,dissipation_se,bound_ratio",
        (0..report.taus.len()).map(|i| {
            format!(
                "{},{},{},{},{},{}",
                fmt_f64(report.taus[i]),
                fmt_f64(report.sup_norm[i].mean),
                fmt_f64(report.sup_norm[i].se),
                fmt_f64(report.dissipation[i].mean),
                fmt_f64(report.dissipation[i].se),
                fmt_f64(report.bound_ratio[i])
            )
        }),
    )?;
    writer.write_json("energy.json", "energy", config, r.seed, &report)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// regularity
// ---------------------------------------------------------------------------

pub fn regularity(config: &RunConfig, writer: &ReportWriter) -> Result<(), CliFailure> {
    let r = config.resolve()?;
    let varsigma = r.spec.regularity_exponent()?;
    let s = config.experiment.s.unwrap_or(varsigma / 2.0);
    let times = config.output_times(&r.params)?;
    let report = regularity_report(
        &r.spec,
        r.grid,
        &r.params,
        &r.tau_list,
        s,
        config.ensemble.members,
        &times,
        r.seed,
    )?;
    let mut rows = Vec::new();
    for (i, tau) in report.taus.iter().enumerate() {
        for (j, t) in report.times.iter().enumerate() {
            rows.push(format!(
                "{},{},{},{}",
                fmt_f64(*tau),
                fmt_f64(*t),
                fmt_f64(report.seminorm[i][j].mean),
                fmt_f64(report.seminorm[i][j].se)
            ));
        }
    }
    writer.write_csv("regularity.csv", "tau,time,seminorm_mean,seminorm_se", rows)?;
    writer.write_json("regularity.json", "regularity", config, r.seed, &report)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// kinetic-check
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct KineticPayload {
    n1_total: f64,
    n2_total: f64,
    tail_radius: f64,
    tail_mass: f64,
    chain_rule_residual: f64,
    tests: Vec<KineticTestRow>,
}

#[derive(Serialize)]
struct KineticTestRow {
    index: usize,
    time_power: u32,
    spatial: Vec<SpatialFactor>,
    xi_lo: f64,
    xi_hi: f64,
    residual: f64,
}

pub fn kinetic_check(config: &RunConfig, writer: &ReportWriter) -> Result<(), CliFailure> {
    let r = config.resolve()?;
    let n = r.params.n_steps()?;
    let path = NoisePath::sample(r.seed, n, r.params.dt, r.spec.noise.modes())?;
    let u0 = r.spec.initial.generate(r.grid);
    let times = all_step_times(&r.params)?;
    let traj = solve_from(&r.spec, r.grid, &r.params, &path, &u0, &times)?;
    let est = estimate_measures_with(&traj, &r.spec, r.vgrid, config.experiment.deposit)?;

    let tail_radius = config.experiment.tail_radius.unwrap_or(config.state_range);
    let tail_mass = vanishing_xi_mass(&est, tail_radius);
    let chain = chain_rule_residual(&traj.fields()[traj.len() - 1], &r.spec, &|z: f64| {
        (1.0 + z * z).recip()
    })?;

    let range = r.vgrid.max() - r.vgrid.min();
    let default_xi = [r.vgrid.min() + 0.17 * range, r.vgrid.max() - 0.13 * range];
    let xi = config.experiment.test_xi.unwrap_or(default_xi);
    let dim = r.grid.dim();
    let family: Vec<Vec<SpatialFactor>> = match &config.experiment.test_spatial {
        Some(factors) => vec![factors.clone()],
        None => {
            let pad = |lead: SpatialFactor| {
                let mut f = vec![lead];
                f.resize(dim, SpatialFactor::One);
                f
            };
            vec![
                pad(SpatialFactor::One),
                pad(SpatialFactor::Cos { mode: 1 }),
                pad(SpatialFactor::Sin { mode: 1 }),
            ]
        }
    };

    let mut tests = Vec::new();
    for (index, spatial) in family.iter().enumerate() {
        let test = TestFunction {
            time_power: config.experiment.test_time_power,
            horizon: r.params.t_end,
            spatial: spatial.clone(),
            xi_lo: xi[0],
            xi_hi: xi[1],
        };
        let residual = kinetic_residual(&traj, &r.spec, &path, &test, r.vgrid, &est)?;
        tests.push(KineticTestRow {
            index,
            time_power: test.time_power,
            spatial: spatial.clone(),
            xi_lo: xi[0],
            xi_hi: xi[1],
            residual,
        });
    }

    writer.write_csv(
        "kinetic.csv",
        "test_index,residual",
        tests
            .iter()
            .map(|t| format!("{},{}", t.index, fmt_f64(t.residual))),
    )?;
    writer.write_csv(
        "measures.csv",
        "t_bin,x_index,xi_bin,n1_mass,n2_mass",
        est.bins.iter().map(|b| {
            format!(
                "{},{},{},{},{}",
                b.time_index,
                b.cell,
                b.xi_bin,
                fmt_f64(b.n1),
                fmt_f64(b.n2)
            )
        }),
    )?;
    let payload = KineticPayload {
        n1_total: est.n1_total,
        n2_total: est.n2_total,
        tail_radius,
        tail_mass,
        chain_rule_residual: chain,
        tests,
    };
    writer.write_json("kinetic.json", "kinetic-check", config, r.seed, &payload)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// ito-check
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct ItoPayload {
    phi: String,
    members: usize,
    defect: Stat,
    defect_without_correction: Stat,
    correction_distance_in_se: f64,
}

pub fn ito_check(config: &RunConfig, writer: &ReportWriter) -> Result<(), CliFailure> {
    let r = config.resolve()?;
    let n = r.params.n_steps()?;
    let times = all_step_times(&r.params)?;
    let u0 = r.spec.initial.generate(r.grid);
    let members = config.ensemble.members;
    let (phi_name, phi): (&str, C2Function) = match config.experiment.phi {
        PhiKind::Identity => (
            "identity",
            C2Function {
                value: &|x| x,
                d1: &|_| 1.0,
                d2: &|_| 0.0,
            },
        ),
        PhiKind::Square => (
            "square",
            C2Function {
                value: &|x| x * x,
                d1: &|x| 2.0 * x,
                d2: &|_| 2.0,
            },
        ),
    };
    let psi = SpatialTest::one(r.grid.dim());

    let mut with = Vec::with_capacity(members);
    let mut without = Vec::with_capacity(members);
    for m in 0..members {
        let path = sample_member_path(&r, m, n)?;
        let traj = solve_from(&r.spec, r.grid, &r.params, &path, &u0, &times)?;
        with.push(ito_defect_with(&traj, &r.spec, &path, &phi, &psi, true)?);
        without.push(ito_defect_with(&traj, &r.spec, &path, &phi, &psi, false)?);
    }
    let defect = Stat::from_samples(&with);
    let defect_without = Stat::from_samples(&without);
    let scale = defect_without.se.max(defect.se).max(f64::MIN_POSITIVE);
    let payload = ItoPayload {
        phi: phi_name.to_string(),
        members,
        defect,
        defect_without_correction: defect_without,
        correction_distance_in_se: defect_without.mean.abs() / scale,
    };
    writer.write_csv(
        "ito.csv",
        "member,defect,defect_without_correction",
        (0..members).map(|m| format!("{},{},{}", m, fmt_f64(with[m]), fmt_f64(without[m]))),
    )?;
    writer.write_json("ito.json", "ito-check", config, r.seed, &payload)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// audit
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct AuditPayload {
    audit: kinlab::model::AuditReport,
    /// Diagnostic bound on the G^2 mass dropped by the mode truncation.
    noise_truncation_tail: f64,
}

pub fn audit(config: &RunConfig, writer: &ReportWriter) -> Result<(), CliFailure> {
    let r = config.resolve()?;
    let report = r
        .spec
        .audit_hypotheses_on(4096, r.seed, config.state_range)?;
    writer.write_csv(
        "audit.csv",
        "check,pass,worst,observed_constant",
        report.checks.iter().map(|c| {
            format!(
                "{},{},{},{}",
                c.name,
                c.pass,
                fmt_f64(c.worst),
                fmt_f64(c.observed_constant)
            )
        }),
    )?;
    let payload = AuditPayload {
        noise_truncation_tail: r.spec.noise.truncation_tail_bound(),
        audit: report,
    };
    writer.write_json("audit.json", "audit", config, r.seed, &payload)?;
    Ok(())
}
