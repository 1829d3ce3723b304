//! Subcommand drivers. Each returns the process exit code.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{Context, Result};
use entropic_core::bench::suite;
use entropic_core::continuation::{dirichlet_eigenpairs, mass_alignment, run_fredholm_path, solve_limit_kernel, PathStatus};
use entropic_core::degree::stabilized_degree;
use entropic_core::report::Provenance;
use entropic_core::solve::solve_entropy;
use entropic_core::verify::{
    check_entropy_inequality, convergence_study, regularity_sweep, test_dictionary, verify_problem, verify_suite, write_checks,
};
use entropic_core::{Error, FeFunction64, Mesh64};

use crate::config::{RunConfig, StudyKind};

pub const EXIT_OK: u8 = 0;
pub const EXIT_CONFIG: u8 = 1;
pub const EXIT_SCHEDULE: u8 = 2;
pub const EXIT_NONCONVERGENCE: u8 = 3;
pub const EXIT_BLOWUP: u8 = 4;
pub const EXIT_STALLED: u8 = 5;
pub const EXIT_CHECK_FAILED: u8 = 6;

pub struct Session {
    pub config: RunConfig,
    pub out: PathBuf,
    pub quiet: bool,
}

impl Session {
    fn prov(&self) -> Provenance {
        Provenance::new(self.config.hash())
    }

    fn say(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", msg.as_ref());
        }
    }

    fn create(&self, name: &str) -> Result<BufWriter<File>> {
        fs::create_dir_all(&self.out).with_context(|| format!("creating {}", self.out.display()))?;
        let path = self.out.join(name);
        Ok(BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?))
    }

    fn write_config(&self) -> Result<()> {
        let mut w = self.create("config.toml")?;
        self.prov().write_comment(&mut w)?;
        w.write_all(self.config.emit().as_bytes())?;
        Ok(w.flush()?)
    }
}

/// Exit code for a failed run.
pub fn classify(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<Error>() {
        Some(Error::ScheduleExhausted { .. }) => EXIT_SCHEDULE,
        Some(Error::NonConvergence { .. } | Error::SingularJacobian { .. }) => EXIT_NONCONVERGENCE,
        _ => EXIT_CONFIG,
    }
}

fn write_mesh(ctx: &Session, mesh: &Mesh64) -> Result<()> {
    let mut w = ctx.create("mesh.txt")?;
    ctx.prov().write_comment(&mut w)?;
    mesh.write_dump(&mut w)?;
    Ok(w.flush()?)
}

fn write_function(ctx: &Session, name: &str, u: &FeFunction64) -> Result<()> {
    let mut w = ctx.create(name)?;
    ctx.prov().write_comment(&mut w)?;
    u.write_dump(&mut w)?;
    Ok(w.flush()?)
}

pub fn cmd_solve(ctx: &Session) -> Result<u8> {
    let pr = ctx.config.problem()?;
    let mut sol = solve_entropy(&pr.field, &pr.mu, &pr.mesh, &ctx.config.schedule(), &ctx.config.solver())?;
    let vo = ctx.config.verify_options();
    let dict = test_dictionary(&pr.mesh, vo.random_tests, vo.test_bound, vo.seed);
    for &k in &vo.k_grid {
        let r = check_entropy_inequality(&sol, &pr.field, &pr.mu, &dict, &[k], vo.tol_h(&pr.mesh))?;
        sol.entropy_residuals.push(("dictionary_worst".into(), k, r.margin));
    }
    ctx.write_config()?;
    write_mesh(ctx, &pr.mesh)?;
    write_function(ctx, "solution.txt", &sol.u)?;
    let mut w = ctx.create("report.txt")?;
    sol.write_report(&mut w, &ctx.prov())?;
    writeln!(w, "problem = {}", pr.name)?;
    writeln!(w, "tol_h = {:.6e}", vo.tol_h(&pr.mesh))?;
    w.flush()?;
    ctx.say(format!(
        "solve {}: phi_norm={:.6e} estimate_slack={:.6e} energy_residual={:.3e} steps={}",
        pr.name,
        sol.phi_norm,
        sol.estimate_slack,
        sol.energy_residual,
        sol.trace.len()
    ));
    Ok(EXIT_OK)
}

pub fn cmd_continue(ctx: &Session) -> Result<u8> {
    let pr = ctx.config.problem()?;
    let rep = run_fredholm_path(&pr.field, &pr.mu, &pr.mesh, &ctx.config.path_options())?;
    ctx.write_config()?;
    write_mesh(ctx, &pr.mesh)?;
    let mut w = ctx.create("path.csv")?;
    rep.write_csv(&mut w, &ctx.prov())?;
    w.flush()?;
    let mut r = ctx.create("report.txt")?;
    ctx.prov().write_block(&mut r, "continuation")?;
    writeln!(r, "problem = {}", pr.name)?;
    writeln!(r, "status = {}", rep.status.label())?;
    writeln!(r, "r_max = {:.12e}", rep.r_max)?;
    writeln!(r, "samples = {}", rep.samples.len())?;
    if let Some(l1) = pr.lambda1 {
        writeln!(r, "lambda1 = {l1:.12e}")?;
    }
    let code = match &rep.status {
        PathStatus::Reached { u } => {
            writeln!(r, "final_phi_norm = {:.12e}", rep.final_phi_norm().unwrap_or(f64::NAN))?;
            write_function(ctx, "solution.txt", u)?;
            ctx.say(format!("continue {}: reached t=1, phi_norm={:.6e}", pr.name, rep.final_phi_norm().unwrap_or(f64::NAN)));
            EXIT_OK
        }
        PathStatus::BlowUp { t_star, candidate, tau_trace, reason } => {
            writeln!(r, "t_star = {t_star:.12e}")?;
            writeln!(r, "reason = {reason}")?;
            let taus: Vec<String> = tau_trace.iter().map(|t| format!("{t:.6e}")).collect();
            writeln!(r, "tau_trace = {}", taus.join(" "))?;
            if pr.mesh.n_dofs() > 0 {
                if let Ok(pairs) = dirichlet_eigenpairs(&pr.mesh, 1, 1e-12) {
                    writeln!(r, "alignment_first_mode = {:.12e}", mass_alignment(candidate, &pairs[0].1)?)?;
                }
            }
            write_function(ctx, "candidate.txt", candidate)?;
            if ctx.config.path.kernel_attempts > 0 {
                let ks = solve_limit_kernel(&pr.field, &pr.mesh, ctx.config.path.kernel_attempts, ctx.config.seed, 1e-8)?;
                writeln!(r, "kernel_found = {}", ks.candidate.is_some())?;
                for a in &ks.attempts {
                    writeln!(r, "kernel_attempt {} converged={} sigma={:.6e} residual={:.3e}", a.start, a.converged, a.sigma, a.residual)?;
                }
                if let Some(k) = &ks.candidate {
                    write_function(ctx, "kernel.txt", k)?;
                }
            }
            ctx.say(format!("continue {}: blow-up at t={t_star:.6e} ({reason})", pr.name));
            EXIT_BLOWUP
        }
        PathStatus::Stalled { diagnostics } => {
            writeln!(r, "diagnostics = {diagnostics}")?;
            ctx.say(format!("continue {}: stalled ({diagnostics})", pr.name));
            EXIT_STALLED
        }
    };
    r.flush()?;
    Ok(code)
}

pub fn cmd_verify(ctx: &Session) -> Result<u8> {
    let vo = ctx.config.verify_options();
    let checks = if ctx.config.verify.suite {
        verify_suite(&suite(), &vo)?
    } else {
        let pr = ctx.config.problem()?;
        let mut c = verify_problem(&pr.field, &pr.mu, &pr.mesh, pr.exact, &vo)?;
        for r in &mut c {
            r.name = format!("{}/{}", pr.name, r.name);
        }
        c
    };
    ctx.write_config()?;
    let mut w = ctx.create("verify.txt")?;
    write_checks(&mut w, &checks, &ctx.prov())?;
    w.flush()?;
    for c in &checks {
        if c.failed() {
            eprintln!("{c}");
        } else {
            ctx.say(c.to_string());
        }
    }
    let failed = checks.iter().filter(|c| c.failed()).count();
    ctx.say(format!("verify: {} checks, {failed} failed", checks.len()));
    Ok(if failed == 0 { EXIT_OK } else { EXIT_CHECK_FAILED })
}

pub fn cmd_degree(ctx: &Session) -> Result<u8> {
    let pr = ctx.config.problem()?;
    let rep = stabilized_degree(&pr.field, &pr.mu, &pr.mesh, &ctx.config.region(), &ctx.config.degree_options())?;
    ctx.write_config()?;
    let mut w = ctx.create("degree.txt")?;
    rep.write_report(&mut w, &ctx.prov())?;
    w.flush()?;
    let mut ok = true;
    if let Some(e) = ctx.config.degree.expect {
        ok &= rep.value == e;
    }
    if ctx.config.degree.expect_odd {
        ok &= rep.value % 2 != 0;
    }
    ctx.say(format!(
        "degree {}: value={} solutions={} confidence={:?} tau_bar={:?}",
        pr.name,
        rep.value,
        rep.solutions.len(),
        rep.confidence,
        rep.tau_bar
    ));
    Ok(if ok { EXIT_OK } else { EXIT_CHECK_FAILED })
}

pub fn cmd_study(ctx: &Session) -> Result<u8> {
    let pr = ctx.config.problem()?;
    let st = &ctx.config.study;
    let prov = ctx.prov();
    let mut w = ctx.create("study.csv")?;
    let mut r = ctx.create("report.txt")?;
    prov.write_block(&mut r, "study")?;
    writeln!(r, "problem = {}", pr.name)?;
    let ok = match st.kind {
        StudyKind::Convergence => {
            let t = convergence_study(&pr.field, &pr.mu, &pr.mesh, &st.levels, &ctx.config.solver())?;
            t.write_csv(&mut w, &prov)?;
            let nm = t.non_monotone_steps();
            let worst = t.worst_below(st.data_tol);
            writeln!(r, "kind = convergence")?;
            writeln!(r, "non_monotone_steps = {nm}")?;
            writeln!(r, "worst_phi_distance_below_data_tol = {}", worst.map_or("-".into(), |v| format!("{v:.6e}")))?;
            let ok = nm <= 1 && worst.is_some_and(|v| v <= st.phi_tol);
            ctx.say(format!("study convergence {}: non_monotone={nm} worst={worst:?} pass={ok}", pr.name));
            ok
        }
        StudyKind::Regularity => {
            let meshes = refinement_meshes(ctx, &pr.mesh)?;
            let t = regularity_sweep(&pr.field, &pr.mu, &meshes, st.q, &ctx.config.schedule(), &ctx.config.solver())?;
            t.write_csv(&mut w, &prov)?;
            let v = t.variation();
            writeln!(r, "kind = regularity")?;
            writeln!(r, "q = {}", t.q)?;
            writeln!(r, "r = {}", t.r)?;
            writeln!(r, "variation = {v:.6e}")?;
            let ok = v <= st.max_variation;
            ctx.say(format!("study regularity {}: q={} variation={v:.3e} pass={ok}", pr.name, t.q));
            ok
        }
    };
    writeln!(r, "pass = {ok}")?;
    w.flush()?;
    r.flush()?;
    ctx.write_config()?;
    Ok(if ok { EXIT_OK } else { EXIT_CHECK_FAILED })
}

fn refinement_meshes(ctx: &Session, base: &Arc<Mesh64>) -> Result<Vec<Arc<Mesh64>>> {
    let st = &ctx.config.study;
    if st.meshes.is_empty() {
        let once = Arc::new(base.refine()?);
        let twice = Arc::new(once.refine()?);
        return Ok(vec![Arc::clone(base), once, twice]);
    }
    let template = ctx.config.mesh_spec()?;
    st.meshes.iter().map(|&n| ctx.config.mesh_for(&template.with_n(n))).collect()
}

pub fn out_dir(flag: Option<&Path>) -> PathBuf {
    flag.map_or_else(|| PathBuf::from("out"), Path::to_path_buf)
}
