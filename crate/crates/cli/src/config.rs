//! TOML run configuration and problem construction.

use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use entropic_core::bench::{by_name, Benchmark, BENCH_EPS};
use entropic_core::continuation::{dirichlet_eigenpairs, PathOptions};
use entropic_core::degree::{DegreeOptions, RegionSpec};
use entropic_core::grid::Mesh;
use entropic_core::measures::{DensityExpr, MeasureData};
use entropic_core::solve::{Schedule, SolverOptions};
use entropic_core::structural::field::{ArctanReaction, DataFn, ZeroSource};
use entropic_core::verify::VerifyOptions;
use entropic_core::{Field64, Measure64, Mesh64};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub problem: ProblemSpec,
    #[serde(default)]
    pub solve: SolveSection,
    #[serde(default)]
    pub path: PathSection,
    #[serde(default)]
    pub degree: DegreeSection,
    #[serde(default)]
    pub verify: VerifySection,
    #[serde(default)]
    pub study: StudySection,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    /// Built-in benchmark supplying defaults for mesh, field and measure.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub benchmark: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mesh: Option<MeshSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<FieldSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub measure: Option<MeasureSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeshSpec {
    Square { n: usize },
    Disk {
        n: usize,
        #[serde(default = "two")]
        ambient_dim: usize,
        #[serde(default = "one")]
        radius: f64,
    },
}

impl MeshSpec {
    pub fn with_n(&self, n: usize) -> MeshSpec {
        match *self {
            MeshSpec::Square { .. } => MeshSpec::Square { n },
            MeshSpec::Disk { ambient_dim, radius, .. } => MeshSpec::Disk { n, ambient_dim, radius },
        }
    }
}

fn two() -> usize {
    2
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSpec {
    pub p: f64,
    #[serde(default)]
    pub eps: f64,
    /// `c` in `a = |xi|_eps^{p-2} xi + c xi / (1 + |xi|^2)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturbation: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reaction: Option<ReactionSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ReactionSpec {
    /// `b = -lambda |s|^{p-2} s`; give `lambda` or `lambda_over_lambda1`.
    Power {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lambda: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lambda_over_lambda1: Option<f64>,
    },
    /// `b = c atan(s)`.
    Arctan { c: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeasureSpec {
    Zero,
    Constant { value: f64 },
    /// `coefficient |x - center|^{-exponent}`.
    RadialPower {
        exponent: f64,
        #[serde(default = "one")]
        coefficient: f64,
        #[serde(default)]
        center: [f64; 2],
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lm_tag: Option<f64>,
    },
    /// `amplitude sin(pi x) sin(pi y)`.
    Eigenmode { amplitude: f64 },
    LineCharge { a: [f64; 2], b: [f64; 2], g: [f64; 2] },
    PointMass { at: [f64; 2], mass: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolveSection {
    pub n_max: usize,
    pub level0: f64,
    pub schedule_tol: f64,
    pub newton_tol: f64,
    pub max_iter: usize,
}

impl Default for SolveSection {
    fn default() -> Self {
        let s = Schedule::<f64>::default();
        let o = SolverOptions::<f64>::default();
        SolveSection { n_max: s.n_max, level0: s.level0, schedule_tol: s.tol, newton_tol: o.newton_tol, max_iter: o.max_iter }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathSection {
    pub initial_step: f64,
    pub max_step: f64,
    pub step_floor: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_max: Option<f64>,
    pub max_steps: usize,
    /// Multistart attempts for the limit-kernel search after a blow-up (0 disables).
    pub kernel_attempts: usize,
}

impl Default for PathSection {
    fn default() -> Self {
        let o = PathOptions::default();
        PathSection {
            initial_step: o.initial_step,
            max_step: o.max_step,
            step_floor: o.step_floor,
            r_max: o.r_max,
            max_steps: o.max_steps,
            kernel_attempts: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RegionConfig {
    PhiBall { radius: f64 },
    Box { lo: f64, hi: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DegreeSection {
    pub region: RegionConfig,
    pub starts: usize,
    pub certified_cap: usize,
    /// Expected value; a mismatch fails the command.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expect: Option<i64>,
    /// Fail unless the value is odd.
    pub expect_odd: bool,
}

impl Default for DegreeSection {
    fn default() -> Self {
        let o = DegreeOptions::default();
        DegreeSection {
            region: RegionConfig::PhiBall { radius: 10.0 },
            starts: o.starts,
            certified_cap: o.certified_cap,
            expect: None,
            expect_odd: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySection {
    /// Run every built-in benchmark at all three levels instead of the configured problem.
    pub suite: bool,
    pub tol_constant: f64,
    pub random_tests: usize,
    pub test_bound: f64,
    pub uniqueness_guesses: usize,
    pub k_grid: Vec<f64>,
}

impl Default for VerifySection {
    fn default() -> Self {
        let o = VerifyOptions::default();
        VerifySection {
            suite: false,
            tol_constant: o.tol_constant,
            random_tests: o.random_tests,
            test_bound: o.test_bound,
            uniqueness_guesses: o.uniqueness_guesses,
            k_grid: o.k_grid,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyKind {
    Convergence,
    Regularity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StudySection {
    pub kind: StudyKind,
    /// Truncation levels `n` of `T_n(f)` (convergence).
    pub levels: Vec<f64>,
    pub data_tol: f64,
    pub phi_tol: f64,
    /// Mesh parameters of the refinement sequence (regularity).
    pub meshes: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    pub max_variation: f64,
}

impl Default for StudySection {
    fn default() -> Self {
        StudySection {
            kind: StudyKind::Convergence,
            levels: (0..13).map(|k| 2f64.powi(k)).collect(),
            data_tol: 1e-3,
            phi_tol: 1e-2,
            meshes: Vec::new(),
            q: None,
            max_variation: 0.1,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let c: RunConfig = toml::from_str(text).map_err(|e| anyhow!("{e}"))?;
        c.check()?;
        Ok(c)
    }

    pub fn emit(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// First 16 hex digits of the SHA-256 of the emitted config.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.emit().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn check(&self) -> Result<()> {
        let p = &self.problem;
        if let Some(name) = &p.benchmark {
            if by_name(name).is_none() {
                bail!("problem.benchmark: unknown benchmark `{name}`");
            }
        } else if p.mesh.is_none() || p.field.is_none() || p.measure.is_none() {
            bail!("problem: give `benchmark` or all of `mesh`, `field` and `measure`");
        }
        if let Some(ReactionSpec::Power { lambda, lambda_over_lambda1 }) = p.field.as_ref().and_then(|f| f.reaction.as_ref()) {
            if lambda.is_some() == lambda_over_lambda1.is_some() {
                bail!("problem.field.reaction: give exactly one of `lambda` and `lambda_over_lambda1`");
            }
        }
        Ok(())
    }

    /// Mesh of the problem, falling back to the benchmark's coarsest level.
    pub fn mesh_spec(&self) -> Result<MeshSpec> {
        match (&self.problem.mesh, &self.problem.benchmark) {
            (Some(m), _) => Ok(m.clone()),
            (None, Some(name)) => Ok(bench_mesh_spec(&by_name(name).expect("checked"), None)),
            (None, None) => bail!("problem.mesh missing"),
        }
    }

    pub fn set_mesh_n(&mut self, n: usize) -> Result<()> {
        self.problem.mesh = Some(self.mesh_spec()?.with_n(n));
        Ok(())
    }

    pub fn schedule(&self) -> Schedule<f64> {
        Schedule { n_max: self.solve.n_max, level0: self.solve.level0, tol: self.solve.schedule_tol }
    }

    pub fn solver(&self) -> SolverOptions<f64> {
        SolverOptions { newton_tol: self.solve.newton_tol, max_iter: self.solve.max_iter, ..SolverOptions::default() }
    }

    pub fn path_options(&self) -> PathOptions {
        PathOptions {
            initial_step: self.path.initial_step,
            max_step: self.path.max_step,
            step_floor: self.path.step_floor,
            r_max: self.path.r_max,
            max_steps: self.path.max_steps,
            solver: self.solver(),
        }
    }

    pub fn degree_options(&self) -> DegreeOptions {
        DegreeOptions { starts: self.degree.starts, certified_cap: self.degree.certified_cap, ..DegreeOptions::default() }
    }

    pub fn region(&self) -> RegionSpec {
        match self.degree.region {
            RegionConfig::PhiBall { radius } => RegionSpec::PhiBall { radius },
            RegionConfig::Box { lo, hi } => RegionSpec::NodalBox { lo, hi },
        }
    }

    pub fn verify_options(&self) -> VerifyOptions {
        VerifyOptions {
            tol_constant: self.verify.tol_constant,
            k_grid: self.verify.k_grid.clone(),
            seed: self.seed,
            random_tests: self.verify.random_tests,
            test_bound: self.verify.test_bound,
            uniqueness_guesses: self.verify.uniqueness_guesses,
            schedule: self.schedule(),
            solver: self.solver(),
        }
    }

    pub fn problem(&self) -> Result<Problem> {
        Problem::build(&self.problem)
    }

    pub fn mesh_for(&self, spec: &MeshSpec) -> Result<Arc<Mesh64>> {
        build_mesh(spec)
    }
}

fn bench_mesh_spec(b: &Benchmark, n: Option<usize>) -> MeshSpec {
    let n = n.unwrap_or(b.levels[0]);
    match b.family {
        entropic_core::bench::MeshFamily::Disk => MeshSpec::Disk { n, ambient_dim: 2, radius: 1.0 },
        entropic_core::bench::MeshFamily::UnitSquare => MeshSpec::Square { n },
    }
}

fn build_mesh(spec: &MeshSpec) -> Result<Arc<Mesh64>> {
    Ok(Arc::new(match *spec {
        MeshSpec::Square { n } => Mesh::unit_square(n)?,
        MeshSpec::Disk { n, ambient_dim, radius } => Mesh::radial(ambient_dim, radius, n)?,
    }))
}

/// A fully built problem.
pub struct Problem {
    pub name: String,
    pub mesh: Arc<Mesh64>,
    pub field: Field64,
    pub mu: Measure64,
    pub exact: Option<fn(f64) -> f64>,
    /// Discrete first Dirichlet eigenvalue, when a reaction was scaled by it.
    pub lambda1: Option<f64>,
}

impl Problem {
    fn build(spec: &ProblemSpec) -> Result<Self> {
        let bench = spec.benchmark.as_deref().map(|n| by_name(n).expect("checked"));
        let mesh_spec = match (&spec.mesh, &bench) {
            (Some(m), _) => m.clone(),
            (None, Some(b)) => bench_mesh_spec(b, None),
            (None, None) => bail!("problem.mesh missing"),
        };
        let mesh = build_mesh(&mesh_spec).context("problem.mesh")?;
        let mut lambda1 = None;
        let field = match (&spec.field, &bench) {
            (Some(f), _) => build_field(f, &mesh, &mut lambda1).context("problem.field")?,
            (None, Some(b)) => b.field.clone(),
            (None, None) => bail!("problem.field missing"),
        };
        let n_amb = mesh.ambient_dim();
        let mu = match (&spec.measure, &bench) {
            (Some(m), _) => build_measure(m, field.p(), n_amb).context("problem.measure")?,
            (None, Some(b)) => b.mu.clone(),
            (None, None) => bail!("problem.measure missing"),
        };
        // the closed-form profile only applies to the untouched benchmark on its disk
        let exact = match &bench {
            Some(b) if spec.field.is_none() && spec.measure.is_none() && matches!(mesh_spec, MeshSpec::Disk { ambient_dim: 2, .. }) => b.exact,
            _ => None,
        };
        let name = spec.benchmark.clone().unwrap_or_else(|| "custom".into());
        Ok(Problem { name, mesh, field, mu, exact, lambda1 })
    }
}

fn build_field(f: &FieldSpec, mesh: &Arc<Mesh64>, lambda1: &mut Option<f64>) -> Result<Field64> {
    if !(f.p > 1.0) {
        bail!("p = {} must exceed 1", f.p);
    }
    if f.eps < 0.0 {
        bail!("eps must be nonnegative");
    }
    let eps = if f.p != 2.0 && f.eps == 0.0 { BENCH_EPS } else { f.eps };
    let mut field = match f.perturbation {
        Some(c) => Field64::perturbed_p_laplacian(f.p, eps, c),
        None => Field64::p_laplacian(f.p, eps),
    };
    match &f.reaction {
        None => {}
        Some(ReactionSpec::Power { lambda, lambda_over_lambda1 }) => {
            let lambda = match (lambda, lambda_over_lambda1) {
                (Some(l), None) => *l,
                (None, Some(r)) => {
                    let l1 = dirichlet_eigenpairs(mesh, 1, 1e-12)?[0].0;
                    *lambda1 = Some(l1);
                    r * l1
                }
                _ => bail!("reaction: give exactly one of `lambda` and `lambda_over_lambda1`"),
            };
            field = field.with_power_reaction(lambda);
        }
        Some(ReactionSpec::Arctan { c }) => {
            if *c < 0.0 {
                bail!("reaction.c must be nonnegative");
            }
            field = field.with_source(Arc::new(ArctanReaction { c: *c }), Some(Arc::new(ZeroSource)));
            field.growth.alpha2 = DataFn::Constant(c * PI / 2.0);
        }
    }
    Ok(field)
}

fn build_measure(m: &MeasureSpec, p: f64, n: usize) -> Result<Measure64> {
    Ok(match m {
        MeasureSpec::Zero => MeasureData::zero(),
        MeasureSpec::Constant { value } => MeasureData::density(DensityExpr::Constant(*value)),
        MeasureSpec::RadialPower { exponent, coefficient, center, lm_tag } => {
            let e = DensityExpr::RadialPower { exponent: *exponent, center: *center, coefficient: *coefficient };
            match lm_tag {
                Some(t) => MeasureData::density_in_lm(e, *t),
                None => MeasureData::density(e),
            }
        }
        MeasureSpec::Eigenmode { amplitude } => MeasureData::density(DensityExpr::FirstEigenmode { amplitude: *amplitude }),
        MeasureSpec::LineCharge { a, b, g } => MeasureData::line_charge(*a, *b, *g, p, n)?,
        MeasureSpec::PointMass { at, mass } => MeasureData::point_mass(*at, *mass, p, n)?,
    })
}
