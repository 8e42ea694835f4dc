//! TOML run configuration.
//!
//! Every error carries the line of the offending value so the CLI can point
//! at it.

use std::fmt;
use std::ops::Range;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;
use toml::Spanned;

use crate::error::Error;
use crate::manifold::{Manifold, ManifoldKind, ManifoldPoint};
use crate::sampler::{ChainConfig, MassMatrix, SignConvention, Variant};
use crate::target::Target;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub file: Option<PathBuf>,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.file, self.line) {
            (Some(p), Some(l)) => write!(f, "{}:{l}: {}", p.display(), self.message),
            (Some(p), None) => write!(f, "{}: {}", p.display(), self.message),
            (None, Some(l)) => write!(f, "line {l}: {}", self.message),
            (None, None) => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

/// Fully resolved run description.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub manifold: Manifold,
    pub target: Target,
    pub mass: MassMatrix,
    pub chain: ChainConfig,
    pub initial: ManifoldPoint,
    pub output_dir: PathBuf,
    pub n_chains: usize,
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
enum FamilyName {
    Uniform,
    VonMisesFisher,
    BinghamVonMisesFisher,
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
enum MassForm {
    Identity,
    Diagonal,
    Dense,
}

/// A vector or a matrix given as an array of rows.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum Numbers {
    Vector(Vec<f64>),
    Rows(Vec<Vec<f64>>),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    manifold: Spanned<RawManifold>,
    target: Spanned<RawTarget>,
    mass: Option<Spanned<RawMass>>,
    sampler: Option<Spanned<RawSampler>>,
    output: Option<RawOutput>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawManifold {
    kind: ManifoldKind,
    d: Spanned<usize>,
    s: Option<Spanned<usize>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTarget {
    family: Spanned<FamilyName>,
    kappa: Option<Spanned<f64>>,
    mu: Option<Spanned<Vec<f64>>>,
    c: Option<Spanned<Numbers>>,
    a: Option<Spanned<Numbers>>,
    b: Option<Spanned<Vec<f64>>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMass {
    form: Spanned<MassForm>,
    values: Option<Spanned<Numbers>>,
    file: Option<Spanned<String>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSampler {
    variant: Option<Variant>,
    epsilon: Option<Spanned<f64>>,
    n_leapfrog: Option<Spanned<usize>>,
    n_samples: Option<usize>,
    n_burnin: Option<usize>,
    thin: Option<Spanned<usize>>,
    seed: Option<u64>,
    sign_convention: Option<SignConvention>,
    reproject: Option<bool>,
    max_drift: Option<Spanned<f64>>,
    initial: Option<Spanned<Numbers>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Option<String>,
    n_chains: Option<Spanned<usize>>,
}

struct Ctx<'a> {
    source: &'a str,
    file: Option<&'a Path>,
}

impl Ctx<'_> {
    fn line_of(&self, span: &Range<usize>) -> usize {
        let end = span.start.min(self.source.len());
        self.source[..end].bytes().filter(|&b| b == b'\n').count() + 1
    }

    fn err(&self, span: &Range<usize>, message: impl Into<String>) -> ConfigError {
        ConfigError {
            file: self.file.map(Path::to_path_buf),
            line: Some(self.line_of(span)),
            message: message.into(),
        }
    }

    fn wrap(&self, span: &Range<usize>, e: Error) -> ConfigError {
        self.err(span, e.to_string())
    }
}

fn rows_to_matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>, String> {
    let n_rows = rows.len();
    let n_cols = rows.first().map_or(0, Vec::len);
    if n_rows == 0 || n_cols == 0 {
        return Err("matrix is empty".into());
    }
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != n_cols) {
        return Err(format!("row {i} has {} entries, expected {n_cols}", r.len()));
    }
    Ok(DMatrix::from_fn(n_rows, n_cols, |i, j| rows[i][j]))
}

fn matrix_value(ctx: &Ctx, v: &Spanned<Numbers>, name: &str) -> Result<DMatrix<f64>, ConfigError> {
    match v.get_ref() {
        Numbers::Rows(rows) => rows_to_matrix(rows).map_err(|m| ctx.err(&v.span(), format!("{name}: {m}"))),
        Numbers::Vector(_) => Err(ctx.err(&v.span(), format!("{name} must be an array of rows"))),
    }
}

/// Reads a whitespace-separated matrix with one row per line. Blank lines
/// and lines starting with `#` are skipped.
pub fn parse_matrix_text(text: &str) -> Result<DMatrix<f64>, (usize, String)> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>()
                    .map_err(|_| (i + 1, format!("cannot parse {tok:?} as a number")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err((
                    i + 1,
                    format!("row has {} entries, expected {}", row.len(), first.len()),
                ));
            }
        }
        rows.push(row);
    }
    rows_to_matrix(&rows).map_err(|m| (1, m))
}

pub fn load_matrix_file(path: &Path) -> Result<DMatrix<f64>, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
        file: Some(path.to_path_buf()),
        line: None,
        message: e.to_string(),
    })?;
    parse_matrix_text(&text).map_err(|(line, message)| ConfigError {
        file: Some(path.to_path_buf()),
        line: Some(line),
        message,
    })
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            file: Some(path.to_path_buf()),
            line: None,
            message: e.to_string(),
        })?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::parse(&text, Some(path), base)
    }

    /// Parses `source`; relative mass file paths resolve against `base_dir`.
    pub fn parse(source: &str, file: Option<&Path>, base_dir: &Path) -> Result<Self, ConfigError> {
        let ctx = Ctx { source, file };
        let raw: RawConfig = toml::from_str(source).map_err(|e| {
            let line = e.span().map(|s| ctx.line_of(&s));
            ConfigError {
                file: file.map(Path::to_path_buf),
                line,
                message: e.message().to_string(),
            }
        })?;

        let manifold = build_manifold(&ctx, &raw.manifold)?;
        let target = build_target(&ctx, manifold, &raw.target)?;
        let mass = match &raw.mass {
            None => MassMatrix::Identity,
            Some(m) => build_mass(&ctx, manifold, m, base_dir)?,
        };

        let default_sampler = RawSampler::default();
        let (sampler, sampler_span) = match &raw.sampler {
            Some(s) => (s.get_ref(), s.span()),
            None => (&default_sampler, 0..0),
        };
        let defaults = ChainConfig::default();
        let chain = ChainConfig {
            variant: sampler.variant.unwrap_or(defaults.variant),
            epsilon: sampler.epsilon.as_ref().map_or(defaults.epsilon, |v| *v.get_ref()),
            n_leapfrog: sampler
                .n_leapfrog
                .as_ref()
                .map_or(defaults.n_leapfrog, |v| *v.get_ref()),
            n_samples: sampler.n_samples.unwrap_or(defaults.n_samples),
            n_burnin: sampler.n_burnin.unwrap_or(defaults.n_burnin),
            thin: sampler.thin.as_ref().map_or(defaults.thin, |v| *v.get_ref()),
            seed: sampler.seed.unwrap_or(defaults.seed),
            sign_convention: sampler.sign_convention.unwrap_or(defaults.sign_convention),
            reproject_each_step: sampler.reproject.unwrap_or(defaults.reproject_each_step),
            max_drift: sampler.max_drift.as_ref().map_or(defaults.max_drift, |v| *v.get_ref()),
        };
        if let Err(e) = chain.validate() {
            let span = if chain.epsilon.is_nan() || chain.epsilon <= 0.0 || chain.epsilon.is_infinite() {
                sampler.epsilon.as_ref().map(|v| v.span())
            } else if chain.n_leapfrog == 0 {
                sampler.n_leapfrog.as_ref().map(|v| v.span())
            } else if chain.thin != 0 {
                sampler.max_drift.as_ref().map(|v| v.span())
            } else {
                sampler.thin.as_ref().map(|v| v.span())
            };
            return Err(ctx.wrap(&span.unwrap_or(sampler_span), e));
        }

        let initial = match &sampler.initial {
            None => manifold.base_point(),
            Some(v) => {
                let coords = match v.get_ref() {
                    Numbers::Vector(x) => DVector::from_column_slice(x),
                    Numbers::Rows(rows) => {
                        let m = rows_to_matrix(rows).map_err(|m| ctx.err(&v.span(), format!("initial: {m}")))?;
                        if m.shape() != (manifold.rows(), manifold.cols()) {
                            return Err(ctx.err(
                                &v.span(),
                                format!("initial must be {}x{}", manifold.rows(), manifold.cols()),
                            ));
                        }
                        DVector::from_column_slice(m.as_slice())
                    }
                };
                manifold.point(coords).map_err(|e| ctx.wrap(&v.span(), e))?
            }
        };

        let output = raw.output.unwrap_or_default();
        let n_chains = match &output.n_chains {
            None => 1,
            Some(n) if *n.get_ref() == 0 => return Err(ctx.err(&n.span(), "n_chains must be >= 1")),
            Some(n) => *n.get_ref(),
        };
        Ok(RunConfig {
            manifold,
            target,
            mass,
            chain,
            initial,
            output_dir: PathBuf::from(output.dir.unwrap_or_else(|| "geomc-output".into())),
            n_chains,
        })
    }
}

fn build_manifold(ctx: &Ctx, raw: &Spanned<RawManifold>) -> Result<Manifold, ConfigError> {
    let m = raw.get_ref();
    let d = *m.d.get_ref();
    match m.kind {
        ManifoldKind::Sphere => {
            if let Some(s) = &m.s {
                if *s.get_ref() != 1 {
                    return Err(ctx.err(&s.span(), "a sphere has s = 1"));
                }
            }
            Manifold::sphere(d).map_err(|e| ctx.wrap(&m.d.span(), e))
        }
        ManifoldKind::Stiefel => {
            let s =
                m.s.as_ref()
                    .ok_or_else(|| ctx.err(&raw.span(), "stiefel manifold needs `s`"))?;
            Manifold::stiefel(d, *s.get_ref()).map_err(|e| ctx.wrap(&s.span(), e))
        }
    }
}

fn build_target(ctx: &Ctx, manifold: Manifold, raw: &Spanned<RawTarget>) -> Result<Target, ConfigError> {
    let t = raw.get_ref();
    let missing = |name: &str| ctx.err(&raw.span(), format!("{:?} target needs `{name}`", t.family.get_ref()));
    let family = *t.family.get_ref();
    let stray: &[(&str, bool)] = match family {
        FamilyName::Uniform => &[
            ("kappa", t.kappa.is_some()),
            ("mu", t.mu.is_some()),
            ("c", t.c.is_some()),
            ("a", t.a.is_some()),
            ("b", t.b.is_some()),
        ],
        FamilyName::VonMisesFisher => &[("c", t.c.is_some()), ("a", t.a.is_some()), ("b", t.b.is_some())],
        FamilyName::BinghamVonMisesFisher => &[("kappa", t.kappa.is_some()), ("mu", t.mu.is_some())],
    };
    if let Some((name, _)) = stray.iter().find(|(_, present)| *present) {
        return Err(ctx.err(&raw.span(), format!("`{name}` does not apply to this target family")));
    }
    match family {
        FamilyName::Uniform => Ok(Target::uniform(manifold)),
        FamilyName::VonMisesFisher => {
            let kappa = t.kappa.as_ref().ok_or_else(|| missing("kappa"))?;
            let mu = t.mu.as_ref().ok_or_else(|| missing("mu"))?;
            if *kappa.get_ref() < 0.0 || !kappa.get_ref().is_finite() {
                return Err(ctx.err(&kappa.span(), "kappa must be finite and >= 0"));
            }
            let mu_v = DVector::from_column_slice(mu.get_ref());
            Target::von_mises_fisher(manifold, *kappa.get_ref(), mu_v).map_err(|e| ctx.wrap(&mu.span(), e))
        }
        FamilyName::BinghamVonMisesFisher => {
            let (d, s) = (manifold.rows(), manifold.cols());
            let c = match &t.c {
                None => DMatrix::zeros(d, s),
                Some(v) => match v.get_ref() {
                    // A plain vector is accepted for a single column.
                    Numbers::Vector(x) if s == 1 => DMatrix::from_column_slice(x.len(), 1, x),
                    _ => matrix_value(ctx, v, "c")?,
                },
            };
            let a = match &t.a {
                None => DMatrix::zeros(d, d),
                Some(v) => matrix_value(ctx, v, "a")?,
            };
            let b =
                t.b.as_ref()
                    .map_or_else(|| DVector::zeros(s), |v| DVector::from_column_slice(v.get_ref()));
            let span = [
                t.c.as_ref().map(|v| v.span()),
                t.a.as_ref().map(|v| v.span()),
                t.b.as_ref().map(|v| v.span()),
            ];
            Target::bingham_von_mises_fisher(manifold, c.clone(), a.clone(), b.clone()).map_err(|e| {
                let msg = e.to_string();
                let which = if msg.contains("C must") {
                    0
                } else if msg.contains("A must") {
                    1
                } else {
                    2
                };
                ctx.wrap(&span[which].clone().unwrap_or_else(|| raw.span()), e)
            })
        }
    }
}

fn build_mass(
    ctx: &Ctx,
    manifold: Manifold,
    raw: &Spanned<RawMass>,
    base_dir: &Path,
) -> Result<MassMatrix, ConfigError> {
    let m = raw.get_ref();
    let n = manifold.ambient_dim();
    let form = *m.form.get_ref();
    match (form, &m.values, &m.file) {
        (MassForm::Identity, None, None) => Ok(MassMatrix::Identity),
        (MassForm::Identity, _, _) => Err(ctx.err(&raw.span(), "identity mass takes no `values` or `file`")),
        (_, Some(_), Some(_)) => Err(ctx.err(&raw.span(), "give either `values` or `file`, not both")),
        (MassForm::Diagonal, Some(v), None) => {
            let Numbers::Vector(d) = v.get_ref() else {
                return Err(ctx.err(&v.span(), "diagonal mass `values` must be a flat array"));
            };
            if d.len() != n {
                return Err(ctx.err(
                    &v.span(),
                    format!("diagonal mass has {} entries, ambient dimension is {n}", d.len()),
                ));
            }
            MassMatrix::diagonal(DVector::from_column_slice(d)).map_err(|e| ctx.wrap(&v.span(), e))
        }
        (MassForm::Diagonal, None, Some(f)) => Err(ctx.err(&f.span(), "`file` is only supported for dense mass")),
        (MassForm::Dense, Some(v), None) => {
            let mat = matrix_value(ctx, v, "values")?;
            dense_mass(mat, n).map_err(|msg| ctx.err(&v.span(), msg))
        }
        (MassForm::Dense, None, Some(f)) => {
            let path = base_dir.join(f.get_ref());
            let mat = load_matrix_file(&path)?;
            dense_mass(mat, n).map_err(|msg| ConfigError {
                file: Some(path),
                line: None,
                message: msg,
            })
        }
        (_, None, None) => Err(ctx.err(&m.form.span(), "non-identity mass needs `values` or `file`")),
    }
}

fn dense_mass(mat: DMatrix<f64>, n: usize) -> Result<MassMatrix, String> {
    if mat.shape() != (n, n) {
        return Err(format!(
            "dense mass is {}x{}, ambient dimension is {n}",
            mat.nrows(),
            mat.ncols()
        ));
    }
    MassMatrix::dense(mat).map_err(|e| e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::target::Family;

    fn parse(src: &str) -> Result<RunConfig, ConfigError> {
        RunConfig::parse(src, None, Path::new("."))
    }

    const MINIMAL: &str = r#"
[manifold]
kind = "sphere"
d = 3

[target]
family = "uniform"
"#;

    #[test]
    fn minimal_config_uses_defaults() {
        let c = parse(MINIMAL).unwrap();
        assert_eq!(c.manifold, Manifold::sphere(3).unwrap());
        assert!(c.mass.is_identity());
        assert_eq!(c.chain, ChainConfig::default());
        assert_eq!(c.n_chains, 1);
        assert_eq!(c.initial, c.manifold.base_point());
    }

    #[test]
    fn full_stiefel_config() {
        let src = r#"
[manifold]
kind = "stiefel"
d = 4
s = 2

[target]
family = "bingham_von_mises_fisher"
c = [[1.0, 0.0], [0.0, 1.0], [0.0, 0.0], [0.0, 0.0]]
a = [[1.0, 0.0, 0.0, 0.0], [0.0, 0.5, 0.0, 0.0], [0.0, 0.0, 0.0, 0.0], [0.0, 0.0, 0.0, -0.5]]
b = [1.0, 0.5]

[mass]
form = "diagonal"
values = [1.0, 2.0, 1.0, 2.0, 1.0, 2.0, 1.0, 2.0]

[sampler]
variant = "momentum"
epsilon = 0.05
n_leapfrog = 20
n_samples = 10
n_burnin = 0
seed = 7
sign_convention = "gradient_consistent"
reproject = true

[output]
dir = "runs/a"
n_chains = 4
"#;
        let c = parse(src).unwrap();
        assert_eq!(c.manifold.ambient_dim(), 8);
        assert!(matches!(c.target.family(), Family::BinghamVonMisesFisher { .. }));
        assert!(matches!(c.mass, MassMatrix::Diagonal(_)));
        assert_eq!(c.chain.variant, Variant::Momentum);
        assert_eq!(c.chain.sign_convention, SignConvention::GradientConsistent);
        assert!(c.chain.reproject_each_step);
        assert_eq!(c.n_chains, 4);
        assert_eq!(c.output_dir, PathBuf::from("runs/a"));
    }

    fn error_line(src: &str) -> usize {
        parse(src).unwrap_err().line.expect("line-anchored")
    }

    #[test]
    fn syntax_errors_are_line_anchored() {
        let src = "[manifold]\nkind = \"sphere\"\nd = = 3\n";
        assert_eq!(error_line(src), 3);
    }

    #[test]
    fn semantic_errors_point_at_the_value() {
        let mu_wrong = format!("{MINIMAL}").replace(
            "family = \"uniform\"",
            "family = \"von_mises_fisher\"\nkappa = 1.0\nmu = [1.0, 0.0]",
        );
        assert_eq!(error_line(&mu_wrong), 9);

        let bad_kind = MINIMAL.replace("\"sphere\"", "\"torus\"");
        assert_eq!(error_line(&bad_kind), 3);

        let bad_eps = format!("{MINIMAL}\n[sampler]\nepsilon = -1.0\n");
        assert_eq!(error_line(&bad_eps), 10);

        let unknown = format!("{MINIMAL}\n[sampler]\nstep = 1\n");
        assert_eq!(error_line(&unknown), 10);

        let dense_bad = format!(
            "{MINIMAL}\n[mass]\nform = \"dense\"\nvalues = [[1.0, 2.0, 0.0], [2.0, 1.0, 0.0], [0.0, 0.0, 1.0]]\n"
        );
        let err = parse(&dense_bad).unwrap_err();
        assert_eq!(err.line, Some(11));
        assert!(err.message.contains("semi-definite"), "{}", err.message);

        let off_manifold = format!("{MINIMAL}\n[sampler]\ninitial = [1.0, 1.0, 0.0]\n");
        assert_eq!(error_line(&off_manifold), 10);
    }

    #[test]
    fn dense_mass_from_file() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("m.txt"), "# mass\n2 0 0\n0 1 0.5\n0 0.5 1\n").unwrap();
        let src = format!("{MINIMAL}\n[mass]\nform = \"dense\"\nfile = \"m.txt\"\n");
        let c = RunConfig::parse(&src, None, dir.path()).unwrap();
        let MassMatrix::Dense(op) = &c.mass else {
            panic!("expected dense mass")
        };
        assert_eq!(op.matrix()[(1, 2)], 0.5);

        std::fs::write(dir.path().join("m.txt"), "2 0 0\n0 1\n0 0 1\n").unwrap();
        let err = RunConfig::parse(&src, None, dir.path()).unwrap_err();
        assert_eq!(err.line, Some(2));
        assert!(err.file.unwrap().ends_with("m.txt"));
    }

    #[test]
    fn matrix_text_parsing() {
        let m = parse_matrix_text("1 2\n\n3 4\n").unwrap();
        assert_eq!(m, DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]));
        assert_eq!(parse_matrix_text("1 x\n").unwrap_err().0, 1);
        assert!(parse_matrix_text("").is_err());
    }

    #[test]
    fn display_includes_file_and_line() {
        let e = ConfigError {
            file: Some(PathBuf::from("run.toml")),
            line: Some(4),
            message: "bad".into(),
        };
        assert_eq!(e.to_string(), "run.toml:4: bad");
    }
}
