//! JSON interchange for problems and solutions.
//!
//! Matrices are row-major nested arrays. Output is canonical: object keys sorted,
//! floats in shortest round-trip form, one document per line, so
//! write → read → write is byte-identical.
#![allow(non_snake_case)]

use nalgebra::{DMatrix, DVector};
use serde_json::{Map, Value};

use crate::error::LqError;
use crate::problem::{InitialCondition, LqProblem, Solution, StageData, TerminalData};

pub const FORMAT_VERSION: u64 = 1;

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("malformed JSON: {0}")]
    Syntax(#[from] serde_json::Error),
    #[error("{location}: {message}")]
    Invalid { location: String, message: String },
    #[error(transparent)]
    Problem(#[from] LqError),
}

fn invalid(location: impl Into<String>, message: impl Into<String>) -> FormatError {
    FormatError::Invalid {
        location: location.into(),
        message: message.into(),
    }
}

/// A problem together with the optional proximal parameter stored next to it.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemFile {
    pub problem: LqProblem,
    pub mu: Option<f64>,
}

fn mat_json(m: &DMatrix<f64>) -> Value {
    Value::Array(
        m.row_iter()
            .map(|r| Value::Array(r.iter().map(|&v| Value::from(v)).collect()))
            .collect(),
    )
}

fn vec_json(v: &DVector<f64>) -> Value {
    Value::Array(v.iter().map(|&x| Value::from(x)).collect())
}

fn obj(pairs: Vec<(&str, Value)>) -> Value {
    Value::Object(pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect::<Map<_, _>>())
}

fn finite_check(p: &LqProblem) -> Result<(), FormatError> {
    let d = p.data_norm();
    if d.is_finite() {
        Ok(())
    } else {
        Err(invalid("problem", "non-finite entries cannot be written"))
    }
}

pub fn problem_to_value(file: &ProblemFile) -> Value {
    let p = &file.problem;
    let stages = p
        .stages
        .iter()
        .map(|s| {
            let mut v = vec![
                ("Q", mat_json(&s.Q)),
                ("S", mat_json(&s.S)),
                ("R", mat_json(&s.R)),
                ("q", vec_json(&s.q)),
                ("r", vec_json(&s.r)),
                ("A", mat_json(&s.A)),
                ("B", mat_json(&s.B)),
                ("E", mat_json(&s.E)),
                ("f", vec_json(&s.f)),
            ];
            if s.nc() > 0 {
                v.push(("C", mat_json(&s.C)));
                v.push(("D", mat_json(&s.D)));
                v.push(("h", vec_json(&s.h)));
            }
            obj(v)
        })
        .collect();
    let mut term = vec![("Q", mat_json(&p.terminal.Q)), ("q", vec_json(&p.terminal.q))];
    if p.terminal.nc() > 0 {
        term.push(("C", mat_json(&p.terminal.C)));
        term.push(("h", vec_json(&p.terminal.h)));
    }
    let init = match &p.init {
        InitialCondition::Fixed(x0) => obj(vec![("mode", "fixed".into()), ("x0", vec_json(x0))]),
        InitialCondition::Constrained { G, g } => obj(vec![
            ("mode", "constrained".into()),
            ("G", mat_json(G)),
            ("g", vec_json(g)),
        ]),
        InitialCondition::Cyclic => obj(vec![("mode", "cyclic".into())]),
    };
    let mut top = vec![
        ("version", Value::from(FORMAT_VERSION)),
        ("nx", Value::from(p.nx)),
        ("nu", Value::from(p.nu)),
        ("N", Value::from(p.horizon())),
        ("init", init),
        ("stages", Value::Array(stages)),
        ("terminal", obj(term)),
    ];
    if let Some(mu) = file.mu {
        top.push(("mu", Value::from(mu)));
    }
    obj(top)
}

/// Canonical text form.
pub fn write_problem(file: &ProblemFile) -> Result<String, FormatError> {
    finite_check(&file.problem)?;
    Ok(serde_json::to_string(&problem_to_value(file))? + "\n")
}

struct Cursor<'a> {
    v: &'a Map<String, Value>,
    loc: String,
}

impl<'a> Cursor<'a> {
    fn new(v: &'a Value, loc: impl Into<String>) -> Result<Self, FormatError> {
        let loc = loc.into();
        match v {
            Value::Object(m) => Ok(Cursor { v: m, loc }),
            _ => Err(invalid(loc, "expected an object")),
        }
    }

    fn at(&self, key: &str) -> String {
        if self.loc.is_empty() {
            key.to_string()
        } else {
            format!("{}.{key}", self.loc)
        }
    }

    fn get(&self, key: &str) -> Result<&'a Value, FormatError> {
        self.v
            .get(key)
            .ok_or_else(|| invalid(self.loc_or_root(), format!("missing key `{key}`")))
    }

    fn loc_or_root(&self) -> String {
        if self.loc.is_empty() {
            "<root>".into()
        } else {
            self.loc.clone()
        }
    }

    fn opt(&self, key: &str) -> Option<&'a Value> {
        self.v.get(key)
    }

    fn usize(&self, key: &str) -> Result<usize, FormatError> {
        self.get(key)?
            .as_u64()
            .map(|v| v as usize)
            .ok_or_else(|| invalid(self.at(key), "expected a nonnegative integer"))
    }

    fn f64(&self, key: &str) -> Result<f64, FormatError> {
        num(self.get(key)?, &self.at(key))
    }

    fn mat(&self, key: &str, rows: Option<usize>, cols: usize) -> Result<DMatrix<f64>, FormatError> {
        parse_mat(self.get(key)?, &self.at(key), rows, cols)
    }

    fn vec(&self, key: &str, len: Option<usize>) -> Result<DVector<f64>, FormatError> {
        parse_vec(self.get(key)?, &self.at(key), len)
    }

    fn str(&self, key: &str) -> Result<&'a str, FormatError> {
        self.get(key)?
            .as_str()
            .ok_or_else(|| invalid(self.at(key), "expected a string"))
    }
}

fn num(v: &Value, loc: &str) -> Result<f64, FormatError> {
    v.as_f64()
        .filter(|x| x.is_finite())
        .ok_or_else(|| invalid(loc, "expected a finite number"))
}

fn parse_vec(v: &Value, loc: &str, len: Option<usize>) -> Result<DVector<f64>, FormatError> {
    let arr = v.as_array().ok_or_else(|| invalid(loc, "expected an array of numbers"))?;
    if let Some(n) = len {
        if arr.len() != n {
            return Err(invalid(loc, format!("expected length {n}, found {}", arr.len())));
        }
    }
    let xs = arr
        .iter()
        .enumerate()
        .map(|(i, x)| num(x, &format!("{loc}[{i}]")))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(DVector::from_vec(xs))
}

fn parse_mat(v: &Value, loc: &str, rows: Option<usize>, cols: usize) -> Result<DMatrix<f64>, FormatError> {
    let arr = v.as_array().ok_or_else(|| invalid(loc, "expected an array of rows"))?;
    if let Some(r) = rows {
        if arr.len() != r {
            return Err(invalid(loc, format!("expected {r} rows, found {}", arr.len())));
        }
    }
    let mut m = DMatrix::zeros(arr.len(), cols);
    for (i, row) in arr.iter().enumerate() {
        let r = parse_vec(row, &format!("{loc}[{i}]"), Some(cols))?;
        m.row_mut(i).copy_from(&r.transpose());
    }
    Ok(m)
}

/// Parses a problem document.
pub fn read_problem(text: &str) -> Result<ProblemFile, FormatError> {
    let root: Value = serde_json::from_str(text)?;
    let c = Cursor::new(&root, "")?;
    let version = c.usize("version")?;
    if version as u64 != FORMAT_VERSION {
        return Err(invalid("version", format!("unsupported version {version}")));
    }
    let nx = c.usize("nx")?;
    let nu = c.usize("nu")?;
    let n = c.usize("N")?;
    if nx == 0 || nu == 0 || n == 0 {
        return Err(invalid("<root>", "nx, nu and N must be positive"));
    }
    let mu = match c.opt("mu") {
        Some(v) => Some(num(v, "mu")?),
        None => None,
    };
    let stages_v = c
        .get("stages")?
        .as_array()
        .ok_or_else(|| invalid("stages", "expected an array"))?;
    if stages_v.len() != n {
        return Err(invalid("stages", format!("expected N = {n} stages, found {}", stages_v.len())));
    }
    let mut stages = Vec::with_capacity(n);
    for (t, sv) in stages_v.iter().enumerate() {
        let s = Cursor::new(sv, format!("stages[{t}]"))?;
        let has_c = s.opt("C").is_some() || s.opt("D").is_some() || s.opt("h").is_some();
        let (C, D, h) = if has_c {
            let C = s.mat("C", None, nx)?;
            let nc = C.nrows();
            (C, s.mat("D", Some(nc), nu)?, s.vec("h", Some(nc))?)
        } else {
            (DMatrix::zeros(0, nx), DMatrix::zeros(0, nu), DVector::zeros(0))
        };
        stages.push(StageData {
            Q: s.mat("Q", Some(nx), nx)?,
            S: s.mat("S", Some(nx), nu)?,
            R: s.mat("R", Some(nu), nu)?,
            q: s.vec("q", Some(nx))?,
            r: s.vec("r", Some(nu))?,
            A: s.mat("A", Some(nx), nx)?,
            B: s.mat("B", Some(nx), nu)?,
            E: s.mat("E", Some(nx), nx)?,
            f: s.vec("f", Some(nx))?,
            C,
            D,
            h,
        });
    }
    let tc = Cursor::new(c.get("terminal")?, "terminal")?;
    let (C, h) = if tc.opt("C").is_some() || tc.opt("h").is_some() {
        let C = tc.mat("C", None, nx)?;
        let nc = C.nrows();
        (C, tc.vec("h", Some(nc))?)
    } else {
        (DMatrix::zeros(0, nx), DVector::zeros(0))
    };
    let terminal = TerminalData {
        Q: tc.mat("Q", Some(nx), nx)?,
        q: tc.vec("q", Some(nx))?,
        C,
        h,
    };
    let ic = Cursor::new(c.get("init")?, "init")?;
    let init = match ic.str("mode")? {
        "fixed" => InitialCondition::Fixed(ic.vec("x0", Some(nx))?),
        "constrained" => {
            let G = ic.mat("G", None, nx)?;
            if G.nrows() == 0 {
                return Err(invalid("init.G", "expected at least one row"));
            }
            let g = ic.vec("g", Some(G.nrows()))?;
            InitialCondition::Constrained { G, g }
        }
        "cyclic" => InitialCondition::Cyclic,
        other => {
            return Err(invalid(
                "init.mode",
                format!("unknown mode `{other}` (expected fixed, constrained or cyclic)"),
            ))
        }
    };
    let problem = LqProblem::new(nx, nu, stages, terminal, init)?;
    Ok(ProblemFile { problem, mu })
}

/// A solution plus how it was obtained: `exact` solutions are checked against the
/// unregularized conditions, others against the proximal ones at `mu` with zero
/// multiplier estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionFile {
    pub solution: Solution,
    pub mu: f64,
    pub exact: bool,
}

pub fn write_solution(file: &SolutionFile) -> Result<String, FormatError> {
    let s = &file.solution;
    let finite = s.blocks().all(|b| b.iter().all(|v| v.is_finite()));
    if !finite || !file.mu.is_finite() {
        return Err(invalid("solution", "non-finite entries cannot be written"));
    }
    let list = |vs: &[DVector<f64>]| Value::Array(vs.iter().map(vec_json).collect());
    let mut top = vec![
        ("version", Value::from(FORMAT_VERSION)),
        ("mu", Value::from(file.mu)),
        ("exact", Value::from(file.exact)),
        ("x", list(&s.x)),
        ("u", list(&s.u)),
        ("lam", list(&s.lam)),
        ("nu", list(&s.nu)),
    ];
    if let Some(th) = &s.theta {
        top.push(("theta", vec_json(th)));
    }
    Ok(serde_json::to_string(&obj(top))? + "\n")
}

pub fn read_solution(text: &str) -> Result<SolutionFile, FormatError> {
    let root: Value = serde_json::from_str(text)?;
    let c = Cursor::new(&root, "")?;
    let version = c.usize("version")?;
    if version as u64 != FORMAT_VERSION {
        return Err(invalid("version", format!("unsupported version {version}")));
    }
    let list = |key: &str| -> Result<Vec<DVector<f64>>, FormatError> {
        let arr = c
            .get(key)?
            .as_array()
            .ok_or_else(|| invalid(key, "expected an array of vectors"))?;
        arr.iter()
            .enumerate()
            .map(|(i, v)| parse_vec(v, &format!("{key}[{i}]"), None))
            .collect()
    };
    let theta = match c.opt("theta") {
        Some(v) => Some(parse_vec(v, "theta", None)?),
        None => None,
    };
    let exact = c
        .get("exact")?
        .as_bool()
        .ok_or_else(|| invalid("exact", "expected a boolean"))?;
    Ok(SolutionFile {
        solution: Solution {
            x: list("x")?,
            u: list("u")?,
            lam: list("lam")?,
            nu: list("nu")?,
            theta,
        },
        mu: c.f64("mu")?,
        exact,
    })
}
