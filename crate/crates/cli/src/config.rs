//! Block-structured problem configuration.
//!
//! A config file is a sequence of named blocks:
//!
//! ```text
//! # torsion on the unit disk
//! [nfunction M]
//! family = power
//! dimension = 2
//! p = 2
//! coeff = 0.5
//!
//! [graph A]
//! kind = identity
//! dimension = 2
//! c_A = 1
//! m = 0
//! nfunction = M
//! strictly_monotone = true
//!
//! [problem torsion]
//! domain = disk 1
//! h = 0.015625
//! graph = A
//! f = 1
//! eps = 1, 0.1
//! ```
//!
//! Lines are `key = value`; `#` starts a comment. Coefficient fields and
//! data are expressions in the grammar of `ellinc_core::expr` (variables
//! `x1..xd` for the domain point, `xi1..xid` for the vector argument).
//! Parse errors carry the line and column. Overrides of the form
//! `BLOCK.key=value` replace or insert a key before anything is built.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Arc;

use ellinc_core::expr::Expr;
use ellinc_core::fem::Datum;
use ellinc_core::monotone::{CoercivityWitness, Curve1d, MonotoneGraph};
use ellinc_core::nfunc::{ConditionFlags, NFunction};
use ellinc_core::solver::{Domain, NewtonCfg, ProblemSpec};

/// Configuration error with a source position when one is known.
#[derive(Debug)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub col: Option<usize>,
    pub message: String,
}

impl ConfigError {
    fn at(line: usize, message: impl Into<String>) -> Self {
        ConfigError { line: Some(line), col: None, message: message.into() }
    }

    fn plain(message: impl Into<String>) -> Self {
        ConfigError { line: None, col: None, message: message.into() }
    }
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match (self.line, self.col) {
            (Some(l), Some(c)) => write!(f, "{l}:{c}: {}", self.message),
            (Some(l), None) => write!(f, "line {l}: {}", self.message),
            _ => write!(f, "{}", self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

pub type ConfigResult<T> = Result<T, ConfigError>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BlockKind {
    NFunction,
    Graph,
    Problem,
}

#[derive(Debug, Clone)]
pub struct Block {
    pub kind: BlockKind,
    pub name: String,
    pub header_line: usize,
    /// insertion-ordered key/value pairs with their source lines
    pub entries: Vec<(String, String, usize)>,
}

impl Block {
    pub fn get(&self, key: &str) -> Option<(&str, usize)> {
        self.entries
            .iter()
            .rev()
            .find(|(k, _, _)| k == key)
            .map(|(_, v, l)| (v.as_str(), *l))
    }

    fn require(&self, key: &str) -> ConfigResult<(&str, usize)> {
        self.get(key).ok_or_else(|| {
            ConfigError::at(
                self.header_line,
                format!("block [{}] is missing the '{key}' key", self.name),
            )
        })
    }

    fn f64_opt(&self, key: &str) -> ConfigResult<Option<f64>> {
        match self.get(key) {
            None => Ok(None),
            Some((v, line)) => v
                .trim()
                .parse::<f64>()
                .map(Some)
                .map_err(|_| ConfigError::at(line, format!("'{key}' must be a number, got '{v}'"))),
        }
    }

    fn f64_or(&self, key: &str, default: f64) -> ConfigResult<f64> {
        Ok(self.f64_opt(key)?.unwrap_or(default))
    }

    fn f64_req(&self, key: &str) -> ConfigResult<f64> {
        let (v, line) = self.require(key)?;
        v.trim()
            .parse::<f64>()
            .map_err(|_| ConfigError::at(line, format!("'{key}' must be a number, got '{v}'")))
    }

    fn usize_or(&self, key: &str, default: usize) -> ConfigResult<usize> {
        match self.get(key) {
            None => Ok(default),
            Some((v, line)) => v
                .trim()
                .parse::<usize>()
                .map_err(|_| ConfigError::at(line, format!("'{key}' must be an integer, got '{v}'"))),
        }
    }

    fn bool_or(&self, key: &str, default: bool) -> ConfigResult<bool> {
        match self.get(key) {
            None => Ok(default),
            Some((v, line)) => match v.trim() {
                "true" | "yes" | "1" => Ok(true),
                "false" | "no" | "0" => Ok(false),
                other => Err(ConfigError::at(line, format!("'{key}' must be a boolean, got '{other}'"))),
            },
        }
    }

    fn floats_opt(&self, key: &str) -> ConfigResult<Option<Vec<f64>>> {
        match self.get(key) {
            None => Ok(None),
            Some((v, line)) => {
                let mut out = Vec::new();
                for part in v.split(',') {
                    let part = part.trim();
                    if part.is_empty() {
                        continue;
                    }
                    out.push(part.parse::<f64>().map_err(|_| {
                        ConfigError::at(line, format!("'{key}' entry '{part}' is not a number"))
                    })?);
                }
                Ok(Some(out))
            }
        }
    }

    fn expr_opt(&self, key: &str) -> ConfigResult<Option<Expr>> {
        match self.get(key) {
            None => Ok(None),
            Some((v, line)) => {
                let e = Expr::parse_at(v, line, 1).map_err(|e| ConfigError {
                    line: Some(e.line),
                    col: Some(e.col),
                    message: format!("in '{key}': {}", e.message),
                })?;
                Ok(Some(e))
            }
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Config {
    pub blocks: Vec<Block>,
}

impl Config {
    pub fn parse(text: &str) -> ConfigResult<Config> {
        let mut blocks: Vec<Block> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = match raw.find('#') {
                Some(p) => &raw[..p],
                None => raw,
            };
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let Some(body) = rest.strip_suffix(']') else {
                    return Err(ConfigError::at(lineno, "unterminated block header"));
                };
                let mut parts = body.split_whitespace();
                let kind = match parts.next() {
                    Some("nfunction") => BlockKind::NFunction,
                    Some("graph") => BlockKind::Graph,
                    Some("problem") => BlockKind::Problem,
                    Some(other) => {
                        return Err(ConfigError::at(
                            lineno,
                            format!("unknown block kind '{other}' (expected nfunction|graph|problem)"),
                        ))
                    }
                    None => return Err(ConfigError::at(lineno, "empty block header")),
                };
                let Some(name) = parts.next() else {
                    return Err(ConfigError::at(lineno, "block header needs a name"));
                };
                if parts.next().is_some() {
                    return Err(ConfigError::at(lineno, "block header has trailing tokens"));
                }
                if blocks.iter().any(|b| b.name == name) {
                    return Err(ConfigError::at(lineno, format!("duplicate block name '{name}'")));
                }
                blocks.push(Block {
                    kind,
                    name: name.to_string(),
                    header_line: lineno,
                    entries: Vec::new(),
                });
                continue;
            }
            let Some(eq) = line.find('=') else {
                return Err(ConfigError::at(lineno, "expected 'key = value'"));
            };
            let key = line[..eq].trim().to_string();
            let value = line[eq + 1..].trim().to_string();
            if key.is_empty() {
                return Err(ConfigError::at(lineno, "empty key"));
            }
            let Some(block) = blocks.last_mut() else {
                return Err(ConfigError::at(lineno, "key/value pair outside of any block"));
            };
            block.entries.push((key, value, lineno));
        }
        Ok(Config { blocks })
    }

    /// Apply `BLOCK.key=value` overrides.
    pub fn apply_overrides(&mut self, overrides: &[String]) -> ConfigResult<()> {
        for ov in overrides {
            let Some(eq) = ov.find('=') else {
                return Err(ConfigError::plain(format!("override '{ov}' is not KEY=VALUE")));
            };
            let (path, value) = (ov[..eq].trim(), ov[eq + 1..].trim());
            let Some(dot) = path.find('.') else {
                return Err(ConfigError::plain(format!(
                    "override key '{path}' must be BLOCK.key"
                )));
            };
            let (bname, key) = (&path[..dot], &path[dot + 1..]);
            let Some(block) = self.blocks.iter_mut().find(|b| b.name == bname) else {
                return Err(ConfigError::plain(format!("override references unknown block '{bname}'")));
            };
            let line = block.header_line;
            if let Some(entry) = block.entries.iter_mut().find(|(k, _, _)| k == key) {
                entry.1 = value.to_string();
            } else {
                block.entries.push((key.to_string(), value.to_string(), line));
            }
        }
        Ok(())
    }

    /// Canonical re-serialization; parsing the echo reproduces the config.
    pub fn echo(&self) -> String {
        let mut out = String::new();
        for b in &self.blocks {
            let kind = match b.kind {
                BlockKind::NFunction => "nfunction",
                BlockKind::Graph => "graph",
                BlockKind::Problem => "problem",
            };
            let _ = writeln!(out, "[{kind} {}]", b.name);
            for (k, v, _) in &b.entries {
                let _ = writeln!(out, "{k} = {v}");
            }
            let _ = writeln!(out);
        }
        out
    }

    pub fn first_of(&self, kind: BlockKind) -> Option<&Block> {
        self.blocks.iter().find(|b| b.kind == kind)
    }

    pub fn by_name(&self, kind: BlockKind, name: &str) -> Option<&Block> {
        self.blocks.iter().find(|b| b.kind == kind && b.name == name)
    }
}

/// Build an N-function from its block.
pub fn build_nfunction(block: &Block) -> ConfigResult<NFunction> {
    let (family, fline) = block.require("family")?;
    let dim = block.usize_or("dimension", 1)?;
    if dim == 0 || dim > 3 {
        return Err(ConfigError::at(block.header_line, "dimension must be 1, 2, or 3"));
    }
    let flags = ConditionFlags {
        c1: block.bool_or("c1", false)?,
        c2: block.bool_or("c2", false)?,
    };
    let nf = match family.trim() {
        "power" => {
            let p = block.f64_req("p")?;
            let coeff = block.f64_or("coeff", 1.0)?;
            if !(p > 1.0) || !(coeff > 0.0) {
                return Err(ConfigError::at(fline, "power family needs p > 1 and coeff > 0"));
            }
            NFunction::power(dim, p, coeff)
        }
        "variable_exponent" => {
            let e = block
                .expr_opt("p_expr")?
                .ok_or_else(|| ConfigError::at(fline, "variable_exponent needs 'p_expr'"))?;
            NFunction::variable_exponent(dim, Arc::new(move |x: &[f64]| e.eval_x(x)))
        }
        "double_phase" => {
            let p = block.f64_req("p")?;
            let q = block.f64_req("q")?;
            let a = block
                .expr_opt("a")?
                .ok_or_else(|| ConfigError::at(fline, "double_phase needs the weight expression 'a'"))?;
            NFunction::double_phase(dim, p, q, Arc::new(move |x: &[f64]| a.eval_x(x)))
        }
        "llogl" => NFunction::l_log_l(dim),
        "exponential" => NFunction::exponential(dim),
        "anisotropic_sum" => {
            let powers = block
                .floats_opt("powers")?
                .ok_or_else(|| ConfigError::at(fline, "anisotropic_sum needs 'powers'"))?;
            let coeffs = block
                .floats_opt("coeffs")?
                .unwrap_or_else(|| vec![1.0; powers.len()]);
            if powers.len() != dim || coeffs.len() != dim {
                return Err(ConfigError::at(fline, "powers/coeffs length must equal dimension"));
            }
            NFunction::anisotropic_sum(powers.into_iter().zip(coeffs).collect())
        }
        "custom" => {
            let e = block
                .expr_opt("expr")?
                .ok_or_else(|| ConfigError::at(fline, "custom family needs 'expr'"))?;
            if e.max_xi() > dim {
                return Err(ConfigError::at(fline, "expression references xi beyond the dimension"));
            }
            let homogeneous = e.max_x() == 0;
            NFunction::custom(dim, "config", homogeneous, move |x: &[f64], xi: &[f64]| {
                e.eval(x, xi)
            })
        }
        other => {
            return Err(ConfigError::at(fline, format!("unknown N-function family '{other}'")))
        }
    };
    Ok(nf.with_flags(flags))
}

/// Build a graph from its block; the coercivity witness is attached when
/// the block carries `c_A`, `m`, and `nfunction`.
pub fn build_graph(block: &Block, nfuncs: &BTreeMap<String, Arc<NFunction>>) -> ConfigResult<MonotoneGraph> {
    let (kind, kline) = block.require("kind")?;
    let dim = block.usize_or("dimension", 1)?;
    let mut graph = match kind.trim() {
        "identity" => MonotoneGraph::identity(dim),
        "linear" => MonotoneGraph::linear(dim, block.f64_or("slope", 1.0)?),
        "sign" => MonotoneGraph::sign(dim),
        "identity_plus_sign" => MonotoneGraph::identity_plus_sign(dim),
        "power_law" | "potential" => {
            let p = block.f64_req("p")?;
            let coeff = block.f64_or("coeff", 1.0)?;
            if !(p > 1.0) || !(coeff > 0.0) {
                return Err(ConfigError::at(kline, "potential graphs need p > 1 and coeff > 0"));
            }
            MonotoneGraph::power_law(dim, p, coeff)
        }
        "curve" => {
            let (rows, rline) = block.require("breakpoints")?;
            let mut pts = Vec::new();
            for row in rows.split(';') {
                let row = row.trim();
                if row.is_empty() {
                    continue;
                }
                let nums: Vec<f64> = row
                    .split_whitespace()
                    .map(|t| {
                        t.parse::<f64>().map_err(|_| {
                            ConfigError::at(rline, format!("breakpoint entry '{t}' is not a number"))
                        })
                    })
                    .collect::<ConfigResult<_>>()?;
                if nums.len() != 3 {
                    return Err(ConfigError::at(rline, "each breakpoint row is 'xi eta_lo eta_hi'"));
                }
                pts.push((nums[0], nums[1], nums[2]));
            }
            let left = block.f64_or("left_slope", 0.0)?;
            let right = block.f64_or("right_slope", 0.0)?;
            let radial = block.bool_or("radial", dim > 1)?;
            let curve = Curve1d::new(&pts, left, right)
                .map_err(|e| ConfigError::at(rline, format!("invalid curve: {e}")))?;
            MonotoneGraph::curve(dim, curve, radial)
                .map_err(|e| ConfigError::at(rline, format!("invalid curve: {e}")))?
        }
        "single_valued" => {
            let (raw, eline) = block.require("expr")?;
            let mut comps = Vec::new();
            for part in raw.split(',') {
                let e = Expr::parse_at(part.trim(), eline, 1).map_err(|e| ConfigError {
                    line: Some(e.line),
                    col: Some(e.col),
                    message: format!("in 'expr': {}", e.message),
                })?;
                comps.push(e);
            }
            if comps.len() != dim {
                return Err(ConfigError::at(eline, format!(
                    "single_valued graphs need {dim} component expressions, got {}",
                    comps.len()
                )));
            }
            MonotoneGraph::single_valued(dim, move |x: &[f64], xi: &[f64]| {
                comps.iter().map(|e| e.eval(x, xi)).collect()
            })
        }
        other => return Err(ConfigError::at(kline, format!("unknown graph kind '{other}'"))),
    };
    if block.bool_or("strictly_monotone", false)? {
        graph = graph.mark_strictly_monotone(true);
    }
    if let Some(c_a) = block.f64_opt("c_A")? {
        let (nf_name, nline) = block.require("nfunction")?;
        let growth = nfuncs
            .get(nf_name.trim())
            .ok_or_else(|| ConfigError::at(nline, format!("unknown nfunction block '{nf_name}'")))?
            .clone();
        let m_expr = block.expr_opt("m")?;
        let witness = match m_expr {
            Some(e) => CoercivityWitness::new(c_a, move |x: &[f64]| e.eval_x(x), growth),
            None => CoercivityWitness::new(c_a, |_x| 0.0, growth),
        }
        .map_err(|e| ConfigError::at(block.header_line, e.to_string()))?;
        graph = graph.with_witness(witness);
    }
    Ok(graph)
}

/// Extra per-problem settings outside the core spec.
#[derive(Debug, Clone)]
pub struct ProblemExtras {
    /// bound-evaluator knob; defaults per the witness offset when absent
    pub lambda: Option<f64>,
    /// run the cross-scheme agreement diagnostic
    pub crosscheck: bool,
}

/// Build the problem from its block, resolving graph and growth references.
pub fn build_problem(
    block: &Block,
    nfuncs: &BTreeMap<String, Arc<NFunction>>,
    graphs: &BTreeMap<String, MonotoneGraph>,
) -> ConfigResult<(ProblemSpec, ProblemExtras)> {
    let (dspec, dline) = block.require("domain")?;
    let toks: Vec<&str> = dspec.split_whitespace().collect();
    let parse_num = |t: &str| {
        t.parse::<f64>()
            .map_err(|_| ConfigError::at(dline, format!("domain parameter '{t}' is not a number")))
    };
    let domain = match toks.as_slice() {
        ["interval", a, b] => Domain::Interval { a: parse_num(a)?, b: parse_num(b)? },
        ["rectangle", ax, bx, ay, by] => Domain::Rectangle {
            ax: parse_num(ax)?,
            bx: parse_num(bx)?,
            ay: parse_num(ay)?,
            by: parse_num(by)?,
        },
        ["disk", r] => Domain::Disk { radius: parse_num(r)? },
        _ => {
            return Err(ConfigError::at(
                dline,
                "domain must be 'interval a b', 'rectangle ax bx ay by', or 'disk r'",
            ))
        }
    };
    let h = block.f64_req("h")?;
    let (gname, gline) = block.require("graph")?;
    let graph = graphs
        .get(gname.trim())
        .ok_or_else(|| ConfigError::at(gline, format!("unknown graph block '{gname}'")))?
        .clone();
    let growth = match block.get("nfunction") {
        Some((name, line)) => nfuncs
            .get(name.trim())
            .ok_or_else(|| ConfigError::at(line, format!("unknown nfunction block '{name}'")))?
            .clone(),
        None => graph
            .witness()
            .map(|w| w.growth.clone())
            .ok_or_else(|| {
                ConfigError::at(
                    block.header_line,
                    "problem needs 'nfunction' or a graph with a witness",
                )
            })?,
    };
    let f_expr = block
        .expr_opt("f")?
        .ok_or_else(|| ConfigError::at(block.header_line, "problem needs the datum 'f'"))?;
    if f_expr.max_x() > domain.dim() {
        return Err(ConfigError::at(
            block.header_line,
            "datum references coordinates beyond the domain dimension",
        ));
    }
    let mut datum = Datum::from_fn(move |x: &[f64]| f_expr.eval_x(x));
    if let Some((pts, pline)) = block.get("f_singular_at") {
        let mut singular = Vec::new();
        for row in pts.split(';') {
            let row = row.trim();
            if row.is_empty() {
                continue;
            }
            let coords: Vec<f64> = row
                .split_whitespace()
                .map(|t| {
                    t.parse::<f64>().map_err(|_| {
                        ConfigError::at(pline, format!("singular point entry '{t}' is not a number"))
                    })
                })
                .collect::<ConfigResult<_>>()?;
            if coords.len() != domain.dim() {
                return Err(ConfigError::at(pline, "singular point dimension mismatch"));
            }
            singular.push(coords);
        }
        datum = datum.with_singularities(singular);
    }
    let mut spec = ProblemSpec::new(domain, h, graph, growth, datum);
    if let Some(eps) = block.floats_opt("eps")? {
        if eps.is_empty() {
            return Err(ConfigError::at(block.header_line, "eps schedule is empty"));
        }
        spec.eps_schedule = eps;
    }
    if let Some(ks) = block.floats_opt("trunc_levels")? {
        spec.trunc_levels = ks;
    }
    spec.moll_order = block.usize_or("moll_order", 8)?;
    spec.newton = NewtonCfg {
        tol: block.f64_opt("newton_tol")?,
        max_outer: block.usize_or("max_outer", 50)?,
        picard_sweeps: block.usize_or("picard_sweeps", 200)?,
    };
    if let Some(de) = block.f64_opt("datum_eps")? {
        spec.datum_eps_override = Some(de);
    }
    spec.seed = block.usize_or("seed", 42)? as u64;
    let extras = ProblemExtras {
        lambda: block.f64_opt("lambda")?,
        crosscheck: block.bool_or("crosscheck", false)?,
    };
    Ok((spec, extras))
}

/// Resolve every block of a config into built objects.
pub struct Built {
    pub nfuncs: BTreeMap<String, Arc<NFunction>>,
    pub graphs: BTreeMap<String, MonotoneGraph>,
    pub problems: Vec<(String, ProblemSpec, ProblemExtras)>,
}

pub fn build_all(config: &Config) -> ConfigResult<Built> {
    let mut nfuncs = BTreeMap::new();
    for b in config.blocks.iter().filter(|b| b.kind == BlockKind::NFunction) {
        nfuncs.insert(b.name.clone(), Arc::new(build_nfunction(b)?));
    }
    let mut graphs = BTreeMap::new();
    for b in config.blocks.iter().filter(|b| b.kind == BlockKind::Graph) {
        graphs.insert(b.name.clone(), build_graph(b, &nfuncs)?);
    }
    let mut problems = Vec::new();
    for b in config.blocks.iter().filter(|b| b.kind == BlockKind::Problem) {
        let (spec, extras) = build_problem(b, &nfuncs, &graphs)?;
        problems.push((b.name.clone(), spec, extras));
    }
    Ok(Built { nfuncs, graphs, problems })
}

#[cfg(test)]
mod tests {
    use super::*;

    const TORSION: &str = "\
# unit-disk torsion
[nfunction M]
family = power
dimension = 2
p = 2
coeff = 0.5

[graph A]
kind = identity
dimension = 2
c_A = 1
m = 0
nfunction = M
strictly_monotone = true

[problem torsion]
domain = disk 1
h = 0.125
graph = A
f = 1
eps = 1, 0.1
";

    #[test]
    fn parses_and_builds_torsion() {
        let cfg = Config::parse(TORSION).unwrap();
        assert_eq!(cfg.blocks.len(), 3);
        let built = build_all(&cfg).unwrap();
        assert_eq!(built.problems.len(), 1);
        let (_, spec, _) = &built.problems[0];
        assert_eq!(spec.eps_schedule, vec![1.0, 0.1]);
        assert!(spec.graph.witness().is_some());
    }

    #[test]
    fn echo_reparses_identically() {
        let mut cfg = Config::parse(TORSION).unwrap();
        cfg.apply_overrides(&["torsion.h=0.25".to_string(), "torsion.seed=7".to_string()])
            .unwrap();
        let echo = cfg.echo();
        let cfg2 = Config::parse(&echo).unwrap();
        assert_eq!(cfg2.echo(), echo);
        let built = build_all(&cfg2).unwrap();
        assert_eq!(built.problems[0].1.h, 0.25);
        assert_eq!(built.problems[0].1.seed, 7);
    }

    #[test]
    fn errors_carry_lines() {
        let err = Config::parse("[problem p]\ndomain disk 1\n").unwrap_err();
        assert_eq!(err.line, Some(2));
        let err = Config::parse("key = 1\n").unwrap_err();
        assert_eq!(err.line, Some(1));
        let cfg = Config::parse("[nfunction M]\nfamily = custom\nexpr = xi1 +* 2\n").unwrap();
        let err = build_nfunction(cfg.first_of(BlockKind::NFunction).unwrap()).unwrap_err();
        assert_eq!(err.line, Some(3));
        assert!(err.col.is_some());
    }

    #[test]
    fn rejects_unknown_family_and_missing_refs() {
        let cfg = Config::parse("[nfunction M]\nfamily = frobnicate\n").unwrap();
        assert!(build_nfunction(cfg.first_of(BlockKind::NFunction).unwrap()).is_err());
        let cfg = Config::parse("[graph A]\nkind = identity\nc_A = 1\nnfunction = missing\n").unwrap();
        let err = build_graph(cfg.first_of(BlockKind::Graph).unwrap(), &BTreeMap::new());
        assert!(err.is_err());
    }

    #[test]
    fn builds_every_family() {
        let text = "\
[nfunction VE]
family = variable_exponent
dimension = 2
p_expr = 2 + x1

[nfunction DP]
family = double_phase
dimension = 2
p = 2
q = 4
a = max(0, x1)

[nfunction LL]
family = llogl
dimension = 1

[nfunction EX]
family = exponential
dimension = 1

[nfunction AN]
family = anisotropic_sum
dimension = 2
powers = 2, 4

[nfunction CU]
family = custom
dimension = 2
expr = abs(xi1 - xi2)^2 + xi1^2
";
        let cfg = Config::parse(text).unwrap();
        let built = build_all(&cfg).unwrap();
        assert_eq!(built.nfuncs.len(), 6);
        let ve = &built.nfuncs["VE"];
        assert!((ve.evaluate(&[1.0, 0.0], &[2.0, 0.0]) - 8.0).abs() < 1e-12);
        let dp = &built.nfuncs["DP"];
        assert!((dp.evaluate(&[0.5, 0.0], &[1.0, 0.0]) - 1.5).abs() < 1e-12);
        let cu = &built.nfuncs["CU"];
        assert!(cu.homogeneous());
        assert!((cu.evaluate(&[], &[2.0, 1.0]) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn builds_single_valued_graph_from_expressions() {
        let text = "\
[graph G]
kind = single_valued
dimension = 2
expr = xi1 + xi1^3, xi2
";
        let cfg = Config::parse(text).unwrap();
        let built = build_all(&cfg).unwrap();
        let g = &built.graphs["G"];
        let v = g.selection(&[0.0, 0.0], &[2.0, -1.0]);
        assert_eq!(v, vec![10.0, -1.0]);
        g.check_monotonicity(&[vec![0.0, 0.0]], 64, 7).unwrap();
    }

    #[test]
    fn non_monotone_curve_is_a_config_error() {
        let text = "\
[graph bad]
kind = curve
dimension = 1
breakpoints = -1 1 1; 0 0 0
";
        let cfg = Config::parse(text).unwrap();
        let err = build_graph(cfg.first_of(BlockKind::Graph).unwrap(), &BTreeMap::new());
        assert!(err.is_err());
    }
}
