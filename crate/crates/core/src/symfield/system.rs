//! System definitions and the text file format that carries them.
//!
//! ```text
//! [system]
//! name = martinet
//! dim = 3
//! vars = x y z
//! taylor_degree = 12      # optional, default 12
//! base = 0, 0, 0          # optional expansion point, default origin
//! field X1 = 1 | 0 | 0
//! field X2 = 0 | 1 | x^2/2
//! ```

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use num_traits::Zero;

use super::expr::{taylor_truncate, Expr, ExprParser};
use super::field::SymField;
use super::poly::{Poly, Rational};
use crate::error::{Error, Result};

pub const DEFAULT_TAYLOR_DEGREE: u32 = 12;

#[derive(Clone, Debug)]
pub struct SystemDef {
    pub name: String,
    pub var_names: Vec<String>,
    pub field_names: Vec<String>,
    pub fields: Vec<SymField>,
    pub base_point_default: Vec<Rational>,
    pub taylor_degree: u32,
    /// Source expressions per field and component, when built from text.
    pub exprs: Option<Vec<Vec<Expr>>>,
}

impl PartialEq for SystemDef {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
            && self.var_names == other.var_names
            && self.field_names == other.field_names
            && self.fields == other.fields
            && self.base_point_default == other.base_point_default
            && self.taylor_degree == other.taylor_degree
    }
}

impl SystemDef {
    /// Builds a system directly from polynomial fields (no Taylor step).
    pub fn from_fields(name: &str, var_names: &[&str], fields: Vec<SymField>) -> Result<Self> {
        let n = var_names.len();
        if fields.is_empty() {
            return Err(Error::InvalidArgument("a system needs at least one field".into()));
        }
        if let Some(f) = fields.iter().find(|f| f.nvars() != n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: f.nvars(),
            });
        }
        Ok(Self {
            name: name.to_string(),
            var_names: var_names.iter().map(|s| s.to_string()).collect(),
            field_names: (1..=fields.len()).map(|i| format!("X{i}")).collect(),
            fields,
            base_point_default: vec![Rational::zero(); n],
            taylor_degree: DEFAULT_TAYLOR_DEGREE,
            exprs: None,
        })
    }

    /// Builds a system from analytic expressions, Taylor-expanding each component
    /// around `base` to `taylor_degree` and re-expressing it in the original coordinates.
    pub fn from_exprs(
        name: &str,
        var_names: Vec<String>,
        field_names: Vec<String>,
        exprs: Vec<Vec<Expr>>,
        base: Vec<Rational>,
        taylor_degree: u32,
    ) -> Result<Self> {
        let n = var_names.len();
        if base.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: base.len(),
            });
        }
        let neg_base: Vec<Rational> = base.iter().map(|b| -b.clone()).collect();
        let mut fields = Vec::with_capacity(exprs.len());
        for comps in &exprs {
            if comps.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: comps.len(),
                });
            }
            let polys = comps
                .iter()
                .map(|e| {
                    let shifted = taylor_truncate(e, &base, taylor_degree)?;
                    if base.iter().all(Zero::is_zero) {
                        Ok(shifted)
                    } else {
                        shifted.translate(&neg_base)
                    }
                })
                .collect::<Result<Vec<Poly>>>()?;
            fields.push(SymField::new(polys)?);
        }
        if fields.is_empty() {
            return Err(Error::InvalidArgument("a system needs at least one field".into()));
        }
        Ok(Self {
            name: name.to_string(),
            var_names,
            field_names,
            fields,
            base_point_default: base,
            taylor_degree,
            exprs: Some(exprs),
        })
    }

    pub fn dim(&self) -> usize {
        self.var_names.len()
    }

    pub fn nfields(&self) -> usize {
        self.fields.len()
    }

    /// True when every input was polynomial, so the fields are exact rather than truncated.
    pub fn is_exact(&self) -> bool {
        self.exprs
            .as_ref()
            .is_none_or(|ex| ex.iter().flatten().all(Expr::is_polynomial))
    }

    /// Truncation applied to derived fields (brackets) of a Taylor-truncated system.
    pub fn jet_clamp(&self) -> Option<JetClamp> {
        if self.is_exact() {
            None
        } else {
            Some(JetClamp {
                base: self.base_point_default.clone(),
                degree: self.taylor_degree,
            })
        }
    }

    pub fn clamp_jet(&self, f: SymField) -> SymField {
        match self.jet_clamp() {
            Some(c) => c.apply(f),
            None => f,
        }
    }

    /// Serializes back to the text format.
    pub fn to_file_string(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "[system]");
        let _ = writeln!(s, "name = {}", self.name);
        let _ = writeln!(s, "dim = {}", self.dim());
        let _ = writeln!(s, "vars = {}", self.var_names.join(" "));
        let _ = writeln!(s, "taylor_degree = {}", self.taylor_degree);
        if !self.base_point_default.iter().all(Zero::is_zero) {
            let b: Vec<String> = self.base_point_default.iter().map(|q| q.to_string()).collect();
            let _ = writeln!(s, "base = {}", b.join(", "));
        }
        for (i, name) in self.field_names.iter().enumerate() {
            let comps: Vec<String> = match &self.exprs {
                Some(ex) => ex[i]
                    .iter()
                    .map(|e| e.display_with(&self.var_names).to_string())
                    .collect(),
                None => self.fields[i]
                    .components()
                    .iter()
                    .map(|p| p.display_with(&self.var_names))
                    .collect(),
            };
            let _ = writeln!(s, "field {} = {}", name, comps.join(" | "));
        }
        s
    }
}

/// Drops terms of degree above `degree`, measured in variables centered at `base`.
#[derive(Clone, Debug, PartialEq)]
pub struct JetClamp {
    pub base: Vec<Rational>,
    pub degree: u32,
}

impl JetClamp {
    pub fn apply(&self, f: SymField) -> SymField {
        if self.base.iter().all(Zero::is_zero) {
            return f.truncate(self.degree);
        }
        let neg: Vec<Rational> = self.base.iter().map(|b| -b.clone()).collect();
        f.map_components(|p| {
            p.translate(&self.base)
                .and_then(|q| q.truncate(self.degree).translate(&neg))
                .expect("translation preserves arity")
        })
    }
}

pub fn parse_system_file(path: &Path) -> Result<SystemDef> {
    let text = std::fs::read_to_string(path)?;
    parse_system(&text)
}

pub fn parse_system(text: &str) -> Result<SystemDef> {
    let mut in_header = false;
    let mut name: Option<String> = None;
    let mut dim: Option<usize> = None;
    let mut vars: Option<Vec<String>> = None;
    let mut taylor_degree = DEFAULT_TAYLOR_DEGREE;
    let mut base: Option<Vec<Rational>> = None;
    let mut field_names: Vec<String> = Vec::new();
    let mut exprs: Vec<Vec<Expr>> = Vec::new();
    let mut seen = HashSet::new();

    let perr = |line: usize, column: usize, message: String| Error::Parse {
        line,
        column,
        message,
    };

    for (lineno, raw) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let line = match raw.find('#') {
            Some(i) => &raw[..i],
            None => raw,
        };
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if trimmed == "[system]" {
            in_header = true;
            continue;
        }
        if !in_header {
            return Err(perr(line_no, 1, "expected a [system] header first".into()));
        }
        if let Some(rest) = trimmed.strip_prefix("field ") {
            let vars = vars
                .as_ref()
                .ok_or_else(|| perr(line_no, 1, "`vars` must be declared before fields".into()))?;
            let eq = rest
                .find('=')
                .ok_or_else(|| perr(line_no, 1, "expected `field <name> = ...`".into()))?;
            let fname = rest[..eq].trim().to_string();
            if fname.is_empty() {
                return Err(perr(line_no, 7, "missing field name".into()));
            }
            if !seen.insert(fname.clone()) {
                return Err(perr(line_no, 7, format!("duplicate field name '{fname}'")));
            }
            let body_start = line.find('=').unwrap() + 1;
            let body = &line[body_start..];
            let mut comps = Vec::new();
            let mut offset = body_start;
            for part in body.split('|') {
                let e = ExprParser::new(part, vars, line_no, offset).parse()?;
                comps.push(e);
                offset += part.len() + 1;
            }
            if comps.len() != vars.len() {
                return Err(perr(
                    line_no,
                    1,
                    format!(
                        "field '{fname}' has {} components, expected {}",
                        comps.len(),
                        vars.len()
                    ),
                ));
            }
            field_names.push(fname);
            exprs.push(comps);
            continue;
        }
        let eq = trimmed
            .find('=')
            .ok_or_else(|| perr(line_no, 1, format!("expected `key = value`, got '{trimmed}'")))?;
        let key = trimmed[..eq].trim();
        let value = trimmed[eq + 1..].trim();
        let vcol = line.find('=').map_or(1, |i| i + 2);
        match key {
            "name" => name = Some(value.to_string()),
            "dim" => {
                dim = Some(
                    value
                        .parse()
                        .map_err(|_| perr(line_no, vcol, format!("bad dimension '{value}'")))?,
                )
            }
            "vars" => {
                let v: Vec<String> = value
                    .split(|c: char| c == ',' || c.is_whitespace())
                    .filter(|s| !s.is_empty())
                    .map(str::to_string)
                    .collect();
                let mut uniq = HashSet::new();
                for id in &v {
                    let ok = id.chars().next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
                        && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
                    if !ok || matches!(id.as_str(), "sin" | "cos" | "exp") {
                        return Err(perr(line_no, vcol, format!("invalid variable name '{id}'")));
                    }
                    if !uniq.insert(id.clone()) {
                        return Err(perr(line_no, vcol, format!("duplicate variable '{id}'")));
                    }
                }
                vars = Some(v);
            }
            "taylor_degree" => {
                taylor_degree = value
                    .parse()
                    .ok()
                    .filter(|d: &u32| *d > 0)
                    .ok_or_else(|| perr(line_no, vcol, format!("bad taylor_degree '{value}'")))?
            }
            "base" => {
                let pts = parse_point(value).map_err(|m| perr(line_no, vcol, m))?;
                base = Some(pts);
            }
            other => return Err(perr(line_no, 1, format!("unknown key '{other}'"))),
        }
    }

    let name = name.ok_or_else(|| perr(0, 0, "missing `name`".into()))?;
    let vars = vars.ok_or_else(|| perr(0, 0, "missing `vars`".into()))?;
    let dim = dim.ok_or_else(|| perr(0, 0, "missing `dim`".into()))?;
    if dim != vars.len() {
        return Err(perr(
            0,
            0,
            format!("dim = {dim} but {} variables were declared", vars.len()),
        ));
    }
    if exprs.is_empty() {
        return Err(perr(0, 0, "no fields declared".into()));
    }
    let base = base.unwrap_or_else(|| vec![Rational::zero(); dim]);
    if base.len() != dim {
        return Err(perr(0, 0, format!("base has {} entries, expected {dim}", base.len())));
    }
    SystemDef::from_exprs(&name, vars, field_names, exprs, base, taylor_degree)
}

/// Parses `a, b, c` where each entry is an integer, decimal or `p/q`.
pub fn parse_point(s: &str) -> std::result::Result<Vec<Rational>, String> {
    s.split(',')
        .map(|t| {
            let t = t.trim();
            let e = ExprParser::new(t, &[], 1, 0)
                .parse()
                .map_err(|e| format!("bad coordinate '{t}': {e}"))?;
            let p = taylor_truncate(&e, &[], 0).map_err(|e| e.to_string())?;
            Ok(p.constant_term())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symfield::poly::{rat, rint};

    const MARTINET: &str = "[system]\nname = martinet\ndim = 3\nvars = x y z\nfield X1 = 1 | 0 | 0\nfield X2 = 0 | 1 | x^2/2\n";

    #[test]
    fn parse_martinet() {
        let sys = parse_system(MARTINET).unwrap();
        assert_eq!(sys.dim(), 3);
        assert_eq!(sys.nfields(), 2);
        let c = sys.fields[1].component(2);
        assert_eq!(c.evaluate(&[rint(1), rint(0), rint(0)]).unwrap(), rat(1, 2));
        assert!(sys.is_exact());
    }

    #[test]
    fn rejects_duplicate_field_names() {
        let txt = format!("{MARTINET}field X1 = 0 | 0 | 1\n");
        match parse_system(&txt) {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 7);
                assert!(message.contains("duplicate"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_wrong_arity_naming_the_field() {
        let txt = "[system]\nname = bad\ndim = 2\nvars = x y\nfield Broken = 1 | 0 | 0\n";
        match parse_system(txt) {
            Err(Error::Parse { message, .. }) => assert!(message.contains("Broken")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn round_trip_with_transcendental_fields() {
        let txt = "[system]\nname = unicycle\ndim = 3\nvars = x y theta\ntaylor_degree = 9\nfield X1 = cos(theta) | sin(theta) | 0\nfield X2 = 0 | 0 | 1\n";
        let sys = parse_system(txt).unwrap();
        assert!(!sys.is_exact());
        let again = parse_system(&sys.to_file_string()).unwrap();
        assert_eq!(sys, again);
    }

    #[test]
    fn nonzero_base_reexpands_in_original_coordinates() {
        let txt = "[system]\nname = shifted\ndim = 1\nvars = x\nbase = 1/2\nfield X = x^3\n";
        let sys = parse_system(txt).unwrap();
        let p = sys.fields[0].component(0);
        assert_eq!(*p, Poly::var(1, 0).pow(3));
    }

    #[test]
    fn unknown_identifier_is_located() {
        let txt = "[system]\nname = s\ndim = 2\nvars = x y\nfield X = 1 | w\n";
        match parse_system(txt) {
            Err(Error::Parse { line, column, .. }) => {
                assert_eq!(line, 5);
                assert_eq!(column, 15);
            }
            other => panic!("{other:?}"),
        }
    }
}
