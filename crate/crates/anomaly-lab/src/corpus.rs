//! Model files and the built-in corpus.
//!
//! A model file is a JSON object with `"kind": "abstract"` or
//! `"kind": "simplicial"`. Matrices are row-major arrays; entries are integers,
//! decimal numbers, or `"p/q"` strings. Unknown fields are rejected.
//!
//! ```json
//! {"kind": "abstract", "name": "rank-one", "vplus_dim": 2, "vminus_dim": 1,
//!  "dplus": [[1, 0]], "inner_product": null, "action": "axial"}
//! {"kind": "simplicial", "name": "hollow-triangle", "vertices": ["a", "b", "c"],
//!  "simplices": [[0], [1], [2], [0, 1], [0, 2], [1, 2]]}
//! ```
//!
//! `"action"` is optional: the string `"axial"`, or an object
//! `{"name", "structure", "rho"}` with `structure[i][j][k] = f^k_{ij}`
//! (omitted for abelian algebras) and one `dim V × dim V` matrix per generator.

use crate::error::{LabError, Result};
use crate::linalg::QMat;
use crate::models::{axial_action, build_abstract, hodge_dirac, DiracData, EquivariantAction, SimplicialComplex};
use crate::scalar::Q;
use num_bigint::BigInt;
use num_traits::{FromPrimitive, Zero};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// A rational entry: integer, decimal, or `"p/q"`.
#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(untagged)]
pub enum RatEntry {
    Int(i64),
    Float(f64),
    Text(String),
}

impl RatEntry {
    pub fn to_q(&self) -> Result<Q> {
        match self {
            RatEntry::Int(v) => Ok(Q::from_integer(BigInt::from(*v))),
            RatEntry::Float(v) => Q::from_f64(*v).ok_or_else(|| LabError::Input(format!("non-finite entry {v}"))),
            RatEntry::Text(s) => parse_rational(s),
        }
    }

    pub fn from_q(x: &Q) -> Self {
        if x.is_integer() {
            if let Ok(v) = i64::try_from(x.to_integer()) {
                return RatEntry::Int(v);
            }
        }
        RatEntry::Text(x.to_string())
    }
}

/// Parses `"p"`, `"p/q"` or a decimal literal exactly.
pub fn parse_rational(s: &str) -> Result<Q> {
    let s = s.trim();
    let bad = || LabError::Input(format!("invalid rational {s:?}"));
    if let Some((p, q)) = s.split_once('/') {
        let p: BigInt = p.trim().parse().map_err(|_| bad())?;
        let q: BigInt = q.trim().parse().map_err(|_| bad())?;
        if q.is_zero() {
            return Err(LabError::Input(format!("zero denominator in {s:?}")));
        }
        return Ok(Q::new(p, q));
    }
    if let Ok(p) = s.parse::<BigInt>() {
        return Ok(Q::from_integer(p));
    }
    let (int, frac) = s.split_once('.').ok_or_else(bad)?;
    let digits: BigInt = format!("{int}{frac}").parse().map_err(|_| bad())?;
    Ok(Q::new(digits, BigInt::from(10u8).pow(frac.len() as u32)))
}

pub type MatEntries = Vec<Vec<RatEntry>>;

fn to_qmat(m: &MatEntries, rows: usize, cols: usize, what: &str) -> Result<QMat> {
    if m.len() != rows || m.iter().any(|r| r.len() != cols) {
        return Err(LabError::Dimension(format!("{what} must be {rows}x{cols}")));
    }
    let mut out = QMat::zeros(rows, cols);
    for (i, r) in m.iter().enumerate() {
        for (j, e) in r.iter().enumerate() {
            out[(i, j)] = e.to_q()?;
        }
    }
    Ok(out)
}

fn from_qmat(m: &QMat) -> MatEntries {
    (0..m.rows).map(|i| (0..m.cols).map(|j| RatEntry::from_q(&m[(i, j)])).collect()).collect()
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ActionSpec {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub structure: Option<Vec<Vec<Vec<RatEntry>>>>,
    pub rho: Vec<MatEntries>,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(untagged)]
pub enum ActionField {
    Builtin(String),
    Explicit(ActionSpec),
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ModelFile {
    Abstract {
        name: Option<String>,
        vplus_dim: usize,
        vminus_dim: usize,
        dplus: MatEntries,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        inner_product: Option<MatEntries>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        action: Option<ActionField>,
    },
    Simplicial {
        name: Option<String>,
        vertices: Vec<String>,
        simplices: Vec<Vec<usize>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weights: Option<Vec<RatEntry>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        action: Option<ActionField>,
    },
}

/// A loaded model with its optional declared action.
#[derive(Clone, Debug)]
pub struct Model {
    pub dirac: DiracData,
    pub action: Option<EquivariantAction>,
    /// Present for simplicial models.
    pub complex: Option<SimplicialComplex>,
}

impl Model {
    /// The declared action, or the axial action if none is declared.
    pub fn action_or_axial(&self) -> EquivariantAction {
        self.action.clone().unwrap_or_else(|| axial_action(&self.dirac))
    }
}

pub fn parse_action(spec: &ActionField, d: &DiracData) -> Result<EquivariantAction> {
    let a = match spec {
        ActionField::Builtin(s) if s == "axial" => axial_action(d),
        ActionField::Builtin(s) => return Err(LabError::Input(format!("unknown builtin action {s:?}"))),
        ActionField::Explicit(a) => {
            let n = d.dim();
            let rho = a.rho.iter().map(|m| to_qmat(m, n, n, "rho")).collect::<Result<Vec<_>>>()?;
            let k = rho.len();
            let structure = match &a.structure {
                None => vec![vec![vec![Q::zero(); k]; k]; k],
                Some(s) => {
                    if s.len() != k || s.iter().any(|r| r.len() != k || r.iter().any(|v| v.len() != k)) {
                        return Err(LabError::Dimension(format!("structure constants must be {k}x{k}x{k}")));
                    }
                    s.iter()
                        .map(|r| r.iter().map(|v| v.iter().map(RatEntry::to_q).collect()).collect::<Result<Vec<Vec<Q>>>>())
                        .collect::<Result<Vec<_>>>()?
                }
            };
            EquivariantAction { structure, rho, name: a.name.clone().unwrap_or_else(|| "custom".into()) }
        }
    };
    a.validate(d)?;
    Ok(a)
}

pub fn parse_action_json(text: &str, d: &DiracData) -> Result<EquivariantAction> {
    let spec: ActionField = serde_json::from_str(text).map_err(|e| LabError::Input(format!("action file: {e}")))?;
    parse_action(&spec, d)
}

pub fn parse_model(text: &str) -> Result<Model> {
    let file: ModelFile = serde_json::from_str(text).map_err(|e| LabError::Input(format!("model file: {e}")))?;
    build_model(&file)
}

pub fn build_model(file: &ModelFile) -> Result<Model> {
    match file {
        ModelFile::Abstract { name, vplus_dim, vminus_dim, dplus, inner_product, action } => {
            let n = vplus_dim + vminus_dim;
            let dp = to_qmat(dplus, *vminus_dim, *vplus_dim, "dplus")?;
            let g = inner_product.as_ref().map(|m| to_qmat(m, n, n, "inner_product")).transpose()?;
            let mut d = build_abstract(*vplus_dim, *vminus_dim, dp, g)?;
            d.name = name.clone().unwrap_or_else(|| "abstract".into());
            let action = action.as_ref().map(|a| parse_action(a, &d)).transpose()?;
            Ok(Model { dirac: d, action, complex: None })
        }
        ModelFile::Simplicial { name, vertices, simplices, weights, action } => {
            let weights = weights.as_ref().map(|w| w.iter().map(RatEntry::to_q).collect::<Result<Vec<_>>>()).transpose()?;
            let sc = SimplicialComplex { vertices: vertices.clone(), simplices: simplices.clone(), weights };
            let mut d = hodge_dirac(&sc)?;
            d.name = name.clone().unwrap_or_else(|| "simplicial".into());
            let action = action.as_ref().map(|a| parse_action(a, &d)).transpose()?;
            Ok(Model { dirac: d, action, complex: Some(sc) })
        }
    }
}

/// Abstract-kind file describing `d` and `action` exactly.
pub fn to_model_file(d: &DiracData, action: Option<&EquivariantAction>) -> ModelFile {
    let p = d.vplus_dim;
    let is_euclidean = d.g == QMat::identity(d.dim());
    ModelFile::Abstract {
        name: Some(d.name.clone()),
        vplus_dim: p,
        vminus_dim: d.vminus_dim,
        dplus: from_qmat(&d.dplus),
        inner_product: (!is_euclidean).then(|| from_qmat(&d.g)),
        action: action.map(|a| {
            let abelian = a.structure.iter().flatten().flatten().all(|c| c.is_zero());
            ActionField::Explicit(ActionSpec {
                name: Some(a.name.clone()),
                structure: (!abelian).then(|| {
                    a.structure.iter().map(|r| r.iter().map(|v| v.iter().map(RatEntry::from_q).collect()).collect()).collect()
                }),
                rho: a.rho.iter().map(from_qmat).collect(),
            })
        }),
    }
}

/// Loads a model from a path, or from the built-in corpus when `spec` names one.
pub fn load_model(spec: &str) -> Result<Model> {
    let path = Path::new(spec);
    if path.exists() {
        let text = std::fs::read_to_string(path).map_err(|e| LabError::Input(format!("{spec}: {e}")))?;
        return parse_model(&text);
    }
    builtin(spec)
}

/// Built-in model files: `(name, contents)`.
pub const BUILTINS: &[(&str, &str)] = &[
    ("hollow-triangle", include_str!("../data/hollow-triangle.json")),
    ("solid-triangle", include_str!("../data/solid-triangle.json")),
    ("boundary-tetrahedron", include_str!("../data/boundary-tetrahedron.json")),
    ("rank-one", include_str!("../data/rank-one.json")),
    ("zero-operator", include_str!("../data/zero-operator.json")),
    ("weighted-rank-one", include_str!("../data/weighted-rank-one.json")),
    ("invertible", include_str!("../data/invertible.json")),
    ("two-block", include_str!("../data/two-block.json")),
    ("solvable-block", include_str!("../data/solvable-block.json")),
    ("so3-block", include_str!("../data/so3-block.json")),
];

pub fn builtin_names() -> Vec<&'static str> {
    BUILTINS.iter().map(|(n, _)| *n).collect()
}

pub fn builtin(name: &str) -> Result<Model> {
    let text = BUILTINS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, t)| *t)
        .ok_or_else(|| LabError::Input(format!("no model file or builtin named {name:?} (builtins: {})", builtin_names().join(", "))))?;
    parse_model(text)
}

/// Simplicial members of the corpus with their expected index `χ`.
pub const SIMPLICIAL_CORPUS: &[(&str, i64)] = &[("hollow-triangle", 0), ("solid-triangle", 1), ("boundary-tetrahedron", 2)];

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{so3, solvable2, tensor_model, two_block_model};
    use crate::scalar::{q, qr};

    fn rank_one() -> DiracData {
        build_abstract(2, 1, QMat::from_rows(vec![vec![q(1), q(0)]]).unwrap(), None).unwrap()
    }

    #[test]
    fn rationals() {
        assert_eq!(parse_rational("3/6").unwrap(), qr(1, 2));
        assert_eq!(parse_rational("-7").unwrap(), q(-7));
        assert_eq!(parse_rational("0.125").unwrap(), qr(1, 8));
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("x").is_err());
        assert_eq!(RatEntry::Float(0.5).to_q().unwrap(), qr(1, 2));
    }

    #[test]
    fn corpus_indices() {
        for (name, chi) in SIMPLICIAL_CORPUS {
            let m = builtin(name).unwrap();
            assert_eq!(m.dirac.index(), *chi, "{name}");
            assert_eq!(m.complex.unwrap().euler_characteristic(), *chi);
        }
        assert_eq!(builtin("boundary-tetrahedron").unwrap().dirac.dim(), 14);
        assert_eq!(builtin("rank-one").unwrap().dirac.index(), 1);
        assert_eq!(builtin("zero-operator").unwrap().dirac.index(), 1);
        assert_eq!(builtin("invertible").unwrap().dirac.index(), 0);
        for name in builtin_names() {
            let m = builtin(name).unwrap();
            m.action_or_axial().validate(&m.dirac).unwrap();
        }
    }

    #[test]
    fn data_files_match_constructors() {
        let (d, a) = two_block_model(&rank_one(), &build_abstract(1, 2, QMat::from_rows(vec![vec![q(1)], vec![q(0)]]).unwrap(), None).unwrap()).unwrap();
        let m = builtin("two-block").unwrap();
        assert_eq!((m.dirac.dplus.clone(), m.dirac.g.clone()), (d.dplus, d.g));
        assert_eq!(m.action.unwrap().rho, a.rho);
        for (name, (f, reps)) in [("solvable-block", solvable2()), ("so3-block", so3())] {
            let (d, a) = tensor_model(&rank_one(), f, &reps, name).unwrap();
            let m = builtin(name).unwrap();
            assert_eq!(m.dirac.dplus, d.dplus);
            let ma = m.action.unwrap();
            assert_eq!((ma.structure, ma.rho), (a.structure, a.rho));
        }
    }

    #[test]
    fn round_trip() {
        let (d, a) = tensor_model(&rank_one(), solvable2().0, &solvable2().1, "solvable-block").unwrap();
        let text = serde_json::to_string(&to_model_file(&d, Some(&a))).unwrap();
        let m = parse_model(&text).unwrap();
        assert_eq!(m.dirac, d);
        assert_eq!(m.action.unwrap(), a);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(parse_model(r#"{"kind":"abstract","vplus_dim":1,"vminus_dim":1,"dplus":[[1]],"extra":1}"#).is_err());
        assert!(matches!(
            parse_model(r#"{"kind":"simplicial","vertices":["a","b"],"simplices":[[0],[0,1]]}"#),
            Err(LabError::FaceClosure(_))
        ));
        assert!(matches!(
            parse_model(r#"{"kind":"abstract","vplus_dim":1,"vminus_dim":1,"dplus":[[1]],"inner_product":[[1,0],[0,-1]]}"#),
            Err(LabError::NotPositiveDefinite(_))
        ));
        assert!(parse_model(r#"{"kind":"abstract","vplus_dim":1,"vminus_dim":1,"dplus":[[1,2]]}"#).is_err());
        assert!(parse_model(r#"{"kind":"abstract","vplus_dim":1,"vminus_dim":1,"dplus":[[1]],"action":"vector"}"#).is_err());
        assert!(load_model("no-such-model").is_err());
    }
}
