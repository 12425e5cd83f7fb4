//! Verification records and their deterministic JSON/CSV rendering.

use serde::Serialize;

/// Round to 12 significant digits so that rendered output is stable.
pub fn sig12(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.11e}").parse().unwrap_or(x)
}

/// A scale value; `+∞` renders as the string `"inf"`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Scale(pub f64);

impl Serialize for Scale {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.0.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(sig12(self.0))
        }
    }
}

fn ser_vec<S: serde::Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(v.len()))?;
    for x in v {
        if x.is_finite() {
            seq.serialize_element(&sig12(*x))?;
        } else {
            seq.serialize_element(&format!("{x}"))?;
        }
    }
    seq.end()
}

fn ser_f<S: serde::Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
    if x.is_finite() {
        s.serialize_f64(sig12(*x))
    } else {
        s.serialize_str(&format!("{x}"))
    }
}

/// One checked claim.
#[derive(Clone, Debug, Serialize)]
pub struct Claim {
    pub claim: String,
    pub t_values: Vec<Scale>,
    #[serde(serialize_with = "ser_vec")]
    pub computed: Vec<f64>,
    #[serde(serialize_with = "ser_vec")]
    pub expected: Vec<f64>,
    #[serde(serialize_with = "ser_f")]
    pub tolerance: f64,
    #[serde(serialize_with = "ser_f")]
    pub max_abs_error: f64,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Claim {
    /// Compare `computed` against `expected` entrywise with an absolute tolerance.
    pub fn compare(claim: impl Into<String>, t: &[f64], computed: Vec<f64>, expected: Vec<f64>, tol: f64) -> Claim {
        let err = computed
            .iter()
            .zip(&expected)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, |m: f64, e| if e.is_nan() { f64::INFINITY } else { m.max(e) });
        let pass = computed.len() == expected.len() && err <= tol;
        Claim {
            claim: claim.into(),
            t_values: t.iter().map(|&x| Scale(x)).collect(),
            computed,
            expected,
            tolerance: tol,
            max_abs_error: err,
            pass,
            note: None,
        }
    }

    /// A yes/no claim, encoded as `computed = [1]` (true) or `[0]`.
    pub fn boolean(claim: impl Into<String>, ok: bool) -> Claim {
        let mut c = Claim::compare(claim, &[], vec![if ok { 1.0 } else { 0.0 }], vec![1.0], 0.0);
        c.pass = ok;
        c
    }

    /// A claim that failed to evaluate.
    pub fn error(claim: impl Into<String>, msg: impl Into<String>) -> Claim {
        let mut c = Claim::boolean(claim, false);
        c.note = Some(msg.into());
        c
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Claim {
        self.note = Some(note.into());
        self
    }

    /// Replace `pass` by an additional predicate.
    pub fn and(mut self, ok: bool) -> Claim {
        self.pass &= ok;
        self
    }

    pub fn status_line(&self) -> String {
        format!(
            "[{}] {} (max_abs_error = {:.3e}, tolerance = {:.1e})",
            if self.pass { "PASS" } else { "FAIL" },
            self.claim,
            self.max_abs_error,
            self.tolerance
        )
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Report {
    pub claims: Vec<Claim>,
}

impl Report {
    pub fn new() -> Self {
        Report::default()
    }

    pub fn push(&mut self, c: Claim) {
        self.claims.push(c);
    }

    pub fn extend(&mut self, other: Report) {
        self.claims.extend(other.claims);
    }

    pub fn pass(&self) -> bool {
        self.claims.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> Vec<&Claim> {
        self.claims.iter().filter(|c| !c.pass).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One row per `(claim, t)` pair: `claim,t,str_value,target,abs_error`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("claim,t,str_value,target,abs_error\n");
        for c in &self.claims {
            for (i, (a, b)) in c.computed.iter().zip(&c.expected).enumerate() {
                let t = c.t_values.get(i).map_or(String::new(), |s| fmt12(s.0));
                out.push_str(&format!("{},{},{},{},{}\n", c.claim, t, fmt12(*a), fmt12(*b), fmt12((a - b).abs())));
            }
        }
        out
    }
}

/// Fixed 12-significant-digit rendering.
pub fn fmt12(x: f64) -> String {
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x.is_nan() {
        return "nan".into();
    }
    let a = x.abs();
    if a == 0.0 || (1e-4..1e15).contains(&a) {
        format!("{}", sig12(x))
    } else {
        format!("{:e}", sig12(x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_is_stable_and_rounded() {
        let mut r = Report::new();
        r.push(Claim::compare("c", &[1.0, f64::INFINITY], vec![2.0000000000001, 2.0], vec![2.0, 2.0], 1e-9));
        let a = r.to_json();
        let b = r.to_json();
        assert_eq!(a, b);
        assert!(a.contains("\"inf\""));
        assert!(a.contains("\"claim\""));
        assert!(r.pass());
        assert!(r.to_csv().starts_with("claim,t,str_value,target,abs_error"));
    }

    #[test]
    fn nan_fails() {
        let c = Claim::compare("x", &[], vec![f64::NAN], vec![0.0], 1.0);
        assert!(!c.pass);
    }
}
