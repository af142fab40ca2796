//! JSON serialization of MDPs.
//!
//! ```json
//! {
//!   "n_states": 2,
//!   "n_actions": 1,
//!   "gamma": 9.0000000000000002e-1,
//!   "transition": [[[0.0, 1.0]], [[0.0, 1.0]]],
//!   "cost": [[0.0], [1.0]]
//! }
//! ```
//!
//! `transition[s][a][s']` and `cost[s][a]`. Numbers are written with 17
//! significant digits, which round-trips every finite double exactly.

use serde::Deserialize;
use std::fmt::Write as _;
use std::path::Path;

use super::TabularMdp;
use crate::error::{Error, Result};

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MdpDocument {
    n_states: usize,
    n_actions: usize,
    gamma: f64,
    transition: Vec<Vec<Vec<f64>>>,
    cost: Vec<Vec<f64>>,
}

pub(crate) fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_row(out: &mut String, row: &[f64]) {
    out.push('[');
    for (i, v) in row.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        out.push_str(&fmt_f64(*v));
    }
    out.push(']');
}

impl TabularMdp {
    pub fn to_json(&self) -> String {
        let (ns, na) = (self.n_states, self.n_actions);
        let mut out = String::new();
        let _ = writeln!(out, "{{\n  \"n_states\": {ns},\n  \"n_actions\": {na},");
        let _ = writeln!(out, "  \"gamma\": {},", fmt_f64(self.gamma));
        out.push_str("  \"transition\": [\n");
        for s in 0..ns {
            out.push_str("    [");
            for a in 0..na {
                if a > 0 {
                    out.push_str(",\n     ");
                }
                write_row(&mut out, self.next(s, a));
            }
            out.push_str(if s + 1 < ns { "],\n" } else { "]\n" });
        }
        out.push_str("  ],\n  \"cost\": [\n");
        for s in 0..ns {
            out.push_str("    ");
            write_row(&mut out, &self.cost[s * na..(s + 1) * na]);
            out.push_str(if s + 1 < ns { ",\n" } else { "\n" });
        }
        out.push_str("  ]\n}\n");
        out
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: MdpDocument = serde_json::from_str(text).map_err(|e| Error::Parse(format!("MDP document: {e}")))?;
        let (ns, na) = (doc.n_states, doc.n_actions);
        if doc.transition.len() != ns || doc.cost.len() != ns {
            return Err(Error::Parse(format!("expected {ns} state rows in transition and cost")));
        }
        let mut transition = Vec::with_capacity(ns * na * ns);
        for (s, per_action) in doc.transition.iter().enumerate() {
            if per_action.len() != na {
                return Err(Error::Parse(format!("transition[{s}] must have {na} actions")));
            }
            for (a, row) in per_action.iter().enumerate() {
                if row.len() != ns {
                    return Err(Error::Parse(format!("transition[{s}][{a}] must have {ns} entries")));
                }
                transition.extend_from_slice(row);
            }
        }
        let mut cost = Vec::with_capacity(ns * na);
        for (s, row) in doc.cost.iter().enumerate() {
            if row.len() != na {
                return Err(Error::Parse(format!("cost[{s}] must have {na} entries")));
            }
            cost.extend_from_slice(row);
        }
        TabularMdp::new(ns, na, doc.gamma, transition, cost)
    }
}

pub fn write_mdp(mdp: &TabularMdp, path: &Path) -> Result<()> {
    std::fs::write(path, mdp.to_json())?;
    Ok(())
}

pub fn read_mdp(path: &Path) -> Result<TabularMdp> {
    TabularMdp::from_json(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::random_mdp;

    #[test]
    fn round_trip_is_bit_exact() {
        for seed in 0..10 {
            let mdp = random_mdp(4, 3, 0.9 + seed as f64 * 1e-3, seed).unwrap();
            let back = TabularMdp::from_json(&mdp.to_json()).unwrap();
            assert_eq!(mdp, back);
        }
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let mdp = random_mdp(3, 2, 0.95, 1).unwrap();
        write_mdp(&mdp, &path).unwrap();
        assert_eq!(read_mdp(&path).unwrap(), mdp);
    }

    #[test]
    fn malformed_documents_are_rejected() {
        assert!(matches!(TabularMdp::from_json("{"), Err(Error::Parse(_))));
        let bad = r#"{"n_states":1,"n_actions":1,"gamma":0.9,"transition":[[[1.0, 0.0]]],"cost":[[0.5]]}"#;
        assert!(matches!(TabularMdp::from_json(bad), Err(Error::Parse(_))));
        let not_stochastic = r#"{"n_states":1,"n_actions":1,"gamma":0.9,"transition":[[[0.5]]],"cost":[[0.5]]}"#;
        assert!(matches!(TabularMdp::from_json(not_stochastic), Err(Error::Domain(_))));
    }
}
