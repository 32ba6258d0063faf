//! Embedded UK Citizens' Assembly on Brexit (2017) recruitment statistics.
//!
//! Targets are the organisers' quotas; marginals are the feature proportions
//! among volunteers, obtained from population shares and per-group
//! volunteering rates with Bayes' rule. Values are copied verbatim from the
//! published summary tables (three decimals), so several rows sum to 0.999
//! and are renormalized when the dataset is built.

use std::fmt::Write as _;

use crate::distribution::JointDistribution;
use crate::domain::{CandidateSpace, TargetProfile};
use crate::error::{Error, Result};

/// One row of the summary table.
#[derive(Debug, Clone, Copy)]
pub struct BrexitFeature {
    pub name: &'static str,
    pub values: &'static [&'static str],
    pub target: &'static [f64],
    pub marginal: &'static [f64],
}

pub const FEATURES: [BrexitFeature; 6] = [
    BrexitFeature {
        name: "ethnicity",
        values: &["white", "non-white"],
        target: &[0.860, 0.140],
        marginal: &[0.863, 0.136],
    },
    BrexitFeature {
        name: "social_class",
        values: &["upper", "lower"],
        target: &[0.550, 0.450],
        marginal: &[0.556, 0.444],
    },
    BrexitFeature {
        name: "age",
        values: &["<35", "35-54", ">54"],
        target: &[0.288, 0.344, 0.367],
        marginal: &[0.154, 0.432, 0.414],
    },
    BrexitFeature {
        name: "region",
        values: &["region-1", "region-2", "region-3", "region-4", "region-5", "region-6", "region-7", "region-8"],
        target: &[0.233, 0.160, 0.093, 0.134, 0.222, 0.047, 0.082, 0.028],
        marginal: &[0.179, 0.155, 0.090, 0.117, 0.211, 0.073, 0.154, 0.021],
    },
    BrexitFeature {
        name: "gender",
        values: &["female", "male"],
        target: &[0.507, 0.493],
        marginal: &[0.384, 0.616],
    },
    BrexitFeature {
        name: "brexit_vote",
        values: &["remain", "leave"],
        target: &[0.481, 0.519],
        marginal: &[0.565, 0.434],
    },
];

/// A ready-to-simulate instance built from (a subset of) the table.
#[derive(Debug, Clone)]
pub struct BrexitInstance {
    pub space: CandidateSpace,
    pub target: TargetProfile,
    /// Renormalized volunteer marginals.
    pub marginals: Vec<Vec<f64>>,
    pub joint: JointDistribution,
}

/// All six features; the joint treats features as independent.
pub fn instance() -> Result<BrexitInstance> {
    let names: Vec<&str> = FEATURES.iter().map(|f| f.name).collect();
    subset(&names)
}

/// The instance restricted to the named features, in the given order.
pub fn subset(names: &[&str]) -> Result<BrexitInstance> {
    let rows: Vec<&BrexitFeature> = names
        .iter()
        .map(|n| {
            FEATURES
                .iter()
                .find(|f| f.name == *n)
                .ok_or_else(|| Error::InvalidParameter(format!("unknown Brexit feature `{n}`")))
        })
        .collect::<Result<_>>()?;
    let space = CandidateSpace::with_names(
        rows.iter().map(|f| f.values.len()).collect(),
        rows.iter().map(|f| f.name.to_string()).collect(),
    )?;
    let target = TargetProfile::normalized(&space, rows.iter().map(|f| f.target.to_vec()).collect())?;
    let raw: Vec<Vec<f64>> = rows.iter().map(|f| f.marginal.to_vec()).collect();
    let joint = JointDistribution::from_marginals(space.clone(), &raw)?;
    let marginals = (0..rows.len()).map(|i| joint.marginal(i)).collect();
    Ok(BrexitInstance { space, target, marginals, joint })
}

/// Human-readable table of the raw targets and marginals, with a note for
/// every row that needs renormalizing.
pub fn table() -> String {
    let fmt_row = |v: &[f64]| v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(" / ");
    let mut out = String::new();
    let _ = writeln!(out, "{:<13} {:<8} {:<62} marginals", "feature", "values", "targets");
    let mut notes = Vec::new();
    let mut d_tilde = 0;
    for f in &FEATURES {
        d_tilde += f.values.len() - 1;
        let _ = writeln!(
            out,
            "{:<13} {:<8} {:<62} {}",
            f.name,
            f.values.len(),
            fmt_row(f.target),
            fmt_row(f.marginal)
        );
        for (what, row) in [("target", f.target), ("marginal", f.marginal)] {
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-9 {
                notes.push(format!("{} {what} sums to {s:.3}; renormalized", f.name));
            }
        }
    }
    let size: usize = FEATURES.iter().map(|f| f.values.len()).product();
    let _ = writeln!(out, "|X| = {size}, d~ = {d_tilde}");
    for n in notes {
        let _ = writeln!(out, "note: {n}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_instance_shape() {
        let b = instance().unwrap();
        assert_eq!(b.space.domain_sizes(), &[2, 2, 3, 8, 2, 2]);
        assert_eq!(b.space.size(), 384);
        assert_eq!(b.space.d_tilde(), 13);
        assert!(b.joint.strictly_positive());
        let gender = b.joint.marginal(4);
        assert!((gender[0] - 0.384).abs() < 1e-12);
        let vote = b.joint.marginal(5);
        assert!((vote[0] - 0.565 / 0.999).abs() < 1e-12);
    }

    #[test]
    fn subsets_follow_requested_order() {
        let b = subset(&["gender", "ethnicity", "social_class"]).unwrap();
        assert_eq!(b.space.domain_sizes(), &[2, 2, 2]);
        assert_eq!(b.space.feature_names()[0], "gender");
        assert!((b.target.get(0, 0) - 0.507).abs() < 1e-12);
        assert!(subset(&["shoe_size"]).is_err());
    }

    #[test]
    fn table_lists_rows_and_notes() {
        let t = table();
        assert!(t.contains("0.384 / 0.616"));
        assert!(t.contains("0.565 / 0.434"));
        assert!(t.contains("d~ = 13"));
        assert!(t.contains("brexit_vote marginal sums to 0.999; renormalized"));
    }
}
