//! Export of the full program, slacks included, in CPLEX LP text format.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::problem::{SlackKind, SparsificationProblem};

const TERMS_PER_LINE: usize = 8;

fn push_terms(out: &mut String, terms: impl IntoIterator<Item = String>) {
    for (i, t) in terms.into_iter().enumerate() {
        if i > 0 && i % TERMS_PER_LINE == 0 {
            out.push_str("\n   ");
        }
        if i > 0 {
            out.push_str(" + ");
        }
        out.push_str(&t);
    }
}

fn coef(c: f64, var: &str) -> String {
    if c == 1.0 {
        var.to_string()
    } else {
        format!("{c} {var}")
    }
}

/// Renders the program. `comments` are written as leading `\` lines.
pub fn lp_string(problem: &SparsificationProblem, comments: &[String]) -> String {
    let x_name = |j: usize| format!("x_{}", problem.landmark_ids[j]);
    let mut out = String::new();
    for c in comments {
        for line in c.lines() {
            let _ = writeln!(out, "\\ {line}");
        }
    }
    let _ = writeln!(out, "\\ method: {}", problem.variant);

    out.push_str("Minimize\n obj: ");
    let mut terms: Vec<String> = (0..problem.n_landmarks())
        .map(|j| coef(problem.weight[j], &x_name(j)))
        .collect();
    for b in &problem.blocks {
        if b.penalty != 0.0 {
            terms.extend((0..b.n_rows()).map(|r| coef(b.penalty, &format!("s_{}", b.row_name(r)))));
        }
    }
    if terms.is_empty() {
        terms.push("0 x_none".into());
    }
    push_terms(&mut out, terms);

    out.push_str("\nSubject To\n");
    for b in &problem.blocks {
        for r in 0..b.n_rows() {
            let name = b.row_name(r);
            let _ = write!(out, " {name}: ");
            let mut terms: Vec<String> = b.matrix.row(r).iter().map(|&j| x_name(j as usize)).collect();
            terms.push(format!("s_{name}"));
            push_terms(&mut out, terms);
            let _ = writeln!(out, " >= {}", b.rhs[r]);
        }
    }

    out.push_str("Bounds\n");
    for b in problem.blocks.iter().filter(|b| b.slack == SlackKind::Integer) {
        for r in 0..b.n_rows() {
            let _ = writeln!(out, " 0 <= s_{} <= {}", b.row_name(r), b.rhs[r]);
        }
    }

    out.push_str("Binaries\n");
    for j in 0..problem.n_landmarks() {
        let _ = writeln!(out, " {}", x_name(j));
    }
    for b in problem.blocks.iter().filter(|b| b.slack == SlackKind::Binary) {
        for r in 0..b.n_rows() {
            let _ = writeln!(out, " s_{}", b.row_name(r));
        }
    }

    out.push_str("Generals\n");
    for b in problem.blocks.iter().filter(|b| b.slack == SlackKind::Integer) {
        for r in 0..b.n_rows() {
            let _ = writeln!(out, " s_{}", b.row_name(r));
        }
    }
    out.push_str("End\n");
    out
}

pub fn export_lp(problem: &SparsificationProblem, comments: &[String], path: &Path) -> Result<()> {
    std::fs::write(path, lp_string(problem, comments)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::tests::three_landmarks;

    #[test]
    fn three_landmark_program() {
        let text = lp_string(&three_landmarks(), &[]);
        let section = |name: &str| -> Vec<String> {
            let start = text.find(&format!("{name}\n")).unwrap() + name.len() + 1;
            text[start..]
                .lines()
                .take_while(|l| l.starts_with(' '))
                .map(|l| l.trim().to_string())
                .collect()
        };
        assert_eq!(section("Binaries"), vec!["x_0", "x_1", "x_2"]);
        assert_eq!(section("Generals"), vec!["s_a_0", "s_a_1"]);
        assert_eq!(section("Subject To"), vec!["a_0: x_0 + x_1 + s_a_0 >= 1", "a_1: x_1 + x_2 + s_a_1 >= 1"]);
        assert!(text.contains("obj: x_0 + x_1 + x_2 + 10 s_a_0 + 10 s_a_1"));
        assert!(text.ends_with("End\n"));
    }

    #[test]
    fn deterministic_and_commented() {
        let p = three_landmarks();
        let a = lp_string(&p, &["k1 = 1".into()]);
        assert_eq!(a, lp_string(&p, &["k1 = 1".into()]));
        assert!(a.starts_with("\\ k1 = 1\n"));
    }
}
