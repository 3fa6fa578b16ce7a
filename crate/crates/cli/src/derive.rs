use std::path::{Path, PathBuf};

use hrode::resolution::{closed_form, derive, is_covered, Expansion};
use hrode::Algorithm;
use serde::Serialize;

use crate::artifacts::{ensure_dir, write_json, Meta};
use crate::error::{CliError, CliResult};

pub struct Derivation {
    pub expansion: Expansion,
    pub matches_closed_form: bool,
}

#[derive(Serialize)]
struct DeriveArtifact<'a> {
    algorithm: Algorithm,
    degree: usize,
    matches_closed_form: bool,
    #[serde(flatten)]
    expansion: &'a Expansion,
}

pub fn run_derive(alg: Algorithm, degree: usize) -> CliResult<Derivation> {
    if !is_covered(alg, degree) {
        return Err(CliError::Usage(format!("{alg} has no known resolution ODE of degree {degree}")));
    }
    let expansion = derive(alg, degree)?;
    let matches_closed_form = expansion.ode.same_coefficients(&closed_form(alg, degree)?);
    Ok(Derivation { expansion, matches_closed_form })
}

/// Intermediate table, then `f_0 … f_{r−1}`, then the bare `f_r` as the last line.
pub fn render(d: &Derivation) -> String {
    let mut lines: Vec<String> =
        d.expansion.table.entries().iter().map(|((j, i), e)| format!("h({j},{i}) = {e}")).collect();
    let coeffs = &d.expansion.ode.coeffs;
    let (top, lower) = coeffs.split_last().expect("degree ≥ 0 gives one coefficient");
    lines.extend(lower.iter().enumerate().map(|(i, e)| format!("f_{i} = {e}")));
    lines.push(format!("f_{} =", coeffs.len() - 1));
    lines.push(top.to_string());
    lines.join("\n")
}

pub fn write_artifact(d: &Derivation, alg: Algorithm, degree: usize, out: &Path) -> CliResult<PathBuf> {
    ensure_dir(out)?;
    let body = DeriveArtifact { algorithm: alg, degree, matches_closed_form: d.matches_closed_form, expansion: &d.expansion };
    let meta = Meta::for_invocation(&format!("derive {alg} {degree}"), 0);
    write_json(&out.join(format!("derive_{alg}_r{degree}.json")), &meta, &body)
}
