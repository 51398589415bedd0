//! Scripted runs of CLI steps from a TOML file.
//!
//! ```toml
//! description = "..."
//! [files]
//! "bracket.cad" = "solid bracket rev A"
//! [[step]]
//! name = "designer keys"
//! args = ["keygen", "--wallet", "{dir}/designer.json", "--role", "designer"]
//! expect_exit = 0            # optional, default 0
//! expect_code = "..."        # optional reason code of a failing step
//! expect_contains = ["..."]  # optional substrings of the text output
//! ```
//!
//! `{dir}` expands to the working directory, which also holds the ledger.
//! A step that fails must leave the ledger state digest unchanged.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::Parser;
use serde::Deserialize;
use serde_json::json;

use crate::cli::{self, Cli, CliError, Command, Output, EXIT_REFUSED, EXIT_USAGE};
use crate::store::FileLedger;
use partledger_core::ledger::LedgerClient;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub files: BTreeMap<String, String>,
    #[serde(rename = "step", default)]
    pub steps: Vec<Step>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Step {
    pub name: String,
    pub args: Vec<String>,
    #[serde(default)]
    pub expect_exit: i32,
    #[serde(default)]
    pub expect_code: Option<String>,
    #[serde(default)]
    pub expect_contains: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct StepReport {
    pub name: String,
    pub exit: i32,
    pub output: String,
    pub problems: Vec<String>,
}

pub fn parse(text: &str) -> Result<ScenarioFile, CliError> {
    toml::from_str(text).map_err(|e| CliError::usage(format!("scenario: {e}")))
}

fn ledger_digest(path: &Path) -> Result<Option<[u8; 32]>, CliError> {
    if !path.exists() {
        return Ok(None);
    }
    Ok(Some(FileLedger::open(path)?.state().state_digest()))
}

fn run_step(argv: &[String]) -> (i32, String, Option<String>) {
    match Cli::try_parse_from(argv) {
        Err(e) => (
            EXIT_USAGE,
            e.to_string(),
            Some("malformed-arguments".into()),
        ),
        Ok(c) if matches!(c.command, Command::Scenario { .. }) => (
            EXIT_USAGE,
            "scenarios cannot nest".into(),
            Some("malformed-arguments".into()),
        ),
        Ok(c) => match cli::run(&c) {
            Ok(out) => (0, out.text, None),
            Err(e) => (e.exit, e.to_string(), Some(e.code)),
        },
    }
}

/// Runs every step in `dir`. `global` carries the profile and ring flags
/// of the outer invocation.
pub fn run(scenario: &ScenarioFile, dir: &Path, global: &Cli) -> Result<Vec<StepReport>, CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::usage(format!("{}: {e}", dir.display())))?;
    for (name, contents) in &scenario.files {
        if name.contains('/') || name.contains("..") {
            return Err(CliError::usage(format!(
                "scenario file name {name:?} must be plain"
            )));
        }
        fs::write(dir.join(name), contents).map_err(|e| CliError::usage(format!("{name}: {e}")))?;
    }
    let ledger = dir.join("scenario.ledger");
    let dir_str = dir.display().to_string();
    let mut prefix = vec![
        "partledger".to_string(),
        "--ledger".into(),
        ledger.display().to_string(),
    ];
    if let Some(p) = global.profile {
        prefix.push("--profile".into());
        prefix.push(format!("{p:?}").to_lowercase());
    }
    if let Some(r) = global.ring {
        prefix.push("--ring".into());
        prefix.push(r.to_string());
    }

    let mut reports = Vec::with_capacity(scenario.steps.len());
    for step in &scenario.steps {
        let mut argv = prefix.clone();
        argv.extend(step.args.iter().map(|a| a.replace("{dir}", &dir_str)));
        let before = ledger_digest(&ledger)?;
        let (exit, output, code) = run_step(&argv);
        let mut problems = Vec::new();
        if exit != step.expect_exit {
            problems.push(format!("exit {exit}, expected {}", step.expect_exit));
        }
        if let Some(want) = &step.expect_code {
            if code.as_deref() != Some(want.as_str()) {
                problems.push(format!("reason {code:?}, expected {want}"));
            }
        }
        for s in &step.expect_contains {
            if !output.contains(s.as_str()) {
                problems.push(format!("output lacks {s:?}"));
            }
        }
        if exit != 0 && ledger_digest(&ledger)? != before {
            problems.push("failed step changed the ledger".into());
        }
        reports.push(StepReport {
            name: step.name.clone(),
            exit,
            output,
            problems,
        });
    }
    Ok(reports)
}

/// Entry point of `partledger scenario`.
pub fn run_file(file: &Path, workdir: Option<&Path>, global: &Cli) -> Result<Output, CliError> {
    let text = fs::read_to_string(file)
        .map_err(|e| CliError::usage(format!("{}: {e}", file.display())))?;
    let scenario = parse(&text)?;
    let dir = match workdir {
        Some(d) => d.to_path_buf(),
        None => default_workdir(file),
    };
    let reports = run(&scenario, &dir, global)?;
    let mut out = String::new();
    if !scenario.description.is_empty() {
        let _ = writeln!(out, "{}", scenario.description.trim());
    }
    let _ = writeln!(out, "workdir {}", dir.display());
    let mut failed = 0;
    let mut steps = Vec::new();
    for r in &reports {
        let ok = r.problems.is_empty();
        failed += usize::from(!ok);
        let _ = writeln!(
            out,
            "{} {} (exit {})",
            if ok { "ok  " } else { "FAIL" },
            r.name,
            r.exit
        );
        for line in r.output.lines() {
            let _ = writeln!(out, "      {line}");
        }
        for p in &r.problems {
            let _ = writeln!(out, "      !! {p}");
        }
        steps.push(json!({ "name": r.name, "exit": r.exit, "ok": ok, "problems": r.problems }));
    }
    let _ = write!(
        out,
        "{} of {} steps as expected",
        reports.len() - failed,
        reports.len()
    );
    if failed > 0 {
        return Err(CliError {
            code: "scenario-failed".into(),
            exit: EXIT_REFUSED,
            message: out,
        });
    }
    Ok(Output {
        json: json!({ "workdir": dir, "steps": steps }),
        text: out,
    })
}

fn default_workdir(file: &Path) -> PathBuf {
    let stem = file
        .file_stem()
        .map_or("scenario".into(), |s| s.to_string_lossy().into_owned());
    std::env::temp_dir().join(format!(
        "partledger-{stem}-{}-{}",
        std::process::id(),
        crate::store::now_ms()
    ))
}
