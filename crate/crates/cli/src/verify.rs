use std::path::PathBuf;

use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use crowdvote::io::write_json;
use crowdvote::verify::{self as checks, Status, Suite, VerifyConfig};

use crate::config;
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SuiteArg {
    All,
    Thm1,
    Thm2,
    Thm4,
    Thm5,
    Props,
    Examples,
}

impl From<SuiteArg> for Suite {
    fn from(s: SuiteArg) -> Self {
        match s {
            SuiteArg::All => Suite::All,
            SuiteArg::Thm1 => Suite::Thm1,
            SuiteArg::Thm2 => Suite::Thm2,
            SuiteArg::Thm4 => Suite::Thm4,
            SuiteArg::Thm5 => Suite::Thm5,
            SuiteArg::Props => Suite::Props,
            SuiteArg::Examples => Suite::Examples,
        }
    }
}

#[derive(clap::Args, Serialize)]
pub struct Args {
    #[arg(long, value_enum)]
    suite: Option<SuiteArg>,
    /// Largest number of answer vectors one enumeration may visit.
    #[arg(long)]
    budget: Option<u64>,
    /// Random instances per randomized suite (scales all of them).
    #[arg(long)]
    instances: Option<usize>,
    /// Also write the checks as JSON.
    #[arg(long, value_name = "PATH")]
    report: Option<PathBuf>,
}

fn default_suite() -> SuiteArg {
    SuiteArg::All
}

fn default_budget() -> u64 {
    VerifyConfig::default().budget
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default = "default_suite")]
    suite: SuiteArg,
    #[serde(default = "default_budget")]
    budget: u64,
    /// `None` keeps each suite's own default.
    #[serde(default)]
    instances: Option<usize>,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    report: Option<PathBuf>,
}

#[derive(Serialize)]
struct Document<'a> {
    command: &'static str,
    generated_at: String,
    config: serde_json::Value,
    passed: bool,
    checks: &'a [checks::Check],
}

pub fn run(cfg: Config) -> CliResult<()> {
    let mut vc = VerifyConfig {
        seed: cfg.seed,
        budget: cfg.budget,
        ..VerifyConfig::default()
    };
    if let Some(n) = cfg.instances {
        vc.thm1_instances = n;
        vc.thm2_instances = n;
        vc.mixture_instances = n;
    }
    let report = checks::run(cfg.suite.into(), &vc)?;
    for c in &report.checks {
        println!("{c}");
    }
    let failed = report.count(Status::Fail);
    println!(
        "{} passed, {} failed, {} skipped",
        report.count(Status::Pass),
        failed,
        report.count(Status::Skipped)
    );
    if let Some(path) = &cfg.report {
        write_json(
            path,
            &Document {
                command: "verify",
                generated_at: config::timestamp(),
                config: config::embed("verify", &cfg),
                passed: report.passed(),
                checks: &report.checks,
            },
        )?;
    }
    if failed > 0 {
        return Err(CliError::VerifyFailed(failed));
    }
    Ok(())
}
