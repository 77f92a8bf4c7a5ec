use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crowdvote::io::{gap_curve_to_csv, table2_to_csv, table2_to_text, write_atomic, write_json};
use crowdvote::rng::{derive_seed, Purpose};
use crowdvote::simulate::{
    mean_and_stderr, run_gap_curve_with, run_table2_with, GapCurve, Table2, Table2Row,
    TABLE2_ACCURACIES, TABLE2_KS,
};

use crate::config;
use crate::error::{CliError, CliResult};

fn is_false(b: &bool) -> bool {
    !b
}

#[derive(clap::Args, Serialize)]
pub struct Args {
    /// Accuracy table: MV, SP, Single Best, ISP and OPT for K = 2..10.
    #[arg(long)]
    #[serde(skip_serializing_if = "is_false")]
    table2: bool,
    /// ISP-MV and MV-SP accuracy gaps per K.
    #[arg(long)]
    #[serde(skip_serializing_if = "is_false")]
    gap_curve: bool,
    /// Independent datasets per K; more than one adds standard errors.
    #[arg(long)]
    replications: Option<usize>,
    /// Questions per dataset.
    #[arg(long)]
    questions: Option<usize>,
    #[arg(long, short, value_name = "DIR")]
    output_dir: Option<PathBuf>,
}

fn one() -> usize {
    1
}

fn default_questions() -> usize {
    crowdvote::simulate::TABLE2_QUESTIONS
}

fn here() -> PathBuf {
    PathBuf::from(".")
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    table2: bool,
    #[serde(default)]
    gap_curve: bool,
    #[serde(default = "one")]
    replications: usize,
    #[serde(default = "default_questions")]
    questions: usize,
    #[serde(default)]
    seed: u64,
    #[serde(default = "here")]
    output_dir: PathBuf,
}

/// Per-cell mean and standard error over replicated tables.
#[derive(Serialize)]
struct ReplicatedTable {
    mean: Table2,
    stderr: Option<Vec<Table2Row>>,
}

#[derive(Serialize)]
struct Document {
    command: &'static str,
    generated_at: String,
    config: serde_json::Value,
    table2: Option<ReplicatedTable>,
    gap_curve: Option<GapCurve>,
}

fn replicate_table(cfg: &Config) -> CliResult<ReplicatedTable> {
    if cfg.replications == 1 {
        return Ok(ReplicatedTable {
            mean: run_table2_with(&TABLE2_ACCURACIES, &TABLE2_KS, cfg.questions, cfg.seed)?,
            stderr: None,
        });
    }
    let tables = (0..cfg.replications)
        .map(|r| {
            let seed = derive_seed(cfg.seed, Purpose::Replication, r as u64);
            run_table2_with(&TABLE2_ACCURACIES, &TABLE2_KS, cfg.questions, seed)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let column = |idx: usize, f: fn(&Table2Row) -> f64| {
        mean_and_stderr(&tables.iter().map(|t| f(&t.rows[idx])).collect::<Vec<_>>())
    };
    let mut mean = Vec::new();
    let mut stderr = Vec::new();
    for (idx, &k) in TABLE2_KS.iter().enumerate() {
        let cells: [(f64, f64); 5] = [
            column(idx, |r| r.mv),
            column(idx, |r| r.sp),
            column(idx, |r| r.single_best),
            column(idx, |r| r.isp),
            column(idx, |r| r.opt),
        ];
        let row = |pick: fn(&(f64, f64)) -> f64| Table2Row {
            k,
            mv: pick(&cells[0]),
            sp: pick(&cells[1]),
            single_best: pick(&cells[2]),
            isp: pick(&cells[3]),
            opt: pick(&cells[4]),
        };
        mean.push(row(|c| c.0));
        stderr.push(row(|c| c.1));
    }
    Ok(ReplicatedTable {
        mean: Table2 {
            seed: cfg.seed,
            questions: cfg.questions,
            accuracies: TABLE2_ACCURACIES.to_vec(),
            rows: mean,
        },
        stderr: Some(stderr),
    })
}

pub fn run(cfg: Config) -> CliResult<()> {
    if !cfg.table2 && !cfg.gap_curve {
        return Err(CliError::Usage(
            "nothing to report: pass --table2 and/or --gap-curve".into(),
        ));
    }
    if cfg.replications == 0 || cfg.questions == 0 {
        return Err(CliError::Usage(
            "--replications and --questions must be at least 1".into(),
        ));
    }
    std::fs::create_dir_all(&cfg.output_dir).map_err(crowdvote::Error::from)?;
    let mut doc = Document {
        command: "report",
        generated_at: config::timestamp(),
        config: config::embed("report", &cfg),
        table2: None,
        gap_curve: None,
    };
    if cfg.table2 {
        let t = replicate_table(&cfg)?;
        let mut text = table2_to_text(&t.mean);
        if let Some(se) = &t.stderr {
            text += &format!("standard errors over {} replications:\n", cfg.replications);
            text += &table2_to_text(&Table2 {
                rows: se.clone(),
                ..t.mean.clone()
            });
        }
        print!("{text}");
        write_atomic(&cfg.output_dir.join("table2.txt"), text.as_bytes())?;
        write_atomic(&cfg.output_dir.join("table2.csv"), &table2_to_csv(&t.mean)?)?;
        if let Some(se) = &t.stderr {
            let se_table = Table2 {
                rows: se.clone(),
                ..t.mean.clone()
            };
            write_atomic(
                &cfg.output_dir.join("table2_stderr.csv"),
                &table2_to_csv(&se_table)?,
            )?;
        }
        doc.table2 = Some(t);
    }
    if cfg.gap_curve {
        let g = run_gap_curve_with(
            &TABLE2_ACCURACIES,
            &TABLE2_KS,
            cfg.questions,
            cfg.seed,
            cfg.replications,
        )?;
        println!(
            "{:>4} {:>12} {:>12} {:>10}",
            "K", "ISP-MV", "MV-SP", "stderr"
        );
        for p in &g.points {
            println!(
                "{:>4} {:>12.3} {:>12.3} {:>10.3}",
                p.k,
                100.0 * p.gap_isp_mv,
                100.0 * p.gap_mv_sp,
                100.0 * p.stderr
            );
        }
        write_atomic(
            &cfg.output_dir.join("gap_curve.csv"),
            &gap_curve_to_csv(&g)?,
        )?;
        doc.gap_curve = Some(g);
    }
    write_json(&cfg.output_dir.join("report.json"), &doc)?;
    Ok(())
}
