//! Self-checks against the brute-force oracle, grouped into suites.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::aggregate::{
    advantage, aggregate_weighted, argmax_set, dominance_threshold, isp_score, sp_score, Rule,
    TiePolicy,
};
use crate::error::{Error, Result};
use crate::oracle::{
    advantage_gaps, bayes_posterior, exact_expected_advantage_at, expected_accuracy_with_budget,
    mixture_expected_advantage, mixture_joint_correct, mixture_posterior, outcome_count, Decider,
    DifficultyMixture,
};
use crate::rng::{stream, Purpose};
use crate::secondorder::exact_second_order;
use crate::shuffle::{shuffle_apply, shuffle_invert};
use crate::sigma::{sigma_k, sigma_k_inverse};
use crate::types::{AgentProfile, Clamp, Label, LabelSpace, PredictionMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    All,
    Thm1,
    Thm2,
    Thm4,
    Thm5,
    Props,
    Examples,
}

impl std::str::FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "all" => Suite::All,
            "thm1" => Suite::Thm1,
            "thm2" => Suite::Thm2,
            "thm4" => Suite::Thm4,
            "thm5" => Suite::Thm5,
            "props" => Suite::Props,
            "examples" => Suite::Examples,
            other => return Err(Error::Input(format!("unknown suite {other:?}"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Status {
    Pass,
    Fail,
    Skipped,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Skipped => "SKIPPED",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub suite: String,
    pub name: String,
    pub status: Status,
    pub observed: String,
    pub expected: String,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<7} [{}] {}: observed {}; expected {}",
            self.status, self.suite, self.name, self.observed, self.expected
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VerifyConfig {
    pub seed: u64,
    /// Largest `K^N` any single enumeration may visit; larger cases are skipped.
    pub budget: u64,
    /// Random instances for the randomized suites.
    pub thm1_instances: usize,
    pub thm2_instances: usize,
    pub mixture_instances: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            budget: crate::oracle::ENUMERATION_BUDGET,
            thm1_instances: 100,
            thm2_instances: 200,
            mixture_instances: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub checks: Vec<Check>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != Status::Fail)
    }

    pub fn count(&self, status: Status) -> usize {
        self.checks.iter().filter(|c| c.status == status).count()
    }
}

struct Recorder<'a> {
    suite: &'a str,
    checks: Vec<Check>,
}

impl Recorder<'_> {
    fn push(&mut self, name: &str, ok: bool, observed: String, expected: impl Into<String>) {
        self.checks.push(Check {
            suite: self.suite.into(),
            name: name.into(),
            status: if ok { Status::Pass } else { Status::Fail },
            observed,
            expected: expected.into(),
        });
    }

    fn close(&mut self, name: &str, observed: f64, expected: f64, tol: f64) {
        let ok = (observed - expected).abs() <= tol;
        self.push(
            name,
            ok,
            format!("{observed:.12}"),
            format!("{expected:.12} +/- {tol:e}"),
        );
    }

    fn skip(&mut self, name: &str, why: String) {
        self.checks.push(Check {
            suite: self.suite.into(),
            name: name.into(),
            status: Status::Skipped,
            observed: why,
            expected: "-".into(),
        });
    }
}

fn fits(n: usize, k: usize, budget: u64) -> bool {
    outcome_count(n, k).is_some_and(|c| c <= budget)
}

fn each_vector(n: usize, k: usize, mut f: impl FnMut(&[Label])) {
    let total = outcome_count(n, k).expect("checked against budget");
    let mut a = vec![0; n];
    for mut idx in 0..total {
        for slot in a.iter_mut() {
            *slot = (idx % k as u64) as Label;
            idx /= k as u64;
        }
        f(&a);
    }
}

fn random_accuracies(rng: &mut impl Rng, n: usize, k: usize, margin: f64) -> Vec<f64> {
    let lo = 1.0 / k as f64 + margin;
    (0..n)
        .map(|_| rng.random_range(lo..=1.0 - margin))
        .collect()
}

/// Run one suite (or all of them).
pub fn run(suite: Suite, cfg: &VerifyConfig) -> Result<Report> {
    let mut checks = Vec::new();
    let want = |s: Suite| suite == Suite::All || suite == s;
    if want(Suite::Examples) {
        checks.extend(examples(cfg)?);
    }
    if want(Suite::Thm1) {
        checks.extend(thm1(cfg)?);
    }
    if want(Suite::Thm2) {
        checks.extend(thm2(cfg)?);
    }
    if want(Suite::Thm4) {
        checks.extend(thm4(cfg)?);
    }
    if want(Suite::Thm5) {
        checks.extend(thm5(cfg)?);
    }
    if want(Suite::Props) {
        checks.extend(props(cfg)?);
    }
    Ok(Report { checks })
}

fn examples(cfg: &VerifyConfig) -> Result<Vec<Check>> {
    let mut r = Recorder {
        suite: "examples",
        checks: Vec::new(),
    };
    let x1 = [1.0, 1.0, 0.5, 0.5];
    let acc = |d: Decider, x: &[f64]| expected_accuracy_with_budget(&d, x, 2, cfg.budget);
    r.close(
        "two perfect + two random agents: MV accuracy",
        acc(Decider::Mv, &x1)?,
        7.0 / 8.0,
        1e-12,
    );
    r.close(
        "two perfect + two random agents: SP accuracy",
        acc(Decider::Sp, &x1)?,
        3.0 / 4.0,
        1e-12,
    );
    r.close(
        "two perfect + two random agents: ISP accuracy",
        acc(Decider::Isp, &x1)?,
        1.0,
        1e-12,
    );
    let space = LabelSpace::indexed(2)?;
    let so = exact_second_order(&x1, 2)?;
    let split = [0, 0, 1, 1];
    r.close(
        "split vote: ISP advantage of s1",
        advantage(Rule::Isp, &split, &space, &so)?.get(0),
        1.0 / 3.0,
        1e-12,
    );
    r.close(
        "split vote: SP advantage of s1",
        advantage(Rule::Sp, &split, &space, &so)?.get(0),
        -1.0 / 3.0,
        1e-12,
    );

    let x9: Vec<f64> = [1.0; 4].into_iter().chain([0.5; 5]).collect();
    if fits(9, 2, cfg.budget) {
        r.close(
            "four perfect + five random agents: MV error",
            1.0 - acc(Decider::Mv, &x9)?,
            1.0 / 32.0,
            1e-12,
        );
        r.close(
            "four perfect + five random agents: SP error",
            1.0 - acc(Decider::Sp, &x9)?,
            3.0 / 16.0,
            1e-12,
        );
        r.close(
            "four perfect + five random agents: ISP error",
            1.0 - acc(Decider::Isp, &x9)?,
            0.0,
            1e-12,
        );
    } else {
        r.skip(
            "four perfect + five random agents",
            format!("2^9 exceeds budget {}", cfg.budget),
        );
    }

    let mix = DifficultyMixture::atoms(vec![(0.0, 0.3), (f64::INFINITY, 0.7)])?;
    let (joint, product) = mixture_joint_correct(&[1.0, 1.0], &mix, 2, 0, 1)?;
    r.close("hard/easy mixture: joint accuracy", joint, 0.775, 1e-12);
    r.close(
        "hard/easy mixture: product of marginals",
        product,
        0.7225,
        1e-12,
    );
    Ok(r.checks)
}

fn thm1(cfg: &VerifyConfig) -> Result<Vec<Check>> {
    let mut r = Recorder {
        suite: "thm1",
        checks: Vec::new(),
    };
    let clamp = Clamp::default();
    let (mut vectors, mut misses, mut skipped) = (0usize, 0usize, 0usize);
    let (mut homo_vectors, mut homo_misses) = (0usize, 0usize);
    let (mut dom_cases, mut dom_misses, mut worst_gain) = (0usize, 0usize, f64::INFINITY);
    for inst in 0..cfg.thm1_instances {
        let mut rng = stream(cfg.seed, Purpose::Replication, inst as u64);
        let n = rng.random_range(1..=5);
        let k = rng.random_range(2..=4);
        if !fits(n, k, cfg.budget) {
            skipped += 1;
            continue;
        }
        let space = LabelSpace::indexed(k)?;
        let x: Vec<f64> = random_accuracies(&mut rng, n, k, 0.0)
            .into_iter()
            .map(|v| clamp.apply(v, k))
            .collect();
        let w = AgentProfile::from_accuracies(&x, k, clamp)?.weight;
        each_vector(n, k, |a| {
            vectors += 1;
            let post = bayes_posterior(a, &x, &space).expect("clamped accuracies");
            let pick =
                aggregate_weighted(a, &w, &space, &TiePolicy::LowestIndex, 0).expect("valid");
            let best = post.iter().copied().fold(0.0, f64::max);
            if post[pick] < best * (1.0 - 1e-9) {
                misses += 1;
            }
        });

        let h = rng.random_range(1.0 / k as f64 + 0.01..0.99);
        let hw = clamp.weight(h, k)?;
        each_vector(n, k, |a| {
            homo_vectors += 1;
            let mut votes = vec![0.0; k];
            for &ai in a {
                votes[ai] += 1.0;
            }
            let weighted: Vec<f64> = votes.iter().map(|v| v * hw).collect();
            if argmax_set(&weighted, hw * n as f64) != argmax_set(&votes, n as f64) {
                homo_misses += 1;
            }
        });

        if n >= 2 {
            let xd = random_accuracies(&mut rng, n, k, 0.01);
            let wd = AgentProfile::from_accuracies(&xd, k, clamp)?.weight;
            let ow = expected_accuracy_with_budget(&Decider::Weighted(wd), &xd, k, cfg.budget)?;
            for i in 0..n {
                if dominance_threshold(&xd, i, &space)? - xd[i] > 1e-6 {
                    dom_cases += 1;
                    let gain = ow - xd[i];
                    worst_gain = worst_gain.min(gain);
                    if gain <= 1e-12 {
                        dom_misses += 1;
                    }
                }
            }
        }
    }
    r.push(
        "OW choice lies in the Bayes posterior argmax set",
        misses == 0,
        format!("{misses} misses over {vectors} answer vectors"),
        "0 misses",
    );
    r.push(
        "equal accuracies: OW ties equal MV ties",
        homo_misses == 0,
        format!("{homo_misses} differences over {homo_vectors} answer vectors"),
        "0 differences",
    );
    r.push(
        "OW beats any agent below its dominance threshold",
        dom_misses == 0 && dom_cases > 0,
        format!("{dom_misses} failures over {dom_cases} agents, smallest gain {worst_gain:.3e}"),
        "0 failures, gain > 0",
    );
    if skipped > 0 {
        r.skip(
            "thm1 oversized instances",
            format!("{skipped} instances over budget"),
        );
    }
    Ok(r.checks)
}

fn thm2(cfg: &VerifyConfig) -> Result<Vec<Check>> {
    let mut r = Recorder {
        suite: "thm2",
        checks: Vec::new(),
    };
    let (mut worst, mut negative, mut done, mut skipped) = (0.0f64, 0usize, 0usize, 0usize);
    for inst in 0..cfg.thm2_instances {
        let mut rng = stream(cfg.seed, Purpose::Replication, 10_000 + inst as u64);
        let n = rng.random_range(2..=5);
        let k = rng.random_range(2..=4);
        if !fits(n, k, cfg.budget) {
            skipped += 1;
            continue;
        }
        let x = random_accuracies(&mut rng, n, k, 0.0);
        let mv = exact_expected_advantage_at(Rule::Mv, &x, k, 0, cfg.budget)?;
        let sp = exact_expected_advantage_at(Rule::Sp, &x, k, 0, cfg.budget)?;
        let isp = exact_expected_advantage_at(Rule::Isp, &x, k, 0, cfg.budget)?;
        let (g1, g2) = advantage_gaps(&x, k)?;
        worst = worst.max((isp - mv - g1).abs()).max((mv - sp - g2).abs());
        if g1 < 0.0 || g2 < 0.0 {
            negative += 1;
        }
        done += 1;
    }
    r.push(
        "closed-form gaps equal enumerated gaps",
        worst <= 1e-10 && done > 0,
        format!("max |diff| {worst:.3e} over {done} instances"),
        "<= 1e-10",
    );
    r.push(
        "gaps are non-negative",
        negative == 0,
        format!("{negative} negative"),
        "0 negative",
    );
    if skipped > 0 {
        r.skip(
            "thm2 oversized instances",
            format!("{skipped} instances over budget"),
        );
    }
    Ok(r.checks)
}

fn random_mixture_instance(
    cfg: &VerifyConfig,
    inst: usize,
) -> Result<(Vec<f64>, DifficultyMixture, usize)> {
    let mut rng = stream(cfg.seed, Purpose::Replication, 20_000 + inst as u64);
    let n = rng.random_range(2..=4);
    let k = rng.random_range(2..=3);
    let beta = (0..n).map(|_| rng.random_range(0.0..3.0)).collect();
    let w = rng.random_range(0.05..0.95);
    let mix = DifficultyMixture::atoms(vec![
        (rng.random_range(0.05..3.0), w),
        (rng.random_range(0.05..3.0), 1.0 - w),
    ])?;
    Ok((beta, mix, k))
}

fn thm4(cfg: &VerifyConfig) -> Result<Vec<Check>> {
    let mut r = Recorder {
        suite: "thm4",
        checks: Vec::new(),
    };
    let (mut vectors, mut misses) = (0usize, 0usize);
    for inst in 0..cfg.mixture_instances {
        let (beta, mix, k) = random_mixture_instance(cfg, inst)?;
        let space = LabelSpace::indexed(k)?;
        let mut err = None;
        each_vector(beta.len(), k, |a| {
            vectors += 1;
            match mixture_posterior(a, &beta, &mix, &space) {
                Ok(post) => {
                    let pick = aggregate_weighted(a, &beta, &space, &TiePolicy::LowestIndex, 0)
                        .expect("valid");
                    let best = post.iter().copied().fold(0.0, f64::max);
                    if post[pick] < best * (1.0 - 1e-9) {
                        misses += 1;
                    }
                }
                Err(e) => err = Some(e),
            }
        });
        if let Some(e) = err {
            return Err(e);
        }
    }
    r.push(
        "ability-weighted choice lies in the mixture posterior argmax set",
        misses == 0 && vectors > 0,
        format!("{misses} misses over {vectors} answer vectors"),
        "0 misses",
    );
    Ok(r.checks)
}

fn thm5(cfg: &VerifyConfig) -> Result<Vec<Check>> {
    let mut r = Recorder {
        suite: "thm5",
        checks: Vec::new(),
    };
    let (mut violations, mut worst) = (0usize, f64::INFINITY);
    for inst in 0..cfg.mixture_instances {
        let (beta, mix, k) = random_mixture_instance(cfg, inst)?;
        let adv = |rule| mixture_expected_advantage(rule, &beta, &mix, k, cfg.budget);
        let (mv, sp, isp) = (adv(Rule::Mv)?, adv(Rule::Sp)?, adv(Rule::Isp)?);
        let margin = (isp - mv).min(mv - sp);
        worst = worst.min(margin);
        if margin < -1e-10 {
            violations += 1;
        }
    }
    r.push(
        "mixture model: E[Adv_ISP] >= E[Adv_MV] >= E[Adv_SP]",
        violations == 0,
        format!(
            "{violations} violations over {} instances, smallest margin {worst:.3e}",
            cfg.mixture_instances
        ),
        "0 violations",
    );
    Ok(r.checks)
}

fn props(cfg: &VerifyConfig) -> Result<Vec<Check>> {
    let mut r = Recorder {
        suite: "props",
        checks: Vec::new(),
    };
    let mut rng = stream(cfg.seed, Purpose::Replication, 30_000);

    let (mut exch, mut sym, mut cols) = (0.0f64, 0.0f64, 0.0f64);
    let mut monotone_ok = true;
    let mut null_err = 0.0f64;
    for _ in 0..100 {
        let k = rng.random_range(2..=6);
        let n = rng.random_range(2..=5);
        let x = random_accuracies(&mut rng, n, k, 0.0);
        let so = exact_second_order(&x, k)?;
        cols = cols.max(so.max_column_error().unwrap_or(0.0));
        for (i, j, s, t, p, _) in so.cells() {
            exch = exch.max((p - so.get(j, i, t, s)).abs());
            if s == t {
                sym = sym.max((p - so.get(i, j, 0, 0)).abs());
            }
        }
        let mut y = x.clone();
        y[0] = rng.random_range(x[0]..=1.0);
        let raised = exact_second_order(&y, k)?;
        for j in 1..n {
            monotone_ok &= raised.get(0, j, 0, 0) >= so.get(0, j, 0, 0) - 1e-15;
        }
        let mut z = x.clone();
        z[0] = 1.0 / k as f64;
        let nulled = exact_second_order(&z, k)?;
        for j in 1..n {
            for s in 0..k {
                for t in 0..k {
                    null_err = null_err.max((nulled.get(0, j, s, t) - 1.0 / k as f64).abs());
                    null_err = null_err.max((nulled.get(j, 0, s, t) - 1.0 / k as f64).abs());
                }
            }
        }
    }
    r.push(
        "exchangeability",
        exch <= 1e-12,
        format!("max |diff| {exch:.3e}"),
        "<= 1e-12",
    );
    r.push(
        "same-label symmetry",
        sym <= 1e-12,
        format!("max |diff| {sym:.3e}"),
        "<= 1e-12",
    );
    r.push(
        "columns sum to one",
        cols <= 1e-9,
        format!("max error {cols:.3e}"),
        "<= 1e-9",
    );
    r.push(
        "monotone in accuracy",
        monotone_ok,
        format!("{monotone_ok}"),
        "true",
    );
    r.push(
        "null information",
        null_err <= 1e-15,
        format!("max |p - 1/K| {null_err:.3e}"),
        "<= 1e-15",
    );

    let (mut sum_err, mut bound_ok, mut score_err) = (0.0f64, true, 0.0f64);
    for _ in 0..200 {
        let k = rng.random_range(2..=5);
        let n = rng.random_range(2..=7);
        let space = LabelSpace::indexed(k)?;
        let x = random_accuracies(&mut rng, n, k, 0.0);
        let so = exact_second_order(&x, k)?;
        let a: Vec<Label> = (0..n).map(|_| rng.random_range(0..k)).collect();
        for rule in [Rule::Mv, Rule::Sp, Rule::Isp] {
            let adv = advantage(rule, &a, &space, &so)?;
            sum_err = sum_err.max(adv.sum().abs());
            bound_ok &= adv.values.iter().all(|v| v.abs() <= n as f64 + 1e-12);
        }
        // each agent's scores are distributions over labels
        for i in 0..n {
            let sp: f64 = (0..k)
                .map(|s| sp_score(s, i, &a, &so))
                .sum::<Result<f64>>()?;
            let isp: f64 = (0..k)
                .map(|s| isp_score(s, i, &a, &so))
                .sum::<Result<f64>>()?;
            score_err = score_err.max((sp - 1.0).abs()).max((isp - 1.0).abs());
        }
    }
    r.push(
        "advantages sum to zero",
        sum_err <= 1e-9,
        format!("max |sum| {sum_err:.3e}"),
        "<= 1e-9",
    );
    r.push(
        "advantages bounded by N",
        bound_ok,
        format!("{bound_ok}"),
        "true",
    );
    r.push(
        "scores sum to one over labels",
        score_err <= 1e-9,
        format!("max error {score_err:.3e}"),
        "<= 1e-9",
    );

    let mut round_trip = true;
    for t in 0..20u64 {
        let k = rng.random_range(2..=6);
        let rows: Vec<Vec<Label>> = (0..30)
            .map(|_| (0..3).map(|_| rng.random_range(0..k)).collect())
            .collect();
        let truth = rows.iter().map(|r| r[0]).collect();
        let pm = PredictionMatrix::from_rows(LabelSpace::indexed(k)?, rows, Some(truth))?;
        let (shuffled, map) = shuffle_apply(&pm, cfg.seed ^ t);
        round_trip &= shuffle_invert(&shuffled, &map)? == pm;
    }
    r.push(
        "shuffle round trip",
        round_trip,
        format!("{round_trip}"),
        "true",
    );

    let mut sig = 0.0f64;
    for _ in 0..1000 {
        let k = rng.random_range(2..=10);
        let p = rng.random_range(1e-6..1.0 - 1e-6);
        sig = sig.max((sigma_k(sigma_k_inverse(p, k)?, k)? - p).abs() / p);
    }
    r.push(
        "sigmoid round trip",
        sig <= 1e-12,
        format!("max rel error {sig:.3e}"),
        "<= 1e-12",
    );
    Ok(r.checks)
}
