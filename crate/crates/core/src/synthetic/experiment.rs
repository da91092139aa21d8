//! Candidate sweep over a pose space: sample a pool, draw many random sets,
//! score each one and report the extremes.

use serde::{Deserialize, Serialize};

use super::{NoiseModel, SyntheticError, VirtualCamera};
use crate::pose_space::{
    draw_candidate_sets, sample_space, score_candidates, select_from_scored, PoseSearchSpace,
    PoseSet, PoseSpaceError, ScoreReport, ScoringConfig,
};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Poses per candidate set.
    pub n: usize,
    /// Number of candidate sets.
    pub k_sets: usize,
    /// Admissible poses sampled before drawing sets.
    pub pool_size: usize,
    pub seed: u64,
    pub scoring: ScoringConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n: 20,
            k_sets: 200,
            pool_size: 500,
            seed: 0,
            scoring: ScoringConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), SyntheticError> {
        if self.n < 3 {
            return Err(PoseSpaceError::InvalidArgument(format!(
                "n must be at least 3, got {}",
                self.n
            ))
            .into());
        }
        if self.k_sets == 0 {
            return Err(PoseSpaceError::InvalidArgument("k_sets must be at least 1".into()).into());
        }
        if self.pool_size < self.n {
            return Err(PoseSpaceError::InvalidArgument(format!(
                "pool_size {} is smaller than n {}",
                self.pool_size, self.n
            ))
            .into());
        }
        Ok(())
    }
}

/// Every candidate with its score, in draw order.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSweep {
    pub candidates: Vec<PoseSet>,
    pub reports: Vec<ScoreReport>,
}

impl CandidateSweep {
    pub fn flagged_count(&self) -> usize {
        self.reports.iter().filter(|r| r.is_flagged()).count()
    }
}

/// Samples the pool from stream 0 of `config.seed`, draws candidate sets from
/// stream 1 and scores them all.
pub fn sweep_candidates(
    camera: &VirtualCamera,
    space: &PoseSearchSpace,
    config: &ExperimentConfig,
    noise: &NoiseModel,
) -> Result<CandidateSweep, SyntheticError> {
    config.validate()?;
    noise.validate()?;
    let pool = sample_space(
        space,
        &camera.truth,
        config.pool_size,
        seed::derive(config.seed, 0),
    )?;
    let candidates = draw_candidate_sets(
        &pool,
        config.n,
        config.k_sets,
        seed::derive(config.seed, 1),
        &space.id(),
    )?;
    let reports = score_candidates(&candidates, space, &camera.truth, noise, &config.scoring);
    Ok(CandidateSweep {
        candidates,
        reports,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtremalRow {
    pub label: String,
    pub candidate_index: usize,
    pub set_seed: u64,
    pub mre: f64,
    pub score: f64,
    pub param_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub space_id: String,
    pub camera: VirtualCamera,
    pub config: ExperimentConfig,
    pub noise: NoiseModel,
    pub candidates: usize,
    pub flagged: usize,
    /// Minimum and maximum MRE and score over unflagged candidates.
    pub rows: Vec<ExtremalRow>,
    pub selected: PoseSet,
    pub selected_report: ScoreReport,
}

impl ExperimentReport {
    pub fn row(&self, label: &str) -> Option<&ExtremalRow> {
        self.rows.iter().find(|r| r.label == label)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("label,set_seed,mre,score,param_err\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.label, r.set_seed, r.mre, r.score, r.param_err
            ));
        }
        out
    }
}

pub const ROW_LABELS: [&str; 4] = ["min_mre", "max_mre", "min_score", "max_score"];

/// Extremal rows over the unflagged candidates. Ties go to the lower index.
pub fn extremal_rows(sweep: &CandidateSweep) -> Result<Vec<ExtremalRow>, PoseSpaceError> {
    let valid: Vec<(usize, f64, f64, f64)> = sweep
        .reports
        .iter()
        .enumerate()
        .filter(|(_, r)| !r.is_flagged())
        .filter_map(|(i, r)| Some((i, r.mre?, r.score, r.param_err?)))
        .collect();
    if valid.is_empty() {
        return Err(PoseSpaceError::AllDegenerate {
            candidates: sweep.candidates.len(),
        });
    }
    let pick = |key: fn(&(usize, f64, f64, f64)) -> f64, max: bool| {
        let mut best = valid[0];
        for v in &valid[1..] {
            let better = if max {
                key(v) > key(&best)
            } else {
                key(v) < key(&best)
            };
            if better {
                best = *v;
            }
        }
        best
    };
    let chosen = [
        pick(|v| v.1, false),
        pick(|v| v.1, true),
        pick(|v| v.2, false),
        pick(|v| v.2, true),
    ];
    Ok(ROW_LABELS
        .iter()
        .zip(chosen)
        .map(|(label, (i, mre, score, param_err))| ExtremalRow {
            label: (*label).to_string(),
            candidate_index: i,
            set_seed: sweep.candidates[i].seed,
            mre,
            score,
            param_err,
        })
        .collect())
}

/// Sweeps `config.k_sets` random sets and reports the extremal rows and the
/// selected (highest scoring) set.
pub fn run_table1_experiment(
    camera: &VirtualCamera,
    space: &PoseSearchSpace,
    config: &ExperimentConfig,
    noise: &NoiseModel,
) -> Result<ExperimentReport, SyntheticError> {
    let sweep = sweep_candidates(camera, space, config, noise)?;
    let rows = extremal_rows(&sweep)?;
    let (selected, selected_report) = select_from_scored(&sweep.candidates, &sweep.reports)?;
    Ok(ExperimentReport {
        schema_version: crate::SCHEMA_VERSION,
        space_id: space.id(),
        camera: *camera,
        config: *config,
        noise: *noise,
        candidates: sweep.candidates.len(),
        flagged: sweep.flagged_count(),
        rows,
        selected: selected.clone(),
        selected_report: selected_report.clone(),
    })
}
