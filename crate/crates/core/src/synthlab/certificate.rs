//! End-to-end certificate: fit on inputs manufactured from a ground truth and
//! compare every posterior with the oracle.

use serde::Serialize;

use super::{exact_observable_distribution, exact_parent_given_value, sample_counts, GroundTruthModel, Oracle};
use crate::assignment::Assignment;
use crate::estimation::{estimate_parent_given_value, DatasetPriors, ParentGivenValueTable};
use crate::identification::{fit_model, FitOptions, FittedModel};
use crate::inference::posterior_value;
use crate::table::JointTable;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "mode")]
pub enum CertificateMode {
    /// Analytic tables; tolerance `1e-9` on evidence of probability `>= 1e-9`.
    Exact,
    /// `events` samples per dataset; tolerance `0.02` on evidence of
    /// probability `>= 0.01`.
    Sampled { events: usize },
}

impl CertificateMode {
    pub fn tolerance(&self) -> f64 {
        match self {
            CertificateMode::Exact => 1e-9,
            CertificateMode::Sampled { .. } => 0.02,
        }
    }

    pub fn evidence_threshold(&self) -> f64 {
        match self {
            CertificateMode::Exact => 1e-9,
            CertificateMode::Sampled { .. } => 0.01,
        }
    }
}

/// The main table and the intervened dataset pair.
#[derive(Debug, Clone, PartialEq)]
pub struct FitInputs {
    pub observed: JointTable,
    pub randomized: JointTable,
    pub algorithmic: JointTable,
    pub priors: DatasetPriors,
}

impl FitInputs {
    pub fn parent_given_value(&self, gt: &GroundTruthModel) -> Result<ParentGivenValueTable, String> {
        estimate_parent_given_value(&self.randomized, &self.algorithmic, &self.priors, gt.spec())
            .map_err(|e| e.to_string())
    }

    /// Fits with the true prior.
    pub fn fit(&self, gt: &GroundTruthModel) -> Result<(ParentGivenValueTable, FittedModel), String> {
        let pgv = self.parent_given_value(gt)?;
        let options = FitOptions {
            prior_v: gt.prior_v(),
            ..FitOptions::default()
        };
        let model = fit_model(gt.spec(), &self.observed, &pgv, &options).map_err(|e| e.to_string())?;
        Ok((pgv, model))
    }
}

pub fn exact_inputs(gt: &GroundTruthModel, priors: DatasetPriors) -> FitInputs {
    let table = |g: &GroundTruthModel| exact_observable_distribution(g).expect("ground truth within the enumeration cap");
    FitInputs {
        observed: table(gt),
        randomized: table(&gt.intervene_prior(priors.randomized())),
        algorithmic: table(&gt.intervene_prior(priors.algorithmic())),
        priors,
    }
}

/// Streams 0, 1 and 2 of `seed` feed the main, randomized and algorithmic
/// datasets.
pub fn sampled_inputs(gt: &GroundTruthModel, events: usize, seed: u64, priors: DatasetPriors) -> FitInputs {
    let table = |g: &GroundTruthModel, stream| {
        sample_counts(g, events, seed, stream)
            .to_table(0.0)
            .expect("at least one event")
    };
    FitInputs {
        observed: table(gt, 0),
        randomized: table(&gt.intervene_prior(priors.randomized()), 1),
        algorithmic: table(&gt.intervene_prior(priors.algorithmic()), 2),
        priors,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertificateOutcome {
    pub seed: u64,
    /// Evidence assignments compared.
    pub checked: usize,
    pub max_error: f64,
    /// Evidence with the largest error.
    pub worst: Option<String>,
    /// Largest deviation of the two-dataset estimate from the true table.
    pub estimator_error: f64,
    pub estimator_clamps: usize,
    pub factor_clamps: usize,
    /// Set when the pipeline failed outright.
    pub error: Option<String>,
    pub passed: bool,
}

/// Certifies `gt`: every full observed assignment and every single-behavior
/// event above the mode's probability threshold must agree with the oracle.
pub fn certify(gt: &GroundTruthModel, mode: CertificateMode, seed: u64) -> CertificateOutcome {
    let priors = DatasetPriors::default();
    let inputs = match mode {
        CertificateMode::Exact => exact_inputs(gt, priors),
        CertificateMode::Sampled { events } => sampled_inputs(gt, events, seed, priors),
    };
    let mut outcome = CertificateOutcome {
        seed: gt.seed(),
        checked: 0,
        max_error: 0.0,
        worst: None,
        estimator_error: 0.0,
        estimator_clamps: 0,
        factor_clamps: 0,
        error: None,
        passed: false,
    };
    let (pgv, model) = match inputs.fit(gt) {
        Ok(fit) => fit,
        Err(e) => {
            outcome.error = Some(e);
            return outcome;
        }
    };
    outcome.estimator_clamps = pgv.diagnostics().len();
    outcome.factor_clamps = model.report().total_clamped;
    let truth = exact_parent_given_value(gt).expect("true conditionals are normalized");
    for w in 0..truth.scope().cells() {
        for v in [false, true] {
            outcome.estimator_error = outcome.estimator_error.max((pgv.prob(w, v) - truth.prob(w, v)).abs());
        }
    }

    let oracle = Oracle::new(gt).expect("ground truth within the enumeration cap");
    let spec = gt.spec();
    let threshold = mode.evidence_threshold();
    let mut evidence: Vec<(Assignment, f64)> = oracle
        .full_evidence_table()
        .into_iter()
        .filter(|&(_, p, _)| p >= threshold)
        .map(|(state, _, post)| (Assignment::from_masks(spec.observed_mask(), state), post.expect("possible")))
        .collect();
    for node in spec.observed() {
        for value in [false, true] {
            let e = Assignment::empty().with(node, value);
            if oracle.evidence_probability(&e).expect("observed evidence") >= threshold {
                let post = oracle.posterior(&e).expect("possible evidence");
                evidence.push((e, post));
            }
        }
    }

    let mut failed = false;
    for (e, want) in &evidence {
        let err = match posterior_value(&model, e) {
            Ok(r) => (r.raw - want).abs(),
            Err(_) => f64::INFINITY,
        };
        outcome.checked += 1;
        if err > outcome.max_error || err.is_nan() {
            outcome.max_error = err;
            outcome.worst = Some(spec.display(e));
        }
        failed |= err.is_nan() || err > mode.tolerance();
    }
    outcome.passed = !failed;
    outcome
}
