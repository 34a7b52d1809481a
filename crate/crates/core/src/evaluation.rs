//! Repeated random train/test evaluation with a cross-validated weight sweep.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::DEFAULT_WINDOW;
use crate::landmarks::{Label, SubjectRecord};
use crate::measurements::conventional_measurements;
use crate::pipeline::{fit_pipeline, SubjectFeatures};
use crate::registration::RegParams;
use crate::svm::{LinearSvm, SvmParams};
use crate::sweep::{stratified_folds, sweep_weights};

/// Per-class training count used once every class has at least this many
/// training-plus-test subjects.
const FULL_TRAIN: usize = 40;
const FULL_TEST: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProtocolConfig {
    pub n_tests: usize,
    pub k: usize,
    pub rho: f64,
    pub folds: usize,
    pub window: usize,
    pub seed: u64,
    pub reg: RegParams,
    pub svm: SvmParams,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            n_tests: 100,
            k: 500,
            rho: 0.05,
            folds: 10,
            window: DEFAULT_WINDOW,
            seed: 0,
            reg: RegParams::default(),
            svm: SvmParams::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
    pub fp: usize,
}

impl ConfusionCounts {
    /// OSA is the positive class.
    pub fn tally(predictions: &[Label], labels: &[Label]) -> Result<Self> {
        if predictions.len() != labels.len() || labels.is_empty() {
            return Err(Error::InvalidInput(format!(
                "{} predictions for {} labels",
                predictions.len(),
                labels.len()
            )));
        }
        let mut c = ConfusionCounts::default();
        for (&p, &l) in predictions.iter().zip(labels) {
            match (l, p) {
                (Label::Osa, Label::Osa) => c.tp += 1,
                (Label::Osa, Label::Control) => c.fn_ += 1,
                (Label::Control, Label::Control) => c.tn += 1,
                (Label::Control, Label::Osa) => c.fp += 1,
            }
        }
        Ok(c)
    }

    pub fn total(&self) -> usize {
        self.tp + self.fn_ + self.tn + self.fp
    }

    /// `(sensitivity, specificity, accuracy)`; needs both classes present.
    pub fn metrics(&self) -> Result<(f64, f64, f64)> {
        let pos = self.tp + self.fn_;
        let neg = self.tn + self.fp;
        if pos == 0 || neg == 0 {
            return Err(Error::InvalidCohort(format!(
                "metrics need both classes, got {pos} osa and {neg} control"
            )));
        }
        Ok((
            self.tp as f64 / pos as f64,
            self.tn as f64 / neg as f64,
            (self.tp + self.tn) as f64 / self.total() as f64,
        ))
    }
}

/// `(sensitivity, specificity, accuracy)` with OSA as the positive class.
pub fn confusion_metrics(predictions: &[Label], labels: &[Label]) -> Result<(f64, f64, f64)> {
    ConfusionCounts::tally(predictions, labels)?.metrics()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestRecord {
    pub test: usize,
    pub seed: u64,
    pub reference: Option<String>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub k: Option<usize>,
    pub cv_accuracy: Option<f64>,
    #[serde(flatten)]
    pub counts: ConfusionCounts,
    pub sensitivity: f64,
    pub specificity: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean_sensitivity: f64,
    pub std_sensitivity: f64,
    pub mean_specificity: f64,
    pub std_specificity: f64,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
}

/// Mean and sample standard deviation (zero for a single value).
fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    if n < 2.0 {
        return (mean, 0.0);
    }
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

impl Aggregate {
    pub fn of(tests: &[TestRecord]) -> Self {
        let (mean_sensitivity, std_sensitivity) = mean_std(tests.iter().map(|t| t.sensitivity));
        let (mean_specificity, std_specificity) = mean_std(tests.iter().map(|t| t.specificity));
        let (mean_accuracy, std_accuracy) = mean_std(tests.iter().map(|t| t.accuracy));
        Aggregate {
            mean_sensitivity,
            std_sensitivity,
            mean_specificity,
            std_specificity,
            mean_accuracy,
            std_accuracy,
        }
    }
}

/// The configuration a report was produced under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub model: String,
    pub subjects: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub n_tests: usize,
    pub seed: u64,
    pub k: Option<usize>,
    pub rho: Option<f64>,
    pub folds: Option<usize>,
    pub window: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub run: RunInfo,
    pub aggregate: Aggregate,
    pub test: Vec<TestRecord>,
}

const CSV_HEADER: [&str; 15] = [
    "test",
    "seed",
    "reference",
    "alpha",
    "beta",
    "k",
    "cv_accuracy",
    "tp",
    "fn",
    "tn",
    "fp",
    "sensitivity",
    "specificity",
    "accuracy",
    "total",
];

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map_or(String::new(), T::to_string)
}

impl EvalReport {
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidInput(format!("report serialization: {e}")))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidInput(format!("report parse: {e}")))
    }

    /// One row per test, in test order.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let csv_err = |e: csv::Error| Error::InvalidInput(format!("report serialization: {e}"));
        w.write_record(CSV_HEADER).map_err(csv_err)?;
        for t in &self.test {
            let c = t.counts;
            w.write_record([
                t.test.to_string(),
                t.seed.to_string(),
                opt(&t.reference),
                opt(&t.alpha),
                opt(&t.beta),
                opt(&t.k),
                opt(&t.cv_accuracy),
                c.tp.to_string(),
                c.fn_.to_string(),
                c.tn.to_string(),
                c.fp.to_string(),
                t.sensitivity.to_string(),
                t.specificity.to_string(),
                t.accuracy.to_string(),
                c.total().to_string(),
            ])
            .map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::InvalidInput(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// Largest accepted master seed; reports store seeds as TOML integers,
/// which are signed 64-bit.
pub const MAX_SEED: u64 = i64::MAX as u64;

/// Seed of test `t`: the first output of the `t`-th ChaCha8 stream keyed by
/// the master seed, reduced to 63 bits.
pub fn test_seed(master: u64, t: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(t as u64);
    rng.next_u64() >> 1
}

/// Per-class train and test sizes: 40/20 for large classes, otherwise
/// two thirds of the smaller class for training and the rest for testing.
pub fn split_sizes(labels: &[Label]) -> Result<(usize, usize)> {
    let n_osa = labels.iter().filter(|l| l.is_osa()).count();
    let m = n_osa.min(labels.len() - n_osa);
    let (train, test) = if m >= FULL_TRAIN + FULL_TEST {
        (FULL_TRAIN, FULL_TEST)
    } else {
        (2 * m / 3, m - 2 * m / 3)
    };
    if train < 3 || test < 1 {
        return Err(Error::InvalidCohort(format!(
            "{m} subjects in the smaller class is too few for a train/test split"
        )));
    }
    Ok((train, test))
}

/// One random split: indices into the cohort.
#[derive(Debug, Clone, PartialEq)]
pub struct TestPlan {
    pub seed: u64,
    pub reference: usize,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    /// Cross-validation fold of each training subject.
    pub folds: Vec<usize>,
}

/// Class-balanced splits, a reference drawn from the training controls, and
/// stratified folds, all from the derived per-test seeds.
pub fn plan_tests(labels: &[Label], n_tests: usize, folds: usize, master: u64) -> Result<Vec<TestPlan>> {
    if n_tests == 0 {
        return Err(Error::InvalidInput("need at least one test".into()));
    }
    if master > MAX_SEED {
        return Err(Error::InvalidInput(format!("seed {master} exceeds {MAX_SEED}")));
    }
    let (n_train, n_test) = split_sizes(labels)?;
    if n_train < folds {
        return Err(Error::Stratification(format!(
            "{n_train} training subjects per class cannot fill {folds} folds"
        )));
    }
    (0..n_tests)
        .map(|t| {
            let seed = test_seed(master, t);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (mut train, mut test) = (Vec::new(), Vec::new());
            for class in [Label::Control, Label::Osa] {
                let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
                members.shuffle(&mut rng);
                train.extend_from_slice(&members[..n_train]);
                test.extend_from_slice(&members[n_train..n_train + n_test]);
            }
            let reference = train[rng.gen_range(0..n_train)];
            let train_labels: Vec<Label> = train.iter().map(|&i| labels[i]).collect();
            let folds = stratified_folds(&train_labels, folds, &mut rng)?;
            Ok(TestPlan {
                seed,
                reference,
                train,
                test,
                folds,
            })
        })
        .collect()
}

/// Where the protocol gets registration features from.
pub trait FeatureSource {
    fn labels(&self) -> &[Label];

    fn id(&self, subject: usize) -> String;

    /// Features of `subject` against the reference `reference`.
    fn features(&self, reference: usize, subject: usize) -> Result<SubjectFeatures>;
}

/// Registration of real images.
pub struct RegistrationSource<'a> {
    db: &'a [SubjectRecord],
    labels: Vec<Label>,
    params: RegParams,
    window: usize,
}

impl<'a> RegistrationSource<'a> {
    pub fn new(db: &'a [SubjectRecord], params: RegParams, window: usize) -> Result<Self> {
        let labels = db.iter().map(SubjectRecord::require_label).collect::<Result<Vec<_>>>()?;
        Ok(RegistrationSource {
            db,
            labels,
            params,
            window,
        })
    }
}

impl FeatureSource for RegistrationSource<'_> {
    fn labels(&self) -> &[Label] {
        &self.labels
    }

    fn id(&self, subject: usize) -> String {
        self.db[subject].id.clone()
    }

    fn features(&self, reference: usize, subject: usize) -> Result<SubjectFeatures> {
        log::debug!("registering {} onto {}", self.db[reference].id, self.db[subject].id);
        SubjectFeatures::extract(&self.db[reference], &self.db[subject], &self.params, self.window)
    }
}

/// Registrations shared between tests that drew the same reference.
struct Cache<'s, S: FeatureSource> {
    source: &'s S,
    entries: BTreeMap<(usize, usize), SubjectFeatures>,
}

impl<S: FeatureSource> Cache<'_, S> {
    fn fill(&mut self, reference: usize, subjects: &[usize]) -> Result<()> {
        for &s in subjects {
            if !self.entries.contains_key(&(reference, s)) {
                let f = self.source.features(reference, s)?;
                self.entries.insert((reference, s), f);
            }
        }
        Ok(())
    }

    fn get(&self, reference: usize, subjects: &[usize]) -> Vec<&SubjectFeatures> {
        subjects.iter().map(|&s| &self.entries[&(reference, s)]).collect()
    }
}

fn record(test: usize, plan: &TestPlan, predictions: &[Label], labels: &[Label]) -> Result<TestRecord> {
    let truth: Vec<Label> = plan.test.iter().map(|&i| labels[i]).collect();
    let counts = ConfusionCounts::tally(predictions, &truth)?;
    let (sensitivity, specificity, accuracy) = counts.metrics()?;
    Ok(TestRecord {
        test,
        seed: plan.seed,
        reference: None,
        alpha: None,
        beta: None,
        k: None,
        cv_accuracy: None,
        counts,
        sensitivity,
        specificity,
        accuracy,
    })
}

/// The QC pipeline protocol on any feature source.
pub fn run_protocol_with<S: FeatureSource>(source: &S, config: &ProtocolConfig) -> Result<EvalReport> {
    let labels = source.labels().to_vec();
    let plans = plan_tests(&labels, config.n_tests, config.folds, config.seed)?;
    let mut cache = Cache {
        source,
        entries: BTreeMap::new(),
    };
    let mut tests = Vec::with_capacity(plans.len());
    for (t, plan) in plans.iter().enumerate() {
        cache.fill(plan.reference, &plan.train)?;
        cache.fill(plan.reference, &plan.test)?;
        let train = cache.get(plan.reference, &plan.train);
        let train_labels: Vec<Label> = plan.train.iter().map(|&i| labels[i]).collect();
        let sweep = sweep_weights(config.rho, &train, &train_labels, &plan.folds, config.k)?;
        let model = fit_pipeline(&train, &train_labels, sweep.best_weights(), config.k)?;
        let predictions = cache
            .get(plan.reference, &plan.test)
            .into_iter()
            .map(|s| model.predict(s))
            .collect::<Result<Vec<_>>>()?;
        let mut rec = record(t, plan, &predictions, &labels)?;
        rec.reference = Some(source.id(plan.reference));
        rec.alpha = Some(model.weights.alpha());
        rec.beta = Some(model.weights.beta());
        rec.k = Some(config.k);
        rec.cv_accuracy = Some(sweep.best_accuracy());
        log::info!(
            "test {t}: accuracy {:.3} (cv {:.3}, weights {:.4},{:.4})",
            rec.accuracy,
            sweep.best_accuracy(),
            model.weights.alpha(),
            model.weights.beta()
        );
        tests.push(rec);
    }
    let (train_per_class, test_per_class) = split_sizes(&labels)?;
    Ok(EvalReport {
        run: RunInfo {
            model: "qc-threshold".into(),
            subjects: labels.len(),
            train_per_class,
            test_per_class,
            n_tests: config.n_tests,
            seed: config.seed,
            k: Some(config.k),
            rho: Some(config.rho),
            folds: Some(config.folds),
            window: Some(config.window),
        },
        aggregate: Aggregate::of(&tests),
        test: tests,
    })
}

/// The QC pipeline protocol on a labelled image cohort.
pub fn run_protocol(db: &[SubjectRecord], config: &ProtocolConfig) -> Result<EvalReport> {
    let source = RegistrationSource::new(db, config.reg, config.window)?;
    run_protocol_with(&source, config)
}

/// The conventional-measurement SVM on the same splits as [`run_protocol`]
/// under the same seed and fold count.
pub fn run_baseline(db: &[SubjectRecord], config: &ProtocolConfig) -> Result<EvalReport> {
    let labels = db.iter().map(SubjectRecord::require_label).collect::<Result<Vec<_>>>()?;
    let rows = db
        .iter()
        .map(|s| conventional_measurements(&s.landmarks).map(|m| m.values.to_vec()))
        .collect::<Result<Vec<_>>>()?;
    let plans = plan_tests(&labels, config.n_tests, config.folds, config.seed)?;
    let mut tests = Vec::with_capacity(plans.len());
    for (t, plan) in plans.iter().enumerate() {
        let train_rows: Vec<Vec<f64>> = plan.train.iter().map(|&i| rows[i].clone()).collect();
        let train_labels: Vec<Label> = plan.train.iter().map(|&i| labels[i]).collect();
        let params = SvmParams {
            seed: plan.seed,
            ..config.svm
        };
        let svm = LinearSvm::train(&train_rows, &train_labels, params)?;
        let predictions = plan
            .test
            .iter()
            .map(|&i| svm.predict(&rows[i]))
            .collect::<Result<Vec<_>>>()?;
        tests.push(record(t, plan, &predictions, &labels)?);
    }
    let (train_per_class, test_per_class) = split_sizes(&labels)?;
    Ok(EvalReport {
        run: RunInfo {
            model: "baseline-svm".into(),
            subjects: labels.len(),
            train_per_class,
            test_per_class,
            n_tests: config.n_tests,
            seed: config.seed,
            k: None,
            rho: None,
            folds: None,
            window: None,
        },
        aggregate: Aggregate::of(&tests),
        test: tests,
    })
}
