use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use qcosa::error::{Error, Result};
use qcosa::evaluation::{run_baseline, run_protocol, EvalReport, ProtocolConfig};
use qcosa::features::{
    distance_maxima, feature_names, MixWeights, DEFAULT_WINDOW, DISTANCE_COUNT, DISTANCE_NAMES,
};
use qcosa::io::{
    load_subject, read_text, write_phantom, write_text, DatasetManifest, FeatureMatrix, ModelFile,
    ReferenceData, MODEL_SCHEMA_VERSION,
};
use qcosa::landmarks::{Label, Landmark, SubjectRecord};
use qcosa::phantom::PhantomSpec;
use qcosa::pipeline::{fit_indices, SubjectFeatures};
use qcosa::registration::{register, RegParams};
use qcosa::select::{bagged_p_values, select_top_k};
use qcosa::sweep::{stratified_folds, sweep_weights};

/// Quasi-conformal registration, deformation features and control/OSA
/// classification of landmarked 2D images.
#[derive(Parser)]
#[command(name = "qcosa", version)]
struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Register a reference subject onto another and write the map, its
    /// Beltrami coefficient and diagnostics.
    Register(RegisterArgs),
    /// Register every manifest subject against a reference and write the
    /// feature matrix.
    Features(FeaturesArgs),
    /// Rank deformation features by leave-one-out Welch p-value.
    Select(SelectArgs),
    /// Train a threshold classifier on a feature matrix.
    Train(TrainArgs),
    /// Classify one subject with a trained model.
    Predict(PredictArgs),
    /// Run the repeated train/test protocol and write a report.
    Evaluate(EvaluateArgs),
    /// Cross-validated accuracy of every mixing weight on the unit circle.
    Sweep(SweepArgs),
    /// Generate a synthetic cohort on disk.
    Phantom(PhantomArgs),
    /// Run the conventional-measurement SVM on the protocol's splits.
    Baseline(BaselineArgs),
}

#[derive(Args)]
struct RegOpts {
    /// TOML file with registration parameters; missing keys keep their defaults.
    #[arg(long, value_name = "FILE")]
    registration: Option<PathBuf>,
}

impl RegOpts {
    fn params(&self) -> Result<RegParams> {
        let Some(path) = &self.registration else {
            return Ok(RegParams::default());
        };
        let p: RegParams = toml::from_str(&read_text(path)?).map_err(|e| Error::Parse {
            path: path.clone(),
            message: e.to_string(),
        })?;
        p.validate()?;
        Ok(p)
    }
}

#[derive(Args)]
struct RegisterArgs {
    #[arg(long, value_name = "FILE")]
    reference_image: PathBuf,
    #[arg(long, value_name = "FILE")]
    reference_landmarks: PathBuf,
    #[arg(long, value_name = "FILE")]
    subject_image: PathBuf,
    #[arg(long, value_name = "FILE")]
    subject_landmarks: PathBuf,
    /// Output directory for map.csv, mu.csv and diagnostics.toml.
    #[arg(long, default_value = "registration")]
    out: PathBuf,
    #[command(flatten)]
    reg: RegOpts,
}

#[derive(Args)]
struct FeaturesArgs {
    #[arg(long, value_name = "FILE")]
    manifest: PathBuf,
    /// Reference subject id [default: the first control in the manifest].
    #[arg(long)]
    reference: Option<String>,
    /// Odd window size around each landmark.
    #[arg(long, default_value_t = DEFAULT_WINDOW)]
    window: usize,
    /// Weight of |mu| in the deformation index.
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    /// Weight of the folded argument of mu in the deformation index.
    #[arg(long, default_value_t = 0.0)]
    beta: f64,
    #[arg(long, default_value = "features.csv")]
    out: PathBuf,
    #[command(flatten)]
    reg: RegOpts,
}

#[derive(Args)]
struct SelectArgs {
    #[arg(long, value_name = "FILE")]
    features: PathBuf,
    /// Number of deformation features to keep.
    #[arg(long, default_value_t = 500)]
    k: usize,
    #[arg(long, default_value = "selection.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, value_name = "FILE")]
    features: PathBuf,
    /// Manifest the features were computed from; supplies the reference image.
    #[arg(long, value_name = "FILE")]
    manifest: PathBuf,
    #[arg(long, default_value_t = 500)]
    k: usize,
    #[arg(long, default_value = "model.json")]
    out: PathBuf,
    #[command(flatten)]
    reg: RegOpts,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long, value_name = "FILE")]
    model: PathBuf,
    #[arg(long, value_name = "FILE")]
    image: PathBuf,
    #[arg(long, value_name = "FILE")]
    landmarks: PathBuf,
}

#[derive(Args)]
struct ProtocolArgs {
    #[arg(long, value_name = "FILE")]
    manifest: PathBuf,
    /// Number of random train/test splits.
    #[arg(long, default_value_t = 100)]
    tests: usize,
    /// Master seed; per-test seeds are derived from it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Cross-validation folds.
    #[arg(long, default_value_t = 10)]
    folds: usize,
    /// Report file (TOML); a CSV table is written next to it.
    #[arg(long, default_value = "report.toml")]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    protocol: ProtocolArgs,
    #[arg(long, default_value_t = 500)]
    k: usize,
    /// Angular density of the weight sweep.
    #[arg(long, default_value_t = 0.05)]
    rho: f64,
    #[arg(long, default_value_t = DEFAULT_WINDOW)]
    window: usize,
    #[command(flatten)]
    reg: RegOpts,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, value_name = "FILE")]
    manifest: PathBuf,
    /// Reference subject id [default: the first control in the manifest].
    #[arg(long)]
    reference: Option<String>,
    #[arg(long, default_value_t = 0.05)]
    rho: f64,
    #[arg(long, default_value_t = 500)]
    k: usize,
    #[arg(long, default_value_t = 10)]
    folds: usize,
    /// Seed of the fold assignment.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_WINDOW)]
    window: usize,
    #[arg(long, default_value = "sweep.csv")]
    out: PathBuf,
    #[command(flatten)]
    reg: RegOpts,
}

#[derive(Args)]
struct PhantomArgs {
    /// TOML phantom specification; missing keys keep their defaults.
    #[arg(long, value_name = "FILE")]
    spec: Option<PathBuf>,
    /// Overrides the phantom file's subjects per class.
    #[arg(long)]
    per_class: Option<usize>,
    /// Overrides the phantom file's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the phantom file's OSA warp amplitude.
    #[arg(long)]
    warp_amplitude: Option<f64>,
    #[arg(long, default_value = "phantom")]
    out: PathBuf,
}

#[derive(Args)]
struct BaselineArgs {
    #[command(flatten)]
    protocol: ProtocolArgs,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprint!("error[usage]: {e}");
            return ExitCode::from(2);
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).init();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e.category() {
        "io" => 3,
        "ingestion" => 4,
        "input" => 5,
        "numerical" => 6,
        "geometry" => 7,
        "cohort" => 8,
        _ => 1,
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Register(a) => cmd_register(a),
        Command::Features(a) => cmd_features(a),
        Command::Select(a) => cmd_select(a),
        Command::Train(a) => cmd_train(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Phantom(a) => cmd_phantom(a),
        Command::Baseline(a) => cmd_baseline(a),
    }
}

fn csv_text(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| Error::InvalidInput(e.to_string());
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(&r).map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidInput(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn cmd_register(a: RegisterArgs) -> Result<()> {
    let params = a.reg.params()?;
    let reference = load_subject("reference", &a.reference_image, &a.reference_landmarks, None)?;
    let subject = load_subject("subject", &a.subject_image, &a.subject_landmarks, None)?;
    let r = register(
        &reference.image,
        &subject.image,
        reference.landmarks.positions(),
        subject.landmarks.positions(),
        &params,
    )?;
    let grid = r.map.grid();
    let mu = r.mu.to_vertices();
    let map_rows = grid.vertices().iter().zip(r.map.targets()).map(|(v, t)| {
        vec![v.re.to_string(), v.im.to_string(), t.re.to_string(), t.im.to_string()]
    });
    write_text(&a.out.join("map.csv"), &csv_text(&["x", "y", "map_x", "map_y"], map_rows)?)?;
    let mu_rows = grid.vertices().iter().zip(mu.values()).map(|(v, m)| {
        vec![v.re.to_string(), v.im.to_string(), m.re.to_string(), m.im.to_string()]
    });
    write_text(&a.out.join("mu.csv"), &csv_text(&["x", "y", "mu_re", "mu_im"], mu_rows)?)?;
    let t = r.final_terms;
    let mut terms = toml::Table::new();
    for (k, v) in [
        ("smoothness", t.smoothness),
        ("magnitude", t.magnitude),
        ("coupling", t.coupling),
        ("intensity", t.intensity),
        ("total", t.total()),
    ] {
        terms.insert(k.into(), v.into());
    }
    let mut diag = toml::Table::new();
    diag.insert("energy_trace".into(), r.energy_trace.clone().into());
    diag.insert("accepted_steps".into(), (r.accepted_steps as i64).into());
    diag.insert("landmark_residual".into(), r.landmark_residual.into());
    diag.insert("max_abs_mu".into(), r.mu.max_modulus().into());
    diag.insert("final_terms".into(), terms.into());
    let diagnostics = toml::to_string(&diag).map_err(|e| Error::InvalidInput(e.to_string()))?;
    write_text(&a.out.join("diagnostics.toml"), &diagnostics)?;
    println!(
        "registered: {} accepted steps, energy {} -> {}, landmark residual {:.3e}",
        r.accepted_steps,
        r.energy_trace[0],
        r.energy_trace.last().copied().unwrap_or(f64::NAN),
        r.landmark_residual
    );
    Ok(())
}

fn load_manifest(path: &Path) -> Result<(DatasetManifest, Vec<SubjectRecord>)> {
    let m = DatasetManifest::load(path)?;
    let subjects = m.load_subjects()?;
    Ok((m, subjects))
}

fn find_reference(subjects: &[SubjectRecord], id: Option<&str>) -> Result<usize> {
    match id {
        Some(id) => subjects
            .iter()
            .position(|s| s.id == id)
            .ok_or_else(|| Error::InvalidInput(format!("reference {id:?} is not in the manifest"))),
        None => subjects
            .iter()
            .position(|s| s.label == Some(Label::Control))
            .ok_or_else(|| Error::InvalidCohort("manifest has no control subject to use as reference".into())),
    }
}

fn extract_all(
    subjects: &[SubjectRecord],
    reference: usize,
    params: &RegParams,
    window: usize,
) -> Result<Vec<SubjectFeatures>> {
    subjects
        .iter()
        .map(|s| {
            log::info!("features of {}", s.id);
            SubjectFeatures::extract(&subjects[reference], s, params, window)
        })
        .collect()
}

fn dist_key(k: usize) -> String {
    format!("dist_max_{}", DISTANCE_NAMES[k])
}

fn cmd_features(a: FeaturesArgs) -> Result<()> {
    let params = a.reg.params()?;
    let weights = MixWeights::new(a.alpha, a.beta)?;
    let (_, subjects) = load_manifest(&a.manifest)?;
    let reference = find_reference(&subjects, a.reference.as_deref())?;
    let columns = feature_names(&Landmark::WINDOWED, a.window)?;
    let feats = extract_all(&subjects, reference, &params, a.window)?;
    let dists: Vec<[f64; DISTANCE_COUNT]> = feats.iter().map(|f| f.distances).collect();
    let maxima = distance_maxima(&dists)?;
    let mut m = FeatureMatrix {
        columns,
        ids: subjects.iter().map(|s| s.id.clone()).collect(),
        labels: subjects.iter().map(|s| s.label).collect(),
        rows: feats.iter().map(|f| f.vector(weights, maxima)).collect::<Result<_>>()?,
        ..FeatureMatrix::default()
    };
    m.metadata.insert("window".into(), a.window.to_string());
    m.metadata.insert("reference".into(), subjects[reference].id.clone());
    m.metadata.insert("alpha".into(), weights.alpha().to_string());
    m.metadata.insert("beta".into(), weights.beta().to_string());
    for (k, v) in maxima.iter().enumerate() {
        m.metadata.insert(dist_key(k), v.to_string());
    }
    m.save(&a.out)?;
    println!("{} subjects x {} features -> {}", m.rows.len(), m.columns.len(), a.out.display());
    Ok(())
}

/// Deformation columns, scaled distance columns and labels of a matrix.
struct Split {
    deform: Vec<Vec<f64>>,
    scaled: Vec<[f64; DISTANCE_COUNT]>,
    labels: Vec<Label>,
}

fn split_matrix(m: &FeatureMatrix, path: &Path) -> Result<Split> {
    let width = m.columns.len();
    if width <= DISTANCE_COUNT || m.columns[width - DISTANCE_COUNT..] != DISTANCE_NAMES {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            message: format!("the last {DISTANCE_COUNT} columns must be {}", DISTANCE_NAMES.join(",")),
        });
    }
    let labels = m
        .labels
        .iter()
        .zip(&m.ids)
        .map(|(l, id)| l.ok_or_else(|| Error::InvalidCohort(format!("subject {id} has no label"))))
        .collect::<Result<Vec<_>>>()?;
    let cut = width - DISTANCE_COUNT;
    Ok(Split {
        deform: m.rows.iter().map(|r| r[..cut].to_vec()).collect(),
        scaled: m.rows.iter().map(|r| [r[cut], r[cut + 1], r[cut + 2]]).collect(),
        labels,
    })
}

fn cmd_select(a: SelectArgs) -> Result<()> {
    let m = FeatureMatrix::load(&a.features)?;
    let s = split_matrix(&m, &a.features)?;
    let p = bagged_p_values(&s.deform, &s.labels)?;
    let sel = select_top_k(&p, a.k)?;
    let mut rank = vec![None; p.len()];
    for (r, &i) in sel.selected_indices.iter().enumerate() {
        rank[i] = Some(r);
    }
    let rows = p.iter().enumerate().map(|(i, v)| {
        vec![
            i.to_string(),
            m.columns[i].clone(),
            v.to_string(),
            rank[i].map_or(String::new(), |r| r.to_string()),
        ]
    });
    write_text(&a.out, &csv_text(&["index", "feature", "p_value", "rank"], rows)?)?;
    println!(
        "kept {} of {} features, best p = {:e} -> {}",
        sel.k,
        p.len(),
        p[sel.selected_indices[0]],
        a.out.display()
    );
    Ok(())
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let params = a.reg.params()?;
    let m = FeatureMatrix::load(&a.features)?;
    let s = split_matrix(&m, &a.features)?;
    let weights = MixWeights::new(m.meta("alpha")?, m.meta("beta")?)?;
    let mut maxima = [0.0; DISTANCE_COUNT];
    for (k, v) in maxima.iter_mut().enumerate() {
        *v = m.meta(&dist_key(k))?;
    }
    let window: usize = m.meta("window")?;
    let ref_id: String = m.meta("reference")?;
    let (_, subjects) = load_manifest(&a.manifest)?;
    let reference = find_reference(&subjects, Some(&ref_id))?;
    let model = fit_indices(&s.deform, &s.scaled, &s.labels, weights, maxima, a.k)?;
    let file = ModelFile {
        schema_version: MODEL_SCHEMA_VERSION,
        window,
        registration: params,
        model,
        reference: ReferenceData::from_subject(&subjects[reference]),
    };
    file.save(&a.out)?;
    println!(
        "trained on {} subjects: K = {}, d_opt = {} -> {}",
        s.labels.len(),
        a.k,
        file.model.d_opt,
        a.out.display()
    );
    Ok(())
}

fn cmd_predict(a: PredictArgs) -> Result<()> {
    let model = ModelFile::load(&a.model)?;
    let subject = load_subject("subject", &a.image, &a.landmarks, None)?;
    let (label, d) = model.predict(&subject)?;
    println!("label = \"{label}\"\ndistance = {d}\nthreshold = {}", model.model.d_opt);
    Ok(())
}

fn write_report(report: &EvalReport, out: &Path) -> Result<()> {
    write_text(out, &report.to_toml()?)?;
    let csv_path = out.with_extension("csv");
    write_text(&csv_path, &report.to_csv()?)?;
    let g = report.aggregate;
    println!(
        "{} over {} tests: accuracy {:.4} +- {:.4}, sensitivity {:.4}, specificity {:.4} -> {}, {}",
        report.run.model,
        report.run.n_tests,
        g.mean_accuracy,
        g.std_accuracy,
        g.mean_sensitivity,
        g.mean_specificity,
        out.display(),
        csv_path.display()
    );
    Ok(())
}

fn cmd_evaluate(a: EvaluateArgs) -> Result<()> {
    let config = ProtocolConfig {
        n_tests: a.protocol.tests,
        k: a.k,
        rho: a.rho,
        folds: a.protocol.folds,
        window: a.window,
        seed: a.protocol.seed,
        reg: a.reg.params()?,
        ..ProtocolConfig::default()
    };
    let (_, subjects) = load_manifest(&a.protocol.manifest)?;
    write_report(&run_protocol(&subjects, &config)?, &a.protocol.out)
}

fn cmd_baseline(a: BaselineArgs) -> Result<()> {
    let config = ProtocolConfig {
        n_tests: a.protocol.tests,
        folds: a.protocol.folds,
        seed: a.protocol.seed,
        ..ProtocolConfig::default()
    };
    let (_, subjects) = load_manifest(&a.protocol.manifest)?;
    write_report(&run_baseline(&subjects, &config)?, &a.protocol.out)
}

fn cmd_sweep(a: SweepArgs) -> Result<()> {
    let params = a.reg.params()?;
    let (_, subjects) = load_manifest(&a.manifest)?;
    let labels = subjects
        .iter()
        .map(SubjectRecord::require_label)
        .collect::<Result<Vec<_>>>()?;
    let reference = find_reference(&subjects, a.reference.as_deref())?;
    let feats = extract_all(&subjects, reference, &params, a.window)?;
    let refs: Vec<&SubjectFeatures> = feats.iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let folds = stratified_folds(&labels, a.folds, &mut rng)?;
    let outcome = sweep_weights(a.rho, &refs, &labels, &folds, a.k)?;
    let rows = outcome.candidates.iter().zip(&outcome.accuracies).enumerate().map(|(k, (w, acc))| {
        vec![
            k.to_string(),
            w.alpha().to_string(),
            w.beta().to_string(),
            acc.to_string(),
            (k == outcome.best).to_string(),
        ]
    });
    write_text(&a.out, &csv_text(&["k", "alpha", "beta", "cv_accuracy", "best"], rows)?)?;
    let best = outcome.best_weights();
    println!(
        "best weights ({}, {}) with cv accuracy {:.4} -> {}",
        best.alpha(),
        best.beta(),
        outcome.best_accuracy(),
        a.out.display()
    );
    Ok(())
}

fn cmd_phantom(a: PhantomArgs) -> Result<()> {
    let mut spec = match &a.spec {
        Some(path) => toml::from_str(&read_text(path)?).map_err(|e| Error::Parse {
            path: path.clone(),
            message: e.to_string(),
        })?,
        None => PhantomSpec::default(),
    };
    if let Some(n) = a.per_class {
        spec.per_class = n;
    }
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    if let Some(w) = a.warp_amplitude {
        spec.warp_amplitude = w;
    }
    let cohort = spec.generate()?;
    let manifest = write_phantom(&a.out, &spec, &cohort)?;
    println!("{} subjects -> {}", cohort.subjects.len(), manifest.display());
    Ok(())
}
