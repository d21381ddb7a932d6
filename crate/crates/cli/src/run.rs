use std::collections::BTreeMap;
use std::time::Instant;

use nalgebra::DVector;
use serde::Serialize;
use serde_json::{json, Value};

use datapricer_core::bayes::{posterior_covariance, posterior_covariance_for, Dataset, GaussianBelief};
use datapricer_core::linalg::quad_form;
use datapricer_core::mechanisms::{
    condition_number, first_best, gram_condition_number, FullRevealMechanism, MabMechanism, Mechanism,
    PerfectMechanism, SvdMechanism,
};
use datapricer_core::valuation::{
    canonical_value, canonical_value_observations, coupling_check, data_shapley, marginal_value, ValuationQuery,
};
use datapricer_core::verification::{
    buyer_surplus, check_ic, check_ir, envelope_gradient_check, impossibility_demo, regret_audit_with_tolerance,
    EnvelopeOptions, TypeGrid, IC_TOLERANCE,
};

use crate::config::{noise_model, ExperimentConfig, MechanismKind, NoiseSpec, PlotKind, Step};
use crate::error::{CliError, CliResult};
use crate::synthetic::RNG_DESCRIPTION;

/// A per-grid-point curve, ordered by grid index.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Series {
    pub abscissa: Vec<f64>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub step: String,
    /// `None` for steps that compute rather than certify.
    pub passed: Option<bool>,
    pub output: Value,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub config_hash: String,
    pub tool_version: String,
    pub rng: String,
    pub seed: u64,
    pub passed: bool,
    pub results: Vec<StepRecord>,
    pub series: BTreeMap<String, Series>,
    pub timings_ms: BTreeMap<String, f64>,
}

impl RunRecord {
    /// Everything except wall-clock timings, serialized compactly.
    pub fn numeric_payload(&self) -> String {
        json!({
            "config_hash": self.config_hash,
            "tool_version": self.tool_version,
            "rng": self.rng,
            "seed": self.seed,
            "passed": self.passed,
            "results": self.results,
            "series": self.series,
        })
        .to_string()
    }

    pub fn step(&self, name: &str) -> Option<&StepRecord> {
        self.results.iter().find(|r| r.step == name)
    }
}

/// Resolved inputs shared by the pipeline steps and the subcommands.
pub struct Session {
    pub config: ExperimentConfig,
    pub prior: GaussianBelief,
    pub data: Option<Dataset>,
    pub tolerance: Option<f64>,
}

pub struct StepOutput {
    pub passed: Option<bool>,
    pub output: Value,
    pub series: Vec<(PlotKind, Series)>,
}

impl StepOutput {
    fn plain(output: Value) -> Self {
        Self { passed: None, output, series: Vec::new() }
    }

    fn checked(passed: bool, output: Value) -> Self {
        Self { passed: Some(passed), output, series: Vec::new() }
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("serializable report")
}

fn missing(what: &str) -> CliError {
    CliError::input(format!("this step needs {what}"))
}

impl Session {
    pub fn new(config: ExperimentConfig) -> CliResult<Self> {
        let prior = config.prior_belief()?;
        let data = config.dataset()?;
        let tolerance = config.pipeline.tolerance;
        Ok(Self { config, prior, data, tolerance })
    }

    pub fn data(&self) -> CliResult<&Dataset> {
        self.data.as_ref().ok_or_else(|| missing("a dataset ([data] or [synthetic])"))
    }

    pub fn query(&self) -> CliResult<ValuationQuery> {
        let x = self.config.query_vector()?;
        Ok(ValuationQuery::new(self.prior.clone(), x)?)
    }

    pub fn grid(&self) -> CliResult<TypeGrid> {
        self.config.type_grid(self.config.seed)
    }

    pub fn mechanism(&self) -> CliResult<Box<dyn Mechanism>> {
        let spec = self.config.mechanism.as_ref().ok_or_else(|| missing("a [mechanism] section"))?;
        let d = self.config.dimension;
        Ok(match spec.kind {
            MechanismKind::Perfect => {
                let n = spec.records.ok_or_else(|| missing("mechanism.records"))?;
                let sigma = noise_model("mechanism.noise", spec.noise.as_ref().unwrap_or(&NoiseSpec::default()), d)?;
                let mut m = PerfectMechanism::new(d, n, sigma)?;
                if let Some(delta) = &spec.artificial_noise {
                    m = m.with_artificial_noise(match delta {
                        NoiseSpec::Constant(z) if *z == 0.0 => datapricer_core::bayes::NoiseModel::zero(),
                        other => noise_model("mechanism.artificial_noise", other, d)?,
                    });
                }
                Box::new(m)
            }
            MechanismKind::Svd => Box::new(SvdMechanism::new(self.data()?)?),
            MechanismKind::Mab => Box::new(MabMechanism::new(self.data()?)?),
            MechanismKind::FullReveal => Box::new(FullRevealMechanism::new(self.data()?)),
        })
    }

    pub fn run_step(&self, step: Step) -> CliResult<StepOutput> {
        match step {
            Step::Value => self.value(),
            Step::Shapley => self.shapley(),
            Step::Coupling => self.coupling(),
            Step::Price => self.price(),
            Step::FirstBest => self.first_best(),
            Step::Kappa => self.kappa(),
            Step::VerifyIc => self.verify(true),
            Step::VerifyIr => self.verify(false),
            Step::AuditRegret => self.audit_regret(),
            Step::Impossibility => self.impossibility(),
            Step::Envelope => self.envelope(),
            Step::Profile => self.profile(),
        }
        .map_err(|e| e.at(step.name()))
    }

    fn value(&self) -> CliResult<StepOutput> {
        let q = self.query()?;
        let data = self.data()?;
        let x = q.context();
        let post = posterior_covariance_for(&self.prior, data)?;
        let mut stats = Vec::new();
        for (name, dpp) in self.config.statistics(data)? {
            let obs = dpp.transform()?;
            let cov = posterior_covariance(&self.prior, &obs)?;
            stats.push(json!({
                "name": name,
                "correlated_noise": obs.is_correlated(),
                "posterior_variance": quad_form(&cov, x),
                "value_nats": canonical_value_observations(&q, &obs)?,
            }));
        }
        Ok(StepOutput::plain(json!({
            "records": data.len(),
            "prior_variance": q.prior_variance()?,
            "posterior_variance": quad_form(&post, x),
            "value_nats": canonical_value(&q, data)?,
            "statistics": stats,
        })))
    }

    fn shapley(&self) -> CliResult<StepOutput> {
        let q = self.query()?;
        let data = self.data()?;
        let alloc = data_shapley(&q, data)?;
        let n = data.len();
        let leave_one_out = (0..n)
            .map(|i| {
                let rest: Vec<usize> = (0..n).filter(|&j| j != i).collect();
                marginal_value(&q, &data.subset(&rest), &data.subset(&[i]))
            })
            .collect::<datapricer_core::Result<Vec<f64>>>()?;
        Ok(StepOutput::plain(json!({
            "shapley": alloc.per_datum_value,
            "marginal_value": leave_one_out,
            "total_value": canonical_value(&q, data)?,
            "coalition_value_fn_evals": alloc.coalition_value_fn_evals,
        })))
    }

    fn coupling(&self) -> CliResult<StepOutput> {
        let q = self.query()?;
        let samples = self.config.query.as_ref().map_or(100_000, |s| s.samples);
        let r = coupling_check(&q, self.data()?, samples, self.config.seed)?;
        Ok(StepOutput::checked(r.pass, to_value(&r)))
    }

    fn price(&self) -> CliResult<StepOutput> {
        let x = self.config.query_vector()?;
        let m = self.mechanism()?;
        let q = m.quote(&x)?;
        let value = q.value_to(&x)?;
        let mut out = json!({
            "mechanism": m.name(),
            "payment_nats": q.payment_nats,
            "value_to_buyer": value,
            "buyer_surplus": value - q.payment_nats,
            "quote": q.to_json_value(),
        });
        if let Some(data) = &self.data {
            let fb = first_best(&x, data)?;
            out["first_best"] = json!(fb);
            out["regret"] = json!(fb - q.payment_nats);
        }
        Ok(StepOutput::plain(out))
    }

    fn first_best(&self) -> CliResult<StepOutput> {
        let x = self.config.query_vector()?;
        Ok(StepOutput::plain(json!({ "first_best": first_best(&x, self.data()?)? })))
    }

    fn kappa(&self) -> CliResult<StepOutput> {
        let data = self.data()?;
        let k = condition_number(data);
        Ok(StepOutput::plain(json!({
            "kappa": k.kappa,
            "ln_kappa": k.ln_kappa(),
            "rank_deficient": k.rank_deficient,
            "singular_values": k.singular_values,
            "kappa_from_gram": gram_condition_number(data),
        })))
    }

    fn verify(&self, ic: bool) -> CliResult<StepOutput> {
        let m = self.mechanism()?;
        let grid = self.grid()?;
        let tol = self.tolerance.unwrap_or(IC_TOLERANCE);
        let r = if ic { check_ic(&*m, &grid, tol)? } else { check_ir(&*m, &grid, tol)? };
        Ok(StepOutput::checked(r.passed, to_value(&r)))
    }

    fn audit_regret(&self) -> CliResult<StepOutput> {
        let grid = self.grid()?;
        let tol = self.tolerance.unwrap_or(datapricer_core::verification::REGRET_TOLERANCE);
        let a = regret_audit_with_tolerance(self.data()?, &grid, tol)?;
        let abscissa: Vec<f64> = (0..grid.len()).map(|i| grid.abscissa(i)).collect();
        let out = json!({
            "max_regret": a.max_regret,
            "argmax_regret": a.argmax_regret,
            "argmax_type": grid.points()[a.argmax_regret].as_slice(),
            "min_regret": a.min_regret,
            "kappa": a.kappa,
            "bound_ln_kappa": a.bound_ln_kappa,
            "instance_sharp_bound": a.instance_sharp_bound,
            "within_ln_kappa": a.within_ln_kappa,
            "within_sharp_bound": a.within_sharp_bound,
            "nonnegative": a.nonnegative,
            "tolerance": a.tolerance,
            "grid_size": grid.len(),
        });
        Ok(StepOutput {
            passed: Some(a.passed),
            output: out,
            series: vec![
                (PlotKind::RegretProfile, Series { abscissa: abscissa.clone(), values: a.per_point_regret }),
                (PlotKind::PaymentProfile, Series { abscissa, values: a.payments }),
            ],
        })
    }

    fn impossibility(&self) -> CliResult<StepOutput> {
        let r = impossibility_demo(self.data()?, &self.grid()?)?;
        Ok(StepOutput::plain(to_value(&r)))
    }

    fn envelope(&self) -> CliResult<StepOutput> {
        let spec = self.config.mechanism.as_ref().ok_or_else(|| missing("a [mechanism] section"))?;
        if spec.kind != MechanismKind::Perfect {
            return Err(CliError::input("the envelope check applies to the perfect mechanism"));
        }
        let d = self.config.dimension;
        let n = spec.records.ok_or_else(|| missing("mechanism.records"))?;
        let sigma = noise_model("mechanism.noise", spec.noise.as_ref().unwrap_or(&NoiseSpec::default()), d)?;
        let points = self.config.pipeline.envelope_points.unwrap_or(100);
        let grid = TypeGrid::uniform_random(d, points, self.config.seed)?;
        let mut opts = EnvelopeOptions { seed: self.config.seed, ..EnvelopeOptions::default() };
        if let Some(p) = self.config.pipeline.envelope_pairs {
            opts.path_pairs = p;
        }
        let r = envelope_gradient_check(&sigma, n, &grid, &opts)?;
        Ok(StepOutput::checked(r.passed, to_value(&r)))
    }

    fn profile(&self) -> CliResult<StepOutput> {
        let m = self.mechanism()?;
        let grid = self.grid()?;
        let surplus = buyer_surplus(&*m, &grid)?;
        let payments = grid
            .points()
            .iter()
            .map(|x| m.quote(x).map(|q| q.payment_nats))
            .collect::<datapricer_core::Result<Vec<f64>>>()?;
        let abscissa: Vec<f64> = (0..grid.len()).map(|i| grid.abscissa(i)).collect();
        let max_surplus = surplus.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min_surplus = surplus.iter().copied().fold(f64::INFINITY, f64::min);
        Ok(StepOutput {
            passed: None,
            output: json!({
                "mechanism": m.name(),
                "grid_size": grid.len(),
                "max_buyer_surplus": max_surplus,
                "min_buyer_surplus": min_surplus,
            }),
            series: vec![
                (PlotKind::PaymentProfile, Series { abscissa: abscissa.clone(), values: payments }),
                (PlotKind::SurplusSplit, Series { abscissa, values: surplus }),
            ],
        })
    }
}

/// Runs every configured step in order.
///
/// Steps that certify a property set `passed`; the record passes when all
/// of them do. Any error aborts the run with the failing step named.
pub fn run_experiment(config: &ExperimentConfig) -> CliResult<RunRecord> {
    if config.pipeline.steps.is_empty() {
        return Err(CliError::input("field `pipeline.steps`: at least one step is required").at("config"));
    }
    let t0 = Instant::now();
    let session = Session::new(config.clone()).map_err(|e| e.at("setup"))?;
    let mut timings = BTreeMap::new();
    timings.insert("setup".to_string(), t0.elapsed().as_secs_f64() * 1e3);

    let mut results = Vec::new();
    let mut series = BTreeMap::new();
    for &step in &config.pipeline.steps {
        let t = Instant::now();
        let out = session.run_step(step)?;
        timings.insert(step.name().to_string(), t.elapsed().as_secs_f64() * 1e3);
        for (kind, s) in out.series {
            series.insert(kind.name().to_string(), s);
        }
        results.push(StepRecord { step: step.name().to_string(), passed: out.passed, output: out.output });
    }
    Ok(RunRecord {
        config_hash: config.source_hash.clone(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        rng: RNG_DESCRIPTION.to_string(),
        seed: config.seed,
        passed: results.iter().all(|r| r.passed != Some(false)),
        results,
        series,
        timings_ms: timings,
    })
}

/// CSV with header `angle_or_index,value_nats`, one row per grid point.
pub fn emit_plot_data(record: &RunRecord, kind: PlotKind) -> CliResult<String> {
    let s = record
        .series
        .get(kind.name())
        .ok_or_else(|| CliError::input(format!("run record has no `{}` series", kind.name())).at("plot"))?;
    let mut out = String::from("angle_or_index,value_nats\n");
    for (a, v) in s.abscissa.iter().zip(&s.values) {
        out.push_str(&format!("{a:.16e},{v:.16e}\n"));
    }
    Ok(out)
}

/// Parses `1,2,3` into a vector.
pub fn parse_vector(s: &str) -> CliResult<DVector<f64>> {
    let v = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| CliError::input(format!("bad number `{t}` in `{s}`: {e}"))))
        .collect::<CliResult<Vec<f64>>>()?;
    Ok(DVector::from_vec(v))
}
