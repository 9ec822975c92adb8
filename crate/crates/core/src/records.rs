//! On-disk formats: the per-application JSONL schema, the hidden sidecar
//! of simulated types, and flat `key = value` parameter files.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::demand::{ReducedFormParams, StructuralParams};
use crate::error::{Error, Result};
use crate::measurement::EffortRejection;
use crate::model::{
    Application, ArrivalGroup, CountryGroup, GroupMap, JobPost, ModelParams, ObservableGroup, ReputationGroup,
    SignalProduction, Winner,
};
use crate::simulator::SimulatedMarket;

/// One application. The first block is the raw input; later stages fill in
/// the optional columns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApplicationRecord {
    pub job_id: u64,
    pub worker_id: u64,
    pub bid: f64,
    pub criteria_custom: Option<[u8; 5]>,
    pub criteria_generic: Option<[u8; 4]>,
    pub d_edit: Option<f64>,
    pub first_view_ms: Option<i64>,
    pub submitted_ms: i64,
    pub country_group: CountryGroup,
    pub arrival_group: ArrivalGroup,
    pub reputation_group: ReputationGroup,
    pub engaged: bool,
    pub messages: u32,
    pub rank_at_close: Option<u32>,
    /// Whether the application was hired; absent means not hired.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hired: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signal: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub effort_minutes: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub effort_rejection: Option<EffortRejection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub considered: Option<bool>,
    /// Effort after the empirical-Bayes correction, as used for inversion.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub effort_corrected: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_hat: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a_hat: Option<f64>,
}

impl ApplicationRecord {
    pub fn group(&self) -> Result<ObservableGroup> {
        ObservableGroup::from_raw(self.country_group, self.arrival_group, self.reputation_group)
    }

    pub fn is_hired(&self) -> bool {
        self.hired.unwrap_or(false)
    }
}

/// Latent values of one simulated application.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HiddenRecord {
    pub job_id: u64,
    pub worker_id: u64,
    pub cost: f64,
    pub ability: f64,
    pub noise: f64,
    pub choice_prob: f64,
    pub abandoned: bool,
}

pub fn read_jsonl<T: DeserializeOwned, R: BufRead>(reader: R) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| Error::Schema { line: i + 1, message: e.to_string() })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize, W: Write>(mut writer: W, items: &[T]) -> Result<()> {
    for it in items {
        serde_json::to_writer(&mut writer, it).map_err(|e| Error::input(e.to_string()))?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

/// Spacing between synthetic job posting times.
const JOB_SPACING_MS: i64 = 86_400_000;
const SLOT_SPACING_MS: i64 = 60_000;

/// Records and sidecar for a simulated market. Effort becomes a
/// first-view timestamp, the signal is carried directly, and the simulated
/// consideration flags are kept.
pub fn records_from_market(market: &SimulatedMarket) -> (Vec<ApplicationRecord>, Vec<HiddenRecord>) {
    let mut recs = Vec::new();
    let mut hidden = Vec::new();
    for job in &market.jobs {
        let base = job.post.job_id as i64 * JOB_SPACING_MS;
        let abandoned = job.post.abandoned.unwrap_or(false);
        for (k, (a, h)) in job.post.applications.iter().zip(&job.hidden).enumerate() {
            let submitted_ms = base + (k as i64 + 1) * SLOT_SPACING_MS + 12 * 60_000;
            let first_view_ms = a.effort.map(|e| submitted_ms - (e * 60_000.0).round() as i64);
            recs.push(ApplicationRecord {
                job_id: a.job_id,
                worker_id: a.worker_id,
                bid: a.bid,
                criteria_custom: None,
                criteria_generic: None,
                d_edit: None,
                first_view_ms,
                submitted_ms,
                country_group: a.group.country(),
                arrival_group: a.group.arrival(),
                reputation_group: a.group.reputation(),
                engaged: false,
                messages: 0,
                rank_at_close: None,
                hired: Some(a.won),
                signal: a.effort.map(|_| a.signal),
                effort_minutes: None,
                effort_rejection: None,
                considered: Some(a.considered),
                effort_corrected: None,
                c_hat: None,
                a_hat: None,
            });
            hidden.push(HiddenRecord {
                job_id: a.job_id,
                worker_id: a.worker_id,
                cost: h.cost,
                ability: h.ability,
                noise: h.noise,
                choice_prob: h.choice_prob,
                abandoned,
            });
        }
    }
    (recs, hidden)
}

/// Groups records into job posts in order of first appearance. Every record
/// needs a signal and a consideration flag.
pub fn posts_from_records(records: &[ApplicationRecord]) -> Result<Vec<JobPost>> {
    let mut order: Vec<u64> = Vec::new();
    let mut jobs: BTreeMap<u64, Vec<Application>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        let missing = |field: &str| Error::Schema { line: i + 1, message: format!("missing field `{field}`") };
        let signal = r.signal.ok_or_else(|| missing("signal"))?;
        let considered = r.considered.ok_or_else(|| missing("considered"))?;
        let group = r.group().map_err(|e| Error::Schema { line: i + 1, message: e.to_string() })?;
        let entry = jobs.entry(r.job_id).or_insert_with(|| {
            order.push(r.job_id);
            Vec::new()
        });
        entry.push(Application {
            job_id: r.job_id,
            worker_id: r.worker_id,
            group,
            bid: r.bid,
            effort: r.effort_minutes,
            signal,
            considered,
            won: r.is_hired(),
            completed_5star: None,
            signal_noise: None,
        });
    }
    order
        .into_iter()
        .map(|id| {
            let applications = jobs.remove(&id).expect("recorded id");
            let winner = match applications.iter().find(|a| a.won) {
                Some(a) => Winner::Worker(a.worker_id),
                None => Winner::OutsideOption,
            };
            let post = JobPost { job_id: id, applications, abandoned: None, winner: Some(winner) };
            post.validate()?;
            Ok(post)
        })
        .collect()
}

/// Flat parameter file: one `"name" = value` line per entry, sorted by name.
/// Group-specific names carry the group after a dot, e.g. `t.Europe/ArrOver45/High`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FlatParams(pub BTreeMap<String, f64>);

impl FlatParams {
    pub fn to_text(&self) -> String {
        self.0.iter().map(|(k, v)| format!("\"{k}\" = {}\n", fmt_float(*v))).collect()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut out = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = || Error::Schema { line: i + 1, message: format!("expected `\"name\" = value`, got `{line}`") };
            let (k, v) = line.split_once('=').ok_or_else(bad)?;
            let k = k.trim().trim_matches('"').to_string();
            let v = v.trim();
            let v: f64 = match v {
                "nan" => f64::NAN,
                "inf" => f64::INFINITY,
                "-inf" => f64::NEG_INFINITY,
                _ => v.parse().map_err(|_| bad())?,
            };
            out.insert(k, v);
        }
        Ok(Self(out))
    }

    pub fn get(&self, key: &str) -> Result<f64> {
        self.0.get(key).copied().ok_or_else(|| Error::input(format!("parameter `{key}` missing")))
    }

    fn insert_groups(&mut self, prefix: &str, map: &GroupMap<f64>) {
        for (g, v) in map {
            self.0.insert(format!("{prefix}.{g}"), *v);
        }
    }

    fn groups(&self, prefix: &str) -> Result<GroupMap<f64>> {
        let p = format!("{prefix}.");
        self.0
            .iter()
            .filter_map(|(k, v)| k.strip_prefix(&p).map(|g| (g, *v)))
            .map(|(g, v)| Ok((g.parse()?, v)))
            .collect()
    }
}

fn fmt_float(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        // Debug formatting round-trips exactly and always keeps a decimal point.
        format!("{v:?}")
    }
}

impl From<&ReducedFormParams> for FlatParams {
    fn from(p: &ReducedFormParams) -> Self {
        let mut f = FlatParams::default();
        f.0.insert("alpha_signed".into(), p.alpha_signed);
        f.0.insert("pi".into(), p.pi);
        f.insert_groups("k_lambda", &p.k_lambda);
        f.insert_groups("gamma_lambda", &p.gamma_lambda);
        f
    }
}

impl TryFrom<&FlatParams> for ReducedFormParams {
    type Error = Error;
    fn try_from(f: &FlatParams) -> Result<Self> {
        Ok(Self {
            alpha_signed: f.get("alpha_signed")?,
            k_lambda: f.groups("k_lambda")?,
            gamma_lambda: f.groups("gamma_lambda")?,
            pi: f.get("pi")?,
        })
    }
}

impl From<&StructuralParams> for FlatParams {
    fn from(p: &StructuralParams) -> Self {
        let mut f = FlatParams::default();
        f.0.insert("alpha_signed".into(), p.alpha_signed);
        f.0.insert("beta".into(), p.beta);
        f.0.insert("pi".into(), p.pi);
        f.insert_groups("t", &p.t_by_group);
        f
    }
}

impl TryFrom<&FlatParams> for StructuralParams {
    type Error = Error;
    fn try_from(f: &FlatParams) -> Result<Self> {
        Ok(Self { alpha_signed: f.get("alpha_signed")?, beta: f.get("beta")?, t_by_group: f.groups("t")?, pi: f.get("pi")? })
    }
}

impl From<&ModelParams> for FlatParams {
    fn from(p: &ModelParams) -> Self {
        let mut f = FlatParams::from(&StructuralParams::from_model(p));
        for (g, s) in &p.signal {
            f.0.insert(format!("k.{g}"), s.k);
            f.0.insert(format!("gamma.{g}"), s.gamma);
            f.0.insert(format!("noise_var.{g}"), s.noise_var);
        }
        f
    }
}

impl TryFrom<&FlatParams> for ModelParams {
    type Error = Error;
    fn try_from(f: &FlatParams) -> Result<Self> {
        let s = StructuralParams::try_from(f)?;
        let (k, gamma, var) = (f.groups("k")?, f.groups("gamma")?, f.groups("noise_var")?);
        let signal = k
            .iter()
            .map(|(g, &kv)| {
                let gm = *gamma.get(g).ok_or(Error::UnknownGroup(*g))?;
                let v = *var.get(g).ok_or(Error::UnknownGroup(*g))?;
                Ok((*g, SignalProduction::new(kv, gm, v)?))
            })
            .collect::<Result<_>>()?;
        let p = s.to_model(signal);
        p.validate()?;
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record() -> ApplicationRecord {
        ApplicationRecord {
            job_id: 7,
            worker_id: 3,
            bid: 55.0,
            criteria_custom: Some([2, 1, 0, 2, 2]),
            criteria_generic: Some([1, 1, 2, 0]),
            d_edit: Some(0.3),
            first_view_ms: Some(1_000),
            submitted_ms: 301_000,
            country_group: CountryGroup::SouthAsia,
            arrival_group: ArrivalGroup::ArrOver45,
            reputation_group: ReputationGroup::High,
            engaged: true,
            messages: 2,
            rank_at_close: Some(4),
            hired: None,
            signal: None,
            effort_minutes: None,
            effort_rejection: None,
            considered: None,
            effort_corrected: None,
            c_hat: None,
            a_hat: None,
        }
    }

    #[test]
    fn jsonl_round_trip_and_field_names() {
        let mut buf = Vec::new();
        write_jsonl(&mut buf, &[record()]).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        for f in [
            "job_id", "worker_id", "bid", "criteria_custom", "criteria_generic", "d_edit", "first_view_ms",
            "submitted_ms", "country_group", "arrival_group", "reputation_group", "engaged", "messages",
            "rank_at_close",
        ] {
            assert!(text.contains(&format!("\"{f}\":")), "{f}");
        }
        let back: Vec<ApplicationRecord> = read_jsonl(&buf[..]).unwrap();
        assert_eq!(back, vec![record()]);
    }

    #[test]
    fn schema_errors_name_line_and_field() {
        let good = serde_json::to_string(&record()).unwrap();
        let bad = good.replace("\"bid\":55.0,", "");
        let text = format!("{good}\n{bad}\n");
        match read_jsonl::<ApplicationRecord, _>(text.as_bytes()) {
            Err(Error::Schema { line, message }) => {
                assert_eq!(line, 2);
                assert!(message.contains("bid"), "{message}");
            }
            other => panic!("{other:?}"),
        }
        let typo = good.replace("\"messages\"", "\"mesages\"");
        let err = read_jsonl::<ApplicationRecord, _>(typo.as_bytes()).unwrap_err().to_string();
        assert!(err.contains("mesages"), "{err}");
    }

    #[test]
    fn flat_params_round_trip_exactly() {
        let g: ObservableGroup = "Europe/ArrOver45/High".parse().unwrap();
        let p = StructuralParams { alpha_signed: -0.0110, beta: 0.1644, t_by_group: [(g, 1.0 / 3.0)].into(), pi: 0.5749 };
        let text = FlatParams::from(&p).to_text();
        assert!(text.contains("\"t.Europe/ArrOver45/High\" = "));
        let back = StructuralParams::try_from(&FlatParams::parse(&text).unwrap()).unwrap();
        assert_eq!(back, p);
        let missing = FlatParams::parse("\"beta\" = 0.1").unwrap();
        assert!(StructuralParams::try_from(&missing).unwrap_err().to_string().contains("alpha_signed"));
    }

    #[test]
    fn model_params_round_trip() {
        let g: ObservableGroup = "SouthAsia/Arr0to5/Middle".parse().unwrap();
        let p = ModelParams {
            alpha: 0.011,
            beta: 0.16,
            t_by_group: [(g, -1.15)].into(),
            pi: 0.57,
            signal: [(g, SignalProduction::new(5.72, 0.92, 5.38).unwrap())].into(),
        };
        let back = ModelParams::try_from(&FlatParams::parse(&FlatParams::from(&p).to_text()).unwrap()).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn posts_need_signal_and_flags() {
        let mut r = record();
        assert!(posts_from_records(&[r.clone()]).unwrap_err().to_string().contains("signal"));
        r.signal = Some(9.0);
        r.considered = Some(true);
        r.hired = Some(true);
        let posts = posts_from_records(&[r]).unwrap();
        assert_eq!(posts[0].winner, Some(Winner::Worker(3)));
    }
}
