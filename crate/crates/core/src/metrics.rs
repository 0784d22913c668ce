//! Per-trial records, five-number summaries and machine-readable reports.

use serde::{Deserialize, Serialize};

use crate::attack::{AttackSpec, Primitive};
use crate::error::{Error, Result};
use crate::matrix::{TransformEstimate, TransformMatrix};

/// CSV column names, in order.
pub const CSV_COLUMNS: [&str; 13] = [
    "image", "attack", "sx", "sy", "theta_r", "theta_x", "theta_y", "crop_w", "crop_h", "err", "psnr",
    "ber", "excluded",
];

/// Attack parameters flattened to one value per kind; with repeated kinds the
/// last step wins.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AttackParams {
    pub sx: Option<f64>,
    pub sy: Option<f64>,
    pub theta_r: Option<f64>,
    pub theta_x: Option<f64>,
    pub theta_y: Option<f64>,
}

impl AttackParams {
    pub fn from_spec(spec: &AttackSpec) -> Self {
        let mut p = AttackParams::default();
        for step in &spec.steps {
            match *step {
                Primitive::Scale { sx, sy } => {
                    p.sx = Some(sx);
                    p.sy = Some(sy);
                }
                Primitive::Rotate { deg } => p.theta_r = Some(deg),
                Primitive::ShearX { deg } => p.theta_x = Some(deg),
                Primitive::ShearY { deg } => p.theta_y = Some(deg),
            }
        }
        p
    }
}

/// Outcome of one (image, attack) trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub image: String,
    /// Attack label, e.g. `rotate=30` or `pattern-1`.
    pub attack: String,
    pub spec: AttackSpec,
    pub params: AttackParams,
    pub truth: TransformMatrix,
    /// `None` when the pilot was not detected.
    pub estimate: Option<TransformEstimate>,
    /// Whichever of the estimate and its twin is closer to the truth.
    pub selected: Option<TransformMatrix>,
    pub err: Option<f64>,
    /// PSNR of the stego image against the original, in dB.
    pub psnr: Option<f64>,
    pub ber: Option<f64>,
    /// Detection failures are excluded from the statistics.
    pub excluded: bool,
    pub failure: Option<String>,
}

/// Five-number summary of one group; quantile fields are `None` when every
/// trial of the group was excluded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub n_excluded: usize,
    pub min: Option<f64>,
    pub q1: Option<f64>,
    pub median: Option<f64>,
    pub q3: Option<f64>,
    pub max: Option<f64>,
}

/// Linearly interpolated quantile of sorted data (`q` in `[0, 1]`).
pub fn quantile(sorted: &[f64], q: f64) -> Option<f64> {
    match sorted.len() {
        0 => None,
        n => {
            let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
            let (lo, frac) = (pos.floor() as usize, pos.fract());
            let hi = (lo + 1).min(n - 1);
            Some(sorted[lo] + frac * (sorted[hi] - sorted[lo]))
        }
    }
}

/// Summary of `values`, where `None` marks an excluded trial.
pub fn summarize(values: &[Option<f64>]) -> Summary {
    let mut kept: Vec<f64> = values.iter().flatten().copied().collect();
    kept.sort_by(f64::total_cmp);
    Summary {
        n: kept.len(),
        n_excluded: values.len() - kept.len(),
        min: kept.first().copied(),
        q1: quantile(&kept, 0.25),
        median: quantile(&kept, 0.5),
        q3: quantile(&kept, 0.75),
        max: kept.last().copied(),
    }
}

/// One summary per group, in order of first appearance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub group: String,
    pub summary: Summary,
}

/// Groups `trials` by `key` and summarizes `value` within each group.
pub fn summarize_by(
    trials: &[TrialRecord],
    key: impl Fn(&TrialRecord) -> String,
    value: impl Fn(&TrialRecord) -> Option<f64>,
) -> Vec<GroupSummary> {
    let mut groups: Vec<(String, Vec<Option<f64>>)> = Vec::new();
    for t in trials {
        let k = key(t);
        let v = if t.excluded { None } else { value(t) };
        match groups.iter_mut().find(|(g, _)| *g == k) {
            Some((_, vals)) => vals.push(v),
            None => groups.push((k, vec![v])),
        }
    }
    groups
        .into_iter()
        .map(|(group, vals)| GroupSummary {
            group,
            summary: summarize(&vals),
        })
        .collect()
}

/// Trials plus per-attack summaries of the relative error and BER.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub err: Vec<GroupSummary>,
    pub ber: Vec<GroupSummary>,
    pub trials: Vec<TrialRecord>,
}

impl Report {
    pub fn new(trials: Vec<TrialRecord>) -> Self {
        let by_attack = |t: &TrialRecord| t.attack.clone();
        Report {
            err: summarize_by(&trials, by_attack, |t| t.err),
            ber: summarize_by(&trials, by_attack, |t| t.ber),
            trials,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One row per trial under [`CSV_COLUMNS`]; absent values are empty.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let csv_err = |e: csv::Error| Error::Serde(e.to_string());
        w.write_record(CSV_COLUMNS).map_err(csv_err)?;
        let num = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for t in &self.trials {
            let crop = t.spec.crop;
            w.write_record([
                t.image.clone(),
                t.attack.clone(),
                num(t.params.sx),
                num(t.params.sy),
                num(t.params.theta_r),
                num(t.params.theta_x),
                num(t.params.theta_y),
                crop.map(|c| c.w.to_string()).unwrap_or_default(),
                crop.map(|c| c.h.to_string()).unwrap_or_default(),
                num(t.err),
                num(t.psnr),
                num(t.ber),
                t.excluded.to_string(),
            ])
            .map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Serde(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Serde(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attack::CropSpec;
    use proptest::prelude::*;

    fn trial(attack: &str, err: Option<f64>) -> TrialRecord {
        let spec = AttackSpec {
            steps: vec![Primitive::Rotate { deg: 30.0 }],
            crop: Some(CropSpec::center(1080, 1080)),
        };
        TrialRecord {
            image: "img-0".into(),
            attack: attack.into(),
            params: AttackParams::from_spec(&spec),
            truth: spec.matrix().unwrap(),
            spec,
            estimate: None,
            selected: None,
            err,
            psnr: Some(43.5),
            ber: None,
            excluded: err.is_none(),
            failure: err.is_none().then(|| "pilot not found".into()),
        }
    }

    #[test]
    fn single_zero_trial() {
        let s = summarize(&[Some(0.0)]);
        assert_eq!((s.min, s.q1, s.median, s.q3, s.max), (Some(0.0), Some(0.0), Some(0.0), Some(0.0), Some(0.0)));
        assert_eq!((s.n, s.n_excluded), (1, 0));
    }

    #[test]
    fn median_of_two() {
        assert!((summarize(&[Some(0.0), Some(0.1)]).median.unwrap() - 0.05).abs() < 1e-15);
    }

    #[test]
    fn exclusions_are_counted() {
        let vals = [Some(0.1), None, Some(0.0), None, Some(0.3), Some(0.2)];
        let s = summarize(&vals);
        assert_eq!((s.n, s.n_excluded), (4, 2));
        assert_eq!(s.min, Some(0.0));
        assert_eq!(s.max, Some(0.3));
    }

    #[test]
    fn empty_group_has_no_quantiles() {
        let s = summarize(&[None, None]);
        assert_eq!((s.n, s.n_excluded, s.median), (0, 2, None));
        assert_eq!(summarize(&[]).median, None);
    }

    #[test]
    fn quantiles_interpolate_linearly() {
        let sorted = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile(&sorted, 0.25), Some(2.0));
        assert_eq!(quantile(&[1.0, 2.0, 3.0, 4.0], 0.25), Some(1.75));
    }

    #[test]
    fn params_from_composite() {
        let spec: AttackSpec = AttackSpec::from_json(
            r#"{"steps":[{"type":"shear_y","deg":50},{"type":"scale","sx":0.6,"sy":1.1},{"type":"shear_x","deg":65}]}"#,
        )
        .unwrap();
        let p = AttackParams::from_spec(&spec);
        assert_eq!((p.sx, p.sy, p.theta_r, p.theta_x, p.theta_y), (Some(0.6), Some(1.1), None, Some(65.0), Some(50.0)));
    }

    #[test]
    fn grouping_keeps_first_appearance_order() {
        let trials = vec![trial("b", Some(0.2)), trial("a", Some(0.0)), trial("b", None), trial("b", Some(0.4))];
        let groups = summarize_by(&trials, |t| t.attack.clone(), |t| t.err);
        assert_eq!(groups.len(), 2);
        assert_eq!(groups[0].group, "b");
        assert_eq!((groups[0].summary.n, groups[0].summary.n_excluded), (2, 1));
        assert!((groups[0].summary.median.unwrap() - 0.3).abs() < 1e-12);
    }

    #[test]
    fn csv_layout() {
        let report = Report::new(vec![trial("rotate=30", Some(0.001)), trial("rotate=30", None)]);
        let csv = report.to_csv().unwrap();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "image,attack,sx,sy,theta_r,theta_x,theta_y,crop_w,crop_h,err,psnr,ber,excluded"
        );
        assert_eq!(lines.next().unwrap(), "img-0,rotate=30,,,30,,,1080,1080,0.001,43.5,,false");
        assert_eq!(lines.next().unwrap(), "img-0,rotate=30,,,30,,,1080,1080,,43.5,,true");
        let json: serde_json::Value = serde_json::from_str(&report.to_json().unwrap()).unwrap();
        assert_eq!(json["err"][0]["summary"]["n_excluded"], 1);
    }

    proptest! {
        #[test]
        fn summary_is_permutation_invariant_and_monotone(
            vals in proptest::collection::vec(proptest::option::of(0.0f64..10.0), 1..40),
            seed in any::<u64>(),
        ) {
            use rand::{seq::SliceRandom, SeedableRng};
            let s = summarize(&vals);
            let mut shuffled = vals.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(s, summarize(&shuffled));
            if s.n > 0 {
                let q = [s.min, s.q1, s.median, s.q3, s.max].map(Option::unwrap);
                prop_assert!(q.windows(2).all(|w| w[0] <= w[1]));
            }
        }
    }
}
