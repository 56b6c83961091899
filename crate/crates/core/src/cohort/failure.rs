//! Treatment-failure labels and time to failure.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::extraction::schema::OutcomeRecord;

use super::CohortError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureCause {
    ProgressionDiscontinued,
    ToxicityModified,
    DeathOrHospice,
}

/// The failure predicate for one record.
pub fn failure_causes(o: &OutcomeRecord) -> Vec<FailureCause> {
    let mut causes = Vec::new();
    if o.progression.progressed && o.progression.discontinued {
        causes.push(FailureCause::ProgressionDiscontinued);
    }
    if o.toxicity.adverse_effects && o.toxicity.discontinued_or_modified {
        causes.push(FailureCause::ToxicityModified);
    }
    if o.death_hospice.died || o.death_hospice.hospice {
        causes.push(FailureCause::DeathOrHospice);
    }
    causes
}

pub fn is_failure(o: &OutcomeRecord) -> bool {
    !failure_causes(o).is_empty()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureLabel {
    pub event: bool,
    pub event_date: Option<NaiveDate>,
    pub causes: Vec<FailureCause>,
}

/// `outcomes` are (note date, record) pairs. Records dated before
/// `plan_start` are ignored. Each record is judged on its own: a
/// progression in one note and a discontinuation in another do not
/// combine. A qualifying record dates the event at its note date, or at
/// its stated death/hospice date when it qualifies through death/hospice.
pub fn derive_failure(outcomes: &[(NaiveDate, OutcomeRecord)], plan_start: NaiveDate) -> FailureLabel {
    let mut label = FailureLabel { event: false, event_date: None, causes: Vec::new() };
    for (date, rec) in outcomes {
        if *date < plan_start {
            continue;
        }
        let causes = failure_causes(rec);
        if causes.is_empty() {
            continue;
        }
        let when = match rec.death_hospice.event_date {
            Some(d) if causes.contains(&FailureCause::DeathOrHospice) => d,
            _ => *date,
        };
        label.event = true;
        if label.event_date.is_none_or(|cur| when < cur) {
            label.event_date = Some(when);
        }
        for c in causes {
            if !label.causes.contains(&c) {
                label.causes.push(c);
            }
        }
    }
    label
}

/// Days from plan start to the event, or to the last observation when
/// censored. Zero durations become one day.
pub fn time_to_event(
    patient_id: &str,
    plan_start: NaiveDate,
    event_date: Option<NaiveDate>,
    last_observation: NaiveDate,
) -> Result<(u32, bool), CohortError> {
    let (end, event) = match event_date {
        Some(d) => (d, true),
        None => (last_observation.max(plan_start), false),
    };
    let days = (end - plan_start).num_days();
    if days < 0 {
        return Err(CohortError::NegativeDuration { patient_id: patient_id.to_string(), days });
    }
    if days == 0 {
        log::warn!("patient {patient_id}: zero follow-up, clamped to 1 day");
    }
    Ok((days.max(1) as u32, event))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    fn rec(p: bool, disc: bool, ae: bool, m: bool, died: bool, hospice: bool) -> OutcomeRecord {
        let mut o = OutcomeRecord::default();
        o.progression.progressed = p;
        o.progression.discontinued = disc;
        o.toxicity.adverse_effects = ae;
        o.toxicity.discontinued_or_modified = m;
        o.death_hospice.died = died;
        o.death_hospice.hospice = hospice;
        o
    }

    #[test]
    fn time_examples() {
        assert_eq!(time_to_event("p", d("2020-01-01"), Some(d("2021-03-07")), d("2021-06-01")).unwrap(), (431, true));
        assert_eq!(time_to_event("p", d("2020-01-01"), None, d("2020-01-01")).unwrap(), (1, false));
        assert_eq!(time_to_event("p", d("2020-01-01"), None, d("2020-04-10")).unwrap(), (100, false));
        assert!(matches!(
            time_to_event("p", d("2020-01-01"), Some(d("2019-12-30")), d("2020-04-10")),
            Err(CohortError::NegativeDuration { days: -2, .. })
        ));
    }

    #[test]
    fn earliest_qualifying_note_dates_the_event() {
        let start = d("2020-01-01");
        let notes = vec![
            (d("2019-12-01"), rec(true, true, false, false, false, false)),
            (d("2020-02-01"), rec(true, false, false, false, false, false)),
            (d("2020-05-01"), rec(false, false, true, true, false, false)),
            (d("2020-03-01"), rec(true, true, false, false, false, false)),
        ];
        let l = derive_failure(&notes, start);
        assert!(l.event);
        assert_eq!(l.event_date, Some(d("2020-03-01")));
        assert_eq!(l.causes, vec![FailureCause::ToxicityModified, FailureCause::ProgressionDiscontinued]);
    }

    #[test]
    fn stated_death_date_wins_over_note_date() {
        let mut r = rec(false, false, false, false, true, false);
        r.death_hospice.event_date = Some(d("2020-06-10"));
        let l = derive_failure(&[(d("2020-06-20"), r)], d("2020-01-01"));
        assert_eq!(l.event_date, Some(d("2020-06-10")));
    }

    #[test]
    fn split_evidence_across_notes_is_not_failure() {
        let notes = vec![
            (d("2020-02-01"), rec(true, false, false, false, false, false)),
            (d("2020-03-01"), rec(false, true, false, false, false, false)),
        ];
        let l = derive_failure(&notes, d("2020-01-01"));
        assert!(!l.event);
        assert_eq!(l.event_date, None);
    }

    #[test]
    fn censored_label_has_no_date() {
        let l = derive_failure(&[(d("2020-02-01"), OutcomeRecord::default())], d("2020-01-01"));
        assert_eq!(l, FailureLabel { event: false, event_date: None, causes: vec![] });
    }
}
