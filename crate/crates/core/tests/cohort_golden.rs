//! Hand-built four-patient cohort checked column by column against values
//! derived by hand from the fixture files.

use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;

use oncosurv::cohort::{build_cohort, read_approved_drugs, read_emr, read_plans, CohortConfig, PatientSurvival};
use oncosurv::corpus::{read_corpus, CorpusConfig};
use oncosurv::exec::Execution;
use oncosurv::extraction::{ExtractionConfig, ExtractionLine, Pipeline, RuleBackend, Target};
use oncosurv::retrieval::{HashedBowEmbedder, RetrievalConfig};

fn fixture(name: &str) -> File {
    let p: PathBuf = [env!("CARGO_MANIFEST_DIR"), "tests", "fixtures", "cohort", name].iter().collect();
    File::open(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

fn cohort() -> oncosurv::cohort::Cohort {
    let (notes, errs) = read_corpus(BufReader::new(fixture("notes.jsonl")), false).unwrap();
    assert!(errs.is_empty());
    let (c, r, e) = (CorpusConfig::default(), RetrievalConfig::default(), ExtractionConfig::default());
    let emb = HashedBowEmbedder::default();
    let p = Pipeline { corpus: &c, retrieval: &r, extraction: &e, embedder: &emb, backend: &RuleBackend };
    let lines: Vec<ExtractionLine> =
        p.extract_all(&notes, Target::ALL, 0, Execution::Sequential).into_iter().flat_map(|r| r.unwrap()).collect();
    let emr = read_emr(fixture("emr.csv")).unwrap();
    let plans = read_plans(fixture("plans.csv")).unwrap();
    let drugs = read_approved_drugs(fixture("drugs.csv")).unwrap();
    build_cohort(&emr, &plans, &drugs, &lines, &CohortConfig { support_threshold: 2, strict_alignment: false }).unwrap()
}

#[test]
fn features_match_hand_computed_rows() {
    let cohort = cohort();
    let names: Vec<String> = cohort.columns.iter().map(|c| c.name.clone()).collect();
    let mut expected = csv::Reader::from_reader(fixture("expected_features.csv"));
    let header = expected.headers().unwrap().clone();
    let want: Vec<csv::StringRecord> = expected.records().map(|r| r.unwrap()).collect();

    let ids: Vec<&str> = cohort.features.iter().map(|f| f.patient_id.as_str()).collect();
    assert_eq!(ids, ["A", "B", "C"]);
    assert_eq!(cohort.summary.orphans, ["D"]);

    assert_eq!(want.len(), cohort.rows.len());
    for ((row, f), rec) in cohort.rows.iter().zip(&cohort.features).zip(&want) {
        assert_eq!(&rec[0], f.patient_id);
        for (col, v) in header.iter().zip(rec.iter()).skip(1) {
            let j = names.iter().position(|n| n == col).unwrap_or_else(|| panic!("no column {col}"));
            let v: f64 = v.parse().unwrap();
            assert!((row[j] - v).abs() < 1e-9, "patient {} column {col}: got {} want {v}", &rec[0], row[j]);
        }
        // comorbidity groups not named in the expectation are all clear
        for (j, n) in names.iter().enumerate() {
            if n.starts_with("elix:") && !header.iter().any(|h| h == n) {
                assert_eq!(row[j], 0.0, "patient {} {n}", &rec[0]);
            }
        }
    }

    // only drugs from first plans get a column; the tamoxifen plan comes later
    let drug_cols: Vec<&str> = names.iter().filter_map(|n| n.strip_prefix("drug:")).collect();
    assert_eq!(drug_cols, ["docetaxel", "letrozole", "palbociclib", "trastuzumab"]);
    let regimen_cols: Vec<&str> = names.iter().filter_map(|n| n.strip_prefix("regimen:")).collect();
    assert_eq!(regimen_cols, ["letrozole+palbociclib"]);
    assert_eq!(cohort.summary.observed_combinations, 2);
    assert_eq!(cohort.summary.excluded_doses, 1);
}

#[test]
fn emr_wins_over_notes_and_logs_the_conflict() {
    let cohort = cohort();
    assert_eq!(cohort.conflicts.len(), 1, "{:?}", cohort.conflicts);
    let c = &cohort.conflicts[0];
    assert_eq!((c.patient_id.as_str(), c.field.as_str()), ("B", "t_stage"));
    assert_eq!(cohort.summary.conflicts, 1);
}

#[test]
fn survival_labels_match_hand_computed_dates() {
    let cohort = cohort();
    let want: Vec<PatientSurvival> = std::io::read_to_string(fixture("expected_survival.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(cohort.survival, want);
    assert_eq!(cohort.summary.events, 2);
}
