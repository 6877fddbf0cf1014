use netevo::eval::{emit_plot_data, load_plot_data, loocv, plot_rows, save_report, EvalConfig, EvalReport};
use netevo::io::{load_population, read_json, save_population};
use netevo::synth::{generate, SynthConfig};

fn small() -> netevo::Population {
    generate(&SynthConfig { n_subjects: 8, n_rois: 7, ..SynthConfig::default() })
        .unwrap()
        .population
}

#[test]
fn population_survives_save_and_load() {
    let dir = tempfile::tempdir().unwrap();
    let pop = small();
    let manifest = save_population(&pop, dir.path()).unwrap();
    assert_eq!(load_population(&manifest).unwrap(), pop);
}

#[test]
fn missing_matrix_file_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = save_population(&small(), dir.path()).unwrap();
    std::fs::remove_file(dir.path().join("matrices/sub003_t1.csv")).unwrap();
    let err = load_population(&manifest).unwrap_err();
    assert!(err.to_string().contains("sub003"), "{err}");
}

#[test]
fn report_and_plot_data_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let report = loocv(&small(), &EvalConfig::default()).unwrap();

    let json = dir.path().join("report.json");
    save_report(&report, &json).unwrap();
    let back: EvalReport = read_json(&json).unwrap();
    assert_eq!(back.cells, report.cells);
    assert_eq!(back.aggregates, report.aggregates);
    assert_eq!(back.config, report.config);

    let csv = dir.path().join("plot_data.csv");
    emit_plot_data(&report, &csv).unwrap();
    let rows = load_plot_data(&csv).unwrap();
    // 3 methods x 3 K x 1 follow-up x 2 metrics
    assert_eq!(rows.len(), 18);
    assert_eq!(rows, plot_rows(&report));
    let header = std::fs::read_to_string(&csv).unwrap();
    assert!(header.starts_with("method,K,timepoint,metric,mean,std\n"));
}

#[test]
fn every_cell_covers_every_subject_once() {
    let pop = small();
    let report = loocv(&pop, &EvalConfig::default()).unwrap();
    for a in &report.aggregates {
        let mut subjects: Vec<_> = report
            .cells
            .iter()
            .filter(|c| c.method == a.method && c.k == a.k && c.timepoint == a.timepoint)
            .map(|c| c.subject.clone())
            .collect();
        subjects.sort();
        subjects.dedup();
        assert_eq!(subjects.len(), pop.n_subjects());
        assert_eq!(a.n_subjects, pop.n_subjects());
    }
}
