use faultsim::campaign::{audit, read_report, read_runs_csv, run_campaign, write_report, OutcomeClass, REPORT_FILES};
use faultsim::config::{Benchmark, CampaignConfig, OutputFormat};

fn config(text: &str) -> CampaignConfig {
    CampaignConfig::from_toml(text).unwrap()
}

fn crc() -> Vec<Benchmark> {
    vec![Benchmark::builtin("crc").unwrap()]
}

#[test]
fn zero_probability_runs_are_all_masked() {
    let cfg = config(
        "[engines.mem]\nprobability = 0.0\n[campaign]\nseed = 3\n[campaign.tier_runs]\nlow = 12",
    );
    let report = run_campaign(&cfg, &crc()).unwrap();
    assert_eq!(report.runs.len(), 12);
    for r in &report.runs {
        assert_eq!(r.outcome, OutcomeClass::Masked);
        assert_eq!(r.delta, 0.0);
        assert!(r.faults.is_empty());
        assert_eq!(r.hpc, report.golden[0].reference.hpc);
    }
    let cell = &report.cells[0];
    assert_eq!(cell.histogram.masked, 12);
    assert_eq!(cell.percentages.masked, 100.0);
    assert_eq!(cell.delta_masked, Some(0.0));
    assert_eq!(cell.delta_sdc, None);
}

#[test]
fn golden_runs_are_deterministic() {
    let cfg = config("[engines.reg]\nprobability = 0.0\n[campaign.tier_runs]\nlow = 1");
    let a = run_campaign(&cfg, &crc()).unwrap();
    let b = run_campaign(&cfg, &crc()).unwrap();
    assert_eq!(a.golden, b.golden);
    let expected = format!("{:08x}\n", crc32fast::hash(&crc_input()));
    assert_eq!(a.golden[0].reference.output, expected.as_bytes());
}

fn crc_input() -> Vec<u8> {
    let mut x: u32 = 12345;
    (0..1024)
        .map(|_| {
            x = x.wrapping_mul(1_103_515_245).wrapping_add(12345);
            (x >> 24) as u8
        })
        .collect()
}

#[test]
fn thread_count_does_not_change_the_report() {
    let text = |threads: usize| {
        format!(
            "[engines.mem]\nprobability = 1e-4\n[engines.reg]\nprobability = 1e-4\n\
             [campaign]\nseed = 11\nparallelism = {threads}\n[campaign.tier_runs]\nlow = 24"
        )
    };
    let serial = run_campaign(&config(&text(1)), &crc()).unwrap();
    let parallel = run_campaign(&config(&text(4)), &crc()).unwrap();
    assert_eq!(
        serde_json::to_string(&serial).unwrap(),
        serde_json::to_string(&parallel).unwrap()
    );
}

#[test]
fn written_report_round_trips_and_audits_clean() {
    let cfg = config(
        "[engines.reg]\nprobability = 1e-3\n[campaign]\nseed = 5\n[campaign.tier_runs]\nlow = 30",
    );
    let report = run_campaign(&cfg, &crc()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let written = write_report(dir.path(), &report, &[OutputFormat::Json, OutputFormat::Csv]).unwrap();
    assert_eq!(written.len(), REPORT_FILES.len());
    let back = read_report(&dir.path().join("report.json")).unwrap();
    assert_eq!(back, report);
    let rows = read_runs_csv(&dir.path().join("runs.csv")).unwrap();
    assert_eq!(rows.len(), 30);
    assert!(audit(&back.cells, &rows).is_empty());
    let deltas = std::fs::read_to_string(dir.path().join("delta_tables.csv")).unwrap();
    assert!(deltas.starts_with("engine,benchmark,low_sdc,low_masked,medium_sdc"));
}
