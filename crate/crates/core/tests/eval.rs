use std::path::Path;

use gsr_core::eval::{evaluate_corpus, evaluate_item, EvalReport, EvalRow, Identity, Summary};
use gsr_core::Generator;
use gsr_dsp::metrics::{lsd, si_snr, SI_SNR_CAP_DB};
use gsr_dsp::{write_wav, Waveform};

mod common;

fn pair(i: u64, len: usize) -> (Waveform, Waveform) {
    let clean = common::voiced(len, 100.0 + 20.0 * i as f64);
    let noise = common::uniform(len, 40 + i, 0.05 * (i + 1) as f64);
    let degraded = clean.iter().zip(&noise).map(|(c, n)| c + n).collect();
    (Waveform::new(degraded).unwrap(), Waveform::new(clean).unwrap())
}

fn write_corpus(dir: &Path, n: u64, reversed: bool) -> std::path::PathBuf {
    let mut lines = Vec::new();
    for i in 0..n {
        let (d, c) = pair(i, 4000);
        write_wav(dir.join(format!("d{i}.wav")), &d).unwrap();
        write_wav(dir.join(format!("c{i}.wav")), &c).unwrap();
        lines.push(format!("d{i}.wav\tc{i}.wav"));
    }
    if reversed {
        lines.reverse();
    }
    let name = if reversed { "rev.tsv" } else { "pairs.tsv" };
    let list = dir.join(name);
    std::fs::write(&list, lines.join("\n") + "\n").unwrap();
    list
}

#[test]
fn identity_reproduces_the_baseline() {
    let (d, c) = pair(1, 4000);
    let row = evaluate_item(&Identity, "x", &d, &c).unwrap();
    assert_eq!(row.lsd, lsd(&c.samples, &d.samples).unwrap());
    assert_eq!(row.si_snr, si_snr(&c.samples, &d.samples).unwrap());
    let same = evaluate_item(&Identity, "x", &c, &c).unwrap();
    assert_eq!(same.lsd, 0.0);
    assert_eq!(same.si_snr, SI_SNR_CAP_DB);
}

#[test]
fn length_mismatch_is_an_error() {
    let (d, _) = pair(0, 4000);
    let (_, c) = pair(0, 3999);
    assert!(evaluate_item(&Identity, "x", &d, &c).is_err());
}

#[test]
fn summary_oracle() {
    let rows = vec![
        EvalRow { path: "b".into(), lsd: 1.0, si_snr: 10.0 },
        EvalRow { path: "a".into(), lsd: 3.0, si_snr: 20.0 },
        EvalRow { path: "c".into(), lsd: 2.0, si_snr: 0.0 },
    ];
    let r = EvalReport::from_rows(rows).unwrap();
    assert_eq!(r.rows.iter().map(|x| x.path.as_str()).collect::<Vec<_>>(), ["a", "b", "c"]);
    assert_eq!(r.lsd.mean, 2.0);
    assert!((r.lsd.std - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
    assert_eq!(r.si_snr, Summary { mean: 10.0, std: (200.0f64 / 3.0).sqrt() });
    assert!(EvalReport::from_rows(Vec::new()).is_err());
}

#[test]
fn corpus_report_ignores_list_order() {
    let dir = tempfile::tempdir().unwrap();
    let fwd = write_corpus(dir.path(), 3, false);
    let rev = write_corpus(dir.path(), 3, true);
    let a = evaluate_corpus(&Identity, &fwd).unwrap();
    let b = evaluate_corpus(&Identity, &rev).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.rows.len(), 3);
    // Noisier items score worse.
    assert!(a.rows[0].si_snr > a.rows[2].si_snr);
}

#[test]
fn tsv_layout() {
    let dir = tempfile::tempdir().unwrap();
    let list = write_corpus(dir.path(), 2, false);
    let tsv = evaluate_corpus(&Identity, &list).unwrap().to_tsv();
    let lines: Vec<&str> = tsv.lines().collect();
    assert!(lines[0].starts_with("# lsd") && lines[1].starts_with("# si_snr"));
    assert_eq!(lines[2], "path\tlsd\tsi_snr");
    assert_eq!(lines.len(), 7);
    assert!(lines[5].starts_with("# mean\t") && lines[6].starts_with("# std\t"));
    for l in &lines[3..5] {
        let cols: Vec<&str> = l.split('\t').collect();
        assert_eq!(cols.len(), 3);
        assert!(cols[1].parse::<f64>().is_ok() && cols[2].parse::<f64>().is_ok());
    }
}

#[test]
fn bad_manifests_fail() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.tsv");
    std::fs::write(&empty, "").unwrap();
    assert!(evaluate_corpus(&Identity, &empty).is_err());
    assert!(evaluate_corpus(&Identity, &dir.path().join("missing.tsv")).is_err());
    let dangling = dir.path().join("dangling.tsv");
    std::fs::write(&dangling, "nope.wav\tnope2.wav\n").unwrap();
    assert!(evaluate_corpus(&Identity, &dangling).is_err());
}

#[test]
fn generator_enhancement_is_repeatable() {
    let g = Generator::new(common::tiny_generator(), 11).unwrap();
    let (d, c) = pair(2, 3000);
    let a = evaluate_item(&g, "x", &d, &c).unwrap();
    let b = evaluate_item(&g, "x", &d, &c).unwrap();
    assert_eq!(a, b);
    assert!(a.lsd.is_finite() && a.si_snr.is_finite());
}
