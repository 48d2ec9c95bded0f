use std::fs;

use gsr_dsp::corpus::{read_pair_list, simulate_corpus, CorpusManifest, RecipeRecord};
use gsr_dsp::degrade::DegradationPolicy;
use gsr_dsp::{read_wav, write_wav, Waveform};

fn tone(n: usize, f: f64) -> Waveform {
    Waveform::new((0..n).map(|i| 0.5 * (2.0 * std::f64::consts::PI * f * i as f64 / 16_000.0).sin()).collect()).unwrap()
}

#[test]
fn wav_round_trip_is_16bit_accurate() {
    let dir = tempfile::tempdir().unwrap();
    let w = tone(1000, 440.0);
    let p = dir.path().join("a.wav");
    write_wav(&p, &w).unwrap();
    let r = read_wav(&p).unwrap();
    assert_eq!(r.len(), 1000);
    assert!(w.samples.iter().zip(&r.samples).all(|(a, b)| (a - b).abs() < 1.0 / 32_000.0));
}

#[test]
fn simulate_writes_pairs_and_log() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    for (i, f) in [220.0, 330.0].iter().enumerate() {
        write_wav(root.join(format!("c{i}.wav")), &tone(4000, *f)).unwrap();
    }
    write_wav(root.join("n0.wav"), &tone(1500, 1234.0)).unwrap();
    let mut rir = vec![0.0; 200];
    rir[5] = 1.0;
    rir[80] = 0.4;
    write_wav(root.join("r0.wav"), &Waveform::new(rir).unwrap()).unwrap();
    fs::write(root.join("clean.txt"), "c0.wav\t0.25\n# comment\nc1.wav\n").unwrap();
    fs::write(root.join("noise.txt"), "n0.wav\n").unwrap();
    fs::write(root.join("rir.txt"), "r0.wav\n").unwrap();

    let m = CorpusManifest::from_lists(
        &root.join("clean.txt"),
        Some(&root.join("noise.txt")),
        Some(&root.join("rir.txt")),
        "train",
    )
    .unwrap();
    assert_eq!(m.clean.len(), 2);
    let out = root.join("sim");
    let recs = simulate_corpus(&m, &DegradationPolicy::with_probability(1.0), 42, 5, &out).unwrap();
    assert_eq!(recs.len(), 5);
    let log = fs::read_to_string(out.join("recipes.jsonl")).unwrap();
    let parsed: Vec<RecipeRecord> = log.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(parsed, recs);
    assert!(parsed.iter().all(|r| r.recipe.steps.len() == 4));
    let pairs = read_pair_list(out.join("pairs.tsv")).unwrap();
    assert_eq!(pairs.len(), 5);
    let d = read_wav(&pairs[0].0).unwrap();
    assert_eq!(d.len(), 4000);

    // same seed -> same recipes
    let again = simulate_corpus(&m, &DegradationPolicy::with_probability(1.0), 42, 5, &root.join("sim2")).unwrap();
    let a: Vec<_> = recs.iter().map(|r| &r.recipe).collect();
    let b: Vec<_> = again.iter().map(|r| &r.recipe).collect();
    assert_eq!(a, b);
}

#[test]
fn missing_manifest_entries_fail_early() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("clean.txt"), "nope.wav\n").unwrap();
    assert!(CorpusManifest::from_lists(&dir.path().join("clean.txt"), None, None, "x").is_err());
    fs::write(dir.path().join("empty.txt"), "\n").unwrap();
    assert!(CorpusManifest::from_lists(&dir.path().join("empty.txt"), None, None, "x").is_err());
}
