use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

use tempfile::TempDir;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn verse(config: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_verse"))
        .arg("--config")
        .arg(config)
        .args(args)
        .output()
        .expect("run verse")
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// The toy fixture config with its model directory moved into `dir`.
fn toy_config(dir: &TempDir, extra: &str) -> PathBuf {
    let text = fs::read_to_string(fixtures().join("toy1.toml"))
        .unwrap()
        .replace("toy1.txt", &fixtures().join("toy1.txt").display().to_string())
        .replace("city.tags", &fixtures().join("city.tags").display().to_string());
    let path = dir.path().join("verse.toml");
    fs::write(&path, format!("{text}{extra}")).unwrap();
    path
}

fn trained_toy(extra: &str) -> (TempDir, PathBuf) {
    let dir = TempDir::new().unwrap();
    let cfg = toy_config(&dir, extra);
    stdout(&verse(&cfg, &["ingest"]));
    stdout(&verse(&cfg, &["train", "ngram"]));
    (dir, cfg)
}

fn read_dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn ingest_summarises_and_is_idempotent() {
    let dir = TempDir::new().unwrap();
    let cfg = toy_config(&dir, "");
    let out = stdout(&verse(&cfg, &["ingest"]));
    assert!(out.starts_with("2 poems, 4 lines"), "{out}");
    let models = dir.path().join("models");
    let first = read_dir_bytes(&models);
    assert_eq!(first.len(), 4);
    stdout(&verse(&cfg, &["ingest"]));
    assert_eq!(read_dir_bytes(&models), first);
}

#[test]
fn missing_corpus_fails_without_artifacts() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("verse.toml");
    fs::write(&cfg, "version = 1\n[paths]\ncorpus = \"absent.txt\"\n").unwrap();
    let o = verse(&cfg, &["ingest"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("absent.txt"));
    assert!(!dir.path().join("models").exists());
}

#[test]
fn ingestion_errors_name_file_and_line() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("bad.txt"), "a b\nc <eos> d\n").unwrap();
    let cfg = dir.path().join("verse.toml");
    fs::write(&cfg, "version = 1\n[paths]\ncorpus = \"bad.txt\"\n").unwrap();
    let o = verse(&cfg, &["ingest"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("bad.txt:2"), "{}", stderr(&o));
}

#[test]
fn invalid_config_exits_with_config_code() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("verse.toml");
    fs::write(&cfg, "version = 1\n[paths]\ncorpus = \"c.txt\"\n[generation]\ntop_n = 0\n").unwrap();
    assert_eq!(verse(&cfg, &["ingest"]).status.code(), Some(2));
    let cfg = toy_config(&dir, "");
    assert_eq!(verse(&cfg, &["--lines", "0", "ingest"]).status.code(), Some(2));
}

#[test]
fn commands_need_their_artifacts() {
    let dir = TempDir::new().unwrap();
    let cfg = toy_config(&dir, "");
    assert_eq!(verse(&cfg, &["train", "ngram"]).status.code(), Some(6));
    stdout(&verse(&cfg, &["ingest"]));
    let o = verse(&cfg, &["generate"]);
    assert_eq!(o.status.code(), Some(6));
    assert!(stderr(&o).contains("ngram-forward.bin") || stderr(&o).contains("thresholds.json"));
}

#[test]
fn ngram_training_is_fast_and_reproducible() {
    let dir = TempDir::new().unwrap();
    let cfg = toy_config(&dir, "");
    stdout(&verse(&cfg, &["ingest"]));
    let t = Instant::now();
    let out = stdout(&verse(&cfg, &["train", "ngram"]));
    assert!(t.elapsed().as_secs_f64() < 1.0, "{:?}", t.elapsed());
    assert!(out.contains("ngram forward") && out.contains("thresholds:"), "{out}");
    let models = dir.path().join("models");
    let first = read_dir_bytes(&models);
    stdout(&verse(&cfg, &["train", "ngram"]));
    assert_eq!(read_dir_bytes(&models), first);
}

#[test]
fn generate_matches_golden_poem() {
    let (dir, cfg) = trained_toy("");
    let prov = dir.path().join("prov.json");
    let args = ["generate", "--out", prov.to_str().unwrap()];
    let poem = stdout(&verse(&cfg, &args));
    let golden = fixtures().join("golden");
    assert_eq!(poem, fs::read_to_string(golden.join("toy1.poem")).unwrap());
    assert_eq!(
        fs::read_to_string(&prov).unwrap(),
        fs::read_to_string(golden.join("toy1.provenance.json")).unwrap()
    );
    assert_eq!(stdout(&verse(&cfg, &args)), poem);
}

#[test]
fn generate_writes_provenance_next_to_models_by_default() {
    let (dir, cfg) = trained_toy("");
    stdout(&verse(&cfg, &["generate"]));
    let prov: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("models/provenance.json")).unwrap())
            .unwrap();
    let poem = &prov[0];
    assert_eq!(poem["seed"], 7);
    assert_eq!(poem["keywords"].as_array().unwrap().len(), 4);
    for line in poem["lines"].as_array().unwrap() {
        assert!(line["attempts"].as_u64().unwrap() >= 1);
        assert!(line["scores"]["ngram"].is_f64());
    }
}

#[test]
fn single_line_override() {
    let (_dir, cfg) = trained_toy("");
    let out = stdout(&verse(&cfg, &["--lines", "1", "generate"]));
    assert_eq!(out.lines().count(), 1);
    assert!(out.contains("city"));
}

#[test]
fn no_expansion_seeds_two_lines_and_continues_two() {
    let (dir, cfg) = trained_toy("");
    let prov = dir.path().join("p.json");
    let out = stdout(&verse(
        &cfg,
        &["--strategy", "none", "--out", prov.to_str().unwrap(), "generate"],
    ));
    assert_eq!(out.lines().count(), 4);
    let rec: serde_json::Value = serde_json::from_str(&fs::read_to_string(&prov).unwrap()).unwrap();
    let lines = rec[0]["lines"].as_array().unwrap();
    let keywords: Vec<_> = lines.iter().map(|l| l["keyword"].as_str()).collect();
    assert_eq!(keywords, [Some("city"), Some("busy"), None, None]);
    for (l, text) in lines.iter().zip(out.lines()) {
        assert_eq!(l["text"], text);
        if let Some(k) = l["keyword"].as_str() {
            assert_eq!(l["keyword_origin"], "extracted");
            assert!(text.split(' ').any(|w| w == k));
        }
    }
}

#[test]
fn poems_in_a_batch_are_deterministic() {
    let (_dir, cfg) = trained_toy("");
    let a = stdout(&verse(&cfg, &["generate", "--poems", "6"]));
    assert_eq!(a.split("\n\n").count(), 6);
    assert_eq!(stdout(&verse(&cfg, &["generate", "--poems", "6"])), a);
    let first = stdout(&verse(&cfg, &["generate"]));
    assert!(a.starts_with(&first));
    assert_ne!(stdout(&verse(&cfg, &["--seed", "8", "generate", "--poems", "6"])), a);
}

#[test]
fn expand_prints_origins() {
    let (_dir, cfg) = trained_toy("");
    let out = stdout(&verse(&cfg, &["expand"]));
    let origins: Vec<&str> = out.lines().map(|l| l.split('\t').nth(1).unwrap()).collect();
    assert_eq!(origins, ["extracted", "extracted", "expanded-cooc", "expanded-cooc"]);
    let freq = stdout(&verse(&cfg, &["--strategy", "frequency", "expand"]));
    assert!(freq.lines().skip(2).all(|l| l.ends_with("expanded-freq")));
}

#[test]
fn keyword_assembly_failure_is_a_generation_error() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("weak.tags"), "river\tnoun\t0.1\n").unwrap();
    let cfg = toy_config(&dir, "");
    let text = fs::read_to_string(&cfg)
        .unwrap()
        .replace(&fixtures().join("city.tags").display().to_string(), "weak.tags");
    fs::write(&cfg, text).unwrap();
    stdout(&verse(&cfg, &["ingest"]));
    stdout(&verse(&cfg, &["train", "ngram"]));
    let o = verse(&cfg, &["--strategy", "none", "generate"]);
    assert_eq!(o.status.code(), Some(5));
    assert!(stderr(&o).contains("keyword"), "{}", stderr(&o));
}

#[test]
fn score_reports_each_line() {
    let (dir, cfg) = trained_toy("");
    let empty = dir.path().join("empty.txt");
    fs::write(&empty, "").unwrap();
    assert_eq!(stdout(&verse(&cfg, &["score", empty.to_str().unwrap()])), "");

    let corpus = fixtures().join("toy1.txt");
    let out = stdout(&verse(&cfg, &["score", corpus.to_str().unwrap()]));
    assert_eq!(out.lines().count(), 4);
    for l in out.lines() {
        let f: Vec<&str> = l.split('\t').collect();
        assert_eq!(f.len(), 4, "{l}");
        assert!(f[1].starts_with("ngram=") && f[2].starts_with("skipgram="));
    }
    assert_eq!(stdout(&verse(&cfg, &["score", corpus.to_str().unwrap()])), out);

    let odd = dir.path().join("odd.txt");
    fs::write(&odd, "city\nzebra zebra zebra\n").unwrap();
    let out = stdout(&verse(&cfg, &["score", odd.to_str().unwrap()]));
    assert!(out.lines().next().unwrap().contains("skipgram=n/a"));
    assert!(out.lines().nth(1).unwrap().starts_with("fail"));
}

#[test]
fn garden_corpus_lines_pass_calibrated_checks() {
    let dir = TempDir::new().unwrap();
    let f = fixtures();
    let cfg = dir.path().join("verse.toml");
    fs::write(
        &cfg,
        format!(
            "version = 1\n[paths]\ncorpus = {:?}\npos_corpus = {:?}\n\
             [ngram]\norder = 2\nalpha = 0.1\n\
             [train]\nd_emb = 8\nhidden = 16\nepochs = 5\nbatch_size = 16\nlearning_rate = 0.02\n\
             [fluency]\nchecks = [\"ngram\", \"skipgram\", \"pos\"]\n",
            f.join("garden.txt"),
            f.join("garden.pos")
        ),
    )
    .unwrap();
    stdout(&verse(&cfg, &["ingest"]));
    let out = stdout(&verse(&cfg, &["train", "all"]));
    assert!(out.contains("pos:") && out.contains("pos="), "{out}");
    let out = stdout(&verse(&cfg, &["score", f.join("garden.txt").to_str().unwrap()]));
    let total = out.lines().count();
    assert_eq!(total, 1000);
    let passed = out.lines().filter(|l| l.starts_with("pass")).count();
    assert!(passed as f64 / total as f64 >= 0.9, "{passed}/{total}");
}

#[test]
fn hierarchical_recurrent_pipeline() {
    let dir = TempDir::new().unwrap();
    let f = fixtures();
    fs::write(dir.path().join("c.tags"), "sea\tnoun\t0.9\nblue\tadjective\t0.8\n").unwrap();
    let cfg = dir.path().join("verse.toml");
    fs::write(
        &cfg,
        format!(
            "version = 1\nfamily = \"recurrent\"\n[paths]\ncorpus = {:?}\ntags = \"c.tags\"\n\
             [train]\nd_emb = 8\nhidden = 16\nd_enc = 8\nepochs = 30\nbatch_size = 3\nlearning_rate = 0.02\n\
             [generation]\nconditioning = \"hierarchical\"\n\
             [keywords]\nf_min = 1\n",
            f.join("colors.txt")
        ),
    )
    .unwrap();
    stdout(&verse(&cfg, &["ingest"]));
    let out = stdout(&verse(&cfg, &["train", "recurrent"]));
    assert!(out.contains("recurrent (PoemState): 30 epochs"), "{out}");
    for name in ["lstm-forward.bin", "lstm-backward.bin", "encoder.bin", "poem-state.bin"] {
        assert!(dir.path().join("models").join(name).is_file(), "{name}");
    }
    stdout(&verse(&cfg, &["train", "ngram"]));
    let poem = stdout(&verse(&cfg, &["generate"]));
    assert_eq!(poem.lines().count(), 4);
    assert!(poem.lines().next().unwrap().contains("sea"));
    assert_eq!(stdout(&verse(&cfg, &["generate"])), poem);
    let prov = fs::read_to_string(dir.path().join("models/provenance.json")).unwrap();
    assert!(prov.contains("\"poem_state\""));
}
