mod support;

use std::time::Instant;

use support::{ingest_fixture, tv};
use verse_core::corpus::START;
use verse_core::generator::hierarchical_condition;
use verse_core::langmodel::{
    train_recurrent, Conditioning, ConditionalLanguageModel, Direction, ModelSet, RecurrentModel,
    TrainConfig,
};

fn overfit_config() -> TrainConfig {
    TrainConfig {
        d_emb: 16,
        hidden: 32,
        layers: 1,
        d_enc: 8,
        epochs: 500,
        batch_size: 10,
        learning_rate: 0.01,
        ..TrainConfig::desk()
    }
}

fn colors_config() -> TrainConfig {
    TrainConfig {
        d_emb: 8,
        hidden: 16,
        layers: 1,
        d_enc: 8,
        epochs: 1000,
        batch_size: 3,
        learning_rate: 0.02,
        ..TrainConfig::desk()
    }
}

fn both() -> [Direction; 2] {
    [Direction::Forward, Direction::Backward]
}

#[test]
fn ten_line_corpus_overfits() {
    let (corpus, vocab) = ingest_fixture("overfit10.txt");
    assert_eq!(corpus.line_count(), 10);
    let t = Instant::now();
    let trained = train_recurrent(
        &corpus,
        vocab.len(),
        &overfit_config(),
        &[Direction::Forward],
        Conditioning::None,
    )
    .unwrap();
    let ppl = trained.models.perplexity(&corpus).unwrap();
    eprintln!("overfit ppl {ppl:.4} in {:?}", t.elapsed());
    assert!(ppl < 1.3, "perplexity {ppl}");
}

fn colors_models() -> (ModelSet, ModelSet, verse_core::corpus::Corpus, verse_core::corpus::Vocabulary) {
    let (corpus, vocab) = ingest_fixture("colors.txt");
    let cfg = colors_config();
    let t = Instant::now();
    let plain = train_recurrent(&corpus, vocab.len(), &cfg, &both(), Conditioning::None).unwrap();
    let hier = train_recurrent(&corpus, vocab.len(), &cfg, &both(), Conditioning::PoemState).unwrap();
    eprintln!("colors training {:?}", t.elapsed());
    (plain.models, hier.models, corpus, vocab)
}

#[test]
fn hierarchical_beats_unconditioned_and_uses_history() {
    let (plain, hier, corpus, vocab) = colors_models();
    let p_plain = plain.perplexity(&corpus).unwrap();
    let p_hier = hier.perplexity(&corpus).unwrap();
    eprintln!("unconditioned {p_plain:.4} hierarchical {p_hier:.4}");
    assert!(p_hier < p_plain);

    let fwd: &RecurrentModel = hier.forward.as_ref().unwrap();
    let enc = hier.encoder.as_ref().unwrap();
    let ps = hier.poem_state.as_ref().unwrap();
    let poems = corpus.poems();
    let h_a = hierarchical_condition(enc, ps, &poems[0][..2]).unwrap();
    let h_b = hierarchical_condition(enc, ps, &poems[1][..2]).unwrap();
    let mut prefixes: Vec<Vec<u32>> = Vec::new();
    for line in corpus.lines() {
        for k in 0..=line.len() {
            let mut p = vec![START];
            p.extend_from_slice(&line[..k]);
            prefixes.push(p);
        }
    }
    prefixes.truncate(100);
    let mut w = 3u32;
    while prefixes.len() < 100 {
        prefixes.push(vec![START, w % vocab.len() as u32]);
        w += 1;
    }
    let mean: f64 = prefixes
        .iter()
        .map(|p| {
            let a = fwd.next_dist(p, Some(&h_a)).unwrap();
            let b = fwd.next_dist(p, Some(&h_b)).unwrap();
            tv(a.probs(), b.probs())
        })
        .sum::<f64>()
        / prefixes.len() as f64;
    eprintln!("mean tv {mean:.4}");
    assert!(mean > 1e-3);

    let swapped = [poems[0][1].clone(), poems[0][0].clone()];
    let h_swap = hierarchical_condition(enc, ps, &swapped).unwrap();
    let dist: f64 = h_a.iter().zip(&h_swap).map(|(x, y)| (x - y).powi(2)).sum();
    assert!(dist > 0.0);
}
