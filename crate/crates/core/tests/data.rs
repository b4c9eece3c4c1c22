use std::collections::HashSet;

use ewcl_core::data::{
    bigram_overlap, chunk_corpus, detokenize, synth_corpus, synth_mc_items, BatchStream, Grammar, GrammarId, McKind, Token,
    BOS, PAD,
};

fn bigrams(docs: &[Vec<u8>]) -> HashSet<[u8; 2]> {
    let mut out = HashSet::new();
    for d in docs {
        for i in 1..d.len() {
            out.insert([d[i - 1], d[i]]);
        }
    }
    out
}

#[test]
fn default_corpora_share_few_bigrams() {
    let a = synth_corpus(GrammarId::A, 400, 1).unwrap();
    let b = synth_corpus(GrammarId::B, 400, 2).unwrap();
    let (sa, sb) = (bigrams(a.documents()), bigrams(b.documents()));
    let oracle = sa.intersection(&sb).count() as f64 / sa.union(&sb).count() as f64;
    assert!(oracle < 0.05, "{oracle}");
    assert!((bigram_overlap(&a, &b) - oracle).abs() < 1e-15);
}

#[test]
fn corpora_are_reproducible() {
    let a = synth_corpus(GrammarId::A, 20, 3).unwrap();
    assert_eq!(a, synth_corpus(GrammarId::A, 20, 3).unwrap());
    assert_ne!(a, synth_corpus(GrammarId::A, 20, 4).unwrap());
}

#[test]
fn chunks_pack_bos_prefixed_documents() {
    let a = synth_corpus(GrammarId::A, 10, 5).unwrap();
    let chunks = chunk_corpus(&a, 32);
    assert!(chunks.iter().all(|c| c.len() == 32));
    let flat: Vec<_> = chunks.concat();
    let mut expect = Vec::new();
    for d in a.documents() {
        expect.push(BOS);
        expect.extend(d.iter().map(|&b| Token::from(b)));
    }
    assert_eq!(&flat[..expect.len()], expect.as_slice());
    assert!(flat[expect.len()..].iter().all(|&t| t == PAD));
    assert!(flat.len() - expect.len() < 32);
    assert_eq!(detokenize(&flat).len(), expect.len() - a.documents().len());
}

#[test]
fn stream_seek_is_consistent_across_epochs() {
    let a = synth_corpus(GrammarId::B, 12, 6).unwrap();
    let mut s = BatchStream::new(&a, 24, 3, 9).unwrap();
    let per = s.batches_per_epoch() as u64;
    let seq: Vec<_> = (0..3 * per).map(|_| s.next_batch()).collect();
    for k in [0, 1, per - 1, per, 2 * per + 1] {
        let mut t = BatchStream::new(&a, 24, 3, 9).unwrap();
        t.seek(k);
        assert_eq!(t.next_batch(), seq[k as usize]);
    }
}

#[test]
fn mc_distractors_include_the_other_language() {
    let (a, b) = (Grammar::new(GrammarId::A), Grammar::new(GrammarId::B));
    let b_letters: HashSet<u8> = b.words().iter().flat_map(|w| w.bytes()).collect();
    for kind in [McKind::Continuation, McKind::WordOrder] {
        let items = synth_mc_items(&a, &b, kind, 30, 1);
        assert_eq!(items.len(), 30);
        for it in &items {
            it.validate().unwrap();
            assert!(!it.gold().bytes().any(|c| b_letters.contains(&c)));
        }
    }
}
