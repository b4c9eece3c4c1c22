use std::fs;

use ewcl::io::{
    load_corpus_dir, load_mc, load_qa, load_records, params_hash, save_corpus_dir, save_mc, save_records, Checkpoint,
    Container, FisherArtifact,
};
use ewcl::Error;
use ewcl_core::continual::estimate_fisher;
use ewcl_core::data::{synth_corpus, synth_mc_items, BatchStream, Grammar, GrammarId, McKind, MCItem, PromptTemplate};
use ewcl_core::eval::{EvalRecord, Metric};
use ewcl_core::model::{CausalLM, ModelConfig};
use ewcl_core::trainer::{train_task, NoHooks, TrainConfig, TrainState};

fn small_model(seed: u64) -> CausalLM {
    CausalLM::new(ModelConfig { n_layers: 1, d_model: 8, n_heads: 2, context_length: 32, seed, ..ModelConfig::default() })
        .unwrap()
}

#[test]
fn three_line_mc_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("mc.jsonl");
    fs::write(
        &path,
        concat!(
            r#"{"question":"a","choices":["x","y"],"gold":0}"#,
            "\n",
            r#"{"question":"b","choices":["x","y","z"],"gold":2}"#,
            "\n\n",
            r#"{"question":"c","choices":["p","q"],"gold":1}"#,
            "\n"
        ),
    )
    .unwrap();
    let items = load_mc(&path).unwrap();
    assert_eq!(items.len(), 3);
    assert_eq!(items[1].gold(), "z");
}

#[test]
fn out_of_range_gold_names_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("mc.jsonl");
    fs::write(
        &path,
        concat!(r#"{"question":"a","choices":["x","y"],"gold":0}"#, "\n", r#"{"question":"b","choices":["x","y"],"gold":2}"#, "\n"),
    )
    .unwrap();
    match load_mc(&path) {
        Err(Error::Line { line, msg, .. }) => {
            assert_eq!(line, 2);
            assert!(msg.contains("gold"), "{msg}");
        }
        other => panic!("expected a line error, got {other:?}"),
    }
}

#[test]
fn unknown_keys_and_bad_json_are_line_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("qa.jsonl");
    fs::write(&path, "{\"question\":\"q\",\"answer\":\"a\",\"extra\":1}\n").unwrap();
    assert!(matches!(load_qa(&path), Err(Error::Line { line: 1, .. })));
    fs::write(&path, "{\"question\":\"q\",\"answer\":\"a\"}\nnot json\n").unwrap();
    assert!(matches!(load_qa(&path), Err(Error::Line { line: 2, .. })));
    assert!(matches!(load_qa(&dir.path().join("missing.jsonl")), Err(Error::Io { .. })));
}

#[test]
fn mc_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("mc.jsonl");
    let items: Vec<MCItem> =
        synth_mc_items(&Grammar::new(GrammarId::A), &Grammar::new(GrammarId::B), McKind::Continuation, 10, 3);
    save_mc(&path, &items).unwrap();
    assert_eq!(load_mc(&path).unwrap(), items);
}

#[test]
fn records_round_trip_and_validate() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.jsonl");
    let records = vec![
        EvalRecord {
            metric: Metric::Ppl,
            dataset: "heldout".into(),
            tag: "A".into(),
            lambda: None,
            checkpoint: "task_a@0123".into(),
            value: 3.25,
            n_items: 30,
        },
        EvalRecord {
            metric: Metric::McAcc,
            dataset: "a-continuation".into(),
            tag: "A".into(),
            lambda: Some(1e12),
            checkpoint: "x".into(),
            value: 0.5,
            n_items: 40,
        },
    ];
    save_records(&path, &records).unwrap();
    assert_eq!(load_records(&path).unwrap(), records);
    let mut bad = records[1].clone();
    bad.value = 1.5;
    save_records(&path, &[bad]).unwrap();
    assert!(load_records(&path).is_err());
}

#[test]
fn corpus_dir_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synth_corpus(GrammarId::B, 5, 4).unwrap();
    save_corpus_dir(dir.path(), &corpus).unwrap();
    let back = load_corpus_dir(dir.path(), "B").unwrap();
    assert_eq!(back.documents(), corpus.documents());
    assert_eq!(back.language(), "B");
}

#[test]
fn checkpoint_round_trip_with_optimizer_and_si_state() {
    let dir = tempfile::tempdir().unwrap();
    let mut model = small_model(1);
    let corpus = synth_corpus(GrammarId::A, 5, 1).unwrap();
    let mut stream = BatchStream::new(&corpus, 32, 2, 0).unwrap();
    let mut state = TrainState::with_si(model.params(), 1e-3).unwrap();
    let config = TrainConfig { total_steps: 3, ..TrainConfig::default() };
    train_task(&mut model, &mut stream, &config, &[], &mut state, &mut NoHooks).unwrap();
    let ck = Checkpoint { model, train: Some(state), data_position: stream.position() };
    let path = dir.path().join("m.ckpt");
    ck.save(&path).unwrap();
    let back = Checkpoint::load(&path).unwrap();
    assert_eq!(back.model, ck.model);
    assert_eq!(back.train, ck.train);
    assert_eq!(back.data_position, 3);
    assert_eq!(back.step(), 3);
    assert_eq!(back.hash(), params_hash(ck.model.params()));

    let weights = Checkpoint::weights(ck.model.clone());
    weights.save(&path).unwrap();
    assert!(Checkpoint::load(&path).unwrap().train.is_none());
}

#[test]
fn corrupted_containers_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    Checkpoint::weights(small_model(2)).save(&path).unwrap();
    let mut bytes = fs::read(&path).unwrap();
    bytes.truncate(bytes.len() - 8);
    fs::write(&path, &bytes).unwrap();
    assert!(Checkpoint::load(&path).is_err());
    bytes[0] = b'X';
    fs::write(&path, &bytes).unwrap();
    assert!(Checkpoint::load(&path).is_err());
    assert!(Container::from_bytes(b"", &path).is_err());
}

#[test]
fn fisher_artifact_is_tied_to_its_anchor() {
    let dir = tempfile::tempdir().unwrap();
    let model = small_model(3);
    let items = synth_mc_items(&Grammar::new(GrammarId::A), &Grammar::new(GrammarId::B), McKind::WordOrder, 4, 1);
    let fisher = estimate_fisher(&model, &items, PromptTemplate::default()).unwrap();
    let hash = params_hash(model.params());
    let artifact = FisherArtifact { fisher, template: PromptTemplate::default(), anchor_hash: hash.clone() };
    let path = dir.path().join("f.bin");
    artifact.save(&path).unwrap();
    assert_eq!(FisherArtifact::load(&path, &hash).unwrap(), artifact);

    let other = params_hash(small_model(4).params());
    assert_ne!(other, hash);
    assert!(matches!(FisherArtifact::load(&path, &other), Err(Error::AnchorMismatch { .. })));
    // a checkpoint is not a Fisher artifact
    let ck = dir.path().join("m.ckpt");
    Checkpoint::weights(model).save(&ck).unwrap();
    assert!(FisherArtifact::load_unchecked(&ck).is_err());
}

#[test]
fn hash_changes_with_any_value() {
    let model = small_model(5);
    let mut p = model.params().clone();
    let before = params_hash(&p);
    p.arrays_mut()[3].data_mut()[0] += 1e-12;
    assert_ne!(params_hash(&p), before);
}
