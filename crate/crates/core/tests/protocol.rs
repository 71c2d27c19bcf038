use hybrid_mllm::protocol::*;
use hybrid_mllm::rng;
use proptest::prelude::*;

fn proto() -> Protocol {
    Protocol::new(Vocabulary::default(), 144)
}

fn fixture(name: &str) -> String {
    let path = format!("{}/tests/fixtures/{name}.txt", env!("CARGO_MANIFEST_DIR"));
    std::fs::read_to_string(path).unwrap()
}

fn render_fixture(name: &str, input: &str, seq: &MultimodalSequence) -> String {
    let p = proto();
    format!(
        "template: {name}\ninput: {input}\nslots: {}\nstream: {}\n",
        p.slots_per_image,
        p.vocab.dump(&seq.render())
    )
}

#[test]
fn golden_templates_match_bytewise() {
    let p = proto();
    let cases = [
        ("single", "What is this?", p.single("What is this?")),
        (
            "multi",
            "This is a cat. | This is a:",
            p.multi(&["This is a cat.", "This is a:"]).unwrap(),
        ),
        ("video", "frames=3 | What are they?", p.video(3, "What are they?").unwrap()),
        (
            "patched",
            "rows=3,3 | What are they?",
            p.patched(&[3, 3], "What are they?").unwrap(),
        ),
    ];
    for (name, input, seq) in cases {
        let expected = fixture(name);
        assert_eq!(render_fixture(name, input, &seq), expected, "{name}");
        let stream_line = expected.lines().find_map(|l| l.strip_prefix("stream: ")).unwrap();
        assert_eq!(p.vocab.undump(stream_line).unwrap(), seq.render(), "{name}");
    }
}

#[test]
fn rendered_lengths_follow_closed_forms() {
    let p = proto();
    let q = p.vocab.encode("What are they?").len();
    for n in 1..=8 {
        assert_eq!(p.video(n, "What are they?").unwrap().len(), 2 + n * 146 + (n - 1) + 1 + q);
        let texts = vec![""; n];
        assert_eq!(p.multi(&texts).unwrap().len(), n * 147);
    }
    for rows in [vec![1], vec![3, 3], vec![2, 2, 2], vec![4, 1]] {
        let tiles: usize = rows.iter().sum();
        let len = 146 + 1 + tiles * 146 + rows.len() + q;
        assert_eq!(p.patched(&rows, "What are they?").unwrap().len(), len);
    }
}

#[test]
fn one_tile_patched_layout() {
    let p = proto();
    let s = p.patched(&[1], "").unwrap().render();
    assert_eq!(s.len(), 146 + 1 + 146 + 1);
    assert_eq!(s[146], NEWLINE);
    assert_eq!(*s.last().unwrap(), NEWLINE);
}

#[test]
fn full_scale_packing_arithmetic() {
    // Length distributions typical of mixed text, image and video items,
    // planned without materializing any batch.
    let mut r = rng::seeded(11);
    for dist in 0..3 {
        let lengths: Vec<usize> = (0..20_000)
            .map(|_| match dist {
                0 => 50 + rng::below(&mut r, 2_000),
                1 => 147 * (1 + rng::below(&mut r, 16)) + rng::below(&mut r, 300),
                _ => 2 + 146 * (1 + rng::below(&mut r, 400)),
            })
            .collect();
        let plan = plan_packing(&lengths, REFERENCE_PACK_LEN).unwrap();
        let mut seen = vec![false; lengths.len()];
        let mut total = 0;
        let mut separators = 0;
        for members in &plan {
            assert!(members.windows(2).all(|w| w[0] < w[1]));
            let len = batch_len(&lengths, members);
            assert!(len <= REFERENCE_PACK_LEN);
            total += len;
            separators += members.len() - 1;
            for &m in members {
                assert!(!seen[m]);
                seen[m] = true;
            }
        }
        assert!(seen.iter().all(|&s| s));
        assert_eq!(total, lengths.iter().sum::<usize>() + separators);
    }
}

#[test]
fn records_round_trip_through_jsonl() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("data.jsonl");
    let records = vec![
        DatasetRecord {
            task_type: TaskType::Video,
            images: vec!["f0".into(), "f1".into()],
            texts: vec!["What are they?".into()],
            rows: vec![],
            response: Some("red".into()),
        },
        DatasetRecord {
            task_type: TaskType::Text,
            images: vec![],
            texts: vec!["Say hello".into()],
            rows: vec![],
            response: None,
        },
    ];
    write_jsonl(&path, &records).unwrap();
    assert_eq!(read_jsonl(&path).unwrap(), records);
    let p = proto();
    assert_eq!(records[0].prompt(&p).unwrap(), p.video(2, "What are they?").unwrap());
}

fn any_sequence() -> impl Strategy<Value = MultimodalSequence> {
    let p = Protocol::new(Vocabulary::default(), 5);
    (0usize..4, 1usize..5, prop::collection::vec(1usize..4, 1..4), "[a-z ?.]{0,20}").prop_map(
        move |(kind, n, rows, text)| match kind {
            0 => p.single(&text),
            1 => p.multi(&vec![text.as_str(); n]).unwrap(),
            2 => p.video(n, &text).unwrap(),
            _ => p.patched(&rows, &text).unwrap(),
        },
    )
}

proptest! {
    #[test]
    fn parse_inverts_render(seq in any_sequence()) {
        let stream = seq.render();
        check_brackets(&stream).unwrap();
        prop_assert_eq!(MultimodalSequence::parse(&stream).unwrap(), seq);
    }

    #[test]
    fn video_separator_count(n in 1usize..40) {
        let s = Protocol::new(Vocabulary::default(), 3).video(n, "").unwrap().render();
        prop_assert_eq!(s.iter().filter(|&&t| t == FRAME_SEP).count(), n - 1);
        prop_assert_eq!(s.iter().filter(|&&t| t == IMG_OPEN).count(), n);
    }

    #[test]
    fn packing_conserves_tokens(seqs in prop::collection::vec(any_sequence(), 1..12), extra in 0usize..40) {
        let longest = seqs.iter().map(MultimodalSequence::len).max().unwrap();
        let limit = longest + extra;
        let batches = pack(&seqs, limit).unwrap();
        let mut items: Vec<usize> = Vec::new();
        let mut total = 0;
        for b in &batches {
            prop_assert!(b.tokens.len() <= limit);
            total += b.tokens.len();
            let eos = b.tokens.iter().filter(|&&t| t == EOS).count();
            prop_assert_eq!(eos, b.spans.len() - 1);
            for s in &b.spans {
                let piece = b.tokens[s.start..s.start + s.len].to_vec();
                prop_assert_eq!(piece, seqs[s.item].render());
                items.push(s.item);
            }
        }
        items.sort_unstable();
        prop_assert_eq!(items, (0..seqs.len()).collect::<Vec<_>>());
        let sum: usize = seqs.iter().map(MultimodalSequence::len).sum();
        prop_assert_eq!(total, sum + seqs.len() - batches.len());
    }

    #[test]
    fn tokenizer_is_idempotent_through_decode(text in "[a-zA-Z0-9 ?.,:#\\n]{0,40}") {
        let v = Vocabulary::default();
        let ids = v.encode(&text);
        prop_assert_eq!(v.encode(&v.decode(&ids)), ids);
    }
}
