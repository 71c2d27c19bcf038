//! Renders the single-image, multi-image, video and patched templates and
//! prints each token stream with image spans collapsed.

use hybrid_mllm::protocol::{MultimodalSequence, Protocol, Vocabulary, IMG_TOKEN};

fn collapsed(p: &Protocol, seq: &MultimodalSequence) -> String {
    let stream = seq.render();
    let mut out = Vec::new();
    let mut run = 0usize;
    for &t in &stream {
        if t == IMG_TOKEN {
            run += 1;
            continue;
        }
        if run > 0 {
            out.push(format!("<img>x{run}"));
            run = 0;
        }
        out.push(p.vocab.dump(&[t]));
    }
    out.join(" ")
}

fn main() -> hybrid_mllm::Result<()> {
    let p = Protocol::new(Vocabulary::default(), 9);
    let cases = [
        ("single", p.single("What color is this?")),
        ("multi", p.multi(&["", "yes", "", ""])?),
        ("video", p.video(3, "What color is the needle?")?),
        ("patched", p.patched(&[2, 2], "What color is there?")?),
    ];
    for (name, seq) in cases {
        println!("{name}: {} tokens, {} images", seq.len(), seq.n_images());
        println!("  {}", collapsed(&p, &seq));
        let back = MultimodalSequence::parse(&seq.render())?;
        assert_eq!(back.render(), seq.render());
    }
    Ok(())
}
