//! Sentence segmentation with stable indices.
//!
//! `cargo run -p citesum --example segment -- "Some text. More text."`

use citesum::segmenter::segment;

fn main() -> anyhow::Result<()> {
    let text = std::env::args().nth(1).unwrap_or_else(|| {
        "BACKGROUND: Dr. Lee enrolled 40 adults (e.g. smokers) in the U.S. trial. \
         Each took 5.3 mg. daily vs. placebo for 12 weeks. Did blood pressure fall? Yes!"
            .to_string()
    });
    for s in segment(&text)? {
        println!("[{}] {:>3}..{:<3} {}", s.index, s.char_span.0, s.char_span.1, s.text);
    }
    Ok(())
}
