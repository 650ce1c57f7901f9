//! Normalizes a few Persian verses, then groups them into century and poet
//! slices and balances one century to a token budget.

use semshift::corpus::{balance_slice, build_slices, normalize_text, tokenize, RawDocument, SliceKind};

fn doc(id: &str, poet: &str, century: i32, text: &str) -> RawDocument {
    RawDocument {
        doc_id: id.into(),
        poet_id: poet.into(),
        century,
        text: text.into(),
    }
}

fn main() -> semshift::Result<()> {
    for raw in ["كتاب", "دلِ من", "می\u{200C}رود  شب،", "ـــعشقـــ"] {
        let norm = normalize_text(raw);
        println!("{raw:?} -> {norm:?} -> {:?}", tokenize(&norm));
    }

    let docs = vec![
        doc("d1", "hafez", 8, "دل من در هوای روی تو\nمی\u{200C}رود شب و روز"),
        doc("d2", "saadi", 7, "بنی آدم اعضای یکدیگرند\nکه در آفرینش ز یک گوهرند"),
        doc("d3", "rumi", 7, "بشنو این نی چون شکایت می\u{200C}کند\nاز جدایی\u{200C}ها حکایت می\u{200C}کند"),
    ];
    for kind in [SliceKind::Century, SliceKind::Poet] {
        for s in build_slices(&docs, kind, 10)? {
            println!(
                "{} {:>6}: {} verses, {} tokens, {:?}",
                kind.as_str(),
                s.slice_id,
                s.verses.len(),
                s.token_count,
                s.viability
            );
        }
    }

    let century7 = build_slices(&docs, SliceKind::Century, 10)?.remove(0);
    let (balanced, plan) = balance_slice(&century7, 8, 42);
    println!("balanced century {} to {} tokens, kept {:?}", plan.slice_id, balanced.token_count, plan.selection);
    Ok(())
}
