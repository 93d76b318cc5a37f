//! Build higher-order stores, apply operations, and round-trip encodings.
//!
//! A level-1 store is a word over the letter alphabet; a level-n store is a
//! nonempty sequence of level-(n-1) stores. Three operations exist:
//! `push1(w)` rewrites the topmost letter to the word `w`, `push_k`
//! duplicates the first level-(k-1) child, and `pop_k` drops it.

use hcfp::store::word;
use hcfp::{Operation, Store};

fn main() {
    // The encoding brackets every node; letters sit at depth n.
    let s = Store::parse("[[ab][c]]", 2).expect("well-formed level-2 encoding");
    println!("store      {}", s.encode());
    println!("level      {}", s.level());
    println!("top letter {:?}", s.top_letter().map(|l| l.ch()));

    // push1 rewrites the top letter: here a -> xy.
    let t = s.apply(&Operation::push1(word("xy"))).unwrap();
    println!("push1 xy   {}", t.encode());

    // push_2 duplicates the first child, pop_2 undoes it.
    let dup = t.apply(&Operation::push_k(2)).unwrap();
    let back = dup.apply(&Operation::pop_k(2)).unwrap();
    println!("push 2     {}", dup.encode());
    println!("pop 2      {}", back.encode());
    assert_eq!(back, t);

    // pop_1 is push1 with the empty word: it erases the top letter.
    let popped = t.apply(&Operation::pop_k(1)).unwrap();
    println!("pop 1      {}", popped.encode());

    // Operations are partial: pop_2 needs at least two children.
    let single = Store::parse("[[c]]", 2).unwrap();
    println!(
        "pop 2 on {} -> {:?}",
        single.encode(),
        single.apply(&Operation::pop_k(2)).err().unwrap()
    );

    // parse is the inverse of encode.
    for enc in ["[]", "[abc]", "[[a][bc]]", "[[[x]][[y][z]]]"] {
        let s = Store::parse_any(enc).unwrap();
        assert_eq!(s.encode(), enc);
        println!("round trip {} (level {})", enc, s.level());
    }
}
