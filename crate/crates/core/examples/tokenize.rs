// Lex SQL answers, build a vocabulary and encode them to fixed-length id
// sequences.

use sqlgrade::tokenizer::{build_vocab, decode, encode, lex, SEQ_LEN};

pub fn run_example() -> sqlgrade::Result<()> {
    let answers = [
        "SELECT name FROM person WHERE age > 30",
        "select p.name from person p where p.city = 'Leuven'",
        "SELECT name, count(*) FROM person GROUP BY name",
    ];
    let corpus = answers.iter().map(|a| lex(a)).collect::<sqlgrade::Result<Vec<_>>>()?;
    for tokens in &corpus {
        println!("{tokens:?}");
    }

    let vocab = build_vocab(&corpus, 1)?;
    println!("vocabulary: {} entries", vocab.len());

    let encoded = encode(&corpus[1], &vocab);
    assert_eq!(encoded.len(), SEQ_LEN);
    println!("{} content ids, padded to {}", encoded.content_len(), encoded.len());
    println!("round trip: {:?}", &decode(&encoded, &vocab)[..encoded.content_len()]);

    // tokens outside the vocabulary map to <unk>
    let unseen = encode(&lex("select salary from employee")?, &vocab);
    println!("unseen: {:?}", &decode(&unseen, &vocab)[..unseen.content_len()]);
    Ok(())
}

#[allow(dead_code)]
fn main() -> sqlgrade::Result<()> {
    run_example()
}
