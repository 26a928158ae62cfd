// Save a network and its vocabulary, load them back, and detect a
// corrupted file.

use sqlgrade::checkpoint::{self, EXTENSION};
use sqlgrade::tokenizer::{build_vocab, encode, lex};
use sqlgrade::{Error, GraderNet, ModelConfig, SeededRng};

pub fn run_example() -> sqlgrade::Result<()> {
    let tokens = lex("select name from student where year = 2")?;
    let vocab = build_vocab(std::slice::from_ref(&tokens), 1)?;
    let mut config = ModelConfig::new(vocab.len(), 5);
    config.conv_filters = 10;
    let net = GraderNet::build(config, &mut SeededRng::new(5))?;

    let dir = std::env::temp_dir().join(format!("sqlgrade-example-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let path = dir.join(format!("demo.{EXTENSION}"));
    checkpoint::save(&net, &vocab, &path)?;
    let (loaded, _, loaded_vocab) = checkpoint::load(&path)?;
    let x = encode(&tokens, &loaded_vocab);
    assert_eq!(loaded.predict(&x)?, net.predict(&x)?);
    println!("reloaded {} (crc32 {:08x})", path.display(), checkpoint::checksum(&loaded));

    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    // bump one digit of the embedding table
    let table = text.find("\"embedding.table\"").unwrap_or(0);
    let data = table + text[table..].find("\"data\"").unwrap_or(0);
    let at = data + text[data..].find(|c: char| ('1'..='8').contains(&c)).unwrap_or(0);
    let mut tampered = text.into_bytes();
    tampered[at] += 1;
    let tampered = String::from_utf8_lossy(&tampered);
    match checkpoint::from_json(&tampered) {
        Err(e) => println!("tampered copy rejected: {e}"),
        Ok(_) => println!("tampered copy loaded"),
    }
    std::fs::remove_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    Ok(())
}

#[allow(dead_code)]
fn main() -> sqlgrade::Result<()> {
    run_example()
}
