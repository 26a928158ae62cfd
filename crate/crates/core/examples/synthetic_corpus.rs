// Generate a rule-labeled synthetic corpus, print one answer per remark
// class and write it as CSV.

use sqlgrade::dataset::{generate_synthetic, read_csv, write_csv, Remark};

pub fn run_example() -> sqlgrade::Result<()> {
    let records = generate_synthetic(40, 7)?;
    for remark in Remark::ALL {
        let count = records.iter().filter(|r| r.remark == remark).count();
        if let Some(r) = records.iter().find(|r| r.remark == remark) {
            println!("{remark} ({count}), grade {}:\n  {}", r.grade_percent, r.submitted_answer.replace('\n', "\n  "));
        }
    }

    let mut csv = Vec::new();
    write_csv(&records, &mut csv)?;
    let reloaded = read_csv(csv.as_slice())?;
    assert_eq!(reloaded.records, records);
    println!("{} bytes of CSV, {} records reloaded", csv.len(), reloaded.records.len());
    Ok(())
}

#[allow(dead_code)]
fn main() -> sqlgrade::Result<()> {
    run_example()
}
