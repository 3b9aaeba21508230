//! Generate two domains, split them subject-exclusively and round-trip the
//! result through the sample file format.

use dcloss::datagen::{generate, split_sc, DomainSpec, SampleSet};

fn main() -> dcloss::Result<()> {
    let domains = DomainSpec::family(3, 16, 0.3, 0.5, 1)?;
    let data = generate(&domains, 50, 4, 101, 16, 2)?;
    println!("{} samples, {} subjects, domains {:?}", data.len(), data.subjects().len(), data.domains());

    let split = split_sc(&data, &[0, 1].into(), &[2].into())?;
    println!(
        "train {} samples from domains {:?}; test {} samples from {:?}; {} dropped",
        split.train.len(),
        split.train.domains(),
        split.test.len(),
        split.test.domains(),
        split.dropped
    );
    assert!(split.train.subjects().is_disjoint(&split.test.subjects()));

    let path = std::env::temp_dir().join("dcloss-sc-example.csv");
    split.test.save(&path)?;
    let back = SampleSet::load(&path)?;
    println!("reloaded {} from {}: identical = {}", back.len(), path.display(), back == split.test);
    Ok(())
}
