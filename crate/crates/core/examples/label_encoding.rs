//! Encode an age as a Gaussian label distribution and a one-hot vector, then
//! decode a prediction back to an age.

use dcloss::label_codec::{decode_argmax, encode_gaussian, encode_onehot, AgeLabel};

fn main() -> dcloss::Result<()> {
    let bins = 101;
    let age = AgeLabel::from_years(37, bins)?;
    let q = encode_gaussian(age, bins, 2.0)?;
    let hot = encode_onehot(age, bins)?;

    println!("age 37 years -> bin {}", age.get());
    for (i, v) in q.iter().enumerate().filter(|(_, v)| **v > 1e-3) {
        println!("  q[{:3}] = {v:.5}", i + 1);
    }
    println!("one-hot bit set at bin {}", hot.label().get());

    let decoded = decode_argmax(&q)?;
    println!("argmax of q -> bin {} ({} years)", decoded.get(), decoded.years());
    Ok(())
}
