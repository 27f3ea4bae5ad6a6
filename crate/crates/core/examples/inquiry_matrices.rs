//! The two inquiry logics: the conditional-probability matrix favours
//! symptoms typical of likely diseases, the mutual-information matrix
//! favours symptoms that separate them. The switch weight blends the two.
//!
//! ```text
//! cargo run -p bayes-inquiry --example inquiry_matrices
//! ```

use bayes_inquiry::data::{count, synth_generate, SyntheticSpec};
use bayes_inquiry::diffcore::Tape;
use bayes_inquiry::inquiry::{symptom_scores, InquiryMatrices};

fn print_matrix(title: &str, rows: &[Vec<f64>], names: &[String]) {
    println!("{title}");
    for (name, row) in names.iter().zip(rows) {
        let cells: Vec<String> = row.iter().map(|x| format!("{x:.3}")).collect();
        println!("  {name:<10} {}", cells.join(" "));
    }
}

fn main() -> bayes_inquiry::Result<()> {
    // symptom_4 is common to every disease: typical, but not informative
    let mut spec = SyntheticSpec::signature(2, 5, 2, 0.8, 0.05);
    for row in &mut spec.cond_probs {
        row[4] = 0.9;
    }
    let catalog = spec.catalog()?;
    let records = synth_generate(&spec, 5000, 3)?;
    let matrices = InquiryMatrices::from_counts(&count(&records, &catalog));
    print_matrix("M_c (rows: diseases)", &matrices.cond, &catalog.diseases);
    print_matrix("M_m (rows: diseases)", &matrices.mutual, &catalog.diseases);

    let known = [true, false, false, false, false];
    for mu in [1.0, 0.5, 0.0] {
        let mut tape = Tape::new();
        let post = vec![tape.constant(0.6), tape.constant(0.4)];
        let mu_node = tape.constant(mu);
        let s = symptom_scores(&post, &matrices, mu_node, &known, &mut tape)?;
        let scores: Vec<String> = tape.values(&s.probs).iter().map(|p| format!("{p:.3}")).collect();
        println!("mu = {mu:.1}: P_S = [{}]", scores.join(", "));
    }
    Ok(())
}
