//! Reverse-mode gradients of the posterior against central finite
//! differences, for every Bayes-net logit the evidence touches.
//!
//! ```text
//! cargo run -p bayes-inquiry --example gradient_check
//! ```

use bayes_inquiry::bayesnet::{build_graph, infer, init_params, posterior, posterior_gradients, Evidence};
use bayes_inquiry::data::{count, synth_generate, SyntheticSpec};
use bayes_inquiry::diffcore::Tape;
use bayes_inquiry::params::{Binder, Parameterized};

fn main() -> bayes_inquiry::Result<()> {
    let spec = SyntheticSpec::signature(3, 6, 2, 0.8, 0.1);
    let catalog = spec.catalog()?;
    let records = synth_generate(&spec, 500, 2)?;
    let counts = count(&records, &catalog);
    let graph = build_graph(&counts, 0);
    let params = init_params(&counts, &graph)?;
    let evidence = Evidence::new([0, 3], [1])?;
    let target = 0;

    let mut tape = Tape::new();
    let mut binder = Binder::new();
    let nodes = infer(&params, &graph, &evidence, &mut tape, &mut binder)?;
    let loss = tape.log(nodes[target])?;
    let grads = posterior_gradients(&tape, &binder, loss)?;

    let h = 1e-6;
    let objective = |p: &bayes_inquiry::bayesnet::BayesParams| posterior(p, &graph, &evidence).map(|d| d.probs[target].ln());
    let mut worst: f64 = 0.0;
    for (key, analytic) in &grads {
        let (mut plus, mut minus) = (params.clone(), params.clone());
        *plus.get_mut(key).unwrap() += h;
        *minus.get_mut(key).unwrap() -= h;
        let numeric = (objective(&plus)? - objective(&minus)?) / (2.0 * h);
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8);
        worst = worst.max(rel);
        println!("{key:?}: analytic {analytic:+.6}  numeric {numeric:+.6}");
    }
    println!("{} logits checked, worst relative error {worst:.1e}", grads.len());
    Ok(())
}
