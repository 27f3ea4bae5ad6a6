//! The scalar reverse-mode tape on its own: build an expression, read every
//! partial derivative in one backward pass.
//!
//! ```text
//! cargo run -p bayes-inquiry --example autodiff_tape
//! ```

use bayes_inquiry::diffcore::Tape;

fn main() -> bayes_inquiry::Result<()> {
    // f(x, y) = ln(sigmoid(x * y) + exp(-y)) / (1 + tanh(x))
    let mut t = Tape::new();
    let x = t.leaf(0.7);
    let y = t.leaf(-1.3);
    let xy = t.mul(x, y);
    let s = t.sigmoid(xy);
    let ny = t.neg(y);
    let e = t.exp(ny)?;
    let sum = t.add(s, e);
    let num = t.log(sum)?;
    let th = t.tanh(x);
    let one = t.constant(1.0);
    let den = t.add(one, th);
    let f = t.div(num, den)?;

    let g = t.backward(f)?;
    println!("f = {:.6}, df/dx = {:.6}, df/dy = {:.6}", t.value(f), g[x], g[y]);

    let h = 1e-6;
    let eval = |x: f64, y: f64| ((1.0 / (1.0 + (-x * y).exp()) + (-y).exp()).ln()) / (1.0 + x.tanh());
    println!(
        "finite differences: df/dx = {:.6}, df/dy = {:.6}",
        (eval(0.7 + h, -1.3) - eval(0.7 - h, -1.3)) / (2.0 * h),
        (eval(0.7, -1.3 + h) - eval(0.7, -1.3 - h)) / (2.0 * h)
    );
    Ok(())
}
