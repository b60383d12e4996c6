use cvef::{Grid, ScalarField, SpectralWorkspace};
use std::time::Instant;

fn main() {
    for n in [16usize, 32, 64] {
        let g = Grid::cubic(n, 2.0 * std::f64::consts::PI).unwrap();
        let f = ScalarField::from_fn(g, |x, y, z| (x + 2.0 * y).sin() * z.cos());
        let mut ws = SpectralWorkspace::new(g);
        let reps = if n <= 32 { 300 } else { 60 };
        let mut spec = ws.forward(&f.data);
        let mut out = vec![0.0; g.len()];
        let t0 = Instant::now();
        for _ in 0..reps {
            ws.forward_into(&f.data, &mut spec);
        }
        let fwd = t0.elapsed().as_secs_f64() / reps as f64;
        let t0 = Instant::now();
        for _ in 0..reps {
            ws.inverse_into(&spec, &mut out);
        }
        let inv = t0.elapsed().as_secs_f64() / reps as f64;
        println!("N={n:3}  r2c fwd {:7.3} ms   c2r inv {:7.3} ms", fwd * 1e3, inv * 1e3);
    }
}
