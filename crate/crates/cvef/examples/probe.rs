use cvef::picard::*;
use cvef::state::*;
use cvef::transport::TransportOptions;
use cvef::momentum::MomentumOptions;
use cvef::diagnostics::{curl_compatibility_residual, piola_residual, NormSpec};
use cvef::{Grid, SpectralWorkspace};
use std::time::Instant;

fn main() {
    let modes: Vec<[i64;3]> = vec![[1,0,0],[0,1,1],[1,1,0],[0,0,1],[1,0,1],[1,1,1],[2,1,0]];
    let base = ICSpec { amplitude: 1e-2, modes: modes.clone(), seed: 28, velocity_amplitude: 1e-2 };
    for n in [32usize, 64] {
        let g = Grid::cubic(n, 2.0 * std::f64::consts::PI).unwrap();
        let mut ws = SpectralWorkspace::new(g);
        let st = generate_ic(&base, g, &PhysParams::default()).unwrap();
        // rho det F deviation
        let mut worst = 0.0f64;
        for idx in 0..g.len() {
            let e = &st.e;
            let f = |i: usize, j: usize| e.comp(i,j)[idx] + if i==j {1.0} else {0.0};
            let det = f(0,0)*(f(1,1)*f(2,2)-f(1,2)*f(2,1))
                - f(0,1)*(f(1,0)*f(2,2)-f(1,2)*f(2,0))
                + f(0,2)*(f(1,0)*f(2,1)-f(1,1)*f(2,0));
            worst = worst.max((st.rho.data[idx]*det - 1.0).abs());
        }
        let (c, _) = curl_compatibility_residual(&mut ws, &st.e);
        let p = piola_residual(&mut ws, &st.rho, &st.e);
        println!("N={n}: curl0 {c:.2e} piola0 {p:.2e} rhodetF {worst:.2e} rho [{:.3},{:.3}]", st.rho.min(), st.rho.max());
        // run T=0.1 dt 1e-3
        let cfg = RunConfig { dt: 1e-3, t_end: 0.1, stride: 100,
            momentum: MomentumOptions::new(0.5).unwrap(),
            picard: PicardOptions::default(), transport: TransportOptions::default(),
            norms: NormSpec::default() };
        let mut sink = MemorySink::default();
        let t0 = Instant::now();
        run(&mut ws, &cfg, &PhysParams::default(), &st, &mut sink, &mut NullSnapshots).unwrap();
        let last = sink.records.last().unwrap();
        println!("  run: {:.0}s balance {:.2e} curl {:.2e} (x{:.1}) piola {:.2e} (x{:.1}) trace drift {:.2e} rho [{:.3},{:.3}]",
            t0.elapsed().as_secs_f64(), last.balance_res,
            last.curl_linf, last.curl_linf / sink.records[0].curl_linf.max(1e-300),
            last.piola_l2, last.piola_l2 / sink.records[0].piola_l2.max(1e-300),
            (last.trace_int - sink.records[0].trace_int).abs(),
            last.rho_min, last.rho_max);
    }
}
