use saddlenode::series::*;
use saddlenode::vectorfield::*;
use saddlenode::straighten::*;
use std::time::Instant;

fn rand_ideal_tangent(seed: u64, tx: u32, ty: u32, max_deg: u32) -> FiberedDiffeo {
    let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    let mut next = move || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        0.05 * (((state >> 33) as f64 / (1u64 << 31) as f64) - 1.0)
    };
    let mut p1 = TruncatedSeries::var_y1(tx, ty);
    let mut p2 = TruncatedSeries::var_y2(tx, ty);
    for k0 in 0..=max_deg {
        for k1 in 0..=max_deg {
            for k2 in 0..=max_deg {
                let total = k0 + k1 + k2;
                if (2..=max_deg).contains(&total) && k1 + k2 >= 1 {
                    p1.add_term((k0, k1, k2), cc(next(), next()));
                    p2.add_term((k0, k1, k2), cc(next(), next()));
                }
            }
        }
    }
    FiberedDiffeo::new(p1, p2)
}

#[test]
fn probe_timing_dense() {
    let tx = 8u32; let ty = 8u32;
    let mut c = UniSeries::zero((ty/2) as usize);
    c.set(1, cr(0.1)); c.set(2, cr(-0.05));
    let base = FiberedVectorField::normal_form(cr(1.0), cr(0.3), cr(0.8), &c, tx + 4, ty);
    let conj = rand_ideal_tangent(1, tx + 4, ty, 3);
    let t0 = Instant::now();
    let field = base.push_forward(&conj).unwrap();
    println!("push: {:?}", t0.elapsed());
    let t1 = Instant::now();
    let out = full_formal_normalize(&field, tx, ty).unwrap();
    println!("normalize: {:?}", t1.elapsed());
    let t2 = Instant::now();
    let comp = out.phi.compose(&conj).unwrap();
    println!("compose: {:?}", t2.elapsed());
    let _ = comp;
}
