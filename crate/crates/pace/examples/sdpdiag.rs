// quick diag binary
use nalgebra::DMatrix;
use pace::optkernels::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for trial in 0..5 {
        let sizes = vec![4usize, 3];
        let mk_psd = |rng: &mut ChaCha8Rng, n: usize| {
            let f = DMatrix::from_fn(n, n, |_, _| rng.gen::<f64>() - 0.5);
            &f * f.transpose() + DMatrix::identity(n, n) * 0.5
        };
        let x0: Vec<DMatrix<f64>> = sizes.iter().map(|&n| mk_psd(&mut rng, n)).collect();
        let mut constraints = Vec::new();
        let mut rhs = Vec::new();
        for _ in 0..6 {
            let blocks: Vec<SymMat> = sizes
                .iter()
                .map(|&n| {
                    let mut ts = Vec::new();
                    for i in 0..n {
                        for j in i..n {
                            if rng.gen::<f64>() < 0.5 {
                                ts.push((i as u32, j as u32, rng.gen::<f64>() - 0.5));
                            }
                        }
                    }
                    SymMat::Sparse(ts)
                })
                .collect();
            let a = BlockSym { blocks };
            let b: f64 = a.blocks.iter().zip(&x0).enumerate().map(|(bi, (ab, xb))| { let _ = bi; inner_pub(ab, xb) }).sum();
            constraints.push(a);
            rhs.push(b);
        }
        let objective = BlockSym {
            blocks: sizes
                .iter()
                .map(|&n| {
                    let d = mk_psd(&mut rng, n);
                    SymMat::Dense((0..n * n).map(|k| d[(k / n, k % n)]).collect())
                })
                .collect(),
        };
        let p = SdpProblem { block_sizes: sizes, objective, constraints, rhs };
        match solve_sdp(&p, 1e-9) {
            Ok(sol) => println!(
                "trial {trial}: status {:?} iters {} pres {:.2e} dres {:.2e} gap {:.2e}",
                sol.status, sol.iterations, sol.kkt.primal_res, sol.kkt.dual_res, sol.kkt.comp_gap
            ),
            Err(e) => println!("trial {trial}: ERR {e}"),
        }
    }
}

fn inner_pub(a: &SymMat, x: &DMatrix<f64>) -> f64 {
    match a {
        SymMat::Zero => 0.0,
        SymMat::Sparse(ts) => ts.iter().map(|&(i, j, v)| {
            let (i, j) = (i as usize, j as usize);
            if i == j { v * x[(i, i)] } else { 2.0 * v * x[(i, j)] }
        }).sum(),
        SymMat::Dense(d) => {
            let n = x.nrows();
            let mut s = 0.0;
            for i in 0..n { for j in 0..n { s += d[i * n + j] * x[(j, i)]; } }
            s
        }
    }
}
