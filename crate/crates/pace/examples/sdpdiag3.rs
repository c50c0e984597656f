use nalgebra::{Matrix3, Vector2, Vector3};
use pace::core::*;
use pace::pace2d::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen::<f64>().max(1e-12);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn look_at_origin(o: &Vector3<f64>) -> (Rotation, Vector3<f64>) {
    let f = (-o).normalize();
    let up = if f.y.abs() > 0.99 { Vector3::new(1.0, 0.0, 0.0) } else { Vector3::new(0.0, 1.0, 0.0) };
    let r = up.cross(&f).normalize();
    let d = f.cross(&r);
    let rot = Matrix3::from_rows(&[r.transpose(), d.transpose(), f.transpose()]);
    let rot = Rotation::new(rot).unwrap();
    let t = -rot.apply(o);
    (rot, t)
}

fn main() {
    let seeds: Vec<u64> = vec![31, 23];
    let ks = [1usize, 2];
    for (seed, k) in seeds.into_iter().zip(ks) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = if k == 1 { 6 } else { 8 };
        let sigma = if k == 1 { 0.01 } else { 0.0 };
        let (lib, meas) = loop {
            let lib = ShapeLibrary::new(
                (0..k).map(|_| (0..n).map(|_| Vector3::new(gaussian(&mut rng), gaussian(&mut rng), gaussian(&mut rng))).collect()).collect(),
            ).unwrap();
            let mut c: Vec<f64> = (0..k).map(|_| rng.gen::<f64>()).collect();
            let s: f64 = c.iter().sum();
            c.iter_mut().for_each(|x| *x /= s);
            let dir = Vector3::new(gaussian(&mut rng), gaussian(&mut rng), gaussian(&mut rng)).normalize();
            let o = 3.0 * dir;
            let (rot, t) = look_at_origin(&o);
            let mut pixels = Vec::with_capacity(n);
            let mut ok = true;
            for i in 0..n {
                let q = rot.apply(&lib.blend(&c, i)) + t;
                if q.z < 0.3 { ok = false; break; }
                pixels.push(Vector2::new(q.x / q.z + sigma * gaussian(&mut rng), q.y / q.z + sigma * gaussian(&mut rng)));
            }
            if ok { break (lib, Keypoints2D::uniform(pixels).unwrap()); }
        };
        println!("=== K={k} ===");
        match pace2d_star(&lib, &meas, 0.01) {
            Ok(res) => println!("gap {:.3e} status {:?}", res.gap, res.status),
            Err(e) => println!("ERR {e}"),
        }
    }
}
