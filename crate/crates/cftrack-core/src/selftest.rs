//! Named self-check suites: randomized cross-checks of the fast spectral
//! paths against the dense reference implementations in [`crate::oracle`].
//! The `selftest` CLI command runs these and reports one line per suite.

use num_complex::Complex64;

use crate::features::FeatureStack;
use crate::oracle;
use crate::rng::SplitMix64;
use crate::solver::{
    make_desired_response, objective_value, solve_g_pixel, train_filter, FilterBank,
    PenalizationMask, PenaltyMode, SolverConfig,
};
use crate::spectral::{
    circular_shift, crop_center, cross_correlate, dft2, embed_center, CropSpec, Grid2, Plane,
    Spectrum,
};

#[derive(Debug, Clone)]
pub struct SuiteReport {
    pub name: &'static str,
    pub passed: bool,
    pub trials: usize,
    pub detail: String,
}

impl SuiteReport {
    fn pass(name: &'static str, trials: usize, detail: String) -> Self {
        Self {
            name,
            passed: true,
            trials,
            detail,
        }
    }

    fn fail(name: &'static str, trials: usize, detail: String) -> Self {
        Self {
            name,
            passed: false,
            trials,
            detail,
        }
    }
}

fn random_plane(grid: Grid2, rng: &mut SplitMix64) -> Plane {
    Plane::from_fn(grid, |_, _| rng.range_f64(-1.0, 1.0))
}

fn random_complex(rng: &mut SplitMix64) -> Complex64 {
    Complex64::new(rng.range_f64(-1.0, 1.0), rng.range_f64(-1.0, 1.0))
}

fn random_stack(grid: Grid2, d: usize, rng: &mut SplitMix64) -> FeatureStack {
    FeatureStack::new(1, (0..d).map(|_| random_plane(grid, rng)).collect()).expect("valid stack")
}

/// Parseval, the shift theorem, the correlation theorem, and crop/embed
/// adjointness, each over randomized trials at 1e-9 relative tolerance.
pub fn suite_spectral_identities(seed: u64, trials: usize) -> SuiteReport {
    const NAME: &str = "spectral-identities";
    let mut rng = SplitMix64::new(seed);
    let mut worst: f64 = 0.0;
    for t in 0..trials {
        let h = 2 + rng.next_usize(7);
        let w = 2 + rng.next_usize(7);
        let grid = Grid2::new(h, w).unwrap();
        let x = random_plane(grid, &mut rng);

        // Parseval.
        let xf = dft2(&x);
        let rel = (x.norm_sq() - xf.norm_sq()).abs() / x.norm_sq().max(1e-300);
        worst = worst.max(rel);
        if rel > 1e-9 {
            return SuiteReport::fail(NAME, t + 1, format!("parseval rel err {rel}"));
        }

        // Shift theorem.
        let delta = (
            rng.next_usize(h) as isize - h as isize / 2,
            rng.next_usize(w) as isize - w as isize / 2,
        );
        let sf = dft2(&circular_shift(&x, delta));
        let mut err = 0.0;
        let mut norm = 0.0;
        for k1 in 0..h {
            for k2 in 0..w {
                let phase = -2.0
                    * std::f64::consts::PI
                    * (k1 as f64 * delta.0 as f64 / h as f64
                        + k2 as f64 * delta.1 as f64 / w as f64);
                let ramp = Complex64::new(phase.cos(), phase.sin());
                err += (sf.at(k1, k2) - xf.at(k1, k2) * ramp).norm_sqr();
                norm += xf.at(k1, k2).norm_sqr();
            }
        }
        let rel = (err / norm.max(1e-300)).sqrt();
        worst = worst.max(rel);
        if rel > 1e-9 {
            return SuiteReport::fail(NAME, t + 1, format!("shift theorem rel err {rel}"));
        }

        // Correlation theorem against the direct sum.
        let tmpl = random_plane(grid, &mut rng);
        let spectral = cross_correlate(&x, &tmpl).unwrap();
        let mut err = 0.0;
        let mut norm = 0.0;
        for n1 in 0..h {
            for n2 in 0..w {
                let mut direct = 0.0;
                for m1 in 0..h {
                    for m2 in 0..w {
                        direct += x.at((m1 + n1) % h, (m2 + n2) % w) * tmpl.at(m1, m2);
                    }
                }
                err += (direct - spectral.at(n1, n2)).powi(2);
                norm += direct * direct;
            }
        }
        let rel = (err / norm.max(1e-300)).sqrt();
        worst = worst.max(rel);
        if rel > 1e-9 {
            return SuiteReport::fail(NAME, t + 1, format!("correlation rel err {rel}"));
        }

        // Crop/embed adjointness.
        let ih = 1 + rng.next_usize(h);
        let iw = 1 + rng.next_usize(w);
        let spec = CropSpec::centered(grid, Grid2::new(ih, iw).unwrap()).unwrap();
        let inner = random_plane(spec.inner(), &mut rng);
        let lhs: f64 = crop_center(&x, &spec)
            .unwrap()
            .iter()
            .zip(inner.iter())
            .map(|(a, b)| a * b)
            .sum();
        let rhs: f64 = x
            .iter()
            .zip(embed_center(&inner, &spec).unwrap().iter())
            .map(|(a, b)| a * b)
            .sum();
        let rel = (lhs - rhs).abs() / lhs.abs().max(1e-12);
        worst = worst.max(rel);
        if rel > 1e-9 {
            return SuiteReport::fail(NAME, t + 1, format!("adjointness rel err {rel}"));
        }
    }
    SuiteReport::pass(NAME, trials, format!("max rel err {worst:.3e}"))
}

/// Per-bin rank-one solve against the explicit dense inverse: 1e-10
/// absolute over random pixels with 1..=8 channels.
pub fn suite_sherman_morrison(seed: u64, trials: usize) -> SuiteReport {
    const NAME: &str = "sherman-morrison";
    let mut rng = SplitMix64::new(seed);
    let mut worst: f64 = 0.0;
    for t in 0..trials {
        let d = 1 + rng.next_usize(8);
        let x: Vec<Complex64> = (0..d).map(|_| random_complex(&mut rng)).collect();
        let y = random_complex(&mut rng);
        let zeta: Vec<Complex64> = (0..d).map(|_| random_complex(&mut rng)).collect();
        let w: Vec<Complex64> = (0..d).map(|_| random_complex(&mut rng)).collect();
        let mu = rng.range_f64(0.05, 5.0);
        let mut fast = vec![Complex64::ZERO; d];
        solve_g_pixel(&x, y, &zeta, &w, mu, &mut fast);
        let dense = match oracle::solve_g_pixel_dense(&x, y, &zeta, &w, mu) {
            Ok(v) => v,
            Err(e) => return SuiteReport::fail(NAME, t + 1, format!("dense solve failed: {e}")),
        };
        for dd in 0..d {
            let err = (fast[dd] - dense[dd]).norm();
            worst = worst.max(err);
            if err > 1e-10 {
                return SuiteReport::fail(
                    NAME,
                    t + 1,
                    format!("abs err {err} at D={d} channel {dd}"),
                );
            }
        }
    }
    SuiteReport::pass(NAME, trials, format!("max abs err {worst:.3e}"))
}

fn random_instance(
    rng: &mut SplitMix64,
    max_outer: usize,
    max_inner: usize,
    max_d: usize,
) -> (FeatureStack, Grid2, Grid2, usize) {
    let oh = 2 + rng.next_usize(max_outer - 1);
    let ow = 2 + rng.next_usize(max_outer - 1);
    let outer = Grid2::new(oh, ow).unwrap();
    let inner = Grid2::new(
        1 + rng.next_usize(max_inner.min(oh)),
        1 + rng.next_usize(max_inner.min(ow)),
    )
    .unwrap();
    let d = 1 + rng.next_usize(max_d);
    let x = random_stack(outer, d, rng);
    (x, outer, inner, d)
}

/// ADMM objective against the dense normal-equations optimum, relative
/// tolerance 1e-5, on random small instances.
pub fn suite_solver_equivalence(seed: u64, trials: usize) -> SuiteReport {
    const NAME: &str = "solver-equivalence";
    let mut rng = SplitMix64::new(seed);
    let mut worst: f64 = 0.0;
    for t in 0..trials {
        let (x, outer, inner, _d) = random_instance(&mut rng, 8, 4, 4);
        let sigma = rng.range_f64(0.5, 2.0);
        let y = make_desired_response(outer, sigma).unwrap();
        let p = PenalizationMask::bowl(inner, rng.range_f64(0.05, 0.5), rng.range_f64(0.0, 3.0))
            .unwrap();
        // Constant moderate mu converges to the exact optimum; growing
        // schedules trade exactness for per-frame speed and are only used
        // by the tracker.
        let cfg = SolverConfig {
            admm_iterations: 300,
            mu_init: 0.1,
            mu_scale: 1.0,
            mu_max: 0.1,
            tolerance: 1e-13,
            penalty_mode: PenaltyMode::Elementwise,
            ..SolverConfig::default()
        };
        let bank = match train_filter(&x, &y, &p, &cfg, None) {
            Ok(b) => b,
            Err(e) => return SuiteReport::fail(NAME, t + 1, format!("solver error: {e}")),
        };
        let e_admm = objective_value(&bank, &x, &y, &p).unwrap();
        let w_opt = match oracle::optimal_filter_dense(&x, &y.wrapped(), &p) {
            Ok(w) => w,
            Err(e) => return SuiteReport::fail(NAME, t + 1, format!("oracle error: {e}")),
        };
        let opt_bank = FilterBank::from_parts(
            inner,
            outer,
            w_opt,
            vec![Spectrum::zeros(outer); bank.channels()],
        );
        let e_opt = objective_value(&opt_bank, &x, &y, &p).unwrap();
        let rel = (e_admm - e_opt) / e_opt.abs().max(1e-12);
        worst = worst.max(rel.abs());
        if !(rel.abs() < 1e-5) {
            return SuiteReport::fail(
                NAME,
                t + 1,
                format!("objective gap {rel:.3e} (admm {e_admm}, dense {e_opt})"),
            );
        }
    }
    SuiteReport::pass(NAME, trials, format!("max objective gap {worst:.3e}"))
}

/// Spatial-form objective against the stacked matrix form built with dense
/// selection and shifted-sample matrices; 1e-9 relative.
pub fn suite_objective_forms(seed: u64, trials: usize) -> SuiteReport {
    const NAME: &str = "objective-forms";
    let mut rng = SplitMix64::new(seed);
    let mut worst: f64 = 0.0;
    for t in 0..trials {
        let (x, outer, inner, d) = random_instance(&mut rng, 6, 4, 3);
        let y = make_desired_response(outer, rng.range_f64(0.5, 2.0)).unwrap();
        let p = PenalizationMask::bowl(inner, rng.range_f64(0.05, 0.5), rng.range_f64(0.0, 3.0))
            .unwrap();
        let spatial: Vec<Plane> = (0..d).map(|_| random_plane(inner, &mut rng)).collect();
        let bank = FilterBank::from_parts(
            inner,
            outer,
            spatial.clone(),
            vec![Spectrum::zeros(outer); d],
        );
        let spatial_form = objective_value(&bank, &x, &y, &p).unwrap();
        let matrix_form = match oracle::objective_matrix_form(&spatial, &x, &y.wrapped(), &p) {
            Ok(v) => v,
            Err(e) => return SuiteReport::fail(NAME, t + 1, format!("matrix form error: {e}")),
        };
        let rel = (spatial_form - matrix_form).abs() / matrix_form.abs().max(1e-300);
        worst = worst.max(rel);
        if rel > 1e-9 {
            return SuiteReport::fail(NAME, t + 1, format!("objective mismatch rel {rel:.3e}"));
        }
    }
    SuiteReport::pass(NAME, trials, format!("max rel err {worst:.3e}"))
}

/// Runs every suite with desk-scale trial counts.
pub fn run_all(seed: u64) -> Vec<SuiteReport> {
    vec![
        suite_spectral_identities(seed, 100),
        suite_sherman_morrison(seed ^ 0x5151, 1000),
        suite_solver_equivalence(seed ^ 0xa0a0, 25),
        suite_objective_forms(seed ^ 0x0c0c, 100),
    ]
}
