use std::cell::Cell;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use quadplane_core::clock::Clock;
use quadplane_core::sqp::{projected_gradient_norm, sqp_solve, NlpProblem, SolverBudget};

const N: usize = 15;

/// `½ (x − c)ᵀ A (x − c)` on a box.
struct Quadratic {
    a: Vec<f64>,
    c: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl Quadratic {
    fn random(rng: &mut ChaCha8Rng) -> Self {
        let m: Vec<f64> = (0..N * N).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut a = vec![0.0; N * N];
        for i in 0..N {
            for j in 0..N {
                a[i * N + j] = (0..N).map(|k| m[k * N + i] * m[k * N + j]).sum::<f64>();
            }
            a[i * N + i] += 0.1;
        }
        let lo: Vec<f64> = (0..N).map(|_| rng.random_range(-2.0..0.0)).collect();
        let hi: Vec<f64> = lo.iter().map(|l| l + rng.random_range(0.5..3.0)).collect();
        let c = (0..N).map(|_| rng.random_range(-3.0..3.0)).collect();
        Self { a, c, lo, hi }
    }

    fn grad_into(&self, x: &[f64], g: &mut [f64]) {
        for i in 0..N {
            g[i] = (0..N).map(|j| self.a[i * N + j] * (x[j] - self.c[j])).sum();
        }
    }
}

impl NlpProblem for Quadratic {
    fn dim(&self) -> usize {
        N
    }
    fn lower(&self) -> &[f64] {
        &self.lo
    }
    fn upper(&self) -> &[f64] {
        &self.hi
    }
    fn objective(&self, x: &[f64]) -> f64 {
        let mut g = vec![0.0; N];
        self.grad_into(x, &mut g);
        0.5 * (0..N).map(|i| (x[i] - self.c[i]) * g[i]).sum::<f64>()
    }
    fn gradient(&self, x: &[f64], g: &mut [f64]) {
        self.grad_into(x, g);
    }
}

struct WallClock(Instant);

impl Clock for WallClock {
    fn now(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

#[test]
fn random_box_quadratics_reach_stationarity() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let budget = SolverBudget {
        record_trace: true,
        gradient_tol: 1e-9,
        ..SolverBudget::iterations(500)
    };
    let mut worst = 0.0f64;
    for k in 0..100 {
        let q = Quadratic::random(&mut rng);
        let x0: Vec<f64> = (0..N).map(|i| rng.random_range(q.lo[i]..q.hi[i])).collect();
        let r = sqp_solve(&q, &x0, &budget, &WallClock(Instant::now()));
        let mut g = vec![0.0; N];
        q.gradient(&r.x, &mut g);
        let pg = projected_gradient_norm(&r.x, &g, &q.lo, &q.hi);
        worst = worst.max(pg);
        assert!(pg < 1e-6, "problem {k}: projected gradient {pg:e}, {:?}", r.termination);
        let mut best = f64::INFINITY;
        for t in &r.trace {
            for i in 0..N {
                assert!(t.x[i] >= q.lo[i] && t.x[i] <= q.hi[i], "problem {k}: infeasible iterate");
            }
            assert!(t.cost <= best || best.is_infinite(), "problem {k}: cost rose");
            best = best.min(t.cost);
        }
        assert!(r.cost <= r.initial_cost);
    }
    eprintln!("worst projected gradient {worst:e}");
}

/// A problem whose every evaluation takes a fixed time.
struct Slow {
    inner: Quadratic,
    delay: Duration,
    longest: Cell<f64>,
}

impl Slow {
    fn wait(&self) {
        let t = Instant::now();
        std::thread::sleep(self.delay);
        self.longest.set(self.longest.get().max(t.elapsed().as_secs_f64()));
    }
}

impl NlpProblem for Slow {
    fn dim(&self) -> usize {
        N
    }
    fn lower(&self) -> &[f64] {
        &self.inner.lo
    }
    fn upper(&self) -> &[f64] {
        &self.inner.hi
    }
    fn objective(&self, x: &[f64]) -> f64 {
        self.wait();
        self.inner.objective(x)
    }
    fn gradient(&self, x: &[f64], g: &mut [f64]) {
        self.inner.gradient(x, g)
    }
}

#[test]
fn wall_time_budget_overshoots_by_at_most_one_evaluation() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let slow = Slow {
        inner: Quadratic::random(&mut rng),
        delay: Duration::from_micros(300),
        longest: Cell::new(0.0),
    };
    let budget = SolverBudget {
        max_wall_time: 0.002,
        ..SolverBudget::iterations(10_000)
    };
    let x0 = slow.inner.lo.clone();
    let clock = WallClock(Instant::now());
    let r = sqp_solve(&slow, &x0, &budget, &clock);
    // Bookkeeping between evaluations is allowed a small scheduling margin.
    let allowed = budget.max_wall_time + slow.longest.get() + 2e-4;
    assert!(r.wall_time <= allowed, "{} > {}", r.wall_time, allowed);
    assert!(r.evaluations >= 1);
}
