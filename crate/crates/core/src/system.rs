//! The linear plant, its noise model, trajectory simulation and open-loop datasets.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{asymmetry, check_shape, check_square, min_eigenvalue, symmetrize};
use crate::rng::{derive_seed, domain, stream, stream_rng, GaussianSampler};

const SYM_TOL: f64 = 1e-10;

fn check_psd(m: &DMatrix<f64>, name: &str) -> Result<()> {
    check_square(m, name)?;
    if asymmetry(m) > SYM_TOL * (1.0 + m.abs().max()) {
        return Err(Error::InvalidCovariance {
            name: name.into(),
            reason: "not symmetric".into(),
        });
    }
    let scale = m.abs().max().max(1.0);
    let lmin = min_eigenvalue(m);
    if lmin < -SYM_TOL * scale {
        return Err(Error::InvalidCovariance {
            name: name.into(),
            reason: format!("not positive semidefinite (min eigenvalue {lmin:.3e})"),
        });
    }
    Ok(())
}

fn check_pd(m: &DMatrix<f64>, name: &str) -> Result<()> {
    check_psd(m, name)?;
    let eig = nalgebra::SymmetricEigen::new(symmetrize(m)).eigenvalues;
    let lmax = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lmin = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    if lmin.is_nan() || lmin <= 0.0 || lmin <= 1e-12 * lmax {
        return Err(Error::InvalidCovariance {
            name: name.into(),
            reason: format!("not positive definite (eigenvalues in [{lmin:.3e}, {lmax:.3e}])"),
        });
    }
    Ok(())
}

/// Discrete-time plant `x(t+1) = A x + B u + w`, `y = C x + v` with Gaussian noise.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub q_w: DMatrix<f64>,
    pub r_v: DMatrix<f64>,
    pub sigma0: DMatrix<f64>,
}

impl LinearSystem {
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        q_w: DMatrix<f64>,
        r_v: DMatrix<f64>,
        sigma0: DMatrix<f64>,
    ) -> Result<Self> {
        let sys = Self {
            a,
            b,
            c,
            q_w,
            r_v,
            sigma0,
        };
        sys.validate()?;
        Ok(sys)
    }

    pub fn validate(&self) -> Result<()> {
        check_square(&self.a, "A")?;
        let n = self.a.nrows();
        if self.b.nrows() != n || self.b.ncols() == 0 {
            return Err(Error::shape(
                "B",
                format!("{n}xm with m >= 1"),
                format!("{}x{}", self.b.nrows(), self.b.ncols()),
            ));
        }
        if self.c.ncols() != n || self.c.nrows() == 0 {
            return Err(Error::shape(
                "C",
                format!("px{n} with p >= 1"),
                format!("{}x{}", self.c.nrows(), self.c.ncols()),
            ));
        }
        let p = self.c.nrows();
        check_shape(&self.q_w, "Q_w", n, n)?;
        check_shape(&self.r_v, "R_v", p, p)?;
        check_shape(&self.sigma0, "Sigma0", n, n)?;
        check_psd(&self.q_w, "Q_w")?;
        check_pd(&self.r_v, "R_v")?;
        check_pd(&self.sigma0, "Sigma0")?;
        Ok(())
    }

    /// The plant used throughout the examples: a stable two-state system with a
    /// single input and a single position-like output.
    pub fn benchmark() -> Self {
        Self::new(
            DMatrix::from_row_slice(2, 2, &[0.7, 1.2, 0.0, 0.4]),
            DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            DMatrix::identity(2, 2) * 2.0,
            DMatrix::identity(1, 1),
            DMatrix::identity(2, 2),
        )
        .expect("example system is valid")
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    pub fn p(&self) -> usize {
        self.c.nrows()
    }

    pub fn with_noise(&self, q_w: DMatrix<f64>, r_v: DMatrix<f64>) -> Result<Self> {
        Self::new(
            self.a.clone(),
            self.b.clone(),
            self.c.clone(),
            q_w,
            r_v,
            self.sigma0.clone(),
        )
    }
}

/// Quadratic stage cost `x' Q_x x + u' R_u u`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostWeights {
    pub q_x: DMatrix<f64>,
    pub r_u: DMatrix<f64>,
}

impl CostWeights {
    pub fn new(q_x: DMatrix<f64>, r_u: DMatrix<f64>) -> Result<Self> {
        check_psd(&q_x, "Q_x")?;
        check_pd(&r_u, "R_u")?;
        Ok(Self { q_x, r_u })
    }

    pub fn benchmark() -> Self {
        Self::new(DMatrix::identity(2, 2) * 5.0, DMatrix::identity(1, 1)).expect("valid weights")
    }

    pub fn check_against(&self, system: &LinearSystem) -> Result<()> {
        check_shape(&self.q_x, "Q_x", system.n(), system.n())?;
        check_shape(&self.r_u, "R_u", system.m(), system.m())
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            q_x: &self.q_x * factor,
            r_u: &self.r_u * factor,
        }
    }
}

/// Open-loop experiment: i.i.d. Gaussian inputs over a fixed horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentInputSpec {
    pub sigma_u: DMatrix<f64>,
    pub horizon: usize,
    pub trajectories: usize,
    pub seed: u64,
}

impl ExperimentInputSpec {
    pub fn new(sigma_u: DMatrix<f64>, horizon: usize, trajectories: usize, seed: u64) -> Result<Self> {
        let spec = Self {
            sigma_u,
            horizon,
            trajectories,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::InvalidSpec("horizon T must be positive".into()));
        }
        if self.trajectories == 0 {
            return Err(Error::InvalidSpec("number of trajectories N must be positive".into()));
        }
        check_pd(&self.sigma_u, "Sigma_u")
    }

    pub fn with_trajectories(&self, trajectories: usize, seed: u64) -> Self {
        Self {
            trajectories,
            seed,
            ..self.clone()
        }
    }
}

/// One recorded run: inputs `m x T`, states `n x (T+1)`, outputs `p x (T+1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub inputs: DMatrix<f64>,
    pub states: DMatrix<f64>,
    pub outputs: DMatrix<f64>,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.inputs.ncols()
    }
}

/// Process noise `w(0..T-1)` and measurement noise `v(0..T)` of a single run.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseRealization {
    pub process: DMatrix<f64>,
    pub measurement: DMatrix<f64>,
}

impl NoiseRealization {
    /// Draws `v(0), w(0), v(1), w(1), ..., v(T)` from the noise stream of `seed`.
    pub fn draw(system: &LinearSystem, horizon: usize, seed: u64) -> Result<Self> {
        let w_s = GaussianSampler::new(&system.q_w, "Q_w")?;
        let v_s = GaussianSampler::new(&system.r_v, "R_v")?;
        let mut rng = stream_rng(seed, stream::NOISE);
        let mut process = DMatrix::zeros(system.n(), horizon);
        let mut measurement = DMatrix::zeros(system.p(), horizon + 1);
        for t in 0..=horizon {
            measurement.set_column(t, &v_s.sample(&mut rng));
            if t < horizon {
                process.set_column(t, &w_s.sample(&mut rng));
            }
        }
        Ok(Self { process, measurement })
    }

    pub fn zeros(system: &LinearSystem, horizon: usize) -> Self {
        Self {
            process: DMatrix::zeros(system.n(), horizon),
            measurement: DMatrix::zeros(system.p(), horizon + 1),
        }
    }

    pub fn horizon(&self) -> usize {
        self.process.ncols()
    }
}

fn check_inputs(system: &LinearSystem, inputs: &DMatrix<f64>, x0: &DVector<f64>) -> Result<()> {
    if inputs.nrows() != system.m() {
        return Err(Error::shape(
            "inputs",
            format!("{} rows", system.m()),
            format!("{} rows", inputs.nrows()),
        ));
    }
    if x0.len() != system.n() {
        return Err(Error::shape(
            "x0",
            format!("length {}", system.n()),
            format!("length {}", x0.len()),
        ));
    }
    Ok(())
}

/// Simulates the plant with noise drawn deterministically from `noise_seed`.
pub fn simulate_trajectory(
    system: &LinearSystem,
    inputs: &DMatrix<f64>,
    x0: &DVector<f64>,
    noise_seed: u64,
) -> Result<Trajectory> {
    check_inputs(system, inputs, x0)?;
    let noise = NoiseRealization::draw(system, inputs.ncols(), noise_seed)?;
    simulate_with_noise(system, inputs, x0, &noise)
}

/// Simulates the plant for a given noise realization.
pub fn simulate_with_noise(
    system: &LinearSystem,
    inputs: &DMatrix<f64>,
    x0: &DVector<f64>,
    noise: &NoiseRealization,
) -> Result<Trajectory> {
    check_inputs(system, inputs, x0)?;
    let horizon = inputs.ncols();
    if noise.horizon() != horizon {
        return Err(Error::shape(
            "noise",
            format!("horizon {horizon}"),
            format!("horizon {}", noise.horizon()),
        ));
    }
    let mut states = DMatrix::zeros(system.n(), horizon + 1);
    let mut outputs = DMatrix::zeros(system.p(), horizon + 1);
    let mut x = x0.clone();
    for t in 0..=horizon {
        states.set_column(t, &x);
        outputs.set_column(t, &(&system.c * &x + noise.measurement.column(t)));
        if t < horizon {
            x = &system.a * &x + &system.b * inputs.column(t) + noise.process.column(t);
        }
    }
    Ok(Trajectory {
        inputs: inputs.clone(),
        states,
        outputs,
    })
}

/// State sequence `n x (T+1)` with `w = 0`.
pub fn simulate_noise_free(system: &LinearSystem, inputs: &DMatrix<f64>, x0: &DVector<f64>) -> Result<DMatrix<f64>> {
    check_inputs(system, inputs, x0)?;
    let horizon = inputs.ncols();
    let mut states = DMatrix::zeros(system.n(), horizon + 1);
    let mut x = x0.clone();
    for t in 0..=horizon {
        states.set_column(t, &x);
        if t < horizon {
            x = &system.a * &x + &system.b * inputs.column(t);
        }
    }
    Ok(states)
}

/// Block matrices with `X = O X0 + F_u U + F_w W` for stacked trajectories.
#[derive(Debug, Clone)]
pub struct NoiseFreePropagator {
    pub o: DMatrix<f64>,
    pub f_u: DMatrix<f64>,
    pub f_w: DMatrix<f64>,
}

impl NoiseFreePropagator {
    pub fn new(system: &LinearSystem, horizon: usize) -> Self {
        let (n, m) = (system.n(), system.m());
        let mut powers = Vec::with_capacity(horizon + 1);
        powers.push(DMatrix::<f64>::identity(n, n));
        for k in 1..=horizon {
            let next = &system.a * &powers[k - 1];
            powers.push(next);
        }
        let mut o = DMatrix::zeros(n * (horizon + 1), n);
        let mut f_u = DMatrix::zeros(n * (horizon + 1), m * horizon);
        let mut f_w = DMatrix::zeros(n * (horizon + 1), n * horizon);
        for t in 0..=horizon {
            o.view_mut((t * n, 0), (n, n)).copy_from(&powers[t]);
            for j in 0..t {
                let ak = &powers[t - 1 - j];
                f_u.view_mut((t * n, j * m), (n, m)).copy_from(&(ak * &system.b));
                f_w.view_mut((t * n, j * n), (n, n)).copy_from(ak);
            }
        }
        Self { o, f_u, f_w }
    }

    /// `[O F_u]`.
    pub fn input_map(&self) -> DMatrix<f64> {
        crate::linalg::hstack(&[&self.o, &self.f_u])
    }

    /// Stacked noise-free states for stacked initial states and inputs (columns are runs).
    pub fn propagate(&self, x0: &DMatrix<f64>, u: &DMatrix<f64>) -> DMatrix<f64> {
        &self.o * x0 + &self.f_u * u
    }
}

/// Open-loop data matrices with one trajectory per column, time fastest within a column.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryDataset {
    /// `mT x N`
    pub u: DMatrix<f64>,
    /// `n(T+1) x N`
    pub x: DMatrix<f64>,
    /// `p(T+1) x N`
    pub y: DMatrix<f64>,
    /// Trajectory seed of every column.
    pub seeds: Vec<u64>,
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub horizon: usize,
}

impl TrajectoryDataset {
    pub fn from_trajectories(trajs: &[Trajectory], seeds: Vec<u64>) -> Result<Self> {
        let first = trajs
            .first()
            .ok_or_else(|| Error::InvalidSpec("dataset needs at least one trajectory".into()))?;
        let (m, horizon) = first.inputs.shape();
        let n = first.states.nrows();
        let p = first.outputs.nrows();
        let count = trajs.len();
        if seeds.len() != count {
            return Err(Error::shape("seeds", count, seeds.len()));
        }
        let mut u = DMatrix::zeros(m * horizon, count);
        let mut x = DMatrix::zeros(n * (horizon + 1), count);
        let mut y = DMatrix::zeros(p * (horizon + 1), count);
        for (i, tr) in trajs.iter().enumerate() {
            if tr.inputs.shape() != (m, horizon)
                || tr.states.shape() != (n, horizon + 1)
                || tr.outputs.shape() != (p, horizon + 1)
            {
                return Err(Error::shape(format!("trajectory {i}"), "uniform shapes", "mismatch"));
            }
            u.column_mut(i).copy_from_slice(tr.inputs.as_slice());
            x.column_mut(i).copy_from_slice(tr.states.as_slice());
            y.column_mut(i).copy_from_slice(tr.outputs.as_slice());
        }
        Ok(Self {
            u,
            x,
            y,
            seeds,
            n,
            m,
            p,
            horizon,
        })
    }

    pub fn len(&self) -> usize {
        self.u.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// States at time `t` of every trajectory, `n x N`.
    pub fn x_at(&self, t: usize) -> DMatrix<f64> {
        assert!(t <= self.horizon);
        self.x.rows(t * self.n, self.n).into_owned()
    }

    /// Inputs `u(0..=t)` stacked, `m(t+1) x N`. `t = -1` is the empty block.
    pub fn u_through(&self, t: isize) -> DMatrix<f64> {
        let rows = (self.m as isize * (t + 1)).max(0) as usize;
        self.u.rows(0, rows).into_owned()
    }

    /// Outputs `y(0..=t)` stacked, `p(t+1) x N`.
    pub fn y_through(&self, t: usize) -> DMatrix<f64> {
        self.y.rows(0, self.p * (t + 1)).into_owned()
    }

    /// `[X_0; U]`.
    pub fn x0_and_inputs(&self) -> DMatrix<f64> {
        crate::linalg::vstack(&[&self.x_at(0), &self.u])
    }

    pub fn trajectory(&self, i: usize) -> Trajectory {
        Trajectory {
            inputs: DMatrix::from_column_slice(self.m, self.horizon, self.u.column(i).as_slice()),
            states: DMatrix::from_column_slice(self.n, self.horizon + 1, self.x.column(i).as_slice()),
            outputs: DMatrix::from_column_slice(self.p, self.horizon + 1, self.y.column(i).as_slice()),
        }
    }
}

/// Draws `x(0) ~ N(0, Sigma0)` followed by `u(t) ~ N(0, Sigma_u)` from the excitation
/// stream of `seed`, then simulates with the noise stream of the same seed.
pub fn replay_open_loop_trajectory(system: &LinearSystem, spec: &ExperimentInputSpec, seed: u64) -> Result<Trajectory> {
    let x0_s = GaussianSampler::new(&system.sigma0, "Sigma0")?;
    let u_s = GaussianSampler::new(&spec.sigma_u, "Sigma_u")?;
    if u_s.dim() != system.m() {
        return Err(Error::shape(
            "Sigma_u",
            format!("{0}x{0}", system.m()),
            format!("{0}x{0}", u_s.dim()),
        ));
    }
    let mut rng = stream_rng(seed, stream::EXCITATION);
    let x0 = x0_s.sample(&mut rng);
    let mut inputs = DMatrix::zeros(system.m(), spec.horizon);
    for t in 0..spec.horizon {
        inputs.set_column(t, &u_s.sample(&mut rng));
    }
    simulate_trajectory(system, &inputs, &x0, seed)
}

/// Seed of trajectory `i` for an experiment with master seed `master`.
pub fn open_loop_seed(master: u64, i: usize) -> u64 {
    derive_seed(master, &[domain::OPEN_LOOP, i as u64])
}

/// Generates `N` independent open-loop trajectories.
pub fn generate_open_loop_dataset(system: &LinearSystem, spec: &ExperimentInputSpec) -> Result<TrajectoryDataset> {
    system.validate()?;
    spec.validate()?;
    let seeds: Vec<u64> = (0..spec.trajectories).map(|i| open_loop_seed(spec.seed, i)).collect();
    let trajs = seeds
        .par_iter()
        .map(|&s| replay_open_loop_trajectory(system, spec, s))
        .collect::<Result<Vec<_>>>()?;
    TrajectoryDataset::from_trajectories(&trajs, seeds)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example_spec(n: usize) -> ExperimentInputSpec {
        ExperimentInputSpec::new(DMatrix::identity(1, 1), 50, n, 11).unwrap()
    }

    #[test]
    fn noise_drives_zero_input_states() {
        let sys = LinearSystem::benchmark();
        let tr = simulate_trajectory(&sys, &DMatrix::zeros(1, 20), &DVector::zeros(2), 5).unwrap();
        assert!(tr.states.columns(1, 20).norm() > 0.1);
    }

    #[test]
    fn zero_noise_zero_input_gives_zero_trajectory() {
        let sys = LinearSystem::benchmark()
            .with_noise(DMatrix::zeros(2, 2), DMatrix::identity(1, 1) * 1e-18)
            .unwrap();
        let tr = simulate_trajectory(&sys, &DMatrix::zeros(1, 30), &DVector::zeros(2), 8).unwrap();
        assert_eq!(tr.states.abs().max(), 0.0);
        assert!(tr.outputs.abs().max() < 1e-8);
    }

    #[test]
    fn impulse_response_matches_matrix_powers() {
        let sys = LinearSystem::benchmark()
            .with_noise(DMatrix::zeros(2, 2), DMatrix::identity(1, 1))
            .unwrap();
        let horizon = 12;
        let mut inputs = DMatrix::zeros(1, horizon);
        inputs[(0, 0)] = 1.0;
        let tr = simulate_trajectory(&sys, &inputs, &DVector::zeros(2), 3).unwrap();
        let mut power = DMatrix::<f64>::identity(2, 2);
        for t in 1..=horizon {
            let expected = &power * &sys.b;
            assert!((tr.states.column(t) - expected.column(0)).norm() < 1e-12);
            power = &sys.a * power;
        }
        let prop = NoiseFreePropagator::new(&sys, horizon);
        let stacked = prop.propagate(
            &DMatrix::zeros(2, 1),
            &DMatrix::from_column_slice(horizon, 1, inputs.as_slice()),
        );
        assert!((stacked.column(0) - DVector::from_column_slice(tr.states.as_slice())).norm() < 1e-12);
    }

    #[test]
    fn noise_free_state_powers() {
        let sys = LinearSystem::benchmark();
        let x0 = DVector::from_vec(vec![1.0, 1.0]);
        let states = simulate_noise_free(&sys, &DMatrix::zeros(1, 10), &x0).unwrap();
        let mut expected = x0.clone();
        for t in 0..=10 {
            assert!((states.column(t) - &expected).norm() < 1e-12);
            expected = &sys.a * expected;
        }
        let zero = simulate_noise_free(&sys, &DMatrix::zeros(1, 10), &DVector::zeros(2)).unwrap();
        assert_eq!(zero.abs().max(), 0.0);
    }

    #[test]
    fn noise_free_matches_seeded_simulation_without_process_noise() {
        let sys = LinearSystem::benchmark()
            .with_noise(DMatrix::zeros(2, 2), DMatrix::identity(1, 1))
            .unwrap();
        let mut rng = stream_rng(4, 0);
        let inputs = crate::rng::standard_normal_matrix(&mut rng, 1, 25);
        let x0 = DVector::from_vec(vec![0.3, -1.1]);
        let a = simulate_noise_free(&sys, &inputs, &x0).unwrap();
        let b = simulate_trajectory(&sys, &inputs, &x0, 99).unwrap();
        assert!((a - b.states).abs().max() < 1e-12);
    }

    #[test]
    fn shape_errors_name_the_field() {
        let sys = LinearSystem::benchmark();
        let err = simulate_trajectory(&sys, &DMatrix::zeros(2, 5), &DVector::zeros(2), 0).unwrap_err();
        assert!(err.to_string().contains("inputs"));
        let err = simulate_noise_free(&sys, &DMatrix::zeros(1, 5), &DVector::zeros(3)).unwrap_err();
        assert!(err.to_string().contains("x0"));
        let err = LinearSystem::new(
            DMatrix::identity(2, 2),
            DMatrix::zeros(3, 1),
            DMatrix::zeros(1, 2),
            DMatrix::zeros(2, 2),
            DMatrix::identity(1, 1),
            DMatrix::identity(2, 2),
        )
        .unwrap_err();
        assert!(err.to_string().contains("`B`"));
    }

    #[test]
    fn covariance_validation() {
        let sys = LinearSystem::benchmark();
        assert!(sys
            .with_noise(DMatrix::identity(2, 2) * -1.0, DMatrix::identity(1, 1))
            .is_err());
        assert!(sys.with_noise(DMatrix::zeros(2, 2), DMatrix::zeros(1, 1)).is_err());
        assert!(ExperimentInputSpec::new(DMatrix::zeros(1, 1), 5, 5, 0).is_err());
        assert!(ExperimentInputSpec::new(DMatrix::identity(1, 1), 0, 5, 0).is_err());
        assert!(ExperimentInputSpec::new(DMatrix::identity(1, 1), 5, 0, 0).is_err());
    }

    #[test]
    fn example_dataset_shapes() {
        let sys = LinearSystem::benchmark();
        let ds = generate_open_loop_dataset(&sys, &example_spec(100)).unwrap();
        assert_eq!(ds.u.shape(), (50, 100));
        assert_eq!(ds.x.shape(), (102, 100));
        assert_eq!(ds.y.shape(), (51, 100));
        let single = generate_open_loop_dataset(&sys, &example_spec(1)).unwrap();
        assert_eq!(single.len(), 1);
    }

    #[test]
    fn dataset_columns_replay_and_slice() {
        let sys = LinearSystem::benchmark();
        let spec = example_spec(20);
        let ds = generate_open_loop_dataset(&sys, &spec).unwrap();
        for i in [0, 7, 19] {
            let tr = replay_open_loop_trajectory(&sys, &spec, ds.seeds[i]).unwrap();
            assert_eq!(tr, ds.trajectory(i));
            for t in [0, 13, 50] {
                assert_eq!(ds.x_at(t).column(i), tr.states.column(t));
            }
        }
    }

    #[test]
    fn noise_free_dataset_obeys_propagator() {
        let sys = LinearSystem::benchmark()
            .with_noise(DMatrix::zeros(2, 2), DMatrix::identity(1, 1))
            .unwrap();
        let ds = generate_open_loop_dataset(&sys, &example_spec(60)).unwrap();
        let prop = NoiseFreePropagator::new(&sys, 50);
        let predicted = prop.propagate(&ds.x_at(0), &ds.u);
        let rel = (&predicted - &ds.x).norm() / ds.x.norm();
        assert!(rel < 1e-9, "relative error {rel}");
    }
}
