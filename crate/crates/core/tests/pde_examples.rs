use cnls::envelope::{circular_profile, EnvelopeParams};
use cnls::exact::{coupled_traveling, traveling};
use cnls::pde::{Grid, IterationControl, ModelParams, SolitonSpec, Stepper};
use cnls::Complex64;

fn spec(c: f64) -> SolitonSpec {
    SolitonSpec {
        x0: -10.0,
        c,
        n_psi: -1.5,
        n_phi: -1.5,
        delta_psi: 0.0,
        delta_phi: 0.4,
    }
}

fn error_after(gamma: f64, h: f64, dtau: f64, t_final: f64) -> f64 {
    let grid = Grid::with_spacing(40.0, 40.0, h, dtau).unwrap();
    let model = ModelParams::new(1.0, 0.75, Complex64::new(gamma, 0.0)).unwrap();
    let p = circular_profile(&EnvelopeParams::circular(-1.5, 1.0, 0.75)).unwrap();
    let prof = |x: f64| (p.eval(x), p.eval(x));
    let s = spec(1.0);
    let g = Complex64::new(gamma, 0.0);
    let mut state = coupled_traveling(prof, &s, &grid, 0.0, g);
    let n = state.len();
    for v in [&mut state.psi, &mut state.phi] {
        v[0] = Complex64::new(0.0, 0.0);
        v[n - 1] = Complex64::new(0.0, 0.0);
    }
    let mut stepper = Stepper::new(model, grid, IterationControl::default()).unwrap();
    let steps = (t_final / dtau).round() as usize;
    for _ in 0..steps {
        state = stepper.step(&state).unwrap().0;
    }
    state.max_distance(&coupled_traveling(prof, &s, &grid, steps as f64 * dtau, g))
}

#[test]
fn free_soliton_tracks_exact_solution() {
    let coarse = error_after(0.0, 0.1, 0.02, 5.0);
    let fine = error_after(0.0, 0.05, 0.01, 5.0);
    assert!(fine < 0.05, "error {fine}");
    let order = (coarse / fine).log2();
    assert!((1.8..2.3).contains(&order), "order {order}");
}

#[test]
fn coupled_soliton_tracks_transform() {
    let fine = error_after(0.175, 0.05, 0.01, 5.0);
    assert!(fine < 0.05, "error {fine}");
}

#[test]
fn exact_states_agree_without_coupling() {
    let grid = Grid::with_spacing(20.0, 20.0, 0.1, 0.01).unwrap();
    let p = circular_profile(&EnvelopeParams::circular(-1.5, 0.5, 0.75)).unwrap();
    let prof = |x: f64| (p.eval(x), p.eval(x));
    let a = traveling(prof, &spec(0.5), &grid, 2.0);
    let b = coupled_traveling(prof, &spec(0.5), &grid, 2.0, Complex64::new(0.0, 0.0));
    assert!(a.max_distance(&b) < 1e-14);
}
