use stlgame_core::dynamics::drone_step;

// Discretised quadrotor, transcribed independently of the engine's tables.
const A: [[f64; 6]; 6] = [
    [1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.0, 1.0, 0.0, 0.0, 0.0, 0.0],
    [0.0, 0.0, 1.0, 0.0, 0.0, 0.0],
    [0.2, 0.0, 0.0, 1.0, 0.0, 0.0],
    [0.0, 0.2, 0.0, 0.0, 1.0, 0.0],
    [0.0, 0.0, 0.2, 0.0, 0.0, 1.0],
];
const B: [[f64; 3]; 6] = [
    [1.96, 0.0, 0.0],
    [0.0, -1.96, 0.0],
    [0.0, 0.0, 0.4],
    [0.196, 0.0, 0.0],
    [0.0, -0.196, 0.0],
    [0.0, 0.0, 0.04],
];

fn basis(n: usize, i: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[i] = 1.0;
    v
}

#[test]
fn state_basis_reproduces_a_columns() {
    for j in 0..6 {
        let next = drone_step(&basis(6, j), &[0.0; 3]).unwrap();
        for r in 0..6 {
            assert!((next[r] - A[r][j]).abs() <= 1e-12, "A[{r}][{j}]");
        }
    }
}

#[test]
fn input_basis_reproduces_b_columns() {
    for j in 0..3 {
        let next = drone_step(&[0.0; 6], &basis(3, j)).unwrap();
        for r in 0..6 {
            assert!((next[r] - B[r][j]).abs() <= 1e-12, "B[{r}][{j}]");
        }
    }
}

#[test]
fn pitch_from_rest() {
    let next = drone_step(&[0.0; 6], &[1.0, 0.0, 0.0]).unwrap();
    assert!((next[0] - 1.96).abs() <= 1e-12);
    assert!((next[3] - 0.196).abs() <= 1e-12);
}

#[test]
fn superposition() {
    let s = [0.3, -0.1, 0.7, 1.0, 2.0, -0.5];
    let u = [0.2, -0.4, 0.9];
    let next = drone_step(&s, &u).unwrap();
    for r in 0..6 {
        let want: f64 = (0..6).map(|c| A[r][c] * s[c]).sum::<f64>() + (0..3).map(|c| B[r][c] * u[c]).sum::<f64>();
        assert!((next[r] - want).abs() <= 1e-12);
    }
}
