//! Named operators constructible by keyword, e.g. `shift(64)` or
//! `doubly_stochastic_random(8, 42)`.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, VarlabError};
use crate::lattice::MeasureSpace;
use crate::operators::regular::{build_regular_operator, RegularOperator};
use crate::operators::semigroup::Generator;
use crate::operators::Operator;

/// Keywords accepted by [`parse_operator`], with their argument lists.
pub const BUILTINS: &[&str] = &[
    "shift(N)",
    "lazy_walk(N)",
    "cycle_laplacian(N)",
    "doubly_stochastic_random(N, seed)",
    "birth_death(N, p)",
    "identity(N)",
    "zero_generator(N)",
    "scalar_generator(a)",
];

fn regular(kernel: DMatrix<f64>) -> RegularOperator {
    let n = kernel.nrows();
    build_regular_operator(kernel, MeasureSpace::counting(n)).expect("built-in kernels are finite and square")
}

fn generator(matrix: DMatrix<f64>) -> Generator {
    let n = matrix.nrows();
    Generator::new(matrix, MeasureSpace::counting(n)).expect("built-in generators are finite and square")
}

fn shift_matrix(n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| if j == (i + 1) % n { 1.0 } else { 0.0 })
}

/// Cyclic shift on `ℤ_N`: `(Tf)(i) = f(i + 1 mod N)`.
pub fn shift(n: usize) -> RegularOperator {
    regular(shift_matrix(n))
}

/// `I/2 + (S + S^{-1})/4` on `ℤ_N`.
pub fn lazy_walk(n: usize) -> RegularOperator {
    let s = shift_matrix(n);
    let k = DMatrix::identity(n, n) * 0.5 + (&s + s.transpose()) * 0.25;
    regular(k)
}

/// `2I − S − S^{-1}`, the graph Laplacian of the cycle `C_N`.
pub fn cycle_laplacian(n: usize) -> Generator {
    let s = shift_matrix(n);
    let a = DMatrix::identity(n, n) * 2.0 - &s - s.transpose();
    generator(a)
}

/// Convex combination of `N` uniformly random permutation matrices with
/// random weights, drawn from a ChaCha8 stream seeded by `seed`.
pub fn doubly_stochastic_random(n: usize, seed: u64) -> RegularOperator {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 1e-3).collect();
    let total: f64 = weights.iter().sum();
    let mut k = DMatrix::zeros(n, n);
    let mut perm: Vec<usize> = (0..n).collect();
    for w in weights {
        perm.shuffle(&mut rng);
        for (i, &j) in perm.iter().enumerate() {
            k[(i, j)] += w / total;
        }
    }
    regular(k)
}

/// Birth–death chain on `{0, …, N−1}`: up with probability `p`, down with
/// `1 − p`, holding at the two ends instead of leaving.
pub fn birth_death(n: usize, p: f64) -> RegularOperator {
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        k[(i, (i + 1).min(n - 1))] += p;
        k[(i, i.saturating_sub(1))] += 1.0 - p;
    }
    regular(k)
}

pub fn identity(n: usize) -> RegularOperator {
    regular(DMatrix::identity(n, n))
}

pub fn zero_generator(n: usize) -> Generator {
    generator(DMatrix::zeros(n, n))
}

/// The 1×1 generator `A = a`.
pub fn scalar_generator(a: f64) -> Generator {
    generator(DMatrix::from_element(1, 1, a))
}

fn unknown(text: &str) -> VarlabError {
    VarlabError::invalid(format!(
        "unknown operator `{text}`; built-ins are: {}",
        BUILTINS.join(", ")
    ))
}

fn size_arg(text: &str, arg: &str) -> Result<usize> {
    match arg.parse::<usize>() {
        Ok(n) if n >= 1 => Ok(n),
        _ => Err(VarlabError::invalid(format!("`{text}`: size must be a positive integer, got `{arg}`"))),
    }
}

fn real_arg(text: &str, arg: &str) -> Result<f64> {
    arg.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| VarlabError::invalid(format!("`{text}`: expected a real number, got `{arg}`")))
}

/// Parses a built-in keyword such as `lazy_walk(64)`.
pub fn parse_operator(text: &str) -> Result<Operator> {
    let trimmed = text.trim();
    let (name, rest) = trimmed.split_once('(').ok_or_else(|| unknown(trimmed))?;
    let inner = rest.strip_suffix(')').ok_or_else(|| unknown(trimmed))?;
    let args: Vec<&str> = inner.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    let expect = |count: usize| -> Result<()> {
        if args.len() == count {
            Ok(())
        } else {
            Err(VarlabError::invalid(format!(
                "`{trimmed}`: expected {count} argument(s), got {}",
                args.len()
            )))
        }
    };
    let op = match name.trim() {
        "shift" => {
            expect(1)?;
            Operator::Kernel(shift(size_arg(trimmed, args[0])?))
        }
        "lazy_walk" => {
            expect(1)?;
            Operator::Kernel(lazy_walk(size_arg(trimmed, args[0])?))
        }
        "cycle_laplacian" => {
            expect(1)?;
            Operator::Generator(cycle_laplacian(size_arg(trimmed, args[0])?))
        }
        "doubly_stochastic_random" => {
            expect(2)?;
            let seed = args[1]
                .parse::<u64>()
                .map_err(|_| VarlabError::invalid(format!("`{trimmed}`: seed must be a nonnegative integer")))?;
            Operator::Kernel(doubly_stochastic_random(size_arg(trimmed, args[0])?, seed))
        }
        "birth_death" => {
            expect(2)?;
            let p = real_arg(trimmed, args[1])?;
            if !(0.0..=1.0).contains(&p) {
                return Err(VarlabError::invalid(format!("`{trimmed}`: p must lie in [0, 1]")));
            }
            Operator::Kernel(birth_death(size_arg(trimmed, args[0])?, p))
        }
        "identity" => {
            expect(1)?;
            Operator::Kernel(identity(size_arg(trimmed, args[0])?))
        }
        "zero_generator" => {
            expect(1)?;
            Operator::Generator(zero_generator(size_arg(trimmed, args[0])?))
        }
        "scalar_generator" => {
            expect(1)?;
            Operator::Generator(scalar_generator(real_arg(trimmed, args[0])?))
        }
        _ => return Err(unknown(trimmed)),
    };
    Ok(op)
}

/// Draws a kernel `ρ·P` with `P` doubly stochastic and `ρ ∈ [lo, 1]`; for tests and ensembles.
pub fn random_contraction(n: usize, seed: u64, lo: f64) -> RegularOperator {
    let p = doubly_stochastic_random(n, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let rho = lo + (1.0 - lo) * rng.random::<f64>();
    regular(p.kernel() * rho)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn certificates_of_builtins() {
        for op in [shift(7), lazy_walk(9), doubly_stochastic_random(8, 3), identity(4), birth_death(5, 0.5)] {
            assert!(op.certificates().contractively_regular());
        }
        let skewed = birth_death(5, 0.8);
        assert!(skewed.certificates().linf_contractive);
        assert!(!skewed.certificates().l1_contractive);
        let twice = build_regular_operator(DMatrix::identity(3, 3) * 2.0, MeasureSpace::counting(3)).unwrap();
        assert!(!twice.certificates().l1_contractive && !twice.certificates().linf_contractive);
    }

    #[test]
    fn random_kernel_is_doubly_stochastic_and_seeded() {
        let a = doubly_stochastic_random(8, 42);
        for i in 0..8 {
            assert!((a.kernel().row(i).sum() - 1.0).abs() < 1e-14);
            assert!((a.kernel().column(i).sum() - 1.0).abs() < 1e-14);
        }
        assert_eq!(a, doubly_stochastic_random(8, 42));
        assert_ne!(a, doubly_stochastic_random(8, 43));
    }

    #[test]
    fn laplacian_kills_constants() {
        let g = cycle_laplacian(6);
        let ones = DMatrix::from_element(6, 1, 1.0);
        assert_eq!((g.matrix() * ones).amax(), 0.0);
    }

    #[test]
    fn parser() {
        assert!(matches!(parse_operator("shift(64)").unwrap(), Operator::Kernel(k) if k.dim() == 64));
        assert!(matches!(
            parse_operator(" doubly_stochastic_random(8, 42) ").unwrap(),
            Operator::Kernel(k) if k == doubly_stochastic_random(8, 42)
        ));
        assert!(matches!(parse_operator("cycle_laplacian(32)").unwrap(), Operator::Generator(_)));
        assert!(matches!(parse_operator("birth_death(6,0.3)").unwrap(), Operator::Kernel(_)));
        let err = parse_operator("rotation(4)").unwrap_err().to_string();
        assert!(err.contains("lazy_walk(N)"), "{err}");
        assert!(parse_operator("shift(0)").is_err());
        assert!(parse_operator("shift(3, 4)").is_err());
        assert!(parse_operator("birth_death(4, 1.5)").is_err());
        assert!(parse_operator("shift").is_err());
    }
}
