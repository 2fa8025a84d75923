import numpy as np
import pytest

from rowprox.exceptions import DimensionError, DivergenceError, RankDeficientBlockError, UnsupportedConfigurationError
from rowprox.prox import ALL_SPACE, NONNEG, ConstraintSet
from rowprox.ripg import (
    AbsResidual,
    BlockLeastSquares,
    ComponentSpec,
    ConstantStep,
    DiminishingStep,
    DistanceToHyperplane,
    HuberResidual,
    HyperplaneIndicator,
    QuadraticResidual,
    ScaledTVSmooth,
    Shuffled,
    SolveConfig,
    SquaredDistanceToHyperplane,
    ripg1_step,
    ripg2_step,
    run,
)
from rowprox.rowaction import (
    MethodSpec,
    Preconditioner,
    art_sweep,
    block_kaczmarz_sweep,
    block_tv_sweep,
    build_column_equilibration,
    damped_art_sweep,
    dist_art_sweep,
    dist_sq_art_sweep,
    method_objective,
    preconditioned_ripg1_sweep,
    reconstruct,
    robust_art_sweep,
)
from rowprox.sparsela import BlockPartition, SparseMatrix
from rowprox.tv import build_diff_operator


def _system(seed=0, m=30, n=20, density=0.5):
    r = np.random.default_rng(seed)
    M = r.standard_normal((m, n))
    M[r.random((m, n)) > density] = 0.0
    return SparseMatrix.from_dense(M), r.standard_normal(m), r.standard_normal(n)


def _step_for_step(A, b, x0, sweep, comp_of, rho, t, C, cycles=5):
    """Largest difference between single-row sweeps and generic R-IPG1 steps."""
    xs, xg = x0.copy(), x0.copy()
    worst = 0.0
    for _ in range(cycles):
        for i in range(A.nrows):
            xs = sweep(xs, np.array([i], dtype=np.int64))
            xg, _, _ = ripg1_step(xg, comp_of(i), t, rho, C)
            worst = max(worst, float(np.max(np.abs(xs - xg))))
    return worst


_SYSTEMS = {}


def _unit_blocks(A, b):
    key = (id(A), id(b))
    if key not in _SYSTEMS:
        from rowprox.rowaction import _block_systems

        _SYSTEMS[key] = _block_systems(A, b, BlockPartition.uniform(A.nrows, A.nrows), 2048)
    return _SYSTEMS[key]


EQUIV = {
    "art": (lambda A, b, x, rho, t, C, o: art_sweep(A, b, x, rho, C, o), lambda A, b, i: HyperplaneIndicator(A.row(i), b[i])),
    "damped": (lambda A, b, x, rho, t, C, o: damped_art_sweep(A, b, x, rho, t, C, o), lambda A, b, i: QuadraticResidual(A.row(i), b[i])),
    "l1": (lambda A, b, x, rho, t, C, o: robust_art_sweep(A, b, x, rho, t, 0.0, C, o), lambda A, b, i: AbsResidual(A.row(i), b[i])),
    "huber": (lambda A, b, x, rho, t, C, o: robust_art_sweep(A, b, x, rho, t, 0.3, C, o), lambda A, b, i: HuberResidual(A.row(i), b[i], 0.3)),
    "dist": (lambda A, b, x, rho, t, C, o: dist_art_sweep(A, b, x, rho, t, C, o), lambda A, b, i: DistanceToHyperplane(A.row(i), b[i])),
    "dist_sq": (lambda A, b, x, rho, t, C, o: dist_sq_art_sweep(A, b, x, rho, t, C, o), lambda A, b, i: SquaredDistanceToHyperplane(A.row(i), b[i])),
    "block1": (
        lambda A, b, x, rho, t, C, o: block_kaczmarz_sweep(A, b, None, x, rho, None, C, o, _unit_blocks(A, b)),
        lambda A, b, i: HyperplaneIndicator(A.row(i), b[i]),
    ),
    "damped_block1": (
        lambda A, b, x, rho, t, C, o: block_kaczmarz_sweep(A, b, None, x, rho, t, C, o, _unit_blocks(A, b)),
        lambda A, b, i: BlockLeastSquares(A.rows(i, i + 1), b[i : i + 1]),
    ),
}


@pytest.mark.parametrize("name", sorted(EQUIV))
@pytest.mark.parametrize("C", [ALL_SPACE, ConstraintSet.box(-0.5, 0.5)], ids=["free", "box"])
def test_specialized_sweeps_match_generic(name, C):
    sweep, g_of = EQUIV[name]
    A, b, x0 = _system(1)
    rho, t = 1.4, 0.35
    worst = _step_for_step(A, b, x0, lambda x, o: sweep(A, b, x, rho, t, C, o), lambda i: ComponentSpec(g_of(A, b, i)), rho, t, C)
    assert worst <= 1e-14


def test_full_cycle_equals_single_row_steps():
    A, b, x0 = _system(2)
    full = damped_art_sweep(A, b, x0, 0.8, 0.5)
    x = x0
    for i in range(A.nrows):
        x = damped_art_sweep(A, b, x, 0.8, 0.5, order=np.array([i]))
    np.testing.assert_array_equal(full, x)


def test_reconstruct_matches_run_with_shuffled_control():
    A, b, x0 = _system(3)
    spec = MethodSpec("damped-art", rho=1.2, schedule=DiminishingStep(0.5), control=Shuffled(4), constraint=NONNEG)
    tr = reconstruct(A, b, spec, 4, x0=x0)
    comps = [ComponentSpec(QuadraticResidual(A.row(i), b[i])) for i in range(A.nrows)]
    tr2 = run(comps, x0, SolveConfig(1.2, DiminishingStep(0.5), Shuffled(4), NONNEG, 4))
    np.testing.assert_allclose(tr.x, tr2.x, atol=1e-13)


def test_damped_art_limit_is_art():
    A, b, x0 = _system(4)
    x_art, x_d = x0.copy(), x0.copy()
    for _ in range(3):
        for i in range(A.nrows):
            o = np.array([i])
            x_art = art_sweep(A, b, x_art, 1.0, order=o)
            x_d = damped_art_sweep(A, b, x_d, 1.0, 1e12, order=o)
            assert np.max(np.abs(x_art - x_d)) <= 1e-6


def test_damped_block_limit_is_pseudoinverse():
    r = np.random.default_rng(5)
    M = r.standard_normal((6, 12))
    b, x = r.standard_normal(6), r.standard_normal(12)
    A = SparseMatrix.from_dense(M)
    P = BlockPartition.from_sizes([6])
    pinv = x - np.linalg.pinv(M) @ (M @ x - b)
    np.testing.assert_allclose(block_kaczmarz_sweep(A, b, P, x, 1.0, 1e12), pinv, atol=1e-5)
    np.testing.assert_allclose(block_kaczmarz_sweep(A, b, P, x, 1.0), pinv, atol=1e-10)


def test_undamped_block_rank_deficient():
    r = np.random.default_rng(6)
    M = r.standard_normal((3, 8))
    M[2] = 2 * M[0]
    A = SparseMatrix.from_dense(M)
    with pytest.raises(RankDeficientBlockError):
        block_kaczmarz_sweep(A, np.ones(3), BlockPartition.from_sizes([3]), np.zeros(8), 1.0)
    block_kaczmarz_sweep(A, np.ones(3), BlockPartition.from_sizes([3]), np.zeros(8), 1.0, t=1.0)


def test_block_cap_and_partition_checks():
    A, b, x0 = _system(7)
    with pytest.raises(ValueError):
        block_kaczmarz_sweep(A, b, BlockPartition.from_sizes([30]), x0, 1.0, 1.0, cap=10)
    with pytest.raises(DimensionError):
        block_kaczmarz_sweep(A, b, BlockPartition.from_sizes([10]), x0, 1.0, 1.0)


def test_block_tv_matches_generic_ripg():
    r = np.random.default_rng(8)
    N = 5
    M = r.standard_normal((12, N * N))
    A, b = SparseMatrix.from_dense(M), r.standard_normal(12)
    D = build_diff_operator(N, N)
    P = BlockPartition.uniform(12, 4)
    lam, tau, t, rho = 0.6, 1e-2, 0.3, 1.2
    x0 = r.standard_normal(N * N)
    h = ScaledTVSmooth(D, lam / 4, tau)
    comps = [ComponentSpec(BlockLeastSquares(A.rows(*P.bounds(i)), b[slice(*P.bounds(i))]), h) for i in range(4)]
    for variant, step in (("ripg1", ripg1_step), ("ripg2", ripg2_step)):
        got = block_tv_sweep(A, b, P, x0, rho, t, lam, D, tau, NONNEG, variant=variant)
        x = x0
        for c in comps:
            x, _, _ = step(x, c, t, rho, NONNEG)
        np.testing.assert_allclose(got, x, atol=1e-13)


def test_block_tv_prox_mode_runs_and_reduces_tv():
    r = np.random.default_rng(9)
    N = 6
    A = SparseMatrix.from_dense(r.standard_normal((12, N * N)))
    b = r.standard_normal(12)
    D = build_diff_operator(N, N)
    P = BlockPartition.uniform(12, 3)
    x1 = block_tv_sweep(A, b, P, np.zeros(N * N), 1.0, 0.1, 0.0, D, 1e-3)
    x2 = block_tv_sweep(A, b, P, np.zeros(N * N), 1.0, 0.1, 5.0, D, 1e-3, tv_mode="prox")
    from rowprox.tv import tv_seminorm
    assert tv_seminorm(D, x2) < tv_seminorm(D, x1)
    with pytest.raises(ValueError):
        block_tv_sweep(A, b, P, np.zeros(N * N), 1.0, 0.1, 1.0, D, 1e-3, tv_mode="other")


def test_column_equilibration():
    M = np.array([[1.0, 0.0, 3.0], [2.0, -4.0, 0.0]])
    A = SparseMatrix.from_dense(M)
    np.testing.assert_allclose(build_column_equilibration(A, 2).diag, 1 / np.linalg.norm(M, axis=0))
    np.testing.assert_allclose(build_column_equilibration(A, 1).diag, 1 / np.abs(M).sum(axis=0))
    np.testing.assert_allclose(build_column_equilibration(A, np.inf).diag, 1 / np.abs(M).max(axis=0))
    with pytest.raises(ValueError, match=r"\[1\]"):
        build_column_equilibration(SparseMatrix.from_dense(np.array([[1.0, 0.0]])))
    with pytest.raises(ValueError):
        build_column_equilibration(A, 3)


def test_preconditioned_identity_reduces_to_damped_art():
    A, b, x0 = _system(10)
    got = preconditioned_ripg1_sweep(A, b, Preconditioner.identity(20), x0, 1.1, 0.4, 0.0, None, 1e-3)
    np.testing.assert_allclose(got, damped_art_sweep(A, b, x0, 1.1, 0.4), atol=1e-13)


def test_preconditioned_scalar_equals_rescaled_step():
    # T = c I in x-space is plain R-IPG1 with step c^2 t
    r = np.random.default_rng(11)
    N = 4
    A = SparseMatrix.from_dense(r.standard_normal((10, N * N)))
    b = r.standard_normal(10)
    D = build_diff_operator(N, N)
    x0 = r.standard_normal(N * N)
    c, t, lam = 0.7, 0.3, 0.5
    got = preconditioned_ripg1_sweep(A, b, np.full(N * N, c), x0, 1.0, t, lam, D, 1e-2)
    h = ScaledTVSmooth(D, lam / 10, 1e-2)
    comps = [ComponentSpec(QuadraticResidual(A.row(i), b[i]), h) for i in range(10)]
    ref = run(comps, x0, SolveConfig(1.0, ConstantStep(c * c * t), cycles=1)).x
    np.testing.assert_allclose(got, ref, atol=1e-12)


def test_preconditioned_equals_scaled_problem():
    # x = T u: R-IPG1 on the column-scaled matrix A T, mapped back
    r = np.random.default_rng(12)
    M = r.standard_normal((8, 5))
    b, u0 = r.standard_normal(8), r.standard_normal(5)
    T = r.uniform(0.5, 2.0, 5)
    got = preconditioned_ripg1_sweep(SparseMatrix.from_dense(M), b, T, T * u0, 1.0, 0.6, 0.0, None, 1e-3)
    u = damped_art_sweep(SparseMatrix.from_dense(M * T), b, u0, 1.0, 0.6)
    np.testing.assert_allclose(got, T * u, atol=1e-12)


def test_preconditioned_rejects_unsupported():
    A, b, x0 = _system(13)
    with pytest.raises(UnsupportedConfigurationError):
        preconditioned_ripg1_sweep(A, b, np.eye(20), x0, 1.0, 1.0, 0.0, None, 1e-3)
    with pytest.raises(UnsupportedConfigurationError):
        preconditioned_ripg1_sweep(A, b, np.ones(20), x0, 1.0, 1.0, 0.0, None, 1e-3, C="ball")


def test_method_spec_validation():
    with pytest.raises(ValueError):
        MethodSpec("sirt")
    with pytest.raises(ValueError):
        MethodSpec("huber-art")
    with pytest.raises(ValueError):
        MethodSpec("art", rho=0.0)


def test_method_objectives():
    A, b, x0 = _system(14)
    M = A.toarray()
    r = M @ x0 - b
    assert method_objective(MethodSpec("art"), A, b)(x0) == pytest.approx(0.5 * r @ r)
    assert method_objective(MethodSpec("l1-art"), A, b)(x0) == pytest.approx(np.abs(r).sum())
    nr = np.linalg.norm(M, axis=1)
    assert method_objective(MethodSpec("dist-art"), A, b)(x0) == pytest.approx(np.sum(np.abs(r) / nr))


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_reconstruct_divergence_handling():
    A = SparseMatrix.from_dense(np.array([[1.0, 0.0], [0.0, 1.0]]))
    b = np.array([1e308, 1e308])  # overflow on the first row
    spec = MethodSpec("damped-art", rho=1.9, schedule=ConstantStep(1e300))
    tr = reconstruct(A, b, spec, 3, x0=np.array([-1e308, -1e308]), stop_on_divergence=True)
    assert tr.diverged_at == 0 and np.all(np.isfinite(tr.x))
    with pytest.raises(DivergenceError):
        reconstruct(A, b, spec, 3, x0=np.array([-1e308, -1e308]))


def test_reconstruct_requires_partition():
    A, b, _ = _system(15)
    with pytest.raises(ValueError):
        reconstruct(A, b, MethodSpec("damped-block"), 1)
