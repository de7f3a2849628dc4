"""Backend parity: the compiled extension and the NumPy fallback must be
bit-identical, not merely close, so either can serve as the reference."""
import os
import subprocess
import sys

import numpy as np
import pytest

from oslk._kernels import _pure, backend
from oslk.geometry import Box3D, bev_corners

from oracles import random_box

try:
    from oslk._kernels import _core
except ImportError:
    _core = None

needs_compiled = pytest.mark.skipif(_core is None, reason="compiled extension not built")


def corner_stack(rng, n):
    return np.array(
        [bev_corners(random_box(rng, center_spread=4.0)) for _ in range(n)]
    )


class TestBackendSelection:
    def test_backend_reports_a_known_name(self):
        assert backend() in ("compiled", "pure")

    def test_force_pure_env(self):
        code = (
            "import oslk._kernels as k; print(k.backend())"
        )
        env = dict(os.environ, OSLK_FORCE_PURE="1")
        out = subprocess.run(
            [sys.executable, "-c", code], env=env, capture_output=True, text=True
        )
        assert out.returncode == 0
        assert out.stdout.strip() == "pure"

    def test_force_pure_never_loads_extension(self):
        # the fallback must work in a process that never touches the extension
        code = (
            "import sys\n"
            "import oslk._kernels as k\n"
            "assert 'oslk._kernels._core' not in sys.modules\n"
            "import numpy as np\n"
            "sq = np.array([[1.0, 1.0], [-1.0, 1.0], [-1.0, -1.0], [1.0, -1.0]])\n"
            "print(k.rect_intersection_area(sq, sq))\n"
        )
        env = dict(os.environ, OSLK_FORCE_PURE="1")
        out = subprocess.run(
            [sys.executable, "-c", code], env=env, capture_output=True, text=True
        )
        assert out.returncode == 0, out.stderr
        assert float(out.stdout.strip()) == 4.0


@needs_compiled
class TestRectParity:
    def test_scalar_areas_bitwise(self):
        rng = np.random.default_rng(100)
        for _ in range(500):
            a = bev_corners(random_box(rng, center_spread=3.0))
            b = bev_corners(random_box(rng, center_spread=3.0))
            assert _core.rect_intersection_area(a, b) == _pure.rect_intersection_area(a, b)

    def test_degenerate_and_touching(self):
        sq = np.array([[1.0, 1.0], [-1.0, 1.0], [-1.0, -1.0], [1.0, -1.0]])
        shifted = sq + np.array([2.0, 0.0])  # shares one edge
        far = sq + np.array([10.0, 0.0])
        for a, b in [(sq, sq), (sq, shifted), (sq, far)]:
            assert _core.rect_intersection_area(a, b) == _pure.rect_intersection_area(a, b)

    def test_pairwise_bitwise(self):
        rng = np.random.default_rng(101)
        A = corner_stack(rng, 23)
        B = corner_stack(rng, 17)
        got_core = _core.pairwise_rect_intersection_area(A, B)
        got_pure = _pure.pairwise_rect_intersection_area(A, B)
        assert np.array_equal(got_core, got_pure)

    def test_pairwise_empty(self):
        empty = np.zeros((0, 4, 2))
        rng = np.random.default_rng(102)
        B = corner_stack(rng, 3)
        assert _core.pairwise_rect_intersection_area(empty, B).shape == (0, 3)
        assert _pure.pairwise_rect_intersection_area(empty, B).shape == (0, 3)


@needs_compiled
class TestLapParity:
    @pytest.mark.parametrize("seed", range(6))
    def test_random_float_matrices(self, seed):
        rng = np.random.default_rng(200 + seed)
        for _ in range(50):
            m = int(rng.integers(1, 8))
            n = int(rng.integers(m, 9))
            costs = rng.uniform(0.0, 10.0, size=(m, n))
            r_c, u_c, v_c = _core.lap_solve(costs)
            r_p, u_p, v_p = _pure.lap_solve(costs)
            assert np.array_equal(r_c, r_p)
            assert np.array_equal(u_c, u_p)  # bitwise: same arithmetic order
            assert np.array_equal(v_c, v_p)

    def test_tie_heavy_integer_matrices(self):
        rng = np.random.default_rng(300)
        for _ in range(300):
            m = int(rng.integers(1, 6))
            n = int(rng.integers(m, 7))
            costs = rng.integers(0, 3, size=(m, n)).astype(np.float64)
            r_c, u_c, v_c = _core.lap_solve(costs)
            r_p, u_p, v_p = _pure.lap_solve(costs)
            assert np.array_equal(r_c, r_p)
            assert np.array_equal(u_c, u_p)
            assert np.array_equal(v_c, v_p)

    def test_single_cell(self):
        costs = np.array([[3.5]])
        assert _core.lap_solve(costs)[0].tolist() == _pure.lap_solve(costs)[0].tolist() == [0]

    def test_duals_certify_optimality(self):
        # complementary slackness: assigned edges have ~zero reduced cost
        rng = np.random.default_rng(400)
        costs = rng.uniform(0.0, 5.0, size=(6, 9))
        for impl in (_core, _pure):
            row_to_col, u, v = impl.lap_solve(costs)
            for i, j in enumerate(row_to_col):
                assert abs(costs[i, j] - u[i] - v[j]) < 1e-9
            slack = costs - u[:, None] - v[None, :]
            assert slack.min() > -1e-9
