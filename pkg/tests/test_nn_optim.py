import numpy as np
import pytest

from gridcaps.errors import TrainingError
from gridcaps.nn.optim import Adam, SGD, make_optimizer
from gridcaps.nn.tensor import Tensor


def param(value, grad):
    t = Tensor(np.asarray(value, dtype=np.float64))
    t.grad = np.asarray(grad, dtype=np.float64)
    return t


class TestSGD:
    def test_basic_step(self):
        p = param([1.0], [2.0])
        SGD(lr=0.1).step([("w", p)])
        assert p.values[0] == pytest.approx(0.8)

    def test_zero_grad_no_change(self):
        p = param([1.5], [0.0])
        SGD(lr=0.1).step([("w", p)])
        assert p.values[0] == 1.5

    def test_non_finite_grad_raises(self):
        p = param([1.0], [np.nan])
        with pytest.raises(TrainingError, match="batch 3"):
            SGD(lr=0.1).step([("w", p)], batch_index=3)


class TestAdam:
    def test_first_step_magnitude_is_lr(self):
        """Bias correction makes the first update lr-sized for any grad scale."""
        for g in (2.0, -3.0, 50.0, -0.5):
            p = param([1.0], [g])
            Adam(lr=1e-3).step([("w", p)])
            step = abs(p.values[0] - 1.0)
            assert step == pytest.approx(1e-3, abs=1e-9)
            assert np.sign(1.0 - p.values[0]) == np.sign(g)

    def test_state_is_per_parameter(self):
        a, b = param([0.0], [1.0]), param([0.0], [1.0])
        opt = Adam(lr=0.01)
        opt.step([("a", a), ("b", b)])
        opt.step([("a", a), ("b", b)])
        assert a.values[0] == pytest.approx(b.values[0])

    def test_converges_on_quadratic(self):
        p = param([5.0], [0.0])
        opt = Adam(lr=0.1)
        for _ in range(300):
            p.grad = 2.0 * p.values
            opt.step([("w", p)])
        assert abs(p.values[0]) < 1e-2

    def test_non_finite_grad_raises(self):
        p = param([1.0], [np.inf])
        with pytest.raises(TrainingError):
            Adam().step([("w", p)])


def test_make_optimizer():
    assert isinstance(make_optimizer("adam", 1e-3), Adam)
    assert isinstance(make_optimizer("sgd", 0.1), SGD)
    with pytest.raises(TrainingError):
        make_optimizer("lbfgs", 1.0)
