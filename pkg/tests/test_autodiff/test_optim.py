import numpy as np
import pytest

from shield_patcher.autodiff import AdamState, Tensor, adam_step, clip_global_norm, global_norm
from shield_patcher.utils.exceptions import InvalidInputError, ShapeError


def test_first_adam_step_moves_each_coordinate_by_lr():
    p = Tensor([1.0, -1.0, 0.5], requires_grad=True)
    state = AdamState.for_params([p], lr=0.01)
    adam_step([p], [np.array([2.0, -3.0, 0.1])], state)
    np.testing.assert_allclose(p.data, [0.99, -0.99, 0.49], atol=1e-6)
    assert state.step == 1


def test_adam_minimizes_a_quadratic():
    p = Tensor([3.0, -2.0], requires_grad=True)
    state = AdamState.for_params([p], lr=0.05)
    for _ in range(1000):
        adam_step([p], {p: 2.0 * p.data}, state)
    np.testing.assert_allclose(p.data, [0.0, 0.0], atol=5e-2)


def test_adam_rejects_mismatched_gradient():
    p = Tensor(np.zeros((2, 2)), requires_grad=True)
    with pytest.raises(ShapeError):
        adam_step([p], [np.zeros(3)], AdamState())


def test_adam_refuses_frozen_parameter():
    p = Tensor([1.0], requires_grad=True)
    p.data.setflags(write=False)
    with pytest.raises(InvalidInputError, match="read-only"):
        adam_step([p], [np.array([1.0])], AdamState())


def test_clip_scales_to_max_norm():
    clipped = clip_global_norm([np.array([3.0]), np.array([4.0])], 1.0)
    np.testing.assert_allclose(np.concatenate(clipped), [0.6, 0.8])
    assert global_norm(clipped) == pytest.approx(1.0)


def test_clip_leaves_small_gradients_untouched():
    grads = [np.array([0.3, 0.4])]
    assert clip_global_norm(grads, 1.0) is grads


def test_clip_rejects_non_positive_norm():
    with pytest.raises(InvalidInputError):
        clip_global_norm([np.ones(2)], 0.0)
