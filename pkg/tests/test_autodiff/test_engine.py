import threading

import numpy as np
import pytest

from shield_patcher.autodiff import Tape, Tensor, evaluate, finite_difference_gradient, gradient, ops
from shield_patcher.utils.exceptions import InvalidInputError, NumericalError, ShapeError


def _check_against_fd(graph, point: np.ndarray, atol: float = 1e-6):
    x = Tensor(point, requires_grad=True)
    out = evaluate(graph, {"x": x})
    exact = gradient(out, [x])[x]
    approx = finite_difference_gradient(lambda t: graph(t), Tensor(point), step=1e-6)
    np.testing.assert_allclose(exact, approx.data, atol=atol, rtol=1e-5)


def test_gradient_of_elementwise_product_is_other_operand():
    a = Tensor([1.0, 2.0, 3.0], requires_grad=True)
    b = Tensor([4.0, 5.0, 6.0], requires_grad=True)
    out = evaluate(lambda a, b: ops.sum(a * b), {"a": a, "b": b})
    grads = gradient(out, [a, b])
    np.testing.assert_allclose(grads[a], [4.0, 5.0, 6.0])
    np.testing.assert_allclose(grads[b], [1.0, 2.0, 3.0])
    assert out.item() == pytest.approx(32.0)


def test_broadcast_bias_gradient_sums_rows():
    x = Tensor(np.ones((2, 3)))
    bias = Tensor(np.zeros(3), requires_grad=True)
    out = evaluate(lambda x, bias: ops.sum(x + bias), {"x": x, "bias": bias})
    np.testing.assert_allclose(gradient(out, [bias])[bias], [2.0, 2.0, 2.0])


def test_reused_tensor_accumulates_gradient():
    x = Tensor(3.0, requires_grad=True)
    out = evaluate(lambda x: x * x + x, {"x": x})
    assert gradient(out, [x])[x] == pytest.approx(7.0)


@pytest.mark.parametrize("graph", [
    lambda x: ops.sum(ops.softmax(x, axis=-1) * np.array([[1.0, -2.0, 0.5]])),
    lambda x: ops.sum(ops.log_softmax(x, axis=-1) * np.array([[0.3, 0.2, 0.5]])),
    lambda x: ops.nll(x, [2]),
    lambda x: ops.sum(ops.relu(x) * ops.exp(ops.scale(x, 0.5))),
    lambda x: ops.mean(ops.matmul(x, np.array([[1.0], [2.0], [-1.0]]))),
    lambda x: ops.sum(ops.max(ops.concat([x, ops.neg(x)], axis=0), axis=0)),
])
def test_reverse_mode_matches_finite_differences(graph):
    _check_against_fd(graph, np.array([[0.3, -1.2, 0.8]]))


def test_unfold_gradient_matches_finite_differences():
    weights = np.arange(24, dtype=float).reshape(1, 3, 8) / 10.0
    _check_against_fd(lambda x: ops.sum(ops.unfold1d(x, 2) * weights), np.random.default_rng(0).normal(size=(1, 4, 4)))


def test_embedding_gradient_accumulates_repeated_ids():
    weight = Tensor(np.ones((4, 2)), requires_grad=True)
    out = evaluate(lambda weight: ops.sum(ops.embedding(weight, np.array([[1, 1, 3]]))), {"weight": weight})
    grad = gradient(out, [weight])[weight]
    np.testing.assert_allclose(grad, [[0, 0], [2, 2], [0, 0], [1, 1]])


def test_max_routes_gradient_to_first_maximum():
    x = Tensor([[2.0, 2.0, 1.0]], requires_grad=True)
    out = evaluate(lambda x: ops.sum(ops.max(x, axis=-1)), {"x": x})
    np.testing.assert_allclose(gradient(out, [x])[x], [[1.0, 0.0, 0.0]])


def test_tensor_off_the_path_gets_zero_gradient():
    x = Tensor([1.0, 2.0], requires_grad=True)
    unused = Tensor([[5.0]], requires_grad=True)
    out = evaluate(lambda x, unused: ops.sum(x), {"x": x, "unused": unused})
    grads = gradient(out, [x, unused])
    np.testing.assert_allclose(grads[unused], np.zeros((1, 1)))
    assert unused.grad is not None


def test_unknown_input_name_is_rejected():
    with pytest.raises(InvalidInputError, match="Unknown input"):
        evaluate(lambda x: ops.sum(x), {"x": Tensor([1.0]), "y": Tensor([2.0])})


def test_unbound_input_name_is_rejected():
    with pytest.raises(InvalidInputError, match="Unbound input"):
        evaluate(lambda x, y: ops.sum(x + y), {"x": Tensor([1.0])})


def test_non_scalar_output_is_rejected():
    x = Tensor([1.0, 2.0], requires_grad=True)
    out = evaluate(lambda x: x * 2.0, {"x": x})
    with pytest.raises(InvalidInputError, match="scalar"):
        gradient(out, [x])


def test_shape_mismatch_names_operation():
    with pytest.raises(ShapeError) as excinfo:
        ops.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))
    assert excinfo.value.op == "matmul"
    assert (2, 3) in excinfo.value.shapes


def test_nothing_is_recorded_without_a_tape():
    x = Tensor([1.0], requires_grad=True)
    out = x * 3.0
    assert out.tape is None
    assert not out.requires_grad


def test_overflow_from_finite_inputs_raises():
    with pytest.raises(NumericalError):
        ops.exp(Tensor([1000.0]))


def test_finite_difference_reports_non_finite_coordinate():
    def loss(t):
        return float("nan") if t.data[1] > 0.5 else float(np.sum(t.data))

    with pytest.raises(NumericalError) as excinfo:
        finite_difference_gradient(loss, Tensor([0.0, 0.5]), step=0.1)
    assert excinfo.value.index == 1


def test_tapes_are_isolated_between_threads():
    lengths = {}

    def record(name, n):
        x = Tensor([1.0], requires_grad=True)
        with Tape() as tape:
            y = x
            for _ in range(n):
                y = y * 2.0
        lengths[name] = len(tape)

    threads = [threading.Thread(target=record, args=(i, i + 1)) for i in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert lengths == {0: 1, 1: 2, 2: 3, 3: 4}


def _random_graph(rng: np.random.Generator, depth: int = 4):
    """A seeded chain of smooth primitives on a (2, 3) input, reduced to a scalar."""
    steps = []
    for _ in range(depth):
        kind = int(rng.integers(6))
        if kind == 0:
            w = rng.normal(scale=0.6, size=(3, 3))
            steps.append(lambda t, w=w: ops.matmul(t, w))
        elif kind == 1:
            bias = rng.normal(size=3)
            steps.append(lambda t, bias=bias: ops.add(t, bias))
        elif kind == 2:
            steps.append(lambda t: ops.softmax(t, axis=-1))
        elif kind == 3:
            steps.append(lambda t: ops.log_softmax(t, axis=-1))
        elif kind == 4:
            steps.append(lambda t: ops.exp(ops.scale(t, 0.3)))
        else:
            steps.append(lambda t: ops.mul(t, ops.sub(t, 0.5)))
    weights = rng.normal(size=(2, 3))

    def graph(x):
        for step in steps:
            x = step(x)
        return ops.sum(ops.mul(x, weights))

    return graph


@pytest.mark.parametrize("seed", range(10))
def test_random_graphs_match_finite_differences(seed):
    rng = np.random.default_rng(seed)
    graph = _random_graph(rng, depth=int(rng.integers(2, 6)))
    _check_against_fd(graph, rng.normal(size=(2, 3)), atol=1e-5)


@pytest.mark.parametrize("seed", range(5))
def test_backward_is_linear_in_the_output(seed):
    rng = np.random.default_rng(100 + seed)
    f, g = _random_graph(rng), _random_graph(rng)
    a, b = rng.normal(size=2)
    point = rng.normal(size=(2, 3))

    def grad_of(graph):
        x = Tensor(point, requires_grad=True)
        return gradient(evaluate(graph, {"x": x}), [x])[x]

    combined = grad_of(lambda x: ops.add(ops.scale(f(x), a), ops.scale(g(x), b)))
    np.testing.assert_allclose(combined, a * grad_of(f) + b * grad_of(g), atol=1e-10)
