import json

import numpy as np
import pytest

from weightcdr.cdr import CdrPolicy, PolicyKind, apply_policy
from weightcdr.containers import load_container
from weightcdr.errors import ShapeMismatch
from weightcdr.mlp import Activation, DriftReport, MlpLayer, MlpModel, drift, drift_inputs, forward
from weightcdr.rng import fnv1a64, random_bytes, uniform_f32
from weightcdr.stego import AttackSpec, embed


def _layer(w, b, act=Activation.NONE):
    return MlpLayer(
        weights=np.asarray(w, np.float32), bias=np.asarray(b, np.float32), activation=act
    )


def test_identity_model_passes_input_through():
    model = MlpModel((_layer(np.eye(5), np.zeros(5)),))
    x = uniform_f32(3, 5)
    assert np.array_equal(forward(model, x), x)


def test_single_neuron_hand_arithmetic():
    model = MlpModel(
        (
            _layer([[2.0, 3.0]], [1.0], Activation.RELU),
            _layer([[1.0]], [0.0]),
        )
    )
    assert forward(model, np.array([1.0, 1.0], np.float32)).tolist() == [6.0]


def test_relu_clamps_negatives():
    model = MlpModel(
        (
            _layer([[1.0]], [-5.0], Activation.RELU),
            _layer([[1.0]], [0.0]),
        )
    )
    assert forward(model, np.array([2.0], np.float32)).tolist() == [0.0]


def test_shape_validation():
    with pytest.raises(ShapeMismatch):
        MlpModel((_layer([[1.0, 2.0]], [0.0], Activation.RELU), _layer([[1.0, 1.0]], [0.0])))
    with pytest.raises(ShapeMismatch):
        MlpModel((_layer([[1.0]], [0.0], Activation.RELU),))  # final layer must be NONE
    model = MlpModel((_layer(np.eye(3), np.zeros(3)),))
    with pytest.raises(ShapeMismatch):
        forward(model, np.zeros(4, np.float32))


def _straight_line_forward(model: MlpModel, x: np.ndarray) -> list[float]:
    # Independent oracle: plain Python loops, float64 accumulation, float32
    # rounding per layer. No numpy linear algebra involved.
    h = [float(v) for v in x]
    for layer in model.layers:
        outs = []
        for row, bias in zip(layer.weights, layer.bias):
            acc = 0.0
            for w, v in zip(row, h):
                acc += float(w) * float(v)
            acc += float(bias)
            out = float(np.float32(acc))
            if layer.activation is Activation.RELU and out < 0.0:
                out = 0.0
            outs.append(out)
        h = outs
    return h


def test_golden_logits_and_independent_oracle(fixtures_dir):
    doc = json.loads((fixtures_dir / "golden_logits.json").read_text())
    model = MlpModel.from_container(load_container(fixtures_dir / "mlp_784x128x64x10.safetensors"))
    assert [layer.weights.shape for layer in model.layers] == [(128, 784), (64, 128), (10, 64)]
    x = uniform_f32(doc["input_seed"] ^ fnv1a64("golden-input"), doc["dims"][0])
    logits = forward(model, x)
    assert [float(v) for v in logits] == doc["logits"]
    assert _straight_line_forward(model, x) == doc["logits"]


def test_container_round_trip_preserves_model(fixtures_dir):
    model = MlpModel.from_container(load_container(fixtures_dir / "mlp_784x128x64x10.safetensors"))
    again = MlpModel.from_container(model.to_container())
    for a, b in zip(model.layers, again.layers):
        assert np.array_equal(a.weights, b.weights)
        assert np.array_equal(a.bias, b.bias)
        assert a.activation == b.activation


def test_drift_identity_is_exact(fixtures_dir):
    model = MlpModel.from_container(load_container(fixtures_dir / "mlp_784x128x64x10.safetensors"))
    report = drift(model, model, n_inputs=8, seed=7)
    assert report == DriftReport(top1_agreement=1.0, mean_rel_l2=0.0)


def test_drift_inputs_are_stable():
    a = drift_inputs(7, 3, 16)
    b = drift_inputs(7, 3, 16)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))


def test_hbla_attacked_fixture_drift(fixtures_dir):
    c = load_container(fixtures_dir / "mlp_784x128x64x10.safetensors")
    ref = MlpModel.from_container(c)
    attacked = embed(c, random_bytes(2024, 4096), AttackSpec.for_container(c, 4))
    report = drift(ref, MlpModel.from_container(attacked), n_inputs=32, seed=7)
    # regression: agreement measured once on the frozen fixture
    assert report.top1_agreement == 1.0
    # three-layer compounding of the per-weight bound, with a 10x margin
    assert report.mean_rel_l2 <= 10 * (2**4 - 1) / 2**23


def test_disarm_drift_ordering(fixtures_dir):
    c = load_container(fixtures_dir / "mlp_784x128x64x10.safetensors")
    ref = MlpModel.from_container(c)

    def disarmed_drift(policy: CdrPolicy) -> float:
        out = apply_policy(c, policy).container
        return drift(ref, MlpModel.from_container(out), n_inputs=32, seed=7).mean_rel_l2

    flp = disarmed_drift(CdrPolicy(PolicyKind.FLP, seed=11))
    qint8 = disarmed_drift(CdrPolicy(PolicyKind.QINT8))
    assert flp > qint8
    for k in (1, 5, 10):
        assert flp > disarmed_drift(CdrPolicy(PolicyKind.KLRBP, k=k, seed=11))
