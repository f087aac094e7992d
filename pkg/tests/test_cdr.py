import numpy as np
import pytest

from conftest import normal_f32, random_container
from weightcdr.cdr import (
    CdrPolicy,
    PolicyKind,
    QuantOutput,
    apply_policy,
    cdr_flp,
    cdr_klrbp,
    cdr_qint8,
    dequantize_array,
    quantize_array,
)
from weightcdr.containers import ContainerFormat, ModelContainer, parse_container, serialize_container
from weightcdr.errors import EmptySelection
from weightcdr.floatbits import MANTISSA_MASK, SIGN_EXPONENT_MASK
from weightcdr.rng import SplitMix64, element_seeds, random_bytes
from weightcdr.stego import AttackSpec, ExtractionOutcome, embed, extract


def _flp_reference(word: int, seed: int) -> int:
    z = SplitMix64(seed).next_u64()
    return (word & SIGN_EXPONENT_MASK) | (z & MANTISSA_MASK)


def _klrbp_reference(word: int, seed: int, k: int) -> int:
    s = SplitMix64(seed)
    chosen: list[int] = []
    while len(chosen) < k:
        r = s.next_u64() % 23
        if r not in chosen:
            chosen.append(r)
    value = s.next_u64()
    for j, pos in enumerate(chosen):
        bit = (value >> j) & 1
        word = (word & ~(1 << pos)) | (bit << pos)
    return word


def test_flp_matches_scalar_reference():
    c = random_container(3, [257])
    out = cdr_flp(c, CdrPolicy(PolicyKind.FLP, seed=77))
    seeds = element_seeds(77, "t0", 257)
    before = c.tensor("t0").as_u32()
    after = out.tensor("t0").as_u32()
    for i in range(257):
        assert int(after[i]) == _flp_reference(int(before[i]), int(seeds[i]))


@pytest.mark.parametrize("k", [1, 5, 10, 23])
def test_klrbp_matches_scalar_reference(k):
    c = random_container(4, [193])
    out = cdr_klrbp(c, CdrPolicy(PolicyKind.KLRBP, k=k, seed=31))
    seeds = element_seeds(31, "t0", 193)
    before = c.tensor("t0").as_u32()
    after = out.tensor("t0").as_u32()
    for i in range(193):
        assert int(after[i]) == _klrbp_reference(int(before[i]), int(seeds[i]), k)


def test_flp_never_touches_sign_or_exponent():
    # include NaN / Inf / zero words: the transform is pure bit manipulation
    words = np.array([0x7FC00001, 0xFF800000, 0x00000000, 0x3F800000, 0x80000001], np.uint32)
    c = ModelContainer.from_arrays({"w": words.view(np.float32)})
    out = cdr_flp(c, CdrPolicy(PolicyKind.FLP, seed=5))
    diff = out.tensor("w").as_u32() ^ words
    assert int(np.count_nonzero(diff & np.uint32(SIGN_EXPONENT_MASK))) == 0


def test_flp_mantissa_bits_are_balanced():
    # >= 10**7 replaced bits; a fair PRNG keeps the set fraction within 1e-3
    n = 500_000
    c = random_container(9, [n])
    out = cdr_flp(c, CdrPolicy(PolicyKind.FLP, seed=123))
    mantissas = out.tensor("t0").as_u32() & np.uint32(MANTISSA_MASK)
    bits = np.unpackbits(mantissas.astype(">u4").view(np.uint8).reshape(-1, 4), axis=1)[:, 9:]
    frac = float(bits.mean())
    assert 0.499 <= frac <= 0.501


def test_klrbp_k1_changes_at_most_one_bit():
    n = 1_000_000
    c = random_container(10, [n])
    out = cdr_klrbp(c, CdrPolicy(PolicyKind.KLRBP, k=1, seed=3))
    diff = c.tensor("t0").as_u32() ^ out.tensor("t0").as_u32()
    assert int(np.count_nonzero(diff & np.uint32(SIGN_EXPONENT_MASK))) == 0
    changed_bits = np.unpackbits(diff.astype(">u4").view(np.uint8).reshape(-1, 4), axis=1).sum(axis=1)
    assert set(np.unique(changed_bits)) <= {0, 1}
    mean = float(changed_bits.mean())
    assert abs(mean - 0.5) < 0.005  # each chosen bit flips with probability 1/2


def test_klrbp_k23_bit_fraction_matches_flp_distribution():
    n = 500_000
    c = random_container(12, [n])
    out = cdr_klrbp(c, CdrPolicy(PolicyKind.KLRBP, k=23, seed=3))
    mantissas = out.tensor("t0").as_u32() & np.uint32(MANTISSA_MASK)
    bits = np.unpackbits(mantissas.astype(">u4").view(np.uint8).reshape(-1, 4), axis=1)[:, 9:]
    assert 0.499 <= float(bits.mean()) <= 0.501


def test_klrbp_relative_bound_on_normals():
    x = normal_f32(6, 200_000)
    c = ModelContainer.from_arrays({"w": x})
    out = cdr_klrbp(c, CdrPolicy(PolicyKind.KLRBP, k=23, seed=8))
    y = out.tensor("w").as_f32()
    rel = np.abs(y.astype(np.float64) - x.astype(np.float64)) / np.abs(x.astype(np.float64))
    assert float(rel.max()) <= (2**23 - 1) / 2**23
    # elements whose changed bits all sit below bit 12 obey the tighter bound
    diff = c.tensor("w").as_u32() ^ out.tensor("w").as_u32()
    low_only = (diff != 0) & (diff < np.uint32(2**12))
    assert np.all(rel[low_only] <= (2**12 - 1) / 2**23)


def test_substitution_is_deterministic_and_seed_sensitive():
    c = random_container(17, [4096])
    p = CdrPolicy(PolicyKind.KLRBP, k=5, seed=1000)
    a = serialize_container(cdr_klrbp(c, p))
    b = serialize_container(cdr_klrbp(c, p))
    assert a == b
    other = serialize_container(cdr_klrbp(c, CdrPolicy(PolicyKind.KLRBP, k=5, seed=1001)))
    assert other != a


def test_disarm_breaks_extraction():
    c = random_container(30, [6000])
    spec = AttackSpec.for_container(c, 4)
    payload = random_bytes(77, 1024)
    attacked = embed(c, payload, spec)
    for policy in (
        CdrPolicy(PolicyKind.FLP, seed=1),
        CdrPolicy(PolicyKind.KLRBP, k=1, seed=1),
        CdrPolicy(PolicyKind.QINT8),
    ):
        cleaned = apply_policy(attacked, policy).container
        result = extract(cleaned, spec)
        assert result.outcome in (
            ExtractionOutcome.NO_FRAME,
            ExtractionOutcome.DIGEST_MISMATCH,
            ExtractionOutcome.LENGTH_OVERRUN,
        )


# --------------------------------------------------------------------------- #
# Qint8
# --------------------------------------------------------------------------- #

def test_quantize_hand_example():
    x = np.array([-1.0, 0.5, 1.0], np.float32)
    q, params, nonfinite = quantize_array(x)
    assert nonfinite == 0
    assert params.amax == 1.0
    assert params.scale == 1.0 / 128.0
    assert q.tolist() == [-128, 64, 127]  # 1.0/scale = 128, clipped
    assert dequantize_array(q, params).tolist() == [-1.0, 0.5, 0.9921875]


def test_quantize_round_half_away_from_zero():
    # scale = 1 so values quantize to round(x) with ties away from zero
    x = np.array([2.5, -2.5, 0.5, -0.5, 128.0], np.float32)
    q, params, _ = quantize_array(x)
    assert params.scale == 1.0
    assert q.tolist() == [3, -3, 1, -1, 127]


def test_quantize_all_zero_tensor():
    q, params, _ = quantize_array(np.zeros(16, np.float32))
    assert params.amax == 0.0 and params.scale == 0.0
    assert not q.any()
    assert not dequantize_array(q, params).any()


def test_quantize_nonfinite_excluded_and_zeroed():
    x = np.array([1.0, np.nan, np.inf, -np.inf, -2.0], np.float32)
    q, params, nonfinite = quantize_array(x)
    assert nonfinite == 3
    assert params.amax == 2.0
    assert q[1] == q[2] == q[3] == 0


def test_quantizer_error_bound_exact_arithmetic():
    # Oracle: with q and scale exact, |x - q*scale| <= amax/128, equality at the clip.
    for seed in range(5):
        x = normal_f32(seed + 40, 50_000)
        q, params, _ = quantize_array(x)
        exact = q.astype(np.float64) * params.scale  # int8 * f32 is exact in f64
        err = np.abs(x.astype(np.float64) - exact)
        assert float(err.max()) <= params.amax / 128.0 + 1e-300
        # stored float32 form is the correctly rounded lattice point
        stored = dequantize_array(q, params)
        assert np.array_equal(stored, exact.astype(np.float32))


def test_qint8_container_and_warnings():
    finite = ModelContainer.from_arrays({"w": np.array([1.0, -4.0, 2.0], np.float32)})
    assert apply_policy(finite, CdrPolicy(PolicyKind.QINT8)).warnings == tuple()

    c = ModelContainer.from_arrays({"w": np.array([1.0, np.nan, -4.0, 2.0], np.float32)})
    result = apply_policy(c, CdrPolicy(PolicyKind.QINT8))
    y = result.container.tensor("w").as_f32()
    assert y[1] == 0.0
    doc = result.warnings_json()
    assert doc["schema_version"] == 1
    assert doc["warnings"] == [{"tensor": "w", "nonfinite_count": 1}]


def test_qint8_warning_counts():
    x = np.array([1.0, np.nan, np.inf, 2.0], np.float32)
    c = ModelContainer.from_arrays({"w": x})
    result = apply_policy(c, CdrPolicy(PolicyKind.QINT8))
    assert len(result.warnings) == 1
    assert result.warnings[0].tensor == "w"
    assert result.warnings[0].nonfinite_count == 2


def test_qint8_sidecar_output():
    x = np.array([-1.0, 0.5, 1.0], np.float32)
    c = ModelContainer.from_arrays({"w": x}, metadata={"origin": "test"})
    policy = CdrPolicy(PolicyKind.QINT8, output=QuantOutput.INT8_SIDE_CAR)
    out = cdr_qint8(c, policy)
    side = out.tensor("w.qint8")
    assert side.dtype == "I8"
    assert np.frombuffer(side.data, np.int8).tolist() == [-128, 64, 127]
    assert out.metadata["w.amax"] == repr(1.0)
    assert out.metadata["w.scale"] == repr(1.0 / 128.0)
    # the enriched container still serializes and re-parses
    round_tripped = parse_container(serialize_container(out))
    assert round_tripped.tensor("w.qint8").data == side.data


def test_qint8_preserves_shapes_dtype_format():
    c = random_container(60, [100, 200], ContainerFormat.NPY_DIR)
    out = cdr_qint8(c, CdrPolicy(PolicyKind.QINT8))
    assert out.format is c.format
    for t_in, t_out in zip(c.tensors, out.tensors):
        assert (t_in.name, t_in.shape, t_in.dtype) == (t_out.name, t_out.shape, t_out.dtype)


# --------------------------------------------------------------------------- #
# Policy plumbing
# --------------------------------------------------------------------------- #

def test_policy_json_round_trip():
    p = CdrPolicy(PolicyKind.KLRBP, k=5, seed=99, selection_mode="name_regex", selection_param="conv.*")
    doc = p.to_json_dict()
    assert doc["kind"] == "klrbp" and doc["k"] == 5 and doc["seed"] == 99
    assert CdrPolicy.from_json_dict(doc) == p


def test_policy_validation():
    with pytest.raises(ValueError):
        CdrPolicy(PolicyKind.KLRBP)  # k missing
    with pytest.raises(ValueError):
        CdrPolicy(PolicyKind.KLRBP, k=24)
    with pytest.raises(ValueError):
        CdrPolicy(PolicyKind.FLP, k=3)  # k not applicable


def test_empty_selection_raises():
    c = ModelContainer.from_arrays({"w": np.zeros(4, np.float32)})
    policy = CdrPolicy(PolicyKind.FLP, selection_mode="name_regex", selection_param="nomatch.*")
    with pytest.raises(EmptySelection):
        cdr_flp(c, policy)


def test_wrong_policy_kind_rejected():
    c = ModelContainer.from_arrays({"w": np.zeros(4, np.float32)})
    with pytest.raises(ValueError):
        cdr_flp(c, CdrPolicy(PolicyKind.QINT8))
