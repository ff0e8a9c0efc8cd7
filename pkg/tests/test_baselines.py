import random

import numpy as np
import pytest

from dfeagg.baselines import (
    PUBLISHED_PPFL_MB_37M,
    compare_encryption_timing,
    paillier_add,
    paillier_decrypt,
    paillier_encrypt,
    paillier_keygen,
    plaintext_fedavg,
    ppfl_cost_model,
)
from dfeagg.errors import DimensionMismatchError, MessageRangeError
from dfeagg.field import FieldRng
from dfeagg.metrics import comm_overhead, to_mb
from dfeagg.scheme import keygen_client, setup


@pytest.fixture(scope="module")
def kp():
    return paillier_keygen(512, rng_seed="paillier-test")


def test_fedavg_examples():
    w = np.array([1.0, -2.0, 3.0])
    assert np.array_equal(plaintext_fedavg([w], [1.0]), w)
    assert np.array_equal(plaintext_fedavg([w, -w], [0.5, 0.5]), np.zeros(3))
    rng = np.random.default_rng(0)
    models = {f"c{i}": rng.normal(size=50) for i in range(3)}
    alphas = {"c0": 0.2, "c1": 0.3, "c2": 0.5}
    reordered = sum(alphas[k] * models[k] for k in reversed(sorted(models)))
    assert np.max(np.abs(plaintext_fedavg(models, alphas) - reordered)) <= 1e-12
    with pytest.raises(DimensionMismatchError):
        plaintext_fedavg([w, w[:2]], [0.5, 0.5])


def test_paillier_examples(kp):
    pk = kp.public
    rng = FieldRng("enc")
    assert paillier_decrypt(kp, paillier_encrypt(pk, 0, rng=rng)) == 0
    c = paillier_add(pk, paillier_encrypt(pk, 5, rng=rng), paillier_encrypt(pk, 7, rng=rng))
    assert paillier_decrypt(kp, c) == 12
    with pytest.raises(MessageRangeError):
        paillier_encrypt(pk, pk.n)


def test_paillier_homomorphism_1000_pairs(kp):
    pk = kp.public
    rng, vals = FieldRng("hom"), random.Random(1)
    for _ in range(1000):
        a, b = vals.randrange(2 ** 64), vals.randrange(2 ** 64)
        c = paillier_add(pk, paillier_encrypt(pk, a, rng=rng), paillier_encrypt(pk, b, rng=rng))
        assert paillier_decrypt(kp, c) == a + b


def test_paillier_2048_ciphertext_is_512_bytes():
    kp = paillier_keygen(2048, rng_seed="size")
    assert kp.modulus_n.bit_length() == 2048
    assert kp.public.ciphertext_bytes == 512


def test_cost_model():
    assert ppfl_cost_model(1) == (1536, 3)
    assert to_mb(ppfl_cost_model(1_000_000)[0]) == 1536.0
    b, _ = ppfl_cost_model(37_196_556)
    assert round(to_mb(b), 2) == 57133.91
    assert round(PUBLISHED_PPFL_MB_37M - to_mb(b), 2) == 100.0
    for p in (1, 1000, 37_196_556, 7_759_521):
        assert round(ppfl_cost_model(p)[0] / comm_overhead(p, 56, "nominal"), 2) == 27.43


def test_timing_comparison_reports_positive_medians(toy):
    _, ms = setup(128, 4, "tm", params=toy)
    tc = compare_encryption_timing(toy, keygen_client(ms, "t"), paillier_keygen(512, "tm"), n_params=64)
    assert tc.dfe_median_s > 0 and tc.paillier_median_s > 0
    assert tc.as_dict()["ratio"] == tc.ratio
