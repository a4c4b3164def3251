"""Smoke tests for the python extension module."""

import math
import sys
import tempfile

import numpy as np

import dacnn


def test_similarity():
    exp = dacnn.SimilaritySpec.exponential(8.3)
    assert dacnn.similarity(exp, 1.0, 1.0) == 1.0
    assert abs(dacnn.similarity(exp, 1.0, 1.1) - math.exp(-0.83)) < 1e-12
    assert dacnn.similarity(exp, 0.0, 0.7, valid_i=False) == 1.0
    clip = dacnn.SimilaritySpec.clip(1.0)
    assert dacnn.similarity(clip, 2.0, 0.5) == 0.0


def test_conv_reduction():
    rng = np.random.default_rng(0)
    w = rng.uniform(-1, 1, size=(4, 3, 3, 3))
    b = rng.uniform(-1, 1, size=4)
    x = rng.uniform(-1, 1, size=(3, 8, 8))
    depth = rng.uniform(0.5, 4.0, size=(8, 8))

    y_std = dacnn.conv_forward(w, b, x, padding=1)
    one = dacnn.SimilaritySpec.constant_one()
    y_one = dacnn.depth_conv_forward(w, b, x, depth, sim=one, padding=1)
    assert y_std.shape == (4, 8, 8)
    assert np.array_equal(y_std, y_one)

    flat = np.full((8, 8), 2.0)
    y_flat = dacnn.depth_conv_forward(w, b, x, flat, sim=dacnn.SimilaritySpec.exponential(8.3), padding=1)
    assert np.array_equal(y_std, y_flat)

    exp = dacnn.SimilaritySpec.exponential(8.3)
    y_depth = dacnn.depth_conv_forward(w, b, x, depth, sim=exp, padding=1)
    assert not np.array_equal(y_std, y_depth)


def test_hand_evaluated_window():
    w = np.ones((1, 1, 3, 3))
    x = np.arange(1.0, 10.0).reshape(1, 3, 3)
    depth = np.ones((3, 3))
    depth[1, 2] = 2.0
    sim = dacnn.SimilaritySpec.exponential(math.log(2.0))
    y = dacnn.depth_conv_forward(w, None, x, depth, sim=sim)
    assert abs(y[0, 0, 0] - 42.0) < 1e-9


def test_depth_conv_backward_shapes():
    rng = np.random.default_rng(1)
    w = rng.uniform(-1, 1, size=(2, 2, 3, 3))
    x = rng.uniform(-1, 1, size=(2, 6, 6))
    depth = rng.uniform(0.5, 3.0, size=(6, 6))
    gy = rng.uniform(-1, 1, size=(2, 6, 6))
    gx, gw, gb = dacnn.depth_conv_backward(w, None, x, depth, grad_y=gy, padding=1)
    assert gx.shape == x.shape
    assert gw.shape == w.shape
    assert gb is None


def test_depth_avg_pool():
    x = np.array([[[0.0, 10.0]]])
    depth = np.array([[1.0, 2.0]])
    sim = dacnn.SimilaritySpec.exponential(math.log(2.0))
    y = dacnn.depth_avg_pool_forward(x, depth, sim=sim, kernel_h=1, kernel_w=2, stride=1)
    assert y.shape == (1, 1, 1)
    # weights normalize to (2/3, 1/3)
    assert abs(y[0, 0, 0] - 10.0 / 3.0) < 1e-9


def test_metrics_oracle():
    counts = np.array([[3, 1], [2, 4]], dtype=np.int64)
    m = dacnn.compute_metrics(counts)
    assert abs(m["acc"] - 0.7) < 1e-6
    assert abs(m["macc"] - 0.708333) < 1e-6
    assert abs(m["miou"] - 0.535714) < 1e-6
    assert abs(m["fwiou"] - 0.542857) < 1e-6


def test_poly_lr():
    assert dacnn.poly_lr(0.001, 0, 1000) == 0.001
    assert dacnn.poly_lr(0.001, 1000, 1000) == 0.0
    assert abs(dacnn.poly_lr(0.001, 500, 1000) - 0.000535887) < 1e-6
    assert dacnn.compound_lr(0.001, 50, 100) < dacnn.poly_lr(0.001, 50, 100)


def test_softmax_cross_entropy():
    logits = np.zeros((4, 2, 2))
    labels = np.array([[0, 1], [2, 3]], dtype=np.int32)
    loss, grad = dacnn.softmax_cross_entropy(logits, labels)
    assert abs(loss - math.log(4.0)) < 1e-12
    assert grad.shape == logits.shape
    ignored = np.full((2, 2), 255, dtype=np.int32)
    loss0, grad0 = dacnn.softmax_cross_entropy(logits, ignored)
    assert loss0 == 0.0
    assert np.all(grad0 == 0.0)


def test_rf_trace():
    depth = np.ones((7, 7))
    trace = dacnn.rf_trace(depth, levels=1, y=3, x=3)
    expected = np.zeros((7, 7))
    expected[2:5, 2:5] = 1.0
    assert np.array_equal(trace, expected)


def test_generate_dataset():
    with tempfile.TemporaryDirectory() as tmp:
        dacnn.generate_dataset(tmp, images=2, size=16, seed=3)
        import os

        assert os.path.exists(os.path.join(tmp, "manifest.txt"))
        assert os.path.exists(os.path.join(tmp, "rgb", "000000.ppm"))
        assert os.path.exists(os.path.join(tmp, "depth", "000001.pgm"))


def main():
    tests = [v for k, v in sorted(globals().items()) if k.startswith("test_")]
    for test in tests:
        test()
        print(f"{test.__name__}: ok")
    print(f"{len(tests)} python smoke tests passed")


if __name__ == "__main__":
    sys.exit(main())
