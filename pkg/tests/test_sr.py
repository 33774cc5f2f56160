import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from circsr.errors import (
    DimensionError,
    ExternalSRError,
    FormatError,
    ParameterError,
    SingularSystemError,
)
from circsr.signal import SamplingGeometry, SignalRecord
from circsr.sr import (
    LinearSrModel,
    SrOperatorSpec,
    apply_sr,
    fit_linear_sr,
    replication_matrix,
    run_external_sr,
)

HELPER = f"{sys.executable} -m circsr.tools.replicate {{input}} {{output}} {{factor}}"


def G(d_c, f, C=1):
    return SamplingGeometry.from_lr(C, d_c, f)


def ridge_oracle(X, Y, ridge):
    """Augmented least squares: stack sqrt(ridge)*I rows for W, none for the bias."""
    n, d = X.shape
    A = np.hstack([X, np.ones((n, 1))])
    pen = np.hstack([np.sqrt(ridge) * np.eye(d), np.zeros((d, 1))])
    A = np.vstack([A, pen])
    B = np.vstack([Y, np.zeros((d, Y.shape[1]))])
    sol, *_ = np.linalg.lstsq(A, B, rcond=None)
    return sol[:d].T, sol[d]


class TestBuiltins:
    def test_replication(self):
        np.testing.assert_array_equal(apply_sr(SrOperatorSpec.replication(G(2, 2)), [1, 3]), [1, 1, 3, 3])

    def test_linear_replication_matrix(self):
        model = LinearSrModel(replication_matrix(2, 2), np.zeros(4))
        op = SrOperatorSpec.linear(G(2, 2), model)
        np.testing.assert_array_equal(apply_sr(op, [1, 3]), [1, 1, 3, 3])

    def test_interp_linear_edge_clamped(self):
        out = apply_sr(SrOperatorSpec.interp(G(2, 2), "linear"), [0, 2])
        positions = np.arange(4) / 2
        np.testing.assert_array_equal(out, np.interp(positions, [0, 1], [0, 2]))
        np.testing.assert_array_equal(out, [0, 1, 2, 2])

    def test_interp_linear_multichannel_matches_np_interp(self, rng):
        x = rng.normal(size=(3, 8))
        out = apply_sr(SrOperatorSpec.interp(G(8, 4, 3), "linear"), x.reshape(-1)).reshape(3, 32)
        for c in range(3):
            np.testing.assert_allclose(out[c], np.interp(np.arange(32) / 4, np.arange(8), x[c]), atol=1e-14)

    def test_record_in_record_out(self):
        rec = SignalRecord([[1.0, 2.0], [3.0, 4.0]], 50.0, "x")
        out = apply_sr(SrOperatorSpec.replication(G(2, 3, 2)), rec)
        assert isinstance(out, SignalRecord)
        assert out.sampling_rate_hz == 150.0 and out.record_id == "x"
        np.testing.assert_array_equal(out.data, [[1, 1, 1, 2, 2, 2], [3, 3, 3, 4, 4, 4]])

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            apply_sr(SrOperatorSpec.replication(G(3, 2)), [1, 2])

    @pytest.mark.parametrize("text", ["replication", "interp:cubic", "interp:area"])
    @given(seed=st.integers(0, 1000), C=st.integers(1, 3), d_c=st.integers(2, 12), f=st.integers(2, 5))
    @settings(max_examples=15, deadline=None)
    def test_dimension_contract(self, text, seed, C, d_c, f):
        op = SrOperatorSpec.parse(text, G(d_c, f, C))
        x = np.random.default_rng(seed).normal(size=C * d_c)
        assert apply_sr(op, x).size == f * x.size

    @pytest.mark.parametrize("text", ["replication", "interp:linear", "interp:cubic", "interp:nearest"])
    @given(a=st.floats(-100, 100), seed=st.integers(0, 1000))
    @settings(max_examples=15, deadline=None)
    def test_homogeneity(self, text, a, seed):
        op = SrOperatorSpec.parse(text, G(10, 3, 2))
        x = np.random.default_rng(seed).normal(size=20)
        np.testing.assert_allclose(apply_sr(op, a * x), a * apply_sr(op, x), rtol=1e-12, atol=1e-300)

    def test_parse_rejects_garbage(self):
        with pytest.raises(ParameterError):
            SrOperatorSpec.parse("bogus", G(2, 2))


class TestFitLinear:
    def test_recovers_replication(self, rng):
        R = replication_matrix(6, 3)
        pairs = [(x, R @ x) for x in rng.normal(size=(50, 6))]
        model = fit_linear_sr(pairs, ridge=1e-8)
        np.testing.assert_allclose(model.weight, R, atol=1e-6)
        np.testing.assert_allclose(model.bias, 0, atol=1e-6)

    @pytest.mark.parametrize("ridge", [1e-8, 0.1, 3.0])
    def test_matches_augmented_lstsq(self, rng, ridge):
        X = rng.normal(size=(40, 5))
        Y = X @ rng.normal(size=(5, 9)) + rng.normal(size=9) + 0.1 * rng.normal(size=(40, 9))
        model = fit_linear_sr(list(zip(X, Y)), ridge)
        W, b = ridge_oracle(X, Y, ridge)
        np.testing.assert_allclose(model.weight, W, atol=1e-9)
        np.testing.assert_allclose(model.bias, b, atol=1e-9)

    def test_zero_data(self):
        model = fit_linear_sr([(np.zeros(3), np.zeros(6))] * 4, ridge=1.0)
        assert not model.weight.any() and not model.bias.any()

    def test_singular_without_ridge(self):
        with pytest.raises(SingularSystemError):
            fit_linear_sr([(np.array([2.0]), np.array([6.0]))], ridge=0.0)

    def test_inconsistent_dimensions(self):
        with pytest.raises(DimensionError):
            fit_linear_sr([(np.zeros(2), np.zeros(4)), (np.zeros(2), np.zeros(5))], 1.0)

    def test_model_file_round_trip(self, tmp_path, rng):
        model = LinearSrModel(rng.normal(size=(6, 3)), rng.normal(size=6), ridge=0.25)
        back = LinearSrModel.load(model.save(tmp_path / "m.lin"))
        assert back.weight.tobytes() == model.weight.tobytes()
        assert back.bias.tobytes() == model.bias.tobytes()
        assert back.ridge == 0.25
        assert (tmp_path / "m.lin").read_bytes().startswith(b"CIRCSR-LIN1 3 6 ")

    def test_model_file_errors(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            LinearSrModel.load(tmp_path / "missing")
        (tmp_path / "bad").write_bytes(b"NOPE 1 2 0\n" + b"\0" * 32)
        with pytest.raises(FormatError):
            LinearSrModel.load(tmp_path / "bad")
        (tmp_path / "short").write_bytes(b"CIRCSR-LIN1 1 2 0\n" + b"\0" * 8)
        with pytest.raises(FormatError):
            LinearSrModel.load(tmp_path / "short")

    def test_spec_checks_model_geometry(self, rng):
        model = LinearSrModel(rng.normal(size=(6, 3)), np.zeros(6))
        with pytest.raises(DimensionError):
            SrOperatorSpec.linear(G(3, 3), model)

    def test_spec_from_path(self, tmp_path):
        LinearSrModel(replication_matrix(2, 2), np.zeros(4)).save(tmp_path / "m.lin")
        op = SrOperatorSpec.parse(f"linear:{tmp_path / 'm.lin'}", G(2, 2))
        np.testing.assert_array_equal(apply_sr(op, [1, 3]), [1, 1, 3, 3])


class TestExternal:
    def test_helper_equals_replication(self):
        lr = SignalRecord([[0.5, -1.25, 3.0], [2.0, 0.0, 1.0]], 50.0, "e")
        out = run_external_sr(HELPER, lr, 4)
        expected = apply_sr(SrOperatorSpec.replication(G(3, 4, 2)), lr)
        assert out.data.tobytes() == expected.data.tobytes()
        assert out.sampling_rate_hz == 200.0

    def test_spec_kind_external(self):
        op = SrOperatorSpec.parse(f"external:{HELPER}", G(2, 2))
        np.testing.assert_array_equal(apply_sr(op, [1, 3]), [1, 1, 3, 3])

    def test_missing_binary(self):
        with pytest.raises(ExternalSRError, match="launch"):
            run_external_sr("/nonexistent/binary {input} {output}", SignalRecord([[1.0, 2.0]]), 2)

    def test_wrong_length(self):
        with pytest.raises(ExternalSRError, match="shape"):
            run_external_sr(HELPER + " --drop-last", SignalRecord([[1.0, 2.0]]), 2)

    def test_nonzero_exit(self):
        with pytest.raises(ExternalSRError, match="status"):
            run_external_sr(f"{sys.executable} -c 'raise SystemExit(3)'", SignalRecord([[1.0, 2.0]]), 2)

    def test_no_output(self):
        with pytest.raises(ExternalSRError, match="no output"):
            run_external_sr(f"{sys.executable} -c pass", SignalRecord([[1.0, 2.0]]), 2)

    def test_nonfinite_output(self, tmp_path):
        script = tmp_path / "nan.py"
        script.write_text(
            "import sys, numpy as np\n"
            "out = sys.argv[1]\n"
            "np.full(4, np.nan, dtype='<f4').tofile(out)\n"
            "open(out + '.meta', 'w').write('channels=1\\nsamples=4\\nrate_hz=2\\n')\n"
        )
        with pytest.raises(ExternalSRError, match="non-finite"):
            run_external_sr(f"{sys.executable} {script} {{output}}", SignalRecord([[1.0, 2.0]]), 2)
